//! Spectral operators on site graphs.
//!
//! Provides the symmetric normalized Laplacian with its full
//! eigendecomposition (cyclic Jacobi), Chebyshev spectral filters, the
//! first-order filter they collapse to, and the self-loop-renormalized
//! propagation matrix used by the graph feature extraction layers.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Eigendecomposition of a symmetric matrix: `matrix = U diag(eigenvalues) U^T`
/// with eigenvalues ascending and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Tensor,
    pub gamma_max: f64,
}

/// Normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}` plus its spectrum.
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub matrix: Tensor,
    pub decomposition: SpectralDecomposition,
}

/// Renormalized propagation matrix `M = D~^{-1/2} (A + I) D~^{-1/2}`.
/// Symmetric, spectrum contained in [-1, 1], rows valid for any graph
/// because the self-loop keeps every degree positive.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    pub matrix: Tensor,
}

const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Cyclic Jacobi eigensolver for dense symmetric matrices. Converges when
/// the off-diagonal Frobenius norm drops below 1e-12. Eigenpairs are
/// returned sorted by ascending eigenvalue.
pub fn symmetric_eigen(matrix: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    if !matrix.is_matrix() || matrix.rows() != matrix.cols() {
        return Err(Error::ShapeMismatch {
            op: "symmetric_eigen",
            left: matrix.shape().to_vec(),
            right: matrix.shape().to_vec(),
        });
    }
    let n = matrix.rows();
    let mut a = matrix.clone();
    let mut v = Tensor::eye(n);

    let off_norm = |a: &Tensor| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) >= JACOBI_TOLERANCE {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence {
                sweeps,
                off_norm: off_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of A.
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                // Accumulate the eigenvector rotation.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Tensor::zeros(&[n, n]);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    Ok((eigenvalues, vectors))
}

/// `L = I - D^{-1/2} A D^{-1/2}` with a full eigendecomposition. Every node
/// must have positive degree; isolated nodes should use the renormalized
/// propagation matrix instead.
pub fn normalized_laplacian(graph: &Graph) -> Result<Laplacian> {
    let n = graph.node_count();
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let d = graph.degree(i);
        if d <= 0.0 {
            return Err(Error::ZeroDegree {
                node: graph.node_ids()[i].clone(),
            });
        }
        inv_sqrt_deg[i] = 1.0 / d.sqrt();
    }
    let mut l = Tensor::eye(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = graph.adjacency().get(i, j);
                if w != 0.0 {
                    l.set(i, j, -w * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
                }
            }
        }
    }
    let (eigenvalues, eigenvectors) = symmetric_eigen(&l)?;
    let gamma_max = *eigenvalues.last().expect("n >= 1");
    Ok(Laplacian {
        matrix: l,
        decomposition: SpectralDecomposition {
            eigenvalues,
            eigenvectors,
            gamma_max,
        },
    })
}

/// Apply the Chebyshev spectral filter
/// `sum_j omega_j P_j((2/gamma_max) L - I)` to a nodal signal, using the
/// recurrence `P_0 = I`, `P_1 = X`, `P_j = 2 X P_{j-1} - P_{j-2}`.
pub fn chebyshev_filter(lap: &Laplacian, signal: &Tensor, omega: &[f64]) -> Result<Tensor> {
    chebyshev_filter_with_gamma(&lap.matrix, lap.decomposition.gamma_max, signal, omega)
}

/// Same filter with an explicit `gamma_max`; the first-order simplification
/// fixes `gamma_max = 2`.
pub fn chebyshev_filter_with_gamma(
    laplacian: &Tensor,
    gamma_max: f64,
    signal: &Tensor,
    omega: &[f64],
) -> Result<Tensor> {
    if omega.is_empty() {
        return Err(Error::Usage(
            "chebyshev filter needs at least one coefficient".to_string(),
        ));
    }
    if gamma_max <= 0.0 {
        return Err(Error::Usage(format!(
            "gamma_max must be positive, got {gamma_max}"
        )));
    }
    let n = laplacian.rows();
    // X = (2/gamma_max) L - I
    let mut x = laplacian.scale(2.0 / gamma_max);
    for i in 0..n {
        let v = x.get(i, i) - 1.0;
        x.set(i, i, v);
    }

    // Recurrence applied directly to the signal: cost O(J n^2 F).
    let mut prev = signal.clone(); // P_0 S
    let mut out = prev.scale(omega[0]);
    if omega.len() == 1 {
        return Ok(out);
    }
    let mut curr = x.matmul(signal)?; // P_1 S
    out = out.add(&curr.scale(omega[1]))?;
    for &w in &omega[2..] {
        let next = x.matmul(&curr)?.scale(2.0).sub(&prev)?;
        out = out.add(&next.scale(w))?;
        prev = curr;
        curr = next;
    }
    Ok(out)
}

/// First-order collapsed filter `delta (I + D^{-1/2} A D^{-1/2}) signal`,
/// which the Chebyshev form with `J = 1`, `omega_0 = delta`,
/// `omega_1 = -delta`, `gamma_max = 2` reduces to.
pub fn first_order_filter(graph: &Graph, signal: &Tensor, delta: f64) -> Result<Tensor> {
    let n = graph.node_count();
    let mut inv_sqrt_deg = vec![0.0; n];
    for i in 0..n {
        let d = graph.degree(i);
        if d <= 0.0 {
            return Err(Error::ZeroDegree {
                node: graph.node_ids()[i].clone(),
            });
        }
        inv_sqrt_deg[i] = 1.0 / d.sqrt();
    }
    let mut op = Tensor::eye(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = graph.adjacency().get(i, j);
                if w != 0.0 {
                    op.set(i, j, w * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
                }
            }
        }
    }
    Ok(op.matmul(signal)?.scale(delta))
}

/// `M = D~^{-1/2} (A + I) D~^{-1/2}` with `D~_ii = sum_j (A + I)_ij`.
/// Entries are computed as `(A + I)_ij / sqrt(d~_i d~_j)` so unit-weight
/// cases come out exact.
pub fn renormalized_propagation(graph: &Graph) -> PropagationMatrix {
    let n = graph.node_count();
    let mut deg = vec![0.0; n];
    for i in 0..n {
        deg[i] = graph.degree(i) + 1.0;
    }
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { graph.adjacency().get(i, j) };
            if a != 0.0 {
                m.set(i, j, a / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    PropagationMatrix { matrix: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn k2() -> Graph {
        let mut adj = Tensor::zeros(&[2, 2]);
        adj.set(0, 1, 1.0);
        adj.set(1, 0, 1.0);
        Graph::from_adjacency(vec!["a".into(), "b".into()], adj).unwrap()
    }

    pub(crate) fn random_connected_graph(rng: &mut Rng, n: usize) -> Graph {
        let mut adj = Tensor::zeros(&[n, n]);
        // Ring for connectivity, then random extra edges.
        for i in 0..n {
            let j = (i + 1) % n;
            let w = rng.uniform_in(0.2, 1.0);
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
        for i in 0..n {
            for j in (i + 2)..n {
                if rng.next_uniform() < 0.4 {
                    let w = rng.uniform_in(0.05, 1.0);
                    adj.set(i, j, w);
                    adj.set(j, i, w);
                }
            }
        }
        let ids = (0..n).map(|i| format!("n{i}")).collect();
        Graph::from_adjacency(ids, adj).unwrap()
    }

    #[test]
    fn k2_laplacian_is_textbook() {
        let lap = normalized_laplacian(&k2()).unwrap();
        assert_eq!(lap.matrix.data(), &[1.0, -1.0, -1.0, 1.0]);
        let ev = &lap.decomposition.eigenvalues;
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_nullspace_is_sqrt_degree_direction() {
        let mut rng = Rng::seed_from(21);
        let g = random_connected_graph(&mut rng, 6);
        let lap = normalized_laplacian(&g).unwrap();
        assert!(lap.decomposition.eigenvalues[0].abs() < 1e-10);
        // Eigenvector for eigenvalue 0 is proportional to D^{1/2} 1.
        let n = g.node_count();
        let v0: Vec<f64> = (0..n).map(|i| lap.decomposition.eigenvectors.get(i, 0)).collect();
        let expected: Vec<f64> = (0..n).map(|i| g.degree(i).sqrt()).collect();
        let norm: f64 = expected.iter().map(|x| x * x).sum::<f64>();
        let scale = v0[0] / (expected[0] / norm.sqrt());
        for i in 0..n {
            assert!((v0[i] - scale * expected[i] / norm.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn eigendecomposition_reconstructs_laplacian() {
        let mut rng = Rng::seed_from(33);
        let g = random_connected_graph(&mut rng, 6);
        let lap = normalized_laplacian(&g).unwrap();
        let n = g.node_count();
        let u = &lap.decomposition.eigenvectors;
        let mut omega = Tensor::zeros(&[n, n]);
        for i in 0..n {
            omega.set(i, i, lap.decomposition.eigenvalues[i]);
        }
        let rebuilt = u.matmul(&omega).unwrap().matmul(&u.transpose()).unwrap();
        let diff = rebuilt.sub(&lap.matrix).unwrap().frobenius_norm();
        assert!(diff / lap.matrix.frobenius_norm() < 1e-8);
        // Spectrum of the normalized Laplacian lives in [0, 2].
        for &ev in &lap.decomposition.eigenvalues {
            assert!((-1e-10..=2.0 + 1e-10).contains(&ev));
        }
    }

    #[test]
    fn order_zero_filter_is_identity() {
        let mut rng = Rng::seed_from(4);
        let g = random_connected_graph(&mut rng, 5);
        let lap = normalized_laplacian(&g).unwrap();
        let signal = rng.normal_tensor(&[5, 3]);
        let out = chebyshev_filter(&lap, &signal, &[1.0]).unwrap();
        assert_eq!(out, signal);
    }

    #[test]
    fn empty_coefficients_rejected() {
        let lap = normalized_laplacian(&k2()).unwrap();
        let signal = Tensor::ones(&[2, 1]);
        assert!(chebyshev_filter(&lap, &signal, &[]).is_err());
    }

    #[test]
    fn first_order_simplification_identity() {
        // J=1 with omega = (delta, -delta) and gamma_max forced to 2 must
        // coincide with the collapsed closed form on every graph.
        let mut rng = Rng::seed_from(55);
        for trial in 0..10 {
            let n = 2 + (trial % 7);
            let g = random_connected_graph(&mut rng, n);
            let lap = normalized_laplacian(&g).unwrap();
            let signal = rng.normal_tensor(&[n, 2]);
            let delta = rng.uniform_in(0.5, 2.0);
            let cheb =
                chebyshev_filter_with_gamma(&lap.matrix, 2.0, &signal, &[delta, -delta]).unwrap();
            let closed = first_order_filter(&g, &signal, delta).unwrap();
            let diff = cheb.sub(&closed).unwrap().frobenius_norm();
            assert!(diff < 1e-12, "trial {trial}: diff {diff}");
        }
    }

    #[test]
    fn chebyshev_matches_spectral_domain_evaluation() {
        let mut rng = Rng::seed_from(77);
        let n = 6;
        let g = random_connected_graph(&mut rng, n);
        let lap = normalized_laplacian(&g).unwrap();
        let signal = rng.normal_tensor(&[n, 2]);
        let omega = [0.7, -0.3, 0.2, 0.1];

        let recurrence = chebyshev_filter(&lap, &signal, &omega).unwrap();

        // Oracle: evaluate the polynomial on the eigenvalues and map back.
        let d = &lap.decomposition;
        let mut filtered = Tensor::zeros(&[n, n]);
        for i in 0..n {
            let x = 2.0 * d.eigenvalues[i] / d.gamma_max - 1.0;
            let mut p_prev = 1.0;
            let mut p_curr = x;
            let mut acc = omega[0] * p_prev + omega[1] * p_curr;
            for &w in &omega[2..] {
                let p_next = 2.0 * x * p_curr - p_prev;
                acc += w * p_next;
                p_prev = p_curr;
                p_curr = p_next;
            }
            filtered.set(i, i, acc);
        }
        let u = &d.eigenvectors;
        let oracle = u
            .matmul(&filtered)
            .unwrap()
            .matmul(&u.transpose())
            .unwrap()
            .matmul(&signal)
            .unwrap();
        let diff = recurrence.sub(&oracle).unwrap().frobenius_norm();
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn k2_propagation_is_all_halves() {
        let m = renormalized_propagation(&k2());
        assert_eq!(m.matrix.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn edgeless_propagation_is_identity() {
        let g = Graph::from_adjacency(
            vec!["a".into(), "b".into(), "c".into()],
            Tensor::zeros(&[3, 3]),
        )
        .unwrap();
        let m = renormalized_propagation(&g);
        assert_eq!(m.matrix, Tensor::eye(3));
    }

    #[test]
    fn propagation_spectrum_in_unit_interval() {
        let mut rng = Rng::seed_from(91);
        for trial in 0..20 {
            let n = 2 + (trial % 8);
            let g = random_connected_graph(&mut rng, n);
            let m = renormalized_propagation(&g);
            let (eigenvalues, _) = symmetric_eigen(&m.matrix).unwrap();
            for ev in eigenvalues {
                assert!(
                    (-1.0 - 1e-9..=1.0 + 1e-9).contains(&ev),
                    "trial {trial}: eigenvalue {ev}"
                );
            }
        }
    }

    #[test]
    fn zero_degree_node_error_mentions_renormalized_path() {
        let g = Graph::from_adjacency(
            vec!["a".into(), "b".into()],
            Tensor::zeros(&[2, 2]),
        )
        .unwrap();
        let err = normalized_laplacian(&g).unwrap_err();
        assert!(err.to_string().contains("renormalized"));
    }
}
