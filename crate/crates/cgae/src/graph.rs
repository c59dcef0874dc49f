//! Site graphs: weighted symmetric adjacency over measurement nodes.
//!
//! Edges come from either thresholded Pearson correlation of the nodal
//! series (the default) or a Gaussian distance kernel over coordinates.
//! Graphs round-trip through a plain edge-list text file.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Graph {
    node_ids: Vec<String>,
    adjacency: Tensor,
}

impl Graph {
    /// Wrap an adjacency matrix, enforcing symmetry, zero diagonal and
    /// nonnegative weights.
    pub fn from_adjacency(node_ids: Vec<String>, adjacency: Tensor) -> Result<Self> {
        let n = node_ids.len();
        if !adjacency.is_matrix() || adjacency.rows() != n || adjacency.cols() != n {
            return Err(Error::ShapeMismatch {
                op: "graph adjacency",
                left: vec![n, n],
                right: adjacency.shape().to_vec(),
            });
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::Data(format!(
                    "adjacency diagonal must be zero (node {})",
                    node_ids[i]
                )));
            }
            for j in 0..n {
                let w = adjacency.get(i, j);
                if w < 0.0 || !w.is_finite() {
                    return Err(Error::Data(format!(
                        "edge weight {w} between {} and {} is invalid",
                        node_ids[i], node_ids[j]
                    )));
                }
                if w != adjacency.get(j, i) {
                    return Err(Error::Data(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Graph {
            node_ids,
            adjacency,
        })
    }

    /// Edge weight = |Pearson correlation| of the two nodes' series when
    /// |r| >= threshold, else no edge. Negative surviving correlations are
    /// mapped to their absolute value so weights stay nonnegative.
    pub fn from_correlation(
        node_ids: Vec<String>,
        series: &[Vec<f64>],
        threshold: f64,
    ) -> Result<Self> {
        let n = node_ids.len();
        if n < 2 || series.len() != n {
            return Err(Error::Usage(format!(
                "correlation graph needs at least 2 aligned series, got {}",
                series.len()
            )));
        }
        let len = series[0].len();
        if len < 3 || series.iter().any(|s| s.len() != len) {
            return Err(Error::Usage(
                "series must be aligned with length >= 3".to_string(),
            ));
        }
        for (id, s) in node_ids.iter().zip(series) {
            if variance(s) == 0.0 {
                return Err(Error::ZeroVariance { node: id.clone() });
            }
        }
        let mut adj = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in (i + 1)..n {
                let r = pearson(&series[i], &series[j])?;
                if r.abs() >= threshold {
                    adj.set(i, j, r.abs());
                    adj.set(j, i, r.abs());
                }
            }
        }
        Graph::from_adjacency(node_ids, adj)
    }

    /// Gaussian kernel on node coordinates: w_ij = exp(-dist^2 / scale^2).
    pub fn from_distance(
        node_ids: Vec<String>,
        coords: &[(f64, f64)],
        kernel_scale: f64,
    ) -> Result<Self> {
        let n = node_ids.len();
        if n < 2 || coords.len() != n {
            return Err(Error::Usage(
                "distance graph needs at least 2 nodes with coordinates".to_string(),
            ));
        }
        if kernel_scale <= 0.0 {
            return Err(Error::Usage("kernel scale must be positive".to_string()));
        }
        let mut adj = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = coords[i].0 - coords[j].0;
                let dy = coords[i].1 - coords[j].1;
                let w = (-(dx * dx + dy * dy) / (kernel_scale * kernel_scale)).exp();
                adj.set(i, j, w);
                adj.set(j, i, w);
            }
        }
        Graph::from_adjacency(node_ids, adj)
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    /// Weighted degree of node `i`.
    pub fn degree(&self, i: usize) -> f64 {
        (0..self.node_count()).map(|j| self.adjacency.get(i, j)).sum()
    }

    pub fn edge_count(&self) -> usize {
        let n = self.node_count();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency.get(i, j) != 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    // ── Edge list file format ───────────────────────────────────────
    //
    //   # graph n=<count>
    //   # node <index>,<id>
    //   <node_a>,<node_b>,<weight>
    //
    // The `# node` lines preserve node order and isolated nodes, which a
    // bare edge list cannot represent.

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# graph n={}\n", self.node_count()));
        for (i, id) in self.node_ids.iter().enumerate() {
            out.push_str(&format!("# node {i},{id}\n"));
        }
        let n = self.node_count();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency.get(i, j);
                if w != 0.0 {
                    out.push_str(&format!("{},{},{}\n", self.node_ids[i], self.node_ids[j], w));
                }
            }
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut n: Option<usize> = None;
        let mut ids: Vec<String> = Vec::new();
        let mut edges: Vec<(String, String, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |detail: String| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                detail,
            };
            if let Some(rest) = line.strip_prefix("# graph n=") {
                n = Some(
                    rest.trim()
                        .parse()
                        .map_err(|_| parse_err(format!("bad node count `{rest}`")))?,
                );
            } else if let Some(rest) = line.strip_prefix("# node ") {
                let (_, id) = rest
                    .split_once(',')
                    .ok_or_else(|| parse_err("expected `# node <index>,<id>`".to_string()))?;
                ids.push(id.to_string());
            } else if line.starts_with('#') {
                continue;
            } else {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(parse_err(format!("expected `node_a,node_b,weight`, got `{line}`")));
                }
                let w: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(format!("bad weight `{}`", fields[2])))?;
                edges.push((fields[0].to_string(), fields[1].to_string(), w));
            }
        }
        let n = n.ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            detail: "missing `# graph n=<count>` header".to_string(),
        })?;
        // Foreign files may lack `# node` lines; recover ids from edges.
        if ids.is_empty() {
            for (a, b, _) in &edges {
                if !ids.contains(a) {
                    ids.push(a.clone());
                }
                if !ids.contains(b) {
                    ids.push(b.clone());
                }
            }
        }
        if ids.len() != n {
            return Err(Error::Data(format!(
                "graph file declares n={n} but {} node ids were found",
                ids.len()
            )));
        }
        let index = |id: &str| -> Result<usize> {
            ids.iter().position(|x| x == id).ok_or_else(|| {
                Error::Data(format!("edge references unknown node `{id}`"))
            })
        };
        let mut adj = Tensor::zeros(&[n, n]);
        for (a, b, w) in edges {
            let (i, j) = (index(&a)?, index(&b)?);
            adj.set(i, j, w);
            adj.set(j, i, w);
        }
        Graph::from_adjacency(ids, adj)
    }
}

/// Sample Pearson correlation of two equal-length sequences.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Usage(
            "pearson needs two aligned sequences of length >= 2".to_string(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance {
            node: "(anonymous series)".to_string(),
        });
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identical_series_make_a_unit_edge() {
        let s = vec![1.0, 2.0, 3.0, 4.0, 2.0];
        let g = Graph::from_correlation(
            vec!["a".into(), "b".into()],
            &[s.clone(), s],
            0.5,
        )
        .unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!((g.adjacency().get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_series_stay_disconnected() {
        let mut rng = Rng::seed_from(100);
        let x: Vec<f64> = (0..20_000).map(|_| rng.next_uniform()).collect();
        let y: Vec<f64> = (0..20_000).map(|_| rng.next_uniform()).collect();
        let r = pearson(&x, &y).unwrap();
        assert!(r.abs() < 0.05, "sample correlation {r}");
        let g = Graph::from_correlation(vec!["a".into(), "b".into()], &[x, y], 0.5).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn zero_threshold_gives_complete_graph() {
        let mut rng = Rng::seed_from(8);
        let series: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..50).map(|_| rng.next_normal()).collect())
            .collect();
        let g = Graph::from_correlation(
            vec!["a".into(), "b".into(), "c".into()],
            &series,
            0.0,
        )
        .unwrap();
        assert_eq!(g.edge_count(), 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    let w = g.adjacency().get(i, j);
                    let r = pearson(&series[i], &series[j]).unwrap();
                    assert!((w - r.abs()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_variance_error_names_the_node() {
        let err = Graph::from_correlation(
            vec!["flat-site".into(), "b".into()],
            &[vec![2.0, 2.0, 2.0], vec![1.0, 2.0, 3.0]],
            0.5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("flat-site"));
    }

    #[test]
    fn relabeling_nodes_permutes_adjacency() {
        let mut rng = Rng::seed_from(17);
        let series: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..200).map(|_| rng.next_normal()).collect())
            .collect();
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let g = Graph::from_correlation(ids.clone(), &series, 0.0).unwrap();

        let perm = [2usize, 0, 3, 1];
        let p_ids: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
        let p_series: Vec<Vec<f64>> = perm.iter().map(|&i| series[i].clone()).collect();
        let gp = Graph::from_correlation(p_ids, &p_series, 0.0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!(
                    (gp.adjacency().get(a, b) - g.adjacency().get(perm[a], perm[b])).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn edge_list_round_trip_preserves_isolated_nodes() {
        let mut adj = Tensor::zeros(&[3, 3]);
        adj.set(0, 1, 0.75);
        adj.set(1, 0, 0.75);
        let g = Graph::from_adjacency(vec!["x".into(), "y".into(), "lonely".into()], adj).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.csv");
        g.save(&path).unwrap();
        let loaded = Graph::load(&path).unwrap();
        assert_eq!(loaded.node_ids(), g.node_ids());
        assert_eq!(loaded.adjacency(), g.adjacency());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# graph n=3\n"));
        assert!(text.contains("x,y,0.75"));
    }

    #[test]
    fn distance_kernel_weights() {
        let g = Graph::from_distance(
            vec!["a".into(), "b".into()],
            &[(0.0, 0.0), (1.0, 0.0)],
            1.0,
        )
        .unwrap();
        assert!((g.adjacency().get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }
}
