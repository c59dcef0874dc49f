//! Lag selection by mutual information, and windowed example assembly.
//!
//! The MI estimator is the plug-in over a two-dimensional equal-width
//! histogram (default 16 bins per axis, natural log). It is deterministic
//! and symmetric; absolute values are estimator-relative, which is fine
//! for thresholding lags against one another.
//!
//! A lag `l` addresses the value `l - 1` steps behind the anchor, so lag 1
//! is the most recent observation. An example anchored at time `t` pairs
//! the lagged feature window with the target `k` steps ahead.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

/// Plug-in MI estimate; `degenerate` flags a constant input sequence
/// (zero entropy forces MI to zero).
#[derive(Debug, Clone, Copy)]
pub struct MiEstimate {
    pub nats: f64,
    pub degenerate: bool,
}

/// Mutual information of the joint equal-width histogram, in nats,
/// clamped at zero against rounding.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<MiEstimate> {
    if bins == 0 {
        return Err(Error::Usage("bins must be positive".to_string()));
    }
    if x.len() != y.len() || x.len() < 2 * bins {
        return Err(Error::Usage(format!(
            "mutual information needs equal lengths of at least 2*bins = {}, got {} and {}",
            2 * bins,
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain {
            op: "mutual_information",
            detail: "non-finite input value".to_string(),
        });
    }
    // Canonicalize the argument order so MI(x, y) and MI(y, x) run the
    // same accumulation and agree bit-for-bit.
    let swap = x
        .iter()
        .zip(y)
        .find_map(|(a, b)| match a.total_cmp(b) {
            std::cmp::Ordering::Equal => None,
            other => Some(other == std::cmp::Ordering::Greater),
        })
        .unwrap_or(false);
    let (x, y) = if swap { (y, x) } else { (x, y) };
    let bx = match binner(x, bins) {
        Some(b) => b,
        None => return Ok(MiEstimate { nats: 0.0, degenerate: true }),
    };
    let by = match binner(y, bins) {
        Some(b) => b,
        None => return Ok(MiEstimate { nats: 0.0, degenerate: true }),
    };

    let n = x.len();
    let mut joint = vec![0usize; bins * bins];
    let mut px = vec![0usize; bins];
    let mut py = vec![0usize; bins];
    for (&a, &b) in x.iter().zip(y) {
        let (i, j) = (bx(a), by(b));
        joint[i * bins + j] += 1;
        px[i] += 1;
        py[j] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c == 0 {
                continue;
            }
            let p_ab = c as f64 / nf;
            let p_a = px[i] as f64 / nf;
            let p_b = py[j] as f64 / nf;
            mi += p_ab * (p_ab / (p_a * p_b)).ln();
        }
    }
    Ok(MiEstimate {
        nats: mi.max(0.0),
        degenerate: false,
    })
}

/// Equal-width bin index function over the observed [min, max]; `None`
/// for a constant sequence.
fn binner(values: &[f64], bins: usize) -> Option<impl Fn(f64) -> usize> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        return None;
    }
    let width = (hi - lo) / bins as f64;
    let last = bins - 1;
    Some(move |v: f64| (((v - lo) / width) as usize).min(last))
}

/// MI between a series and its `l`-shifted copy, for every
/// `l` in `1..=max_lag`, evaluated over the overlapping range.
pub fn lag_mi_curve(series: &[f64], max_lag: usize, bins: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag + 1 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            min: max_lag + 2,
            max_lag,
            horizon: 0,
        });
    }
    let mut curve = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let present = &series[lag..];
        let lagged = &series[..series.len() - lag];
        curve.push(mutual_information(present, lagged, bins)?.nats);
    }
    Ok(curve)
}

/// The lags whose MI against the series cleared the threshold; strictly
/// increasing and never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSet {
    pub lags: Vec<usize>,
    pub tau: f64,
    pub max_lag: usize,
}

impl LagSet {
    pub fn feature_count(&self) -> usize {
        self.lags.len()
    }

    pub fn max(&self) -> usize {
        *self.lags.last().expect("lag set is never empty")
    }

    /// One-line CSV of integers.
    pub fn save(&self, path: &Path) -> Result<()> {
        let line = self
            .lags
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let line = text.trim();
        let mut lags = Vec::new();
        for field in line.split(',') {
            let lag: usize = field.trim().parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                detail: format!("bad lag `{field}`"),
            })?;
            lags.push(lag);
        }
        if lags.is_empty() || lags.windows(2).any(|w| w[0] >= w[1]) || lags[0] == 0 {
            return Err(Error::Data(
                "lag file must hold strictly increasing positive integers".to_string(),
            ));
        }
        let max_lag = *lags.last().unwrap();
        Ok(LagSet {
            lags,
            tau: f64::NAN,
            max_lag,
        })
    }
}

/// Keep every lag whose MI clears `tau`. The pooled training series is
/// scanned once per candidate lag.
pub fn select_lags(series: &[f64], max_lag: usize, tau: f64, bins: usize) -> Result<LagSet> {
    let curve = lag_mi_curve(series, max_lag, bins)?;
    let lags: Vec<usize> = curve
        .iter()
        .enumerate()
        .filter(|(_, &mi)| mi >= tau)
        .map(|(i, _)| i + 1)
        .collect();
    if lags.is_empty() {
        return Err(Error::EmptyLagSet { tau });
    }
    Ok(LagSet { lags, tau, max_lag })
}

/// Top `count` lags ranked by MI, ties broken toward smaller lags.
pub fn top_lags_by_mi(curve: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..curve.len()).collect();
    order.sort_by(|&a, &b| curve[b].partial_cmp(&curve[a]).unwrap().then(a.cmp(&b)));
    order.iter().take(count).map(|&i| i + 1).collect()
}

/// One training/test example: lagged features per node and the per-node
/// target `k` steps ahead of the anchor.
#[derive(Debug, Clone)]
pub struct Example {
    /// Global time index of the anchor (the lag-1 observation).
    pub anchor: usize,
    /// n-by-F feature matrix; column f holds lag `lags[f]`.
    pub pi: Tensor,
    /// Length-n target vector at anchor + horizon.
    pub target: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub lags: Vec<usize>,
    pub horizon: usize,
    pub node_count: usize,
    pub split: Split,
}

/// Assemble windowed examples from aligned per-node series. Windows that
/// touch a gap (a `None`) anywhere, on any node, are dropped. Examples
/// whose target index falls before `boundary` go to the training split,
/// the rest to test; the split is chronological, never shuffled.
pub fn build_examples(
    series: &[Vec<Option<f64>>],
    lags: &LagSet,
    horizon: usize,
    boundary: usize,
) -> Result<(Dataset, Dataset)> {
    if horizon == 0 {
        return Err(Error::Usage("horizon must be at least 1".to_string()));
    }
    let n = series.len();
    if n == 0 {
        return Err(Error::Usage("need at least one node series".to_string()));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Usage(
            "node series must be aligned to a shared timestamp axis".to_string(),
        ));
    }
    let max_lag = lags.max();
    let min_len = max_lag + horizon;
    if len < min_len {
        return Err(Error::SeriesTooShort {
            len,
            min: min_len,
            max_lag,
            horizon,
        });
    }

    let f = lags.feature_count();
    let mut train = Vec::new();
    let mut test = Vec::new();
    // Anchor t uses lags back to t-(max_lag-1) and the target at t+horizon.
    for t in (max_lag - 1)..(len - horizon) {
        let mut pi = Tensor::zeros(&[n, f]);
        let mut target = Tensor::zeros(&[n]);
        let mut complete = true;
        'nodes: for (i, node) in series.iter().enumerate() {
            for (col, &lag) in lags.lags.iter().enumerate() {
                match node[t - (lag - 1)] {
                    Some(v) => pi.set(i, col, v),
                    None => {
                        complete = false;
                        break 'nodes;
                    }
                }
            }
            match node[t + horizon] {
                Some(v) => target.data_mut()[i] = v,
                None => {
                    complete = false;
                    break 'nodes;
                }
            }
        }
        if !complete {
            continue;
        }
        let example = Example { anchor: t, pi, target };
        if t + horizon < boundary {
            train.push(example);
        } else {
            test.push(example);
        }
    }
    let mk = |examples: Vec<Example>, split: Split| Dataset {
        examples,
        lags: lags.lags.clone(),
        horizon,
        node_count: n,
        split,
    };
    Ok((mk(train, Split::Train), mk(test, Split::Test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn histogram_entropy(x: &[f64], bins: usize) -> f64 {
        let b = binner(x, bins).unwrap();
        let mut counts = vec![0usize; bins];
        for &v in x {
            counts[b(v)] += 1;
        }
        let n = x.len() as f64;
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    #[test]
    fn self_information_equals_entropy() {
        let mut rng = Rng::seed_from(1);
        let x: Vec<f64> = (0..5000).map(|_| rng.next_normal()).collect();
        let mi = mutual_information(&x, &x, 16).unwrap().nats;
        let h = histogram_entropy(&x, 16);
        assert!((mi - h).abs() < 1e-12, "mi {mi} vs entropy {h}");
    }

    #[test]
    fn negation_is_a_bijection_at_histogram_level() {
        let mut rng = Rng::seed_from(2);
        let x: Vec<f64> = (0..5000).map(|_| rng.next_normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let mi = mutual_information(&x, &y, 16).unwrap().nats;
        let h = histogram_entropy(&x, 16);
        assert!((mi - h).abs() < 1e-12);
    }

    #[test]
    fn independent_streams_have_near_zero_mi() {
        let mut rng = Rng::seed_from(3);
        let x: Vec<f64> = (0..100_000).map(|_| rng.next_uniform()).collect();
        let y: Vec<f64> = (0..100_000).map(|_| rng.next_uniform()).collect();
        let mi = mutual_information(&x, &y, 16).unwrap().nats;
        assert!(mi < 0.01, "mi {mi}");
    }

    #[test]
    fn mi_is_symmetric_and_nonnegative() {
        let mut rng = Rng::seed_from(4);
        let x: Vec<f64> = (0..2000).map(|_| rng.next_normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.5 + rng.next_normal()).collect();
        let a = mutual_information(&x, &y, 16).unwrap().nats;
        let b = mutual_information(&y, &x, 16).unwrap().nats;
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a >= 0.0);
        // Self-information dominates any cross pair under matched binning.
        let self_mi = mutual_information(&x, &x, 16).unwrap().nats;
        assert!(self_mi >= a);
    }

    #[test]
    fn constant_sequence_is_degenerate_zero() {
        let x = vec![5.0; 64];
        let y: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let est = mutual_information(&x, &y, 16).unwrap();
        assert_eq!(est.nats, 0.0);
        assert!(est.degenerate);
    }

    #[test]
    fn zero_threshold_selects_every_lag() {
        let mut rng = Rng::seed_from(5);
        let series: Vec<f64> = (0..500).map(|_| rng.next_normal()).collect();
        let lag_set = select_lags(&series, 10, 0.0, 8).unwrap();
        assert_eq!(lag_set.lags, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn white_noise_with_high_tau_errors() {
        let mut rng = Rng::seed_from(6);
        let series: Vec<f64> = (0..20_000).map(|_| rng.next_normal()).collect();
        let err = select_lags(&series, 10, 0.45, 16).unwrap_err();
        assert!(err.to_string().contains("lower tau"));
    }

    #[test]
    fn periodic_signal_selects_its_period() {
        // Half-sine day / flat night, period 48: lags 48 and 96 carry the
        // full entropy of the signal and dominate the MI ranking.
        let period = 48usize;
        let series: Vec<f64> = (0..2400)
            .map(|t| {
                let phase = (t % period) as f64 / period as f64;
                (std::f64::consts::PI * (2.0 * phase - 1.0)).sin().max(0.0)
            })
            .collect();
        let curve = lag_mi_curve(&series, 150, 16).unwrap();
        let top = top_lags_by_mi(&curve, 5);
        assert!(top.contains(&48), "top lags {top:?}");
        assert!(top.contains(&96), "top lags {top:?}");
        let near_max = curve[47];
        let lag_set = select_lags(&series, 150, near_max - 1e-9, 16).unwrap();
        assert!(lag_set.lags.contains(&48));
        assert!(lag_set.lags.iter().all(|l| l % 48 == 0));
    }

    #[test]
    fn first_example_unrolls_the_definition() {
        let series = vec![(1..=10).map(|v| Some(v as f64)).collect::<Vec<_>>()];
        let lags = LagSet { lags: vec![1, 2], tau: 0.0, max_lag: 2 };
        let (train, test) = build_examples(&series, &lags, 1, usize::MAX).unwrap();
        assert!(test.examples.is_empty());
        let first = &train.examples[0];
        assert_eq!(first.pi.shape(), &[1, 2]);
        assert_eq!(first.pi.data(), &[2.0, 1.0]);
        assert_eq!(first.target.data(), &[3.0]);
        // T - max_lag - horizon + 1 examples for a gap-free series.
        assert_eq!(train.examples.len(), 10 - 2 - 1 + 1);
    }

    #[test]
    fn two_nodes_give_row_per_node() {
        let series = vec![
            (1..=10).map(|v| Some(v as f64)).collect::<Vec<_>>(),
            (11..=20).map(|v| Some(v as f64)).collect::<Vec<_>>(),
        ];
        let lags = LagSet { lags: vec![1, 2], tau: 0.0, max_lag: 2 };
        let (train, _) = build_examples(&series, &lags, 1, usize::MAX).unwrap();
        let first = &train.examples[0];
        assert_eq!(first.pi.shape(), &[2, 2]);
        assert_eq!(first.pi.data(), &[2.0, 1.0, 12.0, 11.0]);
        assert_eq!(first.target.data(), &[3.0, 13.0]);
    }

    #[test]
    fn example_count_matches_enumeration() {
        for t_len in [12usize, 30, 57] {
            for max_lag in [1usize, 3, 7] {
                for k in [1usize, 2, 5] {
                    let series = vec![(0..t_len).map(|v| Some(v as f64)).collect::<Vec<_>>()];
                    let lags = LagSet {
                        lags: (1..=max_lag).collect(),
                        tau: 0.0,
                        max_lag,
                    };
                    let (train, test) = build_examples(&series, &lags, k, usize::MAX).unwrap();
                    assert_eq!(
                        train.examples.len() + test.examples.len(),
                        t_len - max_lag - k + 1,
                        "T={t_len} L={max_lag} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn windows_touching_gaps_are_dropped() {
        let mut values: Vec<Option<f64>> = (0..20).map(|v| Some(v as f64)).collect();
        values[7] = None;
        let series = vec![values];
        let lags = LagSet { lags: vec![1, 2], tau: 0.0, max_lag: 2 };
        let (train, _) = build_examples(&series, &lags, 1, usize::MAX).unwrap();
        // Anchors 6, 7 and 8 all see index 7 (as target, lag 1 or lag 2).
        let anchors: Vec<usize> = train.examples.iter().map(|e| e.anchor).collect();
        assert!(!anchors.contains(&6));
        assert!(!anchors.contains(&7));
        assert!(!anchors.contains(&8));
        assert!(anchors.contains(&5));
        assert!(anchors.contains(&9));
    }

    #[test]
    fn too_short_series_reports_minimum_length() {
        let series = vec![(0..4).map(|v| Some(v as f64)).collect::<Vec<_>>()];
        let lags = LagSet { lags: vec![1, 4], tau: 0.0, max_lag: 4 };
        let err = build_examples(&series, &lags, 1, usize::MAX).unwrap_err();
        assert!(err.to_string().contains("at least 5"));
    }

    #[test]
    fn series_round_trips_through_examples() {
        let values: Vec<f64> = (0..40).map(|v| (v as f64).sin()).collect();
        let series = vec![values.iter().map(|&v| Some(v)).collect::<Vec<_>>()];
        let lags = LagSet { lags: vec![1], tau: 0.0, max_lag: 1 };
        let (train, _) = build_examples(&series, &lags, 1, usize::MAX).unwrap();
        let mut rebuilt = vec![f64::NAN; 40];
        for ex in &train.examples {
            rebuilt[ex.anchor] = ex.pi.get(0, 0);
            rebuilt[ex.anchor + 1] = ex.target.data()[0];
        }
        for (a, b) in values.iter().zip(&rebuilt) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn chronological_split_by_target_index() {
        let series = vec![(0..30).map(|v| Some(v as f64)).collect::<Vec<_>>()];
        let lags = LagSet { lags: vec![1], tau: 0.0, max_lag: 1 };
        let (train, test) = build_examples(&series, &lags, 2, 20).unwrap();
        assert!(train.examples.iter().all(|e| e.anchor + 2 < 20));
        assert!(test.examples.iter().all(|e| e.anchor + 2 >= 20));
        assert!(!train.examples.is_empty());
        assert!(!test.examples.is_empty());
    }

    #[test]
    fn lag_set_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lags.csv");
        let lags = LagSet { lags: vec![1, 2, 48, 96], tau: 0.45, max_lag: 300 };
        lags.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1,2,48,96\n");
        let loaded = LagSet::load(&path).unwrap();
        assert_eq!(loaded.lags, lags.lags);
    }
}
