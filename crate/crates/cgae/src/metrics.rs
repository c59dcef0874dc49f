//! Probabilistic forecast verification: reliability, sharpness, CRPS and
//! predictive-density entropy.
//!
//! Reliability bias is observed-minus-nominal central-interval coverage in
//! percentage points; interval endpoints count as covered, so an exactly
//! correct zero-width interval is a hit. CRPS uses the energy form of the
//! empirical-CDF integral, evaluated through order statistics in
//! O(m log m). Entropy is the Shannon entropy of an equal-width histogram
//! of the samples, in nats.

use crate::error::{Error, Result};
use crate::forecast::{quantile_of_sorted, ForecastEnsemble};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Observed-minus-nominal coverage of central `(alpha, 1-alpha)` intervals,
/// in percentage points. Arithmetic is routed so exact-decimal inputs give
/// exact-decimal outputs.
pub fn reliability_bias(
    observations: &[f64],
    intervals: &[(f64, f64)],
    alpha: f64,
) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::Usage(
            "reliability bias needs at least one observation".to_string(),
        ));
    }
    if observations.len() != intervals.len() {
        return Err(Error::Usage(format!(
            "got {} observations but {} intervals",
            observations.len(),
            intervals.len()
        )));
    }
    if intervals.iter().any(|(lo, hi)| lo > hi) {
        return Err(Error::Usage("interval with lower > upper".to_string()));
    }
    let covered = observations
        .iter()
        .zip(intervals)
        .filter(|(v, (lo, hi))| *lo <= **v && **v <= *hi)
        .count();
    let observed_pct = covered as f64 * 100.0 / observations.len() as f64;
    let nominal_pct = 100.0 - 200.0 * alpha;
    Ok(observed_pct - nominal_pct)
}

/// Mean absolute width of the quantile pairs.
pub fn piaw(quantile_pairs: &[(f64, f64)]) -> Result<f64> {
    if quantile_pairs.is_empty() {
        return Err(Error::Usage("piaw needs at least one pair".to_string()));
    }
    let sum: f64 = quantile_pairs.iter().map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / quantile_pairs.len() as f64)
}

/// CRPS of an empirical ensemble against one observation, by the energy
/// form `mean |X - v| - mean |X - X'| / 2`. The pairwise term is computed
/// from order statistics, which is an exact rearrangement of the double
/// sum.
pub fn crps_empirical(samples: &[f64], observation: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Usage("crps needs at least one sample".to_string()));
    }
    let m = samples.len();
    let term1: f64 = samples.iter().map(|x| (x - observation).abs()).sum::<f64>() / m as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // sum_{s,s'} |x_s - x_s'| = 2 * sum_k (2k - m - 1) x_(k), 1-based k.
    let mut pairwise = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        pairwise += ((2 * (k + 1)) as f64 - (m + 1) as f64) * x;
    }
    let term2 = pairwise / (m * m) as f64;
    Ok(term1 - term2)
}

/// Shannon entropy estimate of an ensemble's histogram.
#[derive(Debug, Clone, Copy)]
pub struct EntropyEstimate {
    pub nats: f64,
    /// Set when the samples are constant (zero-width support).
    pub degenerate: bool,
}

/// Entropy of the equal-width histogram over the samples' [min, max].
pub fn pdf_entropy(samples: &[f64], bins: usize) -> Result<EntropyEstimate> {
    if bins == 0 {
        return Err(Error::Usage("entropy needs at least one bin".to_string()));
    }
    if samples.len() < bins {
        return Err(Error::Usage(format!(
            "entropy needs at least as many samples as bins ({} < {bins})",
            samples.len()
        )));
    }
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(EntropyEstimate {
            nats: 0.0,
            degenerate: true,
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    let nats = -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>();
    Ok(EntropyEstimate {
        nats: nats.max(0.0),
        degenerate: false,
    })
}

/// One row of the coverage table: everything the report knows about a
/// single nominal rate.
#[derive(Debug, Clone, Copy)]
pub struct CoverageRow {
    pub nominal_pct: f64,
    pub observed_pct: f64,
    pub bias_pct: f64,
    pub piaw: f64,
    pub piaw_normalized: f64,
}

#[derive(Debug, Clone)]
pub struct EntropyHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub horizon: usize,
    pub instance_count: usize,
    /// Observations pooled over instances and nodes.
    pub observation_count: usize,
    pub coverage: Vec<CoverageRow>,
    pub mean_crps: f64,
    pub max_observed: f64,
    pub entropy: EntropyHistogram,
}

/// Streaming accumulator over test instances, so full ensembles never need
/// to be held in memory together.
pub struct Evaluator {
    nominal_pcts: Vec<f64>,
    entropy_bins: usize,
    covered: Vec<usize>,
    width_sums: Vec<f64>,
    crps_sum: f64,
    entropies: Vec<f64>,
    observation_count: usize,
    instance_count: usize,
    max_observed: f64,
}

impl Evaluator {
    /// `nominal_pcts` are central coverage rates in percent, e.g. 10..90.
    pub fn new(nominal_pcts: &[f64], entropy_bins: usize) -> Result<Self> {
        if nominal_pcts.is_empty()
            || nominal_pcts
                .iter()
                .any(|&c| !(0.0 < c && c < 100.0))
            || nominal_pcts.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Usage(
                "coverage rates must be strictly increasing percentages in (0, 100)".to_string(),
            ));
        }
        if entropy_bins == 0 {
            return Err(Error::Usage("entropy_bins must be positive".to_string()));
        }
        Ok(Evaluator {
            nominal_pcts: nominal_pcts.to_vec(),
            entropy_bins,
            covered: vec![0; nominal_pcts.len()],
            width_sums: vec![0.0; nominal_pcts.len()],
            crps_sum: 0.0,
            entropies: Vec::new(),
            observation_count: 0,
            instance_count: 0,
            max_observed: 0.0,
        })
    }

    /// Fold one test instance (an ensemble and the realized per-node
    /// values) into the running aggregates.
    pub fn add_instance(&mut self, ensemble: &ForecastEnsemble, observation: &[f64]) -> Result<()> {
        let n = ensemble.node_count();
        if observation.len() != n {
            return Err(Error::Usage(format!(
                "ensemble has {n} nodes but observation has {}",
                observation.len()
            )));
        }
        for node in 0..n {
            let mut sorted = ensemble.node_values(node);
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let v = observation[node];
            self.max_observed = self.max_observed.max(v.abs());
            for (ci, &pct) in self.nominal_pcts.iter().enumerate() {
                let alpha = (1.0 - pct / 100.0) / 2.0;
                let lo = quantile_of_sorted(&sorted, alpha);
                let hi = quantile_of_sorted(&sorted, 1.0 - alpha);
                if lo <= v && v <= hi {
                    self.covered[ci] += 1;
                }
                self.width_sums[ci] += (hi - lo).abs();
            }
            self.crps_sum += crps_empirical(&sorted, v)?;
            if sorted.len() >= self.entropy_bins {
                self.entropies.push(pdf_entropy(&sorted, self.entropy_bins)?.nats);
            }
        }
        self.observation_count += n;
        self.instance_count += 1;
        Ok(())
    }

    pub fn finish(self, horizon: usize) -> Result<EvaluationReport> {
        if self.observation_count == 0 {
            return Err(Error::Usage("evaluator saw no instances".to_string()));
        }
        let n = self.observation_count as f64;
        let coverage = self
            .nominal_pcts
            .iter()
            .enumerate()
            .map(|(ci, &pct)| {
                let observed_pct = self.covered[ci] as f64 * 100.0 / n;
                let piaw = self.width_sums[ci] / n;
                CoverageRow {
                    nominal_pct: pct,
                    observed_pct,
                    bias_pct: observed_pct - pct,
                    piaw,
                    piaw_normalized: if self.max_observed > 0.0 {
                        piaw / self.max_observed
                    } else {
                        0.0
                    },
                }
            })
            .collect();

        let entropy = if self.entropies.is_empty() {
            EntropyHistogram {
                edges: Vec::new(),
                counts: Vec::new(),
                mean: 0.0,
            }
        } else {
            let bins = 32usize;
            let lo = self.entropies.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = self
                .entropies
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let width = span / bins as f64;
            let mut counts = vec![0usize; bins];
            for &e in &self.entropies {
                let idx = (((e - lo) / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
            EntropyHistogram {
                edges,
                counts,
                mean: self.entropies.iter().sum::<f64>() / self.entropies.len() as f64,
            }
        };

        Ok(EvaluationReport {
            horizon,
            instance_count: self.instance_count,
            observation_count: self.observation_count,
            coverage,
            mean_crps: self.crps_sum / n,
            max_observed: self.max_observed,
            entropy,
        })
    }
}

/// Batch wrapper over [`Evaluator`] for aligned ensembles/observations.
pub fn evaluate(
    ensembles: &[ForecastEnsemble],
    observations: &[Vec<f64>],
    nominal_pcts: &[f64],
    entropy_bins: usize,
    horizon: usize,
) -> Result<EvaluationReport> {
    if ensembles.len() != observations.len() {
        return Err(Error::Usage(format!(
            "got {} ensembles but {} observations",
            ensembles.len(),
            observations.len()
        )));
    }
    let mut evaluator = Evaluator::new(nominal_pcts, entropy_bins)?;
    for (ens, obs) in ensembles.iter().zip(observations) {
        evaluator.add_instance(ens, obs)?;
    }
    evaluator.finish(horizon)
}

impl EvaluationReport {
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "horizon {} | {} instances | {} observations\n",
            self.horizon, self.instance_count, self.observation_count
        ));
        out.push_str(&format!("mean CRPS          {:.6}\n", self.mean_crps));
        out.push_str(&format!("max observed value {:.6}\n", self.max_observed));
        out.push_str(&format!("mean PDF entropy   {:.4} nats\n", self.entropy.mean));
        out.push_str("nominal%  observed%  bias_pp     piaw     piaw_norm\n");
        for row in &self.coverage {
            out.push_str(&format!(
                "{:>7.1}  {:>9.2}  {:>7.2}  {:>10.4}  {:>8.4}\n",
                row.nominal_pct, row.observed_pct, row.bias_pct, row.piaw, row.piaw_normalized
            ));
        }
        out
    }

    /// Write `report_<metric>_<horizon>.csv` tables plus a text summary;
    /// returns the paths written.
    pub fn write_csv_tables(&self, dir: &Path, extra_summary: &str) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let k = self.horizon;
        let mut write = |name: String, content: String| -> Result<()> {
            let path = dir.join(name);
            let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            file.write_all(content.as_bytes())
                .map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };

        let mut rel = String::from("nominal_coverage_pct,observed_coverage_pct,bias_pct\n");
        for row in &self.coverage {
            rel.push_str(&format!(
                "{},{},{}\n",
                row.nominal_pct, row.observed_pct, row.bias_pct
            ));
        }
        write(format!("report_reliability_{k}.csv"), rel)?;

        let mut sharp = String::from("nominal_coverage_pct,piaw,piaw_normalized\n");
        for row in &self.coverage {
            sharp.push_str(&format!(
                "{},{},{}\n",
                row.nominal_pct, row.piaw, row.piaw_normalized
            ));
        }
        write(format!("report_piaw_{k}.csv"), sharp)?;

        let crps = format!(
            "mean_crps,instances,observations\n{},{},{}\n",
            self.mean_crps, self.instance_count, self.observation_count
        );
        write(format!("report_crps_{k}.csv"), crps)?;

        let mut ent = String::from("bin_lower,bin_upper,count\n");
        for (i, &c) in self.entropy.counts.iter().enumerate() {
            ent.push_str(&format!(
                "{},{},{c}\n",
                self.entropy.edges[i],
                self.entropy.edges[i + 1]
            ));
        }
        write(format!("report_entropy_{k}.csv"), ent)?;

        let mut summary = self.render_summary();
        if !extra_summary.is_empty() {
            summary.push_str(extra_summary);
        }
        write(format!("report_summary_{k}.txt"), summary)?;
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn reliability_hand_cases_are_exact() {
        // 90 of 100 covered at nominal 90%.
        let obs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let intervals: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                if i < 90 {
                    (i as f64 - 1.0, i as f64 + 1.0)
                } else {
                    (0.0, 0.5)
                }
            })
            .collect();
        let bias = reliability_bias(&obs, &intervals, 0.05).unwrap();
        assert_eq!(bias.to_bits(), 0.0f64.to_bits());

        // 85 of 100 covered at nominal 90%.
        let intervals: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                if i < 85 {
                    (i as f64, i as f64)
                } else {
                    (0.0, 0.5)
                }
            })
            .collect();
        let bias = reliability_bias(&obs, &intervals, 0.05).unwrap();
        assert_eq!(bias.to_bits(), (-5.0f64).to_bits());

        // Everything covered at nominal 50%.
        let intervals = vec![(-1.0, 1e6); 100];
        let bias = reliability_bias(&obs, &intervals, 0.25).unwrap();
        assert_eq!(bias.to_bits(), 50.0f64.to_bits());
    }

    #[test]
    fn reliability_rejects_empty_and_inverted() {
        assert!(reliability_bias(&[], &[], 0.05).is_err());
        assert!(reliability_bias(&[1.0], &[(2.0, 1.0)], 0.05).is_err());
    }

    #[test]
    fn zero_width_interval_on_the_truth_counts_as_covered() {
        let bias = reliability_bias(&[3.0], &[(3.0, 3.0)], 0.05).unwrap();
        assert_eq!(bias, 10.0);
    }

    #[test]
    fn piaw_hand_cases() {
        assert_eq!(piaw(&[(2.0, 2.0), (5.0, 5.0)]).unwrap(), 0.0);
        assert_eq!(piaw(&[(0.0, 1.0), (0.0, 3.0)]).unwrap(), 2.0);
        assert!(piaw(&[]).is_err());
    }

    #[test]
    fn piaw_is_positively_homogeneous() {
        let pairs = [(0.5, 2.0), (1.0, 4.5), (3.0, 3.25)];
        let base = piaw(&pairs).unwrap();
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|(a, b)| (a * 7.0, b * 7.0)).collect();
        assert!((piaw(&scaled).unwrap() - 7.0 * base).abs() < 1e-12);
    }

    #[test]
    fn crps_point_mass_on_truth_is_zero() {
        assert_eq!(crps_empirical(&[4.2], 4.2).unwrap(), 0.0);
    }

    #[test]
    fn crps_two_sample_hand_case() {
        // Empirical CDF steps 0 -> 1/2 -> 1 at {0, 1}; observation 0.
        let crps = crps_empirical(&[0.0, 1.0], 0.0).unwrap();
        assert!((crps - 0.25).abs() < 1e-15, "crps {crps}");
    }

    #[test]
    fn crps_translation_invariance_and_homogeneity() {
        let mut rng = Rng::seed_from(12);
        for _ in 0..20 {
            let m = 3 + rng.next_index(40);
            let samples: Vec<f64> = (0..m).map(|_| rng.next_normal() * 3.0).collect();
            let v = rng.next_normal();
            let base = crps_empirical(&samples, v).unwrap();

            let shifted: Vec<f64> = samples.iter().map(|x| x + 17.5).collect();
            let s = crps_empirical(&shifted, v + 17.5).unwrap();
            assert!((s - base).abs() < 1e-10);

            let c = 4.25;
            let scaled: Vec<f64> = samples.iter().map(|x| x * c).collect();
            let sc = crps_empirical(&scaled, v * c).unwrap();
            assert!((sc - c * base).abs() < 1e-9);
        }
    }

    #[test]
    fn crps_sorted_form_matches_naive_double_sum() {
        let mut rng = Rng::seed_from(13);
        for _ in 0..20 {
            let m = 2 + rng.next_index(60);
            let samples: Vec<f64> = (0..m).map(|_| rng.next_normal() * 2.0 + 1.0).collect();
            let v = rng.next_normal();
            let fast = crps_empirical(&samples, v).unwrap();
            let term1: f64 =
                samples.iter().map(|x| (x - v).abs()).sum::<f64>() / m as f64;
            let mut pair = 0.0;
            for a in &samples {
                for b in &samples {
                    pair += (a - b).abs();
                }
            }
            let naive = term1 - pair / (2.0 * (m * m) as f64);
            assert!((fast - naive).abs() < 1e-12, "{fast} vs {naive}");
        }
    }

    #[test]
    fn entropy_degenerate_and_uniform_cases() {
        let flat = vec![2.0; 64];
        let est = pdf_entropy(&flat, 16).unwrap();
        assert_eq!(est.nats, 0.0);
        assert!(est.degenerate);

        // Exactly equal counts across 8 bins.
        let bins = 8;
        let per = 25;
        let mut samples = Vec::new();
        for b in 0..bins {
            for i in 0..per {
                samples.push(b as f64 + i as f64 / (per + 1) as f64);
            }
        }
        let est = pdf_entropy(&samples, bins).unwrap();
        assert!((est.nats - (bins as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn merging_bins_never_increases_entropy() {
        let mut rng = Rng::seed_from(14);
        for _ in 0..20 {
            let samples: Vec<f64> = (0..400).map(|_| rng.next_normal()).collect();
            let fine = pdf_entropy(&samples, 32).unwrap().nats;
            let coarse = pdf_entropy(&samples, 16).unwrap().nats;
            assert!(
                coarse <= fine + 1e-12,
                "coarse {coarse} > fine {fine}"
            );
        }
    }

    #[test]
    fn entropy_requires_enough_samples() {
        assert!(pdf_entropy(&[1.0, 2.0], 16).is_err());
    }

    #[test]
    fn true_distribution_intervals_are_reliable() {
        // Draw observations from per-instance normals and score the true
        // 90% central interval: the bias must vanish with N.
        let mut rng = Rng::seed_from(15);
        let n = 2000;
        let z95 = 1.6448536269514722; // Phi^{-1}(0.95)
        let mut obs = Vec::with_capacity(n);
        let mut intervals = Vec::with_capacity(n);
        for _ in 0..n {
            let mu = rng.uniform_in(-5.0, 5.0);
            let sd = rng.uniform_in(0.5, 2.0);
            obs.push(mu + sd * rng.next_normal());
            intervals.push((mu - z95 * sd, mu + z95 * sd));
        }
        let bias = reliability_bias(&obs, &intervals, 0.05).unwrap();
        assert!(bias.abs() < 3.0, "bias {bias} pp");
    }

    fn toy_ensembles() -> (Vec<ForecastEnsemble>, Vec<Vec<f64>>) {
        let mut rng = Rng::seed_from(16);
        let mut ensembles = Vec::new();
        let mut observations = Vec::new();
        for i in 0..30 {
            let center = 10.0 + i as f64;
            let samples: Vec<Vec<f64>> = (0..200)
                .map(|_| vec![center + rng.next_normal(), center * 0.5 + rng.next_normal()])
                .collect();
            ensembles.push(ForecastEnsemble {
                samples,
                horizon: 1,
                target_index: i,
            });
            observations.push(vec![
                center + rng.next_normal(),
                center * 0.5 + rng.next_normal(),
            ]);
        }
        (ensembles, observations)
    }

    #[test]
    fn report_populates_every_requested_coverage() {
        let (ens, obs) = toy_ensembles();
        let pcts: Vec<f64> = (1..=9).map(|i| (i * 10) as f64).collect();
        let report = evaluate(&ens, &obs, &pcts, 32, 1).unwrap();
        assert_eq!(report.coverage.len(), 9);
        for (row, want) in report.coverage.iter().zip(&pcts) {
            assert_eq!(row.nominal_pct, *want);
            assert!(row.piaw >= 0.0);
            assert!(row.piaw_normalized >= 0.0);
        }
        assert!(report.mean_crps >= 0.0);
        // Structural bounds on the bias.
        for row in &report.coverage {
            assert!(row.bias_pct >= -row.nominal_pct - 1e-9);
            assert!(row.bias_pct <= 100.0 - row.nominal_pct + 1e-9);
        }
    }

    #[test]
    fn perfect_point_forecast_scores_zero_crps() {
        let obs = vec![vec![5.0, 7.0]];
        let ens = vec![ForecastEnsemble {
            samples: vec![vec![5.0, 7.0]; 50],
            horizon: 1,
            target_index: 0,
        }];
        let report = evaluate(&ens, &obs, &[50.0, 90.0], 16, 1).unwrap();
        assert_eq!(report.mean_crps, 0.0);
        // Zero-width intervals on the truth cover everything.
        assert_eq!(report.coverage[0].observed_pct, 100.0);
        assert_eq!(report.coverage[0].bias_pct, 50.0);
    }

    #[test]
    fn instance_order_does_not_change_the_report() {
        let (ens, obs) = toy_ensembles();
        let pcts = [10.0, 50.0, 90.0];
        let a = evaluate(&ens, &obs, &pcts, 32, 1).unwrap();
        let mut idx: Vec<usize> = (0..ens.len()).collect();
        idx.reverse();
        let ens_r: Vec<ForecastEnsemble> = idx.iter().map(|&i| ens[i].clone()).collect();
        let obs_r: Vec<Vec<f64>> = idx.iter().map(|&i| obs[i].clone()).collect();
        let b = evaluate(&ens_r, &obs_r, &pcts, 32, 1).unwrap();
        assert!((a.mean_crps - b.mean_crps).abs() < 1e-9);
        for (ra, rb) in a.coverage.iter().zip(&b.coverage) {
            assert_eq!(ra.observed_pct, rb.observed_pct);
            assert!((ra.piaw - rb.piaw).abs() < 1e-9);
        }
    }

    #[test]
    fn misaligned_lengths_rejected() {
        let (ens, mut obs) = toy_ensembles();
        obs.pop();
        assert!(evaluate(&ens, &obs, &[50.0], 32, 1).is_err());
    }

    #[test]
    fn csv_tables_follow_naming_scheme() {
        let (ens, obs) = toy_ensembles();
        let report = evaluate(&ens, &obs, &[10.0, 90.0], 32, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = report.write_csv_tables(dir.path(), "extra line\n").unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect();
        assert!(names.contains(&"report_reliability_3.csv".to_string()));
        assert!(names.contains(&"report_piaw_3.csv".to_string()));
        assert!(names.contains(&"report_crps_3.csv".to_string()));
        assert!(names.contains(&"report_entropy_3.csv".to_string()));
        assert!(names.contains(&"report_summary_3.txt".to_string()));
        let summary = std::fs::read_to_string(dir.path().join("report_summary_3.txt")).unwrap();
        assert!(summary.contains("extra line"));
    }
}
