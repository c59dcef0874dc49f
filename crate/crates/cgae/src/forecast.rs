//! Test-time sample generation and the persistence-ensemble baseline.
//!
//! A trained decoder turns fresh standard-normal latent draws into forecast
//! samples; collecting many draws per test instance yields an empirical
//! predictive distribution per node. Each sample owns an independently
//! derived substream of the base seed, so generation order cannot matter
//! and the loop is safe to parallelize.

use crate::error::{Error, Result};
use crate::model::CgaeModel;
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

/// Generated samples for one test instance, in physical units.
/// Outer index is the sample, inner index the node.
#[derive(Debug, Clone)]
pub struct ForecastEnsemble {
    pub samples: Vec<Vec<f64>>,
    pub horizon: usize,
    /// Global time index of the target this ensemble predicts.
    pub target_index: usize,
}

impl ForecastEnsemble {
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn node_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    /// All samples for one node.
    pub fn node_values(&self, node: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[node]).collect()
    }
}

/// Per-node values at each requested quantile level.
#[derive(Debug, Clone)]
pub struct QuantileForecast {
    pub levels: Vec<f64>,
    /// values[node][level index]
    pub values: Vec<Vec<f64>>,
}

/// Draw `rho` forecast samples for one history window. The graph
/// representation is computed once; every sample then decodes a fresh
/// latent draw from its own substream. With `add_output_noise` the decoder
/// likelihood noise is added on top of the decoded mean. Outputs are
/// rescaled to physical units and clamped at zero.
pub fn generate_ensemble(
    model: &CgaeModel,
    pi: &Tensor,
    rho: usize,
    seed: u64,
    add_output_noise: bool,
    horizon: usize,
    target_index: usize,
) -> Result<ForecastEnsemble> {
    if rho < 2 {
        return Err(Error::Usage(format!(
            "ensemble needs at least 2 samples for quantiles, got rho={rho}"
        )));
    }
    let scale = model.value_scale();
    let scaled_pi = pi.scale(1.0 / scale);
    let rep = model.gfenn_forward(&scaled_pi)?;
    let d = model.config.latent_dim;
    let n = model.config.node_count;
    let sigma_dec = model.config.sigma_dec;

    let mut samples = Vec::with_capacity(rho);
    for s in 0..rho {
        let mut rng = Rng::substream(seed, s as u64);
        let z = rng.normal_tensor(&[d]);
        let mut decoded = model.decode(&rep, &z)?;
        if add_output_noise {
            for v in decoded.data_mut().iter_mut().take(n) {
                *v += sigma_dec * rng.next_normal();
            }
        }
        let physical: Vec<f64> = decoded.data().iter().map(|v| (v * scale).max(0.0)).collect();
        samples.push(physical);
    }
    Ok(ForecastEnsemble {
        samples,
        horizon,
        target_index,
    })
}

/// Quantile of pre-sorted values by linear interpolation between order
/// statistics at rank `p * (len - 1)`.
pub fn quantile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per-node empirical quantiles at the requested levels.
pub fn empirical_quantiles(ens: &ForecastEnsemble, levels: &[f64]) -> Result<QuantileForecast> {
    if levels.is_empty()
        || levels.iter().any(|&p| !(0.0..1.0).contains(&p) || p == 0.0)
        || levels.windows(2).any(|w| w[0] > w[1])
    {
        return Err(Error::Usage(
            "quantile levels must be sorted and strictly inside (0, 1)".to_string(),
        ));
    }
    let n = ens.node_count();
    let mut values = Vec::with_capacity(n);
    for node in 0..n {
        let mut sorted = ens.node_values(node);
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.push(levels.iter().map(|&p| quantile_of_sorted(&sorted, p)).collect());
    }
    Ok(QuantileForecast {
        levels: levels.to_vec(),
        values,
    })
}

/// Analog baseline: the ensemble members are the observed values at the
/// target's clock time on each of the previous `member_days` days.
pub fn persistence_ensemble(
    history: &[Vec<Option<f64>>],
    anchor: usize,
    horizon: usize,
    member_days: usize,
    steps_per_day: usize,
) -> Result<ForecastEnsemble> {
    if member_days == 0 {
        return Err(Error::Usage("member_days must be at least 1".to_string()));
    }
    if steps_per_day == 0 {
        return Err(Error::Usage("steps_per_day must be positive".to_string()));
    }
    let target = anchor + horizon;
    let needed = member_days * steps_per_day;
    if target < needed {
        return Err(Error::Usage(format!(
            "persistence ensemble needs {member_days} prior days ({needed} steps) of history \
             before target index {target}"
        )));
    }
    let mut samples = Vec::with_capacity(member_days);
    for day in 1..=member_days {
        let idx = target - day * steps_per_day;
        let mut member = Vec::with_capacity(history.len());
        for (node, series) in history.iter().enumerate() {
            match series.get(idx).copied().flatten() {
                Some(v) => member.push(v),
                None => {
                    return Err(Error::Usage(format!(
                        "persistence ensemble: node {node} has no observation at index {idx} \
                         ({day} day(s) before the target)"
                    )))
                }
            }
        }
        samples.push(member);
    }
    Ok(ForecastEnsemble {
        samples,
        horizon,
        target_index: target,
    })
}

/// CSV dump `node_id,sample_index,value`, grouped by node.
pub fn write_ensemble_csv(path: &Path, node_ids: &[String], ens: &ForecastEnsemble) -> Result<()> {
    let mut out = String::from("node_id,sample_index,value\n");
    for (node, id) in node_ids.iter().enumerate() {
        for (s, sample) in ens.samples.iter().enumerate() {
            out.push_str(&format!("{id},{s},{}\n", sample[node]));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// CSV dump `node_id,level,value`.
pub fn write_quantiles_csv(path: &Path, node_ids: &[String], qf: &QuantileForecast) -> Result<()> {
    let mut out = String::from("node_id,level,value\n");
    for (node, id) in node_ids.iter().enumerate() {
        for (li, level) in qf.levels.iter().enumerate() {
            out.push_str(&format!("{id},{level},{}\n", qf.values[node][li]));
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
