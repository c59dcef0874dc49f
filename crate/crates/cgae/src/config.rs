//! Run configuration: a flat `key = value` text format with `[section]`
//! headers. Unknown keys are rejected, every field is validated before a
//! pipeline stage runs, and `#` starts a comment.

use crate::error::{Error, Result};
use chrono::{DateTime, Utc};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphMode {
    Correlation,
    Distance,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,

    // [paths]
    pub data_path: PathBuf,
    pub workdir: PathBuf,

    // [synth]
    pub synth_nodes: usize,
    pub synth_days: usize,
    pub synth_noise: f64,

    // [graph]
    pub graph_mode: GraphMode,
    pub graph_threshold: f64,
    pub graph_kernel_scale: f64,

    // [lags]
    pub max_lag: usize,
    pub tau: f64,
    pub mi_bins: usize,

    // [model]
    pub latent_dim: usize,
    pub gfenn_layers: usize,
    pub gfenn_width: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub eta: f64,
    pub sigma_dec: f64,

    // [training]
    pub epochs: usize,
    pub batch_size: usize,
    pub split_fraction: f64,
    pub split_at: Option<DateTime<Utc>>,

    // [forecasting]
    pub rho: usize,
    pub horizons: Vec<usize>,
    pub coverage_pcts: Vec<f64>,
    pub add_output_noise: bool,
    pub pen_member_days: usize,
    pub entropy_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            data_path: PathBuf::from("data.csv"),
            workdir: PathBuf::from("out"),
            synth_nodes: 5,
            synth_days: 60,
            synth_noise: 1.0,
            graph_mode: GraphMode::Correlation,
            graph_threshold: 0.5,
            graph_kernel_scale: 1.0,
            max_lag: 300,
            tau: 0.45,
            mi_bins: 16,
            latent_dim: 4,
            gfenn_layers: 2,
            gfenn_width: 8,
            encoder_layers: 3,
            decoder_layers: 4,
            eta: 5e-4,
            sigma_dec: 0.1,
            epochs: 40,
            batch_size: 1,
            split_fraction: 0.75,
            split_at: None,
            rho: 10_000,
            horizons: vec![1],
            coverage_pcts: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0],
            add_output_noise: true,
            pen_member_days: 20,
            entropy_bins: 32,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let field_err = |field: &str, detail: String| Error::Config {
            field: field.to_string(),
            detail,
        };

        for raw in text.lines() {
            let line = match raw.find('#') {
                Some(idx) => &raw[..idx],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| field_err(line, "expected `key = value`".to_string()))?;
            let key = key.trim();
            let value = value.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.apply(&full, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |detail: String| Error::Config {
            field: key.to_string(),
            detail,
        };
        macro_rules! parse {
            ($ty:ty) => {
                value
                    .parse::<$ty>()
                    .map_err(|_| bad(format!("cannot parse `{value}`")))?
            };
        }
        match key {
            "seed" => self.seed = parse!(u64),
            "paths.data" => self.data_path = PathBuf::from(value),
            "paths.workdir" => self.workdir = PathBuf::from(value),
            "synth.nodes" => self.synth_nodes = parse!(usize),
            "synth.days" => self.synth_days = parse!(usize),
            "synth.noise" => self.synth_noise = parse!(f64),
            "graph.mode" => {
                self.graph_mode = match value {
                    "correlation" => GraphMode::Correlation,
                    "distance" => GraphMode::Distance,
                    other => {
                        return Err(bad(format!(
                            "expected `correlation` or `distance`, got `{other}`"
                        )))
                    }
                }
            }
            "graph.threshold" => self.graph_threshold = parse!(f64),
            "graph.kernel_scale" => self.graph_kernel_scale = parse!(f64),
            "lags.max_lag" => self.max_lag = parse!(usize),
            "lags.tau" => self.tau = parse!(f64),
            "lags.bins" => self.mi_bins = parse!(usize),
            "model.latent_dim" => self.latent_dim = parse!(usize),
            "model.gfenn_layers" => self.gfenn_layers = parse!(usize),
            "model.gfenn_width" => self.gfenn_width = parse!(usize),
            "model.encoder_layers" => self.encoder_layers = parse!(usize),
            "model.decoder_layers" => self.decoder_layers = parse!(usize),
            "model.eta" => self.eta = parse!(f64),
            "model.sigma_dec" => self.sigma_dec = parse!(f64),
            "training.epochs" => self.epochs = parse!(usize),
            "training.batch_size" => self.batch_size = parse!(usize),
            "training.split_fraction" => self.split_fraction = parse!(f64),
            "training.split_at" => {
                let ts = DateTime::parse_from_rfc3339(value)
                    .map_err(|e| bad(format!("bad timestamp `{value}`: {e}")))?;
                self.split_at = Some(ts.with_timezone(&Utc));
            }
            "forecasting.rho" => self.rho = parse!(usize),
            "forecasting.horizons" => {
                self.horizons = value
                    .split(',')
                    .map(|f| {
                        f.trim()
                            .parse::<usize>()
                            .map_err(|_| bad(format!("bad horizon `{f}`")))
                    })
                    .collect::<Result<_>>()?;
            }
            "forecasting.coverage" => {
                self.coverage_pcts = value
                    .split(',')
                    .map(|f| {
                        f.trim()
                            .parse::<f64>()
                            .map_err(|_| bad(format!("bad coverage `{f}`")))
                    })
                    .collect::<Result<_>>()?;
            }
            "forecasting.add_output_noise" => {
                self.add_output_noise = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    other => return Err(bad(format!("expected true/false, got `{other}`"))),
                }
            }
            "forecasting.pen_member_days" => self.pen_member_days = parse!(usize),
            "forecasting.entropy_bins" => self.entropy_bins = parse!(usize),
            other => {
                return Err(Error::Config {
                    field: other.to_string(),
                    detail: "unknown key".to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, detail: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    field: field.to_string(),
                    detail: detail.to_string(),
                })
            }
        };
        check(self.synth_nodes >= 2, "synth.nodes", "need at least 2 nodes")?;
        check(self.synth_days >= 2, "synth.days", "need at least 2 days")?;
        check(
            self.synth_noise >= 0.0 && self.synth_noise.is_finite(),
            "synth.noise",
            "must be nonnegative",
        )?;
        check(
            (0.0..=1.0).contains(&self.graph_threshold),
            "graph.threshold",
            "must lie in [0, 1]",
        )?;
        check(
            self.graph_kernel_scale > 0.0,
            "graph.kernel_scale",
            "must be positive",
        )?;
        check(self.max_lag >= 1, "lags.max_lag", "must be at least 1")?;
        check(self.tau >= 0.0, "lags.tau", "must be nonnegative")?;
        check(self.mi_bins >= 2, "lags.bins", "need at least 2 bins")?;
        check(self.latent_dim >= 1, "model.latent_dim", "must be at least 1")?;
        check(self.gfenn_layers >= 1, "model.gfenn_layers", "must be at least 1")?;
        check(self.gfenn_width >= 1, "model.gfenn_width", "must be at least 1")?;
        check(self.encoder_layers >= 1, "model.encoder_layers", "must be at least 1")?;
        check(self.decoder_layers >= 1, "model.decoder_layers", "must be at least 1")?;
        check(self.eta > 0.0 && self.eta.is_finite(), "model.eta", "must be positive")?;
        check(
            self.sigma_dec > 0.0 && self.sigma_dec.is_finite(),
            "model.sigma_dec",
            "must be positive",
        )?;
        check(self.batch_size >= 1, "training.batch_size", "must be at least 1")?;
        check(
            self.split_at.is_some() || (0.0 < self.split_fraction && self.split_fraction < 1.0),
            "training.split_fraction",
            "must lie strictly inside (0, 1)",
        )?;
        check(self.rho >= 2, "forecasting.rho", "need at least 2 samples")?;
        check(!self.horizons.is_empty(), "forecasting.horizons", "need at least one horizon")?;
        check(
            self.horizons.iter().all(|&k| k >= 1),
            "forecasting.horizons",
            "every horizon must be at least 1",
        )?;
        check(
            !self.coverage_pcts.is_empty()
                && self.coverage_pcts.iter().all(|&c| 0.0 < c && c < 100.0)
                && self.coverage_pcts.windows(2).all(|w| w[0] < w[1]),
            "forecasting.coverage",
            "must be strictly increasing percentages in (0, 100)",
        )?;
        check(
            self.pen_member_days >= 1,
            "forecasting.pen_member_days",
            "must be at least 1",
        )?;
        check(self.entropy_bins >= 2, "forecasting.entropy_bins", "need at least 2 bins")?;
        Ok(())
    }

    // Artifact locations, all under the workdir.

    pub fn lags_path(&self) -> PathBuf {
        self.workdir.join("lags.csv")
    }

    pub fn graph_path(&self) -> PathBuf {
        self.workdir.join("graph.csv")
    }

    pub fn checkpoint_path(&self, horizon: usize) -> PathBuf {
        self.workdir.join(format!("model_k{horizon}.ckpt"))
    }

    pub fn ensemble_path(&self, horizon: usize, instance: usize) -> PathBuf {
        self.workdir.join(format!("ensemble_k{horizon}_i{instance}.csv"))
    }

    pub fn quantiles_path(&self, horizon: usize, instance: usize) -> PathBuf {
        self.workdir.join(format!("quantiles_k{horizon}_i{instance}.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_round_trip_of_selected_fields() {
        let text = "\
seed = 99

[paths]
data = my/data.csv
workdir = run1

[graph]
mode = distance          # switch edge semantics
kernel_scale = 2.5

[lags]
max_lag = 64
tau = 0.2

[training]
epochs = 3
split_at = 2020-02-15T00:00:00Z

[forecasting]
horizons = 1,3,12
coverage = 50,90
add_output_noise = false
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.data_path, PathBuf::from("my/data.csv"));
        assert_eq!(cfg.graph_mode, GraphMode::Distance);
        assert_eq!(cfg.graph_kernel_scale, 2.5);
        assert_eq!(cfg.max_lag, 64);
        assert_eq!(cfg.tau, 0.2);
        assert_eq!(cfg.epochs, 3);
        assert!(cfg.split_at.is_some());
        assert_eq!(cfg.horizons, vec![1, 3, 12]);
        assert_eq!(cfg.coverage_pcts, vec![50.0, 90.0]);
        assert!(!cfg.add_output_noise);
        // Untouched fields keep defaults.
        assert_eq!(cfg.rho, 10_000);
        assert_eq!(cfg.pen_member_days, 20);
    }

    #[test]
    fn unknown_keys_are_rejected_with_field_name() {
        let err = RunConfig::parse("[model]\nlatent_dims = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.latent_dims"), "{msg}");
        assert!(msg.contains("unknown"), "{msg}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = RunConfig::parse("[model]\neta = 0\n").unwrap_err();
        assert!(err.to_string().contains("model.eta"));
        let err = RunConfig::parse("[forecasting]\nrho = 1\n").unwrap_err();
        assert!(err.to_string().contains("forecasting.rho"));
        let err = RunConfig::parse("[forecasting]\ncoverage = 90,50\n").unwrap_err();
        assert!(err.to_string().contains("forecasting.coverage"));
    }
}
