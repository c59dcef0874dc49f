//! Pipeline stages behind the command-line interface.
//!
//! Each stage reads the artifacts produced by the ones before it, writes
//! its own, and returns a one-line machine-parsable summary. Everything is
//! driven by a validated [`RunConfig`] plus the seed, so two runs with the
//! same config produce byte-identical files.

use crate::config::{GraphMode, RunConfig};
use crate::data::{align_sites, export_csv, ingest_csv, synth_generate, AlignedPanel, SynthConfig, STEPS_PER_DAY};
use crate::error::{Error, Result};
use crate::features::{build_examples, select_lags, Dataset, LagSet};
use crate::forecast::{
    empirical_quantiles, generate_ensemble, persistence_ensemble, write_ensemble_csv,
    write_quantiles_csv,
};
use crate::graph::Graph;
use crate::metrics::Evaluator;
use crate::model::{CgaeModel, ModelConfig};
use crate::rng::{derive_seed, Rng};
use crate::spectral::renormalized_propagation;
use std::fmt::Write as _;
use std::path::Path;

/// Key-value summary printed by the CLI, one line per stage.
#[derive(Debug, Clone)]
pub struct StageSummary {
    pub stage: &'static str,
    pub fields: Vec<(String, String)>,
}

impl StageSummary {
    fn new(stage: &'static str) -> Self {
        StageSummary {
            stage,
            fields: Vec::new(),
        }
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut line = format!("stage={}", self.stage);
        for (k, v) in &self.fields {
            let _ = write!(line, " {k}={v}");
        }
        line
    }
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.display().to_string(),
            hint: hint.to_string(),
        })
    }
}

fn ensure_workdir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))
}

fn load_panel(cfg: &RunConfig) -> Result<AlignedPanel> {
    require(
        &cfg.data_path,
        "run `cgae synth` or point paths.data at an ingestible CSV",
    )?;
    let report = ingest_csv(&cfg.data_path)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    if report.sites.is_empty() {
        return Err(Error::Data(format!(
            "{} holds no usable rows",
            cfg.data_path.display()
        )));
    }
    align_sites(&report.sites)
}

/// Index of the chronological train/test boundary on the panel's grid.
fn split_boundary(cfg: &RunConfig, panel: &AlignedPanel) -> Result<usize> {
    match cfg.split_at {
        Some(ts) => panel.index_of(ts).ok_or_else(|| Error::Config {
            field: "training.split_at".to_string(),
            detail: format!("{ts} is not on the panel's 30-minute grid"),
        }),
        None => Ok((panel.len() as f64 * cfg.split_fraction).floor() as usize),
    }
}

fn load_lags(cfg: &RunConfig) -> Result<LagSet> {
    require(&cfg.lags_path(), "run `cgae select-lags` first")?;
    LagSet::load(&cfg.lags_path())
}

fn load_graph(cfg: &RunConfig, panel: &AlignedPanel) -> Result<Graph> {
    require(&cfg.graph_path(), "run `cgae build-graph` first")?;
    let graph = Graph::load(&cfg.graph_path())?;
    if graph.node_ids() != panel.node_ids {
        return Err(Error::Data(format!(
            "graph nodes {:?} do not match data sites {:?}; rebuild the graph",
            graph.node_ids(),
            panel.node_ids
        )));
    }
    Ok(graph)
}

fn load_checkpoint(cfg: &RunConfig, horizon: usize) -> Result<CgaeModel> {
    let path = cfg.checkpoint_path(horizon);
    require(&path, &format!("run `cgae train` for horizon {horizon} first"))?;
    CgaeModel::load(&path)
}

/// Seed for the ensemble of one test instance: decoupled per horizon and
/// target index so instance order never matters.
pub fn ensemble_seed(base: u64, horizon: usize, target_index: usize) -> u64 {
    derive_seed(base, &[0xE45E, horizon as u64, target_index as u64])
}

// ── Stages ──────────────────────────────────────────────────────────

/// Generate synthetic site data and write it to `paths.data`.
pub fn synth_stage(cfg: &RunConfig) -> Result<StageSummary> {
    let synth = SynthConfig {
        nodes: cfg.synth_nodes,
        days: cfg.synth_days,
        noise: cfg.synth_noise,
        seed: cfg.seed,
        coords: None,
    };
    let (sites, _) = synth_generate(&synth)?;
    if let Some(parent) = cfg.data_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    export_csv(&cfg.data_path, &sites)?;
    let rows: usize = sites.iter().map(|s| s.present_count()).sum();
    let mut summary = StageSummary::new("synth");
    summary.push("nodes", sites.len());
    summary.push("days", cfg.synth_days);
    summary.push("rows", rows);
    summary.push("path", cfg.data_path.display());
    Ok(summary)
}

/// Select lags by mutual information on the pooled training series.
pub fn select_lags_stage(cfg: &RunConfig) -> Result<StageSummary> {
    ensure_workdir(cfg)?;
    let panel = load_panel(cfg)?;
    let boundary = split_boundary(cfg, &panel)?;
    let pooled = panel.pooled_values(boundary);
    let lag_set = select_lags(&pooled, cfg.max_lag, cfg.tau, cfg.mi_bins)?;
    lag_set.save(&cfg.lags_path())?;
    let mut summary = StageSummary::new("select-lags");
    summary.push("selected", lag_set.lags.len());
    summary.push("max_lag", cfg.max_lag);
    summary.push("tau", cfg.tau);
    summary.push("path", cfg.lags_path().display());
    Ok(summary)
}

/// Build the site graph from training-split correlations (or the distance
/// kernel) and write the edge list.
pub fn build_graph_stage(cfg: &RunConfig) -> Result<StageSummary> {
    ensure_workdir(cfg)?;
    let panel = load_panel(cfg)?;
    let boundary = split_boundary(cfg, &panel)?;
    let graph = match cfg.graph_mode {
        GraphMode::Correlation => {
            // Complete cases only: rows where every node reports.
            let mut series: Vec<Vec<f64>> = vec![Vec::new(); panel.values.len()];
            for t in 0..boundary.min(panel.len()) {
                if panel.values.iter().all(|node| node[t].is_some()) {
                    for (i, node) in panel.values.iter().enumerate() {
                        series[i].push(node[t].unwrap());
                    }
                }
            }
            Graph::from_correlation(panel.node_ids.clone(), &series, cfg.graph_threshold)?
        }
        GraphMode::Distance => Graph::from_distance(
            panel.node_ids.clone(),
            &panel.coords,
            cfg.graph_kernel_scale,
        )?,
    };
    graph.save(&cfg.graph_path())?;
    let mut summary = StageSummary::new("build-graph");
    summary.push("nodes", graph.node_count());
    summary.push("edges", graph.edge_count());
    summary.push(
        "mode",
        match cfg.graph_mode {
            GraphMode::Correlation => "correlation",
            GraphMode::Distance => "distance",
        },
    );
    summary.push("path", cfg.graph_path().display());
    Ok(summary)
}

fn datasets_for_horizon(
    cfg: &RunConfig,
    panel: &AlignedPanel,
    lags: &LagSet,
    horizon: usize,
) -> Result<(Dataset, Dataset)> {
    let boundary = split_boundary(cfg, panel)?;
    build_examples(&panel.values, lags, horizon, boundary)
}

/// Train one checkpoint per requested horizon.
pub fn train_stage(cfg: &RunConfig, epochs_override: Option<usize>) -> Result<StageSummary> {
    ensure_workdir(cfg)?;
    let panel = load_panel(cfg)?;
    let lags = load_lags(cfg)?;
    let graph = load_graph(cfg, &panel)?;
    let propagation = renormalized_propagation(&graph);
    let epochs = epochs_override.unwrap_or(cfg.epochs);

    let mut summary = StageSummary::new("train");
    summary.push("horizons", join(&cfg.horizons));
    summary.push("epochs", epochs);
    let mut finals = Vec::new();
    let mut example_counts = Vec::new();
    for &k in &cfg.horizons {
        let (train_ds, _) = datasets_for_horizon(cfg, &panel, &lags, k)?;
        if train_ds.examples.is_empty() {
            return Err(Error::Data(format!(
                "no training examples for horizon {k}; series too short or split too early"
            )));
        }
        let model_config = ModelConfig::with_geometry(
            panel.node_ids.len(),
            lags.feature_count(),
            cfg.latent_dim,
            cfg.gfenn_layers,
            cfg.gfenn_width,
            cfg.encoder_layers,
            cfg.decoder_layers,
            cfg.eta,
            cfg.sigma_dec,
            derive_seed(cfg.seed, &[0x1217, k as u64]),
        );
        let mut model = CgaeModel::init(model_config, &propagation)?;
        let mut rng = Rng::seed_from(derive_seed(cfg.seed, &[0x7247, k as u64]));
        let trace = model.train(&train_ds, epochs, cfg.batch_size, &mut rng)?;
        model.save(&cfg.checkpoint_path(k))?;
        finals.push(trace.last().map_or(f64::NAN, |s| s.total));
        example_counts.push(train_ds.examples.len());
    }
    summary.push("examples", join(&example_counts));
    summary.push(
        "final_loss",
        finals
            .iter()
            .map(|l| format!("{l:.6}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    summary.push("checkpoints", cfg.workdir.display());
    Ok(summary)
}

/// Generate and dump the ensemble plus its quantiles for one test
/// instance at one horizon.
pub fn forecast_stage(cfg: &RunConfig, horizon: usize, instance: usize) -> Result<StageSummary> {
    ensure_workdir(cfg)?;
    let panel = load_panel(cfg)?;
    let lags = load_lags(cfg)?;
    let model = load_checkpoint(cfg, horizon)?;
    let (_, test_ds) = datasets_for_horizon(cfg, &panel, &lags, horizon)?;
    let example = test_ds.examples.get(instance).ok_or_else(|| {
        Error::Usage(format!(
            "test instance {instance} out of range; horizon {horizon} has {} test examples",
            test_ds.examples.len()
        ))
    })?;
    let target_index = example.anchor + horizon;
    let ensemble = generate_ensemble(
        &model,
        &example.pi,
        cfg.rho,
        ensemble_seed(cfg.seed, horizon, target_index),
        cfg.add_output_noise,
        horizon,
        target_index,
    )?;

    // Quantile levels implied by the coverage table, plus the median.
    let mut levels: Vec<f64> = cfg
        .coverage_pcts
        .iter()
        .flat_map(|&pct| {
            let alpha = (1.0 - pct / 100.0) / 2.0;
            [alpha, 1.0 - alpha]
        })
        .chain([0.5])
        .collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    let quantiles = empirical_quantiles(&ensemble, &levels)?;

    let epath = cfg.ensemble_path(horizon, instance);
    let qpath = cfg.quantiles_path(horizon, instance);
    write_ensemble_csv(&epath, &panel.node_ids, &ensemble)?;
    write_quantiles_csv(&qpath, &panel.node_ids, &quantiles)?;

    let mut summary = StageSummary::new("forecast");
    summary.push("horizon", horizon);
    summary.push("instance", instance);
    summary.push("target", panel.timestamp_at(target_index).to_rfc3339());
    summary.push("rho", cfg.rho);
    summary.push("ensemble", epath.display());
    summary.push("quantiles", qpath.display());
    Ok(summary)
}

/// Metrics accumulated for one horizon, reported beside the persistence
/// baseline computed on the same instances.
pub struct HorizonEvaluation {
    pub horizon: usize,
    pub cgae: crate::metrics::EvaluationReport,
    pub pen: crate::metrics::EvaluationReport,
    pub skipped_instances: usize,
}

/// Score the trained model and the persistence baseline over every test
/// instance, streaming ensembles so memory stays bounded.
pub fn evaluate_horizon(
    cfg: &RunConfig,
    panel: &AlignedPanel,
    lags: &LagSet,
    horizon: usize,
) -> Result<HorizonEvaluation> {
    let model = load_checkpoint(cfg, horizon)?;
    let (_, test_ds) = datasets_for_horizon(cfg, panel, lags, horizon)?;
    if test_ds.examples.is_empty() {
        return Err(Error::Data(format!(
            "no test examples for horizon {horizon}"
        )));
    }
    let mut cgae_eval = Evaluator::new(&cfg.coverage_pcts, cfg.entropy_bins)?;
    let mut pen_eval = Evaluator::new(&cfg.coverage_pcts, cfg.entropy_bins)?;
    let mut skipped = 0usize;
    for example in &test_ds.examples {
        let target_index = example.anchor + horizon;
        // Keep the comparison honest: only instances the baseline can
        // serve are scored, for both models.
        let pen = match persistence_ensemble(
            &panel.values,
            example.anchor,
            horizon,
            cfg.pen_member_days,
            STEPS_PER_DAY,
        ) {
            Ok(ens) => ens,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let ensemble = generate_ensemble(
            &model,
            &example.pi,
            cfg.rho,
            ensemble_seed(cfg.seed, horizon, target_index),
            cfg.add_output_noise,
            horizon,
            target_index,
        )?;
        cgae_eval.add_instance(&ensemble, example.target.data())?;
        pen_eval.add_instance(&pen, example.target.data())?;
    }
    Ok(HorizonEvaluation {
        horizon,
        cgae: cgae_eval.finish(horizon)?,
        pen: pen_eval.finish(horizon)?,
        skipped_instances: skipped,
    })
}

/// Evaluate every configured horizon and write the report tables.
pub fn evaluate_stage(cfg: &RunConfig) -> Result<StageSummary> {
    ensure_workdir(cfg)?;
    let panel = load_panel(cfg)?;
    let lags = load_lags(cfg)?;
    let mut summary = StageSummary::new("evaluate");
    for &k in &cfg.horizons {
        let eval = evaluate_horizon(cfg, &panel, &lags, k)?;
        let pen_block = format!(
            "\npersistence baseline ({} member days, same instances):\n  mean CRPS {:.6}\n{}",
            cfg.pen_member_days,
            eval.pen.mean_crps,
            if eval.skipped_instances > 0 {
                format!("  skipped {} instances without enough history\n", eval.skipped_instances)
            } else {
                String::new()
            }
        );
        eval.cgae.write_csv_tables(&cfg.workdir, &pen_block)?;
        summary.push(&format!("crps_k{k}"), format!("{:.6}", eval.cgae.mean_crps));
        summary.push(&format!("pen_crps_k{k}"), format!("{:.6}", eval.pen.mean_crps));
        if let Some(row) = eval
            .cgae
            .coverage
            .iter()
            .find(|r| (r.nominal_pct - 90.0).abs() < 1e-9)
        {
            summary.push(&format!("coverage90_k{k}"), format!("{:.2}", row.observed_pct));
        }
        summary.push(&format!("instances_k{k}"), eval.cgae.instance_count);
    }
    summary.push("reports", cfg.workdir.display());
    Ok(summary)
}

fn join(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
