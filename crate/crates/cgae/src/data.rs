//! Site data: CSV ingest/export, panel alignment and synthetic generation.
//!
//! Every site series lives on a uniform 30-minute UTC grid anchored at its
//! first timestamp; missing rows become explicit gaps. The synthetic
//! generator produces a clear-sky half-sine diurnal cycle per node,
//! modulated by a spatially correlated autoregressive cloud field plus
//! idiosyncratic noise, with every random amplitude scaled by one `noise`
//! knob so `noise = 0` collapses to a deterministic periodic signal.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use chrono::{DateTime, Duration, SecondsFormat, Utc};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Steps per day on the 30-minute grid.
pub const STEPS_PER_DAY: usize = 48;
const STEP_MINUTES: i64 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub site_id: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Timestamp of `values[0]`.
    pub start: DateTime<Utc>,
    /// One slot per 30-minute step; `None` marks a gap.
    pub values: Vec<Option<f64>>,
}

impl SiteSeries {
    pub fn timestamp_at(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(STEP_MINUTES * index as i64)
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Ingest outcome: per-site series plus non-fatal validation warnings.
#[derive(Debug)]
pub struct IngestReport {
    pub sites: Vec<SiteSeries>,
    pub warnings: Vec<String>,
}

/// Read `site_id,latitude,longitude,timestamp,ghi` rows. Rows with
/// negative GHI are rejected with a warning; duplicate (site, timestamp)
/// pairs and off-grid timestamps are errors.
pub fn ingest_csv(path: &Path) -> Result<IngestReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != "site_id,latitude,longitude,timestamp,ghi" {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            detail: format!(
                "expected header `site_id,latitude,longitude,timestamp,ghi`, got `{header}`"
            ),
        });
    }

    struct Raw {
        latitude: f64,
        longitude: f64,
        rows: Vec<(DateTime<Utc>, f64)>,
    }
    let mut warnings = Vec::new();
    // BTreeMap keeps site order independent of input order.
    let mut sites: BTreeMap<String, Raw> = BTreeMap::new();

    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |detail: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, got {}", fields.len())));
        }
        let latitude: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad latitude `{}`", fields[1])))?;
        let longitude: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("bad longitude `{}`", fields[2])))?;
        let ts = DateTime::parse_from_rfc3339(fields[3])
            .map_err(|e| parse_err(format!("bad timestamp `{}`: {e}", fields[3])))?
            .with_timezone(&Utc);
        let ghi: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(format!("bad ghi `{}`", fields[4])))?;
        if !ghi.is_finite() || ghi < 0.0 {
            warnings.push(format!(
                "line {}: rejected row for site {} at {}: ghi {ghi} is negative or non-finite",
                lineno + 1,
                fields[0],
                fields[3]
            ));
            continue;
        }
        let entry = sites.entry(fields[0].to_string()).or_insert(Raw {
            latitude,
            longitude,
            rows: Vec::new(),
        });
        entry.rows.push((ts, ghi));
    }

    if sites.is_empty() {
        warnings.push("no data rows; empty site list".to_string());
        return Ok(IngestReport {
            sites: Vec::new(),
            warnings,
        });
    }

    let mut out = Vec::with_capacity(sites.len());
    for (site_id, mut raw) in sites {
        raw.rows.sort_by_key(|(ts, _)| *ts);
        for w in raw.rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Data(format!(
                    "duplicate (site, timestamp): ({site_id}, {})",
                    w[0].0.to_rfc3339_opts(SecondsFormat::Secs, true)
                )));
            }
        }
        let start = raw.rows[0].0;
        let mut offenders = Vec::new();
        let mut indexed = Vec::with_capacity(raw.rows.len());
        for (ts, ghi) in &raw.rows {
            let minutes = (*ts - start).num_minutes();
            if minutes % STEP_MINUTES != 0 || (*ts - start).num_seconds() % 60 != 0 {
                offenders.push(ts.to_rfc3339_opts(SecondsFormat::Secs, true));
            } else {
                indexed.push(((minutes / STEP_MINUTES) as usize, *ghi));
            }
        }
        if !offenders.is_empty() {
            return Err(Error::Data(format!(
                "site {site_id}: timestamps off the 30-minute grid: {}",
                offenders.join(", ")
            )));
        }
        let len = indexed.last().map_or(0, |(i, _)| i + 1);
        let mut values = vec![None; len];
        for (i, ghi) in indexed {
            values[i] = Some(ghi);
        }
        out.push(SiteSeries {
            site_id,
            latitude: raw.latitude,
            longitude: raw.longitude,
            start,
            values,
        });
    }
    Ok(IngestReport {
        sites: out,
        warnings,
    })
}

/// Write sites back out in the ingest schema; gaps are simply absent rows.
pub fn export_csv(path: &Path, sites: &[SiteSeries]) -> Result<()> {
    let mut out = String::from("site_id,latitude,longitude,timestamp,ghi\n");
    for site in sites {
        for (i, value) in site.values.iter().enumerate() {
            if let Some(v) = value {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    site.site_id,
                    site.latitude,
                    site.longitude,
                    site.timestamp_at(i).to_rfc3339_opts(SecondsFormat::Secs, true),
                    v
                ));
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Sites aligned onto one shared time axis.
#[derive(Debug, Clone)]
pub struct AlignedPanel {
    pub start: DateTime<Utc>,
    pub node_ids: Vec<String>,
    pub coords: Vec<(f64, f64)>,
    /// values[node][step], `None` where a site has no observation.
    pub values: Vec<Vec<Option<f64>>>,
}

impl AlignedPanel {
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid index of a timestamp, if it is on the grid and in range.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let minutes = (ts - self.start).num_minutes();
        if ts < self.start || minutes % STEP_MINUTES != 0 {
            return None;
        }
        let idx = (minutes / STEP_MINUTES) as usize;
        (idx < self.len()).then_some(idx)
    }

    pub fn timestamp_at(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(STEP_MINUTES * index as i64)
    }

    /// Concatenation of every node's present values, node by node; the
    /// pooled series that lag selection runs on.
    pub fn pooled_values(&self, up_to: usize) -> Vec<f64> {
        let mut pooled = Vec::new();
        for node in &self.values {
            pooled.extend(node.iter().take(up_to).filter_map(|v| *v));
        }
        pooled
    }
}

/// Put all sites on one grid. Site start times must share the 30-minute
/// phase; differing spans are padded with gaps.
pub fn align_sites(sites: &[SiteSeries]) -> Result<AlignedPanel> {
    if sites.is_empty() {
        return Err(Error::Data("no sites to align".to_string()));
    }
    let start = sites.iter().map(|s| s.start).min().unwrap();
    let mut end = start;
    for site in sites {
        let offset = (site.start - start).num_minutes();
        if offset % STEP_MINUTES != 0 {
            return Err(Error::Data(format!(
                "site {} is not on the shared 30-minute grid (offset {offset} minutes)",
                site.site_id
            )));
        }
        let site_end = site.start + Duration::minutes(STEP_MINUTES * site.values.len() as i64);
        end = end.max(site_end);
    }
    let total = ((end - start).num_minutes() / STEP_MINUTES) as usize;
    let mut values = Vec::with_capacity(sites.len());
    for site in sites {
        let offset = ((site.start - start).num_minutes() / STEP_MINUTES) as usize;
        let mut row = vec![None; total];
        row[offset..offset + site.values.len()].copy_from_slice(&site.values);
        values.push(row);
    }
    Ok(AlignedPanel {
        start,
        node_ids: sites.iter().map(|s| s.site_id.clone()).collect(),
        coords: sites.iter().map(|s| (s.latitude, s.longitude)).collect(),
        values,
    })
}

// ── Synthetic data ──────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub nodes: usize,
    pub days: usize,
    /// Scales every stochastic amplitude; 0 gives a deterministic signal.
    pub noise: f64,
    pub seed: u64,
    /// Node placement override; defaults to a ring.
    pub coords: Option<Vec<(f64, f64)>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nodes: 5,
            days: 60,
            noise: 1.0,
            seed: 7,
            coords: None,
        }
    }
}

/// Everything needed to reconstruct the generating process, so tests can
/// compute true conditional moments.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub amplitude: f64,
    pub sunrise_step: usize,
    pub sunset_step: usize,
    pub kappa_base: f64,
    pub kappa_min: f64,
    pub shared_phi: f64,
    pub shared_innovation_std: f64,
    pub local_phi: f64,
    pub local_innovation_std: f64,
    pub idio_std: f64,
    pub kernel_scale: f64,
    pub coords: Vec<(f64, f64)>,
    pub noise: f64,
    pub seed: u64,
}

impl SynthTruth {
    /// Clear-sky value at a step index.
    pub fn clear_sky(&self, t: usize) -> f64 {
        let tod = t % STEPS_PER_DAY;
        if tod < self.sunrise_step || tod > self.sunset_step {
            return 0.0;
        }
        let span = (self.sunset_step - self.sunrise_step) as f64;
        let phase = (tod - self.sunrise_step) as f64 / span;
        self.amplitude * (std::f64::consts::PI * phase).sin()
    }

    /// Standard deviation of the one-step clearness innovation seen by a
    /// single node (shared + local + idiosyncratic, before clamping).
    pub fn one_step_kappa_std(&self) -> f64 {
        (self.shared_innovation_std.powi(2)
            + self.local_innovation_std.powi(2)
            + self.idio_std.powi(2))
        .sqrt()
            * self.noise
    }
}

/// Lower-triangular Cholesky factor with a tiny diagonal jitter so
/// duplicate (co-located) rows stay factorizable.
fn cholesky(matrix: &Tensor) -> Result<Tensor> {
    let n = matrix.rows();
    let mut l = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix.get(i, j);
            if i == j {
                sum += 1e-9;
            }
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Domain {
                        op: "cholesky",
                        detail: format!("non-positive pivot {sum} at {i}"),
                    });
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Generate synthetic site data plus the exact generator description.
pub fn synth_generate(config: &SynthConfig) -> Result<(Vec<SiteSeries>, SynthTruth)> {
    if config.nodes < 2 {
        return Err(Error::Config {
            field: "synth.nodes".to_string(),
            detail: "need at least 2 nodes".to_string(),
        });
    }
    if config.days < 2 {
        return Err(Error::Config {
            field: "synth.days".to_string(),
            detail: "need at least 2 days".to_string(),
        });
    }
    if config.noise < 0.0 {
        return Err(Error::Config {
            field: "synth.noise".to_string(),
            detail: "noise must be nonnegative".to_string(),
        });
    }
    let n = config.nodes;
    let coords: Vec<(f64, f64)> = match &config.coords {
        Some(c) => {
            if c.len() != n {
                return Err(Error::Config {
                    field: "synth.coords".to_string(),
                    detail: format!("expected {n} coordinate pairs, got {}", c.len()),
                });
            }
            c.clone()
        }
        None => (0..n)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (44.0 + 0.4 * angle.cos(), -87.0 + 0.4 * angle.sin())
            })
            .collect(),
    };

    let truth = SynthTruth {
        amplitude: 950.0,
        sunrise_step: 12,
        sunset_step: 36,
        kappa_base: 0.7,
        kappa_min: 0.05,
        shared_phi: 0.9,
        shared_innovation_std: 0.196,
        local_phi: 0.85,
        local_innovation_std: 0.079,
        idio_std: 0.04,
        kernel_scale: 0.5,
        coords: coords.clone(),
        noise: config.noise,
        seed: config.seed,
    };

    // Spatial mixing for the local cloud field.
    let mut kernel = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let dx = coords[i].0 - coords[j].0;
            let dy = coords[i].1 - coords[j].1;
            kernel.set(
                i,
                j,
                (-(dx * dx + dy * dy) / (truth.kernel_scale * truth.kernel_scale)).exp(),
            );
        }
    }
    let chol = cholesky(&kernel)?;

    let steps = config.days * STEPS_PER_DAY;
    let mut rng = Rng::seed_from(config.seed);
    let mut shared = 0.0f64;
    let mut local = vec![0.0f64; n];
    let mut series: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(steps); n];

    for t in 0..steps {
        shared = truth.shared_phi * shared
            + config.noise * truth.shared_innovation_std * rng.next_normal();
        let eps: Vec<f64> = rng.normal_vec(n);
        for i in 0..n {
            let mut mixed = 0.0;
            for k in 0..=i {
                mixed += chol.get(i, k) * eps[k];
            }
            local[i] = truth.local_phi * local[i]
                + config.noise * truth.local_innovation_std * mixed;
        }
        let cs = truth.clear_sky(t);
        for i in 0..n {
            let idio = config.noise * truth.idio_std * rng.next_normal();
            let kappa = (truth.kappa_base + shared + local[i] + idio)
                .clamp(truth.kappa_min, 1.0);
            series[i].push(Some(cs * kappa));
        }
    }

    let start = "2020-01-01T00:00:00Z"
        .parse::<DateTime<Utc>>()
        .expect("constant timestamp parses");
    let sites = (0..n)
        .map(|i| SiteSeries {
            site_id: format!("site{i:02}"),
            latitude: coords[i].0,
            longitude: coords[i].1,
            start,
            values: series[i].clone(),
        })
        .collect();
    Ok((sites, truth))
}
