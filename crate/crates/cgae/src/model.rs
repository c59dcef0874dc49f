//! The convolutional graph auto-encoder.
//!
//! Three stacks share one loss. Graph feature extraction applies
//! `O^k = ReLU(M O^{k-1} W^k)` over the renormalized propagation matrix,
//! turning the lagged history matrix into a compact representation. The
//! encoder maps that representation plus the observed target to the mean
//! and log-variance of a diagonal Gaussian over the latent vector; the
//! decoder maps the representation plus a latent draw back to a per-node
//! forecast. Training minimizes the KL of the encoder posterior against
//! the standard-normal prior plus the squared reconstruction error scaled
//! by the decoder likelihood variance, by per-example (or mini-batch) SGD.
//!
//! All randomness flows through a seeded [`Rng`]; a seed pins the whole
//! parameter trajectory.

use crate::autodiff::{sgd_step, Tape, VarId};
use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::rng::Rng;
use crate::spectral::PropagationMatrix;
use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;

const LOGVAR_CLAMP: f64 = 30.0;

/// Architecture and optimization hyperparameters.
///
/// Layer counts are the lengths of the width vectors; encoder and decoder
/// trunk widths default to a geometric interpolation between their input
/// and output sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub node_count: usize,
    pub feature_count: usize,
    pub latent_dim: usize,
    /// Output width of each graph feature extraction layer.
    pub gfenn_widths: Vec<usize>,
    /// Hidden widths of the encoder trunk.
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the decoder trunk.
    pub decoder_widths: Vec<usize>,
    /// SGD learning rate.
    pub eta: f64,
    /// Decoder likelihood standard deviation, in scaled units; also the
    /// weight 1/(2 sigma_dec^2) on the reconstruction error.
    pub sigma_dec: f64,
    pub seed: u64,
}

/// Round a geometric interpolation between `input` and `output` sizes.
pub fn geometric_widths(input: usize, output: usize, layers: usize) -> Vec<usize> {
    let (a, b) = (input.max(1) as f64, output.max(1) as f64);
    (1..=layers)
        .map(|j| {
            let frac = j as f64 / (layers + 1) as f64;
            (a.ln() + frac * (b.ln() - a.ln())).exp().round().max(2.0) as usize
        })
        .collect()
}

impl ModelConfig {
    /// Build a config with geometric encoder/decoder widths.
    #[allow(clippy::too_many_arguments)]
    pub fn with_geometry(
        node_count: usize,
        feature_count: usize,
        latent_dim: usize,
        gfenn_layers: usize,
        gfenn_width: usize,
        encoder_layers: usize,
        decoder_layers: usize,
        eta: f64,
        sigma_dec: f64,
        seed: u64,
    ) -> Self {
        let gfenn_widths = vec![gfenn_width; gfenn_layers];
        let rep = node_count * gfenn_width;
        ModelConfig {
            node_count,
            feature_count,
            latent_dim,
            gfenn_widths,
            encoder_widths: geometric_widths(rep + node_count, latent_dim, encoder_layers),
            decoder_widths: geometric_widths(rep + latent_dim, node_count, decoder_layers),
            eta,
            sigma_dec,
            seed,
        }
    }

    pub fn gfenn_layer_count(&self) -> usize {
        self.gfenn_widths.len()
    }

    /// Width of the flattened graph representation fed to both stacks.
    pub fn representation_len(&self) -> usize {
        self.node_count * self.gfenn_widths.last().copied().unwrap_or(self.feature_count)
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
        check(self.node_count >= 1, "node_count", "must be at least 1")?;
        check(self.feature_count >= 1, "feature_count", "must be at least 1")?;
        check(self.latent_dim >= 1, "latent_dim", "must be at least 1")?;
        check(!self.gfenn_widths.is_empty(), "gfenn_widths", "need at least one layer")?;
        check(!self.encoder_widths.is_empty(), "encoder_widths", "need at least one layer")?;
        check(!self.decoder_widths.is_empty(), "decoder_widths", "need at least one layer")?;
        check(
            self.gfenn_widths.iter().all(|&w| w >= 1)
                && self.encoder_widths.iter().all(|&w| w >= 1)
                && self.decoder_widths.iter().all(|&w| w >= 1),
            "widths",
            "every layer width must be at least 1",
        )?;
        check(self.eta > 0.0 && self.eta.is_finite(), "eta", "must be positive")?;
        check(
            self.sigma_dec > 0.0 && self.sigma_dec.is_finite(),
            "sigma_dec",
            "must be positive",
        )?;
        Ok(())
    }
}

/// A fully connected layer.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    weight: Tensor, // in x out
    bias: Tensor,   // 1 x out
}

impl Dense {
    fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: glorot(rng, fan_in, fan_out),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add(&self.bias)
    }
}

/// Uniform Glorot init in +-sqrt(6 / (fan_in + fan_out)).
fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform_in(-bound, bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape/len agree")
}

/// A latent draw together with the noise that produced it, so
/// `z = mu + alpha o sigma` stays reconstructible.
#[derive(Debug, Clone)]
pub struct LatentSample {
    pub z: Tensor,
    pub alpha: Tensor,
}

/// Per-epoch mean losses recorded during training.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
}

#[derive(Debug, Clone)]
pub struct CgaeModel {
    pub config: ModelConfig,
    propagation: Tensor,
    gfenn: Vec<Tensor>,
    encoder_trunk: Vec<Dense>,
    head_mu: Dense,
    head_logvar: Dense,
    decoder_trunk: Vec<Dense>,
    decoder_out: Dense,
    /// Training-split maximum value; inputs/targets divide by this before
    /// the network, forecasts multiply back on the way out.
    value_scale: f64,
}

struct TapedLoss {
    tape: Tape,
    loss: VarId,
    kl: VarId,
    recon: VarId,
    param_ids: Vec<VarId>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
}

impl CgaeModel {
    /// Initialize all weights from the config seed.
    pub fn init(config: ModelConfig, propagation: &PropagationMatrix) -> Result<Self> {
        config.validate()?;
        let n = config.node_count;
        if propagation.matrix.shape() != [n, n] {
            return Err(Error::ShapeMismatch {
                op: "model propagation",
                left: vec![n, n],
                right: propagation.matrix.shape().to_vec(),
            });
        }
        let mut rng = Rng::seed_from(config.seed);

        let mut gfenn = Vec::with_capacity(config.gfenn_widths.len());
        let mut prev = config.feature_count;
        for &w in &config.gfenn_widths {
            gfenn.push(glorot(&mut rng, prev, w));
            prev = w;
        }

        let rep = config.representation_len();
        let mut encoder_trunk = Vec::with_capacity(config.encoder_widths.len());
        let mut prev = rep + n;
        for &w in &config.encoder_widths {
            encoder_trunk.push(Dense::init(&mut rng, prev, w));
            prev = w;
        }
        let head_mu = Dense::init(&mut rng, prev, config.latent_dim);
        let head_logvar = Dense::init(&mut rng, prev, config.latent_dim);

        let mut decoder_trunk = Vec::with_capacity(config.decoder_widths.len());
        let mut prev = rep + config.latent_dim;
        for &w in &config.decoder_widths {
            decoder_trunk.push(Dense::init(&mut rng, prev, w));
            prev = w;
        }
        let decoder_out = Dense::init(&mut rng, prev, n);

        Ok(CgaeModel {
            config,
            propagation: propagation.matrix.clone(),
            gfenn,
            encoder_trunk,
            head_mu,
            head_logvar,
            decoder_trunk,
            decoder_out,
            value_scale: 1.0,
        })
    }

    pub fn propagation(&self) -> &Tensor {
        &self.propagation
    }

    pub fn value_scale(&self) -> f64 {
        self.value_scale
    }

    pub fn set_value_scale(&mut self, scale: f64) {
        self.value_scale = scale;
    }

    // ── Parameter access ────────────────────────────────────────────

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for k in 0..self.gfenn.len() {
            names.push(format!("gfenn.{k}"));
        }
        for i in 0..self.encoder_trunk.len() {
            names.push(format!("enc.{i}.w"));
            names.push(format!("enc.{i}.b"));
        }
        names.push("head_mu.w".into());
        names.push("head_mu.b".into());
        names.push("head_logvar.w".into());
        names.push("head_logvar.b".into());
        for i in 0..self.decoder_trunk.len() {
            names.push(format!("dec.{i}.w"));
            names.push(format!("dec.{i}.b"));
        }
        names.push("out.w".into());
        names.push("out.b".into());
        names
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut params: Vec<&Tensor> = Vec::new();
        params.extend(self.gfenn.iter());
        for layer in &self.encoder_trunk {
            params.push(&layer.weight);
            params.push(&layer.bias);
        }
        params.push(&self.head_mu.weight);
        params.push(&self.head_mu.bias);
        params.push(&self.head_logvar.weight);
        params.push(&self.head_logvar.bias);
        for layer in &self.decoder_trunk {
            params.push(&layer.weight);
            params.push(&layer.bias);
        }
        params.push(&self.decoder_out.weight);
        params.push(&self.decoder_out.bias);
        params
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut params: Vec<&mut Tensor> = Vec::new();
        params.extend(self.gfenn.iter_mut());
        for layer in &mut self.encoder_trunk {
            params.push(&mut layer.weight);
            params.push(&mut layer.bias);
        }
        params.push(&mut self.head_mu.weight);
        params.push(&mut self.head_mu.bias);
        params.push(&mut self.head_logvar.weight);
        params.push(&mut self.head_logvar.bias);
        for layer in &mut self.decoder_trunk {
            params.push(&mut layer.weight);
            params.push(&mut layer.bias);
        }
        params.push(&mut self.decoder_out.weight);
        params.push(&mut self.decoder_out.bias);
        params
    }

    pub fn param_entry_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    pub fn all_parameters_finite(&self) -> bool {
        self.parameters().iter().all(|t| t.all_finite())
    }

    // ── Plain (inference) forward paths ─────────────────────────────

    /// Stacked `O^k = ReLU(M O^{k-1} W^k)` starting from the history
    /// matrix; returns the final n-by-H representation.
    pub fn gfenn_forward(&self, pi: &Tensor) -> Result<Tensor> {
        if pi.shape() != [self.config.node_count, self.config.feature_count] {
            return Err(Error::ShapeMismatch {
                op: "gfenn_forward",
                left: vec![self.config.node_count, self.config.feature_count],
                right: pi.shape().to_vec(),
            });
        }
        let mut o = pi.clone();
        for w in &self.gfenn {
            o = self.propagation.matmul(&o)?.matmul(w)?.relu();
        }
        Ok(o)
    }

    /// Posterior parameters from the representation and the observed
    /// target: flatten-and-concatenate, trunk of ReLU layers, two linear
    /// heads. The log-variance head is clamped to +-30.
    pub fn encode(&self, representation: &Tensor, target: &Tensor) -> Result<(Tensor, Tensor)> {
        let flat = representation.reshape(&[1, representation.len()])?;
        let t = target.reshape(&[1, target.len()])?;
        let mut h = Tensor::concat_flat(&[&flat, &t]);
        for layer in &self.encoder_trunk {
            h = layer.forward(&h)?.relu();
        }
        let mu = self.head_mu.forward(&h)?.reshape(&[self.config.latent_dim])?;
        let logvar = self
            .head_logvar
            .forward(&h)?
            .map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))
            .reshape(&[self.config.latent_dim])?;
        Ok((mu, logvar))
    }

    /// Forecast mean from the representation and a latent draw.
    pub fn decode(&self, representation: &Tensor, z: &Tensor) -> Result<Tensor> {
        if z.len() != self.config.latent_dim {
            return Err(Error::ShapeMismatch {
                op: "decode",
                left: vec![self.config.latent_dim],
                right: z.shape().to_vec(),
            });
        }
        let flat = representation.reshape(&[1, representation.len()])?;
        let zf = z.reshape(&[1, z.len()])?;
        let mut h = Tensor::concat_flat(&[&flat, &zf]);
        for layer in &self.decoder_trunk {
            h = layer.forward(&h)?.relu();
        }
        self.decoder_out.forward(&h)?.reshape(&[self.config.node_count])
    }

    // ── Taped training path ─────────────────────────────────────────

    fn build_taped_loss(&self, pi: &Tensor, target: &Tensor, alpha: &Tensor) -> Result<TapedLoss> {
        let n = self.config.node_count;
        let d = self.config.latent_dim;
        let mut tape = Tape::new();
        let mut param_ids = Vec::with_capacity(self.parameters().len());

        let m_id = tape.leaf(self.propagation.clone());
        let pi_id = tape.leaf(pi.clone());
        let target_id = tape.leaf(target.reshape(&[1, n])?);
        let alpha_id = tape.leaf(alpha.reshape(&[1, d])?);

        // Graph feature extraction.
        let mut o = pi_id;
        for w in &self.gfenn {
            let w_id = tape.leaf(w.clone());
            param_ids.push(w_id);
            let mo = tape.matmul(m_id, o)?;
            let ow = tape.matmul(mo, w_id)?;
            o = tape.relu(ow);
        }
        let rep = tape.reshape(o, &[1, self.config.representation_len()])?;

        let dense = |tape: &mut Tape, x: VarId, layer: &Dense, ids: &mut Vec<VarId>| -> Result<VarId> {
            let w_id = tape.leaf(layer.weight.clone());
            let b_id = tape.leaf(layer.bias.clone());
            ids.push(w_id);
            ids.push(b_id);
            let xw = tape.matmul(x, w_id)?;
            tape.add(xw, b_id)
        };

        // Encoder.
        let mut h = tape.concat(&[rep, target_id]);
        for layer in &self.encoder_trunk {
            let lin = dense(&mut tape, h, layer, &mut param_ids)?;
            h = tape.relu(lin);
        }
        let mu = dense(&mut tape, h, &self.head_mu, &mut param_ids)?;
        let logvar_raw = dense(&mut tape, h, &self.head_logvar, &mut param_ids)?;
        let logvar = tape.clamp(logvar_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP);

        // Reparameterized latent; gradients reach mu and logvar, alpha is
        // a constant leaf.
        let half_logvar = tape.scale(logvar, 0.5);
        let sigma = tape.exp(half_logvar);
        let scaled_noise = tape.mul(alpha_id, sigma)?;
        let z = tape.add(mu, scaled_noise)?;

        // Decoder.
        let mut h = tape.concat(&[rep, z]);
        for layer in &self.decoder_trunk {
            let lin = dense(&mut tape, h, layer, &mut param_ids)?;
            h = tape.relu(lin);
        }
        let v_hat = dense(&mut tape, h, &self.decoder_out, &mut param_ids)?;

        // KL of the diagonal posterior against N(0, I):
        // 0.5 * sum(exp(lv) - lv + mu^2) - d/2.
        let exp_lv = tape.exp(logvar);
        let no_lv = tape.sub(exp_lv, logvar)?;
        let mu_sq = tape.square(mu);
        let inner = tape.add(no_lv, mu_sq)?;
        let summed = tape.sum(inner);
        let shifted = tape.offset(summed, -(d as f64));
        let kl = tape.scale(shifted, 0.5);

        // Squared reconstruction error, weighted by the likelihood variance.
        let diff = tape.sub(target_id, v_hat)?;
        let sq = tape.square(diff);
        let recon = tape.sum(sq);
        let weight = 1.0 / (2.0 * self.config.sigma_dec * self.config.sigma_dec);
        let weighted = tape.scale(recon, weight);
        let loss = tape.add(kl, weighted)?;

        Ok(TapedLoss {
            tape,
            loss,
            kl,
            recon,
            param_ids,
        })
    }

    /// Total loss (and its parts) for one example under fixed latent
    /// noise. Pure in the parameters, which makes it the reference point
    /// for finite-difference checks.
    pub fn loss_with_noise(&self, pi: &Tensor, target: &Tensor, alpha: &Tensor) -> Result<LossParts> {
        let taped = self.build_taped_loss(pi, target, alpha)?;
        Ok(LossParts {
            total: taped.tape.value(taped.loss).data()[0],
            kl: taped.tape.value(taped.kl).data()[0],
            recon: taped.tape.value(taped.recon).data()[0],
        })
    }

    /// Loss parts plus one gradient per parameter, ordered as
    /// [`CgaeModel::parameters`].
    pub fn grads_with_noise(
        &self,
        pi: &Tensor,
        target: &Tensor,
        alpha: &Tensor,
    ) -> Result<(LossParts, Vec<Vec<f64>>)> {
        let mut taped = self.build_taped_loss(pi, target, alpha)?;
        taped.tape.backward(taped.loss)?;
        let grads = taped
            .param_ids
            .iter()
            .map(|&id| taped.tape.grad(id).to_vec())
            .collect();
        Ok((
            LossParts {
                total: taped.tape.value(taped.loss).data()[0],
                kl: taped.tape.value(taped.kl).data()[0],
                recon: taped.tape.value(taped.recon).data()[0],
            },
            grads,
        ))
    }

    /// Smallest |x| seen at any ReLU input during a forward pass; used by
    /// gradient checks to stay away from the kink.
    pub fn relu_margin(&self, pi: &Tensor, target: &Tensor, alpha: &Tensor) -> Result<f64> {
        let taped = self.build_taped_loss(pi, target, alpha)?;
        Ok(taped.tape.relu_kink_margin().unwrap_or(f64::INFINITY))
    }

    // ── Training ────────────────────────────────────────────────────

    /// Seeded SGD over the dataset. Examples are visited in a fresh random
    /// permutation each epoch; gradients are averaged over `batch_size`
    /// examples before each update. Inputs and targets are divided by the
    /// training-split maximum, which is stored on the model for forecast
    /// rescaling. Returns per-epoch mean losses.
    pub fn train(
        &mut self,
        dataset: &Dataset,
        epochs: usize,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<Vec<EpochStats>> {
        if epochs == 0 {
            return Ok(Vec::new());
        }
        if dataset.examples.is_empty() {
            return Err(Error::Usage("cannot train on an empty dataset".to_string()));
        }
        if batch_size == 0 {
            return Err(Error::Usage("batch_size must be at least 1".to_string()));
        }
        if dataset.node_count != self.config.node_count
            || dataset.lags.len() != self.config.feature_count
        {
            return Err(Error::ShapeMismatch {
                op: "train dataset",
                left: vec![self.config.node_count, self.config.feature_count],
                right: vec![dataset.node_count, dataset.lags.len()],
            });
        }

        let mut max_value = 0.0f64;
        for ex in &dataset.examples {
            for &v in ex.pi.data().iter().chain(ex.target.data()) {
                max_value = max_value.max(v.abs());
            }
        }
        if max_value <= 0.0 {
            return Err(Error::Data(
                "training data is identically zero; nothing to scale against".to_string(),
            ));
        }
        self.value_scale = max_value;
        let inv = 1.0 / max_value;
        let scaled: Vec<(Tensor, Tensor)> = dataset
            .examples
            .iter()
            .map(|ex| (ex.pi.scale(inv), ex.target.scale(inv)))
            .collect();

        let d = self.config.latent_dim;
        let names = self.param_names();
        let mut trace = Vec::with_capacity(epochs);
        let mut order: Vec<usize> = (0..scaled.len()).collect();

        for epoch in 0..epochs {
            rng.shuffle(&mut order);
            let mut sums = (0.0, 0.0, 0.0);
            for batch in order.chunks(batch_size) {
                let mut acc: Option<Vec<Vec<f64>>> = None;
                for &idx in batch {
                    let (pi, target) = &scaled[idx];
                    let alpha = rng.normal_tensor(&[1, d]);
                    let (parts, grads) = self
                        .grads_with_noise(pi, target, &alpha)
                        .map_err(|e| training_context(e, epoch, idx))?;
                    if !parts.total.is_finite() {
                        return Err(Error::Training {
                            epoch,
                            example: idx,
                            detail: format!("non-finite loss {}", parts.total),
                        });
                    }
                    sums.0 += parts.total;
                    sums.1 += parts.kl;
                    sums.2 += parts.recon;
                    match &mut acc {
                        None => acc = Some(grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&grads) {
                                for (x, y) in a.iter_mut().zip(g) {
                                    *x += y;
                                }
                            }
                        }
                    }
                }
                let acc = acc.expect("batch is nonempty");
                let eta = self.config.eta / batch.len() as f64;
                let first_example = batch[0];
                for ((param, grad), name) in
                    self.parameters_mut().into_iter().zip(&acc).zip(&names)
                {
                    sgd_step(param, grad, eta, name)
                        .map_err(|e| training_context(e, epoch, first_example))?;
                }
            }
            let m = scaled.len() as f64;
            trace.push(EpochStats {
                total: sums.0 / m,
                kl: sums.1 / m,
                recon: sums.2 / m,
            });
        }
        Ok(trace)
    }

    // ── Checkpoint format ───────────────────────────────────────────
    //
    //   cgae-checkpoint v1
    //   <key> = <value>        (config fields + value_scale)
    //   tensor <name> <d0> <d1> ...
    //   <one line of values per leading-dimension row>
    //
    // Values use shortest-roundtrip decimal text, so a save/load cycle is
    // bit-exact.

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("cgae-checkpoint v1\n");
        let cfg = &self.config;
        let list = |v: &[usize]| {
            v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!("node_count = {}\n", cfg.node_count));
        out.push_str(&format!("feature_count = {}\n", cfg.feature_count));
        out.push_str(&format!("latent_dim = {}\n", cfg.latent_dim));
        out.push_str(&format!("gfenn_widths = {}\n", list(&cfg.gfenn_widths)));
        out.push_str(&format!("encoder_widths = {}\n", list(&cfg.encoder_widths)));
        out.push_str(&format!("decoder_widths = {}\n", list(&cfg.decoder_widths)));
        out.push_str(&format!("eta = {}\n", cfg.eta));
        out.push_str(&format!("sigma_dec = {}\n", cfg.sigma_dec));
        out.push_str(&format!("seed = {}\n", cfg.seed));
        out.push_str(&format!("value_scale = {}\n", self.value_scale));

        let mut dump = |name: &str, t: &Tensor| {
            let dims = t
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("tensor {name} {dims}\n"));
            let row_len = if t.is_matrix() { t.cols() } else { t.len() };
            for row in t.data().chunks(row_len) {
                let line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
                out.push_str(&line);
                out.push('\n');
            }
        };
        dump("propagation", &self.propagation);
        let names = self.param_names();
        for (name, tensor) in names.iter().zip(self.parameters()) {
            dump(name, tensor);
        }

        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().peekable();
        let parse_err = |line: usize, detail: String| Error::Parse {
            path: path.display().to_string(),
            line: line + 1,
            detail,
        };

        match lines.next() {
            Some((_, "cgae-checkpoint v1")) => {}
            other => {
                return Err(parse_err(
                    0,
                    format!("expected `cgae-checkpoint v1` header, got {other:?}"),
                ))
            }
        }

        let mut fields = std::collections::BTreeMap::new();
        while let Some(&(_, line)) = lines.peek() {
            if line.starts_with("tensor ") {
                break;
            }
            let (lineno, line) = lines.next().unwrap();
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(lineno, format!("expected `key = value`, got `{line}`")))?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }

        let get = |key: &str| -> Result<&String> {
            fields.get(key).ok_or_else(|| Error::Data(format!(
                "checkpoint is missing field `{key}`"
            )))
        };
        let usize_list = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .map(|f| {
                    f.trim().parse::<usize>().map_err(|_| {
                        Error::Data(format!("bad width list entry `{f}` in checkpoint"))
                    })
                })
                .collect()
        };
        let config = ModelConfig {
            node_count: get("node_count")?.parse().map_err(|_| Error::Data("bad node_count".into()))?,
            feature_count: get("feature_count")?.parse().map_err(|_| Error::Data("bad feature_count".into()))?,
            latent_dim: get("latent_dim")?.parse().map_err(|_| Error::Data("bad latent_dim".into()))?,
            gfenn_widths: usize_list(get("gfenn_widths")?)?,
            encoder_widths: usize_list(get("encoder_widths")?)?,
            decoder_widths: usize_list(get("decoder_widths")?)?,
            eta: get("eta")?.parse().map_err(|_| Error::Data("bad eta".into()))?,
            sigma_dec: get("sigma_dec")?.parse().map_err(|_| Error::Data("bad sigma_dec".into()))?,
            seed: get("seed")?.parse().map_err(|_| Error::Data("bad seed".into()))?,
        };
        let value_scale: f64 = get("value_scale")?
            .parse()
            .map_err(|_| Error::Data("bad value_scale".into()))?;

        // Read tensor sections.
        let mut tensors: Vec<(String, Tensor)> = Vec::new();
        while let Some((lineno, line)) = lines.next() {
            let rest = line
                .strip_prefix("tensor ")
                .ok_or_else(|| parse_err(lineno, format!("expected tensor section, got `{line}`")))?;
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| parse_err(lineno, "tensor section missing name".into()))?
                .to_string();
            let shape: Vec<usize> = parts
                .map(|p| p.parse::<usize>().map_err(|_| parse_err(lineno, format!("bad dim `{p}`"))))
                .collect::<Result<_>>()?;
            let rows = if shape.len() == 2 { shape[0] } else { 1 };
            let mut data = Vec::with_capacity(shape.iter().product());
            for _ in 0..rows {
                let (lineno, line) = lines
                    .next()
                    .ok_or_else(|| Error::Data(format!("truncated tensor `{name}`")))?;
                for field in line.split_whitespace() {
                    data.push(field.parse::<f64>().map_err(|_| {
                        parse_err(lineno, format!("bad value `{field}` in tensor `{name}`"))
                    })?);
                }
            }
            tensors.push((name, Tensor::new(shape, data)?));
        }

        let propagation = tensors
            .iter()
            .find(|(n, _)| n == "propagation")
            .map(|(_, t)| t.clone())
            .ok_or_else(|| Error::Data("checkpoint is missing the propagation matrix".into()))?;
        let mut model = CgaeModel::init(config, &PropagationMatrix { matrix: propagation })?;
        model.value_scale = value_scale;

        let names = model.param_names();
        for (name, param) in names.iter().zip(model.parameters_mut()) {
            let loaded = tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Data(format!("checkpoint is missing tensor `{name}`")))?;
            if loaded.shape() != param.shape() {
                return Err(Error::Data(format!(
                    "checkpoint tensor `{name}` has shape {:?}, expected {:?}",
                    loaded.shape(),
                    param.shape()
                )));
            }
            *param = loaded;
        }
        Ok(model)
    }
}

fn training_context(e: Error, epoch: usize, example: usize) -> Error {
    match e {
        Error::Training { detail, .. } => Error::Training { epoch, example, detail },
        other => other,
    }
}

/// Draw the latent noise and form `z = mu + alpha o exp(logvar / 2)`.
/// Log-variances are clamped to +-30 before exponentiation.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, rng: &mut Rng) -> LatentSample {
    let alpha = rng.normal_tensor(&[mu.len()]);
    let sigma = logvar.map(|v| (0.5 * v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).exp());
    let z = mu
        .add(&alpha.mul(&sigma).expect("shapes match"))
        .expect("shapes match");
    LatentSample { z, alpha }
}

/// Closed-form KL of a diagonal Gaussian against N(0, I):
/// `0.5 * sum_i (-logvar_i - 1 + exp(logvar_i) + mu_i^2)`.
pub fn kl_loss(mu: &Tensor, logvar: &Tensor) -> f64 {
    debug_assert_eq!(mu.len(), logvar.len());
    let mut acc = 0.0;
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        acc += (lv.exp() - lv) + m * m;
    }
    0.5 * (acc - mu.len() as f64)
}

/// Sum of squared differences over the nodes.
pub fn recon_loss(target: &Tensor, v_hat: &Tensor) -> Result<f64> {
    if target.shape() != v_hat.shape() {
        return Err(Error::ShapeMismatch {
            op: "recon_loss",
            left: target.shape().to_vec(),
            right: v_hat.shape().to_vec(),
        });
    }
    Ok(target
        .data()
        .iter()
        .zip(v_hat.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}
