//! Deep autoencoder built by unrolling a pretrained DBN, fine-tuned with
//! conjugate gradient on the cross-entropy between length-normalized word
//! counts and a softmax reconstruction.
//!
//! The bottom encoder layer keeps the replicated-softmax bias scaling, so its
//! pre-activation is `x·W + N·b` for a count vector `x` of length `N`. All
//! other hidden layers are deterministic sigmoids and the output layer is a
//! softmax over the vocabulary.
//!
//! Parameters flatten in a fixed order: encoder layers bottom-up, then
//! decoder layers from the code layer down; within a layer the weight
//! matrix row-major, then the bias.

use std::path::Path;

use ndarray::{linalg::general_mat_mul, Array1, Array2, ArrayView1, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::container::{Container, Tensor};
use crate::corpus::{self, BowDocument};
use crate::dbn::DbnModel;
use crate::math::{log_sum_exp, sigmoid, softmax_inplace};
use crate::optim::{minimize_cg, CgConfig};
use crate::{Error, Result};

/// One affine layer, `out = in·weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn n_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.ncols()
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Gaussian noise added to the code layer's input while fine-tuning. Each
/// (document, unit) pair gets one fixed draw, derived from the seed and the
/// doc_id, so the noise is identical in every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub mean: f64,
    pub variance: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            mean: 0.0,
            variance: 16.0,
            seed: 0,
        }
    }
}

// FNV-1a, stable across platforms and releases.
fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

impl NoiseConfig {
    /// The fixed noise vector for one document.
    pub fn draw(&self, doc_id: &str, dim: usize) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, doc_id.as_bytes()));
        let sd = self.variance.sqrt();
        (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.mean + sd * z
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite() && self.mean.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise needs a finite mean and variance >= 0, got ({}, {})",
                self.mean, self.variance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    encoder: Vec<DenseLayer>,
    decoder: Vec<DenseLayer>,
    noise: NoiseConfig,
}

impl AutoencoderModel {
    /// Checks that the decoder mirrors the encoder.
    pub fn new(encoder: Vec<DenseLayer>, decoder: Vec<DenseLayer>, noise: NoiseConfig) -> Result<Self> {
        if encoder.is_empty() || encoder.len() != decoder.len() {
            return Err(Error::Shape(format!(
                "{} encoder layers and {} decoder layers",
                encoder.len(),
                decoder.len()
            )));
        }
        for (t, l) in encoder.iter().chain(&decoder).enumerate() {
            if l.bias.len() != l.n_out() {
                return Err(Error::Shape(format!("layer {t}: bias does not match weights")));
            }
            if l.weights.iter().chain(&l.bias).any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {t}: non-finite parameter")));
            }
        }
        for (t, enc) in encoder.iter().enumerate() {
            let dec = &decoder[encoder.len() - 1 - t];
            if (dec.n_in(), dec.n_out()) != (enc.n_out(), enc.n_in()) {
                return Err(Error::Shape(format!(
                    "decoder layer {} is {}x{}, expected the transpose of encoder layer {t} ({}x{})",
                    encoder.len() - 1 - t,
                    dec.n_in(),
                    dec.n_out(),
                    enc.n_in(),
                    enc.n_out()
                )));
            }
        }
        for w in encoder.windows(2) {
            if w[0].n_out() != w[1].n_in() {
                return Err(Error::Shape("encoder layers do not chain".into()));
            }
        }
        noise.validate()?;
        Ok(Self {
            encoder,
            decoder,
            noise,
        })
    }

    pub fn encoder(&self) -> &[DenseLayer] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DenseLayer] {
        &self.decoder
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn set_noise(&mut self, noise: NoiseConfig) -> Result<()> {
        noise.validate()?;
        self.noise = noise;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.encoder[0].n_in()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder[self.encoder.len() - 1].n_out()
    }

    /// `[D, M1, ..., code, ..., M1, D]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.vocab_size())
            .chain(self.layers().map(DenseLayer::n_out))
            .collect()
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder.iter_mut().chain(&mut self.decoder)
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(DenseLayer::n_params).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for l in self.layers() {
            flat.extend(l.weights.iter());
            flat.extend(l.bias.iter());
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut rest = flat;
        for l in self.layers_mut() {
            for (w, &v) in l.weights.iter_mut().zip(rest) {
                *w = v;
            }
            rest = &rest[l.weights.len()..];
            for (b, &v) in l.bias.iter_mut().zip(rest) {
                *b = v;
            }
            rest = &rest[l.bias.len()..];
        }
        Ok(())
    }

    /// Code-layer activations with noise off.
    pub fn encode_dense(&self, doc: &BowDocument) -> Result<Array1<f64>> {
        check_doc(doc, self.vocab_size())?;
        let mut h = bottom_layer(&self.encoder[0], doc);
        for l in &self.encoder[1..] {
            h = l.weights.t().dot(&h) + &l.bias;
            h.mapv_inplace(sigmoid);
        }
        Ok(h)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let n = &self.noise;
        c.push(Tensor::vector(
            "noise_config",
            // The seed travels as its raw bit pattern.
            vec![f64::from(u8::from(n.enabled)), n.mean, n.variance, f64::from_bits(n.seed)],
        ));
        for (t, l) in self.encoder.iter().enumerate() {
            c.push(Tensor::from_array2(format!("enc{t}.W"), &l.weights));
            c.push(Tensor::from_array1(format!("enc{t}.b"), &l.bias));
        }
        for (t, l) in self.decoder.iter().enumerate() {
            c.push(Tensor::from_array2(format!("dec{t}.W"), &l.weights));
            c.push(Tensor::from_array1(format!("dec{t}.b"), &l.bias));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let noise = c.require("noise_config")?.to_array1()?;
        let &[enabled, mean, variance, seed] = noise.as_slice().expect("contiguous") else {
            return Err(Error::Format("noise_config must hold 4 values".into()));
        };
        let noise = NoiseConfig {
            enabled: match enabled {
                0.0 => false,
                1.0 => true,
                _ => return Err(Error::Format(format!("noise enabled flag {enabled}"))),
            },
            mean,
            variance,
            seed: seed.to_bits(),
        };
        let read = |prefix: &str| -> Result<Vec<DenseLayer>> {
            let mut layers = Vec::new();
            while let Some(w) = c.get(&format!("{prefix}{}.W", layers.len())) {
                let b = c.require(&format!("{prefix}{}.b", layers.len()))?;
                layers.push(DenseLayer {
                    weights: w.to_array2()?,
                    bias: b.to_array1()?,
                });
            }
            Ok(layers)
        };
        Self::new(read("enc")?, read("dec")?, noise)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.to_container().write(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_container(&Container::read(f)?)
    }
}

fn check_doc(doc: &BowDocument, vocab_size: usize) -> Result<()> {
    if doc.total() == 0 {
        return Err(Error::degenerate(doc.doc_id()));
    }
    doc.check_vocab(vocab_size)
}

/// `σ(x·W + N·b)` using the sparse counts directly.
fn bottom_layer(layer: &DenseLayer, doc: &BowDocument) -> Array1<f64> {
    let mut z = &layer.bias * doc.total() as f64;
    for (&i, &c) in doc.counts() {
        z.scaled_add(c as f64, &layer.weights.row(i));
    }
    z.mapv_inplace(sigmoid);
    z
}

/// Mirrors the stack: encoder layer `t` is RBM `t` (weights, hidden bias),
/// decoder layer `t` is RBM `L-1-t` transposed with its visible bias. The
/// decoder owns independent copies. Noise starts disabled.
pub fn unroll(dbn: &DbnModel) -> AutoencoderModel {
    let encoder = dbn
        .layers()
        .iter()
        .map(|l| DenseLayer {
            weights: l.weights().clone(),
            bias: l.hidden_bias().clone(),
        })
        .collect();
    let decoder = dbn
        .layers()
        .iter()
        .rev()
        .map(|l| DenseLayer {
            weights: l.weights().t().to_owned(),
            bias: l.visible_bias().clone(),
        })
        .collect();
    AutoencoderModel {
        encoder,
        decoder,
        noise: NoiseConfig::default(),
    }
}

/// Word counts divided by the document length.
pub fn normalize_input(doc: &BowDocument, vocab_size: usize) -> Result<Array1<f64>> {
    check_doc(doc, vocab_size)?;
    let n = doc.total() as f64;
    let mut p = Array1::zeros(vocab_size);
    for (&i, &c) in doc.counts() {
        p[i] = c as f64 / n;
    }
    Ok(p)
}

/// `−Σ_i t_i ln r_i`, with `0·ln 0` taken as 0.
pub fn cross_entropy(target: ArrayView1<'_, f64>, reconstruction: ArrayView1<'_, f64>) -> f64 {
    -Zip::from(&target)
        .and(&reconstruction)
        .fold(0.0, |acc, &t, &r| if t > 0.0 { acc + t * r.ln() } else { acc })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Output of every layer after the input, code layer included; the last
    /// entry equals `reconstruction`.
    pub activations: Vec<Array1<f64>>,
    pub reconstruction: Array1<f64>,
}

/// Full encoder/decoder pass for one document. Code noise is applied when
/// the model has it enabled.
pub fn forward(model: &AutoencoderModel, doc: &BowDocument) -> Result<ForwardPass> {
    let batch = Batch::new(model, &[doc])?;
    let out = batch.forward(model);
    let mut activations: Vec<Array1<f64>> = out
        .activations
        .iter()
        .map(|a| a.row(0).to_owned())
        .collect();
    let mut probs = out.logits.row(0).to_owned();
    softmax_inplace(probs.view_mut());
    activations.push(probs.clone());
    Ok(ForwardPass {
        activations,
        reconstruction: probs,
    })
}

/// Documents prepared for repeated evaluation: sparse normalized targets,
/// lengths and the fixed code noise.
struct Batch<'a> {
    docs: Vec<&'a BowDocument>,
    lengths: Array1<f64>,
    noise: Option<Array2<f64>>,
}

struct BatchOutput {
    /// Sigmoid activations of every layer except the softmax output.
    activations: Vec<Array2<f64>>,
    /// Pre-softmax output, one row per document.
    logits: Array2<f64>,
}

impl<'a> Batch<'a> {
    fn new(model: &AutoencoderModel, docs: &[&'a BowDocument]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        corpus::reject_degenerate(docs.iter().copied())?;
        for d in docs {
            d.check_vocab(model.vocab_size())?;
        }
        let noise = model.noise.enabled.then(|| {
            let k = model.code_dim();
            let mut m = Array2::zeros((docs.len(), k));
            for (mut row, d) in m.outer_iter_mut().zip(docs) {
                row.assign(&model.noise.draw(d.doc_id(), k));
            }
            m
        });
        Ok(Self {
            docs: docs.to_vec(),
            lengths: docs.iter().map(|d| d.total() as f64).collect(),
            noise,
        })
    }

    fn len(&self) -> usize {
        self.docs.len()
    }

    fn forward(&self, model: &AutoencoderModel) -> BatchOutput {
        let bottom = &model.encoder[0];
        let mut z = Array2::zeros((self.len(), bottom.n_out()));
        for ((mut row, d), &n) in z.outer_iter_mut().zip(&self.docs).zip(&self.lengths) {
            row.scaled_add(n, &bottom.bias);
            for (&i, &c) in d.counts() {
                row.scaled_add(c as f64, &bottom.weights.row(i));
            }
        }
        z.mapv_inplace(sigmoid);
        let mut activations = vec![z];

        let code_layer = model.encoder.len() - 1;
        let n_layers = 2 * model.encoder.len();
        for (t, layer) in model.layers().enumerate().skip(1) {
            let mut z = activations[t - 1].dot(&layer.weights);
            z += &layer.bias;
            if t == code_layer {
                if let Some(noise) = &self.noise {
                    z += noise;
                }
            }
            if t + 1 == n_layers {
                return BatchOutput { activations, logits: z };
            }
            z.mapv_inplace(sigmoid);
            activations.push(z);
        }
        unreachable!("the decoder always ends in the output layer")
    }

    /// Mean cross-entropy per row from the logits.
    fn loss(&self, logits: &Array2<f64>) -> f64 {
        let total: f64 = logits
            .outer_iter()
            .zip(&self.docs)
            .zip(&self.lengths)
            .map(|((z, d), &n)| {
                let lse = log_sum_exp(z.as_slice().expect("row-major logits"));
                let fit: f64 = d.counts().iter().map(|(&i, &c)| c as f64 / n * z[i]).sum();
                lse - fit
            })
            .sum();
        total / self.len() as f64
    }

    fn loss_and_gradient(&self, model: &AutoencoderModel) -> (f64, Vec<f64>) {
        let BatchOutput { activations, logits } = self.forward(model);
        let loss = self.loss(&logits);
        let inv_b = 1.0 / self.len() as f64;

        // δ at the output: (softmax − target) / B
        let mut delta = logits;
        for ((mut row, d), &n) in delta.outer_iter_mut().zip(&self.docs).zip(&self.lengths) {
            softmax_inplace(row.view_mut());
            for (&i, &c) in d.counts() {
                row[i] -= c as f64 / n;
            }
            row *= inv_b;
        }

        let layers: Vec<&DenseLayer> = model.layers().collect();
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(layers.len());
        for t in (0..layers.len()).rev() {
            let layer = layers[t];
            let (gw, gb) = if t == 0 {
                let mut gw = Array2::zeros(layer.weights.dim());
                for (dr, d) in delta.outer_iter().zip(&self.docs) {
                    for (&i, &c) in d.counts() {
                        gw.row_mut(i).scaled_add(c as f64, &dr);
                    }
                }
                let gb = delta.t().dot(&self.lengths);
                (gw, gb)
            } else {
                let input = &activations[t - 1];
                let mut gw = Array2::zeros(layer.weights.dim());
                general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut gw);
                let gb = delta.sum_axis(Axis(0));
                let mut back = delta.dot(&layer.weights.t());
                Zip::from(&mut back).and(input).for_each(|d, &a| *d *= a * (1.0 - a));
                delta = back;
                (gw, gb)
            };
            grads.push((gw, gb));
        }
        grads.reverse();

        let mut flat = Vec::with_capacity(model.n_params());
        for (gw, gb) in &grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        (loss, flat)
    }
}

/// Mean cross-entropy over `batch` and its exact gradient in flat order.
pub fn batch_loss_and_gradients(model: &AutoencoderModel, batch: &[BowDocument]) -> Result<(f64, Vec<f64>)> {
    let refs: Vec<&BowDocument> = batch.iter().collect();
    Ok(Batch::new(model, &refs)?.loss_and_gradient(model))
}

/// Mean cross-entropy over `docs` with the model's noise setting.
pub fn mean_loss(model: &AutoencoderModel, docs: &[BowDocument]) -> Result<f64> {
    let refs: Vec<&BowDocument> = docs.iter().collect();
    let batch = Batch::new(model, &refs)?;
    Ok(batch.loss(&batch.forward(model).logits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub line_searches: usize,
    /// Variance of the code-layer noise when binary codes are trained.
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 1000,
            line_searches: 3,
            noise_variance: 16.0,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.line_searches == 0 {
            return Err(Error::InvalidArgument(
                "fine-tuning batch size and line searches must be >= 1".into(),
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Loss on a batch before and after one [`cg_minimize`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Runs `config.line_searches` conjugate-gradient line searches on the
/// batch loss. The loss never increases.
pub fn cg_minimize(
    model: &AutoencoderModel,
    batch: &[BowDocument],
    config: &FinetuneConfig,
) -> Result<AutoencoderModel> {
    let refs: Vec<&BowDocument> = batch.iter().collect();
    cg_step(model, &refs, config).map(|(m, _)| m)
}

fn cg_step(
    model: &AutoencoderModel,
    docs: &[&BowDocument],
    config: &FinetuneConfig,
) -> Result<(AutoencoderModel, CgReport)> {
    let batch = Batch::new(model, docs)?;
    let mut scratch = model.clone();
    let cg = CgConfig {
        line_searches: config.line_searches,
        ..CgConfig::default()
    };
    let mut loss_before = None;
    let outcome = minimize_cg(
        |x| {
            scratch.set_flat(x)?;
            let (loss, grad) = batch.loss_and_gradient(&scratch);
            loss_before.get_or_insert(loss);
            Ok((loss, grad))
        },
        model.to_flat(),
        &cg,
    )?;
    let mut updated = model.clone();
    updated.set_flat(&outcome.x)?;
    let report = CgReport {
        loss_before: loss_before.expect("objective evaluated at the start"),
        loss_after: outcome.value,
    };
    Ok((updated, report))
}

/// Unrolls `dbn` and fine-tunes it for `config.epochs` passes over the
/// corpus in fixed batches. With `binary_target` the code layer gets fixed
/// Gaussian noise (mean 0, variance `config.noise_variance`, seeded by
/// `config.seed`), which pushes codes towards 0 or 1.
pub fn finetune(
    dbn: &DbnModel,
    corpus: &[BowDocument],
    config: &FinetuneConfig,
    binary_target: bool,
) -> Result<AutoencoderModel> {
    finetune_with(dbn, corpus, config, binary_target, |_, _| {})
}

/// [`finetune`], reporting `(epoch, mean batch loss after the CG step)`
/// after every epoch.
pub fn finetune_with<F>(
    dbn: &DbnModel,
    corpus: &[BowDocument],
    config: &FinetuneConfig,
    binary_target: bool,
    mut on_epoch: F,
) -> Result<AutoencoderModel>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus::reject_degenerate(corpus)?;
    let mut model = unroll(dbn);
    model.set_noise(NoiseConfig {
        enabled: binary_target,
        mean: 0.0,
        variance: config.noise_variance,
        seed: config.seed,
    })?;

    let refs: Vec<&BowDocument> = corpus.iter().collect();
    for epoch in 0..config.epochs {
        let mut weighted = 0.0;
        for chunk in refs.chunks(config.batch_size) {
            let (next, report) = cg_step(&model, chunk, config)?;
            weighted += report.loss_after * chunk.len() as f64;
            model = next;
        }
        let mean = weighted / corpus.len() as f64;
        log::info!("fine-tuning epoch {}: mean cross-entropy {mean:.6}", epoch + 1);
        on_epoch(epoch, mean);
    }
    Ok(model)
}
