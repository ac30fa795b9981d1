//! Restricted Boltzmann machines with either binary visible units or
//! replicated-softmax (multinomial) visible units, trained by CD-1.
//!
//! For the replicated softmax case the visible vector holds word counts and
//! the hidden biases are multiplied by the document length N, so
//! `p(h_j = 1 | v) = σ(N·a_j + Σ_i v_i W_ij)`.

use std::ops::Range;

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{self, BowDocument};
use crate::math::{sigmoid, softmax_rows_inplace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibleKind {
    /// Replicated softmax over a vocabulary, fed with word counts.
    Multinomial,
    Binary,
}

/// Weights `W` (visible × hidden), visible biases `b` and hidden biases `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmLayer {
    weights: Array2<f64>,
    visible_bias: Array1<f64>,
    hidden_bias: Array1<f64>,
    kind: VisibleKind,
}

impl RbmLayer {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        kind: VisibleKind,
    ) -> Result<Self> {
        if weights.dim() != (visible_bias.len(), hidden_bias.len()) {
            return Err(Error::Shape(format!(
                "weights {:?} do not match {} visible / {} hidden biases",
                weights.dim(),
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let layer = Self {
            weights,
            visible_bias,
            hidden_bias,
            kind,
        };
        if !layer.is_finite() {
            return Err(Error::InvalidArgument("non-finite RBM parameter".into()));
        }
        Ok(layer)
    }

    pub fn zeros(n_visible: usize, n_hidden: usize, kind: VisibleKind) -> Self {
        Self {
            weights: Array2::zeros((n_visible, n_hidden)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
            kind,
        }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.hidden_bias
    }

    pub fn kind(&self) -> VisibleKind {
        self.kind
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0002,
            epochs: 50,
            batch_size: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        Ok(())
    }
}

/// Previous parameter deltas, carried between updates for momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub prev_weights: Array2<f64>,
    pub prev_hidden_bias: Array1<f64>,
    pub prev_visible_bias: Array1<f64>,
}

impl MomentumState {
    pub fn zeros_like(layer: &RbmLayer) -> Self {
        Self {
            prev_weights: Array2::zeros(layer.weights.dim()),
            prev_hidden_bias: Array1::zeros(layer.n_hidden()),
            prev_visible_bias: Array1::zeros(layer.n_visible()),
        }
    }
}

/// Batch-mean CD statistics: data term minus reconstruction term.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_bias: Array1<f64>,
}

impl Gradients {
    /// `⟨v hᵀ⟩_data − ⟨v hᵀ⟩_recon` and the matching bias terms, averaged
    /// over the rows of the four (batch × units) matrices.
    pub fn from_phases(
        v_data: ArrayView2<'_, f64>,
        h_data: ArrayView2<'_, f64>,
        v_recon: ArrayView2<'_, f64>,
        h_recon: ArrayView2<'_, f64>,
    ) -> Self {
        let inv = 1.0 / v_data.nrows() as f64;
        let mut weights = Array2::zeros((v_data.ncols(), h_data.ncols()));
        general_mat_mul(inv, &v_data.t(), &h_data, 0.0, &mut weights);
        general_mat_mul(-inv, &v_recon.t(), &h_recon, 1.0, &mut weights);
        let hidden_bias = (&h_data - &h_recon).sum_axis(Axis(0)) * inv;
        let visible_bias = (&v_data - &v_recon).sum_axis(Axis(0)) * inv;
        Self {
            weights,
            hidden_bias,
            visible_bias,
        }
    }
}

/// A borrowed batch of visible vectors, with document lengths for the
/// multinomial case.
#[derive(Debug, Clone, Copy)]
pub struct VisibleBatch<'a> {
    values: ArrayView2<'a, f64>,
    doc_lengths: Option<&'a [u64]>,
}

impl<'a> VisibleBatch<'a> {
    /// `doc_lengths` must be present (one positive entry per row) exactly
    /// when the batch feeds a multinomial layer.
    pub fn new(values: ArrayView2<'a, f64>, doc_lengths: Option<&'a [u64]>) -> Result<Self> {
        if let Some(lengths) = doc_lengths {
            if lengths.len() != values.nrows() {
                return Err(Error::Shape(format!(
                    "{} document lengths for {} rows",
                    lengths.len(),
                    values.nrows()
                )));
            }
            if let Some(r) = lengths.iter().position(|&n| n == 0) {
                return Err(Error::degenerate(format!("row {r}")));
            }
        }
        Ok(Self {
            values,
            doc_lengths,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values(&self) -> ArrayView2<'a, f64> {
        self.values
    }

    pub fn doc_lengths(&self) -> Option<&'a [u64]> {
        self.doc_lengths
    }

    fn check(&self, layer: &RbmLayer) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.values.ncols() != layer.n_visible() {
            return Err(Error::Shape(format!(
                "batch has {} visible units, layer expects {}",
                self.values.ncols(),
                layer.n_visible()
            )));
        }
        match (layer.kind, self.doc_lengths) {
            (VisibleKind::Multinomial, None) => Err(Error::InvalidArgument(
                "multinomial layer needs document lengths".into(),
            )),
            (VisibleKind::Binary, Some(_)) => Err(Error::InvalidArgument(
                "binary layer takes no document lengths".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Owned training data for one RBM: a dense (n × visible) matrix plus
/// document lengths when the rows are word counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleData {
    values: Array2<f64>,
    doc_lengths: Option<Vec<u64>>,
}

impl VisibleData {
    /// Word-count rows for a replicated softmax layer.
    pub fn counts(docs: &[BowDocument], vocab_size: usize) -> Result<Self> {
        corpus::reject_degenerate(docs)?;
        for d in docs {
            d.check_vocab(vocab_size)?;
        }
        let refs: Vec<&BowDocument> = docs.iter().collect();
        Ok(Self {
            values: corpus::dense_counts(&refs, vocab_size),
            doc_lengths: Some(docs.iter().map(BowDocument::total).collect()),
        })
    }

    /// Rows of values in [0, 1] for a binary layer.
    pub fn binary(values: Array2<f64>) -> Self {
        Self {
            values,
            doc_lengths: None,
        }
    }

    pub fn kind(&self) -> VisibleKind {
        if self.doc_lengths.is_some() {
            VisibleKind::Multinomial
        } else {
            VisibleKind::Binary
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_visible(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn batch(&self, rows: Range<usize>) -> VisibleBatch<'_> {
        VisibleBatch {
            values: self.values.slice(s![rows.clone(), ..]),
            doc_lengths: self.doc_lengths.as_deref().map(|l| &l[rows]),
        }
    }

    pub fn all(&self) -> VisibleBatch<'_> {
        self.batch(0..self.len())
    }
}

fn bias_scale(layer: &RbmLayer, doc_length: Option<u64>) -> Result<f64> {
    match (layer.kind, doc_length) {
        (VisibleKind::Multinomial, Some(0)) => Err(Error::degenerate("doc_length = 0")),
        (VisibleKind::Multinomial, Some(n)) => Ok(n as f64),
        (VisibleKind::Multinomial, None) => Err(Error::InvalidArgument(
            "multinomial layer needs the document length".into(),
        )),
        (VisibleKind::Binary, None) => Ok(1.0),
        (VisibleKind::Binary, Some(_)) => Err(Error::InvalidArgument(
            "binary layer takes no document length".into(),
        )),
    }
}

/// `p(h_j = 1 | v) = σ(c·a_j + Σ_i v_i W_ij)` with `c` the document length
/// for multinomial layers and 1 otherwise.
pub fn hidden_prob(
    visible: ArrayView1<'_, f64>,
    layer: &RbmLayer,
    doc_length: Option<u64>,
) -> Result<Array1<f64>> {
    let scale = bias_scale(layer, doc_length)?;
    if visible.len() != layer.n_visible() {
        return Err(Error::Shape(format!(
            "visible vector of length {}, layer expects {}",
            visible.len(),
            layer.n_visible()
        )));
    }
    let mut z = visible.dot(&layer.weights);
    Zip::from(&mut z)
        .and(&layer.hidden_bias)
        .for_each(|z, &a| *z = sigmoid(*z + scale * a));
    Ok(z)
}

/// Batched [`hidden_prob`]: one row of probabilities per batch row.
pub fn hidden_prob_batch(batch: VisibleBatch<'_>, layer: &RbmLayer) -> Result<Array2<f64>> {
    batch.check(layer)?;
    Ok(hidden_probs(batch.values, batch.doc_lengths, layer))
}

fn hidden_probs(values: ArrayView2<'_, f64>, lengths: Option<&[u64]>, layer: &RbmLayer) -> Array2<f64> {
    let mut z = values.dot(&layer.weights);
    for (r, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let scale = lengths.map_or(1.0, |l| l[r] as f64);
        Zip::from(&mut row)
            .and(&layer.hidden_bias)
            .for_each(|z, &a| *z = sigmoid(*z + scale * a));
    }
    z
}

/// Independent Bernoulli draws, one uniform per entry in iteration order.
pub fn sample_bernoulli<R: Rng + ?Sized>(probs: ArrayView1<'_, f64>, rng: &mut R) -> Array1<f64> {
    probs.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// `p(v_i = 1 | h) = σ(b_i + Σ_j h_j W_ij)` for binary visible units.
pub fn visible_prob_binary(hidden: ArrayView1<'_, f64>, layer: &RbmLayer) -> Result<Array1<f64>> {
    if layer.kind != VisibleKind::Binary {
        return Err(Error::InvalidArgument(
            "visible_prob_binary on a multinomial layer".into(),
        ));
    }
    let mut z = visible_logits(hidden, layer)?;
    z.mapv_inplace(sigmoid);
    Ok(z)
}

/// Softmax over the vocabulary of `b_i + Σ_j h_j W_ij`.
pub fn visible_softmax(hidden: ArrayView1<'_, f64>, layer: &RbmLayer) -> Result<Array1<f64>> {
    let mut z = visible_logits(hidden, layer)?;
    crate::math::softmax_inplace(z.view_mut());
    Ok(z)
}

fn visible_logits(hidden: ArrayView1<'_, f64>, layer: &RbmLayer) -> Result<Array1<f64>> {
    if hidden.len() != layer.n_hidden() {
        return Err(Error::Shape(format!(
            "hidden vector of length {}, layer expects {}",
            hidden.len(),
            layer.n_hidden()
        )));
    }
    Ok(layer.weights.dot(&hidden) + &layer.visible_bias)
}

/// Mean-field counts: the document length times the word distribution.
pub fn reconstruct_counts(dist: ArrayView1<'_, f64>, doc_length: u64) -> Array1<f64> {
    dist.mapv(|p| p * doc_length as f64)
}

/// Result of one CD-1 pass over a batch.
#[derive(Debug, Clone)]
pub struct Cd1Step {
    pub gradients: Gradients,
    /// Mean cross-entropy between the data and its one-step reconstruction.
    pub reconstruction_error: f64,
}

/// CD-1 gradient estimate for a batch.
///
/// Positive phase uses hidden probabilities. One binary hidden sample is
/// drawn per unit (row-major over the batch), the visible layer is
/// reconstructed mean-field (expected counts `N·softmax` for multinomial
/// layers, probabilities for binary ones), and the negative phase uses the
/// hidden probabilities of that reconstruction.
pub fn cd1_gradients<R: Rng + ?Sized>(
    batch: VisibleBatch<'_>,
    layer: &RbmLayer,
    rng: &mut R,
) -> Result<Gradients> {
    cd1_step(batch, layer, rng).map(|s| s.gradients)
}

pub fn cd1_step<R: Rng + ?Sized>(batch: VisibleBatch<'_>, layer: &RbmLayer, rng: &mut R) -> Result<Cd1Step> {
    batch.check(layer)?;
    let v_data = batch.values;
    let lengths = batch.doc_lengths;

    let h_data = hidden_probs(v_data, lengths, layer);
    let h_sample = h_data.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });

    let mut v_recon = h_sample.dot(&layer.weights.t());
    v_recon += &layer.visible_bias;
    let reconstruction_error = match lengths {
        Some(lengths) => {
            softmax_rows_inplace(v_recon.view_mut());
            let mut err = 0.0;
            for ((v, mut p), &n) in v_data.outer_iter().zip(v_recon.outer_iter_mut()).zip(lengths) {
                let n = n as f64;
                err -= Zip::from(&v)
                    .and(&p)
                    .fold(0.0, |acc, &c, &q| if c > 0.0 { acc + c / n * q.ln() } else { acc });
                p *= n;
            }
            err
        }
        None => {
            v_recon.mapv_inplace(sigmoid);
            -Zip::from(&v_data).and(&v_recon).fold(0.0, |acc, &x, &p| {
                let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                acc + x * p.ln() + (1.0 - x) * (1.0 - p).ln()
            })
        }
    } / batch.len() as f64;

    let h_recon = hidden_probs(v_recon.view(), lengths, layer);
    Ok(Cd1Step {
        gradients: Gradients::from_phases(v_data, h_data.view(), v_recon.view(), h_recon.view()),
        reconstruction_error,
    })
}

/// Momentum step with weight decay on the weights only:
/// `Δ = m·Δ_prev + ε·(grad − λ·W)` for weights, `Δ = m·Δ_prev + ε·grad` for
/// biases. The new deltas replace the momentum state.
pub fn apply_update(
    layer: &mut RbmLayer,
    grads: &Gradients,
    state: &mut MomentumState,
    config: &TrainConfig,
) {
    let (eps, m, decay) = (config.learning_rate, config.momentum, config.weight_decay);
    Zip::from(&mut layer.weights)
        .and(&mut state.prev_weights)
        .and(&grads.weights)
        .for_each(|w, prev, &g| {
            *prev = m * *prev + eps * (g - decay * *w);
            *w += *prev;
        });
    Zip::from(&mut layer.hidden_bias)
        .and(&mut state.prev_hidden_bias)
        .and(&grads.hidden_bias)
        .for_each(|a, prev, &g| {
            *prev = m * *prev + eps * g;
            *a += *prev;
        });
    Zip::from(&mut layer.visible_bias)
        .and(&mut state.prev_visible_bias)
        .and(&grads.visible_bias)
        .for_each(|b, prev, &g| {
            *prev = m * *prev + eps * g;
            *b += *prev;
        });
}

/// Weights drawn from N(0, 0.01) (standard deviation 0.1), biases zero.
pub fn init_layer<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, kind: VisibleKind, rng: &mut R) -> RbmLayer {
    let normal = Normal::new(0.0, 0.1).expect("valid normal");
    let mut layer = RbmLayer::zeros(n_visible, n_hidden, kind);
    layer.weights.mapv_inplace(|_| normal.sample(rng));
    layer
}

/// Trains one RBM; the visible kind follows the data.
pub fn train_rbm(data: &VisibleData, n_hidden: usize, config: &TrainConfig) -> Result<RbmLayer> {
    train_rbm_with(data, n_hidden, config, |_, _| {})
}

/// [`train_rbm`], reporting `(epoch, mean reconstruction error)` after
/// every epoch.
pub fn train_rbm_with<F>(
    data: &VisibleData,
    n_hidden: usize,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<RbmLayer>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    if n_hidden == 0 {
        return Err(Error::InvalidArgument("n_hidden must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layer = init_layer(data.n_visible(), n_hidden, data.kind(), &mut rng);
    let mut state = MomentumState::zeros_like(&layer);

    let n = data.len();
    for epoch in 0..config.epochs {
        let mut err_sum = 0.0;
        for start in (0..n).step_by(config.batch_size) {
            let end = (start + config.batch_size).min(n);
            let step = cd1_step(data.batch(start..end), &layer, &mut rng)?;
            err_sum += step.reconstruction_error * (end - start) as f64;
            apply_update(&mut layer, &step.gradients, &mut state, config);
        }
        if !layer.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite RBM parameters after epoch {}",
                epoch + 1
            )));
        }
        on_epoch(epoch, err_sum / n as f64);
    }
    Ok(layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use proptest::prelude::*;

    fn binary_1x1(w: f64, b: f64, a: f64) -> RbmLayer {
        RbmLayer::new(array![[w]], array![b], array![a], VisibleKind::Binary).unwrap()
    }

    #[test]
    fn hidden_prob_examples() {
        let z = RbmLayer::zeros(3, 2, VisibleKind::Binary);
        assert_eq!(hidden_prob(array![1.0, 0.0, 1.0].view(), &z, None).unwrap(), array![0.5, 0.5]);
        let z = RbmLayer::zeros(3, 2, VisibleKind::Multinomial);
        assert_eq!(hidden_prob(array![4.0, 0.0, 1.0].view(), &z, Some(5)).unwrap(), array![0.5, 0.5]);

        let l = binary_1x1(2.0, 0.0, 0.0);
        let p = hidden_prob(array![1.0].view(), &l, None).unwrap();
        assert!((p[0] - 0.8807970779778823).abs() < 1e-15);

        // Σ v_i W_ij = 2·0.5 = 1, a = 0.5, N = 3 → σ(2.5)
        let l = RbmLayer::new(array![[0.5], [0.0]], array![0.0, 0.0], array![0.5], VisibleKind::Multinomial).unwrap();
        let p = hidden_prob(array![2.0, 1.0].view(), &l, Some(3)).unwrap();
        assert!((p[0] - 0.9241418199787566).abs() < 1e-15);
    }

    #[test]
    fn hidden_prob_rejects_degenerate_document() {
        let l = RbmLayer::zeros(2, 1, VisibleKind::Multinomial);
        let err = hidden_prob(array![0.0, 0.0].view(), &l, Some(0)).unwrap_err();
        assert!(err.to_string().starts_with("degenerate document"));
        assert!(hidden_prob(array![0.0, 0.0].view(), &l, None).is_err());
    }

    #[test]
    fn bernoulli_extremes_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_bernoulli(Array1::zeros(50).view(), &mut rng).iter().all(|&x| x == 0.0));
        assert!(sample_bernoulli(Array1::ones(50).view(), &mut rng).iter().all(|&x| x == 1.0));
        let draws = sample_bernoulli(Array1::from_elem(10_000, 0.5).view(), &mut rng);
        let mean = draws.mean().unwrap();
        assert!((0.48..=0.52).contains(&mean), "{mean}");
    }

    #[test]
    fn visible_binary_examples() {
        let z = RbmLayer::zeros(3, 2, VisibleKind::Binary);
        assert_eq!(visible_prob_binary(array![1.0, 1.0].view(), &z).unwrap(), array![0.5, 0.5, 0.5]);
        let l = binary_1x1(1.0, -1.0, 0.0);
        assert_eq!(visible_prob_binary(array![1.0].view(), &l).unwrap(), array![0.5]);

        let l = RbmLayer::new(
            array![[0.3, -1.2, 0.5], [2.0, 0.1, -0.7]],
            array![0.0, 0.0],
            array![0.0, 0.0, 0.0],
            VisibleKind::Binary,
        )
        .unwrap();
        let h = array![1.0, 0.0, 1.0];
        let p = visible_prob_binary(h.view(), &l).unwrap();
        assert!((p[0] - sigmoid(0.3 + 0.5)).abs() < 1e-15);
        assert!((p[1] - sigmoid(2.0 - 0.7)).abs() < 1e-15);

        let m = RbmLayer::zeros(2, 1, VisibleKind::Multinomial);
        assert!(visible_prob_binary(array![1.0].view(), &m).is_err());
    }

    #[test]
    fn visible_softmax_examples() {
        let z = RbmLayer::zeros(4, 2, VisibleKind::Multinomial);
        assert_eq!(visible_softmax(array![1.0, 0.0].view(), &z).unwrap(), array![0.25, 0.25, 0.25, 0.25]);

        let l = RbmLayer::new(array![[0.0], [0.0]], array![0.0, 3f64.ln()], array![0.0], VisibleKind::Multinomial).unwrap();
        let p = visible_softmax(array![0.0].view(), &l).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);

        let shifted = RbmLayer::new(array![[0.0], [0.0]], array![1000.0, 1000.0 + 3f64.ln()], array![0.0], VisibleKind::Multinomial).unwrap();
        let q = visible_softmax(array![0.0].view(), &shifted).unwrap();
        assert!((&p - &q).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn reconstruct_counts_examples() {
        assert_eq!(reconstruct_counts(array![0.25, 0.25, 0.25, 0.25].view(), 8), array![2.0, 2.0, 2.0, 2.0]);
        assert_eq!(reconstruct_counts(array![1.0, 0.0].view(), 5), array![5.0, 0.0]);
        assert_eq!(reconstruct_counts(array![0.25, 0.75].view(), 4), array![1.0, 3.0]);
    }

    #[test]
    fn gradients_vanish_when_reconstruction_equals_data() {
        let v = array![[1.0, 0.0, 2.0], [0.5, 0.5, 0.0]];
        let h = array![[0.2, 0.9], [0.4, 0.1]];
        let g = Gradients::from_phases(v.view(), h.view(), v.view(), h.view());
        assert!(g.weights.iter().all(|&x| x == 0.0));
        assert!(g.hidden_bias.iter().all(|&x| x == 0.0));
        assert!(g.visible_bias.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cd1_matches_hand_trace_on_1x1() {
        let (w, b, a) = (0.7, -0.3, 0.2);
        let layer = binary_1x1(w, b, a);
        let v = array![[1.0]];
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut oracle_rng = rng.clone();
            let g = cd1_gradients(VisibleBatch::new(v.view(), None).unwrap(), &layer, &mut rng).unwrap();

            let h_pos = 1.0 / (1.0 + (-(a + w)).exp());
            let u: f64 = rand::Rng::random(&mut oracle_rng);
            let h_hat = if u < h_pos { 1.0 } else { 0.0 };
            let v_neg = 1.0 / (1.0 + (-(b + h_hat * w)).exp());
            let h_neg = 1.0 / (1.0 + (-(a + v_neg * w)).exp());

            assert!((g.weights[[0, 0]] - (h_pos - v_neg * h_neg)).abs() < 1e-14);
            assert!((g.hidden_bias[0] - (h_pos - h_neg)).abs() < 1e-14);
            assert!((g.visible_bias[0] - (1.0 - v_neg)).abs() < 1e-14);
        }
    }

    /// Saturated hidden units make the Gibbs sample deterministic.
    fn saturated_rsm() -> RbmLayer {
        RbmLayer::new(
            array![[400.0, -400.0, 500.0], [-400.0, 400.0, 500.0], [0.0, 0.0, 500.0]],
            array![0.1, -0.2, 0.05],
            array![0.0, 0.0, 0.0],
            VisibleKind::Multinomial,
        )
        .unwrap()
    }

    #[test]
    fn cd1_duplicate_documents_match_single() {
        let layer = saturated_rsm();
        let one = array![[3.0, 0.0, 1.0]];
        let two = array![[3.0, 0.0, 1.0], [3.0, 0.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g1 = cd1_gradients(VisibleBatch::new(one.view(), Some(&[4])).unwrap(), &layer, &mut rng).unwrap();
        let g2 = cd1_gradients(VisibleBatch::new(two.view(), Some(&[4, 4])).unwrap(), &layer, &mut rng).unwrap();
        assert!((&g1.weights - &g2.weights).iter().all(|d| d.abs() < 1e-12));
        assert!((&g1.hidden_bias - &g2.hidden_bias).iter().all(|d| d.abs() < 1e-12));
        assert!((&g1.visible_bias - &g2.visible_bias).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn cd1_rejects_bad_batches() {
        let layer = RbmLayer::zeros(2, 1, VisibleKind::Multinomial);
        let v = array![[0.0, 0.0]];
        assert!(VisibleBatch::new(v.view(), Some(&[0])).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let no_len = VisibleBatch::new(v.view(), None).unwrap();
        assert!(cd1_gradients(no_len, &layer, &mut rng).is_err());
    }

    #[test]
    fn apply_update_examples() {
        let layer0 = RbmLayer::new(array![[0.5, -1.0]], array![0.2], array![0.1, 0.3], VisibleKind::Binary).unwrap();
        let grads = Gradients {
            weights: array![[1.0, 2.0]],
            hidden_bias: array![0.5, -0.5],
            visible_bias: array![3.0],
        };

        let mut layer = layer0.clone();
        let mut state = MomentumState::zeros_like(&layer);
        let frozen = TrainConfig { learning_rate: 0.0, momentum: 0.0, ..TrainConfig::default() };
        apply_update(&mut layer, &grads, &mut state, &frozen);
        assert_eq!(layer, layer0);

        let mut layer = layer0.clone();
        let mut state = MomentumState::zeros_like(&layer);
        let plain = TrainConfig { learning_rate: 0.1, momentum: 0.0, weight_decay: 0.0, ..TrainConfig::default() };
        apply_update(&mut layer, &grads, &mut state, &plain);
        assert_eq!(state.prev_weights, array![[0.1, 0.2]]);
        assert!((layer.weights()[[0, 0]] - 0.6).abs() < 1e-15);

        // Scalar recurrence: Δ1 = ε(g − λw0), w1 = w0 + Δ1,
        // Δ2 = mΔ1 + ε(g − λw1), w2 = w1 + Δ2.
        let cfg = TrainConfig { learning_rate: 0.01, momentum: 0.9, weight_decay: 0.0002, ..TrainConfig::default() };
        let mut layer = binary_1x1(0.5, 0.0, 0.0);
        let mut state = MomentumState::zeros_like(&layer);
        let g = Gradients { weights: array![[2.0]], hidden_bias: array![1.0], visible_bias: array![-1.0] };
        apply_update(&mut layer, &g, &mut state, &cfg);
        apply_update(&mut layer, &g, &mut state, &cfg);
        let d1 = 0.01 * (2.0 - 0.0002 * 0.5);
        let w1 = 0.5 + d1;
        let d2 = 0.9 * d1 + 0.01 * (2.0 - 0.0002 * w1);
        assert!((layer.weights()[[0, 0]] - (w1 + d2)).abs() < 1e-15);
        assert!((layer.hidden_bias()[0] - (0.01 + 0.9 * 0.01 + 0.01)).abs() < 1e-15);
        assert!((layer.visible_bias()[0] + (0.01 + 0.9 * 0.01 + 0.01)).abs() < 1e-15);
    }

    fn word0_corpus(n: usize) -> VisibleData {
        let docs: Vec<BowDocument> = (0..n)
            .map(|i| BowDocument::new(format!("d{i}"), "", [(0, 5 + (i % 7) as u64)]))
            .collect();
        VisibleData::counts(&docs, 2).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = word0_corpus(10);
        let cfg = TrainConfig { epochs: 0, seed: 11, ..TrainConfig::default() };
        let layer = train_rbm(&data, 3, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(layer, init_layer(2, 3, VisibleKind::Multinomial, &mut rng));
        assert!(layer.hidden_bias().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rsm_learns_point_mass() {
        let data = word0_corpus(300);
        let layer = train_rbm(&data, 2, &TrainConfig::default()).unwrap();
        let mut mean_h = Array1::zeros(2);
        for (r, v) in data.values().outer_iter().enumerate() {
            mean_h += &hidden_prob(v, &layer, Some(data.doc_lengths.as_ref().unwrap()[r])).unwrap();
        }
        mean_h /= data.len() as f64;
        let p = visible_softmax(mean_h.view(), &layer).unwrap();
        assert!(p[0] >= 0.9, "{p}");
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let data = word0_corpus(120);
        let cfg = TrainConfig { epochs: 5, seed: 3, ..TrainConfig::default() };
        assert_eq!(train_rbm(&data, 4, &cfg).unwrap(), train_rbm(&data, 4, &cfg).unwrap());
    }

    #[test]
    fn train_rejects_zero_hidden() {
        assert!(train_rbm(&word0_corpus(3), 0, &TrainConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            bias in proptest::collection::vec(-50.0f64..50.0, 1..20),
            shift in -500.0f64..500.0,
        ) {
            let d = bias.len();
            let layer = RbmLayer::new(Array2::zeros((d, 1)), Array::from(bias.clone()), array![0.0], VisibleKind::Multinomial).unwrap();
            let p = visible_softmax(array![1.0].view(), &layer).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = bias.iter().map(|b| b + shift).collect();
            let layer = RbmLayer::new(Array2::zeros((d, 1)), Array::from(shifted), array![0.0], VisibleKind::Multinomial).unwrap();
            let q = visible_softmax(array![1.0].view(), &layer).unwrap();
            prop_assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
        }

        #[test]
        fn probabilities_strictly_inside_unit_interval(
            w in proptest::collection::vec(-3.0f64..3.0, 6),
            v in proptest::collection::vec(0.0f64..1.0, 3),
            a in proptest::collection::vec(-3.0f64..3.0, 2),
            b in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let layer = RbmLayer::new(
                Array2::from_shape_vec((3, 2), w).unwrap(),
                Array::from(b),
                Array::from(a),
                VisibleKind::Binary,
            ).unwrap();
            let h = hidden_prob(Array::from(v).view(), &layer, None).unwrap();
            prop_assert!(h.iter().all(|&p| p > 0.0 && p < 1.0));
            let vis = visible_prob_binary(h.view(), &layer).unwrap();
            prop_assert!(vis.iter().all(|&p| p > 0.0 && p < 1.0));
        }

        #[test]
        fn phase_statistics_ignore_row_order(
            vals in proptest::collection::vec(0.0f64..1.0, 4 * 10),
            rot in 1usize..4,
        ) {
            let m = Array2::from_shape_vec((4, 10), vals).unwrap();
            let (v, h, v2, h2) = (m.slice(s![.., 0..3]), m.slice(s![.., 3..5]), m.slice(s![.., 5..8]), m.slice(s![.., 8..10]));
            let perm: Vec<usize> = (0..4).map(|i| (i + rot) % 4).collect();
            let p = |x: ArrayView2<'_, f64>| x.select(Axis(0), &perm);
            let g = Gradients::from_phases(v, h, v2, h2);
            let gp = Gradients::from_phases(p(v).view(), p(h).view(), p(v2).view(), p(h2).view());
            prop_assert!((&g.weights - &gp.weights).iter().all(|d| d.abs() < 1e-12));
            prop_assert!((&g.visible_bias - &gp.visible_bias).iter().all(|d| d.abs() < 1e-12));
            prop_assert!((&g.hidden_bias - &gp.hidden_bias).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn cd1_ignores_batch_order_when_samples_are_determined() {
        let layer = saturated_rsm();
        let a = array![[3.0, 0.0, 1.0], [0.0, 2.0, 2.0], [1.0, 0.0, 0.0]];
        let b = array![[0.0, 2.0, 2.0], [1.0, 0.0, 0.0], [3.0, 0.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ga = cd1_gradients(VisibleBatch::new(a.view(), Some(&[4, 4, 1])).unwrap(), &layer, &mut rng).unwrap();
        let gb = cd1_gradients(VisibleBatch::new(b.view(), Some(&[4, 1, 4])).unwrap(), &layer, &mut rng).unwrap();
        assert!((&ga.weights - &gb.weights).iter().all(|d| d.abs() < 1e-12));
    }
}
