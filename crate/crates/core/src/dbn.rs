//! Greedy layer-wise pretraining of an RBM stack.
//!
//! Layer 0 is a replicated softmax machine over word counts. Every layer
//! above is a binary RBM trained on the hidden probabilities of the layer
//! below, computed once from the finished lower layer.

use std::path::Path;

use ndarray::{Array1, ArrayView1};

use crate::container::{Container, Tensor};
use crate::corpus::{self, BowDocument};
use crate::rbm::{self, RbmLayer, TrainConfig, VisibleData, VisibleKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    layers: Vec<RbmLayer>,
}

impl DbnModel {
    /// Checks that shapes chain and that exactly the bottom layer is
    /// multinomial.
    pub fn new(layers: Vec<RbmLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a DBN needs at least one layer".into()));
        }
        for (t, layer) in layers.iter().enumerate() {
            let want = if t == 0 {
                VisibleKind::Multinomial
            } else {
                VisibleKind::Binary
            };
            if layer.kind() != want {
                return Err(Error::InvalidArgument(format!(
                    "layer {t} has {:?} visible units, expected {want:?}",
                    layer.kind()
                )));
            }
            if t > 0 && layers[t - 1].n_hidden() != layer.n_visible() {
                return Err(Error::Shape(format!(
                    "layer {} has {} hidden units but layer {t} has {} visible units",
                    t - 1,
                    layers[t - 1].n_hidden(),
                    layer.n_visible()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[RbmLayer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<RbmLayer> {
        self.layers
    }

    /// `[D, M1, ..., Mk]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_visible())
            .chain(self.layers.iter().map(RbmLayer::n_hidden))
            .collect()
    }

    pub fn vocab_size(&self) -> usize {
        self.layers[0].n_visible()
    }

    pub fn code_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_hidden()
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        let sizes = self.layer_sizes().iter().map(|&s| s as f64).collect();
        c.push(Tensor::vector("layer_sizes", sizes));
        let kinds = self
            .layers
            .iter()
            .map(|l| match l.kind() {
                VisibleKind::Multinomial => 1.0,
                VisibleKind::Binary => 0.0,
            })
            .collect();
        c.push(Tensor::vector("kind_flags", kinds));
        for (t, l) in self.layers.iter().enumerate() {
            c.push(Tensor::from_array2(format!("layer{t}.W"), l.weights()));
            c.push(Tensor::from_array1(format!("layer{t}.vbias"), l.visible_bias()));
            c.push(Tensor::from_array1(format!("layer{t}.hbias"), l.hidden_bias()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let sizes = c.require("layer_sizes")?.to_array1()?;
        let kinds = c.require("kind_flags")?.to_array1()?;
        if sizes.len() < 2 || kinds.len() != sizes.len() - 1 {
            return Err(Error::Format(format!(
                "{} layer sizes with {} kind flags",
                sizes.len(),
                kinds.len()
            )));
        }
        let mut layers = Vec::with_capacity(kinds.len());
        for (t, &flag) in kinds.iter().enumerate() {
            let kind = match flag {
                1.0 => VisibleKind::Multinomial,
                0.0 => VisibleKind::Binary,
                _ => return Err(Error::Format(format!("kind flag {flag} for layer {t}"))),
            };
            let layer = RbmLayer::new(
                c.require(&format!("layer{t}.W"))?.to_array2()?,
                c.require(&format!("layer{t}.vbias"))?.to_array1()?,
                c.require(&format!("layer{t}.hbias"))?.to_array1()?,
                kind,
            )?;
            if (layer.n_visible(), layer.n_hidden()) != (sizes[t] as usize, sizes[t + 1] as usize) {
                return Err(Error::Format(format!("layer {t} disagrees with layer_sizes")));
            }
            layers.push(layer);
        }
        Self::new(layers)
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

/// Parses the dash-separated architecture notation, e.g. `2000-500-250-125-10`.
pub fn parse_layer_sizes(spec: &str) -> Result<Vec<usize>> {
    let sizes = spec
        .split('-')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("bad layer size {p:?} in {spec:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    check_layer_sizes(&sizes)?;
    Ok(sizes)
}

fn check_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument(
            "layer sizes need at least a visible and a hidden layer".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument("layer sizes must be positive".into()));
    }
    Ok(())
}

/// Greedy pretraining. Layer `t` is trained with `config.seed + t`, so a
/// one-layer stack is identical to [`rbm::train_rbm`] under the same config.
pub fn pretrain(corpus: &[BowDocument], layer_sizes: &[usize], config: &TrainConfig) -> Result<DbnModel> {
    check_layer_sizes(layer_sizes)?;
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus::reject_degenerate(corpus)?;
    let vocab = layer_sizes[0];
    if let Some(d) = corpus.iter().find(|d| d.min_vocab_size() > vocab) {
        return Err(Error::Shape(format!(
            "document {:?} uses word index {} but layer_sizes[0] = {vocab}",
            d.doc_id(),
            d.min_vocab_size() - 1
        )));
    }

    let mut data = VisibleData::counts(corpus, vocab)?;
    let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
    for (t, &n_hidden) in layer_sizes[1..].iter().enumerate() {
        let cfg = TrainConfig {
            seed: config.seed.wrapping_add(t as u64),
            ..config.clone()
        };
        log::info!(
            "pretraining layer {t}: {}x{n_hidden} ({:?} visible)",
            data.n_visible(),
            data.kind()
        );
        let layer = rbm::train_rbm_with(&data, n_hidden, &cfg, |epoch, err| {
            log::info!("layer {t} epoch {}: reconstruction cross-entropy {err:.6}", epoch + 1);
        })?;
        if t + 2 < layer_sizes.len() {
            data = VisibleData::binary(rbm::hidden_prob_batch(data.all(), &layer)?);
        }
        layers.push(layer);
    }
    DbnModel::new(layers)
}

/// Deterministic bottom-up pass; one probability vector per hidden layer.
pub fn up_pass(doc: &BowDocument, model: &DbnModel) -> Result<Vec<Array1<f64>>> {
    if doc.total() == 0 {
        return Err(Error::degenerate(doc.doc_id()));
    }
    doc.check_vocab(model.vocab_size())?;
    let x = doc.to_dense(model.vocab_size());
    let mut acts = Vec::with_capacity(model.layers.len());
    let mut h = rbm::hidden_prob(x.view(), &model.layers[0], Some(doc.total()))?;
    for layer in &model.layers[1..] {
        let next = rbm::hidden_prob(h.view(), layer, None)?;
        acts.push(std::mem::replace(&mut h, next));
    }
    acts.push(h);
    Ok(acts)
}

/// Up-pass to the top, then a mean-field down-pass: sigmoid visible
/// probabilities for binary layers and the vocabulary softmax at the bottom.
pub fn mean_field_reconstruction(doc: &BowDocument, model: &DbnModel) -> Result<Array1<f64>> {
    let acts = up_pass(doc, model)?;
    let mut h = acts.last().expect("non-empty stack").clone();
    for layer in model.layers[1..].iter().rev() {
        h = rbm::visible_prob_binary(h.view(), layer)?;
    }
    rbm::visible_softmax(ArrayView1::from(&h), &model.layers[0])
}
