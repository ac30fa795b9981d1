//! Shared fixtures for integration tests: a synthetic labeled corpus and
//! oracles written independently of the library.

#![allow(dead_code)]

use dbnt::codes::{CodeValues, LatentCode};
use dbnt::corpus::BowDocument;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, LogNormal};

/// Settings for [`synthetic_corpus`].
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub vocab: usize,
    pub classes: usize,
    /// Words per class topic.
    pub class_words: usize,
    /// Topics shared by all classes, unrelated to the label.
    pub nuisance_topics: usize,
    pub nuisance_words: usize,
    /// Dirichlet concentration of each document's mix over the nuisance
    /// topics. Zero picks a single topic per document.
    pub nuisance_alpha: f64,
    /// Mixture weights (class, nuisance, background).
    pub mix: (f64, f64, f64),
    /// Median document length.
    pub median_len: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            vocab: 1000,
            classes: 4,
            class_words: 80,
            nuisance_topics: 12,
            nuisance_words: 60,
            nuisance_alpha: 0.0,
            mix: (0.3, 0.3, 0.4),
            median_len: 80.0,
        }
    }
}

fn topic_over<R: Rng>(words: &[usize], rng: &mut R) -> (Vec<usize>, WeightedIndex<f64>) {
    let weights: Vec<f64> = words.iter().map(|_| rng.random_range(0.2..1.0)).collect();
    (words.to_vec(), WeightedIndex::new(weights).unwrap())
}

/// Labeled documents from a topic mixture: a class topic, one random
/// label-independent topic and a Zipf background over the vocabulary.
/// Document lengths are log-normal.
pub fn synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Vec<BowDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..spec.vocab).collect();
    perm.shuffle(&mut rng);

    // Class topics over disjoint blocks that overlap their neighbors by a quarter.
    let stride = spec.class_words * 3 / 4;
    let classes: Vec<_> = (0..spec.classes)
        .map(|c| {
            let words: Vec<usize> = (0..spec.class_words).map(|j| perm[(c * stride + j) % spec.vocab]).collect();
            topic_over(&words, &mut rng)
        })
        .collect();
    let nuisance: Vec<_> = (0..spec.nuisance_topics)
        .map(|_| {
            let words: Vec<usize> = (0..spec.nuisance_words).map(|_| rng.random_range(0..spec.vocab)).collect();
            topic_over(&words, &mut rng)
        })
        .collect();
    let zipf: Vec<f64> = (0..spec.vocab).map(|r| 1.0 / (r as f64 + 1.0)).collect();
    let mut bg_words: Vec<usize> = (0..spec.vocab).collect();
    bg_words.shuffle(&mut rng);
    let background = WeightedIndex::new(&zipf).unwrap();

    let lengths = LogNormal::new(spec.median_len.ln(), 0.5).unwrap();
    let mix = WeightedIndex::new([spec.mix.0, spec.mix.1, spec.mix.2]).unwrap();

    (0..spec.n_docs)
        .map(|i| {
            let class = i % spec.classes;
            let nz = if spec.nuisance_alpha > 0.0 {
                // normalized gammas are a Dirichlet draw
                let g = Gamma::new(spec.nuisance_alpha, 1.0).unwrap();
                let w: Vec<f64> = (0..spec.nuisance_topics).map(|_| g.sample(&mut rng) + 1e-300).collect();
                WeightedIndex::new(w).unwrap()
            } else {
                let mut w = vec![0.0; spec.nuisance_topics];
                w[rng.random_range(0..spec.nuisance_topics)] = 1.0;
                WeightedIndex::new(w).unwrap()
            };
            let len = (lengths.sample(&mut rng).round() as usize).clamp(10, 1000);
            let mut counts = vec![0u64; spec.vocab];
            for _ in 0..len {
                let w = match mix.sample(&mut rng) {
                    0 => {
                        let (words, dist) = &classes[class];
                        words[dist.sample(&mut rng)]
                    }
                    1 => {
                        let (words, dist) = &nuisance[nz.sample(&mut rng)];
                        words[dist.sample(&mut rng)]
                    }
                    _ => bg_words[background.sample(&mut rng)],
                };
                counts[w] += 1;
            }
            BowDocument::new(
                format!("doc{i:05}"),
                format!("class{class}"),
                counts.into_iter().enumerate().filter(|c| c.1 > 0),
            )
        })
        .collect()
}

fn code_distance(a: &LatentCode, b: &LatentCode) -> f64 {
    match (&a.values, &b.values) {
        (CodeValues::Real(x), CodeValues::Real(y)) => {
            x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
        }
        (CodeValues::Binary(x), CodeValues::Binary(y)) => x.iter().zip(y).filter(|(p, q)| p != q).count() as f64,
        _ => panic!("mixed code kinds"),
    }
}

/// Brute-force accuracy: for every query, pick the k nearest one at a time
/// by scanning all unused candidates.
pub fn brute_force_accuracy(codes: &[LatentCode], ks: &[usize]) -> Vec<f64> {
    ks.iter()
        .map(|&k| {
            let mut sum = 0.0;
            for (qi, q) in codes.iter().enumerate() {
                let mut used = vec![false; codes.len()];
                used[qi] = true;
                let mut same = 0usize;
                for _ in 0..k {
                    let mut best: Option<usize> = None;
                    for (ci, c) in codes.iter().enumerate() {
                        if used[ci] {
                            continue;
                        }
                        best = match best {
                            None => Some(ci),
                            Some(bi) => {
                                let (d, bd) = (code_distance(q, c), code_distance(q, &codes[bi]));
                                if d < bd || (d == bd && c.doc_id < codes[bi].doc_id) {
                                    Some(ci)
                                } else {
                                    Some(bi)
                                }
                            }
                        };
                    }
                    let b = best.unwrap();
                    used[b] = true;
                    if codes[b].label == q.label {
                        same += 1;
                    }
                }
                sum += same as f64 / k as f64;
            }
            sum / codes.len() as f64
        })
        .collect()
}

/// One-sided Jacobi SVD of the centered data; returns the projections onto
/// the top `k` right singular vectors and the squared singular values.
pub fn jacobi_pca(x: &[Vec<f64>], k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.len();
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    // columns of the centered matrix, rotated in place
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| x.iter().map(|r| r[j] - mean[j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha: f64 = cols[p].iter().map(|a| a * a).sum();
                let beta: f64 = cols[q].iter().map(|a| a * a).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (a, b) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * a - s * b;
                    cols[q][i] = s * a + c * b;
                }
                for row in v.iter_mut() {
                    let (a, b) = (row[p], row[q]);
                    row[p] = c * a - s * b;
                    row[q] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|a| a * a).sum()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]));
    // After convergence column j of the rotated matrix is X·v_j.
    let proj = (0..n).map(|i| order[..k].iter().map(|&j| cols[j][i]).collect()).collect();
    (proj, order.iter().map(|&j| sq[j]).collect())
}
