//! Retrieval evaluation and PCA projection.
//!
//! The accuracy at `k` is the same-label fraction among a query's `k`
//! nearest codes, averaged over every code used as a query. The query is
//! never its own neighbor and distance ties go to the smaller doc_id.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Write;

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::codes::{distance, LatentCode};
use crate::corpus::BowDocument;
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 6] = [1, 3, 7, 15, 31, 63];

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    /// `(k, accuracy)` in the order the ks were requested.
    pub points: Vec<(usize, f64)>,
    pub n_queries: usize,
}

impl AccuracyCurve {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.points.iter().find(|p| p.0 == k).map(|p| p.1)
    }
}

fn by_distance_then_id(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Pool members other than the query, nearest first.
fn ranked<'a>(query: &LatentCode, pool: &'a [LatentCode]) -> Result<Vec<(f64, &'a LatentCode)>> {
    let mut scored = pool
        .iter()
        .filter(|c| c.doc_id != query.doc_id)
        .map(|c| Ok((distance(query, c)?, c)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| by_distance_then_id(&(a.0, &a.1.doc_id), &(b.0, &b.1.doc_id)));
    Ok(scored)
}

/// doc_ids of the `k` nearest pool codes, the query excluded.
pub fn knn(query: &LatentCode, pool: &[LatentCode], k: usize) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let ranked = ranked(query, pool)?;
    if k > ranked.len() {
        return Err(Error::KTooLarge {
            k,
            available: ranked.len(),
        });
    }
    Ok(ranked[..k].iter().map(|(_, c)| c.doc_id.clone()).collect())
}

/// Mean same-label fraction among the k nearest neighbors for each k.
pub fn accuracy_measurement(codes: &[LatentCode], ks: &[usize]) -> Result<AccuracyCurve> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument(format!("neighbor counts must be >= 1, got {ks:?}")));
    }
    if let Some(c) = codes.iter().find(|c| c.label.is_empty()) {
        return Err(Error::Unlabeled(c.doc_id.clone()));
    }
    let mut seen = HashSet::new();
    if let Some(c) = codes.iter().find(|c| !seen.insert(c.doc_id.as_str())) {
        return Err(Error::DuplicateDocId(c.doc_id.clone()));
    }
    let k_max = *ks.iter().max().expect("non-empty");
    let available = codes.len().saturating_sub(1);
    if k_max > available {
        return Err(Error::KTooLarge { k: k_max, available });
    }

    let mut sums = vec![0.0; ks.len()];
    for query in codes {
        let ranked = ranked(query, codes)?;
        // hits[k] = same-label count among the first k neighbors
        let mut hits = Vec::with_capacity(k_max + 1);
        hits.push(0usize);
        for (_, c) in &ranked[..k_max] {
            hits.push(hits.last().unwrap() + usize::from(c.label == query.label));
        }
        for (sum, &k) in sums.iter_mut().zip(ks) {
            *sum += hits[k] as f64 / k as f64;
        }
    }
    let n = codes.len() as f64;
    Ok(AccuracyCurve {
        points: ks.iter().zip(sums).map(|(&k, s)| (k, s / n)).collect(),
        n_queries: codes.len(),
    })
}

/// Accuracy of the raw count vectors under Euclidean distance.
pub fn baseline_input_accuracy(docs: &[BowDocument], ks: &[usize]) -> Result<AccuracyCurve> {
    let dim = docs.iter().map(BowDocument::min_vocab_size).max().unwrap_or(0);
    let codes: Vec<LatentCode> = docs
        .iter()
        .map(|d| LatentCode::real(d.doc_id(), d.label(), d.to_dense(dim).to_vec()))
        .collect();
    accuracy_measurement(&codes, ks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// One row per input vector, one column per component.
    pub coords: Array2<f64>,
    /// Fraction of total variance per component.
    pub explained_variance: Vec<f64>,
}

/// Projects mean-centered vectors onto their top `out_dims` principal
/// directions. Each direction is signed so its largest-magnitude loading is
/// positive.
pub fn pca_project(vectors: &[Vec<f64>], out_dims: usize) -> Result<Projection2D> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs >= 2 vectors, got {n}")));
    }
    let d = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::Shape(format!("vector of length {} among length {d}", v.len())));
    }
    if out_dims == 0 || out_dims > d.min(n) {
        return Err(Error::InvalidArgument(format!(
            "cannot take {out_dims} components of {n} vectors in {d} dimensions"
        )));
    }
    if vectors.iter().all(|v| v == &vectors[0]) {
        return Err(Error::ZeroVariance);
    }

    let mut x = DMatrix::from_fn(n, d, |i, j| vectors[i][j]);
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut coords = Array2::zeros((n, out_dims));
    let mut explained_variance = Vec::with_capacity(out_dims);
    for (c, &idx) in order[..out_dims].iter().enumerate() {
        let mut dir: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let lead = dir
            .iter()
            .copied()
            .reduce(|best, v| if v.abs() > best.abs() { v } else { best })
            .expect("d >= 1");
        if lead < 0.0 {
            dir.iter_mut().for_each(|v| *v = -*v);
        }
        for i in 0..n {
            coords[[i, c]] = x.row(i).iter().zip(&dir).map(|(a, b)| a * b).sum();
        }
        explained_variance.push(s[idx] * s[idx] / total);
    }
    Ok(Projection2D {
        coords,
        explained_variance,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `# comment` lines, then `k,accuracy` rows.
pub fn write_accuracy_csv<W: Write>(mut out: W, curve: &AccuracyCurve, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "# queries: {}", curve.n_queries)?;
    writeln!(out, "k,accuracy")?;
    for (k, a) in &curve.points {
        writeln!(out, "{k},{a}")?;
    }
    out.flush()?;
    Ok(())
}

/// `doc_id,label,pc1,pc2,...` rows, one per `(doc_id, label)` pair.
pub fn write_pca_csv<W: Write>(mut out: W, ids: &[(String, String)], projection: &Projection2D) -> Result<()> {
    let (n, k) = projection.coords.dim();
    if ids.len() != n {
        return Err(Error::Shape(format!("{} ids for {n} projected rows", ids.len())));
    }
    write!(out, "doc_id,label")?;
    for c in 1..=k {
        write!(out, ",pc{c}")?;
    }
    writeln!(out)?;
    for ((id, label), row) in ids.iter().zip(projection.coords.outer_iter()) {
        write!(out, "{},{}", csv_field(id), csv_field(label))?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
