//! Latent codes, their distances and the codes file format.
//!
//! Codes file, one code per line:
//!
//! ```text
//! doc_id<TAB>label<TAB>0.25,0.9999,1.0e-7     real code
//! doc_id<TAB>label<TAB>0110                   binary code
//! ```
//!
//! Real values are written in shortest round-trip form and always carry a
//! decimal point or exponent, so a field made only of `0`/`1` is a bit
//! string.

use std::io::{BufRead, Write};

use ndarray::Array1;

use crate::corpus::BowDocument;
use crate::dbn::{self, DbnModel};
use crate::finetune::AutoencoderModel;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum CodeValues {
    Real(Vec<f64>),
    Binary(Vec<bool>),
}

impl CodeValues {
    pub fn len(&self) -> usize {
        match self {
            Self::Real(v) => v.len(),
            Self::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Self::Binary(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub doc_id: String,
    /// Empty when unlabeled.
    pub label: String,
    pub values: CodeValues,
}

impl LatentCode {
    pub fn real(doc_id: impl Into<String>, label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            doc_id: doc_id.into(),
            label: label.into(),
            values: CodeValues::Real(values),
        }
    }

    pub fn binary(doc_id: impl Into<String>, label: impl Into<String>, bits: Vec<bool>) -> Self {
        Self {
            doc_id: doc_id.into(),
            label: label.into(),
            values: CodeValues::Binary(bits),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Anything that maps a document to code-layer activations.
pub trait Encoder {
    fn code_dim(&self) -> usize;
    fn encode_activations(&self, doc: &BowDocument) -> Result<Array1<f64>>;
}

/// Encoder stack of the fine-tuned autoencoder. Noise is never applied.
impl Encoder for AutoencoderModel {
    fn code_dim(&self) -> usize {
        AutoencoderModel::code_dim(self)
    }

    fn encode_activations(&self, doc: &BowDocument) -> Result<Array1<f64>> {
        self.encode_dense(doc)
    }
}

/// Deterministic up-pass through the pretrained stack.
impl Encoder for DbnModel {
    fn code_dim(&self) -> usize {
        DbnModel::code_dim(self)
    }

    fn encode_activations(&self, doc: &BowDocument) -> Result<Array1<f64>> {
        let mut acts = dbn::up_pass(doc, self)?;
        Ok(acts.pop().expect("a DBN has at least one layer"))
    }
}

/// Real code for `doc`.
pub fn encode<E: Encoder + ?Sized>(model: &E, doc: &BowDocument) -> Result<LatentCode> {
    let values = model.encode_activations(doc)?;
    Ok(LatentCode::real(doc.doc_id(), doc.label(), values.to_vec()))
}

/// Bit `j` is set iff `values[j] > threshold`.
pub fn binarize(code: &LatentCode, threshold: f64) -> Result<LatentCode> {
    let CodeValues::Real(values) = &code.values else {
        return Err(Error::InvalidArgument(format!(
            "code {} is already binary",
            code.doc_id
        )));
    };
    Ok(LatentCode::binary(
        code.doc_id.clone(),
        code.label.clone(),
        values.iter().map(|&v| v > threshold).collect(),
    ))
}

fn check_dims(a: &LatentCode, b: &LatentCode) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "codes {} and {} have dimensions {} and {}",
            a.doc_id,
            b.doc_id,
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

pub fn euclidean(a: &LatentCode, b: &LatentCode) -> Result<f64> {
    check_dims(a, b)?;
    match (&a.values, &b.values) {
        (CodeValues::Real(x), CodeValues::Real(y)) => Ok(x
            .iter()
            .zip(y)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()),
        _ => Err(Error::InvalidArgument("euclidean distance needs real codes".into())),
    }
}

pub fn hamming(a: &LatentCode, b: &LatentCode) -> Result<usize> {
    check_dims(a, b)?;
    match (&a.values, &b.values) {
        (CodeValues::Binary(x), CodeValues::Binary(y)) => {
            Ok(x.iter().zip(y).filter(|(p, q)| p != q).count())
        }
        _ => Err(Error::InvalidArgument("hamming distance needs binary codes".into())),
    }
}

/// Euclidean for real codes, Hamming for binary ones.
pub fn distance(a: &LatentCode, b: &LatentCode) -> Result<f64> {
    match a.values {
        CodeValues::Real(_) => euclidean(a, b),
        CodeValues::Binary(_) => hamming(a, b).map(|d| d as f64),
    }
}

pub fn write_codes<'a, W, I>(mut out: W, codes: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a LatentCode>,
{
    for c in codes {
        write!(out, "{}\t{}\t", c.doc_id, c.label)?;
        match &c.values {
            CodeValues::Real(v) => {
                for (j, x) in v.iter().enumerate() {
                    if j > 0 {
                        out.write_all(b",")?;
                    }
                    // Debug formatting is shortest round-trip and keeps ".0".
                    write!(out, "{x:?}")?;
                }
            }
            CodeValues::Binary(bits) => {
                let s: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
                out.write_all(s.as_bytes())?;
            }
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_codes<R: BufRead>(reader: R) -> Result<Vec<LatentCode>> {
    let mut codes = Vec::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let mut fields = line.split('\t');
        let (Some(doc_id), Some(label), Some(values), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(err("expected doc_id, label and values separated by tabs".into()));
        };
        if doc_id.is_empty() {
            return Err(err("empty doc_id".into()));
        }
        let values = if !values.is_empty() && values.bytes().all(|b| b == b'0' || b == b'1') {
            CodeValues::Binary(values.bytes().map(|b| b == b'1').collect())
        } else {
            CodeValues::Real(
                values
                    .split(',')
                    .map(|v| {
                        v.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| err(format!("bad code value {v:?}")))
                    })
                    .collect::<Result<_>>()?,
            )
        };
        let shape = (values.is_binary(), values.len());
        match dim {
            None => dim = Some(shape),
            Some(d) if d != shape => {
                return Err(err(format!(
                    "code of kind/length {shape:?} differs from earlier codes {d:?}"
                )))
            }
            _ => {}
        }
        codes.push(LatentCode {
            doc_id: doc_id.to_string(),
            label: label.to_string(),
            values,
        });
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finetune::{unroll, NoiseConfig};
    use crate::rbm::{RbmLayer, VisibleKind};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn zero_dbn() -> DbnModel {
        DbnModel::new(vec![
            RbmLayer::zeros(6, 4, VisibleKind::Multinomial),
            RbmLayer::zeros(4, 3, VisibleKind::Binary),
        ])
        .unwrap()
    }

    fn small_dbn() -> DbnModel {
        let w1 = Array2::from_shape_fn((6, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin());
        let w2 = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 * 0.91).cos());
        DbnModel::new(vec![
            RbmLayer::new(w1, Array1::zeros(6), Array1::from_elem(4, 0.1), VisibleKind::Multinomial).unwrap(),
            RbmLayer::new(w2, Array1::zeros(4), Array1::from_elem(3, -0.2), VisibleKind::Binary).unwrap(),
        ])
        .unwrap()
    }

    fn doc() -> BowDocument {
        BowDocument::new("d1", "sport", [(0, 2), (3, 1), (5, 4)])
    }

    #[test]
    fn zero_model_codes_are_one_half() {
        let dbn = zero_dbn();
        let c = encode(&dbn, &doc()).unwrap();
        assert_eq!(c.values, CodeValues::Real(vec![0.5; 3]));
        assert_eq!(encode(&unroll(&dbn), &doc()).unwrap(), c);
        assert_eq!((c.doc_id.as_str(), c.label.as_str()), ("d1", "sport"));
    }

    #[test]
    fn encode_is_idempotent_and_noise_free() {
        let mut ae = unroll(&small_dbn());
        let a = encode(&ae, &doc()).unwrap();
        assert_eq!(encode(&ae, &doc()).unwrap(), a);
        ae.set_noise(NoiseConfig { enabled: true, ..NoiseConfig::default() }).unwrap();
        assert_eq!(encode(&ae, &doc()).unwrap(), a);
        // An unrolled, un-tuned model encodes like its DBN.
        assert_eq!(encode(&small_dbn(), &doc()).unwrap(), a);
    }

    #[test]
    fn encode_rejects_empty_documents() {
        assert!(encode(&small_dbn(), &BowDocument::new("e", "", [])).is_err());
    }

    #[test]
    fn binarize_examples() {
        let c = LatentCode::real("a", "", vec![0.05, 0.15, 0.1]);
        assert_eq!(binarize(&c, 0.1).unwrap().values, CodeValues::Binary(vec![false, true, false]));
        let zeros = LatentCode::real("a", "", vec![0.0; 4]);
        assert_eq!(binarize(&zeros, 0.1).unwrap().values, CodeValues::Binary(vec![false; 4]));
        let ones = LatentCode::real("a", "", vec![1.0; 4]);
        assert_eq!(binarize(&ones, 0.1).unwrap().values, CodeValues::Binary(vec![true; 4]));
        assert!(binarize(&binarize(&ones, 0.1).unwrap(), 0.1).is_err());
    }

    #[test]
    fn distance_examples() {
        let a = LatentCode::real("a", "", vec![0.0, 0.0]);
        let b = LatentCode::real("b", "", vec![3.0, 4.0]);
        assert_eq!(euclidean(&a, &b).unwrap(), 5.0);
        assert_eq!(euclidean(&a, &a).unwrap(), 0.0);
        let x = LatentCode::binary("x", "", vec![true, false, true, true]);
        let y = LatentCode::binary("y", "", vec![true, true, true, false]);
        assert_eq!(hamming(&x, &y).unwrap(), 2);
        let nx = LatentCode::binary("n", "", vec![false, true, false, false]);
        assert_eq!(hamming(&x, &nx).unwrap(), 4);
        assert!(euclidean(&a, &LatentCode::real("c", "", vec![1.0])).is_err());
        assert!(hamming(&x, &LatentCode::binary("c", "", vec![true])).is_err());
        assert!(euclidean(&a, &x).is_err());
    }

    #[test]
    fn codes_file_round_trip() {
        let codes = vec![
            LatentCode::real("a", "x", vec![0.1, 1.0, 1e-7, 0.0]),
            LatentCode::real("b", "", vec![1.0 / 3.0, 0.5, 0.999_999_999_9, 1.0]),
        ];
        let mut buf = Vec::new();
        write_codes(&mut buf, &codes).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "a\tx\t0.1,1.0,1e-7,0.0");
        assert_eq!(read_codes(&buf[..]).unwrap(), codes);

        let bits = vec![LatentCode::binary("a", "x", vec![false, true, true])];
        let mut buf = Vec::new();
        write_codes(&mut buf, &bits).unwrap();
        assert_eq!(buf, b"a\tx\t011\n");
        assert_eq!(read_codes(&buf[..]).unwrap(), bits);
    }

    #[test]
    fn single_real_value_is_not_a_bit() {
        let codes = vec![LatentCode::real("a", "", vec![1.0])];
        let mut buf = Vec::new();
        write_codes(&mut buf, &codes).unwrap();
        assert_eq!(read_codes(&buf[..]).unwrap(), codes);
    }

    #[test]
    fn codes_file_errors_carry_line_numbers() {
        let bad = "a\tx\t0.1,0.2\nb\tx\t0.1\n";
        assert!(matches!(read_codes(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(read_codes("a\tx\t0.1,zz\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_codes("a\t0.1\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_codes("a\tx\t01\nb\tx\t0.5,0.5\n".as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    fn real_code(n: usize) -> impl Strategy<Value = LatentCode> {
        proptest::collection::vec(0.0f64..1.0, n).prop_map(|v| LatentCode::real("r", "", v))
    }

    fn bit_code(n: usize) -> impl Strategy<Value = LatentCode> {
        proptest::collection::vec(any::<bool>(), n).prop_map(|v| LatentCode::binary("b", "", v))
    }

    proptest! {
        #[test]
        fn euclidean_is_a_metric(a in real_code(6), b in real_code(6), c in real_code(6)) {
            let d = |x: &LatentCode, y: &LatentCode| euclidean(x, y).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &b) >= 0.0);
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert_eq!(d(&a, &b) == 0.0, a.values == b.values);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        }

        #[test]
        fn hamming_is_a_metric(a in bit_code(9), b in bit_code(9), c in bit_code(9)) {
            let d = |x: &LatentCode, y: &LatentCode| hamming(x, y).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert_eq!(d(&a, &a), 0);
            prop_assert_eq!(d(&a, &b) == 0, a.values == b.values);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        }

        #[test]
        fn binarize_is_monotone(a in real_code(8), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (CodeValues::Binary(bl), CodeValues::Binary(bh)) =
                (binarize(&a, lo).unwrap().values, binarize(&a, hi).unwrap().values) else { unreachable!() };
            prop_assert!(bl.iter().zip(&bh).all(|(l, h)| *l || !*h));
        }

        #[test]
        fn codes_file_round_trips(vals in proptest::collection::vec(proptest::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 3), 1..5)) {
            let codes: Vec<LatentCode> = vals.into_iter().enumerate()
                .map(|(i, v)| LatentCode::real(format!("d{i}"), "l", v)).collect();
            let mut buf = Vec::new();
            write_codes(&mut buf, &codes).unwrap();
            prop_assert_eq!(read_codes(&buf[..]).unwrap(), codes);
        }
    }
}
