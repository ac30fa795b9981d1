//! Bag-of-words ingestion: vocabularies, sparse count documents, splits and
//! the plain-text file formats used to move them between commands.
//!
//! File formats (all UTF-8, `\n`-terminated lines):
//!
//! * vocabulary: one token per line, the 0-based line number is the index;
//! * corpus: `doc_id<TAB>label<TAB>idx:count idx:count ...` with ascending
//!   indices and positive counts;
//! * raw text: `doc_id<TAB>label<TAB>whitespace separated tokens`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary token {tok:?}"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: "empty vocabulary token".into(),
                });
            }
            tokens.push(line);
        }
        Self::new(tokens)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }
}

/// A document as sparse word counts over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowDocument {
    doc_id: String,
    label: String,
    counts: BTreeMap<usize, u64>,
    total: u64,
}

impl BowDocument {
    /// Zero counts are dropped; repeated indices are summed.
    pub fn new(
        doc_id: impl Into<String>,
        label: impl Into<String>,
        counts: impl IntoIterator<Item = (usize, u64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (idx, c) in counts {
            if c > 0 {
                *map.entry(idx).or_insert(0) += c;
            }
        }
        let total = map.values().sum();
        Self {
            doc_id: doc_id.into(),
            label: label.into(),
            counts: map,
            total,
        }
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    /// Document length N: the sum of all counts.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// One past the largest word index, or 0 for an empty document.
    pub fn min_vocab_size(&self) -> usize {
        self.counts.keys().next_back().map_or(0, |&i| i + 1)
    }

    pub fn to_dense(&self, vocab_size: usize) -> Array1<f64> {
        let mut v = Array1::zeros(vocab_size);
        for (&i, &c) in &self.counts {
            v[i] = c as f64;
        }
        v
    }

    pub(crate) fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        if self.min_vocab_size() > vocab_size {
            return Err(Error::Shape(format!(
                "document {:?} uses word index {} but the vocabulary has {vocab_size} words",
                self.doc_id,
                self.min_vocab_size() - 1
            )));
        }
        Ok(())
    }
}

/// Stacks documents into a dense `n × vocab_size` count matrix.
pub fn dense_counts(docs: &[&BowDocument], vocab_size: usize) -> Array2<f64> {
    let mut m = Array2::zeros((docs.len(), vocab_size));
    for (r, doc) in docs.iter().enumerate() {
        for (&i, &c) in &doc.counts {
            m[[r, i]] = c as f64;
        }
    }
    m
}

/// Fails with every offending doc_id if any document has no words.
pub fn reject_degenerate<'a, I>(docs: I) -> Result<()>
where
    I: IntoIterator<Item = &'a BowDocument>,
{
    let bad: Vec<String> = docs
        .into_iter()
        .filter(|d| d.total == 0)
        .map(|d| d.doc_id.clone())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::DegenerateDocument { doc_ids: bad })
    }
}

#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: Vec<BowDocument>,
    pub test: Vec<BowDocument>,
    pub vocabulary: Vocabulary,
}

/// The `target_size` most frequent tokens, ties broken lexicographically.
pub fn build_vocabulary<S: AsRef<str>>(
    tokenized_docs: &[Vec<S>],
    target_size: usize,
) -> Result<Vocabulary> {
    if target_size == 0 {
        return Err(Error::InvalidArgument("target vocabulary size must be >= 1".into()));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for doc in tokenized_docs {
        for tok in doc {
            *freq.entry(tok.as_ref()).or_insert(0) += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(target_size);
    Vocabulary::new(ranked.into_iter().map(|(t, _)| t.to_owned()).collect())
}

/// Counts in-vocabulary tokens; everything else is dropped.
pub fn vectorize<S: AsRef<str>>(
    doc_id: impl Into<String>,
    label: impl Into<String>,
    tokens: &[S],
    vocab: &Vocabulary,
) -> BowDocument {
    let counts = tokens
        .iter()
        .filter_map(|t| vocab.index_of(t.as_ref()))
        .map(|i| (i, 1));
    BowDocument::new(doc_id, label, counts)
}

/// Seeded shuffle followed by a `⌈fraction·n⌉` train cut.
///
/// When any document carries a label the cut is stratified: each label
/// gets `⌊fraction·n_label⌋` training documents and the remaining slots go
/// to the labels with the largest fractional remainders, so every label's
/// share is within one document of `fraction·n_label`.
pub fn split_corpus(
    docs: Vec<BowDocument>,
    vocabulary: Vocabulary,
    train_fraction: f64,
    seed: u64,
) -> Result<CorpusSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut seen = HashSet::new();
    for d in &docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateDocId(d.doc_id.clone()));
        }
        d.check_vocab(vocabulary.len())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng);

    let n_train = (train_fraction * docs.len() as f64).ceil() as usize;
    let labeled = docs.iter().any(|d| !d.label.is_empty());

    let mut is_train = vec![false; docs.len()];
    if labeled {
        // Groups keep shuffled order; BTreeMap fixes label iteration order.
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in &order {
            groups.entry(docs[i].label.as_str()).or_default().push(i);
        }
        let mut quota: Vec<(usize, f64)> = groups
            .values()
            .map(|g| {
                let exact = train_fraction * g.len() as f64;
                (exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = quota.iter().map(|q| q.0).sum();
        let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
        by_remainder.sort_by(|&a, &b| quota[b].1.total_cmp(&quota[a].1).then(a.cmp(&b)));
        for &g in by_remainder.iter().take(n_train.saturating_sub(assigned)) {
            quota[g].0 += 1;
        }
        for (group, (take, _)) in groups.values().zip(&quota) {
            for &i in group.iter().take(*take) {
                is_train[i] = true;
            }
        }
    } else {
        for &i in order.iter().take(n_train) {
            is_train[i] = true;
        }
    }

    let mut slots: Vec<Option<BowDocument>> = docs.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(slots.len() - n_train);
    for &i in &order {
        let doc = slots[i].take().expect("each index visited once");
        if is_train[i] {
            train.push(doc);
        } else {
            test.push(doc);
        }
    }
    Ok(CorpusSplit {
        train,
        test,
        vocabulary,
    })
}

fn split_fields(line: &str, lineno: usize) -> Result<(&str, &str, &str)> {
    let mut it = line.splitn(3, '\t');
    match (it.next(), it.next(), it.next()) {
        (Some(id), Some(label), Some(rest)) if !id.is_empty() => Ok((id, label, rest)),
        (Some(""), ..) => Err(Error::Parse {
            line: lineno,
            msg: "empty doc_id".into(),
        }),
        _ => Err(Error::Parse {
            line: lineno,
            msg: "expected doc_id<TAB>label<TAB>payload".into(),
        }),
    }
}

/// A raw-text document: identifier, label and its tokens in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: String,
    pub label: String,
    pub tokens: Vec<String>,
}

pub fn read_raw<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (id, label, text) = split_fields(&line, n + 1)?;
        if !seen.insert(id.to_owned()) {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("duplicate doc_id {id:?}"),
            });
        }
        docs.push(RawDocument {
            doc_id: id.to_owned(),
            label: label.to_owned(),
            tokens: text.split_whitespace().map(str::to_owned).collect(),
        });
    }
    Ok(docs)
}

/// Parses a corpus file. When `vocab_size` is given every index is
/// checked against it.
pub fn read_corpus<R: BufRead>(reader: R, vocab_size: Option<usize>) -> Result<Vec<BowDocument>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (id, label, payload) = split_fields(&line, lineno)?;
        if !seen.insert(id.to_owned()) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("duplicate doc_id {id:?}"),
            });
        }
        let mut counts = Vec::new();
        let mut prev: Option<usize> = None;
        for entry in payload.split_whitespace() {
            let bad = |msg: String| Error::Parse { line: lineno, msg };
            let (i, c) = entry
                .split_once(':')
                .ok_or_else(|| bad(format!("expected idx:count, got {entry:?}")))?;
            let idx: usize = i.parse().map_err(|_| bad(format!("bad index {i:?}")))?;
            let count: u64 = c.parse().map_err(|_| bad(format!("bad count {c:?}")))?;
            if count == 0 {
                return Err(bad(format!("zero count at index {idx}")));
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(bad("indices must be strictly ascending".into()));
            }
            if let Some(d) = vocab_size {
                if idx >= d {
                    return Err(bad(format!("index {idx} outside vocabulary of {d}")));
                }
            }
            prev = Some(idx);
            counts.push((idx, count));
        }
        docs.push(BowDocument::new(id, label, counts));
    }
    Ok(docs)
}

pub fn write_corpus<'a, W, I>(mut out: W, docs: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a BowDocument>,
{
    for doc in docs {
        write!(out, "{}\t{}\t", doc.doc_id, doc.label)?;
        for (k, (i, c)) in doc.counts.iter().enumerate() {
            if k > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{i}:{c}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
