//! Event data model, ingestion, vocabulary, and prefix/horizon splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default forecast horizon length.
pub const DEFAULT_HORIZON: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub timestamp: f64,
    pub category: usize,
    pub numeric: Vec<f64>,
}

impl Event {
    pub fn new(timestamp: f64, category: usize) -> Self {
        Event {
            timestamp,
            category,
            numeric: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub user_id: String,
    pub events: Vec<Event>,
}

impl EventSequence {
    /// Builds a sequence from bare category indices with timestamps 0, 1, 2, ...
    pub fn from_categories(user_id: impl Into<String>, cats: &[usize]) -> Self {
        EventSequence {
            user_id: user_id.into(),
            events: cats
                .iter()
                .enumerate()
                .map(|(t, &c)| Event::new(t as f64, c))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn categories(&self) -> Vec<usize> {
        categories(&self.events)
    }
}

pub fn categories(events: &[Event]) -> Vec<usize> {
    events.iter().map(|e| e.category).collect()
}

/// Bijection between category labels and dense indices `0..K`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: IndexSet<String>,
}

impl Vocabulary {
    pub const UNK: &'static str = "<unk>";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Vocabulary {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Returns the index of `label`, inserting it if unseen.
    pub fn intern(&mut self, label: &str) -> usize {
        match self.labels.get_index_of(label) {
            Some(i) => i,
            None => self.labels.insert_full(label.to_string()).0,
        }
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.get_index_of(label)
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get_index(index).map(String::as_str)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy of this vocabulary with the reserved unknown label appended (if not
    /// already present).
    pub fn with_unk(&self) -> Self {
        let mut v = self.clone();
        v.intern(Self::UNK);
        v
    }

    pub fn unk_index(&self) -> Option<usize> {
        self.index(Self::UNK)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<EventSequence>,
    pub vocab: Vocabulary,
    /// Number of numeric features carried by every event.
    pub num_features: usize,
    /// Number of sequences whose input rows were not in timestamp order and had
    /// to be sorted during ingestion.
    pub resorted: usize,
}

impl Dataset {
    pub fn new(sequences: Vec<EventSequence>, vocab: Vocabulary) -> Self {
        let num_features = sequences
            .iter()
            .flat_map(|s| s.events.first())
            .map(|e| e.numeric.len())
            .next()
            .unwrap_or(0);
        Dataset {
            sequences,
            vocab,
            num_features,
            resorted: 0,
        }
    }

    pub fn num_categories(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn mean_len(&self) -> f64 {
        if self.sequences.is_empty() {
            return 0.0;
        }
        let total: usize = self.sequences.iter().map(EventSequence::len).sum();
        total as f64 / self.sequences.len() as f64
    }

    /// Re-expresses this dataset in terms of `target` (usually a training
    /// vocabulary that already carries the unknown label). Labels missing from
    /// `target` map to its unknown index.
    pub fn remap(&self, target: &Vocabulary) -> Result<Dataset> {
        let unk = target.unk_index();
        let mut table = Vec::with_capacity(self.vocab.len());
        for label in self.vocab.labels() {
            let idx = match target.index(label).or(unk) {
                Some(i) => i,
                None => {
                    return Err(Error::Config(format!(
                        "label {label:?} not in target vocabulary and no unknown slot reserved"
                    )))
                }
            };
            table.push(idx);
        }
        let sequences = self
            .sequences
            .iter()
            .map(|s| EventSequence {
                user_id: s.user_id.clone(),
                events: s
                    .events
                    .iter()
                    .map(|e| Event {
                        category: table[e.category],
                        ..e.clone()
                    })
                    .collect(),
            })
            .collect();
        Ok(Dataset {
            sequences,
            vocab: target.clone(),
            num_features: self.num_features,
            resorted: self.resorted,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown data format {other:?}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Str(String),
    Num(serde_json::Number),
}

impl RawLabel {
    fn into_string(self) -> String {
        match self {
            RawLabel::Str(s) => s,
            RawLabel::Num(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    user_id: RawLabel,
    t: f64,
    cat: RawLabel,
    #[serde(default)]
    num: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct JsonRecordOut<'a> {
    user_id: &'a str,
    t: f64,
    cat: &'a str,
    #[serde(skip_serializing_if = "<[f64]>::is_empty")]
    num: &'a [f64],
}

/// Accumulates rows in file order and groups them by user.
struct Builder {
    users: IndexMap<String, Vec<Event>>,
    vocab: Vocabulary,
    num_features: Option<usize>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            users: IndexMap::new(),
            vocab: Vocabulary::new(),
            num_features: None,
        }
    }

    fn push(&mut self, line: usize, user: String, t: f64, cat: &str, num: Vec<f64>) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("timestamp {t} is not finite"),
            });
        }
        match self.num_features {
            None => self.num_features = Some(num.len()),
            Some(m) if m != num.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {m} numeric features, found {}", num.len()),
                })
            }
            _ => {}
        }
        let category = self.vocab.intern(cat);
        self.users.entry(user).or_default().push(Event {
            timestamp: t,
            category,
            numeric: num,
        });
        Ok(())
    }

    fn finish(self) -> Dataset {
        let mut resorted = 0;
        let sequences = self
            .users
            .into_iter()
            .map(|(user_id, mut events)| {
                if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
                    resorted += 1;
                    // stable: equal timestamps keep file order
                    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
                }
                EventSequence { user_id, events }
            })
            .collect();
        Dataset {
            sequences,
            vocab: self.vocab,
            num_features: self.num_features.unwrap_or(0),
            resorted,
        }
    }
}

pub fn ingest(path: &Path, format: Format) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Jsonl => read_jsonl(BufReader::new(file)),
        Format::Csv => read_csv(file),
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut b = Builder::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        b.push(lineno, rec.user_id.into_string(), rec.t, &rec.cat.into_string(), rec.num)?;
    }
    Ok(b.finish())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let expected = ["user_id", "t", "cat"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with user_id,t,cat".into(),
        });
    }
    let mut b = Builder::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let lineno = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("cannot parse {what} {s:?} as a number"),
            })
        };
        let t = parse(&rec[1], "timestamp")?;
        let num = (3..rec.len())
            .map(|j| parse(&rec[j], "numeric feature"))
            .collect::<Result<Vec<_>>>()?;
        b.push(lineno, rec[0].to_string(), t, &rec[2], num)?;
    }
    Ok(b.finish())
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    for seq in &dataset.sequences {
        for e in &seq.events {
            let rec = JsonRecordOut {
                user_id: &seq.user_id,
                t: e.timestamp,
                cat: label_of(&dataset.vocab, e.category)?,
                num: &e.numeric,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::io("<output>", std::io::Error::other(e));
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["user_id".to_string(), "t".into(), "cat".into()];
    header.extend((1..=dataset.num_features).map(|j| format!("num_{j}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for seq in &dataset.sequences {
        for e in &seq.events {
            let mut row = vec![
                seq.user_id.clone(),
                e.timestamp.to_string(),
                label_of(&dataset.vocab, e.category)?.to_string(),
            ];
            row.extend(e.numeric.iter().map(f64::to_string));
            wtr.write_record(&row).map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn save(dataset: &Dataset, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    match format {
        Format::Jsonl => write_jsonl(dataset, w),
        Format::Csv => write_csv(dataset, w),
    }
}

fn label_of(vocab: &Vocabulary, index: usize) -> Result<&str> {
    vocab.label(index).ok_or(Error::CategoryOutOfRange {
        index,
        size: vocab.len(),
    })
}

/// A prefix/horizon split of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastTask<'a> {
    pub user_id: &'a str,
    pub prefix: &'a [Event],
    pub horizon: &'a [Event],
}

impl<'a> ForecastTask<'a> {
    pub fn horizon_len(&self) -> usize {
        self.horizon.len()
    }

    pub fn prefix_categories(&self) -> Vec<usize> {
        categories(self.prefix)
    }

    pub fn horizon_categories(&self) -> Vec<usize> {
        categories(self.horizon)
    }
}

/// Splits off the last `horizon` events as the forecast target.
pub fn split_prefix_horizon(seq: &EventSequence, horizon: usize) -> Result<ForecastTask<'_>> {
    if seq.len() <= horizon {
        return Err(Error::TooShort {
            len: seq.len(),
            horizon,
        });
    }
    let (prefix, tail) = seq.events.split_at(seq.len() - horizon);
    Ok(ForecastTask {
        user_id: &seq.user_id,
        prefix,
        horizon: tail,
    })
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no categories".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {p} outside [0, inf)")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(CategoricalDistribution { probs })
    }

    pub fn uniform(k: usize) -> Self {
        CategoricalDistribution {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn one_hot(k: usize, at: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[at] = 1.0;
        CategoricalDistribution { probs }
    }

    /// Numerically stable softmax of a logit vector.
    pub fn from_logits(logits: &[f64]) -> Self {
        CategoricalDistribution {
            probs: softmax(logits),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// Lowest index among the maximal entries.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Category multiplicities over `0..k`.
pub fn counts(cats: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut c = vec![0usize; k];
    for &x in cats {
        *c.get_mut(x).ok_or(Error::CategoryOutOfRange { index: x, size: k })? += 1;
    }
    Ok(c)
}

/// Empirical category frequencies of a list of events.
pub fn empirical_distribution(cats: &[usize], k: usize) -> Result<CategoricalDistribution> {
    if cats.is_empty() {
        return Err(Error::Empty("empirical distribution of zero events"));
    }
    let len = cats.len() as f64;
    let probs = counts(cats, k)?.into_iter().map(|c| c as f64 / len).collect();
    Ok(CategoricalDistribution { probs })
}
