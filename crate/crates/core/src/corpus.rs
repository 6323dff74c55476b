//! Message records, JSONL ingestion, block splitting and the synthetic
//! corpus generator.
//!
//! Embeddings are normalized to unit length when a [`Corpus`] is built, so
//! cosine similarity between two records is a plain dot product.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::round_sig9;

/// Attribute categories emitted by the generator.
pub const ATTRIBUTE_CATEGORIES: [&str; 3] = ["entity", "mention", "user"];

/// One social message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: String,
    pub block: u32,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub attributes: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub label: Option<String>,
}

impl MessageRecord {
    /// True if the two records share at least one token in any category.
    pub fn shares_attribute(&self, other: &MessageRecord) -> bool {
        self.attributes.iter().any(|(category, tokens)| {
            other
                .attributes
                .get(category)
                .is_some_and(|theirs| !tokens.is_disjoint(theirs))
        })
    }
}

/// An immutable, validated collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<MessageRecord>,
    dim: usize,
    /// `blocks[b]` holds the record indices of block `b`, ascending.
    blocks: Vec<Vec<usize>>,
    all: Vec<usize>,
}

impl Corpus {
    /// Validates and normalizes `records`.
    ///
    /// Rejects empty input, dimension mismatches, duplicate ids, zero
    /// vectors and non-contiguous block numbering.
    pub fn new(mut records: Vec<MessageRecord>) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Validation("corpus is empty".into()));
        };
        let dim = first.embedding.len();
        if dim == 0 {
            return Err(Error::Validation("embeddings must be non-empty".into()));
        }

        let mut seen = HashSet::with_capacity(records.len());
        let mut max_block = 0u32;
        for record in &mut records {
            if record.embedding.len() != dim {
                return Err(Error::Validation(format!(
                    "record {:?} has dimension {}, expected {dim}",
                    record.id,
                    record.embedding.len()
                )));
            }
            if !seen.insert(record.id.clone()) {
                return Err(Error::Validation(format!("duplicate id {:?}", record.id)));
            }
            normalize(&mut record.embedding).ok_or_else(|| {
                Error::Validation(format!(
                    "record {:?} has a zero or non-finite embedding",
                    record.id
                ))
            })?;
            max_block = max_block.max(record.block);
        }

        let mut blocks = vec![Vec::new(); max_block as usize + 1];
        for (idx, record) in records.iter().enumerate() {
            blocks[record.block as usize].push(idx);
        }
        if let Some(missing) = blocks.iter().position(Vec::is_empty) {
            return Err(Error::Validation(format!(
                "block indices must be contiguous from 0; block {missing} is empty"
            )));
        }

        let all = (0..records.len()).collect();
        Ok(Corpus {
            records,
            dim,
            blocks,
            all,
        })
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// One view per block, ordered by block index.
    pub fn split_blocks(&self) -> Vec<BlockView<'_>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, indices)| BlockView {
                corpus: self,
                block: Some(b as u32),
                indices,
            })
            .collect()
    }

    /// The whole corpus as a single view (closed-set / pooled runs).
    pub fn pooled(&self) -> BlockView<'_> {
        BlockView {
            corpus: self,
            block: None,
            indices: &self.all,
        }
    }

    /// Reads a JSONL corpus, one record per non-blank line.
    pub fn ingest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: MessageRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
            records.push(record);
        }
        Corpus::new(records)
    }

    /// Writes the corpus as JSONL with embeddings rounded to 9 significant digits.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for record in &self.records {
            let mut rounded = record.clone();
            rounded
                .embedding
                .iter_mut()
                .for_each(|x| *x = round_sig9(*x));
            let line = serde_json::to_string(&rounded).expect("records always serialize");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

/// A borrowed subset of a corpus processed as one detection instance.
#[derive(Debug, Clone, Copy)]
pub struct BlockView<'a> {
    corpus: &'a Corpus,
    block: Option<u32>,
    indices: &'a [usize],
}

impl<'a> BlockView<'a> {
    /// Block index, or `None` for a pooled view.
    pub fn block(&self) -> Option<u32> {
        self.block
    }

    /// Directory-friendly name: `block_<b>` or `pooled`.
    pub fn name(&self) -> String {
        match self.block {
            Some(b) => format!("block_{b}"),
            None => "pooled".to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.corpus.dim
    }

    /// Corpus-level indices of the records in this view.
    pub fn indices(&self) -> &'a [usize] {
        self.indices
    }

    pub fn record(&self, local: usize) -> &'a MessageRecord {
        &self.corpus.records[self.indices[local]]
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &'a MessageRecord> + '_ {
        self.indices.iter().map(|&i| &self.corpus.records[i])
    }

    pub fn embedding(&self, local: usize) -> &'a [f64] {
        &self.record(local).embedding
    }

    pub fn ids(&self) -> Vec<String> {
        self.records().map(|r| r.id.clone()).collect()
    }

    /// Gold labels, or `None` if any record is unlabeled.
    pub fn labels(&self) -> Option<Vec<String>> {
        self.records().map(|r| r.label.clone()).collect()
    }

    /// Exact cosine similarity between two local nodes.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        dot(self.embedding(i), self.embedding(j))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Members per event: one count for all events, or one count each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointsPerEvent {
    Uniform(usize),
    PerEvent(Vec<usize>),
}

fn default_blocks() -> usize {
    1
}

/// Parameters of the mixture-of-events generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_events: usize,
    pub points_per_event: PointsPerEvent,
    pub dim: usize,
    /// Larger values pull members closer to their event center.
    pub intra_concentration: f64,
    /// Probability that a given same-event pair shares an attribute token.
    pub attribute_sharing_prob: f64,
    pub seed: u64,
    /// Events are dealt round-robin over this many blocks.
    #[serde(default = "default_blocks")]
    pub num_blocks: usize,
}

impl SynthConfig {
    pub fn new(num_events: usize, points_per_event: usize, dim: usize, seed: u64) -> Self {
        SynthConfig {
            num_events,
            points_per_event: PointsPerEvent::Uniform(points_per_event),
            dim,
            intra_concentration: 20.0,
            attribute_sharing_prob: 0.1,
            seed,
            num_blocks: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!(
                "dim must be at least 2, got {}",
                self.dim
            )));
        }
        if self.num_events == 0 {
            return Err(Error::Config("num_events must be positive".into()));
        }
        match &self.points_per_event {
            PointsPerEvent::Uniform(0) => {
                return Err(Error::Config("points_per_event must be positive".into()))
            }
            PointsPerEvent::PerEvent(counts) => {
                if counts.len() != self.num_events {
                    return Err(Error::Config(format!(
                        "points_per_event lists {} counts for {} events",
                        counts.len(),
                        self.num_events
                    )));
                }
                if counts.contains(&0) {
                    return Err(Error::Config("points_per_event must be positive".into()));
                }
            }
            PointsPerEvent::Uniform(_) => {}
        }
        if !(self.intra_concentration > 0.0 && self.intra_concentration.is_finite()) {
            return Err(Error::Config("intra_concentration must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.attribute_sharing_prob) {
            return Err(Error::Config(
                "attribute_sharing_prob must lie in [0, 1]".into(),
            ));
        }
        if self.num_blocks == 0 || self.num_blocks > self.num_events {
            return Err(Error::Config(format!(
                "num_blocks must be in [1, num_events], got {}",
                self.num_blocks
            )));
        }
        Ok(())
    }

    fn count(&self, event: usize) -> usize {
        match &self.points_per_event {
            PointsPerEvent::Uniform(n) => *n,
            PointsPerEvent::PerEvent(counts) => counts[event],
        }
    }
}

/// Draws a labeled corpus: one random unit center per event, members are
/// `normalize(center + z / intra_concentration)` with `z ~ N(0, I)`.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;

    struct Draft {
        event: usize,
        embedding: Vec<f64>,
        attributes: BTreeMap<String, BTreeSet<String>>,
    }

    let mut drafts = Vec::new();
    for event in 0..config.num_events {
        let center = unit_gaussian(&mut rng, dim);
        let first = drafts.len();
        for _ in 0..config.count(event) {
            let embedding: Vec<f64> = center
                .iter()
                .map(|c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + z / config.intra_concentration
                })
                .collect();
            drafts.push(Draft {
                event,
                embedding,
                attributes: BTreeMap::new(),
            });
        }
        let members = first..drafts.len();
        let mut token = 0usize;
        for a in members.clone() {
            for b in (a + 1)..members.end {
                if rng.random_bool(config.attribute_sharing_prob) {
                    let category =
                        ATTRIBUTE_CATEGORIES[rng.random_range(0..ATTRIBUTE_CATEGORIES.len())];
                    let name = format!("e{event}_{category}{token}");
                    token += 1;
                    for idx in [a, b] {
                        drafts[idx]
                            .attributes
                            .entry(category.to_string())
                            .or_default()
                            .insert(name.clone());
                    }
                }
            }
        }
    }
    drafts.shuffle(&mut rng);

    let records = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| MessageRecord {
            id: format!("m{i:06}"),
            block: (d.event % config.num_blocks) as u32,
            embedding: d.embedding,
            attributes: d.attributes,
            label: Some(format!("event_{}", d.event)),
        })
        .collect();
    Corpus::new(records)
}

fn unit_gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut v).is_some() {
            return v;
        }
    }
}
