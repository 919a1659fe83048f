//! Sentence-segmented papers with citation anchors, and the citation
//! statistics derived from them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Required first line of a corpus file.
pub const CORPUS_HEADER: &str = "#mpcite-corpus v1";

/// A sentence is a pre-segmented sequence of word tokens.
pub type Sentence = Vec<String>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaperId(pub String);

impl PaperId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PaperId {
    fn from(s: &str) -> Self {
        PaperId(s.to_owned())
    }
}

impl From<String> for PaperId {
    fn from(s: String) -> Self {
        PaperId(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationAnchor {
    /// Zero-based index into the body sentences.
    #[serde(rename = "sent")]
    pub sentence_index: usize,
    #[serde(rename = "target")]
    pub target_id: PaperId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paper {
    pub id: PaperId,
    #[serde(rename = "abstract")]
    pub abstract_sentences: Vec<Sentence>,
    #[serde(rename = "body")]
    pub body_sentences: Vec<Sentence>,
    #[serde(rename = "citations")]
    pub anchors: Vec<CitationAnchor>,
}

impl Paper {
    pub fn has_content(&self) -> bool {
        !self.abstract_sentences.is_empty() || !self.body_sentences.is_empty()
    }
}

/// On-disk record: a paper plus its optional split tag.
#[derive(Serialize, Deserialize)]
struct Record {
    #[serde(flatten)]
    paper: Paper,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

/// Validated collection of papers, keyed by id, each tagged train or test.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    papers: Vec<Paper>,
    splits: Vec<Split>,
    index: HashMap<PaperId, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub papers: usize,
    pub anchors: usize,
    /// Anchors whose target is not in the corpus.
    pub dropped_anchors: usize,
}

impl Corpus {
    /// Builds a corpus, dropping anchors that point outside it.
    pub fn new(papers: Vec<Paper>) -> Result<(Self, LoadReport)> {
        let splits = vec![Split::Train; papers.len()];
        Self::with_splits(papers, splits)
    }

    fn with_splits(mut papers: Vec<Paper>, splits: Vec<Split>) -> Result<(Self, LoadReport)> {
        let mut index = HashMap::with_capacity(papers.len());
        for (i, paper) in papers.iter().enumerate() {
            if paper.id.0.is_empty() {
                return Err(Error::Validation(format!("paper #{i} has an empty id")));
            }
            if index.insert(paper.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(paper.id.0.clone()));
            }
        }
        let mut report = LoadReport {
            papers: papers.len(),
            ..Default::default()
        };
        for paper in &mut papers {
            let n_body = paper.body_sentences.len();
            if let Some(bad) = paper.anchors.iter().find(|a| a.sentence_index >= n_body) {
                return Err(Error::Validation(format!(
                    "paper {:?}: anchor sentence {} out of range (body has {} sentences)",
                    paper.id.0, bad.sentence_index, n_body
                )));
            }
            let before = paper.anchors.len();
            paper.anchors.retain(|a| index.contains_key(&a.target_id));
            let dropped = before - paper.anchors.len();
            if dropped > 0 {
                log::warn!(
                    "paper {}: dropped {dropped} dangling citation anchor(s)",
                    paper.id
                );
            }
            report.dropped_anchors += dropped;
            report.anchors += paper.anchors.len();
        }
        Ok((
            Corpus {
                papers,
                splits,
                index,
            },
            report,
        ))
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn papers(&self) -> &[Paper] {
        &self.papers
    }

    pub fn get(&self, id: &PaperId) -> Option<&Paper> {
        self.index.get(id).map(|&i| &self.papers[i])
    }

    pub fn paper(&self, id: &PaperId) -> Result<&Paper> {
        self.get(id)
            .ok_or_else(|| Error::UnknownPaper(id.0.clone()))
    }

    pub fn position(&self, id: &PaperId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &PaperId) -> bool {
        self.index.contains_key(id)
    }

    pub fn split_of(&self, id: &PaperId) -> Option<Split> {
        self.index.get(id).map(|&i| self.splits[i])
    }

    pub fn ids_in(&self, split: Split) -> Vec<PaperId> {
        self.papers
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(p, _)| p.id.clone())
            .collect()
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    /// Writes the corpus in the line-delimited record format.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CORPUS_HEADER}")?;
        for (paper, split) in self.papers.iter().zip(&self.splits) {
            let record = Record {
                paper: paper.clone(),
                split: Some(*split),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<(Self, LoadReport)> {
        let mut lines = input.lines().enumerate();
        match lines.next() {
            Some((_, Ok(first))) if first.trim_end() == CORPUS_HEADER => {}
            Some((_, Ok(first))) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {CORPUS_HEADER:?}, found {first:?}"),
                })
            }
            Some((_, Err(e))) => {
                return Err(Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing header line".into(),
                })
            }
        }
        let mut papers = Vec::new();
        let mut splits = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            papers.push(record.paper);
            splits.push(record.split.unwrap_or_default());
        }
        Self::with_splits(papers, splits)
    }
}

/// Loads and validates a corpus file.
pub fn load_corpus(path: &Path) -> Result<(Corpus, LoadReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::read_from(BufReader::new(file))
}

/// One citing context window and the set of papers it cites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CitationInstance {
    pub source_id: PaperId,
    /// First anchor sentence of the (possibly merged) window.
    pub anchor_sentence_index: usize,
    pub target_ids: BTreeSet<PaperId>,
}

impl CitationInstance {
    pub fn positives(&self) -> usize {
        self.target_ids.len()
    }
}

/// Groups each paper's anchors into three-sentence windows (anchor ± 1),
/// merging windows whose spans overlap.
pub fn extract_citation_instances(corpus: &Corpus) -> Vec<CitationInstance> {
    let mut out = Vec::new();
    for paper in corpus.papers() {
        let mut by_sentence: BTreeMap<usize, BTreeSet<PaperId>> = BTreeMap::new();
        for anchor in &paper.anchors {
            if anchor.target_id == paper.id {
                continue;
            }
            by_sentence
                .entry(anchor.sentence_index)
                .or_default()
                .insert(anchor.target_id.clone());
        }
        let mut current: Option<(usize, usize, BTreeSet<PaperId>)> = None;
        for (sentence, targets) in by_sentence {
            match current.as_mut() {
                // spans [a-1, a+1] and [b-1, b+1] overlap iff b - a <= 2
                Some((_, last, set)) if sentence - *last <= 2 => {
                    *last = sentence;
                    set.extend(targets);
                }
                _ => {
                    if let Some((first, _, set)) = current.take() {
                        out.push(CitationInstance {
                            source_id: paper.id.clone(),
                            anchor_sentence_index: first,
                            target_ids: set,
                        });
                    }
                    current = Some((sentence, sentence, targets));
                }
            }
        }
        if let Some((first, _, set)) = current {
            out.push(CitationInstance {
                source_id: paper.id.clone(),
                anchor_sentence_index: first,
                target_ids: set,
            });
        }
    }
    out
}

fn ordered_pair(a: &PaperId, b: &PaperId) -> (PaperId, PaperId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Co-citation frequency per unordered pair of papers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CocitationTable {
    pairs: BTreeMap<(PaperId, PaperId), u64>,
    partners: HashMap<PaperId, BTreeMap<PaperId, u64>>,
}

impl CocitationTable {
    pub fn frequency(&self, a: &PaperId, b: &PaperId) -> u64 {
        if a == b {
            return 0;
        }
        self.pairs.get(&ordered_pair(a, b)).copied().unwrap_or(0)
    }

    /// Papers co-cited with `id`, in id order, with their frequencies.
    pub fn partners(&self, id: &PaperId) -> impl Iterator<Item = (&PaperId, u64)> {
        self.partners
            .get(id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k, *v)))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&PaperId, &PaperId, u64)> {
        self.pairs.iter().map(|((a, b), f)| (a, b, *f))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn build_cocitation_table(instances: &[CitationInstance]) -> CocitationTable {
    let mut table = CocitationTable::default();
    for instance in instances {
        let targets: Vec<&PaperId> = instance.target_ids.iter().collect();
        for (i, a) in targets.iter().enumerate() {
            for b in &targets[i + 1..] {
                *table.pairs.entry(ordered_pair(a, b)).or_insert(0) += 1;
                *table
                    .partners
                    .entry((*a).clone())
                    .or_default()
                    .entry((*b).clone())
                    .or_insert(0) += 1;
                *table
                    .partners
                    .entry((*b).clone())
                    .or_default()
                    .entry((*a).clone())
                    .or_insert(0) += 1;
            }
        }
    }
    table
}

/// Number of citation instances citing each paper.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CitationCountTable {
    counts: BTreeMap<PaperId, u64>,
}

impl CitationCountTable {
    pub fn count(&self, id: &PaperId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PaperId, u64)> {
        self.counts.iter().map(|(k, v)| (k, *v))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

pub fn build_citation_counts(instances: &[CitationInstance]) -> CitationCountTable {
    let mut table = CitationCountTable::default();
    for instance in instances {
        for target in &instance.target_ids {
            *table.counts.entry(target.clone()).or_insert(0) += 1;
        }
    }
    table
}

/// Train/test sizes for `total` papers: test = floor(total * fraction),
/// clamped so both sides keep at least one paper.
pub fn split_sizes(total: usize, test_fraction: f64) -> Result<(usize, usize)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if total < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split a corpus of {total} paper(s)"
        )));
    }
    let test = ((total as f64 * test_fraction).floor() as usize).clamp(1, total - 1);
    Ok((total - test, test))
}

/// Assigns split tags by a seeded shuffle.
pub fn split_corpus(mut corpus: Corpus, test_fraction: f64, seed: u64) -> Result<Corpus> {
    let (_, n_test) = split_sizes(corpus.len(), test_fraction)?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng::seeded(rng::mix_seed(seed, &[0x5711])));
    corpus.splits = vec![Split::Train; corpus.len()];
    for &i in &order[..n_test] {
        corpus.splits[i] = Split::Test;
    }
    Ok(corpus)
}
