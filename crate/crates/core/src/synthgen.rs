//! Synthetic planted-cluster corpora.
//!
//! Papers belong to topics with disjoint vocabularies plus a shared pool.
//! Each paper also owns a few signature tokens that appear in its abstract
//! and in sentences citing it. Multi-target citation instances are drawn from
//! per-topic planted groups whose popularity follows a power law, so
//! co-citation pairs recur with skewed frequencies.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationAnchor, Corpus, Paper, PaperId};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, seeded, StreamRng};

pub const PLANTED_HEADER: &str = "#mpcite-planted v1";

/// Anchor sentences of consecutive instances are at least this far apart, so
/// their context windows never merge.
const INSTANCE_SPACING: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub papers: usize,
    pub topics: usize,
    /// Distinct tokens per topic.
    pub topic_vocab: usize,
    /// Size of the pool shared by every topic.
    pub shared_vocab: usize,
    /// Probability that a filler token comes from the shared pool.
    pub shared_rate: f64,
    /// Paper-specific tokens per paper.
    pub signature_tokens: usize,
    pub abstract_sentences: usize,
    /// Mean body length in sentences.
    pub body_sentences: usize,
    /// Body lengths are uniform in `body_sentences ± body_spread`.
    pub body_spread: usize,
    pub sentence_len_min: usize,
    pub sentence_len_max: usize,
    pub instances_per_paper: usize,
    /// Fraction of instances that cite a planted group of 2+ papers.
    pub cocitation_rate: f64,
    pub max_targets: usize,
    pub groups_per_topic: usize,
    /// Group `g` (0-based) of a topic is picked with weight `(g + 1)^-skew`.
    pub skew: f64,
    /// Probability that a co-cited paper other than the lead target is
    /// mentioned by its signature in the citing text.
    pub mention_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            papers: 200,
            topics: 20,
            topic_vocab: 50,
            shared_vocab: 100,
            shared_rate: 0.2,
            signature_tokens: 2,
            abstract_sentences: 4,
            body_sentences: 20,
            body_spread: 4,
            sentence_len_min: 6,
            sentence_len_max: 12,
            instances_per_paper: 3,
            cocitation_rate: 0.5,
            max_targets: 3,
            groups_per_topic: 4,
            skew: 1.0,
            mention_rate: 0.5,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.topics < 2 {
            return bad(format!("need at least 2 topics, got {}", self.topics));
        }
        for (name, v) in [
            ("cocitation_rate", self.cocitation_rate),
            ("shared_rate", self.shared_rate),
            ("mention_rate", self.mention_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.topic_vocab == 0 || (self.shared_rate > 0.0 && self.shared_vocab == 0) {
            return bad(
                "topic_vocab must be >= 1 and shared_vocab >= 1 when shared_rate > 0".into(),
            );
        }
        if self.sentence_len_min == 0 || self.sentence_len_min > self.sentence_len_max {
            return bad(format!(
                "sentence length range {}..={} is empty",
                self.sentence_len_min, self.sentence_len_max
            ));
        }
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return bad(format!("skew must be >= 0, got {}", self.skew));
        }
        if self.body_spread > self.body_sentences {
            return bad("body_spread exceeds body_sentences".into());
        }
        let per_topic = self.papers / self.topics;
        if per_topic < 2 {
            return bad(format!(
                "{} papers over {} topics leaves fewer than 2 papers per topic",
                self.papers, self.topics
            ));
        }
        if self.instances_per_paper > 0 && self.max_targets.max(1) >= per_topic {
            return bad(format!(
                "up to {} targets per instance needs more than {per_topic} papers per topic",
                self.max_targets
            ));
        }
        if self.cocitation_rate > 0.0 && (self.max_targets < 2 || self.groups_per_topic == 0) {
            return bad("co-citation needs max_targets >= 2 and groups_per_topic >= 1".into());
        }
        let min_body = self.body_sentences - self.body_spread;
        let needed = self.instances_per_paper * INSTANCE_SPACING;
        if needed > min_body {
            return bad(format!(
                "{} instances need {needed} body sentences, shortest body has {min_body}",
                self.instances_per_paper
            ));
        }
        Ok(())
    }
}

/// A co-cited pair with its planted frequency; `a < b`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PlantedPair {
    pub a: PaperId,
    pub b: PaperId,
    pub frequency: u64,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub planted: Vec<PlantedPair>,
    pub topic_of: BTreeMap<PaperId, usize>,
}

struct Vocabulary {
    topics: Vec<Vec<String>>,
    shared: Vec<String>,
}

impl Vocabulary {
    fn sentence(&self, topic: usize, cfg: &SynthConfig, rng: &mut StreamRng) -> Vec<String> {
        let len = rng.random_range(cfg.sentence_len_min..=cfg.sentence_len_max);
        (0..len)
            .map(|_| {
                let pool = if rng.random_bool(cfg.shared_rate) {
                    &self.shared
                } else {
                    &self.topics[topic]
                };
                pool.choose(rng).expect("nonempty pool").clone()
            })
            .collect()
    }
}

fn insert_tokens(sentence: &mut Vec<String>, tokens: &[String], rng: &mut StreamRng) {
    for t in tokens {
        let at = rng.random_range(0..=sentence.len());
        sentence.insert(at, t.clone());
    }
}

fn paper_id(i: usize) -> PaperId {
    PaperId(format!("P{i:04}"))
}

/// Generates a corpus and the planted co-citation pairs with their exact
/// frequencies.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = seeded(mix_seed(cfg.seed, &[0x5e7]));
    let vocab = Vocabulary {
        topics: (0..cfg.topics)
            .map(|t| (0..cfg.topic_vocab).map(|k| format!("t{t}w{k}")).collect())
            .collect(),
        shared: (0..cfg.shared_vocab).map(|k| format!("s{k}")).collect(),
    };
    let n = cfg.papers;
    let topic_of: Vec<usize> = (0..n).map(|i| i % cfg.topics).collect();
    let members: Vec<Vec<usize>> = (0..cfg.topics)
        .map(|t| (0..n).filter(|&i| topic_of[i] == t).collect())
        .collect();
    let signatures: Vec<Vec<String>> = (0..n)
        .map(|i| {
            (0..cfg.signature_tokens)
                .map(|j| format!("p{i}x{j}"))
                .collect()
        })
        .collect();

    // planted groups: sorted member lists per topic
    let groups: Vec<Vec<Vec<usize>>> = members
        .iter()
        .map(|m| {
            (0..cfg.groups_per_topic)
                .map(|_| {
                    let size = rng.random_range(2..=cfg.max_targets.max(2));
                    let mut g: Vec<usize> = index::sample(&mut rng, m.len(), size)
                        .into_iter()
                        .map(|k| m[k])
                        .collect();
                    g.sort_unstable();
                    g
                })
                .collect()
        })
        .collect();
    let group_weights: Vec<f64> = (0..cfg.groups_per_topic)
        .map(|g| ((g + 1) as f64).powf(-cfg.skew))
        .collect();

    let mut pair_counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut papers = Vec::with_capacity(n);
    for i in 0..n {
        let topic = topic_of[i];
        let abstract_sentences = (0..cfg.abstract_sentences)
            .map(|k| {
                let mut s = vocab.sentence(topic, cfg, &mut rng);
                // the first abstract sentence always names the paper
                if k == 0 || rng.random_bool(0.5) {
                    insert_tokens(&mut s, &signatures[i], &mut rng);
                }
                s
            })
            .collect();
        let body_len = rng.random_range(
            cfg.body_sentences - cfg.body_spread..=cfg.body_sentences + cfg.body_spread,
        );
        let mut body: Vec<Vec<String>> = (0..body_len)
            .map(|_| vocab.sentence(topic, cfg, &mut rng))
            .collect();

        // instance slots: a random subset of a grid spaced INSTANCE_SPACING apart
        let grid: Vec<usize> = (1..)
            .map(|k| k * INSTANCE_SPACING - 2)
            .take_while(|&s| s + 1 < body_len)
            .collect();
        let mut slots: Vec<usize> = index::sample(
            &mut rng,
            grid.len(),
            cfg.instances_per_paper.min(grid.len()),
        )
        .into_iter()
        .map(|k| grid[k])
        .collect();
        slots.sort_unstable();

        let mut anchors = Vec::new();
        for &slot in &slots {
            let mut targets: Vec<usize> = Vec::new();
            if rng.random_bool(cfg.cocitation_rate) {
                let eligible: Vec<usize> = (0..cfg.groups_per_topic)
                    .filter(|&g| !groups[topic][g].contains(&i))
                    .collect();
                if let Ok(&g) = eligible.choose_weighted(&mut rng, |&g| group_weights[g]) {
                    targets = groups[topic][g].clone();
                    targets.shuffle(&mut rng);
                }
            }
            if targets.is_empty() {
                let others: Vec<usize> =
                    members[topic].iter().copied().filter(|&j| j != i).collect();
                targets.push(
                    *others
                        .choose(&mut rng)
                        .expect("at least two papers per topic"),
                );
            }
            let (lead, rest) = targets.split_first().expect("nonempty");
            insert_tokens(&mut body[slot], &signatures[*lead], &mut rng);
            anchors.push(CitationAnchor {
                sentence_index: slot,
                target_id: paper_id(*lead),
            });
            for (k, &t) in rest.iter().enumerate() {
                let sentence = slot + k % 2;
                if rng.random_bool(cfg.mention_rate) {
                    insert_tokens(&mut body[sentence], &signatures[t], &mut rng);
                }
                anchors.push(CitationAnchor {
                    sentence_index: sentence,
                    target_id: paper_id(t),
                });
            }
            for (x, &a) in targets.iter().enumerate() {
                for &b in &targets[x + 1..] {
                    *pair_counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
        }
        papers.push(Paper {
            id: paper_id(i),
            abstract_sentences,
            body_sentences: body,
            anchors,
        });
    }
    let (corpus, _) = Corpus::new(papers)?;
    let planted = pair_counts
        .into_iter()
        .map(|((a, b), frequency)| PlantedPair {
            a: paper_id(a),
            b: paper_id(b),
            frequency,
        })
        .collect();
    Ok(SynthCorpus {
        corpus,
        planted,
        topic_of: (0..n).map(|i| (paper_id(i), topic_of[i])).collect(),
    })
}

pub fn write_planted<W: Write>(pairs: &[PlantedPair], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PLANTED_HEADER}")?;
    for p in pairs {
        writeln!(out, "{}\t{}\t{}", p.a, p.b, p.frequency)?;
    }
    Ok(())
}

pub fn save_planted(pairs: &[PlantedPair], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_planted(pairs, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_planted<R: BufRead>(input: R) -> Result<Vec<PlantedPair>> {
    let mut lines = input.lines().enumerate();
    let parse = |line: usize, message: String| Error::Parse { line, message };
    match lines.next() {
        Some((_, Ok(h))) if h == PLANTED_HEADER => {}
        _ => return Err(parse(1, format!("missing header {PLANTED_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [a, b, f] = fields[..] else {
            return Err(parse(
                i + 1,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        };
        let frequency = f
            .parse()
            .map_err(|e| parse(i + 1, format!("bad frequency {f:?}: {e}")))?;
        out.push(PlantedPair {
            a: a.into(),
            b: b.into(),
            frequency,
        });
    }
    Ok(out)
}

pub fn load_planted(path: &Path) -> Result<Vec<PlantedPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_planted(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_cocitation_table, extract_citation_instances};

    #[test]
    fn planted_pairs_match_extracted_table() {
        let out = generate(&SynthConfig::default()).unwrap();
        let table = build_cocitation_table(&extract_citation_instances(&out.corpus));
        let extracted: Vec<PlantedPair> = table
            .pairs()
            .map(|(a, b, f)| PlantedPair {
                a: a.clone(),
                b: b.clone(),
                frequency: f,
            })
            .collect();
        assert!(!out.planted.is_empty());
        assert_eq!(extracted, out.planted);
        for p in &out.planted {
            assert_eq!(out.topic_of[&p.a], out.topic_of[&p.b]);
        }
    }

    #[test]
    fn zero_rate_has_no_cocitations() {
        let cfg = SynthConfig {
            cocitation_rate: 0.0,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        assert!(out.planted.is_empty());
        assert!(build_cocitation_table(&extract_citation_instances(&out.corpus)).is_empty());
    }

    #[test]
    fn every_citation_is_same_topic() {
        let out = generate(&SynthConfig::default()).unwrap();
        for p in out.corpus.papers() {
            for a in &p.anchors {
                assert_eq!(out.topic_of[&p.id], out.topic_of[&a.target_id]);
                assert_ne!(p.id, a.target_id);
            }
        }
    }

    #[test]
    fn deterministic_and_round_trips() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.planted, b.planted);
        let mut buf = Vec::new();
        a.corpus.write_to(&mut buf).unwrap();
        let (back, report) = Corpus::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, a.corpus);
        assert_eq!(report.dropped_anchors, 0);

        let mut buf = Vec::new();
        write_planted(&a.planted, &mut buf).unwrap();
        assert_eq!(read_planted(buf.as_slice()).unwrap(), a.planted);
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let cases = [
            SynthConfig {
                topics: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                papers: 60,
                topics: 20,
                ..SynthConfig::default()
            },
            SynthConfig {
                cocitation_rate: 1.5,
                ..SynthConfig::default()
            },
            SynthConfig {
                instances_per_paper: 10,
                ..SynthConfig::default()
            },
        ];
        for c in cases {
            assert!(
                matches!(generate(&c), Err(Error::InvalidArgument(_))),
                "{c:?}"
            );
        }
    }
}
