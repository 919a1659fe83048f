//! Recall@k / MAP@k evaluation stratified by the number of ground-truth
//! citations per query context.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{CitationInstance, CocitationTable, Corpus, PaperId, Split};
use crate::encoder::{EncoderParams, TokenizedDoc, Vocab};
use crate::error::{Error, Result};
use crate::retrieval::{build_index, parallel_map, query_topk, EmbeddingIndex, IndexOptions};
use crate::rng::stream_rng;
use crate::sampling::{sample_manuscript_context, SamplingConfig};

/// `|truth ∩ top-k| / |truth|`.
pub fn recall_at_k(ranked: &[PaperId], truth: &BTreeSet<PaperId>, k: usize) -> Result<f64> {
    check(truth, k)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| truth.contains(*id))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Truncated average precision: the sum of precision@r over ranks `r ≤ k`
/// holding a relevant item, divided by `min(|truth|, k)`.
pub fn average_precision_at_k(
    ranked: &[PaperId],
    truth: &BTreeSet<PaperId>,
    k: usize,
) -> Result<f64> {
    check(truth, k)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, id) in ranked.iter().take(k).enumerate() {
        if truth.contains(id) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / truth.len().min(k) as f64)
}

/// Mean of [`average_precision_at_k`] over `(ranked, truth)` pairs.
pub fn map_at_k(queries: &[(Vec<PaperId>, BTreeSet<PaperId>)], k: usize) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::NoQueries("empty query set".into()));
    }
    let total: f64 = queries
        .iter()
        .map(|(ranked, truth)| average_precision_at_k(ranked, truth, k))
        .sum::<Result<f64>>()?;
    Ok(total / queries.len() as f64)
}

fn check(truth: &BTreeSet<PaperId>, k: usize) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("ground truth set is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidatePool {
    /// Train-split papers only.
    #[default]
    Train,
    /// Every paper in the corpus.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    /// Co-citation frequencies at or below this are the low band.
    pub band_threshold: u64,
    pub candidates: CandidatePool,
    pub index_seed: u64,
    pub query_seed: u64,
    pub index_samples: usize,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            band_threshold: 2,
            candidates: CandidatePool::Train,
            index_seed: 0,
            query_seed: 0,
            index_samples: 1,
            workers: 1,
        }
    }
}

/// A ranked list with its ground truth, ready for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredQuery {
    pub source: PaperId,
    pub anchor_sentence_index: usize,
    pub ranked: Vec<PaperId>,
    pub truth: BTreeSet<PaperId>,
}

pub const STRATUM_SINGLE: &str = "P=1";
pub const STRATUM_ANY: &str = "P>=1";
pub const STRATUM_MULTI: &str = "P>=2";

#[derive(Clone, Debug, PartialEq)]
pub struct StratumResult {
    pub stratum: String,
    pub n_queries: usize,
    /// `None` when the stratum is empty.
    pub recall: Option<f64>,
    pub map: Option<f64>,
}

/// Recall over individual ground-truth items in one co-citation band.
#[derive(Clone, Debug, PartialEq)]
pub struct BandResult {
    pub band: String,
    pub n_items: usize,
    pub recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub objective: String,
    pub strata: Vec<StratumResult>,
    /// Share of P≥2 queries whose entire ground truth is in the top k.
    pub full_list: StratumResult,
    pub bands: Vec<BandResult>,
    /// Test instances with no indexed ground truth.
    pub excluded: usize,
    /// Ground-truth items dropped because they are not indexed.
    pub dropped_targets: usize,
}

fn stratum(name: &str, queries: &[&ScoredQuery], k: usize) -> Result<StratumResult> {
    if queries.is_empty() {
        return Ok(StratumResult {
            stratum: name.into(),
            n_queries: 0,
            recall: None,
            map: None,
        });
    }
    let mut recall = 0.0;
    let mut ap = 0.0;
    for q in queries {
        recall += recall_at_k(&q.ranked, &q.truth, k)?;
        ap += average_precision_at_k(&q.ranked, &q.truth, k)?;
    }
    let n = queries.len() as f64;
    Ok(StratumResult {
        stratum: name.into(),
        n_queries: queries.len(),
        recall: Some(recall / n),
        map: Some(ap / n),
    })
}

/// Aggregates scored queries into a report. Each ground-truth item of a P≥2
/// query is banded by its highest historical co-citation frequency with the
/// other items of the same query.
pub fn aggregate(
    queries: &[ScoredQuery],
    k: usize,
    history: &CocitationTable,
    band_threshold: u64,
    objective: &str,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let all: Vec<&ScoredQuery> = queries.iter().collect();
    let single: Vec<&ScoredQuery> = queries.iter().filter(|q| q.truth.len() == 1).collect();
    let multi: Vec<&ScoredQuery> = queries.iter().filter(|q| q.truth.len() >= 2).collect();

    let full_hits = multi
        .iter()
        .filter(|q| {
            q.truth
                .iter()
                .all(|t| q.ranked.iter().take(k).any(|r| r == t))
        })
        .count();
    let full_list = StratumResult {
        stratum: format!("{STRATUM_MULTI}:full-list"),
        n_queries: multi.len(),
        recall: (!multi.is_empty()).then(|| full_hits as f64 / multi.len() as f64),
        map: None,
    };

    let (mut low, mut high) = ((0usize, 0usize), (0usize, 0usize));
    for q in &multi {
        let top: BTreeSet<&PaperId> = q.ranked.iter().take(k).collect();
        for t in &q.truth {
            let freq = q
                .truth
                .iter()
                .filter(|o| *o != t)
                .map(|o| history.frequency(t, o))
                .max()
                .unwrap_or(0);
            let band = if freq <= band_threshold {
                &mut low
            } else {
                &mut high
            };
            band.0 += 1;
            band.1 += usize::from(top.contains(t));
        }
    }
    let band = |name: &str, (n, hits): (usize, usize)| BandResult {
        band: format!("{STRATUM_MULTI}:{name}"),
        n_items: n,
        recall: (n > 0).then(|| hits as f64 / n as f64),
    };
    Ok(EvalReport {
        k,
        objective: objective.into(),
        strata: vec![
            stratum(STRATUM_SINGLE, &single, k)?,
            stratum(STRATUM_ANY, &all, k)?,
            stratum(STRATUM_MULTI, &multi, k)?,
        ],
        full_list,
        bands: vec![band("low-band", low), band("high-band", high)],
        excluded: 0,
        dropped_targets: 0,
    })
}

impl EvalReport {
    pub fn stratum(&self, name: &str) -> Option<&StratumResult> {
        self.strata.iter().find(|s| s.stratum == name)
    }

    /// Recall@k of a stratum, if it has queries.
    pub fn recall(&self, name: &str) -> Option<f64> {
        self.stratum(name).and_then(|s| s.recall)
    }

    pub const CSV_HEADER: &'static str = "stratum,metric,k,value,n_queries,objective";

    /// CSV rows (without header): stratum, metric, k, value, n_queries, objective.
    /// Empty strata have value `NA`.
    pub fn csv_rows(&self) -> Vec<String> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let mut rows = Vec::new();
        for s in &self.strata {
            for (metric, value) in [("recall", s.recall), ("map", s.map)] {
                rows.push(format!(
                    "{},{metric},{},{},{},{}",
                    s.stratum,
                    self.k,
                    fmt(value),
                    s.n_queries,
                    self.objective
                ));
            }
        }
        rows.push(format!(
            "{},recall,{},{},{},{}",
            self.full_list.stratum,
            self.k,
            fmt(self.full_list.recall),
            self.full_list.n_queries,
            self.objective
        ));
        for b in &self.bands {
            rows.push(format!(
                "{},recall,{},{},{},{}",
                b.band,
                self.k,
                fmt(b.recall),
                b.n_items,
                self.objective
            ));
        }
        rows.push(format!(
            "excluded,count,{},{},{},{}",
            self.k, self.excluded, self.excluded, self.objective
        ));
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in self.csv_rows() {
            out.push_str(&r);
            out.push('\n');
        }
        out
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let pct =
            |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let mut out = String::new();
        let _ = writeln!(out, "objective: {}  (k = {})", self.objective, self.k);
        let _ = writeln!(
            out,
            "{:<20} {:>9} {:>9} {:>9}",
            "stratum", "queries", "Recall", "MAP"
        );
        for s in &self.strata {
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9}",
                s.stratum,
                s.n_queries,
                pct(s.recall),
                pct(s.map)
            );
        }
        let f = &self.full_list;
        let _ = writeln!(
            out,
            "{:<20} {:>9} {:>9} {:>9}",
            f.stratum,
            f.n_queries,
            pct(f.recall),
            "-"
        );
        for b in &self.bands {
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9}",
                b.band,
                b.n_items,
                pct(b.recall),
                "-"
            );
        }
        let _ = writeln!(
            out,
            "excluded queries: {}  dropped unindexed targets: {}",
            self.excluded, self.dropped_targets
        );
        out
    }
}

/// Candidate ids for the configured pool, in corpus order.
pub fn candidate_ids(corpus: &Corpus, pool: CandidatePool) -> Vec<PaperId> {
    match pool {
        CandidatePool::Train => corpus.ids_in(Split::Train),
        CandidatePool::All => corpus.papers().iter().map(|p| p.id.clone()).collect(),
    }
}

/// Inputs shared by index building and query encoding.
#[derive(Clone, Copy, Debug)]
pub struct EvalData<'a> {
    pub corpus: &'a Corpus,
    pub vocab: &'a Vocab,
    /// Training-time co-citation history, used for frequency bands.
    pub history: &'a CocitationTable,
    pub sampling: &'a SamplingConfig,
}

/// Encodes one query context per test instance with the manuscript encoder
/// and ranks the index. Ground truth is restricted to indexed targets;
/// instances left with none are excluded.
pub fn score_queries(
    manuscript: &EncoderParams,
    index: &EmbeddingIndex,
    instances: &[CitationInstance],
    data: &EvalData<'_>,
    config: &EvalConfig,
) -> Result<(Vec<ScoredQuery>, usize, usize)> {
    let indexed: BTreeSet<&PaperId> = index.ids().iter().collect();
    let mut dropped = 0;
    let mut excluded = 0;
    let mut work = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let truth: BTreeSet<PaperId> = inst
            .target_ids
            .iter()
            .filter(|t| indexed.contains(t))
            .cloned()
            .collect();
        dropped += inst.target_ids.len() - truth.len();
        if truth.is_empty() {
            excluded += 1;
        } else {
            work.push((i, inst, truth));
        }
    }
    let max_len = manuscript.config.max_sentence_len;
    let scored = parallel_map(
        &work,
        config.workers,
        |_, (i, inst, truth)| -> Result<ScoredQuery> {
            let paper = data.corpus.paper(&inst.source_id)?;
            let mut rng = stream_rng(config.query_seed, 2, *i as u64);
            let sample = sample_manuscript_context(
                paper,
                inst.anchor_sentence_index,
                data.sampling,
                &mut rng,
            )?;
            let doc = TokenizedDoc::from_sample(paper, &sample, data.vocab, max_len);
            let query = manuscript.encode(&doc)?;
            let ranked = query_topk(index, query.as_slice(), index.len())?;
            Ok(ScoredQuery {
                source: inst.source_id.clone(),
                anchor_sentence_index: inst.anchor_sentence_index,
                ranked: ranked.ids(),
                truth: truth.clone(),
            })
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((scored, excluded, dropped))
}

/// Scores `instances` against an existing index.
pub fn evaluate_with_index(
    manuscript: &EncoderParams,
    index: &EmbeddingIndex,
    instances: &[CitationInstance],
    data: &EvalData<'_>,
    config: &EvalConfig,
    objective: &str,
) -> Result<EvalReport> {
    let (queries, excluded, dropped) = score_queries(manuscript, index, instances, data, config)?;
    if queries.is_empty() {
        return Err(Error::NoQueries(
            "no test instance has an indexed ground truth".into(),
        ));
    }
    let mut report = aggregate(
        &queries,
        config.k,
        data.history,
        config.band_threshold,
        objective,
    )?;
    report.excluded = excluded;
    report.dropped_targets = dropped;
    Ok(report)
}

/// Builds the candidate index with the citation encoder, then scores every
/// test instance with the manuscript encoder.
pub fn evaluate(
    manuscript: &EncoderParams,
    citation: &EncoderParams,
    instances: &[CitationInstance],
    data: &EvalData<'_>,
    config: &EvalConfig,
    objective: &str,
) -> Result<EvalReport> {
    let candidates = candidate_ids(data.corpus, config.candidates);
    let options = IndexOptions {
        sampling: data.sampling,
        seed: config.index_seed,
        samples: config.index_samples,
        workers: config.workers,
        checkpoint_hash: String::new(),
    };
    let (index, _) = build_index(citation, data.corpus, data.vocab, &candidates, &options)?;
    evaluate_with_index(manuscript, &index, instances, data, config, objective)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<PaperId> {
        xs.iter().map(|x| PaperId::from(*x)).collect()
    }

    fn set(xs: &[&str]) -> BTreeSet<PaperId> {
        ids(xs).into_iter().collect()
    }

    #[test]
    fn recall_examples() {
        let ranked = ids(&["a", "x", "y"]);
        assert_eq!(recall_at_k(&ranked, &set(&["a"]), 10).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ranked, &set(&["q"]), 10).unwrap(), 0.0);
        assert_eq!(recall_at_k(&ranked, &set(&["a", "b"]), 10).unwrap(), 0.5);
        assert!(recall_at_k(&ranked, &BTreeSet::new(), 10).is_err());
        assert!(recall_at_k(&ranked, &set(&["a"]), 0).is_err());
    }

    #[test]
    fn average_precision_hand_case() {
        let ranked = ids(&["x", "a", "y", "z", "b", "w"]);
        let ap = average_precision_at_k(&ranked, &set(&["a", "b"]), 10).unwrap();
        assert!((ap - 0.45).abs() < 1e-15);
        assert_eq!(
            map_at_k(
                &[(ids(&["a"]), set(&["a"])), (ids(&["b", "c"]), set(&["b"]))],
                10
            )
            .unwrap(),
            1.0
        );
        assert_eq!(map_at_k(&[(ids(&["x"]), set(&["a"]))], 10).unwrap(), 0.0);
        assert!(matches!(map_at_k(&[], 10), Err(Error::NoQueries(_))));
    }

    fn query(ranked: &[&str], truth: &[&str]) -> ScoredQuery {
        ScoredQuery {
            source: "s".into(),
            anchor_sentence_index: 0,
            ranked: ids(ranked),
            truth: set(truth),
        }
    }

    #[test]
    fn three_query_fixture() {
        let queries = vec![
            query(&["a", "b", "c"], &["a"]),
            query(&["c", "d", "e"], &["d", "z"]),
            query(&["x", "y", "e"], &["e", "y"]),
        ];
        let report = aggregate(&queries, 2, &CocitationTable::default(), 2, "test").unwrap();
        let single = report.stratum(STRATUM_SINGLE).unwrap();
        assert_eq!(single.n_queries, 1);
        assert_eq!(single.recall, Some(1.0));
        assert_eq!(single.map, Some(1.0));
        let multi = report.stratum(STRATUM_MULTI).unwrap();
        assert_eq!(multi.n_queries, 2);
        // query 2: d at rank 2 -> recall 1/2, AP (1/2)/2; query 3: y at rank 2 -> same
        assert_eq!(multi.recall, Some(0.5));
        assert_eq!(multi.map, Some(0.25));
        let any = report.stratum(STRATUM_ANY).unwrap();
        assert_eq!(any.n_queries, 3);
        assert!((any.recall.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((any.map.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(report.full_list.recall, Some(0.0));
        assert_eq!(report.bands[0].n_items, 4);
        assert_eq!(report.bands[1].recall, None);
    }

    #[test]
    fn empty_multi_stratum_is_reported() {
        let report = aggregate(
            &[query(&["a"], &["a"])],
            10,
            &CocitationTable::default(),
            2,
            "t",
        )
        .unwrap();
        let multi = report.stratum(STRATUM_MULTI).unwrap();
        assert_eq!((multi.n_queries, multi.recall), (0, None));
        assert!(report.to_csv().contains("P>=2,recall,10,NA,0,t"));
    }
}
