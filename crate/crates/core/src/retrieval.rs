//! Candidate embedding index and exact top-k cosine retrieval.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PaperId};
use crate::encoder::{EncoderParams, TokenizedDoc, Vocab};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, stream_rng};
use crate::sampling::{sample_citation_context, SamplingConfig};

pub const INDEX_MAGIC: &str = "mpcite-index v1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub version: u32,
    pub hidden: usize,
    pub seed: u64,
    /// Hash of the checkpoint the embeddings came from, if known.
    pub checkpoint_hash: String,
    /// Context samples averaged per candidate.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingIndex {
    pub header: IndexHeader,
    ids: Vec<PaperId>,
    /// Row-major `ids.len() × hidden`.
    matrix: Vec<f64>,
    norms: Vec<f64>,
}

/// One ranked candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub id: PaperId,
    pub score: f64,
}

/// Candidates by descending cosine score, ties by ascending id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedList {
    pub entries: Vec<Scored>,
}

impl RankedList {
    pub fn ids(&self) -> Vec<PaperId> {
        self.entries.iter().map(|s| s.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl EmbeddingIndex {
    /// Builds an index from precomputed rows. Rows must be finite and nonzero;
    /// ids must be distinct.
    pub fn from_rows(header: IndexHeader, ids: Vec<PaperId>, rows: &[Vec<f64>]) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
        }
        let hidden = header.hidden;
        let mut matrix = Vec::with_capacity(rows.len() * hidden);
        let mut norms = Vec::with_capacity(rows.len());
        for (id, row) in ids.iter().zip(rows) {
            if row.len() != hidden {
                return Err(Error::DimensionMismatch {
                    expected: hidden,
                    actual: row.len(),
                });
            }
            let n = norm(row);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "embedding of {id} is zero or non-finite"
                )));
            }
            matrix.extend_from_slice(row);
            norms.push(n);
        }
        Ok(EmbeddingIndex {
            header,
            ids,
            matrix,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.header.hidden
    }

    pub fn ids(&self) -> &[PaperId] {
        &self.ids
    }

    pub fn contains(&self, id: &PaperId) -> bool {
        self.ids.contains(id)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Cosine similarity of `query` with every candidate, in index order.
    pub fn scores(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        let qn = norm(query);
        if !(qn > 0.0 && qn.is_finite()) {
            return Err(Error::InvalidArgument(
                "query vector is zero or non-finite".into(),
            ));
        }
        Ok((0..self.len())
            .map(|i| {
                let dot: f64 = self.row(i).iter().zip(query).map(|(a, b)| a * b).sum();
                // + 0.0 folds -0.0 into 0.0 so exact ties compare equal
                dot / (qn * self.norms[i]) + 0.0
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Checkpoint(format!("writing index: {e}"));
        let json = |e: serde_json::Error| Error::Checkpoint(e.to_string());
        writeln!(out, "{INDEX_MAGIC}").map_err(io)?;
        writeln!(
            out,
            "{}",
            serde_json::to_string(&self.header).map_err(json)?
        )
        .map_err(io)?;
        writeln!(out, "{}", serde_json::to_string(&self.ids).map_err(json)?).map_err(io)?;
        for v in &self.matrix {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let corrupt = |m: String| Error::Checkpoint(format!("index: {m}"));
        let mut input = BufReader::new(input);
        let mut line = |what: &str| -> Result<String> {
            let mut s = String::new();
            std::io::BufRead::read_line(&mut input, &mut s).map_err(|e| corrupt(e.to_string()))?;
            if !s.ends_with('\n') {
                return Err(corrupt(format!("truncated {what}")));
            }
            s.pop();
            Ok(s)
        };
        let magic = line("magic")?;
        if magic != INDEX_MAGIC {
            return Err(corrupt(format!("bad magic {magic:?}")));
        }
        let header: IndexHeader =
            serde_json::from_str(&line("header")?).map_err(|e| corrupt(e.to_string()))?;
        let ids: Vec<PaperId> =
            serde_json::from_str(&line("id list")?).map_err(|e| corrupt(e.to_string()))?;
        let mut raw = Vec::new();
        input
            .read_to_end(&mut raw)
            .map_err(|e| corrupt(e.to_string()))?;
        if raw.len() != ids.len() * header.hidden * 8 {
            return Err(corrupt(format!(
                "matrix has {} bytes, expected {}",
                raw.len(),
                ids.len() * header.hidden * 8
            )));
        }
        let rows: Vec<Vec<f64>> = raw
            .chunks_exact(8 * header.hidden.max(1))
            .map(|r| {
                r.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect()
            })
            .collect();
        Self::from_rows(header, ids, &rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path).map_err(|e| Error::io(path, e))?)
    }
}

fn rank_order(scores: &[f64], ids: &[PaperId], a: usize, b: usize) -> Ordering {
    scores[b]
        .total_cmp(&scores[a])
        .then_with(|| ids[a].cmp(&ids[b]))
}

/// Exact top-`k` candidates by cosine similarity. `k` larger than the index
/// returns every candidate.
pub fn query_topk(index: &EmbeddingIndex, query: &[f64], k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let scores = index.scores(query)?;
    let ids = index.ids();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let k = k.min(order.len());
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, |&a, &b| rank_order(&scores, ids, a, b));
        order.truncate(k);
    }
    order.sort_unstable_by(|&a, &b| rank_order(&scores, ids, a, b));
    Ok(RankedList {
        entries: order
            .into_iter()
            .map(|i| Scored {
                id: ids[i].clone(),
                score: scores[i],
            })
            .collect(),
    })
}

/// Runs `f` over `items` on up to `workers` threads, keeping input order.
pub(crate) fn parallel_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, t)| f(c * chunk + i, t))
                        .collect::<Vec<U>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Options for [`build_index`].
#[derive(Clone, Debug)]
pub struct IndexOptions<'a> {
    pub sampling: &'a SamplingConfig,
    pub seed: u64,
    /// Context samples averaged per candidate (1 = a single fixed sample).
    pub samples: usize,
    pub workers: usize,
    pub checkpoint_hash: String,
}

/// Encodes every candidate with the citation parameters. Each candidate's
/// context sample is seeded by `(seed, corpus position)`, so the result does
/// not depend on candidate order or worker count. Candidates without content
/// are skipped and returned separately.
pub fn build_index(
    citation: &EncoderParams,
    corpus: &Corpus,
    vocab: &Vocab,
    candidates: &[PaperId],
    options: &IndexOptions<'_>,
) -> Result<(EmbeddingIndex, Vec<PaperId>)> {
    if options.samples == 0 {
        return Err(Error::InvalidArgument("index samples must be >= 1".into()));
    }
    let mut unique: Vec<PaperId> = candidates.to_vec();
    unique.sort();
    unique.dedup();
    let mut usable = Vec::new();
    let mut skipped = Vec::new();
    for id in unique {
        let paper = corpus.paper(&id)?;
        if paper.has_content() {
            usable.push(id);
        } else {
            log::warn!("candidate {id} has no sentences; not indexed");
            skipped.push(id);
        }
    }
    let max_len = citation.config.max_sentence_len;
    let rows = parallel_map(&usable, options.workers, |_, id| -> Result<Vec<f64>> {
        let paper = corpus.paper(id)?;
        let position = corpus.position(id).expect("resolved above") as u64;
        let mut acc = vec![0.0; citation.hidden()];
        for s in 0..options.samples {
            let mut rng = stream_rng(mix_seed(options.seed, &[s as u64]), 1, position);
            let sample = sample_citation_context(paper, options.sampling, &mut rng)?;
            let doc = TokenizedDoc::from_sample(paper, &sample, vocab, max_len);
            for (a, v) in acc.iter_mut().zip(citation.encode(&doc)?.0) {
                *a += v;
            }
        }
        let scale = 1.0 / options.samples as f64;
        Ok(acc.into_iter().map(|v| v * scale).collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let header = IndexHeader {
        version: 1,
        hidden: citation.hidden(),
        seed: options.seed,
        checkpoint_hash: options.checkpoint_hash.clone(),
        samples: options.samples,
    };
    Ok((EmbeddingIndex::from_rows(header, usable, &rows)?, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(hidden: usize) -> IndexHeader {
        IndexHeader {
            version: 1,
            hidden,
            ..IndexHeader::default()
        }
    }

    #[test]
    fn self_similarity_ranks_first() {
        let rows = vec![
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            vec![0.2, 0.2, 0.2],
        ];
        let ids: Vec<PaperId> = ["a", "b", "c"].into_iter().map(PaperId::from).collect();
        let index = EmbeddingIndex::from_rows(header(3), ids, &rows).unwrap();
        let ranked = query_topk(&index, &rows[1], 2).unwrap();
        assert_eq!(ranked.entries[0].id, PaperId::from("b"));
        assert!((ranked.entries[0].score - 1.0).abs() < 1e-12);
        assert_eq!(ranked.len(), 2);
    }

    #[test]
    fn orthogonal_query_ties_break_by_id() {
        let rows = vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ];
        let ids: Vec<PaperId> = ["z", "m", "a"].into_iter().map(PaperId::from).collect();
        let index = EmbeddingIndex::from_rows(header(3), ids, &rows).unwrap();
        let ranked = query_topk(&index, &[5.0, 0.0, 0.0], 10).unwrap();
        assert_eq!(
            ranked.ids(),
            vec![PaperId::from("a"), "m".into(), "z".into()]
        );
        assert!(ranked.entries.iter().all(|s| s.score == 0.0));
    }

    #[test]
    fn errors() {
        let index =
            EmbeddingIndex::from_rows(header(2), vec!["a".into()], &[vec![1.0, 0.0]]).unwrap();
        assert!(query_topk(&index, &[0.0, 0.0], 1).is_err());
        assert!(query_topk(&index, &[1.0, 0.0], 0).is_err());
        assert!(query_topk(&index, &[1.0], 1).is_err());
        assert!(EmbeddingIndex::from_rows(header(2), vec!["a".into()], &[vec![0.0, 0.0]]).is_err());
        assert!(EmbeddingIndex::from_rows(
            header(2),
            vec!["a".into(), "a".into()],
            &[vec![1.0, 0.0], vec![0.0, 1.0]]
        )
        .is_err());
    }

    #[test]
    fn file_round_trip() {
        let rows = vec![vec![1.0, 2.0], vec![-3.0, 0.25]];
        let index =
            EmbeddingIndex::from_rows(header(2), vec!["x".into(), "y".into()], &rows).unwrap();
        let mut buf = Vec::new();
        index.write_to(&mut buf).unwrap();
        assert_eq!(EmbeddingIndex::read_from(buf.as_slice()).unwrap(), index);
        assert!(EmbeddingIndex::read_from(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..37).collect();
        for w in [1, 2, 5, 64] {
            assert_eq!(
                parallel_map(&items, w, |i, x| i * 100 + x),
                items.iter().map(|x| x * 101).collect::<Vec<_>>()
            );
        }
    }
}
