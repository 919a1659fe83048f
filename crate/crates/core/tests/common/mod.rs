#![allow(dead_code)]

use std::collections::BTreeSet;

use mpcite_core::corpus::PaperId;
use mpcite_core::encoder::EncoderConfig;
use mpcite_core::objectives::{LossResult, Objective, TripletBatch};
use mpcite_core::pipeline::{prepare, Prepared};
use mpcite_core::sampling::SamplingConfig;
use mpcite_core::synthgen::{generate, SynthConfig};

pub fn ids(names: &[&str]) -> Vec<PaperId> {
    names.iter().map(|&n| PaperId::from(n)).collect()
}

pub fn set(names: &[&str]) -> BTreeSet<PaperId> {
    names.iter().map(|&n| PaperId::from(n)).collect()
}

/// Hits in the first `k` over |truth|, counted by scanning.
pub fn oracle_recall(ranked: &[PaperId], truth: &BTreeSet<PaperId>, k: usize) -> f64 {
    let mut hits = 0;
    for r in ranked.iter().take(k) {
        if truth.iter().any(|t| t == r) {
            hits += 1;
        }
    }
    hits as f64 / truth.len() as f64
}

/// Mean of precision@i over hit ranks i ≤ k, divided by min(|truth|, k).
pub fn oracle_ap(ranked: &[PaperId], truth: &BTreeSet<PaperId>, k: usize) -> f64 {
    let mut sum = 0.0;
    let mut hits = 0.0;
    for (i, r) in ranked.iter().take(k).enumerate() {
        if truth.contains(r) {
            hits += 1.0;
            sum += hits / (i + 1) as f64;
        }
    }
    sum / truth.len().min(k) as f64
}

/// Full sort by (cosine desc, id asc), truncated to k.
pub fn oracle_topk(
    ids: &[PaperId],
    rows: &[Vec<f64>],
    query: &[f64],
    k: usize,
) -> Vec<(PaperId, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut all: Vec<(PaperId, f64)> = ids
        .iter()
        .zip(rows)
        .map(|(id, r)| {
            let dot: f64 = r.iter().zip(query).map(|(a, b)| a * b).sum();
            (id.clone(), dot / (norm(r) * qn) + 0.0)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn loss(
    objective: Objective,
    s: &[f64],
    t: &[f64],
    pos: &[Vec<f64>],
    neg: &[Vec<f64>],
) -> LossResult {
    let batch = TripletBatch::new(
        s,
        t,
        pos.iter().map(|v| v.as_slice()).collect(),
        neg.iter().map(|v| v.as_slice()).collect(),
    );
    objective.evaluate(&batch).unwrap()
}

/// Five-point central-difference gradients of the loss with respect to every
/// input vector, in the order source, target, positives, negatives. The
/// two-point stencil's rounding error (ε·|loss|/h) alone exceeds 1e-6
/// relative on small gradient components.
pub fn numeric_grads(
    objective: Objective,
    vectors: &[Vec<f64>],
    n_pos: usize,
    h: f64,
) -> Vec<Vec<f64>> {
    let eval = |vs: &[Vec<f64>]| {
        loss(
            objective,
            &vs[0],
            &vs[1],
            &vs[2..2 + n_pos],
            &vs[2 + n_pos..],
        )
        .value
    };
    let mut out = Vec::new();
    let mut probe = vectors.to_vec();
    for v in 0..vectors.len() {
        let mut g = Vec::new();
        for d in 0..vectors[v].len() {
            let x = vectors[v][d];
            let mut at = |dx: f64| {
                probe[v][d] = x + dx;
                eval(&probe)
            };
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            probe[v][d] = x;
            g.push((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h));
        }
        out.push(g);
    }
    out
}

pub fn analytic_grads(objective: Objective, vectors: &[Vec<f64>], n_pos: usize) -> Vec<Vec<f64>> {
    let r = loss(
        objective,
        &vectors[0],
        &vectors[1],
        &vectors[2..2 + n_pos],
        &vectors[2 + n_pos..],
    );
    let mut out = vec![r.d_source, r.d_target];
    out.extend(r.d_positives);
    out.extend(r.d_negatives);
    out
}

pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// A small synthetic corpus, split and prepared.
pub fn small_prepared(seed: u64, papers: usize) -> Prepared {
    let cfg = SynthConfig {
        papers,
        topics: 4,
        body_sentences: 16,
        seed,
        ..SynthConfig::default()
    };
    prepare(generate(&cfg).unwrap().corpus, 0.2, seed, 1).unwrap()
}

pub fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        blocks: 1,
        hidden: 8,
        heads: 2,
        feed_forward: 16,
        max_sentence_len: 12,
        max_sentences: 12,
        dropout: 0.1,
    }
}

pub fn tiny_sampling() -> SamplingConfig {
    SamplingConfig {
        manuscript_total: 6,
        citation_fundamental: 3,
        citation_supplemental: 3,
        ..SamplingConfig::default()
    }
}
