//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are printed as each criterion finishes.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{
    analytic_grads, ids, numeric_grads, oracle_ap, oracle_recall, oracle_topk, rel_error, set,
};
use mpcite_core::corpus::{build_citation_counts, CitationInstance, Paper, PaperId};
use mpcite_core::encoder::{
    grad_check, random_quadratic_loss, EncoderConfig, EncoderParams, TokenizedDoc, EOS,
};
use mpcite_core::eval::{
    average_precision_at_k, map_at_k, recall_at_k, STRATUM_ANY, STRATUM_MULTI,
};
use mpcite_core::objectives::{
    mpt_src_loss, mpt_src_tgt_loss, mpt_tgt_loss, triplet_loss, Objective, TripletBatch,
};
use mpcite_core::pipeline::{prepare, train_and_evaluate, Experiment};
use mpcite_core::retrieval::{query_topk, EmbeddingIndex, IndexHeader};
use mpcite_core::rng::{seeded, stream_rng};
use mpcite_core::sampling::{
    draw_negatives, negative_distribution, sample_citation_context, sample_manuscript_context,
    NoiseDistribution, SamplingConfig, Section,
};
use mpcite_core::synthgen::{generate, SynthConfig};
use mpcite_core::trainer::{
    expand_examples, fine_tune, init_encoders, train_step, EncoderRole, TrainConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn sampler_exactness() -> Outcome {
    let d = NoiseDistribution::from_frequencies(
        [(PaperId::from("A"), 16), (PaperId::from("B"), 81)],
        0.75,
    )
    .map_err(|e| e.to_string())?;
    let (pa, pb) = (d.probability(&"A".into()), d.probability(&"B".into()));
    check(
        (pa - 8.0 / 35.0).abs() < 1e-12 && (pb - 27.0 / 35.0).abs() < 1e-12,
        || format!("analytic p = ({pa}, {pb})"),
    )?;
    let n = 100_000;
    let mut rng = seeded(20_241);
    let b = (0..n).filter(|_| d.draw(&mut rng).as_str() == "B").count();
    let freq_b = b as f64 / n as f64;
    check((freq_b - 27.0 / 35.0).abs() <= 0.01, || {
        format!("empirical p(B) = {freq_b}")
    })?;
    let observed = [(n - b) as f64, b as f64];
    let expected = [n as f64 * pa, n as f64 * pb];
    let chi2: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(chi2);
    check(p > 0.01, || format!("chi-square p = {p}"))?;
    Ok(format!(
        "p = 8/35, 27/35; empirical p(B) = {freq_b:.4}; chi2 p = {p:.3}"
    ))
}

fn axis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn loss_oracles() -> Outcome {
    // Simplex corners: every pairwise distance equals sqrt(2).
    let e: Vec<Vec<f64>> = (0..9).map(|i| axis(9, i)).collect();
    let cases: Vec<(&str, f64, f64)> = vec![
        (
            "mpt-tgt n=1 m=1",
            mpt_tgt_loss(&TripletBatch::new(&e[0], &e[1], vec![&e[2]], vec![&e[3]]))
                .unwrap()
                .value,
            3f64.ln(),
        ),
        (
            "mpt-src n=1 m=1",
            mpt_src_loss(&TripletBatch::new(&e[0], &e[1], vec![&e[2]], vec![&e[3]]))
                .unwrap()
                .value,
            3f64.ln(),
        ),
        (
            "mpt-src-tgt n=1 m=1",
            mpt_src_tgt_loss(&TripletBatch::new(&e[0], &e[1], vec![&e[2]], vec![&e[3]]))
                .unwrap()
                .value,
            4f64.ln(),
        ),
        (
            "mpt-tgt n=2 m=1",
            mpt_tgt_loss(&TripletBatch::new(
                &e[0],
                &e[1],
                vec![&e[2], &e[3]],
                vec![&e[4]],
            ))
            .unwrap()
            .value,
            4f64.ln(),
        ),
        (
            "mpt-src n=3 m=4",
            mpt_src_loss(&TripletBatch::new(
                &e[0],
                &e[1],
                vec![&e[2], &e[3], &e[4]],
                vec![&e[5], &e[6], &e[7], &e[8]],
            ))
            .unwrap()
            .value,
            17f64.ln(),
        ),
        (
            "mpt-src-tgt n=3 m=4",
            mpt_src_tgt_loss(&TripletBatch::new(
                &e[0],
                &e[1],
                vec![&e[2], &e[3], &e[4]],
                vec![&e[5], &e[6], &e[7], &e[8]],
            ))
            .unwrap()
            .value,
            29f64.ln(),
        ),
    ];
    for (name, got, want) in &cases {
        check((got - want).abs() <= 1e-9, || {
            format!("{name}: {got} vs {want}")
        })?;
    }
    let o = [0.0, 0.0];
    let hinge = [
        triplet_loss(&TripletBatch::new(&o, &o, vec![], vec![&[1.0, 0.0]]))
            .unwrap()
            .value,
        triplet_loss(&TripletBatch::new(
            &o,
            &[0.0, 1.0],
            vec![],
            vec![&[1.0, 0.0]],
        ))
        .unwrap()
        .value,
        triplet_loss(&TripletBatch::new(
            &o,
            &[2.0, 0.0],
            vec![],
            vec![&[0.0, 1.0]],
        ))
        .unwrap()
        .value,
    ];
    check(hinge == [0.0, 1.0, 2.0], || {
        format!("hinge cases {hinge:?}")
    })?;
    Ok("log 3, 3, 4, 4, 17, 29 and hinge 0 / 1 / 2".into())
}

fn gradients() -> Outcome {
    let mut rng = seeded(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(0..4);
        let m = rng.random_range(1..5);
        let vs: Vec<Vec<f64>> = (0..2 + n + m)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        for objective in [Objective::MptTgt, Objective::MptSrc, Objective::MptSrcTgt] {
            let a = analytic_grads(objective, &vs, n);
            let f = numeric_grads(objective, &vs, n, 1e-4);
            for (x, y) in a.iter().flatten().zip(f.iter().flatten()) {
                worst = worst.max(rel_error(*x, *y, 1e-6));
            }
        }
    }
    check(worst <= 1e-6, || {
        format!("objective max rel error {worst:e}")
    })?;

    let config = EncoderConfig {
        blocks: 2,
        hidden: 16,
        heads: 2,
        feed_forward: 32,
        max_sentence_len: 10,
        max_sentences: 6,
        dropout: 0.1,
    };
    let params = EncoderParams::random(&config, 60, &mut seeded(21)).map_err(|e| e.to_string())?;
    let doc = TokenizedDoc {
        sentences: vec![vec![4, 8, 15, 16, EOS], vec![23, 42, 57, EOS], vec![7, EOS]],
    };
    let quadratic = grad_check(
        &params,
        &doc,
        random_quadratic_loss(16, &mut seeded(5)),
        1e-5,
        20,
        1,
    )
    .map_err(|e| e.to_string())?;
    check(quadratic.passed(), || {
        format!("encoder grad_check {:#?}", quadratic.tensors)
    })?;

    // The same check through the real objective, the document embedding in
    // the source slot.
    let fixed: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let objective_loss = |y: &[f64]| {
        let r = mpt_src_tgt_loss(&TripletBatch::new(
            y,
            &fixed[0],
            vec![&fixed[1], &fixed[2]],
            vec![&fixed[3], &fixed[4]],
        ))
        .unwrap();
        (r.value, r.d_source)
    };
    let through =
        grad_check(&params, &doc, objective_loss, 1e-5, 20, 2).map_err(|e| e.to_string())?;
    check(through.passed(), || {
        format!("encoder grad_check via objective {:#?}", through.tensors)
    })?;
    Ok(format!(
        "objectives {worst:.1e} ≤ 1e-6; encoder {:.1e} / {:.1e} ≤ 1e-5 over {} tensors",
        quadratic.max_rel_error(),
        through.max_rel_error(),
        quadratic.tensors.len()
    ))
}

fn retrieval_exactness() -> Outcome {
    let mut rng = seeded(4);
    let dim = 8;
    // A pool of distinct rows, then duplicates of pool rows to force exact ties.
    let pool: Vec<Vec<f64>> = (0..700)
        .map(|_| {
            (0..dim)
                .map(|_| f64::from(rng.random_range(-4i32..=4)))
                .collect()
        })
        .filter(|r: &Vec<f64>| r.iter().any(|x| *x != 0.0))
        .collect();
    let mut rows = pool.clone();
    while rows.len() < 1000 {
        rows.push(pool[rng.random_range(0..pool.len())].clone());
    }
    rows.truncate(1000);
    rows.shuffle(&mut rng);
    let id_list: Vec<PaperId> = (0..rows.len())
        .map(|i| PaperId(format!("C{i:04}")))
        .collect();
    let header = IndexHeader {
        version: 1,
        hidden: dim,
        ..IndexHeader::default()
    };
    let index =
        EmbeddingIndex::from_rows(header, id_list.clone(), &rows).map_err(|e| e.to_string())?;
    let mut ties = 0;
    for q in 0..100 {
        let query: Vec<f64> = if q % 2 == 0 {
            rows[rng.random_range(0..rows.len())].clone()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let got = query_topk(&index, &query, 10).map_err(|e| e.to_string())?;
        let want = oracle_topk(&id_list, &rows, &query, 10);
        ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
        check(got.entries.len() == 10, || {
            format!("query {q}: {} results", got.entries.len())
        })?;
        for (g, (id, score)) in got.entries.iter().zip(&want) {
            check(&g.id == id && g.score == *score, || {
                format!("query {q}: {:?} vs {:?}", g, (id, score))
            })?;
        }
    }
    check(ties > 0, || "fixture produced no ties".into())?;
    Ok(format!(
        "100 queries × 1000 candidates; {ties} tied neighbours ordered by id"
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = seeded(5);
    for fixture in 0..1000 {
        let universe = rng.random_range(1..40);
        let mut ranked: Vec<PaperId> = (0..universe).map(|i| PaperId(format!("x{i}"))).collect();
        ranked.shuffle(&mut rng);
        let truth_size = rng.random_range(1..=universe);
        let mut pool = ranked.clone();
        pool.shuffle(&mut rng);
        let mut truth: BTreeSet<PaperId> = pool.into_iter().take(truth_size).collect();
        // Some truth items are never ranked.
        if rng.random_bool(0.3) {
            truth.insert(PaperId::from("unranked"));
        }
        let k = rng.random_range(1..45);
        let r = recall_at_k(&ranked, &truth, k).map_err(|e| e.to_string())?;
        let ap = average_precision_at_k(&ranked, &truth, k).map_err(|e| e.to_string())?;
        let (or, oap) = (
            oracle_recall(&ranked, &truth, k),
            oracle_ap(&ranked, &truth, k),
        );
        check(r == or && (ap - oap).abs() <= 1e-15, || {
            format!("fixture {fixture}: recall {r} vs {or}, AP {ap} vs {oap}")
        })?;
        let m = map_at_k(&[(ranked.clone(), truth.clone())], k).map_err(|e| e.to_string())?;
        check((m - oap).abs() <= 1e-15, || {
            format!("fixture {fixture}: MAP {m} vs {oap}")
        })?;
    }
    let ranked = ids(&["a", "T1", "b", "c", "T2", "d", "e", "f", "g", "h"]);
    let ap = average_precision_at_k(&ranked, &set(&["T1", "T2"]), 10).map_err(|e| e.to_string())?;
    check((ap - 0.45).abs() < 1e-15, || {
        format!("hand fixture AP = {ap}")
    })?;
    Ok("1000 randomized fixtures match; hand fixture AP = 0.45".into())
}

fn sharing_and_determinism() -> Outcome {
    let synth = generate(&SynthConfig {
        papers: 60,
        topics: 6,
        seed: 6,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let prepared = prepare(synth.corpus, 0.2, 6, 1).map_err(|e| e.to_string())?;
    let encoder = EncoderConfig {
        blocks: 1,
        hidden: 16,
        heads: 2,
        feed_forward: 32,
        max_sentence_len: 16,
        max_sentences: 16,
        dropout: 0.1,
    };
    let sampling = SamplingConfig {
        manuscript_total: 8,
        citation_fundamental: 4,
        citation_supplemental: 6,
        ..SamplingConfig::default()
    };
    let train = TrainConfig {
        lr: 1e-3,
        warmup_updates: 10,
        update_frequency: 1,
        seed: 6,
        ..TrainConfig::default()
    };
    let data = prepared.training_data(&sampling);
    let examples = expand_examples(&prepared.train_instances);
    let mut state = init_encoders(&encoder, prepared.vocab.len(), 6).map_err(|e| e.to_string())?;
    for step in 0..200 {
        let example = &examples[step % examples.len()];
        let (audit, _) = train_step(
            &mut state,
            example,
            &data,
            &train,
            &mut stream_rng(6, 0, step as u64),
        )
        .map_err(|e| e.to_string())?;
        // The same sampled negative through the target and negative roles.
        let paper = prepared
            .corpus
            .paper(&audit.negatives[0])
            .map_err(|e| e.to_string())?;
        let sample =
            sample_citation_context(paper, &sampling, &mut stream_rng(6, 1, step as u64)).unwrap();
        let doc =
            TokenizedDoc::from_sample(paper, &sample, &prepared.vocab, encoder.max_sentence_len);
        let as_target = state
            .params_for(EncoderRole::Target)
            .encode(&doc)
            .map_err(|e| e.to_string())?;
        let as_negative = state
            .params_for(EncoderRole::Negative)
            .encode(&doc)
            .map_err(|e| e.to_string())?;
        let same_bits = as_target
            .0
            .iter()
            .zip(&as_negative.0)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        check(same_bits, || {
            format!("step {}: target/negative embeddings differ", step + 1)
        })?;
    }
    check(state.step() == 200, || format!("{} updates", state.step()))?;

    let run = || -> Result<Vec<u8>, String> {
        let mut s = init_encoders(&encoder, prepared.vocab.len(), 6).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            update_frequency: 2,
            epochs: 1,
            max_updates: Some(60),
            ..train.clone()
        };
        fine_tune(&mut s, &prepared.train_instances, &data, &cfg).map_err(|e| e.to_string())?;
        Ok(
            s.checkpoint(prepared.vocab.hash(), serde_json::json!({"seed": 6}))
                .to_bytes(),
        )
    };
    let (a, b) = (run()?, run()?);
    check(a == b, || "reruns produced different checkpoints".into())?;
    Ok(format!(
        "200 steps bit-identical; rerun checkpoint identical ({} bytes)",
        a.len()
    ))
}

struct ArmResults {
    triplet_multi: Vec<f64>,
    src_tgt_multi: Vec<f64>,
    dynamic_any: Vec<f64>,
    fixed_any: Vec<f64>,
    elapsed: Duration,
}

/// Criterion 7/8 setup: default synthetic corpus, identical budgets for
/// every arm, five seeds.
fn directional_runs() -> Result<ArmResults, String> {
    let started = Instant::now();
    let mut out = ArmResults {
        triplet_multi: vec![],
        src_tgt_multi: vec![],
        dynamic_any: vec![],
        fixed_any: vec![],
        elapsed: Duration::ZERO,
    };
    for seed in 1..=5u64 {
        let synth = generate(&SynthConfig {
            seed,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let prepared = prepare(synth.corpus, 0.2, seed, 1).map_err(|e| e.to_string())?;
        let base = Experiment {
            sampling: SamplingConfig {
                manuscript_total: 8,
                citation_fundamental: 4,
                citation_supplemental: 6,
                ..SamplingConfig::default()
            },
            encoder: EncoderConfig {
                blocks: 1,
                hidden: 32,
                heads: 2,
                feed_forward: 64,
                max_sentence_len: 24,
                max_sentences: 16,
                dropout: 0.1,
            },
            train: TrainConfig {
                lr: 1e-3,
                warmup_updates: 30,
                update_frequency: 4,
                epochs: 2,
                max_updates: Some(400),
                seed,
                ..TrainConfig::default()
            },
            ..Experiment::default()
        };
        let run = |objective: Objective, no_dynamic: bool| -> Result<_, String> {
            let mut e = base.clone();
            e.train.objective = objective;
            e.no_dynamic = no_dynamic;
            let outcome = train_and_evaluate(&prepared, &e).map_err(|e| e.to_string())?;
            let updates = outcome.train.updates.len();
            if updates < 300 {
                return Err(format!("seed {seed} {objective}: only {updates} updates"));
            }
            Ok(outcome.eval)
        };
        let triplet = run(Objective::Triplet, false)?;
        let full = run(Objective::MptSrcTgt, false)?;
        let fixed = run(Objective::MptSrcTgt, true)?;
        let get = |r: &mpcite_core::eval::EvalReport, s: &str| r.recall(s).unwrap_or(f64::NAN);
        out.triplet_multi.push(get(&triplet, STRATUM_MULTI));
        out.src_tgt_multi.push(get(&full, STRATUM_MULTI));
        out.dynamic_any.push(get(&full, STRATUM_ANY));
        out.fixed_any.push(get(&fixed, STRATUM_ANY));
    }
    out.elapsed = started.elapsed();
    Ok(out)
}

fn wins(better: &[f64], worse: &[f64]) -> usize {
    better.iter().zip(worse).filter(|(a, b)| a >= b).count()
}

fn pairs(a: &[f64], b: &[f64]) -> String {
    a.iter()
        .zip(b)
        .map(|(x, y)| format!("{x:.3}/{y:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sampling_fuzz() -> Outcome {
    let mut rng = seeded(9);
    for trial in 0..10_000u64 {
        let paper = Paper {
            id: "P".into(),
            abstract_sentences: (0..rng.random_range(0..12))
                .map(|i| vec![format!("a{i}")])
                .collect(),
            body_sentences: (0..rng.random_range(1..80))
                .map(|i| vec![format!("b{i}")])
                .collect(),
            anchors: vec![],
        };
        let fundamental = if rng.random_bool(0.5) { 1 } else { 3 };
        let cfg = SamplingConfig {
            manuscript_total: rng.random_range(fundamental..40),
            manuscript_fundamental: fundamental,
            citation_fundamental: rng.random_range(0..15),
            citation_supplemental: rng.random_range(0..40),
            positive_n: 3,
            negative_m: rng.random_range(1..6),
            power: 0.75,
        };
        let anchor = rng.random_range(0..paper.body_sentences.len());
        let fail = |what: &str| format!("trial {trial}: {what} (anchor {anchor}, {cfg:?})");

        let m = sample_manuscript_context(&paper, anchor, &cfg, &mut rng)
            .map_err(|e| fail(&e.to_string()))?;
        let start = m
            .fundamental
            .first()
            .map(|r| r.index)
            .ok_or_else(|| fail("empty window"))?;
        let window: BTreeSet<_> = m.fundamental.iter().collect();
        check(m.supplemental.iter().all(|r| !window.contains(r)), || {
            fail("manuscript parts overlap")
        })?;
        check(
            m.supplemental
                .iter()
                .all(|r| r.index < start && r.section == Section::Body),
            || fail("supplemental not preceding"),
        )?;
        check(m.len() <= cfg.manuscript_total, || {
            fail("manuscript budget exceeded")
        })?;

        let c =
            sample_citation_context(&paper, &cfg, &mut rng).map_err(|e| fail(&e.to_string()))?;
        let head: BTreeSet<_> = c.fundamental.iter().collect();
        check(c.supplemental.iter().all(|r| !head.contains(r)), || {
            fail("citation parts overlap")
        })?;
        check(c.fundamental.len() <= cfg.citation_fundamental, || {
            fail("citation fundamental budget")
        })?;
        check(c.supplemental.len() <= cfg.citation_supplemental, || {
            fail("citation supplemental budget")
        })?;

        let universe = rng.random_range(1..30);
        let instances: Vec<CitationInstance> = (0..universe)
            .map(|i| CitationInstance {
                source_id: "S".into(),
                anchor_sentence_index: 0,
                target_ids: [PaperId(format!("p{i}"))].into_iter().collect(),
            })
            .collect();
        let counts = build_citation_counts(&instances);
        let excluded: BTreeSet<PaperId> = (0..universe)
            .filter(|_| rng.random_bool(0.4))
            .map(|i| PaperId(format!("p{i}")))
            .collect();
        if let Ok(dist) = negative_distribution(&counts, &excluded, cfg.power) {
            match draw_negatives(&dist, cfg.negative_m, &mut rng) {
                Ok(negs) => {
                    check(negs.iter().all(|n| !excluded.contains(n)), || {
                        fail("excluded negative drawn")
                    })?;
                    let distinct: BTreeSet<_> = negs.iter().collect();
                    check(distinct.len() == negs.len(), || fail("repeated negative"))?;
                }
                Err(_) => check(universe - excluded.len() < cfg.negative_m, || {
                    fail("spurious shortage")
                })?,
            }
        } else {
            check(excluded.len() == universe, || {
                fail("spurious empty distribution")
            })?;
        }
    }
    Ok("10,000 (paper, anchor, config) triples".into())
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, title: &str, outcome: Outcome, t: Instant| {
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({title}): {detail} [{secs:.1}s]"),
            Err(why) => {
                failures += 1;
                println!("FAIL criterion {n} ({title}): {why} [{secs:.1}s]");
            }
        }
    };
    type Criterion = (usize, &'static str, fn() -> Outcome);
    let cases: [Criterion; 6] = [
        (1, "sampler exactness", sampler_exactness),
        (2, "loss oracles", loss_oracles),
        (3, "gradient verification", gradients),
        (4, "retrieval exactness", retrieval_exactness),
        (5, "metric oracles", metric_oracles),
        (
            6,
            "parameter sharing and determinism",
            sharing_and_determinism,
        ),
    ];
    for (n, title, f) in cases {
        let t = Instant::now();
        report(n, title, f(), t);
    }

    let t = Instant::now();
    match directional_runs() {
        Ok(r) => {
            let budget = |limit: u64| r.elapsed <= Duration::from_secs(limit);
            let w7 = wins(&r.src_tgt_multi, &r.triplet_multi);
            let c7 = if w7 >= 4 && budget(900) {
                Ok(format!(
                    "mpt-src-tgt ≥ triplet on P>=2 Recall@10 in {w7}/5 seeds ({})",
                    pairs(&r.src_tgt_multi, &r.triplet_multi)
                ))
            } else {
                Err(format!(
                    "{w7}/5 wins in {:.0}s ({})",
                    r.elapsed.as_secs_f64(),
                    pairs(&r.src_tgt_multi, &r.triplet_multi)
                ))
            };
            report(7, "directional objective ordering", c7, t);
            let w8 = wins(&r.dynamic_any, &r.fixed_any);
            let c8 = if w8 >= 4 && budget(900) {
                Ok(format!(
                    "dynamic ≥ no-dynamic on P>=1 Recall@10 in {w8}/5 seeds ({})",
                    pairs(&r.dynamic_any, &r.fixed_any)
                ))
            } else {
                Err(format!(
                    "{w8}/5 wins ({})",
                    pairs(&r.dynamic_any, &r.fixed_any)
                ))
            };
            report(8, "dynamic-sampling ablation", c8, t);
        }
        Err(e) => {
            report(7, "directional objective ordering", Err(e.clone()), t);
            report(8, "dynamic-sampling ablation", Err(e), t);
        }
    }

    let t = Instant::now();
    report(9, "sampling invariant fuzz", sampling_fuzz(), t);

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
