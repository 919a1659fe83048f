use std::time::Instant;

use mpcite_core::encoder::EncoderConfig;
use mpcite_core::eval::{STRATUM_ANY, STRATUM_MULTI};
use mpcite_core::objectives::Objective;
use mpcite_core::pipeline::{prepare, train_and_evaluate, Experiment};
use mpcite_core::sampling::SamplingConfig;
use mpcite_core::synthgen::{generate, SynthConfig};
use mpcite_core::trainer::TrainConfig;

fn env<T: std::str::FromStr>(k: &str, d: T) -> T {
    std::env::var(k)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(d)
}

fn main() {
    let seeds: u64 = env("SEEDS", 5);
    for seed in 1..=seeds {
        let synth = generate(&SynthConfig {
            seed,
            mention_rate: env("MENTION", 0.5),
            ..SynthConfig::default()
        })
        .unwrap();
        let prepared = prepare(synth.corpus, 0.2, seed, 1).unwrap();
        let base = Experiment {
            sampling: SamplingConfig {
                manuscript_total: env("MT", 8),
                citation_fundamental: env("CF", 4),
                citation_supplemental: env("CS", 6),
                ..SamplingConfig::default()
            },
            encoder: EncoderConfig {
                blocks: env("L", 1),
                hidden: env("H", 32),
                heads: 2,
                feed_forward: env("FF", 64),
                max_sentence_len: 24,
                max_sentences: 16,
                dropout: 0.1,
            },
            train: TrainConfig {
                lr: env("LR", 1e-3),
                warmup_updates: env("WU", 30),
                update_frequency: env("UF", 2),
                epochs: env("EP", 1),
                max_updates: Some(env("MAXU", 300)),
                seed,
                ..TrainConfig::default()
            },
            ..Experiment::default()
        };
        let mut line = format!("seed {seed}:");
        for (obj, nd) in [
            (Objective::Triplet, false),
            (Objective::MptSrcTgt, false),
            (Objective::MptSrcTgt, true),
        ] {
            let mut e = base.clone();
            e.train.objective = obj;
            e.no_dynamic = nd;
            let t = Instant::now();
            let out = train_and_evaluate(&prepared, &e).unwrap();
            line += &format!(
                "  {}{}: P>=1 {:.3} P>=2 {:.3} (n={},{}, upd {}, loss {:.3}->{:.3}, {:.1}s)",
                obj,
                if nd { "/nd" } else { "" },
                out.eval.recall(STRATUM_ANY).unwrap_or(f64::NAN),
                out.eval.recall(STRATUM_MULTI).unwrap_or(f64::NAN),
                out.eval.stratum(STRATUM_ANY).unwrap().n_queries,
                out.eval.stratum(STRATUM_MULTI).unwrap().n_queries,
                out.train.updates.len(),
                out.train.updates.first().unwrap().loss,
                out.train.epoch_losses.last().unwrap(),
                t.elapsed().as_secs_f64()
            );
        }
        println!("{line}");
    }
}
