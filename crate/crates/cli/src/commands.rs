use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde_json::json;

use mpcite_core::corpus::{load_corpus, Corpus, Paper, Split, CORPUS_HEADER};
use mpcite_core::encoder::{Checkpoint, TokenizedDoc, Vocab};
use mpcite_core::eval::{candidate_ids, evaluate_with_index, EvalReport};
use mpcite_core::objectives::Objective;
use mpcite_core::pipeline::{prepare, run_label, Experiment, Prepared};
use mpcite_core::retrieval::{build_index, query_topk, EmbeddingIndex, IndexOptions};
use mpcite_core::rng::{mix_seed, seeded};
use mpcite_core::sampling::sample_manuscript_context;
use mpcite_core::synthgen::{generate, save_planted};
use mpcite_core::trainer::{fine_tune, init_encoders, TrainReport, TrainerState};

use crate::config::{RunConfig, SEED_ENV};
use crate::{Command, EvaluateArgs, GenArgs, RecommendArgs, TrainArgs};

pub fn run(command: Command, config: Option<&Path>) -> Result<()> {
    if let Command::Gen(args) = &command {
        let cfg = config.map(RunConfig::load).transpose()?;
        return gen(args, cfg.as_ref());
    }
    let path = config.ok_or_else(|| anyhow!("this command needs --config <run-config.toml>"))?;
    let cfg = RunConfig::load(path)?;
    match command {
        Command::Gen(_) => unreachable!("handled above"),
        Command::Stats => stats(&cfg),
        Command::Train(args) => train(&cfg, &args),
        Command::Index => index(&cfg),
        Command::Recommend(args) => recommend(&cfg, &args),
        Command::Evaluate(args) => evaluate(&cfg, &args),
    }
}

fn gen(args: &GenArgs, cfg: Option<&RunConfig>) -> Result<()> {
    let mut synth = cfg.map(|c| c.synth.clone()).unwrap_or_default();
    let env_seed = std::env::var(SEED_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok());
    if let Some(seed) = args.seed.or(env_seed).or(cfg.map(|c| c.seed)) {
        synth.seed = seed;
    }
    if let Some(n) = args.papers {
        synth.papers = n;
    }
    if let Some(t) = args.topics {
        synth.topics = t;
    }
    if let Some(r) = args.cocitation_rate {
        synth.cocitation_rate = r;
    }
    let out = generate(&synth)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    out.corpus.save(&args.out)?;
    let planted_path = args.planted.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".planted.tsv");
        PathBuf::from(p)
    });
    save_planted(&out.planted, &planted_path)?;
    println!(
        "wrote {} papers to {} and {} planted pairs to {}",
        out.corpus.len(),
        args.out.display(),
        out.planted.len(),
        planted_path.display()
    );
    Ok(())
}

fn load_prepared(cfg: &RunConfig) -> Result<Prepared> {
    let path = &cfg.corpus.path;
    ensure!(
        path.exists(),
        "corpus file {} does not exist",
        path.display()
    );
    let (corpus, report) = load_corpus(path)?;
    if report.dropped_anchors > 0 {
        log::warn!(
            "{} citation anchor(s) point outside the corpus and were dropped",
            report.dropped_anchors
        );
    }
    Ok(prepare(
        corpus,
        cfg.corpus.test_fraction,
        cfg.seed,
        cfg.corpus.vocab_min_freq,
    )?)
}

fn stats(cfg: &RunConfig) -> Result<()> {
    let prepared = load_prepared(cfg)?;
    let c = &prepared.corpus;
    let test = &prepared.test_instances;
    let count =
        |pred: &dyn Fn(usize) -> bool| test.iter().filter(|i| pred(i.target_ids.len())).count();
    let all_pairs = mpcite_core::corpus::build_cocitation_table(
        &prepared
            .train_instances
            .iter()
            .chain(test)
            .cloned()
            .collect::<Vec<_>>(),
    );
    let rows: Vec<(&str, usize)> = vec![
        ("Papers", c.len()),
        ("Train papers", c.count_in(Split::Train)),
        ("Test papers", c.count_in(Split::Test)),
        (
            "Citation instances",
            prepared.train_instances.len() + test.len(),
        ),
        ("Train Cit", prepared.train_instances.len()),
        ("Test Cit for P=1", count(&|n| n == 1)),
        ("Test Cit for P>=1", count(&|n| n >= 1)),
        ("Test Cit for P>=2", count(&|n| n >= 2)),
        ("Co-citation pairs", all_pairs.len()),
        ("Train co-citation pairs", prepared.history.len()),
        ("Vocabulary", prepared.vocab.len()),
    ];
    let mut out = String::new();
    for (name, value) in rows {
        let _ = writeln!(out, "{name:<24} {value:>10}");
    }
    print!("{out}");
    Ok(())
}

fn checkpoint_meta(experiment: &Experiment, report: &TrainReport) -> serde_json::Value {
    json!({
        "objective": experiment.train.objective.name(),
        "no_dynamic": experiment.no_dynamic,
        "seed": experiment.train.seed,
        "train": experiment.train,
        "sampling": experiment.sampling,
        "examples": report.examples,
        "updates": report.updates.len(),
        "epoch_losses": report.epoch_losses,
        "final_loss": report.final_loss(),
    })
}

/// Trains fresh encoders; returns the state, the report and the checkpoint.
fn train_run(
    prepared: &Prepared,
    experiment: &Experiment,
) -> Result<(TrainerState, TrainReport, Checkpoint)> {
    experiment.validate()?;
    let sampling = experiment.effective_sampling();
    let mut state = init_encoders(
        &experiment.encoder,
        prepared.vocab.len(),
        experiment.train.seed,
    )?;
    let report = fine_tune(
        &mut state,
        &prepared.train_instances,
        &prepared.training_data(&sampling),
        &experiment.train,
    )?;
    let ckpt = state.checkpoint(prepared.vocab.hash(), checkpoint_meta(experiment, &report));
    Ok((state, report, ckpt))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn train(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    cfg.create_layout()?;
    let prepared = load_prepared(cfg)?;
    let mut experiment = cfg.experiment();
    if let Some(o) = args.objective {
        experiment.train.objective = o;
    }
    experiment.no_dynamic = args.no_dynamic;
    let (_, report, ckpt) = train_run(&prepared, &experiment)?;
    ckpt.save(&cfg.checkpoint_path())?;
    write_file(&cfg.vocab_path(), &prepared.vocab.to_bytes())?;
    let log_path = cfg.logs_dir().join("train.log");
    write_file(
        &log_path,
        report.metrics_log(experiment.train.objective).as_bytes(),
    )?;
    println!(
        "trained {} on {} examples: {} updates, final loss {}",
        run_label(experiment.train.objective, experiment.no_dynamic),
        report.examples,
        report.updates.len(),
        report
            .final_loss()
            .map_or("n/a".into(), |l| format!("{l:.6}"))
    );
    println!("checkpoint: {}", cfg.checkpoint_path().display());
    println!("metrics log: {}", log_path.display());
    Ok(())
}

struct Model {
    checkpoint: Checkpoint,
    vocab: Vocab,
    state: TrainerState,
    no_dynamic: bool,
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing {}: run `mpcite {hint}` first", path.display());
    }
    Ok(())
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    require(&cfg.checkpoint_path(), "train")?;
    require(&cfg.vocab_path(), "train")?;
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path())
        .with_context(|| format!("cannot load checkpoint {}", cfg.checkpoint_path().display()))?;
    let file = fs::File::open(cfg.vocab_path())?;
    let vocab = Vocab::read_from(BufReader::new(file))?;
    ensure!(
        vocab.hash() == checkpoint.vocab_hash,
        "{} does not match the vocabulary the checkpoint was trained with",
        cfg.vocab_path().display()
    );
    let state = TrainerState::from_checkpoint(&checkpoint)?;
    let no_dynamic = checkpoint
        .meta
        .get("no_dynamic")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    Ok(Model {
        checkpoint,
        vocab,
        state,
        no_dynamic,
    })
}

fn build_candidate_index(
    cfg: &RunConfig,
    prepared: &Prepared,
    model: &Model,
    no_dynamic: bool,
) -> Result<EmbeddingIndex> {
    let mut experiment = cfg.experiment();
    experiment.no_dynamic = no_dynamic;
    let sampling = experiment.effective_sampling();
    let candidates = candidate_ids(&prepared.corpus, experiment.eval.candidates);
    let options = IndexOptions {
        sampling: &sampling,
        seed: experiment.eval.index_seed,
        samples: experiment.eval.index_samples,
        workers: cfg.workers,
        checkpoint_hash: model.checkpoint.hash(),
    };
    let (index, skipped) = build_index(
        model.state.citation(),
        &prepared.corpus,
        &model.vocab,
        &candidates,
        &options,
    )?;
    if !skipped.is_empty() {
        log::warn!(
            "{} candidate(s) without sentences were not indexed",
            skipped.len()
        );
    }
    Ok(index)
}

fn index(cfg: &RunConfig) -> Result<()> {
    cfg.create_layout()?;
    let model = load_model(cfg)?;
    let prepared = load_prepared(cfg)?;
    let index = build_candidate_index(cfg, &prepared, &model, model.no_dynamic)?;
    index.save(&cfg.index_path())?;
    println!(
        "indexed {} candidates (H = {}) into {}",
        index.len(),
        index.dim(),
        cfg.index_path().display()
    );
    Ok(())
}

fn read_manuscript(path: &Path) -> Result<Paper> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open manuscript {}", path.display()))?;
    let mut lines = BufReader::new(file).lines().peekable();
    let is_corpus = matches!(lines.peek(), Some(Ok(l)) if l.trim_end() == CORPUS_HEADER);
    if is_corpus {
        let text = fs::read_to_string(path)?;
        let (corpus, _) = Corpus::read_from(text.as_bytes())?;
        ensure!(
            corpus.len() == 1,
            "manuscript file must hold exactly one paper, found {}",
            corpus.len()
        );
        return Ok(corpus.papers()[0].clone());
    }
    let body = lines
        .map(|l| l.map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>()))
        .collect::<std::io::Result<Vec<_>>>()?;
    Ok(Paper {
        id: "manuscript".into(),
        abstract_sentences: Vec::new(),
        body_sentences: body,
        anchors: Vec::new(),
    })
}

fn recommend(cfg: &RunConfig, args: &RecommendArgs) -> Result<()> {
    ensure!(args.k >= 1, "k must be >= 1");
    let model = load_model(cfg)?;
    require(&cfg.index_path(), "index")?;
    let index = EmbeddingIndex::load(&cfg.index_path())?;
    if index.header.checkpoint_hash != model.checkpoint.hash() {
        log::warn!("index was built from a different checkpoint; rerun `mpcite index`");
    }
    let paper = read_manuscript(&args.manuscript)?;
    let mut experiment = cfg.experiment();
    experiment.no_dynamic = model.no_dynamic;
    let sampling = experiment.effective_sampling();
    let mut rng = seeded(mix_seed(cfg.seed, &[3]));
    let sample = sample_manuscript_context(&paper, args.anchor, &sampling, &mut rng)?;
    let params = model.state.manuscript();
    let doc = TokenizedDoc::from_sample(
        &paper,
        &sample,
        &model.vocab,
        params.config.max_sentence_len,
    );
    let query = params.encode(&doc)?;
    let ranked = query_topk(&index, query.as_slice(), args.k)?;
    let mut out = String::from("rank\tid\tscore\n");
    for (r, s) in ranked.entries.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{:.6}", r + 1, s.id, s.score);
    }
    print!("{out}");
    Ok(())
}

fn write_reports(cfg: &RunConfig, name: &str, reports: &[EvalReport]) -> Result<PathBuf> {
    let mut csv = String::from(EvalReport::CSV_HEADER);
    csv.push('\n');
    for r in reports {
        for row in r.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
    }
    let path = cfg.reports_dir().join(name);
    write_file(&path, csv.as_bytes())?;
    Ok(path)
}

fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    cfg.create_layout()?;
    let prepared = load_prepared(cfg)?;
    if args.objective_sweep {
        return sweep(cfg, &prepared, args.no_dynamic);
    }
    let model = load_model(cfg)?;
    let no_dynamic = args.no_dynamic || model.no_dynamic;
    let index = match EmbeddingIndex::load(&cfg.index_path()) {
        Ok(idx)
            if idx.header.checkpoint_hash == model.checkpoint.hash()
                && no_dynamic == model.no_dynamic =>
        {
            idx
        }
        _ => build_candidate_index(cfg, &prepared, &model, no_dynamic)?,
    };
    let mut experiment = cfg.experiment();
    experiment.no_dynamic = no_dynamic;
    let sampling = experiment.effective_sampling();
    let objective = model
        .checkpoint
        .meta
        .get("objective")
        .and_then(|v| v.as_str())
        .unwrap_or("unknown")
        .to_string();
    let label = if no_dynamic {
        format!("{objective}+no-dynamic")
    } else {
        objective
    };
    let report = evaluate_with_index(
        model.state.manuscript(),
        &index,
        &prepared.test_instances,
        &prepared.eval_data(&sampling),
        &experiment.eval,
        &label,
    )?;
    print!("{}", report.table());
    let path = write_reports(cfg, "eval.csv", std::slice::from_ref(&report))?;
    println!("report: {}", path.display());
    Ok(())
}

fn sweep(cfg: &RunConfig, prepared: &Prepared, no_dynamic: bool) -> Result<()> {
    let mut reports = Vec::new();
    for objective in Objective::ALL {
        let mut experiment = cfg.experiment();
        experiment.train.objective = objective;
        experiment.no_dynamic = no_dynamic;
        let label = run_label(objective, no_dynamic);
        let (state, train_report, _) = train_run(prepared, &experiment)?;
        let log_path = cfg.logs_dir().join(format!("train-{label}.log"));
        write_file(&log_path, train_report.metrics_log(objective).as_bytes())?;
        let sampling = experiment.effective_sampling();
        let report = mpcite_core::eval::evaluate(
            state.manuscript(),
            state.citation(),
            &prepared.test_instances,
            &prepared.eval_data(&sampling),
            &experiment.eval,
            &label,
        )?;
        print!("{}", report.table());
        println!();
        reports.push(report);
    }
    let name = if no_dynamic {
        "sweep-no-dynamic.csv"
    } else {
        "sweep.csv"
    };
    let path = write_reports(cfg, name, &reports)?;
    println!("report: {}", path.display());
    Ok(())
}
