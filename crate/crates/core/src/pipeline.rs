//! End-to-end wiring: split → instances → history tables → vocabulary →
//! fine-tuning → evaluation.

use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_citation_counts, build_cocitation_table, extract_citation_instances, split_corpus,
    CitationCountTable, CitationInstance, CocitationTable, Corpus, Split,
};
use crate::encoder::{build_vocab, EncoderConfig, Vocab};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalData, EvalReport};
use crate::objectives::Objective;
use crate::sampling::SamplingConfig;
use crate::trainer::{
    fine_tune, init_encoders, TrainConfig, TrainReport, TrainerState, TrainingData,
};

/// Every knob of one train-and-evaluate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub sampling: SamplingConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Used only when the corpus carries no test tags.
    pub test_fraction: f64,
    pub vocab_min_freq: usize,
    /// Train and evaluate with fundamental contexts only.
    pub no_dynamic: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            sampling: SamplingConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            test_fraction: 0.2,
            vocab_min_freq: 1,
            no_dynamic: false,
        }
    }
}

impl Experiment {
    /// The sampling configuration actually used, honouring `no_dynamic`.
    pub fn effective_sampling(&self) -> SamplingConfig {
        if self.no_dynamic {
            self.sampling.fundamental_only()
        } else {
            self.sampling.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        if self.sampling.max_sentences() > self.encoder.max_sentences {
            return Err(Error::InvalidArgument(format!(
                "sampling budgets allow {} sentences but the encoder accepts {}",
                self.sampling.max_sentences(),
                self.encoder.max_sentences
            )));
        }
        if self.eval.k == 0 {
            return Err(Error::InvalidArgument("eval k must be >= 1".into()));
        }
        Ok(())
    }
}

/// A split corpus with everything derived from its training side.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub corpus: Corpus,
    pub vocab: Vocab,
    pub train_instances: Vec<CitationInstance>,
    pub test_instances: Vec<CitationInstance>,
    /// Co-citation history of the training instances.
    pub history: CocitationTable,
    /// Citation counts of the training instances.
    pub counts: CitationCountTable,
}

/// Splits the corpus (unless it already has test papers), extracts instances
/// and builds the vocabulary and history tables from the training side.
pub fn prepare(
    corpus: Corpus,
    test_fraction: f64,
    seed: u64,
    vocab_min_freq: usize,
) -> Result<Prepared> {
    let corpus = if corpus.count_in(Split::Test) > 0 {
        corpus
    } else {
        split_corpus(corpus, test_fraction, seed)?
    };
    let (train_instances, test_instances): (Vec<_>, Vec<_>) = extract_citation_instances(&corpus)
        .into_iter()
        .partition(|inst| corpus.split_of(&inst.source_id) == Some(Split::Train));
    let history = build_cocitation_table(&train_instances);
    let counts = build_citation_counts(&train_instances);
    let vocab = build_vocab(&corpus, vocab_min_freq)?;
    Ok(Prepared {
        corpus,
        vocab,
        train_instances,
        test_instances,
        history,
        counts,
    })
}

impl Prepared {
    pub fn training_data<'a>(&'a self, sampling: &'a SamplingConfig) -> TrainingData<'a> {
        TrainingData {
            corpus: &self.corpus,
            vocab: &self.vocab,
            cocitations: &self.history,
            counts: &self.counts,
            sampling,
        }
    }

    pub fn eval_data<'a>(&'a self, sampling: &'a SamplingConfig) -> EvalData<'a> {
        EvalData {
            corpus: &self.corpus,
            vocab: &self.vocab,
            history: &self.history,
            sampling,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: TrainerState,
    pub train: TrainReport,
    pub eval: EvalReport,
}

/// Report label: the objective name, suffixed for the fundamental-only ablation.
pub fn run_label(objective: Objective, no_dynamic: bool) -> String {
    if no_dynamic {
        format!("{objective}+no-dynamic")
    } else {
        objective.to_string()
    }
}

/// Fine-tunes fresh encoders on the training instances and evaluates them on
/// the test instances.
pub fn train_and_evaluate(prepared: &Prepared, experiment: &Experiment) -> Result<RunOutcome> {
    experiment.validate()?;
    let sampling = experiment.effective_sampling();
    let mut state = init_encoders(
        &experiment.encoder,
        prepared.vocab.len(),
        experiment.train.seed,
    )?;
    let train = fine_tune(
        &mut state,
        &prepared.train_instances,
        &prepared.training_data(&sampling),
        &experiment.train,
    )?;
    let eval = evaluate(
        state.manuscript(),
        state.citation(),
        &prepared.test_instances,
        &prepared.eval_data(&sampling),
        &experiment.eval,
        &run_label(experiment.train.objective, experiment.no_dynamic),
    )?;
    Ok(RunOutcome { state, train, eval })
}
