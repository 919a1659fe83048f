//! Fine-tuning of the triplet-encoder architecture.
//!
//! The manuscript encoder owns one parameter set; the target, positive and
//! negative citations are all encoded with a second, single citation
//! parameter set. Both start as copies of one initialization and are updated
//! with AdamW under an inverse-square-root warmup schedule.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationCountTable, CitationInstance, CocitationTable, Corpus, PaperId};
use crate::encoder::{Checkpoint, EncoderConfig, EncoderParams, TokenizedDoc, Vocab};
use crate::error::{Error, Result};
use crate::objectives::{Objective, TripletBatch};
use crate::rng::{mix_seed, seeded, stream_rng};
use crate::sampling::{
    draw_negatives, negative_distribution, sample_citation_context, sample_manuscript_context,
    NoiseDistribution, SamplingConfig,
};

pub const MANUSCRIPT_PREFIX: &str = "manuscript";
pub const CITATION_PREFIX: &str = "citation";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Peak learning rate, reached at the end of warmup.
    pub lr: f64,
    pub warmup_updates: u64,
    pub warmup_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Steps whose gradients are accumulated into one optimizer update.
    pub update_frequency: usize,
    /// Training examples per step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Hinge margin of the plain triplet objective.
    pub margin: f64,
    /// Stop after this many optimizer updates, if set.
    pub max_updates: Option<u64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::MptSrcTgt,
            lr: 2e-5,
            warmup_updates: 100,
            warmup_lr: 1e-9,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
            update_frequency: 8,
            batch_size: 1,
            epochs: 2,
            margin: 1.0,
            max_updates: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning schedule used for the ACL corpus.
    pub fn acl() -> Self {
        TrainConfig {
            warmup_updates: 1000,
            epochs: 5,
            ..Self::default()
        }
    }

    /// Fine-tuning schedule used for the DBLP corpus.
    pub fn dblp() -> Self {
        TrainConfig {
            warmup_updates: 2000,
            epochs: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.warmup_updates == 0 {
            return bad("warmup_updates must be >= 1".into());
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        for (name, v) in [
            ("lr", self.lr),
            ("warmup_lr", self.warmup_lr),
            ("eps", self.eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.weight_decay.is_nan()
            || self.weight_decay < 0.0
            || self.margin.is_nan()
            || self.margin < 0.0
        {
            return bad("weight_decay and margin must be >= 0".into());
        }
        if self.update_frequency == 0 || self.batch_size == 0 {
            return bad("update_frequency and batch_size must be >= 1".into());
        }
        Ok(())
    }

    fn examples_per_update(&self) -> usize {
        self.update_frequency * self.batch_size
    }
}

/// Learning rate for optimizer update `step` (1-based): a linear ramp from
/// `warmup_lr` at step 1 to `lr` at `warmup_updates`, then decay with the
/// inverse square root of the step.
pub fn lr_at(step: u64, config: &TrainConfig) -> f64 {
    let step = step.max(1);
    let warmup = config.warmup_updates.max(1);
    if step >= warmup {
        return config.lr * (warmup as f64 / step as f64).sqrt();
    }
    let frac = (step - 1) as f64 / (warmup - 1) as f64;
    config.warmup_lr + (config.lr - config.warmup_lr) * frac
}

/// Which encoder of the triplet architecture a document passes through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderRole {
    Manuscript,
    Target,
    Positive,
    Negative,
}

/// Everything `train_step` reads besides the trainable state.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub corpus: &'a Corpus,
    pub vocab: &'a Vocab,
    /// Co-citation history feeding positive sampling.
    pub cocitations: &'a CocitationTable,
    /// Citation counts feeding negative sampling.
    pub counts: &'a CitationCountTable,
    pub sampling: &'a SamplingConfig,
}

/// One training example: an instance with one of its targets designated as
/// the ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example<'a> {
    pub instance: &'a CitationInstance,
    pub target: &'a PaperId,
}

/// Expands every instance into one example per target.
pub fn expand_examples(instances: &[CitationInstance]) -> Vec<Example<'_>> {
    instances
        .iter()
        .flat_map(|instance| {
            instance
                .target_ids
                .iter()
                .map(move |target| Example { instance, target })
        })
        .collect()
}

/// Ids drawn for one example, for auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct StepAudit {
    pub source: PaperId,
    pub target: PaperId,
    pub positives: Vec<PaperId>,
    pub negatives: Vec<PaperId>,
    pub loss: f64,
    /// Whether this step completed an optimizer update.
    pub updated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRecord {
    pub step: u64,
    pub lr: f64,
    /// Mean loss over the examples accumulated into this update.
    pub loss: f64,
    pub objective: Objective,
}

impl UpdateRecord {
    pub fn header(objective: Objective) -> String {
        format!("# objective={objective}\nstep\tlr\tloss\tobjective")
    }

    pub fn line(&self) -> String {
        format!(
            "{}\t{:.6e}\t{:.8}\t{}",
            self.step, self.lr, self.loss, self.objective
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Adam {
    m: EncoderParams,
    v: EncoderParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    manuscript: EncoderParams,
    citation: EncoderParams,
    manuscript_grad: EncoderParams,
    citation_grad: EncoderParams,
    manuscript_adam: Adam,
    citation_adam: Adam,
    pending: usize,
    pending_loss: f64,
    step: u64,
}

/// Both parameter sets as copies of one random initialization.
pub fn init_encoders(config: &EncoderConfig, vocab_size: usize, seed: u64) -> Result<TrainerState> {
    let params = EncoderParams::random(config, vocab_size, &mut seeded(mix_seed(seed, &[0x1417])))?;
    Ok(TrainerState::from_params(params.clone(), params))
}

impl TrainerState {
    pub fn from_params(manuscript: EncoderParams, citation: EncoderParams) -> Self {
        let zeros_m = manuscript.zeros_like();
        let zeros_c = citation.zeros_like();
        TrainerState {
            manuscript_grad: zeros_m.clone(),
            citation_grad: zeros_c.clone(),
            manuscript_adam: Adam {
                m: zeros_m.clone(),
                v: zeros_m,
            },
            citation_adam: Adam {
                m: zeros_c.clone(),
                v: zeros_c,
            },
            manuscript,
            citation,
            pending: 0,
            pending_loss: 0.0,
            step: 0,
        }
    }

    /// Restores both parameter sets; optimizer moments start from zero.
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        Ok(Self::from_params(
            checkpoint.params(MANUSCRIPT_PREFIX)?,
            checkpoint.params(CITATION_PREFIX)?,
        ))
    }

    pub fn params_for(&self, role: EncoderRole) -> &EncoderParams {
        match role {
            EncoderRole::Manuscript => &self.manuscript,
            EncoderRole::Target | EncoderRole::Positive | EncoderRole::Negative => &self.citation,
        }
    }

    pub fn manuscript(&self) -> &EncoderParams {
        &self.manuscript
    }

    pub fn citation(&self) -> &EncoderParams {
        &self.citation
    }

    /// Optimizer updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Steps accumulated since the last update.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn checkpoint(&self, vocab_hash: String, meta: serde_json::Value) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.manuscript.config.clone(), vocab_hash, meta);
        ckpt.push_params(MANUSCRIPT_PREFIX, &self.manuscript);
        ckpt.push_params(CITATION_PREFIX, &self.citation);
        ckpt
    }

    /// Applies one AdamW update from the accumulated gradients, if any.
    pub fn apply_update(&mut self, config: &TrainConfig) -> Option<UpdateRecord> {
        if self.pending == 0 {
            return None;
        }
        self.step += 1;
        let lr = lr_at(self.step, config);
        let scale = 1.0 / self.pending as f64;
        let t = self.step as i32;
        let (bc1, bc2) = (1.0 - config.beta1.powi(t), 1.0 - config.beta2.powi(t));
        for (params, grads, adam) in [
            (
                &mut self.manuscript,
                &self.manuscript_grad,
                &mut self.manuscript_adam,
            ),
            (
                &mut self.citation,
                &self.citation_grad,
                &mut self.citation_adam,
            ),
        ] {
            let grads = grads.named_tensors();
            let (ms, vs) = (adam.m.tensors_mut(), adam.v.tensors_mut());
            for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs)
            {
                Zip::from(p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
                    let g = g * scale;
                    *m = config.beta1 * *m + (1.0 - config.beta1) * g;
                    *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
                    let adam_step = (*m / bc1) / ((*v / bc2).sqrt() + config.eps);
                    *p -= lr * (adam_step + config.weight_decay * *p);
                });
            }
        }
        let record = UpdateRecord {
            step: self.step,
            lr,
            loss: self.pending_loss * scale,
            objective: config.objective,
        };
        self.manuscript_grad.fill_zero();
        self.citation_grad.fill_zero();
        self.pending = 0;
        self.pending_loss = 0.0;
        Some(record)
    }
}

fn has_content(corpus: &Corpus, id: &PaperId) -> bool {
    corpus.get(id).is_some_and(|p| p.has_content())
}

/// Positives for `target`: the instance's other targets first, weighted by
/// their co-citation frequency with `target`, then the rest of `target`'s
/// co-citation history.
pub fn sample_example_positives<R: rand::Rng + ?Sized>(
    data: &TrainingData<'_>,
    example: &Example<'_>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<PaperId>> {
    let source = &example.instance.source_id;
    let target = example.target;
    let power = data.sampling.power;
    let usable = |id: &PaperId| id != target && id != source && has_content(data.corpus, id);
    let mut chosen = Vec::new();
    let own: Vec<(PaperId, u64)> = example
        .instance
        .target_ids
        .iter()
        .filter(|id| usable(id))
        .map(|id| (id.clone(), data.cocitations.frequency(target, id).max(1)))
        .collect();
    if n > 0 && !own.is_empty() {
        let dist = NoiseDistribution::from_frequencies(own, power)?;
        chosen.extend(
            dist.draw_distinct(n, rng)
                .into_iter()
                .map(|i| dist.items()[i].clone()),
        );
    }
    if chosen.len() < n {
        let history: Vec<(PaperId, u64)> = data
            .cocitations
            .partners(target)
            .filter(|(id, _)| usable(id) && !chosen.contains(id))
            .map(|(id, f)| (id.clone(), f))
            .collect();
        if !history.is_empty() {
            let dist = NoiseDistribution::from_frequencies(history, power)?;
            let extra = n - chosen.len();
            chosen.extend(
                dist.draw_distinct(extra, rng)
                    .into_iter()
                    .map(|i| dist.items()[i].clone()),
            );
        }
    }
    Ok(chosen)
}

fn encode_citation(
    data: &TrainingData<'_>,
    params: &EncoderParams,
    id: &PaperId,
    rng: &mut dyn RngCore,
) -> Result<crate::encoder::ForwardRecord> {
    let paper = data.corpus.paper(id)?;
    let sample = sample_citation_context(paper, data.sampling, rng)?;
    let doc = TokenizedDoc::from_sample(paper, &sample, data.vocab, params.config.max_sentence_len);
    params.forward(&doc, Some(rng))
}

/// One stochastic step: samples contexts, positives and negatives for
/// `example`, accumulates the objective's gradients into both parameter sets
/// and, every `batch_size · update_frequency` examples, applies an update.
pub fn train_step(
    state: &mut TrainerState,
    example: &Example<'_>,
    data: &TrainingData<'_>,
    config: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<(StepAudit, Option<UpdateRecord>)> {
    let instance = example.instance;
    let source = data.corpus.paper(&instance.source_id)?;
    let target = example.target;
    data.corpus.paper(target)?;

    let positives = if config.objective.uses_positives() {
        sample_example_positives(data, example, data.sampling.positive_n, rng)?
    } else {
        Vec::new()
    };
    let mut excluded: BTreeSet<PaperId> = instance.target_ids.clone();
    excluded.insert(instance.source_id.clone());
    excluded.insert(target.clone());
    excluded.extend(positives.iter().cloned());
    excluded.extend(
        data.counts
            .iter()
            .filter(|(id, _)| !has_content(data.corpus, id))
            .map(|(id, _)| id.clone()),
    );
    let negative_dist = negative_distribution(data.counts, &excluded, data.sampling.power)?;
    let negatives = draw_negatives(&negative_dist, data.sampling.negative_m, rng)?;

    let manuscript_params = state.params_for(EncoderRole::Manuscript);
    let sample =
        sample_manuscript_context(source, instance.anchor_sentence_index, data.sampling, rng)?;
    let doc = TokenizedDoc::from_sample(
        source,
        &sample,
        data.vocab,
        manuscript_params.config.max_sentence_len,
    );
    let source_record = manuscript_params.forward(&doc, Some(rng))?;
    let target_record = encode_citation(data, state.params_for(EncoderRole::Target), target, rng)?;
    let positive_records = positives
        .iter()
        .map(|id| encode_citation(data, state.params_for(EncoderRole::Positive), id, rng))
        .collect::<Result<Vec<_>>>()?;
    let negative_records = negatives
        .iter()
        .map(|id| encode_citation(data, state.params_for(EncoderRole::Negative), id, rng))
        .collect::<Result<Vec<_>>>()?;

    let mut batch = TripletBatch::new(
        source_record.output().as_slice(),
        target_record.output().as_slice(),
        positive_records
            .iter()
            .map(|r| r.output().as_slice())
            .collect(),
        negative_records
            .iter()
            .map(|r| r.output().as_slice())
            .collect(),
    );
    batch.margin = config.margin;
    let loss = config.objective.evaluate(&batch)?;
    if !loss.value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite loss at update {}",
            state.step + 1
        )));
    }

    source_record.backward_into(
        &state.manuscript,
        &loss.d_source,
        &mut state.manuscript_grad,
    )?;
    target_record.backward_into(&state.citation, &loss.d_target, &mut state.citation_grad)?;
    for (record, grad) in positive_records
        .iter()
        .zip(&loss.d_positives)
        .chain(negative_records.iter().zip(&loss.d_negatives))
    {
        record.backward_into(&state.citation, grad, &mut state.citation_grad)?;
    }
    state.pending += 1;
    state.pending_loss += loss.value;
    let update = if state.pending >= config.examples_per_update() {
        state.apply_update(config)
    } else {
        None
    };
    let audit = StepAudit {
        source: instance.source_id.clone(),
        target: target.clone(),
        positives,
        negatives,
        loss: loss.value,
        updated: update.is_some(),
    };
    Ok((audit, update))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub examples: usize,
    pub skipped_examples: usize,
    pub updates: Vec<UpdateRecord>,
    /// Mean example loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.updates.last().map(|u| u.loss)
    }

    pub fn metrics_log(&self, objective: Objective) -> String {
        let mut out = UpdateRecord::header(objective);
        out.push('\n');
        for u in &self.updates {
            let _ = writeln!(out, "{}", u.line());
        }
        out
    }
}

/// Runs `config.epochs` shuffled passes over the expanded examples of
/// `instances`, flushing any partial accumulation at the end of each epoch.
pub fn fine_tune(
    state: &mut TrainerState,
    instances: &[CitationInstance],
    data: &TrainingData<'_>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    data.sampling.validate()?;
    let (examples, skipped): (Vec<Example<'_>>, Vec<Example<'_>>) =
        expand_examples(instances).into_iter().partition(|e| {
            has_content(data.corpus, e.target) && data.corpus.contains(&e.instance.source_id)
        });
    if examples.is_empty() {
        return Err(Error::InvalidArgument("no trainable examples".into()));
    }
    if !skipped.is_empty() {
        log::warn!(
            "skipping {} examples whose target has no content",
            skipped.len()
        );
    }
    let mut report = TrainReport {
        examples: examples.len(),
        skipped_examples: skipped.len(),
        updates: Vec::new(),
        epoch_losses: Vec::new(),
    };
    let reached_limit = |s: &TrainerState| config.max_updates.is_some_and(|m| s.step >= m);
    'epochs: for epoch in 0..config.epochs {
        let epoch_seed = mix_seed(config.seed, &[0xE90C, epoch as u64]);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut seeded(epoch_seed));
        let mut total = 0.0;
        let mut seen = 0usize;
        for &idx in &order {
            if reached_limit(state) {
                break;
            }
            let mut rng = stream_rng(epoch_seed, 0, idx as u64);
            let (audit, update) = train_step(state, &examples[idx], data, config, &mut rng)?;
            total += audit.loss;
            seen += 1;
            if let Some(u) = update {
                log::debug!("{}", u.line());
                report.updates.push(u);
            }
        }
        if let Some(u) = state.apply_update(config) {
            report.updates.push(u);
        }
        if seen > 0 {
            report.epoch_losses.push(total / seen as f64);
            log::info!("epoch {} mean loss {:.6}", epoch + 1, total / seen as f64);
        }
        if reached_limit(state) {
            break 'epochs;
        }
    }
    Ok(report)
}
