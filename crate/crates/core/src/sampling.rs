//! Frequency-weighted positive/negative sampling and dynamic context sampling.
//!
//! Both noise distributions raise an integer frequency to a power (3/4 by
//! default) and normalize. Positives are weighted by co-citation frequency
//! with the target; negatives by how often a paper is cited at all.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationCountTable, CocitationTable, Paper, PaperId, Sentence};
use crate::error::{Error, Result};

pub const DEFAULT_POWER: f64 = 0.75;

/// Normalized categorical distribution over paper ids with an inverse-CDF
/// lookup table.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDistribution {
    items: Vec<PaperId>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    power: f64,
}

impl NoiseDistribution {
    /// Builds `p(i) ∝ f_i^power` over items with `f_i > 0`. Items must be
    /// distinct; zero-frequency items are outside the support.
    pub fn from_frequencies<I>(frequencies: I, power: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (PaperId, u64)>,
    {
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power must be > 0, got {power}"
            )));
        }
        let mut items = Vec::new();
        let mut raw = Vec::new();
        let mut seen = BTreeSet::new();
        for (id, f) in frequencies {
            if f == 0 {
                continue;
            }
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate support item {id}"
                )));
            }
            items.push(id);
            raw.push((f as f64).powf(power));
        }
        if items.is_empty() {
            return Err(Error::EmptyDistribution(
                "no item has positive frequency".into(),
            ));
        }
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &raw {
            acc += w;
            cumulative.push(acc / total);
        }
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(NoiseDistribution {
            items,
            weights,
            cumulative,
            power,
        })
    }

    pub fn items(&self) -> &[PaperId] {
        &self.items
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn probability(&self, id: &PaperId) -> f64 {
        self.items
            .iter()
            .position(|x| x == id)
            .map_or(0.0, |i| self.weights[i])
    }

    /// Index of one draw, by binary search over the cumulative table.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.items.len() - 1)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &PaperId {
        &self.items[self.draw_index(rng)]
    }

    /// `k` distinct indices, each drawn from the distribution renormalized
    /// over the items not yet taken. `k` is clamped to the support size.
    pub fn draw_distinct<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<usize> {
        let k = k.min(self.items.len());
        let mut taken = vec![false; self.items.len()];
        let mut out = Vec::with_capacity(k);
        let mut remaining = 1.0;
        while out.len() < k {
            // Rejection is exact for sequential renormalized draws; switch to a
            // linear scan once the taken mass makes rejections expensive.
            let idx = if remaining > 0.25 {
                loop {
                    let i = self.draw_index(rng);
                    if !taken[i] {
                        break i;
                    }
                }
            } else {
                let u: f64 = rng.random::<f64>() * remaining;
                let mut acc = 0.0;
                let mut pick = None;
                for (i, w) in self.weights.iter().enumerate() {
                    if taken[i] {
                        continue;
                    }
                    acc += w;
                    pick = Some(i);
                    if u < acc {
                        break;
                    }
                }
                pick.expect("untaken item remains")
            };
            taken[idx] = true;
            remaining -= self.weights[idx];
            out.push(idx);
        }
        out
    }
}

/// Positive-sampling distribution: papers co-cited with `target`, weighted by
/// co-citation frequency raised to `power`.
pub fn positive_distribution(
    table: &CocitationTable,
    target: &PaperId,
    power: f64,
) -> Result<NoiseDistribution> {
    let partners: Vec<(PaperId, u64)> = table
        .partners(target)
        .map(|(p, f)| (p.clone(), f))
        .collect();
    if partners.is_empty() {
        if power.is_nan() || power <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "power must be > 0, got {power}"
            )));
        }
        return Err(Error::EmptyDistribution(format!(
            "{target} has no co-citations"
        )));
    }
    NoiseDistribution::from_frequencies(partners, power)
}

/// Up to `n` distinct positives.
pub fn draw_positives<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    n: usize,
    rng: &mut R,
) -> Vec<PaperId> {
    dist.draw_distinct(n, rng)
        .into_iter()
        .map(|i| dist.items[i].clone())
        .collect()
}

/// Negative-sampling distribution: every cited paper outside `excluded`,
/// weighted by citation count raised to `power`.
pub fn negative_distribution(
    counts: &CitationCountTable,
    excluded: &BTreeSet<PaperId>,
    power: f64,
) -> Result<NoiseDistribution> {
    NoiseDistribution::from_frequencies(
        counts
            .iter()
            .filter(|(id, _)| !excluded.contains(*id))
            .map(|(id, c)| (id.clone(), c)),
        power,
    )
    .map_err(|e| match e {
        Error::EmptyDistribution(_) => {
            Error::EmptyDistribution("no negative candidates outside the excluded set".into())
        }
        other => other,
    })
}

/// Exactly `m` distinct negatives.
pub fn draw_negatives<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    m: usize,
    rng: &mut R,
) -> Result<Vec<PaperId>> {
    if m == 0 {
        return Err(Error::InvalidArgument("negative count must be >= 1".into()));
    }
    if dist.len() < m {
        return Err(Error::InsufficientSupport {
            requested: m,
            available: dist.len(),
        });
    }
    Ok(draw_positives(dist, m, rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Sentence budget for a manuscript context (fundamental + supplemental).
    pub manuscript_total: usize,
    /// Width of the window centred on the citing sentence (1 or 3).
    pub manuscript_fundamental: usize,
    /// Abstract sentences taken as a cited paper's fundamental context.
    pub citation_fundamental: usize,
    /// Body sentences sampled as a cited paper's supplemental context.
    pub citation_supplemental: usize,
    pub positive_n: usize,
    pub negative_m: usize,
    pub power: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            manuscript_total: 30,
            manuscript_fundamental: 3,
            citation_fundamental: 10,
            citation_supplemental: 30,
            positive_n: 3,
            negative_m: 4,
            power: DEFAULT_POWER,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.manuscript_fundamental == 0
            || self.manuscript_fundamental > 3
            || self.manuscript_fundamental.is_multiple_of(2)
        {
            return Err(Error::InvalidArgument(format!(
                "manuscript_fundamental must be 1 or 3, got {}",
                self.manuscript_fundamental
            )));
        }
        if self.manuscript_total < self.manuscript_fundamental {
            return Err(Error::InvalidArgument(format!(
                "manuscript_total {} < manuscript_fundamental {}",
                self.manuscript_total, self.manuscript_fundamental
            )));
        }
        if self.negative_m == 0 {
            return Err(Error::InvalidArgument("negative_m must be >= 1".into()));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power must be > 0, got {}",
                self.power
            )));
        }
        Ok(())
    }

    /// The same configuration with supplemental sampling switched off.
    pub fn fundamental_only(&self) -> Self {
        SamplingConfig {
            manuscript_total: self.manuscript_fundamental,
            citation_supplemental: 0,
            ..self.clone()
        }
    }

    /// Largest number of sentences any context sample can hold.
    pub fn max_sentences(&self) -> usize {
        self.manuscript_total
            .max(self.citation_fundamental + self.citation_supplemental)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContextRole {
    Manuscript,
    Citation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Section {
    Abstract,
    Body,
}

/// A sentence position inside a paper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceRef {
    pub section: Section,
    pub index: usize,
}

impl SentenceRef {
    pub fn body(index: usize) -> Self {
        SentenceRef {
            section: Section::Body,
            index,
        }
    }

    pub fn abstract_(index: usize) -> Self {
        SentenceRef {
            section: Section::Abstract,
            index,
        }
    }

    pub fn resolve<'a>(&self, paper: &'a Paper) -> Option<&'a Sentence> {
        match self.section {
            Section::Abstract => paper.abstract_sentences.get(self.index),
            Section::Body => paper.body_sentences.get(self.index),
        }
    }
}

/// Sentences selected from one paper for one encoder input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextSample {
    pub role: ContextRole,
    pub fundamental: Vec<SentenceRef>,
    pub supplemental: Vec<SentenceRef>,
}

impl ContextSample {
    pub fn len(&self) -> usize {
        self.fundamental.len() + self.supplemental.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fundamental sentences first, then supplemental.
    pub fn refs(&self) -> impl Iterator<Item = &SentenceRef> {
        self.fundamental.iter().chain(&self.supplemental)
    }

    pub fn sentences<'a>(&self, paper: &'a Paper) -> Vec<&'a Sentence> {
        self.refs().filter_map(|r| r.resolve(paper)).collect()
    }
}

/// `amount` body indices drawn uniformly without replacement from `pool`,
/// returned in document order.
fn sample_in_order<R: Rng + ?Sized>(pool: &[usize], amount: usize, rng: &mut R) -> Vec<usize> {
    if amount >= pool.len() {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Context around a citing sentence: the window centred on the anchor plus a
/// random selection from the text that precedes the window.
pub fn sample_manuscript_context<R: Rng + ?Sized>(
    paper: &Paper,
    anchor: usize,
    config: &SamplingConfig,
    rng: &mut R,
) -> Result<ContextSample> {
    let n_body = paper.body_sentences.len();
    if anchor >= n_body {
        return Err(Error::InvalidArgument(format!(
            "anchor sentence {anchor} out of range for {} ({n_body} body sentences)",
            paper.id
        )));
    }
    let radius = config.manuscript_fundamental / 2;
    let start = anchor.saturating_sub(radius);
    let end = (anchor + radius).min(n_body - 1);
    let fundamental: Vec<SentenceRef> = (start..=end).map(SentenceRef::body).collect();
    let budget = config.manuscript_total.saturating_sub(fundamental.len());
    let pool: Vec<usize> = (0..start).collect();
    let supplemental = sample_in_order(&pool, budget, rng)
        .into_iter()
        .map(SentenceRef::body)
        .collect();
    Ok(ContextSample {
        role: ContextRole::Manuscript,
        fundamental,
        supplemental,
    })
}

/// Context for a cited paper: the head of its abstract plus a fresh random
/// selection of body sentences. Papers without an abstract fall back to the
/// head of the body.
pub fn sample_citation_context<R: Rng + ?Sized>(
    paper: &Paper,
    config: &SamplingConfig,
    rng: &mut R,
) -> Result<ContextSample> {
    if !paper.has_content() {
        return Err(Error::InvalidArgument(format!(
            "paper {} has no sentences",
            paper.id
        )));
    }
    let (fundamental, body_start): (Vec<SentenceRef>, usize) =
        if paper.abstract_sentences.is_empty() {
            let k = config.citation_fundamental.min(paper.body_sentences.len());
            ((0..k).map(SentenceRef::body).collect(), k)
        } else {
            let k = config
                .citation_fundamental
                .min(paper.abstract_sentences.len());
            ((0..k).map(SentenceRef::abstract_).collect(), 0)
        };
    let pool: Vec<usize> = (body_start..paper.body_sentences.len()).collect();
    let supplemental = sample_in_order(&pool, config.citation_supplemental, rng)
        .into_iter()
        .map(SentenceRef::body)
        .collect();
    Ok(ContextSample {
        role: ContextRole::Citation,
        fundamental,
        supplemental,
    })
}
