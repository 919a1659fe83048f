//! Triplet and multi-positive N-tuplet objectives over document embeddings.
//!
//! Every objective is a function of Euclidean distances between the
//! manuscript embedding (source), the target citation, the sampled positive
//! citations and the sampled negatives. Gradients are returned for every
//! input embedding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances below this use it as the divisor of the distance gradient.
pub const DISTANCE_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "triplet")]
    Triplet,
    #[serde(rename = "mpt-tgt")]
    MptTgt,
    #[serde(rename = "mpt-src")]
    MptSrc,
    #[default]
    #[serde(rename = "mpt-src-tgt")]
    MptSrcTgt,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Triplet,
        Objective::MptTgt,
        Objective::MptSrc,
        Objective::MptSrcTgt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Triplet => "triplet",
            Objective::MptTgt => "mpt-tgt",
            Objective::MptSrc => "mpt-src",
            Objective::MptSrcTgt => "mpt-src-tgt",
        }
    }

    pub fn uses_positives(self) -> bool {
        self != Objective::Triplet
    }

    pub fn evaluate(self, batch: &TripletBatch<'_>) -> Result<LossResult> {
        match self {
            Objective::Triplet => triplet_loss(batch),
            Objective::MptTgt => mpt_tgt_loss(batch),
            Objective::MptSrc => mpt_src_loss(batch),
            Objective::MptSrcTgt => mpt_src_tgt_loss(batch),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective {s:?}")))
    }
}

/// One training tuple. `margin` is only used by the plain triplet loss.
#[derive(Clone, Debug)]
pub struct TripletBatch<'a> {
    pub source: &'a [f64],
    pub target: &'a [f64],
    pub positives: Vec<&'a [f64]>,
    pub negatives: Vec<&'a [f64]>,
    pub margin: f64,
}

impl<'a> TripletBatch<'a> {
    pub fn new(
        source: &'a [f64],
        target: &'a [f64],
        positives: Vec<&'a [f64]>,
        negatives: Vec<&'a [f64]>,
    ) -> Self {
        TripletBatch {
            source,
            target,
            positives,
            negatives,
            margin: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let dim = self.source.len();
        for v in std::iter::once(&self.target)
            .chain(&self.positives)
            .chain(&self.negatives)
        {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        if self.negatives.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one negative is required".into(),
            ));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }

    fn embedding(&self, slot: Slot) -> &[f64] {
        match slot {
            Slot::Source => self.source,
            Slot::Target => self.target,
            Slot::Positive(i) => self.positives[i],
            Slot::Negative(j) => self.negatives[j],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub d_source: Vec<f64>,
    pub d_target: Vec<f64>,
    pub d_positives: Vec<Vec<f64>>,
    pub d_negatives: Vec<Vec<f64>>,
}

impl LossResult {
    fn zeros(batch: &TripletBatch<'_>) -> Self {
        let dim = batch.source.len();
        LossResult {
            value: 0.0,
            d_source: vec![0.0; dim],
            d_target: vec![0.0; dim],
            d_positives: vec![vec![0.0; dim]; batch.positives.len()],
            d_negatives: vec![vec![0.0; dim]; batch.negatives.len()],
        }
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut [f64] {
        match slot {
            Slot::Source => &mut self.d_source,
            Slot::Target => &mut self.d_target,
            Slot::Positive(i) => &mut self.d_positives[i],
            Slot::Negative(j) => &mut self.d_negatives[j],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Source,
    Target,
    Positive(usize),
    Negative(usize),
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A difference of distances `D(anchor, near) - D(anchor, far)`.
#[derive(Clone, Copy, Debug)]
struct Contrast {
    anchor: Slot,
    near: Slot,
    far: Slot,
}

impl Contrast {
    fn value(&self, batch: &TripletBatch<'_>) -> f64 {
        let a = batch.embedding(self.anchor);
        euclidean(a, batch.embedding(self.near)) - euclidean(a, batch.embedding(self.far))
    }

    /// Adds `coef * ∂(value)/∂inputs` to `out`.
    fn accumulate(&self, coef: f64, batch: &TripletBatch<'_>, out: &mut LossResult) {
        if coef == 0.0 {
            return;
        }
        add_distance_grad(coef, self.anchor, self.near, batch, out);
        add_distance_grad(-coef, self.anchor, self.far, batch, out);
    }
}

fn add_distance_grad(coef: f64, x: Slot, y: Slot, batch: &TripletBatch<'_>, out: &mut LossResult) {
    let (xv, yv) = (batch.embedding(x), batch.embedding(y));
    let scale = coef / euclidean(xv, yv).max(DISTANCE_GUARD);
    let diff: Vec<f64> = xv.iter().zip(yv).map(|(a, b)| (a - b) * scale).collect();
    for (g, d) in out.slot_mut(x).iter_mut().zip(&diff) {
        *g += d;
    }
    for (g, d) in out.slot_mut(y).iter_mut().zip(&diff) {
        *g -= d;
    }
}

/// Which families of contrast terms enter the log-sum-exp.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Terms {
    /// `D(s,t) - D(s,n_j)` for every negative.
    pub source_target: bool,
    /// `D(s,c_i) - D(s,n_j)`.
    pub source_positive: bool,
    /// `D(c_i,t) - D(c_i,n_j)`, anchored at each positive.
    pub positive_anchored: bool,
    /// `D(t,c_i) - D(t,n_j)`, anchored at the target.
    pub target_anchored: bool,
}

fn contrasts(batch: &TripletBatch<'_>, terms: Terms) -> Vec<Contrast> {
    let (n, m) = (batch.positives.len(), batch.negatives.len());
    let mut out = Vec::new();
    for j in 0..m {
        let far = Slot::Negative(j);
        if terms.source_target {
            out.push(Contrast {
                anchor: Slot::Source,
                near: Slot::Target,
                far,
            });
        }
        for i in 0..n {
            let c = Slot::Positive(i);
            if terms.source_positive {
                out.push(Contrast {
                    anchor: Slot::Source,
                    near: c,
                    far,
                });
            }
            if terms.positive_anchored {
                out.push(Contrast {
                    anchor: c,
                    near: Slot::Target,
                    far,
                });
            }
            if terms.target_anchored {
                out.push(Contrast {
                    anchor: Slot::Target,
                    near: c,
                    far,
                });
            }
        }
    }
    out
}

/// `log(1 + Σ_k exp(a_k))` over the selected contrasts, computed with a
/// shifted log-sum-exp.
pub(crate) fn log_sum_exp_loss(batch: &TripletBatch<'_>, terms: Terms) -> Result<LossResult> {
    batch.validate()?;
    let contrasts = contrasts(batch, terms);
    let args: Vec<f64> = contrasts.iter().map(|c| c.value(batch)).collect();
    let shift = args.iter().copied().fold(0.0, f64::max);
    let exps: Vec<f64> = args.iter().map(|a| (a - shift).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let total = (-shift).exp() + sum;
    let mut out = LossResult::zeros(batch);
    // ln_1p keeps tiny positive sums from rounding the loss to zero
    out.value = if shift == 0.0 {
        sum.ln_1p()
    } else {
        shift + total.ln()
    };
    for (c, e) in contrasts.iter().zip(&exps) {
        c.accumulate(e / total, batch, &mut out);
    }
    Ok(out)
}

/// Hinge triplet loss summed over negatives:
/// `Σ_j max(D(s,t) - D(s,n_j) + margin, 0)`. Positives are ignored.
pub fn triplet_loss(batch: &TripletBatch<'_>) -> Result<LossResult> {
    batch.validate()?;
    let mut out = LossResult::zeros(batch);
    for j in 0..batch.negatives.len() {
        let c = Contrast {
            anchor: Slot::Source,
            near: Slot::Target,
            far: Slot::Negative(j),
        };
        let hinge = c.value(batch) + batch.margin;
        if hinge > 0.0 {
            out.value += hinge;
            c.accumulate(1.0, batch, &mut out);
        }
    }
    Ok(out)
}

/// Target-based objective: source-target contrasts once per negative, plus
/// contrasts anchored at each positive pulling it toward the target.
pub fn mpt_tgt_loss(batch: &TripletBatch<'_>) -> Result<LossResult> {
    log_sum_exp_loss(
        batch,
        Terms {
            source_target: true,
            source_positive: false,
            positive_anchored: true,
            target_anchored: false,
        },
    )
}

/// Source-based objective: the manuscript embedding is pulled toward the
/// target and toward every positive.
pub fn mpt_src_loss(batch: &TripletBatch<'_>) -> Result<LossResult> {
    log_sum_exp_loss(
        batch,
        Terms {
            source_target: true,
            source_positive: true,
            positive_anchored: false,
            target_anchored: false,
        },
    )
}

/// Source-target objective: the source-based terms plus target-anchored
/// contrasts pulling each positive toward the target.
pub fn mpt_src_tgt_loss(batch: &TripletBatch<'_>) -> Result<LossResult> {
    log_sum_exp_loss(
        batch,
        Terms {
            source_target: true,
            source_positive: true,
            positive_anchored: false,
            target_anchored: true,
        },
    )
}
