use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use super::{Encoder, EncoderParams, TokenizedDoc};
use crate::error::Result;
use crate::rng;

/// Step of the fourth-order five-point stencil; truncation error scales as
/// `STEP⁴`, rounding error as `ε·|loss|/STEP`.
const STEP: f64 = 1e-3;
/// Gradients smaller than this in magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares backward-pass gradients of `loss(encode(doc))` with central
/// finite differences on a random subsample of coordinates of every tensor.
///
/// `loss` returns the scalar loss and its gradient with respect to the
/// document embedding. Token-embedding coordinates are drawn from the rows
/// of tokens that occur in `doc`. Dropout is off throughout.
pub fn grad_check<F>(
    params: &EncoderParams,
    doc: &TokenizedDoc,
    loss: F,
    tolerance: f64,
    samples_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut encoder = Encoder::new(params);
    let upstream = loss(encoder.forward(doc, None)?.as_slice()).1;
    let grads = encoder.backward(&upstream)?;

    let mut rng = rng::seeded(seed);
    let hidden = params.hidden();
    let used_rows: BTreeSet<usize> = doc
        .sentences
        .iter()
        .flatten()
        .map(|&t| t as usize)
        .collect();
    let used_coords: Vec<usize> = used_rows
        .iter()
        .flat_map(|&r| (r * hidden)..((r + 1) * hidden))
        .collect();

    let mut probe = params.clone();
    let mut tensors = Vec::new();
    for (ti, (name, grad)) in grads.named_tensors().into_iter().enumerate() {
        let grad = grad.as_slice().expect("standard layout");
        let pool: Vec<usize> = if ti == 0 {
            used_coords.clone()
        } else {
            (0..grad.len()).collect()
        };
        let coords: Vec<usize> = if pool.len() <= samples_per_tensor {
            pool
        } else {
            index::sample(&mut rng, pool.len(), samples_per_tensor)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        };
        let mut check = TensorCheck {
            name,
            checked: coords.len(),
            max_rel_error: 0.0,
            max_abs_analytic: grad.iter().fold(0.0, |m, g| m.max(g.abs())),
        };
        for &c in &coords {
            let original = probe.tensors_mut()[ti].as_slice().expect("standard layout")[c];
            let mut eval = |value: f64| -> Result<f64> {
                probe.tensors_mut()[ti]
                    .as_slice_mut()
                    .expect("standard layout")[c] = value;
                Ok(loss(probe.encode(doc)?.as_slice()).0)
            };
            let p2 = eval(original + 2.0 * STEP)?;
            let p1 = eval(original + STEP)?;
            let m1 = eval(original - STEP)?;
            let m2 = eval(original - 2.0 * STEP)?;
            eval(original)?;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * STEP);
            check.max_rel_error = check.max_rel_error.max(relative_error(grad[c], numeric));
        }
        tensors.push(check);
    }
    Ok(GradCheckReport { tolerance, tensors })
}

/// A smooth test loss `Σ w_i y_i + ½ Σ y_i²` with random weights.
pub fn random_quadratic_loss<R: Rng + ?Sized>(
    dim: usize,
    rng: &mut R,
) -> impl Fn(&[f64]) -> (f64, Vec<f64>) {
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    move |y: &[f64]| {
        let value = y.iter().zip(&w).map(|(a, b)| a * b + 0.5 * a * a).sum();
        let grad = y.iter().zip(&w).map(|(a, b)| a + b).collect();
        (value, grad)
    }
}
