//! Transformer building blocks with explicit backward passes.
//!
//! Row-major activations: one row per position. Several independent
//! sequences share one activation matrix; attention is restricted to each
//! sequence's contiguous row segment.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub(crate) const LN_EPS: f64 = 1e-9;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Array1::ones(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub(crate) fn zeros(dim: usize) -> Self {
        LayerNorm {
            gain: Array1::zeros(dim),
            bias: Array1::zeros(dim),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, LnCache) {
    let mean = x.mean_axis(Axis(1)).expect("nonempty rows");
    let centered = x - &mean.insert_axis(Axis(1));
    let var = centered
        .mapv(|v| v * v)
        .mean_axis(Axis(1))
        .expect("nonempty rows");
    let rstd = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * rstd.view().insert_axis(Axis(1));
    let y = &xhat * &ln.gain + &ln.bias;
    (y, LnCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    ln: &LayerNorm,
    grad: &mut LayerNorm,
) -> Array2<f64> {
    grad.gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.bias += &dy.sum_axis(Axis(0));
    let dxhat = dy * &ln.gain;
    let m1 = dxhat.mean_axis(Axis(1)).expect("nonempty rows");
    let m2 = (&dxhat * &cache.xhat)
        .mean_axis(Axis(1))
        .expect("nonempty rows");
    let mut dx = dxhat - &m1.insert_axis(Axis(1)) - &cache.xhat * &m2.insert_axis(Axis(1));
    dx *= &cache.rstd.view().insert_axis(Axis(1));
    dx
}

fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + GELU_K * z * z * z)).tanh())
}

fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + GELU_K * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * z * z)
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

fn linear_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

/// Pre-norm transformer block: `x + Attn(LN(x))`, then `x + FFN(LN(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2: LayerNorm,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

fn init_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

impl Block {
    pub(crate) fn random<R: Rng + ?Sized>(hidden: usize, ff: usize, rng: &mut R) -> Self {
        Block {
            ln1: LayerNorm::new(hidden),
            wq: init_matrix(hidden, hidden, rng),
            bq: Array1::zeros(hidden),
            wk: init_matrix(hidden, hidden, rng),
            bk: Array1::zeros(hidden),
            wv: init_matrix(hidden, hidden, rng),
            bv: Array1::zeros(hidden),
            wo: init_matrix(hidden, hidden, rng),
            bo: Array1::zeros(hidden),
            ln2: LayerNorm::new(hidden),
            w1: init_matrix(hidden, ff, rng),
            b1: Array1::zeros(ff),
            w2: init_matrix(ff, hidden, rng),
            b2: Array1::zeros(hidden),
        }
    }

    pub(crate) fn zeros(hidden: usize, ff: usize) -> Self {
        Block {
            ln1: LayerNorm::zeros(hidden),
            wq: Array2::zeros((hidden, hidden)),
            bq: Array1::zeros(hidden),
            wk: Array2::zeros((hidden, hidden)),
            bk: Array1::zeros(hidden),
            wv: Array2::zeros((hidden, hidden)),
            bv: Array1::zeros(hidden),
            wo: Array2::zeros((hidden, hidden)),
            bo: Array1::zeros(hidden),
            ln2: LayerNorm::zeros(hidden),
            w1: Array2::zeros((hidden, ff)),
            b1: Array1::zeros(ff),
            w2: Array2::zeros((ff, hidden)),
            b2: Array1::zeros(hidden),
        }
    }
}

/// Row segments `(start, len)` of independent sequences plus a per-row key
/// validity mask (PAD positions are never attended to).
pub(crate) struct Layout<'a> {
    pub segments: &'a [(usize, usize)],
    pub valid: &'a [bool],
}

/// Inverted dropout: `Some(rng, rate)` draws a fresh mask.
pub(crate) type Dropout<'r> = Option<(&'r mut dyn rand::RngCore, f64)>;

fn dropout_mask(rows: usize, cols: usize, dropout: &mut Dropout<'_>) -> Option<Array2<f64>> {
    match dropout {
        Some((rng, rate)) if *rate > 0.0 => {
            let keep = 1.0 / (1.0 - *rate);
            Some(Array2::from_shape_simple_fn((rows, cols), || {
                if rng.random::<f64>() < *rate {
                    0.0
                } else {
                    keep
                }
            }))
        }
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BlockCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Softmax weights per (segment, head), segment-major.
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    ln2: LnCache,
    h2: Array2<f64>,
    z: Array2<f64>,
    g: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
}

pub(crate) fn block_forward(
    x: &Array2<f64>,
    block: &Block,
    heads: usize,
    layout: &Layout<'_>,
    dropout: &mut Dropout<'_>,
) -> (Array2<f64>, BlockCache) {
    let (rows, hidden) = x.dim();
    let dh = hidden / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let (h1, ln1) = layer_norm(x, &block.ln1);
    let q = linear(&h1, &block.wq, &block.bq);
    let k = linear(&h1, &block.wk, &block.bk);
    let v = linear(&h1, &block.wv, &block.bv);

    let mut ctx = Array2::<f64>::zeros((rows, hidden));
    let mut probs = Vec::with_capacity(layout.segments.len() * heads);
    for &(start, len) in layout.segments {
        let valid = &layout.valid[start..start + len];
        for head in 0..heads {
            let cols = s![start..start + len, head * dh..(head + 1) * dh];
            let qa = q.slice(cols);
            let ka = k.slice(cols);
            let va = v.slice(cols);
            let mut p = qa.dot(&ka.t()) * scale;
            for mut row in p.rows_mut() {
                let mut max = f64::NEG_INFINITY;
                for (j, s) in row.iter().enumerate() {
                    if valid[j] && *s > max {
                        max = *s;
                    }
                }
                let mut total = 0.0;
                for (j, s) in row.iter_mut().enumerate() {
                    *s = if valid[j] { (*s - max).exp() } else { 0.0 };
                    total += *s;
                }
                row /= total;
            }
            ctx.slice_mut(cols).assign(&p.dot(&va));
            probs.push(p);
        }
    }
    let mut attn = linear(&ctx, &block.wo, &block.bo);
    let attn_mask = dropout_mask(rows, hidden, dropout);
    if let Some(m) = &attn_mask {
        attn *= m;
    }
    let x1 = x + &attn;

    let (h2, ln2) = layer_norm(&x1, &block.ln2);
    let z = linear(&h2, &block.w1, &block.b1);
    let g = z.mapv(gelu);
    let mut f = linear(&g, &block.w2, &block.b2);
    let ffn_mask = dropout_mask(rows, hidden, dropout);
    if let Some(m) = &ffn_mask {
        f *= m;
    }
    let out = x1 + &f;
    (
        out,
        BlockCache {
            ln1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            attn_mask,
            ln2,
            h2,
            z,
            g,
            ffn_mask,
        },
    )
}

/// Accumulates parameter gradients into `grad` and returns the gradient with
/// respect to the block input.
pub(crate) fn block_backward(
    dout: &Array2<f64>,
    block: &Block,
    cache: &BlockCache,
    heads: usize,
    layout: &Layout<'_>,
    grad: &mut Block,
) -> Array2<f64> {
    let (rows, hidden) = dout.dim();
    let dh = hidden / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    // feed-forward branch
    let mut df = dout.clone();
    if let Some(m) = &cache.ffn_mask {
        df *= m;
    }
    let dg = linear_backward(&df, &cache.g, &block.w2, &mut grad.w2, &mut grad.b2);
    let mut dz = dg;
    Zip::from(&mut dz)
        .and(&cache.z)
        .for_each(|d, &z| *d *= gelu_grad(z));
    let dh2 = linear_backward(&dz, &cache.h2, &block.w1, &mut grad.w1, &mut grad.b1);
    let dx1 = dout + &layer_norm_backward(&dh2, &cache.ln2, &block.ln2, &mut grad.ln2);

    // attention branch
    let mut dattn = dx1.clone();
    if let Some(m) = &cache.attn_mask {
        dattn *= m;
    }
    let dctx = linear_backward(&dattn, &cache.ctx, &block.wo, &mut grad.wo, &mut grad.bo);
    let mut dq = Array2::<f64>::zeros((rows, hidden));
    let mut dk = Array2::<f64>::zeros((rows, hidden));
    let mut dv = Array2::<f64>::zeros((rows, hidden));
    let mut p_iter = cache.probs.iter();
    for &(start, len) in layout.segments {
        for head in 0..heads {
            let p = p_iter.next().expect("one softmax per segment and head");
            let cols = s![start..start + len, head * dh..(head + 1) * dh];
            let dca = dctx.slice(cols);
            let qa = cache.q.slice(cols);
            let ka = cache.k.slice(cols);
            let va = cache.v.slice(cols);
            let dp = dca.dot(&va.t());
            dv.slice_mut(cols).assign(&p.t().dot(&dca));
            let row_dot = (&dp * p).sum_axis(Axis(1));
            let ds = (dp - &row_dot.insert_axis(Axis(1))) * p * scale;
            dq.slice_mut(cols).assign(&ds.dot(&ka));
            dk.slice_mut(cols).assign(&ds.t().dot(&qa));
        }
    }
    let mut dh1 = linear_backward(&dq, &cache.h1, &block.wq, &mut grad.wq, &mut grad.bq);
    dh1 += &linear_backward(&dk, &cache.h1, &block.wk, &mut grad.wk, &mut grad.bk);
    dh1 += &linear_backward(&dv, &cache.h1, &block.wv, &mut grad.wv, &mut grad.bv);
    dx1 + &layer_norm_backward(&dh1, &cache.ln1, &block.ln1, &mut grad.ln1)
}

/// Fixed sinusoidal position table, `positions × dim`.
pub(crate) fn sinusoidal(positions: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((positions, dim), |(pos, i)| {
        let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Mean of the rows whose mask entry is true. `None` if every row is masked.
pub(crate) fn masked_mean(rows: ArrayView2<'_, f64>, mask: &[bool]) -> Option<Array1<f64>> {
    let mut acc = Array1::<f64>::zeros(rows.ncols());
    let mut n = 0usize;
    for (row, &keep) in rows.rows().into_iter().zip(mask) {
        if keep {
            acc += &row;
            n += 1;
        }
    }
    (n > 0).then(|| acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &z in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(z + h) - gelu(z - h)) / (2.0 * h);
            assert!((fd - gelu_grad(z)).abs() < 1e-8, "z={z}");
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Array2::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f64 * 0.37 - 2.0);
        let (y, _) = layer_norm(&x, &LayerNorm::new(8));
        for row in y.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
            let var = row.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sinusoidal_first_row() {
        let pe = sinusoidal(3, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
    }
}
