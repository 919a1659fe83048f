//! Hierarchical document encoder.
//!
//! Tokens of each sentence run through a stack of sentence-level blocks and
//! are mean-pooled into one vector per sentence; the sentence vectors run
//! through a stack of document-level blocks, are sum-pooled and finally
//! layer-normalized into the document embedding.

mod checkpoint;
mod gradcheck;
mod layers;
mod vocab;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, random_quadratic_loss, GradCheckReport, TensorCheck};
pub use layers::{Block, LayerNorm};
pub use vocab::{build_vocab, tokenize, Vocab, EOS, PAD, UNK};

use crate::corpus::Paper;
use crate::error::{Error, Result};
use crate::sampling::ContextSample;
use layers::{
    block_backward, block_forward, layer_norm, layer_norm_backward, BlockCache, Layout, LnCache,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Blocks per level (L).
    pub blocks: usize,
    /// Hidden size (H).
    pub hidden: usize,
    /// Attention heads (A).
    pub heads: usize,
    pub feed_forward: usize,
    pub max_sentence_len: usize,
    pub max_sentences: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            blocks: 2,
            hidden: 64,
            heads: 4,
            feed_forward: 256,
            max_sentence_len: 64,
            max_sentences: 40,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    /// Full-size transformer settings (L=6, H=768, A=12).
    pub fn full_size() -> Self {
        EncoderConfig {
            blocks: 6,
            hidden: 768,
            heads: 12,
            feed_forward: 3072,
            max_sentence_len: 64,
            max_sentences: 40,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("blocks", self.blocks),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("feed_forward", self.feed_forward),
            ("max_sentence_len", self.max_sentence_len),
            ("max_sentences", self.max_sentences),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!(
                "encoder {name} must be >= 1"
            )));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// All trainable tensors of one encoder, plus the fixed position tables.
///
/// The same type doubles as a gradient (and optimizer-moment) container.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub token_embedding: Array2<f64>,
    pub sentence_blocks: Vec<Block>,
    pub sentence_norm: LayerNorm,
    pub document_blocks: Vec<Block>,
    pub final_norm: LayerNorm,
    token_positions: Array2<f64>,
    sentence_positions: Array2<f64>,
}

impl EncoderParams {
    pub fn random<R: Rng + ?Sized>(
        config: &EncoderConfig,
        vocab_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if vocab_size <= EOS as usize {
            return Err(Error::InvalidArgument(format!(
                "vocabulary of {vocab_size} entries is too small"
            )));
        }
        let h = config.hidden;
        let normal = Normal::new(0.0, 1.0).expect("valid std");
        let token_embedding = Array2::from_shape_simple_fn((vocab_size, h), || normal.sample(rng));
        let sentence_blocks = (0..config.blocks)
            .map(|_| Block::random(h, config.feed_forward, rng))
            .collect();
        let document_blocks = (0..config.blocks)
            .map(|_| Block::random(h, config.feed_forward, rng))
            .collect();
        Ok(Self::assemble(
            config.clone(),
            token_embedding,
            sentence_blocks,
            LayerNorm::new(h),
            document_blocks,
            LayerNorm::new(h),
        ))
    }

    /// Zero tensors with the same shapes as `self`.
    pub fn zeros_like(&self) -> Self {
        let c = &self.config;
        let h = c.hidden;
        Self::assemble(
            c.clone(),
            Array2::zeros(self.token_embedding.dim()),
            (0..c.blocks)
                .map(|_| Block::zeros(h, c.feed_forward))
                .collect(),
            LayerNorm::zeros(h),
            (0..c.blocks)
                .map(|_| Block::zeros(h, c.feed_forward))
                .collect(),
            LayerNorm::zeros(h),
        )
    }

    fn assemble(
        config: EncoderConfig,
        token_embedding: Array2<f64>,
        sentence_blocks: Vec<Block>,
        sentence_norm: LayerNorm,
        document_blocks: Vec<Block>,
        final_norm: LayerNorm,
    ) -> Self {
        let token_positions = layers::sinusoidal(config.max_sentence_len, config.hidden);
        let sentence_positions = layers::sinusoidal(config.max_sentences, config.hidden);
        EncoderParams {
            config,
            token_embedding,
            sentence_blocks,
            sentence_norm,
            document_blocks,
            final_norm,
            token_positions,
            sentence_positions,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Trainable tensors in a fixed order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![(
            "token_embedding".to_string(),
            self.token_embedding.view().into_dyn(),
        )];
        for (level, blocks, norm) in [
            ("sentence", &self.sentence_blocks, &self.sentence_norm),
            ("document", &self.document_blocks, &self.final_norm),
        ] {
            for (i, b) in blocks.iter().enumerate() {
                let p = format!("{level}.{i}");
                out.extend([
                    (format!("{p}.ln1.gain"), b.ln1.gain.view().into_dyn()),
                    (format!("{p}.ln1.bias"), b.ln1.bias.view().into_dyn()),
                    (format!("{p}.attn.wq"), b.wq.view().into_dyn()),
                    (format!("{p}.attn.bq"), b.bq.view().into_dyn()),
                    (format!("{p}.attn.wk"), b.wk.view().into_dyn()),
                    (format!("{p}.attn.bk"), b.bk.view().into_dyn()),
                    (format!("{p}.attn.wv"), b.wv.view().into_dyn()),
                    (format!("{p}.attn.bv"), b.bv.view().into_dyn()),
                    (format!("{p}.attn.wo"), b.wo.view().into_dyn()),
                    (format!("{p}.attn.bo"), b.bo.view().into_dyn()),
                    (format!("{p}.ln2.gain"), b.ln2.gain.view().into_dyn()),
                    (format!("{p}.ln2.bias"), b.ln2.bias.view().into_dyn()),
                    (format!("{p}.ffn.w1"), b.w1.view().into_dyn()),
                    (format!("{p}.ffn.b1"), b.b1.view().into_dyn()),
                    (format!("{p}.ffn.w2"), b.w2.view().into_dyn()),
                    (format!("{p}.ffn.b2"), b.b2.view().into_dyn()),
                ]);
            }
            let norm_name = if level == "sentence" {
                "sentence_norm"
            } else {
                "final_norm"
            };
            out.push((format!("{norm_name}.gain"), norm.gain.view().into_dyn()));
            out.push((format!("{norm_name}.bias"), norm.bias.view().into_dyn()));
        }
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = vec![self.token_embedding.view_mut().into_dyn()];
        for (blocks, norm) in [
            (&mut self.sentence_blocks, &mut self.sentence_norm),
            (&mut self.document_blocks, &mut self.final_norm),
        ] {
            for b in blocks.iter_mut() {
                out.extend([
                    b.ln1.gain.view_mut().into_dyn(),
                    b.ln1.bias.view_mut().into_dyn(),
                    b.wq.view_mut().into_dyn(),
                    b.bq.view_mut().into_dyn(),
                    b.wk.view_mut().into_dyn(),
                    b.bk.view_mut().into_dyn(),
                    b.wv.view_mut().into_dyn(),
                    b.bv.view_mut().into_dyn(),
                    b.wo.view_mut().into_dyn(),
                    b.bo.view_mut().into_dyn(),
                    b.ln2.gain.view_mut().into_dyn(),
                    b.ln2.bias.view_mut().into_dyn(),
                    b.w1.view_mut().into_dyn(),
                    b.b1.view_mut().into_dyn(),
                    b.w2.view_mut().into_dyn(),
                    b.b2.view_mut().into_dyn(),
                ]);
            }
            out.push(norm.gain.view_mut().into_dyn());
            out.push(norm.bias.view_mut().into_dyn());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Sets every tensor to zero.
    pub fn fill_zero(&mut self) {
        for mut t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// Forward pass without dropout.
    pub fn encode(&self, doc: &TokenizedDoc) -> Result<DocumentEmbedding> {
        Ok(self.forward(doc, None)?.output)
    }

    /// Forward pass keeping every intermediate needed by [`ForwardRecord::backward`].
    /// Dropout is applied only when an rng is supplied and the configured rate is positive.
    pub fn forward(
        &self,
        doc: &TokenizedDoc,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardRecord> {
        let cfg = &self.config;
        let n_sent = doc.sentences.len();
        if n_sent == 0 {
            return Err(Error::InvalidArgument("document has no sentences".into()));
        }
        if n_sent > cfg.max_sentences {
            return Err(Error::InvalidArgument(format!(
                "document has {n_sent} sentences, encoder accepts at most {}",
                cfg.max_sentences
            )));
        }
        let mut dropout = rng.map(|r| (r, cfg.dropout));
        let h = cfg.hidden;

        // sentence level: all sentences stacked, attention within each segment
        let mut segments = Vec::with_capacity(n_sent);
        let mut tokens = Vec::new();
        for s in &doc.sentences {
            if s.is_empty() || s.len() > cfg.max_sentence_len {
                return Err(Error::InvalidArgument(format!(
                    "sentence length {} outside 1..={}",
                    s.len(),
                    cfg.max_sentence_len
                )));
            }
            segments.push((tokens.len(), s.len()));
            tokens.extend_from_slice(s);
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.vocab_size()) {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size()
            )));
        }
        let valid: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();
        let mut x = Array2::<f64>::zeros((tokens.len(), h));
        for &(start, len) in &segments {
            for pos in 0..len {
                let mut row = x.row_mut(start + pos);
                row.assign(&self.token_embedding.row(tokens[start + pos] as usize));
                row += &self.token_positions.row(pos);
            }
        }
        let layout = Layout {
            segments: &segments,
            valid: &valid,
        };
        let mut sentence_caches = Vec::with_capacity(cfg.blocks);
        for block in &self.sentence_blocks {
            let (next, cache) = block_forward(&x, block, cfg.heads, &layout, &mut dropout);
            sentence_caches.push(cache);
            x = next;
        }
        let (y, sentence_ln) = layer_norm(&x, &self.sentence_norm);
        let mut pooled_sentences = Array2::<f64>::zeros((n_sent, h));
        let mut pool_counts = Vec::with_capacity(n_sent);
        for (i, &(start, len)) in segments.iter().enumerate() {
            let rows = y.slice(ndarray::s![start..start + len, ..]);
            let mean = layers::masked_mean(rows, &valid[start..start + len]).ok_or_else(|| {
                Error::InvalidArgument(format!("sentence {i} contains only PAD tokens"))
            })?;
            pool_counts.push(valid[start..start + len].iter().filter(|v| **v).count());
            pooled_sentences.row_mut(i).assign(&mean);
        }

        // document level
        let mut d = &pooled_sentences + &self.sentence_positions.slice(ndarray::s![..n_sent, ..]);
        let doc_segments = [(0, n_sent)];
        let doc_valid = vec![true; n_sent];
        let doc_layout = Layout {
            segments: &doc_segments,
            valid: &doc_valid,
        };
        let mut document_caches = Vec::with_capacity(cfg.blocks);
        for block in &self.document_blocks {
            let (next, cache) = block_forward(&d, block, cfg.heads, &doc_layout, &mut dropout);
            document_caches.push(cache);
            d = next;
        }
        let summed = d.sum_axis(Axis(0)).insert_axis(Axis(0));
        let (out, final_ln) = layer_norm(&summed, &self.final_norm);
        let output = DocumentEmbedding(out.row(0).to_vec());

        Ok(ForwardRecord {
            tokens,
            segments,
            valid,
            sentence_caches,
            sentence_ln,
            pool_counts,
            document_caches,
            final_ln,
            output,
        })
    }
}

/// One encoder input: token ids per sentence, fundamental sentences first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub sentences: Vec<Vec<u32>>,
}

impl TokenizedDoc {
    pub fn from_sample(
        paper: &Paper,
        sample: &ContextSample,
        vocab: &Vocab,
        max_len: usize,
    ) -> Self {
        TokenizedDoc {
            sentences: sample
                .sentences(paper)
                .into_iter()
                .map(|s| tokenize(s, vocab, max_len))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DocumentEmbedding(pub Vec<f64>);

impl DocumentEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    tokens: Vec<u32>,
    segments: Vec<(usize, usize)>,
    valid: Vec<bool>,
    sentence_caches: Vec<BlockCache>,
    sentence_ln: LnCache,
    pool_counts: Vec<usize>,
    document_caches: Vec<BlockCache>,
    final_ln: LnCache,
    output: DocumentEmbedding,
}

impl ForwardRecord {
    pub fn output(&self) -> &DocumentEmbedding {
        &self.output
    }

    /// Adds `∂loss/∂params` to `grads`, given `∂loss/∂output`.
    pub fn backward_into(
        &self,
        params: &EncoderParams,
        upstream: &[f64],
        grads: &mut EncoderParams,
    ) -> Result<()> {
        let cfg = &params.config;
        let h = cfg.hidden;
        if upstream.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                actual: upstream.len(),
            });
        }
        let dy = Array1::from(upstream.to_vec()).insert_axis(Axis(0));
        let dsum = layer_norm_backward(
            &dy,
            &self.final_ln,
            &params.final_norm,
            &mut grads.final_norm,
        );
        let n_sent = self.segments.len();
        let mut dd = Array2::<f64>::zeros((n_sent, h));
        dd += &dsum.row(0);

        let doc_segments = [(0, n_sent)];
        let doc_valid = vec![true; n_sent];
        let doc_layout = Layout {
            segments: &doc_segments,
            valid: &doc_valid,
        };
        for ((block, cache), grad) in params
            .document_blocks
            .iter()
            .zip(&self.document_caches)
            .zip(grads.document_blocks.iter_mut())
            .rev()
        {
            dd = block_backward(&dd, block, cache, cfg.heads, &doc_layout, grad);
        }

        let mut dy_tokens = Array2::<f64>::zeros((self.tokens.len(), h));
        for (i, &(start, len)) in self.segments.iter().enumerate() {
            let scale = 1.0 / self.pool_counts[i] as f64;
            let g = dd.row(i).mapv(|v| v * scale);
            for r in start..start + len {
                if self.valid[r] {
                    dy_tokens.row_mut(r).assign(&g);
                }
            }
        }
        let mut dx = layer_norm_backward(
            &dy_tokens,
            &self.sentence_ln,
            &params.sentence_norm,
            &mut grads.sentence_norm,
        );
        let layout = Layout {
            segments: &self.segments,
            valid: &self.valid,
        };
        for ((block, cache), grad) in params
            .sentence_blocks
            .iter()
            .zip(&self.sentence_caches)
            .zip(grads.sentence_blocks.iter_mut())
            .rev()
        {
            dx = block_backward(&dx, block, cache, cfg.heads, &layout, grad);
        }
        for (row, &tok) in dx.rows().into_iter().zip(&self.tokens) {
            let mut target = grads.token_embedding.row_mut(tok as usize);
            target += &row;
        }
        Ok(())
    }
}

/// A forward/backward session over one parameter set.
pub struct Encoder<'p> {
    params: &'p EncoderParams,
    record: Option<ForwardRecord>,
}

impl<'p> Encoder<'p> {
    pub fn new(params: &'p EncoderParams) -> Self {
        Encoder {
            params,
            record: None,
        }
    }

    pub fn forward(
        &mut self,
        doc: &TokenizedDoc,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<&DocumentEmbedding> {
        let record = self.params.forward(doc, rng)?;
        Ok(&self.record.insert(record).output)
    }

    /// Exact gradients of `upstream · output` with respect to every tensor.
    pub fn backward(&self, upstream: &[f64]) -> Result<EncoderParams> {
        let record = self.record.as_ref().ok_or(Error::MissingForwardRecord)?;
        let mut grads = self.params.zeros_like();
        record.backward_into(self.params, upstream, &mut grads)?;
        Ok(grads)
    }
}

/// Mean of the unmasked vectors (`mask[i] == true` keeps row `i`).
pub fn mean_pool(vectors: &[Vec<f64>], mask: &[bool]) -> Result<Vec<f64>> {
    if vectors.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: mask.len(),
        });
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
    let view =
        ndarray::ArrayView2::from_shape((vectors.len(), dim), &flat).expect("consistent shape");
    layers::masked_mean(view, mask)
        .map(|m| m.to_vec())
        .ok_or_else(|| Error::InvalidArgument("every position is masked".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    pub(crate) fn tiny_config() -> EncoderConfig {
        EncoderConfig {
            blocks: 2,
            hidden: 16,
            heads: 2,
            feed_forward: 32,
            max_sentence_len: 12,
            max_sentences: 8,
            dropout: 0.1,
        }
    }

    fn doc() -> TokenizedDoc {
        TokenizedDoc {
            sentences: vec![
                vec![5, 9, 11, EOS],
                vec![7, EOS],
                vec![3, 3, 4, 20, 31, EOS],
            ],
        }
    }

    #[test]
    fn output_shape_and_finiteness() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(1)).unwrap();
        let e = params.encode(&doc()).unwrap();
        assert_eq!(e.dim(), 16);
        assert!(e.0.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn layer_norm_contract_on_output() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(2)).unwrap();
        let e = params.encode(&doc()).unwrap();
        let n = e.dim() as f64;
        let mean = e.0.iter().sum::<f64>() / n;
        let var = e.0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-5);
    }

    #[test]
    fn identical_params_are_bit_identical() {
        let a = EncoderParams::random(&tiny_config(), 50, &mut seeded(3)).unwrap();
        let b = a.clone();
        assert_eq!(a.encode(&doc()).unwrap(), b.encode(&doc()).unwrap());
        let c = EncoderParams::random(&tiny_config(), 50, &mut seeded(3)).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn pad_tokens_do_not_change_output() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(4)).unwrap();
        let mut padded = doc();
        padded.sentences[1].extend([PAD, PAD, PAD]);
        let a = params.encode(&doc()).unwrap();
        let b = params.encode(&padded).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_too_many_sentences_and_bad_tokens() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(5)).unwrap();
        let many = TokenizedDoc {
            sentences: vec![vec![EOS]; 9],
        };
        assert!(params.encode(&many).is_err());
        let bad = TokenizedDoc {
            sentences: vec![vec![99, EOS]],
        };
        assert!(params.encode(&bad).is_err());
        let all_pad = TokenizedDoc {
            sentences: vec![vec![PAD, PAD]],
        };
        assert!(params.encode(&all_pad).is_err());
        assert!(params.encode(&TokenizedDoc { sentences: vec![] }).is_err());
    }

    #[test]
    fn backward_requires_forward() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(6)).unwrap();
        let enc = Encoder::new(&params);
        assert!(matches!(
            enc.backward(&[0.0; 16]),
            Err(Error::MissingForwardRecord)
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients_and_repeat_is_identical() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(7)).unwrap();
        let mut enc = Encoder::new(&params);
        enc.forward(&doc(), None).unwrap();
        let g = enc.backward(&[0.0; 16]).unwrap();
        assert!(g
            .named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| *v == 0.0)));

        let up: Vec<f64> = (0..16).map(|i| (i as f64 - 7.5) / 4.0).collect();
        let g1 = enc.backward(&up).unwrap();
        let g2 = enc.backward(&up).unwrap();
        assert_eq!(g1, g2);
        assert!(enc.backward(&[0.0; 3]).is_err());
    }

    #[test]
    fn dropout_is_replayed_by_backward() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(8)).unwrap();
        let mut r1 = seeded(11);
        let mut r2 = seeded(11);
        let a = params.forward(&doc(), Some(&mut r1)).unwrap();
        let b = params.forward(&doc(), Some(&mut r2)).unwrap();
        assert_eq!(a.output(), b.output());
        let plain = params.encode(&doc()).unwrap();
        assert_ne!(a.output(), &plain);
    }

    #[test]
    fn mean_pool_cases() {
        let v = vec![1.0, -2.0];
        assert_eq!(
            mean_pool(&[v.clone(), v.clone(), v.clone()], &[true; 3]).unwrap(),
            v
        );
        assert_eq!(
            mean_pool(&[vec![1.0, 3.0], vec![3.0, 1.0]], &[true, true]).unwrap(),
            vec![2.0, 2.0]
        );
        assert_eq!(
            mean_pool(&[vec![1.0, 3.0], vec![9.0, 9.0]], &[true, false]).unwrap(),
            vec![1.0, 3.0]
        );
        assert!(mean_pool(&[vec![1.0]], &[false]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        assert!(EncoderConfig::full_size().validate().is_ok());
        let bad = EncoderConfig {
            hidden: 10,
            heads: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            blocks: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tensor_names_are_unique_and_ordered() {
        let params = EncoderParams::random(&tiny_config(), 50, &mut seeded(9)).unwrap();
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        let unique: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        let mut p = params.clone();
        assert_eq!(p.tensors_mut().len(), names.len());
        assert_eq!(names.len(), 1 + 2 * (2 * 16 + 2));
    }
}
