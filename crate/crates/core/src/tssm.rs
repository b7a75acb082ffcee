//! Text self-similarity matching.
//!
//! The prompt `A photo of {title}` is tokenized into a fixed 77-slot
//! sequence. The title tokens (at most three) act as a sliding 1-D kernel
//! over the token embeddings; the responses are softmax-pooled into a title
//! vector, whose cosine similarity `W` with the sentence embedding weights the
//! fused text vector `W · sentence + title`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, Error, Result};
use crate::grid::{cosine_similarity, EmbeddingMatrix};

pub const SEQUENCE_LEN: usize = 77;
/// Content slots left once the class and end markers are placed.
pub const MAX_CONTENT_TOKENS: usize = SEQUENCE_LEN - 2;
pub const MAX_TITLE_TOKENS: usize = 3;
pub const CLASS_TOKEN: u32 = 49406;
pub const END_TOKEN: u32 = 49407;

const PROMPT_PREFIX: &str = "A photo of";

pub fn build_prompt(title: &str) -> Result<String> {
    let title = title.trim();
    if title.is_empty() {
        return Err(Error::invalid("prompt title must not be empty"));
    }
    Ok(format!("{PROMPT_PREFIX} {title}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TitleSpan {
    pub start: usize,
    pub len: usize,
}

/// Fixed-length token id sequence: class marker, content, end marker, zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: [u32; SEQUENCE_LEN],
    title_span: TitleSpan,
    class_index: usize,
    end_index: usize,
}

impl TokenSequence {
    pub fn from_parts(
        ids: [u32; SEQUENCE_LEN],
        title_span: TitleSpan,
        class_index: usize,
        end_index: usize,
    ) -> Result<Self> {
        if class_index >= end_index || end_index >= SEQUENCE_LEN {
            return Err(Error::data(format!(
                "marker positions class={class_index} end={end_index} are invalid"
            )));
        }
        if ids[end_index + 1..].iter().any(|&id| id != 0) {
            return Err(Error::data("non-zero ids after the end marker"));
        }
        if !(1..=MAX_TITLE_TOKENS).contains(&title_span.len)
            || title_span.start <= class_index
            || title_span.start + title_span.len > end_index
        {
            return Err(Error::data(format!(
                "title span {:?} is outside content positions {}..{}",
                title_span,
                class_index + 1,
                end_index
            )));
        }
        Ok(Self {
            ids,
            title_span,
            class_index,
            end_index,
        })
    }

    pub fn ids(&self) -> &[u32; SEQUENCE_LEN] {
        &self.ids
    }

    pub fn title_span(&self) -> TitleSpan {
        self.title_span
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn end_index(&self) -> usize {
        self.end_index
    }

    /// Content positions, markers excluded.
    pub fn content(&self) -> std::ops::Range<usize> {
        self.class_index + 1..self.end_index
    }
}

/// Wraps raw content ids with the class/end markers and zero padding.
///
/// `title_span` indexes `raw_ids`; it is shifted past the class marker and
/// truncated to [`MAX_TITLE_TOKENS`].
pub fn pad_tokens(raw_ids: &[u32], title_span: TitleSpan) -> Result<TokenSequence> {
    if raw_ids.is_empty() {
        return Err(Error::invalid("token content must not be empty"));
    }
    if raw_ids.len() > MAX_CONTENT_TOKENS {
        return Err(Error::invalid(format!(
            "{} content tokens exceed the limit of {MAX_CONTENT_TOKENS}",
            raw_ids.len()
        )));
    }
    if title_span.len == 0 || title_span.start + title_span.len > raw_ids.len() {
        return Err(Error::invalid(format!(
            "title span {title_span:?} does not fit {} content tokens",
            raw_ids.len()
        )));
    }
    let mut ids = [0u32; SEQUENCE_LEN];
    ids[0] = CLASS_TOKEN;
    ids[1..=raw_ids.len()].copy_from_slice(raw_ids);
    let end_index = raw_ids.len() + 1;
    ids[end_index] = END_TOKEN;
    let span = TitleSpan {
        start: title_span.start + 1,
        len: title_span.len.min(MAX_TITLE_TOKENS),
    };
    TokenSequence::from_parts(ids, span, 0, end_index)
}

/// Maps text to token ids.
pub trait Tokenizer {
    fn encode(&self, text: &str) -> Vec<u32>;
}

/// Whitespace tokenizer with a stable hash of each lowercased word.
///
/// Ids fall in `1..CLASS_TOKEN`, so they never collide with padding or markers.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTokenizer;

impl MockTokenizer {
    pub fn word_id(word: &str) -> u32 {
        // FNV-1a
        let mut h: u32 = 0x811c_9dc5;
        for b in word.to_lowercase().bytes() {
            h ^= b as u32;
            h = h.wrapping_mul(0x0100_0193);
        }
        let folded = (h >> 16) ^ (h & 0xffff);
        1 + folded % (CLASS_TOKEN - 1)
    }
}

impl Tokenizer for MockTokenizer {
    fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(Self::word_id).collect()
    }
}

/// Tokenizes `A photo of {title}` and records where the title sits.
pub fn tokenize_prompt(tokenizer: &dyn Tokenizer, title: &str) -> Result<TokenSequence> {
    build_prompt(title)?;
    let mut raw = tokenizer.encode(PROMPT_PREFIX);
    let title_ids = tokenizer.encode(title.trim());
    if title_ids.is_empty() {
        return Err(Error::invalid("title produced no tokens"));
    }
    let span = TitleSpan {
        start: raw.len(),
        len: title_ids.len(),
    };
    raw.extend_from_slice(&title_ids);
    pad_tokens(&raw, span)
}

/// Attention-pooled title vector.
///
/// The title window `E[start..start+k]` slides over content positions; window
/// `p` scores `r_p = Σ_j <E[start+j], E[p+j]>`. The result is the
/// `softmax(r)`-weighted sum of the window means.
pub fn title_embedding(seq: &TokenSequence, token_embeddings: &EmbeddingMatrix) -> Result<Vec<f64>> {
    check_dim("token embedding rows", SEQUENCE_LEN, token_embeddings.rows())?;
    let TitleSpan { start, len: k } = seq.title_span();
    let content = seq.content();
    if k == 0 || start < content.start || start + k > content.end {
        return Err(Error::data(format!("title span {:?} outside content", seq.title_span())));
    }
    let dim = token_embeddings.dim();
    let row = |i: usize| token_embeddings.row(i);
    let positions: Vec<usize> = (content.start..=content.end - k).collect();

    let responses: Vec<f64> = positions
        .iter()
        .map(|&p| {
            (0..k)
                .map(|j| {
                    row(start + j)
                        .iter()
                        .zip(row(p + j))
                        .map(|(&a, &b)| a as f64 * b as f64)
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    let peak = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = responses.iter().map(|r| (r - peak).exp()).collect();
    let z: f64 = exps.iter().sum();

    let mut out = vec![0.0f64; dim];
    for (&p, e) in positions.iter().zip(&exps) {
        let weight = e / z / k as f64;
        for j in 0..k {
            for (o, &v) in out.iter_mut().zip(row(p + j)) {
                *o += weight * v as f64;
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("title embedding is not finite".into()));
    }
    Ok(out)
}

/// Returns `(W, W · sentence + title)` with `W = cos(sentence, title)`.
pub fn tssm_fuse(sentence: &[f32], title: &[f32]) -> Result<(f64, Vec<f32>)> {
    let w = cosine_similarity(sentence, title)?;
    let fused = sentence
        .iter()
        .zip(title)
        .map(|(&t, &o)| (w * t as f64 + o as f64) as f32)
        .collect();
    Ok((w, fused))
}

/// Everything derived from one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct TextBundle {
    pub tokens: TokenSequence,
    pub token_embeddings: EmbeddingMatrix,
    pub sentence_embedding: Vec<f32>,
    pub title_embedding: Vec<f32>,
    pub self_support: Vec<f32>,
    pub weight: f64,
}

impl TextBundle {
    pub fn build(tokens: TokenSequence, token_embeddings: EmbeddingMatrix, sentence_embedding: Vec<f32>) -> Result<Self> {
        check_dim("sentence embedding length", token_embeddings.dim(), sentence_embedding.len())?;
        if sentence_embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("sentence embedding is not finite".into()));
        }
        let title: Vec<f32> = title_embedding(&tokens, &token_embeddings)?
            .into_iter()
            .map(|v| v as f32)
            .collect();
        let (weight, self_support) = tssm_fuse(&sentence_embedding, &title)?;
        Ok(Self {
            tokens,
            token_embeddings,
            sentence_embedding,
            title_embedding: title,
            self_support,
            weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.self_support.len()
    }
}

/// Deterministic stand-in for a text encoder.
///
/// Each token id maps to a fixed pseudo-random vector (padding maps to zero);
/// the sentence embedding is the mean over the content positions.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn token_vector(&self, id: u32) -> Vec<f32> {
        if id == 0 {
            return vec![0.0; self.dim];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let normal = Normal::new(0.0, 1.0 / (self.dim as f64).sqrt()).unwrap();
        (0..self.dim).map(|_| normal.sample(&mut rng) as f32).collect()
    }

    pub fn embed(&self, seq: &TokenSequence) -> Result<(EmbeddingMatrix, Vec<f32>)> {
        let rows: Vec<Vec<f32>> = seq.ids().iter().map(|&id| self.token_vector(id)).collect();
        let content = seq.content();
        let n = content.len() as f64;
        let mut sentence = vec![0.0f64; self.dim];
        for i in content {
            for (s, &v) in sentence.iter_mut().zip(&rows[i]) {
                *s += v as f64 / n;
            }
        }
        Ok((
            EmbeddingMatrix::from_rows(&rows)?,
            sentence.into_iter().map(|v| v as f32).collect(),
        ))
    }

    pub fn bundle(&self, tokenizer: &dyn Tokenizer, title: &str) -> Result<TextBundle> {
        let seq = tokenize_prompt(tokenizer, title)?;
        let (tokens, sentence) = self.embed(&seq)?;
        TextBundle::build(seq, tokens, sentence)
    }
}
