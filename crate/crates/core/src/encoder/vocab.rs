use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;

const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<eos>"];
const VOCAB_HEADER: &str = "#mpcite-vocab v1";

/// Dense token table. Indices 0..3 are PAD, UNK and EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate vocabulary entry {t:?}"
                )));
            }
        }
        Ok(Vocab { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{VOCAB_HEADER}")?;
        for t in &self.tokens[RESERVED.len()..] {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h == VOCAB_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected {VOCAB_HEADER:?}"),
                })
            }
        }
        let tokens = lines
            .enumerate()
            .map(|(i, l)| {
                l.map_err(|e| Error::Parse {
                    line: i + 2,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_tokens(tokens)
    }

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Indexes every token that occurs at least `min_freq` times; tokens are
/// ordered by descending frequency, then lexicographically.
pub fn build_vocab(corpus: &Corpus, min_freq: usize) -> Result<Vocab> {
    if min_freq == 0 {
        return Err(Error::InvalidArgument("min_freq must be >= 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for paper in corpus.papers() {
        for sentence in paper.abstract_sentences.iter().chain(&paper.body_sentences) {
            for token in sentence {
                *counts.entry(token.as_str()).or_insert(0) += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::InvalidArgument("corpus contains no tokens".into()));
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq && !RESERVED.contains(t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t.to_owned()))
}

/// Maps a sentence to token ids, truncated to `max_len - 1` tokens followed
/// by EOS.
pub fn tokenize<S: AsRef<str>>(sentence: &[S], vocab: &Vocab, max_len: usize) -> Vec<u32> {
    let keep = max_len.saturating_sub(1);
    let mut ids: Vec<u32> = sentence
        .iter()
        .take(keep)
        .map(|t| vocab.id(t.as_ref()))
        .collect();
    if max_len > 0 {
        ids.push(EOS);
    }
    ids
}
