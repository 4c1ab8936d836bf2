//! Toy text corpora: UTF-8 line corpora mapped to symbol ids, a seeded
//! second-order Markov generator for the toy language task, and one-hot
//! encoding so sequence batches can feed a vector critic.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::measures::EmpiricalMeasure;
use crate::training::BatchSource;
use crate::{Error, Result};

/// Sequences of symbol ids plus the alphabet they index into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextCorpus {
    pub sequences: Vec<Vec<u16>>,
    pub alphabet: Vec<char>,
}

impl TextCorpus {
    /// One sequence per non-empty line; the alphabet is the sorted set of
    /// characters that occur.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut alphabet: Vec<char> = text.lines().flat_map(|l| l.chars()).collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        if alphabet.is_empty() {
            return Err(Error::Usage("corpus is empty".into()));
        }
        let sequences = encode_lines(text, &alphabet)?;
        Ok(TextCorpus {
            sequences,
            alphabet,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for seq in &self.sequences {
            for &id in seq {
                out.push(self.alphabet[id as usize]);
            }
            out.push('\n');
        }
        out
    }
}

/// Encodes lines against a fixed alphabet; unknown characters are an error.
pub fn encode_lines(text: &str, alphabet: &[char]) -> Result<Vec<Vec<u16>>> {
    let index: HashMap<char, u16> = alphabet
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u16))
        .collect();
    let mut sequences = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let mut seq = Vec::with_capacity(line.len());
        for c in line.chars() {
            match index.get(&c) {
                Some(&id) => seq.push(id),
                None => {
                    return Err(Error::Usage(format!(
                        "character '{c}' not in the shared alphabet"
                    )))
                }
            }
        }
        sequences.push(seq);
    }
    if sequences.is_empty() {
        return Err(Error::Usage("corpus has no non-empty lines".into()));
    }
    Ok(sequences)
}

/// The union alphabet of several texts, sorted.
pub fn joint_alphabet(texts: &[&str]) -> Vec<char> {
    let mut alphabet: Vec<char> = texts
        .iter()
        .flat_map(|t| t.lines().flat_map(|l| l.chars()))
        .collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    alphabet
}

/// Alphabet used by the toy Markov language.
pub const TOY_ALPHABET: [char; 8] = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];

/// Probability mass the favored successor receives at each state pair of the
/// toy chain. The deterministic skeleton funnels into short attractor cycles,
/// so the language has strong structure a small generator can pick up, while
/// the residual noise keeps the chain genuinely stochastic.
pub const TOY_DOMINANT: f64 = 0.98;

/// Samples a corpus from a fixed second-order Markov chain over eight
/// symbols. The transition table itself is drawn once from `seed`, with one
/// dominant successor per state pair.
pub fn markov_toy_corpus(n_sequences: usize, seq_len: usize, seed: u64) -> TextCorpus {
    let k = TOY_ALPHABET.len() as u16;
    let mut table_rng = ChaCha8Rng::seed_from_u64(seed);
    table_rng.set_stream(1);
    // favored[(prev2, prev1)] and the probability mass it receives.
    let mut favored = vec![0u16; (k * k) as usize];
    for f in &mut favored {
        *f = table_rng.gen_range(0..k);
    }
    let dominant = TOY_DOMINANT;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut sequences = Vec::with_capacity(n_sequences);
    for _ in 0..n_sequences {
        let mut seq: Vec<u16> = Vec::with_capacity(seq_len);
        seq.push(rng.gen_range(0..k));
        seq.push(rng.gen_range(0..k));
        while seq.len() < seq_len {
            let p2 = seq[seq.len() - 2];
            let p1 = seq[seq.len() - 1];
            let fav = favored[(p2 * k + p1) as usize];
            let next = if rng.gen::<f64>() < dominant {
                fav
            } else {
                rng.gen_range(0..k)
            };
            seq.push(next);
        }
        sequences.push(seq);
    }
    TextCorpus {
        sequences,
        alphabet: TOY_ALPHABET.to_vec(),
    }
}

/// One-hot encoding of a symbol sequence, flattened position-major.
pub fn one_hot(seq: &[u16], alphabet_size: usize) -> Vec<f64> {
    let mut v = vec![0.0; seq.len() * alphabet_size];
    for (pos, &id) in seq.iter().enumerate() {
        v[pos * alphabet_size + id as usize] = 1.0;
    }
    v
}

/// Arg-max decoding of a flattened `positions × alphabet` row block back to
/// symbol ids (the inverse of [`one_hot`] for hard rows, and the natural
/// readout of per-position softmax rows).
pub fn decode_rows(rows: &[f64], alphabet_size: usize) -> Vec<u16> {
    rows.chunks(alphabet_size)
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i as u16)
                .unwrap_or(0)
        })
        .collect()
}

/// Batch source that one-hot encodes random corpus lines.
pub struct CorpusSource<'a> {
    corpus: &'a TextCorpus,
    seq_len: usize,
}

impl<'a> CorpusSource<'a> {
    pub fn new(corpus: &'a TextCorpus) -> Result<CorpusSource<'a>> {
        let seq_len = corpus
            .sequences
            .first()
            .ok_or_else(|| Error::Usage("corpus is empty".into()))?
            .len();
        if corpus.sequences.iter().any(|s| s.len() != seq_len) {
            return Err(Error::Usage(
                "corpus sequences must share one length for one-hot batches".into(),
            ));
        }
        Ok(CorpusSource { corpus, seq_len })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
}

impl BatchSource for CorpusSource<'_> {
    fn dim(&self) -> usize {
        self.seq_len * self.corpus.alphabet_size()
    }

    fn batch(&self, size: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
        let k = self.corpus.alphabet_size();
        let points: Vec<Vec<f64>> = (0..size)
            .map(|_| {
                let seq = &self.corpus.sequences[rng.gen_range(0..self.corpus.sequences.len())];
                one_hot(seq, k)
            })
            .collect();
        EmpiricalMeasure::uniform(points).expect("one-hot batch is valid")
    }
}
