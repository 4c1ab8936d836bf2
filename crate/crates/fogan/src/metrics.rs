//! Evaluation metrics: n-gram Jensen-Shannon divergence with a Bayes-limit
//! estimate, and mode coverage for mixture toys.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::measures::{euclidean, EmpiricalMeasure};
use crate::{Error, Result};

/// Empirical distribution of the n-grams appearing in a set of sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramDistribution {
    n: usize,
    counts: HashMap<Vec<u16>, u64>,
    total: u64,
}

impl NGramDistribution {
    /// Counts every length-`n` window of every sequence.
    pub fn from_sequences(sequences: &[Vec<u16>], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("n must be >= 1".into()));
        }
        let mut counts: HashMap<Vec<u16>, u64> = HashMap::new();
        let mut total = 0u64;
        for seq in sequences {
            if seq.len() < n {
                continue;
            }
            for window in seq.windows(n) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::Usage(
                "no n-grams: sequences are empty or shorter than n".into(),
            ));
        }
        Ok(NGramDistribution { n, counts, total })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    fn prob(&self, gram: &[u16]) -> f64 {
        self.counts.get(gram).copied().unwrap_or(0) as f64 / self.total as f64
    }
}

/// Jensen-Shannon divergence between two n-gram distributions with base-2
/// logarithms, so the value lies in `[0, 1]`; plug-in probabilities over the
/// union support.
pub fn ngram_jsd(a: &NGramDistribution, b: &NGramDistribution) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::Usage(format!(
            "n-gram orders differ: {} vs {}",
            a.n, b.n
        )));
    }
    let mut jsd = 0.0;
    let seen_in_a = |gram: &Vec<u16>| a.counts.contains_key(gram);
    for (gram, &ca) in &a.counts {
        let pa = ca as f64 / a.total as f64;
        let pb = b.prob(gram);
        let m = 0.5 * (pa + pb);
        jsd += 0.5 * pa * (pa / m).log2();
        if pb > 0.0 {
            jsd += 0.5 * pb * (pb / m).log2();
        }
    }
    for (gram, &cb) in &b.counts {
        if seen_in_a(gram) {
            continue;
        }
        let pb = cb as f64 / b.total as f64;
        // pa = 0 here, so only the Q side contributes and m = pb/2.
        jsd += 0.5 * pb;
    }
    // Clamp tiny negative rounding noise.
    Ok(jsd.clamp(0.0, 1.0))
}

/// Estimation-bias floor of the plug-in n-gram JSD at a given sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesLimit {
    pub mean: f64,
    pub std: f64,
    /// Set when `repeats == 1`, where the reported std of 0 is meaningless.
    pub degenerate: bool,
}

/// Monte Carlo estimate of the JSD between two *disjoint* samples of the same
/// corpus: even perfect generators cannot score below this floor at the given
/// evaluation sample size.
pub fn bayes_limit(
    corpus: &[Vec<u16>],
    n: usize,
    sample_size: usize,
    repeats: usize,
    seed: u64,
) -> Result<BayesLimit> {
    if repeats == 0 {
        return Err(Error::Usage("repeats must be >= 1".into()));
    }
    if corpus.len() < 2 * sample_size {
        return Err(Error::Usage(format!(
            "corpus of {} sequences cannot supply two disjoint samples of {}",
            corpus.len(),
            sample_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..corpus.len()).collect();
    let mut values = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        indices.shuffle(&mut rng);
        let take = |range: std::ops::Range<usize>| -> Vec<Vec<u16>> {
            indices[range].iter().map(|&i| corpus[i].clone()).collect()
        };
        let a = NGramDistribution::from_sequences(&take(0..sample_size), n)?;
        let b = NGramDistribution::from_sequences(&take(sample_size..2 * sample_size), n)?;
        values.push(ngram_jsd(&a, &b)?);
    }
    let mean = values.iter().sum::<f64>() / repeats as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / repeats as f64;
    Ok(BayesLimit {
        mean,
        std: var.sqrt(),
        degenerate: repeats == 1,
    })
}

/// Number of centers that hold at least `min_frac` of the samples within
/// `radius`.
pub fn mode_coverage(
    samples: &EmpiricalMeasure,
    centers: &[Vec<f64>],
    radius: f64,
    min_frac: f64,
) -> usize {
    assert!(radius > 0.0, "radius must be positive");
    assert!(
        min_frac > 0.0 && min_frac < 1.0,
        "min_frac must be in (0,1)"
    );
    let mut mass = vec![0.0f64; centers.len()];
    for (x, w) in samples.iter() {
        for (c, m) in centers.iter().zip(&mut mass) {
            if euclidean(x, c) <= radius {
                *m += w;
            }
        }
    }
    mass.iter().filter(|&&m| m >= min_frac).count()
}
