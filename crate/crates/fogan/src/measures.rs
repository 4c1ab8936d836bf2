//! Finite-support probability measures, generator families, and the stretched
//! sampler that pulls generated points toward the data distribution.
//!
//! All expectations over these measures are weighted finite sums, which keeps
//! the fixed-point critic machinery exact at desk scale.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Expr, Tape};
use crate::nets::{Activation, Mlp};
use crate::{Error, Result, DIST_FLOOR};

/// A weighted finite point set in ℝⁿ.
///
/// Weights are non-negative and sum to one (within 1e-12); all points share
/// one dimension and contain no NaN/Inf coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Shape("measure needs at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::Shape("points must have dimension >= 1".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::Shape(format!(
                    "mixed point dimensions {} and {}",
                    dim,
                    p.len()
                )));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Numeric("non-finite point coordinate".into()));
            }
        }
        let mut total = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!("invalid weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(EmpiricalMeasure { points, weights })
    }

    /// Equally weighted measure on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::Shape("measure needs at least one point".into()));
        }
        // Build weights that sum to exactly one.
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let sum: f64 = weights.iter().sum();
        weights[n - 1] += 1.0 - sum;
        Self::new(points, weights)
    }

    /// A point mass.
    pub fn dirac(point: Vec<f64>) -> Self {
        Self::new(vec![point], vec![1.0]).expect("a single finite point is always valid")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .iter()
            .map(|p| p.as_slice())
            .zip(self.weights.iter().copied())
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.iter() {
            for (mi, &c) in m.iter_mut().zip(p) {
                *mi += w * c;
            }
        }
        m
    }

    /// Draws `count` points i.i.d. from this measure (by weight).
    pub fn resample(&self, count: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
        let points = (0..count)
            .map(|_| self.points[self.sample_index(rng)].clone())
            .collect();
        EmpiricalMeasure::uniform(points).expect("resampled points are valid")
    }

    pub fn sample_index(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.len() - 1
    }
}

/// Euclidean distance between two points.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Matrix of pairwise Euclidean distances; entry `(i, j)` is `‖pᵢ - qⱼ‖`.
pub fn pairwise_distances(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<Vec<Vec<f64>>> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(p.points()
        .iter()
        .map(|a| q.points().iter().map(|b| euclidean(a, b)).collect())
        .collect())
}

/// Pairwise distances clamped from below by [`DIST_FLOOR`], plus a flag that
/// is set when any pair actually hit the clamp.
pub fn clamped_distances(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
) -> Result<(Vec<Vec<f64>>, bool)> {
    let mut d = pairwise_distances(p, q)?;
    let mut clamped = false;
    for row in &mut d {
        for v in row {
            if *v < DIST_FLOOR {
                *v = DIST_FLOOR;
                clamped = true;
            }
        }
    }
    Ok((d, clamped))
}

/// Latent distribution with bounded support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentSpec {
    /// `U([0, 1]^d)`.
    Unit { dim: usize },
    /// `U([-1, 1]^d)`.
    Symmetric { dim: usize },
}

impl LatentSpec {
    pub fn dim(&self) -> usize {
        match *self {
            LatentSpec::Unit { dim } | LatentSpec::Symmetric { dim } => dim,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            LatentSpec::Unit { dim } => (0..dim).map(|_| rng.gen::<f64>()).collect(),
            LatentSpec::Symmetric { dim } => {
                (0..dim).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect()
            }
        }
    }
}

/// The analytic or network form of a parameterized pushforward `g(θ, z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorKind {
    /// `g(θ, z) = θ`; the generated measure is `δ_θ`.
    DiracLocation,
    /// 1-D `g(θ, z) = θ·z` with `z ∼ U([0,1])`, i.e. `U([0, θ])`, θ > 0.
    UniformInterval,
    /// `g(θ, z) = A z + b` with `θ = [A row-major | b]`.
    AffinePushforward { out_dim: usize },
    /// MLP pushforward; `θ` is the flat parameter vector.
    NetworkPushforward {
        hidden: Vec<usize>,
        out_dim: usize,
        activation: Activation,
    },
    /// MLP whose output is reshaped to `positions × alphabet` and passed
    /// through a per-position softmax, for sequence toys.
    SoftmaxSequence {
        hidden: Vec<usize>,
        positions: usize,
        alphabet: usize,
        activation: Activation,
    },
}

/// A parameterized family of generated distributions `Q_θ ∼ g(θ, z)`, `z ∼ Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorFamily {
    pub kind: GeneratorKind,
    pub theta: Vec<f64>,
    pub latent: LatentSpec,
}

impl GeneratorFamily {
    pub fn dirac(theta: Vec<f64>) -> Self {
        GeneratorFamily {
            kind: GeneratorKind::DiracLocation,
            theta,
            latent: LatentSpec::Unit { dim: 1 },
        }
    }

    pub fn uniform_interval(theta: f64) -> Self {
        GeneratorFamily {
            kind: GeneratorKind::UniformInterval,
            theta: vec![theta],
            latent: LatentSpec::Unit { dim: 1 },
        }
    }

    pub fn affine(matrix_rows: Vec<Vec<f64>>, bias: Vec<f64>, latent: LatentSpec) -> Self {
        let out_dim = bias.len();
        let mut theta = Vec::new();
        for row in &matrix_rows {
            theta.extend_from_slice(row);
        }
        theta.extend_from_slice(&bias);
        GeneratorFamily {
            kind: GeneratorKind::AffinePushforward { out_dim },
            theta,
            latent,
        }
    }

    pub fn network(net: &Mlp, latent: LatentSpec) -> Self {
        let sizes = net.layer_sizes();
        GeneratorFamily {
            kind: GeneratorKind::NetworkPushforward {
                hidden: sizes[1..sizes.len() - 1].to_vec(),
                out_dim: sizes[sizes.len() - 1],
                activation: net.activation(),
            },
            theta: net.params().to_vec(),
            latent,
        }
    }

    /// Output dimension of generated points.
    pub fn output_dim(&self) -> usize {
        match &self.kind {
            GeneratorKind::DiracLocation => self.theta.len(),
            GeneratorKind::UniformInterval => 1,
            GeneratorKind::AffinePushforward { out_dim } => *out_dim,
            GeneratorKind::NetworkPushforward { out_dim, .. } => *out_dim,
            GeneratorKind::SoftmaxSequence {
                positions,
                alphabet,
                ..
            } => positions * alphabet,
        }
    }

    fn net_layer_sizes(&self) -> Option<Vec<usize>> {
        match &self.kind {
            GeneratorKind::NetworkPushforward {
                hidden, out_dim, ..
            } => {
                let mut sizes = vec![self.latent.dim()];
                sizes.extend_from_slice(hidden);
                sizes.push(*out_dim);
                Some(sizes)
            }
            GeneratorKind::SoftmaxSequence {
                hidden,
                positions,
                alphabet,
                ..
            } => {
                let mut sizes = vec![self.latent.dim()];
                sizes.extend_from_slice(hidden);
                sizes.push(positions * alphabet);
                Some(sizes)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            GeneratorKind::DiracLocation => {
                if self.theta.is_empty() {
                    return Err(Error::Domain("Dirac location needs theta".into()));
                }
            }
            GeneratorKind::UniformInterval => {
                if self.theta.len() != 1 {
                    return Err(Error::Domain("UniformInterval takes a scalar theta".into()));
                }
                if self.theta[0] <= 0.0 {
                    return Err(Error::Domain(format!(
                        "UniformInterval requires theta > 0, got {}",
                        self.theta[0]
                    )));
                }
            }
            GeneratorKind::AffinePushforward { out_dim } => {
                let want = out_dim * self.latent.dim() + out_dim;
                if self.theta.len() != want {
                    return Err(Error::Shape(format!(
                        "affine theta length {} != {}",
                        self.theta.len(),
                        want
                    )));
                }
            }
            GeneratorKind::NetworkPushforward { .. } | GeneratorKind::SoftmaxSequence { .. } => {
                let sizes = self.net_layer_sizes().unwrap();
                let want = Mlp::param_count(&sizes);
                if self.theta.len() != want {
                    return Err(Error::Shape(format!(
                        "network theta length {} != {}",
                        self.theta.len(),
                        want
                    )));
                }
            }
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("non-finite theta".into()));
        }
        Ok(())
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        GeneratorFamily {
            kind: self.kind.clone(),
            theta,
            latent: self.latent,
        }
    }

    /// `g(θ, z)` in plain floats.
    pub fn push(&self, z: &[f64]) -> Vec<f64> {
        match &self.kind {
            GeneratorKind::DiracLocation => self.theta.clone(),
            GeneratorKind::UniformInterval => vec![self.theta[0] * z[0]],
            GeneratorKind::AffinePushforward { out_dim } => {
                let d = self.latent.dim();
                (0..*out_dim)
                    .map(|i| {
                        let row = &self.theta[i * d..(i + 1) * d];
                        let b = self.theta[out_dim * d + i];
                        row.iter().zip(z).map(|(a, zz)| a * zz).sum::<f64>() + b
                    })
                    .collect()
            }
            GeneratorKind::NetworkPushforward { .. } => {
                let net = self.as_net();
                net.eval(z)
            }
            GeneratorKind::SoftmaxSequence {
                positions,
                alphabet,
                ..
            } => {
                let net = self.as_net();
                let raw = net.eval(z);
                softmax_rows(&raw, *positions, *alphabet)
            }
        }
    }

    fn as_net(&self) -> Mlp {
        let sizes = self.net_layer_sizes().expect("network kind");
        let activation = match &self.kind {
            GeneratorKind::NetworkPushforward { activation, .. }
            | GeneratorKind::SoftmaxSequence { activation, .. } => *activation,
            _ => unreachable!(),
        };
        Mlp::new(sizes, activation, self.theta.clone()).expect("validated theta")
    }

    /// `g(θ, z)` as tape expressions of `θ`, for pathwise generator updates.
    pub fn push_exprs<'t>(&self, tape: &'t Tape, theta: &[Expr<'t>], z: &[f64]) -> Vec<Expr<'t>> {
        match &self.kind {
            GeneratorKind::DiracLocation => theta.to_vec(),
            GeneratorKind::UniformInterval => vec![theta[0] * z[0]],
            GeneratorKind::AffinePushforward { out_dim } => {
                let d = self.latent.dim();
                (0..*out_dim)
                    .map(|i| {
                        let mut acc = theta[out_dim * d + i];
                        for (j, &zz) in z.iter().enumerate() {
                            acc = acc + theta[i * d + j] * zz;
                        }
                        acc
                    })
                    .collect()
            }
            GeneratorKind::NetworkPushforward { .. } => {
                let net = self.as_net();
                let x = tape.constants(z);
                net.forward_exprs(tape, &x, theta)
            }
            GeneratorKind::SoftmaxSequence {
                positions,
                alphabet,
                ..
            } => {
                let net = self.as_net();
                let x = tape.constants(z);
                let raw = net.forward_exprs(tape, &x, theta);
                softmax_rows_exprs(&raw, *positions, *alphabet)
            }
        }
    }

    pub fn sample_latents(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.latent.sample(&mut rng)).collect()
    }

    /// Draws `count` equally weighted points `g(θ, zᵢ)`, `zᵢ ∼ Z` i.i.d.
    pub fn sample(&self, count: usize, seed: u64) -> Result<EmpiricalMeasure> {
        if count == 0 {
            return Err(Error::Usage("sample count must be >= 1".into()));
        }
        self.validate()?;
        let points = self
            .sample_latents(count, seed)
            .into_iter()
            .map(|z| self.push(&z))
            .collect();
        EmpiricalMeasure::uniform(points)
    }
}

fn softmax_rows(raw: &[f64], positions: usize, alphabet: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    for p in 0..positions {
        let row = &raw[p * alphabet..(p + 1) * alphabet];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / s));
    }
    out
}

fn softmax_rows_exprs<'t>(raw: &[Expr<'t>], positions: usize, alphabet: usize) -> Vec<Expr<'t>> {
    let mut out = Vec::with_capacity(raw.len());
    for p in 0..positions {
        let row = &raw[p * alphabet..(p + 1) * alphabet];
        // Shift by the current max for overflow safety; the shift is treated
        // as a constant, which leaves the softmax value and gradient intact.
        let m = row
            .iter()
            .map(|e| e.value())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Expr<'t>> = row.iter().map(|&v| (v - m).exp()).collect();
        let s = exps
            .iter()
            .copied()
            .reduce(|a, b| a + b)
            .expect("alphabet >= 1");
        let inv = s.recip();
        out.extend(exps.iter().map(|&e| e * inv));
    }
    out
}

/// The stretch magnitude `ε` for pulling generated samples toward the data:
/// `α ∼ U([0, ε])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchSpec {
    epsilon: f64,
}

impl StretchSpec {
    /// Default stretch used by training.
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Domain(format!(
                "stretch epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        Ok(StretchSpec { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sample_alpha(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.epsilon * rng.gen::<f64>()
    }
}

impl Default for StretchSpec {
    fn default() -> Self {
        StretchSpec {
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

/// Samples the stretched distribution: each output point is `x' - α (x' - x)`
/// with `x ∼ p`, `x' ∼ q`, `α ∼ U([0, ε])` drawn independently.
pub fn stretch_sample(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    spec: StretchSpec,
    count: usize,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    if count == 0 {
        return Err(Error::Usage("sample count must be >= 1".into()));
    }
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let x = p.point(p.sample_index(&mut rng)).to_vec();
            let xp = q.point(q.sample_index(&mut rng));
            let alpha = spec.sample_alpha(&mut rng);
            stretch_point(&x, xp, alpha)
        })
        .collect();
    EmpiricalMeasure::uniform(points)
}

/// `x' - α (x' - x)` for one pair.
pub fn stretch_point(x: &[f64], x_prime: &[f64], alpha: f64) -> Vec<f64> {
    x_prime
        .iter()
        .zip(x)
        .map(|(&xp, &xx)| xp - alpha * (xp - xx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_sampling_is_constant() {
        let fam = GeneratorFamily::dirac(vec![0.5]);
        let m = fam.sample(3, 7).unwrap();
        assert_eq!(m.len(), 3);
        for (p, w) in m.iter() {
            assert_eq!(p, &[0.5]);
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_interval_mean() {
        // U([0, 2]) has mean 1 and variance 1/3; 3σ of the sample mean.
        let n = 100_000;
        let fam = GeneratorFamily::uniform_interval(2.0);
        let m = fam.sample(n, 13).unwrap();
        let mean = m.mean()[0];
        let sigma = (1.0 / 3.0f64 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn uniform_interval_rejects_nonpositive_theta() {
        let fam = GeneratorFamily::uniform_interval(-1.0);
        assert!(matches!(fam.sample(5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn affine_pushforward_mean() {
        // x = 2 z + 1, z ∼ U([0,1]): mean 2, variance 4/12 = 1/3.
        let n = 100_000;
        let fam = GeneratorFamily::affine(vec![vec![2.0]], vec![1.0], LatentSpec::Unit { dim: 1 });
        let m = fam.sample(n, 99).unwrap();
        let mean = m.mean()[0];
        let sigma = (1.0 / 3.0f64 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let fam = GeneratorFamily::affine(
            vec![vec![1.0, -0.5], vec![0.25, 2.0]],
            vec![0.0, 1.0],
            LatentSpec::Symmetric { dim: 2 },
        );
        let a = fam.sample(64, 42).unwrap();
        let b = fam.sample(64, 42).unwrap();
        assert_eq!(a, b);
        let c = fam.sample(64, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stretch_zero_alpha_limit_returns_q_points() {
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let q = EmpiricalMeasure::dirac(vec![1.0]);
        let spec = StretchSpec::new(1e-12).unwrap();
        let m = stretch_sample(&p, &q, spec, 100, 3).unwrap();
        for (pt, _) in m.iter() {
            assert!((pt[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stretch_points_stay_in_segment() {
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let q = EmpiricalMeasure::dirac(vec![1.0]);
        let spec = StretchSpec::new(0.5).unwrap();
        let m = stretch_sample(&p, &q, spec, 1000, 5).unwrap();
        for (pt, _) in m.iter() {
            assert!(pt[0] >= 0.5 && pt[0] <= 1.0, "point {}", pt[0]);
        }
    }

    #[test]
    fn stretch_mean_matches_closed_form() {
        // Output is 1 - α with α ∼ U([0, ε]); the exact integral gives
        // E[1 - α] = 1 - ε/2 = 0.75 for ε = 0.5, Var(1-α) = ε²/12.
        let n = 100_000;
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let q = EmpiricalMeasure::dirac(vec![1.0]);
        let spec = StretchSpec::new(0.5).unwrap();
        let m = stretch_sample(&p, &q, spec, n, 11).unwrap();
        let mean = m.mean()[0];
        let sigma = (0.25 / 12.0f64 / n as f64).sqrt();
        assert!((mean - 0.75).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn stretch_dimension_mismatch_is_rejected() {
        let p = EmpiricalMeasure::dirac(vec![0.0, 0.0]);
        let q = EmpiricalMeasure::dirac(vec![1.0]);
        let spec = StretchSpec::default();
        assert!(matches!(
            stretch_sample(&p, &q, spec, 4, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pairwise_distance_values() {
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let q = EmpiricalMeasure::dirac(vec![0.0]);
        assert_eq!(pairwise_distances(&p, &q).unwrap(), vec![vec![0.0]]);

        let p = EmpiricalMeasure::dirac(vec![0.0, 0.0]);
        let q = EmpiricalMeasure::dirac(vec![3.0, 4.0]);
        assert_eq!(pairwise_distances(&p, &q).unwrap(), vec![vec![5.0]]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // explicit indices mirror the formula
    fn pairwise_distance_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..3).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect())
                .collect()
        };
        let p = EmpiricalMeasure::uniform(pts(4, &mut rng)).unwrap();
        let q = EmpiricalMeasure::uniform(pts(5, &mut rng)).unwrap();
        let d = pairwise_distances(&p, &q).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    let diff = p.point(i)[k] - q.point(j)[k];
                    s += diff * diff;
                }
                assert_eq!(d[i][j], s.sqrt());
            }
        }
        // Symmetry: distances(p, q) = distances(q, p)ᵀ.
        let dt = pairwise_distances(&q, &p).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(d[i][j], dt[j][i]);
            }
        }
    }

    #[test]
    fn measure_invariants_are_enforced() {
        assert!(EmpiricalMeasure::new(vec![vec![0.0]], vec![0.5]).is_err());
        assert!(EmpiricalMeasure::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        assert!(EmpiricalMeasure::new(vec![vec![f64::NAN]], vec![1.0]).is_err());
        assert!(EmpiricalMeasure::new(vec![vec![0.0]], vec![-1.0]).is_err());
    }

    #[test]
    fn measures_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<EmpiricalMeasure>();
        assert_send_sync::<GeneratorFamily>();
        assert_send_sync::<StretchSpec>();
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let raw = vec![0.0, 1.0, -1.0, 2.0, 0.5, 0.5];
        let sm = softmax_rows(&raw, 2, 3);
        for p in 0..2 {
            let s: f64 = sm[p * 3..(p + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
