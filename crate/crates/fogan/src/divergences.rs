//! Critic-based adversarial divergences between finite-support measures.
//!
//! A critic-based divergence evaluates a critic `f` through
//! `τ(P‖Q; f) = E_P[m₁(f)] - E_Q[m₂(f)] - penalties`, and the divergence is
//! the supremum over the critic class. Four instantiations are provided:
//!
//! | kind           | objective                          | penalty |
//! |----------------|------------------------------------|---------|
//! | `ClassicGan`   | `E_P[ln f] + E_Q[ln(1-f)]`         | none    |
//! | `WganGp`       | `E_P[f] - E_Q[f]`                  | `λ_gp · E[(‖∇f(interpolate)‖-1)²]` |
//! | `PenalizedW`   | `E_P[f] - E_Q[f]`                  | `λ · E[(f(x)-f(x'))²/‖x-x'‖]` |
//! | `FirstOrderPW` | `E_P[f] - E_Q[f]`                  | the `λ` term plus `μ · G(P,Q;f)` |
//!
//! `G` is the first-order gradient penalty: on the generated support it
//! compares `‖∇_x f(x')‖` with the field prescribed by the pairwise slopes,
//! `E_x̃[(x̃-x')(f(x̃)-f(x'))/‖x̃-x'‖³] / E_x̃[1/‖x̃-x'‖]`, and is zero exactly
//! when the critic's input gradient matches that field.
//!
//! Expectations over the finite supports are exact weighted double sums, not
//! Monte Carlo; only the WGAN-GP interpolate penalty has a sampled form
//! ([`wgan_gp_penalty`]) next to its deterministic quadrature inside
//! [`estimate`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad, Expr, Tape};
use crate::measures::{clamped_distances, euclidean, EmpiricalMeasure};
use crate::nets::Mlp;
use crate::quadrature::gauss_legendre;
use crate::{Error, Result, DIST_FLOOR, NORM_SMOOTH};

/// Number of Gauss-Legendre nodes used for the deterministic WGAN-GP
/// interpolate penalty inside [`estimate`].
const GP_QUADRATURE_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    ClassicGan,
    WganGp,
    PenalizedW,
    FirstOrderPW,
}

/// A critic-based divergence: the kind plus its penalty weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    /// Pair-penalty weight λ (PenalizedW, FirstOrderPW).
    pub lambda: f64,
    /// First-order penalty weight μ (FirstOrderPW).
    pub mu: f64,
    /// Interpolate-penalty weight of the WGAN-GP.
    pub gp_weight: f64,
}

impl DivergenceSpec {
    pub fn classic_gan() -> Self {
        DivergenceSpec {
            kind: DivergenceKind::ClassicGan,
            lambda: 0.0,
            mu: 0.0,
            gp_weight: 0.0,
        }
    }

    pub fn wgan_gp(gp_weight: f64) -> Self {
        DivergenceSpec {
            kind: DivergenceKind::WganGp,
            lambda: 0.0,
            mu: 0.0,
            gp_weight,
        }
    }

    pub fn penalized_w(lambda: f64) -> Self {
        DivergenceSpec {
            kind: DivergenceKind::PenalizedW,
            lambda,
            mu: 0.0,
            gp_weight: 0.0,
        }
    }

    pub fn first_order(lambda: f64, mu: f64) -> Self {
        DivergenceSpec {
            kind: DivergenceKind::FirstOrderPW,
            lambda,
            mu,
            gp_weight: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DivergenceKind::ClassicGan => Ok(()),
            DivergenceKind::WganGp => {
                if self.gp_weight < 0.0 {
                    Err(Error::Domain("gp_weight must be >= 0".into()))
                } else {
                    Ok(())
                }
            }
            DivergenceKind::PenalizedW => {
                if self.lambda > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain("PenalizedW requires lambda > 0".into()))
                }
            }
            DivergenceKind::FirstOrderPW => {
                if self.lambda > 0.0 && self.mu > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(
                        "FirstOrderPW requires lambda > 0 and mu > 0".into(),
                    ))
                }
            }
        }
    }
}

/// A plug-in divergence value split into its objective and penalty parts,
/// with `value = objective - lambda_penalty - mu_penalty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub objective: f64,
    /// The λ pair penalty; for `WganGp` this slot carries the weighted
    /// interpolate penalty.
    pub lambda_penalty: f64,
    pub mu_penalty: f64,
    /// Set when some pair distance hit the [`DIST_FLOOR`] clamp.
    pub clamped: bool,
}

impl DivergenceEstimate {
    pub fn penalty(&self) -> f64 {
        self.lambda_penalty + self.mu_penalty
    }
}

/// A critic evaluable pointwise, exposing its input gradient.
pub trait Critic {
    fn value(&self, x: &[f64]) -> f64;
    fn input_gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// A critic that can also be evaluated on tape expressions, for pathwise
/// generator updates through `g(θ, z)`.
pub trait ExprCritic {
    fn value_expr<'t>(&self, tape: &'t Tape, x: &[Expr<'t>]) -> Expr<'t>;

    /// Batch evaluation; implementations with parameters can bind them once.
    fn value_exprs<'t>(&self, tape: &'t Tape, points: &[Vec<Expr<'t>>]) -> Vec<Expr<'t>> {
        points.iter().map(|x| self.value_expr(tape, x)).collect()
    }
}

impl Critic for Mlp {
    fn value(&self, x: &[f64]) -> f64 {
        Mlp::value(self, x)
    }

    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        Mlp::input_gradient(self, x)
    }
}

impl ExprCritic for Mlp {
    fn value_expr<'t>(&self, tape: &'t Tape, x: &[Expr<'t>]) -> Expr<'t> {
        let params = tape.constants(self.params());
        self.forward_exprs(tape, x, &params)[0]
    }

    fn value_exprs<'t>(&self, tape: &'t Tape, points: &[Vec<Expr<'t>>]) -> Vec<Expr<'t>> {
        let params = tape.constants(self.params());
        points
            .iter()
            .map(|x| self.forward_exprs(tape, x, &params)[0])
            .collect()
    }
}

/// 1-D polynomial critic `f(x) = Σ cₖ xᵏ`, used by the closed-form fixtures.
#[derive(Debug, Clone)]
pub struct Poly1dCritic {
    pub coeffs: Vec<f64>,
}

impl Poly1dCritic {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly1dCritic { coeffs }
    }

    /// The first-order optimal critic of the Dirac-pair toy at θ₀ = 0.5:
    /// `f(x) = x(-4x² + 4x - 2)`.
    pub fn figure_first_order() -> Self {
        Poly1dCritic::new(vec![0.0, -2.0, 4.0, -4.0])
    }

    /// The plain optimal critic `f(x) = -2x²` of the same toy, which is not
    /// first order.
    pub fn figure_plain() -> Self {
        Poly1dCritic::new(vec![0.0, 0.0, -2.0])
    }
}

impl Critic for Poly1dCritic {
    fn value(&self, x: &[f64]) -> f64 {
        let t = x[0];
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let t = x[0];
        let mut d = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
            d += k as f64 * c * t.powi(k as i32 - 1);
        }
        vec![d]
    }
}

impl ExprCritic for Poly1dCritic {
    fn value_expr<'t>(&self, tape: &'t Tape, x: &[Expr<'t>]) -> Expr<'t> {
        let t = x[0];
        let mut acc = tape.constant(*self.coeffs.last().unwrap_or(&0.0));
        for &c in self.coeffs.iter().rev().skip(1) {
            acc = acc * t + c;
        }
        acc
    }
}

/// Affine critic `f(x) = w·x + b`.
#[derive(Debug, Clone)]
pub struct LinearCritic {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Critic for LinearCritic {
    fn value(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }

    fn input_gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.w.clone()
    }
}

impl ExprCritic for LinearCritic {
    fn value_expr<'t>(&self, tape: &'t Tape, x: &[Expr<'t>]) -> Expr<'t> {
        let mut acc = tape.constant(self.b);
        for (&w, &v) in self.w.iter().zip(x) {
            acc = acc + v * w;
        }
        acc
    }
}

/// `f + c`, for shift-invariance checks.
pub struct ShiftedCritic<'a, C: Critic + ?Sized> {
    pub inner: &'a C,
    pub shift: f64,
}

impl<C: Critic + ?Sized> Critic for ShiftedCritic<'_, C> {
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.shift
    }

    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner.input_gradient(x)
    }
}

/// Squashes any critic into `(0, 1)` through a logistic head, as the classic
/// GAN requires.
pub struct SigmoidCritic<C: Critic>(pub C);

impl<C: Critic> Critic for SigmoidCritic<C> {
    fn value(&self, x: &[f64]) -> f64 {
        let t = self.0.value(x);
        if t >= 0.0 {
            1.0 / (1.0 + (-t).exp())
        } else {
            let e = t.exp();
            e / (1.0 + e)
        }
    }

    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        let s = self.value(x);
        let mut g = self.0.input_gradient(x);
        for gi in &mut g {
            *gi *= s * (1.0 - s);
        }
        g
    }
}

fn check_dims(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    Ok(())
}

/// Plug-in estimator of `τ(P‖Q; f)` on finite supports: expectations become
/// weighted sums over the two supports, and the λ and μ penalties are exact
/// double sums over all pairs.
pub fn estimate(
    spec: &DivergenceSpec,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    critic: &dyn Critic,
) -> Result<DivergenceEstimate> {
    spec.validate()?;
    check_dims(p, q)?;

    let fp: Vec<f64> = p.points().iter().map(|x| critic.value(x)).collect();
    let fq: Vec<f64> = q.points().iter().map(|x| critic.value(x)).collect();

    match spec.kind {
        DivergenceKind::ClassicGan => {
            for &v in fp.iter().chain(&fq) {
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::Domain(format!(
                        "classic GAN critic output {v} outside (0, 1); use a sigmoid head"
                    )));
                }
            }
            let objective = p
                .weights()
                .iter()
                .zip(&fp)
                .map(|(w, f)| w * f.ln())
                .sum::<f64>()
                + q.weights()
                    .iter()
                    .zip(&fq)
                    .map(|(v, f)| v * (1.0 - f).ln())
                    .sum::<f64>();
            Ok(DivergenceEstimate {
                value: objective,
                objective,
                lambda_penalty: 0.0,
                mu_penalty: 0.0,
                clamped: false,
            })
        }
        DivergenceKind::WganGp => {
            let objective = mean_difference(p, &fp, q, &fq);
            let (nodes, weights) = gauss_legendre(GP_QUADRATURE_POINTS);
            let mut pen = 0.0;
            for (x, w) in p.iter() {
                for (xp, v) in q.iter() {
                    let mut pair = 0.0;
                    for (&t, &gw) in nodes.iter().zip(&weights) {
                        let alpha = 0.5 * (t + 1.0);
                        let z: Vec<f64> = x
                            .iter()
                            .zip(xp)
                            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                            .collect();
                        let gnorm = norm(&critic.input_gradient(&z));
                        pair += 0.5 * gw * (gnorm - 1.0) * (gnorm - 1.0);
                    }
                    pen += w * v * pair;
                }
            }
            let lambda_penalty = spec.gp_weight * pen;
            Ok(DivergenceEstimate {
                value: objective - lambda_penalty,
                objective,
                lambda_penalty,
                mu_penalty: 0.0,
                clamped: false,
            })
        }
        DivergenceKind::PenalizedW | DivergenceKind::FirstOrderPW => {
            let objective = mean_difference(p, &fp, q, &fq);
            let (dist, clamped) = clamped_distances(p, q)?;
            let mut pen = 0.0;
            for (i, (_, w)) in p.iter().enumerate() {
                for (j, (_, v)) in q.iter().enumerate() {
                    let d = fp[i] - fq[j];
                    pen += w * v * d * d / dist[i][j];
                }
            }
            let lambda_penalty = spec.lambda * pen;
            let mu_penalty = if spec.kind == DivergenceKind::FirstOrderPW {
                spec.mu * fogan_penalty_g_with(p, q, critic, &dist, &fp, &fq)
            } else {
                0.0
            };
            Ok(DivergenceEstimate {
                value: objective - lambda_penalty - mu_penalty,
                objective,
                lambda_penalty,
                mu_penalty,
                clamped,
            })
        }
    }
}

fn mean_difference(p: &EmpiricalMeasure, fp: &[f64], q: &EmpiricalMeasure, fq: &[f64]) -> f64 {
    let ep: f64 = p.weights().iter().zip(fp).map(|(w, f)| w * f).sum();
    let eq: f64 = q.weights().iter().zip(fq).map(|(v, f)| v * f).sum();
    ep - eq
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// The first-order gradient penalty functional
/// `G(P,Q;f) = E_{x'∼Q}[(‖∇_x f(x')‖ - ‖E_x̃[(x̃-x')(f(x̃)-f(x'))/‖x̃-x'‖³]‖ / E_x̃[1/‖x̃-x'‖])²]`.
///
/// `G ≥ 0`, and `G = 0` exactly when the critic's input gradient on `supp(Q)`
/// equals the prescribed field.
pub fn fogan_penalty_g(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    critic: &dyn Critic,
) -> Result<f64> {
    check_dims(p, q)?;
    let (dist, _) = clamped_distances(p, q)?;
    let fp: Vec<f64> = p.points().iter().map(|x| critic.value(x)).collect();
    let fq: Vec<f64> = q.points().iter().map(|x| critic.value(x)).collect();
    Ok(fogan_penalty_g_with(p, q, critic, &dist, &fp, &fq))
}

/// The prescribed gradient field at one generated point:
/// `E_x̃[(x̃-x')(f(x̃)-f(x'))/‖x̃-x'‖³] / E_x̃[1/‖x̃-x'‖]`,
/// with `dist_col[i] = ‖pᵢ - x'‖` already clamped.
pub(crate) fn prescribed_field(
    p: &EmpiricalMeasure,
    x_prime: &[f64],
    f_prime: f64,
    fp: &[f64],
    dist_col: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let dim = p.dim();
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for (i, (x, w)) in p.iter().enumerate() {
        let d = dist_col(i);
        let scale = w * (fp[i] - f_prime) / (d * d * d);
        for (nc, (&xc, &xpc)) in num.iter_mut().zip(x.iter().zip(x_prime)) {
            *nc += scale * (xc - xpc);
        }
        den += w / d;
    }
    for nc in &mut num {
        *nc /= den;
    }
    num
}

fn fogan_penalty_g_with(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    critic: &dyn Critic,
    dist: &[Vec<f64>],
    fp: &[f64],
    fq: &[f64],
) -> f64 {
    let mut total = 0.0;
    for (j, (xp, v)) in q.iter().enumerate() {
        let field = prescribed_field(p, xp, fq[j], fp, |i| dist[i][j]);
        let gnorm = norm(&critic.input_gradient(xp));
        let dev = gnorm - norm(&field);
        total += v * dev * dev;
    }
    total
}

/// Monte Carlo WGAN-GP interpolate penalty: the mean over `count` triples
/// `(x ∼ p, x' ∼ q, α ∼ U([0,1]))` of `(‖∇f(αx + (1-α)x')‖ - 1)²`.
pub fn wgan_gp_penalty(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    critic: &dyn Critic,
    count: usize,
    seed: u64,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::Usage("count must be >= 1".into()));
    }
    check_dims(p, q)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..count {
        let x = p.point(p.sample_index(&mut rng));
        let xp = q.point(q.sample_index(&mut rng));
        let alpha: f64 = rng.gen();
        let z: Vec<f64> = x
            .iter()
            .zip(xp)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        let gnorm = norm(&critic.input_gradient(&z));
        total += (gnorm - 1.0) * (gnorm - 1.0);
    }
    Ok(total / count as f64)
}

/// Exact 1-D Wasserstein-1 distance between two weighted samples via the
/// quantile coupling: `∫ |F_p(t) - F_q(t)| dt` over the merged support.
pub fn wasserstein_1d_exact(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::Shape(format!(
            "exact W1 supports dimension 1 only, got {} and {}",
            p.dim(),
            q.dim()
        )));
    }
    // Merge the two supports as signed CDF jumps.
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(p.len() + q.len());
    for (x, w) in p.iter() {
        events.push((x[0], w));
    }
    for (x, v) in q.iter() {
        events.push((x[0], -v));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut total = 0.0;
    let mut cdf_gap: f64 = 0.0;
    let mut prev = events[0].0;
    for (t, jump) in events {
        total += cdf_gap.abs() * (t - prev);
        cdf_gap += jump;
        prev = t;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Tape-expression builders shared by critic training and pathwise generator
// updates. Generated points may be data (constants) or expressions of θ.
// ---------------------------------------------------------------------------

/// Divergence value split into parts, as tape expressions.
pub struct DivergenceParts<'t> {
    pub value: Expr<'t>,
    pub objective: Expr<'t>,
    pub lambda_penalty: Expr<'t>,
    pub mu_penalty: Expr<'t>,
}

fn point_values(xs: &[Expr<'_>]) -> Vec<f64> {
    xs.iter().map(|e| e.value()).collect()
}

/// Smoothed distance `sqrt(‖a - b‖² + δ²)` as an expression.
fn smooth_dist_expr<'t>(tape: &'t Tape, a: &[f64], b: &[Expr<'t>]) -> Expr<'t> {
    let mut acc = tape.constant(NORM_SMOOTH * NORM_SMOOTH);
    for (&ac, &bc) in a.iter().zip(b) {
        let d = bc - ac;
        acc = acc + d * d;
    }
    acc.sqrt()
}

/// Smoothed Euclidean norm of expression coordinates.
fn smooth_norm_expr<'t>(tape: &'t Tape, v: &[Expr<'t>]) -> Expr<'t> {
    let mut acc = tape.constant(NORM_SMOOTH * NORM_SMOOTH);
    for &c in v {
        acc = acc + c * c;
    }
    acc.sqrt()
}

/// Builds `τ(P‖Q̂; f)` with `Q̂` given by expression points. `fp` and `fq` are
/// the critic's value expressions at the data points and at `q_points`; the
/// caller owns how the critic (and its parameters) appear on the tape, and
/// the first-order penalty takes the critic's input gradient by
/// differentiating `fq[j]` with respect to the point expressions.
///
/// `q_is_data` says the generated points are fixed samples rather than
/// functions of generator parameters: pair distances are then plain clamped
/// floats instead of smoothed-norm expressions. Data points a first-order
/// penalty differentiates at must be registered with [`Tape::var`], not as
/// constants, or the elision peepholes may sever the gradient path.
///
/// For the classic GAN the values must already lie in `(0, 1)`.
#[allow(clippy::too_many_arguments)]
pub fn divergence_parts_expr<'t>(
    tape: &'t Tape,
    spec: &DivergenceSpec,
    p: &EmpiricalMeasure,
    q_points: &[Vec<Expr<'t>>],
    q_weights: &[f64],
    q_is_data: bool,
    fp: &[Expr<'t>],
    fq: &[Expr<'t>],
) -> DivergenceParts<'t> {
    assert_eq!(q_points.len(), q_weights.len());
    assert_eq!(fp.len(), p.len());
    assert_eq!(fq.len(), q_points.len());
    let zero = tape.constant(0.0);

    if spec.kind == DivergenceKind::ClassicGan {
        let mut obj = zero;
        for ((_, w), f) in p.iter().zip(fp) {
            obj = obj + f.ln() * w;
        }
        for (&v, f) in q_weights.iter().zip(fq) {
            obj = obj + (1.0 - *f).ln() * v;
        }
        return DivergenceParts {
            value: obj,
            objective: obj,
            lambda_penalty: zero,
            mu_penalty: zero,
        };
    }

    // Objective E_P[f] - E_Q[f].
    let mut obj = zero;
    for ((_, w), f) in p.iter().zip(fp) {
        obj = obj + *f * w;
    }
    for (&v, f) in q_weights.iter().zip(fq) {
        obj = obj - *f * v;
    }

    let mut lambda_penalty = zero;
    let mut mu_penalty = zero;

    if matches!(
        spec.kind,
        DivergenceKind::PenalizedW | DivergenceKind::FirstOrderPW
    ) {
        let mut pair_sum = zero;
        for (i, (x, w)) in p.iter().enumerate() {
            for (j, &v) in q_weights.iter().enumerate() {
                let diff = fp[i] - fq[j];
                let sq = diff * diff;
                let term = if q_is_data {
                    let d = euclidean(x, &point_values(&q_points[j])).max(DIST_FLOOR);
                    sq * (w * v / d)
                } else {
                    sq * (w * v) / smooth_dist_expr(tape, x, &q_points[j])
                };
                pair_sum = pair_sum + term;
            }
        }
        lambda_penalty = pair_sum * spec.lambda;
    }

    if spec.kind == DivergenceKind::FirstOrderPW {
        let mut g_sum = zero;
        for (j, (xp, &v)) in q_points.iter().zip(q_weights).enumerate() {
            // ∇_x f at the generated point, differentiable in everything.
            let gx = grad(fq[j], xp);
            let gnorm = smooth_norm_expr(tape, gx.exprs());

            // Prescribed field: E_x̃[(x̃-x')(f(x̃)-f(x'))/d³] / E_x̃[1/d].
            let dim = p.dim();
            let field = if q_is_data {
                // Fixed sample: distances and direction vectors are scalars.
                let point = point_values(xp);
                let mut num: Vec<Expr<'t>> = vec![zero; dim];
                let mut den = 0.0;
                for (i, (x, w)) in p.iter().enumerate() {
                    let d = euclidean(x, &point).max(DIST_FLOOR);
                    let diff = fp[i] - fq[j];
                    let scale = w / (d * d * d);
                    for (c, (&xc, &qc)) in num.iter_mut().zip(x.iter().zip(&point)) {
                        *c = *c + diff * (scale * (xc - qc));
                    }
                    den += w / d;
                }
                let inv_den = 1.0 / den;
                num.iter().map(|&c| c * inv_den).collect::<Vec<_>>()
            } else {
                let mut num: Vec<Expr<'t>> = vec![zero; dim];
                let mut den = zero;
                for (i, (x, w)) in p.iter().enumerate() {
                    let d = smooth_dist_expr(tape, x, xp);
                    let inv = d.recip();
                    let inv3 = inv * inv * inv;
                    let diff = fp[i] - fq[j];
                    let scale = diff * inv3 * w;
                    for (c, (&xc, &qc)) in num.iter_mut().zip(x.iter().zip(xp)) {
                        *c = *c + scale * (tape.constant(xc) - qc);
                    }
                    den = den + inv * w;
                }
                let inv_den = den.recip();
                num.iter().map(|&c| c * inv_den).collect::<Vec<_>>()
            };
            let field_norm = smooth_norm_expr(tape, &field);
            let dev = gnorm - field_norm;
            g_sum = g_sum + dev * dev * v;
        }
        mu_penalty = g_sum * spec.mu;
    }

    let value = obj - lambda_penalty - mu_penalty;
    DivergenceParts {
        value,
        objective: obj,
        lambda_penalty,
        mu_penalty,
    }
}

/// WGAN-GP loss parts: the objective plus the interpolate penalty over the
/// supplied `(p index, α)` pairs, one per generated point. `critic` is only
/// invoked at the interpolates; values at the supports come in as `fp`/`fq`.
#[allow(clippy::too_many_arguments)]
pub fn wgan_gp_parts_expr<'t>(
    tape: &'t Tape,
    p: &EmpiricalMeasure,
    q_points: &[Vec<Expr<'t>>],
    q_weights: &[f64],
    fp: &[Expr<'t>],
    fq: &[Expr<'t>],
    pairs: &[(usize, f64)],
    gp_weight: f64,
    critic: &dyn Fn(&[Expr<'t>]) -> Expr<'t>,
) -> DivergenceParts<'t> {
    assert_eq!(q_points.len(), pairs.len());
    let zero = tape.constant(0.0);

    let mut obj = zero;
    for ((_, w), f) in p.iter().zip(fp) {
        obj = obj + *f * w;
    }
    for (&v, f) in q_weights.iter().zip(fq) {
        obj = obj - *f * v;
    }

    let mut pen = zero;
    for (k, (xp, &(pi, alpha))) in q_points.iter().zip(pairs).enumerate() {
        let x = p.point(pi);
        let z: Vec<Expr<'t>> = x
            .iter()
            .zip(xp)
            .map(|(&a, &b)| b * (1.0 - alpha) + alpha * a)
            .collect();
        let fz = critic(&z);
        let gz = grad(fz, &z);
        let gnorm = smooth_norm_expr(tape, gz.exprs());
        let dev = gnorm - 1.0;
        pen = pen + dev * dev * q_weights[k];
    }
    let lambda_penalty = pen * gp_weight;
    DivergenceParts {
        value: obj - lambda_penalty,
        objective: obj,
        lambda_penalty,
        mu_penalty: zero,
    }
}
