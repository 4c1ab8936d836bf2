//! Optimal critics of the penalized Wasserstein divergence on finite supports.
//!
//! On finite supports the optimal critic is characterized by two slope
//! conditions: for every generated point the expected difference quotient
//! against the data equals `1/(2λ)`, and symmetrically for every data point.
//! The solver iterates the value-update map `T` composed with the projection
//! `S` (which rescales the critic so its mean difference quotient is exactly
//! `1/(2λ)`); the composition is a sup-norm contraction on disjoint compact
//! supports, so the iteration converges geometrically to the unique centered
//! fixed point.
//!
//! [`extend_critic_c1`] turns the solved table into a function object defined
//! off the support by evaluating the `T` formula itself at the query point.
//! That extension is C¹ away from the data support, reproduces the tabular
//! values, and its input gradient on the generated support equals the
//! prescribed field, so the first-order penalty `G` vanishes on it.

use crate::divergences::Critic;
use crate::measures::{clamped_distances, euclidean, EmpiricalMeasure};
use crate::{Error, Result, DIST_FLOOR};

/// Critic values on the concatenated support `supp(P) ++ supp(Q)`.
///
/// The canonical representative of each critic (all are equivalent up to a
/// constant) is centered so that `E_{x∼P, x'∼Q}[f(x')/‖x-x'‖] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularCritic {
    support: Vec<Vec<f64>>,
    values: Vec<f64>,
    n_p: usize,
}

impl TabularCritic {
    pub fn from_measures(
        p: &EmpiricalMeasure,
        q: &EmpiricalMeasure,
        values: Vec<f64>,
    ) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(Error::Shape(format!(
                "dimension mismatch {} vs {}",
                p.dim(),
                q.dim()
            )));
        }
        if values.len() != p.len() + q.len() {
            return Err(Error::Shape(format!(
                "{} values for {} support points",
                values.len(),
                p.len() + q.len()
            )));
        }
        let mut support = Vec::with_capacity(p.len() + q.len());
        support.extend(p.points().iter().cloned());
        support.extend(q.points().iter().cloned());
        Ok(TabularCritic {
            support,
            values,
            n_p: p.len(),
        })
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_q(&self) -> usize {
        self.support.len() - self.n_p
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p_values(&self) -> &[f64] {
        &self.values[..self.n_p]
    }

    pub fn q_values(&self) -> &[f64] {
        &self.values[self.n_p..]
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        TabularCritic {
            support: self.support.clone(),
            values,
            n_p: self.n_p,
        }
    }

    /// `E_{x∼P, x'∼Q}[f(x')/‖x-x'‖]`, the class normalization.
    pub fn normalization(&self, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<f64> {
        let (dist, _) = clamped_distances(p, q)?;
        let mut acc = 0.0;
        for (i, (_, w)) in p.iter().enumerate() {
            for (j, (_, v)) in q.iter().enumerate() {
                acc += w * v * self.q_values()[j] / dist[i][j];
            }
        }
        Ok(acc)
    }

    /// Shifts all values by the constant that zeroes the normalization.
    /// Divergence values and slope residuals are shift invariant, so this
    /// only picks the canonical representative.
    pub fn centered(&self, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<Self> {
        let (dist, _) = clamped_distances(p, q)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, (_, w)) in p.iter().enumerate() {
            for (j, (_, v)) in q.iter().enumerate() {
                num += w * v * self.q_values()[j] / dist[i][j];
                den += w * v / dist[i][j];
            }
        }
        let shift = num / den;
        Ok(self.with_values(self.values.iter().map(|v| v - shift).collect()))
    }
}

/// Convergence record of one fixed-point run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub final_delta: f64,
    /// Max deviation of the slope condition evaluated on `supp(P)`.
    pub slope_residual_p: f64,
    /// Max deviation of the slope condition evaluated on `supp(Q)`.
    pub slope_residual_q: f64,
    /// Geometric decay rate estimated from the delta sequence.
    pub contraction_rate: Option<f64>,
    pub converged: bool,
}

/// One application of the value-update map:
/// on `supp(P)`: `T(f)(x) = (E_{x'∼Q}[f(x')/‖x-x'‖] + 1/(2λ)) / E_{x'∼Q}[1/‖x-x'‖]`,
/// on `supp(Q)` the mirrored formula over `P` with `-1/(2λ)`.
#[allow(clippy::needless_range_loop)] // index pairs with the distance matrix
pub fn apply_t(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<TabularCritic> {
    check_instance(critic, p, q, lambda)?;
    let (dist, _) = clamped_distances(p, q)?;
    let half = 0.5 / lambda;
    let mut values = vec![0.0; critic.values.len()];

    for i in 0..p.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, (_, v)) in q.iter().enumerate() {
            num += v * critic.q_values()[j] / dist[i][j];
            den += v / dist[i][j];
        }
        if den == 0.0 || !den.is_finite() {
            return Err(Error::Numeric("zero denominator in T".into()));
        }
        values[i] = (num + half) / den;
    }
    for j in 0..q.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, (_, w)) in p.iter().enumerate() {
            num += w * critic.p_values()[i] / dist[i][j];
            den += w / dist[i][j];
        }
        if den == 0.0 || !den.is_finite() {
            return Err(Error::Numeric("zero denominator in T".into()));
        }
        values[critic.n_p + j] = (num - half) / den;
    }
    Ok(critic.with_values(values))
}

/// Mean difference quotient `E_{x̃∼P, x'∼Q}[(f(x̃)-f(x'))/‖x̃-x'‖]`.
pub fn mean_difference_quotient(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
) -> Result<f64> {
    let (dist, _) = clamped_distances(p, q)?;
    let mut acc = 0.0;
    for (i, (_, w)) in p.iter().enumerate() {
        for (j, (_, v)) in q.iter().enumerate() {
            acc += w * v * (critic.p_values()[i] - critic.q_values()[j]) / dist[i][j];
        }
    }
    Ok(acc)
}

/// The projection `S(f) = f / (2λ · E[(f(x̃)-f(x'))/‖x̃-x'‖])`, which rescales
/// the critic so its mean difference quotient equals `1/(2λ)`.
pub fn apply_s(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<TabularCritic> {
    check_instance(critic, p, q, lambda)?;
    let norm = mean_difference_quotient(critic, p, q)?;
    let scale = 2.0 * lambda * norm;
    if !scale.is_finite() || scale.abs() < 1e-300 {
        return Err(Error::DegenerateCritic(format!(
            "mean difference quotient {norm} cannot be projected"
        )));
    }
    Ok(critic.with_values(critic.values.iter().map(|v| v / scale).collect()))
}

/// Max deviations of the two slope conditions from `1/(2λ)`:
/// the first entry over `supp(P)` (expectation over `Q`), the second over
/// `supp(Q)` (expectation over `P`).
#[allow(clippy::needless_range_loop)] // index pairs with the distance matrix
pub fn slope_residuals(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<(f64, f64)> {
    let (dist, _) = clamped_distances(p, q)?;
    let half = 0.5 / lambda;
    let mut rp = 0.0f64;
    for i in 0..p.len() {
        let mut slope = 0.0;
        for (j, (_, v)) in q.iter().enumerate() {
            slope += v * (critic.p_values()[i] - critic.q_values()[j]) / dist[i][j];
        }
        rp = rp.max((slope - half).abs());
    }
    let mut rq = 0.0f64;
    for j in 0..q.len() {
        let mut slope = 0.0;
        for (i, (_, w)) in p.iter().enumerate() {
            slope += w * (critic.p_values()[i] - critic.q_values()[j]) / dist[i][j];
        }
        rq = rq.max((slope - half).abs());
    }
    Ok((rp, rq))
}

/// Plug-in `τ_P(P‖Q; f)` of a tabular critic.
pub fn tau_p_value(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<f64> {
    let (dist, _) = clamped_distances(p, q)?;
    let mut obj = 0.0;
    for (i, (_, w)) in p.iter().enumerate() {
        obj += w * critic.p_values()[i];
    }
    for (j, (_, v)) in q.iter().enumerate() {
        obj -= v * critic.q_values()[j];
    }
    let mut pen = 0.0;
    for (i, (_, w)) in p.iter().enumerate() {
        for (j, (_, v)) in q.iter().enumerate() {
            let d = critic.p_values()[i] - critic.q_values()[j];
            pen += w * v * d * d / dist[i][j];
        }
    }
    Ok(obj - lambda * pen)
}

fn check_instance(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<()> {
    if lambda <= 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if critic.n_p != p.len() || critic.n_q() != q.len() {
        return Err(Error::Shape(format!(
            "critic holds {}+{} values, measures have {}+{} points",
            critic.n_p,
            critic.n_q(),
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Runs the fixed-point iteration `f ← T(S(f))` from a deterministic seed
/// until the sup-norm change of one sweep is at most `tolerance`.
///
/// The returned critic is centered, and its slope residuals are reported.
/// Exceeding `max_iters` is an error, not a silent partial result.
pub fn solve_optimal_critic(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<(TabularCritic, FixedPointReport)> {
    if tolerance <= 0.0 {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    if lambda <= 0.0 {
        return Err(Error::Domain(format!(
            "lambda must be positive, got {lambda}"
        )));
    }

    let mut critic = seed_critic(p, q)?;
    critic = apply_s(&critic, p, q, lambda)?;

    let mut deltas: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let projected = apply_s(&critic, p, q, lambda)?;
        let next = apply_t(&projected, p, q, lambda)?;
        let delta = next
            .values
            .iter()
            .zip(&critic.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        deltas.push(delta);
        critic = next;
        if delta <= tolerance {
            converged = true;
            break;
        }
    }
    let final_delta = deltas.last().copied().unwrap_or(f64::INFINITY);
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            final_delta,
        });
    }

    let critic = critic.centered(p, q)?;
    let (rp, rq) = slope_residuals(&critic, p, q, lambda)?;
    let report = FixedPointReport {
        iterations,
        final_delta,
        slope_residual_p: rp,
        slope_residual_q: rq,
        contraction_rate: estimate_rate(&deltas),
        converged,
    };
    Ok((critic, report))
}

/// Geometric decay estimate from the middle of the delta sequence.
fn estimate_rate(deltas: &[f64]) -> Option<f64> {
    if deltas.len() < 4 {
        return None;
    }
    let a = deltas.len() / 4;
    let b = 3 * deltas.len() / 4;
    if deltas[a] <= 0.0 || deltas[b] <= 0.0 || b <= a {
        return None;
    }
    Some((deltas[b] / deltas[a]).powf(1.0 / (b - a) as f64))
}

/// Seed: first coordinate of each support point, then `S`. Falls back to an
/// index ramp when the first coordinate is constant across the support (the
/// projection is undefined on constants).
fn seed_critic(p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<TabularCritic> {
    let coord: Vec<f64> = p
        .points()
        .iter()
        .chain(q.points().iter())
        .map(|x| x[0])
        .collect();
    let critic = TabularCritic::from_measures(p, q, coord)?;
    let quotient = mean_difference_quotient(&critic, p, q)?;
    if quotient.abs() > 1e-12 {
        return Ok(critic);
    }
    let ramp: Vec<f64> = (0..p.len() + q.len()).map(|i| i as f64).collect();
    TabularCritic::from_measures(p, q, ramp)
}

/// A solved critic extended to a C¹ function off the support.
///
/// On the generated support it returns the tabular values with the prescribed
/// gradients; anywhere else it evaluates the `T` formula
/// `(E_{x̃∼P}[f(x̃)/‖x̃-y‖] - 1/(2λ)) / E_{x̃∼P}[1/‖x̃-y‖]` and its analytic
/// gradient, which reproduce both on `supp(Q)`.
#[derive(Debug, Clone)]
pub struct ExtendedCritic {
    p: EmpiricalMeasure,
    p_values: Vec<f64>,
    q_support: Vec<Vec<f64>>,
    q_values: Vec<f64>,
    q_grads: Vec<Vec<f64>>,
    half_over_lambda: f64,
}

/// Builds the C¹ extension of a solved tabular critic.
pub fn extend_critic_c1(
    critic: &TabularCritic,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<ExtendedCritic> {
    check_instance(critic, p, q, lambda)?;
    let (dist, _) = clamped_distances(p, q)?;
    let q_grads: Vec<Vec<f64>> = q
        .points()
        .iter()
        .enumerate()
        .map(|(j, xp)| {
            crate::divergences::prescribed_field(
                p,
                xp,
                critic.q_values()[j],
                critic.p_values(),
                |i| dist[i][j],
            )
        })
        .collect();
    Ok(ExtendedCritic {
        p: p.clone(),
        p_values: critic.p_values().to_vec(),
        q_support: q.points().to_vec(),
        q_values: critic.q_values().to_vec(),
        q_grads,
        half_over_lambda: 0.5 / lambda,
    })
}

impl ExtendedCritic {
    /// Prescribed input gradients at the generated support points.
    pub fn q_gradients(&self) -> &[Vec<f64>] {
        &self.q_grads
    }

    fn exact_q_hit(&self, x: &[f64]) -> Option<usize> {
        self.q_support.iter().position(|s| s.as_slice() == x)
    }

    fn exact_p_hit(&self, x: &[f64]) -> Option<usize> {
        self.p.points().iter().position(|s| s.as_slice() == x)
    }

    /// `(A(y), B(y), ∇A, ∇B)` of the T formula at a query point, or an error
    /// when the query sits on a clamped-distance singularity.
    fn t_terms(&self, y: &[f64]) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
        let dim = self.p.dim();
        let mut a = 0.0;
        let mut b = 0.0;
        let mut da = vec![0.0; dim];
        let mut db = vec![0.0; dim];
        for (i, (x, w)) in self.p.iter().enumerate() {
            let d = euclidean(x, y);
            if d < DIST_FLOOR {
                return Err(Error::Numeric(format!(
                    "query point sits on a clamped-distance singularity of the data support \
                     (distance {d:.3e})"
                )));
            }
            let f = self.p_values[i];
            a += w * f / d;
            b += w / d;
            let d3 = d * d * d;
            for k in 0..dim {
                let dir = x[k] - y[k];
                da[k] += w * f * dir / d3;
                db[k] += w * dir / d3;
            }
        }
        Ok((a, b, da, db))
    }

    /// Extension value at any query point.
    pub fn try_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(j) = self.exact_q_hit(x) {
            return Ok(self.q_values[j]);
        }
        if let Some(i) = self.exact_p_hit(x) {
            return Ok(self.p_values[i]);
        }
        let (a, b, _, _) = self.t_terms(x)?;
        Ok((a - self.half_over_lambda) / b)
    }

    /// Extension value and gradient. Exact generated-support hits return the
    /// prescribed gradient; queries on the data support have no gradient.
    pub fn try_value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if let Some(j) = self.exact_q_hit(x) {
            return Ok((self.q_values[j], self.q_grads[j].clone()));
        }
        if self.exact_p_hit(x).is_some() {
            return Err(Error::Numeric(
                "extension gradient is undefined on the data support".into(),
            ));
        }
        let (a, b, da, db) = self.t_terms(x)?;
        let value = (a - self.half_over_lambda) / b;
        let grad = da
            .iter()
            .zip(&db)
            .map(|(dak, dbk)| (dak - value * dbk) / b)
            .collect();
        Ok((value, grad))
    }
}

impl Critic for ExtendedCritic {
    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x)
            .expect("extended critic evaluated on a singularity")
    }

    fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.try_value_and_grad(x)
            .expect("extended critic gradient on the data support")
            .1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dirac_pair() -> (EmpiricalMeasure, EmpiricalMeasure) {
        (
            EmpiricalMeasure::dirac(vec![0.0]),
            EmpiricalMeasure::dirac(vec![1.0]),
        )
    }

    fn random_instance(
        np: usize,
        nq: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> (EmpiricalMeasure, EmpiricalMeasure) {
        let sample = |n: usize, offset: f64, rng: &mut ChaCha8Rng| {
            EmpiricalMeasure::uniform(
                (0..n)
                    .map(|_| (0..dim).map(|_| offset + rng.gen::<f64>()).collect())
                    .collect(),
            )
            .unwrap()
        };
        (sample(np, 0.0, rng), sample(nq, 2.0, rng))
    }

    #[test]
    fn t_on_dirac_pair_from_zero() {
        let (p, q) = dirac_pair();
        let f0 = TabularCritic::from_measures(&p, &q, vec![0.0, 0.0]).unwrap();
        let t = apply_t(&f0, &p, &q, 1.0).unwrap();
        assert!((t.p_values()[0] - 0.5).abs() < 1e-15);
        assert!((t.q_values()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // explicit indices mirror the formula
    fn t_matches_double_loop_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, q) = random_instance(3, 2, 2, &mut rng);
        let values: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let critic = TabularCritic::from_measures(&p, &q, values.clone()).unwrap();
        let lambda = 0.5;
        let t = apply_t(&critic, &p, &q, lambda).unwrap();

        // Independent recomputation.
        for i in 0..3 {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..2 {
                let d = euclidean(p.point(i), q.point(j)).max(DIST_FLOOR);
                num += q.weight(j) * values[3 + j] / d;
                den += q.weight(j) / d;
            }
            let want = (num + 0.5 / lambda) / den;
            assert!((t.p_values()[i] - want).abs() < 1e-12);
        }
        for j in 0..2 {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..3 {
                let d = euclidean(p.point(i), q.point(j)).max(DIST_FLOOR);
                num += p.weight(i) * values[i] / d;
                den += p.weight(i) / d;
            }
            let want = (num - 0.5 / lambda) / den;
            assert!((t.q_values()[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_is_t_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (p, q) = random_instance(4, 3, 2, &mut rng);
        let (critic, report) = solve_optimal_critic(&p, &q, 1.0, 1e-13, 10_000).unwrap();
        assert!(report.converged);
        let again = apply_t(&critic, &p, &q, 1.0).unwrap();
        for (a, b) in again.values().iter().zip(critic.values()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn s_is_a_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, q) = random_instance(3, 3, 1, &mut rng);
        let values: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let critic = TabularCritic::from_measures(&p, &q, values).unwrap();
        let lambda = 0.8;
        let s1 = apply_s(&critic, &p, &q, lambda).unwrap();
        let s2 = apply_s(&s1, &p, &q, lambda).unwrap();
        for (a, b) in s1.values().iter().zip(s2.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // After S the mean difference quotient is exactly 1/(2λ).
        let n = mean_difference_quotient(&s1, &p, &q).unwrap();
        assert!((n - 0.5 / lambda).abs() < 1e-12);
    }

    #[test]
    fn s_fixed_point_when_already_normalized() {
        let (p, q) = dirac_pair();
        // Mean difference quotient (f(0)-f(1))/1 = 0.5 = 1/(2λ) at λ = 1.
        let critic = TabularCritic::from_measures(&p, &q, vec![0.5, 0.0]).unwrap();
        let s = apply_s(&critic, &p, &q, 1.0).unwrap();
        assert_eq!(s.values(), critic.values());
    }

    #[test]
    fn s_rejects_constant_critic() {
        let (p, q) = dirac_pair();
        let constant = TabularCritic::from_measures(&p, &q, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            apply_s(&constant, &p, &q, 1.0),
            Err(Error::DegenerateCritic(_))
        ));
    }

    #[test]
    fn dirac_pair_closed_form() {
        let (p, q) = dirac_pair();
        let (critic, report) = solve_optimal_critic(&p, &q, 1.0, 1e-12, 10_000).unwrap();
        // f(0) - f(1) = 1/2 and the centered representative has f(1) = 0.
        assert!((critic.p_values()[0] - critic.q_values()[0] - 0.5).abs() < 1e-10);
        assert!(critic.q_values()[0].abs() < 1e-10);
        let tau = tau_p_value(&critic, &p, &q, 1.0).unwrap();
        assert!((tau - 0.25).abs() < 1e-10);
        assert!(report.slope_residual_p < 1e-10 && report.slope_residual_q < 1e-10);
    }

    #[test]
    fn general_dirac_pair_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let a = rng.gen::<f64>() * 4.0 - 2.0;
            let b = a + 0.3 + rng.gen::<f64>() * 3.0;
            let lambda = 0.25 + rng.gen::<f64>() * 2.0;
            let p = EmpiricalMeasure::dirac(vec![a]);
            let q = EmpiricalMeasure::dirac(vec![b]);
            let (critic, _) = solve_optimal_critic(&p, &q, lambda, 1e-13, 10_000).unwrap();
            let want = (a - b).abs() / (2.0 * lambda);
            let got = critic.p_values()[0] - critic.q_values()[0];
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn slope_residuals_examples() {
        let (p, q) = dirac_pair();
        let zero = TabularCritic::from_measures(&p, &q, vec![0.0, 0.0]).unwrap();
        let (rp, rq) = slope_residuals(&zero, &p, &q, 1.0).unwrap();
        assert!((rp - 0.5).abs() < 1e-15);
        assert!((rq - 0.5).abs() < 1e-15);

        // Doubling the optimal critic shifts both conditions by exactly
        // １/(2λ) on a Dirac pair.
        let (opt, _) = solve_optimal_critic(&p, &q, 1.0, 1e-13, 10_000).unwrap();
        let doubled = opt.with_values(opt.values().iter().map(|v| 2.0 * v).collect());
        let (rp, rq) = slope_residuals(&doubled, &p, &q, 1.0).unwrap();
        assert!((rp - 0.5).abs() < 1e-10);
        assert!((rq - 0.5).abs() < 1e-10);
    }

    #[test]
    fn deltas_shrink_and_solver_reports_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (p, q) = random_instance(6, 5, 3, &mut rng);
        let (_, report) = solve_optimal_critic(&p, &q, 0.7, 1e-12, 10_000).unwrap();
        let rate = report.contraction_rate.expect("enough sweeps for a rate");
        assert!(rate > 0.0 && rate < 1.0, "rate {rate}");
    }

    #[test]
    fn composed_sweep_deltas_are_non_increasing() {
        // Drive the T∘S iteration by hand and watch the sup-norm change of
        // each sweep after the first: it must never grow (up to rounding in
        // the last decades before machine precision).
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (p, q) = random_instance(5, 4, 2, &mut rng);
        let lambda = 0.9;
        let values: Vec<f64> = (0..9).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut critic = TabularCritic::from_measures(&p, &q, values).unwrap();
        let mut deltas = Vec::new();
        for _ in 0..60 {
            let next = apply_t(&apply_s(&critic, &p, &q, lambda).unwrap(), &p, &q, lambda).unwrap();
            let delta = next
                .values()
                .iter()
                .zip(critic.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            deltas.push(delta);
            critic = next;
        }
        for pair in deltas[1..].windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-15,
                "delta grew: {deltas:?}"
            );
        }
    }

    #[test]
    fn nonconvergence_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (p, q) = random_instance(4, 4, 2, &mut rng);
        match solve_optimal_critic(&p, &q, 1.0, 1e-15, 2) {
            Err(Error::NotConverged { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn solver_handles_vertical_supports() {
        // First coordinates identical: seed must fall back to the index ramp.
        let p = EmpiricalMeasure::dirac(vec![0.0, 0.0]);
        let q = EmpiricalMeasure::dirac(vec![0.0, 1.0]);
        let (critic, _) = solve_optimal_critic(&p, &q, 1.0, 1e-12, 10_000).unwrap();
        let diff = critic.p_values()[0] - critic.q_values()[0];
        assert!((diff - 0.5).abs() < 1e-10);
    }

    #[test]
    fn extension_reproduces_values_and_prescribed_gradient() {
        let (p, q) = dirac_pair();
        let (critic, _) = solve_optimal_critic(&p, &q, 1.0, 1e-13, 10_000).unwrap();
        let ext = extend_critic_c1(&critic, &p, &q, 1.0).unwrap();

        // Exact support hits.
        assert_eq!(ext.try_value(&[1.0]).unwrap(), critic.q_values()[0]);
        assert_eq!(ext.try_value(&[0.0]).unwrap(), critic.p_values()[0]);

        // Gradient at x' = 1 points toward 0 with magnitude 1/2:
        // single-atom field ((0-1)·(f(0)-f(1))/1³) / (1/1) = -1/2.
        let (_, g) = ext.try_value_and_grad(&[1.0]).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-10, "gradient {g:?}");

        // Off support, the T formula is used and stays close nearby.
        let (v, g2) = ext.try_value_and_grad(&[1.0 + 1e-7]).unwrap();
        assert!((v - critic.q_values()[0]).abs() < 1e-6);
        assert!((g2[0] + 0.5).abs() < 1e-6);

        // Queries on the data support have a value but no gradient.
        assert!(ext.try_value(&[0.0]).is_ok());
        assert!(ext.try_value_and_grad(&[0.0]).is_err());
        // And a near-hit within the clamp is a numeric error.
        assert!(ext.try_value(&[1e-12]).is_err());
    }

    #[test]
    fn extension_zeroes_fogan_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (p, q) = random_instance(4, 3, 2, &mut rng);
        let (critic, _) = solve_optimal_critic(&p, &q, 0.6, 1e-13, 10_000).unwrap();
        let ext = extend_critic_c1(&critic, &p, &q, 0.6).unwrap();
        let g = crate::divergences::fogan_penalty_g(&p, &q, &ext).unwrap();
        assert!(g < 1e-10, "G = {g}");

        // Perturbing the critic by 0.1·x breaks the gradient identity.
        let perturbed = PerturbedCritic {
            inner: &ext,
            c: 0.1,
        };
        let g2 = crate::divergences::fogan_penalty_g(&p, &q, &perturbed).unwrap();
        assert!(g2 > 1e-6, "perturbed G = {g2}");
    }

    struct PerturbedCritic<'a> {
        inner: &'a ExtendedCritic,
        c: f64,
    }

    impl Critic for PerturbedCritic<'_> {
        fn value(&self, x: &[f64]) -> f64 {
            self.inner.value(x) + self.c * x[0]
        }
        fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
            let mut g = self.inner.input_gradient(x);
            g[0] += self.c;
            g
        }
    }

    #[test]
    fn dirac_family_derivative_of_solved_value() {
        // P = δ₀, Q = δ_θ at λ = ½: the solved difference is f(0) - f(θ) = θ,
        // τ_P = θ/2, and dτ_P/dθ = ½ at θ₀ = 0.5 by central differences of
        // freshly solved values.
        let lambda = 0.5;
        let solve_at = |theta: f64| {
            let p = EmpiricalMeasure::dirac(vec![0.0]);
            let q = EmpiricalMeasure::dirac(vec![theta]);
            let (critic, _) = solve_optimal_critic(&p, &q, lambda, 1e-13, 10_000).unwrap();
            let diff = critic.p_values()[0] - critic.q_values()[0];
            let tau = tau_p_value(&critic, &p, &q, lambda).unwrap();
            (diff, tau)
        };
        let theta0 = 0.5;
        let (diff, tau) = solve_at(theta0);
        assert!((diff - theta0).abs() < 1e-10, "difference {diff}");
        assert!((tau - theta0 / 2.0).abs() < 1e-10, "tau {tau}");

        let h = 1e-6;
        let dtau = (solve_at(theta0 + h).1 - solve_at(theta0 - h).1) / (2.0 * h);
        assert!((dtau - 0.5).abs() < 1e-6, "dτ/dθ = {dtau}");
    }

    #[test]
    fn centered_critic_has_zero_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (p, q) = random_instance(5, 4, 2, &mut rng);
        let (critic, _) = solve_optimal_critic(&p, &q, 1.0, 1e-13, 10_000).unwrap();
        assert!(critic.normalization(&p, &q).unwrap().abs() < 1e-10);
    }
}
