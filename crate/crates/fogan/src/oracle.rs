//! Independent verification routines.
//!
//! Nothing here shares code with the solvers it checks: the brute-force
//! maximizer works on the concave quadratic in the tabular critic values
//! directly, and the counterexample derivatives are plain quadrature plus
//! central differences. `fogan check` and the acceptance suite both run these
//! against the production paths.

use crate::autodiff::{grad_values, Tape};
use crate::measures::{euclidean, EmpiricalMeasure};
use crate::quadrature::integrate;
use crate::{Error, Result, DIST_FLOOR};

/// Maximizes the concave quadratic
/// `τ(u) = Σ wᵢ uᵢ - Σ vⱼ u'ⱼ - λ ΣΣ wᵢ vⱼ (uᵢ - u'ⱼ)²/dᵢⱼ`
/// over all tabular critic values by conjugate gradients on the stationarity
/// system, and returns `(values, τ*)`.
///
/// The Hessian is a negated bipartite graph Laplacian; its null space is the
/// constant shift, along which the objective is flat, so conjugate gradients
/// started at zero stays in the solvable subspace.
pub fn concave_quadratic_max(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
) -> Result<(Vec<f64>, f64)> {
    if p.dim() != q.dim() {
        return Err(Error::Shape("dimension mismatch".into()));
    }
    if lambda <= 0.0 {
        return Err(Error::Domain("lambda must be positive".into()));
    }
    let np = p.len();
    let nq = q.len();
    let n = np + nq;

    // Coupling coefficients c[i][j] = 2 λ wᵢ vⱼ / dᵢⱼ.
    let mut coupling = vec![vec![0.0; nq]; np];
    for (i, (x, w)) in p.iter().enumerate() {
        for (j, (y, v)) in q.iter().enumerate() {
            let d = euclidean(x, y).max(DIST_FLOOR);
            coupling[i][j] = 2.0 * lambda * w * v / d;
        }
    }

    // Stationarity: A u = b with A the Laplacian of the coupling graph and
    // b = [w; -v]. b ⊥ 1 because both weight vectors sum to one.
    let mut b = vec![0.0; n];
    for (i, (_, w)) in p.iter().enumerate() {
        b[i] = w;
    }
    for (j, (_, v)) in q.iter().enumerate() {
        b[np + j] = -v;
    }

    let apply = |u: &[f64], out: &mut Vec<f64>| {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for i in 0..np {
            for j in 0..nq {
                let flow = coupling[i][j] * (u[i] - u[np + j]);
                out[i] += flow;
                out[np + j] -= flow;
            }
        }
    };

    // Conjugate gradients.
    let mut u = vec![0.0; n];
    let mut r = b.clone();
    let mut d = r.clone();
    let mut au = vec![0.0; n];
    let mut rs: f64 = r.iter().map(|x| x * x).sum();
    let target = 1e-28 * rs.max(1e-10);
    for _ in 0..20 * n {
        if rs <= target {
            break;
        }
        apply(&d, &mut au);
        let dad: f64 = d.iter().zip(&au).map(|(x, y)| x * y).sum();
        if dad <= 0.0 {
            break;
        }
        let alpha = rs / dad;
        for k in 0..n {
            u[k] += alpha * d[k];
            r[k] -= alpha * au[k];
        }
        let rs_new: f64 = r.iter().map(|x| x * x).sum();
        let beta = rs_new / rs;
        rs = rs_new;
        for k in 0..n {
            d[k] = r[k] + beta * d[k];
        }
    }

    let tau = tabular_tau_p(p, q, lambda, &u);
    Ok((u, tau))
}

/// Direct evaluation of the concave quadratic at given tabular values.
pub fn tabular_tau_p(
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
    lambda: f64,
    values: &[f64],
) -> f64 {
    let np = p.len();
    let mut tau = 0.0;
    for (i, (_, w)) in p.iter().enumerate() {
        tau += w * values[i];
    }
    for (j, (_, v)) in q.iter().enumerate() {
        tau -= v * values[np + j];
    }
    for (i, (x, w)) in p.iter().enumerate() {
        for (j, (y, v)) in q.iter().enumerate() {
            let d = euclidean(x, y).max(DIST_FLOOR);
            let diff = values[i] - values[np + j];
            tau -= lambda * w * v * diff * diff / d;
        }
    }
    tau
}

/// Slope of the optimal interpolate-penalty critic for the Dirac-vs-uniform
/// counterexample family: `f_θ(x) = -(θ/2 + 1)·x`.
pub fn counterexample_critic_slope(theta: f64) -> f64 {
    -(theta / 2.0 + 1.0)
}

/// `d/dθ ∫₀^θ f(x) dx` for the critic frozen at `theta`, by Gauss-Legendre
/// quadrature and central differences. Closed form: `-(θ/2 + 1)·θ`.
pub fn counterexample_critic_term_derivative(theta: f64, h: f64) -> f64 {
    let slope = counterexample_critic_slope(theta);
    let frozen = move |upper: f64| integrate(|x| slope * x, 0.0, upper, 24);
    (frozen(theta + h) - frozen(theta - h)) / (2.0 * h)
}

/// `d/dθ E_{x'∼U([0,θ]), α∼U([0,1])}[(‖∇f_θ(αx + (1-α)x')‖ - 1)²]` with the
/// optimal critic tracking θ, by nested quadrature over the interpolates and
/// central differences in θ. The critic gradient is taken at every quadrature
/// node (it happens to be constant for a linear critic). Closed form: `θ/2`.
pub fn counterexample_penalty_derivative(theta: f64, h: f64) -> f64 {
    let penalty = |t: f64| -> f64 {
        let slope = counterexample_critic_slope(t);
        let inner = integrate(
            |xp| {
                integrate(
                    |alpha| {
                        // Interpolate toward the data atom at 0.
                        let z = (1.0 - alpha) * xp;
                        let tape = Tape::new();
                        let x = tape.var(z);
                        let g = grad_values(x * slope, &[x])[0];
                        (g.abs() - 1.0) * (g.abs() - 1.0)
                    },
                    0.0,
                    1.0,
                    8,
                )
            },
            0.0,
            t,
            24,
        );
        inner / t
    };
    (penalty(theta + h) - penalty(theta - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_max_on_dirac_pair() {
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let q = EmpiricalMeasure::dirac(vec![1.0]);
        let (u, tau) = concave_quadratic_max(&p, &q, 1.0).unwrap();
        assert!((tau - 0.25).abs() < 1e-12, "tau {tau}");
        assert!((u[0] - u[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn quadratic_max_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sample = |n: usize, off: f64, rng: &mut ChaCha8Rng| {
            EmpiricalMeasure::uniform(
                (0..n)
                    .map(|_| (0..2).map(|_| off + rng.gen::<f64>()).collect())
                    .collect(),
            )
            .unwrap()
        };
        let p = sample(5, 0.0, &mut rng);
        let q = sample(4, 2.0, &mut rng);
        let (u, tau) = concave_quadratic_max(&p, &q, 0.7).unwrap();
        for _ in 0..50 {
            let perturbed: Vec<f64> = u
                .iter()
                .map(|x| x + 0.01 * (rng.gen::<f64>() - 0.5))
                .collect();
            assert!(tabular_tau_p(&p, &q, 0.7, &perturbed) <= tau + 1e-12);
        }
    }

    #[test]
    fn counterexample_derivatives_match_closed_forms() {
        for theta in [0.5, 1.0, 2.0] {
            let a = counterexample_critic_term_derivative(theta, 1e-5);
            let want_a = -(theta / 2.0 + 1.0) * theta;
            assert!(
                (a - want_a).abs() / want_a.abs() < 1e-6,
                "critic term at {theta}: {a} vs {want_a}"
            );
            let b = counterexample_penalty_derivative(theta, 1e-5);
            let want_b = theta / 2.0;
            assert!(
                (b - want_b).abs() / want_b.abs() < 1e-6,
                "penalty term at {theta}: {b} vs {want_b}"
            );
        }
    }
}
