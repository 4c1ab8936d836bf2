//! The oracle/invariant battery behind `fogan check`: quick independent
//! verifications of every load-bearing identity, printable as one line each.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_difference_check, grad_values, loss_builder, Expr, Tape};
use crate::critic_solver::{
    apply_s, apply_t, extend_critic_c1, slope_residuals, solve_optimal_critic, tau_p_value,
    TabularCritic,
};
use crate::divergences::{
    divergence_parts_expr, fogan_penalty_g, wasserstein_1d_exact, DivergenceSpec, Poly1dCritic,
};
use crate::measures::{EmpiricalMeasure, GeneratorFamily, StretchSpec};
use crate::metrics::{ngram_jsd, NGramDistribution};
use crate::nets::{Activation, InitScheme, Mlp};
use crate::oracle;
use crate::training::{generator_update_fogan, variance_probe};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match run() {
        Ok(detail) => CheckResult {
            name,
            pass: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            pass: false,
            detail,
        },
    }
}

fn random_measure(n: usize, dim: usize, offset: f64, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(
        (0..n)
            .map(|_| (0..dim).map(|_| offset + rng.gen::<f64>()).collect())
            .collect(),
    )
    .unwrap()
}

/// Runs the whole battery.
pub fn run_checks() -> Vec<CheckResult> {
    vec![
        check("dirac-pair closed form", || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..5 {
                let a = rng.gen::<f64>() * 4.0 - 2.0;
                let b = a + 0.5 + rng.gen::<f64>();
                let p = EmpiricalMeasure::dirac(vec![a]);
                let q = EmpiricalMeasure::dirac(vec![b]);
                let (critic, _) =
                    solve_optimal_critic(&p, &q, 1.0, 1e-12, 10_000).map_err(|e| e.to_string())?;
                let tau = tau_p_value(&critic, &p, &q, 1.0).map_err(|e| e.to_string())?;
                let want = (a - b).abs() / 4.0;
                if (tau - want).abs() > 1e-8 {
                    return Err(format!("tau {tau} vs |a-b|/4 = {want}"));
                }
            }
            Ok("solver value = |a-b|/4 on 5 random pairs".into())
        }),
        check("value-update map hand values", || {
            let p = EmpiricalMeasure::dirac(vec![0.0]);
            let q = EmpiricalMeasure::dirac(vec![1.0]);
            let zero = TabularCritic::from_measures(&p, &q, vec![0.0, 0.0]).unwrap();
            let t = apply_t(&zero, &p, &q, 1.0).map_err(|e| e.to_string())?;
            if (t.p_values()[0] - 0.5).abs() > 1e-15 || (t.q_values()[0] + 0.5).abs() > 1e-15 {
                return Err(format!("T gave {:?}", t.values()));
            }
            Ok("T(0) = (+1/2, -1/2) on the unit Dirac pair".into())
        }),
        check("projection idempotence", || {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let p = random_measure(3, 2, 0.0, &mut rng);
            let q = random_measure(4, 2, 2.0, &mut rng);
            let f = TabularCritic::from_measures(
                &p,
                &q,
                (0..7).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
            )
            .unwrap();
            let s1 = apply_s(&f, &p, &q, 0.7).map_err(|e| e.to_string())?;
            let s2 = apply_s(&s1, &p, &q, 0.7).map_err(|e| e.to_string())?;
            let gap = s1
                .values()
                .iter()
                .zip(s2.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if gap > 1e-12 {
                return Err(format!("S(S(f)) differs from S(f) by {gap}"));
            }
            Ok("S(S(f)) = S(f)".into())
        }),
        check("first-order update fixture", || {
            let family = GeneratorFamily::dirac(vec![0.5]);
            let anchor = EmpiricalMeasure::dirac(vec![0.0]);
            let tiny = StretchSpec::new(1e-12).unwrap();
            let good = generator_update_fogan(
                &Poly1dCritic::figure_first_order(),
                &family,
                &anchor,
                tiny,
                8,
                3,
            )
            .map_err(|e| e.to_string())?;
            let bad =
                generator_update_fogan(&Poly1dCritic::figure_plain(), &family, &anchor, tiny, 8, 3)
                    .map_err(|e| e.to_string())?;
            if (good[0].abs() - 0.5).abs() > 1e-6 {
                return Err(format!("first-order critic update {}", good[0]));
            }
            if (bad[0].abs() - 1.0).abs() > 1e-6 {
                return Err(format!("plain critic update {}", bad[0]));
            }
            Ok("updates 0.5 (first-order) and 1.0 (plain)".into())
        }),
        check("interpolate-penalty counterexample", || {
            let mut ratios = Vec::new();
            for theta in [0.5, 1.0, 2.0] {
                let da = oracle::counterexample_critic_term_derivative(theta, 1e-6);
                let db = oracle::counterexample_penalty_derivative(theta, 1e-6);
                let want_a = -(theta / 2.0 + 1.0) * theta;
                let want_b = theta / 2.0;
                if ((da - want_a) / want_a).abs() > 1e-4 || ((db - want_b) / want_b).abs() > 1e-4 {
                    return Err(format!("at θ={theta}: {da} vs {want_a}, {db} vs {want_b}"));
                }
                ratios.push(db / da);
            }
            for i in 0..ratios.len() {
                for j in i + 1..ratios.len() {
                    if ((ratios[i] - ratios[j]) / ratios[j]).abs() <= 0.10 {
                        return Err(format!("ratios too close: {ratios:?}"));
                    }
                }
            }
            Ok(format!("no single γ fits: ratios {ratios:?}"))
        }),
        check("nested-gradient finite differences", || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let p = random_measure(3, 2, 0.0, &mut rng);
            let q = random_measure(3, 2, 2.0, &mut rng);
            let net = Mlp::init(
                vec![2, 5, 1],
                Activation::Tanh,
                InitScheme::UniformScaled,
                6,
            );
            let spec = DivergenceSpec::first_order(0.5, 1.0);
            let loss = loss_builder(|tape, params| {
                let q_exprs: Vec<Vec<Expr>> = q.points().iter().map(|x| tape.vars(x)).collect();
                let fp: Vec<Expr> = p
                    .points()
                    .iter()
                    .map(|x| net.forward_exprs(tape, &tape.constants(x), params)[0])
                    .collect();
                let fq: Vec<Expr> = q_exprs
                    .iter()
                    .map(|x| net.forward_exprs(tape, x, params)[0])
                    .collect();
                divergence_parts_expr(tape, &spec, &p, &q_exprs, q.weights(), true, &fp, &fq).value
            });
            let err =
                finite_difference_check(loss, net.params(), 1e-5).map_err(|e| e.to_string())?;
            if err > 1e-4 {
                return Err(format!("max relative error {err}"));
            }
            Ok(format!("max relative error {err:.2e}"))
        }),
        check("n-gram JSD closed form", || {
            let a = NGramDistribution::from_sequences(&[vec![0], vec![1]], 1).unwrap();
            let b = NGramDistribution::from_sequences(&[vec![0], vec![0]], 1).unwrap();
            let got = ngram_jsd(&a, &b).map_err(|e| e.to_string())?;
            let want = 0.75 * (4.0f64 / 3.0).log2();
            if (got - want).abs() > 1e-12 {
                return Err(format!("{got} vs {want}"));
            }
            Ok(format!("two-point JSD = {got:.6}"))
        }),
        check("exact 1-D Wasserstein", || {
            let p = EmpiricalMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
            let q = EmpiricalMeasure::dirac(vec![0.5]);
            let w = wasserstein_1d_exact(&p, &q).map_err(|e| e.to_string())?;
            if (w - 0.5).abs() > 1e-12 {
                return Err(format!("W1 = {w}"));
            }
            Ok("quantile coupling reproduces enumerated value".into())
        }),
        check("solver vs brute-force maximizer", || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..3 {
                let p = random_measure(5, 2, 0.0, &mut rng);
                let q = random_measure(6, 2, 2.0, &mut rng);
                let lambda = 0.4 + rng.gen::<f64>();
                let (critic, report) = solve_optimal_critic(&p, &q, lambda, 1e-12, 10_000)
                    .map_err(|e| e.to_string())?;
                let tau = tau_p_value(&critic, &p, &q, lambda).map_err(|e| e.to_string())?;
                let (_, tau_oracle) =
                    oracle::concave_quadratic_max(&p, &q, lambda).map_err(|e| e.to_string())?;
                if (tau - tau_oracle).abs() > 1e-8 {
                    return Err(format!("solver {tau} vs oracle {tau_oracle}"));
                }
                if report.slope_residual_p > 1e-10 || report.slope_residual_q > 1e-10 {
                    return Err(format!(
                        "slope residuals {} / {}",
                        report.slope_residual_p, report.slope_residual_q
                    ));
                }
            }
            Ok("agreement within 1e-8, residuals below 1e-10".into())
        }),
        check("extension nulls the gradient penalty", || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let p = random_measure(4, 2, 0.0, &mut rng);
            let q = random_measure(3, 2, 2.0, &mut rng);
            let (critic, _) =
                solve_optimal_critic(&p, &q, 0.8, 1e-12, 10_000).map_err(|e| e.to_string())?;
            let ext = extend_critic_c1(&critic, &p, &q, 0.8).map_err(|e| e.to_string())?;
            let g = fogan_penalty_g(&p, &q, &ext).map_err(|e| e.to_string())?;
            if g > 1e-10 {
                return Err(format!("G = {g}"));
            }
            Ok(format!("G = {g:.2e}"))
        }),
        check("half-gradient variance is zero", || {
            let family = GeneratorFamily::uniform_interval(1.0);
            let critic = Poly1dCritic::new(vec![0.0, -1.5, 0.2, -0.05]);
            let p = EmpiricalMeasure::dirac(vec![0.0]);
            let spec = DivergenceSpec::wgan_gp(1.0);
            let (fogan, envelope) = variance_probe(&spec, &critic, &p, &family, 16, 100, 11)
                .map_err(|e| e.to_string())?;
            if fogan.per_batch_variance.iter().any(|&v| v != 0.0) {
                return Err(format!("half-grad variance {:?}", fogan.per_batch_variance));
            }
            if envelope.per_batch_variance[0] <= 0.0 {
                return Err("envelope variance is not positive".into());
            }
            Ok(format!(
                "0 vs {:.3e} over 100 batches",
                envelope.per_batch_variance[0]
            ))
        }),
        check("slope residuals of the zero critic", || {
            let p = EmpiricalMeasure::dirac(vec![0.0]);
            let q = EmpiricalMeasure::dirac(vec![1.0]);
            let zero = TabularCritic::from_measures(&p, &q, vec![0.0, 0.0]).unwrap();
            let (rp, rq) = slope_residuals(&zero, &p, &q, 1.0).map_err(|e| e.to_string())?;
            if (rp - 0.5).abs() > 1e-15 || (rq - 0.5).abs() > 1e-15 {
                return Err(format!("residuals ({rp}, {rq})"));
            }
            Ok("(1/2, 1/2) as computed by hand".into())
        }),
        check("gradient determinism", || {
            let run = || {
                let tape = Tape::new();
                let x = tape.vars(&[0.3, -1.7]);
                let f = (x[0] * x[1]).tanh() + x[0].exp() * 0.5;
                grad_values(f, &x)
                    .iter()
                    .map(|g| g.to_bits())
                    .collect::<Vec<_>>()
            };
            if run() != run() {
                return Err("two identical builds disagreed".into());
            }
            Ok("bitwise identical reruns".into())
        }),
    ]
}
