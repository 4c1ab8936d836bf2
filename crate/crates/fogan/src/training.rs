//! Critic and generator optimization, the half-gradient update rule against
//! the full envelope rule, and the mini-batch variance probe.
//!
//! Update rules (all returned as **descent** directions; the optimizer adds
//! `lr · direction` to the parameters):
//!
//! - `FoganHalfGrad`: `½ ∇_θ E_{Q'_θ}[f*]` through the stretched generated
//!   distribution. The penalty term is never differentiated; at a first-order
//!   optimal critic this equals the exact steepest-descent direction.
//! - `EnvelopeFullGrad`: `∇_θ(E_{Q_θ}[m₂(f*)] + E[r_{f*}])`, the envelope
//!   derivative at a frozen critic, penalty included, computed pathwise
//!   through `g(θ, z)`.
//! - `WganNaive`: `∇_θ E_{Q_θ}[f*]`, the conventional critic-score direction.
//!
//! The variance probe freezes the generated batch and varies only what the
//! penalty estimator must resample (the data mini-batch and the interpolate
//! draws); the half-gradient estimate never touches either, so its per-batch
//! variance is exactly zero.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_values, Expr, Tape};
use crate::divergences::{
    divergence_parts_expr, estimate, wgan_gp_parts_expr, DivergenceKind, DivergenceSpec, ExprCritic,
};
use crate::measures::{stretch_point, EmpiricalMeasure, GeneratorFamily, StretchSpec};
use crate::nets::{Activation, InitScheme, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    FoganHalfGrad,
    EnvelopeFullGrad,
    WganNaive,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fogan_half_grad" => Ok(UpdateRule::FoganHalfGrad),
            "envelope_full_grad" => Ok(UpdateRule::EnvelopeFullGrad),
            "wgan_naive" => Ok(UpdateRule::WganNaive),
            other => Err(Error::Config(format!("unknown update rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerSpec {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerSpec {
    /// Adam with the two-time-scale defaults `β₁ = 0`, `β₂ = 0.9`.
    pub fn adam_default() -> Self {
        OptimizerSpec::Adam {
            beta1: 0.0,
            beta2: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// First/second-moment state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, len: usize) -> Self {
        Optimizer {
            spec,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// `params += lr · step(direction)`. Directions are whatever the caller
    /// wants to move along (ascent for critics, descent for generators); the
    /// optimizer never flips signs.
    pub fn step(&mut self, params: &mut [f64], direction: &[f64], lr: f64) {
        match self.spec {
            OptimizerSpec::Sgd => {
                for (p, d) in params.iter_mut().zip(direction) {
                    *p += lr * d;
                }
            }
            OptimizerSpec::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, d), (m, v)) in params
                    .iter_mut()
                    .zip(direction)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = beta1 * *m + (1.0 - beta1) * d;
                    *v = beta2 * *v + (1.0 - beta2) * d * d;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p += lr * mhat / (vhat.sqrt() + epsilon);
                }
            }
        }
    }
}

/// Anything a training run can draw data batches from.
pub trait BatchSource {
    fn dim(&self) -> usize;
    fn batch(&self, size: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure;
}

impl BatchSource for EmpiricalMeasure {
    fn dim(&self) -> usize {
        EmpiricalMeasure::dim(self)
    }

    fn batch(&self, size: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
        self.resample(size, rng)
    }
}

fn ensure_finite(direction: &[f64], what: &str) -> Result<()> {
    if direction.iter().any(|d| !d.is_finite()) {
        return Err(Error::Numeric(format!("non-finite {what}")));
    }
    Ok(())
}

/// The half-gradient rule `½ ∇_θ E_{Q'_θ}[f*]`, estimated pathwise over a
/// batch of latents with the critic frozen; `Q'_θ` pulls each generated point
/// a random fraction `α ∼ U([0, ε])` toward an anchor drawn from `p_anchor`.
///
/// Returned as the descent direction of the divergence: a small step along it
/// decreases `τ_F`.
pub fn generator_update_fogan(
    critic: &dyn ExprCritic,
    family: &GeneratorFamily,
    p_anchor: &EmpiricalMeasure,
    stretch: StretchSpec,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    fogan_direction(
        &mut tape,
        critic,
        family,
        Some((p_anchor, stretch)),
        batch_size,
        &mut rng,
    )
}

fn fogan_direction(
    tape: &mut Tape,
    critic: &dyn ExprCritic,
    family: &GeneratorFamily,
    stretch: Option<(&EmpiricalMeasure, StretchSpec)>,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be >= 1".into()));
    }
    family.validate()?;
    tape.reset();
    let tape = &*tape;
    let theta = tape.vars(&family.theta);

    let mut points = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let z = family.latent.sample(rng);
        let x_prime = family.push_exprs(&tape, &theta, &z);
        let point = match stretch {
            Some((anchor, spec)) => {
                let x = anchor.point(anchor.sample_index(rng)).to_vec();
                let alpha = spec.sample_alpha(rng);
                // x' - α (x' - x), coordinate-wise.
                x_prime
                    .iter()
                    .zip(&x)
                    .map(|(&xp, &xc)| xp * (1.0 - alpha) + alpha * xc)
                    .collect()
            }
            None => x_prime,
        };
        points.push(point);
    }
    let values = critic.value_exprs(&tape, &points);
    let mean = values
        .into_iter()
        .reduce(|a, b| a + b)
        .expect("batch_size >= 1")
        * (1.0 / batch_size as f64);
    // ∇_θ τ ≈ -½ ∇_θ E[f*], so the positive half gradient is the descent
    // direction.
    let dir = grad_values(mean * 0.5, &theta);
    ensure_finite(&dir, "half-gradient update")?;
    Ok(dir)
}

/// The full envelope rule `∇_θ(E_{Q_θ}[m₂(f*)] + E_{P̂⊗Q_θ}[r_{f*}])` at a
/// frozen critic, computed pathwise (the penalty term included), returned as
/// the descent direction of the divergence.
pub fn generator_update_envelope(
    spec: &DivergenceSpec,
    critic: &dyn ExprCritic,
    p: &EmpiricalMeasure,
    family: &GeneratorFamily,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    envelope_direction(&mut tape, spec, critic, p, family, batch_size, &mut rng)
}

fn envelope_direction(
    tape: &mut Tape,
    spec: &DivergenceSpec,
    critic: &dyn ExprCritic,
    p: &EmpiricalMeasure,
    family: &GeneratorFamily,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be >= 1".into()));
    }
    spec.validate()?;
    family.validate()?;
    tape.reset();
    let tape = &*tape;
    let theta = tape.vars(&family.theta);

    let q_points: Vec<Vec<Expr>> = (0..batch_size)
        .map(|_| {
            let z = family.latent.sample(rng);
            family.push_exprs(&tape, &theta, &z)
        })
        .collect();
    let q_weights = vec![1.0 / batch_size as f64; batch_size];

    let p_exprs: Vec<Vec<Expr>> = p.points().iter().map(|x| tape.constants(x)).collect();
    let fp = critic.value_exprs(&tape, &p_exprs);
    let fq = critic.value_exprs(&tape, &q_points);

    let parts = match spec.kind {
        DivergenceKind::WganGp => {
            let pairs: Vec<(usize, f64)> = (0..batch_size)
                .map(|_| (p.sample_index(rng), rng.gen::<f64>()))
                .collect();
            wgan_gp_parts_expr(
                &tape,
                p,
                &q_points,
                &q_weights,
                &fp,
                &fq,
                &pairs,
                spec.gp_weight,
                &|x| critic.value_expr(&tape, x),
            )
        }
        _ => divergence_parts_expr(&tape, spec, p, &q_points, &q_weights, false, &fp, &fq),
    };

    // τ = objective - penalties, and the data expectation is θ-free, so the
    // descent direction -∇_θ τ is the gradient of the negated value.
    let dir = grad_values(-parts.value, &theta);
    ensure_finite(&dir, "envelope update")?;
    Ok(dir)
}

/// The conventional update `∇_θ E_{Q_θ}[f*]` used by Wasserstein-style
/// baselines, as a descent-direction vector.
pub fn generator_update_naive(
    critic: &dyn ExprCritic,
    family: &GeneratorFamily,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    naive_direction(&mut tape, critic, family, batch_size, &mut rng)
}

fn naive_direction(
    tape: &mut Tape,
    critic: &dyn ExprCritic,
    family: &GeneratorFamily,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut dir = fogan_direction(tape, critic, family, None, batch_size, rng)?;
    // The half-gradient without stretching is ½ ∇_θ E_Q[f]; undo the half.
    for d in &mut dir {
        *d *= 2.0;
    }
    Ok(dir)
}

/// Per-rule gradient estimate with elementwise mini-batch variance.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub rule: UpdateRule,
    /// Mean gradient estimate across the repeated batches.
    pub grad_estimate: Vec<f64>,
    /// Elementwise variance across the repeated batches.
    pub per_batch_variance: Vec<f64>,
    pub batches_used: usize,
}

/// Draws `repeats` independent data mini-batches and recomputes both update
/// rules per batch, holding the generated latents fixed.
///
/// Everything the penalty estimator resamples per batch (the data points, the
/// interpolate pairings and α draws) varies across repeats; the half-gradient
/// estimate depends on none of it, so its variance is exactly zero.
pub fn variance_probe(
    spec: &DivergenceSpec,
    critic: &dyn ExprCritic,
    p_population: &dyn BatchSource,
    family: &GeneratorFamily,
    batch_size: usize,
    repeats: usize,
    seed: u64,
) -> Result<(UpdateReport, UpdateReport)> {
    if repeats < 2 {
        return Err(Error::Usage("variance probe needs repeats >= 2".into()));
    }
    let mut shared_rng = ChaCha8Rng::seed_from_u64(seed);
    shared_rng.set_stream(1);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(2);

    let mut tape = Tape::new();
    let mut fogan_runs = Vec::with_capacity(repeats);
    let mut envelope_runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        // Frozen generated batch: same latent stream re-seeded every repeat.
        let mut frozen = shared_rng.clone();
        let fogan = fogan_direction(&mut tape, critic, family, None, batch_size, &mut frozen)?;

        let p_batch = p_population.batch(batch_size, &mut batch_rng);
        let mut frozen = shared_rng.clone();
        // The data batch and the penalty's own draws come from the varying
        // stream; the latents inside come from the frozen clone.
        let envelope = envelope_direction_probe(
            &mut tape,
            spec,
            critic,
            &p_batch,
            family,
            batch_size,
            &mut frozen,
            &mut batch_rng,
        )?;
        fogan_runs.push(fogan);
        envelope_runs.push(envelope);
    }

    Ok((
        summarize(UpdateRule::FoganHalfGrad, fogan_runs),
        summarize(UpdateRule::EnvelopeFullGrad, envelope_runs),
    ))
}

/// Envelope direction with separate randomness for the latents (frozen across
/// probe repeats) and the penalty draws (varying).
fn envelope_direction_probe(
    tape: &mut Tape,
    spec: &DivergenceSpec,
    critic: &dyn ExprCritic,
    p: &EmpiricalMeasure,
    family: &GeneratorFamily,
    batch_size: usize,
    latent_rng: &mut ChaCha8Rng,
    penalty_rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    spec.validate()?;
    family.validate()?;
    tape.reset();
    let tape = &*tape;
    let theta = tape.vars(&family.theta);
    let q_points: Vec<Vec<Expr>> = (0..batch_size)
        .map(|_| {
            let z = family.latent.sample(latent_rng);
            family.push_exprs(&tape, &theta, &z)
        })
        .collect();
    let q_weights = vec![1.0 / batch_size as f64; batch_size];
    let p_exprs: Vec<Vec<Expr>> = p.points().iter().map(|x| tape.constants(x)).collect();
    let fp = critic.value_exprs(&tape, &p_exprs);
    let fq = critic.value_exprs(&tape, &q_points);
    let parts = match spec.kind {
        DivergenceKind::WganGp => {
            let pairs: Vec<(usize, f64)> = (0..batch_size)
                .map(|_| (p.sample_index(penalty_rng), penalty_rng.gen::<f64>()))
                .collect();
            wgan_gp_parts_expr(
                &tape,
                p,
                &q_points,
                &q_weights,
                &fp,
                &fq,
                &pairs,
                spec.gp_weight,
                &|x| critic.value_expr(&tape, x),
            )
        }
        _ => divergence_parts_expr(&tape, spec, p, &q_points, &q_weights, false, &fp, &fq),
    };
    let dir = grad_values(-parts.value, &theta);
    ensure_finite(&dir, "envelope update")?;
    Ok(dir)
}

fn summarize(rule: UpdateRule, runs: Vec<Vec<f64>>) -> UpdateReport {
    let n = runs.len();
    let dim = runs[0].len();
    // Accumulate shifted by the first run: identical runs then yield a mean
    // equal to them bitwise and a variance of exactly zero.
    let reference = runs[0].clone();
    let mut mean = reference.clone();
    for run in &runs {
        for ((m, g), r) in mean.iter_mut().zip(run).zip(&reference) {
            *m += (g - r) / n as f64;
        }
    }
    let mut var = vec![0.0; dim];
    for run in &runs {
        for ((v, g), m) in var.iter_mut().zip(run).zip(&mean) {
            *v += (g - m) * (g - m) / n as f64;
        }
    }
    UpdateReport {
        rule,
        grad_estimate: mean,
        per_batch_variance: var,
        batches_used: n,
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub divergence: DivergenceSpec,
    pub update_rule: UpdateRule,
    pub critic_lr: f64,
    pub generator_lr: f64,
    pub critic_iters: usize,
    pub batch_size: usize,
    pub stretch: StretchSpec,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    pub total_iters: usize,
    pub critic_hidden: Vec<usize>,
    pub critic_activation: Activation,
    /// Fine-tuning schedule: both learning rates divide by 10 from this
    /// iteration on.
    pub lr_drop_iter: Option<usize>,
}

impl TrainConfig {
    /// First-order defaults: `λ = 0.1`, `μ = 1.0`, stretch `ε = 0.1`, Adam
    /// with `β₁ = 0`, `β₂ = 0.9`, and separate critic/generator rates.
    pub fn fogan_defaults(seed: u64) -> Self {
        TrainConfig {
            divergence: DivergenceSpec::first_order(0.1, 1.0),
            update_rule: UpdateRule::FoganHalfGrad,
            critic_lr: 3e-4,
            generator_lr: 1e-4,
            critic_iters: 1,
            batch_size: 32,
            stretch: StretchSpec::default(),
            optimizer: OptimizerSpec::adam_default(),
            seed,
            total_iters: 1000,
            critic_hidden: vec![64, 64],
            critic_activation: Activation::Tanh,
            lr_drop_iter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.divergence.validate()?;
        if self.critic_lr <= 0.0 || self.generator_lr <= 0.0 {
            return Err(Error::Domain("learning rates must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Domain("batch_size must be >= 2".into()));
        }
        if self.critic_iters < 1 {
            return Err(Error::Domain("critic_iters must be >= 1".into()));
        }
        if self.total_iters == 0 {
            return Err(Error::Domain("total_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of a training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub divergence: f64,
    pub objective: f64,
    pub lambda_penalty: f64,
    pub mu_penalty: f64,
    pub grad_norm: f64,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub records: Vec<IterRecord>,
    pub family: GeneratorFamily,
    pub critic: Mlp,
}

/// Alternates `critic_iters` critic ascent steps with one generator descent
/// step per iteration. Fully deterministic per seed. The callback sees every
/// record as it is produced (so partial progress survives a numeric abort)
/// and may stop the run early by returning `false`.
pub fn train(
    cfg: &TrainConfig,
    family: &GeneratorFamily,
    target: &dyn BatchSource,
    mut on_iter: impl FnMut(&IterRecord, &GeneratorFamily) -> bool,
) -> Result<TrainTrace> {
    cfg.validate()?;
    family.validate()?;
    let dim = target.dim();
    if family.output_dim() != dim {
        return Err(Error::Shape(format!(
            "generator emits dimension {}, target has {}",
            family.output_dim(),
            dim
        )));
    }

    let mut rng_data = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_data.set_stream(1);
    let mut rng_latent = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_latent.set_stream(2);
    let mut rng_penalty = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_penalty.set_stream(3);

    let mut critic_sizes = vec![dim];
    critic_sizes.extend_from_slice(&cfg.critic_hidden);
    critic_sizes.push(1);
    let mut critic = Mlp::init(
        critic_sizes,
        cfg.critic_activation,
        InitScheme::UniformScaled,
        cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
    );
    let mut family = family.clone();

    let mut critic_opt = Optimizer::new(cfg.optimizer, critic.params().len());
    let mut gen_opt = Optimizer::new(cfg.optimizer, family.theta.len());

    let mut tape = Tape::with_capacity(1 << 16);
    let mut records = Vec::with_capacity(cfg.total_iters);

    for iter in 0..cfg.total_iters {
        let p_batch = target.batch(cfg.batch_size, &mut rng_data);
        let lr_scale = match cfg.lr_drop_iter {
            Some(drop) if iter >= drop => 0.1,
            _ => 1.0,
        };

        // Critic phase: ascend τ(P̂‖Q̂; f_ϑ) in the critic parameters. For the
        // first-order divergence the critic trains against the stretched
        // generated batch.
        let mut last = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..cfg.critic_iters {
            let q_batch =
                critic_training_batch(cfg, &family, &p_batch, &mut rng_latent, &mut rng_penalty);
            tape.reset();
            let params = tape.vars(critic.params());
            let q_exprs: Vec<Vec<Expr>> = q_batch.points().iter().map(|x| tape.vars(x)).collect();
            let p_exprs: Vec<Vec<Expr>> =
                p_batch.points().iter().map(|x| tape.constants(x)).collect();
            // The classic GAN trains a logit-headed critic through a
            // sigmoid so its range constraint becomes unconstrained ascent.
            let squash = cfg.divergence.kind == DivergenceKind::ClassicGan;
            let fp: Vec<Expr> = p_exprs
                .iter()
                .map(|x| {
                    let out = critic.forward_exprs(&tape, x, &params)[0];
                    if squash {
                        out.sigmoid(1.0)
                    } else {
                        out
                    }
                })
                .collect();
            let fq: Vec<Expr> = q_exprs
                .iter()
                .map(|x| {
                    let out = critic.forward_exprs(&tape, x, &params)[0];
                    if squash {
                        out.sigmoid(1.0)
                    } else {
                        out
                    }
                })
                .collect();
            let parts = match cfg.divergence.kind {
                DivergenceKind::WganGp => {
                    let pairs: Vec<(usize, f64)> = (0..q_batch.len())
                        .map(|_| {
                            (
                                p_batch.sample_index(&mut rng_penalty),
                                rng_penalty.gen::<f64>(),
                            )
                        })
                        .collect();
                    wgan_gp_parts_expr(
                        &tape,
                        &p_batch,
                        &q_exprs,
                        q_batch.weights(),
                        &fp,
                        &fq,
                        &pairs,
                        cfg.divergence.gp_weight,
                        &|x| {
                            let out = critic.forward_exprs(&tape, x, &params)[0];
                            out
                        },
                    )
                }
                _ => divergence_parts_expr(
                    &tape,
                    &cfg.divergence,
                    &p_batch,
                    &q_exprs,
                    q_batch.weights(),
                    true,
                    &fp,
                    &fq,
                ),
            };
            let value = parts.value.value();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "critic loss became non-finite at iteration {iter}"
                )));
            }
            last = (
                value,
                parts.objective.value(),
                parts.lambda_penalty.value(),
                parts.mu_penalty.value(),
            );
            let ascent = grad_values(parts.value, &params);
            critic_opt.step(critic.params_mut(), &ascent, lr_scale * cfg.critic_lr);
        }

        // Generator phase, on the same reusable tape.
        let dir = match cfg.update_rule {
            UpdateRule::FoganHalfGrad => fogan_direction(
                &mut tape,
                &critic,
                &family,
                Some((&p_batch, cfg.stretch)),
                cfg.batch_size,
                &mut rng_latent,
            )?,
            UpdateRule::EnvelopeFullGrad => {
                // Penalty draws ride the same stream as latents would vary.
                envelope_direction_probe(
                    &mut tape,
                    &cfg.divergence,
                    &critic,
                    &p_batch,
                    &family,
                    cfg.batch_size,
                    &mut rng_latent,
                    &mut rng_penalty,
                )?
            }
            UpdateRule::WganNaive => {
                naive_direction(&mut tape, &critic, &family, cfg.batch_size, &mut rng_latent)?
            }
        };
        let grad_norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let mut theta = family.theta.clone();
        gen_opt.step(&mut theta, &dir, lr_scale * cfg.generator_lr);
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(format!(
                "generator parameters became non-finite at iteration {iter}"
            )));
        }
        family = family.with_theta(theta);

        let record = IterRecord {
            iter,
            divergence: last.0,
            objective: last.1,
            lambda_penalty: last.2,
            mu_penalty: last.3,
            grad_norm,
        };
        let keep_going = on_iter(&record, &family);
        records.push(record);
        if !keep_going {
            break;
        }
    }

    Ok(TrainTrace {
        records,
        family,
        critic,
    })
}

/// The generated batch the critic trains against: stretched toward the data
/// for the first-order divergence, plain otherwise.
fn critic_training_batch(
    cfg: &TrainConfig,
    family: &GeneratorFamily,
    p_batch: &EmpiricalMeasure,
    rng_latent: &mut ChaCha8Rng,
    rng_penalty: &mut ChaCha8Rng,
) -> EmpiricalMeasure {
    let points: Vec<Vec<f64>> = (0..cfg.batch_size)
        .map(|_| {
            let z = family.latent.sample(rng_latent);
            let x_prime = family.push(&z);
            if cfg.divergence.kind == DivergenceKind::FirstOrderPW {
                let x = p_batch.point(p_batch.sample_index(rng_penalty));
                let alpha = cfg.stretch.sample_alpha(rng_penalty);
                stretch_point(x, &x_prime, alpha)
            } else {
                x_prime
            }
        })
        .collect();
    EmpiricalMeasure::uniform(points).expect("generated batch is valid")
}

/// Divergence estimate of the current critic on a fresh evaluation batch,
/// used by runners for reporting.
pub fn evaluate_divergence(
    cfg: &TrainConfig,
    critic: &Mlp,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
) -> Result<f64> {
    Ok(estimate(&cfg.divergence, p, q, critic)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::Poly1dCritic;
    use crate::measures::LatentSpec;

    #[test]
    fn figure_fixture_updates() {
        // P = δ₀, Q = δ_θ at θ₀ = 0.5 with λ = ½: dτ/dθ = ½ exactly.
        let family = GeneratorFamily::dirac(vec![0.5]);
        let anchor = EmpiricalMeasure::dirac(vec![0.0]);
        let tiny = StretchSpec::new(1e-12).unwrap();

        // First-order critic: the update has steepest-descent magnitude ½.
        let first = Poly1dCritic::figure_first_order();
        let dir = generator_update_fogan(&first, &family, &anchor, tiny, 16, 3).unwrap();
        assert!((dir[0].abs() - 0.5).abs() < 1e-6, "direction {dir:?}");
        // And it is a descent direction: θ shrinks toward 0.
        assert!(dir[0] < 0.0);

        // The merely-optimal critic -2x² reports magnitude 1 instead.
        let plain = Poly1dCritic::figure_plain();
        let dir = generator_update_fogan(&plain, &family, &anchor, tiny, 16, 3).unwrap();
        assert!((dir[0].abs() - 1.0).abs() < 1e-6, "direction {dir:?}");

        // A constant critic produces a zero update.
        let constant = Poly1dCritic::new(vec![4.2]);
        let dir = generator_update_fogan(&constant, &family, &anchor, tiny, 16, 3).unwrap();
        assert_eq!(dir[0], 0.0);
    }

    #[test]
    fn envelope_reduces_to_naive_when_penalty_vanishes() {
        // WGAN-GP with zero penalty weight is the pure Wasserstein form:
        // descent = ∇_θ E_Q[f].
        let family = GeneratorFamily::uniform_interval(1.5);
        let critic = Poly1dCritic::new(vec![0.3, -1.2, 0.7]);
        let spec = DivergenceSpec::wgan_gp(0.0);
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let env = generator_update_envelope(&spec, &critic, &p, &family, 64, 11).unwrap();
        let naive = generator_update_naive(&critic, &family, 64, 11).unwrap();
        assert!((env[0] - naive[0]).abs() < 1e-12, "{env:?} vs {naive:?}");
    }

    #[test]
    fn envelope_matches_finite_differences_of_estimate() {
        // Dirac family keeps the generated measure deterministic, so the
        // envelope gradient must match central differences of estimate() in θ.
        let spec = DivergenceSpec::penalized_w(0.5);
        let critic = Poly1dCritic::new(vec![0.1, -0.9, 0.4, 0.2]);
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let family = GeneratorFamily::dirac(vec![0.7]);
        let dir = generator_update_envelope(&spec, &critic, &p, &family, 8, 5).unwrap();

        let h = 1e-6;
        let tau = |theta: f64| {
            let q = EmpiricalMeasure::dirac(vec![theta]);
            estimate(&spec, &p, &q, &critic).unwrap().value
        };
        let dtau = (tau(0.7 + h) - tau(0.7 - h)) / (2.0 * h);
        // Descent direction is -∇_θ τ.
        let rel = (dir[0] + dtau).abs() / dtau.abs().max(1e-8);
        assert!(
            rel < 1e-4,
            "envelope {} vs -dτ {} (rel {rel})",
            dir[0],
            -dtau
        );
    }

    #[test]
    fn variance_probe_fogan_is_exactly_zero() {
        let family = GeneratorFamily::uniform_interval(1.0);
        // Mid-training critics are never exactly linear; curvature makes the
        // interpolate penalty genuinely depend on its own draws.
        let critic = Poly1dCritic::new(vec![0.0, -1.5, 0.2, -0.05]);
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let spec = DivergenceSpec::wgan_gp(1.0);
        let (fogan, envelope) = variance_probe(&spec, &critic, &p, &family, 16, 200, 7).unwrap();
        assert_eq!(fogan.batches_used, 200);
        for v in &fogan.per_batch_variance {
            assert_eq!(*v, 0.0);
        }
        // The interpolate penalty resamples per batch, so it carries variance.
        assert!(envelope.per_batch_variance[0] > 0.0);
        for (a, b) in fogan
            .per_batch_variance
            .iter()
            .zip(&envelope.per_batch_variance)
        {
            assert!(a <= b);
        }
    }

    #[test]
    fn variance_probe_zero_penalty_envelope_is_zero_too() {
        let family = GeneratorFamily::uniform_interval(1.0);
        let critic = Poly1dCritic::new(vec![0.0, -1.5, 0.2, -0.05]);
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let spec = DivergenceSpec::wgan_gp(0.0);
        let (_, envelope) = variance_probe(&spec, &critic, &p, &family, 16, 50, 7).unwrap();
        for v in &envelope.per_batch_variance {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn half_grad_equals_envelope_in_the_exact_case() {
        // Linear critic with slope -1/(2λ) on a collinear Dirac pair: the
        // first-order equality case, where the two rules coincide.
        let lambda = 0.8;
        let critic = LinearFixture {
            w: vec![-1.0 / (2.0 * lambda)],
            b: 0.2,
        };
        let p = EmpiricalMeasure::dirac(vec![0.0]);
        let family = GeneratorFamily::dirac(vec![0.7]);
        let spec = DivergenceSpec::first_order(lambda, 1.0);
        let tiny = StretchSpec::new(1e-12).unwrap();
        let half = generator_update_fogan(&critic, &family, &p, tiny, 8, 2).unwrap();
        let env = generator_update_envelope(&spec, &critic, &p, &family, 8, 2).unwrap();
        assert!(
            (half[0] - env[0]).abs() < 1e-6,
            "half {half:?} vs envelope {env:?}"
        );
    }

    struct LinearFixture {
        w: Vec<f64>,
        b: f64,
    }

    impl ExprCritic for LinearFixture {
        fn value_expr<'t>(&self, tape: &'t Tape, x: &[Expr<'t>]) -> Expr<'t> {
            let mut acc = tape.constant(self.b);
            for (&w, &v) in self.w.iter().zip(x) {
                acc = acc + v * w;
            }
            acc
        }
    }

    #[test]
    fn critic_step_ascends_on_its_batch() {
        // With a small enough SGD rate a critic step must not decrease the
        // divergence estimate on the batch it was computed from.
        let mut cfg = TrainConfig::fogan_defaults(5);
        cfg.divergence = DivergenceSpec::penalized_w(0.5);
        cfg.critic_hidden = vec![8];
        cfg.optimizer = OptimizerSpec::Sgd;
        cfg.critic_lr = 1e-4;
        cfg.batch_size = 8;

        let p =
            EmpiricalMeasure::uniform(vec![vec![0.0], vec![0.2], vec![-0.1], vec![0.15]]).unwrap();
        let q =
            EmpiricalMeasure::uniform(vec![vec![2.0], vec![2.2], vec![1.9], vec![2.3]]).unwrap();
        let mut critic = Mlp::init(
            vec![1, 8, 1],
            Activation::Tanh,
            InitScheme::UniformScaled,
            3,
        );
        let before = estimate(&cfg.divergence, &p, &q, &critic).unwrap().value;

        let tape = Tape::new();
        let params = tape.vars(critic.params());
        let q_exprs: Vec<Vec<Expr>> = q.points().iter().map(|x| tape.vars(x)).collect();
        let p_exprs: Vec<Vec<Expr>> = p.points().iter().map(|x| tape.constants(x)).collect();
        let fp: Vec<Expr> = p_exprs
            .iter()
            .map(|x| critic.forward_exprs(&tape, x, &params)[0])
            .collect();
        let fq: Vec<Expr> = q_exprs
            .iter()
            .map(|x| critic.forward_exprs(&tape, x, &params)[0])
            .collect();
        let parts = divergence_parts_expr(
            &tape,
            &cfg.divergence,
            &p,
            &q_exprs,
            q.weights(),
            true,
            &fp,
            &fq,
        );
        let ascent = grad_values(parts.value, &params);
        let mut opt = Optimizer::new(OptimizerSpec::Sgd, ascent.len());
        opt.step(critic.params_mut(), &ascent, cfg.critic_lr);

        let after = estimate(&cfg.divergence, &p, &q, &critic).unwrap().value;
        assert!(after >= before, "critic step decreased {before} -> {after}");
    }

    #[test]
    fn dirac_location_contracts_under_training() {
        let mut cfg = TrainConfig::fogan_defaults(17);
        cfg.divergence = DivergenceSpec::first_order(0.5, 1.0);
        cfg.critic_hidden = vec![12];
        cfg.batch_size = 8;
        cfg.total_iters = 300;
        cfg.critic_lr = 2e-3;
        cfg.generator_lr = 2e-2;

        let target = EmpiricalMeasure::dirac(vec![0.0]);
        let family = GeneratorFamily::dirac(vec![1.0]);
        let trace = train(&cfg, &family, &target, |_, _| true).unwrap();

        let theta_final = trace.family.theta[0].abs();
        assert!(theta_final < 0.15, "theta did not contract: {theta_final}");

        // Monotone after warmup until θ enters the noise band around zero
        // (constant-rate optimizers keep jittering there), and it never
        // leaves that band once inside.
        let mut checkpoints = Vec::new();
        let mut k = 0;
        train(&cfg, &family, &target, |_, f| {
            if k % 50 == 0 {
                checkpoints.push(f.theta[0].abs());
            }
            k += 1;
            true
        })
        .unwrap();
        let floor = 0.05;
        let mut inside = false;
        for pair in checkpoints[1..].windows(2) {
            if inside || pair[0] < floor {
                inside = true;
                assert!(pair[1] < 2.0 * floor, "left the band: {checkpoints:?}");
            } else {
                assert!(
                    pair[1] <= pair[0] + 1e-3,
                    "|θ| not decreasing after warmup: {checkpoints:?}"
                );
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut cfg = TrainConfig::fogan_defaults(23);
        cfg.critic_hidden = vec![8];
        cfg.batch_size = 4;
        cfg.total_iters = 25;
        let target = EmpiricalMeasure::uniform(vec![vec![0.0], vec![0.5]]).unwrap();
        let family =
            GeneratorFamily::affine(vec![vec![0.5]], vec![1.0], LatentSpec::Unit { dim: 1 });
        let a = train(&cfg, &family, &target, |_, _| true).unwrap();
        let b = train(&cfg, &family, &target, |_, _| true).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.family.theta, b.family.theta);
        assert_eq!(a.critic.params(), b.critic.params());
    }
}
