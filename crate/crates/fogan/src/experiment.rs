//! Experiment configuration and the end-to-end runner behind `fogan run`.
//!
//! A config is a flat `key = value` text file (one pair per line, `#`
//! comments, training keys under the `train.` prefix). Each task supplies
//! defaults, so a minimal config is just the task name:
//!
//! ```text
//! task = ring2d
//! output_dir = out/ring
//! train.total_iters = 20000
//! ```
//!
//! A run writes `trace.csv` (streamed, so aborted runs keep their partial
//! trace), `metrics.csv`, a critic checkpoint, the generator parameters, and
//! one SVG line chart per curve. The `FOGAN_SEED` environment variable
//! overrides the config seed.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{decode_rows, markov_toy_corpus, CorpusSource, TextCorpus};
use crate::divergences::DivergenceSpec;
use crate::measures::{EmpiricalMeasure, GeneratorFamily, GeneratorKind, LatentSpec, StretchSpec};
use crate::metrics::{bayes_limit, mode_coverage, ngram_jsd, BayesLimit, NGramDistribution};
use crate::nets::Activation;
use crate::plot::{line_chart, moving_average, Series};
use crate::training::{train, BatchSource, OptimizerSpec, TrainConfig, UpdateRule};
use crate::{Error, Result};

/// Ring toy geometry: eight Gaussians of width [`RING_SIGMA`] on a circle of
/// radius [`RING_RADIUS`].
pub const RING_RADIUS: f64 = 2.0;
pub const RING_SIGMA: f64 = 0.1;
/// Mode-coverage thresholds: a mode counts when ≥ 2% of samples fall within
/// 3σ of its center.
pub const RING_COVER_RADIUS: f64 = 3.0 * RING_SIGMA;
pub const RING_MIN_FRAC: f64 = 0.02;

/// Toy text geometry: 16-character sequences over the 8-symbol alphabet,
/// evaluated with 3-gram JSD (the toy alphabet is small, so 3-grams already
/// give a few hundred possible states).
pub const TOYTEXT_SEQ_LEN: usize = 16;
pub const TOYTEXT_NGRAM: usize = 3;
pub const TOYTEXT_CORPUS_LINES: usize = 4096;
pub const TOYTEXT_CORPUS_SEED: u64 = 1234;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Dirac1d,
    Uniform1d,
    Ring2d,
    ToyText,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirac1d" => Ok(Task::Dirac1d),
            "uniform1d" => Ok(Task::Uniform1d),
            "ring2d" => Ok(Task::Ring2d),
            "toytext" => Ok(Task::ToyText),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub train: TrainConfig,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub output_dir: PathBuf,
    /// Hidden sizes of the network generator (ring and text tasks).
    pub gen_hidden: Vec<usize>,
    /// Latent dimension of the network generator.
    pub gen_latent: usize,
    /// Also run a WGAN-GP baseline and emit its metric curve alongside.
    pub baseline_wgan: bool,
}

impl ExperimentConfig {
    /// Task defaults; every key can be overridden in the config file.
    pub fn defaults(task: Task) -> Self {
        let mut train = TrainConfig::fogan_defaults(1);
        let (eval_every, eval_samples, gen_hidden, gen_latent) = match task {
            Task::Dirac1d => {
                train.divergence = DivergenceSpec::first_order(0.5, 1.0);
                train.critic_hidden = vec![16];
                train.batch_size = 8;
                train.total_iters = 500;
                train.critic_lr = 2e-3;
                train.generator_lr = 2e-2;
                (25, 256, vec![], 1)
            }
            Task::Uniform1d => {
                train.divergence = DivergenceSpec::first_order(0.5, 1.0);
                train.critic_hidden = vec![16];
                train.batch_size = 16;
                train.total_iters = 2000;
                train.critic_lr = 2e-3;
                train.generator_lr = 5e-3;
                (100, 512, vec![], 1)
            }
            Task::Ring2d => {
                train.divergence = DivergenceSpec::first_order(0.5, 1.0);
                train.critic_hidden = vec![24, 24];
                train.batch_size = 24;
                train.total_iters = 20_000;
                train.critic_lr = 2e-3;
                train.generator_lr = 1e-3;
                (250, 2048, vec![24, 24], 2)
            }
            Task::ToyText => {
                train.divergence = DivergenceSpec::first_order(0.1, 1.0);
                train.critic_hidden = vec![48];
                train.batch_size = 16;
                train.total_iters = 10_000;
                train.critic_lr = 3e-3;
                train.generator_lr = 2e-3;
                train.lr_drop_iter = Some(7000);
                (500, 256, vec![64, 64], 4)
            }
        };
        ExperimentConfig {
            task,
            train,
            eval_every,
            eval_samples,
            output_dir: PathBuf::from("out"),
            gen_hidden,
            gen_latent,
            baseline_wgan: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.task == Task::ToyText && self.eval_samples < 100 {
            return Err(Error::Config(
                "eval_samples must be >= 100 for JSD tasks".into(),
            ));
        }
        Ok(())
    }
}

/// Parses the flat `key = value` format. Unknown keys are errors so typos
/// don't silently fall back to defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }

    let task: Task = pairs
        .iter()
        .find(|(k, _)| k == "task")
        .map(|(_, v)| v.parse())
        .transpose()?
        .ok_or_else(|| Error::Config("missing required key 'task'".into()))?;
    let mut cfg = ExperimentConfig::defaults(task);

    for (key, value) in &pairs {
        apply_key(&mut cfg, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let parse_f64 = |v: &str| -> Result<f64> {
        v.parse()
            .map_err(|_| Error::Config(format!("'{v}' is not a number")))
    };
    let parse_usize = |v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| Error::Config(format!("'{v}' is not an integer")))
    };
    let parse_sizes = |v: &str| -> Result<Vec<usize>> {
        if v.trim().is_empty() {
            return Ok(vec![]);
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("'{s}' is not an integer")))
            })
            .collect()
    };

    match key {
        "task" => {}
        "output_dir" => cfg.output_dir = PathBuf::from(value),
        "eval_every" => cfg.eval_every = parse_usize(value)?,
        "eval_samples" => cfg.eval_samples = parse_usize(value)?,
        "seed" => cfg.train.seed = parse_usize(value)? as u64,
        "gen_hidden" => cfg.gen_hidden = parse_sizes(value)?,
        "gen_latent" => cfg.gen_latent = parse_usize(value)?,
        "baseline" => {
            cfg.baseline_wgan = match value {
                "wgan_gp" => true,
                "none" => false,
                other => return Err(Error::Config(format!("unknown baseline '{other}'"))),
            }
        }
        "train.divergence" => {
            let spec = &mut cfg.train.divergence;
            *spec = match value {
                "classic_gan" => DivergenceSpec::classic_gan(),
                "wgan_gp" => DivergenceSpec {
                    gp_weight: if spec.gp_weight > 0.0 {
                        spec.gp_weight
                    } else {
                        1.0
                    },
                    ..DivergenceSpec::wgan_gp(1.0)
                },
                "penalized_w" => DivergenceSpec::penalized_w(spec.lambda.max(1e-9)),
                "first_order_pw" => {
                    DivergenceSpec::first_order(spec.lambda.max(1e-9), spec.mu.max(1e-9))
                }
                other => return Err(Error::Config(format!("unknown divergence '{other}'"))),
            };
        }
        "train.lambda" => cfg.train.divergence.lambda = parse_f64(value)?,
        "train.mu" => cfg.train.divergence.mu = parse_f64(value)?,
        "train.gp_weight" => cfg.train.divergence.gp_weight = parse_f64(value)?,
        "train.update_rule" => cfg.train.update_rule = value.parse()?,
        "train.critic_lr" => cfg.train.critic_lr = parse_f64(value)?,
        "train.generator_lr" => cfg.train.generator_lr = parse_f64(value)?,
        "train.critic_iters" => cfg.train.critic_iters = parse_usize(value)?,
        "train.batch_size" => cfg.train.batch_size = parse_usize(value)?,
        "train.stretch_epsilon" => cfg.train.stretch = StretchSpec::new(parse_f64(value)?)?,
        "train.optimizer" => {
            cfg.train.optimizer = match value {
                "sgd" => OptimizerSpec::Sgd,
                "adam" => OptimizerSpec::adam_default(),
                other => return Err(Error::Config(format!("unknown optimizer '{other}'"))),
            }
        }
        "train.adam_beta1" | "train.adam_beta2" | "train.adam_epsilon" => {
            let x = parse_f64(value)?;
            if let OptimizerSpec::Adam {
                beta1,
                beta2,
                epsilon,
            } = &mut cfg.train.optimizer
            {
                match key {
                    "train.adam_beta1" => *beta1 = x,
                    "train.adam_beta2" => *beta2 = x,
                    _ => *epsilon = x,
                }
            } else {
                return Err(Error::Config(format!(
                    "{key} requires train.optimizer = adam"
                )));
            }
        }
        "train.total_iters" => cfg.train.total_iters = parse_usize(value)?,
        "train.lr_drop_iter" => {
            cfg.train.lr_drop_iter = if value == "none" {
                None
            } else {
                Some(parse_usize(value)?)
            }
        }
        "train.critic_hidden" => cfg.train.critic_hidden = parse_sizes(value)?,
        "train.critic_activation" => cfg.train.critic_activation = value.parse()?,
        other => return Err(Error::Config(format!("unknown config key '{other}'"))),
    }
    Ok(())
}

/// Loads a config file and applies the `FOGAN_SEED` override.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Ok(seed) = std::env::var("FOGAN_SEED") {
        cfg.train.seed = seed
            .parse()
            .map_err(|_| Error::Config(format!("FOGAN_SEED '{seed}' is not an integer")))?;
    }
    Ok(cfg)
}

/// Eight Gaussian centers on the ring.
pub fn ring_centers() -> Vec<Vec<f64>> {
    (0..8)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / 8.0;
            vec![RING_RADIUS * angle.cos(), RING_RADIUS * angle.sin()]
        })
        .collect()
}

/// Batch source drawing from the 8-Gaussian ring mixture.
pub struct RingSource {
    centers: Vec<Vec<f64>>,
}

impl Default for RingSource {
    fn default() -> Self {
        RingSource {
            centers: ring_centers(),
        }
    }
}

fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl BatchSource for RingSource {
    fn dim(&self) -> usize {
        2
    }

    fn batch(&self, size: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
        let points: Vec<Vec<f64>> = (0..size)
            .map(|_| {
                let c = &self.centers[rng.gen_range(0..self.centers.len())];
                vec![
                    c[0] + RING_SIGMA * box_muller(rng),
                    c[1] + RING_SIGMA * box_muller(rng),
                ]
            })
            .collect();
        EmpiricalMeasure::uniform(points).expect("ring batch is valid")
    }
}

/// Batch source drawing fresh samples of `U([0, width])`.
pub struct UniformSource {
    pub width: f64,
}

impl BatchSource for UniformSource {
    fn dim(&self) -> usize {
        1
    }

    fn batch(&self, size: usize, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
        let points = (0..size)
            .map(|_| vec![self.width * rng.gen::<f64>()])
            .collect();
        EmpiricalMeasure::uniform(points).expect("uniform batch is valid")
    }
}

/// Outcome of one `fogan run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub iters_run: usize,
    pub metric_name: String,
    /// `(iter, primary value, optional baseline value)` rows.
    pub metric_rows: Vec<(usize, f64, Option<f64>)>,
    /// Bayes limit of the JSD estimate, for text tasks.
    pub bayes: Option<BayesLimit>,
    pub output_dir: PathBuf,
}

impl RunSummary {
    pub fn final_metric(&self) -> Option<f64> {
        self.metric_rows.last().map(|r| r.1)
    }
}

fn initial_family(cfg: &ExperimentConfig) -> GeneratorFamily {
    match cfg.task {
        Task::Dirac1d => GeneratorFamily::dirac(vec![1.0]),
        Task::Uniform1d => GeneratorFamily::uniform_interval(1.0),
        Task::Ring2d => {
            let mut sizes = vec![cfg.gen_latent];
            sizes.extend_from_slice(&cfg.gen_hidden);
            sizes.push(2);
            let net = crate::nets::Mlp::init(
                sizes,
                Activation::Tanh,
                crate::nets::InitScheme::UniformScaled,
                cfg.train.seed ^ 0x5851_f42d_4c95_7f2d,
            );
            GeneratorFamily::network(
                &net,
                LatentSpec::Symmetric {
                    dim: cfg.gen_latent,
                },
            )
        }
        Task::ToyText => {
            let alphabet = crate::corpus::TOY_ALPHABET.len();
            let mut sizes = vec![cfg.gen_latent];
            sizes.extend_from_slice(&cfg.gen_hidden);
            sizes.push(TOYTEXT_SEQ_LEN * alphabet);
            let net = crate::nets::Mlp::init(
                sizes,
                Activation::Tanh,
                crate::nets::InitScheme::UniformScaled,
                cfg.train.seed ^ 0x5851_f42d_4c95_7f2d,
            );
            GeneratorFamily {
                kind: GeneratorKind::SoftmaxSequence {
                    hidden: cfg.gen_hidden.clone(),
                    positions: TOYTEXT_SEQ_LEN,
                    alphabet,
                    activation: Activation::Tanh,
                },
                theta: net.params().to_vec(),
                latent: LatentSpec::Symmetric {
                    dim: cfg.gen_latent,
                },
            }
        }
    }
}

/// Samples the generator and decodes sequences for text evaluation.
fn generated_sequences(family: &GeneratorFamily, count: usize, seed: u64) -> Result<Vec<Vec<u16>>> {
    let alphabet = match &family.kind {
        GeneratorKind::SoftmaxSequence { alphabet, .. } => *alphabet,
        _ => return Err(Error::Usage("not a sequence generator".into())),
    };
    let samples = family.sample(count, seed)?;
    Ok(samples
        .points()
        .iter()
        .map(|row| decode_rows(row, alphabet))
        .collect())
}

struct MetricContext {
    task: Task,
    eval_samples: usize,
    seed: u64,
    reference: Option<NGramDistribution>,
}

impl MetricContext {
    fn name(&self) -> &'static str {
        match self.task {
            Task::Dirac1d => "abs_theta",
            Task::Uniform1d => "abs_theta_error",
            Task::Ring2d => "mode_coverage",
            Task::ToyText => "jsd3",
        }
    }

    fn evaluate(&self, family: &GeneratorFamily, iter: usize) -> Result<f64> {
        let seed = self.seed ^ (iter as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        match self.task {
            Task::Dirac1d => Ok(family.theta[0].abs()),
            Task::Uniform1d => Ok((family.theta[0] - 2.0).abs()),
            Task::Ring2d => {
                let samples = family.sample(self.eval_samples, seed)?;
                Ok(
                    mode_coverage(&samples, &ring_centers(), RING_COVER_RADIUS, RING_MIN_FRAC)
                        as f64,
                )
            }
            Task::ToyText => {
                let seqs = generated_sequences(family, self.eval_samples, seed)?;
                let gen_dist = NGramDistribution::from_sequences(&seqs, TOYTEXT_NGRAM)?;
                let reference = self
                    .reference
                    .as_ref()
                    .expect("text metric has a reference");
                ngram_jsd(&gen_dist, reference)
            }
        }
    }
}

/// Runs one experiment config end to end; `smooth` applies a trailing moving
/// average to the plotted metric curve (the CSV keeps raw values).
pub fn run_experiment(path: &Path, smooth: usize) -> Result<RunSummary> {
    let cfg = load_config(path)?;
    run_loaded(&cfg, smooth)
}

pub fn run_loaded(cfg: &ExperimentConfig, smooth: usize) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;

    // Task targets. The toy corpus is fixed independently of the run seed so
    // primary and baseline runs see the same language.
    let corpus: Option<TextCorpus> = match cfg.task {
        Task::ToyText => Some(markov_toy_corpus(
            TOYTEXT_CORPUS_LINES,
            TOYTEXT_SEQ_LEN,
            TOYTEXT_CORPUS_SEED,
        )),
        _ => None,
    };

    let mut bayes = None;
    let reference = match (&corpus, cfg.task) {
        (Some(c), Task::ToyText) => {
            bayes = Some(bayes_limit(
                &c.sequences,
                TOYTEXT_NGRAM,
                cfg.eval_samples,
                16,
                cfg.train.seed ^ 0xbf58_476d_1ce4_e5b9,
            )?);
            // Reference sample: a fixed random half of the corpus.
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(0xABCD_EF01);
            let mut idx: Vec<usize> = (0..c.sequences.len()).collect();
            idx.shuffle(&mut rng);
            let sample: Vec<Vec<u16>> = idx[..cfg.eval_samples]
                .iter()
                .map(|&i| c.sequences[i].clone())
                .collect();
            Some(NGramDistribution::from_sequences(&sample, TOYTEXT_NGRAM)?)
        }
        _ => None,
    };

    let metric = MetricContext {
        task: cfg.task,
        eval_samples: cfg.eval_samples,
        seed: cfg.train.seed ^ 0x94d0_49bb_1331_11eb,
        reference,
    };

    let primary = run_one(cfg, &cfg.train, corpus.as_ref(), &metric, "trace.csv")?;
    let baseline = if cfg.baseline_wgan {
        let mut base_train = cfg.train.clone();
        base_train.divergence = DivergenceSpec::wgan_gp(1.0);
        base_train.update_rule = UpdateRule::WganNaive;
        Some(run_one(
            cfg,
            &base_train,
            corpus.as_ref(),
            &metric,
            "trace_baseline.csv",
        )?)
    } else {
        None
    };

    // metrics.csv with one row per evaluation point.
    let metrics_path = cfg.output_dir.join("metrics.csv");
    let mut mf = fs::File::create(&metrics_path)?;
    match &baseline {
        Some(_) => writeln!(mf, "iter,{},{}_baseline", metric.name(), metric.name())?,
        None => writeln!(mf, "iter,{}", metric.name())?,
    }
    let mut metric_rows = Vec::new();
    for (k, &(iter, value)) in primary.metric_points.iter().enumerate() {
        let base = baseline.as_ref().map(|b| b.metric_points[k].1);
        match base {
            Some(bv) => writeln!(mf, "{iter},{value},{bv}")?,
            None => writeln!(mf, "{iter},{value}")?,
        }
        metric_rows.push((iter, value, base));
    }
    if let Some(b) = &bayes {
        let limits_path = cfg.output_dir.join("bayes_limit.csv");
        let mut lf = fs::File::create(&limits_path)?;
        writeln!(lf, "mean,std,sample_size")?;
        writeln!(lf, "{},{},{}", b.mean, b.std, cfg.eval_samples)?;
    }

    // Plots: divergence curve and the metric curve(s).
    let div_points: Vec<(f64, f64)> = primary
        .divergence_points
        .iter()
        .map(|&(i, v)| (i as f64, v))
        .collect();
    line_chart(
        &cfg.output_dir.join("divergence.svg"),
        "divergence estimate",
        &[Series {
            label: "train batch",
            points: &div_points,
        }],
    )?;

    let to_xy = |rows: &[(usize, f64)]| -> Vec<(f64, f64)> {
        rows.iter().map(|&(i, v)| (i as f64, v)).collect()
    };
    let primary_xy = moving_average(&to_xy(&primary.metric_points), smooth.max(1));
    let mut series = vec![Series {
        label: metric.name(),
        points: &primary_xy,
    }];
    let baseline_xy = baseline
        .as_ref()
        .map(|b| moving_average(&to_xy(&b.metric_points), smooth.max(1)));
    if let Some(xy) = &baseline_xy {
        series.push(Series {
            label: "wgan_gp baseline",
            points: xy,
        });
    }
    line_chart(&cfg.output_dir.join("metric.svg"), metric.name(), &series)?;

    Ok(RunSummary {
        iters_run: cfg.train.total_iters,
        metric_name: metric.name().to_string(),
        metric_rows,
        bayes,
        output_dir: cfg.output_dir.clone(),
    })
}

struct OneRun {
    metric_points: Vec<(usize, f64)>,
    divergence_points: Vec<(usize, f64)>,
}

fn run_one(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    corpus: Option<&TextCorpus>,
    metric: &MetricContext,
    trace_name: &str,
) -> Result<OneRun> {
    let family = initial_family(cfg);
    let trace_path = cfg.output_dir.join(trace_name);
    let mut tf = std::io::BufWriter::new(fs::File::create(&trace_path)?);
    writeln!(
        tf,
        "iter,divergence,objective,lambda_penalty,mu_penalty,grad_norm,{}",
        metric.name()
    )?;

    let mut metric_points: Vec<(usize, f64)> = Vec::new();
    let mut divergence_points: Vec<(usize, f64)> = Vec::new();
    let mut callback_err: Option<Error> = None;

    let mut run = |target: &dyn BatchSource| -> Result<crate::training::TrainTrace> {
        train(train_cfg, &family, target, |record, fam| {
            if callback_err.is_some() {
                return false;
            }
            let eval_now =
                record.iter % cfg.eval_every == 0 || record.iter + 1 == train_cfg.total_iters;
            let metric_value = if eval_now {
                match metric.evaluate(fam, record.iter) {
                    Ok(v) => {
                        metric_points.push((record.iter, v));
                        Some(v)
                    }
                    Err(e) => {
                        callback_err = Some(e);
                        None
                    }
                }
            } else {
                None
            };
            divergence_points.push((record.iter, record.divergence));
            let metric_cell = metric_value.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                tf,
                "{},{},{},{},{},{},{}",
                record.iter,
                record.divergence,
                record.objective,
                record.lambda_penalty,
                record.mu_penalty,
                record.grad_norm,
                metric_cell
            );
            callback_err.is_none()
        })
    };

    let trace = match cfg.task {
        Task::Dirac1d => run(&EmpiricalMeasure::dirac(vec![0.0])),
        Task::Uniform1d => run(&UniformSource { width: 2.0 }),
        Task::Ring2d => run(&RingSource::default()),
        Task::ToyText => {
            let corpus = corpus.expect("text task carries a corpus");
            let source = CorpusSource::new(corpus)?;
            run(&source)
        }
    };
    tf.flush()?;
    if let Some(e) = callback_err {
        return Err(e);
    }
    let trace = trace?;

    // Checkpoints: the critic in the binary format, the generator parameters
    // as JSON next to it.
    let stem = trace_name.trim_end_matches(".csv");
    trace
        .critic
        .save(&cfg.output_dir.join(format!("critic_{stem}.ckpt")))?;
    let theta_json = serde_json::to_string(&trace.family.theta)
        .map_err(|e| Error::Config(format!("theta encode: {e}")))?;
    fs::write(
        cfg.output_dir.join(format!("generator_{stem}.json")),
        theta_json,
    )?;

    Ok(OneRun {
        metric_points,
        divergence_points,
    })
}
