//! Multi-objective Bayesian optimization with random scalarizations.
//!
//! Each call to [`suggest`] draws objective weights from the uniform
//! simplex, scalarizes the observed objective vectors, fits a GP to the
//! scalarized values and returns the maximizer of expected improvement over
//! a shifted Halton candidate set refined locally around its best members.
//! The first `warmup` suggestions are uniform samples.

pub mod gp;
pub mod pareto;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gp::{Gp, GpConfig, GpHyper};
pub use pareto::{dominates, hypervolume_2d, pareto_front, Sense};

use crate::math::Real;
use crate::space::{ParamSpace, ParamValue, SpaceError};

#[derive(Debug, Error, PartialEq)]
pub enum OptError {
    #[error("at least two observations are needed to fit a surrogate")]
    TooFewPoints,
    #[error("inconsistent dimensions")]
    Dimension,
    #[error("kernel matrix is ill-conditioned even with jitter")]
    IllConditioned,
    #[error("the search space is empty")]
    EmptySpace,
    #[error(transparent)]
    Space(#[from] SpaceError),
}

pub fn normal_pdf<T: Real>(x: T) -> T {
    (-(x * x) * T::lit(0.5)).exp() / T::lit(std::f64::consts::TAU.sqrt())
}

pub fn normal_cdf<T: Real>(x: T) -> T {
    T::lit(0.5 * libm::erfc(-x.to_f64_lossy() / std::f64::consts::SQRT_2))
}

/// Expected improvement over `best` of a Gaussian with mean `mu` and
/// standard deviation `sigma`, for maximization.
pub fn expected_improvement<T: Real>(mu: T, sigma: T, best: T) -> T {
    let diff = mu - best;
    if sigma <= T::zero() {
        return diff.max(T::zero());
    }
    let g = diff / sigma;
    (diff * normal_cdf(g) + sigma * normal_pdf(g)).max(T::zero())
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    r
}

/// `n` Halton points in `[0,1)^dim`, each shifted modulo one by `shift`.
pub fn halton(n: usize, dim: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    assert!(
        dim <= PRIMES.len(),
        "Halton sequence supports up to {} dimensions",
        PRIMES.len()
    );
    (1..=n as u64)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let v = radical_inverse(i, PRIMES[d]) + shift.get(d).copied().unwrap_or(0.0);
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scalarization {
    /// `-max_i w_i (1 - y_i)` on normalized objectives.
    #[default]
    Tchebyshev,
    /// `sum_i w_i y_i` on normalized objectives.
    WeightedSum,
}

/// Weights drawn uniformly from the probability simplex.
pub fn simplex_weights<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    if p == 1 {
        return vec![1.0];
    }
    let e: Vec<f64> = (0..p).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Scalarizes objective vectors after min-max normalizing each objective so
/// that 1 is the best observed value. Larger results are better.
pub fn scalarize(ys: &[Vec<f64>], senses: &[Sense], weights: &[f64], kind: Scalarization) -> Vec<f64> {
    let p = senses.len();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for y in ys {
        for k in 0..p {
            lo[k] = lo[k].min(y[k]);
            hi[k] = hi[k].max(y[k]);
        }
    }
    ys.iter()
        .map(|y| {
            let norm = (0..p).map(|k| {
                let range = hi[k] - lo[k];
                let u = if range > 0.0 { (y[k] - lo[k]) / range } else { 1.0 };
                match senses[k] {
                    Sense::Max => u,
                    Sense::Min => 1.0 - u,
                }
            });
            match kind {
                Scalarization::Tchebyshev => -norm
                    .zip(weights)
                    .map(|(u, w)| w * (1.0 - u))
                    .fold(f64::NEG_INFINITY, f64::max),
                Scalarization::WeightedSum => norm.zip(weights).map(|(u, w)| w * u).sum(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoSettings {
    /// Uniform samples before the surrogate is used.
    pub warmup: usize,
    /// Quasi-random candidates per acquisition search.
    pub candidates: usize,
    /// Best candidates refined locally.
    pub refine: usize,
    /// Perturbation steps per refined candidate.
    pub refine_steps: usize,
    pub scalarization: Scalarization,
    /// Largest number of observations the surrogate is trained on; beyond
    /// it the best half by scalarized value plus the most recent are kept.
    pub max_points: usize,
    pub gp: GpConfig,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            warmup: 20,
            candidates: 5000,
            refine: 10,
            refine_steps: 20,
            scalarization: Scalarization::Tchebyshev,
            max_points: 120,
            gp: GpConfig::default(),
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub iteration: usize,
    pub config: Vec<ParamValue>,
    /// Mean objective vector over the evaluated worlds.
    pub objectives: Vec<f64>,
    /// Objective vector of each world.
    pub worlds: Vec<Vec<f64>>,
    /// Seed the worlds were derived from.
    pub seed: u64,
    /// Set when every world aborted.
    #[serde(default)]
    pub aborted: bool,
    /// Surrogate hyperparameters used to propose this configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<GpHyper<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub config: Vec<ParamValue>,
    /// Scalarization weights; empty during warm-up.
    pub weights: Vec<f64>,
    pub hyper: Option<GpHyper<f64>>,
}

/// Proposes the next configuration given the evaluated `history` of
/// `(configuration, objective vector)` pairs. `warm` seeds the surrogate's
/// hyperparameter search.
pub fn suggest<R: Rng + ?Sized>(
    space: &ParamSpace,
    senses: &[Sense],
    history: &[(&[ParamValue], &[f64])],
    settings: &BoSettings,
    warm: Option<&GpHyper<f64>>,
    rng: &mut R,
) -> Result<Suggestion, OptError> {
    if space.is_empty() {
        return Err(OptError::EmptySpace);
    }
    space.validate()?;
    if history.len() < settings.warmup.max(2) {
        return Ok(Suggestion {
            config: space.sample_uniform(rng),
            weights: Vec::new(),
            hyper: None,
        });
    }
    if history.iter().any(|(_, y)| y.len() != senses.len()) {
        return Err(OptError::Dimension);
    }
    let weights = simplex_weights(senses.len(), rng);
    let ys: Vec<Vec<f64>> = history.iter().map(|(_, y)| y.to_vec()).collect();
    let g = scalarize(&ys, senses, &weights, settings.scalarization);
    let keep = training_subset(&g, settings.max_points);
    let x: Vec<Vec<f64>> = keep.iter().map(|&i| space.encode(history[i].0)).collect();
    let t: Vec<f64> = keep.iter().map(|&i| g[i]).collect();
    let gp = Gp::fit(&x, &t, &settings.gp, warm, rng)?;
    let best = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let acquisition = |u: &[f64]| {
        let (m, v) = gp.predict(u);
        expected_improvement(m, v.sqrt(), best)
    };
    let snap = |u: &[f64]| space.encode(&space.decode(u));

    let dim = space.encoded_dim();
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let mut scored: Vec<(f64, Vec<f64>)> = halton(settings.candidates.max(1), dim, &shift)
        .into_iter()
        .map(|u| {
            let u = snap(&u);
            (acquisition(&u), u)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(settings.refine.max(1));
    let step_noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut winner = scored[0].clone();
    for (mut value, mut u) in scored {
        let mut scale = 0.05;
        for _ in 0..settings.refine_steps {
            let trial: Vec<f64> = u
                .iter()
                .map(|c| (c + scale * step_noise.sample(rng)).clamp(0.0, 1.0))
                .collect();
            let trial = snap(&trial);
            let a = acquisition(&trial);
            if a > value {
                value = a;
                u = trial;
            } else {
                scale *= 0.7;
            }
        }
        if value > winner.0 {
            winner = (value, u);
        }
    }
    Ok(Suggestion {
        config: space.decode(&winner.1),
        weights,
        hyper: Some(gp.hyper().clone()),
    })
}

/// Indices kept for the surrogate: everything when it fits, otherwise the
/// best half by `g` plus the most recent of the rest, in index order.
fn training_subset(g: &[f64], max_points: usize) -> Vec<usize> {
    let n = g.len();
    if n <= max_points.max(2) {
        return (0..n).collect();
    }
    let mut by_value: Vec<usize> = (0..n).collect();
    by_value.sort_by(|&a, &b| {
        g[b].partial_cmp(&g[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; n];
    for &i in by_value.iter().take(max_points / 2) {
        keep[i] = true;
    }
    let mut count = max_points / 2;
    for i in (0..n).rev() {
        if count >= max_points {
            break;
        }
        if !keep[i] {
            keep[i] = true;
            count += 1;
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}
