//! Gaussian-process regression with a Matérn 5/2 ARD kernel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::OptError;
use crate::math::{Cholesky, Matrix, Real};

/// Kernel hyperparameters in log space: one log length scale per input,
/// then log signal variance and log noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper<T> {
    pub log_lengths: Vec<T>,
    pub log_signal: T,
    pub log_noise: T,
}

impl<T: Real> GpHyper<T> {
    pub fn new(lengths: &[T], signal: T, noise: T) -> Self {
        Self {
            log_lengths: lengths.iter().map(|l| l.ln()).collect(),
            log_signal: signal.ln(),
            log_noise: noise.ln(),
        }
    }

    pub fn signal(&self) -> T {
        self.log_signal.exp()
    }

    pub fn noise(&self) -> T {
        self.log_noise.exp()
    }

    fn to_vec(&self) -> Vec<T> {
        let mut v = self.log_lengths.clone();
        v.push(self.log_signal);
        v.push(self.log_noise);
        v
    }

    fn from_vec(v: &[T]) -> Self {
        let d = v.len() - 2;
        Self {
            log_lengths: v[..d].to_vec(),
            log_signal: v[d],
            log_noise: v[d + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Gradient-ascent starts, including the warm start when given.
    pub restarts: usize,
    /// Adam steps per start.
    pub steps: usize,
    pub learning_rate: f64,
    /// Bounds of the length scales, signal and noise variances (on
    /// standardized targets).
    pub length_bounds: [f64; 2],
    pub signal_bounds: [f64; 2],
    pub noise_bounds: [f64; 2],
    /// Subtract the mean and divide by the standard deviation of the targets.
    pub standardize: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            steps: 40,
            learning_rate: 0.08,
            length_bounds: [0.02, 5.0],
            signal_bounds: [0.05, 20.0],
            noise_bounds: [1e-6, 1.0],
            standardize: true,
        }
    }
}

impl GpConfig {
    fn log_bounds(&self, dim: usize) -> Vec<[f64; 2]> {
        let lb = |b: [f64; 2]| [b[0].ln(), b[1].ln()];
        let mut v = vec![lb(self.length_bounds); dim];
        v.push(lb(self.signal_bounds));
        v.push(lb(self.noise_bounds));
        v
    }
}

/// Matérn 5/2 covariance of two points.
pub fn matern52<T: Real>(a: &[T], b: &[T], lengths: &[T], signal: T) -> T {
    let r = scaled_distance(a, b, lengths);
    let s5 = T::lit(5f64.sqrt());
    signal * (T::one() + s5 * r + T::lit(5.0 / 3.0) * r * r) * (-s5 * r).exp()
}

fn scaled_distance<T: Real>(a: &[T], b: &[T], lengths: &[T]) -> T {
    a.iter()
        .zip(b)
        .zip(lengths)
        .map(|((x, y), l)| {
            let d = (*x - *y) / *l;
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// Fitted Gaussian process.
#[derive(Debug, Clone)]
pub struct Gp<T: Real> {
    x: Vec<Vec<T>>,
    hyper: GpHyper<T>,
    lengths: Vec<T>,
    chol: Cholesky<T>,
    alpha: Vec<T>,
    y_mean: T,
    y_scale: T,
    jitter: T,
}

struct Factored<T: Real> {
    chol: Cholesky<T>,
    alpha: Vec<T>,
    jitter: T,
    kernel: Matrix<T>,
}

fn factor<T: Real>(x: &[Vec<T>], y: &[T], hyper: &GpHyper<T>) -> Result<Factored<T>, OptError> {
    let n = x.len();
    let lengths: Vec<T> = hyper.log_lengths.iter().map(|l| l.exp()).collect();
    let signal = hyper.signal();
    let kernel = Matrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], &lengths, signal));
    let noise = hyper.noise();
    let mut jitter = T::zero();
    let mut next = signal * T::lit(1e-10);
    loop {
        let mut k = kernel.clone();
        for i in 0..n {
            k[(i, i)] += noise + jitter;
        }
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(y);
            return Ok(Factored {
                chol,
                alpha,
                jitter,
                kernel,
            });
        }
        if next > signal * T::lit(1e-2) {
            return Err(OptError::IllConditioned);
        }
        jitter = next;
        next *= T::lit(10.0);
    }
}

/// Log marginal likelihood and its gradient with respect to the log
/// hyperparameters.
pub fn log_marginal_likelihood<T: Real>(x: &[Vec<T>], y: &[T], hyper: &GpHyper<T>) -> Result<(T, Vec<T>), OptError> {
    let n = x.len();
    let d = hyper.log_lengths.len();
    let f = factor(x, y, hyper)?;
    let half = T::lit(0.5);
    let fit: T = y.iter().zip(&f.alpha).map(|(a, b)| *a * *b).sum();
    let lml = -half * fit - half * f.chol.log_det() - half * T::lit(n as f64) * T::lit(std::f64::consts::TAU).ln();
    // W = alpha alpha^T - K^-1
    let kinv = f.chol.inverse();
    let w = |i: usize, j: usize| f.alpha[i] * f.alpha[j] - kinv[(i, j)];
    let lengths: Vec<T> = hyper.log_lengths.iter().map(|l| l.exp()).collect();
    let signal = hyper.signal();
    let s5 = T::lit(5f64.sqrt());
    let mut grad = vec![T::zero(); d + 2];
    for i in 0..n {
        grad[d] += half * w(i, i) * f.kernel[(i, i)];
        grad[d + 1] += half * w(i, i) * hyper.noise();
        for j in 0..i {
            let wij = w(i, j);
            grad[d] += wij * f.kernel[(i, j)];
            let r = scaled_distance(&x[i], &x[j], &lengths);
            let base = signal * T::lit(5.0 / 3.0) * (T::one() + s5 * r) * (-s5 * r).exp();
            for k in 0..d {
                let delta = (x[i][k] - x[j][k]) / lengths[k];
                grad[k] += wij * base * delta * delta;
            }
        }
    }
    Ok((lml, grad))
}

impl<T: Real> Gp<T> {
    /// Posterior under fixed hyperparameters and raw (unstandardized) targets.
    pub fn with_hyper(x: &[Vec<T>], y: &[T], hyper: GpHyper<T>) -> Result<Self, OptError> {
        Self::build(x, y, hyper, T::zero(), T::one())
    }

    fn build(x: &[Vec<T>], y: &[T], hyper: GpHyper<T>, y_mean: T, y_scale: T) -> Result<Self, OptError> {
        if x.is_empty() || x.len() != y.len() {
            return Err(OptError::TooFewPoints);
        }
        let dim = x[0].len();
        if hyper.log_lengths.len() != dim || x.iter().any(|r| r.len() != dim) {
            return Err(OptError::Dimension);
        }
        let ys: Vec<T> = y.iter().map(|v| (*v - y_mean) / y_scale).collect();
        let f = factor(x, &ys, &hyper)?;
        Ok(Self {
            x: x.to_vec(),
            lengths: hyper.log_lengths.iter().map(|l| l.exp()).collect(),
            hyper,
            chol: f.chol,
            alpha: f.alpha,
            y_mean,
            y_scale,
            jitter: f.jitter,
        })
    }

    /// Fits the hyperparameters by multi-start Adam ascent of the log
    /// marginal likelihood. `warm` is used as the first start when given.
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<T>],
        y: &[T],
        config: &GpConfig,
        warm: Option<&GpHyper<T>>,
        rng: &mut R,
    ) -> Result<Self, OptError> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(OptError::TooFewPoints);
        }
        let dim = x[0].len();
        let n = T::lit(y.len() as f64);
        let (mut y_mean, mut y_scale) = (T::zero(), T::one());
        if config.standardize {
            y_mean = y.iter().copied().sum::<T>() / n;
            let var = y.iter().map(|v| (*v - y_mean) * (*v - y_mean)).sum::<T>() / n;
            if var > T::zero() {
                y_scale = var.sqrt();
            }
        }
        let ys: Vec<T> = y.iter().map(|v| (*v - y_mean) / y_scale).collect();
        let bounds = config.log_bounds(dim);
        let clamp = |v: &mut Vec<T>| {
            for (p, b) in v.iter_mut().zip(&bounds) {
                *p = p.max(T::lit(b[0])).min(T::lit(b[1]));
            }
        };
        let mut starts: Vec<Vec<T>> = Vec::new();
        if let Some(w) = warm.filter(|w| w.log_lengths.len() == dim) {
            let mut v = w.to_vec();
            clamp(&mut v);
            starts.push(v);
        } else {
            let mut v = vec![T::lit(0.3f64.ln()); dim];
            v.push(T::zero());
            v.push(T::lit(0.01f64.ln()));
            clamp(&mut v);
            starts.push(v);
        }
        while starts.len() < config.restarts.max(1) {
            starts.push(bounds.iter().map(|b| T::lit(rng.gen_range(b[0]..b[1]))).collect());
        }
        let mut best: Option<(T, Vec<T>)> = None;
        let lr = T::lit(config.learning_rate);
        let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
        for start in starts {
            let mut theta = start;
            let mut m = vec![T::zero(); theta.len()];
            let mut v = vec![T::zero(); theta.len()];
            let mut local: Option<(T, Vec<T>)> = None;
            for step in 1..=config.steps.max(1) {
                let Ok((lml, grad)) = log_marginal_likelihood(x, &ys, &GpHyper::from_vec(&theta)) else {
                    break;
                };
                if local.as_ref().is_none_or(|(b, _)| lml > *b) {
                    local = Some((lml, theta.clone()));
                }
                let t = T::lit(step as f64);
                for k in 0..theta.len() {
                    m[k] = b1 * m[k] + (T::one() - b1) * grad[k];
                    v[k] = b2 * v[k] + (T::one() - b2) * grad[k] * grad[k];
                    let mh = m[k] / (T::one() - b1.powf(t));
                    let vh = v[k] / (T::one() - b2.powf(t));
                    theta[k] += lr * mh / (vh.sqrt() + eps);
                }
                clamp(&mut theta);
            }
            if let Ok((lml, _)) = log_marginal_likelihood(x, &ys, &GpHyper::from_vec(&theta)) {
                if local.as_ref().is_none_or(|(b, _)| lml > *b) {
                    local = Some((lml, theta));
                }
            }
            if let Some((lml, th)) = local {
                if lml.is_finite() && best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, th));
                }
            }
        }
        let (_, theta) = best.ok_or(OptError::IllConditioned)?;
        Self::build(x, y, GpHyper::from_vec(&theta), y_mean, y_scale)
    }

    pub fn hyper(&self) -> &GpHyper<T> {
        &self.hyper
    }

    /// Diagonal jitter that was needed to factor the kernel matrix.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    /// Posterior mean and latent variance at `q`.
    pub fn predict(&self, q: &[T]) -> (T, T) {
        let signal = self.hyper.signal();
        let ks: Vec<T> = self.x.iter().map(|xi| matern52(xi, q, &self.lengths, signal)).collect();
        let mean: T = ks.iter().zip(&self.alpha).map(|(a, b)| *a * *b).sum();
        let v = self.chol.solve_lower(&ks);
        let var = (signal - v.iter().map(|e| *e * *e).sum::<T>()).max(T::zero());
        (mean * self.y_scale + self.y_mean, var * self.y_scale * self.y_scale)
    }

    /// Noise variance in target units.
    pub fn noise_variance(&self) -> T {
        self.hyper.noise() * self.y_scale * self.y_scale
    }

    pub fn signal_variance(&self) -> T {
        self.hyper.signal() * self.y_scale * self.y_scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let x: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64 / 8.0, ((i * 3) % 8) as f64 / 8.0])
            .collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let h = GpHyper::new(&[0.4, 0.7], 1.3, 0.05);
        let (_, g) = log_marginal_likelihood(&x, &y, &h).unwrap();
        let theta = h.to_vec();
        for k in 0..theta.len() {
            let e = 1e-6;
            let mut p = theta.clone();
            p[k] += e;
            let mut m = theta.clone();
            m[k] -= e;
            let fp = log_marginal_likelihood(&x, &y, &GpHyper::from_vec(&p)).unwrap().0;
            let fm = log_marginal_likelihood(&x, &y, &GpHyper::from_vec(&m)).unwrap().0;
            let fd = (fp - fm) / (2.0 * e);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn fit_improves_on_the_initial_guess() {
        let x: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let gp = Gp::fit(&x, &y, &GpConfig::default(), None, &mut rng).unwrap();
        let (m, _) = gp.predict(&[0.5]);
        assert!((m - 3f64.sin()).abs() < 0.05, "{m}");
    }

    #[test]
    fn single_precision_predicts() {
        let x = vec![vec![0.0f32], vec![1.0f32]];
        let gp = Gp::with_hyper(&x, &[1.0f32, -1.0], GpHyper::new(&[0.5f32], 1.0, 1e-4)).unwrap();
        let (m, v) = gp.predict(&[0.0]);
        assert!((m - 1.0).abs() < 1e-2 && v < 1e-2);
    }
}
