//! Ensemble estimates of `E‖U_n‖²` with normal-approximation confidence
//! intervals, and exponential decay-rate fitting.
//!
//! Paths are processed in fixed blocks of [`BLOCK_PATHS`]; each block is
//! reduced in path order and blocks are merged in block order, so results do
//! not depend on the thread count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSystem, StateVector};
use crate::integrators::{integrate, StepScheme};
use crate::noise::{generate_increments, NoisePathConfig};
use crate::par::{self, Exec};

/// Paths per reduction block.
pub const BLOCK_PATHS: usize = 64;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub base_seed: u64,
    pub tau: f64,
    pub n_steps: usize,
    pub scheme: StepScheme,
    #[serde(skip)]
    pub exec: Exec,
}

impl EnsembleConfig {
    pub fn new(paths: usize, base_seed: u64, tau: f64, n_steps: usize, scheme: StepScheme) -> Self {
        Self {
            paths,
            base_seed,
            tau,
            n_steps,
            scheme,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

/// Running mean and sum of squared deviations per step (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMoments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub diverged: usize,
}

impl BlockMoments {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            diverged: 0,
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    fn merge(&mut self, other: &BlockMoments) {
        self.diverged += other.diverged;
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            let diverged = self.diverged;
            *self = other.clone();
            self.diverged = diverged;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }
}

/// Monte Carlo estimate of `t ↦ E‖U(t)‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSquareCurve {
    pub times: Vec<f64>,
    pub mean_sq: Vec<f64>,
    /// Half-width of the 95% normal-approximation interval.
    pub ci_halfwidth: Vec<f64>,
    pub paths: usize,
    pub diverged_count: usize,
    /// Per-block means kept for jackknife error bars.
    #[serde(skip)]
    pub blocks: Vec<(usize, Vec<f64>)>,
}

impl MeanSquareCurve {
    pub fn len(&self) -> usize {
        self.mean_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_sq.is_empty()
    }

    pub fn ci_low(&self) -> Vec<f64> {
        self.mean_sq
            .iter()
            .zip(&self.ci_halfwidth)
            .map(|(m, h)| m - h)
            .collect()
    }

    pub fn ci_high(&self) -> Vec<f64> {
        self.mean_sq
            .iter()
            .zip(&self.ci_halfwidth)
            .map(|(m, h)| m + h)
            .collect()
    }

    /// Builds a curve from deterministic values (no error bars), e.g. for fitting tests.
    pub fn from_values(times: Vec<f64>, mean_sq: Vec<f64>) -> Self {
        let n = mean_sq.len();
        Self {
            times,
            mean_sq,
            ci_halfwidth: vec![0.0; n],
            paths: 1,
            diverged_count: 0,
            blocks: Vec::new(),
        }
    }
}

/// Runs `cfg.paths` independent trajectories from `u0` and aggregates `‖U_n‖²`.
///
/// Path `p` uses noise seeded by `(cfg.base_seed, p)`. Diverged paths are
/// dropped from the mean and counted separately.
pub fn mean_square_curve(
    sys: &GalerkinSystem,
    cfg: &EnsembleConfig,
    u0: &StateVector,
) -> Result<MeanSquareCurve> {
    let deterministic = sys.beta1() == 0.0;
    if cfg.paths == 0 || (cfg.paths < 2 && !deterministic) {
        return Err(Error::Invalid(format!(
            "ensemble needs at least 2 paths with noise, got {}",
            cfg.paths
        )));
    }
    if cfg.n_steps == 0 {
        return Err(Error::Invalid("ensemble needs at least one step".into()));
    }
    let len = cfg.n_steps + 1;
    let n_blocks = cfg.paths.div_ceil(BLOCK_PATHS);
    let blocks = par::map_indexed(n_blocks, cfg.exec, |b| -> Result<BlockMoments> {
        let mut acc = BlockMoments::new(len);
        let first = b * BLOCK_PATHS;
        let last = (first + BLOCK_PATHS).min(cfg.paths);
        for p in first..last {
            let noise_cfg = NoisePathConfig {
                m: sys.m(),
                tau: cfg.tau,
                n_steps: cfg.n_steps,
                base_seed: cfg.base_seed,
                path_index: p as u64,
            };
            let inc = if deterministic {
                crate::noise::NoiseIncrements::zeros(noise_cfg)
            } else {
                generate_increments(&sys.alpha.chol, &noise_cfg)?
            };
            let traj = match integrate(sys, cfg.scheme, u0, &inc, cfg.tau, false) {
                Ok(t) => t,
                Err(Error::NonFinite { .. }) => {
                    acc.diverged += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if traj.diverged() {
                acc.diverged += 1;
            } else {
                acc.push(&traj.norm_sq);
            }
        }
        Ok(acc)
    });
    let mut total = BlockMoments::new(len);
    let mut kept = Vec::with_capacity(n_blocks);
    for b in blocks {
        let b = b?;
        total.merge(&b);
        if b.count > 0 {
            kept.push((b.count, b.mean));
        }
    }
    if total.count == 0 {
        return Err(Error::AllDiverged(cfg.paths));
    }
    let count = total.count as f64;
    let ci_halfwidth = total
        .m2
        .iter()
        .map(|&m2| {
            if total.count < 2 {
                0.0
            } else {
                Z95 * (m2.max(0.0) / (count - 1.0) / count).sqrt()
            }
        })
        .collect();
    Ok(MeanSquareCurve {
        times: (0..len).map(|n| n as f64 * cfg.tau).collect(),
        mean_sq: total.mean,
        ci_halfwidth,
        paths: total.count,
        diverged_count: total.diverged,
        blocks: kept,
    })
}

/// Least-squares fit of `log m̂_n = c + rate · t_n` over a tail window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Residual-based standard error of the slope.
    pub stderr: f64,
    /// Delete-one-block jackknife standard error over Monte Carlo blocks, when available.
    pub jackknife_stderr: Option<f64>,
    pub points: usize,
}

impl DecayFit {
    /// The larger of the two error bars.
    pub fn combined_stderr(&self) -> f64 {
        self.stderr.max(self.jackknife_stderr.unwrap_or(0.0))
    }

    /// `rate + 2·stderr < 0`.
    pub fn is_decaying(&self) -> bool {
        self.rate + 2.0 * self.combined_stderr() < 0.0
    }
}

fn window_start(len: usize, window: f64) -> Result<usize> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Invalid(format!(
            "window fraction must lie in (0, 1], got {window}"
        )));
    }
    let points = ((len as f64) * window).ceil() as usize;
    if points < 10 {
        return Err(Error::Invalid(format!(
            "fit window has {points} points, need >= 10"
        )));
    }
    Ok(len - points.min(len))
}

fn ols(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - tm) * (v - tm)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rss: f64 = t
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let stderr = if t.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, stderr)
}

/// Fits the exponential rate of the last `window` fraction of the curve.
pub fn decay_rate_fit(curve: &MeanSquareCurve, window: f64) -> Result<DecayFit> {
    let start = window_start(curve.len(), window)?;
    let t = &curve.times[start..];
    let mut y = Vec::with_capacity(t.len());
    for (i, &v) in curve.mean_sq[start..].iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositive(start + i));
        }
        y.push(v.ln());
    }
    let (rate, intercept, stderr) = ols(t, &y);

    let jackknife_stderr = if curve.blocks.len() >= 2 {
        let total: usize = curve.blocks.iter().map(|b| b.0).sum();
        let g = curve.blocks.len() as f64;
        let mut rates = Vec::with_capacity(curve.blocks.len());
        for (nb, mb) in &curve.blocks {
            let rest = (total - nb) as f64;
            let mut yy = Vec::with_capacity(t.len());
            for (&all, &own) in curve.mean_sq[start..].iter().zip(&mb[start..]) {
                let m = (all * total as f64 - own * *nb as f64) / rest;
                if !(m > 0.0) {
                    break;
                }
                yy.push(m.ln());
            }
            if yy.len() == t.len() {
                rates.push(ols(t, &yy).0);
            }
        }
        if rates.len() == curve.blocks.len() {
            let mean = rates.iter().sum::<f64>() / g;
            let var = (g - 1.0) / g * rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
            Some(var.sqrt())
        } else {
            None
        }
    } else {
        None
    };

    Ok(DecayFit {
        rate,
        intercept,
        stderr,
        jackknife_stderr,
        points: t.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceModel;
    use crate::galerkin::SystemSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_exponential_fit() {
        let times: Vec<f64> = (0..100).map(|n| n as f64 * 0.01).collect();
        let values = times.iter().map(|t| (-3.0 * t).exp()).collect();
        let curve = MeanSquareCurve::from_values(times, values);
        let fit = decay_rate_fit(&curve, 0.5).unwrap();
        assert_abs_diff_eq!(fit.rate, -3.0, epsilon = 1e-10);
        assert!(fit.stderr < 1e-10);
        assert_eq!(fit.points, 50);
        assert!(fit.is_decaying());
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let times: Vec<f64> = (0..30).map(|n| n as f64).collect();
        let mut values: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let curve = MeanSquareCurve::from_values(times.clone(), values.clone());
        assert!(decay_rate_fit(&curve, 0.2).is_err());
        assert!(decay_rate_fit(&curve, 0.0).is_err());
        values[25] = 0.0;
        let curve = MeanSquareCurve::from_values(times, values);
        assert_eq!(decay_rate_fit(&curve, 0.5), Err(Error::NonPositive(25)));
    }

    #[test]
    fn deterministic_curve_has_zero_ci() {
        let model = CovarianceModel::power_law(2.0, 3).unwrap();
        let sys = GalerkinSystem::assemble(SystemSpec::new(3, 3, 0.0, 0.0, model)).unwrap();
        let u0 = StateVector(vec![1.0, 0.5, 0.1]);
        let cfg = EnsembleConfig::new(100, 7, 0.01, 20, StepScheme::ImplicitEuler);
        let curve = mean_square_curve(&sys, &cfg, &u0).unwrap();
        assert!(curve.ci_halfwidth.iter().all(|&h| h == 0.0));
        let single = mean_square_curve(&sys, &EnsembleConfig { paths: 1, ..cfg }, &u0).unwrap();
        assert_eq!(single.mean_sq, curve.mean_sq);
    }

    #[test]
    fn one_noisy_path_is_rejected() {
        let model = CovarianceModel::power_law(2.0, 3).unwrap();
        let sys = GalerkinSystem::assemble(SystemSpec::new(3, 3, 0.0, 1.0, model)).unwrap();
        let cfg = EnsembleConfig::new(1, 7, 0.01, 20, StepScheme::ImplicitEuler);
        assert!(mean_square_curve(&sys, &cfg, &StateVector::zeros(3)).is_err());
    }

    #[test]
    fn reproducible_across_backends() {
        let model = CovarianceModel::power_law(1.5, 4).unwrap();
        let sys = GalerkinSystem::assemble(SystemSpec::new(4, 4, 1.0, 1.0, model)).unwrap();
        let u0 = StateVector(vec![1.0, 0.0, 0.2, 0.0]);
        let cfg = EnsembleConfig::new(300, 11, 0.01, 30, StepScheme::ImplicitEuler);
        let a = mean_square_curve(&sys, &cfg, &u0).unwrap();
        let b = mean_square_curve(&sys, &cfg.with_exec(Exec::Sequential), &u0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.blocks.len(), 5);
    }

    #[test]
    fn all_diverged_is_an_error() {
        let model = CovarianceModel::weights(vec![1.0]).unwrap();
        let sys = GalerkinSystem::assemble(SystemSpec::new(1, 1, 0.0, 0.0, model)).unwrap();
        let cfg = EnsembleConfig::new(3, 1, 0.5, 500, StepScheme::ExplicitEuler);
        assert_eq!(
            mean_square_curve(&sys, &cfg, &StateVector(vec![1.0])),
            Err(Error::AllDiverged(3))
        );
    }

    #[test]
    fn welford_merge_matches_direct() {
        let data: Vec<Vec<f64>> = (0..37)
            .map(|i| vec![i as f64 * 0.3, (i as f64).sin()])
            .collect();
        let mut whole = BlockMoments::new(2);
        data.iter().for_each(|d| whole.push(d));
        let mut a = BlockMoments::new(2);
        let mut b = BlockMoments::new(2);
        data[..10].iter().for_each(|d| a.push(d));
        data[10..].iter().for_each(|d| b.push(d));
        a.merge(&b);
        for k in 0..2 {
            assert_abs_diff_eq!(a.mean[k], whole.mean[k], epsilon = 1e-12);
            assert_abs_diff_eq!(a.m2[k], whole.m2[k], epsilon = 1e-10);
        }
    }
}
