//! Mean-square stability conditions, scheme amplification bounds and
//! `(β1, β0)` region sweeps.

use serde::{Deserialize, Serialize};

use crate::covariance::{self, CovarianceModel, DEFAULT_KAPPA_GRID};
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSystem, StateVector};
use crate::integrators::StepScheme;
use crate::montecarlo::{decay_rate_fit, mean_square_curve, EnsembleConfig, MeanSquareCurve};
use crate::noise::splitmix64;
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    /// The condition cannot be evaluated, e.g. `κ = ∞`.
    Inapplicable,
}

impl Verdict {
    fn from_margin(margin: f64) -> Self {
        if margin > 0.0 {
            Verdict::Stable
        } else {
            Verdict::Unstable
        }
    }

    pub fn is_stable(self) -> bool {
        self == Verdict::Stable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactCheck {
    /// `2(λ1 + β0) − β1²κ`, absent when `κ` is not finite.
    pub margin: Option<f64>,
    pub verdict: Verdict,
}

/// Continuous-time condition `2(λ1 + β0) − β1²κ > 0`.
pub fn check_exact(lambda1: f64, beta0: f64, beta1: f64, kappa: f64) -> Result<ExactCheck> {
    if !kappa.is_finite() {
        return Ok(ExactCheck {
            margin: None,
            verdict: Verdict::Inapplicable,
        });
    }
    if kappa < 0.0 {
        return Err(Error::Domain(format!(
            "kappa must be nonnegative, got {kappa}"
        )));
    }
    let margin = 2.0 * (lambda1 + beta0) - beta1 * beta1 * kappa;
    Ok(ExactCheck {
        margin: Some(margin),
        verdict: Verdict::from_margin(margin),
    })
}

/// Per-step mean-square growth bound of implicit Euler,
/// `(1 + τκ̃2β1²) / (1 + τ(λ1 + β0))²`.
pub fn implicit_amplification(
    tau: f64,
    lambda1: f64,
    beta0: f64,
    beta1: f64,
    kappa_tilde2: f64,
) -> Result<f64> {
    let denom = 1.0 + tau * (lambda1 + beta0);
    if denom <= 0.0 {
        return Err(Error::IllPosed {
            mode: 1,
            value: denom,
        });
    }
    Ok((1.0 + tau * kappa_tilde2 * beta1 * beta1) / (denom * denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitCheck {
    /// `max_k (1 − τ d_k)² + τκ̃2β1²`.
    pub lhs: f64,
    pub stable: bool,
}

/// Explicit Euler condition on the full drift diagonal `d_k = λ_k + β0`.
pub fn check_explicit(
    tau: f64,
    drift_diag: &[f64],
    beta1: f64,
    kappa_tilde2: f64,
) -> ExplicitCheck {
    let worst = drift_diag
        .iter()
        .map(|d| (1.0 - tau * d).powi(2))
        .fold(0.0, f64::max);
    let lhs = worst + tau * kappa_tilde2 * beta1 * beta1;
    ExplicitCheck {
        lhs,
        stable: lhs < 1.0,
    }
}

/// Every stability quantity for one system and step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub lambda1: f64,
    pub beta0: f64,
    pub beta1: f64,
    /// `None` when the kernel diagonal is unbounded.
    pub kappa: Option<f64>,
    pub kappa_finite: bool,
    /// `Σ q_j` for diagonal models.
    pub weight_sum: Option<f64>,
    pub kappa_tilde2: f64,
    pub rho_at_m: f64,
    pub cond_exact: Option<f64>,
    pub verdict_exact: Verdict,
    pub cond_spectral: f64,
    pub verdict_spectral: bool,
    /// `None` when `1 + τ(λ1 + β0) <= 0`.
    pub implicit_ratio: Option<f64>,
    pub verdict_implicit: bool,
    pub explicit_lhs: f64,
    pub verdict_explicit: bool,
}

/// Evaluates all conditions for `sys` at step size `tau`.
pub fn stability_report(sys: &GalerkinSystem, tau: f64) -> Result<StabilityReport> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!(
            "step size must be positive, got {tau}"
        )));
    }
    let model = &sys.spec.covariance;
    let (n, m) = (sys.n(), sys.m());
    let kappa = covariance::kappa(model, DEFAULT_KAPPA_GRID)?;
    let tensor = crate::basis::build_tensor(n, m)?;
    let kappa_tilde2 = covariance::kappa_tilde2(&sys.alpha, &tensor, n, m)?;
    let rho_at_m = covariance::rho(model, m, 2 * m.max(1))?;
    let lambda1 = sys.laplacian()[0];
    let (beta0, beta1) = (sys.beta0(), sys.beta1());
    let exact = check_exact(lambda1, beta0, beta1, kappa)?;
    let cond_spectral = 2.0 * (lambda1 + beta0) - beta1 * beta1 * kappa_tilde2;
    let implicit_ratio = implicit_amplification(tau, lambda1, beta0, beta1, kappa_tilde2).ok();
    let explicit = check_explicit(tau, &sys.drift_diag(), beta1, kappa_tilde2);
    Ok(StabilityReport {
        n,
        m,
        tau,
        lambda1,
        beta0,
        beta1,
        kappa: kappa.is_finite().then_some(kappa),
        kappa_finite: kappa.is_finite(),
        weight_sum: model.weight_sum(),
        kappa_tilde2,
        rho_at_m,
        cond_exact: exact.margin,
        verdict_exact: exact.verdict,
        cond_spectral,
        verdict_spectral: cond_spectral > 0.0,
        implicit_ratio,
        verdict_implicit: implicit_ratio.is_some_and(|r| r < 1.0),
        explicit_lhs: explicit.lhs,
        verdict_explicit: explicit.stable,
    })
}

/// Closed interval sampled at `count` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Invalid(format!(
                "{name} axis needs at least one sample"
            )));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::Invalid(format!("{name} axis bounds must be finite")));
        }
        if self.count > 1 && self.max <= self.min {
            return Err(Error::Invalid(format!("{name} axis must be increasing")));
        }
        Ok(())
    }

    pub fn samples(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classifier {
    /// Closed-form amplification bound of the chosen scheme.
    Analytic,
    /// Decay fit of an ensemble mean-square curve over `[0, horizon]`.
    MonteCarlo { paths: usize, horizon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub beta1: Axis,
    pub beta0: Axis,
    pub tau: f64,
    pub scheme: StepScheme,
    pub classifier: Classifier,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl RegionConfig {
    /// 64×64 grid, `τ = 0.01`, analytic classifier.
    pub fn new(beta1: (f64, f64), beta0: (f64, f64)) -> Self {
        Self {
            beta1: Axis::new(beta1.0, beta1.1, 64),
            beta0: Axis::new(beta0.0, beta0.1, 64),
            tau: 0.01,
            scheme: StepScheme::ImplicitEuler,
            classifier: Classifier::Analytic,
            seed: 0,
            exec: Exec::default(),
        }
    }

    /// Monte Carlo classifier with `T = 5` and 400 paths.
    pub fn monte_carlo_default() -> Classifier {
        Classifier::MonteCarlo {
            paths: 400,
            horizon: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub beta1: f64,
    pub beta0: f64,
    pub analytic_stable: bool,
    pub numeric_stable: bool,
    /// Amplification factor, explicit left side, or fitted decay rate.
    pub metric: f64,
}

/// Cells in row-major order: `β0` outer, `β1` inner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub beta1_axis: Vec<f64>,
    pub beta0_axis: Vec<f64>,
    pub cells: Vec<RegionCell>,
    pub kappa: Option<f64>,
    pub kappa_tilde2: f64,
    pub lambda1: f64,
    pub tau: f64,
    pub scheme: StepScheme,
    pub classifier: Classifier,
}

impl RegionGrid {
    pub fn cell(&self, i_beta1: usize, i_beta0: usize) -> &RegionCell {
        &self.cells[i_beta0 * self.beta1_axis.len() + i_beta1]
    }

    pub fn analytic_count(&self) -> usize {
        self.cells.iter().filter(|c| c.analytic_stable).count()
    }

    pub fn numeric_count(&self) -> usize {
        self.cells.iter().filter(|c| c.numeric_stable).count()
    }

    /// Cells that are analytically stable but not numerically stable.
    pub fn nesting_violations(&self) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.analytic_stable && !c.numeric_stable)
            .map(|c| (c.beta1, c.beta0))
            .collect()
    }

    /// Whether every numerically stable cell of `other` is numerically stable here.
    /// Grids must share their axes.
    pub fn numeric_contains(&self, other: &RegionGrid) -> Result<bool> {
        if self.beta1_axis != other.beta1_axis || self.beta0_axis != other.beta0_axis {
            return Err(Error::Invalid("region grids have different axes".into()));
        }
        Ok(self
            .cells
            .iter()
            .zip(&other.cells)
            .all(|(a, b)| !b.numeric_stable || a.numeric_stable))
    }
}

/// Seed for cell `index` of a sweep.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Classifies an ensemble curve: stable iff no path diverged and the fitted
/// tail rate plus two standard errors is negative.
pub fn classify_curve(curve: &MeanSquareCurve) -> (bool, f64) {
    if curve.diverged_count > 0 {
        return (false, f64::INFINITY);
    }
    // Strong decay can underflow to zero; fit the part that is still positive.
    let positive = curve.mean_sq.iter().take_while(|&&v| v > 0.0).count();
    if positive < curve.len() {
        if positive < 20 {
            return (true, f64::NEG_INFINITY);
        }
        let mut trimmed = curve.clone();
        trimmed.times.truncate(positive);
        trimmed.mean_sq.truncate(positive);
        trimmed.ci_halfwidth.truncate(positive);
        trimmed
            .blocks
            .iter_mut()
            .for_each(|b| b.1.truncate(positive));
        return classify_curve(&trimmed);
    }
    match decay_rate_fit(curve, 0.5) {
        Ok(fit) => (fit.is_decaying(), fit.rate),
        Err(_) => (false, f64::NAN),
    }
}

fn numeric_cell(
    sys: &GalerkinSystem,
    cfg: &RegionConfig,
    kappa_tilde2: f64,
    index: usize,
    u0: &StateVector,
) -> Result<(bool, f64)> {
    let lambda1 = sys.laplacian()[0];
    let (beta0, beta1) = (sys.beta0(), sys.beta1());
    match (cfg.classifier, cfg.scheme) {
        (Classifier::Analytic, StepScheme::ImplicitEuler) => {
            match implicit_amplification(cfg.tau, lambda1, beta0, beta1, kappa_tilde2) {
                Ok(r) => Ok((r < 1.0, r)),
                Err(_) => Ok((false, f64::NAN)),
            }
        }
        (Classifier::Analytic, StepScheme::ExplicitEuler) => {
            let c = check_explicit(cfg.tau, &sys.drift_diag(), beta1, kappa_tilde2);
            Ok((c.stable, c.lhs))
        }
        (Classifier::Analytic, StepScheme::StiffImplicitEuler) => Err(Error::Invalid(
            "the stiff implicit scheme has no closed-form classifier; use monte-carlo".into(),
        )),
        (Classifier::MonteCarlo { paths, horizon }, scheme) => {
            let n_steps = ((horizon / cfg.tau).ceil() as usize).max(20);
            // cells already run in parallel
            let ens =
                EnsembleConfig::new(paths, cell_seed(cfg.seed, index), cfg.tau, n_steps, scheme)
                    .with_exec(Exec::Sequential);
            match mean_square_curve(sys, &ens, u0) {
                Ok(curve) => Ok(classify_curve(&curve)),
                Err(Error::AllDiverged(_)) | Err(Error::IllPosed { .. }) => {
                    Ok((false, f64::INFINITY))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Sweeps `(β1, β0)` over the grid in `cfg`, using `template` for everything else.
///
/// Monte Carlo cells start from the unit vector with equal coefficients.
pub fn region_sweep(template: &GalerkinSystem, cfg: &RegionConfig) -> Result<RegionGrid> {
    cfg.beta1.validate("beta1")?;
    cfg.beta0.validate("beta0")?;
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(Error::Invalid(format!(
            "step size must be positive, got {}",
            cfg.tau
        )));
    }
    if let Classifier::MonteCarlo { paths, horizon } = cfg.classifier {
        if paths < 100 {
            return Err(Error::Invalid(format!(
                "monte-carlo classifier needs >= 100 paths, got {paths}"
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::Invalid(
                "monte-carlo horizon must be positive".into(),
            ));
        }
    }
    if cfg.classifier == Classifier::Analytic && cfg.scheme == StepScheme::StiffImplicitEuler {
        return Err(Error::Invalid(
            "the stiff implicit scheme has no closed-form classifier; use monte-carlo".into(),
        ));
    }
    let model: &CovarianceModel = &template.spec.covariance;
    let kappa = covariance::kappa(model, DEFAULT_KAPPA_GRID)?;
    let (n, m) = (template.n(), template.m());
    let tensor = crate::basis::build_tensor(n, m)?;
    let kappa_tilde2 = covariance::kappa_tilde2(&template.alpha, &tensor, n, m)?;
    let lambda1 = template.laplacian()[0];
    let beta1_axis = cfg.beta1.samples();
    let beta0_axis = cfg.beta0.samples();
    let u0 = StateVector(vec![1.0 / (n as f64).sqrt(); n]);

    let width = beta1_axis.len();
    let cells = par::map_indexed(
        width * beta0_axis.len(),
        cfg.exec,
        |idx| -> Result<RegionCell> {
            let beta1 = beta1_axis[idx % width];
            let beta0 = beta0_axis[idx / width];
            let analytic_stable = check_exact(lambda1, beta0, beta1, kappa)?
                .verdict
                .is_stable();
            let sys = template.with_coefficients(beta0, beta1)?;
            let (numeric_stable, metric) = numeric_cell(&sys, cfg, kappa_tilde2, idx, &u0)?;
            Ok(RegionCell {
                beta1,
                beta0,
                analytic_stable,
                numeric_stable,
                metric,
            })
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(RegionGrid {
        beta1_axis,
        beta0_axis,
        cells,
        kappa: kappa.is_finite().then_some(kappa),
        kappa_tilde2,
        lambda1,
        tau: cfg.tau,
        scheme: cfg.scheme,
        classifier: cfg.classifier,
    })
}
