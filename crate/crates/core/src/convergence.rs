//! Coupled-noise refinement study: strong errors of truncated systems against
//! a finer reference driven by the same noise.

use serde::{Deserialize, Serialize};

use crate::covariance::{self, AlphaMatrix, CovarianceModel};
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSystem, InitialData, SystemSpec};
use crate::integrators::{StepScheme, Stepper};
use crate::montecarlo::{BLOCK_PATHS, Z95};
use crate::noise::{generate_increments, restrict_increments, NoiseIncrements, NoisePathConfig};
use crate::par::{self, Exec};

/// Default number of recorded checkpoints on `[0, T]`.
pub const DEFAULT_CHECKPOINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: CovarianceModel,
    /// `(N, M)` truncations to compare against the reference.
    pub levels: Vec<(usize, usize)>,
    pub reference: (usize, usize),
    pub beta0: f64,
    pub beta1: f64,
    pub tau: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub initial: InitialData,
    pub checkpoints: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl StudyConfig {
    /// `τ = 1e-3`, `u0 = e_1` (shared by every truncation), 50 checkpoints.
    pub fn new(
        model: CovarianceModel,
        levels: Vec<(usize, usize)>,
        reference: (usize, usize),
    ) -> Self {
        Self {
            model,
            levels,
            reference,
            beta0: 0.0,
            beta1: 1.0,
            tau: 1e-3,
            horizon: 0.5,
            paths: 200,
            seed: 0,
            initial: InitialData::Mode(1),
            checkpoints: DEFAULT_CHECKPOINTS,
            exec: Exec::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.model.is_diagonal() {
            return Err(Error::NonDiagonalStudy);
        }
        let (n_ref, m_ref) = self.reference;
        if n_ref == 0 || m_ref == 0 {
            return Err(Error::Domain(
                "reference truncation must be positive".into(),
            ));
        }
        if self.levels.is_empty() {
            return Err(Error::Invalid("study needs at least one level".into()));
        }
        for (i, &(n, m)) in self.levels.iter().enumerate() {
            if n == 0 || m == 0 {
                return Err(Error::Domain(format!("level ({n}, {m}) must be positive")));
            }
            let finer_n = n == n_ref || n_ref >= 2 * n;
            let finer_m = m == m_ref || m_ref >= 2 * m;
            if n > n_ref || m > m_ref || !finer_n || !finer_m {
                return Err(Error::Invalid(format!(
                    "reference ({n_ref}, {m_ref}) must be at least twice as fine as level ({n}, {m}) in each refined direction"
                )));
            }
            if self.levels[..i].contains(&(n, m)) {
                return Err(Error::Invalid(format!("level ({n}, {m}) listed twice")));
            }
        }
        if !(self.tau > 0.0 && self.horizon >= self.tau) {
            return Err(Error::Invalid("need 0 < tau <= horizon".into()));
        }
        if self.paths < 2 {
            return Err(Error::Invalid("study needs at least 2 paths".into()));
        }
        if self.checkpoints == 0 {
            return Err(Error::Invalid("need at least one checkpoint".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub n: usize,
    pub m: usize,
    pub lambda_n: f64,
    pub rho_m: f64,
    /// `max_t E‖u_ref(t) − U_{N,M}(t)‖²` over checkpoints.
    pub error: f64,
    /// 95% half-width at the maximizing checkpoint.
    pub ci: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_ref: usize,
    pub m_ref: usize,
    pub tau: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub beta0: f64,
    pub beta1: f64,
    pub levels: Vec<LevelError>,
    /// Error of `(N_ref/2, M_ref/2)`, a proxy for the reference's own error.
    pub floor: LevelError,
    /// The smallest nonzero ladder error is at least ten times the floor.
    pub floor_ok: bool,
    /// Least-squares slope of `log error` against `log λ_N` over levels with `M = M_ref`.
    pub slope_n: Option<f64>,
    /// Least-squares slope of `log error` against `log M` over levels with `N = N_ref`.
    pub slope_m: Option<f64>,
}

struct Level {
    sys: GalerkinSystem,
    u0: Vec<f64>,
}

/// Per-checkpoint sums of the squared error and of its square, per level.
struct Sums {
    s1: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    reference: &Level,
    levels: &[Level],
    scheme: StepScheme,
    tau: f64,
    n_steps: usize,
    stride: usize,
    inc: &NoiseIncrements,
    out: &mut Sums,
) -> Result<()> {
    let ref_states = trajectory_checkpoints(reference, scheme, tau, n_steps, stride, inc)?;
    for (l, level) in levels.iter().enumerate() {
        let coarse = restrict_increments(inc, level.sys.m())?;
        let states = trajectory_checkpoints(level, scheme, tau, n_steps, stride, &coarse)?;
        for (c, (r, u)) in ref_states.iter().zip(&states).enumerate() {
            let mut e = 0.0;
            for (k, rk) in r.iter().enumerate() {
                let d = rk - u.get(k).copied().unwrap_or(0.0);
                e += d * d;
            }
            out.s1[l][c] += e;
            out.s2[l][c] += e * e;
        }
    }
    Ok(())
}

fn checkpoint_steps(n_steps: usize, stride: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *steps.last().unwrap() != n_steps {
        steps.push(n_steps);
    }
    steps
}

fn trajectory_checkpoints(
    level: &Level,
    scheme: StepScheme,
    tau: f64,
    n_steps: usize,
    stride: usize,
    inc: &NoiseIncrements,
) -> Result<Vec<Vec<f64>>> {
    let stepper = Stepper::new(&level.sys, scheme, tau)?;
    let mut u = level.u0.clone();
    let mut scratch = vec![0.0; u.len()];
    let mut db = vec![0.0; level.sys.m()];
    let mut out = vec![u.clone()];
    for n in 0..n_steps {
        inc.column_into(n, &mut db);
        stepper.advance(&mut u, &db, &mut scratch);
        let step = n + 1;
        if step % stride == 0 || step == n_steps {
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step });
            }
            out.push(u.clone());
        }
    }
    Ok(out)
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    Some(sxy / sxx)
}

/// Runs the study: every path draws fine noise at `M_ref` once, integrates the
/// reference and each level on the restricted noise, and accumulates the
/// zero-padded squared coefficient error at each checkpoint.
pub fn coupled_error_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let (n_ref, m_ref) = cfg.reference;
    let alpha: AlphaMatrix = covariance::alpha_matrix(&cfg.model, m_ref)?;
    let build = |n: usize, m: usize| -> Result<Level> {
        let spec = SystemSpec::new(n, m, cfg.beta0, cfg.beta1, cfg.model.clone());
        let sys = GalerkinSystem::assemble_with_alpha(spec, alpha.clone())?;
        Ok(Level {
            sys,
            u0: cfg.initial.project(n)?.0,
        })
    };
    let reference = build(n_ref, m_ref)?;
    let floor_level = ((n_ref / 2).max(1), (m_ref / 2).max(1));
    let mut shapes = cfg.levels.clone();
    shapes.push(floor_level);
    let levels = shapes
        .iter()
        .map(|&(n, m)| build(n, m))
        .collect::<Result<Vec<_>>>()?;

    let n_steps = (cfg.horizon / cfg.tau).round() as usize;
    let stride = (n_steps / cfg.checkpoints).max(1);
    let steps = checkpoint_steps(n_steps, stride);
    let n_cp = steps.len();
    let scheme = StepScheme::ImplicitEuler;

    let n_blocks = cfg.paths.div_ceil(BLOCK_PATHS);
    let blocks = par::map_indexed(n_blocks, cfg.exec, |b| -> Result<Sums> {
        let mut sums = Sums {
            s1: vec![vec![0.0; n_cp]; levels.len()],
            s2: vec![vec![0.0; n_cp]; levels.len()],
        };
        let first = b * BLOCK_PATHS;
        for p in first..(first + BLOCK_PATHS).min(cfg.paths) {
            let noise_cfg = NoisePathConfig {
                m: m_ref,
                tau: cfg.tau,
                n_steps,
                base_seed: cfg.seed,
                path_index: p as u64,
            };
            let inc = generate_increments(&reference.sys.alpha.chol, &noise_cfg)?;
            run_path(
                &reference, &levels, scheme, cfg.tau, n_steps, stride, &inc, &mut sums,
            )?;
        }
        Ok(sums)
    });
    let mut s1 = vec![vec![0.0; n_cp]; levels.len()];
    let mut s2 = vec![vec![0.0; n_cp]; levels.len()];
    for b in blocks {
        let b = b?;
        for l in 0..levels.len() {
            for c in 0..n_cp {
                s1[l][c] += b.s1[l][c];
                s2[l][c] += b.s2[l][c];
            }
        }
    }

    let p = cfg.paths as f64;
    let mut records = Vec::with_capacity(levels.len());
    for (l, &(n, m)) in shapes.iter().enumerate() {
        let (mut c_best, mut mean) = (0, f64::NEG_INFINITY);
        for (c, &s) in s1[l].iter().enumerate() {
            if s / p > mean {
                mean = s / p;
                c_best = c;
            }
        }
        let var = ((s2[l][c_best] - p * mean * mean) / (p - 1.0)).max(0.0);
        let cap = m_ref.max(m + 1);
        records.push(LevelError {
            n,
            m,
            lambda_n: crate::basis::eigenvalue(n)?,
            rho_m: covariance::rho(&cfg.model, m, cap)?,
            error: mean,
            ci: Z95 * (var / p).sqrt(),
            t_max: steps[c_best] as f64 * cfg.tau,
        });
    }
    let floor = records.pop().expect("floor level");

    let n_ladder: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.m == m_ref && r.n < n_ref)
        .map(|r| (r.lambda_n, r.error))
        .collect();
    let m_ladder: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.n == n_ref && r.m < m_ref)
        .map(|r| (r.m as f64, r.error))
        .collect();
    let smallest = records
        .iter()
        .map(|r| r.error)
        .filter(|&e| e > 0.0)
        .fold(f64::INFINITY, f64::min);

    Ok(ConvergenceReport {
        n_ref,
        m_ref,
        tau: cfg.tau,
        horizon: n_steps as f64 * cfg.tau,
        paths: cfg.paths,
        seed: cfg.seed,
        beta0: cfg.beta0,
        beta1: cfg.beta1,
        levels: records,
        floor,
        floor_ok: smallest.is_finite() && smallest >= 10.0 * floor.error,
        slope_n: slope(&n_ladder),
        slope_m: slope(&m_ladder),
    })
}
