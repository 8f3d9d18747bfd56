//! Euler–Maruyama one-step maps for the Galerkin system and full trajectories.
//!
//! The drift is diagonal in the sine basis, so the implicit variants only need
//! a diagonal reciprocal. Noise is always treated explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSystem, StateVector};
use crate::noise::NoiseIncrements;

/// Trajectories whose `‖U_n‖²` exceeds this are stopped and marked diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepScheme {
    /// `(I + τ(Λ + β0)) U_{n+1} = U_n + β1 Σ A_j U_n ΔB_j`
    ImplicitEuler,
    /// `U_{n+1} = (I − τ(Λ + β0)) U_n + β1 Σ A_j U_n ΔB_j`
    ExplicitEuler,
    /// `(I + τΛ) U_{n+1} = (1 − τβ0) U_n + β1 Σ A_j U_n ΔB_j`
    StiffImplicitEuler,
}

impl StepScheme {
    pub const ALL: [StepScheme; 3] = [
        StepScheme::ImplicitEuler,
        StepScheme::ExplicitEuler,
        StepScheme::StiffImplicitEuler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StepScheme::ImplicitEuler => "implicit-euler",
            StepScheme::ExplicitEuler => "explicit-euler",
            StepScheme::StiffImplicitEuler => "stiff-implicit-euler",
        }
    }
}

/// Precomputed step map `u'_k = post_k · (pre_k · u_k + β1 (Σ_j A_j u ΔB_j)_k)`.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    sys: &'a GalerkinSystem,
    pre: Vec<f64>,
    post: Vec<f64>,
    beta1: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a GalerkinSystem, scheme: StepScheme, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Invalid(format!(
                "step size must be positive, got {tau}"
            )));
        }
        let beta0 = sys.beta0();
        let n = sys.n();
        let lap = sys.laplacian();
        let implicit_denominator = |k: usize, d: f64| -> Result<f64> {
            let value = 1.0 + tau * d;
            if value <= 0.0 {
                return Err(Error::IllPosed { mode: k + 1, value });
            }
            Ok(1.0 / value)
        };
        let (pre, post) = match scheme {
            StepScheme::ImplicitEuler => {
                let post = (0..n)
                    .map(|k| implicit_denominator(k, lap[k] + beta0))
                    .collect::<Result<Vec<_>>>()?;
                (vec![1.0; n], post)
            }
            StepScheme::ExplicitEuler => {
                let pre = lap.iter().map(|l| 1.0 - tau * (l + beta0)).collect();
                (pre, vec![1.0; n])
            }
            StepScheme::StiffImplicitEuler => {
                let post = (0..n)
                    .map(|k| implicit_denominator(k, lap[k]))
                    .collect::<Result<Vec<_>>>()?;
                (vec![1.0 - tau * beta0; n], post)
            }
        };
        Ok(Self {
            sys,
            pre,
            post,
            beta1: sys.beta1(),
        })
    }

    /// Advances `u` in place. `scratch` must have length `N`.
    #[inline]
    pub fn advance(&self, u: &mut [f64], db: &[f64], scratch: &mut [f64]) {
        if self.beta1 != 0.0 {
            self.sys.noise_action(u, db, scratch);
        } else {
            scratch.iter_mut().for_each(|s| *s = 0.0);
        }
        for k in 0..u.len() {
            u[k] = self.post[k] * (self.pre[k] * u[k] + self.beta1 * scratch[k]);
        }
    }
}

/// One step of `scheme` from `u` with increments `db` (length `M`).
pub fn step(
    sys: &GalerkinSystem,
    scheme: StepScheme,
    u: &StateVector,
    db: &[f64],
    tau: f64,
) -> Result<StateVector> {
    if u.len() != sys.n() {
        return Err(Error::Invalid(format!(
            "state has {} modes, system has {}",
            u.len(),
            sys.n()
        )));
    }
    if db.len() != sys.m() {
        return Err(Error::Invalid(format!(
            "increment has {} modes, system has {}",
            db.len(),
            sys.m()
        )));
    }
    let stepper = Stepper::new(sys, scheme, tau)?;
    let mut next = u.0.clone();
    let mut scratch = vec![0.0; sys.n()];
    stepper.advance(&mut next, db, &mut scratch);
    Ok(StateVector(next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    /// `‖U_n‖²` for `n = 0..=n_steps` (shorter if the path diverged).
    pub norm_sq: Vec<f64>,
    pub states: Option<Vec<StateVector>>,
    /// Step index at which the norm exceeded [`DIVERGENCE_THRESHOLD`].
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.norm_sq.len())
            .map(|n| n as f64 * self.tau)
            .collect()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Applies `step` for every column of `inc`, recording `‖U_n‖²` at each step.
pub fn integrate(
    sys: &GalerkinSystem,
    scheme: StepScheme,
    u0: &StateVector,
    inc: &NoiseIncrements,
    tau: f64,
    keep_states: bool,
) -> Result<Trajectory> {
    if u0.len() != sys.n() {
        return Err(Error::Invalid(format!(
            "state has {} modes, system has {}",
            u0.len(),
            sys.n()
        )));
    }
    if inc.m() < sys.m() {
        return Err(Error::Invalid(format!(
            "increments carry {} modes, system needs {}",
            inc.m(),
            sys.m()
        )));
    }
    let stepper = Stepper::new(sys, scheme, tau)?;
    let n_steps = inc.n_steps();
    let mut u = u0.0.clone();
    let mut scratch = vec![0.0; sys.n()];
    let mut db = vec![0.0; sys.m()];
    let mut norm_sq = Vec::with_capacity(n_steps + 1);
    let mut states = keep_states.then(|| {
        let mut v = Vec::with_capacity(n_steps + 1);
        v.push(u0.clone());
        v
    });
    norm_sq.push(u.iter().map(|x| x * x).sum());
    let mut diverged_at = None;
    for n in 0..n_steps {
        for (j, d) in db.iter_mut().enumerate() {
            *d = inc.get(j, n);
        }
        stepper.advance(&mut u, &db, &mut scratch);
        let ns: f64 = u.iter().map(|x| x * x).sum();
        if !ns.is_finite() && !(ns == f64::INFINITY && u.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        norm_sq.push(ns);
        if let Some(s) = states.as_mut() {
            s.push(StateVector(u.clone()));
        }
        if ns > DIVERGENCE_THRESHOLD {
            diverged_at = Some(n + 1);
            break;
        }
    }
    Ok(Trajectory {
        tau,
        norm_sq,
        states,
        diverged_at,
    })
}
