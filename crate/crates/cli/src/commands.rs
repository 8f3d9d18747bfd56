//! Subcommand implementations. Each writes its artifacts and returns a
//! short text summary for stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use she_core::basis::build_tensor;
use she_core::convergence::{coupled_error_study, StudyConfig};
use she_core::covariance::alpha_matrix;
use she_core::galerkin::l2_norm_sq;
use she_core::montecarlo::{decay_rate_fit, mean_square_curve, EnsembleConfig};
use she_core::stability::{
    region_sweep, stability_report, Axis, Classifier, RegionConfig, StabilityReport, Verdict,
};

use crate::config::{ClassifierKind, Format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::svg;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Resolved invocation, recorded in every manifest.
pub struct Invocation<'a> {
    pub command: &'a str,
    pub config_path: &'a Path,
    pub config: &'a RunConfig,
    pub overrides: &'a [String],
}

impl Invocation<'_> {
    fn manifest(&self, out_dir: &Path, files: &[PathBuf], results: Value) -> CliResult<Value> {
        Ok(json!({
            "command": self.command,
            "version": VERSION,
            "config_file": self.config_path.display().to_string(),
            "overrides": self.overrides,
            "config": serde_json::to_value(self.config)?,
            "output_directory": out_dir.display().to_string(),
            "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
            "results": results,
        }))
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn csv<R: Serialize>(
        &mut self,
        name: &str,
        rows: impl IntoIterator<Item = R>,
    ) -> CliResult<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    fn manifest(&mut self, inv: &Invocation, results: Value) -> CliResult<()> {
        let name = format!("{}.json", inv.command);
        let mut files = self.written.clone();
        files.push(self.dir.join(&name));
        let body = inv.manifest(&self.dir, &files, results)?;
        self.text(&name, &(serde_json::to_string_pretty(&body)? + "\n"))
    }
}

#[derive(Serialize)]
struct CurveRow {
    t: f64,
    mean_sq: f64,
    ci_low: f64,
    ci_high: f64,
    diverged: usize,
}

pub fn simulate(inv: &Invocation) -> CliResult<String> {
    let cfg = inv.config;
    let sys = cfg.build_system()?;
    let system = cfg.system()?;
    let time = cfg.time()?;
    let n_steps = time.n_steps()?;
    let u0 = system.initial.resolve()?.project(sys.n())?;
    if cfg.mc.paths == 0 {
        return Err(CliError::Config("mc.paths must be positive".into()));
    }
    let ens = EnsembleConfig::new(cfg.mc.paths, cfg.mc.seed, time.tau, n_steps, system.scheme);
    let curve = mean_square_curve(&sys, &ens, &u0)?;
    let fit = decay_rate_fit(&curve, 0.5).ok();

    let mut out = Outputs::new(cfg)?;
    if cfg.output.wants(Format::Csv) {
        let (lo, hi) = (curve.ci_low(), curve.ci_high());
        out.csv(
            "curve.csv",
            (0..curve.len()).map(|n| CurveRow {
                t: curve.times[n],
                mean_sq: curve.mean_sq[n],
                ci_low: lo[n],
                ci_high: hi[n],
                diverged: curve.diverged_count,
            }),
        )?;
    }
    if cfg.output.wants(Format::Svg) {
        let (lo, hi) = (curve.ci_low(), curve.ci_high());
        let series = [
            svg::Series {
                label: "E|U|^2",
                xs: &curve.times,
                ys: &curve.mean_sq,
                dashed: false,
            },
            svg::Series {
                label: "95% CI",
                xs: &curve.times,
                ys: &lo,
                dashed: true,
            },
            svg::Series {
                label: "",
                xs: &curve.times,
                ys: &hi,
                dashed: true,
            },
        ];
        let title = format!(
            "mean-square curve, N={} M={} beta0={} beta1={}",
            sys.n(),
            sys.m(),
            sys.beta0(),
            sys.beta1()
        );
        out.text(
            "curve.svg",
            &svg::line_plot(&title, "t", "mean square", &series, cfg.output.log_scale),
        )?;
    }
    let results = json!({
        "paths": curve.paths,
        "diverged_count": curve.diverged_count,
        "steps": n_steps,
        "initial_norm_sq": l2_norm_sq(&u0),
        "final_mean_sq": curve.mean_sq[curve.len() - 1],
        "decay_fit": fit,
    });
    if cfg.output.wants(Format::Json) {
        out.manifest(inv, results)?;
    }
    let mut msg = format!(
        "simulated {} paths x {} steps; E|U|^2: {:.6e} -> {:.6e}; diverged {}",
        curve.paths,
        n_steps,
        curve.mean_sq[0],
        curve.mean_sq[curve.len() - 1],
        curve.diverged_count
    );
    if let Some(f) = fit {
        msg.push_str(&format!(
            "; tail decay rate {:.4} (se {:.2e})",
            f.rate,
            f.combined_stderr()
        ));
    }
    Ok(msg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Inapplicable => "inapplicable",
    }
}

fn stable_word(b: bool) -> &'static str {
    if b {
        "stable"
    } else {
        "unstable"
    }
}

pub fn render_report(r: &StabilityReport) -> String {
    let rows = [
        ("N, M", format!("{}, {}", r.n, r.m)),
        ("tau", format!("{}", r.tau)),
        ("lambda1", format!("{:.6}", r.lambda1)),
        ("beta0, beta1", format!("{}, {}", r.beta0, r.beta1)),
        (
            "kappa",
            if r.kappa_finite {
                fmt_opt(r.kappa)
            } else {
                "inf".into()
            },
        ),
        ("sum q_j", fmt_opt(r.weight_sum)),
        ("kappa_tilde2", format!("{:.6}", r.kappa_tilde2)),
        ("rho(M)", format!("{:.6e}", r.rho_at_m)),
        (
            "exact margin",
            format!(
                "{} ({})",
                fmt_opt(r.cond_exact),
                verdict_word(r.verdict_exact)
            ),
        ),
        (
            "spectral margin",
            format!(
                "{:.6} ({})",
                r.cond_spectral,
                stable_word(r.verdict_spectral)
            ),
        ),
        (
            "implicit ratio",
            format!(
                "{} ({})",
                fmt_opt(r.implicit_ratio),
                stable_word(r.verdict_implicit)
            ),
        ),
        (
            "explicit lhs",
            format!(
                "{:.6} ({})",
                r.explicit_lhs,
                stable_word(r.verdict_explicit)
            ),
        ),
    ];
    rows.iter().map(|(k, v)| format!("{k:<16} {v}\n")).collect()
}

pub fn check(inv: &Invocation) -> CliResult<String> {
    let cfg = inv.config;
    let sys = cfg.build_system()?;
    let tau = cfg.time()?.tau;
    if !(tau > 0.0) {
        return Err(CliError::Config("time.tau must be positive".into()));
    }
    let report = stability_report(&sys, tau)?;
    let mut out = Outputs::new(cfg)?;
    if cfg.output.wants(Format::Json) {
        out.manifest(inv, serde_json::to_value(&report)?)?;
    }
    Ok(render_report(&report))
}

#[derive(Serialize)]
struct RegionRow {
    beta1: f64,
    beta0: f64,
    analytic_stable: bool,
    numeric_stable: bool,
    metric: f64,
}

pub fn region(inv: &Invocation) -> CliResult<String> {
    let cfg = inv.config;
    let sys = cfg.build_system()?;
    let system = cfg.system()?;
    let r = cfg.region()?;
    let tau = r.tau.or(cfg.time.as_ref().map(|t| t.tau)).unwrap_or(0.01);
    let classifier = match r.classifier {
        ClassifierKind::Analytic => Classifier::Analytic,
        ClassifierKind::MonteCarlo => Classifier::MonteCarlo {
            paths: r.paths,
            horizon: r.horizon,
        },
    };
    let rc = RegionConfig {
        beta1: Axis::new(r.beta1[0], r.beta1[1], r.beta1_count),
        beta0: Axis::new(r.beta0[0], r.beta0[1], r.beta0_count),
        tau,
        scheme: system.scheme,
        classifier,
        seed: cfg.mc.seed,
        exec: Default::default(),
    };
    let grid = region_sweep(&sys, &rc).map_err(|e| match e {
        she_core::Error::Invalid(msg) => CliError::Config(format!("region: {msg}")),
        other => other.into(),
    })?;

    let mut out = Outputs::new(cfg)?;
    if cfg.output.wants(Format::Csv) {
        out.csv(
            "region.csv",
            grid.cells.iter().map(|c| RegionRow {
                beta1: c.beta1,
                beta0: c.beta0,
                analytic_stable: c.analytic_stable,
                numeric_stable: c.numeric_stable,
                metric: c.metric,
            }),
        )?;
    }
    if cfg.output.wants(Format::Svg) {
        let cells: Vec<svg::Cell> = grid
            .cells
            .iter()
            .map(|c| svg::Cell {
                analytic: c.analytic_stable,
                numeric: c.numeric_stable,
            })
            .collect();
        let boundary: Vec<(f64, f64)> = match grid.kappa {
            Some(k) => {
                let (lo, hi) = (r.beta1[0], r.beta1[1]);
                (0..=200)
                    .map(|i| {
                        let b1 = lo + (hi - lo) * i as f64 / 200.0;
                        (b1, b1 * b1 * k / 2.0 - grid.lambda1)
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        let title = format!(
            "stability region ({}, tau={})",
            grid.scheme.name(),
            grid.tau
        );
        out.text(
            "region.svg",
            &svg::heatmap(
                &title,
                &grid.beta1_axis,
                &grid.beta0_axis,
                &cells,
                &boundary,
            ),
        )?;
    }
    let results = json!({
        "kappa": grid.kappa,
        "kappa_tilde2": grid.kappa_tilde2,
        "lambda1": grid.lambda1,
        "tau": grid.tau,
        "scheme": grid.scheme,
        "classifier": grid.classifier,
        "beta1_axis": grid.beta1_axis,
        "beta0_axis": grid.beta0_axis,
        "cells": grid.cells.len(),
        "analytic_stable": grid.analytic_count(),
        "numeric_stable": grid.numeric_count(),
        "nesting_violations": grid.nesting_violations().len(),
    });
    if cfg.output.wants(Format::Json) {
        out.manifest(inv, results)?;
    }
    Ok(format!(
        "{} cells: {} analytically stable, {} numerically stable, {} analytic-but-not-numeric",
        grid.cells.len(),
        grid.analytic_count(),
        grid.numeric_count(),
        grid.nesting_violations().len()
    ))
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct LevelRow {
    N: usize,
    M: usize,
    lambda_N: f64,
    rho_M: f64,
    error: f64,
    ci: f64,
}

pub fn converge(inv: &Invocation) -> CliResult<String> {
    let cfg = inv.config;
    let system = cfg.system()?;
    let model = cfg.noise()?.model()?;
    let time = cfg.time()?;
    let c = cfg.converge()?;
    let mut study = StudyConfig::new(
        model,
        c.levels.iter().map(|l| (l[0], l[1])).collect(),
        (c.reference[0], c.reference[1]),
    );
    study.beta0 = system.beta0;
    study.beta1 = system.beta1;
    study.tau = time.tau;
    study.horizon = time.horizon()?;
    study.paths = cfg.mc.paths;
    study.seed = cfg.mc.seed;
    study.initial = system.initial.resolve()?;
    study.checkpoints = c.checkpoints;
    let report = coupled_error_study(&study)?;

    let mut out = Outputs::new(cfg)?;
    if cfg.output.wants(Format::Csv) {
        out.csv(
            "converge.csv",
            report.levels.iter().map(|l| LevelRow {
                N: l.n,
                M: l.m,
                lambda_N: l.lambda_n,
                rho_M: l.rho_m,
                error: l.error,
                ci: l.ci,
            }),
        )?;
    }
    if cfg.output.wants(Format::Svg) {
        let n_ladder: Vec<_> = report
            .levels
            .iter()
            .filter(|l| l.m == report.m_ref && l.n < report.n_ref)
            .collect();
        let xs: Vec<f64> = n_ladder.iter().map(|l| l.lambda_n).collect();
        let ys: Vec<f64> = n_ladder.iter().map(|l| l.error).collect();
        let lx: Vec<f64> = xs.iter().map(|x| x.log10()).collect();
        let series = [svg::Series {
            label: "error vs lambda_N",
            xs: &lx,
            ys: &ys,
            dashed: false,
        }];
        out.text(
            "converge.svg",
            &svg::line_plot(
                "N-ladder strong error",
                "log10 lambda_N",
                "error",
                &series,
                true,
            ),
        )?;
    }
    if cfg.output.wants(Format::Json) {
        out.manifest(inv, serde_json::to_value(&report)?)?;
    }
    let mut msg = String::new();
    for l in &report.levels {
        msg.push_str(&format!(
            "N={:<4} M={:<4} error {:.4e} ± {:.2e}\n",
            l.n, l.m, l.error, l.ci
        ));
    }
    msg.push_str(&format!(
        "slope vs lambda_N: {}; slope vs M: {}; floor {:.3e} (ok: {})",
        fmt_opt(report.slope_n),
        fmt_opt(report.slope_m),
        report.floor.error,
        report.floor_ok
    ));
    Ok(msg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CoeffKind {
    Tensor,
    Alpha,
}

#[derive(Serialize)]
struct TensorRow {
    j: usize,
    k: usize,
    i: usize,
    value: f64,
}

#[derive(Serialize)]
struct AlphaRow {
    i: usize,
    j: usize,
    value: f64,
}

pub fn coeffs(inv: &Invocation, what: CoeffKind) -> CliResult<String> {
    let cfg = inv.config;
    let system = cfg.system()?;
    let mut out = Outputs::new(cfg)?;
    let rows = match what {
        CoeffKind::Tensor => {
            let tensor = build_tensor(system.n, system.m)
                .map_err(|e| CliError::Config(format!("system: {e}")))?;
            let rows: Vec<TensorRow> = tensor
                .entries()
                .map(|(j, k, i, value)| TensorRow { j, k, i, value })
                .collect();
            let n = rows.len();
            out.csv("tensor.csv", rows)?;
            n
        }
        CoeffKind::Alpha => {
            let model = cfg.noise()?.model()?;
            let alpha = alpha_matrix(&model, system.m)?;
            let m = alpha.m();
            let rows: Vec<AlphaRow> = (1..=m)
                .flat_map(|i| (i..=m).map(move |j| (i, j)))
                .filter(|&(i, j)| !alpha.is_diagonal() || i == j)
                .map(|(i, j)| AlphaRow {
                    i,
                    j,
                    value: alpha.get(i, j),
                })
                .collect();
            let n = rows.len();
            out.csv("alpha.csv", rows)?;
            n
        }
    };
    Ok(format!("wrote {rows} rows to {}", out.written[0].display()))
}
