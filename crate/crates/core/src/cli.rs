//! The subcommands behind the `ddstop` binary. Each one reads a
//! [`RunConfig`], runs the solvers and writes its files into the output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::coefficients::{roots, Payoff, StateTriple};
use crate::config::RunConfig;
use crate::montecarlo::{
    simulate_stopped_payoff, verify_solution, Scaled, ValueModel, VerificationReport,
};
use crate::reflection::pde_residuals;
use crate::solver2d::{call_boundary_curve, put_boundary_2d, BoundaryCurve, CallSolution2d};
use crate::solver3d::Solution3d;
use crate::{Error, Result};

/// Perturbation factors used when none are given.
pub const DEFAULT_PERTURBATIONS: [f64; 2] = [0.9, 1.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn parse(v: u8) -> Result<Self> {
        match v {
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            _ => Err(Error::Config(format!("--dim must be 2 or 3, got {v}"))),
        }
    }
}

/// Exit status for an error: 1 configuration or i/o, 2 constraint breach,
/// 3 domain, 4 convergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::NonPositiveCoefficient { .. } => 1,
        Error::ConstraintBreach { .. } => 2,
        Error::Domain(_) | Error::SingularDenominator(_) => 3,
        Error::StepError { .. }
        | Error::Resolution(_)
        | Error::NonConvergence(_)
        | Error::UnderdeterminedRegion(_) => 4,
    }
}

/// Exit status of `verify` when the report lists failed checks.
pub const EXIT_CHECK_FAILED: i32 = 5;

/// Decimal with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    w: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        Ok(Self { w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(csv_err)
    }

    fn reals(&mut self, v: &[f64]) -> Result<()> {
        self.row(v.iter().map(|x| fmt_real(*x)))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// `roots.csv`: roots and their partials at `n_s` values of `s` in
/// `[s_min, s_max]`, each with `n_y` values of `y` in `[0, min(y_max, s)]`.
pub fn cmd_roots(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    let g = &cfg.grids;
    let path = out.join("roots.csv");
    let mut t = Table::create(
        &path,
        &[
            "s", "y", "gamma1", "gamma2", "dg1_ds", "dg2_ds", "dg1_dy", "dg2_dy",
        ],
    )?;
    for &s in &linspace(g.s_min, g.s_max, g.n_s) {
        for &y in &linspace(0.0, g.y_max.min(s), g.n_y) {
            let p = roots(&cfg.spec, s, y)?;
            t.reals(&[
                s,
                y,
                p.gamma1,
                p.gamma2,
                p.dgamma1_ds,
                p.dgamma2_ds,
                p.dgamma1_dy,
                p.dgamma2_dy,
            ])?;
        }
    }
    t.finish()?;
    Ok(vec![path])
}

/// `boundary2d.csv` and `switches.csv` in `(X, S)`, or `boundary3d.csv`,
/// `switches.csv` and, where a reflection region is solved,
/// `reflection.csv` in `(X, S, Y)`.
pub fn cmd_boundary(
    cfg: &RunConfig,
    dim: Dim,
    shoot_offset: f64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    prepare(out)?;
    match dim {
        Dim::Two => boundary_2d(cfg, shoot_offset, out),
        Dim::Three => boundary_3d(cfg, out),
    }
}

fn boundary_2d(cfg: &RunConfig, shoot_offset: f64, out: &Path) -> Result<Vec<PathBuf>> {
    let grid = cfg.grid2d();
    let curve: BoundaryCurve = match cfg.spec.payoff() {
        Payoff::Call => call_boundary_curve(&cfg.spec, &grid.nodes())?,
        Payoff::Put => put_boundary_2d(&cfg.spec, grid, shoot_offset)?
            .curve()
            .clone(),
    };
    let bpath = out.join("boundary2d.csv");
    let mut t = Table::create(&bpath, &["s", "boundary", "region"])?;
    for (&s, &v) in curve.grid.iter().zip(&curve.values) {
        t.row([fmt_real(s), fmt_real(v), curve.region_index(s).to_string()])?;
    }
    t.finish()?;
    let spath = out.join("switches.csv");
    let mut t = Table::create(&spath, &["index", "at", "direction"])?;
    for (i, p) in curve.switch_points.iter().enumerate() {
        t.row([
            (i + 1).to_string(),
            fmt_real(p.at),
            p.direction.as_str().to_string(),
        ])?;
    }
    t.finish()?;
    Ok(vec![bpath, spath])
}

fn boundary_3d(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sol = Solution3d::new(&cfg.spec, cfg.options3d()?)?;
    let surface = sol.surface()?;
    let bpath = out.join("boundary3d.csv");
    let mut t = Table::create(&bpath, &["s", "y", "boundary", "region"])?;
    for n in &surface.nodes {
        t.row([
            fmt_real(n.s),
            fmt_real(n.y),
            fmt_real(n.value),
            n.label.as_str().to_string(),
        ])?;
    }
    t.finish()?;

    let spath = out.join("switches.csv");
    let mut t = Table::create(&spath, &["fixed", "sequence", "index", "at"])?;
    for r in sol.regions()? {
        for (name, seq) in [("tilde", &r.tilde), ("hat", &r.hat)] {
            for (i, &at) in seq.iter().enumerate() {
                t.row([
                    fmt_real(r.fixed),
                    name.to_string(),
                    (i + 1).to_string(),
                    fmt_real(at),
                ])?;
            }
        }
    }
    t.finish()?;
    let mut written = vec![bpath, spath];

    if !cfg.spec.is_y_free() || cfg.grids.general {
        let grid = sol.coefficient_grid()?;
        let rpath = out.join("reflection.csv");
        let mut t = Table::create(&rpath, &["s", "y", "C1", "C2", "residual_s", "residual_y"])?;
        let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
        for r in pde_residuals(&cfg.spec, grid)? {
            t.row([
                fmt_real(r.s),
                fmt_real(r.y),
                fmt_real(r.c[0]),
                fmt_real(r.c[1]),
                opt(r.along_s),
                opt(r.along_y),
            ])?;
        }
        t.finish()?;
        written.push(rpath);
    }
    Ok(written)
}

/// The solved model for `dim`: the put boundary in `(X, S)` shot from
/// `g*(∞) - shoot_offset`, the explicit call, or the 3D solution.
pub fn build_model(cfg: &RunConfig, dim: Dim, shoot_offset: f64) -> Result<Box<dyn ValueModel>> {
    Ok(match (dim, cfg.spec.payoff()) {
        (Dim::Two, Payoff::Put) => {
            Box::new(put_boundary_2d(&cfg.spec, cfg.grid2d(), shoot_offset)?)
        }
        (Dim::Two, Payoff::Call) => Box::new(CallSolution2d::new(&cfg.spec)),
        (Dim::Three, _) => Box::new(Solution3d::new(&cfg.spec, cfg.options3d()?)?),
    })
}

fn start_point(cfg: &RunConfig, point: Option<[f64; 3]>) -> Result<StateTriple> {
    let [x, s, y] = match (point, cfg.point) {
        (Some(p), _) => p,
        (None, Some(p)) => [p.x, p.s, p.y],
        (None, None) => {
            return Err(Error::Config(
                "no point given: pass --x --s --y or set [point] in the config".into(),
            ))
        }
    };
    StateTriple::new(x, s, y)
}

/// `value.csv`: the value function at one point of `E³`.
pub fn cmd_value(
    cfg: &RunConfig,
    dim: Dim,
    point: Option<[f64; 3]>,
    out: &Path,
) -> Result<(f64, Vec<PathBuf>)> {
    let p = start_point(cfg, point)?;
    let model = build_model(cfg, dim, 0.0)?;
    let v = model.value(p)?;
    prepare(out)?;
    let path = out.join("value.csv");
    let mut t = Table::create(&path, &["x", "s", "y", "value"])?;
    t.reals(&[p.x, p.s, p.y, v])?;
    t.finish()?;
    Ok((v, vec![path]))
}

#[derive(Debug, Clone, Serialize)]
struct VerifyFile<'a> {
    #[serde(flatten)]
    report: &'a VerificationReport,
    failures: &'a [String],
}

/// `verify.json`: the verification report plus the list of failed checks.
pub fn cmd_verify(
    cfg: &RunConfig,
    dim: Dim,
    shoot_offset: f64,
    perturb: &[f64],
    out: &Path,
) -> Result<(VerificationReport, Vec<String>, Vec<PathBuf>)> {
    let start = start_point(cfg, None)?;
    let model = build_model(cfg, dim, shoot_offset)?;
    let report = verify_solution(model.as_ref(), start, &cfg.sim, perturb)?;
    let failures = report.failures(cfg.spec.strike());
    prepare(out)?;
    let path = out.join("verify.json");
    let body = serde_json::to_string_pretty(&VerifyFile {
        report: &report,
        failures: &failures,
    })
    .map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&path, body + "\n")?;
    Ok((report, failures, vec![path]))
}

/// `simulate.csv`: Monte Carlo estimates under the model's boundary scaled
/// by 1 and by each perturbation factor.
pub fn cmd_simulate(
    cfg: &RunConfig,
    dim: Dim,
    shoot_offset: f64,
    perturb: &[f64],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let start = start_point(cfg, None)?;
    cfg.sim.validate(&cfg.spec)?;
    let model = build_model(cfg, dim, shoot_offset)?;
    let rule = model.rule()?;
    let mut factors = vec![1.0];
    factors.extend(perturb.iter().copied().filter(|f| *f != 1.0));
    prepare(out)?;
    let path = out.join("simulate.csv");
    let mut t = Table::create(&path, &["factor", "mean", "stderr", "stopped_fraction"])?;
    for factor in factors {
        let est = simulate_stopped_payoff(
            &cfg.spec,
            start,
            &Scaled {
                rule: &rule,
                factor,
            },
            &cfg.sim,
        )?;
        t.reals(&[factor, est.mean, est.stderr, est.stopped_fraction])?;
    }
    t.finish()?;
    Ok(vec![path])
}

/// Comma-separated factors such as `0.9,1.1`.
pub fn parse_factors(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("--perturb: `{t}` is not a number")))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!(
                    "--perturb: factor {v} must be positive"
                )))
            }
        })
        .collect()
}
