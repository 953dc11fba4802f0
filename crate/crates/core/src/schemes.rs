//! Explicit and drift-implicit Euler schemes on the uniform grid `t_k = kT/N`.
//!
//! Explicit: `X_{k+1} = X_k + b(X_k) h + σ(X_k) ΔW_{k+1}`.
//! Implicit: `X_{k+1} = X_k + b(X_{k+1}) h + σ(X_k) ΔW_{k+1}`, solved for
//! `X_{k+1}` as the fixed point of `F(y) = ξ + h b(y)` with
//! `ξ = X_k + σ(X_k) ΔW_{k+1}`. `F` is a contraction with constant
//! `h·sup|b'|`, which the step-size guard keeps at or below one half.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Problem;

/// Largest admissible `h·lip_b`.
pub const STEP_GUARD: f64 = 0.5;

const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Explicit,
    Implicit,
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchemeKind::Explicit => "explicit",
            SchemeKind::Implicit => "implicit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    FixedPoint,
    /// Newton on `g(y) = y - h b(y) - ξ`; exact in one step for affine drift.
    Newton,
    /// `(x + σ(x)ΔW + h b(0)) / (1 - h b'(0))`, affine drift only.
    ClosedFormAffine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub n_steps: usize,
    pub kind: SchemeKind,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub solver: Solver,
}

impl SchemeConfig {
    pub const DEFAULT_FP_TOL: f64 = 1e-12;
    pub const DEFAULT_FP_MAX_ITER: usize = 100;

    /// Validated configuration with the default solver settings.
    pub fn new(problem: &Problem, n_steps: usize, kind: SchemeKind) -> Result<Self> {
        let cfg = Self {
            n_steps,
            kind,
            fp_tol: Self::DEFAULT_FP_TOL,
            fp_max_iter: Self::DEFAULT_FP_MAX_ITER,
            solver: Solver::FixedPoint,
        };
        cfg.validate(problem)?;
        Ok(cfg)
    }

    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_fp_tol(mut self, fp_tol: f64) -> Self {
        self.fp_tol = fp_tol;
        self
    }

    pub fn with_fp_max_iter(mut self, fp_max_iter: usize) -> Self {
        self.fp_max_iter = fp_max_iter;
        self
    }

    pub fn step_size(&self, problem: &Problem) -> f64 {
        problem.horizon / self.n_steps as f64
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be positive".into()));
        }
        if !(self.fp_tol > 0.0) || self.fp_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "fp_tol must be > 0 and fp_max_iter positive".into(),
            ));
        }
        let h = self.step_size(problem);
        if h * problem.lip_b > STEP_GUARD {
            return Err(Error::StepSizeGuard { h, lip_b: problem.lip_b });
        }
        Ok(())
    }
}

/// Position of a running scheme trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub k: usize,
    pub x: f64,
    pub rng_draws: usize,
}

impl PathState {
    pub fn start(x0: f64) -> Self {
        Self { k: 0, x: x0, rng_draws: 0 }
    }

    /// Advances one step with increment `dw`.
    pub fn advance(&mut self, p: &Problem, cfg: &SchemeConfig, h: f64, dw: f64) -> Result<()> {
        if self.k >= cfg.n_steps {
            return Err(Error::InvalidConfig(format!(
                "path already at final index {}",
                cfg.n_steps
            )));
        }
        self.x = step(p, cfg, h, self.x, dw).map_err(|e| e.at_step(self.k))?;
        self.k += 1;
        self.rng_draws += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub x_next: f64,
    pub iters: usize,
}

/// `S_h(x) = 1 / (1 - h b'(x))`.
pub fn s_h(p: &Problem, h: f64, x: f64) -> Result<f64> {
    let denom = 1.0 - h * p.drift_slope(x);
    if denom.abs() < SINGULAR_EPS {
        return Err(Error::SingularResolvent { x, h });
    }
    Ok(1.0 / denom)
}

#[inline]
pub fn explicit_step(p: &Problem, h: f64, x: f64, dw: f64) -> f64 {
    x + p.drift(x) * h + p.diffusion(x) * dw
}

/// Where the fixed-point iteration starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    /// The explicit predictor `ξ`.
    Predictor,
    At(f64),
}

/// Iterates `y ← ξ + h b(y)` until successive iterates differ by at most
/// `tol` (or by a few ulps when `tol` is below the resolution at `y`).
pub fn solve_fixed_point(
    p: &Problem,
    h: f64,
    xi: f64,
    start: Start,
    tol: f64,
    max_iter: usize,
) -> Result<StepOutcome> {
    let mut y = match start {
        Start::Predictor => xi,
        Start::At(y0) => y0,
    };
    for i in 1..=max_iter {
        let next = xi + h * p.drift(y);
        let delta = (next - y).abs();
        y = next;
        if delta <= tol.max(4.0 * f64::EPSILON * y.abs()) {
            return Ok(StepOutcome { x_next: y, iters: i });
        }
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual: (xi + h * p.drift(y) - y).abs(),
        step: None,
        path: None,
    })
}

/// The first `count` fixed-point iterates `X(1), X(2), ...` from `start`.
pub fn fixed_point_iterates(p: &Problem, h: f64, xi: f64, start: f64, count: usize) -> Vec<f64> {
    let mut y = start;
    (0..count)
        .map(|_| {
            y = xi + h * p.drift(y);
            y
        })
        .collect()
}

fn solve_newton(p: &Problem, h: f64, xi: f64, tol: f64, max_iter: usize) -> Result<StepOutcome> {
    let mut y = xi;
    for i in 0..=max_iter {
        let (b, b_slope) = p.drift_with_slope(y);
        let g = y - h * b - xi;
        if g.abs() <= tol.max(4.0 * f64::EPSILON * y.abs()) {
            return Ok(StepOutcome { x_next: y, iters: i });
        }
        if i == max_iter {
            break;
        }
        let slope = 1.0 - h * b_slope;
        if slope.abs() < SINGULAR_EPS {
            return Err(Error::SingularResolvent { x: y, h });
        }
        y -= g / slope;
    }
    Err(Error::NoConvergence {
        iters: max_iter,
        residual: (y - h * p.drift(y) - xi).abs(),
        step: None,
        path: None,
    })
}

pub fn implicit_step(p: &Problem, cfg: &SchemeConfig, h: f64, x: f64, dw: f64) -> Result<StepOutcome> {
    let xi = x + p.diffusion(x) * dw;
    match cfg.solver {
        Solver::FixedPoint => solve_fixed_point(p, h, xi, Start::Predictor, cfg.fp_tol, cfg.fp_max_iter),
        Solver::Newton => solve_newton(p, h, xi, cfg.fp_tol, cfg.fp_max_iter),
        Solver::ClosedFormAffine => {
            let b = p.b_jet(x);
            if !p.is_affine() || b.coefficients()[2] != 0.0 {
                return Err(Error::InvalidSolver(format!(
                    "closed_form_affine requires affine drift; problem {} has b'' = {} at x = {x}",
                    p.name,
                    b.coefficients()[2]
                )));
            }
            let slope = p.drift_slope(0.0);
            let denom = 1.0 - h * slope;
            if denom.abs() < SINGULAR_EPS {
                return Err(Error::SingularResolvent { x, h });
            }
            Ok(StepOutcome {
                x_next: (xi + h * p.drift(0.0)) / denom,
                iters: 0,
            })
        }
    }
}

#[inline]
pub fn step(p: &Problem, cfg: &SchemeConfig, h: f64, x: f64, dw: f64) -> Result<f64> {
    match cfg.kind {
        SchemeKind::Explicit => Ok(explicit_step(p, h, x, dw)),
        SchemeKind::Implicit => implicit_step(p, cfg, h, x, dw).map(|o| o.x_next),
    }
}

/// Full trajectory `[X_{t_0}, ..., X_{t_N}]` driven by `increments`.
pub fn run_path(p: &Problem, cfg: &SchemeConfig, increments: &[f64]) -> Result<Vec<f64>> {
    if increments.len() != cfg.n_steps {
        return Err(Error::InvalidConfig(format!(
            "expected {} increments, got {}",
            cfg.n_steps,
            increments.len()
        )));
    }
    let h = cfg.step_size(p);
    let mut state = PathState::start(p.x0);
    let mut path = Vec::with_capacity(cfg.n_steps + 1);
    path.push(state.x);
    for &dw in increments {
        state.advance(p, cfg, h, dw)?;
        path.push(state.x);
    }
    Ok(path)
}

/// `X_{t_N}` only, for increments supplied by an iterator.
pub fn run_terminal(
    p: &Problem,
    cfg: &SchemeConfig,
    increments: impl IntoIterator<Item = f64>,
) -> Result<f64> {
    let h = cfg.step_size(p);
    let mut x = p.x0;
    for (k, dw) in increments.into_iter().enumerate() {
        x = step(p, cfg, h, x, dw).map_err(|e| e.at_step(k))?;
    }
    Ok(x)
}

/// Central difference of one implicit step in `ΔW` against `S_h(X_{k+1}) σ(X_k)`.
pub fn pathwise_derivative_check(
    p: &Problem,
    cfg: &SchemeConfig,
    h: f64,
    x: f64,
    dw: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    if cfg.kind != SchemeKind::Implicit || !(eps > 0.0) {
        return Err(Error::InvalidConfig(
            "pathwise derivative check needs the implicit scheme and eps > 0".into(),
        ));
    }
    let up = implicit_step(p, cfg, h, x, dw + eps)?.x_next;
    let down = implicit_step(p, cfg, h, x, dw - eps)?.x_next;
    let fd = (up - down) / (2.0 * eps);
    let x_next = implicit_step(p, cfg, h, x, dw)?.x_next;
    let theory = s_h(p, h, x_next)? * p.diffusion(x);
    Ok((fd, theory))
}
