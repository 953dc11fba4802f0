//! Rate fitting and the convergence / expansion experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{leading_constant, LeadingConstant, PsiKind};
use crate::moments::weak_error_exact;
use crate::problems::Problem;
use crate::schemes::{SchemeConfig, SchemeKind};

/// Errors below this magnitude are treated as rounding noise.
pub const NOISE_FLOOR: f64 = 1e-14;

/// Panels for the time quadrature of the leading constant.
pub const DEFAULT_QUAD_NODES: usize = 64;

pub const DEFAULT_LEVELS: [usize; 6] = [16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(h, |error|)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    /// Pairs dropped for falling below [`NOISE_FLOOR`].
    pub excluded: Vec<(f64, f64)>,
}

/// Least squares line through `(ln h, ln |err|)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if let Some(&(h, _)) = points.iter().find(|(h, _)| !(*h > 0.0)) {
        return Err(Error::InvalidConfig(format!("step size {h} is not positive")));
    }
    let (used, excluded): (Vec<_>, Vec<_>) = points
        .iter()
        .map(|&(h, e)| (h, e.abs()))
        .partition(|&(_, e)| e >= NOISE_FLOOR && e.is_finite());
    if used.len() < 3 {
        return Err(Error::TooFewPoints { usable: used.len(), required: 3 });
    }
    let n = used.len() as f64;
    let xs: Vec<f64> = used.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("rate fit needs distinct step sizes".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: used,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub h: f64,
    pub weak_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: SchemeKind,
    pub rows: Vec<ConvergenceRow>,
    pub fit: RateFit,
}

/// Noise-free weak errors from the moment oracle and their log-log slope.
pub fn convergence_sweep(p: &Problem, kind: SchemeKind, levels: &[usize]) -> Result<ConvergenceReport> {
    let rows = levels
        .iter()
        .map(|&n| {
            let cfg = SchemeConfig::new(p, n, kind)?;
            Ok(ConvergenceRow {
                n_steps: n,
                h: cfg.step_size(p),
                weak_err: weak_error_exact(p, &cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_rate(&rows.iter().map(|r| (r.h, r.weak_err)).collect::<Vec<_>>())?;
    Ok(ConvergenceReport {
        problem: p.name.clone(),
        scheme: kind,
        rows,
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub n_steps: usize,
    pub h: f64,
    pub weak_err: f64,
    pub h_times_c1: f64,
    pub second_order_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTable {
    pub problem: String,
    pub density: PsiKind,
    pub c1: LeadingConstant,
    pub rows: Vec<ExpansionRow>,
    /// Fit of `|residual|` against `h`; absent when every residual is at the
    /// noise floor (e.g. Brownian motion, where both sides vanish).
    pub residual_fit: Option<RateFit>,
}

/// Compares the implicit scheme's exact weak error with `h·C₁` for the
/// chosen density; the residual is second order when the density is right.
pub fn expansion_check(p: &Problem, levels: &[usize], density: PsiKind) -> Result<ExpansionTable> {
    let c1 = leading_constant(p, density, DEFAULT_QUAD_NODES)?;
    let rows = levels
        .iter()
        .map(|&n| {
            let cfg = SchemeConfig::new(p, n, SchemeKind::Implicit)?;
            let h = cfg.step_size(p);
            let weak_err = weak_error_exact(p, &cfg)?;
            let h_times_c1 = h * c1.value;
            Ok(ExpansionRow {
                n_steps: n,
                h,
                weak_err,
                h_times_c1,
                second_order_residual: weak_err - h_times_c1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let residuals: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.second_order_residual)).collect();
    let residual_fit = match fit_rate(&residuals) {
        Ok(fit) => Some(fit),
        Err(Error::TooFewPoints { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ExpansionTable {
        problem: p.name.clone(),
        density,
        c1,
        rows,
        residual_fit,
    })
}
