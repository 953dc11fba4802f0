//! First-order weak-error densities as jet algebra.
//!
//! With `u` the solution of the Kolmogorov equation, the implicit and explicit
//! Euler schemes satisfy `E f(X^N_T) - E f(X_T) = h ∫ E ψ(t, X_t) dt + O(h²)`:
//!
//! ```text
//! ψ_i  = ½ b∂(b∂u) + ¼ σ²Δ(b∂u) − ½ b²Δu + ⅛ σ⁴∂⁴u − ¼ b∂(σ²Δu) − ⅛ σ²Δ(σ²Δu)
//! ψ_e  = ½ b²Δu + ½ bσ²∂³u + ⅛ σ⁴∂⁴u − ½ b∂(b∂u) − ¼ b∂(σ²Δu) − ¼ σ²Δ(b∂u) − ⅛ σ²Δ(σ²Δu)
//! ψ_ih = ½ b∂(b∂u) − ½ b²Δu + ¼ σ²S_h²b''∂u + ¼ bσ²∂³u + ⅛ σ⁴∂⁴u
//!        + ½ b'S_hσ²Δu − ¼ b∂(σ²Δu) − ⅛ σ²Δ(σ²Δu)
//! ```
//!
//! `ψ_e` is the spatial form, with time derivatives of `u` eliminated through
//! the Kolmogorov equation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::Jet4;
use crate::problems::Problem;
use crate::quadrature::{pairwise_sum, Rule};

/// Gauss–Hermite nodes for the inner expectation over `X_t`.
pub const HERMITE_NODES: usize = 64;
/// Gauss–Legendre points inside each time panel.
const PANEL_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiKind {
    PsiI,
    PsiE,
    PsiIh { h: f64 },
}

impl std::str::FromStr for PsiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "psi_i" => Ok(PsiKind::PsiI),
            "psi_e" => Ok(PsiKind::PsiE),
            other => match other.strip_prefix("psi_ih:") {
                Some(h) => h
                    .parse::<f64>()
                    .ok()
                    .filter(|h| *h > 0.0)
                    .map(|h| PsiKind::PsiIh { h })
                    .ok_or_else(|| Error::InvalidConfig(format!("bad step in '{other}'"))),
                None => Err(Error::InvalidConfig(format!(
                    "unknown density '{other}' (expected psi_i, psi_e, psi_ih:<h>)"
                ))),
            },
        }
    }
}

/// Values of the building blocks shared by the three densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiTerms {
    /// `b∂(b∂u)`
    pub b_d_bdu: f64,
    /// `σ²Δ(b∂u)`
    pub s2_lap_bdu: f64,
    /// `b²Δu`
    pub b2_lap_u: f64,
    /// `σ⁴∂⁴u`
    pub s4_d4u: f64,
    /// `b∂(σ²Δu)`
    pub b_d_s2lapu: f64,
    /// `σ²Δ(σ²Δu)`
    pub s2_lap_s2lapu: f64,
    /// `bσ²∂³u`
    pub b_s2_d3u: f64,
    /// `σ²b''∂u`
    pub s2_b2_du: f64,
    /// `b'σ²Δu`
    pub b1_s2_lapu: f64,
    /// `b'` at the point, for `S_h`.
    pub b_slope: f64,
}

impl PsiTerms {
    pub fn new(b: &Jet4, sigma: &Jet4, u: &Jet4) -> Result<Self> {
        u.require(4)?;
        b.require(2)?;
        sigma.require(2)?;

        let du = u.derive();
        let lap_u = du.derive();
        let d3u = lap_u.derive();
        let d4u = d3u.derive();
        let s2 = *sigma * *sigma;
        let bdu = *b * du;
        let s2_lapu = s2 * lap_u;

        let s2v = s2.value();
        let bv = b.value();
        Ok(Self {
            b_d_bdu: (*b * bdu.derive()).d(0)?,
            s2_lap_bdu: s2v * bdu.laplacian().d(0)?,
            b2_lap_u: bv * bv * lap_u.d(0)?,
            s4_d4u: s2v * s2v * d4u.d(0)?,
            b_d_s2lapu: bv * s2_lapu.derive().d(0)?,
            s2_lap_s2lapu: s2v * s2_lapu.laplacian().d(0)?,
            b_s2_d3u: bv * s2v * d3u.d(0)?,
            s2_b2_du: s2v * b.d(2)? * du.d(0)?,
            b1_s2_lapu: b.d(1)? * s2v * lap_u.d(0)?,
            b_slope: b.d(1)?,
        })
    }

    pub fn psi_i(&self) -> f64 {
        0.5 * self.b_d_bdu + 0.25 * self.s2_lap_bdu - 0.5 * self.b2_lap_u + 0.125 * self.s4_d4u
            - 0.25 * self.b_d_s2lapu
            - 0.125 * self.s2_lap_s2lapu
    }

    pub fn psi_e(&self) -> f64 {
        0.5 * self.b2_lap_u + 0.5 * self.b_s2_d3u + 0.125 * self.s4_d4u
            - 0.5 * self.b_d_bdu
            - 0.25 * self.b_d_s2lapu
            - 0.25 * self.s2_lap_bdu
            - 0.125 * self.s2_lap_s2lapu
    }

    pub fn s_h(&self, h: f64) -> Result<f64> {
        let denom = 1.0 - h * self.b_slope;
        if denom.abs() < 1e-12 {
            return Err(Error::SingularResolvent { x: f64::NAN, h });
        }
        Ok(1.0 / denom)
    }

    pub fn psi_ih(&self, h: f64) -> Result<f64> {
        let s = self.s_h(h)?;
        Ok(0.5 * self.b_d_bdu - 0.5 * self.b2_lap_u
            + 0.25 * s * s * self.s2_b2_du
            + 0.25 * self.b_s2_d3u
            + 0.125 * self.s4_d4u
            + 0.5 * s * self.b1_s2_lapu
            - 0.25 * self.b_d_s2lapu
            - 0.125 * self.s2_lap_s2lapu)
    }

    pub fn eval(&self, kind: PsiKind) -> Result<f64> {
        match kind {
            PsiKind::PsiI => Ok(self.psi_i()),
            PsiKind::PsiE => Ok(self.psi_e()),
            PsiKind::PsiIh { h } => self.psi_ih(h),
        }
    }

    /// Sum of the magnitudes of all building blocks; the natural scale for
    /// relative comparisons of ψ values.
    pub fn scale(&self) -> f64 {
        [
            self.b_d_bdu,
            self.s2_lap_bdu,
            self.b2_lap_u,
            self.s4_d4u,
            self.b_d_s2lapu,
            self.s2_lap_s2lapu,
            self.b_s2_d3u,
            self.s2_b2_du,
            self.b1_s2_lapu,
        ]
        .iter()
        .map(|v| v.abs())
        .sum()
    }
}

pub fn eval_psi(kind: PsiKind, b: &Jet4, sigma: &Jet4, u: &Jet4) -> Result<f64> {
    PsiTerms::new(b, sigma, u)?.eval(kind)
}

/// `|ψ_i − (ψ_e − b²Δu + ½σ²Δ(b∂u) + b∂(b∂u) − ½bσ²∂³u)|`.
pub fn psi_identity_residual(b: &Jet4, sigma: &Jet4, u: &Jet4) -> Result<f64> {
    let t = PsiTerms::new(b, sigma, u)?;
    let rhs = t.psi_e() - t.b2_lap_u + 0.5 * t.s2_lap_bdu + t.b_d_bdu - 0.5 * t.b_s2_d3u;
    Ok((t.psi_i() - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiGap {
    /// `ψ_ih − ψ_i` from the two densities.
    pub gap: f64,
    /// `¼σ²(S_h²−1)b''∂u + ½b'(S_h−1)σ²Δu`.
    pub closed_form: f64,
    /// `C·h` bound on `|gap|` built from the jet magnitudes.
    pub bound: f64,
}

pub fn psi_ih_gap(b: &Jet4, sigma: &Jet4, u: &Jet4, h: f64) -> Result<PsiGap> {
    let t = PsiTerms::new(b, sigma, u)?;
    let s = t.s_h(h)?;
    let gap = t.psi_ih(h)? - t.psi_i();
    let closed_form = 0.25 * (s * s - 1.0) * t.s2_b2_du + 0.5 * (s - 1.0) * t.b1_s2_lapu;
    // S_h − 1 = h b' S_h
    let c = 0.25 * (t.b_slope * s * (s + 1.0)).abs() * t.s2_b2_du.abs()
        + 0.5 * (t.b_slope * s).abs() * t.b1_s2_lapu.abs();
    Ok(PsiGap { gap, closed_form, bound: c * h })
}

/// ψ at `(t, x)` for a problem with a closed-form `u`.
pub fn psi_at(p: &Problem, kind: PsiKind, t: f64, x: f64) -> Result<f64> {
    let u = p
        .u_jet(t, x)
        .ok_or_else(|| Error::Unsupported(format!("problem {} has no closed-form u", p.name)))?;
    eval_psi(kind, &p.b_jet(x), &p.sigma_jet(x), &u)
}

/// `E ψ(t, X_t)` under the exact marginal law.
pub fn expected_psi(p: &Problem, kind: PsiKind, t: f64, rule: &Rule) -> Result<f64> {
    let law = p.marginal_law(t)?;
    let mut failure = None;
    let value = law.expect(rule, |x| match psi_at(p, kind, t, x) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingConstant {
    pub value: f64,
    pub quad_nodes: usize,
    pub abs_err_est: f64,
}

fn check_expansion_inputs(p: &Problem) -> Result<()> {
    if !p.has_u_jet() || !p.has_marginal_law() {
        return Err(Error::Unsupported(format!(
            "problem {} needs a closed-form u and marginal law",
            p.name
        )));
    }
    Ok(())
}

fn time_integral(p: &Problem, kind: PsiKind, panels: usize, hermite: &Rule) -> Result<f64> {
    let legendre = Rule::gauss_legendre(PANEL_POINTS);
    let width = p.horizon / panels as f64;
    let per_panel: Vec<Result<Vec<f64>>> = (0..panels)
        .into_par_iter()
        .map(|i| {
            let mid = (i as f64 + 0.5) * width;
            legendre
                .nodes
                .iter()
                .zip(&legendre.weights)
                .map(|(&z, &w)| Ok(0.5 * width * w * expected_psi(p, kind, mid + 0.5 * width * z, hermite)?))
                .collect()
        })
        .collect();
    let mut terms = Vec::with_capacity(panels * PANEL_POINTS);
    for panel in per_panel {
        terms.extend(panel?);
    }
    Ok(pairwise_sum(&terms))
}

/// `C₁ = ∫₀ᵀ E ψ(t, X_t) dt` by composite Gauss–Legendre in time (`quad_nodes`
/// panels) and Gauss–Hermite over the marginal law. The error estimate is the
/// change under doubling the panel count.
pub fn leading_constant(p: &Problem, kind: PsiKind, quad_nodes: usize) -> Result<LeadingConstant> {
    check_expansion_inputs(p)?;
    if quad_nodes == 0 {
        return Err(Error::InvalidConfig("quad_nodes must be positive".into()));
    }
    let hermite = Rule::gauss_hermite(HERMITE_NODES);
    let value = time_integral(p, kind, quad_nodes, &hermite)?;
    let refined = time_integral(p, kind, 2 * quad_nodes, &hermite)?;
    Ok(LeadingConstant {
        value,
        quad_nodes,
        abs_err_est: (refined - value).abs(),
    })
}

/// `h Σ_{k<N} E ψ(t_k, X_{t_k})` under the exact marginal laws.
pub fn riemann_psi_sum(p: &Problem, kind: PsiKind, n_steps: usize) -> Result<f64> {
    check_expansion_inputs(p)?;
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be positive".into()));
    }
    let hermite = Rule::gauss_hermite(HERMITE_NODES);
    let h = p.horizon / n_steps as f64;
    let terms = (0..n_steps)
        .map(|k| expected_psi(p, kind, k as f64 * h, &hermite))
        .collect::<Result<Vec<_>>>()?;
    Ok(h * pairwise_sum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiSample {
    pub t: f64,
    pub x: f64,
    pub psi: f64,
}

/// ψ on an `nt × nx` grid over `[0, T] × [x0 − 3, x0 + 3]`.
pub fn psi_grid(p: &Problem, kind: PsiKind, nt: usize, nx: usize) -> Result<Vec<PsiSample>> {
    if nt < 2 || nx < 2 {
        return Err(Error::InvalidConfig("psi grid needs at least 2x2 points".into()));
    }
    let mut out = Vec::with_capacity(nt * nx);
    for i in 0..nt {
        let t = p.horizon * i as f64 / (nt - 1) as f64;
        for j in 0..nx {
            let x = p.x0 - 3.0 + 6.0 * j as f64 / (nx - 1) as f64;
            out.push(PsiSample { t, x, psi: psi_at(p, kind, t, x)? });
        }
    }
    Ok(out)
}
