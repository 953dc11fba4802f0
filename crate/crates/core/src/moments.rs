//! Exact moment propagation through Euler steps that are affine in `(X_k, ΔW)`.
//!
//! For affine coefficients both schemes reduce to
//! `X_{k+1} = α X_k + β X_k ΔW + γ ΔW + δ`, so the raw moments of
//! `X_{k+1}` are a fixed linear map of those of `X_k`, with Gaussian
//! increment moments `E ΔW^{2j} = (2j-1)!! h^j` and zero odd moments.
//! This gives `E f(X_T^N)` for polynomial `f` with no sampling noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{binomial, normal_moment, Dynamics, Problem};
use crate::schemes::{SchemeConfig, SchemeKind};

pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    /// `m[j] = E X^j` for `j = 0..=order`.
    pub m: Vec<f64>,
}

impl MomentVector {
    pub fn dirac(x: f64, order: usize) -> Self {
        Self {
            m: (0..=order).map(|j| x.powi(j as i32)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.m.len() - 1
    }

    /// `m[0] = 1`, nonnegative even moments, and `m[2] >= m[1]²`, up to rounding.
    pub fn check_invariants(&self) -> bool {
        let scale = self.m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let slack = 1e-12 * scale;
        let unit = (self.m[0] - 1.0).abs() <= 1e-14;
        let even = self.m.iter().step_by(2).all(|&v| v >= -slack);
        let jensen = self.m.len() < 3 || self.m[2] - self.m[1] * self.m[1] >= -slack;
        unit && even && jensen
    }

    /// `Σ c_j m[j]`.
    pub fn expect_polynomial(&self, coeffs: &[f64]) -> Result<f64> {
        if coeffs.len() > self.m.len()
            && coeffs[self.m.len()..].iter().any(|&c| c != 0.0)
        {
            return Err(Error::Unsupported(format!(
                "polynomial of length {} exceeds moment order {}",
                coeffs.len(),
                self.order()
            )));
        }
        Ok(coeffs.iter().zip(&self.m).map(|(c, m)| c * m).sum())
    }
}

/// Coefficients of `X' = α X + β X ΔW + γ ΔW + δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineStep {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl AffineStep {
    pub fn for_scheme(p: &Problem, kind: SchemeKind, h: f64) -> Result<Self> {
        let Dynamics::Affine { b0, b1, s0, s1 } = p.dynamics else {
            return Err(Error::Unsupported(format!(
                "moment oracle needs affine coefficients; problem {} is not affine",
                p.name
            )));
        };
        Ok(match kind {
            SchemeKind::Explicit => Self {
                alpha: 1.0 + b1 * h,
                beta: s1,
                gamma: s0,
                delta: b0 * h,
            },
            SchemeKind::Implicit => {
                let denom = 1.0 - h * b1;
                if denom.abs() < 1e-12 {
                    return Err(Error::SingularResolvent { x: 0.0, h });
                }
                Self {
                    alpha: 1.0 / denom,
                    beta: s1 / denom,
                    gamma: s0 / denom,
                    delta: h * b0 / denom,
                }
            }
        })
    }

    /// Row `j` holds the coefficients of `E[X'^j | X]` as a polynomial in `X`.
    fn transition(&self, order: usize, h: f64) -> Vec<Vec<f64>> {
        let a = [self.delta, self.alpha];
        let b = [self.gamma, self.beta];
        let mut a_pow = vec![vec![1.0]];
        let mut b_pow = vec![vec![1.0]];
        for k in 1..=order {
            a_pow.push(poly_mul(&a_pow[k - 1], &a));
            b_pow.push(poly_mul(&b_pow[k - 1], &b));
        }
        (0..=order)
            .map(|j| {
                let mut row = vec![0.0; order + 1];
                for i in (0..=j).step_by(2) {
                    let w = binomial(j, i) * normal_moment(i) * h.powi((i / 2) as i32);
                    for (deg, c) in poly_mul(&a_pow[j - i], &b_pow[i]).into_iter().enumerate() {
                        row[deg] += w * c;
                    }
                }
                row
            })
            .collect()
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

fn check_preconditions(p: &Problem, order: usize) -> Result<()> {
    if order > MAX_MOMENT_ORDER {
        return Err(Error::Unsupported(format!(
            "moment order {order} exceeds {MAX_MOMENT_ORDER}"
        )));
    }
    let Some(poly) = p.payoff.as_polynomial() else {
        return Err(Error::Unsupported(format!(
            "moment oracle needs a polynomial payoff; problem {} has none",
            p.name
        )));
    };
    if poly.degree() > order {
        return Err(Error::Unsupported(format!(
            "payoff degree {} exceeds requested moment order {order}",
            poly.degree()
        )));
    }
    Ok(())
}

/// Moments `E (X^N_{t_k})^j` for every `k = 0..=N`.
pub fn moment_history(p: &Problem, cfg: &SchemeConfig, order: usize) -> Result<Vec<MomentVector>> {
    check_preconditions(p, order)?;
    cfg.validate(p)?;
    let h = cfg.step_size(p);
    let matrix = AffineStep::for_scheme(p, cfg.kind, h)?.transition(order, h);
    let mut current = MomentVector::dirac(p.x0, order);
    let mut history = Vec::with_capacity(cfg.n_steps + 1);
    history.push(current.clone());
    for _ in 0..cfg.n_steps {
        let next = matrix
            .iter()
            .map(|row| row.iter().zip(&current.m).map(|(a, m)| a * m).sum())
            .collect();
        current = MomentVector { m: next };
        history.push(current.clone());
    }
    Ok(history)
}

/// Moments of `X^N_{t_N}`.
pub fn propagate_moments(p: &Problem, cfg: &SchemeConfig, order: usize) -> Result<MomentVector> {
    Ok(moment_history(p, cfg, order)?
        .pop()
        .expect("history holds at least the initial state"))
}

/// `E f(X^N_T)` from propagated moments.
pub fn expected_payoff(p: &Problem, cfg: &SchemeConfig) -> Result<f64> {
    let poly = p.payoff.as_polynomial().ok_or_else(|| {
        Error::Unsupported(format!("problem {} has a non-polynomial payoff", p.name))
    })?;
    let moments = propagate_moments(p, cfg, poly.degree())?;
    moments.expect_polynomial(poly.coefficients())
}

/// `E f(X^N_T) - E f(X_T)`, free of sampling noise.
pub fn weak_error_exact(p: &Problem, cfg: &SchemeConfig) -> Result<f64> {
    let exact = p.exact_terminal().ok_or_else(|| {
        Error::Unsupported(format!("problem {} has no exact terminal value", p.name))
    })?;
    Ok(expected_payoff(p, cfg)? - exact)
}
