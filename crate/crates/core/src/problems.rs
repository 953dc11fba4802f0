//! Benchmark SDE problems `dX = b(X) dt + σ(X) dW`, `X_0 = x0`, with the
//! closed-form Kolmogorov solution `u(t, x) = E f(X_T^{t,x})` where one exists.
//!
//! Affine problems `b(x) = b0 + b1·x`, `σ(x) = s0 + s1·x` cover Brownian
//! motion, Ornstein–Uhlenbeck and geometric Brownian motion. Two sub-families
//! have an exact marginal law and therefore an exact `u` for polynomial
//! payoffs:
//!
//! * additive noise (`s1 = 0`): `X_T^{t,x}` is Gaussian;
//! * linear multiplicative (`b0 = s0 = 0`): `X_T^{t,x}` is `x` times a lognormal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::Jet4;

/// Polynomial `Σ c_j x^j` stored by increasing degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn monomial(degree: usize) -> Self {
        let mut c = vec![0.0; degree + 1];
        c[degree] = 1.0;
        Self(c)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Self(vec![0.0]);
        }
        Self(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        )
    }

    /// Jet of the polynomial at `x` (exact through order 4).
    pub fn jet(&self, x: f64) -> Jet4 {
        let mut d = [0.0; 5];
        let mut p = self.clone();
        for slot in &mut d {
            *slot = p.eval(x);
            p = p.derivative();
        }
        Jet4::new(d)
    }

    /// `E p(mean + sqrt(variance)·Z)` for standard normal `Z`, via Gaussian moments.
    pub fn gaussian_expectation(&self, mean: f64, variance: f64) -> f64 {
        let sd = variance.max(0.0).sqrt();
        self.0
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                if c == 0.0 {
                    return 0.0;
                }
                let raw: f64 = (0..=j)
                    .step_by(2)
                    .map(|i| binomial(j, i) * mean.powi((j - i) as i32) * sd.powi(i as i32) * normal_moment(i))
                    .sum();
                c * raw
            })
            .sum()
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `E Z^k` for standard normal `Z`: `(k-1)!!` for even `k`, zero for odd.
pub(crate) fn normal_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    (1..k).step_by(2).map(|i| i as f64).product()
}

/// Drift and diffusion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dynamics {
    /// `b(x) = b0 + b1·x`, `σ(x) = s0 + s1·x`.
    Affine { b0: f64, b1: f64, s0: f64, s1: f64 },
    /// `b(x) = tanh(x)`, `σ(x) = c·sqrt(1 + x²)`.
    Tanh { c: f64 },
}

/// Terminal test function `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "coefficients", rename_all = "snake_case")]
pub enum Payoff {
    Polynomial(Polynomial),
    Cos,
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Polynomial(p) => p.eval(x),
            Payoff::Cos => x.cos(),
        }
    }

    pub fn jet(&self, x: f64) -> Jet4 {
        match self {
            Payoff::Polynomial(p) => p.jet(x),
            Payoff::Cos => {
                let (s, c) = x.sin_cos();
                Jet4::new([c, -s, -c, s, c])
            }
        }
    }

    pub fn as_polynomial(&self) -> Option<&Polynomial> {
        match self {
            Payoff::Polynomial(p) => Some(p),
            Payoff::Cos => None,
        }
    }
}

/// Exact law of `X_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarginalLaw {
    Dirac { at: f64 },
    Gaussian { mean: f64, variance: f64 },
    /// `X = scale · exp(log_mean + sqrt(log_variance)·Z)`.
    Lognormal { scale: f64, log_mean: f64, log_variance: f64 },
}

impl MarginalLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            MarginalLaw::Dirac { at } => at,
            MarginalLaw::Gaussian { mean, .. } => mean,
            MarginalLaw::Lognormal { scale, log_mean, log_variance } => {
                scale * (log_mean + 0.5 * log_variance).exp()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MarginalLaw::Dirac { .. } => 0.0,
            MarginalLaw::Gaussian { variance, .. } => variance,
            MarginalLaw::Lognormal { scale, log_mean, log_variance } => {
                scale * scale * (2.0 * log_mean + log_variance).exp() * log_variance.exp_m1()
            }
        }
    }

    /// Maps a standard normal draw to a draw from this law.
    pub fn transform(&self, z: f64) -> f64 {
        match *self {
            MarginalLaw::Dirac { at } => at,
            MarginalLaw::Gaussian { mean, variance } => mean + variance.sqrt() * z,
            MarginalLaw::Lognormal { scale, log_mean, log_variance } => {
                scale * (log_mean + log_variance.sqrt() * z).exp()
            }
        }
    }

    /// `E g(X)` with a Gauss–Hermite rule (Hermite in log-space for lognormal).
    pub fn expect(&self, rule: &crate::quadrature::Rule, mut g: impl FnMut(f64) -> f64) -> f64 {
        match self {
            MarginalLaw::Dirac { at } => g(*at),
            _ => rule.normal_expectation(|z| g(self.transform(z))),
        }
    }
}

/// `(e^{a·τ} - 1)/a`, continuous at `a = 0`.
fn growth(a: f64, tau: f64) -> f64 {
    if a == 0.0 {
        tau
    } else {
        (a * tau).exp_m1() / a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub x0: f64,
    pub horizon: f64,
    pub dynamics: Dynamics,
    pub payoff: Payoff,
    /// Bound on `sup |b'|`, used by the step-size guard.
    pub lip_b: f64,
}

impl Problem {
    /// Brownian motion `dX = s dW` with `f(x) = x⁴`.
    pub fn bm(s: f64, x0: f64, horizon: f64) -> Self {
        Self::affine("bm", 0.0, 0.0, s, 0.0, Polynomial::monomial(4), x0, horizon)
    }

    /// Ornstein–Uhlenbeck `dX = -θX dt + σ dW` with `f(x) = x²`.
    pub fn ou(theta: f64, sigma: f64, x0: f64, horizon: f64) -> Self {
        Self::affine("ou", 0.0, -theta, sigma, 0.0, Polynomial::monomial(2), x0, horizon)
    }

    /// Geometric Brownian motion `dX = μX dt + sX dW` with `f(x) = x²`.
    pub fn gbm(mu: f64, s: f64, x0: f64, horizon: f64) -> Self {
        Self::affine("gbm", 0.0, mu, 0.0, s, Polynomial::monomial(2), x0, horizon)
    }

    /// `dX = tanh(X) dt + c·sqrt(1+X²) dW` with `f(x) = cos x`.
    pub fn tanh(c: f64, x0: f64, horizon: f64) -> Self {
        Self {
            name: "tanh".into(),
            x0,
            horizon,
            dynamics: Dynamics::Tanh { c },
            payoff: Payoff::Cos,
            lip_b: 1.0,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn affine(
        name: &str,
        b0: f64,
        b1: f64,
        s0: f64,
        s1: f64,
        payoff: Polynomial,
        x0: f64,
        horizon: f64,
    ) -> Self {
        Self {
            name: name.into(),
            x0,
            horizon,
            dynamics: Dynamics::Affine { b0, b1, s0, s1 },
            payoff: Payoff::Polynomial(payoff),
            lip_b: b1.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.horizon, self.lip_b].iter().all(|v| v.is_finite());
        if !finite || self.horizon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "problem {}: x0 and horizon must be finite with horizon > 0",
                self.name
            )));
        }
        if let Payoff::Polynomial(p) = &self.payoff {
            if p.0.is_empty() || p.0.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "problem {}: payoff polynomial needs finite coefficients",
                    self.name
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        match self.dynamics {
            Dynamics::Affine { b0, b1, .. } => b0 + b1 * x,
            Dynamics::Tanh { .. } => x.tanh(),
        }
    }

    #[inline]
    pub fn drift_slope(&self, x: f64) -> f64 {
        match self.dynamics {
            Dynamics::Affine { b1, .. } => b1,
            Dynamics::Tanh { .. } => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// `(b(x), b'(x))` with a single transcendental evaluation.
    #[inline]
    pub fn drift_with_slope(&self, x: f64) -> (f64, f64) {
        match self.dynamics {
            Dynamics::Affine { b0, b1, .. } => (b0 + b1 * x, b1),
            Dynamics::Tanh { .. } => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
        }
    }

    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        match self.dynamics {
            Dynamics::Affine { s0, s1, .. } => s0 + s1 * x,
            Dynamics::Tanh { c } => c * x.hypot(1.0),
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        self.payoff.eval(x)
    }

    pub fn b_jet(&self, x: f64) -> Jet4 {
        match self.dynamics {
            Dynamics::Affine { b0, b1, .. } => Jet4::new([b0 + b1 * x, b1, 0.0, 0.0, 0.0]),
            Dynamics::Tanh { .. } => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                Jet4::new([
                    t,
                    s,
                    -2.0 * t * s,
                    (6.0 * t * t - 2.0) * s,
                    s * (16.0 * t - 24.0 * t * t * t),
                ])
            }
        }
    }

    pub fn sigma_jet(&self, x: f64) -> Jet4 {
        match self.dynamics {
            Dynamics::Affine { s0, s1, .. } => Jet4::new([s0 + s1 * x, s1, 0.0, 0.0, 0.0]),
            Dynamics::Tanh { c } => {
                let g = x.hypot(1.0);
                let g2 = g * g;
                Jet4::new([
                    c * g,
                    c * x / g,
                    c / (g2 * g),
                    -3.0 * c * x / (g2 * g2 * g),
                    c * (12.0 * x * x - 3.0) / (g2 * g2 * g2 * g),
                ])
            }
        }
    }

    pub fn f_jet(&self, x: f64) -> Jet4 {
        self.payoff.jet(x)
    }

    /// True when `b` is affine, so one implicit step is a linear solve.
    pub fn is_affine(&self) -> bool {
        matches!(self.dynamics, Dynamics::Affine { .. })
    }

    fn closed_family(&self) -> Option<ClosedFamily> {
        match self.dynamics {
            Dynamics::Affine { b0, b1, s0, s1 } if s1 == 0.0 => {
                Some(ClosedFamily::Gaussian { b0, b1, s0 })
            }
            Dynamics::Affine { b0, b1, s0, s1 } if b0 == 0.0 && s0 == 0.0 => {
                Some(ClosedFamily::Lognormal { mu: b1, s: s1 })
            }
            _ => None,
        }
    }

    /// Exact law of `X_τ` started from `x` at time 0.
    fn transition(&self, x: f64, tau: f64) -> Result<MarginalLaw> {
        if tau == 0.0 {
            return Ok(MarginalLaw::Dirac { at: x });
        }
        match self.closed_family() {
            Some(ClosedFamily::Gaussian { b0, b1, s0 }) => {
                let mean = x * (b1 * tau).exp() + b0 * growth(b1, tau);
                let variance = s0 * s0 * growth(2.0 * b1, tau);
                if variance == 0.0 {
                    Ok(MarginalLaw::Dirac { at: mean })
                } else {
                    Ok(MarginalLaw::Gaussian { mean, variance })
                }
            }
            Some(ClosedFamily::Lognormal { mu, s }) => {
                if s == 0.0 || x == 0.0 {
                    Ok(MarginalLaw::Dirac { at: x * (mu * tau).exp() })
                } else {
                    Ok(MarginalLaw::Lognormal {
                        scale: x,
                        log_mean: (mu - 0.5 * s * s) * tau,
                        log_variance: s * s * tau,
                    })
                }
            }
            None => Err(Error::Unsupported(format!(
                "problem {} has no closed-form marginal law",
                self.name
            ))),
        }
    }

    /// Exact law of `X_t` started from `x0`.
    pub fn marginal_law(&self, t: f64) -> Result<MarginalLaw> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::InvalidConfig(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        self.transition(self.x0, t)
    }

    pub fn has_marginal_law(&self) -> bool {
        self.closed_family().is_some()
    }

    pub fn has_u_jet(&self) -> bool {
        self.closed_family().is_some() && self.payoff.as_polynomial().is_some()
    }

    /// `u(t, x)` and `∂u .. ∂⁴u`, or `None` when no closed form is available.
    pub fn u_jet(&self, t: f64, x: f64) -> Option<Jet4> {
        let poly = self.payoff.as_polynomial()?;
        let tau = self.horizon - t;
        match self.closed_family()? {
            ClosedFamily::Gaussian { b0, b1, s0 } => {
                // ∂^k u = e^{k b1 τ} E f^{(k)}(X_T^{t,x}); the law's mean is affine in x.
                let mean = x * (b1 * tau).exp() + b0 * growth(b1, tau);
                let variance = s0 * s0 * growth(2.0 * b1, tau);
                let slope = (b1 * tau).exp();
                let mut d = [0.0; 5];
                let mut p = poly.clone();
                let mut factor = 1.0;
                for slot in &mut d {
                    *slot = factor * p.gaussian_expectation(mean, variance);
                    p = p.derivative();
                    factor *= slope;
                }
                Some(Jet4::new(d))
            }
            ClosedFamily::Lognormal { mu, s } => {
                // u = Σ c_j g_j(τ) x^j with g_j = exp(j μ τ + j(j-1) s² τ / 2)
                let scaled: Vec<f64> = poly
                    .coefficients()
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let j = j as f64;
                        c * (j * mu * tau + 0.5 * j * (j - 1.0) * s * s * tau).exp()
                    })
                    .collect();
                Some(Polynomial(scaled).jet(x))
            }
        }
    }

    /// Closed-form `E f(X_T)` from `x0`.
    pub fn exact_terminal(&self) -> Option<f64> {
        self.u_jet(0.0, self.x0).map(|j| j.value())
    }

    /// Smallest `N` with `(T/N)·lip_b <= 0.5`.
    pub fn min_steps(&self) -> usize {
        if self.lip_b <= 0.0 {
            return 1;
        }
        ((2.0 * self.horizon * self.lip_b).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy)]
enum ClosedFamily {
    Gaussian { b0: f64, b1: f64, s0: f64 },
    Lognormal { mu: f64, s: f64 },
}

/// The four standard benchmarks with their default parameters.
pub fn builtin_problems() -> Vec<Problem> {
    vec![
        Problem::bm(1.0, 0.0, 1.0),
        Problem::ou(1.0, 1.0, 1.0, 1.0),
        Problem::gbm(0.05, 0.2, 1.0, 1.0),
        Problem::tanh(0.2, 0.5, 1.0),
    ]
}

pub fn builtin_problem(name: &str) -> Result<Problem> {
    builtin_problems()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::InvalidConfig(format!("unknown problem '{name}' (expected bm, ou, gbm, tanh)")))
}

/// `|∂_t u + b ∂u + ½σ²Δu|` with `∂_t u` by second-order finite differences
/// (central in the interior, one-sided near `t = 0` and `t = T`).
pub fn kolmogorov_residual(p: &Problem, t: f64, x: f64, dt_step: f64) -> Result<f64> {
    if !p.has_u_jet() {
        return Err(Error::Unsupported(format!(
            "problem {} has no closed-form u",
            p.name
        )));
    }
    if !(dt_step > 0.0) || t < 0.0 || t >= p.horizon {
        return Err(Error::InvalidConfig(format!(
            "residual needs 0 <= t < T and dt_step > 0 (t = {t}, dt_step = {dt_step})"
        )));
    }
    let u = |s: f64| p.u_jet(s, x).expect("closed form checked above").value();
    let h = dt_step;
    let du_dt = if t - h >= 0.0 && t + h <= p.horizon {
        (u(t + h) - u(t - h)) / (2.0 * h)
    } else if t - h < 0.0 {
        (-3.0 * u(t) + 4.0 * u(t + h) - u(t + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * u(t) - 4.0 * u(t - h) + u(t - 2.0 * h)) / (2.0 * h)
    };
    let jet = p.u_jet(t, x).expect("closed form checked above");
    let sigma = p.diffusion(x);
    Ok((du_dt + p.drift(x) * jet.d(1)? + 0.5 * sigma * sigma * jet.d(2)?).abs())
}
