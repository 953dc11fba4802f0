//! Custom affine problems from a TOML key/value file.
//!
//! ```toml
//! name = "slow-ou"          # optional, defaults to "custom"
//! x0 = 1.0
//! horizon = 2.0
//! theta = 0.5               # b(x) = -theta x   (or: mu = 0.05 for b(x) = mu x)
//! sigma_const = 0.3         # σ(x) = sigma_const + sigma_prop x; give one or both
//! f_poly_coeffs = [0.0, 0.0, 1.0]   # f(x) = Σ c_j x^j, increasing degree
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::problems::{Polynomial, Problem};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: Option<String>,
    x0: f64,
    horizon: f64,
    theta: Option<f64>,
    mu: Option<f64>,
    sigma_const: Option<f64>,
    sigma_prop: Option<f64>,
    f_poly_coeffs: Vec<f64>,
}

pub fn parse_problem(text: &str) -> Result<Problem> {
    let file: ProblemFile =
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("problem file: {e}")))?;
    let b1 = match (file.theta, file.mu) {
        (Some(theta), None) => -theta,
        (None, Some(mu)) => mu,
        (None, None) => 0.0,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("give either theta or mu, not both".into()))
        }
    };
    if file.sigma_const.is_none() && file.sigma_prop.is_none() {
        return Err(Error::InvalidConfig(
            "problem file needs sigma_const and/or sigma_prop".into(),
        ));
    }
    if file.f_poly_coeffs.is_empty() || file.f_poly_coeffs.len() > 9 {
        return Err(Error::InvalidConfig(
            "f_poly_coeffs must hold 1 to 9 coefficients (degree <= 8)".into(),
        ));
    }
    let problem = Problem::affine(
        file.name.as_deref().unwrap_or("custom"),
        0.0,
        b1,
        file.sigma_const.unwrap_or(0.0),
        file.sigma_prop.unwrap_or(0.0),
        Polynomial(file.f_poly_coeffs),
        file.x0,
        file.horizon,
    );
    problem.validate()?;
    Ok(problem)
}

pub fn load_problem(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_problem(&text)
}
