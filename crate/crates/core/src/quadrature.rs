//! Gauss–Legendre and Gauss–Hermite rules, plus pairwise summation.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss–Legendre rule on [-1, 1].
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Gauss–Hermite rule for the weight `exp(-x²)` on the real line.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..m {
            // initial guesses for the largest roots first
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[n - 1],
                3 => 1.91 * z - 0.91 * nodes[n - 2],
                _ => 2.0 * z - nodes[n - i + 1],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let (p, d) = hermite_normalized(n, z);
                pp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() <= 1e-15 * (1.0 + z.abs()) {
                    break;
                }
            }
            let (_, d) = hermite_normalized(n, z);
            if d != 0.0 {
                pp = d;
            }
            nodes[n - 1 - i] = z;
            nodes[i] = -z;
            let w = 2.0 / (pp * pp);
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        Self { nodes, weights }
    }

    /// Expectation of `g(Z)` for a standard normal `Z` using a Hermite rule.
    pub fn normal_expectation(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(std::f64::consts::SQRT_2 * x))
            .collect();
        pairwise_sum(&terms) / PI.sqrt()
    }

    /// Composite integral of `g` over `[a, b]` split into `panels` equal panels.
    pub fn composite(&self, a: f64, b: f64, panels: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
        let width = (b - a) / panels as f64;
        let mut terms = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                terms.push(0.5 * width * w * g(mid + 0.5 * width * x));
            }
        }
        pairwise_sum(&terms)
    }
}

/// Legendre polynomial `P_n(z)` and its derivative.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = 0.0;
    for j in 1..=n {
        let p2 = p1;
        p1 = p0;
        let jf = j as f64;
        p0 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p2) / jf;
    }
    let d = n as f64 * (z * p0 - p1) / (z * z - 1.0);
    (p0, d)
}

/// Orthonormal Hermite function recurrence (numerically stable for large n).
fn hermite_normalized(n: usize, z: f64) -> (f64, f64) {
    let pim4 = PI.powf(-0.25);
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let d = (2.0 * n as f64).sqrt() * p2;
    (p1, d)
}

/// Pairwise (cascade) summation; the result does not depend on thread count
/// when callers pass terms in a fixed order.
pub fn pairwise_sum(terms: &[f64]) -> f64 {
    if terms.len() <= 8 {
        return terms.iter().sum();
    }
    let mid = terms.len() / 2;
    pairwise_sum(&terms[..mid]) + pairwise_sum(&terms[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 8, 16, 64] {
            let rule = Rule::gauss_legendre(n);
            for deg in 0..(2 * n).min(30) {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&x, &w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg} got={got}");
            }
        }
    }

    #[test]
    fn hermite_reproduces_gaussian_moments() {
        for n in [4, 20, 64, 128] {
            let rule = Rule::gauss_hermite(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-13, "n={n}");
            let mut double_fact = 1.0;
            for j in 0..(n.min(12)) {
                let k = 2 * j;
                let got = rule.normal_expectation(|z| z.powi(k as i32));
                assert!((got - double_fact).abs() < 1e-11 * double_fact, "n={n} k={k} got={got}");
                double_fact *= (k + 1) as f64;
            }
            let odd = rule.normal_expectation(|z| z.powi(5));
            assert!(odd.abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_smooth_expectation() {
        // E cos(Z) = exp(-1/2)
        let rule = Rule::gauss_hermite(64);
        let got = rule.normal_expectation(f64::cos);
        assert!((got - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn composite_integral() {
        let rule = Rule::gauss_legendre(8);
        let got = rule.composite(0.0, 2.0, 16, f64::exp);
        assert!((got - (2.0f64.exp() - 1.0)).abs() < 1e-13);
    }
}
