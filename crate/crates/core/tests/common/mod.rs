//! Shared helpers for the integration tests: a hand-expanded ψ oracle that
//! shares no code with the jet algebra, and a seeded source of random jets.

#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use weakerr::Jet4;

/// Plain derivative data `[g, g', g'', g''', g'''']`.
#[derive(Debug, Clone, Copy)]
pub struct Raw {
    pub b: [f64; 5],
    pub s: [f64; 5],
    pub u: [f64; 5],
}

/// Leibniz-expanded pieces, written out by hand.
struct Expanded {
    b_d_bdu: f64,
    s2_lap_bdu: f64,
    b2_lap_u: f64,
    s4_d4u: f64,
    b_d_s2lapu: f64,
    s2_lap_s2lapu: f64,
    b_s2_d3u: f64,
    s2_b2_du: f64,
    b1_s2_lapu: f64,
}

impl Raw {
    pub fn jets(&self) -> (Jet4, Jet4, Jet4) {
        (Jet4::new(self.b), Jet4::new(self.s), Jet4::new(self.u))
    }

    fn expand(&self) -> Expanded {
        let [b, b1, b2, ..] = self.b;
        let [s, s1, s2, ..] = self.s;
        let [_, u1, u2, u3, u4] = self.u;
        let sq = s * s;
        Expanded {
            // b (b' u' + b u'')
            b_d_bdu: b * (b1 * u1 + b * u2),
            // σ² (b'' u' + 2 b' u'' + b u''')
            s2_lap_bdu: sq * (b2 * u1 + 2.0 * b1 * u2 + b * u3),
            b2_lap_u: b * b * u2,
            s4_d4u: sq * sq * u4,
            // b (2σσ' u'' + σ² u''')
            b_d_s2lapu: b * (2.0 * s * s1 * u2 + sq * u3),
            // σ² ((2σ'² + 2σσ'') u'' + 4σσ' u''' + σ² u'''')
            s2_lap_s2lapu: sq * ((2.0 * s1 * s1 + 2.0 * s * s2) * u2 + 4.0 * s * s1 * u3 + sq * u4),
            b_s2_d3u: b * sq * u3,
            s2_b2_du: sq * b2 * u1,
            b1_s2_lapu: b1 * sq * u2,
        }
    }

    pub fn psi_i(&self) -> f64 {
        let e = self.expand();
        0.5 * e.b_d_bdu + 0.25 * e.s2_lap_bdu - 0.5 * e.b2_lap_u + 0.125 * e.s4_d4u
            - 0.25 * e.b_d_s2lapu
            - 0.125 * e.s2_lap_s2lapu
    }

    pub fn psi_e(&self) -> f64 {
        let e = self.expand();
        0.5 * e.b2_lap_u + 0.5 * e.b_s2_d3u + 0.125 * e.s4_d4u
            - 0.5 * e.b_d_bdu
            - 0.25 * e.b_d_s2lapu
            - 0.25 * e.s2_lap_bdu
            - 0.125 * e.s2_lap_s2lapu
    }

    pub fn psi_ih(&self, h: f64) -> f64 {
        let e = self.expand();
        let sh = 1.0 / (1.0 - h * self.b[1]);
        0.5 * e.b_d_bdu - 0.5 * e.b2_lap_u + 0.25 * sh * sh * e.s2_b2_du + 0.25 * e.b_s2_d3u
            + 0.125 * e.s4_d4u
            + 0.5 * sh * e.b1_s2_lapu
            - 0.25 * e.b_d_s2lapu
            - 0.125 * e.s2_lap_s2lapu
    }

    /// Sum of term magnitudes, the yardstick for relative comparisons.
    pub fn scale(&self) -> f64 {
        let e = self.expand();
        [
            e.b_d_bdu,
            e.s2_lap_bdu,
            e.b2_lap_u,
            e.s4_d4u,
            e.b_d_s2lapu,
            e.s2_lap_s2lapu,
            e.b_s2_d3u,
            e.s2_b2_du,
            e.b1_s2_lapu,
        ]
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE)
    }
}

pub struct Draws(ChaCha8Rng);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        // Box–Muller; the tests only need a reproducible Gaussian.
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn jet_data(&mut self) -> [f64; 5] {
        std::array::from_fn(|_| self.uniform(-2.0, 2.0))
    }

    pub fn raw(&mut self) -> Raw {
        Raw {
            b: self.jet_data(),
            s: self.jet_data(),
            u: self.jet_data(),
        }
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}
