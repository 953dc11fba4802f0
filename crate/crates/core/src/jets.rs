//! Truncated spatial jets of order 4.
//!
//! A [`Jet4`] stores the value and the first four spatial derivatives of a
//! scalar function at a fixed point. Products follow the truncated Leibniz
//! rule and [`Jet4::derive`] shifts the coefficients down by one, so that
//! expressions such as `Δ(σ²Δu)` reduce to exact algebra on derivative data.
//!
//! Every jet carries a `valid_order`: the highest derivative that is
//! trustworthy. Shifting lowers it by one and binary operations take the
//! minimum of their operands. Reading past it is an error.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

const BINOMIAL: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet4 {
    d: [f64; 5],
    valid_order: usize,
}

impl Jet4 {
    /// Jet with all five coefficients trustworthy.
    pub fn new(d: [f64; 5]) -> Self {
        Self { d, valid_order: MAX_ORDER }
    }

    /// Jet whose coefficients above `valid_order` are zero-filled and
    /// marked unavailable.
    pub fn with_order(mut d: [f64; 5], valid_order: usize) -> Self {
        let valid_order = valid_order.min(MAX_ORDER);
        for slot in d.iter_mut().skip(valid_order + 1) {
            *slot = 0.0;
        }
        Self { d, valid_order }
    }

    pub fn constant(c: f64) -> Self {
        Self::new([c, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Jet of the identity map `x ↦ x` at `x`.
    pub fn variable(x: f64) -> Self {
        Self::new([x, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn valid_order(&self) -> usize {
        self.valid_order
    }

    /// The `k`-th derivative, or an error if `k` exceeds the valid order.
    pub fn d(&self, k: usize) -> Result<f64> {
        if k > self.valid_order {
            return Err(Error::InsufficientJetOrder {
                requested: k,
                valid: self.valid_order,
            });
        }
        Ok(self.d[k])
    }

    pub fn value(&self) -> f64 {
        self.d[0]
    }

    /// Raw coefficient storage, including zero-filled invalid slots.
    pub fn coefficients(&self) -> [f64; 5] {
        self.d
    }

    /// Fails unless the jet is valid at least through `order`.
    pub fn require(&self, order: usize) -> Result<()> {
        self.d(order).map(|_| ())
    }

    /// Spatial derivative: shifts coefficients left and lowers the valid order.
    ///
    /// Deriving a jet of valid order 0 leaves nothing trustworthy; the result
    /// reports valid order 0 with a zero value, and callers that need it must
    /// check [`Jet4::valid_order`] beforehand. Use [`Jet4::try_derive`] for a
    /// checked version.
    pub fn derive(&self) -> Self {
        let mut d = [0.0; 5];
        d[..4].copy_from_slice(&self.d[1..]);
        Self::with_order(d, self.valid_order.saturating_sub(1))
    }

    pub fn try_derive(&self) -> Result<Self> {
        if self.valid_order == 0 {
            return Err(Error::InsufficientJetOrder { requested: 1, valid: 0 });
        }
        Ok(self.derive())
    }

    /// Second spatial derivative `Δ`.
    pub fn laplacian(&self) -> Self {
        self.derive().derive()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut d = self.d;
        for v in &mut d {
            *v *= c;
        }
        Self { d, valid_order: self.valid_order }
    }

    pub fn is_finite(&self) -> bool {
        self.d.iter().all(|v| v.is_finite())
    }
}

impl Default for Jet4 {
    fn default() -> Self {
        Self::zero()
    }
}

impl Add for Jet4 {
    type Output = Jet4;

    fn add(self, rhs: Jet4) -> Jet4 {
        let mut d = [0.0; 5];
        for (k, v) in d.iter_mut().enumerate() {
            *v = self.d[k] + rhs.d[k];
        }
        Jet4::with_order(d, self.valid_order.min(rhs.valid_order))
    }
}

impl Sub for Jet4 {
    type Output = Jet4;

    fn sub(self, rhs: Jet4) -> Jet4 {
        self + (-rhs)
    }
}

impl Neg for Jet4 {
    type Output = Jet4;

    fn neg(self) -> Jet4 {
        self.scale(-1.0)
    }
}

impl Mul for Jet4 {
    type Output = Jet4;

    /// Leibniz rule truncated at order 4.
    fn mul(self, rhs: Jet4) -> Jet4 {
        let mut d = [0.0; 5];
        for (k, v) in d.iter_mut().enumerate() {
            *v = (0..=k)
                .map(|j| BINOMIAL[k][j] * self.d[j] * rhs.d[k - j])
                .sum();
        }
        Jet4::with_order(d, self.valid_order.min(rhs.valid_order))
    }
}

impl Mul<f64> for Jet4 {
    type Output = Jet4;

    fn mul(self, rhs: f64) -> Jet4 {
        self.scale(rhs)
    }
}

impl Mul<Jet4> for f64 {
    type Output = Jet4;

    fn mul(self, rhs: Jet4) -> Jet4 {
        rhs.scale(self)
    }
}
