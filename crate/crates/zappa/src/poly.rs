//! Exact rational polynomials in the cross-channel coordinate y.
//!
//! All arithmetic (sums, products, definite integrals over [-1, 1]) is exact;
//! this is what lets the derivation reproduce closed-form coefficients such
//! as -2/3 and 28/45 with no rounding at all.

use num_traits::Zero;
use std::ops::{Add, Mul, Neg, Sub};

use crate::profile::{CrossField, CrossSection};
use crate::rational::{rat_int, rat_to_f64, Rat};

/// Polynomial with exact rational coefficients, ascending powers of y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YPolynomial {
    coeffs: Vec<Rat>,
}

impl YPolynomial {
    /// Builds from ascending coefficients; trailing zeros are trimmed.
    pub fn new(mut coeffs: Vec<Rat>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn constant(c: Rat) -> Self {
        Self::new(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(rat_int(1))
    }

    /// The monomial y^k.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![rat_int(0); k + 1];
        coeffs[k] = rat_int(1);
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[Rat] {
        &self.coeffs
    }

    /// Coefficient of y^i (zero beyond the stored degree).
    pub fn coeff(&self, i: usize) -> Rat {
        self.coeffs.get(i).cloned().unwrap_or_else(|| rat_int(0))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, s: &Rat) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn eval_rat(&self, y: &Rat) -> Rat {
        let mut acc = rat_int(0);
        for c in self.coeffs.iter().rev() {
            acc = acc * y + c;
        }
        acc
    }

    pub fn eval_f64(&self, y: f64) -> f64 {
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * y + rat_to_f64(c);
        }
        acc
    }

    /// Exact definite integral over the channel cross-section [-1, 1];
    /// odd powers drop out.
    pub fn integral(&self) -> Rat {
        let mut total = rat_int(0);
        for (k, c) in self.coeffs.iter().enumerate() {
            if k % 2 == 0 {
                total += c * Rat::new(2.into(), ((k + 1) as i64).into());
            }
        }
        total
    }

    /// Exact cross-sectional mean (1/2) * integral over [-1, 1].
    pub fn cross_mean(&self) -> Rat {
        self.integral() / rat_int(2)
    }

    /// Samples the polynomial at the quadrature nodes.
    pub fn sample(&self, cs: &CrossSection) -> CrossField {
        CrossField::new(cs.nodes().iter().map(|&y| self.eval_f64(y)).collect())
    }

    pub fn coeffs_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(rat_to_f64).collect()
    }

    /// Minimum over a dense sample of [-1, 1]; used for positivity checks
    /// away from the quadrature nodes.
    pub fn grid_min(&self, n: usize) -> f64 {
        (0..=n)
            .map(|i| self.eval_f64(-1.0 + 2.0 * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Add for &YPolynomial {
    type Output = YPolynomial;
    fn add(self, rhs: &YPolynomial) -> YPolynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        YPolynomial::new((0..len).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &YPolynomial {
    type Output = YPolynomial;
    fn sub(self, rhs: &YPolynomial) -> YPolynomial {
        let len = self.coeffs.len().max(rhs.coeffs.len());
        YPolynomial::new((0..len).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &YPolynomial {
    type Output = YPolynomial;
    fn mul(self, rhs: &YPolynomial) -> YPolynomial {
        if self.is_zero() || rhs.is_zero() {
            return YPolynomial::zero();
        }
        let mut coeffs = vec![rat_int(0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        YPolynomial::new(coeffs)
    }
}

impl Neg for &YPolynomial {
    type Output = YPolynomial;
    fn neg(self) -> YPolynomial {
        YPolynomial::new(self.coeffs.iter().map(|c| -c).collect())
    }
}
