//! Cross-channel discretization and jump-velocity profiles.
//!
//! The channel cross-section is the interval (-1, 1), discretized by
//! Gauss-Legendre quadrature. Gauss nodes are strictly interior, so profiles
//! such as v(y) = 1 - y^2 that vanish at the walls stay strictly positive at
//! every node.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::YPolynomial;
use crate::rational::{rat_from_f64, rat_int, Rat};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CrossSection {
    /// Builds the n-point Gauss-Legendre rule; exact for polynomials of
    /// degree <= 2n - 1.
    pub fn gauss_legendre(n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "cross-section needs at least 2 nodes, got {n_nodes}"
            )));
        }
        let n = n_nodes;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Newton iteration on the upper half; mirror for exact +/- symmetry.
        for k in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // cos() starts from the largest root, so k counts down from +1.
            nodes[n - 1 - k] = x;
            weights[n - 1 - k] = w;
            nodes[k] = -x;
            weights[k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cross-sectional mean (1/2) * integral over [-1, 1] of a sampled field.
    /// Summation order is fixed so results do not depend on thread count.
    pub fn cross_mean(&self, f: &CrossField) -> Result<f64> {
        if f.len() != self.n_nodes() {
            return Err(Error::SizeMismatch(format!(
                "field has {} values, cross-section has {} nodes",
                f.len(),
                self.n_nodes()
            )));
        }
        let mut acc = 0.0;
        for (w, v) in self.weights.iter().zip(f.values()) {
            acc += w * v;
        }
        Ok(0.5 * acc)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// A function of y sampled at the cross-section nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossField {
    values: Vec<f64>,
}

impl CrossField {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(c: f64, n: usize) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn add(&self, rhs: &CrossField) -> CrossField {
        Self::new(
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, rhs: &CrossField) -> CrossField {
        Self::new(
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn mul_pointwise(&self, rhs: &CrossField) -> CrossField {
        Self::new(
            self.values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a * b)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> CrossField {
        Self::new(self.values.iter().map(|a| a * s).collect())
    }

    pub fn shift(&self, c: f64) -> CrossField {
        Self::new(self.values.iter().map(|a| a + c).collect())
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The cross-channel jump-length mean v(y) > 0.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityProfile {
    /// Exact rational polynomial in y.
    Polynomial(YPolynomial),
    /// Values at the quadrature nodes of a fixed cross-section.
    Sampled(Vec<f64>),
}

impl VelocityProfile {
    /// The reference shear profile v(y) = 1 - y^2.
    pub fn parabolic() -> Self {
        VelocityProfile::Polynomial(YPolynomial::new(vec![rat_int(1), rat_int(0), rat_int(-1)]))
    }

    pub fn constant(c: Rat) -> Self {
        VelocityProfile::Polynomial(YPolynomial::constant(c))
    }

    pub fn from_f64_coeffs(coeffs: &[f64]) -> Result<Self> {
        let coeffs = coeffs
            .iter()
            .map(|&c| rat_from_f64(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(VelocityProfile::Polynomial(YPolynomial::new(coeffs)))
    }

    pub fn as_poly(&self) -> Option<&YPolynomial> {
        match self {
            VelocityProfile::Polynomial(p) => Some(p),
            VelocityProfile::Sampled(_) => None,
        }
    }

    /// Samples v at the quadrature nodes, rejecting any non-positive value.
    pub fn eval(&self, cs: &CrossSection) -> Result<CrossField> {
        let values = match self {
            VelocityProfile::Polynomial(p) => cs
                .nodes()
                .iter()
                .map(|&y| p.eval_f64(y))
                .collect::<Vec<_>>(),
            VelocityProfile::Sampled(v) => {
                if v.len() != cs.n_nodes() {
                    return Err(Error::SizeMismatch(format!(
                        "sampled profile has {} values, cross-section has {} nodes",
                        v.len(),
                        cs.n_nodes()
                    )));
                }
                v.clone()
            }
        };
        for (index, (&value, &y)) in values.iter().zip(cs.nodes()).enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidProfile { index, y, value });
            }
        }
        Ok(CrossField::new(values))
    }

    /// Pointwise evaluation anywhere in (-1, 1); only functional forms
    /// support this (the Monte Carlo engine needs off-node values).
    pub fn value_at(&self, y: f64) -> Result<f64> {
        match self {
            VelocityProfile::Polynomial(p) => Ok(p.eval_f64(y)),
            VelocityProfile::Sampled(_) => Err(Error::InvalidArgument(
                "sampled profiles are defined only at quadrature nodes".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_rule_is_the_textbook_one() {
        let cs = CrossSection::gauss_legendre(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(cs.nodes()[0], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(cs.nodes()[1], r, epsilon = 1e-15);
        assert_abs_diff_eq!(cs.weights()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cs.weights()[1], 1.0, epsilon = 1e-15);
        // Exact through degree 3 = 2n - 1.
        for k in 0..=3 {
            let f = CrossField::new(cs.nodes().iter().map(|y| y.powi(k)).collect());
            let exact = if k % 2 == 0 {
                1.0 / (k as f64 + 1.0)
            } else {
                0.0
            };
            assert_abs_diff_eq!(cs.cross_mean(&f).unwrap(), exact, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_single_node() {
        assert!(matches!(
            CrossSection::gauss_legendre(1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn weights_positive_sorted_interior_and_sum_to_two() {
        for n in 2..=64 {
            let cs = CrossSection::gauss_legendre(n).unwrap();
            let sum: f64 = cs.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-14, "n={n}: weight sum {sum}");
            assert!(cs.weights().iter().all(|&w| w > 0.0));
            for pair in cs.nodes().windows(2) {
                assert!(pair[0] < pair[1], "nodes not strictly sorted at n={n}");
            }
            assert!(cs.nodes()[0] > -1.0 && cs.nodes()[n - 1] < 1.0);
        }
    }

    #[test]
    fn integrates_monomials_exactly_up_to_degree_bound() {
        let cs = CrossSection::gauss_legendre(8).unwrap();
        for k in 0..=15 {
            let f = CrossField::new(cs.nodes().iter().map(|y| y.powi(k)).collect());
            let exact = if k % 2 == 0 {
                1.0 / (k as f64 + 1.0)
            } else {
                0.0
            };
            assert_abs_diff_eq!(cs.cross_mean(&f).unwrap(), exact, epsilon = 1e-14);
        }
        // y^2 with 8 nodes: mean 1/3, i.e. integral 2/3.
        let y2 = CrossField::new(cs.nodes().iter().map(|y| y * y).collect());
        assert_abs_diff_eq!(
            2.0 * cs.cross_mean(&y2).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn cross_mean_trivial_cases() {
        let cs = CrossSection::gauss_legendre(16).unwrap();
        let one = CrossField::constant(1.0, 16);
        assert_abs_diff_eq!(cs.cross_mean(&one).unwrap(), 1.0, epsilon = 1e-15);
        let y = CrossField::new(cs.nodes().to_vec());
        assert_abs_diff_eq!(cs.cross_mean(&y).unwrap(), 0.0, epsilon = 1e-15);
        let parab = VelocityProfile::parabolic().eval(&cs).unwrap();
        assert_abs_diff_eq!(cs.cross_mean(&parab).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn cross_mean_size_mismatch() {
        let cs = CrossSection::gauss_legendre(4).unwrap();
        let f = CrossField::constant(1.0, 5);
        assert!(matches!(cs.cross_mean(&f), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn quadrature_matches_exact_rational_mean() {
        // Quadrature equals the exact rational cross-mean to 1e-13 for
        // polynomials within the degree bound.
        let cs = CrossSection::gauss_legendre(5).unwrap();
        let p = YPolynomial::new(vec![
            rat(1, 3),
            rat(-2, 7),
            rat(5, 11),
            rat(1, 2),
            rat(-3, 13),
            rat(2, 9),
            rat(1, 17),
            rat(-1, 4),
            rat(1, 19),
        ]);
        let exact = crate::rational::rat_to_f64(&p.cross_mean());
        let numeric = cs.cross_mean(&p.sample(&cs)).unwrap();
        assert_abs_diff_eq!(numeric, exact, epsilon = 1e-13);
    }

    #[test]
    fn profile_evaluation_examples() {
        let cs = CrossSection::gauss_legendre(2).unwrap();
        let v = VelocityProfile::parabolic().eval(&cs).unwrap();
        // 1 - (1/sqrt(3))^2 = 2/3 at both nodes.
        assert_abs_diff_eq!(v.values()[1], 2.0 / 3.0, epsilon = 1e-15);

        let c = VelocityProfile::constant(rat(7, 2));
        let field = c.eval(&cs).unwrap();
        assert!(field.values().iter().all(|&x| x == 3.5));
    }

    #[test]
    fn profile_positivity_error_names_the_node() {
        let cs = CrossSection::gauss_legendre(4).unwrap();
        // v = y is negative at the two left nodes; node 0 is reported first.
        let v = VelocityProfile::Polynomial(YPolynomial::monomial(1));
        match v.eval(&cs) {
            Err(Error::InvalidProfile { index, y, value }) => {
                assert_eq!(index, 0);
                assert!(y < 0.0 && value < 0.0);
            }
            other => panic!("expected InvalidProfile, got {other:?}"),
        }
    }

    #[test]
    fn parabolic_at_origin_is_one() {
        let cs = CrossSection::gauss_legendre(5).unwrap();
        // 5-node rule contains y = 0.
        let v = VelocityProfile::parabolic().eval(&cs).unwrap();
        assert_abs_diff_eq!(v.values()[2], 1.0, epsilon = 1e-15);
    }
}
