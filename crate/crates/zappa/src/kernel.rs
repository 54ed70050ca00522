//! Microscale interaction kernels and their local moment operators.
//!
//! Kernels in scope are homogeneous in x with one-sided (rightward) jump
//! laws whose y-dependence enters through parameters such as v(y), plus
//! cross-channel uniform remixing at unit rate. Their n-th x-moments act on
//! cross-channel functions as
//!
//!   order 0:   u -> cross_mean(u) - u          (remixing)
//!   order n:   u -> m_n(y) * u,  m_n = (-1)^n mu_n / n!
//!
//! where mu_n(y) is the n-th raw moment of the jump-length law. For the
//! exponential law with mean v(y), mu_n = n! v^n, so m_n = (-v)^n with no
//! quadrature at all.

use nalgebra::DMatrix;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::poly::YPolynomial;
use crate::profile::{CrossField, CrossSection, VelocityProfile};
use crate::rational::{factorial, Rat};

/// Jump-law moment of one order, given exactly or per node.
#[derive(Debug, Clone)]
pub enum MomentSpec {
    Poly(YPolynomial),
    Nodes(Vec<f64>),
    Divergent,
}

/// One-sided jump law described by its raw moments mu_n(y), with an optional
/// sampled density for the deterministic solver's quadrature path.
#[derive(Debug, Clone)]
pub struct GeneralKernel {
    moments: Vec<MomentSpec>,
    density: Option<SampledDensity>,
}

/// Jump-length density phi(s) sampled on the uniform grid s = m * ds,
/// one row per cross-section node.
#[derive(Debug, Clone)]
pub struct SampledDensity {
    pub ds: f64,
    pub per_node: Vec<Vec<f64>>,
}

impl GeneralKernel {
    /// `moments[n]` is mu_n; mu_0 must be identically one (a jump law is a
    /// probability density).
    pub fn new(moments: Vec<MomentSpec>, density: Option<SampledDensity>) -> Result<Self> {
        match moments.first() {
            Some(MomentSpec::Poly(p)) if *p == YPolynomial::one() => {}
            Some(MomentSpec::Nodes(vals)) if vals.iter().all(|v| (v - 1.0).abs() < 1e-12) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "general kernel must provide mu_0 identically 1".into(),
                ))
            }
        }
        Ok(Self { moments, density })
    }

    pub fn density(&self) -> Option<&SampledDensity> {
        self.density.as_ref()
    }
}

/// The microscale interaction kernel family.
#[derive(Debug, Clone)]
pub enum JumpKernel {
    /// Jump lengths exponentially distributed with mean v(y).
    Exponential,
    /// Arbitrary one-sided law given through its moment table.
    GeneralOneSided(GeneralKernel),
}

/// Result of a moment-existence check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentCheck {
    pub exists: bool,
    /// Lowest order <= n that diverges or is missing, when `exists` is false.
    pub first_failing: Option<usize>,
}

/// Checks that all moments up to order n are available and finite.
pub fn moment_exists(n: usize, kernel: &JumpKernel) -> MomentCheck {
    match kernel {
        JumpKernel::Exponential => MomentCheck {
            exists: true,
            first_failing: None,
        },
        JumpKernel::GeneralOneSided(g) => {
            for order in 0..=n {
                let ok = match g.moments.get(order) {
                    Some(MomentSpec::Poly(_)) => true,
                    Some(MomentSpec::Nodes(vals)) => vals.iter().all(|v| v.is_finite()),
                    Some(MomentSpec::Divergent) | None => false,
                };
                if !ok {
                    return MomentCheck {
                        exists: false,
                        first_failing: Some(order),
                    };
                }
            }
            MomentCheck {
                exists: true,
                first_failing: None,
            }
        }
    }
}

#[derive(Debug, Clone)]
enum MomentAction {
    /// Order 0: u -> cross_mean(u) - u.
    MeanDeviation,
    /// Order >= 1: pointwise multiplication by m_n(y).
    Multiply {
        values: CrossField,
        poly: Option<YPolynomial>,
    },
}

/// The y-operator of one kernel moment.
#[derive(Debug, Clone)]
pub struct MomentOperator {
    order: usize,
    action: MomentAction,
}

/// Builds the moment operator of order n for the given kernel and profile.
pub fn moment_operator(
    n: usize,
    kernel: &JumpKernel,
    v: &VelocityProfile,
    cs: &CrossSection,
) -> Result<MomentOperator> {
    let check = moment_exists(n, kernel);
    if !check.exists {
        return Err(Error::MomentDivergence {
            order: check.first_failing.unwrap_or(n),
        });
    }
    if n == 0 {
        return Ok(MomentOperator {
            order: 0,
            action: MomentAction::MeanDeviation,
        });
    }
    let action = match kernel {
        JumpKernel::Exponential => {
            let v_nodes = v.eval(cs)?;
            let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
            let values = CrossField::new(
                v_nodes
                    .values()
                    .iter()
                    .map(|x| sign * x.powi(n as i32))
                    .collect(),
            );
            let poly = v.as_poly().map(|p| {
                let neg = -p;
                let mut acc = YPolynomial::one();
                for _ in 0..n {
                    acc = &acc * &neg;
                }
                acc
            });
            MomentAction::Multiply { values, poly }
        }
        JumpKernel::GeneralOneSided(g) => {
            let scale = Rat::new(
                if n.is_multiple_of(2) { 1.into() } else { (-1).into() },
                factorial(n),
            );
            match &g.moments[n] {
                MomentSpec::Poly(mu) => {
                    let m = mu.scale(&scale);
                    let values = m.sample(cs);
                    MomentAction::Multiply {
                        values,
                        poly: Some(m),
                    }
                }
                MomentSpec::Nodes(vals) => {
                    if vals.len() != cs.n_nodes() {
                        return Err(Error::SizeMismatch(format!(
                            "moment table row has {} values, cross-section has {} nodes",
                            vals.len(),
                            cs.n_nodes()
                        )));
                    }
                    let s = scale.to_f64().unwrap_or(f64::NAN);
                    let values = CrossField::new(vals.iter().map(|m| m * s).collect());
                    MomentAction::Multiply { values, poly: None }
                }
                MomentSpec::Divergent => unreachable!("checked by moment_exists"),
            }
        }
    };
    Ok(MomentOperator { order: n, action })
}

impl MomentOperator {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Applies the operator to a sampled cross-channel field.
    pub fn apply(&self, f: &CrossField, cs: &CrossSection) -> Result<CrossField> {
        if f.len() != cs.n_nodes() {
            return Err(Error::SizeMismatch(format!(
                "field has {} values, cross-section has {} nodes",
                f.len(),
                cs.n_nodes()
            )));
        }
        match &self.action {
            MomentAction::MeanDeviation => {
                let mean = cs.cross_mean(f)?;
                Ok(CrossField::new(
                    f.values().iter().map(|u| mean - u).collect(),
                ))
            }
            MomentAction::Multiply { values, .. } => Ok(values.mul_pointwise(f)),
        }
    }

    /// Exact polynomial action; available when the multiplier has an exact
    /// polynomial form.
    pub fn apply_poly(&self, p: &YPolynomial) -> Result<YPolynomial> {
        match &self.action {
            MomentAction::MeanDeviation => {
                let mean = YPolynomial::constant(p.cross_mean());
                Ok(&mean - p)
            }
            MomentAction::Multiply { poly: Some(m), .. } => Ok(m * p),
            MomentAction::Multiply { poly: None, .. } => Err(Error::UnsupportedKernel(
                "moment has no exact polynomial form on this kernel".into(),
            )),
        }
    }

    /// Dense matrix of the operator on node values, quadrature inner product.
    pub fn matrix(&self, cs: &CrossSection) -> DMatrix<f64> {
        let n = cs.n_nodes();
        match &self.action {
            MomentAction::MeanDeviation => {
                let mut m = DMatrix::from_element(n, n, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = 0.5 * cs.weights()[j] - if i == j { 1.0 } else { 0.0 };
                    }
                }
                m
            }
            MomentAction::Multiply { values, .. } => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values.values()))
            }
        }
    }

    /// The multiplier m_n(y) as an exact polynomial, when available.
    pub fn poly(&self) -> Option<&YPolynomial> {
        match &self.action {
            MomentAction::Multiply { poly, .. } => poly.as_ref(),
            MomentAction::MeanDeviation => None,
        }
    }
}

/// Whether every moment operator up to the given order has an exact
/// polynomial multiplier (order 0 is always exact).
pub fn exact_path_available(order: usize, kernel: &JumpKernel, v: &VelocityProfile) -> bool {
    match kernel {
        JumpKernel::Exponential => v.as_poly().is_some(),
        JumpKernel::GeneralOneSided(g) => {
            (1..=order).all(|n| matches!(g.moments.get(n), Some(MomentSpec::Poly(_))))
        }
    }
}
