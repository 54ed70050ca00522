//! Macroscale advection-diffusion solvers on the periodic domain.
//!
//! The spectral propagator is the reference: the PDE has constant
//! coefficients, so per-mode exponentiation is exact for the discrete modes.
//! The finite-difference path exists to cross-check the transform machinery.

use crate::error::{Error, Result};
use crate::fourier::Spectral;

/// Cross-sectionally averaged field U on the x-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroField {
    pub values: Vec<f64>,
    pub time: f64,
}

impl MacroField {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn domain_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Exact per-mode solution of U_t = a1 U_x + a2 U_xx after time t.
pub fn solve_spectral(
    a1: f64,
    a2: f64,
    u0: &MacroField,
    length: f64,
    t: f64,
) -> Result<MacroField> {
    if a2 < 0.0 {
        return Err(Error::IllPosed(format!(
            "negative diffusivity a2 = {a2} makes the macroscale equation ill-posed"
        )));
    }
    let sp = Spectral::new(u0.values.len(), length);
    let values = sp.advect_diffuse(&u0.values, a1, a2, t)?;
    Ok(MacroField::new(values, u0.time + t))
}

/// Classic RK4 with central differences; second order in space.
pub fn solve_fd(
    a1: f64,
    a2: f64,
    u0: &MacroField,
    length: f64,
    t: f64,
    dt: f64,
) -> Result<MacroField> {
    if a2 < 0.0 {
        return Err(Error::IllPosed(format!(
            "negative diffusivity a2 = {a2} makes the macroscale equation ill-posed"
        )));
    }
    let nx = u0.values.len();
    let h = length / nx as f64;
    let mut limit = f64::INFINITY;
    if a2 > 0.0 {
        limit = limit.min(0.4 * h * h / a2);
    }
    if a1 != 0.0 {
        limit = limit.min(0.5 * h / a1.abs());
    }
    if !(dt > 0.0) || dt > limit {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} violates the stability guard; use dt <= {limit:.6e}"
        )));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument("negative evolution time".into()));
    }

    let rhs = |u: &[f64], out: &mut [f64]| {
        for i in 0..nx {
            let im = if i == 0 { nx - 1 } else { i - 1 };
            let ip = if i == nx - 1 { 0 } else { i + 1 };
            let ux = (u[ip] - u[im]) / (2.0 * h);
            let uxx = (u[ip] - 2.0 * u[i] + u[im]) / (h * h);
            out[i] = a1 * ux + a2 * uxx;
        }
    };

    let n_steps = (t / dt).ceil().max(1.0) as usize;
    let step = t / n_steps as f64;
    let mut u = u0.values.clone();
    let mut k1 = vec![0.0; nx];
    let mut k2 = vec![0.0; nx];
    let mut k3 = vec![0.0; nx];
    let mut k4 = vec![0.0; nx];
    let mut stage = vec![0.0; nx];
    for _ in 0..n_steps {
        rhs(&u, &mut k1);
        for i in 0..nx {
            stage[i] = u[i] + 0.5 * step * k1[i];
        }
        rhs(&stage, &mut k2);
        for i in 0..nx {
            stage[i] = u[i] + 0.5 * step * k2[i];
        }
        rhs(&stage, &mut k3);
        for i in 0..nx {
            stage[i] = u[i] + step * k3[i];
        }
        rhs(&stage, &mut k4);
        for i in 0..nx {
            u[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(MacroField::new(u, u0.time + t))
}
