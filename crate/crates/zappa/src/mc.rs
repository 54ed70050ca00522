//! Jump-process Monte Carlo: the independent stochastic oracle.
//!
//! Each particle carries two independent unit-rate exponential clocks:
//! "zap" events redraw y uniformly on (-1, 1), "jump" events advance x by an
//! exponential length of mean v(y). Equivalently the next event arrives
//! after an Exp(mean 1/2) wait and its type is a fair coin.
//!
//! Reproducibility contract: particle p draws from a counter-based ChaCha
//! stream keyed by (seed, p), and all reductions use fixed-order pairwise
//! summation, so results are bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::profile::VelocityProfile;

/// Particle state along and across the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub t_outputs: Vec<f64>,
    /// Start all particles at this y instead of the zap-stationary uniform
    /// law; exposes the exp(-t) transient in the drift.
    pub initial_y: Option<f64>,
    /// Retain per-particle states for histogramming.
    pub keep_ensemble: bool,
}

impl McConfig {
    pub fn new(n_particles: usize, seed: u64, t_outputs: Vec<f64>) -> Self {
        Self {
            n_particles,
            seed,
            t_outputs,
            initial_y: None,
            keep_ensemble: false,
        }
    }
}

/// Sample moments of x per output time; standard errors are sample-moment
/// estimates over sqrt(n).
#[derive(Debug, Clone, PartialEq)]
pub struct McStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub se_var: Vec<f64>,
    /// `[time][particle]`, present when the config asked to keep it.
    pub ensemble: Option<Vec<Vec<Particle>>>,
}

fn validate(cfg: &McConfig, v: &VelocityProfile) -> Result<()> {
    if cfg.n_particles == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    if cfg.t_outputs.is_empty() {
        return Err(Error::InvalidArgument("no output times requested".into()));
    }
    if cfg.t_outputs[0] < 0.0 || cfg.t_outputs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "output times must be non-negative and strictly ascending".into(),
        ));
    }
    if let Some(y0) = cfg.initial_y {
        if !(-1.0 < y0 && y0 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "initial y = {y0} outside (-1, 1)"
            )));
        }
    }
    match v {
        VelocityProfile::Polynomial(p) => {
            // Positivity on the open interval; the walls may vanish.
            let interior_min = (0..4096)
                .map(|k| p.eval_f64(-1.0 + 2.0 * (k as f64 + 0.5) / 4096.0))
                .fold(f64::INFINITY, f64::min);
            if !(interior_min > 0.0) {
                return Err(Error::InvalidArgument(
                    "profile is not positive on the open channel".into(),
                ));
            }
            Ok(())
        }
        VelocityProfile::Sampled(_) => Err(Error::InvalidArgument(
            "monte carlo needs a functional profile; sampled profiles are node-only".into(),
        )),
    }
}

fn draw_uniform_y(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let y = rng.gen_range(-1.0..1.0);
        if -1.0 < y && y < 1.0 {
            return y;
        }
    }
}

fn simulate_one(p_index: u64, cfg: &McConfig, v: &VelocityProfile) -> Result<Vec<Particle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(p_index);
    let wait = Exp::new(2.0).expect("rate 2 is valid");

    let mut state = Particle {
        x: 0.0,
        y: cfg.initial_y.unwrap_or_else(|| draw_uniform_y(&mut rng)),
    };
    let mut t = 0.0;
    let mut out = Vec::with_capacity(cfg.t_outputs.len());
    let mut next = 0usize;
    while next < cfg.t_outputs.len() {
        let t_event = t + wait.sample(&mut rng);
        while next < cfg.t_outputs.len() && cfg.t_outputs[next] < t_event {
            out.push(state);
            next += 1;
        }
        if next == cfg.t_outputs.len() {
            break;
        }
        t = t_event;
        if rng.gen_bool(0.5) {
            state.y = draw_uniform_y(&mut rng);
        } else {
            let mean = v.value_at(state.y)?;
            if !(mean > 0.0) {
                return Err(Error::InvalidProfile {
                    index: 0,
                    y: state.y,
                    value: mean,
                });
            }
            state.x += Exp::new(1.0 / mean)
                .map_err(|e| Error::NumericalFailure(format!("bad jump rate: {e}")))?
                .sample(&mut rng);
        }
    }
    Ok(out)
}

/// Fixed-order pairwise summation; deterministic and accurate for large n.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        let mut acc = 0.0;
        for x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Event-driven simulation of the whole ensemble.
pub fn simulate(cfg: &McConfig, v: &VelocityProfile) -> Result<McStats> {
    validate(cfg, v)?;
    let traces: Vec<Vec<Particle>> = (0..cfg.n_particles as u64)
        .into_par_iter()
        .map(|p| simulate_one(p, cfg, v))
        .collect::<Result<_>>()?;

    let n = cfg.n_particles;
    let n_t = cfg.t_outputs.len();
    let mut mean = Vec::with_capacity(n_t);
    let mut var = Vec::with_capacity(n_t);
    let mut se_mean = Vec::with_capacity(n_t);
    let mut se_var = Vec::with_capacity(n_t);
    let mut xs = vec![0.0; n];
    let mut devs = vec![0.0; n];
    for ti in 0..n_t {
        for (p, trace) in traces.iter().enumerate() {
            xs[p] = trace[ti].x;
        }
        let m = pairwise_sum(&xs) / n as f64;
        for p in 0..n {
            devs[p] = (xs[p] - m) * (xs[p] - m);
        }
        let m2 = pairwise_sum(&devs) / n as f64;
        for p in 0..n {
            devs[p] = devs[p] * devs[p];
        }
        let m4 = pairwise_sum(&devs) / n as f64;
        let sample_var = if n > 1 {
            m2 * n as f64 / (n as f64 - 1.0)
        } else {
            0.0
        };
        mean.push(m);
        var.push(sample_var);
        se_mean.push((sample_var / n as f64).sqrt());
        se_var.push(((m4 - m2 * m2).max(0.0) / n as f64).sqrt());
    }

    let ensemble = cfg.keep_ensemble.then(|| {
        (0..n_t)
            .map(|ti| traces.iter().map(|trace| trace[ti]).collect())
            .collect()
    });

    Ok(McStats {
        times: cfg.t_outputs.clone(),
        mean,
        var,
        se_mean,
        se_var,
        ensemble,
    })
}

/// Drift and variance-rate estimates with combined standard errors, by
/// ordinary least squares over the second half of the output times (the
/// first half carries the O(1) transient).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFit {
    pub drift: f64,
    pub drift_se: f64,
    pub var_rate: f64,
    pub var_rate_se: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

pub fn fit_transport_coefficients(stats: &McStats) -> Result<CoefficientFit> {
    let t_first = *stats
        .times
        .first()
        .ok_or_else(|| Error::InvalidArgument("no output times in the statistics".into()))?;
    let t_last = *stats.times.last().unwrap();
    let t_mid = 0.5 * (t_first + t_last);
    let idx: Vec<usize> = (0..stats.times.len())
        .filter(|&i| stats.times[i] >= t_mid)
        .collect();
    if idx.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two output times in the fit window".into(),
        ));
    }
    let slope = |values: &[f64], ses: &[f64]| -> (f64, f64) {
        let tbar = idx.iter().map(|&i| stats.times[i]).sum::<f64>() / idx.len() as f64;
        let sxx: f64 = idx.iter().map(|&i| (stats.times[i] - tbar).powi(2)).sum();
        let mut s = 0.0;
        let mut var = 0.0;
        for &i in &idx {
            let c = (stats.times[i] - tbar) / sxx;
            s += c * values[i];
            var += c * c * ses[i] * ses[i];
        }
        (s, var.sqrt())
    };
    let (drift, drift_se) = slope(&stats.mean, &stats.se_mean);
    let (var_rate, var_rate_se) = slope(&stats.var, &stats.se_var);
    Ok(CoefficientFit {
        drift,
        drift_se,
        var_rate,
        var_rate_se,
        window: (stats.times[idx[0]], t_last),
        n_points: idx.len(),
    })
}

/// Normalized 2-D histogram: density integrates to one over its support.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub t: f64,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `[ix][iy]` density values.
    pub density: Vec<Vec<f64>>,
}

impl Histogram {
    pub fn dx(&self) -> f64 {
        self.x_edges[1] - self.x_edges[0]
    }

    pub fn dy(&self) -> f64 {
        self.y_edges[1] - self.y_edges[0]
    }

    /// Marginal density over y (a function of x); integrates to one.
    pub fn x_marginal(&self) -> Vec<f64> {
        self.density
            .iter()
            .map(|row| row.iter().sum::<f64>() * self.dy())
            .collect()
    }

    /// Marginal density over x (a function of y); integrates to one.
    pub fn y_marginal(&self) -> Vec<f64> {
        (0..self.y_edges.len() - 1)
            .map(|iy| self.density.iter().map(|row| row[iy]).sum::<f64>() * self.dx())
            .collect()
    }
}

pub fn histogram(stats: &McStats, t: f64, x_bins: usize, y_bins: usize) -> Result<Histogram> {
    let ensemble = stats.ensemble.as_ref().ok_or_else(|| {
        Error::InvalidArgument("histogram needs an ensemble; set keep_ensemble".into())
    })?;
    if x_bins == 0 || y_bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin per axis".into(),
        ));
    }
    let ti = stats
        .times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::InvalidArgument(format!("time {t} is not an output time")))?;
    let states = &ensemble[ti];
    let n = states.len();
    let x_min = states.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x_max = states.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let span = (x_max - x_min).max(1e-300);
    let dx = span / x_bins as f64;
    let dy = 2.0 / y_bins as f64;
    let mut counts = vec![vec![0u64; y_bins]; x_bins];
    for p in states {
        let ix = (((p.x - x_min) / dx) as usize).min(x_bins - 1);
        let iy = (((p.y + 1.0) / dy) as usize).min(y_bins - 1);
        counts[ix][iy] += 1;
    }
    let norm = 1.0 / (n as f64 * dx * dy);
    let density = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 * norm).collect())
        .collect();
    Ok(Histogram {
        t,
        x_edges: (0..=x_bins).map(|i| x_min + i as f64 * dx).collect(),
        y_edges: (0..=y_bins).map(|i| -1.0 + i as f64 * dy).collect(),
        density,
    })
}
