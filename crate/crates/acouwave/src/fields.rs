//! Pressure-velocity states, time trajectories, and their norms.
//!
//! A state u = (p, v_1..v_d) couples one scalar pressure-like field with a
//! d-component velocity-like field, all on a shared sine-basis grid. Sobolev
//! norms are evaluated exactly on the eigenbasis through eigenvalue weights:
//! |u|_{H1}^2 = sum (1 + Lambda_k) c_k^2 and
//! |u|_{H2}^2 = sum (1 + Lambda_k + Lambda_k^2) c_k^2.
//!
//! Trajectories carry both the states u(t_k) and the time-derivative samples
//! du/dt(t_k); time integrals in the mixed space-time norms use the
//! trapezoid rule on the stored grid.

use crate::basis::{SpectralField, SpectralGrid};
use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::Serialize;
use std::sync::Arc;

/// One pressure field plus d velocity components on a common grid.
#[derive(Debug, Clone)]
pub struct PVState {
    pub p: SpectralField,
    pub v: Vec<SpectralField>,
}

impl PVState {
    pub fn zero(grid: &Arc<SpectralGrid>) -> Self {
        PVState {
            p: SpectralField::zero(grid),
            v: (0..grid.dim()).map(|_| SpectralField::zero(grid)).collect(),
        }
    }

    pub fn new(p: SpectralField, v: Vec<SpectralField>) -> Result<Self> {
        if v.len() != p.grid().dim() {
            return Err(Error::domain(format!(
                "state needs {} velocity components, got {}",
                p.grid().dim(),
                v.len()
            )));
        }
        if !v.iter().all(|vi| vi.same_grid(&p)) {
            return Err(Error::grid("state components live on different grids".to_string()));
        }
        Ok(PVState { p, v })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.p.grid()
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Number of scalar unknowns (d + 1 components of M modes each).
    pub fn dof(&self) -> usize {
        (self.dim() + 1) * self.grid().mode_count()
    }

    pub fn same_grid(&self, other: &PVState) -> bool {
        self.p.same_grid(&other.p)
    }

    /// Zero-pads every component into a larger band on the same box.
    pub fn embed_into(&self, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        Ok(PVState {
            p: self.p.embed_into(grid)?,
            v: self
                .v
                .iter()
                .map(|f| f.embed_into(grid))
                .collect::<Result<Vec<_>>>()?,
        })
    }

    /// Projects every component onto a smaller band on the same box.
    pub fn restrict_to(&self, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        Ok(PVState {
            p: self.p.restrict_to(grid)?,
            v: self
                .v
                .iter()
                .map(|f| f.restrict_to(grid))
                .collect::<Result<Vec<_>>>()?,
        })
    }

    fn components(&self) -> impl Iterator<Item = &SpectralField> {
        std::iter::once(&self.p).chain(self.v.iter())
    }

    pub fn scale(&mut self, a: f64) {
        self.p.scale(a);
        for vi in &mut self.v {
            vi.scale(a);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// self += a * other.
    pub fn axpy(&mut self, a: f64, other: &PVState) {
        debug_assert!(self.same_grid(other));
        self.p.axpy(a, &other.p);
        for (s, o) in self.v.iter_mut().zip(&other.v) {
            s.axpy(a, o);
        }
    }

    /// L2 inner product over all components.
    pub fn dot(&self, other: &PVState) -> f64 {
        self.components()
            .zip(other.components())
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Squared gradient seminorm sum_k Lambda_k c_k^2 over all components.
    pub fn grad_sq(&self) -> f64 {
        self.components().map(|f| f.weighted_sumsq(1)).sum()
    }

    pub fn norm_h1(&self) -> f64 {
        (self.dot(self) + self.grad_sq()).sqrt()
    }

    pub fn norm_h2(&self) -> f64 {
        let l2 = self.dot(self);
        let g = self.grad_sq();
        let lap: f64 = self.components().map(|f| f.weighted_sumsq(2)).sum();
        (l2 + g + lap).sqrt()
    }

    /// Modified energy 1/2 |u|^2 + (c2/2) |grad u|^2.
    pub fn energy(&self, c2: f64) -> f64 {
        0.5 * self.dot(self) + 0.5 * c2 * self.grad_sq()
    }

    /// Flattens to a vector in component-major order: all pressure modes,
    /// then each velocity component's modes.
    pub fn to_dvector(&self) -> DVector<f64> {
        let m = self.grid().mode_count();
        let mut out = DVector::zeros(self.dof());
        for (c, f) in self.components().enumerate() {
            for (i, &x) in f.coeffs().iter().enumerate() {
                out[c * m + i] = x;
            }
        }
        out
    }

    pub fn from_dvector(grid: &Arc<SpectralGrid>, x: &DVector<f64>) -> Result<Self> {
        let m = grid.mode_count();
        let n = grid.dim() + 1;
        if x.len() != n * m {
            return Err(Error::domain(format!(
                "vector length {} does not match {} components of {} modes",
                x.len(),
                n,
                m
            )));
        }
        let mut state = PVState::zero(grid);
        for c in 0..n {
            let f = if c == 0 { &mut state.p } else { &mut state.v[c - 1] };
            for (i, slot) in f.coeffs_mut().iter_mut().enumerate() {
                *slot = x[c * m + i];
            }
        }
        Ok(state)
    }
}

impl std::ops::Add for &PVState {
    type Output = PVState;
    fn add(self, rhs: &PVState) -> PVState {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl std::ops::Sub for &PVState {
    type Output = PVState;
    fn sub(self, rhs: &PVState) -> PVState {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Trapezoid rule for samples of f over a time grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    let mut acc = 0.0;
    for k in 0..times.len().saturating_sub(1) {
        acc += 0.5 * (values[k] + values[k + 1]) * (times[k + 1] - times[k]);
    }
    acc
}

/// Uniform partition of [0, horizon] with `steps` steps.
pub fn uniform_times(horizon: f64, steps: usize) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || steps == 0 {
        return Err(Error::domain("time horizon and step count must be positive"));
    }
    let dt = horizon / steps as f64;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

/// Space-time norm report for a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct XNormReport {
    /// |u(0)|_{L2} plus the L2-in-time norm of du/dt.
    pub x1: f64,
    /// L2-in-time norm of the H2 norm.
    pub x2: f64,
    /// Sup-in-time of the H1 norm.
    pub x3: f64,
    /// sqrt(x2^2 + x3^2), the part controlled by the energy estimates.
    pub x_tilde: f64,
    /// sqrt(x1^2 + x2^2 + x3^2), the full solution-space norm.
    pub x: f64,
}

/// Time-sampled trajectory carrying states and their time derivatives.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<PVState>,
    dt_states: Vec<PVState>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<PVState>, dt_states: Vec<PVState>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() || times.len() != dt_states.len() {
            return Err(Error::domain(
                "trajectory needs equally many times, states and derivative samples",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("trajectory times must be strictly increasing"));
        }
        let grid = states[0].grid();
        if !states.iter().chain(dt_states.iter()).all(|s| s.grid() == grid) {
            return Err(Error::grid("trajectory states live on different grids".to_string()));
        }
        Ok(Trajectory { times, states, dt_states })
    }

    pub fn zero(grid: &Arc<SpectralGrid>, times: &[f64]) -> Result<Self> {
        let states = times.iter().map(|_| PVState::zero(grid)).collect();
        let dt_states = times.iter().map(|_| PVState::zero(grid)).collect();
        Trajectory::new(times.to_vec(), states, dt_states)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[PVState] {
        &self.states
    }

    pub fn dt_states(&self) -> &[PVState] {
        &self.dt_states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.states[0].grid()
    }

    /// Piecewise-linear interpolation of the state at time t; t may lie a
    /// round-off's width outside the stored range.
    pub fn interp(&self, t: f64) -> Result<PVState> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        let span = (t1 - t0).max(1.0);
        if t < t0 - 1e-9 * span || t > t1 + 1e-9 * span {
            return Err(Error::domain(format!(
                "time {t} outside trajectory range [{t0}, {t1}]"
            )));
        }
        let t = t.clamp(t0, t1);
        let k = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => return Ok(self.states[k].clone()),
            Err(k) => k.saturating_sub(1).min(self.times.len() - 2),
        };
        let dt = self.times[k + 1] - self.times[k];
        let w = (t - self.times[k]) / dt;
        let mut out = self.states[k].scaled(1.0 - w);
        out.axpy(w, &self.states[k + 1]);
        Ok(out)
    }

    /// Node-wise difference (states and derivative samples); time grids must
    /// agree exactly.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.times != other.times {
            return Err(Error::domain("trajectory difference needs matching time grids"));
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a - b)
            .collect();
        let dt_states = self
            .dt_states
            .iter()
            .zip(&other.dt_states)
            .map(|(a, b)| a - b)
            .collect();
        Trajectory::new(self.times.clone(), states, dt_states)
    }

    /// Mixed space-time norms of the trajectory.
    pub fn x_norms(&self) -> XNormReport {
        let dt_sq: Vec<f64> = self.dt_states.iter().map(|s| s.dot(s)).collect();
        let h2_sq: Vec<f64> = self.states.iter().map(|s| s.norm_h2().powi(2)).collect();
        let x1 = self.states[0].norm_l2() + trapezoid(&self.times, &dt_sq).max(0.0).sqrt();
        let x2 = trapezoid(&self.times, &h2_sq).max(0.0).sqrt();
        let x3 = self
            .states
            .iter()
            .map(|s| s.norm_h1())
            .fold(0.0f64, f64::max);
        let x_tilde = (x2 * x2 + x3 * x3).sqrt();
        let x = (x1 * x1 + x2 * x2 + x3 * x3).sqrt();
        XNormReport { x1, x2, x3, x_tilde, x }
    }
}

/// Data-space norm of a forcing/initial-value pair:
/// sqrt(int |f|_{L2}^2 dt + |u0|_{H1}^2).
pub fn y_norm(times: &[f64], f_states: &[PVState], u0: &PVState) -> Result<f64> {
    if times.len() != f_states.len() {
        return Err(Error::domain("forcing samples must match the time grid"));
    }
    let f_sq: Vec<f64> = f_states.iter().map(|s| s.dot(s)).collect();
    Ok((trapezoid(times, &f_sq) + u0.norm_h1().powi(2)).max(0.0).sqrt())
}
