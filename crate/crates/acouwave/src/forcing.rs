//! Time-dependent source terms.
//!
//! Sources are finite sums of basis modes with smooth time envelopes. The
//! `SourceTerm` trait is what the time steppers consume: a source must
//! produce its band-limited projection at any time, and optionally exact
//! point values for comparison against nodal discretizations.

use crate::basis::{RectDomain, SpectralGrid};
use crate::error::{Error, Result};
use crate::fields::PVState;
use ndarray::{ArrayD, Dimension, IxDyn};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Smooth scalar time envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    Constant,
    /// exp(rate * t); decaying for negative rates.
    Exp { rate: f64 },
    /// exp(rate * t) * cos(omega * t).
    ExpCos { rate: f64, omega: f64 },
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::Exp { rate } => (rate * t).exp(),
            Envelope::ExpCos { rate, omega } => (rate * t).exp() * (omega * t).cos(),
        }
    }

    /// Exact time derivative of the envelope.
    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 0.0,
            Envelope::Exp { rate } => rate * (rate * t).exp(),
            Envelope::ExpCos { rate, omega } => {
                (rate * t).exp() * (rate * (omega * t).cos() - omega * (omega * t).sin())
            }
        }
    }
}

/// One separable source term: amplitude * envelope(t) * sigma_mode(x) on a
/// single state component (0 = pressure, 1..=d = velocity components).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTerm {
    pub component: usize,
    pub mode: Vec<usize>,
    pub amplitude: f64,
    #[serde(default)]
    pub envelope: Envelope,
}

/// Finite mode-sum source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub terms: Vec<ModeTerm>,
}

impl Forcing {
    pub fn zero() -> Self {
        Forcing { terms: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Forcing {
            terms: self
                .terms
                .iter()
                .map(|t| ModeTerm {
                    amplitude: a * t.amplitude,
                    ..t.clone()
                })
                .collect(),
        }
    }

    pub fn merged(mut self, other: &Forcing) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    /// Checks every term against a grid: component in range, mode inside the
    /// band.
    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        for term in &self.terms {
            if term.component > grid.dim() {
                return Err(Error::domain(format!(
                    "source component {} exceeds the {} state components",
                    term.component,
                    grid.dim() + 1
                )));
            }
            if term.mode.len() != grid.dim() {
                return Err(Error::domain("source mode index dimension mismatch"));
            }
            for (ki, mi) in term.mode.iter().zip(grid.modes()) {
                if *ki == 0 || ki > mi {
                    return Err(Error::domain(format!(
                        "source mode {:?} outside the band {:?}",
                        term.mode,
                        grid.modes()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A source the time steppers can sample: exact in-band projection at any
/// time, and (where meaningful) exact point values for nodal solvers.
pub trait SourceTerm {
    fn project_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState>;

    /// Point values on a tensor grid, one array per state component. The
    /// default refuses; only closed-form sources implement it.
    fn eval_on_axis_points(
        &self,
        _t: f64,
        _domain: &RectDomain,
        _points: &[Vec<f64>],
    ) -> Result<Vec<ArrayD<f64>>> {
        Err(Error::domain(
            "this source has no pointwise evaluation; only band-limited projection",
        ))
    }
}

/// The zero source.
pub struct ZeroSource;

impl SourceTerm for ZeroSource {
    fn project_at(&self, _t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        Ok(PVState::zero(grid))
    }

    fn eval_on_axis_points(
        &self,
        _t: f64,
        domain: &RectDomain,
        points: &[Vec<f64>],
    ) -> Result<Vec<ArrayD<f64>>> {
        let shape: Vec<usize> = points.iter().map(Vec::len).collect();
        Ok((0..=domain.dim())
            .map(|_| ArrayD::zeros(IxDyn(&shape)))
            .collect())
    }
}

impl SourceTerm for Forcing {
    fn project_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        self.validate(grid)?;
        let mut out = PVState::zero(grid);
        for term in &self.terms {
            let a = term.amplitude * term.envelope.eval(t);
            if a == 0.0 {
                continue;
            }
            let idx: Vec<usize> = term.mode.iter().map(|k| k - 1).collect();
            let field = if term.component == 0 {
                &mut out.p
            } else {
                &mut out.v[term.component - 1]
            };
            field.coeffs_mut()[IxDyn(&idx)] += a;
        }
        Ok(out)
    }

    fn eval_on_axis_points(
        &self,
        t: f64,
        domain: &RectDomain,
        points: &[Vec<f64>],
    ) -> Result<Vec<ArrayD<f64>>> {
        if points.len() != domain.dim() {
            return Err(Error::domain("point grid dimension mismatch"));
        }
        let shape: Vec<usize> = points.iter().map(Vec::len).collect();
        let mut out: Vec<ArrayD<f64>> = (0..=domain.dim())
            .map(|_| ArrayD::zeros(IxDyn(&shape)))
            .collect();
        let norm: f64 = domain.lengths().iter().map(|&l| (2.0 / l).sqrt()).product();
        for term in &self.terms {
            let a = term.amplitude * term.envelope.eval(t) * norm;
            if a == 0.0 {
                continue;
            }
            let target = &mut out[term.component];
            for (idx, slot) in target.indexed_iter_mut() {
                let mut w = a;
                for (axis, &j) in idx.slice().iter().enumerate() {
                    let x = points[axis][j];
                    let l = domain.lengths()[axis];
                    w *= (term.mode[axis] as f64 * PI * x / l).sin();
                }
                *slot += w;
            }
        }
        Ok(out)
    }
}
