//! Material parameters, dimensionless groups, and the coefficient map.
//!
//! Starting from a thermoviscous medium and reference scales (velocity and
//! frequency), this module forms the dimensionless groups of the acoustic
//! regime and maps them, together with a static entropy-like background
//! field, onto the coefficient set of the first-order pressure-velocity
//! system: diffusivities mu and eta_v, variable zeroth-order perturbations
//! gamma(x) and delta(x), the four quadratic coupling strengths, and the
//! assembled source terms. The entropy perturbation decouples and is
//! recovered afterwards by time quadrature.

use crate::basis::{AffineField, SpectralField, SpectralGrid};
use ndarray::Dimension;
use crate::error::{Error, Result};
use crate::fields::Trajectory;
use crate::forcing::{Envelope, Forcing, ModeTerm, SourceTerm};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Thermoviscous fluid description plus reference scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalMedium {
    /// Equilibrium density.
    pub rho0: f64,
    /// Small-signal sound speed.
    pub c0: f64,
    /// Shear viscosity.
    pub mu_shear: f64,
    /// Bulk viscosity.
    pub mu_bulk: f64,
    /// Specific heat at constant pressure.
    pub heat_capacity: f64,
    /// Prandtl number.
    pub prandtl: f64,
    /// Adiabatic index (ratio of specific heats), > 1.
    pub gamma_heat: f64,
    /// Nonlinearity parameter B/A.
    pub b_over_a: f64,
    /// Second-order entropy expansion coefficient of the state equation.
    pub d_prime: f64,
    /// Ratio of the background temperature-variation scale to the acoustic
    /// temperature scale; sets the weight of heat conduction.
    pub theta_scale_ratio: f64,
}

impl PhysicalMedium {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("c0", self.c0),
            ("mu_shear", self.mu_shear),
            ("heat_capacity", self.heat_capacity),
            ("prandtl", self.prandtl),
            ("theta_scale_ratio", self.theta_scale_ratio),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.mu_bulk >= 0.0) || !self.mu_bulk.is_finite() {
            return Err(Error::domain("mu_bulk must be nonnegative and finite"));
        }
        if !(self.gamma_heat > 1.0) || !self.gamma_heat.is_finite() {
            return Err(Error::domain("gamma_heat must exceed 1"));
        }
        if !self.b_over_a.is_finite() || !self.d_prime.is_finite() {
            return Err(Error::domain("b_over_a and d_prime must be finite"));
        }
        Ok(())
    }
}

/// Acoustic Mach number of the reference velocity.
pub fn mach_number(v_ref: f64, c0: f64) -> Result<f64> {
    if !(v_ref > 0.0) || !(c0 > 0.0) || !v_ref.is_finite() || !c0.is_finite() {
        return Err(Error::domain("reference velocity and sound speed must be positive"));
    }
    let eps = v_ref / c0;
    if eps >= 1.0 {
        return Err(Error::domain(format!(
            "reference velocity must stay below the sound speed (ratio {eps})"
        )));
    }
    Ok(eps)
}

/// Dimensionless groups of the acoustic scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessGroups {
    /// Acoustic Mach number v_ref / c0.
    pub eps: f64,
    /// Viscous number omega_ref mu_shear / (rho0 c0^2).
    pub eta: f64,
    /// Combined viscosity ratio 4/3 + mu_bulk / mu_shear.
    pub nu: f64,
    /// 1 / (gamma_heat - 1).
    pub sigma: f64,
    /// Entropy-coupling coefficient d_prime/2 - b_over_a - 1.
    pub alpha: f64,
    /// Pressure-coupling coefficient 1 + b_over_a.
    pub beta: f64,
    /// Heat-conduction weight heat_capacity * theta_scale_ratio / prandtl.
    pub lambda: f64,
}

/// Forms the dimensionless groups from a medium and reference scales.
pub fn derive_groups(medium: &PhysicalMedium, v_ref: f64, omega_ref: f64) -> Result<DimensionlessGroups> {
    medium.validate()?;
    if !(omega_ref > 0.0) || !omega_ref.is_finite() {
        return Err(Error::domain("omega_ref must be positive and finite"));
    }
    let eps = mach_number(v_ref, medium.c0)?;
    Ok(DimensionlessGroups {
        eps,
        eta: omega_ref * medium.mu_shear / (medium.rho0 * medium.c0 * medium.c0),
        nu: 4.0 / 3.0 + medium.mu_bulk / medium.mu_shear,
        sigma: 1.0 / (medium.gamma_heat - 1.0),
        alpha: medium.d_prime / 2.0 - medium.b_over_a - 1.0,
        beta: 1.0 + medium.b_over_a,
        lambda: medium.heat_capacity * medium.theta_scale_ratio / medium.prandtl,
    })
}

/// Coefficient set of the first-order pressure-velocity system
///
///   dp/dt - mu Lap p + (1 + gamma) div v + eps1 p div v + eps2 grad p . v = h,
///   dv/dt - eta_v Lap v + (1 + delta) grad p
///         - (eps3/2) grad(p^2) + (eps4/2) grad|v|^2 = g.
#[derive(Debug, Clone)]
pub struct IbvpCoefficients {
    pub mu: f64,
    pub eta_v: f64,
    pub gamma: AffineField,
    pub delta: AffineField,
    pub eps: [f64; 4],
}

impl IbvpCoefficients {
    /// Constant-coefficient set with gamma = delta = 0 on a grid.
    pub fn constant(grid: &Arc<SpectralGrid>, mu: f64, eta_v: f64, eps: [f64; 4]) -> Result<Self> {
        let c = IbvpCoefficients {
            mu,
            eta_v,
            gamma: AffineField::zero(grid),
            delta: AffineField::zero(grid),
            eps,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.eta_v > 0.0) || !self.mu.is_finite() || !self.eta_v.is_finite() {
            return Err(Error::domain("diffusivities mu and eta_v must be positive"));
        }
        if self.eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::domain("quadratic coupling strengths must be finite"));
        }
        if !self.gamma.field.same_grid(&self.delta.field) {
            return Err(Error::grid("gamma and delta live on different grids".to_string()));
        }
        Ok(())
    }

    /// Euclidean size of the quadratic coupling vector.
    pub fn eps_norm(&self) -> f64 {
        self.eps.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.gamma.field.grid()
    }
}

/// Inputs assembled into the system's right-hand side: acoustic momentum and
/// pressure sources plus the heat-deposition term.
#[derive(Debug, Clone, Default)]
pub struct SourceInputs {
    /// Pressure-equation source (component 0 terms only).
    pub h: Forcing,
    /// Velocity-equation source (components 1..=d only).
    pub g: Forcing,
    /// Heat deposition entering both the pressure equation and the entropy
    /// recovery (component 0 terms only).
    pub ell: Forcing,
}

fn require_components(f: &Forcing, pred: impl Fn(usize) -> bool, what: &str) -> Result<()> {
    if f.terms.iter().any(|t| !pred(t.component)) {
        return Err(Error::domain(format!("{what} has terms on a disallowed component")));
    }
    Ok(())
}

/// Maps dimensionless groups and the static background field onto the
/// coefficients and source of the first-order system.
pub fn to_ibvp_coefficients(
    groups: &DimensionlessGroups,
    background: &AffineField,
    sources: &SourceInputs,
) -> Result<(IbvpCoefficients, Forcing)> {
    require_components(&sources.h, |c| c == 0, "pressure source")?;
    require_components(&sources.ell, |c| c == 0, "heat source")?;
    require_components(&sources.g, |c| c != 0, "velocity source")?;
    let coeffs = IbvpCoefficients {
        mu: groups.eta * groups.lambda,
        eta_v: groups.eta * groups.nu,
        gamma: background.scaled(groups.eps * groups.alpha),
        delta: background.scaled(groups.eps),
        eps: [groups.eps * groups.beta, groups.eps, groups.eps, groups.eps],
    };
    coeffs.validate()?;
    // Static heat-conduction contribution of the background field.
    let lap = background.field.laplacian();
    let w = groups.eta * groups.lambda * groups.sigma;
    let mut static_terms = Vec::new();
    for (idx, &c) in lap.coeffs().indexed_iter() {
        if c != 0.0 {
            static_terms.push(ModeTerm {
                component: 0,
                mode: idx.slice().iter().map(|i| i + 1).collect(),
                amplitude: w * c,
                envelope: Envelope::Constant,
            });
        }
    }
    let source = sources
        .h
        .scaled(groups.eps)
        .merged(&sources.ell.scaled(groups.eps))
        .merged(&sources.g.scaled(groups.eps))
        .merged(&Forcing { terms: static_terms });
    Ok((coeffs, source))
}

/// Recovers the entropy perturbation along a solved trajectory:
///
///   ds/dt = -eps grad(background) . v + eta lambda Lap(p + sigma background)
///           + eps ell,
///
/// integrated with the trapezoid rule on the trajectory's time grid.
pub fn recover_entropy(
    groups: &DimensionlessGroups,
    background: &AffineField,
    ell: &Forcing,
    traj: &Trajectory,
    s0: &SpectralField,
) -> Result<Vec<SpectralField>> {
    let grid = traj.grid();
    if !s0.same_grid(&traj.states()[0].p) {
        return Err(Error::grid("initial entropy lives on a different grid".to_string()));
    }
    require_components(ell, |c| c == 0, "heat source")?;
    let w = groups.eta * groups.lambda;
    let bg_moves = !background.field.coeffs().iter().all(|&c| c == 0.0);
    let bg_trig = background.field.to_trig();
    let static_part = background.field.laplacian().scaled(w * groups.sigma);
    let rate = |k: usize| -> Result<SpectralField> {
        let state = &traj.states()[k];
        let mut r = state.p.laplacian().scaled(w);
        r.axpy(1.0, &static_part);
        if bg_moves {
            // Advection of the background by the velocity, projected exactly.
            let mut adv = crate::basis::TrigTensor::zero(
                grid.domain().lengths(),
                &vec![0; grid.dim()],
            );
            let mut first = true;
            for (axis, v) in state.v.iter().enumerate() {
                let term = bg_trig.derivative(axis).product(&v.to_trig());
                if first {
                    adv = term;
                    first = false;
                } else {
                    adv.axpy(1.0, &term);
                }
            }
            r.axpy(-groups.eps, &adv.project(grid)?);
        }
        let lt = ell.project_at(traj.times()[k], grid)?;
        r.axpy(groups.eps, &lt.p);
        Ok(r)
    };
    let mut out = Vec::with_capacity(traj.len());
    out.push(s0.clone());
    let mut prev_rate = rate(0)?;
    for k in 1..traj.len() {
        let cur_rate = rate(k)?;
        let dt = traj.times()[k] - traj.times()[k - 1];
        let mut s = out[k - 1].clone();
        s.axpy(0.5 * dt, &prev_rate);
        s.axpy(0.5 * dt, &cur_rate);
        out.push(s);
        prev_rate = cur_rate;
    }
    Ok(out)
}
