//! Run configuration.
//!
//! A TOML file selects the box, the spectral band, the time grid, the
//! coefficient set (given directly, or derived from a thermoviscous medium
//! with reference scales), the initial data, and the sources. `resolve`
//! turns the parsed file into solver-ready objects and rejects anything the
//! chosen band cannot represent.

use crate::basis::{AffineField, RectDomain, SpectralField, SpectralGrid};
use crate::error::{Error, Result};
use crate::fields::{uniform_times, PVState};
use crate::forcing::{Forcing, ModeTerm};
use crate::nondim::{
    derive_groups, to_ibvp_coefficients, DimensionlessGroups, IbvpCoefficients, PhysicalMedium,
    SourceInputs,
};
use crate::oracles::kuznetsov::ScalarModelCoefficients;
use ndarray::IxDyn;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Box side lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lengths: Vec<f64>,
}

/// Per-axis mode cutoffs and (optionally) quadrature node counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub modes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<Vec<usize>>,
}

/// Uniform time grid: `steps` intervals covering `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    pub steps: usize,
}

/// One coefficient of the static background field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundMode {
    pub mode: Vec<usize>,
    pub amplitude: f64,
}

/// Coefficients given directly in the form the solver consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectCoefficients {
    pub mu: f64,
    pub eta_v: f64,
    pub eps: [f64; 4],
    #[serde(default)]
    pub gamma_const: f64,
    #[serde(default)]
    pub delta_const: f64,
}

/// Coefficients derived from a physical medium, reference scales, and a
/// static background field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumCoefficients {
    pub rho0: f64,
    pub c0: f64,
    pub mu_shear: f64,
    pub mu_bulk: f64,
    pub heat_capacity: f64,
    pub prandtl: f64,
    pub gamma_heat: f64,
    pub b_over_a: f64,
    pub d_prime: f64,
    pub theta_scale_ratio: f64,
    pub v_ref: f64,
    pub omega_ref: f64,
    /// Constant part of the background field.
    #[serde(default)]
    pub s_background: f64,
    /// Spatially varying part of the background field.
    #[serde(default)]
    pub s_modes: Vec<BackgroundMode>,
}

impl MediumCoefficients {
    pub fn medium(&self) -> PhysicalMedium {
        PhysicalMedium {
            rho0: self.rho0,
            c0: self.c0,
            mu_shear: self.mu_shear,
            mu_bulk: self.mu_bulk,
            heat_capacity: self.heat_capacity,
            prandtl: self.prandtl,
            gamma_heat: self.gamma_heat,
            b_over_a: self.b_over_a,
            d_prime: self.d_prime,
            theta_scale_ratio: self.theta_scale_ratio,
        }
    }
}

/// The `[coefficients]` table; `kind` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientsSection {
    Direct(DirectCoefficients),
    Medium(MediumCoefficients),
}

/// One coefficient of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialTerm {
    /// 0 = pressure, 1..=d = velocity components.
    pub component: usize,
    pub mode: Vec<usize>,
    pub amplitude: f64,
}

/// Parsed run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub coefficients: CoefficientsSection,
    #[serde(default)]
    pub initial: Vec<InitialTerm>,
    #[serde(default)]
    pub forcing: Vec<ModeTerm>,
    /// Heat deposition; only meaningful with medium-derived coefficients,
    /// where it feeds both the pressure source and the entropy recovery.
    #[serde(default)]
    pub heat: Vec<ModeTerm>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Returns a copy with the band and/or step count replaced; a band
    /// override applies the same cutoff on every axis and drops any explicit
    /// quadrature sizes so they are re-derived.
    pub fn with_overrides(&self, modes: Option<usize>, steps: Option<usize>) -> Self {
        let mut out = self.clone();
        if let Some(m) = modes {
            out.grid.modes = vec![m; self.domain.lengths.len()];
            out.grid.quad_nodes = None;
        }
        if let Some(s) = steps {
            out.time.steps = s;
        }
        out
    }
}

/// Everything a scenario needs, built and validated from a `RunConfig`.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub grid: Arc<SpectralGrid>,
    pub coeffs: IbvpCoefficients,
    /// Present when the coefficients came from a physical medium.
    pub groups: Option<DimensionlessGroups>,
    /// Present when the medium admits the scalar second-order comparison
    /// model (medium-derived coefficients with a constant background).
    pub scalar: Option<ScalarModelCoefficients>,
    /// Static background field (medium mode only).
    pub background: Option<AffineField>,
    /// Assembled source of the first-order system.
    pub forcing: Forcing,
    /// Raw heat deposition, for entropy recovery.
    pub heat: Forcing,
    pub initial: PVState,
    pub times: Vec<f64>,
}

fn background_field(grid: &Arc<SpectralGrid>, constant: f64, modes: &[BackgroundMode]) -> Result<AffineField> {
    let mut field = SpectralField::zero(grid);
    for bm in modes {
        if bm.mode.len() != grid.dim() {
            return Err(Error::config(format!(
                "background mode {:?} has wrong dimension for a {}-dimensional box",
                bm.mode,
                grid.dim()
            )));
        }
        if bm.mode.iter().zip(grid.modes()).any(|(k, m)| *k == 0 || k > m) {
            return Err(Error::config(format!(
                "background mode {:?} lies outside the band {:?}",
                bm.mode,
                grid.modes()
            )));
        }
        if !bm.amplitude.is_finite() {
            return Err(Error::config("background amplitudes must be finite".to_string()));
        }
        let idx: Vec<usize> = bm.mode.iter().map(|k| k - 1).collect();
        field.coeffs_mut()[IxDyn(&idx)] += bm.amplitude;
    }
    if !constant.is_finite() {
        return Err(Error::config("background constant must be finite".to_string()));
    }
    Ok(AffineField { constant, field })
}

fn initial_state(grid: &Arc<SpectralGrid>, terms: &[InitialTerm]) -> Result<PVState> {
    let mut state = PVState::zero(grid);
    for term in terms {
        if term.component > grid.dim() {
            return Err(Error::config(format!(
                "initial term on component {} but the state has {} components",
                term.component,
                grid.dim() + 1
            )));
        }
        if term.mode.len() != grid.dim() {
            return Err(Error::config(format!(
                "initial mode {:?} has wrong dimension for a {}-dimensional box",
                term.mode,
                grid.dim()
            )));
        }
        if term.mode.iter().zip(grid.modes()).any(|(k, m)| *k == 0 || k > m) {
            return Err(Error::config(format!(
                "initial mode {:?} lies outside the band {:?}",
                term.mode,
                grid.modes()
            )));
        }
        if !term.amplitude.is_finite() {
            return Err(Error::config("initial amplitudes must be finite".to_string()));
        }
        let idx: Vec<usize> = term.mode.iter().map(|k| k - 1).collect();
        let target = if term.component == 0 {
            &mut state.p
        } else {
            &mut state.v[term.component - 1]
        };
        target.coeffs_mut()[IxDyn(&idx)] += term.amplitude;
    }
    Ok(state)
}

/// Builds grid, coefficients, sources, initial state and time grid from a
/// parsed configuration. Every mode index is checked against the band and
/// every physical parameter against its admissible range.
pub fn resolve(config: &RunConfig) -> Result<Resolved> {
    let domain = RectDomain::new(config.domain.lengths.clone())?;
    let grid = SpectralGrid::new(domain, config.grid.modes.clone(), config.grid.quad_nodes.clone())?;
    let times = uniform_times(config.time.horizon, config.time.steps)?;

    let (coeffs, groups, scalar, background, forcing, heat) = match &config.coefficients {
        CoefficientsSection::Direct(direct) => {
            if !config.heat.is_empty() {
                return Err(Error::config(
                    "heat deposition needs medium-derived coefficients; with direct \
                     coefficients fold it into the forcing terms"
                        .to_string(),
                ));
            }
            let coeffs = IbvpCoefficients {
                mu: direct.mu,
                eta_v: direct.eta_v,
                gamma: AffineField::constant(&grid, direct.gamma_const),
                delta: AffineField::constant(&grid, direct.delta_const),
                eps: direct.eps,
            };
            coeffs.validate()?;
            let forcing = Forcing {
                terms: config.forcing.clone(),
            };
            forcing.validate(&grid)?;
            (coeffs, None, None, None, forcing, Forcing::zero())
        }
        CoefficientsSection::Medium(mc) => {
            let groups = derive_groups(&mc.medium(), mc.v_ref, mc.omega_ref)?;
            let background = background_field(&grid, mc.s_background, &mc.s_modes)?;
            let mut h = Vec::new();
            let mut g = Vec::new();
            for t in &config.forcing {
                if t.component == 0 {
                    h.push(t.clone());
                } else {
                    g.push(t.clone());
                }
            }
            let sources = SourceInputs {
                h: Forcing { terms: h },
                g: Forcing { terms: g },
                ell: Forcing {
                    terms: config.heat.clone(),
                },
            };
            let (coeffs, forcing) = to_ibvp_coefficients(&groups, &background, &sources)?;
            forcing.validate(&grid)?;
            sources.ell.validate(&grid)?;
            let scalar = if mc.s_modes.is_empty() {
                Some(ScalarModelCoefficients {
                    eps: groups.eps,
                    eta: groups.eta,
                    b_over_a: mc.b_over_a,
                    alpha: groups.alpha,
                    s_bar: mc.s_background,
                    lambda_therm: groups.lambda,
                    nu: groups.nu,
                })
            } else {
                None
            };
            (coeffs, Some(groups), scalar, Some(background), forcing, sources.ell)
        }
    };

    let initial = initial_state(&grid, &config.initial)?;

    Ok(Resolved {
        grid,
        coeffs,
        groups,
        scalar,
        background,
        forcing,
        heat,
        initial,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const DIRECT: &str = r#"
        [domain]
        lengths = [1.0, 2.0]

        [grid]
        modes = [4, 4]

        [time]
        horizon = 0.5
        steps = 8

        [coefficients]
        kind = "direct"
        mu = 0.1
        eta_v = 0.15
        eps = [0.3, 0.2, 0.25, 0.2]

        [[initial]]
        component = 0
        mode = [1, 2]
        amplitude = 0.05

        [[forcing]]
        component = 1
        mode = [2, 1]
        amplitude = 0.01
        envelope = { kind = "exp_cos", rate = 0.5, omega = 3.0 }
    "#;

    const MEDIUM: &str = r#"
        [domain]
        lengths = [1.0]

        [grid]
        modes = [8]

        [time]
        horizon = 1.0
        steps = 16

        [coefficients]
        kind = "medium"
        rho0 = 1.0
        c0 = 2.0
        mu_shear = 0.004
        mu_bulk = 0.002
        heat_capacity = 2.0
        prandtl = 0.5
        gamma_heat = 1.4
        b_over_a = 3.0
        d_prime = 10.0
        theta_scale_ratio = 0.3
        v_ref = 0.2
        omega_ref = 1.0
        s_background = 0.3

        [[initial]]
        component = 0
        mode = [1]
        amplitude = 0.05

        [[heat]]
        component = 0
        mode = [2]
        amplitude = 0.04
    "#;

    #[test]
    fn direct_config_resolves() {
        let cfg = RunConfig::from_toml(DIRECT).unwrap();
        let r = resolve(&cfg).unwrap();
        assert_eq!(r.grid.modes(), &[4, 4]);
        assert_eq!(r.times.len(), 9);
        assert_abs_diff_eq!(r.coeffs.mu, 0.1);
        assert!(r.groups.is_none());
        assert!(r.scalar.is_none());
        assert_abs_diff_eq!(r.initial.p.coeffs()[IxDyn(&[0, 1])], 0.05);
        assert_eq!(r.forcing.terms.len(), 1);
        // An envelope-free forcing term defaults to a constant envelope.
        let cfg2 = RunConfig::from_toml(&DIRECT.replace(
            "envelope = { kind = \"exp_cos\", rate = 0.5, omega = 3.0 }",
            "",
        ))
        .unwrap();
        assert_eq!(
            resolve(&cfg2).unwrap().forcing.terms[0].envelope,
            crate::forcing::Envelope::Constant
        );
    }

    #[test]
    fn medium_config_builds_groups_and_scalar_model() {
        let cfg = RunConfig::from_toml(MEDIUM).unwrap();
        let r = resolve(&cfg).unwrap();
        let g = r.groups.unwrap();
        assert_abs_diff_eq!(g.eps, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(r.coeffs.mu, g.eta * g.lambda, epsilon = 1e-15);
        assert_abs_diff_eq!(r.coeffs.gamma.constant, g.eps * g.alpha * 0.3, epsilon = 1e-14);
        let sc = r.scalar.unwrap();
        assert_abs_diff_eq!(sc.s_bar, 0.3);
        assert_abs_diff_eq!(sc.beta(), 4.0, epsilon = 1e-14);
        // The heat term enters the assembled source scaled by eps.
        assert_eq!(r.forcing.terms.len(), 1);
        assert_abs_diff_eq!(r.forcing.terms[0].amplitude, 0.1 * 0.04, epsilon = 1e-15);
        assert_eq!(r.heat.terms.len(), 1);
        assert_abs_diff_eq!(r.heat.terms[0].amplitude, 0.04);
    }

    #[test]
    fn varying_background_disables_the_scalar_model() {
        let text = MEDIUM.replace(
            "s_background = 0.3",
            "s_background = 0.3\n        s_modes = [{ mode = [1], amplitude = 0.05 }]",
        );
        let cfg = RunConfig::from_toml(&text).unwrap();
        let r = resolve(&cfg).unwrap();
        assert!(r.scalar.is_none());
        let bg = r.background.unwrap();
        assert_abs_diff_eq!(bg.field.coeffs()[IxDyn(&[0])], 0.05);
        // The background's heat conduction contributes a static source term.
        assert!(r.forcing.terms.len() > 1);
    }

    #[test]
    fn out_of_band_and_misdimensioned_inputs_are_rejected() {
        let bad_mode = DIRECT.replace("mode = [1, 2]", "mode = [1, 5]");
        assert!(resolve(&RunConfig::from_toml(&bad_mode).unwrap()).is_err());
        let bad_dim = DIRECT.replace("mode = [1, 2]", "mode = [1]");
        assert!(resolve(&RunConfig::from_toml(&bad_dim).unwrap()).is_err());
        let bad_component = DIRECT.replace("component = 0", "component = 3");
        assert!(resolve(&RunConfig::from_toml(&bad_component).unwrap()).is_err());
        let heat_direct = format!("{DIRECT}\n[[heat]]\ncomponent = 0\nmode = [1, 1]\namplitude = 1.0\n");
        assert!(resolve(&RunConfig::from_toml(&heat_direct).unwrap()).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml(&DIRECT.replace("steps = 8", "steps = 8\n        stepz = 9")).is_err());
    }

    #[test]
    fn overrides_replace_band_and_steps() {
        let cfg = RunConfig::from_toml(DIRECT).unwrap();
        let out = cfg.with_overrides(Some(6), Some(32));
        assert_eq!(out.grid.modes, vec![6, 6]);
        assert_eq!(out.time.steps, 32);
        let r = resolve(&out).unwrap();
        assert_eq!(r.times.len(), 33);
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = RunConfig::from_toml(MEDIUM).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
