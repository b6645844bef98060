//! Mode solutions with closed-form time envelopes and the forcing that
//! makes them exact solutions of the semi-discrete system.
//!
//! For a target state u*(t) built from finitely many eigenmodes, the source
//! f := du*/dt - A u* + B[u*, u*] is computed with the same exact
//! coefficient-space operators the solver uses, on a band wide enough to
//! hold u*. The solver run with this source must reproduce u* up to time
//! discretization alone (when its band contains u*) or up to the spectral
//! truncation tail (when it is narrower), which turns the scheme's
//! convergence orders into measurable quantities.

use crate::basis::{SpectralGrid, TrigTensor};
use crate::error::{Error, Result};
use crate::fields::{uniform_times, PVState, Trajectory};
use crate::forcing::{ModeTerm, SourceTerm};
use crate::newton_solver::{newton_solve, NewtonControls};
use crate::nondim::IbvpCoefficients;
use crate::operators::ModelOperator;
use serde::Serialize;
use std::sync::Arc;

/// Finite sum of eigenmodes with time envelopes; the exact solution the
/// convergence studies aim at.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    terms: Vec<ModeTerm>,
}

impl ModeSolution {
    pub fn new(terms: Vec<ModeTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::domain("a mode solution needs at least one term"));
        }
        let d = terms[0].mode.len();
        for t in &terms {
            if t.mode.len() != d || t.mode.iter().any(|&k| k == 0) {
                return Err(Error::domain(
                    "mode indices must be 1-based and share one dimension",
                ));
            }
            if !t.amplitude.is_finite() {
                return Err(Error::domain("mode amplitudes must be finite"));
            }
            if t.component > d {
                return Err(Error::domain(format!(
                    "component {} exceeds the {}-dimensional state",
                    t.component, d
                )));
            }
        }
        Ok(ModeSolution { terms })
    }

    pub fn terms(&self) -> &[ModeTerm] {
        &self.terms
    }

    /// Smallest band (per axis) that holds every term.
    pub fn min_band(&self) -> Vec<usize> {
        let d = self.terms[0].mode.len();
        (0..d)
            .map(|a| self.terms.iter().map(|t| t.mode[a]).max().unwrap())
            .collect()
    }

    fn place(&self, t: f64, grid: &Arc<SpectralGrid>, derivative: bool) -> Result<PVState> {
        let mut out = PVState::zero(grid);
        for term in &self.terms {
            if term
                .mode
                .iter()
                .zip(grid.modes())
                .any(|(&k, &band)| k > band)
            {
                return Err(Error::grid(format!(
                    "solution mode {:?} lies outside the band {:?}",
                    term.mode,
                    grid.modes()
                )));
            }
            let factor = if derivative {
                term.envelope.deriv(t)
            } else {
                term.envelope.eval(t)
            };
            let idx: Vec<usize> = term.mode.iter().map(|&k| k - 1).collect();
            let target = if term.component == 0 {
                &mut out.p
            } else {
                &mut out.v[term.component - 1]
            };
            target.coeffs_mut()[idx.as_slice()] += term.amplitude * factor;
        }
        Ok(out)
    }

    /// The exact state at time t on a grid whose band holds every term.
    pub fn state_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        self.place(t, grid, false)
    }

    /// The exact time derivative at time t.
    pub fn dt_state_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        self.place(t, grid, true)
    }

    /// Samples the exact solution and its time derivative on a time grid.
    pub fn trajectory(&self, grid: &Arc<SpectralGrid>, times: &[f64]) -> Result<Trajectory> {
        let states = times
            .iter()
            .map(|&t| self.state_at(t, grid))
            .collect::<Result<Vec<_>>>()?;
        let dt_states = times
            .iter()
            .map(|&t| self.dt_state_at(t, grid))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(times.to_vec(), states, dt_states)
    }

    /// Point values of each state component, for node-wise comparisons.
    pub fn eval_on_axis_points(
        &self,
        t: f64,
        grid: &Arc<SpectralGrid>,
        points: &[Vec<f64>],
    ) -> Result<Vec<ndarray::ArrayD<f64>>> {
        let u = self.state_at(t, grid)?;
        let mut out = Vec::with_capacity(grid.dim() + 1);
        out.push(u.p.eval_on_axis_points(points));
        for vi in &u.v {
            out.push(vi.eval_on_axis_points(points));
        }
        Ok(out)
    }
}

/// Adapts a state to the requested band by zero-padding or projecting.
fn fit_band(state: PVState, grid: &Arc<SpectralGrid>) -> Result<PVState> {
    let src = state.grid().modes().to_vec();
    let dst = grid.modes();
    if dst.iter().zip(&src).all(|(d, s)| d <= s) {
        state.restrict_to(grid)
    } else if dst.iter().zip(&src).all(|(d, s)| d >= s) {
        state.embed_into(grid)
    } else {
        Err(Error::grid(format!(
            "cannot fit band {src:?} to mixed target {dst:?}"
        )))
    }
}

/// Source that turns a mode solution into an exact solution of the system.
///
/// The defect du*/dt - A u* + B[u*, u*] is assembled on the carrier band of
/// `op` and projected onto whatever band a caller requests; since the
/// eigenbasis is nested, the restriction equals the exact projection of the
/// full source.
#[derive(Debug)]
pub struct ManufacturedForcing {
    op: ModelOperator,
    solution: ModeSolution,
}

impl ManufacturedForcing {
    pub fn new(op: ModelOperator, solution: ModeSolution) -> Result<Self> {
        // Surface out-of-band terms immediately rather than at first use.
        solution.state_at(0.0, op.grid())?;
        Ok(ManufacturedForcing { op, solution })
    }

    pub fn operator(&self) -> &ModelOperator {
        &self.op
    }

    pub fn solution(&self) -> &ModeSolution {
        &self.solution
    }

    /// The full defect on the carrier band.
    fn defect_at(&self, t: f64) -> Result<PVState> {
        let grid = self.op.grid();
        let u = self.solution.state_at(t, grid)?;
        let mut f = self.solution.dt_state_at(t, grid)?;
        f.axpy(-1.0, &self.op.apply_a(&u)?);
        f.axpy(1.0, &self.op.apply_b(&u, &u)?);
        Ok(f)
    }
}

impl SourceTerm for ManufacturedForcing {
    fn project_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        fit_band(self.defect_at(t)?, grid)
    }

    fn eval_on_axis_points(
        &self,
        t: f64,
        domain: &crate::basis::RectDomain,
        points: &[Vec<f64>],
    ) -> Result<Vec<ndarray::ArrayD<f64>>> {
        if domain != self.op.grid().domain() {
            return Err(Error::grid("source evaluated on a different box".to_string()));
        }
        // The defect is an in-band state plus the full quadratic tail; the
        // tail part of B[u*, u*] must be evaluated without projection.
        let grid = self.op.grid();
        let u = self.solution.state_at(t, grid)?;
        let mut f = self.solution.dt_state_at(t, grid)?;
        f.axpy(-1.0, &self.op.apply_a(&u)?);
        let mut out = Vec::with_capacity(grid.dim() + 1);
        let e = self.op.coeffs().eps;
        let p = u.p.to_trig();
        let vs: Vec<TrigTensor> = u.v.iter().map(|vi| vi.to_trig()).collect();
        let d = grid.dim();
        // Pressure row: eps1 p div v + eps2 grad p . v, evaluated pointwise.
        let mut bp = f.p.eval_on_axis_points(points);
        for i in 0..d {
            let term = p.product(&vs[i].derivative(i)).eval_on_axis_points(points);
            bp.scaled_add(e[0], &term);
            let term = p.derivative(i).product(&vs[i]).eval_on_axis_points(points);
            bp.scaled_add(e[1], &term);
        }
        out.push(bp);
        // Velocity rows: -(eps3/2) d_i(p^2) + (eps4/2) d_i |v|^2.
        let pp = p.product(&p);
        let mut vv = vs[0].product(&vs[0]);
        for vi in vs.iter().skip(1) {
            vv.axpy(1.0, &vi.product(vi));
        }
        for i in 0..d {
            let mut bv = f.v[i].eval_on_axis_points(points);
            bv.scaled_add(-0.5 * e[2], &pp.derivative(i).eval_on_axis_points(points));
            bv.scaled_add(0.5 * e[3], &vv.derivative(i).eval_on_axis_points(points));
            out.push(bv);
        }
        Ok(out)
    }
}

/// One rung of a convergence ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    /// Steps (temporal study) or modes per axis (spatial study).
    pub resolution: usize,
    /// Largest H1 distance to the exact solution over the time nodes.
    pub error: f64,
    /// Observed order against the previous rung.
    pub rate: Option<f64>,
}

/// Errors and observed orders across a refinement ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceStudy {
    fn from_errors(resolutions: &[usize], errors: &[f64]) -> Self {
        let rows = resolutions
            .iter()
            .zip(errors)
            .enumerate()
            .map(|(i, (&r, &e))| ConvergenceRow {
                resolution: r,
                error: e,
                rate: (i > 0).then(|| {
                    let ratio = resolutions[i] as f64 / resolutions[i - 1] as f64;
                    (errors[i - 1] / errors[i]).ln() / ratio.ln()
                }),
            })
            .collect();
        ConvergenceStudy { rows }
    }

    /// Observed order on the finest pair.
    pub fn final_rate(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rate)
    }

    /// Ratio of the coarsest error to the finest.
    pub fn total_drop(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) if b.error > 0.0 => a.error / b.error,
            _ => f64::INFINITY,
        }
    }

    /// Whether the observed orders grow along the ladder (the signature of
    /// faster-than-fixed-order convergence).
    pub fn rates_strictly_increase(&self) -> bool {
        let rates: Vec<f64> = self.rows.iter().filter_map(|r| r.rate).collect();
        rates.windows(2).all(|w| w[1] > w[0])
    }
}

/// Largest nodal H1 error of a computed trajectory against the exact
/// solution, measured on the carrier band of `truth`.
pub fn sup_h1_error(
    traj: &Trajectory,
    solution: &ModeSolution,
    truth: &Arc<SpectralGrid>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for (&t, u) in traj.times().iter().zip(traj.states()) {
        let mut diff = u.embed_into(truth)?;
        diff.axpy(-1.0, &solution.state_at(t, truth)?);
        worst = worst.max(diff.norm_h1());
    }
    Ok(worst)
}

/// Runs the solver against the exact solution across a ladder of step
/// counts on a fixed band that holds the solution, so the measured error is
/// purely temporal.
pub fn temporal_study(
    forcing: &ManufacturedForcing,
    horizon: f64,
    steps_list: &[usize],
    controls: &NewtonControls,
    ledger: &crate::basis::ConstantsLedger,
) -> Result<ConvergenceStudy> {
    let grid = forcing.operator().grid();
    let u0 = forcing.solution().state_at(0.0, grid)?;
    let mut errors = Vec::with_capacity(steps_list.len());
    for &steps in steps_list {
        let times = uniform_times(horizon, steps)?;
        let (traj, _) = newton_solve(forcing.operator(), forcing, &u0, &times, controls, ledger)?;
        errors.push(sup_h1_error(&traj, forcing.solution(), grid)?);
    }
    Ok(ConvergenceStudy::from_errors(steps_list, &errors))
}

/// Runs the solver across a ladder of bands at a fixed, fine step count, so
/// the measured error is dominated by the spectral truncation tail.
pub fn spatial_study(
    forcing: &ManufacturedForcing,
    horizon: f64,
    steps: usize,
    modes_list: &[usize],
    controls: &NewtonControls,
    estimate_opts: &crate::basis::EstimateOptions,
) -> Result<ConvergenceStudy> {
    let truth = forcing.operator().grid();
    let d = truth.dim();
    let coeffs = forcing.operator().coeffs();
    if !coeffs.gamma.is_zero() || !coeffs.delta.is_zero() {
        return Err(Error::domain(
            "the band ladder rebuilds operators per band and only supports constant coefficients",
        ));
    }
    let times = uniform_times(horizon, steps)?;
    let u0_full = forcing.solution().state_at(0.0, truth)?;
    let mut errors = Vec::with_capacity(modes_list.len());
    for &m in modes_list {
        let grid_m = SpectralGrid::new(truth.domain().clone(), vec![m; d], None)?;
        let coeffs_m =
            IbvpCoefficients::constant(&grid_m, coeffs.mu, coeffs.eta_v, coeffs.eps)?;
        let op_m = ModelOperator::new(Arc::clone(&grid_m), coeffs_m.clone())?;
        let ledger_m = crate::basis::estimate_constants(&grid_m, &coeffs_m, estimate_opts)?;
        let u0 = u0_full.restrict_to(&grid_m)?;
        let (traj, _) = newton_solve(&op_m, forcing, &u0, &times, controls, &ledger_m)?;
        errors.push(sup_h1_error(&traj, forcing.solution(), truth)?);
    }
    Ok(ConvergenceStudy::from_errors(modes_list, &errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{EstimateOptions, RectDomain};
    use crate::forcing::Envelope;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid1(m: usize) -> Arc<SpectralGrid> {
        SpectralGrid::new(RectDomain::unit(1).unwrap(), vec![m], None).unwrap()
    }

    fn op_on(grid: &Arc<SpectralGrid>, eps: [f64; 4]) -> ModelOperator {
        let coeffs = IbvpCoefficients::constant(grid, 0.1, 0.2, eps).unwrap();
        ModelOperator::new(Arc::clone(grid), coeffs).unwrap()
    }

    #[test]
    fn forcing_matches_hand_built_linear_defect() {
        // Pure pressure mode, zero couplings: f_p = (rate + mu Lambda) u*,
        // f_v = (1 + delta) proj(grad p) with delta = 0.
        let g = grid1(3);
        let op = op_on(&g, [0.0; 4]);
        let sol = ModeSolution::new(vec![ModeTerm {
            component: 0,
            mode: vec![2],
            amplitude: 0.7,
            envelope: Envelope::Exp { rate: -0.5 },
        }])
        .unwrap();
        let mf = ManufacturedForcing::new(op, sol).unwrap();
        let f0 = mf.project_at(0.0, &g).unwrap();
        let lam = 4.0 * PI * PI;
        assert_abs_diff_eq!(
            f0.p.coeffs()[[1]],
            0.7 * (-0.5 + 0.1 * lam),
            epsilon = 1e-12
        );
        // The velocity row carries the projected pressure gradient.
        let u0 = mf.solution().state_at(0.0, &g).unwrap();
        let grad = u0.p.to_trig().derivative(0).project(&g).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(f0.v[0].coeffs()[[i]], grad.coeffs()[[i]], epsilon = 1e-12);
        }
    }

    #[test]
    fn restriction_of_forcing_is_projection() {
        let g_big = grid1(8);
        let g_small = grid1(3);
        let op = op_on(&g_big, [0.2, 0.1, 0.1, 0.1]);
        let sol = ModeSolution::new(vec![
            ModeTerm {
                component: 0,
                mode: vec![2],
                amplitude: 0.4,
                envelope: Envelope::Constant,
            },
            ModeTerm {
                component: 1,
                mode: vec![3],
                amplitude: -0.3,
                envelope: Envelope::ExpCos {
                    rate: -0.2,
                    omega: 3.0,
                },
            },
        ])
        .unwrap();
        let mf = ManufacturedForcing::new(op, sol).unwrap();
        let full = mf.project_at(0.3, &g_big).unwrap();
        let small = mf.project_at(0.3, &g_small).unwrap();
        let again = full.restrict_to(&g_small).unwrap();
        let mut diff = small;
        diff.axpy(-1.0, &again);
        assert!(diff.norm_l2() < 1e-14);
    }

    #[test]
    fn pointwise_forcing_agrees_with_projection_when_in_band() {
        // With the band wide enough to hold the quadratic tail, projecting
        // the pointwise source must reproduce project_at.
        let g = grid1(4);
        let wide = grid1(9);
        let op = op_on(&g, [0.3, 0.2, 0.25, 0.15]);
        let sol = ModeSolution::new(vec![
            ModeTerm {
                component: 0,
                mode: vec![2],
                amplitude: 0.5,
                envelope: Envelope::Constant,
            },
            ModeTerm {
                component: 1,
                mode: vec![1],
                amplitude: 0.3,
                envelope: Envelope::Exp { rate: -1.0 },
            },
        ])
        .unwrap();
        let mf = ManufacturedForcing::new(op, sol).unwrap();
        let pts: Vec<Vec<f64>> = vec![wide.axis_nodes(0)];
        let vals = mf
            .eval_on_axis_points(0.2, g.domain(), &pts)
            .unwrap();
        let projected = mf.project_at(0.2, &wide).unwrap();
        let p_again = crate::basis::analyze(&wide, &vals[0]).unwrap();
        let v_again = crate::basis::analyze(&wide, &vals[1]).unwrap();
        let mut dp = p_again;
        dp.axpy(-1.0, &projected.p);
        let mut dv = v_again;
        dv.axpy(-1.0, &projected.v[0]);
        assert!(dp.norm_l2() < 1e-10, "p defect {}", dp.norm_l2());
        assert!(dv.norm_l2() < 1e-10, "v defect {}", dv.norm_l2());
    }

    #[test]
    fn temporal_ladder_shows_second_order() {
        let g = grid1(2);
        let op = op_on(&g, [0.05, 0.05, 0.05, 0.05]);
        let sol = ModeSolution::new(vec![
            ModeTerm {
                component: 0,
                mode: vec![1],
                amplitude: 0.3,
                envelope: Envelope::ExpCos {
                    rate: -0.4,
                    omega: 2.0,
                },
            },
            ModeTerm {
                component: 1,
                mode: vec![2],
                amplitude: 0.2,
                envelope: Envelope::Exp { rate: -0.3 },
            },
        ])
        .unwrap();
        let coeffs = op.coeffs().clone();
        let mf = ManufacturedForcing::new(op, sol).unwrap();
        let ledger =
            crate::basis::estimate_constants(&g, &coeffs, &EstimateOptions::default()).unwrap();
        let study = temporal_study(
            &mf,
            1.0,
            &[8, 16, 32],
            &NewtonControls::default(),
            &ledger,
        )
        .unwrap();
        let rate = study.final_rate().unwrap();
        assert!((rate - 2.0).abs() < 0.2, "observed temporal order {rate}");
        assert!(study.total_drop() > 10.0);
    }

    #[test]
    fn wider_bands_shrink_spatial_error() {
        let g_truth = grid1(8);
        let op = op_on(&g_truth, [0.1, 0.1, 0.1, 0.1]);
        let terms: Vec<ModeTerm> = (1..=6)
            .map(|k| ModeTerm {
                component: 0,
                mode: vec![k],
                amplitude: (-(k as f64)).exp(),
                envelope: Envelope::Constant,
            })
            .collect();
        let sol = ModeSolution::new(terms).unwrap();
        let mf = ManufacturedForcing::new(op, sol).unwrap();
        let study = spatial_study(
            &mf,
            0.5,
            32,
            &[2, 4],
            &NewtonControls::default(),
            &EstimateOptions::default(),
        )
        .unwrap();
        assert!(
            study.rows[1].error < 0.5 * study.rows[0].error,
            "errors {:?}",
            study.rows
        );
    }
}
