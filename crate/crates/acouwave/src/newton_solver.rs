//! Outer quasilinear iteration for the full semilinear system.
//!
//! Starting from the zero trajectory, each sweep freezes the current
//! iterate u* in the quadratic coupling and integrates the tangent system
//! with source B[u*, u*] + f. Because the nonlinearity is exactly
//! quadratic and the node derivative samples are defined as the node
//! right-hand sides, the nonlinear residual after each sweep telescopes to
//! B[delta, delta] with delta the latest update: the iteration is an exact
//! Newton method with quadratic convergence down to round-off.
//!
//! The admissibility of the first step is judged by the classical
//! majorant condition beta K |delta_1| <= 1/2 with beta the ledger's
//! solution-operator bound and K the Lipschitz constant of the derivative
//! (twice the bilinear bound).

use crate::basis::ConstantsLedger;
use crate::error::{Error, Result};
use crate::fields::{y_norm, PVState, Trajectory};
use crate::forcing::{SourceTerm, ZeroSource};
use crate::linalg::fit_line;
use crate::linear_solver::{solve_linearized, AssemblyMode};
use crate::operators::{ModelOperator, TangentSource};
use serde::Serialize;

/// Stopping controls for the outer iteration.
#[derive(Debug, Clone)]
pub struct NewtonControls {
    pub max_iter: usize,
    /// Absolute residual tolerance in the data norm (scaled by max(1, |data|)).
    pub tol_residual: f64,
    /// Relative update tolerance in the solution norm.
    pub tol_update: f64,
    pub mode: AssemblyMode,
}

impl Default for NewtonControls {
    fn default() -> Self {
        NewtonControls {
            max_iter: 12,
            tol_residual: 1e-10,
            tol_update: 1e-11,
            mode: AssemblyMode::Auto,
        }
    }
}

/// One sweep of the outer iteration.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonIterationRow {
    pub iteration: usize,
    /// Solution-norm size of the update delta_k.
    pub update_x: f64,
    /// Data-norm size of the nonlinear residual at the new iterate.
    pub residual_y: f64,
    /// |delta_k| / |delta_{k-1}|^2 where the denominator is above the
    /// round-off guard; the quadratic-convergence certificate.
    pub quadratic_ratio: Option<f64>,
    /// Whether the residual obeyed the quadratic bound
    /// c_b |eps| |delta_k|_{X~}^2 (up to a round-off floor).
    pub quadratic_bound_ok: bool,
}

/// Majorant admissibility data for the first step.
#[derive(Debug, Clone, Serialize)]
pub struct KantorovichReport {
    /// Solution-operator bound (beta).
    pub beta: f64,
    /// Derivative Lipschitz constant (K = 2 c_b |eps|).
    pub k_lipschitz: f64,
    /// Size of the first update.
    pub first_step: f64,
    /// Product beta K first_step; at most 1/2 for guaranteed convergence.
    pub h: f64,
    pub admissible: bool,
    /// Inner (guaranteed solution) radius when admissible.
    pub r_minus: Option<f64>,
    /// Outer (uniqueness) radius when admissible.
    pub r_plus: Option<f64>,
}

/// Majorant condition from a solution-operator bound, a derivative
/// Lipschitz constant, and the first-step size.
pub fn kantorovich_check(beta: f64, k_lipschitz: f64, first_step: f64) -> KantorovichReport {
    let bk = beta * k_lipschitz;
    let h = bk * first_step;
    let admissible = h <= 0.5;
    let (r_minus, r_plus) = if !admissible {
        (None, None)
    } else if bk == 0.0 {
        // Affine limit: the first step is the solution; no finite
        // uniqueness radius.
        (Some(first_step), None)
    } else {
        let root = (1.0 - 2.0 * h).max(0.0).sqrt();
        (Some((1.0 - root) / bk), Some((1.0 + root) / bk))
    };
    KantorovichReport {
        beta,
        k_lipschitz,
        first_step,
        h,
        admissible,
        r_minus,
        r_plus,
    }
}

/// Full convergence history of one outer solve.
#[derive(Debug, Clone, Serialize)]
pub struct NewtonReport {
    pub iterations: Vec<NewtonIterationRow>,
    pub converged: bool,
    /// Data norm |(f, u0)|_Y of the problem.
    pub data_norm: f64,
    pub kantorovich: KantorovichReport,
    /// Small-data product c_g^2 c_b |eps| |data|_Y; below 1/2 the fixed
    /// point is guaranteed to exist in the contraction ball.
    pub smallness_product: f64,
    pub smallness_ok: bool,
}

/// Solves the semilinear system by exact-Newton sweeps from the zero
/// trajectory. Returns the converged trajectory and the iteration report.
pub fn newton_solve(
    op: &ModelOperator,
    f: &dyn SourceTerm,
    u0: &PVState,
    times: &[f64],
    controls: &NewtonControls,
    ledger: &ConstantsLedger,
) -> Result<(Trajectory, NewtonReport)> {
    let grid = op.grid();
    let f_samples: Vec<PVState> = times
        .iter()
        .map(|&t| f.project_at(t, grid))
        .collect::<Result<_>>()?;
    let data_norm = y_norm(times, &f_samples, u0)?;
    let res_scale = data_norm.max(1.0);
    let k_lipschitz = 2.0 * ledger.c_b * ledger.eps_norm;

    let mut current = Trajectory::zero(grid, times)?;
    let mut rows: Vec<NewtonIterationRow> = Vec::new();
    let mut prev_update: Option<f64> = None;
    let mut converged = false;

    for iteration in 1..=controls.max_iter {
        let tangent = TangentSource {
            op,
            around: &current,
            f,
        };
        let next = solve_linearized(op, Some(&current), &tangent, u0, times, controls.mode)?;
        let delta = next.difference(&current)?;
        let delta_norms = delta.x_norms();
        let update_x = delta_norms.x;
        let residual_y = op.residual(&next, f, u0)?.norm_y();

        // Quadratic certificate: only meaningful while the previous update
        // is safely above the linear-solver noise floor.
        let scale = next.x_norms().x.max(1.0);
        let guard = 1e-13 * scale;
        let quadratic_ratio = prev_update
            .filter(|&p| p > guard)
            .map(|p| update_x / (p * p));
        let quad_bound =
            ledger.c_b * ledger.eps_norm * delta_norms.x_tilde * delta_norms.x_tilde;
        let quadratic_bound_ok = residual_y <= quad_bound + 1e-12 * res_scale;

        rows.push(NewtonIterationRow {
            iteration,
            update_x,
            residual_y,
            quadratic_ratio,
            quadratic_bound_ok,
        });
        prev_update = Some(update_x);
        current = next;

        if residual_y <= controls.tol_residual * res_scale
            && update_x <= controls.tol_update * scale
        {
            converged = true;
            break;
        }
    }

    let first_step = rows.first().map_or(0.0, |r| r.update_x);
    let kantorovich = kantorovich_check(ledger.c_g, k_lipschitz, first_step);
    let smallness_product = ledger.smallness_product(data_norm);
    let report = NewtonReport {
        iterations: rows,
        converged,
        data_norm,
        kantorovich,
        smallness_product,
        smallness_ok: smallness_product < 0.5,
    };
    if !report.converged {
        return Err(Error::NewtonNonConvergence {
            report: Box::new(report),
        });
    }
    Ok((current, report))
}

/// Long-horizon decay certificate for the unforced system.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    /// Dissipation margin min(mu, eta_v) Lambda_min of the linear part.
    pub eta_tilde: f64,
    /// Rate the study certifies against (must be below the margin).
    pub lambda: f64,
    /// Fitted decay rate of ln |u(t)|_{H1} over the tail window, None for
    /// trajectories that are identically zero there.
    pub fit_rate: Option<f64>,
    pub fit_window: (f64, f64),
    pub h1_initial: f64,
    pub h1_final: f64,
    pub satisfied: bool,
}

/// Solves the unforced system over [0, horizon] and fits the exponential
/// decay rate of the H1 norm over the second half of the horizon.
pub fn decay_study(
    op: &ModelOperator,
    u0: &PVState,
    lambda: f64,
    times: &[f64],
    controls: &NewtonControls,
    ledger: &ConstantsLedger,
) -> Result<DecayReport> {
    let eta_tilde = op.coeffs().mu.min(op.coeffs().eta_v) * op.grid().lambda_min();
    if !(lambda > 0.0) || lambda >= eta_tilde {
        return Err(Error::domain(format!(
            "certifiable rate must lie in (0, {eta_tilde:.6e}), got {lambda:.6e}"
        )));
    }
    let (traj, _) = newton_solve(op, &ZeroSource, u0, times, controls, ledger)?;
    let horizon = *times.last().unwrap();
    let window = (0.5 * horizon, horizon);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, s) in traj.times().iter().zip(traj.states()) {
        if *t >= window.0 {
            let h1 = s.norm_h1();
            if h1 > 0.0 {
                xs.push(*t);
                ys.push(h1.ln());
            }
        }
    }
    let h1_initial = traj.states()[0].norm_h1();
    let h1_final = traj.states().last().unwrap().norm_h1();
    if xs.len() < 2 {
        // Identically zero tail: decay is trivially at least lambda.
        return Ok(DecayReport {
            eta_tilde,
            lambda,
            fit_rate: None,
            fit_window: window,
            h1_initial,
            h1_final,
            satisfied: true,
        });
    }
    let (slope, _) = fit_line(&xs, &ys)?;
    let fit_rate = -slope;
    Ok(DecayReport {
        eta_tilde,
        lambda,
        fit_rate: Some(fit_rate),
        fit_window: window,
        h1_initial,
        h1_final,
        satisfied: fit_rate >= lambda,
    })
}
