//! Second-order finite-difference solver for the same initial-boundary-value
//! problem, used as an independent cross-check of the spectral solver.
//!
//! The box is covered by a uniform grid with N cells per axis; unknowns live
//! on the (N-1)^d interior nodes, with homogeneous Dirichlet values outside.
//! Space is discretized with central differences (three-point Laplacian,
//! two-point first derivatives), time with the implicit midpoint rule: the
//! constant linear part is solved through a single LU factorization and the
//! quadratic terms are lagged in a fixed-point iteration at each step.
//!
//! Nothing here touches the eigenbasis: agreement with the spectral solver
//! at the expected O(h^2) rate validates both paths end to end.

use crate::error::{Error, Result};
use crate::fields::PVState;
use crate::forcing::SourceTerm;
use crate::operators::ModelOperator;
use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayD, Axis, IxDyn, Slice};
use serde::Serialize;

/// Finite-difference trajectory: interior-node values per time and component.
#[derive(Debug, Clone)]
pub struct FdSolution {
    pub times: Vec<f64>,
    /// Interior node coordinates per axis.
    pub nodes: Vec<Vec<f64>>,
    /// Grid spacing per axis.
    pub h: Vec<f64>,
    /// states[k][c] is component c at time k on the interior grid.
    pub states: Vec<Vec<ArrayD<f64>>>,
}

/// One rung of the mesh-refinement ladder against a spectral reference.
#[derive(Debug, Clone, Serialize)]
pub struct FdLadderRow {
    pub cells: usize,
    pub h_max: f64,
    /// Relative space-time L2 distance to the spectral reference.
    pub rel_error: f64,
    /// Observed order against the previous rung.
    pub rate: Option<f64>,
}

/// Central first difference with zero Dirichlet ghosts.
fn diff_central(u: &ArrayD<f64>, axis: usize, h: f64) -> ArrayD<f64> {
    let n = u.shape()[axis];
    let mut out = ArrayD::zeros(u.raw_dim());
    out.slice_axis_mut(Axis(axis), Slice::from(..n - 1))
        .zip_mut_with(&u.slice_axis(Axis(axis), Slice::from(1..)), |o, &x| {
            *o += x;
        });
    out.slice_axis_mut(Axis(axis), Slice::from(1..))
        .zip_mut_with(&u.slice_axis(Axis(axis), Slice::from(..n - 1)), |o, &x| {
            *o -= x;
        });
    out.mapv_inplace(|x| x / (2.0 * h));
    out
}

struct Mesh {
    shape: Vec<usize>,
    strides: Vec<usize>,
    h: Vec<f64>,
    nodes: Vec<Vec<f64>>,
}

impl Mesh {
    fn new(lengths: &[f64], cells: usize) -> Result<Mesh> {
        if cells < 2 {
            return Err(Error::domain("the difference grid needs at least two cells"));
        }
        let d = lengths.len();
        let shape: Vec<usize> = vec![cells - 1; d];
        let h: Vec<f64> = lengths.iter().map(|l| l / cells as f64).collect();
        let nodes: Vec<Vec<f64>> = (0..d)
            .map(|a| (1..cells).map(|j| j as f64 * h[a]).collect())
            .collect();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Ok(Mesh {
            shape,
            strides,
            h,
            nodes,
        })
    }

    fn points(&self) -> usize {
        self.shape.iter().product()
    }

    /// Multi-index of a flat interior position.
    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.shape.len()];
        for a in 0..self.shape.len() {
            idx[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
        idx
    }
}

/// Assembles the linear part: diffusion plus the pressure-velocity coupling
/// with the frozen spatial coefficients gamma(x), delta(x).
fn linear_matrix(op: &ModelOperator, mesh: &Mesh) -> DMatrix<f64> {
    let d = mesh.shape.len();
    let m = mesh.points();
    let n = (d + 1) * m;
    let coeffs = op.coeffs();
    let gamma = coeffs.gamma.eval_on_axis_points(&mesh.nodes);
    let delta = coeffs.delta.eval_on_axis_points(&mesh.nodes);
    let mut l = DMatrix::zeros(n, n);
    for flat in 0..m {
        let idx = mesh.unflatten(flat);
        // Diffusion stencils, one per component.
        for c in 0..=d {
            let diff = if c == 0 { coeffs.mu } else { coeffs.eta_v };
            let row = c * m + flat;
            for a in 0..d {
                let w = diff / (mesh.h[a] * mesh.h[a]);
                l[(row, row)] -= 2.0 * w;
                if idx[a] > 0 {
                    l[(row, row - mesh.strides[a])] += w;
                }
                if idx[a] + 1 < mesh.shape[a] {
                    l[(row, row + mesh.strides[a])] += w;
                }
            }
        }
        // Pressure row: -(1 + gamma) div v.
        let gp = 1.0 + gamma[IxDyn(&idx)];
        for a in 0..d {
            let w = gp / (2.0 * mesh.h[a]);
            let col0 = (a + 1) * m + flat;
            if idx[a] + 1 < mesh.shape[a] {
                l[(flat, col0 + mesh.strides[a])] -= w;
            }
            if idx[a] > 0 {
                l[(flat, col0 - mesh.strides[a])] += w;
            }
        }
        // Velocity rows: -(1 + delta) d_a p.
        let dp = 1.0 + delta[IxDyn(&idx)];
        for a in 0..d {
            let w = dp / (2.0 * mesh.h[a]);
            let row = (a + 1) * m + flat;
            if idx[a] + 1 < mesh.shape[a] {
                l[(row, flat + mesh.strides[a])] -= w;
            }
            if idx[a] > 0 {
                l[(row, flat - mesh.strides[a])] += w;
            }
        }
    }
    l
}

fn flatten_components(mesh: &Mesh, comps: &[ArrayD<f64>]) -> DVector<f64> {
    let m = mesh.points();
    let mut out = DVector::zeros(comps.len() * m);
    for (c, arr) in comps.iter().enumerate() {
        for (i, &x) in arr.iter().enumerate() {
            out[c * m + i] = x;
        }
    }
    out
}

fn unflatten_components(mesh: &Mesh, d: usize, x: &DVector<f64>) -> Vec<ArrayD<f64>> {
    let m = mesh.points();
    (0..=d)
        .map(|c| {
            ArrayD::from_shape_vec(IxDyn(&mesh.shape), x.as_slice()[c * m..(c + 1) * m].to_vec())
                .expect("interior shape matches")
        })
        .collect()
}

/// Quadratic terms of the right-hand side, evaluated pointwise.
fn nonlinear_terms(mesh: &Mesh, eps: &[f64; 4], comps: &[ArrayD<f64>]) -> Vec<ArrayD<f64>> {
    let d = mesh.shape.len();
    let p = &comps[0];
    let v = &comps[1..];
    // Pressure row: -(eps1 p div v + eps2 grad p . v).
    let mut np = ArrayD::zeros(p.raw_dim());
    for a in 0..d {
        let dv = diff_central(&v[a], a, mesh.h[a]);
        np.zip_mut_with(&(&dv * p), |o, &x| *o -= eps[0] * x);
        let dp = diff_central(p, a, mesh.h[a]);
        np.zip_mut_with(&(&dp * &v[a]), |o, &x| *o -= eps[1] * x);
    }
    let mut out = vec![np];
    // Velocity rows: +(eps3/2) d_a(p^2) - (eps4/2) d_a |v|^2.
    let p2 = p * p;
    let mut v2 = &v[0] * &v[0];
    for vi in v.iter().skip(1) {
        v2.zip_mut_with(&(vi * vi), |o, &x| *o += x);
    }
    for a in 0..d {
        let mut nv = diff_central(&p2, a, mesh.h[a]);
        nv.mapv_inplace(|x| 0.5 * eps[2] * x);
        nv.zip_mut_with(&diff_central(&v2, a, mesh.h[a]), |o, &x| {
            *o -= 0.5 * eps[3] * x;
        });
        out.push(nv);
    }
    out
}

/// Runs the finite-difference solver on a uniform time grid.
///
/// `op` supplies the coefficients and the box; `u0` is sampled at the
/// interior nodes; the source must support pointwise evaluation.
pub fn fd_solve(
    op: &ModelOperator,
    f: &dyn SourceTerm,
    u0: &PVState,
    times: &[f64],
    cells: usize,
) -> Result<FdSolution> {
    let grid = op.grid();
    let d = grid.dim();
    if times.len() < 2 {
        return Err(Error::domain("the time grid needs at least two nodes"));
    }
    let dt = times[1] - times[0];
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0))
    {
        return Err(Error::domain(
            "the difference solver reuses one factorization and needs uniform steps",
        ));
    }
    let mesh = Mesh::new(grid.domain().lengths(), cells)?;
    let m = mesh.points();
    let n = (d + 1) * m;
    let l = linear_matrix(op, &mesh);
    let mut lhs = DMatrix::identity(n, n);
    lhs -= &l * (0.5 * dt);
    let lu = lhs.lu();
    let eps = op.coeffs().eps;

    let mut comps: Vec<ArrayD<f64>> = Vec::with_capacity(d + 1);
    comps.push(u0.p.eval_on_axis_points(&mesh.nodes));
    for vi in &u0.v {
        comps.push(vi.eval_on_axis_points(&mesh.nodes));
    }
    let mut x = flatten_components(&mesh, &comps);
    let mut states = vec![comps];
    for w in times.windows(2) {
        let t_mid = 0.5 * (w[0] + w[1]);
        let f_mid =
            flatten_components(&mesh, &f.eval_on_axis_points(t_mid, grid.domain(), &mesh.nodes)?);
        let base = &x + &l * &x * (0.5 * dt) + &f_mid * dt;
        let mut next = x.clone();
        let scale = x.norm().max(1.0);
        let mut converged = false;
        for _ in 0..50 {
            let mid = (&x + &next) * 0.5;
            let nl = flatten_components(
                &mesh,
                &nonlinear_terms(&mesh, &eps, &unflatten_components(&mesh, d, &mid)),
            );
            let candidate = lu
                .solve(&(&base + &nl * dt))
                .ok_or_else(|| Error::LinearSolve {
                    t: t_mid,
                    detail: "midpoint matrix is singular on the difference grid".to_string(),
                })?;
            let change = (&candidate - &next).norm();
            next = candidate;
            if change <= 1e-10 * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "fixed-point iteration of the difference midpoint step".to_string(),
                iterations: 50,
                last_change: f64::NAN,
            });
        }
        x = next;
        states.push(unflatten_components(&mesh, d, &x));
    }
    Ok(FdSolution {
        times: times.to_vec(),
        nodes: mesh.nodes,
        h: mesh.h,
        states,
    })
}

/// Relative space-time L2 distance between a spectral trajectory and a
/// finite-difference solution on the difference nodes.
pub fn compare_with_spectral(traj: &crate::fields::Trajectory, fd: &FdSolution) -> Result<f64> {
    if traj.times().len() != fd.times.len()
        || traj
            .times()
            .iter()
            .zip(&fd.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::domain(
            "the trajectories must share one time grid to be compared",
        ));
    }
    let cell: f64 = fd.h.iter().product();
    let mut err_sq = vec![0.0; fd.times.len()];
    let mut ref_sq = vec![0.0; fd.times.len()];
    for (k, u) in traj.states().iter().enumerate() {
        let mut comps = vec![u.p.eval_on_axis_points(&fd.nodes)];
        for vi in &u.v {
            comps.push(vi.eval_on_axis_points(&fd.nodes));
        }
        for (c, spec) in comps.iter().enumerate() {
            let fdc = &fd.states[k][c];
            err_sq[k] += spec
                .iter()
                .zip(fdc.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                * cell;
            ref_sq[k] += spec.iter().map(|a| a * a).sum::<f64>() * cell;
        }
    }
    let num = crate::fields::trapezoid(&fd.times, &err_sq).sqrt();
    let den = crate::fields::trapezoid(&fd.times, &ref_sq).sqrt();
    if den == 0.0 {
        return Err(Error::domain("the reference trajectory is identically zero"));
    }
    Ok(num / den)
}

/// Refinement ladder: solves at each cell count and reports the distance to
/// the spectral reference with observed orders.
pub fn fd_ladder(
    op: &ModelOperator,
    f: &dyn SourceTerm,
    u0: &PVState,
    reference: &crate::fields::Trajectory,
    cells_list: &[usize],
) -> Result<Vec<FdLadderRow>> {
    let mut rows: Vec<FdLadderRow> = Vec::with_capacity(cells_list.len());
    for &cells in cells_list {
        let fd = fd_solve(op, f, u0, reference.times(), cells)?;
        let rel = compare_with_spectral(reference, &fd)?;
        let rate = rows.last().map(|prev: &FdLadderRow| {
            (prev.rel_error / rel).ln() / (cells as f64 / prev.cells as f64).ln()
        });
        rows.push(FdLadderRow {
            cells,
            h_max: fd.h.iter().cloned().fold(0.0, f64::max),
            rel_error: rel,
            rate,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{estimate_constants, EstimateOptions, RectDomain, SpectralGrid};
    use crate::fields::uniform_times;
    use crate::forcing::{Envelope, Forcing, ModeTerm};
    use crate::newton_solver::{newton_solve, NewtonControls};
    use crate::nondim::IbvpCoefficients;
    use std::sync::Arc;

    // The reference band must out-resolve the finest difference grid: the
    // derivative coupling scatters into opposite-parity modes, so a narrow
    // band leaves a truncation floor that masks the O(h^2) ladder.
    fn setup_1d(
        eps: [f64; 4],
    ) -> (
        Arc<SpectralGrid>,
        ModelOperator,
        crate::basis::ConstantsLedger,
    ) {
        let grid = SpectralGrid::new(RectDomain::unit(1).unwrap(), vec![48], None).unwrap();
        let coeffs = IbvpCoefficients::constant(&grid, 0.1, 0.1, eps).unwrap();
        let ledger = estimate_constants(&grid, &coeffs, &EstimateOptions::default()).unwrap();
        let op = ModelOperator::new(Arc::clone(&grid), coeffs).unwrap();
        (grid, op, ledger)
    }

    fn forcing_1d() -> Forcing {
        Forcing {
            terms: vec![ModeTerm {
                component: 0,
                mode: vec![1],
                amplitude: 0.4,
                envelope: Envelope::ExpCos {
                    rate: -0.5,
                    omega: 4.0,
                },
            }],
        }
    }

    fn initial_1d(grid: &Arc<SpectralGrid>) -> PVState {
        let mut u0 = PVState::zero(grid);
        u0.p.coeffs_mut()[[0]] = 0.3;
        u0.v[0].coeffs_mut()[[1]] = -0.2;
        u0
    }

    #[test]
    fn difference_solution_tracks_spectral_reference() {
        let (grid, op, ledger) = setup_1d([0.0; 4]);
        let times = uniform_times(0.5, 128).unwrap();
        let f = forcing_1d();
        let u0 = initial_1d(&grid);
        let (reference, _) =
            newton_solve(&op, &f, &u0, &times, &NewtonControls::default(), &ledger).unwrap();
        let fd = fd_solve(&op, &f, &u0, &times, 32).unwrap();
        let rel = compare_with_spectral(&reference, &fd).unwrap();
        assert!(rel < 0.01, "relative gap {rel}");
    }

    #[test]
    fn refinement_shows_second_order_linear_and_nonlinear() {
        for eps in [[0.0; 4], [0.3, 0.2, 0.25, 0.2]] {
            let (grid, op, ledger) = setup_1d(eps);
            let times = uniform_times(0.5, 256).unwrap();
            let f = forcing_1d();
            let u0 = initial_1d(&grid);
            let (reference, _) =
                newton_solve(&op, &f, &u0, &times, &NewtonControls::default(), &ledger).unwrap();
            let rows = fd_ladder(&op, &f, &u0, &reference, &[8, 16, 32]).unwrap();
            for row in &rows[1..] {
                let rate = row.rate.unwrap();
                assert!(
                    (rate - 2.0).abs() < 0.4,
                    "rate {rate} at {} cells (eps {eps:?})",
                    row.cells
                );
            }
            assert!(rows[2].rel_error < 0.05);
        }
    }

    #[test]
    fn two_dimensional_stencils_cross_check() {
        let grid = SpectralGrid::new(RectDomain::unit(2).unwrap(), vec![12, 12], None).unwrap();
        let coeffs = IbvpCoefficients::constant(&grid, 0.1, 0.1, [0.2, 0.1, 0.1, 0.1]).unwrap();
        let ledger = estimate_constants(&grid, &coeffs, &EstimateOptions::default()).unwrap();
        let op = ModelOperator::new(Arc::clone(&grid), coeffs).unwrap();
        let mut u0 = PVState::zero(&grid);
        u0.p.coeffs_mut()[[0, 0]] = 0.3;
        u0.v[1].coeffs_mut()[[1, 0]] = 0.15;
        let f = Forcing {
            terms: vec![ModeTerm {
                component: 2,
                mode: vec![1, 2],
                amplitude: 0.2,
                envelope: Envelope::Exp { rate: -1.0 },
            }],
        };
        let times = uniform_times(0.25, 32).unwrap();
        let (reference, _) =
            newton_solve(&op, &f, &u0, &times, &NewtonControls::default(), &ledger).unwrap();
        let rows = fd_ladder(&op, &f, &u0, &reference, &[6, 12]).unwrap();
        let rate = rows[1].rate.unwrap();
        assert!((rate - 2.0).abs() < 0.7, "rate {rate}");
        assert!(rows[1].rel_error < 0.08, "error {}", rows[1].rel_error);
    }

    #[test]
    fn nonuniform_times_are_rejected() {
        let (grid, op, _) = setup_1d([0.0; 4]);
        let u0 = initial_1d(&grid);
        let err = fd_solve(&op, &forcing_1d(), &u0, &[0.0, 0.1, 0.3], 8);
        assert!(err.is_err());
    }
}
