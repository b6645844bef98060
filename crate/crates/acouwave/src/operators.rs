//! Galerkin action of the pressure-velocity model operator.
//!
//! The semilinear system splits as du/dt = A u - B[u, u] + f with
//!
//!   (A u)_p   = mu Lap p - P[(1 + gamma) div v],
//!   (A u)_vi  = eta_v Lap v_i - P[(1 + delta) d_i p],
//!   (B[u,w])_p  = eps1 P[p div w] + eps2 P[grad q . v],
//!   (B[u,w])_vi = -(eps3/2) P[d_i (p q)] + (eps4/2) P[d_i (v . w)],
//!
//! where u = (p, v), w = (q, w) and P is the L2 projection onto the sine
//! band. All products and derivatives are evaluated in the exact mixed trig
//! algebra and projected with closed-form integrals, so structural
//! identities of the continuous operators (skew cancellation of the
//! coupling, bilinearity, the exact second-order expansion of the
//! nonlinearity) hold to round-off on the discrete level.

use crate::basis::{SpectralField, SpectralGrid, TrigTensor};
use crate::error::{Error, Result};
use crate::fields::{trapezoid, PVState, Trajectory};
use crate::forcing::SourceTerm;
use crate::nondim::IbvpCoefficients;
use serde::Serialize;
use std::sync::Arc;

/// Model operator bound to a grid and a coefficient set.
#[derive(Debug, Clone)]
pub struct ModelOperator {
    grid: Arc<SpectralGrid>,
    coeffs: IbvpCoefficients,
    gamma_trig: Option<TrigTensor>,
    delta_trig: Option<TrigTensor>,
}

impl ModelOperator {
    pub fn new(grid: Arc<SpectralGrid>, coeffs: IbvpCoefficients) -> Result<Self> {
        coeffs.validate()?;
        if coeffs.grid() != &grid {
            return Err(Error::grid(
                "coefficient fields live on a different grid than the operator".to_string(),
            ));
        }
        let nonzero = |f: &SpectralField| f.coeffs().iter().any(|&c| c != 0.0);
        let gamma_trig = nonzero(&coeffs.gamma.field).then(|| coeffs.gamma.field.to_trig());
        let delta_trig = nonzero(&coeffs.delta.field).then(|| coeffs.delta.field.to_trig());
        Ok(ModelOperator { grid, coeffs, gamma_trig, delta_trig })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &IbvpCoefficients {
        &self.coeffs
    }

    /// Linear generator action A u.
    pub fn apply_a(&self, u: &PVState) -> Result<PVState> {
        self.check_state(u)?;
        let mut out = PVState::zero(&self.grid);

        // Pressure row: mu Lap p - P[(1 + gamma) div v].
        let mut div = TrigTensor::zero(self.grid.domain().lengths(), self.grid.modes());
        for (axis, vi) in u.v.iter().enumerate() {
            div.axpy(1.0, &vi.to_trig().derivative(axis));
        }
        let mut p_coupling = div.project(&self.grid)?.scaled(1.0 + self.coeffs.gamma.constant);
        if let Some(g) = &self.gamma_trig {
            p_coupling.axpy(1.0, &g.product(&div).project(&self.grid)?);
        }
        out.p = u.p.laplacian().scaled(self.coeffs.mu);
        out.p.axpy(-1.0, &p_coupling);

        // Velocity rows: eta_v Lap v_i - P[(1 + delta) d_i p].
        let p_trig = u.p.to_trig();
        for axis in 0..u.dim() {
            let dp = p_trig.derivative(axis);
            let mut coupling = dp.project(&self.grid)?.scaled(1.0 + self.coeffs.delta.constant);
            if let Some(dl) = &self.delta_trig {
                coupling.axpy(1.0, &dl.product(&dp).project(&self.grid)?);
            }
            out.v[axis] = u.v[axis].laplacian().scaled(self.coeffs.eta_v);
            out.v[axis].axpy(-1.0, &coupling);
        }
        Ok(out)
    }

    /// Quadratic form B[u, w]; bilinear in both arguments.
    pub fn apply_b(&self, u: &PVState, w: &PVState) -> Result<PVState> {
        self.check_state(u)?;
        self.check_state(w)?;
        let [e1, e2, e3, e4] = self.coeffs.eps;
        let mut out = PVState::zero(&self.grid);
        let p_trig = u.p.to_trig();
        let q_trig = w.p.to_trig();

        // Pressure row: eps1 p div(w_vel) + eps2 grad q . u_vel.
        if e1 != 0.0 {
            let mut div_w = TrigTensor::zero(self.grid.domain().lengths(), self.grid.modes());
            for (axis, wi) in w.v.iter().enumerate() {
                div_w.axpy(1.0, &wi.to_trig().derivative(axis));
            }
            out.p.axpy(e1, &p_trig.product(&div_w).project(&self.grid)?);
        }
        if e2 != 0.0 {
            for (axis, vi) in u.v.iter().enumerate() {
                let term = q_trig.derivative(axis).product(&vi.to_trig());
                out.p.axpy(e2, &term.project(&self.grid)?);
            }
        }

        // Velocity rows: -(eps3/2) d_i(p q) + (eps4/2) d_i(u_vel . w_vel).
        let pq = (e3 != 0.0).then(|| p_trig.product(&q_trig));
        let vw = (e4 != 0.0).then(|| {
            let mut acc =
                TrigTensor::zero(self.grid.domain().lengths(), &self.doubled_band());
            for (vi, wi) in u.v.iter().zip(&w.v) {
                acc.axpy(1.0, &vi.to_trig().product(&wi.to_trig()));
            }
            acc
        });
        for axis in 0..u.dim() {
            if let Some(pq) = &pq {
                out.v[axis].axpy(-0.5 * e3, &pq.derivative(axis).project(&self.grid)?);
            }
            if let Some(vw) = &vw {
                out.v[axis].axpy(0.5 * e4, &vw.derivative(axis).project(&self.grid)?);
            }
        }
        Ok(out)
    }

    fn doubled_band(&self) -> Vec<usize> {
        self.grid.modes().iter().map(|m| 2 * m).collect()
    }

    /// Linearization of the full right-hand side around a state u:
    /// A h - B[u, h] - B[h, u].
    pub fn apply_linearized(&self, u: &PVState, h: &PVState) -> Result<PVState> {
        let mut out = self.apply_a(h)?;
        out.axpy(1.0, &self.coupling_at(u)?.apply(h)?);
        Ok(out)
    }

    /// Precomputes the trig expansions of a frozen state for repeated
    /// applications of the coupling derivative h -> -B[u, h] - B[h, u].
    /// Assembling step matrices column by column hits this many times per
    /// frozen state, so the expansions must not be rebuilt per direction.
    pub fn coupling_at(&self, u: &PVState) -> Result<LinearizedCoupling<'_>> {
        self.check_state(u)?;
        let lengths = self.grid.domain().lengths();
        let p_trig = u.p.to_trig();
        let v_trigs: Vec<TrigTensor> = u.v.iter().map(|vi| vi.to_trig()).collect();
        let mut div_v = TrigTensor::zero(lengths, self.grid.modes());
        let mut dp = Vec::with_capacity(u.dim());
        for (axis, vt) in v_trigs.iter().enumerate() {
            div_v.axpy(1.0, &vt.derivative(axis));
            dp.push(p_trig.derivative(axis));
        }
        Ok(LinearizedCoupling {
            op: self,
            p_trig,
            v_trigs,
            div_v,
            dp,
        })
    }

    fn check_state(&self, u: &PVState) -> Result<()> {
        if u.grid() != &self.grid {
            return Err(Error::grid("state lives on a different grid".to_string()));
        }
        Ok(())
    }

    /// Node-wise defect of the full nonlinear system along a trajectory:
    /// defect_k = du/dt(t_k) - A u_k + B[u_k, u_k] - f(t_k), plus the
    /// initial-value defect u(0) - u0.
    pub fn residual(
        &self,
        traj: &Trajectory,
        f: &dyn SourceTerm,
        u0: &PVState,
    ) -> Result<Residual> {
        self.check_state(u0)?;
        let mut defects = Vec::with_capacity(traj.len());
        for (k, t) in traj.times().iter().enumerate() {
            let u = &traj.states()[k];
            let mut d = traj.dt_states()[k].clone();
            d.axpy(-1.0, &self.apply_a(u)?);
            d.axpy(1.0, &self.apply_b(u, u)?);
            d.axpy(-1.0, &f.project_at(*t, &self.grid)?);
            defects.push(d);
        }
        let initial = &traj.states()[0] - u0;
        Ok(Residual {
            times: traj.times().to_vec(),
            defects,
            initial,
        })
    }

    /// Derivative of the residual map at `around`, applied to a direction:
    /// node-wise dh/dt - A h + B[u, h] + B[h, u], plus the initial value of
    /// the direction.
    pub fn apply_fprime(
        &self,
        around: &Trajectory,
        direction: &Trajectory,
    ) -> Result<Residual> {
        if around.times() != direction.times() {
            return Err(Error::domain(
                "derivative application needs matching time grids",
            ));
        }
        let mut defects = Vec::with_capacity(direction.len());
        for (u, (h, dth)) in around
            .states()
            .iter()
            .zip(direction.states().iter().zip(direction.dt_states()))
        {
            let mut d = dth.clone();
            d.axpy(-1.0, &self.apply_a(h)?);
            d.axpy(1.0, &self.apply_b(u, h)?);
            d.axpy(1.0, &self.apply_b(h, u)?);
            defects.push(d);
        }
        Ok(Residual {
            times: direction.times().to_vec(),
            defects,
            initial: direction.states()[0].clone(),
        })
    }

    /// Exact sup-norm budget for the variable coefficients: they must stay
    /// below min(mu, eta_v) Lambda_min / d for the dissipation margin of the
    /// linear part to survive the perturbation.
    pub fn perturbation_report(&self) -> PerturbationReport {
        let lambda_min = self.grid.lambda_min();
        let budget = self.coeffs.mu.min(self.coeffs.eta_v) * lambda_min / self.grid.dim() as f64;
        let gamma_sup = self.coeffs.gamma.sup_norm_estimate();
        let delta_sup = self.coeffs.delta.sup_norm_estimate();
        PerturbationReport {
            gamma_sup,
            delta_sup,
            budget,
            within_budget: gamma_sup < budget && delta_sup < budget,
        }
    }
}

/// Coupling derivative around a frozen state, with its trig expansions
/// cached: apply evaluates h -> -B[u, h] - B[h, u].
pub struct LinearizedCoupling<'a> {
    op: &'a ModelOperator,
    p_trig: TrigTensor,
    v_trigs: Vec<TrigTensor>,
    div_v: TrigTensor,
    dp: Vec<TrigTensor>,
}

impl LinearizedCoupling<'_> {
    pub fn apply(&self, h: &PVState) -> Result<PVState> {
        let op = self.op;
        op.check_state(h)?;
        let [e1, e2, e3, e4] = op.coeffs.eps;
        let grid = &op.grid;
        let lengths = grid.domain().lengths();
        let doubled = op.doubled_band();
        let q_trig = h.p.to_trig();
        let hv_trigs: Vec<TrigTensor> = h.v.iter().map(|vi| vi.to_trig()).collect();
        let mut out = PVState::zero(grid);

        // Pressure row, accumulated before the single projection:
        // -e1 (p div h_vel + q div v) - e2 sum_i (d_i q v_i + d_i p h_i).
        let mut acc = TrigTensor::zero(lengths, &doubled);
        if e1 != 0.0 {
            let mut div_h = TrigTensor::zero(lengths, grid.modes());
            for (axis, ht) in hv_trigs.iter().enumerate() {
                div_h.axpy(1.0, &ht.derivative(axis));
            }
            acc.axpy(-e1, &self.p_trig.product(&div_h));
            acc.axpy(-e1, &q_trig.product(&self.div_v));
        }
        if e2 != 0.0 {
            for axis in 0..h.dim() {
                acc.axpy(-e2, &q_trig.derivative(axis).product(&self.v_trigs[axis]));
                acc.axpy(-e2, &self.dp[axis].product(&hv_trigs[axis]));
            }
        }
        out.p = acc.project(grid)?;

        // Velocity rows: both argument orders double the halves, leaving
        // e3 d_i(p q) - e4 d_i(v . h_vel).
        let pq = (e3 != 0.0).then(|| self.p_trig.product(&q_trig));
        let vh = (e4 != 0.0).then(|| {
            let mut acc = TrigTensor::zero(lengths, &doubled);
            for (vt, ht) in self.v_trigs.iter().zip(&hv_trigs) {
                acc.axpy(1.0, &vt.product(ht));
            }
            acc
        });
        for axis in 0..h.dim() {
            let mut accv = TrigTensor::zero(lengths, &doubled);
            if let Some(pq) = &pq {
                accv.axpy(e3, &pq.derivative(axis));
            }
            if let Some(vh) = &vh {
                accv.axpy(-e4, &vh.derivative(axis));
            }
            out.v[axis] = accv.project(grid)?;
        }
        Ok(out)
    }
}

/// Size report for the variable zeroth-order coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub gamma_sup: f64,
    pub delta_sup: f64,
    pub budget: f64,
    pub within_budget: bool,
}

/// Node-wise residual of the nonlinear system along a trajectory.
#[derive(Debug, Clone)]
pub struct Residual {
    pub times: Vec<f64>,
    pub defects: Vec<PVState>,
    pub initial: PVState,
}

impl Residual {
    /// Data-space size sqrt(int |defect|^2 dt + |initial|_{H1}^2).
    pub fn norm_y(&self) -> f64 {
        let sq: Vec<f64> = self.defects.iter().map(|d| d.dot(d)).collect();
        (trapezoid(&self.times, &sq) + self.initial.norm_h1().powi(2))
            .max(0.0)
            .sqrt()
    }
}

/// Right-hand side of the tangent (linearized) problem around a trajectory:
/// f_tilde(t) = B[u*(t), u*(t)] + f(t). Solving the linearized system with
/// this source reproduces the full Newton step for the semilinear problem.
pub struct TangentSource<'a> {
    pub op: &'a ModelOperator,
    pub around: &'a Trajectory,
    pub f: &'a dyn SourceTerm,
}

impl SourceTerm for TangentSource<'_> {
    fn project_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Result<PVState> {
        let u = self.around.interp(t)?;
        let mut out = self.op.apply_b(&u, &u)?;
        out.axpy(1.0, &self.f.project_at(t, grid)?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::RectDomain;
    use crate::fields::uniform_times;
    use crate::forcing::ZeroSource;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid2d(m: usize) -> Arc<SpectralGrid> {
        SpectralGrid::new(RectDomain::unit(2).unwrap(), vec![m, m], None).unwrap()
    }

    fn random_state(grid: &Arc<SpectralGrid>, rng: &mut ChaCha8Rng) -> PVState {
        let mut u = PVState::zero(grid);
        for c in u.p.coeffs_mut().iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        for v in &mut u.v {
            for c in v.coeffs_mut().iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        u
    }

    fn operator(grid: &Arc<SpectralGrid>, eps: [f64; 4]) -> ModelOperator {
        let coeffs = IbvpCoefficients::constant(grid, 0.1, 0.2, eps).unwrap();
        ModelOperator::new(Arc::clone(grid), coeffs).unwrap()
    }

    #[test]
    fn one_mode_linear_action_is_diagonal() {
        // With a single 1D mode the pressure-velocity coupling projects to
        // zero (cos(pi x) is orthogonal to sin(pi x)), leaving the pure
        // diffusion diagonal.
        let grid = SpectralGrid::new(RectDomain::unit(1).unwrap(), vec![1], None).unwrap();
        let op = operator(&grid, [0.0; 4]);
        let mut u = PVState::zero(&grid);
        u.p = SpectralField::single_mode(&grid, &[1], 1.0).unwrap();
        u.v[0] = SpectralField::single_mode(&grid, &[1], 1.0).unwrap();
        let au = op.apply_a(&u).unwrap();
        let idx = ndarray::IxDyn(&[0]);
        assert_abs_diff_eq!(au.p.coeffs()[idx.clone()], -0.1 * PI * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(au.v[0].coeffs()[idx], -0.2 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn coupling_blocks_cancel_in_the_inner_product() {
        // <A u, u> = -mu |grad p|^2 - eta |grad v|^2 for gamma = delta = 0:
        // the first-order coupling is skew and must cancel to round-off.
        let grid = grid2d(8);
        let op = operator(&grid, [0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let u = random_state(&grid, &mut rng);
            let au = op.apply_a(&u).unwrap();
            let quad = au.dot(&u);
            let expect = -0.1 * u.p.weighted_sumsq(1)
                - 0.2 * u.v.iter().map(|v| v.weighted_sumsq(1)).sum::<f64>();
            assert_abs_diff_eq!(quad, expect, epsilon = 1e-9 * quad.abs().max(1.0));
        }
    }

    #[test]
    fn quadratic_form_is_bilinear() {
        let grid = grid2d(4);
        let op = operator(&grid, [0.04, 0.01, 0.01, 0.01]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u1 = random_state(&grid, &mut rng);
        let u2 = random_state(&grid, &mut rng);
        let w = random_state(&grid, &mut rng);
        let (a, b) = (0.7, -1.3);
        let mut lin = u1.scaled(a);
        lin.axpy(b, &u2);
        let left = op.apply_b(&lin, &w).unwrap();
        let mut right = op.apply_b(&u1, &w).unwrap().scaled(a);
        right.axpy(b, &op.apply_b(&u2, &w).unwrap());
        assert!((&left - &right).norm_l2() < 1e-12 * left.norm_l2().max(1.0));
        // Second argument as well.
        let left2 = op.apply_b(&w, &lin).unwrap();
        let mut right2 = op.apply_b(&w, &u1).unwrap().scaled(a);
        right2.axpy(b, &op.apply_b(&w, &u2).unwrap());
        assert!((&left2 - &right2).norm_l2() < 1e-12 * left2.norm_l2().max(1.0));
    }

    #[test]
    fn residual_expansion_is_exactly_second_order() {
        // F(u + h) - F(u) - F'(u) h = (B[h, h], 0) identically, because the
        // nonlinearity is quadratic and everything is projected exactly.
        let grid = grid2d(4);
        let op = operator(&grid, [0.04, 0.01, 0.01, 0.01]);
        let times = uniform_times(1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let make_traj = |rng: &mut ChaCha8Rng| {
            let states: Vec<PVState> = times.iter().map(|_| random_state(&grid, rng)).collect();
            let dts: Vec<PVState> = times.iter().map(|_| random_state(&grid, rng)).collect();
            Trajectory::new(times.clone(), states, dts).unwrap()
        };
        let u = make_traj(&mut rng);
        let h = make_traj(&mut rng);
        let sum_states: Vec<PVState> = u
            .states()
            .iter()
            .zip(h.states())
            .map(|(a, b)| a + b)
            .collect();
        let sum_dts: Vec<PVState> = u
            .dt_states()
            .iter()
            .zip(h.dt_states())
            .map(|(a, b)| a + b)
            .collect();
        let sum = Trajectory::new(times.clone(), sum_states, sum_dts).unwrap();
        let u0 = PVState::zero(&grid);
        let f = ZeroSource;
        let r_sum = op.residual(&sum, &f, &u0).unwrap();
        let r_u = op.residual(&u, &f, &u0).unwrap();
        let dr = op.apply_fprime(&u, &h).unwrap();
        for k in 0..times.len() {
            let mut lhs = r_sum.defects[k].clone();
            lhs.axpy(-1.0, &r_u.defects[k]);
            lhs.axpy(-1.0, &dr.defects[k]);
            let bhh = op.apply_b(&h.states()[k], &h.states()[k]).unwrap();
            let gap = (&lhs - &bhh).norm_l2();
            assert!(gap < 1e-10 * bhh.norm_l2().max(1.0), "gap {gap}");
        }
        // Initial-value row of the expansion is linear and cancels exactly.
        let mut init = r_sum.initial.clone();
        init.axpy(-1.0, &r_u.initial);
        init.axpy(-1.0, &dr.initial);
        assert!(init.norm_l2() < 1e-13);
    }

    #[test]
    fn variable_coefficients_enter_the_coupling() {
        // gamma = c sigma_(1,1): the pressure row must pick up the exact
        // projection of gamma * div v.
        let grid = grid2d(3);
        let mut coeffs = IbvpCoefficients::constant(&grid, 0.1, 0.2, [0.0; 4]).unwrap();
        coeffs.gamma.field = SpectralField::single_mode(&grid, &[1, 1], 0.3).unwrap();
        let op = ModelOperator::new(Arc::clone(&grid), coeffs.clone()).unwrap();
        let base = operator(&grid, [0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_state(&grid, &mut rng);
        let full = op.apply_a(&u).unwrap();
        let plain = base.apply_a(&u).unwrap();
        // Difference must equal -P[gamma div v] computed independently.
        let mut div = TrigTensor::zero(grid.domain().lengths(), grid.modes());
        for (axis, vi) in u.v.iter().enumerate() {
            div.axpy(1.0, &vi.to_trig().derivative(axis));
        }
        let expected = coeffs
            .gamma
            .field
            .to_trig()
            .product(&div)
            .project(&grid)
            .unwrap();
        let diff = &full.p - &plain.p;
        assert!((&diff + &expected).norm_l2() < 1e-11);
    }

    #[test]
    fn perturbation_report_budget() {
        let grid = grid2d(3);
        let op = operator(&grid, [0.0; 4]);
        let rep = op.perturbation_report();
        assert_abs_diff_eq!(rep.budget, 0.1 * 2.0 * PI * PI / 2.0, epsilon = 1e-12);
        assert!(rep.within_budget);
    }
}
