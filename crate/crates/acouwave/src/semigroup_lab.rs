//! Spectral laboratory for the constant-coefficient linear generator.
//!
//! With gamma = delta = 0 the generator splits into a symmetric dissipative
//! part (pure diffusion, diagonal on the eigenbasis) and a skew-symmetric
//! pressure-velocity coupling. On the truncated basis this structure is
//! exact, so three classical facts can be checked to round-off: the
//! numerical range lies left of -eta_tilde = -min(mu, eta) Lambda_min, the
//! propagator norms obey |exp(t A)| <= exp(-eta_tilde t), and the resolvent
//! along the imaginary axis is bounded with |lambda| |R(i lambda)| -> 1.
//!
//! The resolvent norm is computed from the smallest singular value of the
//! real 2n x 2n embedding of i lambda - A; the propagator through a
//! scaling-and-squaring exponential and a power iteration for the 2-norm.

use crate::basis::SpectralGrid;
use ndarray::Dimension;
use crate::error::{Error, Result};
use crate::linalg::{expm, fit_line, smallest_singular_value, spectral_norm};
use crate::linear_solver::generator_matrix;
use crate::nondim::IbvpCoefficients;
use crate::operators::ModelOperator;
use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;

/// Dense constant-coefficient generator on the truncated basis.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    grid: Arc<SpectralGrid>,
    mu: f64,
    eta_v: f64,
    matrix: DMatrix<f64>,
}

/// Assembles the generator with diffusivities mu and eta_v and zero
/// variable coefficients.
pub fn assemble_generator(
    grid: &Arc<SpectralGrid>,
    mu: f64,
    eta_v: f64,
) -> Result<TruncatedGenerator> {
    let coeffs = IbvpCoefficients::constant(grid, mu, eta_v, [0.0; 4])?;
    let op = ModelOperator::new(Arc::clone(grid), coeffs)?;
    Ok(TruncatedGenerator {
        grid: Arc::clone(grid),
        mu,
        eta_v,
        matrix: generator_matrix(&op)?,
    })
}

impl TruncatedGenerator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    /// Dissipation margin min(mu, eta_v) Lambda_min.
    pub fn eta_tilde(&self) -> f64 {
        self.mu.min(self.eta_v) * self.grid.lambda_min()
    }

    fn diffusion_diagonal(&self) -> Vec<f64> {
        // Flattening is row-major over modes, matching the state vector.
        let m = self.grid.mode_count();
        let mut lams = vec![0.0; m];
        let zero = crate::fields::PVState::zero(&self.grid);
        for (flat, (tensor_idx, _)) in zero.p.coeffs().indexed_iter().enumerate() {
            lams[flat] = self.grid.eigenvalue_at(tensor_idx.slice());
        }
        let mut out = Vec::with_capacity((self.grid.dim() + 1) * m);
        for c in 0..=self.grid.dim() {
            let diff = if c == 0 { self.mu } else { self.eta_v };
            out.extend(lams.iter().map(|l| -diff * l));
        }
        out
    }
}

/// Structure report for the skew/symmetric splitting of the generator.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    /// Max entry-wise defect between the symmetric part and the diffusion
    /// diagonal -mu Lambda / -eta Lambda.
    pub sym_defect: f64,
    /// Max entry-wise defect of S + S^T for the skew part (identically
    /// zero up to rounding in the assembly).
    pub skew_defect: f64,
    /// Largest eigenvalue mismatch between the symmetric part and the
    /// expected diffusion spectrum.
    pub eig_defect: f64,
    pub eta_tilde: f64,
}

/// Splits A = S + N and checks that N is exactly the diffusion diagonal.
pub fn decomposition_check(gen: &TruncatedGenerator) -> DecompositionReport {
    let a = &gen.matrix;
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let skew = (a - a.transpose()) * 0.5;
    let expected = gen.diffusion_diagonal();
    let mut sym_defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { expected[i] } else { 0.0 };
            sym_defect = sym_defect.max((sym[(i, j)] - want).abs());
        }
    }
    let mut skew_defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            skew_defect = skew_defect.max((skew[(i, j)] + skew[(j, i)]).abs());
        }
    }
    // Eigenvalues of the symmetric part against the diffusion spectrum.
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    let mut want = expected;
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    want.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let eig_defect = eigs
        .iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    DecompositionReport {
        sym_defect,
        skew_defect,
        eig_defect,
        eta_tilde: gen.eta_tilde(),
    }
}

/// Verdict on the numerical-range margin of the generator.
#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    /// Expected margin min(mu, eta_v) Lambda_min.
    pub eta_tilde: f64,
    /// Largest eigenvalue of the symmetric part (should be -eta_tilde).
    pub lambda_max_sym: f64,
    pub defect: f64,
}

/// Computes the sharp dissipativity margin: the numerical range of A lies
/// in Re z <= lambda_max(sym A), which must equal -eta_tilde exactly.
pub fn dissipativity_margin(gen: &TruncatedGenerator) -> MarginReport {
    let a = &gen.matrix;
    let sym = (a + a.transpose()) * 0.5;
    let lambda_max_sym = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let eta_tilde = gen.eta_tilde();
    MarginReport {
        eta_tilde,
        lambda_max_sym,
        defect: (lambda_max_sym + eta_tilde).abs(),
    }
}

/// One row of the imaginary-axis resolvent sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventPoint {
    pub lambda: f64,
    pub resolvent_norm: f64,
    pub lambda_times_norm: f64,
    pub unbounded: bool,
}

/// Default frequencies: 0 together with the dyadic ladder 1, 2, ..., 4096.
pub fn default_resolvent_lambdas() -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend((0..=12).map(|k| 2f64.powi(k)));
    v
}

/// Norm of (i lambda - A)^{-1} for each frequency, via the smallest
/// singular value of the real embedding [[-A, -lambda I], [lambda I, -A]].
pub fn resolvent_sweep(gen: &TruncatedGenerator, lambdas: &[f64]) -> Result<Vec<ResolventPoint>> {
    let a = &gen.matrix;
    let n = a.nrows();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::domain("resolvent frequencies must be finite and nonnegative"));
        }
        let sigma_min = if lambda == 0.0 {
            smallest_singular_value(&(-a), 1e-13, 600)
        } else {
            let mut r = DMatrix::zeros(2 * n, 2 * n);
            r.view_mut((0, 0), (n, n)).copy_from(&(-a));
            r.view_mut((n, n), (n, n)).copy_from(&(-a));
            for i in 0..n {
                r[(i, n + i)] = -lambda;
                r[(n + i, i)] = lambda;
            }
            smallest_singular_value(&r, 1e-13, 600)
        };
        let (norm, unbounded) = match sigma_min {
            Some(s) if s > 0.0 && s.is_finite() => (1.0 / s, false),
            _ => (f64::INFINITY, true),
        };
        out.push(ResolventPoint {
            lambda,
            resolvent_norm: norm,
            lambda_times_norm: lambda * norm,
            unbounded,
        });
    }
    Ok(out)
}

/// Propagator norms, contraction verdicts and the fitted decay rate.
#[derive(Debug, Clone, Serialize)]
pub struct PropagatorReport {
    /// (t, |exp(t A)|) samples used for the decay fit.
    pub samples: Vec<(f64, f64)>,
    /// (t, |exp(t A)|, within 1 + tol) at the contraction checkpoints.
    pub contraction: Vec<(f64, f64, bool)>,
    pub contraction_ok: bool,
    /// Decay rate fitted to ln |exp(t A)|; subadditivity of the log-norm
    /// guarantees it is at least eta_tilde up to rounding.
    pub fit_rate: f64,
    pub eta_tilde: f64,
    pub decay_ok: bool,
}

/// Evaluates |exp(t A)| at the fit and contraction times and fits the
/// exponential decay rate. `tol` bounds both the allowed contraction excess
/// and the fit-rate slack.
pub fn propagator_decay(
    gen: &TruncatedGenerator,
    fit_times: &[f64],
    contraction_times: &[f64],
    contraction_tol: f64,
    rate_tol: f64,
) -> Result<PropagatorReport> {
    if fit_times.len() < 2 {
        return Err(Error::domain("decay fit needs at least two sample times"));
    }
    let norm_at = |t: f64| -> f64 {
        let e = expm(&(&gen.matrix * t));
        spectral_norm(&e, 1e-13, 600)
    };
    let samples: Vec<(f64, f64)> = fit_times.iter().map(|&t| (t, norm_at(t))).collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let (slope, _) = fit_line(&xs, &ys)?;
    let fit_rate = -slope;
    let contraction: Vec<(f64, f64, bool)> = contraction_times
        .iter()
        .map(|&t| {
            let n = norm_at(t);
            (t, n, n <= 1.0 + contraction_tol)
        })
        .collect();
    let eta_tilde = gen.eta_tilde();
    Ok(PropagatorReport {
        contraction_ok: contraction.iter().all(|c| c.2),
        decay_ok: fit_rate >= eta_tilde - rate_tol,
        samples,
        contraction,
        fit_rate,
        eta_tilde,
    })
}
