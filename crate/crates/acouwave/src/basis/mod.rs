//! Sine eigenbasis of the Dirichlet Laplacian on axis-aligned boxes.
//!
//! Fields are represented by coefficients against the L2-normalized
//! eigenfunctions sigma_k(x) = prod_i sqrt(2/L_i) sin(k_i pi x_i / L_i),
//! k_i >= 1, truncated at a per-axis cutoff m_i. The eigenvalue of -Laplace
//! on sigma_k is Lambda_k = sum_i (k_i pi / L_i)^2, so differential operators
//! diagonal in the basis act exactly on coefficients. Collocation grids use
//! the interior equispaced nodes x_j = j L / (q+1), on which the discrete
//! sine transform is an exact L2 projection for in-band content; quadrature
//! node counts respect the 3/2 dealiasing rule so products of two in-band
//! factors are never aliased back into the band.

mod constants;
mod trig;

pub use constants::{estimate_constants, ConstantsLedger, EstimateOptions};
pub use trig::TrigTensor;

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayD, Axis, Dimension, IxDyn};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Axis-aligned box (0, L_1) x ... x (0, L_d), d in {1, 2, 3}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    lengths: Vec<f64>,
}

impl RectDomain {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 3 {
            return Err(Error::domain(format!(
                "spatial dimension must be 1, 2 or 3, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|&l| !l.is_finite() || l <= 0.0) {
            return Err(Error::domain("box edge lengths must be positive and finite"));
        }
        Ok(RectDomain { lengths })
    }

    pub fn unit(dim: usize) -> Result<Self> {
        RectDomain::new(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }
}

/// Dirichlet-Laplacian eigenvalue of the product-sine mode `k` (1-based).
pub fn eigenvalue(k: &[usize], domain: &RectDomain) -> Result<f64> {
    if k.len() != domain.dim() {
        return Err(Error::domain(format!(
            "mode index has {} entries but the domain is {}-dimensional",
            k.len(),
            domain.dim()
        )));
    }
    if k.iter().any(|&ki| ki == 0) {
        return Err(Error::domain("mode indices are 1-based; 0 is not a mode"));
    }
    Ok(k.iter()
        .zip(domain.lengths())
        .map(|(&ki, &li)| {
            let w = ki as f64 * std::f64::consts::PI / li;
            w * w
        })
        .sum())
}

/// Truncated sine basis together with its collocation grid.
///
/// `modes[i]` is the per-axis cutoff m_i; `quad_nodes[i]` the number of
/// interior collocation nodes, at least ceil(3 m_i / 2) so that pointwise
/// products of two in-band factors stay alias-free under the discrete
/// transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    domain: RectDomain,
    modes: Vec<usize>,
    quad_nodes: Vec<usize>,
}

/// Minimal alias-free node count for a cutoff.
pub fn dealiased_nodes(m: usize) -> usize {
    (3 * m).div_ceil(2)
}

impl SpectralGrid {
    pub fn new(domain: RectDomain, modes: Vec<usize>, quad_nodes: Option<Vec<usize>>) -> Result<Arc<Self>> {
        if modes.len() != domain.dim() {
            return Err(Error::domain(format!(
                "got {} mode cutoffs for a {}-dimensional domain",
                modes.len(),
                domain.dim()
            )));
        }
        if modes.iter().any(|&m| m == 0) {
            return Err(Error::domain("mode cutoffs must be at least 1"));
        }
        let quad_nodes = match quad_nodes {
            Some(q) => {
                if q.len() != modes.len() {
                    return Err(Error::domain("quad_nodes and modes must have equal length"));
                }
                for (qi, mi) in q.iter().zip(&modes) {
                    if *qi < dealiased_nodes(*mi) {
                        return Err(Error::domain(format!(
                            "quadrature nodes {} below the dealiasing minimum {} for cutoff {}",
                            qi,
                            dealiased_nodes(*mi),
                            mi
                        )));
                    }
                }
                q
            }
            None => modes.iter().map(|&m| dealiased_nodes(m)).collect(),
        };
        Ok(Arc::new(SpectralGrid { domain, modes, quad_nodes }))
    }

    pub fn domain(&self) -> &RectDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn quad_nodes(&self) -> &[usize] {
        &self.quad_nodes
    }

    /// Total number of scalar modes M = prod_i m_i.
    pub fn mode_count(&self) -> usize {
        self.modes.iter().product()
    }

    /// Interior collocation nodes x_j = j L / (q+1), j = 1..q, along `axis`.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let q = self.quad_nodes[axis];
        let l = self.domain.lengths()[axis];
        let h = l / (q as f64 + 1.0);
        (1..=q).map(|j| j as f64 * h).collect()
    }

    /// Eigenvalue of the mode at 0-based tensor position `idx`.
    pub fn eigenvalue_at(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .zip(self.domain.lengths())
            .map(|(&i, &li)| {
                let w = (i as f64 + 1.0) * std::f64::consts::PI / li;
                w * w
            })
            .sum()
    }

    /// Smallest eigenvalue on the band (the fundamental mode).
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalue_at(&vec![0; self.dim()])
    }

    fn synth_matrix(&self, axis: usize) -> Array2<f64> {
        let m = self.modes[axis];
        let q = self.quad_nodes[axis];
        let l = self.domain.lengths()[axis];
        let n = q as f64 + 1.0;
        let scale = (2.0 / l).sqrt();
        Array2::from_shape_fn((q, m), |(j, k)| {
            scale * ((k as f64 + 1.0) * std::f64::consts::PI * (j as f64 + 1.0) / n).sin()
        })
    }

    fn analyze_matrix(&self, axis: usize) -> Array2<f64> {
        let m = self.modes[axis];
        let q = self.quad_nodes[axis];
        let l = self.domain.lengths()[axis];
        let n = q as f64 + 1.0;
        let w = l / n;
        let scale = (2.0 / l).sqrt() * w;
        Array2::from_shape_fn((m, q), |(k, j)| {
            scale * ((k as f64 + 1.0) * std::f64::consts::PI * (j as f64 + 1.0) / n).sin()
        })
    }

    /// Matrix of point values of the normalized sine modes at `points`.
    fn eval_matrix(&self, axis: usize, points: &[f64]) -> Array2<f64> {
        let m = self.modes[axis];
        let l = self.domain.lengths()[axis];
        let scale = (2.0 / l).sqrt();
        Array2::from_shape_fn((points.len(), m), |(j, k)| {
            scale * ((k as f64 + 1.0) * std::f64::consts::PI * points[j] / l).sin()
        })
    }
}

/// Applies `mat` (out x in) along `axis` of a dynamic tensor.
pub(crate) fn apply_axis_matrix(t: &ArrayD<f64>, axis: usize, mat: &Array2<f64>) -> ArrayD<f64> {
    let in_len = t.shape()[axis];
    debug_assert_eq!(mat.ncols(), in_len);
    let out_len = mat.nrows();
    let mut shape = t.shape().to_vec();
    shape[axis] = out_len;
    let mut out = ArrayD::zeros(IxDyn(&shape));
    for (ilane, mut olane) in t
        .lanes(Axis(axis))
        .into_iter()
        .zip(out.lanes_mut(Axis(axis)).into_iter())
    {
        for r in 0..out_len {
            let mut acc = 0.0;
            for c in 0..in_len {
                acc += mat[[r, c]] * ilane[c];
            }
            olane[r] = acc;
        }
    }
    out
}

/// Scalar field given by coefficients against the truncated sine basis.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Arc<SpectralGrid>,
    coeffs: ArrayD<f64>,
}

impl SpectralField {
    pub fn zero(grid: &Arc<SpectralGrid>) -> Self {
        let shape: Vec<usize> = grid.modes().to_vec();
        SpectralField {
            grid: Arc::clone(grid),
            coeffs: ArrayD::zeros(IxDyn(&shape)),
        }
    }

    pub fn from_coeffs(grid: &Arc<SpectralGrid>, coeffs: ArrayD<f64>) -> Result<Self> {
        if coeffs.shape() != grid.modes() {
            return Err(Error::grid(format!(
                "coefficient shape {:?} does not match mode cutoffs {:?}",
                coeffs.shape(),
                grid.modes()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(SpectralField { grid: Arc::clone(grid), coeffs })
    }

    /// Field with a single unit coefficient on mode `k` (1-based).
    pub fn single_mode(grid: &Arc<SpectralGrid>, k: &[usize], amplitude: f64) -> Result<Self> {
        if k.len() != grid.dim() {
            return Err(Error::domain("mode index dimension mismatch"));
        }
        for (ki, mi) in k.iter().zip(grid.modes()) {
            if *ki == 0 || ki > mi {
                return Err(Error::domain(format!(
                    "mode {:?} outside the band {:?}",
                    k,
                    grid.modes()
                )));
            }
        }
        let mut f = SpectralField::zero(grid);
        let idx: Vec<usize> = k.iter().map(|ki| ki - 1).collect();
        f.coeffs[IxDyn(&idx)] = amplitude;
        Ok(f)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &ArrayD<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut ArrayD<f64> {
        &mut self.coeffs
    }

    pub fn same_grid(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub fn scale(&mut self, a: f64) {
        self.coeffs.mapv_inplace(|c| a * c);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// self += a * other.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        debug_assert!(self.same_grid(other));
        self.coeffs.zip_mut_with(&other.coeffs, |s, o| *s += a * o);
    }

    /// L2 inner product; exact by orthonormality of the basis.
    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Sum of Lambda_k^p c_k^2; p = 1 gives the squared H1 seminorm,
    /// p = 2 the squared norm of the Laplacian.
    pub fn weighted_sumsq(&self, p: i32) -> f64 {
        let mut acc = 0.0;
        for (idx, c) in self.coeffs.indexed_iter() {
            let lam = self.grid.eigenvalue_at(idx.slice());
            acc += lam.powi(p) * c * c;
        }
        acc
    }

    /// Coefficient-wise application of the Laplacian: c_k -> -Lambda_k c_k.
    pub fn laplacian(&self) -> SpectralField {
        let mut out = self.clone();
        for (idx, c) in out.coeffs.indexed_iter_mut() {
            *c *= -self.grid.eigenvalue_at(idx.slice());
        }
        out
    }

    /// Point values on the collocation grid.
    pub fn synth(&self) -> ArrayD<f64> {
        let mut t = self.coeffs.clone();
        for axis in 0..self.grid.dim() {
            let mat = self.grid.synth_matrix(axis);
            t = apply_axis_matrix(&t, axis, &mat);
        }
        t
    }

    /// Point values at a tensor grid of arbitrary points.
    pub fn eval_on_axis_points(&self, points: &[Vec<f64>]) -> ArrayD<f64> {
        let mut t = self.coeffs.clone();
        for axis in 0..self.grid.dim() {
            let mat = self.grid.eval_matrix(axis, &points[axis]);
            t = apply_axis_matrix(&t, axis, &mat);
        }
        t
    }

    /// Exact point values of the gradient component d/dx_axis at the
    /// collocation nodes (cosine series evaluation, no differencing).
    pub fn gradient_component(&self, axis: usize) -> ArrayD<f64> {
        let grid = &self.grid;
        let mut t = self.coeffs.clone();
        for a in 0..grid.dim() {
            let mat = if a == axis {
                let m = grid.modes()[a];
                let q = grid.quad_nodes()[a];
                let l = grid.domain().lengths()[a];
                let n = q as f64 + 1.0;
                let scale = (2.0 / l).sqrt();
                Array2::from_shape_fn((q, m), |(j, k)| {
                    let kk = k as f64 + 1.0;
                    scale * (kk * std::f64::consts::PI / l)
                        * (kk * std::f64::consts::PI * (j as f64 + 1.0) / n).cos()
                })
            } else {
                grid.synth_matrix(a)
            };
            t = apply_axis_matrix(&t, a, &mat);
        }
        t
    }

    /// Crude sup-norm bound from point evaluation on a refined grid.
    pub fn sup_norm_estimate(&self) -> f64 {
        let pts: Vec<Vec<f64>> = (0..self.grid.dim())
            .map(|a| {
                let l = self.grid.domain().lengths()[a];
                let n = 4 * self.grid.quad_nodes()[a] + 3;
                (1..=n).map(|j| j as f64 * l / (n as f64 + 1.0)).collect()
            })
            .collect();
        self.eval_on_axis_points(&pts)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Exact trigonometric-tensor representation of this field.
    pub fn to_trig(&self) -> TrigTensor {
        TrigTensor::from_field(self)
    }

    /// Zero-pads the coefficients into a grid with a band at least as large,
    /// on the same box.
    pub fn embed_into(&self, grid: &Arc<SpectralGrid>) -> Result<SpectralField> {
        if grid.domain() != self.grid.domain() {
            return Err(Error::grid("embedding requires the same box".to_string()));
        }
        if grid
            .modes()
            .iter()
            .zip(self.grid.modes())
            .any(|(big, small)| big < small)
        {
            return Err(Error::grid("embedding target band is smaller".to_string()));
        }
        let mut out = SpectralField::zero(grid);
        for (idx, &c) in self.coeffs.indexed_iter() {
            out.coeffs[idx] = c;
        }
        Ok(out)
    }

    /// Drops coefficients above a smaller band on the same box; the exact
    /// orthogonal projection onto the coarser space.
    pub fn restrict_to(&self, grid: &Arc<SpectralGrid>) -> Result<SpectralField> {
        if grid.domain() != self.grid.domain() {
            return Err(Error::grid("restriction requires the same box".to_string()));
        }
        if grid
            .modes()
            .iter()
            .zip(self.grid.modes())
            .any(|(small, big)| small > big)
        {
            return Err(Error::grid("restriction target band is larger".to_string()));
        }
        let mut out = SpectralField::zero(grid);
        for (idx, c) in out.coeffs.indexed_iter_mut() {
            *c = self.coeffs[idx];
        }
        Ok(out)
    }
}

impl std::ops::Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl std::ops::Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Field of the form constant + sine series; sine fields vanish on the
/// boundary, so spatially constant offsets need their own slot.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub constant: f64,
    pub field: SpectralField,
}

impl AffineField {
    pub fn zero(grid: &Arc<SpectralGrid>) -> Self {
        AffineField {
            constant: 0.0,
            field: SpectralField::zero(grid),
        }
    }

    pub fn constant(grid: &Arc<SpectralGrid>, c: f64) -> Self {
        AffineField {
            constant: c,
            field: SpectralField::zero(grid),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        AffineField {
            constant: a * self.constant,
            field: self.field.scaled(a),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.field.coeffs().iter().all(|&c| c == 0.0)
    }

    /// Upper estimate of sup |constant + field|.
    pub fn sup_norm_estimate(&self) -> f64 {
        if self.field.coeffs().iter().all(|&c| c == 0.0) {
            self.constant.abs()
        } else {
            let pts: Vec<Vec<f64>> = (0..self.field.grid().dim())
                .map(|a| {
                    let l = self.field.grid().domain().lengths()[a];
                    let n = 4 * self.field.grid().quad_nodes()[a] + 3;
                    (0..=n + 1).map(|j| j as f64 * l / (n as f64 + 1.0)).collect()
                })
                .collect();
            self.field
                .eval_on_axis_points(&pts)
                .iter()
                .fold(0.0f64, |m, v| m.max((self.constant + v).abs()))
        }
    }

    pub fn eval_on_axis_points(&self, points: &[Vec<f64>]) -> ArrayD<f64> {
        let mut vals = self.field.eval_on_axis_points(points);
        vals.mapv_inplace(|v| v + self.constant);
        vals
    }
}

/// Sine analysis of point samples on the collocation grid: the quadrature
/// realization of the L2 inner products with the basis. Exact whenever the
/// samples come from sine content below the node count.
pub fn analyze(grid: &Arc<SpectralGrid>, samples: &ArrayD<f64>) -> Result<SpectralField> {
    if samples.shape() != grid.quad_nodes() {
        return Err(Error::grid(format!(
            "sample shape {:?} does not match quadrature nodes {:?}",
            samples.shape(),
            grid.quad_nodes()
        )));
    }
    let mut t = samples.clone();
    for axis in 0..grid.dim() {
        let mat = grid.analyze_matrix(axis);
        t = apply_axis_matrix(&t, axis, &mat);
    }
    SpectralField::from_coeffs(grid, t)
}

/// L2-orthogonal projection of collocation samples onto the truncated basis.
/// Identical to `analyze`; kept as its own name because callers lean on the
/// projection semantics (idempotence, contraction).
pub fn project(grid: &Arc<SpectralGrid>, samples: &ArrayD<f64>) -> Result<SpectralField> {
    analyze(grid, samples)
}

/// Exact gradient of an in-band field, one sample array per axis.
pub fn gradient(f: &SpectralField) -> Vec<ArrayD<f64>> {
    (0..f.grid().dim()).map(|a| f.gradient_component(a)).collect()
}

/// Divergence of vector collocation samples.
///
/// Component i is interpreted as derivative-type content: a cosine series of
/// frequency at most m_i along axis i and in-band sine content along the
/// other axes, which is exactly the class `gradient` produces. The cosine
/// coefficients along axis i are recovered by least squares (the interior
/// grid Gram matrix has a closed-form inverse), differentiated exactly, and
/// the resulting sine field is synthesized back onto the nodes.
pub fn divergence(grid: &Arc<SpectralGrid>, v: &[ArrayD<f64>]) -> Result<ArrayD<f64>> {
    if v.len() != grid.dim() {
        return Err(Error::domain(format!(
            "divergence expects {} components, got {}",
            grid.dim(),
            v.len()
        )));
    }
    let mut total = SpectralField::zero(grid);
    for (axis, comp) in v.iter().enumerate() {
        if comp.shape() != grid.quad_nodes() {
            return Err(Error::grid("sample shape does not match quadrature nodes".to_string()));
        }
        let mut t = comp.clone();
        // Sine analysis along the axes transverse to the derivative.
        for a in 0..grid.dim() {
            if a != axis {
                t = apply_axis_matrix(&t, a, &grid.analyze_matrix(a));
            }
        }
        // Cosine recovery along the differentiated axis.
        let rec = cosine_recovery_matrix(grid, axis);
        t = apply_axis_matrix(&t, axis, &rec);
        // d/dx sqrt(2/L) cos(k pi x / L) = -(k pi / L) sigma_k.
        let l = grid.domain().lengths()[axis];
        let m = grid.modes()[axis];
        let diff = Array2::from_shape_fn((m, m), |(r, c)| {
            if r == c {
                -((r as f64 + 1.0) * std::f64::consts::PI / l)
            } else {
                0.0
            }
        });
        t = apply_axis_matrix(&t, axis, &diff);
        total.axpy(1.0, &SpectralField::from_coeffs(grid, t)?);
    }
    Ok(total.synth())
}

/// Least-squares recovery of normalized-cosine coefficients (frequencies
/// 1..m) from interior-node samples along `axis`. The normal-equation Gram
/// is (N/L) I minus rank-two parity corrections, inverted in closed form.
fn cosine_recovery_matrix(grid: &SpectralGrid, axis: usize) -> Array2<f64> {
    let m = grid.modes()[axis];
    let q = grid.quad_nodes()[axis];
    let l = grid.domain().lengths()[axis];
    let n = q as f64 + 1.0;
    let scale = (2.0 / l).sqrt();
    // Design matrix A[j, k] = sqrt(2/L) cos((k+1) pi (j+1) / N).
    let a = Array2::from_shape_fn((q, m), |(j, k)| {
        scale * ((k as f64 + 1.0) * std::f64::consts::PI * (j as f64 + 1.0) / n).cos()
    });
    // Gram G = alpha I - beta (P_even + P_odd) with alpha = N/L, beta = 2/L,
    // where P_par projects onto the all-ones vector over one parity class.
    let alpha = n / l;
    let beta = 2.0 / l;
    let mut ginv = Array2::from_shape_fn((m, m), |(r, c)| if r == c { 1.0 / alpha } else { 0.0 });
    for parity in 0..2usize {
        let members: Vec<usize> = (0..m).filter(|k| (k + 1) % 2 == parity).collect();
        let count = members.len() as f64;
        if members.is_empty() {
            continue;
        }
        let corr = 1.0 / (alpha - beta * count) - 1.0 / alpha;
        for &r in &members {
            for &c in &members {
                ginv[[r, c]] += corr / count;
            }
        }
    }
    // Recovery = G^{-1} A^T.
    let mut rec = Array2::zeros((m, q));
    for r in 0..m {
        for j in 0..q {
            let mut acc = 0.0;
            for k in 0..m {
                acc += ginv[[r, k]] * a[[j, k]];
            }
            rec[[r, j]] = acc;
        }
    }
    rec
}
