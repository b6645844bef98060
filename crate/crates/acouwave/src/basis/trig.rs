//! Exact algebra on truncated mixed sine/cosine tensor series.
//!
//! Pointwise products of truncated sine series and their derivatives live in
//! the span of products of sines and cosines. On a box that span is again a
//! tensor series with per-axis content {cos(f pi x / L)}_{f>=0} union
//! {sin(f pi x / L)}_{f>=1}, closed under products (angle-addition rules)
//! and differentiation. Representing nonlinear terms here and contracting
//! against the normalized sine modes with closed-form integrals yields
//! Galerkin projections that are exact to round-off, rather than quadrature
//! approximations: skew symmetries of the continuous operators then survive
//! discretization at the 1e-12 level instead of being polluted by O(1)
//! boundary-quadrature error.
//!
//! Axis slot encoding: slot 0 is cos of frequency 0 (the constant), slot
//! 2f-1 is cos of frequency f, slot 2f is sin of frequency f.

use super::{apply_axis_matrix, SpectralField, SpectralGrid};
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayD, Dimension, IxDyn};
use std::f64::consts::PI;
use std::sync::Arc;

/// Truncated tensor series over per-axis mixed trig families.
#[derive(Debug, Clone)]
pub struct TrigTensor {
    lengths: Vec<f64>,
    bands: Vec<usize>,
    data: ArrayD<f64>,
}

/// Upper bound on the spatial dimension, used to keep per-entry bookkeeping
/// in fixed-size arrays on the hot product path.
const MAX_AXES: usize = 4;

/// One nonzero tensor entry with its per-axis factors predecoded.
#[derive(Debug, Clone, Copy)]
struct Entry {
    fns: [AxisFn; MAX_AXES],
    value: f64,
}

/// One axis factor: cosine or sine of frequency f (in units of pi/L).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AxisFn {
    Cos(usize),
    Sin(usize),
}

fn decode(slot: usize) -> AxisFn {
    if slot == 0 {
        AxisFn::Cos(0)
    } else if slot % 2 == 1 {
        AxisFn::Cos(slot / 2 + 1)
    } else {
        AxisFn::Sin(slot / 2)
    }
}

/// Slot index for an axis factor; sin of frequency 0 vanishes identically
/// and has no slot.
fn encode(f: AxisFn) -> Option<usize> {
    match f {
        AxisFn::Cos(0) => Some(0),
        AxisFn::Cos(f) => Some(2 * f - 1),
        AxisFn::Sin(0) => None,
        AxisFn::Sin(f) => Some(2 * f),
    }
}

/// Angle-addition expansion of a product of two axis factors. Each product
/// is exactly a half-weighted pair of factors at the sum and difference
/// frequencies.
fn product_rule(a: AxisFn, b: AxisFn) -> [(AxisFn, f64); 2] {
    use AxisFn::{Cos, Sin};
    match (a, b) {
        (Cos(f1), Cos(f2)) => [(Cos(f1.abs_diff(f2)), 0.5), (Cos(f1 + f2), 0.5)],
        (Sin(f1), Sin(f2)) => [(Cos(f1.abs_diff(f2)), 0.5), (Cos(f1 + f2), -0.5)],
        (Sin(f1), Cos(f2)) => {
            let sgn = if f1 >= f2 { 0.5 } else { -0.5 };
            [(Sin(f1 + f2), 0.5), (Sin(f1.abs_diff(f2)), sgn)]
        }
        (Cos(f1), Sin(f2)) => {
            let sgn = if f2 >= f1 { 0.5 } else { -0.5 };
            [(Sin(f1 + f2), 0.5), (Sin(f1.abs_diff(f2)), sgn)]
        }
    }
}

/// Integral over (0, L) of cos(r pi x / L) sin(n pi x / L), n >= 1.
/// Vanishes for n = r and for n + r even; equals
/// (L / pi) n (1 - (-1)^{n+r}) / (n^2 - r^2) otherwise (also valid at r = 0).
fn cos_sin_integral(l: f64, r: usize, n: usize) -> f64 {
    if n == r || (n + r) % 2 == 0 {
        0.0
    } else {
        let nf = n as f64;
        let rf = r as f64;
        l / PI * nf * 2.0 / (nf * nf - rf * rf)
    }
}

impl TrigTensor {
    pub fn zero(lengths: &[f64], bands: &[usize]) -> Self {
        assert_eq!(lengths.len(), bands.len());
        let shape: Vec<usize> = bands.iter().map(|&b| 2 * b + 1).collect();
        TrigTensor {
            lengths: lengths.to_vec(),
            bands: bands.to_vec(),
            data: ArrayD::zeros(IxDyn(&shape)),
        }
    }

    /// The constant function c.
    pub fn constant(lengths: &[f64], c: f64) -> Self {
        let mut t = TrigTensor::zero(lengths, &vec![0; lengths.len()]);
        t.data[IxDyn(&vec![0; lengths.len()])] = c;
        t
    }

    /// Embeds a sine-coefficient field: pure sine slots, scaled by the
    /// normalization prod_i sqrt(2 / L_i).
    pub fn from_field(field: &SpectralField) -> Self {
        let grid = field.grid();
        let lengths = grid.domain().lengths().to_vec();
        let bands = grid.modes().to_vec();
        let norm: f64 = lengths.iter().map(|&l| (2.0 / l).sqrt()).product();
        let mut t = TrigTensor::zero(&lengths, &bands);
        for (idx, &c) in field.coeffs().indexed_iter() {
            if c == 0.0 {
                continue;
            }
            let slot: Vec<usize> = idx.slice().iter().map(|&i| 2 * (i + 1)).collect();
            t.data[IxDyn(&slot)] = norm * c;
        }
        t
    }

    pub fn bands(&self) -> &[usize] {
        &self.bands
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.mapv_inplace(|c| a * c);
    }

    /// Row-major strides of the slot tensor, padded to `MAX_AXES`.
    fn strides(&self) -> [usize; MAX_AXES] {
        let d = self.dim();
        let shape = self.data.shape();
        let mut strides = [1usize; MAX_AXES];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        strides
    }

    /// Nonzero entries with predecoded per-axis factors, in one linear scan.
    fn entries(&self) -> Vec<Entry> {
        let d = self.dim();
        debug_assert!(d <= MAX_AXES);
        let strides = self.strides();
        let slice = self.data.as_slice().expect("slot tensors are contiguous");
        let mut out = Vec::new();
        for (flat, &value) in slice.iter().enumerate() {
            if value == 0.0 {
                continue;
            }
            let mut fns = [AxisFn::Cos(0); MAX_AXES];
            let mut rem = flat;
            for a in 0..d {
                fns[a] = decode(rem / strides[a]);
                rem %= strides[a];
            }
            out.push(Entry { fns, value });
        }
        out
    }

    /// self += a * other; other's band must fit inside self's band. Slot
    /// indices encode (kind, frequency) independently of the band, so the
    /// embedding is index-preserving.
    pub fn axpy(&mut self, a: f64, other: &TrigTensor) {
        debug_assert_eq!(self.lengths, other.lengths);
        debug_assert!(self
            .bands
            .iter()
            .zip(&other.bands)
            .all(|(sb, ob)| sb >= ob));
        let d = self.dim();
        let strides = self.strides();
        let other_strides = other.strides();
        let src = other.data.as_slice().expect("slot tensors are contiguous");
        let dst = self.data.as_slice_mut().expect("slot tensors are contiguous");
        for (flat, &c) in src.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let mut target = 0usize;
            let mut rem = flat;
            for axis in 0..d {
                target += (rem / other_strides[axis]) * strides[axis];
                rem %= other_strides[axis];
            }
            dst[target] += a * c;
        }
    }

    /// Exact pointwise product; bands add. Only nonzero entry pairs are
    /// visited and the accumulation runs on flat offsets, which keeps the
    /// quadratic pair loop cheap enough for repeated operator assembly.
    pub fn product(&self, other: &TrigTensor) -> TrigTensor {
        debug_assert_eq!(self.lengths, other.lengths);
        let d = self.dim();
        let bands: Vec<usize> = self
            .bands
            .iter()
            .zip(&other.bands)
            .map(|(a, b)| a + b)
            .collect();
        let mut out = TrigTensor::zero(&self.lengths, &bands);
        let strides = out.strides();
        let lhs = self.entries();
        let rhs = other.entries();
        let buf = out.data.as_slice_mut().expect("slot tensors are contiguous");
        let mut rules = [[(AxisFn::Cos(0), 0.0); 2]; MAX_AXES];
        for ea in &lhs {
            for eb in &rhs {
                let base = ea.value * eb.value;
                // Expand the product axis by axis: 2^d combinations.
                for axis in 0..d {
                    rules[axis] = product_rule(ea.fns[axis], eb.fns[axis]);
                }
                for mask in 0..(1usize << d) {
                    let mut w = base;
                    let mut flat = 0usize;
                    let mut dead = false;
                    for (axis, rule) in rules.iter().take(d).enumerate() {
                        let (f, rw) = rule[(mask >> axis) & 1];
                        match encode(f) {
                            Some(s) => {
                                flat += s * strides[axis];
                                w *= rw;
                            }
                            None => {
                                dead = true;
                                break;
                            }
                        }
                    }
                    if !dead && w != 0.0 {
                        buf[flat] += w;
                    }
                }
            }
        }
        out
    }

    /// Exact derivative along `axis`: cos(f) -> -(f pi / L) sin(f),
    /// sin(f) -> (f pi / L) cos(f). The band is unchanged; in slot encoding
    /// the swap moves exactly one position along the axis.
    pub fn derivative(&self, axis: usize) -> TrigTensor {
        let mut out = TrigTensor::zero(&self.lengths, &self.bands);
        let l = self.lengths[axis];
        let strides = self.strides();
        let slots = self.data.shape()[axis];
        let src = self.data.as_slice().expect("slot tensors are contiguous");
        let dst = out.data.as_slice_mut().expect("slot tensors are contiguous");
        for (flat, &c) in src.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            match decode((flat / strides[axis]) % slots) {
                AxisFn::Cos(0) => {}
                AxisFn::Cos(f) => dst[flat + strides[axis]] -= f as f64 * PI / l * c,
                AxisFn::Sin(f) => dst[flat - strides[axis]] += f as f64 * PI / l * c,
            }
        }
        out
    }

    /// L2 projection onto the grid's normalized sine band, using closed-form
    /// integrals of each axis factor against the sine modes.
    pub fn project(&self, grid: &Arc<SpectralGrid>) -> Result<SpectralField> {
        if grid.domain().lengths() != self.lengths.as_slice() {
            return Err(Error::grid(
                "trig tensor and grid live on different boxes".to_string(),
            ));
        }
        let mut t = self.data.clone();
        for axis in 0..self.dim() {
            let m = grid.modes()[axis];
            let l = self.lengths[axis];
            let slots = 2 * self.bands[axis] + 1;
            let scale = (2.0 / l).sqrt();
            let half = (l / 2.0).sqrt();
            let mat = Array2::from_shape_fn((m, slots), |(n, s)| {
                let n1 = n + 1;
                match decode(s) {
                    AxisFn::Cos(r) => scale * cos_sin_integral(l, r, n1),
                    AxisFn::Sin(f) => {
                        if f == n1 {
                            half
                        } else {
                            0.0
                        }
                    }
                }
            });
            t = apply_axis_matrix(&t, axis, &mat);
        }
        SpectralField::from_coeffs(grid, t)
    }

    /// Point values at a tensor grid of points.
    pub fn eval_on_axis_points(&self, points: &[Vec<f64>]) -> ArrayD<f64> {
        let mut t = self.data.clone();
        for axis in 0..self.dim() {
            let l = self.lengths[axis];
            let slots = 2 * self.bands[axis] + 1;
            let mat = Array2::from_shape_fn((points[axis].len(), slots), |(j, s)| {
                let x = points[axis][j];
                match decode(s) {
                    AxisFn::Cos(f) => (f as f64 * PI * x / l).cos(),
                    AxisFn::Sin(f) => (f as f64 * PI * x / l).sin(),
                }
            });
            t = apply_axis_matrix(&t, axis, &mat);
        }
        t
    }

    /// Exact integral over the box: each sine factor integrates to
    /// L (1 - (-1)^f) / (f pi), cos factors of positive frequency to zero,
    /// the constant to L.
    pub fn integral(&self) -> f64 {
        let mut t = self.data.clone();
        for axis in 0..self.dim() {
            let l = self.lengths[axis];
            let slots = 2 * self.bands[axis] + 1;
            let mat = Array2::from_shape_fn((1, slots), |(_, s)| match decode(s) {
                AxisFn::Cos(0) => l,
                AxisFn::Cos(_) => 0.0,
                AxisFn::Sin(f) => {
                    if f % 2 == 0 {
                        0.0
                    } else {
                        2.0 * l / (f as f64 * PI)
                    }
                }
            });
            t = apply_axis_matrix(&t, axis, &mat);
        }
        t[IxDyn(&vec![0; self.dim()])]
    }

    /// Squared L2 norm for tensors whose per-axis content is purely cosine
    /// (as produced by products of two sine-type factors). The cosine family
    /// is orthogonal on (0, L) with weights L (constant) and L/2, so the
    /// norm is an exact weighted coefficient sum. Errors when sine content
    /// is present, since mixed families are not orthogonal.
    pub fn l2_norm_sq_cosine_content(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (idx, &c) in self.data.indexed_iter() {
            if c == 0.0 {
                continue;
            }
            let mut w = 1.0;
            for (axis, &s) in idx.slice().iter().enumerate() {
                match decode(s) {
                    AxisFn::Cos(0) => w *= self.lengths[axis],
                    AxisFn::Cos(_) => w *= self.lengths[axis] / 2.0,
                    AxisFn::Sin(_) => {
                        return Err(Error::domain(
                            "cosine-content norm requested on a tensor with sine content",
                        ))
                    }
                }
            }
            acc += w * c * c;
        }
        Ok(acc)
    }
}
