use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic discretization of the box `[-L/2, L/2)^d`.
///
/// Cloning is cheap: the wavenumber tables and FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<Inner>,
}

struct Inner {
    n: Vec<usize>,
    length: Vec<f64>,
    strides: Vec<usize>,
    total: usize,
    axis_k: Vec<Vec<f64>>,
    k2: Vec<f64>,
    plans: Vec<AxisPlan>,
}

pub(crate) struct AxisPlan {
    pub n: usize,
    pub stride: usize,
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl Grid {
    /// Cubic box with the same resolution and length on every axis.
    pub fn cube(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        Self::new(&vec![n; dim], &vec![length; dim])
    }

    pub fn new(n: &[usize], length: &[f64]) -> Result<Self> {
        let dim = n.len();
        if !(1..=3).contains(&dim) || length.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "need 1..=3 axes with matching lengths, got {} sizes and {} lengths",
                n.len(),
                length.len()
            )));
        }
        for (&na, &la) in n.iter().zip(length) {
            if na < 2 || !na.is_power_of_two() {
                return Err(Error::InvalidParameter(format!(
                    "points per axis must be a power of two >= 2, got {na}"
                )));
            }
            if !(la.is_finite() && la > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "box length must be positive, got {la}"
                )));
            }
        }

        let mut strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * n[a + 1];
        }
        let total: usize = n.iter().product();

        let axis_k: Vec<Vec<f64>> = n
            .iter()
            .zip(length)
            .map(|(&na, &la)| {
                (0..na)
                    .map(|j| {
                        let m = if j < na / 2 { j as f64 } else { j as f64 - na as f64 };
                        2.0 * PI * m / la
                    })
                    .collect()
            })
            .collect();

        let mut k2 = vec![0.0; total];
        for (i, slot) in k2.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..dim {
                let j = (i / strides[a]) % n[a];
                acc += axis_k[a][j] * axis_k[a][j];
            }
            *slot = acc;
        }

        let mut planner = FftPlanner::new();
        let plans = (0..dim)
            .map(|a| AxisPlan {
                n: n[a],
                stride: strides[a],
                forward: planner.plan_fft_forward(n[a]),
                inverse: planner.plan_fft_inverse(n[a]),
            })
            .collect();

        Ok(Grid {
            inner: Arc::new(Inner {
                n: n.to_vec(),
                length: length.to_vec(),
                strides,
                total,
                axis_k,
                k2,
                plans,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.n.len()
    }

    pub fn n_per_axis(&self) -> &[usize] {
        &self.inner.n
    }

    pub fn box_length(&self) -> &[f64] {
        &self.inner.length
    }

    pub fn len(&self) -> usize {
        self.inner.total
    }

    pub fn is_empty(&self) -> bool {
        self.inner.total == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.inner.length[axis] / self.inner.n[axis] as f64
    }

    /// Quadrature weight `h^d` of the rectangle rule.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.inner.length.iter().product()
    }

    /// Smallest per-axis Nyquist wavenumber `pi / h`.
    pub fn nyquist(&self) -> f64 {
        (0..self.dim())
            .map(|a| PI / self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Wavenumbers along one axis in FFT order.
    pub fn axis_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.inner.axis_k[axis]
    }

    /// `|xi|^2` for every spectral index, in storage order.
    pub fn k2(&self) -> &[f64] {
        &self.inner.k2
    }

    /// Component `xi_axis` of the wavenumber at flat spectral index `i`.
    #[inline]
    pub fn k_component(&self, axis: usize, i: usize) -> f64 {
        let j = (i / self.inner.strides[axis]) % self.inner.n[axis];
        self.inner.axis_k[axis][j]
    }

    /// Physical coordinate along one axis for flat index `i`.
    #[inline]
    pub fn x_component(&self, axis: usize, i: usize) -> f64 {
        let j = (i / self.inner.strides[axis]) % self.inner.n[axis];
        -0.5 * self.inner.length[axis] + j as f64 * self.spacing(axis)
    }

    /// Fills `out[..dim]` with the physical point at flat index `i`.
    pub fn point(&self, i: usize, out: &mut [f64; 3]) {
        for a in 0..self.dim() {
            out[a] = self.x_component(a, i);
        }
    }

    /// Squared distance from the box center.
    pub fn r2(&self, i: usize) -> f64 {
        (0..self.dim())
            .map(|a| {
                let x = self.x_component(a, i);
                x * x
            })
            .sum()
    }

    pub(crate) fn plans(&self) -> &[AxisPlan] {
        &self.inner.plans
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self == other
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n && self.inner.length == other.inner.length
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.inner.n)
            .field("length", &self.inner.length)
            .finish()
    }
}
