use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fft::{transform_in_place, Direction};
use super::grid::Grid;
use crate::error::{Error, Result};

/// Which representation a [`Field`] currently holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Physical,
    Spectral,
}

/// Complex samples on a [`Grid`], row-major over the axes.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
    space: Space,
}

const PAR_MIN: usize = 1 << 14;

impl Field {
    pub fn zeros(grid: &Grid, space: Space) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![Complex64::default(); grid.len()],
            space,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>, space: Space) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
            space,
        })
    }

    /// Samples `f(x)` at every physical grid point.
    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(grid: &Grid, f: F) -> Self {
        let d = grid.dim();
        let mut x = [0.0; 3];
        let values = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                f(&x[..d])
            })
            .collect();
        Field {
            grid: grid.clone(),
            values,
            space: Space::Physical,
        }
    }

    /// Physical field `re + i im` from two real sample arrays.
    pub fn from_parts(grid: &Grid, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != grid.len() || im.len() != grid.len() {
            return Err(Error::InvalidParameter("part length mismatch".into()));
        }
        let values = re
            .iter()
            .zip(im)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        Ok(Field {
            grid: grid.clone(),
            values,
            space: Space::Physical,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn require(&self, space: Space) -> Result<()> {
        if self.space != space {
            return Err(Error::SpaceMismatch {
                expected: space,
                found: self.space,
            });
        }
        Ok(())
    }

    pub fn require_same_grid(&self, other: &Field) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Moves to the other representation. `Forward` expects physical input.
    pub fn transform(&self, dir: Direction) -> Result<Field> {
        let mut out = self.clone();
        out.transform_mut(dir)?;
        Ok(out)
    }

    pub fn transform_mut(&mut self, dir: Direction) -> Result<()> {
        let (from, to) = match dir {
            Direction::Forward => (Space::Physical, Space::Spectral),
            Direction::Inverse => (Space::Spectral, Space::Physical),
        };
        self.require(from)?;
        transform_in_place(&self.grid, &mut self.values, dir);
        self.space = to;
        Ok(())
    }

    pub fn to_spectral(&self) -> Field {
        match self.space {
            Space::Spectral => self.clone(),
            Space::Physical => self.transform(Direction::Forward).expect("space checked"),
        }
    }

    pub fn to_physical(&self) -> Field {
        match self.space {
            Space::Physical => self.clone(),
            Space::Spectral => self.transform(Direction::Inverse).expect("space checked"),
        }
    }

    pub fn into_spectral(mut self) -> Field {
        if self.space == Space::Physical {
            self.transform_mut(Direction::Forward).expect("space checked");
        }
        self
    }

    pub fn into_physical(mut self) -> Field {
        if self.space == Space::Spectral {
            self.transform_mut(Direction::Inverse).expect("space checked");
        }
        self
    }

    /// Pointwise map keeping grid and space.
    pub fn map<F: Fn(Complex64) -> Complex64 + Sync>(&self, f: F) -> Field {
        let values = if self.values.len() >= PAR_MIN {
            self.values.par_iter().map(|&v| f(v)).collect()
        } else {
            self.values.iter().map(|&v| f(v)).collect()
        };
        Field {
            grid: self.grid.clone(),
            values,
            space: self.space,
        }
    }

    pub fn map_inplace<F: Fn(Complex64) -> Complex64 + Sync>(&mut self, f: F) {
        if self.values.len() >= PAR_MIN {
            self.values.par_iter_mut().for_each(|v| *v = f(*v));
        } else {
            self.values.iter_mut().for_each(|v| *v = f(*v));
        }
    }

    /// Pointwise map with access to the flat index (spectral kernels use it
    /// to look up wavenumbers).
    pub fn map_indexed<F: Fn(usize, Complex64) -> Complex64 + Sync>(&self, f: F) -> Field {
        let values = if self.values.len() >= PAR_MIN {
            self.values
                .par_iter()
                .enumerate()
                .map(|(i, &v)| f(i, v))
                .collect()
        } else {
            self.values.iter().enumerate().map(|(i, &v)| f(i, v)).collect()
        };
        Field {
            grid: self.grid.clone(),
            values,
            space: self.space,
        }
    }

    /// Pointwise combination of two fields on the same grid and space.
    pub fn zip_map<F: Fn(Complex64, Complex64) -> Complex64 + Sync>(
        &self,
        other: &Field,
        f: F,
    ) -> Result<Field> {
        self.require_same_grid(other)?;
        other.require(self.space)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field {
            grid: self.grid.clone(),
            values,
            space: self.space,
        })
    }

    /// Real part as a (real-valued) complex field. Physical space only.
    pub fn real_part(&self) -> Result<Field> {
        self.require(Space::Physical)?;
        Ok(self.map(|v| Complex64::new(v.re, 0.0)))
    }

    /// Imaginary part as a (real-valued) complex field. Physical space only.
    pub fn imag_part(&self) -> Result<Field> {
        self.require(Space::Physical)?;
        Ok(self.map(|v| Complex64::new(v.im, 0.0)))
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| v * a)
    }

    pub fn scale_complex(&self, a: Complex64) -> Field {
        self.map(|v| v * a)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.zip_map(other, |x, y| x + y * a)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
            .expect("adding fields on different grids or spaces")
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
            .expect("subtracting fields on different grids or spaces")
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}
