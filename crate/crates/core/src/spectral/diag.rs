//! The R-linear diagonalizer `V: u1 + i u2 -> u1 + i U u2`.

use num_complex::Complex64;

use super::fft::Direction;
use super::field::{Field, Space};
use super::symbol::RadialSymbol;
use crate::error::Result;

/// Result of `V^{-1}`: the field and the mean of `Im u` that was dropped.
#[derive(Clone, Debug)]
pub struct VInverse {
    pub field: Field,
    pub dropped_mean: f64,
}

fn replace_imag(u: &Field, table: &[f64]) -> (Field, f64) {
    let im = u.map(|v| Complex64::new(v.im, 0.0)).into_spectral();
    let zero = im.values()[0].re / (u.grid().len() as f64).sqrt();
    let mut im = im;
    for (v, &m) in im.values_mut().iter_mut().zip(table) {
        *v *= m;
    }
    let im = im.into_physical();
    let out = u
        .zip_map(&im, |a, b| Complex64::new(a.re, b.re))
        .expect("same grid");
    (out, zero)
}

/// `V u` (`Forward`) or `V^{-1} u` (`Inverse`) for a physical field.
pub fn apply_v(u: &Field, dir: Direction, gamma: f64) -> Result<Field> {
    match dir {
        Direction::Forward => v_forward(u, gamma),
        Direction::Inverse => Ok(v_inverse(u, gamma)?.field),
    }
}

pub fn v_forward(u: &Field, gamma: f64) -> Result<Field> {
    u.require(Space::Physical)?;
    let table = RadialSymbol::u(gamma).table(u.grid())?;
    Ok(replace_imag(u, &table).0)
}

/// `V^{-1}` with the zero mode of the imaginary part mapped to 0.
pub fn v_inverse(u: &Field, gamma: f64) -> Result<VInverse> {
    u.require(Space::Physical)?;
    let table = RadialSymbol::uinv(gamma).with_zero_mode(0.0).table(u.grid())?;
    let (field, dropped_mean) = replace_imag(u, &table);
    if dropped_mean.abs() > 1e-10 {
        log::warn!("V^-1 dropped an imaginary zero mode of mean {dropped_mean:.3e}");
    }
    Ok(VInverse {
        field,
        dropped_mean,
    })
}
