//! Discrete norms. Physical integrals use the rectangle rule with weight
//! `h^d`; with the unitary transform the same weight applies to spectral sums.

use serde::{Deserialize, Serialize};

use super::field::{Field, Space};
use super::symbol::{apply_table, RadialSymbol};
use super::sum::pairwise_sum;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormKind {
    /// `L^p`, `p = f64::INFINITY` for the sup norm.
    Lp { p: f64 },
    /// `||(-Delta)^{s/2} f||_{L^r}`
    SobolevHom { s: f64, r: f64 },
    /// `||(2 gamma - Delta)^{s/2} f||_{L^r}`
    SobolevInhom { s: f64, r: f64, gamma: f64 },
    /// `t^{1/2} ||<grad> f||_{L^3}`, the instantaneous factor of the X_T norm.
    XnormInstant { t: f64, gamma: f64 },
    /// `||<x>^a <grad>^s f||_{L^2}` with `<x> = sqrt(1 + |x|^2)` about the box center.
    Weighted { a: f64, s: f64, gamma: f64 },
}

/// `(h^d sum |f|^p)^{1/p}` over physical samples.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("L^p needs p >= 1, got {p}")));
    }
    let phys = f.to_physical();
    let v = phys.values();
    if !phys.is_finite() {
        return Err(Error::NonFinite("norm input"));
    }
    if p.is_infinite() {
        return Ok(phys.max_abs());
    }
    let dv = f.grid().cell_volume();
    let s = if p == 2.0 {
        pairwise_sum(v.len(), |i| v[i].norm_sqr())
    } else {
        pairwise_sum(v.len(), |i| v[i].norm().powf(p))
    };
    Ok((dv * s).powf(1.0 / p))
}

/// `L^2` norm of the multiplier image, computed from spectral coefficients.
fn spectral_l2(f: &Field, table: &[f64]) -> Result<f64> {
    let s = f.to_spectral();
    if !s.is_finite() {
        return Err(Error::NonFinite("norm input"));
    }
    let v = s.values();
    let sum = pairwise_sum(v.len(), |i| v[i].norm_sqr() * table[i] * table[i]);
    Ok((f.grid().cell_volume() * sum).sqrt())
}

fn multiplier_lr(f: &Field, sym: &RadialSymbol, r: f64) -> Result<f64> {
    let table = sym.table(f.grid())?;
    if r == 2.0 {
        spectral_l2(f, &table)
    } else {
        lp_norm(&apply_table(&table, f).into_physical(), r)
    }
}

pub fn norm(f: &Field, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Lp { p } => lp_norm(f, p),
        NormKind::SobolevHom { s, r } => multiplier_lr(f, &RadialSymbol::absgrad(s), r),
        NormKind::SobolevInhom { s, r, gamma } => {
            multiplier_lr(f, &RadialSymbol::bracket(gamma, s), r)
        }
        NormKind::XnormInstant { t, gamma } => {
            if !(t >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative time {t}")));
            }
            Ok(t.sqrt() * multiplier_lr(f, &RadialSymbol::bracket(gamma, 1.0), 3.0)?)
        }
        NormKind::Weighted { a, s, gamma } => {
            f.require(Space::Physical)?;
            let table = RadialSymbol::bracket(gamma, s).table(f.grid())?;
            let g = apply_table(&table, f);
            let grid = f.grid();
            let v = g.values();
            if !g.is_finite() {
                return Err(Error::NonFinite("norm input"));
            }
            let sum = pairwise_sum(v.len(), |i| {
                let w = (1.0 + grid.r2(i)).powf(a);
                w * v[i].norm_sqr()
            });
            Ok((grid.cell_volume() * sum).sqrt())
        }
    }
}

/// `||f||_{H^1-dot}`, the workhorse metric.
pub fn hdot1(f: &Field) -> f64 {
    norm(f, NormKind::SobolevHom { s: 1.0, r: 2.0 }).expect("finite field")
}

/// Components of the energy metric
/// `d(u, v)^2 = ||u - v||^2_{H^1-dot} + ||q(u) - q(v)||^2_{L^2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDistance {
    pub hdot1: f64,
    pub q_l2: f64,
    pub total: f64,
}

/// Energy metric from `u - v` and the caller-supplied densities `q(u)`, `q(v)`.
pub fn energy_metric(u: &Field, v: &Field, q_u: &Field, q_v: &Field) -> Result<EnergyDistance> {
    let h = norm(&(u - v), NormKind::SobolevHom { s: 1.0, r: 2.0 })?;
    let q = lp_norm(&(q_u - q_v), 2.0)?;
    Ok(EnergyDistance {
        hdot1: h,
        q_l2: q,
        total: (h * h + q * q).sqrt(),
    })
}
