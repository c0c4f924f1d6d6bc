//! Radial Fourier multipliers `m(|xi|)` and their application.
//!
//! `bracket(s)` is `<xi>^s = (2 gamma + |xi|^2)^{s/2}`; `U = |xi|/<xi>` and
//! `H = |xi| <xi>`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::field::{Field, Space};
use super::grid::Grid;
use crate::error::{Error, Result};

type CustomFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SymbolKind {
    U,
    Uinv,
    H,
    Bracket(f64),
    AbsGrad(f64),
    /// `P_lo = P_{<=1}`
    LpLo,
    /// `P_hi = P_{>1}`
    LpHi,
    LpLeq(f64),
    LpGt(f64),
    /// Function of `|xi|`.
    Custom(CustomFn),
}

impl fmt::Debug for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::U => write!(f, "U"),
            SymbolKind::Uinv => write!(f, "Uinv"),
            SymbolKind::H => write!(f, "H"),
            SymbolKind::Bracket(s) => write!(f, "Bracket({s})"),
            SymbolKind::AbsGrad(s) => write!(f, "AbsGrad({s})"),
            SymbolKind::LpLo => write!(f, "LpLo"),
            SymbolKind::LpHi => write!(f, "LpHi"),
            SymbolKind::LpLeq(n) => write!(f, "LpLeq({n})"),
            SymbolKind::LpGt(n) => write!(f, "LpGt({n})"),
            SymbolKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RadialSymbol {
    pub kind: SymbolKind,
    pub gamma: f64,
    /// Value used at `xi = 0`. Overrides the formula when set.
    pub zero_mode_rule: Option<f64>,
}

/// Smooth radial bump: 1 on `r <= 1`, 0 on `r >= 1.1`, quintic smoothstep
/// in between (C^2 across both edges).
pub fn lp_bump(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 1.1 {
        0.0
    } else {
        let t = (r - 1.0) / 0.1;
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        1.0 - s
    }
}

impl RadialSymbol {
    fn new(kind: SymbolKind, gamma: f64) -> Self {
        RadialSymbol {
            kind,
            gamma,
            zero_mode_rule: None,
        }
    }

    pub fn u(gamma: f64) -> Self {
        Self::new(SymbolKind::U, gamma)
    }

    /// `U^{-1}`. Singular at the origin: needs [`with_zero_mode`](Self::with_zero_mode).
    pub fn uinv(gamma: f64) -> Self {
        Self::new(SymbolKind::Uinv, gamma)
    }

    pub fn h(gamma: f64) -> Self {
        Self::new(SymbolKind::H, gamma)
    }

    pub fn bracket(gamma: f64, s: f64) -> Self {
        Self::new(SymbolKind::Bracket(s), gamma)
    }

    pub fn absgrad(s: f64) -> Self {
        Self::new(SymbolKind::AbsGrad(s), 0.0)
    }

    pub fn lp_lo() -> Self {
        Self::new(SymbolKind::LpLo, 0.0)
    }

    pub fn lp_hi() -> Self {
        Self::new(SymbolKind::LpHi, 0.0)
    }

    pub fn lp_leq(n: f64) -> Self {
        Self::new(SymbolKind::LpLeq(n), 0.0)
    }

    pub fn lp_gt(n: f64) -> Self {
        Self::new(SymbolKind::LpGt(n), 0.0)
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self::new(SymbolKind::Custom(Arc::new(f)), 0.0)
    }

    pub fn with_zero_mode(mut self, value: f64) -> Self {
        self.zero_mode_rule = Some(value);
        self
    }

    /// Symbol value at `|xi|^2 = k2`.
    pub fn eval(&self, k2: f64) -> Result<f64> {
        if k2 == 0.0 {
            if let Some(v) = self.zero_mode_rule {
                return Ok(v);
            }
        }
        let g2 = 2.0 * self.gamma;
        let r = k2.sqrt();
        Ok(match &self.kind {
            SymbolKind::U => (k2 / (g2 + k2)).sqrt(),
            SymbolKind::Uinv => {
                if k2 == 0.0 {
                    return Err(Error::MissingZeroModeRule("Uinv"));
                }
                ((g2 + k2) / k2).sqrt()
            }
            SymbolKind::H => (k2 * (g2 + k2)).sqrt(),
            SymbolKind::Bracket(s) => (g2 + k2).powf(0.5 * s),
            SymbolKind::AbsGrad(s) => {
                if k2 == 0.0 {
                    if *s > 0.0 {
                        0.0
                    } else if *s == 0.0 {
                        1.0
                    } else {
                        return Err(Error::MissingZeroModeRule("AbsGrad with s < 0"));
                    }
                } else {
                    r.powf(*s)
                }
            }
            SymbolKind::LpLo => lp_bump(r),
            SymbolKind::LpHi => 1.0 - lp_bump(r),
            SymbolKind::LpLeq(n) => lp_bump(r / n),
            SymbolKind::LpGt(n) => 1.0 - lp_bump(r / n),
            SymbolKind::Custom(f) => f(r),
        })
    }

    /// Symbol values for every spectral index of `grid`.
    pub fn table(&self, grid: &Grid) -> Result<Vec<f64>> {
        if matches!(self.kind, SymbolKind::LpLeq(n) | SymbolKind::LpGt(n) if !(n > 0.0)) {
            return Err(Error::InvalidParameter("Littlewood-Paley scale must be positive".into()));
        }
        // Only the zero mode can fail, so check it once.
        self.eval(0.0)?;
        Ok(grid.k2().iter().map(|&k2| self.eval(k2).unwrap()).collect())
    }
}

/// Multiplies the spectral coefficients of `f` by a real table. The result
/// is returned in the same space as `f`.
pub fn apply_table(table: &[f64], f: &Field) -> Field {
    let back = f.space() == Space::Physical;
    let mut s = f.to_spectral();
    for (v, &m) in s.values_mut().iter_mut().zip(table) {
        *v *= m;
    }
    if back {
        s.into_physical()
    } else {
        s
    }
}

/// Multiplies spectral coefficients by `m(i)` where `i` is the flat spectral
/// index. Same space in and out.
pub fn apply_indexed<F: Fn(usize) -> Complex64 + Sync>(f: &Field, m: F) -> Field {
    let back = f.space() == Space::Physical;
    let s = f.to_spectral().map_indexed(|i, v| v * m(i));
    if back {
        s.into_physical()
    } else {
        s
    }
}

/// Multiplies spectral coefficients by a complex function of `|xi|^2`.
pub fn apply_k2<F: Fn(f64) -> Complex64 + Sync>(f: &Field, m: F) -> Field {
    let grid = f.grid().clone();
    let k2 = grid.k2();
    apply_indexed(f, |i| m(k2[i]))
}

pub fn apply_multiplier(sym: &RadialSymbol, f: &Field) -> Result<Field> {
    if !f.is_finite() {
        return Err(Error::NonFinite("multiplier input"));
    }
    let table = sym.table(f.grid())?;
    Ok(apply_table(&table, f))
}

/// Spectral partial derivative along `axis`.
pub fn partial(f: &Field, axis: usize) -> Field {
    let grid = f.grid().clone();
    apply_indexed(f, |i| Complex64::new(0.0, grid.k_component(axis, i)))
}

/// Spectral gradient, one field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    let s = f.to_spectral();
    let back = f.space() == Space::Physical;
    (0..f.grid().dim())
        .map(|a| {
            let d = partial(&s, a);
            if back {
                d.into_physical()
            } else {
                d
            }
        })
        .collect()
}

/// Spectral divergence of a vector field given by components.
pub fn divergence(components: &[Field]) -> Result<Field> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidParameter("divergence of an empty vector".into()))?;
    let back = first.space() == Space::Physical;
    let mut acc = Field::zeros(first.grid(), Space::Spectral);
    for (a, c) in components.iter().enumerate() {
        first.require_same_grid(c)?;
        let d = partial(&c.to_spectral(), a);
        acc = &acc + &d;
    }
    Ok(if back { acc.into_physical() } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Field::from_values(grid, v, Space::Physical).unwrap()
    }

    fn rel(a: &Field, b: &Field) -> f64 {
        (a - b).max_abs() / b.max_abs().max(1e-300)
    }

    #[test]
    fn u_kills_constants() {
        let g = Grid::cube(2, 16, 6.0).unwrap();
        let f = Field::from_fn(&g, |_| Complex64::new(1.5, 0.0));
        let out = apply_multiplier(&RadialSymbol::u(0.5), &f).unwrap();
        assert!(out.max_abs() < 1e-14);
    }

    #[test]
    fn h_twice_on_plane_wave() {
        let gamma = 0.4;
        let g = Grid::cube(2, 32, 2.0 * std::f64::consts::PI).unwrap();
        let f = Field::from_fn(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0] + 2.0 * x[1]));
        let h = RadialSymbol::h(gamma);
        let out = apply_multiplier(&h, &apply_multiplier(&h, &f).unwrap()).unwrap();
        let k2 = 13.0;
        let expect = f.scale(k2 * (2.0 * gamma + k2));
        assert!(rel(&out, &expect) < 1e-12);
    }

    #[test]
    fn bracket_minus_two_inverts_helmholtz() {
        let gamma = 0.3;
        let g = Grid::cube(2, 32, 9.0).unwrap();
        let f = random_field(&g, 3);
        let inv = apply_multiplier(&RadialSymbol::bracket(gamma, -2.0), &f).unwrap();
        let back = apply_multiplier(&RadialSymbol::bracket(gamma, 2.0), &inv).unwrap();
        assert!(rel(&back, &f) < 1e-13);
    }

    #[test]
    fn uinv_needs_zero_rule() {
        let g = Grid::cube(1, 8, 1.0).unwrap();
        let f = Field::zeros(&g, Space::Physical);
        assert!(matches!(
            apply_multiplier(&RadialSymbol::uinv(0.5), &f),
            Err(Error::MissingZeroModeRule(_))
        ));
        assert!(apply_multiplier(&RadialSymbol::uinv(0.5).with_zero_mode(0.0), &f).is_ok());
        assert!(apply_multiplier(&RadialSymbol::absgrad(-1.0), &f).is_err());
    }

    #[test]
    fn u_composition_identity() {
        let gamma = 0.7;
        let g = Grid::cube(2, 32, 8.0).unwrap();
        for &k2 in g.k2() {
            let u = RadialSymbol::u(gamma).eval(k2).unwrap();
            let b = RadialSymbol::bracket(gamma, 1.0).eval(k2).unwrap();
            let h = RadialSymbol::h(gamma).eval(k2).unwrap();
            assert!((u * u * b * b - k2).abs() <= 1e-12 * (1.0 + k2));
            assert!((h - k2.sqrt() * b).abs() <= 1e-12 * (1.0 + k2));
        }
    }

    #[test]
    fn u_bracket_equals_absgrad_on_mean_zero() {
        let gamma = 0.5;
        let g = Grid::cube(2, 32, 8.0).unwrap();
        let mut f = random_field(&g, 5).to_spectral();
        f.values_mut()[0] = Complex64::default();
        let f = f.into_physical();
        let a = apply_multiplier(
            &RadialSymbol::u(gamma),
            &apply_multiplier(&RadialSymbol::bracket(gamma, 1.0), &f).unwrap(),
        )
        .unwrap();
        let b = apply_multiplier(&RadialSymbol::absgrad(1.0), &f).unwrap();
        assert!(rel(&a, &b) < 1e-12);
    }

    #[test]
    fn bump_profile() {
        assert_eq!(lp_bump(0.0), 1.0);
        assert_eq!(lp_bump(1.0), 1.0);
        assert_eq!(lp_bump(1.1), 0.0);
        assert!(lp_bump(1.05) > 0.0 && lp_bump(1.05) < 1.0);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = lp_bump(1.0 + 0.001 * i as f64);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn gradient_of_plane_wave() {
        let g = Grid::cube(2, 16, 2.0 * std::f64::consts::PI).unwrap();
        let f = Field::from_fn(&g, |x| Complex64::from_polar(1.0, 2.0 * x[0] - x[1]));
        let gr = gradient(&f);
        assert!(rel(&gr[0], &f.scale_complex(Complex64::new(0.0, 2.0))) < 1e-12);
        assert!(rel(&gr[1], &f.scale_complex(Complex64::new(0.0, -1.0))) < 1e-12);
        let lap = divergence(&gr).unwrap();
        assert!(rel(&lap, &f.scale(-5.0)) < 1e-12);
    }
}
