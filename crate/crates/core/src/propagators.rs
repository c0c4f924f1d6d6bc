//! Exact linear flows.
//!
//! Sign conventions: `e^{it Delta}` has symbol `e^{-it|xi|^2}` (it solves
//! `i f_t = -Delta f`), and `e^{-itH}` has symbol `e^{-itH(xi)}`. The matrix
//! flow `V^{-1} e^{-itH} V` solves `i u_t + Delta u - 2 gamma Re u = 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_loglog, LineFit};
use crate::spectral::{apply_k2, hdot1, lp_norm, v_forward, v_inverse, Field, Space};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Schrodinger,
    DiagonalH,
    MatrixVhv,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFlowSpec {
    pub kind: FlowKind,
    pub t: f64,
    pub gamma: f64,
}

impl LinearFlowSpec {
    pub fn apply(&self, f: &Field) -> Result<Field> {
        match self.kind {
            FlowKind::Schrodinger => Ok(schrodinger_flow(f, self.t)),
            FlowKind::DiagonalH => Ok(diagonal_flow(f, self.t, self.gamma)),
            FlowKind::MatrixVhv => matrix_flow(f, self.t, self.gamma),
        }
    }
}

#[inline]
pub fn h_symbol(k2: f64, gamma: f64) -> f64 {
    (k2 * (2.0 * gamma + k2)).sqrt()
}

/// `e^{it Delta} f`.
pub fn schrodinger_flow(f: &Field, t: f64) -> Field {
    apply_k2(f, |k2| Complex64::from_polar(1.0, -t * k2))
}

/// `e^{-itH} z`.
pub fn diagonal_flow(z: &Field, t: f64, gamma: f64) -> Field {
    apply_k2(z, |k2| Complex64::from_polar(1.0, -t * h_symbol(k2, gamma)))
}

/// Entries `(cos tH, U sin tH, U^{-1} sin tH)` at `|xi|^2 = k2`; the last
/// uses its limit `2 gamma t` at the origin.
#[inline]
fn matrix_entries(k2: f64, t: f64, gamma: f64) -> (f64, f64, f64) {
    let b2 = 2.0 * gamma + k2;
    let h = (k2 * b2).sqrt();
    let (s, c) = (t * h).sin_cos();
    if k2 == 0.0 {
        return (1.0, 0.0, 2.0 * gamma * t);
    }
    let u = (k2 / b2).sqrt();
    (c, u * s, s / u)
}

/// `V^{-1} e^{-itH} V u` via the 2x2 multiplier matrix acting on `(u1, u2)`.
pub fn matrix_flow(u: &Field, t: f64, gamma: f64) -> Result<Field> {
    u.require(Space::Physical)?;
    let a = u.map(|v| Complex64::new(v.re, 0.0)).into_spectral();
    let b = u.map(|v| Complex64::new(v.im, 0.0)).into_spectral();
    let k2 = u.grid().k2();
    let mut n1 = a.clone();
    let mut n2 = b.clone();
    for (i, &k) in k2.iter().enumerate() {
        let (c, us, uis) = matrix_entries(k, t, gamma);
        let (x, y) = (a.values()[i], b.values()[i]);
        n1.values_mut()[i] = x * c + y * us;
        n2.values_mut()[i] = y * c - x * uis;
    }
    let n1 = n1.into_physical();
    let n2 = n2.into_physical();
    Ok(n1.zip_map(&n2, |p, q| Complex64::new(p.re, q.re))?)
}

/// `u_lin(t) = V^{-1} e^{-itH} V u_plus`, composed literally. Unlike
/// [`matrix_flow`] the zero mode of the imaginary part stays 0 instead of
/// growing like `-2 gamma t mean(Re u_plus)` on the periodic box.
pub fn u_lin(u_plus: &Field, t: f64, gamma: f64) -> Result<Field> {
    let z = diagonal_flow(&v_forward(u_plus, gamma)?.into_spectral(), t, gamma).into_physical();
    Ok(v_inverse(&z, gamma)?.field)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrapCheck {
    /// Smallest radius holding 99.99% of the spectral mass.
    pub band_radius: f64,
    /// Largest group speed on that band.
    pub speed: f64,
    pub t_max: f64,
    pub half_box: f64,
}

impl WrapCheck {
    pub fn ok(&self) -> bool {
        self.speed * self.t_max < self.half_box
    }
}

pub fn occupied_band(f: &Field, fraction: f64) -> f64 {
    let s = f.to_spectral();
    let k2 = f.grid().k2();
    let mut modes: Vec<(f64, f64)> = s
        .values()
        .iter()
        .zip(k2)
        .map(|(v, &k)| (k, v.norm_sqr()))
        .collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = modes.iter().map(|m| m.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (k, w) in modes {
        acc += w;
        if acc >= fraction * total {
            return k.sqrt();
        }
    }
    f.grid().nyquist() * (f.grid().dim() as f64).sqrt()
}

/// Largest group speed `|grad symbol|` on `|xi| <= r`.
pub fn group_speed(kind: FlowKind, r: f64, gamma: f64) -> f64 {
    match kind {
        FlowKind::Schrodinger => 2.0 * r,
        // dH/d|xi| = (2 gamma + 2 |xi|^2) / <xi>, increasing in |xi|
        FlowKind::DiagonalH | FlowKind::MatrixVhv => {
            (2.0 * gamma + 2.0 * r * r) / (2.0 * gamma + r * r).sqrt()
        }
    }
}

pub fn wrap_check(f: &Field, kind: FlowKind, gamma: f64, t_max: f64) -> WrapCheck {
    let band_radius = occupied_band(f, 0.9999);
    let half_box = f
        .grid()
        .box_length()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(0.5 * b));
    WrapCheck {
        band_radius,
        speed: group_speed(kind, band_radius, gamma),
        t_max,
        half_box,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub r: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub fit: LineFit,
    pub wrap: WrapCheck,
}

impl DecayFit {
    /// `t,norm,fitted` rows.
    pub fn csv(&self) -> String {
        let mut s = String::from("t,norm,fitted\n");
        for (&t, &n) in self.times.iter().zip(&self.norms) {
            let fitted = self.fit.eval(t.ln()).exp();
            s.push_str(&format!("{t:.17e},{n:.17e},{fitted:.17e}\n"));
        }
        s
    }
}

/// Evolves `f` under the chosen flow, records `||.||_{L^r}` at each time and
/// fits `log norm` against `log t`. Refuses when the occupied band would
/// wrap around the box before the last time.
pub fn decay_probe(
    f: &Field,
    kind: FlowKind,
    gamma: f64,
    r: f64,
    times: &[f64],
) -> Result<DecayFit> {
    if times.len() < 2 || times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter(
            "decay probe needs at least two positive times".into(),
        ));
    }
    let t_max = times.iter().fold(0.0f64, |a, &b| a.max(b));
    let wrap = wrap_check(f, kind, gamma, t_max);
    if !wrap.ok() {
        return Err(Error::Wraparound {
            time: wrap.half_box / wrap.speed,
            speed: wrap.speed,
            half_box: wrap.half_box,
        });
    }
    let spec = f.to_spectral();
    let mut norms = Vec::with_capacity(times.len());
    for &t in times {
        let g = LinearFlowSpec { kind, t, gamma }.apply(&spec)?;
        let g = if kind == FlowKind::MatrixVhv { g } else { g.into_physical() };
        norms.push(lp_norm(&g, r)?);
    }
    let fit = fit_loglog(times, &norms)?;
    Ok(DecayFit {
        r,
        times: times.to_vec(),
        norms,
        fit,
        wrap,
    })
}

/// Largest `|H(xi) - (|xi|^2 + gamma)| <xi>^2` over the grid.
pub fn hvs_delta_constant(grid: &crate::spectral::Grid, gamma: f64) -> f64 {
    grid.k2()
        .iter()
        .map(|&k2| (h_symbol(k2, gamma) - (k2 + gamma)).abs() * (2.0 * gamma + k2))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvsDeltaReport {
    pub times: Vec<f64>,
    pub gap: Vec<f64>,
    pub bound: Vec<f64>,
    /// Largest `gap / (|t| max_band <xi>^{-2} ||f||)`.
    pub fitted_constant: f64,
    pub passes: bool,
}

/// Compares `e^{-itH}` with `e^{-it(gamma - Delta)}` in `H^1-dot` against
/// `C |t| max_band <xi>^{-2} ||f||_{H^1-dot}` for `C = c_bound`.
pub fn hvs_delta_check(f: &Field, gamma: f64, times: &[f64], c_bound: f64) -> Result<HvsDeltaReport> {
    let spec = f.to_spectral();
    let peak = spec.max_abs();
    let inv_b2 = spec
        .values()
        .iter()
        .zip(f.grid().k2())
        .filter(|(v, _)| v.norm() > 1e-12 * peak)
        .map(|(_, &k2)| 1.0 / (2.0 * gamma + k2))
        .fold(0.0, f64::max);
    let fh = hdot1(&spec);
    let mut gap = Vec::new();
    let mut bound = Vec::new();
    let mut fitted: f64 = 0.0;
    for &t in times {
        let d = apply_k2(&spec, |k2| {
            Complex64::from_polar(1.0, -t * h_symbol(k2, gamma))
                - Complex64::from_polar(1.0, -t * (gamma + k2))
        });
        let g = hdot1(&d);
        let unit = t.abs() * inv_b2 * fh;
        if unit > 0.0 {
            fitted = fitted.max(g / unit);
        }
        gap.push(g);
        bound.push(c_bound * unit);
    }
    let passes = gap.iter().zip(&bound).all(|(g, b)| *g <= *b * (1.0 + 1e-12) + 1e-300);
    Ok(HvsDeltaReport {
        times: times.to_vec(),
        gap,
        bound,
        fitted_constant: fitted,
        passes,
    })
}
