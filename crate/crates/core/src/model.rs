//! Parameters, density fluctuation, nonlinearities and energies.
//!
//! In normalized form `u = psi - 1` solves
//! `(i d_t + Delta) u - 2 gamma u1 = N(u)` with `N = N2 + N3 + N4 + N5`.
//! The Gross-Pitaevskii variant `(i d_t + Delta) psi = (|psi|^2 - 1) psi`
//! has linear coefficient 2, quartic energy coefficient 1/4 and no sextic term.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    apply_table, divergence, gradient, norm, pairwise_sum, Field, Grid, NormKind, RadialSymbol,
    Space,
};

/// Default smallness threshold is `DELTA_COEFF * gamma^2`. Frozen from
/// [`calibrate_delta`] on a 2-d box (N = 128, L = 48, widths 1 to 6), where
/// `delta / gamma^2` ranged over 0.65..0.85 for gamma in [0.1, 0.65].
pub const DELTA_COEFF: f64 = 0.6;

/// Raw coefficients of `(i d_t + Delta) psi = a1 psi - a3 |psi|^2 psi + a5 |psi|^4 psi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub alpha1: f64,
    pub alpha3: f64,
    pub alpha5: f64,
}

/// Result of rescaling [`PhysParams`] to the normalized equation.
///
/// With `psi = r0 phi(lambda t, sqrt(lambda) x)` and `lambda = alpha5 r0^4`,
/// `phi` solves the normalized equation with the returned `gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub gamma: f64,
    pub r0_sq: f64,
    pub r1_sq: f64,
    pub amplitude_scale: f64,
    pub time_scale: f64,
    pub space_scale: f64,
}

impl PhysParams {
    pub fn discriminant(&self) -> f64 {
        self.alpha3 * self.alpha3 - 4.0 * self.alpha1 * self.alpha5
    }

    pub fn normalize(&self) -> Result<Normalization> {
        let PhysParams {
            alpha1,
            alpha3,
            alpha5,
        } = *self;
        if !(alpha1 > 0.0 && alpha3 > 0.0 && alpha5 > 0.0) {
            return Err(Error::InvalidParameter(
                "alpha1, alpha3, alpha5 must be positive".into(),
            ));
        }
        let disc = self.discriminant();
        if !(disc > 0.0) {
            return Err(Error::DegenerateRoots { discriminant: disc });
        }
        let sq = disc.sqrt();
        let r0_sq = (alpha3 + sq) / (2.0 * alpha5);
        // product form avoids cancellation for the small root
        let r1_sq = alpha1 / (alpha5 * r0_sq);
        let lambda = alpha5 * r0_sq * r0_sq;
        Ok(Normalization {
            gamma: 1.0 - r1_sq / r0_sq,
            r0_sq,
            r1_sq,
            amplitude_scale: r0_sq.sqrt(),
            time_scale: lambda,
            space_scale: lambda.sqrt(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    CubicQuintic,
    GrossPitaevskii,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaModel {
    /// Normalized parameter in (0, 1). Unused by the GP variant.
    pub gamma: f64,
    pub variant: Variant,
    /// Smallness threshold on `||grad u1||^2` used when `gamma < 2/3`.
    pub delta_gamma: f64,
}

impl GammaModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        Ok(GammaModel {
            gamma,
            variant: Variant::CubicQuintic,
            delta_gamma: default_delta(gamma),
        })
    }

    pub fn from_params(p: &PhysParams) -> Result<Self> {
        Self::new(p.normalize()?.gamma)
    }

    pub fn gross_pitaevskii() -> Self {
        GammaModel {
            gamma: 1.0,
            variant: Variant::GrossPitaevskii,
            delta_gamma: f64::INFINITY,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta_gamma = delta;
        self
    }

    pub fn is_gp(&self) -> bool {
        self.variant == Variant::GrossPitaevskii
    }

    /// The `gamma` entering `<xi>^2 = 2 gamma + |xi|^2`, `U`, `H` and `M`:
    /// 1 for GP so that `<grad>^2 = 2 - Delta`.
    pub fn symbol_gamma(&self) -> f64 {
        match self.variant {
            Variant::CubicQuintic => self.gamma,
            Variant::GrossPitaevskii => 1.0,
        }
    }

    /// Coefficient of `int q^2` in the energy.
    pub fn quartic_coeff(&self) -> f64 {
        match self.variant {
            Variant::CubicQuintic => self.gamma / 4.0,
            Variant::GrossPitaevskii => 0.25,
        }
    }

    /// Phase function `W(s)` of `i d_t psi = W(|psi|^2) psi`.
    #[inline]
    pub fn phase(&self, s: f64) -> f64 {
        match self.variant {
            Variant::CubicQuintic => (s - 1.0) * (s - 1.0 + self.gamma),
            Variant::GrossPitaevskii => s - 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::CubicQuintic => {
                GammaModel::new(self.gamma)?;
                if !(self.delta_gamma > 0.0) {
                    return Err(Error::InvalidParameter("delta_gamma must be positive".into()));
                }
                Ok(())
            }
            Variant::GrossPitaevskii => Ok(()),
        }
    }
}

pub fn default_delta(gamma: f64) -> f64 {
    DELTA_COEFF * gamma * gamma
}

#[inline]
fn q_point(v: Complex64) -> f64 {
    2.0 * v.re + v.norm_sqr()
}

/// `q(u) = 2 Re u + |u|^2` as a real-valued field.
pub fn q_of(u: &Field) -> Result<Field> {
    u.require(Space::Physical)?;
    Ok(u.map(|v| Complex64::new(q_point(v), 0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearPart {
    N2,
    N3,
    N4,
    N5,
    Full,
}

fn n_point(v: Complex64, g: f64, which: NonlinearPart, gp: bool) -> Complex64 {
    let (a, b) = (v.re, v.im);
    let (a2, b2) = (a * a, b * b);
    if gp {
        return match which {
            NonlinearPart::N2 => Complex64::new(3.0 * a2 + b2, 2.0 * a * b),
            NonlinearPart::N3 => v * (a2 + b2),
            NonlinearPart::N4 | NonlinearPart::N5 => Complex64::default(),
            NonlinearPart::Full => Complex64::new(3.0 * a2 + b2, 2.0 * a * b) + v * (a2 + b2),
        };
    }
    let n2 = || Complex64::new((3.0 * g + 4.0) * a2 + g * b2, 2.0 * g * a * b);
    let n3 = || {
        Complex64::new(
            (g + 8.0) * a2 * a + (g + 4.0) * a * b2,
            (g + 4.0) * a2 * b + g * b2 * b,
        )
    };
    let n4 = || {
        Complex64::new(
            5.0 * a2 * a2 + 6.0 * a2 * b2 + b2 * b2,
            4.0 * a2 * a * b + 4.0 * a * b2 * b,
        )
    };
    let n5 = || {
        let m = a2 + b2;
        v * (m * m)
    };
    match which {
        NonlinearPart::N2 => n2(),
        NonlinearPart::N3 => n3(),
        NonlinearPart::N4 => n4(),
        NonlinearPart::N5 => n5(),
        NonlinearPart::Full => n2() + n3() + n4() + n5(),
    }
}

/// Pointwise `N_j(u)` or the full `N(u)`.
pub fn nonlinearity(u: &Field, m: &GammaModel, which: NonlinearPart) -> Result<Field> {
    u.require(Space::Physical)?;
    let g = m.gamma;
    let gp = m.is_gp();
    Ok(u.map(|v| n_point(v, g, which, gp)))
}

/// `N_v(u) = U Re N(u) + i Im N(u)`.
pub fn nonlinearity_v(u: &Field, m: &GammaModel) -> Result<Field> {
    let n = nonlinearity(u, m, NonlinearPart::Full)?;
    let table = RadialSymbol::u(m.symbol_gamma()).table(u.grid())?;
    let re = apply_table(&table, &n.map(|v| Complex64::new(v.re, 0.0)));
    Ok(n.zip_map(&re, |a, b| Complex64::new(b.re, a.im))?)
}

/// Which display is used for `Im N_z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NzForm {
    /// `-(grad/<grad>^2) . [4 gamma u1 grad u2 + grad(gamma |u|^2 u2 + q^2 u2)]`
    Divergence,
    /// `-(grad/<grad>^2) . [4 gamma u1 grad u2] + U^2 [(gamma+4) u1^2 u2 + gamma u2^3 + 4 u1 u2 |u|^2 + |u|^4 u2]`
    Expanded,
}

/// Nonlinearity of the normal-form variable: `(i d_t - H) z = N_z(u)` for
/// `z = M(u)`. Cubic-quintic model only.
pub fn nonlinearity_z(u: &Field, m: &GammaModel) -> Result<Field> {
    nonlinearity_z_form(u, m, NzForm::Divergence)
}

pub fn nonlinearity_z_form(u: &Field, m: &GammaModel, form: NzForm) -> Result<Field> {
    u.require(Space::Physical)?;
    if m.is_gp() {
        return Err(Error::InvalidParameter(
            "N_z is implemented for the cubic-quintic model only".into(),
        ));
    }
    let g = m.gamma;
    let grid = u.grid();

    // Re N_z = U Re[N - gamma |u|^2]
    let re_src = u.map(|v| {
        let n = n_point(v, g, NonlinearPart::Full, false);
        Complex64::new(n.re - g * v.norm_sqr(), 0.0)
    });
    let re = apply_table(&RadialSymbol::u(g).table(grid)?, &re_src);

    let bracket_m2 = RadialSymbol::bracket(g, -2.0).table(grid)?;
    let u1 = u.map(|v| Complex64::new(v.re, 0.0));
    let u2 = u.map(|v| Complex64::new(v.im, 0.0));
    let grad_u2 = gradient(&u2);
    let flux: Vec<Field> = grad_u2
        .iter()
        .map(|d| u1.zip_map(d, |a, b| Complex64::new(4.0 * g * a.re * b.re, 0.0)))
        .collect::<Result<_>>()?;

    let im = match form {
        NzForm::Divergence => {
            let s = u.map(|v| {
                let q = q_point(v);
                Complex64::new((g * v.norm_sqr() + q * q) * v.im, 0.0)
            });
            let gs = gradient(&s);
            let total: Vec<Field> = flux.iter().zip(&gs).map(|(a, b)| a + b).collect();
            let div = divergence(&total)?;
            apply_table(&bracket_m2, &div).scale(-1.0)
        }
        NzForm::Expanded => {
            let div = divergence(&flux)?;
            let first = apply_table(&bracket_m2, &div).scale(-1.0);
            let poly = u.map(|v| {
                let (a, b) = (v.re, v.im);
                let r2 = a * a + b * b;
                Complex64::new(
                    (g + 4.0) * a * a * b + g * b * b * b + 4.0 * a * b * r2 + r2 * r2 * b,
                    0.0,
                )
            });
            let u2tab: Vec<f64> = RadialSymbol::u(g)
                .table(grid)?
                .iter()
                .map(|x| x * x)
                .collect();
            &first + &apply_table(&u2tab, &poly)
        }
    };
    Ok(re.zip_map(&im, |a, b| Complex64::new(a.re, b.re))?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `1/2 int |grad u|^2`
    pub kinetic: f64,
    /// `(gamma/4) int q^2` (`1/4 int q^2` for GP)
    pub quartic: f64,
    /// `1/6 int q^3` (0 for GP)
    pub sextic: f64,
    pub total: f64,
    /// `1/2 E - 1/12 int q^3`
    pub reduced: f64,
    /// `int q`
    pub mass: f64,
    /// `||grad u||^2 + ||q||^2`
    pub energy_norm_sq: f64,
}

/// Integrals of `q`, `q^2`, `q^3` by the rectangle rule.
pub(crate) fn q_moments(u: &Field) -> Result<[f64; 3]> {
    u.require(Space::Physical)?;
    let v = u.values();
    let dv = u.grid().cell_volume();
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let p = k as i32 + 1;
        *slot = dv * pairwise_sum(v.len(), |i| q_point(v[i]).powi(p));
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("energy integrand"));
    }
    Ok(out)
}

/// `||grad f||^2_{L^2}` from the spectral coefficients.
pub fn grad_sq(f: &Field) -> Result<f64> {
    let h = norm(f, NormKind::SobolevHom { s: 1.0, r: 2.0 })?;
    Ok(h * h)
}

pub fn energy(u: &Field, m: &GammaModel) -> Result<EnergyBreakdown> {
    let [iq, iq2, iq3] = q_moments(u)?;
    let g2 = grad_sq(u)?;
    let kinetic = 0.5 * g2;
    let quartic = m.quartic_coeff() * iq2;
    let sextic = if m.is_gp() { 0.0 } else { iq3 / 6.0 };
    let total = kinetic + quartic + sextic;
    Ok(EnergyBreakdown {
        kinetic,
        quartic,
        sextic,
        total,
        reduced: 0.5 * total - 0.5 * sextic,
        mass: iq,
        energy_norm_sq: g2 + iq2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoercivityBranch {
    /// `gamma > 2/3`: `E >= 1/2 ||grad u||^2 + (gamma/4)(1 - 2/(3 gamma)) ||q||^2`
    AboveTwoThirds,
    /// `gamma = 2/3`: `q^2 (q + 1) >= 0`
    TwoThirds,
    /// `gamma < 2/3` under `||grad u1||^2 <= delta`: `E >= 1/4 ||grad u||^2 + (gamma/8) ||q||^2`
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub branch: CoercivityBranch,
    /// False when the branch hypothesis fails; no claim is made then.
    pub precondition_met: bool,
    pub passes: bool,
    pub energy: f64,
    pub lower_bound: f64,
    /// `E / lower_bound`, absent when the bound vanishes.
    pub bound_constant: Option<f64>,
    /// Smallest pointwise value of the branch integrand defect.
    pub min_integrand: f64,
    pub q_min: f64,
    /// `q < -1 - 1e-12` somewhere: impossible for `q = |1+u|^2 - 1`.
    pub corrupted: bool,
    pub grad_u1_sq: f64,
}

const TWO_THIRDS_TOL: f64 = 1e-12;

pub fn coercivity_check(u: &Field, m: &GammaModel) -> Result<CoercivityReport> {
    u.require(Space::Physical)?;
    if m.is_gp() {
        return Err(Error::InvalidParameter(
            "coercivity branches apply to the cubic-quintic model".into(),
        ));
    }
    let g = m.gamma;
    let e = energy(u, m)?;
    let g2 = 2.0 * e.kinetic;
    let q2 = e.energy_norm_sq - g2;
    let q_min = u.values().iter().map(|&v| q_point(v)).fold(f64::INFINITY, f64::min);
    let corrupted = q_min < -1.0 - 1e-12;
    let grad_u1_sq = grad_sq(&u.map(|v| Complex64::new(v.re, 0.0)))?;

    let branch = if (g - 2.0 / 3.0).abs() <= TWO_THIRDS_TOL {
        CoercivityBranch::TwoThirds
    } else if g > 2.0 / 3.0 {
        CoercivityBranch::AboveTwoThirds
    } else {
        CoercivityBranch::Small
    };

    // Pointwise defect of the potential part of each chain.
    let defect = |q: f64| -> f64 {
        match branch {
            CoercivityBranch::AboveTwoThirds | CoercivityBranch::TwoThirds => {
                q * q * (q + 1.0) / 6.0
            }
            CoercivityBranch::Small => q * q * (q + 0.75 * g) / 6.0,
        }
    };
    let min_integrand = u
        .values()
        .iter()
        .map(|&v| defect(q_point(v)))
        .fold(f64::INFINITY, f64::min);

    let (lower_bound, precondition_met) = match branch {
        CoercivityBranch::AboveTwoThirds => {
            (0.5 * g2 + 0.25 * g * (1.0 - 2.0 / (3.0 * g)) * q2, true)
        }
        CoercivityBranch::TwoThirds => (0.5 * g2, true),
        CoercivityBranch::Small => (0.25 * g2 + g / 8.0 * q2, grad_u1_sq <= m.delta_gamma),
    };
    let slack = 1e-12 * (e.total.abs() + lower_bound.abs()) + 1e-300;
    let holds = e.total >= lower_bound - slack;
    let pointwise_ok = match branch {
        CoercivityBranch::Small => true,
        _ => min_integrand >= -1e-12,
    };
    let passes = !corrupted && precondition_met && holds && pointwise_ok;
    if corrupted {
        log::warn!("q fell below -1 ({q_min:e}): data corruption");
    }
    Ok(CoercivityReport {
        branch,
        precondition_met,
        passes,
        energy: e.total,
        lower_bound,
        bound_constant: if lower_bound > 0.0 {
            Some(e.total / lower_bound)
        } else {
            None
        },
        min_integrand,
        q_min,
        corrupted,
        grad_u1_sq,
    })
}

/// Residual of the GP energy identity
/// `E_GP(u) = 1/2 ||sqrt(2 - Delta) z||^2 + 1/4 ||sqrt(-Delta/(2 - Delta)) |u|^2||^2`.
pub fn gp_energy_identity(u: &Field) -> Result<f64> {
    crate::normal_form::energy_identity_check(u, &GammaModel::gross_pitaevskii())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaCalibration {
    pub gamma: f64,
    /// `||grad u1||^2` at the first failure of the chain, per bump width.
    pub thresholds: Vec<(f64, Option<f64>)>,
    /// Half the smallest threshold.
    pub delta: f64,
}

fn small_chain_holds(u: &Field, m: &GammaModel) -> Result<bool> {
    let e = energy(u, m)?;
    let g2 = 2.0 * e.kinetic;
    let q2 = e.energy_norm_sq - g2;
    Ok(e.total >= 0.25 * g2 + m.gamma / 8.0 * q2)
}

/// Desk calibration of the smallness threshold: for each width, bisect the
/// depth `a` of the real well `-a exp(-|x|^2 / (2 w^2))` until the chain
/// `E >= 1/4 ||grad u||^2 + (gamma/8) ||q||^2` first fails, record
/// `||grad u1||^2` there, and return half the smallest recorded value.
pub fn calibrate_delta(gamma: f64, grid: &Grid, widths: &[f64]) -> Result<DeltaCalibration> {
    let m = GammaModel::new(gamma)?;
    let well = |w: f64, a: f64| {
        Field::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            Complex64::new(-a * (-r2 / (2.0 * w * w)).exp(), 0.0)
        })
    };
    let mut thresholds = Vec::new();
    for &w in widths {
        if small_chain_holds(&well(w, 1.0), &m)? {
            thresholds.push((w, None));
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if small_chain_holds(&well(w, mid), &m)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        thresholds.push((w, Some(grad_sq(&well(w, hi))?)));
    }
    let min = thresholds
        .iter()
        .filter_map(|t| t.1)
        .fold(f64::INFINITY, f64::min);
    Ok(DeltaCalibration {
        gamma,
        thresholds,
        delta: 0.5 * min,
    })
}
