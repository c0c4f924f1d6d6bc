//! Strang splitting for `(i d_t + Delta) psi = W(|psi|^2) psi` on `psi = 1 + u`.
//!
//! One step is: half step of `e^{i dt/2 Delta}`, the exact phase rotation
//! `psi <- e^{-i dt W(|psi|^2)} psi`, then a second half step fused with a
//! sharp radial anti-alias filter. The filter never touches `xi = 0`, so
//! filtering `psi` and filtering `psi - 1` agree.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_line, fit_loglog};
use crate::model::{energy, EnergyBreakdown, GammaModel};
use crate::spectral::{hdot1, lp_norm, pairwise_sum, Direction, Field, Grid, Space};

/// `|psi|` above this aborts the run.
pub const BLOW_UP_AMPLITUDE: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstepMode {
    #[default]
    Full,
    /// Skip the phase rotation.
    LinearOnly,
    /// Skip both linear half steps (the filter still applies).
    NonlinearOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperConfig {
    /// Time step; its sign sets the direction.
    pub dt: f64,
    /// Modes with `|xi| > fraction * nyquist` are removed every step.
    pub filter_radius_fraction: f64,
    /// Diagnostics every this many steps.
    pub monitor_stride: usize,
    /// Keep a snapshot every this many diagnostic samples (0: none).
    pub snapshot_stride: usize,
    pub mode: SubstepMode,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            filter_radius_fraction: 1.0 / 3.0,
            monitor_stride: 100,
            snapshot_stride: 0,
            mode: SubstepMode::Full,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt != 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be finite and nonzero".into()));
        }
        if !(self.filter_radius_fraction > 0.0 && self.filter_radius_fraction <= 1.0) {
            return Err(Error::InvalidParameter(
                "filter_radius_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.monitor_stride == 0 {
            return Err(Error::InvalidParameter("monitor_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Precomputed multipliers for one step size.
pub struct Stepper {
    grid: Grid,
    dt: f64,
    model: GammaModel,
    mode: SubstepMode,
    half: Vec<Complex64>,
    half_filtered: Vec<Complex64>,
    filter: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &Grid, dt: f64, m: &GammaModel, cfg: &StepperConfig) -> Self {
        let cut = cfg.filter_radius_fraction * grid.nyquist();
        let cut2 = cut * cut;
        let filter: Vec<f64> = grid
            .k2()
            .iter()
            .map(|&k2| if k2 <= cut2 * (1.0 + 1e-12) { 1.0 } else { 0.0 })
            .collect();
        let linear = cfg.mode != SubstepMode::NonlinearOnly;
        let half: Vec<Complex64> = grid
            .k2()
            .iter()
            .map(|&k2| {
                if linear {
                    Complex64::from_polar(1.0, -0.5 * dt * k2)
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect();
        let half_filtered = half.iter().zip(&filter).map(|(h, f)| h * *f).collect();
        Stepper {
            grid: grid.clone(),
            dt,
            model: *m,
            mode: cfg.mode,
            half,
            half_filtered,
            filter,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Applies the anti-alias filter to a field in either space.
    pub fn filter(&self, f: &Field) -> Field {
        crate::spectral::apply_table(&self.filter, f)
    }

    /// One Strang step on `psi` (physical, background included), in place.
    pub fn step(&self, psi: &mut Field) -> Result<()> {
        psi.require(Space::Physical)?;
        psi.transform_mut(Direction::Forward)?;
        for (v, h) in psi.values_mut().iter_mut().zip(&self.half) {
            *v *= h;
        }
        psi.transform_mut(Direction::Inverse)?;
        if self.mode != SubstepMode::LinearOnly {
            let m = self.model;
            let dt = self.dt;
            psi.map_inplace(|v| v * Complex64::from_polar(1.0, -dt * m.phase(v.norm_sqr())));
        }
        psi.transform_mut(Direction::Forward)?;
        for (v, h) in psi.values_mut().iter_mut().zip(&self.half_filtered) {
            *v *= h;
        }
        psi.transform_mut(Direction::Inverse)?;
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

fn guard(psi: &Field, t: f64) -> Result<()> {
    let bad = psi
        .values()
        .iter()
        .any(|v| !(v.re.is_finite() && v.im.is_finite()) || v.norm_sqr() > BLOW_UP_AMPLITUDE * BLOW_UP_AMPLITUDE);
    if bad {
        return Err(Error::BlowUp { time: t });
    }
    Ok(())
}

/// Convenience wrapper: one step of size `dt` with default filtering.
pub fn strang_step(psi: &Field, dt: f64, m: &GammaModel) -> Result<Field> {
    let cfg = StepperConfig {
        dt,
        ..Default::default()
    };
    let mut out = psi.to_physical();
    Stepper::new(psi.grid(), dt, m, &cfg).step(&mut out)?;
    guard(&out, dt)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: f64,
    pub energy: EnergyBreakdown,
    /// `int |q|`, the scale for mass drift.
    pub q_abs: f64,
    pub h1: f64,
    pub l6: f64,
    pub max_abs_psi: f64,
}

impl DiagRow {
    pub const CSV_HEADER: &'static str =
        "t,E,kinetic,quartic,sextic,reduced,mass,energy_norm_sq,H1,L6,max_abs_psi";

    pub fn csv(&self) -> String {
        let e = &self.energy;
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.t,
            e.total,
            e.kinetic,
            e.quartic,
            e.sextic,
            e.reduced,
            e.mass,
            e.energy_norm_sq,
            self.h1,
            self.l6,
            self.max_abs_psi
        )
    }
}

pub fn diagnostics(u: &Field, t: f64, m: &GammaModel) -> Result<DiagRow> {
    let energy = energy(u, m)?;
    let v = u.values();
    let q_abs = u.grid().cell_volume()
        * pairwise_sum(v.len(), |i| (2.0 * v[i].re + v[i].norm_sqr()).abs());
    Ok(DiagRow {
        t,
        energy,
        q_abs,
        h1: hdot1(u),
        l6: lp_norm(u, 6.0)?,
        max_abs_psi: v
            .iter()
            .map(|x| (x + 1.0).norm())
            .fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug)]
pub struct SolutionTrace {
    pub times: Vec<f64>,
    pub rows: Vec<DiagRow>,
    /// `(t, u)` pairs, strided.
    pub snapshots: Vec<(f64, Field)>,
    pub final_u: Field,
    pub steps: usize,
}

impl SolutionTrace {
    pub fn csv(&self) -> String {
        let mut s = String::from(DiagRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }
}

fn to_psi(u: &Field) -> Field {
    u.map(|v| v + 1.0)
}

fn to_u(psi: &Field) -> Field {
    psi.map(|v| v - 1.0)
}

/// Evolves `u0` from `t0` to `t1`; the last step is shortened if needed.
pub fn evolve(
    u0: &Field,
    t0: f64,
    t1: f64,
    cfg: &StepperConfig,
    m: &GammaModel,
) -> Result<SolutionTrace> {
    cfg.validate()?;
    u0.require(Space::Physical)?;
    let span = t1 - t0;
    if span != 0.0 && span.signum() != cfg.dt.signum() {
        return Err(Error::InvalidParameter(format!(
            "dt = {} points away from t1 = {t1}",
            cfg.dt
        )));
    }
    let h = cfg.dt.abs();
    let n_full = ((span.abs() / h) * (1.0 + 1e-12)).floor() as usize;
    let rest = span.abs() - n_full as f64 * h;
    let has_tail = rest > 1e-12 * h.max(span.abs());
    let steps = n_full + usize::from(has_tail);

    let stepper = Stepper::new(u0.grid(), cfg.dt, m, cfg);
    let tail = has_tail.then(|| Stepper::new(u0.grid(), rest * cfg.dt.signum(), m, cfg));

    let mut psi = to_psi(u0);
    guard(&psi, t0)?;
    let mut trace = SolutionTrace {
        times: vec![t0],
        rows: vec![diagnostics(u0, t0, m)?],
        snapshots: Vec::new(),
        final_u: u0.clone(),
        steps,
    };
    if cfg.snapshot_stride > 0 {
        trace.snapshots.push((t0, u0.clone()));
    }
    let mut t = t0;
    for k in 1..=steps {
        if k <= n_full {
            stepper.step(&mut psi)?;
            t = t0 + k as f64 * cfg.dt;
        } else if let Some(s) = &tail {
            s.step(&mut psi)?;
            t = t1;
        }
        if k == steps {
            t = t1;
        }
        guard(&psi, t)?;
        if k % cfg.monitor_stride == 0 || k == steps {
            let u = to_u(&psi);
            trace.times.push(t);
            trace.rows.push(diagnostics(&u, t, m)?);
            if cfg.snapshot_stride > 0 && (trace.rows.len() - 1) % cfg.snapshot_stride == 0 {
                trace.snapshots.push((t, u));
            }
        }
    }
    trace.final_u = to_u(&psi);
    Ok(trace)
}

/// Final state only.
pub fn evolve_to(u0: &Field, t0: f64, t1: f64, cfg: &StepperConfig, m: &GammaModel) -> Result<Field> {
    let cfg = StepperConfig {
        monitor_stride: usize::MAX,
        snapshot_stride: 0,
        ..*cfg
    };
    Ok(evolve(u0, t0, t1, &cfg, m)?.final_u)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `max |E(t) - E(t0)| / |E(t0)|` (absolute when `E(t0) = 0`).
    pub energy_drift: f64,
    /// `max |m(t) - m(t0)| / max(|m(t0)|, int |q(t0)|)`.
    pub mass_drift: f64,
}

pub fn conservation_monitor(trace: &SolutionTrace) -> Result<ConservationReport> {
    if trace.rows.len() < 2 {
        return Err(Error::InvalidParameter("trace needs at least two samples".into()));
    }
    let r0 = trace.rows[0];
    let e0 = r0.energy.total;
    let m0 = r0.energy.mass;
    let e_scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    let m_scale = m0.abs().max(r0.q_abs);
    let m_scale = if m_scale > 0.0 { m_scale } else { 1.0 };
    let mut ed: f64 = 0.0;
    let mut md: f64 = 0.0;
    for r in &trace.rows[1..] {
        ed = ed.max((r.energy.total - e0).abs() / e_scale);
        md = md.max((r.energy.mass - m0).abs() / m_scale);
    }
    Ok(ConservationReport {
        energy_drift: ed,
        mass_drift: md,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    pub initial_gap: f64,
    pub max_h1_gap: f64,
    /// Fitted exponential rate of `log gap` against `t`.
    pub gap_growth_fit: f64,
}

/// Co-evolves two data and tracks `||u - v||_{H^1-dot}`.
pub fn stability_probe(
    u0: &Field,
    v0: &Field,
    horizon: f64,
    cfg: &StepperConfig,
    m: &GammaModel,
) -> Result<StabilityReport> {
    cfg.validate()?;
    u0.require_same_grid(v0)?;
    let step_cfg = StepperConfig {
        dt: cfg.dt.abs() * horizon.signum(),
        ..*cfg
    };
    let st = Stepper::new(u0.grid(), step_cfg.dt, m, &step_cfg);
    let n = (horizon.abs() / cfg.dt.abs()).round().max(1.0) as usize;
    let mut a = to_psi(u0);
    let mut b = to_psi(v0);
    let initial_gap = hdot1(&(&a - &b));
    let mut times = vec![0.0];
    let mut gaps = vec![initial_gap];
    for k in 1..=n {
        st.step(&mut a)?;
        st.step(&mut b)?;
        let t = k as f64 * step_cfg.dt;
        guard(&a, t)?;
        guard(&b, t)?;
        if k % step_cfg.monitor_stride == 0 || k == n {
            times.push(t);
            gaps.push(hdot1(&(&a - &b)));
        }
    }
    let max_h1_gap = gaps.iter().fold(0.0f64, |x, &y| x.max(y));
    let gap_growth_fit = if initial_gap > 0.0 {
        let lg: Vec<f64> = gaps.iter().map(|g| g.max(1e-300).ln()).collect();
        fit_line(&times, &lg).map(|f| f.slope).unwrap_or(0.0)
    } else {
        0.0
    };
    Ok(StabilityReport {
        times,
        gaps,
        initial_gap,
        max_h1_gap,
        gap_growth_fit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dt: f64,
    /// `||u_dt - u_{dt/2}||_{H^1-dot}`
    pub diff_coarse: f64,
    /// `||u_{dt/2} - u_{dt/4}||_{H^1-dot}`
    pub diff_fine: f64,
    /// `log2(diff_coarse / diff_fine)`
    pub order: f64,
}

/// Observed order from the Richardson triple `dt, dt/2, dt/4`.
pub fn self_convergence(
    u0: &Field,
    horizon: f64,
    cfg: &StepperConfig,
    m: &GammaModel,
) -> Result<ConvergenceReport> {
    let run = |dt: f64| {
        evolve_to(
            u0,
            0.0,
            horizon,
            &StepperConfig { dt, ..*cfg },
            m,
        )
    };
    let a = run(cfg.dt)?;
    let b = run(cfg.dt / 2.0)?;
    let c = run(cfg.dt / 4.0)?;
    let diff_coarse = hdot1(&(&a - &b));
    let diff_fine = hdot1(&(&b - &c));
    Ok(ConvergenceReport {
        dt: cfg.dt,
        diff_coarse,
        diff_fine,
        order: (diff_coarse / diff_fine).log2(),
    })
}

/// Fits `drift ~ C dt^p` over several step sizes; returns `(C, p)`.
pub fn drift_scaling(dts: &[f64], drifts: &[f64]) -> Result<(f64, f64)> {
    let f = fit_loglog(dts, drifts)?;
    Ok((f.intercept.exp(), f.slope))
}
