use anyhow::{Context, Result};
use cqnls_core::integrator::{conservation_monitor, evolve, StepperConfig, SubstepMode};
use cqnls_core::io::{generate_data, write_snapshot};
use cqnls_core::model::{coercivity_check, energy};
use cqnls_core::normal_form::{energy_identity_check, invert, quadratic_cancellation_check, transform};
use cqnls_core::propagators::{decay_probe, hvs_delta_check};
use cqnls_core::scattering::{
    construct_backward_family, construct_final_state_small, geometric_grid, trace_distance,
    BackwardConfig, FinalStateConfig, Seed,
};
use cqnls_core::spectral::{hdot1, lp_norm};
use cqnls_core::{Error, Field, GammaModel};
use log::info;

use crate::config::RunConfig;
use crate::output::{OutDir, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Evolve the initial data and monitor the conserved quantities.
    Simulate,
    /// Fit L^r decay exponents of a linear flow.
    DecayProbe,
    /// Round trip through the normal form and its inverse.
    NormalForm,
    /// Small-data final-state construction.
    ScatterSmall,
    /// Backward family u^T run back from increasing final times.
    ScatterBackward,
    /// Energy, coercivity and identity checks on one field.
    Diagnose,
    /// Write initial data as a snapshot.
    Gen,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::DecayProbe => "decay-probe",
            Command::NormalForm => "normal-form",
            Command::ScatterSmall => "scatter-small",
            Command::ScatterBackward => "scatter-backward",
            Command::Diagnose => "diagnose",
            Command::Gen => "gen",
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    m: GammaModel,
    out: OutDir,
    summary: Summary,
}

impl Ctx {
    fn data(&self) -> Result<Field> {
        let grid = self.cfg.grid()?;
        generate_data(&self.cfg.data_spec(), &grid).context("generating initial data")
    }

    fn stepper(&self) -> StepperConfig {
        let i = &self.cfg.integrator;
        StepperConfig {
            dt: i.dt,
            filter_radius_fraction: i.filter_radius_fraction,
            monitor_stride: i.monitor_stride,
            snapshot_stride: self.cfg.io.snapshot_stride,
            mode: SubstepMode::Full,
        }
    }
}

/// Runs one subcommand; the summary is written even when a check fails.
pub fn run(cmd: Command, cfg: RunConfig) -> Result<Summary> {
    cfg.validate()?;
    let m = cfg.model()?;
    let out = OutDir::create(&cfg.io.out_dir)?;
    out.manifest(cmd.name(), &cfg)?;
    let mut ctx = Ctx {
        summary: Summary::new(cmd.name()),
        cfg,
        m,
        out,
    };
    ctx.summary.num("gamma", ctx.m.gamma);
    let res = match cmd {
        Command::Simulate => simulate(&mut ctx),
        Command::DecayProbe => decay(&mut ctx),
        Command::NormalForm => normal_form(&mut ctx),
        Command::ScatterSmall => scatter_small(&mut ctx),
        Command::ScatterBackward => scatter_backward(&mut ctx),
        Command::Diagnose => diagnose(&mut ctx),
        Command::Gen => gen(&mut ctx),
    };
    if let Err(e) = &res {
        ctx.summary.put("status", "error");
        ctx.summary.put("error", e.to_string());
        ctx.out.summary(&ctx.summary)?;
        return Err(res.unwrap_err());
    }
    ctx.out.summary(&ctx.summary)?;
    Ok(ctx.summary)
}

fn finish(ctx: &mut Ctx, passes: bool) -> Result<()> {
    ctx.summary.put("passes", passes);
    ctx.summary.put("status", "ok");
    Ok(())
}

fn simulate(ctx: &mut Ctx) -> Result<()> {
    let u0 = ctx.data()?;
    let t_end = ctx.cfg.integrator.t_end;
    let trace = evolve(&u0, 0.0, t_end, &ctx.stepper(), &ctx.m)?;
    ctx.out.write("diagnostics.csv", trace.csv())?;
    for (k, (_, u)) in trace.snapshots.iter().enumerate() {
        write_snapshot(&ctx.out.path(&format!("snap_{k:04}.bin")), u, ctx.m.gamma)?;
    }
    write_snapshot(&ctx.out.path("final.bin"), &trace.final_u, ctx.m.gamma)?;
    let s = &mut ctx.summary;
    s.num("t_end", t_end);
    s.put("steps", trace.steps);
    s.put("snapshots", trace.snapshots.len());
    if trace.rows.len() >= 2 {
        let c = conservation_monitor(&trace)?;
        s.num("energy_drift", c.energy_drift);
        s.num("mass_drift", c.mass_drift);
    }
    let last = trace.rows.last().expect("initial row");
    s.num("energy", last.energy.total);
    s.num("max_abs_psi", last.max_abs_psi);
    finish(ctx, true)
}

fn decay(ctx: &mut Ctx) -> Result<()> {
    let f = ctx.data()?;
    let p = ctx.cfg.probe.clone();
    let g = ctx.m.symbol_gamma();
    ctx.summary.put("flow", serde_json::to_value(p.flow)?);
    for &r in &p.r {
        let fit = decay_probe(&f, p.flow, g, r, &p.times)?;
        let tag = if r.is_infinite() { "inf".to_string() } else { format!("{r}") };
        ctx.out.write(&format!("decay_r{tag}.csv"), fit.csv())?;
        ctx.summary.num(&format!("exponent_r{tag}"), fit.fit.slope);
        info!("L^{tag} decay exponent {:.4}", fit.fit.slope);
    }
    let mut passes = true;
    if !p.hvs_times.is_empty() {
        let rep = hvs_delta_check(&f, g, &p.hvs_times, p.hvs_constant)?;
        let mut csv = String::from("t,gap,bound\n");
        for ((t, a), b) in rep.times.iter().zip(&rep.gap).zip(&rep.bound) {
            csv.push_str(&format!("{t:.17e},{a:.17e},{b:.17e}\n"));
        }
        ctx.out.write("hvs_delta.csv", csv)?;
        ctx.summary.num("hvs_fitted_constant", rep.fitted_constant);
        ctx.summary.put("hvs_passes", rep.passes);
        passes = rep.passes;
    }
    finish(ctx, passes)
}

fn normal_form(ctx: &mut Ctx) -> Result<()> {
    let u = ctx.data()?;
    let f = transform(&u, &ctx.m)?;
    let (back, rep) = invert(&f, &ctx.m, &ctx.cfg.normal_form)?;
    let rel = |a: &Field, b: &Field| -> Result<f64> {
        let d = hdot1(&a.axpy(-1.0, b)?);
        let s = hdot1(b);
        Ok(if s > 0.0 { d / s } else { d })
    };
    let rm = rel(&back, &u)?;
    let mr = rel(&transform(&back, &ctx.m)?, &f)?;
    let mut csv = String::from("iteration,update\n");
    for (k, x) in rep.updates.iter().enumerate() {
        csv.push_str(&format!("{},{x:.17e}\n", k + 1));
    }
    ctx.out.write("iterations.csv", csv)?;
    write_snapshot(&ctx.out.path("z.bin"), &f, ctx.m.gamma)?;
    let s = &mut ctx.summary;
    s.put("iterations", rep.iterations);
    s.num("max_ratio", rep.max_ratio);
    s.num("f_l6", rep.f_l6);
    s.put("gate_ok", rep.gate_ok);
    s.num("round_trip_rm", rm);
    s.num("round_trip_mr", mr);
    finish(ctx, rm.max(mr) <= 1e-9)
}

fn quarter_octaves(hi: f64) -> Vec<f64> {
    (0..)
        .map(|k| 2f64.powf(k as f64 / 4.0))
        .take_while(|&t| t <= hi * (1.0 + 1e-12))
        .collect()
}

fn scatter_small(ctx: &mut Ctx) -> Result<()> {
    let u_plus = ctx.data()?;
    let sc = ctx.cfg.scattering.clone();
    let t_grid = geometric_grid(sc.t_start, sc.t_max, sc.grid_ratio, sc.max_step, &sc.anchors)?;
    let gate_window = if sc.gate_window.is_empty() {
        quarter_octaves(sc.t_max)
    } else {
        sc.gate_window.clone()
    };
    let fs = FinalStateConfig {
        u_plus: u_plus.clone(),
        t_start: sc.t_start,
        eta: sc.eta,
        t_grid,
        gate_window,
        tail_tol: sc.tail_tol,
        fp_tol: sc.fp_tol,
        max_outer_iters: sc.max_outer_iters,
        seed: sc.seed,
        fit_window: (sc.fit_window[0], sc.fit_window[1]),
    };
    let (trace, rep) = match construct_final_state_small(&fs, &ctx.m) {
        Ok(r) => r,
        Err(e) => {
            if let Error::GateFailure { value, threshold, .. } = &e {
                eprintln!("X_1 norm {value:e} exceeds eta {threshold:e}");
                ctx.summary.num("x1_norm", *value);
                ctx.summary.num("eta", *threshold);
            }
            return Err(e.into());
        }
    };
    ctx.out.write("iterations.csv", rep.csv())?;
    if let Some(a) = &rep.asymptotics {
        ctx.out.write("asymptotics.csv", a.csv())?;
    }
    write_snapshot(&ctx.out.path("u_plus.bin"), &u_plus, ctx.m.gamma)?;
    write_snapshot(&ctx.out.path("u_start.bin"), &trace.fields[0], ctx.m.gamma)?;

    let s = &mut ctx.summary;
    s.num("x1_norm", rep.smallness.x1_norm);
    s.num("eta", sc.eta);
    s.put("nodes", rep.nodes);
    s.num("t_max", rep.t_max);
    s.put("iterations", rep.iterations);
    s.num("max_ratio", rep.max_ratio);
    s.num("final_residual", *rep.residuals.last().unwrap_or(&0.0));
    s.num("x_norm_u", rep.x_norm_u);
    s.num("nf_residual", rep.nf_residual);
    s.num("tail_estimate", rep.tail_estimate);
    let mut passes = rep.max_ratio <= 0.5 && rep.nf_residual <= 1e-9;
    if let Some(a) = &rep.asymptotics {
        if let Some(x) = a.strong_exponent() {
            s.num("strong_gap_exponent", x);
        }
        s.put("correction_helps", format!("{}/{}", a.correction_helps, a.rows.len()));
        s.put("asymptotics_pass", a.passes);
        passes &= a.passes;
    }
    if sc.check_uniqueness {
        let other = match sc.seed {
            Seed::Linear => Seed::Zero,
            Seed::Zero => Seed::Linear,
        };
        let (trace2, rep2) = construct_final_state_small(&FinalStateConfig { seed: other, ..fs }, &ctx.m)?;
        let d = trace_distance(&trace, &trace2, ctx.m.gamma)?;
        let s = &mut ctx.summary;
        s.num("seed_distance", d);
        s.put("other_seed_iterations", rep2.iterations);
        let unique = d <= 10.0 * sc.fp_tol;
        s.put("unique", unique);
        passes &= unique;
    }
    finish(ctx, passes)
}

fn scatter_backward(ctx: &mut Ctx) -> Result<()> {
    let u_plus = ctx.data()?;
    let sc = ctx.cfg.scattering.clone();
    let cfg = BackwardConfig {
        stepper: ctx.stepper(),
        nf: ctx.cfg.normal_form,
        window_radius: sc.window_radius,
        probe_times: sc.probe_times.clone(),
    };
    let rep = construct_backward_family(&u_plus, &sc.t_list, sc.t_eval, &cfg, &ctx.m)?;
    ctx.out.write("backward.csv", rep.csv())?;
    if let Some(a) = &rep.probe {
        ctx.out.write("asymptotics.csv", a.csv())?;
    }
    for (mb, st) in rep.members.iter().zip(&rep.states) {
        write_snapshot(&ctx.out.path(&format!("u_T{}.bin", mb.t_final)), st, ctx.m.gamma)?;
    }
    let round_trip = rep.members.iter().map(|m| m.round_trip).fold(0.0, f64::max);
    let s = &mut ctx.summary;
    s.put("members", rep.members.len());
    s.num("t_eval", rep.t_eval);
    s.put("monotone", rep.monotone);
    s.num("max_round_trip", round_trip);
    if let Some(&d) = rep.l2_window_diffs.last() {
        s.num("last_l2_window_diff", d);
    }
    let mut passes = rep.monotone;
    if let Some(a) = &rep.probe {
        let helps = a.correction_helps == a.rows.len();
        s.put("correction_helps", format!("{}/{}", a.correction_helps, a.rows.len()));
        passes &= helps;
    }
    finish(ctx, passes)
}

fn diagnose(ctx: &mut Ctx) -> Result<()> {
    let u = ctx.data()?;
    let m = ctx.m;
    let e = energy(&u, &m)?;
    let quad = quadratic_cancellation_check(&u.imag_part()?, &m)?;
    let ident = energy_identity_check(&u, &m)?;
    let s = &mut ctx.summary;
    s.num("energy", e.total);
    s.num("kinetic", e.kinetic);
    s.num("quartic", e.quartic);
    s.num("sextic", e.sextic);
    s.num("mass", e.mass);
    s.num("energy_norm_sq", e.energy_norm_sq);
    s.num("h1", hdot1(&u));
    s.num("l6", lp_norm(&u, 6.0)?);
    s.num("quadratic_cancellation", quad);
    s.num("energy_identity", ident);
    let mut passes = quad <= 1e-13 && ident <= 1e-10;
    if !m.is_gp() {
        let c = coercivity_check(&u, &m)?;
        s.put("coercivity_branch", serde_json::to_value(c.branch)?);
        s.put("coercivity_precondition", c.precondition_met);
        s.put("coercivity_passes", c.passes);
        s.num("coercivity_lower_bound", c.lower_bound);
        s.num("grad_u1_sq", c.grad_u1_sq);
        s.num("delta_gamma", m.delta_gamma);
        passes &= c.passes || !c.precondition_met;
    }
    finish(ctx, passes)
}

fn gen(ctx: &mut Ctx) -> Result<()> {
    let u = ctx.data()?;
    write_snapshot(&ctx.out.path("u.bin"), &u, ctx.m.gamma)?;
    let s = &mut ctx.summary;
    s.put("points", u.grid().len());
    s.num("l2", lp_norm(&u, 2.0)?);
    s.num("h1", hdot1(&u));
    s.num("max_abs", u.max_abs());
    finish(ctx, true)
}
