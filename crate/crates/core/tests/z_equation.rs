//! `z = M(u)` along a nonlinear solution obeys `(i d_t - H) z = N_z(u)`.

use cqnls_core::integrator::{evolve_to, StepperConfig};
use cqnls_core::model::nonlinearity_z;
use cqnls_core::normal_form::transform;
use cqnls_core::propagators::h_symbol;
use cqnls_core::spectral::{apply_k2, hdot1};
use cqnls_core::{Field, GammaModel, Grid};
use num_complex::Complex64;

fn bump(grid: &Grid, amp: f64, w: f64) -> Field {
    Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let e = (-r2 / (2.0 * w * w)).exp();
        Complex64::new(amp * e, 0.5 * amp * x[0] / w * e)
    })
}

#[test]
fn normal_form_variable_solves_its_equation() {
    let grid = Grid::cube(2, 64, 32.0).unwrap();
    let m = GammaModel::new(0.6).unwrap();
    let cfg = StepperConfig {
        dt: 2e-4,
        filter_radius_fraction: 1.0,
        ..Default::default()
    };
    let u0 = bump(&grid, 0.1, 2.0);
    let (t, delta) = (0.5, 0.01);
    let u_mid = evolve_to(&u0, 0.0, t, &cfg, &m).unwrap();
    let u_plus = evolve_to(&u_mid, t, t + delta, &cfg, &m).unwrap();
    let back = StepperConfig { dt: -cfg.dt, ..cfg };
    let u_minus = evolve_to(&u_mid, t, t - delta, &back, &m).unwrap();

    let z = transform(&u_mid, &m).unwrap();
    let dz = (&transform(&u_plus, &m).unwrap() - &transform(&u_minus, &m).unwrap())
        .scale(1.0 / (2.0 * delta));
    let hz = apply_k2(&z, |k2| Complex64::new(h_symbol(k2, m.gamma), 0.0));
    let lhs = &dz.scale_complex(Complex64::i()) - &hz;
    let nz = nonlinearity_z(&u_mid, &m).unwrap();
    let rel = hdot1(&(&lhs - &nz)) / hdot1(&nz);
    assert!(rel < 1e-3, "relative residual {rel:e}");
}
