//! Oracle checks on full-resolution solves.

use dld_core::flow::{poiseuille_reference, solve_steady, solve_with, CellLayout, FlowConfig, FlowField};
use dld_core::geometry::make_cell;

fn solve(f: f64, n: u32) -> FlowField {
    solve_steady(&make_cell(f, n, 0.4).unwrap(), 0.1, 256, 256, 1e-8, 200).unwrap()
}

#[test]
fn mass_is_conserved_and_flow_is_symmetric() {
    let field = solve(0.5, 10);
    let q0 = field.column_flux(0);
    let q1 = field.column_flux(field.nx);
    assert!(((q0 - q1) / q0).abs() <= 1e-3, "{q0} vs {q1}");
    for i in (0..=field.nx).step_by(16) {
        let q = field.column_flux(i);
        assert!(((q - q0) / q0).abs() <= 1e-3, "column {i}: {q}");
    }
    // u even and v odd about the mid-height
    let umax = field.u.iter().fold(0.0f64, |m, u| m.max(u.abs()));
    let mut worst = 0.0f64;
    for j in 0..=field.ny {
        for i in 0..=field.nx {
            let a = field.node_index(i, j);
            let b = field.node_index(i, field.ny - j);
            worst = worst.max((field.u[a] - field.u[b]).abs());
            worst = worst.max((field.v[a] + field.v[b]).abs());
        }
    }
    assert!(worst <= 0.01 * umax, "{worst}");
}

#[test]
fn channel_profile_is_parabolic() {
    let cfg = FlowConfig::default();
    let field = solve_with(&make_cell(0.5, 10, 0.4).unwrap(), CellLayout::Channel, &cfg).unwrap();
    let h = 0.2;
    // creeping channel flow: u_max = (dp / Dx) h^2 / (2 mu)
    let u_max = cfg.dp / 0.4 * h * h / (2.0 * cfg.mu) / field.scale.u_scale;
    let (mut num, mut den) = (0.0, 0.0);
    for i in [0, 100, 256] {
        for j in 0..=field.ny {
            let y = j as f64 * field.hy();
            let exact = poiseuille_reference(y - h, h, u_max).unwrap();
            let e = field.u[field.node_index(i, j)] - exact;
            num += e * e;
            den += exact * exact;
        }
    }
    assert!((num / den).sqrt() <= 0.01);
}

#[test]
fn shrinking_posts_approach_uniform_flow() {
    // spread of u over the fluid relative to its mean, falling with F
    let spread = |f: f64| {
        let field = solve(f, 10);
        let fluid: Vec<f64> = (0..field.n_nodes())
            .filter(|&k| !field.solid[k])
            .map(|k| field.u[k])
            .collect();
        let mean = fluid.iter().sum::<f64>() / fluid.len() as f64;
        let var = fluid.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / fluid.len() as f64;
        var.sqrt() / mean
    };
    let s = [spread(0.4), spread(0.2), spread(0.1)];
    assert!(s[0] > s[1] && s[1] > s[2], "{s:?}");
}
