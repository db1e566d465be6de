//! Properties of the regularized energies, the continuation limit and `v = -Δ_p u`.

use std::f64::consts::PI;
use std::sync::Arc;

use plap_core::mesh::{build_mesh, norm_lq, norm_w1p, Domain, FeFunction, Mesh};
use plap_core::reaction::{Preset, Reaction};
use plap_core::solver::{residual_v, solve, Regularized, Schedule, Solution, SolveOptions};
use plap_core::verify::hardy_ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interval(n: usize) -> Arc<Mesh> {
    Arc::new(build_mesh(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
}

fn run(mesh: &Arc<Mesh>, r: &Reaction, p: f64) -> Solution {
    let opts = SolveOptions { schedule: Schedule { n_start: 2, n_end: 32, geometric: true }, ..Default::default() };
    solve(mesh, r, p, &opts).unwrap()
}

/// Zero-trace function with random interior values of magnitude `10^[-2, 2]`.
fn random_function(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> FeFunction {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let values = (0..mesh.n_nodes())
        .map(|i| if mesh.is_boundary(i) { 0.0 } else { scale * rng.random_range(-1.0..1.0) })
        .collect();
    FeFunction::new(Arc::clone(mesh), values).unwrap()
}

/// `J_ε(u) ≥ (1/p)(1 - c₂/λ₁)‖u‖^p - C ‖u‖` with
/// `C = c₁ l^{-γ} H(u) + c₃ |Ω|^{1/p'} λ₁^{-1/p}`, where `ū ≥ l d` and
/// `H(u) = ∫ d^{-γ}|u| / ‖u‖` is the Hardy ratio of `u` itself.
fn coercivity_holds(r: &Reaction, p: f64) {
    let mesh = interval(128);
    let sol = run(&mesh, r, p);
    let g = sol.growth;
    let lambda1 = sol.eigen.lambda1;
    let ubar = sol.sub.ubar.values();
    let l = (0..mesh.n_nodes())
        .filter(|&i| !mesh.is_boundary(i))
        .map(|i| ubar[i] / mesh.nodal_distance()[i])
        .fold(f64::INFINITY, f64::min);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let energies: Vec<Regularized> = sol
        .result
        .epsilons
        .iter()
        .map(|&eps| Regularized::new(r, &sol.sub, p, eps, if p >= 2.0 { eps } else { 0.0 }).unwrap())
        .collect();
    for case in 0..100 {
        let u = random_function(&mesh, &mut rng);
        let norm = norm_w1p(&u, p).unwrap();
        let c = g.c1 * l.powf(-g.gamma) * hardy_ratio(&u, p, g.gamma).unwrap() + g.c3 * lambda1.powf(-1.0 / p);
        let lower = (1.0 - g.c2 / lambda1) * norm.powf(p) / p - c * norm;
        for j in &energies {
            let e = j.energy(&u);
            assert!(e >= lower - 1e-9 * lower.abs().max(1.0), "case {case}, eps {}: J = {e} < {lower}", j.eps());
        }
    }
}

#[test]
fn energies_are_coercive_singular() {
    coercivity_holds(&Preset::StaircaseSingular { gamma: 0.5, lambda: 0.0 }.build(2.0).unwrap(), 2.0);
}

#[test]
fn energies_are_coercive_p3() {
    coercivity_holds(&Preset::Power { coef: 1.0, exponent: -0.5 }.build(3.0).unwrap(), 3.0);
}

#[test]
fn continuation_limit_is_nonnegative() {
    for (r, p) in [
        (Preset::StaircaseSingular { gamma: 0.5, lambda: 0.0 }.build(2.0).unwrap(), 2.0),
        (Preset::Power { coef: 1.0, exponent: -0.5 }.build(3.0).unwrap(), 3.0),
    ] {
        let sol = run(&interval(128), &r, p);
        for u in sol.result.solutions.iter().chain([&sol.result.limit]) {
            let min = u.values().iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-12, "p = {p}: min u = {min}");
        }
        assert!(norm_lq(&sol.result.limit, 1.0).unwrap() > 0.0);
    }
}

#[test]
fn residual_v_of_the_torsion_function_is_one() {
    let mesh = interval(64);
    let u = FeFunction::interpolate(Arc::clone(&mesh), |x| 0.5 * x[0] * (1.0 - x[0]));
    let v = residual_v(&u, 2.0, 0.0).unwrap();
    for (i, vi) in v.values().iter().enumerate() {
        assert!((vi - 1.0).abs() < 1e-9, "node {i}: v = {vi}");
    }
}

#[test]
fn residual_v_of_sine_for_p4() {
    // -(|u'|² u')' = 3π⁴ cos²(πx) sin(πx) for u = sin(πx).
    let mesh = interval(512);
    let u = FeFunction::interpolate(Arc::clone(&mesh), |x| (PI * x[0]).sin());
    let v = residual_v(&u, 4.0, 0.0).unwrap();
    let exact = |x: f64| 3.0 * PI.powi(4) * (PI * x).cos().powi(2) * (PI * x).sin();
    let peak = 3.0 * PI.powi(4) * 2.0 / (3.0 * 3f64.sqrt());
    for (node, vi) in mesh.nodes().iter().zip(v.values()) {
        if (0.1..=0.9).contains(&node[0]) {
            assert!((vi - exact(node[0])).abs() < 1e-3 * peak, "x = {}: {vi} vs {}", node[0], exact(node[0]));
        }
    }
}

#[test]
fn residual_v_of_zero_is_zero() {
    let mesh = interval(32);
    let u = FeFunction::new(Arc::clone(&mesh), vec![0.0; mesh.n_nodes()]).unwrap();
    assert!(residual_v(&u, 3.0, 0.0).unwrap().values().iter().all(|&v| v == 0.0));
}
