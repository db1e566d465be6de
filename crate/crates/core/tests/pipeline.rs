//! End-to-end properties of solve + verify under repetition and refinement.

use std::sync::Arc;

use plap_core::mesh::{build_mesh, norm_linf, Domain, Mesh};
use plap_core::reaction::{Preset, Reaction};
use plap_core::solver::{solve, Schedule, Solution, SolveOptions};
use plap_core::verify::{check_strong_solution, check_vbound, verify, VerifyInputs, VerifyOptions};

fn interval(n: usize) -> Arc<Mesh> {
    Arc::new(build_mesh(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
}

fn singular() -> Reaction {
    Preset::StaircaseSingular { gamma: 0.5, lambda: 0.0 }.build(2.0).unwrap()
}

fn run(n: usize, r: &Reaction) -> Solution {
    let opts = SolveOptions { schedule: Schedule { n_start: 2, n_end: 32, geometric: true }, ..Default::default() };
    solve(&interval(n), r, 2.0, &opts).unwrap()
}

fn report_json(sol: &Solution, r: &Reaction) -> String {
    let inputs = VerifyInputs {
        r,
        p: 2.0,
        u: &sol.result.limit,
        v: &sol.result.residual_field,
        ubar: Some(&sol.sub.ubar),
        growth: Some(&sol.growth),
        w1p_norms: Some(&sol.result.w1p_norms),
    };
    verify(&inputs, &VerifyOptions::default()).to_json()
}

fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn repeated_runs_are_bit_identical() {
    let r = singular();
    let (a, b) = (run(64, &r), run(64, &r));
    assert_eq!(bits(a.result.limit.values()), bits(b.result.limit.values()));
    assert_eq!(bits(a.result.residual_field.values()), bits(b.result.residual_field.values()));
    assert_eq!(a.result.summary(), b.result.summary());
    assert_eq!(report_json(&a, &r), report_json(&b, &r));
}

#[test]
fn sup_norm_is_refinement_stable() {
    let r = singular();
    let sups: Vec<f64> = [128, 256, 512].iter().map(|&n| norm_linf(&run(n, &r).result.limit)).collect();
    for w in sups.windows(2) {
        assert!((w[1] - w[0]).abs() <= 0.1 * w[1], "{sups:?}");
    }
}

#[test]
fn weighted_v_bound_is_refinement_stable() {
    let r = singular();
    let c: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| {
            let sol = run(n, &r);
            check_vbound(&sol.result.limit, &sol.result.residual_field, 0.5).unwrap().c_hat
        })
        .collect();
    assert!(c.iter().all(|x| x.is_finite() && *x > 0.0), "{c:?}");
    for w in c.windows(2) {
        assert!((w[1] - w[0]).abs() <= 0.25 * w[1], "{c:?}");
    }
}

#[test]
fn weighted_v_bound_of_the_torsion_problem() {
    // v ≈ 1, so the bound is close to max d^γ = (1/2)^γ.
    let r = Preset::Constant { value: 1.0 }.build(2.0).unwrap();
    let sol = run(128, &r);
    let c = check_vbound(&sol.result.limit, &sol.result.residual_field, 0.5).unwrap().c_hat;
    assert!((c - 0.5f64.sqrt()).abs() < 1e-2, "{c}");
}

#[test]
fn far_residual_reported_for_the_singular_preset() {
    let r = singular();
    let sol = run(256, &r);
    let s = check_strong_solution(&sol.result.limit, &sol.result.residual_field, &r, 1e-2).unwrap();
    let far = s.far.expect("points away from jump levels exist");
    assert!(far.p99.is_finite() && far.p50 <= far.p99 && far.p99 <= far.max);
    assert!(s.near_fraction > 0.0 && s.near_fraction < 1.0);
}

#[test]
fn far_residual_decreases_under_refinement() {
    let r = singular();
    let p99: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| {
            // Joint refinement: with ε fixed the O(ε) mollification error dominates.
            let opts =
                SolveOptions { schedule: Schedule { n_start: 2, n_end: n, geometric: true }, ..Default::default() };
            let sol = solve(&interval(n), &r, 2.0, &opts).unwrap();
            check_strong_solution(&sol.result.limit, &sol.result.residual_field, &r, 1e-2).unwrap().far.unwrap().p99
        })
        .collect();
    // Once ε < band the far residual sits at round-off; compare above that floor.
    const FLOOR: f64 = 1e-9;
    assert!(p99.windows(2).all(|w| w[1] < w[0] || w[1].max(w[0]) < FLOOR), "{p99:?}");
    assert!(p99[2] < p99[0], "{p99:?}");
}
