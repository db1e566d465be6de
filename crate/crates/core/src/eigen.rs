//! First Dirichlet eigenpair of the discrete p-Laplacian.
//!
//! Minimizes the Rayleigh quotient `‖∇u‖_p^p / ‖u‖_p^p` by a preconditioned
//! descent: the direction solves the lagged-diffusivity system
//! `K(u) d = -(A(u) - R B(u))`, which for `p = 2` is exactly one step of
//! inverse iteration. Steps are Armijo-damped, clamped to keep every interior
//! value positive (the first eigenfunction is the only positive one), and
//! followed by renormalization to `‖u‖_p = 1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::check_p;
use crate::linalg::InteriorDofs;
use crate::mesh::{apply_ap, load_vector, norm_lq, norm_w1p, weighted_stiffness, FeFunction, Mesh};
use crate::quadrature::KahanSum;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 2000;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda1: f64,
    /// Positive, zero-trace, `‖φ₁‖_p = 1`.
    pub phi1: FeFunction,
    pub p: f64,
    /// Dual norm of `A(φ₁) - λ₁ B(φ₁)` at the last iterate.
    pub residual: f64,
    pub iterations: usize,
    /// Quotient after every accepted step.
    pub history: Vec<f64>,
}

/// Headline numbers of an eigenpair, for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub p: f64,
    pub h: f64,
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl Eigenpair {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary {
            p: self.p,
            h: self.phi1.mesh().h(),
            lambda1: self.lambda1,
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

/// `‖∇u‖_p^p / ‖u‖_p^p`.
pub fn rayleigh_quotient(u: &FeFunction, p: f64) -> Result<f64> {
    let num = norm_w1p(u, p)?.powf(p);
    let den = norm_lq(u, p)?.powf(p);
    if den == 0.0 {
        return Err(Error::Precondition("Rayleigh quotient of the zero function".into()));
    }
    Ok(num / den)
}

/// `∫ ((|∇u|² + η²)^{p/2} - η^p)`, whose gradient is `p A_η(u)`.
fn smoothed_dirichlet(u: &FeFunction, p: f64, eta: f64) -> f64 {
    let base = eta.powf(p);
    let mut acc = KahanSum::default();
    for el in u.mesh().elements() {
        let g = u.gradient(el);
        acc.add(el.measure * ((g[0] * g[0] + g[1] * g[1] + eta * eta).powf(0.5 * p) - base));
    }
    acc.value()
}

fn lp_power(u: &FeFunction, p: f64) -> f64 {
    norm_lq(u, p).expect("p > 1").powf(p)
}

fn normalized(u: &FeFunction, p: f64) -> FeFunction {
    u.scaled(1.0 / norm_lq(u, p).expect("p > 1"))
}

fn smoothed_quotient(u: &FeFunction, p: f64, eta: f64) -> f64 {
    smoothed_dirichlet(u, p, eta) / lp_power(u, p)
}

/// First eigenpair by Rayleigh-quotient descent started from the distance
/// interpolant; stops when the relative change of the quotient drops below
/// `tol`.
pub fn first_eigenpair(mesh: &Arc<Mesh>, p: f64, tol: f64) -> Result<Eigenpair> {
    check_p(p)?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: format!("expected tol in (0, 1), got {tol}") });
    }
    let dofs = InteriorDofs::new(mesh);
    if dofs.is_empty() {
        return Err(Error::Mesh("no interior nodes".into()));
    }
    let eta = tol.sqrt();
    let mut u = normalized(&FeFunction::distance(Arc::clone(mesh)), p);
    let mut quotient = smoothed_quotient(&u, p, eta);
    let mut history = vec![quotient];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let a = apply_ap(&u, p, eta)?;
        let b = load_vector(&u, |_, _, v| v.abs().powf(p - 2.0) * v);
        let r: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - quotient * y).collect();
        let op = dofs.factor(mesh, &weighted_stiffness(&u, p, eta)?, None)?;
        let d: Vec<f64> = op.solve(&dofs, &r).into_iter().map(|x| -x).collect();
        let rk: f64 = r.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>();
        residual = (-rk).max(0.0).sqrt();
        // Directional derivative of the quotient at ‖u‖_p = 1: p (A - R B)·d.
        let slope = p * rk;
        if slope >= 0.0 {
            break;
        }

        let mut t: f64 = 1.0;
        for i in mesh.interior_nodes() {
            if d[i] < 0.0 {
                t = t.min(-0.9 * u.values()[i] / d[i]);
            }
        }
        let mut accepted = None;
        while t > 1e-14 {
            let trial = u.stepped(t, &d);
            let q = smoothed_quotient(&trial, p, eta);
            if q <= quotient + ARMIJO * t * slope {
                accepted = Some((normalized(&trial, p), q));
                break;
            }
            t *= 0.5;
        }
        let Some((next, q)) = accepted else { break };
        let change = (quotient - q).abs() / q;
        u = next;
        quotient = q;
        history.push(q);
        if change < tol {
            break;
        }
    }

    for i in mesh.interior_nodes() {
        if u.values()[i] <= 0.0 {
            return Err(Error::ModeCapture { node: i, value: u.values()[i] });
        }
    }
    let lambda1 = rayleigh_quotient(&u, p)?;
    Ok(Eigenpair { lambda1, phi1: u, p, residual, iterations, history })
}

/// Closed-form first eigenvalue of `-(|u'|^{p-2} u')' = λ |u|^{p-2} u` on an
/// interval of length `len`: `(π_p / len)^p` with
/// `π_p = 2 π (p - 1)^{1/p} / (p sin(π/p))`.
pub fn interval_eigenvalue(p: f64, len: f64) -> f64 {
    use std::f64::consts::PI;
    let pi_p = 2.0 * PI * (p - 1.0).powf(1.0 / p) / (p * (PI / p).sin());
    (pi_p / len).powf(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Domain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI2: f64 = std::f64::consts::PI * std::f64::consts::PI;

    fn interval(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
    }

    #[test]
    fn linear_interval() {
        let e = first_eigenpair(&interval(128), 2.0, DEFAULT_TOL).unwrap();
        assert!((e.lambda1 - PI2).abs() < 1e-3 * PI2, "{}", e.lambda1);
        assert!((norm_lq(&e.phi1, 2.0).unwrap() - 1.0).abs() < 1e-8);
        // φ₁ = √2 sin(πx).
        let peak = e.phi1.values().iter().cloned().fold(0.0, f64::max);
        assert!((peak - 2f64.sqrt()).abs() < 1e-3, "{peak}");
    }

    #[test]
    fn nonlinear_interval_matches_closed_form() {
        for p in [1.5, 3.0] {
            let e = first_eigenpair(&interval(256), p, DEFAULT_TOL).unwrap();
            let exact = interval_eigenvalue(p, 1.0);
            assert!((e.lambda1 - exact).abs() < 1e-2 * exact, "p = {p}: {} vs {exact}", e.lambda1);
            assert!((norm_lq(&e.phi1, p).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_reduces_to_pi_squared() {
        assert!((interval_eigenvalue(2.0, 1.0) - PI2).abs() < 1e-12);
    }

    #[test]
    fn quotient_history_is_monotone() {
        let e = first_eigenpair(&interval(64), 1.5, DEFAULT_TOL).unwrap();
        for w in e.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14), "{w:?}");
        }
    }

    #[test]
    fn refinement_approaches_from_above() {
        let l: Vec<f64> =
            [16, 32, 64].iter().map(|&n| first_eigenpair(&interval(n), 2.0, DEFAULT_TOL).unwrap().lambda1).collect();
        assert!(l[0] > l[1] && l[1] > l[2] && l[2] > PI2, "{l:?}");
    }

    #[test]
    fn scaling_invariance_and_poincare() {
        let mesh = Arc::new(build_mesh(Domain::UnitSquare, 8).unwrap());
        let e = first_eigenpair(&mesh, 2.5, DEFAULT_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let values = (0..mesh.n_nodes())
                .map(|i| if mesh.is_boundary(i) { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect();
            let u = FeFunction::new(Arc::clone(&mesh), values).unwrap();
            let q = rayleigh_quotient(&u, 2.5).unwrap();
            let c = rng.random_range(-5.0..5.0);
            assert!((rayleigh_quotient(&u.scaled(c), 2.5).unwrap() - q).abs() <= 1e-12 * q);
            assert!(q >= e.lambda1 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(first_eigenpair(&interval(8), 1.0, 1e-9).is_err());
        assert!(first_eigenpair(&interval(8), 2.0, 0.0).is_err());
    }
}
