//! The regularized energy `J_ε` and its minimization.

use std::sync::Arc;

use super::Subsolution;
use crate::linalg::InteriorDofs;
use crate::mesh::{apply_ap, weighted_stiffness, FeFunction, Mesh};
use crate::quadrature::KahanSum;
use crate::reaction::{window_unchecked, Reaction};
use crate::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
pub const MAX_ITERATIONS: usize = 500;

/// `J_ε(u) = (1/p) ∫ ((|∇u|² + η²)^{p/2} - η^p) - ∫ G_ε(ū(x), u(x)) dx`
/// with per-quadrature-point caches of `ū` and `C(0)`.
pub struct Regularized<'a> {
    r: &'a Reaction,
    mesh: Arc<Mesh>,
    p: f64,
    eps: f64,
    eta: f64,
    nq: usize,
    ubar_q: Vec<f64>,
    c0: Vec<f64>,
}

impl<'a> Regularized<'a> {
    pub fn new(r: &'a Reaction, sub: &Subsolution, p: f64, eps: f64, eta: f64) -> Result<Self> {
        crate::error::check_p(p)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("expected eps in (0, 1), got {eps}") });
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter { name: "eta", reason: format!("expected eta >= 0, got {eta}") });
        }
        let mesh = Arc::clone(sub.ubar.mesh());
        let rule = mesh.rule();
        let nq = rule.points.len();
        let mut ubar_q = Vec::with_capacity(mesh.elements().len() * nq);
        for el in mesh.elements() {
            for bary in &rule.points {
                ubar_q.push(sub.ubar.value_at(el, bary));
            }
        }
        let c0 = ubar_q.iter().map(|&ub| if ub > 0.0 { window_unchecked(r, ub, 0.0, eps).c } else { 0.0 }).collect();
        Ok(Regularized { r, mesh, p, eps, eta, nq, ubar_q, c0 })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn check_mesh(&self, u: &FeFunction) {
        assert!(Arc::ptr_eq(u.mesh(), &self.mesh), "function lives on a different mesh");
    }

    /// `(1/p) ∫ ((|∇u|² + η²)^{p/2} - η^p)`.
    pub fn dirichlet(&self, u: &FeFunction) -> f64 {
        let base = self.eta.powf(self.p);
        let mut acc = KahanSum::default();
        for el in self.mesh.elements() {
            let g = u.gradient(el);
            acc.add(el.measure * ((g[0] * g[0] + g[1] * g[1] + self.eta * self.eta).powf(0.5 * self.p) - base));
        }
        acc.value() / self.p
    }

    /// `∫ G_ε(ū, u)`.
    pub fn potential(&self, u: &FeFunction) -> f64 {
        self.check_mesh(u);
        let rule = self.mesh.rule();
        let mut acc = KahanSum::default();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (q, (bary, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let k = e * self.nq + q;
                let ub = self.ubar_q[k];
                if ub <= 0.0 {
                    continue;
                }
                let s = u.value_at(el, bary);
                let big_g = window_unchecked(self.r, ub, s, self.eps).c - self.c0[k];
                acc.add(el.measure * w * big_g);
            }
        }
        acc.value()
    }

    pub fn energy(&self, u: &FeFunction) -> f64 {
        self.dirichlet(u) - self.potential(u)
    }

    /// Euler–Lagrange residual `A_η(u) - ∫ g_ε(ū, u) ψ_i` and the lumped
    /// convex part `∫ max(-∂g_ε, 0) ψ_i` of the reaction Hessian.
    pub fn residual(&self, u: &FeFunction) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_mesh(u);
        let mut res = apply_ap(u, self.p, self.eta)?;
        let mut diag = vec![0.0; res.len()];
        let dim = self.mesh.dim();
        let rule = self.mesh.rule();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (q, (bary, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let ub = self.ubar_q[e * self.nq + q];
                if ub <= 0.0 {
                    continue;
                }
                let win = window_unchecked(self.r, ub, u.value_at(el, bary), self.eps);
                let mw = el.measure * w;
                for (a, &v) in el.vertices(dim).iter().enumerate() {
                    res[v] -= mw * win.g * bary[a];
                    diag[v] += mw * (-win.dg).max(0.0) * bary[a];
                }
            }
        }
        Ok((res, diag))
    }

    /// Load vector `∫ g_ε(ū, u) ψ_i`.
    pub fn load(&self, u: &FeFunction) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.n_nodes()];
        let dim = self.mesh.dim();
        let rule = self.mesh.rule();
        for (e, el) in self.mesh.elements().iter().enumerate() {
            for (q, (bary, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let ub = self.ubar_q[e * self.nq + q];
                if ub <= 0.0 {
                    continue;
                }
                let g = window_unchecked(self.r, ub, u.value_at(el, bary), self.eps).g;
                for (a, &v) in el.vertices(dim).iter().enumerate() {
                    out[v] += el.measure * w * g * bary[a];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub u: FeFunction,
    pub iterations: usize,
    /// `J_ε` at the start and after every accepted step.
    pub energy_trace: Vec<f64>,
    /// Dual norm `sqrt(rᵀ K⁻¹ r)` of the Euler–Lagrange residual at exit.
    pub residual: f64,
    /// Stopped because the predicted decrease fell below energy round-off.
    pub roundoff_limited: bool,
}

/// Frozen diffusivities `w_e = (|∇u|² + η²)^{(p-2)/2}` scaled by
/// `max(1, 1 + (p - 2)|∇u|²/(|∇u|² + η²))`, the largest eigenvalue factor of
/// the Hessian of the smoothed p-Dirichlet energy, so the linearization
/// majorizes the curvature for `p > 2` as it already does for `p < 2`.
fn majorizing_weights(u: &FeFunction, p: f64, eta: f64) -> Result<Vec<f64>> {
    let mut w = weighted_stiffness(u, p, eta)?;
    if p > 2.0 {
        for (we, el) in w.iter_mut().zip(u.mesh().elements()) {
            let g = u.gradient(el);
            let g2 = g[0] * g[0] + g[1] * g[1];
            if g2 > 0.0 {
                *we *= 1.0 + (p - 2.0) * g2 / (g2 + eta * eta);
            }
        }
    }
    Ok(w)
}

/// Damped lagged-diffusivity descent on `J_ε` from `init`; stops when the
/// dual norm of the Euler–Lagrange residual drops below `tol`.
pub fn minimize(problem: &Regularized<'_>, init: &FeFunction, tol: f64) -> Result<MinimizeOutcome> {
    if !init.is_zero_trace() {
        return Err(Error::Precondition("initial guess must vanish on the boundary".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: format!("expected tol > 0, got {tol}") });
    }
    problem.check_mesh(init);
    let mesh = Arc::clone(&problem.mesh);
    let dofs = InteriorDofs::new(&mesh);
    let mut u = init.clone();
    let mut energy = problem.energy(&u);
    let mut trace = vec![energy];
    let mut iterations = 0;
    loop {
        let (res, diag) = problem.residual(&u)?;
        let weights = majorizing_weights(&u, problem.p, problem.eta)?;
        let op = dofs.factor(&mesh, &weights, Some(&diag))?;
        let d: Vec<f64> = op.solve(&dofs, &res).into_iter().map(|x| -x).collect();
        let slope: f64 = res.iter().zip(&d).map(|(r, d)| r * d).sum();
        let residual = (-slope).max(0.0).sqrt();
        if residual < tol {
            return Ok(MinimizeOutcome { u, iterations, energy_trace: trace, residual, roundoff_limited: false });
        }
        // Below this the Armijo comparison is dominated by rounding in J_ε.
        let noise = 64.0 * f64::EPSILON * (problem.dirichlet(&u).abs() + problem.potential(&u).abs() + 1e-300);
        if -slope <= noise {
            return Ok(MinimizeOutcome { u, iterations, energy_trace: trace, residual, roundoff_limited: true });
        }
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NoConvergence(format!(
                "J_eps minimization at eps = {} stopped after {iterations} iterations with residual {residual:e}",
                problem.eps
            )));
        }
        iterations += 1;
        let mut t = 1.0;
        let accepted = loop {
            let trial = u.stepped(t, &d);
            let e = problem.energy(&trial);
            if e < energy && e <= energy + ARMIJO * t * slope {
                break Some((trial, e));
            }
            t *= 0.5;
            if t < MIN_STEP || -t * slope <= noise {
                break None;
            }
        };
        let Some((next, e)) = accepted else {
            if -t * slope <= noise && t >= MIN_STEP {
                log::debug!("eps = {}: round-off limited at residual {residual:e} (step {t:e})", problem.eps);
                return Ok(MinimizeOutcome {
                    u,
                    iterations: iterations - 1,
                    energy_trace: trace,
                    residual,
                    roundoff_limited: true,
                });
            }
            return Err(Error::Stagnation { eps: problem.eps, iterations, residual, energy_trace: trace });
        };
        if !(e < energy) {
            return Err(Error::EnergyIncrease { eps: problem.eps, before: energy, after: e });
        }
        u = next;
        energy = e;
        trace.push(e);
    }
}
