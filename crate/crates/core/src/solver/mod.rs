//! Sub-solution, regularized minimization and the `ε → 0` continuation.

mod energy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use energy::{minimize, MinimizeOutcome, Regularized, MAX_ITERATIONS};

use crate::eigen::Eigenpair;
use crate::mesh::{apply_ap, graded_integrate, load_vector, norm_linf, norm_lq, norm_w1p, FeFunction, Mesh};
use crate::quadrature::KahanSum;
use crate::reaction::{GrowthConstants, HypothesisReport, Reaction};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_CAUCHY_TOL: f64 = 1e-5;
/// Halvings of `k` tried before giving up on the sub-solution.
const MAX_HALVINGS: usize = 20;
/// Relative slack allowed in the discrete sub-solution inequality.
const SUBSOLUTION_SLACK: f64 = 1e-8;

/// `ū = k φ₁` together with the evidence that it is a weak sub-solution.
#[derive(Debug, Clone)]
pub struct Subsolution {
    pub ubar: FeFunction,
    pub k: f64,
    pub delta: f64,
    /// Number of times `k` was halved after the first candidate.
    pub halvings: usize,
    /// `min_i (F_i - A_i) / max(|A_i|, |F_i|)` over interior nodes, where
    /// `A = A(ū)` and `F = ∫ f(ū) ψ_i`.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionSummary {
    pub k: f64,
    pub delta: f64,
    pub halvings: usize,
    pub margin: f64,
    pub sup: f64,
}

impl Subsolution {
    pub fn summary(&self) -> SubsolutionSummary {
        SubsolutionSummary {
            k: self.k,
            delta: self.delta,
            halvings: self.halvings,
            margin: self.margin,
            sup: norm_linf(&self.ubar),
        }
    }
}

/// Relative sub-solution slack of `ū` (see [`Subsolution::margin`]).
pub fn subsolution_margin(r: &Reaction, ubar: &FeFunction, p: f64) -> Result<f64> {
    let a = apply_ap(ubar, p, 0.0)?;
    let f = load_vector(ubar, |_, _, v| if v > 0.0 { r.value(v) } else { 0.0 });
    let mesh = ubar.mesh();
    Ok(mesh
        .interior_nodes()
        .map(|i| {
            let scale = a[i].abs().max(f[i].abs());
            if scale == 0.0 {
                0.0
            } else {
                (f[i] - a[i]) / scale
            }
        })
        .fold(f64::INFINITY, f64::min))
}

/// Takes the largest `k` with `‖k φ₁‖_∞ < δ/2` and halves it until the
/// discrete inequality `A(k φ₁) ≤ ∫ f(k φ₁) ψ_i` holds at every interior
/// node.
pub fn build_subsolution(eig: &Eigenpair, r: &Reaction, report: &HypothesisReport) -> Result<Subsolution> {
    if !report.holds_iii {
        return Err(Error::Precondition("hypothesis (iii) does not hold".into()));
    }
    let delta =
        report.delta_witness.ok_or_else(|| Error::Precondition("no witness for hypothesis (iii)".into()))?.delta;
    if report.p != eig.p {
        return Err(Error::Precondition(format!("report is for p = {}, eigenpair for p = {}", report.p, eig.p)));
    }
    let sup = norm_linf(&eig.phi1);
    let mut k = 0.5 * delta / sup * (1.0 - 1e-6);
    let mut worst = f64::NEG_INFINITY;
    for halvings in 0..=MAX_HALVINGS {
        let ubar = eig.phi1.scaled(k);
        let margin = subsolution_margin(r, &ubar, eig.p)?;
        if margin >= -SUBSOLUTION_SLACK {
            return Ok(Subsolution { ubar, k, delta, halvings, margin });
        }
        worst = worst.max(margin);
        k *= 0.5;
    }
    Err(Error::Subsolution(format!(
        "inequality fails after {MAX_HALVINGS} halvings of k (best relative margin {worst:e})"
    )))
}

/// Continuation parameters `ε_n = 1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n_start: usize,
    pub n_end: usize,
    /// Doubling `n` instead of stepping by one.
    pub geometric: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { n_start: 2, n_end: 64, geometric: true }
    }
}

impl Schedule {
    pub fn epsilons(&self) -> Result<Vec<f64>> {
        if self.n_start < 2 || self.n_end < self.n_start {
            return Err(Error::InvalidParameter {
                name: "schedule",
                reason: format!("expected 2 <= n_start <= n_end, got {}..{}", self.n_start, self.n_end),
            });
        }
        let mut ns = Vec::new();
        let mut n = self.n_start;
        while n <= self.n_end {
            ns.push(n);
            n = if self.geometric { 2 * n } else { n + 1 };
        }
        if *ns.last().expect("non-empty") != self.n_end {
            ns.push(self.n_end);
        }
        Ok(ns.into_iter().map(|n| 1.0 / n as f64).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Dual-norm residual tolerance of each minimization.
    pub tol: f64,
    /// Stop once `‖u_n - u_{n-1}‖_{1,p} < cauchy_tol ‖u_n‖_{1,p}`.
    pub cauchy_tol: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { tol: DEFAULT_TOL, cauchy_tol: DEFAULT_CAUCHY_TOL }
    }
}

/// Energy identity `‖u‖^p = ∫ g_ε(u) u` bounded through the growth
/// constants and Poincaré:
/// `‖u‖^p ≤ (c₂/λ₁) ‖u‖^p + c₁ ∫ ū^{-γ} |u| + c₃ ∫ |u|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprioriCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub eps: f64,
    pub eta: f64,
    pub iterations: usize,
    pub energy_trace: Vec<f64>,
    pub residual: f64,
    pub roundoff_limited: bool,
    pub w1p: f64,
    /// `‖u_n - u_{n-1}‖_{1,p}`.
    pub cauchy_increment: Option<f64>,
    /// `min_i (u_i - ū_i)`.
    pub ordering_margin: f64,
    pub apriori: Option<AprioriCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VNorm {
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub epsilons: Vec<f64>,
    pub solutions: Vec<FeFunction>,
    pub w1p_norms: Vec<f64>,
    /// Last iterate.
    pub limit: FeFunction,
    /// `v = -Δ_p u` of the limit, see [`residual_v`].
    pub residual_field: FeFunction,
    pub steps: Vec<StepDiagnostics>,
    /// Uniform bound `L` on `‖u_ε‖_{1,p}` implied by the growth constants.
    pub l_bound: Option<f64>,
    pub stopped_early: bool,
    pub v_norm: Option<VNorm>,
}

/// Serializable digest of a [`ContinuationResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSummary {
    pub epsilons: Vec<f64>,
    pub w1p_norms: Vec<f64>,
    pub steps: Vec<StepDiagnostics>,
    pub l_bound: Option<f64>,
    pub stopped_early: bool,
    pub v_norm: Option<VNorm>,
    pub limit_sup: f64,
}

impl ContinuationResult {
    pub fn summary(&self) -> ContinuationSummary {
        ContinuationSummary {
            epsilons: self.epsilons.clone(),
            w1p_norms: self.w1p_norms.clone(),
            steps: self.steps.clone(),
            l_bound: self.l_bound,
            stopped_early: self.stopped_early,
            v_norm: self.v_norm,
            limit_sup: norm_linf(&self.limit),
        }
    }

    pub fn cauchy_increments(&self) -> Vec<f64> {
        self.steps.iter().filter_map(|s| s.cauchy_increment).collect()
    }
}

fn difference(a: &FeFunction, b: &FeFunction) -> FeFunction {
    a.with_values(a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect())
}

fn apriori_check(gc: &GrowthConstants, sub: &Subsolution, u: &FeFunction, w1p: f64) -> AprioriCheck {
    let mesh = u.mesh();
    let rule = mesh.rule();
    let (mut hardy, mut l1) = (KahanSum::default(), KahanSum::default());
    for el in mesh.elements() {
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let ub = sub.ubar.value_at(el, bary);
            let uv = u.value_at(el, bary).abs();
            if ub > 0.0 {
                hardy.add(el.measure * w * ub.powf(-gc.gamma) * uv);
            }
            l1.add(el.measure * w * uv);
        }
    }
    let lhs = w1p.powf(gc.p);
    let rhs = gc.c2 / gc.lambda1 * lhs + gc.c1 * hardy.value() + gc.c3 * l1.value();
    AprioriCheck { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-6) }
}

/// `L` from `(1 - c₂/λ₁) y^p ≤ C y` with
/// `C = c₁ l^{-γ} (p/(p-1)) ‖d^{1-γ}‖_{p'} + c₃ |Ω|^{1/p'} λ₁^{-1/p}`,
/// where `ū ≥ l d` at the nodes and the Hardy constant is `p/(p-1)`.
fn l_bound(gc: &GrowthConstants, sub: &Subsolution) -> f64 {
    let mesh = sub.ubar.mesh();
    let (p, gamma) = (gc.p, gc.gamma);
    let pp = p / (p - 1.0);
    let l =
        mesh.interior_nodes().map(|i| sub.ubar.values()[i] / mesh.nodal_distance()[i]).fold(f64::INFINITY, f64::min);
    let dpow = graded_integrate(mesh, 4, &|_, _, x| mesh.distance_at(x).powf((1.0 - gamma) * pp)).powf(1.0 / pp);
    let volume: f64 = mesh.elements().iter().map(|e| e.measure).sum();
    let c = gc.c1 * l.powf(-gamma) * pp * dpow + gc.c3 * volume.powf(1.0 / pp) * gc.lambda1.powf(-1.0 / p);
    (c / (1.0 - gc.c2 / gc.lambda1)).powf(1.0 / (p - 1.0))
}

/// Minimizes `J_ε` along the schedule, warm-starting each step from the
/// previous minimizer (the first from `ū`), with `η = ε`.
pub fn continuation(
    r: &Reaction,
    sub: &Subsolution,
    p: f64,
    schedule: &Schedule,
    growth: Option<&GrowthConstants>,
    opts: &ContinuationOptions,
) -> Result<ContinuationResult> {
    crate::error::check_p(p)?;
    let epsilons = schedule.epsilons()?;
    if let Some(gc) = growth {
        if gc.p != p || gc.ubar_sup < norm_linf(&sub.ubar) {
            return Err(Error::Precondition("growth constants do not match this problem".into()));
        }
    }
    let mut solutions: Vec<FeFunction> = Vec::new();
    let mut w1p_norms = Vec::new();
    let mut steps = Vec::new();
    let mut used = Vec::new();
    let mut stopped_early = false;
    for &eps in &epsilons {
        let problem = Regularized::new(r, sub, p, eps, eps)?;
        let init = solutions.last().unwrap_or(&sub.ubar);
        let out = minimize(&problem, init, opts.tol)?;
        let w1p = norm_w1p(&out.u, p)?;
        let cauchy_increment = match solutions.last() {
            Some(prev) => Some(norm_w1p(&difference(&out.u, prev), p)?),
            None => None,
        };
        let ordering_margin = sub
            .ubar
            .mesh()
            .interior_nodes()
            .map(|i| out.u.values()[i] - sub.ubar.values()[i])
            .fold(f64::INFINITY, f64::min);
        let apriori = growth.map(|gc| apriori_check(gc, sub, &out.u, w1p));
        log::debug!("eps = {eps}: {} iterations, residual {:e}, |u|_1p = {w1p}", out.iterations, out.residual);
        steps.push(StepDiagnostics {
            eps,
            eta: eps,
            iterations: out.iterations,
            energy_trace: out.energy_trace,
            residual: out.residual,
            roundoff_limited: out.roundoff_limited,
            w1p,
            cauchy_increment,
            ordering_margin,
            apriori,
        });
        used.push(eps);
        w1p_norms.push(w1p);
        solutions.push(out.u);
        if let Some(inc) = cauchy_increment {
            if inc < opts.cauchy_tol * w1p {
                stopped_early = used.len() < epsilons.len();
                break;
            }
        }
    }
    let limit = solutions.last().expect("at least one step").clone();
    let residual_field = residual_v(&limit, p, *used.last().expect("non-empty"))?;
    let v_norm = v_exponent(r.gamma(), p, limit.mesh().dim())
        .map(|q| norm_lq(&residual_field, q).map(|value| VNorm { q, value }))
        .transpose()?;
    Ok(ContinuationResult {
        epsilons: used,
        solutions,
        w1p_norms,
        limit,
        residual_field,
        steps,
        l_bound: growth.map(|gc| l_bound(gc, sub)),
        stopped_early,
        v_norm,
    })
}

/// `q = min{1/γ, p*/(p-1)}/2 + 1/2`, midway between 1 and the largest
/// integrability exponent available for `-Δ_p u`; `None` when both are
/// infinite.
pub fn v_exponent(gamma: Option<f64>, p: f64, dim: usize) -> Option<f64> {
    let n = dim as f64;
    let sobolev = if p < n { n * p / (n - p) / (p - 1.0) } else { f64::INFINITY };
    let top = gamma.map_or(f64::INFINITY, |g| 1.0 / g).min(sobolev);
    top.is_finite().then_some(0.5 * top + 0.5)
}

/// `v = -Δ_{p,η} u` recovered nodally with the lumped mass:
/// `v_i = A_η(u)_i / m_i` at interior nodes; each boundary node takes the
/// mean of its interior neighbours (or zero if it has none).
pub fn residual_v(u: &FeFunction, p: f64, eta: f64) -> Result<FeFunction> {
    let mesh: &Arc<Mesh> = u.mesh();
    let a = apply_ap(u, p, eta)?;
    let mass = mesh.lumped_mass();
    let mut v: Vec<f64> = (0..mesh.n_nodes()).map(|i| if mesh.is_boundary(i) { 0.0 } else { a[i] / mass[i] }).collect();
    for (i, nb) in mesh.neighbours().iter().enumerate() {
        if !mesh.is_boundary(i) {
            continue;
        }
        let inner: Vec<f64> = nb.iter().filter(|&&j| !mesh.is_boundary(j)).map(|&j| v[j]).collect();
        if !inner.is_empty() {
            v[i] = inner.iter().sum::<f64>() / inner.len() as f64;
        }
    }
    FeFunction::new(Arc::clone(mesh), v)
}

/// The full chain for one `(mesh, p, f)`: eigenpair, hypotheses,
/// sub-solution, growth constants and continuation.
#[derive(Debug, Clone)]
pub struct Solution {
    pub eigen: Eigenpair,
    pub report: HypothesisReport,
    pub sub: Subsolution,
    pub growth: GrowthConstants,
    pub result: ContinuationResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub eigen_tol: f64,
    pub samples_per_decade: usize,
    pub schedule: Schedule,
    pub continuation: ContinuationOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eigen_tol: crate::eigen::DEFAULT_TOL,
            samples_per_decade: crate::reaction::DEFAULT_SAMPLES_PER_DECADE,
            schedule: Schedule::default(),
            continuation: ContinuationOptions::default(),
        }
    }
}

pub fn solve(mesh: &Arc<Mesh>, r: &Reaction, p: f64, opts: &SolveOptions) -> Result<Solution> {
    let eigen = crate::eigen::first_eigenpair(mesh, p, opts.eigen_tol)?;
    let report = crate::reaction::check_hypotheses(r, p, eigen.lambda1, opts.samples_per_decade)?;
    if !report.all_hold() {
        return Err(Error::Precondition(format!("hypotheses fail: {}", failed_hypotheses(&report).join(", "))));
    }
    let sub = build_subsolution(&eigen, r, &report)?;
    let growth = crate::reaction::growth_constants(r, &report, norm_linf(&sub.ubar))?;
    let result = continuation(r, &sub, p, &opts.schedule, Some(&growth), &opts.continuation)?;
    Ok(Solution { eigen, report, sub, growth, result })
}

pub fn failed_hypotheses(report: &HypothesisReport) -> Vec<&'static str> {
    [
        (report.holds_i, "(i)"),
        (report.holds_ii, "(ii)"),
        (report.holds_iii, "(iii)"),
        (report.holds_iv, "(iv)"),
        (report.holds_v, "(v)"),
        (report.holds_vi, "(vi)"),
    ]
    .into_iter()
    .filter(|(h, _)| !h)
    .map(|(_, n)| n)
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::first_eigenpair;
    use crate::mesh::{build_mesh, Domain};
    use crate::reaction::{check_hypotheses, Preset};

    fn interval(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
    }

    fn setup(n: usize, p: f64, preset: Preset) -> (Reaction, Eigenpair, HypothesisReport) {
        let r = preset.build(p).unwrap();
        let eig = first_eigenpair(&interval(n), p, 1e-9).unwrap();
        let report = check_hypotheses(&r, p, eig.lambda1, 64).unwrap();
        (r, eig, report)
    }

    #[test]
    fn constant_reaction_subsolution() {
        let (r, eig, report) = setup(64, 2.0, Preset::Constant { value: 1.0 });
        let sub = build_subsolution(&eig, &r, &report).unwrap();
        let delta = report.delta_witness.unwrap().delta;
        assert!((norm_linf(&sub.ubar) - 0.5 * delta).abs() < 1e-5 * delta);
        assert_eq!(sub.halvings, 0);
        assert!(sub.margin >= 0.0);
    }

    #[test]
    fn energy_vanishes_at_zero() {
        let (r, eig, report) = setup(32, 2.0, Preset::Constant { value: 1.0 });
        let sub = build_subsolution(&eig, &r, &report).unwrap();
        let prob = Regularized::new(&r, &sub, 2.0, 0.1, 0.1).unwrap();
        assert_eq!(prob.energy(&FeFunction::zeros(Arc::clone(eig.phi1.mesh()))), 0.0);
    }

    #[test]
    fn constant_reaction_torsion() {
        // -u'' = 1 on (0, 1): u = x(1 - x)/2, exact at the nodes.
        let (r, eig, report) = setup(64, 2.0, Preset::Constant { value: 1.0 });
        let sub = build_subsolution(&eig, &r, &report).unwrap();
        let prob = Regularized::new(&r, &sub, 2.0, 0.1, 0.1).unwrap();
        let out = minimize(&prob, &sub.ubar, 1e-9).unwrap();
        assert!((norm_linf(&out.u) - 0.125).abs() < 1e-8, "{}", norm_linf(&out.u));
        for w in out.energy_trace.windows(2) {
            assert!(w[1] < w[0]);
        }
        let again = minimize(&prob, &out.u, 1e-7).unwrap();
        assert_eq!(again.iterations, 0);
        let v = residual_v(&out.u, 2.0, 0.1).unwrap();
        assert!(v.values().iter().all(|x| (x - 1.0).abs() < 1e-6));
    }

    #[test]
    fn rejects_nonzero_trace_guess() {
        let (r, eig, report) = setup(16, 2.0, Preset::Constant { value: 1.0 });
        let sub = build_subsolution(&eig, &r, &report).unwrap();
        let prob = Regularized::new(&r, &sub, 2.0, 0.1, 0.1).unwrap();
        let bad = FeFunction::new(Arc::clone(eig.phi1.mesh()), vec![1.0; 17]).unwrap();
        assert!(matches!(minimize(&prob, &bad, 1e-7), Err(Error::Precondition(_))));
    }

    #[test]
    fn schedules() {
        let g = Schedule { n_start: 2, n_end: 64, geometric: true }.epsilons().unwrap();
        assert_eq!(g, vec![0.5, 0.25, 0.125, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]);
        let a = Schedule { n_start: 3, n_end: 5, geometric: false }.epsilons().unwrap();
        assert_eq!(a, vec![1.0 / 3.0, 0.25, 0.2]);
        assert_eq!(Schedule { n_start: 2, n_end: 5, geometric: true }.epsilons().unwrap().len(), 3);
        assert!(Schedule { n_start: 1, n_end: 5, geometric: true }.epsilons().is_err());
    }

    #[test]
    fn v_exponents() {
        assert_eq!(v_exponent(Some(0.5), 2.0, 1), Some(1.5));
        assert_eq!(v_exponent(None, 2.0, 1), None);
        // p* = 2·1.5/0.5 = 6, p*/(p-1) = 12, 1/γ = 10.
        assert!((v_exponent(Some(0.1), 1.5, 2).unwrap() - 5.5).abs() < 1e-12);
    }

    #[test]
    fn singular_power_continuation() {
        let p = 2.0;
        let (r, eig, report) = setup(128, p, Preset::Power { coef: 1.0, exponent: -0.5 });
        assert!(report.all_hold());
        let sub = build_subsolution(&eig, &r, &report).unwrap();
        let gc = crate::reaction::growth_constants(&r, &report, norm_linf(&sub.ubar)).unwrap();
        let schedule = Schedule { n_start: 2, n_end: 16, geometric: true };
        let res = continuation(&r, &sub, p, &schedule, Some(&gc), &ContinuationOptions::default()).unwrap();
        for s in &res.steps {
            assert!(s.apriori.unwrap().holds, "{:?}", s.apriori);
            assert!(s.ordering_margin > -1e-8);
            assert!(s.w1p <= res.l_bound.unwrap());
        }
        // -u'' = u^{-1/2} peaks near 0.27.
        let m = norm_linf(&res.limit);
        assert!(m > 0.2 && m < 0.3, "{m}");
    }
}
