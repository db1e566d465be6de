//! Discrete certification of the conclusions that are observable on a mesh.
//!
//! Every check is read-only and deterministic for fixed inputs and seed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{graded_integrate, integrate_distance_power, norm_linf, norm_w1p, FeFunction, GradedOptions, Mesh};
use crate::reaction::{window_unchecked, GrowthConstants, Reaction};
use crate::{Error, Result};

/// A check result or the reason it was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Checked<T> {
    Done(T),
    Skipped { reason: String },
}

fn skipped<T>(reason: &str) -> Checked<T> {
    Checked::Skipped { reason: reason.to_string() }
}

impl<T> Checked<T> {
    pub fn done(&self) -> Option<&T> {
        match self {
            Checked::Done(t) => Some(t),
            Checked::Skipped { .. } => None,
        }
    }

    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(t) => Checked::Done(t),
            Err(e) => Checked::Skipped { reason: e.to_string() },
        }
    }
}

/// Quadrature points of elements without boundary vertices, as
/// `(element, barycentric point, weight × measure)`.
fn interior_points(mesh: &Mesh) -> impl Iterator<Item = (&crate::mesh::Element, &[f64; 3], f64)> + '_ {
    let rule = mesh.rule();
    mesh.elements()
        .iter()
        .filter(|el| mesh.is_interior_element(el))
        .flat_map(move |el| rule.points.iter().zip(&rule.weights).map(move |(b, w)| (el, b, w * el.measure)))
}

fn same_mesh(a: &FeFunction, b: &FeFunction) -> Result<()> {
    if Arc::ptr_eq(a.mesh(), b.mesh()) {
        Ok(())
    } else {
        Err(Error::Precondition("functions live on different meshes".into()))
    }
}

fn positive_interior(u: &FeFunction) -> Result<()> {
    let mesh = u.mesh();
    match mesh.interior_nodes().find(|&i| !(u.values()[i] > 0.0)) {
        Some(i) => Err(Error::Precondition(format!("u is not positive at interior node {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclusionPoint {
    pub x: [f64; 2],
    pub u: f64,
    pub v: f64,
    pub lower: f64,
    pub upper: f64,
    /// Distance of `v` outside `[f̲(u), f̄(u)]`, before tolerances.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub fraction: f64,
    pub worst: f64,
    pub worst_at: [f64; 2],
    pub points: usize,
    pub tol: f64,
    pub slack: f64,
    #[serde(skip)]
    pub data: Vec<InclusionPoint>,
}

/// Fraction of interior quadrature points with
/// `f̲(u) - tol - C h ≤ v ≤ f̄(u) + tol + C h`.
pub fn check_inclusion(u: &FeFunction, v: &FeFunction, r: &Reaction, tol: f64, c_slack: f64) -> Result<Inclusion> {
    same_mesh(u, v)?;
    positive_interior(u)?;
    let mesh = u.mesh();
    let slack = c_slack * mesh.h();
    let mut data = Vec::new();
    let (mut ok, mut worst, mut worst_at) = (0usize, 0.0f64, [0.0; 2]);
    for (el, b, _) in interior_points(mesh) {
        let (uq, vq) = (u.value_at(el, b), v.value_at(el, b));
        let (lower, upper) = r.envelopes(uq);
        let excess = (lower - vq).max(vq - upper).max(0.0);
        let x = mesh.point(el, b);
        if excess <= tol + slack {
            ok += 1;
        }
        if excess > worst {
            worst = excess;
            worst_at = x;
        }
        data.push(InclusionPoint { x, u: uq, v: vq, lower, upper, excess });
    }
    if data.is_empty() {
        return Err(Error::Mesh("no interior quadrature points".into()));
    }
    Ok(Inclusion { fraction: ok as f64 / data.len() as f64, worst, worst_at, points: data.len(), tol, slack, data })
}

/// `min_i (u_i - ū_i)`.
pub fn check_subsolution(u: &FeFunction, ubar: &FeFunction) -> Result<f64> {
    same_mesh(u, ubar)?;
    Ok(u.values().iter().zip(ubar.values()).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrowth {
    /// `min u/d` over interior nodes with `d < band`.
    pub l_hat: f64,
    /// `max u/d` over all interior nodes.
    pub ratio_sup: f64,
    pub band: f64,
}

/// Ratios `u/d` near the boundary (band `band_fraction · diam`) and globally.
pub fn check_boundary_growth(u: &FeFunction, band_fraction: f64) -> Result<BoundaryGrowth> {
    if !u.is_zero_trace() {
        return Err(Error::Precondition("u must vanish on the boundary".into()));
    }
    positive_interior(u)?;
    let mesh = u.mesh();
    let band = band_fraction * mesh.diameter();
    let d = mesh.nodal_distance();
    let (mut l_hat, mut ratio_sup) = (f64::INFINITY, 0.0f64);
    for i in mesh.interior_nodes() {
        let ratio = u.values()[i] / d[i];
        ratio_sup = ratio_sup.max(ratio);
        if d[i] < band {
            l_hat = l_hat.min(ratio);
        }
    }
    if !l_hat.is_finite() {
        return Err(Error::Mesh(format!("no interior node within {band} of the boundary")));
    }
    Ok(BoundaryGrowth { l_hat, ratio_sup, band })
}

/// `∫ d^{-γ} |u| / ‖u‖_{1,p}` with boundary-graded quadrature.
pub fn hardy_ratio(u: &FeFunction, p: f64, gamma: f64) -> Result<f64> {
    let mesh = u.mesh();
    let num = graded_integrate(mesh, GradedOptions::default().depth, &|el, b, x| {
        u.value_at(el, b).abs() * mesh.distance_at(x).powf(-gamma)
    });
    let den = norm_w1p(u, p)?;
    if den == 0.0 {
        return Err(Error::Precondition("Hardy ratio of a constant".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hardy {
    pub k_hat: f64,
    /// Ratio of the distance interpolant itself.
    pub distance_ratio: f64,
    pub samples: usize,
}

/// Empirical Hardy constant: the largest ratio over the distance
/// interpolant and `n_samples` random functions
/// `d^a (1 + ½ sin(2π(k·x + φ)))`, `a ∈ [1, 2]`.
pub fn check_hardy(mesh: &Arc<Mesh>, p: f64, gamma: f64, n_samples: usize, seed: u64) -> Result<Hardy> {
    crate::error::check_p(p)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("expected gamma in (0, 1), got {gamma}"),
        });
    }
    let distance_ratio = hardy_ratio(&FeFunction::distance(Arc::clone(mesh)), p, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k_hat = distance_ratio;
    for _ in 0..n_samples {
        let a: f64 = rng.random_range(1.0..2.0);
        let k = [rng.random_range(1..=4) as f64, rng.random_range(0..=4) as f64];
        let phase: f64 = rng.random_range(0.0..1.0);
        let m = Arc::clone(mesh);
        let u = FeFunction::interpolate(Arc::clone(mesh), |x| {
            let modulation = 1.0 + 0.5 * (std::f64::consts::TAU * (k[0] * x[0] + k[1] * x[1] + phase)).sin();
            m.distance_at(x).powf(a) * modulation
        });
        k_hat = k_hat.max(hardy_ratio(&u, p, gamma)?);
    }
    Ok(Hardy { k_hat, distance_ratio, samples: n_samples + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistIntegrability {
    pub gamma: f64,
    pub q: f64,
    pub value: f64,
    pub converged: bool,
    /// `γ q < 1`.
    pub predicted: bool,
}

/// Convergence of `∫ d^{-γq}` under boundary grading, per `(γ, q)`.
pub fn check_dist_integrability(mesh: &Mesh, pairs: &[(f64, f64)]) -> Result<Vec<DistIntegrability>> {
    pairs
        .iter()
        .map(|&(gamma, q)| {
            let r = integrate_distance_power(mesh, gamma, q, GradedOptions::default())?;
            Ok(DistIntegrability { gamma, q, value: r.value, converged: r.converged, predicted: gamma * q < 1.0 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(mut values: Vec<f64>) -> Option<Quantiles> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let at = |q: f64| values[((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1];
        Some(Quantiles { p50: at(0.5), p90: at(0.9), p99: at(0.99), max: *values.last().unwrap() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub points: usize,
    pub measure: f64,
    pub max_abs_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongSolution {
    pub band: f64,
    /// `|v - f(u)|` over points with `dist(u, D_f) ≥ band`.
    pub far: Option<Quantiles>,
    pub far_points: usize,
    /// Measure fraction of points with `dist(u, D_f) < band`.
    pub near_fraction: f64,
    /// NEAR points where also `|∇u| < band`.
    pub plateau: Option<Plateau>,
    pub vacuous: bool,
}

/// Splits interior quadrature points by the distance of `u` to the
/// discontinuity set: the strong residual `|v - f(u)|` away from it, and
/// `max |v|` on the plateau proxy (`u` near a jump level and `|∇u| < band`).
pub fn check_strong_solution(u: &FeFunction, v: &FeFunction, r: &Reaction, band: f64) -> Result<StrongSolution> {
    same_mesh(u, v)?;
    positive_interior(u)?;
    if !(band > 0.0) {
        return Err(Error::InvalidParameter { name: "band", reason: format!("expected band > 0, got {band}") });
    }
    let mesh = u.mesh();
    let (mut far, mut total, mut near) = (Vec::new(), 0.0, 0.0);
    let (mut plateau_points, mut plateau_measure, mut plateau_max) = (0usize, 0.0, 0.0f64);
    for (el, b, w) in interior_points(mesh) {
        let (uq, vq) = (u.value_at(el, b), v.value_at(el, b));
        total += w;
        if r.distance_to_discontinuity(uq) < band {
            near += w;
            let g = u.gradient(el);
            if g[0].hypot(g[1]) < band {
                plateau_points += 1;
                plateau_measure += w;
                plateau_max = plateau_max.max(vq.abs());
            }
        } else {
            far.push((vq - r.value(uq)).abs());
        }
    }
    let far_points = far.len();
    Ok(StrongSolution {
        band,
        far: Quantiles::of(far),
        far_points,
        near_fraction: if total > 0.0 { near / total } else { 0.0 },
        plateau: (plateau_points > 0).then_some(Plateau {
            points: plateau_points,
            measure: plateau_measure,
            max_abs_v: plateau_max,
        }),
        vacuous: plateau_points == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub samples: usize,
    /// Largest `g_ε / bound` observed.
    pub max_ratio: f64,
    pub c2: f64,
    pub lambda1: f64,
}

/// Samples `(x_q, s, ε)` and asserts `g_ε(ū(x_q), s) ≤ c₁ ū^{-γ} + c₂ |s|^{p-1} + c₃`;
/// the first violation is returned as an error.
pub fn check_growth_envelope(
    r: &Reaction,
    ubar: &FeFunction,
    gc: &GrowthConstants,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthEnvelope> {
    if !(gc.c2 < gc.lambda1) {
        return Err(Error::Precondition(format!("c2 = {} is not below lambda1 = {}", gc.c2, gc.lambda1)));
    }
    let ubar_q: Vec<f64> = {
        let mesh = ubar.mesh();
        let rule = mesh.rule();
        mesh.elements()
            .iter()
            .flat_map(|el| rule.points.iter().map(move |b| ubar.value_at(el, b)))
            .filter(|&x| x > 0.0 && x <= gc.ubar_sup)
            .collect()
    };
    if ubar_q.is_empty() {
        return Err(Error::Precondition("sub-solution has no positive quadrature values".into()));
    }
    let s_max: f64 = 1e3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for i in 0..n_samples {
        let ub = ubar_q[rng.random_range(0..ubar_q.len())];
        let s = if i % 2 == 0 {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * 10f64.powf(rng.random_range(-6.0..s_max.log10()))
        } else {
            rng.random_range(-s_max..s_max)
        };
        let eps = [0.5, 0.1, 0.01][rng.random_range(0..3)];
        let value = window_unchecked(r, ub, s, eps).g;
        let bound = gc.bound(ub, s);
        if !(value <= bound) {
            return Err(Error::GrowthViolation { s, ubar: ub, eps, value, bound });
        }
        max_ratio = max_ratio.max(value / bound);
    }
    Ok(GrowthEnvelope { samples: n_samples, max_ratio, c2: gc.c2, lambda1: gc.lambda1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VBound {
    pub c_hat: f64,
    pub at: [f64; 2],
}

/// `max v d^γ` over interior quadrature points.
pub fn check_vbound(u: &FeFunction, v: &FeFunction, gamma: f64) -> Result<VBound> {
    same_mesh(u, v)?;
    let mesh = u.mesh();
    let (mut c_hat, mut at) = (f64::NEG_INFINITY, [0.0; 2]);
    for (el, b, _) in interior_points(mesh) {
        let x = mesh.point(el, b);
        let value = v.value_at(el, b) * mesh.distance_at(x).powf(gamma);
        if value > c_hat {
            c_hat = value;
            at = x;
        }
    }
    if !c_hat.is_finite() {
        return Err(Error::Mesh("no interior quadrature points".into()));
    }
    Ok(VBound { c_hat, at })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBound {
    pub max_w1p: f64,
    /// Spread `(max - min)/max` of the last three norms.
    pub tail_spread: Option<f64>,
}

impl UniformBound {
    pub fn of(w1p_norms: &[f64]) -> Result<UniformBound> {
        if w1p_norms.is_empty() {
            return Err(Error::Precondition("no continuation norms".into()));
        }
        let max_w1p = w1p_norms.iter().cloned().fold(0.0, f64::max);
        let tail_spread = (w1p_norms.len() >= 3).then(|| {
            let tail = &w1p_norms[w1p_norms.len() - 3..];
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            (hi - lo) / hi
        });
        Ok(UniformBound { max_w1p, tail_spread })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfCertificate {
    pub sup: f64,
}

/// Everything [`verify`] needs; optional parts are reported as skipped.
pub struct VerifyInputs<'a> {
    pub r: &'a Reaction,
    pub p: f64,
    pub u: &'a FeFunction,
    pub v: &'a FeFunction,
    pub ubar: Option<&'a FeFunction>,
    pub growth: Option<&'a GrowthConstants>,
    pub w1p_norms: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub tol: f64,
    pub c_slack: f64,
    /// Minimum inclusion fraction for the report to pass.
    pub min_fraction: f64,
    pub band: f64,
    pub boundary_band: f64,
    pub hardy_samples: usize,
    pub growth_samples: usize,
    pub dist_pairs: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: 1e-2,
            c_slack: 1.0,
            min_fraction: 0.99,
            band: 1e-2,
            boundary_band: 0.1,
            hardy_samples: 16,
            growth_samples: 10_000,
            dist_pairs: vec![(0.5, 1.0), (0.5, 1.5), (0.5, 2.5)],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub inclusion: Checked<Inclusion>,
    pub subsolution_margin: Checked<Margin>,
    pub boundary_growth: Checked<BoundaryGrowth>,
    pub uniform_bound: Checked<UniformBound>,
    pub hardy_constant: Checked<Hardy>,
    pub dist_integrability: Checked<DistList>,
    pub strong_residual: Checked<StrongSolution>,
    pub growth_envelope: Checked<GrowthEnvelope>,
    pub vbound: Checked<VBound>,
    pub linf: Checked<LinfCertificate>,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistList {
    pub entries: Vec<DistIntegrability>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// Runs every check. Pass/fail covers inclusion, sub-solution ordering,
/// boundary growth, the growth envelope and finiteness of the bounds; the
/// Hardy, integrability and strong-residual checks are report-only.
pub fn verify(inputs: &VerifyInputs<'_>, opts: &VerifyOptions) -> VerificationReport {
    let VerifyInputs { r, p, u, v, ubar, growth, w1p_norms } = *inputs;
    let mesh = u.mesh();
    let gamma = r.gamma().unwrap_or(0.5);

    let inclusion = Checked::from_result(check_inclusion(u, v, r, opts.tol, opts.c_slack));
    let subsolution_margin = match ubar {
        Some(ub) => Checked::from_result(check_subsolution(u, ub).map(|margin| Margin { margin })),
        None => skipped("no sub-solution supplied"),
    };
    let boundary_growth = Checked::from_result(check_boundary_growth(u, opts.boundary_band));
    let uniform_bound = match w1p_norms {
        Some(n) => Checked::from_result(UniformBound::of(n)),
        None => skipped("no continuation history supplied"),
    };
    let hardy_constant = Checked::from_result(check_hardy(mesh, p, gamma, opts.hardy_samples, opts.seed));
    let dist_integrability =
        Checked::from_result(check_dist_integrability(mesh, &opts.dist_pairs).map(|entries| DistList { entries }));
    let strong_residual = Checked::from_result(check_strong_solution(u, v, r, opts.band));
    let growth_envelope = match (ubar, growth) {
        (Some(ub), Some(gc)) => Checked::from_result(check_growth_envelope(r, ub, gc, opts.growth_samples, opts.seed)),
        _ => skipped("growth constants or sub-solution not supplied"),
    };
    let vbound = Checked::from_result(check_vbound(u, v, gamma));
    let linf = Checked::Done(LinfCertificate { sup: norm_linf(u) });

    let mut failures = Vec::new();
    match &inclusion {
        Checked::Done(i) if i.fraction >= opts.min_fraction => {}
        Checked::Done(i) => failures.push(format!("inclusion fraction {} < {}", i.fraction, opts.min_fraction)),
        Checked::Skipped { reason } => failures.push(format!("inclusion: {reason}")),
    }
    if let Checked::Done(m) = &subsolution_margin {
        if m.margin < -1e-8 {
            failures.push(format!("sub-solution ordering violated by {:e}", -m.margin));
        }
    }
    match &boundary_growth {
        Checked::Done(b) if b.l_hat > 0.0 && b.ratio_sup.is_finite() => {}
        Checked::Done(b) => failures.push(format!("boundary growth l_hat = {}", b.l_hat)),
        Checked::Skipped { reason } => failures.push(format!("boundary growth: {reason}")),
    }
    if let Checked::Done(b) = &uniform_bound {
        if !b.max_w1p.is_finite() {
            failures.push("uniform bound is not finite".into());
        }
    }
    if let Checked::Skipped { reason } = &growth_envelope {
        if ubar.is_some() && growth.is_some() {
            failures.push(format!("growth envelope: {reason}"));
        }
    }
    match &vbound {
        Checked::Done(b) if b.c_hat.is_finite() => {}
        _ => failures.push("v d^gamma is not bounded".into()),
    }
    VerificationReport {
        inclusion,
        subsolution_margin,
        boundary_growth,
        uniform_bound,
        hardy_constant,
        dist_integrability,
        strong_residual,
        growth_envelope,
        vbound,
        linf,
        passed: failures.is_empty(),
        failures,
    }
}
