//! Sampling certificates for the structural hypotheses on `f` and the growth
//! constants of the mollified truncated reaction.
//!
//! The six hypotheses checked are:
//!
//! * (i) `f` is locally bounded on `(0, ∞)`;
//! * (ii) `f(s) ≤ c₁ s^{-γ}` on `(0, r]`;
//! * (iii) `liminf_{s→0⁺} f(s)/s^{p-1} > λ₁`, witnessed by `δ`;
//! * (iv) `limsup_{s→∞} f(s)/s^{p-1} < λ₁`, witnessed by `ĉ < λ₁` on `[R, ∞)`;
//! * (v) the discontinuity set has measure zero;
//! * (vi) `f̲(s) = 0` forces `f(s) = 0`.
//!
//! (ii)–(iv) are asymptotic statements; the checks here are evidence on a
//! geometric net, reported with margins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mollify::window_unchecked;
use super::Reaction;
use crate::{Error, Result};

pub const DEFAULT_SAMPLES_PER_DECADE: usize = 512;

const S_MIN: f64 = 1e-8;
const S_MAX: f64 = 1e6;
/// Right end `r` of the singular range in (ii).
const R_SINGULAR: f64 = 0.1;
/// Relative margin demanded above `λ₁` in (iii).
const MARGIN: f64 = 1e-3;
/// Exponent assumed in (ii) for reactions without a declared singularity.
const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaWitness {
    pub gamma: f64,
    pub c1: f64,
    pub r: f64,
    /// `true` when `γ` was not declared and the default was used.
    pub assumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaWitness {
    pub delta: f64,
    /// `min f̲(s)/(λ₁ s^{p-1}) - 1` over the samples in `(0, δ)`.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SublinearWitness {
    pub c_hat: f64,
    pub big_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub p: f64,
    pub lambda1: f64,
    pub samples_per_decade: usize,
    pub holds_i: bool,
    pub holds_ii: bool,
    pub holds_iii: bool,
    pub holds_iv: bool,
    pub holds_v: bool,
    pub holds_vi: bool,
    pub gamma_witness: Option<GammaWitness>,
    pub delta_witness: Option<DeltaWitness>,
    pub sublinear_witness: Option<SublinearWitness>,
    /// `sup f̄` over `[r, R]`.
    pub bound_m: Option<f64>,
    pub notes: BTreeMap<String, String>,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.holds_i && self.holds_ii && self.holds_iii && self.holds_iv && self.holds_v && self.holds_vi
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// A sampled point with both envelopes.
#[derive(Debug, Clone, Copy)]
struct Sample {
    s: f64,
    lower: f64,
    upper: f64,
}

fn sample_net(r: &Reaction, per_decade: usize) -> Result<Vec<Sample>> {
    let decades = (S_MAX / S_MIN).log10().round() as usize;
    let mut out = Vec::with_capacity(decades * per_decade + r.breakpoints().len() + 1);
    for k in 0..=decades * per_decade {
        let s = S_MIN * 10f64.powf(k as f64 / per_decade as f64);
        let (lower, upper) = r.envelopes(s);
        out.push(Sample { s, lower, upper });
    }
    for &s in r.breakpoints() {
        if (S_MIN..=S_MAX).contains(&s) {
            let (lower, upper) = r.envelopes(s);
            out.push(Sample { s, lower, upper });
        }
    }
    out.sort_by(|a, b| a.s.total_cmp(&b.s));
    if let Some(bad) = out.iter().find(|x| x.lower < 0.0 || x.lower.is_nan() || x.upper.is_nan()) {
        return Err(Error::Reaction(format!("reaction is negative or undefined near s = {}", bad.s)));
    }
    Ok(out)
}

/// Certifies (i)–(vi) on a geometric net with `samples` points per decade
/// over `[1e-8, 1e6]`, plus every breakpoint.
pub fn check_hypotheses(r: &Reaction, p: f64, lambda1: f64, samples: usize) -> Result<HypothesisReport> {
    crate::error::check_p(p)?;
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "lambda1",
            reason: format!("expected lambda1 > 0, got {lambda1}"),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least one sample per decade".into() });
    }
    let net = sample_net(r, samples)?;
    let mut notes = BTreeMap::new();
    let pm1 = p - 1.0;

    // (i)
    let unbounded = net.iter().find(|x| !x.upper.is_finite());
    let holds_i = unbounded.is_none();
    notes.insert(
        "i".into(),
        match unbounded {
            None => {
                format!("pieces are continuous; envelopes finite on {} samples in [{S_MIN:e}, {S_MAX:e}]", net.len())
            }
            Some(x) => format!("f is unbounded near s = {}", x.s),
        },
    );

    // (ii)
    let (gamma, assumed) = match r.gamma() {
        Some(g) => (g, false),
        None => (DEFAULT_GAMMA, true),
    };
    let weighted = |x: &Sample| x.s.powf(gamma) * x.upper;
    let first_decade = net.iter().filter(|x| x.s < 10.0 * S_MIN).map(weighted).fold(0.0, f64::max);
    let rest = net.iter().filter(|x| x.s >= 10.0 * S_MIN && x.s <= R_SINGULAR).map(weighted).fold(0.0, f64::max);
    let c1 = first_decade.max(rest);
    let holds_ii = c1.is_finite() && first_decade <= rest * (1.0 + 1e-6);
    notes.insert(
        "ii".into(),
        format!(
            "gamma = {gamma}{}; sup s^gamma f on lowest decade {first_decade:.6e}, on the rest of (0, r] {rest:.6e}",
            if assumed { " (no singularity declared, default exponent)" } else { "" }
        ),
    );
    let gamma_witness = holds_ii.then_some(GammaWitness { gamma, c1: c1.max(1e-12), r: R_SINGULAR, assumed });

    // (iii)
    let threshold = lambda1 * (1.0 + MARGIN);
    let ratio = |x: &Sample| x.lower / x.s.powf(pm1);
    let first_fail = net.iter().position(|x| ratio(x) < threshold).unwrap_or(net.len());
    let (holds_iii, delta_witness) = if first_fail == 0 || net[first_fail - 1].s < 10.0 * S_MIN {
        let at = net.get(first_fail).map(|x| x.s).unwrap_or(S_MIN);
        notes.insert("iii".into(), format!("f/s^(p-1) drops below lambda1 (1 + {MARGIN}) already at s = {at:e}"));
        (false, None)
    } else {
        let delta = net[first_fail - 1].s;
        let min_ratio = net[..first_fail].iter().map(ratio).fold(f64::INFINITY, f64::min);
        let margin = min_ratio / lambda1 - 1.0;
        notes.insert(
            "iii".into(),
            format!("f/s^(p-1) >= lambda1 (1 + {margin:.3e}) on all samples in (0, {delta:.6e}]"),
        );
        (true, Some(DeltaWitness { delta, margin }))
    };

    // (iv)
    let mut sublinear_witness = None;
    let mut big_r = R_SINGULAR;
    let mut last_c_hat = f64::NAN;
    while big_r <= S_MAX / 10.0 {
        let c_hat = net.iter().filter(|x| x.s >= big_r).map(|x| x.upper / x.s.powf(pm1)).fold(0.0, f64::max);
        last_c_hat = c_hat;
        if c_hat < lambda1 {
            sublinear_witness = Some(SublinearWitness { c_hat: c_hat.max(1e-3 * lambda1), big_r });
            break;
        }
        big_r *= 2.0;
    }
    let holds_iv = sublinear_witness.is_some();
    notes.insert(
        "iv".into(),
        match sublinear_witness {
            Some(w) => format!("sup f/s^(p-1) on [{:.4e}, {S_MAX:e}] is {:.6e} < lambda1", w.big_r, w.c_hat),
            None => format!("sup f/s^(p-1) on the last tail window is {last_c_hat:.6e} >= lambda1"),
        },
    );
    let bound_m = sublinear_witness
        .map(|w| net.iter().filter(|x| x.s >= R_SINGULAR && x.s <= w.big_r).map(|x| x.upper).fold(0.0, f64::max));

    // (v)
    let holds_v = true;
    notes.insert(
        "v".into(),
        format!(
            "discontinuities are {} listed breakpoints{}; the representation admits only countable sets",
            r.discontinuities().len(),
            match r.accumulation_cutoff() {
                Some(c) => format!(" plus a countable family accumulating at 0 below {c:e}"),
                None => String::new(),
            }
        ),
    );

    // (vi)
    let mut offenders = Vec::new();
    let mut checked = 0usize;
    for &s in r.breakpoints() {
        let (lower, _) = r.envelopes(s);
        checked += 1;
        if lower == 0.0 && r.value(s) != 0.0 {
            offenders.push(s);
        }
    }
    let zero_samples = net.iter().filter(|x| x.lower == 0.0).count();
    let holds_vi = offenders.is_empty();
    notes.insert(
        "vi".into(),
        if holds_vi {
            format!(
                "checked {checked} breakpoints and {zero_samples} sampled zeros; at continuity points f = lower envelope"
            )
        } else {
            format!("lower envelope vanishes but f > 0 at {:?}", &offenders[..offenders.len().min(8)])
        },
    );

    Ok(HypothesisReport {
        p,
        lambda1,
        samples_per_decade: samples,
        holds_i,
        holds_ii,
        holds_iii,
        holds_iv,
        holds_v,
        holds_vi,
        gamma_witness,
        delta_witness,
        sublinear_witness,
        bound_m,
        notes,
    })
}

/// Constants of the bound `g_ε(ū, s) ≤ c₁ ū^{-γ} + c₂ |s|^{p-1} + c₃`,
/// valid for every `ε ∈ (0, 1)` and every `ū ∈ (0, ubar_sup]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma: f64,
    pub c_hat: f64,
    pub m: f64,
    pub r: f64,
    pub big_r: f64,
    pub ubar_sup: f64,
    pub p: f64,
    pub lambda1: f64,
}

impl GrowthConstants {
    pub fn bound(&self, ubar: f64, s: f64) -> f64 {
        self.c1 * ubar.powf(-self.gamma) + self.c2 * s.abs().powf(self.p - 1.0) + self.c3
    }
}

/// Assembles `(c₁, c₂, c₃)` from the witnesses of (ii)–(iv) and validates
/// the bound on a deterministic net of `(ū, s, ε)`.
///
/// With `τ = max(ū, t)` and `|t - s| < ε < 1`: `f(τ) ≤ c₁ ū^{-γ}` when
/// `τ ≤ r`, `≤ M` on `[r, R]`, and `≤ ĉ (|s| + a)^{p-1}` beyond `R` with
/// `a = 1 + ubar_sup`; the last term is split as `c₂ |s|^{p-1} + C'` with
/// `c₂ = (ĉ + λ₁)/2` and `C' = sup_x [ĉ (x + a)^{p-1} - c₂ x^{p-1}]`.
pub fn growth_constants(r: &Reaction, report: &HypothesisReport, ubar_sup: f64) -> Result<GrowthConstants> {
    let (Some(gw), Some(sw), Some(m)) = (report.gamma_witness, report.sublinear_witness, report.bound_m) else {
        return Err(Error::Precondition("growth constants need the witnesses of (ii) and (iv)".into()));
    };
    if !(report.holds_i && report.holds_ii && report.holds_iv) {
        return Err(Error::Precondition("hypotheses (i), (ii) and (iv) must hold".into()));
    }
    if !(ubar_sup > 0.0 && ubar_sup.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "ubar_sup",
            reason: format!("expected a positive bound, got {ubar_sup}"),
        });
    }
    let (p, lambda1) = (report.p, report.lambda1);
    let q = p - 1.0;
    let c_hat = sw.c_hat;
    let c2 = 0.5 * (c_hat + lambda1);
    let a = 1.0 + ubar_sup;
    let c_prime = if p <= 2.0 {
        c_hat * a.powf(q)
    } else {
        let x = a / ((c2 / c_hat).powf(1.0 / (p - 2.0)) - 1.0);
        let phi = |x: f64| c_hat * (x + a).powf(q) - c2 * x.powf(q);
        phi(x).max(phi(0.0))
    };
    let gc = GrowthConstants {
        c1: gw.c1,
        c2,
        c3: m + c_prime,
        gamma: gw.gamma,
        c_hat,
        m,
        r: gw.r,
        big_r: sw.big_r,
        ubar_sup,
        p,
        lambda1,
    };
    validate_growth(r, &gc)?;
    Ok(gc)
}

fn validate_growth(r: &Reaction, gc: &GrowthConstants) -> Result<()> {
    let mut s_values: Vec<f64> = vec![-3.0, -1.0, -0.1, 0.0];
    s_values.extend((-8..=6).map(|k| 10f64.powf(k as f64 / 2.0)));
    s_values.extend((1..8).map(|k| 0.25 * k as f64));
    for k in 0..7 {
        let ubar = gc.ubar_sup * 10f64.powf(-(k as f64) / 2.0);
        for &s in &s_values {
            for eps in [0.5, 0.1, 0.01] {
                let value = window_unchecked(r, ubar, s, eps).g;
                let bound = gc.bound(ubar, s);
                if !(value <= bound) {
                    return Err(Error::GrowthViolation { s, ubar, eps, value, bound });
                }
            }
        }
    }
    Ok(())
}
