//! Truncation through the sub-solution, mollification with the standard
//! bump and the primitive of the mollified reaction.
//!
//! For a frozen sub-solution value `ū > 0` the truncated reaction is
//! `g(t) = f(max(ū, t))`, the mollified reaction is
//! `g_ε(s) = ∫ ρ_ε(s - t) g(t) dt` and its primitive is
//! `G_ε(s) = ∫_0^s g_ε`. Convolution commutes with differentiation, so
//! `G_ε(s) = C(s) - C(0)` with `C(s) = ∫ ρ_ε(s - t) Γ(t) dt` and `Γ` the
//! primitive of `g`; every quantity is one window quadrature.

use std::sync::OnceLock;

use super::Reaction;
use crate::quadrature::{adaptive, gauss6};
use crate::{Error, Result};

/// Uniform panels per window before splitting at breakpoints.
const PANELS: usize = 32;

fn bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

fn bump_derivative(t: f64) -> f64 {
    if t.abs() < 1.0 {
        let q = 1.0 - t * t;
        -2.0 * t / (q * q) * (-1.0 / q).exp()
    } else {
        0.0
    }
}

fn normalization() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| 1.0 / adaptive(&bump, -1.0, 1.0, 1e-15))
}

/// The unit-mass bump `ρ(t) = Z exp(-1/(1 - t²))` supported in `[-1, 1]`.
pub fn mollifier_rho(t: f64) -> f64 {
    normalization() * bump(t)
}

fn check_ubar(ubar: f64) -> Result<()> {
    if ubar > 0.0 && ubar.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "ubar_value",
            reason: format!("sub-solution values must be positive, got {ubar}"),
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "eps", reason: format!("expected eps in (0, 1), got {eps}") })
    }
}

/// `f(max(ū, s))`, defined for every real `s`.
pub fn truncate(r: &Reaction, ubar_value: f64, s: f64) -> Result<f64> {
    check_ubar(ubar_value)?;
    Ok(r.value(ubar_value.max(s)))
}

/// `g_ε(s)`; a convex combination of values of the truncated reaction over
/// the window `[s - ε, s + ε]`.
pub fn mollify(r: &Reaction, ubar_value: f64, s: f64, eps: f64) -> Result<f64> {
    Ok(window_eval(r, ubar_value, s, eps)?.g)
}

/// `G_ε(s) = ∫_0^s g_ε`, with `G_ε(0) = 0` exactly.
pub fn primitive_g(r: &Reaction, ubar_value: f64, s: f64, eps: f64) -> Result<f64> {
    if s == 0.0 {
        check_ubar(ubar_value)?;
        check_eps(eps)?;
        return Ok(0.0);
    }
    let at_s = window_eval(r, ubar_value, s, eps)?.c;
    let at_0 = window_eval(r, ubar_value, 0.0, eps)?.c;
    Ok(at_s - at_0)
}

/// Everything one window quadrature yields at `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEval {
    /// `g_ε(s)`.
    pub g: f64,
    /// `∂g_ε/∂s`.
    pub dg: f64,
    /// `C(s)`; `G_ε(s) = C(s) - C(0)`.
    pub c: f64,
}

/// Antiderivative weights: `ANTI[i][j] = ∫_0^{x_i} L_j` for the Lagrange
/// basis on the unit Gauss nodes, so `∫_a^{a + h x_i} q = h Σ_j ANTI[i][j] q(x_j)`
/// for polynomials of degree ≤ 5.
fn antiderivative_weights() -> &'static [[f64; 6]; 6] {
    static W: OnceLock<[[f64; 6]; 6]> = OnceLock::new();
    W.get_or_init(|| {
        let x = &gauss6().nodes;
        let lagrange =
            |j: usize, t: f64| (0..6).filter(|&m| m != j).map(|m| (t - x[m]) / (x[j] - x[m])).product::<f64>();
        let mut w = [[0.0; 6]; 6];
        for (row, &xi) in w.iter_mut().zip(x.iter()) {
            for (j, wij) in row.iter_mut().enumerate() {
                *wij = gauss6().integrate(0.0, xi, |t| lagrange(j, t));
            }
        }
        w
    })
}

/// Evaluates `g_ε`, its derivative and `C` at `s`.
pub fn window_eval(r: &Reaction, ubar_value: f64, s: f64, eps: f64) -> Result<WindowEval> {
    check_ubar(ubar_value)?;
    check_eps(eps)?;
    if !s.is_finite() {
        return Err(Error::InvalidParameter { name: "s", reason: format!("expected a finite argument, got {s}") });
    }
    Ok(window_unchecked(r, ubar_value, s, eps))
}

pub(crate) fn window_cuts(r: &Reaction, ubar: f64, lo: f64, hi: f64) -> Vec<f64> {
    let width = hi - lo;
    let mut cuts: Vec<f64> = (0..=PANELS).map(|k| lo + width * k as f64 / PANELS as f64).collect();
    cuts[PANELS] = hi;
    if ubar > lo && ubar < hi {
        cuts.push(ubar);
    }
    // Geometric cuts above ū resolve reactions that blow up at zero.
    let start = lo.max(ubar);
    let reach = start + 2.0 * width / PANELS as f64;
    let mut t = 2.0 * ubar;
    while t < reach.min(hi) {
        if t > start {
            cuts.push(t);
        }
        t *= 2.0;
    }
    cuts.extend_from_slice(r.breakpoints_between(lo.max(ubar), hi));
    cuts.sort_by(f64::total_cmp);
    let tiny = 1e-13 * width;
    cuts.dedup_by(|a, b| (*a - *b).abs() <= tiny);
    *cuts.last_mut().unwrap() = hi;
    cuts
}

pub(crate) fn window_unchecked(r: &Reaction, ubar: f64, s: f64, eps: f64) -> WindowEval {
    let (lo, hi) = (s - eps, s + eps);
    let f_ubar = r.value(ubar);
    let rule = gauss6();
    let anti = antiderivative_weights();

    // Γ(t) = f(ū) t for t ≤ ū, f(ū) ū + ∫_ū^t f beyond.
    let mut gamma_at_a = if lo <= ubar { f_ubar * lo } else { f_ubar * ubar + (r.primitive(lo) - r.primitive(ubar)) };

    let cuts = window_cuts(r, ubar, lo, hi);
    let (mut mass, mut sum_g, mut sum_dg, mut sum_c) = (0.0, 0.0, 0.0, 0.0);
    let mut g = [0.0; 6];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        let below = b <= ubar;
        for (j, &x) in rule.nodes.iter().enumerate() {
            g[j] = if below { f_ubar } else { r.formula_value(a + h * x) };
        }
        for (i, &x) in rule.nodes.iter().enumerate() {
            let t = a + h * x;
            let xi = (s - t) / eps;
            let k = rule.weights[i] * h * bump(xi);
            let dk = rule.weights[i] * h * bump_derivative(xi);
            let gamma_t = gamma_at_a + h * (0..6).map(|j| anti[i][j] * g[j]).sum::<f64>();
            mass += k;
            sum_g += k * g[i];
            sum_dg += dk * g[i];
            sum_c += k * gamma_t;
        }
        gamma_at_a += h * (0..6).map(|j| rule.weights[j] * g[j]).sum::<f64>();
    }
    WindowEval { g: sum_g / mass, dg: sum_dg / (eps * mass), c: sum_c / mass }
}

/// Inf and sup of the truncated reaction over `[s - ε, s + ε]`, from
/// one-sided limits at every breakpoint plus a dense sample of each smooth
/// sub-piece (exact for monotone pieces).
pub fn window_extrema(r: &Reaction, ubar_value: f64, s: f64, eps: f64) -> Result<(f64, f64)> {
    check_ubar(ubar_value)?;
    check_eps(eps)?;
    let (lo, hi) = (s - eps, s + eps);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut take = |v: f64| {
        min = min.min(v);
        max = max.max(v);
    };
    if lo < ubar_value {
        take(r.value(ubar_value));
    }
    if hi > ubar_value {
        let start = lo.max(ubar_value);
        let mut cuts = vec![start];
        cuts.extend_from_slice(r.breakpoints_between(start, hi));
        cuts.push(hi);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = 32;
            for k in 0..=n {
                let t = a + (b - a) * k as f64 / n as f64;
                let t = t.clamp(a + 1e-12 * (b - a), b - 1e-12 * (b - a));
                take(r.formula_value(t));
            }
        }
    }
    Ok((min, max))
}

/// Reference value of `G_ε(s)` by adaptive integration of `g_ε` over `[0, s]`.
#[cfg(test)]
pub(crate) fn primitive_g_adaptive(r: &Reaction, ubar: f64, s: f64, eps: f64, tol: f64) -> f64 {
    let g = |t: f64| window_unchecked(r, ubar, t, eps).g;
    if s >= 0.0 {
        adaptive(&g, 0.0, s, tol)
    } else {
        -adaptive(&g, s, 0.0, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::{Preset, ReactionDoc};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn step() -> Reaction {
        let doc: ReactionDoc = serde_json::from_str(
            r#"{"pieces": [{"interval": [0, 1], "formula": "0"}, {"interval": [1, "inf"], "formula": "1"}],
                "point_values": {"1": 0}}"#,
        )
        .unwrap();
        Reaction::from_doc(doc).unwrap()
    }

    #[test]
    fn bump_is_normalized_and_even() {
        let total = adaptive(&mollifier_rho, -1.0, 1.0, 1e-14);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(1.0 / normalization(), 0.443994, epsilon = 1e-6);
        assert_eq!(mollifier_rho(1.0), 0.0);
        assert_eq!(mollifier_rho(-1.0), 0.0);
        assert_eq!(mollifier_rho(2.5), 0.0);
        for t in [0.1, 0.37, 0.8, 0.999] {
            assert_eq!(mollifier_rho(t), mollifier_rho(-t));
        }
    }

    #[test]
    fn truncation_freezes_below_ubar() {
        let r = Preset::Power { coef: 1.0, exponent: -0.5 }.build(2.0).unwrap();
        assert_abs_diff_eq!(truncate(&r, 0.3, -5.0).unwrap(), 1.825741858350554, epsilon = 1e-12);
        assert_abs_diff_eq!(truncate(&r, 0.3, 0.7).unwrap(), 1.1952286093343936, epsilon = 1e-12);
        assert_eq!(truncate(&r, 0.3, 0.1).unwrap(), truncate(&r, 0.3, -2.0).unwrap());
        assert!(truncate(&r, 0.0, 1.0).is_err());
    }

    #[test]
    fn constant_and_step() {
        let c = Preset::Constant { value: 2.5 }.build(2.0).unwrap();
        assert_abs_diff_eq!(mollify(&c, 0.2, 0.7, 0.3).unwrap(), 2.5, epsilon = 1e-14);
        assert_abs_diff_eq!(mollify(&step(), 0.1, 1.0, 0.2).unwrap(), 0.5, epsilon = 1e-8);
        assert!(mollify(&c, 0.2, 0.7, 1.0).is_err());
        assert!(mollify(&c, 0.2, 0.7, 0.0).is_err());
    }

    #[test]
    fn primitive_of_constant_is_linear() {
        let c = Preset::Constant { value: 2.5 }.build(2.0).unwrap();
        for s in [-1.3, -0.2, 0.0, 0.4, 3.0] {
            assert_abs_diff_eq!(primitive_g(&c, 0.05, s, 0.1).unwrap(), 2.5 * s, epsilon = 1e-12);
        }
    }

    #[test]
    fn primitive_matches_adaptive_integration() {
        for r in [
            Preset::StaircaseSingular { gamma: 0.5, lambda: 0.0 }.build(2.0).unwrap(),
            Preset::Power { coef: 1.0, exponent: -0.5 }.build(2.0).unwrap(),
            step(),
        ] {
            for &(ubar, s, eps) in &[(0.05, 0.3, 0.1), (0.01, 1.2, 0.05), (0.2, -0.4, 0.3), (0.02, 0.9, 1.0 / 64.0)] {
                let fast = primitive_g(&r, ubar, s, eps).unwrap();
                let slow = primitive_g_adaptive(&r, ubar, s, eps, 1e-11);
                assert!((fast - slow).abs() <= 1e-8 * (1.0 + slow.abs()), "{ubar} {s} {eps}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let r = Preset::StaircaseSingular { gamma: 0.5, lambda: 0.0 }.build(2.0).unwrap();
        for &(ubar, s, eps) in &[(0.05, 0.3, 0.1), (0.02, 0.51, 0.05)] {
            let h = 1e-6;
            let fd = (mollify(&r, ubar, s + h, eps).unwrap() - mollify(&r, ubar, s - h, eps).unwrap()) / (2.0 * h);
            let dg = window_eval(&r, ubar, s, eps).unwrap().dg;
            assert_abs_diff_eq!(dg, fd, epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn primitive_derivative_is_g_near_a_singularity() {
        let r = Preset::Power { coef: 1.0, exponent: -0.5 }.build(2.0).unwrap();
        for &(ubar, s, eps) in &[(1e-3, 0.3, 0.5), (1e-5, 0.05, 0.25), (1e-4, 0.0, 1.0 / 64.0)] {
            let h = 1e-5;
            let c = |t: f64| window_eval(&r, ubar, t, eps).unwrap().c;
            let fd = (c(s - 2.0 * h) - 8.0 * c(s - h) + 8.0 * c(s + h) - c(s + 2.0 * h)) / (12.0 * h);
            let g = window_eval(&r, ubar, s, eps).unwrap().g;
            assert!((fd - g).abs() <= 1e-8 * g, "{ubar} {s} {eps}: {fd} vs {g}");
        }
    }

    #[test]
    fn smoothing_consistency_away_from_jumps() {
        let r = Preset::StaircaseSingular { gamma: 0.5, lambda: 0.0 }.build(2.0).unwrap();
        // s = 0.41 lies inside (1/3, 1/2) where f is constant; s = 1.7 in (1, ∞).
        let errs: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&eps| (mollify(&r, 0.05, 0.43, eps).unwrap() - truncate(&r, 0.05, 0.43).unwrap()).abs())
            .collect();
        assert!(errs[1] < errs[0] && errs[2] <= errs[1] + 1e-14, "{errs:?}");
        let smooth = Preset::Power { coef: 1.0, exponent: -0.5 }.build(2.0).unwrap();
        let errs: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&eps| (mollify(&smooth, 0.05, 0.6, eps).unwrap() - truncate(&smooth, 0.05, 0.6).unwrap()).abs())
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn sandwich_on_random_windows() {
        let r = Preset::StaircaseSingular { gamma: 0.5, lambda: 1.0 }.build(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let ubar = 10f64.powf(rng.random_range(-3.0..0.0));
            let s = rng.random_range(-1.0..3.0);
            let eps = 10f64.powf(rng.random_range(-3.0..-0.1));
            let g = mollify(&r, ubar, s, eps).unwrap();
            let (lo, hi) = window_extrema(&r, ubar, s, eps).unwrap();
            assert!(g >= lo - 1e-12 * lo.abs() && g <= hi + 1e-12 * hi.abs(), "{g} not in [{lo}, {hi}]");
        }
    }
}
