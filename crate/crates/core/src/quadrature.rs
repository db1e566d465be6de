//! Reference quadrature rules and a small adaptive integrator.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    fn gauss_legendre(n: usize) -> Self {
        let rule = GaussLegendre::new(n.try_into().expect("rule size is nonzero"));
        let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        UnitRule {
            nodes: pairs.iter().map(|(x, _)| 0.5 * (x + 1.0)).collect(),
            weights: pairs.iter().map(|(_, w)| 0.5 * w).collect(),
        }
    }

    #[inline]
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + h * x);
        }
        acc * h
    }
}

/// Six-point Gauss-Legendre rule (exact through degree 11).
pub fn gauss6() -> &'static UnitRule {
    static RULE: OnceLock<UnitRule> = OnceLock::new();
    RULE.get_or_init(|| UnitRule::gauss_legendre(6))
}

/// Eight-point rule used on graded boundary pieces.
pub fn gauss8() -> &'static UnitRule {
    static RULE: OnceLock<UnitRule> = OnceLock::new();
    RULE.get_or_init(|| UnitRule::gauss_legendre(8))
}

/// Three-point rule, exact through degree 5.
pub fn gauss3() -> &'static UnitRule {
    static RULE: OnceLock<UnitRule> = OnceLock::new();
    RULE.get_or_init(|| UnitRule::gauss_legendre(3))
}

/// A quadrature rule on the reference simplex in barycentric form.
///
/// Weights sum to one; multiply by the simplex measure.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SimplexRule {
    /// Degree-5 Gauss rule on a segment, barycentric `(1 - t, t, 0)`.
    pub fn segment() -> Self {
        let g = gauss3();
        SimplexRule { points: g.nodes.iter().map(|&t| [1.0 - t, t, 0.0]).collect(), weights: g.weights.clone() }
    }

    /// Degree-4 six-point symmetric rule on a triangle (positive weights).
    pub fn triangle() -> Self {
        const A1: f64 = 0.108_103_018_168_070;
        const B1: f64 = 0.445_948_490_915_965;
        const W1: f64 = 0.223_381_589_678_011;
        const A2: f64 = 0.816_847_572_980_459;
        const B2: f64 = 0.091_576_213_509_771;
        const W2: f64 = 0.109_951_743_655_322;
        SimplexRule {
            points: vec![[A1, B1, B1], [B1, A1, B1], [B1, B1, A1], [A2, B2, B2], [B2, A2, B2], [B2, B2, A2]],
            weights: vec![W1, W1, W1, W2, W2, W2],
        }
    }

    pub fn for_dim(dim: usize) -> Self {
        match dim {
            1 => Self::segment(),
            _ => Self::triangle(),
        }
    }
}

/// Adaptive Gauss quadrature: bisect until the 6-point result on an interval
/// agrees with the sum over its two halves.
pub fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gauss6().integrate(a, b, f);
    adaptive_step(f, a, b, whole, tol, 0)
}

fn adaptive_step(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss6().integrate(a, m, f);
    let right = gauss6().integrate(m, b, f);
    let refined = left + right;
    if depth >= 40 || (refined - whole).abs() <= tol {
        return refined;
    }
    adaptive_step(f, a, m, left, 0.5 * tol, depth + 1) + adaptive_step(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn triangle_rule_is_degree_four() {
        // ∫_T x^a y^b over the unit triangle = a! b! / (a + b + 2)!
        let rule = SimplexRule::triangle();
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(l, w)| w * 0.5 * l[1].powi(a as i32) * l[2].powi(b as i32))
                    .sum();
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert_abs_diff_eq!(approx, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn segment_rule_is_degree_five() {
        let rule = SimplexRule::segment();
        for k in 0..=5 {
            let approx: f64 = rule.points.iter().zip(&rule.weights).map(|(l, w)| w * l[1].powi(k)).sum();
            assert_abs_diff_eq!(approx, 1.0 / (k as f64 + 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = adaptive(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-13);
        assert_abs_diff_eq!(v, 0.5 * 0.09 + 0.5 * 0.49, epsilon = 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = KahanSum::default();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert_abs_diff_eq!(s.value(), 1e-14, epsilon = 1e-20);
    }
}
