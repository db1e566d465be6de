use std::sync::Arc;

use super::{Element, Mesh};
use crate::error::check_p;
use crate::quadrature::KahanSum;
use crate::{Error, Result};

/// Continuous piecewise-linear function given by its nodal values.
#[derive(Debug, Clone)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("{} coefficients for {} nodes", values.len(), mesh.n_nodes()),
            });
        }
        Ok(FeFunction { mesh, values })
    }

    /// Like [`FeFunction::new`] but also requires zero boundary values.
    pub fn zero_trace(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        let u = Self::new(mesh, values)?;
        if !u.is_zero_trace() {
            return Err(Error::Precondition("function does not vanish on the boundary".into()));
        }
        Ok(u)
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_nodes();
        FeFunction { mesh, values: vec![0.0; n] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&x| f(x)).collect();
        FeFunction { mesh, values }
    }

    /// Interpolant of the distance to the boundary.
    pub fn distance(mesh: Arc<Mesh>) -> Self {
        let values = mesh.nodal_distance().to_vec();
        FeFunction { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        FeFunction { mesh: Arc::clone(&self.mesh), values }
    }

    pub fn is_zero_trace(&self) -> bool {
        self.mesh.interior_nodes().count() + self.boundary_zeros() == self.values.len()
    }

    fn boundary_zeros(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.mesh.is_boundary(i) && self.values[i] == 0.0).count()
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| c * v).collect())
    }

    /// `self + t * dir`, nodewise.
    pub fn stepped(&self, t: f64, dir: &[f64]) -> Self {
        self.with_values(self.values.iter().zip(dir).map(|(u, d)| u + t * d).collect())
    }

    #[inline]
    pub fn value_at(&self, el: &Element, bary: &[f64; 3]) -> f64 {
        el.vertices(self.mesh.dim()).iter().enumerate().map(|(a, &v)| bary[a] * self.values[v]).sum()
    }

    #[inline]
    pub fn gradient(&self, el: &Element) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (a, &v) in el.vertices(self.mesh.dim()).iter().enumerate() {
            g[0] += self.values[v] * el.grads[a][0];
            g[1] += self.values[v] * el.grads[a][1];
        }
        g
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "eta", reason: format!("expected eta >= 0, got {eta}") })
    }
}

/// Per-element diffusivity `(|∇u|² + η²)^{(p-2)/2}`; zero where both vanish.
pub(crate) fn diffusivity(grad2: f64, p: f64, eta: f64) -> f64 {
    let s = grad2 + eta * eta;
    if s == 0.0 {
        0.0
    } else {
        s.powf(0.5 * (p - 2.0))
    }
}

/// Discrete p-Laplacian action
/// `∫ (|∇u|² + η²)^{(p-2)/2} ∇u·∇ψ_i dx` for every nodal basis function.
///
/// Gradients are constant per element, so the element integral is exact.
pub fn apply_ap(u: &FeFunction, p: f64, eta: f64) -> Result<Vec<f64>> {
    check_p(p)?;
    check_eta(eta)?;
    let mesh = u.mesh();
    let dim = mesh.dim();
    let mut out = vec![0.0; mesh.n_nodes()];
    for el in mesh.elements() {
        let g = u.gradient(el);
        let w = diffusivity(g[0] * g[0] + g[1] * g[1], p, eta) * el.measure;
        if w == 0.0 {
            continue;
        }
        for (a, &v) in el.vertices(dim).iter().enumerate() {
            out[v] += w * (g[0] * el.grads[a][0] + g[1] * el.grads[a][1]);
        }
    }
    Ok(out)
}

/// Element diffusivities of the lagged linearization of [`apply_ap`].
pub fn weighted_stiffness(u: &FeFunction, p: f64, eta: f64) -> Result<Vec<f64>> {
    check_p(p)?;
    check_eta(eta)?;
    Ok(u.mesh()
        .elements()
        .iter()
        .map(|el| {
            let g = u.gradient(el);
            diffusivity(g[0] * g[0] + g[1] * g[1], p, eta)
        })
        .collect())
}

/// Load vector `∫ h(u(x)) ψ_i dx` by element quadrature; `h` receives the
/// element index, the quadrature point index and `u` at that point.
pub fn load_vector(u: &FeFunction, mut h: impl FnMut(usize, usize, f64) -> f64) -> Vec<f64> {
    let mesh = u.mesh();
    let dim = mesh.dim();
    let rule = mesh.rule();
    let mut out = vec![0.0; mesh.n_nodes()];
    for (e, el) in mesh.elements().iter().enumerate() {
        for (q, (bary, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let hv = h(e, q, u.value_at(el, bary)) * w * el.measure;
            for (a, &v) in el.vertices(dim).iter().enumerate() {
                out[v] += hv * bary[a];
            }
        }
    }
    out
}

/// `(∫ |∇u|^p)^{1/p}`.
pub fn norm_w1p(u: &FeFunction, p: f64) -> Result<f64> {
    check_p(p)?;
    let mut acc = KahanSum::default();
    for el in u.mesh().elements() {
        let g = u.gradient(el);
        acc.add(el.measure * (g[0] * g[0] + g[1] * g[1]).powf(0.5 * p));
    }
    Ok(acc.value().powf(1.0 / p))
}

/// `(∫ |u|^q)^{1/q}` by element quadrature.
pub fn norm_lq(u: &FeFunction, q: f64) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter { name: "q", reason: format!("expected q >= 1, got {q}") });
    }
    let mesh = u.mesh();
    let rule = mesh.rule();
    let mut acc = KahanSum::default();
    for el in mesh.elements() {
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            acc.add(el.measure * w * u.value_at(el, bary).abs().powf(q));
        }
    }
    Ok(acc.value().powf(1.0 / q))
}

/// Largest nodal magnitude, exact for P1 functions.
pub fn norm_linf(u: &FeFunction) -> f64 {
    u.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Domain};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_interval(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(Domain::Interval { a: 0.0, b: 1.0 }, n).unwrap())
    }

    fn random_zero_trace(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> FeFunction {
        let values =
            (0..mesh.n_nodes()).map(|i| if mesh.is_boundary(i) { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        FeFunction::new(Arc::clone(mesh), values).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn stiffness_row_of_midnode_hat() {
        // Two elements of width h = 1/2: the hat at the midnode has the
        // stiffness row (-1/h, 2/h, -1/h) = (-2, 4, -2).
        let mesh = unit_interval(2);
        let hat = FeFunction::new(Arc::clone(&mesh), vec![0.0, 1.0, 0.0]).unwrap();
        let action = apply_ap(&hat, 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(action[0], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(action[1], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(action[2], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_function_has_zero_action() {
        let mesh = Arc::new(build_mesh(Domain::UnitSquare, 4).unwrap());
        for p in [1.2, 2.0, 3.5] {
            let a = apply_ap(&FeFunction::zeros(Arc::clone(&mesh)), p, 0.0).unwrap();
            assert!(a.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unit_slope_makes_p_irrelevant() {
        let mesh = Arc::new(build_mesh(Domain::UnitSquare, 5).unwrap());
        let u = FeFunction::interpolate(Arc::clone(&mesh), |x| x[0]);
        let a2 = apply_ap(&u, 2.0, 0.0).unwrap();
        let a4 = apply_ap(&u, 4.0, 0.0).unwrap();
        for (x, y) in a2.iter().zip(&a4) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mesh = unit_interval(4);
        let u = FeFunction::zeros(mesh);
        assert!(apply_ap(&u, 1.0, 0.0).is_err());
        assert!(apply_ap(&u, 2.0, -1e-3).is_err());
        assert!(norm_lq(&u, 0.5).is_err());
        assert!(norm_w1p(&u, 0.9).is_err());
    }

    #[test]
    fn norms_of_reference_functions() {
        let mesh = unit_interval(64);
        let x = FeFunction::interpolate(Arc::clone(&mesh), |x| x[0]);
        for p in [1.5, 2.0, 3.0] {
            assert_abs_diff_eq!(norm_w1p(&x, p).unwrap(), 1.0, epsilon = 1e-13);
        }
        let parabola = FeFunction::interpolate(unit_interval(256), |x| x[0] * (1.0 - x[0]));
        assert_abs_diff_eq!(norm_linf(&parabola), 0.25, epsilon = 1e-12);
        let sine = FeFunction::interpolate(unit_interval(256), |x| (std::f64::consts::PI * x[0]).sin());
        assert_abs_diff_eq!(norm_lq(&sine, 2.0).unwrap(), 0.5f64.sqrt(), epsilon = 1e-4);
    }

    #[test]
    fn action_tested_with_u_is_w1p_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for domain in [Domain::Interval { a: 0.0, b: 1.0 }, Domain::UnitSquare, Domain::UnitDisk] {
            let mesh = Arc::new(build_mesh(domain, 6).unwrap());
            for p in [1.3, 2.0, 3.7] {
                for _ in 0..20 {
                    let u = random_zero_trace(&mesh, &mut rng);
                    let lhs = dot(&apply_ap(&u, p, 0.0).unwrap(), u.values());
                    let rhs = norm_w1p(&u, p).unwrap().powf(p);
                    assert!((lhs - rhs).abs() <= 1e-10 * rhs);
                }
            }
        }
    }

    #[test]
    fn linear_case_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mesh = Arc::new(build_mesh(Domain::UnitDisk, 5).unwrap());
        for _ in 0..20 {
            let (u, w) = (random_zero_trace(&mesh, &mut rng), random_zero_trace(&mesh, &mut rng));
            let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let combo = u.with_values(u.values().iter().zip(w.values()).map(|(x, y)| a * x + b * y).collect());
            let lhs = apply_ap(&combo, 2.0, 0.0).unwrap();
            let (au, aw) = (apply_ap(&u, 2.0, 0.0).unwrap(), apply_ap(&w, 2.0, 0.0).unwrap());
            for i in 0..lhs.len() {
                assert_abs_diff_eq!(lhs[i], a * au[i] + b * aw[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_trace_detection() {
        let mesh = unit_interval(4);
        assert!(FeFunction::zero_trace(Arc::clone(&mesh), vec![0.0, 1.0, 2.0, 1.0, 0.0]).is_ok());
        assert!(FeFunction::zero_trace(Arc::clone(&mesh), vec![0.1, 1.0, 2.0, 1.0, 0.0]).is_err());
        assert!(FeFunction::new(mesh, vec![0.0; 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn discrete_operator_is_monotone(seed in any::<u64>(), p in 1.1f64..4.0, eta in 0.0f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for domain in [Domain::Interval { a: 0.0, b: 1.0 }, Domain::UnitSquare] {
                let mesh = Arc::new(build_mesh(domain, 5).unwrap());
                let (u, w) = (random_zero_trace(&mesh, &mut rng), random_zero_trace(&mesh, &mut rng));
                let diff: Vec<f64> = u.values().iter().zip(w.values()).map(|(a, b)| a - b).collect();
                let au = apply_ap(&u, p, eta).unwrap();
                let aw = apply_ap(&w, p, eta).unwrap();
                let da: Vec<f64> = au.iter().zip(&aw).map(|(a, b)| a - b).collect();
                prop_assert!(dot(&da, &diff) >= -1e-12);
            }
        }

        #[test]
        fn linf_is_nodal_max(values in proptest::collection::vec(-5.0f64..5.0, 9)) {
            let mesh = unit_interval(8);
            let u = FeFunction::new(mesh, values.clone()).unwrap();
            let expected = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert_eq!(norm_linf(&u), expected);
        }
    }
}
