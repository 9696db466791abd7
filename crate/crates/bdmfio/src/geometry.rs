//! Admissible symplectomorphisms in a boundary chart and their graph-type phase functions.
//!
//! Points of T*ℝⁿ are flat vectors (y′, y_n, η′, η_n) of length 2n; the normal variable is
//! the last base coordinate.

use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::symbols::{check_transmission, ScalarSymbol, TransmissionOptions};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JacFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Validity region of a chart: |y′_i| ≤ base_radius, |y_n| ≤ normal_max, |η| ≥ fiber_min.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartBox {
    pub base_radius: f64,
    pub normal_max: f64,
    pub fiber_min: f64,
}

impl Default for ChartBox {
    fn default() -> Self {
        Self {
            base_radius: 10.0,
            normal_max: 10.0,
            fiber_min: 1e-3,
        }
    }
}

/// Component maps of χ in a boundary chart.
#[derive(Clone)]
pub struct SymplectomorphismChart {
    pub name: String,
    pub dim: usize,
    forward: MapFn,
    inverse: Option<MapFn>,
    jacobian: Option<JacFn>,
    pub chart_box: ChartBox,
    pub degree: f64,
    pub excision_radius: f64,
}

impl fmt::Debug for SymplectomorphismChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymplectomorphismChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, p: &[f64]) -> DMatrix<f64> {
    let m = p.len();
    let f0 = f(p);
    let mut j = DMatrix::<f64>::zeros(f0.len(), m);
    let mut q = p.to_vec();
    for c in 0..m {
        let h = 1e-5 * p[c].abs().max(1.0);
        q[c] = p[c] + h;
        let fp = f(&q);
        q[c] = p[c] - h;
        let fm = f(&q);
        q[c] = p[c];
        for r in 0..f0.len() {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Damped Newton solve of g(z) = target starting at z0; returns z.
fn newton_solve(
    g: &dyn Fn(&[f64]) -> Vec<f64>,
    jac: &dyn Fn(&[f64]) -> DMatrix<f64>,
    target: &[f64],
    z0: &[f64],
    what: &str,
) -> Result<Vec<f64>> {
    let mut z = z0.to_vec();
    let resid = |z: &[f64]| -> DVector<f64> {
        DVector::from_iterator(target.len(), g(z).iter().zip(target).map(|(a, b)| a - b))
    };
    let scale = 1.0 + target.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut r = resid(&z);
    for _ in 0..50 {
        if r.norm() <= 1e-10 * scale {
            return Ok(z);
        }
        let j = jac(&z);
        let step = j
            .clone()
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::NewtonDivergence(format!("{what}: singular Jacobian")))?;
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let rc = resid(&cand);
            if rc.norm() < r.norm() || t < 1e-4 {
                z = cand;
                r = rc;
                break;
            }
            t *= 0.5;
        }
    }
    if r.norm() <= 1e-10 * scale {
        Ok(z)
    } else {
        Err(Error::NewtonDivergence(format!(
            "{what}: residual {:.3e} after 50 iterations",
            r.norm()
        )))
    }
}

impl SymplectomorphismChart {
    pub fn new<F>(name: &str, dim: usize, forward: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            forward: Arc::new(forward),
            inverse: None,
            jacobian: None,
            chart_box: ChartBox::default(),
            degree: 1.0,
            excision_radius: 1e-3,
        }
    }

    pub fn with_inverse<F>(mut self, inv: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inv));
        self
    }

    pub fn with_jacobian<F>(mut self, j: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn forward(&self, p: &[f64]) -> Vec<f64> {
        (self.forward)(p)
    }

    /// Jacobian of the forward map (analytic when registered, central differences otherwise).
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(p),
            None => fd_jacobian(&*self.forward, p),
        }
    }

    /// χ⁻¹(x, ξ), supplied or by Newton iteration started at (x, ξ).
    pub fn inverse(&self, p: &[f64]) -> Result<Vec<f64>> {
        if let Some(inv) = &self.inverse {
            return Ok(inv(p));
        }
        let f = |z: &[f64]| self.forward(z);
        let j = |z: &[f64]| self.jacobian(z);
        newton_solve(&f, &j, p, p, "chart inverse")
            .map_err(|e| Error::NonInvertibleJacobian(e.to_string()))
    }

    /// The inverse chart χ⁻¹ as a chart.
    pub fn inverted(&self) -> SymplectomorphismChart {
        let fwd = self.clone();
        let mut c = SymplectomorphismChart::new(&format!("{}^-1", self.name), self.dim, move |p| {
            fwd.inverse(p).unwrap_or_else(|_| vec![f64::NAN; p.len()])
        });
        let orig = self.forward.clone();
        c.inverse = Some(orig);
        c
    }

    /// χ′ ∘ χ.
    pub fn compose(
        outer: &SymplectomorphismChart,
        inner: &SymplectomorphismChart,
    ) -> Result<SymplectomorphismChart> {
        if outer.dim != inner.dim {
            return Err(Error::ChartMismatch(format!(
                "dimensions {} and {}",
                outer.dim, inner.dim
            )));
        }
        let (o, i) = (outer.clone(), inner.clone());
        let (o2, i2) = (outer.clone(), inner.clone());
        Ok(SymplectomorphismChart::new(
            &format!("{}∘{}", outer.name, inner.name),
            outer.dim,
            move |p| o.forward(&i.forward(p)),
        )
        .with_inverse(move |p| {
            let q = o2.inverse(p).unwrap_or_else(|_| vec![f64::NAN; p.len()]);
            i2.inverse(&q).unwrap_or_else(|_| vec![f64::NAN; p.len()])
        }))
    }
}

/// Parameter function f(y′) of the simple normal-rescaling family, depending on y′₁.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileFn {
    Constant {
        value: f64,
    },
    /// a + b sin(y′₁)
    Sine {
        a: f64,
        b: f64,
    },
}

impl ProfileFn {
    pub fn value(&self, yp: &[f64]) -> f64 {
        match self {
            ProfileFn::Constant { value } => *value,
            ProfileFn::Sine { a, b } => a + b * yp[0].sin(),
        }
    }
    pub fn derivative(&self, yp: &[f64]) -> f64 {
        match self {
            ProfileFn::Constant { .. } => 0.0,
            ProfileFn::Sine { b, .. } => b * yp[0].cos(),
        }
    }
}

/// Polynomial map: each output component is Σ coef·∏ z_i^{e_i}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolynomialMap {
    pub components: Vec<Vec<(f64, Vec<u32>)>>,
}

impl PolynomialMap {
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .map(|(a, e)| {
                        a * e
                            .iter()
                            .zip(z)
                            .map(|(k, v)| v.powi(*k as i32))
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let m = z.len();
        DMatrix::from_fn(self.components.len(), m, |r, c| {
            self.components[r]
                .iter()
                .map(|(a, e)| {
                    if e[c] == 0 {
                        return 0.0;
                    }
                    let mut p = a * e[c] as f64;
                    for (i, (k, v)) in e.iter().zip(z).enumerate() {
                        let k = if i == c { k - 1 } else { *k };
                        p *= v.powi(k as i32);
                    }
                    p
                })
                .sum()
        })
    }
}

/// Built-in charts.
pub mod charts {
    use super::*;

    pub fn identity(dim: usize) -> SymplectomorphismChart {
        SymplectomorphismChart::new("identity", dim, |p| p.to_vec())
            .with_inverse(|p| p.to_vec())
            .with_jacobian(move |p| DMatrix::identity(p.len(), p.len()))
    }

    /// (y′, y_n, η′, η_n) ↦ (y′, y_n/f, η′ + f′ y_n η_n / f, f η_n) for n = 2.
    pub fn simple(f: ProfileFn) -> SymplectomorphismChart {
        let f1 = f.clone();
        let f2 = f.clone();
        SymplectomorphismChart::new("simple", 2, move |p| {
            let yp = &p[0..1];
            let (fv, df) = (f1.value(yp), f1.derivative(yp));
            vec![p[0], p[1] / fv, p[2] + df * p[1] * p[3] / fv, fv * p[3]]
        })
        .with_inverse(move |q| {
            // x′ = y′, x_n = y_n/f, ξ_n = f η_n, ξ′ = η′ + f′ x_n η_n
            let yp = &q[0..1];
            let (fv, df) = (f2.value(yp), f2.derivative(yp));
            let eta_n = q[3] / fv;
            let yn = q[1] * fv;
            vec![q[0], yn, q[2] - df * yn * eta_n / fv, eta_n]
        })
    }

    /// Non-symplectic scaling (y, η) ↦ (s·y, η).
    pub fn scaling(dim: usize, s: f64) -> SymplectomorphismChart {
        SymplectomorphismChart::new("scaling", dim, move |p| {
            p.iter()
                .enumerate()
                .map(|(i, v)| if i < dim { s * v } else { *v })
                .collect()
        })
    }

    /// Cotangent lift of b(y′) = y′ + a sin(y′) on the boundary, extended trivially in y_n, for n = 2.
    pub fn boundary_lift(a: f64) -> SymplectomorphismChart {
        SymplectomorphismChart::new("boundary_lift", 2, move |p| {
            let db = 1.0 + a * p[0].cos();
            vec![p[0] + a * p[0].sin(), p[1], p[2] / db, p[3]]
        })
    }

    /// Rotation of the boundary ℝ² lifted to T*ℝ³ (n = 3).
    pub fn rotation_lift(angle: f64) -> SymplectomorphismChart {
        let (c, s) = (angle.cos(), angle.sin());
        SymplectomorphismChart::new("rotation_lift", 3, move |p| {
            vec![
                c * p[0] - s * p[1],
                s * p[0] + c * p[1],
                p[2],
                c * p[3] - s * p[4],
                s * p[3] + c * p[4],
                p[5],
            ]
        })
        .with_inverse(move |p| {
            vec![
                c * p[0] + s * p[1],
                -s * p[0] + c * p[1],
                p[2],
                c * p[3] + s * p[4],
                -s * p[3] + c * p[4],
                p[5],
            ]
        })
    }

    pub fn polynomial(name: &str, dim: usize, map: PolynomialMap) -> SymplectomorphismChart {
        let m2 = map.clone();
        SymplectomorphismChart::new(name, dim, move |p| map.eval(p))
            .with_jacobian(move |p| m2.jacobian(p))
    }
}

// ---------------------------------------------------------------------------
// Admissibility

/// Sample points (y, η) for chart checks.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleGrid {
    pub points: Vec<Vec<f64>>,
}

impl SampleGrid {
    /// Base points y′ ∈ {−0.4, 0.3}^{n−1}, y_n ∈ {0, 0.2, 0.5}, fibers on the unit sphere.
    pub fn default_for(dim: usize) -> Self {
        let mut base: Vec<Vec<f64>> = vec![vec![]];
        for _ in 0..dim - 1 {
            base = base
                .into_iter()
                .flat_map(|b| {
                    [-0.4, 0.3]
                        .into_iter()
                        .map(move |v| [b.clone(), vec![v]].concat())
                })
                .collect();
        }
        let mut fibers = Vec::new();
        for k in 0..6 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 6.0 + 0.1;
            let mut e = vec![0.0; dim];
            e[0] = th.cos();
            e[dim - 1] = th.sin();
            if dim > 2 {
                e[1] = 0.3 * th.sin();
                let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                e.iter_mut().for_each(|v| *v /= n);
            }
            fibers.push(e);
        }
        let mut points = Vec::new();
        for b in &base {
            for &yn in &[0.0, 0.2, 0.5] {
                for e in &fibers {
                    points.push([b.clone(), vec![yn], e.clone()].concat());
                }
            }
        }
        Self { points }
    }
}

/// Tolerances of [`check_admissible`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmissibilityTolerances {
    pub homogeneity: f64,
    pub boundary: f64,
    pub symplectic: f64,
    pub jacobian: f64,
    pub symmetry: f64,
}

impl Default for AdmissibilityTolerances {
    fn default() -> Self {
        Self {
            homogeneity: 1e-8,
            boundary: 1e-10,
            symplectic: 1e-8,
            jacobian: 1e-8,
            symmetry: 1e-7,
        }
    }
}

impl AdmissibilityTolerances {
    /// All tolerances set to `tol`.
    pub fn uniform(tol: f64) -> Self {
        Self {
            homogeneity: tol,
            boundary: tol,
            symplectic: tol,
            jacobian: tol,
            symmetry: tol,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub chart: String,
    pub passed: bool,
    pub criteria: Vec<Criterion>,
    /// max |χ⁻¹(χ(p)) − p| over the samples.
    pub round_trip_residual: f64,
}

impl AdmissibilityReport {
    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

/// Symplectic form matrix Ω = [[0, I], [−I, 0]].
pub fn omega(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * dim, 2 * dim, |r, c| {
        if c == r + dim {
            1.0
        } else if r == c + dim {
            -1.0
        } else {
            0.0
        }
    })
}

fn fiber_norm(p: &[f64], dim: usize) -> f64 {
    p[dim..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Checks homogeneity, boundary preservation, symplecticity, the boundary Jacobian pattern
/// and the componentwise symmetry condition.
pub fn check_admissible(
    chart: &SymplectomorphismChart,
    samples: &SampleGrid,
    tol: &AdmissibilityTolerances,
) -> Result<AdmissibilityReport> {
    let n = chart.dim;
    for p in &samples.points {
        if fiber_norm(p, n) < chart.excision_radius {
            return Err(Error::DegenerateFiber(p.clone()));
        }
    }
    // homogeneity
    let mut hom: f64 = 0.0;
    for p in &samples.points {
        let f = chart.forward(p);
        for &lam in &[0.5, 2.0, 3.7] {
            let mut q = p.clone();
            q[n..].iter_mut().for_each(|v| *v *= lam);
            let g = chart.forward(&q);
            let mut err: f64 = 0.0;
            for i in 0..2 * n {
                let expected = if i < n { f[i] } else { lam * f[i] };
                err = err.max((g[i] - expected).abs());
            }
            let scale = f.iter().map(|v| v.abs()).fold(1.0, f64::max) * lam.max(1.0);
            hom = hom.max(err / scale);
        }
    }
    // boundary preservation, at y_n = 0 normalized by |η|
    let mut bnd: f64 = 0.0;
    let boundary_pts: Vec<Vec<f64>> = samples
        .points
        .iter()
        .map(|p| {
            let mut q = p.clone();
            q[n - 1] = 0.0;
            q
        })
        .collect();
    for q in &boundary_pts {
        bnd = bnd.max(chart.forward(q)[n - 1].abs());
    }
    // symplecticity
    let om = omega(n);
    let mut sym: f64 = 0.0;
    for p in &samples.points {
        let j = chart.jacobian(p);
        sym = sym.max((j.transpose() * &om * &j - &om).norm());
    }
    // Jacobian pattern at y_n = 0
    let mut pat: f64 = 0.0;
    let mut positive = true;
    for q in &boundary_pts {
        let j = chart.jacobian(q);
        let yn = n - 1;
        let en = 2 * n - 1;
        for r in 0..n - 1 {
            pat = pat.max(j[(r, en)].abs()); // ∂_{η_n} x′*
            pat = pat.max(j[(n + r, en)].abs()); // ∂_{η_n} ξ′*
        }
        for c in 0..2 * n {
            if c != yn {
                pat = pat.max(j[(yn, c)].abs()); // ∂_{y′,η} x_n*
            }
        }
        if j[(yn, yn)] <= 0.0 {
            positive = false;
        }
        pat = pat.max((j[(yn, yn)] * j[(en, en)] - 1.0).abs());
    }
    // componentwise symmetry condition
    let mut symm: f64 = 0.0;
    let topts = TransmissionOptions {
        max_order: 3,
        x_prime: {
            let mut v: Vec<Vec<f64>> = samples.points.iter().map(|p| p[..n - 1].to_vec()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            v
        },
        xi_prime: vec![],
        h_fallback: false,
        tol: tol.symmetry,
    };
    for comp in 0..2 * n {
        let c = chart.clone();
        let order = if comp < n { 0.0 } else { 1.0 };
        let sym_c = ScalarSymbol::general(&format!("component {comp}"), order, |_, _, _, _| {
            C64::new(0.0, 0.0)
        })
        .with_principal(move |xp: &[f64], xn: f64, xip: &[f64], xin: f64| {
            let p = [xp, &[xn], xip, &[xin]].concat();
            C64::new(c.forward(&p)[comp], 0.0)
        });
        let r = check_transmission(&sym_c, &topts)?;
        symm = symm.max(r.worst_residual);
    }
    let mut round: f64 = 0.0;
    for p in &samples.points {
        let q = chart.inverse(&chart.forward(p))?;
        round = round.max(
            q.iter()
                .zip(p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    let criteria = vec![
        Criterion {
            name: "homogeneity".into(),
            passed: hom <= tol.homogeneity,
            worst_residual: hom,
            tolerance: tol.homogeneity,
        },
        Criterion {
            name: "boundary_preservation".into(),
            passed: bnd <= tol.boundary,
            worst_residual: bnd,
            tolerance: tol.boundary,
        },
        Criterion {
            name: "symplecticity".into(),
            passed: sym <= tol.symplectic,
            worst_residual: sym,
            tolerance: tol.symplectic,
        },
        Criterion {
            name: "jacobian_pattern".into(),
            passed: pat <= tol.jacobian && positive,
            worst_residual: if positive { pat } else { f64::INFINITY },
            tolerance: tol.jacobian,
        },
        Criterion {
            name: "symmetry_condition".into(),
            passed: symm <= tol.symmetry,
            worst_residual: symm,
            tolerance: tol.symmetry,
        },
    ];
    let passed = criteria.iter().all(|c| c.passed);
    Ok(AdmissibilityReport {
        chart: chart.name.clone(),
        passed,
        criteria,
        round_trip_residual: round,
    })
}

// ---------------------------------------------------------------------------
// Boundary map

/// Restriction χ_∂ of an admissible chart and its base diffeomorphism b.
#[derive(Clone)]
pub struct BoundaryMap {
    pub dim: usize,
    chart: SymplectomorphismChart,
    /// max deviation of ξ′*_∂ from fiber-linearity.
    pub lift_residual: f64,
    /// max dependence of (x′*, ξ′*) on η_n at y_n = 0.
    pub normal_fiber_residual: f64,
}

impl BoundaryMap {
    /// b(y′) = x′*(y′, 0, η′, η_n) (independent of the fiber).
    pub fn b(&self, yp: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        let p = [yp, &[0.0], &e].concat();
        self.chart.forward(&p)[..n - 1].to_vec()
    }

    /// χ_∂(y′, η′) = (x′*, ξ′*) at y_n = 0.
    pub fn chi(&self, yp: &[f64], etap: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let p = [yp, &[0.0], etap, &[1.0]].concat();
        let f = self.chart.forward(&p);
        (f[..n - 1].to_vec(), f[n..2 * n - 1].to_vec())
    }

    /// η′ with ξ′*_∂(y′, η′) = ξ′ (the fiber map is linear, so one linear solve).
    pub fn fiber_preimage(&self, yp: &[f64], xip: &[f64]) -> Vec<f64> {
        let m = self.dim - 1;
        let a = DMatrix::from_fn(m, m, |r, c| {
            let mut e = vec![0.0; m];
            e[c] = 1.0;
            self.chi(yp, &e).1[r]
        });
        let x = a
            .lu()
            .solve(&DVector::from_column_slice(xip))
            .unwrap_or_else(|| DVector::from_element(m, f64::NAN));
        x.iter().cloned().collect()
    }
}

/// Extracts χ_∂ and b, verifying η_n-independence and fiber-linearity.
pub fn induce_boundary_map(chart: &SymplectomorphismChart) -> Result<BoundaryMap> {
    let n = chart.dim;
    let m = n - 1;
    let samples = SampleGrid::default_for(n);
    let mut lin: f64 = 0.0;
    let mut nf: f64 = 0.0;
    for p in &samples.points {
        let yp = &p[..m];
        let eta: Vec<f64> = p[n..2 * n - 1].to_vec();
        let base = |etap: &[f64], etan: f64| {
            let q = [yp, &[0.0], etap, &[etan]].concat();
            let f = chart.forward(&q);
            (f[..m].to_vec(), f[n..2 * n - 1].to_vec())
        };
        let (x1, xi1) = base(&eta, 1.0);
        for &en in &[-2.0, 0.5, 3.0] {
            let (x2, xi2) = base(&eta, en);
            for i in 0..m {
                nf = nf.max((x1[i] - x2[i]).abs()).max((xi1[i] - xi2[i]).abs());
            }
        }
        // linearity: ξ′(λη′ + μζ′) = λξ′(η′) + μξ′(ζ′), including negative multiples
        let zeta: Vec<f64> = (0..m).map(|i| 0.7 - 0.3 * i as f64).collect();
        let (_, xz) = base(&zeta, 1.0);
        for &(l, mu) in &[(2.0, -1.0), (-1.5, 0.5), (0.0, 0.0)] {
            let comb: Vec<f64> = (0..m).map(|i| l * eta[i] + mu * zeta[i]).collect();
            let (_, xc) = base(&comb, 1.0);
            for i in 0..m {
                let scale = 1.0 + xi1[i].abs() + xz[i].abs();
                lin = lin.max((xc[i] - l * xi1[i] - mu * xz[i]).abs() / scale);
            }
        }
    }
    if nf > 1e-8 {
        return Err(Error::NotALift(nf));
    }
    if lin > 1e-8 {
        return Err(Error::NotALift(lin));
    }
    Ok(BoundaryMap {
        dim: n,
        chart: chart.clone(),
        lift_residual: lin,
        normal_fiber_residual: nf,
    })
}

// ---------------------------------------------------------------------------
// Hamiltonian flows

/// A fiber-homogeneous Hamiltonian h(y, η) with its gradient (∂_y h, ∂_η h).
#[derive(Clone)]
pub struct Hamiltonian {
    pub name: String,
    pub dim: usize,
    value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hamiltonian")
            .field("name", &self.name)
            .finish()
    }
}

impl Hamiltonian {
    pub fn new<V, G>(name: &str, dim: usize, value: V, grad: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            value: Arc::new(value),
            grad: Arc::new(grad),
        }
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        (self.value)(p)
    }
    pub fn grad(&self, p: &[f64]) -> Vec<f64> {
        (self.grad)(p)
    }

    /// Hamilton vector field (∂_η h, −∂_y h).
    fn field(&self, p: &[f64]) -> Vec<f64> {
        let g = self.grad(p);
        let n = self.dim;
        (0..2 * n)
            .map(|i| if i < n { g[n + i] } else { -g[i - n] })
            .collect()
    }

    /// Multiplies h by s.
    pub fn scaled(&self, s: f64) -> Hamiltonian {
        let (v, g) = (self.value.clone(), self.grad.clone());
        Hamiltonian::new(
            &format!("{}*{s}", self.name),
            self.dim,
            move |p| s * v(p),
            move |p| g(p).into_iter().map(|x| s * x).collect(),
        )
    }
}

/// Built-in Hamiltonians for n = 2.
pub mod hamiltonians {
    use super::*;

    pub fn zero() -> Hamiltonian {
        Hamiltonian::new("zero", 2, |_| 0.0, |_| vec![0.0; 4])
    }

    /// h = η₁: translation in y₁.
    pub fn translation() -> Hamiltonian {
        Hamiltonian::new("translation", 2, |p| p[2], |_| vec![0.0, 0.0, 1.0, 0.0])
    }

    /// h = ε y_n² η_n η₁²/(η₁²+η_n²): a normal shear vanishing to second order at the boundary.
    pub fn normal_shear(eps: f64) -> Hamiltonian {
        Hamiltonian::new(
            "normal_shear",
            2,
            move |p| {
                let (yn, e1, en) = (p[1], p[2], p[3]);
                eps * yn * yn * en * e1 * e1 / (e1 * e1 + en * en)
            },
            move |p| {
                let (yn, e1, en) = (p[1], p[2], p[3]);
                let s = e1 * e1 + en * en;
                let g = en * e1 * e1 / s;
                let dg_de1 = 2.0 * e1 * en * en * en / (s * s);
                let dg_den = e1 * e1 * (e1 * e1 - en * en) / (s * s);
                vec![
                    0.0,
                    eps * 2.0 * yn * g,
                    eps * yn * yn * dg_de1,
                    eps * yn * yn * dg_den,
                ]
            },
        )
    }

    /// h = ε(η₁ sin y₁ + y_n η_n cos y₁): cotangent lift of a vector field tangent to the boundary.
    pub fn tangent_lift(eps: f64) -> Hamiltonian {
        Hamiltonian::new(
            "tangent_lift",
            2,
            move |p| eps * (p[2] * p[0].sin() + p[1] * p[3] * p[0].cos()),
            move |p| {
                let (s, c) = (p[0].sin(), p[0].cos());
                vec![
                    eps * (p[2] * c - p[1] * p[3] * s),
                    eps * p[3] * c,
                    eps * s,
                    eps * p[1] * c,
                ]
            },
        )
    }
}

/// One step of the two-stage Gauss–Legendre method (symplectic, order 4).
fn gauss_legendre_step(h: &Hamiltonian, z: &[f64], dt: f64) -> Vec<f64> {
    let r3 = 3f64.sqrt();
    let a = [[0.25, 0.25 - r3 / 6.0], [0.25 + r3 / 6.0, 0.25]];
    let m = z.len();
    let mut k = [h.field(z), h.field(z)];
    for _ in 0..100 {
        let mut change: f64 = 0.0;
        let mut next = [vec![0.0; m], vec![0.0; m]];
        for s in 0..2 {
            let zs: Vec<f64> = (0..m)
                .map(|i| z[i] + dt * (a[s][0] * k[0][i] + a[s][1] * k[1][i]))
                .collect();
            next[s] = h.field(&zs);
        }
        for s in 0..2 {
            for i in 0..m {
                change = change.max((next[s][i] - k[s][i]).abs());
            }
        }
        k = next;
        if change < 1e-15 * (1.0 + k[0].iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    (0..m)
        .map(|i| z[i] + 0.5 * dt * (k[0][i] + k[1][i]))
        .collect()
}

fn flow(h: &Hamiltonian, z: &[f64], time: f64, bx: &ChartBox) -> Result<Vec<f64>> {
    let steps = ((time.abs() / 0.01).ceil() as usize).max(8);
    let dt = time / steps as f64;
    let n = h.dim;
    let mut z = z.to_vec();
    for _ in 0..steps {
        z = gauss_legendre_step(h, &z, dt);
        let out = z[..n - 1].iter().any(|v| v.abs() > bx.base_radius)
            || z[n - 1].abs() > bx.normal_max
            || fiber_norm(&z, n) < bx.fiber_min
            || z.iter().any(|v| !v.is_finite());
        if out {
            return Err(Error::FlowLeavesChart(z));
        }
    }
    Ok(z)
}

/// Time-`time` flow of h as a chart; its inverse is the backward flow.
pub fn hamiltonian_flow_chart(h: &Hamiltonian, time: f64) -> Result<SymplectomorphismChart> {
    let n = h.dim;
    let samples = SampleGrid::default_for(n);
    // the Hamilton field must be tangent to y_n = 0
    let mut normal_derivs: f64 = 0.0;
    for p in &samples.points {
        let mut q = p.clone();
        q[n - 1] = 0.0;
        let g = h.grad(&q);
        normal_derivs = normal_derivs.max(g[2 * n - 1].abs());
    }
    if normal_derivs > 1e-10 {
        return Err(Error::AdmissibilityViolated(format!(
            "h has nonzero normal fiber derivative at the boundary ({normal_derivs:.3e})"
        )));
    }
    let hc = h.clone();
    let hsym = ScalarSymbol::general("h", 1.0, |_, _, _, _| C64::new(0.0, 0.0)).with_principal(
        move |xp, xn, xip, xin| C64::new(hc.value(&[xp, &[xn], xip, &[xin]].concat()), 0.0),
    );
    let tr = check_transmission(
        &hsym,
        &TransmissionOptions {
            h_fallback: false,
            ..Default::default()
        },
    )?;
    if !tr.passed {
        return Err(Error::AdmissibilityViolated(format!(
            "h violates the symmetry condition: {}",
            tr.detail
        )));
    }
    let bx = ChartBox::default();
    for p in &samples.points {
        flow(h, p, time, &bx)?;
    }
    let (h1, h2) = (h.clone(), h.clone());
    let (b1, b2) = (bx.clone(), bx.clone());
    let chart = SymplectomorphismChart::new(&format!("flow[{}, t={time}]", h.name), n, move |p| {
        homogeneous_flow(&h1, p, time, &b1)
    })
    .with_inverse(move |p| homogeneous_flow(&h2, p, -time, &b2));
    let rep = check_admissible(&chart, &samples, &AdmissibilityTolerances::uniform(1e-6))?;
    if !rep.passed {
        let bad: Vec<String> = rep
            .criteria
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({:.3e})", c.name, c.worst_residual))
            .collect();
        return Err(Error::AdmissibilityViolated(bad.join(", ")));
    }
    Ok(chart)
}

/// Flow evaluated on the unit fiber sphere and extended by homogeneity.
fn homogeneous_flow(h: &Hamiltonian, p: &[f64], time: f64, bx: &ChartBox) -> Vec<f64> {
    let n = h.dim;
    let r = fiber_norm(p, n);
    if r == 0.0 {
        return vec![f64::NAN; 2 * n];
    }
    let mut q = p.to_vec();
    q[n..].iter_mut().for_each(|v| *v /= r);
    match flow(h, &q, time, bx) {
        Ok(mut z) => {
            z[n..].iter_mut().for_each(|v| *v *= r);
            z
        }
        Err(_) => vec![f64::NAN; 2 * n],
    }
}

// ---------------------------------------------------------------------------
// Phase functions

/// Which variable pair the phase uses: ψ_L(x, η) or ψ_R(y, ξ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    Left,
    Right,
}

pub type PhaseFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type PhaseGrad = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Phase ψ(x, ξ) of a graph-type FIO; x and ξ are n-vectors.
#[derive(Clone)]
pub struct PhaseFunction {
    pub name: String,
    pub dim: usize,
    pub side: Quantization,
    psi: PhaseFn,
    grad_x: Option<PhaseGrad>,
    grad_xi: Option<PhaseGrad>,
    pub excision_radius: f64,
    /// Declared structure ψ = ψ_∂(x′,ξ′) + x_n·q(x′,ξ).
    pub linear_in_xn: bool,
    /// Residual of the critical-point reproduction of the chart (0 for closed forms).
    pub graph_residual: f64,
}

impl fmt::Debug for PhaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseFunction")
            .field("name", &self.name)
            .field("side", &self.side)
            .finish()
    }
}

impl PhaseFunction {
    pub fn new<F>(name: &str, dim: usize, psi: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            side: Quantization::Left,
            psi: Arc::new(psi),
            grad_x: None,
            grad_xi: None,
            excision_radius: 1e-3,
            linear_in_xn: false,
            graph_residual: 0.0,
        }
    }

    pub fn with_grads<GX, GXI>(mut self, gx: GX, gxi: GXI) -> Self
    where
        GX: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        GXI: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad_x = Some(Arc::new(gx));
        self.grad_xi = Some(Arc::new(gxi));
        self
    }

    pub fn linear(mut self) -> Self {
        self.linear_in_xn = true;
        self
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        (self.psi)(x, xi)
    }

    /// ∂_x ψ.
    pub fn grad_x(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        match &self.grad_x {
            Some(g) => g(x, xi),
            None => {
                let f = |v: &[f64]| vec![self.eval(v, xi)];
                fd_jacobian(&f, x).row(0).iter().cloned().collect()
            }
        }
    }

    /// ∂_ξ ψ.
    pub fn grad_xi(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        match &self.grad_xi {
            Some(g) => g(x, xi),
            None => {
                let f = |v: &[f64]| vec![self.eval(x, v)];
                fd_jacobian(&f, xi).row(0).iter().cloned().collect()
            }
        }
    }

    /// ∂_{x_n} ψ(x′, 0, ξ′, ξ_n).
    pub fn normal_slope(&self, xp: &[f64], xip: &[f64], xin: f64) -> f64 {
        let x = [xp, &[0.0]].concat();
        let xi = [xip, &[xin]].concat();
        self.grad_x(&x, &xi)[self.dim - 1]
    }

    /// ψ(x′, x_n, ξ′, ξ_n) − ψ(x′, 0, ξ′, ξ_n).
    pub fn normal_part(&self, xp: &[f64], xn: f64, xip: &[f64], xin: f64) -> f64 {
        let xi = [xip, &[xin]].concat();
        self.eval(&[xp, &[xn]].concat(), &xi) - self.eval(&[xp, &[0.0]].concat(), &xi)
    }
}

/// Built-in phases.
pub mod phases {
    use super::*;

    /// ψ = x·ξ.
    pub fn identity(dim: usize) -> PhaseFunction {
        PhaseFunction::new("x.xi", dim, |x, xi| {
            x.iter().zip(xi).map(|(a, b)| a * b).sum()
        })
        .with_grads(|_, xi| xi.to_vec(), |x, _| x.to_vec())
        .linear()
    }

    /// ψ = x′·ξ′ + f(x′) x_n ξ_n (n = 2).
    pub fn simple(f: ProfileFn) -> PhaseFunction {
        let (f1, f2, f3) = (f.clone(), f.clone(), f.clone());
        PhaseFunction::new("simple", 2, move |x, xi| {
            x[0] * xi[0] + f1.value(&x[..1]) * x[1] * xi[1]
        })
        .with_grads(
            move |x, xi| {
                vec![
                    xi[0] + f2.derivative(&x[..1]) * x[1] * xi[1],
                    f2.value(&x[..1]) * xi[1],
                ]
            },
            move |x, _| vec![x[0], f3.value(&x[..1]) * x[1]],
        )
        .linear()
    }

    /// ψ = x′·ξ′ + x_n q(ξ) with q(ξ) = ξ_n + ε ξ₁² ξ_n/(ξ₁² + ξ_n²) (n = 2).
    pub fn normal_deformation(eps: f64) -> PhaseFunction {
        PhaseFunction::new("normal_deformation", 2, move |x, xi| {
            x[0] * xi[0] + x[1] * deformation_q(eps, xi[0], xi[1])
        })
        .with_grads(
            move |_, xi| vec![xi[0], deformation_q(eps, xi[0], xi[1])],
            move |x, xi| {
                let (a, b) = (xi[0], xi[1]);
                let s = a * a + b * b;
                let dq_da = 2.0 * eps * a * b * b * b / (s * s);
                let dq_db = 1.0 + eps * a * a * (a * a - b * b) / (s * s);
                vec![x[0] + x[1] * dq_da, x[1] * dq_db]
            },
        )
        .linear()
    }

    /// ψ = x·ξ + x_n ξ₁ + ξ_n g(x′): violates ξ_n-independence at the boundary when g ≠ 0.
    pub fn boundary_violating(g: f64) -> PhaseFunction {
        PhaseFunction::new("boundary_violating", 2, move |x, xi| {
            x[0] * xi[0] + x[1] * xi[1] + x[1] * xi[0] + xi[1] * g * (1.0 + x[0].sin())
        })
    }
}

/// q(ξ₁, ξ_n) = ξ_n + ε ξ₁² ξ_n/(ξ₁² + ξ_n²).
pub fn deformation_q(eps: f64, a: f64, b: f64) -> f64 {
    let s = a * a + b * b;
    if s == 0.0 {
        return 0.0;
    }
    b + eps * a * a * b / s
}

/// Graph-type phase of a chart: ψ_L(x, η) = y·η with x*(y, η) = x, or ψ_R(y, ξ) = x*(y, η̃)·ξ
/// with ξ*(y, η̃) = ξ.
pub fn build_phase(chart: &SymplectomorphismChart, side: Quantization) -> Result<PhaseFunction> {
    let n = chart.dim;
    let c = chart.clone();
    // Non-degeneracy of ∂_η ξ* on the samples.
    let samples = SampleGrid::default_for(n);
    for p in &samples.points {
        let j = chart.jacobian(p);
        let block = j.view((n, n), (n, n)).clone_owned();
        let d = block.determinant();
        if d.abs() < 1e-8 || !d.is_finite() {
            return Err(Error::NondegeneracyViolated(format!(
                "det d_eta xi* = {d:.3e} at {p:?}"
            )));
        }
    }
    let solve_left =
        move |c: &SymplectomorphismChart, x: &[f64], eta: &[f64]| -> Result<Vec<f64>> {
            let g = |y: &[f64]| c.forward(&[y, eta].concat())[..n].to_vec();
            let j = |y: &[f64]| {
                c.jacobian(&[y, eta].concat())
                    .view((0, 0), (n, n))
                    .clone_owned()
            };
            newton_solve(&g, &j, x, x, "left phase")
        };
    let solve_right =
        move |c: &SymplectomorphismChart, y: &[f64], xi: &[f64]| -> Result<Vec<f64>> {
            let g = |eta: &[f64]| c.forward(&[y, eta].concat())[n..].to_vec();
            let j = |eta: &[f64]| {
                c.jacobian(&[y, eta].concat())
                    .view((n, n), (n, n))
                    .clone_owned()
            };
            newton_solve(&g, &j, xi, xi, "right phase")
        };
    // Surface Newton failures at construction time.
    for p in samples.points.iter().take(6) {
        let f = chart.forward(p);
        match side {
            Quantization::Left => {
                solve_left(chart, &f[..n], &p[n..])?;
            }
            Quantization::Right => {
                solve_right(chart, &p[..n], &f[n..])?;
            }
        }
    }
    let mut phase = match side {
        Quantization::Left => {
            let (c1, c2, c3) = (c.clone(), c.clone(), c.clone());
            PhaseFunction::new(&format!("psi_L[{}]", chart.name), n, move |x, eta| {
                let y = solve_left(&c1, x, eta).unwrap_or_else(|_| vec![f64::NAN; n]);
                y.iter().zip(eta).map(|(a, b)| a * b).sum()
            })
            .with_grads(
                move |x, eta| {
                    let y = solve_left(&c2, x, eta).unwrap_or_else(|_| vec![f64::NAN; n]);
                    c2.forward(&[&y[..], eta].concat())[n..].to_vec()
                },
                move |x, eta| solve_left(&c3, x, eta).unwrap_or_else(|_| vec![f64::NAN; n]),
            )
        }
        Quantization::Right => {
            let (c1, c2, c3) = (c.clone(), c.clone(), c.clone());
            let mut ph = PhaseFunction::new(&format!("psi_R[{}]", chart.name), n, move |y, xi| {
                let eta = solve_right(&c1, y, xi).unwrap_or_else(|_| vec![f64::NAN; n]);
                let x = c1.forward(&[y, &eta[..]].concat());
                x[..n].iter().zip(xi).map(|(a, b)| a * b).sum()
            })
            .with_grads(
                move |y, xi| solve_right(&c2, y, xi).unwrap_or_else(|_| vec![f64::NAN; n]),
                move |y, xi| {
                    let eta = solve_right(&c3, y, xi).unwrap_or_else(|_| vec![f64::NAN; n]);
                    c3.forward(&[y, &eta[..]].concat())[..n].to_vec()
                },
            );
            ph.side = Quantization::Right;
            ph
        }
    };
    phase.graph_residual = graph_residual(&phase, chart, &samples);
    if !(phase.graph_residual <= 1e-6) {
        return Err(Error::NewtonDivergence(format!(
            "graph reproduction residual {:.3e}",
            phase.graph_residual
        )));
    }
    Ok(phase)
}

/// Compares the critical-point relations of a phase, using finite differences of ψ itself,
/// with the chart on the sample set.
pub fn graph_residual(
    phase: &PhaseFunction,
    chart: &SymplectomorphismChart,
    samples: &SampleGrid,
) -> f64 {
    let n = chart.dim;
    let mut worst: f64 = 0.0;
    for p in &samples.points {
        let f = chart.forward(p);
        let (y, eta, x, xi) = (&p[..n], &p[n..], &f[..n], &f[n..]);
        let fd = |fun: &dyn Fn(&[f64]) -> f64, at: &[f64]| -> Vec<f64> {
            let g = |v: &[f64]| vec![fun(v)];
            fd_jacobian(&g, at).row(0).iter().cloned().collect()
        };
        let (d_first, d_second, exp_first, exp_second) = match phase.side {
            Quantization::Left => (
                fd(&|v: &[f64]| phase.eval(v, eta), x),
                fd(&|v: &[f64]| phase.eval(x, v), eta),
                xi.to_vec(),
                y.to_vec(),
            ),
            Quantization::Right => (
                fd(&|v: &[f64]| phase.eval(v, xi), y),
                fd(&|v: &[f64]| phase.eval(y, v), xi),
                eta.to_vec(),
                x.to_vec(),
            ),
        };
        for i in 0..n {
            let s = 1.0 + exp_first[i].abs();
            worst = worst.max((d_first[i] - exp_first[i]).abs() / s);
            let s = 1.0 + exp_second[i].abs();
            worst = worst.max((d_second[i] - exp_second[i]).abs() / s);
        }
    }
    worst
}

/// Boundary part ψ_∂(x′, ξ′) = ψ(x′, 0, ξ′, 1).
#[derive(Clone)]
pub struct BoundaryPhase {
    phase: PhaseFunction,
    /// Largest |∂_{ξ_n}ψ(x′,0,ξ′,ξ_n)| found on the samples.
    pub normal_fiber_residual: f64,
}

impl BoundaryPhase {
    pub fn eval(&self, xp: &[f64], xip: &[f64]) -> f64 {
        self.phase
            .eval(&[xp, &[0.0]].concat(), &[xip, &[1.0]].concat())
    }
}

/// Returns ψ_∂ after checking that ψ(x′, 0, ξ′, ·) does not depend on ξ_n.
pub fn phase_boundary_part(psi: &PhaseFunction) -> Result<BoundaryPhase> {
    let n = psi.dim;
    let samples = SampleGrid::default_for(n);
    let mut worst: f64 = 0.0;
    for p in &samples.points {
        let x: Vec<f64> = [&p[..n - 1], &[0.0]].concat();
        for &s in &[1.0, -2.0, 0.5] {
            let mut xi: Vec<f64> = p[n..].to_vec();
            xi[n - 1] = s * (0.3 + xi[n - 1].abs());
            let d = psi.grad_xi(&x, &xi)[n - 1];
            worst = worst.max(d.abs());
        }
    }
    if worst > 1e-9 {
        return Err(Error::BoundaryDependenceOnNormalFiber(worst));
    }
    Ok(BoundaryPhase {
        phase: psi.clone(),
        normal_fiber_residual: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine() -> ProfileFn {
        ProfileFn::Sine { a: 2.0, b: 1.0 }
    }

    #[test]
    fn admissibility_examples() {
        let tol = AdmissibilityTolerances::default();
        let id = check_admissible(&charts::identity(2), &SampleGrid::default_for(2), &tol).unwrap();
        assert!(id.passed);
        assert!(
            id.criteria.iter().all(|c| c.worst_residual == 0.0),
            "{id:?}"
        );
        let s =
            check_admissible(&charts::simple(sine()), &SampleGrid::default_for(2), &tol).unwrap();
        assert!(s.passed, "{s:?}");
        let sc =
            check_admissible(&charts::scaling(2, 2.0), &SampleGrid::default_for(2), &tol).unwrap();
        assert!(!sc.criterion("symplecticity").unwrap().passed);
        let mut bad = SampleGrid::default_for(2);
        bad.points.push(vec![0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            check_admissible(&charts::identity(2), &bad, &tol),
            Err(Error::DegenerateFiber(_))
        ));
    }

    #[test]
    fn boundary_maps() {
        let bm = induce_boundary_map(&charts::simple(sine())).unwrap();
        let (x, xi) = bm.chi(&[0.4], &[1.3]);
        assert!((x[0] - 0.4).abs() < 1e-14 && (xi[0] - 1.3).abs() < 1e-14);
        let a = 0.3;
        let bm = induce_boundary_map(&charts::boundary_lift(a)).unwrap();
        let y = 0.7;
        assert!((bm.b(&[y])[0] - (y + a * y.sin())).abs() < 1e-14);
        // cotangent-lift oracle: ξ′ = (db)^{-T} η′
        let db =
            crate::numerics::fd_derivative(&|t: f64| C64::new(t + a * t.sin(), 0.0), y, 1, 1e-5).re;
        assert!((bm.chi(&[y], &[2.0]).1[0] - 2.0 / db).abs() < 1e-9);
        let rot = induce_boundary_map(&charts::rotation_lift(0.4)).unwrap();
        let b = rot.b(&[1.0, 0.0]);
        assert!((b[0] - 0.4f64.cos()).abs() < 1e-14 && (b[1] - 0.4f64.sin()).abs() < 1e-14);
        let not_lift = SymplectomorphismChart::new("nonlinear", 2, |p| {
            vec![
                p[0],
                p[1],
                p[2] + 0.1 * p[2].powi(2) / (p[2].abs() + p[3].abs()),
                p[3],
            ]
        });
        assert!(matches!(
            induce_boundary_map(&not_lift),
            Err(Error::NotALift(_))
        ));
    }

    #[test]
    fn flows() {
        let id = hamiltonian_flow_chart(&hamiltonians::zero(), 0.3).unwrap();
        let p = [0.1, 0.2, 0.3, -0.4];
        assert_eq!(id.forward(&p), p.to_vec());
        let tr = hamiltonian_flow_chart(&hamiltonians::translation(), 0.25).unwrap();
        let q = tr.forward(&p);
        assert!(
            (q[0] - 0.35).abs() < 1e-12 && (q[1] - 0.2).abs() < 1e-12 && (q[2] - 0.3).abs() < 1e-12
        );
        let sh = hamiltonian_flow_chart(&hamiltonians::normal_shear(0.5), 0.1).unwrap();
        let rep = check_admissible(
            &sh,
            &SampleGrid::default_for(2),
            &AdmissibilityTolerances::uniform(1e-6),
        )
        .unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.round_trip_residual < 1e-8);
        let tl = hamiltonian_flow_chart(&hamiltonians::tangent_lift(0.5), 0.2).unwrap();
        assert!(induce_boundary_map(&tl).is_ok());
        // the unmodified shear moves the boundary
        let raw = Hamiltonian::new(
            "raw",
            2,
            |p| p[3] * p[2] * p[2] / (p[2] * p[2] + p[3] * p[3]),
            |p| {
                let (e1, en) = (p[2], p[3]);
                let s = e1 * e1 + en * en;
                vec![
                    0.0,
                    0.0,
                    2.0 * e1 * en.powi(3) / (s * s),
                    e1 * e1 * (e1 * e1 - en * en) / (s * s),
                ]
            },
        );
        assert!(matches!(
            hamiltonian_flow_chart(&raw.scaled(0.1), 0.1),
            Err(Error::AdmissibilityViolated(_))
        ));
    }

    #[test]
    fn phases_from_charts() {
        let p = build_phase(&charts::identity(2), Quantization::Left).unwrap();
        assert!((p.eval(&[0.3, 0.5], &[2.0, -1.0]) - 0.1).abs() < 1e-12);
        let s = build_phase(&charts::simple(sine()), Quantization::Left).unwrap();
        let closed = phases::simple(sine());
        for &(x, xi) in &[([0.3, 0.5], [2.0, -1.0]), ([-0.2, 1.5], [0.5, 3.0])] {
            assert!((s.eval(&x, &xi) - closed.eval(&x, &xi)).abs() < 1e-9);
        }
        let fl = hamiltonian_flow_chart(&hamiltonians::normal_shear(0.5), 0.1).unwrap();
        let l = build_phase(&fl, Quantization::Left).unwrap();
        let r = build_phase(&fl, Quantization::Right).unwrap();
        assert!(l.graph_residual <= 1e-6 && r.graph_residual <= 1e-6);
        assert!(phase_boundary_part(&l).is_ok());
    }

    #[test]
    fn boundary_parts() {
        let b = phase_boundary_part(&phases::identity(2)).unwrap();
        assert!((b.eval(&[0.3], &[2.0]) - 0.6).abs() < 1e-15);
        let b = phase_boundary_part(&phases::simple(sine())).unwrap();
        assert!((b.eval(&[0.3], &[2.0]) - 0.6).abs() < 1e-15);
        assert!(matches!(
            phase_boundary_part(&phases::boundary_violating(0.5)),
            Err(Error::BoundaryDependenceOnNormalFiber(_))
        ));
    }
}
