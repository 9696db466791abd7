//! Discretized function spaces on ℝ, ℝ₊ and ℝ₋.
//!
//! Functions on ℝ₊ are expanded in the orthonormal Laguerre functions
//! φ_k(x) = √β e^{-βx/2} L_k(βx); functions on ℝ₋ use φ_k(-x). A full-line
//! vector is the pair (plus, minus). The dilation κ_λ maps the basis of
//! scale β onto the basis of scale λβ, so it acts exactly by relabelling the scale.
//!
//! On the frequency side e⁺φ_k transforms to the Malmquist–Takenaka function
//! Φ_k(ξ) = √β (iξ-β/2)^k / (iξ+β/2)^{k+1}. Under the Cayley map
//! ξ = (β/2) cot(θ/2) these become √β w^k/(iξ+β/2) with w = e^{iθ}, so transforms and
//! the H⁺/H₀⁻ splitting reduce to Fourier series on the circle.

use crate::error::{Error, Result};
use crate::numerics::{scaled_laguerre_all, to_complex, GaussLaguerre, GaussLegendre, C64, I};
use nalgebra::{DMatrix, DVector};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default number of Laguerre modes.
pub const DEFAULT_MODES: usize = 64;
/// Default frequency grid size.
pub const DEFAULT_FREQ_POINTS: usize = 4096;
/// Default jet cap J.
pub const DEFAULT_JET_CAP: usize = 8;

/// Orthonormal Laguerre basis on ℝ₊ with its quadrature and frequency grid parameters.
#[derive(Clone, Debug)]
pub struct HalfLineBasis {
    n: usize,
    beta: f64,
    jet_cap: usize,
    freq_points: usize,
}

impl Default for HalfLineBasis {
    fn default() -> Self {
        Self::new(DEFAULT_MODES, 2.0)
    }
}

impl HalfLineBasis {
    pub fn new(n: usize, beta: f64) -> Self {
        assert!(n >= 1 && beta > 0.0);
        Self {
            n,
            beta,
            jet_cap: DEFAULT_JET_CAP,
            freq_points: DEFAULT_FREQ_POINTS,
        }
    }

    pub fn with_freq_points(mut self, m: usize) -> Self {
        self.freq_points = m;
        self
    }

    pub fn with_jet_cap(mut self, j: usize) -> Self {
        self.jet_cap = j;
        self
    }

    /// Same mode count and grid, scale multiplied by `lambda`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        Self {
            beta: self.beta * lambda,
            ..self.clone()
        }
    }

    /// Same scale, different mode count.
    pub fn with_modes(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn jet_cap(&self) -> usize {
        self.jet_cap
    }
    pub fn freq_points(&self) -> usize {
        self.freq_points
    }

    /// φ_0(x), …, φ_{len-1}(x) for x ≥ 0.
    pub fn phi_values(&self, x: f64, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        scaled_laguerre_all(len, self.beta * x, &mut out);
        let s = self.beta.sqrt();
        out.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Matrix of φ_k(x_i) for the given points (rows) and `len` modes (columns).
    pub fn phi_matrix(&self, xs: &[f64], len: usize) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(xs.len(), len);
        for (i, &x) in xs.iter().enumerate() {
            let v = self.phi_values(x, len);
            for k in 0..len {
                m[(i, k)] = v[k];
            }
        }
        m
    }

    /// Φ_0(ξ), …, Φ_{len-1}(ξ): transforms of e⁺φ_k.
    pub fn mt_plus(&self, xi: f64, len: usize) -> Vec<C64> {
        mt_values(self.beta, xi, len)
    }

    /// Transforms of e⁻φ_k(-·), i.e. Φ_k(-ξ).
    pub fn mt_minus(&self, xi: f64, len: usize) -> Vec<C64> {
        mt_values(self.beta, -xi, len)
    }

    /// Gauss–Laguerre nodes/weights in x for ∫₀^∞ f(x) dx with f ≈ e^{-rate·x}·smooth.
    pub fn quadrature(&self, n_q: usize, rate: f64) -> (Vec<f64>, Vec<f64>) {
        let g = GaussLaguerre::new(n_q);
        let xs = g.nodes.iter().map(|t| t / rate).collect();
        let ws = g.scaled_weights.iter().map(|w| w / rate).collect();
        (xs, ws)
    }

    /// Exact differentiation matrix on span{φ_0..φ_{n-1}}: (u')_coeffs = D u_coeffs.
    pub fn diff_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, k| {
            if i == k {
                -0.5 * self.beta
            } else if i < k {
                -self.beta
            } else {
                0.0
            }
        })
    }

    /// Row r_j with u^{(j)}(0⁺) = r_j · c for plus-side coefficients c.
    pub fn jet_row(&self, j: usize) -> DVector<f64> {
        let d = self.diff_matrix();
        let mut row = DVector::from_element(self.n, self.beta.sqrt());
        for _ in 0..j {
            row = d.transpose() * row;
        }
        row
    }

    /// Gram matrix ∫₀^∞ φ_k φ_l w(x) dx.
    pub fn weighted_gram<F: Fn(f64) -> f64>(&self, w: F, n_q: usize) -> DMatrix<f64> {
        let (xs, ws) = self.quadrature(n_q, self.beta);
        let p = self.phi_matrix(&xs, self.n);
        let mut g = DMatrix::<f64>::zeros(self.n, self.n);
        for i in 0..xs.len() {
            let wi = ws[i] * w(xs[i]);
            if wi == 0.0 {
                continue;
            }
            let row = p.row(i);
            g += row.transpose() * row * wi;
        }
        g
    }

    /// Gram matrix of the restriction norm Σ_{j≤s1} ‖⟨x⟩^{s2} ∂^j u‖² on ℝ₊.
    pub fn sobolev_gram(&self, s1: usize, s2: f64) -> DMatrix<f64> {
        let w = if s2 == 0.0 {
            DMatrix::<f64>::identity(self.n, self.n)
        } else {
            self.weighted_gram(|x| (1.0 + x * x).powf(s2), 3 * self.n + 16)
        };
        let d = self.diff_matrix();
        let mut dj = DMatrix::<f64>::identity(self.n, self.n);
        let mut g = DMatrix::<f64>::zeros(self.n, self.n);
        for _ in 0..=s1 {
            g += dj.transpose() * &w * &dj;
            dj = &d * dj;
        }
        g
    }

    /// Coefficients of a function on ℝ₊ by quadrature.
    pub fn project<F: Fn(f64) -> C64>(&self, f: F) -> DVector<C64> {
        let n_q = self.n + 24;
        let (xs, ws) = self.quadrature(n_q, self.beta);
        let p = self.phi_matrix(&xs, self.n);
        let mut c = DVector::<C64>::zeros(self.n);
        for i in 0..xs.len() {
            let fi = f(xs[i]) * ws[i];
            if fi == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..self.n {
                c[k] += fi * p[(i, k)];
            }
        }
        c
    }

    /// Overlap matrix ⟨φ_k^{(β_row)}, φ_l^{(β_col)}⟩ between two scales.
    pub fn cross_gram(n_rows: usize, beta_row: f64, n_cols: usize, beta_col: f64) -> DMatrix<f64> {
        let n_q = n_rows.max(n_cols) + 8;
        let g = GaussLaguerre::new(n_q);
        let sum = beta_row + beta_col;
        let pref = 2.0 * (beta_row * beta_col).sqrt() / sum;
        let mut out = DMatrix::<f64>::zeros(n_rows, n_cols);
        let mut a = vec![0.0; n_rows];
        let mut b = vec![0.0; n_cols];
        for (t, w) in g.nodes.iter().zip(&g.scaled_weights) {
            scaled_laguerre_all(n_rows, 2.0 * beta_row * t / sum, &mut a);
            scaled_laguerre_all(n_cols, 2.0 * beta_col * t / sum, &mut b);
            for k in 0..n_rows {
                let ak = a[k] * w * pref;
                for l in 0..n_cols {
                    out[(k, l)] += ak * b[l];
                }
            }
        }
        out
    }

    /// Matrix of the plain dilation u ↦ u(λ·) on span{φ_k} (not unitary).
    pub fn dilation_matrix(&self, lambda: f64) -> DMatrix<f64> {
        Self::cross_gram(self.n, self.beta, self.n, lambda * self.beta) / lambda.sqrt()
    }

    pub fn freq_grid(&self) -> FrequencyGrid {
        FrequencyGrid::new(self.freq_points, self.beta)
    }
}

/// Φ_k(ξ) for k < len at scale β.
pub fn mt_values(beta: f64, xi: f64, len: usize) -> Vec<C64> {
    let denom = C64::new(0.5 * beta, xi);
    let w = C64::new(-0.5 * beta, xi) / denom;
    let mut cur = C64::new(beta.sqrt(), 0.0) / denom;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(cur);
        cur *= w;
    }
    out
}

/// Cayley-mapped frequency grid ξ_j = (β/2) cot(θ_j/2), θ_j = 2π(j+½)/M.
///
/// `(1/2π)∫ f(ξ) dξ ≈ (1/M) Σ_j f(ξ_j) jac_j` with jac_j = (ξ_j² + β²/4)/β.
#[derive(Clone, Debug)]
pub struct FrequencyGrid {
    pub m: usize,
    pub beta: f64,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub jac: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(m: usize, beta: f64) -> Self {
        let theta: Vec<f64> = (0..m)
            .map(|j| 2.0 * PI * (j as f64 + 0.5) / m as f64)
            .collect();
        let xi: Vec<f64> = theta.iter().map(|t| 0.5 * beta / (0.5 * t).tan()).collect();
        let jac = xi
            .iter()
            .map(|x| (x * x + 0.25 * beta * beta) / beta)
            .collect();
        Self {
            m,
            beta,
            theta,
            xi,
            jac,
        }
    }

    /// (1/2π) ∫ f(ξ) dξ on the grid.
    pub fn integrate(&self, f: &[C64]) -> C64 {
        f.iter().zip(&self.jac).map(|(v, j)| v * *j).sum::<C64>() / self.m as f64
    }

    /// Fourier coefficients ĝ_k, k ∈ [-M/2, M/2), of g(θ) sampled on the grid.
    /// Returned in FFT order: index k for k ≥ 0 and M + k for k < 0.
    pub fn circle_coefficients(&self, g: &[C64]) -> Vec<C64> {
        let m = self.m;
        let mut buf = g.to_vec();
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_forward(m).process(&mut buf);
        for (idx, v) in buf.iter_mut().enumerate() {
            let k = if idx < m / 2 {
                idx as f64
            } else {
                idx as f64 - m as f64
            };
            *v *= C64::from_polar(1.0 / m as f64, -PI * k / m as f64);
        }
        buf
    }

    /// ĝ_k from the FFT-ordered output of [`Self::circle_coefficients`].
    pub fn coeff(c: &[C64], k: i64) -> C64 {
        let m = c.len() as i64;
        if k >= m / 2 || k < -m / 2 {
            return C64::new(0.0, 0.0);
        }
        c[(if k >= 0 { k } else { m + k }) as usize]
    }

    /// Splits frequency samples of an L² function into plus/minus Laguerre coefficients.
    pub fn hardy_split(&self, values: &[C64], n: usize) -> (DVector<C64>, DVector<C64>) {
        let s = self.beta.sqrt();
        let g: Vec<C64> = values
            .iter()
            .zip(&self.xi)
            .map(|(v, x)| v * C64::new(0.5 * self.beta, *x) / s)
            .collect();
        let c = self.circle_coefficients(&g);
        let plus = DVector::from_fn(n, |k, _| Self::coeff(&c, k as i64));
        let minus = DVector::from_fn(n, |k, _| -Self::coeff(&c, -(k as i64) - 1));
        (plus, minus)
    }
}

/// Which half-line(s) a vector lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Full,
    Plus,
    Minus,
}

/// A function on ℝ, ℝ₊ or ℝ₋ in the Laguerre basis of scale `beta`.
#[derive(Clone, Debug)]
pub struct LineVector {
    pub side: Side,
    pub beta: f64,
    pub plus: DVector<C64>,
    pub minus: DVector<C64>,
    /// u^{(j)}(0⁺) for j ≤ J (plus side).
    pub jet: Vec<C64>,
}

impl LineVector {
    pub fn new(side: Side, beta: f64, plus: DVector<C64>, minus: DVector<C64>) -> Self {
        assert_eq!(plus.len(), minus.len());
        let mut v = Self {
            side,
            beta,
            plus,
            minus,
            jet: Vec::new(),
        };
        v.refresh_jet(DEFAULT_JET_CAP);
        v
    }

    pub fn plus(beta: f64, c: DVector<C64>) -> Self {
        let n = c.len();
        Self::new(Side::Plus, beta, c, DVector::zeros(n))
    }

    pub fn minus(beta: f64, c: DVector<C64>) -> Self {
        let n = c.len();
        Self::new(Side::Minus, beta, DVector::zeros(n), c)
    }

    pub fn full(beta: f64, plus: DVector<C64>, minus: DVector<C64>) -> Self {
        Self::new(Side::Full, beta, plus, minus)
    }

    /// Projects f on ℝ₊.
    pub fn plus_from_fn<F: Fn(f64) -> C64>(basis: &HalfLineBasis, f: F) -> Self {
        Self::plus(basis.beta, basis.project(f))
    }

    /// Projects f on ℝ₋ (f is evaluated at negative arguments).
    pub fn minus_from_fn<F: Fn(f64) -> C64>(basis: &HalfLineBasis, f: F) -> Self {
        Self::minus(basis.beta, basis.project(|x| f(-x)))
    }

    /// Projects f on ℝ.
    pub fn full_from_fn<F: Fn(f64) -> C64>(basis: &HalfLineBasis, f: F) -> Self {
        Self::full(basis.beta, basis.project(&f), basis.project(|x| f(-x)))
    }

    pub fn n(&self) -> usize {
        self.plus.len()
    }

    pub fn basis(&self) -> HalfLineBasis {
        HalfLineBasis::new(self.n(), self.beta)
    }

    fn refresh_jet(&mut self, cap: usize) {
        let b = self.basis();
        let d = b.diff_matrix();
        let mut c = self.plus.clone();
        let s = self.beta.sqrt();
        self.jet.clear();
        for _ in 0..=cap {
            self.jet.push(c.iter().sum::<C64>() * s);
            c = d.map(|x| C64::new(x, 0.0)) * c;
        }
    }

    /// u^{(j)}(0⁺) from the basis derivative formula.
    pub fn jet_value(&self, j: usize) -> C64 {
        if j < self.jet.len() {
            return self.jet[j];
        }
        let row = self.basis().jet_row(j);
        row.iter().zip(self.plus.iter()).map(|(r, c)| c * *r).sum()
    }

    /// Pointwise evaluation.
    pub fn eval(&self, x: f64) -> C64 {
        let b = self.basis();
        if x >= 0.0 {
            let p = b.phi_values(x, self.n());
            p.iter().zip(self.plus.iter()).map(|(a, c)| c * *a).sum()
        } else {
            let p = b.phi_values(-x, self.n());
            p.iter().zip(self.minus.iter()).map(|(a, c)| c * *a).sum()
        }
    }

    /// Plus-side derivative ∂u (interior derivative on ℝ₊, exact on the span).
    pub fn derivative_plus(&self) -> DVector<C64> {
        let d = self.basis().diff_matrix().map(|x| C64::new(x, 0.0));
        d * &self.plus
    }

    /// Re-expands the vector in the basis of scale `beta` with `n` modes.
    pub fn rescale_to(&self, beta: f64, n: usize) -> Self {
        let g = HalfLineBasis::cross_gram(n, beta, self.n(), self.beta).map(|x| C64::new(x, 0.0));
        Self::new(self.side, beta, &g * &self.plus, &g * &self.minus)
    }

    /// L²(ℝ) inner product ⟨self, other⟩ (conjugate-linear in self).
    pub fn inner(&self, other: &LineVector) -> C64 {
        let o = if (other.beta - self.beta).abs() > 1e-14 * self.beta || other.n() != self.n() {
            other.rescale_to(self.beta, self.n())
        } else {
            other.clone()
        };
        self.plus.dotc(&o.plus) + self.minus.dotc(&o.minus)
    }
}

/// Extension/restriction operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtRes {
    EPlus,
    RPlus,
    EMinus,
    RMinus,
}

/// e^± (extension by zero) and r^± (restriction).
pub fn extend_restrict(u: &LineVector, op: ExtRes) -> Result<LineVector> {
    let n = u.n();
    match op {
        ExtRes::EPlus => {
            if u.side != Side::Plus {
                return Err(Error::SideMismatch(format!(
                    "e+ needs a plus-side vector, got {:?}",
                    u.side
                )));
            }
            Ok(LineVector::full(u.beta, u.plus.clone(), DVector::zeros(n)))
        }
        ExtRes::EMinus => {
            if u.side != Side::Minus {
                return Err(Error::SideMismatch(format!(
                    "e- needs a minus-side vector, got {:?}",
                    u.side
                )));
            }
            Ok(LineVector::full(u.beta, DVector::zeros(n), u.minus.clone()))
        }
        ExtRes::RPlus => {
            if u.side == Side::Plus {
                return Err(Error::SideMismatch(
                    "r+ needs a full-line vector, got Plus".into(),
                ));
            }
            Ok(LineVector::plus(u.beta, u.plus.clone()))
        }
        ExtRes::RMinus => {
            if u.side == Side::Minus {
                return Err(Error::SideMismatch(
                    "r- needs a full-line vector, got Minus".into(),
                ));
            }
            Ok(LineVector::minus(u.beta, u.minus.clone()))
        }
    }
}

/// Samples of a transform on the Cayley grid.
#[derive(Clone, Debug)]
pub struct FrequencyVector {
    pub beta: f64,
    pub values: Vec<C64>,
}

/// Forward transform F u(ξ) = ∫ u(x) e^{-ixξ} dx of a full-line vector.
pub fn transform_forward(u: &LineVector, grid: &FrequencyGrid) -> Result<FrequencyVector> {
    if u.side != Side::Full {
        return Err(Error::SideMismatch(
            "transform needs a full-line vector".into(),
        ));
    }
    let n = u.n();
    let values = grid
        .xi
        .iter()
        .map(|&xi| {
            let p = mt_values(u.beta, xi, n);
            let m = mt_values(u.beta, -xi, n);
            (0..n).map(|k| p[k] * u.plus[k] + m[k] * u.minus[k]).sum()
        })
        .collect();
    Ok(FrequencyVector {
        beta: u.beta,
        values,
    })
}

/// Inverse transform onto `n` modes of each side.
pub fn transform_inverse(f: &FrequencyVector, grid: &FrequencyGrid, n: usize) -> LineVector {
    let (p, m) = grid.hardy_split(&f.values, n);
    LineVector::full(f.beta, p, m)
}

/// κ_λ u(x) = λ^{1/2} u(λx): relabels the basis scale β → λβ.
pub fn dilate(u: &LineVector, lambda: f64) -> Result<LineVector> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonpositiveScale(lambda));
    }
    Ok(LineVector::new(
        u.side,
        u.beta * lambda,
        u.plus.clone(),
        u.minus.clone(),
    ))
}

/// Norms, seminorms and jets reported by [`measure`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Space {
    L2,
    /// L² with weight w(x) = (1+|x|)⁻².
    L2w,
    /// Σ_{j≤s1} ‖⟨x⟩^{s2} ∂^j u‖² on each half-line.
    H {
        s1: usize,
        s2: f64,
    },
    /// sup |x^δ ∂^γ u|.
    Schwartz {
        delta: u32,
        gamma: usize,
    },
    /// u^{(j)}(0⁺).
    Jet(usize),
}

/// Weight of L²_w.
pub fn weight_w(x: f64) -> f64 {
    1.0 / (1.0 + x.abs()).powi(2)
}

fn raw_measure(u: &LineVector, space: Space) -> f64 {
    let b = u.basis();
    let n = u.n();
    let sides: Vec<&DVector<C64>> = match u.side {
        Side::Plus => vec![&u.plus],
        Side::Minus => vec![&u.minus],
        Side::Full => vec![&u.plus, &u.minus],
    };
    let quad = |g: &DMatrix<f64>| -> f64 {
        let gc = g.map(|x| C64::new(x, 0.0));
        sides
            .iter()
            .map(|c| (c.adjoint() * &gc * *c)[(0, 0)].re)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    };
    match space {
        Space::L2 => sides.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt(),
        Space::L2w => quad(&b.weighted_gram(weight_w, 4 * n + 32)),
        Space::H { s1, s2 } => quad(&b.sobolev_gram(s1, s2)),
        Space::Schwartz { delta, gamma } => {
            let d = b.diff_matrix().map(|x| C64::new(x, 0.0));
            let xmax = (4.0 * n as f64 + 60.0) / b.beta();
            let pts = 1500;
            let xs: Vec<f64> = (0..=pts).map(|i| xmax * i as f64 / pts as f64).collect();
            let p = b.phi_matrix(&xs, n).map(|x| C64::new(x, 0.0));
            let mut best: f64 = 0.0;
            for c in &sides {
                let mut dc = (*c).clone();
                for _ in 0..gamma {
                    dc = &d * dc;
                }
                let vals = &p * dc;
                for (i, x) in xs.iter().enumerate() {
                    best = best.max(x.powi(delta as i32) * vals[i].norm());
                }
            }
            best
        }
        Space::Jet(j) => u.jet_value(j).norm(),
    }
}

/// Named norm/seminorm/jet of a discrete vector, with a resolution check that compares
/// the value on the leading N/2 modes with the value on all N modes.
pub fn measure(u: &LineVector, space: Space) -> Result<f64> {
    let n = u.n();
    if let Space::H { s1, .. } = space {
        if s1 > n / 4 {
            return Err(Error::UnderResolved(format!(
                "Sobolev order {s1} exceeds N/4 = {}",
                n / 4
            )));
        }
    }
    let full = raw_measure(u, space);
    if let Space::Jet(_) = space {
        return Ok(full);
    }
    let half = n / 2;
    let mut trunc = u.clone();
    for k in half..n {
        trunc.plus[k] = C64::new(0.0, 0.0);
        trunc.minus[k] = C64::new(0.0, 0.0);
    }
    let coarse = raw_measure(&trunc, space);
    if (full - coarse).abs() > 0.01 * full.max(1e-300) {
        return Err(Error::UnderResolved(format!(
            "value changes from {coarse:.6e} (N/2 modes) to {full:.6e} (N modes)"
        )));
    }
    Ok(full)
}

/// Measures a function given pointwise, comparing projections at N and 2N modes.
pub fn measure_fn<F: Fn(f64) -> C64>(
    f: F,
    side: Side,
    basis: &HalfLineBasis,
    space: Space,
) -> Result<f64> {
    if let Space::L2 | Space::L2w = space {
        // Direct quadrature on the mapped interval x = t/(1-t); needs no decay of f.
        let integral = |panels: usize| -> f64 {
            let g = GaussLegendre::composite(16, 0.0, 1.0, panels);
            let mut s = 0.0;
            for (t, w) in g.nodes.iter().zip(&g.weights) {
                let x = t / (1.0 - t);
                let jac = 1.0 / (1.0 - t).powi(2);
                let wt = if space == Space::L2w {
                    weight_w(x)
                } else {
                    1.0
                };
                let mut v = 0.0;
                if side != Side::Minus {
                    v += f(x).norm_sqr();
                }
                if side != Side::Plus {
                    v += f(-x).norm_sqr();
                }
                s += w * jac * wt * v;
            }
            s.sqrt()
        };
        let coarse = integral(basis.n());
        let fine = integral(2 * basis.n());
        if !fine.is_finite() || (fine - coarse).abs() > 0.01 * fine.abs().max(1e-300) {
            return Err(Error::UnderResolved(format!(
                "N: {coarse:.6e}, 2N: {fine:.6e}"
            )));
        }
        return Ok(fine);
    }
    let make = |b: &HalfLineBasis| match side {
        Side::Plus => LineVector::plus_from_fn(b, &f),
        Side::Minus => LineVector::minus_from_fn(b, &f),
        Side::Full => LineVector::full_from_fn(b, &f),
    };
    let coarse = raw_measure(&make(basis), space);
    let fine = raw_measure(&make(&basis.with_modes(2 * basis.n())), space);
    if (fine - coarse).abs() > 0.01 * fine.abs().max(1e-300) {
        return Err(Error::UnderResolved(format!(
            "N: {coarse:.6e}, 2N: {fine:.6e}"
        )));
    }
    Ok(fine)
}

/// Operator norm of κ_λ on L²_w restricted to the span of the basis.
pub fn dilation_norm_weighted(basis: &HalfLineBasis, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonpositiveScale(lambda));
    }
    let n_q = 4 * basis.n() + 32;
    let g = basis.weighted_gram(weight_w, n_q);
    let gl = basis.rescaled(lambda).weighted_gram(weight_w, n_q);
    let (_, ginv) = crate::numerics::hermitian_sqrt_pair(&to_complex(&g));
    let m = &ginv * to_complex(&gl) * &ginv;
    Ok(crate::numerics::spectral_norm(&m).sqrt())
}

/// A functional on plus-side vectors: smooth part plus Dirac atoms δ₀^{(j)}.
#[derive(Clone, Debug)]
pub struct DualVector {
    pub beta: f64,
    /// ⟨F, u⟩ = Σ_k smooth[k] · u_k (bilinear).
    pub smooth: DVector<C64>,
    /// (j, weight) for weight · δ₀^{(j)}.
    pub atoms: Vec<(usize, C64)>,
}

impl DualVector {
    /// Bilinear pairing with a plus-side vector; ⟨δ^{(j)}, u⟩ = (-1)^j u^{(j)}(0).
    pub fn pair(&self, u: &LineVector) -> C64 {
        let u = if (u.beta - self.beta).abs() > 1e-14 * self.beta || u.n() != self.smooth.len() {
            u.rescale_to(self.beta, self.smooth.len())
        } else {
            u.clone()
        };
        let mut s: C64 = self
            .smooth
            .iter()
            .zip(u.plus.iter())
            .map(|(a, b)| a * b)
            .sum();
        for &(j, w) in &self.atoms {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            s += w * sign * u.jet_value(j);
        }
        s
    }

    /// Transform on the grid; the atom δ^{(j)} contributes (iξ)^j.
    pub fn transform(&self, grid: &FrequencyGrid) -> Vec<C64> {
        let n = self.smooth.len();
        grid.xi
            .iter()
            .map(|&xi| {
                let p = mt_values(self.beta, xi, n);
                let mut s: C64 = (0..n).map(|k| p[k] * self.smooth[k]).sum();
                for &(j, w) in &self.atoms {
                    s += w * (I * xi).powu(j as u32);
                }
                s
            })
            .collect()
    }
}

/// δ₀^{(j)} as a symbolic atom.
pub fn delta_rep(j: usize, basis: &HalfLineBasis) -> Result<DualVector> {
    if j > basis.jet_cap() {
        return Err(Error::JetCapExceeded {
            requested: j,
            cap: basis.jet_cap(),
        });
    }
    Ok(DualVector {
        beta: basis.beta(),
        smooth: DVector::zeros(basis.n()),
        atoms: vec![(j, C64::new(1.0, 0.0))],
    })
}

/// Relative residual of the induction identity
/// ξ^j F(e⁺u) = (−i)^j (F(e⁺u^{(j)}) + Σ_{l<j} u^{(l)}(0) F(δ₀^{(j−l−1)}))
/// over the grid points with |ξ| ≤ `xi_max`. `hat` is the exact transform of e⁺u; the right side
/// is assembled from the basis derivative matrix, basis jets and the Dirac atoms.
pub fn derivative_induction_residual<F: Fn(f64) -> C64>(
    u: &LineVector,
    hat: F,
    j: usize,
    grid: &FrequencyGrid,
    xi_max: f64,
) -> Result<f64> {
    if u.side != Side::Plus {
        return Err(Error::SideMismatch(
            "the induction identity needs a plus-side vector".into(),
        ));
    }
    let basis = u.basis();
    let d = to_complex(&basis.diff_matrix());
    let mut dj = u.plus.clone();
    for _ in 0..j {
        dj = &d * dj;
    }
    let uj = LineVector::full(u.beta, dj, DVector::zeros(u.n()));
    let tj = transform_forward(&uj, grid)?;
    let atoms = (0..j)
        .map(|k| delta_rep(k, &basis).map(|a| a.transform(grid)))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for (i, &x) in grid.xi.iter().enumerate() {
        if x.abs() > xi_max {
            continue;
        }
        let lhs = C64::new(x, 0.0).powu(j as u32) * hat(x);
        let mut rhs = tj.values[i];
        for l in 0..j {
            rhs += u.jet_value(l) * atoms[j - l - 1][i];
        }
        rhs *= (-I).powu(j as u32);
        worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn gram_is_identity() {
        let b = HalfLineBasis::default();
        let g = b.weighted_gram(|_| 1.0, 80);
        let e = (g - DMatrix::<f64>::identity(64, 64)).abs().max();
        assert!(e < 1e-10, "{e}");
    }

    #[test]
    fn exp_is_first_mode_at_beta_two() {
        let b = HalfLineBasis::new(24, 2.0);
        let u = LineVector::plus_from_fn(&b, |x| c((-x).exp()));
        assert!((u.plus[0].re - 1.0 / 2f64.sqrt()).abs() < 1e-11);
        assert!(u.plus.iter().skip(1).all(|v| v.norm() < 1e-11));
        assert!((u.jet_value(0).re - 1.0).abs() < 1e-12);
        assert!((u.jet_value(3).re + 1.0).abs() < 1e-7);
    }

    #[test]
    fn derivative_matrix_matches_analytic_derivative() {
        let b = HalfLineBasis::new(32, 2.0);
        let u = LineVector::plus_from_fn(&b, |x| c(x * x * (-x).exp()));
        let du = LineVector::plus(2.0, u.derivative_plus());
        for &x in &[0.1f64, 0.7, 2.5] {
            let exact = (2.0 * x - x * x) * (-x).exp();
            assert!((du.eval(x).re - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn extension_restriction_identities() {
        let b = HalfLineBasis::new(16, 2.0);
        let u = LineVector::plus_from_fn(&b, |x| c((-x).exp()));
        let back =
            extend_restrict(&extend_restrict(&u, ExtRes::EPlus).unwrap(), ExtRes::RPlus).unwrap();
        assert!((back.plus - &u.plus).norm() < 1e-15);
        let v = LineVector::minus_from_fn(&b, |x| c(x.exp()));
        let z =
            extend_restrict(&extend_restrict(&v, ExtRes::EMinus).unwrap(), ExtRes::RPlus).unwrap();
        assert!(z.plus.norm() == 0.0);
        assert!(matches!(
            extend_restrict(&u, ExtRes::RPlus),
            Err(Error::SideMismatch(_))
        ));
        assert!(matches!(
            extend_restrict(&u, ExtRes::EMinus),
            Err(Error::SideMismatch(_))
        ));
    }

    #[test]
    fn e_plus_r_plus_minus_one_on_two_sided_exponential() {
        let b = HalfLineBasis::new(16, 2.0);
        let u = LineVector::full_from_fn(&b, |x| c((-x.abs()).exp()));
        let epr =
            extend_restrict(&extend_restrict(&u, ExtRes::RPlus).unwrap(), ExtRes::EPlus).unwrap();
        for &x in &[-2.0f64, -0.5, 0.5, 1.5] {
            let lhs = epr.eval(x) - u.eval(x);
            let expected = if x < 0.0 { -x.exp() } else { 0.0 };
            assert!((lhs.re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_of_extended_exponential() {
        let b = HalfLineBasis::new(16, 2.0);
        let g = FrequencyGrid::new(1024, 2.0);
        let u = extend_restrict(
            &LineVector::plus_from_fn(&b, |x| c((-x).exp())),
            ExtRes::EPlus,
        )
        .unwrap();
        let f = transform_forward(&u, &g).unwrap();
        for (xi, v) in g.xi.iter().zip(&f.values) {
            assert!((v - C64::new(1.0, 0.0) / C64::new(1.0, *xi)).norm() < 1e-11);
        }
    }

    #[test]
    fn round_trip_and_plancherel() {
        let b = HalfLineBasis::new(24, 2.0);
        let g = FrequencyGrid::new(512, 2.0);
        let plus = DVector::from_fn(24, |k, _| {
            C64::new((k as f64 * 0.7).sin(), (k as f64).cos() * 0.3)
        });
        let minus = DVector::from_fn(24, |k, _| C64::new(1.0 / (k as f64 + 1.0), 0.2));
        let u = LineVector::full(b.beta(), plus, minus);
        let f = transform_forward(&u, &g).unwrap();
        let e2: f64 = g
            .integrate(
                &f.values
                    .iter()
                    .map(|v| C64::new(v.norm_sqr(), 0.0))
                    .collect::<Vec<_>>(),
            )
            .re;
        let n2 = u.plus.norm_squared() + u.minus.norm_squared();
        assert!((e2 - n2).abs() < 1e-10 * n2);
        let back = transform_inverse(&f, &g, 24);
        assert!((back.plus - &u.plus).norm() < 1e-10);
        assert!((back.minus - &u.minus).norm() < 1e-10);
    }

    #[test]
    fn dilation_is_unitary_group_action() {
        let b = HalfLineBasis::new(16, 2.0);
        let u = LineVector::plus_from_fn(&b, |x| c((-x).exp()));
        let v = dilate(&u, 3.0).unwrap();
        assert!((measure(&v, Space::L2).unwrap() - measure(&u, Space::L2).unwrap()).abs() < 1e-14);
        assert!((v.eval(0.4).re - 3f64.sqrt() * (-1.2f64).exp()).abs() < 1e-12);
        assert!(matches!(dilate(&u, 0.0), Err(Error::NonpositiveScale(_))));
        assert!(matches!(dilate(&u, -1.0), Err(Error::NonpositiveScale(_))));
    }

    #[test]
    fn named_norms() {
        let b = HalfLineBasis::default();
        let u = LineVector::plus_from_fn(&b, |x| c((-x).exp()));
        assert!((measure(&u, Space::L2).unwrap() - 0.5f64.sqrt()).abs() < 1e-11);
        let j0 = measure(&u, Space::Jet(0)).unwrap();
        assert!((j0 - 1.0).abs() < 1e-12, "{j0}");
        let one = measure_fn(|_| c(1.0), Side::Plus, &b, Space::L2w).unwrap();
        assert!((one - 1.0).abs() < 1e-10, "{one}");
        let l2 = measure_fn(|x| c((-x).exp()), Side::Plus, &b, Space::L2).unwrap();
        assert!((l2 - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn gaussian_transform_is_gaussian() {
        let b = HalfLineBasis::new(96, 4.0);
        let g = FrequencyGrid::new(2048, 4.0);
        let u = LineVector::full_from_fn(&b, |x| c((-0.5 * x * x).exp()));
        let f = transform_forward(&u, &g).unwrap();
        let s = (2.0 * PI).sqrt();
        for (xi, v) in g.xi.iter().zip(&f.values) {
            assert!((v - c(s * (-0.5 * xi * xi).exp())).norm() < 1e-6, "{xi}");
        }
    }

    #[test]
    fn weighted_dilation_norm_is_not_one() {
        let b = HalfLineBasis::new(32, 2.0);
        let v = dilation_norm_weighted(&b, 3.0).unwrap();
        assert!(v > 1.0 + 1e-3 && v <= 3.0 + 1e-8, "{v}");
        assert!((dilation_norm_weighted(&b, 1.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sobolev_order_cap() {
        let b = HalfLineBasis::new(8, 2.0);
        let u = LineVector::plus_from_fn(&b, |x| c((-x).exp()));
        assert!(matches!(
            measure(&u, Space::H { s1: 3, s2: 0.0 }),
            Err(Error::UnderResolved(_))
        ));
        let h1 = measure(&u, Space::H { s1: 1, s2: 0.0 }).unwrap();
        assert!((h1 - 1.0).abs() < 1e-12); // ‖e^{-x}‖² + ‖e^{-x}‖² = 1
    }

    #[test]
    fn delta_atoms() {
        let b = HalfLineBasis::new(24, 2.0);
        let u = LineVector::plus_from_fn(&b, |x| c(x * x * (-x).exp()));
        let d2 = delta_rep(2, &b).unwrap();
        assert!((d2.pair(&u).re - 2.0).abs() < 1e-9);
        let d0 = delta_rep(0, &b).unwrap();
        let e = LineVector::plus_from_fn(&b, |x| c((-x).exp()));
        assert!((d0.pair(&e).re - 1.0).abs() < 1e-12);
        assert!(matches!(
            delta_rep(99, &b),
            Err(Error::JetCapExceeded { .. })
        ));
        let g = FrequencyGrid::new(64, 2.0);
        let d1 = delta_rep(1, &b).unwrap().transform(&g);
        for (xi, v) in g.xi.iter().zip(d1) {
            assert!((v - I * *xi).norm() < 1e-12 * xi.abs().max(1.0));
        }
    }
}
