//! Shared numerical kernels: Gauss rules, Laguerre functions, cutoffs,
//! finite differences and small least-squares helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;

/// Imaginary unit.
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Japanese bracket ⟨t⟩ = (1 + |t|²)^{1/2} for a vector argument.
pub fn japanese(v: &[f64]) -> f64 {
    (1.0 + v.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Scalar Japanese bracket.
pub fn jbr(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

/// Gauss–Laguerre rule for ∫₀^∞ e^{-t} f(t) dt.
///
/// `scaled_weights[i] = w_i e^{t_i}` so that ∫₀^∞ g(t) dt ≈ Σ scaled_weights[i] g(t_i)
/// for g that decays like e^{-t}; this avoids underflow at large nodes.
#[derive(Clone, Debug)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        // Golub–Welsch start, polished by Newton on e^{-t/2} L_n(t).
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jac[(i, i)] = (2 * i + 1) as f64;
            if i + 1 < n {
                let b = (i + 1) as f64;
                jac[(i, i + 1)] = b;
                jac[(i + 1, i)] = b;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(jac);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut scaled_weights = Vec::with_capacity(n);
        for t in nodes.iter_mut() {
            for _ in 0..8 {
                let (ln, lnm1, _) = if *t > 1000.0 {
                    laguerre_pair_log(n, *t)
                } else {
                    let (a, b) = laguerre_pair(n, *t);
                    (a, b, 0.0)
                };
                // t L_n' = n (L_n - L_{n-1})
                let d = n as f64 * (ln - lnm1) / *t;
                let step = ln / d;
                *t -= step;
                if step.abs() <= 1e-15 * t.abs().max(1e-300) {
                    break;
                }
            }
            // w e^{t} = t / ((n+1) L_{n+1}(t))^2, with scaled L values
            let w_scaled = if *t > 1000.0 {
                let (l_np1, _, log_s) = laguerre_pair_log(n + 1, *t);
                *t / (((n + 1) as f64) * l_np1).powi(2) * (-2.0 * log_s).exp()
            } else {
                *t / (((n + 1) as f64) * scaled_laguerre(n + 1, *t)).powi(2)
            };
            scaled_weights.push(w_scaled);
        }
        Self {
            nodes,
            scaled_weights,
        }
    }
}

/// Returns (ℓ_n(t), ℓ_{n-1}(t)) where ℓ_k(t) = e^{-t/2} L_k(t).
fn laguerre_pair(n: usize, t: f64) -> (f64, f64) {
    if t > 1000.0 {
        let (a, b, log_scale) = laguerre_pair_log(n, t);
        let f = log_scale.exp();
        return (a * f, b * f);
    }
    let mut prev = 0.0;
    let mut cur = (-0.5 * t).exp();
    for k in 0..n {
        let next =
            ((2 * k + 1) as f64 - t) * cur / (k + 1) as f64 - (k as f64) * prev / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// (L_n(t)·s, L_{n-1}(t)·s, log s − t/2) with s chosen to keep the recurrence in range.
fn laguerre_pair_log(n: usize, t: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log_scale = -0.5 * t;
    for k in 0..n {
        let next =
            ((2 * k + 1) as f64 - t) * cur / (k + 1) as f64 - (k as f64) * prev / (k + 1) as f64;
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e150 || (m < 1e-150 && m > 0.0) {
            prev /= m;
            cur /= m;
            log_scale += m.ln();
        }
    }
    (cur, prev, log_scale)
}

/// ℓ_n(t) = e^{-t/2} L_n(t).
pub fn scaled_laguerre(n: usize, t: f64) -> f64 {
    laguerre_pair(n, t).0
}

/// Values ℓ_0(t), …, ℓ_{n-1}(t).
pub fn scaled_laguerre_all(n: usize, t: f64, out: &mut [f64]) {
    if n == 0 {
        return;
    }
    out[0] = (-0.5 * t).exp();
    if n > 1 {
        out[1] = (1.0 - t) * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        out[k + 1] = (((2 * k + 1) as f64 - t) * out[k] - k as f64 * out[k - 1]) / (k + 1) as f64;
    }
}

/// Gauss–Legendre rule on [a, b].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_pd(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_pd(n, x);
            dp = if d != 0.0 { d } else { dp };
            nodes[i] = mid - half * x;
            weights[i] = half * 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { nodes, weights }
    }

    /// Composite rule with `panels` equal panels of `n` points each.
    pub fn composite(n: usize, a: f64, b: f64, panels: usize) -> Self {
        let mut nodes = Vec::with_capacity(n * panels);
        let mut weights = Vec::with_capacity(n * panels);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let g = Self::new(n, a + p as f64 * h, a + (p + 1) as f64 * h);
            nodes.extend(g.nodes);
            weights.extend(g.weights);
        }
        Self { nodes, weights }
    }
}

fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Smooth step built from the exp(-1/t) mollifier: 0 for t ≤ 0, 1 for t ≥ 1.
pub fn smooth_step(t: f64) -> f64 {
    fn g(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        g(t) / (g(t) + g(1.0 - t))
    }
}

/// Cutoff φ: equal to 1 for t ≤ 1/2, 0 for t ≥ 1, smooth in between.
pub fn bump_cutoff(t: f64) -> f64 {
    1.0 - smooth_step(2.0 * t - 1.0)
}

/// Excision function ζ: 0 for |t| ≤ 1, 1 for |t| ≥ 2.
pub fn excision(t: f64) -> f64 {
    smooth_step(t.abs() - 1.0)
}

/// Central finite-difference derivative of order `k` of a scalar function at `x`.
pub fn fd_derivative<F: Fn(f64) -> C64>(f: &F, x: f64, k: usize, h: f64) -> C64 {
    match k {
        0 => f(x),
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        _ => {
            let g = |y: f64| fd_derivative(f, y, k - 1, h);
            (g(x + h) - g(x - h)) / (2.0 * h)
        }
    }
}

/// Mixed partial derivative by tensor-product central differences.
///
/// `orders[d]` is the derivative order in coordinate `d`, with step `h[d]`; the
/// stencil for order k uses the points x + (k/2 - i)h, i = 0..=k.
pub fn mixed_partial(f: &dyn Fn(&[f64]) -> C64, p: &[f64], orders: &[usize], h: &[f64]) -> C64 {
    let dims: Vec<usize> = (0..p.len()).filter(|&d| orders[d] > 0).collect();
    if dims.is_empty() {
        return f(p);
    }
    let mut total = C64::new(0.0, 0.0);
    let mut idx = vec![0usize; dims.len()];
    let mut q = p.to_vec();
    loop {
        let mut coef = 1.0;
        for (slot, &d) in dims.iter().enumerate() {
            let k = orders[d];
            let i = idx[slot];
            coef *= binomial(k, i) * if i % 2 == 0 { 1.0 } else { -1.0 } / h[d].powi(k as i32);
            q[d] = p[d] + (0.5 * k as f64 - i as f64) * h[d];
        }
        total += f(&q) * coef;
        let mut slot = 0;
        loop {
            if slot == dims.len() {
                return total;
            }
            idx[slot] += 1;
            if idx[slot] <= orders[dims[slot]] {
                break;
            }
            idx[slot] = 0;
            slot += 1;
        }
    }
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Factorial as a float.
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Derivatives f^{(j)}(0), j ≤ order, of a function on [0, h] by a one-sided polynomial fit.
pub fn one_sided_jets<F: Fn(f64) -> C64>(f: F, order: usize, h: f64) -> Vec<C64> {
    let deg = order + 8;
    let npts = 2 * deg + 2;
    let ts: Vec<f64> = (0..npts)
        .map(|i| 0.5 * h * (1.0 - (std::f64::consts::PI * (i as f64 + 0.5) / npts as f64).cos()))
        .collect();
    let a = DMatrix::<C64>::from_fn(npts, deg + 1, |i, k| {
        C64::new((ts[i] / h).powi(k as i32), 0.0)
    });
    let b = DVector::<C64>::from_fn(npts, |i, _| f(ts[i]));
    let c = lstsq(&a, &b);
    (0..=order)
        .map(|j| c[j] * factorial(j) / h.powi(j as i32))
        .collect()
}

/// Step size suitable for a central difference of order `k`.
pub fn fd_step(k: usize, scale: f64) -> f64 {
    let base = match k {
        0 | 1 => 1e-5,
        2 => 1e-4,
        3 => 5e-4,
        _ => 2e-3,
    };
    base * scale.max(1e-3)
}

/// Least-squares solve of `a x ≈ b` through the SVD.
pub fn lstsq(a: &DMatrix<C64>, b: &DVector<C64>) -> DVector<C64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, 1e-14 * smax).expect("svd solve")
}

/// Slope of the least-squares line through (ln x, ln y).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-300).ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Singular values sorted in decreasing order.
pub fn singular_values(m: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Hermitian square root and inverse square root of a positive definite matrix.
pub fn hermitian_sqrt_pair(g: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let eig = g.clone().symmetric_eigen();
    let n = g.nrows();
    let mut s = DMatrix::<C64>::zeros(n, n);
    let mut si = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(1e-300);
        let v = eig.eigenvectors.column(k);
        let outer = &v * v.adjoint();
        s += outer.scale(lam.sqrt());
        si += outer.scale(1.0 / lam.sqrt());
    }
    (s, si)
}

/// Operator norm of `m` from the space with Gram matrix `g_dom` to the space with Gram `g_cod`.
pub fn weighted_norm(m: &DMatrix<C64>, g_dom: &DMatrix<C64>, g_cod: &DMatrix<C64>) -> f64 {
    let (_, dom_isqrt) = hermitian_sqrt_pair(g_dom);
    let (cod_sqrt, _) = hermitian_sqrt_pair(g_cod);
    spectral_norm(&(cod_sqrt * m * dom_isqrt))
}

/// Promotes a real matrix to complex.
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_laguerre_integrates_polynomials() {
        let g = GaussLaguerre::new(20);
        // ∫ e^{-t} t^k dt = k!
        for k in 0..10 {
            let s: f64 = g
                .nodes
                .iter()
                .zip(&g.scaled_weights)
                .map(|(t, w)| w * (-t).exp() * t.powi(k))
                .sum();
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            assert!((s - fact).abs() < 1e-11 * fact.max(1.0), "k={k} s={s}");
        }
    }

    #[test]
    fn gauss_laguerre_large_rule_is_accurate() {
        let g = GaussLaguerre::new(200);
        let s: f64 = g
            .nodes
            .iter()
            .zip(&g.scaled_weights)
            .map(|(t, w)| w * (-t).exp())
            .sum();
        assert!((s - 1.0).abs() < 1e-10);
        // ∫ e^{-t/2} dt = 2 uses the scaled weights at large nodes
        let s2: f64 = g
            .nodes
            .iter()
            .zip(&g.scaled_weights)
            .map(|(t, w)| w * (-0.5 * t).exp())
            .sum();
        assert!((s2 - 2.0).abs() < 1e-10, "{s2}");
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let g = GaussLegendre::new(8, 0.0, 2.0);
        let s: f64 = g
            .nodes
            .iter()
            .zip(&g.weights)
            .map(|(x, w)| w * x.powi(7))
            .sum();
        assert!((s - 2f64.powi(8) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn cutoffs_have_declared_plateaus() {
        assert_eq!(bump_cutoff(0.0), 1.0);
        assert_eq!(bump_cutoff(0.5), 1.0);
        assert_eq!(bump_cutoff(1.0), 0.0);
        assert!(bump_cutoff(0.75) > 0.0 && bump_cutoff(0.75) < 1.0);
        assert_eq!(excision(0.5), 0.0);
        assert_eq!(excision(-1.0), 0.0);
        assert_eq!(excision(2.0), 1.0);
        assert_eq!(excision(-3.0), 1.0);
    }

    #[test]
    fn mixed_partials_and_jets() {
        let f = |p: &[f64]| C64::new((p[0] * p[1]).sin() + p[0].powi(3), 0.0);
        let d = mixed_partial(&f, &[0.3, 0.7], &[1, 1], &[1e-4, 1e-4]);
        let exact = (0.21f64).cos() - 0.21 * (0.21f64).sin();
        assert!((d.re - exact).abs() < 1e-6);
        let jets = one_sided_jets(|x| C64::new((2.0 * x).exp(), 0.0), 4, 0.2);
        for (j, v) in jets.iter().enumerate() {
            assert!(
                (v.re - 2f64.powi(j as i32)).abs() < 1e-6 * 2f64.powi(j as i32),
                "{j} {v}"
            );
        }
    }

    #[test]
    fn loglog_slope_recovers_power() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }
}
