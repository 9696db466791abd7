//! Index experiments: the A(t) deformation on L²_w, the operator r⁺U^χe⁺ built from a chart and a
//! unitary section, and SVD-based Fredholm index estimates.

use crate::bdm::{assemble_block, tall_sections, BdMBlockSymbol, BlockParts, FioPart, Recipe};
use crate::error::{Error, Result};
use crate::geometry::{build_phase, PhaseFunction, Quantization, SymplectomorphismChart};
use crate::halfline::{weight_w, HalfLineBasis, Side};
use crate::normal_ops::{model_blocks_from, FiberMap, FrozenPoint, NormalModel, NormalOptions};
use crate::numerics::{singular_values, spectral_norm, to_complex, weighted_norm, C64};
use crate::symbols::ScalarSymbol;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// A(t) = A^ψ_n(t)(x′, η′): the boundary operator at (x′, tη′) with amplitude 1.
#[derive(Clone)]
pub struct DeformationFamily {
    pub name: String,
    pub psi: PhaseFunction,
    pub x_prime: Vec<f64>,
    pub eta_prime: Vec<f64>,
    /// Decreasing positive parameters.
    pub t_grid: Vec<f64>,
    /// ∂_{x_n}ψ(x′, 0, 0, η_n) = c·η_n.
    pub c: f64,
}

impl DeformationFamily {
    /// Family with the dyadic grid t ∈ {1, 1/2, …, 1/64}.
    pub fn new(
        name: &str,
        psi: PhaseFunction,
        x_prime: Vec<f64>,
        eta_prime: Vec<f64>,
    ) -> Result<Self> {
        let nrm = eta_prime.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::DegenerateFiber(eta_prime));
        }
        let zero = vec![0.0; eta_prime.len()];
        let c = psi.normal_slope(&x_prime, &zero, 1.0);
        let c_neg = -psi.normal_slope(&x_prime, &zero, -1.0);
        if !(c > 0.0) || (c - c_neg).abs() > 1e-8 * c {
            return Err(Error::NondegeneracyViolated(format!(
                "d_xn psi(x',0,0,eta_n) is not c*eta_n with c > 0 (c = {c}, {c_neg})"
            )));
        }
        Ok(Self {
            name: name.into(),
            psi,
            x_prime,
            eta_prime,
            t_grid: (0..=6).map(|k| 0.5f64.powi(k)).collect(),
            c,
        })
    }

    pub fn with_t_grid(mut self, t: Vec<f64>) -> Self {
        self.t_grid = t;
        self
    }

    /// Family with η′ → λη′ (the parameter grid is left unchanged).
    pub fn rescaled(&self, lambda: f64) -> Self {
        let mut f = self.clone();
        f.eta_prime = self.eta_prime.iter().map(|v| v * lambda).collect();
        f
    }

    fn point(&self, t: f64) -> FrozenPoint {
        FrozenPoint {
            x_prime: self.x_prime.clone(),
            xi_prime: self.eta_prime.iter().map(|v| v * t).collect(),
        }
    }

    /// Fiber map η_n ↦ ∂_{x_n}ψ(x′, 0, tη′, η_n).
    pub fn fiber_map(&self, t: f64) -> Result<FiberMap> {
        if t == 0.0 {
            return Ok(FiberMap::linear(self.c));
        }
        let p = self.point(t);
        FiberMap::from_phase(&self.psi, &p.x_prime, &p.xi_prime)
    }

    pub fn model(&self, t: f64) -> Result<NormalModel> {
        Ok(NormalModel::fiber(
            &format!("A({t})"),
            0.0,
            self.fiber_map(t)?,
            |_| C64::new(1.0, 0.0),
        ))
    }

    /// (r⁺A(t)e⁺, r⁺A(t)e⁻) in the fixed basis of scale β.
    pub fn blocks(&self, t: f64, opts: &NormalOptions) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
        let p = self.point(t);
        let o = opts.with_beta(opts.beta / p.bracket());
        let model = self.model(t)?;
        let pp = model_blocks_from(&model, &p, Side::Plus, &o)?.0.matrix;
        let pm = model_blocks_from(&model, &p, Side::Minus, &o)?.0.matrix;
        Ok((pp, pm))
    }

    /// r⁺A(t)A*(t)e⁺ from the symbol 1/q′(η(ξ)) with the identity phase.
    pub fn aas(&self, t: f64, opts: &NormalOptions) -> Result<DMatrix<C64>> {
        let p = self.point(t);
        let o = opts.with_beta(opts.beta / p.bracket());
        let map = self.fiber_map(t)?;
        let m = map.clone();
        let model = NormalModel::fiber("AA*", 0.0, FiberMap::linear(1.0), move |xi| {
            C64::new(m.deta(xi), 0.0)
        });
        Ok(model_blocks_from(&model, &p, Side::Plus, &o)?.0.matrix)
    }
}

/// One t-row of the deformation experiment.
#[derive(Clone, Debug, Serialize)]
pub struct DeformRow {
    pub t: f64,
    /// ‖P(t) − P(0)‖ on L²_w.
    pub norm_diff: f64,
    /// sup|K(t) − K(0)|·∫₀^∞(1+y)⁻²dy.
    pub schur_bound: f64,
    /// max(sup_x∫|ΔK|w dy, sup_y∫|ΔK|w dx) by quadrature.
    pub schur_integral: f64,
    pub sigma_min: f64,
    /// ‖r⁺A(t)e⁻‖ from L²_{w−} to L²_{w+}.
    pub leak_norm: f64,
    /// ‖P(t) + G(t) − r⁺AA*e⁺‖ on the leading half block, relative, with G = r⁺Ae⁻(r⁺Ae⁻)*.
    pub split_residual: f64,
    /// Relative change of norm_diff from N to 2N modes.
    pub refinement_change: f64,
}

/// Deformation report.
#[derive(Clone, Debug, Serialize)]
pub struct DeformReport {
    pub family: String,
    pub c: f64,
    pub modes: usize,
    pub p0_norm: f64,
    /// ‖P(0) − c⁻¹I‖ on the leading half block.
    pub p0_identity_residual: f64,
    pub rows: Vec<DeformRow>,
    pub monotone: bool,
    /// norm_diff at the last t divided by ‖P(0)‖.
    pub final_ratio: f64,
    /// leak_norm at the last t divided by its value at the first t.
    pub leak_ratio: f64,
    pub schur_dominates: bool,
}

/// Integral of the weight w = (1+y)⁻² over ℝ₊.
pub const WEIGHT_MASS: f64 = 1.0;

/// Schur bound sup|K|·∫w and the refined quadrature value of sup_x∫|K(x,y)|w(y)dy (and its
/// transpose) for a kernel sampled on quadrature nodes.
pub fn schur_from_samples(
    k: &DMatrix<f64>,
    xs: &[f64],
    wx: &[f64],
    ys: &[f64],
    wy: &[f64],
) -> (f64, f64) {
    let sup = k.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut rows: f64 = 0.0;
    for i in 0..xs.len() {
        rows = rows.max(
            (0..ys.len())
                .map(|j| k[(i, j)].abs() * weight_w(ys[j]) * wy[j])
                .sum(),
        );
    }
    let mut cols: f64 = 0.0;
    for j in 0..ys.len() {
        cols = cols.max(
            (0..xs.len())
                .map(|i| k[(i, j)].abs() * weight_w(xs[i]) * wx[i])
                .sum(),
        );
    }
    (sup * WEIGHT_MASS, rows.max(cols))
}

/// Schur quantities for a kernel function on ℝ_± × ℝ_± sampled on Gauss–Laguerre nodes.
pub fn schur_bound_kernel(
    k: &dyn Fn(f64, f64) -> f64,
    x_side: Side,
    y_side: Side,
    nodes: usize,
    rate: f64,
) -> Result<(f64, f64)> {
    let b = HalfLineBasis::new(1, 2.0 * rate);
    let (xs, ws) = b.quadrature(nodes, rate);
    let sx = if x_side == Side::Minus { -1.0 } else { 1.0 };
    let sy = if y_side == Side::Minus { -1.0 } else { 1.0 };
    let mut with_zero = vec![0.0];
    with_zero.extend(&xs);
    let mut w0 = vec![0.0];
    w0.extend(&ws);
    let m = DMatrix::from_fn(with_zero.len(), with_zero.len(), |i, j| {
        k(sx * with_zero[i], sy * with_zero[j])
    });
    let (sup, integral) = schur_from_samples(&m, &with_zero, &w0, &with_zero, &w0);
    if !sup.is_finite() || !integral.is_finite() {
        return Err(Error::KernelQuadratureNonconvergence(
            "non-finite kernel samples".into(),
        ));
    }
    Ok((sup, integral))
}

/// sup|K| over ℝ₊²: grid of spacing h over the support of the basis, refined to h/32 on [0, 1]
/// where the basis oscillates fastest, then a shrinking local search from the largest
/// grid-local maxima. The grid is evaluated in row chunks.
fn kernel_sup(dp: &DMatrix<C64>, basis: &HalfLineBasis, h: f64) -> f64 {
    let n = basis.n();
    let ymax = (4.0 * n as f64 + 16.0) / basis.beta() + 10.0;
    let fine = h / 32.0;
    let mut nodes: Vec<f64> = (0..(1.0 / fine).round() as usize)
        .map(|i| i as f64 * fine)
        .collect();
    nodes.extend((0..=((ymax - 1.0) / h).ceil() as usize).map(|i| 1.0 + i as f64 * h));
    let m = nodes.len();
    let chunk = 512;
    let mut cand: Vec<(f64, usize, usize)> = vec![];
    for a in (0..m).step_by(chunk) {
        let (lo, hi) = (a.saturating_sub(1), (a + chunk + 1).min(m));
        let k = kernel_abs(dp, basis, &nodes[lo..hi], &nodes);
        for i in a..(a + chunk).min(m) {
            for j in 0..m {
                let v = k[(i - lo, j)];
                let is_peak = (i.saturating_sub(1)..(i + 2).min(m))
                    .all(|x| (j.saturating_sub(1)..(j + 2).min(m)).all(|y| k[(x - lo, y)] <= v));
                if is_peak {
                    cand.push((v, i, j));
                }
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut sup = cand.first().map(|c| c.0).unwrap_or(0.0);
    for &(_, i, j) in cand.iter().take(64) {
        let (mut x, mut y) = (nodes[i], nodes[j]);
        let mut step = if x.min(y) < 1.0 {
            fine.max(h * x.min(y))
        } else {
            h
        };
        for _ in 0..5 {
            let local = |c: f64| -> Vec<f64> {
                (0..=16)
                    .map(|l| (c + step * (l as f64 / 8.0 - 1.0)).max(0.0))
                    .collect()
            };
            let (lx, ly) = (local(x), local(y));
            let km = kernel_abs(dp, basis, &lx, &ly);
            let (mut best, mut bi, mut bj) = (-1.0, 0, 0);
            for b in 0..km.ncols() {
                for a in 0..km.nrows() {
                    if km[(a, b)] > best {
                        (best, bi, bj) = (km[(a, b)], a, b);
                    }
                }
            }
            sup = sup.max(best);
            (x, y, step) = (lx[bi], ly[bj], step / 4.0);
        }
    }
    sup
}

/// |K(x_i, y_j)| for K = Φ ΔP Φᵀ with real Φ.
fn kernel_abs(dp: &DMatrix<C64>, basis: &HalfLineBasis, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
    let n = basis.n();
    let (px, py) = (basis.phi_matrix(xs, n), basis.phi_matrix(ys, n).transpose());
    let re = &px * dp.map(|c| c.re) * &py;
    let im = &px * dp.map(|c| c.im) * &py;
    re.zip_map(&im, f64::hypot)
}

fn kernel_schur(dp: &DMatrix<C64>, basis: &HalfLineBasis) -> Result<(f64, f64)> {
    // y = u/(1−u) maps (0, 1) onto ℝ₊ with w(y)dy = du
    let integral = |m: usize| {
        let mut nodes = vec![0.0];
        nodes.extend((0..m).map(|i| {
            let u = (i as f64 + 0.5) / m as f64;
            u / (1.0 - u)
        }));
        let mut w = vec![0.0];
        w.extend(nodes[1..].iter().map(|y| (1.0 + y).powi(2) / m as f64));
        schur_from_samples(
            &kernel_abs(dp, basis, &nodes, &nodes),
            &nodes,
            &w,
            &nodes,
            &w,
        )
        .1
    };
    let h = 0.1 / (1.0 + basis.n() as f64 / 32.0);
    let (s1, s2) = (kernel_sup(dp, basis, 2.0 * h), kernel_sup(dp, basis, h));
    let (i1, i2) = (integral(1024), integral(2048));
    if (s1 - s2).abs() > 1e-2 * s2.max(1e-12) + 1e-10
        || (i1 - i2).abs() > 1e-2 * i2.max(1e-12) + 1e-10
    {
        return Err(Error::KernelQuadratureNonconvergence(format!(
            "sup {s1:.3e} vs {s2:.3e}, integral {i1:.3e} vs {i2:.3e}"
        )));
    }
    Ok((s2 * WEIGHT_MASS, i2))
}

/// Runs the deformation experiment at N modes with a refinement check at 2N; t-rows are
/// computed in parallel and kept in grid order.
pub fn deformation_continuity(f: &DeformationFamily, opts: &NormalOptions) -> Result<DeformReport> {
    let n = opts.modes;
    let fine = opts.with_modes(2 * n);
    let basis = HalfLineBasis::new(n, opts.beta);
    let gw = to_complex(&basis.weighted_gram(weight_w, 3 * n + 32));
    let gw2 = to_complex(&HalfLineBasis::new(2 * n, opts.beta).weighted_gram(weight_w, 6 * n + 32));
    // P_N A P_{2N} A* P_N: the inner sum runs over 2N modes, since the square truncation of a
    // dilation-type block loses its small singular values to the cut.
    let p_of = |t: f64, o: &NormalOptions| -> Result<(DMatrix<C64>, DMatrix<C64>)> {
        let m = o.modes;
        let (pp, pm) = f.blocks(t, &o.with_modes(2 * m))?;
        let (pp, pm) = (pp.rows(0, m).into_owned(), pm.rows(0, m).into_owned());
        Ok((&pp * pp.adjoint(), pm))
    };
    let p0 = p_of(0.0, opts)?.0;
    let p0_2 = p_of(0.0, &fine)?.0;

    let k = n / 2;
    let lead = |m: &DMatrix<C64>| m.view((0, 0), (k, k)).into_owned();
    let target = DMatrix::<C64>::identity(k, k) * C64::new(1.0 / f.c, 0.0);
    let p0_identity_residual = spectral_norm(&(lead(&p0) - target));
    let p0_norm = weighted_norm(&p0, &gw, &gw);

    let rows: Vec<Result<DeformRow>> = f
        .t_grid
        .par_iter()
        .map(|&t| {
            let (p, pm) = p_of(t, opts)?;
            let (p2, _) = p_of(t, &fine)?;
            let dp = &p - &p0;
            let norm_diff = weighted_norm(&dp, &gw, &gw);
            let norm_diff2 = weighted_norm(&(p2 - &p0_2), &gw2, &gw2);
            let (schur_bound, schur_integral) = kernel_schur(&dp, &basis)?;
            let sigma_min = singular_values(&p)
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let leak_norm = weighted_norm(&pm.columns(0, n).into_owned(), &gw, &gw);
            let aas = f.aas(t, opts)?;
            let g = &pm * pm.adjoint();
            let split_residual = spectral_norm(&(lead(&p) + lead(&g) - lead(&aas)))
                / spectral_norm(&lead(&p)).max(1e-300);
            let refinement_change =
                (norm_diff - norm_diff2).abs() / norm_diff.max(norm_diff2).max(1e-12);
            Ok(DeformRow {
                t,
                norm_diff,
                schur_bound,
                schur_integral,
                sigma_min,
                leak_norm,
                split_residual,
                refinement_change,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let monotone = rows
        .windows(2)
        .all(|w| w[1].norm_diff <= w[0].norm_diff * (1.0 + 1e-9) + 1e-12);
    let final_ratio = rows.last().map(|r| r.norm_diff).unwrap_or(0.0) / p0_norm;
    let leak0 = rows.first().map(|r| r.leak_norm).unwrap_or(0.0);
    let leak_ratio = if leak0 > 0.0 {
        rows.last().map(|r| r.leak_norm).unwrap_or(0.0) / leak0
    } else {
        0.0
    };
    let schur_dominates = rows.iter().all(|r| r.schur_bound + 1e-12 >= r.norm_diff);
    Ok(DeformReport {
        family: f.name.clone(),
        c: f.c,
        modes: n,
        p0_norm,
        p0_identity_residual,
        rows,
        monotone,
        final_ratio,
        leak_ratio,
        schur_dominates,
    })
}

// ---------------------------------------------------------------------------
// U^χ and indices

fn unit_deviation(u: &ScalarSymbol, dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for &xp in &[-2.0, -0.7, 0.0, 0.4, 1.3, 3.0] {
        for &xn in &[0.0, 0.5] {
            for th in 0..12 {
                let a = std::f64::consts::PI * (th as f64 + 0.5) / 6.0;
                let mut xip = vec![0.0; dim - 1];
                xip[0] = 3.0 * a.cos();
                let x = vec![xp; dim - 1];
                worst = worst.max((u.eval(&x, xn, &xip, 3.0 * a.sin()).norm() - 1.0).abs());
            }
        }
    }
    worst
}

/// r⁺U^χe⁺ at a frozen point: FIO part with the phase of `chart` and amplitude `section`.
pub fn build_u(
    chart: &SymplectomorphismChart,
    section: &ScalarSymbol,
    pt: &FrozenPoint,
    opts: &NormalOptions,
) -> Result<BdMBlockSymbol> {
    let dev = unit_deviation(section, chart.dim);
    if dev > 1e-8 {
        return Err(Error::NonUnitarySection(dev));
    }
    let phase = build_phase(chart, Quantization::Left)?;
    let linear = phase.linear_in_xn || NormalModel::from_symbol(section, &phase, pt).is_ok();
    let amp = section.clone().excise(0.25);
    let mut parts = BlockParts::default().with_chart(&chart.name);
    parts.fio = Some(FioPart {
        symbol: amp,
        phase,
        linearized: !linear,
    });
    assemble_block(&format!("U[{}]", chart.name), &parts, 0.0, 0, pt, opts)
}

/// Options of the index estimator.
#[derive(Clone, Debug)]
pub struct IndexOptions {
    /// τ = tau_rel · σ_max.
    pub tau_rel: f64,
    pub normal: NormalOptions,
    /// Interior trapezoid nodes of the [0, 1] desk model.
    pub interior_points: usize,
    /// Offset of the second collar in x′.
    pub collar_shift: f64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            tau_rel: 1e-6,
            normal: NormalOptions::default(),
            interior_points: 16,
            collar_shift: 1.0,
        }
    }
}

/// Index estimate with stability verdict.
#[derive(Clone, Debug, Serialize)]
pub struct IndexReport {
    pub estimated_index: i64,
    pub kernel_dim: usize,
    pub cokernel_dim: usize,
    pub svd_gap: f64,
    pub tau: f64,
    pub sigma_max: f64,
    /// (label, kernel_dim, cokernel_dim) at (N, τ), (2N, τ), (N, τ/10).
    pub stability: Vec<(String, usize, usize)>,
    pub stable: bool,
}

struct Sections {
    forward: Vec<f64>,
    adjoint: Vec<f64>,
}

/// Singular values of the tall sections P_{2N}TP_N and P_{2N}T*P_N of the desk model.
fn desk_sections(block: &BdMBlockSymbol, n: usize, io: &IndexOptions) -> Result<Sections> {
    let o = io.normal.with_modes(2 * n);
    let left = block.at(&block.frozen, &o)?;
    let mut shifted = block.frozen.clone();
    for v in shifted.x_prime.iter_mut() {
        *v += io.collar_shift;
    }
    let right = block.at(&shifted, &o)?;
    let mut fwd = vec![];
    let mut adj = vec![];
    for b in [&left, &right] {
        let (tall, tall_adj) = tall_sections(&b.matrix, 2 * n, n, b.boundary_rank);
        fwd.extend(singular_values(&tall));
        adj.extend(singular_values(&tall_adj));
    }
    // interior: identity on the trapezoid nodes
    fwd.extend(std::iter::repeat(1.0).take(io.interior_points));
    adj.extend(std::iter::repeat(1.0).take(io.interior_points));
    Ok(Sections {
        forward: fwd,
        adjoint: adj,
    })
}

fn counts(s: &Sections, tau: f64) -> (usize, usize) {
    (
        s.forward.iter().filter(|v| **v < tau).count(),
        s.adjoint.iter().filter(|v| **v < tau).count(),
    )
}

/// Fredholm index of the two-collar model on [0, 1] through SVD of tall sections.
pub fn index_estimate(block: &BdMBlockSymbol, io: &IndexOptions) -> Result<IndexReport> {
    let n = io.normal.modes;
    let s1 = desk_sections(block, n, io)?;
    let s2 = desk_sections(block, 2 * n, io)?;
    let sigma_max = s1.forward.iter().cloned().fold(0.0, f64::max);
    let tau = io.tau_rel * sigma_max;
    let (k1, c1) = counts(&s1, tau);
    let (k2, c2) = counts(&s2, tau);
    let (k3, c3) = counts(&s1, tau / 10.0);
    let all: Vec<f64> = s1.forward.iter().chain(&s1.adjoint).cloned().collect();
    let zero_max = all
        .iter()
        .filter(|v| **v < tau)
        .cloned()
        .fold(0.0, f64::max);
    let nonzero_min = all
        .iter()
        .filter(|v| **v >= tau)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let svd_gap = if zero_max > 0.0 {
        nonzero_min / zero_max
    } else {
        nonzero_min / tau
    };
    let stability = vec![
        ("N,tau".to_string(), k1, c1),
        ("2N,tau".to_string(), k2, c2),
        ("N,tau/10".to_string(), k3, c3),
    ];
    let stable = stability.iter().all(|(_, k, c)| *k == k1 && *c == c1);
    if !stable {
        return Err(Error::UnstableIndex(format!("{stability:?}")));
    }
    Ok(IndexReport {
        estimated_index: k1 as i64 - c1 as i64,
        kernel_dim: k1,
        cokernel_dim: c1,
        svd_gap,
        tau,
        sigma_max,
        stability,
        stable,
    })
}

/// Adds the rank-one Green term coef·e₁ ⊗ e₂ with e₁ = √2 e^{−x}, e₂ = 2 e^{−2x} (unit L² norms)
/// to the upper-left block at every resolution.
pub fn with_rank_one(block: &BdMBlockSymbol, coef: f64) -> Result<BdMBlockSymbol> {
    let base = block
        .recipe
        .clone()
        .ok_or_else(|| Error::Unsupported("block without recipe".into()))?;
    let recipe: Recipe = Arc::new(move |p: &FrozenPoint, o: &NormalOptions| {
        let mut b = base(p, o)?;
        let basis = b.basis();
        let k = basis.project(|x| C64::new(2f64.sqrt() * (-x).exp(), 0.0));
        let t = basis.project(|x| C64::new(2.0 * (-2.0 * x).exp(), 0.0));
        let n = b.modes;
        let mut v = b.matrix.view_mut((0, 0), (n, n));
        v += (k * t.transpose()) * C64::new(coef, 0.0);
        Ok(b)
    });
    let mut out = recipe(
        &block.frozen,
        &NormalOptions {
            modes: block.modes,
            ..Default::default()
        }
        .with_beta(block.beta / block.frozen.bracket()),
    )?;
    out.recipe = Some(recipe);
    out.name = format!("{} + rank one", block.name);
    Ok(out)
}

/// Winding number of x′ ↦ u(x′, ξ) along x′ ∈ [0, 2π] at x_n = 0, for ξ = (±1, 0).
pub fn winding_numbers(u: &ScalarSymbol) -> Vec<i64> {
    let m = 1024;
    [1.0, -1.0]
        .iter()
        .map(|s| {
            let mut total = 0.0;
            let mut prev = u.eval(&[0.0], 0.0, &[*s], 0.0);
            for i in 1..=m {
                let x = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                let cur = u.eval(&[x], 0.0, &[*s], 0.0);
                total += (cur / prev).arg();
                prev = cur;
            }
            (total / (2.0 * std::f64::consts::PI)).round() as i64
        })
        .collect()
}

/// Index difference between two sections over the same chart.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub winding1: Vec<i64>,
    pub winding2: Vec<i64>,
    pub index1: i64,
    pub index2: i64,
    pub difference: i64,
}

pub fn section_independence_probe(
    chart: &SymplectomorphismChart,
    s1: &ScalarSymbol,
    s2: &ScalarSymbol,
    pt: &FrozenPoint,
    io: &IndexOptions,
) -> Result<ProbeReport> {
    let (w1, w2) = (winding_numbers(s1), winding_numbers(s2));
    if let Some(i) = (0..w1.len()).find(|&i| w1[i] != w2[i]) {
        return Err(Error::ObstructedHomotopy(w1[i], w2[i]));
    }
    let u1 = build_u(chart, s1, pt, &io.normal)?;
    let u2 = build_u(chart, s2, pt, &io.normal)?;
    let i1 = index_estimate(&u1, io)?.estimated_index;
    let i2 = index_estimate(&u2, io)?.estimated_index;
    Ok(ProbeReport {
        winding1: w1,
        winding2: w2,
        index1: i1,
        index2: i2,
        difference: i1 - i2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdm::ellipticity_check;
    use crate::geometry::{charts, hamiltonian_flow_chart, hamiltonians, phases, ProfileFn};
    use crate::symbols::families;

    fn opts() -> NormalOptions {
        NormalOptions {
            modes: 32,
            ..Default::default()
        }
    }

    #[test]
    fn trivial_family_is_constant() {
        let f = DeformationFamily::new(
            "simple",
            phases::simple(ProfileFn::Constant { value: 1.5 }),
            vec![0.0],
            vec![1.0],
        )
        .unwrap()
        .with_t_grid(vec![1.0, 0.25]);
        let r = deformation_continuity(&f, &opts()).unwrap();
        assert!((f.c - 1.5).abs() < 1e-9);
        assert!(r.p0_identity_residual < 1e-6, "{}", r.p0_identity_residual);
        for row in &r.rows {
            assert!(row.norm_diff < 1e-10 && row.leak_norm < 1e-10, "{row:?}");
        }
    }

    #[test]
    fn schur_rank_one_example() {
        let (sup, integral) =
            schur_bound_kernel(&|x, y| (x - y).exp(), Side::Minus, Side::Plus, 96, 1.0).unwrap();
        assert!((sup - 1.0).abs() < 1e-12);
        // ∫₀^∞ e^{−y}(1+y)⁻²dy = 1 − e·E₁(1)
        assert!(
            (integral - 0.403_652_637_676_805_9).abs() < 1e-6,
            "{integral}"
        );
    }

    #[test]
    fn identity_index() {
        let pt = FrozenPoint::new(vec![0.0], vec![1.0]).unwrap();
        let io = IndexOptions {
            normal: opts(),
            ..Default::default()
        };
        let u = build_u(&charts::identity(2), &families::one(), &pt, &io.normal).unwrap();
        let r = index_estimate(&u, &io).unwrap();
        assert_eq!(r.estimated_index, 0);
        assert!(r.svd_gap >= 10.0);
        let bad = families::section("2", |_| C64::new(2.0, 0.0));
        assert!(matches!(
            build_u(&charts::identity(2), &bad, &pt, &io.normal),
            Err(Error::NonUnitarySection(_))
        ));
        let w1 = families::section("e^{ix}", |x| C64::from_polar(1.0, x[0]));
        assert!(matches!(
            section_independence_probe(&charts::identity(2), &families::one(), &w1, &pt, &io),
            Err(Error::ObstructedHomotopy(0, 1))
        ));
    }

    #[test]
    fn rescaling_invariance() {
        let f = DeformationFamily::new("nd", phases::normal_deformation(0.5), vec![0.0], vec![1.0])
            .unwrap()
            .with_t_grid(vec![0.5, 0.125]);
        let o = NormalOptions {
            modes: 16,
            ..Default::default()
        };
        let a = deformation_continuity(&f, &o).unwrap();
        let g = f.rescaled(4.0).with_t_grid(vec![0.125, 0.03125]);
        let b = deformation_continuity(&g, &o).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x.norm_diff - y.norm_diff).abs() < 1e-6, "{x:?} {y:?}");
        }
    }

    #[test]
    fn flow_chart_index_and_probe() {
        let pt = FrozenPoint::new(vec![0.3], vec![1.0]).unwrap();
        let io = IndexOptions {
            normal: opts(),
            ..Default::default()
        };
        let chart = hamiltonian_flow_chart(&hamiltonians::tangent_lift(0.5), 0.2).unwrap();
        let u = build_u(&chart, &families::one(), &pt, &io.normal).unwrap();
        assert!(
            ellipticity_check(&u, &[pt.clone()], &io.normal)
                .unwrap()
                .elliptic
        );
        let r = index_estimate(&u, &io).unwrap();
        assert_eq!((r.estimated_index, r.kernel_dim, r.cokernel_dim), (0, 0, 0));
        assert!(r.svd_gap >= 10.0 && r.stable);
        let p = with_rank_one(&u, 1e-3).unwrap();
        assert_eq!(index_estimate(&p, &io).unwrap().estimated_index, 0);
        let s2 = families::section("e^{i sin x}", |x| C64::from_polar(1.0, x[0].sin()));
        let probe = section_independence_probe(&chart, &families::one(), &s2, &pt, &io).unwrap();
        assert_eq!(probe.difference, 0);
    }
}
