//! 2×2 Boutet de Monvel block symbols at a frozen boundary point.
//!
//! A block acts on 𝒮(ℝ₊) ⊕ ℂ^r (r ∈ {0, 1}) and is stored as one (N+r)×(N+r) matrix in the
//! Laguerre basis of scale β⟨ξ′⟩, together with its FIO part, the principal-level matrix and a
//! recipe that rebuilds it at any frozen point or resolution. Trace and Green parts of positive
//! type are built from explicit jet rows γ_j, so type arithmetic can be measured structurally.

use crate::error::{Error, Result};
use crate::geometry::PhaseFunction;
use crate::halfline::{HalfLineBasis, Side};
use crate::normal_ops::{
    boundary_symbol, model_blocks, model_blocks_from, FiberMap, FrozenPoint, NormalModel,
    NormalOptions, OperatorMatrix,
};
use crate::numerics::{loglog_slope, singular_values, spectral_norm, C64, I};
use crate::symbols::ScalarSymbol;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn one() -> f64 {
    1.0
}

/// Potential k(x) = coef·r^{order+1/2}·e^{−rate·r·x}, with r = ⟨ξ′⟩ (full) or |ξ′| (principal).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PotentialTerm {
    pub order: f64,
    #[serde(default = "one")]
    pub coef: f64,
    #[serde(default = "one")]
    pub rate: f64,
}

/// Jet term coef·r^{order−j−1/2}·u^{(j)}(0) of a trace functional.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct JetTerm {
    pub j: usize,
    pub coef: f64,
}

/// Trace t(u) = coef·r^{order+1/2}∫e^{−rate·r·x}u dx + Σ jet terms; type = 1 + max j.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceTerm {
    pub order: f64,
    #[serde(default)]
    pub coef: f64,
    #[serde(default = "one")]
    pub rate: f64,
    #[serde(default)]
    pub jets: Vec<JetTerm>,
}

impl TraceTerm {
    pub fn type_d(&self) -> usize {
        self.jets
            .iter()
            .filter(|t| t.coef != 0.0)
            .map(|t| t.j + 1)
            .max()
            .unwrap_or(0)
    }

    /// γ_j scaled to order j + 1/2.
    pub fn gamma(j: usize) -> Self {
        Self {
            order: j as f64 + 0.5,
            coef: 0.0,
            rate: 1.0,
            jets: vec![JetTerm { j, coef: 1.0 }],
        }
    }

    /// Regular type-0 trace of the given order.
    pub fn regular(order: f64, rate: f64) -> Self {
        Self {
            order,
            coef: 1.0,
            rate,
            jets: vec![],
        }
    }
}

/// Rank-one Green term k ⊗ t of order m_k + m_t and the type of t.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GreenTerm {
    pub potential: PotentialTerm,
    pub trace: TraceTerm,
}

impl GreenTerm {
    pub fn order(&self) -> f64 {
        self.potential.order + self.trace.order
    }
}

/// Boundary scalar s = coef·r^{order}.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScalarTerm {
    pub order: f64,
    pub coef: f64,
}

/// FIO part of a block.
#[derive(Clone)]
pub struct FioPart {
    pub symbol: ScalarSymbol,
    pub phase: PhaseFunction,
    /// Use the phase linearized at x_n = 0 (required for phases not linear in x_n).
    pub linearized: bool,
}

/// Named constituents of a block.
#[derive(Clone, Default)]
pub struct BlockParts {
    pub fio: Option<FioPart>,
    pub green: Vec<GreenTerm>,
    pub potential: Option<PotentialTerm>,
    pub trace: Option<TraceTerm>,
    pub scalar: Option<ScalarTerm>,
    pub domain: Option<String>,
    pub codomain: Option<String>,
    pub chart: Option<String>,
}

impl BlockParts {
    pub fn with_fio(mut self, symbol: ScalarSymbol, phase: PhaseFunction) -> Self {
        self.fio = Some(FioPart {
            symbol,
            phase,
            linearized: false,
        });
        self
    }

    pub fn with_green(mut self, g: GreenTerm) -> Self {
        self.green.push(g);
        self
    }

    pub fn with_potential(mut self, k: PotentialTerm) -> Self {
        self.potential = Some(k);
        self
    }

    pub fn with_trace(mut self, t: TraceTerm) -> Self {
        self.trace = Some(t);
        self
    }

    pub fn with_scalar(mut self, s: ScalarTerm) -> Self {
        self.scalar = Some(s);
        self
    }

    pub fn with_chart(mut self, name: &str) -> Self {
        self.chart = Some(name.into());
        self
    }

    fn boundary_rank(&self) -> usize {
        usize::from(self.potential.is_some() || self.trace.is_some() || self.scalar.is_some())
    }
}

/// Rebuilds a block at a frozen point and resolution.
pub type Recipe = Arc<dyn Fn(&FrozenPoint, &NormalOptions) -> Result<BdMBlockSymbol> + Send + Sync>;

/// Block symbol at a frozen point.
#[derive(Clone)]
pub struct BdMBlockSymbol {
    pub name: String,
    pub order: f64,
    pub type_d: usize,
    pub frozen: FrozenPoint,
    pub beta: f64,
    pub modes: usize,
    pub boundary_rank: usize,
    pub domain: String,
    pub codomain: String,
    /// Name of the symplectomorphism; "id" for the identity.
    pub chart: String,
    pub fiber_map: Option<FiberMap>,
    pub fio_model: Option<NormalModel>,
    pub principal_model: Option<NormalModel>,
    /// r⁺Op(fio)e⁺ (N×N); zero when there is no FIO part.
    pub fio_matrix: DMatrix<C64>,
    /// Full (N+r)×(N+r) matrix.
    pub matrix: DMatrix<C64>,
    /// Principal-level matrix: boundary symbol of the FIO part plus principal parts of g, k, t, s.
    pub principal: Option<DMatrix<C64>>,
    /// Lower bound of |a_m| on the cosphere at the frozen x′.
    pub interior_min: f64,
    pub recipe: Option<Recipe>,
}

impl std::fmt::Debug for BdMBlockSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BdMBlockSymbol")
            .field("name", &self.name)
            .field("order", &self.order)
            .field("type_d", &self.type_d)
            .field("chart", &self.chart)
            .field("modes", &self.modes)
            .field("boundary_rank", &self.boundary_rank)
            .finish()
    }
}

impl BdMBlockSymbol {
    /// Block from raw matrices (no FIO bookkeeping).
    #[allow(clippy::too_many_arguments)]
    pub fn from_matrix(
        name: &str,
        matrix: DMatrix<C64>,
        principal: Option<DMatrix<C64>>,
        order: f64,
        type_d: usize,
        pt: &FrozenPoint,
        beta: f64,
        boundary_rank: usize,
    ) -> Self {
        let n = matrix.nrows() - boundary_rank;
        Self {
            name: name.into(),
            order,
            type_d,
            frozen: pt.clone(),
            beta,
            modes: n,
            boundary_rank,
            domain: "R+".into(),
            codomain: "R+".into(),
            chart: "id".into(),
            fiber_map: None,
            fio_model: None,
            principal_model: None,
            fio_matrix: DMatrix::zeros(n, n),
            matrix,
            principal,
            interior_min: 0.0,
            recipe: None,
        }
    }

    pub fn basis(&self) -> HalfLineBasis {
        HalfLineBasis::new(self.modes, self.beta)
    }

    pub fn upper_left(&self) -> DMatrix<C64> {
        self.matrix
            .view((0, 0), (self.modes, self.modes))
            .into_owned()
    }

    /// Green part: upper-left minus FIO part.
    pub fn green(&self) -> DMatrix<C64> {
        self.upper_left() - &self.fio_matrix
    }

    pub fn potential(&self) -> DVector<C64> {
        if self.boundary_rank == 0 {
            return DVector::zeros(self.modes);
        }
        self.matrix
            .view((0, self.modes), (self.modes, 1))
            .column(0)
            .into_owned()
    }

    pub fn trace(&self) -> DVector<C64> {
        if self.boundary_rank == 0 {
            return DVector::zeros(self.modes);
        }
        self.matrix
            .view((self.modes, 0), (1, self.modes))
            .row(0)
            .transpose()
    }

    pub fn scalar(&self) -> C64 {
        if self.boundary_rank == 0 {
            return ZERO;
        }
        self.matrix[(self.modes, self.modes)]
    }

    /// Same block at another frozen point or resolution.
    pub fn at(&self, pt: &FrozenPoint, opts: &NormalOptions) -> Result<BdMBlockSymbol> {
        match &self.recipe {
            Some(r) => r(pt, opts),
            None => Err(Error::Unsupported(format!(
                "block {} has no recipe",
                self.name
            ))),
        }
    }

    /// Block promoted to boundary rank `r` by zero padding.
    pub fn promoted(&self, r: usize) -> BdMBlockSymbol {
        if r <= self.boundary_rank {
            return self.clone();
        }
        let pad = |m: &DMatrix<C64>| {
            let mut out = DMatrix::<C64>::zeros(self.modes + r, self.modes + r);
            out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
            out
        };
        let mut b = self.clone();
        b.matrix = pad(&self.matrix);
        b.principal = self.principal.as_ref().map(pad);
        b.boundary_rank = r;
        b
    }

    /// Leading (k + r)×(k + r) section of a block-layout matrix.
    pub fn leading(&self, m: &DMatrix<C64>, k: usize) -> DMatrix<C64> {
        leading_block(m, self.modes, self.boundary_rank, k)
    }

    /// Dilation-normalized spectral norm of the leading block with `k` modes.
    pub fn leading_norm(&self, k: usize) -> f64 {
        spectral_norm(&self.leading(&self.matrix, k))
    }
}

fn leading_block(m: &DMatrix<C64>, n: usize, r: usize, k: usize) -> DMatrix<C64> {
    let idx: Vec<usize> = (0..k.min(n)).chain(n..n + r).collect();
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn potential_vector(k: &PotentialTerm, basis: &HalfLineBasis, r: f64) -> DVector<C64> {
    let c = k.coef * r.powf(k.order + 0.5);
    let rate = k.rate * r;
    basis.project(|x| C64::new(c * (-rate * x).exp(), 0.0))
}

fn trace_row(t: &TraceTerm, basis: &HalfLineBasis, r: f64) -> DVector<C64> {
    let mut row = if t.coef != 0.0 {
        let c = t.coef * r.powf(t.order + 0.5);
        let rate = t.rate * r;
        basis.project(|x| C64::new(c * (-rate * x).exp(), 0.0))
    } else {
        DVector::zeros(basis.n())
    };
    for jt in &t.jets {
        let c = jt.coef * r.powf(t.order - jt.j as f64 - 0.5);
        row += basis.jet_row(jt.j).map(|v| C64::new(v * c, 0.0));
    }
    row
}

fn cosphere_min(a: &ScalarSymbol, pt: &FrozenPoint) -> f64 {
    let nrm = pt.xi_prime.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir: Vec<f64> = pt.xi_prime.iter().map(|v| v / nrm).collect();
    let mut worst = f64::INFINITY;
    for i in 0..64 {
        let th = std::f64::consts::PI * (i as f64 + 0.5) / 64.0 * 2.0;
        let xip: Vec<f64> = dir.iter().map(|v| v * th.cos()).collect();
        for xn in [0.0, 0.5] {
            let v = a
                .eval_principal(&pt.x_prime, xn, &xip, th.sin())
                .map(|c| c.norm())
                .unwrap_or(0.0);
            worst = worst.min(v);
        }
    }
    worst
}

/// Assembles a block from named parts, checking the type bound and part orders.
pub fn assemble_block(
    name: &str,
    parts: &BlockParts,
    m: f64,
    d: usize,
    pt: &FrozenPoint,
    opts: &NormalOptions,
) -> Result<BdMBlockSymbol> {
    let bound = m.ceil().max(0.0);
    if d as f64 > bound {
        return Err(Error::TypeBoundViolated { m, d });
    }
    let mut part_types = vec![];
    let mut part_orders = vec![];
    if let Some(f) = &parts.fio {
        part_orders.push(("fio", f.symbol.order));
    }
    for g in &parts.green {
        part_orders.push(("green", g.order()));
        part_types.push(("green", g.trace.type_d()));
    }
    if let Some(k) = &parts.potential {
        part_orders.push(("potential", k.order));
    }
    if let Some(t) = &parts.trace {
        part_orders.push(("trace", t.order));
        part_types.push(("trace", t.type_d()));
    }
    if let Some(s) = &parts.scalar {
        part_orders.push(("scalar", s.order));
    }
    for (what, o) in &part_orders {
        if *o > m + 1e-12 {
            return Err(Error::OrderMismatch(format!(
                "{what} part has order {o} above block order {m}"
            )));
        }
    }
    for (what, t) in &part_types {
        if *t > d {
            return Err(Error::OrderMismatch(format!(
                "{what} part has type {t} above declared type {d}"
            )));
        }
    }

    let rho = pt.bracket();
    let abs = pt.xi_prime.iter().map(|v| v * v).sum::<f64>().sqrt();
    let basis = opts.basis(rho);
    let n = basis.n();
    let r = parts.boundary_rank();
    let mut full = DMatrix::<C64>::zeros(n + r, n + r);
    let mut princ = Some(DMatrix::<C64>::zeros(n + r, n + r));

    let mut fio_matrix = DMatrix::<C64>::zeros(n, n);
    let (mut fiber_map, mut fio_model, mut principal_model) = (None, None, None);
    let mut interior_min = 0.0;
    if let Some(f) = &parts.fio {
        let model = if f.linearized {
            let map = FiberMap::from_phase(&f.phase, &pt.x_prime, &pt.xi_prime)?;
            let (a, xp, xip) = (f.symbol.clone(), pt.x_prime.clone(), pt.xi_prime.clone());
            NormalModel::fiber(&f.symbol.name, f.symbol.order, map, move |t| {
                a.eval(&xp, 0.0, &xip, t)
            })
        } else {
            crate::normal_ops::require_transmission(&f.symbol, pt)?;
            NormalModel::from_symbol(&f.symbol, &f.phase, pt)?
        };
        fio_matrix = model_blocks(&model, pt, opts)?.0.matrix;
        fiber_map = Some(model.fiber_map.clone());
        fio_model = Some(model);
        match NormalModel::boundary(&f.symbol, &f.phase, &pt.x_prime, &pt.xi_prime) {
            Ok(pm) => {
                let b = boundary_symbol(&f.symbol, &f.phase, &pt.x_prime, &pt.xi_prime, opts)?;
                if let Some(p) = princ.as_mut() {
                    p.view_mut((0, 0), (n, n)).copy_from(&b.matrix);
                }
                principal_model = Some(pm);
                interior_min = cosphere_min(&f.symbol, pt);
            }
            Err(Error::MissingPrincipalPart) => princ = None,
            Err(e) => return Err(e),
        }
        full.view_mut((0, 0), (n, n)).copy_from(&fio_matrix);
    }
    let principal_basis = opts.basis(rho);
    for g in &parts.green {
        let add = |m: &mut DMatrix<C64>, rr: f64| {
            let k = potential_vector(&g.potential, &principal_basis, rr);
            let t = trace_row(&g.trace, &principal_basis, rr);
            let mut v = m.view_mut((0, 0), (n, n));
            v += &k * t.transpose();
        };
        add(&mut full, rho);
        if let Some(p) = princ.as_mut() {
            add(p, abs);
        }
    }
    if let Some(k) = &parts.potential {
        full.view_mut((0, n), (n, 1))
            .copy_from(&potential_vector(k, &basis, rho));
        if let Some(p) = princ.as_mut() {
            p.view_mut((0, n), (n, 1))
                .copy_from(&potential_vector(k, &basis, abs));
        }
    }
    if let Some(t) = &parts.trace {
        full.view_mut((n, 0), (1, n))
            .copy_from(&trace_row(t, &basis, rho).transpose());
        if let Some(p) = princ.as_mut() {
            p.view_mut((n, 0), (1, n))
                .copy_from(&trace_row(t, &basis, abs).transpose());
        }
    }
    if let Some(s) = &parts.scalar {
        full[(n, n)] = C64::new(s.coef * rho.powf(s.order), 0.0);
        if let Some(p) = princ.as_mut() {
            p[(n, n)] = C64::new(s.coef * abs.powf(s.order), 0.0);
        }
    }
    let parts_c = parts.clone();
    let (name_c, m_c) = (name.to_string(), m);
    let recipe: Recipe = Arc::new(move |p, o| assemble_block(&name_c, &parts_c, m_c, d, p, o));
    Ok(BdMBlockSymbol {
        name: name.into(),
        order: m,
        type_d: d,
        frozen: pt.clone(),
        beta: basis.beta(),
        modes: n,
        boundary_rank: r,
        domain: parts.domain.clone().unwrap_or_else(|| "R+".into()),
        codomain: parts.codomain.clone().unwrap_or_else(|| "R+".into()),
        chart: parts.chart.clone().unwrap_or_else(|| "id".into()),
        fiber_map,
        fio_model,
        principal_model,
        fio_matrix,
        matrix: full,
        principal: princ,
        interior_min,
        recipe: Some(recipe),
    })
}

/// Identity block (id, 0; 0, 1) or (id) when `with_boundary` is false.
pub fn identity_block(
    pt: &FrozenPoint,
    opts: &NormalOptions,
    with_boundary: bool,
) -> Result<BdMBlockSymbol> {
    let mut parts = BlockParts::default().with_fio(
        crate::symbols::families::one(),
        crate::geometry::phases::identity(pt.x_prime.len() + 1),
    );
    if with_boundary {
        parts = parts.with_scalar(ScalarTerm {
            order: 0.0,
            coef: 1.0,
        });
    }
    assemble_block("identity", &parts, 0.0, 0, pt, opts)
}

fn compose_chart(outer: &str, inner: &str) -> String {
    if outer == "id" {
        return inner.into();
    }
    if inner == "id" {
        return outer.into();
    }
    if outer == format!("{inner}^-1") || inner == format!("{outer}^-1") {
        return "id".into();
    }
    format!("{outer} o {inner}")
}

fn inverse_chart(c: &str) -> String {
    if c == "id" {
        c.into()
    } else if let Some(s) = c.strip_suffix("^-1") {
        s.into()
    } else {
        format!("{c}^-1")
    }
}

/// Type of a composition: max{⌈m_A⌉ + d_B, d_A, 0}.
pub fn composed_type(m_a: f64, d_a: usize, d_b: usize) -> usize {
    let t = (m_a.ceil() + d_b as f64).max(d_a as f64).max(0.0);
    t as usize
}

fn check_compatible(b: &BdMBlockSymbol, a: &BdMBlockSymbol) -> Result<()> {
    if b.domain != a.codomain {
        return Err(Error::ChartMismatch(format!(
            "domain {} of {} vs codomain {} of {}",
            b.domain, b.name, a.codomain, a.name
        )));
    }
    if b.frozen != a.frozen || b.modes != a.modes || (b.beta - a.beta).abs() > 1e-12 * b.beta {
        return Err(Error::ChartMismatch(format!(
            "frozen points or bases of {} and {} differ",
            b.name, a.name
        )));
    }
    Ok(())
}

/// B ∘ A at the frozen point.
pub fn compose(b: &BdMBlockSymbol, a: &BdMBlockSymbol) -> Result<BdMBlockSymbol> {
    check_compatible(b, a)?;
    let r = b.boundary_rank.max(a.boundary_rank);
    let (bp, ap) = (b.promoted(r), a.promoted(r));
    let n = b.modes;
    let matrix = &bp.matrix * &ap.matrix;
    let principal = match (&bp.principal, &ap.principal) {
        (Some(x), Some(y)) => Some(x * y),
        _ => None,
    };
    let fiber_map = match (&b.fiber_map, &a.fiber_map) {
        (Some(x), Some(y)) => Some(FiberMap::compose(x, y)),
        _ => None,
    };
    let (mut fio_model, mut principal_model) = (None, None);
    let fio_matrix = match (&b.fio_model, &a.fio_model) {
        (Some(x), Some(y)) => match NormalModel::compose(x, y) {
            Ok(m) => {
                let mat = model_blocks(
                    &m,
                    &b.frozen,
                    &NormalOptions {
                        modes: n,
                        ..Default::default()
                    }
                    .with_beta(b.beta / b.frozen.bracket()),
                )?
                .0
                .matrix;
                fio_model = Some(m);
                if let (Some(px), Some(py)) = (&b.principal_model, &a.principal_model) {
                    principal_model = NormalModel::compose(px, py).ok();
                }
                mat
            }
            Err(_) => &b.fio_matrix * &a.fio_matrix,
        },
        _ => DMatrix::zeros(n, n),
    };
    let (rb, ra) = (b.recipe.clone(), a.recipe.clone());
    let recipe: Option<Recipe> = match (rb, ra) {
        (Some(rb), Some(ra)) => Some(Arc::new(move |p: &FrozenPoint, o: &NormalOptions| {
            compose(&rb(p, o)?, &ra(p, o)?)
        })),
        _ => None,
    };
    Ok(BdMBlockSymbol {
        name: format!("{} o {}", b.name, a.name),
        order: b.order + a.order,
        type_d: composed_type(a.order, a.type_d, b.type_d),
        frozen: b.frozen.clone(),
        beta: b.beta,
        modes: n,
        boundary_rank: r,
        domain: a.domain.clone(),
        codomain: b.codomain.clone(),
        chart: compose_chart(&b.chart, &a.chart),
        fiber_map,
        fio_model,
        principal_model,
        fio_matrix,
        matrix,
        principal,
        interior_min: b.interior_min * a.interior_min,
        recipe,
    })
}

/// Formal adjoint for m ≤ 0, d = 0: conjugate transpose on L²(ℝ₊) ⊕ ℂ^r, potential ↔ trace.
pub fn adjoint(a: &BdMBlockSymbol) -> Result<BdMBlockSymbol> {
    if a.order > 0.0 || a.type_d > 0 {
        return Err(Error::PositiveOrderAdjoint {
            m: a.order,
            d: a.type_d,
        });
    }
    let n = a.modes;
    let mut principal = a.principal.as_ref().map(|p| p.adjoint());
    let principal_model = a.principal_model.as_ref().map(|m| m.adjoint());
    if let (Some(p), Some(pm), Some(orig)) = (principal.as_mut(), &principal_model, &a.principal) {
        // FIO part recomputed from the adjoint boundary model; Green/trace/potential parts transposed.
        let old_fio = a
            .principal_model
            .as_ref()
            .map(|m| model_blocks(m, &a.frozen, &opts_for(a)))
            .transpose()?;
        let fresh = model_blocks(pm, &a.frozen, &opts_for(a))?.0.matrix;
        if let Some(old) = old_fio {
            let rest = orig.view((0, 0), (n, n)).into_owned() - old.0.matrix;
            p.view_mut((0, 0), (n, n))
                .copy_from(&(fresh + rest.adjoint()));
        }
    }
    let ra = a.recipe.clone();
    Ok(BdMBlockSymbol {
        name: format!("({})*", a.name),
        order: a.order,
        type_d: 0,
        frozen: a.frozen.clone(),
        beta: a.beta,
        modes: n,
        boundary_rank: a.boundary_rank,
        domain: a.codomain.clone(),
        codomain: a.domain.clone(),
        chart: inverse_chart(&a.chart),
        fiber_map: a.fiber_map.as_ref().map(|m| m.inverse()),
        fio_model: a.fio_model.as_ref().map(|m| m.adjoint()),
        principal_model,
        fio_matrix: a.fio_matrix.adjoint(),
        matrix: a.matrix.adjoint(),
        principal,
        interior_min: a.interior_min,
        recipe: ra.map(|r| {
            Arc::new(move |p: &FrozenPoint, o: &NormalOptions| adjoint(&r(p, o)?)) as Recipe
        }),
    })
}

fn opts_for(a: &BdMBlockSymbol) -> NormalOptions {
    NormalOptions {
        modes: a.modes,
        ..Default::default()
    }
    .with_beta(a.beta / a.frozen.bracket())
}

/// Boundary principal symbol on 𝒮(ℝ₊) ⊕ ℂ^r.
pub fn principal_boundary_symbol(a: &BdMBlockSymbol) -> Result<OperatorMatrix> {
    let p = a.principal.clone().ok_or(Error::MissingPrincipalPart)?;
    let mut m = OperatorMatrix::new(p, Side::Plus, Side::Plus, &a.frozen, a.beta);
    if a.boundary_rank > 0 {
        m.domain.norm = "L2+C".into();
        m.codomain.norm = "L2+C".into();
    }
    Ok(m)
}

/// Ellipticity verdict over a grid of frozen points.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub interior_min: f64,
    pub boundary_min_sv: Vec<f64>,
    pub boundary_min_sv_refined: Vec<f64>,
    pub max_refinement_change: f64,
    pub elliptic: bool,
}

/// Interior |a_m| bound and smallest singular values of the tall sections P_{2N}σ_∂P_N and
/// P_{2N}σ_∂*P_N, refined to P_{4N}·P_{2N}.
pub fn ellipticity_check(
    a: &BdMBlockSymbol,
    grid: &[FrozenPoint],
    opts: &NormalOptions,
) -> Result<EllipticityReport> {
    let threshold = 1e-6;
    let mut sv = vec![];
    let mut sv2 = vec![];
    let mut interior = f64::INFINITY;
    let mut change: f64 = 0.0;
    for pt in grid {
        let n = opts.modes;
        let b1 = a.at(pt, &opts.with_modes(2 * n))?;
        let b2 = a.at(pt, &opts.with_modes(4 * n))?;
        interior = interior.min(b1.interior_min);
        let s1 = section_min_sv(
            &principal_boundary_symbol(&b1)?.matrix,
            2 * n,
            n,
            b1.boundary_rank,
        );
        let s2 = section_min_sv(
            &principal_boundary_symbol(&b2)?.matrix,
            4 * n,
            2 * n,
            b2.boundary_rank,
        );
        let scale = s1.max(s2);
        if scale > threshold {
            change = change.max((s1 - s2).abs() / scale);
        }
        sv.push(s1);
        sv2.push(s2);
    }
    let bmin = sv.iter().chain(&sv2).cloned().fold(f64::INFINITY, f64::min);
    let elliptic = interior >= threshold && bmin >= threshold && change <= 0.05;
    Ok(EllipticityReport {
        interior_min: interior,
        boundary_min_sv: sv,
        boundary_min_sv_refined: sv2,
        max_refinement_change: change,
        elliptic,
    })
}

/// Tall sections (big + r)×(n + r) of a (big + r)-square block matrix and of its adjoint; the
/// boundary component sits at index `big`.
pub fn tall_sections(
    m: &DMatrix<C64>,
    big: usize,
    n: usize,
    r: usize,
) -> (DMatrix<C64>, DMatrix<C64>) {
    let cols: Vec<usize> = (0..n).chain(big..big + r).collect();
    let tall = DMatrix::from_fn(big + r, cols.len(), |i, j| m[(i, cols[j])]);
    let tall_adj = DMatrix::from_fn(big + r, cols.len(), |i, j| m[(cols[j], i)].conj());
    (tall, tall_adj)
}

fn section_min_sv(m: &DMatrix<C64>, big: usize, n: usize, r: usize) -> f64 {
    let (t, ta) = tall_sections(m, big, n, r);
    min_sv(&t).min(min_sv(&ta))
}

fn min_sv(m: &DMatrix<C64>) -> f64 {
    singular_values(m).into_iter().fold(f64::INFINITY, f64::min)
}

/// Inverse of σ_∂(A) through A*(AA*)⁻¹.
#[derive(Clone, Debug)]
pub struct Parametrix {
    pub inverse: OperatorMatrix,
    pub residual: f64,
}

pub fn parametrix_symbol(a: &BdMBlockSymbol) -> Result<Parametrix> {
    let s = principal_boundary_symbol(a)?;
    parametrix_of(&s)
}

/// A*(AA*)⁻¹ for a square principal matrix.
pub fn parametrix_of(s: &OperatorMatrix) -> Result<Parametrix> {
    let m = &s.matrix;
    let svs = singular_values(m);
    let (lo, hi) = svs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    if lo <= 1e-12 * hi.max(1e-300) {
        return Err(Error::SingularBoundarySymbol(lo));
    }
    let aas = m * m.adjoint();
    let inv_aas = aas
        .clone()
        .try_inverse()
        .ok_or(Error::SingularBoundarySymbol(lo))?;
    let inv = m.adjoint() * inv_aas;
    let n = m.nrows();
    let residual = spectral_norm(&(m * &inv - DMatrix::<C64>::identity(n, n)));
    if residual > 1e-8 {
        return Err(Error::SingularBoundarySymbol(residual));
    }
    let mut out = s.clone();
    out.matrix = inv;
    Ok(Parametrix {
        inverse: out,
        residual,
    })
}

/// Result of A P A*.
#[derive(Clone, Debug)]
pub struct EgorovResult {
    pub block: BdMBlockSymbol,
    pub chart_is_identity: bool,
    /// max |q(t) − t|/(1+|t|) of the composed fiber map.
    pub fiber_identity_defect: f64,
    /// The result is an operator over the identity of the expected order and type.
    pub class_ok: bool,
}

pub fn egorov_conjugate(a: &BdMBlockSymbol, p: &BdMBlockSymbol) -> Result<EgorovResult> {
    if p.chart != "id" {
        return Err(Error::ChartMismatch(format!(
            "P must be over the identity, got {}",
            p.chart
        )));
    }
    let astar = adjoint(a)?;
    let block = compose(&compose(a, p)?, &astar)?;
    let defect = block
        .fiber_map
        .as_ref()
        .map(|m| m.identity_defect(block.frozen.bracket()))
        .unwrap_or(0.0);
    let chart_is_identity = block.chart == "id";
    let class_ok = chart_is_identity
        && defect <= 1e-8
        && block.type_d <= p.type_d
        && block.order <= p.order + 1e-12;
    Ok(EgorovResult {
        block,
        chart_is_identity,
        fiber_identity_defect: defect,
        class_ok,
    })
}

/// Frozen points (x′, s·dir) over a sweep of magnitudes.
pub fn sweep_points(x_prime: &[f64], dir: &[f64], sweep: &[f64]) -> Result<Vec<FrozenPoint>> {
    sweep
        .iter()
        .map(|s| FrozenPoint::new(x_prime.to_vec(), dir.iter().map(|v| v * s).collect()))
        .collect()
}

/// Log-log decay of a leading-block defect over a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepFit {
    pub xi_norms: Vec<f64>,
    pub values: Vec<f64>,
    /// `None` when all values are below the floor.
    pub slope: Option<f64>,
}

pub fn sweep_fit(
    pts: &[FrozenPoint],
    floor: f64,
    f: &dyn Fn(&FrozenPoint) -> Result<f64>,
) -> Result<SweepFit> {
    let mut xs = vec![];
    let mut vs = vec![];
    for p in pts {
        xs.push(p.xi_prime.iter().map(|v| v * v).sum::<f64>().sqrt());
        vs.push(f(p)?);
    }
    let slope = if vs.iter().all(|v| *v <= floor) {
        None
    } else {
        Some(loglog_slope(&xs, &vs))
    };
    Ok(SweepFit {
        xi_norms: xs,
        values: vs,
        slope,
    })
}

/// ‖lead(BA) − lead(σ_∂(B)σ_∂(A))‖ over a sweep.
pub fn multiplicativity_defect(
    b: &BdMBlockSymbol,
    a: &BdMBlockSymbol,
    pts: &[FrozenPoint],
    opts: &NormalOptions,
) -> Result<SweepFit> {
    let k = opts.modes / 2;
    sweep_fit(pts, 1e-10, &|p| {
        let (bb, aa) = (b.at(p, opts)?, a.at(p, opts)?);
        let ba = compose(&bb, &aa)?;
        let r = ba.boundary_rank;
        let (sb, sa) = (bb.promoted(r), aa.promoted(r));
        let prod = sb.principal.clone().ok_or(Error::MissingPrincipalPart)?
            * sa.principal.clone().ok_or(Error::MissingPrincipalPart)?;
        Ok(spectral_norm(
            &(ba.leading(&ba.matrix, k) - ba.leading(&prod, k)),
        ))
    })
}

/// Relative difference of (CB)A and C(BA).
pub fn associativity_residual(
    c: &BdMBlockSymbol,
    b: &BdMBlockSymbol,
    a: &BdMBlockSymbol,
) -> Result<f64> {
    let l = compose(&compose(c, b)?, a)?;
    let r = compose(c, &compose(b, a)?)?;
    let scale = spectral_norm(&l.matrix).max(1.0);
    Ok(spectral_norm(&(&l.matrix - &r.matrix)) / scale)
}

/// Upper-left bookkeeping of a composition: r⁺Be⁺r⁺Ae⁺ = r⁺BAe⁺ − r⁺Be⁻r⁻Ae⁺.
#[derive(Clone, Debug)]
pub struct UpperLeftSplit {
    pub product: DMatrix<C64>,
    pub composed: DMatrix<C64>,
    pub leftover: DMatrix<C64>,
    /// Relative residual on the leading half block.
    pub residual: f64,
}

pub fn upper_left_split(b: &BdMBlockSymbol, a: &BdMBlockSymbol) -> Result<UpperLeftSplit> {
    check_compatible(b, a)?;
    let (mb, ma) = match (&b.fio_model, &a.fio_model) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(Error::Unsupported(
                "upper-left split needs FIO parts on both factors".into(),
            ))
        }
    };
    let opts = opts_for(b);
    let comp = NormalModel::compose(mb, ma)?;
    let composed = model_blocks(&comp, &b.frozen, &opts)?.0.matrix;
    let pm_b = model_blocks_from(mb, &b.frozen, Side::Minus, &opts)?
        .0
        .matrix;
    let mp_a = model_blocks(ma, &a.frozen, &opts)?.1.matrix;
    let leftover = -(pm_b * mp_a);
    let product = &b.fio_matrix * &a.fio_matrix;
    let k = b.modes / 2;
    let lead = |m: &DMatrix<C64>| m.view((0, 0), (k, k)).into_owned();
    let diff = lead(&product) - lead(&composed) - lead(&leftover);
    let residual = spectral_norm(&diff) / spectral_norm(&lead(&product)).max(1.0);
    Ok(UpperLeftSplit {
        product,
        composed,
        leftover,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Composition cases

/// Kind of a composition product.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Green,
    Potential,
    Trace,
    Scalar,
}

/// One of the twelve block products of B ∘ A.
#[derive(Clone, Debug)]
pub struct CaseProduct {
    pub case: usize,
    pub kind: PartKind,
    pub declared_order: f64,
    pub declared_type: Option<usize>,
    pub matrix: DMatrix<C64>,
}

/// Matrix of case `k` (1..=12) of B ∘ A, in the order of the composition theorem.
pub fn comp_case(k: usize, b: &BdMBlockSymbol, a: &BdMBlockSymbol) -> Result<CaseProduct> {
    check_compatible(b, a)?;
    let (fb, ga, gb, fa) = (&b.fio_matrix, a.green(), b.green(), &a.fio_matrix);
    let col = |v: DVector<C64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let row = |v: DVector<C64>| DMatrix::from_row_slice(1, v.len(), v.as_slice());
    let sc = |c: C64| DMatrix::from_element(1, 1, c);
    let (ma, da, db) = (a.order, a.type_d, b.type_d);
    let plus = |x: f64| -> usize { x.ceil().max(0.0) as usize };
    use PartKind::*;
    let (kind, dtype, m) = match k {
        1 => (Green, Some(da), fb * &ga),
        2 => (Green, Some(plus(ma + db as f64)), &gb * fa),
        3 => (Green, Some(da), &gb * &ga),
        4 => (Potential, None, fb * col(a.potential())),
        5 => (Potential, None, &gb * col(a.potential())),
        6 => (Green, Some(da), col(b.potential()) * row(a.trace())),
        7 => (Potential, None, col(b.potential()) * sc(a.scalar())),
        8 => (Trace, Some(plus(ma + db as f64)), row(b.trace()) * fa),
        9 => (Trace, Some(da), row(b.trace()) * &ga),
        10 => (Trace, Some(da), sc(b.scalar()) * row(a.trace())),
        11 => (Scalar, None, row(b.trace()) * col(a.potential())),
        12 => (Scalar, None, sc(b.scalar()) * sc(a.scalar())),
        _ => return Err(Error::Unsupported(format!("composition case {k}"))),
    };
    Ok(CaseProduct {
        case: k,
        kind,
        declared_order: b.order + a.order,
        declared_type: dtype,
        matrix: m,
    })
}

/// Structural type of a family of trace functionals (rows): the number of jet rows γ₀, γ₁, …
/// needed before the remainder has decaying Laguerre coefficients.
pub fn measured_type(rows: &DMatrix<C64>, basis: &HalfLineBasis) -> usize {
    let n = rows.ncols();
    let fit_cols = 3 * n / 4;
    let tail = n / 2..fit_cols;
    let scale = rows.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0;
    }
    let jets: Vec<DVector<f64>> = (0..6).map(|j| basis.jet_row(j)).collect();
    let mut worst = 0;
    for i in 0..rows.nrows() {
        let r: DVector<C64> = rows.row(i).transpose().rows(0, fit_cols).into_owned();
        let rn = r.norm();
        if rn <= 1e-10 * scale {
            continue;
        }
        let mut found = jets.len();
        for d in 0..=jets.len() {
            let res = if d == 0 {
                r.clone()
            } else {
                let norms: Vec<f64> = (0..d).map(|j| jets[j].rows(0, fit_cols).norm()).collect();
                let g = DMatrix::<C64>::from_fn(fit_cols, d, |k, j| {
                    C64::new(jets[j][k] / norms[j], 0.0)
                });
                let c = crate::numerics::lstsq(&g, &r);
                &r - g * c
            };
            let t: f64 = tail.clone().map(|k| res[k].norm_sqr()).sum::<f64>().sqrt();
            if t <= 1e-7 * rn {
                found = d;
                break;
            }
        }
        worst = worst.max(found);
    }
    worst
}

/// Dilation-normalized size of a case product: spectral norm of its leading `k`-mode section.
pub fn case_size(c: &CaseProduct, k: usize) -> f64 {
    let (r, cc) = (c.matrix.nrows(), c.matrix.ncols());
    let v = c.matrix.view((0, 0), (r.min(k), cc.min(k))).into_owned();
    spectral_norm(&v)
}

/// Verdict of one composition case over a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct CaseVerdict {
    pub key: String,
    pub kind: PartKind,
    pub declared_order: f64,
    pub measured_order: f64,
    pub declared_type: Option<usize>,
    pub measured_type: Option<usize>,
    pub passed: bool,
}

/// Measures order (sweep slope, ±0.3) and structural type of case `k` for the pair (B, A).
pub fn verify_case(
    k: usize,
    b: &BdMBlockSymbol,
    a: &BdMBlockSymbol,
    pts: &[FrozenPoint],
    opts: &NormalOptions,
) -> Result<CaseVerdict> {
    let mut sizes = vec![];
    let mut norms = vec![];
    let mut last = None;
    for p in pts {
        let (bb, aa) = (b.at(p, opts)?, a.at(p, opts)?);
        let c = comp_case(k, &bb, &aa)?;
        sizes.push(case_size(&c, 8));
        norms.push(p.xi_prime.iter().map(|v| v * v).sum::<f64>().sqrt());
        last = Some((c, bb.basis()));
    }
    let (c, basis) = last.ok_or_else(|| Error::Unsupported("empty sweep".into()))?;
    let measured_order = loglog_slope(&norms, &sizes);
    let measured_type = match c.kind {
        PartKind::Green | PartKind::Trace => Some(measured_type(&c.matrix, &basis)),
        _ => None,
    };
    let passed =
        (measured_order - c.declared_order).abs() <= 0.3 && measured_type == c.declared_type;
    Ok(CaseVerdict {
        key: format!("composition case {k}"),
        kind: c.kind,
        declared_order: c.declared_order,
        measured_order,
        declared_type: c.declared_type,
        measured_type,
        passed,
    })
}

/// Built-in block fixtures.
pub mod fixtures {
    use super::*;
    use crate::geometry::phases;
    use crate::symbols::families;

    fn bracket(xip: &[f64]) -> f64 {
        crate::numerics::japanese(xip)
    }

    /// ⟨ξ′⟩ + iξ_n: order 1 with a degree-one polynomial part.
    pub fn first_order_symbol() -> ScalarSymbol {
        ScalarSymbol::fiber("<xi'>+i xin", 1.0, |_, xip, t| {
            C64::new(bracket(xip), 0.0) + I * t
        })
        .with_principal(|_, _, xip, t| {
            C64::new(xip.iter().map(|v| v * v).sum::<f64>().sqrt(), 0.0) + I * t
        })
    }

    /// (2⟨ξ′⟩ + iξ_n)/(⟨ξ′⟩ + iξ_n): elliptic order-0 symbol of winding zero.
    pub fn elliptic_symbol() -> ScalarSymbol {
        ScalarSymbol::fiber("(2<xi'>+i xin)/(<xi'>+i xin)", 0.0, |_, xip, t| {
            let b = bracket(xip);
            C64::new(2.0 * b, t) / C64::new(b, t)
        })
        .with_principal(|_, _, xip, t| {
            let b = xip.iter().map(|v| v * v).sum::<f64>().sqrt();
            C64::new(2.0 * b, t) / C64::new(b, t)
        })
    }

    pub fn p0() -> PotentialTerm {
        PotentialTerm {
            order: 0.0,
            coef: 1.0,
            rate: 1.0,
        }
    }

    pub fn t_reg() -> TraceTerm {
        TraceTerm::regular(0.0, 1.5)
    }

    pub fn g0() -> GreenTerm {
        GreenTerm {
            potential: p0(),
            trace: t_reg(),
        }
    }

    pub fn g1() -> GreenTerm {
        GreenTerm {
            potential: p0(),
            trace: TraceTerm::gamma(0),
        }
    }

    pub fn s0() -> ScalarTerm {
        ScalarTerm {
            order: 0.0,
            coef: 2.0,
        }
    }

    fn fio0() -> BlockParts {
        BlockParts::default().with_fio(families::bracket_cayley(), phases::identity(2))
    }

    fn fio1() -> BlockParts {
        BlockParts::default().with_fio(first_order_symbol(), phases::identity(2))
    }

    /// (parts, order, type) of B and A for composition case k.
    pub fn comp_case_pair(k: usize) -> ((BlockParts, f64, usize), (BlockParts, f64, usize)) {
        let d = BlockParts::default;
        let gr1 = (d().with_green(g1()), 0.5, 1);
        let gr0 = (d().with_green(g0()), 0.0, 0);
        let pot = (d().with_potential(p0()), 0.0, 0);
        let sca = (d().with_scalar(s0()), 0.0, 0);
        let treg = (d().with_trace(t_reg()), 0.0, 0);
        let tg0 = (d().with_trace(TraceTerm::gamma(0)), 0.5, 1);
        match k {
            1 => ((fio0(), 0.0, 0), gr1),
            2 => (gr1, (fio1(), 1.0, 0)),
            3 => (gr0, gr1),
            4 => ((fio0(), 0.0, 0), pot),
            5 => (gr0, pot),
            6 => (pot, (d().with_trace(TraceTerm::gamma(1)), 1.5, 2)),
            7 => (pot, sca),
            8 => (tg0, (fio1(), 1.0, 0)),
            9 => (treg, gr1),
            10 => (sca, tg0),
            11 => (treg, pot),
            _ => (sca.clone(), sca),
        }
    }

    /// Blocks (B, A) of case k at a frozen point.
    pub fn comp_case_blocks(
        k: usize,
        pt: &FrozenPoint,
        opts: &NormalOptions,
    ) -> Result<(BdMBlockSymbol, BdMBlockSymbol)> {
        let ((pb, mb, db), (pa, ma, da)) = comp_case_pair(k);
        Ok((
            assemble_block(&format!("B{k}"), &pb, mb, db, pt, opts)?,
            assemble_block(&format!("A{k}"), &pa, ma, da, pt, opts)?,
        ))
    }

    /// Full order-0 type-0 blocks used for multiplicativity and associativity.
    pub fn full_block(
        which: usize,
        pt: &FrozenPoint,
        opts: &NormalOptions,
    ) -> Result<BdMBlockSymbol> {
        let sym = match which % 3 {
            0 => families::bracket_cayley(),
            1 => elliptic_symbol(),
            _ => families::bracket_plus(),
        };
        let parts = BlockParts::default()
            .with_fio(sym, phases::identity(2))
            .with_green(GreenTerm {
                potential: PotentialTerm {
                    order: 0.0,
                    coef: 0.5,
                    rate: 1.0 + 0.25 * which as f64,
                },
                trace: t_reg(),
            })
            .with_potential(PotentialTerm {
                order: 0.0,
                coef: 1.0,
                rate: 2.0,
            })
            .with_trace(TraceTerm::regular(0.0, 1.0 + 0.5 * which as f64))
            .with_scalar(ScalarTerm {
                order: 0.0,
                coef: 1.0 + which as f64,
            });
        assemble_block(&format!("full{which}"), &parts, 0.0, 0, pt, opts)
    }
}

/// Runs all twelve composition cases over a sweep.
pub fn comp_case_suite(pts: &[FrozenPoint], opts: &NormalOptions) -> Result<Vec<CaseVerdict>> {
    (1..=12)
        .map(|k| {
            let (b, a) = fixtures::comp_case_blocks(k, &pts[0], opts)?;
            verify_case(k, &b, &a, pts, opts)
        })
        .collect()
}

/// Helper used by index_lab: truncated r⁺·e⁺ matrix of a model at the block's basis.
pub fn model_matrix(
    model: &NormalModel,
    pt: &FrozenPoint,
    opts: &NormalOptions,
) -> Result<DMatrix<C64>> {
    Ok(model_blocks(model, pt, opts)?.0.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::phases;
    use crate::symbols::families;

    fn pt(s: f64) -> FrozenPoint {
        FrozenPoint::new(vec![0.1], vec![s]).unwrap()
    }

    fn opts() -> NormalOptions {
        NormalOptions {
            modes: 32,
            ..Default::default()
        }
    }

    fn maxabs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn assembly_examples() {
        let p = pt(2.0);
        let id = identity_block(&p, &opts(), true).unwrap();
        assert!(maxabs(&(&id.matrix - DMatrix::identity(33, 33))) < 1e-12);
        let g = assemble_block(
            "gamma0",
            &BlockParts::default().with_trace(TraceTerm::gamma(0)),
            0.5,
            1,
            &p,
            &opts(),
        )
        .unwrap();
        assert_eq!(g.type_d, 1);
        assert!(matches!(
            assemble_block("bad", &BlockParts::default(), 1.0, 2, &p, &opts()),
            Err(Error::TypeBoundViolated { .. })
        ));
    }

    #[test]
    fn compose_and_adjoint() {
        let p = pt(2.0);
        let o = opts();
        let a = fixtures::full_block(0, &p, &o).unwrap();
        let id = identity_block(&p, &o, true).unwrap();
        let c = compose(&id, &a).unwrap();
        assert!(maxabs(&(&c.matrix - &a.matrix)) < 1e-10);
        let (b6, a6) = fixtures::comp_case_blocks(6, &p, &o).unwrap();
        let c6 = compose(&b6, &a6).unwrap();
        let expect = b6.potential() * a6.trace().transpose();
        assert!(maxabs(&(c6.upper_left() - expect)) < 1e-12);
        let k = assemble_block(
            "k",
            &BlockParts::default().with_potential(fixtures::p0()),
            0.0,
            0,
            &p,
            &o,
        )
        .unwrap();
        let ks = adjoint(&k).unwrap();
        assert!((ks.trace() - k.potential().map(|c| c.conj())).norm() < 1e-14);
        assert!(ks.potential().norm() < 1e-14);
        let adj = adjoint(&a).unwrap();
        let sp = principal_boundary_symbol(&adj).unwrap().matrix;
        let sa = principal_boundary_symbol(&a).unwrap().matrix.adjoint();
        assert!(maxabs(&(sp - sa)) < 1e-8);
        assert!(matches!(
            adjoint(&compose(&a, &fixtures::comp_case_blocks(2, &p, &o).unwrap().1).unwrap()),
            Err(Error::PositiveOrderAdjoint { .. })
        ));
    }

    #[test]
    fn ellipticity_and_parametrix() {
        let o = opts();
        let grid = vec![pt(1.0), pt(4.0)];
        let id = identity_block(&pt(1.0), &o, false).unwrap();
        let r = ellipticity_check(&id, &grid, &o).unwrap();
        assert!(r.elliptic);
        let shift = assemble_block(
            "cayley",
            &BlockParts::default().with_fio(families::bracket_cayley(), phases::identity(2)),
            0.0,
            0,
            &pt(1.0),
            &o,
        )
        .unwrap();
        assert!(!ellipticity_check(&shift, &grid, &o).unwrap().elliptic);
        let e = assemble_block(
            "ell",
            &BlockParts::default().with_fio(fixtures::elliptic_symbol(), phases::identity(2)),
            0.0,
            0,
            &pt(1.0),
            &o,
        )
        .unwrap();
        assert!(ellipticity_check(&e, &grid, &o).unwrap().elliptic);
        assert!(parametrix_symbol(&e).unwrap().residual < 1e-8);
    }

    #[test]
    fn upper_left_leftover() {
        let p = pt(2.0);
        let o = opts();
        let mk = |s: ScalarSymbol| {
            assemble_block(
                "f",
                &BlockParts::default().with_fio(s, phases::identity(2)),
                0.0,
                0,
                &p,
                &o,
            )
            .unwrap()
        };
        let b = mk(families::bracket_cayley());
        let a = mk(fixtures::elliptic_symbol());
        let s = upper_left_split(&b, &a).unwrap();
        assert!(s.residual < 1e-8, "{}", s.residual);
    }

    #[test]
    fn case_types() {
        let o = opts();
        let pts = sweep_points(&[0.1], &[1.0], &[4.0, 8.0, 16.0, 32.0]).unwrap();
        for v in comp_case_suite(&pts, &o).unwrap() {
            assert!(v.passed, "{v:?}");
        }
    }
}
