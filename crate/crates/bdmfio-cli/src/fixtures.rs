//! Named fixtures that configs refer to: charts, phases, symbols, sections and blocks.

use bdmfio::bdm::{self, BdMBlockSymbol, BlockParts};
use bdmfio::geometry::{
    build_phase, charts, hamiltonian_flow_chart, hamiltonians, phases, Hamiltonian, PhaseFunction,
    ProfileFn, Quantization, SymplectomorphismChart,
};
use bdmfio::normal_ops::{FrozenPoint, NormalOptions};
use bdmfio::numerics::C64;
use bdmfio::symbols::{families, ScalarSymbol};
use bdmfio::Result;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianRef {
    Zero,
    Translation,
    NormalShear { eps: f64 },
    TangentLift { eps: f64 },
}

impl HamiltonianRef {
    pub fn build(&self) -> Hamiltonian {
        match self {
            HamiltonianRef::Zero => hamiltonians::zero(),
            HamiltonianRef::Translation => hamiltonians::translation(),
            HamiltonianRef::NormalShear { eps } => hamiltonians::normal_shear(*eps),
            HamiltonianRef::TangentLift { eps } => hamiltonians::tangent_lift(*eps),
        }
    }
}

/// Charts on T*ℝ²₊.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartRef {
    Identity,
    /// (y′, y_n) ↦ (y′, f(y′) y_n) with the induced fiber map.
    Simple {
        profile: ProfileFn,
    },
    /// Non-symplectic dilation of the fibers by `factor`.
    Scaling {
        factor: f64,
    },
    BoundaryLift {
        a: f64,
    },
    RotationLift {
        angle: f64,
    },
    /// Time-`time` map of a Hamiltonian flow.
    Flow {
        hamiltonian: HamiltonianRef,
        time: f64,
    },
}

impl ChartRef {
    pub fn build(&self) -> Result<SymplectomorphismChart> {
        Ok(match self {
            ChartRef::Identity => charts::identity(2),
            ChartRef::Simple { profile } => charts::simple(profile.clone()),
            ChartRef::Scaling { factor } => charts::scaling(2, *factor),
            ChartRef::BoundaryLift { a } => charts::boundary_lift(*a),
            ChartRef::RotationLift { angle } => charts::rotation_lift(*angle),
            ChartRef::Flow { hamiltonian, time } => {
                hamiltonian_flow_chart(&hamiltonian.build(), *time)?
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseRef {
    Identity,
    Simple {
        profile: ProfileFn,
    },
    NormalDeformation {
        eps: f64,
    },
    /// Phase generated by a chart.
    FromChart {
        chart: ChartRef,
        side: Quantization,
    },
}

impl PhaseRef {
    pub fn build(&self) -> Result<PhaseFunction> {
        match self {
            PhaseRef::Identity => Ok(phases::identity(2)),
            PhaseRef::Simple { profile } => Ok(phases::simple(profile.clone())),
            PhaseRef::NormalDeformation { eps } => Ok(phases::normal_deformation(*eps)),
            PhaseRef::FromChart { chart, side } => build_phase(&chart.build()?, *side),
        }
    }

    /// Chart label carried by blocks built over this phase.
    pub fn chart_label(&self) -> String {
        match self {
            PhaseRef::Identity => "id".into(),
            PhaseRef::Simple { profile } => format!("simple({profile:?})"),
            PhaseRef::NormalDeformation { eps } => format!("nd({eps})"),
            PhaseRef::FromChart { chart, side } => format!("{chart:?}/{side:?}"),
        }
    }
}

/// Scalar symbol families.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolRef {
    One,
    XinPow {
        k: u32,
    },
    IXin,
    /// Σ c_k ξ_n^k with real coefficients.
    XinPoly {
        coeffs: Vec<f64>,
    },
    AbsXi,
    XinAbsXi,
    RationalPlus,
    RationalMinus,
    Cayley,
    BracketPlus,
    BracketCayley,
    JbracketPow {
        m: f64,
    },
    XnXin,
    AffineXin,
    BracketPlusXn,
    FirstOrder,
    Elliptic,
    /// 1/(⟨ξ′⟩ + iξ_n), order −1.
    InverseBracketPlus,
    /// |ξ′|/(|ξ′| + iξ_n) with itself as principal part (homogeneous, x_n-independent).
    HomogeneousPlus,
    /// The same symbol declared without a principal part.
    WithoutPrincipal {
        symbol: Box<SymbolRef>,
    },
}

impl SymbolRef {
    pub fn build(&self) -> ScalarSymbol {
        match self {
            SymbolRef::One => families::one(),
            SymbolRef::XinPow { k } => families::xin_pow(*k),
            SymbolRef::IXin => families::i_xin(),
            SymbolRef::XinPoly { coeffs } => {
                families::xin_poly(coeffs.iter().map(|c| C64::new(*c, 0.0)).collect())
            }
            SymbolRef::AbsXi => families::abs_xi(),
            SymbolRef::XinAbsXi => families::xin_abs_xi(),
            SymbolRef::RationalPlus => families::rational_plus(),
            SymbolRef::RationalMinus => families::rational_minus(),
            SymbolRef::Cayley => families::cayley(),
            SymbolRef::BracketPlus => families::bracket_plus(),
            SymbolRef::BracketCayley => families::bracket_cayley(),
            SymbolRef::JbracketPow { m } => families::jbracket_pow(*m),
            SymbolRef::XnXin => families::xn_xin(),
            SymbolRef::AffineXin => families::affine_xin(),
            SymbolRef::BracketPlusXn => families::bracket_plus_xn(),
            SymbolRef::FirstOrder => bdm::fixtures::first_order_symbol(),
            SymbolRef::Elliptic => bdm::fixtures::elliptic_symbol(),
            SymbolRef::InverseBracketPlus => {
                ScalarSymbol::fiber("1/(<xi'>+i xin)", -1.0, |_, xip, t| {
                    C64::new(1.0, 0.0)
                        / C64::new((1.0 + xip.iter().map(|v| v * v).sum::<f64>()).sqrt(), t)
                })
            }
            SymbolRef::HomogeneousPlus => {
                let f = |xip: &[f64], t: f64| {
                    let r = xip.iter().map(|v| v * v).sum::<f64>().sqrt();
                    C64::new(r, 0.0) / C64::new(r, t)
                };
                ScalarSymbol::fiber("|xi'|/(|xi'|+i xin)", 0.0, move |_, xip, t| f(xip, t))
                    .with_principal(move |_, _, xip, t| f(xip, t))
            }
            SymbolRef::WithoutPrincipal { symbol } => symbol.build().without_principal(),
        }
    }
}

/// Unit sections e^{i(a sin x′₁ + k x′₁)}.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SectionRef {
    One,
    Phase {
        amplitude: f64,
        winding: i64,
    },
    /// A non-unitary amplitude 1 + a sin x′₁, rejected by the index builder.
    Scaled {
        a: f64,
    },
}

impl SectionRef {
    pub fn build(&self) -> ScalarSymbol {
        match *self {
            SectionRef::One => families::one(),
            SectionRef::Phase { amplitude, winding } => families::section(
                &format!("e^(i({amplitude} sin x + {winding} x))"),
                move |x| C64::from_polar(1.0, amplitude * x[0].sin() + winding as f64 * x[0]),
            ),
            SectionRef::Scaled { a } => families::section(&format!("1+{a} sin x"), move |x| {
                C64::new(1.0 + a * x[0].sin(), 0.0)
            }),
        }
    }
}

/// Frozen boundary point (x′, ξ′).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRef {
    pub x_prime: Vec<f64>,
    pub xi_prime: Vec<f64>,
}

impl PointRef {
    pub fn build(&self) -> Result<FrozenPoint> {
        FrozenPoint::new(self.x_prime.clone(), self.xi_prime.clone())
    }
}

/// Block symbols.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockRef {
    /// Upper-left FIO block r⁺Op^ψ(a)e⁺ of order `order`; type ⌈order⌉₊.
    Fio {
        symbol: SymbolRef,
        phase: PhaseRef,
        order: f64,
    },
    /// Built-in full 2×2 blocks over the identity (index mod 3).
    Full { which: usize },
}

impl BlockRef {
    pub fn build(&self, pt: &FrozenPoint, opts: &NormalOptions) -> Result<BdMBlockSymbol> {
        match self {
            BlockRef::Fio {
                symbol,
                phase,
                order,
            } => {
                let a = symbol.build();
                let parts = BlockParts::default()
                    .with_fio(a.clone(), phase.build()?)
                    .with_chart(&phase.chart_label());
                let name = format!("{}@{}", a.name, phase.chart_label());
                bdm::assemble_block(
                    &name,
                    &parts,
                    *order,
                    order.ceil().max(0.0) as usize,
                    pt,
                    opts,
                )
            }
            BlockRef::Full { which } => bdm::fixtures::full_block(*which, pt, opts),
        }
    }
}

/// Test functions h(ξ) for the H-space projection.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HFunction {
    /// Σ c_k ξ^k.
    Polynomial { coeffs: Vec<f64> },
    /// 1/(a + iξ).
    RationalPlus { a: f64 },
    /// 2ξ/(1 + ξ²).
    OddRational,
}

impl HFunction {
    pub fn label(&self) -> String {
        match self {
            HFunction::Polynomial { coeffs } => format!("polynomial{coeffs:?}"),
            HFunction::RationalPlus { a } => format!("1/({a}+i xi)"),
            HFunction::OddRational => "2 xi/(1+xi^2)".into(),
        }
    }

    pub fn eval(&self, t: f64) -> C64 {
        match self {
            HFunction::Polynomial { coeffs } => {
                C64::new(coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c), 0.0)
            }
            HFunction::RationalPlus { a } => C64::new(1.0, 0.0) / C64::new(*a, t),
            HFunction::OddRational => C64::new(2.0 * t / (1.0 + t * t), 0.0),
        }
    }
}
