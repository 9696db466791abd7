//! One function per subcommand. Each evaluates its declared criteria and returns the results
//! payload plus an optional CSV table; library errors inside a case become failing criteria.

use crate::config::*;
use crate::report::{num, Criteria, Table};
use bdmfio::bdm::{self, fixtures as bdm_fixtures};
use bdmfio::geometry::{check_admissible, phases, AdmissibilityTolerances, ProfileFn, SampleGrid};
use bdmfio::halfline::{
    derivative_induction_residual, FrequencyGrid, HalfLineBasis, LineVector, Side,
};
use bdmfio::index_lab::{self, DeformationFamily, IndexOptions};
use bdmfio::normal_ops::{self, FrozenPoint, NormalOptions};
use bdmfio::numerics::{loglog_slope, C64};
use bdmfio::symbols::{
    check_transmission, families, project_h, ProjectOptions, TransmissionOptions,
};
use bdmfio::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

/// Shared run settings.
#[derive(Clone, Debug)]
pub struct Context {
    pub opts: NormalOptions,
    pub seed: u64,
    /// Multiplies every residual tolerance and slope slack.
    pub scale: f64,
}

/// Results of one subcommand.
pub struct Outcome {
    pub criteria: Criteria,
    pub results: Value,
    pub table: Option<Table>,
}

fn outcome(criteria: Criteria, results: Value, table: Option<Table>) -> Outcome {
    Outcome {
        criteria,
        results,
        table,
    }
}

/// Records a library error as a failing criterion.
fn fail_on<T>(crit: &mut Criteria, anchor: &str, subject: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            crit.check(anchor, subject, false, format!("error: {e}"));
            None
        }
    }
}

fn sup(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

pub fn dispatch(exp: &Experiment, ctx: &Context) -> Outcome {
    match exp {
        Experiment::CheckAdmissible(c) => check_admissible_cmd(c, ctx),
        Experiment::CheckTransmission(c) => check_transmission_cmd(c, ctx),
        Experiment::Dirac(c) => dirac_cmd(c, ctx),
        Experiment::Truncate(c) => truncate_cmd(c, ctx),
        Experiment::DefectSweep(c) => defect_cmd(c, ctx),
        Experiment::ComposeCases(c) => compose_cmd(c, ctx),
        Experiment::Parametrix(c) => parametrix_cmd(c, ctx),
        Experiment::Egorov(c) => egorov_cmd(c, ctx),
        Experiment::Deform(c) => deform_cmd(c, ctx),
        Experiment::Index(c) => index_cmd(c, ctx),
        Experiment::Independence(c) => independence_cmd(c, ctx),
    }
}

fn check_admissible_cmd(cfg: &AdmissibleConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let d = AdmissibilityTolerances::default();
    let tol = AdmissibilityTolerances {
        homogeneity: d.homogeneity * ctx.scale,
        boundary: d.boundary * ctx.scale,
        symplectic: d.symplectic * ctx.scale,
        jacobian: d.jacobian * ctx.scale,
        symmetry: d.symmetry * ctx.scale,
    };
    let mut results = vec![];
    for case in &cfg.cases {
        let subject = format!("{:?}", case.chart);
        let Some(chart) = fail_on(&mut crit, "admissibility", &subject, case.chart.build()) else {
            continue;
        };
        let r = check_admissible(&chart, &SampleGrid::default_for(2), &tol);
        let Some(rep) = fail_on(&mut crit, "admissibility", &chart.name, r) else {
            continue;
        };
        match case.expect {
            Expect::Pass => {
                let failing: Vec<&str> = rep
                    .criteria
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                crit.check(
                    "admissibility",
                    &chart.name,
                    rep.passed,
                    format!("failing criteria: {failing:?}"),
                );
                let worst = sup(rep.criteria.iter().map(|c| c.worst_residual));
                crit.at_most(
                    "admissibility residual",
                    &chart.name,
                    worst,
                    cfg.max_residual * ctx.scale,
                );
            }
            Expect::Fail if case.failing.is_empty() => {
                crit.check(
                    "admissibility rejection",
                    &chart.name,
                    !rep.passed,
                    "chart must be rejected",
                );
            }
            Expect::Fail => {
                for name in &case.failing {
                    let failed = rep.criterion(name).map(|c| !c.passed).unwrap_or(false);
                    crit.check(
                        &format!("admissibility {name} rejection"),
                        &chart.name,
                        failed,
                        format!("criterion {name} must fail"),
                    );
                }
            }
        }
        results.push(json!({ "chart": case.chart, "report": rep }));
    }
    outcome(crit, json!({ "charts": results }), None)
}

const PROJECTION_SAMPLES: [f64; 9] = [-40.0, -5.0, -1.0, -0.3, 0.0, 0.7, 1.7, 9.0, 40.0];

fn check_transmission_cmd(cfg: &TransmissionConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let d = TransmissionOptions::default();
    let opts = TransmissionOptions {
        tol: d.tol * ctx.scale,
        ..d
    };
    let mut symbols = vec![];
    for case in &cfg.symbols {
        let a = case.symbol.build();
        let (passed, entry) = match check_transmission(&a, &opts) {
            Ok(r) => (r.passed, json!({ "symbol": a.name, "report": r })),
            Err(e) => (false, json!({ "symbol": a.name, "error": e.to_string() })),
        };
        let want = case.expect == Expect::Pass;
        crit.check(
            "transmission symmetry",
            &a.name,
            passed == want,
            format!("expected {}, got {}", verdict(want), verdict(passed)),
        );
        symbols.push(entry);
    }
    let mut projections = vec![];
    for h in &cfg.projections {
        let label = h.label();
        let Some(e) = fail_on(
            &mut crit,
            "H-projection reconstruction",
            &label,
            project_h(|t| h.eval(t), &ProjectOptions::default()),
        ) else {
            continue;
        };
        let err = sup(PROJECTION_SAMPLES.iter().map(|&t| {
            let v = h.eval(t);
            (e.eval(t) - v).norm() / v.norm().max(1.0)
        }));
        crit.at_most(
            "H-projection reconstruction",
            &label,
            err,
            cfg.projection_tolerance * ctx.scale,
        );
        projections.push(json!({ "function": label, "max_relative_error": err, "polynomial_size": e.poly_size() }));
    }
    outcome(
        crit,
        json!({ "symbols": symbols, "projections": projections }),
        None,
    )
}

fn verdict(p: bool) -> &'static str {
    if p {
        "pass"
    } else {
        "fail"
    }
}

/// u(x) = Σ c_k x^k e^{−ax} with transform Σ c_k k!/(a+iξ)^{k+1}.
struct ExpPoly {
    a: f64,
    c: Vec<f64>,
}

impl ExpPoly {
    fn label(&self) -> String {
        format!(
            "a={} c={:?}",
            num(self.a),
            self.c.iter().map(|v| num(*v)).collect::<Vec<_>>()
        )
    }

    fn eval(&self, x: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, c| acc * x + c) * (-self.a * x).exp()
    }

    fn hat(&self, xi: f64) -> C64 {
        let z = C64::new(self.a, xi);
        let mut fact = 1.0;
        let mut s = C64::new(0.0, 0.0);
        for (k, c) in self.c.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            s += C64::new(c * fact, 0.0) / z.powu(k as u32 + 1);
        }
        s
    }
}

fn dirac_cmd(cfg: &DiracConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let o = &ctx.opts;
    // closed form r⁺Op(1/(1+iξ_n))δ₀ = e^{−x}
    let mut closed = Value::Null;
    let pt = FrozenPoint::new(vec![0.0], vec![1e-8]);
    let k = pt.and_then(|p| {
        normal_ops::dirac_action(
            &families::rational_plus(),
            &phases::identity(2),
            &p,
            0,
            Side::Plus,
            o,
        )
    });
    if let Some(k) = fail_on(&mut crit, "Dirac closed form", "1/(1+i xin)", k) {
        let err = sup((0..=200).map(|i| {
            let x = i as f64 * 0.05;
            (k.eval(x) - C64::new((-x).exp(), 0.0)).norm()
        }));
        crit.at_most(
            "Dirac closed form",
            "1/(1+i xin)",
            err,
            cfg.closed_form_tolerance * ctx.scale,
        );
        closed = json!({ "sup_error": err });
    }

    // order sweep
    let jobs: Vec<(usize, usize)> = (0..cfg.order_cases.len())
        .flat_map(|c| (0..=cfg.max_jet).map(move |j| (c, j)))
        .collect();
    let sweeps: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(c, j)| {
            let case = &cfg.order_cases[c];
            let (a, psi) = (case.symbol.build(), case.phase.build()?);
            cfg.sweep
                .iter()
                .map(|&s| {
                    let p = FrozenPoint::new(cfg.x_prime.clone(), vec![s])?;
                    Ok(normal_ops::dirac_action(&a, &psi, &p, j, Side::Plus, o)?
                        .plus
                        .norm())
                })
                .collect()
        })
        .collect();
    let brackets: Vec<f64> = cfg.sweep.iter().map(|s| (1.0 + s * s).sqrt()).collect();
    let mut table = Table::new(&["symbol", "phase", "j", "xi_prime", "norm"]);
    let mut orders = vec![];
    for (&(c, j), r) in jobs.iter().zip(sweeps) {
        let case = &cfg.order_cases[c];
        let a = case.symbol.build();
        let subject = format!("{} over {} j={j}", a.name, case.phase.chart_label());
        let Some(norms) = fail_on(&mut crit, "Dirac order", &subject, r) else {
            continue;
        };
        let slope = loglog_slope(&brackets, &norms);
        let expected = a.order + 0.5 + j as f64;
        crit.at_most(
            "Dirac order",
            &subject,
            (slope - expected).abs(),
            cfg.slope_slack * ctx.scale,
        );
        for (s, v) in cfg.sweep.iter().zip(&norms) {
            table.push(vec![
                a.name.clone(),
                case.phase.chart_label(),
                j.to_string(),
                num(*s),
                num(*v),
            ]);
        }
        orders.push(
            json!({ "subject": subject, "slope": slope, "expected": expected, "norms": norms }),
        );
    }

    // ξ-multiplication induction identity
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut fixtures = vec![ExpPoly {
        a: 1.0,
        c: vec![1.0],
    }];
    for _ in 0..cfg.induction_random {
        let a = rng.gen_range(0.8..2.5);
        let len = rng.gen_range(1..4);
        fixtures.push(ExpPoly {
            a,
            c: (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        });
    }
    let basis = HalfLineBasis::new(o.modes, 2.0);
    let grid = FrequencyGrid::new(2 * o.modes, basis.beta());
    let mut induction = vec![];
    for f in &fixtures {
        let u = LineVector::plus_from_fn(&basis, |x| C64::new(f.eval(x), 0.0));
        let mut worst: f64 = 0.0;
        for j in 0..=cfg.induction_max_j {
            let r = derivative_induction_residual(&u, |x| f.hat(x), j, &grid, 8.0);
            match fail_on(&mut crit, "derivative induction", &f.label(), r) {
                Some(v) => worst = worst.max(v),
                None => worst = f64::INFINITY,
            }
        }
        crit.at_most(
            "derivative induction",
            &f.label(),
            worst,
            cfg.induction_tolerance * ctx.scale,
        );
        induction.push(json!({ "fixture": f.label(), "max_residual": worst }));
    }
    outcome(
        crit,
        json!({ "closed_form": closed, "orders": orders, "induction": induction }),
        Some(table),
    )
}

fn bilinear(a: &nalgebra::DVector<C64>, b: &nalgebra::DVector<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn truncate_cmd(cfg: &TruncateConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let o = &ctx.opts;
    let tc = &cfg.transpose;
    let tol = tc.tolerance * ctx.scale;
    let mut transpose = json!({});
    let id = phases::identity(2);
    let tr = tc
        .point
        .build()
        .and_then(|p| normal_ops::transpose_truncated(&families::i_xin(), &id, &p, o));
    if let Some(tr) = fail_on(&mut crit, "transpose anomaly", "d/dx", tr) {
        let u = LineVector::plus_from_fn(&tr.weak.basis(), |x| C64::new((-x).exp(), 0.0));
        let weak = tr.pair_weak(&u, &u).re;
        let regular = bilinear(&(&tr.regular.matrix * &u.plus), &u.plus).re;
        let atoms = tr.pair_split(&u, &u).re - regular;
        crit.at_most(
            "transpose weak pairing",
            "d/dx on e^-x",
            (weak + 0.5).abs(),
            tol,
        );
        crit.at_most(
            "transpose regular part",
            "d/dx on e^-x",
            (regular - 0.5).abs(),
            tol,
        );
        crit.at_most(
            "transpose boundary atom",
            "d/dx on e^-x",
            (atoms + 1.0).abs(),
            tol,
        );
        transpose = json!({ "weak": weak, "regular": regular, "atoms": atoms, "atom_count": tr.atoms.len() });
    }
    let a0 = tc.regular_symbol.build();
    let t0 = tc
        .point
        .build()
        .and_then(|p| normal_ops::transpose_truncated(&a0, &id, &p, o));
    if let Some(t0) = fail_on(&mut crit, "transpose equality", &a0.name, t0) {
        let d = sup((&t0.weak.matrix - &t0.regular.matrix)
            .iter()
            .map(|c| c.norm()));
        crit.at_most("transpose equality", &a0.name, d, tol);
        transpose["regular_symbol_difference"] = json!(d);
    }

    let dl = &cfg.derivative_loss;
    let mut loss = Value::Null;
    let r = (|| -> Result<Value> {
        let pt = dl.point.build()?;
        let psi = phases::simple(dl.profile.clone());
        let one = families::one();
        let fam = |n: usize| {
            normal_ops::tangential_derivative(&one, &psi, &pt, dl.step, &o.with_modes(n))
        };
        let (f, fp) = (
            dl.profile.value(&pt.x_prime),
            dl.profile.derivative(&pt.x_prime),
        );
        let t = fam(o.modes)?;
        let u = LineVector::plus_from_fn(&t.basis(), |x| C64::new(x * x * (-x).exp(), 0.0));
        let tu = t.apply(&u)?;
        let pointwise = sup((0..40).map(|i| {
            let x = 0.1 + 0.2 * i as f64;
            let y = f * x;
            (tu.eval(x) - C64::new(fp * x * (2.0 * y - y * y) * (-y).exp(), 0.0)).norm()
        }));
        let (tc, tf) = (fam(dl.coarse_modes)?, fam(dl.fine_modes)?);
        let growth = tf.sobolev_norm((1, 1.0), (1, 0.0)) / tc.sobolev_norm((1, 1.0), (1, 0.0));
        let (b0, b1) = (
            tc.sobolev_norm((1, 1.0), (0, 0.0)),
            tf.sobolev_norm((1, 1.0), (0, 0.0)),
        );
        Ok(
            json!({ "pointwise_error": pointwise, "h1_growth": growth, "h1_to_h0_coarse": b0,
                   "h1_to_h0_fine": b1, "h1_to_h0_change": (b1 - b0).abs() / b0 }),
        )
    })();
    let subject = format!("{:?}", dl.profile);
    if let Some(v) = fail_on(&mut crit, "derivative loss", &subject, r) {
        let get = |k: &str| v[k].as_f64().unwrap_or(f64::NAN);
        crit.at_most(
            "conjugated derivative pointwise",
            &subject,
            get("pointwise_error"),
            dl.pointwise_tolerance * ctx.scale,
        );
        crit.at_least(
            "derivative loss growth",
            &subject,
            get("h1_growth"),
            dl.min_growth,
        );
        crit.at_most(
            "H1 to H0 stability",
            &subject,
            get("h1_to_h0_change"),
            dl.max_change,
        );
        loss = v;
    }
    outcome(
        crit,
        json!({ "transpose": transpose, "derivative_loss": loss }),
        None,
    )
}

fn defect_cmd(cfg: &DefectConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let reports: Vec<Result<normal_ops::DefectReport>> = cfg
        .cases
        .par_iter()
        .map(|c| {
            normal_ops::symbol_defect(
                &c.symbol.build(),
                &c.phase.build()?,
                &cfg.x_prime,
                &cfg.direction,
                &cfg.sweep,
                &ctx.opts,
            )
        })
        .collect();
    let mut table = Table::new(&["symbol", "phase", "xi_prime", "defect"]);
    let mut results = vec![];
    for (case, r) in cfg.cases.iter().zip(reports) {
        let subject = format!(
            "{} over {}",
            case.symbol.build().name,
            case.phase.chart_label()
        );
        let Some(rep) = fail_on(&mut crit, "symbol-defect", &subject, r) else {
            continue;
        };
        match case.expect {
            DefectExpect::Decay => {
                let bound = rep.order - 1.0 + cfg.slope_slack * ctx.scale;
                match rep.slope {
                    Some(s) => crit.at_most("symbol-defect slope", &subject, s, bound),
                    None => crit.check(
                        "symbol-defect slope",
                        &subject,
                        true,
                        "defect at the quadrature floor",
                    ),
                }
            }
            DefectExpect::Exact => {
                let worst = sup(rep.defects.iter().copied());
                crit.at_most(
                    "symbol-defect exact",
                    &subject,
                    worst,
                    cfg.exact_tolerance * ctx.scale,
                );
            }
        }
        for (x, d) in rep.xi_norms.iter().zip(&rep.defects) {
            table.push(vec![
                rep.symbol.clone(),
                case.phase.chart_label(),
                num(*x),
                num(*d),
            ]);
        }
        results.push(json!({ "subject": subject, "report": rep }));
    }
    outcome(crit, json!({ "cases": results }), Some(table))
}

fn compose_cmd(cfg: &ComposeConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let o = &ctx.opts;
    let Some(pts) = fail_on(
        &mut crit,
        "composition",
        "sweep",
        bdm::sweep_points(&cfg.x_prime, &cfg.direction, &cfg.sweep),
    ) else {
        return outcome(crit, Value::Null, None);
    };
    let verdicts: Vec<Result<bdm::CaseVerdict>> = cfg
        .cases
        .par_iter()
        .map(|&k| {
            let (b, a) = bdm_fixtures::comp_case_blocks(k, &pts[0], o)?;
            bdm::verify_case(k, &b, &a, &pts, o)
        })
        .collect();
    let mut cases = vec![];
    for (k, v) in cfg.cases.iter().zip(verdicts) {
        let subject = format!("case {k}");
        if let Some(v) = fail_on(&mut crit, "composition order and type", &subject, v) {
            crit.check(
                "composition order and type",
                &subject,
                v.passed,
                format!(
                    "order {} (declared {}), type {:?} (declared {:?})",
                    num(v.measured_order),
                    num(v.declared_order),
                    v.measured_type,
                    v.declared_type
                ),
            );
            cases.push(v);
        }
    }
    let fits: Vec<Result<(String, f64, bdm::SweepFit)>> = cfg
        .multiplicativity
        .par_iter()
        .map(|p| {
            let (b, a) = (p.left.build(&pts[0], o)?, p.right.build(&pts[0], o)?);
            let fit = bdm::multiplicativity_defect(&b, &a, &pts, o)?;
            Ok((format!("{} o {}", b.name, a.name), b.order + a.order, fit))
        })
        .collect();
    let mut mult = vec![];
    for (i, r) in fits.into_iter().enumerate() {
        let Some((subject, m, fit)) =
            fail_on(&mut crit, "multiplicativity slope", &format!("pair {i}"), r)
        else {
            continue;
        };
        match fit.slope {
            Some(s) => crit.at_most(
                "multiplicativity slope",
                &subject,
                s,
                m - 1.0 + cfg.slope_slack * ctx.scale,
            ),
            None => crit.check(
                "multiplicativity slope",
                &subject,
                true,
                "defect below the floor",
            ),
        }
        mult.push(json!({ "subject": subject, "fit": fit }));
    }
    let ac = &cfg.associativity;
    let jobs: Vec<(usize, usize)> = (0..ac.points.len())
        .flat_map(|p| (0..ac.triples.len()).map(move |t| (p, t)))
        .collect();
    let res: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let pt = ac.points[p].build()?;
            let [c, b, a] = &ac.triples[t];
            bdm::associativity_residual(&c.build(&pt, o)?, &b.build(&pt, o)?, &a.build(&pt, o)?)
        })
        .collect();
    let mut assoc = vec![];
    for (&(p, t), r) in jobs.iter().zip(res) {
        let subject = format!("triple {t} at point {p}");
        if let Some(v) = fail_on(&mut crit, "associativity", &subject, r) {
            crit.at_most("associativity", &subject, v, ac.tolerance * ctx.scale);
            assoc.push(json!({ "subject": subject, "residual": v }));
        }
    }
    outcome(
        crit,
        json!({ "cases": cases, "multiplicativity": mult, "associativity": assoc }),
        None,
    )
}

fn parametrix_cmd(cfg: &ParametrixConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let o = &ctx.opts;
    let mut results = vec![];
    for case in &cfg.cases {
        let (subject, r) = match case {
            ParametrixCase::Block { block, point } => (
                format!("{block:?}"),
                point
                    .build()
                    .and_then(|p| block.build(&p, o))
                    .and_then(|b| bdm::parametrix_symbol(&b)),
            ),
            ParametrixCase::FlatDilation { factor } => {
                let basis = HalfLineBasis::new(o.modes, 2.0);
                let psi = phases::simple(ProfileFn::Constant { value: *factor });
                let s = normal_ops::boundary_symbol_in(
                    &families::one(),
                    &psi,
                    &[0.0],
                    &[0.0],
                    &basis,
                    o,
                );
                (
                    format!("flat dilation {}", num(*factor)),
                    s.and_then(|s| bdm::parametrix_of(&s)),
                )
            }
        };
        if let Some(p) = fail_on(&mut crit, "parametrix residual", &subject, r) {
            crit.at_most(
                "parametrix residual",
                &subject,
                p.residual,
                cfg.tolerance * ctx.scale,
            );
            results.push(json!({ "subject": subject, "residual": p.residual }));
        }
    }
    outcome(crit, json!({ "cases": results }), None)
}

fn egorov_cmd(cfg: &EgorovConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let o = &ctx.opts;
    let mut results = vec![];
    for case in &cfg.cases {
        let subject = format!("{:?} on {:?}", case.fio, case.operator);
        let r = case.point.build().and_then(|p| {
            let (a, q) = (case.fio.build(&p, o)?, case.operator.build(&p, o)?);
            bdm::egorov_conjugate(&a, &q)
        });
        if let Some(e) = fail_on(&mut crit, "Egorov class", &subject, r) {
            crit.check(
                "Egorov class",
                &subject,
                e.class_ok,
                format!(
                    "chart {}, order {}, type {}",
                    e.block.chart,
                    num(e.block.order),
                    e.block.type_d
                ),
            );
            crit.at_most(
                "Egorov fiber identity",
                &subject,
                e.fiber_identity_defect,
                cfg.tolerance * ctx.scale,
            );
            results.push(json!({
                "subject": subject,
                "chart": e.block.chart,
                "order": e.block.order,
                "type": e.block.type_d,
                "fiber_identity_defect": e.fiber_identity_defect,
                "class_ok": e.class_ok,
            }));
        }
    }
    outcome(crit, json!({ "cases": results }), None)
}

fn deform_cmd(cfg: &DeformConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let f = &cfg.family;
    let subject = f.name.clone();
    let r = f.phase.build().and_then(|psi| {
        let fam = DeformationFamily::new(&f.name, psi, f.x_prime.clone(), f.eta_prime.clone())?
            .with_t_grid(f.t_grid.clone());
        index_lab::deformation_continuity(&fam, &ctx.opts)
    });
    let Some(rep) = fail_on(&mut crit, "deformation", &subject, r) else {
        return outcome(crit, Value::Null, None);
    };
    crit.at_most(
        "deformation P(0) identity",
        &subject,
        rep.p0_identity_residual,
        cfg.identity_tolerance * ctx.scale,
    );
    let norms: Vec<String> = rep.rows.iter().map(|r| num(r.norm_diff)).collect();
    crit.check(
        "deformation monotone decrease",
        &subject,
        rep.monotone,
        format!("norms {norms:?}"),
    );
    crit.at_most(
        "deformation final ratio",
        &subject,
        rep.final_ratio,
        cfg.final_ratio,
    );
    crit.at_most(
        "deformation leak ratio",
        &subject,
        rep.leak_ratio,
        cfg.leak_ratio,
    );
    crit.check(
        "Schur bound domination",
        &subject,
        rep.schur_dominates,
        "schur_bound >= norm_diff at every t",
    );
    let mut table = Table::new(&["t", "norm", "schur_bound", "sigma_min"]);
    for r in &rep.rows {
        table.push(vec![
            num(r.t),
            num(r.norm_diff),
            num(r.schur_bound),
            num(r.sigma_min),
        ]);
    }
    outcome(crit, json!({ "report": rep }), Some(table))
}

fn index_options(tau_rel: f64, ctx: &Context) -> IndexOptions {
    IndexOptions {
        tau_rel,
        normal: ctx.opts.clone(),
        ..Default::default()
    }
}

fn index_cmd(cfg: &IndexConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let io = index_options(cfg.tau_rel, ctx);
    let runs: Vec<Result<Value>> = cfg
        .cases
        .par_iter()
        .map(|c| {
            let pt = c.point.build()?;
            let u = index_lab::build_u(&c.chart.build()?, &c.section.build(), &pt, &io.normal)?;
            let ell = bdm::ellipticity_check(&u, &[pt], &io.normal)?;
            let rep = index_lab::index_estimate(&u, &io)?;
            let perturbed = c
                .rank_one
                .iter()
                .map(|&coef| Ok(json!({ "coef": coef, "index": index_lab::index_estimate(&index_lab::with_rank_one(&u, coef)?, &io)?.estimated_index })))
                .collect::<Result<Vec<_>>>()?;
            Ok(json!({ "label": c.label, "ellipticity": ell, "report": rep, "rank_one": perturbed }))
        })
        .collect();
    let mut results = vec![];
    for (c, r) in cfg.cases.iter().zip(runs) {
        let Some(v) = fail_on(&mut crit, "index", &c.label, r) else {
            continue;
        };
        let rep = &v["report"];
        let idx = rep["estimated_index"].as_i64().unwrap_or(i64::MIN);
        crit.check(
            "ellipticity",
            &c.label,
            v["ellipticity"]["elliptic"] == json!(true),
            "boundary symbol invertible",
        );
        crit.check(
            "index value",
            &c.label,
            idx == cfg.expected_index,
            format!("index {idx}, expected {}", cfg.expected_index),
        );
        crit.at_least(
            "index svd gap",
            &c.label,
            rep["svd_gap"].as_f64().unwrap_or(0.0),
            cfg.min_gap,
        );
        crit.check(
            "index stability",
            &c.label,
            rep["stable"] == json!(true),
            "stable across (N,2N) and (tau,tau/10)",
        );
        for p in v["rank_one"].as_array().into_iter().flatten() {
            let pi = p["index"].as_i64().unwrap_or(i64::MIN);
            crit.check(
                "index rank-one invariance",
                &c.label,
                pi == idx,
                format!("coef {}: index {pi}", p["coef"]),
            );
        }
        results.push(v);
    }
    outcome(crit, json!({ "cases": results }), None)
}

fn independence_cmd(cfg: &IndependenceConfig, ctx: &Context) -> Outcome {
    let mut crit = Criteria::default();
    let io = index_options(cfg.tau_rel, ctx);
    let runs: Vec<Result<index_lab::ProbeReport>> = cfg
        .cases
        .par_iter()
        .map(|c| {
            index_lab::section_independence_probe(
                &c.chart.build()?,
                &c.first.build(),
                &c.second.build(),
                &c.point.build()?,
                &io,
            )
        })
        .collect();
    let mut results = vec![];
    for (c, r) in cfg.cases.iter().zip(runs) {
        let entry = match (&c.expect, r) {
            (ProbeExpect::Zero, Ok(p)) => {
                crit.check(
                    "section independence",
                    &c.label,
                    p.difference == 0,
                    format!("difference {}", p.difference),
                );
                json!({ "label": c.label, "probe": p })
            }
            (ProbeExpect::Obstructed, Err(Error::ObstructedHomotopy(a, b))) => {
                crit.check(
                    "section homotopy obstruction",
                    &c.label,
                    true,
                    format!("windings {a} vs {b}"),
                );
                json!({ "label": c.label, "obstructed": [a, b] })
            }
            (ProbeExpect::Obstructed, Ok(p)) => {
                crit.check(
                    "section homotopy obstruction",
                    &c.label,
                    false,
                    "probe was not refused",
                );
                json!({ "label": c.label, "probe": p })
            }
            (_, Err(e)) => {
                crit.check(
                    "section independence",
                    &c.label,
                    false,
                    format!("error: {e}"),
                );
                json!({ "label": c.label, "error": e.to_string() })
            }
        };
        results.push(entry);
    }
    outcome(crit, json!({ "cases": results }), None)
}
