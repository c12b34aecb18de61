//! The acceptance criteria as runnable checks, shared by `lepage selftest`
//! and the `acceptance` test target.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::charts::{AdaptedChart, JetChart};
use crate::expr::{equal, normalize, parse, Compiled, CoordSymbol, EqualConfig, Equality, Expr, Point};
use crate::forms::{
    convert_by_expansion, forms_equal, lemma_convert, verdict, with_base_dim, Covector, DiffForm, ImmersionSpec, Mode,
};
use crate::homogeneity::{shear_invariance, zermelo_residuals};
use crate::lepage::{
    caratheodory, check_horizontal_part, check_lepage_property, euler_lagrange, fundamental, fundamental_homogeneous,
    fundamental_homogeneous_unchecked, hilbert_caratheodory, poincare_cartan, Lagrangian, Verdict,
};
use crate::minimal::{
    el_quotient, graph_el_residual, krupka_form, minimal_lagrangian, reconstruct, scherk, scherk_convergence,
    solve_minimal_surface, verify_coincidence, GridField, MetricSpec,
};
use crate::quadrature::GaussLegendre;
use crate::variation::{current_closed_along, first_variation_check, noether_current, noether_residual, VectorFieldSpec};

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: Value,
    #[serde(skip)]
    pub elapsed: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!("{} {:>2} {} ({:.2}s)", if self.passed { "PASS" } else { "FAIL" }, self.id, self.title, self.elapsed)
    }
}

pub const TITLES: [&str; 11] = [
    "Zermelo conditions",
    "Lepage equivalents",
    "Z and W coincide; W and Lambda differ",
    "W, Lambda and omega coincide",
    "Euler-Lagrange expressions",
    "Exact minimal graphs",
    "Solver convergence",
    "Conservation laws",
    "First variation formula",
    "Invariance and Noether currents",
    "Exterior algebra structure",
];

type Check = fn(&EqualConfig) -> Result<(bool, Value), String>;

const CHECKS: [Check; 11] = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11];
/// Runtime bounds in seconds, part of the pass condition where set.
const BOUNDS: [Option<f64>; 11] = [Some(5.0), Some(30.0), None, None, None, None, Some(60.0), None, None, None, None];

pub fn run_one(id: u8, cfg: &EqualConfig) -> CriterionResult {
    let i = (id - 1) as usize;
    let t = Instant::now();
    let r = CHECKS[i](cfg);
    let elapsed = t.elapsed().as_secs_f64();
    let (mut passed, mut detail) = match r {
        Ok(v) => v,
        Err(e) => (false, json!({ "error": e })),
    };
    if let Some(b) = BOUNDS[i] {
        if elapsed >= b {
            passed = false;
            detail = json!({ "runtime_exceeded": b, "result": detail });
        }
    }
    CriterionResult { id, title: TITLES[i], passed, detail, elapsed }
}

pub fn run_all(cfg: &EqualConfig) -> Vec<CriterionResult> {
    (1..=11).map(|id| run_one(id, cfg)).collect()
}

fn chart(n: u16, m: u16) -> JetChart {
    JetChart::new(n, m, 1).expect("valid dims")
}

fn p(s: &str, c: &JetChart) -> Result<Expr, String> {
    parse(s, c).map_err(|e| e.to_string())
}

fn verdict_json(v: &Verdict) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn eq_json(e: &Equality) -> Value {
    match e {
        Equality::Equal => json!("equal"),
        Equality::Unequal(w) => json!({ "unequal": w }),
        Equality::Unknown => json!("unknown"),
    }
}

fn euclid_lagrangian(n: u16, m: u16) -> Result<Lagrangian, String> {
    minimal_lagrangian(&MetricSpec::euclidean(n + m), &chart(n, m)).map_err(|e| e.to_string())
}

fn trivial_lagrangian() -> Result<Lagrangian, String> {
    let c = chart(2, 1);
    Lagrangian::new(c.clone(), p("y1_1*y2_2 - y1_2*y2_1", &c)?).map_err(|e| e.to_string())
}

fn c1(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let lam = euclid_lagrangian(2, 1)?;
    let rep = zermelo_residuals(&lam.l, &lam.chart, cfg);
    let mut ok = rep.all_symbolic();
    let mut controls = Vec::new();
    let c = chart(2, 1);
    for s in ["y1_1 + 1", "y1_1^2"] {
        let r = zermelo_residuals(&p(s, &c)?, &c, cfg);
        let w = r.failure().map(|(j, l, w)| json!({ "j": j, "l": l, "witness": w }));
        ok &= w.is_some();
        controls.push(json!({ "lagrangian": s, "failure": w }));
    }
    Ok((ok, json!({ "minimal": rep.to_json(), "controls": controls })))
}

fn c2(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let lams = [
        ("minimal(1,1)", euclid_lagrangian(1, 1)?),
        ("minimal(2,1)", euclid_lagrangian(2, 1)?),
        ("h(dy1^dy2)", trivial_lagrangian()?),
    ];
    let mut ok = true;
    let mut rows = Vec::new();
    for (name, lam) in &lams {
        let forms: Vec<(&str, Result<DiffForm, String>)> = vec![
            ("pc", poincare_cartan(lam).map_err(|e| e.to_string())),
            ("fundamental", fundamental(lam).map_err(|e| e.to_string())),
            ("caratheodory", caratheodory(lam).map_err(|e| e.to_string())),
            ("hc", hilbert_caratheodory(lam, cfg).map_err(|e| e.to_string())),
            ("w", fundamental_homogeneous(lam, cfg).map_err(|e| e.to_string())),
        ];
        for (kind, f) in forms {
            let rho = f?;
            let h = check_horizontal_part(&rho, lam, cfg).map_err(|e| e.to_string())?;
            let lp = check_lepage_property(&rho, &lam.chart, 20, cfg).map_err(|e| e.to_string())?;
            ok &= h.passed() && lp.passed();
            rows.push(json!({ "lagrangian": name, "kind": kind, "horizontal": verdict_json(&h), "lepage": verdict_json(&lp) }));
        }
    }
    Ok((ok, json!(rows)))
}

/// 𝓛 = A_PQ y^P_1 y^Q_2 with A_12 = −A_21 = A_34 = −A_43 = 1.
pub fn skew_lagrangian() -> Result<Lagrangian, String> {
    let c = chart(2, 2);
    Lagrangian::new(c.clone(), p("y1_1*y2_2 - y2_1*y1_2 + y3_1*y4_2 - y4_1*y3_2", &c)?).map_err(|e| e.to_string())
}

fn c3(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let mut ok = true;
    let mut rows = Vec::new();
    for m in [1u16, 2] {
        let lam = euclid_lagrangian(2, m)?;
        let r = fundamental_homogeneous(&lam, cfg);
        ok &= r.is_ok();
        rows.push(json!({ "m": m, "z_equals_w": r.as_ref().map(|_| "equal".to_string()).unwrap_or_else(|e| e.to_string()) }));
    }
    let lam = skew_lagrangian()?;
    let w = fundamental_homogeneous_unchecked(&lam);
    let hc = hilbert_caratheodory(&lam, cfg).map_err(|e| e.to_string())?;
    let res = with_base_dim(2, || forms_equal(&w, &hc, cfg)).map_err(|e| e.to_string())?;
    let v = verdict(&res);
    ok &= v.is_unequal();
    let word = res.iter().find(|(_, e)| e.is_unequal()).map(|(w, _)| w.iter().map(Covector::id).collect::<Vec<_>>().join("^"));
    Ok((ok, json!({ "minimal": rows, "skew": { "lagrangian": lam.l.to_string(), "w_vs_lambda": eq_json(&v), "word": word } })))
}

fn c4(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let cfg = EqualConfig { trials: 50, ..cfg.clone() };
    let c = chart(2, 1);
    let metrics = [
        ("euclidean", MetricSpec::euclidean(3)),
        ("diag(exp(y1),1,1)", MetricSpec::diagonal(vec![p("exp(y1)", &c)?, Expr::one(), Expr::one()]).map_err(|e| e.to_string())?),
    ];
    let mut ok = true;
    let mut rows = Vec::new();
    for (name, g) in &metrics {
        let r = verify_coincidence(g, &c, &cfg).map_err(|e| e.to_string())?;
        ok &= r.passed;
        rows.push(json!({ "metric": name, "report": r }));
    }
    Ok((ok, json!(rows)))
}

fn c5(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let q = el_quotient(cfg).map_err(|e| e.to_string())?;
    let lam = trivial_lagrangian()?;
    let el = euler_lagrange(&lam).map_err(|e| e.to_string())?;
    let el_zero = el.iter().all(|e| normalize(e).map(|v| v.is_zero()).unwrap_or(false));
    let z = fundamental(&lam).map_err(|e| e.to_string())?;
    let dz = with_base_dim(2, || z.ext_d()).map_err(|e| e.to_string())?;
    let ok = q.passed() && el_zero && dz.is_zero();
    Ok((ok, json!({ "graph_quotient": q, "trivial_el_zero": el_zero, "trivial_dz_zero": dz.is_zero() })))
}

fn c6(_cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let c = chart(2, 1).with_param("a").with_param("b").with_param("c");
    let plane = graph_el_residual(&p("a*x1 + b*x2 + c", &c)?).map_err(|e| e.to_string())?;
    let sch = graph_el_residual(&p("ln(cos(x1)/cos(x2))", &c)?).map_err(|e| e.to_string())?;
    let at = graph_el_residual(&p("atan(x2/x1)", &c)?).map_err(|e| e.to_string())?;
    let ac = Compiled::new(&at);
    let mut max = 0.0f64;
    for i in 0..100 {
        for j in 0..100 {
            let pt = Point::new()
                .with(CoordSymbol::X(1), 1.0 + i as f64 / 99.0)
                .with(CoordSymbol::X(2), 1.0 + j as f64 / 99.0);
            max = max.max(ac.eval(&pt).map_err(|e| e.to_string())?.abs());
        }
    }
    let ok = plane.is_zero() && sch.is_zero() && max <= 1e-8;
    Ok((ok, json!({ "plane": plane.to_string(), "scherk": sch.to_string(), "arctan_max": max, "arctan_points": 10000 })))
}

fn c7(_cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let (rows, orders) = scherk_convergence(&[17, 33, 65], 1e-10, 12).map_err(|e| e.to_string())?;
    let ok = orders.iter().all(|o| *o >= 1.9) && rows.iter().all(|r| r.iterations <= 12 && r.residual < 1e-10);
    Ok((ok, json!({ "rows": rows, "orders": orders })))
}

fn c8(_cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let rect = [-1.0, 1.0, -1.0, 1.0];
    let data = GridField::from_fn(65, 65, rect, scherk::<f64>).map_err(|e| e.to_string())?;
    let sol = solve_minimal_surface(&data, 1e-10, 12).map_err(|e| e.to_string())?;
    let good = reconstruct(&sol.field);
    let bowl = reconstruct(&GridField::from_fn(65, 65, rect, |x: f64, y: f64| x * x + y * y).map_err(|e| e.to_string())?);
    let ok = good.closed && good.ufg_pass && !bowl.closed && !bowl.ufg_pass;
    Ok((ok, json!({ "solution": good, "paraboloid": bowl })))
}

fn c9(_cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let c = chart(2, 1);
    let rho = krupka_form(&MetricSpec::euclidean(3), &c).map_err(|e| e.to_string())?;
    let xi = VectorFieldSpec::new(vec![Expr::rational(3, 10), Expr::rational(-1, 5), Expr::one()]).map_err(|e| e.to_string())?;
    let zeta = ImmersionSpec::graph(2, vec![p("1/10*x1*x2", &c)?]);
    let bent = VectorFieldSpec::new(vec![p("y3", &c)?, p("y1*y3/2", &c)?, p("y1^2 - y2", &c)?]).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut rows = Vec::new();
    for (name, f) in [("translation", &xi), ("nonlinear", &bent)] {
        let r = first_variation_check(&rho, f, &zeta, [0.0, 1.0, 0.0, 1.0], 64, &GaussLegendre::new(3))
            .map_err(|e| e.to_string())?;
        ok &= r.within(1e-6);
        rows.push(json!({ "field": name, "report": r }));
    }
    Ok((ok, json!(rows)))
}

fn c10(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let mut ok = true;
    let mut gens = Vec::new();
    let mut closed = Vec::new();
    for m in [1u16, 2] {
        let c = chart(2, m);
        let ac = AdaptedChart::new(c.clone(), vec![1, 2]).map_err(|e| e.to_string())?;
        let w = krupka_form(&MetricSpec::euclidean(m + 2), &c).map_err(|e| e.to_string())?.to_form();
        let mut us = vec![p("2*x1 - x2 + 1/2", &c)?];
        if m == 2 {
            us.push(p("x1/3 + 3*x2", &c)?);
        }
        let plane = ImmersionSpec::graph(2, us);
        for k in 1..=m + 2 {
            let xi = VectorFieldSpec::coordinate(m + 2, k);
            let (_, v) = noether_residual(&xi, &w, &ac, cfg).map_err(|e| e.to_string())?;
            ok &= v.passed();
            gens.push(json!({ "m": m, "field": k, "residual": verdict_json(&v) }));
            let cur = noether_current(&xi, &w, &ac).map_err(|e| e.to_string())?;
            let pulled = crate::forms::pullback_grassmann(&cur, &plane, &ac).map_err(|e| e.to_string())?;
            let d = pulled.ext_d().map_err(|e| e.to_string())?;
            let symbolic = d.terms.values().all(|e| normalize(e).map(|v| v.is_zero()).unwrap_or(false));
            let along = current_closed_along(&cur, &plane, &ac, cfg).map_err(|e| e.to_string())?;
            ok &= symbolic && along.passed();
            closed.push(json!({ "m": m, "field": k, "d_symbolic_zero": symbolic }));
        }
    }
    let c = chart(2, 1);
    let lam = euclid_lagrangian(2, 1)?;
    let zeta = ImmersionSpec::graph(2, vec![p("x1^2/2 + sin(x2)", &c)?]);
    let phi = p("3/10*sin(x2)", &c)?;
    let (i1, i2) = shear_invariance(&lam.l, &zeta, &phi, [0.0, 1.0, 0.0, 1.0], 32, &GaussLegendre::new(5))
        .map_err(|e| e.to_string())?;
    let rel = (i1 - i2).abs() / i1.abs().max(1e-300);
    ok &= rel <= 1e-9;
    Ok((ok, json!({ "generators": gens, "currents": closed, "reparametrization": { "image": i1, "pulled_back": i2, "rel_diff": rel } })))
}

/// Random coordinate-mode form on n = 2, m = 1 without jet covectors.
pub fn random_form(rng: &mut ChaCha8Rng, degree: usize) -> DiffForm {
    let basis = [Covector::dx(1), Covector::dx(2), Covector::dy(1), Covector::dy(2), Covector::dy(3)];
    let syms = [Expr::x(1), Expr::x(2), Expr::y(1), Expr::y(2), Expr::y(3), Expr::y1(1, 1), Expr::y1(3, 2), Expr::y1(2, 1)];
    let mut f = DiffForm::zero(degree, Mode::Coordinate);
    let terms = rng.gen_range(1..=3);
    for _ in 0..terms {
        let mut idx: Vec<usize> = (0..basis.len()).collect();
        for k in 0..degree {
            let j = rng.gen_range(k..idx.len());
            idx.swap(k, j);
        }
        let word: Vec<Covector> = idx[..degree].iter().map(|&i| basis[i].clone()).collect();
        let mut coeff = Expr::int(rng.gen_range(-3..=3));
        for _ in 0..rng.gen_range(1..=2) {
            let mono = Expr::product((0..rng.gen_range(1..=2)).map(|_| syms[rng.gen_range(0..syms.len())].clone()));
            coeff = coeff + mono.scale(&crate::expr::rational(rng.gen_range(-4..=4), rng.gen_range(1..=3)));
        }
        f.add_word(word, coeff);
    }
    f
}

fn c11(cfg: &EqualConfig) -> Result<(bool, Value), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x11);
    let forms: Vec<DiffForm> = (0..50).map(|i| random_form(&mut rng, 1 + i % 2)).collect();
    let mut roundtrip = 0;
    let mut dual = 0;
    let mut dd = 0;
    let mut leibniz = 0;
    with_base_dim(2, || -> Result<(), String> {
        for f in &forms {
            let e = |e: crate::forms::FormError| e.to_string();
            let ct = lemma_convert(f, Mode::Contact).map_err(e)?;
            let back = lemma_convert(&ct, Mode::Coordinate).map_err(e)?;
            roundtrip += (back == *f) as usize;
            let ex = convert_by_expansion(f, Mode::Contact).map_err(e)?;
            dual += verdict(&forms_equal(&ct, &ex, cfg).map_err(e)?).is_equal() as usize;
            dd += f.ext_d().and_then(|d| d.ext_d()).map_err(e)?.is_zero() as usize;
        }
        for pair in forms.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let e = |e: crate::forms::FormError| e.to_string();
            let lhs = a.wedge(b).and_then(|w| w.ext_d()).map_err(e)?;
            let sign = if a.degree % 2 == 0 { Expr::one() } else { -Expr::one() };
            let rhs = a.ext_d().and_then(|da| da.wedge(b)).and_then(|t| Ok(t.add(&a.wedge(&b.ext_d()?)?.scale(&sign))?)).map_err(e)?;
            leibniz += (lhs.sub(&rhs).map_err(e)?.is_zero()) as usize;
        }
        Ok(())
    })?;
    let ok = roundtrip == 50 && dual == 50 && dd == 50 && leibniz == 25;
    Ok((ok, json!({ "forms": 50, "roundtrip": roundtrip, "lemma_vs_expansion": dual, "dd_zero": dd, "leibniz_pairs": leibniz })))
}

pub fn equal_is_reflexive(e: &Expr, cfg: &EqualConfig) -> bool {
    equal(e, e, cfg).is_equal()
}
