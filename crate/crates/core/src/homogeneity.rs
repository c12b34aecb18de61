//! Zermelo conditions, GL⁺ equivariance and the Grassmann projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::charts::{gl_act, AdaptedChart, ChartError, GroupElement, JetChart};
use crate::expr::{det, equal, equal_guarded, normalize, Compiled, CoordSymbol, EqualConfig, Equality, Expr, Point, Witness};
use crate::forms::ImmersionSpec;
use crate::quadrature::{integrate_1d, GaussLegendre};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomogeneityError {
    #[error("function is not positive homogeneous: {0:?}")]
    NotHomogeneous(Option<Witness>),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Residuals R^j_l = (∂F/∂y^K_j) y^K_l − δ^j_l F with a verdict per entry.
#[derive(Clone, Debug)]
pub struct ZermeloReport {
    pub n: u16,
    pub residuals: Vec<Vec<Expr>>,
    pub verdicts: Vec<Vec<Equality>>,
    /// entry normalizes to 0 without sampling
    pub symbolic: Vec<Vec<bool>>,
}

impl ZermeloReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().flatten().all(|v| v.is_equal())
    }

    pub fn all_symbolic(&self) -> bool {
        self.symbolic.iter().flatten().all(|&s| s)
    }

    pub fn failure(&self) -> Option<(u16, u16, &Witness)> {
        for (j, row) in self.verdicts.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                if let Equality::Unequal(w) = v {
                    return Some((j as u16 + 1, l as u16 + 1, w));
                }
            }
        }
        None
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut entries = Vec::new();
        for j in 0..self.n as usize {
            for l in 0..self.n as usize {
                let (verdict, witness) = match &self.verdicts[j][l] {
                    Equality::Equal => ("pass", None),
                    Equality::Unequal(w) => ("fail", Some(w)),
                    Equality::Unknown => ("unknown", None),
                };
                entries.push(json!({
                    "j": j + 1,
                    "l": l + 1,
                    "residual": if self.symbolic[j][l] { "0".to_string() } else { self.residuals[j][l].to_string() },
                    "verdict": verdict,
                    "witness": witness,
                }));
            }
        }
        json!({ "passed": self.passed(), "residuals": entries })
    }
}

pub fn zermelo_residuals(f: &Expr, chart: &JetChart, cfg: &EqualConfig) -> ZermeloReport {
    let n = chart.n;
    let big_m = chart.big_m();
    let derivs: Vec<Vec<Expr>> =
        (1..=n).map(|j| (1..=big_m).map(|k| f.diff(&CoordSymbol::Y1(k, j))).collect()).collect();
    let mut residuals = Vec::new();
    let mut verdicts = Vec::new();
    let mut symbolic = Vec::new();
    for j in 1..=n {
        let (mut rr, mut vv, mut ss) = (Vec::new(), Vec::new(), Vec::new());
        for l in 1..=n {
            let mut r = Expr::sum((1..=big_m).map(|k| &derivs[(j - 1) as usize][(k - 1) as usize] * &Expr::y1(k, l)));
            if j == l {
                r = r - f;
            }
            let norm = normalize(&r).unwrap_or_else(|_| r.clone());
            let sym = norm.is_zero();
            let v = if sym { Equality::Equal } else { equal(&r, &Expr::zero(), cfg) };
            rr.push(if sym { Expr::zero() } else { norm });
            vv.push(v);
            ss.push(sym);
        }
        residuals.push(rr);
        verdicts.push(vv);
        symbolic.push(ss);
    }
    ZermeloReport { n, residuals, verdicts, symbolic }
}

fn random_point(chart: &JetChart, extra: &Expr, rng: &mut ChaCha8Rng) -> Point {
    let mut p = Point::new();
    for s in chart.ys().into_iter().chain(chart.xs()).chain(chart.jets1()).chain(extra.free_symbols()) {
        if !p.coords.contains_key(&s) {
            let v: f64 = rng.gen_range(0.1..2.0);
            p.set(s, if rng.gen_bool(0.5) { v } else { -v });
        }
    }
    for k in extra.opaque_keys() {
        let v: f64 = rng.gen_range(0.1..2.0);
        p.opaque.insert(k, v);
    }
    p
}

/// Random element I + 0.3·R of GL⁺_n, resampled until det > 0.1.
pub fn random_gl_plus(n: usize, rng: &mut ChaCha8Rng) -> GroupElement {
    loop {
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } + 0.3 * rng.gen_range(-1.0..1.0)).collect())
            .collect();
        if let Ok(g) = GroupElement::new(a) {
            if g.det() > 0.1 {
                return g;
            }
        }
    }
}

/// Samples F(p·a) = det(a)·F(p) at random points and random a ∈ GL⁺_n.
pub fn check_equivariance(f: &Expr, chart: &JetChart, trials: usize, cfg: &EqualConfig) -> Equality {
    let c = Compiled::new(f);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = 0;
    for _ in 0..trials.max(1) * 10 {
        if used >= trials.max(1) {
            break;
        }
        let p = random_point(chart, f, &mut rng);
        let a = random_gl_plus(chart.n as usize, &mut rng);
        let q = match gl_act(&p, &a, chart) {
            Ok(q) => q,
            Err(_) => continue,
        };
        let (fp, fq) = match (c.eval_with(&p, 1e-10), c.eval_with(&q, 1e-10)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => continue,
        };
        used += 1;
        let lhs = fq;
        let rhs = a.det() * fp;
        if (lhs - rhs).abs() > cfg.tol * 1f64.max(lhs.abs()).max(rhs.abs()) {
            let point = q.coords.iter().map(|(k, v)| (k.to_string(), *v)).collect();
            return Equality::Unequal(Witness { point, lhs, rhs });
        }
    }
    if used == 0 {
        Equality::Unknown
    } else {
        Equality::Equal
    }
}

/// det(w^i_j) over the adapted subsequence.
pub fn adapted_minor_det(ac: &AdaptedChart) -> Expr {
    let m: Vec<Vec<Expr>> =
        ac.sub.iter().map(|&i| (1..=ac.n()).map(|j| Expr::w1(i, j)).collect()).collect();
    det(&m).expect("n <= 4 guarded by AdaptedChart")
}

/// F_G with F∘(chart maps) = det(w^i_j)·F_G, checked by `equal` on det > 0.
pub fn grassmann_projection(f: &Expr, ac: &AdaptedChart, cfg: &EqualConfig) -> Result<Expr, HomogeneityError> {
    let fg = f.subs(&ac.grassmann_section());
    let tilde = f.subs(&ac.inverse_map());
    let d = adapted_minor_det(ac);
    let dc = Compiled::new(&d);
    let guard = |p: &Point| dc.eval(p).map(|v| v > 1e-3).unwrap_or(false);
    match equal_guarded(&tilde, &(&d * &fg), cfg, &guard) {
        Equality::Equal => Ok(fg),
        Equality::Unequal(w) => Err(HomogeneityError::NotHomogeneous(Some(w))),
        Equality::Unknown => Err(HomogeneityError::NotHomogeneous(None)),
    }
}

/// Integrals of F∘T¹ζ over μ(Ω) and of F∘T¹(ζ∘μ) over Ω = [a,b]×[c,d],
/// for the shear μ(x) = (x¹ + φ(x²), x²) with ∂φ bounded so μ preserves
/// orientation. The first integral runs over the curved image by Fubini.
pub fn shear_invariance(
    f: &Expr,
    zeta: &ImmersionSpec,
    phi: &Expr,
    rect: [f64; 4],
    cells: usize,
    rule: &GaussLegendre,
) -> Result<(f64, f64), HomogeneityError> {
    if zeta.n != 2 {
        return Err(HomogeneityError::Chart(ChartError::InvalidDims { n: zeta.n, m: 0, order: 1 }));
    }
    let jets = zeta.jet_substitution();
    let direct = Compiled::new(&f.subs(&jets));
    let mu = [Expr::x(1) + phi, Expr::x(2)];
    let composed = ImmersionSpec::new(
        2,
        zeta.comps
            .iter()
            .map(|c| c.subs_fn(&|s| match s {
                CoordSymbol::X(i) => Some(mu[(*i - 1) as usize].clone()),
                _ => None,
            }))
            .collect(),
    );
    let pulled = Compiled::new(&f.subs(&composed.jet_substitution()));
    let phic = Compiled::new(phi);
    let at = |c: &Compiled, x1: f64, x2: f64| -> f64 {
        let p = Point::new().with(CoordSymbol::X(1), x1).with(CoordSymbol::X(2), x2);
        c.eval(&p).unwrap_or(f64::NAN)
    };
    let [a, b, c, d] = rect;
    let i2 = integrate_1d(|x2| integrate_1d(|x1| at(&pulled, x1, x2), a, b, cells, rule), c, d, cells, rule);
    let i1 = integrate_1d(
        |x2| {
            let s = at(&phic, 0.0, x2);
            integrate_1d(|x1| at(&direct, x1, x2), a + s, b + s, cells, rule)
        },
        c,
        d,
        cells,
        rule,
    );
    Ok((i1, i2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn cfg() -> EqualConfig {
        EqualConfig::default()
    }

    fn minimal_r3() -> Expr {
        // Gram determinant of the Euclidean metric, n = 2, M = 3
        let g = |j: u16, k: u16| Expr::sum((1..=3).map(|s| Expr::y1(s, j) * Expr::y1(s, k)));
        (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)).sqrt()
    }

    #[test]
    fn arclength_is_homogeneous() {
        let c = JetChart::new(1, 1, 1).unwrap();
        let f = parse("sqrt(y1_1^2 + y2_1^2)", &c).unwrap();
        let r = zermelo_residuals(&f, &c, &cfg());
        assert!(r.passed() && r.all_symbolic());
        let g = parse("y1_1 + 1", &c).unwrap();
        let r = zermelo_residuals(&g, &c, &cfg());
        assert_eq!(r.residuals[0][0], Expr::int(-1));
        assert!(r.failure().is_some());
    }

    #[test]
    fn minimal_lagrangian_residuals_vanish() {
        let c = JetChart::new(2, 1, 1).unwrap();
        let r = zermelo_residuals(&minimal_r3(), &c, &cfg());
        assert!(r.passed());
        assert!(r.all_symbolic(), "{:?}", r.residuals);
    }

    #[test]
    fn equivariance_examples() {
        let c = JetChart::new(2, 1, 1).unwrap();
        assert!(check_equivariance(&minimal_r3(), &c, 20, &cfg()).is_equal());
        assert!(check_equivariance(&Expr::zero(), &c, 5, &cfg()).is_equal());
        let c1 = JetChart::new(1, 1, 1).unwrap();
        let sq = Expr::y1(1, 1) * Expr::y1(1, 1);
        assert!(check_equivariance(&sq, &c1, 20, &cfg()).is_unequal());
    }

    #[test]
    fn zermelo_matches_equivariance_on_corpus() {
        let c = JetChart::new(2, 1, 1).unwrap();
        let corpus = [
            "sqrt((y1_1*y2_2 - y1_2*y2_1)^2 + (y1_1*y3_2 - y1_2*y3_1)^2 + (y2_1*y3_2 - y2_2*y3_1)^2)",
            "y1_1*y2_2 - y1_2*y2_1",
            "y3*(y1_1*y3_2 - y1_2*y3_1)",
            "exp(y1)*(y2_1*y3_2 - y2_2*y3_1)",
            "(y1_1*y2_2 - y1_2*y2_1)^3*(y1_1*y3_2 - y1_2*y3_1)^-2",
            "y1_1*y2_2",
            "y1_1 + y2_2",
            "(y1_1*y2_2 - y1_2*y2_1)^2",
            "y1_1^2 + y2_2^2",
            "sqrt(y1_1^2 + y2_2^2)",
        ];
        for s in corpus {
            let f = parse(s, &c).unwrap();
            let z = zermelo_residuals(&f, &c, &cfg()).passed();
            let e = check_equivariance(&f, &c, 20, &cfg()).is_equal();
            assert_eq!(z, e, "{s}");
        }
    }

    #[test]
    fn differentiated_zermelo_identity() {
        // ∂²F/∂y^{K1}_{j1}∂y^{K2}_{j2} y^{K1}_{i1} = ∂F/∂y^{K2}_{j2} δ^{j1}_{i1} − ∂F/∂y^{K2}_{j1} δ^{j2}_{i1}
        let f = minimal_r3();
        for k2 in 1..=3 {
            for j1 in 1..=2u16 {
                for j2 in 1..=2u16 {
                    for i1 in 1..=2u16 {
                        let lhs = Expr::sum((1..=3).map(|k1| {
                            f.diff(&CoordSymbol::Y1(k1, j1)).diff(&CoordSymbol::Y1(k2, j2)) * Expr::y1(k1, i1)
                        }));
                        let mut rhs = Expr::zero();
                        if j1 == i1 {
                            rhs = rhs + f.diff(&CoordSymbol::Y1(k2, j2));
                        }
                        if j2 == i1 {
                            rhs = rhs - f.diff(&CoordSymbol::Y1(k2, j1));
                        }
                        assert!(normalize(&(lhs - rhs)).unwrap().is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn contracted_epsilon_identity() {
        // n = l = 2, k = 1: ∂²F/∂y^{K1}_{j1}∂y^{K2}_{j2} y^{K2}_{i2} ε_{j1 j2} = 2 ∂F/∂y^{K1}_{j1} ε_{j1 i2}
        let f = minimal_r3();
        let eps = |a: u16, b: u16| -> i64 { if a == b { 0 } else if a < b { 1 } else { -1 } };
        for k1 in 1..=3 {
            for i2 in 1..=2u16 {
                let mut lhs = Expr::zero();
                let mut rhs = Expr::zero();
                for j1 in 1..=2u16 {
                    for j2 in 1..=2u16 {
                        let e = eps(j1, j2);
                        if e != 0 {
                            for k2 in 1..=3 {
                                lhs = lhs
                                    + f.diff(&CoordSymbol::Y1(k1, j1)).diff(&CoordSymbol::Y1(k2, j2))
                                        * Expr::y1(k2, i2)
                                        * Expr::int(e);
                            }
                        }
                    }
                    rhs = rhs + f.diff(&CoordSymbol::Y1(k1, j1)) * Expr::int(2 * eps(j1, i2));
                }
                assert!(equal(&lhs, &rhs, &cfg()).is_equal());
            }
        }
    }

    #[test]
    fn grassmann_projection_examples() {
        let c1 = JetChart::new(1, 1, 1).unwrap();
        let ac = AdaptedChart::new(c1.clone(), vec![1]).unwrap();
        let f = parse("sqrt(y1_1^2 + y2_1^2)", &c1).unwrap();
        let fg = grassmann_projection(&f, &ac, &cfg()).unwrap();
        assert!(equal(&fg, &(Expr::one() + Expr::w1(2, 1) * Expr::w1(2, 1)).sqrt(), &cfg()).is_equal());

        let c = JetChart::new(2, 1, 1).unwrap();
        let ac = AdaptedChart::new(c.clone(), vec![1, 2]).unwrap();
        let fg = grassmann_projection(&minimal_r3(), &ac, &cfg()).unwrap();
        let expect = (Expr::one() + Expr::w1(3, 1) * Expr::w1(3, 1) + Expr::w1(3, 2) * Expr::w1(3, 2)).sqrt();
        assert!(equal(&fg, &expect, &cfg()).is_equal());
        assert!(!fg.depends_on(|s| matches!(s, CoordSymbol::W1(i, _) if *i <= 2)));

        let c22 = JetChart::new(2, 2, 1).unwrap();
        let ac = AdaptedChart::new(c22.clone(), vec![1, 2]).unwrap();
        let f = parse("y1_1*y2_2 - y2_1*y1_2 + y3_1*y4_2 - y4_1*y3_2", &c22).unwrap();
        let fg = grassmann_projection(&f, &ac, &cfg()).unwrap();
        assert!(fg.free_symbols().iter().all(|s| matches!(s, CoordSymbol::W1(3 | 4, _))));

        let bad = parse("y1_1^2 + y2_1", &c1).unwrap();
        let ac = AdaptedChart::new(c1, vec![1]).unwrap();
        assert!(grassmann_projection(&bad, &ac, &cfg()).is_err());
    }

    #[test]
    fn reparametrization_invariance() {
        let z = ImmersionSpec::graph(2, vec![Expr::x(1) * Expr::x(2) + Expr::x(1) * Expr::x(1) * Expr::rational(1, 3)]);
        let phi = Expr::rational(1, 10) * Expr::x(2) * Expr::x(2);
        let rule = GaussLegendre::new(4);
        let (i1, i2) = shear_invariance(&minimal_r3(), &z, &phi, [0.0, 1.0, 0.0, 1.0], 8, &rule).unwrap();
        assert!((i1 - i2).abs() < 1e-9 * i1.abs(), "{i1} {i2}");
    }
}
