//! Prolonged vector fields, the Noether equation and currents, and the first
//! variation formula.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::charts::{formal_derivative, AdaptedChart, ChartError, JetChart};
use crate::expr::{equal, Compiled, CoordSymbol, EqualConfig, Equality, Expr, ExprError, Point};
use crate::forms::{
    grassmann_horizontal, pullback_grassmann, pullback_prolongation, to_grassmann, with_base_dim, Covector, DiffForm,
    FormError, ImmersionSpec, Mode, Vector,
};
use crate::homogeneity::zermelo_residuals;
use crate::lepage::{euler_lagrange, fundamental_homogeneous_unchecked, lagrangian_of, HorizontalNForm, Lagrangian, Verdict};
use crate::quadrature::{integrate_1d, integrate_2d, GaussLegendre};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationError {
    #[error("vector field component {0} depends on {1}")]
    NotOnQ(usize, String),
    #[error("vector field has {got} components, chart has {want}")]
    Arity { got: usize, want: usize },
    #[error("Lagrange function is not positive homogeneous")]
    NotHomogeneous,
    #[error("non-regular point: {0}")]
    Singular(String),
    #[error("quadrature produced a non-finite value near {0}")]
    Quadrature(String),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lepage(#[from] crate::lepage::LepageError),
}

/// Ξ = Ξ^K ∂/∂y^K with components over the y-coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldSpec {
    pub comps: Vec<Expr>,
}

impl VectorFieldSpec {
    pub fn new(comps: Vec<Expr>) -> Result<VectorFieldSpec, VariationError> {
        for (i, c) in comps.iter().enumerate() {
            if let Some(s) = c.free_symbols().into_iter().find(|s| !matches!(s, CoordSymbol::Y(_) | CoordSymbol::Param(_))) {
                return Err(VariationError::NotOnQ(i + 1, s.to_string()));
            }
        }
        Ok(VectorFieldSpec { comps })
    }

    /// ∂/∂y^k on a Q of dimension `big_m`.
    pub fn coordinate(big_m: u16, k: u16) -> VectorFieldSpec {
        let comps = (1..=big_m).map(|l| if l == k { Expr::one() } else { Expr::zero() }).collect();
        VectorFieldSpec { comps }
    }

    fn check(&self, big_m: u16) -> Result<(), VariationError> {
        if self.comps.len() != big_m as usize {
            return Err(VariationError::Arity { got: self.comps.len(), want: big_m as usize });
        }
        Ok(())
    }

    /// Components rewritten in w-coordinates.
    pub fn in_w(&self) -> Vec<Expr> {
        self.comps
            .iter()
            .map(|c| c.subs_fn(&|s| match s {
                CoordSymbol::Y(k) => Some(Expr::w(*k)),
                _ => None,
            }))
            .collect()
    }

    pub fn base(&self) -> Vector {
        let mut v = Vector::new();
        for (i, c) in self.comps.iter().enumerate() {
            v = v.with(CoordSymbol::Y(i as u16 + 1), c.clone());
        }
        v
    }
}

/// J¹Ξ or J²Ξ: Ξ^K_j = d_jΞ^K, Ξ^K_jl = d_lΞ^K_j.
pub fn prolong_jet(xi: &VectorFieldSpec, chart: &JetChart, order: u8) -> Result<Vector, VariationError> {
    xi.check(chart.big_m())?;
    if !(1..=2).contains(&order) {
        return Err(ChartError::UnsupportedOrder(order).into());
    }
    let c2 = chart.with_order(2);
    let mut v = xi.base();
    for (idx, c) in xi.comps.iter().enumerate() {
        let k = idx as u16 + 1;
        for j in 1..=chart.n {
            let cj = formal_derivative(c, j, chart)?;
            if order == 2 {
                for l in j..=chart.n {
                    v = v.with(CoordSymbol::y2(k, j, l), formal_derivative(&cj, l, &c2)?);
                }
            }
            v = v.with(CoordSymbol::Y1(k, j), cj);
        }
    }
    Ok(v)
}

/// G¹Ξ in the adapted chart: Ξ^σ_i = Δ_iΞ^σ − w^σ_p Δ_iΞ^p.
pub fn prolong_grassmann(xi: &VectorFieldSpec, ac: &AdaptedChart) -> Result<Vector, VariationError> {
    xi.check(ac.parent.big_m())?;
    let w = xi.in_w();
    let mut v = Vector::new();
    for (idx, c) in w.iter().enumerate() {
        v = v.with(CoordSymbol::W(idx as u16 + 1), c.clone());
    }
    for &i in &ac.sub {
        let delta: Vec<Expr> = w.iter().map(|c| ac.adapted_derivative(c, i)).collect::<Result<_, _>>()?;
        for &s in &ac.comp {
            let mut e = delta[(s - 1) as usize].clone();
            for &p in &ac.sub {
                e = e - Expr::w1(s, p) * &delta[(p - 1) as usize];
            }
            v = v.with(CoordSymbol::W1(s, i), e);
        }
    }
    Ok(v)
}

/// A GL-invariant dy-form as a Grassmann-mode form (pass-through if already so).
fn as_grassmann(eta: &DiffForm, ac: &AdaptedChart) -> Result<DiffForm, VariationError> {
    Ok(if eta.mode == Mode::Grassmann { eta.clone() } else { to_grassmann(eta, ac)? })
}

/// ∂_{G¹Ξ}η reduced modulo the contact ideal, with its verdict against 0.
pub fn noether_residual(
    xi: &VectorFieldSpec,
    eta: &DiffForm,
    ac: &AdaptedChart,
    cfg: &EqualConfig,
) -> Result<(DiffForm, Verdict), VariationError> {
    let eta = as_grassmann(eta, ac)?;
    if eta.is_zero() {
        return Ok((eta, Verdict::Pass));
    }
    let g = prolong_grassmann(xi, ac)?;
    let lie = with_base_dim(ac.n(), || eta.lie_derivative(&g))?;
    let red = grassmann_horizontal(&lie, ac)?;
    Ok((red.clone(), zero_verdict(&red, cfg)))
}

pub(crate) fn zero_verdict(f: &DiffForm, cfg: &EqualConfig) -> Verdict {
    let mut unknown = false;
    for c in f.terms.values() {
        match equal(c, &Expr::zero(), cfg) {
            Equality::Equal => {}
            Equality::Unequal(w) => return Verdict::Fail(w),
            Equality::Unknown => unknown = true,
        }
    }
    if unknown {
        Verdict::Unknown
    } else {
        Verdict::Pass
    }
}

/// The Noether current i_{G¹Ξ}W in Grassmann mode.
pub fn noether_current(xi: &VectorFieldSpec, w: &DiffForm, ac: &AdaptedChart) -> Result<DiffForm, VariationError> {
    let w = as_grassmann(w, ac)?;
    if w.degree == 0 {
        return Err(FormError::DegreeZero.into());
    }
    let g = prolong_grassmann(xi, ac)?;
    Ok(w.contract(&g)?)
}

/// d((G¹ζ)* current) = 0 along the immersion ζ.
pub fn current_closed_along(
    current: &DiffForm,
    zeta: &ImmersionSpec,
    ac: &AdaptedChart,
    cfg: &EqualConfig,
) -> Result<Verdict, VariationError> {
    let pulled = pullback_grassmann(current, zeta, ac)?;
    let d = pulled.ext_d()?;
    Ok(zero_verdict(&d, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FirstVariationReport {
    pub lhs: f64,
    pub el_term: f64,
    pub boundary: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub cells: usize,
}

impl FirstVariationReport {
    pub fn within(&self, tol: f64) -> bool {
        self.rel_diff <= tol
    }
}

fn eval_at(c: &Compiled, x1: f64, x2: f64) -> f64 {
    let p = Point::new().with(CoordSymbol::X(1), x1).with(CoordSymbol::X(2), x2);
    c.eval(&p).unwrap_or(f64::NAN)
}

/// Both sides of the integral first variation formula over the rectangle
/// Ω = [a,b]×[c,d] for W = W_{hρ}, n = 2. The boundary integral runs
/// counterclockwise.
pub fn first_variation_check(
    rho: &HorizontalNForm,
    xi: &VectorFieldSpec,
    zeta: &ImmersionSpec,
    rect: [f64; 4],
    cells: usize,
    rule: &GaussLegendre,
) -> Result<FirstVariationReport, VariationError> {
    let chart = &rho.chart;
    if chart.n != 2 || zeta.n != 2 {
        return Err(ChartError::InvalidDims { n: chart.n, m: chart.m, order: 1 }.into());
    }
    xi.check(chart.big_m())?;
    let lam: Lagrangian = lagrangian_of(rho);
    if !zermelo_residuals(&lam.l, chart, &EqualConfig::default()).passed() {
        return Err(VariationError::NotHomogeneous);
    }
    let w = fundamental_homogeneous_unchecked(&lam);
    let j1 = prolong_jet(xi, chart, 1)?;
    let (lie, cur) = with_base_dim(2, || -> Result<_, FormError> { Ok((w.lie_derivative(&j1)?, w.contract(&j1)?)) })?;

    let lhs_form = pullback_prolongation(&lie, zeta)?;
    let lhs_c = Compiled::new(&lhs_form.coeff(&[Covector::dx(1), Covector::dx(2)]));

    let el = euler_lagrange(&lam)?;
    let jets = zeta.jet_substitution();
    let el_expr = Expr::sum(el.iter().zip(&xi.comps).map(|(e, x)| e * x)).subs(&jets);
    let el_c = Compiled::new(&el_expr);

    let bd = pullback_prolongation(&cur, zeta)?;
    let a1 = Compiled::new(&bd.coeff(&[Covector::dx(1)]));
    let a2 = Compiled::new(&bd.coeff(&[Covector::dx(2)]));

    let [a, b, c, d] = rect;
    let lhs = integrate_2d(|x, y| eval_at(&lhs_c, x, y), rect, cells, rule);
    let el_term = integrate_2d(|x, y| eval_at(&el_c, x, y), rect, cells, rule);
    let bottom = integrate_1d(|x| eval_at(&a1, x, c), a, b, cells, rule);
    let right = integrate_1d(|y| eval_at(&a2, b, y), c, d, cells, rule);
    let top = integrate_1d(|x| eval_at(&a1, x, d), a, b, cells, rule);
    let left = integrate_1d(|y| eval_at(&a2, a, y), c, d, cells, rule);
    let boundary = bottom + right - top - left;
    for v in [lhs, el_term, boundary] {
        if !v.is_finite() {
            return Err(VariationError::Quadrature(format!("{rect:?}")));
        }
    }
    let rhs = el_term + boundary;
    let abs_diff = (lhs - rhs).abs();
    let scale = lhs.abs().max(el_term.abs()).max(boundary.abs());
    let rel_diff = if scale > 0.0 { abs_diff / scale } else { 0.0 };
    Ok(FirstVariationReport { lhs, el_term, boundary, rhs, abs_diff, rel_diff, cells })
}

/// Solves a·x = b for small dense systems by partial pivoting.
fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let src = m[col].clone();
                    m[r].iter_mut().zip(src).for_each(|(v, s)| *v -= f * s);
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// A numeric map on Q together with its Jacobian.
pub type PointMap<'a> = dyn Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>) + 'a;

/// G¹α on adapted coordinates, acting on the class represented by
/// y^{i_a}_j = δ_aj, y^σ_j = w^σ_{i_j}.
pub fn grassmann_image(ac: &AdaptedChart, w: &Point, alpha: &PointMap) -> Result<Point, VariationError> {
    let big_m = ac.parent.big_m() as usize;
    let n = ac.n() as usize;
    let get = |s: CoordSymbol| w.get(&s).copied().ok_or_else(|| ChartError::MissingValue(s.to_string()));
    let y: Vec<f64> = (1..=big_m as u16).map(|k| get(CoordSymbol::W(k))).collect::<Result<_, _>>()?;
    let mut v = vec![vec![0.0; n]; big_m];
    for (a, &i) in ac.sub.iter().enumerate() {
        v[(i - 1) as usize][a] = 1.0;
    }
    for &s in &ac.comp {
        for (j, &i) in ac.sub.iter().enumerate() {
            v[(s - 1) as usize][j] = get(CoordSymbol::W1(s, i))?;
        }
    }
    let (y2, jac) = alpha(&y);
    let v2: Vec<Vec<f64>> =
        (0..big_m).map(|k| (0..n).map(|j| (0..big_m).map(|l| jac[k][l] * v[l][j]).sum()).collect()).collect();
    let minor: Vec<Vec<f64>> = ac.sub.iter().map(|&i| v2[(i - 1) as usize].clone()).collect();
    let z = invert(&minor).ok_or_else(|| VariationError::Singular(format!("{y:?}")))?;
    let mut out = Point::new();
    for (k, val) in y2.iter().enumerate() {
        out.set(CoordSymbol::W(k as u16 + 1), *val);
    }
    for &s in &ac.comp {
        for (a, &i) in ac.sub.iter().enumerate() {
            let val: f64 = (0..n).map(|j| v2[(s - 1) as usize][j] * z[j][a]).sum();
            out.set(CoordSymbol::W1(s, i), val);
        }
    }
    Ok(out)
}

/// Closed-form map y ↦ α(y) with compiled Jacobian.
pub struct ClosedMap {
    comps: Vec<Compiled>,
    jac: Vec<Vec<Compiled>>,
}

impl ClosedMap {
    pub fn new(comps: &[Expr]) -> ClosedMap {
        let m = comps.len() as u16;
        ClosedMap {
            comps: comps.iter().map(Compiled::new).collect(),
            jac: comps.iter().map(|c| (1..=m).map(|l| Compiled::new(&c.diff(&CoordSymbol::Y(l)))).collect()).collect(),
        }
    }

    fn point(y: &[f64]) -> Point {
        let mut p = Point::new();
        for (k, v) in y.iter().enumerate() {
            p.set(CoordSymbol::Y(k as u16 + 1), *v);
        }
        p
    }

    pub fn apply(&self, y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let p = Self::point(y);
        let ev = |c: &Compiled| c.eval(&p).unwrap_or(f64::NAN);
        (self.comps.iter().map(ev).collect(), self.jac.iter().map(|r| r.iter().map(ev).collect()).collect())
    }

    /// Time-t flow of the field with these components and its Jacobian, by RK4
    /// on the variational system.
    pub fn flow(&self, y0: &[f64], t: f64, steps: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = y0.len();
        let rhs = |y: &[f64], j: &[Vec<f64>]| {
            let (f, df) = self.apply(y);
            let dj: Vec<Vec<f64>> =
                (0..m).map(|r| (0..m).map(|c| (0..m).map(|l| df[r][l] * j[l][c]).sum()).collect()).collect();
            (f, dj)
        };
        let axpy = |y: &[f64], j: &[Vec<f64>], h: f64, k: &(Vec<f64>, Vec<Vec<f64>>)| {
            let y2: Vec<f64> = y.iter().zip(&k.0).map(|(a, b)| a + h * b).collect();
            let j2: Vec<Vec<f64>> =
                j.iter().zip(&k.1).map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + h * b).collect()).collect();
            (y2, j2)
        };
        let mut y = y0.to_vec();
        let mut j: Vec<Vec<f64>> = (0..m).map(|r| (0..m).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect();
        let h = t / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(&y, &j);
            let (y1, j1) = axpy(&y, &j, h / 2.0, &k1);
            let k2 = rhs(&y1, &j1);
            let (y2, j2) = axpy(&y, &j, h / 2.0, &k2);
            let k3 = rhs(&y2, &j2);
            let (y3, j3) = axpy(&y, &j, h, &k3);
            let k4 = rhs(&y3, &j3);
            for r in 0..m {
                y[r] += h / 6.0 * (k1.0[r] + 2.0 * k2.0[r] + 2.0 * k3.0[r] + k4.0[r]);
                for c in 0..m {
                    j[r][c] += h / 6.0 * (k1.1[r][c] + 2.0 * k2.1[r][c] + 2.0 * k3.1[r][c] + k4.1[r][c]);
                }
            }
        }
        (y, j)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointComparison {
    pub point: BTreeMap<String, f64>,
    pub max_error: f64,
}

fn max_diff(a: &Point, b: &Point) -> f64 {
    a.coords
        .iter()
        .map(|(s, v)| {
            let u = b.get(s).copied().unwrap_or(f64::NAN);
            let e = (v - u).abs() / v.abs().max(1.0);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

fn describe(p: &Point) -> BTreeMap<String, f64> {
    p.coords.iter().map(|(s, v)| (s.to_string(), *v)).collect()
}

/// Central difference in t of G¹α_t^Ξ against the prolong_grassmann
/// components, at the given adapted points.
pub fn flow_consistency(
    xi: &VectorFieldSpec,
    ac: &AdaptedChart,
    points: &[Point],
    step: f64,
) -> Result<Vec<PointComparison>, VariationError> {
    let g = prolong_grassmann(xi, ac)?;
    let field = ClosedMap::new(&xi.comps);
    let mut out = Vec::new();
    for p in points {
        let fwd = grassmann_image(ac, p, &|y: &[f64]| field.flow(y, step, 2))?;
        let bwd = grassmann_image(ac, p, &|y: &[f64]| field.flow(y, -step, 2))?;
        let mut fd = Point::new();
        let mut exact = Point::new();
        for (s, v) in &fwd.coords {
            fd.set(s.clone(), (v - bwd.coords[s]) / (2.0 * step));
            let e = g.comps.get(s).map(|e| Compiled::new(e).eval(p)).transpose().map_err(|e| {
                VariationError::Singular(e.to_string())
            })?;
            exact.set(s.clone(), e.unwrap_or(0.0));
        }
        out.push(PointComparison { point: describe(p), max_error: max_diff(&exact, &fd) });
    }
    Ok(out)
}

/// G¹(α∘ζ)(x) against G¹α(G¹ζ(x)) at the given base points.
pub fn functoriality(
    alpha: &[Expr],
    zeta: &ImmersionSpec,
    ac: &AdaptedChart,
    xs: &[Vec<f64>],
) -> Result<Vec<PointComparison>, VariationError> {
    let composed = ImmersionSpec::new(
        zeta.n,
        alpha
            .iter()
            .map(|a| {
                a.subs_fn(&|s| match s {
                    CoordSymbol::Y(k) => Some(zeta.comps[(*k - 1) as usize].clone()),
                    _ => None,
                })
            })
            .collect(),
    );
    let coords = ac.grassmann_coords();
    let compile = |z: &ImmersionSpec| -> Vec<(CoordSymbol, Compiled)> {
        let sub = z.grassmann_substitution(ac);
        coords.iter().map(|s| (s.clone(), Compiled::new(&sub[s]))).collect()
    };
    let lhs = compile(&composed);
    let g1z = compile(zeta);
    let map = ClosedMap::new(alpha);
    let mut out = Vec::new();
    for x in xs {
        let mut base = Point::new();
        for (i, v) in x.iter().enumerate() {
            base.set(CoordSymbol::X(i as u16 + 1), *v);
        }
        let eval = |list: &[(CoordSymbol, Compiled)]| -> Result<Point, VariationError> {
            let mut p = Point::new();
            for (s, c) in list {
                p.set(s.clone(), c.eval(&base).map_err(|e| VariationError::Singular(e.to_string()))?);
            }
            Ok(p)
        };
        let direct = eval(&lhs)?;
        let pushed = grassmann_image(ac, &eval(&g1z)?, &|y: &[f64]| map.apply(y))?;
        out.push(PointComparison { point: describe(&base), max_error: max_diff(&direct, &pushed) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{normalize, parse};
    use crate::minimal::{krupka_form, minimal_lagrangian, MetricSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> EqualConfig {
        EqualConfig::default()
    }

    fn euclid(n: u16, m: u16) -> (JetChart, AdaptedChart, DiffForm) {
        let chart = JetChart::new(n, m, 1).unwrap();
        let ac = AdaptedChart::new(chart.clone(), (1..=n).collect()).unwrap();
        let g = MetricSpec::euclidean(n + m);
        let w = krupka_form(&g, &chart).unwrap().to_form();
        (chart, ac, w)
    }

    fn is_zero(e: &Expr) -> bool {
        normalize(e).unwrap().is_zero()
    }

    #[test]
    fn jet_prolongation_examples() {
        let c = JetChart::new(1, 1, 1).unwrap();
        let xi = VectorFieldSpec::new(vec![Expr::y(2), Expr::zero()]).unwrap();
        let v = prolong_jet(&xi, &c, 2).unwrap();
        assert_eq!(v.comps[&CoordSymbol::Y1(1, 1)], Expr::y1(2, 1));
        assert_eq!(v.comps[&CoordSymbol::y2(1, 1, 1)], Expr::y2(2, 1, 1));
        let k = VectorFieldSpec::new(vec![Expr::int(3), Expr::rational(1, 2)]).unwrap();
        let v = prolong_jet(&k, &c, 2).unwrap();
        assert_eq!(v.comps.len(), 2);
        // rotation of R²: jets rotate with the points
        let c = JetChart::new(2, 0, 1);
        assert!(c.is_err());
        let c = JetChart::new(1, 1, 1).unwrap();
        let rot = VectorFieldSpec::new(vec![-Expr::y(2), Expr::y(1)]).unwrap();
        let v = prolong_jet(&rot, &c, 1).unwrap();
        assert_eq!(v.comps[&CoordSymbol::Y1(1, 1)], -Expr::y1(2, 1));
        assert_eq!(v.comps[&CoordSymbol::Y1(2, 1)], Expr::y1(1, 1));
        assert!(VectorFieldSpec::new(vec![Expr::y1(1, 1)]).is_err());
    }

    #[test]
    fn grassmann_prolongation_matches_expanded_display() {
        let chart = JetChart::new(2, 2, 1).unwrap();
        let ac = AdaptedChart::new(chart.clone(), vec![1, 2]).unwrap();
        let xi = VectorFieldSpec::new(vec![
            parse("y3*y1 + y2", &chart).unwrap(),
            parse("sin(y4) - y1^2", &chart).unwrap(),
            parse("y1*y2*y4", &chart).unwrap(),
            parse("exp(y3) + y2", &chart).unwrap(),
        ])
        .unwrap();
        let g = prolong_grassmann(&xi, &ac).unwrap();
        let w = xi.in_w();
        let dw = |e: &Expr, k: u16| e.diff(&CoordSymbol::W(k));
        for mu in [3u16, 4] {
            for p in [1u16, 2] {
                let xm = &w[(mu - 1) as usize];
                let mut e = dw(xm, p);
                for nu in [3u16, 4] {
                    e = e + Expr::w1(nu, p) * dw(xm, nu);
                }
                for q in [1u16, 2] {
                    let xq = &w[(q - 1) as usize];
                    e = e - Expr::w1(mu, q) * dw(xq, p);
                    for nu in [3u16, 4] {
                        e = e - Expr::w1(mu, q) * Expr::w1(nu, p) * dw(xq, nu);
                    }
                }
                assert!(is_zero(&(g.comps[&CoordSymbol::W1(mu, p)].clone() - e)));
            }
        }
        let k = VectorFieldSpec::coordinate(4, 3);
        let g = prolong_grassmann(&k, &ac).unwrap();
        assert_eq!(g.comps.len(), 1);
    }

    #[test]
    fn flow_matches_grassmann_prolongation() {
        let chart = JetChart::new(2, 1, 1).unwrap();
        let ac = AdaptedChart::new(chart.clone(), vec![1, 2]).unwrap();
        let xi = VectorFieldSpec::new(vec![
            parse("y2*y3", &chart).unwrap(),
            parse("sin(y1)", &chart).unwrap(),
            parse("y1^2 - y2", &chart).unwrap(),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point> = (0..20)
            .map(|_| {
                let mut p = Point::new();
                for s in ac.grassmann_coords() {
                    p.set(s, rng.gen_range(-1.0..1.0));
                }
                p
            })
            .collect();
        for r in flow_consistency(&xi, &ac, &pts, 1e-5).unwrap() {
            assert!(r.max_error < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn prolongation_is_functorial() {
        let chart = JetChart::new(2, 1, 1).unwrap();
        let ac = AdaptedChart::new(chart.clone(), vec![1, 2]).unwrap();
        let alpha = vec![
            parse("y1 + 1/10*y3^2", &chart).unwrap(),
            parse("y2 + 1/5*sin(y1)", &chart).unwrap(),
            parse("y3 + 1/10*y1*y2", &chart).unwrap(),
        ];
        let zeta = ImmersionSpec::new(
            2,
            vec![
                parse("x1 + 1/5*x2^2", &chart).unwrap(),
                parse("x2 + 1/10*sin(x1)", &chart).unwrap(),
                parse("3/10*x1*x2 + cos(x2)", &chart).unwrap(),
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        for r in functoriality(&alpha, &zeta, &ac, &xs).unwrap() {
            assert!(r.max_error < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn constant_fields_are_generators() {
        for m in [1u16, 2] {
            let (_, ac, w) = euclid(2, m);
            for k in 1..=m + 2 {
                let (_, v) = noether_residual(&VectorFieldSpec::coordinate(m + 2, k), &w, &ac, &cfg()).unwrap();
                assert!(v.passed(), "m={m} k={k}");
            }
        }
        let (chart, ac, w) = euclid(2, 1);
        let scale = VectorFieldSpec::new(vec![Expr::zero(), Expr::zero(), Expr::y(3)]).unwrap();
        let (_, v) = noether_residual(&scale, &w, &ac, &cfg()).unwrap();
        assert!(matches!(v, Verdict::Fail(_)));
        let (_, v) = noether_residual(&scale, &DiffForm::zero(2, Mode::Grassmann), &ac, &cfg()).unwrap();
        assert!(v.passed());
        // rotations in the (y1,y3)-plane are isometries too
        let rot = VectorFieldSpec::new(vec![-Expr::y(3), Expr::zero(), Expr::y(1)]).unwrap();
        assert!(noether_residual(&rot, &w, &ac, &cfg()).unwrap().1.passed());
        let _ = chart;
    }

    #[test]
    fn noether_currents_match_closed_forms() {
        let (chart, ac, w) = euclid(2, 1);
        let lg = parse("sqrt(w3_1^2 + w3_2^2 + 1)", &chart).unwrap();
        let inv = lg.recip().unwrap();
        let e = |k| noether_current(&VectorFieldSpec::coordinate(3, k), &w, &ac).unwrap();
        let mut f1 = DiffForm::zero(1, Mode::Grassmann);
        f1.add_word(vec![Covector::dw(3)], Expr::w1(3, 2) * &inv);
        f1.add_word(vec![Covector::dw(2)], inv.clone());
        let mut f2 = DiffForm::zero(1, Mode::Grassmann);
        f2.add_word(vec![Covector::dw(3)], -(Expr::w1(3, 1) * &inv));
        f2.add_word(vec![Covector::dw(1)], -inv.clone());
        let mut f3 = DiffForm::zero(1, Mode::Grassmann);
        f3.add_word(vec![Covector::dw(1)], -(Expr::w1(3, 2) * &inv));
        f3.add_word(vec![Covector::dw(2)], Expr::w1(3, 1) * &inv);
        for (k, f) in [(1, f1), (2, f2), (3, f3)] {
            let diff = e(k).sub(&f).unwrap();
            assert!(zero_verdict(&diff, &cfg()).passed(), "current {k}: {diff:?}");
        }
        assert!(noether_current(&VectorFieldSpec::new(vec![Expr::zero(); 3]).unwrap(), &w, &ac).unwrap().is_zero());
    }

    #[test]
    fn noether_currents_m2() {
        let (chart, ac, w) = euclid(2, 2);
        let minors = "(w3_1*w4_2 - w4_1*w3_2)";
        let lg = parse(&format!("sqrt({minors}^2 + w3_1^2 + w3_2^2 + w4_1^2 + w4_2^2 + 1)"), &chart).unwrap();
        let inv = lg.recip().unwrap();
        for mu in [3u16, 4] {
            let mut f = DiffForm::zero(1, Mode::Grassmann);
            for s in [3u16, 4] {
                let c = Expr::w1(mu, 1) * Expr::w1(s, 2) - Expr::w1(s, 1) * Expr::w1(mu, 2);
                f.add_word(vec![Covector::dw(s)], c * &inv);
            }
            f.add_word(vec![Covector::dw(1)], -(Expr::w1(mu, 2) * &inv));
            f.add_word(vec![Covector::dw(2)], Expr::w1(mu, 1) * &inv);
            let cur = noether_current(&VectorFieldSpec::coordinate(4, mu), &w, &ac).unwrap();
            assert!(zero_verdict(&cur.sub(&f).unwrap(), &cfg()).passed());
        }
    }

    #[test]
    fn currents_are_closed_along_extremals() {
        let (chart, ac, w) = euclid(2, 1);
        let plane = ImmersionSpec::graph(2, vec![parse("2*x1 - 3*x2 + 1", &chart).unwrap()]);
        let scherk = ImmersionSpec::graph(2, vec![parse("ln(cos(x1)/cos(x2))", &chart).unwrap()]);
        let bowl = ImmersionSpec::graph(2, vec![parse("x1^2 + x2^2", &chart).unwrap()]);
        for k in 1..=3 {
            let cur = noether_current(&VectorFieldSpec::coordinate(3, k), &w, &ac).unwrap();
            assert!(current_closed_along(&cur, &plane, &ac, &cfg()).unwrap().passed());
            let small = EqualConfig { ..cfg() };
            assert!(current_closed_along(&cur, &scherk, &ac, &small).unwrap().passed(), "k={k}");
            assert!(matches!(current_closed_along(&cur, &bowl, &ac, &cfg()).unwrap(), Verdict::Fail(_)));
        }
    }

    #[test]
    fn first_variation_formula() {
        let chart = JetChart::new(2, 1, 1).unwrap();
        let rho = krupka_form(&MetricSpec::euclidean(3), &chart).unwrap();
        let rule = GaussLegendre::new(3);
        let zero = VectorFieldSpec::new(vec![Expr::zero(); 3]).unwrap();
        let bowl = ImmersionSpec::graph(2, vec![parse("x1^2 + x2^2", &chart).unwrap()]);
        let r = first_variation_check(&rho, &zero, &bowl, [0.0, 1.0, 0.0, 1.0], 4, &rule).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        // non-constant field on a non-extremal
        let xi = VectorFieldSpec::new(vec![
            parse("y2/3", &chart).unwrap(),
            parse("y1*y3/5", &chart).unwrap(),
            parse("1 + y1^2/4", &chart).unwrap(),
        ])
        .unwrap();
        let r = first_variation_check(&rho, &xi, &bowl, [0.0, 1.0, 0.0, 1.0], 16, &rule).unwrap();
        assert!(r.lhs.abs() > 1e-3 && r.within(1e-6), "{r:?}");
        // extremal plane, constant field: both sides reduce to the boundary term
        let plane = ImmersionSpec::graph(2, vec![parse("x1/2 - x2 + 1", &chart).unwrap()]);
        let k = VectorFieldSpec::coordinate(3, 3);
        let r = first_variation_check(&rho, &k, &plane, [0.0, 1.0, 0.0, 1.0], 8, &rule).unwrap();
        assert!(r.el_term.abs() < 1e-12 && (r.rhs - r.boundary).abs() < 1e-12 && r.abs_diff < 1e-12, "{r:?}");
        let _ = minimal_lagrangian;
    }
}
