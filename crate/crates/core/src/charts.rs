//! Jet and Grassmann charts, formal and adapted derivatives, the GL_n action.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{det, permutations, CoordSymbol, Expr, Point};

/// Minor determinants below this magnitude count as singular.
pub const REGULARITY_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("invalid chart dimensions n={n}, m={m}, order={order}")]
    InvalidDims { n: u16, m: u16, order: u8 },
    #[error("expression needs jets of order {0}, beyond the chart")]
    UnsupportedOrder(u8),
    #[error("base index {0} out of range")]
    IndexOutOfRange(u16),
    #[error("index {0} is not in the adapted subsequence")]
    NotInSubsequence(u16),
    #[error("invalid subsequence {0:?}")]
    InvalidSubsequence(Vec<u16>),
    #[error("dimension {0} exceeds the n <= 4 determinant guard")]
    DeterminantGuard(u16),
    #[error("group element has determinant {0} <= 0")]
    NotOrientationPreserving(f64),
    #[error("missing value for {0}")]
    MissingValue(String),
}

/// Fibered chart on J^r(R^n × Q) with M = n + m fiber coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetChart {
    pub n: u16,
    pub m: u16,
    pub order: u8,
    #[serde(default)]
    pub params: Vec<String>,
    /// opaque function names with their arity
    #[serde(default)]
    pub functions: BTreeMap<String, usize>,
}

impl JetChart {
    pub fn new(n: u16, m: u16, order: u8) -> Result<JetChart, ChartError> {
        if n < 1 || m < 1 || !(1..=2).contains(&order) {
            return Err(ChartError::InvalidDims { n, m, order });
        }
        Ok(JetChart { n, m, order, params: Vec::new(), functions: BTreeMap::new() })
    }

    pub fn with_param(mut self, name: &str) -> JetChart {
        if !self.params.iter().any(|p| p == name) {
            self.params.push(name.to_string());
        }
        self
    }

    pub fn with_function(mut self, name: &str, arity: usize) -> JetChart {
        self.functions.insert(name.to_string(), arity);
        self
    }

    /// Number of fiber coordinates M = m + n.
    pub fn big_m(&self) -> u16 {
        self.n + self.m
    }

    pub fn with_order(&self, order: u8) -> JetChart {
        JetChart { order, ..self.clone() }
    }

    pub fn xs(&self) -> Vec<CoordSymbol> {
        (1..=self.n).map(CoordSymbol::X).collect()
    }

    pub fn ys(&self) -> Vec<CoordSymbol> {
        (1..=self.big_m()).map(CoordSymbol::Y).collect()
    }

    pub fn jets1(&self) -> Vec<CoordSymbol> {
        let mut v = Vec::new();
        for k in 1..=self.big_m() {
            for j in 1..=self.n {
                v.push(CoordSymbol::Y1(k, j));
            }
        }
        v
    }

    pub fn jets2(&self) -> Vec<CoordSymbol> {
        let mut v = Vec::new();
        if self.order < 2 {
            return v;
        }
        for k in 1..=self.big_m() {
            for i in 1..=self.n {
                for j in i..=self.n {
                    v.push(CoordSymbol::Y2(k, i, j));
                }
            }
        }
        v
    }
}

/// Formal derivative d_i f = ∂f/∂x^i + ∂f/∂y^K y^K_i + ∂f/∂y^K_j y^K_ji.
pub fn formal_derivative(f: &Expr, i: u16, chart: &JetChart) -> Result<Expr, ChartError> {
    if i < 1 || i > chart.n {
        return Err(ChartError::IndexOutOfRange(i));
    }
    let syms = f.free_symbols();
    if syms.iter().any(|s| s.jet_order() == 2) {
        return Err(ChartError::UnsupportedOrder(3));
    }
    let has_jet1 = syms.iter().any(|s| s.jet_order() == 1);
    if has_jet1 && chart.order < 2 {
        return Err(ChartError::UnsupportedOrder(2));
    }
    let mut terms = Vec::new();
    for s in &syms {
        let d = f.diff(s);
        let t = match s {
            CoordSymbol::X(j) if *j == i => d,
            CoordSymbol::Y(k) => d * Expr::y1(*k, i),
            CoordSymbol::Y1(k, j) => d * Expr::y2(*k, *j, i),
            _ => continue,
        };
        terms.push(t);
    }
    Ok(Expr::sum(terms))
}

/// Chart on the Grassmann fibration adapted to an increasing subsequence (i).
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedChart {
    pub parent: JetChart,
    pub sub: Vec<u16>,
    pub comp: Vec<u16>,
}

impl AdaptedChart {
    pub fn new(parent: JetChart, sub: Vec<u16>) -> Result<AdaptedChart, ChartError> {
        let big_m = parent.big_m();
        let ok = sub.len() == parent.n as usize
            && sub.windows(2).all(|w| w[0] < w[1])
            && sub.iter().all(|&k| k >= 1 && k <= big_m);
        if !ok {
            return Err(ChartError::InvalidSubsequence(sub));
        }
        if parent.n > 4 {
            return Err(ChartError::DeterminantGuard(parent.n));
        }
        let comp = (1..=big_m).filter(|k| !sub.contains(k)).collect();
        Ok(AdaptedChart { parent, sub, comp })
    }

    pub fn n(&self) -> u16 {
        self.parent.n
    }

    fn position(&self, i: u16) -> Result<usize, ChartError> {
        self.sub.iter().position(|&s| s == i).ok_or(ChartError::NotInSubsequence(i))
    }

    /// The (i)-minor y^{i_a}_j.
    pub fn minor(&self) -> Vec<Vec<Expr>> {
        self.sub
            .iter()
            .map(|&i| (1..=self.n()).map(|j| Expr::y1(i, j)).collect())
            .collect()
    }

    /// Closed form of z^k_{i_a} (row k, column a) as adjugate over determinant.
    pub fn z_matrix(&self) -> Vec<Vec<Expr>> {
        let m = self.minor();
        let n = m.len();
        let d = det(&m).expect("guarded n <= 4");
        let dinv = d.recip().expect("minor determinant is a nonzero polynomial");
        let mut z = vec![vec![Expr::zero(); n]; n];
        for (k, row) in z.iter_mut().enumerate() {
            for (a, entry) in row.iter_mut().enumerate() {
                // adj[k][a] = (-1)^(a+k) * det(m without row a, column k)
                let sub: Vec<Vec<Expr>> = (0..n)
                    .filter(|&r| r != a)
                    .map(|r| (0..n).filter(|&c| c != k).map(|c| m[r][c].clone()).collect())
                    .collect();
                let cof = if n == 1 { Expr::one() } else { det(&sub).unwrap() };
                let sign = if (a + k) % 2 == 0 { 1 } else { -1 };
                *entry = Expr::int(sign) * cof * &dinv;
            }
        }
        z
    }

    /// Substitution w-symbols (and z-symbols) → expressions in y-symbols.
    pub fn to_adapted(&self) -> BTreeMap<CoordSymbol, Expr> {
        let n = self.n();
        let z = self.z_matrix();
        let mut map = BTreeMap::new();
        for k in 1..=self.parent.big_m() {
            map.insert(CoordSymbol::W(k), Expr::y(k));
        }
        for &i in &self.sub {
            for j in 1..=n {
                map.insert(CoordSymbol::W1(i, j), Expr::y1(i, j));
            }
        }
        for (a, &i) in self.sub.iter().enumerate() {
            for k in 1..=n {
                map.insert(CoordSymbol::Z(k, i), z[(k - 1) as usize][a].clone());
            }
            for &s in &self.comp {
                let v = Expr::sum((1..=n).map(|j| z[(j - 1) as usize][a].clone() * Expr::y1(s, j)));
                map.insert(CoordSymbol::W1(s, i), v);
            }
        }
        map
    }

    /// Substitution y-symbols → w-symbols (inverse of `to_adapted`).
    pub fn inverse_map(&self) -> BTreeMap<CoordSymbol, Expr> {
        let n = self.n();
        let mut map = BTreeMap::new();
        for k in 1..=self.parent.big_m() {
            map.insert(CoordSymbol::Y(k), Expr::w(k));
        }
        for &i in &self.sub {
            for j in 1..=n {
                map.insert(CoordSymbol::Y1(i, j), Expr::w1(i, j));
            }
        }
        for &s in &self.comp {
            for j in 1..=n {
                let v = Expr::sum(self.sub.iter().map(|&i| Expr::w1(s, i) * Expr::w1(i, j)));
                map.insert(CoordSymbol::Y1(s, j), v);
            }
        }
        map
    }

    /// Substitution y-symbols → w-symbols on the section w^i_j = δ^i_j.
    pub fn grassmann_section(&self) -> BTreeMap<CoordSymbol, Expr> {
        let mut map = self.inverse_map();
        for (a, &i) in self.sub.iter().enumerate() {
            for j in 1..=self.n() {
                let v = if a + 1 == j as usize { Expr::one() } else { Expr::zero() };
                map.insert(CoordSymbol::Y1(i, j), v);
            }
        }
        for &s in &self.comp {
            for j in 1..=self.n() {
                map.insert(CoordSymbol::Y1(s, j), Expr::w1(s, self.sub[(j - 1) as usize]));
            }
        }
        map
    }

    /// Adapted formal derivative Δ_i f = ∂f/∂w^i + w^σ_i ∂f/∂w^σ (+ w^σ_ij ∂f/∂w^σ_j).
    pub fn adapted_derivative(&self, f: &Expr, i: u16) -> Result<Expr, ChartError> {
        self.position(i)?;
        let mut terms = vec![f.diff(&CoordSymbol::W(i))];
        for &s in &self.comp {
            terms.push(Expr::w1(s, i) * f.diff(&CoordSymbol::W(s)));
            for &j in &self.sub {
                let d = f.diff(&CoordSymbol::W1(s, j));
                if !d.is_zero() {
                    terms.push(Expr::sym(CoordSymbol::w2(s, i, j)) * d);
                }
            }
        }
        Ok(Expr::sum(terms))
    }

    /// Free coordinates of the first-order Grassmann chart.
    pub fn grassmann_coords(&self) -> Vec<CoordSymbol> {
        let mut v: Vec<CoordSymbol> = (1..=self.parent.big_m()).map(CoordSymbol::W).collect();
        for &s in &self.comp {
            for &i in &self.sub {
                v.push(CoordSymbol::W1(s, i));
            }
        }
        v
    }
}

/// Increasing k-subsequences of 1..=m.
pub fn combinations(m: u16, k: usize) -> Vec<Vec<u16>> {
    fn rec(start: u16, m: u16, k: usize, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..=m {
            cur.push(v);
            rec(v + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, m, k, &mut Vec::new(), &mut out);
    out
}

pub fn det_f64(m: &[Vec<f64>]) -> f64 {
    permutations(m.len())
        .into_iter()
        .map(|(p, s)| s as f64 * p.iter().enumerate().map(|(r, &c)| m[r][c]).product::<f64>())
        .sum()
}

fn jet_value(p: &Point, k: u16, j: u16) -> Result<f64, ChartError> {
    p.get(&CoordSymbol::Y1(k, j))
        .copied()
        .ok_or_else(|| ChartError::MissingValue(CoordSymbol::Y1(k, j).to_string()))
}

/// All (i)-subsequences whose minor is nonsingular at the point.
pub fn regular_blocks(p: &Point, chart: &JetChart) -> Result<Vec<Vec<u16>>, ChartError> {
    let mut out = Vec::new();
    for sub in combinations(chart.big_m(), chart.n as usize) {
        let mut m = Vec::new();
        for &i in &sub {
            let mut row = Vec::new();
            for j in 1..=chart.n {
                row.push(jet_value(p, i, j)?);
            }
            m.push(row);
        }
        if det_f64(&m).abs() > REGULARITY_EPS {
            out.push(sub);
        }
    }
    Ok(out)
}

/// Element of GL⁺_n.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    pub a: Vec<Vec<f64>>,
}

impl GroupElement {
    pub fn new(a: Vec<Vec<f64>>) -> Result<GroupElement, ChartError> {
        let d = det_f64(&a);
        if d <= 0.0 {
            return Err(ChartError::NotOrientationPreserving(d));
        }
        Ok(GroupElement { a })
    }

    pub fn identity(n: usize) -> GroupElement {
        GroupElement { a: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect() }
    }

    pub fn det(&self) -> f64 {
        det_f64(&self.a)
    }
}

/// Right action on velocities: y^K_j ↦ Σ_l y^K_l a^l_j.
pub fn gl_act(p: &Point, a: &GroupElement, chart: &JetChart) -> Result<Point, ChartError> {
    let d = a.det();
    if d <= 0.0 {
        return Err(ChartError::NotOrientationPreserving(d));
    }
    let n = chart.n;
    let mut out = p.clone();
    for k in 1..=chart.big_m() {
        for j in 1..=n {
            let mut v = 0.0;
            for l in 1..=n {
                v += jet_value(p, k, l)? * a.a[(l - 1) as usize][(j - 1) as usize];
            }
            out.set(CoordSymbol::Y1(k, j), v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{equal, normalize, EqualConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c21() -> JetChart {
        JetChart::new(2, 1, 2).unwrap()
    }

    #[test]
    fn formal_derivative_examples() {
        let c = c21().with_function("g", 1);
        assert_eq!(formal_derivative(&Expr::y(1), 1, &c).unwrap(), Expr::y1(1, 1));
        assert_eq!(formal_derivative(&Expr::y1(1, 1), 2, &c).unwrap(), Expr::y2(1, 1, 2));
        let g = Expr::opaque("g", vec![Expr::y(1)]);
        let expect = Expr::opaque_deriv("g", vec![1], vec![Expr::y(1)]) * Expr::y1(1, 1);
        assert_eq!(formal_derivative(&g, 1, &c).unwrap(), expect);
        assert!(matches!(formal_derivative(&Expr::y2(1, 1, 1), 1, &c), Err(ChartError::UnsupportedOrder(3))));
        let c1 = JetChart::new(2, 1, 1).unwrap();
        assert!(formal_derivative(&Expr::y1(1, 1), 1, &c1).is_err());
    }

    #[test]
    fn adapted_map_n1() {
        let ac = AdaptedChart::new(JetChart::new(1, 1, 1).unwrap(), vec![1]).unwrap();
        let map = ac.to_adapted();
        let w21 = Expr::w1(2, 1).subs(&map);
        assert_eq!(w21, Expr::y1(2, 1) * Expr::y1(1, 1).recip().unwrap());
    }

    #[test]
    fn adapted_map_identity_minor() {
        let ac = AdaptedChart::new(c21(), vec![1, 2]).unwrap();
        let map = ac.to_adapted();
        let mut id = BTreeMap::new();
        for (i, j, v) in [(1, 1, 1), (1, 2, 0), (2, 1, 0), (2, 2, 1)] {
            id.insert(CoordSymbol::Y1(i, j), Expr::int(v));
        }
        for i in [1, 2] {
            assert_eq!(Expr::w1(3, i).subs(&map).subs(&id), Expr::y1(3, i));
        }
    }

    #[test]
    fn adapted_roundtrip_is_identity() {
        for (n, m, sub) in [(1, 1, vec![2]), (2, 1, vec![1, 3]), (2, 2, vec![2, 4])] {
            let ac = AdaptedChart::new(JetChart::new(n, m, 1).unwrap(), sub).unwrap();
            let fwd = ac.to_adapted();
            let inv = ac.inverse_map();
            for s in ac.grassmann_coords() {
                let back = Expr::sym(s.clone()).subs(&fwd).subs(&inv);
                assert_eq!(normalize(&back).unwrap(), Expr::sym(s));
            }
        }
    }

    #[test]
    fn z_identity() {
        for n in [1u16, 2] {
            let ac = AdaptedChart::new(JetChart::new(n, 1, 1).unwrap(), (1..=n).collect()).unwrap();
            let z = ac.z_matrix();
            let m = ac.minor();
            for k in 0..n as usize {
                for j in 0..n as usize {
                    let s = Expr::sum((0..n as usize).map(|a| z[k][a].clone() * m[a][j].clone()));
                    let delta = Expr::int((k == j) as i64);
                    assert_eq!(normalize(&(s - delta)).unwrap(), Expr::zero());
                }
            }
        }
    }

    #[test]
    fn adapted_derivative_examples() {
        let ac = AdaptedChart::new(c21(), vec![1, 2]).unwrap();
        assert_eq!(ac.adapted_derivative(&Expr::w(3), 1).unwrap(), Expr::w1(3, 1));
        assert_eq!(ac.adapted_derivative(&Expr::w(1), 1).unwrap(), Expr::one());
        assert!(ac.adapted_derivative(&Expr::w(1), 3).is_err());
    }

    #[test]
    fn adapted_derivative_through_formal() {
        // Δ_i f = z^j_i d_j f on the order-0 fragment
        let c = JetChart::new(2, 1, 2).unwrap();
        let ac = AdaptedChart::new(c.clone(), vec![1, 3]).unwrap();
        let f = Expr::y(1) * Expr::y(2) * Expr::y(2) + Expr::y(3).sin() + Expr::y(1) * Expr::y(3);
        let fw = f.subs(&ac.inverse_map());
        let z = ac.z_matrix();
        for (a, &i) in ac.sub.iter().enumerate() {
            let lhs = ac.adapted_derivative(&fw, i).unwrap().subs(&ac.to_adapted());
            let rhs = Expr::sum((1..=2).map(|j| z[j as usize - 1][a].clone() * formal_derivative(&f, j, &c).unwrap()));
            assert_eq!(normalize(&(lhs - rhs)).unwrap(), Expr::zero());
        }
    }

    #[test]
    fn regular_blocks_examples() {
        let c = JetChart::new(1, 1, 1).unwrap();
        let p = Point::new().with(CoordSymbol::Y1(1, 1), 1.0).with(CoordSymbol::Y1(2, 1), 0.0);
        assert_eq!(regular_blocks(&p, &c).unwrap(), vec![vec![1]]);
        let q = Point::new().with(CoordSymbol::Y1(1, 1), 0.0).with(CoordSymbol::Y1(2, 1), 0.0);
        assert!(regular_blocks(&q, &c).unwrap().is_empty());
        let g = JetChart::new(2, 1, 1).unwrap();
        let mut r = Point::new();
        for (k, j, v) in [(1, 1, 1.0), (1, 2, 0.0), (2, 1, 0.0), (2, 2, 1.0), (3, 1, 0.0), (3, 2, 0.0)] {
            r.set(CoordSymbol::Y1(k, j), v);
        }
        assert!(regular_blocks(&r, &g).unwrap().contains(&vec![1, 2]));
    }

    #[test]
    fn group_action_examples() {
        let c = JetChart::new(1, 1, 1).unwrap();
        let p = Point::new().with(CoordSymbol::Y1(1, 1), 0.7).with(CoordSymbol::Y1(2, 1), -1.3);
        assert_eq!(gl_act(&p, &GroupElement::identity(1), &c).unwrap(), p);
        let q = gl_act(&p, &GroupElement::new(vec![vec![2.0]]).unwrap(), &c).unwrap();
        assert_eq!(q.get(&CoordSymbol::Y1(2, 1)), Some(&-2.6));
        assert!(GroupElement::new(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn w_coordinates_are_invariant() {
        let c = JetChart::new(2, 2, 1).unwrap();
        let ac = AdaptedChart::new(c.clone(), vec![1, 2]).unwrap();
        let map = ac.to_adapted();
        let ws: Vec<(CoordSymbol, Expr)> =
            ac.grassmann_coords().into_iter().map(|s| (s.clone(), Expr::sym(s).subs(&map))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 200 {
            let mut p = Point::new();
            for s in c.ys().into_iter().chain(c.jets1()) {
                p.set(s, rng.gen_range(-2.0..2.0));
            }
            let a: Vec<Vec<f64>> = (0..2)
                .map(|i| (0..2).map(|j| (i == j) as i32 as f64 + 0.3 * rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let Ok(g) = GroupElement::new(a) else { continue };
            if g.det() <= 0.1 || !regular_blocks(&p, &c).unwrap().contains(&vec![1, 2]) {
                continue;
            }
            let q = gl_act(&p, &g, &c).unwrap();
            for (_, e) in &ws {
                let (u, v): (f64, f64) = (e.eval(&p).unwrap(), e.eval(&q).unwrap());
                assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()), "{e}: {u} vs {v}");
            }
            checked += 1;
        }
        let _ = equal(&Expr::zero(), &Expr::zero(), &EqualConfig::default());
    }
}
