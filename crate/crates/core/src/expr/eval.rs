use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::ops::Neg;

use num_traits::{Num, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use super::poly::{Atom, ElemFn, Opaque, Poly};
use super::{CoordSymbol, Expr, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no value for symbol `{0}`")]
    MissingSymbol(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow")]
    Overflow,
}

/// Scalar types an expression can be evaluated in.
pub trait Scalar: Clone + Debug + PartialOrd + Num + Neg<Output = Self> {
    fn from_rational(r: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    fn sqrt_checked(&self) -> Option<Self>;
    fn elem(f: ElemFn, x: &Self) -> Option<Self>;
    fn is_finite_value(&self) -> bool {
        true
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_rational(r: &Rational) -> Self {
                ToPrimitive::to_f64(r).unwrap_or(f64::NAN) as $t
            }
            fn to_f64(&self) -> f64 {
                *self as f64
            }
            fn sqrt_checked(&self) -> Option<Self> {
                (*self >= 0.0).then(|| self.sqrt())
            }
            fn elem(f: ElemFn, x: &Self) -> Option<Self> {
                Some(match f {
                    ElemFn::Exp => x.exp(),
                    ElemFn::Ln => {
                        if *x <= 0.0 {
                            return None;
                        }
                        x.ln()
                    }
                    ElemFn::Sin => x.sin(),
                    ElemFn::Cos => x.cos(),
                    ElemFn::Atan => x.atan(),
                })
            }
            fn is_finite_value(&self) -> bool {
                self.is_finite()
            }
        }
    };
}

float_scalar!(f64);
float_scalar!(f32);

impl Scalar for Rational {
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn sqrt_checked(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let (n, d) = (self.numer().sqrt(), self.denom().sqrt());
        (&(&n * &n) == self.numer() && &(&d * &d) == self.denom()).then(|| Rational::new(n, d))
    }
    fn elem(f: ElemFn, x: &Self) -> Option<Self> {
        match f {
            ElemFn::Exp | ElemFn::Cos if x.is_zero() => Some(Rational::one()),
            ElemFn::Sin | ElemFn::Atan if x.is_zero() => Some(Rational::zero()),
            ElemFn::Ln if x.is_one() => Some(Rational::zero()),
            _ => None,
        }
    }
}

/// Values of coordinate symbols and of opaque applications (keyed by their printed form).
#[derive(Clone, Debug, PartialEq)]
pub struct PointAssignment<T> {
    pub coords: BTreeMap<CoordSymbol, T>,
    pub opaque: BTreeMap<String, T>,
}

pub type Point = PointAssignment<f64>;

impl<T> Default for PointAssignment<T> {
    fn default() -> Self {
        PointAssignment { coords: BTreeMap::new(), opaque: BTreeMap::new() }
    }
}

impl<T: Clone> PointAssignment<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, s: CoordSymbol, v: T) -> Self {
        self.coords.insert(s, v);
        self
    }

    pub fn set(&mut self, s: CoordSymbol, v: T) {
        self.coords.insert(s, v);
    }

    pub fn get(&self, s: &CoordSymbol) -> Option<&T> {
        self.coords.get(s)
    }
}

pub(crate) fn opaque_key(o: &Opaque) -> String {
    Expr::from_poly(Poly::from_atom(Atom::Opaque(std::sync::Arc::new(o.clone())))).to_string()
}

#[derive(Clone, Debug)]
enum Node {
    Sym(CoordSymbol),
    Opaque(String),
    Elem(ElemFn, usize),
    Sqrt(usize),
    Recip(usize),
    Sum(Vec<(Rational, Vec<(usize, i32)>)>),
}

/// An expression flattened into a shared-subterm evaluation program.
#[derive(Clone, Debug)]
pub struct Compiled {
    nodes: Vec<Node>,
    root: usize,
}

struct Builder {
    nodes: Vec<Node>,
    atoms: HashMap<Atom, usize>,
    polys: HashMap<Poly, usize>,
}

impl Builder {
    fn poly(&mut self, p: &Poly) -> usize {
        if let Some(&i) = self.polys.get(p) {
            return i;
        }
        let terms = p
            .terms
            .iter()
            .map(|(m, c)| (c.clone(), m.0.iter().map(|(a, e)| (self.atom(a), *e)).collect()))
            .collect();
        self.nodes.push(Node::Sum(terms));
        let i = self.nodes.len() - 1;
        self.polys.insert(p.clone(), i);
        i
    }

    fn atom(&mut self, a: &Atom) -> usize {
        if let Some(&i) = self.atoms.get(a) {
            return i;
        }
        let node = match a {
            Atom::Sym(s) => Node::Sym(s.clone()),
            Atom::Opaque(o) => Node::Opaque(opaque_key(o)),
            Atom::Elem(f, p) => Node::Elem(*f, self.poly(p)),
            Atom::Sqrt(p) => Node::Sqrt(self.poly(p)),
            Atom::Recip(p) => Node::Recip(self.poly(p)),
        };
        self.nodes.push(node);
        let i = self.nodes.len() - 1;
        self.atoms.insert(a.clone(), i);
        i
    }
}

fn powi<T: Scalar>(v: &T, e: i32) -> Option<T> {
    let mut base = if e < 0 {
        if v.is_zero() {
            return None;
        }
        T::one() / v.clone()
    } else {
        v.clone()
    };
    let mut k = e.unsigned_abs();
    let mut out = T::one();
    while k > 0 {
        if k & 1 == 1 {
            out = out * base.clone();
        }
        k >>= 1;
        if k > 0 {
            base = base.clone() * base;
        }
    }
    Some(out)
}

impl Compiled {
    pub fn new(e: &Expr) -> Compiled {
        let mut b = Builder { nodes: Vec::new(), atoms: HashMap::new(), polys: HashMap::new() };
        let root = b.poly(e.poly());
        Compiled { nodes: b.nodes, root }
    }

    /// Evaluates the program. Denominators with magnitude below `min_denominator`
    /// are reported as domain errors.
    pub fn eval_with<T: Scalar>(&self, p: &PointAssignment<T>, min_denominator: f64) -> Result<T, EvalError> {
        let mut vals: Vec<T> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let v = match n {
                Node::Sym(s) => p.coords.get(s).cloned().ok_or_else(|| EvalError::MissingSymbol(s.to_string()))?,
                Node::Opaque(k) => p.opaque.get(k).cloned().ok_or_else(|| EvalError::MissingSymbol(k.clone()))?,
                Node::Elem(f, i) => T::elem(*f, &vals[*i])
                    .ok_or_else(|| EvalError::Domain(format!("{} outside its domain", f.name())))?,
                Node::Sqrt(i) => vals[*i].sqrt_checked().ok_or_else(|| EvalError::Domain("negative sqrt argument".into()))?,
                Node::Recip(i) => {
                    let d = &vals[*i];
                    if d.is_zero() || d.to_f64().abs() < min_denominator {
                        return Err(EvalError::Domain("vanishing denominator".into()));
                    }
                    T::one() / d.clone()
                }
                Node::Sum(terms) => {
                    let mut acc = T::zero();
                    for (c, fs) in terms {
                        let mut t = T::from_rational(c);
                        for (i, e) in fs {
                            if *e < 0 && vals[*i].to_f64().abs() < min_denominator {
                                return Err(EvalError::Domain("vanishing denominator".into()));
                            }
                            t = t * powi(&vals[*i], *e).ok_or_else(|| EvalError::Domain("vanishing denominator".into()))?;
                        }
                        acc = acc + t;
                    }
                    acc
                }
            };
            if !v.is_finite_value() {
                return Err(EvalError::Overflow);
            }
            vals.push(v);
        }
        Ok(vals.swap_remove(self.root))
    }

    pub fn eval<T: Scalar>(&self, p: &PointAssignment<T>) -> Result<T, EvalError> {
        self.eval_with(p, 0.0)
    }
}

impl Expr {
    pub fn eval<T: Scalar>(&self, p: &PointAssignment<T>) -> Result<T, EvalError> {
        Compiled::new(self).eval(p)
    }

    /// Printed keys of every opaque application occurring in the expression.
    pub fn opaque_keys(&self) -> Vec<String> {
        let mut atoms = std::collections::BTreeSet::new();
        self.poly().atoms(&mut atoms);
        atoms
            .iter()
            .filter_map(|a| match a {
                Atom::Opaque(o) => Some(opaque_key(o)),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::int;

    #[test]
    fn basic_values() {
        let e = Expr::y1(1, 1) * Expr::y1(1, 1);
        let p = Point::new().with(CoordSymbol::Y1(1, 1), 3.0);
        assert_eq!(e.eval(&p).unwrap(), 9.0);
        let q = Point::new().with(CoordSymbol::Y1(1, 1), -1.0);
        assert!(matches!(Expr::y1(1, 1).sqrt().eval(&q), Err(EvalError::Domain(_))));
        assert!(matches!(e.eval(&Point::new()), Err(EvalError::MissingSymbol(_))));
    }

    #[test]
    fn exact_evaluation() {
        let e = (Expr::x(1) + Expr::one()).recip().unwrap() + Expr::x(1).sqrt();
        let p = PointAssignment::<Rational>::new().with(CoordSymbol::X(1), crate::expr::rational(9, 4));
        assert_eq!(e.eval(&p).unwrap(), crate::expr::rational(4, 13) + crate::expr::rational(3, 2));
        let _ = int(0);
    }

    #[test]
    fn f32_and_f64_agree() {
        let e = (Expr::x(1) * Expr::x(1) + Expr::one()).sqrt();
        let a: f64 = e.eval(&Point::new().with(CoordSymbol::X(1), 0.5)).unwrap();
        let b: f32 = e.eval(&PointAssignment::<f32>::new().with(CoordSymbol::X(1), 0.5)).unwrap();
        assert!((a - b as f64).abs() < 1e-6);
    }
}
