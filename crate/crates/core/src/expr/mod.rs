//! Symbolic scalar expressions over jet and Grassmann coordinates.

mod equal;
mod eval;
mod parse;
mod poly;
mod print;
mod symbol;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

pub use equal::{equal, equal_guarded, EqualConfig, Equality, Witness};
pub use eval::{Compiled, EvalError, Point, PointAssignment, Scalar};
pub use parse::{parse, ParseError};
pub use poly::ElemFn;
pub use symbol::CoordSymbol;

pub(crate) use poly::{Atom, Poly};

pub type Rational = BigRational;

pub fn rational(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("expression size {size} exceeds node cap {cap}")]
    SizeLimit { size: usize, cap: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("determinant of size {0} exceeds the n <= 4 guard")]
    DeterminantTooLarge(usize),
}

/// Node cap for `normalize`, read from `LEPAGE_NODE_CAP` (default 500000).
pub fn node_cap() -> usize {
    std::env::var("LEPAGE_NODE_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(500_000)
}

/// Immutable symbolic scalar, always held in canonical form.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr(Arc<Poly>);

impl Expr {
    pub(crate) fn from_poly(p: Poly) -> Expr {
        Expr(Arc::new(p))
    }

    pub(crate) fn poly(&self) -> &Poly {
        &self.0
    }

    pub fn zero() -> Expr {
        Expr::default()
    }

    pub fn one() -> Expr {
        Expr::from_poly(Poly::one())
    }

    pub fn int(n: i64) -> Expr {
        Expr::constant(int(n))
    }

    pub fn constant(c: Rational) -> Expr {
        Expr::from_poly(Poly::constant(c))
    }

    pub fn rational(n: i64, d: i64) -> Expr {
        Expr::constant(rational(n, d))
    }

    pub fn sym(s: CoordSymbol) -> Expr {
        Expr::from_poly(Poly::sym(s))
    }

    pub fn x(i: u16) -> Expr {
        Expr::sym(CoordSymbol::X(i))
    }

    pub fn y(k: u16) -> Expr {
        Expr::sym(CoordSymbol::Y(k))
    }

    pub fn y1(k: u16, j: u16) -> Expr {
        Expr::sym(CoordSymbol::Y1(k, j))
    }

    pub fn y2(k: u16, i: u16, j: u16) -> Expr {
        Expr::sym(CoordSymbol::y2(k, i, j))
    }

    pub fn w(k: u16) -> Expr {
        Expr::sym(CoordSymbol::W(k))
    }

    pub fn w1(k: u16, j: u16) -> Expr {
        Expr::sym(CoordSymbol::W1(k, j))
    }

    pub fn param(name: &str) -> Expr {
        Expr::sym(CoordSymbol::param(name))
    }

    /// Application of an opaque smooth function.
    pub fn opaque(name: &str, args: Vec<Expr>) -> Expr {
        Expr::opaque_deriv(name, Vec::new(), args)
    }

    /// Partial derivative `F_{,derivs}(args)`; positions are 1-based and symmetrized.
    pub fn opaque_deriv(name: &str, mut derivs: Vec<u8>, args: Vec<Expr>) -> Expr {
        derivs.sort_unstable();
        Expr::from_poly(Poly::opaque(
            Arc::from(name),
            derivs,
            args.into_iter().map(|a| (*a.0).clone()).collect(),
        ))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_rational(&self) -> Option<Rational> {
        self.0.as_constant()
    }

    pub fn sqrt(&self) -> Expr {
        Expr::from_poly(self.0.sqrt())
    }

    pub fn elem(&self, f: ElemFn) -> Expr {
        Expr::from_poly(self.0.elem(f))
    }

    pub fn exp(&self) -> Expr {
        self.elem(ElemFn::Exp)
    }

    pub fn ln(&self) -> Expr {
        self.elem(ElemFn::Ln)
    }

    pub fn sin(&self) -> Expr {
        self.elem(ElemFn::Sin)
    }

    pub fn cos(&self) -> Expr {
        self.elem(ElemFn::Cos)
    }

    /// tan(u) = sin(u)·cos(u)⁻¹
    pub fn tan(&self) -> Expr {
        let c = self.cos().recip().expect("cos of a nonzero expression is an atom");
        self.sin() * c
    }

    pub fn atan(&self) -> Expr {
        self.elem(ElemFn::Atan)
    }

    pub fn recip(&self) -> Result<Expr, ExprError> {
        self.0.inverse().map(Expr::from_poly).ok_or(ExprError::DivisionByZero)
    }

    pub fn pow(&self, e: i32) -> Result<Expr, ExprError> {
        self.0.powi(e).map(Expr::from_poly).ok_or(ExprError::DivisionByZero)
    }

    pub fn checked_div(&self, o: &Expr) -> Result<Expr, ExprError> {
        Ok(self * &o.recip()?)
    }

    pub fn scale(&self, c: &Rational) -> Expr {
        Expr::from_poly(self.0.scale(c))
    }

    pub fn diff(&self, s: &CoordSymbol) -> Expr {
        Expr::from_poly(self.0.diff(s))
    }

    /// Simultaneous substitution.
    pub fn subs(&self, map: &BTreeMap<CoordSymbol, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        Expr::from_poly(self.0.subs(&|s| map.get(s).map(|e| (*e.0).clone())))
    }

    pub fn subs_fn(&self, f: &dyn Fn(&CoordSymbol) -> Option<Expr>) -> Expr {
        Expr::from_poly(self.0.subs(&|s| f(s).map(|e| (*e.0).clone())))
    }

    pub fn free_symbols(&self) -> BTreeSet<CoordSymbol> {
        let mut out = BTreeSet::new();
        self.0.free_symbols(&mut out);
        out
    }

    pub fn depends_on(&self, pred: impl Fn(&CoordSymbol) -> bool) -> bool {
        self.free_symbols().iter().any(pred)
    }

    pub fn has_opaque(&self) -> bool {
        let mut atoms = BTreeSet::new();
        self.0.atoms(&mut atoms);
        atoms.iter().any(|a| matches!(a, Atom::Opaque(_)))
    }

    /// Number of nodes of the canonical tree.
    pub fn size(&self) -> usize {
        self.0.size()
    }

    pub fn to_latex(&self) -> String {
        print::latex(&self.0)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(it: I) -> Expr {
        let mut acc = Poly::zero();
        for e in it {
            acc = acc.add(&e.0);
        }
        Expr::from_poly(acc)
    }

    pub fn product<I: IntoIterator<Item = Expr>>(it: I) -> Expr {
        let mut acc = Poly::one();
        for e in it {
            acc = acc.mul(&e.0);
            if acc.is_zero() {
                break;
            }
        }
        Expr::from_poly(acc)
    }
}

/// Canonical normal form with reciprocal cancellation and the node-cap guard.
pub fn normalize(e: &Expr) -> Result<Expr, ExprError> {
    let cap = node_cap();
    let size = e.size();
    if size > cap {
        return Err(ExprError::SizeLimit { size, cap });
    }
    let out = e.0.as_ref().clone().combine();
    let size = out.size();
    if size > cap {
        return Err(ExprError::SizeLimit { size, cap });
    }
    Ok(Expr::from_poly(out))
}

/// Expanded determinant of a square matrix by Levi-Civita sum (n <= 4).
pub fn det(m: &[Vec<Expr>]) -> Result<Expr, ExprError> {
    let n = m.len();
    if n > 4 {
        return Err(ExprError::DeterminantTooLarge(n));
    }
    let mut acc = Expr::zero();
    for (perm, sign) in permutations(n) {
        let t = Expr::product((0..n).map(|r| m[r][perm[r]].clone()));
        acc = if sign > 0 { acc + t } else { acc - t };
    }
    Ok(acc)
}

/// All permutations of 0..n with their signs.
pub fn permutations(n: usize) -> Vec<(Vec<usize>, i32)> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out.into_iter()
        .map(|p| {
            let s = perm_sign(&p);
            (p, s)
        })
        .collect()
}

/// Sign of a sequence of distinct comparable items (0 if any repeat).
pub fn perm_sign<T: Ord>(p: &[T]) -> i32 {
    let mut s = 1;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            match p[i].cmp(&p[j]) {
                std::cmp::Ordering::Greater => s = -s,
                std::cmp::Ordering::Equal => return 0,
                _ => {}
            }
        }
    }
    s
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::dsl(&self.0))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Expr {
        Expr::int(n)
    }
}

impl From<CoordSymbol> for Expr {
    fn from(s: CoordSymbol) -> Expr {
        Expr::sym(s)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, o: &Expr) -> Expr {
                let f: fn(&Poly, &Poly) -> Poly = $body;
                Expr::from_poly(f(&self.0, &o.0))
            }
        }
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                (&self).$m(&o)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, o: &Expr) -> Expr {
                (&self).$m(o)
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, o: Expr) -> Expr {
                self.$m(&o)
            }
        }
    };
}

binop!(Add, add, |a, b| a.add(b));
binop!(Sub, sub, |a, b| a.sub(b));
binop!(Mul, mul, |a, b| a.mul(b));

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::from_poly(self.0.neg())
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::from_poly(self.0.neg())
    }
}


impl std::ops::Div<&Expr> for Expr {
    type Output = Expr;
    /// Panics on a symbolically zero divisor; use `checked_div` otherwise.
    fn div(self, o: &Expr) -> Expr {
        self.checked_div(o).expect("division by symbolic zero")
    }
}

impl std::ops::Div<Expr> for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        self / &o
    }
}
