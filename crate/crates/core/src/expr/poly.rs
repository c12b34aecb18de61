//! Canonical sum-of-monomials representation.
//!
//! Atoms are symbols, opaque applications, elementary functions, square roots
//! and reciprocals `1/P` of primitive multi-term sums. Square roots carry
//! exponent 1 only (`sqrt(P)^2 = P`), reciprocals carry positive exponents.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::symbol::CoordSymbol;
use super::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElemFn {
    Exp,
    Ln,
    Sin,
    Cos,
    Atan,
}

impl ElemFn {
    pub fn name(self) -> &'static str {
        match self {
            ElemFn::Exp => "exp",
            ElemFn::Ln => "ln",
            ElemFn::Sin => "sin",
            ElemFn::Cos => "cos",
            ElemFn::Atan => "atan",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Opaque {
    pub name: Arc<str>,
    /// sorted 1-based argument positions of the partial derivative
    pub derivs: Vec<u8>,
    pub args: Vec<Poly>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Sym(CoordSymbol),
    Opaque(Arc<Opaque>),
    Elem(ElemFn, Arc<Poly>),
    Sqrt(Arc<Poly>),
    Recip(Arc<Poly>),
}

impl Atom {
    fn is_recip(&self) -> bool {
        matches!(self, Atom::Recip(_))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mono(pub Vec<(Atom, i32)>);

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    pub terms: BTreeMap<Mono, Rational>,
}

fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Formal product of monomials: exponents add, nothing is canonicalized.
fn merge(a: &[(Atom, i32)], b: &[(Atom, i32)], sign: i32) -> Vec<(Atom, i32)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push(a[i].clone());
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0.clone(), sign * b[j].1));
            j += 1;
        } else {
            let e = a[i].1 + sign * b[j].1;
            if e != 0 {
                out.push((a[i].0.clone(), e));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Lexicographic monomial order (a genuine monomial order for the division step).
fn lex_cmp(a: &[(Atom, i32)], b: &[(Atom, i32)]) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    let (mut i, mut j) = (0, 0);
    loop {
        match (a.get(i), b.get(j)) {
            (None, None) => return Equal,
            (Some((_, e)), None) => return e.cmp(&0),
            (None, Some((_, e))) => return 0.cmp(e),
            (Some((x, ex)), Some((y, ey))) => {
                if x < y {
                    return ex.cmp(&0);
                } else if y < x {
                    return 0.cmp(ey);
                } else if ex != ey {
                    return ex.cmp(ey);
                }
                i += 1;
                j += 1;
            }
        }
    }
}

fn needs_canon(m: &[(Atom, i32)]) -> bool {
    m.iter().any(|(a, e)| match a {
        Atom::Sqrt(_) => *e != 1,
        Atom::Recip(_) => *e <= 0,
        _ => false,
    })
}

fn exact_sqrt(r: &Rational) -> Option<Rational> {
    if r.is_negative() {
        return None;
    }
    let n = r.numer().sqrt();
    let d = r.denom().sqrt();
    if &(&n * &n) == r.numer() && &(&d * &d) == r.denom() {
        Some(Rational::new(n, d))
    } else {
        None
    }
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(c: Rational) -> Poly {
        let mut p = Poly::zero();
        p.add_term(Mono::default(), c);
        p
    }

    pub fn one() -> Poly {
        Poly::constant(rat(1))
    }

    pub fn sym(s: CoordSymbol) -> Poly {
        let mut p = Poly::zero();
        p.add_term(Mono(vec![(Atom::Sym(s), 1)]), rat(1));
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.0.is_empty().then(|| c.clone())
            }
            _ => None,
        }
    }

    fn add_term(&mut self, m: Mono, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    fn add_raw(&mut self, o: &Poly) {
        for (m, c) in &o.terms {
            self.add_term(m.clone(), c.clone());
        }
    }

    pub fn has_recip(&self) -> bool {
        self.terms.keys().any(|m| m.0.iter().any(|(a, _)| a.is_recip()))
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_raw(o);
        out.cancel()
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect(),
        }
    }

    pub fn neg(&self) -> Poly {
        self.scale(&rat(-1))
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.neg())
    }

    /// Canonical single term `c * prod a^e` for arbitrary integer exponents.
    pub fn build(c: Rational, exps: Vec<(Atom, i32)>) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        if !needs_canon(&exps) {
            let mut p = Poly::zero();
            p.add_term(Mono(exps.into_iter().filter(|(_, e)| *e != 0).collect()), c);
            return p;
        }
        let mut mono = Vec::new();
        let mut extra = Vec::new();
        for (a, e) in exps {
            if e == 0 {
                continue;
            }
            match &a {
                Atom::Sqrt(p) => {
                    let q = e.div_euclid(2);
                    if e.rem_euclid(2) == 1 {
                        mono.push((a.clone(), 1));
                    }
                    if q != 0 {
                        extra.push(p.powi(q).expect("sqrt base is nonzero"));
                    }
                }
                Atom::Recip(p) if e < 0 => extra.push(p.pow_u(e.unsigned_abs())),
                _ => mono.push((a, e)),
            }
        }
        let mut out = Poly::zero();
        out.add_term(Mono(mono), c);
        for x in extra {
            out = out.mul_nocancel(&x);
        }
        out
    }

    pub fn from_atom(a: Atom) -> Poly {
        Poly::build(rat(1), vec![(a, 1)])
    }

    fn mul_nocancel(&self, o: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &o.terms {
                let merged = merge(&m1.0, &m2.0, 1);
                let c = c1 * c2;
                if needs_canon(&merged) {
                    out.add_raw(&Poly::build(c, merged));
                } else {
                    out.add_term(Mono(merged), c);
                }
            }
        }
        out
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        self.mul_nocancel(o).cancel()
    }

    pub fn pow_u(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul_nocancel(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_nocancel(&base);
            }
        }
        out.cancel()
    }

    pub fn powi(&self, e: i32) -> Option<Poly> {
        if e >= 0 {
            Some(self.pow_u(e as u32))
        } else {
            Some(self.inverse()?.pow_u(e.unsigned_abs()))
        }
    }

    /// Leading term under the lexicographic monomial order.
    fn leading(&self) -> Option<(&Mono, &Rational)> {
        self.terms.iter().max_by(|a, b| lex_cmp(&a.0 .0, &b.0 .0))
    }

    /// The monomial of minimal exponents common to all terms.
    fn content_mono(&self) -> Vec<(Atom, i32)> {
        let mut mins: BTreeMap<Atom, i32> = BTreeMap::new();
        let mut seen: BTreeSet<Atom> = BTreeSet::new();
        for m in self.terms.keys() {
            for (a, _) in &m.0 {
                seen.insert(a.clone());
            }
        }
        for a in seen {
            let mut lo = i32::MAX;
            for m in self.terms.keys() {
                let e = m.0.iter().find(|(b, _)| *b == a).map(|x| x.1).unwrap_or(0);
                lo = lo.min(e);
            }
            if lo != 0 {
                mins.insert(a, lo);
            }
        }
        mins.into_iter().collect()
    }

    /// Formal division by a monomial (no canonicalization).
    fn div_mono_formal(&self, m: &[(Atom, i32)]) -> Poly {
        let mut out = Poly::zero();
        for (t, c) in &self.terms {
            out.add_term(Mono(merge(&t.0, m, -1)), c.clone());
        }
        out
    }

    pub fn inverse(&self) -> Option<Poly> {
        if self.is_zero() {
            return None;
        }
        if self.terms.len() == 1 {
            let (m, c) = self.terms.iter().next().unwrap();
            let exps = m.0.iter().map(|(a, e)| (a.clone(), -e)).collect();
            return Some(Poly::build(c.recip(), exps));
        }
        let g = self.content_mono();
        let shifted = self.div_mono_formal(&g);
        let lc = shifted.leading().unwrap().1.clone();
        let base = shifted.scale(&lc.recip());
        let ginv = g.iter().map(|(a, e)| (a.clone(), -e)).collect();
        let front = Poly::build(lc.recip(), ginv);
        Some(front.mul_nocancel(&Poly::from_atom(Atom::Recip(Arc::new(base)))).cancel())
    }

    pub fn sqrt(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        if let Some(c) = self.as_constant() {
            if let Some(r) = exact_sqrt(&c) {
                return Poly::constant(r);
            }
        }
        Poly::from_atom(Atom::Sqrt(Arc::new(self.clone())))
    }

    pub fn elem(&self, f: ElemFn) -> Poly {
        if self.is_zero() {
            return match f {
                ElemFn::Exp | ElemFn::Cos => Poly::one(),
                _ => Poly::zero(),
            };
        }
        if f == ElemFn::Ln && self.as_constant().is_some_and(|c| c.is_one()) {
            return Poly::zero();
        }
        let negative_lead = self.leading().is_some_and(|(_, c)| c.is_negative());
        match f {
            ElemFn::Sin | ElemFn::Atan if negative_lead => {
                Poly::from_atom(Atom::Elem(f, Arc::new(self.neg()))).neg()
            }
            ElemFn::Cos if negative_lead => Poly::from_atom(Atom::Elem(f, Arc::new(self.neg()))),
            _ => Poly::from_atom(Atom::Elem(f, Arc::new(self.clone()))),
        }
    }

    pub fn opaque(name: Arc<str>, derivs: Vec<u8>, args: Vec<Poly>) -> Poly {
        Poly::from_atom(Atom::Opaque(Arc::new(Opaque { name, derivs, args })))
    }

    /// Exact division `self / p` treating atoms as independent variables.
    /// `p` must be free of monomial content (as the bases of `Recip` atoms are).
    fn exact_div(&self, p: &Poly) -> Option<Poly> {
        let mut shift: Vec<(Atom, i32)> = self.content_mono();
        shift.retain(|(_, e)| *e < 0);
        let mut rem = self.div_mono_formal(&shift);
        let (plt, plc) = p.leading()?;
        let (plt, plc) = (plt.0.clone(), plc.clone());
        let mut quo = Poly::zero();
        let mut steps = 0usize;
        while !rem.is_zero() {
            steps += 1;
            if steps > 20_000 {
                return None;
            }
            let (rlt, rlc) = rem.leading().unwrap();
            let t = merge(&rlt.0, &plt, -1);
            if t.iter().any(|(_, e)| *e < 0) {
                return None;
            }
            let c = rlc / &plc;
            let mut tp = Poly::zero();
            for (m, k) in &p.terms {
                tp.add_term(Mono(merge(&m.0, &t, 1)), -(k * &c));
            }
            quo.add_term(Mono(t), c);
            rem.add_raw(&tp);
        }
        let neg_shift: Vec<(Atom, i32)> = shift.iter().map(|(a, e)| (a.clone(), -e)).collect();
        let mut out = Poly::zero();
        for (m, c) in &quo.div_mono_formal(&neg_shift).terms {
            out.add_raw(&Poly::build(c.clone(), m.0.clone()));
        }
        Some(out)
    }

    /// Cancels reciprocal atoms against divisible cofactors until nothing changes.
    pub fn cancel(self) -> Poly {
        let mut cur = self;
        for _ in 0..64 {
            if !cur.has_recip() {
                return cur;
            }
            let mut groups: BTreeMap<Vec<(Atom, i32)>, Poly> = BTreeMap::new();
            for (m, c) in &cur.terms {
                let (r, rest): (Vec<_>, Vec<_>) = m.0.iter().cloned().partition(|(a, _)| a.is_recip());
                groups.entry(r).or_default().add_term(Mono(rest), c.clone());
            }
            let mut changed = false;
            let mut out = Poly::zero();
            for (r, cof) in groups {
                let mut done = false;
                for (idx, (a, k)) in r.iter().enumerate() {
                    let Atom::Recip(p) = a else { unreachable!() };
                    if let Some(q) = cof.exact_div(p) {
                        let mut r2 = r.clone();
                        if *k == 1 {
                            r2.remove(idx);
                        } else {
                            r2[idx].1 -= 1;
                        }
                        out.add_raw(&Poly::build(rat(1), r2).mul_nocancel(&q));
                        done = true;
                        changed = true;
                        break;
                    }
                }
                if !done {
                    for (m, c) in &cof.terms {
                        out.add_term(Mono(merge(&m.0, &r, 1)), c.clone());
                    }
                }
            }
            cur = out;
            if !changed {
                return cur;
            }
        }
        cur
    }

    /// Brings every term over the common denominator of one reciprocal atom
    /// at a time and keeps the result when it is smaller.
    pub fn combine(self) -> Poly {
        let mut cur = self.cancel();
        let mut guard = 0;
        'outer: loop {
            guard += 1;
            if guard > 32 {
                return cur;
            }
            let mut bases: BTreeSet<Arc<Poly>> = BTreeSet::new();
            for m in cur.terms.keys() {
                for (a, _) in &m.0 {
                    if let Atom::Recip(p) = a {
                        bases.insert(p.clone());
                    }
                }
            }
            for p in bases {
                let key = Atom::Recip(p.clone());
                let kmax = cur
                    .terms
                    .keys()
                    .filter_map(|m| m.0.iter().find(|(a, _)| *a == key).map(|x| x.1))
                    .max()
                    .unwrap_or(0);
                // numerator over p^kmax
                let mut num = Poly::zero();
                let mut mixed = false;
                for (m, c) in &cur.terms {
                    let k = m.0.iter().find(|(a, _)| *a == key).map(|x| x.1).unwrap_or(0);
                    if k == 0 {
                        mixed = true;
                    }
                    let rest: Vec<_> = m.0.iter().filter(|(a, _)| *a != key).cloned().collect();
                    let t = Poly::build(c.clone(), rest);
                    num.add_raw(&t.mul_nocancel(&p.pow_u((kmax - k) as u32)));
                }
                if !mixed {
                    continue;
                }
                let cand = if num.is_zero() {
                    Poly::zero()
                } else {
                    num.mul_nocancel(&Poly::build(rat(1), vec![(key.clone(), kmax)])).cancel()
                };
                if cand.size() < cur.size() {
                    cur = cand;
                    continue 'outer;
                }
            }
            return cur;
        }
    }

    pub fn size(&self) -> usize {
        self.terms
            .keys()
            .map(|m| 1 + m.0.iter().map(|(a, _)| atom_size(a)).sum::<usize>())
            .sum::<usize>()
            .max(1)
    }

    pub fn diff(&self, s: &CoordSymbol) -> Poly {
        let mut cache: HashMap<Atom, Poly> = HashMap::new();
        self.diff_cached(s, &mut cache)
    }

    fn diff_cached(&self, s: &CoordSymbol, cache: &mut HashMap<Atom, Poly>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            for (i, (a, e)) in m.0.iter().enumerate() {
                let da = match cache.get(a) {
                    Some(d) => d.clone(),
                    None => {
                        let d = atom_diff(a, s, cache);
                        cache.insert(a.clone(), d.clone());
                        d
                    }
                };
                if da.is_zero() {
                    continue;
                }
                let mut rest = m.0.clone();
                rest[i].1 -= 1;
                let front = Poly::build(c * rat(*e as i64), rest);
                out.add_raw(&front.mul_nocancel(&da));
            }
        }
        out.cancel()
    }

    pub fn subs(&self, f: &dyn Fn(&CoordSymbol) -> Option<Poly>) -> Poly {
        let mut cache: HashMap<Atom, Poly> = HashMap::new();
        self.subs_cached(f, &mut cache)
    }

    fn subs_cached(&self, f: &dyn Fn(&CoordSymbol) -> Option<Poly>, cache: &mut HashMap<Atom, Poly>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut t = Poly::constant(c.clone());
            for (a, e) in &m.0 {
                let v = match cache.get(a) {
                    Some(v) => v.clone(),
                    None => {
                        let v = atom_subs(a, f, cache);
                        cache.insert(a.clone(), v.clone());
                        v
                    }
                };
                let pw = if *e >= 0 {
                    v.pow_u(*e as u32)
                } else {
                    v.inverse().expect("substitution produced a zero denominator").pow_u(e.unsigned_abs())
                };
                t = t.mul_nocancel(&pw);
                if t.is_zero() {
                    break;
                }
            }
            out.add_raw(&t);
        }
        out.cancel()
    }

    pub fn free_symbols(&self, out: &mut BTreeSet<CoordSymbol>) {
        for m in self.terms.keys() {
            for (a, _) in &m.0 {
                match a {
                    Atom::Sym(s) => {
                        out.insert(s.clone());
                    }
                    Atom::Opaque(o) => o.args.iter().for_each(|p| p.free_symbols(out)),
                    Atom::Elem(_, p) | Atom::Sqrt(p) | Atom::Recip(p) => p.free_symbols(out),
                }
            }
        }
    }

    pub fn atoms(&self, out: &mut BTreeSet<Atom>) {
        for m in self.terms.keys() {
            for (a, _) in &m.0 {
                if out.insert(a.clone()) {
                    match a {
                        Atom::Sym(_) => {}
                        Atom::Opaque(o) => o.args.iter().for_each(|p| p.atoms(out)),
                        Atom::Elem(_, p) | Atom::Sqrt(p) | Atom::Recip(p) => p.atoms(out),
                    }
                }
            }
        }
    }
}

fn atom_size(a: &Atom) -> usize {
    match a {
        Atom::Sym(_) => 1,
        Atom::Opaque(o) => 1 + o.args.iter().map(|p| p.size()).sum::<usize>(),
        Atom::Elem(_, p) | Atom::Sqrt(p) | Atom::Recip(p) => 1 + p.size(),
    }
}

fn atom_diff(a: &Atom, s: &CoordSymbol, cache: &mut HashMap<Atom, Poly>) -> Poly {
    match a {
        Atom::Sym(t) => {
            if t == s {
                Poly::one()
            } else {
                Poly::zero()
            }
        }
        Atom::Opaque(o) => {
            let mut out = Poly::zero();
            for (k, arg) in o.args.iter().enumerate() {
                let da = arg.diff_cached(s, cache);
                if da.is_zero() {
                    continue;
                }
                let mut d = o.derivs.clone();
                d.push(k as u8 + 1);
                d.sort_unstable();
                let f = Poly::opaque(o.name.clone(), d, o.args.clone());
                out.add_raw(&f.mul_nocancel(&da));
            }
            out
        }
        Atom::Elem(f, p) => {
            let dp = p.diff_cached(s, cache);
            if dp.is_zero() {
                return Poly::zero();
            }
            let outer = match f {
                ElemFn::Exp => Poly::from_atom(a.clone()),
                ElemFn::Ln => p.inverse().expect("ln of zero"),
                ElemFn::Sin => p.elem(ElemFn::Cos),
                ElemFn::Cos => p.elem(ElemFn::Sin).neg(),
                ElemFn::Atan => Poly::one().add(&p.mul(p)).inverse().expect("1+p^2 nonzero"),
            };
            outer.mul_nocancel(&dp)
        }
        Atom::Sqrt(p) => {
            let dp = p.diff_cached(s, cache);
            if dp.is_zero() {
                return Poly::zero();
            }
            let half_root = Poly::build(Rational::new(1.into(), 2.into()), vec![(a.clone(), 1)]);
            half_root.mul_nocancel(&p.inverse().expect("sqrt base nonzero")).mul_nocancel(&dp)
        }
        Atom::Recip(p) => {
            let dp = p.diff_cached(s, cache);
            if dp.is_zero() {
                return Poly::zero();
            }
            Poly::build(rat(-1), vec![(a.clone(), 2)]).mul_nocancel(&dp)
        }
    }
}

fn atom_subs(a: &Atom, f: &dyn Fn(&CoordSymbol) -> Option<Poly>, cache: &mut HashMap<Atom, Poly>) -> Poly {
    match a {
        Atom::Sym(s) => f(s).unwrap_or_else(|| Poly::sym(s.clone())),
        Atom::Opaque(o) => {
            let args = o.args.iter().map(|p| p.subs_cached(f, cache)).collect();
            Poly::opaque(o.name.clone(), o.derivs.clone(), args)
        }
        Atom::Elem(g, p) => p.subs_cached(f, cache).elem(*g),
        Atom::Sqrt(p) => p.subs_cached(f, cache).sqrt(),
        Atom::Recip(p) => p
            .subs_cached(f, cache)
            .inverse()
            .expect("substitution produced a zero denominator"),
    }
}
