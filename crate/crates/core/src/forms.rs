//! Exterior forms over jet and Grassmann charts.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{AdaptedChart, ChartError};
use crate::expr::{equal, int, perm_sign, permutations, rational, CoordSymbol, EqualConfig, Equality, Expr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("mixed basis modes {0:?} and {1:?}")]
    ModeMismatch(Mode, Mode),
    #[error("contraction of a 0-form")]
    DegreeZero,
    #[error("covector {0} needs jets beyond order 2")]
    UnsupportedOrder(String),
    #[error("covector {0} is not valid in {1:?} mode")]
    InvalidCovector(String, Mode),
    #[error("immersion is singular at {0}")]
    SingularImmersion(String),
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// A basis 1-form. Contact forms ω^K = dy^K − y^K_l dx^l and
/// ω^K_j = dy^K_j − y^K_jl dx^l are kept atomic in contact mode.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Covector {
    /// differential of a coordinate: dx^i, dy^K, dy^K_j, dw^K, dw^σ_i
    D(CoordSymbol),
    Omega(u16),
    OmegaJ(u16, u16),
}

impl Covector {
    pub fn dx(i: u16) -> Covector {
        Covector::D(CoordSymbol::X(i))
    }

    pub fn dy(k: u16) -> Covector {
        Covector::D(CoordSymbol::Y(k))
    }

    pub fn dy1(k: u16, j: u16) -> Covector {
        Covector::D(CoordSymbol::Y1(k, j))
    }

    pub fn dw(k: u16) -> Covector {
        Covector::D(CoordSymbol::W(k))
    }

    pub fn dw1(k: u16, i: u16) -> Covector {
        Covector::D(CoordSymbol::W1(k, i))
    }

    pub fn is_contact(&self) -> bool {
        matches!(self, Covector::Omega(_) | Covector::OmegaJ(..))
    }

    pub fn id(&self) -> String {
        match self {
            Covector::D(s) => format!("d{s}"),
            Covector::Omega(k) => format!("om{k}"),
            Covector::OmegaJ(k, j) => format!("om{k}_{j}"),
        }
    }

    pub fn latex(&self) -> String {
        match self {
            Covector::D(s) => format!("d{}", s.latex()),
            Covector::Omega(k) => format!("\\omega^{{{k}}}"),
            Covector::OmegaJ(k, j) => format!("\\omega^{{{k}}}_{{{j}}}"),
        }
    }

    fn valid_in(&self, mode: Mode) -> bool {
        use CoordSymbol::*;
        match (mode, self) {
            (_, Covector::D(X(_))) => mode != Mode::Grassmann,
            (Mode::Coordinate, Covector::D(Y(_) | Y1(..) | Y2(..))) => true,
            (Mode::Contact, Covector::Omega(_) | Covector::OmegaJ(..)) => true,
            (Mode::Grassmann, Covector::D(W(_) | W1(..) | W2(..))) => true,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Coordinate,
    Contact,
    Grassmann,
}

/// Tangent vector by components along ∂/∂s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vector {
    pub comps: BTreeMap<CoordSymbol, Expr>,
}

impl Vector {
    pub fn new() -> Vector {
        Vector::default()
    }

    pub fn basis(s: CoordSymbol) -> Vector {
        Vector::new().with(s, Expr::one())
    }

    pub fn with(mut self, s: CoordSymbol, e: Expr) -> Vector {
        if !e.is_zero() {
            self.comps.insert(s, e);
        }
        self
    }

    fn comp(&self, s: &CoordSymbol) -> Expr {
        self.comps.get(s).cloned().unwrap_or_default()
    }

    /// Value of a basis covector on this vector.
    pub fn pair(&self, c: &Covector) -> Expr {
        match c {
            Covector::D(s) => self.comp(s),
            Covector::Omega(k) => {
                let mut v = self.comp(&CoordSymbol::Y(*k));
                for (s, e) in &self.comps {
                    if let CoordSymbol::X(l) = s {
                        v = v - Expr::y1(*k, *l) * e;
                    }
                }
                v
            }
            Covector::OmegaJ(k, j) => {
                let mut v = self.comp(&CoordSymbol::Y1(*k, *j));
                for (s, e) in &self.comps {
                    if let CoordSymbol::X(l) = s {
                        v = v - Expr::y2(*k, *j, *l) * e;
                    }
                }
                v
            }
        }
    }
}

/// Sorts a word, returning the permutation sign (0 if a covector repeats).
fn sort_word(mut w: Vec<Covector>) -> (Vec<Covector>, i32) {
    let s = perm_sign(&w);
    if s == 0 {
        return (w, 0);
    }
    w.sort();
    (w, s)
}

/// Graded exterior form: coefficient per strictly increasing wedge word.
#[derive(Clone, PartialEq)]
pub struct DiffForm {
    pub degree: usize,
    pub mode: Mode,
    pub terms: BTreeMap<Vec<Covector>, Expr>,
}

impl DiffForm {
    pub fn zero(degree: usize, mode: Mode) -> DiffForm {
        DiffForm { degree, mode, terms: BTreeMap::new() }
    }

    pub fn scalar(e: Expr, mode: Mode) -> DiffForm {
        let mut f = DiffForm::zero(0, mode);
        f.add_word(Vec::new(), e);
        f
    }

    pub fn covector(c: Covector, mode: Mode) -> DiffForm {
        let mut f = DiffForm::zero(1, mode);
        f.add_word(vec![c], Expr::one());
        f
    }

    /// ω_0 = dx^1∧…∧dx^n.
    pub fn volume(n: u16, mode: Mode) -> DiffForm {
        let mut f = DiffForm::zero(n as usize, mode);
        f.add_word((1..=n).map(Covector::dx).collect(), Expr::one());
        f
    }

    /// ω_j = i_{∂/∂x^j} ω_0.
    pub fn volume_j(n: u16, j: u16, mode: Mode) -> DiffForm {
        let mut f = DiffForm::zero(n as usize - 1, mode);
        let sign = if (j - 1) % 2 == 0 { 1 } else { -1 };
        f.add_word((1..=n).filter(|&i| i != j).map(Covector::dx).collect(), Expr::int(sign));
        f
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `coeff · c1∧…∧cq` for an arbitrary (unsorted) word.
    pub fn add_word(&mut self, word: Vec<Covector>, coeff: Expr) {
        if coeff.is_zero() {
            return;
        }
        let (w, s) = sort_word(word);
        if s == 0 {
            return;
        }
        let c = if s > 0 { coeff } else { -coeff };
        let entry = self.terms.entry(w).or_default();
        *entry = &*entry + &c;
        if entry.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    /// Coefficient of an arbitrary word (sign-adjusted, 0 on repeats).
    pub fn coeff(&self, word: &[Covector]) -> Expr {
        let (w, s) = sort_word(word.to_vec());
        match (s, self.terms.get(&w)) {
            (0, _) | (_, None) => Expr::zero(),
            (1, Some(c)) => c.clone(),
            (_, Some(c)) => -c,
        }
    }

    fn is_horizontal(&self) -> bool {
        self.terms.keys().all(|w| w.iter().all(|c| matches!(c, Covector::D(CoordSymbol::X(_)))))
    }

    fn check_mode(&self, o: &DiffForm) -> Result<Mode, FormError> {
        if self.mode == o.mode || o.is_horizontal() {
            Ok(self.mode)
        } else if self.is_horizontal() {
            Ok(o.mode)
        } else {
            Err(FormError::ModeMismatch(self.mode, o.mode))
        }
    }

    pub fn validate(&self) -> Result<(), FormError> {
        for w in self.terms.keys() {
            if w.len() != self.degree {
                return Err(FormError::InvalidCovector(format!("word of length {}", w.len()), self.mode));
            }
            for c in w {
                if !c.valid_in(self.mode) {
                    return Err(FormError::InvalidCovector(c.id(), self.mode));
                }
            }
        }
        Ok(())
    }

    pub fn add(&self, o: &DiffForm) -> Result<DiffForm, FormError> {
        let mode = self.check_mode(o)?;
        let mut out = self.clone();
        out.mode = mode;
        if self.is_zero() {
            out.degree = o.degree;
        }
        for (w, c) in &o.terms {
            out.add_word(w.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, o: &DiffForm) -> Result<DiffForm, FormError> {
        self.add(&o.scale(&Expr::int(-1)))
    }

    pub fn scale(&self, e: &Expr) -> DiffForm {
        let mut out = DiffForm::zero(self.degree, self.mode);
        for (w, c) in &self.terms {
            out.add_word(w.clone(), c * e);
        }
        out
    }

    pub fn map_coeffs(&self, f: impl Fn(&Expr) -> Expr) -> DiffForm {
        let mut out = DiffForm::zero(self.degree, self.mode);
        for (w, c) in &self.terms {
            out.add_word(w.clone(), f(c));
        }
        out
    }

    pub fn wedge(&self, o: &DiffForm) -> Result<DiffForm, FormError> {
        let mode = self.check_mode(o)?;
        let mut out = DiffForm::zero(self.degree + o.degree, mode);
        for (w1, c1) in &self.terms {
            for (w2, c2) in &o.terms {
                let mut w = w1.clone();
                w.extend(w2.iter().cloned());
                out.add_word(w, c1 * c2);
            }
        }
        Ok(out)
    }

    /// Interior product i_X.
    pub fn contract(&self, x: &Vector) -> Result<DiffForm, FormError> {
        if self.degree == 0 {
            return Err(FormError::DegreeZero);
        }
        let mut out = DiffForm::zero(self.degree - 1, self.mode);
        for (w, c) in &self.terms {
            for r in 0..w.len() {
                let v = x.pair(&w[r]);
                if v.is_zero() {
                    continue;
                }
                let mut rest = w.clone();
                rest.remove(r);
                let t = c * &v;
                out.add_word(rest, if r % 2 == 0 { t } else { -t });
            }
        }
        Ok(out)
    }

    /// Exterior derivative; contact-mode input is converted to coordinates first.
    pub fn ext_d(&self) -> Result<DiffForm, FormError> {
        let src = if self.mode == Mode::Contact { self.to_coordinate()? } else { self.clone() };
        let mode = src.mode;
        let mut out = DiffForm::zero(src.degree + 1, mode);
        for (w, c) in &src.terms {
            for s in c.free_symbols() {
                let differential = match (&s, mode) {
                    (CoordSymbol::X(_) | CoordSymbol::Y(_) | CoordSymbol::Y1(..) | CoordSymbol::Y2(..), Mode::Coordinate) => true,
                    (CoordSymbol::W(_) | CoordSymbol::W1(..) | CoordSymbol::W2(..), Mode::Grassmann) => true,
                    (CoordSymbol::X(_), Mode::Grassmann) => true,
                    _ => false,
                };
                if !differential {
                    continue;
                }
                let d = c.diff(&s);
                let mut word = vec![Covector::D(s)];
                word.extend(w.iter().cloned());
                out.add_word(word, d);
            }
        }
        if src.mode == Mode::Grassmann && out.terms.keys().any(|w| w.iter().any(|c| matches!(c, Covector::D(CoordSymbol::X(_))))) {
            return Err(FormError::InvalidCovector("dx".into(), Mode::Grassmann));
        }
        Ok(out)
    }

    /// Lie derivative by Cartan's formula ∂_X = i_X d + d i_X.
    pub fn lie_derivative(&self, x: &Vector) -> Result<DiffForm, FormError> {
        let src = if self.mode == Mode::Contact { self.to_coordinate()? } else { self.clone() };
        let a = src.ext_d()?.contract(x)?;
        if src.degree == 0 {
            return Ok(a);
        }
        let b = src.contract(x)?.ext_d()?;
        a.add(&b)
    }

    /// Horizontalization h (output in coordinate mode, possibly order 2).
    pub fn horizontalize(&self, n: u16) -> Result<DiffForm, FormError> {
        let mut out = DiffForm::zero(self.degree, Mode::Coordinate);
        for (w, c) in &self.terms {
            let mut acc = DiffForm::scalar(c.clone(), Mode::Coordinate);
            for cv in w {
                let one = match cv {
                    Covector::Omega(_) | Covector::OmegaJ(..) => {
                        acc = DiffForm::zero(0, Mode::Coordinate);
                        break;
                    }
                    Covector::D(CoordSymbol::X(_)) => DiffForm::covector(cv.clone(), Mode::Coordinate),
                    Covector::D(CoordSymbol::Y(k)) => horizontal_one(n, |l| Expr::y1(*k, l)),
                    Covector::D(CoordSymbol::Y1(k, j)) => horizontal_one(n, |l| Expr::y2(*k, *j, l)),
                    other => return Err(FormError::UnsupportedOrder(other.id())),
                };
                acc = acc.wedge(&one)?;
            }
            if !acc.is_zero() {
                out = out.add(&acc)?;
            }
        }
        out.degree = self.degree;
        Ok(out)
    }

    /// k-contact component p_k in contact mode.
    pub fn contact_component(&self, k: usize) -> Result<DiffForm, FormError> {
        let c = self.to_contact()?;
        let mut out = DiffForm::zero(self.degree, Mode::Contact);
        for (w, e) in &c.terms {
            if w.iter().filter(|v| v.is_contact()).count() == k {
                out.add_word(w.clone(), e.clone());
            }
        }
        Ok(out)
    }

    pub fn convert(&self, target: Mode) -> Result<DiffForm, FormError> {
        match (self.mode, target) {
            (a, b) if a == b => Ok(self.clone()),
            (Mode::Coordinate, Mode::Contact) => self.to_contact(),
            (Mode::Contact, Mode::Coordinate) => self.to_coordinate(),
            (a, b) => Err(FormError::ModeMismatch(a, b)),
        }
    }

    fn has_jet_covectors(&self) -> bool {
        self.terms.keys().any(|w| {
            w.iter()
                .any(|c| matches!(c, Covector::D(CoordSymbol::Y1(..) | CoordSymbol::Y2(..)) | Covector::OmegaJ(..)))
        })
    }

    pub fn to_contact(&self) -> Result<DiffForm, FormError> {
        match self.mode {
            Mode::Contact => Ok(self.clone()),
            Mode::Coordinate if !self.has_jet_covectors() => lemma_convert(self, Mode::Contact),
            Mode::Coordinate => convert_by_expansion(self, Mode::Contact),
            Mode::Grassmann => Err(FormError::ModeMismatch(Mode::Grassmann, Mode::Contact)),
        }
    }

    pub fn to_coordinate(&self) -> Result<DiffForm, FormError> {
        match self.mode {
            Mode::Coordinate => Ok(self.clone()),
            Mode::Contact if !self.has_jet_covectors() => lemma_convert(self, Mode::Coordinate),
            Mode::Contact => convert_by_expansion(self, Mode::Coordinate),
            Mode::Grassmann => Err(FormError::ModeMismatch(Mode::Grassmann, Mode::Coordinate)),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "degree": self.degree,
            "mode": self.mode,
            "terms": self.terms.iter().map(|(w, c)| serde_json::json!({
                "word": w.iter().map(|v| v.id()).collect::<Vec<_>>(),
                "coeff": c.to_string(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_latex(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(w, c)| {
                let word: Vec<String> = w.iter().map(|v| v.latex()).collect();
                format!("\\left({}\\right) {}", c.to_latex(), word.join(" \\wedge "))
            })
            .collect();
        parts.join(" + ")
    }
}

impl fmt::Display for DiffForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(w, c)| {
                let word: Vec<String> = w.iter().map(|v| v.id()).collect();
                if word.is_empty() {
                    format!("({c})")
                } else {
                    format!("({c})*{}", word.join("^"))
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Debug for DiffForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiffForm[{}; {:?}]({self})", self.degree, self.mode)
    }
}

fn horizontal_one(n: u16, coeff: impl Fn(u16) -> Expr) -> DiffForm {
    let mut f = DiffForm::zero(1, Mode::Coordinate);
    for l in 1..=n {
        f.add_word(vec![Covector::dx(l)], coeff(l));
    }
    f
}

/// Basis change by direct substitution of dy = ω + y dx (or its inverse).
/// Used for forms with jet covectors and as an independent oracle for the
/// coefficient formulas.
pub fn convert_by_expansion(a: &DiffForm, target: Mode) -> Result<DiffForm, FormError> {
    let n = max_base_index(a);
    let mut out = DiffForm::zero(a.degree, target);
    for (w, c) in &a.terms {
        let mut acc = DiffForm::scalar(c.clone(), target);
        for cv in w {
            let mut one = DiffForm::zero(1, target);
            match (cv, target) {
                (Covector::D(CoordSymbol::X(_)), _) => one.add_word(vec![cv.clone()], Expr::one()),
                (Covector::D(CoordSymbol::Y(k)), Mode::Contact) => {
                    one.add_word(vec![Covector::Omega(*k)], Expr::one());
                    for l in 1..=n {
                        one.add_word(vec![Covector::dx(l)], Expr::y1(*k, l));
                    }
                }
                (Covector::D(CoordSymbol::Y1(k, j)), Mode::Contact) => {
                    one.add_word(vec![Covector::OmegaJ(*k, *j)], Expr::one());
                    for l in 1..=n {
                        one.add_word(vec![Covector::dx(l)], Expr::y2(*k, *j, l));
                    }
                }
                (Covector::Omega(k), Mode::Coordinate) => {
                    one.add_word(vec![Covector::dy(*k)], Expr::one());
                    for l in 1..=n {
                        one.add_word(vec![Covector::dx(l)], -Expr::y1(*k, l));
                    }
                }
                (Covector::OmegaJ(k, j), Mode::Coordinate) => {
                    one.add_word(vec![Covector::dy1(*k, *j)], Expr::one());
                    for l in 1..=n {
                        one.add_word(vec![Covector::dx(l)], -Expr::y2(*k, *j, l));
                    }
                }
                (other, _) => return Err(FormError::InvalidCovector(other.id(), a.mode)),
            }
            acc = acc.wedge(&one)?;
        }
        out = out.add(&acc)?;
    }
    out.degree = a.degree;
    out.mode = target;
    Ok(out)
}

thread_local! {
    static BASE_DIM: std::cell::Cell<u16> = const { std::cell::Cell::new(0) };
}

/// Runs `f` with the base dimension used by basis conversions fixed to `n`.
///
/// Forms do not carry their chart; conversions otherwise infer n from the
/// largest base index present in words and coefficients.
pub fn with_base_dim<R>(n: u16, f: impl FnOnce() -> R) -> R {
    let prev = BASE_DIM.with(|c| c.replace(n));
    let out = f();
    BASE_DIM.with(|c| c.set(prev));
    out
}

fn max_base_index(a: &DiffForm) -> u16 {
    let fixed = BASE_DIM.with(|c| c.get());
    if fixed > 0 {
        return fixed;
    }
    let mut n = 0;
    for (w, c) in &a.terms {
        for cv in w {
            if let Covector::D(CoordSymbol::X(i)) = cv {
                n = n.max(*i);
            }
            if let Covector::D(CoordSymbol::Y1(_, j)) | Covector::OmegaJ(_, j) = cv {
                n = n.max(*j);
            }
        }
        for s in c.free_symbols() {
            match s {
                CoordSymbol::X(i) | CoordSymbol::Y1(_, i) => n = n.max(i),
                CoordSymbol::Y2(_, i, j) => n = n.max(i).max(j),
                _ => {}
            }
        }
    }
    n.max(1)
}

fn max_fiber_index(a: &DiffForm) -> u16 {
    let mut m = 0;
    for w in a.terms.keys() {
        for cv in w {
            if let Covector::D(CoordSymbol::Y(k)) | Covector::Omega(k) = cv {
                m = m.max(*k);
            }
        }
    }
    m
}

fn binomial(n: usize, k: usize) -> i64 {
    if k > n {
        return 0;
    }
    let mut r: i64 = 1;
    for i in 0..k {
        r = r * (n - i) as i64 / (i + 1) as i64;
    }
    r
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// All tuples in [1..=m]^len.
fn tuples(m: u16, len: usize) -> Vec<Vec<u16>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for t in &out {
            for v in 1..=m {
                let mut u = t.clone();
                u.push(v);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

fn increasing(m: u16, len: usize) -> Vec<Vec<u16>> {
    crate::charts::combinations(m, len)
}

/// Coordinate ↔ contact conversion of π^{1,0}-horizontal forms by the
/// skew-symmetric coefficient formulas
///   B_{K1..Kk i..} = Σ_l C(q−k, q−l) A_{K1..Kl i_{l+1}..} y^{K_{k+1}}_{i_{k+1}}…y^{K_l}_{i_l} Alt(i_{k+1}..i_q)
/// and the inverse with weights (−1)^{l−k} C(q−k, q−l).
pub fn lemma_convert(a: &DiffForm, target: Mode) -> Result<DiffForm, FormError> {
    let n = max_base_index(a);
    let big_m = max_fiber_index(a);
    let q = a.degree;
    let (src_fiber, dst_fiber): (fn(u16) -> Covector, fn(u16) -> Covector) = match (a.mode, target) {
        (Mode::Coordinate, Mode::Contact) => (Covector::dy, Covector::Omega),
        (Mode::Contact, Mode::Coordinate) => (Covector::Omega, Covector::dy),
        (s, t) => return Err(FormError::ModeMismatch(s, t)),
    };
    let inverse = a.mode == Mode::Contact;
    for w in a.terms.keys() {
        for c in w {
            if !c.valid_in(a.mode) {
                return Err(FormError::InvalidCovector(c.id(), a.mode));
            }
        }
    }
    // coefficient of the canonically ordered word ω^{K..}∧dx^{i..} in the source basis
    let src = |ks: &[u16], is: &[u16]| -> Expr {
        let mut w: Vec<Covector> = ks.iter().map(|&k| src_fiber(k)).collect();
        w.extend(is.iter().map(|&i| Covector::dx(i)));
        a.coeff(&w)
    };
    let mut out = DiffForm::zero(q, target);
    if big_m == 0 {
        // purely horizontal
        for (w, c) in &a.terms {
            out.add_word(w.clone(), c.clone());
        }
        return Ok(out);
    }
    for k in 0..=q.min(big_m as usize) {
        if q - k > n as usize {
            continue;
        }
        let perms = permutations(q - k);
        let alt = rational(1, factorial(q - k));
        for ks in increasing(big_m, k) {
            for is in increasing(n, q - k) {
                let mut total = Expr::zero();
                for l in k..=q {
                    let mut weight = binomial(q - k, q - l);
                    if inverse && (l - k) % 2 == 1 {
                        weight = -weight;
                    }
                    if weight == 0 {
                        continue;
                    }
                    let mut inner = Expr::zero();
                    for (perm, sgn) in &perms {
                        let t: Vec<u16> = perm.iter().map(|&p| is[p]).collect();
                        for extra in tuples(big_m, l - k) {
                            let mut kk = ks.clone();
                            kk.extend(extra.iter().cloned());
                            let coef = src(&kk, &t[l - k..]);
                            if coef.is_zero() {
                                continue;
                            }
                            let ys = Expr::product(extra.iter().zip(&t[..l - k]).map(|(&kx, &ix)| Expr::y1(kx, ix)));
                            let term = coef * ys;
                            inner = if *sgn > 0 { inner + term } else { inner - term };
                        }
                    }
                    total = total + inner.scale(&(int(weight) * &alt));
                }
                let mut w: Vec<Covector> = ks.iter().map(|&k| dst_fiber(k)).collect();
                w.extend(is.iter().map(|&i| Covector::dx(i)));
                out.add_word(w, total);
            }
        }
    }
    Ok(out)
}

/// Closed-form immersion x ↦ (ζ^1(x), …, ζ^M(x)).
#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionSpec {
    pub n: u16,
    pub comps: Vec<Expr>,
}

impl ImmersionSpec {
    pub fn new(n: u16, comps: Vec<Expr>) -> ImmersionSpec {
        ImmersionSpec { n, comps }
    }

    /// Graph x ↦ (x^1, …, x^n, u^1(x), …).
    pub fn graph(n: u16, us: Vec<Expr>) -> ImmersionSpec {
        let mut comps: Vec<Expr> = (1..=n).map(Expr::x).collect();
        comps.extend(us);
        ImmersionSpec { n, comps }
    }

    pub fn jet1(&self, k: u16, j: u16) -> Expr {
        self.comps[(k - 1) as usize].diff(&CoordSymbol::X(j))
    }

    pub fn jet2(&self, k: u16, i: u16, j: u16) -> Expr {
        self.jet1(k, i).diff(&CoordSymbol::X(j))
    }

    /// y-coordinates and their jets along the prolongation.
    pub fn jet_substitution(&self) -> BTreeMap<CoordSymbol, Expr> {
        let mut map = BTreeMap::new();
        for (idx, c) in self.comps.iter().enumerate() {
            let k = idx as u16 + 1;
            map.insert(CoordSymbol::Y(k), c.clone());
            for j in 1..=self.n {
                map.insert(CoordSymbol::Y1(k, j), self.jet1(k, j));
                for l in j..=self.n {
                    map.insert(CoordSymbol::Y2(k, j, l), self.jet2(k, j, l));
                }
            }
        }
        map
    }

    /// Adapted Grassmann coordinates of the prolongation G¹ζ.
    pub fn grassmann_substitution(&self, ac: &AdaptedChart) -> BTreeMap<CoordSymbol, Expr> {
        let jets = self.jet_substitution();
        ac.to_adapted()
            .into_iter()
            .filter(|(s, _)| s.is_w_family())
            .map(|(s, e)| (s, e.subs(&jets)))
            .collect()
    }

    /// Fails unless some (i)-minor of the Jacobian is nonzero at each point.
    pub fn check_regular(&self, points: &[Vec<f64>]) -> Result<(), FormError> {
        let big_m = self.comps.len() as u16;
        for p in points {
            let mut pt = crate::expr::Point::new();
            for (i, v) in p.iter().enumerate() {
                pt.set(CoordSymbol::X(i as u16 + 1), *v);
            }
            let mut jets = crate::expr::Point::new();
            for k in 1..=big_m {
                for j in 1..=self.n {
                    let v = self.jet1(k, j).eval(&pt).map_err(|e| FormError::SingularImmersion(e.to_string()))?;
                    jets.set(CoordSymbol::Y1(k, j), v);
                }
            }
            let chart = crate::charts::JetChart::new(self.n, big_m - self.n, 1)?;
            if crate::charts::regular_blocks(&jets, &chart)?.is_empty() {
                return Err(FormError::SingularImmersion(format!("{p:?}")));
            }
        }
        Ok(())
    }
}

fn base_differential(e: &Expr, n: u16) -> DiffForm {
    let mut f = DiffForm::zero(1, Mode::Coordinate);
    for j in 1..=n {
        f.add_word(vec![Covector::dx(j)], e.diff(&CoordSymbol::X(j)));
    }
    f
}

/// Pullback by the jet prolongation of ζ (T¹ζ, or J²ζ when second jets occur).
pub fn pullback_prolongation(a: &DiffForm, z: &ImmersionSpec) -> Result<DiffForm, FormError> {
    let sub = z.jet_substitution();
    let n = z.n;
    let mut out = DiffForm::zero(a.degree, Mode::Coordinate);
    for (w, c) in &a.terms {
        let mut acc = DiffForm::scalar(c.subs(&sub), Mode::Coordinate);
        for cv in w {
            let one = match cv {
                Covector::Omega(_) | Covector::OmegaJ(..) => {
                    acc = DiffForm::zero(0, Mode::Coordinate);
                    break;
                }
                Covector::D(CoordSymbol::X(_)) => DiffForm::covector(cv.clone(), Mode::Coordinate),
                Covector::D(s @ (CoordSymbol::Y(_) | CoordSymbol::Y1(..) | CoordSymbol::Y2(..))) => {
                    base_differential(&sub[s], n)
                }
                other => return Err(FormError::InvalidCovector(other.id(), a.mode)),
            };
            acc = acc.wedge(&one)?;
        }
        if !acc.is_zero() {
            out = out.add(&acc)?;
        }
    }
    out.degree = a.degree;
    Ok(out)
}

/// Pullback of a Grassmann-mode form by the prolongation G¹ζ.
pub fn pullback_grassmann(a: &DiffForm, z: &ImmersionSpec, ac: &AdaptedChart) -> Result<DiffForm, FormError> {
    if a.mode != Mode::Grassmann {
        return Err(FormError::ModeMismatch(a.mode, Mode::Grassmann));
    }
    let sub = z.grassmann_substitution(ac);
    let n = z.n;
    let mut out = DiffForm::zero(a.degree, Mode::Coordinate);
    for (w, c) in &a.terms {
        let mut acc = DiffForm::scalar(c.subs(&sub), Mode::Coordinate);
        for cv in w {
            let one = match cv {
                Covector::D(s @ (CoordSymbol::W(_) | CoordSymbol::W1(..))) => base_differential(&sub[s], n),
                other => return Err(FormError::InvalidCovector(other.id(), a.mode)),
            };
            acc = acc.wedge(&one)?;
        }
        if !acc.is_zero() {
            out = out.add(&acc)?;
        }
    }
    out.degree = a.degree;
    Ok(out)
}

/// Re-expresses a GL-invariant coordinate-mode form (dy covectors only) on the
/// Grassmann fibration through the section w^i_j = δ^i_j.
pub fn to_grassmann(a: &DiffForm, ac: &AdaptedChart) -> Result<DiffForm, FormError> {
    let sec = ac.grassmann_section();
    let mut out = DiffForm::zero(a.degree, Mode::Grassmann);
    for (w, c) in &a.terms {
        let mut word = Vec::new();
        for cv in w {
            match cv {
                Covector::D(CoordSymbol::Y(k)) => word.push(Covector::dw(*k)),
                other => return Err(FormError::InvalidCovector(other.id(), a.mode)),
            }
        }
        out.add_word(word, c.subs(&sec));
    }
    Ok(out)
}

/// Grassmann horizontalization: dw^σ ↦ w^σ_i dw^i, dw^σ_i ↦ w^σ_ij dw^j.
/// A form lies in the contact ideal exactly when this image vanishes.
pub fn grassmann_horizontal(a: &DiffForm, ac: &AdaptedChart) -> Result<DiffForm, FormError> {
    if a.mode != Mode::Grassmann {
        return Err(FormError::ModeMismatch(a.mode, Mode::Grassmann));
    }
    let mut out = DiffForm::zero(a.degree, Mode::Grassmann);
    for (w, c) in &a.terms {
        let mut acc = DiffForm::scalar(c.clone(), Mode::Grassmann);
        for cv in w {
            let mut one = DiffForm::zero(1, Mode::Grassmann);
            match cv {
                Covector::D(CoordSymbol::W(k)) if ac.sub.contains(k) => one.add_word(vec![cv.clone()], Expr::one()),
                Covector::D(CoordSymbol::W(s)) => {
                    for &i in &ac.sub {
                        one.add_word(vec![Covector::dw(i)], Expr::w1(*s, i));
                    }
                }
                Covector::D(CoordSymbol::W1(s, i)) => {
                    for &j in &ac.sub {
                        one.add_word(vec![Covector::dw(j)], Expr::sym(CoordSymbol::w2(*s, *i, j)));
                    }
                }
                other => return Err(FormError::InvalidCovector(other.id(), a.mode)),
            }
            acc = acc.wedge(&one)?;
        }
        out = out.add(&acc)?;
    }
    out.degree = a.degree;
    Ok(out)
}

/// The Grassmann contact form ω̃^σ = dw^σ − w^σ_i dw^i.
pub fn grassmann_contact(s: u16, ac: &AdaptedChart) -> DiffForm {
    let mut f = DiffForm::covector(Covector::dw(s), Mode::Grassmann);
    for &i in &ac.sub {
        f.add_word(vec![Covector::dw(i)], -Expr::w1(s, i));
    }
    f
}

/// Coefficientwise comparison through `equal` (both sides in coordinate mode
/// when they differ in mode).
pub fn forms_equal(a: &DiffForm, b: &DiffForm, cfg: &EqualConfig) -> Result<Vec<(Vec<Covector>, Equality)>, FormError> {
    let (a, b) = if a.mode != b.mode && a.mode != Mode::Grassmann && b.mode != Mode::Grassmann {
        (a.to_coordinate()?, b.to_coordinate()?)
    } else {
        (a.clone(), b.clone())
    };
    let mut words: Vec<Vec<Covector>> = a.terms.keys().cloned().collect();
    for w in b.terms.keys() {
        if !a.terms.contains_key(w) {
            words.push(w.clone());
        }
    }
    words.sort();
    Ok(words
        .into_iter()
        .map(|w| {
            let r = equal(&a.coeff(&w), &b.coeff(&w), cfg);
            (w, r)
        })
        .collect())
}

/// Overall verdict of a coefficientwise comparison.
pub fn verdict(results: &[(Vec<Covector>, Equality)]) -> Equality {
    for (_, r) in results {
        if r.is_unequal() {
            return r.clone();
        }
    }
    if results.iter().any(|(_, r)| *r == Equality::Unknown) {
        Equality::Unknown
    } else {
        Equality::Equal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> EqualConfig {
        EqualConfig::default()
    }

    fn assert_same(a: &DiffForm, b: &DiffForm) {
        let r = forms_equal(a, b, &cfg()).unwrap();
        assert!(verdict(&r).is_equal(), "{a:?} != {b:?}: {r:?}");
    }

    fn pool() -> Vec<Expr> {
        vec![
            Expr::x(1),
            Expr::x(2),
            Expr::y(1),
            Expr::y(2),
            Expr::y1(1, 1),
            Expr::y1(2, 2),
            Expr::y1(1, 2),
            Expr::x(1) * Expr::y(2) + Expr::int(3),
            Expr::y1(2, 1).sin(),
            (Expr::one() + Expr::y1(1, 1) * Expr::y1(1, 1)).sqrt(),
        ]
    }

    fn coord_covs() -> Vec<Covector> {
        vec![Covector::dx(1), Covector::dx(2), Covector::dy(1), Covector::dy(2), Covector::dy(3)]
    }

    fn build(degree: usize, picks: &[(usize, usize, usize, usize)], covs: &[Covector], mode: Mode) -> DiffForm {
        let p = pool();
        let mut f = DiffForm::zero(degree, mode);
        for &(a, b, c, d) in picks {
            let idx = [b, c, d];
            let word: Vec<Covector> = idx[..degree].iter().map(|&i| covs[i % covs.len()].clone()).collect();
            f.add_word(word, p[a % p.len()].clone());
        }
        f
    }

    #[test]
    fn volume_conventions() {
        let w0 = DiffForm::volume(2, Mode::Coordinate);
        let w1 = DiffForm::volume_j(2, 1, Mode::Coordinate);
        let w2 = DiffForm::volume_j(2, 2, Mode::Coordinate);
        let dx1 = DiffForm::covector(Covector::dx(1), Mode::Coordinate);
        let dx2 = DiffForm::covector(Covector::dx(2), Mode::Coordinate);
        assert_eq!(dx1.wedge(&w1).unwrap(), w0);
        assert_eq!(dx2.wedge(&w2).unwrap(), w0);
        // ω_1∧dx^1 = (−1)^{n−1} ω_0
        assert_eq!(w1.wedge(&dx1).unwrap(), w0.scale(&Expr::int(-1)));
        let x = Vector::basis(CoordSymbol::X(1));
        assert_eq!(w0.contract(&x).unwrap(), w1);
    }

    #[test]
    fn dd_vanishes_with_jets() {
        let mut f = DiffForm::zero(1, Mode::Coordinate);
        f.add_word(vec![Covector::dy(1)], Expr::y1(1, 1) * Expr::x(2));
        f.add_word(vec![Covector::dy1(1, 2)], Expr::y(1).exp());
        assert!(f.ext_d().unwrap().ext_d().unwrap().is_zero());
        let g = DiffForm::covector(Covector::Omega(1), Mode::Contact).scale(&Expr::x(1));
        assert!(g.ext_d().unwrap().ext_d().unwrap().is_zero());
    }

    #[test]
    fn contact_form_differential() {
        // dω^1 = −dy^1_j ∧ dx^j = −ω^1_j∧dx^j
        let om = DiffForm::covector(Covector::Omega(1), Mode::Contact);
        let d = with_base_dim(2, || om.ext_d().unwrap().to_contact().unwrap());
        let mut expected = DiffForm::zero(2, Mode::Contact);
        expected.add_word(vec![Covector::OmegaJ(1, 1), Covector::dx(1)], Expr::int(-1));
        expected.add_word(vec![Covector::OmegaJ(1, 2), Covector::dx(2)], Expr::int(-1));
        assert_same(&d, &expected);
    }

    #[test]
    fn horizontalization() {
        let dy = DiffForm::covector(Covector::dy(1), Mode::Coordinate);
        let h = with_base_dim(2, || dy.horizontalize(2).unwrap());
        let mut e = DiffForm::zero(1, Mode::Coordinate);
        e.add_word(vec![Covector::dx(1)], Expr::y1(1, 1));
        e.add_word(vec![Covector::dx(2)], Expr::y1(1, 2));
        assert_eq!(h, e);
        let om = DiffForm::covector(Covector::Omega(1), Mode::Contact);
        assert!(om.horizontalize(2).unwrap().is_zero());
    }

    #[test]
    fn contact_components_sum_to_form() {
        let mut f = DiffForm::zero(2, Mode::Coordinate);
        f.add_word(vec![Covector::dy(1), Covector::dy(2)], Expr::x(1));
        f.add_word(vec![Covector::dy(1), Covector::dx(2)], Expr::y1(2, 1));
        f.add_word(vec![Covector::dx(1), Covector::dx(2)], Expr::y(1));
        with_base_dim(2, || {
            let mut total = DiffForm::zero(2, Mode::Contact);
            for k in 0..=2 {
                total = total.add(&f.contact_component(k).unwrap()).unwrap();
            }
            assert_same(&total, &f.to_contact().unwrap());
            let h = f.horizontalize(2).unwrap();
            assert_same(&f.contact_component(0).unwrap(), &h);
        });
    }

    #[test]
    fn pullback_commutes_with_d() {
        let z = ImmersionSpec::graph(2, vec![Expr::x(1) * Expr::x(2), Expr::x(1).sin()]);
        let mut f = DiffForm::zero(1, Mode::Coordinate);
        f.add_word(vec![Covector::dy(3)], Expr::y(4) * Expr::x(1));
        f.add_word(vec![Covector::dy(4)], Expr::y(3) * Expr::y(3));
        let lhs = pullback_prolongation(&f.ext_d().unwrap(), &z).unwrap();
        let rhs = pullback_prolongation(&f, &z).unwrap().ext_d().unwrap();
        assert_same(&lhs, &rhs);
        // contact forms pull back to zero
        let om = DiffForm::covector(Covector::Omega(3), Mode::Contact);
        let c = with_base_dim(2, || om.to_coordinate().unwrap());
        assert!(pullback_prolongation(&c, &z).unwrap().is_zero());
    }

    #[test]
    fn grassmann_contact_is_killed() {
        let chart = crate::charts::JetChart::new(2, 1, 1).unwrap();
        let ac = AdaptedChart::new(chart, vec![1, 2]).unwrap();
        let om = grassmann_contact(3, &ac);
        assert!(grassmann_horizontal(&om, &ac).unwrap().is_zero());
        let d = om.ext_d().unwrap();
        assert!(grassmann_horizontal(&d, &ac).unwrap().is_zero());
        let dw = DiffForm::covector(Covector::dw(1), Mode::Grassmann);
        assert!(!grassmann_horizontal(&dw, &ac).unwrap().is_zero());
    }

    #[test]
    fn json_ids() {
        let mut f = DiffForm::zero(2, Mode::Contact);
        f.add_word(vec![Covector::OmegaJ(2, 1), Covector::dx(1)], Expr::one());
        let j = f.to_json();
        assert_eq!(j["terms"][0]["word"], serde_json::json!(["dx1", "om2_1"]));
        assert_eq!(j["terms"][0]["coeff"], "-1");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn d_squared_is_zero(deg in 0usize..3, picks in prop::collection::vec((0usize..10, 0usize..5, 0usize..5, 0usize..5), 1..4)) {
            let f = build(deg, &picks, &coord_covs(), Mode::Coordinate);
            prop_assert!(f.ext_d().unwrap().ext_d().unwrap().is_zero());
        }

        #[test]
        fn d_is_an_antiderivation(
            pa in prop::collection::vec((0usize..10, 0usize..5, 0usize..5, 0usize..5), 1..3),
            pb in prop::collection::vec((0usize..10, 0usize..5, 0usize..5, 0usize..5), 1..3),
        ) {
            let a = build(1, &pa, &coord_covs(), Mode::Coordinate);
            let b = build(1, &pb, &coord_covs(), Mode::Coordinate);
            let lhs = a.wedge(&b).unwrap().ext_d().unwrap();
            let rhs = a.ext_d().unwrap().wedge(&b).unwrap().sub(&a.wedge(&b.ext_d().unwrap()).unwrap()).unwrap();
            let r = forms_equal(&lhs, &rhs, &cfg()).unwrap();
            prop_assert!(verdict(&r).is_equal());
        }

        #[test]
        fn contraction_is_an_antiderivation(
            pa in prop::collection::vec((0usize..10, 0usize..5, 0usize..5, 0usize..5), 1..3),
            pb in prop::collection::vec((0usize..10, 0usize..5, 0usize..5, 0usize..5), 1..3),
            xi in 0usize..10,
        ) {
            let a = build(1, &pa, &coord_covs(), Mode::Coordinate);
            let b = build(2, &pb, &coord_covs(), Mode::Coordinate);
            let x = Vector::new().with(CoordSymbol::X(1), pool()[xi].clone()).with(CoordSymbol::Y(2), Expr::y(1));
            let lhs = a.wedge(&b).unwrap().contract(&x).unwrap();
            let rhs = a.contract(&x).unwrap().wedge(&b).unwrap().sub(&a.wedge(&b.contract(&x).unwrap()).unwrap()).unwrap();
            let r = forms_equal(&lhs, &rhs, &cfg()).unwrap();
            prop_assert!(verdict(&r).is_equal());
        }

        #[test]
        fn coefficient_formulas_match_expansion(deg in 1usize..4, picks in prop::collection::vec((0usize..10, 0usize..5, 0usize..5, 0usize..5), 1..5)) {
            let f = build(deg, &picks, &coord_covs(), Mode::Coordinate);
            with_base_dim(2, || {
                let a = lemma_convert(&f, Mode::Contact).unwrap();
                let b = convert_by_expansion(&f, Mode::Contact).unwrap();
                assert_same(&a, &b);
                let back = lemma_convert(&a, Mode::Coordinate).unwrap();
                let back2 = convert_by_expansion(&a, Mode::Coordinate).unwrap();
                assert_same(&back, &f);
                assert_same(&back2, &f);
            });
        }
    }
}
