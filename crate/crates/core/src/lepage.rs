//! Lepage equivalents of first-order Lagrangians and the Lepage criteria.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::charts::{formal_derivative, ChartError, JetChart};
use crate::expr::{
    det, equal, permutations, perm_sign, rational, CoordSymbol, EqualConfig, Equality, Expr, ExprError, Witness,
};
use crate::forms::{
    convert_by_expansion, forms_equal, verdict, with_base_dim, Covector, DiffForm, FormError, Mode, Vector,
};
use crate::homogeneity::zermelo_residuals;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LepageError {
    #[error("Lagrange function depends on second-order jets")]
    SecondOrder,
    #[error("Lagrange function is not positive homogeneous (Zermelo residual R^{j}_{l} nonzero)")]
    NotHomogeneous { j: u16, l: u16, witness: Option<Witness> },
    #[error("Lagrange function vanishes identically")]
    ZeroLagrangian,
    #[error("form is not a Lepage form")]
    NotLepage(Option<Witness>),
    #[error("W and Z differ: {0:?}")]
    FundamentalMismatch(Option<Witness>),
    #[error("form is not a horizontal n-form in dy: {0}")]
    NotHorizontal(String),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Outcome of a mathematical check.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "witness", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail(Witness),
    Unknown,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl From<Equality> for Verdict {
    fn from(e: Equality) -> Verdict {
        match e {
            Equality::Equal => Verdict::Pass,
            Equality::Unequal(w) => Verdict::Fail(w),
            Equality::Unknown => Verdict::Unknown,
        }
    }
}

/// λ = 𝓛 ω_0 with 𝓛 over first-order symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct Lagrangian {
    pub chart: JetChart,
    pub l: Expr,
}

impl Lagrangian {
    pub fn new(chart: JetChart, l: Expr) -> Result<Lagrangian, LepageError> {
        if l.depends_on(|s| s.jet_order() >= 2) {
            return Err(LepageError::SecondOrder);
        }
        Ok(Lagrangian { chart, l })
    }

    pub fn n(&self) -> u16 {
        self.chart.n
    }

    /// 𝓛ω_0 as a coordinate-mode form.
    pub fn form(&self) -> DiffForm {
        DiffForm::volume(self.n(), Mode::Coordinate).scale(&self.l)
    }
}

/// ρ = (1/n!) A_{K1…Kn} dy^{K1}∧…∧dy^{Kn}, stored by strictly increasing K.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalNForm {
    pub chart: JetChart,
    pub coeffs: BTreeMap<Vec<u16>, Expr>,
}

impl HorizontalNForm {
    pub fn new(chart: JetChart) -> HorizontalNForm {
        HorizontalNForm { chart, coeffs: BTreeMap::new() }
    }

    /// Sets A_K (and by antisymmetry every permutation of K).
    pub fn set(&mut self, ks: &[u16], value: Expr) {
        let s = perm_sign(ks);
        if s == 0 {
            return;
        }
        let mut sorted = ks.to_vec();
        sorted.sort_unstable();
        let v = if s > 0 { value } else { -value };
        if v.is_zero() {
            self.coeffs.remove(&sorted);
        } else {
            self.coeffs.insert(sorted, v);
        }
    }

    /// A_K for arbitrary K, with sign.
    pub fn get(&self, ks: &[u16]) -> Expr {
        let s = perm_sign(ks);
        if s == 0 {
            return Expr::zero();
        }
        let mut sorted = ks.to_vec();
        sorted.sort_unstable();
        let v = self.coeffs.get(&sorted).cloned().unwrap_or_default();
        if s > 0 {
            v
        } else {
            -v
        }
    }

    pub fn to_form(&self) -> DiffForm {
        let mut f = DiffForm::zero(self.chart.n as usize, Mode::Coordinate);
        for (k, a) in &self.coeffs {
            f.add_word(k.iter().map(|&i| Covector::dy(i)).collect(), a.clone());
        }
        f
    }

    pub fn from_form(f: &DiffForm, chart: &JetChart) -> Result<HorizontalNForm, LepageError> {
        let mut out = HorizontalNForm::new(chart.clone());
        if f.degree != chart.n as usize || (f.mode != Mode::Coordinate && !f.is_zero()) {
            return Err(LepageError::NotHorizontal(format!("degree {} in {:?} mode", f.degree, f.mode)));
        }
        for (w, c) in &f.terms {
            let mut ks = Vec::new();
            for cv in w {
                match cv {
                    Covector::D(CoordSymbol::Y(k)) => ks.push(*k),
                    other => return Err(LepageError::NotHorizontal(other.id())),
                }
            }
            if c.depends_on(|s| s.jet_order() >= 2 || matches!(s, CoordSymbol::X(_))) {
                return Err(LepageError::NotHorizontal(format!("coefficient {c}")));
            }
            out.set(&ks, c.clone());
        }
        Ok(out)
    }

    /// Symbolic antisymmetry check of the stored representation.
    pub fn is_antisymmetric(&self) -> bool {
        self.coeffs.keys().all(|k| k.windows(2).all(|w| w[0] < w[1]))
    }
}

/// Memo of iterated jet derivatives ∂^k𝓛/∂y^{K1}_{j1}…∂y^{Kk}_{jk}, keyed by
/// the sorted multi-index.
pub struct JetDerivatives<'a> {
    l: &'a Expr,
    memo: HashMap<Vec<(u16, u16)>, Expr>,
}

impl<'a> JetDerivatives<'a> {
    pub fn new(l: &'a Expr) -> Self {
        JetDerivatives { l, memo: HashMap::new() }
    }

    pub fn get(&mut self, idx: &[(u16, u16)]) -> Expr {
        let mut key = idx.to_vec();
        key.sort_unstable();
        if let Some(e) = self.memo.get(&key) {
            return e.clone();
        }
        let v = match key.split_last() {
            None => self.l.clone(),
            Some((&(k, j), rest)) => self.get(rest).diff(&CoordSymbol::Y1(k, j)),
        };
        self.memo.insert(key, v.clone());
        v
    }
}

fn tuples(m: u16, len: usize) -> Vec<Vec<u16>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (1..=m).map(move |v| {
                    let mut u = t.clone();
                    u.push(v);
                    u
                })
            })
            .collect();
    }
    out
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// D^{K} = det(y^{K_a}_j).
pub fn jet_minor(ks: &[u16], n: u16) -> Expr {
    let m: Vec<Vec<Expr>> = ks.iter().map(|&k| (1..=n).map(|j| Expr::y1(k, j)).collect()).collect();
    det(&m).expect("n <= 4")
}

/// Θ_λ = 𝓛ω_0 + ∂𝓛/∂y^K_j ω^K∧ω_j (contact mode).
pub fn poincare_cartan(lam: &Lagrangian) -> Result<DiffForm, LepageError> {
    let n = lam.n();
    let mut out = DiffForm::volume(n, Mode::Contact).scale(&lam.l);
    for k in 1..=lam.chart.big_m() {
        for j in 1..=n {
            let d = lam.l.diff(&CoordSymbol::Y1(k, j));
            if d.is_zero() {
                continue;
            }
            let om = DiffForm::covector(Covector::Omega(k), Mode::Contact);
            let t = om.wedge(&DiffForm::volume_j(n, j, Mode::Contact))?.scale(&d);
            out = out.add(&t)?;
        }
    }
    Ok(out)
}

/// Fundamental Lepage equivalent Z_λ (contact mode).
pub fn fundamental(lam: &Lagrangian) -> Result<DiffForm, LepageError> {
    let n = lam.n() as usize;
    if n > 4 {
        return Err(ChartError::DeterminantGuard(lam.n()).into());
    }
    let big_m = lam.chart.big_m();
    let mut memo = JetDerivatives::new(&lam.l);
    let mut out = DiffForm::zero(n, Mode::Contact);
    let perms = permutations(n);
    for k in 0..=n {
        let w = rational(1, factorial(n - k) * factorial(k) * factorial(k));
        for ks in tuples(big_m, k) {
            for (perm, sign) in &perms {
                let js: Vec<u16> = perm[..k].iter().map(|&p| p as u16 + 1).collect();
                let is: Vec<u16> = perm[k..].iter().map(|&p| p as u16 + 1).collect();
                let idx: Vec<(u16, u16)> = ks.iter().cloned().zip(js.iter().cloned()).collect();
                let d = memo.get(&idx);
                if d.is_zero() {
                    continue;
                }
                let mut word: Vec<Covector> = ks.iter().map(|&q| Covector::Omega(q)).collect();
                word.extend(is.iter().map(|&i| Covector::dx(i)));
                let c = d.scale(&(&w * &rational(*sign as i64, 1)));
                out.add_word(word, c);
            }
        }
    }
    Ok(out)
}

/// Carathéodory form 𝓛 ⋀_k (dx^k + 𝓛^{-1} ∂𝓛/∂y^σ_k ω^σ) (contact mode).
pub fn caratheodory(lam: &Lagrangian) -> Result<DiffForm, LepageError> {
    if lam.l.is_zero() {
        return Err(LepageError::ZeroLagrangian);
    }
    let inv = lam.l.recip()?;
    let n = lam.n();
    let mut acc = DiffForm::scalar(lam.l.clone(), Mode::Contact);
    for k in 1..=n {
        let mut f = DiffForm::covector(Covector::dx(k), Mode::Contact);
        for s in 1..=lam.chart.big_m() {
            let d = lam.l.diff(&CoordSymbol::Y1(s, k));
            if !d.is_zero() {
                f.add_word(vec![Covector::Omega(s)], &inv * &d);
            }
        }
        acc = acc.wedge(&f)?;
    }
    Ok(acc)
}

fn require_homogeneous(lam: &Lagrangian, cfg: &EqualConfig) -> Result<(), LepageError> {
    let report = zermelo_residuals(&lam.l, &lam.chart, cfg);
    if let Some((j, l, w)) = report.failure() {
        return Err(LepageError::NotHomogeneous { j, l, witness: Some(w.clone()) });
    }
    if !report.passed() {
        return Err(LepageError::NotHomogeneous { j: 0, l: 0, witness: None });
    }
    Ok(())
}

/// Hilbert–Carathéodory form (coordinate mode, dy words only).
pub fn hilbert_caratheodory(lam: &Lagrangian, cfg: &EqualConfig) -> Result<DiffForm, LepageError> {
    require_homogeneous(lam, cfg)?;
    if lam.l.is_zero() {
        return Err(LepageError::ZeroLagrangian);
    }
    let n = lam.n() as usize;
    let scale = lam.l.pow(1 - n as i32)?.scale(&rational(1, factorial(n)));
    let first: Vec<Vec<Expr>> = (1..=lam.chart.big_m())
        .map(|k| (1..=lam.n()).map(|j| lam.l.diff(&CoordSymbol::Y1(k, j))).collect())
        .collect();
    let mut out = DiffForm::zero(n, Mode::Coordinate);
    for ks in crate::charts::combinations(lam.chart.big_m(), n) {
        // Σ over orderings of K and over j: the sorted coefficient collects n! copies
        let mut c = Expr::zero();
        for (kperm, ksign) in permutations(n) {
            for (jperm, jsign) in permutations(n) {
                let t = Expr::product(
                    (0..n).map(|t| first[(ks[kperm[t]] - 1) as usize][jperm[t]].clone()),
                );
                c = if ksign * jsign > 0 { c + t } else { c - t };
            }
        }
        out.add_word(ks.iter().map(|&k| Covector::dy(k)).collect(), c * &scale);
    }
    Ok(out)
}

/// W_λ = (1/(n!)²) ∂ⁿ𝓛 ε dy∧…∧dy without the homogeneity gate.
pub fn fundamental_homogeneous_unchecked(lam: &Lagrangian) -> DiffForm {
    let n = lam.n() as usize;
    let mut memo = JetDerivatives::new(&lam.l);
    let mut out = DiffForm::zero(n, Mode::Coordinate);
    let w = rational(1, factorial(n) * factorial(n));
    for ks in crate::charts::combinations(lam.chart.big_m(), n) {
        let mut c = Expr::zero();
        for (kperm, ksign) in permutations(n) {
            for (jperm, jsign) in permutations(n) {
                let idx: Vec<(u16, u16)> = (0..n).map(|t| (ks[kperm[t]], jperm[t] as u16 + 1)).collect();
                let d = memo.get(&idx);
                c = if ksign * jsign > 0 { c + d } else { c - d };
            }
        }
        out.add_word(ks.iter().map(|&k| Covector::dy(k)).collect(), c.scale(&w));
    }
    out
}

/// W_λ, gated on the Zermelo conditions and checked against Z_λ.
pub fn fundamental_homogeneous(lam: &Lagrangian, cfg: &EqualConfig) -> Result<DiffForm, LepageError> {
    require_homogeneous(lam, cfg)?;
    let w = fundamental_homogeneous_unchecked(lam);
    let z = fundamental(lam)?;
    let res = with_base_dim(lam.n(), || forms_equal(&w, &z, cfg))?;
    match verdict(&res) {
        Equality::Equal => Ok(w),
        Equality::Unequal(wit) => Err(LepageError::FundamentalMismatch(Some(wit))),
        Equality::Unknown => Err(LepageError::FundamentalMismatch(None)),
    }
}

/// 𝓛 = Σ_{K increasing} A_K det(y^{K_a}_j).
pub fn lagrangian_of(rho: &HorizontalNForm) -> Lagrangian {
    let n = rho.chart.n;
    let l = Expr::sum(rho.coeffs.iter().map(|(k, a)| a * &jet_minor(k, n)));
    Lagrangian { chart: rho.chart.clone(), l }
}

/// Lepage criterion Σ_K ∂A_K/∂y^P_s D^K = 0 for all P, s.
pub fn is_lepage(rho: &HorizontalNForm, cfg: &EqualConfig) -> Verdict {
    let n = rho.chart.n;
    let minors: Vec<(Vec<u16>, Expr, Expr)> =
        rho.coeffs.iter().map(|(k, a)| (k.clone(), a.clone(), jet_minor(k, n))).collect();
    let mut unknown = false;
    for p in 1..=rho.chart.big_m() {
        for s in 1..=n {
            let sym = CoordSymbol::Y1(p, s);
            let e = Expr::sum(minors.iter().map(|(_, a, d)| a.diff(&sym) * d));
            match equal(&e, &Expr::zero(), cfg) {
                Equality::Equal => {}
                Equality::Unequal(w) => return Verdict::Fail(w),
                Equality::Unknown => unknown = true,
            }
        }
    }
    if unknown {
        Verdict::Unknown
    } else {
        Verdict::Pass
    }
}

/// E_K = ∂𝓛/∂y^K − d_j ∂𝓛/∂y^K_j on the order-2 chart.
pub fn euler_lagrange(lam: &Lagrangian) -> Result<Vec<Expr>, LepageError> {
    let chart2 = lam.chart.with_order(2);
    let mut out = Vec::new();
    for k in 1..=lam.chart.big_m() {
        let mut e = lam.l.diff(&CoordSymbol::Y(k));
        for j in 1..=lam.n() {
            let p = lam.l.diff(&CoordSymbol::Y1(k, j));
            e = e - formal_derivative(&p, j, &chart2)?;
        }
        out.push(e);
    }
    Ok(out)
}

/// Compares p_1 dρ with E_K(𝓛) ω^K∧ω_0 coefficientwise.
pub fn el_form_check(rho: &HorizontalNForm, cfg: &EqualConfig) -> Result<Verdict, LepageError> {
    match is_lepage(rho, cfg) {
        Verdict::Pass => {}
        Verdict::Fail(w) => return Err(LepageError::NotLepage(Some(w))),
        Verdict::Unknown => return Err(LepageError::NotLepage(None)),
    }
    let n = rho.chart.n;
    let d = rho.to_form().ext_d()?;
    let contact = with_base_dim(n, || convert_by_expansion(&d, Mode::Contact))?;
    let el = euler_lagrange(&lagrangian_of(rho))?;
    let omega0: Vec<Covector> = (1..=n).map(Covector::dx).collect();
    let mut unknown = false;
    for k in 1..=rho.chart.big_m() {
        let mut word = vec![Covector::Omega(k)];
        word.extend(omega0.iter().cloned());
        let mut checks = vec![(contact.coeff(&word), el[(k - 1) as usize].clone())];
        for j in 1..=n {
            let mut wj = vec![Covector::OmegaJ(k, j)];
            wj.extend(omega0.iter().cloned());
            checks.push((contact.coeff(&wj), Expr::zero()));
        }
        for (a, b) in checks {
            match equal(&a, &b, cfg) {
                Equality::Equal => {}
                Equality::Unequal(w) => return Ok(Verdict::Fail(w)),
                Equality::Unknown => unknown = true,
            }
        }
    }
    Ok(if unknown { Verdict::Unknown } else { Verdict::Pass })
}

/// h(ρ) = λ, comparing the horizontal component with 𝓛ω_0.
pub fn check_horizontal_part(rho: &DiffForm, lam: &Lagrangian, cfg: &EqualConfig) -> Result<Verdict, LepageError> {
    let n = lam.n();
    let h = with_base_dim(n, || rho.horizontalize(n))?;
    let res = forms_equal(&h, &lam.form(), cfg)?;
    Ok(verdict(&res).into())
}

/// h(i_ξ dρ) = 0 for `count` random π^{1,0}-vertical vectors ξ = ξ^K_j ∂/∂y^K_j.
pub fn check_lepage_property(
    rho: &DiffForm,
    chart: &JetChart,
    count: usize,
    cfg: &EqualConfig,
) -> Result<Verdict, LepageError> {
    let n = chart.n;
    let d = with_base_dim(n, || rho.ext_d())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut unknown = false;
    for _ in 0..count {
        let mut xi = Vector::new();
        for s in chart.jets1() {
            let num: i64 = rng.gen_range(-20..=20);
            xi = xi.with(s, Expr::rational(num, 10));
        }
        let h = with_base_dim(n, || d.contract(&xi).and_then(|c| c.horizontalize(n)))?;
        for c in h.terms.values() {
            match equal(c, &Expr::zero(), cfg) {
                Equality::Equal => {}
                Equality::Unequal(w) => return Ok(Verdict::Fail(w)),
                Equality::Unknown => unknown = true,
            }
        }
    }
    Ok(if unknown { Verdict::Unknown } else { Verdict::Pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{normalize, parse};

    fn cfg() -> EqualConfig {
        EqualConfig::default()
    }

    fn lag(n: u16, m: u16, s: &str) -> Lagrangian {
        let c = JetChart::new(n, m, 1).unwrap();
        let l = parse(s, &c).unwrap();
        Lagrangian::new(c, l).unwrap()
    }

    fn minimal21() -> Lagrangian {
        lag(2, 1, "sqrt((y1_1*y2_2 - y1_2*y2_1)^2 + (y1_1*y3_2 - y1_2*y3_1)^2 + (y2_1*y3_2 - y2_2*y3_1)^2)")
    }

    #[test]
    fn cartan_form_for_n1() {
        let lam = lag(1, 1, "y1_1");
        let th = poincare_cartan(&lam).unwrap();
        let expect = with_base_dim(1, || DiffForm::covector(Covector::dy(1), Mode::Coordinate).to_contact()).unwrap();
        assert_eq!(th, expect);
        let lam = lag(1, 1, "y1_1^2*y2 + y2_1*y1");
        assert_eq!(fundamental(&lam).unwrap(), poincare_cartan(&lam).unwrap());
        assert_eq!(caratheodory(&lam).unwrap(), poincare_cartan(&lam).unwrap());
    }

    #[test]
    fn horizontal_parts_recover_lagrangian() {
        for lam in [lag(1, 1, "sqrt(y1_1^2 + y2_1^2)"), lag(2, 1, "y1*y1_1*y3_2 + y2_2^2"), minimal21()] {
            for rho in [poincare_cartan(&lam).unwrap(), fundamental(&lam).unwrap(), caratheodory(&lam).unwrap()] {
                assert!(check_horizontal_part(&rho, &lam, &cfg()).unwrap().passed());
            }
        }
    }

    #[test]
    fn fundamental_of_trivial_lagrangian_is_dy_dy() {
        let lam = lag(2, 1, "y1_1*y2_2 - y1_2*y2_1");
        let z = fundamental(&lam).unwrap();
        let mut expect = DiffForm::zero(2, Mode::Coordinate);
        expect.add_word(vec![Covector::dy(1), Covector::dy(2)], Expr::one());
        let r = with_base_dim(2, || forms_equal(&z, &expect, &cfg())).unwrap();
        assert!(verdict(&r).is_equal());
        assert!(with_base_dim(2, || z.ext_d()).unwrap().is_zero());
        assert!(euler_lagrange(&lam).unwrap().iter().all(|e| e.is_zero()));
    }

    #[test]
    fn lepage_property_of_constructors() {
        let lam = minimal21();
        for rho in [poincare_cartan(&lam).unwrap(), fundamental(&lam).unwrap(), caratheodory(&lam).unwrap()] {
            assert!(check_lepage_property(&rho, &lam.chart, 3, &cfg()).unwrap().passed());
        }
        // a non-Lepage form: λ itself
        let v = check_lepage_property(&lam.form(), &lam.chart, 1, &cfg()).unwrap();
        assert!(matches!(v, Verdict::Fail(_)));
    }

    #[test]
    fn lagrangian_of_examples() {
        let c = JetChart::new(2, 1, 1).unwrap();
        let mut rho = HorizontalNForm::new(c.clone());
        rho.set(&[1, 2], Expr::one());
        assert_eq!(lagrangian_of(&rho).l, parse("y1_1*y2_2 - y1_2*y2_1", &c).unwrap());
        assert!(lagrangian_of(&HorizontalNForm::new(c.clone())).l.is_zero());
        rho.set(&[2, 1], Expr::int(3));
        assert_eq!(rho.get(&[1, 2]), Expr::int(-3));
        assert!(rho.is_antisymmetric());
        let back = HorizontalNForm::from_form(&rho.to_form(), &c).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn lepage_criterion_examples() {
        let c = JetChart::new(2, 1, 1).unwrap();
        let mut rho = HorizontalNForm::new(c.clone());
        rho.set(&[1, 3], Expr::int(2));
        rho.set(&[2, 3], Expr::y(1));
        assert!(is_lepage(&rho, &cfg()).passed());
        assert!(el_form_check(&rho, &cfg()).unwrap().passed());
        let mut bad = HorizontalNForm::new(c);
        bad.set(&[1, 2], Expr::y1(1, 1));
        assert!(matches!(is_lepage(&bad, &cfg()), Verdict::Fail(_)));
        assert!(matches!(el_form_check(&bad, &cfg()), Err(LepageError::NotLepage(_))));
    }

    #[test]
    fn euler_lagrange_examples() {
        let lam = lag(1, 1, "1/2*y1_1^2");
        let e = euler_lagrange(&lam).unwrap();
        assert_eq!(e[0], -Expr::y2(1, 1, 1));
        assert!(e[1].is_zero());
    }

    #[test]
    fn hc_requires_homogeneity() {
        let lam = lag(1, 1, "y1_1 + 1");
        assert!(matches!(hilbert_caratheodory(&lam, &cfg()), Err(LepageError::NotHomogeneous { .. })));
        assert!(matches!(fundamental_homogeneous(&lam, &cfg()), Err(LepageError::NotHomogeneous { .. })));
        // n = 1 gives the Hilbert form ∂𝓛/∂ẏ^K dy^K
        let lam = lag(1, 1, "sqrt(y1_1^2 + y2_1^2)");
        let hc = hilbert_caratheodory(&lam, &cfg()).unwrap();
        let w = fundamental_homogeneous(&lam, &cfg()).unwrap();
        for k in 1..=2 {
            let d = lam.l.diff(&CoordSymbol::Y1(k, 1));
            assert!(normalize(&(hc.coeff(&[Covector::dy(k)]) - &d)).unwrap().is_zero());
            assert!(normalize(&(w.coeff(&[Covector::dy(k)]) - &d)).unwrap().is_zero());
        }
    }

    #[test]
    fn hc_agrees_with_caratheodory_for_homogeneous() {
        let lam = minimal21();
        let hc = hilbert_caratheodory(&lam, &cfg()).unwrap();
        let ca = caratheodory(&lam).unwrap();
        let r = with_base_dim(2, || forms_equal(&hc, &ca, &cfg())).unwrap();
        assert!(verdict(&r).is_equal(), "{r:?}");
    }

    #[test]
    fn w_equals_z_for_minimal() {
        assert!(fundamental_homogeneous(&minimal21(), &cfg()).is_ok());
    }

    #[test]
    fn el_form_of_minimal_w() {
        let lam = minimal21();
        let w = fundamental_homogeneous_unchecked(&lam);
        let rho = HorizontalNForm::from_form(&w, &lam.chart).unwrap();
        assert!(el_form_check(&rho, &cfg()).unwrap().passed());
    }
}
