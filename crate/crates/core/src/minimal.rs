//! Minimal submanifolds: the area Lagrangian of a Riemannian metric, its
//! Lepage equivalents, the nonparametric minimal surface equation and its
//! conservation laws.

use std::fmt::Write as _;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::charts::{combinations, JetChart};
use crate::expr::{
    det, equal, equal_guarded, normalize, permutations, Compiled, CoordSymbol, EqualConfig, Expr, ExprError,
    Point,
};
use crate::forms::{forms_equal, verdict, with_base_dim, DiffForm};
use crate::lepage::{
    caratheodory, euler_lagrange, fundamental_homogeneous_unchecked, hilbert_caratheodory, jet_minor, HorizontalNForm,
    Lagrangian, LepageError, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinimalError {
    #[error("metric is not symmetric at ({0},{1})")]
    NotSymmetric(u16, u16),
    #[error("metric entry ({0},{1}) depends on {2}")]
    BadEntry(u16, u16, String),
    #[error("metric has dimension {metric}, chart has M = {chart}")]
    Dimension { metric: usize, chart: u16 },
    #[error("Gram determinant guard: n = {0} > 3")]
    GramGuard(u16),
    #[error("Lagrange function vanishes identically")]
    ZeroLagrangian,
    #[error(transparent)]
    Lepage(#[from] LepageError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Form(#[from] crate::forms::FormError),
}

/// Riemannian metric g_KL(y) on Q.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSpec {
    pub g: Vec<Vec<Expr>>,
}

impl MetricSpec {
    pub fn euclidean(dim: u16) -> MetricSpec {
        let d = dim as usize;
        MetricSpec {
            g: (0..d).map(|i| (0..d).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect()).collect(),
        }
    }

    pub fn diagonal(diag: Vec<Expr>) -> Result<MetricSpec, MinimalError> {
        let d = diag.len();
        let g = (0..d)
            .map(|i| (0..d).map(|j| if i == j { diag[i].clone() } else { Expr::zero() }).collect())
            .collect();
        MetricSpec::matrix(g)
    }

    pub fn matrix(g: Vec<Vec<Expr>>) -> Result<MetricSpec, MinimalError> {
        let d = g.len();
        for (i, row) in g.iter().enumerate() {
            if row.len() != d {
                return Err(MinimalError::Dimension { metric: row.len(), chart: d as u16 });
            }
            for (j, e) in row.iter().enumerate() {
                if let Some(s) = e.free_symbols().into_iter().find(|s| !matches!(s, CoordSymbol::Y(_) | CoordSymbol::Param(_))) {
                    return Err(MinimalError::BadEntry(i as u16 + 1, j as u16 + 1, s.to_string()));
                }
                if j < i && !equal(e, &g[j][i], &EqualConfig::default()).is_equal() {
                    return Err(MinimalError::NotSymmetric(j as u16 + 1, i as u16 + 1));
                }
            }
        }
        Ok(MetricSpec { g })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn is_euclidean(&self) -> bool {
        *self == MetricSpec::euclidean(self.dim() as u16)
    }

    /// Cholesky test of positive definiteness at a point.
    pub fn positive_definite_at(&self, p: &Point) -> bool {
        let d = self.dim();
        let mut a = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                match Compiled::new(&self.g[i][j]).eval(p) {
                    Ok(v) if v.is_finite() => a[i][j] = v,
                    _ => return false,
                }
            }
        }
        for j in 0..d {
            let s = a[j][j] - (0..j).map(|k| a[j][k] * a[j][k]).sum::<f64>();
            if s <= 1e-12 {
                return false;
            }
            a[j][j] = s.sqrt();
            for i in j + 1..d {
                a[i][j] = (a[i][j] - (0..j).map(|k| a[i][k] * a[j][k]).sum::<f64>()) / a[j][j];
            }
        }
        true
    }
}

fn check_dims(g: &MetricSpec, chart: &JetChart) -> Result<(), MinimalError> {
    if g.dim() != chart.big_m() as usize {
        return Err(MinimalError::Dimension { metric: g.dim(), chart: chart.big_m() });
    }
    if chart.n > 3 {
        return Err(MinimalError::GramGuard(chart.n));
    }
    Ok(())
}

/// 𝓛 = sqrt(det(g_KL y^K_j y^L_k)).
pub fn minimal_lagrangian(g: &MetricSpec, chart: &JetChart) -> Result<Lagrangian, MinimalError> {
    check_dims(g, chart)?;
    let big_m = chart.big_m();
    let gram: Vec<Vec<Expr>> = (1..=chart.n)
        .map(|j| {
            (1..=chart.n)
                .map(|k| {
                    let mut terms = Vec::new();
                    for a in 1..=big_m {
                        for b in 1..=big_m {
                            let gab = &g.g[(a - 1) as usize][(b - 1) as usize];
                            if !gab.is_zero() {
                                terms.push(gab * &(Expr::y1(a, j) * Expr::y1(b, k)));
                            }
                        }
                    }
                    Expr::sum(terms)
                })
                .collect()
        })
        .collect();
    Ok(Lagrangian::new(chart.clone(), det(&gram)?.sqrt())?)
}

/// ω_λ = (1/n!)(1/𝓛) g_{K1L1}…g_{KnLn} D^{L1…Ln} dy^{K1}∧…∧dy^{Kn}.
pub fn krupka_form(g: &MetricSpec, chart: &JetChart) -> Result<HorizontalNForm, MinimalError> {
    let lam = minimal_lagrangian(g, chart)?;
    if lam.l.is_zero() {
        return Err(MinimalError::ZeroLagrangian);
    }
    let inv = lam.l.recip()?;
    let n = chart.n as usize;
    // every L tuple with distinct entries, with its minor
    let mut ls: Vec<(Vec<u16>, Expr)> = Vec::new();
    for c in combinations(chart.big_m(), n) {
        let d = jet_minor(&c, chart.n);
        for (perm, sign) in permutations(n) {
            let l: Vec<u16> = perm.iter().map(|&p| c[p]).collect();
            ls.push((l, if sign > 0 { d.clone() } else { -d.clone() }));
        }
    }
    let mut rho = HorizontalNForm::new(chart.clone());
    for ks in combinations(chart.big_m(), n) {
        let mut acc = Vec::new();
        for (l, d) in &ls {
            let prod = Expr::product((0..n).map(|a| g.g[(ks[a] - 1) as usize][(l[a] - 1) as usize].clone()));
            if !prod.is_zero() {
                acc.push(prod * d);
            }
        }
        rho.set(&ks, Expr::sum(acc) * &inv);
    }
    Ok(rho)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientVerdict {
    pub word: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub left: String,
    pub right: String,
    pub coefficients: Vec<CoefficientVerdict>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoincidenceReport {
    pub n: u16,
    pub m: u16,
    pub pairs: Vec<PairReport>,
    pub passed: bool,
}

fn compare(
    left: &str,
    a: &DiffForm,
    right: &str,
    b: &DiffForm,
    n: u16,
    cfg: &EqualConfig,
    guard: &dyn Fn(&Point) -> bool,
) -> Result<PairReport, MinimalError> {
    let (a, b) = (with_base_dim(n, || a.to_coordinate())?, with_base_dim(n, || b.to_coordinate())?);
    let mut words: Vec<_> = a.terms.keys().chain(b.terms.keys()).cloned().collect();
    words.sort();
    words.dedup();
    let coefficients: Vec<CoefficientVerdict> = words
        .iter()
        .map(|w| CoefficientVerdict {
            word: w.iter().map(|c| c.id()).collect::<Vec<_>>().join("^"),
            verdict: equal_guarded(&a.coeff(w), &b.coeff(w), cfg, guard).into(),
        })
        .collect();
    let passed = coefficients.iter().all(|c| c.verdict.passed());
    Ok(PairReport { left: left.into(), right: right.into(), coefficients, passed })
}

/// Pairwise coefficient comparison of W_λ, Λ_λ and ω_λ.
pub fn verify_coincidence(g: &MetricSpec, chart: &JetChart, cfg: &EqualConfig) -> Result<CoincidenceReport, MinimalError> {
    let lam = minimal_lagrangian(g, chart)?;
    let hc = hilbert_caratheodory(&lam, cfg)?;
    let w = fundamental_homogeneous_unchecked(&lam);
    let om = krupka_form(g, chart)?.to_form();
    let guard = |p: &Point| g.positive_definite_at(p);
    let n = chart.n;
    let pairs = vec![
        compare("W", &w, "Lambda", &hc, n, cfg, &guard)?,
        compare("W", &w, "omega", &om, n, cfg, &guard)?,
        compare("Lambda", &hc, "omega", &om, n, cfg, &guard)?,
    ];
    let passed = pairs.iter().all(|p| p.passed);
    Ok(CoincidenceReport { n, m: chart.m, pairs, passed })
}

/// Carathéodory form against W_λ (both agree for homogeneous 𝓛).
pub fn caratheodory_matches_w(g: &MetricSpec, chart: &JetChart, cfg: &EqualConfig) -> Result<Verdict, MinimalError> {
    let lam = minimal_lagrangian(g, chart)?;
    let w = fundamental_homogeneous_unchecked(&lam);
    let ca = caratheodory(&lam)?;
    let r = with_base_dim(chart.n, || forms_equal(&w, &ca, cfg))?;
    Ok(verdict(&r).into())
}

/// (1+u_y²)u_xx − 2u_xu_yu_xy + (1+u_x²)u_yy for closed-form u(x1, x2).
pub fn graph_el_residual(u: &Expr) -> Result<Expr, ExprError> {
    let (x, y) = (CoordSymbol::X(1), CoordSymbol::X(2));
    let ux = u.diff(&x);
    let uy = u.diff(&y);
    let r = (Expr::one() + &uy * &uy) * ux.diff(&x) - Expr::int(2) * &ux * &uy * ux.diff(&y)
        + (Expr::one() + &ux * &ux) * uy.diff(&y);
    normalize(&r)
}

/// Graph jets of R³: u_x = y3_1, u_y = y3_2, u_xx = y3_11, ….
fn graph_jet_map(e: &Expr) -> Expr {
    e.subs_fn(&|s| match s {
        CoordSymbol::Y1(k, j) if *k <= 2 => Some(if k == j { Expr::one() } else { Expr::zero() }),
        CoordSymbol::Y2(k, ..) if *k <= 2 => Some(Expr::zero()),
        _ => None,
    })
}

fn mse_in_jets() -> Expr {
    let (p, q) = (Expr::y1(3, 1), Expr::y1(3, 2));
    let (r, s, t) = (Expr::y2(3, 1, 1), Expr::y2(3, 1, 2), Expr::y2(3, 2, 2));
    (Expr::one() + &q * &q) * r - Expr::int(2) * &p * &q * s + (Expr::one() + &p * &p) * t
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElQuotientReport {
    pub factor: String,
    pub factor_free_of_second_jets: bool,
    pub matches: Verdict,
    /// +1 or −1 when the factor has that sign at every sample, 0 otherwise.
    pub factor_sign: i8,
    pub tangential: [Verdict; 2],
}

impl ElQuotientReport {
    pub fn passed(&self) -> bool {
        self.factor_free_of_second_jets
            && self.matches.passed()
            && self.factor_sign != 0
            && self.tangential.iter().all(Verdict::passed)
    }
}

/// E_3 of the Euclidean area Lagrangian on graphs x ↦ (x, y, u) as a multiple
/// of the minimal surface operator; E_1 = −u_x E_3, E_2 = −u_y E_3.
pub fn el_quotient(cfg: &EqualConfig) -> Result<ElQuotientReport, MinimalError> {
    let chart = JetChart::new(2, 1, 1).expect("valid");
    let lam = minimal_lagrangian(&MetricSpec::euclidean(3), &chart)?;
    let e: Vec<Expr> = euler_lagrange(&lam)?.iter().map(graph_jet_map).collect();
    let mse = mse_in_jets();
    // E_3 is linear in the second jets; its u_xx coefficient over (1+u_y²) is the factor
    let q = Expr::y1(3, 2);
    let factor = normalize(&e[2].diff(&CoordSymbol::y2(3, 1, 1)).checked_div(&(Expr::one() + &q * &q))?)?;
    let free = !factor.depends_on(|s| s.jet_order() >= 2);
    let matches: Verdict = equal(&e[2], &(&factor * &mse), cfg).into();
    let fc = Compiled::new(&factor);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sign = 0i8;
    for t in 0..50 {
        let p = Point::new()
            .with(CoordSymbol::Y1(3, 1), rng.gen_range(-3.0..3.0))
            .with(CoordSymbol::Y1(3, 2), rng.gen_range(-3.0..3.0));
        let v = fc.eval(&p).unwrap_or(f64::NAN);
        let s = if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
        if t == 0 {
            sign = s;
        } else if s != sign {
            sign = 0;
            break;
        }
    }
    let tangential = [
        equal(&e[0], &-(Expr::y1(3, 1) * &e[2]), cfg).into(),
        equal(&e[1], &-(Expr::y1(3, 2) * &e[2]), cfg).into(),
    ];
    Ok(ElQuotientReport { factor: factor.to_string(), factor_free_of_second_jets: free, matches, factor_sign: sign, tangential })
}

// ---------------------------------------------------------------------------
// grids

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must be at least 3x3, got {0}x{1}")]
    TooSmall(usize, usize),
    #[error("degenerate rectangle")]
    BadRectangle,
    #[error("expected {want} values, got {got}")]
    Shape { want: usize, got: usize },
    #[error("parse error in grid file: {0}")]
    Parse(String),
    #[error("Jacobian is singular at unknown {0}")]
    Singular(usize),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("currents are not closed: max normalized circulation {max:e} > gate {gate:e}")]
    NotClosed { max: f64, gate: f64 },
}

/// Nodal values u(i, j) at x_i = a + i·hx, y_j = c + j·hy, row-major in j.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField<T> {
    pub nx: usize,
    pub ny: usize,
    pub rect: [T; 4],
    pub u: Vec<T>,
}

fn c<T: Float>(v: f64) -> T {
    T::from(v).unwrap()
}

impl<T: Float> GridField<T> {
    pub fn new(nx: usize, ny: usize, rect: [T; 4]) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::TooSmall(nx, ny));
        }
        if !(rect[1] > rect[0] && rect[3] > rect[2]) {
            return Err(GridError::BadRectangle);
        }
        Ok(GridField { nx, ny, rect, u: vec![T::zero(); nx * ny] })
    }

    pub fn from_fn(nx: usize, ny: usize, rect: [T; 4], f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        let mut g = Self::new(nx, ny, rect)?;
        for j in 0..ny {
            for i in 0..nx {
                let v = f(g.x(i), g.y(j));
                g.set(i, j, v);
            }
        }
        Ok(g)
    }

    pub fn hx(&self) -> T {
        (self.rect[1] - self.rect[0]) / T::from(self.nx - 1).unwrap()
    }

    pub fn hy(&self) -> T {
        (self.rect[3] - self.rect[2]) / T::from(self.ny - 1).unwrap()
    }

    pub fn h(&self) -> T {
        self.hx().max(self.hy())
    }

    pub fn x(&self, i: usize) -> T {
        self.rect[0] + self.hx() * T::from(i).unwrap()
    }

    pub fn y(&self, j: usize) -> T {
        self.rect[2] + self.hy() * T::from(j).unwrap()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.u[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.u[j * self.nx + i] = v;
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn max_abs_diff(&self, o: &GridField<T>) -> T {
        self.u.iter().zip(&o.u).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    /// Central differences (u_x, u_y, u_xx, u_xy, u_yy) at an interior node.
    pub fn derivatives(&self, i: usize, j: usize) -> [T; 5] {
        let (hx, hy) = (self.hx(), self.hy());
        let two = c::<T>(2.0);
        let u = |a: usize, b: usize| self.get(a, b);
        [
            (u(i + 1, j) - u(i - 1, j)) / (two * hx),
            (u(i, j + 1) - u(i, j - 1)) / (two * hy),
            (u(i + 1, j) - two * u(i, j) + u(i - 1, j)) / (hx * hx),
            (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1)) / (c::<T>(4.0) * hx * hy),
            (u(i, j + 1) - two * u(i, j) + u(i, j - 1)) / (hy * hy),
        ]
    }

    /// Replaces the interior by the transfinite (Coons) interpolant of the boundary.
    pub fn coons_interior(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        let b = self.clone();
        for j in 1..ny - 1 {
            let t = T::from(j).unwrap() / T::from(ny - 1).unwrap();
            for i in 1..nx - 1 {
                let s = T::from(i).unwrap() / T::from(nx - 1).unwrap();
                let one = T::one();
                let v = (one - s) * b.get(0, j) + s * b.get(nx - 1, j) + (one - t) * b.get(i, 0) + t * b.get(i, ny - 1)
                    - (one - s) * (one - t) * b.get(0, 0)
                    - s * (one - t) * b.get(nx - 1, 0)
                    - (one - s) * t * b.get(0, ny - 1)
                    - s * t * b.get(nx - 1, ny - 1);
                self.set(i, j, v);
            }
        }
    }

    /// CSV dump `x,y,u` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,u\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
                let _ = writeln!(s, "{},{},{}", f(self.x(i)), f(self.y(j)), f(self.get(i, j)));
            }
        }
        s
    }

    /// Reads `ny` lines of `nx` comma-separated nodal values (lines starting
    /// with '#' are skipped).
    pub fn from_csv(text: &str, rect: [T; 4]) -> Result<Self, GridError> {
        let rows: Vec<Vec<T>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(',')
                    .map(|v| v.trim().parse::<f64>().map(c::<T>).map_err(|e| GridError::Parse(format!("{v:?}: {e}"))))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let ny = rows.len();
        let nx = rows.first().map_or(0, Vec::len);
        let mut g = Self::new(nx, ny, rect)?;
        for (j, r) in rows.into_iter().enumerate() {
            if r.len() != nx {
                return Err(GridError::Shape { want: nx, got: r.len() });
            }
            for (i, v) in r.into_iter().enumerate() {
                g.set(i, j, v);
            }
        }
        Ok(g)
    }
}

fn mse_point<T: Float>(d: &[T; 5]) -> T {
    let [p, q, r, s, t] = *d;
    let one = T::one();
    (one + q * q) * r - c::<T>(2.0) * p * q * s + (one + p * p) * t
}

/// Central-difference minimal surface operator at interior nodes (0 on the boundary).
pub fn graph_el_residual_grid<T: Float>(u: &GridField<T>) -> GridField<T> {
    let mut out = GridField { u: vec![T::zero(); u.u.len()], ..u.clone() };
    for j in 1..u.ny - 1 {
        for i in 1..u.nx - 1 {
            out.set(i, j, mse_point(&u.derivatives(i, j)));
        }
    }
    out
}

pub fn max_interior_abs<T: Float>(g: &GridField<T>) -> T {
    let mut m = T::zero();
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            m = m.max(g.get(i, j).abs());
        }
    }
    m
}

/// Banded LU with partial pivoting; row r stores columns [r−kl, r+kl+ku].
struct Banded<T> {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Float> Banded<T> {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        Banded { n, kl, ku, w, data: vec![T::zero(); n * w] }
    }

    fn at(&self, r: usize, col: usize) -> usize {
        r * self.w + col + self.kl - r
    }

    fn add(&mut self, r: usize, col: usize, v: T) {
        let k = self.at(r, col);
        self.data[k] = self.data[k] + v;
    }

    /// Factors in place and solves a·x = b.
    fn solve(mut self, mut b: Vec<T>) -> Result<Vec<T>, GridError> {
        let (n, kl) = (self.n, self.kl);
        let span = kl + self.ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for r in k + 1..=last {
                if self.data[self.at(r, k)].abs() > self.data[self.at(p, k)].abs() {
                    p = r;
                }
            }
            let piv = self.data[self.at(p, k)];
            if piv == T::zero() || !piv.is_finite() {
                return Err(GridError::Singular(k));
            }
            let cmax = (k + span).min(n - 1);
            if p != k {
                for col in k..=cmax {
                    let (a, bb) = (self.at(k, col), self.at(p, col));
                    self.data.swap(a, bb);
                }
                b.swap(k, p);
            }
            for r in k + 1..=last {
                let ir = self.at(r, k);
                let m = self.data[ir] / piv;
                if m == T::zero() {
                    continue;
                }
                self.data[ir] = T::zero();
                for col in k + 1..=cmax {
                    let (dst, src) = (self.at(r, col), self.at(k, col));
                    self.data[dst] = self.data[dst] - m * self.data[src];
                }
                b[r] = b[r] - m * b[k];
            }
        }
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut s = b[k];
            for col in k + 1..=(k + span).min(n - 1) {
                s = s - self.data[self.at(k, col)] * x[col];
            }
            x[k] = s / self.data[self.at(k, k)];
        }
        Ok(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub field: GridField<T>,
    pub iterations: usize,
    pub residual: T,
    pub history: Vec<NewtonStep>,
}

/// Damped Newton on the central-difference minimal surface equation, from the
/// Coons interpolant of the boundary. Stops when the max interior residual is
/// below `tol`.
pub fn solve_minimal_surface<T: Float>(
    boundary: &GridField<T>,
    tol: T,
    max_iter: usize,
) -> Result<SolveReport<T>, GridError> {
    let mut u = boundary.clone();
    u.coons_interior();
    let (nx, ny) = (u.nx, u.ny);
    let mx = nx - 2;
    let n = mx * (ny - 2);
    let idx = |i: usize, j: usize| (j - 1) * mx + (i - 1);
    let (hx, hy) = (u.hx(), u.hy());
    let two = c::<T>(2.0);
    let mut res = max_interior_abs(&graph_el_residual_grid(&u));
    let mut history = vec![NewtonStep { iteration: 0, residual: res.to_f64().unwrap_or(f64::NAN), damping: 0.0 }];
    let mut it = 0;
    while res >= tol {
        if it == max_iter {
            return Err(GridError::NoConvergence { iterations: it, residual: res.to_f64().unwrap_or(f64::NAN) });
        }
        it += 1;
        let mut a = Banded::new(n, mx + 1, mx + 1);
        let mut rhs = vec![T::zero(); n];
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let row = idx(i, j);
                let d = u.derivatives(i, j);
                let [p, q, r, s, t] = d;
                rhs[row] = -mse_point(&d);
                let dp = -two * q * s + two * p * t;
                let dq = two * q * r - two * p * s;
                let dr = T::one() + q * q;
                let ds = -two * p * q;
                let dt = T::one() + p * p;
                let sxy = ds / (c::<T>(4.0) * hx * hy);
                let stencil = [
                    (1i64, 0i64, dp / (two * hx) + dr / (hx * hx)),
                    (-1, 0, -dp / (two * hx) + dr / (hx * hx)),
                    (0, 1, dq / (two * hy) + dt / (hy * hy)),
                    (0, -1, -dq / (two * hy) + dt / (hy * hy)),
                    (0, 0, -two * dr / (hx * hx) - two * dt / (hy * hy)),
                    (1, 1, sxy),
                    (-1, -1, sxy),
                    (1, -1, -sxy),
                    (-1, 1, -sxy),
                ];
                for (di, dj, v) in stencil {
                    let (ii, jj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if !u.is_boundary(ii, jj) {
                        a.add(row, idx(ii, jj), v);
                    }
                }
            }
        }
        let delta = a.solve(rhs)?;
        let mut lam = T::one();
        let mut trial;
        loop {
            trial = u.clone();
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let v = u.get(i, j) + lam * delta[idx(i, j)];
                    trial.set(i, j, v);
                }
            }
            let r2 = max_interior_abs(&graph_el_residual_grid(&trial));
            if r2 < res || lam < c(1.0 / 1024.0) {
                res = r2;
                break;
            }
            lam = lam / two;
        }
        u = trial;
        history.push(NewtonStep {
            iteration: it,
            residual: res.to_f64().unwrap_or(f64::NAN),
            damping: lam.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(SolveReport { field: u, iterations: it, residual: res, history })
}

/// Scherk's surface u = ln(cos x / cos y).
pub fn scherk<T: Float>(x: T, y: T) -> T {
    (x.cos() / y.cos()).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub grid: usize,
    pub h: f64,
    pub max_error: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solver refinement study on Scherk data over [−1,1]²; returns the rows and
/// the observed orders between consecutive grids.
pub fn scherk_convergence(grids: &[usize], tol: f64, max_iter: usize) -> Result<(Vec<ConvergenceRow>, Vec<f64>), GridError> {
    let rect = [-1.0, 1.0, -1.0, 1.0];
    let mut rows = Vec::new();
    for &g in grids {
        let exact = GridField::from_fn(g, g, rect, scherk)?;
        let sol = solve_minimal_surface(&exact, tol, max_iter)?;
        rows.push(ConvergenceRow {
            grid: g,
            h: exact.h(),
            max_error: sol.field.max_abs_diff(&exact),
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    let orders = rows.windows(2).map(|w| (w[0].max_error / w[1].max_error).ln() / (w[0].h / w[1].h).ln()).collect();
    Ok((rows, orders))
}

/// The three currents (f, g, h) as pairs (dx, dy) of components at a node with
/// slopes p = u_x, q = u_y.
pub fn currents<T: Float>(p: T, q: T) -> [[T; 2]; 3] {
    let one = T::one();
    let w = (one + p * p + q * q).sqrt();
    [[p * q / w, (one + q * q) / w], [-(one + p * p) / w, -p * q / w], [-q / w, p / w]]
}

#[derive(Clone, Debug)]
pub struct Circulations<T> {
    /// per cell between interior nodes, row-major over (nx−3)×(ny−3), divided by the cell area
    pub cells: [Vec<T>; 3],
    pub max: [T; 3],
    pub gate: T,
}

impl<T: Float> Circulations<T> {
    pub fn closed(&self) -> bool {
        self.max.iter().all(|m| *m <= self.gate)
    }
}

fn node_currents<T: Float>(u: &GridField<T>) -> Vec<Option<[[T; 2]; 3]>> {
    let mut out = vec![None; u.u.len()];
    for j in 1..u.ny - 1 {
        for i in 1..u.nx - 1 {
            let d = u.derivatives(i, j);
            out[j * u.nx + i] = Some(currents(d[0], d[1]));
        }
    }
    out
}

/// Trapezoid circulation of each current around every cell whose corners are
/// interior nodes, divided by the cell area; gate 10·h².
pub fn conservation_residuals<T: Float>(u: &GridField<T>) -> Circulations<T> {
    let cur = node_currents(u);
    let (hx, hy) = (u.hx(), u.hy());
    let half = c::<T>(0.5);
    let mut cells: [Vec<T>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut max = [T::zero(); 3];
    let at = |i: usize, j: usize| cur[j * u.nx + i].expect("interior node");
    for j in 1..u.ny.saturating_sub(2) {
        for i in 1..u.nx.saturating_sub(2) {
            let (a, b, cc, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            for k in 0..3 {
                let circ = half * hx * (a[k][0] + b[k][0]) + half * hy * (b[k][1] + cc[k][1])
                    - half * hx * (cc[k][0] + d[k][0])
                    - half * hy * (d[k][1] + a[k][1]);
                let v = (circ / (hx * hy)).abs();
                cells[k].push(v);
                max[k] = max[k].max(v);
            }
        }
    }
    let h = u.h();
    Circulations { cells, max, gate: c::<T>(10.0) * h * h }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructionReport {
    pub h: f64,
    pub gate: f64,
    pub circulation_max: [f64; 3],
    pub closed: bool,
    /// max |u_x f_x + u_y g_x − h_x| and max |u_x f_y + u_y g_y − h_y|
    pub ufg_residual: [f64; 2],
    pub ufg_pass: bool,
    pub el_residual: f64,
    pub el_pass: bool,
}

impl ReconstructionReport {
    pub fn passed(&self) -> bool {
        self.closed && self.ufg_pass && self.el_pass
    }
}

/// Potentials f, g, h integrated along the first interior row, then up the
/// columns, and the residuals of u_x df + u_y dg − dh.
pub fn reconstruct<T: Float>(u: &GridField<T>) -> ReconstructionReport {
    let circ = conservation_residuals(u);
    let cur = node_currents(u);
    let (nx, ny) = (u.nx, u.ny);
    let (hx, hy) = (u.hx(), u.hy());
    let half = c::<T>(0.5);
    let at = |i: usize, j: usize| cur[j * nx + i].expect("interior node");
    let mut pot = vec![[T::zero(); 3]; nx * ny];
    for i in 2..nx - 1 {
        for k in 0..3 {
            pot[nx + i][k] = pot[nx + i - 1][k] + half * hx * (at(i - 1, 1)[k][0] + at(i, 1)[k][0]);
        }
    }
    for j in 2..ny - 1 {
        for i in 1..nx - 1 {
            for k in 0..3 {
                pot[j * nx + i][k] = pot[(j - 1) * nx + i][k] + half * hy * (at(i, j - 1)[k][1] + at(i, j)[k][1]);
            }
        }
    }
    let two = c::<T>(2.0);
    let mut ufg = [T::zero(); 2];
    for j in 2..ny.saturating_sub(2) {
        for i in 2..nx.saturating_sub(2) {
            let d = u.derivatives(i, j);
            let dx = |k: usize| (pot[j * nx + i + 1][k] - pot[j * nx + i - 1][k]) / (two * hx);
            let dy = |k: usize| (pot[(j + 1) * nx + i][k] - pot[(j - 1) * nx + i][k]) / (two * hy);
            ufg[0] = ufg[0].max((d[0] * dx(0) + d[1] * dx(1) - dx(2)).abs());
            ufg[1] = ufg[1].max((d[0] * dy(0) + d[1] * dy(1) - dy(2)).abs());
        }
    }
    let el = max_interior_abs(&graph_el_residual_grid(u));
    let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
    let gate = f(circ.gate);
    ReconstructionReport {
        h: f(u.h()),
        gate,
        circulation_max: circ.max.map(f),
        closed: circ.closed(),
        ufg_residual: ufg.map(f),
        ufg_pass: ufg.iter().all(|v| f(*v) <= gate),
        el_residual: f(el),
        el_pass: f(el) <= gate,
    }
}

/// As `reconstruct`, but refuses to integrate currents that fail the closedness gate.
pub fn reconstruct_and_check<T: Float>(u: &GridField<T>) -> Result<ReconstructionReport, GridError> {
    let r = reconstruct(u);
    if !r.closed {
        let max = r.circulation_max.iter().cloned().fold(0.0, f64::max);
        return Err(GridError::NotClosed { max, gate: r.gate });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::homogeneity::zermelo_residuals;
    use crate::lepage::{is_lepage, lagrangian_of, el_form_check};

    fn cfg() -> EqualConfig {
        EqualConfig::default()
    }

    fn chart(n: u16, m: u16) -> JetChart {
        JetChart::new(n, m, 1).unwrap()
    }

    #[test]
    fn lagrangian_examples() {
        let c = chart(1, 1);
        let l = minimal_lagrangian(&MetricSpec::euclidean(2), &c).unwrap();
        assert_eq!(l.l, parse("sqrt(y1_1^2 + y2_1^2)", &c).unwrap());
        let c = chart(2, 1);
        let l = minimal_lagrangian(&MetricSpec::euclidean(3), &c).unwrap();
        let graph = l.l.subs_fn(&|s| match s {
            CoordSymbol::Y1(k, j) if *k <= 2 => Some(if k == j { Expr::one() } else { Expr::zero() }),
            _ => None,
        });
        assert!(equal(&graph, &parse("sqrt(1 + y3_1^2 + y3_2^2)", &c).unwrap(), &cfg()).is_equal());
        assert!(zermelo_residuals(&l.l, &c, &cfg()).all_symbolic());
        assert!(matches!(minimal_lagrangian(&MetricSpec::euclidean(3), &chart(1, 1)), Err(MinimalError::Dimension { .. })));
    }

    #[test]
    fn metric_validation() {
        let c = chart(1, 1);
        let a = parse("y1", &c).unwrap();
        assert!(MetricSpec::matrix(vec![vec![Expr::one(), a.clone()], vec![Expr::zero(), Expr::one()]]).is_err());
        assert!(MetricSpec::matrix(vec![vec![Expr::y1(1, 1), Expr::zero()], vec![Expr::zero(), Expr::one()]]).is_err());
        let g = MetricSpec::matrix(vec![vec![Expr::int(2), a.clone()], vec![a, Expr::one()]]).unwrap();
        assert!(g.positive_definite_at(&Point::new().with(CoordSymbol::Y(1), 0.5)));
        assert!(!g.positive_definite_at(&Point::new().with(CoordSymbol::Y(1), 2.0)));
    }

    #[test]
    fn krupka_form_examples() {
        let c = chart(1, 1);
        let om = krupka_form(&MetricSpec::euclidean(2), &c).unwrap();
        let l = parse("sqrt(y1_1^2 + y2_1^2)", &c).unwrap();
        for k in 1..=2 {
            assert!(equal(&om.get(&[k]), &(Expr::y1(k, 1) * l.recip().unwrap()), &cfg()).is_equal());
        }
        for (n, m) in [(1, 1), (2, 1)] {
            let c = chart(n, m);
            let g = MetricSpec::euclidean(n + m);
            let om = krupka_form(&g, &c).unwrap();
            let l = minimal_lagrangian(&g, &c).unwrap();
            assert!(equal(&lagrangian_of(&om).l, &l.l, &cfg()).is_equal());
            assert!(is_lepage(&om, &cfg()).passed());
        }
        let c = chart(2, 1);
        let om = krupka_form(&MetricSpec::euclidean(3), &c).unwrap();
        assert!(el_form_check(&om, &cfg()).unwrap().passed());
    }

    #[test]
    fn coincidence_euclidean() {
        for (n, m) in [(1, 1), (2, 1), (2, 2)] {
            let r = verify_coincidence(&MetricSpec::euclidean(n + m), &chart(n, m), &cfg()).unwrap();
            assert!(r.passed, "{n},{m}: {r:?}");
        }
        assert!(caratheodory_matches_w(&MetricSpec::euclidean(3), &chart(2, 1), &cfg()).unwrap().passed());
    }

    #[test]
    fn coincidence_conformal_diagonal() {
        let c = chart(2, 1);
        let g = MetricSpec::diagonal(vec![parse("exp(y1)", &c).unwrap(), Expr::one(), Expr::one()]).unwrap();
        let cfg = EqualConfig { trials: 50, ..cfg() };
        let r = verify_coincidence(&g, &c, &cfg).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn graph_residual_examples() {
        let c = chart(2, 1);
        assert!(graph_el_residual(&parse("3*x1 - 2*x2 + 5", &c).unwrap()).unwrap().is_zero());
        assert!(graph_el_residual(&parse("ln(cos(x1)/cos(x2))", &c).unwrap()).unwrap().is_zero());
        let r = graph_el_residual(&parse("x1^2 + x2^2", &c).unwrap()).unwrap();
        let v = Compiled::new(&r).eval(&Point::new().with(CoordSymbol::X(1), 0.0).with(CoordSymbol::X(2), 0.0)).unwrap();
        assert_eq!(v, 4.0);
        let r = graph_el_residual(&parse("atan(x2/x1)", &c).unwrap()).unwrap();
        let rc = Compiled::new(&r);
        for (x, y) in [(1.0, 1.5), (1.9, 1.1)] {
            let v = rc.eval(&Point::new().with(CoordSymbol::X(1), x).with(CoordSymbol::X(2), y)).unwrap();
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn el_quotient_has_definite_factor() {
        let r = el_quotient(&cfg()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.factor_sign, -1);
    }

    #[test]
    fn banded_solver_matches_dense() {
        // tridiagonal with a zero leading pivot forces a row swap
        let n = 6;
        let mut a = Banded::<f64>::new(n, 1, 1);
        let mut dense = vec![vec![0.0; n]; n];
        for r in 0..n {
            for col in r.saturating_sub(1)..=(r + 1).min(n - 1) {
                let v = if r == 0 && col == 0 { 0.0 } else { (r * 3 + col * 7 % 5) as f64 + 1.0 };
                a.add(r, col, v);
                dense[r][col] = v;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.5).collect();
        let b: Vec<f64> = (0..n).map(|r| (0..n).map(|col| dense[r][col] * x[col]).sum()).collect();
        let got = a.solve(b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn planar_data_gives_planar_solution() {
        let plane = |x: f64, y: f64| 0.3 * x - 0.7 * y + 1.0;
        let b = GridField::from_fn(9, 9, [0.0, 1.0, 0.0, 1.0], plane).unwrap();
        let s = solve_minimal_surface(&b, 1e-10, 12).unwrap();
        assert!(s.field.max_abs_diff(&b) < 1e-12);
        let c = conservation_residuals(&b);
        assert!(c.max.iter().all(|m| *m < 1e-10));
        assert!(reconstruct_and_check(&b).unwrap().passed());
    }

    #[test]
    fn scherk_converges_at_second_order() {
        let (rows, orders) = scherk_convergence(&[9, 17, 33], 1e-10, 12).unwrap();
        for r in &rows {
            assert!(r.iterations <= 12 && r.residual < 1e-10, "{r:?}");
        }
        assert!(orders.iter().all(|o| *o >= 1.9), "{orders:?}");
    }

    #[test]
    fn paraboloid_data_converges_elsewhere() {
        let para = |x: f64, y: f64| x * x + y * y;
        let b = GridField::from_fn(17, 17, [-1.0, 1.0, -1.0, 1.0], para).unwrap();
        let s = solve_minimal_surface(&b, 1e-10, 12).unwrap();
        assert!(s.field.max_abs_diff(&b) > 0.1);
        assert!(max_interior_abs(&graph_el_residual_grid(&b)) >= 3.0);
        assert!(!reconstruct(&b).closed);
        assert!(reconstruct(&s.field).passed());
    }

    #[test]
    fn single_precision_solver() {
        let b = GridField::from_fn(9, 9, [-1.0f32, 1.0, -1.0, 1.0], scherk).unwrap();
        let s = solve_minimal_surface(&b, 1e-3f32, 12).unwrap();
        assert!(s.field.max_abs_diff(&b) < 1e-2);
    }

    #[test]
    fn perturbed_scherk_fails_closedness() {
        let b = GridField::from_fn(65, 65, [-1.0, 1.0, -1.0, 1.0], |x: f64, y: f64| scherk(x, y) + 0.1 * x * y).unwrap();
        assert!(matches!(reconstruct_and_check(&b), Err(GridError::NotClosed { .. })));
        let ok = GridField::from_fn(33, 33, [-1.0, 1.0, -1.0, 1.0], scherk::<f64>).unwrap();
        assert!(conservation_residuals(&ok).closed());
    }

    #[test]
    fn csv_roundtrip() {
        let g = GridField::from_csv("# u\n1,2,3\n4,5,6\n7,8,9\n", [0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!((g.nx, g.ny, g.get(2, 1)), (3, 3, 6.0));
        assert!(g.to_csv().starts_with("x,y,u\n0,0,1\n"));
        assert!(GridField::<f64>::from_csv("1,2\n3,4\n", [0.0, 1.0, 0.0, 1.0]).is_err());
    }
}
