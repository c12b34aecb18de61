//! `lepage` command line: problem ingestion, dispatch and JSON/LaTeX reports.
//!
//! Exit codes: 0 pass, 1 mathematical failure (or undecided check), 2 input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::acceptance;
use crate::charts::{AdaptedChart, JetChart};
use crate::expr::{parse, EqualConfig, Expr};
use crate::forms::{DiffForm, ImmersionSpec};
use crate::homogeneity::zermelo_residuals;
use crate::lepage::{
    caratheodory, check_horizontal_part, check_lepage_property, el_form_check, euler_lagrange, fundamental,
    fundamental_homogeneous, hilbert_caratheodory, is_lepage, lagrangian_of, poincare_cartan, HorizontalNForm,
    Lagrangian, LepageError, Verdict,
};
use crate::minimal::{krupka_form, minimal_lagrangian, reconstruct, scherk, solve_minimal_surface, GridError, GridField, MetricSpec};
use crate::variation::{current_closed_along, noether_current, noether_residual, VectorFieldSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "lepage", version, about = "Lepage equivalents, Euler-Lagrange and Noether currents, minimal surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// problem description (JSON)
    #[arg(long, global = true)]
    pub problem: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// seed for randomized equality checks (overrides the problem's seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// equality tolerance; for `minsurf` the Newton residual tolerance
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// sample points per randomized equality check
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// write the report here instead of stdout
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// include wall-clock timings (makes output nondeterministic)
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Euler-Lagrange expressions E_K of the problem's Lagrangian
    DeriveEl,
    /// Construct a Lepage equivalent
    Lepage {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Check Lepage equivalents (constructed ones, or the problem's `form`)
    CheckLepage {
        /// restrict to one constructor
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// number of random vertical fields
        #[arg(long, default_value_t = 20)]
        fields: usize,
    },
    /// Zermelo homogeneity conditions
    CheckZermelo,
    /// Noether residuals and currents of the homogeneous equivalent
    Noether,
    /// Solve the minimal surface equation on a grid and check the conservation laws
    Minsurf {
        #[arg(long)]
        grid: Option<usize>,
        /// a,b,c,d for [a,b]×[c,d]
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        /// scherk, plane, paraboloid, or a CSV file of nodal values
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// dump the solution as x,y,u rows
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the acceptance suite
    Selftest,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Latex,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Pc,
    Fundamental,
    Caratheodory,
    Hc,
    W,
    /// the metric form ω_λ (metric problems only)
    Omega,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Pc => "pc",
            Kind::Fundamental => "fundamental",
            Kind::Caratheodory => "caratheodory",
            Kind::Hc => "hc",
            Kind::W => "w",
            Kind::Omega => "omega",
        }
    }
}

// ---- problem files ----

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct ChartDecl {
    pub n: u16,
    pub m: u16,
    #[serde(default = "one")]
    pub order: u8,
    #[serde(default)]
    pub params: Vec<String>,
    #[serde(default)]
    pub functions: BTreeMap<String, usize>,
    pub adapted: Option<Vec<u16>>,
}

fn one() -> u8 {
    1
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
pub enum MetricDecl {
    Named(String),
    Diagonal { diagonal: Vec<String> },
    Matrix { matrix: Vec<Vec<String>> },
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct ImmersionDecl {
    pub graph: Option<Vec<String>>,
    pub components: Option<Vec<String>>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverDecl {
    pub grid: Option<usize>,
    pub domain: Option<[f64; 4]>,
    pub boundary: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub chart: ChartDecl,
    pub metric: Option<MetricDecl>,
    pub lagrangian: Option<String>,
    /// horizontal n-form coefficients keyed by comma-separated fiber indices
    pub form: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub vector_fields: Vec<Vec<String>>,
    pub immersion: Option<ImmersionDecl>,
    pub solver: Option<SolverDecl>,
    pub seed: Option<u64>,
}

/// Input error: exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type In<T> = Result<T, InputError>;

fn bad<T>(msg: impl Into<String>) -> In<T> {
    Err(InputError(msg.into()))
}

/// A parsed problem with its chart.
pub struct Problem {
    pub spec: ProblemSpec,
    pub chart: JetChart,
}

impl Problem {
    pub fn from_json(text: &str) -> In<Problem> {
        let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| InputError(format!("problem: {e}")))?;
        let c = &spec.chart;
        let mut chart = JetChart::new(c.n, c.m, c.order)?;
        for p in &c.params {
            chart = chart.with_param(p);
        }
        for (f, a) in &c.functions {
            chart = chart.with_function(f, *a);
        }
        let given = spec.metric.is_some() as u8 + spec.lagrangian.is_some() as u8 + spec.form.is_some() as u8;
        if given > 1 {
            return bad("give at most one of metric, lagrangian, form");
        }
        Ok(Problem { spec, chart })
    }

    pub fn load(path: &Path) -> In<Problem> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        Problem::from_json(&text)
    }

    fn expr(&self, s: &str) -> In<Expr> {
        parse(s, &self.chart).map_err(|e| InputError(format!("{s:?}: {e}")))
    }

    pub fn metric(&self) -> In<Option<MetricSpec>> {
        let dim = self.chart.big_m() as usize;
        let g = match &self.spec.metric {
            None => return Ok(None),
            Some(MetricDecl::Named(s)) if s == "euclidean" => MetricSpec::euclidean(dim as u16),
            Some(MetricDecl::Named(s)) => return bad(format!("unknown metric {s:?}")),
            Some(MetricDecl::Diagonal { diagonal }) => {
                MetricSpec::diagonal(diagonal.iter().map(|s| self.expr(s)).collect::<In<_>>()?)?
            }
            Some(MetricDecl::Matrix { matrix }) => MetricSpec::matrix(
                matrix.iter().map(|r| r.iter().map(|s| self.expr(s)).collect::<In<Vec<_>>>()).collect::<In<_>>()?,
            )?,
        };
        if g.dim() != dim {
            return bad(format!("metric has dimension {}, chart needs {dim}", g.dim()));
        }
        Ok(Some(g))
    }

    pub fn horizontal_form(&self) -> In<Option<HorizontalNForm>> {
        let Some(form) = &self.spec.form else { return Ok(None) };
        let mut h = HorizontalNForm::new(self.chart.clone());
        for (k, v) in form {
            let ks: Vec<u16> = k.split(',').map(|t| t.trim().parse::<u16>()).collect::<Result<_, _>>()?;
            if ks.len() != self.chart.n as usize || ks.iter().any(|&i| i < 1 || i > self.chart.big_m()) {
                return bad(format!("form index {k:?}: need {} indices in 1..={}", self.chart.n, self.chart.big_m()));
            }
            let e = self.expr(v)?;
            if !h.get(&ks).is_zero() {
                return bad(format!("form index {k:?} given twice"));
            }
            h.set(&ks, e);
        }
        Ok(Some(h))
    }

    pub fn lagrangian(&self) -> In<Lagrangian> {
        if let Some(g) = self.metric()? {
            return Ok(minimal_lagrangian(&g, &self.chart)?);
        }
        if let Some(s) = &self.spec.lagrangian {
            return Ok(Lagrangian::new(self.chart.clone(), self.expr(s)?)?);
        }
        if let Some(h) = self.horizontal_form()? {
            return Ok(lagrangian_of(&h));
        }
        bad("problem needs one of metric, lagrangian, form")
    }

    pub fn adapted(&self) -> In<AdaptedChart> {
        let sub = self.spec.chart.adapted.clone().unwrap_or_else(|| (1..=self.chart.n).collect());
        Ok(AdaptedChart::new(self.chart.clone(), sub)?)
    }

    pub fn vector_fields(&self) -> In<Vec<VectorFieldSpec>> {
        let big_m = self.chart.big_m();
        if self.spec.vector_fields.is_empty() {
            return Ok((1..=big_m).map(|k| VectorFieldSpec::coordinate(big_m, k)).collect());
        }
        self.spec
            .vector_fields
            .iter()
            .map(|f| {
                if f.len() != big_m as usize {
                    return bad(format!("vector field needs {big_m} components, got {}", f.len()));
                }
                Ok(VectorFieldSpec::new(f.iter().map(|s| self.expr(s)).collect::<In<_>>()?)?)
            })
            .collect()
    }

    pub fn immersion(&self) -> In<Option<ImmersionSpec>> {
        let Some(d) = &self.spec.immersion else { return Ok(None) };
        let n = self.chart.n;
        let z = match (&d.graph, &d.components) {
            (Some(g), None) if g.len() == self.chart.m as usize => {
                ImmersionSpec::graph(n, g.iter().map(|s| self.expr(s)).collect::<In<_>>()?)
            }
            (None, Some(c)) if c.len() == self.chart.big_m() as usize => {
                ImmersionSpec::new(n, c.iter().map(|s| self.expr(s)).collect::<In<_>>()?)
            }
            _ => return bad(format!("immersion: give graph ({} entries) or components ({} entries)", self.chart.m, self.chart.big_m())),
        };
        for s in z.comps.iter().flat_map(Expr::free_symbols) {
            if !matches!(s, crate::CoordSymbol::X(_) | crate::CoordSymbol::Param(_)) {
                return bad(format!("immersion depends on {s}"));
            }
        }
        Ok(Some(z))
    }
}

// ---- reports ----

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Unknown,
}

impl Status {
    fn of(v: &Verdict) -> Status {
        match v {
            Verdict::Pass => Status::Pass,
            Verdict::Fail(_) => Status::Fail,
            Verdict::Unknown => Status::Unknown,
        }
    }

    fn and(self, o: Status) -> Status {
        match (self, o) {
            (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
            (Status::Unknown, _) | (_, Status::Unknown) => Status::Unknown,
            _ => Status::Pass,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Unknown => "unknown",
        }
    }

    fn code(self) -> i32 {
        if self == Status::Pass {
            0
        } else {
            1
        }
    }
}

struct Outcome {
    status: Status,
    payload: Value,
    /// display-math lines for `--format latex`
    latex: Vec<String>,
}

impl Outcome {
    fn new(status: Status, payload: Value) -> Outcome {
        Outcome { status, payload, latex: Vec::new() }
    }
}

/// Exit code and rendered report text.
pub struct Rendered {
    pub code: i32,
    pub text: String,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::DeriveEl => "derive-el",
        Command::Lepage { .. } => "lepage",
        Command::CheckLepage { .. } => "check-lepage",
        Command::CheckZermelo => "check-zermelo",
        Command::Noether => "noether",
        Command::Minsurf { .. } => "minsurf",
        Command::Selftest => "selftest",
    }
}

/// Parses `argv` and runs the command, without touching stdout.
pub fn execute<I, T>(argv: I) -> Rendered
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return Rendered { code, text: e.render().to_string() };
        }
    };
    let name = command_name(&cli.command);
    let t = Instant::now();
    let result = dispatch(&cli);
    let elapsed = t.elapsed().as_secs_f64();
    let (code, mut report, latex) = match result {
        Ok(o) => (
            o.status.code(),
            json!({ "schema_version": SCHEMA_VERSION, "command": name, "status": o.status.name(), "payload": o.payload }),
            o.latex,
        ),
        Err(InputError(msg)) => {
            (2, json!({ "schema_version": SCHEMA_VERSION, "command": name, "status": "error", "error": msg }), Vec::new())
        }
    };
    if cli.timing {
        report["timing"] = json!({ "seconds": elapsed });
    }
    let text = if cli.format == Format::Latex && code != 2 && !latex.is_empty() {
        let mut s = String::new();
        for l in &latex {
            let _ = writeln!(s, "\\[\n{l}\n\\]");
        }
        s
    } else {
        serde_json::to_string_pretty(&report).unwrap_or_default() + "\n"
    };
    if let Some(path) = &cli.output {
        if let Err(e) = std::fs::write(path, &text) {
            return Rendered { code: 2, text: format!("{}: {e}\n", path.display()) };
        }
        return Rendered { code, text: String::new() };
    }
    Rendered { code, text }
}

/// Runs the command, prints the report, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let r = execute(argv);
    if r.code == 2 && !r.text.starts_with('{') {
        eprint!("{}", r.text);
    } else {
        print!("{}", r.text);
    }
    r.code
}

fn config(cli: &Cli, problem: Option<&Problem>) -> EqualConfig {
    let d = EqualConfig::default();
    EqualConfig {
        trials: cli.trials.unwrap_or(d.trials),
        tol: cli.tol.unwrap_or(d.tol),
        seed: cli.seed.or(problem.and_then(|p| p.spec.seed)).unwrap_or(d.seed),
    }
}

fn problem(cli: &Cli) -> In<Problem> {
    match &cli.problem {
        Some(p) => Problem::load(p),
        None => bad("--problem FILE is required"),
    }
}

fn dispatch(cli: &Cli) -> In<Outcome> {
    match &cli.command {
        Command::DeriveEl => derive_el(cli),
        Command::Lepage { kind } => lepage(cli, *kind),
        Command::CheckLepage { kind, fields } => check_lepage(cli, *kind, *fields),
        Command::CheckZermelo => check_zermelo(cli),
        Command::Noether => noether(cli),
        Command::Minsurf { grid, domain, boundary, max_iter, csv } => {
            minsurf(cli, *grid, domain.as_deref(), boundary.as_deref(), *max_iter, csv.as_deref())
        }
        Command::Selftest => selftest(cli),
    }
}

fn derive_el(cli: &Cli) -> In<Outcome> {
    let p = problem(cli)?;
    let lam = p.lagrangian()?;
    let el = euler_lagrange(&lam)?;
    let mut o = Outcome::new(
        Status::Pass,
        json!({
            "lagrangian": lam.l.to_string(),
            "euler_lagrange": el.iter().enumerate().map(|(k, e)| json!({ "k": k + 1, "expr": e.to_string() })).collect::<Vec<_>>(),
        }),
    );
    o.latex.push(format!("\\mathcal{{L}} = {}", lam.l.to_latex()));
    for (k, e) in el.iter().enumerate() {
        o.latex.push(format!("E_{{{}}} = {}", k + 1, e.to_latex()));
    }
    Ok(o)
}

/// Builds ρ of the given kind; `Err(Ok(outcome))` carries a mathematical refusal.
fn construct(p: &Problem, kind: Kind, cfg: &EqualConfig) -> In<Result<DiffForm, Outcome>> {
    let lam = p.lagrangian()?;
    let r = match kind {
        Kind::Pc => poincare_cartan(&lam),
        Kind::Fundamental => fundamental(&lam),
        Kind::Caratheodory => caratheodory(&lam),
        Kind::Hc => hilbert_caratheodory(&lam, cfg),
        Kind::W => fundamental_homogeneous(&lam, cfg),
        Kind::Omega => {
            let Some(g) = p.metric()? else { return bad("kind omega needs a metric problem") };
            return Ok(Ok(krupka_form(&g, &p.chart)?.to_form()));
        }
    };
    match r {
        Ok(f) => Ok(Ok(f)),
        Err(LepageError::NotHomogeneous { j, l, witness }) => Ok(Err(Outcome::new(
            Status::Fail,
            json!({ "kind": kind.name(), "reason": "not homogeneous", "zermelo": { "j": j, "l": l }, "witness": witness }),
        ))),
        Err(LepageError::FundamentalMismatch(w)) => Ok(Err(Outcome::new(
            Status::Fail,
            json!({ "kind": kind.name(), "reason": "W differs from Z", "witness": w }),
        ))),
        Err(e) => bad(e.to_string()),
    }
}

fn lepage(cli: &Cli, kind: Kind) -> In<Outcome> {
    let p = problem(cli)?;
    let cfg = config(cli, Some(&p));
    let rho = match construct(&p, kind, &cfg)? {
        Ok(f) => f,
        Err(o) => return Ok(o),
    };
    let mut o = Outcome::new(Status::Pass, json!({ "kind": kind.name(), "form": rho.to_json() }));
    o.latex.push(format!("\\rho_{{\\mathrm{{{}}}}} = {}", kind.name(), rho.to_latex()));
    Ok(o)
}

fn check_lepage(cli: &Cli, only: Option<Kind>, fields: usize) -> In<Outcome> {
    let p = problem(cli)?;
    let cfg = config(cli, Some(&p));
    if let Some(h) = p.horizontal_form()? {
        let v = is_lepage(&h, &cfg);
        if !v.passed() {
            return Ok(Outcome::new(Status::of(&v), json!({ "form": h.to_form().to_json(), "lepage": v, "el_form": null })));
        }
        let el = el_form_check(&h, &cfg)?;
        return Ok(Outcome::new(Status::of(&el), json!({ "form": h.to_form().to_json(), "lepage": v, "el_form": el })));
    }
    let lam = p.lagrangian()?;
    let kinds: Vec<Kind> = match only {
        Some(k) => vec![k],
        None => {
            let mut v = vec![Kind::Pc, Kind::Fundamental, Kind::Caratheodory, Kind::Hc, Kind::W];
            if p.spec.metric.is_some() {
                v.push(Kind::Omega);
            }
            v
        }
    };
    let mut status = Status::Pass;
    let mut rows = Vec::new();
    for k in kinds {
        match construct(&p, k, &cfg)? {
            Ok(rho) => {
                let h = check_horizontal_part(&rho, &lam, &cfg)?;
                let l = check_lepage_property(&rho, &p.chart, fields, &cfg)?;
                status = status.and(Status::of(&h)).and(Status::of(&l));
                rows.push(json!({ "kind": k.name(), "horizontal": h, "lepage": l }));
            }
            // a non-homogeneous λ has no hc/w; only an explicit request counts as failure
            Err(o) => {
                if only.is_some() {
                    status = Status::Fail;
                }
                rows.push(json!({ "kind": k.name(), "skipped": o.payload }));
            }
        }
    }
    Ok(Outcome::new(status, json!({ "lagrangian": lam.l.to_string(), "fields": fields, "checks": rows })))
}

fn check_zermelo(cli: &Cli) -> In<Outcome> {
    let p = problem(cli)?;
    let cfg = config(cli, Some(&p));
    let lam = p.lagrangian()?;
    let r = zermelo_residuals(&lam.l, &lam.chart, &cfg);
    let status = if r.passed() {
        Status::Pass
    } else if r.failure().is_some() {
        Status::Fail
    } else {
        Status::Unknown
    };
    let mut o = Outcome::new(status, json!({ "lagrangian": lam.l.to_string(), "zermelo": r.to_json() }));
    for (j, row) in r.residuals.iter().enumerate() {
        for (l, e) in row.iter().enumerate() {
            o.latex.push(format!("Z_{{{}{}}} = {}", j + 1, l + 1, e.to_latex()));
        }
    }
    Ok(o)
}

fn noether(cli: &Cli) -> In<Outcome> {
    let p = problem(cli)?;
    let cfg = config(cli, Some(&p));
    let ac = p.adapted()?;
    let w = match p.metric()? {
        Some(g) => krupka_form(&g, &p.chart)?.to_form(),
        None => match construct(&p, Kind::W, &cfg)? {
            Ok(f) => f,
            Err(o) => return Ok(o),
        },
    };
    let zeta = p.immersion()?;
    let mut status = Status::Pass;
    let mut rows = Vec::new();
    let mut latex = Vec::new();
    for (i, xi) in p.vector_fields()?.iter().enumerate() {
        let (res, v) = noether_residual(xi, &w, &ac, &cfg)?;
        status = status.and(Status::of(&v));
        let current = noether_current(xi, &w, &ac)?;
        let mut row = json!({
            "field": xi.comps.iter().map(Expr::to_string).collect::<Vec<_>>(),
            "residual": res.to_json(),
            "verdict": v,
            "current": current.to_json(),
        });
        if let Some(z) = &zeta {
            let c = current_closed_along(&current, z, &ac, &cfg)?;
            status = status.and(Status::of(&c));
            row["closed_along_immersion"] = json!(c);
        }
        latex.push(format!("J_{{{}}} = {}", i + 1, current.to_latex()));
        rows.push(row);
    }
    let mut o = Outcome::new(status, json!({ "adapted": ac.sub, "fields": rows }));
    o.latex = latex;
    Ok(o)
}

fn parse_domain(s: &str) -> In<[f64; 4]> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => bad(format!("--domain needs a,b,c,d, got {s:?}")),
    }
}

fn minsurf(
    cli: &Cli,
    grid: Option<usize>,
    domain: Option<&str>,
    boundary: Option<&str>,
    max_iter: Option<usize>,
    csv: Option<&Path>,
) -> In<Outcome> {
    let p = cli.problem.as_deref().map(Problem::load).transpose()?;
    let empty = SolverDecl::default();
    let s = p.as_ref().and_then(|p| p.spec.solver.as_ref()).unwrap_or(&empty);
    let n = grid.or(s.grid).unwrap_or(33);
    let rect = match domain {
        Some(d) => parse_domain(d)?,
        None => s.domain.unwrap_or([-1.0, 1.0, -1.0, 1.0]),
    };
    let tol = cli.tol.or(s.tol).unwrap_or(1e-10);
    let max_iter = max_iter.or(s.max_iter).unwrap_or(20);
    let which = boundary.map(str::to_string).or(s.boundary.clone()).unwrap_or_else(|| "scherk".into());
    let exact: Option<fn(f64, f64) -> f64> = match which.as_str() {
        "scherk" => Some(scherk::<f64>),
        "plane" => Some(|x, y| 0.5 * x - 0.25 * y + 1.0),
        _ => None,
    };
    let data = match which.as_str() {
        "scherk" => {
            let lim = std::f64::consts::FRAC_PI_2;
            if rect.iter().any(|v| v.abs() >= lim) {
                return bad("scherk boundary needs a domain inside (-pi/2, pi/2)^2");
            }
            GridField::from_fn(n, n, rect, scherk::<f64>)?
        }
        "plane" => GridField::from_fn(n, n, rect, |x, y| 0.5 * x - 0.25 * y + 1.0)?,
        "paraboloid" => GridField::from_fn(n, n, rect, |x, y| x * x + y * y)?,
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{path}: {e}")))?;
            GridField::from_csv(&text, rect)?
        }
    };
    let sol = match solve_minimal_surface(&data, tol, max_iter) {
        Ok(s) => s,
        Err(GridError::NoConvergence { iterations, residual }) => {
            return Ok(Outcome::new(
                Status::Fail,
                json!({ "boundary": which, "reason": "no convergence", "iterations": iterations, "residual": residual }),
            ))
        }
        Err(e) => return bad(e.to_string()),
    };
    let rec = reconstruct(&sol.field);
    let error = exact.map(|f| {
        let e = GridField::from_fn(sol.field.nx, sol.field.ny, rect, f).expect("same shape");
        sol.field.max_abs_diff(&e)
    });
    if let Some(path) = csv {
        std::fs::write(path, sol.field.to_csv()).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    }
    let status = if rec.passed() { Status::Pass } else { Status::Fail };
    Ok(Outcome::new(
        status,
        json!({
            "boundary": which,
            "grid": { "nx": sol.field.nx, "ny": sol.field.ny, "domain": rect, "h": sol.field.h() },
            "residuals": { "newton": sol.residual, "tol": tol, "max_error": error },
            "iterations": sol.iterations,
            "history": sol.history,
            "circulations": rec,
        }),
    ))
}

fn selftest(cli: &Cli) -> In<Outcome> {
    let cfg = config(cli, None);
    let results = acceptance::run_all(&cfg);
    let status = if results.iter().all(|r| r.passed) { Status::Pass } else { Status::Fail };
    let rows: Vec<Value> = results
        .iter()
        .map(|r| {
            let mut v = json!(r);
            if cli.timing {
                v["seconds"] = json!(r.elapsed);
            }
            v
        })
        .collect();
    Ok(Outcome::new(status, json!({ "criteria": rows })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem_file(name: &str, body: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("lepage-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn run_args(args: &[&str]) -> Rendered {
        execute(std::iter::once("lepage").chain(args.iter().copied()))
    }

    const MINIMAL: &str = r#"{"chart":{"n":2,"m":1},"metric":"euclidean"}"#;

    #[test]
    fn zermelo_on_minimal_passes() {
        let f = problem_file("min.json", MINIMAL);
        let r = run_args(&["check-zermelo", "--problem", f.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.text);
        let v: Value = serde_json::from_str(&r.text).unwrap();
        assert_eq!(v["schema_version"], 1);
        for e in v["payload"]["zermelo"]["residuals"].as_array().unwrap() {
            assert_eq!(e["residual"], "0");
        }
    }

    #[test]
    fn control_fails_with_witness() {
        let f = problem_file("ctl.json", r#"{"chart":{"n":2,"m":1},"lagrangian":"y1_1^2"}"#);
        let r = run_args(&["check-zermelo", "--problem", f.to_str().unwrap()]);
        assert_eq!(r.code, 1);
        assert!(r.text.contains("witness"));
        let r = run_args(&["lepage", "--kind", "w", "--problem", f.to_str().unwrap()]);
        assert_eq!(r.code, 1);
    }

    #[test]
    fn input_errors_exit_2() {
        let f = problem_file("nonsense.json", r#"{"lagrangian":"y1_1"}"#);
        assert_eq!(run_args(&["derive-el", "--problem", f.to_str().unwrap()]).code, 2);
        assert_eq!(run_args(&["derive-el"]).code, 2);
        assert_eq!(run_args(&["derive-el", "--bogus"]).code, 2);
        let g = problem_file("both.json", r#"{"chart":{"n":1,"m":1},"lagrangian":"y1_1","metric":"euclidean"}"#);
        assert_eq!(run_args(&["derive-el", "--problem", g.to_str().unwrap()]).code, 2);
        let h = problem_file("badexpr.json", r#"{"chart":{"n":1,"m":1},"lagrangian":"y7_1"}"#);
        assert_eq!(run_args(&["derive-el", "--problem", h.to_str().unwrap()]).code, 2);
    }

    #[test]
    fn reports_are_deterministic() {
        let f = problem_file("det.json", MINIMAL);
        let a = run_args(&["check-lepage", "--problem", f.to_str().unwrap(), "--seed", "7"]);
        let b = run_args(&["check-lepage", "--problem", f.to_str().unwrap(), "--seed", "7"]);
        assert_eq!(a.code, 0, "{}", a.text);
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn w_kind_and_latex() {
        let f = problem_file("w.json", MINIMAL);
        let r = run_args(&["lepage", "--kind", "w", "--problem", f.to_str().unwrap()]);
        assert_eq!(r.code, 0);
        let v: Value = serde_json::from_str(&r.text).unwrap();
        assert!(v["payload"]["form"].is_object() || v["payload"]["form"].is_array());
        let r = run_args(&["derive-el", "--problem", f.to_str().unwrap(), "--format", "latex"]);
        assert!(r.text.starts_with("\\["), "{}", r.text);
    }

    #[test]
    fn horizontal_form_problem() {
        let f = problem_file("form.json", r#"{"chart":{"n":2,"m":1},"form":{"1,2":"1"}}"#);
        let r = run_args(&["check-lepage", "--problem", f.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.text);
        let g = problem_file("nonlepage.json", r#"{"chart":{"n":2,"m":1},"form":{"1,3":"y3_1"}}"#);
        let r = run_args(&["check-lepage", "--problem", g.to_str().unwrap()]);
        assert_eq!(r.code, 1, "{}", r.text);
    }

    #[test]
    fn noether_with_plane() {
        let f = problem_file(
            "noe.json",
            r#"{"chart":{"n":2,"m":1,"adapted":[1,2]},"metric":"euclidean","immersion":{"graph":["x1 - 2*x2"]}}"#,
        );
        let r = run_args(&["noether", "--problem", f.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.text);
    }

    #[test]
    fn minsurf_builtin_and_csv() {
        let out = std::env::temp_dir().join(format!("lepage-ms-{}.csv", std::process::id()));
        let r = run_args(&["minsurf", "--grid", "17", "--csv", out.to_str().unwrap()]);
        assert_eq!(r.code, 0, "{}", r.text);
        assert!(std::fs::read_to_string(&out).unwrap().starts_with("x,y,u"));
        let r = run_args(&["minsurf", "--grid", "9", "--domain", "-2,2,-1,1"]);
        assert_eq!(r.code, 2);
    }
}
