//! Identity catalog: one `.qid` file per identity.
//!
//! A file is a list of `key: value` fields. A line starting with whitespace
//! continues the previous field, and a line starting with `#` is ignored.
//!
//! ```text
//! id: B1
//! alias: Rama1psi1
//! paper: Rama1psi1
//! symbols: a, b, z@mod(0.2,0.95)
//! let: w = a*z
//! constraint: |b/a| < |z| < 1
//! lhs: psi(a; b; q; z)
//! rhs: qpoch_inf(q, b/a, w, q/w; q) / qpoch_inf(b, q/a, z, b/w; q)
//! note: free text
//! ```
//!
//! `let:` defines a macro that is substituted into every later expression.
//! A symbol is sampled by modulus (`@mod`, log-uniform, random phase), as a
//! real number (`@real`, uniform) or as a positive real (`@pos`, log-uniform).
//! Declaring `q@...` narrows the modulus range of the base. Constraints are
//! modulus chains `|x| < |y| < c`, or one of `nonzero(e)`, `notunity(e)`,
//! `repositive(e)`, `lattice(e)` and `false`, each optionally followed by
//! `; margin=m`. `tolerance: digits-N` relaxes the pass threshold to
//! `10^-(digits-N)`.
//!
//! Loading also derives guards from the expressions: arguments of products,
//! theta functions and series parameters stay off the lattice `q^Z`, series
//! keep a convergence margin, and pure prefactors stay away from zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::engine::{psi_converges, wp_converges, BilateralConvergence, SeriesSpec, WellPoisedSpec};
use crate::error::{Error, Result};
use crate::expr::{expand_idem, free_symbols, parse_at, Expr, ParamEnv};
use crate::precision::PrecisionComplex;
use crate::qcore::{lattice_distance, lattice_window, QBase, TruncationControl};

/// Smallest admissible `|1 - x q^k|` for guarded arguments.
pub const LATTICE_THRESHOLD: f64 = 1e-3;
/// Smallest admissible modulus of a prefactor.
pub const PREFACTOR_FLOOR: f64 = 1e-8;
/// Largest `|k|` scanned by lattice guards.
pub const LATTICE_MAX_EXPONENT: i64 = 200;
/// Default sampling range for symbol moduli.
pub const DEFAULT_RANGE: (f64, f64) = (0.3, 1.8);

#[derive(Clone, Debug, PartialEq)]
pub enum Sampling {
    Modulus { lo: f64, hi: f64 },
    Real { lo: f64, hi: f64 },
    Positive { lo: f64, hi: f64 },
}

impl Sampling {
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Sampling::Modulus { lo, hi } | Sampling::Real { lo, hi } | Sampling::Positive { lo, hi } => (lo, hi),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Modulus { lo, hi } => write!(f, "mod({lo},{hi})"),
            Sampling::Real { lo, hi } => write!(f, "real({lo},{hi})"),
            Sampling::Positive { lo, hi } => write!(f, "pos({lo},{hi})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSpec {
    pub name: String,
    pub sampling: Sampling,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `|lhs| < |rhs|`; sampling demands `|lhs| <= (1 - margin)|rhs|`.
    ModulusLess { lhs: Expr, rhs: Expr, margin: Option<f64> },
    /// `x` keeps `|1 - x q^k| >= LATTICE_THRESHOLD` for `|k| <= max_exponent`.
    NotInQPowerLattice { e: Expr, max_exponent: i64 },
    NonZero(Expr),
    NotUnity(Expr),
    RePositive(Expr),
    /// Distance at least `LATTICE_THRESHOLD` from `0, -1, -2, ...`.
    NotNonPositiveInteger(Expr),
    /// The series node converges with at least the sampling margin.
    SeriesMargin(Expr),
    /// `|e| > PREFACTOR_FLOOR`.
    PrefactorModulus(Expr),
    Unsatisfiable,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::ModulusLess { lhs, rhs, margin } => {
                write!(f, "|{lhs}| < |{rhs}|")?;
                if let Some(m) = margin {
                    write!(f, "; margin={m}")?;
                }
                Ok(())
            }
            Constraint::NotInQPowerLattice { e, .. } => write!(f, "lattice({e})"),
            Constraint::NonZero(e) => write!(f, "nonzero({e})"),
            Constraint::NotUnity(e) => write!(f, "notunity({e})"),
            Constraint::RePositive(e) => write!(f, "repositive({e})"),
            Constraint::NotNonPositiveInteger(e) => write!(f, "offpoles({e})"),
            Constraint::SeriesMargin(e) => write!(f, "converges({e})"),
            Constraint::PrefactorModulus(e) => write!(f, "prefactor({e})"),
            Constraint::Unsatisfiable => write!(f, "false"),
        }
    }
}

impl Constraint {
    fn exprs(&self) -> Vec<&Expr> {
        match self {
            Constraint::ModulusLess { lhs, rhs, .. } => vec![lhs, rhs],
            Constraint::NotInQPowerLattice { e, .. }
            | Constraint::NonZero(e)
            | Constraint::NotUnity(e)
            | Constraint::RePositive(e)
            | Constraint::NotNonPositiveInteger(e)
            | Constraint::SeriesMargin(e)
            | Constraint::PrefactorModulus(e) => vec![e],
            Constraint::Unsatisfiable => vec![],
        }
    }

    /// Whether the constraint holds at `env`; `margin` is the sampler's
    /// default slack for modulus and convergence inequalities.
    pub fn holds(&self, env: &ParamEnv, ctl: &TruncationControl, margin: f64) -> bool {
        self.check(env, ctl, margin).unwrap_or(false)
    }

    fn check(&self, env: &ParamEnv, ctl: &TruncationControl, margin: f64) -> Result<bool> {
        let ev = |e: &Expr| e.eval(env, ctl);
        Ok(match self {
            Constraint::ModulusLess { lhs, rhs, margin: m } => {
                let m = m.unwrap_or(margin);
                ev(lhs)?.abs_f64() <= (1.0 - m) * ev(rhs)?.abs_f64()
            }
            Constraint::NotInQPowerLattice { e, max_exponent } => {
                let x = ev(e)?;
                if x.is_zero() {
                    return Ok(false);
                }
                let (lo, hi) = lattice_window(&x, &env.q);
                let lo = lo.max(-max_exponent);
                let hi = hi.min(*max_exponent);
                lo > hi || lattice_distance(&x, &env.q, lo..=hi) >= LATTICE_THRESHOLD
            }
            Constraint::NonZero(e) => ev(e)?.abs_f64() > PREFACTOR_FLOOR,
            Constraint::NotUnity(e) => ev(e)?.one_minus().abs_f64() > LATTICE_THRESHOLD,
            Constraint::RePositive(e) => ev(e)?.to_f64_pair().0 > 0.0,
            Constraint::NotNonPositiveInteger(e) => {
                let (re, im) = ev(e)?.to_f64_pair();
                let n = re.round().min(0.0);
                ((re - n).powi(2) + im * im).sqrt() >= LATTICE_THRESHOLD
            }
            Constraint::SeriesMargin(node) => series_margin(node, env, ctl)? >= margin,
            Constraint::PrefactorModulus(e) => ev(e)?.abs_f64() > PREFACTOR_FLOOR,
            Constraint::Unsatisfiable => false,
        })
    }
}

fn values(xs: &[Expr], env: &ParamEnv, ctl: &TruncationControl) -> Result<Vec<PrecisionComplex>> {
    xs.iter().map(|x| x.eval(env, ctl)).collect()
}

fn margin_of(c: BilateralConvergence) -> f64 {
    match c {
        BilateralConvergence::Convergent(m) => m,
        BilateralConvergence::Divergent(_) => -1.0,
    }
}

/// Convergence margin of a series node at `env`; 1 for non-series nodes.
pub fn series_margin(node: &Expr, env: &ParamEnv, ctl: &TruncationControl) -> Result<f64> {
    Ok(match node {
        Expr::Phi(s) | Expr::Psi(s) => {
            let nums = values(&s.numerators, env, ctl)?;
            let dens = values(&s.denominators, env, ctl)?;
            let q = QBase::new(s.base.eval(env, ctl)?)?;
            let z = s.z.eval(env, ctl)?;
            if matches!(node, Expr::Phi(_)) {
                // unilateral classes map onto the bilateral margin convention
                let spec = SeriesSpec::phi(nums, dens, q, z).with_zeros(s.zeros);
                match crate::engine::phi_converges(&spec) {
                    crate::engine::Convergence::Entire | crate::engine::Convergence::Terminating(_) => 1.0,
                    crate::engine::Convergence::Conditional(m) => m,
                    crate::engine::Convergence::Divergent(_) => -1.0,
                }
            } else {
                margin_of(psi_converges(&SeriesSpec::psi(nums, dens, q, z).with_zeros(s.zeros)))
            }
        }
        Expr::WPUni(w) | Expr::WPBi(w) => {
            let spec = WellPoisedSpec {
                a: w.a.eval(env, ctl)?,
                tail: values(&w.tail, env, ctl)?,
                p: w.zeros,
                q: QBase::new(w.base.eval(env, ctl)?)?,
                z: w.z.eval(env, ctl)?,
            };
            margin_of(wp_converges(&spec, matches!(node, Expr::WPBi(_))))
        }
        _ => 1.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Identity {
    pub id: String,
    pub aliases: Vec<String>,
    pub paper_label: String,
    pub symbols: Vec<SymbolSpec>,
    /// Modulus range of the base, when narrowed by the file.
    pub q_range: Option<(f64, f64)>,
    pub constraints: Vec<Constraint>,
    /// Guards derived from the expressions at load time.
    pub guards: Vec<Constraint>,
    pub lhs: Expr,
    pub rhs_forms: Vec<Expr>,
    pub negative_variant: Option<Expr>,
    pub notes: Vec<String>,
    /// Pass threshold is `10^-(digits - offset)` instead of the default.
    pub tolerance_offset: Option<u32>,
    pub source: PathBuf,
}

impl Identity {
    pub fn matches(&self, key: &str) -> bool {
        self.id == key || self.aliases.iter().any(|a| a == key)
    }

    /// All sides in order: the LHS followed by each RHS form.
    pub fn sides(&self) -> Vec<&Expr> {
        std::iter::once(&self.lhs).chain(&self.rhs_forms).collect()
    }

    /// First violated constraint or guard at `env`, if any.
    pub fn violation(&self, env: &ParamEnv, ctl: &TruncationControl, margin: f64) -> Option<&Constraint> {
        self.constraints
            .iter()
            .chain(&self.guards)
            .find(|c| !c.holds(env, ctl, margin))
    }

    /// Text rendering in the catalog file format, with guards as comments.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("id: {}\n", self.id));
        for a in &self.aliases {
            out.push_str(&format!("alias: {a}\n"));
        }
        out.push_str(&format!("paper: {}\n", self.paper_label));
        let syms: Vec<String> = self
            .symbols
            .iter()
            .map(|s| format!("{}@{}", s.name, s.sampling))
            .collect();
        out.push_str(&format!("symbols: {}\n", syms.join(", ")));
        if let Some((lo, hi)) = self.q_range {
            out.push_str(&format!("# q modulus in [{lo}, {hi}]\n"));
        }
        for c in &self.constraints {
            out.push_str(&format!("constraint: {c}\n"));
        }
        out.push_str(&format!("lhs: {}\n", self.lhs));
        for r in &self.rhs_forms {
            out.push_str(&format!("rhs: {r}\n"));
        }
        if let Some(n) = &self.negative_variant {
            out.push_str(&format!("negative: {n}\n"));
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        if let Some(t) = self.tolerance_offset {
            out.push_str(&format!("tolerance: digits-{t}\n"));
        }
        for g in &self.guards {
            out.push_str(&format!("# guard: {g}\n"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// parsing

struct Field {
    key: String,
    value: String,
    line: usize,
}

fn fields(text: &str, file: &str) -> Result<Vec<Field>> {
    let mut out: Vec<Field> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if raw.starts_with(char::is_whitespace) {
            match out.last_mut() {
                Some(f) => {
                    f.value.push('\n');
                    f.value.push_str(raw);
                }
                None => return Err(catalog_err(file, format!("line {line}: continuation without a field"))),
            }
            continue;
        }
        let Some((key, value)) = raw.split_once(':') else {
            return Err(catalog_err(file, format!("line {line}: expected `key: value`")));
        };
        out.push(Field {
            key: key.trim().to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(out)
}

fn catalog_err(file: &str, message: impl Into<String>) -> Error {
    Error::Catalog {
        file: file.to_string(),
        message: message.into(),
    }
}

/// Split at commas that are not nested in parentheses.
fn split_top(text: &str, sep: char) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | '{' => depth += 1,
            ')' | '}' => depth -= 1,
            _ => {}
        }
        if ch == sep && depth == 0 {
            parts.push(std::mem::take(&mut cur));
        } else {
            cur.push(ch);
        }
    }
    parts.push(cur);
    parts
}

fn parse_symbol(text: &str, file: &str) -> Result<SymbolSpec> {
    let text = text.trim();
    let (name, sampling) = match text.split_once('@') {
        None => (text, Sampling::Modulus { lo: DEFAULT_RANGE.0, hi: DEFAULT_RANGE.1 }),
        Some((name, spec)) => {
            let spec = spec.trim();
            let open = spec
                .find('(')
                .ok_or_else(|| catalog_err(file, format!("bad sampling spec `{spec}`")))?;
            let kind = &spec[..open];
            let args = spec[open + 1..].trim_end_matches(')');
            let nums: Vec<f64> = args
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| catalog_err(file, format!("bad sampling range `{spec}`")))?;
            let [lo, hi] = nums[..] else {
                return Err(catalog_err(file, format!("sampling range needs two bounds: `{spec}`")));
            };
            if !(lo < hi) {
                return Err(catalog_err(file, format!("empty sampling range `{spec}`")));
            }
            let s = match kind {
                "mod" => Sampling::Modulus { lo, hi },
                "real" => Sampling::Real { lo, hi },
                "pos" => Sampling::Positive { lo, hi },
                _ => return Err(catalog_err(file, format!("unknown sampling kind `{kind}`"))),
            };
            if !matches!(s, Sampling::Real { .. }) && lo <= 0.0 {
                return Err(catalog_err(file, format!("modulus range must be positive: `{spec}`")));
            }
            (name.trim(), s)
        }
    };
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(catalog_err(file, format!("bad symbol name `{name}`")));
    }
    Ok(SymbolSpec {
        name: name.to_string(),
        sampling,
    })
}

fn strip_bars(text: &str) -> Option<&str> {
    let t = text.trim();
    t.strip_prefix('|')?.strip_suffix('|')
}

fn parse_constraint(value: &str, line: usize, file: &str) -> Result<Vec<Constraint>> {
    let mut body = value.trim();
    let mut margin = None;
    if let Some((head, tail)) = body.rsplit_once(';') {
        let tail = tail.trim();
        if let Some(m) = tail.strip_prefix("margin=") {
            let m: f64 = m
                .trim()
                .parse()
                .map_err(|_| catalog_err(file, format!("line {line}: bad margin `{m}`")))?;
            if !(0.0..1.0).contains(&m) {
                return Err(catalog_err(file, format!("line {line}: margin must lie in [0, 1)")));
            }
            margin = Some(m);
            body = head.trim();
        }
    }
    if body == "false" {
        return Ok(vec![Constraint::Unsatisfiable]);
    }
    for (name, make) in [
        ("nonzero", Constraint::NonZero as fn(Expr) -> Constraint),
        ("notunity", Constraint::NotUnity),
        ("repositive", Constraint::RePositive),
        ("lattice", |e| Constraint::NotInQPowerLattice {
            e,
            max_exponent: LATTICE_MAX_EXPONENT,
        }),
    ] {
        if let Some(rest) = body.strip_prefix(name) {
            let rest = rest.trim();
            if rest.starts_with('(') && rest.ends_with(')') {
                let e = parse_at(&rest[1..rest.len() - 1], line)?;
                return Ok(vec![make(e)]);
            }
        }
    }
    let parts: Vec<&str> = body.split('<').collect();
    if parts.len() < 2 {
        return Err(catalog_err(file, format!("line {line}: unrecognised constraint `{body}`")));
    }
    let mut exprs = Vec::new();
    for p in &parts {
        let inner = strip_bars(p).unwrap_or(p.trim());
        exprs.push(parse_at(inner, line)?);
    }
    Ok(exprs
        .windows(2)
        .map(|w| Constraint::ModulusLess {
            lhs: w[0].clone(),
            rhs: w[1].clone(),
            margin,
        })
        .collect())
}

fn unique(field: &mut Option<String>, f: &Field, file: &str) -> Result<()> {
    if field.is_some() {
        return Err(catalog_err(file, format!("line {}: repeated field `{}`", f.line, f.key)));
    }
    *field = Some(f.value.trim().to_string());
    Ok(())
}

/// Parse one catalog file. `file` names the source in error messages.
pub fn parse_identity(text: &str, file: &str) -> Result<Identity> {
    let mut id = None;
    let mut paper = None;
    let mut tolerance = None;
    let mut aliases = Vec::new();
    let mut symbols: Vec<SymbolSpec> = Vec::new();
    let mut q_range = None;
    let mut lets: Vec<(String, Expr)> = Vec::new();
    let mut constraints = Vec::new();
    let mut lhs = None;
    let mut rhs = Vec::new();
    let mut negative = None;
    let mut notes = Vec::new();

    let macros = |e: Expr, lets: &[(String, Expr)]| {
        lets.iter().rev().fold(e, |acc, (name, body)| {
            let mut m = BTreeMap::new();
            m.insert(name.clone(), body.clone());
            acc.substitute(&m)
        })
    };

    for f in fields(text, file)? {
        let expr = |f: &Field| parse_at(&f.value, f.line);
        match f.key.as_str() {
            "id" => unique(&mut id, &f, file)?,
            "paper" => unique(&mut paper, &f, file)?,
            "tolerance" => unique(&mut tolerance, &f, file)?,
            "alias" => aliases.push(f.value.trim().to_string()),
            "note" => notes.push(f.value.split_whitespace().collect::<Vec<_>>().join(" ")),
            "symbols" => {
                for part in split_top(&f.value, ',') {
                    if part.trim().is_empty() {
                        continue;
                    }
                    let s = parse_symbol(&part, file)?;
                    if s.name == "q" {
                        q_range = Some(s.sampling.range());
                    } else if symbols.iter().any(|t| t.name == s.name) {
                        return Err(catalog_err(file, format!("symbol `{}` declared twice", s.name)));
                    } else {
                        symbols.push(s);
                    }
                }
            }
            "let" => {
                let (name, body) = f
                    .value
                    .split_once('=')
                    .ok_or_else(|| catalog_err(file, format!("line {}: expected `let: name = expr`", f.line)))?;
                let e = macros(parse_at(body, f.line)?, &lets);
                lets.push((name.trim().to_string(), e));
            }
            "constraint" => {
                for c in parse_constraint(&f.value, f.line, file)? {
                    constraints.push(substitute_constraint(c, &lets, &macros));
                }
            }
            "lhs" => {
                if lhs.is_some() {
                    return Err(catalog_err(file, format!("line {}: repeated field `lhs`", f.line)));
                }
                lhs = Some(macros(expr(&f)?, &lets));
            }
            "rhs" => rhs.push(macros(expr(&f)?, &lets)),
            "negative" => {
                if negative.is_some() {
                    return Err(catalog_err(file, format!("line {}: repeated field `negative`", f.line)));
                }
                negative = Some(macros(expr(&f)?, &lets));
            }
            other => return Err(catalog_err(file, format!("line {}: unknown field `{other}`", f.line))),
        }
    }

    let id = id.ok_or_else(|| catalog_err(file, "missing `id`"))?;
    let lhs = lhs.ok_or_else(|| catalog_err(file, format!("{id}: missing `lhs`")))?;
    if rhs.is_empty() {
        return Err(catalog_err(file, format!("{id}: missing `rhs`")));
    }
    let tolerance_offset = match tolerance {
        None => None,
        Some(t) => Some(
            t.strip_prefix("digits-")
                .and_then(|n| n.trim().parse::<u32>().ok())
                .ok_or_else(|| catalog_err(file, format!("{id}: tolerance must read `digits-N`")))?,
        ),
    };

    let mut identity = Identity {
        paper_label: paper.unwrap_or_else(|| id.clone()),
        id,
        aliases,
        symbols,
        q_range,
        constraints,
        guards: Vec::new(),
        lhs,
        rhs_forms: rhs,
        negative_variant: negative,
        notes,
        tolerance_offset,
        source: PathBuf::from(file),
    };
    validate(&identity)?;
    identity.guards = derive_guards(&identity);
    Ok(identity)
}

fn substitute_constraint(
    c: Constraint,
    lets: &[(String, Expr)],
    macros: &dyn Fn(Expr, &[(String, Expr)]) -> Expr,
) -> Constraint {
    let m = |e: Expr| macros(e, lets);
    match c {
        Constraint::ModulusLess { lhs, rhs, margin } => Constraint::ModulusLess {
            lhs: m(lhs),
            rhs: m(rhs),
            margin,
        },
        Constraint::NotInQPowerLattice { e, max_exponent } => Constraint::NotInQPowerLattice { e: m(e), max_exponent },
        Constraint::NonZero(e) => Constraint::NonZero(m(e)),
        Constraint::NotUnity(e) => Constraint::NotUnity(m(e)),
        Constraint::RePositive(e) => Constraint::RePositive(m(e)),
        Constraint::NotNonPositiveInteger(e) => Constraint::NotNonPositiveInteger(m(e)),
        Constraint::SeriesMargin(e) => Constraint::SeriesMargin(m(e)),
        Constraint::PrefactorModulus(e) => Constraint::PrefactorModulus(m(e)),
        Constraint::Unsatisfiable => Constraint::Unsatisfiable,
    }
}

fn validate(identity: &Identity) -> Result<()> {
    let declared: BTreeSet<&str> = identity
        .symbols
        .iter()
        .map(|s| s.name.as_str())
        .chain(["q"])
        .collect();
    let mut used = BTreeSet::new();
    for e in identity.sides().into_iter().chain(&identity.negative_variant) {
        used.extend(free_symbols(e));
    }
    for c in &identity.constraints {
        for e in c.exprs() {
            used.extend(free_symbols(e));
        }
    }
    for s in used {
        if !declared.contains(s.as_str()) {
            return Err(Error::UndeclaredSymbol {
                id: identity.id.clone(),
                symbol: s,
            });
        }
    }
    for e in identity.sides() {
        let mut bad = None;
        e.walk(&mut |n| {
            if let Expr::IdemSum { pivot, alternatives, .. } = n {
                let mut seen = BTreeSet::from([pivot.as_str()]);
                for a in alternatives {
                    if !seen.insert(a.as_str()) {
                        bad = Some(a.clone());
                    }
                }
            }
        });
        if let Some(a) = bad {
            return Err(catalog_err(
                &identity.source.display().to_string(),
                format!("{}: repeated idem alternative `{a}`", identity.id),
            ));
        }
    }
    Ok(())
}

/// True when `e` depends on a sampled symbol, not only on `q` and constants.
fn is_variable(e: &Expr) -> bool {
    free_symbols(e).iter().any(|s| s != "q")
}

fn is_series(e: &Expr) -> bool {
    matches!(
        e,
        Expr::Phi(_) | Expr::Psi(_) | Expr::WPUni(_) | Expr::WPBi(_) | Expr::FSeries(_) | Expr::HSeries(_)
    )
}

fn contains_series(e: &Expr) -> bool {
    let mut found = false;
    e.walk(&mut |n| found |= is_series(n));
    found
}

fn additive_terms<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            additive_terms(a, out);
            additive_terms(b, out);
        }
        Expr::Neg(a) => additive_terms(a, out),
        other => out.push(other),
    }
}

fn factors<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match e {
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            factors(a, out);
            factors(b, out);
        }
        Expr::Neg(a) | Expr::IntPow(a, _) | Expr::Root(a, _) => factors(a, out),
        other => out.push(other),
    }
}

fn lattice(e: &Expr) -> Constraint {
    Constraint::NotInQPowerLattice {
        e: e.clone(),
        max_exponent: LATTICE_MAX_EXPONENT,
    }
}

fn wp_denominator(w: &crate::expr::WellPoisedExpr, t: &Expr) -> Expr {
    Expr::Div(
        Box::new(Expr::Mul(w.base.clone(), w.a.clone())),
        Box::new(t.clone()),
    )
}

fn derive_guards(identity: &Identity) -> Vec<Constraint> {
    let mut guards: Vec<Constraint> = Vec::new();
    let push = |c: Constraint, guards: &mut Vec<Constraint>| {
        if c.exprs().iter().all(|e| is_variable(e)) && !guards.contains(&c) {
            guards.push(c);
        }
    };
    let sides: Vec<Expr> = identity.sides().into_iter().map(expand_idem).collect();
    if let Some(n) = &identity.negative_variant {
        // the negative form only needs to be finite, not to be a valid identity
        let n = expand_idem(n);
        n.walk(&mut |node| {
            if let Expr::Phi(s) | Expr::Psi(s) = node {
                for d in &s.denominators {
                    push(lattice(d), &mut guards);
                }
            }
        });
    }
    for side in &sides {
        let mut nodes = Vec::new();
        side.walk(&mut |n| nodes.push(n.clone()));
        for n in &nodes {
            match n {
                Expr::QPochInf { args, .. } | Expr::Theta { args, .. } => {
                    for a in args {
                        push(lattice(a), &mut guards);
                    }
                }
                Expr::QPochFinite { arg, .. } | Expr::QPochIndexed { arg, .. } => push(lattice(arg), &mut guards),
                Expr::Phi(s) => {
                    for d in &s.denominators {
                        push(lattice(d), &mut guards);
                    }
                }
                Expr::Psi(s) => {
                    for p in s.numerators.iter().chain(&s.denominators) {
                        push(lattice(p), &mut guards);
                    }
                }
                Expr::WPUni(w) | Expr::WPBi(w) => {
                    push(lattice(&w.a), &mut guards);
                    for t in &w.tail {
                        push(lattice(&wp_denominator(w, t)), &mut guards);
                        if matches!(n, Expr::WPBi(_)) {
                            push(lattice(t), &mut guards);
                        }
                    }
                }
                Expr::GammaQ { arg, .. } | Expr::Gamma(arg) => {
                    push(Constraint::NotNonPositiveInteger((**arg).clone()), &mut guards)
                }
                Expr::FSeries(c) | Expr::HSeries(c) => {
                    for d in &c.denominators {
                        push(Constraint::NotNonPositiveInteger(d.clone()), &mut guards);
                    }
                }
                _ => {}
            }
            if is_series(n) && !matches!(n, Expr::FSeries(_) | Expr::HSeries(_)) {
                push(Constraint::SeriesMargin(n.clone()), &mut guards);
            }
        }
        let mut terms = Vec::new();
        additive_terms(side, &mut terms);
        for t in terms {
            let mut fs = Vec::new();
            factors(t, &mut fs);
            for f in fs {
                if !contains_series(f) && !matches!(f, Expr::Const(_)) {
                    push(Constraint::PrefactorModulus(f.clone()), &mut guards);
                }
            }
        }
    }
    guards
}

// ---------------------------------------------------------------------------
// loading

/// Loaded catalog, ordered by id.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    identities: Vec<Identity>,
}

/// Natural ordering of ids: `U2` before `U10`.
fn id_key(id: &str) -> (String, u64, String) {
    let prefix: String = id.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    let rest = &id[prefix.len()..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let n = digits.parse().unwrap_or(0);
    (prefix, n, rest[digits.len()..].to_string())
}

fn group_rank(id: &str) -> usize {
    const ORDER: [&str; 6] = ["U", "W", "B", "L", "I", "C"];
    let prefix: String = id.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    ORDER.iter().position(|p| *p == prefix).unwrap_or(ORDER.len())
}

/// Parse every `*.qid` file in `dir`.
pub fn load(dir: &Path) -> Result<Vec<Identity>> {
    Ok(Catalog::load(dir)?.identities)
}

impl Catalog {
    /// `QIDENT_CATALOG` if set, otherwise the catalog shipped with the crate.
    pub fn default_dir() -> PathBuf {
        match std::env::var_os("QIDENT_CATALOG") {
            Some(p) => PathBuf::from(p),
            None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("catalog"),
        }
    }

    pub fn load_default() -> Result<Catalog> {
        Catalog::load(&Catalog::default_dir())
    }

    pub fn load(dir: &Path) -> Result<Catalog> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "qid"))
            .collect();
        paths.sort();
        let mut identities: Vec<Identity> = Vec::new();
        let mut keys = BTreeSet::new();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let mut identity = parse_identity(&text, &p.display().to_string())?;
            identity.source = p;
            for key in std::iter::once(&identity.id).chain(&identity.aliases) {
                if !keys.insert(key.clone()) {
                    return Err(Error::DuplicateId(key.clone()));
                }
            }
            identities.push(identity);
        }
        identities.sort_by(|a, b| (group_rank(&a.id), id_key(&a.id)).cmp(&(group_rank(&b.id), id_key(&b.id))));
        Ok(Catalog { identities })
    }

    pub fn from_identities(identities: Vec<Identity>) -> Catalog {
        Catalog { identities }
    }

    pub fn identities(&self) -> &[Identity] {
        &self.identities
    }

    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    /// Lookup by id or alias.
    pub fn get(&self, key: &str) -> Result<&Identity> {
        self.identities
            .iter()
            .find(|i| i.matches(key))
            .ok_or_else(|| Error::NotFound(key.to_string()))
    }

    pub fn list_ids(&self) -> Vec<String> {
        self.identities.iter().map(|i| i.id.clone()).collect()
    }
}
