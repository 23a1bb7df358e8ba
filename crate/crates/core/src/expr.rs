//! Expression AST for identity sides, its text syntax and evaluator.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?
//! exponent := INT | '-' INT | '(' '-'? INT ('/' INT)? ')'
//! atom   := NUMBER | NAME | NAME '(' arguments ')' | '(' expr ')'
//! ```
//!
//! Function forms separate argument groups with `;` and list entries with
//! `,`; an empty group is written `-`. Recognised forms are `qpoch(a;q;n)`,
//! `qpoch_c(a;q;b)`, `qpoch_inf(a1,..;q)`, `theta(z1,..;q)`,
//! `phi(nums;dens;q;z)`, `psi(..)`, `W(a;tail;q;z)`, `PsiW(a;tail;q;z)`,
//! `idem(x;y,..){body}`, `gammaq(x;q)`, `gamma(x)`, `F(nums;dens;z)`,
//! `H(nums;dens;z)`, `sqrt(x)` and `cbrt(x)`. Series forms accept a trailing
//! `; zeros=p`. The names `i`, `omega` and `pi` are constants and `#` starts
//! a line comment.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::classical::{eval_classical, gamma, gamma_q, ClassicalKind, ClassicalSeriesSpec};
use crate::engine::{eval_phi, eval_psi, eval_wp_bilateral, eval_wp_unilateral, SeriesSpec, SeriesValue, WellPoisedSpec};
use crate::error::{Error, Result};
use crate::precision::PrecisionComplex;
use crate::qcore::{as_integer, qpoch_complex_index, qpoch_inf, qpoch_n, theta, QBase, TruncationControl};

/// Parameters of a `phi` or `psi` node.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesExpr {
    pub numerators: Vec<Expr>,
    pub denominators: Vec<Expr>,
    pub base: Box<Expr>,
    pub z: Box<Expr>,
    /// Zero parameters: positive for denominators, negative for numerators.
    pub zeros: i32,
}

/// Parameters of a `W` or `PsiW` node.
#[derive(Clone, Debug, PartialEq)]
pub struct WellPoisedExpr {
    pub a: Box<Expr>,
    pub tail: Vec<Expr>,
    pub base: Box<Expr>,
    pub z: Box<Expr>,
    pub zeros: u32,
}

/// Parameters of an `F` or `H` node.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalExpr {
    pub numerators: Vec<Expr>,
    pub denominators: Vec<Expr>,
    pub z: Box<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Decimal literal or one of `i`, `omega`, `pi`, kept as written.
    Const(String),
    Sym(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    IntPow(Box<Expr>, i64),
    /// Principal root of degree 2 or 3.
    Root(Box<Expr>, u32),
    QPochFinite { arg: Box<Expr>, base: Box<Expr>, index: Box<Expr> },
    QPochInf { args: Vec<Expr>, base: Box<Expr> },
    QPochIndexed { arg: Box<Expr>, base: Box<Expr>, index: Box<Expr> },
    Theta { args: Vec<Expr>, base: Box<Expr> },
    Phi(SeriesExpr),
    Psi(SeriesExpr),
    WPUni(WellPoisedExpr),
    WPBi(WellPoisedExpr),
    IdemSum { pivot: String, alternatives: Vec<String>, body: Box<Expr> },
    GammaQ { arg: Box<Expr>, base: Box<Expr> },
    Gamma(Box<Expr>),
    FSeries(ClassicalExpr),
    HSeries(ClassicalExpr),
}

const CONSTANTS: [&str; 3] = ["i", "omega", "pi"];

impl Expr {
    pub fn sym(name: &str) -> Expr {
        Expr::Sym(name.to_string())
    }

    pub fn num(text: &str) -> Expr {
        Expr::Const(text.to_string())
    }

    /// Immediate subexpressions in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        use Expr::*;
        match self {
            Const(_) | Sym(_) => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => vec![a, b],
            Neg(a) | IntPow(a, _) | Root(a, _) | Gamma(a) => vec![a],
            QPochFinite { arg, base, index } | QPochIndexed { arg, base, index } => vec![arg, base, index],
            QPochInf { args, base } | Theta { args, base } => args.iter().chain(std::iter::once(&**base)).collect(),
            Phi(s) | Psi(s) => s
                .numerators
                .iter()
                .chain(&s.denominators)
                .chain([&*s.base, &*s.z])
                .collect(),
            WPUni(w) | WPBi(w) => std::iter::once(&*w.a).chain(&w.tail).chain([&*w.base, &*w.z]).collect(),
            IdemSum { body, .. } => vec![body],
            GammaQ { arg, base } => vec![arg, base],
            FSeries(c) | HSeries(c) => c.numerators.iter().chain(&c.denominators).chain([&*c.z]).collect(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Rebuild with `f` applied bottom-up to every node.
    pub fn map(&self, f: &dyn Fn(Expr) -> Expr) -> Expr {
        use Expr::*;
        let m = |e: &Expr| Box::new(e.map(f));
        let ml = |v: &[Expr]| v.iter().map(|e| e.map(f)).collect::<Vec<_>>();
        let node = match self {
            Const(_) | Sym(_) => self.clone(),
            Add(a, b) => Add(m(a), m(b)),
            Sub(a, b) => Sub(m(a), m(b)),
            Mul(a, b) => Mul(m(a), m(b)),
            Div(a, b) => Div(m(a), m(b)),
            Neg(a) => Neg(m(a)),
            IntPow(a, n) => IntPow(m(a), *n),
            Root(a, n) => Root(m(a), *n),
            Gamma(a) => Gamma(m(a)),
            QPochFinite { arg, base, index } => QPochFinite { arg: m(arg), base: m(base), index: m(index) },
            QPochIndexed { arg, base, index } => QPochIndexed { arg: m(arg), base: m(base), index: m(index) },
            QPochInf { args, base } => QPochInf { args: ml(args), base: m(base) },
            Theta { args, base } => Theta { args: ml(args), base: m(base) },
            Phi(s) => Phi(s.map(f)),
            Psi(s) => Psi(s.map(f)),
            WPUni(w) => WPUni(w.map(f)),
            WPBi(w) => WPBi(w.map(f)),
            IdemSum { pivot, alternatives, body } => IdemSum {
                pivot: pivot.clone(),
                alternatives: alternatives.clone(),
                body: m(body),
            },
            GammaQ { arg, base } => GammaQ { arg: m(arg), base: m(base) },
            FSeries(c) => FSeries(c.map(f)),
            HSeries(c) => HSeries(c.map(f)),
        };
        f(node)
    }

    /// Replace symbols by expressions, all at once.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        self.map(&|e| match e {
            Expr::Sym(ref s) => map.get(s).cloned().unwrap_or(e),
            Expr::IdemSum { pivot, alternatives, body } => {
                // the pivot and alternatives name symbols, rename them when mapped to symbols
                let rename = |s: &String| match map.get(s) {
                    Some(Expr::Sym(t)) => t.clone(),
                    _ => s.clone(),
                };
                Expr::IdemSum {
                    pivot: rename(&pivot),
                    alternatives: alternatives.iter().map(rename).collect(),
                    body,
                }
            }
            other => other,
        })
    }

    /// Exchange two symbols throughout.
    pub fn swap(&self, x: &str, y: &str) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(x.to_string(), Expr::sym(y));
        map.insert(y.to_string(), Expr::sym(x));
        self.substitute(&map)
    }
}

impl SeriesExpr {
    fn map(&self, f: &dyn Fn(Expr) -> Expr) -> SeriesExpr {
        SeriesExpr {
            numerators: self.numerators.iter().map(|e| e.map(f)).collect(),
            denominators: self.denominators.iter().map(|e| e.map(f)).collect(),
            base: Box::new(self.base.map(f)),
            z: Box::new(self.z.map(f)),
            zeros: self.zeros,
        }
    }
}

impl WellPoisedExpr {
    fn map(&self, f: &dyn Fn(Expr) -> Expr) -> WellPoisedExpr {
        WellPoisedExpr {
            a: Box::new(self.a.map(f)),
            tail: self.tail.iter().map(|e| e.map(f)).collect(),
            base: Box::new(self.base.map(f)),
            z: Box::new(self.z.map(f)),
            zeros: self.zeros,
        }
    }
}

impl ClassicalExpr {
    fn map(&self, f: &dyn Fn(Expr) -> Expr) -> ClassicalExpr {
        ClassicalExpr {
            numerators: self.numerators.iter().map(|e| e.map(f)).collect(),
            denominators: self.denominators.iter().map(|e| e.map(f)).collect(),
            z: Box::new(self.z.map(f)),
        }
    }
}

/// Replace every idem node by the explicit sum of its swapped bodies.
pub fn expand_idem(e: &Expr) -> Expr {
    e.map(&|node| match node {
        Expr::IdemSum { pivot, alternatives, body } => {
            let mut acc = *body.clone();
            for alt in &alternatives {
                acc = Expr::Add(Box::new(acc), Box::new(body.swap(&pivot, alt)));
            }
            acc
        }
        other => other,
    })
}

/// Names of all symbols occurring in `e`; idem pivots and alternatives count.
pub fn free_symbols(e: &Expr) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    e.walk(&mut |n| match n {
        Expr::Sym(s) => {
            out.insert(s.clone());
        }
        Expr::IdemSum { pivot, alternatives, .. } => {
            out.insert(pivot.clone());
            out.extend(alternatives.iter().cloned());
        }
        _ => {}
    });
    out
}

// ---------------------------------------------------------------------------
// printing

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        Expr::IntPow(..) => 4,
        _ => 5,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, xs: &[Expr]) -> fmt::Result {
    if xs.is_empty() {
        return write!(f, "-");
    }
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Const(c) => write!(f, "{c}"),
            Sym(s) => write!(f, "{s}"),
            Add(a, b) | Sub(a, b) => {
                write_at(f, a, 1)?;
                write!(f, " {} ", if matches!(self, Add(..)) { "+" } else { "-" })?;
                write_at(f, b, 2)
            }
            Mul(a, b) | Div(a, b) => {
                write_at(f, a, 2)?;
                write!(f, "{}", if matches!(self, Mul(..)) { "*" } else { "/" })?;
                write_at(f, b, 3)
            }
            Neg(a) => {
                write!(f, "-")?;
                write_at(f, a, 3)
            }
            IntPow(a, n) => {
                write_at(f, a, 5)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Root(a, n) => write!(f, "{}({a})", if *n == 2 { "sqrt" } else { "cbrt" }),
            QPochFinite { arg, base, index } => write!(f, "qpoch({arg}; {base}; {index})"),
            QPochIndexed { arg, base, index } => write!(f, "qpoch_c({arg}; {base}; {index})"),
            QPochInf { args, base } => {
                write!(f, "qpoch_inf(")?;
                write_list(f, args)?;
                write!(f, "; {base})")
            }
            Theta { args, base } => {
                write!(f, "theta(")?;
                write_list(f, args)?;
                write!(f, "; {base})")
            }
            Phi(s) | Psi(s) => {
                write!(f, "{}(", if matches!(self, Phi(_)) { "phi" } else { "psi" })?;
                write_list(f, &s.numerators)?;
                write!(f, "; ")?;
                write_list(f, &s.denominators)?;
                write!(f, "; {}; {}", s.base, s.z)?;
                if s.zeros != 0 {
                    write!(f, "; zeros={}", s.zeros)?;
                }
                write!(f, ")")
            }
            WPUni(w) | WPBi(w) => {
                write!(f, "{}({}; ", if matches!(self, WPUni(_)) { "W" } else { "PsiW" }, w.a)?;
                write_list(f, &w.tail)?;
                write!(f, "; {}; {}", w.base, w.z)?;
                if w.zeros != 0 {
                    write!(f, "; zeros={}", w.zeros)?;
                }
                write!(f, ")")
            }
            IdemSum { pivot, alternatives, body } => {
                write!(f, "idem({pivot}; {}){{{body}}}", alternatives.join(", "))
            }
            GammaQ { arg, base } => write!(f, "gammaq({arg}; {base})"),
            Gamma(a) => write!(f, "gamma({a})"),
            FSeries(c) | HSeries(c) => {
                write!(f, "{}(", if matches!(self, FSeries(_)) { "F" } else { "H" })?;
                write_list(f, &c.numerators)?;
                write!(f, "; ")?;
                write_list(f, &c.denominators)?;
                write!(f, "; {})", c.z)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// lexing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Name(String),
    Punct(char),
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str, line0: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (line0, 1usize);
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            k += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            k += 1;
            continue;
        }
        if c == '#' {
            while k < chars.len() && chars[k] != '\n' {
                k += 1;
            }
            continue;
        }
        let start = k;
        if c.is_ascii_digit() || (c == '.' && chars.get(k + 1).is_some_and(|d| d.is_ascii_digit())) {
            while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                k += 1;
            }
            // exponent only when digits follow, so `2e` stays invalid rather than eating a symbol
            if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let s: String = chars[start..k].iter().collect();
            if s.matches('.').count() > 1 {
                return Err(Error::syntax(tl, tc, format!("malformed number `{s}`")));
            }
            col += k - start;
            out.push(Token { tok: Tok::Num(s), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while k < chars.len() && (chars[k].is_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            col += k - start;
            out.push(Token {
                tok: Tok::Name(chars[start..k].iter().collect()),
                line: tl,
                col: tc,
            });
            continue;
        }
        if "+-*/^(),;{}=".contains(c) {
            out.push(Token { tok: Tok::Punct(c), line: tl, col: tc });
            col += 1;
            k += 1;
            continue;
        }
        return Err(Error::syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::End, line, col });
    Ok(out)
}

// ---------------------------------------------------------------------------
// parsing

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let t = &self.toks[self.pos];
        Error::syntax(t.line, t.col, msg)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.is(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`, found {}", describe(self.peek()))))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.is('+') {
                self.bump();
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.is('-') {
                self.bump();
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.is('*') {
                self.bump();
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.is('/') {
                self.bump();
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.is('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn int(&mut self) -> Result<i64> {
        match self.peek().clone() {
            Tok::Num(s) => {
                let v = s.parse::<i64>().map_err(|_| self.err(format!("expected an integer, found `{s}`")))?;
                self.bump();
                Ok(v)
            }
            t => Err(self.err(format!("expected an integer, found {}", describe(&t)))),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.is('^') {
            return Ok(base);
        }
        self.bump();
        let (num, den) = if self.is('(') {
            self.bump();
            let neg = if self.is('-') {
                self.bump();
                true
            } else {
                false
            };
            let n = self.int()?;
            let d = if self.is('/') {
                self.bump();
                self.int()?
            } else {
                1
            };
            self.expect(')')?;
            (if neg { -n } else { n }, d)
        } else if self.is('-') {
            self.bump();
            (-self.int()?, 1)
        } else {
            (self.int()?, 1)
        };
        if den <= 0 {
            return Err(self.err("exponent denominator must be positive"));
        }
        let g = gcd(num.unsigned_abs(), den as u64) as i64;
        let (num, den) = if g > 0 { (num / g, den / g) } else { (num, den) };
        let e = match den {
            1 => Expr::IntPow(Box::new(base), num),
            2 | 3 => {
                let root = Expr::Root(Box::new(base), den as u32);
                if num == 1 {
                    root
                } else {
                    Expr::IntPow(Box::new(root), num)
                }
            }
            _ => return Err(self.err("only square and cube roots are supported")),
        };
        if self.is('^') {
            return Err(self.err("chained powers need parentheses"));
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(s) => {
                self.bump();
                Ok(Expr::Const(s))
            }
            Tok::Punct('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Name(name) => {
                self.bump();
                if self.is('(') {
                    self.bump();
                    let e = self.call(&name)?;
                    return Ok(e);
                }
                if CONSTANTS.contains(&name.as_str()) {
                    Ok(Expr::Const(name))
                } else {
                    Ok(Expr::Sym(name))
                }
            }
            t => Err(self.err(format!("expected an expression, found {}", describe(&t)))),
        }
    }

    /// Comma list, or `-` for the empty list.
    fn list(&mut self) -> Result<Vec<Expr>> {
        if self.is('-') && matches!(self.peek2(), Tok::Punct(';') | Tok::Punct(')')) {
            self.bump();
            return Ok(vec![]);
        }
        let mut out = vec![self.expr()?];
        while self.is(',') {
            self.bump();
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn name(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Name(n) if !CONSTANTS.contains(&n.as_str()) => {
                self.bump();
                Ok(n)
            }
            t => Err(self.err(format!("expected a symbol name, found {}", describe(&t)))),
        }
    }

    fn zeros(&mut self) -> Result<i64> {
        if !self.is(';') {
            return Ok(0);
        }
        self.bump();
        match self.peek() {
            Tok::Name(n) if n == "zeros" => {
                self.bump();
            }
            t => return Err(self.err(format!("expected `zeros=`, found {}", describe(t)))),
        }
        self.expect('=')?;
        if self.is('-') {
            self.bump();
            Ok(-self.int()?)
        } else {
            self.int()
        }
    }

    fn call(&mut self, name: &str) -> Result<Expr> {
        let b = |e: Expr| Box::new(e);
        let e = match name {
            "sqrt" | "cbrt" | "gamma" => {
                let x = self.expr()?;
                match name {
                    "sqrt" => Expr::Root(b(x), 2),
                    "cbrt" => Expr::Root(b(x), 3),
                    _ => Expr::Gamma(b(x)),
                }
            }
            "qpoch" | "qpoch_c" => {
                let arg = self.expr()?;
                self.expect(';')?;
                let base = self.expr()?;
                self.expect(';')?;
                let index = self.expr()?;
                if name == "qpoch" {
                    Expr::QPochFinite { arg: b(arg), base: b(base), index: b(index) }
                } else {
                    Expr::QPochIndexed { arg: b(arg), base: b(base), index: b(index) }
                }
            }
            "qpoch_inf" | "theta" => {
                let args = self.list()?;
                self.expect(';')?;
                let base = b(self.expr()?);
                if name == "theta" {
                    Expr::Theta { args, base }
                } else {
                    Expr::QPochInf { args, base }
                }
            }
            "gammaq" => {
                let arg = self.expr()?;
                self.expect(';')?;
                Expr::GammaQ { arg: b(arg), base: b(self.expr()?) }
            }
            "phi" | "psi" => {
                let numerators = self.list()?;
                self.expect(';')?;
                let denominators = self.list()?;
                self.expect(';')?;
                let base = b(self.expr()?);
                self.expect(';')?;
                let z = b(self.expr()?);
                let zeros = self.zeros()? as i32;
                let s = SeriesExpr { numerators, denominators, base, z, zeros };
                if name == "phi" {
                    Expr::Phi(s)
                } else {
                    Expr::Psi(s)
                }
            }
            "W" | "PsiW" => {
                let a = b(self.expr()?);
                self.expect(';')?;
                let tail = self.list()?;
                self.expect(';')?;
                let base = b(self.expr()?);
                self.expect(';')?;
                let z = b(self.expr()?);
                let zeros = self.zeros()?;
                if zeros < 0 {
                    return Err(self.err("very-well-poised series need zeros >= 0"));
                }
                let w = WellPoisedExpr { a, tail, base, z, zeros: zeros as u32 };
                if name == "W" {
                    Expr::WPUni(w)
                } else {
                    Expr::WPBi(w)
                }
            }
            "F" | "H" => {
                let numerators = self.list()?;
                self.expect(';')?;
                let denominators = self.list()?;
                self.expect(';')?;
                let c = ClassicalExpr { numerators, denominators, z: b(self.expr()?) };
                if name == "F" {
                    Expr::FSeries(c)
                } else {
                    Expr::HSeries(c)
                }
            }
            "idem" => {
                let pivot = self.name()?;
                self.expect(';')?;
                let mut alternatives = vec![self.name()?];
                while self.is(',') {
                    self.bump();
                    alternatives.push(self.name()?);
                }
                self.expect(')')?;
                let mut seen = BTreeSet::new();
                seen.insert(pivot.clone());
                for a in &alternatives {
                    if !seen.insert(a.clone()) {
                        return Err(self.err(format!("idem alternative `{a}` repeated")));
                    }
                }
                self.expect('{')?;
                let body = b(self.expr()?);
                self.expect('}')?;
                return Ok(Expr::IdemSum { pivot, alternatives, body });
            }
            other => return Err(Error::UnknownSymbol(format!("{other}("))),
        };
        self.expect(')')?;
        Ok(e)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(s) => format!("number `{s}`"),
        Tok::Name(s) => format!("`{s}`"),
        Tok::Punct(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Parse one expression.
pub fn parse(text: &str) -> Result<Expr> {
    parse_at(text, 1)
}

/// Parse with line numbers starting at `line`, for text embedded in a file.
pub fn parse_at(text: &str, line: usize) -> Result<Expr> {
    let mut p = Parser { toks: lex(text, line)?, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err(format!("unexpected {}", describe(p.peek()))));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// evaluation

/// Symbol values and the base `q`; `q` itself is read through the symbol `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEnv {
    pub bindings: BTreeMap<String, PrecisionComplex>,
    pub q: QBase,
}

impl ParamEnv {
    pub fn new(q: QBase) -> Self {
        ParamEnv { bindings: BTreeMap::new(), q }
    }

    pub fn with(mut self, name: &str, value: PrecisionComplex) -> Self {
        self.bindings.insert(name.to_string(), value);
        self
    }

    pub fn digits(&self) -> u32 {
        self.q.digits()
    }

    pub fn lookup(&self, name: &str) -> Result<PrecisionComplex> {
        if name == "q" {
            return Ok(self.q.value().clone());
        }
        self.bindings
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }
}

pub fn eval(e: &Expr, env: &ParamEnv, ctl: &TruncationControl) -> Result<PrecisionComplex> {
    eval_counted(e, env, ctl).map(|(v, _)| v)
}

/// Like [`eval`], also returning the total number of series terms summed.
pub fn eval_counted(e: &Expr, env: &ParamEnv, ctl: &TruncationControl) -> Result<(PrecisionComplex, usize)> {
    let terms = Cell::new(0);
    let v = Evaluator { env, ctl, terms: &terms }.eval(e)?;
    Ok((v, terms.get()))
}

impl Expr {
    pub fn eval(&self, env: &ParamEnv, ctl: &TruncationControl) -> Result<PrecisionComplex> {
        eval(self, env, ctl)
    }
}

struct Evaluator<'a> {
    env: &'a ParamEnv,
    ctl: &'a TruncationControl,
    terms: &'a Cell<usize>,
}

impl Evaluator<'_> {
    fn digits(&self) -> u32 {
        self.env.digits()
    }

    fn count(&self, r: Result<SeriesValue>) -> Result<PrecisionComplex> {
        let v = r?;
        self.terms.set(self.terms.get() + v.terms_used);
        Ok(v.value)
    }

    fn sub(&self, e: &Expr, seg: &str) -> Result<PrecisionComplex> {
        self.eval(e).map_err(|err| err.at(seg))
    }

    fn list(&self, xs: &[Expr], seg: &str) -> Result<Vec<PrecisionComplex>> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| self.sub(x, &format!("{seg}[{k}]")))
            .collect()
    }

    fn base(&self, e: &Expr, seg: &str) -> Result<QBase> {
        let v = self.sub(e, seg)?;
        QBase::new(v).map_err(|err| err.at(seg))
    }

    fn nonzero_div(&self, num: PrecisionComplex, den: PrecisionComplex) -> Result<PrecisionComplex> {
        if den.is_zero() {
            return Err(Error::ZeroArgument("division by an exactly zero factor".into()));
        }
        Ok(num / den)
    }

    fn eval(&self, e: &Expr) -> Result<PrecisionComplex> {
        let d = self.digits();
        let ctl = self.ctl;
        match e {
            Expr::Const(c) => match c.as_str() {
                "i" => Ok(PrecisionComplex::i(d)),
                "omega" => Ok(PrecisionComplex::omega(d)),
                "pi" => Ok(PrecisionComplex::pi(d)),
                s => PrecisionComplex::parse_real(s, d),
            },
            Expr::Sym(s) => self.env.lookup(s),
            Expr::Add(a, b) => Ok(self.sub(a, "add.0")? + self.sub(b, "add.1")?),
            Expr::Sub(a, b) => Ok(self.sub(a, "sub.0")? - self.sub(b, "sub.1")?),
            Expr::Mul(a, b) => Ok(self.sub(a, "mul.0")? * self.sub(b, "mul.1")?),
            Expr::Div(a, b) => {
                let num = self.sub(a, "div.0")?;
                let den = self.sub(b, "div.1")?;
                self.nonzero_div(num, den).map_err(|err| err.at("div"))
            }
            Expr::Neg(a) => Ok(-self.sub(a, "neg")?),
            Expr::IntPow(a, n) => {
                let x = self.sub(a, "pow")?;
                if *n < 0 && x.is_zero() {
                    return Err(Error::ZeroArgument("negative power of zero".into()).at("pow"));
                }
                Ok(x.powi(*n))
            }
            Expr::Root(a, n) => Ok(self.sub(a, "root")?.root(*n)),
            Expr::QPochFinite { arg, base, index } => {
                let a = self.sub(arg, "qpoch.arg")?;
                let q = self.base(base, "qpoch.base")?;
                let idx = self.sub(index, "qpoch.index")?;
                let n = as_integer(&idx)
                    .ok_or_else(|| Error::InvalidNumber(format!("non-integer index {idx}")).at("qpoch.index"))?;
                qpoch_n(&a, &q, n).map_err(|err| err.at("qpoch"))
            }
            Expr::QPochIndexed { arg, base, index } => {
                let a = self.sub(arg, "qpoch_c.arg")?;
                let q = self.base(base, "qpoch_c.base")?;
                let b = self.sub(index, "qpoch_c.index")?;
                qpoch_complex_index(&a, &q, &b, ctl).map_err(|err| err.at("qpoch_c"))
            }
            Expr::QPochInf { args, base } => {
                let q = self.base(base, "qpoch_inf.base")?;
                let mut v = PrecisionComplex::one(d);
                for (k, x) in args.iter().enumerate() {
                    let seg = format!("qpoch_inf[{k}]");
                    let a = self.sub(x, &seg)?;
                    v *= qpoch_inf(&a, &q, ctl).map_err(|err| err.at(&seg))?;
                }
                Ok(v)
            }
            Expr::Theta { args, base } => {
                let q = self.base(base, "theta.base")?;
                let mut v = PrecisionComplex::one(d);
                for (k, x) in args.iter().enumerate() {
                    let seg = format!("theta[{k}]");
                    let a = self.sub(x, &seg)?;
                    v *= theta(&a, &q, ctl).map_err(|err| err.at(&seg))?;
                }
                Ok(v)
            }
            Expr::Phi(s) | Expr::Psi(s) => {
                let tag = if matches!(e, Expr::Phi(_)) { "phi" } else { "psi" };
                let nums = self.list(&s.numerators, &format!("{tag}.num"))?;
                let dens = self.list(&s.denominators, &format!("{tag}.den"))?;
                let q = self.base(&s.base, &format!("{tag}.base"))?;
                let z = self.sub(&s.z, &format!("{tag}.z"))?;
                let r = if tag == "phi" {
                    eval_phi(&SeriesSpec::phi(nums, dens, q, z).with_zeros(s.zeros), ctl)
                } else {
                    eval_psi(&SeriesSpec::psi(nums, dens, q, z).with_zeros(s.zeros), ctl)
                };
                self.count(r).map_err(|err| err.at(tag))
            }
            Expr::WPUni(w) | Expr::WPBi(w) => {
                let tag = if matches!(e, Expr::WPUni(_)) { "W" } else { "PsiW" };
                let a = self.sub(&w.a, &format!("{tag}.a"))?;
                let tail = self.list(&w.tail, &format!("{tag}.tail"))?;
                let q = self.base(&w.base, &format!("{tag}.base"))?;
                let z = self.sub(&w.z, &format!("{tag}.z"))?;
                let spec = WellPoisedSpec { a, tail, p: w.zeros, q, z };
                let r = if tag == "W" {
                    eval_wp_unilateral(&spec, ctl)
                } else {
                    eval_wp_bilateral(&spec, ctl)
                };
                self.count(r).map_err(|err| err.at(tag))
            }
            Expr::IdemSum { pivot, alternatives, body } => {
                let mut v = self.sub(body, "idem[0]")?;
                for (k, alt) in alternatives.iter().enumerate() {
                    // swap the bindings rather than rewriting the body
                    let mut env = self.env.clone();
                    let x = self.env.lookup(pivot).map_err(|err| err.at("idem"))?;
                    let y = self.env.lookup(alt).map_err(|err| err.at("idem"))?;
                    if pivot == "q" || alt == "q" {
                        let swapped = body.swap(pivot, alt);
                        v += self.sub(&swapped, &format!("idem[{}]", k + 1))?;
                        continue;
                    }
                    env.bindings.insert(pivot.clone(), y);
                    env.bindings.insert(alt.clone(), x);
                    let inner = Evaluator { env: &env, ctl, terms: self.terms };
                    v += inner.eval(body).map_err(|err| err.at(&format!("idem[{}]", k + 1)))?;
                }
                Ok(v)
            }
            Expr::GammaQ { arg, base } => {
                let x = self.sub(arg, "gammaq.arg")?;
                let q = self.base(base, "gammaq.base")?;
                gamma_q(&x, &q, ctl).map_err(|err| err.at("gammaq"))
            }
            Expr::Gamma(a) => {
                let x = self.sub(a, "gamma.arg")?;
                gamma(&x).map_err(|err| err.at("gamma"))
            }
            Expr::FSeries(c) | Expr::HSeries(c) => {
                let (tag, kind) = if matches!(e, Expr::FSeries(_)) {
                    ("F", ClassicalKind::F)
                } else {
                    ("H", ClassicalKind::H)
                };
                let spec = ClassicalSeriesSpec {
                    kind,
                    numerators: self.list(&c.numerators, &format!("{tag}.num"))?,
                    denominators: self.list(&c.denominators, &format!("{tag}.den"))?,
                    z: self.sub(&c.z, &format!("{tag}.z"))?,
                };
                self.count(eval_classical(&spec, ctl)).map_err(|err| err.at(tag))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::rel_error;

    const D: u32 = 40;

    fn env(q: f64) -> ParamEnv {
        ParamEnv::new(QBase::from_f64(q, D).unwrap())
    }

    fn c(x: f64, y: f64) -> PrecisionComplex {
        PrecisionComplex::new(x, y, D)
    }

    fn ctl() -> TruncationControl {
        TruncationControl::for_digits(D)
    }

    #[test]
    fn parses_function_forms() {
        assert_eq!(
            parse("qpoch_inf(a; q)").unwrap(),
            Expr::QPochInf { args: vec![Expr::sym("a")], base: Box::new(Expr::sym("q")) }
        );
        let t = parse("theta(a, q/a; q)").unwrap();
        match t {
            Expr::Theta { args, .. } => {
                assert_eq!(args.len(), 2);
                assert_eq!(args[1], Expr::Div(Box::new(Expr::sym("q")), Box::new(Expr::sym("a"))));
            }
            other => panic!("{other:?}"),
        }
        let i = parse("idem(e; f){ W(a; b, e, f; q; q) }").unwrap();
        assert!(matches!(i, Expr::IdemSum { ref pivot, ref alternatives, .. } if pivot == "e" && alternatives == &["f"]));
        let p = parse("phi(-; a; q; z; zeros=2)").unwrap();
        assert!(matches!(p, Expr::Phi(ref s) if s.numerators.is_empty() && s.zeros == 2));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse("a +\n  * b") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("frob(a)"), Err(Error::UnknownSymbol(_))));
        assert!(matches!(parse("a^(1/5)"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("qpoch(a; q)"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn canonical_round_trip() {
        for text in [
            "a + b*c - d/(e*f)",
            "-a^2 + (a - b)^(-3)",
            "a - (b - c)",
            "a/(b/c)",
            "sqrt(q)^3*cbrt(b)",
            "qpoch(a; q; 2*n)",
            "qpoch_c(a; q^2; b)",
            "theta(z, q/z; q)",
            "phi(a, b; c; q; z)",
            "psi(-; a, b; q; -z; zeros=3)",
            "W(a; b, c, d; q; q*a/(b*c*d))",
            "PsiW(a; b; q^2; q^2*a^3; zeros=6)",
            "idem(x; y, z){x*(y - z)}",
            "gammaq(a; q)*gamma(1 - a)/F(a, b; c; 1) + H(a; b; 1)",
            "2*omega^2 - i*pi + 0.25e-3",
            "a*-b + -(c*d)",
        ] {
            let e = parse(text).unwrap();
            let printed = e.to_string();
            assert_eq!(parse(&printed).unwrap(), e, "{text} -> {printed}");
            assert_eq!(printed, text, "canonical form");
        }
    }

    #[test]
    fn comments_are_ignored() {
        assert_eq!(parse("a # trailing\n + b").unwrap(), parse("a + b").unwrap());
    }

    #[test]
    fn basic_evaluation() {
        let e = parse("3 + a").unwrap();
        let v = e.eval(&env(0.5).with("a", c(2.0, 0.0)), &ctl()).unwrap();
        assert!(rel_error(&v, &c(5.0, 0.0), 1e-300) < 1e-38);
        let r = parse("q^(1/2)").unwrap().eval(&env(0.25), &ctl()).unwrap();
        assert!(rel_error(&r, &c(0.5, 0.0), 1e-300) < 1e-38);
    }

    #[test]
    fn division_by_structural_zero_is_an_error() {
        let e = parse("1/theta(q; q)").unwrap();
        let err = e.eval(&env(0.3), &ctl()).unwrap_err();
        assert!(matches!(err.root(), Error::ZeroArgument(_)));
        assert!(matches!(err, Error::Eval { ref path, .. } if path == "div"), "{err}");
    }

    #[test]
    fn errors_carry_ast_path() {
        let e = parse("a + phi(a; -; q; 2)").unwrap();
        let err = e.eval(&env(0.3).with("a", c(0.2, 0.0)), &ctl()).unwrap_err();
        assert!(err.to_string().starts_with("add.1/phi"), "{err}");
        let u = parse("b").unwrap().eval(&env(0.3), &ctl()).unwrap_err();
        assert!(matches!(u, Error::UnknownSymbol(_)));
    }

    #[test]
    fn ramanujan_sides_agree() {
        let lhs = parse("psi(a; b; q; z)").unwrap();
        let rhs = parse("qpoch_inf(q, b/a, a*z, q/(a*z); q)/qpoch_inf(b, q/a, z, b/(a*z); q)").unwrap();
        let e = env(0.1).with("a", c(2.0, 0.0)).with("b", c(0.3, 0.0)).with("z", c(0.6, 0.1));
        let l = lhs.eval(&e, &ctl()).unwrap();
        let r = rhs.eval(&e, &ctl()).unwrap();
        assert!(rel_error(&l, &r, 1e-300) < 1e-36);
    }

    #[test]
    fn idem_expansion_and_evaluation_agree() {
        let e = parse("idem(g; h, k){ g^2*qpoch_inf(g/h, g/k; q)/h }").unwrap();
        let expanded = expand_idem(&e);
        assert!(!format!("{expanded}").contains("idem"));
        let env = env(0.3)
            .with("g", c(0.4, 0.1))
            .with("h", c(0.7, -0.2))
            .with("k", c(1.3, 0.5));
        let v1 = e.eval(&env, &ctl()).unwrap();
        let v2 = expanded.eval(&env, &ctl()).unwrap();
        // manual three-term expansion
        let manual = parse(
            "g^2*qpoch_inf(g/h, g/k; q)/h + h^2*qpoch_inf(h/g, h/k; q)/g + k^2*qpoch_inf(k/h, k/g; q)/h",
        )
        .unwrap()
        .eval(&env, &ctl())
        .unwrap();
        assert!(rel_error(&v1, &v2, 1e-300) < 1e-38);
        assert!(rel_error(&v1, &manual, 1e-300) < 1e-38);
    }

    #[test]
    fn idem_of_two_is_symmetric_sum() {
        let e = parse("idem(x; y){x - 2*y}").unwrap();
        assert_eq!(expand_idem(&e), parse("x - 2*y + (y - 2*x)").unwrap());
        let plain = parse("x + y").unwrap();
        assert_eq!(expand_idem(&plain), plain);
    }

    #[test]
    fn free_symbol_sets() {
        assert!(free_symbols(&parse("1").unwrap()).is_empty());
        let s = free_symbols(&parse("psi(a; b; q; z)").unwrap());
        assert_eq!(s.into_iter().collect::<Vec<_>>(), ["a", "b", "q", "z"]);
        let s = free_symbols(&parse("2*pi*i*omega").unwrap());
        assert!(s.is_empty());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let e = parse("W(a; b, c, d; q; q*a/(b*c*d))").unwrap();
        let env = env(0.3)
            .with("a", c(0.5, 0.1))
            .with("b", c(0.9, 0.0))
            .with("c", c(1.2, 0.3))
            .with("d", c(0.8, -0.4));
        assert_eq!(e.eval(&env, &ctl()).unwrap(), e.eval(&env, &ctl()).unwrap());
    }
}
