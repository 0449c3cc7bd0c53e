//! Concrete syntax: lexer, parser, printer and `let` macros.
//!
//! See `docs/grammar.md` for the grammar. Precedence, loosest first:
//! `\x:T. t` and `if .. then .. else ..`; `+`/`-`; `c.t` (right-assoc);
//! `*` (right-assoc); application and the prefix forms `head`, `tail`,
//! `pi[j]`, `cast{A}{B}`; atoms.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::scalar::Scalar;
use crate::syntax::{Name, Term, Type};
use crate::typesys::cast_split;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    DuplicateMacro,
    UnknownMacro,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind:?} error: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// A parsed `.qlam` file. Macros are already expanded inside `main` and
/// inside later macro bodies.
#[derive(Clone, Debug)]
pub struct SourceFile {
    pub defs: Vec<(Name, Term)>,
    pub main: Term,
    pub expect: Option<Type>,
}

// ---------------------------------------------------------------- lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Ket(bool),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &[
    "let", "if", "then", "else", "ite", "head", "tail", "pi", "cast", "null", "sqrt",
];

const SYMBOLS: &[&str] = &[
    "=>", "(", ")", "{", "}", "[", "]", "+", "-", "*", "/", ".", ":", "=", ";", "\\",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| ParseError {
        kind: ParseErrorKind::Lexical,
        line,
        col,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: start.0,
                col: start.1,
            })
        };
        if c == '|' {
            let bit = match (chars.get(i + 1), chars.get(i + 2)) {
                (Some('0'), Some('>')) => false,
                (Some('1'), Some('>')) => true,
                _ => return Err(err(line, col, "expected |0> or |1>".into())),
            };
            push(&mut out, Tok::Ket(bit));
            i += 3;
            col += 3;
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            // a dot is part of the number only if a digit follows it
            if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| err(line, col, format!("bad number {text}")))?;
            push(&mut out, Tok::Num(value));
            col += j - i;
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len()
                && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'')
            {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            push(&mut out, Tok::Ident(text));
            col += j - i;
            i = j;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                push(&mut out, Tok::Sym(sym));
                i += sym.len();
                col += sym.len();
            }
            None => return Err(err(line, col, format!("unexpected character {c:?}"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    macros: HashMap<Name, Term>,
    /// λ-bound names currently in scope.
    scope: Vec<Name>,
    /// Free identifiers are variables instead of unknown macros.
    allow_free: bool,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(toks: Vec<Token>, allow_free: bool) -> Parser {
        Parser {
            toks,
            pos: 0,
            macros: HashMap::new(),
            scope: Vec::new(),
            allow_free,
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError {
            kind,
            line: t.line,
            col: t.col,
            message: message.into(),
        }
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        self.error(ParseErrorKind::Syntax, message)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{s}`, found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.advance();
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{s}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(x) if !KEYWORDS.contains(&x.as_str()) => {
                self.advance();
                Ok(x)
            }
            t => Err(self.syntax(format!("expected identifier, found {}", describe(&t)))),
        }
    }

    // ---- types

    fn ty(&mut self) -> PResult<Type> {
        let left = self.ty_tensor()?;
        if self.eat_sym("=>") {
            if !left.is_qubit_type() {
                return Err(self.syntax(format!("arrow domain {left} is not a qubit type")));
            }
            let right = self.ty()?;
            return Ok(Type::arrow(left, right));
        }
        Ok(left)
    }

    fn ty_tensor(&mut self) -> PResult<Type> {
        let left = self.ty_atom()?;
        if self.eat_sym("*") {
            let right = self.ty_tensor()?;
            return Ok(Type::tensor(left, right));
        }
        Ok(left)
    }

    fn ty_atom(&mut self) -> PResult<Type> {
        if self.is_kw("B") {
            self.advance();
            return Ok(Type::Qubit);
        }
        if self.is_kw("S") {
            self.advance();
            self.expect_sym("(")?;
            let inner = self.ty()?;
            self.expect_sym(")")?;
            return Ok(Type::sup(inner));
        }
        if self.eat_sym("(") {
            let inner = self.ty()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        Err(self.syntax(format!("expected a type, found {}", describe(self.peek()))))
    }

    // ---- scalars

    /// Tries to read `scalar .`; restores the position on failure.
    fn try_scalar_dot(&mut self) -> Option<Scalar> {
        let save = self.pos;
        if let Ok(c) = self.scalar_sum() {
            if self.eat_sym(".") {
                return Some(c);
            }
        }
        self.pos = save;
        None
    }

    fn scalar_sum(&mut self) -> PResult<Scalar> {
        let mut acc = self.scalar_prod()?;
        loop {
            if self.eat_sym("+") {
                acc = acc + self.scalar_prod()?;
            } else if self.eat_sym("-") {
                acc = acc - self.scalar_prod()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn scalar_prod(&mut self) -> PResult<Scalar> {
        let mut acc = self.scalar_unary()?;
        loop {
            if self.eat_sym("*") {
                acc = acc * self.scalar_unary()?;
            } else if self.eat_sym("/") {
                let d = self.scalar_unary()?;
                acc = acc
                    .checked_div(d)
                    .ok_or_else(|| self.syntax("division by zero in scalar"))?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn scalar_unary(&mut self) -> PResult<Scalar> {
        if self.eat_sym("-") {
            return Ok(-self.scalar_unary()?);
        }
        match self.peek().clone() {
            Tok::Num(x) => {
                self.advance();
                Ok(Scalar::real(x))
            }
            Tok::Ident(x) if x == "i" => {
                self.advance();
                Ok(Scalar::I)
            }
            Tok::Ident(x) if x == "sqrt" => {
                self.advance();
                self.expect_sym("(")?;
                let arg = self.scalar_sum()?;
                self.expect_sym(")")?;
                if arg.im() != 0.0 || arg.re() < 0.0 {
                    return Err(self.syntax("sqrt expects a nonnegative real"));
                }
                Ok(Scalar::real(arg.re().sqrt()))
            }
            Tok::Sym("(") => {
                self.advance();
                let inner = self.scalar_sum()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            t => Err(self.syntax(format!("expected a scalar, found {}", describe(&t)))),
        }
    }

    // ---- terms

    fn term(&mut self) -> PResult<Term> {
        if self.eat_sym("\\") {
            let x = self.ident()?;
            self.expect_sym(":")?;
            let ann = self.ty()?;
            if !ann.is_qubit_type() {
                return Err(self.syntax(format!("abstraction annotation {ann} is not a qubit type")));
            }
            self.expect_sym(".")?;
            self.scope.push(x.clone());
            let body = self.term();
            self.scope.pop();
            return Ok(Term::lam(x, ann, body?));
        }
        if self.is_kw("if") {
            self.advance();
            let c = self.term()?;
            self.expect_kw("then")?;
            let u = self.term()?;
            self.expect_kw("else")?;
            let v = self.term()?;
            return Ok(Term::ite(c, u, v));
        }
        self.sum()
    }

    fn sum(&mut self) -> PResult<Term> {
        let mut acc = self.scale()?;
        loop {
            if self.eat_sym("+") {
                acc = Term::sum(acc, self.scale_or_binder()?);
            } else if self.eat_sym("-") {
                let r = self.scale_or_binder()?;
                acc = Term::sum(acc, Term::scale(-Scalar::ONE, r));
            } else {
                return Ok(acc);
            }
        }
    }

    /// Right operands may be binders, which then extend to the end.
    fn scale_or_binder(&mut self) -> PResult<Term> {
        if self.is_sym("\\") || self.is_kw("if") {
            self.term()
        } else {
            self.scale()
        }
    }

    fn scale(&mut self) -> PResult<Term> {
        if let Some(c) = self.try_scalar_dot() {
            let body = self.scale_or_binder()?;
            return Ok(Term::scale(c, body));
        }
        if self.eat_sym("-") {
            let body = self.scale_or_binder()?;
            return Ok(Term::scale(-Scalar::ONE, body));
        }
        self.tensor()
    }

    fn tensor(&mut self) -> PResult<Term> {
        let left = self.app()?;
        if self.eat_sym("*") {
            let right = if self.is_sym("\\") || self.is_kw("if") {
                self.term()?
            } else {
                self.tensor()?
            };
            return Ok(Term::tensor(left, right));
        }
        Ok(left)
    }

    fn app(&mut self) -> PResult<Term> {
        if self.is_kw("head") {
            self.advance();
            return Ok(Term::head(self.app()?));
        }
        if self.is_kw("tail") {
            self.advance();
            return Ok(Term::tail(self.app()?));
        }
        if self.is_kw("pi") {
            self.advance();
            let j = if self.eat_sym("[") {
                let j = match self.advance() {
                    Tok::Num(x) if x >= 1.0 && x.fract() == 0.0 => x as usize,
                    t => return Err(self.syntax(format!("expected a positive index, found {}", describe(&t)))),
                };
                self.expect_sym("]")?;
                j
            } else {
                1
            };
            return Ok(Term::proj(j, self.app()?));
        }
        if self.is_kw("cast") {
            self.advance();
            self.expect_sym("{")?;
            let source = self.ty()?;
            self.expect_sym("}")?;
            self.expect_sym("{")?;
            let target = self.ty()?;
            self.expect_sym("}")?;
            let (left, right) = match cast_split(&source, &target) {
                Some(split) => split,
                None => match target {
                    // ill-shaped: keep the written split, the typechecker reports it
                    Type::Tensor(l, r) => (*l, *r),
                    _ => return Err(self.syntax(format!("cast target {target} is not a tensor"))),
                },
            };
            return Ok(Term::cast(source, left, right, self.app()?));
        }
        let mut acc = self.atom()?;
        while self.starts_atom() {
            acc = Term::app(acc, self.atom()?);
        }
        Ok(acc)
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Ket(_) => true,
            Tok::Sym("(") => true,
            Tok::Ident(x) => x == "ite" || x == "null" || !KEYWORDS.contains(&x.as_str()),
            _ => false,
        }
    }

    fn atom(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Ket(b) => {
                self.advance();
                Ok(Term::ket(b))
            }
            Tok::Sym("(") => {
                self.advance();
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Ident(x) if x == "ite" => {
                self.advance();
                Ok(Term::Ite)
            }
            Tok::Ident(x) if x == "null" => {
                self.advance();
                self.expect_sym("[")?;
                let a = self.ty()?;
                self.expect_sym("]")?;
                Ok(Term::Null(a))
            }
            Tok::Ident(x) if !KEYWORDS.contains(&x.as_str()) => {
                if self.scope.contains(&x) {
                    self.advance();
                    Ok(Term::Var(x))
                } else if let Some(body) = self.macros.get(&x) {
                    let body = body.clone();
                    self.advance();
                    Ok(body)
                } else if self.allow_free {
                    self.advance();
                    Ok(Term::Var(x))
                } else {
                    Err(self.error(ParseErrorKind::UnknownMacro, format!("unknown name `{x}`")))
                }
            }
            t => Err(self.syntax(format!("expected a term, found {}", describe(&t)))),
        }
    }

    fn file(&mut self) -> PResult<(Vec<(Name, Term)>, Term)> {
        let mut defs = Vec::new();
        while self.is_kw("let") {
            self.advance();
            let name_pos = self.pos;
            let name = self.ident()?;
            if self.macros.contains_key(&name) {
                self.pos = name_pos;
                return Err(self.error(
                    ParseErrorKind::DuplicateMacro,
                    format!("macro `{name}` is already defined"),
                ));
            }
            self.expect_sym("=")?;
            let body = self.term()?;
            self.expect_sym(";")?;
            self.macros.insert(name.clone(), body.clone());
            defs.push((name, body));
        }
        let main = self.term()?;
        self.end()?;
        Ok((defs, main))
    }

    fn end(&self) -> PResult<()> {
        match self.peek() {
            Tok::Eof => Ok(()),
            t => Err(self.syntax(format!("unexpected {} after end of term", describe(t)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(x) => format!("`{x}`"),
        Tok::Num(x) => format!("number {x}"),
        Tok::Ket(b) => format!("|{}>", u8::from(*b)),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a `.qlam` file: optional `-- expect: <type>` first line, `let`
/// macros, then the main term. Free names must be earlier macros.
pub fn parse(src: &str) -> Result<SourceFile, ParseError> {
    let expect = match src.lines().next().map(str::trim) {
        Some(first) if first.starts_with("--") => {
            let body = first.trim_start_matches('-').trim();
            match body.strip_prefix("expect:") {
                Some(ty) => Some(parse_type(ty.trim())?),
                None => None,
            }
        }
        _ => None,
    };
    let mut p = Parser::new(lex(src)?, false);
    let (defs, main) = p.file()?;
    Ok(SourceFile { defs, main, expect })
}

/// Parses a single term; free names are variables.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(lex(src)?, true);
    let t = p.term()?;
    p.end()?;
    Ok(t)
}

pub fn parse_type(src: &str) -> Result<Type, ParseError> {
    let mut p = Parser::new(lex(src)?, true);
    let t = p.ty()?;
    p.end()?;
    Ok(t)
}

/// Parses a standalone scalar expression such as `1/sqrt(2)` or `0.6+0.8*i`.
pub fn parse_scalar(src: &str) -> Result<Scalar, ParseError> {
    let mut p = Parser::new(lex(src)?, true);
    let c = p.scalar_sum()?;
    p.end()?;
    Ok(c)
}

// ---------------------------------------------------------------- printer

const NICE_TOL: f64 = 1e-13;

fn near_int(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() <= NICE_TOL * x.abs().max(1.0) && r.abs() < 1e9).then_some(r as i64)
}

/// Renders a probability or other real for display: the nearest short form
/// within `1e-13`, so `0.24999999999999994` shows as `1/4`.
pub fn print_number(x: f64) -> String {
    nice_real(x).unwrap_or_else(|| format!("{x}"))
}

/// The value a short form of `x` reads back as, or `x` itself if none is
/// close. Used to scrub rounding noise from computed amplitudes.
pub fn snap_real(x: f64) -> f64 {
    nice_real(x).and_then(|s| parse_real(&s)).unwrap_or(x)
}

/// Amplitudes in terms print exactly: a short form only if it reads back
/// to the same float, else the shortest round-tripping decimal.
fn print_real(x: f64) -> String {
    match nice_real(x) {
        Some(s) if parse_real(&s) == Some(x) => s,
        _ => format!("{x}"),
    }
}

fn parse_real(s: &str) -> Option<f64> {
    parse_scalar(s).ok().filter(|c| c.im() == 0.0).map(|c| c.re())
}

/// A short exact-looking form within tolerance: `3`, `3/5`, `1/sqrt(2)`.
fn nice_real(x: f64) -> Option<String> {
    if let Some(n) = near_int(x) {
        return Some(n.to_string());
    }
    for q in 2..=64i64 {
        if let Some(p) = near_int(x * q as f64) {
            if p.abs() <= 4096 {
                return Some(format!("{p}/{q}"));
            }
        }
    }
    for k in 2..=64i64 {
        let r = (k as f64).sqrt();
        if near_int(r).is_some() {
            continue;
        }
        if let Some(p) = near_int(x * r) {
            if p != 0 && p.abs() <= 64 {
                return Some(format!("{p}/sqrt({k})"));
            }
        }
    }
    None
}

fn is_bare(s: &str) -> bool {
    s.chars().all(|c| c.is_ascii_digit())
}

/// Renders a scalar so that [`parse_scalar`] reads it back.
pub fn print_scalar(c: Scalar) -> String {
    let (re, im) = (c.re(), c.im());
    let re_zero = re == 0.0;
    let im_zero = im == 0.0;
    if im_zero {
        return print_real(re);
    }
    let im_part = |x: f64| match print_real(x).as_str() {
        "1" => "i".to_string(),
        "-1" => "-i".to_string(),
        s => format!("{s}*i"),
    };
    if re_zero {
        return im_part(im);
    }
    let imp = im_part(im.abs());
    let sign = if im < 0.0 { "-" } else { "+" };
    format!("{}{sign}{imp}", print_real(re))
}

/// Scalar in coefficient position: bare for naturals and `i`, else parenthesized.
fn print_coef(c: Scalar) -> String {
    let s = print_scalar(c);
    if is_bare(&s) || s == "i" {
        s
    } else {
        format!("({s})")
    }
}

pub fn print_type(a: &Type) -> String {
    match a {
        Type::Qubit => "B".into(),
        Type::Sup(inner) => format!("S({})", print_type(inner)),
        Type::Tensor(l, r) => {
            let left = match **l {
                Type::Tensor(..) | Type::Arrow(..) => format!("({})", print_type(l)),
                _ => print_type(l),
            };
            let right = match **r {
                Type::Arrow(..) => format!("({})", print_type(r)),
                _ => print_type(r),
            };
            format!("{left} * {right}")
        }
        Type::Arrow(d, c) => format!("{} => {}", print_type(d), print_type(c)),
    }
}

fn print_type_compact(a: &Type) -> String {
    print_type(a).replace(' ', "")
}

// precedence levels
const BINDER: u8 = 0;
const SUM: u8 = 1;
const SCALE: u8 = 2;
const TENSOR: u8 = 3;
const APP: u8 = 4;
const ATOM: u8 = 5;

/// Renders a term so that [`parse_term`] reads it back.
pub fn print(t: &Term) -> String {
    let mut out = String::new();
    print_at(t, BINDER, &mut out);
    out
}

fn level(t: &Term) -> u8 {
    match t {
        Term::Lam(..) => BINDER,
        Term::App(f, _) if saturated_ite(f).is_some() => BINDER,
        Term::Sum(..) => SUM,
        Term::Scale(..) => SCALE,
        Term::Tensor(..) => TENSOR,
        Term::App(..) | Term::Head(_) | Term::Tail(_) | Term::Proj(..) | Term::Cast { .. } => APP,
        Term::Var(_) | Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => ATOM,
    }
}

fn is_prefix(t: &Term) -> bool {
    matches!(t, Term::Head(_) | Term::Tail(_) | Term::Proj(..) | Term::Cast { .. })
}

/// `App(App(Ite, c), u)` gives `(c, u)`.
fn saturated_ite(f: &Term) -> Option<(&Term, &Term)> {
    match f {
        Term::App(g, u) => match &**g {
            Term::App(i, c) if **i == Term::Ite => Some((c, u)),
            _ => None,
        },
        _ => None,
    }
}

fn print_at(t: &Term, min: u8, out: &mut String) {
    if level(t) < min {
        out.push('(');
        print_at(t, BINDER, out);
        out.push(')');
        return;
    }
    match t {
        Term::Var(x) => out.push_str(x),
        Term::Ket0 => out.push_str("|0>"),
        Term::Ket1 => out.push_str("|1>"),
        Term::Ite => out.push_str("ite"),
        Term::Null(a) => {
            out.push_str("null[");
            out.push_str(&print_type(a));
            out.push(']');
        }
        Term::Lam(x, a, body) => {
            out.push('\\');
            out.push_str(x);
            out.push(':');
            out.push_str(&print_type(a));
            out.push_str(". ");
            print_at(body, BINDER, out);
        }
        Term::App(f, v) => {
            if let Some((c, u)) = saturated_ite(f) {
                out.push_str("if ");
                print_at(c, BINDER, out);
                out.push_str(" then ");
                print_at(u, BINDER, out);
                out.push_str(" else ");
                print_at(v, BINDER, out);
                return;
            }
            if is_prefix(f) {
                out.push('(');
                print_at(f, BINDER, out);
                out.push(')');
            } else {
                print_at(f, APP, out);
            }
            out.push(' ');
            print_at(v, ATOM, out);
        }
        Term::Sum(a, b) => {
            print_at(a, SUM, out);
            out.push_str(" + ");
            print_at(b, SCALE, out);
        }
        Term::Scale(c, body) => {
            out.push_str(&print_coef(*c));
            out.push('.');
            // `2.2.t` would lex as the decimal `2.2`
            let level = if matches!(**body, Term::Scale(..)) { ATOM } else { SCALE };
            print_at(body, level, out);
        }
        Term::Tensor(a, b) => {
            print_at(a, APP, out);
            out.push_str(" * ");
            print_at(b, TENSOR, out);
        }
        Term::Head(a) => {
            out.push_str("head ");
            print_at(a, APP, out);
        }
        Term::Tail(a) => {
            out.push_str("tail ");
            print_at(a, APP, out);
        }
        Term::Proj(j, a) => {
            out.push_str(&format!("pi[{j}] "));
            print_at(a, APP, out);
        }
        Term::Cast {
            source,
            left,
            right,
            body,
        } => {
            let target = Type::tensor(left.clone(), right.clone());
            let flat = crate::typesys::canonical_type(&target);
            // print the flat target when it reads back to the same split
            let shown = match cast_split(source, &flat) {
                Some((l, r)) if &l == left && &r == right => print_type_compact(&flat),
                _ => print_type_compact(&target),
            };
            out.push_str(&format!("cast{{{}}}{{{}}} ", print_type_compact(source), shown));
            print_at(body, APP, out);
        }
    }
}

/// Names used anywhere in a term, bound or free.
pub fn names(t: &Term) -> BTreeSet<Name> {
    fn go(t: &Term, out: &mut BTreeSet<Name>) {
        match t {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Lam(x, _, b) => {
                out.insert(x.clone());
                go(b, out);
            }
            Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => {}
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => {
                go(a, out);
                go(b, out);
            }
            Term::Scale(_, a)
            | Term::Proj(_, a)
            | Term::Head(a)
            | Term::Tail(a)
            | Term::Cast { body: a, .. } => go(a, out),
        }
    }
    let mut out = BTreeSet::new();
    go(t, &mut out);
    out
}

impl fmt::Display for SourceFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(a) = &self.expect {
            writeln!(f, "-- expect: {a}")?;
        }
        for (name, body) in &self.defs {
            writeln!(f, "let {name} = {};", print(body))?;
        }
        write!(f, "{}", print(&self.main))
    }
}
