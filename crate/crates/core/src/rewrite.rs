//! The probabilistic rewrite system.
//!
//! Every [`Engine::step`] first brings the term into canonical form
//! ([`Engine::canonicalize`]): sums are flattened, scalars pushed onto the
//! summands, null vectors and zero coefficients removed, equal value summands
//! merged, summands sorted, and tensor spines right-nested. Then one rule
//! fires at the outermost reducible position not under a λ.
//!
//! Evaluation order inside an application: the top rules first, then the
//! argument (unless the function is a by-name abstraction), then the
//! function. Sums, tensors and scalings reduce their leftmost reducible part.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{Scalar, DEFAULT_EPS};
use crate::surface::{print, print_number, snap_real};
use crate::syntax::{Term, Type};
use crate::typecheck::infer_closed;
use crate::typesys::{canonical_type, cast_side, CastSide};

/// Rule names, as printed in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    BetaB,
    BetaN,
    If1,
    If0,
    LinR,
    LinScalR,
    Lin0R,
    LinL,
    LinScalL,
    Lin0L,
    Head,
    Tail,
    DistSumR,
    DistSumL,
    DistScalR,
    DistScalL,
    Dist0R,
    Dist0L,
    DistSumCast,
    DistScalCast,
    Dist0Cast,
    NeutR,
    NeutL,
    Proj,
}

impl Rule {
    pub fn name(self) -> &'static str {
        use Rule::*;
        match self {
            BetaB => "betab",
            BetaN => "betan",
            If1 => "if1",
            If0 => "if0",
            LinR => "linr",
            LinScalR => "linscalr",
            Lin0R => "lin0r",
            LinL => "linl",
            LinScalL => "linscall",
            Lin0L => "lin0l",
            Head => "head",
            Tail => "tail",
            DistSumR => "dist+r",
            DistSumL => "dist+l",
            DistScalR => "distar",
            DistScalL => "distal",
            Dist0R => "dist0r",
            Dist0L => "dist0l",
            DistSumCast => "dist+cast",
            DistScalCast => "distacast",
            Dist0Cast => "dist0cast",
            NeutR => "neutr",
            NeutL => "neutl",
            Proj => "proj",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Deliberately broken rules, used to check that the property harness
/// notices. Never enabled outside tests.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// `if |1> then u else v` goes to `v`.
    SwapIfBranches,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub rule: Rule,
    pub p: f64,
    pub term: Term,
}

#[derive(Clone, Debug)]
pub enum Step {
    /// No rule applies and the term is a value.
    Normal,
    /// One rule fired; deterministic rules give a single outcome with `p = 1`.
    Reduced(Vec<Outcome>),
    /// No rule applies but the term is not a value.
    Stuck(String),
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RewriteError {
    #[error("fuel exhausted after {fuel} steps; deepest terms: {}", show_terms(.partial))]
    FuelExhausted { fuel: usize, partial: Vec<Term> },
    #[error("stuck at {term}: {reason}")]
    Stuck { term: Term, reason: String },
    #[error("malformed measurement argument: {0}")]
    Malformed(String),
    #[error("too many branches (more than {0})")]
    TooManyBranches(usize),
}

fn show_terms(ts: &[Term]) -> String {
    ts.iter().map(print).collect::<Vec<_>>().join("; ")
}

/// One reduction path, before merging.
#[derive(Clone, Debug)]
pub struct Branch {
    pub p: f64,
    pub term: Term,
    pub steps: usize,
}

/// Result of exhaustive evaluation.
#[derive(Clone, Debug)]
pub struct Distribution {
    /// Every path separately, in breadth-first order.
    pub branches: Vec<Branch>,
    /// Normal forms with equal terms merged, sorted by printed form.
    pub merged: Vec<(f64, Term)>,
}

impl Distribution {
    pub fn total(&self) -> f64 {
        self.merged.iter().map(|(p, _)| p).sum()
    }
}

#[derive(Clone, Debug)]
pub struct TraceStep {
    pub rule: Rule,
    pub p: f64,
    pub before: Term,
    pub after: Term,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(
                f,
                "[{} p={}] {} ⟶ {}",
                s.rule,
                print_number(s.p),
                print(&s.before),
                print(&s.after)
            )?;
        }
        Ok(())
    }
}

/// Most branches [`Engine::run_distribution`] will track at once.
pub const MAX_BRANCHES: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct Engine {
    pub eps: f64,
    #[doc(hidden)]
    pub mutation: Option<Mutation>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(DEFAULT_EPS)
    }
}

type Outs = Vec<(Rule, f64, Term)>;

fn det(rule: Rule, t: Term) -> Option<Outs> {
    Some(vec![(rule, 1.0, t)])
}

fn map_outs(outs: Outs, f: impl Fn(Term) -> Term) -> Outs {
    outs.into_iter().map(|(r, p, t)| (r, p, f(t))).collect()
}

/// `App(App(Ite, c), u)` gives `(c, u)`.
fn ite_prefix(f: &Term) -> Option<(&Term, &Term)> {
    match f {
        Term::App(g, u) => match &**g {
            Term::App(i, c) if **i == Term::Ite => Some((c, u)),
            _ => None,
        },
        _ => None,
    }
}

/// Functions that need no further reduction before distributing over an
/// argument: abstractions and `ite` applied to at most two values.
fn is_done(f: &Term) -> bool {
    match f {
        Term::Lam(..) | Term::Ite => true,
        Term::App(g, c) => match &**g {
            Term::Ite => c.is_value(),
            Term::App(i, c2) => **i == Term::Ite && c2.is_value() && c.is_value(),
            _ => false,
        },
        _ => false,
    }
}

/// The `A` of a function type `Ψ ⇒ A` or `S(Ψ ⇒ A)`, stripped of outer `S`.
fn codomain(a: &Type) -> Option<Type> {
    match canonical_type(a).strip_sup() {
        Type::Arrow(_, c) => Some(c.strip_sup().clone()),
        _ => None,
    }
}

/// Flattens a canonical linear combination into `(coefficient, body)` pairs.
fn linear_entries(t: &Term) -> Vec<(Scalar, &Term)> {
    fn go<'a>(t: &'a Term, c: Scalar, out: &mut Vec<(Scalar, &'a Term)>) {
        match t {
            Term::Sum(a, b) => {
                go(a, c, out);
                go(b, c, out);
            }
            Term::Scale(d, a) => go(a, c * *d, out),
            _ => out.push((c, t)),
        }
    }
    let mut out = Vec::new();
    go(t, Scalar::ONE, &mut out);
    out
}

impl Engine {
    pub fn new(eps: f64) -> Engine {
        assert!(eps >= 0.0, "negative tolerance");
        Engine {
            eps,
            mutation: None,
        }
    }

    // ------------------------------------------------------------ canonical

    /// Normal form of the vector-space layer, everywhere outside abstractions.
    pub fn canonicalize(&self, t: &Term) -> Term {
        match t {
            Term::Var(_) | Term::Lam(..) | Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => {
                t.clone()
            }
            Term::App(f, a) => Term::app(self.canonicalize(f), self.canonicalize(a)),
            Term::Tensor(a, b) => {
                let (a, b) = (self.canonicalize(a), self.canonicalize(b));
                let mut factors: Vec<Term> = a.tensor_factors().into_iter().cloned().collect();
                factors.extend(b.tensor_factors().into_iter().cloned());
                Term::tensor_of(factors)
            }
            Term::Proj(j, a) => Term::proj(*j, self.canonicalize(a)),
            Term::Head(a) => Term::head(self.canonicalize(a)),
            Term::Tail(a) => Term::tail(self.canonicalize(a)),
            Term::Cast {
                source,
                left,
                right,
                body,
            } => Term::cast(source.clone(), left.clone(), right.clone(), self.canonicalize(body)),
            Term::Sum(..) | Term::Scale(..) => self.canonical_sum(t),
        }
    }

    fn canonical_sum(&self, t: &Term) -> Term {
        let mut entries: Vec<(Scalar, Term)> = Vec::new();
        let mut null_type: Option<Type> = None;
        self.collect(t, Scalar::ONE, &mut entries, &mut null_type);

        // zero coefficients disappear, but remember a type for the result
        let mut zero_type: Option<Type> = None;
        let note_zero = |body: &Term, zt: &mut Option<Type>| {
            if zt.is_none() {
                *zt = Some(zero_annotation(body));
            }
        };
        let mut merged: Vec<(Scalar, Term)> = Vec::new();
        for (c, body) in entries {
            if c.is_zero(self.eps) {
                note_zero(&body, &mut zero_type);
                continue;
            }
            let slot = if body.is_value() {
                merged
                    .iter_mut()
                    .find(|(_, b)| b.is_value() && ac_eq(b, &body, self.eps))
            } else {
                None
            };
            match slot {
                Some((d, _)) => *d = *d + c,
                None => merged.push((c, body)),
            }
        }
        let mut kept = Vec::new();
        for (c, body) in merged {
            if c.is_zero(self.eps) {
                note_zero(&body, &mut zero_type);
            } else {
                kept.push((c, body));
            }
        }
        if kept.is_empty() {
            return Term::Null(zero_type.or(null_type).unwrap_or(Type::Qubit));
        }
        let mut keyed: Vec<(String, Scalar, Term)> =
            kept.into_iter().map(|(c, b)| (sort_key(&b), c, b)).collect();
        keyed.sort_by(|x, y| x.0.cmp(&y.0));
        let summands = keyed
            .into_iter()
            .map(|(_, c, b)| if c.is_one(self.eps) { b } else { Term::scale(c, b) })
            .collect();
        Term::sum_of(summands)
    }

    fn collect(&self, t: &Term, c: Scalar, out: &mut Vec<(Scalar, Term)>, null: &mut Option<Type>) {
        match t {
            Term::Sum(a, b) => {
                self.collect(a, c, out, null);
                self.collect(b, c, out, null);
            }
            Term::Scale(d, a) => self.collect(a, c * *d, out, null),
            Term::Null(a) => {
                if null.is_none() {
                    *null = Some(a.clone());
                }
            }
            _ => out.push((c, self.canonicalize(t))),
        }
    }

    // ------------------------------------------------------------ stepping

    /// One reduction step. Outcomes are canonical.
    pub fn step(&self, t: &Term) -> Step {
        self.step_from(&self.canonicalize(t))
    }

    fn step_from(&self, canonical: &Term) -> Step {
        match self.reduce(canonical) {
            Some(outs) => Step::Reduced(
                outs.into_iter()
                    .map(|(rule, p, term)| Outcome {
                        rule,
                        p,
                        term: self.canonicalize(&term),
                    })
                    .collect(),
            ),
            None if canonical.is_value() => Step::Normal,
            None => Step::Stuck(format!("no rule applies to {}", print(canonical))),
        }
    }

    /// The rule that applies at the root of `t` (after canonicalization),
    /// if any.
    pub fn classify_redex(&self, t: &Term) -> Option<Rule> {
        self.top(&self.canonicalize(t)).map(|outs| outs[0].0)
    }

    fn reduce(&self, t: &Term) -> Option<Outs> {
        if let Some(outs) = self.top(t) {
            return Some(outs);
        }
        match t {
            Term::App(f, a) => {
                let by_name = matches!(&**f, Term::Lam(_, ann, _) if !ann.is_base_qubit_type());
                if !by_name {
                    if let Some(o) = self.reduce(a) {
                        return Some(map_outs(o, |x| Term::app((**f).clone(), x)));
                    }
                }
                self.reduce(f)
                    .map(|o| map_outs(o, |x| Term::app(x, (**a).clone())))
            }
            Term::Sum(a, b) => match self.reduce(a) {
                Some(o) => Some(map_outs(o, |x| Term::sum(x, (**b).clone()))),
                None => self
                    .reduce(b)
                    .map(|o| map_outs(o, |x| Term::sum((**a).clone(), x))),
            },
            Term::Tensor(a, b) => match self.reduce(a) {
                Some(o) => Some(map_outs(o, |x| Term::tensor(x, (**b).clone()))),
                None => self
                    .reduce(b)
                    .map(|o| map_outs(o, |x| Term::tensor((**a).clone(), x))),
            },
            Term::Scale(c, a) => self.reduce(a).map(|o| map_outs(o, |x| Term::scale(*c, x))),
            Term::Proj(j, a) => self.reduce(a).map(|o| map_outs(o, |x| Term::proj(*j, x))),
            Term::Head(a) => self.reduce(a).map(|o| map_outs(o, Term::head)),
            Term::Tail(a) => self.reduce(a).map(|o| map_outs(o, Term::tail)),
            Term::Cast {
                source,
                left,
                right,
                body,
            } => self.reduce(body).map(|o| {
                map_outs(o, |x| Term::cast(source.clone(), left.clone(), right.clone(), x))
            }),
            Term::Var(_) | Term::Lam(..) | Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => {
                None
            }
        }
    }

    /// Rules applying at the root.
    fn top(&self, t: &Term) -> Option<Outs> {
        match t {
            Term::App(f, a) => self.top_app(f, a),
            Term::Head(b) | Term::Tail(b) => {
                let Term::Tensor(h, rest) = &**b else {
                    return None;
                };
                if !h.is_base_term() || matches!(**h, Term::Tensor(..)) {
                    return None;
                }
                match t {
                    Term::Head(_) => det(Rule::Head, (**h).clone()),
                    _ => det(Rule::Tail, (**rest).clone()),
                }
            }
            Term::Cast {
                source,
                left,
                right,
                body,
            } => self.top_cast(source, left, right, body),
            Term::Proj(j, b) => self.top_proj(*j, b),
            _ => None,
        }
    }

    fn top_app(&self, f: &Term, a: &Term) -> Option<Outs> {
        if let Some((c, u)) = ite_prefix(f) {
            match c {
                Term::Ket1 => {
                    let chosen = match self.mutation {
                        Some(Mutation::SwapIfBranches) => a,
                        None => u,
                    };
                    return det(Rule::If1, chosen.clone());
                }
                Term::Ket0 => return det(Rule::If0, a.clone()),
                _ => {}
            }
        }
        match f {
            Term::Lam(x, ann, body) => {
                if !ann.is_base_qubit_type() {
                    return det(Rule::BetaN, body.substitute(x, a));
                }
                if let Some(bits) = a.as_ket_tensor() {
                    if Some(bits.len()) == ann.qubit_count() {
                        return det(Rule::BetaB, body.substitute(x, a));
                    }
                }
            }
            Term::Sum(f1, f2) if a.is_value() => {
                return det(
                    Rule::LinL,
                    Term::sum(Term::app((**f1).clone(), a.clone()), Term::app((**f2).clone(), a.clone())),
                );
            }
            Term::Scale(c, g) => {
                return det(Rule::LinScalL, Term::scale(*c, Term::app((**g).clone(), a.clone())));
            }
            Term::Null(ann) => return det(Rule::Lin0L, Term::Null(codomain(ann)?)),
            _ => {}
        }
        if !matches!(a, Term::Sum(..) | Term::Scale(..) | Term::Null(_)) || !is_done(f) {
            return None;
        }
        let Ok(Type::Arrow(dom, cod)) = infer_closed(f) else {
            return None;
        };
        if !dom.is_base_qubit_type() {
            return None;
        }
        match a {
            Term::Sum(a1, a2) => det(
                Rule::LinR,
                Term::sum(Term::app(f.clone(), (**a1).clone()), Term::app(f.clone(), (**a2).clone())),
            ),
            Term::Scale(c, b) => det(Rule::LinScalR, Term::scale(*c, Term::app(f.clone(), (**b).clone()))),
            _ => det(Rule::Lin0R, Term::Null(cod.strip_sup().clone())),
        }
    }

    fn top_cast(&self, source: &Type, left: &Type, right: &Type, body: &Term) -> Option<Outs> {
        let side = cast_side(source, left, right)?;
        let recast = |b: Term| Term::cast(source.clone(), left.clone(), right.clone(), b);
        let target = || canonical_type(&Type::tensor(left.clone(), right.clone()));
        match body {
            Term::Sum(a, b) => {
                return det(Rule::DistSumCast, Term::sum(recast((**a).clone()), recast((**b).clone())))
            }
            Term::Scale(c, b) => return det(Rule::DistScalCast, Term::scale(*c, recast((**b).clone()))),
            Term::Null(_) => return det(Rule::Dist0Cast, Term::Null(target())),
            Term::Tensor(..) => {}
            _ => return None,
        }
        let factors: Vec<&Term> = body.tensor_factors();
        let counts = factors
            .iter()
            .map(|f| infer_closed(f).ok().and_then(|a| a.qubit_count()))
            .collect::<Option<Vec<usize>>>()?;
        let width = match side {
            CastSide::Right => left.qubit_count()?,
            CastSide::Left => right.qubit_count()?,
        };
        // number of factors making up the superposed side
        let mut acc = 0;
        let mut size = None;
        let order: Vec<usize> = match side {
            CastSide::Right => counts.clone(),
            CastSide::Left => counts.iter().rev().copied().collect(),
        };
        for (k, n) in order.iter().enumerate() {
            acc += n;
            if acc == width {
                size = Some(k + 1);
                break;
            }
            if acc > width {
                return None;
            }
        }
        let size = size?;
        let (group, others): (Vec<&Term>, Vec<&Term>) = match side {
            CastSide::Right => (factors[..size].to_vec(), factors[size..].to_vec()),
            CastSide::Left => {
                let cut = factors.len() - size;
                (factors[cut..].to_vec(), factors[..cut].to_vec())
            }
        };
        let rebuild = |g: Term| -> Term {
            let mut parts: Vec<Term> = others.iter().map(|t| (*t).clone()).collect();
            match side {
                CastSide::Right => parts.insert(0, g),
                CastSide::Left => parts.push(g),
            }
            Term::tensor_of(parts)
        };
        let (r_sum, r_scal, r_zero, r_neut) = match side {
            CastSide::Right => (Rule::DistSumR, Rule::DistScalR, Rule::Dist0R, Rule::NeutR),
            CastSide::Left => (Rule::DistSumL, Rule::DistScalL, Rule::Dist0L, Rule::NeutL),
        };
        if let [single] = group[..] {
            match single {
                Term::Sum(r, s) if others.iter().all(|o| o.is_value()) => {
                    return det(
                        r_sum,
                        Term::sum(recast(rebuild((**r).clone())), recast(rebuild((**s).clone()))),
                    );
                }
                Term::Scale(c, r) => return det(r_scal, Term::scale(*c, recast(rebuild((**r).clone())))),
                Term::Null(_) => return det(r_zero, Term::Null(target())),
                _ => {}
            }
        }
        if group.iter().all(|g| g.is_base_term()) {
            return det(r_neut, body.clone());
        }
        None
    }

    fn top_proj(&self, j: usize, body: &Term) -> Option<Outs> {
        let outcomes = self.measure(j, body).ok()?;
        Some(outcomes.into_iter().map(|(p, t)| (Rule::Proj, p, t)).collect())
    }

    /// Measures the first `j` qubits of a canonical sum of ket tensors.
    /// Outcomes come in ascending order of the measured bits.
    pub fn measure(&self, j: usize, t: &Term) -> Result<Vec<(f64, Term)>, RewriteError> {
        let malformed = |why: &str| RewriteError::Malformed(format!("{}: {why}", print(t)));
        let mut groups: BTreeMap<Vec<bool>, Vec<(Scalar, Vec<bool>)>> = BTreeMap::new();
        let mut width = None;
        for (c, body) in linear_entries(t) {
            let bits = body
                .as_ket_tensor()
                .ok_or_else(|| malformed("summand is not a tensor of kets"))?;
            if *width.get_or_insert(bits.len()) != bits.len() {
                return Err(malformed("summands of different widths"));
            }
            if bits.len() < j || j == 0 {
                return Err(malformed("not enough qubits"));
            }
            groups
                .entry(bits[..j].to_vec())
                .or_default()
                .push((c, bits[j..].to_vec()));
        }
        let total: f64 = groups.values().flatten().map(|(c, _)| c.modulus_sq()).sum();
        if groups.is_empty() || total <= 0.0 {
            return Err(malformed("zero vector"));
        }
        let mut out = Vec::new();
        for (prefix, members) in groups {
            let mass: f64 = members.iter().map(|(c, _)| c.modulus_sq()).sum();
            if mass <= 0.0 {
                continue;
            }
            let mut factors: Vec<Term> = prefix.iter().map(|&b| Term::ket(b)).collect();
            if members[0].1.is_empty() {
                out.push((mass / total, Term::tensor_of(factors)));
                continue;
            }
            let norm = mass.sqrt();
            let rest = Term::sum_of(
                members
                    .into_iter()
                    .map(|(c, bits)| Term::scale(snap(c / norm), Term::kets(&bits)))
                    .collect(),
            );
            factors.push(self.canonicalize(&rest));
            out.push((mass / total, Term::tensor_of(factors)));
        }
        Ok(out)
    }

    // ------------------------------------------------------------ drivers

    /// Expands every branch until all are normal forms.
    pub fn run_distribution(&self, t: &Term, fuel: usize) -> Result<Distribution, RewriteError> {
        let mut frontier = VecDeque::from([(1.0, self.canonicalize(t), 0usize)]);
        let mut done: Vec<Branch> = Vec::new();
        while let Some((p, term, steps)) = frontier.pop_front() {
            match self.step_from(&term) {
                Step::Normal => done.push(Branch { p, term, steps }),
                Step::Stuck(reason) => return Err(RewriteError::Stuck { term, reason }),
                Step::Reduced(outs) => {
                    if steps >= fuel {
                        let mut partial = vec![term];
                        partial.extend(frontier.into_iter().map(|(_, t, _)| t));
                        partial.truncate(8);
                        return Err(RewriteError::FuelExhausted { fuel, partial });
                    }
                    for o in outs {
                        frontier.push_back((p * o.p, o.term, steps + 1));
                    }
                    if frontier.len() + done.len() > MAX_BRANCHES {
                        return Err(RewriteError::TooManyBranches(MAX_BRANCHES));
                    }
                }
            }
        }
        let mut merged: Vec<(f64, Term)> = Vec::new();
        for b in &done {
            match merged.iter_mut().find(|(_, t)| ac_eq(t, &b.term, self.eps)) {
                Some((p, _)) => *p += b.p,
                None => merged.push((b.p, b.term.clone())),
            }
        }
        merged.sort_by_cached_key(|(_, t)| print(t));
        Ok(Distribution {
            branches: done,
            merged,
        })
    }

    /// Follows a single path, picking measurement outcomes with a seeded
    /// generator by inverse CDF over the outcome list.
    pub fn sample(&self, t: &Term, seed: u64, fuel: usize) -> Result<(Term, Trace), RewriteError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = Trace::default();
        let mut term = self.canonicalize(t);
        for _ in 0..fuel {
            match self.step_from(&term) {
                Step::Normal => return Ok((term, trace)),
                Step::Stuck(reason) => return Err(RewriteError::Stuck { term, reason }),
                Step::Reduced(outs) => {
                    let k = if outs.len() == 1 {
                        0
                    } else {
                        pick(&outs, rng.gen::<f64>())
                    };
                    let o = outs.into_iter().nth(k).expect("index in range");
                    trace.steps.push(TraceStep {
                        rule: o.rule,
                        p: o.p,
                        before: term,
                        after: o.term.clone(),
                    });
                    term = o.term;
                }
            }
        }
        match self.step_from(&term) {
            Step::Normal => Ok((term, trace)),
            _ => Err(RewriteError::FuelExhausted {
                fuel,
                partial: vec![term],
            }),
        }
    }
}

fn pick(outs: &[Outcome], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, o) in outs.iter().enumerate() {
        acc += o.p;
        if u < acc {
            return k;
        }
    }
    outs.len() - 1
}

/// Type for the null vector replacing a summand that cancelled out.
fn zero_annotation(body: &Term) -> Type {
    infer_closed(body)
        .map(|a| a.strip_sup().clone())
        .unwrap_or(Type::Qubit)
}

/// Sort key for summands: the printed form with scalars rounded, so that
/// nearly equal terms sort together.
fn sort_key(t: &Term) -> String {
    print(t)
}

/// Equality modulo commutativity of sums, associativity of tensors and
/// renaming of bound variables, with scalars compared at `eps`.
pub fn ac_eq(a: &Term, b: &Term, eps: f64) -> bool {
    let linear = |t: &Term| matches!(t, Term::Sum(..) | Term::Scale(..));
    if linear(a) || linear(b) {
        let (ea, eb) = (linear_entries(a), linear_entries(b));
        if ea.len() != eb.len() {
            return false;
        }
        let mut used = vec![false; eb.len()];
        for (c, x) in &ea {
            let found = eb.iter().enumerate().position(|(k, (d, y))| {
                !used[k] && c.approx_eq(*d, eps) && ac_eq(x, y, eps)
            });
            match found {
                Some(k) => used[k] = true,
                None => return false,
            }
        }
        return true;
    }
    match (a, b) {
        (Term::Tensor(..), Term::Tensor(..)) => {
            let (fa, fb) = (a.tensor_factors(), b.tensor_factors());
            fa.len() == fb.len() && fa.iter().zip(&fb).all(|(x, y)| ac_eq(x, y, eps))
        }
        (Term::App(f1, a1), Term::App(f2, a2)) => ac_eq(f1, f2, eps) && ac_eq(a1, a2, eps),
        (Term::Proj(i, x), Term::Proj(j, y)) => i == j && ac_eq(x, y, eps),
        (Term::Head(x), Term::Head(y)) | (Term::Tail(x), Term::Tail(y)) => ac_eq(x, y, eps),
        (
            Term::Cast {
                source: s1,
                left: l1,
                right: r1,
                body: x,
            },
            Term::Cast {
                source: s2,
                left: l2,
                right: r2,
                body: y,
            },
        ) => s1 == s2 && l1 == l2 && r1 == r2 && ac_eq(x, y, eps),
        (Term::Null(x), Term::Null(y)) => canonical_type(x) == canonical_type(y),
        (Term::Lam(x, t1, b1), Term::Lam(y, t2, b2)) if t1 == t2 => {
            if x == y {
                ac_eq(b1, b2, eps)
            } else if !b2.free_vars().contains(x) {
                ac_eq(b1, &b2.substitute(y, &Term::var(x.clone())), eps)
            } else {
                a.alpha_eq(b, eps)
            }
        }
        _ => a.alpha_eq(b, eps),
    }
}

/// Renormalized amplitudes like `2/sqrt(5)` come out an ulp or two off;
/// pull them onto the value their printed form reads back as.
fn snap(c: Scalar) -> Scalar {
    Scalar::new(snap_real(c.re()), snap_real(c.im())).unwrap_or(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse, parse_term};

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn eng() -> Engine {
        Engine::default()
    }

    fn canon_is(src: &str, expected: &str) {
        let got = eng().canonicalize(&t(src));
        assert!(ac_eq(&got, &t(expected), 1e-9), "{src}: got {got}, expected {expected}");
    }

    #[test]
    fn canonicalize_examples() {
        canon_is("0.25.|0> + 0.5.|0>", "0.75.|0>");
        canon_is("1.(|1> * |1> * |1>)", "|1> * |1> * |1>");
        canon_is("(1/sqrt(2)).|0> + (-1/sqrt(2)).|0>", "null[B]");
        canon_is("null[B] + |1>", "|1>");
        canon_is("2.(3.|0>)", "6.|0>");
        canon_is("2.(|0> + |1>)", "2.|0> + 2.|1>");
        canon_is("0.|1>", "null[B]");
        canon_is("|1> + |0>", "|0> + |1>");
        canon_is("(|0> * |1>) * |0>", "|0> * |1> * |0>");
        canon_is("|0> + |0>", "2.|0>");
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let e = eng();
        for s in ["|1> + 2.|0> + (-1).|1>", "(|0> * |1>) * (|1> + |0>)", "pi[1] (|0> + |1>) + pi[1] (|0> + |1>)"] {
            let once = e.canonicalize(&t(s));
            assert_eq!(e.canonicalize(&once), once);
        }
    }

    #[test]
    fn measurements_are_not_merged() {
        let c = eng().canonicalize(&t("pi[1] (|0> + |1>) + pi[1] (|0> + |1>)"));
        assert!(matches!(c, Term::Sum(..)));
    }

    fn single(s: &str) -> (Rule, Term) {
        match eng().step(&t(s)) {
            Step::Reduced(outs) => {
                assert_eq!(outs.len(), 1);
                (outs[0].rule, outs[0].term.clone())
            }
            other => panic!("{s}: {other:?}"),
        }
    }

    #[test]
    fn step_examples() {
        assert_eq!(single("if |1> then |0> else |1>"), (Rule::If1, Term::Ket0));
        assert_eq!(single("if |0> then |0> else |1>"), (Rule::If0, Term::Ket1));
        assert_eq!(single("(\\x:B. x) |0>"), (Rule::BetaB, Term::Ket0));
        assert_eq!(single("head (|0> * |1>)"), (Rule::Head, Term::Ket0));
        assert_eq!(single("tail (|0> * |1> * |1>)").1, Term::kets(&[true, true]));
        assert!(matches!(eng().step(&Term::Ket0), Step::Normal));
    }

    #[test]
    fn classify_examples() {
        let e = eng();
        let f = "(\\x:B. x * x)";
        assert_eq!(
            e.classify_redex(&t(&format!("{f} ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>)"))),
            Some(Rule::LinR)
        );
        assert_eq!(e.classify_redex(&t("(\\x:S(B). x) (|0> + |1>)")), Some(Rule::BetaN));
        assert_eq!(e.classify_redex(&t("head (|0> * |1>)")), Some(Rule::Head));
        assert_eq!(e.classify_redex(&t(&format!("{f} (2.|0>)"))), Some(Rule::LinScalR));
        assert_eq!(e.classify_redex(&t(&format!("{f} null[B]"))), Some(Rule::Lin0R));
        assert_eq!(e.classify_redex(&t("(2.(\\x:B. x)) |0>")), Some(Rule::LinScalL));
        assert_eq!(e.classify_redex(&t("((\\x:B. x) + (\\x:B. |0>)) |1>")), Some(Rule::LinL));
        assert_eq!(e.classify_redex(&t("null[B => B] |1>")), Some(Rule::Lin0L));
        assert_eq!(e.classify_redex(&t("|0>")), None);
    }

    #[test]
    fn cast_rules() {
        let e = eng();
        let c = |s: &str| e.classify_redex(&t(s));
        assert_eq!(c("cast{S(B)*B}{B*B} ((|0> + |1>) * |0>)"), Some(Rule::DistSumR));
        assert_eq!(c("cast{B*S(B)}{B*B} (|0> * (|0> + |1>))"), Some(Rule::DistSumL));
        assert_eq!(c("cast{S(B)*B}{B*B} ((2.|1>) * |0>)"), Some(Rule::DistScalR));
        assert_eq!(c("cast{B*S(B)}{B*B} (|0> * (2.|1>))"), Some(Rule::DistScalL));
        assert_eq!(c("cast{S(B)*B}{B*B} (null[B] * |0>)"), Some(Rule::Dist0R));
        assert_eq!(c("cast{B*S(B)}{B*B} (|0> * null[B])"), Some(Rule::Dist0L));
        assert_eq!(c("cast{S(B)*B}{B*B} (|0> * |1> + |1> * |1>)"), Some(Rule::DistSumCast));
        assert_eq!(c("cast{S(B)*B}{B*B} (2.(|0> * |1>))"), Some(Rule::DistScalCast));
        assert_eq!(c("cast{S(B)*B}{B*B} (|0> * |1>)"), Some(Rule::NeutR));
        assert_eq!(c("cast{B*S(B)}{B*B} (|0> * |1>)"), Some(Rule::NeutL));
        assert_eq!(c("cast{S(B)*B}{B*B} null[B*B]"), Some(Rule::Dist0Cast));
    }

    #[test]
    fn measure_examples() {
        let e = eng();
        let three = e.canonicalize(&t("2.(|0>*|1>*|1>) + |0>*|1>*|0> + 3.(|1>*|1>*|1>)"));
        let outs = e.measure(2, &three).unwrap();
        assert_eq!(outs.len(), 2);
        assert!((outs[0].0 - 5.0 / 14.0).abs() < 1e-12);
        assert!((outs[1].0 - 9.0 / 14.0).abs() < 1e-12);
        let first = t("|0> * |1> * ((1/sqrt(5)).|0> + (2/sqrt(5)).|1>)");
        assert!(ac_eq(&outs[0].1, &first, 1e-12), "{}", outs[0].1);
        assert!(ac_eq(&outs[1].1, &Term::kets(&[true, true, true]), 1e-12));

        let outs = e.measure(1, &Term::Ket0).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0], (1.0, Term::Ket0));

        let s = e.canonicalize(&t("(1/sqrt(2)).(|1>*|0>) + (1/sqrt(2)).(|1>*|1>)"));
        let outs = e.measure(1, &s).unwrap();
        assert_eq!(outs.len(), 1);
        let expect = t("|1> * ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>)");
        assert!(ac_eq(&outs[0].1, &expect, 1e-12));
        assert!((outs[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_distribution() {
        let d = eng()
            .run_distribution(&t("pi ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>)"), 100)
            .unwrap();
        assert_eq!(d.merged.len(), 2);
        assert!((d.merged[0].0 - 0.5).abs() < 1e-12);
        assert_eq!(d.merged[0].1, Term::Ket0);
        assert_eq!(d.merged[1].1, Term::Ket1);
    }

    #[test]
    fn no_cloning_measure_first() {
        let src = "(\\x:B. x * x) (pi ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>))";
        let d = eng().run_distribution(&t(src), 100).unwrap();
        let got: Vec<Term> = d.merged.iter().map(|(_, t)| t.clone()).collect();
        assert_eq!(got, vec![Term::kets(&[false, false]), Term::kets(&[true, true])]);
    }

    #[test]
    fn hadamard_distributes() {
        let src = "let H = \\x:B. (1/sqrt(2)).(|0> + (if x then (-|1>) else |1>));\nH ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>)";
        let d = eng().run_distribution(&parse(src).unwrap().main, 1000).unwrap();
        assert_eq!(d.merged.len(), 1);
        assert!(ac_eq(&d.merged[0].1, &Term::Ket0, 1e-9), "{}", d.merged[0].1);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let src = t("pi[2] (2.(|0>*|1>*|1>) + |0>*|1>*|0> + 3.(|1>*|1>*|1>))");
        let e = eng();
        let (a, ta) = e.sample(&src, 3, 100).unwrap();
        let (b, tb) = e.sample(&src, 3, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.to_string(), tb.to_string());
        let (r, tr) = e.sample(&t("pi (1.|0>)"), 0, 10).unwrap();
        assert_eq!(r, Term::Ket0);
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].rule, Rule::Proj);
        assert_eq!(tr.to_string(), "[proj p=1] pi[1] |0> ⟶ |0>\n");
    }

    #[test]
    fn fuel_is_enforced() {
        let e = eng();
        let err = e.run_distribution(&t("(\\x:B. x) ((\\x:B. x) |0>)"), 1).unwrap_err();
        assert!(matches!(err, RewriteError::FuelExhausted { .. }));
    }
}
