//! Random well-typed closed terms and the metatheory checks run on them:
//! type preservation, conservation of probability, soundness of the
//! denotation and its invariance under reduction.
//!
//! Terms are built bottom-up from a goal: either a base register of `n`
//! qubits or any term of type at most `S(B^n)`. Candidates that do not
//! typecheck, or whose evaluation gets stuck, are discarded.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rewrite::{Engine, Step};
use crate::scalar::Scalar;
use crate::semantics::{check_reduction_commutes, check_soundness, denote_closed};
use crate::surface::print;
use crate::syntax::{Term, Type};
use crate::typecheck::infer_closed;
use crate::typesys::subtype;

/// Size limits for generated terms.
#[derive(Clone, Copy, Debug)]
pub struct GenBudget {
    pub max_depth: usize,
    pub max_qubits: usize,
    pub count: usize,
}

impl GenBudget {
    pub fn new(max_depth: usize, max_qubits: usize, count: usize) -> GenBudget {
        assert!((1..=8).contains(&max_qubits), "max_qubits must be in 1..=8");
        GenBudget {
            max_depth,
            max_qubits,
            count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Property {
    SubjectReduction,
    ProbabilityConservation,
    Soundness,
    Commutation,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::SubjectReduction,
        Property::ProbabilityConservation,
        Property::Soundness,
        Property::Commutation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::SubjectReduction => "subject-reduction",
            Property::ProbabilityConservation => "probability-conservation",
            Property::Soundness => "soundness",
            Property::Commutation => "commutation",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct Violation {
    pub property: Property,
    /// The generated term.
    pub original: Term,
    /// A smaller term failing the same property.
    pub shrunk: Term,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    /// Well-typed terms checked.
    pub generated: usize,
    /// Candidates drawn, including rejected ones.
    pub attempts: usize,
    /// Reduction states visited across all branches.
    pub states: usize,
    /// Terms checked per property, in the order of [`Property::ALL`].
    pub checked: [usize; 4],
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "generated {} terms ({} candidates), visited {} states",
            self.generated, self.attempts, self.states
        )?;
        for (p, n) in Property::ALL.iter().zip(self.checked) {
            let bad = self.violations.iter().filter(|v| v.property == *p).count();
            writeln!(f, "  {p}: {n} terms, {bad} violations")?;
        }
        for v in &self.violations {
            writeln!(f, "violation of {}: {}", v.property, v.detail)?;
            writeln!(f, "  term:   {}", print(&v.original))?;
            writeln!(f, "  shrunk: {}", print(&v.shrunk))?;
        }
        Ok(())
    }
}

/// Options for [`run_properties`].
#[derive(Clone, Debug)]
pub struct PropConfig {
    pub seed: u64,
    pub fuel: usize,
    pub eps: f64,
    /// Tolerance on total probability.
    pub prob_tol: f64,
    /// Stop after this many violations.
    pub max_violations: usize,
}

impl Default for PropConfig {
    fn default() -> Self {
        PropConfig {
            seed: 0,
            fuel: 2_000,
            eps: 1e-9,
            prob_tol: 1e-9,
            max_violations: 5,
        }
    }
}

// ------------------------------------------------------------------ generator

#[derive(Clone, Copy, PartialEq, Eq)]
enum Goal {
    /// Exactly `B^n`.
    Base(usize),
    /// Anything below `S(B^n)`.
    Sup(usize),
}

struct Gen {
    rng: ChaCha8Rng,
    max_qubits: usize,
    /// A measurement may still be placed.
    proj_left: bool,
    fresh: usize,
}

type Scope = Vec<(String, usize)>;

fn src(k: usize) -> Type {
    Type::sup(Type::qubits(k))
}

/// `cast{S(B^k) * B^m}{B^k * B^m}`.
fn cast_right(k: usize, m: usize, body: Term) -> Term {
    Term::cast(Type::tensor(src(k), Type::qubits(m)), Type::qubits(k), Type::qubits(m), body)
}

/// `cast{B^k * S(B^m)}{B^k * B^m}`.
fn cast_left(k: usize, m: usize, body: Term) -> Term {
    Term::cast(Type::tensor(Type::qubits(k), src(m)), Type::qubits(k), Type::qubits(m), body)
}

const COEFS: [(f64, f64); 8] = [
    (std::f64::consts::FRAC_1_SQRT_2, 0.0),
    (-std::f64::consts::FRAC_1_SQRT_2, 0.0),
    (0.5, 0.0),
    (2.0, 0.0),
    (0.0, 1.0),
    (0.6, 0.0),
    (0.8, 0.0),
    (-1.0, 0.0),
];

impl Gen {
    fn name(&mut self) -> String {
        self.fresh += 1;
        format!("x{}", self.fresh)
    }

    fn coef(&mut self) -> Scalar {
        let (re, im) = *COEFS.choose(&mut self.rng).expect("nonempty");
        Scalar::new(re, im).expect("finite")
    }

    fn kets(&mut self, n: usize) -> Term {
        let bits: Vec<bool> = (0..n).map(|_| self.rng.gen()).collect();
        Term::kets(&bits)
    }

    fn split(&mut self, n: usize) -> usize {
        self.rng.gen_range(1..n)
    }

    fn width(&mut self) -> usize {
        self.rng.gen_range(1..=self.max_qubits)
    }

    fn term(&mut self, goal: Goal, depth: usize, scope: &Scope, proj_ok: bool) -> Term {
        match goal {
            Goal::Base(n) => self.base(n, depth, scope, proj_ok),
            Goal::Sup(n) => self.sup(n, depth, scope, proj_ok),
        }
    }

    fn base_leaf(&mut self, n: usize, scope: &Scope) -> Term {
        let vars: Vec<&String> = scope.iter().filter(|(_, w)| *w == n).map(|(x, _)| x).collect();
        if !vars.is_empty() && self.rng.gen_bool(0.6) {
            return Term::var(vars.choose(&mut self.rng).expect("nonempty").as_str());
        }
        self.kets(n)
    }

    fn base(&mut self, n: usize, depth: usize, scope: &Scope, proj_ok: bool) -> Term {
        if depth == 0 {
            return self.base_leaf(n, scope);
        }
        let d = depth - 1;
        loop {
            match self.rng.gen_range(0..8) {
                0 => return self.base_leaf(n, scope),
                1 if n >= 2 => {
                    let k = self.split(n);
                    let a = self.base(k, d, scope, proj_ok);
                    let b = self.base(n - k, d, scope, proj_ok);
                    return Term::tensor(a, b);
                }
                2 if n == 1 && self.max_qubits >= 2 => {
                    let m = self.rng.gen_range(2..=self.max_qubits);
                    return Term::head(self.base(m, d, scope, proj_ok));
                }
                3 if n < self.max_qubits => {
                    return Term::tail(self.base(n + 1, d, scope, proj_ok));
                }
                4 => {
                    let k = self.width();
                    let x = self.name();
                    let mut inner = scope.clone();
                    inner.push((x.clone(), k));
                    let body = self.base(n, d, &inner, false);
                    let arg = self.base(k, d, scope, proj_ok);
                    return Term::app(Term::lam(x, Type::qubits(k), body), arg);
                }
                5 if n == 1 => {
                    let c = self.base(1, d, scope, proj_ok);
                    let u = self.base(1, d, scope, proj_ok);
                    let v = self.base(1, d, scope, proj_ok);
                    return Term::ite(c, u, v);
                }
                6 if proj_ok && self.proj_left => {
                    self.proj_left = false;
                    let body = self.sup(n, d, scope, proj_ok);
                    return Term::proj(n, body);
                }
                _ => {}
            }
        }
    }

    fn sup(&mut self, n: usize, depth: usize, scope: &Scope, proj_ok: bool) -> Term {
        if depth == 0 {
            return match self.rng.gen_range(0..4) {
                0 => Term::Null(Type::qubits(n)),
                1 => {
                    let c = self.coef();
                    Term::scale(c, self.kets(n))
                }
                _ => self.base_leaf(n, scope),
            };
        }
        let d = depth - 1;
        loop {
            match self.rng.gen_range(0..13) {
                0 => return self.base(n, d, scope, proj_ok),
                1 => {
                    let c = self.coef();
                    return Term::scale(c, self.sup(n, d, scope, proj_ok));
                }
                2 | 3 => {
                    let a = self.sup(n, d, scope, proj_ok);
                    let b = self.sup(n, d, scope, proj_ok);
                    return Term::sum(a, b);
                }
                4 => return Term::Null(Type::qubits(n)),
                5 if n >= 2 => {
                    let k = self.split(n);
                    let a = self.sup(k, d, scope, proj_ok);
                    let b = self.base(n - k, d, scope, proj_ok);
                    return cast_right(k, n - k, Term::tensor(a, b));
                }
                6 if n >= 2 => {
                    let k = self.split(n);
                    let a = self.base(k, d, scope, proj_ok);
                    let b = self.sup(n - k, d, scope, proj_ok);
                    return cast_left(k, n - k, Term::tensor(a, b));
                }
                7 if n >= 2 => {
                    let k = self.split(n);
                    let m = n - k;
                    let a = self.sup(k, d, scope, proj_ok);
                    let b = self.sup(m, d, scope, proj_ok);
                    let inner = Term::cast(Type::tensor(src(k), src(m)), src(k), Type::qubits(m), Term::tensor(a, b));
                    return cast_right(k, m, inner);
                }
                8 => {
                    let k = self.width();
                    let x = self.name();
                    let mut inner = scope.clone();
                    inner.push((x.clone(), k));
                    let body = self.sup(n, d, &inner, false);
                    let arg = self.sup(k, d, scope, proj_ok);
                    return Term::app(Term::lam(x, Type::qubits(k), body), arg);
                }
                9 => {
                    let k = self.width();
                    let x = self.name();
                    if let Some(body) = self.by_name_body(&x, k, n, d, scope) {
                        let arg = self.sup(k, d, scope, false);
                        return Term::app(Term::lam(x, src(k), body), arg);
                    }
                }
                10 if n == 1 => {
                    let c = self.sup(1, d, scope, proj_ok);
                    let u = self.base(1, d, scope, proj_ok);
                    let v = self.base(1, d, scope, proj_ok);
                    return Term::ite(c, u, v);
                }
                11 if n == 1 => {
                    let c = self.base(1, d, scope, proj_ok);
                    let u = self.sup(1, d, scope, proj_ok);
                    let v = self.sup(1, d, scope, proj_ok);
                    return Term::ite(c, u, v);
                }
                12 if n >= 2 && proj_ok && self.proj_left => {
                    self.proj_left = false;
                    let j = self.split(n);
                    let body = self.sup(n, d, scope, proj_ok);
                    return cast_left(j, n - j, Term::proj(j, body));
                }
                _ => {}
            }
        }
    }

    /// A body using the superposed variable `x : S(B^k)` exactly once, of
    /// `n` qubits.
    fn by_name_body(&mut self, x: &str, k: usize, n: usize, d: usize, scope: &Scope) -> Option<Term> {
        let v = Term::var(x);
        if n == k {
            return Some(match self.rng.gen_range(0..4) {
                0 => v,
                1 => Term::scale(self.coef(), v),
                2 => Term::sum(v, self.sup(n, d, scope, false)),
                _ => {
                    let y = self.name();
                    let mut inner = scope.clone();
                    inner.push((y.clone(), k));
                    let body = self.sup(n, d, &inner, false);
                    Term::app(Term::lam(y, Type::qubits(k), body), v)
                }
            });
        }
        if n > k {
            let m = n - k;
            return Some(if self.rng.gen_bool(0.5) {
                cast_right(k, m, Term::tensor(v, self.base(m, d, scope, false)))
            } else {
                cast_left(m, k, Term::tensor(self.base(m, d, scope, false), v))
            });
        }
        None
    }
}

/// Draws well-typed closed terms. Every returned term typechecks and
/// evaluates without getting stuck or running out of fuel.
pub struct TermGenerator {
    gen: Gen,
    budget: GenBudget,
    engine: Engine,
    fuel: usize,
    pub attempts: usize,
}

impl TermGenerator {
    pub fn new(seed: u64, budget: GenBudget, engine: Engine, fuel: usize) -> TermGenerator {
        TermGenerator {
            gen: Gen {
                rng: ChaCha8Rng::seed_from_u64(seed),
                max_qubits: budget.max_qubits,
                proj_left: true,
                fresh: 0,
            },
            budget,
            engine,
            fuel,
            attempts: 0,
        }
    }

    /// One candidate, not yet filtered.
    pub fn candidate(&mut self) -> Term {
        let g = &mut self.gen;
        g.proj_left = true;
        g.fresh = 0;
        let n = g.width();
        let goal = if g.rng.gen_bool(0.3) { Goal::Base(n) } else { Goal::Sup(n) };
        let max = self.budget.max_depth;
        let depth = if g.rng.gen_bool(0.5) { max } else { g.rng.gen_range(0..=max) };
        g.term(goal, depth, &Scope::new(), true)
    }

    /// The next accepted term, or `None` after too many rejections in a row.
    pub fn next_term(&mut self) -> Option<Term> {
        for _ in 0..1000 {
            self.attempts += 1;
            let t = self.candidate();
            if acceptable(&t, &self.engine, self.fuel) {
                return Some(t);
            }
        }
        None
    }
}

/// Well typed, evaluates to normal forms, and every closed measurement in
/// it has a denotation. The last condition rules out terms measuring the
/// zero vector in a part that reduction later throws away.
fn acceptable(t: &Term, engine: &Engine, fuel: usize) -> bool {
    infer_closed(t).is_ok()
        && engine.run_distribution(t, fuel).is_ok()
        && closed_projections(t).iter().all(|p| denote_closed(p, engine.eps).is_ok())
}

fn closed_projections(t: &Term) -> Vec<&Term> {
    let mut out = Vec::new();
    let mut stack = vec![t];
    while let Some(s) = stack.pop() {
        if matches!(s, Term::Proj(..)) && s.is_closed() {
            out.push(s);
        }
        stack.extend(children(s));
    }
    out
}

// ------------------------------------------------------------------ checks

/// Checks all four properties along every reduction branch of `t`, returning
/// the first failure.
pub fn check_term(
    t: &Term,
    engine: &Engine,
    cfg: &PropConfig,
    states: &mut usize,
) -> Result<(), (Property, String)> {
    let ty0 = infer_closed(t).map_err(|e| (Property::SubjectReduction, format!("input is ill-typed: {e}")))?;
    let qubit = ty0.is_qubit_type();
    let mut queue = VecDeque::from([(t.clone(), ty0, 1.0f64, 0usize)]);
    let mut finished = 0.0;
    while let Some((s, ty, p, depth)) = queue.pop_front() {
        *states += 1;
        if qubit {
            match check_soundness(&s, cfg.eps) {
                Ok(true) => {}
                Ok(false) => return Err((Property::Soundness, format!("{} escapes {ty}", print(&s)))),
                Err(e) => return Err((Property::Soundness, format!("{}: {e}", print(&s)))),
            }
            match check_reduction_commutes(&s, engine, cfg.eps) {
                Ok(true) => {}
                Ok(false) => {
                    return Err((Property::Commutation, format!("denotation changes when reducing {}", print(&s))))
                }
                Err(e) => return Err((Property::Commutation, format!("{}: {e}", print(&s)))),
            }
        }
        let outs = match engine.step(&s) {
            Step::Normal => {
                finished += p;
                continue;
            }
            Step::Stuck(r) => return Err((Property::SubjectReduction, format!("stuck: {r}"))),
            Step::Reduced(outs) => outs,
        };
        if depth >= cfg.fuel {
            return Err((Property::ProbabilityConservation, "fuel exhausted".into()));
        }
        let total: f64 = outs.iter().map(|o| o.p).sum();
        if (total - 1.0).abs() > cfg.prob_tol {
            return Err((
                Property::ProbabilityConservation,
                format!("step from {} has total probability {total}", print(&s)),
            ));
        }
        for o in outs {
            let tr = match infer_closed(&o.term) {
                Ok(a) => a,
                Err(e) => {
                    return Err((
                        Property::SubjectReduction,
                        format!("{} ⟶ {} [{}]: {e}", print(&s), print(&o.term), o.rule),
                    ))
                }
            };
            if !subtype(&tr, &ty) {
                return Err((
                    Property::SubjectReduction,
                    format!("{} : {ty} ⟶ {} : {tr} [{}]", print(&s), print(&o.term), o.rule),
                ));
            }
            queue.push_back((o.term, tr, p * o.p, depth + 1));
        }
    }
    if (finished - 1.0).abs() > cfg.prob_tol {
        return Err((Property::ProbabilityConservation, format!("normal forms have total probability {finished}")));
    }
    Ok(())
}

/// Generates `budget.count` terms and checks every property on each.
pub fn run_properties(budget: GenBudget, engine: &Engine, cfg: &PropConfig) -> Report {
    let mut gen = TermGenerator::new(cfg.seed, budget, engine.clone(), cfg.fuel);
    let mut report = Report::default();
    while report.generated < budget.count {
        let Some(t) = gen.next_term() else { break };
        report.generated += 1;
        let qubit = infer_closed(&t).map(|a| a.is_qubit_type()).unwrap_or(false);
        for (k, p) in Property::ALL.iter().enumerate() {
            if qubit || matches!(p, Property::SubjectReduction | Property::ProbabilityConservation) {
                report.checked[k] += 1;
            }
        }
        if let Err((property, detail)) = check_term(&t, engine, cfg, &mut report.states) {
            let shrunk = shrink(&t, property, engine, cfg);
            report.violations.push(Violation {
                property,
                original: t,
                shrunk,
                detail,
            });
            if report.violations.len() >= cfg.max_violations {
                break;
            }
        }
    }
    report.attempts = gen.attempts;
    report
}

// ------------------------------------------------------------------ shrinking

/// Greedily replaces subterms by smaller ones while the result stays well
/// typed, evaluates, and still violates `property`.
pub fn shrink(t: &Term, property: Property, engine: &Engine, cfg: &PropConfig) -> Term {
    let still_fails = |c: &Term| {
        acceptable(c, engine, cfg.fuel)
            && matches!(check_term(c, engine, cfg, &mut 0), Err((p, _)) if p == property)
    };
    let mut best = t.clone();
    'outer: for _ in 0..200 {
        let mut cands = shrinks(&best);
        cands.sort_by_key(Term::size);
        for c in cands {
            if c.size() < best.size() && still_fails(&c) {
                best = c;
                continue 'outer;
            }
        }
        break;
    }
    best
}

/// Terms obtained by replacing one subterm by one of its children or by a
/// ket register.
fn shrinks(t: &Term) -> Vec<Term> {
    let mut out: Vec<Term> = children(t).into_iter().cloned().collect();
    if let Ok(a) = infer_closed(t) {
        if let Some(n) = a.qubit_count() {
            if t.size() > n {
                out.push(Term::kets(&vec![false; n]));
            }
        }
    }
    let rebuild = |t: &Term, k: usize, c: Term| -> Term {
        let b = Box::new(c);
        match (t, k) {
            (Term::Lam(x, a, _), _) => Term::Lam(x.clone(), a.clone(), b),
            (Term::App(_, a), 0) => Term::App(b, a.clone()),
            (Term::App(f, _), _) => Term::App(f.clone(), b),
            (Term::Sum(_, r), 0) => Term::Sum(b, r.clone()),
            (Term::Sum(l, _), _) => Term::Sum(l.clone(), b),
            (Term::Tensor(_, r), 0) => Term::Tensor(b, r.clone()),
            (Term::Tensor(l, _), _) => Term::Tensor(l.clone(), b),
            (Term::Scale(s, _), _) => Term::Scale(*s, b),
            (Term::Proj(j, _), _) => Term::Proj(*j, b),
            (Term::Head(_), _) => Term::Head(b),
            (Term::Tail(_), _) => Term::Tail(b),
            (Term::Cast { source, left, right, .. }, _) => Term::Cast {
                source: source.clone(),
                left: left.clone(),
                right: right.clone(),
                body: b,
            },
            _ => unreachable!("leaf has no children"),
        }
    };
    for (k, c) in children(t).into_iter().enumerate() {
        for s in shrinks(c) {
            out.push(rebuild(t, k, s));
        }
    }
    out
}

fn children(t: &Term) -> Vec<&Term> {
    match t {
        Term::Lam(_, _, b) | Term::Scale(_, b) | Term::Proj(_, b) | Term::Head(b) | Term::Tail(b) => vec![b],
        Term::Cast { body, .. } => vec![body],
        Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => vec![a, b],
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewrite::Mutation;
    use crate::surface::parse_term;

    #[test]
    fn generated_terms_are_well_typed() {
        let mut g = TermGenerator::new(1, GenBudget::new(3, 3, 50), Engine::default(), 2000);
        for _ in 0..50 {
            let t = g.next_term().expect("generator makes progress");
            assert!(t.is_closed());
            infer_closed(&t).unwrap();
        }
    }

    #[test]
    fn depth_zero_passes() {
        let r = run_properties(GenBudget::new(0, 2, 10), &Engine::default(), &PropConfig::default());
        assert_eq!(r.generated, 10);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn small_run_passes() {
        let cfg = PropConfig {
            seed: 11,
            ..PropConfig::default()
        };
        let r = run_properties(GenBudget::new(3, 3, 60), &Engine::default(), &cfg);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn broken_rule_is_caught_and_shrunk() {
        let engine = Engine {
            mutation: Some(Mutation::SwapIfBranches),
            ..Engine::default()
        };
        let t = parse_term("(\\y:B. y * |1>) (if |1> then |0> else |1>)").unwrap();
        let cfg = PropConfig::default();
        let err = check_term(&t, &engine, &cfg, &mut 0).unwrap_err();
        assert_eq!(err.0, Property::Commutation);
        let s = shrink(&t, err.0, &engine, &cfg);
        assert!(s.size() < t.size(), "{}", print(&s));

        let r = run_properties(GenBudget::new(3, 2, 200), &engine, &cfg);
        assert!(!r.passed());
    }
}
