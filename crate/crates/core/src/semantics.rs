//! Vector denotations of closed qubit-typed terms.
//!
//! A term denotes a finite set of vectors (one per combination of
//! measurement outcomes). Abstractions are kept as closures and only ever
//! applied: an abstraction over a base type is extended linearly, decomposing
//! its argument in the computational basis, while one over a superposed type
//! receives its argument whole.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::rewrite::{Engine, RewriteError, Step};
use crate::syntax::{Name, Term, Type};
use crate::typecheck::{infer_closed, TypeError};
use crate::typesys::canonical_type;

/// Largest set a single subterm may denote.
pub const MAX_SET: usize = 4096;

/// A vector of `2^qubits` amplitudes. Index bit `qubits - 1 - k` is qubit `k`,
/// so the first qubit is the most significant.
#[derive(Clone, PartialEq)]
pub struct DenVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl DenVector {
    pub fn new(amps: Vec<Complex64>) -> Option<DenVector> {
        let n = amps.len();
        if n == 0 || !n.is_power_of_two() {
            return None;
        }
        Some(DenVector {
            qubits: n.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn zero(qubits: usize) -> DenVector {
        DenVector {
            qubits,
            amps: vec![Complex64::new(0.0, 0.0); 1 << qubits],
        }
    }

    pub fn basis(bits: &[bool]) -> DenVector {
        let mut v = DenVector::zero(bits.len());
        v.amps[index_of(bits)] = Complex64::new(1.0, 0.0);
        v
    }

    /// Parses a real vector, handy in tests.
    pub fn real(xs: &[f64]) -> DenVector {
        DenVector::new(xs.iter().map(|&x| Complex64::new(x, 0.0)).collect()).expect("length 2^m")
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn is_zero(&self, eps: f64) -> bool {
        self.amps.iter().all(|a| small(*a, eps))
    }

    pub fn approx_eq(&self, other: &DenVector, eps: f64) -> bool {
        self.qubits == other.qubits
            && self.amps.iter().zip(&other.amps).all(|(a, b)| small(a - b, eps))
    }

    /// The bits of the basis vector this is, if it is one.
    pub fn as_basis(&self, eps: f64) -> Option<Vec<bool>> {
        let mut found = None;
        for (k, a) in self.amps.iter().enumerate() {
            if small(*a, eps) {
                continue;
            }
            if found.is_some() || !small(a - 1.0, eps) {
                return None;
            }
            found = Some(k);
        }
        found.map(|k| bits_of(k, self.qubits))
    }

    pub fn kron(&self, other: &DenVector) -> DenVector {
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        DenVector {
            qubits: self.qubits + other.qubits,
            amps,
        }
    }

    fn scaled(&self, c: Complex64) -> DenVector {
        DenVector {
            qubits: self.qubits,
            amps: self.amps.iter().map(|a| a * c).collect(),
        }
    }

    fn plus(&self, other: &DenVector) -> Result<DenVector, SemanticError> {
        if self.qubits != other.qubits {
            return Err(SemanticError::Shape(format!(
                "adding vectors of {} and {} qubits",
                self.qubits, other.qubits
            )));
        }
        Ok(DenVector {
            qubits: self.qubits,
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect(),
        })
    }
}

impl fmt::Debug for DenVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, a) in self.amps.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            if a.im == 0.0 {
                write!(f, "{}", a.re)?;
            } else {
                write!(f, "{}{:+}i", a.re, a.im)?;
            }
        }
        f.write_str(")")
    }
}

fn small(a: Complex64, eps: f64) -> bool {
    a.re.abs() <= eps && a.im.abs() <= eps
}

fn index_of(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

fn bits_of(k: usize, n: usize) -> Vec<bool> {
    (0..n).rev().map(|s| (k >> s) & 1 == 1).collect()
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SemanticError {
    #[error("arrow type {0} has no vector denotation")]
    ArrowType(Type),
    #[error("unbound variable {0}")]
    Unbound(Name),
    #[error("unsupported higher-order shape: {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("measurement of the zero vector")]
    ZeroMeasurement,
    #[error("head or tail of a non-basis vector")]
    NotBasis,
    #[error("denotation has more than {MAX_SET} elements")]
    TooLarge,
    #[error("ill-typed: {0}")]
    Type(#[from] TypeError),
    #[error("reduction failed: {0}")]
    Reduction(#[from] crate::rewrite::RewriteError),
}

// ------------------------------------------------------------------ values

#[derive(Clone, Debug)]
enum Den {
    Vector(DenVector),
    /// A linear combination of functions.
    Fun(Vec<(Complex64, FunVal)>),
}

#[derive(Clone, Debug)]
enum FunVal {
    Closure {
        param: Name,
        ann: Type,
        body: Term,
        env: Env,
    },
    Ite,
    Ite1(DenVector),
    Ite2(DenVector, Box<Den>),
}

type Env = BTreeMap<Name, Den>;

impl Den {
    fn scaled(&self, c: Complex64) -> Den {
        match self {
            Den::Vector(v) => Den::Vector(v.scaled(c)),
            Den::Fun(fs) => Den::Fun(fs.iter().map(|(a, f)| (a * c, f.clone())).collect()),
        }
    }

    fn plus(&self, other: &Den) -> Result<Den, SemanticError> {
        match (self, other) {
            (Den::Vector(a), Den::Vector(b)) => Ok(Den::Vector(a.plus(b)?)),
            (Den::Fun(a), Den::Fun(b)) => Ok(Den::Fun(a.iter().chain(b).cloned().collect())),
            _ => Err(SemanticError::Shape("adding a vector to a function".into())),
        }
    }

    fn vector(self) -> Result<DenVector, SemanticError> {
        match self {
            Den::Vector(v) => Ok(v),
            Den::Fun(_) => Err(SemanticError::Unsupported("function where a vector was expected".into())),
        }
    }

    fn as_vector(&self) -> Result<&DenVector, SemanticError> {
        match self {
            Den::Vector(v) => Ok(v),
            Den::Fun(_) => Err(SemanticError::Unsupported("function where a vector was expected".into())),
        }
    }
}

/// Every way of picking one element from each set, combined with `f`.
fn product(
    sets: &[Vec<Den>],
    eps: f64,
    f: impl Fn(&[&Den]) -> Result<Den, SemanticError>,
) -> Result<Vec<Den>, SemanticError> {
    let mut picks: Vec<Vec<&Den>> = vec![Vec::new()];
    for s in sets {
        let mut next = Vec::with_capacity(picks.len() * s.len());
        for p in &picks {
            for d in s {
                let mut q = p.clone();
                q.push(d);
                next.push(q);
            }
        }
        if next.len() > MAX_SET * 4 {
            return Err(SemanticError::TooLarge);
        }
        picks = next;
    }
    let mut out = Vec::new();
    for p in picks {
        push_unique(&mut out, f(&p)?, eps)?;
    }
    Ok(out)
}

fn push_unique(out: &mut Vec<Den>, d: Den, eps: f64) -> Result<(), SemanticError> {
    if let Den::Vector(v) = &d {
        if out
            .iter()
            .any(|e| matches!(e, Den::Vector(w) if w.approx_eq(v, eps)))
        {
            return Ok(());
        }
    }
    out.push(d);
    if out.len() > MAX_SET {
        return Err(SemanticError::TooLarge);
    }
    Ok(())
}

// ------------------------------------------------------------------ evaluator

struct Interp {
    eps: f64,
}

impl Interp {
    fn eval(&self, t: &Term, env: &Env) -> Result<Vec<Den>, SemanticError> {
        let one = |d: Den| Ok(vec![d]);
        match t {
            Term::Var(x) => env.get(x).cloned().map(|d| vec![d]).ok_or_else(|| SemanticError::Unbound(x.clone())),
            Term::Ket0 => one(Den::Vector(DenVector::basis(&[false]))),
            Term::Ket1 => one(Den::Vector(DenVector::basis(&[true]))),
            Term::Lam(x, ann, body) => one(Den::Fun(vec![(
                Complex64::new(1.0, 0.0),
                FunVal::Closure {
                    param: x.clone(),
                    ann: ann.clone(),
                    body: (**body).clone(),
                    env: env.clone(),
                },
            )])),
            Term::Ite => one(Den::Fun(vec![(Complex64::new(1.0, 0.0), FunVal::Ite)])),
            Term::Null(a) => one(self.zero_of(a)?),
            Term::Sum(a, b) => {
                let sets = [self.eval(a, env)?, self.eval(b, env)?];
                product(&sets, self.eps, |p| p[0].plus(p[1]))
            }
            Term::Scale(c, a) => {
                let c = c.as_complex();
                let mut out = Vec::new();
                for d in self.eval(a, env)? {
                    push_unique(&mut out, d.scaled(c), self.eps)?;
                }
                Ok(out)
            }
            Term::Tensor(a, b) => {
                let sets = [self.eval(a, env)?, self.eval(b, env)?];
                product(&sets, self.eps, |p| {
                    Ok(Den::Vector(p[0].as_vector()?.kron(p[1].as_vector()?)))
                })
            }
            Term::Cast { body, .. } => self.eval(body, env),
            Term::Head(a) | Term::Tail(a) => {
                let head = matches!(t, Term::Head(_));
                let mut out = Vec::new();
                for d in self.eval(a, env)? {
                    let bits = d.as_vector()?.as_basis(self.eps).ok_or(SemanticError::NotBasis)?;
                    if bits.len() < 2 {
                        return Err(SemanticError::Shape("head or tail of a single qubit".into()));
                    }
                    let part = if head { &bits[..1] } else { &bits[1..] };
                    push_unique(&mut out, Den::Vector(DenVector::basis(part)), self.eps)?;
                }
                Ok(out)
            }
            Term::Proj(j, a) => {
                let mut out = Vec::new();
                for d in self.eval(a, env)? {
                    for (_, w) in measure(*j, d.as_vector()?, self.eps)? {
                        push_unique(&mut out, Den::Vector(w), self.eps)?;
                    }
                }
                Ok(out)
            }
            Term::App(f, a) => {
                // a saturated conditional only looks at the branch it needs
                if let Term::App(g, u) = &**f {
                    if let Term::App(i, c) = &**g {
                        if **i == Term::Ite {
                            return self.eval_if(c, u, a, env);
                        }
                    }
                }
                let mut out = Vec::new();
                for fd in self.eval(f, env)? {
                    for ad in self.eval(a, env)? {
                        for r in self.apply(&fd, &ad)? {
                            push_unique(&mut out, r, self.eps)?;
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn eval_if(&self, c: &Term, u: &Term, v: &Term, env: &Env) -> Result<Vec<Den>, SemanticError> {
        let mut out = Vec::new();
        for cd in self.eval(c, env)? {
            let cv = cd.vector()?;
            let results = match cv.as_basis(self.eps).as_deref() {
                Some([true]) => self.eval(u, env)?,
                Some([false]) => self.eval(v, env)?,
                _ => {
                    let sets = [self.eval(u, env)?, self.eval(v, env)?];
                    product(&sets, self.eps, |p| choose(&cv, p[0], p[1]))?
                }
            };
            for r in results {
                push_unique(&mut out, r, self.eps)?;
            }
        }
        Ok(out)
    }

    fn apply(&self, f: &Den, a: &Den) -> Result<Vec<Den>, SemanticError> {
        let Den::Fun(combo) = f else {
            return Err(SemanticError::Unsupported("applying a vector".into()));
        };
        let mut sets = Vec::with_capacity(combo.len());
        for (_, g) in combo {
            sets.push(self.apply_one(g, a)?);
        }
        product(&sets, self.eps, |p| {
            let mut acc: Option<Den> = None;
            for ((c, _), d) in combo.iter().zip(p) {
                let term = d.scaled(*c);
                acc = Some(match acc {
                    None => term,
                    Some(x) => x.plus(&term)?,
                });
            }
            acc.ok_or_else(|| SemanticError::Unsupported("empty combination".into()))
        })
    }

    fn apply_one(&self, f: &FunVal, a: &Den) -> Result<Vec<Den>, SemanticError> {
        let fun = |g: FunVal| Ok(vec![Den::Fun(vec![(Complex64::new(1.0, 0.0), g)])]);
        match f {
            FunVal::Ite => fun(FunVal::Ite1(a.as_vector()?.clone())),
            FunVal::Ite1(c) => fun(FunVal::Ite2(c.clone(), Box::new(a.clone()))),
            FunVal::Ite2(c, u) => Ok(vec![choose(c, u, a)?]),
            FunVal::Closure {
                param,
                ann,
                body,
                env,
            } => {
                let bind = |d: Den| {
                    let mut e = env.clone();
                    e.insert(param.clone(), d);
                    e
                };
                if !ann.is_base_qubit_type() {
                    return self.eval(body, &bind(a.clone()));
                }
                let v = a.as_vector()?;
                if Some(v.qubits) != ann.qubit_count() {
                    return Err(SemanticError::Shape(format!(
                        "argument of {} qubits for an abstraction over {ann}",
                        v.qubits
                    )));
                }
                let parts: Vec<(Complex64, usize)> = v
                    .amps
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !small(**c, self.eps))
                    .map(|(k, c)| (*c, k))
                    .collect();
                if parts.is_empty() {
                    // f(0) = 0 . f(e_0), which also fixes the shape
                    let probe = Den::Vector(DenVector::basis(&vec![false; v.qubits]));
                    let mut out = Vec::new();
                    for d in self.eval(body, &bind(probe))? {
                        push_unique(&mut out, d.scaled(Complex64::new(0.0, 0.0)), self.eps)?;
                    }
                    return Ok(out);
                }
                let mut sets = Vec::with_capacity(parts.len());
                for (_, k) in &parts {
                    let e = Den::Vector(DenVector::basis(&bits_of(*k, v.qubits)));
                    sets.push(self.eval(body, &bind(e))?);
                }
                product(&sets, self.eps, |p| {
                    let mut acc = p[0].scaled(parts[0].0);
                    for (d, (c, _)) in p.iter().zip(&parts).skip(1) {
                        acc = acc.plus(&d.scaled(*c))?;
                    }
                    Ok(acc)
                })
            }
        }
    }

    fn zero_of(&self, a: &Type) -> Result<Den, SemanticError> {
        match canonical_type(a).strip_sup() {
            Type::Arrow(dom, cod) => Ok(Den::Fun(vec![(
                Complex64::new(1.0, 0.0),
                FunVal::Closure {
                    param: "_".into(),
                    ann: (**dom).clone(),
                    body: Term::Null((**cod).clone()),
                    env: Env::new(),
                },
            )])),
            other => other
                .qubit_count()
                .map(|n| Den::Vector(DenVector::zero(n)))
                .ok_or_else(|| SemanticError::Unsupported(format!("null of type {a}"))),
        }
    }
}

/// `γ₁·u + γ₀·v` where `c = γ₀e₀ + γ₁e₁`.
fn choose(c: &DenVector, u: &Den, v: &Den) -> Result<Den, SemanticError> {
    if c.qubits != 1 {
        return Err(SemanticError::Shape("condition is not a single qubit".into()));
    }
    u.scaled(c.amps[1]).plus(&v.scaled(c.amps[0]))
}

/// Measures the first `j` qubits of `v`: every outcome with nonzero mass,
/// with its probability and the renormalized post-measurement vector. When
/// every qubit is measured the outcome is the bare basis vector.
pub fn measure(j: usize, v: &DenVector, eps: f64) -> Result<Vec<(f64, DenVector)>, SemanticError> {
    if j == 0 || j > v.qubits {
        return Err(SemanticError::Shape(format!(
            "measuring {j} of {} qubits",
            v.qubits
        )));
    }
    let rest = 1usize << (v.qubits - j);
    let total: f64 = v.amps.iter().filter(|a| !small(**a, eps)).map(|a| a.norm_sqr()).sum();
    if total <= 0.0 {
        return Err(SemanticError::ZeroMeasurement);
    }
    let mut out = Vec::new();
    for (prefix, block) in v.amps.chunks(rest).enumerate() {
        let mass: f64 = block.iter().filter(|a| !small(**a, eps)).map(|a| a.norm_sqr()).sum();
        if mass <= 0.0 {
            continue;
        }
        if rest == 1 {
            out.push((mass / total, DenVector::basis(&bits_of(prefix, v.qubits))));
            continue;
        }
        let norm = mass.sqrt();
        let mut w = DenVector::zero(v.qubits);
        for (k, a) in block.iter().enumerate() {
            if !small(*a, eps) {
                w.amps[prefix * rest + k] = a / norm;
            }
        }
        out.push((mass / total, w));
    }
    Ok(out)
}

// ------------------------------------------------------------------ public API

/// Values of free variables: each maps to a set of vectors.
pub type Valuation = BTreeMap<Name, Vec<DenVector>>;

/// Denotation of `t` under `phi`, taking every choice of elements for the
/// free variables.
pub fn denote(t: &Term, phi: &Valuation, eps: f64) -> Result<Vec<DenVector>, SemanticError> {
    let interp = Interp { eps };
    let mut envs = vec![Env::new()];
    for (x, set) in phi {
        let mut next = Vec::new();
        for e in &envs {
            for v in set {
                let mut e2 = e.clone();
                e2.insert(x.clone(), Den::Vector(v.clone()));
                next.push(e2);
            }
        }
        envs = next;
    }
    let mut out: Vec<Den> = Vec::new();
    for env in &envs {
        for d in interp.eval(t, env)? {
            if matches!(d, Den::Fun(_)) {
                return Err(SemanticError::Unsupported("term denotes a function".into()));
            }
            push_unique(&mut out, d, eps)?;
        }
    }
    out.into_iter().map(Den::vector).collect()
}

pub fn denote_closed(t: &Term, eps: f64) -> Result<Vec<DenVector>, SemanticError> {
    denote(t, &Valuation::new(), eps)
}

/// Whether `v` belongs to the denotation of the qubit type `a`.
pub fn denote_type_membership(a: &Type, v: &DenVector, eps: f64) -> Result<bool, SemanticError> {
    if !a.is_qubit_type() {
        return Err(SemanticError::ArrowType(a.clone()));
    }
    let a = canonical_type(a);
    if a.qubit_count() != Some(v.qubits) {
        return Ok(false);
    }
    if a.is_base_qubit_type() {
        return Ok(v.as_basis(eps).is_some());
    }
    if a.is_sup() {
        // every qubit type spans the whole space of its width
        return Ok(true);
    }
    if v.is_zero(eps) {
        return Ok(true);
    }
    // a mixed tensor: peel off one factor at a time
    let factors = a.tensor_factors();
    let mut rest = v.clone();
    for (k, f) in factors.iter().enumerate() {
        let w = f.qubit_count().expect("qubit type");
        let (u, r) = if k + 1 == factors.len() {
            (rest.clone(), DenVector::real(&[1.0]))
        } else {
            match split_rank_one(&rest, w, eps) {
                Some(p) => p,
                None => return Ok(false),
            }
        };
        if f.is_base_qubit_type() && !proportional_to_basis(&u, eps) {
            return Ok(false);
        }
        rest = r;
    }
    Ok(true)
}

/// Writes `v` as `u ⊗ w` with `u` on the first `width` qubits.
fn split_rank_one(v: &DenVector, width: usize, eps: f64) -> Option<(DenVector, DenVector)> {
    let cols = 1usize << (v.qubits - width);
    let (pivot, _) = v
        .amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
    let (pi, pj) = (pivot / cols, pivot % cols);
    let p = v.amps[pivot];
    let u: Vec<Complex64> = (0..1 << width).map(|i| v.amps[i * cols + pj]).collect();
    let w: Vec<Complex64> = (0..cols).map(|j| v.amps[pi * cols + j] / p).collect();
    for (i, ui) in u.iter().enumerate() {
        for (j, wj) in w.iter().enumerate() {
            if !small(v.amps[i * cols + j] - ui * wj, eps) {
                return None;
            }
        }
    }
    Some((DenVector::new(u)?, DenVector::new(w)?))
}

fn proportional_to_basis(u: &DenVector, eps: f64) -> bool {
    u.amps.iter().filter(|a| !small(**a, eps)).count() == 1
}

/// Every element of the denotation of `t` lies in the denotation of its type.
pub fn check_soundness(t: &Term, eps: f64) -> Result<bool, SemanticError> {
    let a = infer_closed(t)?;
    if !a.is_qubit_type() {
        return Err(SemanticError::ArrowType(a));
    }
    for v in denote_closed(t, eps)? {
        if !denote_type_membership(&a, &v, eps)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The denotation of `t` equals the union of the denotations of its one-step
/// reducts. Normal forms pass trivially.
pub fn check_reduction_commutes(t: &Term, engine: &Engine, eps: f64) -> Result<bool, SemanticError> {
    let before = denote_closed(t, eps)?;
    let outcomes = match engine.step(t) {
        Step::Normal => return Ok(true),
        Step::Stuck(reason) => {
            return Err(RewriteError::Stuck {
                term: t.clone(),
                reason,
            }
            .into())
        }
        Step::Reduced(outs) => outs,
    };
    let mut after = Vec::new();
    for o in outcomes {
        after.extend(denote_closed(&o.term, eps)?);
    }
    Ok(same_set(&before, &after, eps))
}

/// Set equality at tolerance `eps`.
pub fn same_set(a: &[DenVector], b: &[DenVector], eps: f64) -> bool {
    let covers = |x: &[DenVector], y: &[DenVector]| x.iter().all(|v| y.iter().any(|w| v.approx_eq(w, eps)));
    covers(a, b) && covers(b, a)
}
