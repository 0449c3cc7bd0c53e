//! Abstract syntax of types and terms.
//!
//! Sums and tensors are kept binary here, exactly as written. Flattening of
//! `+` into multisets happens in [`crate::rewrite`]; flattening of `⊗` spines
//! is provided by [`Term::tensor_factors`] and [`Type::tensor_factors`].

use std::collections::BTreeSet;
use std::fmt;

use crate::scalar::Scalar;

pub type Name = String;

/// Types: `B`, `S(A)`, `A * B` and first-order arrows `Q => A`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Qubit,
    Sup(Box<Type>),
    Tensor(Box<Type>, Box<Type>),
    /// Domain is always a qubit type.
    Arrow(Box<Type>, Box<Type>),
}

impl Type {
    pub fn sup(inner: Type) -> Type {
        Type::Sup(Box::new(inner))
    }

    pub fn tensor(left: Type, right: Type) -> Type {
        Type::Tensor(Box::new(left), Box::new(right))
    }

    pub fn arrow(domain: Type, codomain: Type) -> Type {
        Type::Arrow(Box::new(domain), Box::new(codomain))
    }

    /// Right-nested tensor of the given factors. Panics on an empty list.
    pub fn tensor_of(mut factors: Vec<Type>) -> Type {
        let mut acc = factors.pop().expect("empty tensor");
        while let Some(f) = factors.pop() {
            acc = Type::tensor(f, acc);
        }
        acc
    }

    /// `n` copies of `B` tensored together.
    pub fn qubits(n: usize) -> Type {
        Type::tensor_of(vec![Type::Qubit; n])
    }

    /// The factors of the `⊗` spine, whatever its association.
    pub fn tensor_factors(&self) -> Vec<&Type> {
        fn go<'a>(t: &'a Type, out: &mut Vec<&'a Type>) {
            match t {
                Type::Tensor(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                _ => out.push(t),
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    /// Grammar level Ψ: built from `B`, `S(·)` and `⊗`, no arrows.
    pub fn is_qubit_type(&self) -> bool {
        match self {
            Type::Qubit => true,
            Type::Sup(a) => a.is_qubit_type(),
            Type::Tensor(a, b) => a.is_qubit_type() && b.is_qubit_type(),
            Type::Arrow(..) => false,
        }
    }

    /// Grammar level B: `⊗`-trees of `B`.
    pub fn is_base_qubit_type(&self) -> bool {
        match self {
            Type::Qubit => true,
            Type::Tensor(a, b) => a.is_base_qubit_type() && b.is_base_qubit_type(),
            _ => false,
        }
    }

    /// Number of `B` leaves of a qubit type, `None` for types containing arrows.
    pub fn qubit_count(&self) -> Option<usize> {
        match self {
            Type::Qubit => Some(1),
            Type::Sup(a) => a.qubit_count(),
            Type::Tensor(a, b) => Some(a.qubit_count()? + b.qubit_count()?),
            Type::Arrow(..) => None,
        }
    }

    pub fn is_sup(&self) -> bool {
        matches!(self, Type::Sup(_))
    }

    /// Removes every outer `S(·)`.
    pub fn strip_sup(&self) -> &Type {
        match self {
            Type::Sup(a) => a.strip_sup(),
            _ => self,
        }
    }
}

impl fmt::Debug for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::surface::print_type(self))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::surface::print_type(self))
    }
}

/// Terms of the calculus.
#[derive(Clone, PartialEq)]
pub enum Term {
    Var(Name),
    Lam(Name, Type, Box<Term>),
    App(Box<Term>, Box<Term>),
    Ket0,
    Ket1,
    /// The `ite` constant; `if t then u else v` is `((ite t) u) v`.
    Ite,
    Sum(Box<Term>, Box<Term>),
    Scale(Scalar, Box<Term>),
    /// `Null(A)` is the null vector of `S(A)`.
    Null(Type),
    Tensor(Box<Term>, Box<Term>),
    /// Measurement of the first `j ≥ 1` qubits.
    Proj(usize, Box<Term>),
    Head(Box<Term>),
    Tail(Box<Term>),
    /// Cast from `S(source)` to `S(left ⊗ right)`.
    Cast {
        source: Type,
        left: Type,
        right: Type,
        body: Box<Term>,
    },
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::surface::print(self))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::surface::print(self))
    }
}

impl Term {
    pub fn var(name: impl Into<Name>) -> Term {
        Term::Var(name.into())
    }

    pub fn lam(name: impl Into<Name>, ann: Type, body: Term) -> Term {
        Term::Lam(name.into(), ann, Box::new(body))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Box::new(f), Box::new(a))
    }

    /// `f a1 a2 ...`
    pub fn apps(f: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(f, Term::app)
    }

    pub fn ite(c: Term, then: Term, els: Term) -> Term {
        Term::apps(Term::Ite, [c, then, els])
    }

    pub fn sum(a: Term, b: Term) -> Term {
        Term::Sum(Box::new(a), Box::new(b))
    }

    pub fn scale(c: Scalar, t: Term) -> Term {
        Term::Scale(c, Box::new(t))
    }

    pub fn tensor(a: Term, b: Term) -> Term {
        Term::Tensor(Box::new(a), Box::new(b))
    }

    pub fn proj(j: usize, t: Term) -> Term {
        assert!(j >= 1, "projection index must be positive");
        Term::Proj(j, Box::new(t))
    }

    pub fn head(t: Term) -> Term {
        Term::Head(Box::new(t))
    }

    pub fn tail(t: Term) -> Term {
        Term::Tail(Box::new(t))
    }

    pub fn cast(source: Type, left: Type, right: Type, body: Term) -> Term {
        Term::Cast {
            source,
            left,
            right,
            body: Box::new(body),
        }
    }

    pub fn ket(bit: bool) -> Term {
        if bit {
            Term::Ket1
        } else {
            Term::Ket0
        }
    }

    /// `|b1> * ... * |bn>` for the given bits, right-nested.
    pub fn kets(bits: &[bool]) -> Term {
        Term::tensor_of(bits.iter().map(|&b| Term::ket(b)).collect())
    }

    /// Right-nested tensor of the given factors. Panics on an empty list.
    pub fn tensor_of(mut factors: Vec<Term>) -> Term {
        let mut acc = factors.pop().expect("empty tensor");
        while let Some(f) = factors.pop() {
            acc = Term::tensor(f, acc);
        }
        acc
    }

    /// Left-nested sum of the given summands. Panics on an empty list.
    pub fn sum_of(summands: Vec<Term>) -> Term {
        let mut it = summands.into_iter();
        let first = it.next().expect("empty sum");
        it.fold(first, Term::sum)
    }

    /// The factors of the `⊗` spine, whatever its association.
    pub fn tensor_factors(&self) -> Vec<&Term> {
        fn go<'a>(t: &'a Term, out: &mut Vec<&'a Term>) {
            match t {
                Term::Tensor(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                _ => out.push(t),
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    pub fn as_ket(&self) -> Option<bool> {
        match self {
            Term::Ket0 => Some(false),
            Term::Ket1 => Some(true),
            _ => None,
        }
    }

    /// The bit string of a tensor of kets, `None` if any factor is not a ket.
    pub fn as_ket_tensor(&self) -> Option<Vec<bool>> {
        self.tensor_factors().into_iter().map(Term::as_ket).collect()
    }

    /// Base terms: variables, abstractions, kets and tensors of base terms.
    pub fn is_base_term(&self) -> bool {
        match self {
            Term::Var(_) | Term::Lam(..) | Term::Ket0 | Term::Ket1 => true,
            Term::Tensor(a, b) => a.is_base_term() && b.is_base_term(),
            _ => false,
        }
    }

    /// Values: base terms, sums, scalings and tensors of values, null vectors.
    pub fn is_value(&self) -> bool {
        match self {
            Term::Var(_) | Term::Lam(..) | Term::Ket0 | Term::Ket1 | Term::Null(_) => true,
            Term::Sum(a, b) | Term::Tensor(a, b) => a.is_value() && b.is_value(),
            Term::Scale(_, a) => a.is_value(),
            _ => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    fn collect_free<'a>(&'a self, bound: &mut Vec<&'a str>, out: &mut BTreeSet<Name>) {
        match self {
            Term::Var(x) => {
                if !bound.contains(&x.as_str()) {
                    out.insert(x.clone());
                }
            }
            Term::Lam(x, _, body) => {
                bound.push(x);
                body.collect_free(bound, out);
                bound.pop();
            }
            Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => {}
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Term::Scale(_, a)
            | Term::Proj(_, a)
            | Term::Head(a)
            | Term::Tail(a)
            | Term::Cast { body: a, .. } => a.collect_free(bound, out),
        }
    }

    /// Number of free occurrences of `x`.
    pub fn occurrences(&self, x: &str) -> usize {
        match self {
            Term::Var(y) => usize::from(y == x),
            Term::Lam(y, _, body) => {
                if y == x {
                    0
                } else {
                    body.occurrences(x)
                }
            }
            Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => 0,
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => {
                a.occurrences(x) + b.occurrences(x)
            }
            Term::Scale(_, a)
            | Term::Proj(_, a)
            | Term::Head(a)
            | Term::Tail(a)
            | Term::Cast { body: a, .. } => a.occurrences(x),
        }
    }

    /// Capture-avoiding substitution `(u/x)self`.
    pub fn substitute(&self, x: &str, u: &Term) -> Term {
        let fv_u = u.free_vars();
        self.subst_with(x, u, &fv_u)
    }

    fn subst_with(&self, x: &str, u: &Term, fv_u: &BTreeSet<Name>) -> Term {
        let go = |t: &Term| Box::new(t.subst_with(x, u, fv_u));
        match self {
            Term::Var(y) => {
                if y == x {
                    u.clone()
                } else {
                    self.clone()
                }
            }
            Term::Lam(y, ann, body) => {
                if y == x || body.occurrences(x) == 0 {
                    self.clone()
                } else if fv_u.contains(y) {
                    let mut avoid = fv_u.clone();
                    avoid.extend(body.free_vars());
                    avoid.insert(x.to_string());
                    let fresh = fresh_name(y, &avoid);
                    let renamed = body.substitute(y, &Term::Var(fresh.clone()));
                    Term::Lam(fresh, ann.clone(), Box::new(renamed.subst_with(x, u, fv_u)))
                } else {
                    Term::Lam(y.clone(), ann.clone(), go(body))
                }
            }
            Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => self.clone(),
            Term::App(a, b) => Term::App(go(a), go(b)),
            Term::Sum(a, b) => Term::Sum(go(a), go(b)),
            Term::Tensor(a, b) => Term::Tensor(go(a), go(b)),
            Term::Scale(c, a) => Term::Scale(*c, go(a)),
            Term::Proj(j, a) => Term::Proj(*j, go(a)),
            Term::Head(a) => Term::Head(go(a)),
            Term::Tail(a) => Term::Tail(go(a)),
            Term::Cast {
                source,
                left,
                right,
                body,
            } => Term::Cast {
                source: source.clone(),
                left: left.clone(),
                right: right.clone(),
                body: go(body),
            },
        }
    }

    /// Structural equality up to renaming of bound variables, comparing
    /// scalars with tolerance `eps`. Sums are compared as written (no AC).
    pub fn alpha_eq(&self, other: &Term, eps: f64) -> bool {
        alpha_eq_in(self, other, eps, &mut Vec::new())
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => 1,
            Term::Lam(_, _, a)
            | Term::Scale(_, a)
            | Term::Proj(_, a)
            | Term::Head(a)
            | Term::Tail(a)
            | Term::Cast { body: a, .. } => 1 + a.size(),
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => 1 + a.size() + b.size(),
        }
    }

    /// True if a `Proj` node occurs anywhere (including under binders).
    pub fn contains_proj(&self) -> bool {
        match self {
            Term::Proj(..) => true,
            Term::Var(_) | Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => false,
            Term::Lam(_, _, a)
            | Term::Scale(_, a)
            | Term::Head(a)
            | Term::Tail(a)
            | Term::Cast { body: a, .. } => a.contains_proj(),
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => {
                a.contains_proj() || b.contains_proj()
            }
        }
    }

    /// True if a `Cast` node occurs outside of abstractions.
    pub fn contains_cast(&self) -> bool {
        match self {
            Term::Cast { .. } => true,
            Term::Var(_) | Term::Lam(..) | Term::Ket0 | Term::Ket1 | Term::Ite | Term::Null(_) => {
                false
            }
            Term::Scale(_, a) | Term::Proj(_, a) | Term::Head(a) | Term::Tail(a) => {
                a.contains_cast()
            }
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => {
                a.contains_cast() || b.contains_cast()
            }
        }
    }
}

fn alpha_eq_in<'a>(a: &'a Term, b: &'a Term, eps: f64, env: &mut Vec<(&'a str, &'a str)>) -> bool {
    match (a, b) {
        (Term::Var(x), Term::Var(y)) => {
            for (l, r) in env.iter().rev() {
                if *l == x.as_str() || *r == y.as_str() {
                    return *l == x.as_str() && *r == y.as_str();
                }
            }
            x == y
        }
        (Term::Lam(x, ta, ba), Term::Lam(y, tb, bb)) => {
            if ta != tb {
                return false;
            }
            env.push((x, y));
            let r = alpha_eq_in(ba, bb, eps, env);
            env.pop();
            r
        }
        (Term::Ket0, Term::Ket0) | (Term::Ket1, Term::Ket1) | (Term::Ite, Term::Ite) => true,
        (Term::Null(x), Term::Null(y)) => x == y,
        (Term::App(a1, a2), Term::App(b1, b2))
        | (Term::Sum(a1, a2), Term::Sum(b1, b2))
        | (Term::Tensor(a1, a2), Term::Tensor(b1, b2)) => {
            alpha_eq_in(a1, b1, eps, env) && alpha_eq_in(a2, b2, eps, env)
        }
        (Term::Scale(c, x), Term::Scale(d, y)) => c.approx_eq(*d, eps) && alpha_eq_in(x, y, eps, env),
        (Term::Proj(i, x), Term::Proj(j, y)) => i == j && alpha_eq_in(x, y, eps, env),
        (Term::Head(x), Term::Head(y)) | (Term::Tail(x), Term::Tail(y)) => {
            alpha_eq_in(x, y, eps, env)
        }
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
        ) => s1 == s2 && l1 == l2 && r1 == r2 && alpha_eq_in(x, y, eps, env),
        _ => false,
    }
}

/// A variant of `base` not in `avoid`.
pub fn fresh_name(base: &str, avoid: &BTreeSet<Name>) -> Name {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
    (1..)
        .map(|i| format!("{stem}{i}"))
        .find(|n| !avoid.contains(n))
        .expect("infinite supply of names")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Term {
        Term::var("x")
    }

    #[test]
    fn base_terms() {
        assert!(Term::Ket0.is_base_term());
        assert!(!Term::sum(Term::Ket0, Term::Ket1).is_base_term());
        assert!(Term::tensor(Term::Ket0, Term::Ket1).is_base_term());
    }

    #[test]
    fn values() {
        let h = Scalar::real(1.0 / 2f64.sqrt());
        let plus = Term::sum(Term::scale(h, Term::Ket0), Term::scale(h, Term::Ket1));
        assert!(plus.is_value());
        assert!(!Term::proj(1, Term::kets(&[false, true])).is_value());
        assert!(Term::Null(Type::Qubit).is_value());
    }

    #[test]
    fn free_variables() {
        assert!(Term::lam("x", Type::Qubit, x()).free_vars().is_empty());
        let xy = Term::tensor(x(), Term::var("y"));
        assert_eq!(
            xy.free_vars().into_iter().collect::<Vec<_>>(),
            vec!["x".to_string(), "y".to_string()]
        );
        let fxx = Term::lam("x", Type::Qubit, Term::apps(Term::var("f"), [x(), x()]));
        assert_eq!(fxx.free_vars().into_iter().collect::<Vec<_>>(), vec!["f".to_string()]);
    }

    #[test]
    fn substitution_examples() {
        let t = Term::tensor(x(), x()).substitute("x", &Term::Ket0);
        assert_eq!(t, Term::tensor(Term::Ket0, Term::Ket0));

        let t = Term::lam("y", Type::Qubit, x()).substitute("x", &Term::Ket1);
        assert_eq!(t, Term::lam("y", Type::Qubit, Term::Ket1));

        let minus1 = Term::scale(Scalar::real(-1.0), Term::Ket1);
        let t = Term::ite(x(), minus1.clone(), Term::Ket1).substitute("x", &Term::Ket0);
        assert_eq!(t, Term::ite(Term::Ket0, minus1, Term::Ket1));
    }

    #[test]
    fn substitution_respects_shadowing() {
        let t = Term::lam("x", Type::Qubit, x());
        assert_eq!(t.substitute("x", &Term::Ket0), t);
    }

    #[test]
    fn substitution_avoids_capture() {
        // (\y:B. x * y)[y/x] must not capture y
        let t = Term::lam("y", Type::Qubit, Term::tensor(x(), Term::var("y")));
        let r = t.substitute("x", &Term::var("y"));
        match &r {
            Term::Lam(z, _, body) => {
                assert_ne!(z, "y");
                assert_eq!(**body, Term::tensor(Term::var("y"), Term::var(z.clone())));
            }
            _ => panic!("expected abstraction, got {r:?}"),
        }
    }

    #[test]
    fn alpha_equivalence() {
        let a = Term::lam("x", Type::Qubit, x());
        let b = Term::lam("z", Type::Qubit, Term::var("z"));
        assert!(a.alpha_eq(&b, 0.0));
        let c = Term::lam("z", Type::Qubit, Term::var("x"));
        assert!(!a.alpha_eq(&c, 0.0));
    }

    #[test]
    fn type_levels() {
        let b = Type::Qubit;
        let sb = Type::sup(b.clone());
        assert!(Type::tensor(b.clone(), b.clone()).is_base_qubit_type());
        assert!(!Type::tensor(b.clone(), sb.clone()).is_base_qubit_type());
        assert!(Type::tensor(b.clone(), sb.clone()).is_qubit_type());
        assert!(!Type::arrow(b.clone(), sb).is_qubit_type());
        assert_eq!(Type::qubits(3).qubit_count(), Some(3));
    }
}
