//! Algorithmic typing.
//!
//! Types are synthesized bottom-up with subsumption folded into the
//! elimination forms. Alongside the type, each call returns how often every
//! free variable was used; wherever the context is split (sums, applications,
//! tensors) a variable of non-base type may only be used on one side, and a
//! binder of non-base type must use its variable exactly once.

use std::collections::BTreeMap;

use crate::syntax::{Name, Term, Type};
use crate::typesys::{
    build_q, canonical_type, cast_side, join, least_q_above, subtype,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TypeErrorKind {
    UnboundVariable,
    LinearReused,
    LinearDropped,
    DomainMismatch,
    NotAFunction,
    NotQType,
    BadCastShape,
    AnnotationMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?} at {path}: {detail}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    /// Slash-separated path from the root, e.g. `app.fun/lam.body`.
    pub path: String,
    pub detail: String,
}

/// Ordered variable-to-qubit-type bindings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypingContext {
    entries: BTreeMap<Name, Type>,
}

impl TypingContext {
    pub fn new() -> TypingContext {
        TypingContext::default()
    }

    /// Binds `x`; only qubit types are admitted.
    pub fn insert(&mut self, x: impl Into<Name>, a: Type) -> Result<(), TypeError> {
        let x = x.into();
        if !a.is_qubit_type() {
            return Err(TypeError {
                kind: TypeErrorKind::AnnotationMismatch,
                path: String::new(),
                detail: format!("context entry {x} : {a} is not a qubit type"),
            });
        }
        self.entries.insert(x, a);
        Ok(())
    }

    pub fn with(mut self, x: impl Into<Name>, a: Type) -> Result<TypingContext, TypeError> {
        self.insert(x, a)?;
        Ok(self)
    }

    pub fn get(&self, x: &str) -> Option<&Type> {
        self.entries.get(x)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Type)> {
        self.entries.iter()
    }
}

type Usage = BTreeMap<Name, usize>;

struct Checker<'a> {
    /// Innermost binding last.
    scope: Vec<(&'a str, &'a Type)>,
    path: Vec<&'static str>,
}

impl<'a> Checker<'a> {
    fn err(&self, kind: TypeErrorKind, detail: impl Into<String>) -> TypeError {
        TypeError {
            kind,
            path: self.path.join("/"),
            detail: detail.into(),
        }
    }

    fn lookup(&self, x: &str) -> Option<&'a Type> {
        self.scope.iter().rev().find(|(y, _)| *y == x).map(|(_, a)| *a)
    }

    fn at<T>(&mut self, step: &'static str, f: impl FnOnce(&mut Self) -> T) -> T {
        self.path.push(step);
        let r = f(self);
        self.path.pop();
        r
    }

    /// Merges two usage maps across a context split.
    fn split(&self, mut a: Usage, b: Usage) -> Result<Usage, TypeError> {
        for (x, n) in b {
            if a.contains_key(&x) {
                let ty = self.lookup(&x).expect("used variable is in scope");
                if !ty.is_base_qubit_type() {
                    return Err(self.err(
                        TypeErrorKind::LinearReused,
                        format!("{x} : {ty} is used on both sides"),
                    ));
                }
            }
            *a.entry(x).or_insert(0) += n;
        }
        Ok(a)
    }

    fn synth(&mut self, t: &'a Term) -> Result<(Type, Usage), TypeError> {
        use TypeErrorKind::*;
        match t {
            Term::Var(x) => match self.lookup(x) {
                Some(a) => Ok((canonical_type(a), Usage::from([(x.clone(), 1)]))),
                None => Err(self.err(UnboundVariable, format!("{x} is not bound"))),
            },
            Term::Ket0 | Term::Ket1 => Ok((Type::Qubit, Usage::new())),
            Term::Ite => {
                let b = || Type::Qubit;
                Ok((Type::arrow(b(), Type::arrow(b(), Type::arrow(b(), b()))), Usage::new()))
            }
            Term::Null(a) => Ok((canonical_type(&Type::sup(a.clone())), Usage::new())),
            Term::Lam(x, ann, body) => {
                if !ann.is_qubit_type() {
                    return Err(self.err(
                        AnnotationMismatch,
                        format!("annotation {ann} of {x} is not a qubit type"),
                    ));
                }
                self.scope.push((x.as_str(), ann));
                let r = self.at("lam.body", |c| c.synth(body));
                self.scope.pop();
                let (a, mut usage) = r?;
                let used = usage.remove(x.as_str()).unwrap_or(0);
                if used == 0 && !ann.is_base_qubit_type() {
                    return Err(self.err(
                        LinearDropped,
                        format!("{x} : {ann} is never used"),
                    ));
                }
                Ok((canonical_type(&Type::arrow(ann.clone(), a)), usage))
            }
            Term::App(f, arg) => {
                let (ft, fu) = self.at("app.fun", |c| c.synth(f))?;
                let (at, au) = self.at("app.arg", |c| c.synth(arg))?;
                let usage = self.split(fu, au)?;
                Ok((self.apply(&ft, &at)?, usage))
            }
            Term::Sum(a, b) => {
                let (ta, ua) = self.at("sum.left", |c| c.synth(a))?;
                let (tb, ub) = self.at("sum.right", |c| c.synth(b))?;
                let usage = self.split(ua, ub)?;
                match join(&ta, &tb) {
                    Some(j) => Ok((canonical_type(&Type::sup(j)), usage)),
                    None => Err(self.err(
                        AnnotationMismatch,
                        format!("summands of types {ta} and {tb} have no common type"),
                    )),
                }
            }
            Term::Scale(_, body) => {
                let (a, u) = self.at("scale.body", |c| c.synth(body))?;
                Ok((canonical_type(&Type::sup(a)), u))
            }
            Term::Tensor(a, b) => {
                let (ta, ua) = self.at("tensor.left", |c| c.synth(a))?;
                let (tb, ub) = self.at("tensor.right", |c| c.synth(b))?;
                let usage = self.split(ua, ub)?;
                Ok((canonical_type(&Type::tensor(ta, tb)), usage))
            }
            Term::Proj(j, body) => {
                let (a, u) = self.at("proj.body", |c| c.synth(body))?;
                let spec = least_q_above(&a).ok_or_else(|| {
                    self.err(NotQType, format!("{a} is not below any Q type"))
                })?;
                if *j == 0 || *j > spec.n {
                    return Err(self.err(
                        NotQType,
                        format!("cannot measure {j} qubits of {a}"),
                    ));
                }
                Ok((canonical_type(&build_q(&spec.measured(*j))), u))
            }
            Term::Head(body) | Term::Tail(body) => {
                let is_head = matches!(t, Term::Head(_));
                let (a, u) = self.at("list.body", |c| c.synth(body))?;
                let factors = a.tensor_factors();
                let ok = factors.len() >= 2
                    && *factors[0] == Type::Qubit
                    && a.is_base_qubit_type();
                if !ok {
                    return Err(self.err(
                        DomainMismatch,
                        format!("{} expects B * <base type>, found {a}", if is_head { "head" } else { "tail" }),
                    ));
                }
                let r = if is_head {
                    Type::Qubit
                } else {
                    Type::tensor_of(factors[1..].iter().map(|x| (*x).clone()).collect())
                };
                Ok((r, u))
            }
            Term::Cast {
                source,
                left,
                right,
                body,
            } => {
                if cast_side(source, left, right).is_none() {
                    return Err(self.err(
                        BadCastShape,
                        format!(
                            "cannot cast S({source}) into S({})",
                            Type::tensor(left.clone(), right.clone())
                        ),
                    ));
                }
                let u = self.at("cast.body", |c| c.cast_body(source, body))?;
                Ok((
                    canonical_type(&Type::sup(Type::tensor(left.clone(), right.clone()))),
                    u,
                ))
            }
        }
    }

    /// The body of a cast must sit below `S(source)`, or be a sum or scaling
    /// whose parts do.
    fn cast_body(&mut self, source: &Type, body: &'a Term) -> Result<Usage, TypeError> {
        let target = Type::sup(source.clone());
        let direct = self.synth(body);
        if let Ok((a, u)) = &direct {
            if subtype(a, &target) {
                return Ok(u.clone());
            }
        }
        match body {
            Term::Sum(a, b) => {
                let ua = self.at("sum.left", |c| c.cast_body(source, a))?;
                let ub = self.at("sum.right", |c| c.cast_body(source, b))?;
                self.split(ua, ub)
            }
            Term::Scale(_, a) => self.at("scale.body", |c| c.cast_body(source, a)),
            _ => match direct {
                Err(e) => Err(e),
                Ok((a, _)) => Err(self.err(
                    TypeErrorKind::BadCastShape,
                    format!("cast body has type {a}, not below {}", canonical_type(&target)),
                )),
            },
        }
    }

    /// Result type of applying something of type `f` to something of type `a`.
    fn apply(&self, f: &Type, a: &Type) -> Result<Type, TypeError> {
        let (dom, cod) = match f {
            Type::Arrow(d, c) => (d, c),
            Type::Sup(inner) => match &**inner {
                Type::Arrow(d, c) => (d, c),
                _ => return Err(self.not_function(f)),
            },
            _ => return Err(self.not_function(f)),
        };
        if matches!(f, Type::Arrow(..)) && subtype(a, dom) {
            return Ok((**cod).clone());
        }
        if subtype(a, &Type::sup((**dom).clone())) {
            return Ok(canonical_type(&Type::sup((**cod).clone())));
        }
        Err(self.err(
            TypeErrorKind::DomainMismatch,
            format!("argument of type {a} does not fit function of type {f}"),
        ))
    }

    fn not_function(&self, f: &Type) -> TypeError {
        self.err(TypeErrorKind::NotAFunction, format!("{f} is not a function type"))
    }
}

/// Synthesizes the least type of `t` under `ctx`. Every non-base entry of
/// `ctx` must be used exactly once.
pub fn infer(ctx: &TypingContext, t: &Term) -> Result<Type, TypeError> {
    let mut checker = Checker {
        scope: ctx.iter().map(|(x, a)| (x.as_str(), a)).collect(),
        path: Vec::new(),
    };
    let (a, usage) = checker.synth(t)?;
    for (x, ty) in ctx.iter() {
        if !ty.is_base_qubit_type() && !usage.contains_key(x) {
            return Err(TypeError {
                kind: TypeErrorKind::LinearDropped,
                path: String::new(),
                detail: format!("{x} : {ty} is never used"),
            });
        }
    }
    Ok(a)
}

/// [`infer`] in the empty context.
pub fn infer_closed(t: &Term) -> Result<Type, TypeError> {
    infer(&TypingContext::new(), t)
}

/// Does `t` have type `a` (through subsumption)?
pub fn check(ctx: &TypingContext, t: &Term, a: &Type) -> Result<bool, TypeError> {
    Ok(subtype(&infer(ctx, t)?, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{parse, parse_term, parse_type};

    const H: &str = "let H = \\x:B. (1/sqrt(2)).(|0> + (if x then (-|1>) else |1>));\n";

    fn ty(s: &str) -> Type {
        parse_type(s).unwrap()
    }

    fn infer_src(src: &str) -> Result<Type, TypeError> {
        infer_closed(&parse(src).unwrap().main)
    }

    #[test]
    fn hadamard() {
        assert_eq!(infer_src(&format!("{H}H")).unwrap(), ty("B => S(B)"));
    }

    #[test]
    fn kets_and_subsumption() {
        let ctx = TypingContext::new();
        assert!(check(&ctx, &Term::Ket0, &ty("S(B)")).unwrap());
        let t = parse_term("|0> * (|0> + |1>)").unwrap();
        assert_eq!(infer_closed(&t).unwrap(), ty("B * S(B)"));
        assert!(!check(&ctx, &t, &ty("S(B * B)")).unwrap());
        let cast = parse_term("cast{B*S(B)}{B*B} (|0> * (|0> + |1>))").unwrap();
        assert!(check(&ctx, &cast, &ty("S(B * B)")).unwrap());
    }

    #[test]
    fn sum_of_functions() {
        let src = "let f = \\x:B. x;\nlet g = \\x:B. (|0> + x);\n(f + g) |0>";
        assert!(check(&TypingContext::new(), &parse(src).unwrap().main, &ty("S(B)")).unwrap());
    }

    #[test]
    fn arrow_context_entries_rejected() {
        let e = TypingContext::new()
            .with("x", ty("S(B)"))
            .unwrap()
            .with("t", ty("B => B"))
            .unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::AnnotationMismatch);
    }

    #[test]
    fn linear_variables() {
        let ctx = TypingContext::new().with("x", ty("S(B)")).unwrap();
        let e = infer(&ctx, &parse_term("x * x").unwrap()).unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::LinearReused);
        let e = infer(&ctx, &Term::Ket0).unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::LinearDropped);
        let e = infer_closed(&parse_term("\\x:S(B). x * x").unwrap()).unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::LinearReused);
        let e = infer_closed(&parse_term("\\x:S(B). |0>").unwrap()).unwrap_err();
        assert_eq!(e.kind, TypeErrorKind::LinearDropped);
        // base variables may be copied or dropped
        assert!(infer_closed(&parse_term("\\x:B. x * x").unwrap()).is_ok());
        assert!(infer_closed(&parse_term("\\x:B. |0>").unwrap()).is_ok());
    }

    #[test]
    fn other_errors() {
        use TypeErrorKind::*;
        let kind = |s: &str| infer_closed(&parse_term(s).unwrap()).unwrap_err().kind;
        assert_eq!(kind("y"), UnboundVariable);
        assert_eq!(kind("|0> |1>"), NotAFunction);
        assert_eq!(kind("(\\x:B * B. x) |0>"), DomainMismatch);
        assert_eq!(kind("pi[1] (\\x:B. x)"), NotQType);
        assert_eq!(kind("pi[3] (|0> * |1>)"), NotQType);
        assert_eq!(kind("cast{B*B}{B*B} (|0> * |1>)"), BadCastShape);
        assert_eq!(kind("cast{S(B)*B}{B*B} (|0> * |1> * |1>)"), BadCastShape);
        assert_eq!(kind("head |0>"), DomainMismatch);
    }

    #[test]
    fn projection_types() {
        let t = parse_term("pi[1] ((1/sqrt(2)).|0> + (1/sqrt(2)).|1>)").unwrap();
        assert_eq!(infer_closed(&t).unwrap(), Type::Qubit);
        let t = parse_term("pi[2] (2.|0>*|1>*|1> + |0>*|1>*|0> + 3.|1>*|1>*|1>)").unwrap();
        assert_eq!(infer_closed(&t).unwrap(), ty("B * B * S(B)"));
    }

    #[test]
    fn application_through_superposed_function() {
        // ite x : S(B => B) once applied to a superposed branch
        let t = parse_term("\\x:B. \\y:B. if x then (-|1>) else y").unwrap();
        assert_eq!(infer_closed(&t).unwrap(), ty("B => B => S(B)"));
    }
}
