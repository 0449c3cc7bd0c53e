//! Randomized invariants over types, vectors and generated terms.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlam::props::{check_term, GenBudget, PropConfig, TermGenerator};
use qlam::rewrite::{ac_eq, Engine};
use qlam::semantics::{denote_closed, denote_type_membership, same_set, DenVector};
use qlam::surface::{parse_term, parse_type, print, print_type};
use qlam::syntax::{Term, Type};
use qlam::typecheck::infer_closed;
use qlam::typesys::{build_q, canonical_type, recognize_q, subtype, type_equiv, QSpec};

const EPS: f64 = 1e-9;

fn qubit_type() -> impl Strategy<Value = Type> {
    Just(Type::Qubit).prop_recursive(4, 8, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Type::sup),
            (inner.clone(), inner).prop_map(|(a, b)| Type::tensor(a, b)),
        ]
    })
}

fn any_type() -> impl Strategy<Value = Type> {
    qubit_type().prop_recursive(2, 6, 2, |inner| {
        (qubit_type(), inner).prop_map(|(d, c)| Type::arrow(d, c))
    })
}

fn small_qubit_type() -> impl Strategy<Value = Type> {
    qubit_type().prop_filter("at most 4 qubits", |a| a.qubit_count().is_some_and(|n| n <= 4))
}

/// A supertype of `a`, obtained by wrapping random positions in `S`.
fn weaken(a: &Type, rng: &mut ChaCha8Rng) -> Type {
    let inner = match a {
        Type::Qubit => Type::Qubit,
        Type::Sup(x) => Type::sup(weaken(x, rng)),
        Type::Tensor(l, r) => Type::tensor(weaken(l, rng), weaken(r, rng)),
        Type::Arrow(d, c) => Type::arrow((**d).clone(), weaken(c, rng)),
    };
    if !matches!(a, Type::Arrow(..)) && rng.gen_bool(0.3) {
        Type::sup(inner)
    } else {
        inner
    }
}

/// A random element of the denotation of a qubit type.
fn sample_vector(a: &Type, rng: &mut ChaCha8Rng) -> DenVector {
    match a {
        Type::Qubit => DenVector::basis(&[rng.gen_bool(0.5)]),
        Type::Tensor(l, r) => sample_vector(l, rng).kron(&sample_vector(r, rng)),
        Type::Sup(x) => {
            let n = x.qubit_count().unwrap();
            let mut acc = vec![Complex64::new(0.0, 0.0); 1 << n];
            for _ in 0..rng.gen_range(1..=3) {
                let c = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                for (s, v) in acc.iter_mut().zip(sample_vector(x, rng).amplitudes()) {
                    *s += c * v;
                }
            }
            DenVector::new(acc).unwrap()
        }
        Type::Arrow(..) => unreachable!("not a qubit type"),
    }
}

fn subterms(t: &Term) -> Vec<&Term> {
    let mut out = vec![t];
    let mut i = 0;
    while i < out.len() {
        match out[i] {
            Term::Lam(_, _, b)
            | Term::Scale(_, b)
            | Term::Proj(_, b)
            | Term::Head(b)
            | Term::Tail(b)
            | Term::Cast { body: b, .. } => out.push(b),
            Term::App(a, b) | Term::Sum(a, b) | Term::Tensor(a, b) => {
                out.push(a);
                out.push(b);
            }
            _ => {}
        }
        i += 1;
    }
    out
}

/// Swaps the operands of every sum.
fn mirror_sums(t: &Term) -> Term {
    let m = |b: &Term| Box::new(mirror_sums(b));
    match t {
        Term::Sum(a, b) => Term::Sum(m(b), m(a)),
        Term::Lam(x, ty, b) => Term::Lam(x.clone(), ty.clone(), m(b)),
        Term::App(a, b) => Term::App(m(a), m(b)),
        Term::Tensor(a, b) => Term::Tensor(m(a), m(b)),
        Term::Scale(c, b) => Term::Scale(*c, m(b)),
        Term::Proj(j, b) => Term::Proj(*j, m(b)),
        Term::Head(b) => Term::Head(m(b)),
        Term::Tail(b) => Term::Tail(m(b)),
        Term::Cast {
            source,
            left,
            right,
            body,
        } => Term::Cast {
            source: source.clone(),
            left: left.clone(),
            right: right.clone(),
            body: m(body),
        },
        other => other.clone(),
    }
}

fn generated(seed: u64) -> Option<Term> {
    TermGenerator::new(seed, GenBudget::new(4, 3, 1), Engine::default(), 2000).next_term()
}

proptest! {
    #[test]
    fn subtype_is_reflexive_and_canonical_is_idempotent(a in any_type()) {
        prop_assert!(subtype(&a, &a));
        let c = canonical_type(&a);
        prop_assert_eq!(canonical_type(&c), c.clone());
        prop_assert!(subtype(&a, &c) && subtype(&c, &a));
    }

    #[test]
    fn weakening_is_a_subtype_and_chains(a in any_type(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = weaken(&a, &mut rng);
        let c = weaken(&b, &mut rng);
        prop_assert!(subtype(&a, &b), "{} ⪯ {}", a, b);
        prop_assert!(subtype(&b, &c));
        prop_assert!(subtype(&a, &c));
        if !matches!(a, Type::Arrow(..)) {
            prop_assert!(subtype(&a, &Type::sup(a.clone())));
        }
    }

    #[test]
    fn subtype_is_transitive(a in any_type(), b in any_type(), c in any_type()) {
        if subtype(&a, &b) && subtype(&b, &c) {
            prop_assert!(subtype(&a, &c));
        }
    }

    #[test]
    fn types_print_and_parse_back(a in any_type()) {
        prop_assert_eq!(parse_type(&print_type(&a)).unwrap(), a);
    }

    #[test]
    fn subtypes_denote_subsets(a in small_qubit_type(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = weaken(&a, &mut rng);
        let v = sample_vector(&a, &mut rng);
        prop_assert!(denote_type_membership(&a, &v, EPS).unwrap(), "{} ∉ {}", "v", a);
        prop_assert!(denote_type_membership(&b, &v, EPS).unwrap(), "v ∈ {} but not {}", a, b);
    }

    #[test]
    fn superposed_tensor_is_the_whole_space(n in 1usize..=3, m in 1usize..=2, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<Complex64> = (0..1 << (n + m))
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let v = DenVector::new(amps).unwrap();
        let whole = Type::sup(Type::tensor(Type::qubits(n), Type::qubits(m)));
        prop_assert!(denote_type_membership(&whole, &v, EPS).unwrap());
        let split = Type::tensor(Type::sup(Type::qubits(n)), Type::sup(Type::qubits(m)));
        let left = sample_vector(&Type::sup(Type::qubits(n)), &mut rng);
        let right = sample_vector(&Type::sup(Type::qubits(m)), &mut rng);
        prop_assert!(denote_type_membership(&split, &left.kron(&right), EPS).unwrap());
    }

    #[test]
    fn q_family_round_trips(n in 1usize..=8, mask in any::<u8>()) {
        let spec = QSpec::new(n, (1..=n).filter(|k| mask & (1 << (k - 1)) != 0));
        let built = build_q(&spec);
        prop_assert_eq!(recognize_q(&built), Some(spec.clone()));
        prop_assert_eq!(built.qubit_count(), Some(n));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn generated_terms_print_and_parse_back(seed in any::<u64>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        let back = parse_term(&print(&t)).unwrap();
        prop_assert!(back == t, "{} reparsed as {}", t, back);
    }

    #[test]
    fn canonicalize_is_stable(seed in any::<u64>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        let e = Engine::default();
        let c = e.canonicalize(&t);
        prop_assert!(e.canonicalize(&c) == c, "{}", c);
        prop_assert!(ac_eq(&e.canonicalize(&mirror_sums(&t)), &c, EPS));
        let (ty, cty) = (infer_closed(&t).unwrap(), infer_closed(&c).unwrap());
        prop_assert!(subtype(&cty, &ty), "{} : {} became {} : {}", t, ty, c, cty);
        if ty.is_qubit_type() && !t.contains_proj() {
            let (a, b) = (denote_closed(&t, EPS).unwrap(), denote_closed(&c, EPS).unwrap());
            prop_assert!(same_set(&a, &b, 1e-7));
        }
    }

    #[test]
    fn samples_land_on_enumerated_outcomes(seed in any::<u64>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        let e = Engine::default();
        let d = e.run_distribution(&t, 2000).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
        let (r, trace) = e.sample(&t, seed, 2000).unwrap();
        prop_assert!(d.merged.iter().any(|(_, u)| ac_eq(u, &r, 1e-7)), "{} not among outcomes", r);
        for w in trace.steps.windows(2) {
            prop_assert!(w[0].after == w[1].before);
        }
    }

    #[test]
    fn metatheory_on_generated_terms(seed in any::<u64>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        let mut states = 0;
        if let Err((p, detail)) = check_term(&t, &Engine::default(), &PropConfig::default(), &mut states) {
            prop_assert!(false, "{}: {} on {}", p, detail, t);
        }
    }

    #[test]
    fn linear_binders_use_their_variable_once(seed in any::<u64>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        for s in subterms(&t) {
            if let Term::Lam(x, ann, body) = s {
                if !ann.is_base_qubit_type() {
                    prop_assert_eq!(body.occurrences(x), 1, "{}", s);
                }
            }
        }
    }

    #[test]
    fn summands_sit_below_their_sum(seed in any::<u64>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        for s in subterms(&t) {
            if let Term::Sum(a, b) = s {
                if !s.is_closed() {
                    continue;
                }
                let whole = infer_closed(s).unwrap();
                for part in [a, b] {
                    let pt = infer_closed(part).unwrap();
                    prop_assert!(subtype(&pt, &whole), "{} : {} vs {}", part, pt, whole);
                    if !canonical_type(&pt).is_sup() {
                        prop_assert!(subtype(&pt, whole.strip_sup()));
                    }
                }
            }
        }
    }

    #[test]
    fn substitution_respects_free_variables(seed in any::<u64>(), bit in any::<bool>()) {
        let Some(t) = generated(seed) else { return Ok(()) };
        let u = Term::ket(bit);
        for s in subterms(&t) {
            if let Term::Lam(x, _, body) = s {
                let mut expect = body.free_vars();
                expect.remove(x);
                prop_assert_eq!(body.substitute(x, &u).free_vars(), expect);
            }
            prop_assert!(s.substitute("unused_name", &u) == *s);
            if s.is_base_term() {
                prop_assert!(s.is_value());
            }
        }
    }
}

#[test]
fn bell_state_is_not_a_product() {
    let bell = DenVector::real(&[1.0, 0.0, 0.0, 1.0]);
    let split = parse_type("S(B) * S(B)").unwrap();
    assert!(!denote_type_membership(&split, &bell, EPS).unwrap());
    assert!(denote_type_membership(&parse_type("S(B * B)").unwrap(), &bell, EPS).unwrap());
}

#[test]
fn nested_superposition_collapses() {
    let a = parse_type("S(S(B)) * B").unwrap();
    let b = parse_type("S(B) * B").unwrap();
    assert!(type_equiv(&a, &b));
    assert!(subtype(&b, &parse_type("S(B) * S(B)").unwrap()));
    assert!(!subtype(&parse_type("S(B)").unwrap(), &Type::Qubit));
}
