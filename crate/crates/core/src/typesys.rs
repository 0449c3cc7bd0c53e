//! Subtyping, joins, the `Q_n^S` register types and cast shapes.
//!
//! Tensor is treated as associative throughout: [`canonical_type`] flattens
//! every `⊗` spine into a right-nested one, so `(B*B)*B` and `B*(B*B)` are the
//! same canonical type.

use std::collections::BTreeSet;

use crate::syntax::Type;

/// Collapses `S(S(X))` to `S(X)` everywhere and right-nests tensor spines.
/// Idempotent.
pub fn canonical_type(a: &Type) -> Type {
    match a {
        Type::Qubit => Type::Qubit,
        Type::Sup(inner) => match canonical_type(inner) {
            s @ Type::Sup(_) => s,
            c => Type::sup(c),
        },
        Type::Tensor(l, r) => {
            let (l, r) = (canonical_type(l), canonical_type(r));
            let mut factors: Vec<Type> = l.tensor_factors().into_iter().cloned().collect();
            factors.extend(r.tensor_factors().into_iter().cloned());
            Type::tensor_of(factors)
        }
        Type::Arrow(d, c) => Type::arrow(canonical_type(d), canonical_type(c)),
    }
}

/// Equality modulo `S(S(X)) = S(X)` and tensor associativity.
pub fn type_equiv(a: &Type, b: &Type) -> bool {
    canonical_type(a) == canonical_type(b)
}

/// Decides `a ⪯ b`.
pub fn subtype(a: &Type, b: &Type) -> bool {
    sub_canonical(&canonical_type(a), &canonical_type(b))
}

fn sub_canonical(a: &Type, b: &Type) -> bool {
    if a == b {
        return true;
    }
    match (a, b) {
        (Type::Sup(x), Type::Sup(y)) => sub_canonical(x, y),
        (Type::Sup(_), _) => false,
        (_, Type::Sup(y)) => sub_canonical(a, y),
        (Type::Arrow(d1, c1), Type::Arrow(d2, c2)) => d1 == d2 && sub_canonical(c1, c2),
        (Type::Tensor(..), Type::Tensor(..)) => {
            sub_factors(&a.tensor_factors(), &b.tensor_factors())
        }
        _ => false,
    }
}

/// Can the left factor list be cut into consecutive groups, one per right
/// factor, each group below its factor? A group of two or more factors can
/// only sit below an `S(X)` factor, through `X`.
fn sub_factors(left: &[&Type], right: &[&Type]) -> bool {
    let (n, m) = (left.len(), right.len());
    if n < m {
        return false;
    }
    // ok[i][j]: left[..i] matches right[..j]
    let mut ok = vec![vec![false; m + 1]; n + 1];
    ok[0][0] = true;
    for j in 1..=m {
        for i in j..=n {
            ok[i][j] = (j - 1..i).any(|k| ok[k][j - 1] && group_below(&left[k..i], right[j - 1]));
        }
    }
    ok[n][m]
}

fn group_below(group: &[&Type], r: &Type) -> bool {
    match group {
        [single] => sub_canonical(single, r),
        _ => match r {
            Type::Sup(y) => {
                let joined = Type::tensor_of(group.iter().map(|t| (*t).clone()).collect());
                sub_canonical(&joined, y)
            }
            _ => false,
        },
    }
}

/// A common supertype of `a` and `b`, used to type sums. Returns `None` when
/// the two types have no upper bound this procedure can find.
pub fn join(a: &Type, b: &Type) -> Option<Type> {
    let (a, b) = (canonical_type(a), canonical_type(b));
    join_canonical(&a, &b)
}

fn join_canonical(a: &Type, b: &Type) -> Option<Type> {
    if sub_canonical(a, b) {
        return Some(b.clone());
    }
    if sub_canonical(b, a) {
        return Some(a.clone());
    }
    match (a, b) {
        (Type::Sup(_), _) | (_, Type::Sup(_)) => {
            let inner = join_canonical(a.strip_sup(), b.strip_sup())?;
            Some(canonical_type(&Type::sup(inner)))
        }
        (Type::Tensor(..), Type::Tensor(..)) => {
            let (fa, fb) = (a.tensor_factors(), b.tensor_factors());
            if fa.len() != fb.len() {
                return None;
            }
            let parts = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| join_canonical(x, y))
                .collect::<Option<Vec<_>>>()?;
            Some(Type::tensor_of(parts))
        }
        (Type::Arrow(d1, c1), Type::Arrow(d2, c2)) if d1 == d2 => {
            Some(Type::arrow((**d1).clone(), join_canonical(c1, c2)?))
        }
        _ => None,
    }
}

/// `Q_n^S`: an `n`-qubit register whose positions in `set` are superposed.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QSpec {
    pub n: usize,
    pub set: BTreeSet<usize>,
}

impl QSpec {
    /// Panics unless `n ≥ 1` and `set ⊆ {1..n}`.
    pub fn new(n: usize, set: impl IntoIterator<Item = usize>) -> QSpec {
        let set: BTreeSet<usize> = set.into_iter().collect();
        assert!(n >= 1, "Q needs at least one qubit");
        assert!(set.iter().all(|&k| (1..=n).contains(&k)), "position out of range");
        QSpec { n, set }
    }

    /// Every subset of `{1..n}`, in binary order.
    pub fn all(n: usize) -> impl Iterator<Item = QSpec> {
        (0u64..(1u64 << n)).map(move |mask| {
            QSpec::new(n, (1..=n).filter(|k| mask & (1 << (k - 1)) != 0))
        })
    }

    /// The same register with positions `1..=j` no longer superposed.
    pub fn measured(&self, j: usize) -> QSpec {
        QSpec {
            n: self.n,
            set: self.set.iter().copied().filter(|&k| k > j).collect(),
        }
    }
}

/// The type `Q_n^S`, built by the defining mutual recursion. The result is
/// left-nested, as the recursion produces it.
pub fn build_q(spec: &QSpec) -> Type {
    let n = spec.n;
    let mut set = spec.set.clone();
    let last = if set.remove(&n) {
        Some(Type::Qubit)
    } else {
        None
    };
    build_a(n - 1, set, last)
}

/// `A_k^S(X)`, where `sup = None` stands for `X = B` and `Some(C)` for
/// `X = S(C)`.
fn build_a(k: usize, mut set: BTreeSet<usize>, sup: Option<Type>) -> Type {
    if k == 0 {
        debug_assert!(set.is_empty());
        return match sup {
            None => Type::Qubit,
            Some(c) => Type::sup(c),
        };
    }
    let here = set.remove(&k);
    match (sup, here) {
        (None, false) => Type::tensor(build_a(k - 1, set, None), Type::Qubit),
        (None, true) => Type::tensor(build_a(k - 1, set, Some(Type::Qubit)), Type::Qubit),
        (Some(c), false) => Type::tensor(build_a(k - 1, set, None), Type::sup(c)),
        (Some(c), true) => build_a(k - 1, set, Some(Type::tensor(Type::Qubit, c))),
    }
}

/// Inverse of [`build_q`] modulo tensor associativity and `S(S(X)) = S(X)`.
pub fn recognize_q(a: &Type) -> Option<QSpec> {
    let canon = canonical_type(a);
    let mut set = BTreeSet::new();
    let mut pos = 0;
    let mut prev_sup = false;
    for factor in canon.tensor_factors() {
        match factor {
            Type::Qubit => {
                pos += 1;
                prev_sup = false;
            }
            Type::Sup(inner) if inner.is_base_qubit_type() => {
                if prev_sup {
                    return None;
                }
                let width = inner.qubit_count()?;
                set.extend(pos + 1..=pos + width);
                pos += width;
                prev_sup = true;
            }
            _ => return None,
        }
    }
    Some(QSpec { n: pos, set })
}

/// The `⪯`-least `Q_n^S` above `a`, if any. Ties between incomparable
/// candidates go to the one with fewest superposed positions.
pub fn least_q_above(a: &Type) -> Option<QSpec> {
    let n = canonical_type(a).qubit_count()?;
    if n == 0 {
        return None;
    }
    if let Some(spec) = recognize_q(a) {
        return Some(spec);
    }
    // Enumeration is exponential; registers past this width only get the
    // exact match above.
    if n > 16 {
        return None;
    }
    let candidates: Vec<(QSpec, Type)> = QSpec::all(n)
        .map(|s| {
            let t = canonical_type(&build_q(&s));
            (s, t)
        })
        .filter(|(_, t)| subtype(a, t))
        .collect();
    let least = candidates
        .iter()
        .find(|(_, t)| candidates.iter().all(|(_, u)| subtype(t, u)));
    least
        .or_else(|| candidates.iter().min_by_key(|(s, _)| s.set.len()))
        .map(|(s, _)| s.clone())
}

/// Which side of a cast carries the superposition being pushed out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CastSide {
    /// `S(A) ⊗ B` into `A ⊗ B`.
    Right,
    /// `A ⊗ S(B)` into `A ⊗ B`.
    Left,
}

/// Checks that a cast from `source` to `left ⊗ right` has one of the two
/// admissible shapes, modulo associativity.
pub fn cast_side(source: &Type, left: &Type, right: &Type) -> Option<CastSide> {
    let src = canonical_type(source);
    let as_right = canonical_type(&Type::tensor(Type::sup(left.clone()), right.clone()));
    let as_left = canonical_type(&Type::tensor(left.clone(), Type::sup(right.clone())));
    if src == as_right {
        Some(CastSide::Right)
    } else if src == as_left {
        Some(CastSide::Left)
    } else {
        None
    }
}

/// Given a cast source and a flat target, finds the split of the target into
/// `(left, right)` that makes the cast well-shaped.
pub fn cast_split(source: &Type, target: &Type) -> Option<(Type, Type)> {
    let target = canonical_type(target);
    let t: Vec<Type> = target.tensor_factors().into_iter().cloned().collect();
    for k in 1..t.len() {
        let left = Type::tensor_of(t[..k].to_vec());
        let right = Type::tensor_of(t[k..].to_vec());
        if cast_side(source, &left, &right) == Some(CastSide::Right) {
            return Some((left, right));
        }
    }
    for k in 1..t.len() {
        let left = Type::tensor_of(t[..k].to_vec());
        let right = Type::tensor_of(t[k..].to_vec());
        if cast_side(source, &left, &right) == Some(CastSide::Left) {
            return Some((left, right));
        }
    }
    None
}
