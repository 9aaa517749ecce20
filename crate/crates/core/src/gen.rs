//! Seeded random generators for types and values: fuel for the
//! property-style tests and the oracle corpus runs. Everything here is
//! deterministic given the caller's RNG.

use crate::ast::{CoreType, FieldDecl, Kind, Mode, PrimType};
use crate::kinding::{max_kind, KindContext, TypeSubst};
use rand::Rng;

const PRIMS: [PrimType; 5] = [
    PrimType::U8,
    PrimType::U16,
    PrimType::U32,
    PrimType::U64,
    PrimType::Bool,
];

const MODES: [Mode; 3] = [Mode::ReadOnly, Mode::Writable, Mode::Unboxed];

/// A kind context with one variable per interesting kind.
pub fn standard_kind_context() -> KindContext {
    KindContext::new(vec![
        ("a".into(), Kind::NONE),
        ("b".into(), Kind::DS),
        ("c".into(), Kind::E),
        ("d".into(), Kind::ALL),
        ("e".into(), Kind::D.union(Kind::E)),
    ])
}

/// Random type of bounded depth whose variables come from `delta`.
pub fn random_type<R: Rng>(rng: &mut R, delta: &KindContext, depth: u32) -> CoreType {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    if leaf {
        match rng.gen_range(0..4) {
            0 => CoreType::Unit,
            1 | 2 => CoreType::Prim(PRIMS[rng.gen_range(0..PRIMS.len())]),
            _ => {
                if delta.bindings().is_empty() {
                    CoreType::Prim(PrimType::U32)
                } else {
                    let (name, _) = &delta.bindings()[rng.gen_range(0..delta.bindings().len())];
                    if rng.gen_bool(0.5) {
                        CoreType::Var(name.clone())
                    } else {
                        CoreType::VarBang(name.clone())
                    }
                }
            }
        }
    } else {
        match rng.gen_range(0..4) {
            0 => CoreType::fun(
                random_type(rng, delta, depth - 1),
                random_type(rng, delta, depth - 1),
            ),
            1 => {
                let n = rng.gen_range(1..=3);
                let ctors = ["A", "B", "C"];
                CoreType::Variant(
                    (0..n)
                        .map(|i| (ctors[i].to_string(), random_type(rng, delta, depth - 1)))
                        .collect(),
                )
            }
            2 => {
                let n = rng.gen_range(1..=3);
                let names = ["f", "g", "h"];
                CoreType::Record {
                    fields: (0..n)
                        .map(|i| FieldDecl {
                            name: names[i].to_string(),
                            ty: random_type(rng, delta, depth - 1),
                            taken: rng.gen_bool(0.2),
                        })
                        .collect(),
                    mode: MODES[rng.gen_range(0..MODES.len())],
                }
            }
            _ => {
                let n = rng.gen_range(0..=2);
                let names = ["buf", "tree"];
                CoreType::Abstract {
                    name: names[rng.gen_range(0..names.len())].to_string(),
                    args: (0..n).map(|_| random_type(rng, delta, depth - 1)).collect(),
                    mode: MODES[rng.gen_range(0..MODES.len())],
                }
            }
        }
    }
}

/// Random value-semantics value inhabiting a ground type; `None` when the
/// type has function-typed parts (those cannot be synthesised). Taken
/// record slots get the inert unit placeholder. Corner values (0 and max)
/// appear with boosted probability.
pub fn random_vvalue<R: Rng>(rng: &mut R, ty: &CoreType) -> Option<crate::sem_value::VValue> {
    use crate::sem_value::VValue;
    Some(match ty {
        CoreType::Prim(PrimType::Bool) => {
            VValue::Lit(crate::ast::Literal::bool(rng.gen_bool(0.5)))
        }
        CoreType::Prim(p) => {
            let max = (p.max_value() - 1) as u64;
            let v = match rng.gen_range(0..10) {
                0 => 0,
                1 => max,
                2 => 1,
                _ => rng.gen::<u64>() & max,
            };
            VValue::lit(v, *p)
        }
        CoreType::Unit => VValue::Unit,
        CoreType::Variant(alts) => {
            let (c, t) = &alts[rng.gen_range(0..alts.len())];
            VValue::Con(c.clone(), Box::new(random_vvalue(rng, t)?))
        }
        CoreType::Record { fields, .. } => VValue::Record(
            fields
                .iter()
                .map(|f| {
                    Some((
                        f.name.clone(),
                        if f.taken {
                            crate::sem_value::VValue::Unit
                        } else {
                            random_vvalue(rng, &f.ty)?
                        },
                    ))
                })
                .collect::<Option<Vec<_>>>()?,
        ),
        CoreType::Abstract { name, args, .. } if name == crate::ffi::WORDARRAY => {
            let n = rng.gen_range(0..6);
            let elem = args.first()?;
            VValue::Abstract {
                tag: name.clone(),
                items: (0..n)
                    .map(|_| random_vvalue(rng, elem))
                    .collect::<Option<Vec<_>>>()?,
            }
        }
        CoreType::Fun(..)
        | CoreType::Abstract { .. }
        | CoreType::Var(_)
        | CoreType::VarBang(_) => return None,
    })
}

/// A random set of kinded binders together with a kind-respecting ground
/// instantiation: each target type admits its binder's kind.
pub fn random_instantiation<R: Rng>(rng: &mut R) -> (KindContext, TypeSubst) {
    let empty = KindContext::empty();
    let n = rng.gen_range(1..=3);
    let names = ["a", "b", "c"];
    let mut binders = Vec::new();
    let mut pairs = Vec::new();
    for name in names.iter().take(n) {
        let target = random_type(rng, &empty, 3);
        let mk = max_kind(&empty, &target).expect("ground type");
        // pick a random subset of the target's maximal kind as the bound
        let mut bound = Kind::NONE;
        for k in [Kind::D, Kind::S, Kind::E] {
            if k.is_subset(mk) && rng.gen_bool(0.6) {
                bound = bound.union(k);
            }
        }
        binders.push((name.to_string(), bound));
        pairs.push((name.to_string(), target));
    }
    (KindContext::new(binders), TypeSubst::new(pairs))
}
