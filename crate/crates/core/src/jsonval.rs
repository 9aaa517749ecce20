//! JSON encoding and decoding of runtime values, store dumps, and the
//! canonicalised deep dumps used by the differential harnesses.

use crate::ast::*;
use crate::pretty::type_to_sexp;
use crate::sem_update::{Pointer, Store, UValue};
use crate::sem_value::VValue;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;

pub fn vvalue_to_json(v: &VValue) -> Value {
    match v {
        VValue::Lit(l) => lit_json(l),
        VValue::Unit => json!("unit"),
        VValue::Fun { param, body } => json!({
            "fun": {"param": param, "body": crate::pretty::expr_to_sexp(body)}
        }),
        VValue::AbsFun { name, typeargs } => json!({
            "absfun": [name, typeargs.iter().map(type_to_sexp).collect::<Vec<_>>()]
        }),
        VValue::Con(c, p) => json!({"con": [c, vvalue_to_json(p)]}),
        VValue::Record(fields) => {
            let mut m = Map::new();
            for (f, v) in fields {
                m.insert(f.clone(), vvalue_to_json(v));
            }
            json!({ "rec": m })
        }
        VValue::Abstract { tag, items } => json!({
            "abs": {"tag": tag, "items": items.iter().map(vvalue_to_json).collect::<Vec<_>>()}
        }),
    }
}

pub fn uvalue_to_json(u: &UValue) -> Value {
    match u {
        UValue::Lit(l) => lit_json(l),
        UValue::Unit => json!("unit"),
        UValue::Fun { param, body } => json!({
            "fun": {"param": param, "body": crate::pretty::expr_to_sexp(body)}
        }),
        UValue::AbsFun { name, typeargs } => json!({
            "absfun": [name, typeargs.iter().map(type_to_sexp).collect::<Vec<_>>()]
        }),
        UValue::Con(c, p) => json!({"con": [c, uvalue_to_json(p)]}),
        UValue::Record(fields) => {
            let mut m = Map::new();
            for (f, v) in fields {
                m.insert(f.clone(), uvalue_to_json(v));
            }
            json!({ "rec": m })
        }
        UValue::Abstract { tag, items, owned } => json!({
            "abs": {
                "tag": tag,
                "items": items.iter().map(uvalue_to_json).collect::<Vec<_>>(),
                "owned": owned.iter().map(|p| p.0).collect::<Vec<_>>(),
            }
        }),
        UValue::Ptr(p) => json!({"ptr": p.0}),
    }
}

fn lit_json(l: &Literal) -> Value {
    let v = match l.ty {
        PrimType::Bool => json!(l.value != 0),
        _ => json!(l.value),
    };
    json!({"lit": v, "ty": l.ty.name()})
}

/// Store dump keyed by pointer id.
pub fn store_to_json(store: &Store) -> Value {
    let mut m = Map::new();
    for (p, u) in store.iter() {
        m.insert(p.0.to_string(), uvalue_to_json(u));
    }
    Value::Object(m)
}

/// Deep dump of an update-semantics value: pointers are renumbered in
/// first-visit order and their targets inlined once, so two dumps are
/// byte-equal exactly when the values agree modulo a pointer bijection.
pub fn deep_uvalue_json(u: &UValue, store: &Store) -> Value {
    let mut canon: BTreeMap<Pointer, u64> = BTreeMap::new();
    deep(u, store, &mut canon)
}

fn deep(u: &UValue, store: &Store, canon: &mut BTreeMap<Pointer, u64>) -> Value {
    match u {
        UValue::Ptr(p) => {
            if let Some(id) = canon.get(p) {
                return json!({"ptr": id});
            }
            let id = canon.len() as u64 + 1;
            canon.insert(*p, id);
            match store.get(*p) {
                Some(inner) => {
                    let val = deep(&inner.clone(), store, canon);
                    json!({"ptr": id, "val": val})
                }
                None => json!({"ptr": id, "val": Value::Null}),
            }
        }
        UValue::Con(c, p) => json!({"con": [c, deep(p, store, canon)]}),
        UValue::Record(fields) => {
            let mut m = Map::new();
            for (f, v) in fields {
                m.insert(f.clone(), deep(v, store, canon));
            }
            json!({ "rec": m })
        }
        UValue::Abstract { tag, items, .. } => json!({
            "abs": {"tag": tag, "items": items.iter().map(|v| deep(v, store, canon)).collect::<Vec<_>>()}
        }),
        other => uvalue_to_json(other),
    }
}

/// Type-directed deep dump: like [`deep_uvalue_json`] but follows the
/// type, so logically taken record slots are omitted. Two dumps are equal
/// exactly when the typed reachable data agrees modulo a pointer
/// bijection. Function-typed data is not dumpable.
pub fn deep_uvalue_json_typed(
    u: &UValue,
    store: &Store,
    ty: &CoreType,
) -> Result<Value, String> {
    let mut canon: BTreeMap<Pointer, u64> = BTreeMap::new();
    deep_typed(u, store, ty, &mut canon)
}

fn deep_typed(
    u: &UValue,
    store: &Store,
    ty: &CoreType,
    canon: &mut BTreeMap<Pointer, u64>,
) -> Result<Value, String> {
    match (u, ty) {
        (UValue::Lit(l), CoreType::Prim(_)) => Ok(lit_json(l)),
        (UValue::Unit, CoreType::Unit) => Ok(json!("unit")),
        (UValue::Con(c, p), CoreType::Variant(alts)) => {
            let alt = alts
                .iter()
                .find(|(ac, _)| ac == c)
                .ok_or_else(|| format!("constructor `{c}` not in variant type"))?;
            Ok(json!({"con": [c, deep_typed(p, store, &alt.1, canon)?]}))
        }
        (UValue::Record(vals), CoreType::Record { fields, mode: Mode::Unboxed }) => {
            rec_typed(vals, store, fields, canon)
        }
        (UValue::Ptr(p), CoreType::Record { fields, .. }) => {
            if let Some(id) = canon.get(p) {
                return Ok(json!({"ptr": id}));
            }
            let id = canon.len() as u64 + 1;
            canon.insert(*p, id);
            match store.get(*p) {
                Some(UValue::Record(vals)) => {
                    let val = rec_typed(&vals.clone(), store, fields, canon)?;
                    Ok(json!({"ptr": id, "val": val}))
                }
                Some(_) => Err("pointer target is not a record".to_string()),
                None => Err(format!("dangling pointer {}", p.0)),
            }
        }
        (UValue::Abstract { tag, items, .. }, CoreType::Abstract { args, mode: Mode::Unboxed, .. }) => {
            abs_typed(tag, items, store, args, canon)
        }
        (UValue::Ptr(p), CoreType::Abstract { args, .. }) => {
            if let Some(id) = canon.get(p) {
                return Ok(json!({"ptr": id}));
            }
            let id = canon.len() as u64 + 1;
            canon.insert(*p, id);
            match store.get(*p) {
                Some(UValue::Abstract { tag, items, .. }) => {
                    let val = abs_typed(&tag.clone(), &items.clone(), store, args, canon)?;
                    Ok(json!({"ptr": id, "val": val}))
                }
                Some(_) => Err("pointer target is not an abstract value".to_string()),
                None => Err(format!("dangling pointer {}", p.0)),
            }
        }
        (_, CoreType::Fun(..)) => Err("cannot dump function-typed data".to_string()),
        _ => Err(format!("value does not fit type {}", type_to_sexp(ty))),
    }
}

fn rec_typed(
    vals: &[(String, UValue)],
    store: &Store,
    fields: &[FieldDecl],
    canon: &mut BTreeMap<Pointer, u64>,
) -> Result<Value, String> {
    if vals.len() != fields.len() {
        return Err("record width mismatch".to_string());
    }
    let mut m = Map::new();
    for ((n, v), f) in vals.iter().zip(fields) {
        if n != &f.name {
            return Err("record field order mismatch".to_string());
        }
        if !f.taken {
            m.insert(n.clone(), deep_typed(v, store, &f.ty, canon)?);
        }
    }
    Ok(json!({ "rec": m }))
}

fn abs_typed(
    tag: &str,
    items: &[UValue],
    store: &Store,
    args: &[CoreType],
    canon: &mut BTreeMap<Pointer, u64>,
) -> Result<Value, String> {
    let elem = args.first().ok_or("abstract type lacks an element type")?;
    let items = items
        .iter()
        .map(|i| deep_typed(i, store, elem, canon))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({"abs": {"tag": tag, "items": items}}))
}

/// Type-directed decoding of a value-semantics value. Prim literals may be
/// written bare (`5`, `true`); the tagged `{"lit":…,"ty":…}` form is also
/// accepted when the tag matches.
pub fn vvalue_from_json(v: &Value, ty: &CoreType) -> Result<VValue, String> {
    match ty {
        CoreType::Prim(t) => {
            let raw = match v {
                Value::Object(m) => {
                    let tag = m.get("ty").and_then(|x| x.as_str());
                    if tag != Some(t.name()) {
                        return Err(format!("literal tag mismatch, expected {}", t.name()));
                    }
                    m.get("lit").ok_or("expected a lit field")?
                }
                other => other,
            };
            let value = match (t, raw) {
                (PrimType::Bool, Value::Bool(b)) => *b as u64,
                (PrimType::Bool, _) => return Err("expected a boolean".to_string()),
                (_, Value::Number(n)) => {
                    n.as_u64().ok_or("expected an unsigned integer")?
                }
                _ => return Err(format!("expected a {} literal", t.name())),
            };
            let lit = Literal::uint(value, *t);
            if !lit.in_range() {
                return Err(format!("{} does not fit in {}", value, t.name()));
            }
            Ok(VValue::Lit(lit))
        }
        CoreType::Unit => match v {
            Value::String(s) if s == "unit" => Ok(VValue::Unit),
            Value::Null => Ok(VValue::Unit),
            _ => Err("expected \"unit\"".to_string()),
        },
        CoreType::Variant(alts) => match v {
            Value::Object(m) => {
                let arr = m
                    .get("con")
                    .and_then(|c| c.as_array())
                    .ok_or("expected {\"con\": [ctor, payload]}")?;
                let ctor = arr
                    .first()
                    .and_then(|c| c.as_str())
                    .ok_or("expected a constructor name")?;
                let payload = arr.get(1).ok_or("expected a payload")?;
                let alt = alts
                    .iter()
                    .find(|(c, _)| c == ctor)
                    .ok_or_else(|| format!("unknown constructor `{ctor}`"))?;
                Ok(VValue::Con(
                    ctor.to_string(),
                    Box::new(vvalue_from_json(payload, &alt.1)?),
                ))
            }
            _ => Err("expected a variant object".to_string()),
        },
        CoreType::Record { fields, .. } => match v {
            Value::Object(m) => {
                let m = match m.get("rec") {
                    Some(Value::Object(inner)) => inner,
                    Some(_) => return Err("rec must hold an object".to_string()),
                    None => m,
                };
                let mut out = Vec::with_capacity(fields.len());
                for f in fields {
                    let fv = m
                        .get(&f.name)
                        .ok_or_else(|| format!("missing field `{}`", f.name))?;
                    out.push((f.name.clone(), vvalue_from_json(fv, &f.ty)?));
                }
                Ok(VValue::Record(out))
            }
            _ => Err("expected a record object".to_string()),
        },
        CoreType::Abstract { name, args, .. } if name == crate::ffi::WORDARRAY => {
            let items = match v {
                Value::Array(items) => items.as_slice(),
                Value::Object(m) => m
                    .get("abs")
                    .and_then(|a| a.get("items"))
                    .and_then(|i| i.as_array())
                    .ok_or("expected a wordarray items list")?
                    .as_slice(),
                _ => return Err("expected a wordarray".to_string()),
            };
            let elem = args.first().ok_or("wordarray needs an element type")?;
            Ok(VValue::Abstract {
                tag: crate::ffi::WORDARRAY.into(),
                items: items
                    .iter()
                    .map(|i| vvalue_from_json(i, elem))
                    .collect::<Result<_, _>>()?,
            })
        }
        CoreType::Abstract { name, .. } => {
            Err(format!("cannot decode values of abstract type `{name}`"))
        }
        CoreType::Fun(..) => Err("cannot decode function values".to_string()),
        CoreType::Var(_) | CoreType::VarBang(_) => {
            Err("cannot decode at a non-ground type".to_string())
        }
    }
}

/// Canonical embedding of a value-semantics value into the update world:
/// boxed records and abstract values are allocated fresh in the store.
/// The embedded pair corresponds by construction.
pub fn embed_uvalue(v: &VValue, ty: &CoreType, store: &mut Store) -> Result<UValue, String> {
    match (v, ty) {
        (VValue::Lit(l), CoreType::Prim(_)) => Ok(UValue::Lit(*l)),
        (VValue::Unit, CoreType::Unit) => Ok(UValue::Unit),
        (VValue::Fun { param, body }, CoreType::Fun(..)) => Ok(UValue::Fun {
            param: param.clone(),
            body: body.clone(),
        }),
        (VValue::AbsFun { name, typeargs }, CoreType::Fun(..)) => Ok(UValue::AbsFun {
            name: name.clone(),
            typeargs: typeargs.clone(),
        }),
        (VValue::Con(c, p), CoreType::Variant(alts)) => {
            let alt = alts
                .iter()
                .find(|(ac, _)| ac == c)
                .ok_or_else(|| format!("constructor `{c}` not in type"))?;
            Ok(UValue::Con(c.clone(), Box::new(embed_uvalue(p, &alt.1, store)?)))
        }
        (VValue::Record(vals), CoreType::Record { fields, mode }) => {
            if vals.len() != fields.len() {
                return Err("record width mismatch".to_string());
            }
            let mut out = Vec::with_capacity(fields.len());
            for ((n, v), f) in vals.iter().zip(fields) {
                if n != &f.name {
                    return Err("record field order mismatch".to_string());
                }
                if f.taken {
                    // taken slots carry an inert placeholder in both worlds
                    out.push((n.clone(), UValue::Unit));
                } else {
                    out.push((n.clone(), embed_uvalue(v, &f.ty, store)?));
                }
            }
            let rec = UValue::Record(out);
            match mode {
                Mode::Unboxed => Ok(rec),
                _ => Ok(UValue::Ptr(store.alloc(rec))),
            }
        }
        (VValue::Abstract { tag, items }, CoreType::Abstract { name, args, mode }) => {
            if tag != name {
                return Err("abstract tag mismatch".to_string());
            }
            let elem = args.first();
            let mut out = Vec::with_capacity(items.len());
            for i in items {
                let elem = elem.ok_or("abstract type lacks element type")?;
                out.push(embed_uvalue(i, elem, store)?);
            }
            let a = UValue::Abstract {
                tag: tag.clone(),
                items: out,
                owned: Default::default(),
            };
            match mode {
                Mode::Unboxed => Ok(a),
                _ => Ok(UValue::Ptr(store.alloc(a))),
            }
        }
        _ => Err(format!("value does not fit type {}", type_to_sexp(ty))),
    }
}
