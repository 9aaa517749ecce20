//! Registry for abstract (foreign) types and functions: per-type
//! correspondence rules, paired value/update implementations, and the
//! built-in library (allocators, free functions, word arrays).
//!
//! The registry is built once before evaluation and is read-only
//! thereafter. Implementations receive a callback handle into the running
//! interpreter so iterators can apply program-supplied functions.

use crate::ast::*;
use crate::kinding::{kind_check, KindContext};
use crate::refine::{CorrReport, PtrSets};
use crate::sem_update::{Store, UValue};
use crate::sem_value::{EvalError, VValue};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

/// Callback into the value-semantics interpreter, used by abstract
/// implementations to apply program-supplied function values.
pub trait CallV {
    fn call(&mut self, f: &VValue, arg: VValue) -> Result<VValue, EvalError>;
}

/// Callback into the update-semantics interpreter.
pub trait CallU {
    fn call(&mut self, f: &UValue, arg: UValue, store: &mut Store) -> Result<UValue, EvalError>;
}

/// Recursion handle handed to user correspondence rules so they can relate
/// child values at their element types. A `None` side means that side has
/// been erased (single-sided value typing).
pub trait CorrCtx {
    fn relate_child(
        &self,
        u: Option<&UValue>,
        store: &Store,
        v: Option<&VValue>,
        ty: &CoreType,
    ) -> CorrReport;
}

pub type ImplV =
    Arc<dyn Fn(&mut dyn CallV, &[CoreType], VValue) -> Result<VValue, EvalError> + Send + Sync>;
pub type ImplU = Arc<
    dyn Fn(&mut dyn CallU, &[CoreType], UValue, &mut Store) -> Result<UValue, EvalError>
        + Send
        + Sync,
>;
pub type CorrFn = Arc<
    dyn Fn(&dyn CorrCtx, Option<&UValue>, &Store, Option<&VValue>, &[CoreType], Mode) -> CorrReport
        + Send
        + Sync,
>;
pub type ZeroV = Arc<dyn Fn(&[CoreType]) -> VValue + Send + Sync>;
pub type ZeroU = Arc<dyn Fn(&[CoreType]) -> UValue + Send + Sync>;

/// User-provided behaviour of one abstract type.
pub struct AbstractTypeSpec {
    pub name: String,
    pub arity: usize,
    pub corr: CorrFn,
    pub zero_v: ZeroV,
    pub zero_u: ZeroU,
}

/// Paired semantics of one abstract function.
pub struct AbstractFnSpec {
    pub name: String,
    pub signature: PolyType,
    pub impl_v: ImplV,
    pub impl_u: ImplU,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("`{0}` is already registered")]
    DuplicateRegistration(String),
    #[error("no abstract entry named `{0}`")]
    UnknownAbstract(String),
    #[error("declaration of `{name}` does not fit the built-in library: {reason}")]
    BadSignature { name: String, reason: String },
}

#[derive(Default)]
pub struct Registry {
    types: BTreeMap<String, Arc<AbstractTypeSpec>>,
    fns: BTreeMap<String, Arc<AbstractFnSpec>>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry::default()
    }

    pub fn register_type(&mut self, spec: AbstractTypeSpec) -> Result<(), RegistryError> {
        if self.types.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateRegistration(spec.name));
        }
        self.types.insert(spec.name.clone(), Arc::new(spec));
        Ok(())
    }

    pub fn register_fn(&mut self, spec: AbstractFnSpec) -> Result<(), RegistryError> {
        if self.fns.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateRegistration(spec.name));
        }
        self.fns.insert(spec.name.clone(), Arc::new(spec));
        Ok(())
    }

    pub fn lookup_type(&self, name: &str) -> Option<&Arc<AbstractTypeSpec>> {
        self.types.get(name)
    }

    pub fn lookup_fn(&self, name: &str) -> Option<&Arc<AbstractFnSpec>> {
        self.fns.get(name)
    }

    pub fn fn_names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(|s| s.as_str())
    }
}

/// Typed zero value for taken slots and freshly allocated records. Boxed
/// and function-typed slots get an inert unit placeholder; such slots are
/// only ever legal while taken, and taken slots are never inspected.
pub fn zero_vvalue(reg: &Registry, t: &CoreType) -> VValue {
    match t {
        CoreType::Prim(p) => VValue::lit(0, *p),
        CoreType::Unit => VValue::Unit,
        CoreType::Variant(alts) => {
            let sorted = CoreType::sorted_alts(alts);
            let (c, ty) = sorted[0];
            VValue::Con(c.clone(), Box::new(zero_vvalue(reg, ty)))
        }
        CoreType::Record { fields, mode: Mode::Unboxed } => VValue::Record(
            fields
                .iter()
                .map(|f| (f.name.clone(), zero_vvalue(reg, &f.ty)))
                .collect(),
        ),
        CoreType::Abstract { name, args, mode: Mode::Unboxed } => match reg.lookup_type(name) {
            Some(spec) => (spec.zero_v)(args),
            None => VValue::Unit,
        },
        _ => VValue::Unit,
    }
}

pub fn zero_uvalue(reg: &Registry, t: &CoreType) -> UValue {
    match t {
        CoreType::Prim(p) => UValue::lit(0, *p),
        CoreType::Unit => UValue::Unit,
        CoreType::Variant(alts) => {
            let sorted = CoreType::sorted_alts(alts);
            let (c, ty) = sorted[0];
            UValue::Con(c.clone(), Box::new(zero_uvalue(reg, ty)))
        }
        CoreType::Record { fields, mode: Mode::Unboxed } => UValue::Record(
            fields
                .iter()
                .map(|f| (f.name.clone(), zero_uvalue(reg, &f.ty)))
                .collect(),
        ),
        CoreType::Abstract { name, args, mode: Mode::Unboxed } => match reg.lookup_type(name) {
            Some(spec) => (spec.zero_u)(args),
            None => UValue::Unit,
        },
        _ => UValue::Unit,
    }
}

pub const WORDARRAY: &str = "wordarray";

fn stuck(reason: &str) -> EvalError {
    EvalError::Stuck { span: Span::DUMMY, reason: reason.to_string() }
}

fn expect_u32(v: Option<Literal>) -> Result<usize, EvalError> {
    match v {
        Some(l) if l.ty == PrimType::U32 => Ok(l.value as usize),
        _ => Err(stuck("expected a u32 literal")),
    }
}

fn rec_fields_v(v: VValue, n: usize) -> Result<Vec<VValue>, EvalError> {
    match v {
        VValue::Record(fields) if fields.len() == n => {
            Ok(fields.into_iter().map(|(_, v)| v).collect())
        }
        _ => Err(stuck("expected an unboxed record argument")),
    }
}

fn rec_fields_u(v: UValue, n: usize) -> Result<Vec<UValue>, EvalError> {
    match v {
        UValue::Record(fields) if fields.len() == n => {
            Ok(fields.into_iter().map(|(_, v)| v).collect())
        }
        _ => Err(stuck("expected an unboxed record argument")),
    }
}

fn wordarray_type_spec() -> AbstractTypeSpec {
    AbstractTypeSpec {
        name: WORDARRAY.to_string(),
        arity: 1,
        corr: Arc::new(|ctx, u, store, v, args, _mode| {
            let elem = &args[0];
            let us = match u {
                Some(UValue::Abstract { tag, items, owned }) if tag == WORDARRAY => {
                    if !owned.is_empty() {
                        return CorrReport::fail(
                            "RA",
                            "",
                            "wordarray must not own pointers",
                        );
                    }
                    Some(items)
                }
                Some(_) => return CorrReport::fail("RA", "", "update value is not a wordarray"),
                None => None,
            };
            let vs = match v {
                Some(VValue::Abstract { tag, items }) if tag == WORDARRAY => Some(items),
                Some(_) => return CorrReport::fail("RA", "", "value is not a wordarray"),
                None => None,
            };
            if let (Some(us), Some(vs)) = (&us, &vs) {
                if us.len() != vs.len() {
                    return CorrReport::fail("RA", "", "wordarray lengths differ");
                }
            }
            let len = us.map(|u| u.len()).or(vs.map(|v| v.len())).unwrap_or(0);
            for i in 0..len {
                let rep = ctx.relate_child(
                    us.map(|u| &u[i]),
                    store,
                    vs.map(|v| &v[i]),
                    elem,
                );
                if !rep.ok {
                    return rep.nest(&format!("[{i}]"));
                }
                if !rep.sets.is_empty() {
                    return CorrReport::fail(
                        "RA",
                        &format!("[{i}]"),
                        "wordarray elements must be pointer-free",
                    );
                }
            }
            CorrReport::ok(PtrSets::default())
        }),
        zero_v: Arc::new(|_args| VValue::Abstract { tag: WORDARRAY.into(), items: vec![] }),
        zero_u: Arc::new(|_args| UValue::Abstract {
            tag: WORDARRAY.into(),
            items: vec![],
            owned: BTreeSet::new(),
        }),
    }
}

// Canonical signatures of the built-in word-array functions, written with
// the binder names used by the declaring program.
fn expected_wordarray_sig(decl: &PolyType, which: &str) -> Option<PolyType> {
    let a = decl.binders.first()?.0.clone();
    let arr = |mode: Mode| CoreType::Abstract {
        name: WORDARRAY.into(),
        args: vec![CoreType::Var(a.clone())],
        mode,
    };
    let u32t = CoreType::Prim(PrimType::U32);
    let ub_rec = |fields: Vec<(&str, CoreType)>| CoreType::Record {
        fields: fields
            .into_iter()
            .map(|(n, ty)| FieldDecl { name: n.into(), ty, taken: false })
            .collect(),
        mode: Mode::Unboxed,
    };
    let body = match which {
        "wordarray_create" => CoreType::fun(u32t, arr(Mode::Writable)),
        "wordarray_free" => CoreType::fun(arr(Mode::Writable), CoreType::Unit),
        "wordarray_length" => CoreType::fun(arr(Mode::ReadOnly), u32t),
        "wordarray_get" => CoreType::fun(
            ub_rec(vec![("p1", arr(Mode::ReadOnly)), ("p2", u32t)]),
            CoreType::Variant(vec![
                ("Err".into(), CoreType::Unit),
                ("Ok".into(), CoreType::Var(a.clone())),
            ]),
        ),
        "wordarray_put" => CoreType::fun(
            ub_rec(vec![
                ("p1", arr(Mode::Writable)),
                ("p2", u32t),
                ("p3", CoreType::Var(a.clone())),
            ]),
            CoreType::Variant(vec![
                ("Err".into(), arr(Mode::Writable)),
                ("Ok".into(), arr(Mode::Writable)),
            ]),
        ),
        "wordarray_map_no_break" => {
            let b = decl.binders.get(1)?.0.clone();
            let step = ub_rec(vec![("p1", CoreType::Var(a.clone())), ("p2", CoreType::Var(b.clone()))]);
            CoreType::fun(
                ub_rec(vec![
                    ("p1", arr(Mode::Writable)),
                    ("p2", CoreType::fun(step.clone(), step)),
                    ("p3", CoreType::Var(b.clone())),
                ]),
                ub_rec(vec![("p1", arr(Mode::Writable)), ("p2", CoreType::Var(b))]),
            )
        }
        _ => return None,
    };
    let nbinders = if which == "wordarray_map_no_break" { 2 } else { 1 };
    let mut binders = decl.binders.clone();
    binders.truncate(nbinders);
    Some(PolyType { binders, body })
}

fn validate_wordarray_decl(decl: &AbsFunDecl) -> Result<(), RegistryError> {
    let nbinders = if decl.name == "wordarray_map_no_break" { 2 } else { 1 };
    if decl.signature.binders.len() != nbinders {
        return Err(RegistryError::BadSignature {
            name: decl.name.clone(),
            reason: format!("expected {nbinders} type binder(s)"),
        });
    }
    if decl.signature.binders[0].1 != Kind::ALL {
        return Err(RegistryError::BadSignature {
            name: decl.name.clone(),
            reason: "element binder must have kind (D S E)".to_string(),
        });
    }
    let expect = expected_wordarray_sig(&decl.signature, &decl.name).unwrap();
    if expect.body != decl.signature.body {
        return Err(RegistryError::BadSignature {
            name: decl.name.clone(),
            reason: format!("expected signature {}", expect.body),
        });
    }
    Ok(())
}

fn get_wordarray_v(v: &VValue) -> Result<Vec<VValue>, EvalError> {
    match v {
        VValue::Abstract { tag, items } if tag == WORDARRAY => Ok(items.clone()),
        _ => Err(stuck("expected a wordarray value")),
    }
}

fn wordarray_fn_spec(decl: &AbsFunDecl, base: &str, fixed: Option<Vec<CoreType>>) -> AbstractFnSpec {
    let name = decl.name.clone();
    let fixed_v = fixed.clone();
    let impl_v: ImplV = match base {
        "wordarray_create" => Arc::new(move |_cb, targs, arg| {
            let n = expect_u32(arg.as_lit())?;
            let elem = fixed_v.as_deref().unwrap_or(targs)[0].clone();
            // element kinds exclude pointers, so the registry-free zero
            // is adequate here
            let zero = zero_vvalue(&Registry::new(), &elem);
            Ok(VValue::Abstract { tag: WORDARRAY.into(), items: vec![zero; n] })
        }),
        "wordarray_free" => Arc::new(|_cb, _targs, _arg| Ok(VValue::Unit)),
        "wordarray_length" => Arc::new(|_cb, _targs, arg| {
            let items = get_wordarray_v(&arg)?;
            Ok(VValue::lit(items.len() as u64, PrimType::U32))
        }),
        "wordarray_get" => Arc::new(|_cb, _targs, arg| {
            let mut parts = rec_fields_v(arg, 2)?;
            let idx = expect_u32(parts[1].as_lit())?;
            let items = get_wordarray_v(&parts.remove(0))?;
            Ok(match items.get(idx) {
                Some(v) => VValue::Con("Ok".into(), Box::new(v.clone())),
                None => VValue::Con("Err".into(), Box::new(VValue::Unit)),
            })
        }),
        "wordarray_put" => Arc::new(|_cb, _targs, arg| {
            let mut parts = rec_fields_v(arg, 3)?;
            let val = parts.pop().unwrap();
            let idx = expect_u32(parts.pop().unwrap().as_lit())?;
            let mut items = get_wordarray_v(&parts.pop().unwrap())?;
            Ok(if idx < items.len() {
                items[idx] = val;
                VValue::Con(
                    "Ok".into(),
                    Box::new(VValue::Abstract { tag: WORDARRAY.into(), items }),
                )
            } else {
                VValue::Con(
                    "Err".into(),
                    Box::new(VValue::Abstract { tag: WORDARRAY.into(), items }),
                )
            })
        }),
        "wordarray_map_no_break" => Arc::new(|cb, _targs, arg| {
            let mut parts = rec_fields_v(arg, 3)?;
            let mut acc = parts.pop().unwrap();
            let f = parts.pop().unwrap();
            let mut items = get_wordarray_v(&parts.pop().unwrap())?;
            for item in items.iter_mut() {
                let step = VValue::Record(vec![
                    ("p1".into(), item.clone()),
                    ("p2".into(), acc.clone()),
                ]);
                let out = cb.call(&f, step)?;
                let mut outs = rec_fields_v(out, 2)?;
                acc = outs.pop().unwrap();
                *item = outs.pop().unwrap();
            }
            Ok(VValue::Record(vec![
                ("p1".into(), VValue::Abstract { tag: WORDARRAY.into(), items }),
                ("p2".into(), acc),
            ]))
        }),
        _ => unreachable!(),
    };

    let read_arr = |store: &Store, v: &UValue| -> Result<(crate::sem_update::Pointer, Vec<UValue>), EvalError> {
        match v {
            UValue::Ptr(p) => match store.get(*p) {
                Some(UValue::Abstract { tag, items, .. }) if tag == WORDARRAY => {
                    Ok((*p, items.clone()))
                }
                Some(_) => Err(stuck("pointer target is not a wordarray")),
                None => Err(EvalError::DanglingPointer { ptr: *p }),
            },
            _ => Err(stuck("expected a wordarray pointer")),
        }
    };

    let fixed_u = fixed;
    let impl_u: ImplU = match base {
        "wordarray_create" => Arc::new(move |_cb, targs, arg, store| {
            let n = expect_u32(arg.as_lit())?;
            let elem = fixed_u.as_deref().unwrap_or(targs)[0].clone();
            let zero = zero_uvalue(&Registry::new(), &elem);
            let p = store.alloc(UValue::Abstract {
                tag: WORDARRAY.into(),
                items: vec![zero; n],
                owned: BTreeSet::new(),
            });
            Ok(UValue::Ptr(p))
        }),
        "wordarray_free" => Arc::new(|_cb, _targs, arg, store| match arg {
            UValue::Ptr(p) => {
                store.free(p)?;
                Ok(UValue::Unit)
            }
            _ => Err(stuck("expected a wordarray pointer")),
        }),
        "wordarray_length" => {
            let read = read_arr;
            Arc::new(move |_cb, _targs, arg, store| {
                let (_, items) = read(store, &arg)?;
                Ok(UValue::lit(items.len() as u64, PrimType::U32))
            })
        }
        "wordarray_get" => {
            let read = read_arr;
            Arc::new(move |_cb, _targs, arg, store| {
                let mut parts = rec_fields_u(arg, 2)?;
                let idx = expect_u32(parts[1].as_lit())?;
                let (_, items) = read(store, &parts.remove(0))?;
                Ok(match items.get(idx) {
                    Some(v) => UValue::Con("Ok".into(), Box::new(v.clone())),
                    None => UValue::Con("Err".into(), Box::new(UValue::Unit)),
                })
            })
        }
        "wordarray_put" => {
            let read = read_arr;
            Arc::new(move |_cb, _targs, arg, store| {
                let mut parts = rec_fields_u(arg, 3)?;
                let val = parts.pop().unwrap();
                let idx = expect_u32(parts.pop().unwrap().as_lit())?;
                let (p, items) = read(store, &parts.pop().unwrap())?;
                Ok(if idx < items.len() {
                    if let Some(UValue::Abstract { items, .. }) = store.get_mut(p) {
                        items[idx] = val;
                    }
                    UValue::Con("Ok".into(), Box::new(UValue::Ptr(p)))
                } else {
                    UValue::Con("Err".into(), Box::new(UValue::Ptr(p)))
                })
            })
        }
        "wordarray_map_no_break" => {
            let read = read_arr;
            Arc::new(move |cb, _targs, arg, store| {
                let mut parts = rec_fields_u(arg, 3)?;
                let mut acc = parts.pop().unwrap();
                let f = parts.pop().unwrap();
                let (p, items) = read(store, &parts.pop().unwrap())?;
                for (i, item) in items.into_iter().enumerate() {
                    let step = UValue::Record(vec![
                        ("p1".into(), item),
                        ("p2".into(), acc.clone()),
                    ]);
                    let out = cb.call(&f, step, store)?;
                    let mut outs = rec_fields_u(out, 2)?;
                    acc = outs.pop().unwrap();
                    let newitem = outs.pop().unwrap();
                    match store.get_mut(p) {
                        Some(UValue::Abstract { items, .. }) => items[i] = newitem,
                        _ => return Err(EvalError::DanglingPointer { ptr: p }),
                    }
                }
                Ok(UValue::Record(vec![
                    ("p1".into(), UValue::Ptr(p)),
                    ("p2".into(), acc),
                ]))
            })
        }
        _ => unreachable!(),
    };

    AbstractFnSpec { name, signature: decl.signature.clone(), impl_v, impl_u }
}

fn is_wordarray_builtin(name: &str) -> bool {
    matches!(
        name,
        "wordarray_create"
            | "wordarray_free"
            | "wordarray_length"
            | "wordarray_get"
            | "wordarray_put"
            | "wordarray_map_no_break"
    )
}

/// Strip a monomorphisation suffix (`_<digits>`), yielding the base name.
pub fn strip_mono_suffix(name: &str) -> &str {
    match name.rsplit_once('_') {
        Some((base, digits))
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) =>
        {
            base
        }
        _ => name,
    }
}

/// Match a ground (monomorphised) instance of a word-array builtin,
/// extracting the element type from the declared signature. Returns the
/// base builtin name and the fixed type arguments.
fn match_ground_wordarray(decl: &AbsFunDecl) -> Result<Option<(String, Vec<CoreType>)>, RegistryError> {
    let base = strip_mono_suffix(&decl.name);
    if !is_wordarray_builtin(base) || !decl.signature.binders.is_empty() {
        return Ok(None);
    }
    let bad = |reason: String| RegistryError::BadSignature { name: decl.name.clone(), reason };
    let (arg, res) = decl.signature.arg_result();
    let elem_of = |t: &CoreType| -> Option<CoreType> {
        match t {
            CoreType::Abstract { name, args, .. } if name == WORDARRAY && args.len() == 1 => {
                Some(args[0].clone())
            }
            _ => None,
        }
    };
    let field_ty = |t: &CoreType, i: usize| -> Option<CoreType> {
        match t {
            CoreType::Record { fields, mode: Mode::Unboxed } => {
                fields.get(i).map(|f| f.ty.clone())
            }
            _ => None,
        }
    };
    let targs = match base {
        "wordarray_create" => vec![elem_of(res)],
        "wordarray_free" | "wordarray_length" => vec![elem_of(arg)],
        "wordarray_get" | "wordarray_put" => vec![field_ty(arg, 0).as_ref().and_then(elem_of)],
        "wordarray_map_no_break" => vec![
            field_ty(arg, 0).as_ref().and_then(elem_of),
            field_ty(arg, 2),
        ],
        _ => return Ok(None),
    };
    let targs: Vec<CoreType> = match targs.into_iter().collect::<Option<Vec<_>>>() {
        Some(ts) if ts.iter().all(|t| t.is_ground()) => ts,
        _ => return Err(bad("cannot extract ground element type".to_string())),
    };
    // rebuild the canonical instantiated signature and compare shapes
    let binders: Vec<(String, Kind)> = match base {
        "wordarray_map_no_break" => {
            vec![("a".to_string(), Kind::ALL), ("b".to_string(), Kind::NONE)]
        }
        _ => vec![("a".to_string(), Kind::ALL)],
    };
    let canonical = PolyType { binders, body: CoreType::Unit };
    let template = expected_wordarray_sig(&canonical, base)
        .ok_or_else(|| bad("no canonical signature".to_string()))?;
    let subst = crate::kinding::TypeSubst::new(
        template
            .binders
            .iter()
            .map(|(n, _)| n.clone())
            .zip(targs.iter().cloned()),
    );
    let expect = crate::kinding::subst_type(&template.body, &subst);
    if expect != decl.signature.body {
        return Err(bad(format!("expected instantiated signature {expect}")));
    }
    Ok(Some((base.to_string(), targs)))
}

fn validate_alloc_decl(decl: &AbsFunDecl) -> Result<Vec<FieldDecl>, RegistryError> {
    let bad = |reason: &str| RegistryError::BadSignature {
        name: decl.name.clone(),
        reason: reason.to_string(),
    };
    if !decl.signature.binders.is_empty() {
        return Err(bad("allocators must be monomorphic"));
    }
    let (arg, res) = decl.signature.arg_result();
    if *arg != CoreType::Unit {
        return Err(bad("allocators take unit"));
    }
    match res {
        CoreType::Record { fields, mode: Mode::Writable } => {
            if fields.iter().any(|f| !f.taken) {
                return Err(bad("allocators must return a record with all fields taken"));
            }
            Ok(fields.clone())
        }
        _ => Err(bad("allocators must return a writable record")),
    }
}

fn validate_free_decl(decl: &AbsFunDecl) -> Result<(), RegistryError> {
    let bad = |reason: &str| RegistryError::BadSignature {
        name: decl.name.clone(),
        reason: reason.to_string(),
    };
    if !decl.signature.binders.is_empty() {
        return Err(bad("free functions must be monomorphic"));
    }
    let (arg, res) = decl.signature.arg_result();
    if *res != CoreType::Unit {
        return Err(bad("free functions return unit"));
    }
    match arg {
        CoreType::Record { fields, mode: Mode::Writable } => {
            let delta = KindContext::empty();
            for f in fields {
                if !f.taken {
                    let discardable = kind_check(&delta, &f.ty, Kind::D)
                        .map_err(|_| bad("free argument type must be ground"))?;
                    if !discardable {
                        return Err(bad(
                            "free would leak a live linear field; take it out first",
                        ));
                    }
                }
            }
            Ok(())
        }
        _ => Err(bad("free functions take a writable record")),
    }
}

/// Build the built-in registry for a program: the word-array library for
/// any of its functions the program declares, plus one allocator or free
/// function per `alloc_*` / `free_*` declaration, synthesised from the
/// declared record type.
pub fn builtin_library(prog: &Program) -> Result<Registry, RegistryError> {
    let mut reg = Registry::new();
    reg.register_type(wordarray_type_spec())?;
    for decl in prog.abs_decls() {
        if is_wordarray_builtin(&decl.name) {
            validate_wordarray_decl(decl)?;
            let base = decl.name.clone();
            reg.register_fn(wordarray_fn_spec(decl, &base, None))?;
        } else if let Some((base, targs)) = match_ground_wordarray(decl)? {
            reg.register_fn(wordarray_fn_spec(decl, &base, Some(targs)))?;
        } else if decl.name.starts_with("alloc_") {
            let fields = validate_alloc_decl(decl)?;
            let sig = decl.signature.clone();
            let fields_v = fields.clone();
            let name = decl.name.clone();
            reg.register_fn(AbstractFnSpec {
                name: name.clone(),
                signature: sig,
                impl_v: Arc::new(move |_cb, _targs, _arg| {
                    Ok(VValue::Record(
                        fields_v
                            .iter()
                            .map(|f| (f.name.clone(), VValue::Unit))
                            .collect(),
                    ))
                }),
                impl_u: Arc::new(move |_cb, _targs, _arg, store| {
                    let rec = UValue::Record(
                        fields.iter().map(|f| (f.name.clone(), UValue::Unit)).collect(),
                    );
                    Ok(UValue::Ptr(store.alloc(rec)))
                }),
            })?;
        } else if decl.name.starts_with("free_") {
            validate_free_decl(decl)?;
            reg.register_fn(AbstractFnSpec {
                name: decl.name.clone(),
                signature: decl.signature.clone(),
                impl_v: Arc::new(|_cb, _targs, _arg| Ok(VValue::Unit)),
                impl_u: Arc::new(|_cb, _targs, arg, store| match arg {
                    UValue::Ptr(p) => {
                        store.free(p)?;
                        Ok(UValue::Unit)
                    }
                    _ => Err(stuck("free expects a pointer")),
                }),
            })?;
        }
    }
    Ok(reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;
    use crate::sem_update::{apply_fn_u, Store};
    use crate::sem_value::{apply_fn_v, VValue, DEFAULT_FUEL};

    #[test]
    fn register_lookup_and_duplicates() {
        let mut reg = Registry::new();
        reg.register_type(wordarray_type_spec()).unwrap();
        assert!(reg.lookup_type(WORDARRAY).is_some());
        assert_eq!(
            reg.register_type(wordarray_type_spec()),
            Err(RegistryError::DuplicateRegistration(WORDARRAY.into()))
        );
        assert!(reg.lookup_fn("missing").is_none());
    }

    const WA_DECLS: &str = "
      (absdef wordarray_create (forall (a (D S E))) (fn (n u32) (abs wordarray wr a)))
      (absdef wordarray_free (forall (a (D S E))) (fn (x (abs wordarray wr a)) unit))
      (absdef wordarray_get (forall (a (D S E)))
        (fn (x (tuple (abs wordarray ro a) u32)) (variant (Err unit) (Ok a))))
      (absdef wordarray_put (forall (a (D S E)))
        (fn (x (tuple (abs wordarray wr a) u32 a))
          (variant (Err (abs wordarray wr a)) (Ok (abs wordarray wr a)))))
      (absdef wordarray_length (forall (a (D S E))) (fn (x (abs wordarray ro a)) u32))
      (absdef wordarray_map_no_break (forall (a (D S E)) (b ()))
        (fn (x (tuple (abs wordarray wr a) (fun (tuple a b) (tuple a b)) b))
          (tuple (abs wordarray wr a) b)))
    ";

    #[test]
    fn create_put_get_agree_in_both_semantics() {
        let src = format!(
            "{WA_DECLS}
             (def main (forall) (fn (u unit) (tuple u8 (abs wordarray wr u8))
               (let arr (app (funref wordarray_create u8) (cast u32 3))
                 (case (app (funref wordarray_put u8) (tuple arr (cast u32 1) 7))
                   Ok good
                     (letbang (good) out
                       (case (app (funref wordarray_get u8) (tuple good (cast u32 1)))
                         Ok v v
                         e2 (let z (esac e2) 0))
                       (tuple out good))
                   failed (let bad (esac failed) (tuple 0 bad))))))"
        );
        let prog = parse_program(&src).unwrap();
        crate::typecheck::check_program(&prog).unwrap();
        let reg = builtin_library(&prog).unwrap();

        let v = apply_fn_v(&prog, &reg, "main", &[], VValue::Unit, DEFAULT_FUEL).unwrap();
        match &v {
            VValue::Record(fields) => {
                assert_eq!(fields[0].1, VValue::lit(7, PrimType::U8));
                assert_eq!(
                    fields[1].1,
                    VValue::Abstract {
                        tag: WORDARRAY.into(),
                        items: vec![
                            VValue::lit(0, PrimType::U8),
                            VValue::lit(7, PrimType::U8),
                            VValue::lit(0, PrimType::U8),
                        ],
                    }
                );
            }
            other => panic!("unexpected result {other:?}"),
        }

        let (u, store) =
            apply_fn_u(&prog, &reg, "main", &[], UValue::Unit, Store::new(), DEFAULT_FUEL)
                .unwrap();
        match &u {
            UValue::Record(fields) => {
                assert_eq!(fields[0].1, UValue::lit(7, PrimType::U8));
                match &fields[1].1 {
                    UValue::Ptr(p) => match store.get(*p) {
                        Some(UValue::Abstract { items, .. }) => {
                            assert_eq!(items[1], UValue::lit(7, PrimType::U8));
                        }
                        other => panic!("unexpected store entry {other:?}"),
                    },
                    other => panic!("expected a pointer, got {other:?}"),
                }
            }
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn map_no_break_applies_successor_in_both_semantics() {
        let src = format!(
            "{WA_DECLS}
             (def succ (forall) (fn (s (tuple u8 unit)) (tuple u8 unit)
               (take s1 p1 x s (take s2 p2 u s1
                 (let z (member s2 p1) (let z2 (member s2 p2) (tuple (op + x 1) u)))))))
             (def main (forall) (fn (u unit) (tuple (abs wordarray wr u8) unit)
               (let arr (app (funref wordarray_create u8) (cast u32 3))
                 (case (app (funref wordarray_put u8) (tuple arr (cast u32 0) 1)) Ok a1
                 (case (app (funref wordarray_put u8) (tuple a1 (cast u32 1) 2)) Ok a2
                 (case (app (funref wordarray_put u8) (tuple a2 (cast u32 2) 3)) Ok a3
                   (app (funref wordarray_map_no_break u8 unit)
                        (tuple a3 (funref succ) unit))
                   e3 (let b3 (esac e3) (tuple b3 unit)))
                   e2 (let b2 (esac e2) (tuple b2 unit)))
                   e1 (let b1 (esac e1) (tuple b1 unit))))))"
        );
        let prog = parse_program(&src).unwrap();
        crate::typecheck::check_program(&prog).unwrap();
        let reg = builtin_library(&prog).unwrap();

        let v = apply_fn_v(&prog, &reg, "main", &[], VValue::Unit, DEFAULT_FUEL).unwrap();
        match &v {
            VValue::Record(fields) => assert_eq!(
                fields[0].1,
                VValue::Abstract {
                    tag: WORDARRAY.into(),
                    items: vec![
                        VValue::lit(2, PrimType::U8),
                        VValue::lit(3, PrimType::U8),
                        VValue::lit(4, PrimType::U8),
                    ],
                }
            ),
            other => panic!("unexpected result {other:?}"),
        }

        let (u, store) =
            apply_fn_u(&prog, &reg, "main", &[], UValue::Unit, Store::new(), DEFAULT_FUEL)
                .unwrap();
        match &u {
            UValue::Record(fields) => match &fields[0].1 {
                UValue::Ptr(p) => match store.get(*p) {
                    Some(UValue::Abstract { items, .. }) => assert_eq!(
                        items,
                        &vec![
                            UValue::lit(2, PrimType::U8),
                            UValue::lit(3, PrimType::U8),
                            UValue::lit(4, PrimType::U8),
                        ]
                    ),
                    other => panic!("unexpected store entry {other:?}"),
                },
                other => panic!("expected pointer, got {other:?}"),
            },
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn allocators_are_synthesised_from_declarations() {
        let src = "
          (absdef alloc_pair (forall) (fn (u unit) (rec wr (x u8 taken) (y u8 taken))))
          (absdef free_pair (forall) (fn (r (rec wr (x u8) (y u8 taken))) unit))
          (def main (forall) (fn (u unit) u8
            (let r (app (funref alloc_pair) unit)
              (let r2 (put r x 3)
                (take r3 x v r2
                  (let z (app (funref free_pair) r3) v))))))";
        let prog = parse_program(src).unwrap();
        crate::typecheck::check_program(&prog).unwrap();
        let reg = builtin_library(&prog).unwrap();
        let v = apply_fn_v(&prog, &reg, "main", &[], VValue::Unit, DEFAULT_FUEL).unwrap();
        assert_eq!(v, VValue::lit(3, PrimType::U8));
        let (u, store) =
            apply_fn_u(&prog, &reg, "main", &[], UValue::Unit, Store::new(), DEFAULT_FUEL)
                .unwrap();
        assert_eq!(u, UValue::lit(3, PrimType::U8));
        assert!(store.is_empty(), "free must remove the allocation");
    }

    #[test]
    fn allocated_record_corresponds_at_all_taken_type() {
        use crate::refine::corr_value;
        let src = "(absdef alloc_pair (forall) (fn (u unit) (rec wr (x u8 taken) (y u8 taken))))
             (def main (forall) (fn (u unit) (rec wr (x u8 taken) (y u8 taken))
               (app (funref alloc_pair) unit)))";
        let prog = parse_program(src).unwrap();
        crate::typecheck::check_program(&prog).unwrap();
        let reg = builtin_library(&prog).unwrap();
        let (u, store) =
            apply_fn_u(&prog, &reg, "main", &[], UValue::Unit, Store::new(), DEFAULT_FUEL)
                .unwrap();
        let v = apply_fn_v(&prog, &reg, "main", &[], VValue::Unit, DEFAULT_FUEL).unwrap();
        let ty = crate::parse::parse_type("(rec wr (x u8 taken) (y u8 taken))").unwrap();
        let rep = corr_value(&prog, &reg, &u, &store, &v, &ty);
        assert!(rep.ok, "{:?}", rep.failure);
        assert!(rep.sets.ro.is_empty());
        assert_eq!(rep.sets.rw.len(), 1, "allocation owns exactly its own box");
    }

    #[test]
    fn bad_builtin_signatures_rejected() {
        let prog = parse_program(
            "(absdef alloc_x (forall) (fn (u unit) (rec wr (x u8))))",
        )
        .unwrap();
        assert!(matches!(
            builtin_library(&prog),
            Err(RegistryError::BadSignature { .. })
        ));
        let prog = parse_program(
            "(absdef wordarray_create (forall (a (D))) (fn (n u32) (abs wordarray wr a)))",
        )
        .unwrap();
        assert!(matches!(
            builtin_library(&prog),
            Err(RegistryError::BadSignature { .. })
        ));
    }
}
