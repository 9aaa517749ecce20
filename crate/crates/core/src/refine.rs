//! The correspondence relation between update- and value-semantics
//! results, the framing discipline on stores, and a dynamic refinement
//! oracle.
//!
//! The oracle runs both interpreters on the same function and, alongside,
//! replays the evaluation in lockstep over the typing derivation. At every
//! derivation node it checks that the environments correspond, that each
//! recorded weakening and split respects environment typing (`r' ⊆ r`,
//! disjoint writable sets), that observed bindings satisfy the bang
//! property, that every abstract call satisfies its contract, and that the
//! node's result corresponds at the node's type with a clean frame.

use crate::ast::*;
use crate::diagnostics::Diagnostic;
use crate::ffi::{CorrCtx, Registry};
use crate::kinding::{bang_type, KindContext};
use crate::ops::{apply_primop, OpError};
use crate::sem_update::{Pointer, Store, UEnv, UInterp, UValue};
use crate::sem_value::{VEnv, VInterp, VValue};
use crate::typecheck::{check_program, Checker, TypeContext, TypingTree};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

/// Read-only and writable pointer sets collected by the correspondence
/// traversal. Disjointness of the two is part of every accepted report.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PtrSets {
    pub ro: BTreeSet<Pointer>,
    pub rw: BTreeSet<Pointer>,
}

impl PtrSets {
    pub fn is_empty(&self) -> bool {
        self.ro.is_empty() && self.rw.is_empty()
    }

    pub fn all(&self) -> BTreeSet<Pointer> {
        self.ro.union(&self.rw).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrFailure {
    pub rule: String,
    pub path: String,
    pub reason: String,
}

impl fmt::Display for CorrFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] at `{}`: {}", self.rule, self.path, self.reason)
    }
}

/// Outcome of one correspondence check. `ok` implies no failure recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrReport {
    pub ok: bool,
    pub sets: PtrSets,
    pub failure: Option<CorrFailure>,
}

impl CorrReport {
    pub fn ok(sets: PtrSets) -> CorrReport {
        CorrReport { ok: true, sets, failure: None }
    }

    pub fn fail(rule: &str, path: &str, reason: impl Into<String>) -> CorrReport {
        CorrReport {
            ok: false,
            sets: PtrSets::default(),
            failure: Some(CorrFailure {
                rule: rule.to_string(),
                path: path.to_string(),
                reason: reason.into(),
            }),
        }
    }

    /// Prefix the failure path with a step into the value.
    pub fn nest(mut self, prefix: &str) -> CorrReport {
        if let Some(f) = &mut self.failure {
            f.path = if f.path.is_empty() {
                prefix.to_string()
            } else {
                format!("{prefix}.{}", f.path)
            };
        }
        self
    }
}

struct Relator<'a> {
    prog: &'a Program,
    reg: &'a Registry,
    typing_memo: std::cell::RefCell<HashMap<(String, Expr, CoreType, CoreType), bool>>,
}

impl<'a> Relator<'a> {
    fn new(prog: &'a Program, reg: &'a Registry) -> Relator<'a> {
        Relator { prog, reg, typing_memo: Default::default() }
    }

    fn body_well_typed(&self, param: &str, body: &Expr, arg: &CoreType, res: &CoreType) -> bool {
        let key = (param.to_string(), body.clone(), arg.clone(), res.clone());
        if let Some(&b) = self.typing_memo.borrow().get(&key) {
            return b;
        }
        let delta = KindContext::empty();
        let gamma = TypeContext::new(vec![(param.to_string(), arg.clone())]);
        let ok = Checker::new(self.prog)
            .check_expr(&delta, &gamma, body, Some(res))
            .is_ok();
        self.typing_memo.borrow_mut().insert(key, ok);
        ok
    }

    /// Fold a record's fields with the list relation: taken slots are
    /// skipped, live slots relate recursively, and writable sets must be
    /// pairwise disjoint from everything else.
    fn relate_fields(
        &self,
        us: Option<&[(String, UValue)]>,
        store: &Store,
        vs: Option<&[(String, VValue)]>,
        fields: &[FieldDecl],
        path: &str,
    ) -> CorrReport {
        if let Some(us) = us {
            if us.len() != fields.len()
                || us.iter().zip(fields).any(|((n, _), f)| n != &f.name)
            {
                return CorrReport::fail("RL", path, "update record fields do not match type");
            }
        }
        if let Some(vs) = vs {
            if vs.len() != fields.len()
                || vs.iter().zip(fields).any(|((n, _), f)| n != &f.name)
            {
                return CorrReport::fail("RL", path, "value record fields do not match type");
            }
        }
        let mut acc = PtrSets::default();
        for (i, f) in fields.iter().enumerate() {
            if f.taken {
                continue; // taken slots hold values but are not related
            }
            let fpath = if path.is_empty() {
                f.name.clone()
            } else {
                format!("{path}.{}", f.name)
            };
            let rep = self.relate(
                us.map(|u| &u[i].1),
                store,
                vs.map(|v| &v[i].1),
                &f.ty,
                &fpath,
            );
            if !rep.ok {
                return rep;
            }
            let new = rep.sets;
            let acc_all = acc.all();
            let new_all = new.all();
            if new.rw.intersection(&acc_all).next().is_some()
                || acc.rw.intersection(&new_all).next().is_some()
            {
                return CorrReport::fail(
                    "RL2",
                    &fpath,
                    "writable pointer aliases a sibling field (AliasViolation)",
                );
            }
            acc.ro.extend(new.ro);
            acc.rw.extend(new.rw);
        }
        CorrReport::ok(acc)
    }

    fn relate(
        &self,
        u: Option<&UValue>,
        store: &Store,
        v: Option<&VValue>,
        ty: &CoreType,
        path: &str,
    ) -> CorrReport {
        match ty {
            CoreType::Prim(t) => {
                let ul = match u {
                    Some(UValue::Lit(l)) => Some(*l),
                    Some(_) => {
                        return CorrReport::fail("RLit", path, "update value is not a literal")
                    }
                    None => None,
                };
                let vl = match v {
                    Some(VValue::Lit(l)) => Some(*l),
                    Some(_) => return CorrReport::fail("RLit", path, "value is not a literal"),
                    None => None,
                };
                for l in [ul, vl].into_iter().flatten() {
                    if l.ty != *t || !l.in_range() {
                        return CorrReport::fail(
                            "RLit",
                            path,
                            format!("literal {} does not inhabit {}", l.value, t),
                        );
                    }
                }
                if let (Some(a), Some(b)) = (ul, vl) {
                    if a != b {
                        return CorrReport::fail("RLit", path, "literals differ across semantics");
                    }
                }
                CorrReport::ok(PtrSets::default())
            }
            CoreType::Unit => {
                if matches!(u, Some(x) if !matches!(x, UValue::Unit))
                    || matches!(v, Some(x) if !matches!(x, VValue::Unit))
                {
                    return CorrReport::fail("RUnit", path, "expected a unit value");
                }
                CorrReport::ok(PtrSets::default())
            }
            CoreType::Fun(a, r) => {
                match (u, v) {
                    (Some(UValue::Fun { param: up, body: ub }), Some(VValue::Fun { param: vp, body: vb })) => {
                        if up != vp || ub != vb {
                            return CorrReport::fail(
                                "RFunC",
                                path,
                                "function values differ across semantics",
                            );
                        }
                    }
                    (Some(UValue::AbsFun { name: un, typeargs: ut }), Some(VValue::AbsFun { name: vn, typeargs: vt })) => {
                        if un != vn || ut != vt {
                            return CorrReport::fail(
                                "RFunA",
                                path,
                                "abstract function values differ across semantics",
                            );
                        }
                    }
                    (Some(UValue::Fun { .. }), None)
                    | (Some(UValue::AbsFun { .. }), None)
                    | (None, Some(VValue::Fun { .. }))
                    | (None, Some(VValue::AbsFun { .. }))
                    | (None, None) => {}
                    _ => {
                        return CorrReport::fail("RFun", path, "expected a function value");
                    }
                }
                // typing premises, one per side present
                let check_fun = |param: &str, body: &Expr| -> bool {
                    self.body_well_typed(param, body, a, r)
                };
                let check_abs = |name: &str, targs: &[CoreType]| -> Result<(), String> {
                    match self.prog.lookup(name) {
                        Some(Def::Abstract(d)) => {
                            if d.signature.binders.len() != targs.len() {
                                return Err(format!(
                                    "abstract `{name}` arity mismatch in value"
                                ));
                            }
                            let subst = crate::kinding::TypeSubst::new(
                                d.signature
                                    .binders
                                    .iter()
                                    .map(|(n, _)| n.clone())
                                    .zip(targs.iter().cloned()),
                            );
                            let inst = crate::kinding::subst_type(&d.signature.body, &subst);
                            if !type_equal(&inst, &CoreType::fun((**a).clone(), (**r).clone())) {
                                return Err(format!(
                                    "abstract `{name}` instantiates to {inst}, expected {ty}"
                                ));
                            }
                            Ok(())
                        }
                        _ => Err(format!("`{name}` is not an abstract declaration")),
                    }
                };
                let side = u
                    .map(|u| match u {
                        UValue::Fun { param, body } => (Some((param.clone(), body.clone())), None),
                        UValue::AbsFun { name, typeargs } => {
                            (None, Some((name.clone(), typeargs.clone())))
                        }
                        _ => (None, None),
                    })
                    .or_else(|| {
                        v.map(|v| match v {
                            VValue::Fun { param, body } => {
                                (Some((param.clone(), body.clone())), None)
                            }
                            VValue::AbsFun { name, typeargs } => {
                                (None, Some((name.clone(), typeargs.clone())))
                            }
                            _ => (None, None),
                        })
                    });
                match side {
                    Some((Some((param, body)), _)) => {
                        if !check_fun(&param, &body) {
                            return CorrReport::fail(
                                "RFunC",
                                path,
                                "stored function body fails its typing premise",
                            );
                        }
                    }
                    Some((_, Some((name, targs)))) => {
                        if let Err(reason) = check_abs(&name, &targs) {
                            return CorrReport::fail("RFunA", path, reason);
                        }
                    }
                    Some((None, None)) => {
                        return CorrReport::fail("RFun", path, "expected a function value")
                    }
                    None => {}
                }
                CorrReport::ok(PtrSets::default())
            }
            CoreType::Variant(alts) => {
                let uc = match u {
                    Some(UValue::Con(c, p)) => Some((c.clone(), (**p).clone())),
                    Some(_) => {
                        return CorrReport::fail("RVariant", path, "update value is not a variant")
                    }
                    None => None,
                };
                let vc = match v {
                    Some(VValue::Con(c, p)) => Some((c.clone(), (**p).clone())),
                    Some(_) => return CorrReport::fail("RVariant", path, "value is not a variant"),
                    None => None,
                };
                let ctor = match (&uc, &vc) {
                    (Some((a, _)), Some((b, _))) if a != b => {
                        return CorrReport::fail(
                            "RVariant",
                            path,
                            "constructors differ across semantics",
                        )
                    }
                    (Some((a, _)), _) => a.clone(),
                    (_, Some((b, _))) => b.clone(),
                    (None, None) => return CorrReport::ok(PtrSets::default()),
                };
                let payload_ty = match alts.iter().find(|(c, _)| c == &ctor) {
                    Some((_, t)) => t,
                    None => {
                        return CorrReport::fail(
                            "RVariant",
                            path,
                            format!("constructor `{ctor}` is not among the alternatives"),
                        )
                    }
                };
                self.relate(
                    uc.as_ref().map(|(_, p)| p),
                    store,
                    vc.as_ref().map(|(_, p)| p),
                    payload_ty,
                    &format!("{path}<{ctor}>"),
                )
            }
            CoreType::Record { fields, mode: Mode::Unboxed } => {
                let us = match u {
                    Some(UValue::Record(fs)) => Some(fs.as_slice()),
                    Some(_) => {
                        return CorrReport::fail(
                            "RRecU",
                            path,
                            "update value is not an unboxed record",
                        )
                    }
                    None => None,
                };
                let vs = match v {
                    Some(VValue::Record(fs)) => Some(fs.as_slice()),
                    Some(_) => {
                        return CorrReport::fail("RRecU", path, "value is not a record")
                    }
                    None => None,
                };
                self.relate_fields(us, store, vs, fields, path)
            }
            CoreType::Record { fields, mode } => {
                // boxed record: the update side is a pointer into the store
                let vs = match v {
                    Some(VValue::Record(fs)) => Some(fs.as_slice()),
                    Some(_) => {
                        return CorrReport::fail("RRec", path, "value is not a record")
                    }
                    None => None,
                };
                let (p, us_owned);
                match u {
                    Some(UValue::Ptr(q)) => {
                        p = Some(*q);
                        match store.get(*q) {
                            Some(UValue::Record(fs)) => us_owned = Some(fs.clone()),
                            Some(_) => {
                                return CorrReport::fail(
                                    "RRec",
                                    path,
                                    "pointer target is not a record",
                                )
                            }
                            None => {
                                return CorrReport::fail(
                                    "RRec",
                                    path,
                                    format!("dangling pointer {} (DanglingPointer)", q.0),
                                )
                            }
                        }
                    }
                    Some(_) => {
                        return CorrReport::fail(
                            "RRec",
                            path,
                            "update value of boxed record type is not a pointer",
                        )
                    }
                    None => {
                        p = None;
                        us_owned = None;
                    }
                }
                let rep =
                    self.relate_fields(us_owned.as_deref(), store, vs, fields, path);
                if !rep.ok {
                    return rep;
                }
                let mut sets = rep.sets;
                match mode {
                    Mode::Writable => {
                        if let Some(p) = p {
                            if sets.ro.contains(&p) || sets.rw.contains(&p) {
                                return CorrReport::fail(
                                    "RRecW",
                                    path,
                                    "record box aliases its own contents (AliasViolation)",
                                );
                            }
                            sets.rw.insert(p);
                        }
                        CorrReport::ok(sets)
                    }
                    Mode::ReadOnly => {
                        if !sets.rw.is_empty() {
                            return CorrReport::fail(
                                "RRecR",
                                path,
                                "read-only record reaches writable pointers (ReadOnlyContainsWritable)",
                            );
                        }
                        if let Some(p) = p {
                            sets.ro.insert(p);
                        }
                        CorrReport::ok(sets)
                    }
                    Mode::Unboxed => unreachable!(),
                }
            }
            CoreType::Abstract { name, args, mode } => {
                let spec = match self.reg.lookup_type(name) {
                    Some(s) => s,
                    None => {
                        return CorrReport::fail(
                            "RA",
                            path,
                            format!("no correspondence rule registered for abstract type `{name}`"),
                        )
                    }
                };
                if args.len() != spec.arity {
                    return CorrReport::fail(
                        "RA",
                        path,
                        format!("abstract type `{name}` arity mismatch"),
                    );
                }
                let ctx = RelateChildCtx { relator: self, path: path.to_string() };
                match mode {
                    Mode::Unboxed => {
                        (spec.corr)(&ctx, u, store, v, args, *mode).nest(path)
                    }
                    Mode::Writable | Mode::ReadOnly => {
                        let (p, payload);
                        match u {
                            Some(UValue::Ptr(q)) => {
                                p = Some(*q);
                                match store.get(*q) {
                                    Some(inner) => payload = Some(inner.clone()),
                                    None => {
                                        return CorrReport::fail(
                                            "RA",
                                            path,
                                            format!(
                                                "dangling pointer {} (DanglingPointer)",
                                                q.0
                                            ),
                                        )
                                    }
                                }
                            }
                            Some(_) => {
                                return CorrReport::fail(
                                    "RA",
                                    path,
                                    "update value of boxed abstract type is not a pointer",
                                )
                            }
                            None => {
                                p = None;
                                payload = None;
                            }
                        }
                        let rep = (spec.corr)(&ctx, payload.as_ref(), store, v, args, *mode);
                        if !rep.ok {
                            return rep.nest(path);
                        }
                        let mut sets = rep.sets;
                        match mode {
                            Mode::Writable => {
                                if let Some(p) = p {
                                    if sets.ro.contains(&p) || sets.rw.contains(&p) {
                                        return CorrReport::fail(
                                            "RAW",
                                            path,
                                            "abstract box aliases its own contents (AliasViolation)",
                                        );
                                    }
                                    sets.rw.insert(p);
                                }
                            }
                            Mode::ReadOnly => {
                                if !sets.rw.is_empty() {
                                    return CorrReport::fail(
                                        "RAR",
                                        path,
                                        "read-only abstract value reaches writable pointers (ReadOnlyContainsWritable)",
                                    );
                                }
                                if let Some(p) = p {
                                    sets.ro.insert(p);
                                }
                            }
                            Mode::Unboxed => unreachable!(),
                        }
                        CorrReport::ok(sets)
                    }
                }
            }
            CoreType::Var(_) | CoreType::VarBang(_) => CorrReport::fail(
                "R",
                path,
                "correspondence requires a ground type (ShapeMismatch)",
            ),
        }
    }
}

struct RelateChildCtx<'a, 'b> {
    relator: &'b Relator<'a>,
    path: String,
}

impl<'a, 'b> CorrCtx for RelateChildCtx<'a, 'b> {
    fn relate_child(
        &self,
        u: Option<&UValue>,
        store: &Store,
        v: Option<&VValue>,
        ty: &CoreType,
    ) -> CorrReport {
        self.relator.relate(u, store, v, ty, &self.path)
    }
}

/// The full correspondence relation `u | μ : v : τ [ro: r, rw: w]`.
pub fn corr_value(
    prog: &Program,
    reg: &Registry,
    u: &UValue,
    store: &Store,
    v: &VValue,
    ty: &CoreType,
) -> CorrReport {
    Relator::new(prog, reg).relate(Some(u), store, Some(v), ty, "")
}

/// Value-semantics value typing, obtained by erasing the update side.
pub fn value_typing_v(prog: &Program, reg: &Registry, v: &VValue, ty: &CoreType) -> bool {
    Relator::new(prog, reg)
        .relate(None, &Store::new(), Some(v), ty, "")
        .ok
}

/// Update-semantics value typing, obtained by erasing the value side.
pub fn value_typing_u(
    prog: &Program,
    reg: &Registry,
    u: &UValue,
    store: &Store,
    ty: &CoreType,
) -> CorrReport {
    Relator::new(prog, reg).relate(Some(u), store, None, ty, "")
}

/// Environment correspondence: every context binding relates, and the
/// writable pointers of distinct bindings alias nothing else.
pub fn corr_env(
    prog: &Program,
    reg: &Registry,
    uenv: &UEnv,
    store: &Store,
    venv: &VEnv,
    gamma: &[(String, CoreType)],
) -> CorrReport {
    let relator = Relator::new(prog, reg);
    let mut per_binding: Vec<(String, PtrSets)> = Vec::new();
    for (x, ty) in gamma {
        let u = match uenv.lookup(x) {
            Some(u) => u,
            None => {
                return CorrReport::fail("REnv", x, "binding missing from update environment (MissingBinding)")
            }
        };
        let v = match venv.lookup(x) {
            Some(v) => v,
            None => {
                return CorrReport::fail("REnv", x, "binding missing from value environment (MissingBinding)")
            }
        };
        let rep = relator.relate(Some(u), store, Some(v), ty, x);
        if !rep.ok {
            return rep;
        }
        per_binding.push((x.clone(), rep.sets));
    }
    let mut total = PtrSets::default();
    for (j, (xj, sj)) in per_binding.iter().enumerate() {
        for (k, (xk, sk)) in per_binding.iter().enumerate() {
            if j != k && sj.rw.intersection(&sk.all()).next().is_some() {
                return CorrReport::fail(
                    "REnv",
                    xj,
                    format!("writable pointers of `{xj}` alias `{xk}` (AliasViolation)"),
                );
            }
        }
        total.ro.extend(sj.ro.iter().copied());
        total.rw.extend(sj.rw.iter().copied());
    }
    CorrReport::ok(total)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameViolation {
    /// An untouched pointer changed (or appeared/disappeared).
    Inertia(Pointer),
    /// A consumed writable pointer is still live in the output store.
    LeakFreedom(Pointer),
    /// A new writable pointer was already live in the input store.
    FreshAllocation(Pointer),
}

impl FrameViolation {
    pub fn kind(&self) -> &'static str {
        match self {
            FrameViolation::Inertia(_) => "Inertia",
            FrameViolation::LeakFreedom(_) => "LeakFreedom",
            FrameViolation::FreshAllocation(_) => "FreshAllocation",
        }
    }

    pub fn pointer(&self) -> Pointer {
        match self {
            FrameViolation::Inertia(p)
            | FrameViolation::LeakFreedom(p)
            | FrameViolation::FreshAllocation(p) => *p,
        }
    }
}

/// The framing relation: inertia, leak freedom and fresh allocation over
/// every pointer touched by either store or either writable set.
pub fn frame_check(
    w_in: &BTreeSet<Pointer>,
    store_in: &Store,
    w_out: &BTreeSet<Pointer>,
    store_out: &Store,
) -> Vec<FrameViolation> {
    let mut domain: BTreeSet<Pointer> = store_in.domain();
    domain.extend(store_out.domain());
    domain.extend(w_in.iter().copied());
    domain.extend(w_out.iter().copied());
    let mut out = Vec::new();
    for p in domain {
        let in_wi = w_in.contains(&p);
        let in_wo = w_out.contains(&p);
        if !in_wi && !in_wo {
            if store_in.get(p) != store_out.get(p) {
                out.push(FrameViolation::Inertia(p));
            }
        } else if in_wi && !in_wo {
            if store_out.contains(p) {
                out.push(FrameViolation::LeakFreedom(p));
            }
        } else if !in_wi && in_wo && store_in.contains(p) {
            out.push(FrameViolation::FreshAllocation(p));
        }
    }
    out
}

/// The first failed obligation of an oracle run, with context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleFailure {
    pub phase: String,
    pub detail: String,
}

impl fmt::Display for OracleFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.phase, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVerdict {
    pub pass: bool,
    pub sets_in: PtrSets,
    pub sets_out: PtrSets,
    pub frame_violations: Vec<FrameViolation>,
    pub failure: Option<OracleFailure>,
}

impl OracleVerdict {
    fn fail(phase: &str, detail: impl Into<String>) -> OracleVerdict {
        OracleVerdict {
            pass: false,
            sets_in: PtrSets::default(),
            sets_out: PtrSets::default(),
            frame_violations: Vec::new(),
            failure: Some(OracleFailure { phase: phase.to_string(), detail: detail.into() }),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        let ids = |s: &BTreeSet<Pointer>| s.iter().map(|p| p.0).collect::<Vec<_>>();
        json!({
            "pass": self.pass,
            "r": ids(&self.sets_in.ro),
            "w": ids(&self.sets_in.rw),
            "r_out": ids(&self.sets_out.ro),
            "w_out": ids(&self.sets_out.rw),
            "frame_violations": self.frame_violations.iter().map(|fv| json!({
                "kind": fv.kind(),
                "ptr": fv.pointer().0,
            })).collect::<Vec<_>>(),
            "failure": self.failure.as_ref().map(|f| json!({
                "phase": f.phase,
                "detail": f.detail,
            })),
        })
    }
}

type CoResult<T> = Result<T, OracleFailure>;

/// Lockstep evaluator over the typing derivation. Both semantics advance
/// together; every metatheoretic obligation is checked at the derivation
/// point where the proof would use it.
struct CoEval<'a> {
    prog: &'a Program,
    reg: &'a Registry,
    checker: Checker<'a>,
    fuel: u64,
    vinterp: VInterp<'a>,
    uinterp: UInterp<'a>,
    tree_memo: HashMap<(String, Expr, CoreType, CoreType), Rc<TypingTree>>,
}

fn fail(phase: &str, detail: impl Into<String>) -> OracleFailure {
    OracleFailure { phase: phase.to_string(), detail: detail.into() }
}

impl<'a> CoEval<'a> {
    fn new(prog: &'a Program, reg: &'a Registry, fuel: u64) -> CoEval<'a> {
        CoEval {
            prog,
            reg,
            checker: Checker::new(prog),
            fuel,
            vinterp: VInterp::new(prog, reg, fuel),
            uinterp: UInterp::new(prog, reg, fuel),
            tree_memo: HashMap::new(),
        }
    }

    fn tick(&mut self) -> CoResult<()> {
        if self.fuel == 0 {
            return Err(fail("co-eval", "step budget exhausted"));
        }
        self.fuel -= 1;
        Ok(())
    }

    fn gamma_of(node: &TypingTree) -> Vec<(String, CoreType)> {
        node.gamma.iter().map(|(n, t, _)| (n.clone(), t.clone())).collect()
    }

    fn env_sets(
        &self,
        uenv: &UEnv,
        store: &Store,
        venv: &VEnv,
        gamma: &[(String, CoreType)],
        what: &str,
    ) -> CoResult<PtrSets> {
        let rep = corr_env(self.prog, self.reg, uenv, store, venv, gamma);
        if !rep.ok {
            return Err(fail(
                "corr-env",
                format!("{what}: {}", rep.failure.unwrap()),
            ));
        }
        Ok(rep.sets)
    }

    /// Weakening and splitting lemma replay at one node.
    fn replay_structural(
        &self,
        node: &TypingTree,
        uenv: &UEnv,
        store: &Store,
        venv: &VEnv,
        sets_full: &PtrSets,
    ) -> CoResult<()> {
        let gamma = Self::gamma_of(node);
        let mut cur: Vec<(String, CoreType)> = gamma.clone();
        if !node.weakened.is_empty() {
            let dropped: BTreeSet<&String> = node.weakened.iter().collect();
            cur.retain(|(n, _)| !dropped.contains(n));
            let kept = self.env_sets(uenv, store, venv, &cur, "weakened context")?;
            if !kept.ro.is_subset(&sets_full.ro) {
                return Err(fail(
                    "lemma-weakening",
                    "read-only pointers grew across weakening (r' ⊄ r)",
                ));
            }
            if kept.rw != sets_full.rw {
                return Err(fail(
                    "lemma-weakening",
                    "weakening changed the writable pointer set",
                ));
            }
        }
        for rec in &node.splits {
            let base_names: BTreeSet<&String> =
                rec.left.iter().chain(rec.right.iter()).collect();
            let base: Vec<(String, CoreType)> = cur
                .iter()
                .filter(|(n, _)| base_names.contains(n))
                .cloned()
                .collect();
            let left: Vec<(String, CoreType)> = base
                .iter()
                .filter(|(n, _)| rec.left.contains(n))
                .cloned()
                .collect();
            let right: Vec<(String, CoreType)> = base
                .iter()
                .filter(|(n, _)| rec.right.contains(n))
                .cloned()
                .collect();
            let s0 = self.env_sets(uenv, store, venv, &base, "split base")?;
            let s1 = self.env_sets(uenv, store, venv, &left, "split left")?;
            let s2 = self.env_sets(uenv, store, venv, &right, "split right")?;
            if s1.rw.intersection(&s2.rw).next().is_some() {
                return Err(fail(
                    "lemma-splitting",
                    "split halves share a writable pointer (w1 ∩ w2 ≠ ∅)",
                ));
            }
            let rw_union: BTreeSet<Pointer> = s1.rw.union(&s2.rw).copied().collect();
            let ro_union: BTreeSet<Pointer> = s1.ro.union(&s2.ro).copied().collect();
            if rw_union != s0.rw || ro_union != s0.ro {
                return Err(fail(
                    "lemma-splitting",
                    "split halves do not partition the pointer sets (r ≠ r1∪r2 or w ≠ w1∪w2)",
                ));
            }
            cur.retain(|(n, _)| rec.right.contains(n));
        }
        Ok(())
    }

    /// Full per-node obligation: establish the environment
    /// correspondence, replay the structural properties, evaluate the
    /// node, then check result correspondence, `r' ⊆ r`, and the frame.
    fn co_eval(
        &mut self,
        venv: &mut VEnv,
        uenv: &mut UEnv,
        store: &mut Store,
        e: &Expr,
        node: &TypingTree,
    ) -> CoResult<(VValue, UValue)> {
        self.tick()?;
        let gamma = Self::gamma_of(node);
        let sets_in = self.env_sets(uenv, store, venv, &gamma, "node entry")?;
        self.replay_structural(node, uenv, store, venv, &sets_in)?;
        let store_in = store.clone();

        let (v, u) = self.eval_node(venv, uenv, store, e, node)?;

        let rep = corr_value(self.prog, self.reg, &u, store, &v, &node.ty);
        if !rep.ok {
            return Err(fail(
                "corr-result",
                format!(
                    "result fails correspondence at {}: {}",
                    crate::pretty::type_to_sexp(&node.ty),
                    rep.failure.unwrap()
                ),
            ));
        }
        if !rep.sets.ro.is_subset(&sets_in.ro) {
            return Err(fail(
                "corr-result",
                "result read-only pointers are not a subset of the input's (r' ⊄ r)",
            ));
        }
        let frame = frame_check(&sets_in.rw, &store_in, &rep.sets.rw, store);
        if !frame.is_empty() {
            return Err(fail(
                "frame",
                format!(
                    "{} at pointer {}",
                    frame[0].kind(),
                    frame[0].pointer().0
                ),
            ));
        }
        Ok((v, u))
    }

    fn child(node: &TypingTree, i: usize) -> CoResult<&TypingTree> {
        node.children.get(i).ok_or_else(|| {
            fail("co-eval", format!("derivation node `{}` lacks premise {i}", node.rule))
        })
    }

    fn callee_tree(
        &mut self,
        param: &str,
        body: &Expr,
        arg: &CoreType,
        res: &CoreType,
    ) -> CoResult<Rc<TypingTree>> {
        let key = (param.to_string(), body.clone(), arg.clone(), res.clone());
        if let Some(t) = self.tree_memo.get(&key) {
            return Ok(t.clone());
        }
        let delta = KindContext::empty();
        let gamma = TypeContext::new(vec![(param.to_string(), arg.clone())]);
        let (_, tree) = self
            .checker
            .check_expr(&delta, &gamma, body, Some(res))
            .map_err(|d: Diagnostic| {
                fail(
                    "specialisation",
                    format!("instantiated body fails to re-check: {d}"),
                )
            })?;
        let rc = Rc::new(tree);
        self.tree_memo.insert(key, rc.clone());
        Ok(rc)
    }

    fn eval_node(
        &mut self,
        venv: &mut VEnv,
        uenv: &mut UEnv,
        store: &mut Store,
        e: &Expr,
        node: &TypingTree,
    ) -> CoResult<(VValue, UValue)> {
        use ExprKind::*;
        let misaligned =
            || fail("co-eval", format!("derivation rule `{}` misaligned with expression", node.rule));
        match &e.kind {
            Var(x) => {
                let v = venv.lookup(x).cloned().ok_or_else(misaligned)?;
                let u = uenv.lookup(x).cloned().ok_or_else(misaligned)?;
                Ok((v, u))
            }
            Unit => Ok((VValue::Unit, UValue::Unit)),
            Lit(l) => Ok((VValue::Lit(*l), UValue::Lit(*l))),
            FunRef(f, args) => {
                let v = self
                    .vinterp
                    .funref_value(f, args)
                    .map_err(|e| fail("eval", e.to_string()))?;
                let u = self
                    .uinterp
                    .funref_value(f, args)
                    .map_err(|e| fail("eval", e.to_string()))?;
                Ok((v, u))
            }
            PrimOp(op, args) => {
                let mut vlits = Vec::new();
                let mut ulits = Vec::new();
                for (i, a) in args.iter().enumerate() {
                    let (v, u) =
                        self.co_eval(venv, uenv, store, a, Self::child(node, i)?)?;
                    match (v, u) {
                        (VValue::Lit(lv), UValue::Lit(lu)) => {
                            vlits.push(lv);
                            ulits.push(lu);
                        }
                        _ => return Err(fail("eval", "operator applied to non-literal")),
                    }
                }
                let vres = apply_primop(*op, &vlits);
                let ures = apply_primop(*op, &ulits);
                match (vres, ures) {
                    (Ok(a), Ok(b)) => Ok((VValue::Lit(a), UValue::Lit(b))),
                    (Err(OpError::DivisionByZero), _) | (_, Err(OpError::DivisionByZero)) => {
                        Err(fail("eval", "division by zero"))
                    }
                    _ => Err(fail("eval", "operator operand shapes disagree")),
                }
            }
            App(f, a) => {
                let fnode = Self::child(node, 0)?;
                let (vf, uf) = self.co_eval(venv, uenv, store, f, fnode)?;
                let (arg_ty, res_ty) = match &fnode.ty {
                    CoreType::Fun(a, r) => ((**a).clone(), (**r).clone()),
                    _ => return Err(misaligned()),
                };
                let (va, ua) = self.co_eval(venv, uenv, store, a, Self::child(node, 1)?)?;
                match (&vf, &uf) {
                    (VValue::Fun { param, body }, UValue::Fun { .. }) => {
                        let tree = self.callee_tree(param, body, &arg_ty, &res_ty)?;
                        let mut cal_v = VEnv::single(param.clone(), va);
                        let mut cal_u = UEnv::single(param.clone(), ua);
                        let body = body.clone();
                        self.co_eval(&mut cal_v, &mut cal_u, store, &body, &tree)
                    }
                    (VValue::AbsFun { name, typeargs }, UValue::AbsFun { .. }) => {
                        self.abstract_call(name, typeargs, va, ua, store, &arg_ty, &res_ty)
                    }
                    _ => Err(fail("eval", "applied a non-function value")),
                }
            }
            Let(x, e1, e2) => {
                let (v1, u1) = self.co_eval(venv, uenv, store, e1, Self::child(node, 0)?)?;
                venv.push(x.clone(), v1);
                uenv.push(x.clone(), u1);
                let r = self.co_eval(venv, uenv, store, e2, Self::child(node, 1)?);
                venv.pop();
                uenv.pop();
                r
            }
            LetBang(ys, x, e1, e2) => {
                // bang property at every observed binding
                for y in ys {
                    let ty = node
                        .gamma
                        .iter()
                        .rev()
                        .find(|(n, _, _)| n == y)
                        .map(|(_, t, _)| t.clone())
                        .ok_or_else(misaligned)?;
                    let uy = uenv.lookup(y).cloned().ok_or_else(misaligned)?;
                    let vy = venv.lookup(y).cloned().ok_or_else(misaligned)?;
                    let plain = corr_value(self.prog, self.reg, &uy, store, &vy, &ty);
                    if !plain.ok {
                        return Err(fail(
                            "lemma-bang",
                            format!("observed `{y}` fails correspondence: {}", plain.failure.unwrap()),
                        ));
                    }
                    let banged =
                        corr_value(self.prog, self.reg, &uy, store, &vy, &bang_type(&ty));
                    if !banged.ok {
                        return Err(fail(
                            "lemma-bang",
                            format!(
                                "observed `{y}` fails correspondence at its banged type: {}",
                                banged.failure.unwrap()
                            ),
                        ));
                    }
                    let expect_ro: BTreeSet<Pointer> =
                        plain.sets.ro.union(&plain.sets.rw).copied().collect();
                    if banged.sets.ro != expect_ro || !banged.sets.rw.is_empty() {
                        return Err(fail(
                            "lemma-bang",
                            format!("bang sets for `{y}` are not (r ∪ w, ∅)"),
                        ));
                    }
                }
                let (v1, u1) = self.co_eval(venv, uenv, store, e1, Self::child(node, 0)?)?;
                venv.push(x.clone(), v1);
                uenv.push(x.clone(), u1);
                let r = self.co_eval(venv, uenv, store, e2, Self::child(node, 1)?);
                venv.pop();
                uenv.pop();
                r
            }
            If(c, t, els) => {
                let (vc, uc) = self.co_eval(venv, uenv, store, c, Self::child(node, 0)?)?;
                let bv = vc.as_lit().and_then(|l| l.as_bool());
                let bu = uc.as_lit().and_then(|l| l.as_bool());
                match (bv, bu) {
                    (Some(a), Some(b)) if a == b => {
                        if a {
                            self.co_eval(venv, uenv, store, t, Self::child(node, 1)?)
                        } else {
                            self.co_eval(venv, uenv, store, els, Self::child(node, 2)?)
                        }
                    }
                    _ => Err(fail("eval", "branch conditions disagree across semantics")),
                }
            }
            Cast(t, inner) => {
                let (v, u) = self.co_eval(venv, uenv, store, inner, Self::child(node, 0)?)?;
                match (v, u) {
                    (VValue::Lit(a), UValue::Lit(b)) => Ok((
                        VValue::Lit(Literal::uint(a.value, *t)),
                        UValue::Lit(Literal::uint(b.value, *t)),
                    )),
                    _ => Err(fail("eval", "cast applied to non-literal")),
                }
            }
            Promote(_, inner) => self.co_eval(venv, uenv, store, inner, Self::child(node, 0)?),
            Con(c, inner) => {
                let (v, u) = self.co_eval(venv, uenv, store, inner, Self::child(node, 0)?)?;
                Ok((
                    VValue::Con(c.clone(), Box::new(v)),
                    UValue::Con(c.clone(), Box::new(u)),
                ))
            }
            Case { scrutinee, ctor, bound, matched, else_bound, else_body } => {
                let (vs, us) =
                    self.co_eval(venv, uenv, store, scrutinee, Self::child(node, 0)?)?;
                match (vs, us) {
                    (VValue::Con(vc, vp), UValue::Con(uc, up)) => {
                        if vc != uc {
                            return Err(fail("eval", "constructors disagree across semantics"));
                        }
                        if &vc == ctor {
                            venv.push(bound.clone(), *vp);
                            uenv.push(bound.clone(), *up);
                            let r =
                                self.co_eval(venv, uenv, store, matched, Self::child(node, 1)?);
                            venv.pop();
                            uenv.pop();
                            r
                        } else {
                            venv.push(else_bound.clone(), VValue::Con(vc, vp));
                            uenv.push(else_bound.clone(), UValue::Con(uc, up));
                            let r = self
                                .co_eval(venv, uenv, store, else_body, Self::child(node, 2)?);
                            venv.pop();
                            uenv.pop();
                            r
                        }
                    }
                    _ => Err(fail("eval", "case scrutinee is not a variant")),
                }
            }
            Esac(inner) => {
                let (v, u) = self.co_eval(venv, uenv, store, inner, Self::child(node, 0)?)?;
                match (v, u) {
                    (VValue::Con(_, vp), UValue::Con(_, up)) => Ok((*vp, *up)),
                    _ => Err(fail("eval", "esac operand is not a variant")),
                }
            }
            Struct(fields) => {
                let mut vout = Vec::new();
                let mut uout = Vec::new();
                for (i, (f, e1)) in fields.iter().enumerate() {
                    let (v, u) = self.co_eval(venv, uenv, store, e1, Self::child(node, i)?)?;
                    vout.push((f.clone(), v));
                    uout.push((f.clone(), u));
                }
                Ok((VValue::Record(vout), UValue::Record(uout)))
            }
            Member(inner, f) => {
                let (v, u) = self.co_eval(venv, uenv, store, inner, Self::child(node, 0)?)?;
                let vf = match v {
                    VValue::Record(fields) => fields
                        .into_iter()
                        .find(|(n, _)| n == f)
                        .map(|(_, v)| v)
                        .ok_or_else(|| fail("eval", "record lacks member field"))?,
                    _ => return Err(fail("eval", "member on non-record")),
                };
                let uf = match u {
                    UValue::Record(fields) => fields
                        .into_iter()
                        .find(|(n, _)| n == f)
                        .map(|(_, v)| v)
                        .ok_or_else(|| fail("eval", "record lacks member field"))?,
                    UValue::Ptr(p) => match store.get(p) {
                        Some(UValue::Record(fields)) => fields
                            .iter()
                            .find(|(n, _)| n == f)
                            .map(|(_, v)| v.clone())
                            .ok_or_else(|| fail("eval", "record lacks member field"))?,
                        _ => return Err(fail("eval", "bad pointer in member access")),
                    },
                    _ => return Err(fail("eval", "member on non-record")),
                };
                Ok((vf, uf))
            }
            Put(e1, f, e2) => {
                let (vr, ur) = self.co_eval(venv, uenv, store, e1, Self::child(node, 0)?)?;
                let (vn, un) = self.co_eval(venv, uenv, store, e2, Self::child(node, 1)?)?;
                let vout = match vr {
                    VValue::Record(mut fields) => {
                        match fields.iter_mut().find(|(n, _)| n == f) {
                            Some(slot) => slot.1 = vn,
                            None => return Err(fail("eval", "record lacks put field")),
                        }
                        VValue::Record(fields)
                    }
                    _ => return Err(fail("eval", "put on non-record")),
                };
                let uout = match ur {
                    UValue::Record(mut fields) => {
                        match fields.iter_mut().find(|(n, _)| n == f) {
                            Some(slot) => slot.1 = un,
                            None => return Err(fail("eval", "record lacks put field")),
                        }
                        UValue::Record(fields)
                    }
                    UValue::Ptr(p) => {
                        match store.get_mut(p) {
                            Some(UValue::Record(fields)) => {
                                match fields.iter_mut().find(|(n, _)| n == f) {
                                    Some(slot) => slot.1 = un,
                                    None => {
                                        return Err(fail("eval", "record lacks put field"))
                                    }
                                }
                            }
                            _ => return Err(fail("eval", "bad pointer in put")),
                        }
                        UValue::Ptr(p)
                    }
                    _ => return Err(fail("eval", "put on non-record")),
                };
                Ok((vout, uout))
            }
            Take { rec_bound, field, field_bound, record, body } => {
                let (vr, ur) = self.co_eval(venv, uenv, store, record, Self::child(node, 0)?)?;
                let vfield = match &vr {
                    VValue::Record(fields) => fields
                        .iter()
                        .find(|(n, _)| n == field)
                        .map(|(_, v)| v.clone())
                        .ok_or_else(|| fail("eval", "record lacks take field"))?,
                    _ => return Err(fail("eval", "take on non-record")),
                };
                let ufield = match &ur {
                    UValue::Record(fields) => fields
                        .iter()
                        .find(|(n, _)| n == field)
                        .map(|(_, v)| v.clone())
                        .ok_or_else(|| fail("eval", "record lacks take field"))?,
                    UValue::Ptr(p) => match store.get(*p) {
                        Some(UValue::Record(fields)) => fields
                            .iter()
                            .find(|(n, _)| n == field)
                            .map(|(_, v)| v.clone())
                            .ok_or_else(|| fail("eval", "record lacks take field"))?,
                        _ => return Err(fail("eval", "bad pointer in take")),
                    },
                    _ => return Err(fail("eval", "take on non-record")),
                };
                venv.push(field_bound.clone(), vfield);
                venv.push(rec_bound.clone(), vr);
                uenv.push(field_bound.clone(), ufield);
                uenv.push(rec_bound.clone(), ur);
                let r = self.co_eval(venv, uenv, store, body, Self::child(node, 1)?);
                venv.pop();
                venv.pop();
                uenv.pop();
                uenv.pop();
                r
            }
            Match(..) => Err(fail("co-eval", "match must be desugared before oracle runs")),
        }
    }

    /// One abstract call: replay the foreign-function contract. If inputs
    /// correspond then outputs must correspond, with `r' ⊆ r` and a clean
    /// frame over the argument's writable set.
    #[allow(clippy::too_many_arguments)]
    fn abstract_call(
        &mut self,
        name: &str,
        typeargs: &[CoreType],
        va: VValue,
        ua: UValue,
        store: &mut Store,
        arg_ty: &CoreType,
        res_ty: &CoreType,
    ) -> CoResult<(VValue, UValue)> {
        let pre = corr_value(self.prog, self.reg, &ua, store, &va, arg_ty);
        if !pre.ok {
            return Err(fail(
                "ffi-assumption",
                format!("argument of `{name}` fails correspondence: {}", pre.failure.unwrap()),
            ));
        }
        let store_in = store.clone();
        let spec = self
            .reg
            .lookup_fn(name)
            .ok_or_else(|| fail("eval", format!("no implementation for abstract `{name}`")))?;
        let impl_v = spec.impl_v.clone();
        let impl_u = spec.impl_u.clone();
        let v_out = impl_v(&mut self.vinterp, typeargs, va)
            .map_err(|e| fail("eval", format!("`{name}` (value side): {e}")))?;
        let u_out = impl_u(&mut self.uinterp, typeargs, ua, store)
            .map_err(|e| fail("eval", format!("`{name}` (update side): {e}")))?;
        let post = corr_value(self.prog, self.reg, &u_out, store, &v_out, res_ty);
        if !post.ok {
            return Err(fail(
                "ffi-assumption",
                format!("result of `{name}` fails correspondence: {}", post.failure.unwrap()),
            ));
        }
        if !post.sets.ro.is_subset(&pre.sets.ro) {
            return Err(fail(
                "ffi-assumption",
                format!("`{name}` invented read-only pointers (r' ⊄ r)"),
            ));
        }
        let frame = frame_check(&pre.sets.rw, &store_in, &post.sets.rw, store);
        if !frame.is_empty() {
            return Err(fail(
                "ffi-assumption",
                format!(
                    "`{name}` violates framing: {} at pointer {}",
                    frame[0].kind(),
                    frame[0].pointer().0
                ),
            ));
        }
        Ok((v_out, u_out))
    }
}

/// Run the dynamic refinement check for one monomorphic entry function on
/// one pair of corresponding arguments.
#[allow(clippy::too_many_arguments)]
pub fn refinement_oracle(
    prog: &Program,
    reg: &Registry,
    fname: &str,
    v_arg: &VValue,
    u_arg: &UValue,
    store: &Store,
    arg_ty: &CoreType,
    res_ty: &CoreType,
    fuel: u64,
) -> OracleVerdict {
    // the entry must be a monomorphic concrete function
    let fun = match prog.lookup_fun(fname) {
        Some(f) if f.signature.is_monomorphic() => f,
        Some(_) => return OracleVerdict::fail("setup", "entry function must be monomorphic"),
        None => return OracleVerdict::fail("setup", format!("no function named `{fname}`")),
    };
    if check_program(prog).is_err() {
        return OracleVerdict::fail("setup", "program does not type-check");
    }

    let pre = corr_value(prog, reg, u_arg, store, v_arg, arg_ty);
    if !pre.ok {
        return OracleVerdict::fail(
            "precondition",
            format!("arguments do not correspond: {}", pre.failure.unwrap()),
        );
    }
    let sets_in = pre.sets.clone();

    // erasure coherence on the argument
    if let Some(f) = erasure_check(prog, reg, u_arg, store, v_arg, arg_ty) {
        return OracleVerdict::fail("erasure", f);
    }

    // standalone runs of both interpreters
    let mut vinterp = VInterp::new(prog, reg, fuel);
    let mut venv = VEnv::single(fun.param.clone(), v_arg.clone());
    let v_std = vinterp.eval(&mut venv, &fun.body);
    let mut uinterp = UInterp::new(prog, reg, fuel);
    let mut uenv = UEnv::single(fun.param.clone(), u_arg.clone());
    let mut u_store = store.clone();
    let u_std = uinterp.eval(&mut uenv, &mut u_store, &fun.body);
    let (v_std, u_std) = match (v_std, u_std) {
        (Ok(v), Ok(u)) => (v, u),
        (Err(e), _) => {
            return OracleVerdict::fail("eval", format!("value semantics failed: {e}"))
        }
        (_, Err(e)) => {
            return OracleVerdict::fail("eval", format!("update semantics failed: {e}"))
        }
    };

    // instrumented lockstep run
    let mut co = CoEval::new(prog, reg, fuel);
    let tree = match co.callee_tree(&fun.param, &fun.body, arg_ty, res_ty) {
        Ok(t) => t,
        Err(f) => {
            return OracleVerdict {
                pass: false,
                sets_in,
                sets_out: PtrSets::default(),
                frame_violations: Vec::new(),
                failure: Some(f),
            }
        }
    };
    let mut co_venv = VEnv::single(fun.param.clone(), v_arg.clone());
    let mut co_uenv = UEnv::single(fun.param.clone(), u_arg.clone());
    let mut co_store = store.clone();
    let co_res = co.co_eval(&mut co_venv, &mut co_uenv, &mut co_store, &fun.body, &tree);
    let (v_co, u_co) = match co_res {
        Ok(r) => r,
        Err(f) => {
            return OracleVerdict {
                pass: false,
                sets_in,
                sets_out: PtrSets::default(),
                frame_violations: Vec::new(),
                failure: Some(f),
            }
        }
    };
    if v_co != v_std || u_co != u_std || co_store != u_store {
        return OracleVerdict::fail(
            "determinism",
            "lockstep run disagrees with the standalone interpreters",
        );
    }

    // final correspondence, r' ⊆ r, frame over the whole call
    let post = corr_value(prog, reg, &u_std, &u_store, &v_std, res_ty);
    if !post.ok {
        return OracleVerdict::fail(
            "corr-result",
            format!("results do not correspond: {}", post.failure.unwrap()),
        );
    }
    if let Some(f) = erasure_check(prog, reg, &u_std, &u_store, &v_std, res_ty) {
        return OracleVerdict::fail("erasure", f);
    }
    let sets_out = post.sets.clone();
    if !sets_out.ro.is_subset(&sets_in.ro) {
        return OracleVerdict {
            pass: false,
            sets_in,
            sets_out,
            frame_violations: Vec::new(),
            failure: Some(fail("corr-result", "r' ⊄ r on the call result")),
        };
    }
    let frame = frame_check(&sets_in.rw, store, &sets_out.rw, &u_store);
    let pass = frame.is_empty();
    OracleVerdict {
        pass,
        sets_in,
        sets_out,
        failure: if pass {
            None
        } else {
            Some(fail(
                "frame",
                format!("{} at pointer {}", frame[0].kind(), frame[0].pointer().0),
            ))
        },
        frame_violations: frame,
    }
}

/// Erasure coherence: when the full relation holds, both single-sided
/// typings must hold, and the update-side sets must be identical.
fn erasure_check(
    prog: &Program,
    reg: &Registry,
    u: &UValue,
    store: &Store,
    v: &VValue,
    ty: &CoreType,
) -> Option<String> {
    let both = corr_value(prog, reg, u, store, v, ty);
    if !both.ok {
        return None;
    }
    if !value_typing_v(prog, reg, v, ty) {
        return Some("corr holds but value-side typing fails".to_string());
    }
    let uo = value_typing_u(prog, reg, u, store, ty);
    if !uo.ok {
        return Some("corr holds but update-side typing fails".to_string());
    }
    if uo.sets != both.sets {
        return Some("update-side typing computes different pointer sets".to_string());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffi::builtin_library;
    use crate::parse::{parse_program, parse_type};
    use crate::sem_value::DEFAULT_FUEL;

    fn u8lit_v(v: u64) -> VValue {
        VValue::lit(v, PrimType::U8)
    }

    fn u8lit_u(v: u64) -> UValue {
        UValue::lit(v, PrimType::U8)
    }

    fn empty() -> (Program, Registry) {
        (Program::new(vec![]), Registry::new())
    }

    #[test]
    fn literal_correspondence() {
        let (prog, reg) = empty();
        let store = Store::new();
        let rep = corr_value(
            &prog,
            &reg,
            &u8lit_u(5),
            &store,
            &u8lit_v(5),
            &parse_type("u8").unwrap(),
        );
        assert!(rep.ok && rep.sets.is_empty());
        let rep = corr_value(
            &prog,
            &reg,
            &u8lit_u(5),
            &store,
            &u8lit_v(6),
            &parse_type("u8").unwrap(),
        );
        assert!(!rep.ok);
    }

    #[test]
    fn boxed_record_collects_writable_pointer() {
        let (prog, reg) = empty();
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("f".into(), u8lit_u(1))]));
        let rep = corr_value(
            &prog,
            &reg,
            &UValue::Ptr(p),
            &store,
            &VValue::Record(vec![("f".into(), u8lit_v(1))]),
            &parse_type("(rec wr (f u8))").unwrap(),
        );
        assert!(rep.ok);
        assert!(rep.sets.ro.is_empty());
        assert_eq!(rep.sets.rw, [p].into());
    }

    #[test]
    fn aliased_writable_pointer_in_record_rejected() {
        let (prog, reg) = empty();
        let mut store = Store::new();
        let inner = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(1))]));
        let u = UValue::Record(vec![
            ("a".into(), UValue::Ptr(inner)),
            ("b".into(), UValue::Ptr(inner)),
        ]);
        let v = VValue::Record(vec![
            ("a".into(), VValue::Record(vec![("n".into(), u8lit_v(1))])),
            ("b".into(), VValue::Record(vec![("n".into(), u8lit_v(1))])),
        ]);
        let ty = parse_type("(rec ub (a (rec wr (n u8))) (b (rec wr (n u8))))").unwrap();
        let rep = corr_value(&prog, &reg, &u, &store, &v, &ty);
        assert!(!rep.ok);
        assert!(rep.failure.unwrap().reason.contains("AliasViolation"));
    }

    #[test]
    fn taken_fields_are_skipped() {
        let (prog, reg) = empty();
        let mut store = Store::new();
        // the taken slot holds a nonsense placeholder on both sides
        let p = store.alloc(UValue::Record(vec![
            ("f".into(), UValue::Unit),
            ("g".into(), u8lit_u(3)),
        ]));
        let v = VValue::Record(vec![
            ("f".into(), VValue::Unit),
            ("g".into(), VValue::lit(3, PrimType::U8)),
        ]);
        let ty = parse_type("(rec wr (f u8 taken) (g u8))").unwrap();
        let rep = corr_value(&prog, &reg, &UValue::Ptr(p), &store, &v, &ty);
        assert!(rep.ok, "{:?}", rep.failure);
    }

    #[test]
    fn env_allows_readonly_sharing_but_not_writable() {
        let (prog, reg) = empty();
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(1))]));
        let rec_v = VValue::Record(vec![("n".into(), u8lit_v(1))]);
        let ro_ty = parse_type("(rec ro (n u8))").unwrap();
        let wr_ty = parse_type("(rec wr (n u8))").unwrap();

        let gamma = vec![("x".to_string(), ro_ty.clone()), ("y".to_string(), ro_ty)];
        let mut uenv = UEnv::new();
        uenv.push("x", UValue::Ptr(p));
        uenv.push("y", UValue::Ptr(p));
        let mut venv = VEnv::new();
        venv.push("x", rec_v.clone());
        venv.push("y", rec_v.clone());
        let rep = corr_env(&prog, &reg, &uenv, &store, &venv, &gamma);
        assert!(rep.ok, "read-only aliasing is legal: {:?}", rep.failure);

        let gamma = vec![("x".to_string(), wr_ty.clone()), ("y".to_string(), wr_ty)];
        let rep = corr_env(&prog, &reg, &uenv, &store, &venv, &gamma);
        assert!(!rep.ok);
        assert!(rep.failure.unwrap().reason.contains("AliasViolation"));

        let rep = corr_env(&prog, &reg, &uenv, &store, &venv, &[]);
        assert!(rep.ok && rep.sets.is_empty());
    }

    #[test]
    fn single_sided_typings() {
        let (prog, reg) = empty();
        assert!(!value_typing_v(
            &prog,
            &reg,
            &VValue::Lit(Literal::uint(300, PrimType::U8)),
            &parse_type("u8").unwrap()
        ));
        assert!(value_typing_v(&prog, &reg, &VValue::Unit, &parse_type("unit").unwrap()));
        let store = Store::new();
        let rep = value_typing_u(
            &prog,
            &reg,
            &UValue::Ptr(Pointer(44)),
            &store,
            &parse_type("(rec wr (f u8))").unwrap(),
        );
        assert!(!rep.ok);
        assert!(rep.failure.unwrap().reason.contains("DanglingPointer"));
    }

    #[test]
    fn frame_properties() {
        let mut s1 = Store::new();
        let p = s1.alloc(UValue::Unit);
        let w: BTreeSet<Pointer> = [p].into();

        // identical stores, same writable set: clean
        assert!(frame_check(&w, &s1, &w, &s1.clone()).is_empty());

        // consumed but still present: leak
        let empty_w = BTreeSet::new();
        let viol = frame_check(&w, &s1, &empty_w, &s1.clone());
        assert_eq!(viol, vec![FrameViolation::LeakFreedom(p)]);

        // claimed fresh but already present: fresh-allocation violation
        let viol = frame_check(&empty_w, &s1, &w, &s1.clone());
        assert_eq!(viol, vec![FrameViolation::FreshAllocation(p)]);

        // untouched pointer changed: inertia violation
        let mut s2 = s1.clone();
        *s2.get_mut(p).unwrap() = UValue::lit(1, PrimType::U8);
        let viol = frame_check(&empty_w, &s1, &empty_w, &s2);
        assert_eq!(viol, vec![FrameViolation::Inertia(p)]);
    }

    #[test]
    fn unrelated_updates_preserve_correspondence() {
        use rand::{Rng, SeedableRng};
        let (prog, reg) = empty();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            // a boxed record value plus an unrelated allocation
            let mut store = Store::new();
            let n = rng.gen_range(0..=255u64);
            let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(n))]));
            let unrelated = store.alloc(UValue::lit(0, PrimType::U8));
            let u = UValue::Ptr(p);
            let v = VValue::Record(vec![("n".into(), u8lit_v(n))]);
            let ty = parse_type("(rec wr (n u8))").unwrap();
            let rep = corr_value(&prog, &reg, &u, &store, &v, &ty);
            assert!(rep.ok);
            let w1: BTreeSet<Pointer> = [unrelated].into();
            assert!(rep.sets.rw.intersection(&w1).next().is_none());

            // frame-respecting mutation of the unrelated pointer
            let store2 = {
                let mut s = store.clone();
                if rng.gen_bool(0.5) {
                    *s.get_mut(unrelated).unwrap() = UValue::lit(9, PrimType::U8);
                } else {
                    s.free(unrelated).unwrap();
                }
                s
            };
            let w2: BTreeSet<Pointer> =
                if store2.contains(unrelated) { [unrelated].into() } else { BTreeSet::new() };
            assert!(frame_check(&w1, &store, &w2, &store2).is_empty());

            let rep2 = corr_value(&prog, &reg, &u, &store2, &v, &ty);
            assert!(rep2.ok, "correspondence must survive unrelated updates");
            assert_eq!(rep2.sets, rep.sets);
            assert!(rep2.sets.rw.intersection(&w2).next().is_none());
        }
    }

    #[test]
    fn bang_makes_writable_read_only() {
        let (prog, reg) = empty();
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(1))]));
        let u = UValue::Ptr(p);
        let v = VValue::Record(vec![("n".into(), u8lit_v(1))]);
        let ty = parse_type("(rec wr (n u8))").unwrap();
        let rep = corr_value(&prog, &reg, &u, &store, &v, &ty);
        assert!(rep.ok);
        let banged = corr_value(&prog, &reg, &u, &store, &v, &bang_type(&ty));
        assert!(banged.ok);
        assert_eq!(banged.sets.ro, rep.sets.ro.union(&rep.sets.rw).copied().collect());
        assert!(banged.sets.rw.is_empty());
    }

    fn run_oracle(src: &str, fname: &str, v: VValue, u: UValue, store: Store) -> OracleVerdict {
        let prog = parse_program(src).unwrap();
        let reg = builtin_library(&prog).unwrap();
        let f = prog.lookup_fun(fname).unwrap();
        let (arg, res) = f.signature.arg_result();
        let (arg, res) = (arg.clone(), res.clone());
        refinement_oracle(&prog, &reg, fname, &v, &u, &store, &arg, &res, DEFAULT_FUEL)
    }

    #[test]
    fn oracle_passes_put_take_roundtrip() {
        let src = "(def roundtrip (forall)
          (fn (r (rec wr (n u8))) (rec wr (n u8))
            (take x n y r (put x n (op + y 1)))))";
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(5))]));
        let verdict = run_oracle(
            src,
            "roundtrip",
            VValue::Record(vec![("n".into(), u8lit_v(5))]),
            UValue::Ptr(p),
            store,
        );
        assert!(verdict.pass, "{:?}", verdict.failure);
        assert_eq!(verdict.sets_out.rw, [p].into());
    }

    #[test]
    fn oracle_passes_ffi_free() {
        let src = "
          (absdef free_box (forall) (fn (r (rec wr (n u8))) unit))
          (def dispose (forall) (fn (r (rec wr (n u8))) unit
            (app (funref free_box) r)))";
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(5))]));
        let verdict = run_oracle(
            src,
            "dispose",
            VValue::Record(vec![("n".into(), u8lit_v(5))]),
            UValue::Ptr(p),
            store,
        );
        assert!(verdict.pass, "{:?}", verdict.failure);
        assert!(verdict.sets_out.rw.is_empty());
        assert!(verdict.frame_violations.is_empty());
    }

    // a registry with one deliberately broken abstract function
    fn broken_registry(prog: &Program, which: &str) -> Registry {
        use crate::ffi::{AbstractFnSpec, Registry};
        use std::sync::Arc;
        let mut reg = Registry::new();
        let decl = prog.abs_decls().next().unwrap();
        let spec = match which {
            // returns the same writable pointer twice inside a record
            "alias" => AbstractFnSpec {
                name: decl.name.clone(),
                signature: decl.signature.clone(),
                impl_v: Arc::new(|_cb, _t, arg| {
                    Ok(VValue::Record(vec![
                        ("p1".into(), arg.clone()),
                        ("p2".into(), arg),
                    ]))
                }),
                impl_u: Arc::new(|_cb, _t, arg, _store| {
                    Ok(UValue::Record(vec![
                        ("p1".into(), arg.clone()),
                        ("p2".into(), arg),
                    ]))
                }),
            },
            // claims to consume the pointer but leaves it allocated
            "leak" => AbstractFnSpec {
                name: decl.name.clone(),
                signature: decl.signature.clone(),
                impl_v: Arc::new(|_cb, _t, _arg| Ok(VValue::Unit)),
                impl_u: Arc::new(|_cb, _t, _arg, _store| Ok(UValue::Unit)),
            },
            // frees the pointer but hands it back (stale pointer)
            "stale" => AbstractFnSpec {
                name: decl.name.clone(),
                signature: decl.signature.clone(),
                impl_v: Arc::new(|_cb, _t, arg| Ok(arg)),
                impl_u: Arc::new(|_cb, _t, arg, store| {
                    if let UValue::Ptr(p) = &arg {
                        store.free(*p).unwrap();
                    }
                    Ok(arg)
                }),
            },
            _ => unreachable!(),
        };
        reg.register_fn(spec).unwrap();
        reg
    }

    fn run_negative(which: &str, src: &str, fname: &str) -> OracleVerdict {
        let prog = parse_program(src).unwrap();
        let reg = broken_registry(&prog, which);
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(5))]));
        let f = prog.lookup_fun(fname).unwrap();
        let (arg, res) = f.signature.arg_result();
        let (arg, res) = (arg.clone(), res.clone());
        refinement_oracle(
            &prog,
            &reg,
            fname,
            &VValue::Record(vec![("n".into(), u8lit_v(5))]),
            &UValue::Ptr(p),
            &store,
            &arg,
            &res,
            DEFAULT_FUEL,
        )
    }

    #[test]
    fn oracle_rejects_aliasing_ffi() {
        let verdict = run_negative(
            "alias",
            "(absdef dup (forall) (fn (r (rec wr (n u8)))
               (tuple (rec wr (n u8)) (rec wr (n u8)))))
             (def go (forall) (fn (r (rec wr (n u8)))
               (tuple (rec wr (n u8)) (rec wr (n u8)))
               (app (funref dup) r)))",
            "go",
        );
        assert!(!verdict.pass);
        let f = verdict.failure.unwrap();
        assert_eq!(f.phase, "ffi-assumption");
        assert!(f.detail.contains("AliasViolation"), "{}", f.detail);
    }

    #[test]
    fn oracle_rejects_leaking_ffi() {
        let verdict = run_negative(
            "leak",
            "(absdef sink (forall) (fn (r (rec wr (n u8))) unit))
             (def go (forall) (fn (r (rec wr (n u8))) unit
               (app (funref sink) r)))",
            "go",
        );
        assert!(!verdict.pass);
        let f = verdict.failure.unwrap();
        assert!(f.detail.contains("LeakFreedom"), "{}", f.detail);
    }

    #[test]
    fn oracle_rejects_stale_pointer_ffi() {
        let verdict = run_negative(
            "stale",
            "(absdef keep (forall) (fn (r (rec wr (n u8))) (rec wr (n u8))))
             (def go (forall) (fn (r (rec wr (n u8))) (rec wr (n u8))
               (app (funref keep) r)))",
            "go",
        );
        assert!(!verdict.pass);
        let f = verdict.failure.unwrap();
        assert!(f.detail.contains("DanglingPointer"), "{}", f.detail);
    }

    #[test]
    fn oracle_accepts_readonly_aliased_inputs() {
        // the same read-only pointer on both sides of a pair is legal
        let src = "(def sum (forall)
          (fn (p (tuple (rec ro (n u8)) (rec ro (n u8)))) u8
            (take p1 p1 l p
              (take p2 p2 r p1
                (op + (member l n) (member r n))))))";
        let prog = parse_program(src).unwrap();
        let reg = Registry::new();
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(7))]));
        let rec_v = VValue::Record(vec![("n".into(), u8lit_v(7))]);
        let u = UValue::Record(vec![
            ("p1".into(), UValue::Ptr(p)),
            ("p2".into(), UValue::Ptr(p)),
        ]);
        let v = VValue::Record(vec![
            ("p1".into(), rec_v.clone()),
            ("p2".into(), rec_v),
        ]);
        let f = prog.lookup_fun("sum").unwrap();
        let (arg_ty, res_ty) = f.signature.arg_result();
        let verdict = refinement_oracle(
            &prog, &reg, "sum", &v, &u, &store, arg_ty, res_ty, DEFAULT_FUEL,
        );
        assert!(verdict.pass, "{:?}", verdict.failure);
        assert_eq!(verdict.sets_in.ro, [p].into());
    }

    #[test]
    fn oracle_rejects_writable_aliased_inputs() {
        let src = "(def fst (forall)
          (fn (p (tuple (rec wr (n u8)) (rec wr (n u8))))
            (tuple (rec wr (n u8)) (rec wr (n u8)))
            p))";
        let prog = parse_program(src).unwrap();
        let reg = Registry::new();
        let mut store = Store::new();
        let p = store.alloc(UValue::Record(vec![("n".into(), u8lit_u(7))]));
        let rec_v = VValue::Record(vec![("n".into(), u8lit_v(7))]);
        let u = UValue::Record(vec![
            ("p1".into(), UValue::Ptr(p)),
            ("p2".into(), UValue::Ptr(p)),
        ]);
        let v = VValue::Record(vec![
            ("p1".into(), rec_v.clone()),
            ("p2".into(), rec_v),
        ]);
        let f = prog.lookup_fun("fst").unwrap();
        let (arg_ty, res_ty) = f.signature.arg_result();
        let verdict = refinement_oracle(
            &prog, &reg, "fst", &v, &u, &store, arg_ty, res_ty, DEFAULT_FUEL,
        );
        assert!(!verdict.pass);
        let fail = verdict.failure.unwrap();
        assert_eq!(fail.phase, "precondition");
        assert!(fail.detail.contains("AliasViolation"), "{}", fail.detail);
    }

    #[test]
    fn oracle_exercises_letbang_and_polymorphism() {
        let src = "
          (absdef wordarray_create (forall (a (D S E))) (fn (n u32) (abs wordarray wr a)))
          (absdef wordarray_length (forall (a (D S E))) (fn (x (abs wordarray ro a)) u32))
          (absdef wordarray_free (forall (a (D S E))) (fn (x (abs wordarray wr a)) unit))
          (def id (forall (a ())) (fn (x a) a x))
          (def go (forall) (fn (n u32) u32
            (let arr (app (funref wordarray_create u16) n)
              (letbang (arr) len (app (funref wordarray_length u16) arr)
                (let z (app (funref wordarray_free u16) arr)
                  (app (funref id u32) len))))))";
        let verdict = run_oracle(
            src,
            "go",
            VValue::lit(4, PrimType::U32),
            UValue::lit(4, PrimType::U32),
            Store::new(),
        );
        assert!(verdict.pass, "{:?}", verdict.failure);
    }
}
