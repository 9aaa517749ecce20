//! Big-step interpreter for the imperative update semantics: evaluation
//! threads a mutable store mapping pointers to values. Boxed records live
//! behind pointers; `put` on a pointer updates the store destructively and
//! returns the same pointer.

use crate::ast::*;
use crate::ffi::{CallU, Registry};
use crate::kinding::{subst_expr, TypeSubst};
use crate::ops::{apply_primop, OpError};
use crate::sem_value::{Env, EvalError};
use std::collections::{BTreeMap, BTreeSet};

/// Abstract pointer identity. Never reused within one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pointer(pub u64);

/// Update-semantics values: as the value semantics plus pointers, and
/// abstract values may own pointers of their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UValue {
    Lit(Literal),
    Unit,
    Fun { param: String, body: Expr },
    AbsFun { name: String, typeargs: Vec<CoreType> },
    Con(String, Box<UValue>),
    Record(Vec<(String, UValue)>),
    Abstract { tag: String, items: Vec<UValue>, owned: BTreeSet<Pointer> },
    Ptr(Pointer),
}

impl UValue {
    pub fn lit(v: u64, t: PrimType) -> UValue {
        UValue::Lit(Literal::uint(v, t))
    }

    pub fn as_lit(&self) -> Option<Literal> {
        match self {
            UValue::Lit(l) => Some(*l),
            _ => None,
        }
    }
}

/// Partial map from pointers to values with a monotone allocation counter.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Store {
    map: BTreeMap<Pointer, UValue>,
    next: u64,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn alloc(&mut self, u: UValue) -> Pointer {
        let p = Pointer(self.next);
        self.next += 1;
        self.map.insert(p, u);
        p
    }

    pub fn free(&mut self, p: Pointer) -> Result<(), EvalError> {
        match self.map.remove(&p) {
            Some(_) => Ok(()),
            None => Err(EvalError::DoubleFree { ptr: p }),
        }
    }

    pub fn get(&self, p: Pointer) -> Option<&UValue> {
        self.map.get(&p)
    }

    pub fn get_mut(&mut self, p: Pointer) -> Option<&mut UValue> {
        self.map.get_mut(&p)
    }

    pub fn contains(&self, p: Pointer) -> bool {
        self.map.contains_key(&p)
    }

    pub fn domain(&self) -> BTreeSet<Pointer> {
        self.map.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Pointer, &UValue)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Every pointer reachable from `u`, following the store.
    pub fn reachable_from(&self, u: &UValue) -> BTreeSet<Pointer> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![u.clone()];
        while let Some(v) = stack.pop() {
            match v {
                UValue::Ptr(p) => {
                    if seen.insert(p) {
                        if let Some(inner) = self.get(p) {
                            stack.push(inner.clone());
                        }
                    }
                }
                UValue::Con(_, inner) => stack.push(*inner),
                UValue::Record(fields) => {
                    stack.extend(fields.into_iter().map(|(_, v)| v));
                }
                UValue::Abstract { items, owned, .. } => {
                    stack.extend(items);
                    for p in owned {
                        if seen.insert(p) {
                            if let Some(inner) = self.get(p) {
                                stack.push(inner.clone());
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        seen
    }

    /// Check that every pointer reachable from `u` is live in this store.
    pub fn check_closed(&self, u: &UValue) -> Result<(), Pointer> {
        for p in self.reachable_from(u) {
            if !self.contains(p) {
                return Err(p);
            }
        }
        Ok(())
    }
}

/// Allocate a fresh pointer mapped to `u`.
pub fn alloc(store: &mut Store, u: UValue) -> Pointer {
    store.alloc(u)
}

/// Remove `p` from the store; freeing an absent pointer is an error.
pub fn free(store: &mut Store, p: Pointer) -> Result<(), EvalError> {
    store.free(p)
}

pub type UEnv = Env<UValue>;

pub struct UInterp<'p> {
    prog: &'p Program,
    reg: &'p Registry,
    fuel: u64,
}

impl<'p> UInterp<'p> {
    pub fn new(prog: &'p Program, reg: &'p Registry, fuel: u64) -> UInterp<'p> {
        UInterp { prog, reg, fuel }
    }

    pub fn fuel_left(&self) -> u64 {
        self.fuel
    }

    fn tick(&mut self) -> Result<(), EvalError> {
        if self.fuel == 0 {
            return Err(EvalError::FuelExhausted);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn stuck<T>(span: Span, reason: impl Into<String>) -> Result<T, EvalError> {
        Err(EvalError::Stuck { span, reason: reason.into() })
    }

    pub fn funref_value(&self, fname: &str, typeargs: &[CoreType]) -> Result<UValue, EvalError> {
        match self.prog.lookup(fname) {
            Some(Def::Fun(f)) => {
                let subst = TypeSubst::new(
                    f.signature
                        .binders
                        .iter()
                        .map(|(n, _)| n.clone())
                        .zip(typeargs.iter().cloned()),
                );
                let body = if subst.is_empty() {
                    f.body.clone()
                } else {
                    subst_expr(&f.body, &subst)
                };
                Ok(UValue::Fun { param: f.param.clone(), body })
            }
            Some(Def::Abstract(a)) => Ok(UValue::AbsFun {
                name: a.name.clone(),
                typeargs: typeargs.to_vec(),
            }),
            None => Self::stuck(Span::DUMMY, format!("unknown function `{fname}`")),
        }
    }

    pub fn apply(
        &mut self,
        f: &UValue,
        arg: UValue,
        store: &mut Store,
    ) -> Result<UValue, EvalError> {
        match f {
            UValue::Fun { param, body } => {
                let mut env = UEnv::single(param.clone(), arg);
                self.eval(&mut env, store, body)
            }
            UValue::AbsFun { name, typeargs } => {
                let spec = self
                    .reg
                    .lookup_fn(name)
                    .ok_or_else(|| EvalError::MissingAbstractImpl { name: name.clone() })?;
                let impl_u = spec.impl_u.clone();
                impl_u(self, typeargs, arg, store)
            }
            _ => Self::stuck(Span::DUMMY, "applied a non-function value"),
        }
    }

    pub fn eval(
        &mut self,
        env: &mut UEnv,
        store: &mut Store,
        e: &Expr,
    ) -> Result<UValue, EvalError> {
        use ExprKind::*;
        self.tick()?;
        match &e.kind {
            Var(x) => match env.lookup(x) {
                Some(v) => Ok(v.clone()),
                None => Self::stuck(e.span, format!("unbound variable `{x}`")),
            },
            Unit => Ok(UValue::Unit),
            Lit(l) => Ok(UValue::Lit(*l)),
            FunRef(f, args) => self.funref_value(f, args),
            PrimOp(op, args) => {
                let mut lits = Vec::with_capacity(args.len());
                for a in args {
                    match self.eval(env, store, a)? {
                        UValue::Lit(l) => lits.push(l),
                        _ => return Self::stuck(a.span, "operator applied to non-literal"),
                    }
                }
                match apply_primop(*op, &lits) {
                    Ok(l) => Ok(UValue::Lit(l)),
                    Err(OpError::DivisionByZero) => {
                        Err(EvalError::DivisionByZero { span: e.span })
                    }
                    Err(OpError::BadOperands) => {
                        Self::stuck(e.span, "operator operand shapes disagree")
                    }
                }
            }
            App(f, a) => {
                let fv = self.eval(env, store, f)?;
                let av = self.eval(env, store, a)?;
                self.apply(&fv, av, store)
            }
            Let(x, e1, e2) | LetBang(_, x, e1, e2) => {
                let v1 = self.eval(env, store, e1)?;
                env.push(x.clone(), v1);
                let v = self.eval(env, store, e2);
                env.pop();
                v
            }
            If(c, t, els) => {
                let cond = self.eval(env, store, c)?;
                match cond.as_lit().and_then(|l| l.as_bool()) {
                    Some(true) => self.eval(env, store, t),
                    Some(false) => self.eval(env, store, els),
                    None => Self::stuck(c.span, "condition is not a boolean"),
                }
            }
            Cast(t, inner) => match self.eval(env, store, inner)? {
                UValue::Lit(l) => Ok(UValue::Lit(Literal::uint(l.value, *t))),
                _ => Self::stuck(inner.span, "cast applied to non-literal"),
            },
            Promote(_, inner) => self.eval(env, store, inner),
            Con(c, inner) => {
                let v = self.eval(env, store, inner)?;
                Ok(UValue::Con(c.clone(), Box::new(v)))
            }
            Case { scrutinee, ctor, bound, matched, else_bound, else_body } => {
                let sv = self.eval(env, store, scrutinee)?;
                match sv {
                    UValue::Con(c, payload) if &c == ctor => {
                        env.push(bound.clone(), *payload);
                        let v = self.eval(env, store, matched);
                        env.pop();
                        v
                    }
                    UValue::Con(c, payload) => {
                        env.push(else_bound.clone(), UValue::Con(c, payload));
                        let v = self.eval(env, store, else_body);
                        env.pop();
                        v
                    }
                    _ => Self::stuck(scrutinee.span, "case scrutinee is not a variant"),
                }
            }
            Esac(inner) => match self.eval(env, store, inner)? {
                UValue::Con(_, payload) => Ok(*payload),
                _ => Self::stuck(inner.span, "esac operand is not a variant"),
            },
            Struct(fields) => {
                let mut out = Vec::with_capacity(fields.len());
                for (f, e1) in fields {
                    out.push((f.clone(), self.eval(env, store, e1)?));
                }
                Ok(UValue::Record(out))
            }
            Member(inner, f) => match self.eval(env, store, inner)? {
                UValue::Record(fields) => fields
                    .into_iter()
                    .find(|(n, _)| n == f)
                    .map(|(_, v)| v)
                    .ok_or(EvalError::Stuck {
                        span: e.span,
                        reason: format!("record lacks field `{f}`"),
                    }),
                UValue::Ptr(p) => match store.get(p) {
                    Some(UValue::Record(fields)) => fields
                        .iter()
                        .find(|(n, _)| n == f)
                        .map(|(_, v)| v.clone())
                        .ok_or(EvalError::Stuck {
                            span: e.span,
                            reason: format!("record lacks field `{f}`"),
                        }),
                    Some(_) => Self::stuck(e.span, "pointer target is not a record"),
                    None => Err(EvalError::DanglingPointer { ptr: p }),
                },
                _ => Self::stuck(inner.span, "member access on non-record"),
            },
            Put(e1, f, e2) => {
                let rv = self.eval(env, store, e1)?;
                let nv = self.eval(env, store, e2)?;
                match rv {
                    UValue::Record(fields) => {
                        let mut out = fields;
                        match out.iter_mut().find(|(n, _)| n == f) {
                            Some(slot) => slot.1 = nv,
                            None => {
                                return Self::stuck(e.span, format!("record lacks field `{f}`"))
                            }
                        }
                        Ok(UValue::Record(out))
                    }
                    UValue::Ptr(p) => {
                        match store.get_mut(p) {
                            Some(UValue::Record(fields)) => {
                                match fields.iter_mut().find(|(n, _)| n == f) {
                                    Some(slot) => slot.1 = nv,
                                    None => {
                                        return Self::stuck(
                                            e.span,
                                            format!("record lacks field `{f}`"),
                                        )
                                    }
                                }
                            }
                            Some(_) => {
                                return Self::stuck(e.span, "pointer target is not a record")
                            }
                            None => return Err(EvalError::DanglingPointer { ptr: p }),
                        }
                        Ok(UValue::Ptr(p))
                    }
                    _ => Self::stuck(e1.span, "put on non-record"),
                }
            }
            Take { rec_bound, field, field_bound, record, body } => {
                let rv = self.eval(env, store, record)?;
                let (bound_rec, field_val) = match &rv {
                    UValue::Record(fields) => {
                        let fv = fields
                            .iter()
                            .find(|(n, _)| n == field)
                            .map(|(_, v)| v.clone())
                            .ok_or(EvalError::Stuck {
                                span: e.span,
                                reason: format!("record lacks field `{field}`"),
                            })?;
                        (rv.clone(), fv)
                    }
                    UValue::Ptr(p) => match store.get(*p) {
                        Some(UValue::Record(fields)) => {
                            let fv = fields
                                .iter()
                                .find(|(n, _)| n == field)
                                .map(|(_, v)| v.clone())
                                .ok_or(EvalError::Stuck {
                                    span: e.span,
                                    reason: format!("record lacks field `{field}`"),
                                })?;
                            (UValue::Ptr(*p), fv)
                        }
                        Some(_) => {
                            return Self::stuck(e.span, "pointer target is not a record")
                        }
                        None => return Err(EvalError::DanglingPointer { ptr: *p }),
                    },
                    _ => return Self::stuck(record.span, "take on non-record"),
                };
                env.push(field_bound.clone(), field_val);
                env.push(rec_bound.clone(), bound_rec);
                let v = self.eval(env, store, body);
                env.pop();
                env.pop();
                v
            }
            Match(scrutinee, arms) => {
                let sv = self.eval(env, store, scrutinee)?;
                match sv {
                    UValue::Con(c, payload) => {
                        for (ac, x, body) in arms {
                            if ac == &c {
                                env.push(x.clone(), *payload);
                                let v = self.eval(env, store, body);
                                env.pop();
                                return v;
                            }
                        }
                        Self::stuck(e.span, format!("no match arm for constructor `{c}`"))
                    }
                    _ => Self::stuck(scrutinee.span, "match scrutinee is not a variant"),
                }
            }
        }
    }
}

impl<'p> CallU for UInterp<'p> {
    fn call(&mut self, f: &UValue, arg: UValue, store: &mut Store) -> Result<UValue, EvalError> {
        self.apply(f, arg, store)
    }
}

/// Evaluate an expression under the update semantics, threading the store.
pub fn eval_u(
    prog: &Program,
    reg: &Registry,
    env: &UEnv,
    store: Store,
    e: &Expr,
    fuel: u64,
) -> Result<(UValue, Store), EvalError> {
    let mut interp = UInterp::new(prog, reg, fuel);
    let mut env = env.clone();
    let mut store = store;
    let v = interp.eval(&mut env, &mut store, e)?;
    Ok((v, store))
}

/// Apply a named function to an argument under the update semantics.
pub fn apply_fn_u(
    prog: &Program,
    reg: &Registry,
    fname: &str,
    typeargs: &[CoreType],
    arg: UValue,
    store: Store,
    fuel: u64,
) -> Result<(UValue, Store), EvalError> {
    let mut interp = UInterp::new(prog, reg, fuel);
    let f = interp.funref_value(fname, typeargs)?;
    let mut store = store;
    let v = interp.apply(&f, arg, &mut store)?;
    Ok((v, store))
}
