//! Big-step interpreter for the purely functional value semantics.
//!
//! Values are immutable; `put` builds a fresh record and evaluation never
//! mutates its inputs. A step budget (fuel) turns hypothetical
//! nontermination bugs into reported failures; checked programs never
//! exhaust it.

use crate::ast::*;
use crate::ffi::{CallV, Registry};
use crate::kinding::{subst_expr, TypeSubst};
use crate::ops::{apply_primop, OpError};
use crate::sem_update::Pointer;
use thiserror::Error;

pub const DEFAULT_FUEL: u64 = 10_000_000;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("stuck at {span:?}: {reason}")]
    Stuck { span: Span, reason: String },
    #[error("division by zero at {span:?}")]
    DivisionByZero { span: Span },
    #[error("step budget exhausted")]
    FuelExhausted,
    #[error("no implementation registered for abstract function `{name}`")]
    MissingAbstractImpl { name: String },
    #[error("dangling pointer {ptr:?}")]
    DanglingPointer { ptr: Pointer },
    #[error("pointer {ptr:?} freed twice or never allocated")]
    DoubleFree { ptr: Pointer },
}

/// Value-semantics values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VValue {
    Lit(Literal),
    Unit,
    /// A top-level function, type arguments already substituted into the
    /// body at reference time.
    Fun { param: String, body: Expr },
    AbsFun { name: String, typeargs: Vec<CoreType> },
    Con(String, Box<VValue>),
    /// Every slot holds a value, including logically taken ones.
    Record(Vec<(String, VValue)>),
    Abstract { tag: String, items: Vec<VValue> },
}

impl VValue {
    pub fn lit(v: u64, t: PrimType) -> VValue {
        VValue::Lit(Literal::uint(v, t))
    }

    pub fn as_lit(&self) -> Option<Literal> {
        match self {
            VValue::Lit(l) => Some(*l),
            _ => None,
        }
    }
}

/// Ordered environment; innermost binding wins on lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env<V> {
    bindings: Vec<(String, V)>,
}

impl<V> Env<V> {
    pub fn new() -> Env<V> {
        Env { bindings: Vec::new() }
    }

    pub fn single(name: impl Into<String>, v: V) -> Env<V> {
        Env { bindings: vec![(name.into(), v)] }
    }

    pub fn lookup(&self, name: &str) -> Option<&V> {
        self.bindings.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn push(&mut self, name: impl Into<String>, v: V) {
        self.bindings.push((name.into(), v));
    }

    pub fn pop(&mut self) {
        self.bindings.pop();
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn truncate(&mut self, len: usize) {
        self.bindings.truncate(len);
    }

    pub fn bindings(&self) -> &[(String, V)] {
        &self.bindings
    }
}

pub type VEnv = Env<VValue>;

pub struct VInterp<'p> {
    prog: &'p Program,
    reg: &'p Registry,
    fuel: u64,
}

impl<'p> VInterp<'p> {
    pub fn new(prog: &'p Program, reg: &'p Registry, fuel: u64) -> VInterp<'p> {
        VInterp { prog, reg, fuel }
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

    /// Build the value of a function reference: concrete definitions yield
    /// a function value with type arguments substituted into the body;
    /// abstract declarations yield an abstract function value.
    pub fn funref_value(&self, fname: &str, typeargs: &[CoreType]) -> Result<VValue, EvalError> {
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
                Ok(VValue::Fun { param: f.param.clone(), body })
            }
            Some(Def::Abstract(a)) => Ok(VValue::AbsFun {
                name: a.name.clone(),
                typeargs: typeargs.to_vec(),
            }),
            None => Self::stuck(Span::DUMMY, format!("unknown function `{fname}`")),
        }
    }

    pub fn apply(&mut self, f: &VValue, arg: VValue) -> Result<VValue, EvalError> {
        match f {
            VValue::Fun { param, body } => {
                let mut env = VEnv::single(param.clone(), arg);
                self.eval(&mut env, body)
            }
            VValue::AbsFun { name, typeargs } => {
                let spec = self
                    .reg
                    .lookup_fn(name)
                    .ok_or_else(|| EvalError::MissingAbstractImpl { name: name.clone() })?;
                let impl_v = spec.impl_v.clone();
                impl_v(self, typeargs, arg)
            }
            _ => Self::stuck(Span::DUMMY, "applied a non-function value"),
        }
    }

    pub fn eval(&mut self, env: &mut VEnv, e: &Expr) -> Result<VValue, EvalError> {
        use ExprKind::*;
        self.tick()?;
        match &e.kind {
            Var(x) => match env.lookup(x) {
                Some(v) => Ok(v.clone()),
                None => Self::stuck(e.span, format!("unbound variable `{x}`")),
            },
            Unit => Ok(VValue::Unit),
            Lit(l) => Ok(VValue::Lit(*l)),
            FunRef(f, args) => self.funref_value(f, args),
            PrimOp(op, args) => {
                let mut lits = Vec::with_capacity(args.len());
                for a in args {
                    match self.eval(env, a)? {
                        VValue::Lit(l) => lits.push(l),
                        _ => return Self::stuck(a.span, "operator applied to non-literal"),
                    }
                }
                match apply_primop(*op, &lits) {
                    Ok(l) => Ok(VValue::Lit(l)),
                    Err(OpError::DivisionByZero) => {
                        Err(EvalError::DivisionByZero { span: e.span })
                    }
                    Err(OpError::BadOperands) => {
                        Self::stuck(e.span, "operator operand shapes disagree")
                    }
                }
            }
            App(f, a) => {
                let fv = self.eval(env, f)?;
                let av = self.eval(env, a)?;
                self.apply(&fv, av)
            }
            Let(x, e1, e2) | LetBang(_, x, e1, e2) => {
                let v1 = self.eval(env, e1)?;
                env.push(x.clone(), v1);
                let v = self.eval(env, e2);
                env.pop();
                v
            }
            If(c, t, els) => {
                let cond = self.eval(env, c)?;
                match cond.as_lit().and_then(|l| l.as_bool()) {
                    Some(true) => self.eval(env, t),
                    Some(false) => self.eval(env, els),
                    None => Self::stuck(c.span, "condition is not a boolean"),
                }
            }
            Cast(t, inner) => match self.eval(env, inner)? {
                VValue::Lit(l) => Ok(VValue::Lit(Literal::uint(l.value, *t))),
                _ => Self::stuck(inner.span, "cast applied to non-literal"),
            },
            Promote(_, inner) => self.eval(env, inner),
            Con(c, inner) => {
                let v = self.eval(env, inner)?;
                Ok(VValue::Con(c.clone(), Box::new(v)))
            }
            Case { scrutinee, ctor, bound, matched, else_bound, else_body } => {
                let sv = self.eval(env, scrutinee)?;
                match sv {
                    VValue::Con(c, payload) if &c == ctor => {
                        env.push(bound.clone(), *payload);
                        let v = self.eval(env, matched);
                        env.pop();
                        v
                    }
                    VValue::Con(c, payload) => {
                        env.push(else_bound.clone(), VValue::Con(c, payload));
                        let v = self.eval(env, else_body);
                        env.pop();
                        v
                    }
                    _ => Self::stuck(scrutinee.span, "case scrutinee is not a variant"),
                }
            }
            Esac(inner) => match self.eval(env, inner)? {
                VValue::Con(_, payload) => Ok(*payload),
                _ => Self::stuck(inner.span, "esac operand is not a variant"),
            },
            Struct(fields) => {
                let mut out = Vec::with_capacity(fields.len());
                for (f, e1) in fields {
                    out.push((f.clone(), self.eval(env, e1)?));
                }
                Ok(VValue::Record(out))
            }
            Member(inner, f) => match self.eval(env, inner)? {
                VValue::Record(fields) => fields
                    .into_iter()
                    .find(|(n, _)| n == f)
                    .map(|(_, v)| v)
                    .ok_or(EvalError::Stuck {
                        span: e.span,
                        reason: format!("record lacks field `{f}`"),
                    }),
                _ => Self::stuck(inner.span, "member access on non-record"),
            },
            Put(e1, f, e2) => {
                let rv = self.eval(env, e1)?;
                let nv = self.eval(env, e2)?;
                match rv {
                    VValue::Record(fields) => {
                        let mut out = fields;
                        match out.iter_mut().find(|(n, _)| n == f) {
                            Some(slot) => slot.1 = nv,
                            None => {
                                return Self::stuck(e.span, format!("record lacks field `{f}`"))
                            }
                        }
                        Ok(VValue::Record(out))
                    }
                    _ => Self::stuck(e1.span, "put on non-record"),
                }
            }
            Take { rec_bound, field, field_bound, record, body } => {
                let rv = self.eval(env, record)?;
                match &rv {
                    VValue::Record(fields) => {
                        let fv = fields
                            .iter()
                            .find(|(n, _)| n == field)
                            .map(|(_, v)| v.clone())
                            .ok_or(EvalError::Stuck {
                                span: e.span,
                                reason: format!("record lacks field `{field}`"),
                            })?;
                        env.push(field_bound.clone(), fv);
                        env.push(rec_bound.clone(), rv);
                        let v = self.eval(env, body);
                        env.pop();
                        env.pop();
                        v
                    }
                    _ => Self::stuck(record.span, "take on non-record"),
                }
            }
            Match(scrutinee, arms) => {
                // direct multi-way evaluation; used only to cross-check the
                // desugaring pass
                let sv = self.eval(env, scrutinee)?;
                match sv {
                    VValue::Con(c, payload) => {
                        for (ac, x, body) in arms {
                            if ac == &c {
                                env.push(x.clone(), *payload);
                                let v = self.eval(env, body);
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

impl<'p> CallV for VInterp<'p> {
    fn call(&mut self, f: &VValue, arg: VValue) -> Result<VValue, EvalError> {
        self.apply(f, arg)
    }
}

/// Evaluate an expression under the value semantics.
pub fn eval_v(
    prog: &Program,
    reg: &Registry,
    env: &VEnv,
    e: &Expr,
    fuel: u64,
) -> Result<VValue, EvalError> {
    let mut interp = VInterp::new(prog, reg, fuel);
    let mut env = env.clone();
    interp.eval(&mut env, e)
}

/// Apply a named function (with type arguments) to an argument value.
pub fn apply_fn_v(
    prog: &Program,
    reg: &Registry,
    fname: &str,
    typeargs: &[CoreType],
    arg: VValue,
    fuel: u64,
) -> Result<VValue, EvalError> {
    let mut interp = VInterp::new(prog, reg, fuel);
    let f = interp.funref_value(fname, typeargs)?;
    interp.apply(&f, arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffi::Registry;
    use crate::parse::{parse_expr, parse_program};

    fn eval_str(src: &str) -> Result<VValue, EvalError> {
        let prog = Program::new(vec![]);
        let reg = Registry::new();
        let e = parse_expr(src).unwrap();
        eval_v(&prog, &reg, &VEnv::new(), &e, DEFAULT_FUEL)
    }

    #[test]
    fn primop_addition() {
        assert_eq!(eval_str("(op + 2 3)").unwrap(), VValue::lit(5, PrimType::U8));
    }

    #[test]
    fn put_builds_fresh_record() {
        let prog = Program::new(vec![]);
        let reg = Registry::new();
        let e = parse_expr("(put r f 9)").unwrap();
        let original = VValue::Record(vec![("f".into(), VValue::lit(1, PrimType::U8))]);
        let mut env = VEnv::single("r", original.clone());
        let mut interp = VInterp::new(&prog, &reg, DEFAULT_FUEL);
        let out = interp.eval(&mut env, &e).unwrap();
        assert_eq!(
            out,
            VValue::Record(vec![("f".into(), VValue::lit(9, PrimType::U8))])
        );
        // the original binding is untouched
        assert_eq!(env.lookup("r"), Some(&original));
    }

    #[test]
    fn case_else_receives_whole_variant() {
        let prog = Program::new(vec![]);
        let reg = Registry::new();
        let e = parse_expr("(case s A x 1 y (esac y))").unwrap();
        let scrut = VValue::Con("B".into(), Box::new(VValue::lit(7, PrimType::U8)));
        let mut env = VEnv::single("s", scrut);
        let mut interp = VInterp::new(&prog, &reg, DEFAULT_FUEL);
        assert_eq!(
            interp.eval(&mut env, &e).unwrap(),
            VValue::lit(7, PrimType::U8)
        );
    }

    #[test]
    fn apply_identity_at_type() {
        let prog = parse_program("(def id (forall (a ())) (fn (x a) a x))").unwrap();
        let reg = Registry::new();
        let out = apply_fn_v(
            &prog,
            &reg,
            "id",
            &[CoreType::Prim(PrimType::U32)],
            VValue::lit(7, PrimType::U32),
            DEFAULT_FUEL,
        )
        .unwrap();
        assert_eq!(out, VValue::lit(7, PrimType::U32));
    }

    #[test]
    fn unregistered_abstract_fn_fails() {
        let prog = parse_program("(absdef mystery (forall) (fn (x u8) u8))").unwrap();
        let reg = Registry::new();
        let err = apply_fn_v(&prog, &reg, "mystery", &[], VValue::lit(1, PrimType::U8), 100)
            .unwrap_err();
        assert!(matches!(err, EvalError::MissingAbstractImpl { .. }));
    }

    #[test]
    fn division_by_zero_reported() {
        assert!(matches!(
            eval_str("(op / 4 0)"),
            Err(EvalError::DivisionByZero { .. })
        ));
    }

    #[test]
    fn fuel_exhaustion_reported() {
        let prog = Program::new(vec![]);
        let reg = Registry::new();
        let e = parse_expr("(op + 1 (op + 1 (op + 1 1)))").unwrap();
        let err = eval_v(&prog, &reg, &VEnv::new(), &e, 2).unwrap_err();
        assert_eq!(err, EvalError::FuelExhausted);
    }

    #[test]
    fn reevaluation_is_identical() {
        let prog =
            parse_program("(def f (forall) (fn (x u8) u8 (op + x (op * x 2))))").unwrap();
        let reg = Registry::new();
        let a =
            apply_fn_v(&prog, &reg, "f", &[], VValue::lit(5, PrimType::U8), DEFAULT_FUEL).unwrap();
        let b =
            apply_fn_v(&prog, &reg, "f", &[], VValue::lit(5, PrimType::U8), DEFAULT_FUEL).unwrap();
        assert_eq!(a, b);
    }
}
