//! The kind system: kinding judgement, maximal-kind algorithm, the `!`
//! (bang) operator on types, kinds and modes, and type substitution.

use crate::ast::{CoreType, FieldDecl, Kind, Mode};
use crate::diagnostics::{Code, Diagnostic};
use crate::Span;
use std::collections::BTreeMap;

/// Kind context: ordered bindings from type variable to kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KindContext {
    bindings: Vec<(String, Kind)>,
}

impl KindContext {
    pub fn new(bindings: Vec<(String, Kind)>) -> KindContext {
        KindContext { bindings }
    }

    pub fn empty() -> KindContext {
        KindContext::default()
    }

    pub fn lookup(&self, name: &str) -> Option<Kind> {
        self.bindings
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, k)| *k)
    }

    pub fn bindings(&self) -> &[(String, Kind)] {
        &self.bindings
    }
}

/// Kind granted by a storage mode.
pub fn mode_kind(m: Mode) -> Kind {
    match m {
        Mode::ReadOnly => Kind::DS,
        Mode::Writable => Kind::E,
        Mode::Unboxed => Kind::ALL,
    }
}

pub fn bang_mode(m: Mode) -> Mode {
    match m {
        Mode::ReadOnly => Mode::ReadOnly,
        Mode::Writable => Mode::ReadOnly,
        Mode::Unboxed => Mode::Unboxed,
    }
}

pub fn bang_kind(k: Kind) -> Kind {
    if Kind::DS.is_subset(k) {
        k
    } else {
        Kind::DS
    }
}

/// The `!` operator on types: all writable modes become read-only;
/// functions are unaffected.
pub fn bang_type(t: &CoreType) -> CoreType {
    match t {
        CoreType::Var(a) => CoreType::VarBang(a.clone()),
        CoreType::VarBang(a) => CoreType::VarBang(a.clone()),
        CoreType::Unit => CoreType::Unit,
        CoreType::Prim(p) => CoreType::Prim(*p),
        CoreType::Fun(a, r) => CoreType::Fun(a.clone(), r.clone()),
        CoreType::Variant(alts) => CoreType::Variant(
            alts.iter().map(|(c, t)| (c.clone(), bang_type(t))).collect(),
        ),
        CoreType::Record { fields, mode } => CoreType::Record {
            fields: fields
                .iter()
                .map(|f| FieldDecl { name: f.name.clone(), ty: bang_type(&f.ty), taken: f.taken })
                .collect(),
            mode: bang_mode(*mode),
        },
        CoreType::Abstract { name, args, mode } => CoreType::Abstract {
            name: name.clone(),
            args: args.iter().map(bang_type).collect(),
            mode: bang_mode(*mode),
        },
    }
}

/// The unique maximal kind of a type under a kind context, computed
/// structurally. Every valid kind for the type is a subset of this one.
pub fn max_kind(delta: &KindContext, t: &CoreType) -> Result<Kind, Diagnostic> {
    Ok(match t {
        CoreType::Unit | CoreType::Prim(_) | CoreType::Fun(..) => Kind::ALL,
        CoreType::Var(a) => delta.lookup(a).ok_or_else(|| unbound(a))?,
        CoreType::VarBang(a) => bang_kind(delta.lookup(a).ok_or_else(|| unbound(a))?),
        CoreType::Variant(alts) => {
            let mut k = Kind::ALL;
            for (_, ty) in alts {
                k = k.intersect(max_kind(delta, ty)?);
            }
            k
        }
        CoreType::Record { fields, mode } => {
            let mut k = mode_kind(*mode);
            for f in fields {
                if !f.taken {
                    k = k.intersect(max_kind(delta, &f.ty)?);
                }
            }
            k
        }
        CoreType::Abstract { args, mode, .. } => {
            let mut k = mode_kind(*mode);
            for a in args {
                k = k.intersect(max_kind(delta, a)?);
            }
            k
        }
    })
}

fn unbound(a: &str) -> Diagnostic {
    Diagnostic::new(
        Code::UnboundTypeVar,
        Span::DUMMY,
        format!("type variable `{a}` is not bound in the kind context"),
    )
}

/// Does the type admit the given kind?
pub fn kind_check(delta: &KindContext, t: &CoreType, k: Kind) -> Result<bool, Diagnostic> {
    Ok(k.is_subset(max_kind(delta, t)?))
}

/// A substitution from type variables to (variable-free targets of) types.
/// Rank-1 predicativity means targets never mention the domain.
#[derive(Debug, Clone, Default)]
pub struct TypeSubst {
    map: BTreeMap<String, CoreType>,
}

impl TypeSubst {
    pub fn new(pairs: impl IntoIterator<Item = (String, CoreType)>) -> TypeSubst {
        TypeSubst { map: pairs.into_iter().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn lookup(&self, a: &str) -> Option<&CoreType> {
        self.map.get(a)
    }
}

/// Capture-free substitution. A plain variable is replaced by its target;
/// an observed variable `a!` is replaced by the banged target. Variables
/// outside the domain are left in place.
pub fn subst_type(t: &CoreType, s: &TypeSubst) -> CoreType {
    match t {
        CoreType::Var(a) => match s.lookup(a) {
            Some(target) => target.clone(),
            None => t.clone(),
        },
        CoreType::VarBang(a) => match s.lookup(a) {
            Some(target) => bang_type(target),
            None => t.clone(),
        },
        CoreType::Unit | CoreType::Prim(_) => t.clone(),
        CoreType::Fun(a, r) => CoreType::fun(subst_type(a, s), subst_type(r, s)),
        CoreType::Variant(alts) => CoreType::Variant(
            alts.iter().map(|(c, ty)| (c.clone(), subst_type(ty, s))).collect(),
        ),
        CoreType::Record { fields, mode } => CoreType::Record {
            fields: fields
                .iter()
                .map(|f| FieldDecl {
                    name: f.name.clone(),
                    ty: subst_type(&f.ty, s),
                    taken: f.taken,
                })
                .collect(),
            mode: *mode,
        },
        CoreType::Abstract { name, args, mode } => CoreType::Abstract {
            name: name.clone(),
            args: args.iter().map(|a| subst_type(a, s)).collect(),
            mode: *mode,
        },
    }
}

/// Apply a type substitution to every type embedded in an expression:
/// function-reference type arguments and promote targets.
pub fn subst_expr(e: &crate::ast::Expr, s: &TypeSubst) -> crate::ast::Expr {
    use crate::ast::{Expr, ExprKind::*};
    let kind = match &e.kind {
        Var(x) => Var(x.clone()),
        Unit => Unit,
        Lit(l) => Lit(*l),
        FunRef(f, args) => FunRef(f.clone(), args.iter().map(|a| subst_type(a, s)).collect()),
        PrimOp(op, args) => PrimOp(*op, args.iter().map(|a| subst_expr(a, s)).collect()),
        App(f, a) => App(Box::new(subst_expr(f, s)), Box::new(subst_expr(a, s))),
        Let(x, a, b) => Let(x.clone(), Box::new(subst_expr(a, s)), Box::new(subst_expr(b, s))),
        LetBang(ys, x, a, b) => LetBang(
            ys.clone(),
            x.clone(),
            Box::new(subst_expr(a, s)),
            Box::new(subst_expr(b, s)),
        ),
        If(c, t, e2) => If(
            Box::new(subst_expr(c, s)),
            Box::new(subst_expr(t, s)),
            Box::new(subst_expr(e2, s)),
        ),
        Cast(t, a) => Cast(*t, Box::new(subst_expr(a, s))),
        Promote(alts, a) => Promote(
            alts.iter().map(|(c, t)| (c.clone(), subst_type(t, s))).collect(),
            Box::new(subst_expr(a, s)),
        ),
        Con(c, a) => Con(c.clone(), Box::new(subst_expr(a, s))),
        Case { scrutinee, ctor, bound, matched, else_bound, else_body } => Case {
            scrutinee: Box::new(subst_expr(scrutinee, s)),
            ctor: ctor.clone(),
            bound: bound.clone(),
            matched: Box::new(subst_expr(matched, s)),
            else_bound: else_bound.clone(),
            else_body: Box::new(subst_expr(else_body, s)),
        },
        Esac(a) => Esac(Box::new(subst_expr(a, s))),
        Struct(fs) => Struct(fs.iter().map(|(f, a)| (f.clone(), subst_expr(a, s))).collect()),
        Member(a, f) => Member(Box::new(subst_expr(a, s)), f.clone()),
        Put(a, f, b) => Put(Box::new(subst_expr(a, s)), f.clone(), Box::new(subst_expr(b, s))),
        Take { rec_bound, field, field_bound, record, body } => Take {
            rec_bound: rec_bound.clone(),
            field: field.clone(),
            field_bound: field_bound.clone(),
            record: Box::new(subst_expr(record, s)),
            body: Box::new(subst_expr(body, s)),
        },
        Match(sc, arms) => Match(
            Box::new(subst_expr(sc, s)),
            arms.iter().map(|(c, x, b)| (c.clone(), x.clone(), subst_expr(b, s))).collect(),
        ),
    };
    Expr::new(kind, e.span)
}

/// Substitution that must fully ground the type; any leftover variable is
/// an error.
pub fn subst_type_total(t: &CoreType, s: &TypeSubst) -> Result<CoreType, Diagnostic> {
    let out = subst_type(t, s);
    if let Some(v) = out.free_type_vars().into_iter().next() {
        return Err(unbound(&v));
    }
    Ok(out)
}

/// An independent, rule-by-rule implementation of the kinding judgement,
/// transcribing each inference rule directly with no maximal-kind shortcut.
/// Used as an oracle to cross-check [`max_kind`]; keep it separate from the
/// algorithmic path.
pub mod rulecheck {
    use super::*;

    pub fn holds(delta: &KindContext, t: &CoreType, k: Kind) -> bool {
        match t {
            // KUnit, KPrim, KFun admit any kind
            CoreType::Unit | CoreType::Prim(_) | CoreType::Fun(..) => true,
            // KVar: (a:k') in delta and k ⊆ k'
            CoreType::Var(a) => match delta.lookup(a) {
                Some(k2) => k.is_subset(k2),
                None => false,
            },
            // KVar!: (a:k') in delta and k ⊆ bang(k')
            CoreType::VarBang(a) => match delta.lookup(a) {
                Some(k2) => k.is_subset(bang_kind(k2)),
                None => false,
            },
            // KVariant: every alternative kinds at k
            CoreType::Variant(alts) => alts.iter().all(|(_, ty)| holds(delta, ty, k)),
            // KRec: mode admits k and every non-taken field kinds at k
            CoreType::Record { fields, mode } => {
                k.is_subset(mode_kind(*mode))
                    && fields.iter().filter(|f| !f.taken).all(|f| holds(delta, &f.ty, k))
            }
            // KAbs: mode admits k and every parameter kinds at k
            CoreType::Abstract { args, mode, .. } => {
                k.is_subset(mode_kind(*mode)) && args.iter().all(|a| holds(delta, a, k))
            }
        }
    }
}
