//! Source-to-source passes: multi-way match desugaring, A-normalisation,
//! and monomorphisation with rename-map emission.
//!
//! Fresh names use `t%n` with one program-wide counter per pass run and
//! `%` is not a legal identifier character, so generated names never
//! collide with source names. Specialised functions are named `<f>_<n>`
//! with a per-function counter, skipping names the source already uses.

use crate::ast::*;
use crate::diagnostics::{Code, Diagnostic};
use crate::kinding::{subst_expr, subst_type, TypeSubst};
use crate::sem_value::VValue;
use std::collections::{BTreeSet, HashMap, VecDeque};

struct Gensym {
    next: u64,
}

impl Gensym {
    fn new() -> Gensym {
        Gensym { next: 0 }
    }

    fn fresh(&mut self) -> String {
        let n = self.next;
        self.next += 1;
        format!("t%{n}")
    }
}

// ---- match desugaring ----------------------------------------------------

fn desugar_expr(e: &Expr, gen: &mut Gensym) -> Result<Expr, Diagnostic> {
    use ExprKind::*;
    let span = e.span;
    let kind = match &e.kind {
        Match(scrutinee, arms) => {
            if arms.is_empty() {
                return Err(Diagnostic::new(
                    Code::EmptyMatch,
                    span,
                    "match needs at least one arm",
                ));
            }
            let mut seen = BTreeSet::new();
            for (c, _, _) in arms {
                if !seen.insert(c.clone()) {
                    return Err(Diagnostic::new(
                        Code::DuplicateArm,
                        span,
                        format!("duplicate match arm for constructor `{c}`"),
                    ));
                }
            }
            let scrut = desugar_expr(scrutinee, gen)?;
            let mut arms_d = Vec::with_capacity(arms.len());
            for (c, x, body) in arms {
                arms_d.push((c.clone(), x.clone(), desugar_expr(body, gen)?));
            }
            // nest: case c1 | else fresh -> case c2 | ... | let xn = esac in en
            let (last_c, last_x, last_body) = arms_d.pop().unwrap();
            let build_last = |scrut_expr: Expr| {
                ExprKind::Let(
                    last_x.clone(),
                    Box::new(Expr::new(ExprKind::Esac(Box::new(scrut_expr)), span)),
                    Box::new(last_body.clone()),
                )
            };
            let _ = last_c;
            if arms_d.is_empty() {
                build_last(scrut)
            } else {
                // fold the remaining arms from the inside out
                let mut fresh_names: Vec<String> =
                    (0..arms_d.len()).map(|_| gen.fresh()).collect();
                // innermost handler consumes the last fresh variable
                let innermost_scrut = Expr::new(
                    ExprKind::Var(fresh_names.last().unwrap().clone()),
                    span,
                );
                let mut acc = Expr::new(build_last(innermost_scrut), span);
                while let Some((c, x, body)) = arms_d.pop() {
                    let fresh = fresh_names.pop().unwrap();
                    let scrut_expr = if arms_d.is_empty() {
                        scrut.clone()
                    } else {
                        Expr::new(ExprKind::Var(fresh_names.last().unwrap().clone()), span)
                    };
                    acc = Expr::new(
                        ExprKind::Case {
                            scrutinee: Box::new(scrut_expr),
                            ctor: c,
                            bound: x,
                            matched: Box::new(body),
                            else_bound: fresh,
                            else_body: Box::new(acc),
                        },
                        span,
                    );
                }
                acc.kind
            }
        }
        Var(_) | Unit | Lit(_) | FunRef(..) => e.kind.clone(),
        PrimOp(op, args) => PrimOp(
            *op,
            args.iter().map(|a| desugar_expr(a, gen)).collect::<Result<_, _>>()?,
        ),
        App(f, a) => App(
            Box::new(desugar_expr(f, gen)?),
            Box::new(desugar_expr(a, gen)?),
        ),
        Let(x, a, b) => Let(
            x.clone(),
            Box::new(desugar_expr(a, gen)?),
            Box::new(desugar_expr(b, gen)?),
        ),
        LetBang(ys, x, a, b) => LetBang(
            ys.clone(),
            x.clone(),
            Box::new(desugar_expr(a, gen)?),
            Box::new(desugar_expr(b, gen)?),
        ),
        If(c, t, e2) => If(
            Box::new(desugar_expr(c, gen)?),
            Box::new(desugar_expr(t, gen)?),
            Box::new(desugar_expr(e2, gen)?),
        ),
        Cast(t, a) => Cast(*t, Box::new(desugar_expr(a, gen)?)),
        Promote(alts, a) => Promote(alts.clone(), Box::new(desugar_expr(a, gen)?)),
        Con(c, a) => Con(c.clone(), Box::new(desugar_expr(a, gen)?)),
        Case { scrutinee, ctor, bound, matched, else_bound, else_body } => Case {
            scrutinee: Box::new(desugar_expr(scrutinee, gen)?),
            ctor: ctor.clone(),
            bound: bound.clone(),
            matched: Box::new(desugar_expr(matched, gen)?),
            else_bound: else_bound.clone(),
            else_body: Box::new(desugar_expr(else_body, gen)?),
        },
        Esac(a) => Esac(Box::new(desugar_expr(a, gen)?)),
        Struct(fs) => Struct(
            fs.iter()
                .map(|(f, a)| Ok((f.clone(), desugar_expr(a, gen)?)))
                .collect::<Result<_, Diagnostic>>()?,
        ),
        Member(a, f) => Member(Box::new(desugar_expr(a, gen)?), f.clone()),
        Put(a, f, b) => Put(
            Box::new(desugar_expr(a, gen)?),
            f.clone(),
            Box::new(desugar_expr(b, gen)?),
        ),
        Take { rec_bound, field, field_bound, record, body } => Take {
            rec_bound: rec_bound.clone(),
            field: field.clone(),
            field_bound: field_bound.clone(),
            record: Box::new(desugar_expr(record, gen)?),
            body: Box::new(desugar_expr(body, gen)?),
        },
    };
    Ok(Expr::new(kind, span))
}

/// Rewrite every multi-way `match` into nested two-way cases ending in a
/// let-bound `esac`.
pub fn desugar_match(e: &Expr) -> Result<Expr, Diagnostic> {
    desugar_expr(e, &mut Gensym::new())
}

/// Desugar every function body in a program.
pub fn desugar_program(p: &Program) -> Result<Program, Diagnostic> {
    let mut gen = Gensym::new();
    let defs = p
        .defs
        .iter()
        .map(|d| {
            Ok(match d {
                Def::Fun(f) => Def::Fun(FunDef {
                    body: desugar_expr(&f.body, &mut gen)?,
                    ..f.clone()
                }),
                Def::Abstract(a) => Def::Abstract(a.clone()),
            })
        })
        .collect::<Result<Vec<_>, Diagnostic>>()?;
    Ok(Program::new(defs))
}

// ---- A-normalisation -------------------------------------------------------

fn is_atom(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Var(_) | ExprKind::Lit(_) | ExprKind::Unit | ExprKind::FunRef(..)
    )
}

/// Normalise `e` to an atom, pushing let-bindings for compound parts in
/// evaluation order.
fn atomize(e: &Expr, gen: &mut Gensym, binds: &mut Vec<(String, Expr)>) -> Expr {
    if is_atom(e) {
        return e.clone();
    }
    let cmd = norm_command(e, gen, binds);
    let name = gen.fresh();
    binds.push((name.clone(), cmd));
    Expr::new(ExprKind::Var(name), e.span)
}

/// Normalise `e` into a single command whose operands are atoms. Control
/// forms are normalised as self-contained tails.
fn norm_command(e: &Expr, gen: &mut Gensym, binds: &mut Vec<(String, Expr)>) -> Expr {
    use ExprKind::*;
    let span = e.span;
    match &e.kind {
        Var(_) | Unit | Lit(_) | FunRef(..) => e.clone(),
        PrimOp(op, args) => {
            let args = args.iter().map(|a| atomize(a, gen, binds)).collect();
            Expr::new(PrimOp(*op, args), span)
        }
        App(f, a) => {
            let f = atomize(f, gen, binds);
            let a = atomize(a, gen, binds);
            Expr::new(App(Box::new(f), Box::new(a)), span)
        }
        Cast(t, a) => {
            let a = atomize(a, gen, binds);
            Expr::new(Cast(*t, Box::new(a)), span)
        }
        Promote(alts, a) => {
            let a = atomize(a, gen, binds);
            Expr::new(Promote(alts.clone(), Box::new(a)), span)
        }
        Con(c, a) => {
            let a = atomize(a, gen, binds);
            Expr::new(Con(c.clone(), Box::new(a)), span)
        }
        Esac(a) => {
            let a = atomize(a, gen, binds);
            Expr::new(Esac(Box::new(a)), span)
        }
        Struct(fs) => {
            let fs = fs
                .iter()
                .map(|(f, a)| (f.clone(), atomize(a, gen, binds)))
                .collect();
            Expr::new(Struct(fs), span)
        }
        Member(a, f) => {
            let a = atomize(a, gen, binds);
            Expr::new(Member(Box::new(a), f.clone()), span)
        }
        Put(a, f, b) => {
            let a = atomize(a, gen, binds);
            let b = atomize(b, gen, binds);
            Expr::new(Put(Box::new(a), f.clone(), Box::new(b)), span)
        }
        // control and binding forms are bound whole, normalised as tails
        Let(..) | LetBang(..) | If(..) | Case { .. } | Take { .. } | Match(..) => {
            norm_tail(e, gen)
        }
    }
}

fn wrap_binds(binds: Vec<(String, Expr)>, body: Expr, span: Span) -> Expr {
    binds.into_iter().rev().fold(body, |acc, (n, rhs)| {
        Expr::new(ExprKind::Let(n, Box::new(rhs), Box::new(acc)), span)
    })
}

/// Normalise `e` in tail position.
fn norm_tail(e: &Expr, gen: &mut Gensym) -> Expr {
    use ExprKind::*;
    let span = e.span;
    match &e.kind {
        Let(x, e1, e2) => {
            let mut binds = Vec::new();
            let rhs = norm_command(e1, gen, &mut binds);
            let body = norm_tail(e2, gen);
            wrap_binds(
                binds,
                Expr::new(Let(x.clone(), Box::new(rhs), Box::new(body)), span),
                span,
            )
        }
        LetBang(ys, x, e1, e2) => {
            // e1 stays inside the observation scope
            let e1 = norm_tail(e1, gen);
            let e2 = norm_tail(e2, gen);
            Expr::new(LetBang(ys.clone(), x.clone(), Box::new(e1), Box::new(e2)), span)
        }
        If(c, t, els) => {
            let mut binds = Vec::new();
            let c = atomize(c, gen, &mut binds);
            let t = norm_tail(t, gen);
            let els = norm_tail(els, gen);
            wrap_binds(
                binds,
                Expr::new(If(Box::new(c), Box::new(t), Box::new(els)), span),
                span,
            )
        }
        Case { scrutinee, ctor, bound, matched, else_bound, else_body } => {
            let mut binds = Vec::new();
            let s = atomize(scrutinee, gen, &mut binds);
            let matched = norm_tail(matched, gen);
            let else_body = norm_tail(else_body, gen);
            wrap_binds(
                binds,
                Expr::new(
                    Case {
                        scrutinee: Box::new(s),
                        ctor: ctor.clone(),
                        bound: bound.clone(),
                        matched: Box::new(matched),
                        else_bound: else_bound.clone(),
                        else_body: Box::new(else_body),
                    },
                    span,
                ),
                span,
            )
        }
        Take { rec_bound, field, field_bound, record, body } => {
            let mut binds = Vec::new();
            let r = atomize(record, gen, &mut binds);
            let body = norm_tail(body, gen);
            wrap_binds(
                binds,
                Expr::new(
                    Take {
                        rec_bound: rec_bound.clone(),
                        field: field.clone(),
                        field_bound: field_bound.clone(),
                        record: Box::new(r),
                        body: Box::new(body),
                    },
                    span,
                ),
                span,
            )
        }
        Match(..) => {
            // match is eliminated before this pass on checked programs;
            // keep totality by normalising through the desugared form
            let d = desugar_match(e).expect("match desugaring cannot fail after checking");
            norm_tail(&d, gen)
        }
        _ => {
            let mut binds = Vec::new();
            let cmd = norm_command(e, gen, &mut binds);
            wrap_binds(binds, cmd, span)
        }
    }
}

/// A-normalise every function body: all operator, application and
/// constructor arguments and every scrutinee become variables or literals,
/// with compound subterms let-bound in evaluation order.
pub fn a_normalise(p: &Program) -> Program {
    let mut gen = Gensym::new();
    let defs = p
        .defs
        .iter()
        .map(|d| match d {
            Def::Fun(f) => Def::Fun(FunDef { body: norm_tail(&f.body, &mut gen), ..f.clone() }),
            Def::Abstract(a) => Def::Abstract(a.clone()),
        })
        .collect();
    Program::new(defs)
}

// ---- monomorphisation ------------------------------------------------------

/// Injective map from (function, ground type arguments) to specialised
/// names. Iteration order is discovery order.
#[derive(Debug, Clone, Default)]
pub struct RenameMap {
    entries: Vec<((String, Vec<CoreType>), String)>,
    index: HashMap<(String, Vec<CoreType>), usize>,
}

impl RenameMap {
    pub fn lookup(&self, f: &str, args: &[CoreType]) -> Option<&str> {
        self.index
            .get(&(f.to_string(), args.to_vec()))
            .map(|&i| self.entries[i].1.as_str())
    }

    fn insert(&mut self, key: (String, Vec<CoreType>), target: String) {
        self.index.insert(key.clone(), self.entries.len());
        self.entries.push((key, target));
    }

    pub fn entries(&self) -> &[((String, Vec<CoreType>), String)] {
        &self.entries
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.entries.iter().all(|(_, t)| seen.insert(t.clone()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        serde_json::Value::Array(
            self.entries
                .iter()
                .map(|((f, args), to)| {
                    json!({
                        "from": f,
                        "args": args
                            .iter()
                            .map(crate::pretty::type_to_sexp)
                            .collect::<Vec<_>>(),
                        "to": to,
                    })
                })
                .collect(),
        )
    }
}

fn mono_error(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(Code::MonoError, Span::DUMMY, msg)
}

/// Rewrite every function reference through the rename map, dropping type
/// arguments.
pub fn rename_funrefs(e: &Expr, rename: &RenameMap) -> Result<Expr, Diagnostic> {
    use ExprKind::*;
    let kind = match &e.kind {
        FunRef(f, args) => {
            let target = rename.lookup(f, args).ok_or_else(|| {
                mono_error(format!("no rename entry for `{f}` at its instantiation (MissingRenameEntry)"))
            })?;
            FunRef(target.to_string(), Vec::new())
        }
        Var(_) | Unit | Lit(_) => e.kind.clone(),
        PrimOp(op, args) => PrimOp(
            *op,
            args.iter().map(|a| rename_funrefs(a, rename)).collect::<Result<_, _>>()?,
        ),
        App(f, a) => App(
            Box::new(rename_funrefs(f, rename)?),
            Box::new(rename_funrefs(a, rename)?),
        ),
        Let(x, a, b) => Let(
            x.clone(),
            Box::new(rename_funrefs(a, rename)?),
            Box::new(rename_funrefs(b, rename)?),
        ),
        LetBang(ys, x, a, b) => LetBang(
            ys.clone(),
            x.clone(),
            Box::new(rename_funrefs(a, rename)?),
            Box::new(rename_funrefs(b, rename)?),
        ),
        If(c, t, e2) => If(
            Box::new(rename_funrefs(c, rename)?),
            Box::new(rename_funrefs(t, rename)?),
            Box::new(rename_funrefs(e2, rename)?),
        ),
        Cast(t, a) => Cast(*t, Box::new(rename_funrefs(a, rename)?)),
        Promote(alts, a) => Promote(alts.clone(), Box::new(rename_funrefs(a, rename)?)),
        Con(c, a) => Con(c.clone(), Box::new(rename_funrefs(a, rename)?)),
        Case { scrutinee, ctor, bound, matched, else_bound, else_body } => Case {
            scrutinee: Box::new(rename_funrefs(scrutinee, rename)?),
            ctor: ctor.clone(),
            bound: bound.clone(),
            matched: Box::new(rename_funrefs(matched, rename)?),
            else_bound: else_bound.clone(),
            else_body: Box::new(rename_funrefs(else_body, rename)?),
        },
        Esac(a) => Esac(Box::new(rename_funrefs(a, rename)?)),
        Struct(fs) => Struct(
            fs.iter()
                .map(|(f, a)| Ok((f.clone(), rename_funrefs(a, rename)?)))
                .collect::<Result<_, Diagnostic>>()?,
        ),
        Member(a, f) => Member(Box::new(rename_funrefs(a, rename)?), f.clone()),
        Put(a, f, b) => Put(
            Box::new(rename_funrefs(a, rename)?),
            f.clone(),
            Box::new(rename_funrefs(b, rename)?),
        ),
        Take { rec_bound, field, field_bound, record, body } => Take {
            rec_bound: rec_bound.clone(),
            field: field.clone(),
            field_bound: field_bound.clone(),
            record: Box::new(rename_funrefs(record, rename)?),
            body: Box::new(rename_funrefs(body, rename)?),
        },
        Match(s, arms) => Match(
            Box::new(rename_funrefs(s, rename)?),
            arms.iter()
                .map(|(c, x, b)| Ok((c.clone(), x.clone(), rename_funrefs(b, rename)?)))
                .collect::<Result<_, Diagnostic>>()?,
        ),
    };
    Ok(Expr::new(kind, e.span))
}

fn collect_instantiations(e: &Expr, acc: &mut Vec<(String, Vec<CoreType>)>) {
    use ExprKind::*;
    match &e.kind {
        FunRef(f, args) => acc.push((f.clone(), args.clone())),
        Var(_) | Unit | Lit(_) => {}
        PrimOp(_, args) => args.iter().for_each(|a| collect_instantiations(a, acc)),
        App(a, b) | Let(_, a, b) | LetBang(_, _, a, b) | Put(a, _, b) => {
            collect_instantiations(a, acc);
            collect_instantiations(b, acc);
        }
        If(a, b, c) => {
            collect_instantiations(a, acc);
            collect_instantiations(b, acc);
            collect_instantiations(c, acc);
        }
        Cast(_, a) | Promote(_, a) | Con(_, a) | Esac(a) | Member(a, _) => {
            collect_instantiations(a, acc)
        }
        Case { scrutinee, matched, else_body, .. } => {
            collect_instantiations(scrutinee, acc);
            collect_instantiations(matched, acc);
            collect_instantiations(else_body, acc);
        }
        Struct(fs) => fs.iter().for_each(|(_, a)| collect_instantiations(a, acc)),
        Take { record, body, .. } => {
            collect_instantiations(record, acc);
            collect_instantiations(body, acc);
        }
        Match(s, arms) => {
            collect_instantiations(s, acc);
            arms.iter().for_each(|(_, _, b)| collect_instantiations(b, acc));
        }
    }
}

/// Specialise every reachable (function, ground type arguments) pair from
/// the entry set. Abstract declarations are renamed per instantiation but
/// remain declarations. The result contains no type variables.
pub fn monomorphise(
    p: &Program,
    entries: Option<&[String]>,
) -> Result<(Program, RenameMap), Diagnostic> {
    let default_entries: Vec<String>;
    let entries: &[String] = match entries {
        Some(es) => es,
        None => {
            default_entries = p
                .fun_defs()
                .filter(|f| f.signature.is_monomorphic())
                .map(|f| f.name.clone())
                .collect();
            &default_entries
        }
    };
    if entries.is_empty() {
        return Err(mono_error(
            "no monomorphic entry point to start from (NoEntryPoint)",
        ));
    }

    let taken: BTreeSet<String> = p.defs.iter().map(|d| d.name().to_string()).collect();
    let mut rename = RenameMap::default();
    let mut counters: HashMap<String, u64> = HashMap::new();
    let mut assign = |rename: &mut RenameMap, f: &str, args: &[CoreType]| -> String {
        if let Some(t) = rename.lookup(f, args) {
            return t.to_string();
        }
        let c = counters.entry(f.to_string()).or_insert(0);
        let target = loop {
            let candidate = format!("{f}_{}", *c);
            *c += 1;
            if !taken.contains(&candidate) {
                break candidate;
            }
        };
        rename.insert((f.to_string(), args.to_vec()), target.clone());
        target
    };

    let mut queue: VecDeque<(String, Vec<CoreType>)> = VecDeque::new();
    for e in entries {
        match p.lookup(e) {
            Some(Def::Fun(f)) if f.signature.is_monomorphic() => {
                assign(&mut rename, e, &[]);
                queue.push_back((e.clone(), Vec::new()));
            }
            Some(_) => {
                return Err(mono_error(format!(
                    "entry `{e}` must be a monomorphic concrete function"
                )))
            }
            None => return Err(mono_error(format!("unknown entry `{e}`"))),
        }
    }

    let mut out_defs = Vec::new();
    while let Some((fname, args)) = queue.pop_front() {
        let def = p
            .lookup(&fname)
            .ok_or_else(|| mono_error(format!("unknown function `{fname}`")))?;
        let binders = &def.signature().binders;
        if binders.len() != args.len() {
            return Err(mono_error(format!(
                "instantiation arity mismatch for `{fname}`"
            )));
        }
        if args.iter().any(|a| !a.is_ground()) {
            return Err(mono_error(format!(
                "non-ground instantiation of `{fname}` (UnresolvedInstantiation)"
            )));
        }
        let subst = TypeSubst::new(
            binders.iter().map(|(n, _)| n.clone()).zip(args.iter().cloned()),
        );
        let new_name = assign(&mut rename, &fname, &args).to_string();
        let new_sig = PolyType {
            binders: Vec::new(),
            body: subst_type(&def.signature().body, &subst),
        };
        match def {
            Def::Fun(f) => {
                let body = subst_expr(&f.body, &subst);
                // discover callees at their ground instantiations
                let mut insts = Vec::new();
                collect_instantiations(&body, &mut insts);
                for (g, gargs) in insts {
                    if rename.lookup(&g, &gargs).is_none() {
                        assign(&mut rename, &g, &gargs);
                        queue.push_back((g, gargs));
                    }
                }
                let body = rename_funrefs(&body, &rename)?;
                out_defs.push(Def::Fun(FunDef {
                    name: new_name,
                    signature: new_sig,
                    param: f.param.clone(),
                    body,
                    span: f.span,
                }));
            }
            Def::Abstract(a) => {
                out_defs.push(Def::Abstract(AbsFunDecl {
                    name: new_name,
                    signature: new_sig,
                    span: a.span,
                }));
            }
        }
    }

    assert!(rename.is_injective(), "rename map must be injective");
    Ok((Program::new(out_defs), rename))
}

/// Monomorphise a value: function bodies get their references renamed,
/// abstract function values are renamed with emptied type arguments, and
/// everything else maps structurally.
pub fn mono_val(rename: &RenameMap, v: &VValue) -> Result<VValue, Diagnostic> {
    Ok(match v {
        VValue::Lit(_) | VValue::Unit => v.clone(),
        VValue::Fun { param, body } => VValue::Fun {
            param: param.clone(),
            body: rename_funrefs(body, rename)?,
        },
        VValue::AbsFun { name, typeargs } => {
            let target = rename.lookup(name, typeargs).ok_or_else(|| {
                mono_error(format!(
                    "no rename entry for abstract `{name}` (MissingRenameEntry)"
                ))
            })?;
            VValue::AbsFun { name: target.to_string(), typeargs: Vec::new() }
        }
        VValue::Con(c, inner) => VValue::Con(c.clone(), Box::new(mono_val(rename, inner)?)),
        VValue::Record(fields) => VValue::Record(
            fields
                .iter()
                .map(|(n, v)| Ok((n.clone(), mono_val(rename, v)?)))
                .collect::<Result<_, Diagnostic>>()?,
        ),
        VValue::Abstract { tag, items } => VValue::Abstract {
            tag: tag.clone(),
            items: items
                .iter()
                .map(|v| mono_val(rename, v))
                .collect::<Result<_, Diagnostic>>()?,
        },
    })
}
