//! Printing programs, types and expressions back to the concrete core
//! syntax. Parsing the printed form yields a structurally identical tree.

use crate::ast::*;
use std::fmt::Write;

pub fn type_to_sexp(t: &CoreType) -> String {
    let mut s = String::new();
    write_type(&mut s, t);
    s
}

fn write_type(out: &mut String, t: &CoreType) {
    match t {
        CoreType::Var(a) => out.push_str(a),
        CoreType::VarBang(a) => {
            let _ = write!(out, "(! {a})");
        }
        CoreType::Unit => out.push_str("unit"),
        CoreType::Prim(p) => out.push_str(p.name()),
        CoreType::Fun(a, r) => {
            out.push_str("(fun ");
            write_type(out, a);
            out.push(' ');
            write_type(out, r);
            out.push(')');
        }
        CoreType::Variant(alts) => {
            out.push_str("(variant");
            for (c, ty) in alts {
                let _ = write!(out, " ({c} ");
                write_type(out, ty);
                out.push(')');
            }
            out.push(')');
        }
        CoreType::Record { fields, mode } => {
            let _ = write!(out, "(rec {}", mode.name());
            for f in fields {
                let _ = write!(out, " ({} ", f.name);
                write_type(out, &f.ty);
                if f.taken {
                    out.push_str(" taken");
                }
                out.push(')');
            }
            out.push(')');
        }
        CoreType::Abstract { name, args, mode } => {
            let _ = write!(out, "(abs {name} {}", mode.name());
            for a in args {
                out.push(' ');
                write_type(out, a);
            }
            out.push(')');
        }
    }
}

pub fn expr_to_sexp(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_lit(out: &mut String, l: &Literal) {
    match l.ty {
        PrimType::Bool => out.push_str(if l.value != 0 { "true" } else { "false" }),
        t if t == PrimType::smallest_for(l.value) => {
            let _ = write!(out, "{}", l.value);
        }
        t => {
            // non-minimal tags cannot be spelled bare; a cast keeps the
            // printed form parseable with identical meaning
            let _ = write!(out, "(cast {} {})", t.name(), l.value);
        }
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    use ExprKind::*;
    match &e.kind {
        Var(x) => out.push_str(x),
        Unit => out.push_str("unit"),
        Lit(l) => write_lit(out, l),
        FunRef(f, args) => {
            let _ = write!(out, "(funref {f}");
            for a in args {
                out.push(' ');
                write_type(out, a);
            }
            out.push(')');
        }
        PrimOp(op, args) => {
            let _ = write!(out, "(op {}", op.name());
            for a in args {
                out.push(' ');
                write_expr(out, a);
            }
            out.push(')');
        }
        App(f, a) => {
            out.push_str("(app ");
            write_expr(out, f);
            out.push(' ');
            write_expr(out, a);
            out.push(')');
        }
        Let(x, e1, e2) => {
            let _ = write!(out, "(let {x} ");
            write_expr(out, e1);
            out.push(' ');
            write_expr(out, e2);
            out.push(')');
        }
        LetBang(ys, x, e1, e2) => {
            out.push_str("(letbang (");
            for (i, y) in ys.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(y);
            }
            let _ = write!(out, ") {x} ");
            write_expr(out, e1);
            out.push(' ');
            write_expr(out, e2);
            out.push(')');
        }
        If(c, t, e2) => {
            out.push_str("(if ");
            write_expr(out, c);
            out.push(' ');
            write_expr(out, t);
            out.push(' ');
            write_expr(out, e2);
            out.push(')');
        }
        Cast(t, e1) => {
            let _ = write!(out, "(cast {} ", t.name());
            write_expr(out, e1);
            out.push(')');
        }
        Promote(alts, e1) => {
            out.push_str("(promote (");
            for (i, (c, ty)) in alts.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{c} ");
                write_type(out, ty);
            }
            out.push_str(") ");
            write_expr(out, e1);
            out.push(')');
        }
        Con(c, e1) => {
            let _ = write!(out, "(con {c} ");
            write_expr(out, e1);
            out.push(')');
        }
        Case { scrutinee, ctor, bound, matched, else_bound, else_body } => {
            out.push_str("(case ");
            write_expr(out, scrutinee);
            let _ = write!(out, " {ctor} {bound} ");
            write_expr(out, matched);
            let _ = write!(out, " {else_bound} ");
            write_expr(out, else_body);
            out.push(')');
        }
        Esac(e1) => {
            out.push_str("(esac ");
            write_expr(out, e1);
            out.push(')');
        }
        Struct(fields) => {
            out.push_str("(struct");
            for (f, e1) in fields {
                let _ = write!(out, " ({f} ");
                write_expr(out, e1);
                out.push(')');
            }
            out.push(')');
        }
        Member(e1, f) => {
            out.push_str("(member ");
            write_expr(out, e1);
            let _ = write!(out, " {f})");
        }
        Put(e1, f, e2) => {
            out.push_str("(put ");
            write_expr(out, e1);
            let _ = write!(out, " {f} ");
            write_expr(out, e2);
            out.push(')');
        }
        Take { rec_bound, field, field_bound, record, body } => {
            let _ = write!(out, "(take {rec_bound} {field} {field_bound} ");
            write_expr(out, record);
            out.push(' ');
            write_expr(out, body);
            out.push(')');
        }
        Match(scrutinee, arms) => {
            out.push_str("(match ");
            write_expr(out, scrutinee);
            for (c, x, body) in arms {
                let _ = write!(out, " ({c} {x} ");
                write_expr(out, body);
                out.push(')');
            }
            out.push(')');
        }
    }
}

fn write_poly(out: &mut String, p: &PolyType) {
    out.push_str("(forall");
    for (a, k) in &p.binders {
        let _ = write!(out, " ({a} (");
        for (i, c) in k.letters().chars().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push(c);
        }
        out.push_str("))");
    }
    out.push(')');
}

pub fn def_to_source(d: &Def) -> String {
    let mut out = String::new();
    match d {
        Def::Fun(f) => {
            let (arg, res) = f.signature.arg_result();
            let _ = write!(out, "(def {} ", f.name);
            write_poly(&mut out, &f.signature);
            let _ = write!(out, "\n  (fn ({} ", f.param);
            write_type(&mut out, arg);
            out.push_str(") ");
            write_type(&mut out, res);
            out.push_str("\n    ");
            write_expr(&mut out, &f.body);
            out.push_str("))");
        }
        Def::Abstract(a) => {
            let (arg, res) = a.signature.arg_result();
            let _ = write!(out, "(absdef {} ", a.name);
            write_poly(&mut out, &a.signature);
            out.push_str("\n  (fn (x ");
            write_type(&mut out, arg);
            out.push_str(") ");
            write_type(&mut out, res);
            out.push_str("))");
        }
    }
    out
}

pub fn program_to_source(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.defs {
        out.push_str(&def_to_source(d));
        out.push_str("\n\n");
    }
    out
}

impl std::fmt::Display for CoreType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&type_to_sexp(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse;

    fn roundtrip_program(src: &str) {
        let p1 = parse::parse_program(src).unwrap();
        let printed = program_to_source(&p1);
        let p2 = parse::parse_program(&printed).unwrap();
        // spans differ; compare everything else per definition
        assert_eq!(p1.defs.len(), p2.defs.len());
        for (a, b) in p1.defs.iter().zip(p2.defs.iter()) {
            assert_eq!(a.name(), b.name());
            assert_eq!(a.signature(), b.signature());
            if let (Def::Fun(fa), Def::Fun(fb)) = (a, b) {
                assert_eq!(strip(&fa.body), strip(&fb.body));
            }
        }
    }

    // structural copy with spans zeroed
    fn strip(e: &Expr) -> Expr {
        use ExprKind::*;
        let kind = match &e.kind {
            Var(x) => Var(x.clone()),
            Unit => Unit,
            Lit(l) => Lit(*l),
            FunRef(f, a) => FunRef(f.clone(), a.clone()),
            PrimOp(o, args) => PrimOp(*o, args.iter().map(strip).collect()),
            App(f, a) => App(Box::new(strip(f)), Box::new(strip(a))),
            Let(x, a, b) => Let(x.clone(), Box::new(strip(a)), Box::new(strip(b))),
            LetBang(ys, x, a, b) => {
                LetBang(ys.clone(), x.clone(), Box::new(strip(a)), Box::new(strip(b)))
            }
            If(c, t, e2) => If(Box::new(strip(c)), Box::new(strip(t)), Box::new(strip(e2))),
            Cast(t, a) => Cast(*t, Box::new(strip(a))),
            Promote(alts, a) => Promote(alts.clone(), Box::new(strip(a))),
            Con(c, a) => Con(c.clone(), Box::new(strip(a))),
            Case { scrutinee, ctor, bound, matched, else_bound, else_body } => Case {
                scrutinee: Box::new(strip(scrutinee)),
                ctor: ctor.clone(),
                bound: bound.clone(),
                matched: Box::new(strip(matched)),
                else_bound: else_bound.clone(),
                else_body: Box::new(strip(else_body)),
            },
            Esac(a) => Esac(Box::new(strip(a))),
            Struct(fs) => Struct(fs.iter().map(|(f, a)| (f.clone(), strip(a))).collect()),
            Member(a, f) => Member(Box::new(strip(a)), f.clone()),
            Put(a, f, b) => Put(Box::new(strip(a)), f.clone(), Box::new(strip(b))),
            Take { rec_bound, field, field_bound, record, body } => Take {
                rec_bound: rec_bound.clone(),
                field: field.clone(),
                field_bound: field_bound.clone(),
                record: Box::new(strip(record)),
                body: Box::new(strip(body)),
            },
            Match(s, arms) => Match(
                Box::new(strip(s)),
                arms.iter().map(|(c, x, b)| (c.clone(), x.clone(), strip(b))).collect(),
            ),
        };
        Expr::new(kind, Span::DUMMY)
    }

    #[test]
    fn roundtrips_a_mixed_program() {
        roundtrip_program(
            "(def pick (forall (a (D S)))
               (fn (x (rec ub (l a) (r a) (c bool)))
                 a
                 (take x1 l lv x
                   (take x2 r rv x1
                     (if (member x2 c) lv rv)))))
             (absdef size (forall) (fn (x (rec ro (n u32))) u32))
             (def m (forall) (fn (x (variant (A u8) (B bool))) u8
               (match x (A v v) (B b (if b 1 0)))))",
        );
    }

    #[test]
    fn type_sexp_forms() {
        let t = parse::parse_type("(rec wr (f u8 taken) (g (variant (A unit) (B u64))))").unwrap();
        assert_eq!(
            type_to_sexp(&t),
            "(rec wr (f u8 taken) (g (variant (A unit) (B u64))))"
        );
        let t = parse::parse_type("(abs wordarray ro (! a))").unwrap();
        assert_eq!(type_to_sexp(&t), "(abs wordarray ro (! a))");
    }

    #[test]
    fn nonminimal_literal_prints_as_cast() {
        let e = Expr::new(
            ExprKind::Lit(Literal::uint(5, PrimType::U32)),
            Span::DUMMY,
        );
        assert_eq!(expr_to_sexp(&e), "(cast u32 5)");
        let back = parse::parse_expr("(cast u32 5)").unwrap();
        assert!(matches!(back.kind, ExprKind::Cast(PrimType::U32, _)));
    }
}
