//! Naive C emission for monomorphic, A-normal programs, plus a
//! differential harness that compiles the output and compares driver runs
//! against the update-semantics interpreter.
//!
//! Layout conventions: unboxed records and variants are structs passed by
//! value (variants are tagged unions with alternatives numbered in sorted
//! constructor order), boxed records and word arrays are heap pointers,
//! and unit is a one-byte struct. Unsigned arithmetic wraps at the width;
//! shifts at or beyond the width yield 0 via helpers.

use crate::ast::*;
use crate::diagnostics::{Code, Diagnostic};
use crate::ffi::{strip_mono_suffix, WORDARRAY};
use crate::jsonval::{deep_uvalue_json_typed, embed_uvalue};
use crate::passes::{a_normalise, desugar_program, monomorphise};
use crate::sem_update::{apply_fn_u, Store};
use crate::sem_value::VValue;
use crate::typecheck::{check_program, ProgramTyping, TypingTree};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

fn unsupported(msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(
        Code::TypeMismatch,
        Span::DUMMY,
        format!("UnsupportedConstruct: {}", msg.into()),
    )
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Canonical layout key: taken flags erased, variant alternatives sorted,
/// boxed modes merged. Types with equal keys share one C definition.
fn layout_key(t: &CoreType) -> CoreType {
    match t {
        CoreType::Var(_) | CoreType::VarBang(_) | CoreType::Unit | CoreType::Prim(_) => t.clone(),
        CoreType::Fun(a, r) => CoreType::fun(layout_key(a), layout_key(r)),
        CoreType::Variant(alts) => {
            let mut alts: Vec<(String, CoreType)> = alts
                .iter()
                .map(|(c, t)| (c.clone(), layout_key(t)))
                .collect();
            alts.sort_by(|a, b| a.0.cmp(&b.0));
            CoreType::Variant(alts)
        }
        CoreType::Record { fields, mode } => CoreType::Record {
            fields: fields
                .iter()
                .map(|f| FieldDecl {
                    name: f.name.clone(),
                    ty: layout_key(&f.ty),
                    taken: false,
                })
                .collect(),
            mode: if mode.is_boxed() { Mode::Writable } else { Mode::Unboxed },
        },
        CoreType::Abstract { name, args, mode } => CoreType::Abstract {
            name: name.clone(),
            args: args.iter().map(layout_key).collect(),
            mode: if mode.is_boxed() { Mode::Writable } else { Mode::Unboxed },
        },
    }
}

/// A variant's alternatives in canonical (sorted) order.
fn canon_alts(alts: &[(String, CoreType)]) -> Vec<(String, CoreType)> {
    let mut v: Vec<(String, CoreType)> = alts.to_vec();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

struct TypeTable {
    names: HashMap<CoreType, String>,
    defs: String,
    next: usize,
}

impl TypeTable {
    fn new() -> TypeTable {
        TypeTable { names: HashMap::new(), defs: String::new(), next: 0 }
    }

    fn fresh(&mut self) -> String {
        let n = self.next;
        self.next += 1;
        format!("t{n}")
    }

    /// C type expression for values of `t`; registers aggregate
    /// definitions on first use (dependencies first).
    fn cname(&mut self, t: &CoreType) -> Result<String, Diagnostic> {
        Ok(match t {
            CoreType::Prim(PrimType::U8) | CoreType::Prim(PrimType::Bool) => "uint8_t".into(),
            CoreType::Prim(PrimType::U16) => "uint16_t".into(),
            CoreType::Prim(PrimType::U32) => "uint32_t".into(),
            CoreType::Prim(PrimType::U64) => "uint64_t".into(),
            CoreType::Unit => "unit_t".into(),
            CoreType::Var(_) | CoreType::VarBang(_) => {
                return Err(unsupported("type variable reached the C backend"))
            }
            CoreType::Fun(a, r) => {
                let key = layout_key(t);
                if let Some(n) = self.names.get(&key) {
                    return Ok(n.clone());
                }
                let ac = self.cname(a)?;
                let rc = self.cname(r)?;
                let n = self.fresh();
                let _ = writeln!(self.defs, "typedef {rc} (*{n})({ac});");
                self.names.insert(key, n.clone());
                n
            }
            CoreType::Variant(alts) => {
                let key = layout_key(t);
                if let Some(n) = self.names.get(&key) {
                    return Ok(n.clone());
                }
                let alts = canon_alts(alts);
                let mut members = Vec::new();
                for (i, (c, ty)) in alts.iter().enumerate() {
                    members.push(format!("{} c{i}_{};", self.cname(ty)?, sanitize(c)));
                }
                let n = self.fresh();
                let _ = writeln!(
                    self.defs,
                    "typedef struct {{ uint32_t tag; union {{ {} }} u; }} {n}; /* tags: {} */",
                    members.join(" "),
                    alts.iter()
                        .enumerate()
                        .map(|(i, (c, _))| format!("{i}={c}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
                self.names.insert(key, n.clone());
                n
            }
            CoreType::Record { fields, mode } => {
                let key = layout_key(&CoreType::Record {
                    fields: fields.clone(),
                    mode: Mode::Unboxed,
                });
                let base = if let Some(n) = self.names.get(&key) {
                    n.clone()
                } else {
                    let mut members = Vec::new();
                    for (i, f) in fields.iter().enumerate() {
                        members
                            .push(format!("{} f{i}_{};", self.cname(&f.ty)?, sanitize(&f.name)));
                    }
                    let n = self.fresh();
                    let _ =
                        writeln!(self.defs, "typedef struct {{ {} }} {n};", members.join(" "));
                    self.names.insert(key, n.clone());
                    n
                };
                if mode.is_boxed() {
                    format!("{base}*")
                } else {
                    base
                }
            }
            CoreType::Abstract { name, args, mode } => {
                if name != WORDARRAY || args.len() != 1 || !mode.is_boxed() {
                    return Err(unsupported(format!(
                        "abstract type `{name}` has no C representation"
                    )));
                }
                let key = layout_key(&CoreType::Abstract {
                    name: name.clone(),
                    args: args.clone(),
                    mode: Mode::Writable,
                });
                let base = if let Some(n) = self.names.get(&key) {
                    n.clone()
                } else {
                    let ec = self.cname(&args[0])?;
                    let n = self.fresh();
                    let _ = writeln!(
                        self.defs,
                        "typedef struct {{ uint32_t len; {ec}* data; }} {n};"
                    );
                    self.names.insert(key, n.clone());
                    n
                };
                format!("{base}*")
            }
        })
    }

    /// Struct member name for a record field.
    fn field_member(fields: &[FieldDecl], name: &str) -> String {
        let i = fields.iter().position(|f| f.name == name).expect("field exists");
        format!("f{i}_{}", sanitize(name))
    }

    /// Tag index and union member name for a constructor.
    fn alt_member(alts: &[(String, CoreType)], ctor: &str) -> (usize, String) {
        let canon = canon_alts(alts);
        let i = canon.iter().position(|(c, _)| c == ctor).expect("ctor exists");
        (i, format!("c{i}_{}", sanitize(ctor)))
    }
}

const PRELUDE: &str = r#"#include <stdint.h>
#include <stdlib.h>
#include <string.h>
#include <stdio.h>

typedef struct { uint8_t z; } unit_t;

static inline uint8_t  cogc_shl8(uint8_t a, uint8_t b)   { return b >= 8  ? 0 : (uint8_t)(a << b); }
static inline uint8_t  cogc_shr8(uint8_t a, uint8_t b)   { return b >= 8  ? 0 : (uint8_t)(a >> b); }
static inline uint16_t cogc_shl16(uint16_t a, uint16_t b){ return b >= 16 ? 0 : (uint16_t)(a << b); }
static inline uint16_t cogc_shr16(uint16_t a, uint16_t b){ return b >= 16 ? 0 : (uint16_t)(a >> b); }
static inline uint32_t cogc_shl32(uint32_t a, uint32_t b){ return b >= 32 ? 0 : (uint32_t)(a << b); }
static inline uint32_t cogc_shr32(uint32_t a, uint32_t b){ return b >= 32 ? 0 : (uint32_t)(a >> b); }
static inline uint64_t cogc_shl64(uint64_t a, uint64_t b){ return b >= 64 ? 0 : (uint64_t)(a << b); }
static inline uint64_t cogc_shr64(uint64_t a, uint64_t b){ return b >= 64 ? 0 : (uint64_t)(a >> b); }
"#;

pub struct CEmission {
    pub program_c: String,
    pub driver_c: String,
    /// Functions the driver can dispatch to (first-order monomorphic).
    pub driverable: Vec<String>,
}

struct Emitter {
    typing: ProgramTyping,
    table: TypeTable,
    fn_names: BTreeMap<String, String>,
    protos: String,
    bodies: String,
}

struct FnCtx {
    env: Vec<(String, String)>,
    tmp: u64,
}

impl FnCtx {
    fn fresh(&mut self, hint: &str) -> String {
        let n = self.tmp;
        self.tmp += 1;
        format!("v{n}_{}", sanitize(hint))
    }

    fn lookup(&self, name: &str) -> Option<&str> {
        self.env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

impl Emitter {
    fn new(prog: &Program) -> Result<Emitter, Diagnostic> {
        let typing = check_program(prog).map_err(|mut ds| ds.remove(0))?;
        let mut fn_names = BTreeMap::new();
        for (i, d) in prog.defs.iter().enumerate() {
            fn_names.insert(d.name().to_string(), format!("fn{i}_{}", sanitize(d.name())));
        }
        Ok(Emitter {
            typing,
            table: TypeTable::new(),
            fn_names,
            protos: String::new(),
            bodies: String::new(),
        })
    }

    fn cfn(&self, name: &str) -> Result<&str, Diagnostic> {
        self.fn_names
            .get(name)
            .map(|s| s.as_str())
            .ok_or_else(|| unsupported(format!("unknown function `{name}`")))
    }

    fn lit_c(l: &Literal, table: &mut TypeTable) -> String {
        let ct = table
            .cname(&CoreType::Prim(l.ty))
            .expect("prim types always have a C name");
        format!("({ct}){}ULL", l.value)
    }

    fn child(node: &TypingTree, i: usize) -> &TypingTree {
        &node.children[i]
    }

    /// Emit statements computing `e` into `out`; returns a C expression
    /// for the value.
    fn gen(
        &mut self,
        fcx: &mut FnCtx,
        out: &mut String,
        ind: usize,
        e: &Expr,
        node: &TypingTree,
    ) -> Result<String, Diagnostic> {
        use ExprKind::*;
        let pad = "  ".repeat(ind);
        match &e.kind {
            Var(x) => fcx
                .lookup(x)
                .map(|s| s.to_string())
                .ok_or_else(|| unsupported(format!("unbound variable `{x}`"))),
            Unit => Ok("(unit_t){0}".into()),
            Lit(l) => Ok(Self::lit_c(l, &mut self.table)),
            FunRef(f, args) => {
                if !args.is_empty() {
                    return Err(unsupported("polymorphic reference reached the C backend"));
                }
                Ok(self.cfn(f)?.to_string())
            }
            PrimOp(op, args) => {
                let mut xs = Vec::new();
                for (i, a) in args.iter().enumerate() {
                    xs.push(self.gen(fcx, out, ind, a, Self::child(node, i))?);
                }
                let ct = self.table.cname(&node.ty)?;
                let operand_bits = match &Self::child(node, 0).ty {
                    CoreType::Prim(p) => p.bits().unwrap_or(8),
                    _ => 8,
                };
                Ok(match op {
                    crate::ast::PrimOp::Add => format!("({ct})({} + {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Sub => format!("({ct})({} - {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Mul => format!("({ct})({} * {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Div => format!("({ct})({} / {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Mod => format!("({ct})({} % {})", xs[0], xs[1]),
                    crate::ast::PrimOp::BitAnd => format!("({ct})({} & {})", xs[0], xs[1]),
                    crate::ast::PrimOp::BitOr => format!("({ct})({} | {})", xs[0], xs[1]),
                    crate::ast::PrimOp::BitXor => format!("({ct})({} ^ {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Shl => format!("cogc_shl{operand_bits}({}, {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Shr => format!("cogc_shr{operand_bits}({}, {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Complement => format!("({ct})(~{})", xs[0]),
                    crate::ast::PrimOp::Eq => format!("(uint8_t)({} == {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Ne => format!("(uint8_t)({} != {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Lt => format!("(uint8_t)({} < {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Le => format!("(uint8_t)({} <= {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Gt => format!("(uint8_t)({} > {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Ge => format!("(uint8_t)({} >= {})", xs[0], xs[1]),
                    crate::ast::PrimOp::And => format!("(uint8_t)({} && {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Or => format!("(uint8_t)({} || {})", xs[0], xs[1]),
                    crate::ast::PrimOp::Not => format!("(uint8_t)(!{})", xs[0]),
                })
            }
            App(f, a) => {
                let fx = self.gen(fcx, out, ind, f, Self::child(node, 0))?;
                let ax = self.gen(fcx, out, ind, a, Self::child(node, 1))?;
                let ct = self.table.cname(&node.ty)?;
                let tmp = fcx.fresh("app");
                let _ = writeln!(out, "{pad}{ct} {tmp} = {fx}({ax});");
                Ok(tmp)
            }
            Let(x, e1, e2) | LetBang(_, x, e1, e2) => {
                let rhs = self.gen(fcx, out, ind, e1, Self::child(node, 0))?;
                let ct = self.table.cname(&Self::child(node, 0).ty)?;
                let cx = fcx.fresh(x);
                let _ = writeln!(out, "{pad}{ct} {cx} = {rhs};");
                fcx.env.push((x.clone(), cx));
                let r = self.gen(fcx, out, ind, e2, Self::child(node, 1));
                fcx.env.pop();
                r
            }
            If(c, t, els) => {
                let cx = self.gen(fcx, out, ind, c, Self::child(node, 0))?;
                let ct = self.table.cname(&node.ty)?;
                let r = fcx.fresh("if");
                let _ = writeln!(out, "{pad}{ct} {r};");
                let _ = writeln!(out, "{pad}if ({cx}) {{");
                let mut tb = String::new();
                let tx = self.gen(fcx, &mut tb, ind + 1, t, Self::child(node, 1))?;
                out.push_str(&tb);
                let _ = writeln!(out, "{pad}  {r} = {tx};");
                let _ = writeln!(out, "{pad}}} else {{");
                let mut eb = String::new();
                let ex = self.gen(fcx, &mut eb, ind + 1, els, Self::child(node, 2))?;
                out.push_str(&eb);
                let _ = writeln!(out, "{pad}  {r} = {ex};");
                let _ = writeln!(out, "{pad}}}");
                Ok(r)
            }
            Cast(t, inner) => {
                let x = self.gen(fcx, out, ind, inner, Self::child(node, 0))?;
                let ct = self.table.cname(&CoreType::Prim(*t))?;
                Ok(format!("({ct})({x})"))
            }
            Con(c, inner) => {
                let x = self.gen(fcx, out, ind, inner, Self::child(node, 0))?;
                let alts = match &node.ty {
                    CoreType::Variant(alts) => alts.clone(),
                    _ => return Err(unsupported("con at non-variant type")),
                };
                let (tag, member) = TypeTable::alt_member(&alts, c);
                let ct = self.table.cname(&node.ty)?;
                Ok(format!("({ct}){{.tag = {tag}, .u.{member} = {x}}}"))
            }
            Promote(_, inner) => {
                let src_ty = Self::child(node, 0).ty.clone();
                let x = self.gen(fcx, out, ind, inner, Self::child(node, 0))?;
                self.emit_variant_convert(fcx, out, ind, &x, &src_ty, &node.ty)
            }
            Esac(inner) => {
                let x = self.gen(fcx, out, ind, inner, Self::child(node, 0))?;
                let alts = match &Self::child(node, 0).ty {
                    CoreType::Variant(alts) if alts.len() == 1 => alts.clone(),
                    _ => return Err(unsupported("esac on non-singleton variant")),
                };
                let (_, member) = TypeTable::alt_member(&alts, &alts[0].0);
                Ok(format!("{x}.u.{member}"))
            }
            Case { ctor, bound, matched, else_bound, else_body, scrutinee } => {
                let src_ty = Self::child(node, 0).ty.clone();
                let sx = self.gen(fcx, out, ind, scrutinee, Self::child(node, 0))?;
                let alts = match &src_ty {
                    CoreType::Variant(alts) => alts.clone(),
                    _ => return Err(unsupported("case on non-variant")),
                };
                let (tag, member) = TypeTable::alt_member(&alts, ctor);
                let payload_ty = alts.iter().find(|(c, _)| c == ctor).unwrap().1.clone();
                let pct = self.table.cname(&payload_ty)?;
                let ct = self.table.cname(&node.ty)?;
                let r = fcx.fresh("case");
                let _ = writeln!(out, "{pad}{ct} {r};");
                let _ = writeln!(out, "{pad}switch ({sx}.tag) {{");
                let _ = writeln!(out, "{pad}case {tag}: {{");
                let cb = fcx.fresh(bound);
                let _ = writeln!(out, "{pad}  {pct} {cb} = {sx}.u.{member};");
                fcx.env.push((bound.clone(), cb));
                let mut mb = String::new();
                let mx = self.gen(fcx, &mut mb, ind + 1, matched, Self::child(node, 1))?;
                fcx.env.pop();
                out.push_str(&mb);
                let _ = writeln!(out, "{pad}  {r} = {mx}; break;");
                let _ = writeln!(out, "{pad}}}");
                let _ = writeln!(out, "{pad}default: {{");
                let remaining: Vec<(String, CoreType)> =
                    alts.iter().filter(|(c, _)| c != ctor).cloned().collect();
                if remaining.is_empty() {
                    let _ = writeln!(out, "{pad}  abort();");
                } else {
                    let rem_ty = CoreType::Variant(remaining);
                    let eb =
                        self.emit_variant_convert(fcx, out, ind + 1, &sx, &src_ty, &rem_ty)?;
                    let cb = fcx.fresh(else_bound);
                    let rct = self.table.cname(&rem_ty)?;
                    let _ = writeln!(out, "{pad}  {rct} {cb} = {eb};");
                    fcx.env.push((else_bound.clone(), cb));
                    let mut ebody = String::new();
                    let ex =
                        self.gen(fcx, &mut ebody, ind + 1, else_body, Self::child(node, 2))?;
                    fcx.env.pop();
                    out.push_str(&ebody);
                    let _ = writeln!(out, "{pad}  {r} = {ex}; break;");
                }
                let _ = writeln!(out, "{pad}}}");
                let _ = writeln!(out, "{pad}}}");
                Ok(r)
            }
            Struct(fes) => {
                let fields = match &node.ty {
                    CoreType::Record { fields, .. } => fields.clone(),
                    _ => return Err(unsupported("struct at non-record type")),
                };
                let mut parts = Vec::new();
                for (i, (f, e1)) in fes.iter().enumerate() {
                    let x = self.gen(fcx, out, ind, e1, Self::child(node, i))?;
                    parts.push(format!(".{} = {x}", TypeTable::field_member(&fields, f)));
                }
                let ct = self.table.cname(&node.ty)?;
                Ok(format!("({ct}){{{}}}", parts.join(", ")))
            }
            Member(inner, f) => {
                let rec_ty = Self::child(node, 0).ty.clone();
                let x = self.gen(fcx, out, ind, inner, Self::child(node, 0))?;
                let (fields, boxed) = match &rec_ty {
                    CoreType::Record { fields, mode } => (fields.clone(), mode.is_boxed()),
                    _ => return Err(unsupported("member on non-record")),
                };
                let m = TypeTable::field_member(&fields, f);
                Ok(if boxed { format!("{x}->{m}") } else { format!("{x}.{m}") })
            }
            Put(e1, f, e2) => {
                let rec_ty = Self::child(node, 0).ty.clone();
                let rx = self.gen(fcx, out, ind, e1, Self::child(node, 0))?;
                let vx = self.gen(fcx, out, ind, e2, Self::child(node, 1))?;
                let (fields, boxed) = match &rec_ty {
                    CoreType::Record { fields, mode } => (fields.clone(), mode.is_boxed()),
                    _ => return Err(unsupported("put on non-record")),
                };
                let m = TypeTable::field_member(&fields, f);
                if boxed {
                    let _ = writeln!(out, "{pad}{rx}->{m} = {vx};");
                    Ok(rx)
                } else {
                    let ct = self.table.cname(&node.ty)?;
                    let tmp = fcx.fresh("put");
                    let _ = writeln!(out, "{pad}{ct} {tmp} = {rx};");
                    let _ = writeln!(out, "{pad}{tmp}.{m} = {vx};");
                    Ok(tmp)
                }
            }
            Take { rec_bound, field, field_bound, record, body } => {
                let rec_ty = Self::child(node, 0).ty.clone();
                let rx = self.gen(fcx, out, ind, record, Self::child(node, 0))?;
                let (fields, boxed) = match &rec_ty {
                    CoreType::Record { fields, mode } => (fields.clone(), mode.is_boxed()),
                    _ => return Err(unsupported("take on non-record")),
                };
                let m = TypeTable::field_member(&fields, field);
                let fty = fields.iter().find(|fd| &fd.name == field).unwrap().ty.clone();
                let fct = self.table.cname(&fty)?;
                let rct = self.table.cname(&rec_ty)?;
                let cy = fcx.fresh(field_bound);
                let cx = fcx.fresh(rec_bound);
                let acc = if boxed { "->" } else { "." };
                let _ = writeln!(out, "{pad}{fct} {cy} = {rx}{acc}{m};");
                let _ = writeln!(out, "{pad}{rct} {cx} = {rx};");
                fcx.env.push((field_bound.clone(), cy));
                fcx.env.push((rec_bound.clone(), cx));
                let r = self.gen(fcx, out, ind, body, Self::child(node, 1));
                fcx.env.pop();
                fcx.env.pop();
                r
            }
            Match(..) => Err(unsupported("match reached the C backend")),
        }
    }

    /// Convert a variant value between two alternative sets by remapping
    /// tags; used by promote and by case else-binding.
    fn emit_variant_convert(
        &mut self,
        fcx: &mut FnCtx,
        out: &mut String,
        ind: usize,
        src_expr: &str,
        src_ty: &CoreType,
        dst_ty: &CoreType,
    ) -> Result<String, Diagnostic> {
        let pad = "  ".repeat(ind);
        let (src_alts, dst_alts) = match (src_ty, dst_ty) {
            (CoreType::Variant(a), CoreType::Variant(b)) => (a.clone(), b.clone()),
            _ => return Err(unsupported("variant conversion on non-variants")),
        };
        let dst_c = self.table.cname(dst_ty)?;
        let tmp = fcx.fresh("prom");
        let _ = writeln!(out, "{pad}{dst_c} {tmp};");
        let _ = writeln!(out, "{pad}switch ({src_expr}.tag) {{");
        for (c, _) in canon_alts(&src_alts) {
            if !dst_alts.iter().any(|(dc, _)| dc == &c) {
                continue; // impossible at runtime for case-else remaps
            }
            let (si, sm) = TypeTable::alt_member(&src_alts, &c);
            let (di, dm) = TypeTable::alt_member(&dst_alts, &c);
            let _ = writeln!(
                out,
                "{pad}case {si}: {tmp}.tag = {di}; {tmp}.u.{dm} = {src_expr}.u.{sm}; break;"
            );
        }
        let _ = writeln!(out, "{pad}default: abort();");
        let _ = writeln!(out, "{pad}}}");
        Ok(tmp)
    }

    fn emit_fun(&mut self, f: &FunDef) -> Result<(), Diagnostic> {
        let (arg, res) = f.signature.arg_result();
        let (arg, res) = (arg.clone(), res.clone());
        let ac = self.table.cname(&arg)?;
        let rc = self.table.cname(&res)?;
        let cname = self.cfn(&f.name)?.to_string();
        let tree = self
            .typing
            .get(&f.name)
            .cloned()
            .ok_or_else(|| unsupported(format!("no typing derivation for `{}`", f.name)))?;
        let mut fcx = FnCtx { env: Vec::new(), tmp: 0 };
        let cparam = fcx.fresh(&f.param);
        fcx.env.push((f.param.clone(), cparam.clone()));
        let mut body = String::new();
        let ret = self.gen(&mut fcx, &mut body, 1, &f.body, &tree)?;
        let _ = writeln!(self.protos, "{rc} {cname}({ac} {cparam});");
        let _ = writeln!(
            self.bodies,
            "{rc} {cname}({ac} {cparam}) {{\n  (void){cparam};\n{body}  return {ret};\n}}\n"
        );
        Ok(())
    }

    fn emit_abstract(&mut self, d: &AbsFunDecl) -> Result<(), Diagnostic> {
        let base = strip_mono_suffix(&d.name).to_string();
        let (arg, res) = d.signature.arg_result();
        let (arg, res) = (arg.clone(), res.clone());
        let ac = self.table.cname(&arg)?;
        let rc = self.table.cname(&res)?;
        let cname = self.cfn(&d.name)?.to_string();
        let mut body = String::new();

        let rec_fields = |t: &CoreType| match t {
            CoreType::Record { fields, .. } => Some(fields.clone()),
            _ => None,
        };
        let wa_elem = |t: &CoreType| match t {
            CoreType::Abstract { name, args, .. } if name == WORDARRAY => Some(args[0].clone()),
            _ => None,
        };

        if base == "wordarray_create" {
            let elem = wa_elem(&res).ok_or_else(|| unsupported("bad create signature"))?;
            let ec = self.table.cname(&elem)?;
            let wa = rc.trim_end_matches('*').to_string();
            let _ = write!(
                body,
                "  {wa}* a = malloc(sizeof *a);\n  a->len = x;\n  a->data = calloc(x ? x : 1, sizeof({ec}));\n  return a;\n"
            );
        } else if base == "wordarray_free" {
            let _ = write!(body, "  free(x->data);\n  free(x);\n  return (unit_t){{0}};\n");
        } else if base == "wordarray_length" {
            let _ = writeln!(body, "  return x->len;");
        } else if base == "wordarray_get" {
            let alts = match &res {
                CoreType::Variant(alts) => alts.clone(),
                _ => return Err(unsupported("bad get signature")),
            };
            let (ok_tag, ok_m) = TypeTable::alt_member(&alts, "Ok");
            let (err_tag, err_m) = TypeTable::alt_member(&alts, "Err");
            let _ = write!(
                body,
                "  {rc} r;\n  if (x.f1_p2 < x.f0_p1->len) {{ r.tag = {ok_tag}; r.u.{ok_m} = x.f0_p1->data[x.f1_p2]; }}\n  else {{ r.tag = {err_tag}; r.u.{err_m} = (unit_t){{0}}; }}\n  return r;\n"
            );
        } else if base == "wordarray_put" {
            let alts = match &res {
                CoreType::Variant(alts) => alts.clone(),
                _ => return Err(unsupported("bad put signature")),
            };
            let (ok_tag, ok_m) = TypeTable::alt_member(&alts, "Ok");
            let (err_tag, err_m) = TypeTable::alt_member(&alts, "Err");
            let _ = write!(
                body,
                "  {rc} r;\n  if (x.f1_p2 < x.f0_p1->len) {{ x.f0_p1->data[x.f1_p2] = x.f2_p3; r.tag = {ok_tag}; r.u.{ok_m} = x.f0_p1; }}\n  else {{ r.tag = {err_tag}; r.u.{err_m} = x.f0_p1; }}\n  return r;\n"
            );
        } else if base == "wordarray_map_no_break" {
            let fields = rec_fields(&arg).ok_or_else(|| unsupported("bad map signature"))?;
            let step_ty = match &fields[1].ty {
                CoreType::Fun(a, _) => (**a).clone(),
                _ => return Err(unsupported("bad map signature")),
            };
            let step_c = self.table.cname(&step_ty)?;
            let _ = write!(
                body,
                "  {rc} r;\n  for (uint32_t i = 0; i < x.f0_p1->len; i++) {{\n    {step_c} s;\n    s.f0_p1 = x.f0_p1->data[i];\n    s.f1_p2 = x.f2_p3;\n    {step_c} o = x.f1_p2(s);\n    x.f0_p1->data[i] = o.f0_p1;\n    x.f2_p3 = o.f1_p2;\n  }}\n  r.f0_p1 = x.f0_p1;\n  r.f1_p2 = x.f2_p3;\n  return r;\n"
            );
        } else if base.starts_with("alloc_") || d.name.starts_with("alloc_") {
            let wa = rc.trim_end_matches('*').to_string();
            let _ =
                write!(body, "  (void)x;\n  {wa}* p = calloc(1, sizeof *p);\n  return p;\n");
        } else if base.starts_with("free_") || d.name.starts_with("free_") {
            let _ = write!(body, "  free(x);\n  return (unit_t){{0}};\n");
        } else {
            return Err(unsupported(format!(
                "abstract function `{}` has no C implementation",
                d.name
            )));
        }

        let _ = writeln!(self.protos, "{rc} {cname}({ac} x);");
        let _ = writeln!(self.bodies, "{rc} {cname}({ac} x) {{\n{body}}}\n");
        Ok(())
    }
}

fn contains_fun(t: &CoreType) -> bool {
    match t {
        CoreType::Fun(..) => true,
        CoreType::Var(_) | CoreType::VarBang(_) | CoreType::Unit | CoreType::Prim(_) => false,
        CoreType::Variant(alts) => alts.iter().any(|(_, t)| contains_fun(t)),
        CoreType::Record { fields, .. } => fields.iter().any(|f| contains_fun(&f.ty)),
        CoreType::Abstract { args, .. } => args.iter().any(contains_fun),
    }
}

/// Emit one C translation unit (program + built-ins) and a driver for a
/// monomorphic, A-normal, type-checked program.
pub fn emit_c(prog: &Program) -> Result<CEmission, Diagnostic> {
    let mut em = Emitter::new(prog)?;
    for d in &prog.defs {
        // register signature types up front for a stable definition order
        let _ = em.table.cname(&d.signature().body)?;
    }
    for d in &prog.defs {
        match d {
            Def::Fun(f) => em.emit_fun(f)?,
            Def::Abstract(a) => em.emit_abstract(a)?,
        }
    }
    let driverable: Vec<String> = prog
        .defs
        .iter()
        .filter(|d| {
            let (a, r) = d.signature().arg_result();
            matches!(d, Def::Fun(_))
                && d.signature().binders.is_empty()
                && !contains_fun(a)
                && !contains_fun(r)
        })
        .map(|d| d.name().to_string())
        .collect();

    let driver_c = emit_driver(prog, &mut em, &driverable)?;
    let program_c = format!(
        "/* generated, do not edit */\n{PRELUDE}\n{}\n{}\n{}",
        em.table.defs, em.protos, em.bodies
    );
    Ok(CEmission { program_c, driver_c, driverable })
}

// ---- driver: JSON in, JSON out ---------------------------------------------

const DRIVER_JSON: &str = r#"
/* minimal JSON reader for the driver protocol */
typedef struct jn {
  int kind; /* 0 num, 1 bool, 2 str, 3 arr, 4 obj, 5 null */
  unsigned long long num;
  int boolean;
  char *str;
  struct jn **items;
  char **keys;
  int n;
} jn;

static const char *jp;

static void jskip(void) { while (*jp == ' ' || *jp == '\t' || *jp == '\n' || *jp == '\r') jp++; }

static jn *jparse(void);

static char *jstring(void) {
  jskip();
  if (*jp != '"') { fprintf(stderr, "bad json string\n"); exit(4); }
  jp++;
  const char *start = jp;
  while (*jp && *jp != '"') jp++;
  size_t n = (size_t)(jp - start);
  char *s = malloc(n + 1);
  memcpy(s, start, n);
  s[n] = 0;
  jp++;
  return s;
}

static jn *jnew(int kind) {
  jn *x = calloc(1, sizeof *x);
  x->kind = kind;
  return x;
}

static jn *jparse(void) {
  jskip();
  if (*jp == '{') {
    jp++;
    jn *x = jnew(4);
    x->items = malloc(sizeof(jn *) * 64);
    x->keys = malloc(sizeof(char *) * 64);
    jskip();
    if (*jp == '}') { jp++; return x; }
    for (;;) {
      x->keys[x->n] = jstring();
      jskip();
      if (*jp != ':') { fprintf(stderr, "bad json object\n"); exit(4); }
      jp++;
      x->items[x->n] = jparse();
      x->n++;
      jskip();
      if (*jp == ',') { jp++; continue; }
      if (*jp == '}') { jp++; return x; }
      fprintf(stderr, "bad json object\n"); exit(4);
    }
  } else if (*jp == '[') {
    jp++;
    jn *x = jnew(3);
    x->items = malloc(sizeof(jn *) * 65536);
    jskip();
    if (*jp == ']') { jp++; return x; }
    for (;;) {
      x->items[x->n++] = jparse();
      jskip();
      if (*jp == ',') { jp++; continue; }
      if (*jp == ']') { jp++; return x; }
      fprintf(stderr, "bad json array\n"); exit(4);
    }
  } else if (*jp == '"') {
    jn *x = jnew(2);
    x->str = jstring();
    return x;
  } else if (!strncmp(jp, "true", 4)) {
    jp += 4;
    jn *x = jnew(1);
    x->boolean = 1;
    return x;
  } else if (!strncmp(jp, "false", 5)) {
    jp += 5;
    jn *x = jnew(1);
    x->boolean = 0;
    return x;
  } else if (!strncmp(jp, "null", 4)) {
    jp += 4;
    return jnew(5);
  } else {
    jn *x = jnew(0);
    char *end;
    x->num = strtoull(jp, &end, 10);
    if (end == jp) { fprintf(stderr, "bad json number\n"); exit(4); }
    jp = end;
    return x;
  }
}

static jn *jget(jn *o, const char *k) {
  if (!o || o->kind != 4) return 0;
  for (int i = 0; i < o->n; i++)
    if (!strcmp(o->keys[i], k)) return o->items[i];
  return 0;
}

static unsigned long long jnum(jn *x) {
  if (!x) { fprintf(stderr, "expected a number\n"); exit(4); }
  if (x->kind == 0) return x->num;
  if (x->kind == 1) return (unsigned long long)x->boolean;
  jn *l = jget(x, "lit");
  if (l) return jnum(l);
  fprintf(stderr, "expected a number\n");
  exit(4);
}

/* pointer registries: build side (json id -> addr), print side (addr -> id) */
static void *jreg[65536];
static const void *preg[65536];
static int preg_n;

static int preg_id(const void *p, int *fresh) {
  for (int i = 0; i < preg_n; i++)
    if (preg[i] == p) { *fresh = 0; return i + 1; }
  preg[preg_n++] = p;
  *fresh = 1;
  return preg_n;
}
"#;

struct DriverGen<'e> {
    em: &'e mut Emitter,
    names: HashMap<CoreType, String>,
    funcs: String,
    protos: String,
    next: usize,
}

/// Canonical codec key: like the layout key but keeping taken flags, which
/// the codecs must honour.
fn codec_key(t: &CoreType) -> CoreType {
    match t {
        CoreType::Variant(alts) => {
            let mut alts: Vec<(String, CoreType)> =
                alts.iter().map(|(c, t)| (c.clone(), codec_key(t))).collect();
            alts.sort_by(|a, b| a.0.cmp(&b.0));
            CoreType::Variant(alts)
        }
        CoreType::Record { fields, mode } => CoreType::Record {
            fields: fields
                .iter()
                .map(|f| FieldDecl { name: f.name.clone(), ty: codec_key(&f.ty), taken: f.taken })
                .collect(),
            mode: if mode.is_boxed() { Mode::Writable } else { Mode::Unboxed },
        },
        CoreType::Abstract { name, args, mode } => CoreType::Abstract {
            name: name.clone(),
            args: args.iter().map(codec_key).collect(),
            mode: if mode.is_boxed() { Mode::Writable } else { Mode::Unboxed },
        },
        CoreType::Fun(a, r) => CoreType::fun(codec_key(a), codec_key(r)),
        _ => t.clone(),
    }
}

impl<'e> DriverGen<'e> {
    /// Build/print function pair for a (fully typed) core type; returns
    /// the suffix shared by `build_<s>` and `print_<s>`.
    fn bp(&mut self, t: &CoreType) -> Result<String, Diagnostic> {
        let key = codec_key(t);
        if let Some(n) = self.names.get(&key) {
            return Ok(n.clone());
        }
        let suffix = format!("bp{}", self.next);
        self.next += 1;
        self.names.insert(key, suffix.clone());
        let ct = self.em.table.cname(t)?;
        let mut build = String::new();
        let mut print = String::new();

        match t {
            CoreType::Prim(p) => {
                let _ = writeln!(build, "  return ({ct})jnum(x);");
                match p {
                    PrimType::Bool => {
                        let _ = writeln!(
                            print,
                            "  printf(\"{{\\\"lit\\\":%s,\\\"ty\\\":\\\"bool\\\"}}\", x ? \"true\" : \"false\");"
                        );
                    }
                    _ => {
                        let _ = writeln!(
                            print,
                            "  printf(\"{{\\\"lit\\\":%llu,\\\"ty\\\":\\\"{}\\\"}}\", (unsigned long long)x);",
                            p.name()
                        );
                    }
                }
            }
            CoreType::Unit => {
                let _ = write!(build, "  (void)x;\n  return (unit_t){{0}};\n");
                let _ = write!(print, "  (void)x;\n  printf(\"\\\"unit\\\"\");\n");
            }
            CoreType::Variant(alts) => {
                let _ = write!(
                    build,
                    "  jn *c = jget(x, \"con\");\n  if (!c || c->kind != 3 || c->n < 2) {{ fprintf(stderr, \"expected variant\\n\"); exit(4); }}\n  {ct} r;\n  memset(&r, 0, sizeof r);\n"
                );
                for (c, pty) in canon_alts(alts) {
                    let sub = self.bp(&pty)?;
                    let (tag, member) = TypeTable::alt_member(alts, &c);
                    let _ = writeln!(
                        build,
                        "  if (!strcmp(c->items[0]->str, \"{c}\")) {{ r.tag = {tag}; r.u.{member} = build_{sub}(c->items[1]); return r; }}"
                    );
                }
                let _ =
                    write!(build, "  fprintf(stderr, \"unknown constructor\\n\");\n  exit(4);\n");

                let _ = writeln!(print, "  switch (x.tag) {{");
                for (c, pty) in canon_alts(alts) {
                    let sub = self.bp(&pty)?;
                    let (tag, member) = TypeTable::alt_member(alts, &c);
                    let _ = writeln!(
                        print,
                        "  case {tag}: printf(\"{{\\\"con\\\":[\\\"{c}\\\",\"); print_{sub}(x.u.{member}); printf(\"]}}\"); break;"
                    );
                }
                let _ = write!(print, "  default: abort();\n  }}\n");
            }
            CoreType::Record { fields, mode } => {
                let mut fill = String::new();
                let mut emit_fields = String::new();
                let acc = if mode.is_boxed() { "r->" } else { "r." };
                let pacc = if mode.is_boxed() { "x->" } else { "x." };
                let mut first = true;
                for f in fields {
                    if f.taken {
                        continue; // taken slots stay zeroed and unprinted
                    }
                    let m = TypeTable::field_member(fields, &f.name);
                    let sub = self.bp(&f.ty)?;
                    let _ = writeln!(fill, "  {acc}{m} = build_{sub}(jget(o, \"{}\"));", f.name);
                    let comma = if first { "" } else { "," };
                    first = false;
                    let _ = writeln!(
                        emit_fields,
                        "  printf(\"{comma}\\\"{}\\\":\"); print_{sub}({pacc}{m});",
                        f.name
                    );
                }
                if mode.is_boxed() {
                    let base = ct.trim_end_matches('*');
                    let _ = write!(
                        build,
                        "  jn *v = jget(x, \"val\");\n  unsigned long long id = jnum(jget(x, \"ptr\"));\n  if (!v) return ({ct})jreg[id];\n  {base} *r = calloc(1, sizeof *r);\n  jreg[id] = r;\n  jn *o = jget(v, \"rec\");\n{fill}  return r;\n"
                    );
                    let _ = write!(
                        print,
                        "  int fresh;\n  int id = preg_id(x, &fresh);\n  if (!fresh) {{ printf(\"{{\\\"ptr\\\":%d}}\", id); return; }}\n  printf(\"{{\\\"ptr\\\":%d,\\\"val\\\":{{\\\"rec\\\":{{\", id);\n{emit_fields}  printf(\"}}}}}}\");\n"
                    );
                } else {
                    let _ = write!(
                        build,
                        "  jn *o = jget(x, \"rec\");\n  if (!o) o = x;\n  {ct} r;\n  memset(&r, 0, sizeof r);\n{fill}  return r;\n"
                    );
                    let _ = write!(
                        print,
                        "  printf(\"{{\\\"rec\\\":{{\");\n{emit_fields}  printf(\"}}}}\");\n"
                    );
                }
            }
            CoreType::Abstract { name, args, .. } if name == WORDARRAY => {
                let elem = &args[0];
                let sub = self.bp(elem)?;
                let ec = self.em.table.cname(elem)?;
                let base = ct.trim_end_matches('*');
                let _ = write!(
                    build,
                    "  jn *v = jget(x, \"val\");\n  unsigned long long id = jnum(jget(x, \"ptr\"));\n  if (!v) return ({ct})jreg[id];\n  jn *items = jget(jget(v, \"abs\"), \"items\");\n  {base} *r = malloc(sizeof *r);\n  jreg[id] = r;\n  r->len = (uint32_t)items->n;\n  r->data = calloc(items->n ? items->n : 1, sizeof({ec}));\n  for (int i = 0; i < items->n; i++) r->data[i] = build_{sub}(items->items[i]);\n  return r;\n"
                );
                let _ = write!(
                    print,
                    "  int fresh;\n  int id = preg_id(x, &fresh);\n  if (!fresh) {{ printf(\"{{\\\"ptr\\\":%d}}\", id); return; }}\n  printf(\"{{\\\"ptr\\\":%d,\\\"val\\\":{{\\\"abs\\\":{{\\\"items\\\":[\", id);\n  for (uint32_t i = 0; i < x->len; i++) {{ if (i) printf(\",\"); print_{sub}(x->data[i]); }}\n  printf(\"],\\\"tag\\\":\\\"wordarray\\\"}}}}}}\");\n"
                );
            }
            _ => return Err(unsupported("type has no driver codec")),
        }

        let _ = writeln!(self.protos, "static {ct} build_{suffix}(jn *x);");
        let _ = writeln!(self.protos, "static void print_{suffix}({ct} x);");
        let _ = writeln!(self.funcs, "static {ct} build_{suffix}(jn *x) {{\n{build}}}\n");
        let _ = writeln!(self.funcs, "static void print_{suffix}({ct} x) {{\n{print}}}\n");
        Ok(suffix)
    }
}

fn emit_driver(
    prog: &Program,
    em: &mut Emitter,
    driverable: &[String],
) -> Result<String, Diagnostic> {
    let mut dg = DriverGen {
        em,
        names: HashMap::new(),
        funcs: String::new(),
        protos: String::new(),
        next: 0,
    };
    let mut dispatch = String::new();
    for name in driverable {
        let d = prog.lookup(name).expect("driverable fn exists");
        let (arg, res) = d.signature().arg_result();
        let (arg, res) = (arg.clone(), res.clone());
        let barg = dg.bp(&arg)?;
        let bres = dg.bp(&res)?;
        let cfn = dg.em.cfn(name)?.to_string();
        let _ = writeln!(
            dispatch,
            "  if (!strcmp(argv[1], \"{name}\")) {{ print_{bres}({cfn}(build_{barg}(root))); printf(\"\\n\"); return 0; }}"
        );
    }
    let funcs = dg.funcs;
    let protos = dg.protos;
    Ok(format!(
        r#"/* generated driver, do not edit */
#include "program.c"
{DRIVER_JSON}
{protos}
{funcs}
int main(int argc, char **argv) {{
  if (argc < 3) {{ fprintf(stderr, "usage: driver <fn> <input.json>\n"); return 3; }}
  FILE *f = fopen(argv[2], "rb");
  if (!f) {{ fprintf(stderr, "cannot open %s\n", argv[2]); return 3; }}
  fseek(f, 0, SEEK_END);
  long n = ftell(f);
  fseek(f, 0, SEEK_SET);
  char *buf = malloc((size_t)n + 1);
  if (fread(buf, 1, (size_t)n, f) != (size_t)n) {{ fprintf(stderr, "short read\n"); return 3; }}
  buf[n] = 0;
  fclose(f);
  jp = buf;
  jn *root = jparse();
{dispatch}  fprintf(stderr, "unknown function %s\n", argv[1]);
  return 3;
}}
"#
    ))
}

// ---- differential harness ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffOutcome {
    Passed { cases: usize },
    Skipped { reason: String },
    Failed { case: usize, expected: String, got: String },
    CompileFailure(String),
}

impl DiffOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, DiffOutcome::Passed { .. })
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            DiffOutcome::Passed { cases } => json!({"status": "passed", "cases": cases}),
            DiffOutcome::Skipped { reason } => json!({"status": "skipped", "reason": reason}),
            DiffOutcome::Failed { case, expected, got } => json!({
                "status": "failed", "case": case, "expected": expected, "got": got
            }),
            DiffOutcome::CompileFailure(msg) => {
                json!({"status": "compile-failure", "detail": msg})
            }
        }
    }
}

/// Locate a C compiler; `CC` overrides the `cc`/`gcc`/`clang` probe.
pub fn find_cc() -> Option<String> {
    let candidates = match std::env::var("CC") {
        Ok(cc) => vec![cc],
        Err(_) => vec!["cc".to_string(), "gcc".to_string(), "clang".to_string()],
    };
    candidates.into_iter().find(|cc| {
        Command::new(cc)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    })
}

/// Compile the program to C and compare driver runs against the
/// update-semantics interpreter on the given inputs, bit-exactly modulo a
/// pointer bijection. Reports SKIPPED when no C compiler is available.
pub fn diff_run_c(
    prog: &Program,
    fname: &str,
    inputs: &[VValue],
    workdir: Option<&Path>,
) -> Result<DiffOutcome, Diagnostic> {
    let cc = match find_cc() {
        Some(cc) => cc,
        None => {
            return Ok(DiffOutcome::Skipped {
                reason: "no C compiler available".to_string(),
            })
        }
    };

    let prog = desugar_program(prog)?;
    check_program(&prog).map_err(|mut ds| ds.remove(0))?;
    let (mono, rename) = monomorphise(&prog, None)?;
    let anf = a_normalise(&mono);
    check_program(&anf).map_err(|mut ds| ds.remove(0))?;
    let mono_name = rename
        .lookup(fname, &[])
        .ok_or_else(|| unsupported(format!("`{fname}` is not a monomorphic entry")))?
        .to_string();

    let emission = emit_c(&anf)?;
    if !emission.driverable.contains(&mono_name) {
        return Err(unsupported(format!(
            "`{fname}` is not first-order; the driver cannot exercise it"
        )));
    }

    let tmp;
    let dir: &Path = match workdir {
        Some(d) => d,
        None => {
            tmp = tempfile::tempdir().map_err(|e| unsupported(e.to_string()))?;
            tmp.path()
        }
    };
    std::fs::create_dir_all(dir).map_err(|e| unsupported(e.to_string()))?;
    let prog_path = dir.join("program.c");
    let driver_path = dir.join("program_driver.c");
    std::fs::write(&prog_path, &emission.program_c).map_err(|e| unsupported(e.to_string()))?;
    std::fs::write(&driver_path, &emission.driver_c).map_err(|e| unsupported(e.to_string()))?;

    let exe = dir.join("driver");
    let out = Command::new(&cc)
        .args(["-std=c11", "-O1", "-Wall", "-o"])
        .arg(&exe)
        .arg(&driver_path)
        .output()
        .map_err(|e| unsupported(format!("cannot run {cc}: {e}")))?;
    if !out.status.success() {
        return Ok(DiffOutcome::CompileFailure(
            String::from_utf8_lossy(&out.stderr).to_string(),
        ));
    }

    let reg = crate::ffi::builtin_library(&anf)
        .map_err(|e| unsupported(format!("registry: {e}")))?;
    let fdef = anf.lookup_fun(&mono_name).expect("mono entry exists");
    let (arg_ty, res_ty) = fdef.signature.arg_result();
    let (arg_ty, res_ty) = (arg_ty.clone(), res_ty.clone());

    for (i, v) in inputs.iter().enumerate() {
        let mut store = Store::new();
        let u = embed_uvalue(v, &arg_ty, &mut store)
            .map_err(|e| unsupported(format!("input {i}: {e}")))?;
        let input_json = deep_uvalue_json_typed(&u, &store, &arg_ty)
            .map_err(|e| unsupported(format!("input {i}: {e}")))?;
        let (res, store_out) = apply_fn_u(
            &anf,
            &reg,
            &mono_name,
            &[],
            u,
            store,
            crate::sem_value::DEFAULT_FUEL,
        )
        .map_err(|e| unsupported(format!("interpreter failed on case {i}: {e}")))?;
        let expected = deep_uvalue_json_typed(&res, &store_out, &res_ty)
            .map_err(|e| unsupported(format!("case {i}: {e}")))?;

        let in_path = dir.join(format!("input_{i}.json"));
        std::fs::write(&in_path, serde_json::to_string(&input_json).unwrap())
            .map_err(|e| unsupported(e.to_string()))?;
        let run = Command::new(&exe)
            .arg(&mono_name)
            .arg(&in_path)
            .output()
            .map_err(|e| unsupported(format!("cannot run driver: {e}")))?;
        if !run.status.success() {
            return Ok(DiffOutcome::Failed {
                case: i,
                expected: expected.to_string(),
                got: format!(
                    "driver exited with {:?}: {}",
                    run.status.code(),
                    String::from_utf8_lossy(&run.stderr)
                ),
            });
        }
        let got: serde_json::Value = match serde_json::from_slice(&run.stdout) {
            Ok(v) => v,
            Err(e) => {
                return Ok(DiffOutcome::Failed {
                    case: i,
                    expected: expected.to_string(),
                    got: format!(
                        "unparseable driver output ({e}): {}",
                        String::from_utf8_lossy(&run.stdout)
                    ),
                })
            }
        };
        if got != expected {
            return Ok(DiffOutcome::Failed {
                case: i,
                expected: expected.to_string(),
                got: got.to_string(),
            });
        }
    }
    Ok(DiffOutcome::Passed { cases: inputs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn diff(src: &str, fname: &str, inputs: &[VValue]) {
        let prog = parse_program(src).unwrap();
        match diff_run_c(&prog, fname, inputs, None).unwrap() {
            DiffOutcome::Passed { cases } => assert_eq!(cases, inputs.len()),
            DiffOutcome::Skipped { reason } => {
                eprintln!("diff skipped: {reason}");
            }
            other => panic!("differential run failed: {other:?}"),
        }
    }

    #[test]
    fn arithmetic_program_matches() {
        diff(
            "(def f (forall) (fn (x u8) u8 (op + (op * x 3) 7)))",
            "f",
            &(0..10)
                .map(|i| VValue::lit(i * 25 % 256, PrimType::U8))
                .collect::<Vec<_>>(),
        );
    }

    #[test]
    fn boxed_put_take_matches() {
        diff(
            "(def f (forall) (fn (r (rec wr (a u8) (b u16))) (rec wr (a u8) (b u16))
               (take x a y r (put x a (op + y 1)))))",
            "f",
            &[VValue::Record(vec![
                ("a".into(), VValue::lit(9, PrimType::U8)),
                ("b".into(), VValue::lit(700, PrimType::U16)),
            ])],
        );
    }

    #[test]
    fn variant_and_case_match() {
        diff(
            "(def f (forall) (fn (v (variant (A u8) (B u16) (C bool))) u16
               (match v
                 (A a (cast u16 a))
                 (B b b)
                 (C c (if c (cast u16 1) (cast u16 0))))))",
            "f",
            &[
                VValue::Con("A".into(), Box::new(VValue::lit(5, PrimType::U8))),
                VValue::Con("B".into(), Box::new(VValue::lit(500, PrimType::U16))),
                VValue::Con("C".into(), Box::new(VValue::Lit(Literal::bool(true)))),
            ],
        );
    }

    #[test]
    fn wordarray_program_matches() {
        diff(
            "(absdef wordarray_create (forall (a (D S E))) (fn (n u32) (abs wordarray wr a)))
             (absdef wordarray_put (forall (a (D S E)))
               (fn (x (tuple (abs wordarray wr a) u32 a))
                 (variant (Err (abs wordarray wr a)) (Ok (abs wordarray wr a)))))
             (def f (forall) (fn (n u32) (abs wordarray wr u8)
               (let arr (app (funref wordarray_create u8) n)
                 (case (app (funref wordarray_put u8) (tuple arr (cast u32 0) 42))
                   Ok a a
                   e (esac e)))))",
            "f",
            &[VValue::lit(3, PrimType::U32), VValue::lit(0, PrimType::U32)],
        );
    }
}
