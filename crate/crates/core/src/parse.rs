//! Parser for the parenthesised core syntax (`.cogc` files).
//!
//! The grammar is a small s-expression language; every node records its
//! source span. Line comments start with `;`.
//!
//! Two sugar forms are accepted and mapped away at parse time:
//! `(tuple t1 t2 ...)` in type position becomes an unboxed record with
//! fields `p1`, `p2`, ... and `(tuple e1 e2 ...)` in expression position
//! becomes the corresponding struct literal. The `(match ...)` form is kept
//! in the tree for the desugaring pass to eliminate.

use crate::ast::*;
use crate::diagnostics::{Code, Diagnostic};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Atom(String),
    Int(u64),
}

#[derive(Debug, Clone)]
struct SpannedToken {
    tok: Token,
    span: Span,
}

fn lex(text: &str) -> Result<Vec<SpannedToken>, Diagnostic> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == ';' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else if c == '(' {
            out.push(SpannedToken {
                tok: Token::LParen,
                span: Span::new(i as u32, i as u32 + 1),
            });
            i += 1;
        } else if c == ')' {
            out.push(SpannedToken {
                tok: Token::RParen,
                span: Span::new(i as u32, i as u32 + 1),
            });
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                    break;
                }
                i += 1;
            }
            let s = &text[start..i];
            let span = Span::new(start as u32, i as u32);
            if s.bytes().all(|b| b.is_ascii_digit()) {
                let v: u64 = s.parse().map_err(|_| {
                    Diagnostic::new(Code::Parse, span, format!("integer literal out of range: {s}"))
                })?;
                out.push(SpannedToken { tok: Token::Int(v), span });
            } else {
                out.push(SpannedToken { tok: Token::Atom(s.to_string()), span });
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<SpannedToken>,
    pos: usize,
    end: u32,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> Option<&SpannedToken> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> Span {
        self.peek().map(|t| t.span).unwrap_or(Span::new(self.end, self.end))
    }

    fn err<T>(&self, expected: &str) -> PResult<T> {
        let found = match self.peek() {
            Some(SpannedToken { tok: Token::LParen, .. }) => "`(`".to_string(),
            Some(SpannedToken { tok: Token::RParen, .. }) => "`)`".to_string(),
            Some(SpannedToken { tok: Token::Atom(a), .. }) => format!("`{a}`"),
            Some(SpannedToken { tok: Token::Int(v), .. }) => format!("`{v}`"),
            None => "end of input".to_string(),
        };
        Err(Diagnostic::new(
            Code::Parse,
            self.here(),
            format!("expected {expected}, found {found}"),
        ))
    }

    fn expect_lparen(&mut self) -> PResult<Span> {
        match self.peek() {
            Some(SpannedToken { tok: Token::LParen, span }) => {
                let s = *span;
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("`(`"),
        }
    }

    fn expect_rparen(&mut self) -> PResult<Span> {
        match self.peek() {
            Some(SpannedToken { tok: Token::RParen, span }) => {
                let s = *span;
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("`)`"),
        }
    }

    fn at_rparen(&self) -> bool {
        matches!(self.peek(), Some(SpannedToken { tok: Token::RParen, .. }))
    }

    fn atom(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek() {
            Some(SpannedToken { tok: Token::Atom(a), span }) => {
                let r = (a.clone(), *span);
                self.pos += 1;
                Ok(r)
            }
            _ => self.err(what),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<Span> {
        match self.peek() {
            Some(SpannedToken { tok: Token::Atom(a), span }) if a == kw => {
                let s = *span;
                self.pos += 1;
                Ok(s)
            }
            _ => self.err(&format!("`{kw}`")),
        }
    }

    fn name(&mut self, what: &str) -> PResult<(String, Span)> {
        let (a, span) = self.atom(what)?;
        if a.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(Diagnostic::new(
                Code::Parse,
                span,
                format!("expected {what}, found number-like token `{a}`"),
            ));
        }
        Ok((a, span))
    }

    // ---- types ----------------------------------------------------------

    fn parse_type(&mut self) -> PResult<CoreType> {
        match self.peek().cloned() {
            Some(SpannedToken { tok: Token::Atom(a), span }) => {
                self.pos += 1;
                if a == "unit" {
                    Ok(CoreType::Unit)
                } else if let Some(p) = PrimType::from_name(&a) {
                    Ok(CoreType::Prim(p))
                } else if a.starts_with(|c: char| c.is_ascii_digit()) {
                    Err(Diagnostic::new(Code::Parse, span, "expected a type".to_string()))
                } else {
                    Ok(CoreType::Var(a))
                }
            }
            Some(SpannedToken { tok: Token::LParen, .. }) => {
                self.expect_lparen()?;
                let (head, hspan) = self.atom("type constructor")?;
                let t = match head.as_str() {
                    "!" => {
                        let (v, _) = self.name("type variable")?;
                        CoreType::VarBang(v)
                    }
                    "fun" => {
                        let a = self.parse_type()?;
                        let r = self.parse_type()?;
                        CoreType::fun(a, r)
                    }
                    "variant" => {
                        let mut alts = Vec::new();
                        let mut seen = BTreeSet::new();
                        while !self.at_rparen() {
                            self.expect_lparen()?;
                            let (c, cspan) = self.name("constructor name")?;
                            let ty = self.parse_type()?;
                            self.expect_rparen()?;
                            if !seen.insert(c.clone()) {
                                return Err(Diagnostic::new(
                                    Code::Parse,
                                    cspan,
                                    format!("duplicate variant constructor `{c}`"),
                                ));
                            }
                            alts.push((c, ty));
                        }
                        if alts.is_empty() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                hspan,
                                "variant type needs at least one alternative",
                            ));
                        }
                        CoreType::Variant(alts)
                    }
                    "rec" => {
                        let (m, mspan) = self.atom("mode (ro|wr|ub)")?;
                        let mode = Mode::from_name(&m).ok_or_else(|| {
                            Diagnostic::new(Code::Parse, mspan, format!("unknown mode `{m}`"))
                        })?;
                        let mut fields = Vec::new();
                        let mut seen = BTreeSet::new();
                        while !self.at_rparen() {
                            self.expect_lparen()?;
                            let (f, fspan) = self.name("field name")?;
                            let ty = self.parse_type()?;
                            let taken = if !self.at_rparen() {
                                self.keyword("taken")?;
                                true
                            } else {
                                false
                            };
                            self.expect_rparen()?;
                            if !seen.insert(f.clone()) {
                                return Err(Diagnostic::new(
                                    Code::Parse,
                                    fspan,
                                    format!("duplicate record field `{f}`"),
                                ));
                            }
                            fields.push(FieldDecl { name: f, ty, taken });
                        }
                        if fields.is_empty() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                hspan,
                                "record type needs at least one field",
                            ));
                        }
                        CoreType::Record { fields, mode }
                    }
                    "abs" => {
                        let (name, _) = self.name("abstract type name")?;
                        let (m, mspan) = self.atom("mode (ro|wr|ub)")?;
                        let mode = Mode::from_name(&m).ok_or_else(|| {
                            Diagnostic::new(Code::Parse, mspan, format!("unknown mode `{m}`"))
                        })?;
                        let mut args = Vec::new();
                        while !self.at_rparen() {
                            args.push(self.parse_type()?);
                        }
                        CoreType::Abstract { name, args, mode }
                    }
                    "tuple" => {
                        // sugar: unboxed record with fields p1, p2, ...
                        let mut fields = Vec::new();
                        let mut i = 1;
                        while !self.at_rparen() {
                            let ty = self.parse_type()?;
                            fields.push(FieldDecl { name: format!("p{i}"), ty, taken: false });
                            i += 1;
                        }
                        if fields.is_empty() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                hspan,
                                "tuple type needs at least one component",
                            ));
                        }
                        CoreType::Record { fields, mode: Mode::Unboxed }
                    }
                    _ => {
                        return Err(Diagnostic::new(
                            Code::Parse,
                            hspan,
                            format!("unknown type form `{head}`"),
                        ))
                    }
                };
                self.expect_rparen()?;
                Ok(t)
            }
            _ => self.err("a type"),
        }
    }

    // ---- expressions -----------------------------------------------------

    fn parse_expr(&mut self) -> PResult<Expr> {
        match self.peek().cloned() {
            Some(SpannedToken { tok: Token::Int(v), span }) => {
                self.pos += 1;
                Ok(Expr::new(
                    ExprKind::Lit(Literal::uint(v, PrimType::smallest_for(v))),
                    span,
                ))
            }
            Some(SpannedToken { tok: Token::Atom(a), span }) => {
                self.pos += 1;
                let kind = match a.as_str() {
                    "unit" => ExprKind::Unit,
                    "true" => ExprKind::Lit(Literal::bool(true)),
                    "false" => ExprKind::Lit(Literal::bool(false)),
                    _ => ExprKind::Var(a),
                };
                Ok(Expr::new(kind, span))
            }
            Some(SpannedToken { tok: Token::LParen, span: lspan }) => {
                self.expect_lparen()?;
                let (head, hspan) = self.atom("an expression form")?;
                let kind = match head.as_str() {
                    "funref" => {
                        let (f, _) = self.name("function name")?;
                        let mut args = Vec::new();
                        while !self.at_rparen() {
                            args.push(self.parse_type()?);
                        }
                        ExprKind::FunRef(f, args)
                    }
                    "op" => {
                        let (o, ospan) = self.atom("operator name")?;
                        let op = PrimOp::from_name(&o).ok_or_else(|| {
                            Diagnostic::new(Code::Parse, ospan, format!("unknown operator `{o}`"))
                        })?;
                        let mut args = Vec::new();
                        while !self.at_rparen() {
                            args.push(self.parse_expr()?);
                        }
                        if args.len() != op.arity() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                ospan,
                                format!(
                                    "operator `{o}` takes {} operand(s), got {}",
                                    op.arity(),
                                    args.len()
                                ),
                            ));
                        }
                        ExprKind::PrimOp(op, args)
                    }
                    "app" => {
                        let f = self.parse_expr()?;
                        let a = self.parse_expr()?;
                        ExprKind::App(Box::new(f), Box::new(a))
                    }
                    "let" => {
                        let (x, _) = self.name("binder")?;
                        let e1 = self.parse_expr()?;
                        let e2 = self.parse_expr()?;
                        ExprKind::Let(x, Box::new(e1), Box::new(e2))
                    }
                    "letbang" => {
                        self.expect_lparen()?;
                        let mut ys = Vec::new();
                        while !self.at_rparen() {
                            let (y, yspan) = self.name("observed variable")?;
                            if ys.contains(&y) {
                                return Err(Diagnostic::new(
                                    Code::Parse,
                                    yspan,
                                    format!("variable `{y}` observed twice"),
                                ));
                            }
                            ys.push(y);
                        }
                        self.expect_rparen()?;
                        let (x, _) = self.name("binder")?;
                        let e1 = self.parse_expr()?;
                        let e2 = self.parse_expr()?;
                        ExprKind::LetBang(ys, x, Box::new(e1), Box::new(e2))
                    }
                    "if" => {
                        let c = self.parse_expr()?;
                        let t = self.parse_expr()?;
                        let e = self.parse_expr()?;
                        ExprKind::If(Box::new(c), Box::new(t), Box::new(e))
                    }
                    "cast" => {
                        let ty = self.parse_type()?;
                        let t = match ty {
                            CoreType::Prim(p) => p,
                            _ => {
                                return Err(Diagnostic::new(
                                    Code::Parse,
                                    hspan,
                                    "cast target must be a primitive type",
                                ))
                            }
                        };
                        let e = self.parse_expr()?;
                        ExprKind::Cast(t, Box::new(e))
                    }
                    "promote" => {
                        self.expect_lparen()?;
                        let mut alts = Vec::new();
                        let mut seen = BTreeSet::new();
                        while !self.at_rparen() {
                            let (c, cspan) = self.name("constructor name")?;
                            let ty = self.parse_type()?;
                            if !seen.insert(c.clone()) {
                                return Err(Diagnostic::new(
                                    Code::Parse,
                                    cspan,
                                    format!("duplicate promote alternative `{c}`"),
                                ));
                            }
                            alts.push((c, ty));
                        }
                        self.expect_rparen()?;
                        if alts.is_empty() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                hspan,
                                "promote needs at least one alternative",
                            ));
                        }
                        let e = self.parse_expr()?;
                        ExprKind::Promote(alts, Box::new(e))
                    }
                    "con" => {
                        let (c, _) = self.name("constructor name")?;
                        let e = self.parse_expr()?;
                        ExprKind::Con(c, Box::new(e))
                    }
                    "case" => {
                        let scrutinee = self.parse_expr()?;
                        let (ctor, _) = self.name("constructor name")?;
                        let (bound, _) = self.name("binder")?;
                        let matched = self.parse_expr()?;
                        let (else_bound, _) = self.name("else binder")?;
                        let else_body = self.parse_expr()?;
                        ExprKind::Case {
                            scrutinee: Box::new(scrutinee),
                            ctor,
                            bound,
                            matched: Box::new(matched),
                            else_bound,
                            else_body: Box::new(else_body),
                        }
                    }
                    "esac" => {
                        let e = self.parse_expr()?;
                        ExprKind::Esac(Box::new(e))
                    }
                    "struct" => {
                        let mut fields = Vec::new();
                        let mut seen = BTreeSet::new();
                        while !self.at_rparen() {
                            self.expect_lparen()?;
                            let (f, fspan) = self.name("field name")?;
                            let e = self.parse_expr()?;
                            self.expect_rparen()?;
                            if !seen.insert(f.clone()) {
                                return Err(Diagnostic::new(
                                    Code::Parse,
                                    fspan,
                                    format!("duplicate struct field `{f}`"),
                                ));
                            }
                            fields.push((f, e));
                        }
                        if fields.is_empty() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                hspan,
                                "struct needs at least one field",
                            ));
                        }
                        ExprKind::Struct(fields)
                    }
                    "member" => {
                        let e = self.parse_expr()?;
                        let (f, _) = self.name("field name")?;
                        ExprKind::Member(Box::new(e), f)
                    }
                    "put" => {
                        let e1 = self.parse_expr()?;
                        let (f, _) = self.name("field name")?;
                        let e2 = self.parse_expr()?;
                        ExprKind::Put(Box::new(e1), f, Box::new(e2))
                    }
                    "take" => {
                        let (x, _) = self.name("record binder")?;
                        let (f, _) = self.name("field name")?;
                        let (y, _) = self.name("field binder")?;
                        let e1 = self.parse_expr()?;
                        let e2 = self.parse_expr()?;
                        ExprKind::Take {
                            rec_bound: x,
                            field: f,
                            field_bound: y,
                            record: Box::new(e1),
                            body: Box::new(e2),
                        }
                    }
                    "match" => {
                        let scrutinee = self.parse_expr()?;
                        let mut arms = Vec::new();
                        while !self.at_rparen() {
                            self.expect_lparen()?;
                            let (c, _) = self.name("constructor name")?;
                            let (x, _) = self.name("binder")?;
                            let body = self.parse_expr()?;
                            self.expect_rparen()?;
                            arms.push((c, x, body));
                        }
                        ExprKind::Match(Box::new(scrutinee), arms)
                    }
                    "tuple" => {
                        // sugar: struct with fields p1, p2, ...
                        let mut fields = Vec::new();
                        let mut i = 1;
                        while !self.at_rparen() {
                            fields.push((format!("p{i}"), self.parse_expr()?));
                            i += 1;
                        }
                        if fields.is_empty() {
                            return Err(Diagnostic::new(
                                Code::Parse,
                                hspan,
                                "tuple needs at least one component",
                            ));
                        }
                        ExprKind::Struct(fields)
                    }
                    _ => {
                        return Err(Diagnostic::new(
                            Code::Parse,
                            hspan,
                            format!("unknown expression form `{head}`"),
                        ))
                    }
                };
                let rspan = self.expect_rparen()?;
                Ok(Expr::new(kind, lspan.join(rspan)))
            }
            _ => self.err("an expression"),
        }
    }

    // ---- definitions -----------------------------------------------------

    fn parse_poly(&mut self) -> PResult<Vec<(String, Kind)>> {
        self.expect_lparen()?;
        self.keyword("forall")?;
        let mut binders: Vec<(String, Kind)> = Vec::new();
        while !self.at_rparen() {
            self.expect_lparen()?;
            let (a, aspan) = self.name("type variable")?;
            if binders.iter().any(|(b, _)| b == &a) {
                return Err(Diagnostic::new(
                    Code::Parse,
                    aspan,
                    format!("duplicate type binder `{a}`"),
                ));
            }
            self.expect_lparen()?;
            let mut kind = Kind::NONE;
            while !self.at_rparen() {
                let (p, pspan) = self.atom("permission (D|S|E)")?;
                let k = Kind::from_letters(&p).filter(|_| p.len() == 1).ok_or_else(|| {
                    Diagnostic::new(Code::Parse, pspan, format!("unknown permission `{p}`"))
                })?;
                kind = kind.union(k);
            }
            self.expect_rparen()?;
            self.expect_rparen()?;
            binders.push((a, kind));
        }
        self.expect_rparen()?;
        Ok(binders)
    }

    fn parse_def(&mut self) -> PResult<Def> {
        let lspan = self.expect_lparen()?;
        let (head, hspan) = self.atom("`def` or `absdef`")?;
        match head.as_str() {
            "def" => {
                let (name, _) = self.name("function name")?;
                let binders = self.parse_poly()?;
                self.expect_lparen()?;
                self.keyword("fn")?;
                self.expect_lparen()?;
                let (param, _) = self.name("parameter name")?;
                let param_ty = self.parse_type()?;
                self.expect_rparen()?;
                let result_ty = self.parse_type()?;
                let body = self.parse_expr()?;
                self.expect_rparen()?;
                let rspan = self.expect_rparen()?;
                Ok(Def::Fun(FunDef {
                    name,
                    signature: PolyType {
                        binders,
                        body: CoreType::fun(param_ty, result_ty),
                    },
                    param,
                    body,
                    span: lspan.join(rspan),
                }))
            }
            "absdef" => {
                let (name, _) = self.name("function name")?;
                let binders = self.parse_poly()?;
                self.expect_lparen()?;
                self.keyword("fn")?;
                self.expect_lparen()?;
                let (_param, _) = self.name("parameter name")?;
                let param_ty = self.parse_type()?;
                self.expect_rparen()?;
                let result_ty = self.parse_type()?;
                self.expect_rparen()?;
                let rspan = self.expect_rparen()?;
                Ok(Def::Abstract(AbsFunDecl {
                    name,
                    signature: PolyType {
                        binders,
                        body: CoreType::fun(param_ty, result_ty),
                    },
                    span: lspan.join(rspan),
                }))
            }
            _ => Err(Diagnostic::new(
                Code::Parse,
                hspan,
                format!("expected `def` or `absdef`, found `{head}`"),
            )),
        }
    }
}

/// Collect every type that appears in an expression (function reference
/// arguments and promote targets).
fn expr_types<'a>(e: &'a Expr, acc: &mut Vec<&'a CoreType>) {
    use ExprKind::*;
    match &e.kind {
        FunRef(_, args) => acc.extend(args.iter()),
        Promote(alts, inner) => {
            acc.extend(alts.iter().map(|(_, t)| t));
            expr_types(inner, acc);
            return;
        }
        _ => {}
    }
    match &e.kind {
        Var(_) | Unit | Lit(_) | FunRef(..) => {}
        PrimOp(_, args) => args.iter().for_each(|a| expr_types(a, acc)),
        App(f, a) => {
            expr_types(f, acc);
            expr_types(a, acc);
        }
        Let(_, e1, e2) | LetBang(_, _, e1, e2) => {
            expr_types(e1, acc);
            expr_types(e2, acc);
        }
        If(c, t, e2) => {
            expr_types(c, acc);
            expr_types(t, acc);
            expr_types(e2, acc);
        }
        Cast(_, e1) | Con(_, e1) | Esac(e1) | Member(e1, _) => expr_types(e1, acc),
        Promote(..) => unreachable!(),
        Case { scrutinee, matched, else_body, .. } => {
            expr_types(scrutinee, acc);
            expr_types(matched, acc);
            expr_types(else_body, acc);
        }
        Struct(fields) => fields.iter().for_each(|(_, e1)| expr_types(e1, acc)),
        Put(e1, _, e2) => {
            expr_types(e1, acc);
            expr_types(e2, acc);
        }
        Take { record, body, .. } => {
            expr_types(record, acc);
            expr_types(body, acc);
        }
        Match(s, arms) => {
            expr_types(s, acc);
            arms.iter().for_each(|(_, _, b)| expr_types(b, acc));
        }
    }
}

fn check_type_vars_bound(def: &Def) -> Result<(), Diagnostic> {
    let binders: BTreeSet<&str> = def
        .signature()
        .binders
        .iter()
        .map(|(n, _)| n.as_str())
        .collect();
    let mut types: Vec<&CoreType> = vec![&def.signature().body];
    if let Def::Fun(f) = def {
        expr_types(&f.body, &mut types);
    }
    for t in types {
        for v in t.free_type_vars() {
            if !binders.contains(v.as_str()) {
                return Err(Diagnostic::new(
                    Code::UnboundTypeVariable,
                    def.span(),
                    format!("type variable `{v}` is not bound by the definition's binders"),
                ));
            }
        }
    }
    Ok(())
}

/// Parse a whole program. Definition names must be globally unique and all
/// type variables must be bound by their definition's binders.
pub fn parse_program(text: &str) -> Result<Program, Diagnostic> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() as u32 };
    let mut defs = Vec::new();
    while p.peek().is_some() {
        let def = p.parse_def()?;
        if defs.iter().any(|d: &Def| d.name() == def.name()) {
            return Err(Diagnostic::new(
                Code::DuplicateDefinition,
                def.span(),
                format!("definition `{}` is declared twice", def.name()),
            ));
        }
        check_type_vars_bound(&def)?;
        defs.push(def);
    }
    Ok(Program::new(defs))
}

/// Parse a single type, used by tests and tooling.
pub fn parse_type(text: &str) -> Result<CoreType, Diagnostic> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() as u32 };
    let t = p.parse_type()?;
    match p.peek() {
        None => Ok(t),
        Some(_) => p.err("end of input"),
    }
}

/// Parse a single expression, used by tests and tooling.
pub fn parse_expr(text: &str) -> Result<Expr, Diagnostic> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() as u32 };
    let e = p.parse_expr()?;
    match p.peek() {
        None => Ok(e),
        Some(_) => p.err("end of input"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_identity_function() {
        let p = parse_program("(def id (forall) (fn (x u32) u32 x))").unwrap();
        assert_eq!(p.defs.len(), 1);
        let f = p.lookup_fun("id").unwrap();
        assert_eq!(f.param, "x");
        assert_eq!(
            f.signature.body,
            CoreType::fun(CoreType::Prim(PrimType::U32), CoreType::Prim(PrimType::U32))
        );
        assert!(f.signature.binders.is_empty());
    }

    #[test]
    fn parses_kinded_binder() {
        let p = parse_program("(def f (forall (a (S))) (fn (x a) a x))").unwrap();
        let f = p.lookup_fun("f").unwrap();
        assert_eq!(f.signature.binders, vec![("a".to_string(), Kind::S)]);
    }

    #[test]
    fn duplicate_definitions_rejected() {
        let err = parse_program(
            "(def f (forall) (fn (x u8) u8 x)) (def f (forall) (fn (x u8) u8 x))",
        )
        .unwrap_err();
        assert_eq!(err.code, Code::DuplicateDefinition);
    }

    #[test]
    fn unbound_type_variable_rejected() {
        let err = parse_program("(def f (forall) (fn (x a) a x))").unwrap_err();
        assert_eq!(err.code, Code::UnboundTypeVariable);
    }

    #[test]
    fn unbound_type_variable_in_funref_rejected() {
        let err = parse_program(
            "(def f (forall) (fn (x u8) u8 (app (funref g b) x)))",
        )
        .unwrap_err();
        assert_eq!(err.code, Code::UnboundTypeVariable);
    }

    #[test]
    fn spans_recorded() {
        let src = "(def id (forall) (fn (x u32) u32 x))";
        let p = parse_program(src).unwrap();
        let f = p.lookup_fun("id").unwrap();
        assert_eq!(&src[f.span.start as usize..f.span.end as usize], src);
        assert_eq!(&src[f.body.span.start as usize..f.body.span.end as usize], "x");
    }

    #[test]
    fn comments_are_skipped() {
        let p = parse_program("; a comment\n(def id (forall) (fn (x u8) u8 x)) ; tail\n").unwrap();
        assert_eq!(p.defs.len(), 1);
    }

    #[test]
    fn tuple_sugar_maps_to_unboxed_record() {
        let t = parse_type("(tuple u8 u16)").unwrap();
        assert_eq!(
            t,
            CoreType::Record {
                fields: vec![
                    FieldDecl { name: "p1".into(), ty: CoreType::Prim(PrimType::U8), taken: false },
                    FieldDecl { name: "p2".into(), ty: CoreType::Prim(PrimType::U16), taken: false },
                ],
                mode: Mode::Unboxed,
            }
        );
        let e = parse_expr("(tuple 1 2)").unwrap();
        assert!(matches!(e.kind, ExprKind::Struct(ref fs) if fs.len() == 2));
    }

    #[test]
    fn bad_operator_arity_rejected() {
        let err = parse_expr("(op + 1)").unwrap_err();
        assert_eq!(err.code, Code::Parse);
    }

    #[test]
    fn oversized_integer_literal_rejected() {
        let err = parse_expr("99999999999999999999999").unwrap_err();
        assert_eq!(err.code, Code::Parse);
        assert!(err.message.contains("out of range"));
    }

    #[test]
    fn parser_never_panics_on_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let alphabet: Vec<char> =
            "(()))def fn forall u8 123 ;\n xyz !\ttaken rec variant %".chars().collect();
        for _ in 0..2000 {
            let n = rng.gen_range(0..80);
            let s: String =
                (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
            let _ = parse_program(&s); // must return, never panic
            let _ = parse_expr(&s);
            let _ = parse_type(&s);
        }
    }

    #[test]
    fn expected_set_in_message() {
        let err = parse_program("(def f (forall) (fn (x u8) u8 (zap x)))").unwrap_err();
        assert!(err.message.contains("unknown expression form"));
    }
}
