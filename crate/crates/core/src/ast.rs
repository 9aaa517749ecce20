//! Abstract syntax for the desugared core language: types, kinds,
//! expressions, definitions and whole programs.
//!
//! All values here are immutable after construction and freely shareable
//! across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

/// Byte-offset range into the source text. Attached to every node so that
/// all downstream errors can point back at concrete syntax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub const DUMMY: Span = Span { start: 0, end: 0 };

    pub fn new(start: u32, end: u32) -> Span {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

/// Unsigned machine words plus booleans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimType {
    U8,
    U16,
    U32,
    U64,
    Bool,
}

impl PrimType {
    /// Number of values of the type: 2^8, 2^16, 2^32, 2^64, and 2 for Bool.
    /// A literal `l` is admissible at type `t` iff `l < t.max_value()`.
    pub fn max_value(self) -> u128 {
        match self {
            PrimType::U8 => 1 << 8,
            PrimType::U16 => 1 << 16,
            PrimType::U32 => 1 << 32,
            PrimType::U64 => 1 << 64,
            PrimType::Bool => 2,
        }
    }

    /// Bit width of the numeric types; Bool has none.
    pub fn bits(self) -> Option<u32> {
        match self {
            PrimType::U8 => Some(8),
            PrimType::U16 => Some(16),
            PrimType::U32 => Some(32),
            PrimType::U64 => Some(64),
            PrimType::Bool => None,
        }
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, PrimType::Bool)
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimType::U8 => "u8",
            PrimType::U16 => "u16",
            PrimType::U32 => "u32",
            PrimType::U64 => "u64",
            PrimType::Bool => "bool",
        }
    }

    pub fn from_name(s: &str) -> Option<PrimType> {
        Some(match s {
            "u8" => PrimType::U8,
            "u16" => PrimType::U16,
            "u32" => PrimType::U32,
            "u64" => PrimType::U64,
            "bool" => PrimType::Bool,
            _ => return None,
        })
    }

    /// Smallest numeric prim type whose range admits `v`.
    pub fn smallest_for(v: u64) -> PrimType {
        if v < (1 << 8) {
            PrimType::U8
        } else if v < (1 << 16) {
            PrimType::U16
        } else if v < (1 << 32) {
            PrimType::U32
        } else {
            PrimType::U64
        }
    }
}

impl fmt::Display for PrimType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Storage mode for records and abstract types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    ReadOnly,
    Writable,
    Unboxed,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::ReadOnly => "ro",
            Mode::Writable => "wr",
            Mode::Unboxed => "ub",
        }
    }

    pub fn from_name(s: &str) -> Option<Mode> {
        Some(match s {
            "ro" => Mode::ReadOnly,
            "wr" => Mode::Writable,
            "ub" => Mode::Unboxed,
            _ => return None,
        })
    }

    pub fn is_boxed(self) -> bool {
        !matches!(self, Mode::Unboxed)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A kind is a subset of the three permissions: Discard, Share, Escape.
/// Packed into the low three bits of a byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Kind(u8);

impl Kind {
    pub const NONE: Kind = Kind(0);
    pub const D: Kind = Kind(1);
    pub const S: Kind = Kind(2);
    pub const E: Kind = Kind(4);
    pub const DS: Kind = Kind(1 | 2);
    pub const ALL: Kind = Kind(1 | 2 | 4);

    pub fn union(self, other: Kind) -> Kind {
        Kind(self.0 | other.0)
    }

    pub fn intersect(self, other: Kind) -> Kind {
        Kind(self.0 & other.0)
    }

    pub fn is_subset(self, other: Kind) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn can_discard(self) -> bool {
        self.0 & Kind::D.0 != 0
    }

    pub fn can_share(self) -> bool {
        self.0 & Kind::S.0 != 0
    }

    pub fn can_escape(self) -> bool {
        self.0 & Kind::E.0 != 0
    }

    /// All eight kinds, in mask order. Handy for exhaustive checks.
    pub fn all_kinds() -> impl Iterator<Item = Kind> {
        (0u8..8).map(Kind)
    }

    /// Permission letters in sorted "DSE" order; stable for golden files.
    pub fn letters(self) -> String {
        let mut s = String::new();
        if self.can_discard() {
            s.push('D');
        }
        if self.can_share() {
            s.push('S');
        }
        if self.can_escape() {
            s.push('E');
        }
        s
    }

    pub fn from_letters(s: &str) -> Option<Kind> {
        let mut k = Kind::NONE;
        for c in s.chars() {
            k = k.union(match c {
                'D' => Kind::D,
                'S' => Kind::S,
                'E' => Kind::E,
                _ => return None,
            });
        }
        Some(k)
    }
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kind({{{}}})", self.letters())
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.letters())
    }
}

/// One record field in a record type: name, payload type, and whether the
/// field is currently taken (logically absent).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldDecl {
    pub name: String,
    pub ty: CoreType,
    pub taken: bool,
}

/// The full type grammar.
///
/// Structural equality is positional for records (names, payload types,
/// taken flags and mode all significant) but treats variant alternatives
/// as a set keyed by constructor name; see the manual `PartialEq` below.
#[derive(Debug, Clone, Eq)]
pub enum CoreType {
    /// Type variable.
    Var(String),
    /// Read-only view of a type variable (`a!`); instantiating `a := t`
    /// replaces it with the banged form of `t`.
    VarBang(String),
    Unit,
    Prim(PrimType),
    Fun(Box<CoreType>, Box<CoreType>),
    Variant(Vec<(String, CoreType)>),
    Record { fields: Vec<FieldDecl>, mode: Mode },
    Abstract { name: String, args: Vec<CoreType>, mode: Mode },
}

impl CoreType {
    pub fn fun(arg: CoreType, res: CoreType) -> CoreType {
        CoreType::Fun(Box::new(arg), Box::new(res))
    }

    pub fn prim(p: PrimType) -> CoreType {
        CoreType::Prim(p)
    }

    pub fn is_fun(&self) -> bool {
        matches!(self, CoreType::Fun(..))
    }

    /// Free type variables (both plain and observed), in sorted order.
    pub fn free_type_vars(&self) -> BTreeSet<String> {
        let mut acc = BTreeSet::new();
        self.collect_ftv(&mut acc);
        acc
    }

    fn collect_ftv(&self, acc: &mut BTreeSet<String>) {
        match self {
            CoreType::Var(a) | CoreType::VarBang(a) => {
                acc.insert(a.clone());
            }
            CoreType::Unit | CoreType::Prim(_) => {}
            CoreType::Fun(a, b) => {
                a.collect_ftv(acc);
                b.collect_ftv(acc);
            }
            CoreType::Variant(alts) => {
                for (_, t) in alts {
                    t.collect_ftv(acc);
                }
            }
            CoreType::Record { fields, .. } => {
                for f in fields {
                    f.ty.collect_ftv(acc);
                }
            }
            CoreType::Abstract { args, .. } => {
                for t in args {
                    t.collect_ftv(acc);
                }
            }
        }
    }

    /// True when the type contains no type variables.
    pub fn is_ground(&self) -> bool {
        self.free_type_vars().is_empty()
    }

    /// Variant alternatives sorted by constructor name. Used wherever a
    /// canonical ordering is needed (equality, hashing, code generation).
    pub fn sorted_alts(alts: &[(String, CoreType)]) -> Vec<&(String, CoreType)> {
        let mut v: Vec<&(String, CoreType)> = alts.iter().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

/// Structural type equality. Variant alternatives compare as sets keyed by
/// constructor name; record fields compare positionally including taken
/// flags and mode.
pub fn type_equal(a: &CoreType, b: &CoreType) -> bool {
    a == b
}

impl PartialEq for CoreType {
    fn eq(&self, other: &Self) -> bool {
        use CoreType::*;
        match (self, other) {
            (Var(a), Var(b)) => a == b,
            (VarBang(a), VarBang(b)) => a == b,
            (Unit, Unit) => true,
            (Prim(a), Prim(b)) => a == b,
            (Fun(a1, r1), Fun(a2, r2)) => a1 == a2 && r1 == r2,
            (Variant(xs), Variant(ys)) => {
                if xs.len() != ys.len() {
                    return false;
                }
                let xs = CoreType::sorted_alts(xs);
                let ys = CoreType::sorted_alts(ys);
                xs.iter().zip(ys.iter()).all(|(x, y)| x.0 == y.0 && x.1 == y.1)
            }
            (
                Record { fields: fa, mode: ma },
                Record { fields: fb, mode: mb },
            ) => ma == mb && fa == fb,
            (
                Abstract { name: na, args: aa, mode: ma },
                Abstract { name: nb, args: ab, mode: mb },
            ) => na == nb && ma == mb && aa == ab,
            _ => false,
        }
    }
}

impl Hash for CoreType {
    fn hash<H: Hasher>(&self, state: &mut H) {
        use CoreType::*;
        match self {
            Var(a) => {
                state.write_u8(0);
                a.hash(state);
            }
            VarBang(a) => {
                state.write_u8(1);
                a.hash(state);
            }
            Unit => state.write_u8(2),
            Prim(p) => {
                state.write_u8(3);
                p.hash(state);
            }
            Fun(a, r) => {
                state.write_u8(4);
                a.hash(state);
                r.hash(state);
            }
            Variant(alts) => {
                state.write_u8(5);
                // hashed in canonical order so Eq-equal permutations collide
                for alt in CoreType::sorted_alts(alts) {
                    alt.hash(state);
                }
            }
            Record { fields, mode } => {
                state.write_u8(6);
                fields.hash(state);
                mode.hash(state);
            }
            Abstract { name, args, mode } => {
                state.write_u8(7);
                name.hash(state);
                args.hash(state);
                mode.hash(state);
            }
        }
    }
}

/// Rank-1 polymorphic function signature: kinded binders over a function
/// type. No `PolyType` ever nests inside a `CoreType`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolyType {
    pub binders: Vec<(String, Kind)>,
    pub body: CoreType,
}

impl PolyType {
    pub fn monomorphic(body: CoreType) -> PolyType {
        PolyType { binders: Vec::new(), body }
    }

    pub fn is_monomorphic(&self) -> bool {
        self.binders.is_empty()
    }

    /// Argument and result types of the underlying function type.
    pub fn arg_result(&self) -> (&CoreType, &CoreType) {
        match &self.body {
            CoreType::Fun(a, r) => (a, r),
            _ => panic!("polytype body is not a function type"),
        }
    }
}

/// Primitive operators. All are strict: every operand is evaluated before
/// the operator applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    Complement,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
}

impl PrimOp {
    pub fn name(self) -> &'static str {
        use PrimOp::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "%",
            BitAnd => "&",
            BitOr => "|",
            BitXor => "^",
            Shl => "<<",
            Shr => ">>",
            Complement => "complement",
            Eq => "==",
            Ne => "/=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            And => "&&",
            Or => "||",
            Not => "not",
        }
    }

    pub fn from_name(s: &str) -> Option<PrimOp> {
        use PrimOp::*;
        Some(match s {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "%" => Mod,
            "&" => BitAnd,
            "|" => BitOr,
            "^" => BitXor,
            "<<" => Shl,
            ">>" => Shr,
            "complement" => Complement,
            "==" => Eq,
            "/=" => Ne,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "&&" => And,
            "||" => Or,
            "not" => Not,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            PrimOp::Complement | PrimOp::Not => 1,
            _ => 2,
        }
    }
}

/// A literal value: unsigned word or boolean, tagged with its prim type.
/// Booleans store 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub value: u64,
    pub ty: PrimType,
}

impl Literal {
    pub fn uint(value: u64, ty: PrimType) -> Literal {
        Literal { value, ty }
    }

    pub fn bool(b: bool) -> Literal {
        Literal { value: b as u64, ty: PrimType::Bool }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self.ty {
            PrimType::Bool => Some(self.value != 0),
            _ => None,
        }
    }

    pub fn in_range(self) -> bool {
        (self.value as u128) < self.ty.max_value()
    }
}

/// Desugared core expressions (plus the `match` sugar form, which the
/// desugaring pass removes before type checking).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprKind {
    Var(String),
    Unit,
    /// Reference to a top-level function, with explicit type arguments.
    FunRef(String, Vec<CoreType>),
    PrimOp(PrimOp, Vec<Expr>),
    App(Box<Expr>, Box<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
    /// `letbang (ys) x e1 e2`: the listed variables are observed read-only
    /// while e1 runs; its result is bound to x in e2.
    LetBang(Vec<String>, String, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Lit(Literal),
    Cast(PrimType, Box<Expr>),
    /// Widen a variant value to a larger set of alternatives.
    Promote(Vec<(String, CoreType)>, Box<Expr>),
    Con(String, Box<Expr>),
    Case {
        scrutinee: Box<Expr>,
        ctor: String,
        bound: String,
        matched: Box<Expr>,
        else_bound: String,
        else_body: Box<Expr>,
    },
    Esac(Box<Expr>),
    Struct(Vec<(String, Expr)>),
    Member(Box<Expr>, String),
    Put(Box<Expr>, String, Box<Expr>),
    Take {
        rec_bound: String,
        field: String,
        field_bound: String,
        record: Box<Expr>,
        body: Box<Expr>,
    },
    /// Multi-way pattern match; surface sugar eliminated by the desugaring
    /// pass. Arms are (constructor, binder, body).
    Match(Box<Expr>, Vec<(String, String, Expr)>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, span }
    }

    /// Free term variables, respecting all binders. The observed variables
    /// of a `letbang` count as free occurrences of the whole expression.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut acc = BTreeSet::new();
        self.collect_fv(&mut acc);
        acc
    }

    fn collect_fv(&self, acc: &mut BTreeSet<String>) {
        use ExprKind::*;
        match &self.kind {
            Var(x) => {
                acc.insert(x.clone());
            }
            Unit | FunRef(..) | Lit(_) => {}
            PrimOp(_, args) => {
                for a in args {
                    a.collect_fv(acc);
                }
            }
            App(f, a) => {
                f.collect_fv(acc);
                a.collect_fv(acc);
            }
            Let(x, e1, e2) => {
                e1.collect_fv(acc);
                let mut inner = BTreeSet::new();
                e2.collect_fv(&mut inner);
                inner.remove(x);
                acc.extend(inner);
            }
            LetBang(ys, x, e1, e2) => {
                acc.extend(ys.iter().cloned());
                e1.collect_fv(acc);
                let mut inner = BTreeSet::new();
                e2.collect_fv(&mut inner);
                inner.remove(x);
                acc.extend(inner);
            }
            If(c, t, e) => {
                c.collect_fv(acc);
                t.collect_fv(acc);
                e.collect_fv(acc);
            }
            Cast(_, e) | Promote(_, e) | Con(_, e) | Esac(e) | Member(e, _) => {
                e.collect_fv(acc);
            }
            Case { scrutinee, bound, matched, else_bound, else_body, .. } => {
                scrutinee.collect_fv(acc);
                let mut m = BTreeSet::new();
                matched.collect_fv(&mut m);
                m.remove(bound);
                acc.extend(m);
                let mut e = BTreeSet::new();
                else_body.collect_fv(&mut e);
                e.remove(else_bound);
                acc.extend(e);
            }
            Struct(fields) => {
                for (_, e) in fields {
                    e.collect_fv(acc);
                }
            }
            Put(e1, _, e2) => {
                e1.collect_fv(acc);
                e2.collect_fv(acc);
            }
            Take { rec_bound, field_bound, record, body, .. } => {
                record.collect_fv(acc);
                let mut inner = BTreeSet::new();
                body.collect_fv(&mut inner);
                inner.remove(rec_bound);
                inner.remove(field_bound);
                acc.extend(inner);
            }
            Match(scrutinee, arms) => {
                scrutinee.collect_fv(acc);
                for (_, x, body) in arms {
                    let mut inner = BTreeSet::new();
                    body.collect_fv(&mut inner);
                    inner.remove(x);
                    acc.extend(inner);
                }
            }
        }
    }
}

/// Free variables of an expression; forwards to [`Expr::free_vars`].
pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    e.free_vars()
}

/// A concrete top-level function definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunDef {
    pub name: String,
    pub signature: PolyType,
    pub param: String,
    pub body: Expr,
    pub span: Span,
}

/// A declaration of an abstract (foreign-implemented) function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsFunDecl {
    pub name: String,
    pub signature: PolyType,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Def {
    Fun(FunDef),
    Abstract(AbsFunDecl),
}

impl Def {
    pub fn name(&self) -> &str {
        match self {
            Def::Fun(f) => &f.name,
            Def::Abstract(a) => &a.name,
        }
    }

    pub fn signature(&self) -> &PolyType {
        match self {
            Def::Fun(f) => &f.signature,
            Def::Abstract(a) => &a.signature,
        }
    }

    pub fn span(&self) -> Span {
        match self {
            Def::Fun(f) => f.span,
            Def::Abstract(a) => a.span,
        }
    }
}

/// An ordered list of definitions with a by-name lookup map. Names are
/// globally unique (enforced by the parser).
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub defs: Vec<Def>,
    index: BTreeMap<String, usize>,
}

impl Program {
    pub fn new(defs: Vec<Def>) -> Program {
        let mut index = BTreeMap::new();
        for (i, d) in defs.iter().enumerate() {
            index.insert(d.name().to_string(), i);
        }
        Program { defs, index }
    }

    pub fn lookup(&self, name: &str) -> Option<&Def> {
        self.index.get(name).map(|&i| &self.defs[i])
    }

    pub fn lookup_fun(&self, name: &str) -> Option<&FunDef> {
        match self.lookup(name) {
            Some(Def::Fun(f)) => Some(f),
            _ => None,
        }
    }

    pub fn fun_defs(&self) -> impl Iterator<Item = &FunDef> {
        self.defs.iter().filter_map(|d| match d {
            Def::Fun(f) => Some(f),
            _ => None,
        })
    }

    pub fn abs_decls(&self) -> impl Iterator<Item = &AbsFunDecl> {
        self.defs.iter().filter_map(|d| match d {
            Def::Abstract(a) => Some(a),
            _ => None,
        })
    }
}
