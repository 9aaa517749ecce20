//! cogc-core: the core of a linear, purely functional systems language.
//!
//! The library contains:
//!
//! - an s-expression front end for the desugared core language ([`parse`], [`pretty`]),
//! - the kind system with the read-only `!` view operator ([`kinding`]),
//! - a linear type checker that emits full derivation trees ([`typecheck`]),
//! - source-to-source passes: match desugaring, A-normalisation,
//!   monomorphisation ([`passes`]),
//! - two big-step interpreters: a purely functional value semantics
//!   ([`sem_value`]) and an imperative update semantics over a pointer
//!   store ([`sem_update`]),
//! - the correspondence relation between the two semantics, the framing
//!   discipline, and a dynamic refinement oracle that replays the
//!   metatheory on concrete runs ([`refine`]),
//! - a registry for abstract (foreign) types and functions with built-in
//!   allocators and a word-array library ([`ffi`]),
//! - a naive C emitter plus a differential test harness ([`codegen`]).

pub mod ast;
pub mod diagnostics;
pub mod parse;
pub mod pretty;
pub mod kinding;
pub mod ops;
pub mod typecheck;
pub mod sem_value;
pub mod sem_update;
pub mod ffi;
pub mod refine;
pub mod passes;
pub mod jsonval;
pub mod gen;
pub mod codegen;

pub use ast::{CoreType, Def, Expr, ExprKind, Kind, Mode, PolyType, PrimType, Program, Span};
pub use diagnostics::{Code, Diagnostic};
