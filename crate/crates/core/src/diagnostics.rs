//! Span-carrying diagnostics shared by the front end and the type checker.
//!
//! Human-readable rendering follows the `file:line:col: error[CODE]: message`
//! convention.

use crate::ast::Span;
use std::fmt;

/// Stable machine-readable error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Code {
    Parse,
    DuplicateDefinition,
    UnboundTypeVariable,
    TypeMismatch,
    ShareViolation,
    DiscardViolation,
    EscapeViolation,
    TakenFieldRead,
    ReadOnlyWrite,
    NonTotalEsac,
    UnknownConstructor,
    UnknownField,
    UnknownVariable,
    UnknownFunction,
    LiteralOutOfRange,
    ArityError,
    RecursionDetected,
    KindBoundViolation,
    UnboundTypeVar,
    DesugarError,
    DuplicateArm,
    EmptyMatch,
    MonoError,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Parse => "parse",
            Code::DuplicateDefinition => "dup-def",
            Code::UnboundTypeVariable => "unbound-tyvar",
            Code::TypeMismatch => "type-mismatch",
            Code::ShareViolation => "share",
            Code::DiscardViolation => "discard",
            Code::EscapeViolation => "escape",
            Code::TakenFieldRead => "taken-field",
            Code::ReadOnlyWrite => "readonly-write",
            Code::NonTotalEsac => "nontotal-esac",
            Code::UnknownConstructor => "unknown-ctor",
            Code::UnknownField => "unknown-field",
            Code::UnknownVariable => "unknown-var",
            Code::UnknownFunction => "unknown-fun",
            Code::LiteralOutOfRange => "lit-range",
            Code::ArityError => "arity",
            Code::RecursionDetected => "recursion",
            Code::KindBoundViolation => "kind-bound",
            Code::UnboundTypeVar => "unbound-tyvar-ctx",
            Code::DesugarError => "desugar",
            Code::DuplicateArm => "dup-arm",
            Code::EmptyMatch => "empty-match",
            Code::MonoError => "mono",
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One error with a span into the source it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: Code,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: Code, span: Span, message: impl Into<String>) -> Diagnostic {
        Diagnostic { code, span, message: message.into() }
    }

    /// Attach a span if none was recorded yet.
    pub fn at(mut self, span: Span) -> Diagnostic {
        if self.span == Span::DUMMY {
            self.span = span;
        }
        self
    }

    /// Render as `file:line:col: error[CODE]: message`, resolving the span
    /// against the source text.
    pub fn render(&self, file: &str, source: &str) -> String {
        let (line, col) = line_col(source, self.span.start);
        format!(
            "{}:{}:{}: error[{}]: {}",
            file, line, col, self.code, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

/// 1-based line and column of a byte offset.
pub fn line_col(source: &str, offset: u32) -> (u32, u32) {
    let offset = (offset as usize).min(source.len());
    let mut line = 1u32;
    let mut col = 1u32;
    for (i, c) in source.char_indices() {
        if i >= offset {
            break;
        }
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}
