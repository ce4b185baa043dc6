//! Diagnostics: source spans, severities, and the stable error-code
//! taxonomy (see docs/diagnostics.md for the registry).

use std::fmt;

/// 1-based source span. Synthetic spans (for machine-generated expressions)
/// render as 0:0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> SourceSpan {
        debug_assert!((start_line, start_col) <= (end_line, end_col));
        SourceSpan { start_line, start_col, end_line, end_col }
    }

    pub fn point(line: u32, col: u32) -> SourceSpan {
        SourceSpan::new(line, col, line, col)
    }

    pub fn synthetic() -> SourceSpan {
        SourceSpan { start_line: 0, start_col: 0, end_line: 0, end_col: 0 }
    }

    pub fn is_synthetic(&self) -> bool {
        self.start_line == 0
    }

    pub fn merge(self, other: SourceSpan) -> SourceSpan {
        if self.is_synthetic() {
            return other;
        }
        if other.is_synthetic() {
            return self;
        }
        SourceSpan {
            start_line: self.start_line.min(other.start_line),
            start_col: if self.start_line <= other.start_line { self.start_col } else { other.start_col },
            end_line: self.end_line.max(other.end_line),
            end_col: if self.end_line >= other.end_line { self.end_col } else { other.end_col },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A diagnostic with a stable code, the judgment rule whose antecedent
/// failed, and a human-readable message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub span: SourceSpan,
    pub rule: &'static str,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: &'static str, span: SourceSpan, rule: &'static str, message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Error, code, span, rule, message: message.into() }
    }

    /// The machine-readable line format:
    /// `ERR <CODE> <file>:<line>:<col> rule=<RuleName> <message>`
    pub fn machine_line(&self, file: &str) -> String {
        let tag = match self.severity {
            Severity::Error => "ERR",
            Severity::Warning => "WARN",
        };
        format!(
            "{} {} {}:{}:{} rule={} {}",
            tag, self.code, file, self.span.start_line, self.span.start_col, self.rule, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: [{}] rule={}: {}",
            self.span.start_line, self.span.start_col, self.code, self.rule, self.message
        )
    }
}

pub mod codes {
    //! Stable diagnostic codes. One code per failed antecedent class.

    pub const SYN001: &str = "SYN001"; // unexpected token
    pub const SYN002: &str = "SYN002"; // non-simple expression in argument position
    pub const SYN003: &str = "SYN003"; // duplicate declaration name

    pub const GEN001: &str = "GEN001"; // unknown permission/declaration variable
    pub const GEN002: &str = "GEN002"; // unknown state name
    pub const GEN003: &str = "GEN003"; // type-argument arity mismatch
    pub const GEN004: &str = "GEN004"; // substitution bound violation
    pub const GEN005: &str = "GEN005"; // unbound variable or reference
    pub const GEN006: &str = "GEN006"; // unknown or out-of-scope field
    pub const GEN007: &str = "GEN007"; // field operation on non-receiver
    pub const GEN008: &str = "GEN008"; // value-argument arity mismatch
    pub const GEN009: &str = "GEN009"; // private invocation on non-receiver
    pub const GEN011: &str = "GEN011"; // unknown declaration name

    pub const TYPE001: &str = "TYPE001"; // type incompatible with expected type
    pub const ARG002: &str = "ARG002"; // duplicate reference in invocation

    pub const SPL001: &str = "SPL001"; // split demand unsatisfiable
    pub const TXN001: &str = "TXN001"; // no such transaction

    pub const ASSET001: &str = "ASSET001"; // owned asset dropped
    pub const ASSET002: &str = "ASSET002"; // overwrite of non-disposable field
    pub const STATE001: &str = "STATE001"; // receiver mode below transaction precondition
    pub const STATE002: &str = "STATE002"; // transition fields not disposable
    pub const STATE003: &str = "STATE003"; // transition receiver unsuitable
    pub const POST001: &str = "POST001"; // post-specification mismatch at transaction end
    pub const PRIV001: &str = "PRIV001"; // field below private transaction precondition
    pub const PACK001: &str = "PACK001"; // field override inconsistent at pack point
    pub const PUB001: &str = "PUB001"; // public invocation with overrides outstanding
    pub const ASSERT001: &str = "ASSERT001"; // static assertion false
    pub const DSC001: &str = "DSC001"; // shared state-check body must retain ownership
    pub const DSN001: &str = "DSN001"; // disown of non-owned reference
    pub const MRG001: &str = "MRG001"; // binding present in one branch only
    pub const MRG002: &str = "MRG002"; // branch types cannot be joined

    pub const WF001: &str = "WF001"; // interface member missing in implementor
    pub const WF002: &str = "WF002"; // asset state implements non-asset interface state
    pub const WF003: &str = "WF003"; // contract with zero states
    pub const WF004: &str = "WF004"; // duplicate or inconsistently-typed field
    pub const WF005: &str = "WF005"; // asset-typed field in non-asset state
    pub const WF006: &str = "WF006"; // transaction signature incompatible with interface

    pub const INT001: &str = "INT001"; // malformed machine state (interpreter bug)
    pub const FUEL001: &str = "FUEL001"; // step budget exhausted
    pub const VER001: &str = "VER001"; // global consistency violated after step
    pub const VER002: &str = "VER002"; // residual expression failed re-typecheck
    pub const AUD001: &str = "AUD001"; // unicity of ownership violated
    pub const AUD002: &str = "AUD002"; // asset retention violated
    pub const IO001: &str = "IO001"; // unreadable file
    pub const MAN001: &str = "MAN001"; // malformed corpus manifest
}
