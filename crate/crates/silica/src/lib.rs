//! A typestate calculus with linear assets, end to end: surface parser,
//! flow-sensitive type checker, small-step interpreter, and a runtime
//! soundness oracle that re-derives the type system's invariants on every
//! evaluation step.
//!
//! Contracts carry nominal states; reference types pair a contract with a
//! mode (a state set, a permission, or a permission variable). The checker
//! threads an input context to an output context through every expression,
//! so ownership transfers and typestate transitions are visible in the
//! types. The interpreter is a one-redex-at-a-time abstract machine whose
//! stuck states (reentrancy, locked transitions, nested state checks) are
//! first-class outcomes. The `meta` module couples the two: it maintains a
//! shadow typing context across a run and checks global consistency,
//! residual typability, context strength, unicity of ownership, and asset
//! retention after each step.

pub mod ast;
pub mod diag;
pub mod interp;
pub mod judgments;
pub mod lexer;
pub mod meta;
pub mod parser;
pub mod render;
pub mod table;
pub mod typecheck;

pub use ast::{
    Binding, CheckAnnot, ContractDecl, ContractRef, Expr, ExprKind, FieldDecl, GenericContext,
    GenericParam, HeapObj, InterfaceDecl, LocId, Mode, ObjId, Permission, Program, RuntimeConfig,
    StateDecl, Transaction, TransactionSig, TransitionAnnot, Type, TypingContext, Value,
};
pub use diag::{codes, Diagnostic, Severity, SourceSpan};
pub use interp::{evaluate, EvalOutcome, EvalReport, Machine, StepOutcome, StuckKind};
pub use judgments::{Classification, JErr, Judgments, SplitDemand};
pub use meta::{
    audit_ownership, check_global_consistency, compatible, l_stronger, ref_types, AliasReport,
    OwnershipLedger, ShadowContext, Verdict, VerifiedReport, Verifier,
};
pub use parser::{parse_expression, parse_program};
pub use table::{ProgramTable, Subst};
pub use typecheck::{check_declarations, check_expr, CheckResult, CheckedProgram, Checker};
