//! Executable soundness oracle: alias accounting, global consistency,
//! context strength, per-step preservation checking, and the ownership
//! audit (unicity and asset retention).
//!
//! The verifier maintains a shadow typing context alongside the machine
//! state. After every step it rebuilds the context by the constructive
//! witness for the rule that fired, re-checks global consistency, re-types
//! the residual expression, and compares context strength.
//!
//! Two documented relaxations of the textbook definitions:
//! - state-locked objects exempt their lock-scoped temporary owner from the
//!   strength comparison (the l-stronger analogue of StateLockCompatible);
//! - a declaration-variable assignment map accompanies the permission
//!   environment so heap types allocated inside generic bodies (which carry
//!   symbolic arguments) can be resolved for consistency checking.

use indexmap::IndexMap;

use crate::ast::*;
use crate::diag::codes;
use crate::interp::{
    EvalOutcome, FaultInjection, Machine, StepDetail, StepOutcome, TraceEntry,
};
use crate::judgments::{Judgments, SplitDemand};
use crate::table::{ProgramTable, Subst};
use crate::typecheck::{CheckedProgram, Checker};

/// Where an alias type was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    HeapField,
    IndirectRef,
    ContextBinding,
}

/// All alias types of one object, with provenance.
#[derive(Debug, Clone)]
pub struct AliasReport {
    pub obj: ObjId,
    pub aliases: Vec<(Type, Provenance)>,
}

/// The verifier's typing context over machine references, plus the generic
/// parameters in scope and the declaration-variable assignments accumulated
/// at invocations.
#[derive(Debug, Clone, Default)]
pub struct ShadowContext {
    pub ctx: TypingContext,
    pub gamma: GenericContext,
    pub decl_assignments: IndexMap<String, ContractRef>,
}

impl ShadowContext {
    pub fn new() -> ShadowContext {
        ShadowContext::default()
    }

    /// Resolves declaration-variable heads and permission-variable modes to
    /// the concrete forms tracked at runtime.
    pub fn resolve_type(&self, config: &RuntimeConfig, t: &Type) -> Type {
        match t {
            Type::Unit => Type::Unit,
            Type::Ref { contract, mode } => {
                let contract = match contract {
                    ContractRef::Var(x) => match self.decl_assignments.get(x) {
                        Some(c) => c.clone(),
                        None => contract.clone(),
                    },
                    ContractRef::Concrete { name, args } => ContractRef::Concrete {
                        name: name.clone(),
                        args: args.iter().map(|a| self.resolve_type(config, a)).collect(),
                    },
                };
                let mode = match mode {
                    Mode::PermVar(p) => config.perm(p).cloned().unwrap_or_else(|| mode.clone()),
                    _ => mode.clone(),
                };
                Type::Ref { contract, mode }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Alias compatibility
// ---------------------------------------------------------------------------

fn mode_pair_compatible(m1: &Mode, m2: &Mode) -> bool {
    use Mode::*;
    use Permission::*;
    match (m1, m2) {
        (Perm(Unowned), _) | (_, Perm(Unowned)) => {
            !matches!(m1, PermVar(_)) && !matches!(m2, PermVar(_))
        }
        (Perm(Shared), Perm(Shared)) => true,
        _ => false,
    }
}

fn heads_relatable(table: &ProgramTable, c1: &ContractRef, c2: &ContractRef) -> bool {
    if c1.name() == c2.name() {
        return true; // parameter differences are compatible
    }
    let hop = |a: &ContractRef, b: &ContractRef| -> bool {
        if let ContractRef::Concrete { name, args } = a {
            if let Some(i) = table.implemented_interface(name, args) {
                return i.name() == b.name();
            }
        }
        false
    };
    hop(c1, c2) || hop(c2, c1)
}

/// Closure of the alias-compatibility rules; `state_locked` enables the
/// escape that lets the original shared alias coexist with the temporary
/// state-bearing reference.
pub fn compatible(table: &ProgramTable, t1: &Type, t2: &Type, state_locked: bool) -> bool {
    let (Type::Ref { contract: c1, mode: m1 }, Type::Ref { contract: c2, mode: m2 }) = (t1, t2)
    else {
        return false;
    };
    if !heads_relatable(table, c1, c2) {
        return false;
    }
    if mode_pair_compatible(m1, m2) {
        return true;
    }
    if state_locked {
        let owned = |m: &Mode| matches!(m, Mode::States(_) | Mode::Perm(Permission::Owned));
        let shared = |m: &Mode| m == &Mode::Perm(Permission::Shared);
        if (owned(m1) && shared(m2)) || (owned(m2) && shared(m1)) {
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// refTypes
// ---------------------------------------------------------------------------

/// Computes the multiset of alias types of `o`: field-held types (with
/// overrides preferred), environment-held types, and direct context types.
pub fn ref_types(
    table: &ProgramTable,
    config: &RuntimeConfig,
    shadow: &ShadowContext,
    o: ObjId,
) -> AliasReport {
    let judge = Judgments::new(table);
    let mut aliases: Vec<(Type, Provenance)> = Vec::new();

    // Fields of heap objects.
    for (holder, h) in &config.heap {
        let head = ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() };
        let declared = judge
            .state_fields(&shadow.gamma, &head, &h.state)
            .unwrap_or_default();
        for (i, v) in h.fields.iter().enumerate() {
            if *v != Value::Obj(o) {
                continue;
            }
            let Some(f) = declared.get(i) else { continue };
            let ty = shadow
                .ctx
                .get_override(&Binding::Obj(*holder), &f.name)
                .cloned()
                .unwrap_or_else(|| f.ty.clone());
            aliases.push((ty, Provenance::HeapField));
        }
    }

    // Indirect references with context bindings.
    for (k, t) in shadow.ctx.iter() {
        match k {
            CtxKey::Bind(Binding::Loc(l)) => {
                if config.env.get(l) == Some(&Value::Obj(o)) {
                    aliases.push((t.clone(), Provenance::IndirectRef));
                }
            }
            CtxKey::Bind(Binding::Obj(b)) if *b == o => {
                aliases.push((t.clone(), Provenance::ContextBinding));
            }
            _ => {}
        }
    }

    AliasReport { obj: o, aliases }
}

// ---------------------------------------------------------------------------
// Global consistency
// ---------------------------------------------------------------------------

/// Checks every clause of global consistency; returns the first violation.
pub fn check_global_consistency(
    table: &ProgramTable,
    config: &RuntimeConfig,
    shadow: &ShadowContext,
) -> Result<(), String> {
    let judge = Judgments::new(table);

    // Environment values live in the heap.
    for (l, v) in &config.env {
        if let Value::Obj(o) = v {
            if !config.heap.contains_key(o) {
                return Err(format!("environment binds `{l}` to dangling object `{o}`"));
            }
        }
    }

    // Context domain agrees with the machine.
    for (k, t) in shadow.ctx.iter() {
        match k {
            CtxKey::Bind(Binding::Var(x)) => {
                return Err(format!("machine context binds source variable `{x}`"));
            }
            CtxKey::Bind(Binding::Loc(l)) => {
                let Some(v) = config.env.get(l) else {
                    return Err(format!("context binds `{l}` outside the environment"));
                };
                match (v, t) {
                    (Value::Unit, Type::Unit) => {}
                    (Value::Obj(_), Type::Ref { .. }) => {}
                    _ => {
                        return Err(format!(
                            "`{l}` has type `{t}` but references `{v}`"
                        ))
                    }
                }
            }
            CtxKey::Bind(Binding::Obj(o)) => {
                if !config.heap.contains_key(o) {
                    return Err(format!("context binds dangling object `{o}`"));
                }
            }
            CtxKey::FieldOverride(b, f) => {
                let ok = match b {
                    Binding::Obj(o) => config.heap.contains_key(o),
                    _ => false,
                };
                if !ok {
                    return Err(format!(
                        "field override `{b}.{f}` has an unresolvable receiver"
                    ));
                }
            }
        }
        // Reference types resolve to concrete heads.
        if let Type::Ref { .. } = t {
            let rt = shadow.resolve_type(config, t);
            if let Some(c) = rt.contract() {
                if c.is_var() {
                    return Err(format!(
                        "context type `{t}` does not resolve to a concrete head"
                    ));
                }
            }
        }
    }

    // Every permission variable in scope is bound to a concrete mode.
    for p in shadow.gamma.iter() {
        if config.perm(&p.perm_var).is_none() {
            return Err(format!(
                "permission variable `{}` has no binding in the permission environment",
                p.perm_var
            ));
        }
    }

    // Reference consistency per heap object.
    for (o, h) in &config.heap {
        let head = ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() };
        let declared = judge
            .state_fields(&shadow.gamma, &head, &h.state)
            .map_err(|e| format!("object `{o}`: {}", e.message))?;
        if declared.len() != h.fields.len() {
            return Err(format!(
                "object `{o}` in state `{}` has {} field value(s), declaration requires {}",
                h.state,
                h.fields.len(),
                declared.len()
            ));
        }
        let report = ref_types(table, config, shadow, *o);
        let heap_head = head.clone();
        let resolved: Vec<Type> = report
            .aliases
            .iter()
            .map(|(t, _)| shadow.resolve_type(config, t))
            .collect();
        for t in &resolved {
            let Type::Ref { contract: ac, mode: am } = t else {
                return Err(format!("object `{o}` has a non-reference alias type"));
            };
            if !heads_relatable(table, &heap_head, ac) {
                return Err(format!(
                    "object `{o}` of `{}` has alias of unrelated head `{t}`",
                    h.contract
                ));
            }
            let sub = judge
                .subpermission(&shadow.gamma, &Mode::single_state(h.state.clone()), am)
                .unwrap_or(false);
            if !sub {
                return Err(format!(
                    "object `{o}` in state `{}` has alias mode `{am}` not above the heap state",
                    h.state
                ));
            }
        }
        let locked = config.state_locks.contains(o);
        for i in 0..resolved.len() {
            for j in (i + 1)..resolved.len() {
                if !compatible(table, &resolved[i], &resolved[j], locked) {
                    return Err(format!(
                        "object `{o}` has incompatible aliases `{}` and `{}`",
                        resolved[i], resolved[j]
                    ));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// l-stronger
// ---------------------------------------------------------------------------

/// Context-strength comparison: every indirect-reference binding of `prior`
/// is covered by some binding of `newer` referencing the same value, up to
/// subtyping and ownership equality. Lock-scoped temporary owners are
/// exempted while their object is (or was) state-locked.
pub fn l_stronger(
    table: &ProgramTable,
    gamma: &GenericContext,
    newer: &TypingContext,
    prior: &TypingContext,
    config_after: &RuntimeConfig,
    locked_now_or_before: &std::collections::BTreeSet<ObjId>,
) -> Result<(), String> {
    let judge = Judgments::new(table);
    'outer: for (k, want) in prior.iter() {
        let CtxKey::Bind(Binding::Loc(lp)) = k else { continue };
        let Some(target) = config_after.env.get(lp) else { continue };
        for (k2, have) in newer.iter() {
            let CtxKey::Bind(Binding::Loc(ln)) = k2 else { continue };
            if config_after.env.get(ln) != Some(target) {
                continue;
            }
            let sub = judge.subtype(gamma, have, want).unwrap_or(false);
            let own = judge.same_ownership(gamma, have, want).unwrap_or(false);
            if sub && own {
                continue 'outer;
            }
            if let Value::Obj(o) = target {
                if locked_now_or_before.contains(o) {
                    let fam = |t: &Type| {
                        t.mode().map_or(false, |m| {
                            matches!(m, Mode::States(_) | Mode::Perm(Permission::Owned) | Mode::Perm(Permission::Shared))
                        })
                    };
                    if fam(have) && fam(want) {
                        continue 'outer;
                    }
                }
            }
        }
        return Err(format!("`{lp}: {want}` is not covered by the successor context"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Verified evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Ver001(String),
    Ver002(String),
}

impl Verdict {
    pub fn code(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Ver001(_) => codes::VER001,
            Verdict::Ver002(_) => codes::VER002,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepVerdict {
    pub step: u64,
    pub rule: &'static str,
    pub verdict: Verdict,
}

/// Snapshot of one trace point, used by the ownership audit.
#[derive(Debug, Clone)]
pub struct TracePoint {
    pub step: u64,
    pub config: RuntimeConfig,
    pub shadow: ShadowContext,
}

#[derive(Debug, Clone)]
pub struct OwnershipLedger {
    /// (step, object) of each disown redex.
    pub disowns: Vec<(u64, ObjId)>,
    /// (step, object) of each owner-count drop to zero of an asset object.
    pub drops: Vec<(u64, ObjId)>,
}

#[derive(Debug, Clone)]
pub struct VerifiedReport {
    pub outcome: EvalOutcome,
    pub steps: u64,
    pub verdicts: Vec<StepVerdict>,
    pub audit: Result<OwnershipLedger, (String, String)>,
    pub trace: Vec<TraceEntry>,
    pub final_config: RuntimeConfig,
}

impl VerifiedReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict == Verdict::Pass) && self.audit.is_ok()
    }
}

/// Expectation and receiver region at the redex position: the innermost
/// let annotation on the congruence path, and the innermost reentrancy
/// region.
fn redex_info(e: &Expr, region: Option<ObjId>) -> (Option<Type>, Option<ObjId>) {
    match &e.kind {
        ExprKind::Let { ty, bound, .. } => {
            if bound.as_value().is_some() {
                (None, region)
            } else {
                let (exp, r) = redex_info(bound, region);
                (exp.or_else(|| Some(ty.clone())), r)
            }
        }
        ExprKind::StateLockBox { inner, .. } => {
            if inner.as_value().is_some() {
                (None, region)
            } else {
                redex_info(inner, region)
            }
        }
        ExprKind::ReentrancyBox { inner, obj } => {
            if inner.as_value().is_some() {
                (None, region)
            } else {
                redex_info(inner, Some(*obj))
            }
        }
        _ => (None, region),
    }
}

fn redex_expectation(e: &Expr) -> Option<Type> {
    // The innermost enclosing let annotation, if the redex is its bound.
    fn go(e: &Expr, exp: Option<&Type>) -> Option<Type> {
        match &e.kind {
            ExprKind::Let { ty, bound, .. } => {
                if bound.as_value().is_some() {
                    None
                } else {
                    go(bound, Some(ty))
                }
            }
            ExprKind::StateLockBox { inner, .. } | ExprKind::ReentrancyBox { inner, .. } => {
                if inner.as_value().is_some() {
                    None
                } else {
                    go(inner, exp)
                }
            }
            _ => exp.cloned(),
        }
    }
    go(e, None)
}

pub struct Verifier<'a> {
    pub checked: &'a CheckedProgram,
    pub faults: FaultInjection,
}

impl<'a> Verifier<'a> {
    pub fn new(checked: &'a CheckedProgram) -> Verifier<'a> {
        Verifier { checked, faults: FaultInjection::default() }
    }

    pub fn with_faults(checked: &'a CheckedProgram, faults: FaultInjection) -> Verifier<'a> {
        Verifier { checked, faults }
    }

    fn type_machine_expr(
        &self,
        shadow: &ShadowContext,
        config: &RuntimeConfig,
        e: &Expr,
    ) -> Result<TypingContext, String> {
        let table = &self.checked.table;
        let mut checker = Checker::with_machine(
            table,
            shadow.gamma.clone(),
            config,
            shadow.decl_assignments.clone(),
        );
        let mut ctx = shadow.ctx.clone();
        match checker.check(&mut ctx, e, None) {
            Ok(_) => Ok(ctx),
            Err(d) => Err(format!("{d}")),
        }
    }

    /// Runs the whole program under per-step verification.
    pub fn run(&self, fuel: u64) -> VerifiedReport {
        let table = &self.checked.table;
        let machine = Machine::with_faults(table, self.faults);
        let judge = Judgments::new(table);

        let mut config = RuntimeConfig::new();
        let mut expr = self.checked.program.main.clone();
        let mut shadow = ShadowContext::new();
        let mut verdicts: Vec<StepVerdict> = Vec::new();
        let mut trace: Vec<TraceEntry> = Vec::new();
        let mut points: Vec<TracePoint> = vec![TracePoint {
            step: 0,
            config: config.clone(),
            shadow: shadow.clone(),
        }];
        let mut disowns: Vec<(u64, ObjId)> = Vec::new();
        let mut steps = 0u64;

        let mut prev_output = match self.type_machine_expr(&shadow, &config, &expr) {
            Ok(c) => Some(c),
            Err(m) => {
                verdicts.push(StepVerdict {
                    step: 0,
                    rule: "initial",
                    verdict: Verdict::Ver002(format!("initial expression fails to typecheck: {m}")),
                });
                None
            }
        };

        let outcome = loop {
            let step_result = match machine.step(&config, &expr) {
                Ok(r) => r,
                Err(d) => {
                    verdicts.push(StepVerdict {
                        step: steps + 1,
                        rule: "machine",
                        verdict: Verdict::Ver002(format!("machine fault: {d}")),
                    });
                    break EvalOutcome::FuelExhausted;
                }
            };
            match step_result {
                StepOutcome::Finished(v) => break EvalOutcome::Finished(v),
                StepOutcome::Stuck(k) => break EvalOutcome::Stuck(k),
                StepOutcome::Stepped { config: config2, expr: expr2, rule, detail } => {
                    steps += 1;
                    trace.push(TraceEntry {
                        step: steps,
                        rule,
                        summary: crate::render::summarize_expr(&expr2, 80),
                    });
                    let expectation = redex_expectation(&expr);
                    let (_, region) = redex_info(&expr, None);
                    if let StepDetail::Disown { obj: Some(o), .. } = &detail {
                        disowns.push((steps, *o));
                    }

                    let mut verdict = Verdict::Pass;
                    if let Err(m) = check_lock_discipline(rule, &detail, &config, &config2) {
                        verdict = Verdict::Ver001(m);
                    }
                    let witness = apply_witness(
                        table,
                        &judge,
                        &mut shadow,
                        &config,
                        &config2,
                        &detail,
                        expectation.as_ref(),
                        region,
                    );
                    if verdict == Verdict::Pass {
                        if let Err(m) = witness {
                            verdict = Verdict::Ver002(format!("witness construction failed: {m}"));
                        }
                    }
                    if verdict == Verdict::Pass {
                        if let Err(m) = check_global_consistency(table, &config2, &shadow) {
                            verdict = Verdict::Ver001(m);
                        }
                    }
                    if verdict == Verdict::Pass {
                        match self.type_machine_expr(&shadow, &config2, &expr2) {
                            Ok(out) => {
                                if let Some(prev) = &prev_output {
                                    let mut locked = config.state_locks.clone();
                                    locked.extend(config2.state_locks.iter().copied());
                                    if let Err(m) = l_stronger(
                                        table,
                                        &shadow.gamma,
                                        &out,
                                        prev,
                                        &config2,
                                        &locked,
                                    ) {
                                        verdict = Verdict::Ver002(format!(
                                            "successor context is not l-stronger: {m}"
                                        ));
                                    }
                                }
                                prev_output = Some(out);
                            }
                            Err(m) => {
                                verdict = Verdict::Ver002(format!(
                                    "residual expression fails to typecheck: {m}"
                                ));
                                prev_output = None;
                            }
                        }
                    }
                    verdicts.push(StepVerdict { step: steps, rule, verdict });
                    config = config2;
                    expr = expr2;
                    points.push(TracePoint {
                        step: steps,
                        config: config.clone(),
                        shadow: shadow.clone(),
                    });
                    if steps >= fuel {
                        break EvalOutcome::FuelExhausted;
                    }
                }
            }
        };

        let audit = audit_ownership(table, &points, &disowns);
        VerifiedReport { outcome, steps, verdicts, audit, trace, final_config: config }
    }
}

/// Counts the owning aliases (state-bearing or Owned, after resolution) of
/// `o` at one trace point.
fn owning_alias_count(
    table: &ProgramTable,
    point: &TracePoint,
    o: ObjId,
) -> usize {
    let report = ref_types(table, &point.config, &point.shadow, o);
    report
        .aliases
        .iter()
        .filter(|(t, _)| {
            let rt = point.shadow.resolve_type(&point.config, t);
            matches!(
                rt.mode(),
                Some(Mode::States(_)) | Some(Mode::Perm(Permission::Owned))
            )
        })
        .count()
}

fn object_is_asset(table: &ProgramTable, config: &RuntimeConfig, o: ObjId) -> bool {
    config
        .heap
        .get(&o)
        .and_then(|h| table.sdef(&h.contract, &h.state))
        .map(|s| s.asset)
        .unwrap_or(false)
}

/// Audits a verified trace: unicity of ownership at every point, and
/// owner-count drops only at disown steps.
pub fn audit_ownership(
    table: &ProgramTable,
    points: &[TracePoint],
    disowns: &[(u64, ObjId)],
) -> Result<OwnershipLedger, (String, String)> {
    let mut drops: Vec<(u64, ObjId)> = Vec::new();
    for p in points {
        for (o, _) in &p.config.heap {
            let count = owning_alias_count(table, p, *o);
            if object_is_asset(table, &p.config, *o) && count > 1 {
                return Err((
                    codes::AUD001.to_string(),
                    format!("step {}: asset object `{o}` has {count} owning aliases", p.step),
                ));
            }
        }
    }
    for w in points.windows(2) {
        let (before, after) = (&w[0], &w[1]);
        for (o, _) in &before.config.heap {
            if !after.config.heap.contains_key(o) {
                continue;
            }
            let was_asset = object_is_asset(table, &before.config, *o);
            let c0 = owning_alias_count(table, before, *o);
            let c1 = owning_alias_count(table, after, *o);
            if c0 >= 1 && c1 == 0 {
                drops.push((after.step, *o));
                if was_asset && !disowns.iter().any(|(s, d)| *s == after.step && d == o) {
                    return Err((
                        codes::AUD002.to_string(),
                        format!(
                            "step {}: asset object `{o}` lost its owner without a disown",
                            after.step
                        ),
                    ));
                }
            }
        }
    }
    Ok(OwnershipLedger { disowns: disowns.to_vec(), drops })
}

/// Machine discipline: the state-lock set changes only at the shared state
/// check and its box exit, the reentrancy set only at invocations and their
/// box exits, and each change is exactly the rule's object.
fn check_lock_discipline(
    rule: &'static str,
    detail: &StepDetail,
    pre: &RuntimeConfig,
    post: &RuntimeConfig,
) -> Result<(), String> {
    let mut want_locks = pre.state_locks.clone();
    let mut want_active = pre.active_receivers.clone();
    match detail {
        StepDetail::IsInSharedThen { obj, .. } => {
            if !want_locks.insert(*obj) {
                return Err(format!("{rule}: `{obj}` was already state-locked"));
            }
        }
        StepDetail::BoxPhi { obj } => {
            if !want_locks.remove(obj) {
                return Err(format!("{rule}: `{obj}` was not state-locked"));
            }
        }
        StepDetail::Invoke { obj, .. } => {
            want_active.insert(*obj);
        }
        StepDetail::BoxPsi { obj } => {
            if !want_active.remove(obj) {
                return Err(format!("{rule}: `{obj}` had no invocation in progress"));
            }
        }
        _ => {}
    }
    if post.state_locks != want_locks {
        return Err(format!(
            "{rule}: state-lock set changed to {:?}, expected {:?}",
            post.state_locks, want_locks
        ));
    }
    if post.active_receivers != want_active {
        return Err(format!(
            "{rule}: reentrancy set changed to {:?}, expected {:?}",
            post.active_receivers, want_active
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Witness construction
// ---------------------------------------------------------------------------

/// The type of the owning alias of `o` among context bindings, if any.
fn find_owner_type(shadow: &ShadowContext, config: &RuntimeConfig, o: ObjId) -> Option<Type> {
    for (k, t) in shadow.ctx.iter() {
        let CtxKey::Bind(b) = k else { continue };
        if config.object_of(b) != Some(o) {
            continue;
        }
        if matches!(t.mode(), Some(Mode::States(_)) | Some(Mode::Perm(Permission::Owned)) | Some(Mode::PermVar(_))) {
            return Some(t.clone());
        }
    }
    None
}

/// Moves the owning view of `o` onto the scrutinee reference: every other
/// owned binding of the object is demoted to Unowned, and the scrutinee is
/// bound at `new_mode` (or at the previous owner's mode when `None`).
/// Preservation states context strength up to choice of indirect reference;
/// the residual branch was typed with the scrutinee owning, so the witness
/// reconstructs that choice.
fn migrate_ownership(
    judge: &Judgments,
    shadow: &mut ShadowContext,
    config: &RuntimeConfig,
    o: ObjId,
    scrutinee: LocId,
    new_mode: Option<Mode>,
) -> Result<(), String> {
    let _ = judge;
    let owner_ty = find_owner_type(shadow, config, o);
    let scrut_key = Binding::Loc(scrutinee);
    let scrut_ty = shadow
        .ctx
        .get(&scrut_key)
        .cloned()
        .ok_or("scrutinee unbound in the shadow context")?;
    let mode = match new_mode {
        Some(m) => m,
        None => match &owner_ty {
            Some(t) => t.mode().cloned().unwrap_or(Mode::Perm(Permission::Owned)),
            None => return Ok(()), // scrutinee view already current
        },
    };
    let demote: Vec<Binding> = shadow
        .ctx
        .iter()
        .filter_map(|(k, t)| match k {
            CtxKey::Bind(b) if b != &scrut_key && config.object_of(b) == Some(o) => {
                let owned = matches!(
                    t.mode(),
                    Some(Mode::States(_)) | Some(Mode::Perm(Permission::Owned)) | Some(Mode::PermVar(_))
                );
                owned.then(|| b.clone())
            }
            _ => None,
        })
        .collect();
    for b in demote {
        let t = shadow.ctx.get(&b).cloned().expect("listed");
        shadow.ctx.bind(b, t.with_mode(Mode::Perm(Permission::Unowned)));
    }
    shadow.ctx.bind(scrut_key, scrut_ty.with_mode(mode));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn apply_witness(
    table: &ProgramTable,
    judge: &Judgments,
    shadow: &mut ShadowContext,
    pre: &RuntimeConfig,
    post: &RuntimeConfig,
    detail: &StepDetail,
    expectation: Option<&Type>,
    region: Option<ObjId>,
) -> Result<(), String> {
    let gamma = shadow.gamma.clone();
    let demand = match expectation {
        Some(t) => SplitDemand::SatisfyExpected(shadow.resolve_type(post, t)),
        None => SplitDemand::TransferAll,
    };
    let owning = |t: &Type| {
        matches!(
            t.mode(),
            Some(Mode::States(_)) | Some(Mode::Perm(Permission::Owned)) | Some(Mode::PermVar(_))
        )
    };
    // Binds `key` at `ty`; an owning view displaces any stale owner of the
    // same object left over from an earlier frame.
    let install = |shadow: &mut ShadowContext, key: Binding, ty: Type| {
        if owning(&ty) {
            if let Some(o) = post.object_of(&key) {
                let victims: Vec<Binding> = shadow
                    .ctx
                    .iter()
                    .filter_map(|(k, t)| match k {
                        CtxKey::Bind(b)
                            if b != &key && post.object_of(b) == Some(o) && owning(t) =>
                        {
                            Some(b.clone())
                        }
                        _ => None,
                    })
                    .collect();
                for v in victims {
                    let t = shadow.ctx.get(&v).cloned().expect("listed");
                    shadow.ctx.bind(v, t.with_mode(Mode::Perm(Permission::Unowned)));
                }
            }
        }
        shadow.ctx.bind(key, ty);
    };
    let split_binding = |ctx: &mut TypingContext, b: &Binding, d: &SplitDemand| -> Result<Type, String> {
        let ty = ctx
            .get(b)
            .cloned()
            .ok_or_else(|| format!("`{b}` is unbound in the shadow context"))?;
        let (taken, residual) = judge
            .split(&gamma, &ty, d)
            .map_err(|e| format!("split of `{ty}` failed: {}", e.message))?;
        ctx.bind(b.clone(), residual);
        Ok(taken)
    };

    match detail {
        StepDetail::Lookup { loc, value } => {
            let taken = split_binding(&mut shadow.ctx, &Binding::Loc(*loc), &demand)?;
            if let Value::Obj(o) = value {
                install(shadow, Binding::Obj(*o), taken);
            }
            Ok(())
        }

        StepDetail::Let { loc, value, annotation } => {
            let annotation = shadow.resolve_type(post, annotation);
            if let Value::Obj(o) = value {
                split_binding(
                    &mut shadow.ctx,
                    &Binding::Obj(*o),
                    &SplitDemand::SatisfyExpected(annotation.clone()),
                )?;
            }
            install(shadow, Binding::Loc(*loc), annotation);
            Ok(())
        }

        StepDetail::New { obj, args } => {
            let h = post.heap.get(obj).ok_or("new object missing from the heap")?;
            let head = ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() };
            let fields = judge
                .state_fields(&gamma, &head, &h.state)
                .map_err(|e| e.message)?;
            for (l, f) in args.iter().zip(fields.iter()) {
                let want = shadow.resolve_type(post, &f.ty);
                split_binding(
                    &mut shadow.ctx,
                    &Binding::Loc(*l),
                    &SplitDemand::SatisfyExpected(want),
                )?;
            }
            let made = shadow.resolve_type(
                post,
                &Type::Ref { contract: head, mode: Mode::single_state(h.state.clone()) },
            );
            shadow.ctx.bind(Binding::Obj(*obj), made);
            Ok(())
        }

        StepDetail::Field { obj, field, value, .. } => {
            let okey = Binding::Obj(*obj);
            let t1 = match shadow.ctx.get_override(&okey, field) {
                Some(t) => t.clone(),
                None => {
                    let h = pre.heap.get(obj).ok_or("receiver missing from heap")?;
                    let head =
                        ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() };
                    let declared = judge
                        .state_fields(&gamma, &head, &h.state)
                        .map_err(|e| e.message)?
                        .into_iter()
                        .find(|f| f.name == *field)
                        .map(|f| f.ty)
                        .ok_or_else(|| format!("unknown field `{field}`"))?;
                    shadow.resolve_type(post, &declared)
                }
            };
            let (taken, residual) =
                judge.split(&gamma, &t1, &demand).map_err(|e| e.message)?;
            shadow.ctx.bind_override(okey, field.clone(), residual);
            if let Value::Obj(o2) = value {
                install(shadow, Binding::Obj(*o2), taken);
            }
            Ok(())
        }

        StepDetail::FieldUpdate { obj, field, src, .. } => {
            let taken = split_binding(&mut shadow.ctx, &Binding::Loc(*src), &SplitDemand::TransferAll)?;
            shadow.ctx.bind_override(Binding::Obj(*obj), field.clone(), taken);
            Ok(())
        }

        StepDetail::Invoke {
            recv,
            obj,
            name,
            type_args,
            arg_locs,
            fresh_this,
            fresh_args,
            ..
        } => {
            let h = post.heap.get(obj).ok_or("receiver missing from heap")?;
            let (sig_raw, _) = table
                .tdef(&h.contract, name)
                .ok_or_else(|| format!("no transaction `{name}`"))?;
            let decl_params = table.params(&h.contract).unwrap_or(&[]).to_vec();
            let subst = Subst::sequential(&decl_params, &h.type_args)
                .then(Subst::sequential(&sig_raw.generics, type_args));
            let mut sig = subst.apply_sig(sig_raw);
            // Record the callee's assignments first so its own symbolic
            // parameter uses resolve below.
            for (gp, arg) in decl_params.iter().zip(h.type_args.iter()) {
                if let Some(c) = arg.contract() {
                    let resolved = match c {
                        ContractRef::Var(x) => shadow
                            .decl_assignments
                            .get(x)
                            .cloned()
                            .unwrap_or_else(|| c.clone()),
                        _ => c.clone(),
                    };
                    shadow.decl_assignments.insert(gp.decl_var.clone(), resolved);
                }
            }
            for (gp, arg) in sig_raw.generics.iter().zip(type_args.iter()) {
                if let Some(c) = arg.contract() {
                    let resolved = match c {
                        ContractRef::Var(x) => shadow
                            .decl_assignments
                            .get(x)
                            .cloned()
                            .unwrap_or_else(|| c.clone()),
                        _ => c.clone(),
                    };
                    shadow.decl_assignments.insert(gp.decl_var.clone(), resolved);
                }
            }
            sig.this_pre = match &sig.this_pre {
                Mode::PermVar(p) => post.perm(p).cloned().unwrap_or_else(|| sig.this_pre.clone()),
                m => m.clone(),
            };
            sig.this_post = match &sig.this_post {
                Mode::PermVar(p) => post.perm(p).cloned().unwrap_or_else(|| sig.this_post.clone()),
                m => m.clone(),
            };
            for p in &mut sig.params {
                p.ty = shadow.resolve_type(post, &p.ty);
                if let Mode::PermVar(v) = &p.post_mode {
                    if let Some(m) = post.perm(v) {
                        p.post_mode = m.clone();
                    }
                }
            }

            // Caller residuals.
            let recv_ty = shadow
                .ctx
                .get(&Binding::Loc(*recv))
                .cloned()
                .ok_or("receiver unbound in the shadow context")?;
            let bound = judge.bound_type(&gamma, &recv_ty).map_err(|e| e.message)?;
            let passed_mode = bound.mode().cloned().unwrap_or(Mode::Perm(Permission::Unowned));
            let recv_passed = recv_ty.with_mode(passed_mode);
            shadow.ctx.bind(
                Binding::Loc(*recv),
                judge.func_arg_residual(&recv_passed, &sig.this_pre),
            );
            for (l, p) in arg_locs.iter().zip(sig.params.iter()) {
                let at = shadow
                    .ctx
                    .get(&Binding::Loc(*l))
                    .cloned()
                    .ok_or_else(|| format!("argument `{l}` unbound"))?;
                let declared_in = p.ty.mode().cloned().unwrap_or(Mode::Perm(Permission::Unowned));
                shadow
                    .ctx
                    .bind(Binding::Loc(*l), judge.func_arg_residual(&at, &declared_in));
            }

            // Fresh callee references at the declared modes; each owning
            // view displaces whatever stale owner remains.
            let callee_head =
                ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() };
            let this_ty = shadow.resolve_type(
                post,
                &Type::Ref { contract: callee_head, mode: sig.this_pre.clone() },
            );
            install(shadow, Binding::Loc(*fresh_this), this_ty);
            for (lf, p) in fresh_args.iter().zip(sig.params.iter()) {
                install(shadow, Binding::Loc(*lf), p.ty.clone());
            }

            shadow.gamma.extend(decl_params.iter().cloned());
            shadow.gamma.extend(sig_raw.generics.iter().cloned());
            Ok(())
        }

        StepDetail::Transition { recv, obj, state, args } => {
            let h = post.heap.get(obj).ok_or("receiver missing from heap")?;
            let head = ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() };
            // Ownership of the arguments moves into the new state's fields.
            let fields = judge
                .state_fields(&gamma, &head, state)
                .map_err(|e| e.message)?;
            for (l, f) in args.iter().zip(fields.iter()) {
                let want = shadow.resolve_type(post, &f.ty);
                split_binding(
                    &mut shadow.ctx,
                    &Binding::Loc(*l),
                    &SplitDemand::SatisfyExpected(want),
                )?;
            }
            let recv_ty = shadow
                .ctx
                .get(&Binding::Loc(*recv))
                .cloned()
                .ok_or("transition receiver unbound")?;
            let annot_shared =
                recv_ty.mode() == Some(&Mode::Perm(Permission::Shared));
            if annot_shared {
                // A shared transition leaves the reference shared.
                shadow.ctx.bind(Binding::Loc(*recv), recv_ty);
            } else {
                install(
                    shadow,
                    Binding::Loc(*recv),
                    recv_ty.with_mode(Mode::single_state(h.state.clone())),
                );
            }
            shadow.ctx.take_overrides_of(&Binding::Obj(*obj));
            Ok(())
        }

        StepDetail::Assert | StepDetail::IsInPermVar | StepDetail::IsInUnowned => Ok(()),

        StepDetail::IsInPermThen { loc, obj, annot }
        | StepDetail::IsInPermElse { loc, obj, annot } => {
            // A permission test with an owned annotation was typed with an
            // owning scrutinee; restore that view if ownership has drifted
            // to another reference.
            let owned_annot = matches!(
                annot,
                crate::ast::CheckAnnot::Owned | crate::ast::CheckAnnot::Perm(Permission::Owned)
            );
            match (owned_annot, obj) {
                (true, Some(o)) => migrate_ownership(judge, shadow, post, *o, *loc, None),
                _ => Ok(()),
            }
        }

        StepDetail::IsInOwnedThen { loc, obj, states } => {
            migrate_ownership(judge, shadow, post, *obj, *loc, Some(Mode::States(states.clone())))
        }

        StepDetail::IsInSharedThen { loc, states, .. } => {
            let ty = shadow
                .ctx
                .get(&Binding::Loc(*loc))
                .cloned()
                .ok_or("scrutinee unbound")?;
            shadow
                .ctx
                .bind(Binding::Loc(*loc), ty.with_mode(Mode::States(states.clone())));
            Ok(())
        }

        StepDetail::IsInElse { loc, obj, annot, tested } => {
            // The owned test narrows the scrutinee to the untested states;
            // shared, unowned, and permission tests leave the context alone.
            if matches!(annot, crate::ast::CheckAnnot::Owned | crate::ast::CheckAnnot::Perm(Permission::Owned)) {
                let owner_ty = find_owner_type(shadow, post, *obj);
                let basis = owner_ty.unwrap_or_else(|| {
                    Type::Ref {
                        contract: ContractRef::named(
                            post.heap.get(obj).map(|h| h.contract.clone()).unwrap_or_default(),
                        ),
                        mode: Mode::Perm(Permission::Owned),
                    }
                });
                let resolved = shadow.resolve_type(post, &basis);
                let possible = judge
                    .possible_states(&shadow.gamma, &resolved)
                    .map_err(|e| e.message)?;
                let mut diff: Vec<String> =
                    possible.iter().filter(|s| !tested.contains(s)).cloned().collect();
                if diff.is_empty() {
                    diff = possible;
                }
                migrate_ownership(judge, shadow, post, *obj, *loc, Some(Mode::States(diff)))
            } else {
                Ok(())
            }
        }

        StepDetail::Disown { loc, .. } => {
            let ty = shadow
                .ctx
                .get(&Binding::Loc(*loc))
                .cloned()
                .ok_or("disowned reference unbound")?;
            shadow
                .ctx
                .bind(Binding::Loc(*loc), ty.with_mode(Mode::Perm(Permission::Unowned)));
            Ok(())
        }

        StepDetail::Pack => {
            if let Some(o) = region {
                shadow.ctx.take_overrides_of(&Binding::Obj(o));
            }
            Ok(())
        }

        StepDetail::BoxPhi { obj } => {
            // The lock-scoped temporary owner reverts to shared.
            let keys: Vec<Binding> = shadow
                .ctx
                .iter()
                .filter_map(|(k, t)| match k {
                    CtxKey::Bind(b) => {
                        let resolves = match b {
                            Binding::Loc(l) => post.env.get(l) == Some(&Value::Obj(*obj)),
                            Binding::Obj(o2) => o2 == obj,
                            _ => false,
                        };
                        let owned = matches!(
                            t.mode(),
                            Some(Mode::States(_)) | Some(Mode::Perm(Permission::Owned))
                        );
                        (resolves && owned).then(|| b.clone())
                    }
                    _ => None,
                })
                .collect();
            for b in keys {
                let ty = shadow.ctx.get(&b).cloned().expect("listed");
                shadow.ctx.bind(b, ty.with_mode(Mode::Perm(Permission::Shared)));
            }
            Ok(())
        }

        StepDetail::BoxPsi { .. } => Ok(()),
    }
}
