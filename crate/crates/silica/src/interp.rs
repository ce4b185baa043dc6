//! Small-step abstract machine. Congruence (descending through let bounds
//! and box interiors to the leftmost redex) is built into the walker; the
//! reported rule is always the redex rule.

use crate::ast::*;
use crate::diag::{codes, Diagnostic, SourceSpan};
use crate::table::ProgramTable;
use crate::typecheck::CheckedProgram;

/// Terminal stuck states, mirroring the progress cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StuckKind {
    BadTransition { obj: ObjId, attempted: String },
    Reentrancy { obj: ObjId, transaction: String },
    NestedStateCheck { obj: ObjId },
}

impl StuckKind {
    pub fn label(&self) -> &'static str {
        match self {
            StuckKind::BadTransition { .. } => "bad-transition",
            StuckKind::Reentrancy { .. } => "reentrancy",
            StuckKind::NestedStateCheck { .. } => "nested-state-check",
        }
    }
}

/// What one step did; consumed by the runtime soundness oracle.
#[derive(Debug, Clone)]
pub enum StepDetail {
    Lookup { loc: LocId, value: Value },
    Let { loc: LocId, value: Value, annotation: Type },
    New { obj: ObjId, args: Vec<LocId> },
    Field { recv: LocId, obj: ObjId, field: String, value: Value },
    FieldUpdate { recv: LocId, obj: ObjId, field: String, src: LocId },
    Invoke {
        recv: LocId,
        obj: ObjId,
        name: String,
        type_args: Vec<Type>,
        arg_locs: Vec<LocId>,
        fresh_this: LocId,
        fresh_args: Vec<LocId>,
        private: bool,
    },
    Transition { recv: LocId, obj: ObjId, state: String, args: Vec<LocId> },
    Assert,
    IsInPermVar,
    IsInPermThen { loc: LocId, obj: Option<ObjId>, annot: CheckAnnot },
    IsInPermElse { loc: LocId, obj: Option<ObjId>, annot: CheckAnnot },
    IsInUnowned,
    IsInOwnedThen { loc: LocId, obj: ObjId, states: Vec<String> },
    IsInSharedThen { loc: LocId, obj: ObjId, states: Vec<String> },
    IsInElse { loc: LocId, obj: ObjId, annot: CheckAnnot, tested: Vec<String> },
    Disown { loc: LocId, obj: Option<ObjId> },
    Pack,
    BoxPhi { obj: ObjId },
    BoxPsi { obj: ObjId },
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Stepped { config: RuntimeConfig, expr: Expr, rule: &'static str, detail: StepDetail },
    Finished(Value),
    Stuck(StuckKind),
}

/// Terminal outcome of a fuel-bounded evaluation.
#[derive(Debug, Clone)]
pub enum EvalOutcome {
    Finished(Value),
    Stuck(StuckKind),
    FuelExhausted,
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub step: u64,
    pub rule: &'static str,
    pub summary: String,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub outcome: EvalOutcome,
    pub steps: u64,
    pub trace: Option<Vec<TraceEntry>>,
    pub final_config: RuntimeConfig,
}

/// Test-only corruption knobs for the metatheory mutation harness.
#[derive(Debug, Clone, Copy, Default)]
pub struct FaultInjection {
    /// E-box-phi no longer removes the object from the state-lock set.
    pub skip_phi_removal: bool,
    /// Transitions silently drop the last field value.
    pub drop_field_on_transition: bool,
}

fn int001(span: SourceSpan, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(codes::INT001, span, "machine", msg)
}

/// lookup*: resolves a permission variable through the permission
/// environment; identity on non-variables.
pub fn resolve_mode(config: &RuntimeConfig, m: &Mode) -> Result<Mode, Diagnostic> {
    match m {
        Mode::PermVar(p) => config.perm(p).cloned().ok_or_else(|| {
            int001(SourceSpan::synthetic(), format!("permission variable `{p}` unbound in the permission environment"))
        }),
        _ => Ok(m.clone()),
    }
}

/// Concrete-permission comparison used by the permission-test rules.
fn perm_leq(a: Permission, b: Permission) -> bool {
    b == Permission::Unowned || a == b || a == Permission::Owned
}

fn annot_perm(annot: CheckAnnot, span: SourceSpan) -> Result<Permission, Diagnostic> {
    match annot {
        CheckAnnot::Owned => Ok(Permission::Owned),
        CheckAnnot::Shared => Ok(Permission::Shared),
        CheckAnnot::Unowned => Ok(Permission::Unowned),
        CheckAnnot::Perm(p) => Ok(p),
        CheckAnnot::Unresolved => Err(int001(span, "unresolved state-check annotation reached the machine")),
    }
}

enum Walk {
    Stepped(Expr, &'static str, StepDetail),
    Stuck(StuckKind),
}

pub struct Machine<'a> {
    pub table: &'a ProgramTable,
    pub faults: FaultInjection,
}

impl<'a> Machine<'a> {
    pub fn new(table: &'a ProgramTable) -> Machine<'a> {
        Machine { table, faults: FaultInjection::default() }
    }

    pub fn with_faults(table: &'a ProgramTable, faults: FaultInjection) -> Machine<'a> {
        Machine { table, faults }
    }

    /// One small step. Exactly one outcome; the rule applied is unique.
    pub fn step(&self, config: &RuntimeConfig, e: &Expr) -> Result<StepOutcome, Diagnostic> {
        if let Some(v) = e.as_value() {
            return Ok(StepOutcome::Finished(v));
        }
        let mut next = config.clone();
        match self.walk(&mut next, e)? {
            Walk::Stepped(expr, rule, detail) => {
                Ok(StepOutcome::Stepped { config: next, expr, rule, detail })
            }
            Walk::Stuck(k) => Ok(StepOutcome::Stuck(k)),
        }
    }

    fn loc_of(&self, b: &Binding, span: SourceSpan) -> Result<LocId, Diagnostic> {
        match b {
            Binding::Loc(l) => Ok(*l),
            _ => Err(int001(span, format!("expected an indirect reference, found `{b}`"))),
        }
    }

    fn env_value(&self, config: &RuntimeConfig, l: LocId, span: SourceSpan) -> Result<Value, Diagnostic> {
        config
            .env
            .get(&l)
            .copied()
            .ok_or_else(|| int001(span, format!("dangling indirect reference `{l}`")))
    }

    fn env_obj(&self, config: &RuntimeConfig, l: LocId, span: SourceSpan) -> Result<ObjId, Diagnostic> {
        match self.env_value(config, l, span)? {
            Value::Obj(o) => Ok(o),
            Value::Unit => Err(int001(span, format!("`{l}` references unit, not an object"))),
        }
    }

    fn field_index(
        &self,
        config: &RuntimeConfig,
        o: ObjId,
        field: &str,
        span: SourceSpan,
    ) -> Result<usize, Diagnostic> {
        let h = config
            .heap
            .get(&o)
            .ok_or_else(|| int001(span, format!("dangling object reference `{o}`")))?;
        let c = self
            .table
            .contract(&h.contract)
            .ok_or_else(|| int001(span, format!("object of unknown contract `{}`", h.contract)))?;
        let st = c
            .states
            .iter()
            .find(|s| s.name == h.state)
            .ok_or_else(|| int001(span, format!("object in unknown state `{}`", h.state)))?;
        st.fields
            .iter()
            .position(|f| f.name == field)
            .ok_or_else(|| int001(span, format!("state `{}` has no field `{field}`", h.state)))
    }

    fn walk(&self, config: &mut RuntimeConfig, e: &Expr) -> Result<Walk, Diagnostic> {
        let span = e.span;
        match &e.kind {
            ExprKind::Let { var, ty, bound, body } => {
                if let Some(v) = bound.as_value() {
                    let l = config.fresh_loc();
                    config.env.insert(l, v);
                    let body2 = substitute_binding(body, var, &Binding::Loc(l));
                    Ok(Walk::Stepped(
                        body2,
                        "E-let",
                        StepDetail::Let { loc: l, value: v, annotation: ty.clone() },
                    ))
                } else {
                    match self.walk(config, bound)? {
                        Walk::Stepped(b2, rule, detail) => Ok(Walk::Stepped(
                            Expr::new(
                                ExprKind::Let {
                                    var: var.clone(),
                                    ty: ty.clone(),
                                    bound: Box::new(b2),
                                    body: body.clone(),
                                },
                                span,
                            ),
                            rule,
                            detail,
                        )),
                        s => Ok(s),
                    }
                }
            }

            ExprKind::StateLockBox { inner, obj } => {
                if let Some(v) = inner.as_value() {
                    if !self.faults.skip_phi_removal {
                        config.state_locks.remove(obj);
                    }
                    Ok(Walk::Stepped(Expr::from_value(v), "E-box-phi", StepDetail::BoxPhi { obj: *obj }))
                } else {
                    match self.walk(config, inner)? {
                        Walk::Stepped(i2, rule, detail) => Ok(Walk::Stepped(
                            Expr::new(ExprKind::StateLockBox { inner: Box::new(i2), obj: *obj }, span),
                            rule,
                            detail,
                        )),
                        s => Ok(s),
                    }
                }
            }

            ExprKind::ReentrancyBox { inner, obj } => {
                if let Some(v) = inner.as_value() {
                    config.active_receivers.remove(obj);
                    Ok(Walk::Stepped(Expr::from_value(v), "E-box-psi", StepDetail::BoxPsi { obj: *obj }))
                } else {
                    match self.walk(config, inner)? {
                        Walk::Stepped(i2, rule, detail) => Ok(Walk::Stepped(
                            Expr::new(ExprKind::ReentrancyBox { inner: Box::new(i2), obj: *obj }, span),
                            rule,
                            detail,
                        )),
                        s => Ok(s),
                    }
                }
            }

            ExprKind::Simple(Binding::Loc(l)) => {
                let v = self.env_value(config, *l, span)?;
                Ok(Walk::Stepped(
                    Expr::from_value(v),
                    "E-lookup",
                    StepDetail::Lookup { loc: *l, value: v },
                ))
            }
            ExprKind::Simple(Binding::Var(x)) => {
                Err(int001(span, format!("unsubstituted variable `{x}` reached the machine")))
            }
            ExprKind::Simple(Binding::Obj(_)) | ExprKind::UnitLit => {
                Err(int001(span, "walk reached a value"))
            }

            ExprKind::Field { recv, field } => {
                let l = self.loc_of(recv, span)?;
                let o = self.env_obj(config, l, span)?;
                let idx = self.field_index(config, o, field, span)?;
                let v = config.heap[&o].fields[idx];
                Ok(Walk::Stepped(
                    Expr::from_value(v),
                    "E-field",
                    StepDetail::Field { recv: l, obj: o, field: field.clone(), value: v },
                ))
            }

            ExprKind::FieldWrite { recv, field, src } => {
                let l = self.loc_of(recv, span)?;
                let o = self.env_obj(config, l, span)?;
                let ls = self.loc_of(src, span)?;
                let v = self.env_value(config, ls, span)?;
                let idx = self.field_index(config, o, field, span)?;
                config.heap.get_mut(&o).expect("object checked").fields[idx] = v;
                Ok(Walk::Stepped(
                    Expr::synthetic(ExprKind::UnitLit),
                    "E-fieldUpdate",
                    StepDetail::FieldUpdate { recv: l, obj: o, field: field.clone(), src: ls },
                ))
            }

            ExprKind::New { contract, type_args, state, args } => {
                let mut vals = Vec::with_capacity(args.len());
                let mut arg_locs = Vec::with_capacity(args.len());
                for a in args {
                    let l = self.loc_of(a, span)?;
                    arg_locs.push(l);
                    vals.push(self.env_value(config, l, span)?);
                }
                let o = config.fresh_obj();
                config.heap.insert(
                    o,
                    HeapObj {
                        contract: contract.clone(),
                        type_args: type_args.clone(),
                        state: state.clone(),
                        fields: vals,
                    },
                );
                Ok(Walk::Stepped(
                    Expr::synthetic(ExprKind::Simple(Binding::Obj(o))),
                    "E-new",
                    StepDetail::New { obj: o, args: arg_locs },
                ))
            }

            ExprKind::Invoke { recv, name, type_args, args } => {
                self.walk_invoke(config, span, recv, name, type_args, args)
            }

            ExprKind::Transition { recv, annot, state, args } => {
                let l = self.loc_of(recv, span)?;
                let o = self.env_obj(config, l, span)?;
                let current = config
                    .heap
                    .get(&o)
                    .ok_or_else(|| int001(span, format!("dangling object `{o}`")))?
                    .state
                    .clone();
                let mut arg_locs = Vec::with_capacity(args.len());
                for a in args {
                    arg_locs.push(self.loc_of(a, span)?);
                }
                let (rule, detail) = match annot {
                    TransitionAnnot::Owned => (
                        "E-trans-owned",
                        StepDetail::Transition {
                            recv: l,
                            obj: o,
                            state: state.clone(),
                            args: arg_locs.clone(),
                        },
                    ),
                    TransitionAnnot::Shared => {
                        if config.state_locks.contains(&o) && current != *state {
                            return Ok(Walk::Stuck(StuckKind::BadTransition {
                                obj: o,
                                attempted: state.clone(),
                            }));
                        }
                        (
                            "E-trans-shared",
                            StepDetail::Transition {
                                recv: l,
                                obj: o,
                                state: state.clone(),
                                args: arg_locs.clone(),
                            },
                        )
                    }
                    TransitionAnnot::Unresolved => {
                        return Err(int001(span, "unresolved transition annotation reached the machine"))
                    }
                };
                let mut vals = Vec::with_capacity(arg_locs.len());
                for la in &arg_locs {
                    vals.push(self.env_value(config, *la, span)?);
                }
                if self.faults.drop_field_on_transition {
                    vals.pop();
                }
                let h = config.heap.get_mut(&o).expect("object checked");
                h.state = state.clone();
                h.fields = vals;
                Ok(Walk::Stepped(Expr::synthetic(ExprKind::UnitLit), rule, detail))
            }

            ExprKind::StaticAssert { .. } => Ok(Walk::Stepped(
                Expr::synthetic(ExprKind::UnitLit),
                "E-assert",
                StepDetail::Assert,
            )),

            ExprKind::DynamicCheck { subject, annot, tested, then_branch, else_branch } => {
                let l = self.loc_of(subject, span)?;
                match tested {
                    Mode::PermVar(p) => {
                        let resolved = config.perm(p).cloned().ok_or_else(|| {
                            int001(span, format!("permission variable `{p}` unbound at a dynamic state test"))
                        })?;
                        Ok(Walk::Stepped(
                            Expr::new(
                                ExprKind::DynamicCheck {
                                    subject: subject.clone(),
                                    annot: *annot,
                                    tested: resolved,
                                    then_branch: then_branch.clone(),
                                    else_branch: else_branch.clone(),
                                },
                                span,
                            ),
                            "E-IsIn-PermVar",
                            StepDetail::IsInPermVar,
                        ))
                    }
                    Mode::Perm(p) => {
                        let ap = annot_perm(*annot, span)?;
                        let obj = match self.env_value(config, l, span)? {
                            Value::Obj(o) => Some(o),
                            Value::Unit => None,
                        };
                        if perm_leq(ap, *p) {
                            Ok(Walk::Stepped(
                                (**then_branch).clone(),
                                "E-IsIn-Perm-Then",
                                StepDetail::IsInPermThen { loc: l, obj, annot: *annot },
                            ))
                        } else {
                            Ok(Walk::Stepped(
                                (**else_branch).clone(),
                                "E-IsIn-Perm-Else",
                                StepDetail::IsInPermElse { loc: l, obj, annot: *annot },
                            ))
                        }
                    }
                    Mode::States(wanted) => {
                        let ap = annot_perm(*annot, span)?;
                        match ap {
                            Permission::Unowned => Ok(Walk::Stepped(
                                (**else_branch).clone(),
                                "E-IsIn-Unowned",
                                StepDetail::IsInUnowned,
                            )),
                            Permission::Owned => {
                                let o = self.env_obj(config, l, span)?;
                                let st = &config.heap[&o].state;
                                if wanted.contains(st) {
                                    Ok(Walk::Stepped(
                                        (**then_branch).clone(),
                                        "E-IsIn-Owned-Then",
                                        StepDetail::IsInOwnedThen {
                                            loc: l,
                                            obj: o,
                                            states: wanted.clone(),
                                        },
                                    ))
                                } else {
                                    Ok(Walk::Stepped(
                                        (**else_branch).clone(),
                                        "E-IsIn-Else",
                                        StepDetail::IsInElse {
                                            loc: l,
                                            obj: o,
                                            annot: *annot,
                                            tested: wanted.clone(),
                                        },
                                    ))
                                }
                            }
                            Permission::Shared => {
                                let o = self.env_obj(config, l, span)?;
                                let st = config.heap[&o].state.clone();
                                if wanted.contains(&st) {
                                    if config.state_locks.contains(&o) {
                                        return Ok(Walk::Stuck(StuckKind::NestedStateCheck { obj: o }));
                                    }
                                    config.state_locks.insert(o);
                                    Ok(Walk::Stepped(
                                        Expr::new(
                                            ExprKind::StateLockBox {
                                                inner: then_branch.clone(),
                                                obj: o,
                                            },
                                            span,
                                        ),
                                        "E-IsIn-Shared-Then",
                                        StepDetail::IsInSharedThen {
                                            loc: l,
                                            obj: o,
                                            states: wanted.clone(),
                                        },
                                    ))
                                } else {
                                    Ok(Walk::Stepped(
                                        (**else_branch).clone(),
                                        "E-IsIn-Else",
                                        StepDetail::IsInElse {
                                            loc: l,
                                            obj: o,
                                            annot: *annot,
                                            tested: wanted.clone(),
                                        },
                                    ))
                                }
                            }
                        }
                    }
                }
            }

            ExprKind::Disown(b) => {
                let l = self.loc_of(b, span)?;
                let obj = match self.env_value(config, l, span)? {
                    Value::Obj(o) => Some(o),
                    Value::Unit => None,
                };
                Ok(Walk::Stepped(
                    Expr::synthetic(ExprKind::UnitLit),
                    "E-disown",
                    StepDetail::Disown { loc: l, obj },
                ))
            }

            ExprKind::Pack => Ok(Walk::Stepped(
                Expr::synthetic(ExprKind::UnitLit),
                "E-pack",
                StepDetail::Pack,
            )),
        }
    }

    fn walk_invoke(
        &self,
        config: &mut RuntimeConfig,
        span: SourceSpan,
        recv: &Binding,
        name: &str,
        type_args: &[Type],
        args: &[Binding],
    ) -> Result<Walk, Diagnostic> {
        let l1 = self.loc_of(recv, span)?;
        let o = self.env_obj(config, l1, span)?;
        let h = config
            .heap
            .get(&o)
            .ok_or_else(|| int001(span, format!("dangling object `{o}`")))?
            .clone();
        let (sig, body) = self
            .table
            .tdef(&h.contract, name)
            .ok_or_else(|| int001(span, format!("`{}` has no transaction `{name}`", h.contract)))?;
        let body = body
            .ok_or_else(|| int001(span, format!("transaction `{name}` has no body")))?
            .clone();
        let private = sig.visibility() == Visibility::Private;
        if !private && config.active_receivers.contains(&o) {
            return Ok(Walk::Stuck(StuckKind::Reentrancy { obj: o, transaction: name.to_string() }));
        }

        // Fresh callee references.
        let fresh_this = config.fresh_loc();
        config.env.insert(fresh_this, Value::Obj(o));
        let mut fresh_args = Vec::with_capacity(args.len());
        let mut arg_locs = Vec::with_capacity(args.len());
        for a in args {
            let la = self.loc_of(a, span)?;
            arg_locs.push(la);
            let v = self.env_value(config, la, span)?;
            let lf = config.fresh_loc();
            config.env.insert(lf, v);
            fresh_args.push(lf);
        }

        // Bind the contract's and the transaction's permission variables,
        // resolving through the caller's environment (lookup*).
        let decl_params = self.table.params(&h.contract).unwrap_or(&[]).to_vec();
        for (p, arg) in decl_params.iter().zip(h.type_args.iter()) {
            let mode = match arg {
                Type::Ref { mode, .. } => mode.clone(),
                Type::Unit => Mode::Perm(Permission::Unowned),
            };
            let resolved = resolve_mode(config, &mode)?;
            config.bind_perm(p.perm_var.clone(), resolved);
        }
        for (p, arg) in sig.generics.iter().zip(type_args.iter()) {
            let mode = match arg {
                Type::Ref { mode, .. } => mode.clone(),
                Type::Unit => Mode::Perm(Permission::Unowned),
            };
            let resolved = resolve_mode(config, &mode)?;
            config.bind_perm(p.perm_var.clone(), resolved);
        }

        // Substitute the receiver and parameters by the fresh references.
        let mut e2 = substitute_binding(&body, "this", &Binding::Loc(fresh_this));
        let param_names: Vec<String> = sig.params.iter().map(|p| p.name.clone()).collect();
        for (pn, lf) in param_names.iter().zip(fresh_args.iter()) {
            e2 = substitute_binding(&e2, pn, &Binding::Loc(*lf));
        }

        config.active_receivers.insert(o);
        let detail = StepDetail::Invoke {
            recv: l1,
            obj: o,
            name: name.to_string(),
            type_args: type_args.to_vec(),
            arg_locs,
            fresh_this,
            fresh_args,
            private,
        };
        if private {
            Ok(Walk::Stepped(e2, "E-privInv", detail))
        } else {
            Ok(Walk::Stepped(
                Expr::new(ExprKind::ReentrancyBox { inner: Box::new(e2), obj: o }, span),
                "E-inv",
                detail,
            ))
        }
    }
}

/// Capture-aware substitution of a source variable by a machine binding.
pub fn substitute_binding(e: &Expr, var: &str, replacement: &Binding) -> Expr {
    let sub = |b: &Binding| -> Binding {
        match b {
            Binding::Var(x) if x == var => replacement.clone(),
            _ => b.clone(),
        }
    };
    let kind = match &e.kind {
        ExprKind::Simple(b) => ExprKind::Simple(sub(b)),
        ExprKind::UnitLit => ExprKind::UnitLit,
        ExprKind::Field { recv, field } => {
            ExprKind::Field { recv: sub(recv), field: field.clone() }
        }
        ExprKind::Invoke { recv, name, type_args, args } => ExprKind::Invoke {
            recv: sub(recv),
            name: name.clone(),
            type_args: type_args.clone(),
            args: args.iter().map(&sub).collect(),
        },
        ExprKind::Let { var: v, ty, bound, body } => {
            let bound2 = substitute_binding(bound, var, replacement);
            let body2 = if v == var {
                (**body).clone() // shadowed
            } else {
                substitute_binding(body, var, replacement)
            };
            ExprKind::Let {
                var: v.clone(),
                ty: ty.clone(),
                bound: Box::new(bound2),
                body: Box::new(body2),
            }
        }
        ExprKind::New { contract, type_args, state, args } => ExprKind::New {
            contract: contract.clone(),
            type_args: type_args.clone(),
            state: state.clone(),
            args: args.iter().map(&sub).collect(),
        },
        ExprKind::Transition { recv, annot, state, args } => ExprKind::Transition {
            recv: sub(recv),
            annot: *annot,
            state: state.clone(),
            args: args.iter().map(&sub).collect(),
        },
        ExprKind::FieldWrite { recv, field, src } => ExprKind::FieldWrite {
            recv: sub(recv),
            field: field.clone(),
            src: sub(src),
        },
        ExprKind::StaticAssert { subject, mode } => ExprKind::StaticAssert {
            subject: sub(subject),
            mode: mode.clone(),
        },
        ExprKind::DynamicCheck { subject, annot, tested, then_branch, else_branch } => {
            ExprKind::DynamicCheck {
                subject: sub(subject),
                annot: *annot,
                tested: tested.clone(),
                then_branch: Box::new(substitute_binding(then_branch, var, replacement)),
                else_branch: Box::new(substitute_binding(else_branch, var, replacement)),
            }
        }
        ExprKind::Disown(b) => ExprKind::Disown(sub(b)),
        ExprKind::Pack => ExprKind::Pack,
        ExprKind::StateLockBox { inner, obj } => ExprKind::StateLockBox {
            inner: Box::new(substitute_binding(inner, var, replacement)),
            obj: *obj,
        },
        ExprKind::ReentrancyBox { inner, obj } => ExprKind::ReentrancyBox {
            inner: Box::new(substitute_binding(inner, var, replacement)),
            obj: *obj,
        },
    };
    Expr { kind, span: e.span }
}

/// Runs the main expression of a checked program to a terminal outcome or
/// until the fuel budget is exhausted.
pub fn evaluate(checked: &CheckedProgram, fuel: u64, trace: bool) -> Result<EvalReport, Diagnostic> {
    let machine = Machine::new(&checked.table);
    let mut config = RuntimeConfig::new();
    let mut expr = checked.program.main.clone();
    let mut steps = 0u64;
    let mut entries: Vec<TraceEntry> = Vec::new();
    loop {
        match machine.step(&config, &expr)? {
            StepOutcome::Finished(v) => {
                return Ok(EvalReport {
                    outcome: EvalOutcome::Finished(v),
                    steps,
                    trace: trace.then_some(entries),
                    final_config: config,
                })
            }
            StepOutcome::Stuck(k) => {
                return Ok(EvalReport {
                    outcome: EvalOutcome::Stuck(k),
                    steps,
                    trace: trace.then_some(entries),
                    final_config: config,
                })
            }
            StepOutcome::Stepped { config: c2, expr: e2, rule, .. } => {
                steps += 1;
                if trace {
                    entries.push(TraceEntry {
                        step: steps,
                        rule,
                        summary: crate::render::summarize_expr(&e2, 80),
                    });
                }
                config = c2;
                expr = e2;
                if steps >= fuel {
                    return Ok(EvalReport {
                        outcome: EvalOutcome::FuelExhausted,
                        steps,
                        trace: trace.then_some(entries),
                        final_config: config,
                    });
                }
            }
        }
    }
}
