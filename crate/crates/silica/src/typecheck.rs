//! Flow-sensitive type checker: the expression judgment with input and
//! output contexts, transaction and declaration well-formedness, and
//! elaboration (annotation resolution and pack insertion).

use crate::ast::*;
use crate::diag::{codes, Diagnostic, SourceSpan};
use crate::judgments::{JErr, Judgments, SplitDemand};
use crate::table::{Decl, ProgramTable};

/// Result of checking one expression.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub result_type: Type,
    pub output_context: TypingContext,
    pub elaborated: Expr,
}

/// Result of checking a whole program.
#[derive(Debug, Clone)]
pub struct CheckedProgram {
    pub program: Program,
    pub table: ProgramTable,
}

pub struct Checker<'a> {
    pub judge: Judgments<'a>,
    pub gamma: GenericContext,
    /// Surface receiver (`this`). `None` for the main expression.
    pub this_binding: Option<Binding>,
    /// Machine view used by verified re-typing: resolves override keys to
    /// objects and identifies the receiver per reentrancy region.
    pub machine: Option<&'a RuntimeConfig>,
    /// Runtime assignments of declaration variables, used in machine mode
    /// to resolve symbolic types from generic bodies.
    pub decl_map: indexmap::IndexMap<String, ContractRef>,
    region_stack: Vec<ObjId>,
}

fn diag(err: JErr, span: SourceSpan) -> Diagnostic {
    Diagnostic::error(err.code, span, err.rule, err.message)
}

impl<'a> Checker<'a> {
    pub fn new(table: &'a ProgramTable, gamma: GenericContext, this_binding: Option<Binding>) -> Checker<'a> {
        Checker {
            judge: Judgments::new(table),
            gamma,
            this_binding,
            machine: None,
            decl_map: indexmap::IndexMap::new(),
            region_stack: Vec::new(),
        }
    }

    pub fn with_machine(
        table: &'a ProgramTable,
        gamma: GenericContext,
        machine: &'a RuntimeConfig,
        decl_map: indexmap::IndexMap<String, ContractRef>,
    ) -> Checker<'a> {
        Checker {
            judge: Judgments::new(table),
            gamma,
            this_binding: None,
            machine: Some(machine),
            decl_map,
            region_stack: Vec::new(),
        }
    }

    fn table(&self) -> &'a ProgramTable {
        self.judge.table
    }

    /// Machine mode: resolve declaration-variable heads and bound
    /// permission variables to their runtime assignments.
    fn machine_resolve(&self, t: &Type) -> Type {
        let Some(cfg) = self.machine else { return t.clone() };
        fn go(
            cfg: &RuntimeConfig,
            map: &indexmap::IndexMap<String, ContractRef>,
            t: &Type,
        ) -> Type {
            match t {
                Type::Unit => Type::Unit,
                Type::Ref { contract, mode } => {
                    let contract = match contract {
                        ContractRef::Var(x) => {
                            map.get(x).cloned().unwrap_or_else(|| contract.clone())
                        }
                        ContractRef::Concrete { name, args } => ContractRef::Concrete {
                            name: name.clone(),
                            args: args.iter().map(|a| go(cfg, map, a)).collect(),
                        },
                    };
                    let mode = match mode {
                        Mode::PermVar(p) => cfg.perm(p).cloned().unwrap_or_else(|| mode.clone()),
                        _ => mode.clone(),
                    };
                    Type::Ref { contract, mode }
                }
            }
        }
        go(cfg, &self.decl_map, t)
    }

    fn machine_resolve_mode(&self, m: &Mode) -> Mode {
        let Some(cfg) = self.machine else { return m.clone() };
        match m {
            Mode::PermVar(p) => cfg.perm(p).cloned().unwrap_or_else(|| m.clone()),
            _ => m.clone(),
        }
    }

    fn resolve_sig_machine(&self, sig: &TransactionSig) -> TransactionSig {
        TransactionSig {
            field_specs: sig.field_specs.as_ref().map(|specs| {
                specs
                    .iter()
                    .map(|s| crate::ast::FieldSpec {
                        field: s.field.clone(),
                        pre: self.machine_resolve_mode(&s.pre),
                        post: self.machine_resolve_mode(&s.post),
                    })
                    .collect()
            }),
            return_type: self.machine_resolve(&sig.return_type),
            name: sig.name.clone(),
            generics: sig.generics.clone(),
            params: sig
                .params
                .iter()
                .map(|p| crate::ast::ParamSig {
                    ty: self.machine_resolve(&p.ty),
                    post_mode: self.machine_resolve_mode(&p.post_mode),
                    name: p.name.clone(),
                    span: p.span,
                })
                .collect(),
            this_pre: self.machine_resolve_mode(&sig.this_pre),
            this_post: self.machine_resolve_mode(&sig.this_post),
            span: sig.span,
        }
    }

    /// Is `b` the receiver for field operations here?
    fn is_receiver(&self, b: &Binding) -> bool {
        if let Some(m) = self.machine {
            match self.region_stack.last() {
                Some(o) => m.object_of(b) == Some(*o),
                None => false,
            }
        } else {
            self.this_binding.as_ref() == Some(b)
        }
    }

    /// Canonical key receiver for field overrides: the resolved object in
    /// machine mode, the binding itself in surface mode.
    fn override_recv(&self, b: &Binding) -> Binding {
        if let Some(m) = self.machine {
            match m.object_of(b) {
                Some(o) => Binding::Obj(o),
                None => b.clone(),
            }
        } else {
            b.clone()
        }
    }

    /// The receiver whose overrides gate public invocations and pack.
    fn current_receiver(&self) -> Option<Binding> {
        if self.machine.is_some() {
            self.region_stack.last().map(|o| Binding::Obj(*o))
        } else {
            self.this_binding.clone()
        }
    }

    /// The receiver's current type for pack/declaration lookups.
    fn receiver_type(&self, ctx: &TypingContext) -> Option<Type> {
        if let Some(m) = self.machine {
            let o = self.region_stack.last()?;
            let h = m.heap.get(o)?;
            Some(Type::Ref {
                contract: ContractRef::Concrete { name: h.contract.clone(), args: h.type_args.clone() },
                mode: Mode::single_state(h.state.clone()),
            })
        } else {
            ctx.get(self.this_binding.as_ref()?).cloned()
        }
        .map(|t| self.machine_resolve(&t))
    }

    // ----- mode and type resolution ------------------------------------

    /// Resolves a symbolic identifier mode: a permission variable if bound
    /// in the generic context, else a state name of the governing contract.
    pub fn resolve_mode(
        &self,
        m: &Mode,
        governing: Option<&ContractRef>,
        span: SourceSpan,
    ) -> Result<Mode, Diagnostic> {
        match m {
            Mode::PermVar(id) => {
                if self.gamma.by_perm_var(id).is_some() {
                    return Ok(Mode::PermVar(id.clone()));
                }
                if let Some(head) = governing {
                    let head = self
                        .judge
                        .resolve_head(&self.gamma, head)
                        .map_err(|e| diag(e, span))?;
                    if let Some(states) = self.table().state_names(head.name()) {
                        if states.iter().any(|s| s == id) {
                            return Ok(Mode::single_state(id.clone()));
                        }
                    }
                }
                Err(Diagnostic::error(
                    codes::GEN002,
                    span,
                    "mode-resolution",
                    format!("`{id}` is neither a permission variable in scope nor a state of the governing contract"),
                ))
            }
            _ => Ok(m.clone()),
        }
    }

    /// Well-formed type: resolves symbolic modes (recursively through type
    /// arguments), validates declaration names, arity, bounds, and state
    /// names.
    pub fn wf_type(&self, t: &Type, span: SourceSpan) -> Result<Type, Diagnostic> {
        match t {
            Type::Unit => Ok(Type::Unit),
            Type::Ref { contract, mode } => {
                let contract = self.wf_head(contract, span)?;
                let mode = self.resolve_mode(mode, Some(&contract), span)?;
                if let Mode::States(ss) = &mode {
                    let head = self
                        .judge
                        .resolve_head(&self.gamma, &contract)
                        .map_err(|e| diag(e, span))?;
                    let known = self.table().state_names(head.name()).unwrap_or_default();
                    for s in ss {
                        if !known.contains(s) {
                            return Err(Diagnostic::error(
                                codes::GEN002,
                                span,
                                "T-ok",
                                format!("`{}` has no state `{s}`", head.name()),
                            ));
                        }
                    }
                }
                let t = Type::Ref { contract, mode };
                Ok(if self.machine.is_some() { self.machine_resolve(&t) } else { t })
            }
        }
    }

    fn wf_head(&self, c: &ContractRef, span: SourceSpan) -> Result<ContractRef, Diagnostic> {
        match c {
            ContractRef::Var(_) => Ok(c.clone()),
            ContractRef::Concrete { name, args } => {
                // A bare name that is a declaration variable in scope parses
                // as a zero-argument concrete head; reinterpret it.
                if args.is_empty() && self.gamma.by_decl_var(name).is_some() {
                    return Ok(ContractRef::Var(name.clone()));
                }
                if self.table().def(name).is_none() {
                    return Err(Diagnostic::error(
                        codes::GEN011,
                        span,
                        "T-ok",
                        format!("unknown declaration `{name}`"),
                    ));
                }
                let args: Vec<Type> =
                    args.iter().map(|a| self.wf_type(a, span)).collect::<Result<_, _>>()?;
                let params = self.table().params(name).unwrap_or(&[]);
                self.judge
                    .check_args_subst(&self.gamma, params, &args, name)
                    .map_err(|e| diag(e, span))?;
                Ok(ContractRef::Concrete { name: name.clone(), args })
            }
        }
    }

    // ----- machine-mode ownership rerouting ------------------------------

    fn mode_is_owning(t: &Type) -> bool {
        matches!(
            t.mode(),
            Some(Mode::States(_)) | Some(Mode::Perm(Permission::Owned)) | Some(Mode::PermVar(_))
        )
    }

    /// Machine re-typing only: if `b` lacks ownership but another binding
    /// to the same object holds it, move the owning view onto `b`. Context
    /// strength is stated up to choice of indirect reference; residual code
    /// names the original reference, so the checker re-routes.
    fn reroute_ownership(&self, ctx: &mut TypingContext, b: &Binding) -> bool {
        let Some(m) = self.machine else { return false };
        let Some(o) = m.object_of(b) else { return false };
        if ctx.get(b).map(Self::mode_is_owning).unwrap_or(false) {
            return false;
        }
        let found = ctx.iter().find_map(|(k, t)| match k {
            CtxKey::Bind(b2)
                if b2 != b && m.object_of(b2) == Some(o) && Self::mode_is_owning(t) =>
            {
                Some((b2.clone(), t.clone()))
            }
            _ => None,
        });
        let Some((b2, t2)) = found else { return false };
        let mode = t2.mode().cloned().expect("owning type is a reference");
        ctx.bind(b2, t2.with_mode(Mode::Perm(Permission::Unowned)));
        let bt = ctx.get(b).cloned().unwrap_or(t2);
        ctx.bind(b.clone(), bt.with_mode(mode));
        true
    }

    /// Machine re-typing only: demote every owned view of `b`'s object held
    /// by another binding (the scrutinee or receiver just took the owning
    /// view).
    fn demote_other_owners(&self, ctx: &mut TypingContext, b: &Binding) {
        let Some(m) = self.machine else { return };
        let Some(o) = m.object_of(b) else { return };
        let victims: Vec<Binding> = ctx
            .iter()
            .filter_map(|(k, t)| match k {
                CtxKey::Bind(b2)
                    if b2 != b && m.object_of(b2) == Some(o) && Self::mode_is_owning(t) =>
                {
                    Some(b2.clone())
                }
                _ => None,
            })
            .collect();
        for v in victims {
            let t = ctx.get(&v).cloned().expect("listed");
            ctx.bind(v, t.with_mode(Mode::Perm(Permission::Unowned)));
        }
    }

    // ----- reads ---------------------------------------------------------

    fn demand(expectation: Option<&Type>) -> SplitDemand {
        match expectation {
            Some(t) => SplitDemand::SatisfyExpected(t.clone()),
            None => SplitDemand::TransferAll,
        }
    }

    /// T-lookup: reads a binding, splitting its permission.
    fn read_simple(
        &self,
        ctx: &mut TypingContext,
        b: &Binding,
        demand: &SplitDemand,
        span: SourceSpan,
    ) -> Result<Type, Diagnostic> {
        let ty = ctx.get(b).cloned().ok_or_else(|| {
            Diagnostic::error(codes::GEN005, span, "T-lookup", format!("unbound reference `{b}`"))
        })?;
        let split = match self.judge.split(&self.gamma, &ty, demand) {
            Ok(s) => s,
            Err(first) => {
                if self.reroute_ownership(ctx, b) {
                    let ty = ctx.get(b).cloned().expect("just rerouted");
                    self.judge.split(&self.gamma, &ty, demand).map_err(|e| diag(e, span))?
                } else {
                    return Err(diag(first, span));
                }
            }
        };
        let (taken, residual) = split;
        ctx.bind(b.clone(), residual);
        Ok(taken)
    }

    /// T-this-field-def / T-this-field-ctxt: reads a field of the receiver.
    fn read_field(
        &self,
        ctx: &mut TypingContext,
        recv: &Binding,
        field: &str,
        demand: &SplitDemand,
        span: SourceSpan,
    ) -> Result<Type, Diagnostic> {
        if !self.is_receiver(recv) {
            return Err(Diagnostic::error(
                codes::GEN007,
                span,
                "T-this-field-def",
                format!("fields may only be accessed through the receiver, not `{recv}`"),
            ));
        }
        let okey = self.override_recv(recv);
        if let Some(t1) = ctx.get_override(&okey, field).cloned() {
            let (taken, residual) = self
                .judge
                .split(&self.gamma, &t1, demand)
                .map_err(|e| diag(e, span))?;
            ctx.bind_override(okey, field, residual);
            return Ok(taken);
        }
        let recv_ty = ctx.get(recv).cloned().or_else(|| self.receiver_type(ctx)).ok_or_else(|| {
            Diagnostic::error(codes::GEN005, span, "T-this-field-def", format!("unbound receiver `{recv}`"))
        })?;
        let in_all = self
            .judge
            .intersect_fields(&self.gamma, &recv_ty)
            .map_err(|e| diag(e, span))?;
        let t1 = match in_all.into_iter().find(|f| f.name == field) {
            Some(f) => self.machine_resolve(&f.ty),
            None => {
                let anywhere = self
                    .judge
                    .union_fields(&self.gamma, &recv_ty.with_mode(Mode::Perm(Permission::Unowned)))
                    .map_err(|e| diag(e, span))?
                    .into_iter()
                    .any(|f| f.name == field);
                let msg = if anywhere {
                    format!("field `{field}` is not in scope in all possible states of `{recv_ty}`")
                } else {
                    format!("`{recv_ty}` has no field `{field}`")
                };
                return Err(Diagnostic::error(codes::GEN006, span, "T-this-field-def", msg));
            }
        };
        let (taken, residual) = self
            .judge
            .split(&self.gamma, &t1, demand)
            .map_err(|e| diag(e, span))?;
        ctx.bind_override(okey, field, residual);
        Ok(taken)
    }

    /// T-pack: validates and removes the receiver's field overrides.
    fn perform_pack(
        &self,
        ctx: &mut TypingContext,
        span: SourceSpan,
    ) -> Result<(), Diagnostic> {
        let recv = self.current_receiver().ok_or_else(|| {
            Diagnostic::error(codes::GEN007, span, "T-pack", "pack requires a receiver in scope")
        })?;
        let recv_ty = self.receiver_type(ctx).ok_or_else(|| {
            Diagnostic::error(codes::GEN005, span, "T-pack", "receiver type unavailable")
        })?;
        for (f, tf) in ctx.overrides_of(&recv) {
            let declared = self
                .judge
                .field_decl_type(&self.gamma, &recv_ty, &f)
                .map_err(|e| diag(e, span))?
                .map(|t| self.machine_resolve(&t))
                .ok_or_else(|| {
                    Diagnostic::error(
                        codes::PACK001,
                        span,
                        "T-pack",
                        format!("override for unknown field `{f}`"),
                    )
                })?;
            let ok = self
                .judge
                .subtype(&self.gamma, &tf, &declared)
                .map_err(|e| diag(e, span))?
                && self
                    .judge
                    .same_ownership(&self.gamma, &tf, &declared)
                    .map_err(|e| diag(e, span))?;
            if !ok {
                return Err(Diagnostic::error(
                    codes::PACK001,
                    span,
                    "T-pack",
                    format!("field `{f}` has type `{tf}`, inconsistent with its declaration `{declared}`"),
                ));
            }
        }
        ctx.take_overrides_of(&recv);
        Ok(())
    }

    /// Whether the receiver's outstanding overrides are all consistent with
    /// their declarations (i.e. whether an automatic pack is possible).
    fn can_pack(&self, ctx: &TypingContext) -> bool {
        let Some(recv) = self.current_receiver() else { return false };
        let Some(recv_ty) = self.receiver_type(ctx) else { return false };
        for (f, tf) in ctx.overrides_of(&recv) {
            let Ok(Some(declared)) = self.judge.field_decl_type(&self.gamma, &recv_ty, &f) else {
                return false;
            };
            let declared = self.machine_resolve(&declared);
            let sub = self.judge.subtype(&self.gamma, &tf, &declared).unwrap_or(false);
            let own = self.judge.same_ownership(&self.gamma, &tf, &declared).unwrap_or(false);
            if !sub || !own {
                return false;
            }
        }
        true
    }

    fn has_overrides(&self, ctx: &TypingContext) -> bool {
        match self.current_receiver() {
            Some(recv) => !ctx.overrides_of(&recv).is_empty(),
            None => false,
        }
    }

    // ----- the expression judgment ------------------------------------------

    /// Checks `e` under `ctx`, threading the context through. `expectation`
    /// is the expected type at this position (a let annotation or the
    /// declared return type); reads in expectation positions split with
    /// SatisfyExpected, all others with TransferAll.
    pub fn check(
        &mut self,
        ctx: &mut TypingContext,
        e: &Expr,
        expectation: Option<&Type>,
    ) -> Result<(Type, Expr), Diagnostic> {
        let span = e.span;
        match &e.kind {
            ExprKind::UnitLit => Ok((Type::Unit, e.clone())),

            ExprKind::Simple(b) => {
                let t = self.read_simple(ctx, b, &Self::demand(expectation), span)?;
                Ok((t, e.clone()))
            }

            ExprKind::Field { recv, field } => {
                let t = self.read_field(ctx, recv, field, &Self::demand(expectation), span)?;
                Ok((t, e.clone()))
            }

            ExprKind::Let { var, ty, bound, body } => {
                if var == "this" {
                    return Err(Diagnostic::error(
                        codes::SYN001,
                        span,
                        "T-let",
                        "`this` cannot be rebound",
                    ));
                }
                let ann = self.wf_type(ty, span)?;
                let (t1, bound_elab) = self.check(ctx, bound, Some(&ann))?;
                let sub = self.judge.subtype(&self.gamma, &t1, &ann).map_err(|e| diag(e, span))?;
                let own = self
                    .judge
                    .same_ownership(&self.gamma, &t1, &ann)
                    .map_err(|e| diag(e, span))?;
                if !(sub && own) {
                    let nd = !self.judge.disposable(&self.gamma, &t1).map_err(|e| diag(e, span))?;
                    let (code, msg) = if sub && nd {
                        (codes::ASSET001, format!("binding `{var}: {ann}` would drop ownership of asset value of type `{t1}`"))
                    } else {
                        (codes::TYPE001, format!("initializer has type `{t1}`, incompatible with annotation `{ann}`"))
                    };
                    return Err(Diagnostic::error(code, bound.span, "T-let", msg));
                }
                let vb = Binding::Var(var.clone());
                if let Some(prev) = ctx.get(&vb) {
                    let prev = prev.clone();
                    if !self.judge.disposable(&self.gamma, &prev).map_err(|e| diag(e, span))? {
                        return Err(Diagnostic::error(
                            codes::ASSET001,
                            span,
                            "T-let",
                            format!("shadowing `{var}` would drop owned asset of type `{prev}`"),
                        ));
                    }
                }
                ctx.bind(vb.clone(), ann.clone());
                let (t2, body_elab) = self.check(ctx, body, expectation)?;
                if let Some(tf) = ctx.get(&vb).cloned() {
                    if !self.judge.disposable(&self.gamma, &tf).map_err(|e| diag(e, span))? {
                        return Err(Diagnostic::error(
                            codes::ASSET001,
                            body.span,
                            "T-let",
                            format!("`{var}` still owns asset of type `{tf}` at the end of its scope"),
                        ));
                    }
                    ctx.remove(&vb);
                }
                Ok((
                    t2,
                    Expr::new(
                        ExprKind::Let {
                            var: var.clone(),
                            ty: ann,
                            bound: Box::new(bound_elab),
                            body: Box::new(body_elab),
                        },
                        span,
                    ),
                ))
            }

            ExprKind::New { contract, type_args, state, args } => {
                match self.table().def(contract) {
                    Some(Decl::Contract(_)) => {}
                    Some(Decl::Interface(_)) => {
                        return Err(Diagnostic::error(
                            codes::GEN011,
                            span,
                            "T-new",
                            format!("`{contract}` is an interface and cannot be instantiated"),
                        ))
                    }
                    None => {
                        return Err(Diagnostic::error(
                            codes::GEN011,
                            span,
                            "T-new",
                            format!("unknown contract `{contract}`"),
                        ))
                    }
                }
                let type_args: Vec<Type> = type_args
                    .iter()
                    .map(|t| self.wf_type(t, span))
                    .collect::<Result<_, _>>()?;
                let params = self.table().params(contract).unwrap_or(&[]);
                self.judge
                    .check_args_subst(&self.gamma, params, &type_args, contract)
                    .map_err(|e| diag(e, span))?;
                let head = ContractRef::Concrete { name: contract.clone(), args: type_args.clone() };
                if self.table().sdef(contract, state).is_none() {
                    return Err(Diagnostic::error(
                        codes::GEN002,
                        span,
                        "T-new",
                        format!("`{contract}` has no state `{state}`"),
                    ));
                }
                let fields = self
                    .judge
                    .state_fields(&self.gamma, &head, state)
                    .map_err(|e| diag(e, span))?;
                if fields.len() != args.len() {
                    return Err(Diagnostic::error(
                        codes::GEN008,
                        span,
                        "T-new",
                        format!(
                            "state `{state}` of `{contract}` has {} field(s), got {} argument(s)",
                            fields.len(),
                            args.len()
                        ),
                    ));
                }
                for (a, f) in args.iter().zip(fields.iter()) {
                    let want = self.machine_resolve(&f.ty);
                    self.read_simple(ctx, a, &SplitDemand::SatisfyExpected(want), span)?;
                }
                Ok((
                    Type::Ref { contract: head, mode: Mode::single_state(state.clone()) },
                    Expr::new(
                        ExprKind::New {
                            contract: contract.clone(),
                            type_args,
                            state: state.clone(),
                            args: args.clone(),
                        },
                        span,
                    ),
                ))
            }

            ExprKind::Invoke { .. } => self.check_invoke(ctx, e, span),

            ExprKind::Transition { recv, annot, state, args } => {
                if self.machine.is_some() && *annot == TransitionAnnot::Owned {
                    self.reroute_ownership(ctx, recv);
                }
                self.check_transition(ctx, recv, state, args, span)
            }

            ExprKind::FieldWrite { recv, field, src } => {
                let old = self.read_field(ctx, recv, field, &SplitDemand::TransferAll, span)?;
                if !self.judge.disposable(&self.gamma, &old).map_err(|e| diag(e, span))? {
                    return Err(Diagnostic::error(
                        codes::ASSET002,
                        span,
                        "T-fieldUpdate",
                        format!("field `{field}` holds non-disposable `{old}`; it cannot be overwritten"),
                    ));
                }
                let src_t = self.read_simple(ctx, src, &SplitDemand::TransferAll, span)?;
                match (old.contract(), src_t.contract()) {
                    (Some(a), Some(b)) if a == b => {}
                    _ => {
                        return Err(Diagnostic::error(
                            codes::TYPE001,
                            span,
                            "T-fieldUpdate",
                            format!(
                                "field `{field}` has contract `{}` but the source has type `{src_t}` (fields cannot change class)",
                                old
                            ),
                        ))
                    }
                }
                let okey = self.override_recv(recv);
                ctx.bind_override(okey, field.clone(), src_t);
                Ok((Type::Unit, e.clone()))
            }

            ExprKind::StaticAssert { subject, mode } => {
                if self.machine.is_some() {
                    self.reroute_ownership(ctx, subject);
                }
                let sub_ty = ctx.get(subject).cloned().ok_or_else(|| {
                    Diagnostic::error(codes::GEN005, span, "T-assertStates", format!("unbound reference `{subject}`"))
                })?;
                let Type::Ref { contract, mode: have } = &sub_ty else {
                    return Err(Diagnostic::error(
                        codes::ASSERT001,
                        span,
                        "T-assertPermission",
                        "cannot assert a mode of a unit value",
                    ));
                };
                let asserted = self.resolve_mode(mode, Some(contract), span)?;
                self.check_assert(have, &asserted, span)?;
                Ok((
                    Type::Unit,
                    Expr::new(
                        ExprKind::StaticAssert { subject: subject.clone(), mode: asserted },
                        span,
                    ),
                ))
            }

            ExprKind::DynamicCheck { .. } => self.check_dynamic(ctx, e, expectation, span),

            ExprKind::Disown(b) => {
                if self.machine.is_some() {
                    self.reroute_ownership(ctx, b);
                }
                let ty = ctx.get(b).cloned().ok_or_else(|| {
                    Diagnostic::error(codes::GEN005, span, "T-disown", format!("unbound reference `{b}`"))
                })?;
                let Type::Ref { mode, .. } = &ty else {
                    return Err(Diagnostic::error(
                        codes::DSN001,
                        span,
                        "T-disown",
                        "cannot disown a unit value",
                    ));
                };
                let owned = self
                    .judge
                    .subpermission(&self.gamma, mode, &Mode::Perm(Permission::Owned))
                    .map_err(|e| diag(e, span))?;
                if !owned {
                    return Err(Diagnostic::error(
                        codes::DSN001,
                        span,
                        "T-disown",
                        format!("`{b}` has mode `{mode}`, which does not convey ownership"),
                    ));
                }
                ctx.bind(b.clone(), ty.with_mode(Mode::Perm(Permission::Unowned)));
                Ok((Type::Unit, e.clone()))
            }

            ExprKind::Pack => {
                self.perform_pack(ctx, span)?;
                Ok((Type::Unit, e.clone()))
            }

            ExprKind::StateLockBox { inner, obj } => {
                let (t, inner_elab) = self.check(ctx, inner, expectation)?;
                Ok((
                    t,
                    Expr::new(ExprKind::StateLockBox { inner: Box::new(inner_elab), obj: *obj }, span),
                ))
            }

            ExprKind::ReentrancyBox { inner, obj } => {
                self.region_stack.push(*obj);
                let r = self.check(ctx, inner, expectation);
                self.region_stack.pop();
                let (t, inner_elab) = r?;
                Ok((
                    t,
                    Expr::new(
                        ExprKind::ReentrancyBox { inner: Box::new(inner_elab), obj: *obj },
                        span,
                    ),
                ))
            }
        }
    }

    fn check_assert(&self, have: &Mode, asserted: &Mode, span: SourceSpan) -> Result<(), Diagnostic> {
        match asserted {
            Mode::States(want) => match have {
                Mode::States(s) if s.iter().all(|x| want.contains(x)) => Ok(()),
                _ => Err(Diagnostic::error(
                    codes::ASSERT001,
                    span,
                    "T-assertStates",
                    format!("reference has mode `{have}`, assertion requires `{asserted}`"),
                )),
            },
            Mode::Perm(_) => {
                if have == asserted {
                    Ok(())
                } else {
                    Err(Diagnostic::error(
                        codes::ASSERT001,
                        span,
                        "T-assertPermission",
                        format!("reference has mode `{have}`, assertion requires exactly `{asserted}`"),
                    ))
                }
            }
            Mode::PermVar(p) => {
                if have == asserted {
                    return Ok(()); // T-assertInVarAlready
                }
                let bound = self
                    .judge
                    .bound_mode(&self.gamma, &Mode::PermVar(p.clone()))
                    .map_err(|e| diag(e, span))?;
                self.check_assert(have, &bound, span).map_err(|mut d| {
                    d.rule = "T-assertInVar";
                    d
                })
            }
        }
    }

    fn check_invoke(
        &mut self,
        ctx: &mut TypingContext,
        e: &Expr,
        span: SourceSpan,
    ) -> Result<(Type, Expr), Diagnostic> {
        let ExprKind::Invoke { recv, name, type_args, args } = &e.kind else { unreachable!() };

        // Pairwise distinct references: the context pattern of T-inv cannot
        // bind one variable twice.
        let mut seen: Vec<&Binding> = vec![recv];
        for a in args {
            if seen.contains(&a) {
                return Err(Diagnostic::error(
                    codes::ARG002,
                    span,
                    "T-inv",
                    format!("reference `{a}` occurs more than once in the invocation"),
                ));
            }
            seen.push(a);
        }

        let recv_ty = ctx.get(recv).cloned().ok_or_else(|| {
            Diagnostic::error(codes::GEN005, span, "T-inv", format!("unbound reference `{recv}`"))
        })?;
        let bound_ty = self.judge.bound_type(&self.gamma, &recv_ty).map_err(|e| diag(e, span))?;
        let Type::Ref { contract: bound_head, mode: bound_mode } = &bound_ty else {
            return Err(Diagnostic::error(
                codes::TXN001,
                span,
                "T-inv",
                "unit has no transactions",
            ));
        };
        let type_args: Vec<Type> = type_args
            .iter()
            .map(|t| self.wf_type(t, span))
            .collect::<Result<_, _>>()?;
        let (sig, _) = self
            .judge
            .lookup_transaction(&self.gamma, bound_head, name, &type_args)
            .map_err(|e| diag(e, span))?;
        let sig = if self.machine.is_some() { self.resolve_sig_machine(&sig) } else { sig };

        let private = sig.visibility() == Visibility::Private;
        let mut pack_before = false;
        if private {
            if !self.is_receiver(recv) {
                return Err(Diagnostic::error(
                    codes::GEN009,
                    span,
                    "T-privInv",
                    format!("private transaction `{name}` may only be invoked on the receiver"),
                ));
            }
        } else if self.has_overrides(ctx) {
            // Public invocations require the receiver's fields to be
            // consistent; insert the pack the compiler owes the programmer.
            if self.can_pack(ctx) {
                self.perform_pack(ctx, span)?;
                pack_before = true;
            } else {
                return Err(Diagnostic::error(
                    codes::PUB001,
                    span,
                    "T-inv",
                    format!(
                        "public invocation of `{name}` while field overrides are outstanding and inconsistent with their declarations"
                    ),
                ));
            }
        }

        let mut bound_mode = bound_mode.clone();
        let mut recv_ty = recv_ty;
        let mut pre_ok = self
            .judge
            .subpermission(&self.gamma, &bound_mode, &sig.this_pre)
            .map_err(|e| diag(e, span))?;
        if !pre_ok && self.machine.is_some() && self.reroute_ownership(ctx, recv) {
            recv_ty = ctx.get(recv).cloned().expect("just rerouted");
            let b2 = self.judge.bound_type(&self.gamma, &recv_ty).map_err(|e| diag(e, span))?;
            bound_mode = b2.mode().cloned().unwrap_or(bound_mode);
            pre_ok = self
                .judge
                .subpermission(&self.gamma, &bound_mode, &sig.this_pre)
                .map_err(|e| diag(e, span))?;
        }
        if !pre_ok {
            return Err(Diagnostic::error(
                codes::STATE001,
                span,
                if private { "T-privInv" } else { "T-inv" },
                format!(
                    "receiver has mode `{bound_mode}`, below the precondition `{}` of `{name}`",
                    sig.this_pre
                ),
            ));
        }

        if args.len() != sig.params.len() {
            return Err(Diagnostic::error(
                codes::GEN008,
                span,
                "T-inv",
                format!("`{name}` expects {} argument(s), got {}", sig.params.len(), args.len()),
            ));
        }
        let mut arg_updates: Vec<(Binding, Type)> = Vec::new();
        for (a, p) in args.iter().zip(sig.params.iter()) {
            let at = ctx.get(a).cloned().ok_or_else(|| {
                Diagnostic::error(codes::GEN005, span, "T-inv", format!("unbound reference `{a}`"))
            })?;
            let ok = self.judge.subtype(&self.gamma, &at, &p.ty).map_err(|e| diag(e, span))?;
            if !ok {
                return Err(Diagnostic::error(
                    codes::TYPE001,
                    span,
                    "T-inv",
                    format!("argument `{a}` has type `{at}`, expected `{}` for parameter `{}`", p.ty, p.name),
                ));
            }
            let declared_in = p.ty.mode().cloned().unwrap_or(Mode::Perm(Permission::Unowned));
            arg_updates.push((a.clone(), self.judge.func_arg(&at, &declared_in, &p.post_mode)));
        }

        // Private invocations additionally thread the receiver's field
        // pre/post specifications.
        let mut field_updates: Vec<(String, Type)> = Vec::new();
        if let Some(specs) = &sig.field_specs {
            let okey = self.override_recv(recv);
            let recv_view = self.receiver_type(ctx).unwrap_or_else(|| recv_ty.clone());
            for spec in specs {
                let declared = self
                    .judge
                    .field_decl_type(&self.gamma, &recv_view, &spec.field)
                    .map_err(|e| diag(e, span))?
                    .map(|t| self.machine_resolve(&t))
                    .ok_or_else(|| {
                        Diagnostic::error(
                            codes::GEN006,
                            span,
                            "T-privInv",
                            format!("`{name}` specifies unknown field `{}`", spec.field),
                        )
                    })?;
                let current = ctx
                    .get_override(&okey, &spec.field)
                    .cloned()
                    .unwrap_or_else(|| declared.clone());
                let want = declared.with_mode(spec.pre.clone());
                let ok = self.judge.subtype(&self.gamma, &current, &want).map_err(|e| diag(e, span))?;
                if !ok {
                    return Err(Diagnostic::error(
                        codes::PRIV001,
                        span,
                        "T-privInv",
                        format!(
                            "field `{}` has type `{current}`, below the precondition `{want}` of `{name}`",
                            spec.field
                        ),
                    ));
                }
                let after = self.judge.func_arg(&current, &spec.pre, &spec.post);
                field_updates.push((spec.field.clone(), after));
            }
            for (f, t) in field_updates {
                ctx.bind_override(okey.clone(), f, t);
            }
        }

        // funcArg on the receiver, at its original head with the bound mode.
        let recv_passed = recv_ty.with_mode(bound_mode.clone());
        let recv_after = self.judge.func_arg(&recv_passed, &sig.this_pre, &sig.this_post);
        ctx.bind(recv.clone(), recv_after);
        for (a, t) in arg_updates {
            ctx.bind(a, t);
        }

        let invoke = Expr::new(
            ExprKind::Invoke {
                recv: recv.clone(),
                name: name.clone(),
                type_args,
                args: args.clone(),
            },
            span,
        );
        let elaborated = if pack_before {
            Expr::new(
                ExprKind::Let {
                    var: "_packed".into(),
                    ty: Type::Unit,
                    bound: Box::new(Expr::new(ExprKind::Pack, span)),
                    body: Box::new(invoke),
                },
                span,
            )
        } else {
            invoke
        };
        Ok((sig.return_type.clone(), elaborated))
    }

    fn check_transition(
        &mut self,
        ctx: &mut TypingContext,
        recv: &Binding,
        state: &str,
        args: &[Binding],
        span: SourceSpan,
    ) -> Result<(Type, Expr), Diagnostic> {
        let recv_ty = ctx.get(recv).cloned().ok_or_else(|| {
            Diagnostic::error(codes::GEN005, span, "T-transition", format!("unbound reference `{recv}`"))
        })?;
        let Type::Ref { contract, mode } = &recv_ty else {
            return Err(Diagnostic::error(
                codes::STATE003,
                span,
                "T-transition",
                "cannot transition a unit value",
            ));
        };
        let ContractRef::Concrete { name: cname, .. } = contract else {
            return Err(Diagnostic::error(
                codes::STATE003,
                span,
                "T-transition",
                "cannot transition a reference whose contract is a declaration variable",
            ));
        };
        if !matches!(self.table().def(cname), Some(Decl::Contract(_))) {
            return Err(Diagnostic::error(
                codes::STATE003,
                span,
                "T-transition",
                format!("`{cname}` is not a contract"),
            ));
        }
        let annot = if self
            .judge
            .subpermission(&self.gamma, mode, &Mode::Perm(Permission::Owned))
            .map_err(|e| diag(e, span))?
            || mode.is_var()
        {
            TransitionAnnot::Owned
        } else if self
            .judge
            .subpermission(&self.gamma, mode, &Mode::Perm(Permission::Shared))
            .map_err(|e| diag(e, span))?
        {
            TransitionAnnot::Shared
        } else {
            return Err(Diagnostic::error(
                codes::STATE003,
                span,
                "T-transition",
                format!("receiver mode `{mode}` permits no transition (owned or shared required)"),
            ));
        };
        if self.table().sdef(cname, state).is_none() {
            return Err(Diagnostic::error(
                codes::GEN002,
                span,
                "T-transition",
                format!("`{cname}` has no state `{state}`"),
            ));
        }
        let targets = self
            .judge
            .state_fields(&self.gamma, contract, state)
            .map_err(|e| diag(e, span))?;
        if targets.len() != args.len() {
            return Err(Diagnostic::error(
                codes::GEN008,
                span,
                "T-transition",
                format!(
                    "state `{state}` has {} field(s), got {} argument(s)",
                    targets.len(),
                    args.len()
                ),
            ));
        }
        for (a, f) in args.iter().zip(targets.iter()) {
            let want = self.machine_resolve(&f.ty);
            self.read_simple(ctx, a, &SplitDemand::SatisfyExpected(want), span)?;
        }
        // Every field the object may currently have must be disposable.
        let okey = self.override_recv(recv);
        let current_fields = self
            .judge
            .union_fields(&self.gamma, &recv_ty)
            .map_err(|e| diag(e, span))?;
        for f in &current_fields {
            let cur = ctx
                .get_override(&okey, &f.name)
                .cloned()
                .unwrap_or_else(|| self.machine_resolve(&f.ty));
            if !self.judge.disposable(&self.gamma, &cur).map_err(|e| diag(e, span))? {
                return Err(Diagnostic::error(
                    codes::STATE002,
                    span,
                    "T-transition",
                    format!(
                        "transition would drop field `{}` of type `{cur}`; empty it first",
                        f.name
                    ),
                ));
            }
        }
        // The transition installs fresh field values; stale overrides die
        // with the old state.
        ctx.take_overrides_of(&okey);
        // An owning receiver tracks the new state; a shared receiver stays
        // shared (other shared aliases could move the object again).
        let out_mode = match annot {
            TransitionAnnot::Shared => Mode::Perm(Permission::Shared),
            _ => Mode::single_state(state.to_string()),
        };
        ctx.bind(recv.clone(), recv_ty.with_mode(out_mode));
        Ok((
            Type::Unit,
            Expr::new(
                ExprKind::Transition {
                    recv: recv.clone(),
                    annot,
                    state: state.to_string(),
                    args: args.to_vec(),
                },
                span,
            ),
        ))
    }

    /// Best-effort elaboration of a statically-dead branch: checked on a
    /// forked context with diagnostics discarded.
    fn check_forked(&mut self, ctx: &TypingContext, e: &Expr, expectation: Option<&Type>) -> Expr {
        let mut fork = ctx.clone();
        match self.check(&mut fork, e, expectation) {
            Ok((_, elab)) => elab,
            Err(_) => e.clone(),
        }
    }

    fn check_dynamic(
        &mut self,
        ctx: &mut TypingContext,
        e: &Expr,
        expectation: Option<&Type>,
        span: SourceSpan,
    ) -> Result<(Type, Expr), Diagnostic> {
        let ExprKind::DynamicCheck { subject, annot, tested, then_branch, else_branch } = &e.kind
        else {
            unreachable!()
        };
        let stored_annot = *annot;
        let sub_ty = ctx.get(subject).cloned().ok_or_else(|| {
            Diagnostic::error(codes::GEN005, span, "T-IsIn", format!("unbound reference `{subject}`"))
        })?;
        let Type::Ref { contract, mode: scrut_mode } = &sub_ty else {
            return Err(Diagnostic::error(
                codes::TYPE001,
                span,
                "T-IsIn",
                "cannot state-test a unit value",
            ));
        };
        let tested = self.resolve_mode(tested, Some(contract), span)?;

        let rebuild = |annot: CheckAnnot, tested: Mode, t1: Expr, t2: Expr| {
            Expr::new(
                ExprKind::DynamicCheck {
                    subject: subject.clone(),
                    annot,
                    tested,
                    then_branch: Box::new(t1),
                    else_branch: Box::new(t2),
                },
                span,
            )
        };

        match &tested {
            Mode::States(wanted) => {
                let head = self
                    .judge
                    .resolve_head(&self.gamma, contract)
                    .map_err(|e| diag(e, span))?;
                let known = self.table().state_names(head.name()).unwrap_or_default();
                for s in wanted {
                    if !known.contains(s) {
                        return Err(Diagnostic::error(
                            codes::GEN002,
                            span,
                            "T-IsIn",
                            format!("`{}` has no state `{s}`", head.name()),
                        ));
                    }
                }
                // Machine re-typing dispatches by the elaborated annotation:
                // the scrutinee's shadow mode can be a residual while the
                // owning view lives in another reference.
                let class_mode = if self.machine.is_some() && stored_annot != CheckAnnot::Unresolved
                {
                    match stored_annot {
                        CheckAnnot::Owned | CheckAnnot::Perm(Permission::Owned) => {
                            Mode::Perm(Permission::Owned)
                        }
                        CheckAnnot::Shared | CheckAnnot::Perm(Permission::Shared) => {
                            Mode::Perm(Permission::Shared)
                        }
                        CheckAnnot::Unowned | CheckAnnot::Perm(Permission::Unowned) => {
                            Mode::Perm(Permission::Unowned)
                        }
                        CheckAnnot::Unresolved => unreachable!(),
                    }
                } else {
                    self.judge
                        .bound_mode(&self.gamma, scrut_mode)
                        .map_err(|e| diag(e, span))?
                };
                match class_mode {
                    Mode::States(_) | Mode::Perm(Permission::Owned) => self
                        .check_dsc_owned(
                            ctx, subject, &sub_ty, wanted, then_branch, else_branch, expectation,
                            span,
                        )
                        .map(|(t, e1, e2)| {
                            (t, rebuild(CheckAnnot::Owned, tested.clone(), e1, e2))
                        }),
                    Mode::Perm(Permission::Shared) => self
                        .check_dsc_shared(
                            ctx, subject, &sub_ty, wanted, then_branch, else_branch, expectation,
                            span,
                        )
                        .map(|(t, e1, e2)| {
                            (t, rebuild(CheckAnnot::Shared, tested.clone(), e1, e2))
                        }),
                    Mode::Perm(Permission::Unowned) => {
                        // The then branch is statically dead: the dynamic
                        // rule always takes else.
                        let mut dead_ctx = ctx.clone();
                        dead_ctx.bind(
                            subject.clone(),
                            sub_ty.with_mode(Mode::States(wanted.clone())),
                        );
                        let e1 = self.check_forked(&dead_ctx, then_branch, expectation);
                        let (t2, e2) = self.check(ctx, else_branch, expectation)?;
                        Ok((t2, rebuild(CheckAnnot::Unowned, tested.clone(), e1, e2)))
                    }
                    Mode::PermVar(_) => unreachable!("bound_mode returns non-variables"),
                }
            }
            Mode::Perm(p) => {
                let annot_perm = match stored_annot {
                    CheckAnnot::Perm(q) if self.machine.is_some() => q,
                    CheckAnnot::Owned if self.machine.is_some() => Permission::Owned,
                    CheckAnnot::Shared if self.machine.is_some() => Permission::Shared,
                    CheckAnnot::Unowned if self.machine.is_some() => Permission::Unowned,
                    _ => self.judge.to_permission(scrut_mode),
                };
                let taken_then = self
                    .judge
                    .subpermission(
                        &GenericContext::new(),
                        &Mode::Perm(annot_perm),
                        &Mode::Perm(*p),
                    )
                    .map_err(|e| diag(e, span))?;
                if self.machine.is_some() && annot_perm == Permission::Owned {
                    self.reroute_ownership(ctx, subject);
                }
                if taken_then {
                    let (t1, e1) = self.check(ctx, then_branch, expectation)?;
                    let e2 = self.check_forked(ctx, else_branch, expectation);
                    Ok((t1, rebuild(CheckAnnot::Perm(annot_perm), tested.clone(), e1, e2)))
                } else {
                    let e1 = self.check_forked(ctx, then_branch, expectation);
                    let (t2, e2) = self.check(ctx, else_branch, expectation)?;
                    Ok((t2, rebuild(CheckAnnot::Perm(annot_perm), tested.clone(), e1, e2)))
                }
            }
            Mode::PermVar(p) => {
                if self.gamma.by_perm_var(p).is_none() {
                    return Err(Diagnostic::error(
                        codes::GEN001,
                        span,
                        "T-IsIn-PermVar",
                        format!("unknown permission variable `{p}`"),
                    ));
                }
                let annot_perm = self.judge.to_permission(scrut_mode);
                let mut ctx1 = ctx.clone();
                // At machine re-typing the permission environment fixes the
                // variable's denotation; surface checking keeps it symbolic.
                let granted = self.machine_resolve_mode(&Mode::PermVar(p.clone()));
                ctx1.bind(subject.clone(), sub_ty.with_mode(granted));
                let (t1, e1) = self.check(&mut ctx1, then_branch, expectation)?;
                let mut ctx2 = ctx.clone();
                let (t2, e2) = self.check(&mut ctx2, else_branch, expectation)?;
                let result = self.join_results(&t1, &t2, span)?;
                let merged = self
                    .judge
                    .merge(&self.gamma, &ctx1, &ctx2)
                    .map_err(|e| diag(e, span))?;
                *ctx = merged;
                Ok((result, rebuild(CheckAnnot::Perm(annot_perm), tested.clone(), e1, e2)))
            }
        }
    }

    fn join_results(&self, t1: &Type, t2: &Type, span: SourceSpan) -> Result<Type, Diagnostic> {
        if t1 == t2 {
            return Ok(t1.clone());
        }
        self.judge.oplus(t1, t2).ok_or_else(|| {
            Diagnostic::error(
                codes::MRG002,
                span,
                "merge",
                format!("branches produce incompatible types `{t1}` and `{t2}`"),
            )
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn check_dsc_owned(
        &mut self,
        ctx: &mut TypingContext,
        subject: &Binding,
        sub_ty: &Type,
        wanted: &[String],
        then_branch: &Expr,
        else_branch: &Expr,
        expectation: Option<&Type>,
        span: SourceSpan,
    ) -> Result<(Type, Expr, Expr), Diagnostic> {
        let possible = self
            .judge
            .possible_states(&self.gamma, sub_ty)
            .map_err(|e| diag(e, span))?;
        let mut ctx1 = ctx.clone();
        ctx1.bind(subject.clone(), sub_ty.with_mode(Mode::States(wanted.to_vec())));
        self.demote_other_owners(&mut ctx1, subject);
        let (t1, e1) = self.check(&mut ctx1, then_branch, expectation)?;

        let mut remainder: Vec<String> =
            possible.iter().filter(|s| !wanted.contains(s)).cloned().collect();
        if remainder.is_empty() {
            // The else branch is statically dead; check it under the full
            // state set rather than an ill-formed empty one.
            remainder = possible.clone();
        }
        let mut ctx2 = ctx.clone();
        ctx2.bind(subject.clone(), sub_ty.with_mode(Mode::States(remainder)));
        self.demote_other_owners(&mut ctx2, subject);
        let (t2, e2) = self.check(&mut ctx2, else_branch, expectation)?;

        let result = self.join_results(&t1, &t2, span)?;
        let merged = self.judge.merge(&self.gamma, &ctx1, &ctx2).map_err(|e| diag(e, span))?;
        *ctx = merged;
        Ok((result, e1, e2))
    }

    #[allow(clippy::too_many_arguments)]
    fn check_dsc_shared(
        &mut self,
        ctx: &mut TypingContext,
        subject: &Binding,
        sub_ty: &Type,
        wanted: &[String],
        then_branch: &Expr,
        else_branch: &Expr,
        expectation: Option<&Type>,
        span: SourceSpan,
    ) -> Result<(Type, Expr, Expr), Diagnostic> {
        let shared = sub_ty.with_mode(Mode::Perm(Permission::Shared));
        // Then branch: the check grants a temporary state-bearing reference.
        let mut ctx1 = ctx.clone();
        ctx1.bind(subject.clone(), sub_ty.with_mode(Mode::States(wanted.to_vec())));
        let (t1, e1) = self.check(&mut ctx1, then_branch, expectation)?;
        let after = ctx1.get(subject).cloned().ok_or_else(|| {
            Diagnostic::error(
                codes::DSC001,
                span,
                "T-IsIn-Dynamic",
                format!("`{subject}` must survive the locked branch"),
            )
        })?;
        let after_mode = after.mode().cloned().unwrap_or(Mode::Perm(Permission::Unowned));
        let after_bound = self
            .judge
            .bound_mode(&self.gamma, &after_mode)
            .map_err(|e| diag(e, span))?;
        if after_bound == Mode::Perm(Permission::Unowned) {
            return Err(Diagnostic::error(
                codes::DSC001,
                span,
                "T-IsIn-Dynamic",
                format!("the locked branch must not surrender ownership of `{subject}` (ends at `{after}`)"),
            ));
        }
        ctx1.remove(subject);

        // Else branch: the reference stays shared.
        let mut ctx2 = ctx.clone();
        ctx2.bind(subject.clone(), shared.clone());
        let (t2, e2) = self.check(&mut ctx2, else_branch, expectation)?;
        let after2 = ctx2.get(subject).cloned();
        if after2.as_ref().and_then(|t| t.mode()) != Some(&Mode::Perm(Permission::Shared)) {
            return Err(Diagnostic::error(
                codes::DSC001,
                span,
                "T-IsIn-Dynamic",
                format!("`{subject}` must remain shared in the else branch"),
            ));
        }
        ctx2.remove(subject);

        let result = self.join_results(&t1, &t2, span)?;
        let mut merged = self.judge.merge(&self.gamma, &ctx1, &ctx2).map_err(|e| diag(e, span))?;
        merged.bind(subject.clone(), shared);
        *ctx = merged;
        Ok((result, e1, e2))
    }
}

// ---------------------------------------------------------------------------
// Declaration checking
// ---------------------------------------------------------------------------

/// Checks a parsed program: resolves symbolic modes in declarations, checks
/// every well-formedness rule and every transaction body, and returns the
/// elaborated program (annotations resolved, packs inserted).
pub fn check_declarations(program: &Program) -> Result<CheckedProgram, Vec<Diagnostic>> {
    let raw_table = ProgramTable::build(program);
    let mut diags: Vec<Diagnostic> = Vec::new();

    // Phase 1: resolve symbolic modes in all declaration signatures.
    let mut resolved = program.clone();
    for iface in &mut resolved.interfaces {
        resolve_interface(&raw_table, iface, &mut diags);
    }
    for c in &mut resolved.contracts {
        resolve_contract(&raw_table, c, &mut diags);
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let table = ProgramTable::build(&resolved);

    // Phase 2: declaration-level well-formedness.
    for iface in &resolved.interfaces {
        wf_interface(&table, iface, &mut diags);
    }
    for c in &resolved.contracts {
        wf_contract(&table, c, &mut diags);
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    // Phase 3: transaction bodies and the main expression.
    let mut elaborated = resolved.clone();
    for c in &mut elaborated.contracts {
        let states = c.states.clone();
        let generics = c.generics.clone();
        let name = c.name.clone();
        for t in &mut c.transactions {
            match check_transaction_body(&table, &name, &generics, &states, t) {
                Ok(body) => t.body = body,
                Err(d) => diags.push(d),
            }
        }
    }
    {
        let mut checker = Checker::new(&table, GenericContext::new(), None);
        let mut ctx = TypingContext::new();
        match checker.check(&mut ctx, &resolved.main, None) {
            Ok((_, main_elab)) => elaborated.main = main_elab,
            Err(d) => diags.push(d),
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let table = ProgramTable::build(&elaborated);
    Ok(CheckedProgram { program: elaborated, table })
}

fn gamma_of(params: &[GenericParam]) -> GenericContext {
    let mut g = GenericContext::new();
    g.extend(params.iter().cloned());
    g
}

fn resolve_mode_decl(
    table: &ProgramTable,
    gamma: &GenericContext,
    m: &Mode,
    governing: Option<&ContractRef>,
    span: SourceSpan,
    diags: &mut Vec<Diagnostic>,
) -> Mode {
    let checker = Checker::new(table, gamma.clone(), None);
    match checker.resolve_mode(m, governing, span) {
        Ok(m) => m,
        Err(d) => {
            diags.push(d);
            m.clone()
        }
    }
}

fn resolve_type_decl(
    table: &ProgramTable,
    gamma: &GenericContext,
    t: &Type,
    span: SourceSpan,
    diags: &mut Vec<Diagnostic>,
) -> Type {
    match t {
        Type::Unit => Type::Unit,
        Type::Ref { contract, mode } => {
            let contract = resolve_head_decl(table, gamma, contract, span, diags);
            let mode = resolve_mode_decl(table, gamma, mode, Some(&contract), span, diags);
            Type::Ref { contract, mode }
        }
    }
}

fn resolve_head_decl(
    table: &ProgramTable,
    gamma: &GenericContext,
    c: &ContractRef,
    span: SourceSpan,
    diags: &mut Vec<Diagnostic>,
) -> ContractRef {
    match c {
        ContractRef::Var(_) => c.clone(),
        ContractRef::Concrete { name, args } => {
            if args.is_empty() && gamma.by_decl_var(name).is_some() {
                return ContractRef::Var(name.clone());
            }
            if table.def(name).is_none() {
                diags.push(Diagnostic::error(
                    codes::GEN011,
                    span,
                    "T-ok",
                    format!("unknown declaration `{name}`"),
                ));
                return c.clone();
            }
            let args = args
                .iter()
                .map(|a| resolve_type_decl(table, gamma, a, span, diags))
                .collect();
            ContractRef::Concrete { name: name.clone(), args }
        }
    }
}

fn resolve_generics(
    table: &ProgramTable,
    outer: &GenericContext,
    params: &mut [GenericParam],
    span: SourceSpan,
    diags: &mut Vec<Diagnostic>,
) -> GenericContext {
    // Parameters are in scope in each other's bounds.
    let mut gamma = outer.clone();
    gamma.extend(params.iter().cloned());
    for p in params.iter_mut() {
        p.bound_interface = resolve_head_decl(table, &gamma, &p.bound_interface, span, diags);
        p.bound_mode =
            resolve_mode_decl(table, &gamma, &p.bound_mode, Some(&p.bound_interface), span, diags);
    }
    let mut gamma = outer.clone();
    gamma.extend(params.iter().cloned());
    gamma
}

fn resolve_sig(
    table: &ProgramTable,
    contract_gamma: &GenericContext,
    self_head: &ContractRef,
    sig: &mut TransactionSig,
    diags: &mut Vec<Diagnostic>,
) {
    let span = sig.span;
    let gamma = resolve_generics(table, contract_gamma, &mut sig.generics, span, diags);
    sig.return_type = resolve_type_decl(table, &gamma, &sig.return_type, span, diags);
    sig.this_pre = resolve_mode_decl(table, &gamma, &sig.this_pre, Some(self_head), span, diags);
    sig.this_post = resolve_mode_decl(table, &gamma, &sig.this_post, Some(self_head), span, diags);
    for p in &mut sig.params {
        p.ty = resolve_type_decl(table, &gamma, &p.ty, p.span, diags);
        let governing = p.ty.contract().cloned();
        p.post_mode =
            resolve_mode_decl(table, &gamma, &p.post_mode, governing.as_ref(), p.span, diags);
    }
    if let Some(specs) = &mut sig.field_specs {
        // Field specs are resolved against the field's declared contract in
        // wf_contract once fields are resolved; here resolve only through
        // the self head for state names.
        for s in specs {
            s.pre = resolve_mode_decl(table, &gamma, &s.pre, None, span, diags);
            s.post = resolve_mode_decl(table, &gamma, &s.post, None, span, diags);
        }
    }
}

fn resolve_contract(table: &ProgramTable, c: &mut ContractDecl, diags: &mut Vec<Diagnostic>) {
    let span = c.span;
    let gamma = resolve_generics(table, &GenericContext::new(), &mut c.generics, span, diags);
    if let Some((_, args)) = &mut c.implements {
        for a in args.iter_mut() {
            *a = resolve_type_decl(table, &gamma, a, span, diags);
        }
    }
    for st in &mut c.states {
        for f in &mut st.fields {
            f.ty = resolve_type_decl(table, &gamma, &f.ty, f.span, diags);
        }
    }
    let self_head = ContractRef::Concrete {
        name: c.name.clone(),
        args: ProgramTable::self_type_args(&c.generics),
    };
    // Field specs of private transactions resolve against the declared
    // field's contract.
    let field_types: Vec<(String, Type)> = c
        .states
        .first()
        .map(|s| s.fields.iter().map(|f| (f.name.clone(), f.ty.clone())).collect())
        .unwrap_or_default();
    for t in &mut c.transactions {
        resolve_sig(table, &gamma, &self_head, &mut t.sig, diags);
        if let Some(specs) = &mut t.sig.field_specs {
            for s in specs {
                let governing = field_types
                    .iter()
                    .find(|(n, _)| n == &s.field)
                    .and_then(|(_, t)| t.contract().cloned());
                s.pre = resolve_mode_decl(table, &gamma, &s.pre, governing.as_ref(), t.sig.span, diags);
                s.post =
                    resolve_mode_decl(table, &gamma, &s.post, governing.as_ref(), t.sig.span, diags);
            }
        }
    }
}

fn resolve_interface(table: &ProgramTable, i: &mut InterfaceDecl, diags: &mut Vec<Diagnostic>) {
    let span = i.span;
    let gamma = resolve_generics(table, &GenericContext::new(), &mut i.generics, span, diags);
    for st in &mut i.states {
        for f in &mut st.fields {
            f.ty = resolve_type_decl(table, &gamma, &f.ty, f.span, diags);
        }
    }
    let self_head = ContractRef::Concrete {
        name: i.name.clone(),
        args: ProgramTable::self_type_args(&i.generics),
    };
    for sig in &mut i.signatures {
        resolve_sig(table, &gamma, &self_head, sig, diags);
    }
}

fn wf_generics(
    table: &ProgramTable,
    gamma: &GenericContext,
    params: &[GenericParam],
    span: SourceSpan,
    diags: &mut Vec<Diagnostic>,
) {
    let judge = Judgments::new(table);
    for p in params {
        let ContractRef::Concrete { name, args } = &p.bound_interface else {
            diags.push(Diagnostic::error(
                codes::GEN011,
                span,
                "genericsOk",
                format!("the bound of `{}` must name an interface", p.decl_var),
            ));
            continue;
        };
        match table.def(name) {
            Some(Decl::Interface(idecl)) => {
                if let Err(e) = judge.check_args_subst(gamma, &idecl.generics, args, name) {
                    diags.push(diag(e, span));
                }
                if let Mode::States(ss) = &p.bound_mode {
                    let known = table.state_names(name).unwrap_or_default();
                    for s in ss {
                        if !known.contains(s) {
                            diags.push(Diagnostic::error(
                                codes::GEN002,
                                span,
                                "genericsOk",
                                format!("bound state `{s}` is not a state of `{name}`"),
                            ));
                        }
                    }
                }
                if !p.asset {
                    let owned = Type::Ref {
                        contract: p.bound_interface.clone(),
                        mode: Mode::Perm(Permission::Owned),
                    };
                    if judge.is_asset(gamma, &owned).unwrap_or(false) {
                        diags.push(Diagnostic::error(
                            codes::GEN004,
                            span,
                            "genericsOk",
                            format!(
                                "parameter `{}` is not marked asset but its bound `{name}` has asset states",
                                p.decl_var
                            ),
                        ));
                    }
                }
            }
            Some(Decl::Contract(_)) => diags.push(Diagnostic::error(
                codes::GEN011,
                span,
                "genericsOk",
                format!("the bound of `{}` must be an interface, `{name}` is a contract", p.decl_var),
            )),
            None => diags.push(Diagnostic::error(
                codes::GEN011,
                span,
                "genericsOk",
                format!("unknown interface `{name}`"),
            )),
        }
    }
}

fn wf_states(
    table: &ProgramTable,
    gamma: &GenericContext,
    states: &[StateDecl],
    diags: &mut Vec<Diagnostic>,
) {
    let judge = Judgments::new(table);
    for (i, s) in states.iter().enumerate() {
        if states[..i].iter().any(|p| p.name == s.name) {
            diags.push(Diagnostic::error(
                codes::WF004,
                s.span,
                "ST-ok",
                format!("duplicate state `{}`", s.name),
            ));
        }
        for (j, f) in s.fields.iter().enumerate() {
            if s.fields[..j].iter().any(|g| g.name == f.name) {
                diags.push(Diagnostic::error(
                    codes::WF004,
                    f.span,
                    "ST-ok",
                    format!("duplicate field `{}` in state `{}`", f.name, s.name),
                ));
            }
            if !s.asset && judge.is_asset(gamma, &f.ty).unwrap_or(false) {
                diags.push(Diagnostic::error(
                    codes::WF005,
                    f.span,
                    "ST-ok",
                    format!(
                        "field `{}` of non-asset state `{}` has asset type `{}`",
                        f.name, s.name, f.ty
                    ),
                ));
            }
        }
    }
    // A field defined in several states must have one type.
    let mut seen: Vec<(&str, &Type, SourceSpan)> = Vec::new();
    for s in states {
        for f in &s.fields {
            if let Some((_, ty, _)) = seen.iter().find(|(n, _, _)| *n == f.name) {
                if *ty != &f.ty {
                    diags.push(Diagnostic::error(
                        codes::WF004,
                        f.span,
                        "ST-ok",
                        format!("field `{}` is declared with different types across states", f.name),
                    ));
                }
            } else {
                seen.push((&f.name, &f.ty, f.span));
            }
        }
    }
}

fn wf_interface(table: &ProgramTable, i: &InterfaceDecl, diags: &mut Vec<Diagnostic>) {
    let gamma = gamma_of(&i.generics);
    wf_generics(table, &gamma, &i.generics, i.span, diags);
    wf_states(table, &gamma, &i.states, diags);
    for (k, sig) in i.signatures.iter().enumerate() {
        if i.signatures[..k].iter().any(|s| s.name == sig.name) {
            diags.push(Diagnostic::error(
                codes::WF004,
                sig.span,
                "IFACE-ok",
                format!("duplicate transaction `{}`", sig.name),
            ));
        }
        let mut g = gamma.clone();
        g.extend(sig.generics.iter().cloned());
        wf_generics(table, &g, &sig.generics, sig.span, diags);
    }
}

fn wf_contract(table: &ProgramTable, c: &ContractDecl, diags: &mut Vec<Diagnostic>) {
    let judge = Judgments::new(table);
    let gamma = gamma_of(&c.generics);
    wf_generics(table, &gamma, &c.generics, c.span, diags);
    if c.states.is_empty() {
        diags.push(Diagnostic::error(
            codes::WF003,
            c.span,
            "CL-ok",
            format!("contract `{}` declares no states", c.name),
        ));
    }
    wf_states(table, &gamma, &c.states, diags);
    for (k, t) in c.transactions.iter().enumerate() {
        if c.transactions[..k].iter().any(|s| s.sig.name == t.sig.name) {
            diags.push(Diagnostic::error(
                codes::WF004,
                t.sig.span,
                "CL-ok",
                format!("duplicate transaction `{}`", t.sig.name),
            ));
        }
        let mut g = gamma.clone();
        g.extend(t.sig.generics.iter().cloned());
        wf_generics(table, &g, &t.sig.generics, t.sig.span, diags);
    }

    if let Some((iface_name, iface_args)) = &c.implements {
        let Some(idecl) = table.interface(iface_name) else {
            diags.push(Diagnostic::error(
                codes::GEN011,
                c.span,
                "CL-ok",
                format!("`{}` implements unknown interface `{iface_name}`", c.name),
            ));
            return;
        };
        for a in iface_args {
            if let Some(ContractRef::Var(x)) = a.contract() {
                if gamma.by_decl_var(x).is_none() {
                    diags.push(Diagnostic::error(
                        codes::GEN001,
                        c.span,
                        "CL-ok",
                        format!("implements argument uses unknown declaration variable `{x}`"),
                    ));
                }
            }
        }
        if let Err(e) = judge.check_args_subst(&gamma, &idecl.generics, iface_args, iface_name) {
            diags.push(diag(e, c.span));
        }
        let cnames = table.transaction_names(&c.name);
        for m in table.transaction_names(iface_name) {
            if !cnames.contains(&m) {
                diags.push(Diagnostic::error(
                    codes::WF001,
                    c.span,
                    "CL-ok",
                    format!("`{}` does not define transaction `{m}` required by `{iface_name}`", c.name),
                ));
            }
        }
        let cstates: Vec<String> = c.states.iter().map(|s| s.name.clone()).collect();
        for s in table.state_names(iface_name).unwrap_or_default() {
            if !cstates.contains(&s) {
                diags.push(Diagnostic::error(
                    codes::WF001,
                    c.span,
                    "CL-ok",
                    format!("`{}` does not define state `{s}` required by `{iface_name}`", c.name),
                ));
            }
        }
        for st in &c.states {
            if let Some(is) = table.sdef(iface_name, &st.name) {
                if st.asset && !is.asset {
                    diags.push(Diagnostic::error(
                        codes::WF002,
                        st.span,
                        "implementOk",
                        format!(
                            "asset state `{}` implements non-asset interface state",
                            st.name
                        ),
                    ));
                }
            }
        }
        // Signature compatibility for transactions shared with the interface.
        let iface_head = ContractRef::Concrete { name: iface_name.clone(), args: iface_args.clone() };
        for t in &c.transactions {
            if !table.transaction_names(iface_name).contains(&t.sig.name) {
                continue;
            }
            let looked = judge.lookup_transaction(&gamma, &iface_head, &t.sig.name, &[]);
            let isig = match looked {
                Ok((s, _)) => s,
                Err(e) => {
                    diags.push(diag(e, t.sig.span));
                    continue;
                }
            };
            if let Err(msg) = implement_ok(&judge, &gamma, &t.sig, &isig) {
                diags.push(Diagnostic::error(codes::WF006, t.sig.span, "implementOk", msg));
            }
        }
    }
}

fn implement_ok(
    judge: &Judgments,
    gamma: &GenericContext,
    csig: &TransactionSig,
    isig: &TransactionSig,
) -> Result<(), String> {
    if csig.params.len() != isig.params.len() {
        return Err(format!(
            "`{}` has {} parameter(s), the interface requires {}",
            csig.name,
            csig.params.len(),
            isig.params.len()
        ));
    }
    for (cp, ip) in csig.params.iter().zip(isig.params.iter()) {
        if !judge.subtype(gamma, &ip.ty, &cp.ty).unwrap_or(false) {
            return Err(format!(
                "parameter `{}`: interface type `{}` is not a subtype of `{}`",
                cp.name, ip.ty, cp.ty
            ));
        }
        if !judge.subpermission(gamma, &cp.post_mode, &ip.post_mode).unwrap_or(false) {
            return Err(format!(
                "parameter `{}`: final mode `{}` is not below the interface's `{}`",
                cp.name, cp.post_mode, ip.post_mode
            ));
        }
    }
    if !judge.subpermission(gamma, &isig.this_pre, &csig.this_pre).unwrap_or(false) {
        return Err(format!(
            "receiver precondition `{}` is stronger than the interface's `{}`",
            csig.this_pre, isig.this_pre
        ));
    }
    if !judge.subpermission(gamma, &csig.this_post, &isig.this_post).unwrap_or(false) {
        return Err(format!(
            "receiver postcondition `{}` is not below the interface's `{}`",
            csig.this_post, isig.this_post
        ));
    }
    if !judge.subtype(gamma, &csig.return_type, &isig.return_type).unwrap_or(false) {
        return Err(format!(
            "return type `{}` is not a subtype of the interface's `{}`",
            csig.return_type, isig.return_type
        ));
    }
    Ok(())
}

/// Checks one transaction body and returns the elaborated body (with the
/// terminal pack wrapper when needed).
fn check_transaction_body(
    table: &ProgramTable,
    contract: &str,
    contract_generics: &[GenericParam],
    states: &[StateDecl],
    t: &Transaction,
) -> Result<Expr, Diagnostic> {
    let judge = Judgments::new(table);
    let mut gamma = gamma_of(contract_generics);
    gamma.extend(t.sig.generics.iter().cloned());

    let this = Binding::var("this");
    let self_head = ContractRef::Concrete {
        name: contract.to_string(),
        args: ProgramTable::self_type_args(contract_generics),
    };
    let this_ty = Type::Ref { contract: self_head.clone(), mode: t.sig.this_pre.clone() };
    let mut ctx = TypingContext::new();
    ctx.bind(this.clone(), this_ty.clone());
    for p in &t.sig.params {
        if ctx.get(&Binding::var(&p.name)).is_some() {
            return Err(Diagnostic::error(
                codes::SYN003,
                p.span,
                "TransactionOK",
                format!("duplicate parameter `{}`", p.name),
            ));
        }
        ctx.bind(Binding::var(&p.name), p.ty.clone());
    }
    let span = t.sig.span;
    if let Some(specs) = &t.sig.field_specs {
        for s in specs {
            let declared = states
                .iter()
                .flat_map(|st| st.fields.iter())
                .find(|f| f.name == s.field)
                .map(|f| f.ty.clone())
                .ok_or_else(|| {
                    Diagnostic::error(
                        codes::GEN006,
                        span,
                        "PrivateTransactionOK",
                        format!("field specification names unknown field `{}`", s.field),
                    )
                })?;
            // Specified fields must exist in every state: the private body
            // may run in any receiver state satisfying the precondition.
            let in_all = states.iter().all(|st| st.fields.iter().any(|f| f.name == s.field));
            if !in_all {
                return Err(Diagnostic::error(
                    codes::GEN006,
                    span,
                    "PrivateTransactionOK",
                    format!("specified field `{}` is not defined in every state", s.field),
                ));
            }
            ctx.bind_override(this.clone(), s.field.clone(), declared.with_mode(s.pre.clone()));
        }
    }

    let mut checker = Checker::new(table, gamma.clone(), Some(this.clone()));
    let (body_ty, mut body_elab) = checker.check(&mut ctx, &t.body, Some(&t.sig.return_type))?;

    // Result against the declared return type.
    let ret_ok = judge.subtype(&gamma, &body_ty, &t.sig.return_type).map_err(|e| diag(e, span))?
        && judge
            .same_ownership(&gamma, &body_ty, &t.sig.return_type)
            .map_err(|e| diag(e, span))?;
    if !ret_ok {
        let nd = !judge.disposable(&gamma, &body_ty).map_err(|e| diag(e, span))?;
        let code = if nd { codes::ASSET001 } else { codes::TYPE001 };
        return Err(Diagnostic::error(
            code,
            t.body.span,
            "TransactionOK",
            format!(
                "body produces `{body_ty}`, incompatible with declared return type `{}`",
                t.sig.return_type
            ),
        ));
    }

    let private = t.sig.visibility() == Visibility::Private;
    if private {
        // Specified fields end at their post-specification; everything else
        // must be consistent with its declaration.
        let specs = t.sig.field_specs.as_ref().expect("private has specs");
        for s in specs {
            let declared = states
                .iter()
                .flat_map(|st| st.fields.iter())
                .find(|f| f.name == s.field)
                .map(|f| f.ty.clone())
                .expect("validated above");
            let current = ctx
                .get_override(&this, &s.field)
                .cloned()
                .unwrap_or_else(|| declared.clone());
            let want = declared.with_mode(s.post.clone());
            let ok = judge.subtype(&gamma, &current, &want).map_err(|e| diag(e, span))?
                && judge.same_ownership(&gamma, &current, &want).map_err(|e| diag(e, span))?;
            if !ok {
                return Err(Diagnostic::error(
                    codes::POST001,
                    t.body.span,
                    "PrivateTransactionOK",
                    format!(
                        "field `{}` ends at `{current}`, inconsistent with its post-specification `{want}`",
                        s.field
                    ),
                ));
            }
        }
        for (f, tf) in ctx.overrides_of(&this) {
            if specs.iter().any(|s| s.field == f) {
                continue;
            }
            let declared = judge
                .field_decl_type(&gamma, &this_ty, &f)
                .map_err(|e| diag(e, span))?
                .unwrap_or(Type::Unit);
            let ok = judge.subtype(&gamma, &tf, &declared).map_err(|e| diag(e, span))?
                && judge.same_ownership(&gamma, &tf, &declared).map_err(|e| diag(e, span))?;
            if !ok {
                return Err(Diagnostic::error(
                    codes::POST001,
                    t.body.span,
                    "PrivateTransactionOK",
                    format!(
                        "field `{f}` ends at `{tf}`, inconsistent with its declaration `{declared}`"
                    ),
                ));
            }
        }
    } else {
        // Public bodies end with every field consistent; the compiler owes
        // the terminal pack.
        let overrides = ctx.overrides_of(&this);
        if !overrides.is_empty() {
            if !checker.can_pack(&ctx) {
                let (f, tf) = &overrides[0];
                return Err(Diagnostic::error(
                    codes::POST001,
                    t.body.span,
                    "PublicTransactionOK",
                    format!(
                        "field `{f}` ends the transaction at `{tf}`, inconsistent with its declaration"
                    ),
                ));
            }
            checker.perform_pack(&mut ctx, t.body.span)?;
            body_elab = wrap_terminal_pack(body_elab, &body_ty);
        }
    }

    // Receiver and parameter post-specifications.
    let post_checks: Vec<(Binding, Type, &'static str)> = {
        let mut v = Vec::new();
        let declared_this_post = this_ty.with_mode(t.sig.this_post.clone());
        v.push((this.clone(), declared_this_post, "receiver"));
        for p in &t.sig.params {
            v.push((Binding::var(&p.name), p.ty.with_mode(p.post_mode.clone()), "parameter"));
        }
        v
    };
    for (b, want, what) in post_checks {
        let Some(fin) = ctx.get(&b).cloned() else {
            return Err(Diagnostic::error(
                codes::POST001,
                t.body.span,
                "TransactionOK",
                format!("{what} `{b}` was dropped by the body"),
            ));
        };
        let ok = judge.subtype(&gamma, &fin, &want).map_err(|e| diag(e, span))?
            && judge.same_ownership(&gamma, &fin, &want).map_err(|e| diag(e, span))?;
        if !ok {
            let nd = !judge.disposable(&gamma, &fin).map_err(|e| diag(e, span))?;
            let not_owned_post = !judge.maybe_owned(&gamma, &want).map_err(|e| diag(e, span))?;
            let code = if nd && not_owned_post { codes::ASSET001 } else { codes::POST001 };
            return Err(Diagnostic::error(
                code,
                t.body.span,
                "TransactionOK",
                format!("{what} `{b}` ends the transaction at `{fin}`, its declaration requires `{want}`"),
            ));
        }
    }

    Ok(body_elab)
}

/// `let r = body in let _ = pack in r` — the pack the compiler inserts at
/// the end of a public transaction whose fields were overridden.
fn wrap_terminal_pack(body: Expr, body_ty: &Type) -> Expr {
    let span = body.span;
    let result_var = "_result".to_string();
    Expr::new(
        ExprKind::Let {
            var: result_var.clone(),
            ty: body_ty.clone(),
            bound: Box::new(body),
            body: Box::new(Expr::new(
                ExprKind::Let {
                    var: "_packed".into(),
                    ty: Type::Unit,
                    bound: Box::new(Expr::new(ExprKind::Pack, span)),
                    body: Box::new(Expr::new(
                        ExprKind::Simple(Binding::var(result_var)),
                        span,
                    )),
                },
                span,
            )),
        },
        span,
    )
}

/// Spec-shaped convenience wrapper around the expression judgment.
pub fn check_expr(
    table: &ProgramTable,
    gamma: &GenericContext,
    ctx: &TypingContext,
    this_binding: Option<Binding>,
    e: &Expr,
) -> Result<CheckResult, Diagnostic> {
    let mut checker = Checker::new(table, gamma.clone(), this_binding);
    let mut ctx = ctx.clone();
    let (result_type, elaborated) = checker.check(&mut ctx, e, None)?;
    Ok(CheckResult { result_type, output_context: ctx, elaborated })
}
