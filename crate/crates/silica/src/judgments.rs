//! The auxiliary judgments of the type system: subpermission, subtyping,
//! ownership classification, type splitting, context merging, and the
//! argument-passing functions.

use crate::ast::*;
use crate::diag::codes;
use crate::table::{ProgramTable, Subst};

/// A span-free judgment failure; callers attach source positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JErr {
    pub code: &'static str,
    pub rule: &'static str,
    pub message: String,
}

impl JErr {
    pub fn new(code: &'static str, rule: &'static str, message: impl Into<String>) -> JErr {
        JErr { code, rule, message: message.into() }
    }
}

pub type JResult<T> = Result<T, JErr>;

/// How a read should split the permission it consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitDemand {
    /// Take everything the reference has.
    TransferAll,
    /// Take the weakest part that satisfies the expected type.
    SatisfyExpected(Type),
}

/// Mutually-exclusive ownership flags of a type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub is_asset: bool,
    pub maybe_owned: bool,
    pub disposable: bool,
}

pub struct Judgments<'a> {
    pub table: &'a ProgramTable,
}

impl<'a> Judgments<'a> {
    pub fn new(table: &'a ProgramTable) -> Judgments<'a> {
        Judgments { table }
    }

    // ----- bounds -------------------------------------------------------

    /// Most specific concrete mode above `m` (identity on non-variables).
    pub fn bound_mode(&self, gamma: &GenericContext, m: &Mode) -> JResult<Mode> {
        let mut cur = m.clone();
        let mut hops = 0;
        while let Mode::PermVar(p) = cur.clone() {
            let param = gamma.by_perm_var(&p).ok_or_else(|| {
                JErr::new(codes::GEN001, "bound*", format!("unknown permission variable `{p}`"))
            })?;
            cur = param.bound_mode.clone();
            hops += 1;
            if hops > 64 {
                return Err(JErr::new(
                    codes::GEN001,
                    "bound*",
                    format!("cyclic permission bound through `{p}`"),
                ));
            }
        }
        Ok(cur)
    }

    /// Most specific concrete type above `t`.
    pub fn bound_type(&self, gamma: &GenericContext, t: &Type) -> JResult<Type> {
        match t {
            Type::Unit => Ok(Type::Unit),
            Type::Ref { contract, mode } => {
                let mode = self.bound_mode(gamma, mode)?;
                match contract {
                    ContractRef::Concrete { .. } => {
                        Ok(Type::Ref { contract: contract.clone(), mode })
                    }
                    ContractRef::Var(x) => {
                        let param = gamma.by_decl_var(x).ok_or_else(|| {
                            JErr::new(
                                codes::GEN001,
                                "bound",
                                format!("unknown declaration variable `{x}`"),
                            )
                        })?;
                        Ok(Type::Ref { contract: param.bound_interface.clone(), mode })
                    }
                }
            }
        }
    }

    /// Conservative permission approximation; variables count as owned.
    pub fn to_permission(&self, m: &Mode) -> Permission {
        match m {
            Mode::States(_) => Permission::Owned,
            Mode::PermVar(_) => Permission::Owned,
            Mode::Perm(p) => *p,
        }
    }

    // ----- state reasoning ----------------------------------------------

    pub fn possible_states(&self, gamma: &GenericContext, t: &Type) -> JResult<Vec<String>> {
        let Type::Ref { contract, mode } = t else {
            return Err(JErr::new(
                codes::GEN002,
                "possibleStates",
                "the unit type has no states",
            ));
        };
        let mode = self.bound_mode(gamma, mode)?;
        match mode {
            Mode::States(ss) => Ok(ss),
            Mode::Perm(_) => {
                let head = self.resolve_head(gamma, contract)?;
                self.table.state_names(head.name()).ok_or_else(|| {
                    JErr::new(
                        codes::GEN011,
                        "possibleStates",
                        format!("unknown declaration `{}`", head.name()),
                    )
                })
            }
            Mode::PermVar(_) => unreachable!("bound_mode returns non-variables"),
        }
    }

    /// Resolves a declaration-variable head to its interface bound.
    pub fn resolve_head(&self, gamma: &GenericContext, c: &ContractRef) -> JResult<ContractRef> {
        match c {
            ContractRef::Concrete { .. } => Ok(c.clone()),
            ContractRef::Var(x) => gamma
                .by_decl_var(x)
                .map(|p| p.bound_interface.clone())
                .ok_or_else(|| {
                    JErr::new(
                        codes::GEN001,
                        "bound",
                        format!("unknown declaration variable `{x}`"),
                    )
                }),
        }
    }

    pub fn is_asset(&self, gamma: &GenericContext, t: &Type) -> JResult<bool> {
        match t {
            Type::Unit => Ok(false),
            Type::Ref { contract: ContractRef::Var(x), .. } => gamma
                .by_decl_var(x)
                .map(|p| p.asset)
                .ok_or_else(|| {
                    JErr::new(
                        codes::GEN001,
                        "isAsset",
                        format!("unknown declaration variable `{x}`"),
                    )
                }),
            Type::Ref { contract, .. } => {
                let head = contract.clone();
                let states = self.possible_states(gamma, t)?;
                let decl = head.name();
                for s in &states {
                    if let Some(sd) = self.table.sdef(decl, s) {
                        if sd.asset {
                            return Ok(true);
                        }
                    }
                }
                Ok(false)
            }
        }
    }

    pub fn classify(&self, gamma: &GenericContext, t: &Type) -> JResult<Classification> {
        let is_asset = self.is_asset(gamma, t)?;
        let maybe_owned = self.maybe_owned(gamma, t)?;
        let disposable = !maybe_owned || !is_asset;
        Ok(Classification { is_asset, maybe_owned, disposable })
    }

    pub fn maybe_owned(&self, gamma: &GenericContext, t: &Type) -> JResult<bool> {
        match t {
            Type::Unit => Ok(false),
            Type::Ref { mode, .. } => match mode {
                // Only upper bounds exist on permission variables, so every
                // variable may be owned.
                Mode::PermVar(_) => Ok(true),
                _ => self.subpermission(gamma, mode, &Mode::Perm(Permission::Owned)),
            },
        }
    }

    pub fn disposable(&self, gamma: &GenericContext, t: &Type) -> JResult<bool> {
        Ok(self.classify(gamma, t)?.disposable)
    }

    // ----- subpermission and subtyping ------------------------------------

    /// Derivability of `a <:* b` in the subpermission rule closure.
    pub fn subpermission(&self, gamma: &GenericContext, a: &Mode, b: &Mode) -> JResult<bool> {
        self.subpermission_depth(gamma, a, b, 0)
    }

    fn subpermission_depth(
        &self,
        gamma: &GenericContext,
        a: &Mode,
        b: &Mode,
        depth: u32,
    ) -> JResult<bool> {
        if depth > 64 {
            return Err(JErr::new(codes::GEN001, "<:*", "cyclic permission bound"));
        }
        if b == &Mode::Perm(Permission::Unowned) {
            return Ok(true);
        }
        if a == b {
            return Ok(true);
        }
        match a {
            Mode::States(sa) => match b {
                Mode::States(sb) => Ok(sa.iter().all(|s| sb.contains(s))),
                // States are below Owned, and transitively below the
                // permissions Owned is below.
                Mode::Perm(_) => Ok(true),
                // Nothing concrete sits below a permission variable: only
                // upper bounds exist on variables.
                Mode::PermVar(_) => Ok(false),
            },
            // Owned is below the other permissions but never below a state
            // set or a variable.
            Mode::Perm(Permission::Owned) => Ok(matches!(b, Mode::Perm(_))),
            Mode::Perm(Permission::Shared) | Mode::Perm(Permission::Unowned) => Ok(false),
            Mode::PermVar(p) => {
                // One hop through the declared bound; recursion supplies
                // transitivity, so chains of variables relate pointwise.
                let param = gamma.by_perm_var(p).ok_or_else(|| {
                    JErr::new(
                        codes::GEN001,
                        "<:*",
                        format!("unknown permission variable `{p}`"),
                    )
                })?;
                self.subpermission_depth(gamma, &param.bound_mode, b, depth + 1)
            }
        }
    }

    /// `a </:* b`, defined as `b <:* a` with `a ≠ b`.
    pub fn not_subpermission(&self, gamma: &GenericContext, a: &Mode, b: &Mode) -> JResult<bool> {
        Ok(a != b && self.subpermission(gamma, b, a)?)
    }

    /// Ownership equality: both possibly owned or both not owned.
    pub fn same_ownership(&self, gamma: &GenericContext, t1: &Type, t2: &Type) -> JResult<bool> {
        Ok(self.maybe_owned(gamma, t1)? == self.maybe_owned(gamma, t2)?)
    }

    pub fn subtype(&self, gamma: &GenericContext, t1: &Type, t2: &Type) -> JResult<bool> {
        match (t1, t2) {
            (Type::Unit, Type::Unit) => Ok(true),
            (Type::Unit, _) | (_, Type::Unit) => Ok(false),
            (Type::Ref { contract: c1, mode: m1 }, Type::Ref { contract: c2, mode: m2 }) => {
                if c1 == c2 {
                    return self.subpermission(gamma, m1, m2);
                }
                // One hop through the implemented interface of a concrete
                // contract head.
                if let ContractRef::Concrete { name, args } = c1 {
                    if let Some(iface) = self.table.implemented_interface(name, args) {
                        if &iface == c2 {
                            return self.subpermission(gamma, m1, m2);
                        }
                    }
                }
                // One hop through the interface bound of a declaration
                // variable head.
                if let ContractRef::Var(x) = c1 {
                    if let Some(param) = gamma.by_decl_var(x) {
                        if &param.bound_interface == c2 {
                            return self.subpermission(gamma, m1, m2);
                        }
                    }
                }
                Ok(false)
            }
        }
    }

    // ----- splitting ------------------------------------------------------

    /// Distributes the permission of `t` between a taken part and a
    /// residual, directed by the demand.
    pub fn split(
        &self,
        gamma: &GenericContext,
        t: &Type,
        demand: &SplitDemand,
    ) -> JResult<(Type, Type)> {
        if t.is_unit() {
            return Ok((Type::Unit, Type::Unit));
        }
        let shared = t.with_mode(Mode::Perm(Permission::Shared));
        let unowned = t.with_mode(Mode::Perm(Permission::Unowned));
        let is_shared = t.mode() == Some(&Mode::Perm(Permission::Shared));
        match demand {
            SplitDemand::TransferAll => {
                if is_shared {
                    Ok((shared.clone(), shared))
                } else {
                    Ok((t.clone(), unowned))
                }
            }
            SplitDemand::SatisfyExpected(expected) => {
                if is_shared && self.subtype(gamma, &shared, expected)? {
                    return Ok((shared.clone(), shared));
                }
                let cls = self.classify(gamma, t)?;
                if !cls.is_asset
                    && cls.maybe_owned
                    && self.subtype(gamma, &shared, expected)?
                {
                    return Ok((shared.clone(), shared));
                }
                if self.subtype(gamma, t, expected)? {
                    return Ok((t.clone(), unowned));
                }
                Err(JErr::new(
                    codes::SPL001,
                    "split",
                    format!("cannot split `{t}` to satisfy expected type `{expected}`"),
                ))
            }
        }
    }

    // ----- argument passing -----------------------------------------------

    /// Caller-side type of a reference after it is passed to a formal
    /// parameter with the given declared initial and final modes.
    pub fn func_arg(&self, passed: &Type, declared_in: &Mode, declared_out: &Mode) -> Type {
        match passed {
            Type::Unit => Type::Unit,
            Type::Ref { .. } => {
                if declared_in == &Mode::Perm(Permission::Unowned) {
                    passed.clone()
                } else {
                    passed.with_mode(declared_out.clone())
                }
            }
        }
    }

    /// Caller-side residual that remains when ownership is transferred into
    /// a fresh callee reference.
    pub fn func_arg_residual(&self, passed: &Type, declared_in: &Mode) -> Type {
        match passed {
            Type::Unit => Type::Unit,
            Type::Ref { .. } => {
                if declared_in == &Mode::Perm(Permission::Unowned) {
                    passed.clone()
                } else {
                    passed.with_mode(Mode::Perm(Permission::Unowned))
                }
            }
        }
    }

    // ----- fields -----------------------------------------------------------

    /// Fields of one state of a (possibly instantiated) declaration head,
    /// with type arguments substituted. Interface heads have no fields.
    pub fn state_fields(
        &self,
        gamma: &GenericContext,
        head: &ContractRef,
        state: &str,
    ) -> JResult<Vec<FieldDecl>> {
        let head = self.resolve_head(gamma, head)?;
        let ContractRef::Concrete { name, args } = &head else { unreachable!() };
        match self.table.def(name) {
            Some(crate::table::Decl::Contract(c)) => {
                let sd = c.states.iter().find(|s| s.name == *state).ok_or_else(|| {
                    JErr::new(
                        codes::GEN002,
                        "stateFields",
                        format!("contract `{name}` has no state `{state}`"),
                    )
                })?;
                let subst = Subst::sequential(&c.generics, args);
                Ok(sd
                    .fields
                    .iter()
                    .map(|f| FieldDecl {
                        ty: subst.apply_type(&f.ty),
                        name: f.name.clone(),
                        span: f.span,
                    })
                    .collect())
            }
            Some(crate::table::Decl::Interface(_)) => Ok(Vec::new()),
            None => Err(JErr::new(
                codes::GEN011,
                "stateFields",
                format!("unknown declaration `{name}`"),
            )),
        }
    }

    /// Fields defined in any of the possible states of `t`.
    pub fn union_fields(&self, gamma: &GenericContext, t: &Type) -> JResult<Vec<FieldDecl>> {
        let Type::Ref { contract, .. } = t else {
            return Ok(Vec::new());
        };
        let states = self.possible_states(gamma, t)?;
        let mut out: Vec<FieldDecl> = Vec::new();
        for s in &states {
            for f in self.state_fields(gamma, contract, s)? {
                if !out.iter().any(|g| g.name == f.name) {
                    out.push(f);
                }
            }
        }
        Ok(out)
    }

    /// Fields defined in all of the possible states of `t`.
    pub fn intersect_fields(&self, gamma: &GenericContext, t: &Type) -> JResult<Vec<FieldDecl>> {
        let Type::Ref { contract, .. } = t else {
            return Ok(Vec::new());
        };
        let states = self.possible_states(gamma, t)?;
        let mut iter = states.iter();
        let Some(first) = iter.next() else {
            return Ok(Vec::new());
        };
        let mut out = self.state_fields(gamma, contract, first)?;
        for s in iter {
            let fs = self.state_fields(gamma, contract, s)?;
            out.retain(|f| fs.iter().any(|g| g.name == f.name));
        }
        Ok(out)
    }

    /// Fields defined in every state of the referenced declaration.
    pub fn contract_fields(&self, gamma: &GenericContext, t: &Type) -> JResult<Vec<FieldDecl>> {
        self.intersect_fields(gamma, &t.with_mode(Mode::Perm(Permission::Unowned)))
    }

    /// Declared type of a field visible in some state of `t`.
    pub fn field_decl_type(
        &self,
        gamma: &GenericContext,
        t: &Type,
        field: &str,
    ) -> JResult<Option<Type>> {
        let all = self.union_fields(gamma, &t.with_mode(Mode::Perm(Permission::Unowned)))?;
        Ok(all.into_iter().find(|f| f.name == field).map(|f| f.ty))
    }

    // ----- merging ----------------------------------------------------------

    /// The mode join used by merge; `None` when undefined.
    fn oplus_mode(&self, m1: &Mode, m2: &Mode) -> Option<Mode> {
        if m1 == m2 {
            return Some(m1.clone());
        }
        use Mode::*;
        use Permission::*;
        match (m1, m2) {
            (Perm(Owned), States(_)) | (States(_), Perm(Owned)) => Some(Perm(Owned)),
            (Perm(Shared), Perm(Unowned)) | (Perm(Unowned), Perm(Shared)) => Some(Perm(Unowned)),
            (States(a), States(b)) => {
                let mut v: Vec<String> = a.clone();
                for s in b {
                    if !v.contains(s) {
                        v.push(s.clone());
                    }
                }
                v.sort();
                Some(States(v))
            }
            _ => None,
        }
    }

    /// The type join `T ⊕ T'`; `None` when undefined.
    pub fn oplus(&self, t1: &Type, t2: &Type) -> Option<Type> {
        if t1 == t2 {
            return Some(t1.clone());
        }
        match (t1, t2) {
            (Type::Ref { contract: c1, mode: m1 }, Type::Ref { contract: c2, mode: m2 }) => {
                if c1 == c2 {
                    let m = self.oplus_mode(m1, m2)?;
                    return Some(Type::Ref { contract: c1.clone(), mode: m });
                }
                // A contract head joins with the interface it implements by
                // promoting to the interface instantiation.
                if let ContractRef::Concrete { name, args } = c1 {
                    if let Some(iface) = self.table.implemented_interface(name, args) {
                        if &iface == c2 {
                            let m = self.oplus_mode(m1, m2)?;
                            return Some(Type::Ref { contract: c2.clone(), mode: m });
                        }
                    }
                }
                if let ContractRef::Concrete { name, args } = c2 {
                    if let Some(iface) = self.table.implemented_interface(name, args) {
                        if &iface == c1 {
                            let m = self.oplus_mode(m1, m2)?;
                            return Some(Type::Ref { contract: c1.clone(), mode: m });
                        }
                    }
                }
                None
            }
            _ => None,
        }
    }

    /// Merges the output contexts of two branches. Bindings present in only
    /// one branch are dropped if disposable; a field override present in
    /// only one branch merges against the field's declared type on the
    /// other side (an absent override reads as the declaration).
    pub fn merge(
        &self,
        gamma: &GenericContext,
        left: &TypingContext,
        right: &TypingContext,
    ) -> JResult<TypingContext> {
        let mut out = TypingContext::new();
        let mut keys: Vec<CtxKey> = left.keys().cloned().collect();
        for k in right.keys() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
        for k in keys {
            let l = left.get_key(&k);
            let r = right.get_key(&k);
            match (l, r) {
                (Some(tl), Some(tr)) => {
                    let j = self.oplus(tl, tr).ok_or_else(|| {
                        JErr::new(
                            codes::MRG002,
                            "merge",
                            format!("`{k}` has incompatible branch types `{tl}` and `{tr}`"),
                        )
                    })?;
                    out.insert(k, j);
                }
                (Some(t), None) | (None, Some(t)) => {
                    let present_left = l.is_some();
                    match &k {
                        CtxKey::Bind(_) => {
                            if self.disposable(gamma, t)? {
                                // Dropped per Dispose-disposable.
                            } else {
                                return Err(JErr::new(
                                    codes::MRG001,
                                    "merge",
                                    format!(
                                        "`{k}` holds non-disposable `{t}` in one branch only"
                                    ),
                                ));
                            }
                        }
                        CtxKey::FieldOverride(recv, field) => {
                            let other = if present_left { right } else { left };
                            let recv_ty = other.get(recv).cloned();
                            let declared = match recv_ty {
                                Some(rt) => self.field_decl_type(gamma, &rt, field)?,
                                None => None,
                            };
                            match declared {
                                Some(d) => {
                                    let j = self.oplus(t, &d).ok_or_else(|| {
                                        JErr::new(
                                            codes::MRG001,
                                            "merge",
                                            format!(
                                                "field override `{k}` (`{t}`) cannot merge with its declaration `{d}`"
                                            ),
                                        )
                                    })?;
                                    out.insert(k, j);
                                }
                                None => {
                                    return Err(JErr::new(
                                        codes::MRG001,
                                        "merge",
                                        format!("field override `{k}` present in one branch only"),
                                    ))
                                }
                            }
                        }
                    }
                }
                (None, None) => unreachable!(),
            }
        }
        Ok(out)
    }

    // ----- generic arguments -------------------------------------------------

    /// Suitability of one type argument for one generic parameter. A
    /// non-asset may be substituted for an asset parameter, not vice versa.
    pub fn subs_ok(
        &self,
        gamma: &GenericContext,
        arg: &Type,
        param: &GenericParam,
        applied: &Subst,
    ) -> JResult<()> {
        let Type::Ref { contract, .. } = arg else {
            return Err(JErr::new(
                codes::GEN004,
                "subsOk",
                "the unit type cannot instantiate a generic parameter",
            ));
        };
        let bound = Type::Ref {
            contract: applied.apply_head(&param.bound_interface),
            mode: applied.apply_mode(&param.bound_mode),
        };
        if !self.subtype(gamma, arg, &bound)? {
            return Err(JErr::new(
                codes::GEN004,
                "subsOk",
                format!("`{arg}` does not satisfy the bound `{bound}` of parameter `{}`", param.decl_var),
            ));
        }
        if !param.asset {
            // Asset in any state disqualifies; check at Owned.
            let at_owned = Type::Ref {
                contract: contract.clone(),
                mode: Mode::Perm(Permission::Owned),
            };
            if self.is_asset(gamma, &at_owned)? {
                return Err(JErr::new(
                    codes::GEN004,
                    "subsOk",
                    format!(
                        "asset `{}` cannot instantiate non-asset parameter `{}`",
                        contract.name(),
                        param.decl_var
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Checks every argument and returns the sequential substitution.
    pub fn check_args_subst(
        &self,
        gamma: &GenericContext,
        params: &[GenericParam],
        args: &[Type],
        what: &str,
    ) -> JResult<Subst> {
        if params.len() != args.len() {
            return Err(JErr::new(
                codes::GEN003,
                "subsOk",
                format!(
                    "{what} expects {} type argument(s), got {}",
                    params.len(),
                    args.len()
                ),
            ));
        }
        let mut subst = Subst::identity();
        for (p, a) in params.iter().zip(args.iter()) {
            self.subs_ok(gamma, a, p, &subst)?;
            subst = subst.then(Subst::sequential(std::slice::from_ref(p), std::slice::from_ref(a)));
        }
        Ok(subst)
    }

    /// Transaction lookup with receiver and transaction type arguments
    /// substituted. The receiver head must already be concrete (apply
    /// `bound_type` first).
    pub fn lookup_transaction(
        &self,
        gamma: &GenericContext,
        receiver_head: &ContractRef,
        name: &str,
        type_args: &[Type],
    ) -> JResult<(TransactionSig, Option<Expr>)> {
        let ContractRef::Concrete { name: decl, args } = receiver_head else {
            return Err(JErr::new(
                codes::GEN001,
                "transaction",
                "receiver head must be concrete",
            ));
        };
        let (sig, body) = self.table.tdef(decl, name).ok_or_else(|| {
            JErr::new(
                codes::TXN001,
                "transaction",
                format!("`{decl}` has no transaction `{name}`"),
            )
        })?;
        let decl_params = self.table.params(decl).unwrap_or(&[]);
        let contract_subst = self.check_args_subst(gamma, decl_params, args, decl)?;
        // Substitute contract parameters through the transaction's own
        // parameter bounds before checking the transaction arguments.
        let sig_after_contract = contract_subst.apply_sig(sig);
        let txn_subst = self.check_args_subst(
            gamma,
            &sig_after_contract.generics,
            type_args,
            &format!("transaction `{name}`"),
        )?;
        let final_sig = txn_subst.apply_sig(&sig_after_contract);
        let final_body = body.map(|b| txn_subst.apply_expr(&contract_subst.apply_expr(b)));
        Ok((final_sig, final_body))
    }
}
