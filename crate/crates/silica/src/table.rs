//! Program-scoped declaration table (the calculus' ambient `def`, `sdef`,
//! `tdef` made explicit) and the sequential type-parameter substitution.

use indexmap::IndexMap;

use crate::ast::*;

#[derive(Debug, Clone)]
pub struct ProgramTable {
    contracts: IndexMap<String, ContractDecl>,
    interfaces: IndexMap<String, InterfaceDecl>,
}

#[derive(Debug, Clone, Copy)]
pub enum Decl<'a> {
    Contract(&'a ContractDecl),
    Interface(&'a InterfaceDecl),
}

impl ProgramTable {
    pub fn build(program: &Program) -> ProgramTable {
        let mut contracts = IndexMap::new();
        let mut interfaces = IndexMap::new();
        for c in &program.contracts {
            contracts.insert(c.name.clone(), c.clone());
        }
        for i in &program.interfaces {
            interfaces.insert(i.name.clone(), i.clone());
        }
        ProgramTable { contracts, interfaces }
    }

    pub fn def(&self, name: &str) -> Option<Decl<'_>> {
        if let Some(c) = self.contracts.get(name) {
            return Some(Decl::Contract(c));
        }
        self.interfaces.get(name).map(Decl::Interface)
    }

    pub fn contract(&self, name: &str) -> Option<&ContractDecl> {
        self.contracts.get(name)
    }

    pub fn interface(&self, name: &str) -> Option<&InterfaceDecl> {
        self.interfaces.get(name)
    }

    pub fn contracts(&self) -> impl Iterator<Item = &ContractDecl> {
        self.contracts.values()
    }

    pub fn params(&self, name: &str) -> Option<&[GenericParam]> {
        match self.def(name)? {
            Decl::Contract(c) => Some(&c.generics),
            Decl::Interface(i) => Some(&i.generics),
        }
    }

    pub fn states(&self, name: &str) -> Option<&[StateDecl]> {
        match self.def(name)? {
            Decl::Contract(c) => Some(&c.states),
            Decl::Interface(i) => Some(&i.states),
        }
    }

    pub fn state_names(&self, name: &str) -> Option<Vec<String>> {
        Some(self.states(name)?.iter().map(|s| s.name.clone()).collect())
    }

    pub fn sdef(&self, decl: &str, state: &str) -> Option<&StateDecl> {
        self.states(decl)?.iter().find(|s| s.name == state)
    }

    /// Transaction definition: for contracts the signature plus body, for
    /// interfaces the signature alone.
    pub fn tdef(&self, decl: &str, name: &str) -> Option<(&TransactionSig, Option<&Expr>)> {
        match self.def(decl)? {
            Decl::Contract(c) => c
                .transactions
                .iter()
                .find(|t| t.sig.name == name)
                .map(|t| (&t.sig, Some(&t.body))),
            Decl::Interface(i) => i
                .signatures
                .iter()
                .find(|s| s.name == name)
                .map(|s| (s, None)),
        }
    }

    pub fn transaction_names(&self, decl: &str) -> Vec<String> {
        match self.def(decl) {
            Some(Decl::Contract(c)) => c.transactions.iter().map(|t| t.sig.name.clone()).collect(),
            Some(Decl::Interface(i)) => i.signatures.iter().map(|s| s.name.clone()).collect(),
            None => Vec::new(),
        }
    }

    /// The contract's self instantiation `C<X1@p1, ..>`: each parameter
    /// applied to itself. Substituting by these arguments is the identity.
    pub fn self_type_args(generics: &[GenericParam]) -> Vec<Type> {
        generics
            .iter()
            .map(|g| Type::Ref {
                contract: ContractRef::Var(g.decl_var.clone()),
                mode: Mode::PermVar(g.perm_var.clone()),
            })
            .collect()
    }

    /// The interface instantiation a concrete contract head implements,
    /// with the contract's own parameters substituted by `args`.
    pub fn implemented_interface(&self, contract: &str, args: &[Type]) -> Option<ContractRef> {
        let c = self.contract(contract)?;
        let (iface, iface_args) = c.implements.as_ref()?;
        let subst = Subst::sequential(&c.generics, args);
        Some(ContractRef::Concrete {
            name: iface.clone(),
            args: iface_args.iter().map(|t| subst.apply_type(t)).collect(),
        })
    }
}

/// A left-to-right sequential substitution of generic parameters.
#[derive(Debug, Clone, Default)]
pub struct Subst {
    steps: Vec<(String, String, ContractRef, Mode)>, // (X, p, head, mode)
}

impl Subst {
    pub fn identity() -> Subst {
        Subst::default()
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// Pairs parameters with arguments positionally; arity is the caller's
    /// concern. Unit arguments substitute a head that can never occur in a
    /// well-formed program (guarded by subsOk before use).
    pub fn sequential(params: &[GenericParam], args: &[Type]) -> Subst {
        let mut steps = Vec::new();
        for (p, a) in params.iter().zip(args.iter()) {
            let (head, mode) = match a {
                Type::Ref { contract, mode } => (contract.clone(), mode.clone()),
                Type::Unit => (
                    ContractRef::named("unit"),
                    Mode::Perm(Permission::Unowned),
                ),
            };
            steps.push((p.decl_var.clone(), p.perm_var.clone(), head, mode));
        }
        Subst { steps }
    }

    /// Extends with a second parameter list (e.g. transaction generics after
    /// the contract's).
    pub fn then(mut self, other: Subst) -> Subst {
        self.steps.extend(other.steps);
        self
    }

    fn apply_head_once(x: &str, p: &str, head: &ContractRef, mode: &Mode, target: &ContractRef) -> ContractRef {
        match target {
            ContractRef::Var(v) if v == x => head.clone(),
            ContractRef::Var(_) => target.clone(),
            ContractRef::Concrete { name, args } => ContractRef::Concrete {
                name: name.clone(),
                args: args
                    .iter()
                    .map(|t| Self::apply_type_once(x, p, head, mode, t))
                    .collect(),
            },
        }
    }

    fn apply_mode_once(p: &str, mode: &Mode, target: &Mode) -> Mode {
        match target {
            Mode::PermVar(v) if v == p => mode.clone(),
            _ => target.clone(),
        }
    }

    fn apply_type_once(x: &str, p: &str, head: &ContractRef, mode: &Mode, target: &Type) -> Type {
        match target {
            Type::Unit => Type::Unit,
            Type::Ref { contract, mode: m } => Type::Ref {
                contract: Self::apply_head_once(x, p, head, mode, contract),
                mode: Self::apply_mode_once(p, mode, m),
            },
        }
    }

    pub fn apply_type(&self, t: &Type) -> Type {
        let mut cur = t.clone();
        for (x, p, head, mode) in &self.steps {
            cur = Self::apply_type_once(x, p, head, mode, &cur);
        }
        cur
    }

    pub fn apply_mode(&self, m: &Mode) -> Mode {
        let mut cur = m.clone();
        for (_, p, _, mode) in &self.steps {
            cur = Self::apply_mode_once(p, mode, &cur);
        }
        cur
    }

    pub fn apply_head(&self, c: &ContractRef) -> ContractRef {
        let mut cur = c.clone();
        for (x, p, head, mode) in &self.steps {
            cur = Self::apply_head_once(x, p, head, mode, &cur);
        }
        cur
    }

    pub fn apply_sig(&self, sig: &TransactionSig) -> TransactionSig {
        TransactionSig {
            field_specs: sig.field_specs.as_ref().map(|specs| {
                specs
                    .iter()
                    .map(|s| FieldSpec {
                        field: s.field.clone(),
                        pre: self.apply_mode(&s.pre),
                        post: self.apply_mode(&s.post),
                    })
                    .collect()
            }),
            return_type: self.apply_type(&sig.return_type),
            name: sig.name.clone(),
            generics: sig
                .generics
                .iter()
                .map(|g| GenericParam {
                    asset: g.asset,
                    decl_var: g.decl_var.clone(),
                    perm_var: g.perm_var.clone(),
                    bound_interface: self.apply_head(&g.bound_interface),
                    bound_mode: self.apply_mode(&g.bound_mode),
                })
                .collect(),
            params: sig
                .params
                .iter()
                .map(|q| ParamSig {
                    ty: self.apply_type(&q.ty),
                    post_mode: self.apply_mode(&q.post_mode),
                    name: q.name.clone(),
                    span: q.span,
                })
                .collect(),
            this_pre: self.apply_mode(&sig.this_pre),
            this_post: self.apply_mode(&sig.this_post),
            span: sig.span,
        }
    }

    pub fn apply_expr(&self, e: &Expr) -> Expr {
        let kind = match &e.kind {
            ExprKind::Simple(b) => ExprKind::Simple(b.clone()),
            ExprKind::UnitLit => ExprKind::UnitLit,
            ExprKind::Field { recv, field } => {
                ExprKind::Field { recv: recv.clone(), field: field.clone() }
            }
            ExprKind::Invoke { recv, name, type_args, args } => ExprKind::Invoke {
                recv: recv.clone(),
                name: name.clone(),
                type_args: type_args.iter().map(|t| self.apply_type(t)).collect(),
                args: args.clone(),
            },
            ExprKind::Let { var, ty, bound, body } => ExprKind::Let {
                var: var.clone(),
                ty: self.apply_type(ty),
                bound: Box::new(self.apply_expr(bound)),
                body: Box::new(self.apply_expr(body)),
            },
            ExprKind::New { contract, type_args, state, args } => ExprKind::New {
                contract: contract.clone(),
                type_args: type_args.iter().map(|t| self.apply_type(t)).collect(),
                state: state.clone(),
                args: args.clone(),
            },
            ExprKind::Transition { recv, annot, state, args } => ExprKind::Transition {
                recv: recv.clone(),
                annot: *annot,
                state: state.clone(),
                args: args.clone(),
            },
            ExprKind::FieldWrite { recv, field, src } => ExprKind::FieldWrite {
                recv: recv.clone(),
                field: field.clone(),
                src: src.clone(),
            },
            ExprKind::StaticAssert { subject, mode } => ExprKind::StaticAssert {
                subject: subject.clone(),
                mode: self.apply_mode(mode),
            },
            ExprKind::DynamicCheck { subject, annot, tested, then_branch, else_branch } => {
                ExprKind::DynamicCheck {
                    subject: subject.clone(),
                    annot: *annot,
                    tested: self.apply_mode(tested),
                    then_branch: Box::new(self.apply_expr(then_branch)),
                    else_branch: Box::new(self.apply_expr(else_branch)),
                }
            }
            ExprKind::Disown(b) => ExprKind::Disown(b.clone()),
            ExprKind::Pack => ExprKind::Pack,
            ExprKind::StateLockBox { inner, obj } => ExprKind::StateLockBox {
                inner: Box::new(self.apply_expr(inner)),
                obj: *obj,
            },
            ExprKind::ReentrancyBox { inner, obj } => ExprKind::ReentrancyBox {
                inner: Box::new(self.apply_expr(inner)),
                obj: *obj,
            },
        };
        Expr { kind, span: e.span }
    }
}
