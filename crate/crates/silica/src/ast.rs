//! Core data model: the abstract syntax, reference types, typing contexts,
//! and the runtime configuration of the abstract machine.
//!
//! Everything here is immutable after construction and freely cloneable;
//! checking and evaluation thread fresh copies rather than mutating shared
//! state.

use std::fmt;

use indexmap::IndexMap;

use crate::diag::SourceSpan;

/// Ownership permission attached to a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Permission {
    Owned,
    Unowned,
    Shared,
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Permission::Owned => write!(f, "Owned"),
            Permission::Unowned => write!(f, "Unowned"),
            Permission::Shared => write!(f, "Shared"),
        }
    }
}

/// The mode component of a reference type: a nonempty disjunction of states,
/// a permission variable, or a plain permission.
///
/// After parsing, a lone identifier in mode position is parked as `PermVar`
/// and resolved by the checker against the generic context and the governing
/// contract's state names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Nonempty, duplicate-free, kept sorted so set equality is structural.
    States(Vec<String>),
    PermVar(String),
    Perm(Permission),
}

impl Mode {
    /// Builds a state-set mode. Errors on empty or duplicate names.
    pub fn states<I: IntoIterator<Item = String>>(names: I) -> Result<Mode, String> {
        let mut v: Vec<String> = names.into_iter().collect();
        if v.is_empty() {
            return Err("state set must be nonempty".into());
        }
        v.sort();
        for w in v.windows(2) {
            if w[0] == w[1] {
                return Err(format!("duplicate state name `{}` in state set", w[0]));
            }
        }
        Ok(Mode::States(v))
    }

    pub fn single_state(name: impl Into<String>) -> Mode {
        Mode::States(vec![name.into()])
    }

    pub fn is_states(&self) -> bool {
        matches!(self, Mode::States(_))
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Mode::PermVar(_))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // State sets always parenthesized: a bare identifier in mode
            // position is the symbolic (unresolved) form.
            Mode::States(ss) => write!(f, "({})", ss.join("|")),
            Mode::PermVar(p) => write!(f, "{p}"),
            Mode::Perm(p) => write!(f, "{p}"),
        }
    }
}

/// The contract component of a reference type: a named declaration applied to
/// type arguments, or a declaration variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ContractRef {
    Concrete { name: String, args: Vec<Type> },
    Var(String),
}

impl ContractRef {
    pub fn named(name: impl Into<String>) -> ContractRef {
        ContractRef::Concrete { name: name.into(), args: Vec::new() }
    }

    pub fn name(&self) -> &str {
        match self {
            ContractRef::Concrete { name, .. } => name,
            ContractRef::Var(x) => x,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, ContractRef::Var(_))
    }
}

impl fmt::Display for ContractRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContractRef::Concrete { name, args } => {
                write!(f, "{name}")?;
                if !args.is_empty() {
                    write!(f, "<")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ">")?;
                }
                Ok(())
            }
            ContractRef::Var(x) => write!(f, "{x}"),
        }
    }
}

/// A reference type `Contract@Mode`, or the unit type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Unit,
    Ref { contract: ContractRef, mode: Mode },
}

impl Type {
    pub fn reference(contract: ContractRef, mode: Mode) -> Type {
        Type::Ref { contract, mode }
    }

    pub fn contract(&self) -> Option<&ContractRef> {
        match self {
            Type::Unit => None,
            Type::Ref { contract, .. } => Some(contract),
        }
    }

    pub fn mode(&self) -> Option<&Mode> {
        match self {
            Type::Unit => None,
            Type::Ref { mode, .. } => Some(mode),
        }
    }

    /// Same contract head, different mode.
    pub fn with_mode(&self, mode: Mode) -> Type {
        match self {
            Type::Unit => Type::Unit,
            Type::Ref { contract, .. } => Type::Ref { contract: contract.clone(), mode },
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Type::Unit)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Unit => write!(f, "unit"),
            Type::Ref { contract, mode } => write!(f, "{contract}@{mode}"),
        }
    }
}

/// One generic parameter `[asset] X@p where I<T..>@Bound`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericParam {
    pub asset: bool,
    pub decl_var: String,
    pub perm_var: String,
    pub bound_interface: ContractRef,
    pub bound_mode: Mode,
}

/// A field declaration `T f`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub ty: Type,
    pub name: String,
    pub span: SourceSpan,
}

/// A state declaration `[asset] S { F.. }`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDecl {
    pub asset: bool,
    pub name: String,
    pub fields: Vec<FieldDecl>,
    pub span: SourceSpan,
}

/// Pre/post specification for a field of a private transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub field: String,
    pub pre: Mode,
    pub post: Mode,
}

/// A declared parameter: `C<..>@Pre [>> Post] name`. `post_mode` pairs with
/// the declared contract of the parameter (arguments cannot change class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSig {
    pub ty: Type,
    pub post_mode: Mode,
    pub name: String,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Public,
    Private,
}

/// A transaction signature; `field_specs` is `Some` exactly for private
/// transactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionSig {
    pub field_specs: Option<Vec<FieldSpec>>,
    pub return_type: Type,
    pub name: String,
    pub generics: Vec<GenericParam>,
    pub params: Vec<ParamSig>,
    pub this_pre: Mode,
    pub this_post: Mode,
    pub span: SourceSpan,
}

impl TransactionSig {
    pub fn visibility(&self) -> Visibility {
        if self.field_specs.is_some() {
            Visibility::Private
        } else {
            Visibility::Public
        }
    }
}

/// A transaction: signature plus body. Interfaces carry signatures only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sig: TransactionSig,
    pub body: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractDecl {
    pub name: String,
    pub generics: Vec<GenericParam>,
    /// `implements I<T..>`; omission behaves as an implicit empty interface.
    pub implements: Option<(String, Vec<Type>)>,
    pub states: Vec<StateDecl>,
    pub transactions: Vec<Transaction>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceDecl {
    pub name: String,
    pub generics: Vec<GenericParam>,
    pub states: Vec<StateDecl>,
    pub signatures: Vec<TransactionSig>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub interfaces: Vec<InterfaceDecl>,
    pub contracts: Vec<ContractDecl>,
    pub main: Expr,
}

/// Heap object identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub u32);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// Indirect reference (machine-level local binding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocId(pub u32);

impl fmt::Display for LocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

/// A simple expression: a source variable, an indirect reference, or an
/// object reference. Variables occur only before evaluation; the reference
/// forms occur only in machine states and oracle contexts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Binding {
    Var(String),
    Loc(LocId),
    Obj(ObjId),
}

impl Binding {
    pub fn var(name: impl Into<String>) -> Binding {
        Binding::Var(name.into())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Var(x) => write!(f, "{x}"),
            Binding::Loc(l) => write!(f, "{l}"),
            Binding::Obj(o) => write!(f, "{o}"),
        }
    }
}

/// Annotation on a state transition, resolved by the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionAnnot {
    Unresolved,
    Owned,
    Shared,
}

/// Annotation on a dynamic state check, resolved by the checker from the
/// scrutinee's static mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckAnnot {
    Unresolved,
    Owned,
    Shared,
    Unowned,
    Perm(Permission),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    /// Read of a simple expression.
    Simple(Binding),
    /// Unit literal `()`.
    UnitLit,
    /// `s.f`
    Field { recv: Binding, field: String },
    /// `s.m<T..>(a..)`
    Invoke { recv: Binding, name: String, type_args: Vec<Type>, args: Vec<Binding> },
    /// `let x: T = e1 in e2`
    Let { var: String, ty: Type, bound: Box<Expr>, body: Box<Expr> },
    /// `new C<T..>.S(a..)`
    New { contract: String, type_args: Vec<Type>, state: String, args: Vec<Binding> },
    /// `s ->S(a..)`
    Transition { recv: Binding, annot: TransitionAnnot, state: String, args: Vec<Binding> },
    /// `s.f := s2`
    FieldWrite { recv: Binding, field: String, src: Binding },
    /// `[s @ Mode]`
    StaticAssert { subject: Binding, mode: Mode },
    /// `if s in Mode { e1 } else { e2 }`
    DynamicCheck {
        subject: Binding,
        annot: CheckAnnot,
        tested: Mode,
        then_branch: Box<Expr>,
        else_branch: Box<Expr>,
    },
    /// `disown s`
    Disown(Binding),
    /// `pack`
    Pack,
    /// Runtime-only: state-lock container; unlocks `obj` when the interior
    /// reaches a value.
    StateLockBox { inner: Box<Expr>, obj: ObjId },
    /// Runtime-only: reentrancy container; releases `obj` when the interior
    /// reaches a value.
    ReentrancyBox { inner: Box<Expr>, obj: ObjId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: SourceSpan,
}

impl Expr {
    pub fn new(kind: ExprKind, span: SourceSpan) -> Expr {
        Expr { kind, span }
    }

    pub fn synthetic(kind: ExprKind) -> Expr {
        Expr { kind, span: SourceSpan::synthetic() }
    }

    /// A machine value: unit literal or object reference.
    pub fn as_value(&self) -> Option<Value> {
        match &self.kind {
            ExprKind::UnitLit => Some(Value::Unit),
            ExprKind::Simple(Binding::Obj(o)) => Some(Value::Obj(*o)),
            _ => None,
        }
    }

    pub fn from_value(v: Value) -> Expr {
        match v {
            Value::Unit => Expr::synthetic(ExprKind::UnitLit),
            Value::Obj(o) => Expr::synthetic(ExprKind::Simple(Binding::Obj(o))),
        }
    }
}

/// A key in the typing context: a binding, or a field override of a
/// receiver.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CtxKey {
    Bind(Binding),
    FieldOverride(Binding, String),
}

impl fmt::Display for CtxKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CtxKey::Bind(b) => write!(f, "{b}"),
            CtxKey::FieldOverride(b, field) => write!(f, "{b}.{field}"),
        }
    }
}

/// Ordered typing context; a new mapping replaces any previous mapping for
/// the same key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypingContext {
    entries: IndexMap<CtxKey, Type>,
}

impl TypingContext {
    pub fn new() -> TypingContext {
        TypingContext::default()
    }

    pub fn bind(&mut self, b: Binding, ty: Type) {
        self.entries.insert(CtxKey::Bind(b), ty);
    }

    pub fn bind_override(&mut self, recv: Binding, field: impl Into<String>, ty: Type) {
        self.entries.insert(CtxKey::FieldOverride(recv, field.into()), ty);
    }

    pub fn get(&self, b: &Binding) -> Option<&Type> {
        self.entries.get(&CtxKey::Bind(b.clone()))
    }

    pub fn get_override(&self, recv: &Binding, field: &str) -> Option<&Type> {
        self.entries.get(&CtxKey::FieldOverride(recv.clone(), field.to_string()))
    }

    pub fn remove(&mut self, b: &Binding) -> Option<Type> {
        self.entries.shift_remove(&CtxKey::Bind(b.clone()))
    }

    pub fn remove_override(&mut self, recv: &Binding, field: &str) -> Option<Type> {
        self.entries.shift_remove(&CtxKey::FieldOverride(recv.clone(), field.to_string()))
    }

    /// Removes every field override whose receiver is `recv`; returns them.
    pub fn take_overrides_of(&mut self, recv: &Binding) -> Vec<(String, Type)> {
        let keys: Vec<CtxKey> = self
            .entries
            .keys()
            .filter(|k| matches!(k, CtxKey::FieldOverride(b, _) if b == recv))
            .cloned()
            .collect();
        let mut out = Vec::new();
        for k in keys {
            if let CtxKey::FieldOverride(_, f) = &k {
                let ty = self.entries.shift_remove(&k).expect("key just listed");
                out.push((f.clone(), ty));
            }
        }
        out
    }

    pub fn overrides_of(&self, recv: &Binding) -> Vec<(String, Type)> {
        self.entries
            .iter()
            .filter_map(|(k, t)| match k {
                CtxKey::FieldOverride(b, f) if b == recv => Some((f.clone(), t.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CtxKey, &Type)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CtxKey> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &CtxKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: CtxKey, ty: Type) {
        self.entries.insert(key, ty);
    }

    pub fn get_key(&self, key: &CtxKey) -> Option<&Type> {
        self.entries.get(key)
    }

    pub fn remove_key(&mut self, key: &CtxKey) -> Option<Type> {
        self.entries.shift_remove(key)
    }
}

impl fmt::Display for TypingContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, t)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}: {t}")?;
        }
        write!(f, "}}")
    }
}

/// The generic parameters in scope.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenericContext {
    params: Vec<GenericParam>,
}

impl GenericContext {
    pub fn new() -> GenericContext {
        GenericContext::default()
    }

    /// Extends the context; a parameter with a colliding variable name
    /// replaces the earlier one.
    pub fn push(&mut self, p: GenericParam) {
        self.params
            .retain(|q| q.decl_var != p.decl_var && q.perm_var != p.perm_var);
        self.params.push(p);
    }

    pub fn extend<I: IntoIterator<Item = GenericParam>>(&mut self, ps: I) {
        for p in ps {
            self.push(p);
        }
    }

    pub fn by_decl_var(&self, x: &str) -> Option<&GenericParam> {
        self.params.iter().find(|p| p.decl_var == x)
    }

    pub fn by_perm_var(&self, p: &str) -> Option<&GenericParam> {
        self.params.iter().find(|q| q.perm_var == p)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GenericParam> {
        self.params.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// A machine value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Unit,
    Obj(ObjId),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "unit"),
            Value::Obj(o) => write!(f, "{o}"),
        }
    }
}

/// A heap object: concrete contract instantiation, current state, and field
/// values positional in the (desugared) state field order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapObj {
    pub contract: String,
    pub type_args: Vec<Type>,
    pub state: String,
    pub fields: Vec<Value>,
}

/// The abstract machine state: heap, environment, state-lock set,
/// reentrancy set, and permission environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub heap: IndexMap<ObjId, HeapObj>,
    pub env: IndexMap<LocId, Value>,
    pub state_locks: std::collections::BTreeSet<ObjId>,
    pub active_receivers: std::collections::BTreeSet<ObjId>,
    perm_env: IndexMap<String, Mode>,
    next_obj: u32,
    next_loc: u32,
}

impl RuntimeConfig {
    pub fn new() -> RuntimeConfig {
        RuntimeConfig::default()
    }

    pub fn fresh_obj(&mut self) -> ObjId {
        let o = ObjId(self.next_obj);
        self.next_obj += 1;
        o
    }

    pub fn fresh_loc(&mut self) -> LocId {
        let l = LocId(self.next_loc);
        self.next_loc += 1;
        l
    }

    /// Extends the permission environment. Panics if the mode is itself a
    /// variable: the environment maps only to concrete permissions or states.
    pub fn bind_perm(&mut self, var: impl Into<String>, mode: Mode) {
        assert!(
            !mode.is_var(),
            "permission environment must map to concrete modes"
        );
        self.perm_env.insert(var.into(), mode);
    }

    pub fn perm(&self, var: &str) -> Option<&Mode> {
        self.perm_env.get(var)
    }

    pub fn perm_env(&self) -> &IndexMap<String, Mode> {
        &self.perm_env
    }

    /// Resolves a binding to the object it references, if any.
    pub fn object_of(&self, b: &Binding) -> Option<ObjId> {
        match b {
            Binding::Obj(o) => Some(*o),
            Binding::Loc(l) => match self.env.get(l) {
                Some(Value::Obj(o)) => Some(*o),
                _ => None,
            },
            Binding::Var(_) => None,
        }
    }
}
