//! Recursive-descent parser for the surface syntax (normative grammar in
//! docs/grammar.md).
//!
//! Argument positions admit only identifiers, so A-normal form is enforced
//! syntactically. A lone identifier in mode position is kept symbolic
//! (parked as a permission variable); the checker resolves it against the
//! generic context and the governing contract's state names. Contract-level
//! fields are desugared here into every state's field list, contract fields
//! first in declaration order.

use crate::ast::*;
use crate::diag::{codes, Diagnostic, SourceSpan};
use crate::lexer::{lex, Tok, Token};

pub fn parse_program(source: &str) -> Result<Program, Vec<Diagnostic>> {
    let tokens = match lex(source) {
        Ok(t) => t,
        Err(d) => return Err(vec![d]),
    };
    let mut p = Parser { tokens, pos: 0, diags: Vec::new() };
    let program = p.program();
    match program {
        Some(prog) if p.diags.is_empty() => Ok(prog),
        _ => {
            if p.diags.is_empty() {
                p.diags.push(Diagnostic::error(
                    codes::SYN001,
                    SourceSpan::point(1, 1),
                    "parse",
                    "malformed program",
                ));
            }
            Err(p.diags)
        }
    }
}

pub fn parse_expression(source: &str) -> Result<Expr, Vec<Diagnostic>> {
    let tokens = match lex(source) {
        Ok(t) => t,
        Err(d) => return Err(vec![d]),
    };
    let mut p = Parser { tokens, pos: 0, diags: Vec::new() };
    let e = p.expr();
    match e {
        Some(e) if p.diags.is_empty() => {
            if p.peek() != &Tok::Eof {
                return Err(vec![p.unexpected("end of input")]);
            }
            Ok(e)
        }
        _ => Err(p.diags),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn prev_span(&self) -> SourceSpan {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&mut self, wanted: &str) -> Diagnostic {
        Diagnostic::error(
            codes::SYN001,
            self.span(),
            "parse",
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, t: Tok, wanted: &str) -> Option<SourceSpan> {
        // `>>` doubles as two `>`s when closing nested generics.
        if t == Tok::Gt && *self.peek() == Tok::GtGt {
            let sp = self.span();
            self.tokens[self.pos] = Token {
                tok: Tok::Gt,
                span: SourceSpan::new(sp.start_line, sp.start_col + 1, sp.end_line, sp.end_col),
            };
            return Some(SourceSpan::new(sp.start_line, sp.start_col, sp.start_line, sp.start_col));
        }
        if self.peek() == &t {
            let sp = self.span();
            self.bump();
            Some(sp)
        } else {
            let d = self.unexpected(wanted);
            self.diags.push(d);
            None
        }
    }

    fn ident(&mut self, wanted: &str) -> Option<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let sp = self.span();
                self.bump();
                Some((s, sp))
            }
            _ => {
                let d = self.unexpected(wanted);
                self.diags.push(d);
                None
            }
        }
    }

    /// Skips to the next declaration-level synchronization point.
    fn sync_decl(&mut self) {
        loop {
            match self.peek() {
                Tok::Contract | Tok::Interface | Tok::Main | Tok::Eof => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    /// Skips to the next member-level synchronization point inside a body.
    fn sync_member(&mut self) {
        let mut depth = 0i32;
        loop {
            match self.peek() {
                Tok::State | Tok::Transaction | Tok::Private | Tok::Asset if depth == 0 => return,
                Tok::RBrace if depth == 0 => return,
                Tok::Eof => return,
                Tok::LBrace => {
                    depth += 1;
                    self.bump();
                }
                Tok::RBrace => {
                    depth -= 1;
                    self.bump();
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn program(&mut self) -> Option<Program> {
        let mut interfaces: Vec<InterfaceDecl> = Vec::new();
        let mut contracts: Vec<ContractDecl> = Vec::new();
        let mut names: Vec<(String, SourceSpan)> = Vec::new();
        loop {
            match self.peek() {
                Tok::Contract | Tok::Asset => {
                    let asset_sugar = self.eat(&Tok::Asset);
                    if self.expect(Tok::Contract, "`contract`").is_none() {
                        self.sync_decl();
                        continue;
                    }
                    match self.contract(asset_sugar) {
                        Some(c) => {
                            self.check_dup(&mut names, &c.name, c.span);
                            contracts.push(c);
                        }
                        None => self.sync_decl(),
                    }
                }
                Tok::Interface => {
                    self.bump();
                    match self.interface() {
                        Some(i) => {
                            self.check_dup(&mut names, &i.name, i.span);
                            interfaces.push(i);
                        }
                        None => self.sync_decl(),
                    }
                }
                Tok::Main => {
                    self.bump();
                    let main = self.expr()?;
                    if self.peek() != &Tok::Eof {
                        let d = self.unexpected("end of input after the main expression");
                        self.diags.push(d);
                        return None;
                    }
                    return Some(Program { interfaces, contracts, main });
                }
                Tok::Eof => {
                    let d = self.unexpected("`main <expr>` to end the program");
                    self.diags.push(d);
                    return None;
                }
                _ => {
                    let d = self.unexpected("`contract`, `interface`, or `main`");
                    self.diags.push(d);
                    self.sync_decl();
                }
            }
        }
    }

    fn check_dup(&mut self, names: &mut Vec<(String, SourceSpan)>, name: &str, span: SourceSpan) {
        if names.iter().any(|(n, _)| n == name) {
            self.diags.push(Diagnostic::error(
                codes::SYN003,
                span,
                "parse",
                format!("duplicate declaration name `{name}`"),
            ));
        } else {
            names.push((name.to_string(), span));
        }
    }

    fn generics(&mut self) -> Option<Vec<GenericParam>> {
        if !self.eat(&Tok::Lt) {
            return Some(Vec::new());
        }
        let mut out = Vec::new();
        loop {
            let asset = self.eat(&Tok::Asset);
            let (x, _) = self.ident("declaration variable")?;
            self.expect(Tok::At, "`@` between declaration and permission variables")?;
            let (p, _) = self.ident("permission variable")?;
            self.expect(Tok::Where, "`where` introducing the interface bound")?;
            let (iface, _) = self.ident("interface name")?;
            let args = self.type_args()?;
            self.expect(Tok::At, "`@` before the bound mode")?;
            let bound_mode = self.mode()?;
            out.push(GenericParam {
                asset,
                decl_var: x,
                perm_var: p,
                bound_interface: ContractRef::Concrete { name: iface, args },
                bound_mode,
            });
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::Gt, "`>` closing the generic parameter list")?;
            return Some(out);
        }
    }

    fn type_args(&mut self) -> Option<Vec<Type>> {
        if !self.eat(&Tok::Lt) {
            return Some(Vec::new());
        }
        let mut out = Vec::new();
        loop {
            out.push(self.ty()?);
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::Gt, "`>` closing the type argument list")?;
            return Some(out);
        }
    }

    fn ty(&mut self) -> Option<Type> {
        if self.eat(&Tok::Unit) {
            return Some(Type::Unit);
        }
        let (name, _) = self.ident("type")?;
        let args = self.type_args()?;
        self.expect(Tok::At, "`@` before the mode")?;
        let mode = self.mode()?;
        Some(Type::Ref { contract: ContractRef::Concrete { name, args }, mode })
    }

    fn mode(&mut self) -> Option<Mode> {
        if self.eat(&Tok::LParen) {
            let mut states = Vec::new();
            loop {
                let (s, sp) = self.ident("state name")?;
                states.push((s, sp));
                if self.eat(&Tok::Pipe) {
                    continue;
                }
                self.expect(Tok::RParen, "`)` closing the state disjunction")?;
                break;
            }
            let span = states[0].1;
            match Mode::states(states.into_iter().map(|(s, _)| s)) {
                Ok(m) => return Some(m),
                Err(msg) => {
                    self.diags.push(Diagnostic::error(codes::SYN001, span, "parse", msg));
                    return None;
                }
            }
        }
        let (name, _) = self.ident("mode")?;
        Some(match name.as_str() {
            "Owned" => Mode::Perm(Permission::Owned),
            "Unowned" => Mode::Perm(Permission::Unowned),
            "Shared" => Mode::Perm(Permission::Shared),
            // Symbolic: state name or permission variable, resolved later.
            _ => Mode::PermVar(name),
        })
    }

    fn contract(&mut self, asset_sugar: bool) -> Option<ContractDecl> {
        let (name, name_span) = self.ident("contract name")?;
        let generics = self.generics()?;
        let implements = if self.eat(&Tok::Implements) {
            let (iface, _) = self.ident("interface name")?;
            let args = self.type_args()?;
            Some((iface, args))
        } else {
            None
        };
        self.expect(Tok::LBrace, "`{` opening the contract body")?;
        let mut contract_fields: Vec<FieldDecl> = Vec::new();
        let mut states: Vec<StateDecl> = Vec::new();
        let mut transactions: Vec<Transaction> = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    let d = self.unexpected("`}` closing the contract body");
                    self.diags.push(d);
                    return None;
                }
                Tok::Asset | Tok::State => {
                    let asset = self.eat(&Tok::Asset);
                    if self.expect(Tok::State, "`state`").is_none() {
                        self.sync_member();
                        continue;
                    }
                    match self.state(asset || asset_sugar) {
                        Some(s) => states.push(s),
                        None => self.sync_member(),
                    }
                }
                Tok::Transaction | Tok::Private => match self.transaction() {
                    Some(t) => transactions.push(t),
                    None => self.sync_member(),
                },
                Tok::Ident(_) | Tok::Unit => match self.field() {
                    Some(f) => contract_fields.push(f),
                    None => self.sync_member(),
                },
                _ => {
                    let d = self.unexpected("a field, state, or transaction");
                    self.diags.push(d);
                    self.sync_member();
                }
            }
        }
        // Contract-level fields are in scope in every state.
        for st in &mut states {
            let mut fields = contract_fields.clone();
            fields.append(&mut st.fields);
            st.fields = fields;
        }
        Some(ContractDecl { name, generics, implements, states, transactions, span: name_span })
    }

    fn interface(&mut self) -> Option<InterfaceDecl> {
        let (name, name_span) = self.ident("interface name")?;
        let generics = self.generics()?;
        self.expect(Tok::LBrace, "`{` opening the interface body")?;
        let mut states = Vec::new();
        let mut signatures = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Eof => {
                    let d = self.unexpected("`}` closing the interface body");
                    self.diags.push(d);
                    return None;
                }
                Tok::Asset | Tok::State => {
                    let asset = self.eat(&Tok::Asset);
                    if self.expect(Tok::State, "`state`").is_none() {
                        self.sync_member();
                        continue;
                    }
                    match self.state(asset) {
                        Some(s) => states.push(s),
                        None => self.sync_member(),
                    }
                }
                Tok::Transaction | Tok::Private => match self.signature() {
                    Some(sig) => {
                        self.expect(Tok::Semi, "`;` after the interface signature");
                        signatures.push(sig);
                    }
                    None => self.sync_member(),
                },
                _ => {
                    let d = self.unexpected("a state or transaction signature");
                    self.diags.push(d);
                    self.sync_member();
                }
            }
        }
        Some(InterfaceDecl { name, generics, states, signatures, span: name_span })
    }

    fn state(&mut self, asset: bool) -> Option<StateDecl> {
        let (name, span) = self.ident("state name")?;
        let mut fields = Vec::new();
        if self.eat(&Tok::LBrace) {
            loop {
                if self.eat(&Tok::RBrace) {
                    break;
                }
                if self.peek() == &Tok::Eof {
                    let d = self.unexpected("`}` closing the state body");
                    self.diags.push(d);
                    return None;
                }
                fields.push(self.field()?);
            }
        }
        self.eat(&Tok::Semi);
        Some(StateDecl { asset, name, fields, span })
    }

    fn field(&mut self) -> Option<FieldDecl> {
        let start = self.span();
        let ty = self.ty()?;
        let (name, nsp) = self.ident("field name")?;
        self.expect(Tok::Semi, "`;` after the field declaration")?;
        Some(FieldDecl { ty, name, span: start.merge(nsp) })
    }

    fn signature(&mut self) -> Option<TransactionSig> {
        let start = self.span();
        let field_specs = if self.eat(&Tok::Private) {
            self.expect(Tok::LBracket, "`[` opening the field specifications")?;
            let mut specs = Vec::new();
            if !self.eat(&Tok::RBracket) {
                loop {
                    let (field, _) = self.ident("field name")?;
                    self.expect(Tok::Colon, "`:` after the field name")?;
                    let pre = self.mode()?;
                    self.expect(Tok::GtGt, "`>>` between field pre- and post-modes")?;
                    let post = self.mode()?;
                    specs.push(FieldSpec { field, pre, post });
                    if self.eat(&Tok::Comma) {
                        continue;
                    }
                    self.expect(Tok::RBracket, "`]` closing the field specifications")?;
                    break;
                }
            }
            Some(specs)
        } else {
            None
        };
        self.expect(Tok::Transaction, "`transaction`")?;
        let (name, _) = self.ident("transaction name")?;
        let generics = self.generics()?;
        self.expect(Tok::LParen, "`(` opening the parameter list")?;

        let mut this_pre = None;
        let mut this_post = None;
        let mut params: Vec<ParamSig> = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let psp = self.span();
                let ty = self.ty()?;
                let declared_mode = ty.mode().cloned();
                let post = if self.eat(&Tok::GtGt) {
                    Some(self.mode()?)
                } else {
                    None
                };
                let (pname, psp2) = self.ident("parameter name")?;
                if pname == "this" {
                    if !params.is_empty() || this_pre.is_some() {
                        self.diags.push(Diagnostic::error(
                            codes::SYN001,
                            psp2,
                            "parse",
                            "`this` must be the first parameter",
                        ));
                        return None;
                    }
                    match declared_mode {
                        Some(pre) => {
                            this_post = Some(post.unwrap_or_else(|| pre.clone()));
                            this_pre = Some(pre);
                        }
                        None => {
                            self.diags.push(Diagnostic::error(
                                codes::SYN001,
                                psp2,
                                "parse",
                                "the receiver parameter cannot have unit type",
                            ));
                            return None;
                        }
                    }
                } else {
                    let post_mode = match (&ty, post) {
                        (Type::Unit, _) => Mode::Perm(Permission::Unowned),
                        (_, Some(m)) => m,
                        (Type::Ref { mode, .. }, None) => mode.clone(),
                    };
                    params.push(ParamSig { ty, post_mode, name: pname, span: psp.merge(psp2) });
                }
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen, "`)` closing the parameter list")?;
                break;
            }
        }
        let (this_pre, this_post) = match (this_pre, this_post) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                self.diags.push(Diagnostic::error(
                    codes::SYN001,
                    start,
                    "parse",
                    format!("transaction `{name}` must declare a receiver parameter named `this` first"),
                ));
                return None;
            }
        };
        let return_type = if self.eat(&Tok::Returns) {
            self.ty()?
        } else {
            Type::Unit
        };
        Some(TransactionSig {
            field_specs,
            return_type,
            name,
            generics,
            params,
            this_pre,
            this_post,
            span: start,
        })
    }

    fn transaction(&mut self) -> Option<Transaction> {
        let sig = self.signature()?;
        self.expect(Tok::LBrace, "`{` opening the transaction body")?;
        let body = self.expr()?;
        self.expect(Tok::RBrace, "`}` closing the transaction body")?;
        Some(Transaction { sig, body })
    }

    /// Argument list of simple expressions. Rejects nested expressions with
    /// SYN002.
    fn simple_args(&mut self) -> Option<Vec<Binding>> {
        self.expect(Tok::LParen, "`(` opening the argument list")?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Some(out);
        }
        loop {
            match self.peek().clone() {
                Tok::Ident(s) => {
                    let sp = self.span();
                    self.bump();
                    match self.peek() {
                        Tok::LParen | Tok::Dot | Tok::Arrow => {
                            self.diags.push(Diagnostic::error(
                                codes::SYN002,
                                sp,
                                "parse",
                                "argument positions admit only simple expressions",
                            ));
                            return None;
                        }
                        _ => out.push(Binding::Var(s)),
                    }
                }
                Tok::New | Tok::Let | Tok::If | Tok::Disown | Tok::Pack | Tok::LParen => {
                    self.diags.push(Diagnostic::error(
                        codes::SYN002,
                        self.span(),
                        "parse",
                        "argument positions admit only simple expressions",
                    ));
                    return None;
                }
                _ => {
                    let d = self.unexpected("an argument identifier");
                    self.diags.push(d);
                    return None;
                }
            }
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "`)` closing the argument list")?;
            return Some(out);
        }
    }

    fn expr(&mut self) -> Option<Expr> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Let => {
                self.bump();
                let (var, _) = self.ident("binding name")?;
                self.expect(Tok::Colon, "`:` before the binding type")?;
                let ty = self.ty()?;
                self.expect(Tok::Eq, "`=` before the bound expression")?;
                let bound = self.expr()?;
                self.expect(Tok::In, "`in` before the body")?;
                let body = self.expr()?;
                let span = start.merge(body.span);
                Some(Expr::new(
                    ExprKind::Let { var, ty, bound: Box::new(bound), body: Box::new(body) },
                    span,
                ))
            }
            Tok::New => {
                self.bump();
                let (contract, _) = self.ident("contract name")?;
                let type_args = self.type_args()?;
                self.expect(Tok::Dot, "`.` before the target state")?;
                let (state, _) = self.ident("state name")?;
                let args = self.simple_args()?;
                let span = start.merge(self.prev_span());
                Some(Expr::new(ExprKind::New { contract, type_args, state, args }, span))
            }
            Tok::If => {
                self.bump();
                let (subject, _) = self.ident("scrutinee")?;
                self.expect(Tok::In, "`in` before the tested mode")?;
                let tested = self.mode()?;
                self.expect(Tok::LBrace, "`{` opening the then branch")?;
                let then_branch = self.expr()?;
                self.expect(Tok::RBrace, "`}` closing the then branch")?;
                self.expect(Tok::Else, "`else`")?;
                self.expect(Tok::LBrace, "`{` opening the else branch")?;
                let else_branch = self.expr()?;
                self.expect(Tok::RBrace, "`}` closing the else branch")?;
                let span = start.merge(self.prev_span());
                Some(Expr::new(
                    ExprKind::DynamicCheck {
                        subject: Binding::Var(subject),
                        annot: CheckAnnot::Unresolved,
                        tested,
                        then_branch: Box::new(then_branch),
                        else_branch: Box::new(else_branch),
                    },
                    span,
                ))
            }
            Tok::Disown => {
                self.bump();
                let (s, sp) = self.ident("reference to disown")?;
                Some(Expr::new(ExprKind::Disown(Binding::Var(s)), start.merge(sp)))
            }
            Tok::Pack => {
                self.bump();
                Some(Expr::new(ExprKind::Pack, start))
            }
            Tok::LParen => {
                self.bump();
                self.expect(Tok::RParen, "`)` completing the unit literal")?;
                Some(Expr::new(ExprKind::UnitLit, start.merge(self.prev_span())))
            }
            Tok::LBracket => {
                self.bump();
                let (s, _) = self.ident("asserted reference")?;
                self.expect(Tok::At, "`@` before the asserted mode")?;
                let mode = self.mode()?;
                self.expect(Tok::RBracket, "`]` closing the assertion")?;
                let span = start.merge(self.prev_span());
                Some(Expr::new(
                    ExprKind::StaticAssert { subject: Binding::Var(s), mode },
                    span,
                ))
            }
            Tok::Ident(name) => {
                self.bump();
                let recv = Binding::Var(name);
                match self.peek() {
                    Tok::Arrow => {
                        self.bump();
                        let (state, _) = self.ident("target state")?;
                        let args = self.simple_args()?;
                        let span = start.merge(self.prev_span());
                        Some(Expr::new(
                            ExprKind::Transition {
                                recv,
                                annot: TransitionAnnot::Unresolved,
                                state,
                                args,
                            },
                            span,
                        ))
                    }
                    Tok::Dot => {
                        self.bump();
                        let (member, msp) = self.ident("member name")?;
                        match self.peek() {
                            Tok::LParen | Tok::Lt => {
                                let type_args = self.type_args()?;
                                let args = self.simple_args()?;
                                let span = start.merge(self.prev_span());
                                Some(Expr::new(
                                    ExprKind::Invoke { recv, name: member, type_args, args },
                                    span,
                                ))
                            }
                            Tok::ColonEq => {
                                self.bump();
                                let (src, ssp) = self.ident("source reference")?;
                                let span = start.merge(ssp);
                                Some(Expr::new(
                                    ExprKind::FieldWrite {
                                        recv,
                                        field: member,
                                        src: Binding::Var(src),
                                    },
                                    span,
                                ))
                            }
                            _ => Some(Expr::new(
                                ExprKind::Field { recv, field: member },
                                start.merge(msp),
                            )),
                        }
                    }
                    _ => Some(Expr::new(ExprKind::Simple(recv), start)),
                }
            }
            _ => {
                let d = self.unexpected("an expression");
                self.diags.push(d);
                None
            }
        }
    }
}
