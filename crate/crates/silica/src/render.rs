//! Pretty-printer. `parse(render(x))` is structurally equal to `x` (spans
//! aside) for every value the parser can produce; runtime-only forms render
//! with a bracket notation that exists only for traces.

use crate::ast::*;

pub fn render_type(t: &Type) -> String {
    t.to_string()
}

pub fn render_mode(m: &Mode) -> String {
    m.to_string()
}

fn render_type_args(args: &[Type]) -> String {
    if args.is_empty() {
        String::new()
    } else {
        format!("<{}>", args.iter().map(render_type).collect::<Vec<_>>().join(", "))
    }
}

fn render_args(args: &[Binding]) -> String {
    args.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn render_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Simple(b) => b.to_string(),
        ExprKind::UnitLit => "()".to_string(),
        ExprKind::Field { recv, field } => format!("{recv}.{field}"),
        ExprKind::Invoke { recv, name, type_args, args } => {
            format!("{recv}.{name}{}({})", render_type_args(type_args), render_args(args))
        }
        ExprKind::Let { var, ty, bound, body } => {
            format!("let {var}: {} = {} in {}", render_type(ty), render_expr(bound), render_expr(body))
        }
        ExprKind::New { contract, type_args, state, args } => {
            format!("new {contract}{}.{state}({})", render_type_args(type_args), render_args(args))
        }
        ExprKind::Transition { recv, state, args, .. } => {
            format!("{recv} ->{state}({})", render_args(args))
        }
        ExprKind::FieldWrite { recv, field, src } => format!("{recv}.{field} := {src}"),
        ExprKind::StaticAssert { subject, mode } => format!("[{subject} @ {}]", render_mode(mode)),
        ExprKind::DynamicCheck { subject, tested, then_branch, else_branch, .. } => {
            format!(
                "if {subject} in {} {{ {} }} else {{ {} }}",
                render_mode(tested),
                render_expr(then_branch),
                render_expr(else_branch)
            )
        }
        ExprKind::Disown(b) => format!("disown {b}"),
        ExprKind::Pack => "pack".to_string(),
        ExprKind::StateLockBox { inner, obj } => format!("[{}]_lock({obj})", render_expr(inner)),
        ExprKind::ReentrancyBox { inner, obj } => format!("[{}]_call({obj})", render_expr(inner)),
    }
}

/// One-line expression summary for traces, truncated to `max` characters.
pub fn summarize_expr(e: &Expr, max: usize) -> String {
    let mut s = render_expr(e);
    if s.len() > max {
        s.truncate(max.saturating_sub(1));
        s.push('~');
    }
    s
}

fn render_generics(ps: &[GenericParam]) -> String {
    if ps.is_empty() {
        return String::new();
    }
    let inner = ps
        .iter()
        .map(|p| {
            format!(
                "{}{}@{} where {}@{}",
                if p.asset { "asset " } else { "" },
                p.decl_var,
                p.perm_var,
                p.bound_interface,
                render_mode(&p.bound_mode)
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!("<{inner}>")
}

fn render_field(f: &FieldDecl, indent: &str) -> String {
    format!("{indent}{} {};\n", render_type(&f.ty), f.name)
}

fn render_state(s: &StateDecl, indent: &str) -> String {
    let mut out = format!("{indent}{}state {}", if s.asset { "asset " } else { "" }, s.name);
    if s.fields.is_empty() {
        out.push_str(";\n");
    } else {
        out.push_str(" {\n");
        for f in &s.fields {
            out.push_str(&render_field(f, &format!("{indent}    ")));
        }
        out.push_str(&format!("{indent}}}\n"));
    }
    out
}

pub fn render_program(p: &Program) -> String {
    let mut out = String::new();
    for i in &p.interfaces {
        out.push_str(&render_interface(i));
        out.push('\n');
    }
    for c in &p.contracts {
        out.push_str(&render_contract(c));
        out.push('\n');
    }
    out.push_str("main\n  ");
    out.push_str(&render_expr(&p.main));
    out.push('\n');
    out
}

fn render_params(c_name: &str, sig: &TransactionSig) -> String {
    let mut parts = vec![format!(
        "{}@{} >> {} this",
        c_name,
        render_mode(&sig.this_pre),
        render_mode(&sig.this_post)
    )];
    for p in &sig.params {
        match &p.ty {
            Type::Unit => parts.push(format!("unit {}", p.name)),
            Type::Ref { mode, .. } => {
                let base = render_type(&p.ty);
                if *mode == p.post_mode {
                    parts.push(format!("{base} {}", p.name));
                } else {
                    parts.push(format!("{base} >> {} {}", render_mode(&p.post_mode), p.name));
                }
            }
        }
    }
    parts.join(", ")
}

fn render_sig_line(c_name: &str, sig: &TransactionSig) -> String {
    let mut out = String::new();
    if let Some(specs) = &sig.field_specs {
        out.push_str("private [");
        out.push_str(
            &specs
                .iter()
                .map(|s| format!("{}: {} >> {}", s.field, render_mode(&s.pre), render_mode(&s.post)))
                .collect::<Vec<_>>()
                .join(", "),
        );
        out.push_str("] ");
    }
    out.push_str(&format!(
        "transaction {}{}({})",
        sig.name,
        render_generics(&sig.generics),
        render_params(c_name, sig)
    ));
    if !sig.return_type.is_unit() {
        out.push_str(&format!(" returns {}", render_type(&sig.return_type)));
    }
    out
}

pub fn render_contract(c: &ContractDecl) -> String {
    let mut out = format!("contract {}{}", c.name, render_generics(&c.generics));
    if let Some((iface, args)) = &c.implements {
        out.push_str(&format!(" implements {iface}{}", render_type_args(args)));
    }
    out.push_str(" {\n");
    for s in &c.states {
        out.push_str(&render_state(s, "    "));
    }
    for t in &c.transactions {
        out.push_str(&format!("    {} {{\n        {}\n    }}\n", render_sig_line(&c.name, &t.sig), render_expr(&t.body)));
    }
    out.push_str("}\n");
    out
}

pub fn render_interface(i: &InterfaceDecl) -> String {
    let mut out = format!("interface {}{} {{\n", i.name, render_generics(&i.generics));
    for s in &i.states {
        out.push_str(&render_state(s, "    "));
    }
    for sig in &i.signatures {
        out.push_str(&format!("    {};\n", render_sig_line(&i.name, sig)));
    }
    out.push_str("}\n");
    out
}
