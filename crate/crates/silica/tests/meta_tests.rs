//! The runtime soundness oracle: alias reports, compatibility, global
//! consistency, context strength, whole-corpus verified runs, ownership
//! audits, and the stepper mutation harness (a corrupted machine must be
//! caught by the per-step checks).

use proptest::prelude::*;

use silica::interp::{EvalOutcome, FaultInjection};
use silica::meta::{
    check_global_consistency, compatible, l_stronger, ref_types, Provenance, ShadowContext,
    Verdict, Verifier,
};
use silica::{
    check_declarations, parse_program, Binding, CheckedProgram, ContractRef, GenericContext,
    HeapObj, LocId, Mode, ObjId, Permission, RuntimeConfig, Type, TypingContext, Value,
};

fn corpus(name: &str) -> CheckedProgram {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name);
    let src = std::fs::read_to_string(&path).unwrap();
    check_declarations(&parse_program(&src).unwrap()).unwrap()
}

fn fixture() -> CheckedProgram {
    check_declarations(
        &parse_program(
            r#"
asset contract Coin {
    state Free;
}
contract Plain {
    state Full;
    state Empty;
}
main ()
"#,
        )
        .unwrap(),
    )
    .unwrap()
}

fn refty(name: &str, m: Mode) -> Type {
    Type::Ref { contract: ContractRef::named(name), mode: m }
}
fn owned() -> Mode {
    Mode::Perm(Permission::Owned)
}
fn unowned() -> Mode {
    Mode::Perm(Permission::Unowned)
}
fn shared() -> Mode {
    Mode::Perm(Permission::Shared)
}
fn states(ss: &[&str]) -> Mode {
    Mode::states(ss.iter().map(|s| s.to_string())).unwrap()
}

// ---------------------------------------------------------------------------
// compatible
// ---------------------------------------------------------------------------

#[test]
fn compatibility_examples() {
    let f = fixture();
    let t = |m: Mode| refty("Plain", m);
    assert!(compatible(&f.table, &t(unowned()), &t(owned()), false));
    assert!(!compatible(&f.table, &t(owned()), &t(owned()), false));
    assert!(compatible(&f.table, &t(states(&["Full"])), &t(shared()), true));
    assert!(!compatible(&f.table, &t(states(&["Full"])), &t(shared()), false));
    assert!(compatible(&f.table, &t(shared()), &t(shared()), false));
}

// ---------------------------------------------------------------------------
// refTypes
// ---------------------------------------------------------------------------

#[test]
fn ref_types_examples() {
    let f = fixture();
    let mut config = RuntimeConfig::new();
    let o = config.fresh_obj();
    config.heap.insert(
        o,
        HeapObj { contract: "Plain".into(), type_args: vec![], state: "Full".into(), fields: vec![] },
    );
    let l = config.fresh_loc();
    config.env.insert(l, Value::Obj(o));
    let mut shadow = ShadowContext::new();
    shadow.ctx.bind(Binding::Loc(l), refty("Plain", owned()));

    let report = ref_types(&f.table, &config, &shadow, o);
    assert_eq!(report.aliases.len(), 1);
    assert_eq!(report.aliases[0], (refty("Plain", owned()), Provenance::IndirectRef));

    // A field-held alias with an override preferred over the declaration.
    let coins = check_declarations(
        &parse_program(
            r#"
asset contract Coin {
    state Free;
}
asset contract Purse {
    state Keeping {
        Coin @ Owned coin;
    }
}
main ()
"#,
        )
        .unwrap(),
    )
    .unwrap();
    let mut config = RuntimeConfig::new();
    let c = config.fresh_obj();
    let p = config.fresh_obj();
    config.heap.insert(
        c,
        HeapObj { contract: "Coin".into(), type_args: vec![], state: "Free".into(), fields: vec![] },
    );
    config.heap.insert(
        p,
        HeapObj {
            contract: "Purse".into(),
            type_args: vec![],
            state: "Keeping".into(),
            fields: vec![Value::Obj(c)],
        },
    );
    let shadow = ShadowContext::new();
    let report = ref_types(&coins.table, &config, &shadow, c);
    assert_eq!(report.aliases, vec![(refty("Coin", owned()), Provenance::HeapField)]);

    let mut shadow = ShadowContext::new();
    shadow.ctx.bind_override(Binding::Obj(p), "coin", refty("Coin", unowned()));
    let report = ref_types(&coins.table, &config, &shadow, c);
    assert_eq!(report.aliases, vec![(refty("Coin", unowned()), Provenance::HeapField)]);
}

// ---------------------------------------------------------------------------
// Global consistency
// ---------------------------------------------------------------------------

#[test]
fn global_consistency_examples() {
    let f = fixture();
    // Empty machine, empty context.
    let config = RuntimeConfig::new();
    let shadow = ShadowContext::new();
    assert!(check_global_consistency(&f.table, &config, &shadow).is_ok());

    // Two owned aliases to one asset.
    let mut config = RuntimeConfig::new();
    let o = config.fresh_obj();
    config.heap.insert(
        o,
        HeapObj { contract: "Coin".into(), type_args: vec![], state: "Free".into(), fields: vec![] },
    );
    let l1 = config.fresh_loc();
    let l2 = config.fresh_loc();
    config.env.insert(l1, Value::Obj(o));
    config.env.insert(l2, Value::Obj(o));
    let mut shadow = ShadowContext::new();
    shadow.ctx.bind(Binding::Loc(l1), refty("Coin", owned()));
    shadow.ctx.bind(Binding::Loc(l2), refty("Coin", owned()));
    let err = check_global_consistency(&f.table, &config, &shadow).unwrap_err();
    assert!(err.contains("incompatible aliases"), "{err}");

    // Field arity violation.
    let purse = check_declarations(
        &parse_program(
            r#"
asset contract Coin {
    state Free;
}
asset contract Purse {
    state Keeping {
        Coin @ Owned coin;
    }
}
main ()
"#,
        )
        .unwrap(),
    )
    .unwrap();
    let mut config = RuntimeConfig::new();
    let p = config.fresh_obj();
    config.heap.insert(
        p,
        HeapObj {
            contract: "Purse".into(),
            type_args: vec![],
            state: "Keeping".into(),
            fields: vec![],
        },
    );
    let shadow = ShadowContext::new();
    let err = check_global_consistency(&purse.table, &config, &shadow).unwrap_err();
    assert!(err.contains("field value"), "{err}");
}

// ---------------------------------------------------------------------------
// l-stronger
// ---------------------------------------------------------------------------

#[test]
fn l_stronger_examples() {
    let f = fixture();
    let gamma = GenericContext::new();
    let locks = std::collections::BTreeSet::new();

    let mut config = RuntimeConfig::new();
    let o = config.fresh_obj();
    config.heap.insert(
        o,
        HeapObj { contract: "Plain".into(), type_args: vec![], state: "Full".into(), fields: vec![] },
    );
    let l1 = config.fresh_loc();
    let l2 = config.fresh_loc();
    config.env.insert(l1, Value::Obj(o));
    config.env.insert(l2, Value::Obj(o));

    // A state-bearing reference covers an Owned claim on the same object
    // held at a different indirect reference.
    let mut newer = TypingContext::new();
    newer.bind(Binding::Loc(l1), refty("Plain", states(&["Full"])));
    let mut prior = TypingContext::new();
    prior.bind(Binding::Loc(l2), refty("Plain", owned()));
    assert!(l_stronger(&f.table, &gamma, &newer, &prior, &config, &locks).is_ok());

    // An unowned successor does not cover an owned claim.
    let mut newer = TypingContext::new();
    newer.bind(Binding::Loc(l1), refty("Plain", unowned()));
    let mut prior = TypingContext::new();
    prior.bind(Binding::Loc(l1), refty("Plain", owned()));
    assert!(l_stronger(&f.table, &gamma, &newer, &prior, &config, &locks).is_err());
}

proptest! {
    // Reflexivity on arbitrary generated contexts.
    #[test]
    fn l_stronger_reflexive(entries in proptest::collection::vec((0u32..6, 0u32..3), 0..8)) {
        let f = fixture();
        let gamma = GenericContext::new();
        let locks = std::collections::BTreeSet::new();
        let mut config = RuntimeConfig::new();
        let o = config.fresh_obj();
        config.heap.insert(
            o,
            HeapObj { contract: "Plain".into(), type_args: vec![], state: "Full".into(), fields: vec![] },
        );
        let mut ctx = TypingContext::new();
        for (i, (m, target)) in entries.iter().enumerate() {
            let l = LocId(i as u32 + 10);
            let mode = match m {
                0 => owned(),
                1 => unowned(),
                2 => shared(),
                3 => states(&["Full"]),
                4 => states(&["Empty"]),
                _ => states(&["Empty", "Full"]),
            };
            match target {
                0 => {
                    config.env.insert(l, Value::Obj(o));
                    ctx.bind(Binding::Loc(l), refty("Plain", mode));
                }
                1 => {
                    config.env.insert(l, Value::Unit);
                    ctx.bind(Binding::Loc(l), Type::Unit);
                }
                _ => {} // unbound in the environment: skipped by the relation
            }
        }
        prop_assert!(l_stronger(&f.table, &gamma, &ctx, &ctx, &config, &locks).is_ok());
    }
}

// ---------------------------------------------------------------------------
// Whole-corpus verified runs and audits
// ---------------------------------------------------------------------------

#[test]
fn every_corpus_evaluation_verifies() {
    let files = [
        "tiny_vending_machine.silica",
        "vending_client_scenario.silica",
        "wallet_swap.silica",
        "wallet_swap_states.silica",
        "gift_certificate.silica",
        "policy.silica",
        "linked_list_generic.silica",
        "disown_coin.silica",
        "shared_state_check.silica",
        "reentrancy_trap.silica",
        "shared_lock_trap.silica",
        "nested_dsc_trap.silica",
    ];
    for f in files {
        let checked = corpus(f);
        let report = Verifier::new(&checked).run(10_000);
        for v in &report.verdicts {
            assert_eq!(v.verdict, Verdict::Pass, "{f}: step {} rule {}", v.step, v.rule);
        }
        assert!(report.audit.is_ok(), "{f}: audit failed: {:?}", report.audit);
    }
}

#[test]
fn disown_coin_logs_one_disown_at_the_drop() {
    let checked = corpus("disown_coin.silica");
    let report = Verifier::new(&checked).run(1000);
    assert!(matches!(report.outcome, EvalOutcome::Finished(Value::Unit)));
    let ledger = report.audit.expect("audit passes");
    assert_eq!(ledger.disowns.len(), 1, "exactly one disown event");
    let (step, obj) = ledger.disowns[0];
    assert!(
        ledger.drops.contains(&(step, obj)),
        "the owner-count drop coincides with the disown: drops={:?}",
        ledger.drops
    );
}

// ---------------------------------------------------------------------------
// Stepper mutation harness
// ---------------------------------------------------------------------------

#[test]
fn corrupted_lock_release_is_detected() {
    // E-box-phi no longer releases the lock: the state-lock set decays,
    // and the per-step consistency or strength checks must notice on a
    // program that locks and then moves on.
    let checked = corpus("gift_certificate.silica");
    let faults = FaultInjection { skip_phi_removal: true, ..Default::default() };
    let report = Verifier::with_faults(&checked, faults).run(10_000);
    assert!(
        !report.all_pass(),
        "a stepper that never releases state locks must be caught"
    );
}

#[test]
fn dropped_transition_field_is_detected() {
    // Transitions silently lose their last field value: heap arity breaks
    // (VER001) or an asset vanishes (AUD002).
    let checked = corpus("wallet_swap_states.silica");
    let faults = FaultInjection { drop_field_on_transition: true, ..Default::default() };
    let report = Verifier::with_faults(&checked, faults).run(10_000);
    assert!(
        !report.all_pass(),
        "a stepper that drops field values at transitions must be caught"
    );
    let ver001 = report
        .verdicts
        .iter()
        .any(|v| matches!(v.verdict, Verdict::Ver001(_)));
    let aud = report.audit.is_err();
    assert!(ver001 || aud, "detection is by consistency or by the audit");
}
