//! A larger rule set with a value-toggling cycle and several entries:
//! enumeration must still equal the free application closure, classes must
//! partition the entries, and the automaton invariants must hold throughout.

use std::collections::BTreeSet;

use lexcov::check::free_closure;
use lexcov::compile::{compile_text, CompiledLexicon, RunConfig};

const GRAMMAR: &str = "\
type top sub {word, t, bool, letter, list}.
type word intro {A:letter, B:bool, C:t}.
type t sub {t_1, t_2} intro {W:bool, X:bool, Y:bool}.
type t_2 intro {Z:list}.
type bool sub {+, -}.
type letter sub {a, b}.
type list sub {e_list, ne_list}.
type ne_list intro {HD:top, TL:list}.

rule lr1 : (B: -, C: (Y: -)) ==> (A: b, C: (X: +, Y: +)).
rule lr2 : (A: b, B: -, C: (W: -)) ==> (C: (W: +)).
rule lr3 : (C: t_2 & (W: +, X: +, Z: (TL: #1))) ==> (C: t_2 & (Y: +, Z: #1)).
rule lr4 : (B: -, C: t_2 & (W: +, X: +, Z: <>)) ==> (B: +, C: t_2 & (X: -)).
rule lr5 : (C: (X: +, Y: +)) ==> (C: (Y: -)).

entry e1 word & (A: b, B: -, C: t_2 & (W: -, X: -, Y: -, Z: <a, b>)).
entry e2 word & (A: b, B: -, C: t_1 & (W: -, X: -, Y: -)).
entry e3 word & (A: a, B: +, C: t_2 & (W: +, X: +, Y: +, Z: <>)).
entry e4 word & (A: b, B: -, C: t_2 & (W: -, X: -, Y: -, Z: <b, a>)).
";

fn lex() -> CompiledLexicon {
    compile_text(GRAMMAR, RunConfig::default()).expect("stress grammar compiles")
}

#[test]
fn automaton_invariants_hold_everywhere() {
    let lex = lex();
    lex.global_fsa.check_invariants().unwrap();
    lex.reduced_fsa.check_invariants().unwrap();
    for c in &lex.classes {
        c.class.automaton.check_invariants().unwrap();
    }
    // Five rules: the repetition-free trie is large but finite.
    assert!(lex.global_fsa.states.len() > 50);
}

#[test]
fn classes_partition_the_entries() {
    let lex = lex();
    let mut seen = BTreeSet::new();
    for c in &lex.classes {
        for &m in &c.class.members {
            assert!(seen.insert(m), "entry {m} in two classes");
        }
    }
    assert_eq!(seen.len(), lex.entries.len());
    // e1 and e4 share Z-shape and species everywhere, so they share a class;
    // e2 (t_1) and e3 (blocked by B:+) do not.
    assert_eq!(lex.entries[0].class_ix, lex.entries[3].class_ix);
    assert_ne!(lex.entries[0].class_ix, lex.entries[1].class_ix);
    assert_ne!(lex.entries[0].class_ix, lex.entries[2].class_ix);
}

#[test]
fn enumeration_equals_the_free_closure_for_every_entry() {
    let lex = lex();
    let sig = &lex.signature;
    for entry in &lex.entries {
        let closure = free_closure(sig, &lex.rules, &entry.base, 5000)
            .unwrap_or_else(|| panic!("closure for {} diverged", entry.name));
        let enumerated: BTreeSet<String> = lex
            .derive_all(&entry.name, 32)
            .unwrap()
            .solutions
            .iter()
            .map(|s| s.entry.canonical_form(sig))
            .collect();
        let expected: BTreeSet<String> = closure.keys().cloned().collect();
        assert_eq!(
            enumerated, expected,
            "entry {} enumerates differently",
            entry.name
        );
    }
}

#[test]
fn lifts_cover_their_closures() {
    let lex = lex();
    let sig = &lex.signature;
    for entry in &lex.entries {
        let lifted_out = entry.lifted.extract_root(1);
        let closure = free_closure(sig, &lex.rules, &entry.base, 5000).unwrap();
        for d in closure.values() {
            assert!(
                lifted_out.subsumes(d, sig),
                "lift of {} excludes a derivable entry",
                entry.name
            );
        }
    }
}

#[test]
fn lookup_agrees_with_filtering_across_the_lexicon() {
    let lex = lex();
    let sig = &lex.signature;
    for q_text in ["(B: +)", "(C: (Y: -))", "(C: t_1)", "word"] {
        let q = lexcov::grammar::parse_avm_text(sig, q_text).unwrap();
        let out = lex.lookup(&q, 32);
        for entry in &lex.entries {
            let expected: BTreeSet<String> = lex
                .derive_all(&entry.name, 32)
                .unwrap()
                .solutions
                .iter()
                .filter(|s| q.unify(&s.entry, sig).is_ok())
                .map(|s| s.entry.canonical_form(sig))
                .collect();
            let got: BTreeSet<String> = out
                .hits
                .iter()
                .filter(|h| h.entry == entry.name)
                .flat_map(|h| h.solutions.iter())
                .map(|s| s.entry.canonical_form(sig))
                .collect();
            assert_eq!(got, expected, "query {q_text} on {}", entry.name);
        }
    }
}
