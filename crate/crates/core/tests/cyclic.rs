//! A grammar whose single rule keeps feeding itself, growing a list without
//! bound: the derivable lexicon is infinite. Compilation must stay total and
//! sound — residual cyclic transitions remain, annotation sets that cannot
//! stabilize are treated as unknown, and the runtime enumerates up to its
//! depth bound.

use std::collections::BTreeSet;

use lexcov::compile::{compile_text, CompiledLexicon, RunConfig};
use lexcov::interaction::InteractionClause;

const GRAMMAR: &str = "\
type top sub {word, bool, letter, list}.
type word intro {A:letter, B:bool, Z:list}.
type bool sub {+, -}.
type letter sub {a, b}.
type list sub {e_list, ne_list}.
type ne_list intro {HD:top, TL:list}.

rule grow : (B: -, Z: #1) ==> (Z: (HD: a, TL: #1)).

entry g1 word & (A: a, B: -, Z: <b>).
";

fn lex() -> CompiledLexicon {
    compile_text(GRAMMAR, RunConfig::default()).expect("cyclic grammar compiles")
}

#[test]
fn the_rule_follows_itself_and_the_loop_survives_pruning() {
    let lex = lex();
    assert_eq!(lex.follow.0, vec![vec![1]]);
    let aut = &lex.classes[0].class.automaton;
    aut.check_invariants().unwrap();
    assert_eq!(aut.states.len(), 2);
    assert!(aut
        .transitions
        .iter()
        .any(|t| t.back && t.from == 1 && t.to == 1));
}

#[test]
fn unstable_annotations_are_cleared_not_trusted() {
    let lex = lex();
    let aut = &lex.classes[0].class.automaton;
    // The initial state's annotation is exact; the loop state's set could
    // not stabilize and must be empty.
    assert_eq!(aut.states[0].anns.len(), 1);
    assert!(aut.states[1].anns.is_empty());
    // With unknown annotations, unfolding keeps every transfer clause.
    let steps = lex.classes[0]
        .unfolded
        .iter()
        .filter(|c| matches!(c, InteractionClause::Step { .. }))
        .count();
    assert_eq!(steps, 2);
}

#[test]
fn enumeration_is_bounded_and_grows_one_cell_per_step() {
    let lex = lex();
    let run = lex.derive_all("g1", 5).unwrap();
    assert!(run.truncated);
    assert_eq!(run.solutions.len(), 6);
    let mut lengths = BTreeSet::new();
    for s in &run.solutions {
        // Count list cells along Z.
        let sig = &lex.signature;
        let z = sig.feat_by_name("Z").unwrap();
        let tl = sig.feat_by_name("TL").unwrap();
        let mut n = s.entry.arc_target(s.entry.root(), z).unwrap();
        let mut len = 0;
        while let Some(next) = s.entry.arc_target(n, tl) {
            len += 1;
            n = next;
        }
        lengths.insert(len);
        assert_eq!(s.derivation.len() + 1, len);
    }
    assert_eq!(lengths, (1..=6).collect());

    // A larger bound strictly extends the set.
    let more = lex.derive_all("g1", 9).unwrap();
    assert!(more.truncated);
    assert_eq!(more.solutions.len(), 10);
}

#[test]
fn unfolded_and_plain_programs_agree_at_any_bound() {
    let lex = lex();
    let class = &lex.classes[0];
    let collect = |clauses: &[InteractionClause], bound: usize| -> BTreeSet<String> {
        lexcov::runtime::solve(
            &lex.signature,
            &lex.rules,
            clauses,
            "q_1",
            0,
            lex.entries[0].base.clone(),
            bound,
        )
        .map(|s| s.entry.canonical_form(&lex.signature))
        .collect()
    };
    for bound in [0, 3, 7] {
        assert_eq!(
            collect(&class.clauses, bound),
            collect(&class.unfolded, bound),
            "bound {bound}"
        );
    }
}

#[test]
fn the_lift_stays_sound_over_the_infinite_family() {
    let lex = lex();
    let lifted_out = lex.entries[0].lifted.extract_root(1);
    for s in lex.derive_all("g1", 12).unwrap().solutions {
        assert!(
            lifted_out.subsumes(&s.entry, &lex.signature),
            "lift excludes a derivable entry after {:?}",
            s.derivation
        );
    }
}

#[test]
fn lookup_filters_the_infinite_family_consistently() {
    let lex = lex();
    let sig = &lex.signature;
    let q = lexcov::grammar::parse_avm_text(sig, "(Z: (TL: (TL: <>)))").unwrap();
    let out = lex.lookup(&q, 8);
    let expected: BTreeSet<String> = lex
        .derive_all("g1", 8)
        .unwrap()
        .solutions
        .iter()
        .filter(|s| q.unify(&s.entry, sig).is_ok())
        .map(|s| s.entry.canonical_form(sig))
        .collect();
    let got: BTreeSet<String> = out
        .hits
        .iter()
        .flat_map(|h| h.solutions.iter())
        .map(|s| s.entry.canonical_form(sig))
        .collect();
    assert_eq!(got, expected);
    assert_eq!(expected.len(), 1); // exactly the three-cell list
}
