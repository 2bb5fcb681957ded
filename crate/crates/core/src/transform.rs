//! Program transformations over the compiled clauses.
//!
//! Once an automaton has been pruned for an entry, the propagated annotations
//! tell us which subclass each transition deals with, so transfer clauses
//! with a finitely failed body can be dropped per transition. The survivors
//! are then unfolded directly into the interaction clauses — the rule
//! predicates keep their original in/out specifications and merely lose the
//! transfer call, so they stay a single, entry-independent definition shared
//! by all classes.
//!
//! Finally, an extended entry is enriched by evaluating its interaction
//! predicate bottom-up: every unit clause contributes the identity pair on a
//! tabled annotation, every step clause contributes its head after resolving
//! the continuation literal against the callee's current summary, and a
//! predicate's summary is the generalization of all its contributions.
//! Cyclic predicates iterate to a mutual-subsumption fixpoint. Unifying the
//! entry-point summary with the base entry yields the lifted output
//! description used for delayed ("on the fly") rule application.

use crate::featstruct::{diag_pair, top_pair, Fs, FsBuilder};
use crate::interaction::InteractionClause;
use crate::rules::CompiledRule;
use crate::signature::Signature;

/// Indices of the transfer clauses of `rule` whose in-frame unifies with at
/// least one of the annotations.
pub fn filter_transfer_clauses(sig: &Signature, anns: &[Fs], rule: &CompiledRule) -> Vec<usize> {
    (0..rule.transfer.len())
        .filter(|&k| {
            let in_frame = rule.transfer[k].frame.extract_root(0);
            anns.iter().any(|a| in_frame.unify(a, sig).is_ok())
        })
        .collect()
}

/// Unfolds the transfer predicates into the interaction clauses: each step
/// clause is replaced by one clause per surviving transfer clause, carrying
/// that clause's frame on its In and continuation arguments. When the
/// annotations for a state are absent (propagation did not stabilize there),
/// every transfer clause survives.
pub fn partial_unfold(
    sig: &Signature,
    clauses: &[InteractionClause],
    rules: &[CompiledRule],
    state_anns: &[Vec<Fs>],
) -> Vec<InteractionClause> {
    let mut out = Vec::new();
    for c in clauses {
        match c {
            InteractionClause::Unit { state } => {
                out.push(InteractionClause::Unit { state: *state })
            }
            InteractionClause::Step {
                state,
                rule,
                next,
                frame: _,
            } => {
                let r = &rules[rule - 1];
                let anns = &state_anns[*state];
                let survivors = if anns.is_empty() {
                    (0..r.transfer.len()).collect()
                } else {
                    filter_transfer_clauses(sig, anns, r)
                };
                let survivors = if survivors.is_empty() {
                    (0..r.transfer.len()).collect()
                } else {
                    survivors
                };
                for k in survivors {
                    out.push(InteractionClause::Step {
                        state: *state,
                        rule: *rule,
                        next: *next,
                        frame: Some(k),
                    });
                }
            }
        }
    }
    // Steps in (state, rule, frame) order, then units.
    let key = |c: &InteractionClause| match c {
        InteractionClause::Step {
            state,
            rule,
            frame,
            next,
        } => (0usize, *state, *rule, frame.unwrap_or(0), *next),
        InteractionClause::Unit { state } => (1usize, *state, 0, 0, 0),
    };
    out.sort_by_key(key);
    out
}

/// Resolves a step clause's continuation against the callee summary: the
/// head pair (In, Out) of `rule ∘ frame` with (Aux, Out) unified against the
/// summary pair.
fn step_contribution(
    sig: &Signature,
    rule: &CompiledRule,
    frame_ix: usize,
    callee_summary: &Fs,
) -> Option<Fs> {
    let mut b = FsBuilder::new(sig);
    let head = b.import(rule.composed(frame_ix));
    let callee = b.import(callee_summary);
    b.merge(head[1], callee[0]);
    b.push_root(head[0]);
    b.push_root(callee[1]);
    b.finish().ok()
}

/// Bottom-up evaluation with generalization at choice points. Returns the
/// lifted pair: root 0 is the (possibly refined) base, root 1 the lifted
/// output description with reentrancies into the base wherever every
/// derivation keeps the value.
pub fn lift_generalization(
    sig: &Signature,
    clauses: &[InteractionClause],
    rules: &[CompiledRule],
    state_anns: &[Vec<Fs>],
    base: &Fs,
    fixpoint_cap: usize,
) -> Fs {
    let state_count = state_anns.len();
    let mut summaries: Vec<Fs> = (0..state_count)
        .map(|s| unit_summary(sig, &state_anns[s]))
        .collect();

    let mut converged = false;
    for _ in 0..fixpoint_cap {
        let mut changed = false;
        for s in (0..state_count).rev() {
            let mut contribs: Vec<Fs> = state_anns[s].iter().map(diag_pair).collect();
            if contribs.is_empty() {
                contribs.push(top_pair(sig));
            }
            for c in clauses {
                if let InteractionClause::Step {
                    state,
                    rule,
                    next,
                    frame,
                } = c
                {
                    if *state != s {
                        continue;
                    }
                    let r = &rules[rule - 1];
                    let frames: Vec<usize> = match frame {
                        Some(k) => vec![*k],
                        None => (0..r.transfer.len()).collect(),
                    };
                    for k in frames {
                        if let Some(p) = step_contribution(sig, r, k, &summaries[*next]) {
                            contribs.push(p);
                        }
                    }
                }
            }
            let mut summary = contribs[0].clone();
            for c in &contribs[1..] {
                summary = summary.generalize(c, sig);
            }
            if summary != summaries[s] {
                summaries[s] = summary;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let entry_summary = if converged {
        summaries[0].clone()
    } else {
        // Sound fallback: no lifted information.
        top_pair(sig)
    };
    entry_summary
        .unify_at_root(0, base, sig)
        .expect("the summary generalizes the identity clause on the base")
}

fn unit_summary(sig: &Signature, anns: &[Fs]) -> Fs {
    let mut it = anns.iter().map(diag_pair);
    match it.next() {
        None => top_pair(sig),
        Some(first) => it.fold(first, |acc, p| acc.generalize(&p, sig)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featstruct::path_from_names;
    use crate::grammar::{self, paper_signature_decls, BUNDLED_GRAMMAR};
    use crate::interaction::{
        build_global_fsa, compute_follow, encode_interaction, prune_for_entry,
        reduce_by_propagation, Automaton,
    };
    use crate::rules::{derive_transfer_clauses, LexicalRule};
    use crate::signature::Signature;

    fn compile_rules(sig: &Signature, g: &grammar::GrammarFile) -> Vec<CompiledRule> {
        g.rules
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let head = grammar::lower_avm_pair(sig, &r.in_avm, &r.out_avm).unwrap();
                derive_transfer_clauses(
                    sig,
                    &LexicalRule {
                        index: i + 1,
                        name: r.name.clone(),
                        head,
                    },
                )
                .unwrap()
            })
            .collect()
    }

    struct Setup {
        sig: Signature,
        rules: Vec<CompiledRule>,
        entry: Fs,
        pruned: Automaton,
    }

    fn setup_with(rule_count: usize) -> Setup {
        let sig = Signature::build(&paper_signature_decls()).unwrap();
        let mut g = grammar::parse_grammar(BUNDLED_GRAMMAR).unwrap();
        g.rules.truncate(rule_count);
        let rules = compile_rules(&sig, &g);
        let entry = grammar::lower_avm(&sig, &g.entries[0].avm).unwrap();
        let follow = compute_follow(&sig, &rules);
        let global = build_global_fsa(&follow);
        let reduced = reduce_by_propagation(&sig, &global, &rules, 8);
        let pruned = prune_for_entry(&sig, &reduced, &rules, &entry, 0, 8);
        Setup {
            sig,
            rules,
            entry,
            pruned,
        }
    }

    #[test]
    fn filtering_keeps_the_matching_subclass() {
        let s = setup_with(4);
        let anns = vec![s.entry.clone()];
        // Rule 2 has a t_1 and a t_2 clause; the entry's C is t_2.
        let surviving = filter_transfer_clauses(&s.sig, &anns, &s.rules[1]);
        assert_eq!(surviving.len(), 1);
        let c = path_from_names(&s.sig, &["C"]).unwrap();
        let (_, sp) = s.rules[1].transfer[surviving[0]]
            .frame_species
            .iter()
            .find(|(p, _)| *p == c)
            .unwrap();
        assert_eq!(s.sig.type_name(*sp), "t_2");
        // Rule 3 has a single clause; it stays.
        assert_eq!(filter_transfer_clauses(&s.sig, &anns, &s.rules[2]), vec![0]);
        // A t_1 entry keeps only t_1 clauses.
        let t1_entry =
            grammar::parse_avm_text(&s.sig, "word & (A: b, B: -, C: t_1 & (W: -, X: -, Y: -))")
                .unwrap();
        let surviving = filter_transfer_clauses(&s.sig, &[t1_entry], &s.rules[1]);
        assert_eq!(surviving.len(), 1);
        let (_, sp) = s.rules[1].transfer[surviving[0]]
            .frame_species
            .iter()
            .find(|(p, _)| *p == c)
            .unwrap();
        assert_eq!(s.sig.type_name(*sp), "t_1");
    }

    fn unfolded_for(s: &Setup) -> Vec<InteractionClause> {
        let clauses = encode_interaction(&s.pruned);
        let anns: Vec<Vec<Fs>> = s.pruned.states.iter().map(|st| st.anns.clone()).collect();
        partial_unfold(&s.sig, &clauses, &s.rules, &anns)
    }

    fn frame_shares(
        s: &Setup,
        clauses: &[InteractionClause],
        state_seq: &[usize],
        rule: usize,
    ) -> Vec<Vec<String>> {
        let state = s.pruned.state_by_seq(state_seq).unwrap();
        clauses
            .iter()
            .filter_map(|c| match c {
                InteractionClause::Step {
                    state: cs,
                    rule: cr,
                    frame: Some(k),
                    ..
                } if *cs == state && *cr == rule => Some(
                    s.rules[rule - 1].transfer[*k]
                        .shares
                        .iter()
                        .map(|p| crate::featstruct::path_to_string(&s.sig, p))
                        .collect(),
                ),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn unfolding_matches_the_surviving_frames() {
        let s = setup_with(4);
        let unfolded = unfolded_for(&s);
        // 6 step clauses (one surviving frame each) + 6 units.
        assert_eq!(unfolded.len(), 12);
        // Entry-point clause for rule 1 carries the t_2 frame: B, C.W, C.Z.
        assert_eq!(
            frame_shares(&s, &unfolded, &[], 1),
            vec![vec!["B".to_string(), "C.W".into(), "C.Z".into()]]
        );
        // The clause applying rule 3 after 1·2 shares A, B, C.W, C.X.
        assert_eq!(
            frame_shares(&s, &unfolded, &[1, 2], 3),
            vec![vec![
                "A".to_string(),
                "B".into(),
                "C.W".into(),
                "C.X".into()
            ]]
        );
        // Rule 2 clauses share A, B, C.X, C.Y, C.Z (t_2 frame).
        assert_eq!(
            frame_shares(&s, &unfolded, &[1], 2),
            vec![vec![
                "A".to_string(),
                "B".into(),
                "C.X".into(),
                "C.Y".into(),
                "C.Z".into()
            ]]
        );
    }

    #[test]
    fn a_transition_with_two_surviving_frames_unfolds_twice() {
        // A partial base whose C is not species-resolved keeps both frames.
        let sig = Signature::build(&paper_signature_decls()).unwrap();
        let g = grammar::parse_grammar(BUNDLED_GRAMMAR).unwrap();
        let rules = compile_rules(&sig, &g);
        let entry =
            grammar::parse_avm_text(&sig, "word & (A: b, B: -, C: (W: -, X: -, Y: -))").unwrap();
        let follow = compute_follow(&sig, &rules);
        let global = build_global_fsa(&follow);
        let reduced = reduce_by_propagation(&sig, &global, &rules, 8);
        let pruned = prune_for_entry(&sig, &reduced, &rules, &entry, 0, 8);
        let clauses = encode_interaction(&pruned);
        let anns: Vec<Vec<Fs>> = pruned.states.iter().map(|st| st.anns.clone()).collect();
        let unfolded = partial_unfold(&sig, &clauses, &rules, &anns);
        let s0 = pruned.state_by_seq(&[]).unwrap();
        let rule2_clauses = unfolded
            .iter()
            .filter(|c| matches!(c, InteractionClause::Step { state, rule: 2, .. } if *state == s0))
            .count();
        assert_eq!(rule2_clauses, 2);
    }

    #[test]
    fn lifting_two_rules_reproduces_the_delayed_entry() {
        let s = setup_with(2);
        let unfolded = unfolded_for(&s);
        let anns: Vec<Vec<Fs>> = s.pruned.states.iter().map(|st| st.anns.clone()).collect();
        let lifted = lift_generalization(&s.sig, &unfolded, &s.rules, &anns, &s.entry, 16);

        let expected = {
            let g = grammar::parse_grammar(
                "rule x : word & (A: b, B: #1=-, C: t_2 & (W: -, X: -, Y: -, Z: #2=<a, b>)) \
                 ==> word & (A: b, B: #1, C: t_2 & (W: bool, X: bool, Y: bool, Z: #2)).",
            )
            .unwrap();
            grammar::lower_avm_pair(&s.sig, &g.rules[0].in_avm, &g.rules[0].out_avm).unwrap()
        };
        assert_eq!(
            lifted.canonical_form(&s.sig),
            expected.canonical_form(&s.sig),
            "lifted: {:?}",
            lifted.render_roots(&s.sig)
        );

        // B and Z are shared into the base; A is constant b but not shared.
        let b = path_from_names(&s.sig, &["B"]).unwrap();
        let z = path_from_names(&s.sig, &["C", "Z"]).unwrap();
        let a = path_from_names(&s.sig, &["A"]).unwrap();
        assert_eq!(lifted.get_path_at(0, &b), lifted.get_path_at(1, &b));
        assert_eq!(lifted.get_path_at(0, &z), lifted.get_path_at(1, &z));
        assert_ne!(lifted.get_path_at(0, &a), lifted.get_path_at(1, &a));
        let out_a = lifted.get_path_at(1, &a).unwrap();
        assert_eq!(s.sig.type_name(lifted.node_type(out_a)), "b");
    }

    #[test]
    fn lifting_all_rules_keeps_the_constant_and_drops_the_flipped() {
        let s = setup_with(4);
        let unfolded = unfolded_for(&s);
        let anns: Vec<Vec<Fs>> = s.pruned.states.iter().map(|st| st.anns.clone()).collect();
        let lifted = lift_generalization(&s.sig, &unfolded, &s.rules, &anns, &s.entry, 16);
        let a = path_from_names(&s.sig, &["A"]).unwrap();
        let b = path_from_names(&s.sig, &["B"]).unwrap();
        let x = path_from_names(&s.sig, &["C", "X"]).unwrap();
        let out_a = lifted.get_path_at(1, &a).unwrap();
        assert_eq!(s.sig.type_name(lifted.node_type(out_a)), "b");
        // B is flipped by rule 4, C.X by rule 1: generalized to bool, unshared.
        let out_b = lifted.get_path_at(1, &b).unwrap();
        assert_eq!(s.sig.type_name(lifted.node_type(out_b)), "bool");
        assert_ne!(lifted.get_path_at(0, &b), lifted.get_path_at(1, &b));
        let out_x = lifted.get_path_at(1, &x).unwrap();
        assert_eq!(s.sig.type_name(lifted.node_type(out_x)), "bool");
        assert_ne!(lifted.get_path_at(0, &x), lifted.get_path_at(1, &x));
    }

    #[test]
    fn lifting_a_lone_state_is_the_identity() {
        let s = setup_with(4);
        // Entry to which nothing applies.
        let entry = grammar::parse_avm_text(
            &s.sig,
            "word & (A: a, B: +, C: t_2 & (W: -, X: -, Y: -, Z: <>))",
        )
        .unwrap();
        let follow = compute_follow(&s.sig, &s.rules);
        let global = build_global_fsa(&follow);
        let reduced = reduce_by_propagation(&s.sig, &global, &s.rules, 8);
        let pruned = prune_for_entry(&s.sig, &reduced, &s.rules, &entry, 0, 8);
        assert_eq!(pruned.states.len(), 1);
        let clauses = encode_interaction(&pruned);
        let anns: Vec<Vec<Fs>> = pruned.states.iter().map(|st| st.anns.clone()).collect();
        let unfolded = partial_unfold(&s.sig, &clauses, &s.rules, &anns);
        let lifted = lift_generalization(&s.sig, &unfolded, &s.rules, &anns, &entry, 16);
        assert_eq!(
            lifted.canonical_form(&s.sig),
            diag_pair(&entry).canonical_form(&s.sig)
        );
    }

    #[test]
    fn lifted_output_subsumes_every_derived_entry() {
        let s = setup_with(4);
        let unfolded = unfolded_for(&s);
        let anns: Vec<Vec<Fs>> = s.pruned.states.iter().map(|st| st.anns.clone()).collect();
        let lifted = lift_generalization(&s.sig, &unfolded, &s.rules, &anns, &s.entry, 16);
        let lifted_out = lifted.extract_root(1);
        // Free closure of rule application over the base entry.
        let mut seen: Vec<Fs> = vec![s.entry.clone()];
        let mut frontier = vec![s.entry.clone()];
        while let Some(e) = frontier.pop() {
            for r in &s.rules {
                for d in r.apply(&s.sig, &e) {
                    if !seen.contains(&d) {
                        seen.push(d.clone());
                        frontier.push(d);
                    }
                }
            }
        }
        assert_eq!(seen.len(), 7);
        for d in &seen {
            assert!(
                lifted_out.subsumes(d, &s.sig),
                "derived entry escapes the lift: {}",
                d.render(&s.sig)
            );
        }
    }
}
