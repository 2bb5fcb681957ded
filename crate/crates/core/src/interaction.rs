//! Rule interaction: the follow relation, the interaction automaton over rule
//! sequences, propagation-based reduction, per-entry pruning with tabling
//! (abstract lexicon expansion), natural classes, and the definite-clause
//! encoding of automata.
//!
//! The automaton is a trie over repetition-free rule sequences: every
//! transition except the ones introducing cycles leads to a new state, so a
//! transition can later be removed for one sequence without affecting others.
//! A rule repeated on a path becomes a back-edge to the state reached by its
//! most recent prior occurrence. All states are final; the initial state
//! accepts the empty sequence (the base entry itself).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::featstruct::Fs;
use crate::rules::CompiledRule;
use crate::signature::Signature;

/// Which rules may apply immediately after which; indices 1-based, follower
/// lists ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FollowRelation(pub Vec<Vec<usize>>);

impl FollowRelation {
    pub fn followers(&self, rule: usize) -> &[usize] {
        &self.0[rule - 1]
    }

    pub fn rule_count(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for FollowRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, followers) in self.0.iter().enumerate() {
            let list = followers
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            writeln!(f, "follow({}, [{}]).", i + 1, list)?;
        }
        Ok(())
    }
}

/// `j` follows `i` iff some most-general output of `i` unifies with the
/// in-specification of `j`.
pub fn compute_follow(sig: &Signature, rules: &[CompiledRule]) -> FollowRelation {
    let outputs: Vec<Vec<Fs>> = rules.iter().map(|r| r.generic_outputs(sig)).collect();
    let in_specs: Vec<Fs> = rules.iter().map(|r| r.rule.in_spec()).collect();
    let mut rel = Vec::with_capacity(rules.len());
    for outs in &outputs {
        let mut followers = Vec::new();
        for (j, in_spec) in in_specs.iter().enumerate() {
            if outs.iter().any(|o| o.unify(in_spec, sig).is_ok()) {
                followers.push(j + 1);
            }
        }
        rel.push(followers);
    }
    FollowRelation(rel)
}

#[derive(Debug, Clone)]
pub struct State {
    /// Rule sequence spelled by the unique trie path from the initial state.
    pub seq: Vec<usize>,
    /// Structures propagated to this state; empty until a propagation pass
    /// has run.
    pub anns: Vec<Fs>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub rule: usize,
    pub to: usize,
    pub back: bool,
}

/// Interaction automaton. State 0 is initial; every state is final.
#[derive(Debug, Clone)]
pub struct Automaton {
    pub states: Vec<State>,
    /// Sorted by (from, rule).
    pub transitions: Vec<Transition>,
}

impl Automaton {
    pub fn out_transitions(&self, s: usize) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(move |t| t.from == s)
    }

    pub fn state_by_seq(&self, seq: &[usize]) -> Option<usize> {
        self.states.iter().position(|s| s.seq == seq)
    }

    /// Structural identity key: transition shape with the canonical state
    /// numbering, ignoring annotations.
    pub fn shape_key(&self) -> String {
        let arcs = self
            .transitions
            .iter()
            .map(|t| format!("{}({},{})", t.rule, t.from, t.to))
            .collect::<Vec<_>>()
            .join(";");
        format!("states={};{}", self.states.len(), arcs)
    }

    /// Graphviz rendering; states named `q1..qN` in canonical order, the
    /// initial state marked by an unlabeled entry arrow.
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        s.push_str("digraph interaction {\n");
        s.push_str("  rankdir=LR;\n");
        s.push_str("  node [shape=doublecircle];\n");
        s.push_str("  start [shape=none, label=\"\"];\n");
        s.push_str("  start -> q1;\n");
        for (i, _) in self.states.iter().enumerate() {
            s.push_str(&format!("  q{};\n", i + 1));
        }
        for t in &self.transitions {
            s.push_str(&format!(
                "  q{} -> q{} [label=\"{}\"];\n",
                t.from + 1,
                t.to + 1,
                t.rule
            ));
        }
        s.push_str("}\n");
        s
    }

    /// Checks the trie and back-edge invariants; used by tests and `check`.
    pub fn check_invariants(&self) -> Result<(), String> {
        // Initial state, unique incoming tree arc per non-initial state.
        let mut incoming = vec![0usize; self.states.len()];
        for t in &self.transitions {
            if !t.back {
                incoming[t.to] += 1;
                if self.states[t.to].seq.len() != self.states[t.from].seq.len() + 1
                    || !self.states[t.to].seq.starts_with(&self.states[t.from].seq)
                    || *self.states[t.to].seq.last().unwrap() != t.rule
                {
                    return Err(format!(
                        "tree arc {}({},{}) does not extend the trie path",
                        t.rule, t.from, t.to
                    ));
                }
            }
        }
        if incoming[0] != 0 {
            return Err("initial state has an incoming tree arc".into());
        }
        for (i, c) in incoming.iter().enumerate().skip(1) {
            if *c != 1 {
                return Err(format!("state {i} has {c} incoming tree arcs"));
            }
        }
        // Back-edges target the most recent prior occurrence of their rule.
        for t in &self.transitions {
            if t.back {
                let seq = &self.states[t.from].seq;
                let pos = seq.iter().rposition(|&r| r == t.rule).ok_or_else(|| {
                    format!(
                        "back-edge {}({},{}) without prior occurrence",
                        t.rule, t.from, t.to
                    )
                })?;
                if self.states[t.to].seq != seq[..pos + 1] {
                    return Err(format!(
                        "back-edge {}({},{}) skips the most recent occurrence",
                        t.rule, t.from, t.to
                    ));
                }
            }
        }
        // Reachability.
        let mut seen = vec![false; self.states.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in self.out_transitions(s) {
                if !seen[t.to] {
                    seen[t.to] = true;
                    stack.push(t.to);
                }
            }
        }
        if let Some(dead) = seen.iter().position(|&r| !r) {
            return Err(format!("state {dead} unreachable"));
        }
        Ok(())
    }
}

/// Builds the global automaton from the follow relation: a depth-first trie
/// over repetition-free sequences with ascending rule labels; repetitions
/// become back-edges.
pub fn build_global_fsa(follow: &FollowRelation) -> Automaton {
    let n = follow.rule_count();
    let mut states = vec![State {
        seq: Vec::new(),
        anns: Vec::new(),
    }];
    let mut transitions = Vec::new();

    fn expand(
        state: usize,
        path: &mut Vec<(usize, usize)>,
        follow: &FollowRelation,
        n: usize,
        states: &mut Vec<State>,
        transitions: &mut Vec<Transition>,
    ) {
        let available: Vec<usize> = match states[state].seq.last() {
            None => (1..=n).collect(),
            Some(&last) => follow.followers(last).to_vec(),
        };
        for r in available {
            if let Some(pos) = path.iter().rposition(|&(rr, _)| rr == r) {
                let target = path[pos].1;
                transitions.push(Transition {
                    from: state,
                    rule: r,
                    to: target,
                    back: true,
                });
            } else {
                let mut seq = states[state].seq.clone();
                seq.push(r);
                let new = states.len();
                states.push(State {
                    seq,
                    anns: Vec::new(),
                });
                transitions.push(Transition {
                    from: state,
                    rule: r,
                    to: new,
                    back: false,
                });
                path.push((r, new));
                expand(new, path, follow, n, states, transitions);
                path.pop();
            }
        }
    }
    let mut path = Vec::new();
    expand(0, &mut path, follow, n, &mut states, &mut transitions);
    transitions.sort_by_key(|t| (t.from, t.rule));
    Automaton {
        states,
        transitions,
    }
}

/// Result of propagating structures through an automaton.
pub struct Propagation {
    /// Per state, canonically deduplicated.
    pub anns: Vec<Vec<Fs>>,
    /// Per transition (same order as `automaton.transitions`): did any
    /// application along it succeed.
    pub arc_succeeded: Vec<bool>,
    /// The annotation sets reached a fixpoint within the sweep cap.
    pub converged: bool,
}

/// Propagates `start` from the initial state along all transitions,
/// accumulating annotation sets until they stabilize or `cycle_cap` extra
/// sweeps have run. A single sweep fully covers the acyclic part (transitions
/// are processed in trie order); additional sweeps correspond to cycle
/// traversals.
pub fn propagate(
    sig: &Signature,
    aut: &Automaton,
    rules: &[CompiledRule],
    start: &[Fs],
    cycle_cap: usize,
) -> Propagation {
    let mut anns: Vec<Vec<Fs>> = vec![Vec::new(); aut.states.len()];
    let mut arc_succeeded = vec![false; aut.transitions.len()];
    for s in start {
        if !anns[0].contains(s) {
            anns[0].push(s.clone());
        }
    }
    let mut converged = false;
    for _sweep in 0..=cycle_cap {
        let mut changed = false;
        for (ti, t) in aut.transitions.iter().enumerate() {
            let rule = &rules[t.rule - 1];
            let sources = anns[t.from].clone();
            for ann in &sources {
                for d in rule.apply(sig, ann) {
                    arc_succeeded[ti] = true;
                    if !anns[t.to].contains(&d) {
                        anns[t.to].push(d);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    Propagation {
        anns,
        arc_succeeded,
        converged,
    }
}

/// Rebuilds a trie automaton from the surviving transitions, renumbering
/// states in depth-first order with ascending rule labels and dropping
/// unreachable states.
fn rebuild(aut: &Automaton, keep: &[bool]) -> Automaton {
    let mut states = vec![State {
        seq: aut.states[0].seq.clone(),
        anns: Vec::new(),
    }];
    let mut transitions = Vec::new();
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    map.insert(0, 0);

    fn visit(
        old: usize,
        aut: &Automaton,
        keep: &[bool],
        map: &mut BTreeMap<usize, usize>,
        states: &mut Vec<State>,
        transitions: &mut Vec<Transition>,
    ) {
        let outs: Vec<(usize, &Transition)> = aut
            .transitions
            .iter()
            .enumerate()
            .filter(|(i, t)| t.from == old && keep[*i])
            .collect();
        for (_, t) in outs {
            if t.back {
                // Target is an ancestor already mapped.
                let new_from = map[&old];
                let new_to = map[&t.to];
                transitions.push(Transition {
                    from: new_from,
                    rule: t.rule,
                    to: new_to,
                    back: true,
                });
            } else {
                let new = states.len();
                states.push(State {
                    seq: aut.states[t.to].seq.clone(),
                    anns: Vec::new(),
                });
                map.insert(t.to, new);
                transitions.push(Transition {
                    from: map[&old],
                    rule: t.rule,
                    to: new,
                    back: false,
                });
                visit(t.to, aut, keep, map, states, transitions);
            }
        }
    }
    visit(0, aut, keep, &mut map, &mut states, &mut transitions);
    transitions.sort_by_key(|t| (t.from, t.rule));
    Automaton {
        states,
        transitions,
    }
}

/// States lying on or after a cycle (reachable from some back-edge target).
fn cyclic_region(aut: &Automaton) -> HashSet<usize> {
    let mut region = HashSet::new();
    let mut stack: Vec<usize> = aut
        .transitions
        .iter()
        .filter(|t| t.back)
        .map(|t| t.to)
        .collect();
    while let Some(s) = stack.pop() {
        if region.insert(s) {
            for t in aut.out_transitions(s) {
                stack.push(t.to);
            }
        }
    }
    region
}

fn drop_failing_arcs(
    sig: &Signature,
    aut: &Automaton,
    rules: &[CompiledRule],
    prop: &Propagation,
    cycle_cap: usize,
) -> (Automaton, bool) {
    let cyclic = if prop.converged {
        HashSet::new()
    } else {
        cyclic_region(aut)
    };
    let keep: Vec<bool> = aut
        .transitions
        .iter()
        .enumerate()
        .map(|(i, t)| prop.arc_succeeded[i] || (!prop.converged && cyclic.contains(&t.from)))
        .collect();
    let mut rebuilt = rebuild(aut, &keep);
    let fresh = propagate(sig, &rebuilt, rules, &prop.anns[0], cycle_cap);
    let converged = fresh.converged;
    for (s, anns) in fresh.anns.into_iter().enumerate() {
        rebuilt.states[s].anns = anns;
    }
    (rebuilt, converged)
}

/// Erases the annotations of states whose sets did not stabilize: downstream
/// consumers treat an empty annotation set as "unknown" and stay
/// conservative (no transfer filtering, no lifted information).
fn clear_unstable_anns(aut: &mut Automaton, converged: bool) {
    if converged {
        return;
    }
    for s in cyclic_region(aut) {
        aut.states[s].anns.clear();
    }
}

/// Removes transitions whose propagated applications always fail, starting
/// from the most general entry description. Back-edge transitions are only
/// removed when they fail at the first visit and after every tracked cycle
/// traversal; if the cap is hit before the annotation sets stabilize, arcs in
/// the cyclic region are kept.
pub fn reduce_by_propagation(
    sig: &Signature,
    aut: &Automaton,
    rules: &[CompiledRule],
    cycle_cap: usize,
) -> Automaton {
    let start = vec![Fs::most_general(sig, sig.root())];
    let prop = propagate(sig, aut, rules, &start, cycle_cap);
    let (mut reduced, converged) = drop_failing_arcs(sig, aut, rules, &prop, cycle_cap);
    clear_unstable_anns(&mut reduced, converged);
    reduced
}

/// Copies `depth` iterations of each direct cycle (self-loop) into fresh
/// states, so that pruning can discard the residual cyclic arc when it fails
/// after the copies.
fn unfurl_self_loops(aut: &Automaton, depth: usize) -> Automaton {
    if depth == 0 {
        return aut.clone();
    }
    let mut states = aut.states.clone();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut loops: Vec<Transition> = Vec::new();
    for t in &aut.transitions {
        if t.back && t.from == t.to {
            loops.push(*t);
        } else {
            transitions.push(*t);
        }
    }

    // Deep copy of the tree rooted at `root`, its sequence rebased to
    // `new_seq`. Internal back-edges map into the copy; external ones keep
    // their original target.
    fn copy_subtree(
        root: usize,
        new_seq: Vec<usize>,
        aut: &Automaton,
        states: &mut Vec<State>,
        transitions: &mut Vec<Transition>,
    ) -> usize {
        fn collect(s: usize, aut: &Automaton, order: &mut Vec<usize>) {
            order.push(s);
            for t in aut.out_transitions(s) {
                if !t.back {
                    collect(t.to, aut, order);
                }
            }
        }
        let mut order: Vec<usize> = Vec::new();
        collect(root, aut, &mut order);
        let root_len = aut.states[root].seq.len();
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        for &old in &order {
            let new = states.len();
            map.insert(old, new);
            let mut seq = new_seq.clone();
            seq.extend_from_slice(&aut.states[old].seq[root_len..]);
            states.push(State {
                seq,
                anns: Vec::new(),
            });
        }
        for &old in &order {
            for t in aut.out_transitions(old) {
                let to = match map.get(&t.to) {
                    Some(&m) => m,
                    None if t.back => t.to,
                    None => continue,
                };
                transitions.push(Transition {
                    from: map[&old],
                    rule: t.rule,
                    to,
                    back: t.back,
                });
            }
        }
        map[&root]
    }

    for lp in &loops {
        let mut prev = lp.from;
        for i in 1..=depth {
            let mut seq = aut.states[lp.from].seq.clone();
            seq.extend(std::iter::repeat_n(lp.rule, i));
            let fresh = states.len();
            states.push(State {
                seq: seq.clone(),
                anns: Vec::new(),
            });
            transitions.push(Transition {
                from: prev,
                rule: lp.rule,
                to: fresh,
                back: false,
            });
            // The unfurled copy keeps every other way out of the loop state.
            let others: Vec<Transition> = aut
                .out_transitions(lp.from)
                .filter(|t| !(t.back && t.from == t.to))
                .copied()
                .collect();
            for t in others {
                if t.back {
                    transitions.push(Transition {
                        from: fresh,
                        rule: t.rule,
                        to: t.to,
                        back: true,
                    });
                } else {
                    let mut child_seq = seq.clone();
                    child_seq.push(t.rule);
                    let copied = copy_subtree(t.to, child_seq, aut, &mut states, &mut transitions);
                    transitions.push(Transition {
                        from: fresh,
                        rule: t.rule,
                        to: copied,
                        back: false,
                    });
                }
            }
            prev = fresh;
        }
        transitions.push(Transition {
            from: prev,
            rule: lp.rule,
            to: prev,
            back: true,
        });
    }

    transitions.sort_by_key(|t| (t.from, t.rule));
    Automaton {
        states,
        transitions,
    }
}

/// Per-entry pruning (abstract lexicon expansion): propagate the entry,
/// remove failing transitions and unreachable states, and table derived
/// structures to discard one incoming arc of any state whose annotation set
/// duplicates another's (keeping the lexicographically earlier sequence).
pub fn prune_for_entry(
    sig: &Signature,
    reduced: &Automaton,
    rules: &[CompiledRule],
    entry: &Fs,
    unfurl_depth: usize,
    cycle_cap: usize,
) -> Automaton {
    let mut aut = unfurl_self_loops(reduced, unfurl_depth);
    loop {
        let prop = propagate(sig, &aut, rules, std::slice::from_ref(entry), cycle_cap);
        let (next, converged) = drop_failing_arcs(sig, &aut, rules, &prop, cycle_cap);
        aut = next;

        // Tabling: group states by their canonical annotation sets. States
        // whose sets did not stabilize are exempt — an incomplete set could
        // spuriously coincide with another state's.
        let unstable = if converged {
            HashSet::new()
        } else {
            cyclic_region(&aut)
        };
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, st) in aut.states.iter().enumerate() {
            if unstable.contains(&i) {
                continue;
            }
            let mut forms: Vec<String> = st.anns.iter().map(|a| a.canonical_form(sig)).collect();
            forms.sort();
            groups.entry(forms.join("|")).or_default().push(i);
        }
        let mut discard: BTreeSet<usize> = BTreeSet::new();
        for members in groups.values() {
            if members.len() < 2 {
                continue;
            }
            let keeper = *members
                .iter()
                .min_by(|&&a, &&b| aut.states[a].seq.cmp(&aut.states[b].seq))
                .unwrap();
            for &m in members {
                if m != keeper {
                    discard.insert(m);
                }
            }
        }
        if discard.is_empty() {
            clear_unstable_anns(&mut aut, converged);
            return aut;
        }
        let keep: Vec<bool> = aut
            .transitions
            .iter()
            .map(|t| !(!t.back && discard.contains(&t.to)))
            .collect();
        aut = rebuild(&aut, &keep);
    }
}

/// A natural class: entries sharing one pruned automaton.
#[derive(Debug, Clone)]
pub struct NaturalClass {
    pub automaton: Automaton,
    /// Indices into the lexicon's entry list, in declaration order.
    pub members: Vec<usize>,
    /// Global predicate number of this class's state 0.
    pub pred_base: usize,
}

impl NaturalClass {
    pub fn pred_name(&self, state: usize) -> String {
        format!("q_{}", self.pred_base + state)
    }

    /// The class id is its entry-point predicate.
    pub fn id(&self) -> String {
        self.pred_name(0)
    }
}

/// Groups pruned automata by structural identity. Classes are numbered by
/// first appearance; interaction predicates are numbered globally across
/// classes so every state has a unique name.
pub fn group_classes(pruned: Vec<Automaton>) -> Vec<NaturalClass> {
    let mut classes: Vec<NaturalClass> = Vec::new();
    let mut by_key: BTreeMap<String, usize> = BTreeMap::new();
    let mut next_pred = 1usize;
    for (entry_ix, aut) in pruned.into_iter().enumerate() {
        let key = aut.shape_key();
        if let Some(&c) = by_key.get(&key) {
            classes[c].members.push(entry_ix);
        } else {
            by_key.insert(key, classes.len());
            let pred_base = next_pred;
            next_pred += aut.states.len();
            classes.push(NaturalClass {
                automaton: aut,
                members: vec![entry_ix],
                pred_base,
            });
        }
    }
    classes
}

/// One definite clause of an interaction predicate.
#[derive(Debug, Clone)]
pub enum InteractionClause {
    /// `q_i(In, In).`
    Unit { state: usize },
    /// `q_i(In, Out) :- lex_rule_r(In, Aux), q_j(Aux, Out).`
    ///
    /// After partial unfolding, `frame` constrains In and Aux with a
    /// surviving transfer frame of the rule (index into the rule's transfer
    /// clause list).
    Step {
        state: usize,
        rule: usize,
        next: usize,
        frame: Option<usize>,
    },
}

/// Encodes an automaton as interaction clauses: one step clause per
/// transition, one unit clause per state. Step clauses come first, in
/// (state, rule) order, then the unit clauses.
pub fn encode_interaction(aut: &Automaton) -> Vec<InteractionClause> {
    let mut clauses: Vec<InteractionClause> = aut
        .transitions
        .iter()
        .map(|t| InteractionClause::Step {
            state: t.from,
            rule: t.rule,
            next: t.to,
            frame: None,
        })
        .collect();
    for s in 0..aut.states.len() {
        clauses.push(InteractionClause::Unit { state: s });
    }
    clauses
}
