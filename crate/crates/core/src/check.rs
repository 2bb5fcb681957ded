//! Self-checks: golden results for the bundled grammar plus randomized
//! property suites over its signature. Run by `lexcov check` and by the
//! acceptance tests.
//!
//! Everything here is deterministic: the generators run off a fixed-seed
//! splitmix64 stream, so repeated runs produce byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::compile::{compile, compile_text, CompiledLexicon, RunConfig};
use crate::featstruct::{diag_pair, path_to_string, BNode, Fs, FsBuilder};
use crate::grammar::{self, BUNDLED_GRAMMAR};
use crate::interaction::InteractionClause;
use crate::rules::CompiledRule;
use crate::signature::{Signature, TypeId};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn from(name: &'static str, r: Result<String, String>) -> CheckResult {
        match r {
            Ok(detail) => CheckResult {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckResult {
                name,
                passed: false,
                detail,
            },
        }
    }
}

/// splitmix64; fixed seeds keep the suite reproducible.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn one_in(&mut self, n: u64) -> bool {
        self.next_u64().is_multiple_of(n)
    }
}

fn gen_total_node(
    b: &mut FsBuilder<'_>,
    sig: &Signature,
    rng: &mut Rng,
    restriction: TypeId,
    depth: usize,
    pool: &mut Vec<(TypeId, BNode)>,
) -> BNode {
    // Occasionally share an already-finished subtree of a fitting type.
    if !pool.is_empty() && rng.one_in(4) {
        let fits: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, (t, _))| sig.subtype(*t, restriction))
            .map(|(i, _)| i)
            .collect();
        if !fits.is_empty() {
            return pool[fits[rng.below(fits.len())]].1;
        }
    }
    let species = sig.species(restriction);
    let pick = if depth == 0 {
        // Prefer a species without features so generation bottoms out.
        species
            .iter()
            .copied()
            .min_by_key(|&s| sig.approp(s).len())
            .unwrap()
    } else {
        species[rng.below(species.len())]
    };
    let node = b.node(pick);
    for &(f, restr) in sig.approp(pick) {
        let child = gen_total_node(b, sig, rng, restr, depth.saturating_sub(1), pool);
        b.arc(node, f, child);
    }
    pool.push((pick, node));
    node
}

/// A totally well-typed, species-resolved structure under `root_ty`, with
/// occasional structure sharing and bounded recursion.
pub fn random_total_fs(sig: &Signature, rng: &mut Rng, root_ty: TypeId, depth: usize) -> Fs {
    let mut b = FsBuilder::new(sig);
    let mut pool = Vec::new();
    let root = gen_total_node(&mut b, sig, rng, root_ty, depth, &mut pool);
    b.push_root(root);
    b.finish()
        .expect("species-resolved generation is well-typed")
}

fn subtypes_of(sig: &Signature, t: TypeId) -> Vec<TypeId> {
    (0..sig.type_count() as u16)
        .map(TypeId)
        .filter(|&s| sig.subtype(s, t))
        .collect()
}

fn gen_partial_node(
    b: &mut FsBuilder<'_>,
    sig: &Signature,
    rng: &mut Rng,
    restriction: TypeId,
    depth: usize,
    pool: &mut Vec<(TypeId, BNode)>,
) -> BNode {
    if !pool.is_empty() && rng.one_in(5) {
        let fits: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, (t, _))| sig.subtype(*t, restriction))
            .map(|(i, _)| i)
            .collect();
        if !fits.is_empty() {
            return pool[fits[rng.below(fits.len())]].1;
        }
    }
    let subs = subtypes_of(sig, restriction);
    let ty = subs[rng.below(subs.len())];
    let node = b.node(ty);
    if depth > 0 {
        for &(f, restr) in sig.approp(ty) {
            if rng.one_in(2) {
                continue;
            }
            let child = gen_partial_node(b, sig, rng, restr, depth - 1, pool);
            b.arc(node, f, child);
        }
    }
    pool.push((ty, node));
    node
}

/// A partial, well-typed structure under `root_ty`: arbitrary subtype
/// refinements, a random subset of appropriate features, occasional sharing.
pub fn random_partial_fs(sig: &Signature, rng: &mut Rng, root_ty: TypeId, depth: usize) -> Fs {
    let mut b = FsBuilder::new(sig);
    let mut pool = Vec::new();
    let root = gen_partial_node(&mut b, sig, rng, root_ty, depth, &mut pool);
    b.push_root(root);
    b.finish()
        .expect("partial generation respects restrictions")
}

/// Free closure of rule application over a base entry, deduplicated by
/// canonical form; `None` when `max_size` is exceeded.
pub fn free_closure(
    sig: &Signature,
    rules: &[CompiledRule],
    base: &Fs,
    max_size: usize,
) -> Option<BTreeMap<String, Fs>> {
    let mut seen: BTreeMap<String, Fs> = BTreeMap::new();
    let mut frontier = vec![base.clone()];
    seen.insert(base.canonical_form(sig), base.clone());
    while let Some(e) = frontier.pop() {
        for r in rules {
            for d in r.apply(sig, &e) {
                let key = d.canonical_form(sig);
                if let std::collections::btree_map::Entry::Vacant(slot) = seen.entry(key) {
                    slot.insert(d.clone());
                    frontier.push(d);
                    if seen.len() > max_size {
                        return None;
                    }
                }
            }
        }
    }
    Some(seen)
}

fn paper_lexicon() -> CompiledLexicon {
    compile_text(BUNDLED_GRAMMAR, RunConfig::default()).expect("bundled grammar compiles")
}

fn paper_lexicon_rules_1_2() -> CompiledLexicon {
    let mut g = grammar::parse_grammar(BUNDLED_GRAMMAR).unwrap();
    g.rules.truncate(2);
    compile(&g, RunConfig::default()).expect("restricted grammar compiles")
}

// ---------------------------------------------------------------------------
// Golden results for the bundled grammar
// ---------------------------------------------------------------------------

pub fn check_follow_relation() -> Result<String, String> {
    let lex = paper_lexicon();
    let expected =
        "follow(1, [2, 3, 4]).\nfollow(2, [1, 3, 4]).\nfollow(3, [3, 4]).\nfollow(4, []).\n";
    let got = lex.follow.to_string();
    if got == expected {
        Ok("follow relation as expected".into())
    } else {
        Err(format!("follow relation was:\n{got}"))
    }
}

pub fn check_transfer_derivation() -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let set = |names: &[&[&str]]| -> Vec<String> {
        let mut v: Vec<String> = names.iter().map(|p| p.join(".")).collect();
        v.sort();
        v
    };
    let shares_of = |rule: usize, clause: usize| -> Vec<String> {
        lex.rules[rule - 1].transfer[clause]
            .shares
            .iter()
            .map(|p| path_to_string(sig, p))
            .collect()
    };
    if lex.rules[1].transfer.len() != 2 {
        return Err(format!(
            "rule 2 has {} transfer clauses, expected 2",
            lex.rules[1].transfer.len()
        ));
    }
    if shares_of(2, 0) != set(&[&["A"], &["B"], &["C", "X"], &["C", "Y"]]) {
        return Err(format!("rule 2 first clause shares {:?}", shares_of(2, 0)));
    }
    if shares_of(2, 1) != set(&[&["A"], &["B"], &["C", "X"], &["C", "Y"], &["C", "Z"]]) {
        return Err(format!("rule 2 second clause shares {:?}", shares_of(2, 1)));
    }
    if lex.rules[2].transfer.len() != 1
        || shares_of(3, 0) != set(&[&["A"], &["B"], &["C", "W"], &["C", "X"]])
    {
        return Err("rule 3 transfer clauses are off".into());
    }
    if lex.rules[3].transfer.len() != 1
        || shares_of(4, 0) != set(&[&["A"], &["C", "W"], &["C", "Y"], &["C", "Z"]])
    {
        return Err("rule 4 transfer clauses are off".into());
    }
    // Full structural equality of the frames, modulo tag renaming.
    let expect_frame = |rule: usize, clause: usize, in_avm: &str, out_avm: &str| {
        let g = grammar::parse_grammar(&format!("rule x : {in_avm} ==> {out_avm}."))
            .expect("expected frame parses");
        let pair = grammar::lower_avm_pair(sig, &g.rules[0].in_avm, &g.rules[0].out_avm)
            .expect("expected frame lowers");
        let got = &lex.rules[rule - 1].transfer[clause].frame;
        if got.canonical_form(sig) != pair.canonical_form(sig) {
            return Err(format!(
                "rule {rule} clause {clause} frame is ({}, {})",
                got.render_roots(sig)[0],
                got.render_roots(sig)[1]
            ));
        }
        Ok(())
    };
    expect_frame(
        1,
        0,
        "word & (B: #1=bool, C: t_1 & (W: #2=bool))",
        "word & (B: #1, C: t_1 & (W: #2))",
    )?;
    expect_frame(
        1,
        1,
        "word & (B: #1=bool, C: t_2 & (W: #2=bool, Z: #3=list))",
        "word & (B: #1, C: t_2 & (W: #2, Z: #3))",
    )?;
    expect_frame(
        2,
        0,
        "word & (A: #1=letter, B: #2=bool, C: t_1 & (X: #3=bool, Y: #4=bool))",
        "word & (A: #1, B: #2, C: t_1 & (X: #3, Y: #4))",
    )?;
    expect_frame(
        2,
        1,
        "word & (A: #1=letter, B: #2=bool, C: t_2 & (X: #3=bool, Y: #4=bool, Z: #5=list))",
        "word & (A: #1, B: #2, C: t_2 & (X: #3, Y: #4, Z: #5))",
    )?;
    expect_frame(
        3,
        0,
        "word & (A: #1=letter, B: #2=bool, C: t_2 & (W: #3=bool, X: #4=bool))",
        "word & (A: #1, B: #2, C: t_2 & (W: #3, X: #4))",
    )?;
    expect_frame(
        4,
        0,
        "word & (A: #1=letter, C: t_2 & (W: #2=bool, Y: #3=bool, Z: #4=list))",
        "word & (A: #1, C: t_2 & (W: #2, Y: #3, Z: #4))",
    )?;
    Ok("transfer clauses match the expected frames exactly".into())
}

pub fn check_global_fsa_and_reduction() -> Result<String, String> {
    let lex = paper_lexicon();
    let global = &lex.global_fsa;
    global.check_invariants().map_err(|e| e.to_string())?;
    let back_12 = global
        .state_by_seq(&[1, 2])
        .and_then(|s12| {
            global
                .transitions
                .iter()
                .find(|t| t.back && t.from == s12 && t.rule == 1)
        })
        .is_some();
    let back_21 = global
        .state_by_seq(&[2, 1])
        .and_then(|s21| {
            global
                .transitions
                .iter()
                .find(|t| t.back && t.from == s21 && t.rule == 2)
        })
        .is_some();
    if !back_12 || !back_21 {
        return Err("the repetition back-edges are missing before reduction".into());
    }
    let reduced = &lex.reduced_fsa;
    reduced.check_invariants().map_err(|e| e.to_string())?;
    if reduced.transitions.len() != global.transitions.len() - 2
        || reduced.states.len() != global.states.len()
    {
        return Err(format!(
            "reduction removed {} arcs and {} states, expected exactly 2 arcs",
            global.transitions.len() - reduced.transitions.len(),
            global.states.len() - reduced.states.len()
        ));
    }
    for (seq, rule) in [(vec![1, 2], 1), (vec![2, 1], 2)] {
        let s = reduced.state_by_seq(&seq).unwrap();
        if reduced
            .transitions
            .iter()
            .any(|t| t.from == s && t.rule == rule)
        {
            return Err(format!("arc {rule} after {seq:?} survived reduction"));
        }
    }
    Ok("global automaton and reduction as expected".into())
}

pub fn check_pruned_automaton() -> Result<String, String> {
    let lex = paper_lexicon();
    let aut = &lex.classes[0].class.automaton;
    aut.check_invariants().map_err(|e| e.to_string())?;
    let mut arcs: Vec<(Vec<usize>, usize, Vec<usize>)> = aut
        .transitions
        .iter()
        .map(|t| {
            (
                aut.states[t.from].seq.clone(),
                t.rule,
                aut.states[t.to].seq.clone(),
            )
        })
        .collect();
    arcs.sort();
    let expected = vec![
        (vec![], 1, vec![1]),
        (vec![], 2, vec![2]),
        (vec![1], 2, vec![1, 2]),
        (vec![1, 2], 3, vec![1, 2, 3]),
        (vec![1, 2, 3], 3, vec![1, 2, 3]),
        (vec![1, 2, 3], 4, vec![1, 2, 3, 4]),
    ];
    if arcs != expected {
        return Err(format!("pruned transitions were {arcs:?}"));
    }
    Ok("pruned automaton has exactly the expected transitions".into())
}

pub fn check_clause_encoding() -> Result<String, String> {
    let lex = paper_lexicon();
    let class = &lex.classes[0];
    let steps = class
        .clauses
        .iter()
        .filter(|c| matches!(c, InteractionClause::Step { .. }))
        .count();
    let units = class
        .clauses
        .iter()
        .filter(|c| matches!(c, InteractionClause::Unit { .. }))
        .count();
    if steps != 6 || units != 6 {
        return Err(format!("{steps} step and {units} unit clauses"));
    }
    // After unfolding, the designated clauses carry the frame sharings.
    let sig = &lex.signature;
    let aut = &class.class.automaton;
    let frame_shares = |seq: &[usize], rule: usize| -> Option<Vec<String>> {
        let state = aut.state_by_seq(seq)?;
        class.unfolded.iter().find_map(|c| match c {
            InteractionClause::Step {
                state: s,
                rule: r,
                frame: Some(k),
                ..
            } if *s == state && *r == rule => Some(
                lex.rules[rule - 1].transfer[*k]
                    .shares
                    .iter()
                    .map(|p| path_to_string(sig, p))
                    .collect(),
            ),
            _ => None,
        })
    };
    let cases: [(&[usize], usize, &[&str]); 5] = [
        (&[], 1, &["B", "C.W", "C.Z"]),
        (&[], 2, &["A", "B", "C.X", "C.Y", "C.Z"]),
        (&[1], 2, &["A", "B", "C.X", "C.Y", "C.Z"]),
        (&[1, 2], 3, &["A", "B", "C.W", "C.X"]),
        (&[1, 2, 3], 3, &["A", "B", "C.W", "C.X"]),
    ];
    for (seq, rule, want) in cases {
        let got = frame_shares(seq, rule)
            .ok_or_else(|| format!("no unfolded clause for rule {rule} after {seq:?}"))?;
        if got != want {
            return Err(format!(
                "clause for rule {rule} after {seq:?} shares {got:?}, expected {want:?}"
            ));
        }
    }
    Ok("interaction clauses and unfolded frames as expected".into())
}

pub fn check_lifting() -> Result<String, String> {
    let lex = paper_lexicon_rules_1_2();
    let sig = &lex.signature;
    let lifted = &lex.entries[0].lifted;
    let expected = {
        let g = grammar::parse_grammar(
            "rule x : word & (A: b, B: #1=-, C: t_2 & (W: -, X: -, Y: -, Z: #2=<a, b>)) \
             ==> word & (A: b, B: #1, C: t_2 & (W: bool, X: bool, Y: bool, Z: #2)).",
        )
        .unwrap();
        grammar::lower_avm_pair(sig, &g.rules[0].in_avm, &g.rules[0].out_avm).unwrap()
    };
    if lifted.canonical_form(sig) != expected.canonical_form(sig) {
        return Err(format!(
            "lifted entry was ({}, {})",
            lifted.render_roots(sig)[0],
            lifted.render_roots(sig)[1]
        ));
    }
    Ok("lifted entry matches the delayed-application description".into())
}

pub fn check_enumeration_oracle() -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let closure = free_closure(sig, &lex.rules, &lex.entries[0].base, 1000)
        .ok_or("free closure did not converge")?;
    if closure.len() != 7 {
        return Err(format!(
            "free closure has {} members, expected 7",
            closure.len()
        ));
    }
    let baseline: BTreeSet<String> = lex
        .derive_all("e1", 32)
        .unwrap()
        .solutions
        .iter()
        .map(|s| s.entry.canonical_form(sig))
        .collect();
    let closure_keys: BTreeSet<String> = closure.keys().cloned().collect();
    if baseline != closure_keys {
        return Err("enumeration disagrees with the free closure".into());
    }
    for bound in 5..=100 {
        let again: BTreeSet<String> = lex
            .derive_all("e1", bound)
            .unwrap()
            .solutions
            .iter()
            .map(|s| s.entry.canonical_form(sig))
            .collect();
        if again != baseline {
            return Err(format!("enumeration unstable at bound {bound}"));
        }
    }
    Ok("7 derived entries, equal to the free closure, stable in the bound".into())
}

/// Every follow-permitted string up to the length bound either replays on the
/// entry and is accepted by the pruned automaton, or fails; acceptance with a
/// failing replay is confined to residual cyclic arcs. A rejected string that
/// replays is only tolerated when its values are all derivable anyway: that
/// is duplicate discarding removing a redundant accepting path.
pub fn check_language_soundness(max_len: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let aut = &lex.classes[0].class.automaton;
    let entry = &lex.entries[0].base;
    let derivable: BTreeSet<String> = lex
        .derive_all("e1", 32)
        .unwrap()
        .solutions
        .iter()
        .map(|s| s.entry.canonical_form(sig))
        .collect();
    // States on or after a cycle: their annotation sets are disjunctive, so
    // transitions out of them may fail on a particular visit.
    let cyclic: BTreeSet<usize> = {
        let mut region = BTreeSet::new();
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
    };

    let mut strings: Vec<Vec<usize>> = vec![vec![]];
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            let candidates: Vec<usize> = match s.last() {
                None => (1..=lex.rules.len()).collect(),
                Some(&last) => lex.follow.followers(last).to_vec(),
            };
            for r in candidates {
                let mut s2 = s.clone();
                s2.push(r);
                next.push(s2);
            }
        }
        strings.extend(next.iter().cloned());
        frontier = next;
    }

    let mut accepted_count = 0;
    for s in &strings {
        // Deterministic walk.
        let mut state = 0usize;
        let mut accepted = true;
        for &r in s {
            match aut.out_transitions(state).find(|t| t.rule == r) {
                Some(t) => state = t.to,
                None => {
                    accepted = false;
                    break;
                }
            }
        }
        // Replay by rule application.
        let mut values = vec![entry.clone()];
        let mut failed_in_cycle = false;
        let mut replay_ok = true;
        let mut walk_state = 0usize;
        for &r in s {
            let source = walk_state;
            let arc = aut.out_transitions(walk_state).find(|t| t.rule == r);
            if let Some(t) = arc {
                walk_state = t.to;
            }
            let mut next = Vec::new();
            for v in &values {
                next.extend(lex.rules[r - 1].apply(sig, v));
            }
            if next.is_empty() {
                replay_ok = false;
                failed_in_cycle = arc.map(|t| t.back).unwrap_or(false) || cyclic.contains(&source);
                break;
            }
            values = next;
        }
        if accepted {
            accepted_count += 1;
        }
        if replay_ok && !accepted {
            let all_derivable = values
                .iter()
                .all(|v| derivable.contains(&v.canonical_form(sig)));
            if !all_derivable {
                return Err(format!("string {s:?} replays but is rejected"));
            }
        }
        if accepted && !replay_ok && !failed_in_cycle {
            return Err(format!(
                "string {s:?} is accepted but fails outside the cyclic region"
            ));
        }
    }
    Ok(format!(
        "{} strings checked, {} accepted, all consistent",
        strings.len(),
        accepted_count
    ))
}

// ---------------------------------------------------------------------------
// Randomized property suites
// ---------------------------------------------------------------------------

fn word_type(sig: &Signature) -> TypeId {
    sig.type_by_name("word")
        .expect("bundled signature has word")
}

pub fn check_unification_algebra(seed: u64, cases: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    for i in 0..cases {
        let a = random_partial_fs(sig, &mut rng, w, 3);
        let b = random_partial_fs(sig, &mut rng, w, 3);
        let c = random_partial_fs(sig, &mut rng, w, 3);
        let ab = a.unify(&b, sig).ok();
        let ba = b.unify(&a, sig).ok();
        match (&ab, &ba) {
            (Some(x), Some(y)) if x == y => {}
            (None, None) => {}
            _ => return Err(format!("case {i}: unification is not commutative")),
        }
        let aa = a.unify(&a, sig).map_err(|e| format!("case {i}: {e}"))?;
        if aa != a {
            return Err(format!("case {i}: unification is not idempotent"));
        }
        let left = ab.as_ref().and_then(|x| x.unify(&c, sig).ok());
        let right = b.unify(&c, sig).ok().and_then(|y| a.unify(&y, sig).ok());
        match (&left, &right) {
            (Some(x), Some(y)) if x == y => {}
            (None, None) => {}
            _ => return Err(format!("case {i}: unification is not associative")),
        }
    }
    Ok(format!(
        "{cases} random triples satisfy the unification laws"
    ))
}

pub fn check_generalization_lub(seed: u64, cases: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    for i in 0..cases {
        let a = random_partial_fs(sig, &mut rng, w, 3);
        let b = random_partial_fs(sig, &mut rng, w, 3);
        let g = a.generalize(&b, sig);
        if !g.subsumes(&a, sig) || !g.subsumes(&b, sig) {
            return Err(format!(
                "case {i}: generalization does not subsume an input"
            ));
        }
        // Least generality: any common generalizer subsumes g.
        let third = random_partial_fs(sig, &mut rng, w, 3);
        let candidates = [
            g.clone(),
            a.generalize(&third, sig).generalize(&b, sig),
            Fs::most_general(sig, w),
            Fs::most_general(sig, sig.root()),
        ];
        for c in &candidates {
            if c.subsumes(&a, sig) && c.subsumes(&b, sig) && !c.subsumes(&g, sig) {
                return Err(format!("case {i}: a common generalizer escapes the join"));
            }
        }
    }
    Ok(format!(
        "{cases} random pairs satisfy the least-generality law"
    ))
}

pub fn check_subsumption_laws(seed: u64, cases: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    for i in 0..cases {
        let a = random_partial_fs(sig, &mut rng, w, 3);
        let b = random_partial_fs(sig, &mut rng, w, 3);
        let subs = a.subsumes(&b, sig);
        let absorbs = match a.unify(&b, sig) {
            Ok(u) => u == b,
            Err(_) => false,
        };
        if subs != absorbs {
            return Err(format!(
                "case {i}: subsumes disagrees with unify-absorption"
            ));
        }
        let canon_eq = a.canonical_form(sig) == b.canonical_form(sig);
        let mutual = a.subsumes(&b, sig) && b.subsumes(&a, sig);
        if canon_eq != mutual {
            return Err(format!(
                "case {i}: canonical equality disagrees with mutual subsumption"
            ));
        }
    }
    Ok(format!(
        "{cases} random pairs relate subsumption and unification"
    ))
}

pub fn check_transfer_totality(seed: u64, entries: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    let mut applications = 0usize;
    for i in 0..entries {
        let le = random_total_fs(sig, &mut rng, w, 5);
        let le_paths = le.enumerate_paths(0);
        for rule in &lex.rules {
            let changed = &rule.changed;
            let frames = &rule.frame_paths;
            let transferred: Vec<&(Vec<_>, _)> = le_paths
                .iter()
                .filter(|(p, _)| {
                    !frames.contains(p)
                        && !changed
                            .iter()
                            .any(|c| p.len() >= c.len() && p.starts_with(c))
                })
                .collect();
            for derived in rule.apply(sig, &le) {
                applications += 1;
                // Transfer totality: every untouched path keeps its value.
                for (p, n) in &transferred {
                    let d_node = derived.get_path(p).ok_or_else(|| {
                        format!(
                            "entry {i}: rule {} lost path {}",
                            rule.rule.name,
                            path_to_string(sig, p)
                        )
                    })?;
                    let want = le.extract_at(*n);
                    let got = derived.extract_at(d_node);
                    if want.canonical_form(sig) != got.canonical_form(sig) {
                        return Err(format!(
                            "entry {i}: rule {} changed transferred path {}",
                            rule.rule.name,
                            path_to_string(sig, p)
                        ));
                    }
                }
                // Reentrancies among transferred paths survive.
                for (pi, (p, pn)) in transferred.iter().enumerate() {
                    for (q, qn) in transferred.iter().skip(pi + 1) {
                        if pn == qn && derived.get_path(p) != derived.get_path(q) {
                            return Err(format!(
                                "entry {i}: rule {} broke sharing between {} and {}",
                                rule.rule.name,
                                path_to_string(sig, p),
                                path_to_string(sig, q)
                            ));
                        }
                    }
                }
                // Frame species are preserved.
                for fp in frames {
                    let (le_n, d_n) = match (le.get_path(fp), derived.get_path(fp)) {
                        (Some(a), Some(b)) => (a, b),
                        _ => continue,
                    };
                    if le.node_type(le_n) != derived.node_type(d_n) {
                        return Err(format!(
                            "entry {i}: rule {} lost the species at frame path {}",
                            rule.rule.name,
                            path_to_string(sig, fp)
                        ));
                    }
                }
            }
        }
    }
    Ok(format!(
        "{entries} random entries, {applications} applications, transfer total"
    ))
}

/// Builds a grammar source with the bundled signature and rules but a
/// replaced entry set.
fn grammar_with_entries(sig: &Signature, entries: &[Fs]) -> String {
    let mut src = String::new();
    for line in BUNDLED_GRAMMAR.lines() {
        let t = line.trim_start();
        if !t.starts_with("entry ") {
            src.push_str(line);
            src.push('\n');
        }
    }
    for (i, e) in entries.iter().enumerate() {
        let _ = writeln!(src, "entry r{} {}.", i + 1, e.render(sig));
    }
    src
}

pub fn check_unfolding_soundness(seed: u64, random_entries: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    let entries: Vec<Fs> = (0..random_entries)
        .map(|_| random_total_fs(sig, &mut rng, w, 4))
        .collect();
    let src = grammar_with_entries(sig, &entries);
    let rlex = compile_text(&src, RunConfig::default()).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for lexicon in [&lex, &rlex] {
        for (ix, entry) in lexicon.entries.iter().enumerate() {
            let class = &lexicon.classes[entry.class_ix];
            let run = |clauses: &[InteractionClause]| -> BTreeSet<String> {
                crate::runtime::solve(
                    &lexicon.signature,
                    &lexicon.rules,
                    clauses,
                    &class.class.id(),
                    0,
                    entry.base.clone(),
                    16,
                )
                .map(|s| s.entry.canonical_form(&lexicon.signature))
                .collect()
            };
            if run(&class.clauses) != run(&class.unfolded) {
                return Err(format!(
                    "entry {ix}: unfolded program differs from the plain one"
                ));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} entries agree before and after unfolding"
    ))
}

pub fn check_lift_soundness(seed: u64, random_entries: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    let entries: Vec<Fs> = (0..random_entries)
        .map(|_| random_total_fs(sig, &mut rng, w, 4))
        .collect();
    let src = grammar_with_entries(sig, &entries);
    let rlex = compile_text(&src, RunConfig::default()).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for lexicon in [&lex, &rlex] {
        for entry in &lexicon.entries {
            let lifted_out = entry.lifted.extract_root(1);
            let closure = free_closure(&lexicon.signature, &lexicon.rules, &entry.base, 4000)
                .ok_or_else(|| format!("closure for {} did not converge", entry.name))?;
            for d in closure.values() {
                if !lifted_out.subsumes(d, &lexicon.signature) {
                    return Err(format!(
                        "entry {}: lifted description excludes a derivable entry",
                        entry.name
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} derived entries covered by their lifts"))
}

pub fn check_lookup_filter_soundness(seed: u64, queries: usize) -> Result<String, String> {
    let base_lex = paper_lexicon();
    let sig = &base_lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    // Lexicon with the bundled entry plus three random ones.
    let extra: Vec<Fs> = (0..3)
        .map(|_| random_total_fs(sig, &mut rng, w, 4))
        .collect();
    let mut all = vec![base_lex.entries[0].base.clone()];
    all.extend(extra);
    let src = grammar_with_entries(sig, &all);
    let lex = compile_text(&src, RunConfig::default()).map_err(|e| e.to_string())?;
    let sig = &lex.signature;

    for i in 0..queries {
        let q = random_partial_fs(sig, &mut rng, word_type(sig), 3);
        let out = lex.lookup(&q, 16);
        let by_name: BTreeMap<&str, BTreeSet<String>> = out
            .hits
            .iter()
            .map(|h| {
                (
                    h.entry.as_str(),
                    h.solutions
                        .iter()
                        .map(|s| s.entry.canonical_form(sig))
                        .collect(),
                )
            })
            .collect();
        for entry in &lex.entries {
            let expected: BTreeSet<String> = lex
                .derive_all(&entry.name, 16)
                .unwrap()
                .solutions
                .iter()
                .filter(|s| q.unify(&s.entry, sig).is_ok())
                .map(|s| s.entry.canonical_form(sig))
                .collect();
            let got = by_name
                .get(entry.name.as_str())
                .cloned()
                .unwrap_or_default();
            if got != expected {
                return Err(format!(
                    "query {i} on {}: lookup returned {} solutions, filter gives {}",
                    entry.name,
                    got.len(),
                    expected.len()
                ));
            }
        }
    }
    Ok(format!("{queries} random queries filter identically"))
}

pub fn check_species_resolution_laws(seed: u64, cases: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    for i in 0..cases {
        let fs = random_partial_fs(sig, &mut rng, w, 3);
        // Resolve at a random existing path.
        let paths = fs.enumerate_paths(0);
        let (p, _) = &paths[rng.below(paths.len())];
        let rs = fs.species_resolutions(sig, std::slice::from_ref(p));
        if rs.is_empty() {
            return Err(format!("case {i}: no resolution for a well-typed input"));
        }
        for r in &rs {
            if !fs.subsumes(r, sig) {
                return Err(format!("case {i}: resolution escapes the input"));
            }
            let n = r.get_path(p).unwrap();
            if !sig.is_species(r.node_type(n)) {
                return Err(format!("case {i}: resolved node is not species-typed"));
            }
        }
    }
    Ok(format!("{cases} random resolutions behave"))
}

pub fn check_render_round_trip(seed: u64, cases: usize) -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let mut rng = Rng::new(seed);
    let w = word_type(sig);
    for i in 0..cases {
        let fs = if rng.one_in(2) {
            random_partial_fs(sig, &mut rng, w, 3)
        } else {
            random_total_fs(sig, &mut rng, w, 4)
        };
        let text = fs.render(sig);
        let back = grammar::parse_avm_text(sig, &text)
            .map_err(|e| format!("case {i}: `{text}` does not re-parse: {e}"))?;
        if back.canonical_form(sig) != fs.canonical_form(sig) {
            return Err(format!("case {i}: `{text}` re-parses differently"));
        }
    }
    Ok(format!("{cases} rendered structures round-trip"))
}

pub fn check_duplicate_discarding_preserves_solutions() -> Result<String, String> {
    // The identity of derived-entry sets with and without tabling is implied
    // by enumeration matching the free closure; additionally the pruned
    // automaton must keep a single accepting path for the collapsed pair.
    let lex = paper_lexicon();
    let aut = &lex.classes[0].class.automaton;
    if aut.state_by_seq(&[2, 1]).is_some() {
        return Err("the duplicate state for sequence [2,1] was not discarded".into());
    }
    if aut.state_by_seq(&[1, 2]).is_none() {
        return Err("the kept duplicate for sequence [1,2] is missing".into());
    }
    Ok("duplicate arcs discarded toward the lexicographically earlier path".into())
}

fn lifted_identity_for_trivial_class() -> Result<String, String> {
    let lex = paper_lexicon();
    let sig = &lex.signature;
    let blocked = grammar::parse_avm_text(
        sig,
        "word & (A: a, B: +, C: t_2 & (W: -, X: -, Y: -, Z: <>))",
    )
    .unwrap();
    let src = grammar_with_entries(sig, std::slice::from_ref(&blocked));
    let l2 = compile_text(&src, RunConfig::default()).map_err(|e| e.to_string())?;
    let lifted = &l2.entries[0].lifted;
    if lifted.canonical_form(&l2.signature)
        != diag_pair(&l2.entries[0].base).canonical_form(&l2.signature)
    {
        return Err("trivial class does not lift to the identity".into());
    }
    Ok("trivial class lifts to the fully shared identity".into())
}

pub fn check_automaton_invariants_all_stages() -> Result<String, String> {
    let lex = paper_lexicon();
    lex.global_fsa
        .check_invariants()
        .map_err(|e| format!("global: {e}"))?;
    lex.reduced_fsa
        .check_invariants()
        .map_err(|e| format!("reduced: {e}"))?;
    for c in &lex.classes {
        c.class
            .automaton
            .check_invariants()
            .map_err(|e| format!("class {}: {e}", c.class.id()))?;
    }
    // Unfurled variant too.
    let g = grammar::parse_grammar(BUNDLED_GRAMMAR).unwrap();
    let unfurled = compile(
        &g,
        RunConfig {
            unfurl_depth: 1,
            ..RunConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    for c in &unfurled.classes {
        c.class
            .automaton
            .check_invariants()
            .map_err(|e| format!("unfurled class {}: {e}", c.class.id()))?;
    }
    Ok("trie and back-edge invariants hold at every stage".into())
}

/// The whole suite, in a fixed order with fixed seeds.
pub fn run_all_checks() -> Vec<CheckResult> {
    vec![
        CheckResult::from("follow-relation", check_follow_relation()),
        CheckResult::from("transfer-derivation", check_transfer_derivation()),
        CheckResult::from("global-fsa-reduction", check_global_fsa_and_reduction()),
        CheckResult::from("per-entry-pruning", check_pruned_automaton()),
        CheckResult::from("clause-encoding", check_clause_encoding()),
        CheckResult::from("generalization-lifting", check_lifting()),
        CheckResult::from("enumeration-oracle", check_enumeration_oracle()),
        CheckResult::from("language-soundness", check_language_soundness(6)),
        CheckResult::from(
            "unification-algebra",
            check_unification_algebra(0x5eed_0001, 300),
        ),
        CheckResult::from(
            "generalization-lub",
            check_generalization_lub(0x5eed_0002, 300),
        ),
        CheckResult::from("subsumption-laws", check_subsumption_laws(0x5eed_0003, 300)),
        CheckResult::from(
            "species-resolution",
            check_species_resolution_laws(0x5eed_0004, 200),
        ),
        CheckResult::from(
            "render-round-trip",
            check_render_round_trip(0x5eed_0005, 200),
        ),
        CheckResult::from(
            "transfer-totality",
            check_transfer_totality(0x5eed_0006, 200),
        ),
        CheckResult::from(
            "unfolding-soundness",
            check_unfolding_soundness(0x5eed_0007, 12),
        ),
        CheckResult::from("lift-soundness", check_lift_soundness(0x5eed_0008, 12)),
        CheckResult::from(
            "lookup-filter-soundness",
            check_lookup_filter_soundness(0x5eed_0009, 100),
        ),
        CheckResult::from(
            "duplicate-discarding",
            check_duplicate_discarding_preserves_solutions(),
        ),
        CheckResult::from("trivial-class-lift", lifted_identity_for_trivial_class()),
        CheckResult::from(
            "automaton-invariants",
            check_automaton_invariants_all_stages(),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let lex = paper_lexicon();
        let sig = &lex.signature;
        let w = word_type(sig);
        let a = random_total_fs(sig, &mut Rng::new(42), w, 4);
        let b = random_total_fs(sig, &mut Rng::new(42), w, 4);
        assert_eq!(a.canonical_form(sig), b.canonical_form(sig));
    }

    #[test]
    fn random_total_entries_are_species_resolved() {
        let lex = paper_lexicon();
        let sig = &lex.signature;
        let mut rng = Rng::new(7);
        for _ in 0..50 {
            let fs = random_total_fs(sig, &mut rng, word_type(sig), 5);
            for (_, n) in fs.enumerate_paths(0) {
                let ty = fs.node_type(n);
                assert!(sig.is_species(ty), "non-species {}", sig.type_name(ty));
                // Totally well-typed: every appropriate feature present.
                for &(f, _) in sig.approp(ty) {
                    assert!(fs.arc_target(n, f).is_some());
                }
            }
        }
    }

    #[test]
    fn full_suite_is_green() {
        for r in run_all_checks() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
