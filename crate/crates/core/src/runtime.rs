//! A small resolution engine for the compiled clauses: depth-first,
//! clause-ordered enumeration of derived entries, and query lookup with
//! delayed evaluation against the lifted entry descriptions.
//!
//! Result order is deterministic: at each state the unit clause answers
//! first (so the base entry precedes its derivations), then the step clauses
//! in ascending rule order. A per-state memo of canonical forms skips
//! re-derived duplicates within one query, mirroring the compile-time
//! tabling for residual cyclic arcs.

use std::collections::HashSet;

use crate::compile::{ClassProgram, CompiledLexicon};
use crate::featstruct::Fs;
use crate::interaction::InteractionClause;
use crate::rules::CompiledRule;
use crate::signature::Signature;

/// One answer: the derived entry, the rule sequence that produced it, and
/// the interaction predicate it came from.
#[derive(Debug, Clone)]
pub struct Solution {
    pub entry: Fs,
    pub derivation: Vec<usize>,
    pub class_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown entry `{0}`")]
    UnknownEntry(String),
}

/// Streaming depth-first solver over one class program.
pub struct Solve<'a> {
    sig: &'a Signature,
    rules: &'a [CompiledRule],
    clauses: &'a [InteractionClause],
    class_id: String,
    stack: Vec<(usize, Fs, Vec<usize>)>,
    memo: HashSet<(usize, String)>,
    depth_bound: usize,
    truncated: bool,
}

impl<'a> Solve<'a> {
    /// True once the stream is exhausted if the depth bound cut anything off.
    pub fn truncated(&self) -> bool {
        self.truncated
    }
}

impl Iterator for Solve<'_> {
    type Item = Solution;

    fn next(&mut self) -> Option<Solution> {
        while let Some((state, value, derivation)) = self.stack.pop() {
            let key = (state, value.canonical_form(self.sig));
            if !self.memo.insert(key) {
                continue;
            }
            // Step clauses for this state, expanded ascending by rule; pushed
            // in reverse so the smallest rule pops first.
            let mut expansions: Vec<(usize, Fs, Vec<usize>)> = Vec::new();
            let mut has_step = false;
            for c in self.clauses {
                if let InteractionClause::Step {
                    state: s,
                    rule,
                    next,
                    frame,
                } = c
                {
                    if *s != state {
                        continue;
                    }
                    has_step = true;
                    if derivation.len() >= self.depth_bound {
                        continue;
                    }
                    let r = &self.rules[rule - 1];
                    let frames: Vec<usize> = match frame {
                        Some(k) => vec![*k],
                        None => (0..r.transfer.len()).collect(),
                    };
                    for k in frames {
                        if let Some(d) = r.apply_clause(self.sig, k, &value) {
                            let mut deriv = derivation.clone();
                            deriv.push(*rule);
                            expansions.push((*next, d, deriv));
                        }
                    }
                }
            }
            if has_step && derivation.len() >= self.depth_bound {
                self.truncated = true;
            }
            for e in expansions.into_iter().rev() {
                self.stack.push(e);
            }
            // Every state is final: the unit clause answers with the
            // accumulated value.
            return Some(Solution {
                entry: value,
                derivation,
                class_id: self.class_id.clone(),
            });
        }
        None
    }
}

/// Starts a depth-first resolution of `q_start(input, Out)` over a clause
/// program, bounding the number of rule applications per derivation.
pub fn solve<'a>(
    sig: &'a Signature,
    rules: &'a [CompiledRule],
    clauses: &'a [InteractionClause],
    class_id: &str,
    start_state: usize,
    input: Fs,
    depth_bound: usize,
) -> Solve<'a> {
    Solve {
        sig,
        rules,
        clauses,
        class_id: class_id.to_string(),
        stack: vec![(start_state, input, Vec::new())],
        memo: HashSet::new(),
        depth_bound,
        truncated: false,
    }
}

/// Derivation enumeration for one entry.
#[derive(Debug, Clone)]
pub struct DeriveOutcome {
    pub solutions: Vec<Solution>,
    pub truncated: bool,
}

/// Lookup result for one entry that passed the lift check.
#[derive(Debug, Clone)]
pub struct LookupHit {
    pub entry: String,
    pub solutions: Vec<Solution>,
}

/// Result of an on-the-fly lookup across the lexicon.
#[derive(Debug, Clone)]
pub struct LookupOutcome {
    pub hits: Vec<LookupHit>,
    /// Entries rejected by the lifted description alone, without resolution.
    pub skipped_by_lift: Vec<String>,
    pub truncated: bool,
}

impl CompiledLexicon {
    fn class_program(&self, entry_ix: usize) -> &ClassProgram {
        &self.classes[self.entries[entry_ix].class_ix]
    }

    /// Enumerates the solutions of the entry's interaction predicate applied
    /// to its base, in clause order, deduplicated per state.
    pub fn solve_entry(&self, entry_ix: usize, depth_bound: usize) -> DeriveOutcome {
        let entry = &self.entries[entry_ix];
        let class = self.class_program(entry_ix);
        let mut stream = solve(
            &self.signature,
            &self.rules,
            &class.unfolded,
            &class.class.id(),
            0,
            entry.base.clone(),
            depth_bound,
        );
        let solutions: Vec<Solution> = stream.by_ref().collect();
        DeriveOutcome {
            solutions,
            truncated: stream.truncated(),
        }
    }

    /// All derivable entries for a named base entry, deduplicated by
    /// canonical form.
    pub fn derive_all(&self, name: &str, depth_bound: usize) -> Result<DeriveOutcome, QueryError> {
        let ix = self
            .entry_by_name(name)
            .ok_or_else(|| QueryError::UnknownEntry(name.to_string()))?;
        let run = self.solve_entry(ix, depth_bound);
        let mut seen: HashSet<String> = HashSet::new();
        let solutions = run
            .solutions
            .into_iter()
            .filter(|s| seen.insert(s.entry.canonical_form(&self.signature)))
            .collect();
        Ok(DeriveOutcome {
            solutions,
            truncated: run.truncated,
        })
    }

    /// On-the-fly lookup: the query is unified with each entry's lifted
    /// output description first; only entries passing that check are solved,
    /// with the refinement propagated into the base, and their solutions are
    /// filtered against the query.
    pub fn lookup(&self, query: &Fs, depth_bound: usize) -> LookupOutcome {
        let sig = &self.signature;
        let mut hits = Vec::new();
        let mut skipped = Vec::new();
        let mut truncated = false;
        for (ix, entry) in self.entries.iter().enumerate() {
            let refined = match entry.lifted.unify_at_root(1, query, sig) {
                Ok(p) => p,
                Err(_) => {
                    skipped.push(entry.name.clone());
                    continue;
                }
            };
            let class = self.class_program(ix);
            let refined_base = refined.extract_root(0);
            let mut stream = solve(
                sig,
                &self.rules,
                &class.unfolded,
                &class.class.id(),
                0,
                refined_base,
                depth_bound,
            );
            let mut seen: HashSet<String> = HashSet::new();
            let solutions: Vec<Solution> = stream
                .by_ref()
                .filter(|s| query.unify(&s.entry, sig).is_ok())
                .filter(|s| seen.insert(s.entry.canonical_form(sig)))
                .collect();
            truncated |= stream.truncated();
            hits.push(LookupHit {
                entry: entry.name.clone(),
                solutions,
            });
        }
        LookupOutcome {
            hits,
            skipped_by_lift: skipped,
            truncated,
        }
    }

    /// Replays a solution's derivation through plain rule application.
    pub fn replay(&self, entry_ix: usize, solution: &Solution) -> bool {
        let sig = &self.signature;
        let mut currents = vec![self.entries[entry_ix].base.clone()];
        for &r in &solution.derivation {
            let rule = &self.rules[r - 1];
            let mut next = Vec::new();
            for c in &currents {
                next.extend(rule.apply(sig, c));
            }
            if next.is_empty() {
                return false;
            }
            currents = next;
        }
        currents.iter().any(|c| c == &solution.entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{compile_text, RunConfig};
    use crate::grammar::{self, BUNDLED_GRAMMAR};

    fn lex() -> CompiledLexicon {
        compile_text(BUNDLED_GRAMMAR, RunConfig::default()).unwrap()
    }

    fn lex12() -> CompiledLexicon {
        let mut g = grammar::parse_grammar(BUNDLED_GRAMMAR).unwrap();
        g.rules.truncate(2);
        crate::compile::compile(&g, RunConfig::default()).unwrap()
    }

    #[test]
    fn seven_solutions_for_the_bundled_entry() {
        let lex = lex();
        let run = lex.solve_entry(0, 10);
        let derivations: Vec<Vec<usize>> =
            run.solutions.iter().map(|s| s.derivation.clone()).collect();
        assert_eq!(
            derivations,
            vec![
                vec![],
                vec![1],
                vec![1, 2],
                vec![1, 2, 3],
                vec![1, 2, 3, 3],
                vec![1, 2, 3, 3, 4],
                vec![2],
            ]
        );
        assert!(!run.truncated);
    }

    #[test]
    fn bound_one_gives_the_three_short_derivations() {
        let lex = lex();
        let run = lex.solve_entry(0, 1);
        let mut derivations: Vec<Vec<usize>> =
            run.solutions.iter().map(|s| s.derivation.clone()).collect();
        derivations.sort();
        assert_eq!(derivations, vec![vec![], vec![1], vec![2]]);
        assert!(run.truncated);
    }

    #[test]
    fn derive_all_counts_and_stability() {
        let lex = lex();
        let baseline: Vec<String> = lex
            .derive_all("e1", 32)
            .unwrap()
            .solutions
            .iter()
            .map(|s| s.entry.canonical_form(&lex.signature))
            .collect();
        assert_eq!(baseline.len(), 7);
        for bound in [5, 10, 50, 100] {
            let again: Vec<String> = lex
                .derive_all("e1", bound)
                .unwrap()
                .solutions
                .iter()
                .map(|s| s.entry.canonical_form(&lex.signature))
                .collect();
            assert_eq!(again, baseline, "bound {bound}");
        }
        assert_eq!(lex.derive_all("e1", 0).unwrap().solutions.len(), 1);
        assert!(matches!(
            lex.derive_all("nope", 8),
            Err(QueryError::UnknownEntry(_))
        ));
    }

    #[test]
    fn replay_reproduces_every_solution() {
        let lex = lex();
        for s in lex.solve_entry(0, 16).solutions {
            assert!(lex.replay(0, &s), "derivation {:?}", s.derivation);
        }
    }

    #[test]
    fn lookup_filters_by_the_lifted_description() {
        let lex = lex12();
        let sig = &lex.signature;
        // Z never changes under rules 1 and 2, so everything qualifies.
        let q = grammar::parse_avm_text(sig, "(A: b, C: (Z: <a, b>))").unwrap();
        let out = lex.lookup(&q, 16);
        assert!(out.skipped_by_lift.is_empty());
        assert_eq!(out.hits.len(), 1);
        assert_eq!(out.hits[0].solutions.len(), 4);

        // B is lifted as shared with the base's B:-, so B:+ fails without
        // running the interaction predicate at all.
        let q = grammar::parse_avm_text(sig, "(B: +)").unwrap();
        let out = lex.lookup(&q, 16);
        assert_eq!(out.skipped_by_lift, vec!["e1".to_string()]);
        assert!(out.hits.is_empty());

        // An unconstrained query behaves like derive_all.
        let q = grammar::parse_avm_text(sig, "word").unwrap();
        let out = lex.lookup(&q, 16);
        assert_eq!(out.hits[0].solutions.len(), 4);
    }

    #[test]
    fn lookup_equals_filtered_enumeration() {
        let lex = lex();
        let sig = &lex.signature;
        let queries = [
            "(B: +)",
            "(B: -)",
            "(C: (W: +))",
            "(C: t_2 & (Z: <>))",
            "(C: (X: +, Y: +))",
            "word",
        ];
        for q_text in queries {
            let q = grammar::parse_avm_text(sig, q_text).unwrap();
            let via_lookup: std::collections::BTreeSet<String> = lex
                .lookup(&q, 32)
                .hits
                .iter()
                .flat_map(|h| h.solutions.iter())
                .map(|s| s.entry.canonical_form(sig))
                .collect();
            let via_filter: std::collections::BTreeSet<String> = lex
                .derive_all("e1", 32)
                .unwrap()
                .solutions
                .iter()
                .filter(|s| q.unify(&s.entry, sig).is_ok())
                .map(|s| s.entry.canonical_form(sig))
                .collect();
            assert_eq!(via_lookup, via_filter, "query {q_text}");
        }
    }

    #[test]
    fn unfolded_and_plain_programs_agree() {
        let lex = lex();
        let entry = &lex.entries[0];
        let class = &lex.classes[entry.class_ix];
        let collect = |clauses: &[InteractionClause]| -> std::collections::BTreeSet<String> {
            solve(
                &lex.signature,
                &lex.rules,
                clauses,
                &class.class.id(),
                0,
                entry.base.clone(),
                32,
            )
            .map(|s| s.entry.canonical_form(&lex.signature))
            .collect()
        };
        assert_eq!(collect(&class.clauses), collect(&class.unfolded));
    }
}
