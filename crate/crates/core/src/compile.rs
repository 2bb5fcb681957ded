//! The compilation pipeline: grammar file in, runnable lexicon out.
//!
//! Stages: lower and compile the rules (transfer derivation), compute the
//! follow relation, build and reduce the global interaction automaton, prune
//! it per entry, group natural classes, encode and unfold the interaction
//! clauses, and lift each extended entry.

use std::fmt::Write as _;

use crate::featstruct::Fs;
use crate::grammar::{self, GrammarFile, LowerError, ParseError};
use crate::interaction::{self, Automaton, FollowRelation, InteractionClause, NaturalClass};
use crate::rules::{self, CompiledRule, RuleError};
use crate::signature::{Signature, SignatureDiagnostic};
use crate::transform;

/// Pipeline knobs. The pipeline is deterministic; there is no seed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Self-loop iterations copied out before pruning.
    pub unfurl_depth: usize,
    /// Cycle traversals tracked during reduction and pruning.
    pub propagation_cap: usize,
    /// Iterations allowed for the lifting fixpoint.
    pub lift_cap: usize,
    /// Default bound on rule applications per derivation at runtime.
    pub depth_bound: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            unfurl_depth: 0,
            propagation_cap: 8,
            lift_cap: 16,
            depth_bound: 32,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("invalid signature:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Signature(Vec<SignatureDiagnostic>),
    #[error("in {context}: {error}")]
    Lower { context: String, error: LowerError },
    #[error("{0}")]
    Rule(#[from] RuleError),
    #[error("duplicate {what} name `{name}`")]
    Duplicate { what: &'static str, name: String },
}

/// A natural class together with its clause programs.
#[derive(Debug, Clone)]
pub struct ClassProgram {
    pub class: NaturalClass,
    /// Accumulator-threading clauses as encoded from the automaton.
    pub clauses: Vec<InteractionClause>,
    /// The same clauses after partial unfolding of the transfer predicates.
    pub unfolded: Vec<InteractionClause>,
}

/// A base entry extended with its class entry point and lifted description.
#[derive(Debug, Clone)]
pub struct ExtendedEntry {
    pub name: String,
    pub base: Fs,
    pub class_ix: usize,
    /// Two-rooted: (refined base, lifted output description).
    pub lifted: Fs,
    /// This entry's annotations on the class automaton.
    pub state_anns: Vec<Vec<Fs>>,
}

/// Everything the runtime needs.
#[derive(Debug)]
pub struct CompiledLexicon {
    pub signature: Signature,
    pub rules: Vec<CompiledRule>,
    pub follow: FollowRelation,
    pub global_fsa: Automaton,
    pub reduced_fsa: Automaton,
    pub classes: Vec<ClassProgram>,
    pub entries: Vec<ExtendedEntry>,
    pub config: RunConfig,
}

/// Compiles a parsed grammar.
pub fn compile(g: &GrammarFile, config: RunConfig) -> Result<CompiledLexicon, CompileError> {
    let mut seen = std::collections::HashSet::new();
    for r in &g.rules {
        if !seen.insert(&r.name) {
            return Err(CompileError::Duplicate {
                what: "rule",
                name: r.name.clone(),
            });
        }
    }
    let mut seen = std::collections::HashSet::new();
    for e in &g.entries {
        if !seen.insert(&e.name) {
            return Err(CompileError::Duplicate {
                what: "entry",
                name: e.name.clone(),
            });
        }
    }
    let signature = Signature::build(&g.types).map_err(CompileError::Signature)?;

    let mut rules: Vec<CompiledRule> = Vec::new();
    for (i, r) in g.rules.iter().enumerate() {
        let head = grammar::lower_avm_pair(&signature, &r.in_avm, &r.out_avm).map_err(|e| {
            CompileError::Lower {
                context: format!("rule `{}`", r.name),
                error: e,
            }
        })?;
        rules.push(rules::derive_transfer_clauses(
            &signature,
            &rules::LexicalRule {
                index: i + 1,
                name: r.name.clone(),
                head,
            },
        )?);
    }

    let mut bases: Vec<(String, Fs)> = Vec::new();
    for e in &g.entries {
        let base = grammar::lower_avm(&signature, &e.avm).map_err(|err| CompileError::Lower {
            context: format!("entry `{}`", e.name),
            error: err,
        })?;
        bases.push((e.name.clone(), base));
    }

    let follow = interaction::compute_follow(&signature, &rules);
    let global_fsa = interaction::build_global_fsa(&follow);
    let reduced_fsa =
        interaction::reduce_by_propagation(&signature, &global_fsa, &rules, config.propagation_cap);

    let pruned: Vec<Automaton> = bases
        .iter()
        .map(|(_, base)| {
            interaction::prune_for_entry(
                &signature,
                &reduced_fsa,
                &rules,
                base,
                config.unfurl_depth,
                config.propagation_cap,
            )
        })
        .collect();
    let entry_anns: Vec<Vec<Vec<Fs>>> = pruned
        .iter()
        .map(|aut| aut.states.iter().map(|s| s.anns.clone()).collect())
        .collect();
    let classes_raw = interaction::group_classes(pruned);

    let mut classes = Vec::with_capacity(classes_raw.len());
    for class in classes_raw {
        let clauses = interaction::encode_interaction(&class.automaton);
        // Transfer filtering sees the union of the member entries' annotations.
        let mut union_anns: Vec<Vec<Fs>> = vec![Vec::new(); class.automaton.states.len()];
        for &m in &class.members {
            for (s, anns) in entry_anns[m].iter().enumerate() {
                for a in anns {
                    if !union_anns[s].contains(a) {
                        union_anns[s].push(a.clone());
                    }
                }
            }
        }
        let unfolded = transform::partial_unfold(&signature, &clauses, &rules, &union_anns);
        classes.push(ClassProgram {
            class,
            clauses,
            unfolded,
        });
    }

    let mut entries = Vec::with_capacity(bases.len());
    for (i, (name, base)) in bases.into_iter().enumerate() {
        let class_ix = classes
            .iter()
            .position(|c| c.class.members.contains(&i))
            .expect("every entry belongs to a class");
        let lifted = transform::lift_generalization(
            &signature,
            &classes[class_ix].unfolded,
            &rules,
            &entry_anns[i],
            &base,
            config.lift_cap,
        );
        entries.push(ExtendedEntry {
            name,
            base,
            class_ix,
            lifted,
            state_anns: entry_anns[i].clone(),
        });
    }

    Ok(CompiledLexicon {
        signature,
        rules,
        follow,
        global_fsa,
        reduced_fsa,
        classes,
        entries,
        config,
    })
}

/// Parses and compiles in one step with the given configuration.
pub fn compile_text(text: &str, config: RunConfig) -> Result<CompiledLexicon, CompileError> {
    let g = grammar::parse_grammar(text)?;
    compile(&g, config)
}

impl CompiledLexicon {
    pub fn entry_by_name(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn class_of(&self, entry_ix: usize) -> &ClassProgram {
        &self.classes[self.entries[entry_ix].class_ix]
    }

    /// Renders the rule predicate and transfer clauses of one rule.
    pub fn render_rule(&self, r: &CompiledRule, unfolded: bool) -> String {
        let sig = &self.signature;
        let mut s = String::new();
        let head = r.rule.head.render_roots(sig);
        if unfolded {
            let _ = writeln!(s, "lex_rule_{}({}, {}).", r.rule.index, head[0], head[1]);
        } else {
            let _ = writeln!(
                s,
                "lex_rule_{}({}, {}) :- transfer_{}(In, Out).",
                r.rule.index, head[0], head[1], r.rule.index
            );
            for tc in &r.transfer {
                let frame = tc.frame.render_roots(sig);
                let _ = writeln!(s, "transfer_{}({}, {}).", r.rule.index, frame[0], frame[1]);
            }
        }
        s
    }

    /// Renders one interaction clause of a class.
    pub fn render_clause(&self, class: &ClassProgram, clause: &InteractionClause) -> String {
        let name = |state: usize| class.class.pred_name(state);
        match clause {
            InteractionClause::Unit { state } => format!("{}(In, In).", name(*state)),
            InteractionClause::Step {
                state,
                rule,
                next,
                frame: None,
            } => format!(
                "{}(In, Out) :- lex_rule_{}(In, Aux), {}(Aux, Out).",
                name(*state),
                rule,
                name(*next)
            ),
            InteractionClause::Step {
                state,
                rule,
                next,
                frame: Some(k),
            } => {
                let fr = self.rules[rule - 1].transfer[*k]
                    .frame
                    .render_roots(&self.signature);
                format!(
                    "{}(In & {}, Out) :- lex_rule_{}(In, Aux), {}(Aux & {}, Out).",
                    name(*state),
                    fr[0],
                    rule,
                    name(*next),
                    fr[1]
                )
            }
        }
    }

    /// All interaction clauses, class by class.
    pub fn render_clauses(&self, unfolded: bool) -> String {
        let mut s = String::new();
        for r in &self.rules {
            s.push_str(&self.render_rule(r, unfolded));
        }
        for c in &self.classes {
            let _ = writeln!(s, "% class {}", c.class.id());
            let list = if unfolded { &c.unfolded } else { &c.clauses };
            for clause in list {
                let _ = writeln!(s, "{}", self.render_clause(c, clause));
            }
        }
        s
    }

    /// Renders an extended entry: the call into its class, with the lifted
    /// output description on the head.
    pub fn render_entry(&self, ix: usize) -> String {
        let e = &self.entries[ix];
        let class_id = self.classes[e.class_ix].class.id();
        let lifted = e.lifted.render_roots(&self.signature);
        format!(
            "entry {} class {}\n  lex_entry(Out & {}) :- {}({}, Out).\n",
            e.name, class_id, lifted[1], class_id, lifted[0],
        )
    }

    /// The self-describing compiled-lexicon artifact.
    pub fn render_artifact(&self) -> String {
        let mut s = String::new();
        s.push_str("LEXCOV COMPILED LEXICON v1\n");
        s.push_str("[SIGNATURE]\n");
        s.push_str(&self.signature.to_string());
        s.push_str("[RULES]\n");
        for r in &self.rules {
            s.push_str(&self.render_rule(r, false));
        }
        s.push_str("[CLASSES]\n");
        for c in &self.classes {
            let members: Vec<&str> = c
                .class
                .members
                .iter()
                .map(|&m| self.entries[m].name.as_str())
                .collect();
            let _ = writeln!(
                s,
                "class {} states {} members {{{}}}",
                c.class.id(),
                c.class.automaton.states.len(),
                members.join(", ")
            );
            for t in &c.class.automaton.transitions {
                let _ = writeln!(
                    s,
                    "  {}({}, {})",
                    t.rule,
                    c.class.pred_name(t.from),
                    c.class.pred_name(t.to)
                );
            }
        }
        s.push_str("[CLAUSES]\n");
        for c in &self.classes {
            for clause in &c.unfolded {
                let _ = writeln!(s, "{}", self.render_clause(c, clause));
            }
        }
        s.push_str("[ENTRIES]\n");
        for ix in 0..self.entries.len() {
            s.push_str(&self.render_entry(ix));
        }
        s
    }

    /// Structured export with stable key order.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::{json, Map, Value};
        let sig = &self.signature;
        let mut root = Map::new();
        root.insert("format".into(), json!("lexcov-lexicon"));
        root.insert("version".into(), json!(1));
        root.insert(
            "follow".into(),
            Value::Array(
                self.follow
                    .0
                    .iter()
                    .enumerate()
                    .map(|(i, f)| json!({"rule": i + 1, "followers": f}))
                    .collect(),
            ),
        );
        let automaton_json = |aut: &Automaton| -> Value {
            json!({
                "states": aut.states.len(),
                "transitions": aut
                    .transitions
                    .iter()
                    .map(|t| json!({"rule": t.rule, "from": t.from + 1, "to": t.to + 1, "back": t.back}))
                    .collect::<Vec<_>>(),
            })
        };
        root.insert("global_fsa".into(), automaton_json(&self.global_fsa));
        root.insert("reduced_fsa".into(), automaton_json(&self.reduced_fsa));
        root.insert(
            "classes".into(),
            Value::Array(
                self.classes
                    .iter()
                    .map(|c| {
                        json!({
                            "id": c.class.id(),
                            "members": c.class.members.iter().map(|&m| self.entries[m].name.clone()).collect::<Vec<_>>(),
                            "automaton": automaton_json(&c.class.automaton),
                            "clauses": c.unfolded.iter().map(|cl| self.render_clause(c, cl)).collect::<Vec<_>>(),
                        })
                    })
                    .collect(),
            ),
        );
        root.insert(
            "entries".into(),
            Value::Array(
                self.entries
                    .iter()
                    .map(|e| {
                        let lifted = e.lifted.render_roots(sig);
                        json!({
                            "name": e.name,
                            "class": self.classes[e.class_ix].class.id(),
                            "base": e.base.render(sig),
                            "lifted_in": lifted[0],
                            "lifted_out": lifted[1],
                            // Structures tabled at each automaton state while
                            // pruning for this entry; empty means the state's
                            // set did not stabilize.
                            "state_annotations": e
                                .state_anns
                                .iter()
                                .map(|anns| {
                                    anns.iter().map(|a| a.render(sig)).collect::<Vec<_>>()
                                })
                                .collect::<Vec<_>>(),
                        })
                    })
                    .collect(),
            ),
        );
        Value::Object(root)
    }
}
