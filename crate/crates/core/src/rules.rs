//! Lexical rules as binary predicates with automatic property transfer.
//!
//! A rule relates an in-specification to an out-specification. The rule as
//! written only states what changes; everything else must keep its value from
//! input to output. Because specifications are usually less specific than the
//! entries they apply to, transferring "everything else" needs the closed
//! world: each node lying on the way to a changed path (a frame node) is
//! resolved to its species, and for every appropriate feature of that species
//! that is neither changed nor itself a frame node, a single shared value is
//! hung under the in and out frames. One transfer clause results per
//! consistent species assignment to the frame nodes.

use std::collections::HashSet;

use crate::featstruct::{Fs, FsBuilder, NodeIx, Path};
use crate::signature::{Signature, TypeId};

/// A rule as written: index, name, and the two-rooted in/out specification
/// (explicit cross-argument sharing comes from tags spanning `==>`).
#[derive(Debug, Clone)]
pub struct LexicalRule {
    /// 1-based, dense.
    pub index: usize,
    pub name: String,
    pub head: Fs,
}

impl LexicalRule {
    pub fn in_spec(&self) -> Fs {
        self.head.extract_root(0)
    }

    pub fn out_spec(&self) -> Fs {
        self.head.extract_root(1)
    }
}

/// One species frame of a rule: the in/out pair carrying the frame species
/// and one shared node per transferred path.
#[derive(Debug, Clone)]
pub struct TransferClause {
    pub rule_index: usize,
    /// Two-rooted; `frame.get_path_at(0, p) == frame.get_path_at(1, p)` for
    /// every transferred path `p`.
    pub frame: Fs,
    /// Transferred paths, sorted.
    pub shares: Vec<Path>,
    /// Species chosen at each frame path, sorted by path.
    pub frame_species: Vec<(Path, TypeId)>,
}

/// A rule compiled for application.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub rule: LexicalRule,
    /// Maximal paths where the out-specification asserts a type restriction
    /// or a reentrancy; sorted.
    pub changed: Vec<Path>,
    /// The empty path plus every proper prefix of a changed path; sorted.
    pub frame_paths: Vec<Path>,
    pub transfer: Vec<TransferClause>,
    /// Rule head unified with each transfer frame, ready for application.
    composed: Vec<Fs>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RuleError {
    #[error("rule `{rule}` is never applicable: {reason}")]
    NeverApplicable { rule: String, reason: String },
}

/// Nodes reachable from root `k`.
fn reachable(fs: &Fs, k: usize) -> HashSet<NodeIx> {
    let mut seen = HashSet::new();
    let mut stack = vec![fs.root_at(k)];
    while let Some(n) = stack.pop() {
        if seen.insert(n) {
            for (_, t) in fs.arcs(n) {
                stack.push(t);
            }
        }
    }
    seen
}

/// The maximal paths at which the out side of `head` asserts a type
/// restriction (strictly narrower than the appropriateness restriction) or a
/// reentrancy. The walk does not descend below reentrant nodes: their content
/// belongs to the shared value, not to the rule's assertion.
pub fn changed_paths(sig: &Signature, head: &Fs) -> Vec<Path> {
    let in_nodes = reachable(head, 0);
    let out_nodes = reachable(head, 1);
    let mut refs: std::collections::HashMap<NodeIx, usize> = Default::default();
    *refs.entry(head.root_at(1)).or_insert(0) += 1;
    for &n in &out_nodes {
        for (_, t) in head.arcs(n) {
            *refs.entry(t).or_insert(0) += 1;
        }
    }
    let reentrant = |n: NodeIx| refs.get(&n).copied().unwrap_or(0) >= 2 || in_nodes.contains(&n);

    fn walk(
        sig: &Signature,
        head: &Fs,
        n: NodeIx,
        path: &mut Path,
        reentrant: &dyn Fn(NodeIx) -> bool,
        candidates: &mut Vec<Path>,
    ) {
        for (f, t) in head.arcs(n) {
            path.push(f);
            let restr = sig
                .restriction(head.node_type(n), f)
                .expect("well-typed arc");
            let asserted = head.node_type(t) != restr;
            let shared = reentrant(t);
            if asserted || shared {
                candidates.push(path.clone());
            }
            if !shared {
                walk(sig, head, t, path, reentrant, candidates);
            }
            path.pop();
        }
    }
    let mut candidates: Vec<Path> = Vec::new();
    let mut path = Vec::new();
    walk(
        sig,
        head,
        head.root_at(1),
        &mut path,
        &reentrant,
        &mut candidates,
    );
    candidates.sort();
    candidates.dedup();
    // Keep only maximal paths (drop proper prefixes of other candidates).
    candidates
        .iter()
        .filter(|p| {
            !candidates
                .iter()
                .any(|q| q.len() > p.len() && q.starts_with(p))
        })
        .cloned()
        .collect()
}

fn frame_paths_of(changed: &[Path]) -> Vec<Path> {
    let mut frames: Vec<Path> = vec![Vec::new()];
    for c in changed {
        for k in 1..c.len() {
            frames.push(c[..k].to_vec());
        }
    }
    frames.sort();
    frames.dedup();
    frames
}

/// Derives the transfer clauses for a rule: one per consistent species
/// assignment to the frame nodes.
pub fn derive_transfer_clauses(
    sig: &Signature,
    rule: &LexicalRule,
) -> Result<CompiledRule, RuleError> {
    let changed = changed_paths(sig, &rule.head);
    let frames = frame_paths_of(&changed);

    // Skeleton carrying the in/out type information at the frame paths.
    let ty_at = |k: usize, p: &[crate::signature::FeatId]| -> Option<TypeId> {
        rule.head.get_path_at(k, p).map(|n| rule.head.node_type(n))
    };
    let mut skeleton = Fs::most_general(sig, sig.root());
    for p in &frames {
        let mut ty = sig.root();
        for side in 0..2 {
            if let Some(t) = ty_at(side, p) {
                ty = sig.meet(ty, t).ok_or_else(|| RuleError::NeverApplicable {
                    rule: rule.name.clone(),
                    reason: format!(
                        "in and out disagree at {}",
                        crate::featstruct::path_to_string(sig, p)
                    ),
                })?;
            }
        }
        skeleton = skeleton
            .put_path(sig, p, ty)
            .map_err(|e| RuleError::NeverApplicable {
                rule: rule.name.clone(),
                reason: e.to_string(),
            })?;
    }

    // Explicit in/out sharing written in the rule exempts the in-side
    // endpoints from transfer-sharing generation.
    let out_nodes = reachable(&rule.head, 1);
    let mut explicit_in_paths: HashSet<Path> = HashSet::new();
    for (p, n) in rule.head.enumerate_paths(0) {
        if out_nodes.contains(&n) {
            explicit_in_paths.insert(p);
        }
    }

    let changed_set: HashSet<&Path> = changed.iter().collect();
    let frame_set: HashSet<&Path> = frames.iter().collect();

    let mut transfer = Vec::new();
    let mut composed = Vec::new();
    let mut failures = Vec::new();
    for resolution in skeleton.species_resolutions(sig, &frames) {
        let species: Vec<(Path, TypeId)> = frames
            .iter()
            .map(|p| {
                let n = resolution.get_path(p).expect("frame path exists");
                (p.clone(), resolution.node_type(n))
            })
            .collect();

        let mut b = FsBuilder::new(sig);
        let mut shares: Vec<Path> = Vec::new();
        let mut in_by_path = std::collections::HashMap::new();
        let mut out_by_path = std::collections::HashMap::new();
        for (p, sp) in &species {
            let in_n = b.node(*sp);
            let out_n = b.node(*sp);
            if let Some(last) = p.len().checked_sub(1) {
                let parent = p[..last].to_vec();
                let f = p[last];
                let &pin = in_by_path.get(&parent).expect("prefix built first");
                let &pout = out_by_path.get(&parent).expect("prefix built first");
                b.arc(pin, f, in_n);
                b.arc(pout, f, out_n);
            }
            in_by_path.insert(p.clone(), in_n);
            out_by_path.insert(p.clone(), out_n);
        }
        for (p, sp) in &species {
            for &(f, restr) in sig.approp(*sp) {
                let mut q = p.clone();
                q.push(f);
                if changed_set.contains(&q)
                    || frame_set.contains(&q)
                    || explicit_in_paths.contains(&q)
                {
                    continue;
                }
                let shared = b.node(restr);
                b.arc(in_by_path[p], f, shared);
                b.arc(out_by_path[p], f, shared);
                shares.push(q);
            }
        }
        b.push_root(in_by_path[&Vec::new()]);
        b.push_root(out_by_path[&Vec::new()]);
        let frame = match b.finish() {
            Ok(f) => f,
            Err(e) => {
                failures.push(e.to_string());
                continue;
            }
        };
        match rule.head.unify(&frame, sig) {
            Ok(c) => {
                shares.sort();
                transfer.push(TransferClause {
                    rule_index: rule.index,
                    frame,
                    shares,
                    frame_species: species,
                });
                composed.push(c);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if transfer.is_empty() {
        return Err(RuleError::NeverApplicable {
            rule: rule.name.clone(),
            reason: if failures.is_empty() {
                "no consistent species frame".into()
            } else {
                failures.join("; ")
            },
        });
    }
    Ok(CompiledRule {
        rule: rule.clone(),
        changed,
        frame_paths: frames,
        transfer,
        composed,
    })
}

impl CompiledRule {
    /// The rule head composed with transfer clause `k`.
    pub fn composed(&self, k: usize) -> &Fs {
        &self.composed[k]
    }

    /// Applies one transfer variant to an entry.
    pub fn apply_clause(&self, sig: &Signature, k: usize, le: &Fs) -> Option<Fs> {
        self.composed[k]
            .unify_at_root(0, le, sig)
            .ok()
            .map(|pair| pair.extract_root(1))
    }

    /// Applies the rule to an entry: one derived entry per succeeding
    /// transfer clause, deduplicated.
    pub fn apply(&self, sig: &Signature, le: &Fs) -> Vec<Fs> {
        let mut out: Vec<Fs> = Vec::new();
        for k in 0..self.composed.len() {
            if let Some(d) = self.apply_clause(sig, k, le) {
                if !out.contains(&d) {
                    out.push(d);
                }
            }
        }
        out
    }

    /// The rule's most general outputs: the rule applied to its own
    /// in-specification.
    pub fn generic_outputs(&self, sig: &Signature) -> Vec<Fs> {
        self.apply(sig, &self.rule.in_spec())
    }
}
