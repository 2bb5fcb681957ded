//! Closed-world type hierarchy with appropriateness conditions.
//!
//! A signature is a finite set of types under an immediate-subtype relation
//! with a unique root, where every consistent pair of types has a unique
//! greatest lower bound, plus per-type feature declarations (appropriateness).
//! Features are introduced at exactly one type and inherited downward;
//! subtypes may only narrow a feature's value restriction.
//!
//! Validation happens once at load time; afterwards the signature is
//! immutable and all queries (meet, join, species, appropriate features)
//! are table lookups safe to share across threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};

/// Index of a type in a [`Signature`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub u16);

/// Index of a feature name in a [`Signature`].
///
/// Feature ids are assigned in lexicographic name order, so sorting arcs by
/// `FeatId` sorts them by feature name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatId(pub u16);

/// One `type` declaration: a name, optional immediate subtypes, optional
/// introduced/narrowed features.
#[derive(Debug, Clone, Default)]
pub struct TypeDecl {
    pub name: String,
    pub subtypes: Vec<String>,
    pub features: Vec<(String, String)>,
}

/// A problem found while validating a declaration set.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureDiagnostic {
    #[error("type `{0}` is declared more than once")]
    DuplicateType(String),
    #[error("type `{child}` is listed as a subtype of `{parent}` more than once")]
    DuplicateEdge { parent: String, child: String },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("subtype cycle through `{0}`")]
    Cycle(String),
    #[error("no unique root: `{0}` and `{1}` both lack a supertype")]
    MultipleRoots(String, String),
    #[error("no root type (every type has a supertype)")]
    NoRoot,
    #[error("non-unique meet: `{s}` and `{t}` have maximal common subtypes {candidates:?}")]
    NonUniqueMeet {
        s: String,
        t: String,
        candidates: Vec<String>,
    },
    #[error("feature `{feat}` has no unique introducer: declared at `{at}` and `{and}`")]
    FeatureReintroduced {
        feat: String,
        at: String,
        and: String,
    },
    #[error("feature `{feat}` declared twice at `{at}`")]
    FeatureDuplicated { feat: String, at: String },
    #[error("restriction of `{feat}` at `{at}` widens `{inherited}` to `{declared}`")]
    RestrictionWidened {
        feat: String,
        at: String,
        inherited: String,
        declared: String,
    },
    #[error("restrictions of `{feat}` inherited at `{at}` are inconsistent")]
    RestrictionClash { feat: String, at: String },
}

static NEXT_SIG_ID: AtomicU32 = AtomicU32::new(1);

/// Validated type hierarchy with appropriateness tables.
#[derive(Debug)]
pub struct Signature {
    /// Distinguishes signatures in debug assertions on feature structures.
    id: u32,
    type_names: Vec<String>,
    types_by_name: HashMap<String, TypeId>,
    feat_names: Vec<String>,
    feats_by_name: HashMap<String, FeatId>,
    root: TypeId,
    children: Vec<Vec<TypeId>>,
    parents: Vec<Vec<TypeId>>,
    /// Row-major n*n tables.
    meet: Vec<Option<TypeId>>,
    join: Vec<TypeId>,
    /// Per type: species (leaves) at or below it, ascending.
    species: Vec<Vec<TypeId>>,
    /// Per type: all appropriate features with their tightest restriction,
    /// sorted by feature id.
    approp: Vec<Vec<(FeatId, TypeId)>>,
    /// Per feature: the unique type introducing it.
    introducer: Vec<TypeId>,
}

impl Signature {
    /// Validates a declaration set and builds the query tables.
    ///
    /// Returns every diagnostic found rather than stopping at the first.
    #[allow(clippy::needless_range_loop)] // index loops over the n*n tables
    pub fn build(decls: &[TypeDecl]) -> Result<Signature, Vec<SignatureDiagnostic>> {
        use SignatureDiagnostic as D;
        let mut diags = Vec::new();

        // Collect type names: declared heads first, then any name that only
        // occurs as a subtype or restriction.
        let mut type_names: Vec<String> = Vec::new();
        let mut types_by_name: HashMap<String, TypeId> = HashMap::new();
        let intern_type = |name: &str,
                           type_names: &mut Vec<String>,
                           types_by_name: &mut HashMap<String, TypeId>|
         -> TypeId {
            if let Some(&id) = types_by_name.get(name) {
                return id;
            }
            let id = TypeId(type_names.len() as u16);
            type_names.push(name.to_string());
            types_by_name.insert(name.to_string(), id);
            id
        };
        let mut seen_heads: BTreeSet<&str> = BTreeSet::new();
        for d in decls {
            if !seen_heads.insert(&d.name) {
                diags.push(D::DuplicateType(d.name.clone()));
            }
            intern_type(&d.name, &mut type_names, &mut types_by_name);
        }
        for d in decls {
            for c in &d.subtypes {
                intern_type(c, &mut type_names, &mut types_by_name);
            }
            for (_, r) in &d.features {
                intern_type(r, &mut type_names, &mut types_by_name);
            }
        }
        let n = type_names.len();

        // Features interned in lexicographic order so FeatId order is name order.
        let mut feat_set: BTreeSet<&str> = BTreeSet::new();
        for d in decls {
            for (f, _) in &d.features {
                feat_set.insert(f);
            }
        }
        let feat_names: Vec<String> = feat_set.iter().map(|s| s.to_string()).collect();
        let feats_by_name: HashMap<String, FeatId> = feat_names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), FeatId(i as u16)))
            .collect();

        // Edges.
        let mut children: Vec<Vec<TypeId>> = vec![Vec::new(); n];
        let mut parents: Vec<Vec<TypeId>> = vec![Vec::new(); n];
        for d in decls {
            let p = types_by_name[&d.name];
            let mut seen = BTreeSet::new();
            for c in &d.subtypes {
                let c_id = types_by_name[c.as_str()];
                if !seen.insert(c_id) {
                    diags.push(D::DuplicateEdge {
                        parent: d.name.clone(),
                        child: c.clone(),
                    });
                    continue;
                }
                children[p.0 as usize].push(c_id);
                parents[c_id.0 as usize].push(p);
            }
        }
        for ch in &mut children {
            ch.sort_by(|a, b| type_names[a.0 as usize].cmp(&type_names[b.0 as usize]));
        }

        // Unique root.
        let mut roots: Vec<TypeId> = (0..n)
            .map(|i| TypeId(i as u16))
            .filter(|t| parents[t.0 as usize].is_empty())
            .collect();
        if roots.is_empty() {
            diags.push(D::NoRoot);
        }
        roots.sort_by_key(|t| &type_names[t.0 as usize]);
        if roots.len() > 1 {
            diags.push(D::MultipleRoots(
                type_names[roots[0].0 as usize].clone(),
                type_names[roots[1].0 as usize].clone(),
            ));
        }
        let root = roots.first().copied().unwrap_or(TypeId(0));

        // Cycle check (DFS, three colors).
        {
            let mut color = vec![0u8; n];
            fn dfs(
                t: usize,
                children: &[Vec<TypeId>],
                color: &mut [u8],
                names: &[String],
                diags: &mut Vec<D>,
            ) {
                color[t] = 1;
                for c in &children[t] {
                    match color[c.0 as usize] {
                        0 => dfs(c.0 as usize, children, color, names, diags),
                        1 => diags.push(D::Cycle(names[c.0 as usize].clone())),
                        _ => {}
                    }
                }
                color[t] = 2;
            }
            for t in 0..n {
                if color[t] == 0 {
                    dfs(t, &children, &mut color, &type_names, &mut diags);
                }
            }
        }
        if !diags.is_empty() {
            // Meets and appropriateness are meaningless on a broken order.
            diags.sort_by_key(|d| d.to_string());
            diags.dedup();
            return Err(diags);
        }

        // Descendant sets (reflexive) as bitsets.
        let words = n.div_ceil(64);
        let mut below = vec![vec![0u64; words]; n];
        // Process in reverse topological order.
        let topo = {
            let mut order = Vec::with_capacity(n);
            let mut mark = vec![false; n];
            fn post(t: usize, children: &[Vec<TypeId>], mark: &mut [bool], out: &mut Vec<usize>) {
                if mark[t] {
                    return;
                }
                mark[t] = true;
                for c in &children[t] {
                    post(c.0 as usize, children, mark, out);
                }
                out.push(t);
            }
            for t in 0..n {
                post(t, &children, &mut mark, &mut order);
            }
            order
        };
        for &t in &topo {
            below[t][t / 64] |= 1 << (t % 64);
            let kids: Vec<usize> = children[t].iter().map(|c| c.0 as usize).collect();
            for c in kids {
                let (child, rest) = if c < t {
                    let (a, b) = below.split_at_mut(t);
                    (&a[c], &mut b[0])
                } else {
                    let (a, b) = below.split_at_mut(c);
                    (&b[0], &mut a[t])
                };
                for w in 0..words {
                    rest[w] |= child[w];
                }
            }
        }
        let is_below =
            |s: usize, t: usize, below: &Vec<Vec<u64>>| below[t][s / 64] & (1 << (s % 64)) != 0;

        // Meets: the greatest element of the common lower bounds if unique.
        let mut meet: Vec<Option<TypeId>> = vec![None; n * n];
        for s in 0..n {
            for t in s..n {
                let mut common: Vec<usize> = Vec::new();
                for w in 0..words {
                    let mut bits = below[s][w] & below[t][w];
                    while bits != 0 {
                        let b = bits.trailing_zeros() as usize;
                        common.push(w * 64 + b);
                        bits &= bits - 1;
                    }
                }
                if common.is_empty() {
                    continue;
                }
                // Maximal elements of the common set.
                let maximal: Vec<usize> = common
                    .iter()
                    .copied()
                    .filter(|&c| !common.iter().any(|&d| d != c && is_below(c, d, &below)))
                    .collect();
                if maximal.len() == 1 {
                    meet[s * n + t] = Some(TypeId(maximal[0] as u16));
                    meet[t * n + s] = Some(TypeId(maximal[0] as u16));
                } else {
                    let mut cands: Vec<String> =
                        maximal.iter().map(|&c| type_names[c].clone()).collect();
                    cands.sort();
                    diags.push(D::NonUniqueMeet {
                        s: type_names[s].clone(),
                        t: type_names[t].clone(),
                        candidates: cands,
                    });
                }
            }
        }

        // Appropriateness: walk root-down, inheriting and narrowing.
        // approp_maps[t]: feature -> (restriction, introducer).
        let mut approp_maps: Vec<BTreeMap<FeatId, (TypeId, TypeId)>> = vec![BTreeMap::new(); n];
        if diags.is_empty() {
            for &t in topo.iter().rev() {
                // Inherit from all parents.
                let mut inherited: BTreeMap<FeatId, (TypeId, TypeId)> = BTreeMap::new();
                for p in &parents[t] {
                    for (&f, &(r, intro)) in &approp_maps[p.0 as usize] {
                        match inherited.get(&f) {
                            None => {
                                inherited.insert(f, (r, intro));
                            }
                            Some(&(r0, intro0)) => {
                                if intro0 != intro {
                                    diags.push(D::FeatureReintroduced {
                                        feat: feat_names[f.0 as usize].clone(),
                                        at: type_names[intro0.0 as usize].clone(),
                                        and: type_names[intro.0 as usize].clone(),
                                    });
                                    continue;
                                }
                                // Same introducer through two paths: take the meet
                                // of the narrowed restrictions.
                                match meet[r0.0 as usize * n + r.0 as usize] {
                                    Some(m) => {
                                        inherited.insert(f, (m, intro0));
                                    }
                                    None => diags.push(D::RestrictionClash {
                                        feat: feat_names[f.0 as usize].clone(),
                                        at: type_names[t].clone(),
                                    }),
                                }
                            }
                        }
                    }
                }
                // Declared at t: introduce or narrow.
                let decl = decls
                    .iter()
                    .find(|d| types_by_name[&d.name].0 as usize == t);
                if let Some(d) = decl {
                    let mut seen = BTreeSet::new();
                    for (fname, rname) in &d.features {
                        let f = feats_by_name[fname.as_str()];
                        let r = types_by_name[rname.as_str()];
                        if !seen.insert(f) {
                            diags.push(D::FeatureDuplicated {
                                feat: fname.clone(),
                                at: d.name.clone(),
                            });
                            continue;
                        }
                        match inherited.get(&f) {
                            None => {
                                inherited.insert(f, (r, TypeId(t as u16)));
                            }
                            Some(&(r0, intro)) => {
                                // Narrowing: the declared restriction must be
                                // at or below the inherited one.
                                if is_below(r.0 as usize, r0.0 as usize, &below) {
                                    inherited.insert(f, (r, intro));
                                } else {
                                    diags.push(D::RestrictionWidened {
                                        feat: fname.clone(),
                                        at: d.name.clone(),
                                        inherited: type_names[r0.0 as usize].clone(),
                                        declared: type_names[r.0 as usize].clone(),
                                    });
                                }
                            }
                        }
                    }
                }
                approp_maps[t] = inherited;
            }
        }

        // Unique introduction across incomparable types: two declarations of
        // the same feature with distinct introducers never meet in a common
        // subtype above, so scan declarations directly.
        {
            let mut intro_at: BTreeMap<FeatId, TypeId> = BTreeMap::new();
            for d in decls {
                let t = types_by_name[&d.name];
                for (fname, _) in &d.features {
                    let f = feats_by_name[fname.as_str()];
                    let prev = intro_at.get(&f).copied();
                    match prev {
                        None => {
                            intro_at.insert(f, t);
                        }
                        Some(p) => {
                            let comparable = is_below(t.0 as usize, p.0 as usize, &below)
                                || is_below(p.0 as usize, t.0 as usize, &below);
                            if !comparable {
                                diags.push(D::FeatureReintroduced {
                                    feat: fname.clone(),
                                    at: type_names[p.0 as usize].clone(),
                                    and: d.name.clone(),
                                });
                            } else if is_below(p.0 as usize, t.0 as usize, &below) {
                                intro_at.insert(f, t);
                            }
                        }
                    }
                }
            }
        }

        if !diags.is_empty() {
            diags.sort_by_key(|d| d.to_string());
            diags.dedup();
            return Err(diags);
        }

        // Joins: least element of the common upper bounds. Given unique meets
        // and a top element this is unique.
        let mut above = vec![vec![0u64; words]; n];
        for t in 0..n {
            for s in 0..n {
                if is_below(s, t, &below) {
                    above[s][t / 64] |= 1 << (t % 64);
                }
            }
        }
        let mut join: Vec<TypeId> = vec![root; n * n];
        for s in 0..n {
            for t in s..n {
                let mut common: Vec<usize> = Vec::new();
                for w in 0..words {
                    let mut bits = above[s][w] & above[t][w];
                    while bits != 0 {
                        let b = bits.trailing_zeros() as usize;
                        common.push(w * 64 + b);
                        bits &= bits - 1;
                    }
                }
                let minimal: Vec<usize> = common
                    .iter()
                    .copied()
                    .filter(|&c| !common.iter().any(|&d| d != c && is_below(d, c, &below)))
                    .collect();
                debug_assert_eq!(minimal.len(), 1, "join not unique despite unique meets");
                join[s * n + t] = TypeId(minimal[0] as u16);
                join[t * n + s] = TypeId(minimal[0] as u16);
            }
        }

        // Species: leaves at or below each type.
        let mut species: Vec<Vec<TypeId>> = vec![Vec::new(); n];
        for t in 0..n {
            let mut sp = Vec::new();
            for s in 0..n {
                if children[s].is_empty() && is_below(s, t, &below) {
                    sp.push(TypeId(s as u16));
                }
            }
            sp.sort_by(|a, b| type_names[a.0 as usize].cmp(&type_names[b.0 as usize]));
            species[t] = sp;
        }

        let approp: Vec<Vec<(FeatId, TypeId)>> = approp_maps
            .into_iter()
            .map(|m| m.into_iter().map(|(f, (r, _))| (f, r)).collect())
            .collect();

        let mut introducer: Vec<TypeId> = vec![root; feat_names.len()];
        for f in 0..feat_names.len() {
            // The introducer is the unique type carrying f whose parents do not.
            let mut best: Option<TypeId> = None;
            for t in 0..n {
                if approp[t].iter().any(|&(ff, _)| ff == FeatId(f as u16)) {
                    let inherited = parents[t].iter().any(|p| {
                        approp[p.0 as usize]
                            .iter()
                            .any(|&(ff, _)| ff == FeatId(f as u16))
                    });
                    if !inherited {
                        best = Some(TypeId(t as u16));
                        break;
                    }
                }
            }
            introducer[f] = best.expect("validated feature has an introducer");
        }

        Ok(Signature {
            id: NEXT_SIG_ID.fetch_add(1, Ordering::Relaxed),
            type_names,
            types_by_name,
            feat_names,
            feats_by_name,
            root,
            children,
            parents,
            meet,
            join,
            species,
            approp,
            introducer,
        })
    }

    pub(crate) fn instance_id(&self) -> u32 {
        self.id
    }

    pub fn root(&self) -> TypeId {
        self.root
    }

    pub fn type_count(&self) -> usize {
        self.type_names.len()
    }

    pub fn type_name(&self, t: TypeId) -> &str {
        &self.type_names[t.0 as usize]
    }

    pub fn type_by_name(&self, name: &str) -> Option<TypeId> {
        self.types_by_name.get(name).copied()
    }

    pub fn feat_name(&self, f: FeatId) -> &str {
        &self.feat_names[f.0 as usize]
    }

    pub fn feat_by_name(&self, name: &str) -> Option<FeatId> {
        self.feats_by_name.get(name).copied()
    }

    /// Greatest lower bound, or `None` when the types are inconsistent.
    pub fn meet(&self, s: TypeId, t: TypeId) -> Option<TypeId> {
        self.meet[s.0 as usize * self.type_names.len() + t.0 as usize]
    }

    /// Least upper bound; always defined via the root.
    pub fn join(&self, s: TypeId, t: TypeId) -> TypeId {
        self.join[s.0 as usize * self.type_names.len() + t.0 as usize]
    }

    /// `s` at or below `t` in the hierarchy.
    pub fn subtype(&self, s: TypeId, t: TypeId) -> bool {
        self.meet(s, t) == Some(s)
    }

    /// Minimal subtypes (species) at or below `t`; never empty.
    pub fn species(&self, t: TypeId) -> &[TypeId] {
        &self.species[t.0 as usize]
    }

    /// `t` has no proper subtypes.
    pub fn is_species(&self, t: TypeId) -> bool {
        self.children[t.0 as usize].is_empty()
    }

    /// All appropriate features of `t` with their tightest restrictions,
    /// sorted by feature id (= feature name).
    pub fn approp(&self, t: TypeId) -> &[(FeatId, TypeId)] {
        &self.approp[t.0 as usize]
    }

    /// Restriction of feature `f` at type `t`, if `f` is appropriate there.
    pub fn restriction(&self, t: TypeId, f: FeatId) -> Option<TypeId> {
        self.approp[t.0 as usize]
            .binary_search_by_key(&f, |&(ff, _)| ff)
            .ok()
            .map(|i| self.approp[t.0 as usize][i].1)
    }

    /// The unique type introducing feature `f`.
    pub fn introducer(&self, f: FeatId) -> TypeId {
        self.introducer[f.0 as usize]
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in 0..self.type_names.len() {
            let id = TypeId(t as u16);
            let subs = &self.children[t];
            let feats: Vec<&(FeatId, TypeId)> = self.approp[t]
                .iter()
                .filter(|&&(f, r)| {
                    self.introducer(f) == id
                        || self.parents[t]
                            .iter()
                            .all(|&p| self.restriction(p, f) != Some(r))
                })
                .collect();
            if subs.is_empty() && feats.is_empty() {
                continue;
            }
            write!(out, "type {}", self.type_name(id))?;
            if !subs.is_empty() {
                let names: Vec<&str> = subs.iter().map(|&c| self.type_name(c)).collect();
                write!(out, " sub {{{}}}", names.join(", "))?;
            }
            if !feats.is_empty() {
                let decls: Vec<String> = feats
                    .iter()
                    .map(|&&(f, r)| format!("{}:{}", self.feat_name(f), self.type_name(r)))
                    .collect();
                write!(out, " intro {{{}}}", decls.join(", "))?;
            }
            writeln!(out, ".")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::paper_signature_decls;

    fn paper() -> Signature {
        Signature::build(&paper_signature_decls()).expect("bundled signature is valid")
    }

    fn ty(sig: &Signature, name: &str) -> TypeId {
        sig.type_by_name(name)
            .unwrap_or_else(|| panic!("type {name}"))
    }

    #[test]
    fn bundled_signature_validates() {
        let sig = paper();
        assert_eq!(sig.root(), ty(&sig, "top"));
    }

    #[test]
    fn meet_examples() {
        let sig = paper();
        assert_eq!(
            sig.meet(ty(&sig, "t"), ty(&sig, "t_2")),
            Some(ty(&sig, "t_2"))
        );
        assert_eq!(sig.meet(ty(&sig, "+"), ty(&sig, "-")), None);
        assert_eq!(sig.meet(ty(&sig, "t_1"), ty(&sig, "t_2")), None);
    }

    #[test]
    fn join_examples() {
        let sig = paper();
        assert_eq!(sig.join(ty(&sig, "t_1"), ty(&sig, "t_2")), ty(&sig, "t"));
        assert_eq!(sig.join(ty(&sig, "t_2"), ty(&sig, "t_2")), ty(&sig, "t_2"));
        assert_eq!(sig.join(ty(&sig, "+"), ty(&sig, "t_1")), sig.root());
    }

    #[test]
    fn species_examples() {
        let sig = paper();
        let names = |t: &str| -> Vec<String> {
            sig.species(ty(&sig, t))
                .iter()
                .map(|&s| sig.type_name(s).to_string())
                .collect()
        };
        assert_eq!(names("t"), vec!["t_1", "t_2"]);
        assert_eq!(names("word"), vec!["word"]);
        let mut bool_species = names("bool");
        bool_species.sort();
        assert_eq!(bool_species, vec!["+", "-"]);
    }

    #[test]
    fn approp_examples() {
        let sig = paper();
        let feats = |t: &str| -> Vec<(String, String)> {
            sig.approp(ty(&sig, t))
                .iter()
                .map(|&(f, r)| (sig.feat_name(f).to_string(), sig.type_name(r).to_string()))
                .collect()
        };
        assert_eq!(
            feats("t_2"),
            vec![
                ("W".into(), "bool".into()),
                ("X".into(), "bool".into()),
                ("Y".into(), "bool".into()),
                ("Z".into(), "list".into()),
            ]
        );
        assert_eq!(
            feats("t_1"),
            vec![
                ("W".into(), "bool".into()),
                ("X".into(), "bool".into()),
                ("Y".into(), "bool".into()),
            ]
        );
        assert!(feats("top").is_empty());
    }

    #[test]
    fn overlapping_branches_are_rejected() {
        // t_1 and t_2 below both t and bool: t and bool then have two maximal
        // common subtypes, so no unique meet exists.
        let mut decls = paper_signature_decls();
        for d in &mut decls {
            if d.name == "bool" {
                d.subtypes.push("t_1".into());
                d.subtypes.push("t_2".into());
            }
        }
        let diags = Signature::build(&decls).unwrap_err();
        assert!(
            diags
                .iter()
                .any(|d| matches!(d, SignatureDiagnostic::NonUniqueMeet { .. })),
            "expected a non-unique meet diagnostic, got {diags:?}"
        );
    }

    #[test]
    fn double_introduction_is_rejected() {
        let decls = vec![
            TypeDecl {
                name: "top".into(),
                subtypes: vec!["t".into(), "bool".into()],
                features: vec![],
            },
            TypeDecl {
                name: "t".into(),
                subtypes: vec!["t_1".into(), "t_2".into()],
                features: vec![],
            },
            TypeDecl {
                name: "t_1".into(),
                subtypes: vec![],
                features: vec![("W".into(), "bool".into())],
            },
            TypeDecl {
                name: "t_2".into(),
                subtypes: vec![],
                features: vec![("W".into(), "bool".into())],
            },
        ];
        let diags = Signature::build(&decls).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| matches!(d, SignatureDiagnostic::FeatureReintroduced { .. })));
    }

    #[test]
    fn widening_is_rejected() {
        let decls = vec![
            TypeDecl {
                name: "top".into(),
                subtypes: vec!["t".into(), "bool".into()],
                features: vec![],
            },
            TypeDecl {
                name: "bool".into(),
                subtypes: vec!["+".into(), "-".into()],
                features: vec![],
            },
            TypeDecl {
                name: "t".into(),
                subtypes: vec!["t_1".into()],
                features: vec![("W".into(), "+".into())],
            },
            TypeDecl {
                name: "t_1".into(),
                subtypes: vec![],
                features: vec![("W".into(), "bool".into())],
            },
        ];
        let diags = Signature::build(&decls).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| matches!(d, SignatureDiagnostic::RestrictionWidened { .. })));
    }

    #[test]
    fn cycles_are_rejected() {
        let decls = vec![
            TypeDecl {
                name: "a".into(),
                subtypes: vec!["b".into()],
                features: vec![],
            },
            TypeDecl {
                name: "b".into(),
                subtypes: vec!["a".into()],
                features: vec![],
            },
        ];
        let diags = Signature::build(&decls).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| matches!(d, SignatureDiagnostic::Cycle(_))));
    }

    #[test]
    fn display_round_trips_through_the_parser() {
        let decls = {
            // Include a narrowed restriction to exercise re-declaration.
            let mut d = paper_signature_decls();
            for td in &mut d {
                if td.name == "t_2" {
                    td.features.push(("W".into(), "+".into()));
                }
            }
            d
        };
        let sig = Signature::build(&decls).unwrap();
        let rendered = sig.to_string();
        let reparsed = crate::grammar::parse_grammar(&rendered).unwrap();
        let sig2 = Signature::build(&reparsed.types).unwrap();
        assert_eq!(sig.type_count(), sig2.type_count());
        for a in 0..sig.type_count() as u16 {
            let name_a = sig.type_name(TypeId(a));
            let a2 = sig2.type_by_name(name_a).unwrap();
            for b in 0..sig.type_count() as u16 {
                let b2 = sig2.type_by_name(sig.type_name(TypeId(b))).unwrap();
                let m1 = sig.meet(TypeId(a), TypeId(b)).map(|t| sig.type_name(t));
                let m2 = sig2.meet(a2, b2).map(|t| sig2.type_name(t));
                assert_eq!(m1, m2, "meet({name_a}, {})", sig.type_name(TypeId(b)));
            }
            let ap1: Vec<(String, String)> = sig
                .approp(TypeId(a))
                .iter()
                .map(|&(f, r)| (sig.feat_name(f).into(), sig.type_name(r).into()))
                .collect();
            let ap2: Vec<(String, String)> = sig2
                .approp(a2)
                .iter()
                .map(|&(f, r)| (sig2.feat_name(f).into(), sig2.type_name(r).into()))
                .collect();
            assert_eq!(ap1, ap2, "appropriateness of {name_a}");
        }
    }

    #[test]
    fn meet_algebra_is_exhaustively_sound() {
        let sig = paper();
        let n = sig.type_count() as u16;
        let all: Vec<TypeId> = (0..n).map(TypeId).collect();
        for &s in &all {
            assert_eq!(sig.meet(s, s), Some(s));
            for &t in &all {
                assert_eq!(sig.meet(s, t), sig.meet(t, s));
                // meet(s,t) = s iff s subtype of t.
                assert_eq!(sig.meet(s, t) == Some(s), sig.subtype(s, t));
                for &u in &all {
                    let left = sig.meet(s, t).and_then(|m| sig.meet(m, u));
                    let right = sig.meet(t, u).and_then(|m| sig.meet(s, m));
                    assert_eq!(left, right, "associativity at {s:?} {t:?} {u:?}");
                }
            }
        }
    }
}
