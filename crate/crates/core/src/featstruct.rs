//! Typed feature structures: rooted, arc-labeled, acyclic graphs with
//! structure sharing, over a validated [`Signature`].
//!
//! Structures are immutable values. Every operation that produces a structure
//! runs in a private work area (union-find node merging with appropriateness
//! narrowing) and extracts a fresh, normalized result: nodes are stored in
//! breadth-first discovery order from the roots, arcs sorted by feature name.
//! Two structures are alphabetic variants exactly when their normalized
//! representations coincide, which makes [`Fs::canonical_form`] a cheap
//! serialization.
//!
//! A structure carries one root in the common case, but clause machinery works
//! with multi-rooted structures (an in/out pair with cross-argument sharing is
//! a two-rooted graph). All algebraic operations act pointwise on root vectors
//! of equal length.
//!
//! Cyclic results are rejected: unification reports [`FsError::Cyclic`]
//! instead of producing a cyclic graph.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::signature::{FeatId, Signature, TypeId};

/// Index of a node within one [`Fs`]. Only meaningful for the structure it
/// came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeIx(pub u32);

/// A feature path: a sequence of feature names.
pub type Path = Vec<FeatId>;

/// Renders a path as `C.Z`.
pub fn path_to_string(sig: &Signature, path: &[FeatId]) -> String {
    if path.is_empty() {
        return "ε".to_string();
    }
    path.iter()
        .map(|&f| sig.feat_name(f))
        .collect::<Vec<_>>()
        .join(".")
}

/// Builds a path from feature names; `None` if a name is unknown.
pub fn path_from_names(sig: &Signature, names: &[&str]) -> Option<Path> {
    names.iter().map(|n| sig.feat_by_name(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FsError {
    /// Unification failure: two node types have no meet. A normal outcome.
    #[error("type clash: `{0}` and `{1}` are inconsistent")]
    Clash(String, String),
    /// A feature was asserted at a node whose type cannot bear it.
    #[error("feature `{feat}` is not appropriate for type `{ty}`")]
    NotAppropriate { feat: String, ty: String },
    /// The operation would produce a cyclic structure.
    #[error("operation would create a cyclic feature structure")]
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    ty: TypeId,
    /// Sorted by feature id (= feature name).
    arcs: Vec<(FeatId, u32)>,
}

/// An immutable, normalized feature structure (possibly multi-rooted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fs {
    sig_id: u32,
    nodes: Vec<Node>,
    roots: Vec<u32>,
}

impl Fs {
    /// A single node of the given type, no arcs.
    pub fn most_general(sig: &Signature, ty: TypeId) -> Fs {
        Fs {
            sig_id: sig.instance_id(),
            nodes: vec![Node {
                ty,
                arcs: Vec::new(),
            }],
            roots: vec![0],
        }
    }

    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn root(&self) -> NodeIx {
        NodeIx(self.roots[0])
    }

    pub fn root_at(&self, k: usize) -> NodeIx {
        NodeIx(self.roots[k])
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_type(&self, n: NodeIx) -> TypeId {
        self.nodes[n.0 as usize].ty
    }

    pub fn arcs(&self, n: NodeIx) -> impl Iterator<Item = (FeatId, NodeIx)> + '_ {
        self.nodes[n.0 as usize]
            .arcs
            .iter()
            .map(|&(f, t)| (f, NodeIx(t)))
    }

    pub fn arc_target(&self, n: NodeIx, f: FeatId) -> Option<NodeIx> {
        let arcs = &self.nodes[n.0 as usize].arcs;
        arcs.binary_search_by_key(&f, |&(ff, _)| ff)
            .ok()
            .map(|i| NodeIx(arcs[i].1))
    }

    /// Follows `path` from root `k`.
    pub fn get_path_at(&self, k: usize, path: &[FeatId]) -> Option<NodeIx> {
        let mut cur = NodeIx(self.roots[k]);
        for &f in path {
            cur = self.arc_target(cur, f)?;
        }
        Some(cur)
    }

    /// Follows `path` from the first root.
    pub fn get_path(&self, path: &[FeatId]) -> Option<NodeIx> {
        self.get_path_at(0, path)
    }

    /// Extends the structure along `path` (creating restriction-typed nodes as
    /// needed) and imposes `ty` at the end.
    pub fn put_path(&self, sig: &Signature, path: &[FeatId], ty: TypeId) -> Result<Fs, FsError> {
        debug_assert_eq!(self.sig_id, sig.instance_id());
        let mut m = Machine::new(sig);
        let base = m.load(self);
        let mut cur = base + self.roots[0];
        for &f in path {
            cur = m.force_arc(cur, f)?;
        }
        m.narrow(cur, ty)?;
        m.drain()?;
        let roots: Vec<u32> = self.roots.iter().map(|&r| base + r).collect();
        m.extract(&roots)
    }

    /// Unifies two structures pointwise on their roots. Inputs are unchanged;
    /// failure is a normal outcome.
    pub fn unify(&self, other: &Fs, sig: &Signature) -> Result<Fs, FsError> {
        debug_assert_eq!(self.sig_id, sig.instance_id());
        debug_assert_eq!(other.sig_id, sig.instance_id());
        assert_eq!(
            self.roots.len(),
            other.roots.len(),
            "unify requires equal root counts"
        );
        let mut m = Machine::new(sig);
        let a = m.load(self);
        let b = m.load(other);
        for (ra, rb) in self.roots.iter().zip(&other.roots) {
            m.queue(a + ra, b + rb);
        }
        m.drain()?;
        let roots: Vec<u32> = self.roots.iter().map(|&r| a + r).collect();
        m.extract(&roots)
    }

    /// Unifies a single-rooted structure into root `k` of this one.
    pub fn unify_at_root(&self, k: usize, other: &Fs, sig: &Signature) -> Result<Fs, FsError> {
        debug_assert_eq!(other.root_count(), 1);
        let mut m = Machine::new(sig);
        let a = m.load(self);
        let b = m.load(other);
        m.queue(a + self.roots[k], b + other.roots[0]);
        m.drain()?;
        let roots: Vec<u32> = self.roots.iter().map(|&r| a + r).collect();
        m.extract(&roots)
    }

    /// The substructure reachable from root `k`, as a single-rooted value.
    pub fn extract_root(&self, k: usize) -> Fs {
        self.extract_at(NodeIx(self.roots[k]))
    }

    /// The substructure rooted at an arbitrary node, as a single-rooted value.
    pub fn extract_at(&self, n: NodeIx) -> Fs {
        let mut map: HashMap<u32, u32> = HashMap::new();
        let mut order: Vec<u32> = Vec::new();
        let mut queue = VecDeque::new();
        let r = n.0;
        map.insert(r, 0);
        order.push(r);
        queue.push_back(r);
        while let Some(n) = queue.pop_front() {
            for &(_, t) in &self.nodes[n as usize].arcs {
                if let std::collections::hash_map::Entry::Vacant(slot) = map.entry(t) {
                    slot.insert(order.len() as u32);
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        let nodes = order
            .iter()
            .map(|&n| Node {
                ty: self.nodes[n as usize].ty,
                arcs: self.nodes[n as usize]
                    .arcs
                    .iter()
                    .map(|&(f, t)| (f, map[&t]))
                    .collect(),
            })
            .collect();
        Fs {
            sig_id: self.sig_id,
            nodes,
            roots: vec![0],
        }
    }

    /// Structural subsumption: every piece of information in `self` (types,
    /// arcs, reentrancies) also holds in `other`.
    pub fn subsumes(&self, other: &Fs, sig: &Signature) -> bool {
        debug_assert_eq!(self.roots.len(), other.roots.len());
        let mut map: HashMap<u32, u32> = HashMap::new();
        let mut stack: Vec<(u32, u32)> = Vec::new();
        for (&g, &s) in self.roots.iter().zip(&other.roots) {
            match map.get(&g) {
                Some(&prev) if prev != s => return false,
                Some(_) => {}
                None => {
                    map.insert(g, s);
                    stack.push((g, s));
                }
            }
        }
        while let Some((g, s)) = stack.pop() {
            if !sig.subtype(other.nodes[s as usize].ty, self.nodes[g as usize].ty) {
                return false;
            }
            for &(f, gt) in &self.nodes[g as usize].arcs {
                let st = match other.nodes[s as usize]
                    .arcs
                    .binary_search_by_key(&f, |&(ff, _)| ff)
                {
                    Ok(i) => other.nodes[s as usize].arcs[i].1,
                    Err(_) => return false,
                };
                match map.get(&gt) {
                    Some(&prev) => {
                        if prev != st {
                            return false;
                        }
                    }
                    None => {
                        map.insert(gt, st);
                        stack.push((gt, st));
                    }
                }
            }
        }
        true
    }

    /// Least general structure subsuming both: node types joined, arcs kept
    /// only when present in both, a reentrancy kept only when it holds in
    /// both.
    pub fn generalize(&self, other: &Fs, sig: &Signature) -> Fs {
        debug_assert_eq!(self.roots.len(), other.roots.len());
        let mut map: HashMap<(u32, u32), u32> = HashMap::new();
        let mut order: Vec<(u32, u32)> = Vec::new();
        let mut queue: VecDeque<(u32, u32)> = VecDeque::new();
        let mut roots = Vec::with_capacity(self.roots.len());
        for (&a, &b) in self.roots.iter().zip(&other.roots) {
            let id = *map.entry((a, b)).or_insert_with(|| {
                order.push((a, b));
                queue.push_back((a, b));
                (order.len() - 1) as u32
            });
            roots.push(id);
        }
        let mut nodes: Vec<Node> = Vec::new();
        while let Some((a, b)) = queue.pop_front() {
            let na = &self.nodes[a as usize];
            let nb = &other.nodes[b as usize];
            let mut arcs = Vec::new();
            let (mut i, mut j) = (0, 0);
            while i < na.arcs.len() && j < nb.arcs.len() {
                match na.arcs[i].0.cmp(&nb.arcs[j].0) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let pair = (na.arcs[i].1, nb.arcs[j].1);
                        let id = *map.entry(pair).or_insert_with(|| {
                            order.push(pair);
                            queue.push_back(pair);
                            (order.len() - 1) as u32
                        });
                        arcs.push((na.arcs[i].0, id));
                        i += 1;
                        j += 1;
                    }
                }
            }
            nodes.push(Node {
                ty: sig.join(na.ty, nb.ty),
                arcs,
            });
        }
        Fs {
            sig_id: self.sig_id,
            nodes,
            roots,
        }
    }

    /// One structure per consistent assignment of species to the nodes at the
    /// given paths (relative to the first root). Resolved nodes are made
    /// totally well-typed: appropriate features are filled with their most
    /// general restriction values.
    pub fn species_resolutions(&self, sig: &Signature, at: &[Path]) -> Vec<Fs> {
        let mut targets: Vec<NodeIx> = Vec::new();
        for p in at {
            let n = self
                .get_path(p)
                .expect("species resolution path must exist");
            if !targets.contains(&n) {
                targets.push(n);
            }
        }
        if targets.is_empty() {
            return vec![self.clone()];
        }
        let mut out = Vec::new();
        let mut choice: Vec<usize> = vec![0; targets.len()];
        'outer: loop {
            // Try the current assignment.
            let attempt = (|| -> Result<Fs, FsError> {
                let mut m = Machine::new(sig);
                let base = m.load(self);
                for (k, &n) in targets.iter().enumerate() {
                    let sp = sig.species(self.node_type(n))[choice[k]];
                    m.narrow(base + n.0, sp)?;
                }
                m.drain()?;
                for &n in &targets {
                    m.fill_approp(base + n.0)?;
                    m.drain()?;
                }
                let roots: Vec<u32> = self.roots.iter().map(|&r| base + r).collect();
                m.extract(&roots)
            })();
            if let Ok(fs) = attempt {
                out.push(fs);
            }
            // Advance the assignment odometer.
            for k in (0..targets.len()).rev() {
                choice[k] += 1;
                if choice[k] < sig.species(self.node_type(targets[k])).len() {
                    continue 'outer;
                }
                choice[k] = 0;
            }
            break;
        }
        out
    }

    /// Canonical byte string; equal exactly for alphabetic variants.
    pub fn canonical_form(&self, sig: &Signature) -> String {
        use fmt::Write;
        let mut s = String::new();
        let _ = write!(
            s,
            "roots:{}",
            self.roots
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = write!(s, ";{}:{}", i, sig.type_name(n.ty));
            if !n.arcs.is_empty() {
                let arcs = n
                    .arcs
                    .iter()
                    .map(|&(f, t)| format!("{}>{}", sig.feat_name(f), t))
                    .collect::<Vec<_>>()
                    .join(",");
                let _ = write!(s, "({arcs})");
            }
        }
        s
    }

    /// Alphabetic-variant equality.
    pub fn equivalent(&self, other: &Fs) -> bool {
        self == other
    }

    /// All (path, node) pairs reachable from root `k`, in lexicographic path
    /// order. Shared nodes appear once per path. Intended for small
    /// structures; path counts grow with sharing depth.
    pub fn enumerate_paths(&self, k: usize) -> Vec<(Path, NodeIx)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        fn walk(fs: &Fs, n: u32, path: &mut Path, out: &mut Vec<(Path, NodeIx)>) {
            out.push((path.clone(), NodeIx(n)));
            for &(f, t) in &fs.nodes[n as usize].arcs {
                path.push(f);
                walk(fs, t, path, out);
                path.pop();
            }
        }
        walk(self, self.roots[k], &mut path, &mut out);
        out
    }

    /// Renders each root as grammar-syntax AVM text, with a tag numbering
    /// shared across roots so cross-root reentrancies stay visible.
    pub fn render_roots(&self, sig: &Signature) -> Vec<String> {
        let mut refs: HashMap<u32, usize> = HashMap::new();
        for &r in &self.roots {
            *refs.entry(r).or_insert(0) += 1;
        }
        for n in &self.nodes {
            for &(_, t) in &n.arcs {
                *refs.entry(t).or_insert(0) += 1;
            }
        }
        // Tag numbers in print order.
        let mut tags: HashMap<u32, usize> = HashMap::new();
        let mut stack: Vec<u32> = Vec::new();
        let mut visit_order: Vec<u32> = Vec::new();
        let mut seen: std::collections::HashSet<u32> = Default::default();
        for &r in self.roots.iter().rev() {
            stack.push(r);
        }
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            visit_order.push(n);
            for &(_, t) in self.nodes[n as usize].arcs.iter().rev() {
                stack.push(t);
            }
        }
        for n in visit_order {
            if refs.get(&n).copied().unwrap_or(0) >= 2 {
                let k = tags.len() + 1;
                tags.insert(n, k);
            }
        }
        let mut printed: HashMap<u32, bool> = HashMap::new();
        self.roots
            .iter()
            .map(|&r| self.render_node(sig, r, &tags, &mut printed))
            .collect()
    }

    fn list_spine(&self, sig: &Signature, n: u32, tags: &HashMap<u32, usize>) -> Option<Vec<u32>> {
        // Returns HD elements when the node heads a pure, untagged list spine.
        let ne = sig.type_by_name("ne_list")?;
        let e = sig.type_by_name("e_list")?;
        let hd = sig.feat_by_name("HD")?;
        let tl = sig.feat_by_name("TL")?;
        let mut elems = Vec::new();
        let mut cur = n;
        let mut first = true;
        loop {
            let node = &self.nodes[cur as usize];
            if !first && tags.contains_key(&cur) {
                return None;
            }
            if node.ty == e {
                return if node.arcs.is_empty() {
                    Some(elems)
                } else {
                    None
                };
            }
            if node.ty != ne {
                return None;
            }
            let hd_t = self.arc_target(NodeIx(cur), hd)?;
            let tl_t = self.arc_target(NodeIx(cur), tl)?;
            if node.arcs.len() != 2 {
                return None;
            }
            elems.push(hd_t.0);
            cur = tl_t.0;
            first = false;
        }
    }

    fn render_node(
        &self,
        sig: &Signature,
        n: u32,
        tags: &HashMap<u32, usize>,
        printed: &mut HashMap<u32, bool>,
    ) -> String {
        let mut s = String::new();
        if let Some(&k) = tags.get(&n) {
            if printed.get(&n).copied().unwrap_or(false) {
                return format!("#{k}");
            }
            printed.insert(n, true);
            s.push_str(&format!("#{k}="));
        }
        if let Some(elems) = self.list_spine(sig, n, tags) {
            if elems.is_empty() {
                s.push_str("<>");
            } else {
                let parts: Vec<String> = elems
                    .iter()
                    .map(|&e| self.render_node(sig, e, tags, printed))
                    .collect();
                s.push_str(&format!("<{}>", parts.join(", ")));
            }
            return s;
        }
        let node = &self.nodes[n as usize];
        s.push_str(sig.type_name(node.ty));
        if !node.arcs.is_empty() {
            let parts: Vec<String> = node
                .arcs
                .iter()
                .map(|&(f, t)| {
                    format!(
                        "{}: {}",
                        sig.feat_name(f),
                        self.render_node(sig, t, tags, printed)
                    )
                })
                .collect();
            s.push_str(&format!(" & ({})", parts.join(", ")));
        }
        s
    }

    /// Single-root rendering convenience.
    pub fn render(&self, sig: &Signature) -> String {
        self.render_roots(sig).join(", ")
    }
}

/// Incremental construction of a (possibly multi-rooted) structure with
/// explicit sharing; used by the grammar reader and the clause transformers.
pub struct FsBuilder<'s> {
    m: Machine<'s>,
    roots: Vec<u32>,
    failed: Option<FsError>,
}

/// Handle to a node under construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BNode(u32);

impl<'s> FsBuilder<'s> {
    pub fn new(sig: &'s Signature) -> Self {
        FsBuilder {
            m: Machine::new(sig),
            roots: Vec::new(),
            failed: None,
        }
    }

    pub fn node(&mut self, ty: TypeId) -> BNode {
        BNode(self.m.fresh(ty))
    }

    /// Loads a finished structure and returns handles to its roots.
    pub fn import(&mut self, fs: &Fs) -> Vec<BNode> {
        let base = self.m.load(fs);
        fs.roots.iter().map(|&r| BNode(base + r)).collect()
    }

    /// Adds (or unifies into) an arc, coercing the source node's type to the
    /// feature's introducer.
    pub fn arc(&mut self, from: BNode, feat: FeatId, to: BNode) {
        if self.failed.is_some() {
            return;
        }
        if let Err(e) = self.m.assert_arc(from.0, feat, to.0) {
            self.failed = Some(e);
        }
    }

    /// Narrows a node's type.
    pub fn restrict(&mut self, n: BNode, ty: TypeId) {
        if self.failed.is_some() {
            return;
        }
        if let Err(e) = self.m.narrow(n.0, ty).and_then(|_| self.m.drain()) {
            self.failed = Some(e);
        }
    }

    /// Merges two nodes (tag equality).
    pub fn merge(&mut self, a: BNode, b: BNode) {
        if self.failed.is_some() {
            return;
        }
        self.m.queue(a.0, b.0);
        if let Err(e) = self.m.drain() {
            self.failed = Some(e);
        }
    }

    pub fn push_root(&mut self, n: BNode) {
        self.roots.push(n.0);
    }

    pub fn finish(mut self) -> Result<Fs, FsError> {
        if let Some(e) = self.failed {
            return Err(e);
        }
        self.m.drain()?;
        let roots = std::mem::take(&mut self.roots);
        self.m.extract(&roots)
    }
}

/// Union-find work area shared by all structure-producing operations.
struct Machine<'s> {
    sig: &'s Signature,
    parent: Vec<u32>,
    ty: Vec<TypeId>,
    arcs: Vec<Vec<(FeatId, u32)>>,
    pending: VecDeque<(u32, u32)>,
}

impl<'s> Machine<'s> {
    fn new(sig: &'s Signature) -> Self {
        Machine {
            sig,
            parent: Vec::new(),
            ty: Vec::new(),
            arcs: Vec::new(),
            pending: VecDeque::new(),
        }
    }

    fn fresh(&mut self, ty: TypeId) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.ty.push(ty);
        self.arcs.push(Vec::new());
        id
    }

    fn load(&mut self, fs: &Fs) -> u32 {
        debug_assert_eq!(fs.sig_id, self.sig.instance_id(), "signature mismatch");
        let base = self.parent.len() as u32;
        for n in &fs.nodes {
            let id = self.fresh(n.ty);
            self.arcs[id as usize] = n.arcs.iter().map(|&(f, t)| (f, base + t)).collect();
        }
        base
    }

    fn find(&mut self, mut n: u32) -> u32 {
        while self.parent[n as usize] != n {
            let p = self.parent[n as usize];
            self.parent[n as usize] = self.parent[p as usize];
            n = self.parent[n as usize];
        }
        n
    }

    fn queue(&mut self, a: u32, b: u32) {
        self.pending.push_back((a, b));
    }

    fn clash(&self, a: TypeId, b: TypeId) -> FsError {
        FsError::Clash(
            self.sig.type_name(a).to_string(),
            self.sig.type_name(b).to_string(),
        )
    }

    /// Narrows a node's type to its meet with `ty`, cascading restriction
    /// narrowing into arc targets.
    fn narrow(&mut self, n: u32, ty: TypeId) -> Result<(), FsError> {
        let r = self.find(n);
        let old = self.ty[r as usize];
        let m = self.sig.meet(old, ty).ok_or_else(|| self.clash(old, ty))?;
        if m == old {
            return Ok(());
        }
        self.ty[r as usize] = m;
        let arcs = self.arcs[r as usize].clone();
        for (f, t) in arcs {
            let restr = self
                .sig
                .restriction(m, f)
                .expect("feature stays appropriate under narrowing");
            self.narrow(t, restr)?;
        }
        Ok(())
    }

    /// Asserts an arc, coercing the source type to the feature's introducer.
    fn assert_arc(&mut self, from: u32, feat: FeatId, to: u32) -> Result<(), FsError> {
        let r = self.find(from);
        let intro = self.sig.introducer(feat);
        let old = self.ty[r as usize];
        if self.sig.meet(old, intro).is_none() {
            return Err(FsError::NotAppropriate {
                feat: self.sig.feat_name(feat).to_string(),
                ty: self.sig.type_name(old).to_string(),
            });
        }
        self.narrow(r, intro)?;
        let r = self.find(from);
        let restr = self
            .sig
            .restriction(self.ty[r as usize], feat)
            .expect("coerced type bears the feature");
        match self.arcs[r as usize].binary_search_by_key(&feat, |&(f, _)| f) {
            Ok(i) => {
                let existing = self.arcs[r as usize][i].1;
                self.queue(existing, to);
            }
            Err(i) => {
                self.arcs[r as usize].insert(i, (feat, to));
                self.narrow(to, restr)?;
            }
        }
        self.drain()
    }

    /// Follows or creates the arc `feat` from `from`, returning the target.
    fn force_arc(&mut self, from: u32, feat: FeatId) -> Result<u32, FsError> {
        let r = self.find(from);
        if let Some(t) = self.arcs[r as usize]
            .binary_search_by_key(&feat, |&(f, _)| f)
            .ok()
            .map(|i| self.arcs[r as usize][i].1)
        {
            return Ok(t);
        }
        let fresh = self.fresh(self.sig.root());
        self.assert_arc(r, feat, fresh)?;
        Ok(fresh)
    }

    /// Fills every appropriate feature of `n` with a most-general
    /// restriction-typed node.
    fn fill_approp(&mut self, n: u32) -> Result<(), FsError> {
        let r = self.find(n);
        let ty = self.ty[r as usize];
        for &(f, restr) in self.sig.approp(ty) {
            let rep = self.find(r);
            let missing = self.arcs[rep as usize]
                .binary_search_by_key(&f, |&(ff, _)| ff)
                .is_err();
            if missing {
                let fresh = self.fresh(restr);
                self.assert_arc(rep, f, fresh)?;
            }
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), FsError> {
        while let Some((a, b)) = self.pending.pop_front() {
            let ra = self.find(a);
            let rb = self.find(b);
            if ra == rb {
                continue;
            }
            let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[gone as usize] = keep;
            let tk = self.ty[keep as usize];
            let tg = self.ty[gone as usize];
            let m = self.sig.meet(tk, tg).ok_or_else(|| self.clash(tk, tg))?;
            self.ty[keep as usize] = m;
            let gone_arcs = std::mem::take(&mut self.arcs[gone as usize]);
            for (f, t) in gone_arcs {
                match self.arcs[keep as usize].binary_search_by_key(&f, |&(ff, _)| ff) {
                    Ok(i) => {
                        let existing = self.arcs[keep as usize][i].1;
                        self.queue(existing, t);
                    }
                    Err(i) => self.arcs[keep as usize].insert(i, (f, t)),
                }
            }
            // Re-impose restrictions under the (possibly narrower) meet.
            let arcs = self.arcs[keep as usize].clone();
            for (f, t) in arcs {
                let restr = self
                    .sig
                    .restriction(m, f)
                    .expect("merged type bears all merged features");
                self.narrow(t, restr)?;
            }
        }
        Ok(())
    }

    /// Checks acyclicity and produces a normalized structure.
    fn extract(&mut self, roots: &[u32]) -> Result<Fs, FsError> {
        let root_reps: Vec<u32> = roots.iter().map(|&r| self.find(r)).collect();
        // Cycle check over representatives (iterative coloring DFS).
        let mut color: HashMap<u32, u8> = HashMap::new();
        for &r in &root_reps {
            if color.get(&r) == Some(&2) {
                continue;
            }
            let mut stack: Vec<(u32, usize)> = vec![(r, 0)];
            color.insert(r, 1);
            while let Some(&mut (n, ref mut i)) = stack.last_mut() {
                let arcs: Vec<u32> = self.arcs[n as usize].iter().map(|&(_, t)| t).collect();
                if *i < arcs.len() {
                    let t = self.find(arcs[*i]);
                    *i += 1;
                    match color.get(&t).copied().unwrap_or(0) {
                        0 => {
                            color.insert(t, 1);
                            stack.push((t, 0));
                        }
                        1 => return Err(FsError::Cyclic),
                        _ => {}
                    }
                } else {
                    color.insert(n, 2);
                    stack.pop();
                }
            }
        }
        // Normalized extraction: BFS from roots, arcs already sorted.
        let mut map: HashMap<u32, u32> = HashMap::new();
        let mut order: Vec<u32> = Vec::new();
        let mut queue = VecDeque::new();
        let mut out_roots = Vec::with_capacity(root_reps.len());
        for &r in &root_reps {
            let id = *map.entry(r).or_insert_with(|| {
                order.push(r);
                queue.push_back(r);
                (order.len() - 1) as u32
            });
            out_roots.push(id);
        }
        while let Some(n) = queue.pop_front() {
            let arcs: Vec<(FeatId, u32)> = self.arcs[n as usize].clone();
            for (_, t) in arcs {
                let rep = self.find(t);
                map.entry(rep).or_insert_with(|| {
                    order.push(rep);
                    queue.push_back(rep);
                    (order.len() - 1) as u32
                });
            }
        }
        let mut nodes = Vec::with_capacity(order.len());
        for &n in &order {
            let arcs = self.arcs[n as usize]
                .clone()
                .into_iter()
                .map(|(f, t)| {
                    let rep = self.find(t);
                    (f, map[&rep])
                })
                .collect();
            nodes.push(Node {
                ty: self.ty[n as usize],
                arcs,
            });
        }
        Ok(Fs {
            sig_id: self.sig.instance_id(),
            nodes,
            roots: out_roots,
        })
    }
}

/// The pair (a, a) with both roots on the same node: the identity relation
/// on `a`, fully shared.
pub fn diag_pair(a: &Fs) -> Fs {
    debug_assert_eq!(a.root_count(), 1);
    Fs {
        sig_id: a.sig_id,
        nodes: a.nodes.clone(),
        roots: vec![a.roots[0], a.roots[0]],
    }
}

/// The most general pair: two unrelated root-typed nodes.
pub fn top_pair(sig: &Signature) -> Fs {
    Fs {
        sig_id: sig.instance_id(),
        nodes: vec![
            Node {
                ty: sig.root(),
                arcs: Vec::new(),
            },
            Node {
                ty: sig.root(),
                arcs: Vec::new(),
            },
        ],
        roots: vec![0, 1],
    }
}

/// Joins two single-rooted structures into one two-rooted structure without
/// merging anything.
pub fn pair(a: &Fs, b: &Fs) -> Fs {
    debug_assert_eq!(a.sig_id, b.sig_id);
    let mut nodes = a.nodes.clone();
    let off = nodes.len() as u32;
    nodes.extend(b.nodes.iter().map(|n| Node {
        ty: n.ty,
        arcs: n.arcs.iter().map(|&(f, t)| (f, off + t)).collect(),
    }));
    let mut roots = a.roots.clone();
    roots.extend(b.roots.iter().map(|&r| off + r));
    Fs {
        sig_id: a.sig_id,
        nodes,
        roots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{self, paper_signature_decls};
    use crate::signature::Signature;

    fn sig() -> Signature {
        Signature::build(&paper_signature_decls()).unwrap()
    }

    fn fs(sig: &Signature, text: &str) -> Fs {
        grammar::parse_avm_text(sig, text).unwrap_or_else(|e| panic!("avm `{text}`: {e}"))
    }

    fn entry(sig: &Signature) -> Fs {
        fs(
            sig,
            "word & (A: b, B: -, C: t_2 & (W: -, X: -, Y: -, Z: <a, b>))",
        )
    }

    #[test]
    fn unify_absorbs_more_general_description() {
        let sig = sig();
        let e = entry(&sig);
        let in_spec1 = fs(&sig, "(B: -, C: (Y: -))");
        let u = e.unify(&in_spec1, &sig).expect("rule 1 applies");
        assert_eq!(u.canonical_form(&sig), e.canonical_form(&sig));
    }

    #[test]
    fn unify_fails_on_species_clash() {
        let sig = sig();
        let a = fs(&sig, "(C: (W: +))");
        let b = fs(&sig, "(C: (W: -))");
        assert!(matches!(a.unify(&b, &sig), Err(FsError::Clash(_, _))));
    }

    #[test]
    fn unify_is_commutative_on_example() {
        let sig = sig();
        let a = fs(&sig, "(B: -, C: t_2 & (X: +))");
        let b = fs(&sig, "(A: b, C: (W: -))");
        let ab = a.unify(&b, &sig).unwrap();
        let ba = b.unify(&a, &sig).unwrap();
        assert_eq!(ab.canonical_form(&sig), ba.canonical_form(&sig));
    }

    #[test]
    fn reentrancy_propagates_through_unify() {
        let sig = sig();
        // Sharing W and X, then constraining W constrains X.
        let shared = fs(&sig, "(C: (W: #1, X: #1))");
        let plus = fs(&sig, "(C: (W: +))");
        let u = shared.unify(&plus, &sig).unwrap();
        let x = u
            .get_path(&path_from_names(&sig, &["C", "X"]).unwrap())
            .unwrap();
        assert_eq!(sig.type_name(u.node_type(x)), "+");
    }

    #[test]
    fn cyclic_result_is_rejected() {
        let sig = sig();
        let ne = sig.type_by_name("ne_list").unwrap();
        let tl = sig.feat_by_name("TL").unwrap();
        let mut b = FsBuilder::new(&sig);
        let n = b.node(ne);
        b.arc(n, tl, n);
        b.push_root(n);
        assert!(matches!(b.finish(), Err(FsError::Cyclic)));
    }

    #[test]
    fn subsumption_examples() {
        let sig = sig();
        let e = entry(&sig);
        let g = fs(&sig, "(C: (Y: -))");
        assert!(g.subsumes(&e, &sig));
        assert!(!e.subsumes(&g, &sig));
        let e2 = entry(&sig);
        assert!(e.subsumes(&e2, &sig) && e2.subsumes(&e, &sig));
    }

    #[test]
    fn subsumes_iff_unify_absorbs() {
        let sig = sig();
        let e = entry(&sig);
        let cases = [
            "(C: (Y: -))",
            "(B: -, C: (Y: -))",
            "(C: (W: +))",
            "word",
            "(A: b, C: t_2 & (Z: <a, b>))",
        ];
        for g_text in cases {
            let g = fs(&sig, g_text);
            let subs = g.subsumes(&e, &sig);
            let absorbed = match g.unify(&e, &sig) {
                Ok(u) => u.canonical_form(&sig) == e.canonical_form(&sig),
                Err(_) => false,
            };
            assert_eq!(subs, absorbed, "case {g_text}");
        }
    }

    #[test]
    fn generalize_examples() {
        let sig = sig();
        let x = entry(&sig);
        let g = x.generalize(&x, &sig);
        assert_eq!(g.canonical_form(&sig), x.canonical_form(&sig));

        let a = fs(&sig, "(C: t_1)");
        let b = fs(&sig, "(C: t_2)");
        let g = a.generalize(&b, &sig);
        let c = g.get_path(&path_from_names(&sig, &["C"]).unwrap()).unwrap();
        assert_eq!(sig.type_name(g.node_type(c)), "t");
        assert!(g.subsumes(&a, &sig) && g.subsumes(&b, &sig));
    }

    #[test]
    fn generalize_keeps_only_common_reentrancies() {
        let sig = sig();
        let shared = fs(&sig, "(C: (W: #1, X: #1))");
        let unshared = fs(&sig, "(C: (W: +, X: +))");
        let g = shared.generalize(&unshared, &sig);
        let w = g.get_path(&path_from_names(&sig, &["C", "W"]).unwrap());
        let x = g.get_path(&path_from_names(&sig, &["C", "X"]).unwrap());
        assert_ne!(w, x, "sharing present in only one input must be dropped");
        let g2 = shared.generalize(&shared, &sig);
        let w2 = g2.get_path(&path_from_names(&sig, &["C", "W"]).unwrap());
        let x2 = g2.get_path(&path_from_names(&sig, &["C", "X"]).unwrap());
        assert_eq!(w2, x2, "sharing present in both inputs must be kept");
    }

    #[test]
    fn species_resolution_examples() {
        let sig = sig();
        let in1 = fs(&sig, "(B: -, C: (Y: -))");
        let c_path = path_from_names(&sig, &["C"]).unwrap();
        let rs = in1.species_resolutions(&sig, std::slice::from_ref(&c_path));
        let mut tys: Vec<String> = rs
            .iter()
            .map(|r| {
                sig.type_name(r.node_type(r.get_path(&c_path).unwrap()))
                    .to_string()
            })
            .collect();
        tys.sort();
        assert_eq!(tys, vec!["t_1", "t_2"]);

        // Already species-typed: singleton, unchanged modulo filled features.
        let in3 = fs(&sig, "(C: t_2 & (W: +, X: +, Z: (TL: #1=list)))");
        let rs3 = in3.species_resolutions(&sig, std::slice::from_ref(&c_path));
        assert_eq!(rs3.len(), 1);
        assert!(in3.subsumes(&rs3[0], &sig));
        let c3 = rs3[0].get_path(&c_path).unwrap();
        assert_eq!(sig.type_name(rs3[0].node_type(c3)), "t_2");
        // Every resolution is subsumed by the input and species-typed at C.
        for r in &rs {
            assert!(in1.subsumes(r, &sig));
            assert!(sig.is_species(r.node_type(r.get_path(&c_path).unwrap())));
        }
    }

    #[test]
    fn canonical_form_examples() {
        let sig = sig();
        let e1 = entry(&sig);
        let e2 = entry(&sig);
        assert_eq!(e1.canonical_form(&sig), e2.canonical_form(&sig));
        let different = fs(
            &sig,
            "word & (A: b, B: -, C: t_2 & (W: -, X: +, Y: -, Z: <a, b>))",
        );
        assert_ne!(e1.canonical_form(&sig), different.canonical_form(&sig));
    }

    #[test]
    fn path_access_examples() {
        let sig = sig();
        let e = entry(&sig);
        let p = path_from_names(&sig, &["C", "Z", "HD"]).unwrap();
        let n = e.get_path(&p).unwrap();
        assert_eq!(sig.type_name(e.node_type(n)), "a");
        assert_eq!(e.get_path(&[]), Some(e.root()));

        let t1 = fs(&sig, "(C: t_1)");
        let cz = path_from_names(&sig, &["C", "Z"]).unwrap();
        let list = sig.type_by_name("list").unwrap();
        assert!(matches!(
            t1.put_path(&sig, &cz, list),
            Err(FsError::Clash(_, _)) | Err(FsError::NotAppropriate { .. })
        ));
    }

    #[test]
    fn render_round_trips() {
        let sig = sig();
        let texts = [
            "word & (A: b, B: -, C: t_2 & (W: -, X: -, Y: -, Z: <a, b>))",
            "(C: (W: #1, X: #1))",
            "(C: t_2 & (Z: (TL: #1=list), Y: #2), B: #3=bool)",
        ];
        for t in texts {
            let parsed = fs(&sig, t);
            let rendered = parsed.render(&sig);
            let reparsed = fs(&sig, &rendered);
            assert_eq!(
                parsed.canonical_form(&sig),
                reparsed.canonical_form(&sig),
                "render of `{t}` was `{rendered}`"
            );
        }
    }
}
