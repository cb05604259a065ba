//! Directed acyclic graphs with observed/unobserved node marking, ancestry
//! queries and d-separation.
//!
//! A [`Dag`] is immutable once built. Operations that conceptually mutate a
//! graph (such as the edge deletion performed by an intervention) return a
//! fresh value.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node handle, assigned in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMeta {
    pub name: String,
    pub observed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relations {
    pub parents: BTreeSet<NodeId>,
    pub ancestors: BTreeSet<NodeId>,
    pub descendants: BTreeSet<NodeId>,
    pub is_root: bool,
    pub is_leaf: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    meta: Vec<NodeMeta>,
    index: HashMap<String, NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    // Parents are kept in edge-declaration order; CPT row keys depend on it.
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    topo: Vec<NodeId>,
}

impl Dag {
    /// Builds a validated graph. Node ids follow declaration order.
    pub fn build<S: AsRef<str>>(nodes: &[(S, bool)], edges: &[(S, S)]) -> Result<Self> {
        let mut meta = Vec::with_capacity(nodes.len());
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, (name, observed)) in nodes.iter().enumerate() {
            let name = name.as_ref().to_string();
            if index.insert(name.clone(), NodeId(i)).is_some() {
                return Err(Error::Duplicate(format!("node `{name}`")));
            }
            meta.push(NodeMeta { name, observed: *observed });
        }
        let lookup = |s: &str| index.get(s).copied().ok_or_else(|| Error::UnknownNode(s.to_string()));
        let mut resolved = Vec::with_capacity(edges.len());
        for (from, to) in edges {
            resolved.push((lookup(from.as_ref())?, lookup(to.as_ref())?));
        }
        Self::from_parts(meta, index, resolved)
    }

    fn from_parts(meta: Vec<NodeMeta>, index: HashMap<String, NodeId>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        let n = meta.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(u, v) in &edges {
            if u == v {
                return Err(Error::Cycle(meta[u.0].name.clone()));
            }
            if !seen.insert((u, v)) {
                return Err(Error::Duplicate(format!("edge {} -> {}", meta[u.0].name, meta[v.0].name)));
            }
            parents[v.0].push(u);
            children[u.0].push(v);
        }

        // Kahn's algorithm; ties broken by declaration order.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            topo.push(NodeId(i));
            for c in &children[i] {
                indegree[c.0] -= 1;
                if indegree[c.0] == 0 {
                    ready.insert(c.0);
                }
            }
        }
        if topo.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
            return Err(Error::Cycle(meta[stuck].name.clone()));
        }

        Ok(Self { meta, index, edges, parents, children, topo })
    }

    pub fn empty() -> Self {
        Self::build::<&str>(&[], &[]).expect("empty graph is valid")
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        (0..self.meta.len()).map(NodeId)
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.meta[v.0].name
    }

    pub fn is_observed(&self, v: NodeId) -> bool {
        self.meta[v.0].observed
    }

    pub fn meta(&self, v: NodeId) -> &NodeMeta {
        &self.meta[v.0]
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.0 < self.meta.len()
    }

    pub(crate) fn check(&self, v: NodeId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::UnknownNode(v.to_string()))
        }
    }

    /// Parents in edge-declaration order.
    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v.0]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.0]
    }

    /// A topological order (parents before children, ties by declaration).
    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.children[from.0].contains(&to)
    }

    pub fn roots(&self) -> BTreeSet<NodeId> {
        self.nodes().filter(|v| self.parents[v.0].is_empty()).collect()
    }

    pub fn leaves(&self) -> BTreeSet<NodeId> {
        self.nodes().filter(|v| self.children[v.0].is_empty()).collect()
    }

    pub fn ancestors(&self, v: NodeId) -> BTreeSet<NodeId> {
        self.closure(std::slice::from_ref(&v), |u| self.parents(u))
    }

    pub fn descendants(&self, v: NodeId) -> BTreeSet<NodeId> {
        self.closure(std::slice::from_ref(&v), |u| self.children(u))
    }

    /// Ancestors of a set, excluding the set itself unless reachable.
    pub fn ancestors_of_set(&self, vs: &[NodeId]) -> BTreeSet<NodeId> {
        self.closure(vs, |u| self.parents(u))
    }

    fn closure<'a, F>(&'a self, start: &[NodeId], step: F) -> BTreeSet<NodeId>
    where
        F: Fn(NodeId) -> &'a [NodeId],
    {
        let mut out = BTreeSet::new();
        let mut stack: Vec<NodeId> = start.iter().flat_map(|&s| step(s).iter().copied()).collect();
        while let Some(u) = stack.pop() {
            if out.insert(u) {
                stack.extend_from_slice(step(u));
            }
        }
        out
    }

    pub fn relations(&self, v: NodeId) -> Result<Relations> {
        self.check(v)?;
        let ancestors = self.ancestors(v);
        let descendants = self.descendants(v);
        Ok(Relations {
            parents: self.parents(v).iter().copied().collect(),
            is_root: ancestors.is_empty(),
            is_leaf: descendants.is_empty(),
            ancestors,
            descendants,
        })
    }

    /// Same nodes, with every edge pointing into one of `targets` removed.
    pub fn without_incoming(&self, targets: &BTreeSet<NodeId>) -> Dag {
        let edges = self.edges.iter().copied().filter(|(_, to)| !targets.contains(to)).collect();
        Self::from_parts(self.meta.clone(), self.index.clone(), edges).expect("deleting edges keeps a DAG acyclic")
    }

    /// Returns a graph with one more node whose parents are `parents`.
    pub fn with_node(&self, name: &str, observed: bool, parents: &[NodeId]) -> Result<Dag> {
        if self.index.contains_key(name) {
            return Err(Error::Duplicate(format!("node `{name}`")));
        }
        for &p in parents {
            self.check(p)?;
        }
        let id = NodeId(self.meta.len());
        let mut meta = self.meta.clone();
        meta.push(NodeMeta { name: name.to_string(), observed });
        let mut index = self.index.clone();
        index.insert(name.to_string(), id);
        let mut edges = self.edges.clone();
        edges.extend(parents.iter().map(|&p| (p, id)));
        Self::from_parts(meta, index, edges)
    }

    /// Nodes connected to `v` ignoring edge orientation (including `v`).
    pub fn weak_component(&self, v: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([v]);
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            for &w in self.parents(u).iter().chain(self.children(u)) {
                if seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Edge list as name pairs, in declaration order.
    pub fn edge_names(&self) -> Vec<(String, String)> {
        self.edges.iter().map(|&(u, v)| (self.name(u).to_string(), self.name(v).to_string())).collect()
    }

    fn validate_query(&self, x: NodeId, y: NodeId, s: &BTreeSet<NodeId>) -> Result<()> {
        self.check(x)?;
        self.check(y)?;
        for &v in s {
            self.check(v)?;
        }
        if x == y {
            return Err(Error::Overlap(format!("x and y are both `{}`", self.name(x))));
        }
        if s.contains(&x) || s.contains(&y) {
            return Err(Error::Overlap("x or y belongs to the conditioning set".into()));
        }
        Ok(())
    }

    /// Decides whether `s` d-separates `x` and `y`.
    ///
    /// Runs a reachability search over (node, arrival direction) states, so
    /// paths are never enumerated. A collider lets the trail through when it
    /// lies in `s` or has a descendant in `s`; other nodes let it through only
    /// when they are outside `s`.
    pub fn is_d_separated(&self, x: NodeId, y: NodeId, s: &BTreeSet<NodeId>) -> Result<bool> {
        self.validate_query(x, y, s)?;
        let reach = self.d_connected_set(x, s, |_| false);
        Ok(!reach.0.contains(&y))
    }

    /// All nodes d-connected to `x` given `s`.
    pub fn d_connected(&self, x: NodeId, s: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        self.d_connected_set(x, s, |_| false).0
    }

    /// Nodes reachable from `x` by an active trail that visits a node for
    /// which `mark` holds (the start node included).
    pub fn d_connected_through<F>(&self, x: NodeId, s: &BTreeSet<NodeId>, mark: F) -> BTreeSet<NodeId>
    where
        F: Fn(NodeId) -> bool,
    {
        self.d_connected_set(x, s, mark).1
    }

    fn d_connected_set<F>(&self, x: NodeId, s: &BTreeSet<NodeId>, mark: F) -> (BTreeSet<NodeId>, BTreeSet<NodeId>)
    where
        F: Fn(NodeId) -> bool,
    {
        let n = self.len();
        // Nodes that are in s or have a descendant in s.
        let mut opens_collider = vec![false; n];
        let mut stack: Vec<NodeId> = s.iter().copied().collect();
        while let Some(u) = stack.pop() {
            if !std::mem::replace(&mut opens_collider[u.0], true) {
                stack.extend_from_slice(self.parents(u));
            }
        }

        // State: (node, arrived from a child?, trail touched a marked node?)
        let mut visited = vec![[[false; 2]; 2]; n];
        let mut reachable = BTreeSet::new();
        let mut reachable_marked = BTreeSet::new();
        let mut queue = VecDeque::new();
        let start_mark = mark(x);
        queue.push_back((x, true, start_mark));
        while let Some((v, from_child, marked)) = queue.pop_front() {
            let slot = &mut visited[v.0][from_child as usize][marked as usize];
            if *slot {
                continue;
            }
            *slot = true;
            let in_s = s.contains(&v);
            if !in_s && v != x {
                reachable.insert(v);
                if marked {
                    reachable_marked.insert(v);
                }
            }
            let push = |queue: &mut VecDeque<_>, w: NodeId, up: bool| {
                queue.push_back((w, up, marked || mark(w)));
            };
            if from_child {
                if !in_s {
                    for &p in self.parents(v) {
                        push(&mut queue, p, true);
                    }
                    for &c in self.children(v) {
                        push(&mut queue, c, false);
                    }
                }
            } else {
                if !in_s {
                    for &c in self.children(v) {
                        push(&mut queue, c, false);
                    }
                }
                if opens_collider[v.0] {
                    for &p in self.parents(v) {
                        push(&mut queue, p, true);
                    }
                }
            }
        }
        (reachable, reachable_marked)
    }

    /// Reference d-separation by exhaustive enumeration of simple paths.
    ///
    /// Exponential in the worst case; meant as an independent check on
    /// [`Dag::is_d_separated`] for small graphs.
    pub fn is_d_separated_by_paths(&self, x: NodeId, y: NodeId, s: &BTreeSet<NodeId>) -> Result<bool> {
        self.validate_query(x, y, s)?;
        let descendants: Vec<BTreeSet<NodeId>> = self.nodes().map(|v| self.descendants(v)).collect();
        let mut path = vec![x];
        let mut on_path = vec![false; self.len()];
        on_path[x.0] = true;
        let open = self.any_open_path(y, s, &descendants, &mut path, &mut on_path);
        Ok(!open)
    }

    fn any_open_path(
        &self,
        y: NodeId,
        s: &BTreeSet<NodeId>,
        descendants: &[BTreeSet<NodeId>],
        path: &mut Vec<NodeId>,
        on_path: &mut [bool],
    ) -> bool {
        let last = *path.last().unwrap();
        if last == y {
            return self.path_is_open(path, s, descendants);
        }
        let neighbours: Vec<NodeId> = self.parents(last).iter().chain(self.children(last)).copied().collect();
        for w in neighbours {
            if on_path[w.0] {
                continue;
            }
            path.push(w);
            on_path[w.0] = true;
            let found = self.any_open_path(y, s, descendants, path, on_path);
            on_path[w.0] = false;
            path.pop();
            if found {
                return true;
            }
        }
        false
    }

    fn path_is_open(&self, path: &[NodeId], s: &BTreeSet<NodeId>, descendants: &[BTreeSet<NodeId>]) -> bool {
        path.windows(3).all(|w| {
            let (prev, k, next) = (w[0], w[1], w[2]);
            let collider = self.has_edge(prev, k) && self.has_edge(next, k);
            if collider {
                s.contains(&k) || descendants[k.0].iter().any(|d| s.contains(d))
            } else {
                !s.contains(&k)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure3() -> Dag {
        let nodes: Vec<(&str, bool)> = ["V1", "V2", "V3", "V4", "V5", "V6"].iter().map(|n| (*n, true)).collect();
        let edges = [("V1", "V2"), ("V1", "V4"), ("V2", "V5"), ("V3", "V4"), ("V3", "V5"), ("V5", "V6")];
        Dag::build(&nodes, &edges).unwrap()
    }

    fn set(g: &Dag, names: &[&str]) -> BTreeSet<NodeId> {
        names.iter().map(|n| g.id(n).unwrap()).collect()
    }

    #[test]
    fn two_cycle_is_rejected() {
        let err = Dag::build(&[("V1", true), ("V2", true)], &[("V1", "V2"), ("V2", "V1")]).unwrap_err();
        assert!(matches!(err, Error::Cycle(_)));
    }

    #[test]
    fn self_edge_and_duplicates_are_rejected() {
        assert!(matches!(Dag::build(&[("a", true)], &[("a", "a")]), Err(Error::Cycle(_))));
        assert!(matches!(Dag::build(&[("a", true), ("b", true)], &[("a", "b"), ("a", "b")]), Err(Error::Duplicate(_))));
        assert!(matches!(Dag::build(&[("a", true), ("a", false)], &[]), Err(Error::Duplicate(_))));
        assert!(matches!(Dag::build(&[("a", true)], &[("a", "zz")]), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn empty_graph() {
        let g = Dag::empty();
        assert!(g.is_empty());
        assert!(g.roots().is_empty());
    }

    #[test]
    fn figure3_roots_and_leaves() {
        let g = figure3();
        assert_eq!(g.roots(), set(&g, &["V1", "V3"]));
        assert_eq!(g.leaves(), set(&g, &["V4", "V6"]));
        let r = g.relations(g.id("V5").unwrap()).unwrap();
        assert_eq!(r.parents, set(&g, &["V2", "V3"]));
        assert_eq!(r.descendants, set(&g, &["V6"]));
        assert!(!r.is_root && !r.is_leaf);
    }

    #[test]
    fn mediator_relations() {
        let g = Dag::build(&[("V1", true), ("V2", true), ("V3", true)], &[("V1", "V2"), ("V2", "V3")]).unwrap();
        let r = g.relations(g.id("V2").unwrap()).unwrap();
        assert_eq!(r.parents, set(&g, &["V1"]));
        assert_eq!(r.descendants, set(&g, &["V3"]));
    }

    #[test]
    fn isolated_node_is_root_and_leaf() {
        let g = Dag::build(&[("a", true), ("b", true)], &[]).unwrap();
        let r = g.relations(NodeId(0)).unwrap();
        assert!(r.parents.is_empty() && r.ancestors.is_empty() && r.descendants.is_empty());
        assert!(r.is_root && r.is_leaf);
        assert!(matches!(g.relations(NodeId(7)), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn figure3_separation_statements() {
        let g = figure3();
        let v = |n| g.id(n).unwrap();
        for check in [Dag::is_d_separated, Dag::is_d_separated_by_paths] {
            assert!(check(&g, v("V2"), v("V3"), &BTreeSet::new()).unwrap());
            assert!(!check(&g, v("V2"), v("V3"), &set(&g, &["V5"])).unwrap());
            assert!(!check(&g, v("V2"), v("V3"), &set(&g, &["V6"])).unwrap());
            assert!(check(&g, v("V2"), v("V4"), &set(&g, &["V1"])).unwrap());
            assert!(check(&g, v("V2"), v("V4"), &set(&g, &["V1", "V5", "V3"])).unwrap());
            assert!(check(&g, v("V2"), v("V4"), &set(&g, &["V1", "V6", "V3"])).unwrap());
            assert!(!check(&g, v("V2"), v("V4"), &BTreeSet::new()).unwrap());
        }
    }

    #[test]
    fn overlap_is_an_error() {
        let g = figure3();
        let v = |n| g.id(n).unwrap();
        assert!(matches!(g.is_d_separated(v("V2"), v("V3"), &set(&g, &["V2"])), Err(Error::Overlap(_))));
        assert!(matches!(g.is_d_separated(v("V2"), v("V2"), &BTreeSet::new()), Err(Error::Overlap(_))));
    }

    #[test]
    fn removing_incoming_edges() {
        let g = figure3();
        let m = g.without_incoming(&set(&g, &["V5"]));
        assert_eq!(m.parents(g.id("V5").unwrap()), &[] as &[NodeId]);
        assert_eq!(m.edges().len(), 4);
        assert_eq!(m.name(NodeId(4)), "V5");
    }

    #[test]
    fn trail_marking_sees_unobserved_confounder() {
        let g = Dag::build(&[("V1", false), ("V2", true), ("V3", true)], &[("V1", "V2"), ("V1", "V3"), ("V2", "V3")]).unwrap();
        let mutilated = g.without_incoming(&set(&g, &["V2"]));
        let hits = mutilated.d_connected_through(NodeId(2), &set(&g, &["V2"]), |v| !g.is_observed(v));
        assert!(hits.contains(&NodeId(0)));
    }
}
