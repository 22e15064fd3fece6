use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Internal,
    Leaf,
}

/// Rooted DAG with IS-A edges (parent -> child).
///
/// Node ids are kept sorted so every iteration order, and therefore every
/// serialised artifact, is reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptDag {
    ids: Vec<String>,
    kinds: Vec<NodeKind>,
    index: HashMap<String, usize>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    root: usize,
    /// Nodes in topological order, root first.
    topo: Vec<usize>,
    /// Sorted leaf indices reachable from each node.
    spans: Vec<Vec<usize>>,
}

impl ConceptDag {
    /// Validates and assembles a DAG. Duplicate edges are merged.
    pub fn from_parts<I, E>(root: &str, nodes: I, edges: E) -> Result<Self>
    where
        I: IntoIterator<Item = (String, NodeKind)>,
        E: IntoIterator<Item = (String, String)>,
    {
        let mut kinds_by_id: BTreeMap<String, NodeKind> = BTreeMap::new();
        for (id, kind) in nodes {
            if id.is_empty() {
                return Err(Error::InvalidArgument("empty node id".into()));
            }
            if let Some(prev) = kinds_by_id.insert(id.clone(), kind) {
                if prev != kind {
                    return Err(Error::InvalidArgument(format!(
                        "node `{id}` declared both as leaf and internal"
                    )));
                }
            }
        }
        let ids: Vec<String> = kinds_by_id.keys().cloned().collect();
        let kinds: Vec<NodeKind> = kinds_by_id.values().copied().collect();
        let index: HashMap<String, usize> = ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();

        let root_idx = *index.get(root).ok_or_else(|| Error::UnknownNode(root.to_string()))?;

        let mut child_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        let mut parent_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ids.len()];
        for (p, c) in edges {
            let pi = *index.get(&p).ok_or_else(|| Error::UnknownNode(p.clone()))?;
            let ci = *index.get(&c).ok_or_else(|| Error::UnknownNode(c.clone()))?;
            if pi == ci {
                return Err(Error::Cycle(p));
            }
            child_sets[pi].insert(ci);
            parent_sets[ci].insert(pi);
        }
        let children: Vec<Vec<usize>> = child_sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let parents: Vec<Vec<usize>> = parent_sets.into_iter().map(|s| s.into_iter().collect()).collect();

        // Kahn's algorithm; smallest index first keeps the order deterministic.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..ids.len()).filter(|&i| indegree[i] == 0).collect();
        let roots: Vec<String> = queue.iter().map(|&i| ids[i].clone()).collect();
        let mut topo = Vec::with_capacity(ids.len());
        while let Some(n) = queue.pop_front() {
            topo.push(n);
            for &c in &children[n] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if topo.len() != ids.len() {
            let stuck = (0..ids.len()).find(|&i| indegree[i] > 0).unwrap_or(0);
            return Err(Error::Cycle(ids[stuck].clone()));
        }
        if roots.len() != 1 || roots[0] != root {
            return Err(Error::MultipleRoots(roots));
        }

        for (i, kind) in kinds.iter().enumerate() {
            match kind {
                NodeKind::Leaf if !children[i].is_empty() => {
                    return Err(Error::InvalidArgument(format!("leaf `{}` has children", ids[i])))
                }
                NodeKind::Internal if children[i].is_empty() => {
                    return Err(Error::InvalidArgument(format!(
                        "internal node `{}` has no children",
                        ids[i]
                    )))
                }
                _ => {}
            }
        }

        let mut spans: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
        for &n in topo.iter().rev() {
            if kinds[n] == NodeKind::Leaf {
                spans[n] = vec![n];
            } else {
                let mut acc = BTreeSet::new();
                for &c in &children[n] {
                    acc.extend(spans[c].iter().copied());
                }
                spans[n] = acc.into_iter().collect();
            }
        }

        Ok(ConceptDag {
            ids,
            kinds,
            index,
            children,
            parents,
            root: root_idx,
            topo,
            spans,
        })
    }

    pub fn root(&self) -> &str {
        &self.ids[self.root]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn kind(&self, id: &str) -> Option<NodeKind> {
        self.index.get(id).map(|&i| self.kinds[i])
    }

    /// All node ids in sorted order.
    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, NodeKind)> {
        self.ids.iter().map(String::as_str).zip(self.kinds.iter().copied())
    }

    pub fn leaves(&self) -> Vec<&str> {
        self.nodes()
            .filter(|(_, k)| *k == NodeKind::Leaf)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn internal_nodes(&self) -> Vec<&str> {
        self.nodes()
            .filter(|(_, k)| *k == NodeKind::Internal)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.spans[self.root].len()
    }

    pub fn children(&self, id: &str) -> Vec<&str> {
        self.lookup(id)
            .map(|i| self.children[i].iter().map(|&c| self.ids[c].as_str()).collect())
            .unwrap_or_default()
    }

    pub fn parents(&self, id: &str) -> Vec<&str> {
        self.lookup(id)
            .map(|i| self.parents[i].iter().map(|&p| self.ids[p].as_str()).collect())
            .unwrap_or_default()
    }

    /// Parent -> child pairs, sorted.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (p, cs) in self.children.iter().enumerate() {
            for &c in cs {
                out.push((self.ids[p].as_str(), self.ids[c].as_str()));
            }
        }
        out
    }

    /// Leaf ids reachable from `id`, sorted.
    pub fn span(&self, id: &str) -> Vec<&str> {
        self.lookup(id)
            .map(|i| self.spans[i].iter().map(|&l| self.ids[l].as_str()).collect())
            .unwrap_or_default()
    }

    pub fn span_len(&self, id: &str) -> usize {
        self.lookup(id).map(|i| self.spans[i].len()).unwrap_or(0)
    }

    /// All strict ancestors of `id`.
    pub fn ancestors(&self, id: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        let Some(start) = self.lookup(id) else {
            return out;
        };
        let mut stack = vec![start];
        let mut seen = vec![false; self.ids.len()];
        while let Some(n) = stack.pop() {
            for &p in &self.parents[n] {
                if !seen[p] {
                    seen[p] = true;
                    out.insert(self.ids[p].as_str());
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Node ids in topological order (root first).
    pub fn topological_order(&self) -> Vec<&str> {
        self.topo.iter().map(|&i| self.ids[i].as_str()).collect()
    }

    pub(crate) fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub(crate) fn id_at(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub(crate) fn kind_at(&self, i: usize) -> NodeKind {
        self.kinds[i]
    }

    pub(crate) fn children_at(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub(crate) fn root_index(&self) -> usize {
        self.root
    }

    /// Copy of the graph without `removed`, without nodes that become unreachable
    /// from the root, and with internal nodes left childless elided (cascading).
    ///
    /// Returns the new graph and the leaves that disappeared without being in
    /// `removed` themselves.
    pub(crate) fn without(&self, removed: &BTreeSet<usize>) -> Result<(ConceptDag, Vec<String>)> {
        if removed.contains(&self.root) {
            return Err(Error::RootRemoval(self.root().to_string()));
        }
        let n = self.ids.len();
        let mut alive: Vec<bool> = (0..n).map(|i| !removed.contains(&i)).collect();

        // reachability from the root through live nodes
        let mut reach = vec![false; n];
        reach[self.root] = true;
        for &u in &self.topo {
            if !reach[u] || !alive[u] {
                continue;
            }
            for &c in &self.children[u] {
                if alive[c] {
                    reach[c] = true;
                }
            }
        }
        for i in 0..n {
            alive[i] = alive[i] && reach[i];
        }

        // elide internal nodes whose live children are gone, bottom-up
        for &u in self.topo.iter().rev() {
            if alive[u] && self.kinds[u] == NodeKind::Internal && !self.children[u].iter().any(|&c| alive[c]) {
                alive[u] = false;
            }
        }
        if !alive[self.root] {
            return Err(Error::EmptySplit(format!(
                "no leaves remain under root `{}`",
                self.root()
            )));
        }

        let dropped: Vec<String> = (0..n)
            .filter(|&i| !alive[i] && !removed.contains(&i) && self.kinds[i] == NodeKind::Leaf)
            .map(|i| self.ids[i].clone())
            .collect();

        let nodes = (0..n)
            .filter(|&i| alive[i])
            .map(|i| (self.ids[i].clone(), self.kinds[i]));
        let mut edges = Vec::new();
        for p in 0..n {
            if !alive[p] {
                continue;
            }
            for &c in &self.children[p] {
                if alive[c] {
                    edges.push((self.ids[p].clone(), self.ids[c].clone()));
                }
            }
        }
        let dag = ConceptDag::from_parts(self.root(), nodes, edges)?;
        Ok((dag, dropped))
    }

    /// Keeps only the listed leaves (plus everything needed to reach them).
    pub fn restrict_to_leaves<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Result<ConceptDag> {
        let keep: BTreeSet<usize> = keep.into_iter().filter_map(|w| self.lookup(w)).collect();
        let removed: BTreeSet<usize> = (0..self.ids.len())
            .filter(|&i| self.kinds[i] == NodeKind::Leaf && !keep.contains(&i))
            .collect();
        self.without(&removed).map(|(d, _)| d)
    }
}
