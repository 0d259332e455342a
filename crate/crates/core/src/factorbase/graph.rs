use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Dependency DAG over string node ids. Edges run from prerequisite to
/// dependent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    /// Node to its direct prerequisites.
    prereqs: BTreeMap<String, BTreeSet<String>>,
}

impl DependencyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: &str) {
        self.prereqs.entry(node.to_string()).or_default();
    }

    /// Add `prereq -> dependent`, creating both endpoints.
    pub fn add_edge(&mut self, prereq: &str, dependent: &str) {
        self.add_node(prereq);
        self.prereqs.entry(dependent.to_string()).or_default().insert(prereq.to_string());
    }

    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut g = Self::new();
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn contains(&self, node: &str) -> bool {
        self.prereqs.contains_key(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.prereqs.keys().map(String::as_str)
    }

    pub fn prerequisites(&self, node: &str) -> impl Iterator<Item = &str> {
        self.prereqs.get(node).into_iter().flatten().map(String::as_str)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.prereqs
            .iter()
            .flat_map(|(d, ps)| ps.iter().map(move |p| (p.as_str(), d.as_str())))
    }

    /// Targets and all their transitive prerequisites.
    fn closure(&self, targets: &BTreeSet<String>) -> Result<BTreeSet<String>> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = Vec::new();
        for t in targets {
            if !self.contains(t) {
                return Err(Error::UnresolvedDependency(t.clone()));
            }
            stack.push(t);
        }
        while let Some(n) = stack.pop() {
            if seen.insert(n.to_string()) {
                stack.extend(self.prerequisites(n));
            }
        }
        Ok(seen)
    }

    /// Evaluation order for `targets` and their prerequisites: every node
    /// after all of its prerequisites, ties broken by ascending id.
    pub fn schedule(&self, targets: &BTreeSet<String>) -> Result<Vec<String>> {
        let nodes = self.closure(targets)?;
        self.kahn(&nodes)
    }

    /// Order over every node.
    pub fn schedule_all(&self) -> Result<Vec<String>> {
        let nodes: BTreeSet<String> = self.prereqs.keys().cloned().collect();
        self.kahn(&nodes)
    }

    fn kahn(&self, nodes: &BTreeSet<String>) -> Result<Vec<String>> {
        let mut pending: BTreeMap<&str, usize> = BTreeMap::new();
        let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for n in nodes {
            let ps: Vec<&str> = self.prerequisites(n).filter(|p| nodes.contains(*p)).collect();
            pending.insert(n, ps.len());
            for p in ps {
                dependents.entry(p).or_default().push(n);
            }
        }
        let mut ready: BTreeSet<&str> = pending.iter().filter(|(_, c)| **c == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n.to_string());
            for d in dependents.get(n).into_iter().flatten() {
                let c = pending.get_mut(d).expect("dependent is a node");
                *c -= 1;
                if *c == 0 {
                    ready.insert(d);
                }
            }
        }
        if order.len() < nodes.len() {
            let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            let left: BTreeSet<&str> = nodes.iter().map(String::as_str).filter(|n| !done.contains(n)).collect();
            return Err(Error::Cycle(self.cycle_within(&left)));
        }
        Ok(order)
    }

    /// One cycle among `left`, a set where every node has a prerequisite in
    /// `left`. Starts at the smallest id on the cycle and follows edges forward.
    fn cycle_within(&self, left: &BTreeSet<&str>) -> Vec<String> {
        let start = *left.first().expect("nonempty");
        let mut path: Vec<&str> = vec![start];
        let mut at: BTreeMap<&str, usize> = BTreeMap::from([(start, 0)]);
        loop {
            let cur = *path.last().expect("nonempty");
            let next = self
                .prerequisites(cur)
                .find(|p| left.contains(p))
                .expect("every remaining node waits on another remaining node");
            if let Some(&k) = at.get(next) {
                // walked backwards along prerequisites; reverse to edge order
                let mut cyc: Vec<&str> = path[k..].to_vec();
                cyc.reverse();
                let min = (0..cyc.len()).min_by_key(|&i| cyc[i]).expect("nonempty");
                cyc.rotate_left(min);
                return cyc.into_iter().map(str::to_string).collect();
            }
            at.insert(next, path.len());
            path.push(next);
        }
    }

    /// Whether `order` lists every node after all its prerequisites present in `order`.
    pub fn respects(&self, order: &[String]) -> bool {
        let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        order.iter().enumerate().all(|(i, n)| {
            self.prerequisites(n).all(|p| pos.get(p).is_some_and(|&j| j < i))
        })
    }
}
