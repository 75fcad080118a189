use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Dependency edges over token positions. Adjacency edges `(i, i+1)` are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDependencyGraph {
    n: usize,
    edges: Vec<(usize, usize, String)>,
}

impl TokenDependencyGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, String)>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dependency graph needs at least one node"));
        }
        for (src, dst, _) in &edges {
            if *src >= n || *dst >= n {
                return Err(invalid(format!("edge ({src}, {dst}) outside {n} nodes")));
            }
            if src == dst {
                return Err(invalid(format!("self-edge on node {src}")));
            }
        }
        Ok(Self { n, edges })
    }

    /// Chain graph with no dependency edges.
    pub fn adjacency(n: usize) -> Result<Self> {
        Self::new(n, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &[(usize, usize, String)] {
        &self.edges
    }

    /// Precedents of `node` in the forward DAG: the previous token plus every
    /// dependency source to its left. Sorted, without duplicates.
    pub fn forward_precedents(&self, node: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self
            .edges
            .iter()
            .filter(|(s, d, _)| *d == node && *s < node)
            .map(|(s, _, _)| *s)
            .collect();
        if node > 0 {
            p.push(node - 1);
        }
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Precedents of `node` in the backward DAG: the next token plus every
    /// dependency source to its right.
    pub fn backward_precedents(&self, node: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self
            .edges
            .iter()
            .filter(|(s, d, _)| *d == node && *s > node)
            .map(|(s, _, _)| *s)
            .collect();
        if node + 1 < self.n {
            p.push(node + 1);
        }
        p.sort_unstable();
        p.dedup();
        p
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            edges: Vec<(usize, usize, String)>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        Self::new(raw.n, raw.edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_splits_by_direction() {
        let g = TokenDependencyGraph::new(
            4,
            vec![
                (0, 3, "dobj".into()),
                (3, 1, "nsubj".into()),
                (1, 2, "amod".into()),
            ],
        )
        .unwrap();
        assert_eq!(g.forward_precedents(3), vec![0, 2]);
        assert_eq!(g.forward_precedents(2), vec![1]);
        assert_eq!(g.forward_precedents(0), Vec::<usize>::new());
        assert_eq!(g.backward_precedents(1), vec![2, 3]);
        assert_eq!(g.backward_precedents(3), Vec::<usize>::new());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(TokenDependencyGraph::new(3, vec![(1, 1, "x".into())]).is_err());
        assert!(TokenDependencyGraph::new(3, vec![(0, 3, "x".into())]).is_err());
        assert!(TokenDependencyGraph::new(0, vec![]).is_err());
    }

    #[test]
    fn parses_json() {
        let g = TokenDependencyGraph::from_json(r#"{"n":3,"edges":[[2,0,"nsubj"]]}"#).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.backward_precedents(0), vec![1, 2]);
    }
}
