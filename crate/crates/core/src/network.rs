//! Undirected weighted network topology with an oriented incidence matrix
//! and a spanning-tree cycle basis.
//!
//! Edges are stored in canonical form: each pair `(i, j)` with `i < j`,
//! sorted lexicographically, and oriented `i -> j`. The oriented incidence
//! matrix `B` has `+1` at the source and `-1` at the sink of every edge.
//! The cycle basis is built from the fundamental cycles of a BFS spanning
//! tree rooted at node 0, so it is deterministic for a given edge list.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("node index {0} out of range (n = {1})")]
    NodeOutOfRange(usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("nonpositive weight {weight} on edge ({i}, {j})")]
    NonpositiveWeight { i: usize, j: usize, weight: f64 },
    #[error("graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<usize>>),
    #[error("unknown edge id {0} (m = {1})")]
    UnknownEdge(usize, usize),
}

/// One transmission line: canonical endpoints `i < j` and a positive
/// coupling weight `a = E_i E_j |y_ij|` in MW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Undirected weighted graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    n: usize,
    edges: Vec<Edge>,
}

impl PowerNetwork {
    /// Builds a network from raw `(i, j, weight)` line data. Endpoints may be
    /// given in either order; they are canonicalized to `i < j` and sorted.
    pub fn new(n: usize, lines: &[(usize, usize, f64)]) -> Result<Self, NetworkError> {
        let mut edges = Vec::with_capacity(lines.len());
        for &(a, b, w) in lines {
            if a >= n {
                return Err(NetworkError::NodeOutOfRange(a, n));
            }
            if b >= n {
                return Err(NetworkError::NodeOutOfRange(b, n));
            }
            if a == b {
                return Err(NetworkError::SelfLoop(a));
            }
            if w <= 0.0 {
                return Err(NetworkError::NonpositiveWeight {
                    i: a.min(b),
                    j: a.max(b),
                    weight: w,
                });
            }
            edges.push(Edge {
                i: a.min(b),
                j: a.max(b),
                weight: w,
            });
        }
        edges.sort_by_key(|e| (e.i, e.j));
        for w in edges.windows(2) {
            if w[0].i == w[1].i && w[0].j == w[1].j {
                return Err(NetworkError::DuplicateEdge(w[0].i, w[0].j));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Canonical index of the edge `{a, b}`, if present.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = (a.min(b), a.max(b));
        self.edges.iter().position(|e| e.i == i && e.j == j)
    }

    /// Oriented node-edge incidence matrix `B` (`n x m`): column `e` has
    /// `+1` at its source `i` and `-1` at its sink `j`.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.edges.len());
        for (e, edge) in self.edges.iter().enumerate() {
            b[(edge.i, e)] = 1.0;
            b[(edge.j, e)] = -1.0;
        }
        b
    }

    /// Partition of the nodes by reachability, each component sorted,
    /// components ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut comps = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }

    /// Fundamental-cycle basis of a BFS spanning tree rooted at node 0.
    /// Neighbors are visited in canonical edge order, so the basis is
    /// deterministic. Errors on disconnected graphs.
    pub fn cycle_basis(&self) -> Result<CycleBasis, NetworkError> {
        let comps = self.connected_components();
        if comps.len() > 1 {
            return Err(NetworkError::Disconnected(comps));
        }
        let adj = self.adjacency();
        // BFS tree: parent node and connecting edge id per node.
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.n];
        let mut depth = vec![0usize; self.n];
        let mut visited = vec![false; self.n];
        let mut tree_edge = vec![false; self.edges.len()];
        if self.n > 0 {
            visited[0] = true;
            let mut queue = std::collections::VecDeque::from([0usize]);
            while let Some(u) = queue.pop_front() {
                for &(v, e) in &adj[u] {
                    if !visited[v] {
                        visited[v] = true;
                        parent[v] = Some((u, e));
                        depth[v] = depth[u] + 1;
                        tree_edge[e] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        let mut cycles = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if tree_edge[e] {
                continue;
            }
            // The chord is traversed along its orientation i -> j, then the
            // tree path walks from j back to i.
            let mut vec = vec![0.0f64; self.edges.len()];
            vec[e] = 1.0;
            let (mut a, mut b) = (edge.j, edge.i);
            // Walk both endpoints up to their lowest common ancestor. Signs
            // follow the traversal direction against each edge orientation.
            while a != b {
                if depth[a] >= depth[b] {
                    let (pa, pe) = parent[a].expect("non-root has a parent");
                    // traversed a -> pa
                    vec[pe] += if self.edges[pe].i == a { 1.0 } else { -1.0 };
                    a = pa;
                } else {
                    let (pb, pe) = parent[b].expect("non-root has a parent");
                    // this leg is traversed in reverse: pb -> b
                    vec[pe] += if self.edges[pe].i == pb { 1.0 } else { -1.0 };
                    b = pb;
                }
            }
            cycles.push(vec);
        }
        Ok(CycleBasis { cycles })
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.i].push((edge.j, e));
            adj[edge.j].push((edge.i, e));
        }
        adj
    }

    /// New network with the given edges removed; node set unchanged.
    pub fn without_edges(&self, edge_ids: &[usize]) -> Result<Self, NetworkError> {
        for &e in edge_ids {
            if e >= self.edges.len() {
                return Err(NetworkError::UnknownEdge(e, self.edges.len()));
            }
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(e, _)| !edge_ids.contains(e))
            .map(|(_, edge)| *edge)
            .collect();
        Ok(Self { n: self.n, edges })
    }
}

/// Signed cycle-edge incidence vectors of the fundamental cycles, stacked
/// into the `(m - n + 1) x m` matrix `C` with `C B^T = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleBasis {
    cycles: Vec<Vec<f64>>,
}

impl CycleBasis {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn cycles(&self) -> &[Vec<f64>] {
        &self.cycles
    }

    /// The stacked cycle-edge incidence matrix.
    pub fn matrix(&self, edge_count: usize) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.cycles.len(), edge_count);
        for (r, cyc) in self.cycles.iter().enumerate() {
            for (e, &v) in cyc.iter().enumerate() {
                c[(r, e)] = v;
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> PowerNetwork {
        PowerNetwork::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn triangle_builds_canonical() {
        let net = triangle();
        assert_eq!(net.edge_count(), 3);
        assert_eq!(
            net.edges().iter().map(|e| (e.i, e.j)).collect::<Vec<_>>(),
            vec![(0, 1), (0, 2), (1, 2)]
        );
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            PowerNetwork::new(3, &[(1, 1, 1.0)]),
            Err(NetworkError::SelfLoop(1))
        ));
        assert!(matches!(
            PowerNetwork::new(3, &[(0, 1, 1.0), (1, 0, 2.0)]),
            Err(NetworkError::DuplicateEdge(0, 1))
        ));
        assert!(matches!(
            PowerNetwork::new(3, &[(0, 1, -2.0)]),
            Err(NetworkError::NonpositiveWeight { .. })
        ));
        assert!(matches!(
            PowerNetwork::new(3, &[(0, 5, 1.0)]),
            Err(NetworkError::NodeOutOfRange(5, 3))
        ));
    }

    #[test]
    fn incidence_columns_sum_to_zero() {
        let net = triangle();
        let b = net.incidence_matrix();
        for e in 0..3 {
            let col = b.column(e);
            assert_eq!(col.iter().sum::<f64>(), 0.0);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
        }
    }

    #[test]
    fn single_edge_incidence() {
        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        let b = net.incidence_matrix();
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(1, 0)], -1.0);
    }

    #[test]
    fn triangle_cycle_basis() {
        let net = triangle();
        let basis = net.cycle_basis().unwrap();
        assert_eq!(basis.len(), 1);
        let c = basis.matrix(3);
        let b = net.incidence_matrix();
        let prod = &c * b.transpose();
        assert!(prod.iter().all(|v| v.abs() < 1e-12));
        // up to global sign the unique cycle is (+1, -1, +1) over edges
        // (0,1), (0,2), (1,2)
        let row: Vec<f64> = c.row(0).iter().copied().collect();
        assert!(row.iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn tree_has_empty_basis() {
        let net = PowerNetwork::new(2, &[(0, 1, 1.0)]).unwrap();
        assert!(net.cycle_basis().unwrap().is_empty());
    }

    #[test]
    fn disconnected_basis_errors() {
        let net = PowerNetwork::new(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        match net.cycle_basis() {
            Err(NetworkError::Disconnected(comps)) => {
                assert_eq!(comps, vec![vec![0, 1], vec![2, 3]])
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn components_of_empty_edge_set() {
        let net = PowerNetwork::new(3, &[]).unwrap();
        assert_eq!(net.connected_components().len(), 3);
    }

    #[test]
    fn without_edges_checks_ids() {
        let net = triangle();
        assert!(matches!(
            net.without_edges(&[7]),
            Err(NetworkError::UnknownEdge(7, 3))
        ));
        let cut = net.without_edges(&[0]).unwrap();
        assert_eq!(cut.edge_count(), 2);
        assert_eq!(cut.node_count(), 3);
    }
}
