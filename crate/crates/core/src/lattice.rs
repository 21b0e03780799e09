//! Heavy-hex lattices, edge three-colorings and the Heisenberg Hamiltonian.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{KqdError, Result};
use crate::pauli::{Pauli, PauliString};

/// Edge color. Each color class is a matching and becomes one layer of
/// simultaneous two-qubit gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    R,
    G,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn index(self) -> usize {
        match self {
            Color::R => 0,
            Color::G => 1,
            Color::B => 2,
        }
    }

    pub fn from_index(i: usize) -> Color {
        Color::ALL[i % 3]
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Color::R => "R",
            Color::G => "G",
            Color::B => "B",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub coupling: f64,
    pub color: Color,
}

impl Edge {
    pub fn touches(&self, site: usize) -> bool {
        self.a == site || self.b == site
    }

    pub fn other(&self, site: usize) -> Option<usize> {
        if self.a == site {
            Some(self.b)
        } else if self.b == site {
            Some(self.a)
        } else {
            None
        }
    }
}

/// Qubit graph with couplings and a proper edge three-coloring.
///
/// Edges are stored with `a < b`, sorted. Construction validates the coloring
/// so every value of this type is a proper three-edge-colored simple graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeColoredLattice {
    n_sites: usize,
    edges: Vec<Edge>,
}

impl EdgeColoredLattice {
    pub fn new(n_sites: usize, edges: Vec<Edge>) -> Result<Self> {
        if n_sites == 0 {
            return Err(KqdError::Validation("lattice must have at least one site".into()));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for e in edges {
            if e.a == e.b {
                return Err(KqdError::Validation(format!("self-loop on site {}", e.a)));
            }
            if e.a >= n_sites || e.b >= n_sites {
                return Err(KqdError::Validation(format!(
                    "edge ({}, {}) out of range for {} sites",
                    e.a, e.b, n_sites
                )));
            }
            if !e.coupling.is_finite() {
                return Err(KqdError::Validation(format!(
                    "non-finite coupling on edge ({}, {})",
                    e.a, e.b
                )));
            }
            let (a, b) = if e.a < e.b { (e.a, e.b) } else { (e.b, e.a) };
            if !seen.insert((a, b)) {
                return Err(KqdError::Validation(format!("duplicate edge ({a}, {b})")));
            }
            normalized.push(Edge { a, b, ..e });
        }
        normalized.sort_by_key(|e| (e.a, e.b));
        let lat = EdgeColoredLattice { n_sites, edges: normalized };
        lat.check_coloring()?;
        Ok(lat)
    }

    fn check_coloring(&self) -> Result<()> {
        let mut used: Vec<[bool; 3]> = vec![[false; 3]; self.n_sites];
        for e in &self.edges {
            let c = e.color.index();
            for s in [e.a, e.b] {
                if used[s][c] {
                    return Err(KqdError::Validation(format!(
                        "improper coloring: site {s} has two {} edges",
                        e.color
                    )));
                }
                used[s][c] = true;
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn color_class(&self, color: Color) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.color == color)
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&Edge> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }

    pub fn degree(&self, site: usize) -> usize {
        self.edges.iter().filter(|e| e.touches(site)).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n_sites).map(|s| self.degree(s)).max().unwrap_or(0)
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_sites];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Breadth-first distances from `source`; `usize::MAX` for unreachable sites.
    pub fn distances_from(&self, source: usize) -> Vec<usize> {
        let adj = self.adjacency();
        bfs_distances(&adj, source)
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(0).iter().all(|&d| d != usize::MAX)
    }

    pub fn total_coupling(&self) -> f64 {
        self.edges.iter().map(|e| e.coupling).sum()
    }

    /// Subgraph induced by `sites`, renumbered in increasing original order.
    pub fn induced_sublattice(&self, sites: &[usize]) -> Result<Sublattice> {
        let set: BTreeSet<usize> = sites.iter().copied().collect();
        if set.is_empty() {
            return Err(KqdError::Validation("empty site set".into()));
        }
        if let Some(&bad) = set.iter().find(|&&s| s >= self.n_sites) {
            return Err(KqdError::Validation(format!(
                "site {bad} not in lattice of {} sites",
                self.n_sites
            )));
        }
        let original: Vec<usize> = set.iter().copied().collect();
        let new_index: BTreeMap<usize, usize> =
            original.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let edges = self
            .edges
            .iter()
            .filter_map(|e| {
                let a = *new_index.get(&e.a)?;
                let b = *new_index.get(&e.b)?;
                Some(Edge { a, b, ..*e })
            })
            .collect();
        let lattice = EdgeColoredLattice::new(original.len(), edges)?;
        let connected = lattice.is_connected();
        Ok(Sublattice {
            lattice,
            original,
            warning: if connected {
                None
            } else {
                Some("induced sublattice is disconnected".to_string())
            },
        })
    }

    /// Three terms `J XX`, `J YY`, `J ZZ` per edge, grouped by edge color.
    pub fn hamiltonian_terms(&self) -> Vec<(Color, Vec<PauliTerm>)> {
        Color::ALL
            .iter()
            .map(|&c| {
                let terms = self
                    .color_class(c)
                    .flat_map(|e| {
                        [Pauli::X, Pauli::Y, Pauli::Z].into_iter().map(move |p| PauliTerm {
                            coefficient: e.coupling,
                            ops: vec![(e.a, p), (e.b, p)],
                        })
                    })
                    .collect();
                (c, terms)
            })
            .collect()
    }

    /// Energy of a computational basis state: only `ZZ` terms contribute.
    pub fn basis_state_energy(&self, bits: u64) -> f64 {
        self.edges
            .iter()
            .map(|e| {
                let same = ((bits >> e.a) & 1) == ((bits >> e.b) & 1);
                if same {
                    e.coupling
                } else {
                    -e.coupling
                }
            })
            .sum()
    }

    pub fn to_file(&self) -> LatticeFile {
        LatticeFile {
            sites: (0..self.n_sites).collect(),
            edges: self.edges.iter().map(|e| (e.a, e.b, e.coupling, e.color)).collect(),
        }
    }

    pub fn from_file(file: &LatticeFile) -> Result<Self> {
        let n = file.sites.len();
        for (i, &s) in file.sites.iter().enumerate() {
            if s != i {
                return Err(KqdError::Validation(format!(
                    "site list must be 0..{n} in order, found {s} at position {i}"
                )));
            }
        }
        let edges = file
            .edges
            .iter()
            .map(|&(a, b, coupling, color)| Edge { a, b, coupling, color })
            .collect();
        EdgeColoredLattice::new(n, edges)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("lattice serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LatticeFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }
}

/// On-disk lattice: list of sites plus `[i, j, J, color]` records.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeFile {
    pub sites: Vec<usize>,
    pub edges: Vec<(usize, usize, f64, Color)>,
}

#[derive(Clone, Debug)]
pub struct Sublattice {
    pub lattice: EdgeColoredLattice,
    /// `original[new] = old` site index.
    pub original: Vec<usize>,
    pub warning: Option<String>,
}

/// Real-coefficient Pauli product on explicit sites.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub ops: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    pub fn to_pauli_string(&self) -> PauliString {
        PauliString::from_ops(&self.ops)
    }
}

pub(crate) fn bfs_distances(adj: &[Vec<usize>], source: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Site numbering of [`build_heavy_hex`]: `chain[r]` maps column to site in
/// chain row `r`; `bridges[g]` lists `(column, site)` for the bridges below
/// chain row `g`.
pub struct HeavyHexSites {
    pub chain: Vec<BTreeMap<usize, usize>>,
    pub bridges: Vec<Vec<(usize, usize)>>,
    pub n_sites: usize,
}

pub fn heavy_hex_sites(rows: usize, cols: usize) -> HeavyHexSites {
    assert!(rows >= 1 && cols >= 1, "heavy-hex needs at least one plaquette");
    let offset = |gap: usize| 2 * (gap % 2);
    // Column span of chain row r: union of the spans of its adjacent gaps.
    let span = |r: usize| {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for gap in [r.checked_sub(1), (r < rows).then_some(r)].into_iter().flatten() {
            lo = lo.min(offset(gap));
            hi = hi.max(offset(gap) + 4 * cols);
        }
        (lo, hi)
    };

    let mut next = 0usize;
    let mut chain: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(rows + 1);
    let mut bridges: Vec<Vec<(usize, usize)>> = Vec::with_capacity(rows);
    for r in 0..=rows {
        let (lo, hi) = span(r);
        let mut row = BTreeMap::new();
        for p in lo..=hi {
            row.insert(p, next);
            next += 1;
        }
        chain.push(row);
        if r < rows {
            let mut gap = Vec::new();
            for c in 0..=cols {
                gap.push((offset(r) + 4 * c, next));
                next += 1;
            }
            bridges.push(gap);
        }
    }
    HeavyHexSites { chain, bridges, n_sites: next }
}

/// Heavy-hex lattice of `rows x cols` hexagonal plaquettes with unit couplings.
///
/// Qubit rows are linear chains; consecutive rows are joined by bridge qubits
/// every fourth column, with the bridge offset alternating between 0 and 2.
/// Sites are numbered row-major: chain row 0, then the bridges below it, then
/// chain row 1, and so on.
///
/// Row edge `(p, p + 1)` in chain row `r` gets color `(p + r) mod 3`, and a
/// bridge edge touching chain site `p` of row `r` gets the one color not used
/// by the row edges at that site, `(p + r + 1) mod 3`. The two bridge edges of
/// a bridge qubit sit in rows of different parity and therefore differ.
pub fn build_heavy_hex(rows: usize, cols: usize) -> EdgeColoredLattice {
    let HeavyHexSites { chain, bridges, n_sites } = heavy_hex_sites(rows, cols);
    let row_color = |p: usize, r: usize| Color::from_index(p + r);
    let bridge_color = |p: usize, r: usize| Color::from_index(p + r + 1);
    let mut edges = Vec::new();
    for (r, row) in chain.iter().enumerate() {
        for (&p, &site) in row {
            if let Some(&right) = row.get(&(p + 1)) {
                edges.push(Edge { a: site, b: right, coupling: 1.0, color: row_color(p, r) });
            }
        }
    }
    for (gap, list) in bridges.iter().enumerate() {
        for &(p, bridge) in list {
            let upper = chain[gap][&p];
            let lower = chain[gap + 1][&p];
            edges.push(Edge { a: upper, b: bridge, coupling: 1.0, color: bridge_color(p, gap) });
            edges.push(Edge {
                a: bridge,
                b: lower,
                coupling: 1.0,
                color: bridge_color(p, gap + 1),
            });
        }
    }
    EdgeColoredLattice::new(n_sites, edges).expect("heavy-hex construction yields a proper coloring")
}

/// Open chain `0 - 1 - ... - (n-1)` with alternating colors.
pub fn build_chain(n: usize) -> EdgeColoredLattice {
    let edges = (0..n.saturating_sub(1))
        .map(|i| Edge {
            a: i,
            b: i + 1,
            coupling: 1.0,
            color: if i % 2 == 0 { Color::R } else { Color::G },
        })
        .collect();
    EdgeColoredLattice::new(n.max(1), edges).expect("chain coloring is proper")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_plaquette_has_twelve_sites_and_edges() {
        let lat = build_heavy_hex(1, 1);
        assert_eq!(lat.n_sites(), 12);
        assert_eq!(lat.edges().len(), 12);
        assert!(lat.is_connected());
        assert_eq!(lat.max_degree(), 2);
    }

    #[test]
    fn larger_lattices_stay_heavy_hex() {
        for rows in 1..=4 {
            for cols in 1..=4 {
                let lat = build_heavy_hex(rows, cols);
                assert!(lat.max_degree() <= 3, "{rows}x{cols}");
                assert!(lat.is_connected(), "{rows}x{cols}");
                let total: usize = Color::ALL.iter().map(|&c| lat.color_class(c).count()).sum();
                assert_eq!(total, lat.edges().len());
            }
        }
        // one row of two plaquettes: 9 + 9 chain sites and 3 bridges
        let lat = build_heavy_hex(1, 2);
        assert_eq!(lat.n_sites(), 21);
        assert_eq!(lat.edges().len(), 22);
    }

    #[test]
    fn full_subset_is_identity() {
        let lat = build_heavy_hex(2, 2);
        let all: Vec<usize> = (0..lat.n_sites()).collect();
        let sub = lat.induced_sublattice(&all).unwrap();
        assert_eq!(sub.lattice, lat);
        assert_eq!(sub.original, all);
        assert!(sub.warning.is_none());
    }

    #[test]
    fn adjacent_pair_gives_single_edge() {
        let lat = build_heavy_hex(1, 1);
        let e = lat.edges()[3];
        let sub = lat.induced_sublattice(&[e.b, e.a]).unwrap();
        assert_eq!(sub.lattice.n_sites(), 2);
        assert_eq!(sub.lattice.edges().len(), 1);
        assert_eq!(sub.lattice.edges()[0].color, e.color);
    }

    #[test]
    fn subset_errors_and_warnings() {
        let lat = build_heavy_hex(1, 1);
        assert!(lat.induced_sublattice(&[]).is_err());
        assert!(lat.induced_sublattice(&[0, 99]).is_err());
        let far = lat.induced_sublattice(&[0, 2]).unwrap();
        assert!(far.warning.is_some());
    }

    #[test]
    fn improper_coloring_rejected() {
        let edges = vec![
            Edge { a: 0, b: 1, coupling: 1.0, color: Color::R },
            Edge { a: 1, b: 2, coupling: 1.0, color: Color::R },
        ];
        assert!(EdgeColoredLattice::new(3, edges).is_err());
    }

    #[test]
    fn hamiltonian_terms_per_edge() {
        let lat = build_chain(2);
        let groups = lat.hamiltonian_terms();
        let terms: Vec<_> = groups.iter().flat_map(|(_, t)| t.iter()).collect();
        assert_eq!(terms.len(), 3);
        for (t, p) in terms.iter().zip([Pauli::X, Pauli::Y, Pauli::Z]) {
            assert_eq!(t.coefficient, 1.0);
            assert_eq!(t.ops, vec![(0, p), (1, p)]);
        }
        let hex = build_heavy_hex(1, 1);
        let count: usize = hex.hamiltonian_terms().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(count, 36);
        let empty = EdgeColoredLattice::new(3, vec![]).unwrap();
        assert!(empty.hamiltonian_terms().iter().all(|(_, t)| t.is_empty()));
    }

    #[test]
    fn json_round_trip() {
        let lat = build_heavy_hex(1, 2);
        let back = EdgeColoredLattice::from_json(&lat.to_json()).unwrap();
        assert_eq!(back, lat);
    }
}
