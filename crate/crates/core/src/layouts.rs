//! Device layouts: a system lattice plus one auxiliary control qubit.

use serde::{Deserialize, Serialize};

use crate::error::{KqdError, Result};
use crate::lattice::{build_heavy_hex, heavy_hex_sites, Edge, EdgeColoredLattice};

/// Device graph whose last site is the control qubit. System sites keep their
/// device indices `0..n_system`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    device: EdgeColoredLattice,
    system: EdgeColoredLattice,
}

impl Layout {
    /// Build from a device lattice and the index of its control site. The
    /// control is moved to the last index; the other sites keep their order.
    pub fn new(device: &EdgeColoredLattice, control: usize) -> Result<Layout> {
        let n = device.n_sites();
        if control >= n {
            return Err(KqdError::Validation(format!(
                "control site {control} not in lattice of {n} sites"
            )));
        }
        if n < 2 {
            return Err(KqdError::Validation("layout needs at least one system site".into()));
        }
        let relabel = |s: usize| match s.cmp(&control) {
            std::cmp::Ordering::Less => s,
            std::cmp::Ordering::Equal => n - 1,
            std::cmp::Ordering::Greater => s - 1,
        };
        let edges: Vec<Edge> = device
            .edges()
            .iter()
            .map(|e| Edge { a: relabel(e.a), b: relabel(e.b), ..*e })
            .collect();
        let device = EdgeColoredLattice::new(n, edges)?;
        if device.degree(n - 1) == 0 {
            return Err(KqdError::Validation("control site has no neighbors".into()));
        }
        let system_sites: Vec<usize> = (0..n - 1).collect();
        let sub = device.induced_sublattice(&system_sites)?;
        if let Some(w) = sub.warning {
            return Err(KqdError::Validation(format!("system lattice invalid: {w}")));
        }
        Ok(Layout { device, system: sub.lattice })
    }

    pub fn device(&self) -> &EdgeColoredLattice {
        &self.device
    }

    pub fn system(&self) -> &EdgeColoredLattice {
        &self.system
    }

    pub fn n_system(&self) -> usize {
        self.system.n_sites()
    }

    pub fn control(&self) -> usize {
        self.system.n_sites()
    }

    pub fn to_file(&self) -> LayoutFile {
        LayoutFile { lattice: self.device.to_file(), control: self.control() }
    }
}

/// On-disk layout: device lattice plus control index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutFile {
    pub lattice: crate::lattice::LatticeFile,
    pub control: usize,
}

impl LayoutFile {
    pub fn to_layout(&self) -> Result<Layout> {
        Layout::new(&EdgeColoredLattice::from_file(&self.lattice)?, self.control)
    }
}

/// Built-in device layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetLayout {
    /// Two plaquettes (21 sites) with the control on a corner: 20 system
    /// sites.
    Hex21,
    /// 2x4 plaquettes minus a corner plaquette's own sites, control on a cut
    /// site: 56 system sites.
    Hex57,
    /// Five complete plaquettes plus a two-site tail and the control at its
    /// end: 44 system sites.
    Hex45,
    /// Five complete plaquettes and the control on a cut site: 42 system
    /// sites.
    Hex43,
    /// Nine consecutive sites of one plaquette ring with the control at an
    /// end: an open chain of 8 system sites.
    Ring9,
}

impl PresetLayout {
    pub const ALL: [PresetLayout; 5] =
        [PresetLayout::Hex21, PresetLayout::Hex57, PresetLayout::Hex45, PresetLayout::Hex43, PresetLayout::Ring9];

    pub fn name(self) -> &'static str {
        match self {
            PresetLayout::Hex21 => "hex-21",
            PresetLayout::Hex57 => "hex-57",
            PresetLayout::Hex45 => "hex-45",
            PresetLayout::Hex43 => "hex-43",
            PresetLayout::Ring9 => "ring-9",
        }
    }

    pub fn from_name(name: &str) -> Result<PresetLayout> {
        PresetLayout::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| KqdError::Validation(format!("unknown layout preset {name:?}")))
    }

    pub fn build(self) -> Layout {
        if self == PresetLayout::Ring9 {
            let ring = build_heavy_hex(1, 1);
            let adj = ring.adjacency();
            let mut path = vec![0usize];
            while path.len() < 9 {
                let last = path[path.len() - 1];
                let next = adj[last].iter().copied().filter(|s| !path.contains(s)).min().expect("ring continues");
                path.push(next);
            }
            let sub = ring.induced_sublattice(&path).expect("ring sites are in range");
            return Layout::new(&sub.lattice, 0).expect("ring path layout is valid");
        }
        let (rows, cols) = match self {
            PresetLayout::Hex21 => (1, 2),
            PresetLayout::Hex57 => (2, 4),
            PresetLayout::Hex45 | PresetLayout::Hex43 => (2, 3),
            PresetLayout::Ring9 => unreachable!(),
        };
        let full = build_heavy_hex(rows, cols);
        let sites = heavy_hex_sites(rows, cols);
        let row0 = |p: usize| sites.chain[0][&p];
        let row1 = |p: usize| sites.chain[1][&p];
        let bridge0 = sites.bridges[0][0].1;
        // Sites belonging only to the top-left plaquette.
        let corner = [row0(0), row0(1), row0(2), row0(3), row1(0), row1(1), bridge0];
        let (removed, control): (Vec<usize>, usize) = match self {
            PresetLayout::Hex21 => (Vec::new(), row0(0)),
            PresetLayout::Hex57 | PresetLayout::Hex43 => {
                (corner.iter().copied().filter(|&s| s != row1(1)).collect(), row1(1))
            }
            PresetLayout::Hex45 => (vec![row0(0), row0(1), row0(2), row0(3)], bridge0),
            PresetLayout::Ring9 => unreachable!(),
        };
        let keep: Vec<usize> = (0..full.n_sites()).filter(|s| !removed.contains(s)).collect();
        let sub = full.induced_sublattice(&keep).expect("preset sites are in range");
        let control = sub.original.iter().position(|&s| s == control).expect("control is kept");
        Layout::new(&sub.lattice, control).expect("preset layouts are valid")
    }
}

/// `k` pairwise non-adjacent particle sites spread over the system: the first
/// is the lowest-index system neighbor of the control, each next one
/// maximizes the distance to those already chosen (ties to the lower index).
pub fn spread_particles(layout: &Layout, k: usize) -> Result<Vec<usize>> {
    let sys = layout.system();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > sys.n_sites() {
        return Err(KqdError::Validation(format!("cannot place {k} particles on {} sites", sys.n_sites())));
    }
    let first = layout
        .device()
        .adjacency()[layout.control()]
        .iter()
        .copied()
        .filter(|&s| s < sys.n_sites())
        .min()
        .expect("control has a system neighbor");
    let mut chosen = vec![first];
    let mut nearest = sys.distances_from(first);
    while chosen.len() < k {
        let (best, dist) = (0..sys.n_sites())
            .filter(|s| !chosen.contains(s))
            .map(|s| (s, nearest[s]))
            .fold(None, |acc: Option<(usize, usize)>, (s, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((s, d)),
            })
            .expect("free sites remain");
        if dist < 2 {
            return Err(KqdError::Validation(format!(
                "no room for {k} non-adjacent particles on {} sites",
                sys.n_sites()
            )));
        }
        chosen.push(best);
        for (n, d) in nearest.iter_mut().zip(sys.distances_from(best)) {
            *n = (*n).min(d);
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sizes() {
        let sizes: Vec<(usize, usize)> = PresetLayout::ALL
            .iter()
            .map(|p| {
                let l = p.build();
                (l.device().n_sites(), l.n_system())
            })
            .collect();
        assert_eq!(sizes, vec![(21, 20), (57, 56), (45, 44), (43, 42), (9, 8)]);
        for p in PresetLayout::ALL {
            assert_eq!(PresetLayout::from_name(p.name()).unwrap(), p);
            assert!(p.build().device().max_degree() <= 3);
        }
    }

    #[test]
    fn five_plaquette_layouts_keep_five_hexes() {
        // 42 sites and 47 edges: 5 independent cycles in a connected graph.
        let l = PresetLayout::Hex43.build();
        let sys = l.system();
        assert_eq!(sys.edges().len() + 1 - sys.n_sites(), 5);
        let l = PresetLayout::Hex45.build();
        assert_eq!(l.system().edges().len() + 1 - l.system().n_sites(), 5);
    }

    #[test]
    fn particles_are_spread_and_sparse() {
        let l = PresetLayout::Hex21.build();
        for k in 1..=5 {
            let ps = spread_particles(&l, k).unwrap();
            assert_eq!(ps.len(), k);
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    assert!(l.system().edge_between(a, b).is_none());
                }
            }
            assert!(ps.iter().any(|&p| l.device().edge_between(p, l.control()).is_some()));
        }
        assert!(spread_particles(&l, 15).is_err());
    }
}
