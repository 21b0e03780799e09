//! Layered circuits: Trotterized Heisenberg evolution, controlled reference
//! state preparation from CX color layers, observable conjugation and
//! measurement-basis assignment.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{KqdError, Result};
use crate::lattice::{Color, EdgeColoredLattice};
use crate::layouts::Layout;
use crate::pauli::{Pauli, PauliString, SignedPauli};
use crate::sector_sim::{DenseState, SectorState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    Cx { control: usize, target: usize },
    /// `exp(-i angle (XX + YY + ZZ))` on sites `a`, `b`.
    Heisenberg { a: usize, b: usize, angle: f64 },
    H { qubit: usize },
    X { qubit: usize },
    /// `exp(-i angle Z / 2)`.
    Rz { qubit: usize, angle: f64 },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Cx { control, target } => vec![control, target],
            Gate::Heisenberg { a, b, .. } => vec![a, b],
            Gate::H { qubit } | Gate::X { qubit } | Gate::Rz { qubit, .. } => vec![qubit],
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cx { .. } | Gate::Heisenberg { .. })
    }

    /// Phase picked up by `|0...0>`, or `None` if the gate does not fix it.
    pub fn vacuum_phase(&self) -> Option<f64> {
        match *self {
            Gate::Cx { .. } => Some(0.0),
            Gate::Heisenberg { angle, .. } => Some(-angle),
            Gate::Rz { angle, .. } => Some(-angle / 2.0),
            Gate::H { .. } | Gate::X { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Color class for two-qubit layers; `None` for single-qubit layers.
    pub color: Option<Color>,
    pub gates: Vec<Gate>,
}

impl Layer {
    pub fn is_two_qubit(&self) -> bool {
        self.color.is_some()
    }

    /// Identifier used to attach noise models: `cx-R`, `heis-G`, `1q`.
    pub fn id(&self) -> String {
        match self.color {
            None => "1q".to_string(),
            Some(c) => {
                let kind = if self.gates.iter().any(|g| matches!(g, Gate::Cx { .. })) {
                    "cx"
                } else {
                    "heis"
                };
                format!("{kind}-{c}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredCircuit {
    pub n_qubits: usize,
    pub control_qubit: Option<usize>,
    pub layers: Vec<Layer>,
    /// `phi` with `C |0...0> = e^{i phi} |0...0>`; absent when some gate moves
    /// the vacuum.
    pub vacuum_phase: Option<f64>,
}

impl LayeredCircuit {
    pub fn new(n_qubits: usize, control_qubit: Option<usize>, layers: Vec<Layer>) -> Result<Self> {
        if n_qubits > 64 {
            return Err(KqdError::Validation("at most 64 qubits supported".into()));
        }
        if let Some(c) = control_qubit {
            if c >= n_qubits {
                return Err(KqdError::Validation(format!("control qubit {c} out of range")));
            }
        }
        for (li, layer) in layers.iter().enumerate() {
            let mut used = 0u64;
            for g in &layer.gates {
                if g.is_two_qubit() != layer.is_two_qubit() {
                    return Err(KqdError::Validation(format!(
                        "layer {li} mixes one- and two-qubit gates"
                    )));
                }
                let qs = g.qubits();
                if qs.len() == 2 && qs[0] == qs[1] {
                    return Err(KqdError::Validation(format!("layer {li}: gate on repeated qubit")));
                }
                for q in qs {
                    if q >= n_qubits {
                        return Err(KqdError::Validation(format!(
                            "layer {li}: qubit {q} out of range"
                        )));
                    }
                    if used >> q & 1 == 1 {
                        return Err(KqdError::Validation(format!(
                            "layer {li}: gates overlap on qubit {q}"
                        )));
                    }
                    used |= 1 << q;
                }
            }
        }
        let vacuum_phase = layers
            .iter()
            .flat_map(|l| &l.gates)
            .map(|g| g.vacuum_phase())
            .sum::<Option<f64>>();
        Ok(LayeredCircuit { n_qubits, control_qubit, layers, vacuum_phase })
    }

    /// Check that every two-qubit gate sits on an edge of its layer's color.
    pub fn check_colors(&self, lat: &EdgeColoredLattice) -> Result<()> {
        for (li, layer) in self.layers.iter().enumerate() {
            let Some(color) = layer.color else { continue };
            for g in &layer.gates {
                let qs = g.qubits();
                match lat.edge_between(qs[0], qs[1]) {
                    Some(e) if e.color == color => {}
                    _ => {
                        return Err(KqdError::Validation(format!(
                            "layer {li}: gate on ({}, {}) is not a {color} edge",
                            qs[0], qs[1]
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn two_qubit_depth(&self) -> usize {
        self.layers.iter().filter(|l| l.is_two_qubit()).count()
    }

    /// Sequential composition `other` after `self`.
    pub fn then(&self, other: &LayeredCircuit) -> Result<LayeredCircuit> {
        let n = self.n_qubits.max(other.n_qubits);
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        LayeredCircuit::new(n, self.control_qubit.or(other.control_qubit), layers)
    }

    pub fn repeat(&self, times: usize) -> LayeredCircuit {
        let layers = (0..times).flat_map(|_| self.layers.iter().cloned()).collect();
        LayeredCircuit {
            n_qubits: self.n_qubits,
            control_qubit: self.control_qubit,
            layers,
            vacuum_phase: self.vacuum_phase.map(|p| p * times as f64),
        }
    }

    pub fn apply_sector(&self, state: &mut SectorState) -> Result<()> {
        if self.n_qubits > state.basis().n_sites() {
            return Err(KqdError::Validation("circuit wider than the state".into()));
        }
        for g in self.layers.iter().flat_map(|l| &l.gates) {
            match *g {
                Gate::Heisenberg { a, b, angle } => state.apply_heisenberg_edge(a, b, angle)?,
                Gate::Rz { qubit, angle } => state.apply_rz(qubit, angle)?,
                other => {
                    return Err(KqdError::Validation(format!(
                        "gate {other:?} does not preserve particle number"
                    )))
                }
            }
        }
        state.check_norm()
    }

    pub fn apply_dense(&self, state: &mut DenseState) -> Result<()> {
        if self.n_qubits > state.n_qubits() {
            return Err(KqdError::Validation("circuit wider than the state".into()));
        }
        for layer in &self.layers {
            apply_layer_dense(layer, state);
        }
        state.check_norm()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<LayeredCircuit> {
        let raw: LayeredCircuit = serde_json::from_str(text)?;
        LayeredCircuit::new(raw.n_qubits, raw.control_qubit, raw.layers)
    }
}

pub fn apply_layer_dense(layer: &Layer, state: &mut DenseState) {
    for g in &layer.gates {
        match *g {
            Gate::Cx { control, target } => state.apply_cx(control, target),
            Gate::Heisenberg { a, b, angle } => state.apply_heisenberg_edge(a, b, angle),
            Gate::H { qubit } => state.apply_h(qubit),
            Gate::X { qubit } => state.apply_pauli(&PauliString::single(qubit, Pauli::X)),
            Gate::Rz { qubit, angle } => state.apply_rz(qubit, angle),
        }
    }
}

/// Phase acquired by `|0...0>`; errors if a gate does not fix the vacuum.
pub fn vacuum_phase(circ: &LayeredCircuit) -> Result<f64> {
    circ.vacuum_phase.ok_or_else(|| {
        KqdError::Validation("circuit contains a gate that does not fix |0...0>".into())
    })
}

/// Product-formula order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrotterOrder {
    First,
    Second,
}

impl TrotterOrder {
    pub fn from_int(order: u32) -> Result<TrotterOrder> {
        match order {
            1 => Ok(TrotterOrder::First),
            2 => Ok(TrotterOrder::Second),
            o => Err(KqdError::Validation(format!("Trotter order must be 1 or 2, got {o}"))),
        }
    }
}

/// Color-layer schedule of `steps` product-formula steps as (color, fraction of
/// the step length). Adjacent layers of equal color are merged.
pub fn trotter_schedule(steps: usize, order: TrotterOrder) -> Vec<(Color, f64)> {
    let step: &[(Color, f64)] = match order {
        TrotterOrder::First => &[(Color::R, 1.0), (Color::G, 1.0), (Color::B, 1.0)],
        TrotterOrder::Second => &[
            (Color::R, 0.5),
            (Color::G, 0.5),
            (Color::B, 1.0),
            (Color::G, 0.5),
            (Color::R, 0.5),
        ],
    };
    let mut out: Vec<(Color, f64)> = Vec::new();
    for _ in 0..steps {
        for &(c, f) in step {
            match out.last_mut() {
                Some((last, frac)) if *last == c => *frac += f,
                _ => out.push((c, f)),
            }
        }
    }
    out
}

/// Trotterized `exp(-i H dt)` over the color layers of `lat`.
pub fn build_trotter(
    lat: &EdgeColoredLattice,
    dt: f64,
    steps: usize,
    order: TrotterOrder,
) -> Result<LayeredCircuit> {
    if !dt.is_finite() {
        return Err(KqdError::Validation("dt must be finite".into()));
    }
    if steps == 0 {
        return Err(KqdError::Validation("steps must be positive".into()));
    }
    let tau = dt / steps as f64;
    let layers = trotter_schedule(steps, order)
        .into_iter()
        .map(|(color, frac)| Layer {
            color: Some(color),
            gates: lat
                .color_class(color)
                .map(|e| Gate::Heisenberg { a: e.a, b: e.b, angle: e.coupling * tau * frac })
                .collect(),
        })
        .collect();
    LayeredCircuit::new(lat.n_sites(), None, layers)
}

/// Reference bitstring: `k >= 1` particles on pairwise non-adjacent sites of
/// the system lattice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparationTarget {
    pub n_sites: usize,
    pub bits: u64,
}

impl PreparationTarget {
    pub fn new(lat: &EdgeColoredLattice, particles: &[usize]) -> Result<PreparationTarget> {
        let mut bits = 0u64;
        for &p in particles {
            if p >= lat.n_sites() {
                return Err(KqdError::Validation(format!("particle site {p} out of range")));
            }
            if bits >> p & 1 == 1 {
                return Err(KqdError::Validation(format!("particle site {p} repeated")));
            }
            bits |= 1 << p;
        }
        if bits == 0 {
            return Err(KqdError::Validation("at least one particle required".into()));
        }
        for e in lat.edges() {
            if bits >> e.a & 1 == 1 && bits >> e.b & 1 == 1 {
                return Err(KqdError::Validation(format!(
                    "particles on adjacent sites {} and {}",
                    e.a, e.b
                )));
            }
        }
        Ok(PreparationTarget { n_sites: lat.n_sites(), bits })
    }

    pub fn k(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn particles(&self) -> Vec<usize> {
        (0..self.n_sites).filter(|&q| self.bits >> q & 1 == 1).collect()
    }
}

/// `3 (ceil(d / 2) + 2)` with `d` the largest graph distance between any two
/// ones of the prepared device bitstring (control included).
pub fn prep_depth_bound(layout: &Layout, target: &PreparationTarget) -> usize {
    let ones: Vec<usize> = target
        .particles()
        .into_iter()
        .chain(std::iter::once(layout.control()))
        .collect();
    let d = ones
        .iter()
        .map(|&a| {
            let dist = layout.device().distances_from(a);
            ones.iter().map(|&b| dist[b]).max().unwrap_or(0)
        })
        .max()
        .unwrap_or(0);
    3 * (d.div_ceil(2) + 2)
}

type CxLayer = (Color, Vec<(usize, usize)>);

/// CX with no effect on a sparse pair: control on the 0 end, lower index for 00.
fn idle_cx(a: usize, b: usize, bits: u64) -> (usize, usize) {
    match (bits >> a & 1, bits >> b & 1) {
        (0, 1) => (a, b),
        (1, 0) => (b, a),
        (0, 0) => (a.min(b), a.max(b)),
        _ => unreachable!("idle CX requested on a 11 pair"),
    }
}

fn apply_cx_layer(bits: u64, layer: &CxLayer) -> u64 {
    let mut next = bits;
    for &(c, t) in &layer.1 {
        if bits >> c & 1 == 1 {
            next ^= 1 << t;
        }
    }
    next
}

/// Single pass over the colors clearing every 11 pair; returns the sparse
/// bitstring and the layers used.
fn sparsify(lat: &EdgeColoredLattice, s: u64, keep: usize) -> (u64, Vec<CxLayer>) {
    let mut bits = s;
    let mut layers = Vec::new();
    for color in Color::ALL {
        let busy = lat.color_class(color).any(|e| bits >> e.a & 1 == 1 && bits >> e.b & 1 == 1);
        if !busy {
            continue;
        }
        let mut gates = Vec::new();
        for e in lat.color_class(color) {
            if bits >> e.a & 1 == 1 && bits >> e.b & 1 == 1 {
                let (c, t) = if e.b == keep { (e.b, e.a) } else { (e.a, e.b) };
                gates.push((c, t));
            } else {
                gates.push(idle_cx(e.a, e.b, bits));
            }
        }
        let layer = (color, gates);
        bits = apply_cx_layer(bits, &layer);
        layers.push(layer);
    }
    (bits, layers)
}

/// Copy a single 1 from `root` along a BFS tree to the sparse target `sp`,
/// cycling through full color layers in `order`.
fn grow_from_root(
    lat: &EdgeColoredLattice,
    adj: &[Vec<usize>],
    sp: u64,
    root: usize,
    order: [Color; 3],
) -> Option<Vec<CxLayer>> {
    let n = lat.n_sites();
    let mut parent = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut bfs_order = Vec::with_capacity(n);
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        bfs_order.push(u);
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    // Prune to the subtree spanning the target ones.
    let mut in_tree = vec![false; n];
    for q in (0..n).filter(|&q| sp >> q & 1 == 1) {
        if !seen[q] {
            return None;
        }
        let mut v = q;
        while !in_tree[v] {
            in_tree[v] = true;
            if v == root {
                break;
            }
            v = parent[v];
        }
    }
    in_tree[root] = true;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &v in &bfs_order {
        if v != root && in_tree[v] {
            children[parent[v]].push(v);
        }
    }

    let in_sp = |q: usize| sp >> q & 1 == 1;
    let mut bits = 1u64 << root;
    let mut active = vec![false; n];
    active[root] = true;
    let mut layers = Vec::new();
    let max_layers = 3 * (n + 4);
    let mut step = 0;
    while bits != sp {
        if step >= max_layers {
            return None;
        }
        let color = order[step % 3];
        step += 1;
        let done = |q: usize, active: &[bool]| children[q].iter().all(|&c| active[c]);
        let mut gates = Vec::new();
        let mut newly_active = Vec::new();
        for e in lat.color_class(color) {
            let (a, b) = (e.a, e.b);
            let tree_edge = if in_tree[a] && in_tree[b] && parent[b] == a {
                Some((a, b))
            } else if in_tree[a] && in_tree[b] && parent[a] == b {
                Some((b, a))
            } else {
                None
            };
            let va = bits >> a & 1 == 1;
            let vb = bits >> b & 1 == 1;
            if let Some((u, v)) = tree_edge {
                if !active[v] && bits >> u & 1 == 1 {
                    gates.push((u, v));
                    newly_active.push(v);
                    continue;
                }
            }
            if va && vb {
                let reset = match tree_edge {
                    Some((u, v)) => {
                        if in_sp(u) {
                            (done(v, &active) && !in_sp(v)).then_some(v)
                        } else if done(u, &active) {
                            Some(u)
                        } else if !in_sp(v) && done(v, &active) {
                            Some(v)
                        } else {
                            None
                        }
                    }
                    None => [a, b]
                        .into_iter()
                        .find(|&q| !in_sp(q) && active[q] && done(q, &active)),
                };
                let t = reset?;
                let c = if t == a { b } else { a };
                gates.push((c, t));
            } else {
                gates.push(idle_cx(a, b, bits));
            }
        }
        let layer = (color, gates);
        bits = apply_cx_layer(bits, &layer);
        for v in newly_active {
            active[v] = true;
        }
        layers.push(layer);
    }
    Some(layers)
}

fn layer_changes_state(bits: u64, layer: &CxLayer) -> bool {
    layer.1.iter().any(|&(c, _)| bits >> c & 1 == 1)
}

/// Layers of the shortest-depth circuit found; the returned root carries the
/// initial single 1.
fn search_prep(lat: &EdgeColoredLattice, s_final: u64, keep: usize) -> Option<(usize, Vec<CxLayer>)> {
    let n = lat.n_sites();
    let adj = lat.adjacency();
    let (sp, reduction) = sparsify(lat, s_final, keep);
    let ones: Vec<usize> = (0..n).filter(|&q| sp >> q & 1 == 1).collect();
    let ecc: Vec<usize> = (0..n)
        .map(|r| {
            let d = lat.distances_from(r);
            ones.iter().map(|&q| d[q]).max().unwrap_or(0)
        })
        .collect();
    let best_ecc = *ecc.iter().min()?;
    let mut roots: Vec<usize> = (0..n).filter(|&r| ecc[r] <= best_ecc + 1).collect();
    roots.sort_by_key(|&r| (ecc[r], r));

    let orders = [
        [Color::R, Color::G, Color::B],
        [Color::R, Color::B, Color::G],
        [Color::G, Color::R, Color::B],
        [Color::G, Color::B, Color::R],
        [Color::B, Color::R, Color::G],
        [Color::B, Color::G, Color::R],
    ];
    let mut best: Option<(usize, Vec<CxLayer>)> = None;
    for &root in &roots {
        for order in orders {
            let Some(grown) = grow_from_root(lat, &adj, sp, root, order) else { continue };
            let mut bits = 1u64 << root;
            let mut layers = Vec::new();
            for layer in grown.into_iter().chain(reduction.iter().rev().cloned()) {
                if layer_changes_state(bits, &layer) {
                    bits = apply_cx_layer(bits, &layer);
                    layers.push(layer);
                }
            }
            if bits != s_final {
                continue;
            }
            if best.as_ref().is_none_or(|(_, b)| layers.len() < b.len()) {
                best = Some((root, layers));
            }
        }
    }
    best
}

/// CX-layer circuit that, preceded by a Hadamard on the returned root qubit,
/// prepares `(|0>_c |0^N> + |1>_c |s>) / sqrt 2` on the device.
///
/// The first layer holds the Hadamard. Two-qubit layers are full color layers
/// of the device lattice, idle pairs padded with CXs that have no effect.
pub fn synthesize_controlled_prep(layout: &Layout, target: &PreparationTarget) -> Result<LayeredCircuit> {
    if target.n_sites != layout.n_system() {
        return Err(KqdError::Validation("target width does not match the layout".into()));
    }
    PreparationTarget::new(layout.system(), &target.particles())?;
    let device = layout.device();
    let control = layout.control();
    let s_final = target.bits | (1 << control);

    let (root, cx_layers) = search_prep(device, s_final, control).ok_or_else(|| {
        KqdError::Synthesis("no CX layer sequence reaches the target (disconnected particles?)".into())
    })?;

    let mut bits = 1u64 << root;
    for layer in &cx_layers {
        bits = apply_cx_layer(bits, layer);
    }
    if bits != s_final {
        return Err(KqdError::Synthesis("synthesized layers miss the target bitstring".into()));
    }
    let mut layers = vec![Layer { color: None, gates: vec![Gate::H { qubit: root }] }];
    layers.extend(cx_layers.into_iter().map(|(color, gates)| Layer {
        color: Some(color),
        gates: gates.into_iter().map(|(control, target)| Gate::Cx { control, target }).collect(),
    }));
    let circ = LayeredCircuit::new(device.n_sites(), Some(control), layers)?;
    circ.check_colors(device)?;
    Ok(circ)
}

/// Conjugate `control_pauli (x) term` by the CXs from the control qubit to every
/// particle: `V O V` with `V = prod_p CX_{c,p}`.
///
/// The control occupies qubit index `target.n_sites`.
pub fn conjugate_observables(
    terms: &[PauliString],
    control_pauli: Pauli,
    target: &PreparationTarget,
) -> Result<Vec<SignedPauli>> {
    let control = target.n_sites;
    let particles = target.particles();
    terms
        .iter()
        .map(|term| {
            if term.support() & target.bits != 0
                && (term.support() & target.bits).count_ones() > 1
            {
                return Err(KqdError::Validation(format!(
                    "term {} touches two particles",
                    term.label(target.n_sites)
                )));
            }
            if term.support() >> control != 0 {
                return Err(KqdError::Validation("term acts on the control qubit".into()));
            }
            let mut p = *term;
            p.set(control, control_pauli);
            let mut out = SignedPauli::positive(p);
            for &q in &particles {
                out = out.conjugate_cx(control, q);
            }
            Ok(out)
        })
        .collect()
}

/// Observable measured after the open-controlled second preparation
/// `W = X_c V X_c`, which maps the ideal measurement of `control_pauli (x) term`
/// back onto the state before that preparation.
pub fn measured_observable(term: &PauliString, control_pauli: Pauli, target: &PreparationTarget) -> Result<SignedPauli> {
    let control = target.n_sites;
    let closed = conjugate_observables(&[*term], control_pauli, target)?[0];
    // X_c on both sides of V: flip for a Y/Z control Pauli before and after.
    let mut out = closed;
    if matches!(control_pauli, Pauli::Y | Pauli::Z) {
        out.negative = !out.negative;
    }
    Ok(out.conjugate_x(control))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    AllX,
    YControlXElsewhere,
    XControlParticlesZElsewhere,
    YControlXParticlesZElsewhere,
    YControlYOneParticle(usize),
    XControlYOneParticle(usize),
}

/// Per-qubit measurement assignment over the system qubits plus the control
/// (last index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBasis {
    pub kind: BasisKind,
    pub assignment: Vec<Pauli>,
    /// Measured observables diagonal in this basis.
    pub covered: Vec<SignedPauli>,
}

impl MeasurementBasis {
    /// A Pauli is measured by this basis when it agrees with the assignment
    /// wherever it is not the identity.
    pub fn diagonalizes(&self, p: &PauliString) -> bool {
        p.support_sites().all(|q| q < self.assignment.len() && p.get(q) == self.assignment[q])
    }

    pub fn as_pauli(&self) -> PauliString {
        let ops: Vec<(usize, Pauli)> = self.assignment.iter().copied().enumerate().collect();
        PauliString::from_ops(&ops)
    }
}

/// Hamiltonian terms measured through the Hadamard test: `XX` and `ZZ` on
/// every edge (the `YY` values equal the `XX` values for particle-number
/// eigenstates) plus the identity for the overlap.
pub fn measured_terms(lat: &EdgeColoredLattice) -> Vec<PauliString> {
    let mut terms = vec![PauliString::IDENTITY];
    for e in lat.edges() {
        for p in [Pauli::X, Pauli::Z] {
            terms.push(PauliString::from_ops(&[(e.a, p), (e.b, p)]));
        }
    }
    terms
}

/// All observables the Hadamard test needs, as measured after the second
/// controlled preparation: `(control Pauli, term, measured observable)`.
pub fn required_observables(
    lat: &EdgeColoredLattice,
    target: &PreparationTarget,
) -> Result<Vec<(Pauli, PauliString, SignedPauli)>> {
    let mut out = Vec::new();
    for cp in [Pauli::X, Pauli::Y] {
        for term in measured_terms(lat) {
            out.push((cp, term, measured_observable(&term, cp, target)?));
        }
    }
    Ok(out)
}

/// The `2 (k + 2)` measurement bases, each listing the required observables it
/// diagonalizes.
pub fn measurement_bases(lat: &EdgeColoredLattice, target: &PreparationTarget) -> Result<Vec<MeasurementBasis>> {
    PreparationTarget::new(lat, &target.particles())?;
    let n = target.n_sites;
    let control = n;
    let particles = target.particles();
    let make = |kind: BasisKind| {
        let mut a = vec![Pauli::Z; n + 1];
        let (ctrl, particle, rest, special): (Pauli, Pauli, Pauli, Option<usize>) = match kind {
            BasisKind::AllX => (Pauli::X, Pauli::X, Pauli::X, None),
            BasisKind::YControlXElsewhere => (Pauli::Y, Pauli::X, Pauli::X, None),
            BasisKind::XControlParticlesZElsewhere => (Pauli::X, Pauli::X, Pauli::Z, None),
            BasisKind::YControlXParticlesZElsewhere => (Pauli::Y, Pauli::X, Pauli::Z, None),
            BasisKind::YControlYOneParticle(p) => (Pauli::Y, Pauli::X, Pauli::Z, Some(p)),
            BasisKind::XControlYOneParticle(p) => (Pauli::X, Pauli::X, Pauli::Z, Some(p)),
        };
        for (q, slot) in a.iter_mut().enumerate().take(n) {
            *slot = if target.bits >> q & 1 == 1 { particle } else { rest };
        }
        if let Some(p) = special {
            a[p] = Pauli::Y;
        }
        a[control] = ctrl;
        a
    };
    let mut kinds = vec![
        BasisKind::AllX,
        BasisKind::YControlXElsewhere,
        BasisKind::XControlParticlesZElsewhere,
        BasisKind::YControlXParticlesZElsewhere,
    ];
    kinds.extend(particles.iter().map(|&p| BasisKind::YControlYOneParticle(p)));
    kinds.extend(particles.iter().map(|&p| BasisKind::XControlYOneParticle(p)));

    let required = required_observables(lat, target)?;
    let mut bases: Vec<MeasurementBasis> = kinds
        .into_iter()
        .map(|kind| MeasurementBasis { kind, assignment: make(kind), covered: Vec::new() })
        .collect();
    let mut distinct = BTreeSet::new();
    for (_, _, obs) in &required {
        if !distinct.insert(*obs) {
            continue;
        }
        for b in bases.iter_mut() {
            if b.diagonalizes(&obs.pauli) {
                b.covered.push(*obs);
            }
        }
    }
    Ok(bases)
}
