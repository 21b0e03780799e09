use std::collections::VecDeque;

use kqd::circuits::*;
use kqd::krylov::*;
use kqd::lattice::*;
use kqd::layouts::Layout;
use kqd::linalg::{hermitian_eigen, unitary_evolution};
use kqd::noise::*;
use kqd::pauli::{Pauli, PauliString, SignedPauli};
use kqd::rng::task_rng;
use kqd::sector_sim::*;
use kqd::solver::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Connected induced subgraph of `size` sites grown from a random seed site.
fn random_subgraph(parent: &EdgeColoredLattice, size: usize, rng: &mut ChaCha8Rng) -> Sublattice {
    let adj = parent.adjacency();
    let start = rng.random_range(0..parent.n_sites());
    let mut chosen = vec![start];
    let mut frontier: Vec<usize> = adj[start].clone();
    while chosen.len() < size && !frontier.is_empty() {
        let pick = frontier.swap_remove(rng.random_range(0..frontier.len()));
        if chosen.contains(&pick) {
            continue;
        }
        chosen.push(pick);
        frontier.extend(adj[pick].iter().copied().filter(|s| !chosen.contains(s)));
    }
    parent.induced_sublattice(&chosen).unwrap()
}

/// Random non-adjacent particle set of size at most `k` on `lat`.
fn random_particles(lat: &EdgeColoredLattice, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sites: Vec<usize> = (0..lat.n_sites()).collect();
    sites.shuffle(rng);
    let mut out: Vec<usize> = Vec::new();
    for s in sites {
        if out.len() < k && out.iter().all(|&p| lat.edge_between(p, s).is_none()) {
            out.push(s);
        }
    }
    out.sort_unstable();
    out
}

fn bfs(lat: &EdgeColoredLattice, source: usize) -> Vec<usize> {
    let adj = lat.adjacency();
    let mut dist = vec![usize::MAX; lat.n_sites()];
    dist[source] = 0;
    let mut q = VecDeque::from([source]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Full 2^n Hamiltonian assembled term by term.
fn dense_hamiltonian(lat: &EdgeColoredLattice) -> DMatrix<Complex64> {
    let dim = 1usize << lat.n_sites();
    let mut h = DMatrix::zeros(dim, dim);
    for (_, terms) in lat.hamiltonian_terms() {
        for t in terms {
            let p = t.to_pauli_string();
            for b in 0..dim {
                let (out, phase) = p.apply_to_basis(b as u64);
                h[(out as usize, b)] += phase * t.coefficient;
            }
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_unrank_bijection(n in 1usize..=24, kf in 0.0f64..1.0, seed in any::<u64>()) {
        let k = ((n as f64) * kf).round() as usize;
        let basis = SectorBasis::new(n, k).unwrap();
        prop_assert_eq!(basis.dim() as u64, binomial(n, k));
        let mut rng = task_rng(seed, 0);
        for _ in 0..50 {
            let i = rng.random_range(0..basis.dim());
            let bits = basis.unrank(i);
            prop_assert_eq!(bits.count_ones() as usize, k);
            prop_assert!(bits >> n == 0);
            prop_assert_eq!(basis.rank(bits), i);
        }
    }

    #[test]
    fn coloring_is_a_partition_into_matchings(rows in 1usize..=3, cols in 1usize..=3, size in 2usize..=30, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 1);
        let sub = random_subgraph(&build_heavy_hex(rows, cols), size, &mut rng);
        let lat = &sub.lattice;
        let mut seen = 0;
        for c in Color::ALL {
            let mut touched = vec![false; lat.n_sites()];
            for e in lat.color_class(c) {
                prop_assert!(!touched[e.a] && !touched[e.b]);
                touched[e.a] = true;
                touched[e.b] = true;
                seen += 1;
            }
        }
        prop_assert_eq!(seen, lat.edges().len());
    }

    #[test]
    fn hamiltonian_hermitian_and_conserves_particles(size in 2usize..=10, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 2);
        let sub = random_subgraph(&build_heavy_hex(1, 2), size, &mut rng);
        let h = dense_hamiltonian(&sub.lattice);
        prop_assert!((&h - h.adjoint()).norm() <= 1e-12);
        let n = sub.lattice.n_sites();
        let zsum = DMatrix::from_fn(1 << n, 1 << n, |i, j| {
            if i == j { Complex64::new(n as f64 - 2.0 * i.count_ones() as f64, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        prop_assert!((&h * &zsum - &zsum * &h).norm() <= 1e-12);
    }

    #[test]
    fn sector_and_dense_backends_agree(size in 2usize..=10, kf in 0.0f64..1.0, dt in 0.01f64..1.5, steps in 1usize..=3, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 3);
        let sub = random_subgraph(&build_heavy_hex(1, 2), size, &mut rng);
        let lat = &sub.lattice;
        let n = lat.n_sites();
        let k = ((n as f64) * kf).round() as usize;
        let basis = SectorBasis::new(n, k).unwrap();
        let start = basis.unrank(rng.random_range(0..basis.dim()));
        let circ = build_trotter(lat, dt, steps, TrotterOrder::Second).unwrap();
        let mut sector = SectorState::basis_state(basis.clone(), start).unwrap();
        circ.apply_sector(&mut sector).unwrap();
        prop_assert!((sector.norm() - 1.0).abs() < 1e-12);
        prop_assert_eq!(sector.amplitudes().len(), basis.dim());
        let mut dense = DenseState::basis_state(n, start).unwrap();
        circ.apply_dense(&mut dense).unwrap();
        for (b, a) in dense.amplitudes().iter().enumerate() {
            let want = if (b as u64).count_ones() as usize == k {
                sector.amplitudes()[basis.rank(b as u64)]
            } else {
                Complex64::new(0.0, 0.0)
            };
            prop_assert!((a - want).norm() < 1e-12);
        }
    }

    #[test]
    fn controlled_prep_is_exact_and_shallow(size in 3usize..=13, k in 1usize..=4, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 4);
        let sub = random_subgraph(&build_heavy_hex(2, 2), size, &mut rng);
        // Any site whose removal leaves the system connected can be the control.
        let mut sites: Vec<usize> = (0..sub.lattice.n_sites()).collect();
        sites.shuffle(&mut rng);
        let layout = sites.into_iter().find_map(|c| Layout::new(&sub.lattice, c).ok()).unwrap();
        let particles = random_particles(layout.system(), k, &mut rng);
        prop_assume!(!particles.is_empty());
        let target = PreparationTarget::new(layout.system(), &particles).unwrap();
        let circ = synthesize_controlled_prep(&layout, &target).unwrap();
        let n = layout.device().n_sites();
        let mut state = DenseState::zero(n).unwrap();
        circ.apply_dense(&mut state).unwrap();
        let s = target.bits | (1 << layout.control());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (b, a) in state.amplitudes().iter().enumerate() {
            let want = if b == 0 || b as u64 == s { h } else { 0.0 };
            prop_assert!((a - Complex64::new(want, 0.0)).norm() < 1e-12);
        }
        // Farthest pair among the ones of the prepared bitstring.
        let ones: Vec<usize> = (0..n).filter(|q| s >> q & 1 == 1).collect();
        let d = ones.iter().map(|&a| { let dist = bfs(layout.device(), a); ones.iter().map(|&b| dist[b]).max().unwrap() }).max().unwrap();
        prop_assert!(circ.two_qubit_depth() <= 3 * (d.div_ceil(2) + 2));
    }

    #[test]
    fn conjugation_twice_is_identity(n in 2usize..=12, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 5);
        let lat = build_chain(n);
        let particles = random_particles(&lat, n, &mut rng);
        let mut p = PauliString::IDENTITY;
        for q in 0..=n {
            p.set(q, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..4)]);
        }
        let mut once = SignedPauli::positive(p);
        for &q in &particles {
            once = once.conjugate_cx(n, q);
        }
        let mut twice = once;
        for &q in &particles {
            twice = twice.conjugate_cx(n, q);
        }
        prop_assert_eq!(twice, SignedPauli::positive(p));
    }

    #[test]
    fn retained_dimension_shrinks_with_threshold(size in 3usize..=10, dt in 0.05f64..1.0, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 6);
        let sub = random_subgraph(&build_heavy_hex(1, 2), size, &mut rng);
        let particles = random_particles(&sub.lattice, 2, &mut rng);
        let target = PreparationTarget::new(&sub.lattice, &particles).unwrap();
        let pair = exact_elements(&sub.lattice, &target, dt, 2, 8).unwrap();
        let mut last = usize::MAX;
        for e in -10..=0 {
            let kept = solve_regularized(&pair, 10f64.powi(e)).map(|r| r.retained).unwrap_or(0);
            prop_assert!(kept <= last);
            last = kept;
        }
    }

    #[test]
    fn scaling_pair_and_threshold_leaves_energy(size in 3usize..=10, dt in 0.05f64..1.0, scale in 0.01f64..100.0, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 7);
        let sub = random_subgraph(&build_heavy_hex(1, 2), size, &mut rng);
        let particles = random_particles(&sub.lattice, 2, &mut rng);
        let target = PreparationTarget::new(&sub.lattice, &particles).unwrap();
        let pair = exact_elements(&sub.lattice, &target, dt, 2, 6).unwrap();
        let mut scaled = pair.clone();
        scaled.h *= Complex64::new(scale, 0.0);
        scaled.s *= Complex64::new(scale, 0.0);
        let eps = 1e-3;
        let a = solve_regularized(&pair, eps).unwrap();
        let b = solve_regularized(&scaled, eps * scale).unwrap();
        prop_assert_eq!(a.retained, b.retained);
        prop_assert!((a.energy - b.energy).abs() <= 1e-8 * (1.0 + a.energy.abs()));
    }

    #[test]
    fn exact_pairs_are_psd_and_above_ground(size in 3usize..=10, dt in 0.2f64..1.0, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 8);
        let sub = random_subgraph(&build_heavy_hex(1, 2), size, &mut rng);
        let particles = random_particles(&sub.lattice, 2, &mut rng);
        let target = PreparationTarget::new(&sub.lattice, &particles).unwrap();
        let pair = exact_elements_hermitian(&sub.lattice, &target, dt, 3, 6).unwrap();
        let (ev, _) = hermitian_eigen(&pair.s);
        prop_assert!(ev[0] >= -1e-10);
        let ground = sector_ground_energy(&sub.lattice, target.k()).unwrap();
        let curve = energy_curve(&pair, 1e-8);
        // By interlacing, nothing is discarded at any D' when the full
        // overlap clears the largest threshold; the subspaces are then nested
        // and the curve must be monotone. Dropped directions break nesting.
        let nested = ev[0] > curve.points.last().unwrap().threshold;
        let mut prev = f64::INFINITY;
        for e in curve.energies().into_iter().flatten() {
            prop_assert!(e >= ground - 1e-8);
            if nested {
                prop_assert!(e <= prev + 1e-9);
            }
            prev = e;
        }
    }

    #[test]
    fn gain_composes_fidelities(n in 1usize..=6, gain in 1.0f64..3.0, seed in any::<u64>()) {
        let mut rng = task_rng(seed, 9);
        let gens: Vec<(PauliString, f64)> = (0..4).map(|_| {
            let mut p = PauliString::IDENTITY;
            while p.is_identity() {
                for q in 0..n { p.set(q, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..4)]); }
            }
            (p, rng.random_range(0.0..0.05))
        }).collect();
        let scaled = |g: f64| PauliLindbladModel::new("m", n, gens.iter().map(|(p, r)| (*p, r * g)).collect()).unwrap();
        let (m1, mg, mrest) = (scaled(1.0), scaled(gain), scaled(gain - 1.0));
        for _ in 0..8 {
            let mut p = PauliString::IDENTITY;
            for q in 0..n { p.set(q, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..4)]); }
            let lhs = pauli_fidelity(&mg, &p);
            let rhs = pauli_fidelity(&m1, &p) * pauli_fidelity(&mrest, &p);
            prop_assert!((lhs - rhs).abs() < 1e-14);
            // Insertion probabilities at gain G match the rate-scaled model.
            for (_, r) in &gens {
                prop_assert!((insertion_probability(*r, gain) - insertion_probability(r * gain, 1.0)).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn second_order_trotter_error_slope() {
    let lat = build_chain(6);
    let basis = SectorBasis::new(6, 3).unwrap();
    let h = dense_sector_hamiltonian(&lat, &basis).map(|v| Complex64::new(v, 0.0));
    let t = 1.0;
    let exact = unitary_evolution(&h, t);
    let mut pts = Vec::new();
    for steps in [4usize, 8, 16, 32] {
        let circ = build_trotter(&lat, t, steps, TrotterOrder::Second).unwrap();
        let mut u = DMatrix::zeros(basis.dim(), basis.dim());
        for j in 0..basis.dim() {
            let mut s = SectorState::basis_state(basis.clone(), basis.unrank(j)).unwrap();
            circ.apply_sector(&mut s).unwrap();
            for (i, a) in s.amplitudes().iter().enumerate() {
                u[(i, j)] = *a;
            }
        }
        let err = (&u - &exact).norm();
        pts.push(((steps as f64).ln(), err.ln()));
    }
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 2.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn trex_is_unbiased() {
    // Truth: a Z-parity on two qubits of a fixed product state.
    let readout = ReadoutModel::uniform(4, 0.03, 0.07).unwrap();
    let support = 0b0110u64;
    let ideal = 0b0010u64;
    let truth = -1.0;
    let mut estimates = Vec::new();
    for run in 0..40 {
        let mut rng = task_rng(77, run);
        let shots = 4000;
        let mut sum = 0i64;
        for _ in 0..shots {
            let mask = rng.random::<u64>() & 0xf;
            let read = readout.measure(ideal, mask, &mut rng);
            sum += if (read & support).count_ones() % 2 == 0 { 1 } else { -1 };
        }
        let raw = sum as f64 / shots as f64;
        estimates.push(trex_mitigate(raw, support, &readout, 20_000, &mut rng).unwrap());
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - truth).abs() <= 3.0 * sd / n.sqrt(), "mean {mean} sd {sd}");
}
