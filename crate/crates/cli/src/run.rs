//! Config to result bundle: lattice, circuits, matrix pair, solver, outputs.

use std::path::Path;
use std::time::Instant;

use kqd::circuits::{build_trotter, synthesize_controlled_prep, LayeredCircuit, PreparationTarget, TrotterOrder};
use kqd::krylov::{
    exact_elements_hermitian_with, exact_elements_with, ExactPropagator, HadamardSetup, KrylovPair, Propagator,
    ShotExperiment,
};
use kqd::lattice::{build_chain, build_heavy_hex, EdgeColoredLattice};
use kqd::layouts::{spread_particles, Layout, LayoutFile, PresetLayout};
use kqd::noise::{NoiseSpec, NoisyExperiment, NoisyRunConfig, ReadoutModel};
use kqd::sector_sim::sector_ground_energy;
use kqd::solver::{auto_regularize, bootstrap, energy_curve, BootstrapResult, EnergyCurve, ResampleSource};
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode, NoiseConfig, PairStructure, Propagation};
use crate::CliError;

pub fn resolve_layout(cfg: &ExperimentConfig) -> Result<Layout, CliError> {
    let l = &cfg.lattice;
    if let Some(name) = &l.preset {
        return Ok(PresetLayout::from_name(name)?.build());
    }
    if let Some(path) = &l.file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("lattice.file {}: {e}", path.display())))?;
        let file: LayoutFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("lattice.file {}: {e}", path.display())))?;
        return Ok(file.to_layout()?);
    }
    let device: EdgeColoredLattice = match (l.heavy_hex, l.chain) {
        (Some([rows, cols]), None) => build_heavy_hex(rows, cols),
        (None, Some(n)) => build_chain(n),
        _ => unreachable!("validated: one lattice source"),
    };
    let control = l.control.expect("validated: control given");
    if control >= device.n_sites() {
        return Err(CliError::Validation(format!(
            "lattice.control: site {control} not in lattice of {} sites",
            device.n_sites()
        )));
    }
    Ok(Layout::new(&device, control)?)
}

/// Layout plus the reference bitstring.
pub struct Prepared {
    pub layout: Layout,
    pub target: PreparationTarget,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let layout = resolve_layout(cfg)?;
    let sites = match &cfg.particles.sites {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&q| q >= layout.n_system()) {
                return Err(CliError::Validation(format!(
                    "particles.sites: site {bad} not among the {} system sites",
                    layout.n_system()
                )));
            }
            s.clone()
        }
        None => spread_particles(&layout, cfg.particles.k)?,
    };
    let target = PreparationTarget::new(layout.system(), &sites)?;
    Ok(Prepared { layout, target })
}

pub fn step_circuit(cfg: &ExperimentConfig, system: &EdgeColoredLattice, dt: f64) -> Result<LayeredCircuit, CliError> {
    Ok(build_trotter(system, dt, cfg.evolution.steps, TrotterOrder::from_int(cfg.evolution.order)?)?)
}

fn propagator(cfg: &ExperimentConfig, p: &Prepared, dt: f64) -> Result<Box<dyn Propagator>, CliError> {
    Ok(match cfg.evolution.propagator {
        Propagation::Trotter => Box::new(step_circuit(cfg, p.layout.system(), dt)?),
        Propagation::Exact => Box::new(ExactPropagator::new(p.layout.system(), p.target.k(), dt)?),
    })
}

/// Noise spec from a file or a uniform local model over the layers used.
pub fn noise_spec(noise: &NoiseConfig, layout: &Layout, circuits: &[&LayeredCircuit]) -> Result<NoiseSpec, CliError> {
    let n = layout.device().n_sites();
    if let Some(path) = &noise.file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("noise.file {}: {e}", path.display())))?;
        let spec = NoiseSpec::from_json(&text)?;
        if spec.n_qubits != n {
            return Err(CliError::Validation(format!(
                "noise.file covers {} qubits, layout has {n}",
                spec.n_qubits
            )));
        }
        return Ok(spec);
    }
    let readout = match noise.readout {
        Some([p01, p10]) => ReadoutModel::uniform(n, p01, p10)?,
        None => ReadoutModel::perfect(n),
    };
    let mut spec = NoiseSpec::uniform_local(layout.device(), circuits, noise.rate.unwrap_or(1.0), readout)?;
    if let Some(total) = noise.layer_rate {
        for m in spec.models.values_mut() {
            let each = total / m.generators.len() as f64;
            for g in m.generators.iter_mut() {
                g.1 = each;
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub dt: f64,
    pub d: usize,
    pub energy: Option<f64>,
    pub delta_e: Option<f64>,
    pub eps_base: Option<f64>,
}

pub struct RunBundle {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub n_sites: usize,
    pub particles: Vec<usize>,
    pub pair: KrylovPair,
    pub curve: EnergyCurve,
    pub reference: Option<f64>,
    pub bootstrap: Option<BootstrapResult>,
    pub heatmap: Option<Vec<HeatmapCell>>,
    pub wall_time: f64,
}

fn solve(cfg: &ExperimentConfig, pair: &KrylovPair) -> Result<EnergyCurve, CliError> {
    match cfg.solver.eps_base {
        Some(eps) => Ok(energy_curve(pair, eps)),
        None => Ok(auto_regularize(pair, &cfg.solver.regularization())?.1),
    }
}

fn exact_pair(cfg: &ExperimentConfig, p: &Prepared, dt: f64) -> Result<KrylovPair, CliError> {
    let prop = propagator(cfg, p, dt)?;
    let sys = p.layout.system();
    Ok(match cfg.evolution.structure {
        PairStructure::Toeplitz => exact_elements_with(sys, &p.target, prop.as_ref(), cfg.krylov.d, dt)?,
        PairStructure::Hermitian => exact_elements_hermitian_with(sys, &p.target, prop.as_ref(), cfg.krylov.d, dt)?,
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunBundle, CliError> {
    let start = Instant::now();
    cfg.validate()?;
    let config_hash = cfg.hash()?;
    let p = prepare(cfg)?;
    let dt = cfg.evolution.dt;
    let d = cfg.krylov.d;
    let reg = cfg.solver.regularization();

    let mut boot = None;
    let pair = match cfg.krylov.mode {
        Mode::Exact => exact_pair(cfg, &p, dt)?,
        Mode::Shots => {
            let prop = propagator(cfg, &p, dt)?;
            let setup = HadamardSetup::new(p.layout.system(), &p.target)?;
            let shots = cfg.krylov.shots.expect("validated");
            let exp = ShotExperiment::run(setup, prop.as_ref(), d, dt, shots, cfg.seed)?;
            if cfg.solver.bootstrap > 0 {
                boot = Some(bootstrap(&exp, cfg.solver.bootstrap, &reg, cfg.seed)?);
            }
            exp.estimate()?
        }
        Mode::Noisy => {
            let noise = cfg.noise.as_ref().expect("validated");
            let step = step_circuit(cfg, p.layout.system(), dt)?;
            let prep = synthesize_controlled_prep(&p.layout, &p.target)?;
            let spec = noise_spec(noise, &p.layout, &[&prep, &step])?;
            let run_cfg = NoisyRunConfig {
                gains: noise.gains.clone(),
                twirls: noise.twirls,
                shots: noise.shots,
                calibration_shots: noise.calibration_shots,
                seed: cfg.seed,
            };
            let mut exp = NoisyExperiment::run(&p.layout, &p.target, &step, d, dt, &spec, &run_cfg)?;
            exp.mitigation = noise.mitigation;
            if cfg.solver.bootstrap > 0 {
                boot = Some(bootstrap(&exp, cfg.solver.bootstrap, &reg, cfg.seed)?);
            }
            exp.estimate()?
        }
    };
    let curve = solve(cfg, &pair)?;
    let reference = if cfg.solver.reference {
        Some(sector_ground_energy(p.layout.system(), p.target.k())?)
    } else {
        None
    };

    let heatmap = match &cfg.sweep {
        None => None,
        Some(s) => {
            let e0 = reference.expect("validated: sweeps need the reference");
            let mut cells = Vec::new();
            for dt in s.grid() {
                let pair = exact_pair(cfg, &p, dt)?;
                let curve = match solve(cfg, &pair) {
                    Ok(c) => Some(c),
                    Err(CliError::Numerical(_)) => None,
                    Err(e) => return Err(e),
                };
                for dd in 1..=d {
                    let energy = curve.as_ref().and_then(|c| c.energy_at(dd));
                    cells.push(HeatmapCell {
                        dt,
                        d: dd,
                        energy,
                        delta_e: energy.map(|e| e - e0),
                        eps_base: curve.as_ref().map(|c| c.eps_base),
                    });
                }
            }
            Some(cells)
        }
    };

    Ok(RunBundle {
        config: cfg.clone(),
        config_hash,
        n_sites: p.layout.n_system(),
        particles: p.target.particles(),
        pair,
        curve,
        reference,
        bootstrap: boot,
        heatmap,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Output files.

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV text whose first line names the producing config.
pub fn csv_bytes(hash: &str, header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = format!("# config_hash={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).expect("in-memory write");
        for r in rows {
            w.write_record(r).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    out
}

impl RunBundle {
    pub fn curve_csv(&self) -> Vec<u8> {
        let n = self.n_sites as f64;
        let rows: Vec<Vec<String>> = self
            .curve
            .points
            .iter()
            .map(|p| {
                vec![
                    p.d.to_string(),
                    num(p.energy),
                    num(p.energy.map(|e| e / n)),
                    num(p.energy.zip(self.reference).map(|(e, r)| e - r)),
                    p.threshold.to_string(),
                ]
            })
            .collect();
        csv_bytes(&self.config_hash, &["d", "energy", "energy_per_site", "delta_e", "threshold"], &rows)
    }

    pub fn bootstrap_csv(&self) -> Option<Vec<u8>> {
        let b = self.bootstrap.as_ref()?;
        let rows: Vec<Vec<String>> = self
            .curve
            .points
            .iter()
            .map(|p| {
                vec![
                    p.d.to_string(),
                    num(p.energy),
                    num(b.std.get(p.d - 1).copied().flatten()),
                    b.accepted.to_string(),
                    b.rejected_energy_rise.to_string(),
                    b.rejected_fit_failure.to_string(),
                    b.rejected_no_threshold.to_string(),
                ]
            })
            .collect();
        Some(csv_bytes(
            &self.config_hash,
            &["d", "energy", "std", "accepted", "rejected_energy_rise", "rejected_fit_failure", "rejected_no_threshold"],
            &rows,
        ))
    }

    pub fn heatmap_csv(&self) -> Option<Vec<u8>> {
        let cells = self.heatmap.as_ref()?;
        let rows: Vec<Vec<String>> = cells
            .iter()
            .map(|c| vec![c.dt.to_string(), c.d.to_string(), num(c.energy), num(c.delta_e), num(c.eps_base)])
            .collect();
        Some(csv_bytes(&self.config_hash, &["dt", "d", "energy", "delta_e", "eps_base"], &rows))
    }

    pub fn pair_json(&self) -> String {
        pair_document(&self.config_hash, &self.pair)
    }

    /// Every output file with its contents, manifest last.
    pub fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut files = vec![
            ("pair.json".to_string(), self.pair_json().into_bytes()),
            ("curve.csv".to_string(), self.curve_csv()),
        ];
        if let Some(b) = self.bootstrap_csv() {
            files.push(("bootstrap.csv".into(), b));
        }
        if let Some(h) = self.heatmap_csv() {
            files.push(("heatmap.csv".into(), h));
        }
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        let manifest = serde_json::json!({
            "name": self.config.name,
            "config_hash": self.config_hash,
            "config": self.config.to_toml(),
            "seed": self.config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "n_sites": self.n_sites,
            "particles": self.particles,
            "reference_energy": self.reference,
            "eps_base": self.curve.eps_base,
            "bootstrap": self.bootstrap.as_ref().map(|b| serde_json::json!({
                "accepted": b.accepted,
                "rejected_energy_rise": b.rejected_energy_rise,
                "rejected_fit_failure": b.rejected_fit_failure,
                "rejected_no_threshold": b.rejected_no_threshold,
            })),
            "wall_time_s": self.wall_time,
            "outputs": names,
        });
        files.push(("manifest.json".into(), serde_json::to_vec_pretty(&manifest).expect("manifest serializes")));
        files
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_files(dir, &self.files())
    }
}

pub fn pair_document(hash: &str, pair: &KrylovPair) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "config_hash": hash, "pair": pair.to_file() }))
        .expect("pair serializes")
}

pub fn read_pair_document(text: &str) -> Result<KrylovPair, CliError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("pair file: {e}")))?;
    let inner = v.get("pair").cloned().unwrap_or(v);
    Ok(KrylovPair::from_json(&inner.to_string())?)
}

pub fn write_files(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
