use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kqd::lattice::{build_chain, build_heavy_hex};
use kqd::layouts::{Layout, PresetLayout};
use kqd_cli::compare::{compare, compare_csv, load_run};
use kqd_cli::config::{preset, ExperimentConfig, PRESETS};
use kqd_cli::run::{noise_spec, pair_document, prepare, run, step_circuit, write_files};
use kqd_cli::{circuit_files, describe_layout, solve_pair_file, CliError};

#[derive(Parser)]
#[command(name = "kqd", version, about = "Krylov quantum diagonalization experiments on heavy-hex lattices")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Experiment config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment preset.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::from_path(path),
            (None, Some(name)) => preset(name),
            _ => Err(CliError::Validation("give --config or --preset".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a layout and print or save it.
    Lattice {
        /// Named layout (hex-21, hex-57, hex-45, hex-43, ring-9).
        #[arg(long)]
        layout: Option<String>,
        /// Heavy-hex plaquette rows and columns.
        #[arg(long, num_args = 2, value_names = ["ROWS", "COLS"])]
        heavy_hex: Option<Vec<usize>>,
        /// Open chain length.
        #[arg(long)]
        chain: Option<usize>,
        /// Control site of a generated lattice.
        #[arg(long)]
        control: Option<usize>,
        /// Write the layout JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the preparation circuit, one Krylov step and the measurement bases.
    Circuit {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the matrix pair only.
    Krylov {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a stored matrix pair for its energy curve.
    Solve {
        /// Pair JSON written by `krylov` or `run`.
        #[arg(long)]
        pair: PathBuf,
        /// Fixed threshold base; searched automatically when absent.
        #[arg(long)]
        eps_base: Option<f64>,
        /// Reference energy for the error column.
        #[arg(long)]
        reference: Option<f64>,
        /// Site count for per-site energies.
        #[arg(long)]
        n_sites: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the noise spec a config would use, or check a spec file.
    Noise {
        #[command(flatten)]
        source: ConfigSource,
        /// Validate this spec file instead.
        #[arg(long, conflicts_with_all = ["config", "preset"])]
        check: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-D differences between two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List built-in presets.
    Presets,
}

fn write_one(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Lattice { layout, heavy_hex, chain, control, out } => {
            let l = match (layout, heavy_hex, chain) {
                (Some(name), None, None) => PresetLayout::from_name(&name)?.build(),
                (None, Some(rc), None) => Layout::new(&build_heavy_hex(rc[0], rc[1]), control.unwrap_or(0))?,
                (None, None, Some(n)) => Layout::new(&build_chain(n), control.unwrap_or(0))?,
                _ => return Err(CliError::Validation("give one of --layout, --heavy-hex, --chain".into())),
            };
            print!("{}", describe_layout(&l));
            if let Some(path) = out {
                let json = serde_json::to_vec_pretty(&l.to_file()).expect("layout serializes");
                write_one(&path, &json)?;
            }
        }
        Command::Circuit { source, out } => write_files(&out, &circuit_files(&source.load()?)?)?,
        Command::Krylov { source, out } => {
            let mut cfg = source.load()?;
            cfg.solver.reference = false;
            cfg.solver.bootstrap = 0;
            cfg.sweep = None;
            let bundle = run(&cfg)?;
            write_files(&out, &[("pair.json".into(), pair_document(&bundle.config_hash, &bundle.pair).into_bytes())])?;
        }
        Command::Solve { pair, eps_base, reference, n_sites, out } => {
            let text = std::fs::read_to_string(&pair)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", pair.display())))?;
            write_one(&out, &solve_pair_file(&text, eps_base, reference, n_sites)?)?;
        }
        Command::Noise { source, check, out } => {
            let spec = match check {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
                    kqd::noise::NoiseSpec::from_json(&text)?
                }
                None => {
                    let cfg = source.load()?;
                    let noise = cfg
                        .noise
                        .as_ref()
                        .ok_or_else(|| CliError::Validation("noise: config has no noise section".into()))?;
                    let p = prepare(&cfg)?;
                    let prep = kqd::circuits::synthesize_controlled_prep(&p.layout, &p.target)?;
                    let step = step_circuit(&cfg, p.layout.system(), cfg.evolution.dt)?;
                    noise_spec(noise, &p.layout, &[&prep, &step])?
                }
            };
            println!("{}: {} qubits, {} layer models", spec.name, spec.n_qubits, spec.models.len());
            for (id, m) in &spec.models {
                println!("  {id}: {} generators", m.generators.len());
            }
            if let Some(path) = out {
                write_one(&path, spec.to_json().as_bytes())?;
            }
        }
        Command::Run { source, out } => {
            let bundle = run(&source.load()?)?;
            bundle.write(&out)?;
            for p in &bundle.curve.points {
                match p.energy {
                    Some(e) => println!("D={:>3}  E={e:.6}", p.d),
                    None => println!("D={:>3}  E=-", p.d),
                }
            }
        }
        Command::Compare { a, b, out } => {
            let (ra, rb) = (load_run(&a)?, load_run(&b)?);
            let rows = compare(&ra, &rb)?;
            write_one(&out, &compare_csv(&ra, &rb, &rows))?;
        }
        Command::Presets => {
            for (name, _) in PRESETS {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
