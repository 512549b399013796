use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use primplan::collision::{build_index, CollisionIndex};
use primplan::config::{ConfigError, Preset, RunConfig};
use primplan::library::{build_library, PrimitiveLibrary};
use primplan::sim::{run_episode, run_grid, GridCell};

mod plot;

#[derive(Parser)]
#[command(name = "primplan", version, about = "Time-optimal motion primitive planning for quadrotors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a primitive library and write it as a .pplib file.
    GenerateLibrary {
        /// TOML run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Library preset to build instead of a config file.
        #[arg(long, value_parser = parse_preset, conflicts_with = "config")]
        preset: Option<Preset>,
        /// Output .pplib path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the collision index for a library and write it as a .ppidx file.
    BuildIndex {
        /// Library file to index.
        #[arg(long)]
        library: PathBuf,
        /// TOML run configuration (only the [index] table is used).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output .ppidx path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and print its result.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Library file; built from the config when omitted.
        #[arg(long)]
        library: Option<PathBuf>,
        /// Index file; built from the library when omitted.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Map seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Obstacle count (defaults to the config's value).
        #[arg(long)]
        n_obs: Option<usize>,
        /// Directory for the speed plot and trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a (library × obstacle count) grid over many seeds.
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Library files (repeatable); the low, medium and high presets when omitted.
        #[arg(long)]
        library: Vec<PathBuf>,
        /// Index files, one per library, in the same order.
        #[arg(long)]
        index: Vec<PathBuf>,
        /// Obstacle counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "100,150,200")]
        n_obs: Vec<usize>,
        /// Seeds: a count `N` (0..N), a range `a..b`, or a comma list.
        #[arg(long, default_value = "20", value_parser = parse_seeds)]
        seeds: SeedList,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Reports to write.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "csv,svg")]
        format: Vec<Format>,
    },
    /// Print statistics for a library and/or index file.
    Inspect {
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: ConfigError| e.to_string())
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let bad = |_| format!("invalid seed list {s:?}");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a >= b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok(SeedList((a..b).collect()));
    }
    if s.contains(',') {
        return s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>().map(SeedList);
    }
    let n: u64 = s.trim().parse().map_err(bad)?;
    if n == 0 {
        return Err("seed count must be > 0".into());
    }
    Ok(SeedList((0..n).collect()))
}

/// Errors split by exit code: 2 for configuration problems, 1 for the rest.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Config(e.into())),
        None => Ok(RunConfig::default()),
    }
}

fn read_library(path: &Path) -> Result<PrimitiveLibrary> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    PrimitiveLibrary::from_bytes(&bytes).with_context(|| format!("cannot load library {}", path.display()))
}

fn read_index(path: &Path, lib: &PrimitiveLibrary) -> Result<CollisionIndex> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let index = CollisionIndex::from_bytes(&bytes).with_context(|| format!("cannot load index {}", path.display()))?;
    index.verify(lib).with_context(|| format!("{} does not belong to this library", path.display()))?;
    Ok(index)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn generate_library(config: Option<&Path>, preset: Option<Preset>, out: &Path) -> Result<(), Failure> {
    let cfg = match preset {
        Some(p) => RunConfig::from_preset(p),
        None => load_config(config)?,
    };
    let started = Instant::now();
    let lib = build_library(&cfg.library).context("library build failed")?;
    write(out, &lib.to_bytes())?;
    println!("paths: {}", lib.paths.len());
    println!("speed slices: {} (step {} m/s)", lib.num_slices(), lib.speed_step());
    println!("primitives: {}", lib.len());
    println!("infeasible pairs: {}", lib.infeasible.len());
    for pair in &lib.infeasible {
        println!("  path {} slice {}: {}", pair.path_id, pair.speed_index, pair.reason);
    }
    println!("hash: {}", lib.content_hash());
    println!("wrote {} in {:.2?}", out.display(), started.elapsed());
    Ok(())
}

fn build_index_cmd(library: &Path, config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let lib = read_library(library)?;
    let started = Instant::now();
    let index = build_index(&lib, cfg.index).context("index build failed")?;
    write(out, &index.to_bytes())?;
    println!("grid: {} x {} x {} voxels of {} m", index.dims[0], index.dims[1], index.dims[2], index.params.voxel_size);
    println!("query distance: {} m", index.params.query_distance());
    println!("occupied voxels: {}", index.num_voxels());
    println!("entries: {}", index.num_entries());
    println!("wrote {} in {:.2?}", out.display(), started.elapsed());
    Ok(())
}

fn load_or_build(cfg: &RunConfig, library: Option<&Path>, index: Option<&Path>) -> Result<(PrimitiveLibrary, CollisionIndex)> {
    let lib = match library {
        Some(p) => read_library(p)?,
        None => build_library(&cfg.library).context("library build failed")?,
    };
    let idx = match index {
        Some(p) => read_index(p, &lib)?,
        None => build_index(&lib, cfg.index).context("index build failed")?,
    };
    Ok((lib, idx))
}

fn simulate(
    config: Option<&Path>,
    library: Option<&Path>,
    index: Option<&Path>,
    seed: u64,
    n_obs: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let (lib, idx) = load_or_build(&cfg, library, index)?;
    let n_obs = n_obs.unwrap_or(cfg.n_obs);
    let e = run_episode(seed, n_obs, &lib, &idx, &cfg.planner, &cfg.sim).context("episode failed")?;
    println!("seed: {}", e.seed);
    println!("n_obs: {}", e.n_obs);
    println!("n_paths: {}", e.n_paths);
    println!("outcome: {:?}", e.outcome);
    println!("success: {}", e.success);
    println!("t_total_s: {:.3}", e.t_total);
    println!("d_total_m: {:.3}", e.d_total);
    println!("replans: {}", e.replans);
    println!("emergency_stops: {}", e.emergency_stops);
    println!("mean_check_us: {:.2}", e.mean_check_us());
    println!("p99_check_us: {:.2}", e.p99_check_us());
    println!("mean_select_us: {:.2}", e.mean_select_us());
    println!("max_direction_jump_rad: {:.3e}", e.max_direction_jump);
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut trace = String::from("t_s,x_m,y_m,z_m,speed_mps\n");
        for ((t, v), p) in e.speed_trace.iter().zip(&e.path) {
            trace.push_str(&format!("{t:.2},{:.4},{:.4},{:.4},{v:.4}\n", p.x, p.y, p.z));
        }
        write(&dir.join("trace.csv"), trace.as_bytes())?;
        let title = format!("speed, seed {seed}, {n_obs} obstacles, {} paths", e.n_paths);
        plot::speed_svg(&e.speed_trace, lib.bounds().v_norm, &title, &dir.join("speed.svg"))?;
        println!("wrote {}", dir.display());
    }
    if e.success {
        Ok(())
    } else {
        Err(Failure::Runtime(anyhow::anyhow!("episode did not reach the goal ({:?})", e.outcome)))
    }
}

#[allow(clippy::too_many_arguments)]
fn benchmark(
    config: Option<&Path>,
    libraries: &[PathBuf],
    indexes: &[PathBuf],
    n_obs: &[usize],
    seeds: &[u64],
    out: &Path,
    formats: &[Format],
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    if !indexes.is_empty() && indexes.len() != libraries.len() {
        return Err(Failure::Config(anyhow::anyhow!(
            "{} --index files given for {} --library files",
            indexes.len(),
            libraries.len()
        )));
    }
    let mut pairs = Vec::new();
    if libraries.is_empty() {
        for preset in [Preset::Low, Preset::Medium, Preset::High] {
            let lib = build_library(&preset.library_config()).context("library build failed")?;
            let idx = build_index(&lib, cfg.index).context("index build failed")?;
            pairs.push((lib, idx));
        }
    } else {
        for (i, l) in libraries.iter().enumerate() {
            pairs.push(load_or_build(&cfg, Some(l), indexes.get(i).map(PathBuf::as_path))?);
        }
    }
    let cells: Vec<GridCell<'_>> = pairs
        .iter()
        .flat_map(|(lib, idx)| n_obs.iter().map(move |&n| GridCell { library: lib, index: idx, n_obs: n }))
        .collect();
    let started = Instant::now();
    let report = run_grid(&cells, seeds, &cfg.planner, &cfg.sim).context("benchmark failed")?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    if formats.contains(&Format::Csv) {
        write(&out.join("episodes.csv"), report.episodes_csv().as_bytes())?;
        write(&out.join("summary.csv"), report.summary_csv().as_bytes())?;
    }
    if formats.contains(&Format::Svg) {
        plot::timing_svg(&report.cells, &out.join("timing.svg"))?;
        let densest = n_obs.iter().max().copied().unwrap_or(0);
        let biggest = pairs.iter().map(|(l, _)| l.paths.len()).max().unwrap_or(0);
        if let Some(e) = report.episodes.iter().find(|e| e.success && e.n_obs == densest && e.n_paths == biggest) {
            let title = format!("speed, seed {}, {} obstacles, {} paths", e.seed, e.n_obs, e.n_paths);
            let v_max = pairs.iter().map(|(l, _)| l.bounds().v_norm).fold(0.0, f64::max);
            plot::speed_svg(&e.speed_trace, v_max, &title, &out.join("speed.svg"))?;
        }
    }
    print!("{}", report.summary_csv());
    println!("{} episodes in {:.2?}, reports in {}", report.episodes.len(), started.elapsed(), out.display());
    Ok(())
}

fn inspect(library: Option<&Path>, index: Option<&Path>) -> Result<(), Failure> {
    if library.is_none() && index.is_none() {
        return Err(Failure::Config(anyhow::anyhow!("give --library and/or --index")));
    }
    let lib = library.map(read_library).transpose()?;
    if let Some(lib) = &lib {
        let c = &lib.config;
        let durations: Vec<f64> = lib.primitives().iter().map(|p| p.trajectory.duration()).collect();
        let knots: usize = lib.primitives().iter().map(|p| p.trajectory.knots.len()).sum();
        println!("library");
        println!("  paths: {} (length {} m, rotation step {} deg)", lib.paths.len(), c.paths.length, c.paths.rotation_step);
        println!("  speed slices: {} (0..{} m/s, step {})", lib.num_slices(), c.bounds.v_norm, c.speed_step);
        println!("  primitives: {}", lib.len());
        println!("  infeasible pairs: {}", lib.infeasible.len());
        println!("  knots: {knots}");
        println!(
            "  duration: {:.3}..{:.3} s",
            durations.iter().copied().fold(f64::INFINITY, f64::min),
            durations.iter().copied().fold(0.0, f64::max)
        );
        println!("  hash: {}", lib.content_hash());
    }
    if let Some(path) = index {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let idx = CollisionIndex::from_bytes(&bytes).with_context(|| format!("cannot load index {}", path.display()))?;
        println!("index");
        println!("  grid: {} x {} x {} (voxel {} m)", idx.dims[0], idx.dims[1], idx.dims[2], idx.params.voxel_size);
        println!("  query distance: {} m", idx.params.query_distance());
        println!("  occupied voxels: {}", idx.num_voxels());
        println!("  entries: {}", idx.num_entries());
        println!("  primitives: {}", idx.num_primitives());
        println!("  library hash: {}", idx.library_hash);
        if let Some(lib) = &lib {
            read_index(path, lib)?;
            println!("  matches library: yes");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenerateLibrary { config, preset, out } => generate_library(config.as_deref(), preset, &out),
        Command::BuildIndex { library, config, out } => build_index_cmd(&library, config.as_deref(), &out),
        Command::Simulate { config, library, index, seed, n_obs, out } => {
            simulate(config.as_deref(), library.as_deref(), index.as_deref(), seed, n_obs, out.as_deref())
        }
        Command::Benchmark { config, library, index, n_obs, seeds, out, format } => {
            benchmark(config.as_deref(), &library, &index, &n_obs, &seeds.0, &out, &format)
        }
        Command::Inspect { library, index } => inspect(library.as_deref(), index.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("3").unwrap().0, vec![0, 1, 2]);
        assert_eq!(parse_seeds("5..8").unwrap().0, vec![5, 6, 7]);
        assert_eq!(parse_seeds("9, 2,4").unwrap().0, vec![9, 2, 4]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a..b").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
