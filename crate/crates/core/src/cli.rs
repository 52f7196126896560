//! Command-line front end: argument parsing, command bodies and output handling.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analytics::{
    add_latency_tables, characterize, lifetime_csv, lifetime_experiment, CharacterizeConfig, LatencyRow,
    LifetimeConfig, LifetimeCurve, Report,
};
use crate::config::{content_hash, load_chip, RunConfig, TraceSource};
use crate::erase::Scheme;
use crate::error::{Error, Result};
use crate::sim::write_latency_csv;
use crate::units::{ms_f, to_ms};

pub const OUT_ENV: &str = "AEROSIM_OUT";
const DEFAULT_OUT: &str = "aerosim-out";

#[derive(Parser, Debug)]
#[command(name = "aerosim", version, about = "SSD simulator with adaptive, fail-bit-guided block erasure")]
pub struct Cli {
    /// Base output directory; each invocation writes a subdirectory named by its config hash.
    #[arg(long, global = true, env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Precondition a drive, replay one trace and report latencies.
    Run(RunArgs),
    /// Cycle sampled blocks under each scheme and track worst-page errors.
    Lifetime(LifetimeArgs),
    /// Fine-grained erase sweep: fail-bit constants, probe-width sweep, regenerated table.
    Characterize(CharacterizeArgs),
    /// Run a scheme x PEC grid and tabulate latencies against a baseline scheme.
    Compare(CompareArgs),
}

fn on_off(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(format!("expected on or off, got `{s}`")),
    }
}


/// Settings shared by `run` and `compare`. Unset flags fall back to the config file,
/// then to the built-in defaults shown here.
#[derive(Args, Debug, Default, Clone)]
pub struct SimArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Chip parameter file [default: built-in 3D TLC set].
    #[arg(long)]
    pub chip: Option<PathBuf>,
    /// `format:path` (msrc, alibaba, normalized) or `ali-e[:seconds]` [default: ali-e:600].
    #[arg(long)]
    pub trace: Option<String>,
    /// Divide trace inter-arrival gaps by this factor [default: 10].
    #[arg(long)]
    pub accel: Option<f64>,
    /// Keep only this disk number of a multi-disk trace.
    #[arg(long)]
    pub disk: Option<u32>,
    /// [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Erase suspension for waiting reads, on or off [default: on].
    #[arg(long, value_parser = on_off)]
    pub suspension: Option<bool>,
    /// Injected misprediction rate for predicted-final pulses [default: 0].
    #[arg(long)]
    pub mispredict: Option<f64>,
    /// Live fraction of physical pages after preconditioning [default: 0.8].
    #[arg(long)]
    pub utilization: Option<f64>,
    /// Untimed random overwrites after the fill, in logical capacities [default: 1].
    #[arg(long)]
    pub warm_up: Option<f64>,
    /// Replay one erase per this many aging cycles [default: 1].
    #[arg(long)]
    pub stride: Option<u32>,
    /// [default: 2]
    #[arg(long)]
    pub channels: Option<u32>,
    /// Chips per channel [default: 4].
    #[arg(long)]
    pub chips: Option<u32>,
    /// Planes per chip [default: 4].
    #[arg(long)]
    pub planes: Option<u32>,
    /// Blocks per plane [default: 16].
    #[arg(long)]
    pub blocks: Option<u32>,
    /// Pages per block [default: 256].
    #[arg(long)]
    pub pages: Option<u32>,
}

impl SimArgs {
    /// Config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.chip {
            c.chip = Some(v.clone());
        }
        if let Some(v) = &self.trace {
            c.trace = TraceSource::parse(v)?;
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {$(
                if let Some(v) = self.$flag { c.$($field).+ = v.into(); }
            )*};
        }
        set!(
            accel => accel, seed => seed, suspension => sim.suspension, mispredict => mispredict_rate,
            utilization => utilization, warm_up => warm_up, stride => precondition_stride,
            channels => geometry.channels, chips => geometry.chips_per_channel,
            planes => geometry.planes_per_chip, blocks => geometry.blocks_per_plane,
            pages => geometry.pages_per_block,
        );
        if self.disk.is_some() {
            c.disk = self.disk;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// baseline, m-ispe, i-ispe, dpes, aero-cons or aero [default: aero].
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// P/E cycles to age the drive to before the trace [default: 500].
    #[arg(long)]
    pub pec: Option<u32>,
    #[command(flatten)]
    pub sim: SimArgs,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = self.sim.resolve()?;
        if let Some(s) = self.scheme {
            c.scheme = s;
        }
        if let Some(p) = self.pec {
            c.pec = p;
        }
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_value = "baseline,aero-cons,aero")]
    pub schemes: Vec<Scheme>,
    #[arg(long, value_delimiter = ',', default_value = "500,2500,4500")]
    pub pecs: Vec<u32>,
    /// Scheme the tables are normalized to.
    #[arg(long, default_value = "baseline")]
    pub baseline: Scheme,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Args, Debug, Clone)]
pub struct LifetimeArgs {
    #[arg(long, value_delimiter = ',', default_value = "baseline,i-ispe,dpes,aero-cons,aero")]
    pub schemes: Vec<Scheme>,
    /// Sampled blocks per scheme.
    #[arg(long, default_value_t = 120)]
    pub blocks: u32,
    /// Cycles between checkpoints.
    #[arg(long, default_value_t = 250)]
    pub step: u32,
    #[arg(long, default_value_t = 8000)]
    pub max_pec: u32,
    /// Worst-page error budget; the aggressive table is rebuilt for it [default: chip value, 63].
    #[arg(long)]
    pub rber_requirement: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub mispredict: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Chip parameter file [default: built-in 3D TLC set].
    #[arg(long)]
    pub chip: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CharacterizeArgs {
    #[arg(long, default_value_t = 1000)]
    pub blocks: u32,
    #[arg(long, value_delimiter = ',', default_value = "0,500,1000,2000,3000,4000,5000")]
    pub pec_levels: Vec<u32>,
    /// Shallow-probe widths to sweep, ms.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
    pub shallow_ms: Vec<f64>,
    /// Highest PEC level included in the probe-width sweep.
    #[arg(long, default_value_t = 500)]
    pub low_pec_max: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Chip parameter file [default: built-in 3D TLC set].
    #[arg(long)]
    pub chip: Option<PathBuf>,
}

/// Header shared by every summary.json: what was run and how to reproduce it.
#[derive(Serialize)]
struct Summary<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    config: &'a C,
    results: R,
}

fn summary<C: Serialize, R: Serialize>(report: &mut Report, command: &str, seed: u64, config: &C, results: R) {
    let s = Summary { command, config_hash: content_hash(&(command, config)), seed, config, results };
    report.add_json("summary.json", &s);
}

#[derive(Serialize)]
struct RunResults<'a> {
    simulation: &'a crate::sim::SimulationReport,
}

pub fn cmd_run(cfg: &RunConfig) -> Result<Report> {
    let out = cfg.simulate()?;
    let mut report = Report::default();
    summary(&mut report, "run", cfg.seed, cfg, RunResults { simulation: &out.report });
    report.add("config.toml", cfg.to_toml());
    let row = LatencyRow { scheme: cfg.scheme, pec: cfg.pec, suspension: cfg.sim.suspension, reads: out.report.reads.clone() };
    add_latency_tables(&mut report, &[row], cfg.scheme);
    let mut csv = Vec::new();
    write_latency_csv(&mut csv, &out.records).expect("in-memory write");
    report.add("requests.csv", csv);
    Ok(report)
}

#[derive(Serialize)]
struct CompareCell {
    scheme: Scheme,
    pec: u32,
    simulation: crate::sim::SimulationReport,
}

#[derive(Serialize, Clone)]
struct CompareConfig<'a> {
    schemes: &'a [Scheme],
    pecs: &'a [u32],
    baseline: Scheme,
    base: &'a RunConfig,
}

pub fn cmd_compare(schemes: &[Scheme], pecs: &[u32], baseline: Scheme, base: &RunConfig) -> Result<Report> {
    if schemes.is_empty() || pecs.is_empty() {
        return Err(Error::Usage("compare needs at least one scheme and one PEC value".into()));
    }
    let grid: Vec<RunConfig> = pecs
        .iter()
        .flat_map(|&pec| schemes.iter().map(move |&scheme| RunConfig { scheme, pec, ..base.clone() }))
        .collect();
    // cells are independent; results are gathered in grid order
    let results: Vec<Result<crate::sim::SimulationReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = grid.iter().map(|c| s.spawn(move || c.simulate().map(|o| o.report))).collect();
        handles.into_iter().map(|h| h.join().expect("grid cell panicked")).collect()
    });
    let mut cells = Vec::new();
    for (c, r) in grid.iter().zip(results) {
        cells.push(CompareCell { scheme: c.scheme, pec: c.pec, simulation: r? });
    }
    let rows: Vec<LatencyRow> = cells
        .iter()
        .map(|c| LatencyRow { scheme: c.scheme, pec: c.pec, suspension: base.sim.suspension, reads: c.simulation.reads.clone() })
        .collect();
    let mut report = Report::default();
    let cfg = CompareConfig { schemes, pecs, baseline, base };
    summary(&mut report, "compare", base.seed, &cfg, &cells);
    add_latency_tables(&mut report, &rows, baseline);
    Ok(report)
}

#[derive(Serialize)]
struct LifetimeSummary<'a> {
    curves: &'a [LifetimeCurve],
    /// Crossing of each scheme relative to the baseline crossing, when both exist.
    relative_lifetime: Vec<(Scheme, Option<f64>)>,
}

pub fn cmd_lifetime(schemes: &[Scheme], chip: Option<&Path>, cfg: &LifetimeConfig) -> Result<Report> {
    if schemes.is_empty() {
        return Err(Error::Usage("lifetime needs at least one scheme".into()));
    }
    let params = load_chip(chip)?;
    let curves: Vec<LifetimeCurve> = std::thread::scope(|s| {
        let handles: Vec<_> =
            schemes.iter().map(|&sc| s.spawn({ let p = &params; move || lifetime_experiment(p, sc, cfg) })).collect();
        handles.into_iter().map(|h| h.join().expect("lifetime worker panicked")).collect::<Result<_>>()
    })?;
    let base = curves.iter().find(|c| c.scheme == Scheme::Baseline).and_then(|c| c.crossing);
    let relative_lifetime = curves
        .iter()
        .map(|c| (c.scheme, base.zip(c.crossing).map(|(b, x)| x / b)))
        .collect();
    let mut report = Report::default();
    #[derive(Serialize)]
    struct Cfg<'a> {
        schemes: &'a [Scheme],
        chip: Option<&'a Path>,
        lifetime: &'a LifetimeConfig,
    }
    summary(
        &mut report,
        "lifetime",
        cfg.seed,
        &Cfg { schemes, chip, lifetime: cfg },
        LifetimeSummary { curves: &curves, relative_lifetime },
    );
    report.add("lifetime.csv", lifetime_csv(&curves));
    Ok(report)
}

pub fn cmd_characterize(chip: Option<&Path>, cfg: &CharacterizeConfig) -> Result<Report> {
    let params = load_chip(chip)?;
    let c = characterize(&params, cfg)?;
    let mut report = Report::default();
    #[derive(Serialize)]
    struct Cfg<'a> {
        chip: Option<&'a Path>,
        characterize: &'a CharacterizeConfig,
    }
    report.add("ept.txt", c.table.to_text(params.timing.quantum));
    let mut occ = String::from("pec,bucket,count\n");
    for o in &c.occupancy {
        for (b, n) in o.buckets.iter().enumerate() {
            occ += &format!("{},{},{}\n", o.pec, b, n);
        }
    }
    report.add("occupancy.csv", occ);
    let mut sweep = String::from("shallow_ms,erases,below_default,mean_single_loop_reduction\n");
    for s in &c.sweep {
        sweep += &format!("{},{},{:.6},{:.6}\n", to_ms(s.shallow_ns), s.erases, s.below_default, s.mean_single_loop_reduction);
    }
    report.add("shallow_sweep.csv", sweep);
    summary(&mut report, "characterize", cfg.seed, &Cfg { chip, characterize: cfg }, &c);
    Ok(report)
}

/// Write `report` under `base/<command>-<hash>`, replacing any previous output of the
/// same configuration. Nothing is left behind on failure.
pub fn publish(report: &Report, base: &Path, command: &str) -> Result<PathBuf> {
    let summary = report.get("summary.json").ok_or_else(|| Error::Logic("report without a summary".into()))?;
    let hash: serde_json::Value =
        serde_json::from_slice(summary).map_err(|e| Error::Logic(format!("summary is not JSON: {e}")))?;
    let hash = hash["config_hash"].as_str().unwrap_or("unhashed").chars().take(16).collect::<String>();
    let dir = base.join(format!("{command}-{hash}"));
    let partial = base.join(format!(".{command}-{hash}.partial"));
    let _ = std::fs::remove_dir_all(&partial);
    if let Err(e) = report.write_to(&partial) {
        let _ = std::fs::remove_dir_all(&partial);
        return Err(e);
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::rename(&partial, &dir).map_err(|e| {
        let _ = std::fs::remove_dir_all(&partial);
        Error::io(&dir, e)
    })?;
    Ok(dir)
}

fn execute(cli: &Cli) -> Result<PathBuf> {
    let (name, report) = match &cli.command {
        Command::Run(a) => ("run", cmd_run(&a.resolve()?)?),
        Command::Compare(a) => ("compare", cmd_compare(&a.schemes, &a.pecs, a.baseline, &a.sim.resolve()?)?),
        Command::Lifetime(a) => {
            let cfg = LifetimeConfig {
                blocks: a.blocks,
                step: a.step,
                max_pec: a.max_pec,
                seed: a.seed,
                mispredict_rate: a.mispredict,
                requirement: a.rber_requirement,
                stop_after_crossing: false,
            };
            ("lifetime", cmd_lifetime(&a.schemes, a.chip.as_deref(), &cfg)?)
        }
        Command::Characterize(a) => {
            let cfg = CharacterizeConfig {
                blocks: a.blocks,
                pec_levels: a.pec_levels.clone(),
                shallow_widths: a.shallow_ms.iter().map(|&m| ms_f(m)).collect(),
                low_pec_max: a.low_pec_max,
                seed: a.seed,
            };
            ("characterize", cmd_characterize(a.chip.as_deref(), &cfg)?)
        }
    };
    publish(&report, &cli.out, name)
}

/// Parse `args`, run the command and return the process exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with(["aerosim", "run", "--scheme", "turbo"]), 2);
        assert_eq!(main_with(["aerosim", "lifetime", "--schemes", "none"]), 2);
        assert_eq!(main_with(["aerosim", "compare", "--pecs", ""]), 2);
        assert_eq!(main_with(["aerosim", "run", "--trace", "nonsense"]), 2);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "pec = 2500\nseed = 9\n").unwrap();
        let args = RunArgs::try_parse_from_args(&["--config", path.to_str().unwrap(), "--seed", "3"]);
        let c = args.resolve().unwrap();
        assert_eq!((c.pec, c.seed), (2500, 3));
    }

    impl RunArgs {
        fn try_parse_from_args(a: &[&str]) -> RunArgs {
            #[derive(Parser)]
            struct W {
                #[command(flatten)]
                r: RunArgs,
            }
            W::try_parse_from(std::iter::once("w").chain(a.iter().copied())).unwrap().r
        }
    }
}
