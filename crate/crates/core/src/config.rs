//! Resolved run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chip::{ChipModel, ChipParams, Geometry};
use crate::erase::{EraseEngine, EraseTimingTable, Mispredictor, Scheme};
use crate::error::{Error, Result};
use crate::ftl::{Ftl, GcConfig};
use crate::sim::{SimConfig, SimOutput, Simulator};
use crate::units::Nanos;
use crate::workload::{load_trace, synth, IoRequest, ParseOptions, SynthParams, TraceFormat};

/// Per-field geometry overrides on top of the chosen base layout.
#[derive(Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometryOverrides {
    pub channels: Option<u32>,
    pub chips_per_channel: Option<u32>,
    pub planes_per_chip: Option<u32>,
    pub blocks_per_plane: Option<u32>,
    pub pages_per_block: Option<u32>,
}

impl GeometryOverrides {
    pub fn apply(&self, base: Geometry) -> Geometry {
        Geometry {
            channels: self.channels.unwrap_or(base.channels),
            chips_per_channel: self.chips_per_channel.unwrap_or(base.chips_per_channel),
            planes_per_chip: self.planes_per_chip.unwrap_or(base.planes_per_chip),
            blocks_per_plane: self.blocks_per_plane.unwrap_or(base.blocks_per_plane),
            pages_per_block: self.pages_per_block.unwrap_or(base.pages_per_block),
            page_size: base.page_size,
        }
    }
}

/// Where requests come from.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TraceSource {
    File { format: TraceFormat, path: PathBuf },
    Synth(SynthParams),
}

impl TraceSource {
    /// `format:path`, e.g. `msrc:hm_0.csv`, or `ali-e[:seconds]` for the synthetic profile.
    pub fn parse(spec: &str) -> Result<Self> {
        let (head, tail) = spec.split_once(':').map_or((spec, None), |(h, t)| (h, Some(t)));
        if head == "ali-e" {
            let secs: f64 = match tail {
                None => 600.0,
                Some(t) => t.parse().map_err(|_| Error::Usage(format!("bad duration in `{spec}`")))?,
            };
            if !(secs > 0.0) {
                return Err(Error::Usage(format!("bad duration in `{spec}`")));
            }
            return Ok(TraceSource::Synth(SynthParams::ali_e((secs * 1e9).round() as Nanos)));
        }
        let path = tail.filter(|t| !t.is_empty()).ok_or_else(|| {
            Error::Usage(format!("trace `{spec}` must be `format:path` or `ali-e[:seconds]`"))
        })?;
        Ok(TraceSource::File { format: head.parse()?, path: path.into() })
    }
}

/// Everything that determines the output of one simulation.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Chip parameter file; the built-in 3D TLC set when absent.
    pub chip: Option<PathBuf>,
    pub geometry: GeometryOverrides,
    pub scheme: Scheme,
    pub pec: u32,
    /// Fraction of physical pages holding live data after preconditioning.
    pub utilization: f64,
    /// Aging replays one erase per this many cycles.
    pub precondition_stride: u32,
    /// Untimed random overwrites after the fill, in multiples of the logical capacity.
    pub warm_up: f64,
    pub trace: TraceSource,
    pub accel: f64,
    pub disk: Option<u32>,
    pub seed: u64,
    pub mispredict_rate: f64,
    pub gc: GcConfig,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chip: None,
            geometry: GeometryOverrides::default(),
            scheme: Scheme::Aero,
            pec: 500,
            utilization: 0.8,
            precondition_stride: 1,
            warm_up: 1.0,
            trace: TraceSource::Synth(SynthParams::ali_e(600 * crate::units::NS_PER_SEC)),
            accel: 10.0,
            disk: None,
            seed: 1,
            mispredict_rate: 0.0,
            gc: GcConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

pub fn load_chip(path: Option<&Path>) -> Result<ChipParams> {
    match path {
        None => Ok(ChipParams::shipped()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            ChipParams::from_toml(&text)
        }
    }
}

/// Hex SHA-256 of a value's canonical JSON form.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        content_hash(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.utilization > 0.0 && self.utilization < 1.0) {
            return Err(Error::Config(format!("utilization {} outside (0, 1)", self.utilization)));
        }
        if !(self.accel > 0.0) {
            return Err(Error::Config("acceleration factor must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mispredict_rate) {
            return Err(Error::Config(format!("misprediction rate {} outside [0, 1]", self.mispredict_rate)));
        }
        if !(self.warm_up >= 0.0) {
            return Err(Error::Config("warm-up must be non-negative".into()));
        }
        self.sim.validate()
    }

    /// Chip parameters with the geometry overrides applied. The base layout is the
    /// multi-die miniature unless a chip file brings its own.
    pub fn chip_params(&self) -> Result<ChipParams> {
        let mut p = load_chip(self.chip.as_deref())?;
        let base = if self.chip.is_some() { p.geometry.clone() } else { Geometry::miniature() };
        p.geometry = self.geometry.apply(base);
        p.validate()?;
        Ok(p)
    }

    /// Drive aged to `pec`, filled and warmed up, ready for the trace.
    pub fn build_ftl(&self) -> Result<Ftl> {
        self.validate()?;
        let params = self.chip_params()?;
        let blocks = params.geometry.blocks();
        let chip = ChipModel::new(params, self.seed)?;
        let misp = Mispredictor { rate: self.mispredict_rate, seed: self.seed };
        let engine = EraseEngine::new(self.scheme, blocks, EraseTimingTable::shipped(), misp);
        let mut ftl = Ftl::new(chip, engine, self.gc.clone())?;
        ftl.precondition(self.utilization, self.pec, self.precondition_stride)?;
        let pages = (ftl.logical_pages() as f64 * self.warm_up).round() as u64;
        ftl.warm_up(pages, self.seed)?;
        Ok(ftl)
    }

    pub fn load_requests(&self, capacity: u64) -> Result<Vec<IoRequest>> {
        match &self.trace {
            TraceSource::Synth(p) => synth(p, capacity, self.seed),
            TraceSource::File { format, path } => {
                let opts = ParseOptions { accel: self.accel, disk: self.disk };
                load_trace(path, *format, &opts)
            }
        }
    }

    /// Precondition, replay the trace and return the raw results.
    pub fn simulate(&self) -> Result<SimOutput> {
        let ftl = self.build_ftl()?;
        let trace = self.load_requests(ftl.logical_capacity())?;
        Simulator::new(ftl, self.sim.clone())?.run(&trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_overrides() {
        let cfg = RunConfig { pec: 2500, scheme: Scheme::Baseline, ..Default::default() };
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());

        let partial = RunConfig::from_toml("pec = 1000\n[geometry]\nchannels = 1\n").unwrap();
        assert_eq!(partial.pec, 1000);
        assert_eq!(partial.chip_params().unwrap().geometry.channels, 1);
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn trace_specs() {
        assert_eq!(
            TraceSource::parse("msrc:hm_0.csv").unwrap(),
            TraceSource::File { format: TraceFormat::Msrc, path: "hm_0.csv".into() }
        );
        match TraceSource::parse("ali-e:30").unwrap() {
            TraceSource::Synth(p) => assert_eq!(p.duration, 30 * crate::units::NS_PER_SEC),
            other => panic!("{other:?}"),
        }
        assert!(matches!(TraceSource::parse("hm_0.csv"), Err(Error::Usage(_))));
        assert!(matches!(TraceSource::parse("tar:x"), Err(Error::Usage(_))));
    }
}
