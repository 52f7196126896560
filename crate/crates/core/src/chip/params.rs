use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ms, us, Nanos};

use super::profile::QuantileCurve;
use super::rber::RberParams;

/// Physical organization of the flash array.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub channels: u32,
    pub chips_per_channel: u32,
    pub planes_per_chip: u32,
    pub blocks_per_plane: u32,
    pub pages_per_block: u32,
    /// Bytes.
    pub page_size: u32,
}

impl Geometry {
    /// 8 channels x 2 chips x 4 planes x 497 blocks x 2112 pages x 16 KiB.
    pub fn full_scale() -> Self {
        Geometry {
            channels: 8,
            chips_per_channel: 2,
            planes_per_chip: 4,
            blocks_per_plane: 497,
            pages_per_block: 2112,
            page_size: 16 * 1024,
        }
    }

    /// Single chip, four planes, 64 blocks of 256 pages each.
    pub fn desk() -> Self {
        Geometry {
            channels: 1,
            chips_per_channel: 1,
            planes_per_chip: 4,
            blocks_per_plane: 64,
            pages_per_block: 256,
            page_size: 16 * 1024,
        }
    }

    /// Eight dies (two channels of four chips) with small blocks, for latency runs.
    pub fn miniature() -> Self {
        Geometry { channels: 2, chips_per_channel: 4, blocks_per_plane: 16, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("channels", self.channels),
            ("chips_per_channel", self.chips_per_channel),
            ("planes_per_chip", self.planes_per_chip),
            ("blocks_per_plane", self.blocks_per_plane),
            ("pages_per_block", self.pages_per_block),
            ("page_size", self.page_size),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("geometry field `{name}` must be positive")));
            }
        }
        Ok(())
    }

    pub fn chips(&self) -> u32 {
        self.channels * self.chips_per_channel
    }

    pub fn planes(&self) -> u32 {
        self.chips() * self.planes_per_chip
    }

    pub fn blocks(&self) -> u32 {
        self.planes() * self.blocks_per_plane
    }

    pub fn pages(&self) -> u64 {
        self.blocks() as u64 * self.pages_per_block as u64
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.pages() * self.page_size as u64
    }

    /// Global plane index of a block. Blocks are numbered plane-major.
    pub fn plane_of(&self, block: u32) -> u32 {
        block / self.blocks_per_plane
    }

    pub fn chip_of(&self, block: u32) -> u32 {
        self.plane_of(block) / self.planes_per_chip
    }

    pub fn channel_of_chip(&self, chip: u32) -> u32 {
        chip / self.chips_per_channel
    }

    pub fn first_block_of_plane(&self, plane: u32) -> u32 {
        plane * self.blocks_per_plane
    }
}

/// Operation timing. All durations are integer nanoseconds.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct TimingParams {
    pub t_ep_default: Nanos,
    pub t_vr: Nanos,
    pub t_se: Nanos,
    pub quantum: Nanos,
    pub t_r: Nanos,
    pub t_prog: Nanos,
    pub t_prog_dpes_early: Nanos,
    pub t_prog_dpes_late: Nanos,
    pub max_loops: u32,
    pub quanta_per_level: u32,
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams {
            t_ep_default: us(3500),
            t_vr: us(100),
            t_se: ms(1),
            quantum: us(500),
            t_r: us(40),
            t_prog: us(350),
            t_prog_dpes_early: us(385),
            t_prog_dpes_late: us(455),
            max_loops: 5,
            quanta_per_level: 7,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if self.quantum == 0 || self.max_loops == 0 || self.quanta_per_level == 0 {
            return Err(Error::Config("quantum, max_loops and quanta_per_level must be positive".into()));
        }
        if self.t_ep_default != self.quantum * self.quanta_per_level as u64 {
            return Err(Error::Config("t_ep_default must equal quanta_per_level x quantum".into()));
        }
        if self.t_se == 0 || self.t_se % self.quantum != 0 || self.t_se >= self.t_ep_default {
            return Err(Error::Config("t_se must be a positive quantum multiple below t_ep_default".into()));
        }
        if self.t_vr == 0 || self.t_r == 0 || self.t_prog == 0 {
            return Err(Error::Config("read, program and verify latencies must be positive".into()));
        }
        Ok(())
    }

    /// Erase quanta a single ladder level can credit.
    pub fn level_capacity(&self) -> u32 {
        self.quanta_per_level
    }

    /// Largest requirement any block may have and still be erasable.
    pub fn max_quanta(&self) -> u32 {
        self.max_loops * self.quanta_per_level
    }

    pub fn quanta_of(&self, duration: Nanos) -> Result<u32> {
        if duration % self.quantum != 0 {
            return Err(Error::Alignment(duration));
        }
        Ok((duration / self.quantum) as u32)
    }

    pub fn duration_of(&self, quanta: u32) -> Nanos {
        quanta as Nanos * self.quantum
    }

    pub fn se_quanta(&self) -> u32 {
        (self.t_se / self.quantum) as u32
    }

    /// Conventional erase latency for a given number of full loops.
    pub fn default_tbers(&self, loops: u32) -> Nanos {
        (self.t_ep_default + self.t_vr) * loops as Nanos
    }
}

/// Fail-bit model constants.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct FailBitParams {
    /// Plateau when a single quantum of erasure is still missing.
    pub gamma: u32,
    /// Fail-bit decrease per additional quantum of pulse time.
    pub delta: u32,
    /// Pass threshold.
    pub f_pass: u32,
    /// Above this no pulse reduction is attempted. Always 7 x delta.
    pub f_high: u32,
    /// Fraction of each bucket excluded from the noise draw (half at each edge).
    pub noise_fraction: f64,
}

impl Default for FailBitParams {
    fn default() -> Self {
        FailBitParams { gamma: 500, delta: 5000, f_pass: 50, f_high: 35_000, noise_fraction: 0.3 }
    }
}

impl FailBitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_pass < self.gamma && self.gamma < self.delta) {
            return Err(Error::Config("fail-bit constants must satisfy f_pass < gamma < delta".into()));
        }
        if self.f_high != 7 * self.delta {
            return Err(Error::Config("f_high must equal 7 x delta".into()));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::Config("noise_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Upper boundary (inclusive) of fail-bit bucket `b`, b in 0..8.
    pub fn bucket_upper(&self, b: u32) -> u32 {
        if b == 0 {
            self.gamma
        } else {
            b * self.delta
        }
    }

    /// Smallest bucket whose boundary is not below `fail`.
    /// Counts above 7 x delta fall into a virtual bucket 8.
    pub fn bucket_of(&self, fail: u32) -> u32 {
        (0..8).find(|&b| fail <= self.bucket_upper(b)).unwrap_or(8)
    }

    /// Remaining quanta as far as the fail-bit count can tell them apart. Anything
    /// beyond eight reads above `f_high` and looks the same.
    pub fn saturating_remaining(&self, r: u32) -> u32 {
        r.min(9)
    }

    /// Inclusive fail-count range reported when `r` quanta of erasure remain.
    pub fn range_for_remaining(&self, r: u32) -> (u32, u32) {
        match r {
            0 => (0, self.f_pass),
            1 => (self.f_pass + 1, self.gamma),
            _ => ((r - 2) * self.delta + self.gamma + 1, (r - 1) * self.delta),
        }
    }

    /// Largest fail count consistent with at most `r` remaining quanta.
    pub fn ceiling_for_remaining(&self, r: u32) -> u32 {
        self.range_for_remaining(r).1
    }
}

/// Stress accounting constants.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct StressParams {
    /// Per-level voltage weight is `(1 + kappa (level - 1))^alpha`.
    pub kappa: f64,
    pub alpha: f64,
    /// Stress charged for programming every page of a block once.
    pub program_stress: f64,
    /// Multiplier on pulses issued after a skipped-loop erase failure.
    pub iispe_beta: f64,
    /// Weight multiplier while reduced-voltage erasure is in effect.
    pub dpes_weight_scale: f64,
    /// Per-erase wobble of the hardness percentile (half-width).
    pub erase_jitter: f64,
    /// Relative stress of pulse time spent after the block is already erased.
    pub over_erase_weight: f64,
    /// Quanta before full erasure over which the per-quantum stress ramps up to
    /// `over_erase_weight`.
    pub depth_ramp: f64,
}

impl Default for StressParams {
    fn default() -> Self {
        StressParams {
            kappa: 1.0,
            alpha: 2.0,
            program_stress: 0.875,
            iispe_beta: 1.5,
            dpes_weight_scale: 0.91,
            erase_jitter: 0.06,
            over_erase_weight: 1.0,
            depth_ramp: 0.0,
        }
    }
}

impl StressParams {
    pub fn voltage_weight(&self, level: u32) -> f64 {
        (1.0 + self.kappa * (level.max(1) - 1) as f64).powf(self.alpha)
    }

    /// Stress of one quantum whose ledger position is `depth` quanta past the
    /// block's requirement (negative while erasure is still incomplete).
    pub fn depth_weight(&self, depth: f64) -> f64 {
        let frac = if self.depth_ramp > 0.0 {
            ((depth + self.depth_ramp) / self.depth_ramp).clamp(0.0, 1.0)
        } else if depth > 0.0 {
            1.0
        } else {
            0.0
        };
        1.0 + (self.over_erase_weight - 1.0) * frac
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_ramp < 0.0 {
            return Err(Error::Config("depth_ramp must be non-negative".into()));
        }
        if self.kappa < 0.0 || self.alpha < 0.0 || self.program_stress < 0.0 {
            return Err(Error::Config("stress constants must be non-negative".into()));
        }
        if self.iispe_beta < 1.0 || !(0.0..=1.0).contains(&self.dpes_weight_scale) {
            return Err(Error::Config("iispe_beta must be >= 1, dpes_weight_scale in [0, 1]".into()));
        }
        if self.over_erase_weight < 1.0 {
            return Err(Error::Config("over_erase_weight must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.erase_jitter) {
            return Err(Error::Config("erase_jitter must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Everything that describes one chip type. Serialized as the chip parameter file.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ChipParams {
    pub name: String,
    pub geometry: Geometry,
    pub timing: TimingParams,
    pub failbits: FailBitParams,
    pub stress: StressParams,
    pub rber: RberParams,
    pub profile: QuantileCurve,
}

const SHIPPED: &str = include_str!("../../data/chip_3d_tlc.toml");

impl ChipParams {
    /// The shipped 3D TLC parameter set.
    pub fn shipped() -> Self {
        Self::from_toml(SHIPPED).expect("shipped chip parameter file is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: ChipParams = toml::from_str(text).map_err(|e| Error::Config(format!("chip parameter file: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("chip parameters serialize")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.timing.validate()?;
        self.failbits.validate()?;
        self.stress.validate()?;
        self.rber.validate()?;
        self.profile.validate(self.timing.max_quanta())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_file_round_trips() {
        let text = include_str!("../../data/chip_3d_tlc.toml");
        let p = ChipParams::from_toml(text).unwrap();
        assert_eq!(p.to_toml(), text);
    }

    #[test]
    fn bucket_edges() {
        let fb = ChipParams::shipped().failbits;
        assert_eq!(fb.bucket_of(fb.gamma), 0);
        assert_eq!(fb.bucket_of(fb.gamma + 1), 1);
        assert_eq!(fb.bucket_of(fb.delta), 1);
        assert_eq!(fb.bucket_of(7 * fb.delta), 7);
        assert_eq!(fb.bucket_of(7 * fb.delta + 1), 8);
    }

    #[test]
    fn desk_geometry_is_small() {
        let g = Geometry::desk();
        g.validate().unwrap();
        assert_eq!(g.blocks(), 4 * 64);
        assert_eq!(g.plane_of(65), 1);
    }
}
