use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps accumulated stress and incomplete erasure onto the worst-page raw bit error
/// count (errors per 1 KiB).
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct RberParams {
    /// Error count of a fresh, fully erased block.
    pub fresh: f64,
    /// Stress a block may absorb before wear begins to show.
    pub wear_onset: f64,
    pub wear_scale: f64,
    pub wear_exponent: f64,
    /// Extra errors per quantum an erase ends short, by the loop it ended in.
    pub deficit_slope: Vec<f64>,
    /// Worst-case error count right after a complete erase that needed N loops.
    pub worst_after_loops: Vec<f64>,
    /// Error count the device is allowed to reach before retirement.
    pub requirement: f64,
    /// Correction capability of the ECC engine.
    pub ecc_capability: f64,
}

impl Default for RberParams {
    fn default() -> Self {
        RberParams {
            fresh: 16.0,
            wear_onset: 0.0,
            wear_scale: 1e-6,
            wear_exponent: 1.7,
            deficit_slope: vec![15.0, 4.0, 6.0, 8.0, 8.0],
            worst_after_loops: vec![16.0, 30.0, 36.0, 50.0, 58.0],
            requirement: 63.0,
            ecc_capability: 72.0,
        }
    }
}

impl RberParams {
    pub fn validate(&self) -> Result<()> {
        if self.fresh < 0.0 || self.wear_scale < 0.0 || self.wear_exponent < 1.0 {
            return Err(Error::Config("wear curve must be non-negative and convex".into()));
        }
        if self.deficit_slope.len() != self.worst_after_loops.len() || self.deficit_slope.iter().any(|&c| c <= 0.0) {
            return Err(Error::Config("deficit penalty must be positive".into()));
        }
        if self.worst_after_loops.is_empty() || self.worst_after_loops.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("worst_after_loops must be non-empty and non-decreasing".into()));
        }
        if self.requirement <= 0.0 || self.requirement > self.ecc_capability {
            return Err(Error::Config("requirement must be positive and within ECC capability".into()));
        }
        Ok(())
    }

    /// Error count due to accumulated stress alone.
    pub fn wear(&self, stress: f64) -> f64 {
        self.fresh + self.wear_scale * (stress - self.wear_onset).max(0.0).powf(self.wear_exponent)
    }

    fn row(&self, loops: u32) -> usize {
        (loops.max(1) as usize - 1).min(self.worst_after_loops.len() - 1)
    }

    pub fn deficit_penalty(&self, deficit: u32, loops: u32) -> f64 {
        self.deficit_slope[self.row(loops)] * deficit as f64
    }

    /// Error count of a block with `stress` whose last erase ended in loop `loops`,
    /// `deficit` quanta short.
    pub fn rber(&self, stress: f64, deficit: u32, loops: u32) -> f64 {
        self.wear(stress) + self.deficit_penalty(deficit, loops)
    }

    /// Largest deficit (at most `cap`) that keeps a block completing in `loops` loops
    /// below `requirement` even in the worst case.
    pub fn allowed_deficit(&self, loops: u32, requirement: f64, cap: u32) -> u32 {
        let base = self.worst_after_loops[self.row(loops)];
        (0..=cap).rev().find(|&d| base + self.deficit_penalty(d, loops) < requirement).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allowed_deficit_by_requirement() {
        let p = crate::chip::ChipParams::shipped().rber;
        let at = |r: f64| (1..=5).map(|n| p.allowed_deficit(n, r, 2)).collect::<Vec<_>>();
        assert_eq!(at(63.0), vec![2, 2, 2, 1, 0]);
        assert_eq!(at(40.0), vec![1, 2, 0, 0, 0]);
    }

    #[test]
    fn wear_is_monotone() {
        let p = RberParams { wear_scale: 0.01, ..Default::default() };
        let mut last = 0.0;
        for s in 0..200 {
            let v = p.wear(s as f64 * 10.0);
            assert!(v >= last);
            last = v;
        }
        assert_eq!(p.wear(0.0), 16.0);
    }
}
