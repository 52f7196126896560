use serde::{Deserialize, Serialize};

use crate::chip::{ChipModel, ChipParams, Geometry};
use crate::erase::{erase_baseline, Scheme};
use crate::error::{Error, Result};

use super::lifetime::{lifetime_experiment, stratified_hardness, LifetimeConfig};

/// Reference points the wear and penalty constants are fitted to.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CalibrationAnchors {
    /// Error count of a fresh block after a complete erase.
    pub fresh_rber: f64,
    /// Error count of a fresh block whose first-loop erase skipped the remainder pulse.
    pub aggressive_fresh_rber: f64,
    /// P/E count at which conventional erasure reaches the requirement.
    pub baseline_lifetime: u32,
    pub requirement: f64,
    /// Lifetime of loop-skipping erasure relative to conventional erasure.
    pub iispe_lifetime_ratio: f64,
    pub blocks: u32,
    pub seed: u64,
}

impl Default for CalibrationAnchors {
    fn default() -> Self {
        CalibrationAnchors {
            fresh_rber: 16.0,
            aggressive_fresh_rber: 46.0,
            baseline_lifetime: 5300,
            requirement: 63.0,
            iispe_lifetime_ratio: 0.75,
            blocks: 120,
            seed: 1,
        }
    }
}

/// Fitted parameter set plus how closely it meets each anchor.
#[derive(Serialize, Clone, Debug)]
pub struct Calibration {
    pub params: ChipParams,
    /// (anchor, residual in bit errors)
    pub residuals: Vec<(String, f64)>,
    pub iispe_lifetime_ratio: f64,
}

fn lifetime(params: &ChipParams, scheme: Scheme, a: &CalibrationAnchors, max_pec: u32) -> Result<Option<f64>> {
    let cfg = LifetimeConfig {
        blocks: a.blocks,
        step: 50,
        max_pec,
        seed: a.seed,
        requirement: Some(a.requirement),
        stop_after_crossing: true,
        ..LifetimeConfig::default()
    };
    Ok(lifetime_experiment(params, scheme, &cfg)?.crossing)
}

/// Mean error count of conventional erasure at the anchor age, with the given wear scale.
fn baseline_mean_at(params: &ChipParams, a: &CalibrationAnchors) -> Result<f64> {
    let cfg = LifetimeConfig {
        blocks: a.blocks,
        step: a.baseline_lifetime,
        max_pec: a.baseline_lifetime,
        seed: a.seed,
        requirement: Some(params.rber.ecc_capability),
        ..LifetimeConfig::default()
    };
    let curve = lifetime_experiment(params, Scheme::Baseline, &cfg)?;
    curve
        .mean_rber
        .last()
        .copied()
        .filter(|_| curve.pec.last() == Some(&a.baseline_lifetime))
        .ok_or_else(|| Error::Calibration("every block retired before the anchor age".into()))
}

fn check_anchors(params: &ChipParams, a: &CalibrationAnchors) -> Result<()> {
    if !(a.fresh_rber < a.aggressive_fresh_rber && a.aggressive_fresh_rber < a.requirement) {
        return Err(Error::Calibration(
            "anchors must satisfy fresh < aggressive fresh < requirement".into(),
        ));
    }
    if a.baseline_lifetime == 0 || a.baseline_lifetime > params.profile.max_pec() {
        return Err(Error::Calibration("baseline lifetime outside the modeled range".into()));
    }
    if !(0.0..1.0).contains(&a.iispe_lifetime_ratio) || a.blocks == 0 {
        return Err(Error::Calibration("lifetime ratio must lie in (0, 1) and blocks be positive".into()));
    }
    Ok(())
}

/// Largest stress any sampled block carries after its first conventional cycle.
fn first_cycle_stress(params: &ChipParams, a: &CalibrationAnchors) -> Result<f64> {
    let mut p = params.clone();
    p.geometry = Geometry { channels: 1, chips_per_channel: 1, planes_per_chip: 1, blocks_per_plane: a.blocks, ..p.geometry };
    let mut chip = ChipModel::with_hardness(p, a.seed, stratified_hardness(a.blocks, a.seed))?;
    let mut max = 0.0_f64;
    for b in 0..a.blocks {
        erase_baseline(&mut chip, b)?;
        chip.program_block(b)?;
        max = max.max(chip.block(b)?.stress);
    }
    Ok(max)
}

/// Fit wear onset, wear scale and the first-loop deficit penalty. Voltage weights,
/// the wear exponent and the later-loop penalties are taken as given.
pub fn fit_wear(params: &ChipParams, a: &CalibrationAnchors) -> Result<ChipParams> {
    check_anchors(params, a)?;
    let mut p = params.clone();
    p.rber.fresh = a.fresh_rber;
    p.rber.requirement = a.requirement;
    p.rber.wear_onset = first_cycle_stress(&p, a)?;
    p.rber.deficit_slope[0] = (a.aggressive_fresh_rber - a.fresh_rber) / 2.0;
    p.rber.wear_scale = 1.0;
    let unit = baseline_mean_at(&p, a)? - a.fresh_rber;
    if unit <= 0.0 {
        return Err(Error::Calibration("conventional erasure shows no wear at the anchor age".into()));
    }
    p.rber.wear_scale = (a.requirement - a.fresh_rber) / unit;
    p.validate()?;
    Ok(p)
}

/// Fit every calibration constant: [`fit_wear`] followed by the loop-skipping stress
/// multiplier.
pub fn calibrate(params: &ChipParams, a: &CalibrationAnchors) -> Result<Calibration> {
    let mut p = fit_wear(params, a)?;
    let at_anchor = baseline_mean_at(&p, a)?;
    let base_life = lifetime(&p, Scheme::Baseline, a, params.profile.max_pec())?
        .ok_or_else(|| Error::Calibration("conventional erasure never reaches the requirement".into()))?;
    let target = a.iispe_lifetime_ratio * base_life;
    let fitted = p.clone();
    let life_at = |beta: f64| -> Result<f64> {
        let mut q = fitted.clone();
        q.stress.iispe_beta = beta;
        Ok(lifetime(&q, Scheme::IIspe, a, params.profile.max_pec())?.unwrap_or(f64::INFINITY))
    };
    let (mut lo, mut hi) = (1.0_f64, 64.0_f64);
    let beta = if life_at(lo)? <= target {
        1.0
    } else {
        if life_at(hi)? > target {
            return Err(Error::Calibration("loop-skipping erasure cannot be made short-lived enough".into()));
        }
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if life_at(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (hi * 1e4).round() / 1e4
    };
    let iispe = life_at(beta)? / base_life;
    p.stress.iispe_beta = beta;
    p.validate()?;

    let fresh = p.rber.rber(first_cycle_stress(&p, a)?, 0, 1);
    let aggr = p.rber.rber(p.rber.wear_onset, 2, 1);
    let residuals = vec![
        ("fresh complete erase".to_string(), fresh - a.fresh_rber),
        ("fresh aggressive skip".to_string(), aggr - a.aggressive_fresh_rber),
        ("baseline at lifetime anchor".to_string(), at_anchor - a.requirement),
    ];
    if let Some((name, r)) = residuals.iter().find(|(_, r)| r.abs() >= 0.5) {
        return Err(Error::Calibration(format!("anchor `{name}` misses by {r:.3}")));
    }
    Ok(Calibration { params: p, residuals, iispe_lifetime_ratio: iispe })
}
