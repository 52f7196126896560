use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One knot row of the erase-requirement quantile surface.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct AnchorRow {
    pub pec: u32,
    /// `[percentile, quanta]` knots, percentile running from 0 to 1.
    pub points: Vec<[f64; 2]>,
}

impl AnchorRow {
    fn at(&self, u: f64) -> f64 {
        let pts = &self.points;
        let i = pts.partition_point(|p| p[0] <= u).clamp(1, pts.len() - 1);
        let (a, b) = (pts[i - 1], pts[i]);
        if b[0] == a[0] {
            return b[1];
        }
        a[1] + (b[1] - a[1]) * (u - a[0]) / (b[0] - a[0])
    }
}

/// Minimum cumulative erase time (in quanta) a block needs, as a function of its
/// hardness percentile and its P/E cycle count. Piecewise linear in both.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct QuantileCurve {
    pub rows: Vec<AnchorRow>,
}

impl QuantileCurve {
    pub fn max_pec(&self) -> u32 {
        self.rows.last().map_or(0, |r| r.pec)
    }

    /// Continuous requirement in quanta.
    pub fn quantile(&self, u: f64, pec: u32) -> Result<f64> {
        if pec > self.max_pec() {
            return Err(Error::Extrapolation { pec, max: self.max_pec() });
        }
        let u = u.clamp(0.0, 1.0);
        let i = self.rows.partition_point(|r| r.pec <= pec);
        if i >= self.rows.len() {
            return Ok(self.rows[self.rows.len() - 1].at(u));
        }
        let (lo, hi) = (&self.rows[i - 1], &self.rows[i]);
        let t = (pec - lo.pec) as f64 / (hi.pec - lo.pec) as f64;
        Ok(lo.at(u) * (1.0 - t) + hi.at(u) * t)
    }

    /// Whole quanta of erase time needed.
    pub fn required_quanta(&self, u: f64, pec: u32) -> Result<u32> {
        let q = self.quantile(u, pec)?;
        Ok(((q - 1e-9).ceil() as u32).max(1))
    }

    pub fn validate(&self, max_quanta: u32) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("quantile profile: {m}")));
        if self.rows.is_empty() || self.rows[0].pec != 0 {
            return bad("first row must sit at 0 P/E cycles");
        }
        for w in self.rows.windows(2) {
            if w[1].pec <= w[0].pec {
                return bad("rows must have strictly increasing P/E cycle counts");
            }
        }
        let mut knots: Vec<f64> = Vec::new();
        for row in &self.rows {
            let pts = &row.points;
            if pts.len() < 2 || pts[0][0] != 0.0 || pts[pts.len() - 1][0] != 1.0 {
                return bad("each row must span percentiles 0 through 1");
            }
            for w in pts.windows(2) {
                if w[1][0] < w[0][0] || w[1][1] < w[0][1] {
                    return bad("knots must be non-decreasing");
                }
            }
            if pts.iter().any(|p| p[1] <= 0.0 || p[1] > max_quanta as f64) {
                return bad("requirements must lie in (0, max quanta]");
            }
            knots.extend(pts.iter().map(|p| p[0]));
        }
        // Piecewise linear surfaces are monotone in age iff they are at every knot.
        for w in self.rows.windows(2) {
            for &u in &knots {
                if w[1].at(u) + 1e-12 < w[0].at(u) {
                    return bad("requirement must not decrease with P/E cycles");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> QuantileCurve {
        QuantileCurve {
            rows: vec![
                AnchorRow { pec: 0, points: vec![[0.0, 2.0], [1.0, 6.0]] },
                AnchorRow { pec: 1000, points: vec![[0.0, 4.0], [0.5, 6.0], [1.0, 10.0]] },
            ],
        }
    }

    #[test]
    fn interpolates_both_axes() {
        let c = curve();
        assert!((c.quantile(0.5, 0).unwrap() - 4.0).abs() < 1e-12);
        assert!((c.quantile(0.5, 1000).unwrap() - 6.0).abs() < 1e-12);
        assert!((c.quantile(0.5, 500).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(c.required_quanta(0.5, 500).unwrap(), 5);
        assert_eq!(c.required_quanta(0.51, 500).unwrap(), 6);
    }

    #[test]
    fn beyond_last_row_is_an_error() {
        assert!(matches!(curve().quantile(0.3, 1001), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn rejects_aging_that_helps() {
        let mut c = curve();
        c.rows[1].points[0][1] = 1.0;
        assert!(c.validate(35).is_err());
        assert!(curve().validate(35).is_ok());
    }
}
