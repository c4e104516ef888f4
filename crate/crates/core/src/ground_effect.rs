//! Tabulated near-ground thrust-ratio model.
//!
//! The table stores mean thrust ratios T(z, phi) / T_inf(phi) over a
//! rectangular (tilt angle, height) grid, plus a per-cell standard deviation
//! for the time variability observed near the ground. Lookups interpolate
//! bilinearly; above the tallest grid height the ratio is exactly 1, below
//! the lowest it clamps (extrapolating a suction trend could go negative),
//! below the smallest tabulated angle it blends linearly toward 1 at zero
//! tilt, and above the largest angle it clamps to the top row.
//!
//! File format: one header line `phi_deg,z_m,ratio,sigma`, then one
//! comma-separated row per grid cell. Angles in degrees, heights in meters.
//! Lines starting with `#` are comments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("grid is not rectangular: {0}")]
    NonRectangularGrid(String),
    #[error("non-positive thrust ratio {ratio} at phi={phi_deg} deg, z={z_m} m")]
    NonPositiveRatio { phi_deg: f64, z_m: f64, ratio: f64 },
    #[error("negative sigma at phi={phi_deg} deg, z={z_m} m")]
    NegativeSigma { phi_deg: f64, z_m: f64 },
    #[error("far-field row at z={z_m} m deviates from 1 by more than 2% (ratio {ratio})")]
    FarFieldMismatch { z_m: f64, ratio: f64 },
}

/// Thrust-ratio grid over (tilt angle, height). Axes are sorted ascending;
/// `ratio` and `sigma` are row-major with angles as rows.
#[derive(Debug, Clone)]
pub struct GroundEffectTable {
    /// Tilt angles in degrees, ascending.
    pub angles_deg: Vec<f64>,
    /// Heights above ground in meters, ascending.
    pub heights_m: Vec<f64>,
    /// Mean thrust ratio per (angle, height) cell.
    pub ratio: Vec<f64>,
    /// Relative standard deviation per cell.
    pub sigma: Vec<f64>,
}

impl GroundEffectTable {
    fn cell(&self, ai: usize, hi: usize) -> usize {
        ai * self.heights_m.len() + hi
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields != ["phi_deg", "z_m", "ratio", "sigma"] {
                    return Err(TableError::Parse {
                        line: idx + 1,
                        msg: format!("expected header `phi_deg,z_m,ratio,sigma`, got `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(TableError::Parse {
                    line: idx + 1,
                    msg: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let mut vals = [0.0f64; 4];
            for (v, f) in vals.iter_mut().zip(fields.iter()) {
                *v = f.parse().map_err(|e| TableError::Parse {
                    line: idx + 1,
                    msg: format!("bad number `{f}`: {e}"),
                })?;
            }
            rows.push((vals[0], vals[1], vals[2], vals[3]));
        }
        if !saw_header || rows.is_empty() {
            return Err(TableError::Parse {
                line: 0,
                msg: "table has no data rows".into(),
            });
        }
        Self::from_rows(&rows)
    }

    pub fn from_rows(rows: &[(f64, f64, f64, f64)]) -> Result<Self, TableError> {
        let mut angles: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut heights: Vec<f64> = rows.iter().map(|r| r.1).collect();
        angles.sort_by(|a, b| a.total_cmp(b));
        angles.dedup();
        heights.sort_by(|a, b| a.total_cmp(b));
        heights.dedup();

        let expect = angles.len() * heights.len();
        if rows.len() != expect {
            return Err(TableError::NonRectangularGrid(format!(
                "{} rows for a {}x{} grid",
                rows.len(),
                angles.len(),
                heights.len()
            )));
        }

        let mut table = GroundEffectTable {
            ratio: vec![f64::NAN; expect],
            sigma: vec![f64::NAN; expect],
            angles_deg: angles,
            heights_m: heights,
        };
        for &(phi_deg, z_m, ratio, sigma) in rows {
            if ratio <= 0.0 {
                return Err(TableError::NonPositiveRatio { phi_deg, z_m, ratio });
            }
            if sigma < 0.0 {
                return Err(TableError::NegativeSigma { phi_deg, z_m });
            }
            let ai = table.angles_deg.iter().position(|&a| a == phi_deg).unwrap();
            let hi = table.heights_m.iter().position(|&h| h == z_m).unwrap();
            let c = table.cell(ai, hi);
            if !table.ratio[c].is_nan() {
                return Err(TableError::NonRectangularGrid(format!(
                    "duplicate cell at phi={phi_deg}, z={z_m}"
                )));
            }
            table.ratio[c] = ratio;
            table.sigma[c] = sigma;
        }
        if table.ratio.iter().any(|r| r.is_nan()) {
            return Err(TableError::NonRectangularGrid("missing cells".into()));
        }
        let top = table.heights_m.len() - 1;
        for ai in 0..table.angles_deg.len() {
            let r = table.ratio[table.cell(ai, top)];
            if (r - 1.0).abs() > 0.02 {
                return Err(TableError::FarFieldMismatch {
                    z_m: table.heights_m[top],
                    ratio: r,
                });
            }
        }
        Ok(table)
    }

    /// Interpolate one grid (ratio or sigma) at (phi_deg, z). `far_value`
    /// is the value taken above the tallest grid height and the anchor the
    /// below-minimum-angle blend converges to at zero tilt.
    fn lookup(&self, grid: &[f64], z: f64, phi_deg: f64, far_value: f64) -> f64 {
        let heights = &self.heights_m;
        let angles = &self.angles_deg;
        if z > *heights.last().unwrap() {
            return far_value;
        }
        let z = z.max(heights[0]);
        let (hi0, hi1, tz) = bracket(heights, z);

        let row_at = |ai: usize| -> f64 {
            let a = grid[self.cell(ai, hi0)];
            let b = grid[self.cell(ai, hi1)];
            a + tz * (b - a)
        };

        if phi_deg <= angles[0] {
            // Blend linearly toward the untilted far value at phi = 0.
            let frac = (phi_deg / angles[0]).clamp(0.0, 1.0);
            return far_value + frac * (row_at(0) - far_value);
        }
        if phi_deg >= *angles.last().unwrap() {
            return row_at(angles.len() - 1);
        }
        let (ai0, ai1, ta) = bracket(angles, phi_deg);
        let a = row_at(ai0);
        let b = row_at(ai1);
        a + ta * (b - a)
    }

    /// Mean thrust ratio at height `z` (m) and tilt `phi` (rad).
    pub fn thrust_ratio(&self, z: f64, phi: f64) -> f64 {
        debug_assert!(z >= 0.0);
        self.lookup(&self.ratio, z, phi.to_degrees(), 1.0)
    }

    /// Interpolated thrust-variability standard deviation; zero in the far
    /// field so that far-from-ground thrust is deterministic.
    pub fn sigma_at(&self, z: f64, phi: f64) -> f64 {
        self.lookup(&self.sigma, z, phi.to_degrees(), 0.0)
    }

    /// Mean ratio plus zero-mean Gaussian variability with the interpolated
    /// per-cell standard deviation. Deterministic under a seeded generator.
    pub fn sample_ratio<R: Rng + ?Sized>(&self, z: f64, phi: f64, rng: &mut R) -> f64 {
        let mean = self.thrust_ratio(z, phi);
        let sigma = self.sigma_at(z, phi);
        let n: f64 = StandardNormal.sample(rng);
        (mean + sigma * n).max(0.0)
    }
}

/// Indices bracketing `v` in a sorted axis plus the interpolation fraction.
fn bracket(axis: &[f64], v: f64) -> (usize, usize, f64) {
    if v <= axis[0] {
        return (0, 0, 0.0);
    }
    if v >= *axis.last().unwrap() {
        let n = axis.len() - 1;
        return (n, n, 0.0);
    }
    let mut i = 0;
    while axis[i + 1] < v {
        i += 1;
    }
    let t = (v - axis[i]) / (axis[i + 1] - axis[i]);
    (i, i + 1, t)
}
