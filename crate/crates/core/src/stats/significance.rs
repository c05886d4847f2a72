//! Significance tests: Pearson chi-squared and two-sample t-tests.

use serde::{Deserialize, Serialize};

use super::{Result, StatsError};
use crate::special::{chi2_sf, erfc, student_t_two_sided};

/// 2×2 table: rows are venues, columns are (group, rest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: [[u64; 2]; 2],
}

impl ContingencyTable {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        Self { counts }
    }

    /// Builds the venue × (group vs rest) table from per-venue group and total counts.
    pub fn group_vs_rest(group_a: u64, total_a: u64, group_b: u64, total_b: u64) -> Self {
        Self { counts: [[group_a, total_a - group_a], [group_b, total_b - group_b]] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson chi-squared on a 2×2 table, no continuity correction, df = 1.
pub fn chi2_2x2(t: &ContingencyTable) -> Result<(f64, f64)> {
    let c = t.counts;
    let rows = [c[0][0] + c[0][1], c[1][0] + c[1][1]];
    let cols = [c[0][0] + c[1][0], c[0][1] + c[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::TestUndefined("zero marginal in 2x2 table".into()));
    }
    let n = (rows[0] + rows[1]) as f64;
    let mut stat = 0.0;
    for (i, row) in c.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            let d = obs as f64 - expected;
            stat += d * d / expected;
        }
    }
    let p = erfc((stat / 2.0).sqrt()).clamp(0.0, 1.0);
    Ok((stat, p))
}

/// Pearson chi-squared on an r×c table with df = (r-1)(c-1).
///
/// Columns whose total is zero are dropped before testing.
pub fn chi2_table(counts: &[Vec<u64>]) -> Result<Chi2Result> {
    let r = counts.len();
    if r < 2 {
        return Err(StatsError::TestUndefined("chi-squared needs at least two rows".into()));
    }
    let width = counts[0].len();
    if counts.iter().any(|row| row.len() != width) {
        return Err(StatsError::InvalidInput("ragged contingency table".into()));
    }
    let keep: Vec<usize> = (0..width).filter(|&j| counts.iter().any(|row| row[j] > 0)).collect();
    let rows: Vec<u64> = counts.iter().map(|row| row.iter().sum()).collect();
    if keep.len() < 2 || rows.contains(&0) {
        return Err(StatsError::TestUndefined("degenerate contingency table".into()));
    }
    let cols: Vec<u64> = keep.iter().map(|&j| counts.iter().map(|row| row[j]).sum()).collect();
    let n: u64 = rows.iter().sum();
    let mut stat = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (cj, &j) in keep.iter().enumerate() {
            let expected = rows[i] as f64 * cols[cj] as f64 / n as f64;
            let d = row[j] as f64 - expected;
            stat += d * d / expected;
        }
    }
    let dof = ((r - 1) * (keep.len() - 1)) as f64;
    Ok(Chi2Result { statistic: stat, dof, p_value: chi2_sf(stat, dof).clamp(0.0, 1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p_value: f64,
    pub dof: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn check_samples(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(StatsError::InvalidInput("t-test needs at least two observations per sample".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite observation".into()));
    }
    Ok(())
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t(xs: &[f64], ys: &[f64]) -> Result<TTestResult> {
    check_samples(xs, ys)?;
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let sx = vx / nx;
    let sy = vy / ny;
    if sx + sy == 0.0 {
        return Err(StatsError::TestUndefined("both samples have zero variance".into()));
    }
    let t = (mx - my) / (sx + sy).sqrt();
    let dof = (sx + sy).powi(2) / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    Ok(TTestResult { t, p_value: student_t_two_sided(t, dof), dof })
}

/// Student's pooled-variance t-test, two-sided.
pub fn pooled_t(xs: &[f64], ys: &[f64]) -> Result<TTestResult> {
    check_samples(xs, ys)?;
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let dof = nx + ny - 2.0;
    let pooled = ((nx - 1.0) * vx + (ny - 1.0) * vy) / dof;
    if pooled == 0.0 {
        return Err(StatsError::TestUndefined("both samples have zero variance".into()));
    }
    let t = (mx - my) / (pooled * (1.0 / nx + 1.0 / ny)).sqrt();
    Ok(TTestResult { t, p_value: student_t_two_sided(t, dof), dof })
}

/// Significance marker attached to a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "ns")]
    Ns,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
    #[serde(rename = "****")]
    Four,
}

impl Stars {
    pub fn as_str(self) -> &'static str {
        match self {
            Stars::Ns => "ns",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
            Stars::Four => "****",
        }
    }
}

pub fn star_format(p: f64) -> Stars {
    if p < 1e-4 {
        Stars::Four
    } else if p < 1e-3 {
        Stars::Three
    } else if p < 0.01 {
        Stars::Two
    } else if p < 0.05 {
        Stars::One
    } else {
        Stars::Ns
    }
}
