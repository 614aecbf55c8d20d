//! Rank-based marginal transformation between the observation scale
//! (x-scale) and marginally standard normal pseudo-observations (z-scale).
//!
//! Empirical margins use `rank / (n + 1)` where the rank of a value counts
//! sample entries `<=` it, so ties share the highest rank of their group.
//! The inverse map interpolates linearly between adjacent order statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::normal;
use crate::{Error, Result};

/// Column-oriented numeric table with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DataMatrix {
    /// Builds a table, checking that all columns have the same length.
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(Error::invalid("columns have different lengths"));
            }
        }
        Ok(DataMatrix { names, columns })
    }

    /// Table with generated names `x1, x2, …`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (1..=columns.len()).map(|i| format!("x{i}")).collect();
        DataMatrix::new(names, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// New table holding the listed columns in the listed order.
    pub fn select(&self, indices: &[usize]) -> DataMatrix {
        DataMatrix {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }
}

/// Sorted copy of one variable's sample, used for forward and inverse
/// empirical-margin lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginTable {
    sorted_values: Vec<f64>,
}

impl MarginTable {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("a margin needs at least two observations"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in margin"));
        }
        let mut sorted_values = values.to_vec();
        sorted_values.sort_by(f64::total_cmp);
        Ok(MarginTable { sorted_values })
    }

    pub fn n(&self) -> usize {
        self.sorted_values.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted_values
    }

    /// Number of sample entries `<= x`.
    pub fn rank(&self, x: f64) -> usize {
        self.sorted_values.partition_point(|&v| v <= x)
    }

    /// `rank(x) / (n + 1)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.rank(x) as f64 / (self.n() as f64 + 1.0)
    }

    /// Maps `x` to the z-scale. Values below the sample minimum are clamped
    /// to it; the flag reports whether clamping happened.
    pub fn to_z(&self, x: f64) -> (f64, bool) {
        let n = self.n() as f64;
        let min = self.sorted_values[0];
        let max = self.sorted_values[self.n() - 1];
        let clamped = x < min || x > max;
        let r = self.rank(x.max(min)).max(1);
        (normal::quantile(r as f64 / (n + 1.0)), clamped)
    }

    /// Inverse of [`MarginTable::to_z`]: linear interpolation between
    /// adjacent order statistics at fractional rank `Φ(z)(n+1)`, constant
    /// outside `[1, n]`. The flag reports extrapolation.
    pub fn to_x(&self, z: f64) -> (f64, bool) {
        let n = self.n();
        let pos = normal::cdf(z) * (n as f64 + 1.0);
        if !(pos >= 1.0) {
            return (self.sorted_values[0], pos < 1.0 - 1e-9);
        }
        if pos >= n as f64 {
            return (self.sorted_values[n - 1], pos > n as f64 + 1e-9);
        }
        // Snap to the nearest rank when rounding put us a hair off it.
        let nearest = libm::round(pos);
        let pos = if libm::fabs(pos - nearest) < 1e-9 { nearest } else { pos };
        let lo = libm::floor(pos) as usize;
        let frac = pos - lo as f64;
        let a = self.sorted_values[lo - 1];
        if frac == 0.0 {
            return (a, false);
        }
        let b = self.sorted_values[lo];
        (a + frac * (b - a), false)
    }
}

/// `rank(query) / (n + 1)` with ranks counted by `<=`.
pub fn empirical_cdf(sample_column: &[f64], query: f64) -> Result<f64> {
    if sample_column.is_empty() {
        return Err(Error::invalid("empty sample column"));
    }
    if !query.is_finite() {
        return Err(Error::invalid("non-finite query"));
    }
    let rank = sample_column.iter().filter(|&&v| v <= query).count();
    Ok(rank as f64 / (sample_column.len() as f64 + 1.0))
}

/// Marginally standard normal pseudo-observations together with the
/// margin tables needed to move points between scales.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    /// One z-scale column per variable.
    pub z: Vec<Vec<f64>>,
    pub margins: Vec<MarginTable>,
    pub column_names: Vec<String>,
}

impl PseudoSample {
    pub fn n(&self) -> usize {
        self.z.first().map_or(0, Vec::len)
    }

    pub fn p(&self) -> usize {
        self.z.len()
    }

    /// Builds a sample directly from z-scale columns. Margins are taken
    /// from the columns themselves.
    pub fn from_z_columns(z: Vec<Vec<f64>>) -> Result<Self> {
        let margins = z.iter().map(|c| MarginTable::new(c)).collect::<Result<Vec<_>>>()?;
        let column_names = (1..=z.len()).map(|i| format!("z{i}")).collect();
        Ok(PseudoSample { z, margins, column_names })
    }

    /// Observation `i` as a point.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.z.iter().map(|c| c[i]).collect()
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select(&self, indices: &[usize]) -> PseudoSample {
        PseudoSample {
            z: indices.iter().map(|&i| self.z[i].clone()).collect(),
            margins: indices.iter().map(|&i| self.margins[i].clone()).collect(),
            column_names: indices.iter().map(|&i| self.column_names[i].clone()).collect(),
        }
    }

    /// Maps an x-scale point to the z-scale; flags mark clamped coordinates.
    pub fn x_to_z_point(&self, x_point: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_dim(x_point.len())?;
        if x_point.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(self.margins.iter().zip(x_point).map(|(m, &x)| m.to_z(x)).unzip())
    }

    /// Maps a z-scale point to the x-scale; flags mark extrapolated coordinates.
    pub fn z_to_x_point(&self, z_point: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_dim(z_point.len())?;
        if z_point.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("NaN coordinate"));
        }
        Ok(self.margins.iter().zip(z_point).map(|(m, &z)| m.to_x(z)).unzip())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.p() {
            return Err(Error::invalid(format!("point has {d} coordinates, sample has {}", self.p())));
        }
        Ok(())
    }
}

/// Normal scores of one column: `Φ⁻¹(rank / (n + 1))`.
pub fn normal_scores(column: &[f64]) -> Vec<f64> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]));
    let denom = n as f64 + 1.0;
    let mut z = alloc::vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && column[order[end]] == column[order[start]] {
            end += 1;
        }
        // Tied block shares rank `end` (count of entries <= value).
        let score = normal::quantile(end as f64 / denom);
        for &i in &order[start..end] {
            z[i] = score;
        }
        start = end;
    }
    z
}

/// Column-wise rank transform to normal scores.
pub fn to_pseudo_normal(x: &DataMatrix) -> Result<PseudoSample> {
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::invalid("at least two observations are required"));
    }
    for (name, col) in x.names.iter().zip(&x.columns) {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite entry in column '{name}'")));
        }
    }
    let z = x.columns.iter().map(|c| normal_scores(c)).collect();
    let margins = x.columns.iter().map(|c| MarginTable::new(c)).collect::<Result<Vec<_>>>()?;
    Ok(PseudoSample { z, margins, column_names: x.names.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_examples() {
        assert_eq!(empirical_cdf(&[3.0, 1.0, 4.0, 2.0], 2.0).unwrap(), 0.4);
        assert_eq!(empirical_cdf(&[5.0, 5.0, 5.0], 5.0).unwrap(), 0.75);
        assert!(empirical_cdf(&[], 1.0).is_err());
        assert!(empirical_cdf(&[1.0, 2.0], f64::NAN).is_err());
    }

    #[test]
    fn three_point_column() {
        let x = DataMatrix::from_columns(vec![vec![10.0, 20.0, 30.0]]).unwrap();
        let s = to_pseudo_normal(&x).unwrap();
        assert_abs_diff_eq!(s.z[0][0], -0.674_489_750_196_081_7, epsilon = 1e-12);
        assert_eq!(s.z[0][1], 0.0);
        assert_abs_diff_eq!(s.z[0][2], 0.674_489_750_196_081_7, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let short = DataMatrix::from_columns(vec![vec![1.0]]).unwrap();
        assert!(to_pseudo_normal(&short).is_err());
        let nan = DataMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0], vec![1.0, f64::INFINITY]],
        )
        .unwrap();
        match to_pseudo_normal(&nan) {
            Err(Error::InvalidInput(msg)) => assert!(msg.contains("'b'")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ties_share_rank() {
        let z = normal_scores(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(z[1], z[2]);
        assert_eq!(z[1], normal::quantile(3.0 / 5.0));
    }

    #[test]
    fn medians_map_to_zero_and_round_trip() {
        let col: Vec<f64> = (0..9).map(|i| (i * i) as f64).collect();
        let x = DataMatrix::from_columns(vec![col.clone(), col.iter().map(|v| -v).collect()]).unwrap();
        let s = to_pseudo_normal(&x).unwrap();
        let (z, _) = s.x_to_z_point(&[16.0, -16.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        for v in &col {
            let (z, flags) = s.x_to_z_point(&[*v, -*v]).unwrap();
            let (back, xf) = s.z_to_x_point(&z).unwrap();
            assert_abs_diff_eq!(back[0], *v, epsilon = 1e-9);
            assert_abs_diff_eq!(back[1], -*v, epsilon = 1e-9);
            assert!(!flags.iter().any(|&f| f) && !xf.iter().any(|&f| f));
        }
    }

    #[test]
    fn out_of_range_is_clamped_and_flagged() {
        let s = to_pseudo_normal(&DataMatrix::from_columns(vec![vec![1.0, 2.0, 3.0]]).unwrap()).unwrap();
        let (z, f) = s.x_to_z_point(&[-10.0]).unwrap();
        assert_eq!(z[0], normal::quantile(0.25));
        assert!(f[0]);
        let (x, f) = s.z_to_x_point(&[5.0]).unwrap();
        assert_eq!(x[0], 3.0);
        assert!(f[0]);
    }
}
