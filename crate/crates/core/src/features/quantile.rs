use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Empirical-CDF normalization fitted on training rows. Numeric columns keep
/// their sorted training values; binary columns pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransform {
    pub names: Vec<String>,
    /// `None` for pass-through columns.
    pub tables: Vec<Option<Vec<f64>>>,
}

/// Position (in [0, 1]) of a value present in the sorted table: its average
/// rank over ties divided by n - 1, with the extremes pinned to 0 and 1.
fn position_of_present(table: &[f64], v: f64) -> f64 {
    let n = table.len();
    if v <= table[0] {
        return 0.0;
    }
    if v >= table[n - 1] {
        return 1.0;
    }
    let first = table.partition_point(|x| *x < v);
    let last = table.partition_point(|x| *x <= v) - 1;
    (first + last) as f64 / 2.0 / (n - 1) as f64
}

pub fn table_position(table: &[f64], v: f64) -> f64 {
    let n = table.len();
    if v <= table[0] {
        return 0.0;
    }
    if v >= table[n - 1] {
        return 1.0;
    }
    let idx = table.partition_point(|x| *x < v);
    if table[idx] == v {
        return position_of_present(table, v);
    }
    let (lo, hi) = (table[idx - 1], table[idx]);
    let (plo, phi) = (position_of_present(table, lo), position_of_present(table, hi));
    plo + (v - lo) / (hi - lo) * (phi - plo)
}

/// Store sorted training values for every non-binary column. Missing (NaN)
/// values are left out of the tables.
pub fn quantile_fit(names: &[String], binary: &[bool], rows: &[Vec<f64>]) -> Result<QuantileTransform> {
    if names.len() != binary.len() {
        return Err(Error::InvalidInput("names and binary flags differ in length".into()));
    }
    let mut tables = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        if binary[j] {
            tables.push(None);
            continue;
        }
        let mut values: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
        values.sort_by(f64::total_cmp);
        if values.len() < 2 || values[0] == values[values.len() - 1] {
            return Err(Error::ConstantFeature(name.clone()));
        }
        tables.push(Some(values));
    }
    Ok(QuantileTransform { names: names.to_vec(), tables })
}

impl QuantileTransform {
    /// Normalize one row given in `self.names` order. Missing numeric values
    /// map to the median position 0.5.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.names.len() {
            return Err(Error::MissingFeatures(format!(
                "expected {} values, got {}",
                self.names.len(),
                row.len()
            )));
        }
        Ok(row
            .iter()
            .zip(&self.tables)
            .map(|(&v, table)| match table {
                None => v,
                Some(_) if v.is_nan() => 0.5,
                Some(t) => table_position(t, v),
            })
            .collect())
    }

    /// Normalize a row given as (name, value) pairs in any order.
    pub fn apply_named(&self, row: &[(String, f64)]) -> Result<Vec<f64>> {
        let mut ordered = Vec::with_capacity(self.names.len());
        let mut missing = Vec::new();
        for name in &self.names {
            match row.iter().find(|(n, _)| n == name) {
                Some((_, v)) => ordered.push(*v),
                None => missing.push(name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(missing.join(", ")));
        }
        self.apply(&ordered)
    }

    /// Training percentile (0-100) of a raw value, `None` for pass-through columns.
    pub fn percentile(&self, column: usize, v: f64) -> Option<f64> {
        self.tables[column].as_ref().map(|t| 100.0 * table_position(t, v))
    }

    pub fn is_binary(&self, column: usize) -> bool {
        self.tables[column].is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fit_one(values: &[f64]) -> QuantileTransform {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v, 1.0]).collect();
        quantile_fit(&["x".into(), "flag".into()], &[false, true], &rows).unwrap()
    }

    #[test]
    fn stores_sorted_reference() {
        let qt = fit_one(&[3.0, 1.0, 2.0]);
        assert_eq!(qt.tables[0], Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(qt.tables[1], None);
        assert_eq!(qt.apply(&[2.0, 0.0]).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn endpoints_and_interpolation() {
        let qt = fit_one(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(qt.apply(&[1.0, 1.0]).unwrap()[0], 0.0);
        assert_eq!(qt.apply(&[4.0, 1.0]).unwrap()[0], 1.0);
        assert_eq!(qt.apply(&[-10.0, 1.0]).unwrap()[0], 0.0);
        assert_eq!(qt.apply(&[10.0, 1.0]).unwrap()[0], 1.0);
        assert!((qt.apply(&[2.5, 1.0]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ties_take_average_rank() {
        let qt = fit_one(&[1.0, 2.0, 2.0, 3.0, 5.0]);
        // ranks 1 and 2 of 0..4
        assert!((qt.apply(&[2.0, 1.0]).unwrap()[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_named() {
        let rows = vec![vec![1.0], vec![1.0]];
        assert_eq!(
            quantile_fit(&["age".into()], &[false], &rows),
            Err(Error::ConstantFeature("age".into()))
        );
    }

    #[test]
    fn missing_values_impute_to_median_position() {
        let qt = fit_one(&[1.0, f64::NAN, 3.0, 7.0]);
        assert_eq!(qt.tables[0], Some(vec![1.0, 3.0, 7.0]));
        assert_eq!(qt.apply(&[f64::NAN, 1.0]).unwrap()[0], 0.5);
    }

    #[test]
    fn missing_named_feature_is_reported() {
        let qt = fit_one(&[1.0, 2.0]);
        let err = qt.apply_named(&[("x".into(), 1.0)]).unwrap_err();
        assert_eq!(err, Error::MissingFeatures("flag".into()));
    }

    #[test]
    fn refit_on_transformed_training_is_identity() {
        let values = [4.0, 9.5, 1.2, 7.7, 3.3, 8.8, 0.4];
        let qt = fit_one(&values);
        let transformed: Vec<Vec<f64>> = values.iter().map(|v| qt.apply(&[*v, 1.0]).unwrap()).collect();
        let qt2 = quantile_fit(&["x".into(), "flag".into()], &[false, true], &transformed).unwrap();
        for t in &transformed {
            assert!((qt2.apply(t).unwrap()[0] - t[0]).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn apply_is_monotone(mut values in prop::collection::vec(-1e3f64..1e3, 2..60), a in -2e3f64..2e3, b in -2e3f64..2e3) {
            values.push(values[0] + 1.0);
            let qt = fit_one(&values);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let plo = qt.apply(&[lo, 0.0]).unwrap()[0];
            let phi = qt.apply(&[hi, 0.0]).unwrap()[0];
            prop_assert!(plo <= phi + 1e-15);
            prop_assert!((0.0..=1.0).contains(&plo) && (0.0..=1.0).contains(&phi));
        }
    }
}
