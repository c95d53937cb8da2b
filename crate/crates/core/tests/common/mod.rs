#![allow(dead_code)]

use ndarray::Array2;
use orf_core::data::{ColumnSpec, Dataset, DatasetSchema, Role};

/// Dataset with the given blocks and generated column names.
pub fn dataset(y: Vec<f64>, t: Vec<f64>, x: Array2<f64>, wp: Array2<f64>, wn: Array2<f64>, z: Array2<f64>) -> Dataset<f64> {
    let mut cols = vec![("y".to_string(), ColumnSpec::new(Role::Outcome)), ("t".to_string(), ColumnSpec::new(Role::Treatment))];
    cols.extend((0..x.ncols()).map(|j| (format!("x{j}"), ColumnSpec::new(Role::Feature))));
    cols.extend((0..wp.ncols()).map(|j| (format!("wp{j}"), ColumnSpec::new(Role::Parametric))));
    cols.extend((0..wn.ncols()).map(|j| (format!("wn{j}"), ColumnSpec::new(Role::Nonparametric))));
    cols.extend((0..z.ncols()).map(|j| (format!("z{j}"), ColumnSpec::new(Role::Instrument))));
    let schema = DatasetSchema::new(cols).unwrap();
    Dataset::from_parts(schema, y, t, x, wp, wn, z, None).unwrap()
}

pub fn empty(n: usize) -> Array2<f64> {
    Array2::zeros((n, 0))
}

/// Minimizer of a 1-D function on `[lo, hi]`: a coarse grid, then two
/// finer grids around the best coarse point, ending at spacing `step`.
pub fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let scan = |lo: f64, hi: f64, h: f64| {
        let steps = ((hi - lo) / h).ceil() as usize;
        (0..=steps)
            .map(|k| (lo + k as f64 * h).min(hi))
            .map(|v| (v, f(v)))
            .fold((lo, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    };
    let coarse = (hi - lo) / 1000.0;
    let mid = (coarse * step).sqrt().max(step);
    let a = scan(lo, hi, coarse);
    let b = scan((a - coarse).max(lo), (a + coarse).min(hi), mid);
    scan((b - mid).max(lo), (b + mid).min(hi), step)
}
