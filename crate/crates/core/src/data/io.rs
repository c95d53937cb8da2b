use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, DatasetSchema, Role, Transform};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Loads a comma-separated file with a header row.
pub fn load_dataset<T: Real>(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset<T>> {
    let file = File::open(path.as_ref())?;
    read_dataset(file, schema)
}

pub fn read_dataset<T: Real, R: Read>(reader: R, schema: &DatasetSchema) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let schema = schema.ordered_by(&header)?;
    let positions: Vec<usize> = schema
        .columns()
        .iter()
        .map(|c| header.iter().position(|h| h == &c.name).expect("checked by ordered_by"))
        .collect();

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); positions.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (k, &pos) in positions.iter().enumerate() {
            let name = &schema.columns()[k].name;
            let cell = record.get(pos).ok_or_else(|| Error::Ingestion {
                row,
                column: name.clone(),
                message: "missing cell".into(),
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
                row,
                column: name.clone(),
                message: format!("cannot parse `{cell}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: name.clone(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            cols[k].push(v);
        }
    }

    for (k, col) in cols.iter_mut().enumerate() {
        let spec = &schema.columns()[k];
        match spec.spec.transform {
            Transform::None => {}
            Transform::Log1p => {
                for (r, v) in col.iter_mut().enumerate() {
                    *v = v.ln_1p();
                    if !v.is_finite() {
                        return Err(Error::Ingestion {
                            row: r + 1,
                            column: spec.name.clone(),
                            message: "log1p of a value <= -1".into(),
                        });
                    }
                }
            }
            Transform::Standardize => standardize(col),
        }
    }

    assemble(schema, cols)
}

/// Centers to mean zero and scales to unit sample standard deviation.
/// Constant columns are centered only.
pub(crate) fn standardize(col: &mut [f64]) {
    let n = col.len();
    if n == 0 {
        return;
    }
    let mean = col.iter().sum::<f64>() / n as f64;
    col.iter_mut().for_each(|v| *v -= mean);
    // second pass removes the rounding left by the first
    let resid = col.iter().sum::<f64>() / n as f64;
    col.iter_mut().for_each(|v| *v -= resid);
    if n < 2 {
        return;
    }
    let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd > 0.0 {
        col.iter_mut().for_each(|v| *v /= sd);
    }
}

fn assemble<T: Real>(schema: DatasetSchema, cols: Vec<Vec<f64>>) -> Result<Dataset<T>> {
    let n = cols.first().map_or(0, Vec::len);
    let block = |role: Role| -> Array2<T> {
        let picked: Vec<&Vec<f64>> = schema
            .columns()
            .iter()
            .zip(&cols)
            .filter(|(c, _)| c.spec.role == role)
            .map(|(_, v)| v)
            .collect();
        Array2::from_shape_fn((n, picked.len()), |(i, j)| T::lit(picked[j][i]))
    };
    let single = |role: Role| -> Vec<T> {
        let (_, v) = schema
            .columns()
            .iter()
            .zip(&cols)
            .find(|(c, _)| c.spec.role == role)
            .expect("schema validated");
        v.iter().map(|&x| T::lit(x)).collect()
    };
    let groups = (schema.count(Role::Group) == 1).then(|| single(Role::Group));
    let (y, t) = (single(Role::Outcome), single(Role::Treatment));
    let (x, wp, wn, z) = (
        block(Role::Feature),
        block(Role::Parametric),
        block(Role::Nonparametric),
        block(Role::Instrument),
    );
    Dataset::from_parts(schema, y, t, x, wp, wn, z, groups)
}

/// Writes the stored (post-transform) values with a header in schema order.
/// Numbers use the shortest decimal form that parses back to the same value.
pub fn write_csv<T: Real, W: Write>(data: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = data.schema();
    w.write_record(schema.columns().iter().map(|c| c.name.as_str()))?;
    let mut counters = [0usize; 7];
    let slot = |role: Role| role as usize;
    let mut record: Vec<String> = Vec::with_capacity(schema.columns().len());
    for i in 0..data.n() {
        let r = data.row(i);
        counters.iter_mut().for_each(|c| *c = 0);
        record.clear();
        for c in schema.columns() {
            let k = counters[slot(c.spec.role)];
            counters[slot(c.spec.role)] += 1;
            let v = match c.spec.role {
                Role::Outcome => r.y,
                Role::Treatment => r.t,
                Role::Feature => r.x[k],
                Role::Parametric => r.wp[k],
                Role::Nonparametric => r.wn[k],
                Role::Instrument => r.z[k],
                Role::Group => data.groups().expect("group column present")[i],
            };
            record.push(v.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
