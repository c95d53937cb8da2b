//! Observation panel, CSV ingestion and sample partitioning.

mod io;
mod schema;
mod split;

pub use io::{load_dataset, read_dataset, write_csv};
pub use schema::{ColumnSpec, DatasetSchema, Dims, NamedColumn, Role, Transform};
pub use split::{split_halves, subsample, subsample_from, IndexSplit};

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Borrowed view of one observation.
#[derive(Clone, Copy, Debug)]
pub struct Row<'a, T> {
    pub y: T,
    pub t: T,
    pub x: &'a [T],
    pub wp: &'a [T],
    pub wn: &'a [T],
    pub z: &'a [T],
}

/// Owned observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub y: T,
    pub t: T,
    pub x: Vec<T>,
    pub wp: Vec<T>,
    pub wn: Vec<T>,
    pub z: Vec<T>,
}

/// Immutable, row-addressable panel. Blocks are stored row-major, one
/// matrix per role.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    schema: DatasetSchema,
    y: Vec<T>,
    t: Vec<T>,
    x: Array2<T>,
    wp: Array2<T>,
    wn: Array2<T>,
    z: Array2<T>,
    groups: Option<Vec<T>>,
}


impl<T: Real> Dataset<T> {
    /// Builds a dataset from role blocks. Column names come from `schema`,
    /// whose per-role counts must match the block widths.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        schema: DatasetSchema,
        y: Vec<T>,
        t: Vec<T>,
        x: Array2<T>,
        wp: Array2<T>,
        wn: Array2<T>,
        z: Array2<T>,
        groups: Option<Vec<T>>,
    ) -> Result<Self> {
        let n = y.len();
        let dims = schema.dims();
        let checks = [
            ("t", t.len(), n, 0, 0),
            ("x", x.nrows(), n, x.ncols(), dims.d),
            ("wp", wp.nrows(), n, wp.ncols(), dims.p_parametric),
            ("wn", wn.nrows(), n, wn.ncols(), dims.p_nonparametric),
            ("z", z.nrows(), n, z.ncols(), dims.q),
        ];
        for (name, rows, want_rows, cols, want_cols) in checks {
            if rows != want_rows || cols != want_cols {
                return Err(Error::Shape(format!(
                    "block {name} is {rows}x{cols}, expected {want_rows}x{want_cols}"
                )));
            }
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(Error::Shape(format!("group labels have length {}, expected {n}", g.len())));
            }
        }
        if (schema.count(Role::Group) == 1) != groups.is_some() {
            return Err(Error::Shape("group labels must be given iff the schema has a group column".into()));
        }
        let finite = y.iter().chain(&t).all(|v| v.is_finite())
            && [&x, &wp, &wn, &z].iter().all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Ingestion {
                row: 0,
                column: "<block>".into(),
                message: "non-finite value".into(),
            });
        }
        let std = |m: Array2<T>| if m.is_standard_layout() { m } else { m.as_standard_layout().into_owned() };
        Ok(Self {
            schema,
            y,
            t,
            x: std(x),
            wp: std(wp),
            wn: std(wn),
            z: std(z),
            groups,
        })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn dims(&self) -> Dims {
        self.schema.dims()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn t(&self) -> &[T] {
        &self.t
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn wp(&self) -> ArrayView2<'_, T> {
        self.wp.view()
    }

    pub fn wn(&self) -> ArrayView2<'_, T> {
        self.wn.view()
    }

    pub fn z(&self) -> ArrayView2<'_, T> {
        self.z.view()
    }

    pub fn groups(&self) -> Option<&[T]> {
        self.groups.as_deref()
    }

    pub fn row(&self, i: usize) -> Row<'_, T> {
        fn slice<T>(m: &Array2<T>, i: usize) -> &[T] {
            let w = m.ncols();
            &m.as_slice().expect("standard layout")[i * w..(i + 1) * w]
        }
        Row {
            y: self.y[i],
            t: self.t[i],
            x: slice(&self.x, i),
            wp: slice(&self.wp, i),
            wn: slice(&self.wn, i),
            z: slice(&self.z, i),
        }
    }

    pub fn observation(&self, i: usize) -> Observation<T> {
        let r = self.row(i);
        Observation {
            y: r.y,
            t: r.t,
            x: r.x.to_vec(),
            wp: r.wp.to_vec(),
            wn: r.wn.to_vec(),
            z: r.z.to_vec(),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = Observation<T>> + '_ {
        (0..self.n()).map(|i| self.observation(i))
    }

    /// New dataset made of `rows` in order; repeats allowed.
    pub fn select(&self, rows: &[usize]) -> Dataset<T> {
        let pick = |v: &[T]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            schema: self.schema.clone(),
            y: pick(&self.y),
            t: pick(&self.t),
            x: self.x.select(Axis(0), rows),
            wp: self.wp.select(Axis(0), rows),
            wn: self.wn.select(Axis(0), rows),
            z: self.z.select(Axis(0), rows),
            groups: self.groups.as_deref().map(pick),
        }
    }

    /// Observed `[min, max]` of each feature column.
    pub fn feature_ranges(&self) -> Vec<(T, T)> {
        self.x
            .columns()
            .into_iter()
            .map(|c| {
                c.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            })
            .collect()
    }

    /// Order-sensitive digest of the stored values, used to check that a
    /// saved model is applied to the data it was fitted on.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: T| {
            for b in v.as_f64().to_bits().to_le_bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for i in 0..self.n() {
            let r = self.row(i);
            eat(r.y);
            eat(r.t);
            r.x.iter().chain(r.wp).chain(r.wn).chain(r.z).for_each(|&v| eat(v));
        }
        h
    }
}
