use std::fmt;
use std::sync::Arc;

use super::{NuisanceLearner, Predictor, SharedPredictor, Target};
use crate::data::{Dataset, Row};
use crate::error::{Error, Result};
use crate::scalar::Real;

type RowFn<T> = Arc<dyn Fn(&Row<'_, T>) -> T + Send + Sync>;

/// Supplies known nuisance functions instead of fitting them.
#[derive(Clone)]
pub struct OracleLearner<T> {
    outcome: RowFn<T>,
    treatment: RowFn<T>,
    instruments: Vec<RowFn<T>>,
}

impl<T> fmt::Debug for OracleLearner<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleLearner").field("instruments", &self.instruments.len()).finish()
    }
}

impl<T: Real> OracleLearner<T> {
    pub fn new(
        outcome: impl Fn(&Row<'_, T>) -> T + Send + Sync + 'static,
        treatment: impl Fn(&Row<'_, T>) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { outcome: Arc::new(outcome), treatment: Arc::new(treatment), instruments: Vec::new() }
    }

    pub fn with_instrument(mut self, f: impl Fn(&Row<'_, T>) -> T + Send + Sync + 'static) -> Self {
        self.instruments.push(Arc::new(f));
        self
    }
}

struct FnPredictor<T>(RowFn<T>);

impl<T> fmt::Debug for FnPredictor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnPredictor")
    }
}

impl<T: Real> Predictor<T> for FnPredictor<T> {
    fn predict(&self, row: &Row<'_, T>) -> T {
        (self.0)(row)
    }
}

impl<T: Real> NuisanceLearner<T> for OracleLearner<T> {
    fn fit(&self, _: &Dataset<T>, _: &[usize], _: Option<&[T]>, target: Target, _: u64) -> Result<SharedPredictor<T>> {
        let f = match target {
            Target::Outcome => self.outcome.clone(),
            Target::Treatment => self.treatment.clone(),
            Target::Instrument(j) => self
                .instruments
                .get(j)
                .cloned()
                .ok_or_else(|| Error::Config(format!("oracle has no function for instrument {j}")))?,
        };
        Ok(Arc::new(FnPredictor(f)))
    }
}
