use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a column means to the estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Outcome,
    Treatment,
    /// Target feature `x`; effects are reported as a function of these.
    Feature,
    /// Covariate entering nuisance models linearly.
    Parametric,
    /// Covariate entering nuisance models through the network branch.
    Nonparametric,
    Instrument,
    /// Cluster label for grouped bootstrap resampling.
    Group,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Log1p,
    Standardize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub role: Role,
    #[serde(default)]
    pub transform: Transform,
}

impl ColumnSpec {
    pub fn new(role: Role) -> Self {
        Self { role, transform: Transform::None }
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedColumn {
    pub name: String,
    #[serde(flatten)]
    pub spec: ColumnSpec,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d: usize,
    pub p_parametric: usize,
    pub p_nonparametric: usize,
    pub q: usize,
}

/// Column-to-role mapping. Column order within a role is the order of
/// `columns`, which ingestion rewrites to header order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    columns: Vec<NamedColumn>,
}

impl DatasetSchema {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = (S, ColumnSpec)>) -> Result<Self> {
        let columns: Vec<NamedColumn> = columns
            .into_iter()
            .map(|(name, spec)| NamedColumn { name: name.into(), spec })
            .collect();
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("column `{}` mapped more than once", c.name)));
            }
        }
        for role in [Role::Outcome, Role::Treatment] {
            let n = self.columns.iter().filter(|c| c.spec.role == role).count();
            if n != 1 {
                return Err(Error::Schema(format!("expected exactly one {role:?} column, found {n}")));
            }
        }
        if self.columns.iter().filter(|c| c.spec.role == Role::Group).count() > 1 {
            return Err(Error::Schema("at most one group column is allowed".into()));
        }
        if self.count(Role::Feature) == 0 {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        Ok(())
    }

    pub fn columns(&self) -> &[NamedColumn] {
        &self.columns
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name).map(|c| &c.spec)
    }

    pub fn count(&self, role: Role) -> usize {
        self.columns.iter().filter(|c| c.spec.role == role).count()
    }

    pub fn names(&self, role: Role) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.spec.role == role)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d: self.count(Role::Feature),
            p_parametric: self.count(Role::Parametric),
            p_nonparametric: self.count(Role::Nonparametric),
            q: self.count(Role::Instrument),
        }
    }

    /// Same roles, every transform reset to `None`. Reloading a written
    /// dataset with this schema reproduces its stored values.
    pub fn without_transforms(&self) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| NamedColumn {
                name: c.name.clone(),
                spec: ColumnSpec::new(c.spec.role),
            })
            .collect();
        Self { columns }
    }

    /// Reorders columns to follow `header`; errors on the first schema
    /// column missing from it.
    pub(crate) fn ordered_by(&self, header: &[String]) -> Result<Self> {
        for c in &self.columns {
            if !header.iter().any(|h| h == &c.name) {
                return Err(Error::Schema(format!("column `{}` not found in header", c.name)));
            }
        }
        let mut columns = self.columns.clone();
        columns.sort_by_key(|c| header.iter().position(|h| h == &c.name));
        Ok(Self { columns })
    }
}
