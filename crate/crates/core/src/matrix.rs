use crate::error::{param_err, Result, ScreenError};
use crate::scalar::Scalar;

/// Samples (rows) by variables (columns), stored column-major so each
/// variable is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix<T> {
    n: usize,
    p: usize,
    values: Vec<T>,
    variable_names: Vec<String>,
    group_label: String,
}

fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("V{j}")).collect()
}

impl<T: Scalar> ExpressionMatrix<T> {
    /// Builds from column-major data (`values[j * n + r]` is sample `r` of variable `j`).
    pub fn from_columns(n: usize, p: usize, values: Vec<T>, variable_names: Option<Vec<String>>) -> Result<Self> {
        if values.len() != n * p {
            return Err(ScreenError::Dimension(format!(
                "expected {} values for a {n}x{p} matrix, got {}",
                n * p,
                values.len()
            )));
        }
        let variable_names = variable_names.unwrap_or_else(|| default_names(p));
        if variable_names.len() != p {
            return Err(ScreenError::Dimension(format!(
                "{} variable names for {p} columns",
                variable_names.len()
            )));
        }
        if n < 3 {
            return param_err(format!("need at least 3 samples, got {n}"));
        }
        if p < 2 {
            return param_err(format!("need at least 2 variables, got {p}"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return param_err(format!(
                "non-finite value at sample {}, variable {}",
                pos % n + 1,
                pos / n + 1
            ));
        }
        Ok(Self {
            n,
            p,
            values,
            variable_names,
            group_label: String::new(),
        })
    }

    /// Builds from a list of sample rows.
    pub fn from_rows(rows: &[Vec<T>], variable_names: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(ScreenError::Dimension(format!(
                "row {} has {} values, expected {p}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let mut values = vec![T::zero(); n * p];
        for (r, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                values[j * n + r] = v;
            }
        }
        Self::from_columns(n, p, values, variable_names)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.group_label = label.into();
        self
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_variables(&self) -> usize {
        self.p
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn group_label(&self) -> &str {
        &self.group_label
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[T] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[col * self.n + row]
    }

    pub fn row(&self, r: usize) -> Vec<T> {
        (0..self.p).map(|j| self.get(r, j)).collect()
    }

    pub fn as_column_major(&self) -> &[T] {
        &self.values
    }

    /// New matrix holding the given rows (repeats allowed), in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * self.p);
        for j in 0..self.p {
            let col = self.column(j);
            values.extend(rows.iter().map(|&r| col[r]));
        }
        Ok(Self::from_columns(n, self.p, values, Some(self.variable_names.clone()))?
            .with_label(self.group_label.clone()))
    }

    /// New matrix holding the given columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n * cols.len());
        for &j in cols {
            values.extend_from_slice(self.column(j));
        }
        let names = cols.iter().map(|&j| self.variable_names[j].clone()).collect();
        Ok(Self::from_columns(self.n, cols.len(), values, Some(names))?.with_label(self.group_label.clone()))
    }

    /// Applies `f` elementwise.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Ok(Self::from_columns(self.n, self.p, values, Some(self.variable_names.clone()))?
            .with_label(self.group_label.clone()))
    }
}
