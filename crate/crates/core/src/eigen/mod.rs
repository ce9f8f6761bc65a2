//! Largest-magnitude eigenpairs of symmetric operators.

mod jacobi;
mod lanczos;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};
use crate::scalar::Scalar;
use crate::sparse::SparseDifferential;

pub use jacobi::symmetric_eigen;

/// A symmetric linear map applied through matrix-vector products.
pub trait SymmetricOperator<T> {
    fn dim(&self) -> usize;

    /// `y = A x`; `y` is fully overwritten.
    fn apply(&self, x: &[T], y: &mut [T]);
}

/// Dense row-major symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseSymmetric<T> {
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(ScreenError::Dimension(format!("{} values for a {n}x{n} matrix", data.len())));
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(ScreenError::Precondition(format!("matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }
}

impl<T: Scalar> SymmetricOperator<T> for DenseSymmetric<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = crate::scalar::dot(&self.data[i * self.n..(i + 1) * self.n], x);
        }
    }
}

/// Solver settings for [`top_k_eigen_with`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Relative residual tolerance: `||A u - lambda u|| <= tol * |lambda_1|`.
    pub tol: f64,
    pub seed: u64,
    /// Krylov subspace size; defaults to `max(2k + 20, 40)` capped at `p`.
    pub subspace: Option<usize>,
    /// Matrix-vector products per escalation stage; defaults to `max(30k, 300)`.
    pub max_matvecs: Option<usize>,
    /// How many times the subspace may double before giving up.
    pub max_escalations: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            seed: 0,
            subspace: None,
            max_matvecs: None,
            max_escalations: 3,
        }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64, seed: u64) -> Self {
        Self {
            tol,
            seed,
            ..Self::default()
        }
    }
}

/// Leading eigenpairs ordered by decreasing `|lambda|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult<T> {
    pub p: usize,
    pub eigenvalues: Vec<T>,
    /// Column-major `p x k`; column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Vec<T>,
    /// `||A u_k - lambda_k u_k||_2` by direct multiplication.
    pub residuals: Vec<T>,
    /// Some requested eigenvalues were numerically zero and are reported as 0.
    pub rank_deficient: bool,
    pub matvecs: usize,
}

impl<T: Scalar> SpectralResult<T> {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> &[T] {
        &self.eigenvectors[k * self.p..(k + 1) * self.p]
    }

    #[inline]
    pub fn component(&self, i: usize, k: usize) -> T {
        self.eigenvectors[k * self.p + i]
    }

    /// Keeps only the leading `k` pairs.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.k());
        Self {
            p: self.p,
            eigenvalues: self.eigenvalues[..k].to_vec(),
            eigenvectors: self.eigenvectors[..k * self.p].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            rank_deficient: self.rank_deficient,
            matvecs: self.matvecs,
        }
    }

    /// Per-variable eigenvector coordinates, one CSV row per variable.
    pub fn write_vectors_csv<W: std::io::Write>(&self, mut w: W, names: &[String]) -> Result<()> {
        let header: Vec<String> = (1..=self.k()).map(|k| format!("u{k}")).collect();
        writeln!(w, "variable,{}", header.join(","))?;
        for i in 0..self.p {
            let row: Vec<String> = (0..self.k()).map(|k| self.component(i, k).to_string()).collect();
            writeln!(w, "{},{}", names[i], row.join(","))?;
        }
        Ok(())
    }

    /// JSON sidecar with eigenvalues and residuals.
    pub fn sidecar_json(&self) -> serde_json::Value {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        serde_json::json!({
            "p": self.p,
            "k": self.k(),
            "eigenvalues": f(&self.eigenvalues),
            "residuals": f(&self.residuals),
            "rank_deficient": self.rank_deficient,
            "matvecs": self.matvecs,
        })
    }
}

/// Top `k` eigenpairs (by magnitude) of any symmetric operator.
pub fn top_k_eigen_with<T: Scalar, A: SymmetricOperator<T> + ?Sized>(
    op: &A,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectralResult<T>> {
    let n = op.dim();
    if k < 1 || k > n {
        return Err(ScreenError::Parameter(format!("k must lie in 1..={n}, got {k}")));
    }
    if !(opts.tol > 0.0) {
        return Err(ScreenError::Parameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    lanczos::thick_restart(op, k, opts)
}

/// Top `k` eigenpairs of the sparse differential matrix.
pub fn top_k_eigen<T: Scalar>(m: &SparseDifferential<T>, k: usize, tol: f64, seed: u64) -> Result<SpectralResult<T>> {
    top_k_eigen_with(m, k, &EigenOptions::with_tol(tol, seed))
}
