//! Linear coupling constraints `A x + B y = b` with `B` diagonal.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Above this dimension `sigma_A` falls back to shifted power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

/// `B` in `A x + B y = b`. Only diagonal forms are supported so the
/// y-subproblem stays separable.
#[derive(Debug, Clone, PartialEq)]
pub enum BMatrix {
    NegIdentity,
    Diagonal(DVector<f64>),
}

impl BMatrix {
    pub fn diag(&self, i: usize) -> f64 {
        match self {
            BMatrix::NegIdentity => -1.0,
            BMatrix::Diagonal(d) => d[i],
        }
    }

    /// `B y`; also `B^T y` since `B` is diagonal.
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            BMatrix::NegIdentity => -y,
            BMatrix::Diagonal(d) => d.component_mul(y),
        }
    }
}

/// How to obtain the coupling matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Identity(usize),
    /// `(n-1) x n` first-difference matrix with rows `e_i - e_{i+1}`.
    ChainDifference(usize),
    /// Lines `i j` (0-based); one row `e_i - e_j` per edge.
    EdgeList { path: PathBuf, n: Option<usize> },
    /// Dense matrix file: `m n` header then `m` rows.
    Matrix(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    a: DMatrix<f64>,
    b_mat: BMatrix,
    b: DVector<f64>,
    sigma_a: f64,
    range_feasible: bool,
    warnings: Vec<String>,
}

impl ConstraintSystem {
    pub fn new(a: DMatrix<f64>, b_mat: BMatrix, b: DVector<f64>) -> Result<Self> {
        let m = a.nrows();
        if b.len() != m {
            return Err(Error::Config(format!("b has length {} but A has {m} rows", b.len())));
        }
        if let BMatrix::Diagonal(d) = &b_mat {
            if d.len() != m {
                return Err(Error::Config("diagonal B must have one entry per row of A".into()));
            }
            if d.iter().any(|v| *v == 0.0) {
                return Err(Error::Config("diagonal B must have nonzero entries".into()));
            }
        }
        let mut warnings = Vec::new();
        let zero_cols: Vec<usize> = (0..a.ncols())
            .filter(|&j| a.column(j).iter().all(|v| *v == 0.0))
            .collect();
        if !zero_cols.is_empty() {
            warnings.push(format!(
                "A has {} zero column(s) (first: {}); sigma_A uses the smallest positive eigenvalue",
                zero_cols.len(),
                zero_cols[0]
            ));
        }
        let (sigma_a, _) = smallest_positive_eigenpair(&a)?;

        // Range(B) is all of R^m for an invertible diagonal B, so the
        // range condition reduces to A having full row rank.
        let range_feasible = if m <= DENSE_EIGEN_LIMIT {
            let aat = &a * a.transpose();
            let eig = SymmetricEigen::new(aat).eigenvalues;
            let max = eig.iter().cloned().fold(0.0, f64::max);
            eig.iter().all(|&e| e > 1e-10 * max.max(f64::MIN_POSITIVE))
        } else {
            warnings.push("range condition not checked for m > 2000".into());
            false
        };
        if !range_feasible {
            warnings.push("Range(B) and b are not contained in Range(A)".into());
        }

        Ok(ConstraintSystem {
            a,
            b_mat,
            b,
            sigma_a,
            range_feasible,
            warnings,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_mat(&self) -> &BMatrix {
        &self.b_mat
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn sigma_a(&self) -> f64 {
        self.sigma_a
    }

    pub fn range_feasible(&self) -> bool {
        self.range_feasible
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn n_x(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.a.nrows()
    }

    /// `A x + B y - b`
    pub fn residual(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        &self.a * x + self.b_mat.apply(y) - &self.b
    }
}

pub fn build_constraint(spec: &GraphSpec) -> Result<ConstraintSystem> {
    let a = match spec {
        GraphSpec::Identity(n) => DMatrix::identity(*n, *n),
        GraphSpec::ChainDifference(n) => chain_difference(*n)?,
        GraphSpec::EdgeList { path, n } => {
            let edges = read_edge_list(path)?;
            edge_incidence(&edges, *n)?
        }
        GraphSpec::Matrix(path) => read_dense_matrix(path)?,
    };
    let m = a.nrows();
    ConstraintSystem::new(a, BMatrix::NegIdentity, DVector::zeros(m))
}

pub fn chain_difference(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Config("chain difference needs n >= 2".into()));
    }
    let mut a = DMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        a[(i, i)] = 1.0;
        a[(i, i + 1)] = -1.0;
    }
    Ok(a)
}

pub fn edge_incidence(edges: &[(usize, usize)], n: Option<usize>) -> Result<DMatrix<f64>> {
    if edges.is_empty() {
        return Err(Error::Config("edge list is empty".into()));
    }
    let inferred = edges.iter().map(|&(i, j)| i.max(j)).max().unwrap() + 1;
    let n = n.unwrap_or(inferred);
    if n < inferred {
        return Err(Error::Config(format!("edge index {} out of range for n = {n}", inferred - 1)));
    }
    let mut a = DMatrix::zeros(edges.len(), n);
    for (k, &(i, j)) in edges.iter().enumerate() {
        if i == j {
            return Err(Error::Config(format!("self loop at node {i}")));
        }
        a[(k, i)] = 1.0;
        a[(k, j)] = -1.0;
    }
    Ok(a)
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let mut next = || -> Result<usize> {
            it.next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected 'i j', got '{t}'"),
                })
        };
        let i = next()?;
        let j = next()?;
        edges.push((i, j));
    }
    Ok(edges)
}

pub fn read_dense_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_dense_matrix(BufReader::new(File::open(path)?))
}

pub fn parse_dense_matrix<R: BufRead>(reader: R) -> Result<DMatrix<f64>> {
    let mut lines = reader
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing 'm n' header".into(),
    })?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad header '{header}'"),
        })?;
    let [m, n] = dims[..] else {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be 'm n', got '{header}'"),
        });
    };
    let mut data = Vec::with_capacity(m * n);
    let mut rows_read = 0;
    for (lineno, line) in lines {
        let line = line?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: "bad matrix entry".into(),
            })?;
        if row.len() != n {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected {n} entries, got {}", row.len()),
            });
        }
        data.extend(row);
        rows_read += 1;
    }
    if rows_read != m {
        return Err(Error::Parse {
            line: rows_read + 1,
            msg: format!("expected {m} rows, got {rows_read}"),
        });
    }
    Ok(DMatrix::from_row_slice(m, n, &data))
}

pub fn write_dense_matrix<W: Write>(a: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", a.nrows(), a.ncols())?;
    for row in a.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Smallest positive eigenvalue of `A^T A` with its unit eigenvector.
/// Eigenvalues below `1e-10 * lambda_max` count as zero.
pub fn smallest_positive_eigenpair(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if a.ncols() <= DENSE_EIGEN_LIMIT {
        dense_smallest_positive(a)
    } else {
        power_smallest_positive(a, 1e-10, 200_000)
    }
}

fn dense_smallest_positive(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::Config("A is zero; sigma_A undefined".into()));
    }
    let tol = 1e-10 * max;
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tol)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .unwrap();
    Ok((val, eig.eigenvectors.column(idx).into_owned()))
}

/// Shifted power iteration on `c I - A^T A` started inside `Range(A^T)`.
/// Rounding leaks into the null space are removed by periodically applying
/// `A^T A`, which annihilates that component.
pub fn power_smallest_positive(
    a: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, DVector<f64>)> {
    let n = a.ncols();
    let apply = |v: &DVector<f64>| a.transpose() * (a * v);

    // largest eigenvalue first
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut lmax = 0.0;
    for _ in 0..10_000 {
        let w = apply(&v);
        let norm = w.norm();
        if norm == 0.0 {
            return Err(Error::Config("A is zero; sigma_A undefined".into()));
        }
        let next = w / norm;
        let converged = (norm - lmax).abs() <= 1e-12 * norm;
        lmax = norm;
        v = next;
        if converged {
            break;
        }
    }

    let shift = 1.01 * lmax;
    let mut v = apply(&DVector::from_fn(n, |i, _| {
        ((i as f64 + 1.0) * 0.754_877_666_246_7).fract() - 0.5
    }));
    v /= v.norm();
    let mut rayleigh = f64::NAN;
    for it in 0..max_iter {
        let av = apply(&v);
        rayleigh = v.dot(&av);
        let resid = (&av - &v * rayleigh).norm();
        if resid <= tol * lmax.max(1.0) && rayleigh > 1e-10 * lmax {
            return Ok((rayleigh, v));
        }
        let mut w = &v * shift - av;
        if it % 20 == 19 {
            w = apply(&w);
        }
        let norm = w.norm();
        v = w / norm;
    }
    Err(Error::LinearSolve(format!(
        "power iteration did not converge (last Rayleigh quotient {rayleigh:e})"
    )))
}
