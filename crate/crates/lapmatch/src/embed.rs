//! K-dimensional Laplacian eigenmap of a shape graph.
//!
//! The eigensolver is a Lanczos iteration with full reorthogonalization on
//! the symmetric normalized Laplacian; only matrix-vector products touch
//! the sparse operator. The zero eigenpair of the connected graph is
//! discarded and the returned eigenvectors are corrected to the
//! generalized form `u = D^{-1/2} v` used by the embedding.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{normalized_laplacian, ShapeGraph};
use crate::sparse::SparseSym;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EmbedConfig {
    /// Eigenpairs requested from the solver before alignment pruning.
    pub k_request: usize,
    /// Residual bound per returned eigenpair, on the symmetric form.
    pub tol: f64,
    /// Hard cap on the Krylov dimension; `None` picks from `k` and `n`.
    pub max_krylov: Option<usize>,
    /// Seed for the deterministic start vector.
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            k_request: 25,
            tol: 1e-8,
            max_krylov: None,
            seed: 0,
        }
    }
}

/// K eigenpairs of the Laplacian and the N×K embedded coordinates.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// Ascending, strictly positive (zero pair excluded).
    pub eigenvalues: Vec<f64>,
    /// Unit-norm eigenvectors of `L_sym`, one column per eigenvalue.
    pub eigenvectors: DMatrix<f64>,
    /// `D^{-1/2}`-corrected eigenvectors, columns renormalized to unit
    /// norm; row `i` is the embedded point of node `i`.
    pub coordinates: DMatrix<f64>,
}

impl Embedding {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.coordinates.nrows()
    }
}

/// Embed with default solver settings.
pub fn embed(graph: &ShapeGraph, k_request: usize) -> Result<Embedding> {
    embed_with(graph, k_request, &EmbedConfig::default())
}

/// Compute the `k_request` smallest nonzero eigenpairs of `L_sym`.
pub fn embed_with(graph: &ShapeGraph, k_request: usize, config: &EmbedConfig) -> Result<Embedding> {
    let n = graph.n_nodes();
    if k_request == 0 || k_request + 1 > n {
        return Err(Error::InsufficientNodes {
            requested: k_request,
            nodes: n,
        });
    }
    let lap = normalized_laplacian(graph);
    let want = k_request + 1; // zero pair included, dropped below
    let (theta, vectors) = lanczos_smallest(&lap, want, config)?;

    // The smallest pair must be the (numerically) zero one.
    if theta[0].abs() > 1e-6 {
        return Err(Error::SolverFailure(format!(
            "smallest eigenvalue {} is not numerically zero; graph may be disconnected",
            theta[0]
        )));
    }

    let mut eigenvalues = Vec::with_capacity(k_request);
    let mut eigenvectors = DMatrix::zeros(n, k_request);
    let mut coordinates = DMatrix::zeros(n, k_request);
    let degrees = graph.degrees();
    for k in 0..k_request {
        let lambda = theta[k + 1];
        let mut v = vectors.column(k + 1).clone_owned();
        canonical_sign(&mut v);
        // generalized correction u = D^{-1/2} v, unit norm
        let mut u = DVector::from_fn(n, |i, _| v[i] / degrees[i].sqrt());
        let norm = u.norm();
        u /= norm;
        eigenvalues.push(lambda);
        eigenvectors.set_column(k, &v);
        coordinates.set_column(k, &u);
    }
    Ok(Embedding {
        eigenvalues,
        eigenvectors,
        coordinates,
    })
}

/// Flip so the largest-magnitude entry (first on ties) is positive.
fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-15 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Lanczos with full reorthogonalization; returns the `want` smallest
/// Ritz pairs once every residual is below `config.tol`.
fn lanczos_smallest(
    a: &SparseSym,
    want: usize,
    config: &EmbedConfig,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.n();
    let m_max = config
        .max_krylov
        .unwrap_or_else(|| n.min((10 * want).max(500)));
    let m_max = m_max.max(want).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m_max);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new(); // beta[j] couples v_j and v_{j+1}

    let mut v = random_unit(n, &mut rng);
    basis.push(v.clone());

    let mut work = DVector::zeros(n);
    let mut next_check = (3 * want).min(m_max);
    loop {
        let j = alpha.len();
        // w = A v_j
        a.matvec(v.as_slice(), work.as_mut_slice());
        let mut w = work.clone();
        if j > 0 && beta[j - 1] > 0.0 {
            w.axpy(-beta[j - 1], &basis[j - 1], 1.0);
        }
        let aj = w.dot(&v);
        alpha.push(aj);
        w.axpy(-aj, &v, 1.0);
        // full reorthogonalization, two passes
        for _ in 0..2 {
            for b in &basis {
                let c = w.dot(b);
                w.axpy(-c, b, 1.0);
            }
        }
        let mut bj = w.norm();
        let m = alpha.len();
        let exhausted = m >= m_max;
        if bj < 1e-12 && !exhausted {
            // invariant subspace found; restart with a fresh direction
            w = random_unit(n, &mut rng);
            for _ in 0..2 {
                for b in &basis {
                    let c = w.dot(b);
                    w.axpy(-c, b, 1.0);
                }
            }
            let norm = w.norm();
            if norm < 1e-12 {
                // basis spans the whole space
                return finalize(a, want, &alpha, &beta, &basis, config.tol, true);
            }
            w /= norm;
            bj = 0.0;
        }

        if exhausted || m >= next_check {
            let ritz = finalize(a, want, &alpha, &beta, &basis, config.tol, exhausted);
            match ritz {
                Ok(res) => return Ok(res),
                Err(_) if !exhausted => {
                    next_check = ((next_check * 3) / 2).min(m_max);
                }
                Err(e) => return Err(e),
            }
        }
        if m >= m_max {
            return Err(Error::SolverFailure(format!(
                "no convergence within Krylov dimension {m_max}"
            )));
        }

        beta.push(bj);
        if bj > 0.0 {
            w /= bj;
        }
        basis.push(w.clone());
        v = w;
    }
}

/// Solve the projected tridiagonal problem and accept if the `want`
/// smallest Ritz pairs meet the residual tolerance.
fn finalize(
    a: &SparseSym,
    want: usize,
    alpha: &[f64],
    beta: &[f64],
    basis: &[DVector<f64>],
    tol: f64,
    must: bool,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = alpha.len();
    if m < want {
        return Err(Error::SolverFailure("Krylov space too small".into()));
    }
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let n = a.n();
    let mut values = Vec::with_capacity(want);
    let mut vectors = DMatrix::zeros(n, want);
    let mut resid = DVector::zeros(n);
    for (col, &idx) in order.iter().take(want).enumerate() {
        let s = eig.eigenvectors.column(idx);
        let mut y = DVector::zeros(n);
        for (j, b) in basis.iter().take(m).enumerate() {
            y.axpy(s[j], b, 1.0);
        }
        let norm = y.norm();
        if norm < 1e-12 {
            return Err(Error::SolverFailure("degenerate Ritz vector".into()));
        }
        y /= norm;
        a.matvec(y.as_slice(), resid.as_mut_slice());
        let theta = eig.eigenvalues[idx];
        resid.axpy(-theta, &y, 1.0);
        let r = resid.norm();
        if r > tol {
            if must {
                return Err(Error::SolverFailure(format!(
                    "Ritz pair {col} residual {r:.3e} exceeds tolerance {tol:.1e}"
                )));
            }
            return Err(Error::SolverFailure("not converged".into()));
        }
        values.push(theta);
        vectors.set_column(col, &y);
    }
    Ok((values, vectors))
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    v /= norm;
    v
}

/// Diagnostic: sum over undirected edges of `W_ij ||x_i - x_j||^2`, the
/// quantity the eigenmap minimizes.
pub fn embedding_distortion(graph: &ShapeGraph, emb: &Embedding) -> Result<f64> {
    if emb.n() != graph.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} rows, graph has {} nodes",
            emb.n(),
            graph.n_nodes()
        )));
    }
    let coords = &emb.coordinates;
    let mut total = 0.0;
    for (i, j, w) in graph.edges() {
        let mut d2 = 0.0;
        for c in 0..coords.ncols() {
            let diff = coords[(i, c)] - coords[(j, c)];
            d2 += diff * diff;
        }
        total += w * d2;
    }
    Ok(total)
}

/// Write the columnar text format: header `n k`, then N rows of K floats.
pub fn save_embedding(path: &Path, emb: &Embedding) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{} {}", emb.n(), emb.k())?;
    for i in 0..emb.n() {
        let row: Vec<String> = (0..emb.k())
            .map(|c| format!("{:.17e}", emb.coordinates[(i, c)]))
            .collect();
        writeln!(file, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Read back a coordinate matrix saved by [`save_embedding`].
pub fn load_coordinates(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })??;
    let mut it = header.split_whitespace();
    let n: usize = parse_field(it.next(), 1)?;
    let k: usize = parse_field(it.next(), 1)?;
    let mut coords = DMatrix::zeros(n, k);
    for i in 0..n {
        let line = lines
            .next()
            .ok_or(Error::Parse {
                line: i + 2,
                message: "missing row".into(),
            })??;
        let mut fields = line.split_whitespace();
        for c in 0..k {
            let v: f64 = parse_field(fields.next(), i + 2)?;
            coords[(i, c)] = v;
        }
    }
    Ok(coords)
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.ok_or(Error::Parse {
        line,
        message: "missing field".into(),
    })?
    .parse()
    .map_err(|_| Error::Parse {
        line,
        message: "bad numeric field".into(),
    })
}
