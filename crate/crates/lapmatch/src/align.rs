//! Eigenfunction alignment through histogram signatures.
//!
//! Eigenvector histograms are invariant to node relabeling, so two
//! embeddings of the same articulated shape can be aligned by matching
//! histograms instead of relying on eigenvalue order. Sign ambiguity is
//! resolved by also comparing against the bin-reversed histogram. The
//! result is a signed permutation over the retained eigenfunction pairs,
//! which seeds the EM registration.

use nalgebra::DMatrix;

use crate::embed::Embedding;
use crate::hungarian::min_cost_assignment;
use crate::{par, Error, Result};

#[derive(Debug, Clone)]
pub struct AlignConfig {
    /// Histogram bin count; even, so that sign flips reverse bins exactly.
    pub bins: usize,
    /// Drop pairs with dissimilarity above this (chi-squared units).
    pub retain_threshold: f64,
    /// Keep at most this many lowest-cost pairs.
    pub max_k: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            bins: 64,
            retain_threshold: 0.25,
            max_k: 10,
        }
    }
}

/// Normalized histogram of an eigenvector's components over a symmetric
/// range `[-a, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    bins: Vec<f64>,
    range: f64,
}

impl Signature {
    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    /// The signature of `-u`: bins in reverse order.
    pub fn reversed(&self) -> Signature {
        let mut bins = self.bins.clone();
        bins.reverse();
        Signature {
            bins,
            range: self.range,
        }
    }
}

/// Histogram a vector over `[-range_a, range_a]` with `bins` bins.
///
/// Bins are half-open `[lo, hi)` except the top bin, which is closed, so
/// values at `+range_a` stay in range.
pub fn signature(u: &[f64], bins: usize, range_a: f64) -> Result<Signature> {
    assert!(!u.is_empty(), "eigenvector must be nonempty");
    assert!(bins >= 2 && bins % 2 == 0, "bin count must be even and >= 2");
    let max_abs = u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if max_abs > range_a {
        return Err(Error::RangeTooSmall {
            max_abs,
            range: range_a,
        });
    }
    let width = 2.0 * range_a / bins as f64;
    let mut counts = vec![0.0f64; bins];
    for &x in u {
        let idx = (((x + range_a) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1.0;
    }
    let total = u.len() as f64;
    for c in counts.iter_mut() {
        *c /= total;
    }
    Ok(Signature {
        bins: counts,
        range: range_a,
    })
}

/// Chi-squared distance `0.5 * sum (p-q)^2 / (p+q)` with `0/0 := 0`.
pub fn dissimilarity(h1: &Signature, h2: &Signature) -> Result<f64> {
    if h1.bins.len() != h2.bins.len() {
        return Err(Error::BinMismatch(h1.bins.len(), h2.bins.len()));
    }
    if (h1.range - h2.range).abs() > 1e-12 * h1.range.abs().max(1.0) {
        return Err(Error::DimensionMismatch(format!(
            "signature ranges differ: {} vs {}",
            h1.range, h2.range
        )));
    }
    let mut acc = 0.0;
    for (&p, &q) in h1.bins.iter().zip(&h2.bins) {
        let denom = p + q;
        if denom > 0.0 {
            let diff = p - q;
            acc += diff * diff / denom;
        }
    }
    Ok(0.5 * acc)
}

/// One matched eigenfunction pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    /// Eigenfunction index in the first embedding.
    pub k_x: usize,
    /// Eigenfunction index in the second embedding.
    pub l_y: usize,
    /// +1.0 or -1.0, the sign achieving the smaller dissimilarity.
    pub sign: f64,
    /// Dissimilarity at that sign.
    pub cost: f64,
}

/// Permutation, signs and retained pairs aligning two sets of
/// eigenfunctions, with the induced initial orthogonal transform.
#[derive(Debug, Clone)]
pub struct EigenAlignment {
    /// Retained pairs, costs ascending.
    pub pairs: Vec<AlignedPair>,
    /// Signed permutation `R0 = S P` over the retained K: rows follow the
    /// retained x-columns sorted ascending, columns the retained
    /// y-columns sorted ascending, so `x ~ R0 y` for reduced coordinates.
    pub initial_rotation: DMatrix<f64>,
}

impl EigenAlignment {
    pub fn retained_k(&self) -> usize {
        self.pairs.len()
    }

    /// Retained x-side eigenfunction indices, ascending; the row order of
    /// `initial_rotation` and the column order of [`Self::reduce_x`].
    pub fn x_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.pairs.iter().map(|p| p.k_x).collect();
        cols.sort_unstable();
        cols
    }

    /// Retained y-side eigenfunction indices, ascending.
    pub fn y_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.pairs.iter().map(|p| p.l_y).collect();
        cols.sort_unstable();
        cols
    }

    /// Restrict x-side coordinates to the retained eigenfunctions.
    pub fn reduce_x(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        select_columns(coords, &self.x_columns())
    }

    /// Restrict y-side coordinates to the retained eigenfunctions.
    pub fn reduce_y(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        select_columns(coords, &self.y_columns())
    }
}

fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, c| m[(i, cols[c])])
}

/// Align two embeddings; see [`align_columns`].
pub fn align_eigenfunctions(
    ex: &Embedding,
    ey: &Embedding,
    config: &AlignConfig,
) -> Result<EigenAlignment> {
    align_columns(&ex.coordinates, &ey.coordinates, config)
}

/// Align the columns of two coordinate matrices by histogram signatures.
///
/// Builds the full K×K dissimilarity matrix (each comparison over a shared
/// symmetric range so the sign-flip reversal identity is exact), solves
/// the assignment exactly, then prunes to the best-aligned pairs.
pub fn align_columns(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    config: &AlignConfig,
) -> Result<EigenAlignment> {
    let k = x.ncols();
    if k != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "embeddings have {} and {} eigenfunctions",
            k,
            y.ncols()
        )));
    }
    let bins = config.bins;

    // dissimilarity matrix and best sign per entry, parallel per entry
    let entries: Vec<(f64, f64)> = par::map_indexed(k * k, |idx| {
        let (kx, ly) = (idx / k, idx % k);
        let u: Vec<f64> = x.column(kx).iter().copied().collect();
        let v: Vec<f64> = y.column(ly).iter().copied().collect();
        let range = inf_norm(&u).max(inf_norm(&v));
        let hu = signature(&u, bins, range).expect("range covers both vectors");
        let hv = signature(&v, bins, range).expect("range covers both vectors");
        let plus = dissimilarity(&hu, &hv).expect("same bins and range");
        let minus = dissimilarity(&hu, &hv.reversed()).expect("same bins and range");
        if plus <= minus {
            (plus, 1.0)
        } else {
            (minus, -1.0)
        }
    });
    let cost = DMatrix::from_fn(k, k, |i, j| entries[i * k + j].0);

    let (assignment, _) = min_cost_assignment(&cost);
    let mut pairs: Vec<AlignedPair> = (0..k)
        .map(|kx| {
            let ly = assignment[kx];
            AlignedPair {
                k_x: kx,
                l_y: ly,
                sign: entries[kx * k + ly].1,
                cost: cost[(kx, ly)],
            }
        })
        .collect();
    pairs.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.k_x.cmp(&b.k_x)));
    pairs.retain(|p| p.cost <= config.retain_threshold);
    pairs.truncate(config.max_k);
    if pairs.is_empty() {
        return Err(Error::NoRetainedPairs {
            threshold: config.retain_threshold,
        });
    }

    let alignment = EigenAlignment {
        initial_rotation: DMatrix::zeros(pairs.len(), pairs.len()),
        pairs,
    };
    let x_cols = alignment.x_columns();
    let y_cols = alignment.y_columns();
    let mut r0 = DMatrix::zeros(x_cols.len(), y_cols.len());
    for p in &alignment.pairs {
        let row = x_cols.iter().position(|&c| c == p.k_x).unwrap();
        let col = y_cols.iter().position(|&c| c == p.l_y).unwrap();
        r0[(row, col)] = p.sign;
    }
    Ok(EigenAlignment {
        initial_rotation: r0,
        ..alignment
    })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Umeyama-style full-eigenbasis alignment, usable only on tiny graphs
/// with distinct spectra. Test oracle for planted isomorphisms.
pub mod umeyama {
    use super::*;
    use crate::graph::{normalized_laplacian, ShapeGraph};

    /// Recover the node permutation between two isomorphic graphs from
    /// `Q* = U_x S U_y^T`, brute-forcing the sign matrix `S` and
    /// extracting the permutation by row-wise maximum. Returns `perm`
    /// with `perm[i] = j` matching x-node `i` to y-node `j`.
    pub fn umeyama_oracle(gx: &ShapeGraph, gy: &ShapeGraph) -> Result<Vec<usize>> {
        let n = gx.n_nodes();
        assert!(n <= 12, "oracle is exponential in n");
        assert_eq!(n, gy.n_nodes(), "graphs must have equal size");
        let lx = normalized_laplacian(gx).to_dense();
        let ly = normalized_laplacian(gy).to_dense();
        let (vals_x, ux) = sorted_eigen(&lx);
        let (vals_y, uy) = sorted_eigen(&ly);
        for vals in [&vals_x, &vals_y] {
            for w in vals.windows(2) {
                let gap = w[1] - w[0];
                if gap < 1e-9 {
                    return Err(Error::DegenerateSpectrum { gap });
                }
            }
        }

        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            // Q = sum_k s_k u_x^k (u_y^k)^T, row-wise argmax
            let mut perm = Vec::with_capacity(n);
            let mut valid = true;
            let mut used = vec![false; n];
            for i in 0..n {
                let mut best_j = 0;
                let mut best_v = f64::NEG_INFINITY;
                for j in 0..n {
                    let mut q = 0.0;
                    for k in 0..n {
                        let s = if mask & (1 << k) != 0 { -1.0 } else { 1.0 };
                        q += s * ux[(i, k)] * uy[(j, k)];
                    }
                    if q > best_v {
                        best_v = q;
                        best_j = j;
                    }
                }
                if used[best_j] {
                    valid = false;
                    break;
                }
                used[best_j] = true;
                perm.push(best_j);
            }
            if !valid {
                continue;
            }
            let j = isomorphism_objective(&lx, &ly, &perm);
            if best.as_ref().map_or(true, |(bj, _)| j < *bj) {
                best = Some((j, perm));
            }
        }
        best.map(|(_, p)| p)
            .ok_or_else(|| Error::SolverFailure("no sign choice yielded a permutation".into()))
    }

    /// `J(P) = ||L_x - P L_y P^T||_F^2` for a permutation given as
    /// `perm[i] = j`.
    pub fn isomorphism_objective(lx: &DMatrix<f64>, ly: &DMatrix<f64>, perm: &[usize]) -> f64 {
        let n = lx.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            for i2 in 0..n {
                let diff = lx[(i, i2)] - ly[(perm[i], perm[i2])];
                acc += diff * diff;
            }
        }
        acc
    }

    fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let eig = m.clone().symmetric_eigen();
        let n = m.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (vals, vecs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ShapeGraph;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_values_split_symmetrically() {
        let h = signature(&[0.5, -0.5], 2, 0.5).unwrap();
        assert_eq!(h.bins(), &[0.5, 0.5]);
    }

    #[test]
    fn signature_is_permutation_invariant() {
        let u = [0.3, -0.1, 0.7, 0.2, -0.6, 0.0];
        let mut shuffled = u;
        shuffled.reverse();
        shuffled.swap(1, 4);
        let h1 = signature(&u, 4, 0.7).unwrap();
        let h2 = signature(&shuffled, 4, 0.7).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn negation_reverses_bins() {
        let u = [0.31, -0.13, 0.72, 0.24, -0.69, 0.05, 0.41];
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let h = signature(&u, 8, 0.72).unwrap();
        let hn = signature(&neg, 8, 0.72).unwrap();
        assert_eq!(hn, h.reversed());
    }

    #[test]
    fn range_too_small_rejected() {
        assert!(matches!(
            signature(&[0.5, -0.9], 2, 0.5),
            Err(Error::RangeTooSmall { .. })
        ));
    }

    #[test]
    fn chi_squared_examples() {
        let h1 = Signature {
            bins: vec![1.0, 0.0],
            range: 1.0,
        };
        let h2 = Signature {
            bins: vec![0.0, 1.0],
            range: 1.0,
        };
        assert_eq!(dissimilarity(&h1, &h1).unwrap(), 0.0);
        assert_relative_eq!(dissimilarity(&h1, &h2).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn chi_squared_symmetric_on_random_histograms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let raw1: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let raw2: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                Signature {
                    bins: v.iter().map(|x| x / s).collect(),
                    range: 1.0,
                }
            };
            let (h1, h2) = (norm(&raw1), norm(&raw2));
            let d12 = dissimilarity(&h1, &h2).unwrap();
            let d21 = dissimilarity(&h2, &h1).unwrap();
            assert_relative_eq!(d12, d21, epsilon = 1e-15);
            assert!(d12 >= 0.0);
        }
    }

    #[test]
    fn bin_mismatch_rejected() {
        let h1 = Signature {
            bins: vec![0.5, 0.5],
            range: 1.0,
        };
        let h2 = Signature {
            bins: vec![0.25; 4],
            range: 1.0,
        };
        assert!(matches!(
            dissimilarity(&h1, &h2),
            Err(Error::BinMismatch(2, 4))
        ));
    }

    fn test_embedding(n: usize, k: usize) -> DMatrix<f64> {
        // columns resembling eigenfunctions: smooth, zero-mean-ish, distinct
        DMatrix::from_fn(n, k, |i, c| {
            let t = i as f64 / (n - 1) as f64;
            (std::f64::consts::PI * (c + 1) as f64 * t).cos() / (n as f64).sqrt()
                + 0.01 * ((c * 37 + i * 11) % 13) as f64 / 13.0
        })
    }

    #[test]
    fn self_alignment_is_identity() {
        let x = test_embedding(120, 6);
        let a = align_columns(&x, &x, &AlignConfig::default()).unwrap();
        assert_eq!(a.retained_k(), 6);
        for p in &a.pairs {
            assert_eq!(p.k_x, p.l_y);
            assert_eq!(p.sign, 1.0);
            assert_eq!(p.cost, 0.0);
        }
        assert_eq!(a.initial_rotation, DMatrix::identity(6, 6));
    }

    #[test]
    fn recovers_planted_permutation_and_signs() {
        let x = test_embedding(150, 5);
        let pi = [3usize, 0, 4, 2, 1]; // y column j = sign_j * x column pi[j]
        let signs = [1.0, -1.0, -1.0, 1.0, -1.0];
        let y = DMatrix::from_fn(150, 5, |i, j| signs[j] * x[(i, pi[j])]);
        let a = align_columns(&x, &y, &AlignConfig::default()).unwrap();
        assert_eq!(a.retained_k(), 5);
        for p in &a.pairs {
            assert_eq!(pi[p.l_y], p.k_x, "pair {p:?}");
            assert_eq!(p.sign, signs[p.l_y], "pair {p:?}");
            assert!(p.cost <= 1e-12);
        }
        // x ~ R0 y for reduced coordinates
        let rx = a.reduce_x(&x);
        let ry = a.reduce_y(&y);
        let recon = &ry * a.initial_rotation.transpose();
        assert_relative_eq!((rx - recon).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hungarian_matches_exhaustive_signed_permutations_k4() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let x = DMatrix::from_fn(60, 4, |_, _| rng.gen_range(-1.0..1.0));
            let y = DMatrix::from_fn(60, 4, |_, _| rng.gen_range(-1.0..1.0));
            let config = AlignConfig {
                retain_threshold: f64::INFINITY,
                ..AlignConfig::default()
            };
            let a = align_columns(&x, &y, &config).unwrap();
            let total: f64 = a.pairs.iter().map(|p| p.cost).sum();

            // exhaustive oracle over all 4! * 2^4 signed permutations
            let mut best = f64::INFINITY;
            let perms = [
                [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2],
                [0, 3, 2, 1], [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0],
                [1, 3, 0, 2], [1, 3, 2, 0], [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3],
                [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0], [3, 0, 1, 2], [3, 0, 2, 1],
                [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
            ];
            for perm in perms {
                for mask in 0..16u32 {
                    let mut cost = 0.0;
                    for kx in 0..4 {
                        let ly = perm[kx];
                        let u: Vec<f64> = x.column(kx).iter().copied().collect();
                        let mut v: Vec<f64> = y.column(ly).iter().copied().collect();
                        if mask & (1 << kx) != 0 {
                            v.iter_mut().for_each(|t| *t = -*t);
                        }
                        let range = u
                            .iter()
                            .chain(&v)
                            .fold(0.0f64, |m, &t| m.max(t.abs()));
                        let hu = signature(&u, config.bins, range).unwrap();
                        let hv = signature(&v, config.bins, range).unwrap();
                        cost += dissimilarity(&hu, &hv).unwrap();
                    }
                    best = best.min(cost);
                }
            }
            assert!(
                (total - best).abs() < 1e-10,
                "trial {trial}: hungarian {total} vs oracle {best}"
            );
        }
    }

    #[test]
    fn initial_rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(80, 7, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(80, 7, |_, _| rng.gen_range(-1.0..1.0));
        let a = align_columns(
            &x,
            &y,
            &AlignConfig {
                retain_threshold: f64::INFINITY,
                max_k: 5,
                ..AlignConfig::default()
            },
        )
        .unwrap();
        let r0 = &a.initial_rotation;
        let gram = r0.transpose() * r0;
        assert_eq!(gram, DMatrix::identity(a.retained_k(), a.retained_k()));
    }

    #[test]
    fn alignment_invariant_to_node_relabeling() {
        let x = test_embedding(90, 4);
        let y = test_embedding(90, 4) * 0.97;
        let mut order: Vec<usize> = (0..90).collect();
        order.reverse();
        order.swap(10, 40);
        let xp = DMatrix::from_fn(90, 4, |i, c| x[(order[i], c)]);
        let a1 = align_columns(&x, &y, &AlignConfig::default()).unwrap();
        let a2 = align_columns(&xp, &y, &AlignConfig::default()).unwrap();
        assert_eq!(a1.pairs.len(), a2.pairs.len());
        for (p, q) in a1.pairs.iter().zip(&a2.pairs) {
            assert_eq!(p.k_x, q.k_x);
            assert_eq!(p.l_y, q.l_y);
            assert_eq!(p.sign, q.sign);
            assert_relative_eq!(p.cost, q.cost, epsilon = 1e-12);
        }
    }

    #[test]
    fn raising_threshold_never_drops_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(70, 6, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(70, 6, |_, _| rng.gen_range(-1.0..1.0));
        let mut previous: Vec<(usize, usize)> = Vec::new();
        for threshold in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let config = AlignConfig {
                retain_threshold: threshold,
                max_k: 6,
                ..AlignConfig::default()
            };
            match align_columns(&x, &y, &config) {
                Ok(a) => {
                    let current: Vec<(usize, usize)> =
                        a.pairs.iter().map(|p| (p.k_x, p.l_y)).collect();
                    for pair in &previous {
                        assert!(current.contains(pair), "lost {pair:?} at {threshold}");
                    }
                    previous = current;
                }
                Err(Error::NoRetainedPairs { .. }) => assert!(previous.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn no_retained_pairs_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(0.9..1.0));
        let config = AlignConfig {
            retain_threshold: 1e-9,
            ..AlignConfig::default()
        };
        assert!(matches!(
            align_columns(&x, &y, &config),
            Err(Error::NoRetainedPairs { .. })
        ));
    }

    mod umeyama_oracle {
        use super::super::umeyama::{isomorphism_objective, umeyama_oracle};
        use super::*;
        use crate::graph::normalized_laplacian;

        fn weighted_path(n: usize) -> Vec<(usize, usize, f64)> {
            // distinct weights give a simple spectrum
            (0..n - 1)
                .map(|i| (i, i + 1, 0.3 + 0.13 * i as f64))
                .collect()
        }

        #[test]
        fn identity_on_same_graph() {
            let g = ShapeGraph::from_edges(6, &weighted_path(6), 1.0);
            let perm = umeyama_oracle(&g, &g).unwrap();
            assert_eq!(perm, vec![0, 1, 2, 3, 4, 5]);
        }

        #[test]
        fn recovers_planted_relabeling_with_brute_force_check() {
            let n = 6;
            let edges = weighted_path(n);
            let gx = ShapeGraph::from_edges(n, &edges, 1.0);
            let pi = [4usize, 2, 0, 5, 1, 3];
            let edges_y: Vec<(usize, usize, f64)> =
                edges.iter().map(|&(i, j, w)| (pi[i], pi[j], w)).collect();
            let gy = ShapeGraph::from_edges(n, &edges_y, 1.0);
            let perm = umeyama_oracle(&gx, &gy).unwrap();
            assert_eq!(perm.to_vec(), pi.to_vec());

            // J(P) of the recovered P is 0 and is the brute-force minimum
            let lx = normalized_laplacian(&gx).to_dense();
            let ly = normalized_laplacian(&gy).to_dense();
            let j_star = isomorphism_objective(&lx, &ly, &perm);
            assert!(j_star < 1e-18);
            let mut items: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permute_all(&mut items, 0, &mut |p| {
                best = best.min(isomorphism_objective(&lx, &ly, p));
            });
            assert!((j_star - best).abs() < 1e-18);
        }

        #[test]
        fn degenerate_spectrum_rejected() {
            // 4-cycle with equal weights has a repeated eigenvalue
            let edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)];
            let g = ShapeGraph::from_edges(4, &edges, 1.0);
            assert!(matches!(
                umeyama_oracle(&g, &g),
                Err(Error::DegenerateSpectrum { .. })
            ));
        }

        fn permute_all<F: FnMut(&[usize])>(items: &mut Vec<usize>, k: usize, f: &mut F) {
            if k == items.len() {
                f(items);
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permute_all(items, k + 1, f);
                items.swap(k, i);
            }
        }
    }
}
