//! Robust point registration of two K-dimensional embedded point sets
//! under an orthogonal transform.
//!
//! The first set is treated as observations, the second as centers of
//! Gaussian clusters sharing one global covariance, plus a uniform outlier
//! component over the working volume. EM alternates posterior computation
//! with closed-form updates of the orthogonal transform (weighted SVD over
//! virtual means) and of the shared covariance.
//!
//! Posteriors follow `alpha_nm = exp(-d_S(x_n, R y_m)) / (sum_i
//! exp(-d_S(x_n, R y_i)) + kappa)` with `d_S` the Mahalanobis distance;
//! the exponent carries no 1/2 factor and the Gaussian normalization is
//! folded into `kappa = (2 pi)^{K/2} (det S)^{1/2} pi_out / (V pi_in)`.

use nalgebra::{DMatrix, DVector};

use crate::{par, Error, Result};

const LOG_SKIP: f64 = 45.0; // exp(-45) ~ 3e-20: below posterior resolution

// relative posterior margin under which a previous hard label is treated
// as unchanged for the stability stopping rule
const STABILITY_RTOL: f64 = 1e-3;

// kappa the initial covariance is shrunk to whenever the formula puts it
// above 1 right after initialization; see init_params
const KAPPA0_MAX: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Prior mass of the uniform outlier component.
    pub pi_out: f64,
    /// Initial isotropic std dev as a fraction of the observation
    /// bounding-box diagonal.
    pub sigma0_factor: f64,
    /// Absolute covariance floor (std-dev units); `None` derives
    /// `1e-6 * bounding-box diagonal`.
    pub sigma_floor: Option<f64>,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Clusters with posterior weight below this are reported unmatched.
    pub match_threshold: f64,
    /// Also stop once the hard correspondence labels repeat between
    /// consecutive iterations.
    pub stop_on_stable_labels: bool,
    /// Keep the dense posterior matrix only when `N*(M+1)` is at most
    /// this; the per-observation summary is always available.
    pub max_posterior_cells: usize,
    /// Reserved for reproducibility plumbing; the EM itself is
    /// deterministic.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            pi_out: 0.05,
            sigma0_factor: 0.1,
            sigma_floor: None,
            tol: 1e-6,
            max_iter: 100,
            match_threshold: 0.5,
            stop_on_stable_labels: true,
            max_posterior_cells: 40_000_000,
            seed: 0,
        }
    }
}

/// Parameters of the Gaussian mixture with uniform outlier class.
#[derive(Debug, Clone)]
pub struct MixtureParams {
    /// K×K orthogonal transform; cluster m has mean `R y_m`.
    pub rotation: DMatrix<f64>,
    /// Shared K×K SPD covariance.
    pub covariance: DMatrix<f64>,
    /// Per-cluster prior, equal across the M clusters.
    pub pi_in: f64,
    /// Outlier prior, `1 - M * pi_in`.
    pub pi_out: f64,
    /// Working-volume measure of the embedded space.
    pub volume: f64,
    /// Uniform-component weight in the posterior denominator.
    pub kappa: f64,
    pub n_clusters: usize,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.rotation.nrows()
    }

    /// `kappa = (2 pi)^{K/2} (det S)^{1/2} pi_out / (V pi_in)`.
    pub fn kappa_formula(&self) -> f64 {
        if self.pi_out == 0.0 {
            return 0.0;
        }
        let k = self.k() as f64;
        let det = self.covariance.determinant();
        (2.0 * std::f64::consts::PI).powf(k / 2.0) * det.sqrt() * self.pi_out
            / (self.volume * self.pi_in)
    }

    pub fn refresh_kappa(&mut self) {
        self.kappa = self.kappa_formula();
    }

    /// Check the structural invariants: orthogonality, SPD covariance,
    /// prior bookkeeping and kappa consistency.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let gram = self.rotation.transpose() * &self.rotation;
        let dev = (&gram - DMatrix::identity(k, k)).amax();
        if dev > 1e-10 {
            return Err(Error::DimensionMismatch(format!(
                "rotation not orthogonal, |R^T R - I| = {dev:.3e}"
            )));
        }
        let eig = self.covariance.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::SingularCovariance);
        }
        let total = self.n_clusters as f64 * self.pi_in + self.pi_out;
        if self.pi_in <= 0.0 || !(0.0..1.0).contains(&self.pi_out) || (total - 1.0).abs() > 1e-10 {
            return Err(Error::DimensionMismatch(format!(
                "priors inconsistent: M*pi_in + pi_out = {total}"
            )));
        }
        let expect = self.kappa_formula();
        let scale = expect.abs().max(1e-300);
        if (self.kappa - expect).abs() / scale > 1e-12 && expect != 0.0 {
            return Err(Error::DimensionMismatch(format!(
                "kappa {} inconsistent with formula {}",
                self.kappa, expect
            )));
        }
        Ok(())
    }
}

/// Per-observation posterior summary.
#[derive(Debug, Clone, Copy)]
pub struct ObservationSummary {
    /// Cluster with the largest posterior.
    pub best_cluster: usize,
    pub best_posterior: f64,
    pub outlier_posterior: f64,
    /// Outlier posterior exceeds every cluster posterior.
    pub is_outlier: bool,
}

/// One cluster's side of the final soft assignment.
#[derive(Debug, Clone)]
pub struct ClusterMatch {
    pub cluster: usize,
    /// Virtual mean `x_bar_m`; meaningless when `defined` is false.
    pub virtual_mean: DVector<f64>,
    /// Posterior weight `xi_m`.
    pub weight: f64,
    /// Weight reached the match threshold.
    pub matched: bool,
    /// False when `xi_m` vanished and the mean is undefined.
    pub defined: bool,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub params: MixtureParams,
    pub observations: Vec<ObservationSummary>,
    /// Dense N×(M+1) posterior matrix (outlier column last); kept only
    /// when small enough, see [`EmConfig::max_posterior_cells`].
    pub posteriors: Option<DMatrix<f64>>,
    /// M×K virtual means (rows for undefined clusters are zero).
    pub virtual_means: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub correspondence: Vec<ClusterMatch>,
    pub iterations: usize,
    pub log_likelihood: Vec<f64>,
    pub warnings: Vec<String>,
}

fn bounding_box(points: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let k = points.ncols();
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for i in 0..points.nrows() {
        for c in 0..k {
            lo[c] = lo[c].min(points[(i, c)]);
            hi[c] = hi[c].max(points[(i, c)]);
        }
    }
    (lo, hi)
}

fn bbox_diagonal(points: &DMatrix<f64>) -> f64 {
    let (lo, hi) = bounding_box(points);
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| (h - l) * (h - l))
        .sum::<f64>()
        .sqrt()
}

/// Initialize mixture parameters from the two embedded point sets and the
/// eigenfunction-alignment transform.
pub fn init_params(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r0: &DMatrix<f64>,
    config: &EmConfig,
) -> Result<MixtureParams> {
    let k = x.ncols();
    if y.ncols() != k || r0.nrows() != k || r0.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "K mismatch: x has {}, y has {}, r0 is {}x{}",
            k,
            y.ncols(),
            r0.nrows(),
            r0.ncols()
        )));
    }
    assert!(x.nrows() > 0 && y.nrows() > 0, "empty point sets");
    let m = y.nrows();

    let sigma0 = config.sigma0_factor * bbox_diagonal(x);
    let covariance = DMatrix::identity(k, k) * (sigma0 * sigma0).max(1e-300);

    // working volume: bounding box of the union, volume inflated by 5%
    let (lo_x, hi_x) = bounding_box(x);
    let (lo_y, hi_y) = bounding_box(y);
    let mut volume = 1.05;
    for c in 0..k {
        let range = (hi_x[c].max(hi_y[c]) - lo_x[c].min(lo_y[c])).max(1e-12);
        volume *= range;
    }

    let pi_out = config.pi_out;
    let pi_in = (1.0 - pi_out) / m as f64;
    let mut params = MixtureParams {
        rotation: r0.clone(),
        covariance,
        pi_in,
        pi_out,
        volume,
        kappa: 0.0,
        n_clusters: m,
    };
    params.refresh_kappa();
    // For large K the default sigma0 can push kappa above 1: the uniform
    // component then beats the Gaussian peak everywhere and the first
    // cycle labels every observation an outlier. Shrink the initial
    // covariance isotropically until the inlier class can claim points.
    if params.kappa > 1.0 {
        let shrink = (KAPPA0_MAX / params.kappa).powf(1.0 / k as f64);
        params.covariance *= shrink * shrink;
        params.refresh_kappa();
    }
    Ok(params)
}

/// Accumulated sufficient statistics of one E-step pass.
struct EStepAccum {
    /// `xi_m = sum_n alpha_nm`
    xi: Vec<f64>,
    /// `s_m = sum_n alpha_nm x_n`, row-major M×K
    sx: Vec<f64>,
    /// `sum_n (1 - alpha_n,out) x_n x_n^T`, row-major K×K
    txx: Vec<f64>,
    /// Eq.-7 log-likelihood of the observations under current params.
    ll: f64,
}

impl EStepAccum {
    fn new(m: usize, k: usize) -> Self {
        EStepAccum {
            xi: vec![0.0; m],
            sx: vec![0.0; m * k],
            txx: vec![0.0; k * k],
            ll: 0.0,
        }
    }

    fn merge(mut self, other: EStepAccum) -> EStepAccum {
        for (a, b) in self.xi.iter_mut().zip(other.xi) {
            *a += b;
        }
        for (a, b) in self.sx.iter_mut().zip(other.sx) {
            *a += b;
        }
        for (a, b) in self.txx.iter_mut().zip(other.txx) {
            *a += b;
        }
        self.ll += other.ll;
        self
    }
}

/// Whitening transform `L^{-1}` rows applied to points: `w = L^{-1} p`.
fn whiten(points: &DMatrix<f64>, chol_l: &DMatrix<f64>) -> Vec<f64> {
    let (n, k) = (points.nrows(), points.ncols());
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        // forward substitution
        for r in 0..k {
            let mut acc = points[(i, r)];
            for c in 0..r {
                acc -= chol_l[(r, c)] * out[i * k + c];
            }
            out[i * k + r] = acc / chol_l[(r, r)];
        }
    }
    out
}

/// Core E-step: streamed posteriors with fixed-size chunking so parallel
/// and sequential runs sum in the same order.
fn e_step_core(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    params: &MixtureParams,
    want_dense: bool,
    probe: Option<&[usize]>,
) -> Result<(
    EStepAccum,
    Vec<ObservationSummary>,
    Option<DMatrix<f64>>,
    Vec<f64>,
)> {
    let (n, k) = (x.nrows(), x.ncols());
    let m = y.nrows();
    if y.ncols() != k || params.k() != k || params.n_clusters != m {
        return Err(Error::DimensionMismatch(
            "E-step inputs disagree on K or M".into(),
        ));
    }

    let eig = params.covariance.clone().symmetric_eigen();
    let (mut lmin, mut lmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &l in eig.eigenvalues.iter() {
        lmin = lmin.min(l);
        lmax = lmax.max(l);
    }
    if lmin <= 0.0 || lmax / lmin > 1e12 {
        return Err(Error::SingularCovariance);
    }
    let chol = params
        .covariance
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance)?;
    let chol_l = chol.l();

    // rotated, whitened cluster means and whitened observations
    let rotated = y * params.rotation.transpose();
    let yw = whiten(&rotated, &chol_l);
    let xw = whiten(x, &chol_l);

    let ln_kappa = if params.kappa > 0.0 {
        Some(params.kappa.ln())
    } else {
        None
    };
    let k_f = k as f64;
    let ln_norm = params.pi_in.ln()
        - (k_f / 2.0) * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * params.covariance.determinant().ln();

    const CHUNK: usize = 256;
    let n_chunks = n.div_ceil(CHUNK);
    struct ChunkOut {
        accum: EStepAccum,
        stats: Vec<ObservationSummary>,
        rows: Option<Vec<f64>>, // dense posterior rows, (M+1) per obs
        probes: Vec<f64>,
    }
    let chunks: Vec<ChunkOut> = par::map_indexed(n_chunks, |ci| {
        let start = ci * CHUNK;
        let end = (start + CHUNK).min(n);
        let mut accum = EStepAccum::new(m, k);
        let mut stats = Vec::with_capacity(end - start);
        let mut rows = want_dense.then(|| Vec::with_capacity((end - start) * (m + 1)));
        let mut probes = Vec::new();
        let mut t = vec![0.0f64; m];
        for i in start..end {
            let xi_w = &xw[i * k..(i + 1) * k];
            let mut mx = f64::NEG_INFINITY;
            for (j, tj) in t.iter_mut().enumerate() {
                let yj = &yw[j * k..(j + 1) * k];
                let mut d = 0.0;
                for c in 0..k {
                    let diff = xi_w[c] - yj[c];
                    d += diff * diff;
                }
                *tj = -d;
                if *tj > mx {
                    mx = *tj;
                }
            }
            if let Some(lk) = ln_kappa {
                mx = mx.max(lk);
            }
            let mut denom = 0.0;
            for &tj in t.iter() {
                if tj - mx > -LOG_SKIP {
                    denom += (tj - mx).exp();
                }
            }
            let out_term = ln_kappa
                .map(|lk| if lk - mx > -LOG_SKIP { (lk - mx).exp() } else { 0.0 })
                .unwrap_or(0.0);
            denom += out_term;
            if let Some(p) = probe {
                let tj = t[p[i]];
                probes.push(if tj - mx > -LOG_SKIP {
                    (tj - mx).exp() / denom
                } else {
                    0.0
                });
            }

            let mut best = 0usize;
            let mut best_post = 0.0f64;
            for (j, &tj) in t.iter().enumerate() {
                let alpha = if tj - mx > -LOG_SKIP {
                    (tj - mx).exp() / denom
                } else {
                    0.0
                };
                // prefer the lowest index among numerical ties so hard
                // labels are stable across iterations for duplicate
                // cluster centers
                if alpha > best_post * (1.0 + 1e-12) {
                    best_post = alpha;
                    best = j;
                }
                if alpha > 0.0 {
                    accum.xi[j] += alpha;
                    for c in 0..k {
                        accum.sx[j * k + c] += alpha * x[(i, c)];
                    }
                }
                if let Some(r) = rows.as_mut() {
                    r.push(alpha);
                }
            }
            let out_post = out_term / denom;
            if let Some(r) = rows.as_mut() {
                r.push(out_post);
            }
            let inlier = 1.0 - out_post;
            for r in 0..k {
                for c in 0..k {
                    accum.txx[r * k + c] += inlier * x[(i, r)] * x[(i, c)];
                }
            }
            accum.ll += ln_norm + mx + denom.ln();
            stats.push(ObservationSummary {
                best_cluster: best,
                best_posterior: best_post,
                outlier_posterior: out_post,
                is_outlier: out_post > best_post,
            });
        }
        ChunkOut {
            accum,
            stats,
            rows,
            probes,
        }
    });

    let mut accum = EStepAccum::new(m, k);
    let mut stats = Vec::with_capacity(n);
    let mut dense = want_dense.then(|| DMatrix::zeros(n, m + 1));
    let mut probes = Vec::new();
    let mut row_base = 0usize;
    for chunk in chunks {
        accum = accum.merge(chunk.accum);
        if let (Some(matrix), Some(rows)) = (dense.as_mut(), chunk.rows) {
            for (off, v) in rows.iter().enumerate() {
                matrix[(row_base + off / (m + 1), off % (m + 1))] = *v;
            }
        }
        row_base += chunk.stats.len();
        stats.extend(chunk.stats);
        probes.extend(chunk.probes);
    }
    Ok((accum, stats, dense, probes))
}

/// Posterior probabilities per Eq.-8 conventions; N×(M+1) with the
/// outlier column last. Rows sum to 1.
pub fn e_step(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    params: &MixtureParams,
) -> Result<DMatrix<f64>> {
    let (_, _, dense, _) = e_step_core(x, y, params, true, None)?;
    Ok(dense.expect("dense requested"))
}

/// Weighted-mean observations: `x_bar_m = sum_i alpha_im x_i / xi_m`,
/// `xi_m = sum_i alpha_im`. Clusters with vanishing weight are flagged
/// rather than failing.
pub fn virtual_means(
    x: &DMatrix<f64>,
    posteriors: &DMatrix<f64>,
) -> (DMatrix<f64>, Vec<f64>, Vec<bool>) {
    let (n, k) = (x.nrows(), x.ncols());
    let m = posteriors.ncols() - 1; // outlier column excluded
    assert_eq!(posteriors.nrows(), n);
    let mut means = DMatrix::zeros(m, k);
    let mut xi = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let a = posteriors[(i, j)];
            if a > 0.0 {
                xi[j] += a;
                for c in 0..k {
                    means[(j, c)] += a * x[(i, c)];
                }
            }
        }
    }
    let mut defined = vec![true; m];
    for j in 0..m {
        if xi[j] > 1e-300 {
            for c in 0..k {
                means[(j, c)] /= xi[j];
            }
        } else {
            defined[j] = false;
            for c in 0..k {
                means[(j, c)] = 0.0;
            }
        }
    }
    (means, xi, defined)
}

/// Result of the orthogonal-transform update.
#[derive(Debug, Clone)]
pub struct RotationEstimate {
    pub matrix: DMatrix<f64>,
    /// Cross-covariance rank below K-1: the optimum is not unique.
    pub rank_deficient: bool,
}

/// Closed-form update of `R* = argmin_{R in O(K)} sum_m xi_m
/// ||x_bar_m - R y_m||^2`: SVD of the weighted cross-covariance, no
/// determinant correction since reflections are allowed.
pub fn m_step_rotation(
    xbar: &DMatrix<f64>,
    xi: &[f64],
    y: &DMatrix<f64>,
) -> Result<RotationEstimate> {
    let k = xbar.ncols();
    if y.ncols() != k || y.nrows() != xbar.nrows() || xi.len() != xbar.nrows() {
        return Err(Error::DimensionMismatch(
            "virtual means, weights and clusters disagree".into(),
        ));
    }
    let total: f64 = xi.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroInlierMass);
    }
    let mut g = DMatrix::zeros(k, k);
    for m in 0..xbar.nrows() {
        let w = xi[m];
        if w <= 0.0 {
            continue;
        }
        for r in 0..k {
            for c in 0..k {
                g[(r, c)] += w * xbar[(m, r)] * y[(m, c)];
            }
        }
    }
    let svd = g.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let matrix = u * vt;
    let smax: f64 = svd.singular_values.max();
    let significant = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-12 * smax.max(1e-300))
        .count();
    Ok(RotationEstimate {
        matrix,
        rank_deficient: significant + 1 < k,
    })
}

/// Posterior-weighted residual scatter around the rotated cluster
/// centers, with eigenvalues floored at `sigma_floor^2`.
pub fn m_step_covariance(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    posteriors: &DMatrix<f64>,
    rotation: &DMatrix<f64>,
    sigma_floor: f64,
) -> Result<DMatrix<f64>> {
    let (n, k) = (x.nrows(), x.ncols());
    let m = posteriors.ncols() - 1;
    let rotated = y * rotation.transpose();
    let mut scatter = DMatrix::zeros(k, k);
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..m {
            let a = posteriors[(i, j)];
            if a <= 0.0 {
                continue;
            }
            mass += a;
            for r in 0..k {
                for c in 0..k {
                    scatter[(r, c)] +=
                        a * (x[(i, r)] - rotated[(j, r)]) * (x[(i, c)] - rotated[(j, c)]);
                }
            }
        }
    }
    if mass <= 0.0 {
        return Err(Error::ZeroInlierMass);
    }
    scatter /= mass;
    Ok(floor_covariance(scatter, sigma_floor))
}

fn floor_covariance(mut sigma: DMatrix<f64>, sigma_floor: f64) -> DMatrix<f64> {
    // symmetrize against accumulation round-off
    let k = sigma.nrows();
    for r in 0..k {
        for c in (r + 1)..k {
            let v = 0.5 * (sigma[(r, c)] + sigma[(c, r)]);
            sigma[(r, c)] = v;
            sigma[(c, r)] = v;
        }
    }
    let floor = sigma_floor * sigma_floor;
    let eig = sigma.symmetric_eigen();
    let mut out = DMatrix::zeros(k, k);
    for idx in 0..k {
        let l = eig.eigenvalues[idx].max(floor);
        let v = eig.eigenvectors.column(idx);
        for r in 0..k {
            for c in 0..k {
                out[(r, c)] += l * v[r] * v[c];
            }
        }
    }
    out
}

/// Run the full EM loop on two reduced coordinate sets.
///
/// Stops when the relative log-likelihood change drops below `tol`, when
/// the hard correspondence labels repeat (if enabled), or at `max_iter`.
/// A decreasing likelihood is recorded as a warning and stops the loop.
pub fn run_em(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r0: &DMatrix<f64>,
    config: &EmConfig,
) -> Result<RegistrationResult> {
    let mut params = init_params(x, y, r0, config)?;
    let m = y.nrows();
    let k = x.ncols();
    let sigma_floor = config
        .sigma_floor
        .unwrap_or_else(|| 1e-6 * bbox_diagonal(x).max(1e-300));
    let want_dense = x.nrows() * (m + 1) <= config.max_posterior_cells;

    let mut trace: Vec<f64> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut prev_labels: Option<Vec<(usize, bool)>> = None;
    let mut warned_rank = false;

    // cluster second moment, fixed across iterations
    let mut yyt = DMatrix::zeros(k, k);

    let mut final_state = None;
    let mut iterations = 0;
    let mut prev_params = params.clone();
    for iter in 1..=config.max_iter {
        let probe_idx: Option<Vec<usize>> = prev_labels
            .as_ref()
            .map(|l| l.iter().map(|&(b, _)| b).collect());
        let (accum, stats, dense, probes) =
            e_step_core(x, y, &params, want_dense, probe_idx.as_deref())?;
        let ll = accum.ll;
        let labels: Vec<(usize, bool)> = stats
            .iter()
            .map(|s| (s.best_cluster, s.is_outlier))
            .collect();
        let mut stop = false;
        if let Some(&prev_ll) = trace.last() {
            if ll < prev_ll - 1e-9 {
                // the update overshot; revert to the previous state and
                // stop, keeping the recorded trace nondecreasing
                warnings.push(format!(
                    "log-likelihood decreased at iteration {iter}: {prev_ll} -> {ll}; \
                     reverted to the previous parameters"
                ));
                params = prev_params;
                break;
            }
            if (ll - prev_ll).abs() <= config.tol * prev_ll.abs().max(1.0) {
                stop = true;
            }
        }
        if config.stop_on_stable_labels {
            if let Some(prev) = prev_labels.as_ref() {
                // labels count as stable when the outlier split repeats
                // and each previous best cluster keeps a posterior within
                // a small relative margin of the new best; clusters with
                // duplicate centers would otherwise swap labels forever
                // on rounding noise
                let stable = prev
                    .iter()
                    .zip(stats.iter().zip(probes.iter()))
                    .all(|(&(pb, po), (s, &pa))| {
                        po == s.is_outlier
                            && (s.is_outlier
                                || pb == s.best_cluster
                                || pa >= s.best_posterior * (1.0 - STABILITY_RTOL))
                    });
                if stable {
                    stop = true;
                }
            }
        }
        trace.push(ll);
        iterations = iter;
        final_state = Some((accum, stats, dense));
        if stop || iter == config.max_iter {
            break;
        }
        prev_labels = Some(labels);
        prev_params = params.clone();

        // M-step from the accumulated statistics
        let (accum, _, _) = final_state.as_ref().unwrap();
        let total_mass: f64 = accum.xi.iter().sum();
        if total_mass <= 0.0 {
            return Err(Error::ZeroInlierMass);
        }
        let mut xbar = DMatrix::zeros(m, k);
        for j in 0..m {
            if accum.xi[j] > 1e-300 {
                for c in 0..k {
                    xbar[(j, c)] = accum.sx[j * k + c] / accum.xi[j];
                }
            }
        }
        let estimate = m_step_rotation(&xbar, &accum.xi, y)?;
        if estimate.rank_deficient && !warned_rank {
            warnings.push("cross-covariance rank deficient; rotation not unique".into());
            warned_rank = true;
        }
        params.rotation = estimate.matrix;

        // covariance from the same pass:
        //   scatter = T - G R^T - R G^T + R H R^T, with
        //   G = sum_m xi_m xbar_m y_m^T, H = sum_m xi_m y_m y_m^T
        let mut g: DMatrix<f64> = DMatrix::zeros(k, k);
        for j in 0..m {
            for r in 0..k {
                for c in 0..k {
                    g[(r, c)] += accum.sx[j * k + r] * y[(j, c)];
                }
            }
        }
        yyt.fill(0.0);
        for j in 0..m {
            let w = accum.xi[j];
            if w <= 0.0 {
                continue;
            }
            for r in 0..k {
                for c in 0..k {
                    yyt[(r, c)] += w * y[(j, r)] * y[(j, c)];
                }
            }
        }
        let t = DMatrix::from_fn(k, k, |r, c| accum.txx[r * k + c]);
        let grt: DMatrix<f64> = &g * params.rotation.transpose();
        let rhr: DMatrix<f64> = &params.rotation * &yyt * params.rotation.transpose();
        let scatter = (t - &grt - grt.transpose() + rhr) / total_mass;
        params.covariance = floor_covariance(scatter, sigma_floor);
        params.refresh_kappa();
    }

    let (accum, stats, dense) = final_state.expect("at least one iteration");
    let (xbar, xi, defined) = {
        let mut xbar = DMatrix::zeros(m, k);
        let mut defined = vec![true; m];
        for j in 0..m {
            if accum.xi[j] > 1e-300 {
                for c in 0..k {
                    xbar[(j, c)] = accum.sx[j * k + c] / accum.xi[j];
                }
            } else {
                defined[j] = false;
            }
        }
        (xbar, accum.xi.clone(), defined)
    };
    let correspondence: Vec<ClusterMatch> = (0..m)
        .map(|j| ClusterMatch {
            cluster: j,
            virtual_mean: xbar.row(j).transpose(),
            weight: xi[j],
            matched: defined[j] && xi[j] >= config.match_threshold,
            defined: defined[j],
        })
        .collect();

    Ok(RegistrationResult {
        params,
        observations: stats,
        posteriors: dense,
        virtual_means: xbar,
        weights: xi,
        correspondence,
        iterations,
        log_likelihood: trace,
        warnings,
    })
}
