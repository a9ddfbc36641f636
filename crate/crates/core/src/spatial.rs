//! Supervised spatial filters: the multiple-time-window LDA beamformer
//! (MTWLB), xDAWN, and common spatial patterns (CSP).
//!
//! Every estimator returns a [`SpatialFilterBank`] whose columns are channel
//! weight vectors `w`; [`apply_filters`] projects an epoch as `Ψ = wᵀX`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, covariance, gen_eig, shrink_covariance, SymMatrix};
use crate::preprocess::{difference_erp, EpochSet, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterMethod {
    #[serde(rename = "MTWLB")]
    Mtwlb,
    #[serde(rename = "xDAWN")]
    Xdawn,
    #[serde(rename = "CSP")]
    Csp,
}

impl FilterMethod {
    pub const ALL: [FilterMethod; 3] = [FilterMethod::Mtwlb, FilterMethod::Xdawn, FilterMethod::Csp];

    pub fn name(self) -> &'static str {
        match self {
            FilterMethod::Mtwlb => "MTWLB",
            FilterMethod::Xdawn => "xDAWN",
            FilterMethod::Csp => "CSP",
        }
    }
}

impl std::fmt::Display for FilterMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-filter metadata: the criterion value (beamformer output variance `J`,
/// xDAWN SSNR eigenvalue, or CSP eigenvalue) and, for MTWLB, the time window
/// in seconds relative to onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMeta {
    pub score: f64,
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilterBank {
    pub method: FilterMethod,
    /// `N_c × N_f` filter matrix `w`.
    pub filters: DMatrix<f64>,
    /// `N_c × N_f` forward patterns, one per filter.
    pub patterns: DMatrix<f64>,
    pub meta: Vec<FilterMeta>,
}

impl SpatialFilterBank {
    pub fn n_channels(&self) -> usize {
        self.filters.nrows()
    }

    pub fn n_filters(&self) -> usize {
        self.filters.ncols()
    }

    pub fn filter(&self, j: usize) -> DVector<f64> {
        self.filters.column(j).into_owned()
    }
}

/// `Ψ = wᵀX` for one `N_c × N_t` epoch.
pub fn apply_filters(bank: &SpatialFilterBank, epoch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if epoch.nrows() != bank.n_channels() {
        return Err(Error::shape(
            format!("{} channels", bank.n_channels()),
            format!("{} channels", epoch.nrows()),
        ));
    }
    Ok(bank.filters.tr_mul(epoch))
}

/// Forward patterns `aⱼ = Σwⱼ / (wⱼᵀΣwⱼ)`.
pub fn spatial_patterns(filters: &DMatrix<f64>, sigma: &SymMatrix) -> Result<DMatrix<f64>> {
    if filters.nrows() != sigma.dim() {
        return Err(Error::shape(
            format!("{} channels", sigma.dim()),
            format!("{} channels", filters.nrows()),
        ));
    }
    let mut out = sigma.matrix() * filters;
    for j in 0..filters.ncols() {
        let denom = filters.column(j).dot(&out.column(j));
        if !(denom > 0.0) {
            return Err(Error::Numeric(format!(
                "filter {j} has non-positive variance wᵀΣw = {denom:e}"
            )));
        }
        out.column_mut(j).unscale_mut(denom);
    }
    Ok(out)
}

/// Flips filter/pattern pairs so each pattern's largest-magnitude entry is
/// positive.
fn orient_by_pattern(filters: &mut DMatrix<f64>, patterns: &mut DMatrix<f64>) {
    for j in 0..filters.ncols() {
        let pivot = patterns
            .column(j)
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            filters.column_mut(j).neg_mut();
            patterns.column_mut(j).neg_mut();
        }
    }
}

// ---------------------------------------------------------------------------
// LDA beamformer / MTWLB
// ---------------------------------------------------------------------------

/// Closed-form LDA beamformer: minimizes `wᵀΣw` subject to `wᵀp = 1`,
/// `w = Σ⁻¹p / (pᵀΣ⁻¹p)`. Returns `(w, J)` with `J = wᵀΣw`.
pub fn lda_beamformer(sigma: &SymMatrix, p: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if p.len() != sigma.dim() {
        return Err(Error::shape(format!("pattern of length {}", sigma.dim()), p.len()));
    }
    let sinv_p = sigma.solve(p)?;
    let denom = p.dot(&sinv_p);
    if !(denom > 0.0) {
        return Err(Error::Numeric("pattern has zero Mahalanobis norm".into()));
    }
    let w = sinv_p / denom;
    let j = sigma.quad(&w);
    Ok((w, j))
}

/// How concatenated window data is normalized before the covariance is
/// estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowNormalization {
    /// Center and scale each channel to unit variance; the beamformer is
    /// solved in the normalized space and mapped back to raw channel gains.
    #[default]
    PerChannel,
    /// Center and scale each time sample across channels.
    PerSample,
    /// Center channels only.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MtwlbOptions {
    pub normalization: WindowNormalization,
}

/// `M` contiguous, equal-length (±1 sample) partitions of `0..n_t`.
pub fn window_bounds(n_t: usize, m: usize) -> Result<Vec<(usize, usize)>> {
    if m == 0 || m > n_t {
        return Err(Error::Parameter(format!("cannot split {n_t} samples into {m} windows")));
    }
    let bounds: Vec<(usize, usize)> = (0..m).map(|i| (i * n_t / m, (i + 1) * n_t / m)).collect();
    if bounds.iter().any(|(a, b)| b - a < 2) {
        return Err(Error::Parameter(format!(
            "{m} windows over {n_t} samples leave fewer than 2 samples per window"
        )));
    }
    Ok(bounds)
}

/// MTWLB with default options.
pub fn fit_mtwlb(epochs: &EpochSet, m: usize) -> Result<SpatialFilterBank> {
    fit_mtwlb_with(epochs, m, &MtwlbOptions::default())
}

/// One beamformer per time window. Within each window the shrunk covariance
/// of the concatenated epochs is paired with every difference-ERP column of
/// that window, and the filter with the smallest output variance `J` is
/// kept along with its pattern column.
pub fn fit_mtwlb_with(epochs: &EpochSet, m: usize, opts: &MtwlbOptions) -> Result<SpatialFilterBank> {
    epochs.require_both_classes()?;
    let n_c = epochs.n_channels();
    let n_t = epochs.n_times();
    let windows = window_bounds(n_t, m)?;
    let diff = difference_erp(epochs)?;

    let mut filters = DMatrix::zeros(n_c, m);
    let mut patterns = DMatrix::zeros(n_c, m);
    let mut meta = Vec::with_capacity(m);
    for (k, &(a, b)) in windows.iter().enumerate() {
        let len = b - a;
        let mut concat = DMatrix::zeros(n_c, len * epochs.len());
        for (i, ep) in epochs.epochs.iter().enumerate() {
            concat.columns_mut(i * len, len).copy_from(&ep.columns(a, len));
        }
        let (sigma, gain) = window_covariance(concat, opts.normalization)?;
        let sigma = shrink_covariance(&sigma, len * epochs.len()).matrix;
        let chol = sigma
            .matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric(format!("window {k} covariance is singular after shrinkage")))?;

        let mut best: Option<(f64, DVector<f64>, usize)> = None;
        for t in a..b {
            let p_raw = diff.column(t).into_owned();
            let p = p_raw.component_div(&gain);
            let sinv_p = chol.solve(&p);
            let denom = p.dot(&sinv_p);
            if !(denom > 0.0) {
                continue;
            }
            let w = sinv_p / denom;
            let j = sigma.quad(&w);
            if best.as_ref().is_none_or(|(bj, _, _)| j < *bj) {
                best = Some((j, w, t));
            }
        }
        let (j, w_norm, t) = best.ok_or_else(|| {
            Error::Numeric(format!("window {k} has an identically zero difference ERP"))
        })?;
        filters.set_column(k, &w_norm.component_div(&gain));
        patterns.set_column(k, &diff.column(t));
        meta.push(FilterMeta {
            score: j,
            window: Some((
                epochs.window.0 + a as f64 / epochs.rate,
                epochs.window.0 + b as f64 / epochs.rate,
            )),
        });
    }
    Ok(SpatialFilterBank {
        method: FilterMethod::Mtwlb,
        filters,
        patterns,
        meta,
    })
}

/// Covariance of window data under the chosen normalization, plus the
/// per-channel gains that map normalized patterns back (`p_norm = p / gain`).
fn window_covariance(mut data: DMatrix<f64>, norm: WindowNormalization) -> Result<(SymMatrix, DVector<f64>)> {
    let n_c = data.nrows();
    let mut gain = DVector::from_element(n_c, 1.0);
    match norm {
        WindowNormalization::PerChannel => {
            for (c, mut row) in data.row_iter_mut().enumerate() {
                let mean = row.mean();
                row.add_scalar_mut(-mean);
                let sd = (row.norm_squared() / (row.len() as f64 - 1.0).max(1.0)).sqrt();
                if sd > 0.0 {
                    row.unscale_mut(sd);
                    gain[c] = sd;
                }
            }
        }
        WindowNormalization::PerSample => {
            for mut col in data.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
                let sd = (col.norm_squared() / (col.len() as f64 - 1.0).max(1.0)).sqrt();
                if sd > 0.0 {
                    col.unscale_mut(sd);
                }
            }
        }
        WindowNormalization::None => {}
    }
    Ok((covariance(&data, true)?, gain))
}

// ---------------------------------------------------------------------------
// xDAWN
// ---------------------------------------------------------------------------

/// Toeplitz design `D` (`len × n_e`): column 0 has ones at the target onsets
/// and column `j` is column 0 shifted down by `j` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzDesign {
    pub len: usize,
    pub n_e: usize,
    pub onsets: Vec<usize>,
}

impl ToeplitzDesign {
    pub fn new(len: usize, n_e: usize, mut onsets: Vec<usize>) -> Result<Self> {
        if n_e == 0 || n_e > len {
            return Err(Error::Parameter(format!("ERP length {n_e} must be in 1..={len}")));
        }
        if let Some(o) = onsets.iter().find(|&&o| o >= len) {
            return Err(Error::Parameter(format!("onset {o} outside a {len}-sample segment")));
        }
        onsets.sort_unstable();
        onsets.dedup();
        Ok(ToeplitzDesign { len, n_e, onsets })
    }

    /// Materialized zero/one matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.len, self.n_e);
        for &o in &self.onsets {
            for j in 0..self.n_e.min(self.len - o) {
                d[(o + j, j)] = 1.0;
            }
        }
        d
    }

    /// `DᵀD` without materializing `D`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n_e, self.n_e);
        for &a in &self.onsets {
            for &b in &self.onsets {
                // rows t = a + i = b + j
                for i in 0..self.n_e {
                    let t = a + i;
                    if t >= self.len || t < b {
                        continue;
                    }
                    let j = t - b;
                    if j < self.n_e {
                        g[(i, j)] += 1.0;
                    }
                }
            }
        }
        g
    }

    /// `Dᵀ·Xᵀ` for channel-major `x` (`N_c × len`), giving `n_e × N_c`.
    pub fn transpose_times(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_e, x.nrows());
        for &o in &self.onsets {
            let span = self.n_e.min(self.len - o);
            let block = x.columns(o, span).transpose();
            let mut rows = out.rows_mut(0, span);
            rows += &block;
        }
        out
    }
}

/// A contiguous stretch of channel-major data with the target onsets it
/// contains.
#[derive(Debug, Clone)]
pub struct Segment {
    pub data: DMatrix<f64>,
    pub onsets: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XdawnOptions {
    /// Shrink the data scatter `XᵀX` before the generalized eigenproblem.
    pub shrink: bool,
}

impl Default for XdawnOptions {
    fn default() -> Self {
        XdawnOptions { shrink: true }
    }
}

/// Rebuilds continuous stretches from overlapping epochs using their onset
/// provenance. Epochs are grouped by task and merged when their sample
/// ranges overlap or touch. When onsets collide (same task and onset twice)
/// every epoch becomes its own segment instead.
pub fn reassemble_segments(epochs: &EpochSet) -> Vec<Segment> {
    let n_t = epochs.n_times();
    let mut order: Vec<usize> = (0..epochs.len()).collect();
    order.sort_by_key(|&i| (epochs.provenance[i].task, epochs.provenance[i].onset));
    let collides = order.windows(2).any(|w| {
        let (a, b) = (epochs.provenance[w[0]], epochs.provenance[w[1]]);
        a.task == b.task && a.onset == b.onset
    });
    if collides {
        return isolated_segments(epochs);
    }
    let mut segments = Vec::new();
    let mut run: Vec<usize> = Vec::new();
    let flush = |run: &mut Vec<usize>, segments: &mut Vec<Segment>| {
        if run.is_empty() {
            return;
        }
        let start = epochs.provenance[run[0]].onset;
        let end = run.iter().map(|&i| epochs.provenance[i].onset + n_t).max().unwrap();
        let mut data = DMatrix::zeros(epochs.n_channels(), end - start);
        let mut onsets = Vec::new();
        for &i in run.iter() {
            let off = epochs.provenance[i].onset - start;
            data.columns_mut(off, n_t).copy_from(&epochs.epochs[i]);
            if epochs.labels[i] == Label::Target {
                onsets.push(off);
            }
        }
        segments.push(Segment { data, onsets });
        run.clear();
    };
    let mut run_end = 0usize;
    let mut run_task = None;
    for &i in &order {
        let p = epochs.provenance[i];
        if run_task != Some(p.task) || p.onset > run_end {
            flush(&mut run, &mut segments);
            run_task = Some(p.task);
            run_end = p.onset + n_t;
        } else {
            run_end = run_end.max(p.onset + n_t);
        }
        run.push(i);
    }
    flush(&mut run, &mut segments);
    segments
}

/// Each epoch as its own segment, targets with an onset at sample 0.
pub fn isolated_segments(epochs: &EpochSet) -> Vec<Segment> {
    epochs
        .epochs
        .iter()
        .zip(&epochs.labels)
        .map(|(ep, l)| Segment {
            data: ep.clone(),
            onsets: if l.is_target() { vec![0] } else { vec![] },
        })
        .collect()
}

/// xDAWN on epochs: reassembles continuous segments, then calls
/// [`fit_xdawn_segments`] with `N_e = N_t`.
pub fn fit_xdawn(epochs: &EpochSet, n_f: usize) -> Result<SpatialFilterBank> {
    let segments = reassemble_segments(epochs);
    fit_xdawn_segments(&segments, epochs.n_times(), n_f, &XdawnOptions::default())
}

/// Least-squares ERP estimate `Â = (DᵀD)⁻¹DᵀX` followed by the generalized
/// eigenproblem `ÂᵀDᵀDÂ·w = λ·XᵀX·w`; the `n_f` leading eigenvectors are the
/// filters and their eigenvalues the scores.
pub fn fit_xdawn_segments(
    segments: &[Segment],
    n_e: usize,
    n_f: usize,
    opts: &XdawnOptions,
) -> Result<SpatialFilterBank> {
    let n_c = segments
        .first()
        .map(|s| s.data.nrows())
        .ok_or_else(|| Error::EmptySet("xDAWN needs at least one segment".into()))?;
    if n_f == 0 || n_f > n_c {
        return Err(Error::Parameter(format!("xDAWN needs 1 ≤ N_f ≤ {n_c}, got {n_f}")));
    }
    let mut gram = DMatrix::zeros(n_e, n_e);
    let mut dtx = DMatrix::zeros(n_e, n_c);
    let mut scatter = DMatrix::zeros(n_c, n_c);
    let mut total = 0usize;
    let mut n_targets = 0usize;
    for seg in segments {
        if seg.data.nrows() != n_c {
            return Err(Error::shape(format!("{n_c} channels"), seg.data.nrows()));
        }
        let len = seg.data.ncols();
        total += len;
        scatter += &seg.data * seg.data.transpose();
        if seg.onsets.is_empty() {
            continue;
        }
        n_targets += seg.onsets.len();
        if n_e > len {
            return Err(Error::Parameter(format!("ERP length {n_e} exceeds a {len}-sample segment")));
        }
        let design = ToeplitzDesign::new(len, n_e, seg.onsets.clone())?;
        gram += design.gram();
        dtx += design.transpose_times(&seg.data);
    }
    if n_targets == 0 {
        return Err(Error::ClassMissing("target"));
    }
    let a_hat = solve_design(gram.clone(), &dtx)?;
    // ÂᵀDᵀDÂ
    let signal = SymMatrix::symmetrize(a_hat.transpose() * &gram * &a_hat);
    let scatter = SymMatrix::symmetrize(scatter);
    let noise = if opts.shrink {
        shrink_covariance(&scatter, total).matrix
    } else {
        scatter.clone()
    };
    let eig = gen_eig(&signal, &noise)?;
    let mut filters = eig.vectors.columns(0, n_f).into_owned();
    let sigma = SymMatrix::symmetrize(scatter.into_inner() / (total as f64 - 1.0).max(1.0));
    let mut patterns = spatial_patterns(&filters, &sigma)?;
    orient_by_pattern(&mut filters, &mut patterns);
    let meta = (0..n_f)
        .map(|j| FilterMeta { score: eig.values[j], window: None })
        .collect();
    Ok(SpatialFilterBank {
        method: FilterMethod::Xdawn,
        filters,
        patterns,
        meta,
    })
}

fn solve_design(gram: DMatrix<f64>, dtx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(dtx));
    }
    log::warn!("Toeplitz design is rank deficient; adding a ridge to DᵀD");
    let n = gram.nrows();
    let ridge = 1e-10 * (gram.trace() / n as f64).max(1.0);
    let reg = gram + DMatrix::identity(n, n) * ridge;
    reg.cholesky()
        .map(|c| c.solve(dtx))
        .ok_or_else(|| Error::Numeric("Toeplitz design Gram matrix is singular".into()))
}

// ---------------------------------------------------------------------------
// CSP
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CspOptions {
    /// Shrink `Σ₁ + Σ₀` before whitening.
    pub shrink: bool,
}

impl Default for CspOptions {
    fn default() -> Self {
        CspOptions { shrink: true }
    }
}

/// Trace-normalized class covariance `mean(XXᵀ / tr(XXᵀ))`.
pub fn class_covariance(epochs: &EpochSet, class: Label) -> Result<SymMatrix> {
    let n_c = epochs.n_channels();
    let mut sum = DMatrix::zeros(n_c, n_c);
    let mut count = 0usize;
    for (ep, _) in epochs.epochs.iter().zip(&epochs.labels).filter(|(_, &l)| l == class) {
        let xxt = ep * ep.transpose();
        let tr = xxt.trace();
        if tr > 0.0 {
            sum += xxt / tr;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::ClassMissing(class.as_str()));
    }
    Ok(SymMatrix::symmetrize(sum / count as f64))
}

pub fn fit_csp(epochs: &EpochSet, pairs: usize) -> Result<SpatialFilterBank> {
    fit_csp_with(epochs, pairs, &CspOptions::default())
}

pub fn fit_csp_with(epochs: &EpochSet, pairs: usize, opts: &CspOptions) -> Result<SpatialFilterBank> {
    epochs.require_both_classes()?;
    let s1 = class_covariance(epochs, Label::Target)?;
    let s0 = class_covariance(epochs, Label::Standard)?;
    csp_from_covariances(&s1, &s0, pairs, epochs.len(), opts)
}

/// Solves `Σ₁·w = λ·(Σ₁ + Σ₀)·w` and keeps the `pairs` largest- and `pairs`
/// smallest-eigenvalue filters, in descending eigenvalue order.
pub fn csp_from_covariances(
    s1: &SymMatrix,
    s0: &SymMatrix,
    pairs: usize,
    samples: usize,
    opts: &CspOptions,
) -> Result<SpatialFilterBank> {
    let n_c = s1.dim();
    if pairs == 0 || 2 * pairs > n_c {
        return Err(Error::Parameter(format!("CSP needs 1 ≤ pairs ≤ {}, got {pairs}", n_c / 2)));
    }
    let total = SymMatrix::symmetrize(s1.matrix() + s0.matrix());
    let denom = if opts.shrink {
        shrink_covariance(&total, samples).matrix
    } else {
        total.clone()
    };
    let eig = gen_eig(s1, &denom)?;
    let picks: Vec<usize> = (0..pairs).chain(n_c - pairs..n_c).collect();
    let mut filters = eig.vectors.select_columns(picks.iter());
    // the regularized denominator keeps patterns defined when CAR leaves
    // the channel covariance rank deficient
    let mut patterns = spatial_patterns(&filters, &denom)?;
    orient_by_pattern(&mut filters, &mut patterns);
    let meta = picks
        .iter()
        .map(|&j| FilterMeta { score: eig.values[j], window: None })
        .collect();
    Ok(SpatialFilterBank {
        method: FilterMethod::Csp,
        filters,
        patterns,
        meta,
    })
}

/// Fits `method` with its size hyperparameter: windows for MTWLB, filters
/// for xDAWN, and filter *count* `n_f = 2·pairs` for CSP.
pub fn fit_bank(method: FilterMethod, epochs: &EpochSet, n_f: usize) -> Result<SpatialFilterBank> {
    match method {
        FilterMethod::Mtwlb => fit_mtwlb(epochs, n_f),
        FilterMethod::Xdawn => fit_xdawn(epochs, n_f),
        FilterMethod::Csp => {
            if n_f % 2 != 0 {
                return Err(Error::Parameter(format!("CSP filter count {n_f} must be even")));
            }
            fit_csp(epochs, n_f / 2)
        }
    }
}

/// `|cos|` between matching filter columns.
pub fn filter_cosines(a: &SpatialFilterBank, b: &SpatialFilterBank) -> Vec<f64> {
    (0..a.n_filters().min(b.n_filters()))
        .map(|j| linalg::abs_cosine(&a.filter(j), &b.filter(j)))
        .collect()
}
