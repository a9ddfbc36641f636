//! Pipeline composition and evaluation: AUC, block split, stratified k-fold
//! cross validation, seeded random hyperparameter search, one-way ANOVA.
//!
//! Every stochastic choice is derived from `(master_seed, stream)` so that
//! results do not depend on how candidates and folds are scheduled.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::classifiers::{fit_classifier, fit_lda, fit_lr, BlrSystem, ClassifierHyper, ClassifierKind, LinearModel};
use crate::error::{Error, Result};
use crate::features::{fit_series_pca, transform_features, SeriesPcaModel};
use crate::par;
use crate::preprocess::EpochSet;
use crate::spatial::{apply_filters, fit_bank, FilterMethod, SpatialFilterBank};

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} labels", scores.len()), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    let n1 = labels.iter().filter(|&&t| t).count();
    let n0 = labels.len() - n1;
    if n1 == 0 {
        return Err(Error::ClassMissing("target"));
    }
    if n0 == 0 {
        return Err(Error::ClassMissing("standard"));
    }
    Ok((n1, n0))
}

/// Indices sorted by ascending score, with the `[start, end)` ranges of tied
/// runs.
fn tie_groups(scores: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        groups.push((start, end));
        start = end;
    }
    (order, groups)
}

/// Mann–Whitney AUC with midranks for ties: the probability that a random
/// target outscores a random standard, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n1, n0) = class_counts(scores, labels)?;
    let (order, groups) = tie_groups(scores);
    let mut rank_sum = 0.0;
    for (start, end) in groups {
        // 1-based ranks start+1..=end share their mean
        let midrank = (start + end + 1) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += midrank * positives as f64;
    }
    let n1f = n1 as f64;
    Ok((rank_sum - n1f * (n1f + 1.0) / 2.0) / (n1f * n0 as f64))
}

/// ROC curve as `(false positive rate, true positive rate)` points from
/// `(0, 0)` to `(1, 1)`, one point per distinct threshold.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (n1, n0) = class_counts(scores, labels)?;
    let (order, groups) = tie_groups(scores);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(start, end) in groups.iter().rev() {
        for &i in &order[start..end] {
            if labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n0 as f64, tp as f64 / n1 as f64));
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`]; equals [`auc`].
pub fn auc_trapezoid(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let points = roc_curve(scores, labels)?;
    Ok(points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

// ---------------------------------------------------------------------------
// Block split
// ---------------------------------------------------------------------------

/// Holds out `test_blocks_per_task` whole blocks from every task, chosen by
/// a seeded shuffle. Epoch order is preserved on both sides.
pub fn block_split(epochs: &EpochSet, test_blocks_per_task: usize, seed: u64) -> Result<(EpochSet, EpochSet)> {
    if test_blocks_per_task == 0 {
        return Err(Error::Parameter("at least one test block per task is required".into()));
    }
    let mut blocks: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for p in &epochs.provenance {
        let list = blocks.entry(p.task).or_default();
        if !list.contains(&p.block) {
            list.push(p.block);
        }
    }
    if blocks.is_empty() {
        return Err(Error::EmptySet("no epochs to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_blocks: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (task, mut list) in blocks {
        if list.len() < test_blocks_per_task {
            return Err(Error::Parameter(format!(
                "task {task} has {} blocks, fewer than the {test_blocks_per_task} requested for testing",
                list.len()
            )));
        }
        list.sort_unstable();
        list.shuffle(&mut rng);
        list.truncate(test_blocks_per_task);
        test_blocks.insert(task, list);
    }
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..epochs.len()).partition(|&i| test_blocks[&epochs.provenance[i].task].contains(&epochs.provenance[i].block));
    Ok((epochs.subset(&train), epochs.subset(&test)))
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

/// Filter × classifier combination. `filter = None` classifies PCA features
/// of the raw channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PipelineKind {
    pub filter: Option<FilterMethod>,
    pub classifier: ClassifierKind,
}

impl PipelineKind {
    pub const NO_FILTER: &'static str = "NONE";

    pub fn new(filter: Option<FilterMethod>, classifier: ClassifierKind) -> Self {
        PipelineKind { filter, classifier }
    }

    /// All twelve combinations, filters outermost.
    pub fn grid() -> Vec<PipelineKind> {
        let filters = FilterMethod::ALL.iter().map(|&f| Some(f)).chain(std::iter::once(None));
        filters
            .flat_map(|f| ClassifierKind::ALL.iter().map(move |&c| PipelineKind::new(f, c)))
            .collect()
    }

    pub fn filter_name(&self) -> &'static str {
        self.filter.map_or(Self::NO_FILTER, FilterMethod::name)
    }

    pub fn name(&self) -> String {
        format!("{}+{}", self.filter_name(), self.classifier)
    }
}

impl std::fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("unknown pipeline {s:?}, expected FILTER+CLASSIFIER"));
        let (f, c) = s.split_once('+').ok_or_else(bad)?;
        let filter = match f.trim().to_ascii_uppercase().as_str() {
            "NONE" => None,
            "MTWLB" => Some(FilterMethod::Mtwlb),
            "XDAWN" => Some(FilterMethod::Xdawn),
            "CSP" => Some(FilterMethod::Csp),
            _ => return Err(bad()),
        };
        let classifier = match c.trim().to_ascii_uppercase().as_str() {
            "LDA" => ClassifierKind::Lda,
            "BLR" => ClassifierKind::Blr,
            "LR" => ClassifierKind::Lr,
            _ => return Err(bad()),
        };
        Ok(PipelineKind { filter, classifier })
    }
}

impl TryFrom<String> for PipelineKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PipelineKind> for String {
    fn from(k: PipelineKind) -> String {
        k.name()
    }
}

/// Hyperparameters of one pipeline. `n_f` is the number of spatial
/// components: windows for MTWLB, filters for xDAWN, `2·pairs` for CSP.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyper {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_f: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
}

impl Hyper {
    /// Bit-exact identity, used to memoize repeated candidates.
    fn key(&self) -> [u64; 4] {
        let f = |v: Option<f64>| v.map_or(u64::MAX, f64::to_bits);
        [self.n_f.map_or(u64::MAX, |n| n as u64), f(self.alpha), f(self.beta), f(self.lambda)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub hyper: Hyper,
}

impl PipelineSpec {
    /// Checks that exactly the hyperparameters this pipeline uses are set.
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let wants_nf = self.kind.filter.is_some();
        let wants_ab = self.kind.classifier == ClassifierKind::Blr;
        let wants_l = self.kind.classifier == ClassifierKind::Lr;
        let ok = h.n_f.is_some() == wants_nf
            && h.alpha.is_some() == wants_ab
            && h.beta.is_some() == wants_ab
            && h.lambda.is_some() == wants_l;
        if !ok {
            return Err(Error::Parameter(format!("hyperparameters {h:?} do not match pipeline {}", self.kind)));
        }
        if let Some(n) = h.n_f {
            if n == 0 || (self.kind.filter == Some(FilterMethod::Csp) && n % 2 != 0) {
                return Err(Error::Parameter(format!("invalid component count {n} for {}", self.kind)));
            }
        }
        for v in [h.alpha, h.beta, h.lambda].into_iter().flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("regularization parameter {v} must be positive")));
            }
        }
        Ok(())
    }

    fn classifier_hyper(&self) -> ClassifierHyper {
        match self.kind.classifier {
            ClassifierKind::Lda => ClassifierHyper::None,
            ClassifierKind::Blr => ClassifierHyper::Blr {
                alpha: self.hyper.alpha.unwrap_or(1.0),
                beta: self.hyper.beta.unwrap_or(1.0),
            },
            ClassifierKind::Lr => ClassifierHyper::Lr {
                lambda: self.hyper.lambda.unwrap_or(1.0),
            },
        }
    }

    fn components(&self) -> usize {
        self.hyper.n_f.unwrap_or(0)
    }
}

/// Spatial filtering (optional) plus per-series PCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEnd {
    pub bank: Option<SpatialFilterBank>,
    pub pca: SeriesPcaModel,
}

impl FrontEnd {
    pub fn fit(filter: Option<FilterMethod>, n_f: usize, train: &EpochSet) -> Result<FrontEnd> {
        let bank = filter.map(|m| fit_bank(m, train, n_f)).transpose()?;
        let series = project(bank.as_ref(), train)?;
        let pca = fit_series_pca(&series)?;
        Ok(FrontEnd { bank, pca })
    }

    /// Feature rows for every epoch of `epochs`.
    pub fn transform(&self, epochs: &EpochSet) -> Result<DMatrix<f64>> {
        transform_features(&self.pca, &project(self.bank.as_ref(), epochs)?)
    }
}

fn project(bank: Option<&SpatialFilterBank>, epochs: &EpochSet) -> Result<Vec<DMatrix<f64>>> {
    match bank {
        None => Ok(epochs.epochs.clone()),
        Some(b) => epochs.epochs.iter().map(|e| apply_filters(b, e)).collect(),
    }
}

/// A pipeline fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub spec: PipelineSpec,
    pub front: FrontEnd,
    pub model: LinearModel,
}

impl FittedPipeline {
    /// Affine decision values `wᵀx + b`. AUCs are computed on these: they
    /// rank identically to the classifier scores, and for LR they avoid
    /// ties from a saturated logistic.
    pub fn decision(&self, epochs: &EpochSet) -> Result<DVector<f64>> {
        self.model.decision(&self.front.transform(epochs)?)
    }

    /// Classifier scores (probabilities for LR).
    pub fn scores(&self, epochs: &EpochSet) -> Result<DVector<f64>> {
        self.model.scores(&self.front.transform(epochs)?)
    }

    pub fn auc(&self, epochs: &EpochSet) -> Result<f64> {
        auc(self.decision(epochs)?.as_slice(), &epochs.target_mask())
    }
}

/// Fits filters, PCA, and classifier on `train` only.
pub fn fit_pipeline(spec: &PipelineSpec, train: &EpochSet) -> Result<FittedPipeline> {
    spec.validate()?;
    train.require_both_classes()?;
    let front = FrontEnd::fit(spec.kind.filter, spec.components(), train)?;
    let x = front.transform(train)?;
    let model = fit_classifier(spec.kind.classifier, spec.classifier_hyper(), &x, &train.target_mask())?;
    Ok(FittedPipeline { spec: *spec, front, model })
}

// ---------------------------------------------------------------------------
// Cross validation
// ---------------------------------------------------------------------------

const FOLD_STREAM: u64 = 0;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stratified assignment of epochs to `k` folds: each class is shuffled
/// and dealt round-robin, standards continuing where targets stopped so
/// fold sizes differ by at most one. Returns validation indices per fold,
/// ascending.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Parameter(format!("k-fold needs k ≥ 2, got {k}")));
    }
    let mut rng = stream_rng(seed, FOLD_STREAM);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::Parameter(format!(
                "cannot stratify {} {} epochs into {k} folds",
                idx.len(),
                if class { "target" } else { "standard" }
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub mean_auc: f64,
    pub fold_aucs: Vec<f64>,
}

fn cv_result(fold_aucs: Vec<f64>) -> CvResult {
    let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
    CvResult { mean_auc, fold_aucs }
}

/// Stratified k-fold CV of one pipeline; folds derive from `seed`.
pub fn kfold_cv(spec: &PipelineSpec, train: &EpochSet, k: usize, seed: u64) -> Result<CvResult> {
    let folds = stratified_folds(&train.target_mask(), k, seed)?;
    cv_with_folds(spec, train, &folds)
}

/// CV over explicit validation folds; every fit sees only the complement of
/// its fold.
pub fn cv_with_folds(spec: &PipelineSpec, epochs: &EpochSet, folds: &[Vec<usize>]) -> Result<CvResult> {
    spec.validate()?;
    let aucs = folds
        .iter()
        .map(|val| {
            let fitted = fit_pipeline(spec, &epochs.subset(&complement(epochs.len(), val)))?;
            fitted.auc(&epochs.subset(val))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(cv_result(aucs))
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

/// Sampling ranges. Integer ranges are inclusive; the regularization
/// parameters are drawn log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_f: (usize, usize),
    pub csp_pairs: (usize, usize),
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub lambda: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_f: (1, 10),
            csp_pairs: (1, 8),
            alpha: (1e-4, 1e4),
            beta: (1e-4, 1e4),
            lambda: (1e-4, 1e4),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("n_f", self.n_f), ("csp_pairs", self.csp_pairs)] {
            if lo == 0 || lo > hi {
                return Err(Error::Parameter(format!("{name} range {lo}..={hi} is empty or starts at 0")));
            }
        }
        for (name, (lo, hi)) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Parameter(format!("{name} range [{lo}, {hi}] must be positive and ordered")));
            }
        }
        Ok(())
    }

    /// Candidate `index` for `kind`, drawn from its own random stream.
    pub fn sample(&self, kind: PipelineKind, master_seed: u64, index: usize) -> PipelineSpec {
        let mut rng = stream_rng(master_seed, 1 + index as u64);
        // fixed draw order so every kind consumes the stream identically
        let mut draw = |(lo, hi): (usize, usize)| lo + ((rng.random::<f64>() * (hi - lo + 1) as f64) as usize).min(hi - lo);
        let (windows, pairs) = (draw(self.n_f), draw(self.csp_pairs));
        let mut log_uniform = |(lo, hi): (f64, f64)| {
            let u: f64 = rng.random();
            (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
        };
        let alpha = log_uniform(self.alpha);
        let beta = log_uniform(self.beta);
        let lambda = log_uniform(self.lambda);
        let n_f = match kind.filter {
            None => None,
            Some(FilterMethod::Csp) => Some(2 * pairs),
            Some(_) => Some(windows),
        };
        let hyper = Hyper {
            n_f,
            alpha: (kind.classifier == ClassifierKind::Blr).then_some(alpha),
            beta: (kind.classifier == ClassifierKind::Blr).then_some(beta),
            lambda: (kind.classifier == ClassifierKind::Lr).then_some(lambda),
        };
        PipelineSpec { kind, hyper }
    }
}

/// One row of the candidate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub index: usize,
    pub hyper: Hyper,
    /// Fold AUCs, empty when the candidate failed.
    pub fold_aucs: Vec<f64>,
    pub mean_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_index: usize,
    pub best: PipelineSpec,
    pub candidates: Vec<CandidateRow>,
}

impl SearchOutcome {
    pub fn best_row(&self) -> &CandidateRow {
        &self.candidates[self.best_index]
    }
}

/// Training/validation features for one fold and front-end configuration.
struct FoldFeatures {
    train: DMatrix<f64>,
    train_y: Vec<bool>,
    val: DMatrix<f64>,
    val_y: Vec<bool>,
    blr: OnceLock<std::result::Result<BlrSystem, String>>,
}

type FeatureKey = (Option<FilterMethod>, usize, usize);

/// Fold assignment plus a cache of fold features shared by every search run
/// on the same training set, so pipelines that differ only in classifier
/// or regularization reuse filters and PCA.
pub struct CvContext<'a> {
    epochs: &'a EpochSet,
    folds: Vec<Vec<usize>>,
    cache: Mutex<HashMap<FeatureKey, Arc<std::result::Result<FoldFeatures, String>>>>,
}

impl<'a> CvContext<'a> {
    pub fn new(epochs: &'a EpochSet, k: usize, seed: u64) -> Result<Self> {
        let folds = stratified_folds(&epochs.target_mask(), k, seed)?;
        Ok(Self::with_folds(epochs, folds))
    }

    pub fn with_folds(epochs: &'a EpochSet, folds: Vec<Vec<usize>>) -> Self {
        CvContext {
            epochs,
            folds,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    fn compute(&self, (filter, n_f, fold): FeatureKey) -> std::result::Result<FoldFeatures, String> {
        let val_idx = &self.folds[fold];
        let train = self.epochs.subset(&complement(self.epochs.len(), val_idx));
        let val = self.epochs.subset(val_idx);
        let run = || -> Result<FoldFeatures> {
            let front = FrontEnd::fit(filter, n_f, &train)?;
            Ok(FoldFeatures {
                train: front.transform(&train)?,
                train_y: train.target_mask(),
                val: front.transform(&val)?,
                val_y: val.target_mask(),
                blr: OnceLock::new(),
            })
        };
        run().map_err(|e| e.to_string())
    }

    /// Fills the cache for `keys`, computing missing entries in parallel.
    fn prepare(&self, keys: &[FeatureKey]) {
        let missing: Vec<FeatureKey> = {
            let cache = self.cache.lock().unwrap();
            keys.iter().filter(|k| !cache.contains_key(k)).copied().collect()
        };
        let fresh = par::map_range(missing.len(), |i| self.compute(missing[i]));
        let mut cache = self.cache.lock().unwrap();
        for (key, value) in missing.into_iter().zip(fresh) {
            cache.insert(key, Arc::new(value));
        }
    }

    fn features(&self, key: FeatureKey) -> Arc<std::result::Result<FoldFeatures, String>> {
        self.cache.lock().unwrap()[&key].clone()
    }

    fn evaluate(&self, spec: &PipelineSpec) -> std::result::Result<Vec<f64>, String> {
        spec.validate().map_err(|e| e.to_string())?;
        (0..self.folds.len())
            .map(|fold| {
                let entry = self.features((spec.kind.filter, spec.components(), fold));
                let f = entry.as_ref().as_ref().map_err(Clone::clone)?;
                let model = fit_cached(spec, f).map_err(|e| e.to_string())?;
                let z = model.decision(&f.val).map_err(|e| e.to_string())?;
                auc(z.as_slice(), &f.val_y).map_err(|e| e.to_string())
            })
            .collect()
    }
}

fn fit_cached(spec: &PipelineSpec, f: &FoldFeatures) -> Result<LinearModel> {
    match spec.classifier_hyper() {
        ClassifierHyper::None => fit_lda(&f.train, &f.train_y),
        ClassifierHyper::Blr { alpha, beta } => {
            let system = f
                .blr
                .get_or_init(|| BlrSystem::new(&f.train, &f.train_y).map_err(|e| e.to_string()));
            system.as_ref().map_err(|e| Error::Numeric(e.clone()))?.solve(alpha, beta)
        }
        ClassifierHyper::Lr { lambda } => fit_lr(&f.train, &f.train_y, lambda),
    }
}

/// Random search with a fresh [`CvContext`].
pub fn random_search(
    space: &SearchSpace,
    kind: PipelineKind,
    train: &EpochSet,
    budget: usize,
    k: usize,
    master_seed: u64,
) -> Result<SearchOutcome> {
    let ctx = CvContext::new(train, k, master_seed)?;
    random_search_in(&ctx, space, kind, budget, master_seed)
}

/// Samples `budget` candidates, scores each by mean CV AUC over the
/// context's folds, and picks the best. Ties go to the smaller `n_f`, then
/// the smaller candidate index. Candidates with identical hyperparameters
/// are evaluated once.
pub fn random_search_in(
    ctx: &CvContext<'_>,
    space: &SearchSpace,
    kind: PipelineKind,
    budget: usize,
    master_seed: u64,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::Parameter("search budget must be at least 1".into()));
    }
    space.validate()?;
    let specs: Vec<PipelineSpec> = (0..budget).map(|i| space.sample(kind, master_seed, i)).collect();

    let mut unique: Vec<PipelineSpec> = Vec::new();
    let mut slot_of: HashMap<[u64; 4], usize> = HashMap::new();
    let slots: Vec<usize> = specs
        .iter()
        .map(|s| {
            *slot_of.entry(s.hyper.key()).or_insert_with(|| {
                unique.push(*s);
                unique.len() - 1
            })
        })
        .collect();

    let mut keys: Vec<FeatureKey> = unique
        .iter()
        .flat_map(|s| (0..ctx.folds.len()).map(move |f| (s.kind.filter, s.components(), f)))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    ctx.prepare(&keys);

    let results = par::map_range(unique.len(), |u| ctx.evaluate(&unique[u]));

    let candidates: Vec<CandidateRow> = specs
        .iter()
        .enumerate()
        .map(|(index, spec)| match &results[slots[index]] {
            Ok(aucs) => CandidateRow {
                index,
                hyper: spec.hyper,
                mean_auc: Some(cv_result(aucs.clone()).mean_auc),
                fold_aucs: aucs.clone(),
                error: None,
            },
            Err(e) => CandidateRow {
                index,
                hyper: spec.hyper,
                fold_aucs: vec![],
                mean_auc: None,
                error: Some(e.clone()),
            },
        })
        .collect();

    let best_index = candidates
        .iter()
        .filter_map(|c| c.mean_auc.map(|m| (c, m)))
        .fold(None::<(usize, f64, usize)>, |best, (c, m)| {
            let n_f = c.hyper.n_f.unwrap_or(0);
            match best {
                Some((_, bm, bn)) if m < bm || (m == bm && n_f >= bn) => best,
                _ => Some((c.index, m, n_f)),
            }
        })
        .map(|(i, _, _)| i);
    let Some(best_index) = best_index else {
        let mut msgs: Vec<&str> = candidates.iter().filter_map(|c| c.error.as_deref()).collect();
        msgs.dedup();
        return Err(Error::AllCandidatesFailed(msgs.join("; ")));
    };
    Ok(SearchOutcome {
        best_index,
        best: specs[best_index],
        candidates,
    })
}

// ---------------------------------------------------------------------------
// ANOVA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// One-way ANOVA: `F = (SS_B/(g−1)) / (SS_W/(N−g))` with the upper-tail
/// F-distribution p-value.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::Parameter(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::Parameter(format!("every ANOVA group needs 2 values, one has {}", g.len())));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("ANOVA input has non-finite values".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    if !(ssw > 0.0) {
        return Err(Error::DegenerateInput("every group has zero variance".into()));
    }
    let f = (ssb / df_between as f64) / (ssw / df_within as f64);
    let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
        .map_err(|e| Error::Numeric(format!("F distribution: {e}")))?;
    Ok(Anova {
        f,
        p: dist.sf(f),
        df_between,
        df_within,
    })
}
