//! Continuous recordings, epoch sets, and the transformations between them:
//! re-referencing, band-pass, resampling, epoching, EOG-based trial
//! rejection, and ERP averages.

mod iir;
mod resample;

pub use iir::{butter_bandpass, butter_lowpass, Biquad, Sos};

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Stimulus class of an event or epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Target,
    Standard,
}

impl Label {
    pub fn is_target(self) -> bool {
        matches!(self, Label::Target)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Standard => "standard",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "target" => Ok(Label::Target),
            "standard" => Ok(Label::Standard),
            other => Err(format!("unknown label {other:?}, expected target or standard")),
        }
    }
}

/// A stimulus onset in a continuous recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sample: usize,
    pub label: Label,
    pub block: u32,
    pub task: u32,
}

/// Multichannel time series in microvolts, channel-major (`N_c × T`).
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRecording {
    pub rate: f64,
    pub channels: Vec<String>,
    pub data: DMatrix<f64>,
    pub events: Vec<Event>,
}

impl ContinuousRecording {
    pub fn new(
        rate: f64,
        channels: Vec<String>,
        data: DMatrix<f64>,
        events: Vec<Event>,
    ) -> Result<Self> {
        let rec = ContinuousRecording {
            rate,
            channels,
            data,
            events,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Parameter(format!("sampling rate {} must be positive", self.rate)));
        }
        if self.channels.len() != self.data.nrows() {
            return Err(Error::shape(
                format!("{} channel rows", self.channels.len()),
                format!("{} rows", self.data.nrows()),
            ));
        }
        let mut seen = HashSet::new();
        for name in &self.channels {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate channel name {name:?}")));
            }
        }
        let len = self.len();
        if let Some(e) = self.events.iter().find(|e| e.sample >= len) {
            return Err(Error::Data(format!(
                "event at sample {} lies beyond the recording ({len} samples)",
                e.sample
            )));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    fn map_channels<F>(&self, rate: f64, events: Vec<Event>, f: F) -> ContinuousRecording
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
    {
        let rows: Vec<Vec<f64>> = par::map_range(self.n_channels(), |c| {
            let row: Vec<f64> = self.data.row(c).iter().copied().collect();
            f(&row)
        });
        let len = rows.first().map_or(0, Vec::len);
        let data = DMatrix::from_fn(rows.len(), len, |r, t| rows[r][t]);
        ContinuousRecording {
            rate,
            channels: self.channels.clone(),
            data,
            events,
        }
    }
}

/// Where an epoch came from: presentation block, search task, and the
/// stimulus onset sample in the (resampled) continuous recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub block: u32,
    pub task: u32,
    pub onset: usize,
}

/// A stack of equally shaped labeled epochs (`N_c × N_t` each).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<DMatrix<f64>>,
    pub labels: Vec<Label>,
    pub rate: f64,
    /// Window relative to stimulus onset, seconds.
    pub window: (f64, f64),
    pub provenance: Vec<Provenance>,
    pub channels: Vec<String>,
}

impl EpochSet {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per epoch.
    pub fn n_times(&self) -> usize {
        self.epochs.first().map_or_else(
            || ((self.window.1 - self.window.0) * self.rate).round() as usize,
            |e| e.ncols(),
        )
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// `true` for targets, in epoch order.
    pub fn target_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_target()).collect()
    }

    /// Errors unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        if self.count(Label::Target) == 0 {
            return Err(Error::ClassMissing("target"));
        }
        if self.count(Label::Standard) == 0 {
            return Err(Error::ClassMissing("standard"));
        }
        Ok(())
    }

    /// Subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        EpochSet {
            epochs: indices.iter().map(|&i| self.epochs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rate: self.rate,
            window: self.window,
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
            channels: self.channels.clone(),
        }
    }

    /// Drops the named channels (names that are absent are ignored).
    pub fn without_channels(&self, names: &[&str]) -> EpochSet {
        let keep: Vec<usize> = (0..self.n_channels())
            .filter(|&c| !names.contains(&self.channels[c].as_str()))
            .collect();
        EpochSet {
            epochs: self.epochs.iter().map(|e| e.select_rows(keep.iter())).collect(),
            labels: self.labels.clone(),
            rate: self.rate,
            window: self.window,
            provenance: self.provenance.clone(),
            channels: keep.iter().map(|&c| self.channels[c].clone()).collect(),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.epochs.len();
        if self.labels.len() != n || self.provenance.len() != n {
            return Err(Error::shape(
                format!("{n} labels and provenance rows"),
                format!("{} labels, {} provenance rows", self.labels.len(), self.provenance.len()),
            ));
        }
        let (nc, nt) = (self.n_channels(), self.n_times());
        if let Some(e) = self.epochs.iter().find(|e| e.shape() != (nc, nt)) {
            return Err(Error::shape(format!("{nc}x{nt} epochs"), format!("{}x{}", e.nrows(), e.ncols())));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_shapes()
    }
}

/// Subtracts the cross-channel mean from every sample.
pub fn common_average_reference(rec: &ContinuousRecording) -> Result<ContinuousRecording> {
    common_average_reference_excluding(rec, &[])
}

/// Common average reference computed over, and applied to, every channel
/// not named in `exclude` (e.g. EOG channels). Excluded channels pass
/// through unchanged.
pub fn common_average_reference_excluding(
    rec: &ContinuousRecording,
    exclude: &[&str],
) -> Result<ContinuousRecording> {
    let included: Vec<usize> = (0..rec.n_channels())
        .filter(|&c| !exclude.contains(&rec.channels[c].as_str()))
        .collect();
    if included.len() < 2 {
        return Err(Error::Parameter(format!(
            "common average reference needs at least 2 channels, got {}",
            included.len()
        )));
    }
    let mut out = rec.clone();
    let k = included.len() as f64;
    for t in 0..rec.len() {
        let mean = included.iter().map(|&c| rec.data[(c, t)]).sum::<f64>() / k;
        for &c in &included {
            out.data[(c, t)] -= mean;
        }
    }
    Ok(out)
}

/// Prototype order of the band-pass (4 poles → 4 biquads).
pub const BANDPASS_ORDER: usize = 4;

/// Zero-phase Butterworth band-pass between `lo` and `hi` Hz.
pub fn bandpass(rec: &ContinuousRecording, lo: f64, hi: f64) -> Result<ContinuousRecording> {
    let sos = butter_bandpass(BANDPASS_ORDER, lo, hi, rec.rate)?;
    let padlen = (3.0 * rec.rate / lo).ceil() as usize;
    Ok(rec.map_channels(rec.rate, rec.events.clone(), |x| sos.filtfilt(x, padlen)))
}

/// Down-samples to `target` Hz. Event indices map to `floor(i·target/rate)`.
pub fn resample(rec: &ContinuousRecording, target: f64) -> Result<ContinuousRecording> {
    if !(target > 0.0) {
        return Err(Error::Parameter(format!("target rate {target} must be positive")));
    }
    if target > rec.rate {
        return Err(Error::Parameter(format!(
            "up-sampling from {} Hz to {target} Hz is unsupported",
            rec.rate
        )));
    }
    if target == rec.rate {
        return Ok(rec.clone());
    }
    if rec.is_empty() {
        return Err(Error::EmptySet("cannot resample an empty recording".into()));
    }
    let ratio = target / rec.rate;
    let out_len = ((rec.len() as f64 * ratio) - 1e-9).ceil().max(1.0) as usize;
    let events = rec
        .events
        .iter()
        .map(|e| Event {
            sample: ((e.sample as f64 * ratio) + 1e-9).floor() as usize,
            ..*e
        })
        .collect();
    let resampler = resample::Resampler::new(rec.len(), out_len, rec.rate / target);
    Ok(rec.map_channels(target, events, |x| resampler.apply(x)))
}

/// Output of [`epoch`].
#[derive(Debug, Clone)]
pub struct Epoching {
    pub set: EpochSet,
    /// Events whose window ran past either end of the recording.
    pub dropped: usize,
}

/// Cuts one `N_c × N_t` epoch per event, `N_t = round((end − start)·rate)`.
pub fn epoch(rec: &ContinuousRecording, window: (f64, f64)) -> Result<Epoching> {
    let (start, end) = window;
    if !(end > start) {
        return Err(Error::Parameter(format!("epoch window {window:?} is empty")));
    }
    let n_t = ((end - start) * rec.rate).round() as usize;
    let offset = (start * rec.rate).round() as i64;
    let mut set = EpochSet {
        epochs: Vec::new(),
        labels: Vec::new(),
        rate: rec.rate,
        window,
        provenance: Vec::new(),
        channels: rec.channels.clone(),
    };
    let mut dropped = 0;
    for e in &rec.events {
        let first = e.sample as i64 + offset;
        if first < 0 || first as usize + n_t > rec.len() {
            dropped += 1;
            continue;
        }
        set.epochs
            .push(rec.data.columns(first as usize, n_t).into_owned());
        set.labels.push(e.label);
        set.provenance.push(Provenance {
            block: e.block,
            task: e.task,
            onset: e.sample,
        });
    }
    if set.is_empty() {
        return Err(Error::EmptySet(format!(
            "no event has a complete {start}..{end} s window ({dropped} dropped)"
        )));
    }
    Ok(Epoching { set, dropped })
}

/// Output of [`reject_trials`].
#[derive(Debug, Clone)]
pub struct Rejection {
    pub set: EpochSet,
    pub removed_targets: usize,
    pub removed_standards: usize,
}

/// Default peak-to-peak EOG rejection threshold, µV.
pub const DEFAULT_REJECTION_UV: f64 = 100.0;

/// Removes epochs whose peak-to-peak amplitude on any of the named EOG
/// channels exceeds `threshold_uv`.
pub fn reject_trials(epochs: &EpochSet, eog_channels: &[&str], threshold_uv: f64) -> Result<Rejection> {
    let rows: Vec<usize> = eog_channels
        .iter()
        .map(|name| {
            epochs
                .channels
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Parameter(format!("EOG channel {name:?} not found")))
        })
        .collect::<Result<_>>()?;
    let mut keep = Vec::with_capacity(epochs.len());
    let (mut removed_targets, mut removed_standards) = (0, 0);
    for (i, ep) in epochs.epochs.iter().enumerate() {
        let bad = rows.iter().any(|&r| {
            let row = ep.row(r);
            row.max() - row.min() > threshold_uv
        });
        if bad {
            match epochs.labels[i] {
                Label::Target => removed_targets += 1,
                Label::Standard => removed_standards += 1,
            }
        } else {
            keep.push(i);
        }
    }
    let set = epochs.subset(&keep);
    for label in [Label::Target, Label::Standard] {
        if epochs.count(label) > 0 && set.count(label) == 0 {
            return Err(Error::ClassCollapse(label.as_str()));
        }
    }
    Ok(Rejection {
        set,
        removed_targets,
        removed_standards,
    })
}

/// Per-sample mean over the epochs of one class.
pub fn erp_average(epochs: &EpochSet, class: Label) -> Result<DMatrix<f64>> {
    let mut sum = DMatrix::zeros(epochs.n_channels(), epochs.n_times());
    let mut count = 0usize;
    for (ep, _) in epochs.epochs.iter().zip(&epochs.labels).filter(|(_, &l)| l == class) {
        sum += ep;
        count += 1;
    }
    if count == 0 {
        return Err(Error::ClassMissing(class.as_str()));
    }
    Ok(sum / count as f64)
}

/// `mean(target) − mean(standard)`; column `t` is the difference pattern at
/// sample `t`.
pub fn difference_erp(epochs: &EpochSet) -> Result<DMatrix<f64>> {
    Ok(erp_average(epochs, Label::Target)? - erp_average(epochs, Label::Standard)?)
}
