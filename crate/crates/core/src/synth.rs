//! Synthetic RSVP recordings with known ground truth.
//!
//! Stimuli arrive at a fixed rate in blocks; a few per block are targets,
//! placed at random with a minimum spacing. Every target onset adds each ERP
//! template (Gaussian bump in time × scalp topography). The background is
//! 1/f^γ noise from a cascade of first-order pole-zero sections, mixed
//! across channels, and the EOG channels carry sparse blinks.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montage::{self, EOG_CHANNELS, STANDARD_32};
use crate::preprocess::{ContinuousRecording, Event, Label};

/// Gaussian bumps are cut off this many widths from their peak.
pub const TEMPLATE_SUPPORT_WIDTHS: f64 = 8.0;

/// Spatial weights of a template: explicit per-channel values, or a
/// Gaussian falloff around a named site of the montage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Topography {
    Weights(Vec<f64>),
    Centered {
        center: String,
        /// Falloff standard deviation in head radii.
        spread: f64,
        #[serde(default = "positive")]
        polarity: f64,
    },
}

fn positive() -> f64 {
    1.0
}

impl Topography {
    pub fn weights(&self, channels: &[String]) -> Result<Vec<f64>> {
        match self {
            Topography::Weights(w) => {
                if w.len() != channels.len() {
                    return Err(Error::shape(format!("{} topography weights", channels.len()), w.len()));
                }
                Ok(w.clone())
            }
            Topography::Centered { center, spread, polarity } => {
                let (cx, cy) = montage::position(center)
                    .ok_or_else(|| Error::Parameter(format!("unknown topography center {center:?}")))?;
                if !(*spread > 0.0) {
                    return Err(Error::Parameter(format!("topography spread {spread} must be positive")));
                }
                let pos = montage::positions(channels)?;
                Ok(pos
                    .iter()
                    .map(|(x, y)| polarity * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * spread * spread)).exp())
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpTemplate {
    /// Peak latency after onset, seconds.
    pub latency_s: f64,
    /// Gaussian standard deviation, seconds.
    pub width_s: f64,
    pub topography: Topography,
    pub amplitude_uv: f64,
}

impl ErpTemplate {
    /// Temporal waveform (unit peak) at `t` seconds after onset.
    pub fn waveform(&self, t: f64) -> f64 {
        let u = (t - self.latency_s) / self.width_s;
        if u.abs() > TEMPLATE_SUPPORT_WIDTHS {
            0.0
        } else {
            (-0.5 * u * u).exp()
        }
    }

    /// Sample range `[first, last)` relative to onset where the waveform is
    /// nonzero.
    fn support(&self, rate: f64) -> (i64, i64) {
        let lo = ((self.latency_s - TEMPLATE_SUPPORT_WIDTHS * self.width_s) * rate).floor() as i64;
        let hi = ((self.latency_s + TEMPLATE_SUPPORT_WIDTHS * self.width_s) * rate).ceil() as i64 + 1;
        (lo.max(0), hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-channel standard deviation of the background, µV.
    pub background_std_uv: f64,
    /// Power spectral slope γ of the background (`1/f^γ`), in `[0, 2]`.
    pub pink_exponent: f64,
    /// Blend between independent channels (0) and a random full mixing (1).
    pub spatial_mixing: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            background_std_uv: 25.0,
            pink_exponent: 1.0,
            spatial_mixing: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EogConfig {
    /// Adds HEOG and VEOG channels after the EEG channels.
    pub enabled: bool,
    pub blink_rate_hz: f64,
    /// Blink peak on VEOG; HEOG sees a fifth of it.
    pub amplitude_uv: f64,
    pub blink_duration_s: f64,
    /// White noise on the EOG channels.
    pub noise_uv: f64,
}

impl Default for EogConfig {
    fn default() -> Self {
        EogConfig {
            enabled: true,
            blink_rate_hz: 0.2,
            amplitude_uv: 60.0,
            blink_duration_s: 0.3,
            noise_uv: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// EEG channel count; names are the first entries of the 10-20 list.
    pub channels: usize,
    pub rate: f64,
    pub stimulus_rate: f64,
    pub tasks: u32,
    /// Blocks per task.
    pub blocks: u32,
    pub images_per_block: usize,
    pub targets_per_block: usize,
    /// Minimum distance between targets, in stimulus positions (2 means
    /// never adjacent).
    pub min_target_separation: usize,
    /// Silence before the first block, between blocks, and after the last.
    pub block_gap_s: f64,
    pub erp_templates: Vec<ErpTemplate>,
    pub noise: NoiseConfig,
    pub eog: EogConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            channels: 32,
            rate: 1000.0,
            stimulus_rate: 6.0,
            tasks: 1,
            blocks: 9,
            images_per_block: 180,
            targets_per_block: 9,
            min_target_separation: 2,
            block_gap_s: 2.0,
            erp_templates: default_templates(),
            noise: NoiseConfig::default(),
            eog: EogConfig::default(),
            seed: 42,
        }
    }
}

/// An N2-like fronto-central negativity and a parietal P3.
pub fn default_templates() -> Vec<ErpTemplate> {
    vec![
        ErpTemplate {
            latency_s: 0.25,
            width_s: 0.035,
            topography: Topography::Centered {
                center: "FCz".into(),
                spread: 0.45,
                polarity: -1.0,
            },
            amplitude_uv: 3.0,
        },
        ErpTemplate {
            latency_s: 0.45,
            width_s: 0.08,
            topography: Topography::Centered {
                center: "Pz".into(),
                spread: 0.5,
                polarity: 1.0,
            },
            amplitude_uv: 6.0,
        },
    ]
}

impl SynthConfig {
    pub fn channel_names(&self) -> Vec<String> {
        let eeg = STANDARD_32.iter().take(self.channels).map(|s| s.to_string());
        if self.eog.enabled {
            eeg.chain(EOG_CHANNELS.iter().map(|s| s.to_string())).collect()
        } else {
            eeg.collect()
        }
    }

    pub fn eeg_channel_names(&self) -> Vec<String> {
        STANDARD_32.iter().take(self.channels).map(|s| s.to_string()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let p = |msg: String| Err(Error::Parameter(msg));
        if self.channels == 0 || self.channels > STANDARD_32.len() {
            return p(format!("channel count {} must be in 1..=32", self.channels));
        }
        if !(self.rate > 0.0 && self.stimulus_rate > 0.0 && self.stimulus_rate < self.rate) {
            return p(format!("rates {} / {} Hz are invalid", self.rate, self.stimulus_rate));
        }
        if self.tasks == 0 || self.blocks == 0 || self.images_per_block == 0 {
            return p("tasks, blocks and images per block must be positive".into());
        }
        if self.targets_per_block >= self.images_per_block {
            return p(format!(
                "{} targets do not fit {} images per block",
                self.targets_per_block, self.images_per_block
            ));
        }
        if !(self.block_gap_s >= 0.0) {
            return p("block gap must be non-negative".into());
        }
        for (i, t) in self.erp_templates.iter().enumerate() {
            if !(t.latency_s >= 0.0 && t.latency_s < 1.0) {
                return p(format!("template {i} latency {} s must lie in [0, 1)", t.latency_s));
            }
            if !(t.width_s > 0.0) || !(t.amplitude_uv >= 0.0) {
                return p(format!("template {i} needs positive width and non-negative amplitude"));
            }
            t.topography.weights(&self.eeg_channel_names())?;
        }
        let n = &self.noise;
        if !(n.background_std_uv >= 0.0 && (0.0..=2.0).contains(&n.pink_exponent) && (0.0..=1.0).contains(&n.spatial_mixing)) {
            return p(format!("noise settings {n:?} out of range"));
        }
        let e = &self.eog;
        if !(e.blink_rate_hz >= 0.0 && e.amplitude_uv >= 0.0 && e.blink_duration_s > 0.0 && e.noise_uv >= 0.0) {
            return p(format!("EOG settings {e:?} out of range"));
        }
        Ok(())
    }
}

/// One injected ERP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErpInstance {
    pub onset: usize,
    pub template: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub instances: Vec<ErpInstance>,
    /// Noise-free signal on every channel (EOG rows are zero).
    pub clean: DMatrix<f64>,
}

// independent random streams
const STREAM_TARGETS: u64 = 1;
const STREAM_BACKGROUND: u64 = 2;
const STREAM_MIXING: u64 = 3;
const STREAM_BLINKS: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sorted target positions among `n` slots with consecutive targets at
/// least `sep` apart, uniform over all valid placements (stars and bars).
pub fn place_targets(rng: &mut impl Rng, n: usize, count: usize, sep: usize) -> Result<Vec<usize>> {
    let slack = (count.saturating_sub(1)) * sep.saturating_sub(1);
    if count > n || n - count < slack {
        return Err(Error::Parameter(format!(
            "cannot place {count} targets {sep} apart among {n} images"
        )));
    }
    let free = n - slack;
    let mut picks = index::sample(rng, free, count).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, p)| p + i * sep.saturating_sub(1))
        .collect())
}

/// Template-sum epoch (`N_c × n_t`) that every target contributes when
/// nothing overlaps it, sampled at `rate` from onset.
pub fn template_epoch(cfg: &SynthConfig, rate: f64, n_t: usize) -> Result<DMatrix<f64>> {
    let names = cfg.eeg_channel_names();
    let mut out = DMatrix::zeros(cfg.channel_names().len(), n_t);
    for t in &cfg.erp_templates {
        let topo = t.topography.weights(&names)?;
        for s in 0..n_t {
            let g = t.waveform(s as f64 / rate);
            for (c, w) in topo.iter().enumerate() {
                out[(c, s)] += t.amplitude_uv * w * g;
            }
        }
    }
    Ok(out)
}

/// Generates a recording and its ground truth; fully determined by the
/// config (including its seed).
pub fn synth_rsvp(cfg: &SynthConfig) -> Result<(ContinuousRecording, GroundTruth)> {
    cfg.validate()?;
    let names = cfg.channel_names();
    let n_eeg = cfg.channels;
    let n_ch = names.len();
    let period = cfg.rate / cfg.stimulus_rate;
    let block_len = cfg.images_per_block as f64 * period;
    let gap = cfg.block_gap_s * cfg.rate;
    let total_blocks = (cfg.tasks * cfg.blocks) as usize;
    let len = (gap + total_blocks as f64 * (block_len + gap)).ceil() as usize;

    // events
    let mut rng = rng_for(cfg.seed, STREAM_TARGETS);
    let mut events = Vec::with_capacity(total_blocks * cfg.images_per_block);
    for b in 0..total_blocks {
        let start = gap + b as f64 * (block_len + gap);
        let targets = place_targets(&mut rng, cfg.images_per_block, cfg.targets_per_block, cfg.min_target_separation)?;
        let mut next = targets.iter().peekable();
        for j in 0..cfg.images_per_block {
            let label = if next.peek() == Some(&&j) {
                next.next();
                Label::Target
            } else {
                Label::Standard
            };
            events.push(Event {
                sample: (start + j as f64 * period).round() as usize,
                label,
                block: (b as u32) % cfg.blocks,
                task: (b as u32) / cfg.blocks,
            });
        }
    }

    // evoked signal
    let eeg_names = cfg.eeg_channel_names();
    let mut clean = DMatrix::zeros(n_ch, len);
    let mut instances = Vec::new();
    for (k, tpl) in cfg.erp_templates.iter().enumerate() {
        let topo = tpl.topography.weights(&eeg_names)?;
        let (lo, hi) = tpl.support(cfg.rate);
        let wave: Vec<f64> = (lo..hi).map(|s| tpl.waveform(s as f64 / cfg.rate)).collect();
        for e in events.iter().filter(|e| e.label == Label::Target) {
            instances.push(ErpInstance { onset: e.sample, template: k });
            for (i, s) in (lo..hi).enumerate() {
                let t = e.sample as i64 + s;
                if t < 0 || t as usize >= len {
                    continue;
                }
                for (c, w) in topo.iter().enumerate() {
                    clean[(c, t as usize)] += tpl.amplitude_uv * w * wave[i];
                }
            }
        }
    }
    instances.sort_by_key(|i| (i.onset, i.template));

    let mut data = clean.clone();
    if cfg.noise.background_std_uv > 0.0 {
        let noise = background(cfg, n_eeg, len);
        data.rows_mut(0, n_eeg).zip_apply(&noise, |d, n| *d += n);
    }
    if cfg.eog.enabled {
        add_eog(cfg, &mut data, n_eeg, len);
    }

    let rec = ContinuousRecording::new(cfg.rate, names, data, events)?;
    Ok((rec, GroundTruth { instances, clean }))
}

/// Pole/zero corner frequencies (Hz) approximating a `1/f^γ` power slope
/// from `f_lo` to Nyquist: poles three per decade, each zero placed `γ/2`
/// of the way to the next pole.
fn pink_sections(gamma: f64, rate: f64) -> Vec<(f64, f64)> {
    let per_decade = 3.0;
    let step = 1.0 / per_decade;
    let (lo, hi) = (0.05f64.log10(), (rate / 2.0).log10());
    let mut out = Vec::new();
    let mut p = lo;
    while p < hi {
        out.push((10f64.powf(p), 10f64.powf(p + step * gamma / 2.0)));
        p += step;
    }
    out
}

fn pink_filter(x: &mut [f64], sections: &[(f64, f64)], rate: f64) {
    for &(fp, fz) in sections {
        let a = (-2.0 * std::f64::consts::PI * fp / rate).exp();
        let b = (-2.0 * std::f64::consts::PI * fz / rate).exp();
        let (mut xp, mut yp) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = *v - b * xp + a * yp;
            xp = *v;
            yp = y;
            *v = y;
        }
    }
}

fn standardize(x: &mut [f64], std: f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { std / sd } else { 0.0 };
    for v in x.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

/// `n × len` spatially mixed pink background, each channel scaled to the
/// configured standard deviation.
fn background(cfg: &SynthConfig, n: usize, len: usize) -> DMatrix<f64> {
    let sections = pink_sections(cfg.noise.pink_exponent, cfg.rate);
    // discard the filter start-up transient
    let burn = (20.0 * cfg.rate) as usize;
    let mut rng = rng_for(cfg.seed, STREAM_BACKGROUND);
    let mut sources = DMatrix::zeros(n, len);
    let mut buf = vec![0.0; len + burn];
    for c in 0..n {
        for v in buf.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        pink_filter(&mut buf, &sections, cfg.rate);
        standardize(&mut buf[burn..], 1.0);
        for (t, v) in buf[burn..].iter().enumerate() {
            sources[(c, t)] = *v;
        }
    }
    let mut mrng = rng_for(cfg.seed, STREAM_MIXING);
    let m = cfg.noise.spatial_mixing;
    let random = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut mrng)) / (n as f64).sqrt();
    let mixing = DMatrix::<f64>::identity(n, n) * (1.0 - m) + random * m;
    let mut out = mixing * sources;
    for mut row in out.row_iter_mut() {
        let mut v: Vec<f64> = row.iter().copied().collect();
        standardize(&mut v, cfg.noise.background_std_uv);
        row.copy_from_slice(&v);
    }
    out
}

/// White noise plus raised-cosine blinks on VEOG (full amplitude) and HEOG
/// (one fifth). Blinks never overlap, so a single blink bounds the
/// peak-to-peak excursion.
fn add_eog(cfg: &SynthConfig, data: &mut DMatrix<f64>, first: usize, len: usize) {
    let e = &cfg.eog;
    let mut rng = rng_for(cfg.seed, STREAM_BLINKS);
    for c in first..first + 2 {
        for t in 0..len {
            let v: f64 = StandardNormal.sample(&mut rng);
            data[(c, t)] += e.noise_uv * v;
        }
    }
    if !(e.blink_rate_hz > 0.0) || e.amplitude_uv == 0.0 {
        return;
    }
    let dur = (e.blink_duration_s * cfg.rate).round().max(1.0) as usize;
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / e.blink_rate_hz * cfg.rate;
        let start = t.round() as usize;
        if start + dur >= len {
            break;
        }
        for k in 0..dur {
            let shape = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / dur as f64).cos();
            data[(first + 1, start + k)] += e.amplitude_uv * shape;
            data[(first, start + k)] += 0.2 * e.amplitude_uv * shape;
        }
        t += dur as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{epoch, erp_average};

    fn small() -> SynthConfig {
        SynthConfig {
            blocks: 2,
            images_per_block: 60,
            targets_per_block: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_block_ratio() {
        let (rec, _) = synth_rsvp(&SynthConfig { blocks: 3, ..SynthConfig::default() }).unwrap();
        for b in 0..3 {
            let block: Vec<_> = rec.events.iter().filter(|e| e.block == b).collect();
            let targets = block.iter().filter(|e| e.label == Label::Target).count();
            assert_eq!((targets, block.len() - targets), (9, 171));
        }
        assert_eq!(rec.n_channels(), 34);
    }

    #[test]
    fn targets_respect_separation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for sep in 1..8 {
            for _ in 0..50 {
                let t = place_targets(&mut rng, 180, 9, sep).unwrap();
                assert_eq!(t.len(), 9);
                assert!(t.windows(2).all(|w| w[1] - w[0] >= sep));
                assert!(*t.last().unwrap() < 180);
            }
        }
        assert!(place_targets(&mut rng, 10, 4, 4).is_err());
        assert_eq!(place_targets(&mut rng, 10, 4, 3).unwrap(), vec![0, 3, 6, 9]);
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, _) = synth_rsvp(&small()).unwrap();
        let (b, _) = synth_rsvp(&small()).unwrap();
        assert_eq!(a, b);
        let (c, _) = synth_rsvp(&SynthConfig { seed: 43, ..small() }).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn noiseless_average_is_the_template() {
        let cfg = SynthConfig {
            min_target_separation: 7,
            noise: NoiseConfig {
                background_std_uv: 0.0,
                ..NoiseConfig::default()
            },
            eog: EogConfig {
                enabled: false,
                ..EogConfig::default()
            },
            ..small()
        };
        let (rec, _) = synth_rsvp(&cfg).unwrap();
        let set = epoch(&rec, (0.0, 1.0)).unwrap().set;
        let avg = erp_average(&set, Label::Target).unwrap();
        let expected = template_epoch(&cfg, rec.rate, set.n_times()).unwrap();
        assert!((avg - expected).amax() < 1e-9);
    }

    #[test]
    fn clean_signal_is_linear_in_amplitude() {
        let cfg = small();
        let mut doubled = cfg.clone();
        for t in &mut doubled.erp_templates {
            t.amplitude_uv *= 2.0;
        }
        let (_, a) = synth_rsvp(&cfg).unwrap();
        let (_, b) = synth_rsvp(&doubled).unwrap();
        assert_eq!(a.clean * 2.0, b.clean);
    }

    #[test]
    fn background_has_requested_spread_and_slope() {
        let cfg = SynthConfig {
            erp_templates: vec![],
            eog: EogConfig {
                enabled: false,
                ..EogConfig::default()
            },
            ..small()
        };
        let (rec, _) = synth_rsvp(&cfg).unwrap();
        for row in rec.data.row_iter() {
            let mean = row.mean();
            let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64).sqrt();
            assert!((sd - 25.0).abs() < 1e-9);
        }
        // 1/f: mean power of first differences is far below that of white
        // noise with the same variance (which would be 2σ²)
        let row = rec.data.row(0);
        let diff: f64 = row.iter().zip(row.iter().skip(1)).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / row.len() as f64;
        assert!(diff < 0.5 * 625.0, "{diff}");
    }

    #[test]
    fn eog_stays_below_rejection_threshold() {
        let (rec, _) = synth_rsvp(&small()).unwrap();
        let veog = rec.channel_index("VEOG").unwrap();
        let row = rec.data.row(veog);
        let ptp = row.max() - row.min();
        assert!(ptp > 40.0 && ptp < 100.0, "{ptp}");
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_rsvp(&SynthConfig { targets_per_block: 180, ..small() }).is_err());
        assert!(synth_rsvp(&SynthConfig { channels: 33, ..small() }).is_err());
        let mut cfg = small();
        cfg.erp_templates[0].latency_s = 1.2;
        assert!(synth_rsvp(&cfg).is_err());
        cfg.erp_templates[0].latency_s = 0.2;
        cfg.erp_templates[0].topography = Topography::Weights(vec![1.0; 3]);
        assert!(synth_rsvp(&cfg).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SynthConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SynthConfig>(&json).unwrap(), cfg);
        let partial: SynthConfig = serde_json::from_str(r#"{"blocks": 3, "noise": {"background_std_uv": 5}}"#).unwrap();
        assert_eq!(partial.blocks, 3);
        assert_eq!(partial.noise.background_std_uv, 5.0);
        assert_eq!(partial.noise.pink_exponent, 1.0);
    }
}
