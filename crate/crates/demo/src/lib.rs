//! Browser demo: synthesize a short RSVP session, then inspect the
//! difference ERP, spatial patterns as scalp maps, and held-out ROC curves.
//!
//! The exported [`Session`] wraps plain Rust methods (`*_inner`) so the
//! logic is testable off the browser.

use rsvp_core::eval::{auc, block_split, fit_pipeline, roc_curve, Hyper, PipelineKind, PipelineSpec};
use rsvp_core::preprocess::{self, EpochSet};
use rsvp_core::spatial::{fit_bank, FilterMethod};
use rsvp_core::synth::{synth_rsvp, SynthConfig};
use rsvp_core::topomap;
use serde_json::json;
use wasm_bindgen::prelude::*;

const EOG: [&str; 2] = ["HEOG", "VEOG"];

#[wasm_bindgen]
pub struct Session {
    epochs: EpochSet,
    train: EpochSet,
    test: EpochSet,
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

fn parse_method(name: &str) -> Result<FilterMethod, String> {
    FilterMethod::ALL
        .into_iter()
        .find(|m| m.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| format!("unknown filter {name:?}"))
}

impl Session {
    /// Four blocks at 250 Hz keep generation well under a second.
    pub fn create(seed: u32, noise_uv: f64) -> Result<Session, String> {
        let mut cfg = SynthConfig {
            rate: 250.0,
            blocks: 4,
            seed: seed as u64,
            ..SynthConfig::default()
        };
        cfg.noise.background_std_uv = noise_uv;
        let err = |e: rsvp_core::Error| e.to_string();
        let (rec, _) = synth_rsvp(&cfg).map_err(err)?;
        let rec = preprocess::common_average_reference_excluding(&rec, &EOG).map_err(err)?;
        let rec = preprocess::bandpass(&rec, 0.1, 30.0).map_err(err)?;
        let cut = preprocess::epoch(&rec, (0.0, 1.0)).map_err(err)?;
        let kept = preprocess::reject_trials(&cut.set, &EOG, preprocess::DEFAULT_REJECTION_UV).map_err(err)?;
        let epochs = kept.set.without_channels(&EOG);
        let (train, test) = block_split(&epochs, 1, seed as u64).map_err(err)?;
        Ok(Session { epochs, train, test })
    }

    pub fn erp_inner(&self) -> Result<serde_json::Value, String> {
        let diff = preprocess::difference_erp(&self.epochs).map_err(|e| e.to_string())?;
        let times: Vec<f64> = (0..diff.ncols())
            .map(|t| self.epochs.window.0 + t as f64 / self.epochs.rate)
            .collect();
        let rows: Vec<Vec<f64>> = diff.row_iter().map(|r| r.iter().copied().collect()).collect();
        Ok(json!({ "times": times, "channels": self.epochs.channels, "diff": rows }))
    }

    pub fn topomap_inner(&self, method: &str, n_f: usize, k: usize) -> Result<String, String> {
        let method = parse_method(method)?;
        let bank = fit_bank(method, &self.train, n_f).map_err(|e| e.to_string())?;
        if k >= bank.n_filters() {
            return Err(format!("pattern {k} out of range, the bank has {}", bank.n_filters()));
        }
        let pattern: Vec<f64> = bank.patterns.column(k).iter().copied().collect();
        let title = match bank.meta[k].window {
            Some((a, b)) => format!("{method} pattern {k} ({:.0}-{:.0} ms)", a * 1e3, b * 1e3),
            None => format!("{method} pattern {k}"),
        };
        topomap::render_svg(&pattern, &self.train.channels, &title).map_err(|e| e.to_string())
    }

    /// ROC of one pipeline on the held-out block with fixed hyperparameters.
    pub fn roc_inner(&self, pipeline: &str, n_f: usize, reg: f64) -> Result<serde_json::Value, String> {
        let kind: PipelineKind = pipeline.parse().map_err(|e: rsvp_core::Error| e.to_string())?;
        let hyper = Hyper {
            n_f: kind.filter.map(|_| n_f),
            alpha: (kind.classifier == rsvp_core::classifiers::ClassifierKind::Blr).then_some(reg),
            beta: (kind.classifier == rsvp_core::classifiers::ClassifierKind::Blr).then_some(1.0),
            lambda: (kind.classifier == rsvp_core::classifiers::ClassifierKind::Lr).then_some(reg),
        };
        let spec = PipelineSpec { kind, hyper };
        let fitted = fit_pipeline(&spec, &self.train).map_err(|e| e.to_string())?;
        let z = fitted.decision(&self.test).map_err(|e| e.to_string())?;
        let labels = self.test.target_mask();
        let curve = roc_curve(z.as_slice(), &labels).map_err(|e| e.to_string())?;
        let a = auc(z.as_slice(), &labels).map_err(|e| e.to_string())?;
        let (fpr, tpr): (Vec<f64>, Vec<f64>) = curve.into_iter().unzip();
        Ok(json!({ "pipeline": kind.name(), "fpr": fpr, "tpr": tpr, "auc": a }))
    }
}

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, noise_uv: f64) -> Result<Session, JsValue> {
        Session::create(seed, noise_uv).map_err(js)
    }

    /// `{times, channels, diff}` with `diff[channel][sample]` in µV.
    pub fn erp(&self) -> Result<String, JsValue> {
        self.erp_inner().map(|v| v.to_string()).map_err(js)
    }

    /// SVG scalp map of pattern `k` from a bank with `n_f` components.
    pub fn topomap(&self, method: &str, n_f: usize, k: usize) -> Result<String, JsValue> {
        self.topomap_inner(method, n_f, k).map_err(js)
    }

    /// `{pipeline, fpr, tpr, auc}`; `reg` is α for BLR and λ for LR.
    pub fn roc(&self, pipeline: &str, n_f: usize, reg: f64) -> Result<String, JsValue> {
        self.roc_inner(pipeline, n_f, reg).map(|v| v.to_string()).map_err(js)
    }

    pub fn summary(&self) -> String {
        json!({
            "epochs": self.epochs.len(),
            "targets": self.epochs.count(preprocess::Label::Target),
            "train": self.train.len(),
            "test": self.test.len(),
        })
        .to_string()
    }
}
