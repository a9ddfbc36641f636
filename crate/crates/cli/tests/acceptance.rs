//! Acceptance criteria 1–10. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rsvp_cli::config::{RunConfig, SearchConfig};
use rsvp_cli::{EvaluationReport, REPORT_FILE};
use rsvp_core::classifiers::{fit_blr, fit_lda_with, lr_gradient, lr_objective, regression_targets, with_intercept};
use rsvp_core::eval::{auc, one_way_anova, PipelineKind};
use rsvp_core::io;
use rsvp_core::linalg::{gen_eig, SymMatrix};
use rsvp_core::preprocess::{epoch, erp_average, ContinuousRecording, EpochSet, Event, Label, Provenance};
use rsvp_core::spatial::{fit_xdawn, lda_beamformer, FilterMethod};
use rsvp_core::synth::{synth_rsvp, template_epoch, EogConfig, ErpTemplate, NoiseConfig, SynthConfig, Topography};
use rsvp_core::Error;

type Outcome = Result<String, String>;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gauss(rng))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gauss(rng))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let g = random_matrix(rng, n, n);
    SymMatrix::symmetrize(&g * g.transpose() + DMatrix::identity(n, n) * 0.1 * n as f64)
}

fn within(limit_s: f64, elapsed: Duration, detail: String) -> Outcome {
    if elapsed.as_secs_f64() <= limit_s {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
    }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_constraint = 0.0_f64;
    for trial in 0..200 {
        let sigma = random_spd(&mut rng, 32);
        let p = random_vector(&mut rng, 32);
        let (w, j) = lda_beamformer(&sigma, &p).map_err(|e| e.to_string())?;
        worst_constraint = worst_constraint.max((w.dot(&p) - 1.0).abs());
        for _ in 0..100 {
            // a perturbation orthogonal to p keeps wᵀp = 1
            let v = random_vector(&mut rng, 32);
            let d = &v - &p * (v.dot(&p) / p.dot(&p));
            let scale = 10f64.powf(rng.random_range(-4.0..1.0)) * w.norm() / d.norm();
            let alt = &w + d * scale;
            if sigma.quad(&alt) < j {
                return Err(format!("trial {trial}: a feasible perturbation has lower variance"));
            }
        }
    }
    if worst_constraint > 1e-10 {
        return Err(format!("|wᵀp − 1| reached {worst_constraint:e}"));
    }
    within(5.0, t0.elapsed(), format!("max |wᵀp − 1| = {worst_constraint:.1e}"))
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0_f64;
    for trial in 0..50 {
        let a = random_spd(&mut rng, 8);
        let b = random_spd(&mut rng, 8);
        let ours = gen_eig(&a, &b).map_err(|e| e.to_string())?;
        let binv = b.matrix().clone().try_inverse().ok_or("B is singular")?;
        let mut oracle: Vec<f64> = (binv * a.matrix())
            .eigenvalues()
            .ok_or(format!("trial {trial}: oracle has complex eigenvalues"))?
            .iter()
            .copied()
            .collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (l, o) in ours.values.iter().zip(&oracle) {
            worst = worst.max((l - o).abs() / o.abs().max(f64::MIN_POSITIVE));
        }
    }
    if worst > 1e-8 {
        return Err(format!("max relative eigenvalue error {worst:e}"));
    }
    within(1.0, t0.elapsed(), format!("max relative error {worst:.1e}"))
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (si, &li) in scores.iter().zip(labels) {
        for (sj, &lj) in scores.iter().zip(labels) {
            if li && !lj {
                den += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let ours = auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((ours - brute_auc(&scores, &labels)).abs());
    }
    if worst > 1e-12 {
        return Err(format!("max deviation from pair counting {worst:e}"));
    }
    within(2.0, t0.elapsed(), format!("max deviation {worst:.1e}"))
}

fn class_data(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> (DMatrix<f64>, Vec<bool>) {
    let y: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let mut x = random_matrix(rng, n, d);
    for (i, &t) in y.iter().enumerate() {
        if t {
            x[(i, 0)] += shift;
        }
    }
    (x, y)
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0_f64;
    let h = 1e-6;
    for _ in 0..20 {
        let d = rng.random_range(2..=12);
        let (x, y) = class_data(&mut rng, 60, d, 1.0);
        let w = random_vector(&mut rng, d);
        let b = gauss(&mut rng);
        let lambda = 10f64.powf(rng.random_range(-3.0..1.0));
        let (gw, gb) = lr_gradient(&x, &y, lambda, &w, b);
        let f = |w: &DVector<f64>, b: f64| lr_objective(&x, &y, lambda, w, b);
        let mut analytic = gw.as_slice().to_vec();
        analytic.push(gb);
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..d {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += h;
            wm[j] -= h;
            numeric.push((f(&wp, b) - f(&wm, b)) / (2.0 * h));
        }
        numeric.push((f(&w, b + h) - f(&w, b - h)) / (2.0 * h));
        let scale = analytic.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let err = analytic.iter().zip(&numeric).fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()));
        worst = worst.max(err / scale);
    }
    if worst >= 1e-5 {
        return Err(format!("max relative gradient error {worst:e}"));
    }
    within(2.0, t0.elapsed(), format!("max relative error {worst:.1e}"))
}

fn lsr(x: &DMatrix<f64>, y: &[bool]) -> DVector<f64> {
    let xt = with_intercept(x);
    let t = regression_targets(y).unwrap();
    (xt.transpose() * &xt).cholesky().unwrap().solve(&(xt.transpose() * t))
}

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut worst_blr, mut worst_cos) = (0.0_f64, 1.0_f64);
    for _ in 0..20 {
        let d = rng.random_range(2..=10);
        let (x, y) = class_data(&mut rng, 80, d, 1.5);
        let reference = lsr(&x, &y);
        let blr = fit_blr(&x, &y, 1e-12, 1.0).map_err(|e| e.to_string())?;
        let mut full = vec![blr.bias];
        full.extend(blr.weights.iter());
        let full = DVector::from_vec(full);
        worst_blr = worst_blr.max((&full - &reference).norm() / reference.norm());
        let lda = fit_lda_with(&x, &y, false).map_err(|e| e.to_string())?;
        let ls_w = reference.rows(1, d).into_owned();
        worst_cos = worst_cos.min(lda.weights.dot(&ls_w).abs() / (lda.weights.norm() * ls_w.norm()));
    }
    if worst_blr > 1e-6 {
        return Err(format!("BLR deviates from least squares by {worst_blr:e}"));
    }
    if worst_cos <= 1.0 - 1e-6 {
        return Err(format!("LDA/LSR |cos| = {worst_cos}"));
    }
    within(
        1.0,
        t0.elapsed(),
        format!("BLR rel. error {worst_blr:.1e}, min |cos| 1 − {:.1e}", 1.0 - worst_cos),
    )
}

fn run_config(seed: u64) -> RunConfig {
    RunConfig {
        seed: Some(seed),
        search: SearchConfig {
            budget: 20,
            k: 5,
            ..SearchConfig::default()
        },
        ..RunConfig::default()
    }
}

fn run_with_threads(cfg: &RunConfig, out: &Path, threads: usize) -> Result<Vec<u8>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| rsvp_cli::run(cfg, out)).map_err(|e| e.to_string())?;
    std::fs::read(out.join(REPORT_FILE)).map_err(|e| e.to_string())
}

fn criterion_6(report: &EvaluationReport, elapsed: Duration) -> Outcome {
    let auc_of = |filter: Option<FilterMethod>, c| {
        let kind = PipelineKind::new(filter, c);
        report
            .summary
            .iter()
            .find(|r| r.pipeline == kind)
            .map(|r| r.mean)
            .ok_or(format!("{kind} missing from the report"))
    };
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for filter in [FilterMethod::Mtwlb, FilterMethod::Xdawn] {
        for c in rsvp_core::classifiers::ClassifierKind::ALL {
            let ours = auc_of(Some(filter), c)?;
            let none = auc_of(None, c)?;
            lines.push(format!("{filter}+{c} {ours:.3} vs NONE {none:.3}"));
            if ours < none - 0.01 || ours < 0.85 {
                failures.push(format!("{filter}+{c} = {ours:.4} (NONE+{c} = {none:.4})"));
            }
        }
    }
    if !failures.is_empty() {
        return Err(failures.join(", "));
    }
    within(600.0, elapsed, lines.join("; "))
}

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    // compactly supported topographies so the filter support is checkable
    let support = ["Pz", "P3", "P4", "CPz", "POz", "Cz"];
    let default = SynthConfig::default();
    let names = default.eeg_channel_names();
    let weights: Vec<f64> = names
        .iter()
        .map(|n| match support.iter().position(|s| s == n) {
            Some(i) => 1.0 - 0.1 * i as f64,
            None => 0.0,
        })
        .collect();
    let n2 = names
        .iter()
        .map(|n| if n == "Cz" || n == "CPz" { -0.5 } else { 0.0 })
        .collect();
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
        erp_templates: vec![
            ErpTemplate {
                topography: Topography::Weights(n2),
                ..default.erp_templates[0].clone()
            },
            ErpTemplate {
                topography: Topography::Weights(weights),
                ..default.erp_templates[1].clone()
            },
        ],
        ..default
    };
    let (rec, _) = synth_rsvp(&cfg).map_err(|e| e.to_string())?;
    let set = epoch(&rec, (0.0, 1.0)).map_err(|e| e.to_string())?.set;
    let avg = erp_average(&set, Label::Target).map_err(|e| e.to_string())?;
    let expected = template_epoch(&cfg, rec.rate, set.n_times()).map_err(|e| e.to_string())?;
    let err = (avg - expected).amax();
    if err > 1e-9 {
        return Err(format!("target average deviates from the template by {err:e}"));
    }
    let bank = fit_xdawn(&set, 1).map_err(|e| e.to_string())?;
    let w = bank.filter(0);
    let on: f64 = set
        .channels
        .iter()
        .zip(w.iter())
        .filter(|(c, _)| support.contains(&c.as_str()))
        .map(|(_, v)| v * v)
        .sum();
    let share = on / w.norm_squared();
    if share < 0.8 {
        return Err(format!("top xDAWN filter has {:.1}% energy on the support", 100.0 * share));
    }
    within(
        30.0,
        t0.elapsed(),
        format!("template error {err:.1e}, support energy {:.2}%", 100.0 * share),
    )
}

fn criterion_8() -> Outcome {
    let t0 = Instant::now();
    let mtwlb = vec![88.2, 93.5, 91.6, 97.0, 91.8, 93.8, 93.3, 90.7, 91.4];
    let xdawn = vec![88.0, 93.6, 92.8, 97.0, 91.7, 94.6, 93.2, 90.8, 90.3];
    let a = one_way_anova(&[mtwlb, xdawn]).map_err(|e| e.to_string())?;
    let detail = format!("F({}, {}) = {:.4}, p = {:.4}", a.df_between, a.df_within, a.f, a.p);
    if (a.df_between, a.df_within) != (1, 16) || (a.f - 0.004).abs() > 0.002 || (a.p - 0.95).abs() > 0.02 {
        return Err(detail);
    }
    within(1.0, t0.elapsed(), detail)
}

fn criterion_9(first: &[u8], second: Result<Vec<u8>, String>, elapsed: Duration, limit: f64) -> Outcome {
    let second = second?;
    if first != second {
        let at = first.iter().zip(&second).position(|(a, b)| a != b).unwrap_or(first.len().min(second.len()));
        return Err(format!("report.json differs at byte {at}"));
    }
    within(limit, elapsed, format!("{} identical bytes with 1 and 3 threads", first.len()))
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..8);
    (0..len).map(|_| rng.random_range(b'A'..=b'z') as char).filter(|c| c.is_ascii_alphanumeric()).collect::<String>() + "x"
}

fn random_recording(rng: &mut ChaCha8Rng) -> ContinuousRecording {
    let n_c = rng.random_range(1..6);
    let len = rng.random_range(1..400);
    let channels = (0..n_c).map(|i| format!("{}{i}", random_name(rng))).collect();
    // payload is f32, so only f32-representable values round-trip exactly
    let data = DMatrix::from_fn(n_c, len, |_, _| (gauss(rng) * 50.0) as f32 as f64);
    let mut events: Vec<Event> = (0..rng.random_range(0..20))
        .map(|_| Event {
            sample: rng.random_range(0..len),
            label: if rng.random_bool(0.2) { Label::Target } else { Label::Standard },
            block: rng.random_range(0..5),
            task: rng.random_range(0..3),
        })
        .collect();
    events.sort_by_key(|e| e.sample);
    let rate = [100.0, 250.0, 512.0, 1000.0][rng.random_range(0..4)];
    ContinuousRecording::new(rate, channels, data, events).unwrap()
}

fn random_epochs(rng: &mut ChaCha8Rng) -> EpochSet {
    let n = rng.random_range(0..12);
    let n_c = rng.random_range(1..5);
    let n_t = rng.random_range(1..30);
    EpochSet {
        epochs: (0..n).map(|_| random_matrix(rng, n_c, n_t) * 1e3).collect(),
        labels: (0..n)
            .map(|_| if rng.random_bool(0.5) { Label::Target } else { Label::Standard })
            .collect(),
        rate: rng.random_range(50.0..2000.0),
        window: (-rng.random_range(0.0..0.5), rng.random_range(0.1..2.0)),
        provenance: (0..n)
            .map(|_| Provenance {
                block: rng.random_range(0..100),
                task: rng.random_range(0..10),
                onset: rng.random_range(0..1_000_000),
            })
            .collect(),
        channels: (0..n_c).map(|i| format!("{}{i}", random_name(rng))).collect(),
    }
}

fn positioned(e: &Error) -> bool {
    matches!(e, Error::Format { .. } | Error::Parse { .. })
}

fn criterion_10() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for i in 0..100 {
        let rec = random_recording(&mut rng);
        let path = dir.path().join(format!("rec{i}.json"));
        io::write_recording(&rec, &path).map_err(|e| e.to_string())?;
        let back = io::read_recording(&path).map_err(|e| e.to_string())?;
        if back != rec {
            return Err(format!("recording {i} did not round-trip"));
        }
        let set = random_epochs(&mut rng);
        let bytes = io::encode_epochs(&set).map_err(|e| e.to_string())?;
        let back = io::decode_epochs(&bytes).map_err(|e| e.to_string())?;
        let same_bits = back.epochs.len() == set.epochs.len()
            && back
                .epochs
                .iter()
                .zip(&set.epochs)
                .all(|(a, b)| a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !same_bits || back.labels != set.labels || back.provenance != set.provenance || back.channels != set.channels
            || back.rate.to_bits() != set.rate.to_bits()
            || back.window != set.window
        {
            return Err(format!("epoch set {i} did not round-trip"));
        }

        // corruption: truncated epoch file, damaged magic, flipped label byte
        let cut = rng.random_range(0..bytes.len());
        match io::decode_epochs(&bytes[..cut]) {
            Err(e) if positioned(&e) => {}
            other => return Err(format!("truncated epoch file at {cut}: {other:?}")),
        }
        let mut bad = bytes.clone();
        bad[rng.random_range(0..8)] ^= 0x55;
        match io::decode_epochs(&bad) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => return Err(format!("damaged magic: {other:?}")),
        }
    }

    let rec = random_recording(&mut rng);
    let path = dir.path().join("victim.json");
    io::write_recording(&rec, &path).map_err(|e| e.to_string())?;
    let bin = dir.path().join("victim.bin");
    let payload = std::fs::read(&bin).map_err(|e| e.to_string())?;
    std::fs::write(&bin, &payload[..payload.len() - 3]).map_err(|e| e.to_string())?;
    match io::read_recording(&path) {
        Err(Error::Format { offset, .. }) if offset as usize == payload.len() - 3 => {}
        other => return Err(format!("short payload: {other:?}")),
    }
    std::fs::write(&bin, &payload).map_err(|e| e.to_string())?;
    let header = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    std::fs::write(&path, header.replacen("\"rate\"", "\"rate\" ::", 1)).map_err(|e| e.to_string())?;
    match io::read_recording(&path) {
        Err(e) if positioned(&e) => {}
        other => return Err(format!("malformed header: {other:?}")),
    }
    std::fs::write(&path, &header).map_err(|e| e.to_string())?;
    let events = dir.path().join("victim.events.csv");
    std::fs::write(&events, "sample_index,label,block_id,task_id\n0,target,0,0\n1,maybe,0,0\n").map_err(|e| e.to_string())?;
    match io::read_recording(&path) {
        Err(Error::Parse { line: 3, .. }) => {}
        other => return Err(format!("bad event label: {other:?}")),
    }
    within(5.0, t0.elapsed(), "100 recordings and 100 epoch sets bit-exact; corruption positioned".into())
}

fn report(n: usize, outcome: &Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("criterion {n:>2}: PASS  {detail}");
            true
        }
        Err(detail) => {
            println!("criterion {n:>2}: FAIL  {detail}");
            false
        }
    }
}

/// `RSVP_CRITERIA=7,10` restricts the run to the listed criteria.
fn selected() -> impl Fn(usize) -> bool {
    let only: Option<Vec<usize>> = std::env::var("RSVP_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    move |n| only.as_ref().is_none_or(|o| o.contains(&n))
}

fn main() {
    let wanted = selected();
    let mut ok = true;
    let mut check = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) {
            ok &= report(n, &f());
        }
    };
    check(1, &mut criterion_1);
    check(2, &mut criterion_2);
    check(3, &mut criterion_3);
    check(4, &mut criterion_4);
    check(5, &mut criterion_5);

    let cfg = run_config(42);
    let first_dir = tempfile::tempdir().expect("temp dir");
    let mut first: Option<(Result<Vec<u8>, String>, Duration)> = None;
    let first_run = || {
        let t0 = Instant::now();
        let bytes = run_with_threads(&cfg, first_dir.path(), 1);
        (bytes, t0.elapsed())
    };
    if wanted(6) || wanted(9) {
        first = Some(first_run());
    }
    check(6, &mut || {
        let (bytes, elapsed) = first.as_ref().expect("first run");
        let bytes = bytes.as_ref().map_err(Clone::clone)?;
        let report: EvaluationReport = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        criterion_6(&report, *elapsed)
    });
    check(7, &mut criterion_7);
    check(8, &mut criterion_8);
    check(9, &mut || {
        let (bytes, elapsed) = first.as_ref().expect("first run");
        let bytes = bytes.as_ref().map_err(|e| format!("first run failed: {e}"))?;
        let second_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let t1 = Instant::now();
        let second = run_with_threads(&cfg, second_dir.path(), 3);
        criterion_9(bytes, second, *elapsed + t1.elapsed(), 1200.0)
    });
    check(10, &mut criterion_10);

    if !ok {
        std::process::exit(1);
    }
}
