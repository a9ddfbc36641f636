//! Randomized invariants of the building blocks.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rsvp_core::eval::{auc, auc_trapezoid, stratified_folds};
use rsvp_core::io::{decode_epochs, encode_epochs};
use rsvp_core::linalg::{gen_eig, shrink_covariance, SymMatrix};
use rsvp_core::preprocess::{common_average_reference, resample, ContinuousRecording, EpochSet, Event, Label, Provenance};
use rsvp_core::Error;

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-20i32..20, n).prop_map(|v| v.into_iter().map(|x| x as f64 * 0.25).collect()),
            prop::collection::vec(any::<bool>(), n).prop_map(|mut l| {
                l[0] = true;
                l[1] = false;
                l
            }),
        )
    })
}

fn spd(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let g = DMatrix::from_vec(n, n, v);
        SymMatrix::symmetrize(&g * g.transpose() + DMatrix::identity(n, n) * 0.5)
    })
}

fn epoch_set() -> impl Strategy<Value = EpochSet> {
    (0usize..6, 1usize..4, 1usize..12).prop_flat_map(|(n, n_c, n_t)| {
        (
            prop::collection::vec(prop::collection::vec(any::<f64>(), n_c * n_t), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec((any::<u32>(), any::<u32>(), 0usize..usize::MAX / 2), n),
            1.0f64..5000.0,
            prop::collection::vec("[A-Za-z0-9]{1,6}", n_c),
        )
            .prop_map(move |(data, labels, prov, rate, channels)| EpochSet {
                epochs: data.into_iter().map(|d| DMatrix::from_vec(n_c, n_t, d)).collect(),
                labels: labels
                    .into_iter()
                    .map(|t| if t { Label::Target } else { Label::Standard })
                    .collect(),
                rate,
                window: (-0.1, 0.9),
                provenance: prov
                    .into_iter()
                    .map(|(block, task, onset)| Provenance { block, task, onset })
                    .collect(),
                channels,
            })
    })
}

proptest! {
    #[test]
    fn auc_complement_and_trapezoid((s, l) in scored_labels()) {
        let a = auc(&s, &l).unwrap();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auc(&neg, &l).unwrap() - (1.0 - a)).abs() < 1e-12);
        let flipped: Vec<bool> = l.iter().map(|b| !b).collect();
        prop_assert!((auc(&s, &flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
        prop_assert!((auc_trapezoid(&s, &l).unwrap() - a).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn auc_is_invariant_to_monotone_maps((s, l) in scored_labels(), scale in 0.01f64..100.0, shift in -5.0f64..5.0) {
        let a = auc(&s, &l).unwrap();
        let mapped: Vec<f64> = s.iter().map(|v| (v * scale + shift).tanh() * 3.0 + v.exp()).collect();
        prop_assert!((auc(&mapped, &l).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn car_is_idempotent(data in prop::collection::vec(-100.0f64..100.0, 4 * 20)) {
        let channels = (0..4).map(|i| format!("C{i}")).collect();
        let rec = ContinuousRecording::new(100.0, channels, DMatrix::from_vec(4, 20, data), vec![]).unwrap();
        let once = common_average_reference(&rec).unwrap();
        let twice = common_average_reference(&once).unwrap();
        prop_assert!((&once.data - &twice.data).amax() < 1e-9);
        for t in 0..20 {
            prop_assert!(once.data.column(t).sum().abs() < 1e-9);
        }
    }

    #[test]
    fn gen_eig_solves_the_pencil(a in spd(5), b in spd(5)) {
        let e = gen_eig(&a, &b).unwrap();
        for j in 0..5 {
            let v = e.vector(j);
            let r = a.matrix() * &v - b.matrix() * &v * e.values[j];
            prop_assert!(r.norm() < 1e-8 * (1.0 + e.values[j].abs()) * v.norm().max(1.0));
            // B-orthonormal
            prop_assert!((b.quad(&v) - 1.0).abs() < 1e-8);
        }
        prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn shrinkage_stays_in_unit_interval_and_keeps_trace(a in spd(6), samples in 2usize..500) {
        let s = shrink_covariance(&a, samples);
        prop_assert!((0.0..=1.0).contains(&s.intensity));
        prop_assert!((s.matrix.trace() - a.trace()).abs() < 1e-9 * a.trace());
    }

    #[test]
    fn epoch_files_round_trip(set in epoch_set()) {
        let bytes = encode_epochs(&set).unwrap();
        let back = decode_epochs(&bytes).unwrap();
        prop_assert_eq!(back.labels, set.labels);
        prop_assert_eq!(back.provenance, set.provenance);
        prop_assert_eq!(back.channels, set.channels);
        prop_assert_eq!(back.rate.to_bits(), set.rate.to_bits());
        for (x, y) in back.epochs.iter().zip(&set.epochs) {
            prop_assert!(x.iter().zip(y.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        for cut in [0, bytes.len() / 2, bytes.len().saturating_sub(1)] {
            if cut < bytes.len() {
                let is_format = matches!(decode_epochs(&bytes[..cut]), Err(Error::Format { .. }));
                prop_assert!(is_format);
            }
        }
    }

    #[test]
    fn folds_partition_and_stratify(n1 in 5usize..40, n0 in 5usize..200, k in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<bool> = (0..n1 + n0).map(|i| i < n1).collect();
        let folds = stratified_folds(&labels, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n1 + n0).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &folds {
            let t = f.iter().filter(|&&i| labels[i]).count();
            prop_assert!(t == n1 / k || t == n1 / k + 1);
        }
        prop_assert_eq!(&folds, &stratified_folds(&labels, k, seed).unwrap());
    }

    #[test]
    fn resampled_events_map_by_floor(samples in prop::collection::vec(0usize..1000, 1..20)) {
        let mut sorted = samples.clone();
        sorted.sort_unstable();
        let events = sorted
            .iter()
            .map(|&s| Event { sample: s, label: Label::Standard, block: 0, task: 0 })
            .collect();
        let rec = ContinuousRecording::new(1000.0, vec!["A".into()], DMatrix::zeros(1, 1000), events).unwrap();
        let down = resample(&rec, 250.0).unwrap();
        prop_assert_eq!(down.len(), 250);
        for (e, s) in down.events.iter().zip(&sorted) {
            prop_assert_eq!(e.sample, s / 4);
        }
    }
}
