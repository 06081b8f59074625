use efkd_core::schedules::{checkpoint_epochs, lr_at, ScheduleKind, ScheduleSpec};
use proptest::prelude::*;

fn snapshot() -> impl Strategy<Value = ScheduleSpec> {
    (1e-4f64..1.0, 1usize..12, 1usize..120, 1usize..6).prop_filter_map("cycles fit the horizon", |(a, m, e, ipe)| {
        ScheduleSpec::new(ScheduleKind::SnapshotCosine { alpha0: a, cycles: m }, e, ipe).ok()
    })
}

fn fge() -> impl Strategy<Value = ScheduleSpec> {
    (0.05f64..0.95, 1e-4f64..1e-1, 0.01f64..0.99, 1usize..9, 2usize..120, 1usize..5).prop_map(
        |(frac, a1, ratio, c, e, ipe)| {
            let kind = ScheduleKind::Fge {
                pretrain_fraction: frac,
                alpha1: a1,
                alpha2: a1 * ratio,
                cycle_epochs: c,
            };
            ScheduleSpec::new(kind, e, ipe).unwrap()
        },
    )
}

/// Rate at the last iteration of each epoch.
fn per_epoch(spec: &ScheduleSpec) -> Vec<f64> {
    (1..=spec.total_epochs())
        .map(|e| lr_at(spec, e * spec.iterations_per_epoch()).unwrap())
        .collect()
}

fn is_local_min(rates: &[f64], epoch: usize) -> bool {
    let i = epoch - 1;
    (i == 0 || rates[i] <= rates[i - 1]) && (i + 1 == rates.len() || rates[i] <= rates[i + 1])
}

proptest! {
    #[test]
    fn snapshot_is_periodic_positive_and_bounded(spec in snapshot()) {
        let ScheduleKind::SnapshotCosine { alpha0, .. } = spec.kind() else { unreachable!() };
        let len = spec.cycle_iterations().unwrap();
        for t in 1..=spec.horizon() {
            let lr = lr_at(&spec, t).unwrap();
            prop_assert!(lr > 0.0 && lr <= alpha0);
            if (t - 1) % len == 0 {
                prop_assert_eq!(lr, alpha0);
            }
            if t + len <= spec.horizon() {
                prop_assert_eq!(lr, lr_at(&spec, t + len).unwrap());
            }
        }
    }

    #[test]
    fn snapshot_checkpoints_sit_at_sampled_minima(
        a in 1e-3f64..1.0, m in 1usize..10, cycle_epochs in 1usize..15, ipe in 1usize..5,
    ) {
        // whole-epoch cycles
        let spec = ScheduleSpec::new(ScheduleKind::SnapshotCosine { alpha0: a, cycles: m }, m * cycle_epochs, ipe).unwrap();
        let rates = per_epoch(&spec);
        let policy = checkpoint_epochs(&spec);
        prop_assert_eq!(policy.len(), m);
        for &e in policy.epochs() {
            prop_assert!(is_local_min(&rates, e), "epoch {} of {:?}", e, rates);
        }
    }

    #[test]
    fn fge_stays_in_band_and_starts_its_wave_at_alpha1(spec in fge()) {
        let ScheduleKind::Fge { alpha1, alpha2, cycle_epochs, .. } = spec.kind() else { unreachable!() };
        let pretrain = spec.pretrain_epochs().unwrap() * spec.iterations_per_epoch();
        for t in 1..=spec.horizon() {
            let lr = lr_at(&spec, t).unwrap();
            prop_assert!(lr >= alpha2 && lr <= alpha1, "{} outside band", lr);
            if t <= pretrain {
                prop_assert_eq!(lr, alpha1);
            }
        }
        if pretrain < spec.horizon() {
            // one iteration into the wave the rate has moved by at most one step of the slope
            let step = 2.0 * (alpha1 - alpha2) / (cycle_epochs * spec.iterations_per_epoch()) as f64;
            prop_assert!(alpha1 - lr_at(&spec, pretrain + 1).unwrap() <= step + 1e-15);
        }
        let rates = per_epoch(&spec);
        let p = spec.pretrain_epochs().unwrap();
        for (k, &e) in checkpoint_epochs(&spec).epochs().iter().enumerate() {
            prop_assert_eq!(e, (2 * p + (2 * k + 1) * cycle_epochs).div_ceil(2));
            prop_assert!(is_local_min(&rates, e));
            if cycle_epochs % 2 == 0 {
                prop_assert_eq!(rates[e - 1], alpha2);
            }
        }
    }

    #[test]
    fn out_of_range_iterations_are_rejected(spec in snapshot()) {
        prop_assert!(lr_at(&spec, 0).is_err());
        prop_assert!(lr_at(&spec, spec.horizon() + 1).is_err());
    }
}
