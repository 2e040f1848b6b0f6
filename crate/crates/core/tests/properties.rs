use num_complex::Complex64;
use proptest::prelude::*;

use zeno_core::config::RunConfig;
use zeno_core::experiment::{MeasurementSchedule, ScheduleFamily};
use zeno_core::grid::{Grid, Representation, WaveFunction};
use zeno_core::measurement::{measure_nonselective, split_by_sign, BranchEnsemble};

fn state(grid: &Grid, parts: &[(f64, f64)]) -> WaveFunction {
    let amps = parts.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
    WaveFunction::new(grid, amps, Representation::Position).unwrap()
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_and_round_trip(parts in amplitudes(128), hw in 1.0f64..50.0) {
        let grid = Grid::new(hw, 128).unwrap();
        let psi = state(&grid, &parts);
        prop_assume!(psi.norm_sq() > 0.0);
        let mom = psi.to_momentum().unwrap();
        prop_assert!((mom.norm_sq() - psi.norm_sq()).abs() <= 1e-12 * psi.norm_sq());
        let back = mom.into_position();
        prop_assert!(back.distance(&psi).unwrap() <= 1e-12 * psi.norm_sq().sqrt());
        let integral: f64 = psi.momentum_density().iter().sum::<f64>() * grid.dkappa();
        prop_assert!((integral - psi.norm_sq()).abs() <= 1e-12 * psi.norm_sq());
    }

    #[test]
    fn channel_is_complete(parts in amplitudes(64)) {
        let grid = Grid::new(10.0, 64).unwrap();
        let psi = state(&grid, &parts);
        let (plus, minus) = split_by_sign(&psi);
        prop_assert!((plus.norm_sq() + minus.norm_sq() - psi.norm_sq()).abs() <= 1e-14 * psi.norm_sq().max(1.0));
        prop_assert_eq!(plus.inner(&minus).unwrap(), Complex64::default());
        let mom = psi.to_momentum().unwrap();
        for ((a, b), c) in plus.amplitudes().iter().zip(minus.amplitudes()).zip(mom.amplitudes()) {
            prop_assert_eq!(a + b, *c);
        }
        let ens = measure_nonselective(measure_nonselective(BranchEnsemble::pure(psi.clone()), 0.0), 0.0);
        prop_assert_eq!(ens.branches.len(), 4);
        prop_assert!((ens.total_probability() - psi.norm_sq()).abs() <= 1e-13 * psi.norm_sq().max(1.0));
    }

    #[test]
    fn schedules_are_well_formed(n in 1usize..200, t1 in 0.05f64..2.0, span in 0.1f64..3.0, tail in 0.05f64..2.0) {
        let tau_max = t1 + span + tail;
        for family in [ScheduleFamily::Equispaced, ScheduleFamily::Concentrated { tau1: t1, tau2: t1 + span }] {
            let s = family.schedule(n, tau_max).unwrap();
            prop_assert_eq!(s.len(), n);
            prop_assert_eq!(*s.times().last().unwrap(), tau_max);
            prop_assert!(s.times().windows(2).all(|w| w[1] > w[0]));
            prop_assert!(s.times()[0] > 0.0);
            let total: f64 = s.intervals().iter().sum();
            prop_assert!((total - tau_max).abs() < 1e-12);
        }
        let eq = MeasurementSchedule::equispaced(n, tau_max).unwrap();
        prop_assert!(eq.intervals().iter().all(|d| (d - tau_max / n as f64).abs() < 1e-12));
    }

    #[test]
    fn config_round_trips(
        kappa0 in 0.5f64..10.0,
        v0 in 0.0f64..3.0,
        xi0 in -12.0f64..-6.0,
        pow in 6u32..13,
        n in 1usize..20,
        substep in 1e-4f64..1e-2,
        prune in 0.0f64..1e-3,
        concentrated in any::<bool>(),
    ) {
        let mut cfg = RunConfig {
            kappa0,
            v0,
            xi0,
            n_points: 1 << pow,
            n_measurements: n,
            substep,
            prune,
            ..RunConfig::fig1()
        };
        if concentrated {
            cfg.schedule = ScheduleFamily::Concentrated { tau1: 1.0, tau2: 4.5 };
        }
        prop_assume!(cfg.validate().is_ok());
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
