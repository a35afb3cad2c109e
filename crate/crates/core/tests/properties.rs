use proptest::prelude::*;

use nlscont::asymptotics::{predicted_morse, richardson, scaling_row, CriticalKind};
use nlscont::continuation::{adapt_step, Controls, Problem, StepOutcome};
use nlscont::evolution::{evolve, EvolveOpts};
use nlscont::model::{free_soliton, ModelSpec, PotentialSpec};
use nlscont::stability::{classify, Stability};
use nlscont::Grid;
use num_complex::Complex64;

fn cubic() -> ModelSpec {
    ModelSpec::new(PotentialSpec::zero(), -1.0, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // with the grid stretched along with the soliton the rows are exactly scale free
    #[test]
    fn soliton_scaling_rows_constant(e in 0.2f64..300.0) {
        let m = cubic();
        let n = 801;
        let reference = {
            let g = Grid::new(20.0, n).unwrap();
            scaling_row(&g, &m, &g.sample(|x| free_soliton(2.0, -1.0, 1.0, x)), 1.0)
        };
        let g = Grid::new(20.0 / e.sqrt(), n).unwrap();
        let row = scaling_row(&g, &m, &g.sample(|x| free_soliton(2.0, -1.0, e, x)), e);
        for (a, b) in [(row.s_nl, reference.s_nl), (row.s_q, reference.s_q), (row.s_k, reference.s_k),
                       (row.r_q, reference.r_q), (row.r_k, reference.r_k)] {
            prop_assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn richardson_exact_on_first_order_tail(r in -2.0f64..2.0, c in -5.0f64..5.0, e1 in 1.0f64..100.0, k in 1.1f64..4.0) {
        let e2 = k * e1;
        let l = richardson(e1, r + c / e1, e2, r + c / e2);
        prop_assert!((l - r).abs() < 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn morse_prediction_is_count_plus_maxima(mins in 0usize..4, maxs in 0usize..4) {
        let want = mins + 2 * maxs;
        let mut placement = vec![(CriticalKind::Minimum, mins), (CriticalKind::Maximum, maxs)];
        prop_assert_eq!(predicted_morse(&placement).unwrap(), want);
        placement.push((CriticalKind::Degenerate, 1));
        prop_assert!(predicted_morse(&placement).is_err());
    }

    #[test]
    fn classification_decision_order(mp in 0usize..4, mm in 0usize..3, slope in -1.0f64..1.0, deg: bool) {
        let tol = 1e-6;
        let t = classify(mp, mm, slope, deg, tol).value;
        let n = mp + mm;
        let want = if n >= 2 {
            Stability::Unstable
        } else if deg {
            Stability::Indeterminate
        } else if n == 0 {
            Stability::Stable
        } else if slope.abs() <= tol {
            Stability::Indeterminate
        } else if slope > 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        };
        prop_assert_eq!(t, want);
    }

    #[test]
    fn step_stays_in_bounds(ds in 1e-4f64..1.0, its in 0usize..20) {
        let c = Controls::default();
        let next = adapt_step(ds, StepOutcome::Converged { iterations: its }, &c).unwrap();
        prop_assert!(next >= c.ds_min && next <= c.ds_max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_conserves_charge(a in 0.2f64..2.0, k in -2.0f64..2.0, x0 in -3.0f64..3.0) {
        let p = Problem::new(
            Grid::new(20.0, 400).unwrap(),
            ModelSpec::new(PotentialSpec::double_well(2.0, 2.0, 1.0), -1.0, 2.0).unwrap(),
        )
        .unwrap();
        let u0: Vec<Complex64> = p
            .grid
            .nodes()
            .iter()
            .map(|&x| Complex64::from_polar(a * (-(x - x0) * (x - x0)).exp(), k * x))
            .collect();
        let opts = EvolveOpts { t_end: 2.0, dt: 1e-2, sample_every: 50 };
        let tr = evolve(&p, &u0, &opts, None).unwrap();
        prop_assert!(tr.blow_up.is_none());
        prop_assert!(tr.charge_drift_rate() < 1e-12, "{}", tr.charge_drift_rate());
    }
}
