use proptest::prelude::*;

use placement_core::engine::{build_form, select_max_information, SelectionMode};
use placement_core::ims::{Choice, CompetenceDefinition, ItemDefinition};
use placement_core::irt::{
    estimate_ability, item_information, newton_update, prob_correct, prob_incorrect, score_gradient, total_information,
    EstimationConfig, EstimationStatus, ItemParameters, Response,
};
use placement_core::simulation::{evenly_spaced_bank, run_recovery, SimulationSpec};
use placement_core::{fixtures, Execution};

fn item() -> impl Strategy<Value = ItemParameters> {
    (0.5..=2.0f64, -2.5..=2.5f64).prop_map(|(a, b)| ItemParameters::new(a, b).unwrap())
}

fn mixed_pattern() -> impl Strategy<Value = Vec<Response>> {
    proptest::collection::vec((item(), any::<bool>()), 5..=15)
        .prop_filter("mixed responses", |v| v.iter().any(|(_, u)| *u) && v.iter().any(|(_, u)| !*u))
        .prop_map(|v| v.into_iter().map(|(i, u)| Response::new(i, u)).collect())
}

proptest! {
    #[test]
    fn probability_increases_with_ability(it in item(), t in -5.0..5.0f64, d in 0.01..2.0f64) {
        prop_assert!(prob_correct(t + d, &it).unwrap() > prob_correct(t, &it).unwrap());
    }

    #[test]
    fn complement_and_symmetry(it in item(), d in -4.0..4.0f64) {
        let b = it.difficulty();
        let p = prob_correct(b + d, &it).unwrap();
        prop_assert!((p + prob_incorrect(b + d, &it).unwrap() - 1.0).abs() < 1e-15);
        prop_assert!((p + prob_correct(b - d, &it).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifting_ability_and_difficulty_together(it in item(), t in -3.0..3.0f64, c in -2.0..2.0f64) {
        let shifted = ItemParameters::new(it.discrimination(), it.difficulty() + c).unwrap();
        let (p, q) = (prob_correct(t, &it).unwrap(), prob_correct(t + c, &shifted).unwrap());
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn information_peaks_at_the_difficulty(it in item(), d in 0.05..3.0f64) {
        let a = it.discrimination();
        let peak = item_information(it.difficulty(), &it).unwrap();
        prop_assert!((peak - a * a / 4.0).abs() < 1e-12);
        prop_assert!(item_information(it.difficulty() + d, &it).unwrap() < peak);
    }

    #[test]
    fn test_information_is_additive(r in mixed_pattern(), t in -3.0..3.0f64) {
        let total = total_information(t, &r).unwrap();
        let parts: f64 = r.iter().map(|x| item_information(t, &x.item).unwrap()).sum();
        prop_assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn trace_rows_are_consistent(r in mixed_pattern(), t0 in -2.0..2.0f64) {
        let est = estimate_ability(&r, &EstimationConfig::default().with_theta_initial(t0)).unwrap();
        for row in &est.trace {
            let (proposal, again) = newton_update(row.theta_s, &r).unwrap();
            prop_assert_eq!(&again.cells, &row.cells);
            prop_assert!((row.numerator_sum - score_gradient(row.theta_s, &r).unwrap()).abs() < 1e-12);
            prop_assert!((row.denominator_sum - total_information(row.theta_s, &r).unwrap()).abs() < 1e-12);
            prop_assert_eq!(proposal, row.proposal());
        }
        if est.status == EstimationStatus::Converged {
            let n = est.trace.len();
            prop_assert!((est.trace[n - 1].theta_s - est.trace[n - 2].theta_s).abs() < 1e-5);
        }
    }

    #[test]
    fn estimate_ignores_response_order(r in mixed_pattern(), rotate in 0usize..15) {
        let config = EstimationConfig::default();
        let mut shuffled = r.clone();
        shuffled.reverse();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        let a = estimate_ability(&r, &config).unwrap();
        let b = estimate_ability(&shuffled, &config).unwrap();
        prop_assert!((a.theta - b.theta).abs() < 1e-9);
    }

    #[test]
    fn converged_estimate_zeroes_the_gradient(r in mixed_pattern()) {
        let est = estimate_ability(&r, &EstimationConfig::default()).unwrap();
        if est.status == EstimationStatus::Converged && est.theta.abs() < 3.0 {
            let g = score_gradient(est.theta, &r).unwrap();
            prop_assert!(g.abs() < 1e-4 * total_information(est.theta, &r).unwrap().max(1.0), "gradient {}", g);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rmse_is_at_least_the_absolute_bias(seed in any::<u64>(), items in 5usize..30) {
        let spec = SimulationSpec {
            true_thetas: vec![-1.5, 0.0, 1.5],
            replications: 20,
            bank: evenly_spaced_bank(items, -2.5, 2.5, 1.0).unwrap(),
            execution: Execution::Sequential,
            ..SimulationSpec::standard(seed)
        };
        for row in run_recovery(&spec).unwrap().rows {
            if row.finite > 0 {
                prop_assert!(row.rmse + 1e-12 >= row.bias.abs());
            }
        }
    }
}

fn bank_item(i: usize, b: f64, importance: f64) -> ItemDefinition {
    ItemDefinition {
        id: format!("i{i:02}"),
        body: String::new(),
        choices: vec![
            Choice { id: "A".into(), text: String::new() },
            Choice { id: "B".into(), text: String::new() },
        ],
        correct_choice: "A".into(),
        scale: ItemParameters::new(1.0, b).unwrap(),
        importance,
        element_ref: "sql-create".into(),
        competence_ref: "sql".into(),
    }
}

fn sql_competence() -> CompetenceDefinition {
    fixtures::repository().unwrap().competence("sql").unwrap().clone()
}

proptest! {
    #[test]
    fn fixed_form_takes_the_most_important_items_easiest_first(
        spec in proptest::collection::vec((-2.5..2.5f64, 0.0..=1.0f64), 30)
    ) {
        let bank: Vec<ItemDefinition> = spec.iter().enumerate().map(|(i, (b, w))| bank_item(i, *b, *w)).collect();
        let form = build_form(&sql_competence(), &bank, SelectionMode::FixedByImportance, 0.0).unwrap();
        prop_assert_eq!(form.len(), 20);
        // oracle: rank by (importance desc, id asc), keep 20, order by (b asc, id asc)
        let mut ranked: Vec<&ItemDefinition> = bank.iter().collect();
        ranked.sort_by(|x, y| y.importance.total_cmp(&x.importance).then(x.id.cmp(&y.id)));
        let mut kept: Vec<&ItemDefinition> = ranked[..20].to_vec();
        kept.sort_by(|x, y| x.scale.difficulty().total_cmp(&y.scale.difficulty()).then(x.id.cmp(&y.id)));
        let got: Vec<&str> = form.iter().map(|i| i.id.as_str()).collect();
        let want: Vec<&str> = kept.iter().map(|i| i.id.as_str()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn adaptive_pick_is_an_information_argmax(
        bs in proptest::collection::vec(-2.5..2.5f64, 2..30),
        theta in -3.0..3.0f64,
        used in proptest::collection::vec(any::<bool>(), 30),
    ) {
        let bank: Vec<ItemDefinition> = bs.iter().enumerate().map(|(i, b)| bank_item(i, *b, 1.0)).collect();
        let refs: Vec<&ItemDefinition> = bank.iter().collect();
        let served: Vec<String> = bank.iter().zip(&used).filter(|(_, u)| **u).map(|(i, _)| i.id.clone()).collect();
        let pick = select_max_information(theta, &refs, &served);
        let best = bank
            .iter()
            .filter(|i| !served.contains(&i.id))
            .map(|i| item_information(theta, &i.scale).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        match pick {
            None => prop_assert_eq!(served.len(), bank.len()),
            Some(p) => {
                prop_assert!(!served.contains(&p.id));
                prop_assert_eq!(item_information(theta, &p.scale).unwrap(), best);
            }
        }
    }
}
