use proptest::prelude::*;
use skillstream::policy::{masked_skill_logits, MetaController, MetaRow, SkillConfig, SkillPolicy, TrainingRow};

fn logits_and_width() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (1usize..=64).prop_flat_map(|k_max| {
        (
            proptest::collection::vec(-50.0f64..50.0, k_max),
            1..=k_max,
        )
    })
}

fn first_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn mask_is_a_distribution_on_live_skills((z, k_c) in logits_and_width()) {
        let p = masked_skill_logits(&z, k_c).unwrap();
        prop_assert_eq!(p.len(), z.len());
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(p[k_c..].iter().all(|&x| x == 0.0));
        prop_assert!(p[..k_c].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn widening_only_switches_to_a_strictly_better_skill((z, k1) in logits_and_width(), extra in 0usize..64) {
        let k2 = (k1 + extra).min(z.len());
        let before = first_argmax(&masked_skill_logits(&z, k1).unwrap());
        let after = first_argmax(&masked_skill_logits(&z, k2).unwrap());
        if after != before {
            prop_assert!(after >= k1);
            prop_assert!(z[after] > z[before]);
        }
    }
}

#[test]
fn masked_logits_of_minus_infinity_still_normalize() {
    let z = vec![f64::NEG_INFINITY, 0.0, 3.0];
    let p = masked_skill_logits(&z, 2).unwrap();
    assert_eq!(p, vec![0.0, 1.0, 0.0]);
}

fn row(i: usize, x: &[f64], action: Vec<f64>) -> TrainingRow {
    TrainingRow {
        task_id: "t".into(),
        demo_id: "d".into(),
        t: i as u64,
        feature: x[..2].to_vec(),
        proprio: x[2..3].to_vec(),
        subgoal: x[3..].to_vec(),
        action,
    }
}

fn training_set() -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    proptest::collection::vec(
        (
            proptest::collection::vec(-1.0f64..1.0, 5),
            proptest::collection::vec(-1.0f64..1.0, 3),
        ),
        6..40,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn skill_output_moves_linearly_with_small_perturbations(
        data in training_set(),
        query in proptest::collection::vec(-1.0f64..1.0, 5),
        dir in proptest::collection::vec(-1.0f64..1.0, 5),
    ) {
        let rows = data.iter().enumerate().map(|(i, (x, a))| row(i, x, a.clone())).collect();
        let policy = SkillPolicy::train(0, rows, SkillConfig::default(), 1).unwrap();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        // stay clear of training points, where the exact-match rule takes over
        let min_gap = data
            .iter()
            .map(|(x, _)| x.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(min_gap > 1e-2);

        let at = |eps: f64| {
            let q: Vec<f64> = query.iter().zip(&dir).map(|(v, d)| v + eps * d / norm).collect();
            policy.predict(&q[..2], &q[2..3], &q[3..]).unwrap()
        };
        let base = at(0.0);
        let change = |eps: f64| at(eps).iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (big, small) = (change(1e-6), change(1e-7));
        prop_assert!(small <= 0.2 * big + 1e-12, "change {small} at 1e-7 vs {big} at 1e-6");
    }
}

#[test]
fn meta_controller_mask_only_widens() {
    let rows = |label: usize| {
        vec![MetaRow {
            q: vec![label as f64, 0.0],
            label,
            subgoal: vec![0.0],
        }]
    };
    let mut meta = MetaController::new(8, 1.0);
    meta.fit(rows(0), 3).unwrap();
    meta.fit(rows(2), 5).unwrap();
    assert!(meta.fit(rows(0), 4).is_err());
    assert_eq!(meta.k_c, 5);
    let d = meta.predict(&[2.0], &[0.0], &[]).unwrap();
    assert_eq!(d.skill, 2);
    assert!(d.probabilities[5..].iter().all(|&p| p == 0.0));
}
