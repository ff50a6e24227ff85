use super::*;
use crate::gcov::TransformSet;
use crate::models::{DarSpec, ErrorDist};

fn simulate(spec: ModelSpec, dist: ErrorDist, t: usize, seed: u64) -> Vec<f64> {
    spec.simulate(&dist, t, seed).unwrap().0.values().to_vec()
}

fn mar_opts(seed: u64) -> MarSelectOptions {
    MarSelectOptions { max_p: 4, level: 0.05, constrained: false, seed }
}

/// Replays the decision rules on the trail.
fn check_consistent(rep: &SelectionReport) {
    assert!(!rep.trail.is_empty());
    for e in &rep.trail {
        if e.decision != Decision::Failed {
            assert!(e.theta_hat.is_some());
        }
        if e.decision == Decision::SidesSatisfied {
            assert!(e.roots.as_ref().unwrap().satisfied());
        }
    }
    for o in rep.chosen_orders() {
        assert!(rep.trail.iter().any(|e| e.order == o
            && matches!(e.decision, Decision::SidesSatisfied | Decision::IidAccepted)));
    }
}

#[test]
fn causal_ar1_is_selected() {
    let cfg = GcovConfig::new(10, TransformSet::powers(2)).with_starts(6);
    let mut hits = 0;
    for seed in 0..10 {
        let y = simulate(ModelSpec::Mar(MarSpec::new(vec![0.6], vec![]).unwrap()), ErrorDist::student_t(5.0), 500, seed);
        let rep = select_mar(&y, &cfg, &mar_opts(seed)).unwrap();
        check_consistent(&rep);
        hits += (rep.chosen_orders() == vec![ModelOrder::mar(1, 0)]) as usize;
    }
    assert!(hits >= 8, "{hits}/10");
}

#[test]
fn cauchy_mar11_is_selected() {
    let cfg = GcovConfig::new(3, TransformSet::heavy_tailed()).with_starts(10);
    let y = simulate(ModelSpec::Mar(MarSpec::new(vec![0.7], vec![0.2]).unwrap()), ErrorDist::cauchy(), 500, 3);
    let rep = select_mar(&y, &cfg, &mar_opts(3)).unwrap();
    check_consistent(&rep);
    assert_eq!(rep.p_total, Some(2));
    assert_eq!(rep.chosen_orders(), vec![ModelOrder::mar(1, 1)], "{:#?}", rep.trail);
    let again = select_mar(&y, &cfg, &mar_opts(3)).unwrap();
    assert_eq!(again, rep);
}

#[test]
fn constrained_split_respects_sides() {
    let cfg = GcovConfig::new(3, TransformSet::heavy_tailed()).with_starts(6);
    let y = simulate(ModelSpec::Mar(MarSpec::new(vec![0.7], vec![0.2]).unwrap()), ErrorDist::cauchy(), 500, 5);
    let rep = select_mar(&y, &cfg, &MarSelectOptions { constrained: true, ..mar_opts(5) }).unwrap();
    check_consistent(&rep);
    assert!(rep.chosen_orders().contains(&ModelOrder::mar(1, 1)), "{:#?}", rep);
}

#[test]
fn dar_ladder_is_bounded_and_deterministic() {
    let cfg = GcovConfig::new(3, TransformSet::powers(2)).with_starts(4);
    let d = DarSpec::new(vec![0.5], 1.0, vec![0.4]).unwrap();
    let y = simulate(ModelSpec::Dar(d), ErrorDist::student_t(5.0), 600, 2);
    let opts = DarSelectOptions { max_order: 3, level: 0.05, b: 99, seed: 9 };
    let rep = select_dar(&y, &cfg, &opts).unwrap();
    check_consistent(&rep);
    if let Some(pp) = rep.p_total {
        let step2 = rep.trail.iter().filter(|e| e.step != Step::Order).count();
        assert!(step2 <= 2 * (pp - 1));
        assert_eq!(rep.trail.iter().filter(|e| e.step == Step::Order).count(), pp);
    }
    assert_eq!(select_dar(&y, &cfg, &opts).unwrap(), rep);
    assert!(select_dar(&y, &cfg, &DarSelectOptions { b: 10, ..opts }).is_err());
}
