use std::f64::consts::SQRT_2;

use bilocal_core::inequalities::{bilocal_parameter, chsh_from_table, ij_auto, ChshConfig};
use bilocal_core::lhv::{
    eval_bilocal, eval_local, fit_bilocal, maximize_b_bilocal, maximize_b_local, sample_bilocal, sample_local,
    BilocalModel, LocalModel, SearchConfig, RESPONSES,
};
use bilocal_core::measurements::Scenario;
use bilocal_core::network::{scenario_distribution, OutcomeTable};
use bilocal_core::sampler::seeded_stream;

fn one_hot(arity: usize, b: usize) -> Vec<f64> {
    let mut row = vec![0.0; arity];
    row[b] = 1.0;
    row
}

#[test]
fn deterministic_bilocal_enumeration_caps_at_one() {
    for arity in [4, 3] {
        let mut best = f64::MIN;
        let mut count = 0;
        for fa in RESPONSES {
            for fc in RESPONSES {
                for b in 0..arity {
                    let m = BilocalModel {
                        weights1: vec![1.0],
                        weights2: vec![1.0],
                        alice: vec![fa],
                        bob: vec![one_hot(arity, b)],
                        charlie: vec![fc],
                    };
                    let ij = ij_auto(&eval_bilocal(&m, arity).unwrap()).unwrap();
                    best = best.max(bilocal_parameter(&ij));
                    count += 1;
                }
            }
        }
        assert_eq!(count, 16 * arity);
        assert_eq!(best, 1.0);
    }
}

#[test]
fn deterministic_local_vertices_lie_in_unit_l1_ball() {
    // Mixtures stay in the ball, where Cauchy-Schwarz gives B ≤ √2.
    for arity in [4, 3] {
        let mut corner = false;
        for fa in RESPONSES {
            for fc in RESPONSES {
                for b in 0..arity {
                    let m = LocalModel {
                        weights: vec![1.0],
                        alice: vec![fa],
                        bob: vec![one_hot(arity, b)],
                        charlie: vec![fc],
                    };
                    let ij = ij_auto(&eval_local(&m, arity).unwrap()).unwrap();
                    assert!(ij.i_value.abs() + ij.j_value.abs() <= 1.0 + 1e-15);
                    corner |= ij.i_value.abs() == 1.0 || ij.j_value.abs() == 1.0;
                }
            }
        }
        assert!(corner);
    }
}

#[test]
fn random_bilocal_models_respect_the_bound() {
    for (scenario, seed) in [(Scenario::Fourteen, 1), (Scenario::Thirteen, 2)] {
        let mut rng = seeded_stream(seed, 0);
        let mut worst = 0.0f64;
        for _ in 0..100_000 {
            let m = sample_bilocal(&mut rng, 4, 4, scenario.b_arity());
            let d = eval_bilocal(&m, scenario.b_arity()).unwrap();
            worst = worst.max(bilocal_parameter(&ij_auto(&d).unwrap()));
        }
        assert!(worst <= 1.0 + 1e-9, "{scenario}: {worst}");
    }
}

#[test]
fn bilocal_maximization_reaches_the_bound() {
    for scenario in [Scenario::Fourteen, Scenario::Thirteen] {
        let (model, best) = maximize_b_bilocal(scenario, 4, 4, &SearchConfig::default()).unwrap();
        assert!((0.999..=1.0 + 1e-9).contains(&best), "{scenario}: {best}");
        let d = eval_bilocal(&model, scenario.b_arity()).unwrap();
        assert!((bilocal_parameter(&ij_auto(&d).unwrap()) - best).abs() < 1e-12);
    }
}

#[test]
fn local_maximization_exceeds_bilocal_bound() {
    for scenario in [Scenario::Fourteen, Scenario::Thirteen] {
        let (model, best) = maximize_b_local(scenario, 8, &SearchConfig::default()).unwrap();
        assert!((1.41..=SQRT_2 + 1e-6).contains(&best), "{scenario}: {best}");
        let d = eval_local(&model, scenario.b_arity()).unwrap();
        assert!((bilocal_parameter(&ij_auto(&d).unwrap()) - best).abs() < 1e-12);
    }
}

#[test]
fn search_is_reproducible() {
    let cfg = SearchConfig { restarts: 8, iterations: 50, seed: 17 };
    let a = maximize_b_bilocal(Scenario::Fourteen, 2, 3, &cfg).unwrap();
    let b = maximize_b_bilocal(Scenario::Fourteen, 2, 3, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn local_models_never_violate_event_ready_chsh() {
    let mut rng = seeded_stream(3, 0);
    let labels = ["00", "01", "10", "11"];
    for _ in 0..2000 {
        let m = sample_local(&mut rng, 6, 4);
        let d = eval_local(&m, 4).unwrap();
        for herald in labels {
            for signs in ChshConfig::sign_patterns() {
                let cfg = ChshConfig::new(herald, signs).unwrap();
                if let Ok(s) = chsh_from_table(&d, &cfg) {
                    assert!(s.abs() <= 2.0 + 1e-9, "{s}");
                }
            }
        }
    }
}

#[test]
fn fit_recovers_a_realizable_target() {
    let mut rng = seeded_stream(4, 0);
    let generator = sample_bilocal(&mut rng, 2, 2, 4);
    let target = eval_bilocal(&generator, 4).unwrap();
    let (model, distance) =
        fit_bilocal(&target, 4, 4, &SearchConfig { restarts: 16, ..SearchConfig::default() }).unwrap();
    assert!(distance <= 1e-6, "{distance}");
    let fitted = eval_bilocal(&model, 4).unwrap();
    let direct: f64 = fitted.table().iter().zip(target.table()).map(|(p, t)| (p - t) * (p - t)).sum();
    assert!((direct.sqrt() - distance).abs() < 1e-12);
}

#[test]
fn fit_below_threshold_is_feasible() {
    let target = scenario_distribution(Scenario::Fourteen, 0.45, 1.0, 1.0).unwrap();
    assert!(bilocal_parameter(&ij_auto(&target).unwrap()) < 1.0);
    let (_, distance) = fit_bilocal(&target, 8, 8, &SearchConfig { restarts: 16, ..SearchConfig::default() }).unwrap();
    assert!(distance <= 1e-3, "{distance}");
}

#[test]
fn fit_of_ideal_correlations_fails() {
    let target = scenario_distribution(Scenario::Fourteen, 1.0, 1.0, 1.0).unwrap();
    assert!(target.b_arity() == 4);
    let (_, distance) = fit_bilocal(&target, 8, 8, &SearchConfig { restarts: 16, ..SearchConfig::default() }).unwrap();
    assert!(distance >= 1e-3, "{distance}");
}
