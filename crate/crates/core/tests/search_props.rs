mod common;

use common::{small_config, two_communities};
use linknas::rng::{stream, Stream};
use linknas::search::{
    concrete_weights, draw_open_uniform, retrain, sample_architecture, search, temperature, train_fixed, ArchParams,
};
use linknas::supernet::{Supernet, TaskKind};
use linknas::tasks::{NodeTask, Task};
use linknas::tensor::{Tape, Tensor};
use proptest::prelude::*;

fn node_task(seed: u64) -> NodeTask {
    let g = two_communities(8, seed);
    let train = (0..16).filter(|i| i % 4 < 2).collect();
    let valid = (0..16).filter(|i| i % 4 == 2).collect();
    let test = (0..16).filter(|i| i % 4 == 3).collect();
    NodeTask::with_split(&g, &small_config(TaskKind::NodeClassification), train, valid, test).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sampled_theta_is_on_the_open_simplex(
        logits in proptest::collection::vec(-3.0f64..3.0, 1..6),
        tau in 0.1f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut tape = Tape::new();
        let l = tape.param(Tensor::vector(logits));
        let (_, theta) = sample_architecture(&mut tape, &[l], tau, &mut stream(seed, Stream::Sampling)).unwrap();
        let total: f64 = theta[0].iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(theta[0].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn lower_temperature_sharpens(
        logits in proptest::collection::vec(-3.0f64..3.0, 2..6),
        seed in any::<u64>(),
    ) {
        let mut rng = stream(seed, Stream::Sampling);
        let u: Vec<f64> = logits.iter().map(|_| draw_open_uniform(&mut rng)).collect();
        let mut last = 0.0;
        for tau in [5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.01] {
            let m = concrete_weights(&logits, &u, tau).unwrap().into_iter().fold(0.0, f64::max);
            prop_assert!(m >= last - 1e-15, "max {m} fell below {last} at tau {tau}");
            last = m;
        }
    }

    #[test]
    fn derivation_ignores_positive_rescaling(
        alpha in proptest::collection::vec(proptest::collection::vec(0.01f64..10.0, 1..5), 1..6),
        c in 1e-3f64..1e3,
    ) {
        let a = ArchParams::from_alpha(&alpha).unwrap();
        let scaled: Vec<Vec<f64>> = alpha.iter().map(|s| s.iter().map(|x| x * c).collect()).collect();
        prop_assert_eq!(a.derive(), ArchParams::from_alpha(&scaled).unwrap().derive());
    }

    #[test]
    fn temperature_decreases(t0 in 0.2f64..5.0, ratio in 0.01f64..0.99, epochs in 1usize..50) {
        let tf = t0 * ratio;
        for e in 1..epochs {
            prop_assert!(temperature(e, epochs, t0, tf) < temperature(e - 1, epochs, t0, tf));
        }
        prop_assert_eq!(temperature(0, epochs, t0, tf), t0);
    }
}

#[test]
fn limiting_frequency_follows_alpha() {
    let log_alpha = [2f64.ln(), 0.0, 0.0];
    let mut rng = stream(0, Stream::Sampling);
    let mut counts = [0usize; 3];
    let n = 10_000;
    for _ in 0..n {
        let u: Vec<f64> = (0..3).map(|_| draw_open_uniform(&mut rng)).collect();
        let theta = concrete_weights(&log_alpha, &u, 0.05).unwrap();
        counts[linknas::supernet::argmax(&theta)] += 1;
    }
    for (c, p) in counts.iter().zip([0.5, 0.25, 0.25]) {
        assert!((*c as f64 / n as f64 - p).abs() <= 0.03, "{counts:?}");
    }
}

#[test]
fn search_logs_every_epoch_and_moves_alpha() {
    let task = node_task(0);
    let cfg = small_config(TaskKind::NodeClassification);
    let net = Supernet::new(task.net_spec(), &mut stream(0, Stream::Init)).unwrap();
    let out = search(&task, net, &cfg.search_config().unwrap(), 0).unwrap();
    assert_eq!(out.log.records.len(), cfg.search_epochs);
    for (e, r) in out.log.records.iter().enumerate() {
        assert_eq!(r.epoch, e);
        assert!(r.alpha.iter().flatten().all(|&a| a > 0.0 && a.is_finite()));
        for t in &r.theta {
            assert!((t.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
    // after the first epoch some slot has left the uniform start
    assert!(out.log.records[0].alpha.iter().flatten().any(|&a| a != 1.0));
    // the derived architecture is the argmax of the best snapshot
    let idx = out.architecture.indices_in(out.supernet.slots()).unwrap();
    assert_eq!(idx, out.best_alpha.derive());
}

#[test]
fn search_is_deterministic_per_seed() {
    let task = node_task(1);
    let cfg = small_config(TaskKind::NodeClassification);
    let run = |seed| {
        let net = Supernet::new(task.net_spec(), &mut stream(seed, Stream::Init)).unwrap();
        search(&task, net, &cfg.search_config().unwrap(), seed).unwrap().log.to_jsonl().unwrap()
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn darts_mode_with_frozen_alpha_repeats_theta() {
    let task = node_task(2);
    let mut cfg = small_config(TaskKind::NodeClassification);
    cfg.ablations = vec!["darts_mode".into()];
    let mut sc = cfg.search_config().unwrap();
    assert!(sc.darts);
    sc.arch_lr = Some(0.0);
    let net = Supernet::new(task.net_spec(), &mut stream(0, Stream::Init)).unwrap();
    let log = search(&task, net, &sc, 0).unwrap().log;
    for r in &log.records {
        assert_eq!(r.theta, log.records[0].theta);
        for t in &r.theta {
            assert!(t.iter().all(|&x| x == t[0]), "uniform alpha gives uniform theta: {t:?}");
        }
    }
}

#[test]
fn retrain_is_plain_training_of_a_fresh_child() {
    let task = node_task(3);
    let cfg = small_config(TaskKind::NodeClassification);
    let spec = task.net_spec();
    let net = Supernet::new(spec.clone(), &mut stream(0, Stream::Init)).unwrap();
    let arch = search(&task, net, &cfg.search_config().unwrap(), 0).unwrap().architecture;
    let a = retrain(&task, &spec, &arch, &cfg.retrain_config(), 7).unwrap();
    let child = Supernet::child(spec, &arch, &mut stream(7, Stream::RetrainInit)).unwrap();
    let b = train_fixed(&task, child, &cfg.retrain_config(), 7).unwrap();
    assert_eq!(a.net, b.net);
    assert_eq!(a.val_curve, b.val_curve);
    let best = a.val_curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.val_curve[a.best_epoch], best);
    // the first epoch reaching the best score is kept
    assert!(a.val_curve[..a.best_epoch].iter().all(|&v| v < best));
}

#[test]
fn early_stopping_honours_patience() {
    let task = node_task(4);
    let mut cfg = small_config(TaskKind::NodeClassification);
    cfg.retrain_epochs = 200;
    cfg.patience = 3;
    let spec = task.net_spec();
    let net = Supernet::new(spec.clone(), &mut stream(0, Stream::Init)).unwrap();
    let arch = search(&task, net, &cfg.search_config().unwrap(), 0).unwrap().architecture;
    let out = retrain(&task, &spec, &arch, &cfg.retrain_config(), 0).unwrap();
    assert!(out.val_curve.len() <= out.best_epoch + 1 + cfg.patience);
    assert!(out.val_curve.len() < cfg.retrain_epochs);
}
