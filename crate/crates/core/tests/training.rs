use carelu_core::data::{gen_spirals, normalize};
use carelu_core::network::{evaluate, train, Milestone};
use carelu_core::{Checkpoint, LossKind, Network, NetworkSpec, NormalizePolicy, OptimizerKind, TrainConfig};

fn spirals() -> (carelu_core::Dataset, carelu_core::Dataset) {
    let train_set = gen_spirals(60, 1.0, 0.02, 21).unwrap();
    let test_set = gen_spirals(60, 1.0, 0.02, 22).unwrap();
    let (a, b, _) = normalize(&train_set, &test_set, NormalizePolicy::Standardize).unwrap();
    (a, b)
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        optimizer: OptimizerKind::Sgd { lr: 0.1, momentum: 0.9, weight_decay: 5e-4 },
        schedule: vec![Milestone { epoch: epochs / 2, divisor: 5.0 }],
        seed: 4,
    }
}

fn net(act: &str, seed: u64) -> Network {
    Network::from_spec(NetworkSpec::mlp(2, &[24, 24], 2, act.parse().unwrap(), LossKind::CrossEntropy, seed)).unwrap()
}

#[test]
fn every_activation_learns_the_spirals() {
    let (tr, te) = spirals();
    for act in ["relu", "swish", "carelu_e", "carelu_l1", "carelu_c", "bn_carelu_e", "bn_carelu_c"] {
        let mut n = net(act, 1);
        let before = evaluate(&n, &tr).unwrap().loss;
        train(&mut n, &tr, Some(&te), &config(80), |_, _| Ok(())).unwrap();
        let after = evaluate(&n, &tr).unwrap();
        assert!(after.loss < before, "{act}: {before} -> {}", after.loss);
        assert!(after.accuracy.unwrap() > 0.85, "{act}: {:?}", after.accuracy);
    }
}

#[test]
fn cas_parameters_move_during_training() {
    let (tr, _) = spirals();
    let mut n = net("carelu_e", 2);
    let before: Vec<Vec<f64>> = n.params().iter().map(|p| p.to_vec()).collect();
    train(&mut n, &tr, None, &config(10), |_, _| Ok(())).unwrap();
    let info = n.param_info();
    let after = n.params();
    let moved = info
        .iter()
        .zip(before.iter().zip(after))
        .filter(|(i, (b, a))| i.name.contains("alpha") && b.as_slice() != *a)
        .count();
    assert_eq!(moved, 2);
}

#[test]
fn checkpoint_restores_an_identical_network() {
    let (tr, te) = spirals();
    let mut n = net("bn_carelu_l1", 3);
    train(&mut n, &tr, None, &config(5), |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::capture(&n, vec![]).save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap().to_network().unwrap();
    let a = n.forward_eval(&te.features).unwrap();
    let b = restored.forward_eval(&te.features).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(evaluate(&n, &te).unwrap(), evaluate(&restored, &te).unwrap());
}

#[test]
fn training_is_bit_reproducible() {
    let (tr, te) = spirals();
    let run = || {
        let mut n = net("carelu_c", 9);
        let report = train(&mut n, &tr, Some(&te), &config(6), |_, _| Ok(())).unwrap();
        (Checkpoint::capture(&n, vec![]).encode().unwrap(), report.initial, report.epochs, report.snapshot)
    };
    assert_eq!(run(), run());
}
