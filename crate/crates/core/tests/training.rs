mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ttn::ensemble::{evaluate, predict, train_one_vs_all, BinaryClassifier, ClassJob, Classifier, Ensemble};
use ttn::feature::{feature_vector, vectorize_image, FeatureConfig, VectorizedImage};
use ttn::model::{TtnLayout, TtnModel};
use ttn::tensor::{orthonormalize_rows, DenseTensor};
use ttn::trainer::{
    cost, down_pass, environment, train, train_observed, up_pass, update_tensor, EnvironmentTensor, TrainConfig,
    TrainingSet, NO, YES,
};
use ttn::{par, Dataset};

fn sweeps(n: usize) -> TrainConfig {
    TrainConfig {
        max_sweeps: n,
        cost_tolerance: 1e-14,
        ..TrainConfig::default()
    }
}

#[test]
fn single_sample_is_fitted_exactly() {
    for (d, chi) in [(2, 2), (3, 3)] {
        let images = random_images(1, 4, d, 3);
        let set = TrainingSet::new(&images, vec![YES]).unwrap();
        let init = TtnModel::init_random(TtnLayout::binary(4, d, chi).unwrap(), 5).unwrap();
        let (model, trace) = train(init, &set, &sweeps(1)).unwrap();
        assert!((trace.final_cost() + 1.0).abs() <= 1e-6, "{}", trace.final_cost());
        assert!((cost(&model, &set).unwrap() + 1.0).abs() <= 1e-6);
    }
}

#[test]
fn updates_never_raise_the_cost_and_stay_isometric() {
    let ds = dark_bright(10, 4, 2, 21);
    let set = TrainingSet::one_vs_all(&ds, 0);
    let init = TtnModel::init_random(TtnLayout::binary(4, 2, 2).unwrap(), 8).unwrap();
    assert!(init.max_isometry_error() <= 1e-10);
    let mut prev = cost(&init, &set).unwrap();
    let mut steps = 0;
    let (_, trace) = train_observed(init, &set, &sweeps(5), |ev| {
        let now = cost(ev.model, &set).unwrap();
        assert!(
            now <= prev + 1e-10,
            "sweep {} node ({},{}): {prev} -> {now}",
            ev.sweep,
            ev.layer,
            ev.index
        );
        assert!((ev.cost_after + ev.singular_sum).abs() <= 1e-10);
        assert!((ev.cost_after - now).abs() <= 1e-10);
        assert!(ev.model.max_isometry_error() <= 1e-10);
        prev = now;
        steps += 1;
    })
    .unwrap();
    assert_eq!(steps, 5 * trace.records.len());
}

#[test]
fn environment_trace_equals_cost_at_every_node() {
    let images = random_images(8, 4, 3, 23);
    let set = TrainingSet::new(&images, vec![0, 1, 1, 0, 0, 1, 0, 1]).unwrap();
    let model = TtnModel::init_random(TtnLayout::binary(4, 3, 3).unwrap(), 24).unwrap();
    let up = up_pass(&model, &set).unwrap();
    let down = down_pass(&model, &set, &up).unwrap();
    let f = cost(&model, &set).unwrap();
    for (k, m) in model.layout().nodes() {
        let env = environment(&model, (k, m), &set, &up, &down).unwrap();
        let trace = -env.trace_with(model.tensor(k, m));
        assert!((trace - f).abs() <= 1e-10 * f.abs().max(1.0), "node ({k},{m})");
    }
}

#[test]
fn dark_and_bright_are_separated_within_three_sweeps() {
    let ds = dark_bright(20, 4, 2, 25);
    let set = TrainingSet::one_vs_all(&ds, 1);
    let init = TtnModel::init_random(TtnLayout::binary(4, 2, 2).unwrap(), 26).unwrap();
    let (_, trace) = train(init, &set, &sweeps(3)).unwrap();
    assert!(trace.records.iter().any(|r| r.train_accuracy == 1.0), "{trace:?}");
}

fn one_layer_env(images: &[VectorizedImage], targets: Vec<usize>) -> (TtnModel, EnvironmentTensor) {
    let set = TrainingSet::new(images, targets).unwrap();
    let model = TtnModel::init_random(TtnLayout::binary(2, 2, 2).unwrap(), 27).unwrap();
    let up = up_pass(&model, &set).unwrap();
    let down = down_pass(&model, &set, &up).unwrap();
    let env = environment(&model, (1, 0), &set, &up, &down).unwrap();
    (model, env)
}

fn label_times_pixels(label: usize, px: &[f64]) -> DenseTensor {
    let v: Vec<Vec<f64>> = px.iter().map(|&x| feature_vector(x, 2).unwrap()).collect();
    DenseTensor::from_fn(&[2; 5], |i| {
        let l = if i[0] == label { 1.0 } else { 0.0 };
        l * v[0][i[1]] * v[1][i[2]] * v[2][i[3]] * v[3][i[4]]
    })
}

#[test]
fn one_sample_environment_is_label_times_pixels() {
    let px = [0.2, 0.9, 0.0, 0.6];
    let cfg = FeatureConfig::new(2).unwrap();
    let images = vec![vectorize_image(&px, 2, &cfg).unwrap()];
    for label in [YES, NO] {
        let (_, env) = one_layer_env(&images, vec![label]);
        assert!(env.tensor.max_abs_diff(&label_times_pixels(label, &px)) <= 1e-15);
    }
}

#[test]
fn opposite_labels_sum_two_rank_one_terms() {
    let px = [0.4, 0.1, 1.0, 0.3];
    let cfg = FeatureConfig::new(2).unwrap();
    let img = vectorize_image(&px, 2, &cfg).unwrap();
    let images = vec![img.clone(), img];
    let (_, env) = one_layer_env(&images, vec![YES, NO]);
    let a = label_times_pixels(YES, &px);
    let b = label_times_pixels(NO, &px);
    let expected = DenseTensor::from_fn(&[2; 5], |i| a.get(i) + b.get(i));
    assert!(env.tensor.max_abs_diff(&expected) <= 1e-15);
}

fn random_isometry(rng: &mut ChaCha8Rng) -> DenseTensor {
    let g = DenseTensor::from_fn(&[2, 16], |_| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_rows(&g).unwrap()
}

#[test]
fn update_beats_every_sampled_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..20 {
        let e = DenseTensor::from_fn(&[2; 5], |_| rng.random_range(-1.0..1.0));
        let env = EnvironmentTensor {
            layer: 1,
            index: 0,
            tensor: e.clone(),
        };
        let prev = random_isometry(&mut rng).reshape(&[2; 5]).unwrap();
        let upd = update_tensor(&prev, &env, 0).unwrap();
        let best = env.trace_with(&upd.tensor);
        assert!((best - upd.singular_sum()).abs() <= 1e-10);
        let svals = ttn::tensor::svd(&e, &[0]).unwrap().s;
        assert!((best - svals.iter().sum::<f64>()).abs() <= 1e-10);
        for _ in 0..200 {
            let t = random_isometry(&mut rng).reshape(&[2; 5]).unwrap();
            assert!(env.trace_with(&t) <= best + 1e-12);
        }
    }
}

fn copy_first_child_model() -> TtnModel {
    let layout = TtnLayout::binary(4, 2, 2).unwrap();
    let t = DenseTensor::from_fn(&[2; 5], |i| {
        if i[0] == i[1] && i[2] == 0 && i[3] == 0 && i[4] == 0 {
            1.0
        } else {
            0.0
        }
    });
    let tensors = (1..=2).map(|k| vec![t.clone(); layout.layer_len(k)]).collect();
    TtnModel::from_tensors(layout, tensors).unwrap()
}

#[test]
fn cost_of_perfect_and_orthogonal_predictions() {
    // every output is exactly |yes⟩ for all-dark images
    let model = copy_first_child_model();
    let cfg = FeatureConfig::new(2).unwrap();
    let images: Vec<_> = (0..6).map(|_| vectorize_image(&[0.0; 16], 4, &cfg).unwrap()).collect();
    let yes = TrainingSet::new(&images, vec![YES; 6]).unwrap();
    assert!((cost(&model, &yes).unwrap() + 6.0).abs() <= 1e-15);
    let no = TrainingSet::new(&images, vec![NO; 6]).unwrap();
    assert_eq!(cost(&model, &no).unwrap(), 0.0);
}

#[test]
fn cost_matches_hand_sum_on_single_tensor() {
    let model = TtnModel::init_random(TtnLayout::binary(2, 2, 2).unwrap(), 31).unwrap();
    let t = model.top();
    let pixels = [[0.0, 0.5, 1.0, 0.25], [0.9, 0.9, 0.1, 0.0], [0.33, 0.66, 0.5, 0.75]];
    let targets = vec![YES, NO, YES];
    let cfg = FeatureConfig::new(2).unwrap();
    let images: Vec<_> = pixels.iter().map(|p| vectorize_image(p, 2, &cfg).unwrap()).collect();
    let mut expected = 0.0;
    for (p, &label) in pixels.iter().zip(&targets) {
        let v: Vec<Vec<f64>> = p.iter().map(|&x| feature_vector(x, 2).unwrap()).collect();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for e in 0..2 {
                        expected -= t.get(&[label, a, b, c, e]) * v[0][a] * v[1][b] * v[2][c] * v[3][e];
                    }
                }
            }
        }
    }
    let set = TrainingSet::new(&images, targets).unwrap();
    assert!((cost(&model, &set).unwrap() - expected).abs() <= 1e-14);
}

#[test]
fn toy_ensemble_gives_two_perfect_models() {
    let ds = dark_bright(20, 4, 2, 33);
    let layout = TtnLayout::binary(4, 2, 2).unwrap();
    let jobs: Vec<ClassJob> = (0..2)
        .map(|c| ClassJob {
            class: c,
            layout,
            train: sweeps(3),
            init_seed: 100 + c as u64,
        })
        .collect();
    let (ens, traces) = train_one_vs_all(&ds, &jobs).unwrap();
    assert_eq!(ens.len(), 2);
    for t in &traces {
        assert_eq!(t.final_accuracy(), Some(1.0));
    }
    assert_eq!(evaluate(&ens, &ds).unwrap().accuracy, 1.0);
}

#[test]
fn one_vs_all_relabeling_preserves_class_counts() {
    let images = random_images(12, 2, 2, 35);
    let labels = vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8];
    let ds = Dataset::new(images, labels.clone()).unwrap();
    for class in ds.classes() {
        let set = TrainingSet::one_vs_all(&ds, class);
        let positives = set.targets().iter().filter(|&&t| t == YES).count();
        assert_eq!(positives, labels.iter().filter(|&&l| l == class).count());
        assert_eq!(set.len(), 12);
    }
}

/// Single tensor whose yes-row has weight `yes` on `e_0000`.
fn scripted_model(yes: f64) -> TtnModel {
    let mut data = vec![0.0; 32];
    data[0] = yes;
    data[15] = (1.0 - yes * yes).sqrt();
    data[16 + 1] = 1.0;
    let t = DenseTensor::new(vec![2; 5], data).unwrap();
    TtnModel::from_tensors(TtnLayout::binary(2, 2, 2).unwrap(), vec![vec![t]]).unwrap()
}

#[test]
fn prediction_picks_the_largest_fidelity() {
    let img = vectorize_image(&[0.0; 4], 2, &FeatureConfig::new(2).unwrap()).unwrap();
    let ens = Ensemble::new(vec![4, 7], vec![scripted_model(0.9), scripted_model(0.1)]).unwrap();
    let (class, fid) = predict(&ens, &img).unwrap();
    assert_eq!(class, 4);
    assert!((fid.values[0] - 0.9).abs() <= 1e-15 && (fid.values[1] - 0.1).abs() <= 1e-15);
    let single = Ensemble::new(vec![2], vec![scripted_model(0.0)]).unwrap();
    assert_eq!(single.classify(&img).unwrap(), 2);
}

#[test]
fn evaluation_of_perfect_and_constant_predictors() {
    let ds = dark_bright(5, 4, 2, 37);
    // a trained toy model serves as the perfect predictor
    let init = TtnModel::init_random(TtnLayout::binary(4, 2, 2).unwrap(), 38).unwrap();
    let (model, _) = train(init, &TrainingSet::one_vs_all(&ds, 0), &sweeps(3)).unwrap();
    let perfect = BinaryClassifier {
        model,
        positive: 0,
        negative: 1,
    };
    let ev = evaluate(&perfect, &ds).unwrap();
    assert_eq!(ev.accuracy, 1.0);
    assert_eq!(ev.confusion.counts, vec![vec![5, 0], vec![0, 5]]);

    struct Always(usize);
    impl Classifier for Always {
        fn classes(&self) -> Vec<usize> {
            vec![0, 1]
        }
        fn classify(&self, _: &VectorizedImage) -> ttn::Result<usize> {
            Ok(self.0)
        }
    }
    let ev = evaluate(&Always(1), &ds).unwrap();
    assert_eq!(ev.accuracy, 0.5);
    for row in ev.confusion.row_normalized() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    }
}

#[test]
fn training_is_identical_with_and_without_threads() {
    let images = random_images(300, 4, 3, 39);
    let targets = (0..300).map(|i| (i * 7 % 3 == 0) as usize).collect();
    let set = TrainingSet::new(&images, targets).unwrap();
    let layout = TtnLayout::binary(4, 3, 3).unwrap();
    let run = || train(TtnModel::init_random(layout, 40).unwrap(), &set, &sweeps(2)).unwrap();
    let threaded = run();
    par::set_sequential(true);
    let sequential = run();
    par::set_sequential(false);
    assert_eq!(threaded.0, sequential.0);
    assert_eq!(threaded.1.final_cost().to_bits(), sequential.1.final_cost().to_bits());
}

#[test]
fn same_seed_same_model() {
    let layout = TtnLayout::binary(8, 3, 4).unwrap();
    assert_eq!(
        TtnModel::init_random(layout, 41).unwrap(),
        TtnModel::init_random(layout, 41).unwrap()
    );
    assert_ne!(
        TtnModel::init_random(layout, 41).unwrap(),
        TtnModel::init_random(layout, 42).unwrap()
    );
}
