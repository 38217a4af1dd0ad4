use gridpad::neural::{
    detector_specs, evaluate, load_model, save_model, train, Activation, LayerSpec, MlpModel, Mode, Sample,
    TrainConfig,
};
use gridpad::rng::rng_from_seed;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn random_net(seed: u64) -> MlpModel {
    let mut rng = rng_from_seed(seed);
    let input = rng.random_range(2..6);
    let h1 = rng.random_range(2..7);
    let h2 = rng.random_range(2..5);
    let specs = [
        LayerSpec::new(input, h1, Activation::Relu),
        LayerSpec::new(h1, h2, if rng.random_bool(0.5) { Activation::Relu } else { Activation::Identity }),
        LayerSpec::new(h2, 2, Activation::Identity).with_dropout(0.25),
    ];
    let mut m = MlpModel::new(&specs, 1.0, seed).unwrap();
    for l in &mut m.layers {
        l.bias = DVector::from_fn(l.bias.len(), |_, _| rng.random_range(-0.5..0.5));
    }
    m
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn input_and_weight_gradients_match_central_differences() {
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let model = random_net(seed);
        let mut rng = rng_from_seed(1000 + seed);
        let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = (seed % 2) as usize;
        let target = gridpad::neural::one_hot(label, 2);
        let temperature = 1.0;

        let g = model.input_gradient(&x, label).unwrap();
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += step;
            xm[i] -= step;
            let fd = (model.loss(&xp, &target, temperature).unwrap() - model.loss(&xm, &target, temperature).unwrap())
                / (2.0 * step);
            let e = rel_err(g[i], fd);
            worst = worst.max(e);
            assert!(e <= 1e-4, "net {seed} input {i}: analytic {} vs fd {fd}", g[i]);
        }

        let grads = model.parameter_gradients(&x, &target, temperature).unwrap();
        for l in 0..model.layers.len() {
            let (rows, cols) = model.layers[l].weights.shape();
            for r in 0..rows {
                for c in 0..cols {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    plus.layers[l].weights[(r, c)] += step;
                    minus.layers[l].weights[(r, c)] -= step;
                    let fd = (plus.loss(&x, &target, temperature).unwrap()
                        - minus.loss(&x, &target, temperature).unwrap())
                        / (2.0 * step);
                    let e = rel_err(grads.weights[l][(r, c)], fd);
                    worst = worst.max(e);
                    assert!(e <= 1e-4, "net {seed} layer {l} w[{r},{c}]");
                }
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.layers[l].bias[r] += step;
                minus.layers[l].bias[r] -= step;
                let fd = (plus.loss(&x, &target, temperature).unwrap() - minus.loss(&x, &target, temperature).unwrap())
                    / (2.0 * step);
                assert!(rel_err(grads.biases[l][r], fd) <= 1e-4, "net {seed} layer {l} b[{r}]");
            }
        }
    }
    println!("worst relative error {worst:e}");
}

#[test]
fn gradient_at_temperature_matches_finite_differences() {
    let model = random_net(7);
    let x = vec![0.2; model.input_dim()];
    let target = gridpad::neural::one_hot(1, 2);
    let g = model.input_gradient_at(&x, 1, 5.0).unwrap();
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += 1e-4;
        xm[i] -= 1e-4;
        let fd = (model.loss(&xp, &target, 5.0).unwrap() - model.loss(&xm, &target, 5.0).unwrap()) / 2e-4;
        assert!(rel_err(g[i], fd) <= 1e-4);
    }
}

#[test]
fn separable_points_are_learned() {
    let mut rng = rng_from_seed(3);
    let data: Vec<Sample> = (0..200)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            let label = usize::from(x + 0.5 * y > 0.1);
            let shift = if label == 1 { 0.1 } else { -0.1 };
            Sample { input: vec![x + shift, y], label }
        })
        .collect();
    let specs = [LayerSpec::new(2, 8, Activation::Relu), LayerSpec::new(8, 2, Activation::Identity)];
    let mut model = MlpModel::new(&specs, 1.0, 5).unwrap();
    let cfg = TrainConfig { learning_rate: 0.1, batch_size: 16, epochs: 200, rng_seed: 6, dropout_enabled: true };
    let log = train(&mut model, &data, &cfg, None).unwrap();
    assert_eq!(log.epochs.len(), 200);
    let eval = evaluate(&model, &data).unwrap();
    assert!(eval.accuracy >= 0.99, "accuracy {}", eval.accuracy);
}

#[test]
fn training_is_deterministic() {
    let data: Vec<Sample> = (0..50)
        .map(|i| Sample { input: vec![i as f64 / 50.0, (i % 7) as f64 / 7.0, 0.3], label: i % 2 })
        .collect();
    let cfg = TrainConfig { epochs: 5, batch_size: 8, rng_seed: 9, ..Default::default() };
    let run = || {
        let mut m = MlpModel::new(&detector_specs(3), 1.0, 4).unwrap();
        train(&mut m, &data, &cfg, None).unwrap();
        m
    };
    let (a, b) = (run(), run());
    assert_eq!(save_model(&a), save_model(&b));
    assert_eq!(load_model(&save_model(&a)).unwrap(), a);
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let spec = [LayerSpec::new(4, 2, Activation::Identity).with_dropout(0.25)];
    let model = MlpModel::new(&spec, 1.0, 12).unwrap();
    let x = [0.7, -1.2, 0.4, 2.0];
    let infer = model.forward(&x, Mode::Infer, 0).unwrap().logits;
    let draws = 10_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for seed in 0..draws {
        let l = model.forward(&x, Mode::Train, seed).unwrap().logits;
        for j in 0..2 {
            sum[j] += l[j];
            sq[j] += l[j] * l[j];
        }
    }
    for j in 0..2 {
        let mean = sum[j] / draws as f64;
        let var = sq[j] / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();
        assert!((mean - infer[j]).abs() <= 3.0 * se, "logit {j}: {mean} vs {} (se {se})", infer[j]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let model = random_net(seed);
        let mut rng = rng_from_seed(seed ^ 0xABCD);
        let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let p = model.predict_proba(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn temperature_never_changes_argmax(seed in any::<u64>(), t in 0.05f64..200.0) {
        let model = random_net(seed);
        let x = vec![0.3; model.input_dim()];
        let mut hot = model.clone();
        hot.temperature = t;
        prop_assert_eq!(model.predict(&x).unwrap(), hot.predict(&x).unwrap());
    }
}
