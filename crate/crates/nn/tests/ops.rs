use norm2cad_nn::{softmax, Graph, NnError, ParameterSet, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], vals: &[f32]) -> Tensor {
    Tensor::new(shape.to_vec(), vals.to_vec()).unwrap()
}

fn assert_close(got: &[f32], want: &[f32], eps: f32) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= eps, "got {got:?}, want {want:?}");
    }
}

#[test]
fn fully_connected_identity_relu_clamps_negatives() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[2], &[-1.0, 2.0]));
    let a = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(t(&[2], &[0.0, 0.0]));
    let y = g.fully_connected(x, a, b, true).unwrap();
    assert_close(g.value(y).values(), &[0.0, 2.0], 0.0);
}

#[test]
fn fully_connected_bias_only() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[2], &[0.0, 0.0]));
    let a = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(t(&[2], &[1.0, 1.0]));
    let y = g.fully_connected(x, a, b, false).unwrap();
    assert_close(g.value(y).values(), &[1.0, 1.0], 0.0);
}

#[test]
fn fully_connected_rejects_shape_mismatch() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let a = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(t(&[2], &[0.0, 0.0]));
    assert!(matches!(g.fully_connected(x, a, b, false), Err(NnError::Shape(_))));
}

#[test]
fn conv2d_delta_kernel_is_identity() {
    let mut g = Graph::<f32>::new();
    let img: Vec<f32> = (0..25).map(|i| i as f32 * 0.3 - 2.0).collect();
    let x = g.constant(t(&[1, 5, 5], &img));
    let mut kvals = [0.0f32; 9];
    kvals[4] = 1.0;
    let k = g.constant(t(&[1, 1, 3, 3], &kvals));
    let y = g.conv2d(x, k, 1, 1).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 5, 5]);
    assert_close(g.value(y).values(), &img, 0.0);
}

#[test]
fn conv2d_ones_valid_sums_window() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[1, 3, 3], &[1.0; 9]));
    let k = g.constant(t(&[1, 1, 3, 3], &[1.0; 9]));
    let y = g.conv2d(x, k, 1, 0).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 1]);
    assert_close(g.value(y).values(), &[9.0], 0.0);
}

#[test]
fn conv2d_rejects_zero_stride_and_even_kernels() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[1, 4, 4], &[0.5; 16]));
    let k = g.constant(t(&[1, 1, 3, 3], &[0.0; 9]));
    assert!(matches!(g.conv2d(x, k, 0, 1), Err(NnError::Parameter(_))));
    let k2 = g.constant(t(&[1, 1, 2, 2], &[0.0; 4]));
    assert!(matches!(g.conv2d(x, k2, 1, 1), Err(NnError::Parameter(_))));
}

#[test]
fn maxpool2_takes_window_max() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let y = g.maxpool2(x).unwrap();
    assert_close(g.value(y).values(), &[4.0], 0.0);
}

#[test]
fn maxpool2_constant_map_stays_constant() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[2, 4, 4], &[0.7; 32]));
    let y = g.maxpool2(x).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 2, 2]);
    assert_close(g.value(y).values(), &[0.7; 8], 0.0);
}

#[test]
fn maxpool2_rejects_odd_dims() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[1, 3, 4], &[0.0; 12]));
    assert!(matches!(g.maxpool2(x), Err(NnError::Shape(_))));
}

#[test]
fn l2_normalize_three_four_zero() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[3], &[3.0, 4.0, 0.0]));
    let y = g.l2_normalize(x, 0).unwrap();
    assert_close(g.value(y).values(), &[0.6, 0.8, 0.0], 1e-7);
}

#[test]
fn l2_normalize_unit_vector_fixed_point() {
    let mut g = Graph::<f32>::new();
    let v = [0.48, 0.6, 0.64];
    let x = g.constant(t(&[3], &v));
    let y = g.l2_normalize(x, 0).unwrap();
    assert_close(g.value(y).values(), &v, 1e-6);
}

#[test]
fn l2_normalize_zero_vector_clamps_instead_of_failing() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[3], &[0.0; 3]));
    let y = g.l2_normalize(x, 0).unwrap();
    assert!(g.value(y).values().iter().all(|v| v.is_finite()));
}

#[test]
fn l2_normalize_per_row() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[2, 3], &[3.0, 4.0, 0.0, 0.0, 0.0, 2.0]));
    let y = g.l2_normalize(x, 1).unwrap();
    assert_close(g.value(y).values(), &[0.6, 0.8, 0.0, 0.0, 0.0, 1.0], 1e-7);
}

#[test]
fn normal_loss_zero_when_equal() {
    let mut g = Graph::<f32>::new();
    let pred = g.constant(t(&[2, 3], &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]));
    let gt = t(&[2, 3], &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    let loss = g.normal_regression_loss(pred, &gt, &[true, true]).unwrap();
    assert_close(g.value(loss).values(), &[0.0], 0.0);
}

#[test]
fn normal_loss_opposite_vectors_is_four() {
    let mut g = Graph::<f32>::new();
    let pred = g.constant(t(&[1, 3], &[0.0, 0.0, 1.0]));
    let gt = t(&[1, 3], &[0.0, 0.0, -1.0]);
    let loss = g.normal_regression_loss(pred, &gt, &[true]).unwrap();
    assert_close(g.value(loss).values(), &[4.0], 1e-6);
}

#[test]
fn normal_loss_orthogonal_vectors_is_two() {
    let mut g = Graph::<f32>::new();
    let pred = g.constant(t(&[1, 3], &[1.0, 0.0, 0.0]));
    let gt = t(&[1, 3], &[0.0, 1.0, 0.0]);
    let loss = g.normal_regression_loss(pred, &gt, &[true]).unwrap();
    assert_close(g.value(loss).values(), &[2.0], 1e-6);
}

#[test]
fn normal_loss_matches_cosine_identity_on_unit_vectors() {
    // mean ||n - n_hat||^2 == 2 - 2 dot for unit inputs
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let a = random_unit(&mut rng);
        let b = random_unit(&mut rng);
        let mut g = Graph::<f32>::new();
        let pred = g.constant(t(&[1, 3], &a));
        let gt = t(&[1, 3], &b);
        let loss = g.normal_regression_loss(pred, &gt, &[true]).unwrap();
        let dot: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let want = 2.0 - 2.0 * dot;
        assert!((g.value(loss).values()[0] - want).abs() < 1e-6);
    }
}

#[test]
fn normal_loss_ignores_invalid_rows_and_rejects_all_invalid() {
    let mut g = Graph::<f32>::new();
    let pred = g.constant(t(&[2, 3], &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]));
    let gt = t(&[2, 3], &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
    // second row invalid: loss is the first row's 4 alone
    let loss = g.normal_regression_loss(pred, &gt, &[true, false]).unwrap();
    assert_close(g.value(loss).values(), &[4.0], 1e-6);
    assert!(matches!(
        g.normal_regression_loss(pred, &gt, &[false, false]),
        Err(NnError::EmptyBatch)
    ));
}

#[test]
fn softmax_loss_uniform_is_ln_n() {
    let mut g = Graph::<f32>::new();
    let logits = g.constant(t(&[36], &[0.25; 36]));
    let loss = g.softmax_loss(logits, 7).unwrap();
    assert!((g.value(loss).values()[0] - (36.0f32).ln()).abs() < 1e-5);
    assert!((g.value(loss).values()[0] - 3.5835) < 1e-3);
}

#[test]
fn softmax_loss_confident_correct_approaches_zero() {
    let mut g = Graph::<f32>::new();
    let mut logits = [-40.0f32; 36];
    logits[3] = 40.0;
    let v = g.constant(t(&[36], &logits));
    let loss = g.softmax_loss(v, 3).unwrap();
    assert!(g.value(loss).values()[0] >= 0.0);
    assert!(g.value(loss).values()[0] < 1e-6);
}

#[test]
fn softmax_loss_rejects_out_of_range_target() {
    let mut g = Graph::<f32>::new();
    let v = g.constant(t(&[36], &[0.0; 36]));
    assert!(matches!(
        g.softmax_loss(v, 36),
        Err(NnError::IndexOutOfRange { index: 36, len: 36 })
    ));
}

#[test]
fn softmax_loss_nonnegative_and_clamped() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let logits: Vec<f32> = (0..8).map(|_| rand::Rng::gen_range(&mut rng, -50.0..50.0)).collect();
        let mut g = Graph::<f32>::new();
        let v = g.constant(t(&[8], &logits));
        let loss = g.softmax_loss(v, 0).unwrap();
        let lv = g.value(loss).values()[0];
        assert!(lv >= 0.0 && lv.is_finite());
        // clamp bounds the loss even when the target prob underflows
        assert!(lv <= -(1e-12f32).ln() + 1e-3);
    }
}

#[test]
fn contrastive_loss_examples() {
    let close = |g: &Graph<f32>, v, want: f32| {
        let got: f32 = g.value(v).values()[0];
        assert!((got - want).abs() < 1e-6, "got {got}, want {want}");
    };

    let mut g = Graph::<f32>::new();
    let a = g.constant(t(&[2], &[0.3, -0.4]));
    let b = g.constant(t(&[2], &[0.3, -0.4]));
    let l = g.contrastive_loss(a, b, true, 1.0).unwrap();
    close(&g, l, 0.0);

    // negative pair at distance 0.4 with margin 1
    let c = g.constant(t(&[2], &[0.0, 0.0]));
    let d = g.constant(t(&[2], &[0.4, 0.0]));
    let l = g.contrastive_loss(c, d, false, 1.0).unwrap();
    close(&g, l, 0.6);

    // negative pair beyond the margin
    let e = g.constant(t(&[2], &[0.0, 0.0]));
    let f = g.constant(t(&[2], &[1.5, 0.0]));
    let l = g.contrastive_loss(e, f, false, 1.0).unwrap();
    close(&g, l, 0.0);

    let g2 = g.constant(t(&[3], &[0.0; 3]));
    assert!(matches!(g.contrastive_loss(a, g2, true, 1.0), Err(NnError::Shape(_))));
}

#[test]
fn contrastive_loss_zero_for_any_negative_past_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let dir = random_unit(&mut rng);
        let dist: f32 = rand::Rng::gen_range(&mut rng, 1.0..5.0);
        let mut g = Graph::<f32>::new();
        let a = g.constant(t(&[3], &[0.0; 3]));
        let b = g.constant(t(&[3], &[dir[0] * dist, dir[1] * dist, dir[2] * dist]));
        let l = g.contrastive_loss(a, b, false, 1.0).unwrap();
        assert_eq!(g.value(l).values()[0], 0.0);
    }
}

#[test]
fn dropout_p_zero_and_inference_are_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[4], &[1.0, -2.0, 3.0, 0.5]));
    let y = g.dropout(x, 0.0, true, &mut rng).unwrap();
    assert_eq!(x, y);
    let z = g.dropout(x, 0.5, false, &mut rng).unwrap();
    assert_eq!(x, z);
    assert!(matches!(g.dropout(x, 1.0, true, &mut rng), Err(NnError::Parameter(_))));
}

#[test]
fn dropout_mask_mean_is_one() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[n], &vec![1.0; n]));
    let y = g.dropout(x, 0.5, true, &mut rng).unwrap();
    let mean: f64 = g.value(y).values().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
}

#[test]
fn sgd_single_step_without_momentum() {
    let mut params = ParameterSet::<f32>::new();
    params.insert("w", Tensor::scalar(1.0)).unwrap();
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let w = bound.var("w").unwrap();
    g.backward(w).unwrap();
    params.sgd_step(&bound, &g, 0.1, 0.0).unwrap();
    assert!((params.get("w").unwrap().values()[0] - 0.9).abs() < 1e-7);
}

#[test]
fn sgd_zero_grad_is_identity() {
    let mut params = ParameterSet::<f32>::new();
    params.insert("w", Tensor::scalar(1.0)).unwrap();
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let w = bound.var("w").unwrap();
    let loss = g.scale(w, 0.0);
    g.backward(loss).unwrap();
    params.sgd_step(&bound, &g, 0.1, 0.9).unwrap();
    assert_eq!(params.get("w").unwrap().values()[0], 1.0);
}

#[test]
fn sgd_momentum_recurrence_two_steps() {
    // v1 = 1, w = 0.9; v2 = 0.9 + 1 = 1.9, w = 0.9 - 0.19 = 0.71
    let mut params = ParameterSet::<f32>::new();
    params.insert("w", Tensor::scalar(1.0)).unwrap();
    for _ in 0..2 {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let w = bound.var("w").unwrap();
        g.backward(w).unwrap();
        params.sgd_step(&bound, &g, 0.1, 0.9).unwrap();
    }
    assert!((params.get("w").unwrap().values()[0] - 0.71).abs() < 1e-6);
}

#[test]
fn sgd_missing_grad_is_an_error() {
    let mut params = ParameterSet::<f32>::new();
    params.insert("used", Tensor::scalar(1.0)).unwrap();
    params.insert("orphan", Tensor::scalar(2.0)).unwrap();
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let used = bound.var("used").unwrap();
    g.backward(used).unwrap();
    assert!(matches!(
        params.sgd_step(&bound, &g, 0.1, 0.9),
        Err(NnError::MissingGrad(name)) if name == "orphan"
    ));
}

#[test]
fn parameter_names_must_be_unique() {
    let mut params = ParameterSet::<f32>::new();
    params.insert("w", Tensor::scalar(1.0)).unwrap();
    assert!(matches!(params.insert("w", Tensor::scalar(2.0)), Err(NnError::DuplicateName(_))));
}

#[test]
fn backward_rejects_non_scalar_target() {
    let mut g = Graph::<f32>::new();
    let x = g.constant(t(&[2], &[1.0, 2.0]));
    assert!(matches!(g.backward(x), Err(NnError::NonScalarOutput(_))));
}

#[test]
fn bilinear_gather_midpoint_and_corners() {
    let mut g = Graph::<f32>::new();
    // one channel, 2x2 map: 0 1 / 2 3
    let x = g.constant(t(&[1, 2, 2], &[0.0, 1.0, 2.0, 3.0]));
    let pts = [(0.0, 0.0), (1.0, 1.0), (0.5, 0.5), (-5.0, 9.0)];
    let y = g.bilinear_gather(x, &pts).unwrap();
    assert_eq!(g.value(y).shape(), &[4, 1]);
    assert_close(g.value(y).values(), &[0.0, 3.0, 1.5, 2.0], 1e-6);
}

#[test]
fn concat_and_global_avg_pool() {
    let mut g = Graph::<f32>::new();
    let a = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let b = g.constant(t(&[2, 1], &[9.0, 8.0]));
    let y = g.concat(&[a, b]).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 3]);
    assert_close(g.value(y).values(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0], 0.0);

    let m = g.constant(t(&[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 20.0, 20.0]));
    let p = g.global_avg_pool(m).unwrap();
    assert_close(g.value(p).values(), &[2.5, 15.0], 1e-6);
}

#[test]
fn forward_is_deterministic_given_seed() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::he_init(vec![1, 8, 8], 9, &mut ChaCha8Rng::seed_from_u64(1)));
        let k = g.constant(Tensor::he_init(vec![2, 1, 3, 3], 9, &mut ChaCha8Rng::seed_from_u64(2)));
        let c = g.conv2d(x, k, 1, 1).unwrap();
        let p = g.maxpool2(c).unwrap();
        let d = g.dropout(p, 0.3, true, &mut rng).unwrap();
        let gap = g.global_avg_pool(d).unwrap();
        g.value(gap).values().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn softmax_sums_to_one() {
    let p = softmax(&[1.0f32, 2.0, 3.0, -50.0]);
    let s: f32 = p.iter().sum();
    assert!((s - 1.0).abs() < 1e-6);
    assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f32; 3] {
    loop {
        let v = [
            rand::Rng::gen_range(&mut *rng, -1.0f32..1.0),
            rand::Rng::gen_range(&mut *rng, -1.0f32..1.0),
            rand::Rng::gen_range(&mut *rng, -1.0f32..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}
