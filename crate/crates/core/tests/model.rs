use eegdit::model::dit::DitBlock;
use eegdit::model::guidance::time_weight;
use eegdit::model::msc::FeatureExtractor;
use eegdit::model::{ModelConfig, NoisePredictor};
use eegdit::nn::layer_norm;
use eegdit::seed;
use eegdit_autograd::{Graph, ParamSet, Tensor};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn small(conditional: bool) -> ModelConfig {
    ModelConfig {
        channels: 2,
        len: 64,
        patch_len: 8,
        hidden_dim: 16,
        depth: 2,
        heads: 2,
        msc_kernels_low: vec![15, 31],
        msc_kernels_high: vec![3, 7],
        msc_channels: 8,
        dfsi_hidden: 16,
        num_classes: conditional.then_some(3),
        max_steps: 20,
        ..ModelConfig::default()
    }
}

fn normal(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seed::rng(seed);
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

fn jitter(ps: &mut ParamSet, seed: u64) {
    let mut rng = seed::rng(seed);
    for t in ps.tensors_mut() {
        for v in t.data_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += 0.3 * z;
        }
    }
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn block_out(model: &NoisePredictor, block: &DitBlock, tokens: &Tensor, guidance: &Tensor) -> Tensor {
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    block.forward(&p, g.constant(tokens.clone()), g.constant(guidance.clone())).to_tensor()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fresh_block_is_the_identity(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let model = NoisePredictor::new(small(false), seed).unwrap();
        let tokens = normal(&[2, 8, 16], seed ^ 1).map(|v| v * scale);
        let guidance = normal(&[2, 16], seed ^ 2).map(|v| v * scale);
        for block in &model.layers().blocks {
            let out = block_out(&model, block, &tokens, &guidance);
            prop_assert!(max_diff(&out, &tokens) <= 1e-12);
        }
    }

    #[test]
    fn spectral_embedding_ignores_circular_shifts(seed in any::<u64>(), shift in 1usize..64) {
        let model = NoisePredictor::new(small(false), seed).unwrap();
        let spectral = model.layers().spectral.as_ref().unwrap();
        let x = normal(&[1, 2, 64], seed ^ 3);
        let shifted = Tensor::from_fn(&[1, 2, 64], |i| {
            let (c, j) = (i / 64, i % 64);
            x.data()[c * 64 + (j + 64 - shift) % 64]
        });
        let g = Graph::new();
        let p = model.params().bind_frozen(&g);
        let a = spectral.forward(&p, &g, &x).to_tensor();
        let b = spectral.forward(&p, &g, &shifted).to_tensor();
        prop_assert!(max_diff(&a, &b) <= 1e-6 * a.max_abs().max(1e-300));
    }
}

fn random_config() -> impl Strategy<Value = ModelConfig> {
    (
        1usize..4,
        prop::sample::select(vec![4usize, 8]),
        1usize..5,
        prop::sample::select(vec![(8usize, 1usize), (8, 2), (16, 4), (12, 3)]),
        0usize..3,
        prop::option::of(1usize..4),
        any::<bool>(),
        any::<bool>(),
        prop::sample::select(vec![8usize, 16]),
        1usize..30,
    )
        .prop_map(|(c, p, n, (d, heads), depth, k, msc, dfsi, msc_ch, t_max)| {
            let len = p * n;
            let longest = if len % 2 == 0 { len - 1 } else { len };
            ModelConfig {
                channels: c,
                len,
                patch_len: p,
                hidden_dim: d,
                depth,
                heads,
                msc_kernels_low: if longest > 3 { vec![3, longest] } else { vec![1, 3] },
                msc_kernels_high: vec![1, 3],
                msc_channels: msc_ch,
                dfsi_hidden: 8,
                num_classes: k,
                max_steps: t_max,
                msc_enabled: msc,
                dfsi_enabled: dfsi,
                ..ModelConfig::default()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn output_shape_equals_input_shape(cfg in random_config(), seed in any::<u64>(), b in 1usize..3) {
        let (c, l, t_max) = (cfg.channels, cfg.len, cfg.max_steps);
        let k = cfg.num_classes;
        let mut model = NoisePredictor::new(cfg, seed).unwrap();
        jitter(model.params_mut(), seed);
        let x = normal(&[b, c, l], seed);
        let t: Vec<usize> = (0..b).map(|i| (i * 7) % (t_max + 1)).collect();
        let cond: Option<Vec<usize>> = k.map(|k| (0..b).map(|i| i % k).collect());
        let out = model.predict(&x, &t, cond.as_deref()).unwrap();
        prop_assert_eq!(out.shape(), &[b, c, l][..]);
        prop_assert!(out.is_finite());
    }
}

#[test]
fn fresh_model_outputs_zero_for_any_input() {
    let model = NoisePredictor::new(small(true), 5).unwrap();
    let x = normal(&[3, 2, 64], 6).map(|v| 10.0 * v);
    let out = model.predict(&x, &[0, 7, 20], Some(&[0, 1, 2])).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn class_term_is_the_only_difference_between_conditional_and_unconditional_guidance() {
    let mut cond_model = NoisePredictor::new(small(true), 7).unwrap();
    jitter(cond_model.params_mut(), 8);
    // The unconditional model shares every parameter except the class table.
    let mut plain = NoisePredictor::new(small(false), 0).unwrap();
    let shared: Vec<(String, Tensor)> = plain
        .params()
        .iter()
        .map(|(_, name, _)| {
            let id = cond_model.params().id_of(name).unwrap();
            (name.to_string(), cond_model.params().get(id).clone())
        })
        .collect();
    for (name, t) in shared {
        let id = plain.params().id_of(&name).unwrap();
        *plain.params_mut().get_mut(id) = t;
    }

    let x = normal(&[3, 2, 64], 9);
    let t = [1, 10, 20];
    let classes = [2, 0, 1];
    let g = Graph::new();
    let pc = cond_model.params().bind_frozen(&g);
    let pu = plain.params().bind_frozen(&g);
    let con = cond_model.guidance_terms(&pc, g.constant(x.clone()), &t, Some(&classes)).unwrap();
    let un = plain.guidance_terms(&pu, g.constant(x.clone()), &t, None).unwrap();
    assert!(un.class.is_none());
    assert_eq!(con.time.to_tensor(), un.time.to_tensor());
    assert_eq!(con.spectral.unwrap().to_tensor(), un.spectral.unwrap().to_tensor());

    let class = con.class.unwrap().to_tensor();
    let table = cond_model.params().get(cond_model.layers().class.as_ref().unwrap().table);
    for (row, &c) in classes.iter().enumerate() {
        assert_eq!(&class.data()[row * 16..(row + 1) * 16], &table.data()[c * 16..(c + 1) * 16]);
    }
    let diff = Tensor::from_vec(
        con.sum().to_tensor().data().iter().zip(un.sum().to_tensor().data()).map(|(a, b)| a - b).collect(),
        &[3, 16],
    );
    assert!(max_diff(&diff, &class) <= 1e-12 * class.max_abs().max(1.0));
}

#[test]
fn spectral_term_vanishes_at_the_last_step_and_is_full_at_step_zero() {
    let mut model = NoisePredictor::new(small(false), 10).unwrap();
    jitter(model.params_mut(), 11);
    let x = normal(&[2, 2, 64], 12);
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);

    let last = model.guidance_terms(&p, g.constant(x.clone()), &[20, 20], None).unwrap();
    assert_eq!(last.sum().to_tensor(), last.time.to_tensor());

    let first = model.guidance_terms(&p, g.constant(x.clone()), &[0, 0], None).unwrap();
    let raw = model.layers().spectral.as_ref().unwrap().forward(&p, &g, &x).to_tensor();
    assert_eq!(first.spectral.unwrap().to_tensor(), raw);

    assert_eq!(time_weight(0, 20).unwrap(), 1.0);
    assert_eq!(time_weight(20, 20).unwrap(), 0.0);
}

#[test]
fn patch_tokens_only_see_their_own_samples() {
    let cfg = small(false);
    let mut model = NoisePredictor::new(cfg.clone(), 13).unwrap();
    jitter(model.params_mut(), 14);
    let f = cfg.feature_channels();
    let a = normal(&[1, f, 64], 15);
    let mut b = a.clone();
    for ch in 0..f {
        for j in 24..32 {
            b.data_mut()[ch * 64 + j] += 1.0 + j as f64;
        }
    }
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let ta = model.layers().patch.forward(&p, g.constant(a)).to_tensor();
    let tb = model.layers().patch.forward(&p, g.constant(b)).to_tensor();
    assert_eq!(ta.shape(), &[1, 8, 16]);
    for token in 0..8 {
        let same = ta.data()[token * 16..(token + 1) * 16] == tb.data()[token * 16..(token + 1) * 16];
        assert_eq!(same, token != 3, "token {token}");
    }
}

#[test]
fn zero_features_and_zero_tables_give_zero_tokens() {
    let cfg = small(false);
    let mut model = NoisePredictor::new(cfg.clone(), 16).unwrap();
    let patch = model.layers().patch.clone();
    *model.params_mut().get_mut(patch.pos) = Tensor::zeros(&[8, 16]);
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let tokens = patch.forward(&p, g.constant(Tensor::zeros(&[1, cfg.feature_channels(), 64])));
    assert!(tokens.to_tensor().data().iter().all(|&v| v == 0.0));
}

#[test]
fn attention_block_commutes_with_token_permutations() {
    let mut model = NoisePredictor::new(small(false), 17).unwrap();
    jitter(model.params_mut(), 18);
    let block = &model.layers().blocks[0];
    let (n, d) = (8, 16);
    let tokens = normal(&[2, n, d], 19);
    let guidance = normal(&[2, d], 20);
    let perm = [5, 2, 7, 0, 1, 6, 3, 4];
    let permute = |t: &Tensor| {
        Tensor::from_fn(&[2, n, d], |i| {
            let (b, r, c) = (i / (n * d), (i / d) % n, i % d);
            t.data()[b * n * d + perm[r] * d + c]
        })
    };
    let direct = permute(&block_out(&model, block, &tokens, &guidance));
    let permuted = block_out(&model, block, &permute(&tokens), &guidance);
    assert!(max_diff(&direct, &permuted) <= 1e-12);
}

#[test]
fn zero_guidance_with_open_gates_is_a_plain_pre_norm_block() {
    let mut model = NoisePredictor::new(small(false), 21).unwrap();
    jitter(model.params_mut(), 22);
    let block = model.layers().blocks[0].clone();
    let d = 16;
    // Scales and shifts 0, gates 1.
    let bias = Tensor::from_fn(&[6 * d], |i| if i / d == 2 || i / d == 5 { 1.0 } else { 0.0 });
    *model.params_mut().get_mut(block.ada.bias.unwrap()) = bias;

    let tokens = normal(&[2, 8, d], 23);
    let out = block_out(&model, &block, &tokens, &Tensor::zeros(&[2, d]));

    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let x = g.constant(tokens);
    let x = x.add(block.attention(&p, layer_norm(x, 1e-6)));
    let h = block.fc1.forward(&p, layer_norm(x, 1e-6)).gelu();
    let expected = x.add(block.fc2.forward(&p, h)).to_tensor();
    assert!(max_diff(&out, &expected) <= 1e-12);
}

#[test]
fn attention_gates_shrink_features_and_respect_constant_inputs() {
    let mut model = NoisePredictor::new(small(false), 24).unwrap();
    jitter(model.params_mut(), 25);
    let FeatureExtractor::MultiScale { low, .. } = &model.layers().features else {
        panic!("multi-scale extractor expected");
    };
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let x = normal(&[2, 8, 64], 26).map(|v| 5.0 * v);
    let out = low.cbam.forward(&p, g.constant(x.clone())).to_tensor();
    assert!(out.data().iter().zip(x.data()).all(|(o, i)| o.abs() <= i.abs()));

    // Per-channel constants: the temporal map is flat wherever the kernel
    // lies fully inside the segment.
    let flat = Tensor::from_fn(&[1, 8, 64], |i| (i / 64) as f64 - 3.5);
    let gated = g.constant(flat.clone()).mul(low.cbam.channel_gate(&p, g.constant(flat)));
    let map = low.cbam.temporal_gate(&p, gated).to_tensor();
    let half = low.cbam.temporal.kernel / 2;
    let inner = &map.data()[half..64 - half];
    assert!(inner.iter().all(|&v| v == inner[0]));
    assert!(map.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn multi_scale_features_are_linear_at_zero_and_keep_length() {
    let cfg = ModelConfig { channels: 3, len: 256, msc_channels: 16, ..ModelConfig::default() };
    let mut model = NoisePredictor::new(cfg, 27).unwrap();
    let g = Graph::new();
    {
        let p = model.params().bind_frozen(&g);
        let out = model.layers().features.forward(&p, g.constant(normal(&[1, 3, 256], 28)));
        assert_eq!(out.shape(), vec![1, 32, 256]);
    }
    // Biases start at zero, so zero input maps to zero features.
    jitter(model.params_mut(), 29);
    for (_, name, _) in model.params().clone().iter() {
        if name.starts_with("msc.") && name.contains(".conv") && name.ends_with(".bias") {
            let id = model.params().id_of(name).unwrap();
            let shape = model.params().get(id).shape().to_vec();
            *model.params_mut().get_mut(id) = Tensor::zeros(&shape);
        }
    }
    let p = model.params().bind_frozen(&g);
    let out = model.layers().features.forward(&p, g.constant(Tensor::zeros(&[1, 3, 256])));
    assert!(out.to_tensor().data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_tap_unit_kernel_passes_the_signal_through() {
    let cfg = ModelConfig {
        channels: 1,
        len: 32,
        patch_len: 8,
        msc_kernels_low: vec![1],
        msc_kernels_high: vec![1],
        msc_channels: 8,
        ..ModelConfig::default()
    };
    let mut model = NoisePredictor::new(cfg, 30).unwrap();
    let FeatureExtractor::MultiScale { high, .. } = model.layers().features.clone() else {
        panic!("multi-scale extractor expected");
    };
    let conv = &high.convs[0];
    *model.params_mut().get_mut(conv.weight) = Tensor::full(&[8, 1, 1], 1.0);
    let x = normal(&[1, 1, 32], 31);
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let out = high.convolve(&p, g.constant(x.clone())).to_tensor();
    for ch in 0..8 {
        assert_eq!(&out.data()[ch * 32..(ch + 1) * 32], x.data());
    }
}

#[test]
fn spectral_embedding_separates_distinct_tones() {
    let model = NoisePredictor::new(small(false), 32).unwrap();
    let spectral = model.layers().spectral.as_ref().unwrap();
    let tone = |bin: f64| {
        Tensor::from_fn(&[1, 2, 64], |i| (2.0 * std::f64::consts::PI * bin * (i % 64) as f64 / 64.0).sin())
    };
    let (a, b) = (spectral.spectra(&tone(5.0)), spectral.spectra(&tone(20.0)));
    assert!(max_diff(&a, &b) > 1.0);
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let ea = spectral.forward(&p, &g, &tone(5.0)).to_tensor();
    let eb = spectral.forward(&p, &g, &tone(20.0)).to_tensor();
    assert!(max_diff(&ea, &eb) > 1e-6);

    let z1 = spectral.forward(&p, &g, &Tensor::zeros(&[2, 2, 64])).to_tensor();
    assert_eq!(&z1.data()[..16], &z1.data()[16..]);
}

#[test]
fn class_rows_are_stable_and_distinct() {
    let model = NoisePredictor::new(small(true), 33).unwrap();
    let table = model.layers().class.as_ref().unwrap();
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let a = table.forward(&p, &[0, 1, 0]).unwrap().to_tensor();
    assert_eq!(&a.data()[..16], &a.data()[32..]);
    assert_ne!(&a.data()[..16], &a.data()[16..32]);
    assert!(table.forward(&p, &[3]).is_err());
    let plain = NoisePredictor::new(small(false), 33).unwrap();
    assert!(plain.layers().class.is_none());
    assert!(plain.predict(&Tensor::zeros(&[1, 2, 64]), &[1], Some(&[0])).is_err());
}

#[test]
fn step_embedding_is_deterministic_and_distinguishes_steps() {
    let model = NoisePredictor::new(small(false), 34).unwrap();
    let g = Graph::new();
    let p = model.params().bind_frozen(&g);
    let e = model.layers().time.forward(&p, &g, &[4, 4, 5]).to_tensor();
    assert_eq!(&e.data()[..16], &e.data()[16..32]);
    assert_ne!(&e.data()[..16], &e.data()[32..]);
}
