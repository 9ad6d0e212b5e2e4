mod oracles;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vpuflow::infer::{forward, forward_layers, PrecisionMode};
use vpuflow::netgraph::infer_shapes;

const TRIALS: usize = 200;

#[test]
fn layers_match_oracle_exactly_in_fp32() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..TRIALS {
        let (g, x) = oracles::random_graph(&mut rng);
        let got = forward_layers(&g, &x, PrecisionMode::Fp32).unwrap();
        let want = oracles::forward_oracle(&g, &x);
        for ((layer, a), b) in g.layers().iter().zip(&got).zip(&want) {
            assert_eq!(a.shape(), b.shape(), "trial {trial} layer {}", layer.id());
            let a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "trial {trial} layer {}", layer.id());
        }
    }
}

#[test]
fn output_shapes_follow_inferred_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..TRIALS {
        let (g, x) = oracles::random_graph(&mut rng);
        let shapes = infer_shapes(&g);
        for mode in [PrecisionMode::Fp32, PrecisionMode::Fp16Layer, PrecisionMode::Fp16Strict] {
            let outs = forward_layers(&g, &x, mode).unwrap();
            for (layer, t) in g.layers().iter().zip(&outs) {
                assert_eq!(t.shape(), shapes[layer.id()]);
            }
        }
    }
}

#[test]
fn softmax_sums_to_one_and_agrees_with_wide_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..TRIALS {
        let (g, x) = oracles::random_graph(&mut rng);
        let logits = forward_layers(&g, &x, PrecisionMode::Fp32).unwrap();
        let fc = &logits[logits.len() - 2];
        let reference = oracles::softmax_f64(fc.data());
        for mode in [PrecisionMode::Fp32, PrecisionMode::Fp16Layer, PrecisionMode::Fp16Strict] {
            let p = forward(&g, &x, mode).unwrap().confidences;
            let sum: f64 = p.iter().map(|&v| v as f64).sum();
            assert!((sum - 1.0).abs() <= 1e-6, "{mode}: sum {sum}");
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            if mode == PrecisionMode::Fp32 {
                for (a, b) in p.iter().zip(&reference) {
                    assert!((*a as f64 - b).abs() <= 1e-6);
                }
            }
        }
    }
}

/// Drift is the mean absolute difference over every element of every
/// layer output, against the binary32 run.
fn drift(reference: &[vpuflow::Tensor], other: &[vpuflow::Tensor]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in reference.iter().zip(other) {
        for (p, q) in a.data().iter().zip(b.data()) {
            sum += (p - q).abs() as f64;
            n += 1;
        }
    }
    sum / n as f64
}

#[test]
fn strict_mode_drifts_at_least_as_far_as_layer_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut holds = 0;
    for _ in 0..TRIALS {
        let (g, x) = oracles::random_graph_with(&mut rng, true);
        let reference = forward_layers(&g, &x, PrecisionMode::Fp32).unwrap();
        let strict = drift(&reference, &forward_layers(&g, &x, PrecisionMode::Fp16Strict).unwrap());
        let layer = drift(&reference, &forward_layers(&g, &x, PrecisionMode::Fp16Layer).unwrap());
        if strict >= layer - 1e-9 {
            holds += 1;
        }
    }
    assert!(holds * 100 >= TRIALS * 95, "held in {holds} of {TRIALS}");
}

#[test]
fn repeated_runs_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let (g, x) = oracles::random_graph(&mut rng);
        for mode in [PrecisionMode::Fp32, PrecisionMode::Fp16Layer, PrecisionMode::Fp16Strict] {
            let a = forward(&g, &x, mode).unwrap().confidences;
            let b = forward(&g, &x, mode).unwrap().confidences;
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn half_modes_only_produce_representable_intermediates() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let (g, x) = oracles::random_graph(&mut rng);
        let outs = forward_layers(&g, &x, PrecisionMode::Fp16Layer).unwrap();
        for t in &outs[..outs.len() - 1] {
            for &v in t.data() {
                assert_eq!(vpuflow::half16::round_f32(v).to_bits(), v.to_bits());
            }
        }
    }
}
