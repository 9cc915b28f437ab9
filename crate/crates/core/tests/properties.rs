//! Property tests across module boundaries.

use lutq::codebook::{apply_vbs, build_codebook};
use lutq::fixedpoint::{to_fixed, QFormat};
use lutq::inference::forward_batch;
use lutq::metrics::{scheme_sweep, SweepSpec};
use lutq::quantize::quantize_layer;
use lutq::synthetic::{clamped_normal, gen_model, gen_probes};
use lutq::*;
use proptest::prelude::*;

fn any_scheme() -> impl Strategy<Value = Scheme> {
    prop::sample::select(Scheme::ALL.to_vec())
}

fn tensor() -> impl Strategy<Value = Vec<f64>> {
    (2usize..1500, 0.01f64..0.7, any::<u64>()).prop_map(|(len, sigma, seed)| clamped_normal(len, sigma, seed).unwrap())
}

fn layer_config(scheme: Scheme) -> QuantizationConfig {
    QuantizationConfig { scheme, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn intervals_cover_the_range(values in tensor(), scheme in any_scheme()) {
        let dist = EmpiricalDistribution::new(&values).unwrap();
        let set = build_intervals(&dist, &layer_config(scheme)).unwrap();
        prop_assert_eq!(set.len(), 16);
        prop_assert_eq!(set.lower(), dist.min());
        prop_assert_eq!(set.upper(), dist.max());
        prop_assert!(set.edges().windows(2).all(|w| w[0] <= w[1]));
        for &v in &values {
            let (lo, hi) = set.bounds(set.locate(v));
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn internal_widths_are_equal(values in tensor()) {
        let dist = EmpiricalDistribution::new(&values).unwrap();
        let set = build_intervals(&dist, &QuantizationConfig::default()).unwrap();
        let widths: Vec<f64> = (0..set.len())
            .filter(|&i| set.labels()[i] == Partition::Internal)
            .map(|i| set.width(i))
            .collect();
        prop_assert_eq!(widths.len(), 8);
        for w in &widths {
            prop_assert!((w - widths[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn levels_are_bounded_and_monotone(values in tensor(), scheme in any_scheme()) {
        let dist = EmpiricalDistribution::new(&values).unwrap();
        let built = build_codebook(&dist, &layer_config(scheme)).unwrap();
        let levels = built.lut.levels();
        prop_assert!(levels.windows(2).all(|w| w[0] <= w[1]), "{:?}", levels);
        for e in built.lut.entries() {
            prop_assert!((e.magnitude as u32) < 1 << 8);
            if scheme == Scheme::RangeSplitVbs && e.partition == Partition::Internal {
                prop_assert!(e.reconstruct(8).abs() < (-(e.shift as f64)).exp2());
            }
            // Unshifted entries keep k=0 unless they took over a neighbour's
            // level to stay idempotent.
            let unshifted = !scheme.uses_vbs() || (scheme.is_range_split() && e.partition == Partition::External);
            if unshifted && e.shift != 0 {
                prop_assert!(built.lut.entries().iter().any(|o| o.shift == e.shift && o.partition != e.partition));
                prop_assert!(levels.iter().filter(|&&l| l == e.reconstruct(8)).count() >= 2);
            }
        }
    }

    #[test]
    fn coding_is_idempotent(values in tensor(), scheme in any_scheme()) {
        let dist = EmpiricalDistribution::new(&values).unwrap();
        let built = build_codebook(&dist, &layer_config(scheme)).unwrap();
        let once = decode_codes(&encode_params(&values, &built.intervals), &built.lut).unwrap();
        let twice = decode_codes(&encode_params(&once, &built.intervals), &built.lut).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn pack_roundtrip(n in 1u8..=16, raw in prop::collection::vec(any::<u16>(), 0..300)) {
        let codes: Vec<u16> = raw.iter().map(|c| (*c as u32 & ((1u32 << n) - 1)) as u16).collect();
        let stream = pack_codes(&codes, n).unwrap();
        prop_assert_eq!(stream.bytes().len(), (codes.len() * n as usize).div_ceil(8));
        prop_assert!(stream.pad_bits_are_zero());
        prop_assert_eq!(unpack_codes(&stream).unwrap(), codes);
    }

    #[test]
    fn inv_cdf_inverts_cdf(mut values in prop::collection::vec(-1.0f64..1.0, 2..200), t in 0.0f64..1.0) {
        values.sort_by(f64::total_cmp);
        values.dedup();
        prop_assume!(values.len() >= 2);
        let dist = EmpiricalDistribution::new(&values).unwrap();
        let x = dist.min() + t * (dist.max() - dist.min());
        let p = dist.cdf(x).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((dist.inv_cdf(p).unwrap() - x).abs() <= 1e-9);
        prop_assert!(dist.cdf(x + 1e-3).unwrap() >= p);
    }

    #[test]
    fn vbs_reconstructs_within_half_step(level in -0.999f64..0.999, k in 0u8..8) {
        let scaled = level * (k as f64).exp2();
        prop_assume!(scaled.abs() < 1.0 - 2f64.powi(-9));
        let (u, negative) = apply_vbs(level, k, 8).unwrap();
        let e = LutEntry { magnitude: u, negative, shift: k, partition: Partition::Internal };
        prop_assert!((e.reconstruct(8) - level).abs() <= 2f64.powi(-(8 + k as i32 + 1)) + 1e-15);
    }
}

#[test]
fn containers_roundtrip() {
    for seed in 0..5u64 {
        let model = gen_model(&[12, 7, 3], 0.2, seed).unwrap();
        assert_eq!(FloatModel::from_bytes(&model.to_bytes()).unwrap(), model);
        let configs = vec![layer_config(Scheme::ALL[seed as usize % 4]); 2];
        let (q, _) = quantize_model(&model, &configs).unwrap();
        assert_eq!(QuantizedModel::from_bytes(&q.to_bytes()).unwrap(), q);
    }
}

#[test]
fn containers_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = gen_model(&[5, 4], 0.3, 2).unwrap();
    let path = dir.path().join("m.fpm");
    model.save(&path).unwrap();
    let (loaded, clamped) = lutq::model::load_float_model(&path).unwrap();
    assert_eq!((loaded, clamped), (model.clone(), 0));

    let (q, _) = quantize_model(&model, &[QuantizationConfig::default()]).unwrap();
    let qpath = dir.path().join("m.qlt");
    q.save(&qpath).unwrap();
    assert_eq!(QuantizedModel::load(&qpath).unwrap(), q);
}

#[test]
fn dequantized_mode_matches_float_path() {
    let model = gen_model(&[16, 8, 4], 0.15, 3).unwrap();
    let (q, _) = quantize_model(&model, &[QuantizationConfig::default(); 2]).unwrap();
    let decoded = q.dequantize().unwrap();
    for x in gen_probes(20, 16, 4) {
        let a = forward_quantized(&q, &x, InferenceMode::Dequantized).unwrap();
        assert_eq!(a.values, forward_float(&decoded, &x).unwrap());
        assert_eq!(a.saturations, 0);
    }
}

#[test]
fn integer_mode_tracks_dequantized() {
    for seed in 0..10u64 {
        let dense = gen_model(&[16, 16], 0.05, seed).unwrap();
        let l = &dense.layers()[0];
        let linear = LayerDef::new(16, 16, l.weights.clone(), l.bias.clone(), Activation::None).unwrap();
        let model = FloatModel::new(vec![linear]).unwrap();
        let (q, _) = quantize_model(&model, &[QuantizationConfig::default()]).unwrap();
        let bound = 16.0 * 2f64.powi(-7);
        // Inputs stay below 1 - 2^-8 so they do not clip on entry.
        for x in gen_probes(20, 16, 100 + seed).into_iter().map(|p| p.iter().map(|v| v * 0.99).collect::<Vec<_>>()) {
            let fixed = forward_quantized(&q, &x, InferenceMode::integer_default()).unwrap();
            let real = forward_quantized(&q, &x, InferenceMode::Dequantized).unwrap();
            assert_eq!(fixed.saturations, 0, "seed {seed}");
            for (a, b) in fixed.values.iter().zip(&real.values) {
                assert!((a - b).abs() <= bound, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn batch_matches_sequential() {
    let model = gen_model(&[10, 6, 2], 0.2, 8).unwrap();
    let (q, _) = quantize_model(&model, &[QuantizationConfig::default(); 2]).unwrap();
    let probes = gen_probes(15, 10, 9);
    for mode in [InferenceMode::Dequantized, InferenceMode::integer_default()] {
        let batch = forward_batch(&q, &probes, mode).unwrap();
        for (x, out) in probes.iter().zip(&batch) {
            assert_eq!(&forward_quantized(&q, x, mode).unwrap(), out);
        }
    }
}

#[test]
fn zero_lut_yields_activated_bias() {
    let bias = vec![0.25f32, -0.5, 0.125];
    let layer = LayerDef::new(3, 4, vec![0.0; 12], bias, Activation::Relu).unwrap();
    let model = FloatModel::new(vec![layer]).unwrap();
    let (q, _) = quantize_model(&model, &[QuantizationConfig::default()]).unwrap();
    assert!(q.layers()[0].lut.levels().iter().all(|&v| v == 0.0));
    for mode in [InferenceMode::Dequantized, InferenceMode::integer_default()] {
        let out = forward_quantized(&q, &[0.3, 0.9, 0.1, 0.5], mode).unwrap();
        assert_eq!(out.values, vec![0.25, 0.0, 0.125]);
    }
}

#[test]
fn vbs_never_hurts_range_split() {
    for seed in 0..10u64 {
        let values = clamped_normal(2048, 0.1, seed).unwrap();
        let dist = EmpiricalDistribution::new(&values).unwrap();
        let mse = |scheme| {
            let b = build_codebook(&dist, &layer_config(scheme)).unwrap();
            let d = decode_codes(&encode_params(&values, &b.intervals), &b.lut).unwrap();
            values.iter().zip(&d).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / values.len() as f64
        };
        assert!(mse(Scheme::RangeSplitVbs) <= mse(Scheme::RangeSplit), "seed {seed}");
    }
}

#[test]
fn cordic_error_shrinks_with_iterations() {
    let fmt = QFormat::new(16, 15, true).unwrap();
    let mut rng_state = 12345u64;
    let mut next = || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((rng_state >> 33) as f64 / (1u64 << 31) as f64) * 1.4 - 0.7
    };
    let points: Vec<(f64, f64)> = (0..1000).map(|_| (next(), next())).collect();
    let worst = |iters: u32| {
        points
            .iter()
            .map(|&(re, im)| {
                let (a, b) = (to_fixed(re, fmt).unwrap(), to_fixed(im, fmt).unwrap());
                let (mag, _) = cordic_magnitude_phase(a, b, iters).unwrap();
                (mag - a.to_f64().hypot(b.to_f64())).abs()
            })
            .fold(0.0, f64::max)
    };
    let errors: Vec<f64> = (8..=20).map(worst).collect();
    // Past ~14 iterations the 30-bit working precision is the floor; allow
    // jitter well under one Q1.15 step there.
    assert!(errors.windows(2).all(|w| w[1] <= w[0] + 1e-8), "{errors:?}");
    assert!(errors[12] < 1e-5, "{errors:?}");
}

#[test]
fn sweep_rows_and_collisions() {
    let model = gen_model(&[32, 16, 4], 0.1, 11).unwrap();
    let probes = gen_probes(32, 32, 12);
    let spec =
        SweepSpec { layer: 0, schemes: Scheme::ALL.to_vec(), swept: QuantizationConfig::default(), fixed_other: None };
    let rows = scheme_sweep(&model, &probes, &spec).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.scheme.as_str()).collect();
    assert_eq!(names, ["U", "UVBS", "RS", "RSVBS"]);
    assert_eq!(rows, scheme_sweep(&model, &probes, &spec).unwrap());
    assert!(rows.iter().all(|r| r.weight_mse > 0.0 && r.output_mse >= 0.0));

    // A narrow layer: the internal grid is finer than Q1.7, so plain RS
    // merges levels while RSVBS keeps all sixteen apart.
    let mut weights: Vec<f32> = (0..920).map(|i| -0.02 + 0.04 * i as f32 / 919.0).collect();
    for i in 0..40 {
        let t = 0.1 + 0.8 * i as f32 / 39.0;
        weights.extend([t, -t]);
    }
    let narrow = LayerDef::new(20, 50, weights, vec![0.0; 20], Activation::Relu).unwrap();
    let (_, rs) = quantize_layer(&narrow, &layer_config(Scheme::RangeSplit)).unwrap();
    let (_, rsvbs) = quantize_layer(&narrow, &layer_config(Scheme::RangeSplitVbs)).unwrap();
    assert!(rs.lut.distinct_levels() < 16);
    assert_eq!(rsvbs.lut.distinct_levels(), 16);
}

#[test]
fn uvbs_equals_uniform_on_a_wide_layer() {
    // Weights reaching ±1 leave no headroom for a shift.
    let mut values = clamped_normal(500, 0.4, 6).unwrap();
    values.extend([1.0, -1.0]);
    let dist = EmpiricalDistribution::new(&values).unwrap();
    let u = build_codebook(&dist, &layer_config(Scheme::Uniform)).unwrap();
    let uvbs = build_codebook(&dist, &layer_config(Scheme::UniformVbs)).unwrap();
    assert_eq!(uvbs.lut.internal_shift(), 0);
    assert_eq!(u.lut.levels(), uvbs.lut.levels());
}

#[test]
fn quant_error_is_zero_for_representable_weights() {
    // Four distinct weights on the Q1.7 grid with n=2 are reproduced exactly.
    let weights = [-0.5f32, -0.125, 0.25, 0.75, 0.75, 0.25, -0.125, -0.5];
    let layer = LayerDef::new(2, 4, weights.to_vec(), vec![0.0, 0.0], Activation::None).unwrap();
    let model = FloatModel::new(vec![layer]).unwrap();
    let cfg = QuantizationConfig { n: 2, scheme: Scheme::Uniform, ..Default::default() };
    let (q, _) = quantize_model(&model, &[cfg]).unwrap();
    let report = quant_error(&model, &q, &gen_probes(4, 4, 1)).unwrap();
    assert_eq!(report.weight_mse, 0.0);
    assert_eq!(report.output_mse, Some(0.0));
}
