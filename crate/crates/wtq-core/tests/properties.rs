//! Property tests for the quantizers, transport metrics, and bound laws.

use proptest::prelude::*;

use wtq_core::bounds;
use wtq_core::flow::rng;
use wtq_core::metrics::{self, WeightedAtoms};
use wtq_core::quant::{self, QuantMethodSpec, RangeRule};
use wtq_core::tensor::{dequantize, TensorContainer};

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1000.0f64..1000.0, 1..max_len)
}

fn atoms(max_len: usize) -> impl Strategy<Value = WeightedAtoms> {
    prop::collection::vec((-1000.0f64..1000.0, 0.01f64..1.0), 1..max_len).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|(_, m)| m).sum();
        let (pos, mass): (Vec<f64>, Vec<f64>) =
            pairs.into_iter().map(|(p, m)| (p, m / total)).unzip();
        // Compensate the normalization so the masses sum to 1 exactly enough.
        WeightedAtoms::new(pos, mass).expect("normalized atoms are valid")
    })
}

proptest! {
    #[test]
    fn w2_symmetry_and_identity(p in atoms(12), q in atoms(12)) {
        let pq = metrics::w2_1d(&p, &q);
        let qp = metrics::w2_1d(&q, &p);
        prop_assert!((pq - qp).abs() <= 1e-9 * (1.0 + pq.abs()));
        prop_assert!(metrics::w2_1d(&p, &p) <= 1e-12);
    }

    #[test]
    fn w2_triangle_inequality(p in atoms(10), q in atoms(10), r in atoms(10)) {
        let pr = metrics::w2_1d(&p, &r);
        let pq = metrics::w2_1d(&p, &q);
        let qr = metrics::w2_1d(&q, &r);
        prop_assert!(pr <= pq + qr + 1e-9, "{pr} > {pq} + {qr}");
    }

    #[test]
    fn w2_translation_equivariance(p in atoms(12), a in -100.0f64..100.0) {
        let shifted = WeightedAtoms::new(
            p.positions().iter().map(|x| x + a).collect(),
            p.masses().to_vec(),
        ).unwrap();
        prop_assert!((metrics::w2_1d(&p, &shifted) - a.abs()).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn quantization_w2_never_exceeds_mse(v in finite_vec(200), bits in 1u8..6) {
        let cq = quant::ot_equal_mass_quantize(&v, bits).unwrap();
        let recon: Vec<f64> = cq.assignments.iter()
            .map(|&a| cq.codebook.levels()[a as usize]).collect();
        let m = metrics::mse(&v, &recon).unwrap();
        let w2 = metrics::quantization_w2(&v, cq.codebook.levels(), &cq.assignments).unwrap();
        prop_assert!(w2 * w2 <= m + 1e-9, "W2^2 {} > MSE {}", w2 * w2, m);
    }

    #[test]
    fn uniform_absmax_half_step_bound(v in finite_vec(200), bits in 1u8..10) {
        let cq = quant::uniform_quantize(&v, bits, RangeRule::AbsMax).unwrap();
        let half = cq.range_meta / (1u64 << bits) as f64;
        for (&x, &a) in v.iter().zip(&cq.assignments) {
            let err = (x - cq.codebook.levels()[a as usize]).abs();
            prop_assert!(err <= half * (1.0 + 1e-12) + 1e-300, "{err} > {half}");
        }
    }

    #[test]
    fn equal_mass_bins_differ_by_at_most_one(n in 1usize..500, k_log in 0u32..8) {
        let k = 1usize << k_log;
        let sorted: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let part = quant::equal_mass_split(&sorted, k).unwrap();
        let lo = part.sizes.iter().min().unwrap();
        let hi = part.sizes.iter().max().unwrap();
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(part.sizes.iter().sum::<usize>(), n);
    }

    #[test]
    fn argmin_assignment_is_mse_optimal(v in finite_vec(60), bits in 1u8..4, seed in 0u64..1000) {
        // Against the same codebook, nearest-level assignment never loses to
        // a random assignment.
        let cq = quant::ot_equal_mass_quantize(&v, bits).unwrap();
        let levels = cq.codebook.levels();
        let opt = quant::reconstruction_mse(&v, levels, &cq.assignments);
        let k = levels.len() as u64;
        let random: Vec<u32> = (0..v.len())
            .map(|i| (rng::mix(seed, i as u64, 0, 3) % k) as u32)
            .collect();
        let other = quant::reconstruction_mse(&v, levels, &random);
        prop_assert!(opt <= other + 1e-12);
    }

    #[test]
    fn oracle_chain_on_small_inputs(v in prop::collection::vec(-50.0f64..50.0, 2..12), k_log in 0u32..3) {
        let bits = (k_log + 1) as u8; // 2, 4, or 8 levels
        let k = 1usize << bits;
        if k <= 4 {
            let cq = quant::ot_equal_mass_quantize(&v, bits).unwrap();
            let em = quant::reconstruction_mse(&v, cq.codebook.levels(), &cq.assignments);
            let refined = quant::lloyd_max_refine(&v, &cq.codebook, 200);
            let asg: Vec<u32> = v.iter()
                .map(|&x| quant::nearest_level_index(refined.levels(), x) as u32)
                .collect();
            let lloyd = quant::reconstruction_mse(&v, refined.levels(), &asg);
            let (_, best) = quant::brute_force_optimal_partition(&v, k).unwrap();
            prop_assert!(best <= lloyd + 1e-9, "brute {best} > lloyd {lloyd}");
            prop_assert!(lloyd <= em + 1e-9, "lloyd {lloyd} > equal-mass {em}");
        }
    }

    #[test]
    fn dequantize_emits_only_codebook_values(v in finite_vec(100), bits in 1u8..4) {
        let t = TensorContainer::from_f64(vec![v.len()], v.clone()).unwrap();
        let art = quant::quantize_tensor(&t, &QuantMethodSpec::OtEqualMass { bits }, false).unwrap();
        let back = dequantize(&art);
        for x in back.values() {
            prop_assert!(art.codebooks()[0].contains(&x));
        }
    }

    #[test]
    fn psnr_decreases_as_mse_increases(scale in 1.5f64..50.0) {
        let a = vec![0.0; 32];
        let b: Vec<f64> = (0..32).map(|i| ((i % 7) as f64) * 0.1).collect();
        let worse: Vec<f64> = b.iter().map(|x| x * scale).collect();
        let p1 = metrics::psnr(&a, &b, 255.0).unwrap();
        let p2 = metrics::psnr(&a, &worse, 255.0).unwrap();
        prop_assert!(p2 < p1);
    }

    #[test]
    fn ssim_identity_and_symmetry(v in prop::collection::vec(0.0f64..1.0, 16..64)) {
        let shifted: Vec<f64> = v.iter().map(|x| 1.0 - x).collect();
        let s_ab = metrics::ssim_global(&v, &shifted, 1.0).unwrap();
        let s_ba = metrics::ssim_global(&shifted, &v, 1.0).unwrap();
        prop_assert_eq!(s_ab, s_ba);
        let s_aa = metrics::ssim_global(&v, &v, 1.0).unwrap();
        prop_assert!((s_aa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_laws_scale_exactly(b in 1u8..15, c in 0.1f64..1e6) {
        // One added bit divides every bound by exactly 4.
        let d0 = bounds::bennett_distortion(c.cbrt(), b);
        let d1 = bounds::bennett_distortion(c.cbrt(), b + 1);
        prop_assert_eq!(d1, d0 / 4.0);
    }

    #[test]
    fn corollaries_agree(c_log in -6.0f64..6.0, gap in 0.1f64..12.0) {
        // ceil(min_bits) clamped to >= 1 equals the integer bit budget.
        let c = 10.0f64.powf(c_log);
        let goal = c / 2.0f64.powf(2.0 * gap);
        let b_int = bounds::bit_budget(goal, c).unwrap();
        let b_real = bounds::min_bits_for_fid(goal, c).unwrap();
        let rounded = b_real.ceil().max(1.0) as u32;
        prop_assert_eq!(b_int, rounded, "bit_budget {} vs ceil(min_bits) {}", b_int, rounded);
    }
}

/// Equal-mass beats uniform-absmax under heavy outliers at moderate bits;
/// seeded trials with the crate's own counter-based generator.
#[test]
fn tail_robustness_at_moderate_bits() {
    for seed in 0..20u64 {
        let n = 4000usize;
        let mut v: Vec<f64> = (0..n)
            .map(|i| rng::standard_normal(seed, i as u64, 0, 0))
            .collect();
        v[0] = 10.0;
        for bits in [2u8, 3, 4] {
            let ot = quant::ot_equal_mass_quantize(&v, bits).unwrap();
            let ot_mse = quant::reconstruction_mse(&v, ot.codebook.levels(), &ot.assignments);
            let un = quant::uniform_quantize(&v, bits, RangeRule::AbsMax).unwrap();
            let un_mse = quant::reconstruction_mse(&v, un.codebook.levels(), &un.assignments);
            assert!(
                ot_mse < un_mse,
                "seed {seed} bits {bits}: ot {ot_mse} >= uniform {un_mse}"
            );
        }
    }
}

/// The alpha estimator is scale-covariant: alpha(s v) = s^{2/3} alpha(v).
#[test]
fn alpha_scale_covariance() {
    let n = 200_000usize;
    let v: Vec<f64> = (0..n)
        .map(|i| rng::standard_normal(7, i as u64, 0, 0))
        .collect();
    let base = metrics::alpha_empirical(&v, 256).unwrap().value;
    for s in [0.5f64, 2.0, 10.0] {
        let scaled: Vec<f64> = v.iter().map(|x| s * x).collect();
        let est = metrics::alpha_empirical(&scaled, 256).unwrap().value;
        let ratio = est / base;
        let expect = s.powf(2.0 / 3.0);
        assert!(
            (ratio / expect - 1.0).abs() < 0.02,
            "scale {s}: ratio {ratio} vs {expect}"
        );
    }
}

/// Plug-in alpha approaches the Gaussian closed form at moderate sample size.
#[test]
fn alpha_empirical_tracks_gaussian() {
    let n = 300_000usize;
    let v: Vec<f64> = (0..n)
        .map(|i| rng::standard_normal(11, i as u64, 0, 0))
        .collect();
    let est = metrics::alpha_empirical(&v, 256).unwrap().value;
    let exact = bounds::alpha_gaussian(1.0);
    assert!(
        (est / exact - 1.0).abs() < 0.02,
        "estimate {est} vs exact {exact}"
    );
}
