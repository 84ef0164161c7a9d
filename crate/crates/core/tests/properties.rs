//! Cross-module invariants over random signals, weights and families.

use proptest::prelude::*;
use sqfn_core::dyadic::{dilate_family, verify_sparse, DyadicInterval};
use sqfn_core::fourier::{self, BandFamily, ComplexSignal};
use sqfn_core::rng::{gaussian_signal, SplitMix64};
use sqfn_core::signal::Signal;
use sqfn_core::sparse::{build_sparse_from_carleson, principal_family, CarlesonSeq, StoppingParams};
use sqfn_core::walsh::{self, FreqFamily, TileTable};
use sqfn_core::weights::{weight_family, WeightKind};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn setup(n: u32, seed: u64) -> (Signal, FreqFamily, SplitMix64) {
    let mut rng = SplitMix64::new(seed);
    let f = gaussian_signal(n, &mut rng);
    let omega = FreqFamily::random(n, 4, &mut rng);
    (f, omega, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn walsh_square_function_is_homogeneous(n in 3u32..9, seed: u64, c in -8.0f64..8.0) {
        let (f, omega, _) = setup(n, seed);
        let tf = walsh::rdf_square_function(&f, &omega).unwrap();
        let tcf = walsh::rdf_square_function(&f.scaled(c), &omega).unwrap();
        for (a, b) in tf.samples().iter().zip(tcf.samples()) {
            prop_assert!(close(a * c.abs(), *b, 1e-12));
        }
    }

    #[test]
    fn walsh_square_function_is_bounded_by_the_norm(n in 3u32..9, seed: u64) {
        let (f, omega, _) = setup(n, seed);
        let tf = walsh::rdf_square_function(&f, &omega).unwrap();
        prop_assert!(tf.norm_sq() <= f.norm_sq() * (1.0 + 1e-12));
        let full = walsh::rdf_square_function(&f, &FreqFamily::singletons(n)).unwrap();
        prop_assert!(close(full.norm_sq(), f.norm_sq(), 1e-12));
    }

    #[test]
    fn packets_reproduce_the_projection_energy(n in 3u32..9, seed: u64) {
        let (f, omega, _) = setup(n, seed);
        let table = TileTable::new(&f);
        let packets = walsh::wp_square_function(&table, &omega.pieces());
        let direct = walsh::rdf_square_function(&f, &omega).unwrap();
        prop_assert!(close(packets.norm_sq(), direct.norm_sq(), 1e-11));
    }

    #[test]
    fn bessel_slack_is_nonnegative(n in 3u32..9, seed: u64) {
        let (f, omega, _) = setup(n, seed);
        let r = walsh::bessel_check(&f, &TileTable::new(&f), &omega.pieces());
        prop_assert!(r.min_slack >= -1e-12 * f.norm_sq());
    }

    #[test]
    fn layer_cake_chain_is_ordered(n in 3u32..8, seed: u64, alpha in 0.05f64..0.9) {
        let (f, omega, mut rng) = setup(n, seed);
        let w = weight_family(WeightKind::Power(alpha), n, &mut rng).unwrap();
        let r = walsh::layer_cake_bound_check(&f, &w, &omega.pieces()).unwrap();
        let tol = 1e-9 * r.maximal_bound;
        prop_assert!(close(r.direct, r.layer_cake, 1e-9));
        prop_assert!(r.layer_cake <= r.maximal_intervals + tol);
        prop_assert!(r.maximal_intervals <= r.bessel_bound + tol);
        prop_assert!(r.bessel_bound <= r.maximal_bound + tol);
    }

    #[test]
    fn characteristics_are_scale_invariant_and_ordered(n in 3u32..8, seed: u64, c in 0.01f64..100.0) {
        let mut rng = SplitMix64::new(seed);
        let w = weight_family(WeightKind::LogNormal(0.7), n, &mut rng).unwrap();
        let r = w.report();
        let s = w.scaled(c).unwrap().report();
        prop_assert!(close(r.a1, s.a1, 1e-10));
        prop_assert!(close(r.a2, s.a2, 1e-10));
        prop_assert!(r.a2 <= r.a1 * (1.0 + 1e-12));
        prop_assert!(r.a1_dyadic <= r.a1 * (1.0 + 1e-12));
        prop_assert!(r.a2 >= 1.0 - 1e-12);
    }

    #[test]
    fn dft_round_trip_and_band_bessel(n in 3u32..9, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        let f = gaussian_signal(n, &mut rng);
        let z = ComplexSignal::from_real(&f);
        let back = fourier::idft(&fourier::dft(&z));
        for (a, b) in z.values().iter().zip(back.values()) {
            prop_assert!((a - b).norm() < 1e-12 * (1.0 + f.sup()));
        }
        let bands = BandFamily::random(n, 4, &mut rng);
        let sq = fourier::rdf_square_function(&f, &bands).unwrap();
        prop_assert!(sq.norm_sq() <= f.norm_sq() * (1.0 + 1e-12));
    }

    #[test]
    fn stopping_family_packs_and_dominates(n in 3u32..8, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        let f = gaussian_signal(n, &mut rng);
        let entries: Vec<f64> = (0..(2usize << n) - 1)
            .map(|_| sqfn_core::rng::uniform(&mut rng).powi(3))
            .collect();
        let a = CarlesonSeq::new(entries, f.abs()).unwrap();
        let built = build_sparse_from_carleson(&a, &StoppingParams::default()).unwrap();
        prop_assert!(built.packing_ok());
        prop_assert!(built.family.eta >= 0.75);
        prop_assert!(verify_sparse(&built.family).ok);
        prop_assert!(built.min_slack >= -1e-9);
    }

    #[test]
    fn principal_intervals_are_sparse(n in 3u32..9, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        let f = sqfn_core::rng::cascade_signal(n, 0.8, &mut rng);
        let family = principal_family(&f, 4.0).unwrap();
        prop_assert!(family.eta >= 0.75);
        prop_assert!(verify_sparse(&family).ok);
    }

    #[test]
    fn dilate_families_are_sparse(n in 2u32..11, scale_seed: u64, pos_seed: u64) {
        let scale = (scale_seed % (n as u64 + 1)) as i32;
        let pos = (pos_seed % (1u64 << scale)) as i64;
        let family = dilate_family(&DyadicInterval::standard(scale, pos), n).unwrap();
        prop_assert!(verify_sparse(&family).ok);
    }
}
