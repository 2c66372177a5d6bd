use num_complex::Complex64;
use proptest::prelude::*;

use gowers::cubical::{conditional_mean_fit, cubical_convolution, multconv_approx, MultconvOptions, MultiaffineMap, Strategy as ConvStrategy};
use gowers::forms::{partition_rank_exhaustive, variety_outer_approx, MultiaffineForm, MultilinearForm, Variety};
use gowers::fourier::{convolve, fourier_transform, large_spectrum};
use gowers::inverse::{inverse_r1, witness_correlation, InverseConfig, R1Strategy};
use gowers::norms::{box_norm, directional_norm, directional_norm_direct, mixed_norm, uniformity_norm};
use gowers::spectrum::{mls_membership, twisted_box_value};
use gowers::symmetry::{psi_mixed_defect, psi_swap_defect, symmetrize, SymmetricSlice};
use gowers::table::{gen_polynomial_phase, gen_random_bounded, gen_random_unimodular, gen_structured, mult_derivative_idx};
use gowers::{Budget, CubicalFamily, FunctionTable, GroupSpec, Point, Polynomial, Subspace};

fn budget() -> Budget {
    Budget(1 << 40)
}

/// A prime and block dimensions with group order at most `cap`.
fn group(max_k: usize, cap: usize) -> impl Strategy<Value = GroupSpec> {
    (prop::sample::select(vec![2u32, 3, 5]), prop::collection::vec(1usize..=2, 1..=max_k))
        .prop_filter_map("group too large", move |(p, dims)| {
            let order = (p as usize).checked_pow(dims.iter().sum::<usize>() as u32)?;
            (order <= cap).then(|| GroupSpec::new(p, dims).unwrap())
        })
}

fn random_point(g: &GroupSpec, seed: u64) -> Point {
    g.point_of(seed as usize % g.order()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn index_point_roundtrip(g in group(3, 5000), seed in any::<u64>()) {
        let idx = seed as usize % g.order();
        let x = g.point_of(idx).unwrap();
        prop_assert_eq!(g.index_of(&x).unwrap(), idx);
    }

    #[test]
    fn subspace_closed_and_sized(g in group(3, 2000), a in any::<u64>(), b in any::<u64>()) {
        let h = Subspace::new(&g, &[random_point(&g, a), random_point(&g, b)]).unwrap();
        let pts = h.indices();
        let set: std::collections::BTreeSet<usize> = pts.iter().copied().collect();
        prop_assert_eq!(pts.len(), (g.p() as usize).pow(h.rank() as u32));
        for &x in &pts {
            prop_assert!(set.contains(&g.neg_idx(x)));
            for &y in pts.iter().take(8) {
                prop_assert!(set.contains(&g.add_idx(x, y)));
            }
        }
    }

    #[test]
    fn character_orthogonality(g in group(3, 2000), seed in any::<u64>()) {
        let r = seed as usize % g.order();
        let s: Complex64 = (0..g.order()).map(|x| g.omega(g.dot_idx(r, x))).sum::<Complex64>() / g.order() as f64;
        let want = if r == 0 { 1.0 } else { 0.0 };
        prop_assert!((s - Complex64::new(want, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn derivatives_commute(g in group(3, 500), seed in any::<u64>(), h1 in any::<u64>(), h2 in any::<u64>()) {
        let f = gen_random_bounded(&g, seed);
        let (h1, h2) = (h1 as usize % g.order(), h2 as usize % g.order());
        let a = mult_derivative_idx(&mult_derivative_idx(&f, h1), h2);
        let b = mult_derivative_idx(&mult_derivative_idx(&f, h2), h1);
        prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn phase_dies_after_enough_derivatives(seed in any::<u64>(), hs in prop::collection::vec(any::<u64>(), 4)) {
        let g = GroupSpec::new(5, vec![1, 1]).unwrap();
        let d = 1 + seed as u32 % 3;
        let mut f = gen_polynomial_phase(&g, &Polynomial::random(&g, d, seed)).unwrap();
        for h in hs.iter().take(d as usize + 1) {
            f = mult_derivative_idx(&f, *h as usize % g.order());
        }
        prop_assert!(f.values().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-9));
    }

    #[test]
    fn table_json_roundtrip(g in group(3, 500), seed in any::<u64>()) {
        let f = gen_random_bounded(&g, seed);
        prop_assert_eq!(FunctionTable::from_json(&f.to_json().unwrap()).unwrap(), f);
    }

    #[test]
    fn convolution_theorem(g in group(3, 729), seed in any::<u64>()) {
        let (f, h) = (gen_random_bounded(&g, seed), gen_random_bounded(&g, seed ^ 1));
        let lhs = fourier_transform(&convolve(&f, &h).unwrap());
        let (fh, hh) = (fourier_transform(&f), fourier_transform(&h));
        for r in 0..g.order() {
            prop_assert!((lhs.get(r) - fh.get(r) * hh.get(r).conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn large_spectrum_size(g in group(3, 729), seed in any::<u64>(), eps in 0.05f64..1.0) {
        let n = large_spectrum(&gen_random_bounded(&g, seed), eps).unwrap().len();
        prop_assert!(n as f64 * eps * eps <= 1.0 + 1e-9);
    }

    #[test]
    fn power_averages_are_nonnegative_reals(g in group(2, 81), seed in any::<u64>(), r in 2usize..=3) {
        let f = gen_random_bounded(&g, seed);
        for res in [uniformity_norm(&f, r, budget()).unwrap(), mixed_norm(&f, r - 1, budget()).unwrap()] {
            prop_assert!(res.imag_residual <= 1e-6 && res.power_average >= -1e-6);
        }
    }

    #[test]
    fn directional_triangle_inequality(g in group(2, 81), seed in any::<u64>(), r in 2usize..=3) {
        let (f, h) = (gen_random_bounded(&g, seed), gen_random_bounded(&g, seed ^ 7));
        let half = |t: &FunctionTable| FunctionTable::from_fn(&g, |x| t.get(x) * 0.5).unwrap();
        let (f, h) = (half(&f), half(&h));
        let sum = FunctionTable::from_fn(&g, |x| f.get(x) + h.get(x)).unwrap();
        let hs: Vec<Subspace> = (0..r).map(|i| if i % 2 == 0 { Subspace::full(&g) } else { Subspace::block(&g, 0) }).collect();
        let n = |t: &FunctionTable| directional_norm(t, &hs, budget()).unwrap().value;
        prop_assert!(n(&sum) <= n(&f) + n(&h) + 1e-9);
    }

    #[test]
    fn recursive_matches_direct(g in group(2, 81), seed in any::<u64>(), a in any::<u64>()) {
        let f = gen_random_bounded(&g, seed);
        let line = Subspace::new(&g, &[random_point(&g, a)]).unwrap();
        let hs = vec![line, Subspace::full(&g), Subspace::block(&g, 0)];
        let x = directional_norm(&f, &hs, budget()).unwrap();
        let y = directional_norm_direct(&f, &hs, budget()).unwrap();
        prop_assert!((x.value - y.value).abs() < 1e-9);
    }

    #[test]
    fn bias_is_real_in_unit_interval(p in prop::sample::select(vec![2u32, 3, 5]), seed in any::<u64>()) {
        let form = MultilinearForm::random(p, vec![1, 2, 1], seed);
        let b = form.bias().unwrap();
        let affine = MultiaffineForm::from_multilinear(&form).bias().unwrap();
        prop_assert!(affine.im.abs() <= 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&b));
    }

    #[test]
    fn partition_witness_reconstructs(p in prop::sample::select(vec![2u32, 3]), seed in any::<u64>()) {
        let form = MultilinearForm::random(p, vec![1, 2, 1], seed);
        let res = partition_rank_exhaustive(&form, 2, budget()).unwrap();
        prop_assert_eq!(res.upper_witness.reconstruct(p, form.blocks()), form.clone());
        if let Some(w) = res.witness {
            prop_assert_eq!(w.reconstruct(p, form.blocks()), form);
        }
    }

    #[test]
    fn outer_approximation_contains_variety(seed in any::<u64>(), s in 1usize..=2) {
        let a: Vec<MultiaffineForm> = (0..3).map(|i| MultiaffineForm::random(2, vec![2, 1], seed + i)).collect();
        let out = variety_outer_approx(&a, 2, &[2, 1], s, seed, 10).unwrap();
        let dom = GroupSpec::new(2, vec![2, 1]).unwrap();
        let in_a = Variety::new(2, &[2, 1], a).unwrap().materialize(&dom, budget()).unwrap();
        let in_phi = Variety::new(2, &[2, 1], out.phi).unwrap().materialize(&dom, budget()).unwrap();
        prop_assert!(in_a.iter().zip(&in_phi).all(|(x, y)| !*x || *y));
    }

    #[test]
    fn cubical_convolution_bounded(g in group(2, 81), seed in any::<u64>()) {
        let fam = CubicalFamily::new(&g, (0..1u64 << g.k()).map(|m| gen_random_bounded(&g, seed + m)).collect()).unwrap();
        let boxf = cubical_convolution(&fam, budget()).unwrap();
        prop_assert!(boxf.values().iter().all(|v| v.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn conditional_means_are_optimal(seed in any::<u64>(), which in any::<usize>(), sign in any::<bool>()) {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let t = gen_random_bounded(&g, seed);
        let map = MultiaffineMap::new(&g, vec![MultiaffineForm::random(3, vec![1, 1], seed)]).unwrap();
        let fit = conditional_mean_fit(&t, &map).unwrap();
        let mut moved = fit.clone();
        let key = *moved.c.keys().nth(which % moved.c.len()).unwrap();
        *moved.c.get_mut(&key).unwrap() += if sign { 0.01 } else { -0.01 };
        prop_assert!(moved.error_against(&t).unwrap() >= fit.l2_error - 1e-12);
    }

    #[test]
    fn multconv_error_recomputes(seed in any::<u64>()) {
        let g = GroupSpec::new(2, vec![1, 2]).unwrap();
        let fam = CubicalFamily::uniform(&gen_random_unimodular(&g, seed));
        let opts = MultconvOptions { budget: budget(), max_components: 2, ..MultconvOptions::default() };
        let res = multconv_approx(&fam, 0.2, ConvStrategy::Exhaustive, &opts).unwrap();
        let boxf = cubical_convolution(&fam, budget()).unwrap();
        prop_assert!((res.fit.error_against(&boxf).unwrap() - res.fit.l2_error).abs() < 1e-9);
    }

    #[test]
    fn additive_derivatives_commute(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let g = GroupSpec::new(5, vec![1, 2]).unwrap();
        let poly = Polynomial::random(&g, 3, seed);
        let (a, b) = (random_point(&g, a), random_point(&g, b));
        let ab = poly.additive_derivative(&g, &a).unwrap().additive_derivative(&g, &b).unwrap();
        let ba = poly.additive_derivative(&g, &b).unwrap().additive_derivative(&g, &a).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn symmetrize_kills_defects(seed in any::<u64>(), r in 2usize..=3) {
        let dims = [1usize, 2];
        let mut blocks = vec![3; r - 1];
        blocks.extend_from_slice(&dims);
        let rho = symmetrize(&MultilinearForm::random(5, blocks, seed), &dims).unwrap();
        for i in 0..r - 1 {
            for j in i + 1..r - 1 {
                prop_assert!(psi_swap_defect(&rho, &dims, i, j).unwrap().is_zero());
            }
            for j in 0..dims.len() {
                prop_assert!(psi_mixed_defect(&rho, &dims, i, j).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn slices_reconstruct(seed in any::<u64>()) {
        let psi = MultilinearForm::random(3, vec![3, 3, 1, 2], seed);
        let s = SymmetricSlice::from_psi(&psi, &[1, 2]).unwrap();
        prop_assert_eq!(s.reconstruct(), psi);
    }

    #[test]
    fn r1_witness_verifies_and_dominates(p in prop::sample::select(vec![2u32, 3]), seed in any::<u64>()) {
        let g = GroupSpec::new(p, vec![1, 2]).unwrap();
        let f = gen_random_bounded(&g, seed);
        let w = inverse_r1(&f, R1Strategy::Exhaustive, &InverseConfig { budget: budget(), ..InverseConfig::default() }).unwrap();
        w.verify(&f).unwrap();
        prop_assert!((witness_correlation(&f, &w).unwrap() - w.correlation).norm() < 1e-9);
        let total = MultilinearForm::count(p, g.dims()).unwrap();
        let best = (0..total)
            .map(|i| twisted_box_value(&f, &MultilinearForm::from_index(p, g.dims().to_vec(), i)).unwrap())
            .fold(0.0, f64::max);
        prop_assert!(w.correlation.norm() >= best.powi(1 << g.k()) - 1e-9);
    }

    #[test]
    fn mls_shift_identity(seed in any::<u64>(), nu_seed in any::<u64>(), eps in 0.1f64..0.9) {
        let g = GroupSpec::new(3, vec![1, 1]).unwrap();
        let f = gen_random_bounded(&g, seed);
        let mu = MultilinearForm::random(3, vec![1, 1], seed ^ 3);
        let nu = MultilinearForm::random(3, vec![1, 1], nu_seed);
        let twisted = f.twist(&nu.neg().eval_all().unwrap());
        let (a, va) = mls_membership(&f, &mu, eps).unwrap();
        let (b, vb) = mls_membership(&twisted, &mu.add(&nu).unwrap(), eps).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((va - vb).abs() < 1e-12);
    }

    #[test]
    fn box_value_ignores_lower_order_factors(seed in any::<u64>()) {
        let g = GroupSpec::new(3, vec![1, 2]).unwrap();
        let f = gen_random_bounded(&g, seed);
        let lower = gen_structured(&g, &Polynomial::zero(3), seed ^ 5).unwrap();
        let h = f.mul(&lower).unwrap();
        prop_assert!((box_norm(&f).unwrap().value - box_norm(&h).unwrap().value).abs() < 1e-9);
    }
}

#[test]
fn bias_orders_against_partition_rank() {
    let forms: Vec<MultilinearForm> = (0..16u128).map(|i| MultilinearForm::from_index(2, vec![2, 2], i)).collect();
    let ranked: Vec<(usize, f64)> = forms
        .iter()
        .map(|f| (partition_rank_exhaustive(f, 2, budget()).unwrap().rank.unwrap(), f.bias().unwrap()))
        .collect();
    for &(ra, ba) in &ranked {
        assert!((ba - 2f64.powi(-(ra as i32))).abs() < 1e-12);
        for &(rb, bb) in &ranked {
            if ra < rb {
                assert!(ba > bb);
            }
        }
    }
}
