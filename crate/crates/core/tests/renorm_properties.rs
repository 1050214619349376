mod common;

use common::{kernel_with_ratio, quadrature_ratio};
use hawkes_rf::renorm::RenormError;
use hawkes_rf::{renormalize, KernelFamily, KernelParams, RenormStrategy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Indices into `values()` that a strategy is allowed to move.
fn targets(strategy: RenormStrategy) -> &'static [usize] {
    use RenormStrategy::*;
    match strategy {
        OverAlpha | OverK | OverA | OverGamma => &[0],
        OverBeta | OverC | OverQ | OverEta => &[1],
        OverP => &[2],
        JointAlphaBeta | JointKC | JointAQ | JointGammaEta => &[0, 1],
        JointKP => &[0, 2],
    }
}

fn any_unstable_kernel() -> impl Strategy<Value = KernelParams> {
    (
        prop::sample::select(KernelFamily::ALL.to_vec()),
        1.01f64..6.0,
        any::<u64>(),
    )
        .prop_map(|(family, ratio, seed)| {
            kernel_with_ratio(&mut ChaCha8Rng::seed_from_u64(seed), family, ratio)
        })
}

fn skip_infeasible<T>(r: Result<T, RenormError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(RenormError::Infeasible { .. }) => None,
        Err(e) => panic!("unexpected error {e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hits_the_target_ratio(kernel in any_unstable_kernel(), eps in 0.001f64..0.5) {
        for &s in RenormStrategy::for_family(kernel.family()) {
            let Some(r) = skip_infeasible(renormalize(&kernel, s, eps, 1.0)) else { continue };
            let want = 1.0 / (1.0 + eps);
            // p' (or q') is stored next to 1 (or 2), so p'-1 carries an absolute
            // rounding error of one ulp
            let gap = match r.model.kernel {
                KernelParams::Pwl { p, .. } => p - 1.0,
                KernelParams::Qexp { q, .. } => 2.0 - q,
                _ => 1.0,
            };
            let tol = 1e-10 + 4.0 * f64::EPSILON / gap;
            prop_assert!((r.achieved_ratio - want).abs() <= tol, "{} {:?}: {}", s, kernel, r.achieved_ratio);
            let quad = quadrature_ratio(&r.model.kernel);
            prop_assert!((quad - want).abs() <= 1e-6, "{} {:?}: quadrature {}", s, r.model.kernel, quad);
        }
    }

    #[test]
    fn untargeted_parameters_are_untouched(kernel in any_unstable_kernel(), eps in 0.001f64..0.5) {
        for &s in RenormStrategy::for_family(kernel.family()) {
            let Some(r) = skip_infeasible(renormalize(&kernel, s, eps, 1.0)) else { continue };
            let (before, after) = (kernel.values(), r.model.kernel.values());
            for i in 0..before.len() {
                if !targets(s).contains(&i) {
                    prop_assert_eq!(before[i].to_bits(), after[i].to_bits(), "{} moved param {}", s, i);
                }
            }
        }
    }

    #[test]
    fn renormalizing_twice_changes_nothing(kernel in any_unstable_kernel(), eps in 0.001f64..0.5) {
        for &s in RenormStrategy::for_family(kernel.family()) {
            let Some(once) = skip_infeasible(renormalize(&kernel, s, eps, 1.0)) else { continue };
            let twice = renormalize(&once.model.kernel, s, eps, 1.0).unwrap();
            for (a, b) in once.model.kernel.values().iter().zip(twice.model.kernel.values()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{}: {} vs {}", s, a, b);
            }
        }
    }

    #[test]
    fn over_p_solves_its_defining_equation(kernel in any_unstable_kernel(), eps in 0.001f64..0.5) {
        let KernelParams::Pwl { c, p, .. } = kernel else { return Ok(()) };
        let Some(r) = skip_infeasible(renormalize(&kernel, RenormStrategy::OverP, eps, 1.0)) else { return Ok(()) };
        let KernelParams::Pwl { p: p_new, .. } = r.model.kernel else { unreachable!() };
        let delta = kernel.branching_ratio().unwrap() * (1.0 + eps) * (p - 1.0) * c.powf(p - 1.0);
        let lhs = (p_new - 1.0) * c.powf(p_new - 1.0);
        prop_assert!((lhs - delta).abs() <= 1e-10 * delta.max(1.0), "{} vs {}", lhs, delta);
    }
}

#[test]
fn over_p_is_continuous_through_c_equal_one() {
    let eps = 0.1;
    let at_one = |k: f64| KernelParams::pwl(k, 1.0, 3.0).unwrap();
    let reference = renormalize(&at_one(4.0), RenormStrategy::OverP, eps, 1.0).unwrap();
    let KernelParams::Pwl { p: p_ref, .. } = reference.model.kernel else {
        unreachable!()
    };
    for k in 4..=9 {
        for sign in [-1.0, 1.0] {
            let c = 1.0 + sign * 10f64.powi(-k);
            let kernel = KernelParams::pwl(4.0 * c.powf(2.0), c, 3.0).unwrap();
            let r = renormalize(&kernel, RenormStrategy::OverP, eps, 1.0).unwrap();
            let KernelParams::Pwl { p: p_new, .. } = r.model.kernel else {
                unreachable!()
            };
            // p' moves smoothly with c: no jump at c = 1
            assert!(
                (p_new - p_ref).abs() <= 30.0 * (c - 1.0).abs(),
                "c={c}: {p_new} vs {p_ref}"
            );
            let delta = kernel.branching_ratio().unwrap() * (1.0 + eps) * 2.0 * c.powf(2.0);
            assert!(
                ((p_new - 1.0) * c.powf(p_new - 1.0) - delta).abs() <= 1e-8,
                "c={c}"
            );
        }
    }
}

#[test]
fn qexp_crossing_one_reports_a_support_change() {
    let kernel = KernelParams::qexp(3.0, 1.5).unwrap();
    let r = renormalize(&kernel, RenormStrategy::OverQ, 0.1, 1.0).unwrap();
    let KernelParams::Qexp { q, .. } = r.model.kernel else {
        unreachable!()
    };
    assert!(q < 1.0 && r.support_changed);
    let r = renormalize(&kernel, RenormStrategy::OverA, 0.1, 1.0).unwrap();
    assert!(!r.support_changed);
}

#[test]
fn family_mismatch_is_rejected() {
    let kernel = KernelParams::exp(1.0, 0.5).unwrap();
    assert!(matches!(
        renormalize(&kernel, RenormStrategy::OverK, 0.1, 1.0),
        Err(RenormError::FamilyMismatch { .. })
    ));
}

#[test]
fn exponent_pushed_onto_its_boundary_is_infeasible() {
    // ratio 5 with p - 1 = 1e-11: the joint solve gives p' - 1 ≈ 2e-11, where
    // one ulp of p' is a relative error of ~1e-5 in the branching ratio
    let (c, gap) = (0.05f64, 1e-11);
    let kernel = KernelParams::pwl(5.0 * gap * c.powf(gap), c, 1.0 + gap).unwrap();
    let target_miss = renormalize(&kernel, RenormStrategy::JointKP, 0.1, 1.0);
    assert!(
        matches!(target_miss, Err(RenormError::Infeasible { .. })),
        "{target_miss:?}"
    );
    assert!(renormalize(&kernel, RenormStrategy::OverK, 0.1, 1.0).is_ok());
}
