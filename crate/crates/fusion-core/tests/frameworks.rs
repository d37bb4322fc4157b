use fusion_core::frameworks::{
    generic_ub_eif_discrete, naive_vs_obedient_demo, reconstruct_joint, Framework, FrameworkKind,
    FrameworkParams, FusedFramework,
};
use fusion_core::influence::{
    eif_project, eif_solve, gradient_residual, lift_to_observed, two_source_solve, variance,
};
use fusion_core::model::check_alignment;
use fusion_core::score::FusedModel;
use fusion_core::verify::{random_instance, random_pmf};
use fusion_core::{Axis, AxisSet, Pmf, PmfMode, RealTable};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn identification_functional_recovers_target() {
    let mut r = rng(1);
    for kind in FrameworkKind::ALL {
        for _ in 0..5 {
            let inst = random_instance(kind, &mut r).unwrap();
            let law = inst.law().unwrap();
            let fw = &inst.framework;
            let psi = fw.psi(&inst.q).unwrap();
            let phi = fw.phi(&law).unwrap();
            assert!((phi - psi).abs() < 1e-10, "{kind}: {phi} vs {psi}");
        }
    }
}

#[test]
fn reconstructed_ideal_law_is_aligned() {
    let mut r = rng(2);
    for kind in FrameworkKind::ALL {
        let inst = random_instance(kind, &mut r).unwrap();
        let law = inst.law().unwrap();
        let fw = &inst.framework;
        let q = fw.reconstruct_q(&law).unwrap();
        let rep = check_alignment(&law, &q, fw.spec()).unwrap();
        assert!(rep.aligned, "{kind}: {rep:?}");
        assert!((fw.psi(&q).unwrap() - fw.psi(&inst.q).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn closed_forms_solve_the_gradient_equation() {
    let mut r = rng(3);
    for kind in FrameworkKind::ALL {
        for _ in 0..3 {
            let inst = random_instance(kind, &mut r).unwrap();
            let law = inst.law().unwrap();
            let model = inst.model().unwrap();
            let fw = &inst.framework;
            let psi1 = fw.ideal_if(&inst.q).unwrap();
            let cf = fw.closed_form_if(&law).unwrap();
            assert!(law.expect(&cf).abs() < 1e-12, "{kind}: not centered");
            let res = gradient_residual(&model, &cf, &psi1);
            assert!(res < 1e-9, "{kind}: gradient residual {res}");
        }
    }
}

#[test]
fn efficient_influence_functions_agree() {
    let mut r = rng(4);
    for kind in FrameworkKind::ALL {
        for _ in 0..3 {
            let inst = random_instance(kind, &mut r).unwrap();
            let law = inst.law().unwrap();
            let model = inst.model().unwrap();
            let fw = &inst.framework;
            let psi1 = fw.ideal_if(&inst.q).unwrap();
            let eif = fw.eif(&law).unwrap();
            let proj = eif_project(&model, &fw.closed_form_if(&law).unwrap());
            let solved = eif_solve(&model, &psi1).unwrap();
            assert!(max_diff(&eif, &proj) < 1e-9, "{kind}: framework vs projection");
            assert!(max_diff(&proj, &solved.phi) < 1e-9, "{kind}: projection vs solver");
        }
    }
}

#[test]
fn family_directions_are_gradient_null() {
    let mut r = rng(5);
    for kind in [FrameworkKind::TransportIiia, FrameworkKind::UbFull] {
        let inst = random_instance(kind, &mut r).unwrap();
        let law = inst.law().unwrap();
        let model = inst.model().unwrap();
        let fw = &inst.framework;
        let fam = fw.if_family(&law).unwrap();
        assert!(fam.dim() > 0);
        let psi1 = fw.ideal_if(&inst.q).unwrap();
        let coeffs: Vec<f64> = (0..fam.dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        let member = fam.member(&coeffs);
        assert!(gradient_residual(&model, &member, &psi1) < 1e-9);
        let eif = fw.eif(&law).unwrap();
        assert!(variance(&law, &eif) < variance(&law, &member));
    }
}

#[test]
fn ub_discrete_eif_matches_solver() {
    let mut r = rng(6);
    for kind in [FrameworkKind::UbFull, FrameworkKind::TransportIiia] {
        let inst = random_instance(kind, &mut r).unwrap();
        let law = inst.law().unwrap();
        let model = inst.model().unwrap();
        let fw = &inst.framework;
        let roles = fw.ub_roles().unwrap();
        let psi1 = fw.ideal_if(&inst.q).unwrap();
        let ub = generic_ub_eif_discrete(&law, fw.spec(), &roles, &inst.q, &psi1).unwrap();
        let solved = eif_solve(&model, &psi1).unwrap();
        assert!(max_diff(&ub.phi, &solved.phi) < 1e-9, "{kind}");
    }
}

#[test]
fn tsiv_closed_form_matches_pipeline_at_matched_index() {
    let mut r = rng(7);
    for _ in 0..5 {
        let inst = random_instance(FrameworkKind::Tsiv, &mut r).unwrap();
        let law = inst.law().unwrap();
        let model = inst.model().unwrap();
        let tsiv = inst.framework.as_tsiv().unwrap();
        let g: Vec<[f64; 2]> = (0..3)
            .map(|_| [r.random_range(0.5..1.5), r.random_range(-1.0..1.0)])
            .collect();
        let psi1 = tsiv.ideal_if_with(&inst.q, &g).unwrap();
        let t = tsiv.index_for_ideal(&law, &inst.q, &g).unwrap();
        let [_, slope] = tsiv.tsiv_if(&law, &t).unwrap();
        let lifted = lift_to_observed(&model, &two_source_solve(&model, &psi1).unwrap());
        assert!(max_diff(&slope, &lifted) < 1e-10);
    }
}

#[test]
fn tsiv_rejects_weak_instrument() {
    let ideal = FrameworkKind::Tsiv.default_ideal();
    let fw = Framework::new(FrameworkKind::Tsiv, &ideal, &FrameworkParams::default()).unwrap();
    let q = Pmf::uniform(ideal);
    let mut r = rng(8);
    let u: Vec<Pmf> = fw.spec().chains.iter().map(|c| random_pmf(&c.z_space, &mut r)).collect();
    let law = fusion_core::model::assemble_observed_law(&q, &u, &[0.5, 0.5], fw.spec()).unwrap();
    let err = fw.phi(&law).unwrap_err();
    assert_eq!(err.class(), fusion_core::ErrorClass::Validation, "{err}");
}

#[test]
fn joint_reconstruction_round_trip() {
    let mut r = rng(9);
    let space = AxisSet::new(vec![Axis::indexed("B", 3), Axis::indexed("U", 4)]).unwrap();
    for _ in 0..20 {
        let q = random_pmf(&space, &mut r);
        let u_given_b = q.conditional(&["U"], &["B"]).unwrap();
        let b_given_u = q.conditional(&["B"], &["U"]).unwrap();
        let nb = 3;
        let b_space = space.sub(&["B"]).unwrap();
        let b_given_u0 = RealTable::new(b_space, b_given_u.values[..nb].to_vec()).unwrap();
        let joint = reconstruct_joint(&u_given_b, &b_given_u0, &["0"]).unwrap();
        assert!(max_diff(joint.mass(), q.mass()) < 1e-12);
        let back = joint.conditional(&["U"], &["B"]).unwrap();
        assert!(max_diff(&back.values, &u_given_b.values) < 1e-12);
    }
}

fn full_ub_model(q: Pmf, r: &mut ChaCha8Rng) -> FusedModel {
    let fw = Framework::with_defaults(FrameworkKind::UbFull);
    let u: Vec<Pmf> = fw.spec().chains.iter().map(|c| random_pmf(&c.z_space, r)).collect();
    FusedModel::new(q, u, vec![0.5, 0.5], fw.spec().clone()).unwrap()
}

#[test]
fn single_source_influence_function_is_inefficient_without_invertible_map() {
    let mut r = rng(10);
    let fw = Framework::with_defaults(FrameworkKind::UbFull);
    let roles = fw.ub_roles().unwrap();
    let q = random_pmf(&fw.spec().ideal, &mut r);
    let demo = naive_vs_obedient_demo(&full_ub_model(q, &mut r), &roles, 0, 0).unwrap();
    assert!(!demo.invertible);
    assert!(demo.gap > 1e-6, "{demo:?}");
    assert!(demo.naive_gradient_residual < 1e-9);
    assert!(demo.eff_gradient_residual < 1e-9);
}

#[test]
fn single_source_influence_function_is_efficient_with_invertible_map() {
    let mut r = rng(11);
    let fw = Framework::with_defaults(FrameworkKind::UbFull);
    let roles = fw.ub_roles().unwrap();
    let space = &fw.spec().ideal;
    let perm = [2usize, 0, 1];
    let w: Vec<f64> = (0..space.len())
        .map(|c| {
            let (u, b) = (c / 3, c % 3);
            if perm[b] == u {
                r.random_range(0.2..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let q = Pmf::from_weights(space.clone(), w, PmfMode::Relaxed).unwrap();
    let demo = naive_vs_obedient_demo(&full_ub_model(q, &mut r), &roles, 0, 0).unwrap();
    assert!(demo.invertible);
    assert!(demo.gap.abs() <= 1e-12, "{demo:?}");
}

#[test]
fn free_directions_span_closed_form_minus_pipeline() {
    let mut r = rng(12);
    for kind in [FrameworkKind::TransportIiia, FrameworkKind::UbFull] {
        let inst = random_instance(kind, &mut r).unwrap();
        let law = inst.law().unwrap();
        let model = inst.model().unwrap();
        let fw = &inst.framework;
        let fam = fw.if_family(&law).unwrap();
        let psi1 = fw.ideal_if(&inst.q).unwrap();
        let lifted = lift_to_observed(&model, &two_source_solve(&model, &psi1).unwrap());
        let diff: Vec<f64> = lifted.iter().zip(&fam.base).map(|(a, b)| a - b).collect();
        let n = diff.len();
        let m = DMatrix::from_fn(n, fam.dim(), |i, j| fam.directions[j][i]);
        let (x, res) = fusion_core::discrete::linalg::lstsq_min_norm(&m, &DVector::from_vec(diff));
        assert!(res < 1e-10, "{kind}: residual {res}");
        let member = fam.member(x.as_slice());
        assert!(max_diff(&member, &lifted) < 1e-10);
    }
}
