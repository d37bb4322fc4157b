use std::path::PathBuf;

use fusion_core::model::{
    assemble_observed_law, c_equivalent, check_alignment, FusedLaw, LoadedModel, ModelFile,
};
use fusion_core::verify::{numerical_score, random_direction, random_model};
use fusion_core::{Error, Pmf, PmfMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn shipped_models_load_with_the_expected_alignment() {
    let full = LoadedModel::read(&model_path("ub-full.json")).unwrap();
    assert!(check_alignment(&full.law, &full.q, &full.spec).unwrap().aligned);
    let bad = LoadedModel::read(&model_path("ub-misaligned.json")).unwrap();
    let rep = check_alignment(&bad.law, &bad.q, &bad.spec).unwrap();
    assert!(!rep.aligned);
    assert!(!rep.flagged().is_empty());
}

#[test]
fn model_files_round_trip() {
    let m = LoadedModel::read(&model_path("ub-full.json")).unwrap();
    let text = serde_json::to_string(&m.to_file()).unwrap();
    let back = ModelFile::from_json(&text).unwrap().resolve().unwrap();
    assert_eq!(back.spec.spec, m.spec.spec);
    assert_eq!(back.law.lambda, m.law.lambda);
    for (a, b) in back.law.sources.iter().zip(&m.law.sources) {
        assert_eq!(a.space(), b.space());
        for (x, y) in a.mass().iter().zip(b.mass()) {
            assert!((x - y).abs() <= 2.0 * f64::EPSILON);
        }
    }
}

#[test]
fn model_files_reject_inconsistent_input() {
    let m = LoadedModel::read(&model_path("ub-full.json")).unwrap();
    let mut file = m.to_file();
    file.derive_from_ideal = true;
    assert!(matches!(file.clone().resolve(), Err(Error::InvalidSpec(_))));
    file.derive_from_ideal = false;
    file.source_laws = None;
    assert!(matches!(file.clone().resolve(), Err(Error::InvalidSpec(_))));
    let mut short = m.to_file();
    short.tangent_basis = Some(vec![vec![0.0; 2]]);
    assert!(matches!(short.resolve(), Err(Error::ShapeMismatch { .. })));
    assert!(ModelFile::from_json("{\"ideal\": 3}").is_err());
}

#[test]
fn assembled_laws_are_aligned_and_perturbations_are_flagged() {
    let mut r = rng(11);
    for sources in 1..=3 {
        let model = random_model(sources, &mut r).unwrap();
        let law = &model.law;
        assert!(check_alignment(law, &model.q, &model.spec).unwrap().aligned);

        // Tilt every ideal cell; at least one aligned block must move.
        let tilted: Vec<f64> = model
            .q
            .mass()
            .iter()
            .enumerate()
            .map(|(i, m)| m * (1.0 + 0.3 * ((i % 3) as f64 - 1.0)))
            .collect();
        let q2 = Pmf::from_weights(model.q.space().clone(), tilted, PmfMode::Strict).unwrap();
        if !c_equivalent(&model.q, &q2, &model.spec) {
            let rep = check_alignment(law, &q2, &model.spec).unwrap();
            assert!(!rep.aligned, "{sources} sources: {rep:?}");
        }

        // Reassembling from the source laws themselves reproduces the law.
        let again = assemble_observed_law(&model.q, &law.sources, &law.lambda, &model.spec).unwrap();
        for (a, b) in again.sources.iter().zip(&law.sources) {
            for (x, y) in a.mass().iter().zip(b.mass()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn fused_law_validates_lambda() {
    let s = fusion_core::AxisSet::new(vec![fusion_core::Axis::indexed("A", 2)]).unwrap();
    let p = Pmf::uniform(s);
    assert!(FusedLaw::new(vec![0.5, 0.5], vec![p.clone(), p.clone()]).is_ok());
    assert!(FusedLaw::new(vec![0.7, 0.5], vec![p.clone(), p.clone()]).is_err());
    assert!(FusedLaw::new(vec![1.0], vec![p.clone(), p]).is_err());
}

#[test]
fn score_operator_matches_finite_differences() {
    let mut r = rng(12);
    for sources in 1..=3 {
        let model = random_model(sources, &mut r).unwrap();
        for _ in 0..3 {
            let h = random_direction(&model, &mut r);
            let exact = model.apply_a(&h);
            let numeric = numerical_score(&model, &h, 1e-4).unwrap();
            let err = exact
                .iter()
                .zip(&numeric)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-8, "{sources} sources: {err}");
        }
    }
}

#[test]
fn adjoint_and_information_operator() {
    let mut r = rng(13);
    let model = random_model(2, &mut r).unwrap();
    let h = random_direction(&model, &mut r);
    let g: Vec<f64> = (0..model.law.num_obs_cells())
        .map(|i| ((i * 7) % 5) as f64 - 2.0)
        .collect();
    let lhs = model.law.expect(
        &model
            .apply_a(&h)
            .iter()
            .zip(&g)
            .map(|(a, b)| a * b)
            .collect::<Vec<_>>(),
    );
    let rhs = model.h_inner(&h, &model.apply_a_star(&g));
    assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");

    let info = model.information_operator().entries;
    assert!((&info - info.transpose()).abs().max() < 1e-12);
    let eig = info.symmetric_eigenvalues();
    assert!(eig.iter().all(|&e| e > -1e-12));

    let back = model.h_from_coords(&model.h_coords(&h));
    let diff = back.h_q.iter().zip(&h.h_q).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-12);

    let tangent = model.tangent_space();
    assert!(tangent.dim() <= model.obs_mean_zero_dim());
    assert!(tangent.residual(&model.apply_a(&h)) < 1e-10);
}
