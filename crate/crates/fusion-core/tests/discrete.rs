use approx::assert_abs_diff_eq;
use fusion_core::discrete::json::{fmt17, pmf_from_json, pmf_to_json, to_json_string};
use fusion_core::discrete::linalg::{
    column_space, gram_schmidt, intersect, lstsq_min_norm, null_space, pinv, rank, singular_values,
    WeightedSpace,
};
use fusion_core::discrete::ops::{cond_exp_operator, l2_inner, mutually_abs_continuous, rn_ratio};
use fusion_core::discrete::pmf::MASS_FLOOR;
use fusion_core::{Axis, AxisSet, Error, FinitePmf, Pmf, PmfMode, RealTable};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn space(levels: &[usize]) -> AxisSet {
    let names = ["A", "B", "C", "D"];
    AxisSet::new(
        levels
            .iter()
            .zip(names)
            .map(|(&n, name)| Axis::indexed(name, n))
            .collect(),
    )
    .unwrap()
}

/// Row-major coordinates of every cell, computed independently of the library.
fn all_coords(levels: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &n in levels {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..n).map(move |i| {
                    let mut c = c.clone();
                    c.push(i);
                    c
                })
            })
            .collect();
    }
    out
}

/// Marginal over the axes at `keep` (in that order) by direct summation.
fn oracle_marginal(levels: &[usize], mass: &[f64], keep: &[usize]) -> Vec<f64> {
    let sub: Vec<usize> = keep.iter().map(|&k| levels[k]).collect();
    let sub_cells = all_coords(&sub);
    sub_cells
        .iter()
        .map(|target| {
            all_coords(levels)
                .iter()
                .zip(mass)
                .filter(|(c, _)| keep.iter().zip(target).all(|(&k, &t)| c[k] == t))
                .map(|(_, m)| m)
                .sum()
        })
        .collect()
}

fn shape_and_weights() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(1usize..=3, 2..=3).prop_flat_map(|levels| {
        let n: usize = levels.iter().product();
        (Just(levels), prop::collection::vec(0.05f64..1.0, n))
    })
}

proptest! {
    #[test]
    fn marginals_match_direct_summation((levels, w) in shape_and_weights()) {
        let p = Pmf::from_weights(space(&levels), w, PmfMode::Strict).unwrap();
        let names = ["A", "B", "C"];
        for keep in [vec![0usize], vec![1], vec![1, 0]] {
            let keep_names: Vec<&str> = keep.iter().map(|&k| names[k]).collect();
            let m = p.marginal(&keep_names).unwrap();
            let oracle = oracle_marginal(&levels, p.mass(), &keep);
            for (a, b) in m.mass().iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-14);
            }
            prop_assert!((m.mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditionals_satisfy_the_chain_rule((levels, w) in shape_and_weights()) {
        let p = Pmf::from_weights(space(&levels), w, PmfMode::Strict).unwrap();
        // p(B | A) over (A, B) times p(A) recovers p(A, B).
        let cond = p.conditional(&["B"], &["A"]).unwrap();
        let pa = p.marginal(&["A"]).unwrap();
        let pab = p.marginal(&["A", "B"]).unwrap();
        let nb = levels[1];
        for (cell, m) in pab.mass().iter().enumerate() {
            prop_assert!((cond.values[cell] * pa.mass()[cell / nb] - m).abs() < 1e-14);
        }
        for a in 0..levels[0] {
            let total: f64 = cond.values[a * nb..(a + 1) * nb].iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_expectation_is_an_orthogonal_projection((levels, w) in shape_and_weights()) {
        let p = Pmf::from_weights(space(&levels), w, PmfMode::Strict).unwrap();
        let op = cond_exp_operator(&p, &["A", "B"], &["A"]).unwrap();
        let e = &op.entries;
        prop_assert!((e * e - e).abs().max() < 1e-12);
        // Self-adjoint in L2(p(A, B)).
        let pab = p.marginal(&["A", "B"]).unwrap();
        let wts = DMatrix::from_diagonal(&DVector::from_vec(pab.mass().to_vec()));
        let sym = &wts * e;
        prop_assert!((&sym - sym.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn json_round_trip_preserves_mass((levels, w) in shape_and_weights()) {
        let p = Pmf::from_weights(space(&levels), w, PmfMode::Strict).unwrap();
        let back = pmf_from_json(&pmf_to_json(&p).unwrap(), PmfMode::Strict).unwrap();
        prop_assert_eq!(back.space(), p.space());
        for (a, b) in back.mass().iter().zip(p.mass()) {
            prop_assert!((a - b).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn seventeen_digits_round_trip(x in prop::num::f64::NORMAL) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn pseudoinverse_satisfies_penrose_conditions(
        entries in prop::collection::vec(-1.0f64..1.0, 12),
        drop_rank in any::<bool>(),
    ) {
        let mut a = DMatrix::from_vec(4, 3, entries);
        if drop_rank {
            let c = a.column(0) + a.column(1);
            a.set_column(2, &c);
        }
        let x = pinv(&a);
        prop_assert!((&a * &x * &a - &a).abs().max() < 1e-10);
        prop_assert!((&x * &a * &x - &x).abs().max() < 1e-10);
        let ax = &a * &x;
        let xa = &x * &a;
        prop_assert!((&ax - ax.transpose()).abs().max() < 1e-10);
        prop_assert!((&xa - xa.transpose()).abs().max() < 1e-10);
        prop_assert_eq!(rank(&a), if drop_rank { 2 } else { 3 });
    }
}

#[test]
fn strict_mode_rejects_zero_cells() {
    let s = space(&[2, 2]);
    let err = Pmf::new(s, vec![0.5, 0.5, 0.0, 0.0], PmfMode::Strict).unwrap_err();
    assert!(matches!(err, Error::ZeroMass(2)));
}

#[test]
fn floor_mode_raises_only_empty_cells() {
    let s = space(&[2, 2]);
    let p = Pmf::new(s, vec![0.5, 0.5, 0.0, 0.0], PmfMode::Floor).unwrap();
    let total = 1.0 + 2.0 * MASS_FLOOR;
    assert_abs_diff_eq!(p.mass()[0], 0.5 / total, epsilon = 1e-15);
    assert_abs_diff_eq!(p.mass()[2], MASS_FLOOR / total, epsilon = 1e-24);
    let untouched = Pmf::new(space(&[2]), vec![0.25, 0.75], PmfMode::Floor).unwrap();
    assert_eq!(untouched.mass(), &[0.25, 0.75]);
}

#[test]
fn relaxed_mode_keeps_zeros_and_conditionals_vanish_there() {
    let p = Pmf::new(space(&[2, 2]), vec![0.5, 0.5, 0.0, 0.0], PmfMode::Relaxed).unwrap();
    let c = p.conditional(&["B"], &["A"]).unwrap();
    assert_eq!(c.values, vec![0.5, 0.5, 0.0, 0.0]);
    let strict = Pmf::new(space(&[2, 2]), vec![0.4, 0.3, 0.2, 0.1], PmfMode::Strict).unwrap();
    assert!(strict.conditional(&["B"], &["A"]).is_ok());
}

#[test]
fn construction_validates_inputs() {
    let s = space(&[2]);
    assert!(matches!(
        Pmf::new(s.clone(), vec![0.5], PmfMode::Strict),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(matches!(
        Pmf::new(s.clone(), vec![0.5, 0.6], PmfMode::Strict),
        Err(Error::NotNormalized(_))
    ));
    assert!(matches!(
        Pmf::new(s.clone(), vec![-0.5, 1.5], PmfMode::Strict),
        Err(Error::InvalidMass(0))
    ));
    assert!(matches!(
        Pmf::from_weights(s, vec![0.0, 0.0], PmfMode::Relaxed),
        Err(Error::NotNormalized(_))
    ));
    assert!(matches!(
        AxisSet::new(vec![Axis::indexed("A", 2), Axis::indexed("A", 3)]),
        Err(Error::DuplicateAxis(_))
    ));
    assert!(matches!(
        AxisSet::new(vec![Axis::new("A", &["x", "x"])]),
        Err(Error::DuplicateLevel { .. })
    ));
}

#[test]
fn labels_and_indices_agree() {
    let s = AxisSet::new(vec![Axis::new("X", &["lo", "hi"]), Axis::indexed("Y", 3)]).unwrap();
    for cell in 0..s.len() {
        let labels = s.labels(cell);
        assert_eq!(s.index_of_labels(&labels).unwrap(), cell);
        assert_eq!(s.index(&s.coords(cell)), cell);
    }
    assert_eq!(s.cell_name(4), "X=hi,Y=1");
    assert!(matches!(
        s.index_of_labels(&["mid", "0"]),
        Err(Error::UnknownLevel { .. })
    ));
}

#[test]
fn radon_nikodym_ratio_and_support() {
    let s = space(&[2, 2]);
    let p = Pmf::new(s.clone(), vec![0.1, 0.2, 0.3, 0.4], PmfMode::Strict).unwrap();
    let q = Pmf::uniform(s);
    let r = rn_ratio(&p, &q, &["A"]).unwrap();
    assert_abs_diff_eq!(r.values[0], 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(r.values[1], 1.4, epsilon = 1e-15);
    assert!(mutually_abs_continuous(&p, &q));
    let z = Pmf::new(space(&[2, 2]), vec![0.5, 0.5, 0.0, 0.0], PmfMode::Relaxed).unwrap();
    assert!(!mutually_abs_continuous(&p, &z));
}

#[test]
fn l2_inner_product_weights_by_mass() {
    let s = space(&[3]);
    let p = Pmf::new(s.clone(), vec![0.2, 0.3, 0.5], PmfMode::Strict).unwrap();
    let f = RealTable::new(s.clone(), vec![1.0, 2.0, 3.0]).unwrap();
    let g = RealTable::new(s, vec![1.0, -1.0, 1.0]).unwrap();
    assert_abs_diff_eq!(l2_inner(&p, &f, &g).unwrap(), 0.2 - 0.6 + 1.5, epsilon = 1e-15);
}

#[test]
fn single_precision_tables_follow_the_same_rules() {
    // The discrete layer is generic; single precision holds to about 1e-6.
    let s = space(&[2, 3]);
    let w64 = vec![0.1, 0.2, 0.05, 0.25, 0.3, 0.1];
    let w32: Vec<f32> = w64.iter().map(|&x| x as f32).collect();
    let p64 = Pmf::from_weights(s.clone(), w64, PmfMode::Strict).unwrap();
    let p32 = FinitePmf::<f32>::from_weights(s, w32, PmfMode::Strict).unwrap();
    let c64 = p64.conditional(&["A"], &["B"]).unwrap();
    let c32 = p32.conditional(&["A"], &["B"]).unwrap();
    for (a, b) in c64.values.iter().zip(&c32.values) {
        assert!((a - *b as f64).abs() < 1e-6);
    }
    let m32 = p32.marginal(&["B"]).unwrap();
    assert!((m32.mass().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    let f: Vec<f32> = (0..6).map(|i| i as f32).collect();
    let e = p32.cond_expect(&f, &["A"]).unwrap();
    let e64 = p64
        .cond_expect(&(0..6).map(|i| i as f64).collect::<Vec<_>>(), &["A"])
        .unwrap();
    for (a, b) in e64.values.iter().zip(&e.values) {
        assert!((a - *b as f64).abs() < 1e-5);
    }
}

#[test]
fn json_uses_seventeen_significant_digits() {
    assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt17(0.0), "0");
    assert_eq!(to_json_string(&vec![1.0 / 3.0]).unwrap(), "[3.3333333333333331e-1]");
    assert_eq!(to_json_string(&f64::NAN).unwrap(), "null");
}

#[test]
fn subspace_tools() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    // span(a) ∩ span(b) = span(e1 + e2).
    let i = intersect(&a, &b);
    assert_eq!(i.ncols(), 1);
    let v = i.column(0);
    assert_abs_diff_eq!(v[0].abs(), v[1].abs(), epsilon = 1e-12);
    assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-12);

    let m = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let n = null_space(&m);
    assert_eq!(n.ncols(), 1);
    assert!((&m * &n).abs().max() < 1e-12);

    let dup = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
    let q = column_space(&dup);
    assert_eq!(q.ncols(), 2);
    assert!((q.transpose() * &q - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    let g = gram_schmidt(&dup, 1e-9);
    assert_eq!(g.ncols(), 2);

    let s = singular_values(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0])));
    assert_eq!(s, vec![3.0, 2.0, 1.0]);

    // Minimum-norm least squares on a rank-deficient system.
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let (x, res) = lstsq_min_norm(&a, &DVector::from_vec(vec![2.0, 2.0]));
    assert!(res < 1e-12);
    assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
}

#[test]
fn weighted_space_whitening() {
    let w = WeightedSpace::new(vec![0.25, 0.75]);
    let f = [2.0, -1.0];
    let v = w.whiten(&f);
    assert_abs_diff_eq!(v.norm_squared(), w.inner(&f, &f), epsilon = 1e-15);
    assert_eq!(w.unwhiten(&v), f.to_vec());
    let b = w.mean_zero_basis();
    assert_eq!(b.ncols(), 1);
    let g = w.unwhiten(&b.column(0).into_owned());
    assert_abs_diff_eq!(w.mean(&g), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(w.norm(&g), 1.0, epsilon = 1e-15);
}
