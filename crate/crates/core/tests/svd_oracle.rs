//! Jacobi SVD and nuclear norm against nalgebra's decomposition.

mod common;

use common::{random_matrix, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use uda_core::autodiff::{matmul, svd, Tape, Tensor};

fn to_na(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn singular_values_match_nalgebra(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let ours = svd(&a).unwrap();
        let mut theirs: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        prop_assert_eq!(ours.s.len(), theirs.len());
        for (x, y) in ours.s.iter().zip(&theirs) {
            prop_assert!((x - y).abs() <= 1e-12 * theirs[0].max(1.0), "{:?} vs {:?}", ours.s, theirs);
        }
    }

    #[test]
    fn nuclear_norm_and_subgradient_match_nalgebra(rows in 2usize..8, cols in 2usize..8, seed in any::<u64>()) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let na = to_na(&a).svd(true, true);
        let s = &na.singular_values;
        let mut sorted: Vec<f64> = s.iter().copied().collect();
        sorted.sort_by(|x, y| y.total_cmp(x));
        prop_assume!(sorted.windows(2).all(|w| w[0] - w[1] > 1e-3) && *sorted.last().unwrap() > 1e-3);

        let tape = Tape::new();
        let v = tape.leaf(a.clone());
        let nuc = v.nuclear_norm().unwrap();
        prop_assert!((nuc.item() - s.sum()).abs() <= 1e-12 * s.sum());

        // full rank here, so the subgradient is the polar factor U Vᵀ
        let polar = na.u.as_ref().unwrap() * na.v_t.as_ref().unwrap();
        let g = nuc.backward().unwrap().wrt(v);
        for i in 0..rows {
            for j in 0..cols {
                prop_assert!((g.get(i, j) - polar[(i, j)]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn factors_are_orthonormal_and_reconstruct(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let d = svd(&a).unwrap();
        let r = d.s.len();
        let mut us = d.u.clone();
        for i in 0..rows {
            for j in 0..r {
                us.set(i, j, us.get(i, j) * d.s[j]);
            }
        }
        let back = matmul(&us, &d.v.transpose()).unwrap();
        for (x, y) in back.data().iter().zip(a.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let vtv = matmul(&d.v.transpose(), &d.v).unwrap();
        for i in 0..r {
            for j in 0..r {
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((vtv.get(i, j) - e).abs() <= 1e-12);
            }
        }
    }
}
