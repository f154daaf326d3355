use ndarray::{Array2, ArrayView2, NdFloat};

use super::mlp::cast;
use super::NnError;

/// Mean per-row L1 distance plus mean per-row largest absolute error.
pub fn loss<A: NdFloat>(y: ArrayView2<A>, yhat: ArrayView2<A>) -> Result<A, NnError> {
    if y.dim() != yhat.dim() {
        return Err(NnError::Shape(format!(
            "label shape {:?} differs from prediction shape {:?}",
            y.dim(),
            yhat.dim()
        )));
    }
    let b = y.nrows();
    if b == 0 {
        return Ok(A::zero());
    }
    let mut total = A::zero();
    for (yr, pr) in y.rows().into_iter().zip(yhat.rows()) {
        let mut l1 = A::zero();
        let mut mx = A::zero();
        for (a, p) in yr.iter().zip(pr.iter()) {
            let d = (*a - *p).abs();
            l1 += d;
            if d > mx {
                mx = d;
            }
        }
        total += l1 + mx;
    }
    Ok(total / cast(b as f64))
}

/// Subgradient of [`loss`] with respect to `yhat`. The max term uses the
/// first index attaining the row maximum.
pub fn loss_grad<A: NdFloat>(y: ArrayView2<A>, yhat: ArrayView2<A>) -> Array2<A> {
    let inv_b = A::one() / cast(y.nrows().max(1) as f64);
    let sign = |d: A| {
        if d > A::zero() {
            inv_b
        } else if d < A::zero() {
            -inv_b
        } else {
            A::zero()
        }
    };
    let mut g = Array2::<A>::zeros(y.raw_dim());
    for ((yr, pr), mut gr) in y.rows().into_iter().zip(yhat.rows()).zip(g.rows_mut()) {
        let mut arg = 0;
        let mut mx = A::neg_infinity();
        for (j, (a, p)) in yr.iter().zip(pr.iter()).enumerate() {
            let d = *p - *a;
            gr[j] = sign(d);
            if d.abs() > mx {
                mx = d.abs();
                arg = j;
            }
        }
        if !yr.is_empty() {
            let d = pr[arg] - yr[arg];
            gr[arg] += sign(d);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate, Axis};
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let mut y = Array2::<f64>::zeros((1, 500));
        y[[0, 0]] = 1.0;
        let mut p = Array2::<f64>::zeros((1, 500));
        p[[0, 0]] = 0.5;
        p[[0, 1]] = 0.5;
        assert_eq!(loss(y.view(), p.view()).unwrap(), 1.5);
    }

    #[test]
    fn identical_is_zero_and_shapes_checked() {
        let y = array![[0.2, 0.8], [0.5, 0.5]];
        assert_eq!(loss(y.view(), y.view()).unwrap(), 0.0);
        let bad = array![[1.0, 0.0, 0.0]];
        assert!(loss(y.view(), bad.view()).is_err());
    }

    #[test]
    fn max_term_picks_first_index() {
        let y = array![[1.0, 0.0, 0.0]];
        let p = array![[0.5, 0.5, 0.0]];
        let g = loss_grad(y.view(), p.view());
        assert_eq!(g, array![[-2.0, 1.0, 0.0]]);
    }

    fn prob_rows(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(0.0f64..1.0, rows * cols).prop_map(move |v| {
            let mut a = Array2::from_shape_vec((rows, cols), v).unwrap();
            for mut r in a.rows_mut() {
                let s = r.sum() + 1e-12;
                r.mapv_inplace(|x| x / s);
            }
            a
        })
    }

    proptest! {
        #[test]
        fn nonnegative_and_batch_invariant(y in prob_rows(4, 12), p in prob_rows(4, 12)) {
            let l = loss(y.view(), p.view()).unwrap();
            prop_assert!(l >= 0.0);
            let y2 = concatenate(Axis(0), &[y.view(), y.view()]).unwrap();
            let p2 = concatenate(Axis(0), &[p.view(), p.view()]).unwrap();
            prop_assert!((loss(y2.view(), p2.view()).unwrap() - l).abs() < 1e-12);
            let rev_y = y.slice(ndarray::s![..;-1, ..]);
            let rev_p = p.slice(ndarray::s![..;-1, ..]);
            prop_assert!((loss(rev_y, rev_p).unwrap() - l).abs() < 1e-12);
            prop_assert!((loss(p.view(), y.view()).unwrap() - l).abs() < 1e-12);
        }

        #[test]
        fn zero_only_on_identity(y in prob_rows(3, 8), p in prob_rows(3, 8)) {
            let l = loss(y.view(), p.view()).unwrap();
            prop_assert_eq!(l == 0.0, y == p);
        }
    }
}
