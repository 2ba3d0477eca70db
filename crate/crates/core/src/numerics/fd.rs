use super::tensor::{Scalar, Tensor};

/// Central-difference gradient of a scalar function, one coordinate at a
/// time: `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
///
/// This is a test oracle, independent of the graph's backward pass. Errors
/// from `f` are propagated.
pub fn finite_difference_gradient<T, E, F>(mut f: F, x: &Tensor<T>, eps: T) -> Result<Tensor<T>, E>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<T, E>,
{
    let mut probe = x.clone();
    let two_eps = eps + eps;
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.push((plus - minus) / two_eps);
    }
    Ok(Tensor::new(x.shape().to_vec(), grad).expect("same element count as x"))
}

/// `max_i |a_i - b_i| / max_i |b_i|`, the error of `a` relative to the
/// reference `b` measured against the reference's largest entry.
pub fn max_relative_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "compared tensors must share a shape");
    let scale = b
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()))
        .max(f64::MIN_POSITIVE);
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (x, y)| m.max((x.to_f64_lossy() - y.to_f64_lossy()).abs()));
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::new(vec![3], vec![0.3, -1.0, 2.5]).unwrap();
        let g = finite_difference_gradient(|t: &Tensor<f64>| Ok::<_, Infallible>(t.sum()), &x, 1e-4).unwrap();
        for v in g.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_square_gradient_is_two_x_over_n() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let f = |t: &Tensor<f64>| Ok::<_, Infallible>(t.data().iter().map(|v| v * v).sum::<f64>() / 2.0);
        let g = finite_difference_gradient(f, &x, 1e-4).unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-8);
        assert!((g.data()[1] - 2.0).abs() < 1e-8);
    }
}
