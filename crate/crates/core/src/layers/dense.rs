use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn check<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    match (input.shape(), weights.shape(), bias.shape()) {
        ([_, d], [d2, u], [u2]) if d == d2 && u == u2 => Ok(()),
        _ => Err(Error::Shape(format!(
            "dense expects input NxD, weights DxU, bias U; got {:?}, {:?}, {:?}",
            input.shape(),
            weights.shape(),
            bias.shape()
        ))),
    }
}

/// `input · weights + bias` for `input [N,D]`, `weights [D,U]`, `bias [U]`.
pub fn dense_forward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    check(input, weights, bias)?;
    let mut out = input.matmul(weights)?;
    let u = bias.len();
    for row in out.data_mut().chunks_mut(u) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `grad_W = xᵀ·g`, `grad_x = g·Wᵀ`, `grad_b` = column sums of `g`.
pub fn dense_backward<T: Element>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n, u) = (input.shape()[0], weights.shape()[1]);
    if grad_out.shape() != [n, u] {
        return Err(Error::Shape(format!(
            "dense grad_out shape {:?} != forward output shape {:?}",
            grad_out.shape(),
            [n, u]
        )));
    }
    let mut grad_b = vec![T::zero(); u];
    for row in grad_out.data().chunks(u) {
        for (acc, &v) in grad_b.iter_mut().zip(row) {
            *acc += v;
        }
    }
    Ok(DenseGrads {
        input: grad_out.matmul_nt(weights)?,
        weights: input.matmul_tn(grad_out)?,
        bias: Tensor::from_vec(&[u], grad_b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::<f32>::from_f64(&[2, 3], &[1., -2., 3., 4., 5., -6.]).unwrap();
        let w = Tensor::<f32>::from_f64(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let y = dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn hand_arithmetic() {
        let x = Tensor::<f32>::from_f64(&[1, 2], &[1., 2.]).unwrap();
        let w = Tensor::<f32>::from_f64(&[2, 1], &[1., 1.]).unwrap();
        let b = Tensor::<f32>::from_f64(&[1], &[1.]).unwrap();
        assert_eq!(dense_forward(&x, &w, &b).unwrap().data(), &[4.0]);
    }

    #[test]
    fn backward_by_hand() {
        let x = Tensor::<f64>::from_f64(&[1, 2], &[1., 2.]).unwrap();
        let w = Tensor::<f64>::from_f64(&[2, 1], &[3., 4.]).unwrap();
        let g = Tensor::<f64>::from_f64(&[1, 1], &[2.]).unwrap();
        let grads = dense_backward(&g, &x, &w).unwrap();
        assert_eq!(grads.input.data(), &[6.0, 8.0]);
        assert_eq!(grads.weights.data(), &[2.0, 4.0]);
        assert_eq!(grads.bias.data(), &[2.0]);
    }

    #[test]
    fn shape_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 3]);
        let w = Tensor::<f32>::zeros(&[2, 1]);
        assert!(matches!(
            dense_forward(&x, &w, &Tensor::zeros(&[1])),
            Err(Error::Shape(_))
        ));
    }
}
