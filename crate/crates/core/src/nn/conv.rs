use super::params::{LayerKind, LayerParams};
use super::tensor::{FeatureMap, Real};
use crate::error::{Error, Result};

fn check_conv<T: Real>(params: &LayerParams<T>, in_channels: usize) -> Result<(usize, usize)> {
    if params.kind != LayerKind::Conv1d || params.weight_shape.len() != 3 {
        return Err(Error::Shape(format!("`{}` is not a conv1d layer", params.name)));
    }
    let (cout, cin, k) = (params.weight_shape[0], params.weight_shape[1], params.weight_shape[2]);
    if cin != in_channels {
        return Err(Error::Shape(format!(
            "`{}` expects {cin} input channels, got {in_channels}",
            params.name
        )));
    }
    Ok((cout, k))
}

/// Valid (unpadded) stride-1 convolution:
/// `out[o][i] = bias[o] + Σ_c Σ_j w[o][c][j] · input[c][i + j]`.
pub fn conv1d_valid<T: Real>(input: &FeatureMap<T>, params: &LayerParams<T>) -> Result<FeatureMap<T>> {
    let (cin, len) = input.shape();
    let (cout, k) = check_conv(params, cin)?;
    if k == 0 || k > len {
        return Err(Error::KernelTooWide { kernel: k, length: len });
    }
    let out_len = len - k + 1;
    let mut out = vec![T::zero(); cout * out_len];
    for o in 0..cout {
        let row = &mut out[o * out_len..(o + 1) * out_len];
        row.fill(params.bias[o]);
        for c in 0..cin {
            let x = input.row(c);
            let w = &params.weights[(o * cin + c) * k..(o * cin + c + 1) * k];
            for (i, acc) in row.iter_mut().enumerate() {
                let mut s = T::zero();
                for (wj, xj) in w.iter().zip(&x[i..i + k]) {
                    s += *wj * *xj;
                }
                *acc += s;
            }
        }
    }
    Ok(FeatureMap::from_raw(cout, out_len, out))
}

/// Gradients of one conv1d application.
#[derive(Clone, Debug)]
pub struct Conv1dGrads<T> {
    pub input_grad: FeatureMap<T>,
    pub weight_grad: Vec<T>,
    pub bias_grad: Vec<T>,
}

/// Backward pass of [`conv1d_valid`]. The weight and bias gradients are
/// returned and also accumulated into the layer's grad buffers.
pub fn conv1d_backward<T: Real>(
    input: &FeatureMap<T>,
    params: &mut LayerParams<T>,
    upstream: &FeatureMap<T>,
) -> Result<Conv1dGrads<T>> {
    let (cin, len) = input.shape();
    let (cout, k) = check_conv(params, cin)?;
    if k == 0 || k > len {
        return Err(Error::KernelTooWide { kernel: k, length: len });
    }
    let out_len = len - k + 1;
    if upstream.shape() != (cout, out_len) {
        return Err(Error::Shape(format!(
            "upstream gradient is {:?}, conv output is {:?}",
            upstream.shape(),
            (cout, out_len)
        )));
    }
    let mut input_grad = FeatureMap::zeros(cin, len);
    let mut weight_grad = vec![T::zero(); cout * cin * k];
    let mut bias_grad = vec![T::zero(); cout];
    for o in 0..cout {
        let g = upstream.row(o);
        bias_grad[o] = g.iter().copied().sum();
        for c in 0..cin {
            let x = input.row(c);
            let base = (o * cin + c) * k;
            let w = &params.weights[base..base + k];
            let wg = &mut weight_grad[base..base + k];
            let xg = input_grad.row_mut(c);
            for (i, &gi) in g.iter().enumerate() {
                for j in 0..k {
                    wg[j] += gi * x[i + j];
                    xg[i + j] += gi * w[j];
                }
            }
        }
    }
    for (acc, g) in params.weight_grad.iter_mut().zip(&weight_grad) {
        *acc += *g;
    }
    for (acc, g) in params.bias_grad.iter_mut().zip(&bias_grad) {
        *acc += *g;
    }
    Ok(Conv1dGrads {
        input_grad,
        weight_grad,
        bias_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kernel: &[f64], bias: f64) -> LayerParams<f64> {
        let mut p = LayerParams::conv1d("c", 1, 1, kernel.len());
        p.weights.copy_from_slice(kernel);
        p.bias[0] = bias;
        p
    }

    #[test]
    fn output_length_covers_t1_t3_to_t28_t30() {
        let x = FeatureMap::<f32>::zeros(5, 30);
        let p = LayerParams::conv1d("c", 4, 5, 3);
        assert_eq!(conv1d_valid(&x, &p).unwrap().length(), 28);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let x = FeatureMap::new(2, 6, (0..12).map(|v| v as f64).collect()).unwrap();
        let p = LayerParams::conv1d("c", 3, 2, 3);
        let y = conv1d_valid(&x, &p).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn difference_kernel() {
        let x = FeatureMap::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv1d_valid(&x, &single(&[1.0, 0.0, -1.0], 0.0)).unwrap();
        assert_eq!(y.as_slice(), &[-2.0, -2.0]);
    }

    #[test]
    fn kernel_wider_than_input_reports_both() {
        let x = FeatureMap::<f64>::zeros(1, 4);
        let err = conv1d_valid(&x, &LayerParams::conv1d("c", 1, 1, 5)).unwrap_err();
        assert!(matches!(err, Error::KernelTooWide { kernel: 5, length: 4 }));
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('4'));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = FeatureMap::new(2, 5, (0..10).map(|v| v as f64 * 0.3).collect()).unwrap();
        let mut p = LayerParams::conv1d("c", 2, 2, 3);
        p.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64);
        let g = conv1d_backward(&x, &mut p, &FeatureMap::zeros(2, 3)).unwrap();
        assert!(g.input_grad.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.weight_grad.iter().chain(&g.bias_grad).all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_weight_grad_is_input_times_upstream() {
        let x = FeatureMap::new(1, 1, vec![3.0]).unwrap();
        let mut p = single(&[2.0], 0.5);
        let up = FeatureMap::new(1, 1, vec![-1.5]).unwrap();
        let g = conv1d_backward(&x, &mut p, &up).unwrap();
        assert_eq!(g.weight_grad, vec![-4.5]);
        assert_eq!(g.bias_grad, vec![-1.5]);
        assert_eq!(g.input_grad.as_slice(), &[-3.0]);
        // accumulated into the layer buffers
        conv1d_backward(&x, &mut p, &up).unwrap();
        assert_eq!(p.weight_grad, vec![-9.0]);
    }

    #[test]
    fn upstream_shape_mismatch_is_an_error() {
        let x = FeatureMap::<f64>::zeros(1, 5);
        let mut p = LayerParams::conv1d("c", 1, 1, 3);
        assert!(conv1d_backward(&x, &mut p, &FeatureMap::zeros(1, 4)).is_err());
    }
}
