use super::tensor::{FeatureMap, Real};
use crate::error::{Error, Result};

/// Input positions selected by a max-pool, indexed `[channel * out_len + j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_length: usize,
    pub output_length: usize,
    pub argmax: Vec<usize>,
}

/// Max-pooling along the time axis. The trailing remainder shorter than
/// `pool_width` is dropped; ties resolve to the lowest index.
pub fn maxpool1d<T: Real>(
    input: &FeatureMap<T>,
    pool_width: usize,
    stride: usize,
) -> Result<(FeatureMap<T>, PoolIndices)> {
    if pool_width == 0 || stride == 0 {
        return Err(Error::Config("pool width and stride must be at least 1".into()));
    }
    let (ch, len) = input.shape();
    if pool_width > len {
        return Err(Error::Shape(format!("pool width {pool_width} exceeds length {len}")));
    }
    let out_len = (len - pool_width) / stride + 1;
    let mut out = Vec::with_capacity(ch * out_len);
    let mut argmax = Vec::with_capacity(ch * out_len);
    for c in 0..ch {
        let row = input.row(c);
        for j in 0..out_len {
            let start = j * stride;
            let mut best = start;
            for i in start + 1..start + pool_width {
                if row[i] > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            argmax.push(best);
        }
    }
    Ok((
        FeatureMap::from_raw(ch, out_len, out),
        PoolIndices {
            input_length: len,
            output_length: out_len,
            argmax,
        },
    ))
}

/// Routes the upstream gradient back to the selected input positions.
pub fn maxpool1d_backward<T: Real>(upstream: &FeatureMap<T>, indices: &PoolIndices) -> Result<FeatureMap<T>> {
    let (ch, out_len) = upstream.shape();
    if out_len != indices.output_length || indices.argmax.len() != ch * out_len {
        return Err(Error::Shape("pool gradient does not match forward indices".into()));
    }
    let mut grad = FeatureMap::zeros(ch, indices.input_length);
    for c in 0..ch {
        for j in 0..out_len {
            let i = indices.argmax[c * out_len + j];
            let g = grad.get(c, i) + upstream.get(c, j);
            grad.set(c, i, g);
        }
    }
    Ok(grad)
}
