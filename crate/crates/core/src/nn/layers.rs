//! Forward and backward passes for the fixed layer set.
//!
//! Every kernel processes samples independently, so a sample's output never
//! depends on which other samples share its batch.

use super::params::{param_key, ParamRole, ParamSet};
use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Layer inputs recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch_len(&self) -> usize {
        self.inputs.first().map_or(0, Tensor::batch_len)
    }
}

/// Gradients with respect to the parameters and to the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamSet,
    pub input: Tensor,
}

fn check_batch(spec: &NetworkSpec, batch: &Tensor) -> Result<()> {
    if batch.rank() != spec.input_shape.len() + 1 || batch.shape()[1..] != spec.input_shape[..] {
        return Err(Error::Dimension(format!(
            "batch shape {:?} does not match network input [n, {:?}]",
            batch.shape(),
            spec.input_shape
        )));
    }
    Ok(())
}

/// Runs the stack on `batch` (`[n, ...input_shape]`) and returns the final
/// pre-nonlinearity activations together with the cache for [`backward`].
pub fn forward(spec: &NetworkSpec, params: &ParamSet, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
    check_batch(spec, batch)?;
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(spec.layers.len()),
    };
    let mut x = batch.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let y = layer_forward(layer, i, params, &x)?;
        cache.inputs.push(x);
        x = y;
    }
    Ok((x, cache))
}

/// [`forward`] without keeping intermediates.
pub fn predict(spec: &NetworkSpec, params: &ParamSet, batch: &Tensor) -> Result<Tensor> {
    check_batch(spec, batch)?;
    let mut x = batch.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        x = layer_forward(layer, i, params, &x)?;
    }
    Ok(x)
}

fn layer_forward(layer: &LayerSpec, index: usize, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    match *layer {
        LayerSpec::Dense { .. } => dense_forward(
            x,
            params.layer(index, ParamRole::Weight)?,
            params.layer(index, ParamRole::Bias)?,
        ),
        LayerSpec::Conv2d { stride, .. } => conv2d_forward(
            x,
            params.layer(index, ParamRole::Weight)?,
            params.layer(index, ParamRole::Bias)?,
            stride,
        ),
        LayerSpec::Relu => Ok(relu_forward(x)),
        LayerSpec::GlobalAveragePool => global_average_pool(x),
    }
}

/// Back-propagates `grad_output` (same shape as the forward output) through
/// the stack recorded in `cache`.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParamSet,
    cache: &ForwardCache,
    grad_output: &Tensor,
) -> Result<Gradients> {
    if cache.inputs.len() != spec.layers.len() {
        return Err(Error::Usage(format!(
            "forward cache holds {} layers, network has {}",
            cache.inputs.len(),
            spec.layers.len()
        )));
    }
    if spec.layers.is_empty() {
        return Ok(Gradients {
            params: ParamSet::new(),
            input: grad_output.clone(),
        });
    }
    let out_shape = spec.output_shape()?;
    let n = cache.batch_len();
    if grad_output.batch_len() != n || grad_output.shape()[1..] != out_shape[..] {
        return Err(Error::Dimension(format!(
            "upstream gradient {:?} does not match output [{n}, {:?}]",
            grad_output.shape(),
            out_shape
        )));
    }

    let mut grads = ParamSet::new();
    let mut dy = grad_output.clone();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &cache.inputs[i];
        dy = match *layer {
            LayerSpec::Dense { .. } => {
                let w = params.layer(i, ParamRole::Weight)?;
                let (dx, dw, db) = dense_backward(x, w, &dy);
                grads.insert(param_key(i, ParamRole::Weight), dw);
                grads.insert(param_key(i, ParamRole::Bias), db);
                dx
            }
            LayerSpec::Conv2d { stride, .. } => {
                let w = params.layer(i, ParamRole::Weight)?;
                let (dx, dw, db) = conv2d_backward(x, w, &dy, stride);
                grads.insert(param_key(i, ParamRole::Weight), dw);
                grads.insert(param_key(i, ParamRole::Bias), db);
                dx
            }
            LayerSpec::Relu => relu_backward(x, &dy),
            LayerSpec::GlobalAveragePool => global_average_pool_backward(x.shape(), &dy),
        };
    }
    Ok(Gradients {
        params: grads,
        input: dy,
    })
}

/// `y[n, o] = sum_i w[o, i] * x[n, i] + b[o]`
fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    if x.rank() != 2 || x.shape()[1] != inp {
        return Err(Error::Dimension(format!(
            "dense input {:?}, weight {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let n = x.batch_len();
    let mut y = Tensor::zeros(&[n, out]);
    for s in 0..n {
        let xs = x.row(s);
        let ys = y.row_mut(s);
        for (o, yo) in ys.iter_mut().enumerate() {
            let wrow = &w.data()[o * inp..(o + 1) * inp];
            *yo = dot(wrow, xs) + b.data()[o];
        }
    }
    Ok(y)
}

fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    let n = x.batch_len();
    let mut dx = Tensor::zeros(&[n, inp]);
    let mut dw = Tensor::zeros(&[out, inp]);
    let mut db = Tensor::zeros(&[out]);
    for s in 0..n {
        let xs = x.row(s);
        let dys = dy.row(s);
        let dxs = dx.row_mut(s);
        for (o, &g) in dys.iter().enumerate() {
            db.data_mut()[o] += g;
            let wrow = &w.data()[o * inp..(o + 1) * inp];
            let dwrow = &mut dw.data_mut()[o * inp..(o + 1) * inp];
            for i in 0..inp {
                dwrow[i] += g * xs[i];
                dxs[i] += g * wrow[i];
            }
        }
    }
    (dx, dw, db)
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
    let &[k, c, kh, kw] = w.shape() else {
        return Err(Error::Dimension(format!("conv weight {:?}", w.shape())));
    };
    let &[n, xc, h, wd] = x.shape() else {
        return Err(Error::Dimension(format!("conv input {:?}", x.shape())));
    };
    if xc != c || kh > h || kw > wd {
        return Err(Error::Dimension(format!(
            "conv input {:?}, weight {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let oh = (h - kh) / stride + 1;
    let ow = (wd - kw) / stride + 1;
    let mut y = Tensor::zeros(&[n, k, oh, ow]);
    let wdat = w.data();
    for s in 0..n {
        let xs = x.row(s);
        let ys = y.row_mut(s);
        for f in 0..k {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[f];
                    for ch in 0..c {
                        for ky in 0..kh {
                            let xrow = (ch * h + oy * stride + ky) * wd + ox * stride;
                            let wrow = ((f * c + ch) * kh + ky) * kw;
                            acc += dot(&wdat[wrow..wrow + kw], &xs[xrow..xrow + kw]);
                        }
                    }
                    ys[(f * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Ok(y)
}

fn conv2d_backward(x: &Tensor, w: &Tensor, dy: &Tensor, stride: usize) -> (Tensor, Tensor, Tensor) {
    let &[k, c, kh, kw] = w.shape() else {
        unreachable!("validated in forward")
    };
    let &[n, _, h, wd] = x.shape() else {
        unreachable!("validated in forward")
    };
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[k]);
    let wdat = w.data();
    for s in 0..n {
        let xs = x.row(s);
        let dys = dy.row(s);
        let dxs = dx.row_mut(s);
        for f in 0..k {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dys[(f * oh + oy) * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    db.data_mut()[f] += g;
                    for ch in 0..c {
                        for ky in 0..kh {
                            let xrow = (ch * h + oy * stride + ky) * wd + ox * stride;
                            let wrow = ((f * c + ch) * kh + ky) * kw;
                            let dwd = &mut dw.data_mut()[wrow..wrow + kw];
                            for kx in 0..kw {
                                dwd[kx] += g * xs[xrow + kx];
                                dxs[xrow + kx] += g * wdat[wrow + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// `[n, k, h, w] -> [n, k]`, each entry the mean of one activation map.
pub fn global_average_pool(g: &Tensor) -> Result<Tensor> {
    let &[n, k, h, w] = g.shape() else {
        return Err(Error::Dimension(format!(
            "global average pool needs rank 4, got {:?}",
            g.shape()
        )));
    };
    let area = h * w;
    let mut out = Tensor::zeros(&[n, k]);
    for (map, o) in g.data().chunks_exact(area.max(1)).zip(out.data_mut()) {
        *o = map.iter().sum::<f64>() / area as f64;
    }
    Ok(out)
}

fn global_average_pool_backward(input_shape: &[usize], dy: &Tensor) -> Tensor {
    let area = input_shape[2] * input_shape[3];
    let mut dx = Tensor::zeros(input_shape);
    let scale = 1.0 / area as f64;
    for (map, &g) in dx.data_mut().chunks_exact_mut(area).zip(dy.data()) {
        map.iter_mut().for_each(|v| *v = g * scale);
    }
    dx
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::init_params;

    fn dense(inputs: usize, outputs: usize) -> LayerSpec {
        LayerSpec::Dense { inputs, outputs }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = NetworkSpec::new(vec![3], vec![dense(3, 4), LayerSpec::Relu, dense(4, 2)]).unwrap();
        let mut p = init_params(&spec, 0).unwrap();
        p.iter_mut().for_each(|(_, t)| t.data_mut().fill(0.0));
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let (f, _) = forward(&spec, &p, &x).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense() {
        let spec = NetworkSpec::new(vec![3], vec![dense(3, 3)]).unwrap();
        let mut p = ParamSet::new();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        p.insert("0.weight", eye);
        p.insert("0.bias", Tensor::zeros(&[3]));
        let x = Tensor::from_rows(&[vec![1.5, -2.0, 7.25]]).unwrap();
        assert_eq!(forward(&spec, &p, &x).unwrap().0, x);
    }

    #[test]
    fn batch_shape_mismatch() {
        let spec = NetworkSpec::new(vec![3], vec![dense(3, 2)]).unwrap();
        let p = init_params(&spec, 0).unwrap();
        let x = Tensor::zeros(&[2, 4]);
        assert!(matches!(forward(&spec, &p, &x), Err(Error::Dimension(_))));
    }

    #[test]
    fn pool_values() {
        let g = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_average_pool(&g).unwrap().data(), &[2.5]);
        let c = Tensor::filled(&[2, 3, 4, 5], 3.5);
        let p = global_average_pool(&c).unwrap();
        assert_eq!(p.shape(), &[2, 3]);
        assert!(p.data().iter().all(|&v| v == 3.5));
        assert!(matches!(
            global_average_pool(&Tensor::zeros(&[2, 3])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn pool_commutes_with_scaling() {
        let data: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = Tensor::new(vec![2, 3, 2, 2], data).unwrap();
        let s = 2.5;
        let mut pooled = global_average_pool(&g).unwrap();
        pooled.scale(s);
        let mut scaled = g.clone();
        scaled.scale(s);
        let other = global_average_pool(&scaled).unwrap();
        assert!(pooled.max_abs_diff(&other) < 1e-15);
    }

    #[test]
    fn backward_without_cache_is_usage_error() {
        let spec = NetworkSpec::new(vec![3], vec![dense(3, 2)]).unwrap();
        let p = init_params(&spec, 0).unwrap();
        let err = backward(&spec, &p, &ForwardCache::default(), &Tensor::zeros(&[1, 2])).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let spec = NetworkSpec::conv_backbone([1, 5, 5], 2, 3, 2).unwrap();
        let p = init_params(&spec, 4).unwrap();
        let x = Tensor::filled(&[2, 1, 5, 5], 0.3);
        let (f, cache) = forward(&spec, &p, &x).unwrap();
        let g = backward(&spec, &p, &cache, &Tensor::zeros(f.shape())).unwrap();
        assert_eq!(g.params.len(), p.len());
        assert!(g.params.iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }
}
