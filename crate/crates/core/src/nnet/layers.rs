//! Forward and backward kernels for every layer kind.
//!
//! Feature maps are `[channels, height, width]`. Convolutions are 3×3
//! cross-correlations with stride 1 and one pixel of zero padding, so they
//! preserve spatial size. All loops run in a fixed order, which keeps
//! results bit-reproducible.

use super::Tensor;

/// Weight `[out, in, 3, 3]`, bias `[out]`.
pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (cin, h, w) = chw(input);
    let cout = weight.shape()[0];
    debug_assert_eq!(weight.shape(), &[cout, cin, 3, 3]);
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        let plane = &mut out[o * h * w..(o + 1) * h * w];
        plane.fill(bias.data()[o]);
        for c in 0..cin {
            let src = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = wt[((o * cin + c) * 3 + ky) * 3 + kx];
                    // Output rows/cols whose tap lands inside the input.
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += k * v;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[cout, h, w], out)
}

/// Returns `(d_input, d_weight, d_bias)`.
pub fn conv2d_backward(input: &Tensor, weight: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (cin, h, w) = chw(input);
    let cout = weight.shape()[0];
    let x = input.data();
    let wt = weight.data();
    let g = d_out.data();
    let mut dx = vec![0.0; cin * h * w];
    let mut dw = vec![0.0; cout * cin * 9];
    let mut db = vec![0.0; cout];
    for o in 0..cout {
        let gp = &g[o * h * w..(o + 1) * h * w];
        db[o] = gp.iter().sum();
        for c in 0..cin {
            let src = &x[c * h * w..(c + 1) * h * w];
            let dsrc = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * cin + c) * 3 + ky) * 3 + kx;
                    let k = wt[widx];
                    let (y0, y1) = valid_range(ky, h);
                    let (x0, x1) = valid_range(kx, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let grow = &gp[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (gv, sv) in grow.iter().zip(srow) {
                            acc += gv * sv;
                        }
                        let drow = &mut dsrc[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (d, gv) in drow.iter_mut().zip(grow) {
                            *d += k * gv;
                        }
                    }
                    dw[widx] = acc;
                }
            }
        }
    }
    (
        Tensor::from_vec(input.shape(), dx),
        Tensor::from_vec(weight.shape(), dw),
        Tensor::from_vec(&[cout], db),
    )
}

/// Range of output coordinates for which tap `k` (0..3) reads inside `[0, n)`.
#[inline]
fn valid_range(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1.min(n), n),
        1 => (0, n),
        _ => (0, n.saturating_sub(1)),
    }
}

fn chw(t: &Tensor) -> (usize, usize, usize) {
    match t.shape() {
        [c, h, w] => (*c, *h, *w),
        s => panic!("expected a [C, H, W] tensor, got {s:?}"),
    }
}

/// Weight `[out, in]`, bias `[out]`, input flattened to `[in]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (nout, nin) = (weight.shape()[0], weight.shape()[1]);
    let x = input.data();
    let out = (0..nout)
        .map(|o| {
            let row = &weight.data()[o * nin..(o + 1) * nin];
            let mut acc = bias.data()[o];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            acc
        })
        .collect();
    Tensor::from_vec(&[nout], out)
}

pub fn dense_backward(input: &Tensor, weight: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (nout, nin) = (weight.shape()[0], weight.shape()[1]);
    let x = input.data();
    let g = d_out.data();
    let mut dx = vec![0.0; nin];
    let mut dw = vec![0.0; nout * nin];
    for o in 0..nout {
        let row = &weight.data()[o * nin..(o + 1) * nin];
        let drow = &mut dw[o * nin..(o + 1) * nin];
        for i in 0..nin {
            drow[i] = g[o] * x[i];
            dx[i] += row[i] * g[o];
        }
    }
    (
        Tensor::from_vec(input.shape(), dx),
        Tensor::from_vec(weight.shape(), dw),
        Tensor::from_vec(&[nout], g.to_vec()),
    )
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor::from_vec(input.shape(), input.data().iter().map(|&v| v.max(0.0)).collect())
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, d_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// 2×2 max pooling with stride 2. Spatial sides must be even.
pub fn maxpool2_forward(input: &Tensor) -> Tensor {
    let (c, h, w) = chw(input);
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let base = ch * h * w + 2 * y * w + 2 * xx;
                let m = x[base].max(x[base + 1]).max(x[base + w]).max(x[base + w + 1]);
                out.push(m);
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out)
}

/// Routes each gradient to the first maximal element of its window
/// (row-major order).
pub fn maxpool2_backward(input: &Tensor, d_out: &Tensor) -> Tensor {
    let (c, h, w) = chw(input);
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut dx = vec![0.0; x.len()];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let base = ch * h * w + 2 * y * w + 2 * xx;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                dx[best] += d_out.data()[(ch * oh + y) * ow + xx];
            }
        }
    }
    Tensor::from_vec(input.shape(), dx)
}

/// Numerically stable softmax over a flat tensor.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub fn softmax_backward(probs: &[f64], d_out: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(d_out).map(|(p, g)| p * g).sum();
    probs.iter().zip(d_out).map(|(p, g)| p * (g - dot)).collect()
}

/// Parameters of a residual block: two channel-preserving convolutions.
pub struct ResidualParams<'a> {
    pub w1: &'a Tensor,
    pub b1: &'a Tensor,
    pub w2: &'a Tensor,
    pub b2: &'a Tensor,
}

/// Intermediate activations needed by [`residual_backward`].
#[derive(Debug, Clone)]
pub struct ResidualCache {
    pub pre1: Tensor,
    pub act1: Tensor,
    pub sum: Tensor,
}

/// `relu(conv2(relu(conv1(x))) + x)`.
pub fn residual_forward(input: &Tensor, p: &ResidualParams) -> (Tensor, ResidualCache) {
    let pre1 = conv2d_forward(input, p.w1, p.b1);
    let act1 = relu_forward(&pre1);
    let mut sum = conv2d_forward(&act1, p.w2, p.b2);
    sum.add_assign(input);
    let out = relu_forward(&sum);
    (out, ResidualCache { pre1, act1, sum })
}

/// Returns `(d_input, [dw1, db1, dw2, db2])`. The input gradient sums the
/// convolution branch and the identity skip.
pub fn residual_backward(
    input: &Tensor,
    p: &ResidualParams,
    cache: &ResidualCache,
    d_out: &Tensor,
) -> (Tensor, [Tensor; 4]) {
    let d_sum = relu_backward(&cache.sum, d_out);
    let (d_act1, dw2, db2) = conv2d_backward(&cache.act1, p.w2, &d_sum);
    let d_pre1 = relu_backward(&cache.pre1, &d_act1);
    let (mut dx, dw1, db1) = conv2d_backward(input, p.w1, &d_pre1);
    dx.add_assign(&d_sum);
    (dx, [dw1, db1, dw2, db2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_hand_computation() {
        // 1x4x4 input 1..16, kernel with a distinct weight per tap, bias 0.5.
        let input = Tensor::from_vec(&[1, 4, 4], (1..=16).map(|v| v as f64).collect());
        let k = [1.0, 0.0, -1.0, 2.0, 0.5, -2.0, 0.0, 1.0, 0.0];
        let weight = Tensor::from_vec(&[1, 1, 3, 3], k.to_vec());
        let bias = Tensor::from_vec(&[1], vec![0.5]);
        let out = conv2d_forward(&input, &weight, &bias);
        // Worked by hand with zero padding, e.g. output (0,0):
        // 0.5*1 + -2*2 + 1*5 + 0.5 = 2.0 and output (1,1):
        // 1*1 - 1*3 + 2*5 + 0.5*6 - 2*7 + 1*10 + 0.5 = 7.5.
        let want = [
            2.0, 3.5, 5.0, 16.5, //
            -2.0, 7.5, 9.0, 33.5, //
            -8.0, 13.5, 15.0, 51.5, //
            -31.0, 1.5, 2.0, 49.5,
        ];
        assert_eq!(out.data(), &want);
    }

    #[test]
    fn dense_weight_gradient_is_outer_product() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]);
        let w = Tensor::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4]);
        let g = Tensor::from_vec(&[2], vec![2.0, -1.0]);
        let (dx, dw, db) = dense_backward(&x, &w, &g);
        assert_eq!(dw.data(), &[2.0, -4.0, 1.0, -1.0, 2.0, -0.5]);
        assert_eq!(db.data(), &[2.0, -1.0]);
        assert_eq!(dx.data(), &[0.1 * 2.0 + 0.1, 0.2 * 2.0, 0.3 * 2.0 - 0.4]);
    }

    #[test]
    fn relu_is_idempotent() {
        let t = Tensor::from_vec(&[4], vec![-1.0, 0.0, 2.0, -0.5]);
        let once = relu_forward(&t);
        assert_eq!(relu_forward(&once), once);
    }

    #[test]
    fn maxpool_picks_window_max() {
        let t = Tensor::from_vec(&[1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, 9.0, 2.0]);
        let out = maxpool2_forward(&t);
        assert_eq!(out.data(), &[5.0, 9.0]);
        let d = maxpool2_backward(&t, &Tensor::from_vec(&[1, 1, 2], vec![1.0, 2.0]));
        assert_eq!(d.data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let l = [1.0, -3.0, 0.25, 7.0];
        let p = softmax(&l);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = l.iter().map(|v| v + 100.0).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
