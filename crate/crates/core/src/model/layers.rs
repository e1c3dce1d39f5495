//! Single-sample forward/backward kernels on channel-major `f64` feature maps.

use super::params::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FeatureMap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self::new(c, h, w, vec![0.0; c * h * w])
    }
}

/// Square convolution with zero padding.
#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &FeatureMap, oh: usize, ow: usize) -> Vec<f64> {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let np = oh * ow;
        let mut col = vec![0.0; self.in_c * k * k * np];
        for c in 0..self.in_c {
            let plane = &x.data[c * x.h * x.w..(c + 1) * x.h * x.w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * np;
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let dst = &mut col[row + oy * ow..row + (oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> FeatureMap {
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        let np = oh * ow;
        let mut out = FeatureMap::zeros(self.in_c, h, w);
        for c in 0..self.in_c {
            let plane = &mut out.data[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * np;
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &col[row + oy * ow..row + (oy + 1) * ow];
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, v) in src.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns the output and the im2col buffer needed by [`Conv::backward`].
    pub fn forward(&self, params: &ParamStore, x: &FeatureMap) -> (FeatureMap, Vec<f64>) {
        debug_assert_eq!(x.c, self.in_c);
        let (oh, ow) = self.out_dims(x.h, x.w);
        let np = oh * ow;
        let col = self.im2col(x, oh, ow);
        let wt = params.data(self.weight);
        let bias = params.data(self.bias);
        let kk = self.in_c * self.k * self.k;
        let mut out = vec![0.0; self.out_c * np];
        for oc in 0..self.out_c {
            let dst = &mut out[oc * np..(oc + 1) * np];
            dst.fill(bias[oc]);
            for r in 0..kk {
                let wv = wt[oc * kk + r];
                if wv == 0.0 {
                    continue;
                }
                let src = &col[r * np..(r + 1) * np];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            }
        }
        (FeatureMap::new(self.out_c, oh, ow, out), col)
    }

    /// Accumulates weight/bias gradients into `grads` and returns the input
    /// gradient when `need_input_grad`.
    pub fn backward(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        col: &[f64],
        dout: &FeatureMap,
        in_dims: (usize, usize),
        need_input_grad: bool,
    ) -> Option<FeatureMap> {
        let np = dout.h * dout.w;
        let kk = self.in_c * self.k * self.k;
        {
            let gw = grads.data_mut(self.weight);
            for oc in 0..self.out_c {
                let g = &dout.data[oc * np..(oc + 1) * np];
                for r in 0..kk {
                    let src = &col[r * np..(r + 1) * np];
                    gw[oc * kk + r] += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        {
            let gb = grads.data_mut(self.bias);
            for (b, g) in gb.iter_mut().zip(dout.data.chunks_exact(np)) {
                *b += g.iter().sum::<f64>();
            }
        }
        if !need_input_grad {
            return None;
        }
        let wt = params.data(self.weight);
        let mut dcol = vec![0.0; kk * np];
        for oc in 0..self.out_c {
            let g = &dout.data[oc * np..(oc + 1) * np];
            for r in 0..kk {
                let wv = wt[oc * kk + r];
                let dst = &mut dcol[r * np..(r + 1) * np];
                for (d, gv) in dst.iter_mut().zip(g) {
                    *d += wv * gv;
                }
            }
        }
        Some(self.col2im(&dcol, in_dims.0, in_dims.1, dout.h, dout.w))
    }
}

/// Dense layer `y = W x + b`, `W` stored row-major `[out][in]`.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub in_f: usize,
    pub out_f: usize,
}

impl Linear {
    pub fn forward(&self, params: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = params.data(self.weight);
        let b = params.data(self.bias);
        (0..self.out_f)
            .map(|o| {
                b[o] + w[o * self.in_f..(o + 1) * self.in_f]
                    .iter()
                    .zip(x)
                    .map(|(a, c)| a * c)
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn backward(
        &self,
        params: &ParamStore,
        grads: &mut ParamStore,
        x: &[f64],
        dy: &[f64],
    ) -> Vec<f64> {
        {
            let gw = grads.data_mut(self.weight);
            for o in 0..self.out_f {
                for i in 0..self.in_f {
                    gw[o * self.in_f + i] += dy[o] * x[i];
                }
            }
        }
        {
            let gb = grads.data_mut(self.bias);
            for o in 0..self.out_f {
                gb[o] += dy[o];
            }
        }
        let w = params.data(self.weight);
        (0..self.in_f)
            .map(|i| (0..self.out_f).map(|o| w[o * self.in_f + i] * dy[o]).sum())
            .collect()
    }
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `grad` where the ReLU output was not positive.
pub(crate) fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, o) in grad.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn global_avg_pool(x: &FeatureMap) -> Vec<f64> {
    let n = (x.h * x.w) as f64;
    x.data
        .chunks_exact(x.h * x.w)
        .map(|c| c.iter().sum::<f64>() / n)
        .collect()
}

pub(crate) fn global_avg_pool_backward(dg: &[f64], c: usize, h: usize, w: usize) -> FeatureMap {
    let n = (h * w) as f64;
    let mut data = Vec::with_capacity(c * h * w);
    for g in dg.iter().take(c) {
        data.extend(std::iter::repeat_n(g / n, h * w));
    }
    FeatureMap::new(c, h, w, data)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(conv_w: Vec<f64>, conv_b: Vec<f64>, shape: Vec<usize>) -> ParamStore {
        let mut s = ParamStore::default();
        let n = conv_b.len();
        s.push("w".into(), shape, conv_w);
        s.push("b".into(), vec![n], conv_b);
        s
    }

    /// Direct nested-loop convolution for comparison with the im2col path.
    fn naive_conv(conv: &Conv, p: &ParamStore, x: &FeatureMap) -> FeatureMap {
        let (oh, ow) = conv.out_dims(x.h, x.w);
        let w = p.data(conv.weight);
        let b = p.data(conv.bias);
        let mut out = FeatureMap::zeros(conv.out_c, oh, ow);
        for oc in 0..conv.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..conv.in_c {
                        for ky in 0..conv.k {
                            for kx in 0..conv.k {
                                let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                    acc += w[((oc * conv.in_c + ic) * conv.k + ky) * conv.k + kx]
                                        * x.data[(ic * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                    }
                    out.data[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_naive() {
        for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (2, 0, 1)] {
            let conv = Conv {
                weight: 0,
                bias: 1,
                in_c: 2,
                out_c: 3,
                k,
                stride,
                pad,
            };
            let nw = 3 * 2 * k * k;
            let p = store_with(
                (0..nw).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect(),
                vec![0.1, -0.2, 0.3],
                vec![3, 2, k, k],
            );
            let x = FeatureMap::new(2, 7, 6, (0..84).map(|i| (i as f64 * 0.37).sin()).collect());
            let (fast, _) = conv.forward(&p, &x);
            let slow = naive_conv(&conv, &p, &x);
            assert_eq!((fast.h, fast.w), (slow.h, slow.w));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
