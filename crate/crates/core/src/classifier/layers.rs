//! The fixed layer set: 1-D "same"-padded convolution and a dense head.
//!
//! Convolutions are expressed per tap as shifted axpy/dot passes over whole
//! rows, which keeps the inner loops free of per-element bounds arithmetic.

/// 1-D convolution with "same" zero padding (odd kernel).
///
/// Weight layout is `[out_ch][in_ch][k]`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Conv1d {
        assert!(k % 2 == 1, "same padding requires an odd kernel");
        Conv1d { out_ch, in_ch, k, w: vec![0.0; out_ch * in_ch * k], b: vec![0.0; out_ch] }
    }

    pub fn weight_count(&self) -> usize {
        self.out_ch * self.in_ch * self.k
    }

    /// Valid output range for tap offset `d = j - pad`: `t` in `[t0, t1)`.
    #[inline]
    fn tap_range(l: usize, d: isize) -> (usize, usize) {
        let t0 = if d < 0 { (-d) as usize } else { 0 };
        let t1 = if d > 0 { l - d as usize } else { l };
        (t0, t1)
    }

    /// z[oc][t] = b[oc] + sum_ic sum_j w[oc][ic][j] * x[ic][t + j - pad]
    pub fn forward(&self, x: &[f64], l: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_ch * l);
        debug_assert_eq!(out.len(), self.out_ch * l);
        let pad = (self.k / 2) as isize;
        for oc in 0..self.out_ch {
            let row = &mut out[oc * l..(oc + 1) * l];
            row.fill(self.b[oc]);
            for ic in 0..self.in_ch {
                let taps = &self.w[(oc * self.in_ch + ic) * self.k..][..self.k];
                let xr = &x[ic * l..(ic + 1) * l];
                for (j, &wj) in taps.iter().enumerate() {
                    let d = j as isize - pad;
                    let (t0, t1) = Self::tap_range(l, d);
                    let src = &xr[(t0 as isize + d) as usize..(t1 as isize + d) as usize];
                    for (o, &s) in row[t0..t1].iter_mut().zip(src) {
                        *o += wj * s;
                    }
                }
            }
        }
    }

    /// dx[ic][s] = sum_oc sum_j w[oc][ic][j] * dz[oc][s - j + pad]
    pub fn backward_input(&self, dz: &[f64], l: usize, dx: &mut [f64]) {
        debug_assert_eq!(dz.len(), self.out_ch * l);
        debug_assert_eq!(dx.len(), self.in_ch * l);
        dx.fill(0.0);
        let pad = (self.k / 2) as isize;
        for oc in 0..self.out_ch {
            let dzr = &dz[oc * l..(oc + 1) * l];
            for ic in 0..self.in_ch {
                let taps = &self.w[(oc * self.in_ch + ic) * self.k..][..self.k];
                let dxr = &mut dx[ic * l..(ic + 1) * l];
                for (j, &wj) in taps.iter().enumerate() {
                    let d = j as isize - pad;
                    let (t0, t1) = Self::tap_range(l, d);
                    let dst = &mut dxr[(t0 as isize + d) as usize..(t1 as isize + d) as usize];
                    for (o, &s) in dst.iter_mut().zip(&dzr[t0..t1]) {
                        *o += wj * s;
                    }
                }
            }
        }
    }

    /// gw[oc][ic][j] += sum_t dz[oc][t] * x[ic][t + j - pad];  gb[oc] += sum_t dz[oc][t]
    pub fn accumulate_grads(&self, x: &[f64], dz: &[f64], l: usize, gw: &mut [f64], gb: &mut [f64]) {
        debug_assert_eq!(gw.len(), self.weight_count());
        debug_assert_eq!(gb.len(), self.out_ch);
        let pad = (self.k / 2) as isize;
        for oc in 0..self.out_ch {
            let dzr = &dz[oc * l..(oc + 1) * l];
            gb[oc] += dzr.iter().sum::<f64>();
            for ic in 0..self.in_ch {
                let xr = &x[ic * l..(ic + 1) * l];
                let g = &mut gw[(oc * self.in_ch + ic) * self.k..][..self.k];
                for (j, gj) in g.iter_mut().enumerate() {
                    let d = j as isize - pad;
                    let (t0, t1) = Self::tap_range(l, d);
                    let src = &xr[(t0 as isize + d) as usize..(t1 as isize + d) as usize];
                    let mut acc = 0.0;
                    for (&a, &b) in dzr[t0..t1].iter().zip(src) {
                        acc += a * b;
                    }
                    *gj += acc;
                }
            }
        }
    }
}

/// Fully connected layer; weight layout `[out][in]`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub out_d: usize,
    pub in_d: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(out_d: usize, in_d: usize) -> Dense {
        Dense { out_d, in_d, w: vec![0.0; out_d * in_d], b: vec![0.0; out_d] }
    }

    pub fn weight_count(&self) -> usize {
        self.out_d * self.in_d
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_d..(o + 1) * self.in_d];
            let mut acc = self.b[o];
            for (&w, &xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *out_v = acc;
        }
    }

    pub fn backward_input(&self, dz: &[f64], dx: &mut [f64]) {
        dx.fill(0.0);
        for (o, &d) in dz.iter().enumerate() {
            let row = &self.w[o * self.in_d..(o + 1) * self.in_d];
            for (x, &w) in dx.iter_mut().zip(row) {
                *x += w * d;
            }
        }
    }

    pub fn accumulate_grads(&self, x: &[f64], dz: &[f64], gw: &mut [f64], gb: &mut [f64]) {
        for (o, &d) in dz.iter().enumerate() {
            gb[o] += d;
            let row = &mut gw[o * self.in_d..(o + 1) * self.in_d];
            for (g, &xv) in row.iter_mut().zip(x) {
                *g += d * xv;
            }
        }
    }
}

#[inline]
pub fn relu_inplace(z: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(z) {
        *o = if v > 0.0 { v } else { 0.0 };
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel_copies_input() {
        let mut conv = Conv1d::zeros(1, 1, 5);
        conv.w[2] = 1.0; // center tap
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0; 4];
        conv.forward(&x, 4, &mut out);
        assert_eq!(out, x);
    }

    #[test]
    fn conv_shift_kernel_pads_with_zero() {
        let mut conv = Conv1d::zeros(1, 1, 3);
        conv.w[0] = 1.0; // out[t] = x[t - 1]
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut out = [9.0; 4];
        conv.forward(&x, 4, &mut out);
        assert_eq!(out, [0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_matches_manual_matvec() {
        let mut dense = Dense::zeros(2, 3);
        dense.w.copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        dense.b.copy_from_slice(&[0.5, -0.5]);
        let x = [1.0, 1.0, 2.0];
        let mut out = [0.0; 2];
        dense.forward(&x, &mut out);
        assert_eq!(out, [1.0 + 2.0 + 6.0 + 0.5, 4.0 + 5.0 + 12.0 - 0.5]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let logits = [1.0; 11];
        let mut p = [0.0; 11];
        softmax(&logits, &mut p);
        for v in p {
            assert!((v - 1.0 / 11.0).abs() < 1e-15);
        }
    }
}
