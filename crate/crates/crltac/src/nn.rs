//! Minimal layer zoo with explicit forward caches and hand-derived
//! backward passes: im2col convolutions, linear maps, ReLU, global
//! average pooling, row softmax/normalization, and Adam.
//!
//! Parameter access goes through [`ParamSet::visit`], which enumerates
//! `(value, grad)` slices in a fixed order; the optimizer, checkpoint
//! serialization, parameter hashing, and the finite-difference test
//! harness all share that traversal.

use ndarray::{Array1, Array2, Array4, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::float::Float;

/// Fixed-order traversal over `(values, grads)` flat slices.
pub trait ParamSet<F: Float> {
    fn visit(&mut self, f: &mut dyn FnMut(&mut [F], &mut [F]));

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |w, _| n += w.len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit(&mut |_, g| g.iter_mut().for_each(|x| *x = F::zero()));
    }

    fn flatten_params(&mut self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit(&mut |w, _| out.extend_from_slice(w));
        out
    }

    fn load_params(&mut self, flat: &[F]) {
        let mut off = 0;
        self.visit(&mut |w, _| {
            w.copy_from_slice(&flat[off..off + w.len()]);
            off += w.len();
        });
        assert_eq!(off, flat.len(), "parameter blob length mismatch");
    }

    fn flatten_grads(&mut self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit(&mut |_, g| out.extend_from_slice(g));
        out
    }

    /// SHA-256 over the little-endian bytes of all parameter values.
    fn params_hash(&mut self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        self.visit(&mut |w, _| {
            for &x in w.iter() {
                hasher.update(x.as_f64().to_le_bytes());
            }
        });
        hasher.finalize().into()
    }
}

/// 2-d convolution stored as a `[out_c, in_c·k·k]` weight matrix applied
/// to im2col patches.
pub struct Conv2d<F: Float> {
    pub w: Array2<F>,
    pub b: Array1<F>,
    pub gw: Array2<F>,
    pub gb: Array1<F>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<F: Float> Conv2d<F> {
    pub fn new<R: Rng + ?Sized>(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_c * k * k;
        let w = he_normal(rng, out_c, fan_in);
        Self {
            w,
            b: Array1::zeros(out_c),
            gw: Array2::zeros((out_c, fan_in)),
            gb: Array1::zeros(out_c),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &Array4<F>) -> Array2<F> {
        let (n, c, h, w) = x.dim();
        debug_assert_eq!(c, self.in_c);
        let (oh, ow) = self.out_hw(h, w);
        let rows = c * self.k * self.k;
        let mut cols = Array2::<F>::zeros((rows, n * oh * ow));
        for ci in 0..c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let mut row_view = cols.row_mut(row);
                    let row_slice = row_view.as_slice_mut().expect("contiguous row");
                    for ni in 0..n {
                        let base = ni * oh * ow;
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                row_slice[base + oy * ow + ox] =
                                    x[[ni, ci, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let cols = self.im2col(x);
        let y_mat = self.w.dot(&cols);
        let mut y = Array4::<F>::zeros((n, self.out_c, oh, ow));
        for ni in 0..n {
            for co in 0..self.out_c {
                let bias = self.b[co];
                for oy in 0..oh {
                    for ox in 0..ow {
                        y[[ni, co, oy, ox]] = y_mat[[co, ni * oh * ow + oy * ow + ox]] + bias;
                    }
                }
            }
        }
        y
    }

    /// Accumulates weight/bias grads and returns the input grad.
    pub fn backward(&mut self, x: &Array4<F>, dy: &Array4<F>) -> Array4<F> {
        let (n, _, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let mut dy_mat = Array2::<F>::zeros((self.out_c, n * oh * ow));
        for ni in 0..n {
            for co in 0..self.out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        dy_mat[[co, ni * oh * ow + oy * ow + ox]] = dy[[ni, co, oy, ox]];
                    }
                }
            }
        }
        let cols = self.im2col(x);
        self.gw = &self.gw + &dy_mat.dot(&cols.t());
        self.gb = &self.gb + &dy_mat.sum_axis(Axis(1));

        let dcols = self.w.t().dot(&dy_mat);
        let mut dx = Array4::<F>::zeros(x.dim());
        for ci in 0..self.in_c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ci * self.k + ky) * self.k + kx;
                    let row_view = dcols.row(row);
                    let row_slice = row_view.as_slice().expect("contiguous row");
                    for ni in 0..n {
                        let base = ni * oh * ow;
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dx[[ni, ci, iy as usize, ix as usize]] +=
                                    row_slice[base + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Fully connected layer `y = x Wᵀ + b`.
pub struct Linear<F: Float> {
    pub w: Array2<F>,
    pub b: Array1<F>,
    pub gw: Array2<F>,
    pub gb: Array1<F>,
}

impl<F: Float> Linear<F> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let w = he_normal(rng, out_dim, in_dim);
        Self {
            w,
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    /// Near-zero initialization (used by policy output heads so the
    /// initial distribution is close to uniform).
    pub fn new_small<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let dist = Normal::new(0.0, std).expect("valid std");
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| F::of_f64(dist.sample(rng)));
        Self {
            w,
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    pub fn backward(&mut self, x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
        self.gw = &self.gw + &dy.t().dot(x);
        self.gb = &self.gb + &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

fn he_normal<F: Float, R: Rng + ?Sized>(rng: &mut R, rows: usize, fan_in: usize) -> Array2<F> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    Array2::from_shape_fn((rows, fan_in), |_| F::of_f64(dist.sample(rng)))
}

pub fn relu4<F: Float>(x: &Array4<F>) -> Array4<F> {
    x.mapv(|v| v.max(F::zero()))
}

pub fn relu4_backward<F: Float>(x: &Array4<F>, dy: &Array4<F>) -> Array4<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

pub fn relu2<F: Float>(x: &Array2<F>) -> Array2<F> {
    x.mapv(|v| v.max(F::zero()))
}

pub fn relu2_backward<F: Float>(x: &Array2<F>, dy: &Array2<F>) -> Array2<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

/// `[n, c, h, w] -> [n, c]` mean over the spatial extent.
pub fn global_avg_pool<F: Float>(x: &Array4<F>) -> Array2<F> {
    let (n, c, h, w) = x.dim();
    let scale = F::one() / F::from_usize(h * w);
    let mut y = Array2::<F>::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = F::zero();
            for yy in 0..h {
                for xx in 0..w {
                    acc += x[[ni, ci, yy, xx]];
                }
            }
            y[[ni, ci]] = acc * scale;
        }
    }
    y
}

pub fn global_avg_pool_backward<F: Float>(
    dy: &Array2<F>,
    shape: (usize, usize, usize, usize),
) -> Array4<F> {
    let (n, c, h, w) = shape;
    let scale = F::one() / F::from_usize(h * w);
    let mut dx = Array4::<F>::zeros(shape);
    for ni in 0..n {
        for ci in 0..c {
            let g = dy[[ni, ci]] * scale;
            for yy in 0..h {
                for xx in 0..w {
                    dx[[ni, ci, yy, xx]] = g;
                }
            }
        }
    }
    dx
}

/// Row-wise max-shifted softmax.
pub fn softmax_rows<F: Float>(x: &Array2<F>) -> Array2<F> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// Backward of `p = softmax(z)` given `dL/dp`: `dz = p ⊙ (dp − (dp·p))`.
pub fn softmax_rows_backward<F: Float>(p: &Array2<F>, dp: &Array2<F>) -> Array2<F> {
    let mut dz = Array2::<F>::zeros(p.dim());
    for i in 0..p.nrows() {
        let mut inner = F::zero();
        for j in 0..p.ncols() {
            inner += dp[[i, j]] * p[[i, j]];
        }
        for j in 0..p.ncols() {
            dz[[i, j]] = p[[i, j]] * (dp[[i, j]] - inner);
        }
    }
    dz
}

/// Projects each row onto the unit sphere; returns the projected rows and
/// the original norms.
pub fn normalize_rows<F: Float>(x: &Array2<F>) -> (Array2<F>, Array1<F>) {
    let mut y = x.clone();
    let mut norms = Array1::<F>::zeros(x.nrows());
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let n = row.iter().map(|&v| v * v).fold(F::zero(), |a, b| a + b).sqrt();
        norms[i] = n;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    (y, norms)
}

/// Backward of row normalization: `dx = (dy − (dy·ŷ) ŷ) / ‖x‖`.
pub fn normalize_rows_backward<F: Float>(
    y: &Array2<F>,
    norms: &Array1<F>,
    dy: &Array2<F>,
) -> Array2<F> {
    let mut dx = Array2::<F>::zeros(y.dim());
    for i in 0..y.nrows() {
        let mut inner = F::zero();
        for j in 0..y.ncols() {
            inner += dy[[i, j]] * y[[i, j]];
        }
        for j in 0..y.ncols() {
            dx[[i, j]] = (dy[[i, j]] - inner * y[[i, j]]) / norms[i];
        }
    }
    dx
}

/// Adam with the usual bias correction; moment buffers are keyed by the
/// [`ParamSet`] traversal order.
pub struct Adam<F: Float> {
    pub lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    t: u64,
    moments: Vec<(Vec<F>, Vec<F>)>,
}

impl<F: Float> Adam<F> {
    pub fn new(lr: F) -> Self {
        Self {
            lr,
            beta1: F::of_f64(0.9),
            beta2: F::of_f64(0.999),
            eps: F::of_f64(1e-8),
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn step<P: ParamSet<F> + ?Sized>(&mut self, params: &mut P) {
        self.t += 1;
        let t = self.t;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let bc1 = F::one() - b1.powi(t as i32);
        let bc2 = F::one() - b2.powi(t as i32);
        let moments = &mut self.moments;
        let mut idx = 0;
        params.visit(&mut |w, g| {
            if moments.len() == idx {
                moments.push((vec![F::zero(); w.len()], vec![F::zero(); w.len()]));
            }
            let (m, v) = &mut moments[idx];
            assert_eq!(m.len(), w.len(), "optimizer slot shape drift");
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct ConvNet {
        conv: Conv2d<f64>,
    }

    impl ParamSet<f64> for ConvNet {
        fn visit(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
            f(
                self.conv.w.as_slice_mut().unwrap(),
                self.conv.gw.as_slice_mut().unwrap(),
            );
            f(
                self.conv.b.as_slice_mut().unwrap(),
                self.conv.gb.as_slice_mut().unwrap(),
            );
        }
    }

    #[test]
    fn conv_output_shape_and_center_tap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::<f64>::new(1, 1, 3, 2, 1, &mut rng);
        conv.w.fill(0.0);
        conv.w[[0, 4]] = 1.0; // center tap: pure stride-2 subsampling
        let x = Array4::from_shape_fn((1, 1, 6, 6), |(_, _, i, j)| (i * 6 + j) as f64);
        let y = conv.forward(&x);
        assert_eq!(y.dim(), (1, 1, 3, 3));
        for oy in 0..3 {
            for ox in 0..3 {
                assert_relative_eq!(y[[0, 0, oy, ox]], (2 * oy * 6 + 2 * ox) as f64);
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ConvNet {
            conv: Conv2d::<f64>::new(2, 3, 3, 2, 1, &mut rng),
        };
        let x = Array4::from_shape_fn((2, 2, 5, 5), |(n, c, i, j)| {
            ((n + c + i * 5 + j) as f64 * 0.7).sin()
        });
        let loss = |net: &ConvNet, x: &Array4<f64>| -> f64 {
            let y = net.conv.forward(x);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        let y = net.conv.forward(&x);
        let dy = y.mapv(|v| 2.0 * v);
        let dx = net.conv.backward(&x, &dy);

        let analytic = net.flatten_grads();
        let base = net.flatten_params();
        let h = 1e-6;
        for idx in [0usize, 5, 11, 20, base.len() - 1] {
            let mut p = base.clone();
            p[idx] += h;
            net.load_params(&p);
            let up = loss(&net, &x);
            p[idx] -= 2.0 * h;
            net.load_params(&p);
            let dn = loss(&net, &x);
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(analytic[idx], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
        net.load_params(&base);

        for (n, c, i, j) in [(0, 0, 0, 0), (1, 1, 2, 3), (0, 1, 4, 4)] {
            let mut xp = x.clone();
            xp[[n, c, i, j]] += h;
            let up = loss(&net, &xp);
            xp[[n, c, i, j]] -= 2.0 * h;
            let dn = loss(&net, &xp);
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(dx[[n, c, i, j]], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut lin = Linear::<f64>::new(4, 3, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i * 4 + j) as f64 * 0.3).cos());
        let y = lin.forward(&x);
        let dy = y.mapv(|v| 2.0 * v);
        let dx = lin.backward(&x, &dy);
        let h = 1e-6;
        let loss = |lin: &Linear<f64>, x: &Array2<f64>| -> f64 {
            lin.forward(x).iter().map(|v| v * v).sum::<f64>()
        };
        for (r, c) in [(0usize, 0usize), (2, 3), (1, 1)] {
            let saved = lin.w[[r, c]];
            lin.w[[r, c]] = saved + h;
            let up = loss(&lin, &x);
            lin.w[[r, c]] = saved - h;
            let dn = loss(&lin, &x);
            lin.w[[r, c]] = saved;
            assert_relative_eq!(
                lin.gw[[r, c]],
                (up - dn) / (2.0 * h),
                max_relative = 1e-6,
                epsilon = 1e-9
            );
        }
        for (i, j) in [(0usize, 0usize), (4, 3)] {
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let up = loss(&lin, &xp);
            xp[[i, j]] -= 2.0 * h;
            let dn = loss(&lin, &xp);
            assert_relative_eq!(
                dx[[i, j]],
                (up - dn) / (2.0 * h),
                max_relative = 1e-6,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn softmax_rows_are_simplex_points() {
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i as f64) - (j as f64) * 0.5);
        let p = softmax_rows(&x);
        for row in p.rows() {
            let s: f64 = row.sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let z = Array2::from_shape_fn((2, 4), |(i, j)| ((i + j) as f64 * 0.9).sin());
        let coef = Array2::from_shape_fn((2, 4), |(i, j)| ((i * 4 + j) as f64).cos());
        let p = softmax_rows(&z);
        let dz = softmax_rows_backward(&p, &coef);
        let h = 1e-7;
        for (i, j) in [(0usize, 0usize), (1, 2), (0, 3)] {
            let mut zp = z.clone();
            zp[[i, j]] += h;
            let up = (softmax_rows(&zp) * &coef).sum();
            zp[[i, j]] -= 2.0 * h;
            let dn = (softmax_rows(&zp) * &coef).sum();
            assert_relative_eq!(
                dz[[i, j]],
                (up - dn) / (2.0 * h),
                max_relative = 1e-5,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn normalize_rows_backward_matches_finite_differences() {
        let x = Array2::from_shape_fn((2, 3), |(i, j)| 0.5 + ((i * 3 + j) as f64 * 1.3).sin());
        let coef = Array2::from_shape_fn((2, 3), |(i, j)| ((i + 2 * j) as f64).cos());
        let (y, norms) = normalize_rows(&x);
        for row in y.rows() {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert_relative_eq!(n, 1.0, epsilon = 1e-12);
        }
        let dx = normalize_rows_backward(&y, &norms, &coef);
        let h = 1e-7;
        for (i, j) in [(0usize, 0usize), (1, 2), (0, 1)] {
            let mut xp = x.clone();
            xp[[i, j]] += h;
            let up = (normalize_rows(&xp).0 * &coef).sum();
            xp[[i, j]] -= 2.0 * h;
            let dn = (normalize_rows(&xp).0 * &coef).sum();
            assert_relative_eq!(
                dx[[i, j]],
                (up - dn) / (2.0 * h),
                max_relative = 1e-5,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn global_pool_roundtrip() {
        let x = Array4::from_shape_fn((2, 3, 4, 4), |(n, c, i, j)| (n + c + i + j) as f64);
        let y = global_avg_pool(&x);
        assert_eq!(y.dim(), (2, 3));
        assert_relative_eq!(y[[0, 0]], 3.0); // mean of i+j over the 4x4 grid
        let dy = Array2::from_elem((2, 3), 16.0);
        let dx = global_avg_pool_backward(&dy, x.dim());
        assert_relative_eq!(dx[[0, 0, 0, 0]], 1.0);
    }

    #[test]
    fn adam_descends_on_quadratic() {
        struct Quad {
            w: Vec<f64>,
            g: Vec<f64>,
        }
        impl ParamSet<f64> for Quad {
            fn visit(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
                f(&mut self.w, &mut self.g);
            }
        }
        let mut q = Quad {
            w: vec![3.0, -2.0, 0.5],
            g: vec![0.0; 3],
        };
        let mut opt = Adam::<f64>::new(0.05);
        for _ in 0..2000 {
            for i in 0..3 {
                q.g[i] = 2.0 * q.w[i];
            }
            opt.step(&mut q);
        }
        for &w in &q.w {
            assert!(w.abs() < 1e-3, "Adam failed to reach the minimum: {w}");
        }
    }

    #[test]
    fn param_hash_tracks_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = ConvNet {
            conv: Conv2d::<f64>::new(1, 2, 3, 1, 1, &mut rng),
        };
        let h1 = net.params_hash();
        let h2 = net.params_hash();
        assert_eq!(h1, h2);
        net.conv.w[[0, 0]] += 1e-9;
        assert_ne!(h1, net.params_hash());
    }
}
