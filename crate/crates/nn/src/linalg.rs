//! Matrix products and the image/column rearrangements that turn convolutions into them.
//!
//! All matrices are dense row-major `f32` slices. Large products go through
//! `matrixmultiply`; the skinny shapes that dominate the 1x1..4x4 layers of a
//! batch-1 U-Net are memory bound and handled by streaming kernels instead.

const SKINNY: usize = 4;

/// `C = op(A) * op(B) + beta * C` with `op(A)` of shape `m x k` and `op(B)` of shape `k x n`.
///
/// When `ta` is set, `A` is stored as `k x m`; when `tb` is set, `B` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, n: usize, k: usize, a: &[f32], ta: bool, b: &[f32], tb: bool, beta: f32, c: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        scale_into(c, beta);
        return;
    }
    if n <= SKINNY {
        gemm_narrow(m, n, k, a, ta, b, tb, beta, c);
    } else if m <= SKINNY {
        // C^T = op(B)^T op(A)^T has a narrow right-hand side.
        let mut ct = vec![0.0f32; n * m];
        if beta != 0.0 {
            transpose_into(c, m, n, &mut ct);
        }
        gemm_narrow(n, m, k, b, !tb, a, !ta, beta, &mut ct);
        transpose_into(&ct, n, m, c);
    } else if k <= SKINNY {
        gemm_shallow(m, n, k, a, ta, b, tb, beta, c);
    } else {
        let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
        let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
        // SAFETY: strides describe exactly the slices checked above.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

fn scale_into(c: &mut [f32], beta: f32) {
    if beta == 0.0 {
        c.fill(0.0);
    } else if beta != 1.0 {
        c.iter_mut().for_each(|v| *v *= beta);
    }
}

fn transpose_into(src: &[f32], rows: usize, cols: usize, dst: &mut [f32]) {
    for r in 0..rows {
        for (col, &v) in src[r * cols..(r + 1) * cols].iter().enumerate() {
            dst[col * rows + r] = v;
        }
    }
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 16];
    let mut ca = a.chunks_exact(16);
    let mut cb = b.chunks_exact(16);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..16 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let mut s = 0.0f32;
    for v in acc {
        s += v;
    }
    s + tail
}

#[inline]
pub fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm_narrow(m: usize, n: usize, k: usize, a: &[f32], ta: bool, b: &[f32], tb: bool, beta: f32, c: &mut [f32]) {
    // Columns of op(B) laid out contiguously: n x k.
    let bcols: std::borrow::Cow<'_, [f32]> = if tb {
        std::borrow::Cow::Borrowed(b)
    } else {
        let mut t = vec![0.0f32; n * k];
        transpose_into(b, k, n, &mut t);
        std::borrow::Cow::Owned(t)
    };
    if !ta {
        for i in 0..m {
            let row = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let v = dot(row, &bcols[j * k..(j + 1) * k]);
                let out = &mut c[i * n + j];
                *out = if beta == 0.0 { v } else { beta * *out + v };
            }
        }
    } else {
        // A stored k x m: stream its rows once, accumulating every output column.
        let mut acc = vec![0.0f32; n * m];
        for p in 0..k {
            let arow = &a[p * m..(p + 1) * m];
            for j in 0..n {
                let bpj = bcols[j * k + p];
                if bpj != 0.0 {
                    axpy(bpj, arow, &mut acc[j * m..(j + 1) * m]);
                }
            }
        }
        for i in 0..m {
            for j in 0..n {
                let v = acc[j * m + i];
                let out = &mut c[i * n + j];
                *out = if beta == 0.0 { v } else { beta * *out + v };
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm_shallow(m: usize, n: usize, k: usize, a: &[f32], ta: bool, b: &[f32], tb: bool, beta: f32, c: &mut [f32]) {
    let brows: std::borrow::Cow<'_, [f32]> = if tb {
        let mut t = vec![0.0f32; k * n];
        transpose_into(b, n, k, &mut t);
        std::borrow::Cow::Owned(t)
    } else {
        std::borrow::Cow::Borrowed(b)
    };
    scale_into(c, beta);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = if ta { a[p * m + i] } else { a[i * k + p] };
            if aip != 0.0 {
                axpy(aip, &brows[p * n..(p + 1) * n], crow);
            }
        }
    }
}

/// Geometry of a 2-D convolution window sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Returns `None` when the padded input is smaller than the kernel.
    pub fn new(channels: usize, in_h: usize, in_w: usize, kernel: usize, stride: usize, padding: usize) -> Option<Self> {
        if kernel == 0 || stride == 0 || in_h + 2 * padding < kernel || in_w + 2 * padding < kernel {
            return None;
        }
        Some(Self {
            channels,
            in_h,
            in_w,
            kernel,
            stride,
            padding,
            out_h: (in_h + 2 * padding - kernel) / stride + 1,
            out_w: (in_w + 2 * padding - kernel) / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds every kernel window of `x` into a column: result is `(C*k*k) x (oh*ow)`.
pub fn im2col(x: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let n = g.col_cols();
    debug_assert_eq!(cols.len(), g.col_rows() * n);
    for ch in 0..g.channels {
        let plane = &x[ch * g.in_h * g.in_w..(ch + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky) as isize - p;
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p;
                        *d = if ix < 0 || ix >= g.in_w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlapping windows into `x`.
pub fn col2im(cols: &[f32], g: &ConvGeometry, x: &mut [f32]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let n = g.col_cols();
    debug_assert_eq!(cols.len(), g.col_rows() * n);
    x.fill(0.0);
    for ch in 0..g.channels {
        let plane = &mut x[ch * g.in_h * g.in_w..(ch + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let iy = (oy * s + ky) as isize - p;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let srow = &src[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, &v) in srow.iter().enumerate() {
                        let ix = (ox * s + kx) as isize - p;
                        if ix >= 0 && (ix as usize) < g.in_w {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(m: usize, n: usize, k: usize, a: &[f32], ta: bool, b: &[f32], tb: bool) -> Vec<f64> {
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f64;
                for p in 0..k {
                    let av = if ta { a[p * m + i] } else { a[i * k + p] };
                    let bv = if tb { b[j * k + p] } else { b[p * n + j] };
                    s += av as f64 * bv as f64;
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    fn ramp(len: usize, seed: u32) -> Vec<f32> {
        (0..len)
            .map(|i| (((i as u32).wrapping_mul(2654435761).wrapping_add(seed) >> 8) % 1000) as f32 / 500.0 - 1.0)
            .collect()
    }

    proptest! {
        #[test]
        fn gemm_matches_naive_on_every_path(
            m in 1usize..20, n in 1usize..20, k in 1usize..40,
            ta: bool, tb: bool, seed: u32, accumulate: bool,
        ) {
            let a = ramp(m * k, seed);
            let b = ramp(k * n, seed ^ 0x5bd1e995);
            let init = ramp(m * n, seed.wrapping_add(7));
            let mut c = init.clone();
            let beta = if accumulate { 1.0 } else { 0.0 };
            gemm(m, n, k, &a, ta, &b, tb, beta, &mut c);
            let want = naive(m, n, k, &a, ta, &b, tb);
            for i in 0..m * n {
                let expect = want[i] + beta as f64 * init[i] as f64;
                prop_assert!((c[i] as f64 - expect).abs() < 1e-4, "{} vs {}", c[i], expect);
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for any x, y.
        for &(c, h, w, k, s, p) in &[(2, 7, 5, 3, 2, 1), (3, 8, 8, 4, 2, 1), (1, 6, 6, 2, 1, 0), (2, 9, 9, 3, 3, 0)] {
            let g = ConvGeometry::new(c, h, w, k, s, p).unwrap();
            let x = ramp(c * h * w, 3);
            let y = ramp(g.col_rows() * g.col_cols(), 11);
            let mut cols = vec![0.0; y.len()];
            im2col(&x, &g, &mut cols);
            let mut back = vec![0.0; x.len()];
            col2im(&y, &g, &mut back);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| *a as f64 * *b as f64).sum();
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| *a as f64 * *b as f64).sum();
            assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn geometry_output_sizes() {
        let g = ConvGeometry::new(4, 64, 64, 4, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (32, 32));
        let g = ConvGeometry::new(8, 64, 64, 2, 1, 0).unwrap();
        assert_eq!((g.out_h, g.out_w), (63, 63));
        assert!(ConvGeometry::new(1, 1, 1, 4, 2, 1).is_none());
        let g = ConvGeometry::new(1, 2, 2, 4, 2, 1).unwrap();
        assert_eq!((g.out_h, g.out_w), (1, 1));
    }
}
