//! Tiny dense kernels shared by the hand-rolled networks. Matrices are
//! row-major `rows x cols` slices.

/// out += W·x where W is `out.len() x x.len()`.
#[inline]
pub fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o += acc;
    }
}

/// out += Wᵀ·d where W is `d.len() x out.len()`.
#[inline]
pub fn matvec_t_add(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), d.len() * cols);
    for (r, dv) in d.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        for (o, wv) in out.iter_mut().zip(row) {
            *o += dv * wv;
        }
    }
}

/// gw += d ⊗ x (outer product), gw is `d.len() x x.len()`.
#[inline]
pub fn outer_add(d: &[f64], x: &[f64], gw: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(gw.len(), d.len() * cols);
    for (r, dv) in d.iter().enumerate() {
        let row = &mut gw[r * cols..(r + 1) * cols];
        for (g, xv) in row.iter_mut().zip(x) {
            *g += dv * xv;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
