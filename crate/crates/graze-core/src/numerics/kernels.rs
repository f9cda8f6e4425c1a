//! Dense accumulation kernels shared by the conv, LSTM and linear layers.
//!
//! `axpy`, `gemv_acc` and `ger_acc` perform per-lane FMAs in the same order
//! as the plain scalar loops they replace, so their results are bit-identical
//! to the fallback paths. `dot` uses a fixed lane-parallel order of its own;
//! it is deterministic but not bit-equal to a serial summation, and is only
//! used where gradients are compared against finite differences with a
//! tolerance, never where exact values are pinned.
//!
//! All kernels skip zero scale factors. A skipped term contributes an exact
//! `+0.0` or `-0.0`, and every accumulator here either starts at a real value
//! or at `+0.0` and can never become `-0.0` (products at these magnitudes do
//! not underflow, and exact cancellation yields `+0.0`), so `acc + ±0.0`
//! reproduces `acc` bit-for-bit.

#[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
mod avx {
    use std::arch::x86_64::*;

    /// `acc[j] += x * row[j]`, lanes of 8 with a scalar remainder.
    #[inline(always)]
    pub unsafe fn axpy(acc: &mut [f64], x: f64, row: &[f64]) {
        let mut chunks_acc = acc.chunks_exact_mut(8);
        let mut chunks_row = row.chunks_exact(8);
        let xb = _mm512_set1_pd(x);
        for (ca, cr) in (&mut chunks_acc).zip(&mut chunks_row) {
            let av = _mm512_loadu_pd(ca.as_ptr());
            let rv = _mm512_loadu_pd(cr.as_ptr());
            _mm512_storeu_pd(ca.as_mut_ptr(), _mm512_fmadd_pd(xb, rv, av));
        }
        for (av, rv) in chunks_acc.into_remainder().iter_mut().zip(chunks_row.remainder()) {
            *av = x.mul_add(*rv, *av);
        }
    }

    /// 8-wide accumulator held in one register across the whole input loop.
    #[inline(always)]
    pub unsafe fn gemv8(acc: &mut [f64], x: &[f64], rows: &[f64]) {
        let mut av = _mm512_loadu_pd(acc.as_ptr());
        for (i, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let rv = _mm512_loadu_pd(rows.as_ptr().add(i * 8));
            av = _mm512_fmadd_pd(_mm512_set1_pd(xv), rv, av);
        }
        _mm512_storeu_pd(acc.as_mut_ptr(), av);
    }

    /// 64-wide accumulator held in eight registers across the input loop.
    #[inline(always)]
    pub unsafe fn gemv64(acc: &mut [f64], x: &[f64], rows: &[f64]) {
        let mut av = [_mm512_setzero_pd(); 8];
        for (c, a) in av.iter_mut().enumerate() {
            *a = _mm512_loadu_pd(acc.as_ptr().add(c * 8));
        }
        for (i, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let xb = _mm512_set1_pd(xv);
            let r = rows.as_ptr().add(i * 64);
            for (c, a) in av.iter_mut().enumerate() {
                *a = _mm512_fmadd_pd(xb, _mm512_loadu_pd(r.add(c * 8)), *a);
            }
        }
        for (c, a) in av.iter().enumerate() {
            _mm512_storeu_pd(acc.as_mut_ptr().add(c * 8), *a);
        }
    }

    /// Rank-1 update with the 8-wide upstream row held in a register.
    #[inline(always)]
    pub unsafe fn ger8(acc_rows: &mut [f64], x: &[f64], urow: &[f64]) {
        let uv = _mm512_loadu_pd(urow.as_ptr());
        for (i, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let p = acc_rows.as_mut_ptr().add(i * 8);
            _mm512_storeu_pd(p, _mm512_fmadd_pd(_mm512_set1_pd(xv), uv, _mm512_loadu_pd(p)));
        }
    }

    /// Lane-parallel dot product: one vector accumulator, tree-reduced, then
    /// the scalar remainder. Fixed order, deterministic.
    #[inline(always)]
    pub unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut chunks_a = a.chunks_exact(8);
        let mut chunks_b = b.chunks_exact(8);
        let mut acc = _mm512_setzero_pd();
        for (pa, pb) in (&mut chunks_a).zip(&mut chunks_b) {
            acc = _mm512_fmadd_pd(_mm512_loadu_pd(pa.as_ptr()), _mm512_loadu_pd(pb.as_ptr()), acc);
        }
        let mut sum = _mm512_reduce_add_pd(acc);
        for (av, bv) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
            sum = av.mul_add(*bv, sum);
        }
        sum
    }
}

/// `acc[j] += x * row[j]` for all `j`, per-lane FMA.
#[inline(always)]
pub fn axpy(acc: &mut [f64], x: f64, row: &[f64]) {
    debug_assert_eq!(acc.len(), row.len());
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    unsafe {
        avx::axpy(acc, x, row);
    }
    #[cfg(not(all(target_arch = "x86_64", target_feature = "avx512f")))]
    for (av, rv) in acc.iter_mut().zip(row) {
        *av = x.mul_add(*rv, *av);
    }
}

/// `acc[j] += sum_i x[i] * rows[i * m + j]` with `m = acc.len()`, skipping
/// zero `x[i]`. Per output lane the FMAs run in ascending `i` order, exactly
/// as `for i { axpy(acc, x[i], row_i) }` would.
pub fn gemv_acc(acc: &mut [f64], x: &[f64], rows: &[f64]) {
    let m = acc.len();
    debug_assert_eq!(rows.len(), x.len() * m);
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    {
        if m == 8 {
            unsafe { avx::gemv8(acc, x, rows) };
            return;
        }
        if m == 64 {
            unsafe { avx::gemv64(acc, x, rows) };
            return;
        }
    }
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        axpy(acc, xv, &rows[i * m..(i + 1) * m]);
    }
}

/// `acc_rows[i * m + j] += x[i] * urow[j]` with `m = urow.len()`, skipping
/// zero `x[i]`. Bit-equal to `for i { axpy(row_i, x[i], urow) }`.
pub fn ger_acc(acc_rows: &mut [f64], x: &[f64], urow: &[f64]) {
    let m = urow.len();
    debug_assert_eq!(acc_rows.len(), x.len() * m);
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    {
        if m == 8 {
            unsafe { avx::ger8(acc_rows, x, urow) };
            return;
        }
    }
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        axpy(&mut acc_rows[i * m..(i + 1) * m], xv, urow);
    }
}

/// Dot product in a fixed lane-parallel order. Deterministic, but the
/// summation order differs from a serial loop; callers must not rely on
/// bit-equality with serial accumulation.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
    let sum = unsafe { avx::dot(a, b) };
    #[cfg(not(all(target_arch = "x86_64", target_feature = "avx512f")))]
    let sum = {
        let mut s = 0.0f64;
        for (av, bv) in a.iter().zip(b) {
            s = av.mul_add(*bv, s);
        }
        s
    };
    sum
}
