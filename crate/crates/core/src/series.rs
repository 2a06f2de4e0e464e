//! Truncated power series: products, reciprocals and small matrix inverses.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const DIRECT_CUTOFF: usize = 64;

/// `(a * b) mod s^len`.
pub fn mul(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let la = a.len().min(len);
    let lb = b.len().min(len);
    if la == 0 || lb == 0 {
        return vec![0.0; len];
    }
    if la.min(lb) <= DIRECT_CUTOFF {
        let mut out = vec![0.0; len];
        for (i, &x) in a[..la].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let top = (len - i).min(lb);
            for (o, &y) in out[i..i + top].iter_mut().zip(&b[..top]) {
                *o += x * y;
            }
        }
        return out;
    }
    let size = (la + lb - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex<f64>> = a[..la].iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b[..lb].iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    let mut out: Vec<f64> = fa.iter().take(len).map(|c| c.re * scale).collect();
    out.resize(len, 0.0);
    out
}

/// `1 / f mod s^len`; requires `f[0] != 0`.
pub fn inverse(f: &[f64], len: usize) -> Vec<f64> {
    assert!(!f.is_empty() && f[0] != 0.0, "series not invertible");
    if len <= 4 * DIRECT_CUTOFF {
        // Forward substitution, exact up to rounding.
        let mut g = vec![0.0; len];
        g[0] = 1.0 / f[0];
        for n in 1..len {
            let mut s = 0.0;
            for k in 1..=n.min(f.len() - 1) {
                s += f[k] * g[n - k];
            }
            g[n] = -s * g[0];
        }
        return g;
    }
    let mut g = inverse(f, 4 * DIRECT_CUTOFF);
    let mut m = g.len();
    while m < len {
        let m2 = (2 * m).min(len);
        let fg = mul(f, &g, m2);
        let mut e: Vec<f64> = fg.iter().map(|v| -v).collect();
        e[0] += 1.0;
        // g <- g + g * (1 - f g)
        let corr = mul(&g, &e, m2);
        g.resize(m2, 0.0);
        for (gi, ci) in g.iter_mut().zip(&corr) {
            *gi += ci;
        }
        m = m2;
    }
    g
}

/// Square matrix of truncated series, row-major.
pub type SeriesMatrix = Vec<Vec<Vec<f64>>>;

pub fn mat_mul(a: &SeriesMatrix, b: &SeriesMatrix, len: usize) -> SeriesMatrix {
    let k = a.len();
    let mut out = vec![vec![vec![0.0; len]; k]; k];
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let p = mul(&a[i][l], &b[l][j], len);
                for (o, v) in out[i][j].iter_mut().zip(&p) {
                    *o += v;
                }
            }
        }
    }
    out
}

/// Inverse of a matrix series whose constant term is the identity.
pub fn mat_inverse_unit(m: &SeriesMatrix, len: usize) -> SeriesMatrix {
    let k = m.len();
    for (i, row) in m.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((s[0] - want).abs() < 1e-15, "constant term must be I");
        }
    }
    let mut x: SeriesMatrix = (0..k)
        .map(|i| (0..k).map(|j| vec![if i == j { 1.0 } else { 0.0 }]).collect())
        .collect();
    let mut cur = 1;
    while cur < len {
        let next = (2 * cur).min(len);
        let mx = mat_mul(m, &x, next);
        let mut e = mx;
        for (i, row) in e.iter_mut().enumerate() {
            for (j, s) in row.iter_mut().enumerate() {
                for v in s.iter_mut() {
                    *v = -*v;
                }
                if i == j {
                    s[0] += 1.0;
                }
            }
        }
        let corr = mat_mul(&x, &e, next);
        for i in 0..k {
            for j in 0..k {
                x[i][j].resize(next, 0.0);
                for (xv, cv) in x[i][j].iter_mut().zip(&corr[i][j]) {
                    *xv += cv;
                }
            }
        }
        cur = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_product_matches_direct() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let b: Vec<f64> = (0..200).map(|i| ((i * 104_729) % 17) as f64 / 17.0).collect();
        let fast = mul(&a, &b, 400);
        let mut slow = vec![0.0; 400];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                if i + j < 400 {
                    slow[i + j] += x * y;
                }
            }
        }
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_of_geometric() {
        // 1/(1 - s/2) = sum (1/2)^k
        for len in [10usize, 1000, 5000] {
            let g = inverse(&[1.0, -0.5], len);
            for (k, v) in g.iter().enumerate().take(60) {
                assert!((v - 0.5f64.powi(k as i32)).abs() < 1e-13, "len {len} k {k}");
            }
        }
    }

    #[test]
    fn matrix_inverse_roundtrip() {
        let len = 700;
        let s = |c: f64| -> Vec<f64> { (0..len).map(|k| if k == 0 { 0.0 } else { c / (k * k) as f64 }).collect() };
        let mut m: SeriesMatrix = vec![vec![s(0.3), s(0.2)], vec![s(0.1), s(0.4)]];
        m[0][0][0] = 1.0;
        m[1][1][0] = 1.0;
        let x = mat_inverse_unit(&m, len);
        let id = mat_mul(&m, &x, len);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..len {
                    let want = if i == j && k == 0 { 1.0 } else { 0.0 };
                    assert!((id[i][j][k] - want).abs() < 1e-12);
                }
            }
        }
    }
}
