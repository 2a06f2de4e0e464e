//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub err: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Quad {
        value: kron * h,
        err: ((kron - gauss) * h).abs(),
    }
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol * |I|)` or `max_intervals` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Quad {
    if a == b {
        return Quad { value: 0.0, err: 0.0 };
    }
    let first = gk15(&mut f, a, b);
    let mut segs: Vec<(f64, f64, Quad)> = vec![(a, b, first)];
    let mut total = first.value;
    let mut err = first.err;
    while err > abs_tol.max(rel_tol * total.abs()) && segs.len() < max_intervals {
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.err.total_cmp(&y.1 .2.err))
            .expect("non-empty");
        let (lo, hi, q) = segs.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let left = gk15(&mut f, lo, mid);
        let right = gk15(&mut f, mid, hi);
        total += left.value + right.value - q.value;
        err += left.err + right.err - q.err;
        segs.push((lo, mid, left));
        segs.push((mid, hi, right));
    }
    // Re-sum to shed drift from the incremental updates.
    let value = segs.iter().map(|s| s.2.value).sum();
    let err = segs.iter().map(|s| s.2.err).sum();
    Quad { value, err }
}

/// Integrates over `[a, ∞)` through `x = a + u / (1 - u)`.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Quad {
    integrate(
        |u| {
            if u >= 1.0 {
                return 0.0;
            }
            let v = 1.0 - u;
            let y = f(a + u / v);
            if y == 0.0 {
                0.0
            } else {
                y / (v * v)
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
        max_intervals,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x| x.powi(10), 0.0, 1.0, 1e-15, 0.0, 1);
        assert!((q.value - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn handles_log_singularity() {
        let q = integrate(|x: f64| -x.ln(), 0.0, 1.0, 1e-12, 1e-12, 500);
        assert!((q.value - 1.0).abs() < 1e-10, "{q:?}");
    }

    #[test]
    fn gaussian_tail_integral() {
        let q = integrate_to_inf(|x: f64| (-x * x).exp(), 0.0, 1e-13, 1e-13, 500);
        assert!((q.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-11);
    }
}
