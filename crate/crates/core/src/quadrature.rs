//! Adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

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

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel` (or absolute `abs`).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64, abs: f64) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut stack = vec![(lo, hi, gk15(&f, lo, hi))];
    let mut total = stack[0].2 .0;
    let mut err = stack[0].2 .1;
    let mut evals = 15;
    let mut done_value = 0.0;
    let mut done_err = 0.0;
    const MAX_INTERVALS: usize = 20_000;
    let mut intervals = 1;
    while err > abs.max(rel * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        if intervals >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a}, {b}]: estimate {total}, error {err:.3e}"
            )));
        }
        // Bisect the interval with the largest error estimate.
        let (idx, _) = stack
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("nonempty");
        let (l, r, (v, e)) = stack.swap_remove(idx);
        let m = 0.5 * (l + r);
        if !(m > l && m < r) {
            done_value += v;
            done_err += e;
            total = done_value + stack.iter().map(|s| s.2 .0).sum::<f64>();
            err = done_err + stack.iter().map(|s| s.2 .1).sum::<f64>();
            if stack.is_empty() {
                break;
            }
            continue;
        }
        let left = gk15(&f, l, m);
        let right = gk15(&f, m, r);
        evals += 30;
        intervals += 1;
        stack.push((l, m, left));
        stack.push((m, r, right));
        total = done_value + stack.iter().map(|s| s.2 .0).sum::<f64>();
        err = done_err + stack.iter().map(|s| s.2 .1).sum::<f64>();
    }
    if !total.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(Quad { value: sign * total, error: err, evaluations: evals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((q.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_limits() {
        let q = integrate(f64::exp, 1.0, 0.0, 1e-12, 0.0).unwrap();
        assert!((q.value + (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^(-1/2) = 2
        let q = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn divergent_reports_failure_or_large() {
        let r = integrate(|x| 1.0 / (x * x), 0.0, 1.0, 1e-10, 0.0);
        assert!(r.is_err() || r.unwrap().value > 1e10);
    }
}
