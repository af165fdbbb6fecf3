//! Small numerical helpers shared by the analytic engines.

use num_complex::Complex64;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `exp(u) - 1` without cancellation for small `|u|`.
pub fn cexpm1(u: Complex64) -> Complex64 {
    let (a, b) = (u.re, u.im);
    let half = (0.5 * b).sin();
    let re = a.exp_m1() * b.cos() - 2.0 * half * half;
    let im = a.exp() * b.sin();
    Complex64::new(re, im)
}

/// `ln(1 + w)` without cancellation for small `|w|`.
pub fn clog1p(w: Complex64) -> Complex64 {
    let modulus_m1 = 2.0 * w.re + w.norm_sqr();
    Complex64::new(0.5 * modulus_m1.ln_1p(), w.im.atan2(1.0 + w.re))
}

/// `z^c - exp(lambda (z - 1))`, accurate near `z = 1`.
pub fn char_fn(z: Complex64, c: usize, lambda: f64) -> Complex64 {
    char_fn_shifted(z - 1.0, c, lambda)
}

/// [`char_fn`] evaluated at `z = 1 + w`.
pub fn char_fn_shifted(w: Complex64, c: usize, lambda: f64) -> Complex64 {
    if w.norm() < 0.25 {
        cexpm1(clog1p(w) * c as f64) - cexpm1(w * lambda)
    } else {
        (w + 1.0).powu(c as u32) - (w * lambda).exp()
    }
}

/// The unit-circle grid `exp(2 pi i w / size)`, `w = 0..size`.
pub fn unit_circle_grid(size: usize) -> Vec<Complex64> {
    (0..size)
        .map(|w| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * w as f64 / size as f64))
        .collect()
}
