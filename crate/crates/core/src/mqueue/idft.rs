//! PGF evaluators and their numerical inversion on the unit circle.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numeric::unit_circle_grid;
use crate::pmf::DiscretePmf;

/// Default starting transform size for adaptive inversion.
pub const DEFAULT_TRANSFORM: usize = 1 << 12;
const MAX_TRANSFORM: usize = 1 << 20;
const NEGATIVE_CLIP: f64 = 1e-9;
const MAX_TAIL: f64 = 1e-6;

/// A probability generating function that can be evaluated on and inside the
/// unit circle. Implementations hold no interior mutability, so one evaluator
/// can be shared across threads.
pub trait Pgf: Sync {
    fn eval(&self, z: Complex64) -> Result<Complex64>;

    /// Evaluates at a sequence of points. Consecutive points are close on the
    /// unit circle, which lets root-tracking implementations warm-start.
    fn eval_many(&self, zs: &[Complex64]) -> Result<Vec<Complex64>> {
        zs.iter().map(|&z| self.eval(z)).collect()
    }

    fn label(&self) -> String;
}

/// Wraps a closure as a [`Pgf`].
pub struct FnPgf<F> {
    f: F,
    label: String,
}

impl<F> FnPgf<F>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    pub fn new(label: impl Into<String>, f: F) -> Self {
        FnPgf {
            f,
            label: label.into(),
        }
    }
}

impl<F> Pgf for FnPgf<F>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        Ok((self.f)(z))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

fn eval_grid(pgf: &dyn Pgf, size: usize) -> Result<Vec<Complex64>> {
    let grid = unit_circle_grid(size);
    eval_chunked(pgf, &grid)
}

fn eval_chunked(pgf: &dyn Pgf, zs: &[Complex64]) -> Result<Vec<Complex64>> {
    let chunk = (zs.len() / rayon::current_num_threads().max(1)).max(256);
    let parts = zs
        .par_chunks(chunk)
        .map(|c| pgf.eval_many(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Mass beyond index `W - 1`, extrapolated from the decay over the last
/// eighth of the raw inversion.
fn tail_estimate(p: &[f64]) -> f64 {
    let w = p.len();
    let block = (w / 8).max(2);
    let half = block / 2;
    let a: f64 = p[w - block..w - half].iter().map(|x| x.max(0.0)).sum();
    let b: f64 = p[w - half..].iter().map(|x| x.max(0.0)).sum();
    if b <= 1e-300 {
        0.0
    } else if b < a {
        let r = b / a;
        b * r / (1.0 - r)
    } else {
        a + b
    }
}

fn invert_samples(samples: Vec<Complex64>) -> Result<(Vec<f64>, f64)> {
    let size = samples.len();
    let mut buf = samples;
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    let scale = 1.0 / size as f64;
    let raw: Vec<f64> = buf.iter().map(|c| c.re * scale).collect();
    let tail = tail_estimate(&raw);
    let mut mass = Vec::with_capacity(size);
    for (n, &p) in raw.iter().enumerate() {
        if p < -NEGATIVE_CLIP {
            return Err(Error::NegativeMass { index: n, value: p });
        }
        mass.push(p.clamp(0.0, 1.0));
    }
    Ok((mass, tail))
}

fn into_pmf(mass: Vec<f64>, tail: f64) -> Result<DiscretePmf> {
    DiscretePmf::normalized(mass, tail)
}

/// Inverts `pgf` from `size` samples on the unit circle:
/// `P(n) ~ (1/W) sum_w G(e^{2 pi i w/W}) e^{-2 pi i w n/W}`.
pub fn idft_invert(pgf: &dyn Pgf, size: usize) -> Result<DiscretePmf> {
    if size < 256 || !size.is_power_of_two() {
        return Err(Error::Domain(format!(
            "transform size {size} must be a power of two >= 256"
        )));
    }
    let (mass, tail) = invert_samples(eval_grid(pgf, size)?)?;
    if tail > MAX_TAIL {
        return Err(Error::Aliasing {
            size,
            estimate: tail,
        });
    }
    into_pmf(mass, tail)
}

/// Inversion with automatic doubling of the transform size until successive
/// results differ by less than `tol` in sup norm and the tail estimate is
/// below `tol`. Returns the PMF and the final transform size. Samples at
/// size `W` are reused for size `2W`.
pub fn idft_invert_adaptive(pgf: &dyn Pgf, start: usize, tol: f64) -> Result<(DiscretePmf, usize)> {
    let mut size = start.max(256).next_power_of_two();
    let mut samples = eval_grid(pgf, size)?;
    let (mut prev, mut prev_tail) = invert_samples(samples.clone())?;
    loop {
        let next_size = size * 2;
        if next_size > MAX_TRANSFORM {
            return Err(Error::Aliasing {
                size,
                estimate: prev_tail,
            });
        }
        let odd: Vec<Complex64> = (0..size)
            .map(|j| {
                Complex64::from_polar(
                    1.0,
                    2.0 * std::f64::consts::PI * (2 * j + 1) as f64 / next_size as f64,
                )
            })
            .collect();
        let odd_vals = eval_chunked(pgf, &odd)?;
        let mut merged = Vec::with_capacity(next_size);
        for (e, o) in samples.iter().zip(&odd_vals) {
            merged.push(*e);
            merged.push(*o);
        }
        let (mass, tail) = invert_samples(merged.clone())?;
        let diff = mass
            .iter()
            .enumerate()
            .map(|(n, p)| (p - prev.get(n).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        if diff < tol && tail < tol && prev_tail < MAX_TAIL {
            // The smaller transform already agrees; keep the finer one.
            return Ok((into_pmf(mass, tail)?, next_size));
        }
        samples = merged;
        prev = mass;
        prev_tail = tail;
        size = next_size;
    }
}
