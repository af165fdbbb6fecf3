//! Roots of the characteristic equations `x^c = K exp(a (x - 1))` inside the
//! closed unit disk.
//!
//! Every equation handled here has exactly one root per branch
//! `x = w^k K^(1/c) exp(a (x - 1) / c)`, `w = exp(2 pi i / c)`, and each
//! branch map is a contraction on the disk whenever `a < c`. Roots are found
//! by fixed-point iteration on the branch map, then polished with damped
//! Newton steps.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-10;
const DISTINCT_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-12;
const MAX_ITER: usize = 10_000;

/// Which equation a [`ComplexRootSet`] solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RootFamily {
    /// `z^c = exp(load (z - 1))`, excluding `z = 1`.
    Characteristic { load: f64, servers: usize },
    /// `v^c = z`.
    KthRoots { z: Complex64, servers: usize },
    /// `x^c = exp(high (x - 1) + low (z - 1))`.
    Mixed {
        z: Complex64,
        high: f64,
        low: f64,
        servers: usize,
    },
    /// `w^c = z exp(high (w - 1))`.
    Omega {
        z: Complex64,
        high: f64,
        servers: usize,
    },
}

/// Solutions of one characteristic equation with their worst residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexRootSet {
    roots: Vec<Complex64>,
    family: RootFamily,
    max_residual: f64,
}

impl ComplexRootSet {
    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    pub fn family(&self) -> RootFamily {
        self.family
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.roots.iter().enumerate() {
            for b in &self.roots[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    /// `prod_i (z - r_i) / (1 - r_i)`.
    pub fn normalized_product(&self, z: Complex64) -> Complex64 {
        self.roots
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, r| acc * (z - r) / (1.0 - r))
    }
}

/// `x^c = target * exp(rate (x - 1))` with a chosen analytic c-th root of
/// `target`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BranchEquation {
    pub servers: usize,
    pub rate: f64,
    pub target: Complex64,
    pub target_root: Complex64,
}

impl BranchEquation {
    pub fn twiddle(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * k as f64 / self.servers as f64)
    }

    fn map(&self, k_factor: Complex64, x: Complex64) -> Complex64 {
        k_factor * ((x - 1.0) * (self.rate / self.servers as f64)).exp()
    }

    pub fn residual(&self, x: Complex64) -> f64 {
        (x.powu(self.servers as u32) - self.target * ((x - 1.0) * self.rate).exp()).norm()
    }

    /// Damped Newton on `g(x) = x - w^k r exp(a (x - 1) / c)` from `guess`.
    /// Stops once `|g|` sits at rounding level or stops decreasing.
    fn newton(&self, k_factor: Complex64, mut x: Complex64, budget: usize) -> (Complex64, usize) {
        let slope = self.rate / self.servers as f64;
        let mut used = 0;
        let mut g = x - self.map(k_factor, x);
        while used < budget && g.norm() > 4.0 * f64::EPSILON * x.norm().max(1.0) {
            used += 1;
            let m = x - g;
            let mut step = g / (1.0 - m * slope);
            let mut damping = 0;
            let (cand, gc) = loop {
                let cand = x - step;
                let gc = cand - self.map(k_factor, cand);
                if gc.norm() < g.norm() || damping >= 30 {
                    break (cand, gc);
                }
                step *= 0.5;
                damping += 1;
            };
            if gc.norm() >= g.norm() {
                break;
            }
            x = cand;
            g = gc;
        }
        (x, used)
    }

    /// Root of branch `k` starting from `guess`.
    pub fn solve(&self, k: usize, guess: Complex64) -> Result<Complex64> {
        let k_factor = self.twiddle(k) * self.target_root;
        let mut x = guess;
        let mut iters = 0;
        // Contraction phase: cheap and globally convergent inside the disk.
        while iters < 200 {
            let next = self.map(k_factor, x);
            iters += 1;
            let done = (next - x).norm() < STEP_TOL;
            x = next;
            if done {
                break;
            }
        }
        let (x, used) = self.newton(k_factor, x, MAX_ITER - iters);
        iters += used;
        let res = self.residual(x);
        if res > RESIDUAL_TOL {
            return Err(Error::RootSolver {
                family: format!(
                    "branch {k} of x^{} = K exp({} (x - 1))",
                    self.servers, self.rate
                ),
                detail: format!("residual {res:e} after {iters} iterations at x = {x}"),
            });
        }
        Ok(x)
    }

    /// Root of branch `k` from a nearby previous solution, falling back to
    /// a cold start when Newton wanders off.
    pub fn track(&self, k: usize, previous: Complex64) -> Result<Complex64> {
        let k_factor = self.twiddle(k) * self.target_root;
        let (x, _) = self.newton(k_factor, previous, 8);
        if x.norm() <= 1.0 + 1e-9 && self.residual(x) <= RESIDUAL_TOL && (x - previous).norm() < 0.5
        {
            return Ok(x);
        }
        self.solve(k, k_factor)
    }
}

fn check_distinct(set: &ComplexRootSet) -> Result<()> {
    if set.len() > 1 && set.min_pairwise_distance() <= DISTINCT_TOL {
        return Err(Error::RootSolver {
            family: format!("{:?}", set.family),
            detail: format!(
                "roots not distinct (min distance {:e})",
                set.min_pairwise_distance()
            ),
        });
    }
    Ok(())
}

pub(crate) fn finish(
    roots: Vec<Complex64>,
    family: RootFamily,
    eq: &BranchEquation,
) -> Result<ComplexRootSet> {
    let max_residual = roots.iter().map(|&r| eq.residual(r)).fold(0.0, f64::max);
    let set = ComplexRootSet {
        roots,
        family,
        max_residual,
    };
    check_distinct(&set)?;
    Ok(set)
}

/// The `c - 1` roots of `z^c = exp(load (z - 1))` inside the unit disk other
/// than `z = 1`.
pub fn char_roots_inside(load: f64, servers: usize) -> Result<ComplexRootSet> {
    if servers == 0 {
        return Err(Error::Domain("at least one server is required".into()));
    }
    if !(load >= 0.0) {
        return Err(Error::Domain(format!("negative load {load}")));
    }
    if load >= servers as f64 {
        return Err(Error::Unstable { load, servers });
    }
    let eq = BranchEquation {
        servers,
        rate: load,
        target: Complex64::new(1.0, 0.0),
        target_root: Complex64::new(1.0, 0.0),
    };
    let radius = (load / servers as f64).max(0.5);
    let roots = (1..servers)
        .map(|k| {
            if load == 0.0 {
                Ok(eq.twiddle(k))
            } else {
                eq.solve(k, eq.twiddle(k) * radius)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    finish(roots, RootFamily::Characteristic { load, servers }, &eq)
}

/// The `c` distinct c-th roots of `z`, ordered by branch
/// `k = 0..c`: `|z|^(1/c) exp(i (arg z + 2 pi k) / c)`.
pub fn kth_roots(z: Complex64, servers: usize) -> Result<ComplexRootSet> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::Domain(
            "the c-th roots of zero are degenerate".into(),
        ));
    }
    if servers == 0 {
        return Err(Error::Domain("at least one server is required".into()));
    }
    let c = servers as f64;
    let modulus = z.norm().powf(1.0 / c);
    let arg = z.arg();
    let roots = (0..servers)
        .map(|k| Complex64::from_polar(modulus, (arg + 2.0 * PI * k as f64) / c))
        .collect::<Vec<_>>();
    let max_residual = roots
        .iter()
        .map(|v| (v.powu(servers as u32) - z).norm())
        .fold(0.0, f64::max);
    Ok(ComplexRootSet {
        roots,
        family: RootFamily::KthRoots { z, servers },
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_load_gives_roots_of_unity() {
        let two = char_roots_inside(0.0, 2).unwrap();
        assert!((two.roots()[0] - c(-1.0, 0.0)).norm() < 1e-15);
        let four = char_roots_inside(0.0, 4).unwrap();
        let expect = [c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (r, e) in four.roots().iter().zip(expect) {
            assert!((r - e).norm() < 1e-15);
        }
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn two_servers_real_root_matches_bisection() {
        let oracle = bisect(|x| x * x - (1.5 * (x - 1.0)).exp(), -1.0, 0.0);
        let set = char_roots_inside(1.5, 2).unwrap();
        assert_eq!(set.len(), 1);
        let r = set.roots()[0];
        assert!(r.im.abs() < 1e-14);
        assert!((r.re - oracle).abs() < 1e-12, "{r} vs {oracle}");
    }

    #[test]
    fn unstable_load_rejected() {
        assert!(matches!(
            char_roots_inside(4.0, 4),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn near_critical_load_still_converges() {
        for servers in [1, 2, 4, 10] {
            let load = servers as f64 * 0.999;
            let set = char_roots_inside(load, servers).unwrap();
            assert_eq!(set.len(), servers - 1);
            assert!(set.max_residual() <= 1e-10);
            assert!(set.roots().iter().all(|r| r.norm() < 1.0));
        }
    }

    #[test]
    fn kth_roots_of_one() {
        let set = kth_roots(c(1.0, 0.0), 4).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (r, e) in set.roots().iter().zip(expect) {
            assert!((r - e).norm() < 1e-15);
        }
        assert!(kth_roots(c(0.0, 0.0), 3).is_err());
    }

    #[test]
    fn kth_roots_vieta_product() {
        for servers in 1..8usize {
            let z = c(0.3, -0.8);
            let set = kth_roots(z, servers).unwrap();
            let prod = set.roots().iter().fold(c(1.0, 0.0), |a, r| a * r);
            let sign = if servers % 2 == 0 { -1.0 } else { 1.0 };
            assert!((prod - z * sign).norm() < 1e-12, "{servers}");
            assert!(set.max_residual() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn char_roots_invariants(servers in 1usize..16, frac in 0.001f64..0.995) {
            let load = frac * servers as f64;
            let set = char_roots_inside(load, servers).unwrap();
            proptest::prop_assert_eq!(set.len(), servers - 1);
            proptest::prop_assert!(set.max_residual() <= 1e-10);
            for r in set.roots() {
                proptest::prop_assert!(r.norm() < 1.0);
                proptest::prop_assert!((r - 1.0).norm() > 1e-8);
            }
        }
    }
}
