//! Two-class discrete-time multiserver queue seen by a D2D group.
//!
//! The heaviest-loaded BS inside the group's sensing region generates
//! high-priority traffic (`lambda_H = N_K lambda_u`); the group's own users
//! generate low-priority traffic (`lambda_L = N_gu lambda_u`). Each slot the
//! `c` channels go to high-priority requests first.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{
    d2d_group_user_intensity, ssr_count_intensity, subset_split, users_per_bs_pmf, Tier,
};
use crate::model::{validated, ScenarioConfig};
use crate::mqueue::{
    char_roots_inside, finish_roots, invert, kth_roots, mix_components, BranchEquation,
    ComplexRootSet, MixturePmf, Pgf, RootFamily, Weighting,
};
use crate::numeric::{cexpm1, char_fn_shifted};
use crate::pmf::DiscretePmf;

/// Poisson tail below which the outer sum of the heaviest-load CDF stops.
const OUTER_TAIL: f64 = 1e-9;
/// Mass dropped from each marginal of the D2D mixtures.
pub const MARGINAL_TAIL: f64 = 1e-6;

/// Arrival rates of the two classes at one D2D group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityLoad {
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub lambda_total: f64,
    pub servers: usize,
}

impl PriorityLoad {
    pub fn new(lambda_high: f64, lambda_low: f64, servers: usize) -> Result<Self> {
        if !(lambda_high >= 0.0 && lambda_low >= 0.0) {
            return Err(Error::Domain(format!(
                "arrival rates must be non-negative (high {lambda_high}, low {lambda_low})"
            )));
        }
        if servers == 0 {
            return Err(Error::Domain("at least one server is required".into()));
        }
        Ok(PriorityLoad {
            lambda_high,
            lambda_low,
            lambda_total: lambda_high + lambda_low,
            servers,
        })
    }

    /// Loads for `n_k` users at the heaviest BS and `n_gu` group users.
    pub fn from_counts(n_k: usize, n_gu: usize, cfg: &ScenarioConfig) -> Result<Self> {
        Self::new(
            n_k as f64 * cfg.request_rate,
            n_gu as f64 * cfg.request_rate,
            cfg.num_channels,
        )
    }

    pub fn is_stable(&self) -> bool {
        self.lambda_total < self.servers as f64
    }

    fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable {
                load: self.lambda_total,
                servers: self.servers,
            })
        }
    }
}

/// Law of `N_K`, the user count of the busiest BS in a sensing region.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeavyLoadDist {
    pub pmf: DiscretePmf,
    /// Terms kept in the outer sum over the number of BSs.
    pub outer_terms: usize,
}

struct HeavyLoadParts {
    bs_in_ssr: f64,
    lambda_u2: f64,
    lambda_bs: f64,
}

impl HeavyLoadParts {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let cfg = validated(cfg)?;
        Ok(HeavyLoadParts {
            bs_in_ssr: ssr_count_intensity(Tier::Bs, &cfg),
            lambda_u2: subset_split(&cfg)?.p_bs * cfg.lambda_user,
            lambda_bs: cfg.lambda_bs,
        })
    }

    /// `sum_n P(N_g2 = n) F^n` and the number of terms used.
    fn outer(&self, f: f64) -> (f64, usize) {
        if self.bs_in_ssr <= 0.0 {
            return (1.0, 1);
        }
        let poisson = Poisson::new(self.bs_in_ssr).expect("positive intensity");
        let mut total = 0.0;
        let mut n = 0u64;
        loop {
            total += poisson.pmf(n) * f.powi(n as i32);
            if poisson.sf(n) < OUTER_TAIL {
                return (total, n as usize + 1);
            }
            n += 1;
        }
    }
}

/// `P(N_K <= k)`. With no BS in the sensing region the maximum is taken
/// as zero.
pub fn heavy_load_cdf(k: usize, cfg: &ScenarioConfig) -> Result<f64> {
    let parts = HeavyLoadParts::new(cfg)?;
    let f: f64 = (0..=k)
        .map(|i| users_per_bs_pmf(i, parts.lambda_u2, parts.lambda_bs))
        .sum();
    Ok(parts.outer(f.min(1.0)).0)
}

/// PMF of `N_K`, truncated once the remaining mass is below `eps`.
pub fn heavy_load_dist(cfg: &ScenarioConfig, eps: f64) -> Result<HeavyLoadDist> {
    let parts = HeavyLoadParts::new(cfg)?;
    let mut mass = Vec::new();
    let mut f = 0.0;
    let mut prev = 0.0;
    let mut terms = 0;
    for k in 0.. {
        f = (f + users_per_bs_pmf(k, parts.lambda_u2, parts.lambda_bs)).min(1.0);
        let (cdf, used) = parts.outer(f);
        terms = terms.max(used);
        mass.push((cdf - prev).max(0.0));
        prev = cdf;
        if 1.0 - cdf < eps {
            break;
        }
        if k > 10_000_000 {
            return Err(Error::Domain("heaviest-load law does not converge".into()));
        }
    }
    let total: f64 = mass.iter().sum();
    Ok(HeavyLoadDist {
        pmf: DiscretePmf::new(mass, (1.0 - total).max(0.0))?,
        outer_terms: terms,
    })
}

fn mixed_equation(z: Complex64, load: &PriorityLoad) -> BranchEquation {
    let shift = (z - 1.0) * load.lambda_low;
    BranchEquation {
        servers: load.servers,
        rate: load.lambda_high,
        target: shift.exp(),
        target_root: (shift / load.servers as f64).exp(),
    }
}

fn omega_equation(z: Complex64, lambda_high: f64, servers: usize) -> BranchEquation {
    BranchEquation {
        servers,
        rate: lambda_high,
        target: z,
        target_root: z.powf(1.0 / servers as f64),
    }
}

fn solve_all(eq: &BranchEquation, previous: Option<&[Complex64]>) -> Result<Vec<Complex64>> {
    (0..eq.servers)
        .map(|k| match previous {
            Some(prev) => eq.track(k, prev[k]),
            None => eq.solve(k, eq.twiddle(k) * eq.target_root),
        })
        .collect()
}

fn check_z(z: Complex64) -> Result<()> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!(
            "|z| = {} lies outside the unit disk",
            z.norm()
        )));
    }
    Ok(())
}

/// The `c` roots `x_i(z)` of `x^c = exp(lambda_H (x - 1) + lambda_L (z - 1))`
/// in the unit disk, ordered by branch; `x_0(1) = 1`.
pub fn x_roots(z: Complex64, load: &PriorityLoad) -> Result<ComplexRootSet> {
    check_z(z)?;
    if load.lambda_high >= load.servers as f64 {
        return Err(Error::Unstable {
            load: load.lambda_high,
            servers: load.servers,
        });
    }
    let eq = mixed_equation(z, load);
    finish_roots(solve_all(&eq, None)?, mixed_family(z, load), &eq)
}

fn mixed_family(z: Complex64, load: &PriorityLoad) -> RootFamily {
    RootFamily::Mixed {
        z,
        high: load.lambda_high,
        low: load.lambda_low,
        servers: load.servers,
    }
}

/// The `c` roots `w_i(z)` of `w^c = z exp(lambda_H (w - 1))` in the unit
/// disk, ordered by branch of `z^(1/c)`.
pub fn omega_roots(z: Complex64, lambda_high: f64, servers: usize) -> Result<ComplexRootSet> {
    check_z(z)?;
    if z.norm() == 0.0 {
        return Err(Error::Domain("omega roots need z != 0".into()));
    }
    if lambda_high == 0.0 {
        return kth_roots(z, servers);
    }
    if lambda_high >= servers as f64 {
        return Err(Error::Unstable {
            load: lambda_high,
            servers,
        });
    }
    let eq = omega_equation(z, lambda_high, servers);
    finish_roots(
        solve_all(&eq, None)?,
        RootFamily::Omega {
            z,
            high: lambda_high,
            servers,
        },
        &eq,
    )
}

fn near_one(z: Complex64) -> bool {
    (z - 1.0).norm() < 1e-13
}

/// Low-priority queue-length PGF of a D2D group.
#[derive(Clone, Debug)]
pub struct D2dQueuePgf {
    load: PriorityLoad,
    alphas: Arc<ComplexRootSet>,
}

impl D2dQueuePgf {
    pub fn new(load: PriorityLoad) -> Result<Self> {
        load.require_stable()?;
        let alphas = Arc::new(char_roots_inside(load.lambda_total, load.servers)?);
        Ok(D2dQueuePgf { load, alphas })
    }

    fn with_alphas(load: PriorityLoad, alphas: Arc<ComplexRootSet>) -> Self {
        D2dQueuePgf { load, alphas }
    }

    pub fn mean(&self) -> Result<f64> {
        crate::mqueue::pgf_mean(self)
    }

    fn value(&self, z: Complex64, xs: &[Complex64]) -> Complex64 {
        let l = &self.load;
        let w = z - 1.0;
        let c = l.servers as f64;
        // e^{lL w} (c - lT) w / (1 - e^{lL w})
        let lead = (w * l.lambda_low).exp() * (c - l.lambda_total) * w / -cexpm1(w * l.lambda_low);
        let ratio = xs
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, x| acc * (1.0 - x) / (z - x));
        lead * ratio * self.alphas.normalized_product(z)
    }

    fn trivial(&self, z: Complex64) -> Option<Complex64> {
        (self.load.lambda_low == 0.0 || near_one(z)).then_some(Complex64::new(1.0, 0.0))
    }
}

impl Pgf for D2dQueuePgf {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        if let Some(v) = self.trivial(z) {
            return Ok(v);
        }
        let xs = x_roots(z, &self.load)?;
        Ok(self.value(z, xs.roots()))
    }

    fn eval_many(&self, zs: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut prev: Option<Vec<Complex64>> = None;
        let mut out = Vec::with_capacity(zs.len());
        for &z in zs {
            if let Some(v) = self.trivial(z) {
                out.push(v);
                continue;
            }
            check_z(z)?;
            let eq = mixed_equation(z, &self.load);
            let xs = finish_roots(
                solve_all(&eq, prev.as_deref())?,
                mixed_family(z, &self.load),
                &eq,
            )?;
            out.push(self.value(z, xs.roots()));
            prev = Some(xs.roots().to_vec());
        }
        Ok(out)
    }

    fn label(&self) -> String {
        format!(
            "d2d queue length | high {}, low {}, {} servers",
            self.load.lambda_high, self.load.lambda_low, self.load.servers
        )
    }
}

/// Low-priority delay PGF of a D2D group.
#[derive(Clone, Debug)]
pub struct D2dDelayPgf {
    queue: D2dQueuePgf,
}

impl D2dDelayPgf {
    pub fn new(load: PriorityLoad) -> Result<Self> {
        Ok(D2dDelayPgf {
            queue: D2dQueuePgf::new(load)?,
        })
    }

    fn with_alphas(load: PriorityLoad, alphas: Arc<ComplexRootSet>) -> Self {
        D2dDelayPgf {
            queue: D2dQueuePgf::with_alphas(load, alphas),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        crate::mqueue::pgf_mean(self)
    }

    /// `Q_T` at `1 + u`.
    fn q_t(&self, u: Complex64) -> Complex64 {
        let l = &self.queue.load;
        let c = l.servers as f64;
        let num = (cexpm1(u * l.lambda_total) - cexpm1(u * l.lambda_high)) * (c - l.lambda_total);
        let den = char_fn_shifted(u, l.servers, l.lambda_total) * l.lambda_low;
        num / den * self.queue.alphas.normalized_product(u + 1.0)
    }

    fn value(&self, z: Complex64, omegas: &[Complex64]) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (i, wi) in omegas.iter().enumerate() {
            let mut r = z;
            for (j, wj) in omegas.iter().enumerate() {
                if j != i {
                    r *= (1.0 - wj) / (wi - wj);
                }
            }
            total += r * self.q_t(wi - 1.0);
        }
        total
    }

    fn trivial(&self, z: Complex64) -> Option<Complex64> {
        if self.queue.load.lambda_low == 0.0 {
            Some(z)
        } else if near_one(z) {
            Some(Complex64::new(1.0, 0.0))
        } else {
            None
        }
    }
}

impl Pgf for D2dDelayPgf {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        if let Some(v) = self.trivial(z) {
            return Ok(v);
        }
        let l = &self.queue.load;
        let omegas = omega_roots(z, l.lambda_high, l.servers)?;
        Ok(self.value(z, omegas.roots()))
    }

    fn eval_many(&self, zs: &[Complex64]) -> Result<Vec<Complex64>> {
        let l = self.queue.load;
        if l.lambda_high == 0.0 {
            return zs.iter().map(|&z| self.eval(z)).collect();
        }
        let mut prev: Option<Vec<Complex64>> = None;
        let mut out = Vec::with_capacity(zs.len());
        for &z in zs {
            if let Some(v) = self.trivial(z) {
                out.push(v);
                continue;
            }
            check_z(z)?;
            if z.norm() == 0.0 {
                return Err(Error::Domain("omega roots need z != 0".into()));
            }
            let eq = omega_equation(z, l.lambda_high, l.servers);
            let family = RootFamily::Omega {
                z,
                high: l.lambda_high,
                servers: l.servers,
            };
            let omegas = finish_roots(solve_all(&eq, prev.as_deref())?, family, &eq)?;
            out.push(self.value(z, omegas.roots()));
            prev = Some(omegas.roots().to_vec());
        }
        Ok(out)
    }

    fn label(&self) -> String {
        let l = &self.queue.load;
        format!(
            "d2d delay | high {}, low {}, {} servers",
            l.lambda_high, l.lambda_low, l.servers
        )
    }
}

/// Delay PGFs sharing one high-priority load, mixed before inversion so the
/// omega roots are solved once per point.
struct D2dDelayMixture {
    lambda_high: f64,
    servers: usize,
    parts: Vec<(f64, D2dDelayPgf)>,
}

impl D2dDelayMixture {
    fn value(&self, z: Complex64, omegas: &[Complex64]) -> Complex64 {
        self.parts
            .iter()
            .map(|(w, pgf)| *w * pgf.trivial(z).unwrap_or_else(|| pgf.value(z, omegas)))
            .sum()
    }
}

impl Pgf for D2dDelayMixture {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.eval_many(&[z]).map(|v| v[0])
    }

    fn eval_many(&self, zs: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut prev: Option<Vec<Complex64>> = None;
        let mut out = Vec::with_capacity(zs.len());
        for &z in zs {
            if near_one(z) {
                out.push(Complex64::new(1.0, 0.0));
                continue;
            }
            let omegas = if self.lambda_high == 0.0 || prev.is_none() {
                omega_roots(z, self.lambda_high, self.servers)?
            } else {
                check_z(z)?;
                let eq = omega_equation(z, self.lambda_high, self.servers);
                let family = RootFamily::Omega {
                    z,
                    high: self.lambda_high,
                    servers: self.servers,
                };
                finish_roots(solve_all(&eq, prev.as_deref())?, family, &eq)?
            };
            out.push(self.value(z, omegas.roots()));
            prev = Some(omegas.roots().to_vec());
        }
        Ok(out)
    }

    fn label(&self) -> String {
        format!(
            "d2d delay mixture | high {}, {} groups, {} servers",
            self.lambda_high,
            self.parts.len(),
            self.servers
        )
    }
}

/// `L_d(z | N_K = n_k, N_gu = n_gu)`.
pub fn d2d_queue_pgf(
    z: Complex64,
    n_k: usize,
    n_gu: usize,
    cfg: &ScenarioConfig,
) -> Result<Complex64> {
    D2dQueuePgf::new(PriorityLoad::from_counts(n_k, n_gu, cfg)?)?.eval(z)
}

/// `D_d(z | N_K = n_k, N_gu = n_gu)`.
pub fn d2d_delay_pgf(
    z: Complex64,
    n_k: usize,
    n_gu: usize,
    cfg: &ScenarioConfig,
) -> Result<Complex64> {
    D2dDelayPgf::new(PriorityLoad::from_counts(n_k, n_gu, cfg)?)?.eval(z)
}

/// Poisson law of the group's user count, truncated at `eps`.
pub fn group_user_dist(cfg: &ScenarioConfig, eps: f64) -> Result<DiscretePmf> {
    let mean = d2d_group_user_intensity(&validated(cfg)?)?;
    if mean <= 0.0 {
        return Ok(DiscretePmf::point_mass(0));
    }
    let law = Poisson::new(mean).map_err(|e| Error::Domain(format!("group users: {e}")))?;
    let mut mass = Vec::new();
    let mut n = 0u64;
    loop {
        mass.push(law.pmf(n));
        let tail = law.sf(n);
        if tail < eps {
            return DiscretePmf::normalized(mass, tail);
        }
        n += 1;
    }
}

/// Probability that a D2D group is in a stable load state; 1 when the
/// class carries no traffic.
pub fn d2d_stable_mass(cfg: &ScenarioConfig) -> Result<f64> {
    let cfg = validated(cfg)?;
    let users = group_user_dist(&cfg, MARGINAL_TAIL)?;
    if users.len() == 1 {
        return Ok(1.0);
    }
    let heavy = heavy_load_dist(&cfg, MARGINAL_TAIL)?.pmf;
    let c = cfg.num_channels as f64;
    let mut mass = 0.0;
    for k in 0..heavy.len() {
        for m in 0..users.len() {
            if ((k + m) as f64) * cfg.request_rate < c {
                mass += heavy.get(k) * users.get(m);
            }
        }
    }
    Ok(mass)
}

fn d2d_mixture(cfg: &ScenarioConfig, delay: bool, weighting: Weighting) -> Result<MixturePmf> {
    let cfg = validated(cfg)?;
    let users = group_user_dist(&cfg, MARGINAL_TAIL)?;
    let conditioning = "steady D2D groups".to_string();
    if users.len() == 1 {
        // No D2D-served users: the class is empty.
        return Ok(MixturePmf {
            pmf: DiscretePmf::point_mass(if delay { 1 } else { 0 }),
            stable_mass: 1.0,
            conditioning,
            weighting,
            degenerate: true,
            transform_size: 0,
            components: 0,
        });
    }
    let heavy = heavy_load_dist(&cfg, MARGINAL_TAIL)?.pmf;
    let c = cfg.num_channels as f64;
    let stable = |k: usize, m: usize| ((k + m) as f64) * cfg.request_rate < c;
    let mut pairs = Vec::new();
    let mut stable_mass = 0.0;
    for k in 0..heavy.len() {
        for m in 0..users.len() {
            if !stable(k, m) {
                continue;
            }
            let p = heavy.get(k) * users.get(m);
            stable_mass += p;
            let w = match weighting {
                Weighting::PerNode => p,
                Weighting::PerRequest => p * m as f64 * cfg.request_rate,
            };
            if w > 0.0 {
                pairs.push((k, m, w));
            }
        }
    }
    // One set of alpha roots per total load.
    let mut totals: Vec<usize> = pairs.iter().map(|&(k, m, _)| k + m).collect();
    totals.sort_unstable();
    totals.dedup();
    let alphas: HashMap<usize, Arc<ComplexRootSet>> = totals
        .par_iter()
        .map(|&n| {
            char_roots_inside(n as f64 * cfg.request_rate, cfg.num_channels)
                .map(|r| (n, Arc::new(r)))
        })
        .collect::<Result<_>>()?;
    let parts = if delay {
        // Group by heaviest load: the omega roots depend on it alone.
        let mut by_high: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for &(k, m, w) in &pairs {
            match by_high.last_mut() {
                Some((kk, v)) if *kk == k => v.push((m, w)),
                _ => by_high.push((k, vec![(m, w)])),
            }
        }
        by_high
            .par_iter()
            .map(|(k, group)| {
                let total: f64 = group.iter().map(|&(_, w)| w).sum();
                let parts = group
                    .iter()
                    .map(|&(m, w)| {
                        let load = PriorityLoad::from_counts(*k, m, &cfg)?;
                        Ok((
                            w / total,
                            D2dDelayPgf::with_alphas(load, alphas[&(k + m)].clone()),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mixture = D2dDelayMixture {
                    lambda_high: *k as f64 * cfg.request_rate,
                    servers: cfg.num_channels,
                    parts,
                };
                let (pmf, size) = invert(&mixture)?;
                Ok((total, pmf, size))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        pairs
            .par_iter()
            .map(|&(k, m, w)| {
                let load = PriorityLoad::from_counts(k, m, &cfg)?;
                let (pmf, size) = if m == 0 {
                    (DiscretePmf::point_mass(0), 0)
                } else {
                    invert(&D2dQueuePgf::with_alphas(load, alphas[&(k + m)].clone()))?
                };
                Ok((w, pmf, size))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let (pmf, transform_size) = mix_components(&parts).map_err(|_| Error::NoSteadyMass("D2D"))?;
    Ok(MixturePmf {
        pmf,
        stable_mass,
        conditioning,
        weighting,
        degenerate: false,
        transform_size,
        components: parts.len(),
    })
}

/// Low-priority queue-length PMF at a steady D2D group, mixed over the
/// heaviest-load and group-user laws.
pub fn d2d_queue_length_pmf(cfg: &ScenarioConfig) -> Result<MixturePmf> {
    d2d_mixture(cfg, false, Weighting::PerNode)
}

/// Low-priority delay PMF seen by a random D2D request at a steady group.
pub fn d2d_delay_pmf(cfg: &ScenarioConfig) -> Result<MixturePmf> {
    d2d_mixture(cfg, true, Weighting::PerRequest)
}

/// [`d2d_delay_pmf`] with explicit mixture weighting.
pub fn d2d_delay_pmf_weighted(cfg: &ScenarioConfig, weighting: Weighting) -> Result<MixturePmf> {
    d2d_mixture(cfg, true, weighting)
}
