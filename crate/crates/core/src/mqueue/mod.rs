//! Discrete-time multiserver queue at a BS: `c` channels, Poisson batch
//! arrivals per slot, FIFO service, no retransmission.
//!
//! Queue length is the number of requests waiting at the start of a slot,
//! including those that arrived during the previous slot. Delay is the
//! service slot minus the arrival slot, so its minimum is one.

mod idft;
mod roots;

pub use idft::{idft_invert, idft_invert_adaptive, FnPgf, Pgf, DEFAULT_TRANSFORM};
pub use roots::{char_roots_inside, kth_roots, ComplexRootSet, RootFamily};
pub(crate) use roots::{finish as finish_roots, BranchEquation};

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{subset_split, users_per_bs_dist};
use crate::model::{validated, ScenarioConfig};
use crate::numeric::{cexpm1, char_fn, char_fn_shifted, clog1p};
use crate::pmf::DiscretePmf;

/// Sup-norm tolerance for adaptive inversion of conditional PMFs.
pub const INVERSION_TOL: f64 = 1e-8;
/// First transform size tried for mixture components; most are short-tailed.
const COMPONENT_TRANSFORM: usize = 256;
/// Node-count mass ignored when truncating a mixture.
pub const MIXTURE_TAIL: f64 = 1e-12;

fn near_one(z: Complex64) -> bool {
    (z - 1.0).norm() < 1e-13
}

/// Queue-length PGF of a BS with offered load `load` requests per slot.
#[derive(Clone, Debug)]
pub struct BsQueuePgf {
    load: f64,
    servers: usize,
    roots: ComplexRootSet,
}

impl BsQueuePgf {
    pub fn new(load: f64, servers: usize) -> Result<Self> {
        let roots = char_roots_inside(load, servers)?;
        Ok(BsQueuePgf {
            load,
            servers,
            roots,
        })
    }

    pub fn roots(&self) -> &ComplexRootSet {
        &self.roots
    }

    /// Mean queue length, from a central difference of the PGF at `z = 1`.
    pub fn mean(&self) -> Result<f64> {
        pgf_mean(self)
    }
}

impl Pgf for BsQueuePgf {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        if self.load == 0.0 || near_one(z) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        let w = z - 1.0;
        let c = self.servers as f64;
        let arrivals = (w * self.load).exp();
        let ratio = arrivals * (c - self.load) * w / char_fn_shifted(w, self.servers, self.load);
        Ok(ratio * self.roots.normalized_product(z))
    }

    fn label(&self) -> String {
        format!(
            "bs queue length | load {}, {} servers",
            self.load, self.servers
        )
    }
}

/// Delay PGF of a BS with offered load `load` requests per slot.
#[derive(Clone, Debug)]
pub struct BsDelayPgf {
    queue: BsQueuePgf,
}

impl BsDelayPgf {
    pub fn new(load: f64, servers: usize) -> Result<Self> {
        Ok(BsDelayPgf {
            queue: BsQueuePgf::new(load, servers)?,
        })
    }

    pub fn mean(&self) -> Result<f64> {
        pgf_mean(self)
    }
}

/// PGF of the number of requests a tagged arrival finds ahead of it at the
/// start of the next slot (residual backlog plus earlier batch members),
/// evaluated at `1 + w`.
fn ahead_pgf(w: Complex64, load: f64, servers: usize, roots: &ComplexRootSet) -> Complex64 {
    let c = servers as f64;
    let num = cexpm1(w * load) * (c - load);
    let den = char_fn_shifted(w, servers, load) * load;
    num / den * roots.normalized_product(w + 1.0)
}

impl Pgf for BsDelayPgf {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        let q = &self.queue;
        if q.load == 0.0 {
            return Ok(z);
        }
        if near_one(z) {
            return Ok(Complex64::new(1.0, 0.0));
        }
        if z.norm() == 0.0 {
            return Err(Error::Domain("delay PGF needs z != 0".into()));
        }
        let c = q.servers as f64;
        let log_z = clog1p(z - 1.0);
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..q.servers {
            // v_k - 1 without cancellation, v_k the k-th c-th root of z.
            let vm1 = cexpm1((log_z + Complex64::new(0.0, 2.0 * PI * k as f64)) / c);
            let v = vm1 + 1.0;
            let spread = (z - 1.0) * v / (vm1 * c);
            total += spread * ahead_pgf(vm1, q.load, q.servers, &q.roots);
        }
        Ok(total)
    }

    fn label(&self) -> String {
        format!(
            "bs delay | load {}, {} servers",
            self.queue.load, self.queue.servers
        )
    }
}

/// First moment of a PGF by a symmetric difference along the real axis just
/// inside the disk (`G'(1) ~ (G(1) - G(1 - h)) / h` with Richardson
/// extrapolation).
pub fn pgf_mean(pgf: &dyn Pgf) -> Result<f64> {
    let d = |h: f64| -> Result<f64> {
        let g = pgf.eval(Complex64::new(1.0 - h, 0.0))?;
        Ok((1.0 - g.re) / h)
    };
    let h = 1e-4;
    Ok(2.0 * d(h / 2.0)? - d(h)?)
}

/// `L_b(z | N_2 = n2)`.
pub fn bs_queue_pgf(z: Complex64, n2: usize, cfg: &ScenarioConfig) -> Result<Complex64> {
    BsQueuePgf::new(n2 as f64 * cfg.request_rate, cfg.num_channels)?.eval(z)
}

/// `D_b(z | N_2 = n2)`.
pub fn bs_delay_pgf(z: Complex64, n2: usize, cfg: &ScenarioConfig) -> Result<Complex64> {
    BsDelayPgf::new(n2 as f64 * cfg.request_rate, cfg.num_channels)?.eval(z)
}

/// A PMF mixed over node loads and conditioned on the stable ones.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixturePmf {
    /// Renormalized over the stable components.
    pub pmf: DiscretePmf,
    /// Probability that a node is in a stable load state.
    pub stable_mass: f64,
    pub conditioning: String,
    pub weighting: Weighting,
    /// True when the node class carries no traffic at all.
    pub degenerate: bool,
    /// Largest transform size used by any component.
    pub transform_size: usize,
    pub components: usize,
}

impl MixturePmf {
    /// Masses scaled back by the stable fraction. For per-node weighting
    /// this is the plain sum over stable load states.
    pub fn raw_mass(&self) -> Vec<f64> {
        self.pmf
            .mass()
            .iter()
            .map(|p| p * self.stable_mass)
            .collect()
    }
}

/// How mixture components are weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// By the probability of the node state: the law seen by a random node.
    PerNode,
    /// By node state times its arrival rate: the law seen by a random request.
    PerRequest,
}

/// Largest per-BS user count that keeps the queue stable:
/// `ceil(c / lambda_u) - 1`.
pub fn max_stable_users(cfg: &ScenarioConfig) -> usize {
    ((cfg.num_channels as f64 / cfg.request_rate).ceil() as usize).saturating_sub(1)
}

/// Probability that a BS is in a stable load state, `P(N_2 lambda_u < c)`.
pub fn bs_stable_mass(cfg: &ScenarioConfig) -> Result<f64> {
    let cfg = validated(cfg)?;
    let lambda_u2 = subset_split(&cfg)?.p_bs * cfg.lambda_user;
    let users = users_per_bs_dist(lambda_u2, cfg.lambda_bs, MIXTURE_TAIL)?;
    let top = max_stable_users(&cfg).min(users.len() - 1);
    Ok((0..=top).map(|n2| users.get(n2)).sum())
}

/// Weighted average of component PMFs with their transform sizes.
pub(crate) fn mix_components(parts: &[(f64, DiscretePmf, usize)]) -> Result<(DiscretePmf, usize)> {
    let total: f64 = parts.iter().map(|(w, _, _)| *w).sum();
    if !(total > 0.0) {
        return Err(Error::Empty("mixture weights"));
    }
    let len = parts.iter().map(|(_, p, _)| p.len()).max().unwrap_or(1);
    let mut mass = vec![0.0; len];
    let mut tail = 0.0;
    let mut size = 0;
    for (w, p, s) in parts {
        let w = w / total;
        for (acc, m) in mass.iter_mut().zip(p.mass()) {
            *acc += w * m;
        }
        tail += w * p.truncation_tail();
        size = size.max(*s);
    }
    Ok((DiscretePmf::normalized(mass, tail)?.trimmed(1e-300), size))
}

pub(crate) fn invert(pgf: &dyn Pgf) -> Result<(DiscretePmf, usize)> {
    let (pmf, size) = idft_invert_adaptive(pgf, COMPONENT_TRANSFORM, INVERSION_TOL)?;
    Ok((pmf.trimmed(1e-18), size))
}

fn bs_mixture(cfg: &ScenarioConfig, delay: bool, weighting: Weighting) -> Result<MixturePmf> {
    let cfg = validated(cfg)?;
    let split = subset_split(&cfg)?;
    let lambda_u2 = split.p_bs * cfg.lambda_user;
    let users = users_per_bs_dist(lambda_u2, cfg.lambda_bs, MIXTURE_TAIL)?;
    let top = max_stable_users(&cfg).min(users.len() - 1);
    let stable_mass: f64 = (0..=top).map(|n2| users.get(n2)).sum();
    let parts = (0..=top)
        .into_par_iter()
        .filter_map(|n2| {
            let mut w = users.get(n2);
            if weighting == Weighting::PerRequest {
                w *= n2 as f64 * cfg.request_rate;
            }
            if w <= 0.0 {
                return None;
            }
            let load = n2 as f64 * cfg.request_rate;
            let result = if delay {
                BsDelayPgf::new(load, cfg.num_channels).and_then(|p| invert(&p))
            } else {
                BsQueuePgf::new(load, cfg.num_channels).and_then(|p| invert(&p))
            };
            Some(result.map(|(pmf, size)| (w, pmf, size)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (pmf, transform_size) = mix_components(&parts).map_err(|_| Error::NoSteadyMass("BS"))?;
    Ok(MixturePmf {
        pmf,
        stable_mass,
        conditioning: "steady BSs".into(),
        weighting,
        degenerate: false,
        transform_size,
        components: parts.len(),
    })
}

/// BS queue-length PMF, mixed over the users-per-BS law and conditioned on
/// steady BSs.
pub fn bs_queue_length_pmf(cfg: &ScenarioConfig) -> Result<MixturePmf> {
    bs_mixture(cfg, false, Weighting::PerNode)
}

/// BS delay PMF, as seen by a random request at a steady BS.
pub fn bs_delay_pmf(cfg: &ScenarioConfig) -> Result<MixturePmf> {
    bs_mixture(cfg, true, Weighting::PerRequest)
}

/// [`bs_delay_pmf`] with explicit mixture weighting.
pub fn bs_delay_pmf_weighted(cfg: &ScenarioConfig, weighting: Weighting) -> Result<MixturePmf> {
    bs_mixture(cfg, true, weighting)
}

/// Residual of `z^c = exp(load (z - 1))`, for diagnostics.
pub fn char_residual(z: Complex64, servers: usize, load: f64) -> f64 {
    char_fn(z, servers, load).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn empty_queue_pgf_is_one() {
        let cfg = ScenarioConfig::reference_defaults();
        for z in [c(0.0), c(0.5), Complex64::new(0.0, 1.0)] {
            assert_eq!(bs_queue_pgf(z, 0, &cfg).unwrap(), c(1.0));
        }
        let d = bs_delay_pgf(c(0.3), 0, &cfg).unwrap();
        assert_eq!(d, c(0.3));
    }

    #[test]
    fn single_server_empty_probability() {
        let pgf = BsQueuePgf::new(0.5, 1).unwrap();
        assert!((pgf.eval(c(0.0)).unwrap() - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn single_server_closed_form_on_grid() {
        // c = 1: (1 - l)(z - 1) e^{l(z-1)} / (z - e^{l(z-1)})
        let load = 0.7;
        let pgf = BsQueuePgf::new(load, 1).unwrap();
        for w in 1..64 {
            let z = Complex64::from_polar(0.999, 2.0 * PI * w as f64 / 64.0);
            let a = ((z - 1.0) * load).exp();
            let closed = a * (1.0 - load) * (z - 1.0) / (z - a);
            assert!((pgf.eval(z).unwrap() - closed).norm() < 1e-10);
        }
    }

    #[test]
    fn unstable_n2_is_an_error() {
        let cfg = ScenarioConfig::reference_defaults();
        let n2 = (cfg.num_channels as f64 / cfg.request_rate).ceil() as usize;
        assert!(matches!(
            bs_queue_pgf(c(0.5), n2, &cfg),
            Err(Error::Unstable { .. })
        ));
        assert!(bs_queue_pgf(c(0.5), n2 - 1, &cfg).is_ok());
    }

    #[test]
    fn pgfs_normalized_on_a_grid() {
        for servers in [1usize, 2, 3, 4, 7, 10] {
            for frac in [0.05, 0.3, 0.7, 0.95, 0.999] {
                let load = frac * servers as f64;
                let q = BsQueuePgf::new(load, servers).unwrap();
                let d = BsDelayPgf::new(load, servers).unwrap();
                let near = Complex64::new(1.0 - 1e-9, 0.0);
                assert!((q.eval(c(1.0)).unwrap() - 1.0).norm() < 1e-8);
                assert!((q.eval(near).unwrap() - 1.0).norm() < 1e-6);
                assert!((d.eval(near).unwrap() - 1.0).norm() < 1e-6);
                for w in 1..32 {
                    let z = Complex64::from_polar(1.0, 2.0 * PI * w as f64 / 32.0);
                    assert!(q.eval(z).unwrap().norm() <= 1.0 + 1e-6);
                    assert!(d.eval(z).unwrap().norm() <= 1.0 + 1e-6);
                }
            }
        }
    }

    #[test]
    fn delay_mean_satisfies_littles_law() {
        // Waiting requests at slot start = load * (mean delay) on average.
        for (servers, load) in [(1usize, 0.6), (3, 2.1), (10, 8.5)] {
            let q = BsQueuePgf::new(load, servers).unwrap().mean().unwrap();
            let d = BsDelayPgf::new(load, servers).unwrap().mean().unwrap();
            assert!(
                (q - load * d).abs() < 1e-4 * q.max(1.0),
                "c={servers}: {q} vs {}",
                load * d
            );
        }
    }

    #[test]
    fn mixture_masses_sum_to_one() {
        let cfg = ScenarioConfig::reference_defaults();
        let q = bs_queue_length_pmf(&cfg).unwrap();
        let total: f64 = q.pmf.mass().iter().sum::<f64>() + q.pmf.truncation_tail();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(q.pmf.truncation_tail() <= 1e-6);
        assert!(q.stable_mass > 0.9 && q.stable_mass <= 1.0);
        let raw: f64 = q.raw_mass().iter().sum::<f64>() + q.pmf.truncation_tail() * q.stable_mass;
        assert!((raw - q.stable_mass).abs() < 1e-9);
    }

    #[test]
    fn vanishing_load_gives_empty_queues() {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.request_rate = 1e-7;
        let q = bs_queue_length_pmf(&cfg).unwrap();
        assert!(q.pmf.get(0) > 1.0 - 1e-4);
        let d = bs_delay_pmf(&cfg).unwrap();
        assert!(d.pmf.get(1) > 1.0 - 1e-4);
    }
}
