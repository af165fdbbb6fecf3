//! One random deployment: BSs, users, caches, tier association and the
//! sensing neighbourhoods of D2D transmitters.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{sample_ppp, PointPattern, SpatialIndex, Window};
use crate::model::{validated, ScenarioConfig, ZipfLaw};

/// Sensing probability below which a link is left out of a neighbour list.
pub const SENSE_CUTOFF: f64 = 1e-12;

/// RNG stream roles within one replication.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Deployment = 0,
    Traffic = 1,
    Fading = 2,
}

/// Independent generator for `(seed, replication, role)`. Every sweep point
/// that shares a seed reuses the same deployment and traffic draws.
pub fn stream_rng(seed: u64, replication: u64, role: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3 * replication + role as u64);
    rng
}

/// Which subset a request falls into, with its serving node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    /// Served from the requester's own cache.
    Local,
    /// Served by the D2D transmitter with this index.
    D2d(usize),
    /// Served by the BS with this index.
    Bs(usize),
}

impl Route {
    /// Subset number 0, 1 or 2.
    pub fn subset(self) -> usize {
        match self {
            Route::Local => 0,
            Route::D2d(_) => 1,
            Route::Bs(_) => 2,
        }
    }
}

/// Tier association of one user from long-term average power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Association {
    pub nearest_bs: usize,
    pub bs_distance: f64,
    /// Nearest D2D transmitter other than the user itself.
    pub nearest_d2d: Option<(usize, f64)>,
    /// The strongest long-term power comes from a D2D transmitter.
    pub prefers_d2d: bool,
}

/// Transmitters a D2D transmitter can sense, with the fade level above
/// which each one blocks it: `h > gamma r^beta / P`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensingNeighbours {
    pub bs: Vec<(usize, f64)>,
    /// `(d2d index, fade level, same group)`.
    pub d2d: Vec<(usize, f64, bool)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRealization {
    pub cfg: ScenarioConfig,
    pub replication: u64,
    pub bs: PointPattern,
    pub users: PointPattern,
    pub cache_enabled: Vec<bool>,
    /// User index of each D2D transmitter.
    pub d2d_users: Vec<usize>,
    pub association: Vec<Association>,
    pub sensing: Vec<SensingNeighbours>,
    pub zipf: ZipfLaw,
}

fn sensing_radius(power: f64, cfg: &ScenarioConfig) -> f64 {
    let level = -SENSE_CUTOFF.ln() / cfg.fading_rate;
    (power * level / cfg.sense_threshold).powf(1.0 / cfg.pathloss)
}

/// Samples replication 0 of `seed`.
pub fn build_realization(cfg: &ScenarioConfig, seed: u64) -> Result<NetworkRealization> {
    build_replication(cfg, seed, 0)
}

/// Samples the deployment for one replication. User positions and the
/// uniform marks that decide caching do not depend on `alpha`, so sweeps
/// over `alpha` thin one common user pattern.
pub fn build_replication(
    cfg: &ScenarioConfig,
    seed: u64,
    replication: u64,
) -> Result<NetworkRealization> {
    let cfg = validated(cfg)?;
    let window = Window::new(cfg.window_side);
    let mut rng = stream_rng(seed, replication, Stream::Deployment);
    let bs = loop {
        let bs = sample_ppp(cfg.lambda_bs, window, &mut rng);
        if !bs.is_empty() {
            break bs;
        }
        warn!("empty BS pattern in replication {replication}; resampling");
    };
    let users = sample_ppp(cfg.lambda_user, window, &mut rng);
    let cache_enabled: Vec<bool> = (0..users.len())
        .map(|_| rng.gen::<f64>() < cfg.alpha)
        .collect();
    let d2d_users: Vec<usize> = (0..users.len()).filter(|&u| cache_enabled[u]).collect();
    let d2d_points: Vec<[f64; 2]> = d2d_users.iter().map(|&u| users.points[u]).collect();
    let mut d2d_of_user = vec![usize::MAX; users.len()];
    for (i, &u) in d2d_users.iter().enumerate() {
        d2d_of_user[u] = i;
    }

    let bs_index = SpatialIndex::new(&bs.points, window);
    let d2d_index = SpatialIndex::new(&d2d_points, window);
    let beta = cfg.pathloss;
    let association = users
        .points
        .iter()
        .enumerate()
        .map(|(u, &p)| {
            let (nearest_bs, bs_distance) =
                bs_index.nearest(p, None).expect("non-empty BS pattern");
            let own = (d2d_of_user[u] != usize::MAX).then_some(d2d_of_user[u]);
            let nearest_d2d = d2d_index.nearest(p, own);
            let prefers_d2d = nearest_d2d.is_some_and(|(_, r1)| {
                cfg.power_d2d * r1.powf(-beta) > cfg.power_bs * bs_distance.powf(-beta)
            });
            Association {
                nearest_bs,
                bs_distance,
                nearest_d2d,
                prefers_d2d,
            }
        })
        .collect();

    let half = window.side / 2.0;
    let bs_reach = sensing_radius(cfg.power_bs, &cfg);
    let d2d_reach = sensing_radius(cfg.power_d2d, &cfg);
    if bs_reach >= half || d2d_reach >= half {
        warn!("sensing radius exceeds half the window; neighbour lists are clipped");
    }
    let fade_level = |power: f64, r: f64| cfg.sense_threshold * r.powf(beta) / power;
    let sensing = d2d_points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut n = SensingNeighbours::default();
            bs_index.for_each_within(p, bs_reach.min(half), |b, r| {
                n.bs.push((b, fade_level(cfg.power_bs, r)));
            });
            d2d_index.for_each_within(p, d2d_reach.min(half), |j, r| {
                if j != i {
                    let level = fade_level(cfg.power_d2d, r);
                    n.d2d.push((j, level, level < 1.0));
                }
            });
            n
        })
        .collect();

    Ok(NetworkRealization {
        zipf: ZipfLaw::new(cfg.zipf_exponent, cfg.library_size)?,
        cfg,
        replication,
        bs,
        users,
        cache_enabled,
        d2d_users,
        association,
        sensing,
    })
}

impl NetworkRealization {
    pub fn num_bs(&self) -> usize {
        self.bs.len()
    }

    pub fn num_d2d(&self) -> usize {
        self.d2d_users.len()
    }

    /// Request rate each node receives, from the routing probabilities of
    /// its users. Returns `(bs, d2d)`.
    pub fn expected_loads(&self) -> (Vec<f64>, Vec<f64>) {
        let hit = self.zipf.cache_hit(self.cfg.cache_size);
        let rate = self.cfg.request_rate;
        let mut bs = vec![0.0; self.num_bs()];
        let mut d2d = vec![0.0; self.num_d2d()];
        for (u, a) in self.association.iter().enumerate() {
            if self.cache_enabled[u] {
                bs[a.nearest_bs] += rate * (1.0 - hit);
            } else if let (true, Some((j, _))) = (a.prefers_d2d, a.nearest_d2d) {
                d2d[j] += rate * hit;
                bs[a.nearest_bs] += rate * (1.0 - hit);
            } else {
                bs[a.nearest_bs] += rate;
            }
        }
        (bs, d2d)
    }

    /// Nodes with at least one user that can route requests to them.
    pub fn service_nodes(&self) -> (Vec<bool>, Vec<bool>) {
        let (bs, d2d) = self.expected_loads();
        (
            bs.iter().map(|&l| l > 0.0).collect(),
            d2d.iter().map(|&l| l > 0.0).collect(),
        )
    }
}

/// Routes a request by `user` for the content of popularity `rank`
/// (1-based).
pub fn classify_request(user: usize, rank: usize, realization: &NetworkRealization) -> Route {
    let cached = rank <= realization.cfg.cache_size;
    let a = &realization.association[user];
    if realization.cache_enabled[user] {
        if cached {
            return Route::Local;
        }
        return Route::Bs(a.nearest_bs);
    }
    match a.nearest_d2d {
        Some((j, _)) if a.prefers_d2d && cached => Route::D2d(j),
        _ => Route::Bs(a.nearest_bs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::reference_defaults();
        cfg.window_side = 3000.0;
        cfg
    }

    #[test]
    fn deterministic_per_seed() {
        let a = build_realization(&small_cfg(), 5).unwrap();
        let b = build_realization(&small_cfg(), 5).unwrap();
        assert_eq!(a, b);
        let c = build_realization(&small_cfg(), 6).unwrap();
        assert_ne!(a.users, c.users);
    }

    #[test]
    fn alpha_zero_has_no_d2d() {
        let cfg = small_cfg().baseline();
        let r = build_realization(&cfg, 1).unwrap();
        assert_eq!(r.num_d2d(), 0);
        for u in 0..r.users.len() {
            assert_eq!(
                classify_request(u, 1, &r),
                Route::Bs(r.association[u].nearest_bs)
            );
        }
    }

    #[test]
    fn users_shared_across_alpha() {
        let mut cfg = small_cfg();
        let a = build_realization(&cfg, 3).unwrap();
        cfg.alpha = 0.9;
        let b = build_realization(&cfg, 3).unwrap();
        assert_eq!(a.users, b.users);
        assert_eq!(a.bs, b.bs);
        assert!(a
            .cache_enabled
            .iter()
            .zip(&b.cache_enabled)
            .all(|(x, y)| !x || *y));
    }

    #[test]
    fn routing_rules() {
        let r = build_realization(&small_cfg(), 2).unwrap();
        let m = r.cfg.cache_size;
        let cached = r.cache_enabled.iter().position(|&c| c).unwrap();
        assert_eq!(classify_request(cached, 1, &r), Route::Local);
        assert_eq!(
            classify_request(cached, m + 1, &r),
            Route::Bs(r.association[cached].nearest_bs)
        );
        let d2d_user = (0..r.users.len())
            .find(|&u| !r.cache_enabled[u] && r.association[u].prefers_d2d)
            .unwrap();
        assert!(matches!(classify_request(d2d_user, m, &r), Route::D2d(_)));
        assert_eq!(
            classify_request(d2d_user, m + 1, &r),
            Route::Bs(r.association[d2d_user].nearest_bs)
        );
    }

    #[test]
    fn group_members_are_mutual() {
        let r = build_realization(&small_cfg(), 4).unwrap();
        for (i, n) in r.sensing.iter().enumerate() {
            for &(j, _, group) in &n.d2d {
                let back = r.sensing[j].d2d.iter().find(|e| e.0 == i).unwrap();
                assert_eq!(back.2, group);
            }
        }
    }
}
