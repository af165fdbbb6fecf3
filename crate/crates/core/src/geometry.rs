//! Closed-form tier association, cell load and sensing-region results, plus
//! Poisson point process sampling on a toroidal square window.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, NegativeBinomial};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::model::{ScenarioConfig, ZipfLaw};
use crate::pmf::DiscretePmf;

/// Shape of the Gamma law fitted to Poisson-Voronoi cell areas.
pub const CELL_SHAPE_K: f64 = 3.575;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    D2d,
    Bs,
}

impl Tier {
    pub fn other(self) -> Tier {
        match self {
            Tier::D2d => Tier::Bs,
            Tier::Bs => Tier::D2d,
        }
    }
}

/// Intensity and transmit power of the D2D and BS tiers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierParams {
    pub d2d_intensity: f64,
    pub bs_intensity: f64,
    pub d2d_power: f64,
    pub bs_power: f64,
}

impl TierParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        TierParams {
            d2d_intensity: cfg.alpha * cfg.lambda_user,
            bs_intensity: cfg.lambda_bs,
            d2d_power: cfg.power_d2d,
            bs_power: cfg.power_bs,
        }
    }

    pub fn intensity(&self, tier: Tier) -> f64 {
        match tier {
            Tier::D2d => self.d2d_intensity,
            Tier::Bs => self.bs_intensity,
        }
    }

    pub fn power(&self, tier: Tier) -> f64 {
        match tier {
            Tier::D2d => self.d2d_power,
            Tier::Bs => self.bs_power,
        }
    }
}

/// Probability that the strongest long-term average power from `tier`
/// exceeds the strongest from the other tier. An empty tier wins nothing.
pub fn tier_assoc_prob(tier: Tier, tiers: &TierParams, pathloss: f64) -> f64 {
    let own = tiers.intensity(tier);
    if own <= 0.0 {
        return 0.0;
    }
    let delta = 2.0 / pathloss;
    let p_own = tiers.power(tier);
    let denom: f64 = [Tier::D2d, Tier::Bs]
        .iter()
        .map(|&k| tiers.intensity(k) / own * (tiers.power(k) / p_own).powf(delta))
        .sum();
    1.0 / denom
}

/// Fractions of requests served locally, by a D2D transmitter and by a BS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSplit {
    pub p_local: f64,
    pub p_d2d: f64,
    pub p_bs: f64,
}

pub fn subset_split(cfg: &ScenarioConfig) -> Result<SubsetSplit> {
    let hit = ZipfLaw::new(cfg.zipf_exponent, cfg.library_size)?.cache_hit(cfg.cache_size);
    Ok(subset_split_from(cfg.alpha, hit, d2d_assoc_prob(cfg)))
}

/// The split given alpha, the cache-hit probability and `P(T_1 > T_2)`.
pub fn subset_split_from(alpha: f64, hit: f64, d2d_wins: f64) -> SubsetSplit {
    let p_local = alpha * hit;
    let p_d2d = (1.0 - alpha) * hit * d2d_wins;
    let p_bs = (1.0 - hit) + (1.0 - alpha) * hit * (1.0 - d2d_wins);
    SubsetSplit {
        p_local,
        p_d2d,
        p_bs,
    }
}

/// `P(T_1 > T_2)` for the configured network.
pub fn d2d_assoc_prob(cfg: &ScenarioConfig) -> f64 {
    tier_assoc_prob(Tier::D2d, &TierParams::from_config(cfg), cfg.pathloss)
}

/// Gamma density of the area of a BS cell.
pub fn cell_size_pdf(s: f64, lambda_bs: f64) -> Result<f64> {
    if s < 0.0 || s.is_nan() {
        return Err(Error::Domain(format!("negative cell area {s}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let k = CELL_SHAPE_K;
    let rate = lambda_bs * k;
    Ok((k * rate.ln() + (k - 1.0) * s.ln() - rate * s - ln_gamma(k)).exp())
}

/// `P(N_2 = n)`: probability that a BS serves `n` users of intensity
/// `lambda_u2`, from the Gamma cell-area law mixed with a Poisson count.
pub fn users_per_bs_pmf(n: usize, lambda_u2: f64, lambda_bs: f64) -> f64 {
    if lambda_u2 <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let k = CELL_SHAPE_K;
    let kb = k * lambda_bs;
    let n_f = n as f64;
    let log_p = n_f * lambda_u2.ln() + k * kb.ln() - (k + n_f) * (lambda_u2 + kb).ln()
        + ln_gamma(k + n_f)
        - ln_gamma(n_f + 1.0)
        - ln_gamma(k);
    log_p.exp()
}

/// The users-per-BS law truncated once the remaining mass drops below `eps`.
/// The count is negative binomial with shape `K` and success probability
/// `K lambda_bs / (lambda_u2 + K lambda_bs)`; its survival function gives the
/// truncation tail.
pub fn users_per_bs_dist(lambda_u2: f64, lambda_bs: f64, eps: f64) -> Result<DiscretePmf> {
    if lambda_u2 <= 0.0 {
        return Ok(DiscretePmf::point_mass(0));
    }
    let kb = CELL_SHAPE_K * lambda_bs;
    let law = NegativeBinomial::new(CELL_SHAPE_K, kb / (lambda_u2 + kb))
        .map_err(|e| Error::Domain(format!("users-per-BS law: {e}")))?;
    let mut mass = Vec::new();
    let mut n = 0u64;
    loop {
        mass.push(users_per_bs_pmf(n as usize, lambda_u2, lambda_bs));
        let tail = law.sf(n);
        if tail < eps {
            return DiscretePmf::normalized(mass, tail);
        }
        n += 1;
        if n > 10_000_000 {
            return Err(Error::Domain("users-per-BS law does not converge".into()));
        }
    }
}

/// Mean number of tier-`tier` nodes whose faded power at a reference D2D
/// transmitter exceeds the sensing threshold.
pub fn ssr_count_intensity(tier: Tier, cfg: &ScenarioConfig) -> f64 {
    let tiers = TierParams::from_config(cfg);
    ssr_intensity(
        tiers.intensity(tier),
        tiers.power(tier),
        cfg.sense_threshold,
        cfg.fading_rate,
        cfg.pathloss,
    )
}

/// `pi * lambda * (P / (gamma * mu))^(2/beta) * Gamma(1 + 2/beta)`.
pub fn ssr_intensity(
    intensity: f64,
    power: f64,
    threshold: f64,
    fading_rate: f64,
    pathloss: f64,
) -> f64 {
    let delta = 2.0 / pathloss;
    PI * intensity * (power / (threshold * fading_rate)).powf(delta) * gamma(1.0 + delta)
}

/// Mean number of D2D-served users inside a D2D group's sensing region.
pub fn d2d_group_user_intensity(cfg: &ScenarioConfig) -> Result<f64> {
    let split = subset_split(cfg)?;
    Ok(ssr_intensity(
        split.p_d2d * cfg.lambda_user,
        cfg.power_d2d,
        cfg.sense_threshold,
        cfg.fading_rate,
        cfg.pathloss,
    ))
}

/// A square window `[0, side)^2` with wrap-around (toroidal) distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub side: f64,
}

impl Window {
    pub fn new(side: f64) -> Self {
        Window { side }
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    fn wrap(&self, d: f64) -> f64 {
        let d = d.abs() % self.side;
        d.min(self.side - d)
    }

    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.wrap(a[0] - b[0]).hypot(self.wrap(a[1] - b[1]))
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..self.side).contains(&p[0]) && (0.0..self.side).contains(&p[1])
    }
}

/// Sampled node locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub points: Vec<[f64; 2]>,
    pub intensity: f64,
    pub window: Window,
}

impl PointPattern {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `x,y` rows, one point per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p[0], p[1]));
        }
        out
    }
}

/// Homogeneous PPP in the window: a Poisson count with mean
/// `intensity * area` and i.i.d. uniform locations.
pub fn sample_ppp<R: Rng + ?Sized>(intensity: f64, window: Window, rng: &mut R) -> PointPattern {
    let mean = intensity * window.area();
    let count = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let points = (0..count)
        .map(|_| {
            [
                rng.gen::<f64>() * window.side,
                rng.gen::<f64>() * window.side,
            ]
        })
        .collect();
    PointPattern {
        points,
        intensity,
        window,
    }
}

/// Uniform bucket grid over a toroidal window for nearest-neighbour and
/// fixed-radius queries.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    window: Window,
    cells: usize,
    cell_size: f64,
    buckets: Vec<Vec<u32>>,
    points: Vec<[f64; 2]>,
}

impl SpatialIndex {
    pub fn new(points: &[[f64; 2]], window: Window) -> Self {
        let cells = ((points.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 1024);
        let cell_size = window.side / cells as f64;
        let mut buckets = vec![Vec::new(); cells * cells];
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = Self::cell_of(p, cell_size, cells);
            buckets[cy * cells + cx].push(i as u32);
        }
        SpatialIndex {
            window,
            cells,
            cell_size,
            buckets,
            points: points.to_vec(),
        }
    }

    fn cell_of(p: &[f64; 2], cell_size: f64, cells: usize) -> (usize, usize) {
        let cx = ((p[0] / cell_size) as usize).min(cells - 1);
        let cy = ((p[1] / cell_size) as usize).min(cells - 1);
        (cx, cy)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    fn bucket(&self, cx: isize, cy: isize) -> &[u32] {
        let n = self.cells as isize;
        let x = cx.rem_euclid(n) as usize;
        let y = cy.rem_euclid(n) as usize;
        &self.buckets[y * self.cells + x]
    }

    /// Nearest indexed point to `p` under the toroidal metric, skipping
    /// `exclude`.
    pub fn nearest(&self, p: [f64; 2], exclude: Option<usize>) -> Option<(usize, f64)> {
        let (cx, cy) = Self::cell_of(&p, self.cell_size, self.cells);
        let (cx, cy) = (cx as isize, cy as isize);
        let mut best: Option<(usize, f64)> = None;
        let consider = |i: u32, best: &mut Option<(usize, f64)>| {
            let i = i as usize;
            if Some(i) == exclude {
                return;
            }
            let d = self.window.distance(p, self.points[i]);
            if best.is_none_or(|(_, bd)| d < bd) {
                *best = Some((i, d));
            }
        };
        let mut r: isize = 0;
        loop {
            if 2 * r + 1 > self.cells as isize {
                for i in 0..self.points.len() {
                    consider(i as u32, &mut best);
                }
                return best;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    for &i in self.bucket(cx + dx, cy + dy) {
                        consider(i, &mut best);
                    }
                }
            }
            if let Some((_, d)) = best {
                if d <= r as f64 * self.cell_size {
                    return best;
                }
            }
            r += 1;
        }
    }

    /// Calls `f(index, distance)` for every point within `radius` of `p`.
    pub fn for_each_within(&self, p: [f64; 2], radius: f64, mut f: impl FnMut(usize, f64)) {
        let reach = (radius / self.cell_size).ceil() as isize + 1;
        if 2 * reach + 1 >= self.cells as isize {
            for (i, q) in self.points.iter().enumerate() {
                let d = self.window.distance(p, *q);
                if d <= radius {
                    f(i, d);
                }
            }
            return;
        }
        let (cx, cy) = Self::cell_of(&p, self.cell_size, self.cells);
        let (cx, cy) = (cx as isize, cy as isize);
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                for &i in self.bucket(cx + dx, cy + dy) {
                    let d = self.window.distance(p, self.points[i as usize]);
                    if d <= radius {
                        f(i as usize, d);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiers(alpha: f64) -> TierParams {
        let cfg = ScenarioConfig::reference_defaults();
        TierParams::from_config(&ScenarioConfig { alpha, ..cfg })
    }

    #[test]
    fn symmetric_tiers_split_evenly() {
        let t = TierParams {
            d2d_intensity: 1e-5,
            bs_intensity: 1e-5,
            d2d_power: 3.0,
            bs_power: 3.0,
        };
        assert!((tier_assoc_prob(Tier::D2d, &t, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_d2d_tier_wins_nothing() {
        assert_eq!(tier_assoc_prob(Tier::D2d, &tiers(0.0), 4.0), 0.0);
        assert_eq!(tier_assoc_prob(Tier::Bs, &tiers(0.0), 4.0), 1.0);
    }

    #[test]
    fn reference_association_probability() {
        // lambda_1 = 50 lambda_2, P_2 / P_1 = 100, beta = 4: 1 / (1 + 10/50)
        let p = tier_assoc_prob(Tier::D2d, &tiers(0.5), 4.0);
        assert!((p - 1.0 / 1.2).abs() < 1e-12, "{p}");
    }

    #[test]
    fn subset_split_corner_cases() {
        let cfg = ScenarioConfig::reference_defaults();
        let s = subset_split(&cfg.baseline()).unwrap();
        assert_eq!((s.p_local, s.p_d2d, s.p_bs), (0.0, 0.0, 1.0));
        let all = subset_split_from(1.0, 1.0, 0.3);
        assert_eq!((all.p_local, all.p_d2d, all.p_bs), (1.0, 0.0, 0.0));
    }

    #[test]
    fn subset_split_reference_values() {
        let s = subset_split(&ScenarioConfig::reference_defaults()).unwrap();
        assert!((s.p_local - 0.249).abs() < 1e-3);
        assert!((s.p_d2d - 0.2075).abs() < 1e-3);
        assert!((s.p_bs - 0.5435).abs() < 1e-3);
        assert!((s.p_local + s.p_d2d + s.p_bs - 1.0).abs() < 1e-12);
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn cell_size_pdf_normalization_and_mean() {
        let lb = ScenarioConfig::reference_defaults().lambda_bs;
        let upper = 40.0 / lb;
        let mass = simpson(|s| cell_size_pdf(s, lb).unwrap(), 0.0, upper, 200_000);
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
        let mean = simpson(|s| s * cell_size_pdf(s, lb).unwrap(), 0.0, upper, 200_000);
        assert!((mean * lb - 1.0).abs() < 1e-6, "{}", mean * lb);
        assert!(cell_size_pdf(-1.0, lb).is_err());
    }

    #[test]
    fn cell_size_pdf_mode() {
        let lb = 1e-6;
        let mode = (CELL_SHAPE_K - 1.0) / (lb * CELL_SHAPE_K);
        let h = mode * 1e-4;
        let left =
            cell_size_pdf(mode - h, lb).unwrap() - cell_size_pdf(mode - 2.0 * h, lb).unwrap();
        let right =
            cell_size_pdf(mode + 2.0 * h, lb).unwrap() - cell_size_pdf(mode + h, lb).unwrap();
        assert!(left > 0.0 && right < 0.0);
    }

    #[test]
    fn users_per_bs_hand_values() {
        let lb = 2e-6;
        let lu = CELL_SHAPE_K * lb;
        let p0 = users_per_bs_pmf(0, lu, lb);
        assert!((p0 - 2f64.powf(-CELL_SHAPE_K)).abs() < 1e-14);
        assert!((p0 - 0.0839).abs() < 1e-4);
        let lu = 13.0 * lb;
        let closed = (CELL_SHAPE_K * lb / (lu + CELL_SHAPE_K * lb)).powf(CELL_SHAPE_K);
        assert!((users_per_bs_pmf(0, lu, lb) - closed).abs() < 1e-14);
    }

    #[test]
    fn users_per_bs_mean_is_mass_transport() {
        let lb = ScenarioConfig::reference_defaults().lambda_bs;
        for ratio in [0.5, 3.0, 54.35, 100.0] {
            let d = users_per_bs_dist(ratio * lb, lb, 1e-15).unwrap();
            assert!((d.mean() - ratio).abs() < 1e-6, "{ratio}: {}", d.mean());
        }
    }

    #[test]
    fn ssr_intensity_special_values() {
        // beta = 4, P / (gamma mu) = 1e4 -> pi lambda 100 Gamma(1.5)
        let lambda = 3e-6;
        let got = ssr_intensity(lambda, 1e4, 1.0, 1.0, 4.0);
        let expected = PI * lambda * 100.0 * PI.sqrt() / 2.0;
        assert!((got - expected).abs() < 1e-15 * expected.max(1.0));
        assert!(ssr_intensity(lambda, 1.0, 1e300, 1.0, 4.0) < 1e-140);
    }

    #[test]
    fn calibrated_threshold_senses_one_bs() {
        let cfg = ScenarioConfig::reference_defaults();
        assert!((ssr_count_intensity(Tier::Bs, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ppp_edge_cases_and_determinism() {
        let w = Window::new(1000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_ppp(0.0, w, &mut rng).is_empty());
        let a = sample_ppp(1e-4, w, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_ppp(1e-4, w, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| w.contains(*p)));
        assert!(a.to_csv().starts_with("x,y\n"));
    }

    #[test]
    fn ppp_mean_count() {
        let w = Window::new(100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 10_000;
        let total: usize = (0..draws)
            .map(|_| sample_ppp(5e-3, w, &mut rng).len())
            .sum();
        let mean = total as f64 / draws as f64;
        assert!((mean / 50.0 - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn torus_distance_wraps() {
        let w = Window::new(100.0);
        assert!((w.distance([1.0, 1.0], [99.0, 99.0]) - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spatial_index_matches_brute_force() {
        let w = Window::new(500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = sample_ppp(2e-3, w, &mut rng);
        let idx = SpatialIndex::new(&pts.points, w);
        for _ in 0..200 {
            let q = [rng.gen::<f64>() * 500.0, rng.gen::<f64>() * 500.0];
            let brute = pts
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, w.distance(q, *p)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert_eq!(idx.nearest(q, None).unwrap().0, brute.0);
            let mut found = Vec::new();
            idx.for_each_within(q, 40.0, |i, _| found.push(i));
            found.sort_unstable();
            let mut expect: Vec<usize> = (0..pts.len())
                .filter(|&i| w.distance(q, pts.points[i]) <= 40.0)
                .collect();
            expect.sort_unstable();
            assert_eq!(found, expect);
        }
        let first = idx.nearest(pts.points[0], Some(0)).unwrap();
        assert_ne!(first.0, 0);
    }

    proptest::proptest! {
        #[test]
        fn association_probabilities_complement(
            alpha in 0.01f64..1.0,
            ratio in 1.0f64..1e4,
            power_ratio in 0.01f64..1e4,
            beta in 2.0f64..6.0,
        ) {
            let t = TierParams {
                d2d_intensity: alpha * ratio * 1e-6,
                bs_intensity: 1e-6,
                d2d_power: 1.0,
                bs_power: power_ratio,
            };
            let s = tier_assoc_prob(Tier::D2d, &t, beta) + tier_assoc_prob(Tier::Bs, &t, beta);
            proptest::prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn subset_split_sums_and_monotonicity(alpha in 0.0f64..0.99, m in 1usize..198) {
            let mut cfg = ScenarioConfig::reference_defaults();
            cfg.alpha = alpha;
            cfg.cache_size = m;
            let s = subset_split(&cfg).unwrap();
            proptest::prop_assert!((s.p_local + s.p_d2d + s.p_bs - 1.0).abs() < 1e-12);
            for p in [s.p_local, s.p_d2d, s.p_bs] {
                proptest::prop_assert!((0.0..=1.0).contains(&p));
            }
            let mut more_alpha = cfg.clone();
            more_alpha.alpha = alpha + 0.01;
            proptest::prop_assert!(subset_split(&more_alpha).unwrap().p_local >= s.p_local);
            let mut more_cache = cfg.clone();
            more_cache.cache_size = m + 1;
            proptest::prop_assert!(subset_split(&more_cache).unwrap().p_local >= s.p_local);
        }

        #[test]
        fn ssr_intensity_threshold_scaling(gamma_t in 1e-12f64..1e-6, beta in 2.0f64..6.0) {
            let a = ssr_intensity(1e-5, 1.0, gamma_t, 1.0, beta);
            let b = ssr_intensity(1e-5, 1.0, 2.0 * gamma_t, 1.0, beta);
            proptest::prop_assert!((b / a - 2f64.powf(-2.0 / beta)).abs() < 1e-12);
        }
    }
}
