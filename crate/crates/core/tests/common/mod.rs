//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use cogd2d::DiscretePmf;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn poisson_draw<R: Rng>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        0
    } else {
        Poisson::new(rate).unwrap().sample(rng) as u64
    }
}

fn bump(hist: &mut Vec<u64>, n: usize) {
    if hist.len() <= n {
        hist.resize(n + 1, 0);
    }
    hist[n] += 1;
}

/// Histograms of queue length (per slot) and delay (per request).
pub struct QueueHistograms {
    pub queue: Vec<u64>,
    pub delay: Vec<u64>,
}

impl QueueHistograms {
    pub fn queue_pmf(&self) -> DiscretePmf {
        DiscretePmf::from_counts(&self.queue).unwrap()
    }

    pub fn delay_pmf(&self) -> DiscretePmf {
        DiscretePmf::from_counts(&self.delay).unwrap()
    }
}

/// Slotted FIFO queue with `servers` servers and Poisson(`load`) batches.
/// Each slot: record the backlog, serve up to `servers` requests, then
/// append the slot's arrivals. Delay is service slot minus arrival slot.
pub fn simulate_multiserver(
    servers: usize,
    load: f64,
    slots: u64,
    warmup: u64,
    seed: u64,
) -> QueueHistograms {
    simulate_priority(servers, 0.0, load, slots, warmup, seed)
}

/// Two-class version: high-priority requests take servers first; the
/// histograms describe the low-priority class only.
pub fn simulate_priority(
    servers: usize,
    high: f64,
    low: f64,
    slots: u64,
    warmup: u64,
    seed: u64,
) -> QueueHistograms {
    let mut rng = rng(seed);
    let mut high_backlog = 0u64;
    let mut queue: VecDeque<u64> = VecDeque::new();
    let mut hist = QueueHistograms {
        queue: Vec::new(),
        delay: Vec::new(),
    };
    for t in 0..slots + warmup {
        let record = t >= warmup;
        if record {
            bump(&mut hist.queue, queue.len());
        }
        let used = high_backlog.min(servers as u64);
        high_backlog -= used;
        let free = servers - used as usize;
        for _ in 0..free {
            match queue.pop_front() {
                Some(arrival) => {
                    if arrival >= warmup {
                        bump(&mut hist.delay, (t - arrival) as usize);
                    }
                }
                None => break,
            }
        }
        high_backlog += poisson_draw(high, &mut rng);
        for _ in 0..poisson_draw(low, &mut rng) {
            queue.push_back(t);
        }
    }
    hist
}

/// Closed-form `P(N_K <= k)` for a Poisson(`mean_bs`) number of BSs:
/// `exp(-mean_bs (1 - F(k)))`.
pub fn heavy_load_closed_form(f_k: f64, mean_bs: f64) -> f64 {
    (-mean_bs * (1.0 - f_k)).exp()
}

pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let ln_choose = statrs::function::factorial::ln_binomial(n, k);
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Toroidal distance on `[0, side)^2`, written independently of the crate.
pub fn torus_dist(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let d = |x: f64, y: f64| {
        let t = (x - y).abs();
        t.min(side - t)
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

/// Squared toroidal distance.
pub fn torus_dist2(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let d = |x: f64, y: f64| {
        let t = (x - y).abs();
        t.min(side - t)
    };
    let (dx, dy) = (d(a[0], b[0]), d(a[1], b[1]));
    dx * dx + dy * dy
}

/// Homogeneous PPP on the square `[0, side)^2`.
pub fn ppp_square<R: Rng>(intensity: f64, side: f64, rng: &mut R) -> Vec<[f64; 2]> {
    let n = poisson_draw(intensity * side * side, rng);
    (0..n)
        .map(|_| [rng.gen::<f64>() * side, rng.gen::<f64>() * side])
        .collect()
}

/// Homogeneous PPP on the disc of radius `radius` centred at the origin.
pub fn ppp_disc<R: Rng>(intensity: f64, radius: f64, rng: &mut R) -> Vec<[f64; 2]> {
    let n = poisson_draw(intensity * std::f64::consts::PI * radius * radius, rng);
    (0..n)
        .map(|_| {
            let r = radius * rng.gen::<f64>().sqrt();
            let th = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            [r * th.cos(), r * th.sin()]
        })
        .collect()
}

/// Brute-force nearest point; `None` for an empty pattern.
pub fn nearest(p: [f64; 2], pts: &[[f64; 2]], side: f64) -> Option<(usize, f64)> {
    pts.iter()
        .enumerate()
        .map(|(i, &q)| (i, torus_dist(p, q, side)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - statrs::function::gamma::ln_gamma(k as f64 + 1.0)).exp()
}
