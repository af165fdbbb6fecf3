//! The slot loop.
//!
//! Each slot: record every queue's length, let BSs serve up to `c` head
//! requests on channels `1..=m`, let D2D transmitters with backlog grab
//! the channels they do not sense as busy, then append the slot's new
//! requests. A request arriving in slot `t` and served in slot `s` has
//! delay `s - t >= 1`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use super::metrics::{ClassMetrics, MetricsReport, NodeClass, NodeSummary};
use super::realization::{classify_request, stream_rng, NetworkRealization, Route, Stream};
use super::steady::{Steadiness, TrendAccumulator};
use crate::error::{Error, Result};

/// Run length and bookkeeping options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub slots: u64,
    pub replications: usize,
    /// Leading fraction of slots excluded from all statistics.
    pub warmup_fraction: f64,
    /// Keep a log of every service event and D2D transmission.
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            slots: 10_000,
            replications: 30,
            warmup_fraction: 0.2,
            trace: false,
        }
    }
}

impl SimOptions {
    pub fn warmup(&self) -> u64 {
        (self.slots as f64 * self.warmup_fraction).floor() as u64
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.warmup_fraction) || self.slots < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 slots and a warmup fraction in [0, 0.5), got {} and {}",
                self.slots, self.warmup_fraction
            )));
        }
        if self.replications == 0 {
            return Err(Error::Domain("at least one replication is required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub arrival: u64,
    pub user: u32,
    pub content: u32,
}

/// One served request.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub slot: u64,
    pub class: NodeClass,
    pub node: usize,
    pub channel: usize,
    pub arrival: u64,
}

/// One D2D transmission with the sensed power of every BS active on the
/// same channel within sensing reach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D2dTransmission {
    pub slot: u64,
    pub d2d: usize,
    /// 1-based channel number.
    pub channel: usize,
    pub bs_powers: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub services: Vec<ServiceRecord>,
    pub d2d: Vec<D2dTransmission>,
}

#[derive(Clone, Debug, Default)]
struct NodeState {
    queue: VecDeque<QueueEntry>,
    trend: TrendAccumulator,
    queue_hist: Vec<u64>,
    delay_hist: Vec<u64>,
    arrivals: u64,
}

fn bump(hist: &mut Vec<u64>, n: usize) {
    if hist.len() <= n {
        hist.resize(n + 1, 0);
    }
    hist[n] += 1;
}

impl NodeState {
    fn record(&mut self, t: u64) {
        let len = self.queue.len();
        self.trend.push(t, len as u64);
        bump(&mut self.queue_hist, len);
    }

    fn serve_one(&mut self, t: u64, warmup: u64) -> Option<QueueEntry> {
        let e = self.queue.pop_front()?;
        if e.arrival >= warmup {
            bump(&mut self.delay_hist, (t - e.arrival) as usize);
        }
        Some(e)
    }
}

/// Output of [`run_slots`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRun {
    pub report: MetricsReport,
    pub trace: Option<Trace>,
}

/// Simulates one replication on `realization`.
pub fn run_slots(realization: &NetworkRealization, options: &SimOptions) -> Result<SlotRun> {
    options.check()?;
    let cfg = &realization.cfg;
    let c = cfg.num_channels;
    let warmup = options.warmup();
    let mut traffic = stream_rng(cfg.seed, realization.replication, Stream::Traffic);
    let mut fading = stream_rng(cfg.seed, realization.replication, Stream::Fading);
    let fade = Exp::new(cfg.fading_rate).map_err(|e| Error::Domain(format!("fading: {e}")))?;
    let num_users = realization.users.len();
    let batch = if num_users > 0 && cfg.request_rate > 0.0 {
        Some(
            Poisson::new(num_users as f64 * cfg.request_rate)
                .map_err(|e| Error::Domain(format!("traffic: {e}")))?,
        )
    } else {
        None
    };

    let (bs_service, d2d_service) = realization.service_nodes();
    let mut bs: Vec<NodeState> = vec![NodeState::default(); realization.num_bs()];
    let mut d2d: Vec<NodeState> = vec![NodeState::default(); realization.num_d2d()];
    let mut bs_busy = vec![0usize; bs.len()];
    // Channels taken by each D2D transmitter in the current slot.
    let mut d2d_channels: Vec<Vec<usize>> = vec![Vec::new(); d2d.len()];
    let mut d2d_stamp = vec![u64::MAX; d2d.len()];
    let mut blocked = vec![false; c];
    let mut active: Vec<usize> = Vec::new();
    let mut trace = options.trace.then(Trace::default);
    let mut subset_counts = [0u64; 3];
    let (mut generated, mut served) = (0u64, 0u64);

    for t in 0..options.slots {
        if t >= warmup {
            for (i, node) in bs.iter_mut().enumerate() {
                if bs_service[i] {
                    node.record(t);
                }
            }
            for (i, node) in d2d.iter_mut().enumerate() {
                if d2d_service[i] {
                    node.record(t);
                }
            }
        }

        for (b, node) in bs.iter_mut().enumerate() {
            let mut m = 0;
            while m < c {
                let Some(e) = node.serve_one(t, warmup) else {
                    break;
                };
                m += 1;
                if let Some(tr) = trace.as_mut() {
                    tr.services.push(ServiceRecord {
                        slot: t,
                        class: NodeClass::Bs,
                        node: b,
                        channel: m,
                        arrival: e.arrival,
                    });
                }
            }
            bs_busy[b] = m;
            served += m as u64;
        }

        active.clear();
        active.extend((0..d2d.len()).filter(|&i| !d2d[i].queue.is_empty()));
        active.sort_by(|&a, &b| d2d[b].queue.len().cmp(&d2d[a].queue.len()).then(a.cmp(&b)));
        for &i in &active {
            let sensing = &realization.sensing[i];
            // BSs occupy channels 1..=m, so a sensed BS blocks a prefix.
            let mut prefix = 0;
            let mut bs_powers = Vec::new();
            for &(b, level) in &sensing.bs {
                if bs_busy[b] > prefix {
                    let h: f64 = fade.sample(&mut fading);
                    if trace.is_some() {
                        bs_powers.push((b, bs_busy[b], h / level * cfg.sense_threshold));
                    }
                    if h > level {
                        prefix = bs_busy[b];
                    }
                }
            }
            if prefix >= c {
                continue;
            }
            blocked.iter_mut().for_each(|x| *x = false);
            for &(j, level, group) in &sensing.d2d {
                if d2d_stamp[j] != t {
                    continue;
                }
                if group || fade.sample(&mut fading) > level {
                    for &ch in &d2d_channels[j] {
                        blocked[ch] = true;
                    }
                }
            }
            let want = d2d[i].queue.len();
            let taken: Vec<usize> = (prefix..c).filter(|&ch| !blocked[ch]).take(want).collect();
            if taken.is_empty() {
                continue;
            }
            for &ch in &taken {
                let e = d2d[i]
                    .serve_one(t, warmup)
                    .expect("queue holds at least `want` entries");
                if let Some(tr) = trace.as_mut() {
                    tr.services.push(ServiceRecord {
                        slot: t,
                        class: NodeClass::D2d,
                        node: i,
                        channel: ch + 1,
                        arrival: e.arrival,
                    });
                    tr.d2d.push(D2dTransmission {
                        slot: t,
                        d2d: i,
                        channel: ch + 1,
                        bs_powers: bs_powers
                            .iter()
                            .filter(|&&(_, busy, _)| busy > ch)
                            .map(|&(b, _, p)| (b, p))
                            .collect(),
                    });
                }
            }
            served += taken.len() as u64;
            d2d_channels[i] = taken;
            d2d_stamp[i] = t;
        }

        let arrivals = batch.as_ref().map_or(0, |p| p.sample(&mut traffic) as u64);
        for _ in 0..arrivals {
            let user = traffic.gen_range(0..num_users);
            let rank = realization.zipf.sample(&mut traffic);
            let route = classify_request(user, rank, realization);
            if t >= warmup {
                subset_counts[route.subset()] += 1;
            }
            let entry = QueueEntry {
                arrival: t,
                user: user as u32,
                content: rank as u32,
            };
            let node = match route {
                Route::Local => continue,
                Route::Bs(b) => &mut bs[b],
                Route::D2d(j) => &mut d2d[j],
            };
            node.queue.push_back(entry);
            node.arrivals += 1;
            generated += 1;
        }
    }

    let (bs_load, d2d_load) = realization.expected_loads();
    let mut nodes = Vec::new();
    let mut summarize = |class: NodeClass, states: &[NodeState], service: &[bool], load: &[f64]| {
        let mut steady = 0u64;
        let mut count = 0u64;
        let mut delay = Vec::new();
        let mut queue = Vec::new();
        for (i, s) in states.iter().enumerate() {
            if !service[i] {
                continue;
            }
            count += 1;
            let is_steady = s.trend.classify() == Steadiness::Steady;
            if is_steady {
                steady += 1;
                add(&mut delay, &s.delay_hist);
                add(&mut queue, &s.queue_hist);
            }
            nodes.push(NodeSummary {
                class,
                index: i,
                replication: realization.replication,
                expected_load: load[i],
                arrivals: s.arrivals,
                slope: s.trend.slope(),
                final_length: s.trend.last(),
                steady: is_steady,
            });
        }
        ClassMetrics::from_run(count, steady, delay, queue)
    };
    let bs_metrics = summarize(NodeClass::Bs, &bs, &bs_service, &bs_load);
    let d2d_metrics = summarize(NodeClass::D2d, &d2d, &d2d_service, &d2d_load);
    let backlog = bs.iter().chain(&d2d).map(|s| s.queue.len() as u64).sum();

    Ok(SlotRun {
        report: MetricsReport {
            bs: bs_metrics,
            d2d: d2d_metrics,
            replications: 1,
            subset_counts,
            generated,
            served,
            backlog,
            nodes,
        },
        trace,
    })
}

fn add(acc: &mut Vec<u64>, other: &[u64]) {
    if acc.len() < other.len() {
        acc.resize(other.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}
