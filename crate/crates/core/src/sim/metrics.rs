//! Per-run metrics and their pooling across replications.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::DiscretePmf;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeClass {
    Bs,
    D2d,
}

impl NodeClass {
    pub fn name(self) -> &'static str {
        match self {
            NodeClass::Bs => "bs",
            NodeClass::D2d => "d2d",
        }
    }
}

/// End-of-run state of one service node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub class: NodeClass,
    pub index: usize,
    pub replication: u64,
    /// Request rate implied by the routing probabilities of its users.
    pub expected_load: f64,
    pub arrivals: u64,
    pub slope: f64,
    pub final_length: u64,
    pub steady: bool,
}

/// Statistics of one node class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub nodes: u64,
    pub steady: u64,
    /// Mean over replications of the steady fraction; 1 when the class has
    /// no service nodes.
    pub steady_fraction: f64,
    /// 95% confidence half-width of `steady_fraction`.
    pub half_width: f64,
    /// Steady fraction of each replication that had nodes of this class.
    pub per_replication: Vec<f64>,
    /// Delay histogram over requests served by steady nodes.
    pub delay_counts: Vec<u64>,
    /// Queue-length histogram over slots of steady nodes.
    pub queue_counts: Vec<u64>,
}

fn add_counts(acc: &mut Vec<u64>, other: &[u64]) {
    if acc.len() < other.len() {
        acc.resize(other.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

impl ClassMetrics {
    /// Metrics of a single run.
    pub fn from_run(
        nodes: u64,
        steady: u64,
        delay_counts: Vec<u64>,
        queue_counts: Vec<u64>,
    ) -> Self {
        let mut m = ClassMetrics {
            nodes,
            steady,
            per_replication: if nodes > 0 {
                vec![steady as f64 / nodes as f64]
            } else {
                Vec::new()
            },
            delay_counts,
            queue_counts,
            ..Default::default()
        };
        m.refresh();
        m
    }

    fn refresh(&mut self) {
        let r = self.per_replication.len();
        if r == 0 {
            self.steady_fraction = 1.0;
            self.half_width = 0.0;
            return;
        }
        let mean = self.per_replication.iter().sum::<f64>() / r as f64;
        self.steady_fraction = mean;
        self.half_width = if r == 1 {
            Z95 * (mean * (1.0 - mean) / self.nodes as f64).sqrt()
        } else {
            let var = self
                .per_replication
                .iter()
                .map(|f| (f - mean).powi(2))
                .sum::<f64>()
                / (r - 1) as f64;
            Z95 * (var / r as f64).sqrt()
        };
    }

    fn absorb(&mut self, other: &ClassMetrics) {
        self.nodes += other.nodes;
        self.steady += other.steady;
        self.per_replication
            .extend_from_slice(&other.per_replication);
        add_counts(&mut self.delay_counts, &other.delay_counts);
        add_counts(&mut self.queue_counts, &other.queue_counts);
    }

    pub fn delay_pmf(&self) -> Result<DiscretePmf> {
        if self.delay_counts.iter().all(|&c| c == 0) {
            return Err(Error::Empty("delay samples"));
        }
        DiscretePmf::from_counts(&self.delay_counts)
    }

    pub fn queue_pmf(&self) -> Result<DiscretePmf> {
        if self.queue_counts.iter().all(|&c| c == 0) {
            return Err(Error::Empty("queue-length samples"));
        }
        DiscretePmf::from_counts(&self.queue_counts)
    }
}

/// Outcome of one or more simulated replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bs: ClassMetrics,
    pub d2d: ClassMetrics,
    pub replications: usize,
    /// Requests per subset (local, D2D, BS), after warmup.
    pub subset_counts: [u64; 3],
    /// Network requests generated over the whole run.
    pub generated: u64,
    pub served: u64,
    /// Requests still queued at the end.
    pub backlog: u64,
    pub nodes: Vec<NodeSummary>,
}

impl MetricsReport {
    pub fn class(&self, class: NodeClass) -> &ClassMetrics {
        match class {
            NodeClass::Bs => &self.bs,
            NodeClass::D2d => &self.d2d,
        }
    }
}

/// Pools replications: histograms add up, steady fractions are averaged
/// across replications with a between-replication confidence interval.
pub fn aggregate_replications(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let (first, rest) = reports
        .split_first()
        .ok_or(Error::Empty("replication reports"))?;
    if rest.is_empty() {
        return Ok(first.clone());
    }
    let mut out = first.clone();
    for r in rest {
        out.bs.absorb(&r.bs);
        out.d2d.absorb(&r.d2d);
        out.replications += r.replications;
        for (a, b) in out.subset_counts.iter_mut().zip(r.subset_counts) {
            *a += b;
        }
        out.generated += r.generated;
        out.served += r.served;
        out.backlog += r.backlog;
        out.nodes.extend_from_slice(&r.nodes);
    }
    out.bs.refresh();
    out.d2d.refresh();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(steady: u64, nodes: u64) -> MetricsReport {
        MetricsReport {
            bs: ClassMetrics::from_run(nodes, steady, vec![0, 5, 3], vec![4, 4]),
            d2d: ClassMetrics::from_run(0, 0, vec![], vec![]),
            replications: 1,
            subset_counts: [1, 2, 3],
            generated: 5,
            served: 4,
            backlog: 1,
            nodes: Vec::new(),
        }
    }

    #[test]
    fn single_report_unchanged() {
        let r = report(8, 10);
        let agg = aggregate_replications(std::slice::from_ref(&r)).unwrap();
        assert_eq!(agg, r);
        assert!((r.bs.half_width - Z95 * (0.8f64 * 0.2 / 10.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_reports_shrink_interval() {
        let r = report(8, 10);
        let agg = aggregate_replications(&[r.clone(), r.clone()]).unwrap();
        assert_eq!(agg.bs.steady_fraction, r.bs.steady_fraction);
        assert!(agg.bs.half_width < r.bs.half_width);
        assert_eq!(agg.bs.delay_counts, vec![0, 10, 6]);
        assert_eq!(agg.replications, 2);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(aggregate_replications(&[]).is_err());
    }

    #[test]
    fn empty_class_is_vacuously_steady() {
        let r = report(1, 1);
        assert_eq!(r.d2d.steady_fraction, 1.0);
        assert!(r.d2d.delay_pmf().is_err());
    }

    #[test]
    fn aggregation_is_order_free() {
        let (a, b, c) = (report(3, 10), report(7, 10), report(9, 12));
        let x = aggregate_replications(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = aggregate_replications(&[c, a, b]).unwrap();
        assert!((x.bs.steady_fraction - y.bs.steady_fraction).abs() < 1e-15);
        assert_eq!(x.bs.delay_counts, y.bs.delay_counts);
    }
}
