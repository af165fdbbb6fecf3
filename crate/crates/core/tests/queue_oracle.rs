mod common;

use cogd2d::mqueue::{idft_invert, BsDelayPgf, BsQueuePgf};
use cogd2d::priority::{D2dDelayPgf, D2dQueuePgf, PriorityLoad};

use common::{simulate_multiserver, simulate_priority};

const SLOTS: u64 = 400_000;

#[test]
fn multiserver_matches_simulation_moderate_load() {
    for (servers, load) in [(1usize, 0.7), (4, 2.8)] {
        let sim = simulate_multiserver(servers, load, SLOTS, 1000, 11);
        let q = idft_invert(&BsQueuePgf::new(load, servers).unwrap(), 1 << 12).unwrap();
        let d = idft_invert(&BsDelayPgf::new(load, servers).unwrap(), 1 << 12).unwrap();
        let tv_q = q.total_variation(&sim.queue_pmf());
        let tv_d = d.total_variation(&sim.delay_pmf());
        assert!(tv_q < 0.01, "queue c={servers}: {tv_q}");
        assert!(tv_d < 0.01, "delay c={servers}: {tv_d}");
    }
}

#[test]
fn priority_matches_simulation() {
    for (servers, high, low) in [(1usize, 0.3, 0.4), (4, 1.5, 1.5), (10, 5.0, 3.0)] {
        let sim = simulate_priority(servers, high, low, SLOTS, 1000, 23);
        let load = PriorityLoad::new(high, low, servers).unwrap();
        let q = idft_invert(&D2dQueuePgf::new(load).unwrap(), 1 << 12).unwrap();
        let d = idft_invert(&D2dDelayPgf::new(load).unwrap(), 1 << 12).unwrap();
        let tv_q = q.total_variation(&sim.queue_pmf());
        let tv_d = d.total_variation(&sim.delay_pmf());
        assert!(
            tv_q < 0.03,
            "queue c={servers}: {tv_q} mean {} vs {}",
            q.mean(),
            sim.queue_pmf().mean()
        );
        assert!(
            tv_d < 0.03,
            "delay c={servers}: {tv_d} mean {} vs {}",
            d.mean(),
            sim.delay_pmf().mean()
        );
    }
}
