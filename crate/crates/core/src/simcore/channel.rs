use rand::Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use super::clock::GlobalTime;

/// Fair-lossy, partially synchronous channel parameters shared by every link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub drop_probability_before_gst: f64,
    /// Smallest one-way delay, before and after GST.
    pub delay_min_us: u64,
    /// Upper bound on one-way delay for messages sent at or after GST.
    pub delay_bound_after_gst_us: u64,
    /// Truncation point of the heavy-tailed delay distribution used before GST.
    pub max_delay_before_gst_us: u64,
    pub gst: GlobalTime,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            drop_probability_before_gst: 0.0,
            delay_min_us: 2_500,
            delay_bound_after_gst_us: 10_000,
            max_delay_before_gst_us: 100_000,
            gst: GlobalTime::ZERO,
        }
    }
}

/// Fate of one transmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transit {
    Dropped,
    Delayed(u64),
}

impl ChannelModel {
    pub fn is_synchronous(&self, now: GlobalTime) -> bool {
        now >= self.gst
    }

    pub fn sample<R: Rng + ?Sized>(&self, now: GlobalTime, rng: &mut R) -> Transit {
        let lo = self.delay_min_us.min(self.delay_bound_after_gst_us);
        if self.is_synchronous(now) {
            return Transit::Delayed(rng.gen_range(lo..=self.delay_bound_after_gst_us));
        }
        if self.drop_probability_before_gst > 0.0 && rng.gen_bool(self.drop_probability_before_gst.min(1.0)) {
            return Transit::Dropped;
        }
        // Pareto tail anchored at the post-GST bound, truncated at the configured maximum.
        let scale = (self.delay_bound_after_gst_us.max(1)) as f64 / 2.0;
        let tail = Pareto::new(scale, 1.2).expect("valid pareto").sample(rng) - scale;
        let delay = lo.saturating_add(tail as u64).min(self.max_delay_before_gst_us.max(lo));
        Transit::Delayed(delay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn after_gst_delays_are_bounded_and_never_dropped() {
        let ch = ChannelModel { drop_probability_before_gst: 1.0, gst: GlobalTime(5), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            match ch.sample(GlobalTime(5), &mut rng) {
                Transit::Delayed(d) => assert!(d >= ch.delay_min_us && d <= ch.delay_bound_after_gst_us),
                Transit::Dropped => panic!("dropped after GST"),
            }
        }
    }

    #[test]
    fn total_loss_before_gst() {
        let ch = ChannelModel { drop_probability_before_gst: 1.0, gst: GlobalTime(1_000), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..1_000).all(|_| ch.sample(GlobalTime(0), &mut rng) == Transit::Dropped));
    }

    #[test]
    fn pre_gst_delays_exceed_bound_sometimes_but_stay_truncated() {
        let ch = ChannelModel { gst: GlobalTime(u64::MAX), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let delays: Vec<u64> = (0..20_000)
            .map(|_| match ch.sample(GlobalTime(0), &mut rng) {
                Transit::Delayed(d) => d,
                Transit::Dropped => unreachable!(),
            })
            .collect();
        assert!(delays.iter().any(|&d| d > ch.delay_bound_after_gst_us));
        assert!(delays.iter().all(|&d| d <= ch.max_delay_before_gst_us));
    }

    #[test]
    fn fair_channel_retransmissions_get_through() {
        // p^N < 1e-9 with p = 0.5 needs N = 30.
        let ch = ChannelModel { drop_probability_before_gst: 0.5, gst: GlobalTime(u64::MAX), ..Default::default() };
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let delivered = (0..30).filter(|_| ch.sample(GlobalTime(0), &mut rng) != Transit::Dropped).count();
            assert!(delivered >= 1);
        }
    }
}
