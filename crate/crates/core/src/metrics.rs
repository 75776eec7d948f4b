use serde::{Deserialize, Serialize};

use crate::simcore::GlobalTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Counter {
    PacketInSent,
    FlowCompleted,
    /// Sent packet-ins given up on (e.g. in flight to a demoted master).
    PacketInLost,
    /// Packet-ins discarded at the switch before being sent (queue overflow).
    QueueDropped,
    RsmOp,
    CacheHit,
    CacheMiss,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub packet_ins_sent: u64,
    pub flows_completed: u64,
    pub lost: u64,
    pub queue_dropped: u64,
    pub rsm_ops: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

impl WindowCounts {
    fn bump(&mut self, c: Counter, n: u64) {
        let slot = match c {
            Counter::PacketInSent => &mut self.packet_ins_sent,
            Counter::FlowCompleted => &mut self.flows_completed,
            Counter::PacketInLost => &mut self.lost,
            Counter::QueueDropped => &mut self.queue_dropped,
            Counter::RsmOp => &mut self.rsm_ops,
            Counter::CacheHit => &mut self.cache_hits,
            Counter::CacheMiss => &mut self.cache_misses,
        };
        *slot += n;
    }

    pub fn add(&mut self, o: &WindowCounts) {
        self.packet_ins_sent += o.packet_ins_sent;
        self.flows_completed += o.flows_completed;
        self.lost += o.lost;
        self.queue_dropped += o.queue_dropped;
        self.rsm_ops += o.rsm_ops;
        self.cache_hits += o.cache_hits;
        self.cache_misses += o.cache_misses;
    }
}

/// Counters bucketed into contiguous windows of global time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsRecorder {
    pub window_us: u64,
    windows: Vec<WindowCounts>,
    /// Global completion instants, kept to measure outages precisely.
    completions: Vec<u64>,
}

impl MetricsRecorder {
    pub fn new(window_us: u64) -> Self {
        assert!(window_us > 0);
        MetricsRecorder { window_us, windows: Vec::new(), completions: Vec::new() }
    }

    pub fn record(&mut self, at: GlobalTime, c: Counter, n: u64) {
        let idx = (at.0 / self.window_us) as usize;
        if self.windows.len() <= idx {
            self.windows.resize(idx + 1, WindowCounts::default());
        }
        self.windows[idx].bump(c, n);
        if c == Counter::FlowCompleted {
            self.completions.extend(std::iter::repeat_n(at.0, n as usize));
        }
    }

    pub fn series(&self, until: GlobalTime) -> MetricsSeries {
        let n = until.0.div_ceil(self.window_us) as usize;
        let points = (0..n)
            .map(|i| MetricPoint {
                start_us: i as u64 * self.window_us,
                counts: self.windows.get(i).copied().unwrap_or_default(),
            })
            .collect();
        MetricsSeries { window_us: self.window_us, points }
    }

    pub fn totals_between(&self, from: GlobalTime, to: GlobalTime) -> WindowCounts {
        let mut acc = WindowCounts::default();
        let a = (from.0 / self.window_us) as usize;
        let b = (to.0 / self.window_us) as usize;
        for w in self.windows.iter().skip(a).take(b.saturating_sub(a)) {
            acc.add(w);
        }
        acc
    }

    pub fn totals(&self) -> WindowCounts {
        let mut acc = WindowCounts::default();
        for w in &self.windows {
            acc.add(w);
        }
        acc
    }

    pub fn completions(&self) -> &[u64] {
        &self.completions
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub start_us: u64,
    pub counts: WindowCounts,
}

/// Windowed throughput timeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub window_us: u64,
    pub points: Vec<MetricPoint>,
}

impl MetricsSeries {
    pub fn flows_per_s(&self) -> Vec<f64> {
        let secs = self.window_us as f64 / 1e6;
        self.points.iter().map(|p| p.counts.flows_completed as f64 / secs).collect()
    }

    /// Maximal runs of windows with zero completed flows, as `[start, end)`
    /// global intervals, restricted to windows starting at or after `from`.
    pub fn zero_windows(&self, from: GlobalTime) -> Vec<(GlobalTime, GlobalTime)> {
        let mut runs = Vec::new();
        let mut cur: Option<u64> = None;
        for p in self.points.iter().filter(|p| p.start_us >= from.0) {
            if p.counts.flows_completed == 0 {
                cur.get_or_insert(p.start_us);
            } else if let Some(s) = cur.take() {
                runs.push((GlobalTime(s), GlobalTime(p.start_us)));
            }
        }
        if let Some(s) = cur {
            let end = self.points.last().map(|p| p.start_us + self.window_us).unwrap_or(s);
            runs.push((GlobalTime(s), GlobalTime(end)));
        }
        runs
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("window_start_s,flows_completed,flows_per_s,rsm_ops,cache_hits,cache_misses\n");
        let secs = self.window_us as f64 / 1e6;
        for p in &self.points {
            let c = p.counts;
            s.push_str(&format!(
                "{:.3},{},{:.1},{},{},{}\n",
                p.start_us as f64 / 1e6,
                c.flows_completed,
                c.flows_completed as f64 / secs,
                c.rsm_ops,
                c.cache_hits,
                c.cache_misses
            ));
        }
        s
    }
}
