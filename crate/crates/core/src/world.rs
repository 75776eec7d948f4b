//! Builds a simulation from a [`Scenario`] and runs it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{AppFactory, Controller, ControllerConfig, CounterApp};
use crate::ids::ProcessId;
use crate::metrics::MetricsSeries;
use crate::node::Node;
use crate::rsm::{Replica, RsmConfig};
use crate::scenario::{AppKind, Scenario};
use crate::simcore::{Fault, GlobalTime, LocalClock, LocalTime, SimConfig, SimError, Simulation, PPB};
use crate::switch::{Switch, SwitchConfig, SwitchStats};
use crate::trace::TraceRecord;

pub struct World {
    pub scenario: Scenario,
    pub sim: Simulation<Node>,
}

/// Floor for protocol timeouts in zero-delay scenarios.
const MIN_TIMEOUT_US: u64 = 1_000;

impl World {
    pub fn build(s: &Scenario) -> Result<World, SimError> {
        if s.delta_us >= s.lease_us {
            return Err(SimError::Config("delta must be shorter than lease".into()));
        }
        let mut sim = Simulation::new(SimConfig {
            seed: s.seed,
            channel: s.channel(),
            trace_level: s.trace_level,
            metrics_window_us: s.metrics_window_us,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0xC10C_5EED);
        let max_ppb = (s.drift_bound * PPB as f64) as i64;
        let mut clock = |id: ProcessId| {
            let rate = if max_ppb > 0 { rng.gen_range(-max_ppb..=max_ppb) } else { 0 };
            let offset = if s.max_offset_us > 0 { rng.gen_range(0..=s.max_offset_us) } else { 0 };
            LocalClock::new(id, rate, offset)
        };

        let round_trip = 4 * s.delay_bound_us + s.store_cost_us;
        let timeout = (2 * round_trip).max(MIN_TIMEOUT_US);
        let mut rsm_cfg = RsmConfig::for_delay_bound(s.delay_bound_us.max(MIN_TIMEOUT_US / 4));
        rsm_cfg.inclusive_lease_guard = s.mutations.inclusive_boundaries;

        let app: Option<AppFactory> = match s.app {
            AppKind::None => None,
            AppKind::Counter { keys } => Some(Arc::new(move |_| Box::new(CounterApp::new(keys)))),
        };
        let controllers = s.controllers();
        let ccfg = ControllerConfig {
            switches: s.switches(),
            data_servers: s.data_servers(),
            delta_us: s.delta_us,
            lease_us: s.lease_us,
            p_local: s.p_local,
            payload_size: s.payload_size,
            local_cost_us: s.local_cost_us,
            store_cost_us: s.store_cost_us,
            rto_us: timeout,
            role_retransmit_us: timeout,
            app_period_us: (s.delta_us / 10).max(MIN_TIMEOUT_US),
            disk_log_latency_us: s.disk_log_latency_us,
            mutations: s.mutations,
        };

        for d in s.data_servers() {
            let r = Replica::new(d, s.data_servers(), rsm_cfg.clone());
            sim.add_process(d, clock(d), s.seed, Node::DataServer(Box::new(r)));
        }
        for c in &controllers {
            let ctl = Controller::new(*c, ccfg.clone(), app.clone());
            sim.add_process(*c, clock(*c), s.seed, Node::Controller(Box::new(ctl)));
        }
        let scfg = SwitchConfig {
            controllers: controllers.clone(),
            window: s.window,
            think_us: s.think_us,
            buffer_capacity: s.buffer_capacity,
            retry_us: timeout.max(10_000),
            reset_roles_on_recover: s.reset_roles_on_recover,
        };
        for sw in s.switches() {
            sim.add_process(sw, clock(sw), s.seed, Node::Switch(Switch::new(sw, scfg.clone())));
        }
        for f in &s.faults {
            match (f.target, &f.kind) {
                (None, Fault::Crash) => {}
                (t, k) => {
                    sim.kernel_mut().schedule_fault(f.at, t, k.clone())?;
                }
            }
        }
        Ok(World { scenario: s.clone(), sim })
    }

    /// Controller that currently believes it holds the lease, judged by its
    /// own clock.
    pub fn current_primary(&self) -> Option<ProcessId> {
        self.sim.processes().find_map(|(id, n)| {
            let c = n.as_controller()?;
            let now = self.sim.read_clock(*id).ok()?;
            (!self.sim.kernel().is_crashed(*id) && c.i_am_primary(now)).then_some(*id)
        })
    }

    /// Runs to the scenario's end and lets processes write their summaries.
    pub fn run(&mut self) -> Result<(), SimError> {
        let crash_primary: Vec<GlobalTime> =
            self.scenario.faults.iter().filter(|f| f.target.is_none() && f.kind == Fault::Crash).map(|f| f.at).collect();
        for at in crash_primary {
            self.sim.run_until(Some(at))?;
            if let Some(p) = self.current_primary() {
                self.sim.kernel_mut().schedule_fault(at, Some(p), Fault::Crash)?;
            }
        }
        self.sim.run_until(Some(self.scenario.duration))?;
        self.sim.finish();
        Ok(())
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.sim.trace()
    }

    pub fn metrics(&self) -> MetricsSeries {
        self.sim.kernel().metrics().series(self.scenario.duration)
    }

    pub fn switch_stats(&self) -> SwitchStats {
        let mut total = SwitchStats::default();
        for (_, n) in self.sim.processes() {
            if let Some(s) = n.as_switch() {
                total.sent += s.stats.sent;
                total.completed += s.stats.completed;
                total.lost += s.stats.lost;
                total.queue_dropped += s.stats.queue_dropped;
            }
        }
        total
    }

    pub fn in_flight(&self) -> u64 {
        self.sim.processes().filter_map(|(_, n)| n.as_switch()).map(|s| s.in_flight()).sum()
    }

    pub fn local_time(&self, p: ProcessId) -> Option<LocalTime> {
        self.sim.read_clock(p).ok()
    }
}

/// Builds and runs `s`, returning the finished world.
pub fn run(s: &Scenario) -> Result<World, SimError> {
    let mut w = World::build(s)?;
    w.run()?;
    Ok(w)
}
