use serde::{Deserialize, Serialize};

use super::ControllerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyKind {
    SlowDown,
    Stop,
    SoundAlert,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyEvent {
    pub kind: SafetyKind,
    pub timestamp: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Zone {
    #[default]
    Clear,
    Slow,
    Stop,
}

/// Obstacle zones with edge-triggered events. A zone is entered at its
/// threshold and left only once the obstacle is `release_margin` beyond
/// it, so sensor noise at a boundary does not re-trigger events. A stop
/// episode lasts until the Stop zone is left; the speed scale is held at 0
/// throughout, and the alert sounds at most once per episode, after the
/// leader gap has exceeded twice the follow distance for `t_alert` seconds
/// without interruption.
#[derive(Clone, Debug)]
pub struct SafetyMonitor {
    cfg: ControllerConfig,
    zone: Zone,
    far_since: Option<f64>,
    alerted: bool,
    episodes: usize,
}

impl SafetyMonitor {
    pub fn new(cfg: ControllerConfig) -> Self {
        Self {
            cfg,
            zone: Zone::Clear,
            far_since: None,
            alerted: false,
            episodes: 0,
        }
    }

    pub fn zone(&self) -> Zone {
        self.zone
    }

    /// Stop episodes entered so far.
    pub fn stop_episodes(&self) -> usize {
        self.episodes
    }

    /// Speed scale for an obstacle at `distance` along the path.
    pub fn scale(&self, distance: Option<f64>) -> f64 {
        let (slow, stop) = (self.cfg.d_slow, self.cfg.d_stop);
        match distance {
            None => 1.0,
            Some(d) if d > slow => 1.0,
            Some(d) if d <= stop => 0.0,
            Some(d) => (d - stop) / (slow - stop),
        }
    }

    fn next_zone(&self, distance: Option<f64>) -> Zone {
        let (slow, stop, m) = (self.cfg.d_slow, self.cfg.d_stop, self.cfg.release_margin);
        let Some(d) = distance else {
            return Zone::Clear;
        };
        match self.zone {
            _ if d <= stop => Zone::Stop,
            Zone::Stop if d <= stop + m => Zone::Stop,
            _ if d <= slow => Zone::Slow,
            Zone::Slow | Zone::Stop if d <= slow + m => Zone::Slow,
            _ => Zone::Clear,
        }
    }

    pub fn step(&mut self, distance: Option<f64>, leader_gap: Option<f64>, now: f64) -> (f64, Vec<SafetyEvent>) {
        let zone = self.next_zone(distance);
        let scale = if zone == Zone::Stop { 0.0 } else { self.scale(distance) };
        let mut events = Vec::new();
        let mut emit = |kind| events.push(SafetyEvent { kind, timestamp: now });
        match (self.zone, zone) {
            (Zone::Clear, Zone::Slow) => emit(SafetyKind::SlowDown),
            (Zone::Clear | Zone::Slow, Zone::Stop) => {
                emit(SafetyKind::Stop);
                self.episodes += 1;
                self.alerted = false;
                self.far_since = None;
            }
            _ => {}
        }
        self.zone = zone;
        if zone == Zone::Stop {
            let far = leader_gap.is_some_and(|g| g > 2.0 * self.cfg.follow_distance);
            if far {
                let since = *self.far_since.get_or_insert(now);
                if !self.alerted && now - since >= self.cfg.t_alert - 1e-9 {
                    emit(SafetyKind::SoundAlert);
                    self.alerted = true;
                }
            } else {
                self.far_since = None;
            }
        } else {
            self.far_since = None;
        }
        (scale, events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(ev: &[SafetyEvent]) -> Vec<SafetyKind> {
        ev.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn scale_examples() {
        let cfg = ControllerConfig::default();
        let m = SafetyMonitor::new(cfg.clone());
        assert_eq!(m.scale(None), 1.0);
        assert_eq!(m.scale(Some(cfg.d_slow + 0.1)), 1.0);
        assert!((m.scale(Some(0.5 * (cfg.d_slow + cfg.d_stop))) - 0.5).abs() < 1e-12);
        assert_eq!(m.scale(Some(cfg.d_stop)), 0.0);
        assert_eq!(m.scale(Some(0.0)), 0.0);
    }

    #[test]
    fn approach_then_leader_walks_away() {
        let cfg = ControllerConfig::default();
        let mut m = SafetyMonitor::new(cfg);
        let dt = 0.05;
        let mut all = Vec::new();
        for k in 0..400 {
            let t = k as f64 * dt;
            let d = (3.0 - 0.4 * t).max(0.4);
            let gap = 1.5 + 0.3 * t;
            let (_, ev) = m.step(Some(d), Some(gap), t);
            all.extend(ev);
        }
        assert_eq!(kinds(&all), vec![SafetyKind::SlowDown, SafetyKind::Stop, SafetyKind::SoundAlert]);
        // gap exceeds 3 m at t = 5 s, stop zone entered at t = 6 s
        assert!((all[2].timestamp - 9.0).abs() < 1e-9, "{:?}", all[2]);
    }

    #[test]
    fn no_alert_while_leader_waits() {
        let mut m = SafetyMonitor::new(ControllerConfig::default());
        let mut n = 0;
        for k in 0..400 {
            let (_, ev) = m.step(Some(0.3), Some(2.0), k as f64 * 0.05);
            n += ev.iter().filter(|e| e.kind == SafetyKind::SoundAlert).count();
        }
        assert_eq!(n, 0);
    }

    #[test]
    fn boundary_noise_does_not_retrigger() {
        use rand::{Rng, SeedableRng};
        let cfg = ControllerConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut m = SafetyMonitor::new(cfg.clone());
        let mut all = Vec::new();
        for k in 0..600 {
            let centre = if k < 300 { cfg.d_slow } else { cfg.d_stop };
            let d = centre + rng.gen_range(-0.05..0.05);
            let (s, ev) = m.step(Some(d), Some(1.5), k as f64 * 0.05);
            if k >= 300 && m.zone() == Zone::Stop {
                assert_eq!(s, 0.0);
            }
            all.extend(ev);
        }
        assert_eq!(kinds(&all), vec![SafetyKind::SlowDown, SafetyKind::Stop]);
    }

    proptest::proptest! {
        /// Alerts never outnumber stop episodes.
        #[test]
        fn alerts_bounded_by_episodes(
            ds in proptest::collection::vec(proptest::option::of(0.0..3.0f64), 1..300),
            gaps in proptest::collection::vec(0.0..8.0f64, 300),
        ) {
            let cfg = ControllerConfig { t_alert: 0.2, ..ControllerConfig::default() };
            let mut m = SafetyMonitor::new(cfg);
            let mut alerts = 0;
            for (k, d) in ds.iter().enumerate() {
                let (s, ev) = m.step(*d, Some(gaps[k]), k as f64 * 0.05);
                proptest::prop_assert!((0.0..=1.0).contains(&s));
                alerts += ev.iter().filter(|e| e.kind == SafetyKind::SoundAlert).count();
            }
            proptest::prop_assert!(alerts <= m.stop_episodes());
        }
    }
}
