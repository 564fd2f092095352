use crate::error::CoreError;

/// Fixed-step simulation clock. Time is derived from an integer tick count so
/// it never accumulates rounding drift.
#[derive(Debug, Clone, PartialEq)]
pub struct SimClock {
    dt: f64,
    ticks: u64,
}

impl SimClock {
    pub const DEFAULT_DT: f64 = 0.01;

    pub fn new(dt: f64) -> Result<Self, CoreError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CoreError::Config(format!("dt must be positive and finite, got {dt}")));
        }
        Ok(Self { dt, ticks: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn time(&self) -> f64 {
        self.time_at(self.ticks)
    }

    pub fn time_at(&self, tick: u64) -> f64 {
        tick as f64 * self.dt
    }

    pub fn advance(&mut self) {
        self.ticks += 1;
    }

    pub fn reset(&mut self) {
        self.ticks = 0;
    }
}

/// Schedules a periodic event (sensor frame, LIDAR scan) on the physics tick
/// grid. Event `k` fires on the first tick whose time reaches `k / rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cadence {
    ticks_per_period: f64,
}

impl Cadence {
    pub fn new(rate_hz: f64, dt: f64) -> Result<Self, CoreError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(CoreError::Config(format!("rate must be positive, got {rate_hz}")));
        }
        let ticks_per_period = 1.0 / (rate_hz * dt);
        if ticks_per_period < 1.0 - 1e-9 {
            return Err(CoreError::Config(format!(
                "rate {rate_hz} Hz exceeds the physics rate {} Hz",
                1.0 / dt
            )));
        }
        Ok(Self { ticks_per_period })
    }

    /// Tick on which event `k` fires.
    pub fn tick_of(&self, k: u64) -> u64 {
        (k as f64 * self.ticks_per_period - 1e-6).ceil().max(0.0) as u64
    }

    /// True when an event fires on `tick`.
    pub fn fires(&self, tick: u64) -> bool {
        let k = (tick as f64 / self.ticks_per_period + 1e-6).floor() as u64;
        self.tick_of(k) == tick
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_is_exact_multiple_of_ticks() {
        let mut c = SimClock::new(0.01).unwrap();
        for _ in 0..100_000 {
            c.advance();
        }
        assert_eq!(c.time(), 100_000.0 * 0.01);
        assert_eq!(c.ticks(), 100_000);
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(SimClock::new(0.0).is_err());
        assert!(SimClock::new(-0.01).is_err());
        assert!(SimClock::new(f64::NAN).is_err());
    }

    #[test]
    fn seven_hz_on_hundred_hz_grid() {
        let c = Cadence::new(7.0, 0.01).unwrap();
        let fired: Vec<u64> = (0..=1000).filter(|&t| c.fires(t)).collect();
        // 10 s window [0, 10] s holds events k = 0..=70.
        assert_eq!(fired.len(), 71);
        assert_eq!(&fired[..3], &[0, 15, 29]);
        for w in fired.windows(2) {
            assert!(w[1] - w[0] == 14 || w[1] - w[0] == 15);
        }
    }

    #[test]
    fn every_tick_cadence() {
        let c = Cadence::new(100.0, 0.01).unwrap();
        assert!((0..500).all(|t| c.fires(t)));
        assert!(Cadence::new(200.0, 0.01).is_err());
    }
}
