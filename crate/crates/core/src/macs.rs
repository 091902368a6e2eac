//! Multiply-accumulate instrumentation for the stateful samplers.

/// Running MAC tally with a per-event maximum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounter {
    pub total: u64,
    pub events: u64,
    pub max_per_event: u64,
    current: u64,
}

impl MacCounter {
    #[inline]
    pub fn add(&mut self, n: u64) {
        self.current += n;
    }

    /// Closes the tally for the current event.
    #[inline]
    pub fn finish_event(&mut self) {
        self.total += self.current;
        self.max_per_event = self.max_per_event.max(self.current);
        self.events += 1;
        self.current = 0;
    }

    pub fn mean_per_event(&self) -> f64 {
        if self.events == 0 {
            0.0
        } else {
            self.total as f64 / self.events as f64
        }
    }
}
