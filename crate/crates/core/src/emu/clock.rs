use std::collections::BTreeMap;

/// Virtual time in microseconds.
pub type VirtualTime = u64;

/// Pending events ordered by `(time, id)`; ids are assigned at scheduling
/// time so same-instant events fire in the order they were scheduled.
#[derive(Debug)]
pub struct VirtualClock<E> {
    now: VirtualTime,
    next_id: u64,
    pending: BTreeMap<(VirtualTime, u64), E>,
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        Self { now: 0, next_id: 0, pending: BTreeMap::new() }
    }
}

impl<E> VirtualClock<E> {
    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, at: VirtualTime, event: E) -> u64 {
        assert!(at >= self.now, "event scheduled at {at} before now {}", self.now);
        let id = self.next_id;
        self.next_id += 1;
        self.pending.insert((at, id), event);
        id
    }

    /// Removes and returns the earliest event due at or before `until`,
    /// moving the clock to its time.
    pub fn pop_due(&mut self, until: VirtualTime) -> Option<(VirtualTime, E)> {
        let entry = self.pending.first_entry()?;
        let (at, _) = *entry.key();
        if at > until {
            return None;
        }
        let event = entry.remove();
        self.now = at;
        Some((at, event))
    }

    pub fn set_now(&mut self, t: VirtualTime) {
        debug_assert!(t >= self.now);
        self.now = t;
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&E) -> bool) {
        self.pending.retain(|_, e| keep(e));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_in_time_then_id_order() {
        let mut c = VirtualClock::default();
        c.schedule(20, "late");
        c.schedule(10, "first");
        c.schedule(10, "second");
        assert_eq!(c.pop_due(15), Some((10, "first")));
        assert_eq!(c.pop_due(15), Some((10, "second")));
        assert_eq!(c.pop_due(15), None);
        assert_eq!(c.now(), 10);
        assert_eq!(c.pop_due(20), Some((20, "late")));
    }

    #[test]
    #[should_panic]
    fn refuses_to_schedule_in_the_past() {
        let mut c = VirtualClock::default();
        c.schedule(10, ());
        c.pop_due(10);
        c.schedule(5, ());
    }
}
