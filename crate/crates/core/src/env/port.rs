use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Berth occupancy and FIFO queue of one port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortRuntime {
    pub port: usize,
    pub capacity: u32,
    /// Berthed vessel ids in berthing order.
    pub berthed: Vec<usize>,
    pub queue: VecDeque<usize>,
    pub accumulated_queue_hours: f64,
}

impl PortRuntime {
    pub fn new(port: usize, capacity: u32) -> Self {
        PortRuntime {
            port,
            capacity,
            berthed: Vec::new(),
            queue: VecDeque::new(),
            accumulated_queue_hours: 0.0,
        }
    }

    pub fn occupied(&self) -> usize {
        self.berthed.len()
    }

    pub fn is_berthed(&self, vessel: usize) -> bool {
        self.berthed.contains(&vessel)
    }

    pub fn is_queued(&self, vessel: usize) -> bool {
        self.queue.contains(&vessel)
    }
}

/// Applies one tick of berth allocation.
///
/// Departures leave first. Free berths then go to the existing queue head
/// and after that to this tick's arrivals in ascending id order; vessels
/// that do not fit join the back of the queue. Queue hours accrue for every
/// vessel still queued after allocation.
pub fn allocate_berths(
    port: &PortRuntime,
    departures: &[usize],
    arrivals: &[usize],
    dt: f64,
) -> Result<PortRuntime> {
    let mut next = port.clone();
    for &d in departures {
        let pos = next.berthed.iter().position(|&b| b == d).ok_or_else(|| {
            Error::StateCorruption(format!(
                "vessel {d} departs port {} without a berth",
                port.port
            ))
        })?;
        next.berthed.remove(pos);
    }
    let mut incoming = arrivals.to_vec();
    incoming.sort_unstable();
    for w in incoming.windows(2) {
        if w[0] == w[1] {
            return Err(Error::Contract(format!("vessel {} arrives twice", w[0])));
        }
    }
    for &a in &incoming {
        if next.is_berthed(a) || next.is_queued(a) {
            return Err(Error::StateCorruption(format!(
                "vessel {a} arrives at port {} where it already is",
                port.port
            )));
        }
    }
    next.queue.extend(incoming);
    while next.berthed.len() < next.capacity as usize {
        match next.queue.pop_front() {
            Some(v) => next.berthed.push(v),
            None => break,
        }
    }
    next.accumulated_queue_hours += next.queue.len() as f64 * dt;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simultaneous_arrivals_break_ties_by_id() {
        let p = PortRuntime::new(0, 2);
        let n = allocate_berths(&p, &[], &[7, 3, 5], 1.0).unwrap();
        assert_eq!(n.berthed, vec![3, 5]);
        assert_eq!(n.queue, VecDeque::from(vec![7]));
        assert_eq!(n.accumulated_queue_hours, 1.0);
    }

    #[test]
    fn departures_are_processed_first() {
        let mut p = PortRuntime::new(0, 2);
        p.berthed = vec![1, 2];
        let n = allocate_berths(&p, &[1], &[4], 1.0).unwrap();
        assert_eq!(n.berthed, vec![2, 4]);
        assert!(n.queue.is_empty());
    }

    #[test]
    fn queue_head_precedes_new_arrivals() {
        let mut p = PortRuntime::new(0, 1);
        p.berthed = vec![1];
        p.queue = VecDeque::from(vec![9]);
        let n = allocate_berths(&p, &[1], &[2], 1.0).unwrap();
        assert_eq!(n.berthed, vec![9]);
        assert_eq!(n.queue, VecDeque::from(vec![2]));
    }

    #[test]
    fn noop_tick_only_accrues_queue_hours() {
        let mut p = PortRuntime::new(0, 1);
        p.berthed = vec![1];
        p.queue = VecDeque::from(vec![2, 3]);
        let n = allocate_berths(&p, &[], &[], 1.0).unwrap();
        assert_eq!(n.berthed, p.berthed);
        assert_eq!(n.queue, p.queue);
        assert_eq!(n.accumulated_queue_hours, 2.0);
    }

    #[test]
    fn departure_without_berth_is_corruption() {
        let p = PortRuntime::new(0, 1);
        assert!(matches!(
            allocate_berths(&p, &[3], &[], 1.0),
            Err(Error::StateCorruption(_))
        ));
    }
}
