use crate::pattern::LineRequest;
use std::collections::VecDeque;

/// Bus-level metadata captured by the trapper and echoed on retirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RequestMeta {
    /// Line address in the reorganized space.
    pub addr: u64,
    /// Critical-word-first attribute; stored, never acted on.
    pub wrap: bool,
    pub bus_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobEntry {
    pub request: LineRequest,
    pub meta: RequestMeta,
    pub payload: Vec<u8>,
    pub completed: u64,
    pub arrival_index: u64,
    /// Per-dimension counters once the preparator has run.
    pub counters: Option<Vec<u64>>,
}

impl RobEntry {
    pub fn is_complete(&self) -> bool {
        self.completed == self.request.line_elems
    }
}

/// Fixed-capacity reorder buffer. Entries live in slots that are reused;
/// `order` keeps live slot indices in arrival order.
#[derive(Debug, Clone)]
pub struct Rob {
    slots: Vec<Option<RobEntry>>,
    order: VecDeque<usize>,
    next_arrival: u64,
}

impl Rob {
    pub fn new(capacity: usize) -> Self {
        Self {
            slots: vec![None; capacity],
            order: VecDeque::with_capacity(capacity),
            next_arrival: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn live(&self) -> usize {
        self.order.len()
    }

    pub fn is_full(&self) -> bool {
        self.live() == self.capacity()
    }

    /// Allocates the lowest free slot, or `None` when full.
    pub fn allocate(
        &mut self,
        request: LineRequest,
        meta: RequestMeta,
        line_bytes: usize,
    ) -> Option<usize> {
        let index = self.slots.iter().position(Option::is_none)?;
        self.slots[index] = Some(RobEntry {
            request,
            meta,
            payload: vec![0; line_bytes],
            completed: 0,
            arrival_index: self.next_arrival,
            counters: None,
        });
        self.next_arrival += 1;
        self.order.push_back(index);
        Some(index)
    }

    pub fn get(&self, index: usize) -> Option<&RobEntry> {
        self.slots.get(index).and_then(Option::as_ref)
    }

    pub fn get_mut(&mut self, index: usize) -> Option<&mut RobEntry> {
        self.slots.get_mut(index).and_then(Option::as_mut)
    }

    pub fn oldest(&self) -> Option<&RobEntry> {
        self.order.front().and_then(|&i| self.get(i))
    }

    /// Pops the oldest entry iff it is complete. Younger complete entries
    /// wait their turn.
    pub fn retire(&mut self) -> Option<RobEntry> {
        if !self.oldest()?.is_complete() {
            return None;
        }
        let index = self.order.pop_front()?;
        self.slots[index].take()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RobEntry> + '_ {
        self.order.iter().filter_map(|&i| self.get(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(offset: u64) -> LineRequest {
        LineRequest {
            view_id: 0,
            offset,
            line_elems: 2,
        }
    }

    #[test]
    fn allocation_reuses_slots_with_monotone_arrivals() {
        let mut rob = Rob::new(2);
        assert_eq!(rob.allocate(req(0), RequestMeta::default(), 8), Some(0));
        assert_eq!(rob.allocate(req(2), RequestMeta::default(), 8), Some(1));
        assert_eq!(rob.allocate(req(4), RequestMeta::default(), 8), None);
        rob.get_mut(0).unwrap().completed = 2;
        let first = rob.retire().unwrap();
        assert_eq!(first.arrival_index, 0);
        assert_eq!(rob.allocate(req(4), RequestMeta::default(), 8), Some(0));
        assert_eq!(rob.get(0).unwrap().arrival_index, 2);
        assert_eq!(rob.oldest().unwrap().arrival_index, 1);
    }

    #[test]
    fn younger_complete_entry_waits() {
        let mut rob = Rob::new(4);
        rob.allocate(req(0), RequestMeta::default(), 8);
        rob.allocate(req(2), RequestMeta::default(), 8);
        rob.get_mut(1).unwrap().completed = 2;
        assert!(rob.retire().is_none());
        rob.get_mut(0).unwrap().completed = 2;
        assert_eq!(rob.retire().unwrap().arrival_index, 0);
        assert_eq!(rob.retire().unwrap().arrival_index, 1);
        assert!(rob.retire().is_none());
    }
}
