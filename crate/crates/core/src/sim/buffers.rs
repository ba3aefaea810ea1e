//! LRU residency model for the on-chip buffers. Accesses that miss are
//! charged as DRAM traffic by the caller; the buffer only answers whether
//! the item was resident.

use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferKind {
    Weight,
    Parameter,
    QkSram,
    VSram,
    Input,
    Output,
}

/// Fixed-capacity LRU set keyed by item id; capacity is expressed in items
/// of uniform size.
#[derive(Debug, Clone)]
pub struct Buffer {
    pub kind: BufferKind,
    capacity_items: usize,
    last_use: HashMap<u64, u64>,
    order: BTreeSet<(u64, u64)>,
    clock: u64,
}

impl Buffer {
    pub fn new(kind: BufferKind, capacity_bytes: usize, item_bytes: usize) -> Buffer {
        Buffer {
            kind,
            capacity_items: (capacity_bytes / item_bytes.max(1)).max(1),
            last_use: HashMap::new(),
            order: BTreeSet::new(),
            clock: 0,
        }
    }

    /// Touch an item; true when it was already resident.
    pub fn access(&mut self, id: u64) -> bool {
        self.clock += 1;
        let hit = if let Some(&prev) = self.last_use.get(&id) {
            self.order.remove(&(prev, id));
            true
        } else {
            if self.last_use.len() >= self.capacity_items {
                if let Some(&victim) = self.order.iter().next() {
                    self.order.remove(&victim);
                    self.last_use.remove(&victim.1);
                }
            }
            false
        };
        self.last_use.insert(id, self.clock);
        self.order.insert((self.clock, id));
        hit
    }

    pub fn resident(&self) -> usize {
        self.last_use.len()
    }

    pub fn capacity_items(&self) -> usize {
        self.capacity_items
    }
}
