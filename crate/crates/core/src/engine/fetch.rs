use crate::pattern::FragmentDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchTableEntry {
    pub txn_id: usize,
    pub descriptor: FragmentDescriptor,
    pub rob_index: usize,
    pub issue_cycle: u64,
    pub byte_addr: u64,
}

/// Transaction-ID allocation table of the fetch unit.
#[derive(Debug, Clone)]
pub struct FetchTable {
    entries: Vec<Option<FetchTableEntry>>,
    live: usize,
}

impl FetchTable {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: vec![None; capacity],
            live: 0,
        }
    }

    pub fn live(&self) -> usize {
        self.live
    }

    pub fn is_full(&self) -> bool {
        self.live == self.entries.len()
    }

    /// Takes the lowest free ID.
    pub fn allocate(
        &mut self,
        descriptor: FragmentDescriptor,
        rob_index: usize,
        issue_cycle: u64,
        byte_addr: u64,
    ) -> Option<usize> {
        let txn_id = self.entries.iter().position(Option::is_none)?;
        self.entries[txn_id] = Some(FetchTableEntry {
            txn_id,
            descriptor,
            rob_index,
            issue_cycle,
            byte_addr,
        });
        self.live += 1;
        Some(txn_id)
    }

    pub fn get(&self, txn_id: usize) -> Option<&FetchTableEntry> {
        self.entries.get(txn_id).and_then(Option::as_ref)
    }

    pub fn release(&mut self, txn_id: usize) -> Option<FetchTableEntry> {
        let e = self.entries.get_mut(txn_id)?.take()?;
        self.live -= 1;
        Some(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FetchTableEntry> + '_ {
        self.entries.iter().flatten()
    }
}
