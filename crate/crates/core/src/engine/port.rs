use super::EngineError;
use crate::pattern::{
    decode_slot, encode_image, encode_slot, validate_spec, AccessPatternSpec, TensorDescriptor,
};

/// A registered object's footprint in the reorganized address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewRange {
    /// Byte address `a`; line-aligned.
    pub base: u64,
    pub len: u64,
}

impl ViewRange {
    /// Range covering `spec` padded to whole lines.
    pub fn for_spec(base: u64, spec: &AccessPatternSpec, elem_bytes: u64, line_bytes: u64) -> Self {
        let line_elems = line_bytes / elem_bytes;
        Self {
            base,
            len: spec.padded_length(line_elems) * elem_bytes,
        }
    }

    pub fn end(&self) -> u64 {
        self.base + self.len
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.end()
    }

    pub fn overlaps(&self, other: &ViewRange) -> bool {
        self.base < other.end() && other.base < self.end()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub range: ViewRange,
    pub tensor: TensorDescriptor,
    /// Register-encoded descriptor as written through the port.
    pub record: Vec<u8>,
    /// `record` decoded; what the datapath consumes.
    pub spec: AccessPatternSpec,
}

/// Outcome of presenting a line address to the trapper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trap {
    Accept {
        view_id: usize,
        element_offset: u64,
    },
    /// Not ours: the request takes the normal path (snoop miss).
    Miss,
}

/// Whether a deregistration actually cleared something.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deregistered {
    Cleared,
    /// Slot was not valid; nothing changed.
    NotRegistered,
}

/// Validity and descriptor arrays, plus the address range bound to each slot.
#[derive(Debug, Clone)]
pub struct ConfigPort {
    n_max: usize,
    line_bytes: u64,
    validity: Vec<bool>,
    slots: Vec<Option<Slot>>,
}

impl ConfigPort {
    pub fn new(d_slots: usize, n_max: usize, line_bytes: u64) -> Self {
        Self {
            n_max,
            line_bytes,
            validity: vec![false; d_slots],
            slots: vec![None; d_slots],
        }
    }

    pub fn d_slots(&self) -> usize {
        self.validity.len()
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    pub fn is_valid(&self, view_id: usize) -> bool {
        self.validity.get(view_id).copied().unwrap_or(false)
    }

    pub(crate) fn slot(&self, view_id: usize) -> Option<&Slot> {
        if self.is_valid(view_id) {
            self.slots[view_id].as_ref()
        } else {
            None
        }
    }

    pub fn spec(&self, view_id: usize) -> Option<&AccessPatternSpec> {
        self.slot(view_id).map(|s| &s.spec)
    }

    pub fn tensor(&self, view_id: usize) -> Option<&TensorDescriptor> {
        self.slot(view_id).map(|s| &s.tensor)
    }

    pub fn range(&self, view_id: usize) -> Option<ViewRange> {
        self.slot(view_id).map(|s| s.range)
    }

    /// Claims the lowest free slot for `spec` over `tensor`, reachable at `range`.
    pub fn register_view(
        &mut self,
        spec: &AccessPatternSpec,
        tensor: TensorDescriptor,
        range: ViewRange,
    ) -> Result<usize, EngineError> {
        let view_id = self
            .validity
            .iter()
            .position(|v| !v)
            .ok_or(EngineError::PortFull(self.d_slots()))?;
        if !self.line_bytes.is_multiple_of(tensor.elem_bytes) {
            return Err(EngineError::Config(format!(
                "element size {} does not divide the {}-byte line",
                tensor.elem_bytes, self.line_bytes
            )));
        }
        let violations = validate_spec(spec, &tensor);
        if !violations.is_empty() {
            return Err(EngineError::Config(format!(
                "specification {spec} does not fit tensor: {:?}",
                violations.first().unwrap()
            )));
        }
        let padded = ViewRange::for_spec(range.base, spec, tensor.elem_bytes, self.line_bytes);
        if !range.base.is_multiple_of(self.line_bytes)
            || range.len == 0
            || !range.len.is_multiple_of(self.line_bytes)
            || range.len > padded.len
        {
            return Err(EngineError::Config(format!(
                "range {:#x}+{} must be line-aligned and within the {}-byte view",
                range.base, range.len, padded.len
            )));
        }
        if let Some(other) = (0..self.d_slots())
            .filter_map(|i| self.range(i).map(|r| (i, r)))
            .find(|(_, r)| r.overlaps(&range))
        {
            return Err(EngineError::Config(format!(
                "range {:#x}+{} overlaps view {}",
                range.base, range.len, other.0
            )));
        }
        let record =
            encode_slot(spec, self.n_max).map_err(|e| EngineError::Config(e.to_string()))?;
        let decoded =
            decode_slot(&record, self.n_max).map_err(|e| EngineError::Config(e.to_string()))?;
        self.slots[view_id] = Some(Slot {
            range,
            tensor,
            record,
            spec: decoded,
        });
        self.validity[view_id] = true;
        Ok(view_id)
    }

    pub(crate) fn clear(&mut self, view_id: usize) -> Deregistered {
        if !self.is_valid(view_id) {
            log::warn!("deregistering view {view_id}, which is not registered");
            return Deregistered::NotRegistered;
        }
        self.validity[view_id] = false;
        self.slots[view_id] = None;
        Deregistered::Cleared
    }

    /// Compares a line address against every valid range.
    pub fn trap(&self, byte_addr: u64) -> Result<Trap, EngineError> {
        if !byte_addr.is_multiple_of(self.line_bytes) {
            return Err(EngineError::Unaligned(byte_addr));
        }
        for (view_id, slot) in self.slots.iter().enumerate() {
            if !self.validity[view_id] {
                continue;
            }
            let slot = slot.as_ref().expect("valid slot is populated");
            if slot.range.contains(byte_addr) {
                return Ok(Trap::Accept {
                    view_id,
                    element_offset: (byte_addr - slot.range.base) / slot.tensor.elem_bytes,
                });
            }
        }
        Ok(Trap::Miss)
    }

    /// Full register image: validity mask followed by every slot.
    pub fn image(&self) -> Vec<u8> {
        let specs: Vec<Option<&AccessPatternSpec>> =
            (0..self.d_slots()).map(|i| self.spec(i)).collect();
        encode_image(&specs, self.n_max).expect("registered specs always encode")
    }

    /// Raw descriptor record of a valid slot.
    pub fn record(&self, view_id: usize) -> Option<&[u8]> {
        self.slot(view_id).map(|s| s.record.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::decode_image;
    use proptest::prelude::*;

    fn transpose() -> AccessPatternSpec {
        "[(0,1,4),(0,5,4)]".parse().unwrap()
    }

    fn tensor() -> TensorDescriptor {
        TensorDescriptor::new(0, vec![4, 5], 4).unwrap()
    }

    fn range(base: u64) -> ViewRange {
        ViewRange::for_spec(base, &transpose(), 4, 64)
    }

    #[test]
    fn first_registration_takes_slot_zero() {
        let mut port = ConfigPort::new(2, 4, 64);
        assert_eq!(
            port.register_view(&transpose(), tensor(), range(0x1000)),
            Ok(0)
        );
        assert_eq!(
            port.register_view(&transpose(), tensor(), range(0x2000)),
            Ok(1)
        );
        assert_eq!(
            port.register_view(&transpose(), tensor(), range(0x3000)),
            Err(EngineError::PortFull(2))
        );
        assert_eq!(port.range(0).unwrap().len, 64);
    }

    #[test]
    fn overlapping_ranges_are_rejected() {
        let mut port = ConfigPort::new(4, 4, 64);
        let long: AccessPatternSpec = "[(0,1,20)]".parse().unwrap();
        let r = ViewRange::for_spec(0x1000, &long, 4, 64);
        assert_eq!(r.len, 128);
        port.register_view(&long, tensor(), r).unwrap();
        assert!(matches!(
            port.register_view(&transpose(), tensor(), range(0x1040)),
            Err(EngineError::Config(_))
        ));
        assert_eq!(
            port.register_view(&transpose(), tensor(), range(0x1080)),
            Ok(1)
        );
    }

    #[test]
    fn invalid_registrations() {
        let mut port = ConfigPort::new(4, 4, 64);
        let big: AccessPatternSpec = "[(0,1,21)]".parse().unwrap();
        assert!(matches!(
            port.register_view(&big, tensor(), ViewRange::for_spec(0, &big, 4, 64)),
            Err(EngineError::Config(_))
        ));
        assert!(matches!(
            port.register_view(
                &transpose(),
                tensor(),
                ViewRange {
                    base: 0x1004,
                    len: 64
                }
            ),
            Err(EngineError::Config(_))
        ));
        let deep: AccessPatternSpec = "[(0,1,1),(0,1,1),(0,1,1),(0,1,2),(0,1,2)]".parse().unwrap();
        assert!(matches!(
            port.register_view(&deep, tensor(), ViewRange { base: 0, len: 64 }),
            Err(EngineError::Config(_))
        ));
    }

    #[test]
    fn trap_boundaries() {
        let mut port = ConfigPort::new(4, 4, 64);
        let id = port
            .register_view(&transpose(), tensor(), range(0x1000))
            .unwrap();
        assert_eq!(
            port.trap(0x1000),
            Ok(Trap::Accept {
                view_id: id,
                element_offset: 0
            })
        );
        assert_eq!(port.trap(0x1000 - 64), Ok(Trap::Miss));
        assert_eq!(port.trap(0x1040), Ok(Trap::Miss));
        assert_eq!(port.trap(0x1001), Err(EngineError::Unaligned(0x1001)));
        assert_eq!(port.clear(id), Deregistered::Cleared);
        assert_eq!(port.trap(0x1000), Ok(Trap::Miss));
        assert_eq!(port.clear(id), Deregistered::NotRegistered);
    }

    #[test]
    fn image_round_trips_through_pattern_decoder() {
        let mut port = ConfigPort::new(3, 4, 64);
        port.register_view(&transpose(), tensor(), range(0x1000))
            .unwrap();
        let c3: AccessPatternSpec = "[(1,5,1),(1,1,1),(0,5,2),(0,1,3)]".parse().unwrap();
        port.register_view(&c3, tensor(), ViewRange::for_spec(0x2000, &c3, 4, 64))
            .unwrap();
        port.clear(0);
        let img = port.image();
        assert_eq!(&img[..4], &[0b10, 0, 0, 0]);
        assert_eq!(
            decode_image(&img, 3, 4).unwrap(),
            vec![None, Some(c3), None]
        );
    }

    proptest! {
        /// Registration succeeds exactly when the new interval misses every
        /// live one.
        #[test]
        fn overlap_matches_interval_oracle(
            lines in prop::collection::vec((0u64..64, 1u64..6), 1..12)
        ) {
            let spec: AccessPatternSpec = "[(0,1,96)]".parse().unwrap();
            let t = TensorDescriptor::new(0, vec![96], 1).unwrap();
            let mut port = ConfigPort::new(32, 4, 64);
            let mut live: Vec<(u64, u64)> = Vec::new();
            for (start, n) in lines {
                let (lo, hi) = (start * 64, (start + n.min(2)) * 64);
                let r = ViewRange { base: lo, len: hi - lo };
                let clash = live.iter().any(|&(a, b)| lo < b && a < hi);
                let got = port.register_view(&spec, t.clone(), r);
                prop_assert_eq!(got.is_ok(), !clash);
                if got.is_ok() {
                    live.push((lo, hi));
                }
            }
            // soundness: every accepted address lies in exactly one range
            for addr in (0..70 * 64).step_by(64) {
                let hits = live.iter().filter(|&&(a, b)| addr >= a && addr < b).count();
                let trap = port.trap(addr).unwrap();
                prop_assert_eq!(hits, usize::from(trap != Trap::Miss));
            }
        }
    }
}
