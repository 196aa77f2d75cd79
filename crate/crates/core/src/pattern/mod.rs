//! Access-pattern specifications and the address arithmetic behind them.
//!
//! A specification is an ordered list of per-dimension moves
//! `(omega, sigma, width)`. A linear offset `o` into the reorganized data
//! space is split into one counter per dimension,
//!
//! ```text
//! c_i = omega_i + (o / (w_0 * ... * w_{i-1})) % w_i
//! ```
//!
//! and the element it names in the non-reorganized tensor sits at
//! `sum_i c_i * sigma_i`. All quantities are element counts; the byte view
//! only appears at the engine boundary.
//!
//! Moves are stored innermost-first (index 0 is the fastest-varying
//! dimension). The text form and the register encoding list them
//! outermost-first.

mod encoding;
mod view;

pub use encoding::{
    decode_image, decode_slot, encode_image, encode_slot, ParseSpecError, RECORD_BYTES, UNUSED_MOVE,
};
pub use view::{compile_view, row_strides, CompileError, ViewOp};

use thiserror::Error;

/// Largest logical length for which [`validate_spec`] enumerates every offset.
pub const EXHAUSTIVE_CHECK_LIMIT: u64 = 1 << 20;

/// One dimension of an access pattern: start counter, step and extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DimMove {
    pub omega: u64,
    pub sigma: u64,
    pub width: u64,
}

impl DimMove {
    pub const fn new(omega: u64, sigma: u64, width: u64) -> Self {
        Self {
            omega,
            sigma,
            width,
        }
    }
}

impl From<(u64, u64, u64)> for DimMove {
    fn from((omega, sigma, width): (u64, u64, u64)) -> Self {
        Self::new(omega, sigma, width)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("a specification needs at least one dimension")]
    Empty,
    #[error("dimension {dim} has zero width")]
    ZeroWidth { dim: usize },
    #[error("logical length overflows a 64-bit count")]
    LengthOverflow,
    #[error("offset {offset} is outside the logical length {len}")]
    OffsetOutOfRange { offset: u64, len: u64 },
    #[error("counter vector has {got} entries, specification has {want} dimensions")]
    CounterArity { got: usize, want: usize },
    #[error("request offset {offset} is not aligned to {line_elems}-element lines")]
    Unaligned { offset: u64, line_elems: u64 },
    #[error("line length must be at least one element")]
    EmptyLine,
    #[error("element size {0} is not one of 1, 2, 4, 8")]
    ElemBytes(u64),
    #[error("tensor shape entry {dim} is zero")]
    ZeroExtent { dim: usize },
    #[error("tensor element count overflows")]
    TensorOverflow,
}

/// An ordered set of dimension moves, innermost-first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AccessPatternSpec {
    moves: Vec<DimMove>,
    len: u64,
}

impl AccessPatternSpec {
    /// Builds a specification from moves listed innermost-first.
    pub fn from_innermost(moves: Vec<DimMove>) -> Result<Self, PatternError> {
        if moves.is_empty() {
            return Err(PatternError::Empty);
        }
        let mut len: u64 = 1;
        for (dim, m) in moves.iter().enumerate() {
            if m.width == 0 {
                return Err(PatternError::ZeroWidth { dim });
            }
            len = len
                .checked_mul(m.width)
                .ok_or(PatternError::LengthOverflow)?;
        }
        Ok(Self { moves, len })
    }

    /// Builds a specification from moves listed outermost-first, the order
    /// used by the text form, e.g. `[(0,1,4),(0,5,4)]`.
    pub fn from_outermost<I, M>(moves: I) -> Result<Self, PatternError>
    where
        I: IntoIterator<Item = M>,
        M: Into<DimMove>,
    {
        let mut v: Vec<DimMove> = moves.into_iter().map(Into::into).collect();
        v.reverse();
        Self::from_innermost(v)
    }

    /// Moves, innermost-first.
    pub fn moves(&self) -> &[DimMove] {
        &self.moves
    }

    /// Moves, outermost-first.
    pub fn outermost_first(&self) -> impl Iterator<Item = &DimMove> + '_ {
        self.moves.iter().rev()
    }

    pub fn dims(&self) -> usize {
        self.moves.len()
    }

    /// Product of all widths.
    pub fn logical_length(&self) -> u64 {
        self.len
    }

    /// Largest element offset the pattern can produce,
    /// `sum (omega_i + width_i - 1) * sigma_i`, or `None` on overflow.
    pub fn max_offset(&self) -> Option<u64> {
        self.moves.iter().try_fold(0u64, |acc, m| {
            let top = m.omega.checked_add(m.width - 1)?;
            acc.checked_add(top.checked_mul(m.sigma)?)
        })
    }

    /// Per-dimension counters `c_0..c_N` for a logical offset.
    pub fn dim_counters(&self, offset: u64) -> Result<Vec<u64>, PatternError> {
        if offset >= self.len {
            return Err(PatternError::OffsetOutOfRange {
                offset,
                len: self.len,
            });
        }
        let mut divisor = 1u64;
        Ok(self
            .moves
            .iter()
            .map(|m| {
                let c = m.omega + (offset / divisor) % m.width;
                // cannot overflow: the running product stays below `len`
                divisor *= m.width;
                c
            })
            .collect())
    }

    /// Element offset addressed by a counter vector: `sum c_i * sigma_i`.
    ///
    /// Uses wrapping arithmetic; [`validate_spec`] is the bounds authority.
    pub fn first_offset(&self, counters: &[u64]) -> Result<u64, PatternError> {
        if counters.len() != self.moves.len() {
            return Err(PatternError::CounterArity {
                got: counters.len(),
                want: self.moves.len(),
            });
        }
        Ok(counters.iter().zip(&self.moves).fold(0u64, |acc, (c, m)| {
            acc.wrapping_add(c.wrapping_mul(m.sigma))
        }))
    }

    /// Odometer over the element offsets starting at logical `offset`.
    pub fn cursor(&self, offset: u64) -> Result<OffsetCursor, PatternError> {
        let counters = self.dim_counters(offset)?;
        self.cursor_at(counters, offset)
    }

    /// Odometer resuming from precomputed counters for logical `offset`.
    pub fn cursor_at(&self, counters: Vec<u64>, offset: u64) -> Result<OffsetCursor, PatternError> {
        if offset >= self.len {
            return Err(PatternError::OffsetOutOfRange {
                offset,
                len: self.len,
            });
        }
        let current = self.first_offset(&counters)?;
        Ok(OffsetCursor {
            moves: self.moves.clone(),
            counters,
            current,
            remaining: self.len - offset,
        })
    }

    /// `count` element offsets starting at logical `offset`. Positions past
    /// the logical length are `None` (tail padding).
    pub fn fragment_offsets(
        &self,
        offset: u64,
        count: u64,
    ) -> Result<Vec<Option<u64>>, PatternError> {
        let mut out = Vec::with_capacity(count as usize);
        out.extend(self.cursor(offset)?.take(count as usize).map(Some));
        out.resize(count as usize, None);
        Ok(out)
    }

    /// Logical length rounded up to a whole number of lines.
    pub fn padded_length(&self, line_elems: u64) -> u64 {
        self.len.div_ceil(line_elems) * line_elems
    }
}

impl std::fmt::Display for AccessPatternSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("[")?;
        for (i, m) in self.outermost_first().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({},{},{})", m.omega, m.sigma, m.width)?;
        }
        f.write_str("]")
    }
}

/// Incremental odometer: yields `sum c_i * sigma_i` for consecutive logical
/// offsets, touching only the dimensions that roll over.
#[derive(Debug, Clone)]
pub struct OffsetCursor {
    moves: Vec<DimMove>,
    counters: Vec<u64>,
    current: u64,
    remaining: u64,
}

impl OffsetCursor {
    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    fn advance(&mut self) {
        for (c, m) in self.counters.iter_mut().zip(&self.moves) {
            if *c + 1 < m.omega + m.width {
                *c += 1;
                self.current = self.current.wrapping_add(m.sigma);
                return;
            }
            // roll over to omega
            self.current = self
                .current
                .wrapping_sub((m.width - 1).wrapping_mul(m.sigma));
            *c = m.omega;
        }
    }
}

impl Iterator for OffsetCursor {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        let out = self.current;
        self.remaining -= 1;
        if self.remaining > 0 {
            self.advance();
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

impl ExactSizeIterator for OffsetCursor {}

/// A dense tensor in the non-reorganized data space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorDescriptor {
    /// Element index of the origin within simulated memory.
    pub base: u64,
    pub shape: Vec<u64>,
    pub elem_bytes: u64,
}

impl TensorDescriptor {
    pub fn new(base: u64, shape: Vec<u64>, elem_bytes: u64) -> Result<Self, PatternError> {
        if !matches!(elem_bytes, 1 | 2 | 4 | 8) {
            return Err(PatternError::ElemBytes(elem_bytes));
        }
        if let Some(dim) = shape.iter().position(|&d| d == 0) {
            return Err(PatternError::ZeroExtent { dim });
        }
        shape
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(elem_bytes))
            .ok_or(PatternError::TensorOverflow)?;
        Ok(Self {
            base,
            shape,
            elem_bytes,
        })
    }

    /// Tensor located at a byte address; `byte_addr` must be element-aligned.
    pub fn at_byte_addr(
        byte_addr: u64,
        shape: Vec<u64>,
        elem_bytes: u64,
    ) -> Result<Self, PatternError> {
        debug_assert_eq!(byte_addr % elem_bytes.max(1), 0);
        Self::new(byte_addr / elem_bytes.max(1), shape, elem_bytes)
    }

    pub fn elements(&self) -> u64 {
        self.shape.iter().product()
    }

    pub fn byte_len(&self) -> u64 {
        self.elements() * self.elem_bytes
    }

    pub fn byte_base(&self) -> u64 {
        self.base * self.elem_bytes
    }
}

/// A line-sized read of the reorganized data space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineRequest {
    pub view_id: usize,
    /// Element offset into the reorganized space; a multiple of `line_elems`.
    pub offset: u64,
    pub line_elems: u64,
}

/// One element-sized read of the non-reorganized tensor and where its
/// bytes land in the composed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentDescriptor {
    pub tensor_base: u64,
    /// `None` marks a tail slot past the logical length; it is zero-filled.
    pub elem_offset: Option<u64>,
    pub slot: u32,
}

impl FragmentDescriptor {
    /// Byte address of the fragment, if it is a real read.
    pub fn byte_addr(&self, elem_bytes: u64) -> Option<u64> {
        self.elem_offset
            .map(|o| (self.tensor_base + o) * elem_bytes)
    }
}

/// A reason a specification does not fit a tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Logical position `index` maps to `offset`, outside `0..limit`.
    OffsetOutOfRange { index: u64, offset: u64, limit: u64 },
    /// Too long to enumerate; the analytic maximum already exceeds the tensor.
    MaxOffsetOutOfRange { max_offset: u64, limit: u64 },
    /// Offset arithmetic overflows 64 bits.
    Overflow,
}

/// Checks that every offset the pattern produces lies inside the tensor.
/// An empty result means the pair is valid.
pub fn validate_spec(spec: &AccessPatternSpec, tensor: &TensorDescriptor) -> Vec<Violation> {
    let limit = tensor.elements();
    let Some(max_offset) = spec.max_offset() else {
        return vec![Violation::Overflow];
    };
    if tensor.base.checked_add(max_offset).is_none() {
        return vec![Violation::Overflow];
    }
    if max_offset < limit {
        return Vec::new();
    }
    if spec.logical_length() > EXHAUSTIVE_CHECK_LIMIT {
        return vec![Violation::MaxOffsetOutOfRange { max_offset, limit }];
    }
    spec.cursor(0)
        .expect("logical length is at least one")
        .enumerate()
        .filter(|&(_, o)| o >= limit)
        .map(|(index, offset)| Violation::OffsetOutOfRange {
            index: index as u64,
            offset,
            limit,
        })
        .collect()
}

/// Splits a line request into one fragment per slot.
pub fn decompose_line(
    request: &LineRequest,
    spec: &AccessPatternSpec,
    tensor: &TensorDescriptor,
) -> Result<Vec<FragmentDescriptor>, PatternError> {
    if request.line_elems == 0 {
        return Err(PatternError::EmptyLine);
    }
    if !request.offset.is_multiple_of(request.line_elems) {
        return Err(PatternError::Unaligned {
            offset: request.offset,
            line_elems: request.line_elems,
        });
    }
    Ok(spec
        .fragment_offsets(request.offset, request.line_elems)?
        .into_iter()
        .enumerate()
        .map(|(slot, elem_offset)| FragmentDescriptor {
            tensor_base: tensor.base,
            elem_offset,
            slot: slot as u32,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row_major() -> AccessPatternSpec {
        AccessPatternSpec::from_outermost([(0, 1, 20)]).unwrap()
    }
    fn transpose() -> AccessPatternSpec {
        AccessPatternSpec::from_outermost([(0, 1, 4), (0, 5, 4)]).unwrap()
    }
    fn submatrix() -> AccessPatternSpec {
        AccessPatternSpec::from_outermost([(1, 5, 1), (1, 1, 1), (0, 5, 2), (0, 1, 3)]).unwrap()
    }
    fn reordered() -> AccessPatternSpec {
        AccessPatternSpec::from_outermost([(1, 5, 1), (1, 1, 1), (0, 1, 3), (0, 5, 2)]).unwrap()
    }
    fn matrix_4x5() -> TensorDescriptor {
        TensorDescriptor::new(0, vec![4, 5], 4).unwrap()
    }

    /// Row-major odometer: counters for logical position `o`, counted by
    /// stepping one position at a time from zero.
    fn odometer_counters(spec: &AccessPatternSpec, o: u64) -> Vec<u64> {
        let widths: Vec<u64> = spec.moves().iter().map(|m| m.width).collect();
        let mut k = vec![0u64; widths.len()];
        for _ in 0..o {
            for (ki, w) in k.iter_mut().zip(&widths) {
                *ki += 1;
                if *ki < *w {
                    break;
                }
                *ki = 0;
            }
        }
        k.iter()
            .zip(spec.moves())
            .map(|(ki, m)| ki + m.omega)
            .collect()
    }

    /// Nested loops, outermost dimension slowest.
    fn nested_loops(spec: &AccessPatternSpec) -> Vec<u64> {
        fn walk(moves: &[DimMove], acc: u64, out: &mut Vec<u64>) {
            match moves.split_last() {
                None => out.push(acc),
                Some((outer, rest)) => {
                    for c in outer.omega..outer.omega + outer.width {
                        walk(rest, acc + c * outer.sigma, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(spec.moves(), 0, &mut out);
        out
    }

    #[test]
    fn logical_lengths() {
        assert_eq!(row_major().logical_length(), 20);
        assert_eq!(transpose().logical_length(), 16);
        let single = AccessPatternSpec::from_outermost([(0, 7, 1)]).unwrap();
        assert_eq!(single.logical_length(), 1);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert_eq!(
            AccessPatternSpec::from_innermost(vec![]),
            Err(PatternError::Empty)
        );
        assert_eq!(
            AccessPatternSpec::from_outermost([(0, 1, 3), (0, 1, 0)]),
            Err(PatternError::ZeroWidth { dim: 0 })
        );
        assert_eq!(
            AccessPatternSpec::from_outermost([(0, 1, u64::MAX), (0, 1, 2)]),
            Err(PatternError::LengthOverflow)
        );
    }

    #[test]
    fn validate_examples() {
        let t20 = TensorDescriptor::new(0, vec![20], 1).unwrap();
        assert!(validate_spec(&row_major(), &t20).is_empty());
        let over = AccessPatternSpec::from_outermost([(0, 1, 21)]).unwrap();
        assert_eq!(
            validate_spec(&over, &t20),
            vec![Violation::OffsetOutOfRange {
                index: 20,
                offset: 20,
                limit: 20
            }]
        );
        assert!(validate_spec(&submatrix(), &matrix_4x5()).is_empty());
        assert!(validate_spec(&reordered(), &matrix_4x5()).is_empty());
    }

    #[test]
    fn validate_long_and_overflowing_specs() {
        let t = TensorDescriptor::new(0, vec![1 << 21], 1).unwrap();
        let long = AccessPatternSpec::from_outermost([(0, 2, 1 << 21)]).unwrap();
        assert_eq!(
            validate_spec(&long, &t),
            vec![Violation::MaxOffsetOutOfRange {
                max_offset: (1 << 22) - 2,
                limit: 1 << 21
            }]
        );
        let huge = AccessPatternSpec::from_outermost([(0, u64::MAX, 3)]).unwrap();
        assert_eq!(validate_spec(&huge, &t), vec![Violation::Overflow]);
    }

    #[test]
    fn counters_examples() {
        assert_eq!(transpose().dim_counters(0).unwrap(), vec![0, 0]);
        // frozen from the odometer oracle
        assert_eq!(odometer_counters(&transpose(), 3), vec![3, 0]);
        assert_eq!(odometer_counters(&transpose(), 4), vec![0, 1]);
        assert_eq!(odometer_counters(&submatrix(), 3), vec![0, 1, 1, 1]);
        assert_eq!(transpose().dim_counters(3).unwrap(), vec![3, 0]);
        assert_eq!(transpose().dim_counters(4).unwrap(), vec![0, 1]);
        assert_eq!(submatrix().dim_counters(3).unwrap(), vec![0, 1, 1, 1]);
        assert_eq!(
            transpose().dim_counters(16),
            Err(PatternError::OffsetOutOfRange {
                offset: 16,
                len: 16
            })
        );
    }

    #[test]
    fn first_offset_examples() {
        assert_eq!(transpose().first_offset(&[0, 0]).unwrap(), 0);
        assert_eq!(submatrix().first_offset(&[0, 0, 1, 1]).unwrap(), 6);
        let s = AccessPatternSpec::from_outermost([(0, 9, 3), (0, 4, 2)]).unwrap();
        assert_eq!(s.first_offset(&[0, 0]).unwrap(), 0);
        assert!(matches!(
            s.first_offset(&[0]),
            Err(PatternError::CounterArity { got: 1, want: 2 })
        ));
    }

    #[test]
    fn fragment_offset_examples() {
        let some = |v: &[u64]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
        assert_eq!(
            transpose().fragment_offsets(0, 4).unwrap(),
            some(&[0, 5, 10, 15])
        );
        assert_eq!(
            transpose().fragment_offsets(4, 4).unwrap(),
            some(&[1, 6, 11, 16])
        );
        assert_eq!(
            submatrix().fragment_offsets(0, 4).unwrap(),
            some(&[6, 7, 8, 11])
        );
        // frozen from the nested-loop oracle
        assert_eq!(nested_loops(&reordered())[..4], [6, 11, 7, 12]);
        assert_eq!(
            reordered().fragment_offsets(0, 4).unwrap(),
            some(&[6, 11, 7, 12])
        );
    }

    #[test]
    fn decompose_examples() {
        let t = TensorDescriptor::new(0, vec![20], 1).unwrap();
        let req = LineRequest {
            view_id: 0,
            offset: 0,
            line_elems: 4,
        };
        let frags = decompose_line(&req, &row_major(), &t).unwrap();
        assert_eq!(
            frags
                .iter()
                .map(|f| (f.slot, f.elem_offset))
                .collect::<Vec<_>>(),
            vec![(0, Some(0)), (1, Some(1)), (2, Some(2)), (3, Some(3))]
        );
        let frags = decompose_line(&req, &transpose(), &matrix_4x5()).unwrap();
        assert_eq!(
            frags
                .iter()
                .map(|f| f.elem_offset.unwrap())
                .collect::<Vec<_>>(),
            vec![0, 5, 10, 15]
        );
    }

    #[test]
    fn decompose_tail_padding() {
        let t = TensorDescriptor::new(100, vec![20], 1).unwrap();
        let req = LineRequest {
            view_id: 0,
            offset: 16,
            line_elems: 16,
        };
        let frags = decompose_line(&req, &row_major(), &t).unwrap();
        assert_eq!(frags.len(), 16);
        assert!(frags[..4].iter().all(|f| f.elem_offset.is_some()));
        assert!(frags[4..].iter().all(|f| f.elem_offset.is_none()));
        assert_eq!(frags[3].byte_addr(1), Some(119));
        assert_eq!(frags[3].tensor_base, 100);

        let beyond = LineRequest { offset: 32, ..req };
        assert!(matches!(
            decompose_line(&beyond, &row_major(), &t),
            Err(PatternError::OffsetOutOfRange { .. })
        ));
        let unaligned = LineRequest { offset: 3, ..req };
        assert!(matches!(
            decompose_line(&unaligned, &row_major(), &t),
            Err(PatternError::Unaligned { .. })
        ));
    }

    #[test]
    fn display_is_outermost_first() {
        assert_eq!(transpose().to_string(), "[(0,1,4),(0,5,4)]");
        assert_eq!(submatrix().to_string(), "[(1,5,1),(1,1,1),(0,5,2),(0,1,3)]");
        assert_eq!(transpose().moves()[0], DimMove::new(0, 5, 4));
    }

    fn arb_spec() -> impl Strategy<Value = AccessPatternSpec> {
        prop::collection::vec((0u64..6, 0u64..18, 1u64..10), 1..=4).prop_map(|v| {
            AccessPatternSpec::from_innermost(v.into_iter().map(DimMove::from).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cursor_matches_nested_loops(spec in arb_spec()) {
            let walked: Vec<u64> = spec.cursor(0).unwrap().collect();
            prop_assert_eq!(walked, nested_loops(&spec));
        }

        #[test]
        fn fragments_match_counters(spec in arb_spec(), start in 0u64..4096, count in 1u64..40) {
            let start = start % spec.logical_length();
            let frags = spec.fragment_offsets(start, count).unwrap();
            prop_assert_eq!(frags.len() as u64, count);
            for (j, f) in frags.iter().enumerate() {
                let o = start + j as u64;
                if o < spec.logical_length() {
                    let c = spec.dim_counters(o).unwrap();
                    prop_assert_eq!(c.clone(), odometer_counters(&spec, o));
                    prop_assert_eq!(*f, Some(spec.first_offset(&c).unwrap()));
                } else {
                    prop_assert_eq!(*f, None);
                }
            }
        }

        #[test]
        fn identity_lines_are_contiguous(len in 1u64..500, line in 1u64..17) {
            let spec = AccessPatternSpec::from_outermost([(0, 1, len)]).unwrap();
            let t = TensorDescriptor::new(0, vec![len], 1).unwrap();
            let mut o = 0;
            while o < len {
                let req = LineRequest { view_id: 0, offset: o, line_elems: line };
                let frags = decompose_line(&req, &spec, &t).unwrap();
                for f in &frags {
                    let pos = o + f.slot as u64;
                    prop_assert_eq!(f.elem_offset, (pos < len).then_some(pos));
                }
                prop_assert_eq!(&frags, &decompose_line(&req, &spec, &t).unwrap());
                o += line;
            }
        }

        #[test]
        fn validate_agrees_with_enumeration(spec in arb_spec(), extra in 0u64..200) {
            let limit = 1 + extra;
            let t = TensorDescriptor::new(0, vec![limit], 1).unwrap();
            let bad = spec.cursor(0).unwrap().filter(|&o| o >= limit).count();
            prop_assert_eq!(validate_spec(&spec, &t).len(), bad);
        }
    }
}
