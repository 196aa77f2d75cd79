//! Text form and configuration-register image of a specification.
//!
//! Register layout, all little-endian:
//!
//! ```text
//! u32 validity bitmask (bit d = slot d valid)
//! for each of the D slots:
//!     n_max records of { u32 omega, u32 sigma, u32 width }, outermost-first,
//!     unused leading dimensions encoded as (0, 0, 1)
//! ```

use super::{AccessPatternSpec, DimMove};
use std::str::FromStr;
use thiserror::Error;

/// Bytes per `(omega, sigma, width)` record.
pub const RECORD_BYTES: usize = 12;
/// Filler record for dimensions a slot does not use.
pub const UNUSED_MOVE: DimMove = DimMove::new(0, 0, 1);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseSpecError {
    #[error("malformed specification text: {0}")]
    Syntax(String),
    #[error("invalid specification: {0}")]
    Invalid(#[from] super::PatternError),
    #[error("specification has {dims} dimensions, register slots hold {n_max}")]
    TooManyDims { dims: usize, n_max: usize },
    #[error("field value {0} does not fit a 32-bit register")]
    FieldOverflow(u64),
    #[error("register image is {got} bytes, expected {want}")]
    ImageSize { got: usize, want: usize },
    #[error("{0} slots do not fit a 32-bit validity mask")]
    TooManySlots(usize),
}

impl FromStr for AccessPatternSpec {
    type Err = ParseSpecError;

    /// Parses `[(omega,sigma,width), ...]`, outermost-first.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .ok_or_else(|| ParseSpecError::Syntax(format!("expected [...] around {s:?}")))?;
        let mut moves = Vec::new();
        let mut rest = body;
        while !rest.is_empty() {
            let inner = rest
                .strip_prefix('(')
                .ok_or_else(|| ParseSpecError::Syntax(format!("expected '(' at {rest:?}")))?;
            let close = inner
                .find(')')
                .ok_or_else(|| ParseSpecError::Syntax("unclosed tuple".into()))?;
            let fields: Vec<u64> = inner[..close]
                .split(',')
                .map(|f| {
                    f.parse::<u64>()
                        .map_err(|_| ParseSpecError::Syntax(format!("bad integer {f:?}")))
                })
                .collect::<Result<_, _>>()?;
            let [omega, sigma, width] = fields[..] else {
                return Err(ParseSpecError::Syntax(format!(
                    "tuple {:?} needs three fields",
                    &inner[..close]
                )));
            };
            moves.push(DimMove::new(omega, sigma, width));
            rest = &inner[close + 1..];
            if let Some(r) = rest.strip_prefix(',') {
                if r.is_empty() {
                    return Err(ParseSpecError::Syntax("trailing comma".into()));
                }
                rest = r;
            } else if !rest.is_empty() {
                return Err(ParseSpecError::Syntax(format!("expected ',' at {rest:?}")));
            }
        }
        Ok(AccessPatternSpec::from_outermost(moves)?)
    }
}

fn field(v: u64) -> Result<[u8; 4], ParseSpecError> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| ParseSpecError::FieldOverflow(v))
}

/// Encodes one descriptor slot: `n_max` records, outermost-first.
pub fn encode_slot(spec: &AccessPatternSpec, n_max: usize) -> Result<Vec<u8>, ParseSpecError> {
    if spec.dims() > n_max {
        return Err(ParseSpecError::TooManyDims {
            dims: spec.dims(),
            n_max,
        });
    }
    let padding = std::iter::repeat_n(&UNUSED_MOVE, n_max - spec.dims());
    let mut out = Vec::with_capacity(n_max * RECORD_BYTES);
    for m in padding.chain(spec.outermost_first()) {
        out.extend(field(m.omega)?);
        out.extend(field(m.sigma)?);
        out.extend(field(m.width)?);
    }
    Ok(out)
}

/// Decodes one slot. Leading `(0,0,1)` records are dropped (they neither
/// move nor lengthen the walk); at least one dimension is kept.
pub fn decode_slot(bytes: &[u8], n_max: usize) -> Result<AccessPatternSpec, ParseSpecError> {
    let want = n_max * RECORD_BYTES;
    if bytes.len() != want || n_max == 0 {
        return Err(ParseSpecError::ImageSize {
            got: bytes.len(),
            want,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as u64;
    let records: Vec<DimMove> = (0..n_max)
        .map(|r| {
            let b = r * RECORD_BYTES;
            DimMove::new(word(b), word(b + 4), word(b + 8))
        })
        .collect();
    let used = records
        .iter()
        .position(|m| *m != UNUSED_MOVE)
        .unwrap_or(n_max - 1);
    Ok(AccessPatternSpec::from_outermost(records[used..].to_vec())?)
}

/// Encodes a whole configuration port: validity mask, then every slot.
/// Invalid slots are encoded as all-unused records.
pub fn encode_image(
    slots: &[Option<&AccessPatternSpec>],
    n_max: usize,
) -> Result<Vec<u8>, ParseSpecError> {
    if slots.len() > 32 {
        return Err(ParseSpecError::TooManySlots(slots.len()));
    }
    let mask = slots
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some())
        .fold(0u32, |m, (i, _)| m | (1 << i));
    let mut out = mask.to_le_bytes().to_vec();
    let empty = encode_slot(
        &AccessPatternSpec::from_innermost(vec![UNUSED_MOVE])?,
        n_max,
    )?;
    for slot in slots {
        match slot {
            Some(spec) => out.extend(encode_slot(spec, n_max)?),
            None => out.extend(&empty),
        }
    }
    Ok(out)
}

/// Inverse of [`encode_image`] for `d_slots` slots.
pub fn decode_image(
    bytes: &[u8],
    d_slots: usize,
    n_max: usize,
) -> Result<Vec<Option<AccessPatternSpec>>, ParseSpecError> {
    if d_slots > 32 {
        return Err(ParseSpecError::TooManySlots(d_slots));
    }
    let want = 4 + d_slots * n_max * RECORD_BYTES;
    if bytes.len() != want {
        return Err(ParseSpecError::ImageSize {
            got: bytes.len(),
            want,
        });
    }
    let mask = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let slot_bytes = n_max * RECORD_BYTES;
    (0..d_slots)
        .map(|d| {
            if mask & (1 << d) == 0 {
                return Ok(None);
            }
            let start = 4 + d * slot_bytes;
            decode_slot(&bytes[start..start + slot_bytes], n_max).map(Some)
        })
        .collect()
}
