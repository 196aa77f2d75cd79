use crate::pattern::AccessPatternSpec;
use thiserror::Error;

/// Largest view the oracle will materialize by default.
pub const ORACLE_BOUND: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("view of {len} elements exceeds the oracle bound of {bound}")]
    Bound { len: u64, bound: u64 },
    #[error("element {index} is outside the {len}-element tensor")]
    OutOfRange { index: u64, len: usize },
}

/// Materializes a view by brute force: one loop per dimension, outermost
/// slowest, reading `data[base + sum c_i * sigma_i]`.
pub fn oracle_gather<T: Copy>(
    spec: &AccessPatternSpec,
    base: u64,
    data: &[T],
) -> Result<Vec<T>, OracleError> {
    oracle_gather_bounded(spec, base, data, ORACLE_BOUND)
}

pub fn oracle_gather_bounded<T: Copy>(
    spec: &AccessPatternSpec,
    base: u64,
    data: &[T],
    bound: u64,
) -> Result<Vec<T>, OracleError> {
    let len = spec.logical_length();
    if len > bound {
        return Err(OracleError::Bound { len, bound });
    }
    let moves: Vec<(u64, u64, u64)> = spec
        .outermost_first()
        .map(|m| (m.omega, m.sigma, m.width))
        .collect();
    let mut out = Vec::with_capacity(len as usize);
    walk(&moves, base, data, &mut out)?;
    Ok(out)
}

fn walk<T: Copy>(
    moves: &[(u64, u64, u64)],
    at: u64,
    data: &[T],
    out: &mut Vec<T>,
) -> Result<(), OracleError> {
    let Some((&(omega, sigma, width), inner)) = moves.split_first() else {
        let v = data.get(at as usize).ok_or(OracleError::OutOfRange {
            index: at,
            len: data.len(),
        })?;
        out.push(*v);
        return Ok(());
    };
    for c in omega..omega + width {
        walk(inner, at + c * sigma, data, out)?;
    }
    Ok(())
}
