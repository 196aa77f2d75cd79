//! Compilers from named tensor views to access-pattern specifications.
//!
//! Every tensor is dense and row-major. The compiled specification walks
//! the view in its own row-major order, so gathering it yields the view
//! materialized contiguously.

use super::{AccessPatternSpec, DimMove, PatternError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViewOp {
    Identity,
    /// `R x C` matrix viewed as its `C x R` transpose.
    Transpose2D,
    /// Output axis `i` is input axis `axes[i]`.
    Permute(Vec<usize>),
    /// Mode-`k` unfolding (1-based): axis `k` becomes the rows, the remaining
    /// axes collapse into columns in their original order.
    UnfoldMode(usize),
    /// Valid-padding patch matrix of an `H x W` image: one row per output
    /// pixel, one column per kernel tap.
    Im2col {
        kh: u64,
        kw: u64,
    },
    /// `(N, H, W, C)` batch tiled into one `(bh*H, bw*W, C)` image, batch
    /// entry `n` landing at tile `(n / bw, n % bw)`.
    Batch2Space {
        block_h: u64,
        block_w: u64,
    },
    /// Every `strides[i]`-th index along axis `i`, starting at `offsets[i]`.
    /// An empty `offsets` means all zero.
    Slice {
        strides: Vec<u64>,
        offsets: Vec<u64>,
    },
    Submatrix {
        origin: Vec<u64>,
        extent: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("view needs {needed} dimensions, engine supports {n_max}")]
    TooManyDims { needed: usize, n_max: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

fn shape_err<T>(msg: impl Into<String>) -> Result<T, CompileError> {
    Err(CompileError::Shape(msg.into()))
}

/// Row-major element strides for `shape`.
pub fn row_strides(shape: &[u64]) -> Vec<u64> {
    let mut strides = vec![1u64; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn expect_rank(shape: &[u64], rank: usize, what: &str) -> Result<(), CompileError> {
    if shape.len() != rank {
        return shape_err(format!("{what} expects a rank-{rank} shape, got {shape:?}"));
    }
    Ok(())
}

fn permuted(shape: &[u64], axes: &[usize]) -> Result<Vec<DimMove>, CompileError> {
    let mut seen = vec![false; shape.len()];
    if axes.len() != shape.len() {
        return shape_err(format!(
            "{axes:?} is not a permutation of {} axes",
            shape.len()
        ));
    }
    for &a in axes {
        if a >= shape.len() || std::mem::replace(&mut seen[a], true) {
            return shape_err(format!(
                "{axes:?} is not a permutation of {} axes",
                shape.len()
            ));
        }
    }
    let strides = row_strides(shape);
    Ok(axes
        .iter()
        .map(|&a| DimMove::new(0, strides[a], shape[a]))
        .collect())
}

/// Moves in outermost-first order, before any compaction.
fn canonical(view: &ViewOp, shape: &[u64]) -> Result<Vec<DimMove>, CompileError> {
    if shape.is_empty() {
        return shape_err("empty shape");
    }
    if shape.contains(&0) {
        return shape_err(format!("zero extent in {shape:?}"));
    }
    let strides = row_strides(shape);
    match view {
        ViewOp::Identity => Ok(vec![DimMove::new(0, 1, shape.iter().product())]),
        ViewOp::Transpose2D => {
            expect_rank(shape, 2, "transpose")?;
            let (rows, cols) = (shape[0], shape[1]);
            Ok(vec![DimMove::new(0, 1, cols), DimMove::new(0, cols, rows)])
        }
        ViewOp::Permute(axes) => permuted(shape, axes),
        ViewOp::UnfoldMode(k) => {
            if *k == 0 || *k > shape.len() {
                return shape_err(format!("mode {k} out of range for rank {}", shape.len()));
            }
            let mut axes = vec![k - 1];
            axes.extend((0..shape.len()).filter(|&a| a != k - 1));
            permuted(shape, &axes)
        }
        ViewOp::Im2col { kh, kw } => {
            expect_rank(shape, 2, "im2col")?;
            let (h, w) = (shape[0], shape[1]);
            if *kh == 0 || *kw == 0 || *kh > h || *kw > w {
                return shape_err(format!("kernel {kh}x{kw} does not fit {h}x{w}"));
            }
            Ok(vec![
                DimMove::new(0, w, h - kh + 1),
                DimMove::new(0, 1, w - kw + 1),
                DimMove::new(0, w, *kh),
                DimMove::new(0, 1, *kw),
            ])
        }
        ViewOp::Batch2Space { block_h, block_w } => {
            expect_rank(shape, 4, "batch2space")?;
            let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
            if *block_h == 0 || *block_w == 0 || block_h * block_w != n {
                return shape_err(format!(
                    "batch {n} cannot be tiled into {block_h}x{block_w} blocks"
                ));
            }
            let image = h * w * c;
            Ok(vec![
                DimMove::new(0, block_w * image, *block_h),
                DimMove::new(0, w * c, h),
                DimMove::new(0, image, *block_w),
                DimMove::new(0, c, w),
                DimMove::new(0, 1, c),
            ])
        }
        ViewOp::Slice {
            strides: steps,
            offsets,
        } => {
            if steps.len() != shape.len() || !(offsets.is_empty() || offsets.len() == shape.len()) {
                return shape_err("slice strides/offsets must match the tensor rank");
            }
            let mut origin = Vec::new();
            let mut body = Vec::new();
            for (axis, (&extent, &step)) in shape.iter().zip(steps).enumerate() {
                let off = offsets.get(axis).copied().unwrap_or(0);
                if step == 0 || extent % step != 0 {
                    return shape_err(format!(
                        "axis {axis}: extent {extent} is not divisible by stride {step}"
                    ));
                }
                if off >= step {
                    return shape_err(format!(
                        "axis {axis}: offset {off} must be below stride {step}"
                    ));
                }
                if off > 0 {
                    origin.push(DimMove::new(off, strides[axis], 1));
                }
                body.push(DimMove::new(0, step * strides[axis], extent / step));
            }
            origin.extend(body);
            Ok(origin)
        }
        ViewOp::Submatrix { origin, extent } => {
            if origin.len() != shape.len() || extent.len() != shape.len() {
                return shape_err("submatrix origin/extent must match the tensor rank");
            }
            for axis in 0..shape.len() {
                if extent[axis] == 0 || origin[axis] + extent[axis] > shape[axis] {
                    return shape_err(format!(
                        "axis {axis}: window {}+{} exceeds {}",
                        origin[axis], extent[axis], shape[axis]
                    ));
                }
            }
            let mut moves: Vec<DimMove> = origin
                .iter()
                .zip(&strides)
                .map(|(&o, &s)| DimMove::new(o, s, 1))
                .collect();
            moves.extend(
                extent
                    .iter()
                    .zip(&strides)
                    .map(|(&e, &s)| DimMove::new(0, s, e)),
            );
            Ok(moves)
        }
    }
}

/// Rewrites innermost-first moves into an equivalent, shorter list:
/// unit-width moves are folded into a constant, contiguous neighbours are
/// merged, and the constant is re-attached to a move whose stride divides it.
fn compact(moves: &[DimMove]) -> Vec<DimMove> {
    let mut constant = 0u64;
    let mut out: Vec<DimMove> = Vec::with_capacity(moves.len());
    for m in moves {
        if m.width == 1 {
            constant += m.omega * m.sigma;
        } else {
            out.push(*m);
        }
    }

    let mut i = 0;
    while i + 1 < out.len() {
        let (inner, outer) = (out[i], out[i + 1]);
        if inner.omega == 0 && outer.sigma == inner.sigma * inner.width {
            out[i] = DimMove::new(
                outer.omega * inner.width,
                inner.sigma,
                inner.width * outer.width,
            );
            out.remove(i + 1);
        } else {
            i += 1;
        }
    }

    if constant > 0 || out.is_empty() {
        match out
            .iter_mut()
            .rev()
            .find(|m| m.sigma > 0 && constant.is_multiple_of(m.sigma))
        {
            Some(m) => m.omega += constant / m.sigma,
            None => out.push(DimMove::new(constant, 1, 1)),
        }
    }
    out
}

/// Compiles a named view over a row-major tensor of `shape` into a
/// specification of at most `n_max` dimensions.
///
/// The natural form is returned when it fits; otherwise an equivalent
/// compacted form is tried before giving up with
/// [`CompileError::TooManyDims`].
pub fn compile_view(
    view: &ViewOp,
    shape: &[u64],
    n_max: usize,
) -> Result<AccessPatternSpec, CompileError> {
    let mut moves = canonical(view, shape)?;
    moves.reverse();
    if moves.len() > n_max {
        let compacted = compact(&moves);
        if compacted.len() > n_max {
            return Err(CompileError::TooManyDims {
                needed: compacted.len(),
                n_max,
            });
        }
        moves = compacted;
    }
    Ok(AccessPatternSpec::from_innermost(moves)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Walks the spec with plain nested loops (outermost slowest).
    fn gather(spec: &AccessPatternSpec, data: &[u64]) -> Vec<u64> {
        fn walk(moves: &[DimMove], acc: u64, data: &[u64], out: &mut Vec<u64>) {
            match moves.split_last() {
                None => out.push(data[acc as usize]),
                Some((m, rest)) => {
                    for c in m.omega..m.omega + m.width {
                        walk(rest, acc + c * m.sigma, data, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(spec.moves(), 0, data, &mut out);
        out
    }

    fn iota(n: u64) -> Vec<u64> {
        (0..n).collect()
    }

    fn outer(spec: &AccessPatternSpec) -> Vec<(u64, u64, u64)> {
        spec.outermost_first()
            .map(|m| (m.omega, m.sigma, m.width))
            .collect()
    }

    #[test]
    fn identity_is_one_dimension() {
        let s = compile_view(&ViewOp::Identity, &[4, 5], 4).unwrap();
        assert_eq!(outer(&s), vec![(0, 1, 20)]);
    }

    #[test]
    fn transpose_covers_every_element() {
        let s = compile_view(&ViewOp::Transpose2D, &[4, 5], 4).unwrap();
        assert_eq!(outer(&s), vec![(0, 1, 5), (0, 5, 4)]);
        let got = gather(&s, &iota(20));
        assert_eq!(&got[..8], &[0, 5, 10, 15, 1, 6, 11, 16]);
        assert_eq!(got.len(), 20);
    }

    #[test]
    fn submatrix_matches_natural_form() {
        let v = ViewOp::Submatrix {
            origin: vec![1, 1],
            extent: vec![2, 3],
        };
        let s = compile_view(&v, &[4, 5], 4).unwrap();
        assert_eq!(outer(&s), vec![(1, 5, 1), (1, 1, 1), (0, 5, 2), (0, 1, 3)]);
        assert_eq!(gather(&s, &iota(20)), vec![6, 7, 8, 11, 12, 13]);

        // compacted when the natural form does not fit
        let s2 = compile_view(&v, &[4, 5], 2).unwrap();
        assert_eq!(s2.dims(), 2);
        assert_eq!(gather(&s2, &iota(20)), vec![6, 7, 8, 11, 12, 13]);
    }

    #[test]
    fn slice_full_size_shape() {
        let v = ViewOp::Slice {
            strides: vec![2, 4, 2, 64],
            offsets: vec![],
        };
        let s = compile_view(&v, &[64, 64, 64, 512], 4).unwrap();
        assert_eq!(
            outer(&s),
            vec![
                (0, 2 * 64 * 64 * 512, 32),
                (0, 4 * 64 * 512, 16),
                (0, 2 * 512, 32),
                (0, 64, 8)
            ]
        );
    }

    #[test]
    fn slice_matches_strided_loops() {
        let shape = [4u64, 8, 6, 128];
        let (st, off) = ([2u64, 4, 3, 64], [1u64, 3, 0, 5]);
        let v = ViewOp::Slice {
            strides: st.to_vec(),
            offsets: off.to_vec(),
        };
        // the innermost offset is not a multiple of any stride, so the
        // constant needs a dimension of its own
        assert_eq!(
            compile_view(&v, &shape, 4),
            Err(CompileError::TooManyDims {
                needed: 5,
                n_max: 4
            })
        );
        let s = compile_view(&v, &shape, 5).unwrap();
        let rs = row_strides(&shape);
        let mut want = Vec::new();
        for a in (off[0]..shape[0]).step_by(st[0] as usize) {
            for b in (off[1]..shape[1]).step_by(st[1] as usize) {
                for c in (off[2]..shape[2]).step_by(st[2] as usize) {
                    for d in (off[3]..shape[3]).step_by(st[3] as usize) {
                        want.push(a * rs[0] + b * rs[1] + c * rs[2] + d * rs[3]);
                    }
                }
            }
        }
        let n: u64 = shape.iter().product();
        assert_eq!(gather(&s, &iota(n)), want);
    }

    #[test]
    fn im2col_rows_are_patches() {
        let s = compile_view(&ViewOp::Im2col { kh: 2, kw: 2 }, &[3, 4], 4).unwrap();
        let got = gather(&s, &iota(12));
        // output 2x3 pixels, 4 taps each
        assert_eq!(got.len(), 24);
        assert_eq!(&got[..8], &[0, 1, 4, 5, 1, 2, 5, 6]);
        assert_eq!(&got[12..16], &[4, 5, 8, 9]);
    }

    #[test]
    fn permute_nhwc_to_nchw() {
        let shape = [2u64, 3, 4, 3];
        let s = compile_view(&ViewOp::Permute(vec![0, 3, 1, 2]), &shape, 4).unwrap();
        let got = gather(&s, &iota(72));
        let mut want = Vec::new();
        for n in 0..2 {
            for c in 0..3 {
                for h in 0..3 {
                    for w in 0..4 {
                        want.push(((n * 3 + h) * 4 + w) * 3 + c);
                    }
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn unfold_mode_three() {
        let shape = [2u64, 3, 4, 5];
        let s = compile_view(&ViewOp::UnfoldMode(3), &shape, 4).unwrap();
        let got = gather(&s, &iota(120));
        let mut want = Vec::new();
        for k in 0..4 {
            for i in 0..2 {
                for j in 0..3 {
                    for l in 0..5 {
                        want.push(((i * 3 + j) * 4 + k) * 5 + l);
                    }
                }
            }
        }
        assert_eq!(got, want);
        assert!(matches!(
            compile_view(&ViewOp::UnfoldMode(0), &shape, 4),
            Err(CompileError::Shape(_))
        ));
    }

    #[test]
    fn batch2space_tiles_the_batch() {
        let shape = [8u64, 2, 3, 3];
        let v = ViewOp::Batch2Space {
            block_h: 2,
            block_w: 4,
        };
        let s = compile_view(&v, &shape, 4).unwrap();
        assert_eq!(s.dims(), 4);
        let got = gather(&s, &iota(144));
        let mut want = Vec::new();
        for y in 0..4 {
            for x in 0..12 {
                for c in 0..3 {
                    let n = (y / 2) * 4 + x / 3;
                    want.push(((n * 2 + y % 2) * 3 + x % 3) * 3 + c);
                }
            }
        }
        assert_eq!(got, want);
        assert!(matches!(
            compile_view(
                &ViewOp::Batch2Space {
                    block_h: 3,
                    block_w: 3
                },
                &shape,
                4
            ),
            Err(CompileError::Shape(_))
        ));
    }

    #[test]
    fn capability_and_shape_errors() {
        let shape = [2u64, 3, 4, 5, 6];
        let err = compile_view(&ViewOp::Permute(vec![4, 3, 2, 1, 0]), &shape, 4).unwrap_err();
        assert_eq!(
            err,
            CompileError::TooManyDims {
                needed: 5,
                n_max: 4
            }
        );
        let bad = ViewOp::Slice {
            strides: vec![3],
            offsets: vec![],
        };
        assert!(matches!(
            compile_view(&bad, &[10], 4),
            Err(CompileError::Shape(_))
        ));
        assert!(matches!(
            compile_view(&ViewOp::Transpose2D, &[2, 3, 4], 4),
            Err(CompileError::Shape(_))
        ));
        assert!(matches!(
            compile_view(&ViewOp::Permute(vec![0, 0]), &[2, 2], 4),
            Err(CompileError::Shape(_))
        ));
    }

    #[test]
    fn transpose_involution() {
        for (r, c) in [(4u64, 5u64), (1, 7), (16, 3)] {
            let data = iota(r * c);
            let t = gather(
                &compile_view(&ViewOp::Transpose2D, &[r, c], 4).unwrap(),
                &data,
            );
            let back = gather(&compile_view(&ViewOp::Transpose2D, &[c, r], 4).unwrap(), &t);
            assert_eq!(back, data);
        }
    }

    fn arb_moves() -> impl Strategy<Value = Vec<DimMove>> {
        prop::collection::vec((0u64..4, 0u64..12, 1u64..5), 1..=7)
            .prop_map(|v| v.into_iter().map(DimMove::from).collect())
    }

    proptest! {
        #[test]
        fn compaction_preserves_the_walk(moves in arb_moves()) {
            let before = AccessPatternSpec::from_innermost(moves.clone()).unwrap();
            let after = AccessPatternSpec::from_innermost(compact(&moves)).unwrap();
            prop_assert!(after.dims() <= before.dims() + 1);
            let n = before.max_offset().unwrap().max(after.max_offset().unwrap()) + 1;
            prop_assert_eq!(gather(&before, &iota(n)), gather(&after, &iota(n)));
        }
    }
}
