//! The seven workloads. Each one places its inputs, runs the baseline or
//! engine-assisted variant against the memory system, reads the output back
//! and computes the expected output on the host with plain index math.

use super::{BenchError, Variant, Workload};
use crate::memsys::{MappedView, MemSystem};
use crate::pattern::{compile_view, TensorDescriptor, ViewOp};

/// Output read back from simulated memory next to the host-side expectation.
#[derive(Debug, Clone)]
pub(super) struct Outcome {
    pub output: Vec<u64>,
    pub expected: Vec<u64>,
    pub elem_bytes: u64,
}

/// Deterministic input fill: element `i` holds `(i + seed) mod 251`.
pub fn fill(len: u64, seed: u64) -> Vec<u64> {
    (0..len).map(|i| (i + seed % 251) % 251).collect()
}

fn mask(v: u64, eb: u64) -> u64 {
    if eb >= 8 {
        v
    } else {
        v & ((1u64 << (8 * eb)) - 1)
    }
}

fn scaled(full: u64, scale: u64, what: &str) -> Result<u64, BenchError> {
    if scale == 0 || !full.is_multiple_of(scale) || full / scale < 2 {
        return Err(BenchError::Scale(format!(
            "{what} of {full} cannot be divided by scale {scale}"
        )));
    }
    Ok(full / scale)
}

#[derive(Debug, Clone, Copy)]
struct Buf {
    addr: u64,
    eb: u64,
}

impl Buf {
    fn get(self, ms: &mut MemSystem, i: u64) -> Result<u64, BenchError> {
        Ok(ms.read_elem(self.addr + i * self.eb, self.eb)?)
    }

    fn set(self, ms: &mut MemSystem, i: u64, v: u64) -> Result<(), BenchError> {
        Ok(ms.write_elem(self.addr + i * self.eb, self.eb, v)?)
    }

    /// `count` consecutive elements in one access.
    fn get_run(self, ms: &mut MemSystem, start: u64, count: u64) -> Result<Vec<u64>, BenchError> {
        let eb = self.eb as usize;
        let mut bytes = vec![0u8; count as usize * eb];
        ms.read(self.addr + start * self.eb, &mut bytes)?;
        Ok(bytes
            .chunks(eb)
            .map(|c| {
                let mut w = [0u8; 8];
                w[..eb].copy_from_slice(c);
                u64::from_le_bytes(w)
            })
            .collect())
    }
}

fn place(ms: &mut MemSystem, tag: &str, values: &[u64], eb: u64) -> Result<Buf, BenchError> {
    let addr = ms.alloc(values.len() as u64 * eb, tag)?;
    let bytes = ms.host_bytes_mut(addr, values.len() * eb as usize)?;
    for (chunk, v) in bytes.chunks_mut(eb as usize).zip(values) {
        chunk.copy_from_slice(&v.to_le_bytes()[..eb as usize]);
    }
    Ok(Buf { addr, eb })
}

fn zeroed(ms: &mut MemSystem, tag: &str, len: u64, eb: u64) -> Result<Buf, BenchError> {
    Ok(Buf {
        addr: ms.alloc(len * eb, tag)?,
        eb,
    })
}

fn read_back(ms: &MemSystem, buf: Buf, len: u64) -> Result<Vec<u64>, BenchError> {
    let eb = buf.eb as usize;
    Ok(ms
        .host_bytes(buf.addr, len as usize * eb)?
        .chunks(eb)
        .map(|c| {
            let mut w = [0u8; 8];
            w[..eb].copy_from_slice(c);
            u64::from_le_bytes(w)
        })
        .collect())
}

fn map(
    ms: &mut MemSystem,
    op: &ViewOp,
    src: Buf,
    shape: &[u64],
) -> Result<(Buf, MappedView), BenchError> {
    let n_max = ms
        .engine()
        .ok_or(crate::memsys::MemError::NoEngine)?
        .config()
        .n_max;
    let spec = compile_view(op, shape, n_max)?;
    let tensor = TensorDescriptor::at_byte_addr(src.addr, shape.to_vec(), src.eb)?;
    let view = ms.map_view(&spec, tensor)?;
    Ok((
        Buf {
            addr: view.range.base,
            eb: src.eb,
        },
        view,
    ))
}

const KH: u64 = 2;
const KW: u64 = 2;

fn weights(seed: u64) -> Vec<u64> {
    fill(KH * KW, seed + 7)
}

/// Valid 2x2 convolution of an `h x w` plane whose element `(y, x)` sits at
/// index `base + (y * w + x) * step` of `src`; results go to `dst` row-major
/// from `dst_base`.
#[allow(clippy::too_many_arguments)]
fn conv_plane(
    ms: &mut MemSystem,
    src: Buf,
    base: u64,
    step: u64,
    h: u64,
    w: u64,
    wts: &[u64],
    dst: Buf,
    dst_base: u64,
) -> Result<(), BenchError> {
    let (oh, ow) = (h - KH + 1, w - KW + 1);
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0u64;
            for i in 0..KH {
                for j in 0..KW {
                    let v = src.get(ms, base + ((y + i) * w + x + j) * step)?;
                    acc = acc.wrapping_add(v.wrapping_mul(wts[(i * KW + j) as usize]));
                }
            }
            dst.set(ms, dst_base + y * ow + x, acc)?;
        }
    }
    Ok(())
}

fn conv_host(h: u64, w: u64, wts: &[u64], at: impl Fn(u64, u64) -> u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(((h - 1) * (w - 1)) as usize);
    for y in 0..h - KH + 1 {
        for x in 0..w - KW + 1 {
            let mut acc = 0u64;
            for i in 0..KH {
                for j in 0..KW {
                    acc =
                        acc.wrapping_add(at(y + i, x + j).wrapping_mul(wts[(i * KW + j) as usize]));
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Patch-matrix times kernel vector, reading the `P x K` matrix from `m`.
fn gemv(ms: &mut MemSystem, m: Buf, rows: u64, wts: &[u64], out: Buf) -> Result<(), BenchError> {
    let k = wts.len() as u64;
    for r in 0..rows {
        let mut acc = 0u64;
        for (t, wt) in wts.iter().enumerate() {
            acc = acc.wrapping_add(m.get(ms, r * k + t as u64)?.wrapping_mul(*wt));
        }
        out.set(ms, r, acc)?;
    }
    Ok(())
}

pub(super) fn run(
    workload: Workload,
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
) -> Result<Outcome, BenchError> {
    match workload {
        Workload::Im2col => im2col(variant, scale, seed, ms, false),
        Workload::Conv2d => im2col(variant, scale, seed, ms, true),
        Workload::Permutation => permutation(variant, scale, seed, ms),
        Workload::Unfold => unfold(variant, scale, seed, ms),
        Workload::Batch2space => batch2space(variant, scale, seed, ms),
        Workload::Matmul => matmul(variant, scale, seed, ms),
        Workload::Slicing => slicing(variant, scale, seed, ms),
    }
}

/// 1024x1024 image, 2x2 kernel. Im2col's baseline expands the patch matrix;
/// Conv2D's baseline convolves directly. Both engine variants read the patch
/// matrix as a view.
fn im2col(
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
    direct: bool,
) -> Result<Outcome, BenchError> {
    const EB: u64 = 4;
    let h = scaled(1024, scale, "image side")?;
    let w = h;
    let (oh, ow) = (h - KH + 1, w - KW + 1);
    let rows = oh * ow;
    let taps = KH * KW;
    let host_in = fill(h * w, seed);
    let wts = weights(seed);
    let input = place(ms, "input", &host_in, EB)?;
    let out = zeroed(ms, "output", rows, EB)?;
    match (variant, direct) {
        (Variant::Baseline, true) => conv_plane(ms, input, 0, 1, h, w, &wts, out, 0)?,
        (Variant::Baseline, false) => {
            let cols = zeroed(ms, "patches", rows * taps, EB)?;
            for r in 0..rows {
                let (y, x) = (r / ow, r % ow);
                for i in 0..KH {
                    for j in 0..KW {
                        let v = input.get(ms, (y + i) * w + x + j)?;
                        cols.set(ms, r * taps + i * KW + j, v)?;
                    }
                }
            }
            gemv(ms, cols, rows, &wts, out)?;
            ms.free("patches")?;
        }
        (Variant::Tme, _) => {
            let (view, mapped) = map(ms, &ViewOp::Im2col { kh: KH, kw: KW }, input, &[h, w])?;
            gemv(ms, view, rows, &wts, out)?;
            ms.unmap_view(mapped)?;
        }
    }
    let expected = conv_host(h, w, &wts, |y, x| host_in[(y * w + x) as usize]);
    Ok(Outcome {
        output: read_back(ms, out, rows)?,
        expected,
        elem_bytes: EB,
    })
}

/// NHWC batch (8, 512, 512, 3) permuted to NCHW, then a 2x2 convolution of
/// every (n, c) plane.
fn permutation(
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
) -> Result<Outcome, BenchError> {
    const EB: u64 = 4;
    let (n, c) = (8u64, 3u64);
    let h = scaled(512, scale, "image side")?;
    let w = h;
    let plane_out = (h - 1) * (w - 1);
    let host_in = fill(n * h * w * c, seed);
    let wts = weights(seed);
    let input = place(ms, "input", &host_in, EB)?;
    let out = zeroed(ms, "output", n * c * plane_out, EB)?;
    let (src, mapped) = match variant {
        Variant::Baseline => {
            let nchw = zeroed(ms, "nchw", n * c * h * w, EB)?;
            for b in 0..n {
                for ch in 0..c {
                    for y in 0..h {
                        for x in 0..w {
                            let v = input.get(ms, ((b * h + y) * w + x) * c + ch)?;
                            nchw.set(ms, ((b * c + ch) * h + y) * w + x, v)?;
                        }
                    }
                }
            }
            (nchw, None)
        }
        Variant::Tme => {
            let (v, m) = map(ms, &ViewOp::Permute(vec![0, 3, 1, 2]), input, &[n, h, w, c])?;
            (v, Some(m))
        }
    };
    for p in 0..n * c {
        conv_plane(ms, src, p * h * w, 1, h, w, &wts, out, p * plane_out)?;
    }
    match mapped {
        Some(m) => ms.unmap_view(m)?,
        None => ms.free("nchw")?,
    }
    let mut expected = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            expected.extend(conv_host(h, w, &wts, |y, x| {
                host_in[(((b * h + y) * w + x) * c + ch) as usize]
            }));
        }
    }
    Ok(Outcome {
        output: read_back(ms, out, n * c * plane_out)?,
        expected,
        elem_bytes: EB,
    })
}

/// Mode-3 unfolding of a (8, 64, 64, 128) tensor, multiplied elementwise
/// with a second matrix of the unfolded shape.
fn unfold(
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
) -> Result<Outcome, BenchError> {
    const EB: u64 = 4;
    let d0 = 8u64;
    let d1 = scaled(64, scale, "unfold extent")?;
    let d2 = d1;
    let d3 = scaled(128, scale, "unfold extent")?;
    let (rows, cols) = (d2, d0 * d1 * d3);
    let host_x1 = fill(d0 * d1 * d2 * d3, seed);
    let host_x2 = fill(rows * cols, seed + 1);
    let x1 = place(ms, "x1", &host_x1, EB)?;
    let x2 = place(ms, "x2", &host_x2, EB)?;
    let out = zeroed(ms, "output", rows * cols, EB)?;
    let (src, mapped) = match variant {
        Variant::Baseline => {
            let m = zeroed(ms, "unfolded", rows * cols, EB)?;
            for r in 0..rows {
                for n in 0..d0 {
                    for y in 0..d1 {
                        for ch in 0..d3 {
                            let v = x1.get(ms, ((n * d1 + y) * d2 + r) * d3 + ch)?;
                            m.set(ms, r * cols + (n * d1 + y) * d3 + ch, v)?;
                        }
                    }
                }
            }
            (m, None)
        }
        Variant::Tme => {
            let (v, m) = map(ms, &ViewOp::UnfoldMode(3), x1, &[d0, d1, d2, d3])?;
            (v, Some(m))
        }
    };
    for i in 0..rows * cols {
        let v = src.get(ms, i)?.wrapping_mul(x2.get(ms, i)?);
        out.set(ms, i, v)?;
    }
    match mapped {
        Some(m) => ms.unmap_view(m)?,
        None => ms.free("unfolded")?,
    }
    let mut expected = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for n in 0..d0 {
            for y in 0..d1 {
                for ch in 0..d3 {
                    let a = host_x1[(((n * d1 + y) * d2 + r) * d3 + ch) as usize];
                    let col = (n * d1 + y) * d3 + ch;
                    expected.push(a.wrapping_mul(host_x2[(r * cols + col) as usize]));
                }
            }
        }
    }
    Ok(Outcome {
        output: read_back(ms, out, rows * cols)?,
        expected,
        elem_bytes: EB,
    })
}

/// Eight (64, 64, 3) images tiled 2x4 into one (128, 256, 3) image, then a
/// 2x2 convolution per channel.
fn batch2space(
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
) -> Result<Outcome, BenchError> {
    const EB: u64 = 4;
    let (n, c, bh, bw) = (8u64, 3u64, 2u64, 4u64);
    let h = scaled(64, scale, "image side")?;
    let w = h;
    let (mh, mw) = (bh * h, bw * w);
    let plane_out = (mh - 1) * (mw - 1);
    let host_in = fill(n * h * w * c, seed);
    let wts = weights(seed);
    let input = place(ms, "input", &host_in, EB)?;
    let out = zeroed(ms, "output", c * plane_out, EB)?;
    let src_index = |y: u64, x: u64, ch: u64| {
        let b = (y / h) * bw + x / w;
        ((b * h + y % h) * w + x % w) * c + ch
    };
    let (src, mapped) = match variant {
        Variant::Baseline => {
            let mosaic = zeroed(ms, "mosaic", mh * mw * c, EB)?;
            for y in 0..mh {
                for x in 0..mw {
                    for ch in 0..c {
                        let v = input.get(ms, src_index(y, x, ch))?;
                        mosaic.set(ms, (y * mw + x) * c + ch, v)?;
                    }
                }
            }
            (mosaic, None)
        }
        Variant::Tme => {
            let op = ViewOp::Batch2Space {
                block_h: bh,
                block_w: bw,
            };
            let (v, m) = map(ms, &op, input, &[n, h, w, c])?;
            (v, Some(m))
        }
    };
    for ch in 0..c {
        conv_plane(ms, src, ch, c, mh, mw, &wts, out, ch * plane_out)?;
    }
    match mapped {
        Some(m) => ms.unmap_view(m)?,
        None => ms.free("mosaic")?,
    }
    let mut expected = Vec::new();
    for ch in 0..c {
        expected.extend(conv_host(mh, mw, &wts, |y, x| {
            host_in[src_index(y, x, ch) as usize]
        }));
    }
    Ok(Outcome {
        output: read_back(ms, out, c * plane_out)?,
        expected,
        elem_bytes: EB,
    })
}

/// Block size at which the recursive multiply switches to plain loops.
pub const MATMUL_BASE: u64 = 64;

struct Mm {
    a: Buf,
    bt: Buf,
    c: Buf,
    n: u64,
    base: u64,
}

impl Mm {
    /// `C[i0.., j0..] += A[i0.., k0..] * B[k0.., j0..]` over `size`-square
    /// blocks, reading B through its transpose `bt`.
    fn rec(
        &self,
        ms: &mut MemSystem,
        i0: u64,
        j0: u64,
        k0: u64,
        size: u64,
    ) -> Result<(), BenchError> {
        if size <= self.base {
            for i in i0..i0 + size {
                let arow = self.a.get_run(ms, i * self.n + k0, size)?;
                for j in j0..j0 + size {
                    let brow = self.bt.get_run(ms, j * self.n + k0, size)?;
                    let dot = arow
                        .iter()
                        .zip(&brow)
                        .fold(0u64, |acc, (x, y)| acc.wrapping_add(x.wrapping_mul(*y)));
                    let prev = self.c.get(ms, i * self.n + j)?;
                    self.c.set(ms, i * self.n + j, prev.wrapping_add(dot))?;
                }
            }
            return Ok(());
        }
        let h = size / 2;
        for (di, dj) in [(0, 0), (0, h), (h, 0), (h, h)] {
            for dk in [0, h] {
                self.rec(ms, i0 + di, j0 + dj, k0 + dk, h)?;
            }
        }
        Ok(())
    }
}

/// Square matrix product by recursive halving; the right operand is
/// consumed transposed.
fn matmul(
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
) -> Result<Outcome, BenchError> {
    const EB: u64 = 4;
    let n = scaled(2048, scale, "matrix side")?;
    let host_a = fill(n * n, seed);
    let host_b = fill(n * n, seed + 1);
    let a = place(ms, "a", &host_a, EB)?;
    let b = place(ms, "b", &host_b, EB)?;
    let c = zeroed(ms, "c", n * n, EB)?;
    let (bt, mapped) = match variant {
        Variant::Baseline => {
            let bt = zeroed(ms, "bt", n * n, EB)?;
            for j in 0..n {
                for k in 0..n {
                    let v = b.get(ms, k * n + j)?;
                    bt.set(ms, j * n + k, v)?;
                }
            }
            (bt, None)
        }
        Variant::Tme => {
            let (v, m) = map(ms, &ViewOp::Transpose2D, b, &[n, n])?;
            (v, Some(m))
        }
    };
    let mm = Mm {
        a,
        bt,
        c,
        n,
        base: MATMUL_BASE.min(n),
    };
    mm.rec(ms, 0, 0, 0, n)?;
    match mapped {
        Some(m) => ms.unmap_view(m)?,
        None => ms.free("bt")?,
    }
    let mut expected = vec![0u64; (n * n) as usize];
    for i in 0..n {
        for k in 0..n {
            let x = host_a[(i * n + k) as usize];
            for j in 0..n {
                let e = &mut expected[(i * n + j) as usize];
                *e = e.wrapping_add(x.wrapping_mul(host_b[(k * n + j) as usize]));
            }
        }
    }
    Ok(Outcome {
        output: read_back(ms, c, n * n)?,
        expected,
        elem_bytes: EB,
    })
}

/// Slicing strides along the four axes.
pub const SLICE_STRIDES: [u64; 4] = [2, 4, 2, 64];

/// Byte tensor of shape `(64, 64, 64, 512)` (leading three axes scaled),
/// sliced with strides (2, 4, 2, 64) and multiplied elementwise with a
/// second tensor of the sliced shape. Returns the tensor and sliced shapes.
pub fn slicing_shapes(scale: u64) -> Result<([u64; 4], [u64; 4]), BenchError> {
    let s = scaled(64, scale, "slicing extent")?;
    let full = [s, s, s, 512];
    let mut sliced = [0; 4];
    for i in 0..4 {
        if full[i] % SLICE_STRIDES[i] != 0 {
            return Err(BenchError::Scale(format!(
                "slicing extent {} is not a multiple of stride {}",
                full[i], SLICE_STRIDES[i]
            )));
        }
        sliced[i] = full[i] / SLICE_STRIDES[i];
    }
    Ok((full, sliced))
}

fn slicing(
    variant: Variant,
    scale: u64,
    seed: u64,
    ms: &mut MemSystem,
) -> Result<Outcome, BenchError> {
    const EB: u64 = 1;
    let (full, sl) = slicing_shapes(scale)?;
    let total: u64 = sl.iter().product();
    let host_r = fill(full.iter().product(), seed);
    let host_s = fill(total, seed + 1);
    let r = place(ms, "r", &host_r, EB)?;
    let sec = place(ms, "secondary", &host_s, EB)?;
    let out = zeroed(ms, "output", total, EB)?;
    let r_index = |i: [u64; 4]| {
        let mut idx = 0;
        for d in 0..4 {
            idx = idx * full[d] + i[d] * SLICE_STRIDES[d];
        }
        idx
    };
    let mut k = 0;
    match variant {
        Variant::Baseline => {
            for a in 0..sl[0] {
                for b in 0..sl[1] {
                    for c in 0..sl[2] {
                        for d in 0..sl[3] {
                            let v = r.get(ms, r_index([a, b, c, d]))?;
                            let prod = v.wrapping_mul(sec.get(ms, k)?);
                            out.set(ms, k, prod)?;
                            k += 1;
                        }
                    }
                }
            }
        }
        Variant::Tme => {
            let op = ViewOp::Slice {
                strides: SLICE_STRIDES.to_vec(),
                offsets: Vec::new(),
            };
            let (view, mapped) = map(ms, &op, r, &full)?;
            for k in 0..total {
                let prod = view.get(ms, k)?.wrapping_mul(sec.get(ms, k)?);
                out.set(ms, k, prod)?;
            }
            ms.unmap_view(mapped)?;
        }
    }
    let mut expected = Vec::with_capacity(total as usize);
    for a in 0..sl[0] {
        for b in 0..sl[1] {
            for c in 0..sl[2] {
                for d in 0..sl[3] {
                    let i = expected.len();
                    expected.push(host_r[r_index([a, b, c, d]) as usize].wrapping_mul(host_s[i]));
                }
            }
        }
    }
    Ok(Outcome {
        output: read_back(ms, out, total)?,
        expected: expected.into_iter().map(|v| mask(v, EB)).collect(),
        elem_bytes: EB,
    })
}

pub(super) fn masked(values: Vec<u64>, eb: u64) -> Vec<u64> {
    values.into_iter().map(|v| mask(v, eb)).collect()
}
