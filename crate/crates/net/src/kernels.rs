//! im2col / col2im lowering and the GEMM wrapper behind every convolution.

/// Upper bound on the number of floats in one column buffer. Large images
/// are processed in column chunks so memory stays flat.
const COL_BUDGET: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Reflect,
}

/// Maps a padded coordinate onto the source axis, or `None` for zero padding.
#[inline]
fn source_index(i: isize, n: usize, mode: PadMode) -> Option<usize> {
    if i >= 0 && (i as usize) < n {
        return Some(i as usize);
    }
    match mode {
        PadMode::Zero => None,
        PadMode::Reflect if n == 1 => Some(0),
        PadMode::Reflect => {
            let period = 2 * (n as isize - 1);
            let m = i.rem_euclid(period);
            Some(if m >= n as isize {
                (period - m) as usize
            } else {
                m as usize
            })
        }
    }
}

/// Sliding-window geometry. The "image side" is `[n, c, h, w]`; each window
/// position is one column, `n * oh * ow` columns in all.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub mode: PadMode,
    pub oh: usize,
    pub ow: usize,
}

impl Geom {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        mode: PadMode,
    ) -> Option<Self> {
        let ph = h + 2 * pad;
        let pw = w + 2 * pad;
        if ph < k || pw < k {
            return None;
        }
        Some(Self {
            n,
            c,
            h,
            w,
            k,
            stride,
            pad,
            mode,
            oh: (ph - k) / stride + 1,
            ow: (pw - k) / stride + 1,
        })
    }

    pub fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn positions(&self) -> usize {
        self.oh * self.ow
    }

    pub fn columns(&self) -> usize {
        self.n * self.positions()
    }

    /// Column ranges, each holding whole output rows.
    pub fn chunks(&self) -> Vec<(usize, usize)> {
        let total = self.columns();
        let per = (COL_BUDGET / self.rows().max(1)).max(self.ow);
        let per = (per / self.ow).max(1) * self.ow;
        (0..total).step_by(per).map(|j0| (j0, (j0 + per).min(total))).collect()
    }

    /// Column layout for `j0..j1` without gathering any data.
    pub fn layout(&self, j0: usize, j1: usize) -> Cols {
        let len = j1 - j0;
        Cols {
            data: Vec::new(),
            runs: runs_of(&self.table(j0, j1), self.k * self.k, len),
            len,
        }
    }

    /// For every kernel tap and column in `j0..j1`, the flat offset of the
    /// source pixel in channel 0, or -1 for zero padding.
    fn table(&self, j0: usize, j1: usize) -> Vec<isize> {
        let len = j1 - j0;
        let p = self.positions();
        let chw = self.c * self.h * self.w;
        let mut tab = vec![-1isize; self.k * self.k * len];
        for (jj, j) in (j0..j1).enumerate() {
            let (n, q) = (j / p, j % p);
            let (oy, ox) = (q / self.ow, q % self.ow);
            let y0 = (oy * self.stride) as isize - self.pad as isize;
            let x0 = (ox * self.stride) as isize - self.pad as isize;
            for ky in 0..self.k {
                let Some(sy) = source_index(y0 + ky as isize, self.h, self.mode) else {
                    continue;
                };
                for kx in 0..self.k {
                    if let Some(sx) = source_index(x0 + kx as isize, self.w, self.mode) {
                        tab[(ky * self.k + kx) * len + jj] = (n * chw + sy * self.w + sx) as isize;
                    }
                }
            }
        }
        tab
    }
}

/// Contiguous stretch of one tap row: columns `dst..dst + len` read source
/// offsets `src..src + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Run {
    dst: usize,
    src: usize,
    len: usize,
}

/// Per kernel tap, the table row compressed into runs; padding taps are
/// left out.
fn runs_of(tab: &[isize], taps: usize, len: usize) -> Vec<Vec<Run>> {
    (0..taps)
        .map(|t| {
            let offs = &tab[t * len..(t + 1) * len];
            let mut runs: Vec<Run> = Vec::new();
            for (j, &o) in offs.iter().enumerate() {
                if o < 0 {
                    continue;
                }
                match runs.last_mut() {
                    Some(r) if r.dst + r.len == j && r.src + r.len == o as usize => r.len += 1,
                    _ => runs.push(Run {
                        dst: j,
                        src: o as usize,
                        len: 1,
                    }),
                }
            }
            runs
        })
        .collect()
}

/// Column buffer `[rows, j1 - j0]` for the given column range.
pub(crate) struct Cols {
    pub data: Vec<f32>,
    runs: Vec<Vec<Run>>,
    pub len: usize,
}

pub(crate) fn im2col(x: &[f32], g: &Geom, j0: usize, j1: usize) -> Cols {
    let len = j1 - j0;
    let kk = g.k * g.k;
    let runs = runs_of(&g.table(j0, j1), kk, len);
    let hw = g.h * g.w;
    let mut data = vec![0.0f32; g.rows() * len];
    for c in 0..g.c {
        let src = &x[c * hw..];
        for (t, tap) in runs.iter().enumerate() {
            let row = &mut data[(c * kk + t) * len..(c * kk + t + 1) * len];
            for r in tap {
                row[r.dst..r.dst + r.len].copy_from_slice(&src[r.src..r.src + r.len]);
            }
        }
    }
    Cols { data, runs, len }
}

/// Adjoint of [`im2col`]: scatter-adds the column buffer into `dx`.
fn col2im(cols: &[f32], runs: &[Vec<Run>], len: usize, g: &Geom, dx: &mut [f32]) {
    let kk = g.k * g.k;
    let hw = g.h * g.w;
    for c in 0..g.c {
        let dst = &mut dx[c * hw..];
        for (t, tap) in runs.iter().enumerate() {
            let row = &cols[(c * kk + t) * len..(c * kk + t + 1) * len];
            for r in tap {
                for (d, v) in dst[r.src..r.src + r.len].iter_mut().zip(&row[r.dst..r.dst + r.len]) {
                    *d += v;
                }
            }
        }
    }
}

impl Cols {
    pub fn scatter_into(&self, g: &Geom, dx: &mut [f32]) {
        col2im(&self.data, &self.runs, self.len, g, dx);
    }

    /// A column buffer with this one's layout but different contents.
    pub fn with_data(self, data: Vec<f32>) -> Cols {
        Cols { data, ..self }
    }
}

/// Forward convolution `out = w * x` with `w` as `[o, c, k, k]`.
pub(crate) fn conv_forward(x: &[f32], w: &[f32], o: usize, g: &Geom, out: &mut [f32]) {
    let taps = g.k * g.k;
    if g.stride == 1 && o < g.c && taps * o * g.h * g.w <= 4 * COL_BUDGET {
        conv_tapwise(x, w, o, g, out);
    } else {
        conv_im2col(x, w, o, g, out);
    }
}

fn conv_im2col(x: &[f32], w: &[f32], o: usize, g: &Geom, out: &mut [f32]) {
    let p = g.positions();
    for (j0, j1) in g.chunks() {
        let cols = im2col(x, g, j0, j1);
        let mut tmp = vec![0.0f32; o * cols.len];
        gemm(o, g.rows(), cols.len, w, false, &cols.data, false, &mut tmp, false);
        scatter_columns(&tmp, o, p, j0, j1, out);
    }
}

/// Few output channels: multiply every tap's weights with the whole input
/// first, then shift-add the `o`-row products. Gathers `o` rows per tap
/// instead of `c`.
fn conv_tapwise(x: &[f32], w: &[f32], o: usize, g: &Geom, out: &mut [f32]) {
    let taps = g.k * g.k;
    let hw = g.h * g.w;
    let p = g.positions();
    let mut wt = vec![0.0f32; taps * o * g.c];
    for oo in 0..o {
        for c in 0..g.c {
            for t in 0..taps {
                wt[(t * o + oo) * g.c + c] = w[(oo * g.c + c) * taps + t];
            }
        }
    }
    let mut z = vec![0.0f32; taps * o * hw];
    for n in 0..g.n {
        let xn = &x[n * g.c * hw..(n + 1) * g.c * hw];
        gemm(taps * o, g.c, hw, &wt, false, xn, false, &mut z, false);
        let base = n * g.c * hw;
        let runs = runs_of(&g.table(n * p, (n + 1) * p), taps, p);
        for (t, tap) in runs.iter().enumerate() {
            for oo in 0..o {
                let zr = &z[(t * o + oo) * hw..(t * o + oo + 1) * hw];
                let dst = &mut out[(n * o + oo) * p..(n * o + oo + 1) * p];
                for r in tap {
                    let src = r.src - base;
                    for (d, v) in dst[r.dst..r.dst + r.len].iter_mut().zip(&zr[src..src + r.len]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// Gathers columns `j0..j1` of a `[n, c, p]` tensor into a `[c, j1 - j0]`
/// matrix, where column `j` is `(j / p, j % p)`.
pub(crate) fn gather_columns(x: &[f32], c: usize, p: usize, j0: usize, j1: usize) -> Vec<f32> {
    let len = j1 - j0;
    let mut out = vec![0.0f32; c * len];
    for_each_run(p, j0, j1, |n, q0, q1, off| {
        for ch in 0..c {
            let src = &x[(n * c + ch) * p + q0..(n * c + ch) * p + q1];
            out[ch * len + off..ch * len + off + (q1 - q0)].copy_from_slice(src);
        }
    });
    out
}

/// Adds a `[c, j1 - j0]` matrix back into a `[n, c, p]` tensor.
pub(crate) fn scatter_columns(m: &[f32], c: usize, p: usize, j0: usize, j1: usize, x: &mut [f32]) {
    let len = j1 - j0;
    for_each_run(p, j0, j1, |n, q0, q1, off| {
        for ch in 0..c {
            let dst = &mut x[(n * c + ch) * p + q0..(n * c + ch) * p + q1];
            for (d, s) in dst.iter_mut().zip(&m[ch * len + off..ch * len + off + (q1 - q0)]) {
                *d += s;
            }
        }
    });
}

/// Splits the column range into per-sample runs `(n, q0, q1, offset)`.
fn for_each_run(p: usize, j0: usize, j1: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    let mut j = j0;
    while j < j1 {
        let n = j / p;
        let q0 = j % p;
        let q1 = (p).min(q0 + (j1 - j));
        f(n, q0, q1, j - j0);
        j += q1 - q0;
    }
}

/// `c = op(a) * op(b) (+ c)` for row-major matrices; `op(a)` is `m x k`,
/// `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    ta: bool,
    b: &[f32],
    tb: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above describe exactly the row-major buffers whose
    // lengths were checked, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
