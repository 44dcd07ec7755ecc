//! Tensor-train (TT) tensors used as unnormalized discrete distributions.
//!
//! A `d`-dimensional tensor with mode sizes `N_1..N_d` is stored as a chain of
//! cores `G_i` of shape `(R_{i-1}, N_i, R_i)` with `R_0 = R_d = 1`; one entry is
//! the product of the matrix slices `G_1[:, n_1, :] G_2[:, n_2, :] ... G_d[:, n_d, :]`.
//!
//! Nothing here ever materializes the full tensor: evaluation, sampling and
//! likelihood gradients all cost `O(d * N * r^2)` per multi-index.

use std::fmt;
use std::io::{self, Read, Write};

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Values of `P[n]` at or below this are clamped before taking `log` or dividing.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

const TT_MAGIC: &[u8; 4] = b"TTT1";

#[derive(Debug, Error)]
pub enum TtError {
    #[error("a tensor needs at least one mode")]
    NoModes,
    #[error("mode {mode} has size 0")]
    EmptyMode { mode: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("multi-index has length {got}, tensor has {expected} modes")]
    IndexLength { expected: usize, got: usize },
    #[error("index {index} out of range for mode {mode} of size {size}")]
    IndexOutOfRange { mode: usize, index: usize, size: usize },
    #[error("core {core} has shape {got:?}, expected {expected:?}")]
    CoreShape {
        core: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("boundary ranks must be 1")]
    BoundaryRank,
    #[error("malformed TT container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One 3-axis core, row-major in `(left, mode, right)` order.
#[derive(Clone, PartialEq)]
pub struct Core {
    left: usize,
    mode: usize,
    right: usize,
    data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, mode: usize, right: usize) -> Self {
        Self {
            left,
            mode,
            right,
            data: vec![0.0; left * mode * right],
        }
    }

    pub fn from_vec(left: usize, mode: usize, right: usize, data: Vec<f64>) -> Result<Self, TtError> {
        if data.len() != left * mode * right {
            return Err(TtError::Format(format!(
                "core data has {} values, shape ({left}, {mode}, {right}) needs {}",
                data.len(),
                left * mode * right
            )));
        }
        Ok(Self {
            left,
            mode,
            right,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.mode, self.right)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, a: usize, n: usize, b: usize) -> f64 {
        self.data[(a * self.mode + n) * self.right + b]
    }

    #[inline]
    fn offset(&self, a: usize, n: usize) -> usize {
        (a * self.mode + n) * self.right
    }

    /// `out = v^T G[:, n, :]`
    fn row_times_slice(&self, v: &[f64], n: usize, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.right, 0.0);
        for (a, &va) in v.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let row = &self.data[self.offset(a, n)..self.offset(a, n) + self.right];
            for (o, &g) in out.iter_mut().zip(row) {
                *o += va * g;
            }
        }
    }

    /// `out = G[:, n, :] v` into a slice of length `left`.
    #[inline]
    fn slice_col_into(&self, n: usize, v: &[f64], out: &mut [f64]) {
        let r = self.right;
        for (a, o) in out.iter_mut().enumerate() {
            let off = (a * self.mode + n) * r;
            *o = self.data[off..off + r].iter().zip(v).map(|(g, x)| g * x).sum();
        }
    }

    /// `out = v^T G[:, n, :]` into a slice of length `right`.
    #[inline]
    fn row_slice_into(&self, v: &[f64], n: usize, out: &mut [f64]) {
        let r = self.right;
        out.fill(0.0);
        for (a, &va) in v.iter().enumerate() {
            let off = (a * self.mode + n) * r;
            for (o, &g) in out.iter_mut().zip(&self.data[off..off + r]) {
                *o += va * g;
            }
        }
    }

    /// `out = G[:, n, :] v`
    fn slice_times_col(&self, n: usize, v: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.left, 0.0);
        for (a, o) in out.iter_mut().enumerate() {
            let row = &self.data[self.offset(a, n)..self.offset(a, n) + self.right];
            *o = row.iter().zip(v).map(|(g, x)| g * x).sum();
        }
    }
}

impl fmt::Debug for Core {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Core")
            .field("shape", &self.shape())
            .finish_non_exhaustive()
    }
}

/// A multi-index into a TT tensor. Entries are 0-based: entry `i` lies in `0..N_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// Gradient of a scalar with respect to every core; shapes mirror the tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreGradient {
    cores: Vec<Core>,
}

impl CoreGradient {
    pub fn zeros_like(t: &TtTensor) -> Self {
        Self {
            cores: t
                .cores
                .iter()
                .map(|c| Core::zeros(c.left, c.mode, c.right))
                .collect(),
        }
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.cores {
            c.data.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

#[derive(Default)]
struct GradScratch {
    offsets: Vec<usize>,
    rights: Vec<f64>,
    right_scale: Vec<f64>,
    left: Vec<f64>,
    next: Vec<f64>,
    tmp: Vec<f64>,
}

#[derive(Clone, PartialEq)]
pub struct TtTensor {
    cores: Vec<Core>,
}

impl fmt::Debug for TtTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TtTensor")
            .field("mode_sizes", &self.mode_sizes())
            .field("ranks", &self.ranks())
            .finish()
    }
}

/// Internal rank bound: `min(r, prod_{j<=i} N_j, prod_{j>i} N_j)`.
pub fn capped_ranks(mode_sizes: &[usize], rank: usize) -> Vec<usize> {
    let d = mode_sizes.len();
    let mut ranks = vec![1; d + 1];
    let mut left = 1usize;
    for i in 1..d {
        left = left.saturating_mul(mode_sizes[i - 1]);
        ranks[i] = rank.min(left);
    }
    let mut right = 1usize;
    for i in (1..d).rev() {
        right = right.saturating_mul(mode_sizes[i]);
        ranks[i] = ranks[i].min(right);
    }
    ranks
}

impl TtTensor {
    /// Builds a tensor from explicit cores, checking the rank chain.
    pub fn from_cores(cores: Vec<Core>) -> Result<Self, TtError> {
        if cores.is_empty() {
            return Err(TtError::NoModes);
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(TtError::BoundaryRank);
        }
        for (i, c) in cores.iter().enumerate() {
            if c.mode == 0 {
                return Err(TtError::EmptyMode { mode: i });
            }
            if c.left == 0 || c.right == 0 {
                return Err(TtError::ZeroRank);
            }
            if i > 0 && cores[i - 1].right != c.left {
                return Err(TtError::CoreShape {
                    core: i,
                    expected: (cores[i - 1].right, c.mode, c.right),
                    got: c.shape(),
                });
            }
        }
        Ok(Self { cores })
    }

    /// Random tensor with i.i.d. core entries uniform on the open interval (0, 1).
    pub fn random_nonneg(mode_sizes: &[usize], rank: usize, seed: u64) -> Result<Self, TtError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_nonneg_with(mode_sizes, rank, &mut rng)
    }

    pub fn random_nonneg_with<R: Rng + ?Sized>(
        mode_sizes: &[usize],
        rank: usize,
        rng: &mut R,
    ) -> Result<Self, TtError> {
        validate_modes(mode_sizes)?;
        if rank == 0 {
            return Err(TtError::ZeroRank);
        }
        let ranks = capped_ranks(mode_sizes, rank);
        let cores = mode_sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let len = ranks[i] * n * ranks[i + 1];
                let data = (0..len).map(|_| rng.sample::<f64, _>(Open01)).collect();
                Core {
                    left: ranks[i],
                    mode: n,
                    right: ranks[i + 1],
                    data,
                }
            })
            .collect();
        Ok(Self { cores })
    }

    /// Tensor of the given shape with every core entry equal to `value`.
    pub fn constant(mode_sizes: &[usize], rank: usize, value: f64) -> Result<Self, TtError> {
        validate_modes(mode_sizes)?;
        if rank == 0 {
            return Err(TtError::ZeroRank);
        }
        let ranks = capped_ranks(mode_sizes, rank);
        let cores = mode_sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Core {
                left: ranks[i],
                mode: n,
                right: ranks[i + 1],
                data: vec![value; ranks[i] * n * ranks[i + 1]],
            })
            .collect();
        Ok(Self { cores })
    }

    pub fn ndim(&self) -> usize {
        self.cores.len()
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode).collect()
    }

    /// `[R_0, R_1, ..., R_d]`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.left).collect();
        r.push(1);
        r
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [Core] {
        &mut self.cores
    }

    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    pub fn check_index(&self, n: &MultiIndex) -> Result<(), TtError> {
        if n.len() != self.ndim() {
            return Err(TtError::IndexLength {
                expected: self.ndim(),
                got: n.len(),
            });
        }
        for (mode, (&index, c)) in n.0.iter().zip(&self.cores).enumerate() {
            if index >= c.mode {
                return Err(TtError::IndexOutOfRange {
                    mode,
                    index,
                    size: c.mode,
                });
            }
        }
        Ok(())
    }

    /// Evaluates one entry as the product of the core slices selected by `n`.
    pub fn get(&self, n: &MultiIndex) -> Result<f64, TtError> {
        self.check_index(n)?;
        Ok(self.get_unchecked(n))
    }

    fn get_unchecked(&self, n: &MultiIndex) -> f64 {
        let mut v = vec![1.0];
        let mut next = Vec::new();
        for (c, &ni) in self.cores.iter().zip(&n.0) {
            c.row_times_slice(&v, ni, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        v[0]
    }

    /// Natural log of `max(P[n], LIKELIHOOD_FLOOR)`, computed with rescaling so
    /// long chains neither overflow nor underflow.
    pub fn log_value(&self, n: &MultiIndex) -> Result<f64, TtError> {
        self.check_index(n)?;
        let mut v = vec![1.0];
        let mut next = Vec::new();
        let mut log_scale = 0.0;
        for (c, &ni) in self.cores.iter().zip(&n.0) {
            c.row_times_slice(&v, ni, &mut next);
            std::mem::swap(&mut v, &mut next);
            log_scale += normalize_max(&mut v);
        }
        let value = v[0];
        if value <= 0.0 {
            return Ok(LIKELIHOOD_FLOOR.ln());
        }
        Ok((value.ln() + log_scale).max(LIKELIHOOD_FLOOR.ln()))
    }

    /// Draws `count` multi-indices by sequential conditional sampling, treating the
    /// tensor as an unnormalized mass function.
    ///
    /// Negative conditional weights are clipped to zero; a mode whose clipped
    /// weights are all zero falls back to a uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<MultiIndex> {
        let d = self.ndim();
        // right interfaces: rho[i] has length R_i, rho[d] = [1]
        let mut rho: Vec<Vec<f64>> = vec![Vec::new(); d + 1];
        rho[d] = vec![1.0];
        let mut summed = Vec::new();
        for i in (0..d).rev() {
            let c = &self.cores[i];
            let mut acc = vec![0.0; c.left];
            for n in 0..c.mode {
                c.slice_times_col(n, &rho[i + 1], &mut summed);
                for (a, s) in acc.iter_mut().zip(&summed) {
                    *a += s;
                }
            }
            normalize_max(&mut acc);
            rho[i] = acc;
        }

        let max_mode = self.cores.iter().map(|c| c.mode).max().unwrap_or(1);
        let mut weights = vec![0.0; max_mode];
        let mut left = Vec::new();
        let mut next = Vec::new();
        let mut slice = Vec::new();
        (0..count)
            .map(|_| {
                left.clear();
                left.push(1.0);
                let mut idx = Vec::with_capacity(d);
                for (i, c) in self.cores.iter().enumerate() {
                    let w = &mut weights[..c.mode];
                    for (n, wn) in w.iter_mut().enumerate() {
                        c.slice_times_col(n, &rho[i + 1], &mut slice);
                        let v: f64 = left.iter().zip(&slice).map(|(l, s)| l * s).sum();
                        *wn = if v.is_finite() && v > 0.0 { v } else { 0.0 };
                    }
                    let n = draw_categorical(w, rng);
                    idx.push(n);
                    c.row_times_slice(&left, n, &mut next);
                    std::mem::swap(&mut left, &mut next);
                    normalize_max(&mut left);
                }
                MultiIndex(idx)
            })
            .collect()
    }

    /// Gradient of `sum_s log P[n_s]` over `batch` with respect to every core entry.
    ///
    /// `P[n]` values at or below [`LIKELIHOOD_FLOOR`] are replaced by the floor.
    pub fn log_likelihood_grad(&self, batch: &[MultiIndex]) -> Result<CoreGradient, TtError> {
        for n in batch {
            self.check_index(n)?;
        }
        let mut grad = CoreGradient::zeros_like(self);
        self.add_log_likelihood_grad(batch, &mut grad, &mut GradScratch::default());
        Ok(grad)
    }

    /// `steps` ascent steps on `sum_s log P[n_s]`, reusing buffers between steps.
    pub fn ascend_likelihood(&mut self, batch: &[MultiIndex], lr: f64, steps: usize) -> Result<(), TtError> {
        for n in batch {
            self.check_index(n)?;
        }
        let mut grad = CoreGradient::zeros_like(self);
        let mut scratch = GradScratch::default();
        for _ in 0..steps {
            grad.cores.iter_mut().for_each(|c| c.data.fill(0.0));
            self.add_log_likelihood_grad(batch, &mut grad, &mut scratch);
            self.ascend(&grad, lr)?;
        }
        Ok(())
    }

    /// Adds the log-likelihood gradient of `batch` into `grad`. Indices must be valid.
    fn add_log_likelihood_grad(&self, batch: &[MultiIndex], grad: &mut CoreGradient, s: &mut GradScratch) {
        let d = self.ndim();
        // rights for core i live at offsets[i]..offsets[i] + R_{i+1}
        s.offsets.clear();
        let mut total = 0;
        let mut max_rank = 1;
        for c in &self.cores {
            s.offsets.push(total);
            total += c.right;
            max_rank = max_rank.max(c.left).max(c.right);
        }
        s.rights.resize(total, 0.0);
        s.right_scale.resize(d, 0.0);
        s.left.resize(max_rank, 0.0);
        s.next.resize(max_rank, 0.0);
        s.tmp.resize(max_rank, 0.0);

        for n in batch {
            // rights[i]: normalized product of slices i+1..d
            s.rights[s.offsets[d - 1]] = 1.0;
            s.right_scale[d - 1] = 0.0;
            for i in (0..d - 1).rev() {
                let c = &self.cores[i + 1];
                let (head, tail) = s.rights.split_at_mut(s.offsets[i + 1]);
                let out = &mut head[s.offsets[i]..s.offsets[i] + c.left];
                c.slice_col_into(n.0[i + 1], &tail[..c.right], out);
                s.right_scale[i] = s.right_scale[i + 1] + normalize_max(out);
            }

            // P[n] = (G_0[n_0] r_0) * exp(scale)
            let c0 = &self.cores[0];
            c0.slice_col_into(n.0[0], &s.rights[..c0.right], &mut s.tmp[..1]);
            let p_hat = s.tmp[0];
            let log_p = if p_hat > 0.0 {
                p_hat.ln() + s.right_scale[0]
            } else {
                f64::NEG_INFINITY
            };
            let clamped = !(log_p > LIKELIHOOD_FLOOR.ln());

            s.left[0] = 1.0;
            let mut left_scale = 0.0;
            for i in 0..d {
                let c = &self.cores[i];
                let (l, r) = (c.left, c.right);
                let right = &s.rights[s.offsets[i]..s.offsets[i] + r];
                let left = &s.left[..l];
                let factor = if clamped {
                    // dP/dG / floor, with P's own scale restored
                    saturate((left_scale + s.right_scale[i] - LIKELIHOOD_FLOOR.ln()).exp())
                } else {
                    c.slice_col_into(n.0[i], right, &mut s.tmp[..l]);
                    let local: f64 = left.iter().zip(&s.tmp[..l]).map(|(a, b)| a * b).sum();
                    1.0 / local
                };
                let g = &mut grad.cores[i];
                for (a, &la) in left.iter().enumerate() {
                    let off = g.offset(a, n.0[i]);
                    let lf = la * factor;
                    let row = &mut g.data[off..off + r];
                    if lf.is_finite() && !clamped {
                        for (x, &rb) in row.iter_mut().zip(right) {
                            *x += lf * rb;
                        }
                    } else {
                        for (x, &rb) in row.iter_mut().zip(right) {
                            *x = saturate(*x + lf * rb);
                        }
                    }
                }
                if i + 1 < d {
                    c.row_slice_into(left, n.0[i], &mut s.next[..r]);
                    left_scale += normalize_max(&mut s.next[..r]);
                    std::mem::swap(&mut s.left, &mut s.next);
                }
            }
        }
    }

    /// Sum of `log max(P[n], floor)` over a batch.
    pub fn log_likelihood(&self, batch: &[MultiIndex]) -> Result<f64, TtError> {
        batch.iter().map(|n| self.log_value(n)).sum()
    }

    /// In-place `G <- G + lr * grad` for every core.
    pub fn ascend(&mut self, grad: &CoreGradient, lr: f64) -> Result<(), TtError> {
        self.check_grad(grad)?;
        if lr == 0.0 {
            return Ok(());
        }
        for (c, g) in self.cores.iter_mut().zip(&grad.cores) {
            for (x, dx) in c.data.iter_mut().zip(&g.data) {
                *x += lr * dx;
            }
        }
        Ok(())
    }

    /// Returns a copy with one gradient-ascent step applied.
    pub fn ascent_step(&self, grad: &CoreGradient, lr: f64) -> Result<Self, TtError> {
        let mut out = self.clone();
        out.ascend(grad, lr)?;
        Ok(out)
    }

    fn check_grad(&self, grad: &CoreGradient) -> Result<(), TtError> {
        if grad.cores.len() != self.cores.len() {
            return Err(TtError::IndexLength {
                expected: self.cores.len(),
                got: grad.cores.len(),
            });
        }
        for (i, (c, g)) in self.cores.iter().zip(&grad.cores).enumerate() {
            if c.shape() != g.shape() {
                return Err(TtError::CoreShape {
                    core: i,
                    expected: c.shape(),
                    got: g.shape(),
                });
            }
        }
        Ok(())
    }

    /// Serializes into the `TTT1` container: magic, `d`, mode sizes, ranks
    /// (all little-endian u64), then every core's entries as little-endian f64
    /// in `(left, mode, right)` order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TtError> {
        w.write_all(TT_MAGIC)?;
        w.write_all(&(self.ndim() as u64).to_le_bytes())?;
        for n in self.mode_sizes() {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for r in self.ranks() {
            w.write_all(&(r as u64).to_le_bytes())?;
        }
        for c in &self.cores {
            for x in &c.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * (2 * self.ndim() + 1) + 8 * self.num_params());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, TtError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TT_MAGIC {
            return Err(TtError::Format(format!("bad magic {magic:?}")));
        }
        let d = read_u64(&mut r)? as usize;
        if d == 0 {
            return Err(TtError::NoModes);
        }
        if d > 1 << 32 {
            return Err(TtError::Format(format!("implausible dimension {d}")));
        }
        let modes = (0..d)
            .map(|_| read_u64(&mut r).map(|x| x as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let ranks = (0..=d)
            .map(|_| read_u64(&mut r).map(|x| x as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cores = Vec::with_capacity(d);
        for i in 0..d {
            let len = ranks[i]
                .checked_mul(modes[i])
                .and_then(|x| x.checked_mul(ranks[i + 1]))
                .ok_or_else(|| TtError::Format("core size overflows".into()))?;
            let mut buf = vec![0u8; len * 8];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            cores.push(Core {
                left: ranks[i],
                mode: modes[i],
                right: ranks[i + 1],
                data,
            });
        }
        Self::from_cores(cores)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TtError> {
        let mut cursor = bytes;
        let t = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(TtError::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(t)
    }
}

fn validate_modes(mode_sizes: &[usize]) -> Result<(), TtError> {
    if mode_sizes.is_empty() {
        return Err(TtError::NoModes);
    }
    if let Some(mode) = mode_sizes.iter().position(|&n| n == 0) {
        return Err(TtError::EmptyMode { mode });
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, TtError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Divides by the largest magnitude and returns the log of that factor.
/// Rescales `v` by a power of two so its largest magnitude lies in `[1, 2)`;
/// returns the natural log of the factor divided out. Exact in floating point.
fn normalize_max(v: &mut [f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(m >= f64::MIN_POSITIVE && m.is_finite()) {
        return 0.0;
    }
    let e = ((m.to_bits() >> 52) & 0x7ff) as i64 - 1023;
    let inv = f64::from_bits(((1023 - e) as u64) << 52);
    v.iter_mut().for_each(|x| *x *= inv);
    e as f64 * std::f64::consts::LN_2
}

fn saturate(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(f64::MIN, f64::MAX)
    }
}

fn draw_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return rng.gen_range(0..weights.len());
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u at the top edge; take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
