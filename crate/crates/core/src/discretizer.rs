//! Finite-element oracle for the linearized channel operator.
//!
//! Unknowns per channel are the nodal values `y(t_1), …, y(t_n)` of a
//! piecewise-linear `y` with `y(0) = 0`, followed by the auxiliary component
//! `y₁`. The forms are
//!
//! ```text
//! a(Y, Z) = ∫ y'z' + (γ + q)yz dt - y(1)z₁ - y₁z(1)
//! b(Y, Z) = ∫ yz dt + y₁z₁ + y(1)z(1)
//! ```
//!
//! where the last term of `b` is the mass of the third component of the
//! direct sum, which equals `y(1)`. The natural boundary condition of this
//! pencil is `y'(1) = λy(1) + y₁` and the `y₁` row reads `λy₁ + y(1) = 0`,
//! so eliminating `y₁` gives `y'(1) = (λ - 1/λ)y(1)`.
//!
//! With `y₁` ordered right after the boundary node, each channel block is
//! a tridiagonal pencil, which is solved by Sturm counts and bisection.
//! Dense forms are solved by Cholesky reduction and cyclic Jacobi.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::charroots::{has_low_oscillatory_root, ChannelSpectrum};
use crate::error::{Error, Result};
use crate::model::{Branch, CosineSeries, EigenvalueRecord, OperatorSpec, PotentialSpec};
use crate::scalar::Real;

pub const MIN_GRID: usize = 8;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.data[i * m.dim + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    /// Adds `v` at `(i, j)` and `(j, i)` (once on the diagonal).
    pub fn add_sym(&mut self, i: usize, j: usize, v: T) {
        let n = self.dim;
        self.data[i * n + j] = self.data[i * n + j] + v;
        if i != j {
            self.data[j * n + i] = self.data[j * n + i] + v;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).fold(T::zero(), |acc, (a, b)| acc + *a * *b))
            .collect()
    }

    /// `uᵀMv`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> T {
        u.iter()
            .zip(self.mul_vec(v))
            .fold(T::zero(), |acc, (a, b)| acc + *a * b)
    }

    /// One row per line, entries separated by spaces.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        for row in self.data.chunks(self.dim) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Symmetric tridiagonal pencil `(A, B)` of one channel block.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPencil<T> {
    pub a_diag: Vec<T>,
    pub a_off: Vec<T>,
    pub b_diag: Vec<T>,
    pub b_off: Vec<T>,
}

impl<T: Real> TriPencil<T> {
    pub fn dim(&self) -> usize {
        self.a_diag.len()
    }

    /// Grid size `n` (the last unknown is `y₁`).
    pub fn grid(&self) -> usize {
        self.dim() - 1
    }

    /// Number of eigenvalues below `sigma`, by the inertia of `A - σB`.
    pub fn count_below(&self, sigma: T) -> usize {
        let tiny = T::min_positive_value().sqrt();
        let mut count = 0;
        let mut d = T::one();
        for i in 0..self.dim() {
            let mut di = self.a_diag[i] - sigma * self.b_diag[i];
            if i > 0 {
                let e = self.a_off[i - 1] - sigma * self.b_off[i - 1];
                di = di - e * e / d;
            }
            if di == T::zero() {
                di = -tiny;
            }
            if di < T::zero() {
                count += 1;
            }
            d = di;
        }
        count
    }

    /// The `j`-th eigenvalue (0-based, ascending) by bisection on the
    /// inertia count. Returns the value and the final bracket width.
    pub fn eigenvalue(&self, j: usize) -> Result<(T, T)> {
        if j >= self.dim() {
            return Err(Error::InvalidArgument(format!("eigenvalue {j} of a {}-dim pencil", self.dim())));
        }
        let two = T::lit(2.0);
        let mut lo = -T::one();
        while self.count_below(lo) > j {
            lo = lo * two;
        }
        let mut hi = T::one();
        while self.count_below(hi) <= j {
            hi = hi * two;
        }
        for _ in 0..400 {
            let mid = (lo + hi) / two;
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= T::lit(2.0) * T::unit_roundoff() * mid.abs() {
                break;
            }
        }
        Ok(((lo + hi) / two, hi - lo))
    }

    pub fn lowest(&self, count: usize) -> Result<Vec<T>> {
        (0..count.min(self.dim())).map(|j| self.eigenvalue(j).map(|e| e.0)).collect()
    }

    /// Eigenvector for a converged eigenvalue, by inverse iteration,
    /// normalized to `vᵀBv = 1`.
    pub fn eigenvector(&self, lambda: T) -> Vec<T> {
        let n = self.dim();
        let shift = lambda + T::lit(64.0) * T::unit_roundoff() * lambda.abs().max(T::one());
        // LDLᵀ of A - σB
        let tiny = T::min_positive_value().sqrt();
        let mut d = vec![T::zero(); n];
        let mut l = vec![T::zero(); n];
        for i in 0..n {
            let mut di = self.a_diag[i] - shift * self.b_diag[i];
            if i > 0 {
                let e = self.a_off[i - 1] - shift * self.b_off[i - 1];
                l[i] = e / d[i - 1];
                di = di - l[i] * e;
            }
            d[i] = if di == T::zero() { tiny } else { di };
        }
        let mut v = vec![T::one(); n];
        for _ in 0..4 {
            let mut x = self.b_mul(&v);
            for i in 1..n {
                x[i] = x[i] - l[i] * x[i - 1];
            }
            for i in 0..n {
                x[i] = x[i] / d[i];
            }
            for i in (0..n - 1).rev() {
                x[i] = x[i] - l[i + 1] * x[i + 1];
            }
            let norm = dot(&x, &self.b_mul(&x)).sqrt();
            v = x.into_iter().map(|t| t / norm).collect();
        }
        v
    }

    pub fn a_mul(&self, v: &[T]) -> Vec<T> {
        tri_mul(&self.a_diag, &self.a_off, v)
    }

    pub fn b_mul(&self, v: &[T]) -> Vec<T> {
        tri_mul(&self.b_diag, &self.b_off, v)
    }

    pub fn to_dense(&self) -> FormPair<T> {
        let n = self.dim();
        let mut a = SymMatrix::zeros(n);
        let mut b = SymMatrix::zeros(n);
        for i in 0..n {
            a.add_sym(i, i, self.a_diag[i]);
            b.add_sym(i, i, self.b_diag[i]);
            if i + 1 < n {
                a.add_sym(i, i + 1, self.a_off[i]);
                b.add_sym(i, i + 1, self.b_off[i]);
            }
        }
        FormPair { a, b, n: self.grid(), channels: 1 }
    }
}

fn tri_mul<T: Real>(diag: &[T], off: &[T], v: &[T]) -> Vec<T> {
    let n = diag.len();
    (0..n)
        .map(|i| {
            let mut s = diag[i] * v[i];
            if i > 0 {
                s = s + off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s = s + off[i] * v[i + 1];
            }
            s
        })
        .collect()
}

fn dot<T: Real>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
}

/// 3-point Gauss rule on `[0, 1]`: (node, weight).
fn element_rule<T: Real>() -> [(T, T); 3] {
    let r = (T::lit(0.6)).sqrt() / T::lit(2.0);
    let h = T::lit(0.5);
    [
        (h - r, T::lit(5.0) / T::lit(18.0)),
        (h, T::lit(8.0) / T::lit(18.0)),
        (h + r, T::lit(5.0) / T::lit(18.0)),
    ]
}

/// `∫ w φ_a φ_b` over each element `[t_e, t_{e+1}]` of the uniform grid,
/// as `(left-left, left-right, right-right)`.
fn weighted_mass<T: Real, F: Fn(T) -> T>(w: F, n: usize) -> Vec<(T, T, T)> {
    let h = T::one() / T::from_usize_lossy(n);
    let rule = element_rule::<T>();
    (0..n)
        .map(|e| {
            let t0 = T::from_usize_lossy(e) * h;
            let mut m = (T::zero(), T::zero(), T::zero());
            for (s, wt) in rule {
                let f = w(t0 + s * h) * wt * h;
                let (p0, p1) = (T::one() - s, s);
                m.0 = m.0 + f * p0 * p0;
                m.1 = m.1 + f * p0 * p1;
                m.2 = m.2 + f * p1 * p1;
            }
            m
        })
        .collect()
}

/// Tridiagonal pencil of one channel with diagonal potential `q`.
pub fn assemble_channel<T: Real>(gamma: T, q: Option<&CosineSeries<T>>, n: usize) -> Result<TriPencil<T>> {
    if n < MIN_GRID {
        return Err(Error::InvalidArgument(format!("grid size {n} < {MIN_GRID}")));
    }
    if !(gamma > T::zero()) {
        return Err(Error::InvalidOperator(format!("γ = {gamma} must be positive")));
    }
    let h = T::one() / T::from_usize_lossy(n);
    let dim = n + 1;
    let mut p = TriPencil {
        a_diag: vec![T::zero(); dim],
        a_off: vec![T::zero(); dim - 1],
        b_diag: vec![T::zero(); dim],
        b_off: vec![T::zero(); dim - 1],
    };
    let potential = weighted_mass(|t| gamma + q.map_or(T::zero(), |q| q.value(t)), n);
    let mass = weighted_mass(|_| T::one(), n);
    let stiff = h.recip();
    // element e joins nodes e and e+1; node i sits at index i-1
    for e in 0..n {
        let (pl, pm, pr) = potential[e];
        let (ml, mm, mr) = mass[e];
        if e > 0 {
            let i = e - 1;
            p.a_diag[i] = p.a_diag[i] + stiff + pl;
            p.b_diag[i] = p.b_diag[i] + ml;
            p.a_off[i] = p.a_off[i] - stiff + pm;
            p.b_off[i] = p.b_off[i] + mm;
        }
        p.a_diag[e] = p.a_diag[e] + stiff + pr;
        p.b_diag[e] = p.b_diag[e] + mr;
    }
    // boundary node y(1) at index n-1, y₁ at index n
    p.a_off[n - 1] = -T::one();
    p.b_diag[n - 1] = p.b_diag[n - 1] + T::one();
    p.b_diag[n] = T::one();
    Ok(p)
}

/// Dense forms of one or more channel blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FormPair<T> {
    pub a: SymMatrix<T>,
    pub b: SymMatrix<T>,
    pub n: usize,
    pub channels: usize,
}

impl<T: Real> FormPair<T> {
    pub fn dof(&self) -> usize {
        self.a.dim()
    }
}

/// Off-diagonal channel couplings `q_{kl} = q_{lk}`, keyed by `(k, l)` with
/// `k < l` (1-based).
pub type Coupling<T> = BTreeMap<(usize, usize), CosineSeries<T>>;

/// Dense forms for all channels of `gammas` in one block system. The
/// diagonal potential comes from `q`; `coupling` adds off-diagonal blocks.
pub fn assemble_forms<T: Real>(
    gammas: &[T],
    q: &PotentialSpec<T>,
    coupling: &Coupling<T>,
    n: usize,
) -> Result<FormPair<T>> {
    let k_max = gammas.len();
    if let Some(k) = q.max_channel().filter(|&k| k > k_max) {
        return Err(Error::InvalidPotential(format!("channel {k} beyond K = {k_max}")));
    }
    let block = n + 1;
    let mut a = SymMatrix::zeros(k_max * block);
    let mut b = SymMatrix::zeros(k_max * block);
    for (c, &g) in gammas.iter().enumerate() {
        let p = assemble_channel(g, q.channel(c + 1), n)?;
        let o = c * block;
        for i in 0..block {
            a.add_sym(o + i, o + i, p.a_diag[i]);
            b.add_sym(o + i, o + i, p.b_diag[i]);
            if i + 1 < block {
                a.add_sym(o + i, o + i + 1, p.a_off[i]);
                b.add_sym(o + i, o + i + 1, p.b_off[i]);
            }
        }
    }
    for (&(k, l), qkl) in coupling {
        if k == 0 || l == 0 || k >= l || l > k_max {
            return Err(Error::InvalidPotential(format!("coupling ({k}, {l}) needs 1 ≤ k < l ≤ {k_max}")));
        }
        let m = weighted_mass(|t| qkl.value(t), n);
        let (ok, ol) = ((k - 1) * block, (l - 1) * block);
        for e in 0..n {
            let (wl, wm, wr) = m[e];
            // nodes e (index e-1) and e+1 (index e)
            if e > 0 {
                a.add_sym(ok + e - 1, ol + e - 1, wl);
                a.add_sym(ok + e - 1, ol + e, wm);
                a.add_sym(ok + e, ol + e - 1, wm);
            }
            a.add_sym(ok + e, ol + e, wr);
        }
    }
    Ok(FormPair { a, b, n, channels: k_max })
}

/// Lower Cholesky factor of `b`, row-major.
pub fn cholesky<T: Real>(b: &SymMatrix<T>) -> Result<Vec<T>> {
    let n = b.dim();
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut s = b.get(j, j);
        for k in 0..j {
            s = s - l[j * n + k] * l[j * n + k];
        }
        if !(s > T::zero()) {
            return Err(Error::Cholesky {
                index: j,
                pivot: s.to_f64_lossy(),
            });
        }
        let d = s.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = b.get(i, j);
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

/// Off-diagonal target of the Jacobi sweeps, relative to `‖C‖_F`.
pub const JACOBI_TOL: f64 = 1e-12;

/// Eigenvalues (ascending) and `B`-orthonormal eigenvectors of `(A, B)`.
pub fn solve_gevp_vectors<T: Real>(forms: &FormPair<T>) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let n = forms.dof();
    let l = cholesky(&forms.b)?;
    // C = L⁻¹ A L⁻ᵀ: solve L X = A, then L Cᵀ = Xᵀ
    let mut x = forms.a.data.clone();
    forward_solve_columns(&l, &mut x, n);
    transpose(&mut x, n);
    forward_solve_columns(&l, &mut x, n);
    // symmetrize rounding
    for i in 0..n {
        for j in 0..i {
            let v = (x[i * n + j] + x[j * n + i]) / T::lit(2.0);
            x[i * n + j] = v;
            x[j * n + i] = v;
        }
    }
    let (vals, z) = jacobi(x, n)?;
    // eigenvectors of the pencil: Lᵀ v = z
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &c in &order {
        values.push(vals[c]);
        let mut v: Vec<T> = (0..n).map(|r| z[r * n + c]).collect();
        for i in (0..n).rev() {
            let mut s = v[i];
            for k in i + 1..n {
                s = s - l[k * n + i] * v[k];
            }
            v[i] = s / l[i * n + i];
        }
        vectors.push(v);
    }
    Ok((values, vectors))
}

/// All eigenvalues of `(A, B)`, ascending.
pub fn solve_gevp<T: Real>(forms: &FormPair<T>) -> Result<Vec<T>> {
    solve_gevp_vectors(forms).map(|r| r.0)
}

fn forward_solve_columns<T: Real>(l: &[T], x: &mut [T], n: usize) {
    for c in 0..n {
        for i in 0..n {
            let mut s = x[i * n + c];
            for k in 0..i {
                s = s - l[i * n + k] * x[k * n + c];
            }
            x[i * n + c] = s / l[i * n + i];
        }
    }
}

fn transpose<T: Copy>(x: &mut [T], n: usize) {
    for i in 0..n {
        for j in 0..i {
            x.swap(i * n + j, j * n + i);
        }
    }
}

/// Cyclic Jacobi on a dense symmetric matrix. Returns the diagonal and the
/// accumulated rotations (columns are eigenvectors).
fn jacobi<T: Real>(mut a: Vec<T>, n: usize) -> Result<(Vec<T>, Vec<T>)> {
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let frob = a.iter().fold(T::zero(), |s, x| s + *x * *x).sqrt();
    let target = T::lit(JACOBI_TOL).max(T::lit(8.0) * T::unit_roundoff()) * frob;
    let off = |a: &[T]| {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s = s + a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };
    let mut residual = off(&a);
    for _sweep in 0..100 {
        if residual <= target {
            return Ok(((0..n).map(|i| a[i * n + i]).collect(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        residual = off(&a);
    }
    Err(Error::NonConvergence {
        what: "jacobi",
        iterations: 100,
        residual: residual.to_f64_lossy(),
    })
}

/// Branch of a discrete eigenvalue, from its sign and its position
/// relative to `γ` and the windows `(γ + π²m², γ + π²(m+1)²)`.
pub fn infer_branch<T: Real>(lambda: T, gamma: T) -> Branch {
    if lambda < T::zero() {
        Branch::Negative
    } else if lambda < gamma {
        Branch::Principal
    } else {
        let x = (lambda - gamma).sqrt();
        Branch::Oscillatory((x / T::PI()).floor().to_u32().unwrap_or(u32::MAX))
    }
}

/// Eigenvalue counts per window: `(-∞, 0)`, `(0, γ)`, then
/// `(γ + π²m², γ + π²(m+1)²)` for `m = 0..modes`.
pub fn window_census<T: Real>(p: &TriPencil<T>, gamma: T, modes: u32) -> Vec<usize> {
    let pi2 = T::PI() * T::PI();
    let mut edges = vec![T::zero(), gamma];
    for m in 1..=modes + 1 {
        let mf = T::lit(m as f64);
        edges.push(gamma + pi2 * mf * mf);
    }
    let counts: Vec<usize> = edges.iter().map(|&e| p.count_below(e)).collect();
    let mut out = vec![counts[0]];
    out.extend(counts.windows(2).map(|w| w[1] - w[0]));
    out
}

/// The same windows as [`window_census`], filled from the closed-form
/// branch structure.
pub fn expected_census<T: Real>(gamma: T, modes: u32) -> Vec<usize> {
    let low = has_low_oscillatory_root(gamma);
    let mut out = vec![1, usize::from(!low), usize::from(low)];
    out.extend(std::iter::repeat_n(1, modes as usize));
    out
}

/// Lowest `per_channel` eigenvalues of every channel with the diagonal
/// potential `q`, tagged by branch. `residual` holds the bisection width.
pub fn oracle_spectrum<T: Real>(
    spec: &OperatorSpec<T>,
    q: &PotentialSpec<T>,
    n: usize,
    per_channel: usize,
) -> Result<Vec<ChannelSpectrum<T>>> {
    if let Some(k) = q.max_channel().filter(|&k| k > spec.channels()) {
        return Err(Error::InvalidPotential(format!("channel {k} beyond K = {}", spec.channels())));
    }
    spec.gammas()
        .par_iter()
        .enumerate()
        .map(|(i, &g)| oracle_channel(i + 1, g, q.channel(i + 1), n, per_channel))
        .collect()
}

pub fn oracle_channel<T: Real>(
    k: usize,
    gamma: T,
    q: Option<&CosineSeries<T>>,
    n: usize,
    per_channel: usize,
) -> Result<ChannelSpectrum<T>> {
    let p = assemble_channel(gamma, q, n)?;
    let mut records = Vec::with_capacity(per_channel);
    for j in 0..per_channel.min(p.dim()) {
        let (lambda, width) = p.eigenvalue(j)?;
        let branch = infer_branch(lambda, gamma);
        let root_param = if lambda > gamma {
            (lambda - gamma).sqrt()
        } else {
            (gamma - lambda).sqrt()
        };
        records.push(EigenvalueRecord {
            k,
            branch,
            root_param,
            lambda,
            residual: width,
        });
    }
    Ok(ChannelSpectrum { k, gamma, records })
}

/// `log₂(e_n / e_2n)` for successive errors of a grid-doubling sequence.
pub fn convergence_orders<T: Real>(errors: &[T]) -> Vec<T> {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).abs().log2())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charroots::enumerate_channel;
    use crate::model::OperatorSpec;
    use crate::scalar::Dd;
    use proptest::prelude::*;

    fn exact(gamma: f64, modes: u32) -> ChannelSpectrum<f64> {
        enumerate_channel(1, Dd::from(gamma), modes, true, Dd::from(1e-28)).unwrap().cast()
    }

    #[test]
    fn scalar_pencil() {
        let f = FormPair {
            a: SymMatrix::from_diagonal(&[2.0f64]),
            b: SymMatrix::from_diagonal(&[1.0]),
            n: 0,
            channels: 1,
        };
        assert_eq!(solve_gevp(&f).unwrap(), vec![2.0]);
    }

    #[test]
    fn diagonal_pencil_gives_ratios() {
        let f = FormPair {
            a: SymMatrix::from_diagonal(&[6.0f64, -1.0, 9.0]),
            b: SymMatrix::from_diagonal(&[2.0, 4.0, 3.0]),
            n: 0,
            channels: 1,
        };
        let v = solve_gevp(&f).unwrap();
        let want = [-0.25, 3.0, 3.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coupled_dimension_and_symmetry() {
        let gammas = [2.0, 16.0, 54.0];
        let q = PotentialSpec::zero().with_channel(2, CosineSeries::term(1, 0.3)).unwrap();
        let mut c = Coupling::new();
        c.insert((1, 3), CosineSeries::term(2, 0.1));
        let f = assemble_forms(&gammas, &q, &c, 100).unwrap();
        assert_eq!(f.dof(), 303);
        assert_eq!(f.b.dim(), 303);
        assert!(f.a.is_symmetric());
        assert!(f.b.is_symmetric());
        assert!(cholesky(&f.b).is_ok());
        // the coupling actually lands off the diagonal blocks
        assert!(f.a.get(50, 2 * 101 + 50) != 0.0);
    }

    #[test]
    fn bad_coupling_is_rejected() {
        let mut c = Coupling::new();
        c.insert((2, 2), CosineSeries::term(1, 0.1));
        assert!(assemble_forms(&[1.0, 2.0], &PotentialSpec::zero(), &c, 10).is_err());
    }

    #[test]
    fn mass_failure_is_reported() {
        let b = SymMatrix::from_diagonal(&[1.0, -1.0]);
        assert!(matches!(cholesky(&b), Err(Error::Cholesky { index: 1, .. })));
    }

    #[test]
    fn dense_and_tridiagonal_agree() {
        let q = CosineSeries::term(1, 0.5f64);
        let p = assemble_channel(10.0f64, Some(&q), 60).unwrap();
        let dense = solve_gevp(&p.to_dense()).unwrap();
        for (j, v) in dense.iter().enumerate() {
            let (b, _) = p.eigenvalue(j).unwrap();
            assert!((v - b).abs() < 1e-9 * v.abs().max(1.0), "{j}: {v} vs {b}");
        }
    }

    #[test]
    fn block_system_is_union_of_channels() {
        let gammas = [1.2, 10.0];
        let f = assemble_forms(&gammas, &PotentialSpec::zero(), &Coupling::new(), 30).unwrap();
        let all = solve_gevp(&f).unwrap();
        let mut sep: Vec<f64> = gammas
            .iter()
            .flat_map(|&g| assemble_channel(g, None, 30).unwrap().lowest(31).unwrap())
            .collect();
        sep.sort_by(f64::total_cmp);
        for (a, b) in all.iter().zip(&sep) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn census_matches_closed_form() {
        for &g in &[1.2, 2.0, 10.0, 100.0] {
            let p = assemble_channel(g, None, 1000).unwrap();
            assert_eq!(window_census(&p, g, 10), expected_census(g, 10), "γ = {g}");
            assert_eq!(p.count_below(0.0), 1);
        }
    }

    #[test]
    fn oracle_matches_roots_with_second_order() {
        for &g in &[1.2, 10.0, 100.0] {
            let truth = exact(g, 12);
            let grids = [250, 500, 1000, 2000];
            let runs: Vec<ChannelSpectrum<f64>> =
                grids.iter().map(|&n| oracle_channel(1, g, None, n, 10).unwrap()).collect();
            let fine = runs.last().unwrap();
            for (j, (got, want)) in fine.records.iter().zip(&truth.records).enumerate() {
                assert_eq!(got.branch, want.branch);
                let rel = (got.lambda - want.lambda).abs() / want.lambda.abs();
                assert!(rel < 1e-4, "γ {g} mode {j}: rel {rel}");
                let errs: Vec<f64> = runs.iter().map(|r| r.records[j].lambda - want.lambda).collect();
                for o in convergence_orders(&errs) {
                    assert!((1.8..=2.2).contains(&o), "γ {g} mode {j}: order {o}");
                }
            }
        }
    }

    #[test]
    fn eigenpairs_satisfy_rayleigh_and_aux_relation() {
        let q = CosineSeries::term(2, 0.2f64);
        let p = assemble_channel(10.0, Some(&q), 400).unwrap();
        let n = p.grid();
        for j in 0..8 {
            let (lambda, _) = p.eigenvalue(j).unwrap();
            let v = p.eigenvector(lambda);
            let rq = dot(&v, &p.a_mul(&v)) / dot(&v, &p.b_mul(&v));
            assert!((rq - lambda).abs() < 1e-10 * lambda.abs().max(1.0), "{j}: {rq} vs {lambda}");
            // λy₁ + y(1) = 0
            let (y1, aux) = (v[n - 1], v[n]);
            assert!((lambda * aux + y1).abs() < 1e-8 * y1.abs().max(1e-3), "{j}");
        }
    }

    #[test]
    fn dense_vectors_are_b_orthonormal() {
        let p = assemble_channel(2.0f64, None, 20).unwrap();
        let f = p.to_dense();
        let (vals, vecs) = solve_gevp_vectors(&f).unwrap();
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                let g = f.b.bilinear(&vecs[i], &vecs[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10);
            }
            let rq = f.a.bilinear(&vecs[i], &vecs[i]);
            assert!((rq - vals[i]).abs() < 1e-10 * vals[i].abs().max(1.0));
        }
    }

    #[test]
    fn oracle_over_operator() {
        let spec = OperatorSpec::power_law(2.0, 3.0, 3).unwrap();
        let q = PotentialSpec::zero().with_channel(1, CosineSeries::term(2, 0.2)).unwrap();
        let s = oracle_spectrum(&spec, &q, 200, 6).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].records[0].branch, Branch::Negative);
        assert!(s.iter().all(|c| c.records.len() == 6));
        let bad = PotentialSpec::zero().with_channel(9, CosineSeries::term(1, 0.1)).unwrap();
        assert!(oracle_spectrum(&spec, &bad, 50, 3).is_err());
    }

    #[test]
    fn text_dump() {
        let m = SymMatrix::from_diagonal(&[1.5, 2.0]);
        let mut out = Vec::new();
        m.write_text(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "1.5 0\n0 2\n");
    }

    proptest! {
        #[test]
        fn green_identity(seed in prop::collection::vec(-1.0f64..1.0, 2 * 41)) {
            let q = CosineSeries::new(vec![0.3, -0.2]).unwrap();
            let f = assemble_channel(10.0, Some(&q), 40).unwrap().to_dense();
            let (u, v) = seed.split_at(41);
            let uv = f.a.bilinear(u, v);
            let vu = f.a.bilinear(v, u);
            prop_assert!((uv - vu).abs() <= 1e-12 * (uv.abs() + 1.0));
        }

        #[test]
        fn mass_is_positive(seed in prop::collection::vec(-1.0f64..1.0, 31)) {
            let f = assemble_channel(3.0, None, 30).unwrap().to_dense();
            let norm: f64 = seed.iter().map(|x| x * x).sum();
            prop_assume!(norm > 1e-6);
            prop_assert!(f.b.bilinear(&seed, &seed) > 0.0);
        }
    }
}
