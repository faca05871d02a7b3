//! Compressed sparse rows and a banded LU factorization.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row `(col, value)` lists. Duplicate
    /// columns in a row are summed in the order given.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                assert!(c < n, "column {c} out of range");
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                cols.push(c);
                values.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec(x, &mut out);
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                rows[c].push((i, v));
            }
        }
        CsrMatrix::from_rows(rows)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] = v;
            }
        }
        out
    }

    /// Largest absolute row sum.
    pub fn max_row_magnitude(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Smallest signed row sum; a lower bound for the Perron eigenvalue of a
    /// matrix with nonpositive off-diagonal entries.
    pub fn min_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// Lower and upper bandwidth under the ordering `perm` (new position ->
    /// old index).
    pub fn bandwidth(&self, perm: &[usize]) -> (usize, usize) {
        let inv = invert(perm);
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                let (pi, pc) = (inv[i], inv[c]);
                if pc < pi {
                    kl = kl.max(pi - pc);
                } else {
                    ku = ku.max(pc - pi);
                }
            }
        }
        (kl, ku)
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Pivoting policy for [`BandedLu`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pivoting {
    /// Row partial pivoting.
    Partial,
    /// No row exchanges. Only for nonsingular M-matrices, where it is stable
    /// and the solve of a positive right-hand side never cancels; any
    /// nonpositive pivot is reported as [`Error::Singular`].
    None,
}

/// LU factorization of `A - shift * I` stored in band form under a symmetric
/// reordering.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    /// `band[i * width + (j + kl - i)]` holds entry (i, j) for
    /// `i - kl <= j <= i + kl + ku`.
    band: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
    ku_eff: usize,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix, shift: f64, perm: &[usize], pivoting: Pivoting) -> Result<Self> {
        let n = a.dim();
        assert_eq!(perm.len(), n);
        let inv = invert(perm);
        let (kl, ku) = a.bandwidth(perm);
        let ku_eff = match pivoting {
            Pivoting::Partial => ku + kl,
            Pivoting::None => ku,
        };
        let width = kl + ku_eff + 1;
        let mut band = vec![0.0; n * width];
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_c, v) in a.row(old_i) {
                let j = inv[old_c];
                band[i * width + (j + kl - i)] += v;
            }
            band[i * width + kl] -= shift;
        }
        let mut lu = BandedLu {
            n,
            kl,
            width,
            band,
            pivots: (0..n).collect(),
            perm: perm.to_vec(),
            ku_eff,
        };
        lu.eliminate(pivoting)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn eliminate(&mut self, pivoting: Pivoting) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + self.ku_eff).min(n - 1);
            if pivoting == Pivoting::Partial {
                let mut p = k;
                let mut best = self.band[self.idx(k, k)].abs();
                for i in k + 1..=last_row {
                    let v = self.band[self.idx(i, k)].abs();
                    if v > best {
                        best = v;
                        p = i;
                    }
                }
                self.pivots[k] = p;
                if p != k {
                    for j in k..=last_col {
                        let (a, b) = (self.idx(k, j), self.idx(p, j));
                        self.band.swap(a, b);
                    }
                }
            }
            let pivot = self.band[self.idx(k, k)];
            // Without row exchanges a nonpositive pivot means the matrix is
            // not a nonsingular M-matrix.
            let bad = match pivoting {
                Pivoting::Partial => pivot == 0.0,
                Pivoting::None => pivot <= 0.0,
            };
            if bad || !pivot.is_finite() {
                return Err(Error::Singular(k));
            }
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.band[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.band[ik] = l;
                let (row_k, row_i) = (self.idx(k, k), self.idx(i, k));
                for off in 1..=(last_col - k) {
                    self.band[row_i + off] -= l * self.band[row_k + off];
                }
            }
        }
        Ok(())
    }

    /// Solves `(A - shift I) x = b` in place (original ordering).
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                y.swap(k, p);
            }
            let yk = y[k];
            if yk != 0.0 {
                for (i, yi) in y.iter_mut().enumerate().take((k + self.kl).min(n - 1) + 1).skip(k + 1) {
                    *yi -= self.band[self.idx(i, k)] * yk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            let base = self.idx(i, i);
            for off in 1..=((i + self.ku_eff).min(n - 1) - i) {
                s -= self.band[base + off] * y[i + off];
            }
            y[i] = s / self.band[base];
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}
