use nalgebra::{DMatrix, DVector};

/// Row-compressed copy of a dense matrix's nonzeros.
#[derive(Debug, Clone, Default)]
pub(crate) struct Csr {
    pub nrows: usize,
    pub start: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Scans column by column, the storage order, so large dense inputs
    /// stay cache friendly.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let data = m.as_slice();
        let mut start = vec![0usize; nrows + 1];
        for j in 0..ncols {
            for (i, &v) in data[j * nrows..(j + 1) * nrows].iter().enumerate() {
                if v != 0.0 {
                    start[i + 1] += 1;
                }
            }
        }
        for i in 0..nrows {
            start[i + 1] += start[i];
        }
        let nnz = start[nrows];
        let mut fill = start.clone();
        let mut col = vec![0usize; nnz];
        let mut val = vec![0.0; nnz];
        for j in 0..ncols {
            for (i, &v) in data[j * nrows..(j + 1) * nrows].iter().enumerate() {
                if v != 0.0 {
                    col[fill[i]] = j;
                    val[fill[i]] = v;
                    fill[i] += 1;
                }
            }
        }
        Csr {
            nrows,
            start,
            col,
            val,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.start[i]..self.start[i + 1];
        self.col[r.clone()]
            .iter()
            .copied()
            .zip(self.val[r].iter().copied())
    }

    /// Largest column distance between two nonzeros of one row.
    pub fn row_span(&self) -> usize {
        (0..self.nrows)
            .map(|i| {
                let r = &self.col[self.start[i]..self.start[i + 1]];
                match (r.first(), r.last()) {
                    (Some(a), Some(b)) => b - a,
                    _ => 0,
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Largest `|i - j|` over the nonzeros.
    pub fn diagonal_span(&self) -> usize {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// out = M x
    pub fn mul(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let (x, out) = (x.as_slice(), out.as_mut_slice());
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            let r = self.start[i]..self.start[i + 1];
            *o = self.col[r.clone()]
                .iter()
                .zip(&self.val[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    /// out = M^T y
    pub fn mul_t(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        let out = out.as_mut_slice();
        out.fill(0.0);
        for (i, &yi) in y.as_slice().iter().enumerate().take(self.nrows) {
            if yi != 0.0 {
                let r = self.start[i]..self.start[i + 1];
                for (&j, &v) in self.col[r.clone()].iter().zip(&self.val[r]) {
                    out[j] += v * yi;
                }
            }
        }
    }
}

/// Symmetric matrix stored as its lower band: entry `(i, j)` with
/// `i - bw <= j <= i` at `data[i * (bw + 1) + bw - (i - j)]`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    pub n: usize,
    pub bw: usize,
    pub data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Adds `v` at `(i, j)` (and implicitly `(j, i)`); `|i - j| <= bw`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[i * (self.bw + 1) + self.bw - (i - j)] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + self.bw - (i - j)]
    }

    #[cfg(test)]
    pub fn from_dense(k: &DMatrix<f64>) -> Self {
        let n = k.nrows();
        let mut bw = 0;
        for j in 0..n {
            for i in (j + bw + 1)..n {
                if k[(i, j)] != 0.0 {
                    bw = bw.max(i - j);
                }
            }
        }
        let mut b = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                b.add(i, j, k[(i, j)]);
            }
        }
        b
    }
}

/// Cholesky factor of a banded symmetric positive definite matrix, stored
/// in the same band layout. With full bandwidth this is the ordinary dense
/// factorization.
#[derive(Debug, Clone)]
pub(crate) struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    /// `None` if a pivot is not positive.
    pub fn factor(mut k: BandMatrix) -> Option<Self> {
        let (n, bw, w) = (k.n, k.bw, k.bw + 1);
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut s = k.get(j, j);
            for p in k0..j {
                let v = k.get(j, p);
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            let d = s.sqrt();
            k.data[j * w + bw] = d;
            for i in (j + 1)..n.min(j + bw + 1) {
                let mut s = k.get(i, j);
                for p in i.saturating_sub(bw).max(k0)..j {
                    s -= k.get(i, p) * k.get(j, p);
                }
                k.data[i * w + bw - (i - j)] = s / d;
            }
        }
        Some(BandCholesky { l: k })
    }

    #[cfg(test)]
    pub fn factor_dense(k: &DMatrix<f64>) -> Option<Self> {
        Self::factor(BandMatrix::from_dense(k))
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let l = &self.l;
        let (n, bw) = (l.n, l.bw);
        let b = b.as_mut_slice();
        for i in 0..n {
            let mut s = b[i];
            for p in i.saturating_sub(bw)..i {
                s -= l.get(i, p) * b[p];
            }
            b[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in (i + 1)..n.min(i + bw + 1) {
                s -= l.get(p, i) * b[p];
            }
            b[i] = s / l.get(i, i);
        }
    }
}

pub(crate) fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
