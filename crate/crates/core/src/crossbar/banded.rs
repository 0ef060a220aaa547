//! Symmetric positive-definite banded matrices and their Cholesky factor.

/// Lower band of a symmetric matrix. Row `i` keeps columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

/// The factor failed at this row: the pivot was not positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite(pub usize);

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `value` at (i, j) and, implicitly, (j, i).
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        assert!(hi - lo <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let s = self.slot(hi, lo);
        self.data[s] += value;
    }

    /// Stamps a conductance between two unknowns.
    pub fn stamp(&mut self, a: usize, b: usize, g: f64) {
        self.add(a, a, g);
        self.add(b, b, g);
        self.add(a, b, -g);
    }

    /// In-place Cholesky factorization `A = L Lᵀ`, keeping the band.
    pub fn factor(mut self) -> Result<BandedCholesky, NotPositiveDefinite> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let i_lo = i.saturating_sub(self.bw);
            for j in i_lo..=i {
                let p_lo = i_lo.max(j.saturating_sub(self.bw));
                let row_i = &self.data[i * w..(i + 1) * w];
                let row_j = &self.data[j * w..(j + 1) * w];
                let bw = self.bw;
                let mut dot = 0.0;
                for p in p_lo..j {
                    dot += row_i[p + bw - i] * row_j[p + bw - j];
                }
                let s = i * w + j + bw - i;
                let value = self.data[s] - dot;
                if i == j {
                    if !(value > 0.0) || !value.is_finite() {
                        return Err(NotPositiveDefinite(i));
                    }
                    self.data[s] = value.sqrt();
                } else {
                    self.data[s] = value / self.data[j * w + self.bw];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, bw, w) = (l.n, l.bw, l.bw + 1);
        assert_eq!(rhs.len(), n);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &l.data[i * w..(i + 1) * w];
            let mut acc = y[i];
            for p in lo..i {
                acc -= row[p + bw - i] * y[p];
            }
            y[i] = acc / row[bw];
        }
        for i in (0..n).rev() {
            y[i] /= l.data[i * w + bw];
            let yi = y[i];
            let lo = i.saturating_sub(bw);
            let row = &l.data[i * w..(i + 1) * w];
            for p in lo..i {
                y[p] -= row[p + bw - i] * yi;
            }
        }
        y
    }
}
