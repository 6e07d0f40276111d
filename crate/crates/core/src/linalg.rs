//! Complex tridiagonal LU (Thomas algorithm) with a reusable factorization.

use num_complex::Complex64;

/// LU factors of a tridiagonal matrix given by its three diagonals.
///
/// `lower[i]` couples row `i + 1` to column `i`, `upper[i]` couples row `i`
/// to column `i + 1`.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    lower: Vec<Complex64>,
    upper: Vec<Complex64>,
    /// Eliminated pivots.
    pivots: Vec<Complex64>,
}

/// Pivot whose magnitude fell below the relative threshold during factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallPivot {
    pub row: usize,
    pub magnitude: f64,
}

impl TridiagLu {
    pub fn factor(
        lower: &[Complex64],
        diag: &[Complex64],
        upper: &[Complex64],
        rel_tol: f64,
    ) -> Result<Self, SmallPivot> {
        let n = diag.len();
        assert!(n >= 1 && lower.len() + 1 == n && upper.len() + 1 == n);
        let scale = diag.iter().chain(lower).chain(upper).map(|v| v.norm()).fold(0.0, f64::max);
        let mut pivots = Vec::with_capacity(n);
        pivots.push(diag[0]);
        for i in 1..n {
            let prev = pivots[i - 1];
            if prev.norm() <= rel_tol * scale {
                return Err(SmallPivot { row: i - 1, magnitude: prev.norm() });
            }
            pivots.push(diag[i] - lower[i - 1] * upper[i - 1] / prev);
        }
        if pivots[n - 1].norm() <= rel_tol * scale {
            return Err(SmallPivot { row: n - 1, magnitude: pivots[n - 1].norm() });
        }
        Ok(Self { lower: lower.to_vec(), upper: upper.to_vec(), pivots })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [Complex64]) {
        let n = self.pivots.len();
        assert_eq!(rhs.len(), n);
        for i in 1..n {
            let m = self.lower[i - 1] / self.pivots[i - 1];
            let prev = rhs[i - 1];
            rhs[i] -= m * prev;
        }
        rhs[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] = (rhs[i] - self.upper[i] * next) / self.pivots[i];
        }
    }
}

/// Hermitian matrix stored by its lower band: `band[k * (b + 1) + d]` holds
/// `A[k][k − d]` for `d = 0..=b`.
#[derive(Debug, Clone)]
pub struct BandedHermitian {
    n: usize,
    b: usize,
    band: Vec<Complex64>,
}

impl BandedHermitian {
    pub fn zeros(n: usize, b: usize) -> Self {
        Self { n, b, band: vec![Complex64::new(0.0, 0.0); n * (b + 1)] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    /// Adds `v` to `A[row][col]` for `row ≥ col` (the mirrored entry is implied).
    pub fn add_lower(&mut self, row: usize, col: usize, v: Complex64) {
        debug_assert!(row >= col && row - col <= self.b);
        self.band[row * (self.b + 1) + (row - col)] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        if row >= col {
            if row - col > self.b {
                return Complex64::new(0.0, 0.0);
            }
            self.band[row * (self.b + 1) + (row - col)]
        } else {
            self.get(col, row).conj()
        }
    }

    /// `LDLᴴ` factorization without pivoting. Pivots below
    /// `rel_tol · max|A_kk|` are reported.
    pub fn factor(self, rel_tol: f64) -> Result<BandedLdl, SmallPivot> {
        self.factor_impl(rel_tol, None)
    }

    /// Like [`factor`](Self::factor) but replaces pivots below
    /// `rel_tol · max|A_kk|` by `replacement` instead of failing. The result
    /// is an exact factorization of a nearby matrix, suitable as a
    /// preconditioner.
    pub fn factor_floored(self, rel_tol: f64, replacement: f64) -> BandedLdl {
        match self.factor_impl(rel_tol, Some(replacement)) {
            Ok(f) => f,
            Err(_) => unreachable!("floored factorization cannot fail"),
        }
    }

    fn factor_impl(mut self, rel_tol: f64, floor: Option<f64>) -> Result<BandedLdl, SmallPivot> {
        let (n, b) = (self.n, self.b);
        let w = b + 1;
        let scale = (0..n).map(|k| self.band[k * w].re.abs()).fold(0.0, f64::max);
        let mut d = vec![0.0; n];
        for k in 0..n {
            let lo = k.saturating_sub(b);
            let mut dk = self.band[k * w].re;
            for j in lo..k {
                dk -= self.band[k * w + (k - j)].norm_sqr() * d[j];
            }
            if !(dk > rel_tol * scale) {
                match floor {
                    Some(v) => dk = v,
                    None => return Err(SmallPivot { row: k, magnitude: dk.abs() }),
                }
            }
            d[k] = dk;
            let hi = (k + b).min(n - 1);
            for i in k + 1..=hi {
                let mut v = self.band[i * w + (i - k)];
                for j in i.saturating_sub(b)..k {
                    v -= self.band[i * w + (i - j)] * self.band[k * w + (k - j)].conj() * d[j];
                }
                self.band[i * w + (i - k)] = v / dk;
            }
        }
        Ok(BandedLdl { n, b, l: self.band, d })
    }
}

/// Factors of a [`BandedHermitian`] matrix.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    b: usize,
    l: Vec<Complex64>,
    d: Vec<f64>,
}

impl BandedLdl {
    pub fn solve(&self, rhs: &mut [Complex64]) {
        let (n, b) = (self.n, self.b);
        let w = b + 1;
        assert_eq!(rhs.len(), n);
        for i in 0..n {
            let mut v = rhs[i];
            for j in i.saturating_sub(b)..i {
                v -= self.l[i * w + (i - j)] * rhs[j];
            }
            rhs[i] = v;
        }
        for i in 0..n {
            rhs[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut v = rhs[i];
            for k in i + 1..=(i + b).min(n - 1) {
                v -= self.l[k * w + (k - i)].conj() * rhs[k];
            }
            rhs[i] = v;
        }
    }
}
