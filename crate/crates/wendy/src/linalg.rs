//! Thin bridge to `faer` for the dense factorisations where it is much
//! faster than `nalgebra`: the thin SVD and the Cholesky factorisation.

use std::sync::Once;

use faer::{Mat, MatRef, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

// Trials already run in parallel, and a fixed sequential schedule keeps
// results bit-identical regardless of the pool size.
fn init() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// `A = U·diag(s)·Vᵀ` with `s` sorted descending.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    init();
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Consistency(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    if s.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Consistency("singular values are not sorted".into()));
    }
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        s,
        v: from_faer(svd.V()),
    })
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub(crate) struct Cholesky {
    l: Mat<f64>,
}

impl Cholesky {
    pub fn new(c: &DMatrix<f64>) -> Option<Self> {
        init();
        to_faer(c).llt(Side::Lower).ok().map(|f| Self { l: f.L().to_owned() })
    }

    /// `L⁻¹·B`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = to_faer(b);
        self.l.solve_lower_triangular_in_place(x.as_mut());
        from_faer(x.as_ref())
    }
}

/// Symmetric matrix stored by its lower band: entry `(i, j)` with
/// `i - bw <= j <= i` lives at `i * (bw + 1) + (j + bw - i)`.
#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Lower-triangle entry; `j <= i` and `i - j <= bw`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `a·self + b·I`.
    pub fn scaled_shift(&self, a: f64, b: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= a);
        for i in 0..self.n {
            let k = out.idx(i, i);
            out.data[k] += b;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            let (r, c) = if j <= i { (i, j) } else { (j, i) };
            if r - c <= self.bw {
                self.get(r, c)
            } else {
                0.0
            }
        })
    }
}

/// Cholesky factor of a banded SPD matrix; the factor keeps the band.
pub(crate) struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn new(a: &BandMatrix) -> Option<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        // Row i holds columns i-bw..=i, so L[i][k] is at i*w + (k + bw - i).
        let mut l = a.data.clone();
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let len = j - lo;
                let ri = i * w + (lo + bw - i);
                let rj = j * w + (lo + bw - j);
                let dot: f64 = l[ri..ri + len].iter().zip(&l[rj..rj + len]).map(|(x, y)| x * y).sum();
                let s = l[i * w + (j + bw - i)] - dot;
                if i == j {
                    if !(s > 0.0 && s.is_finite()) {
                        return None;
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Some(Self {
            l: BandMatrix { n, bw, data: l },
        })
    }

    /// `L⁻¹·B` by banded forward substitution.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let l = &self.l.data;
        assert_eq!(b.nrows(), n, "right-hand side has the wrong number of rows");
        let mut x = b.clone();
        // Column-major storage: each chunk of n values is one column.
        for col in x.as_mut_slice().chunks_mut(n) {
            for i in 0..n {
                let lo = i.saturating_sub(bw);
                let row = &l[i * w + (lo + bw - i)..i * w + bw];
                let dot: f64 = row.iter().zip(&col[lo..i]).map(|(x, y)| x * y).sum();
                col[i] = (col[i] - dot) / l[i * w + bw];
            }
        }
        x
    }
}
