use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to norms and standard deviations before they divide anything.
pub const EPS: f64 = 1e-8;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Mat::filled(1, 1, value)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "Mat::from_vec: {} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn column(values: &[f64]) -> Self {
        Mat {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn set_row(&mut self, r: usize, values: &[f64]) {
        self.row_mut(r).copy_from_slice(values);
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = out.row_mut(r);
            for (d, &c) in dst.iter_mut().zip(idx) {
                *d = src[c];
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        debug_assert_eq!(self.shape(), other.shape());
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_inner(&self, other: &Mat, op: &'static str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            })
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        self.check_inner(other, "matmul", self.cols == other.rows)?;
        let mut out = Mat::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * n..(i + 1) * n];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b = &other.data[k * n..(k + 1) * n];
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += aik * bj;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Mat) -> Result<Mat> {
        self.check_inner(other, "matmul_t", self.cols == other.cols)?;
        self.matmul(&other.transpose())
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Mat) -> Result<Mat> {
        self.check_inner(other, "t_matmul", self.rows == other.rows)?;
        let (m, n) = (self.cols, other.cols);
        let mut out = Mat::zeros(m, n);
        for r in 0..self.rows {
            let a = self.row(r);
            let b = other.row(r);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                let o = &mut out.data[i * n..(i + 1) * n];
                for (oj, &bj) in o.iter_mut().zip(b) {
                    *oj += ai * bj;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!(
            "cosine_sim: length mismatch {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = norm(u);
    if nu == 0.0 {
        return Err(Error::Domain("cosine_sim: first operand `u` has zero norm".into()));
    }
    let nv = norm(v);
    if nv == 0.0 {
        return Err(Error::Domain("cosine_sim: second operand `v` has zero norm".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity with both norms floored at [`EPS`]; never fails, never NaN.
#[inline]
pub fn cosine_floored(u: &[f64], v: &[f64]) -> f64 {
    (dot(u, v) / (norm(u).max(EPS) * norm(v).max(EPS))).clamp(-1.0, 1.0)
}

/// Scales every row to unit norm (norm floored at [`EPS`]).
pub fn l2_normalize_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = norm(row).max(EPS);
        for x in row.iter_mut() {
            *x /= n;
        }
    }
    out
}

/// Column statistics fitted on one matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ZScore {
    /// Population mean and standard deviation per column.
    pub fn fit(train: &Mat) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::Domain("zscore: empty training matrix".into()));
        }
        let n = train.rows() as f64;
        let mut means = vec![0.0; train.cols()];
        for r in 0..train.rows() {
            for (m, x) in means.iter_mut().zip(train.row(r)) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; train.cols()];
        for r in 0..train.rows() {
            for ((v, x), m) in vars.iter_mut().zip(train.row(r)).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(ZScore { means, stds })
    }

    pub fn apply(&self, m: &Mat) -> Result<Mat> {
        if m.cols() != self.means.len() {
            return Err(Error::Domain(format!(
                "zscore: {} columns to normalize but statistics cover {}",
                m.cols(),
                self.means.len()
            )));
        }
        let mut out = m.clone();
        for r in 0..out.rows() {
            for ((x, mu), sd) in out.row_mut(r).iter_mut().zip(&self.means).zip(&self.stds) {
                *x = (*x - mu) / sd.max(EPS);
            }
        }
        Ok(out)
    }
}

/// Fits column statistics on `train` and applies them to `apply_to`.
pub fn zscore_fit_apply(train: &Mat, apply_to: &Mat) -> Result<(Mat, Vec<f64>, Vec<f64>)> {
    let z = ZScore::fit(train)?;
    let out = z.apply(apply_to)?;
    Ok((out, z.means, z.stds))
}
