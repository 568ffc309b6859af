//! Small dense solvers for the kriging system and field simulation.

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is singular (pivot {pivot:e} at column {column})")]
pub struct Singular {
    pub column: usize,
    pub pivot: f64,
}

impl Lu {
    /// Pivots with magnitude below `tol * max|A|` count as singular.
    pub fn factor(a: &Matrix, tol: f64) -> Result<Self, Singular> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu.get(i, k)))
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty column");
            if pivot.abs() <= tol * scale {
                return Err(Singular { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            for i in k + 1..n {
                let f = lu.get(i, k) / pivot;
                lu.set(i, k, f);
                for j in k + 1..n {
                    let v = lu.get(i, j) - f * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.dim();
        assert_eq!(b.len(), n, "right-hand side length");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / self.lu.get(i, i);
        }
        x
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let d = a.get(j, j) - (0..j).map(|k| l.get(j, k).powi(2)).sum::<f64>();
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let s = a.get(i, j) - (0..j).map(|k| l.get(i, k) * l.get(j, k)).sum::<f64>();
            l.set(i, j, s / d);
        }
    }
    Some(l)
}
