//! Minimal fixed-size linear algebra for dimensions 1..=3.
//!
//! Points are stored as `[f64; 3]` with unused trailing coordinates zero, so
//! the same code paths serve every dimension without generics.

pub type Point = [f64; 3];

pub const ORIGIN: Point = [0.0; 3];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: &Point, b: &Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: &Point, c: f64) -> Point {
    [a[0] * c, a[1] * c, a[2] * c]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Dense symmetric matrix for d ≤ 3, stored row-major over the full 3x3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    pub dim: usize,
    pub a: [[f64; 3]; 3],
}

impl Mat {
    pub fn identity(dim: usize) -> Self {
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Mat { dim, a }
    }

    pub fn from_rows(dim: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), dim * dim);
        let mut a = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                a[i][j] = rows[i * dim + j];
            }
        }
        Mat { dim, a }
    }

    pub fn apply(&self, y: &Point) -> Point {
        let mut out = ORIGIN;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += self.a[i][j] * y[j];
            }
        }
        out
    }

    pub fn quad_form(&self, y: &Point) -> f64 {
        dot(y, &self.apply(y))
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            3 => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
            _ => unreachable!("dim must be 1..=3"),
        }
    }

    pub fn inverse(&self) -> Option<Mat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let a = &self.a;
        let mut inv = [[0.0; 3]; 3];
        match self.dim {
            1 => inv[0][0] = 1.0 / det,
            2 => {
                inv[0][0] = a[1][1] / det;
                inv[0][1] = -a[0][1] / det;
                inv[1][0] = -a[1][0] / det;
                inv[1][1] = a[0][0] / det;
            }
            3 => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                        // cofactor transpose
                        inv[j][i] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) / det;
                    }
                }
            }
            _ => unreachable!(),
        }
        Some(Mat { dim: self.dim, a: inv })
    }

    /// Cholesky test for symmetric positive definiteness.
    pub fn is_positive_definite(&self) -> bool {
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..self.dim {
            for j in 0..=i {
                let mut sum = self.a[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return false;
                    }
                    l[i][j] = sum.sqrt();
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        true
    }

    /// Smallest eigenvalue (symmetric part), by characteristic polynomial for
    /// d ≤ 2 and bisection on the Cholesky test for d = 3.
    pub fn min_eigenvalue(&self) -> f64 {
        match self.dim {
            1 => self.a[0][0],
            2 => {
                let (p, q, r) = (self.a[0][0], 0.5 * (self.a[0][1] + self.a[1][0]), self.a[1][1]);
                let mean = 0.5 * (p + r);
                let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
                mean - rad
            }
            3 => {
                let bound = self
                    .a
                    .iter()
                    .take(3)
                    .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0f64, f64::max);
                let shifted = |lam: f64| {
                    let mut m = *self;
                    for i in 0..3 {
                        m.a[i][i] -= lam;
                    }
                    m.is_positive_definite()
                };
                let (mut lo, mut hi) = (-bound - 1.0, bound + 1.0);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if shifted(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
            _ => unreachable!(),
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let mut neg = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                neg.a[i][j] = -neg.a[i][j];
            }
        }
        -neg.min_eigenvalue()
    }
}
