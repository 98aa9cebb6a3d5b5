//! Uniform tensor grids over a box [-L, L]^d with analytic tail models.
//!
//! A [`GridFunction`] couples sampled node values with an optional smooth
//! tail model used beyond the box and an asymptotic cone model; sublevel-set
//! measures of convex samples then extend past the box in closed form.

use crate::cone::{ConeModel, ConeShape};
use crate::error::{Error, Result};
use crate::la::{dot, Mat, Point};

pub const CONVEX_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Growth {
    /// Cone-asymptotic: u(y) = Φ(y) + O(1) at infinity (exponent 1 < s).
    Cone,
    /// Quadratic growth; usable only with the localized kernel.
    Quadratic,
}

/// Grid geometry: `n[i]` nodes per axis, spacing `h`, covering [-L, L]^d
/// with (n[i]-1) h = 2L on every axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: [usize; 3],
    pub h: f64,
    pub half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, nodes_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Validation(format!("dimension {dim} not in 1..=3")));
        }
        if nodes_per_axis < 3 {
            return Err(Error::Validation("need at least 3 nodes per axis".into()));
        }
        if half_width <= 0.0 {
            return Err(Error::Validation(format!("box half-width must be positive, got {half_width}")));
        }
        let mut n = [1usize; 3];
        n[..dim].fill(nodes_per_axis);
        Ok(Grid {
            dim,
            n,
            h: 2.0 * half_width / (nodes_per_axis - 1) as f64,
            half_width,
        })
    }

    /// Build from a requested spacing; the spacing is adjusted so the box is
    /// covered exactly.
    pub fn from_spacing(dim: usize, half_width: f64, h: f64) -> Result<Self> {
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::BadSpacing(h));
        }
        let per_axis = ((2.0 * half_width / h).round() as usize + 1).max(3);
        Self::new(dim, half_width, per_axis)
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, _axis: usize, k: usize) -> f64 {
        -self.half_width + k as f64 * self.h
    }

    pub fn point(&self, idx: usize) -> Point {
        let k = self.unravel(idx);
        let mut p = [0.0; 3];
        for i in 0..self.dim {
            p[i] = self.coord(i, k[i]);
        }
        p
    }

    pub fn ravel(&self, k: [usize; 3]) -> usize {
        (k[0] * self.n[1] + k[1]) * self.n[2] + k[2]
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k2 = idx % self.n[2];
        let rest = idx / self.n[2];
        [rest / self.n[1], rest % self.n[1], k2]
    }

    /// Nearest node to `p`, or None when `p` is outside the box (beyond h/2).
    pub fn nearest_node(&self, p: &Point) -> Option<usize> {
        let mut k = [0usize; 3];
        for i in 0..self.dim {
            let t = (p[i] + self.half_width) / self.h;
            let r = t.round();
            if r < -0.5 || r > (self.n[i] - 1) as f64 + 0.5 {
                return None;
            }
            k[i] = r.clamp(0.0, (self.n[i] - 1) as f64) as usize;
        }
        Some(self.ravel(k))
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|i| p[i].abs() <= self.half_width + 1e-12 * self.half_width)
    }

    /// Number of node layers in the boundary band (10% of the half-width).
    pub fn band_layers(&self) -> usize {
        (((self.n[0] - 1) / 2) / 10).max(1)
    }

    pub fn is_in_band(&self, idx: usize) -> bool {
        let k = self.unravel(idx);
        let b = self.band_layers();
        (0..self.dim).any(|i| k[i] < b || k[i] + b >= self.n[i])
    }

    /// Offset directions for midpoint-convexity and Hessian stencils:
    /// axes plus all distinct diagonals (up to sign).
    pub fn stencil_directions(&self) -> Vec<[i64; 3]> {
        match self.dim {
            1 => vec![[1, 0, 0]],
            2 => vec![[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0]],
            3 => {
                let mut dirs = Vec::new();
                for a in -1i64..=1 {
                    for b in -1i64..=1 {
                        for c in -1i64..=1 {
                            if (a, b, c) == (0, 0, 0) {
                                continue;
                            }
                            // keep one representative per +/- pair
                            if (a, b, c) < (-a, -b, -c) {
                                continue;
                            }
                            dirs.push([a, b, c]);
                        }
                    }
                }
                dirs
            }
            _ => unreachable!(),
        }
    }

    fn shift(&self, k: [usize; 3], e: &[i64; 3], m: i64) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for i in 0..3 {
            let v = k[i] as i64 + e[i] * m;
            if v < 0 || v >= self.n[i] as i64 {
                return None;
            }
            out[i] = v as usize;
        }
        Some(out)
    }
}

/// Smooth analytic model of a function, used to evaluate beyond the box and
/// as the subtracted tail in spectral transforms.
#[derive(Clone, Debug, PartialEq)]
pub enum TailModel {
    /// √(ρ² + yᵀMy) + offset
    EllipticCone { m: Mat, rho: f64, offset: f64 },
    /// radius·ln Σ exp((aₖ·y + cₖ)/radius); hard max when radius = 0
    LogSumExp { planes: Vec<(Point, f64)>, radius: f64 },
    /// ½ yᵀMy
    Quadratic { m: Mat },
}

impl TailModel {
    pub fn eval(&self, y: &Point) -> f64 {
        match self {
            TailModel::EllipticCone { m, rho, offset } => (rho * rho + m.quad_form(y)).sqrt() + offset,
            TailModel::LogSumExp { planes, radius } => {
                let vals = planes.iter().map(|(a, c)| dot(a, y) + c);
                if *radius == 0.0 {
                    vals.fold(f64::NEG_INFINITY, f64::max)
                } else {
                    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = vals.map(|v| ((v - m) / radius).exp()).sum();
                    m + radius * sum.ln()
                }
            }
            TailModel::Quadratic { m } => 0.5 * m.quad_form(y),
        }
    }

    /// f(x+y) − f(x) in a cancellation-free form (the naive difference loses
    /// all precision for |y| ≪ |x|).
    pub fn increment(&self, x: &Point, y: &Point) -> f64 {
        match self {
            TailModel::EllipticCone { m, rho, .. } => {
                let qx = m.quad_form(x);
                let dq = 2.0 * dot(y, &m.apply(x)) + m.quad_form(y);
                dq / ((rho * rho + qx + dq).max(0.0).sqrt() + (rho * rho + qx).sqrt())
            }
            TailModel::LogSumExp { planes, radius } => {
                if *radius == 0.0 {
                    let best = |p: &Point| -> usize {
                        planes
                            .iter()
                            .enumerate()
                            .max_by(|(_, (a, c)), (_, (a2, c2))| (dot(a, p) + c).total_cmp(&(dot(a2, p) + c2)))
                            .map(|(i, _)| i)
                            .unwrap()
                    };
                    let xy = [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
                    let (kx, kxy) = (best(x), best(&xy));
                    if kx == kxy {
                        dot(&planes[kx].0, y)
                    } else {
                        self.eval(&xy) - self.eval(x)
                    }
                } else {
                    let xy = [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
                    self.eval(&xy) - self.eval(x)
                }
            }
            TailModel::Quadratic { m } => dot(y, &m.apply(x)) + 0.5 * m.quad_form(y),
        }
    }

    /// The asymptotic cone model this tail converges to, when one exists.
    pub fn cone(&self) -> Option<ConeModel> {
        match self {
            TailModel::EllipticCone { m, offset, .. } => Some(ConeModel {
                shape: ConeShape::Elliptic { m: *m, inv_m: m.inverse()?, det_m: m.det() },
                offset: *offset,
                offset_exact: true,
            }),
            TailModel::LogSumExp { planes, .. } => {
                let slopes: Vec<Point> = planes.iter().map(|(a, _)| *a).collect();
                let offsets: Vec<f64> = planes.iter().map(|(_, c)| *c).collect();
                let same = offsets.iter().all(|c| (c - offsets[0]).abs() < 1e-14);
                Some(ConeModel {
                    shape: ConeShape::Polyhedral { slopes },
                    offset: if same { offsets[0] } else { 0.0 },
                    offset_exact: same,
                })
            }
            TailModel::Quadratic { .. } => None,
        }
    }
}

/// A sampled function on a grid with tags and tail data.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub cone: Option<ConeModel>,
    pub tail: Option<TailModel>,
    /// Measured sup over boundary-band nodes of |u − Φ − offset|.
    pub o_max: f64,
    pub growth: Growth,
    pub convex: bool,
    /// True when the node values are exact samples of the tail model, so
    /// off-grid evaluation can use the model everywhere.
    pub analytic: bool,
}

impl GridFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>, tail: Option<TailModel>, growth: Growth) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Validation(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value at node {bad}")));
        }
        let cone = tail.as_ref().and_then(|t| t.cone());
        let mut f = GridFunction {
            grid,
            values,
            cone,
            tail,
            o_max: 0.0,
            growth,
            convex: false,
            analytic: false,
        };
        f.convex = f.check_midpoint_convexity() <= CONVEX_TOL * f.scale();
        f.o_max = f.measure_band_offset();
        f.analytic = f.probe_tail_exactness();
        Ok(f)
    }

    /// Spot-check whether the tail model reproduces the stored node values.
    fn probe_tail_exactness(&self) -> bool {
        let Some(tail) = &self.tail else { return false };
        let n = self.grid.len();
        let stride = (n / 17).max(1);
        let tol = 1e-12 * self.scale();
        (0..n)
            .step_by(stride)
            .all(|i| (tail.eval(&self.grid.point(i)) - self.values[i]).abs() <= tol)
    }

    /// Characteristic magnitude used to scale tolerances.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Worst violation of discrete midpoint convexity
    /// u(x+he) + u(x-he) - 2u(x) >= 0 over interior nodes and stencil
    /// directions (0 when convex).
    pub fn check_midpoint_convexity(&self) -> f64 {
        let dirs = self.grid.stencil_directions();
        let mut worst = 0.0f64;
        for idx in 0..self.grid.len() {
            let k = self.grid.unravel(idx);
            for e in &dirs {
                if let (Some(kp), Some(km)) = (self.grid.shift(k, e, 1), self.grid.shift(k, e, -1)) {
                    let gap = self.values[self.grid.ravel(kp)] + self.values[self.grid.ravel(km)]
                        - 2.0 * self.values[idx];
                    worst = worst.max(-gap);
                }
            }
        }
        worst
    }

    fn measure_band_offset(&self) -> f64 {
        let Some(cone) = &self.cone else { return 0.0 };
        let mut sup = 0.0f64;
        for idx in 0..self.grid.len() {
            if self.grid.is_in_band(idx) {
                let p = self.grid.point(idx);
                sup = sup.max((self.values[idx] - cone.phi(&p) - cone.offset).abs());
            }
        }
        sup
    }

    /// Multilinear interpolation inside the box; the tail model (or cone plus
    /// offset) beyond it. Exact-sample functions evaluate the model directly.
    pub fn eval_extended(&self, p: &Point) -> f64 {
        if self.analytic {
            return self.tail.as_ref().unwrap().eval(p);
        }
        if self.grid.contains(p) {
            return self.interpolate(p);
        }
        if let Some(t) = &self.tail {
            return t.eval(p);
        }
        if let Some(c) = &self.cone {
            return c.phi(p) + c.offset;
        }
        // clamped extrapolation as a last resort
        let mut q = *p;
        for i in 0..self.grid.dim {
            q[i] = q[i].clamp(-self.grid.half_width, self.grid.half_width);
        }
        self.interpolate(&q)
    }

    pub fn interpolate(&self, p: &Point) -> f64 {
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..g.dim {
            let t = ((p[i] + g.half_width) / g.h).clamp(0.0, (g.n[i] - 1) as f64);
            let k = (t.floor() as usize).min(g.n[i] - 2);
            base[i] = k;
            frac[i] = t - k as f64;
        }
        let mut acc = 0.0;
        let corners = 1usize << g.dim;
        for c in 0..corners {
            let mut k = base;
            let mut w = 1.0;
            for i in 0..g.dim {
                if c >> i & 1 == 1 {
                    k[i] += 1;
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            acc += w * self.values[g.ravel(k)];
        }
        acc
    }

    /// Second-order central-difference gradient at a node (one-sided at the
    /// box faces).
    pub fn gradient(&self, idx: usize) -> Point {
        let g = &self.grid;
        let k = g.unravel(idx);
        let mut out = [0.0; 3];
        for i in 0..g.dim {
            let mut e = [0i64; 3];
            e[i] = 1;
            out[i] = match (g.shift(k, &e, 1), g.shift(k, &e, -1)) {
                (Some(kp), Some(km)) => {
                    (self.values[g.ravel(kp)] - self.values[g.ravel(km)]) / (2.0 * g.h)
                }
                (Some(kp), None) => (self.values[g.ravel(kp)] - self.values[idx]) / g.h,
                (None, Some(km)) => (self.values[idx] - self.values[g.ravel(km)]) / g.h,
                (None, None) => 0.0,
            };
        }
        out
    }

    /// Directional second difference (u(x+mhe) + u(x-mhe) - 2u(x)) / |mhe|²,
    /// or None when the stencil leaves the grid.
    pub fn second_difference(&self, idx: usize, e: &[i64; 3], m: i64) -> Option<f64> {
        let g = &self.grid;
        let k = g.unravel(idx);
        let kp = g.shift(k, e, m)?;
        let km = g.shift(k, e, -m)?;
        let step2 = (e.iter().map(|v| (v * m) as f64 * (v * m) as f64).sum::<f64>()) * g.h * g.h;
        Some((self.values[g.ravel(kp)] + self.values[g.ravel(km)] - 2.0 * self.values[idx]) / step2)
    }

    /// Finite-difference Hessian estimate from axis and diagonal second
    /// differences.
    pub fn hessian(&self, idx: usize) -> Option<Mat> {
        let d = self.grid.dim;
        let mut m = Mat::identity(d);
        for i in 0..d {
            let mut e = [0i64; 3];
            e[i] = 1;
            m.a[i][i] = self.second_difference(idx, &e, 1)?;
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let mut e = [0i64; 3];
                e[i] = 1;
                e[j] = 1;
                // diagonal second difference equals (H_ii + H_jj + 2 H_ij)/2
                let dd = self.second_difference(idx, &e, 1)?;
                let hij = 0.5 * (2.0 * dd - m.a[i][i] - m.a[j][j]);
                m.a[i][j] = hij;
                m.a[j][i] = hij;
            }
        }
        Some(m)
    }
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

/// Supported analytic builder families.
#[derive(Clone, Debug)]
pub enum BuilderSpec {
    /// u(y) = √(a² + yᵀMy) − a, cone Φ = √(yᵀMy)
    SmoothCone { a: f64, m: Mat },
    /// max of affine planes, optionally log-sum-exp smoothed
    MaxPlanes { planes: Vec<(Point, f64)>, radius: f64 },
    /// u(y) = ½ yᵀMy (quadratic growth)
    Quadratic { m: Mat },
    /// u(y) = −√(a² + yᵀMy): concave probe input
    NegCone { a: f64, m: Mat },
    /// read a grid file
    File { path: String },
}

pub fn build_grid_function(spec: &BuilderSpec, grid: Grid) -> Result<GridFunction> {
    match spec {
        BuilderSpec::SmoothCone { a, m } => {
            if *a <= 0.0 {
                return Err(Error::Validation(format!("smooth cone needs a > 0, got {a}")));
            }
            if m.dim != grid.dim || !m.is_positive_definite() {
                return Err(Error::NotPositiveDefinite);
            }
            let tail = TailModel::EllipticCone { m: *m, rho: *a, offset: -a };
            sample(grid, &tail, Growth::Cone)
        }
        BuilderSpec::MaxPlanes { planes, radius } => {
            if planes.is_empty() {
                return Err(Error::Validation("max-of-planes needs at least one plane".into()));
            }
            if *radius < 0.0 {
                return Err(Error::Validation("smoothing radius must be nonnegative".into()));
            }
            let tail = TailModel::LogSumExp { planes: planes.clone(), radius: *radius };
            sample(grid, &tail, Growth::Cone)
        }
        BuilderSpec::Quadratic { m } => {
            if m.dim != grid.dim || !m.is_positive_definite() {
                return Err(Error::NotPositiveDefinite);
            }
            let tail = TailModel::Quadratic { m: *m };
            sample(grid, &tail, Growth::Quadratic)
        }
        BuilderSpec::NegCone { a, m } => {
            if *a <= 0.0 {
                return Err(Error::Validation(format!("negative cone needs a > 0, got {a}")));
            }
            let values = (0..grid.len())
                .map(|i| {
                    let p = grid.point(i);
                    -(a * a + m.quad_form(&p)).sqrt()
                })
                .collect();
            GridFunction::from_values(grid, values, None, Growth::Cone)
        }
        BuilderSpec::File { path } => read_grid_file(std::path::Path::new(path)),
    }
}

fn sample(grid: Grid, tail: &TailModel, growth: Growth) -> Result<GridFunction> {
    let values = (0..grid.len()).map(|i| tail.eval(&grid.point(i))).collect();
    GridFunction::from_values(grid, values, Some(tail.clone()), growth)
}

/// Parse the builder-spec grammar `name:key=val,key=val`. Matrix values are
/// row-major comma-separated, so tokens without `=` continue the previous
/// value list.
pub fn parse_builder_spec(s: &str, dim: usize) -> Result<BuilderSpec> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), r),
        None => (s.trim(), ""),
    };
    let mut kv: Vec<(String, Vec<String>)> = Vec::new();
    for tok in rest.split(',').filter(|t| !t.trim().is_empty()) {
        match tok.split_once('=') {
            Some((k, v)) => kv.push((k.trim().to_string(), vec![v.trim().to_string()])),
            None => match kv.last_mut() {
                Some((_, vals)) => vals.push(tok.trim().to_string()),
                None => {
                    return Err(Error::Validation(format!(
                        "malformed builder-spec: dangling token `{tok}` in `{s}`"
                    )))
                }
            },
        }
    }
    let get_f64 = |kv: &[(String, Vec<String>)], key: &str| -> Result<Option<f64>> {
        match kv.iter().find(|(k, _)| k == key) {
            None => Ok(None),
            Some((_, vals)) => {
                let joined = vals.join(",");
                vals[0]
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Validation(format!("builder-spec key `{key}`: bad number `{joined}`")))
            }
        }
    };
    let get_mat = |kv: &[(String, Vec<String>)], key: &str| -> Result<Option<Mat>> {
        match kv.iter().find(|(k, _)| k == key) {
            None => Ok(None),
            Some((_, vals)) => {
                let nums: Result<Vec<f64>> = vals
                    .iter()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::Validation(format!("builder-spec key `{key}`: bad number `{v}`")))
                    })
                    .collect();
                let nums = nums?;
                if nums.len() == 1 {
                    let mut m = Mat::identity(dim);
                    for i in 0..dim {
                        m.a[i][i] = nums[0];
                    }
                    return Ok(Some(m));
                }
                if nums.len() != dim * dim {
                    return Err(Error::Validation(format!(
                        "builder-spec key `{key}`: expected {} entries, got {}",
                        dim * dim,
                        nums.len()
                    )));
                }
                Ok(Some(Mat::from_rows(dim, &nums)))
            }
        }
    };
    match name {
        "smoothcone" => Ok(BuilderSpec::SmoothCone {
            a: get_f64(&kv, "a")?.unwrap_or(1.0),
            m: get_mat(&kv, "m")?.unwrap_or_else(|| Mat::identity(dim)),
        }),
        "negcone" => Ok(BuilderSpec::NegCone {
            a: get_f64(&kv, "a")?.unwrap_or(1.0),
            m: get_mat(&kv, "m")?.unwrap_or_else(|| Mat::identity(dim)),
        }),
        "quadratic" => Ok(BuilderSpec::Quadratic {
            m: get_mat(&kv, "m")?.unwrap_or_else(|| Mat::identity(dim)),
        }),
        "abs" => Ok(BuilderSpec::MaxPlanes {
            planes: abs_planes(dim),
            radius: get_f64(&kv, "smooth")?.unwrap_or(0.0),
        }),
        "maxplanes" => {
            let Some((_, vals)) = kv.iter().find(|(k, _)| k == "planes") else {
                return Err(Error::Validation("maxplanes requires planes=...".into()));
            };
            let nums: Result<Vec<f64>> = vals
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Validation(format!("builder-spec key `planes`: bad number `{v}`")))
                })
                .collect();
            let nums = nums?;
            let stride = dim + 1;
            if nums.is_empty() || nums.len() % stride != 0 {
                return Err(Error::Validation(format!(
                    "maxplanes: plane list length {} is not a multiple of dim+1 = {stride}",
                    nums.len()
                )));
            }
            let planes = nums
                .chunks(stride)
                .map(|c| {
                    let mut a = [0.0; 3];
                    a[..dim].copy_from_slice(&c[..dim]);
                    (a, c[dim])
                })
                .collect();
            Ok(BuilderSpec::MaxPlanes {
                planes,
                radius: get_f64(&kv, "smooth")?.unwrap_or(0.0),
            })
        }
        "file" => {
            let Some((_, vals)) = kv.iter().find(|(k, _)| k == "path") else {
                return Err(Error::Validation("file builder requires path=...".into()));
            };
            Ok(BuilderSpec::File { path: vals.join(",") })
        }
        other => Err(Error::Validation(format!("unknown builder family `{other}`"))),
    }
}

/// ±e_i slope planes: |y| in d = 1, the max-norm cone in d > 1.
fn abs_planes(dim: usize) -> Vec<(Point, f64)> {
    let mut planes = Vec::new();
    for i in 0..dim {
        for sgn in [1.0, -1.0] {
            let mut a = [0.0; 3];
            a[i] = sgn;
            planes.push((a, 0.0));
        }
    }
    planes
}

// ---------------------------------------------------------------------------
// file format
// ---------------------------------------------------------------------------
//
//   line 1: d n1 [n2 [n3]]
//   line 2: L h
//   line 3: optional `cone <name> <params...>`
//   then one node value per line, row-major, >= 17 significant digits.

pub fn write_grid_file(f: &GridFunction, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let g = &f.grid;
    write!(out, "{}", g.dim)?;
    for i in 0..g.dim {
        write!(out, " {}", g.n[i])?;
    }
    writeln!(out)?;
    writeln!(out, "{:.16e} {:.16e}", g.half_width, g.h)?;
    match &f.tail {
        Some(TailModel::EllipticCone { m, rho, offset }) => {
            write!(out, "cone elliptic")?;
            for i in 0..g.dim {
                for j in 0..g.dim {
                    write!(out, " {:.16e}", m.a[i][j])?;
                }
            }
            writeln!(out, " {:.16e} {:.16e}", rho, offset)?;
        }
        Some(TailModel::LogSumExp { planes, radius }) => {
            write!(out, "cone polyhedral {} {:.16e}", planes.len(), radius)?;
            for (a, c) in planes {
                for ai in a.iter().take(g.dim) {
                    write!(out, " {:.16e}", ai)?;
                }
                write!(out, " {:.16e}", c)?;
            }
            writeln!(out)?;
        }
        Some(TailModel::Quadratic { m }) => {
            write!(out, "cone quadratic")?;
            for i in 0..g.dim {
                for j in 0..g.dim {
                    write!(out, " {:.16e}", m.a[i][j])?;
                }
            }
            writeln!(out)?;
        }
        None => writeln!(out, "cone none")?,
    }
    for v in &f.values {
        writeln!(out, "{:.16e}", v)?;
    }
    Ok(())
}

pub fn read_grid_file(path: &std::path::Path) -> Result<GridFunction> {
    let text = std::fs::read_to_string(path)?;
    parse_grid_text(&text)
}

pub fn parse_grid_text(text: &str) -> Result<GridFunction> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, col: usize, token: &str, msg: &str| Error::FileFormat {
        line: line + 1,
        col: col + 1,
        token: token.to_string(),
        msg: msg.to_string(),
    };

    let (l0, header) = lines
        .next()
        .ok_or_else(|| bad(0, 0, "", "empty file"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.is_empty() {
        return Err(bad(l0, 0, header, "expected `d n1 [n2 [n3]]`"));
    }
    let dim: usize = toks[0]
        .parse()
        .map_err(|_| bad(l0, 0, toks[0], "dimension must be an integer"))?;
    if !(1..=3).contains(&dim) {
        return Err(bad(l0, 0, toks[0], "dimension must be 1, 2 or 3"));
    }
    if toks.len() != dim + 1 {
        return Err(bad(l0, toks.len() - 1, toks.last().unwrap(), "node-count list does not match dimension"));
    }
    let mut n = [1usize; 3];
    for i in 0..dim {
        n[i] = toks[1 + i]
            .parse()
            .map_err(|_| bad(l0, 1 + i, toks[1 + i], "node count must be an integer"))?;
        if n[i] < 3 {
            return Err(bad(l0, 1 + i, toks[1 + i], "need at least 3 nodes per axis"));
        }
        if n[i] != n[0] {
            return Err(bad(l0, 1 + i, toks[1 + i], "node counts must agree on all axes"));
        }
    }

    let (l1, geom) = lines.next().ok_or_else(|| bad(l0 + 1, 0, "", "missing `L h` line"))?;
    let gt: Vec<&str> = geom.split_whitespace().collect();
    if gt.len() != 2 {
        return Err(bad(l1, gt.len().saturating_sub(1), geom, "expected `L h`"));
    }
    let half_width: f64 = gt[0].parse().map_err(|_| bad(l1, 0, gt[0], "bad box half-width"))?;
    let h: f64 = gt[1].parse().map_err(|_| bad(l1, 1, gt[1], "bad spacing"))?;
    if h <= 0.0 {
        return Err(Error::BadSpacing(h));
    }
    let grid = Grid::new(dim, half_width, n[0])?;
    if (grid.h - h).abs() > 1e-9 * grid.h {
        return Err(bad(l1, 1, gt[1], "spacing inconsistent with box and node count"));
    }

    // optional cone line
    let mut pending: Option<(usize, String)> = None;
    let mut tail: Option<TailModel> = None;
    if let Some((ln, line)) = lines.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.first() == Some(&"cone") {
            if toks.len() < 2 {
                return Err(bad(ln, 0, line, "cone line needs a model name"));
            }
            let nums = |from: usize, want: usize| -> Result<Vec<f64>> {
                if toks.len() != from + want {
                    return Err(bad(ln, toks.len().min(from + want) - 1, toks.last().unwrap(), "wrong number of cone parameters"));
                }
                toks[from..]
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t.parse::<f64>().map_err(|_| bad(ln, from + i, t, "bad cone parameter")))
                    .collect()
            };
            tail = match toks[1] {
                "none" => None,
                "elliptic" => {
                    let v = nums(2, dim * dim + 2)?;
                    Some(TailModel::EllipticCone {
                        m: Mat::from_rows(dim, &v[..dim * dim]),
                        rho: v[dim * dim],
                        offset: v[dim * dim + 1],
                    })
                }
                "quadratic" => {
                    let v = nums(2, dim * dim)?;
                    Some(TailModel::Quadratic { m: Mat::from_rows(dim, &v) })
                }
                "polyhedral" => {
                    if toks.len() < 4 {
                        return Err(bad(ln, 1, toks[1], "polyhedral cone needs count and radius"));
                    }
                    let k: usize = toks[2].parse().map_err(|_| bad(ln, 2, toks[2], "bad plane count"))?;
                    let radius: f64 = toks[3].parse().map_err(|_| bad(ln, 3, toks[3], "bad radius"))?;
                    let v = nums(4, k * (dim + 1))?;
                    let planes = v
                        .chunks(dim + 1)
                        .map(|c| {
                            let mut a = [0.0; 3];
                            a[..dim].copy_from_slice(&c[..dim]);
                            (a, c[dim])
                        })
                        .collect();
                    Some(TailModel::LogSumExp { planes, radius })
                }
                other => return Err(bad(ln, 1, other, "unknown cone model")),
            };
        } else {
            pending = Some((ln, line.to_string()));
        }
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut feed = |ln: usize, line: &str| -> Result<()> {
        for (ci, tok) in line.split_whitespace().enumerate() {
            let v: f64 = tok.parse().map_err(|_| bad(ln, ci, tok, "bad node value"))?;
            if !v.is_finite() {
                return Err(bad(ln, ci, tok, "node value must be finite"));
            }
            values.push(v);
        }
        Ok(())
    };
    if let Some((ln, line)) = pending {
        feed(ln, &line)?;
    }
    let mut last_line = l1;
    for (ln, line) in lines {
        feed(ln, line)?;
        last_line = ln;
    }
    if values.len() != grid.len() {
        return Err(bad(last_line, 0, "", &format!("expected {} node values, got {}", grid.len(), values.len())));
    }
    let growth = match &tail {
        Some(TailModel::Quadratic { .. }) => Growth::Quadratic,
        _ => Growth::Cone,
    };
    GridFunction::from_values(grid, values, tail, growth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cone_1d() -> GridFunction {
        let grid = Grid::from_spacing(1, 20.0, 0.05).unwrap();
        build_grid_function(
            &BuilderSpec::SmoothCone { a: 1.0, m: Mat::identity(1) },
            grid,
        )
        .unwrap()
    }

    #[test]
    fn smooth_cone_is_convex_and_cone_tagged() {
        let f = cone_1d();
        assert!(f.convex);
        let cone = f.cone.as_ref().unwrap();
        // Φ(y) = |y| for M = I
        assert_relative_eq!(cone.phi(&[3.0, 0.0, 0.0]), 3.0, max_relative = 1e-14);
        assert_relative_eq!(cone.offset, -1.0, max_relative = 1e-14);
        assert!(f.o_max < 0.03); // sqrt(1+x^2)-1-|x|+1 = 1/(|x|+sqrt(..)) ~ 1/(2*18)
    }

    #[test]
    fn abs_builder_matches_absolute_value() {
        let grid = Grid::from_spacing(1, 2.0, 0.5).unwrap();
        let f = build_grid_function(&BuilderSpec::MaxPlanes { planes: abs_planes(1), radius: 0.0 }, grid).unwrap();
        assert!(f.convex);
        for i in 0..f.grid.len() {
            assert_relative_eq!(f.values[i], f.grid.point(i)[0].abs(), epsilon = 1e-14);
        }
    }

    #[test]
    fn concave_data_fails_convex_tag() {
        let grid = Grid::from_spacing(1, 2.0, 0.25).unwrap();
        let f = build_grid_function(&BuilderSpec::NegCone { a: 1.0, m: Mat::identity(1) }, grid).unwrap();
        assert!(!f.convex);
    }

    #[test]
    fn builder_rejects_bad_inputs() {
        let grid = Grid::from_spacing(1, 2.0, 0.25).unwrap();
        assert!(matches!(
            build_grid_function(&BuilderSpec::SmoothCone { a: -1.0, m: Mat::identity(1) }, grid.clone()),
            Err(Error::Validation(_))
        ));
        let bad_m = Mat::from_rows(2, &[1.0, 3.0, 3.0, 1.0]);
        let grid2 = Grid::from_spacing(2, 2.0, 0.25).unwrap();
        assert!(matches!(
            build_grid_function(&BuilderSpec::SmoothCone { a: 1.0, m: bad_m }, grid2),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(matches!(Grid::from_spacing(1, 2.0, -0.5), Err(Error::BadSpacing(_))));
    }

    #[test]
    fn builder_spec_grammar() {
        let spec = parse_builder_spec("smoothcone:a=1,m=4,0,0,1", 2).unwrap();
        match spec {
            BuilderSpec::SmoothCone { a, m } => {
                assert_eq!(a, 1.0);
                assert_eq!(m.a[0][0], 4.0);
                assert_eq!(m.a[1][1], 1.0);
            }
            _ => panic!("wrong family"),
        }
        assert!(parse_builder_spec("bogus:a=1", 1).is_err());
        assert!(parse_builder_spec("smoothcone:a=abc", 1).is_err());
    }

    #[test]
    fn file_roundtrip_preserves_values_exactly() {
        let f = cone_1d();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.grid");
        write_grid_file(&f, &path).unwrap();
        let g = read_grid_file(&path).unwrap();
        assert_eq!(f.values, g.values);
        assert_eq!(f.grid, g.grid);
        assert!(g.convex);
        assert_eq!(f.tail, g.tail);
    }

    #[test]
    fn file_errors_carry_position() {
        let text = "1 9\n2.0 0.5\ncone none\n0.0\n1.0\nbad_token\n";
        match parse_grid_text(text) {
            Err(Error::FileFormat { line, token, .. }) => {
                assert_eq!(line, 6);
                assert_eq!(token, "bad_token");
            }
            other => panic!("expected file-format error, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_reproduces_multilinear_data() {
        let grid = Grid::from_spacing(2, 1.0, 0.5).unwrap();
        let vals: Vec<f64> = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                1.0 + 2.0 * p[0] - 0.5 * p[1] + 3.0 * p[0] * p[1]
            })
            .collect();
        let f = GridFunction::from_values(grid, vals, None, Growth::Cone).unwrap();
        let p = [0.3, -0.7, 0.0];
        assert_relative_eq!(
            f.interpolate(&p),
            1.0 + 2.0 * 0.3 - 0.5 * (-0.7) + 3.0 * 0.3 * (-0.7),
            max_relative = 1e-12
        );
    }

    #[test]
    fn hessian_estimate_exact_on_quadratics() {
        let grid = Grid::from_spacing(2, 1.0, 0.1).unwrap();
        let m = Mat::from_rows(2, &[4.0, 1.0, 1.0, 2.0]);
        let f = build_grid_function(&BuilderSpec::Quadratic { m }, grid).unwrap();
        let center = f.grid.nearest_node(&[0.0, 0.0, 0.0]).unwrap();
        let h = f.hessian(center).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(h.a[i][j], m.a[i][j], epsilon = 1e-9);
            }
        }
    }
}
