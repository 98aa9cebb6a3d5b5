//! Convex envelopes, subdifferentials, supporting planes and sections.
//!
//! The envelope is the exact lower hull of the lifted grid points: at every
//! node we solve the small linear program
//!     maximize z   s.t.   z + b·(y_j − x) ≤ f(y_j)  for all nodes j,
//! whose optimum is the hull height over x. A randomized Seidel solver makes
//! this exact (up to f64) in any of the supported dimensions.


use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Growth};
use crate::la::{dot, norm, sub, Point};
use crate::num::angular_rule;
use rayon::prelude::*;

pub const SLOPE_DEDUP_TOL: f64 = 1e-9;
pub const SUBGRADIENT_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Seidel's randomized LP for up to 4 variables
// ---------------------------------------------------------------------------

/// maximize obj·z subject to cons[k].0·z ≤ cons[k].1 and |z_i| ≤ bounds[i].
/// Returns None when infeasible.
fn seidel_lp(
    nv: usize,
    obj: &[f64],
    cons: &[(Vec<f64>, f64)],
    bounds: &[f64],
    rng_state: &mut u64,
) -> Option<Vec<f64>> {
    if nv == 1 {
        let (mut lo, mut hi) = (-bounds[0], bounds[0]);
        for (a, b) in cons {
            let a = a[0];
            if a.abs() < 1e-300 {
                if *b < -1e-9 * (1.0 + b.abs()) {
                    return None;
                }
                continue;
            }
            let r = b / a;
            if a > 0.0 {
                hi = hi.min(r);
            } else {
                lo = lo.max(r);
            }
        }
        if lo > hi + 1e-9 * (1.0 + lo.abs()) {
            return None;
        }
        let z = if obj[0] > 0.0 {
            hi
        } else if obj[0] < 0.0 {
            lo
        } else {
            lo.max(0.0).min(hi)
        };
        return Some(vec![z.clamp(lo, hi)]);
    }

    // random order (splitmix64)
    let mut order: Vec<usize> = (0..cons.len()).collect();
    for i in (1..order.len()).rev() {
        *rng_state = rng_state.wrapping_add(0x9e3779b97f4a7c15);
        let mut x = *rng_state;
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
        x ^= x >> 31;
        order.swap(i, (x as usize) % (i + 1));
    }

    // start at the box optimum
    let mut z: Vec<f64> = (0..nv)
        .map(|i| {
            if obj[i] > 0.0 {
                bounds[i]
            } else if obj[i] < 0.0 {
                -bounds[i]
            } else {
                0.0
            }
        })
        .collect();

    for (step, &ci) in order.iter().enumerate() {
        let (a, b) = &cons[ci];
        let slack = dot_n(a, &z) - b;
        if slack <= 1e-9 * (1.0 + b.abs()) {
            continue;
        }
        // optimum lies on a·z = b: eliminate the variable with largest |a|
        let piv = (0..nv).max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs())).unwrap();
        if a[piv].abs() < 1e-300 {
            return None;
        }
        let reduce = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
            let factor = row[piv] / a[piv];
            let mut out = Vec::with_capacity(nv - 1);
            for i in 0..nv {
                if i != piv {
                    out.push(row[i] - factor * a[i]);
                }
            }
            (out, rhs - factor * b)
        };
        let mut sub_cons: Vec<(Vec<f64>, f64)> = Vec::with_capacity(step + 2 * nv);
        for &cj in order[..step].iter() {
            let (aj, bj) = &cons[cj];
            sub_cons.push(reduce(aj, *bj));
        }
        // box constraints of the eliminated variable
        let mut row = vec![0.0; nv];
        row[piv] = 1.0;
        sub_cons.push(reduce(&row, bounds[piv]));
        row[piv] = -1.0;
        sub_cons.push(reduce(&row, bounds[piv]));

        let mut sub_obj = Vec::with_capacity(nv - 1);
        let ofac = obj[piv] / a[piv];
        for i in 0..nv {
            if i != piv {
                sub_obj.push(obj[i] - ofac * a[i]);
            }
        }
        let sub_bounds: Vec<f64> = (0..nv).filter(|&i| i != piv).map(|i| bounds[i]).collect();
        let zs = seidel_lp(nv - 1, &sub_obj, &sub_cons, &sub_bounds, rng_state)?;
        let mut full = Vec::with_capacity(nv);
        let mut it = zs.iter();
        for i in 0..nv {
            if i == piv {
                full.push(0.0);
            } else {
                full.push(*it.next().unwrap());
            }
        }
        full[piv] = (b - (0..nv).filter(|&i| i != piv).map(|i| a[i] * full[i]).sum::<f64>()) / a[piv];
        z = full;
    }
    Some(z)
}

fn dot_n(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// convex envelope
// ---------------------------------------------------------------------------

/// Exact lower-hull height over node `idx`, using only the nodes selected by
/// `mask` (all nodes when None). Also returns the optimal slope.
pub fn hull_height_at(f: &GridFunction, idx: usize, mask: Option<&[bool]>) -> (f64, Point) {
    let g = &f.grid;
    let d = g.dim;
    let x = g.point(idx);
    let vmin = f.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slope_bound = 4.0 * (vmax - vmin) / g.h + 1.0;
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::with_capacity(g.len());
    for j in 0..g.len() {
        if let Some(m) = mask {
            if !m[j] {
                continue;
            }
        }
        let y = g.point(j);
        let mut row = vec![0.0; d + 1];
        row[0] = 1.0;
        for i in 0..d {
            row[i + 1] = y[i] - x[i];
        }
        cons.push((row, f.values[j]));
    }
    let mut obj = vec![0.0; d + 1];
    obj[0] = 1.0;
    let mut bounds = vec![slope_bound; d + 1];
    bounds[0] = vmax.abs().max(vmin.abs()) + 1.0;
    let mut rng = 0x5eed0000u64 ^ (idx as u64).wrapping_mul(0x9e3779b97f4a7c15);
    let z = seidel_lp(d + 1, &obj, &cons, &bounds, &mut rng).expect("hull LP is always feasible");
    let mut b = [0.0; 3];
    b[..d].copy_from_slice(&z[1..=d]);
    (z[0], b)
}

/// Largest convex grid function ≤ f (the lower hull of the lifted nodes).
/// Convex-tagged inputs are returned unchanged, which also makes the
/// operation bitwise idempotent.
pub fn convex_envelope(f: &GridFunction) -> Result<GridFunction> {
    if f.convex {
        return Ok(f.clone());
    }
    let values = envelope_values(f, None);
    let mut out = GridFunction::from_values(f.grid.clone(), values, f.tail.clone(), f.growth)?;
    if !out.convex {
        // scrub roundoff-level violations left by the LP
        directional_convexify(&mut out.values, &f.grid, 64, 0.0);
        out = GridFunction::from_values(f.grid.clone(), out.values, f.tail.clone(), f.growth)?;
    }
    // envelope never exceeds the input
    for (e, v) in out.values.iter_mut().zip(&f.values) {
        if *e > *v {
            *e = *v;
        }
    }
    Ok(out)
}

/// Envelope values over an arbitrary node subset (used by the Dirichlet
/// nonexistence demo, where data lives outside the unit ball only).
pub fn envelope_values(f: &GridFunction, mask: Option<&[bool]>) -> Vec<f64> {
    let g = &f.grid;
    if g.dim == 1 {
        return envelope_1d(f, mask);
    }
    (0..g.len())
        .into_par_iter()
        .map(|idx| hull_height_at(f, idx, mask).0.min(match mask {
            Some(m) if !m[idx] => f64::INFINITY,
            _ => f.values[idx],
        }))
        .collect()
}

fn envelope_1d(f: &GridFunction, mask: Option<&[bool]>) -> Vec<f64> {
    let g = &f.grid;
    let n = g.n[0];
    // lower hull by monotone chain over (x_k, f_k)
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(n);
    for k in 0..n {
        if let Some(m) = mask {
            if !m[k] {
                continue;
            }
        }
        let p = (g.coord(0, k), f.values[k]);
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = vec![0.0; n];
    let mut seg = 0usize;
    for k in 0..n {
        let x = g.coord(0, k);
        while seg + 1 < hull.len() - 1 && hull[seg + 1].0 < x {
            seg += 1;
        }
        let (x0, v0) = hull[seg];
        let (x1, v1) = hull[(seg + 1).min(hull.len() - 1)];
        out[k] = if x1 > x0 { v0 + (v1 - v0) * (x - x0) / (x1 - x0) } else { v0 };
    }
    out
}

/// Gauss-Seidel sweeps of v(x) ← min(v(x), (v(x+he)+v(x−he))/2) over the
/// stencil directions. Enforces discrete midpoint convexity; used as the
/// in-loop projection by the solver. Returns the number of sweeps run.
pub fn directional_convexify(values: &mut [f64], grid: &Grid, max_sweeps: usize, tol: f64) -> usize {
    let dirs = grid.stencil_directions();
    let n = grid.len();
    for sweep in 0..max_sweeps {
        let mut change = 0.0f64;
        // alternate ascending/descending node order
        let forward = sweep % 2 == 0;
        for step in 0..n {
            let idx = if forward { step } else { n - 1 - step };
            let k = grid.unravel(idx);
            let mut v = values[idx];
            for e in &dirs {
                if let (Some(kp), Some(km)) = (shift(grid, k, e, 1), shift(grid, k, e, -1)) {
                    let avg = 0.5 * (values[grid.ravel(kp)] + values[grid.ravel(km)]);
                    if avg < v {
                        v = avg;
                    }
                }
            }
            change = change.max(values[idx] - v);
            values[idx] = v;
        }
        if change <= tol {
            return sweep + 1;
        }
    }
    max_sweeps
}

fn shift(grid: &Grid, k: [usize; 3], e: &[i64; 3], m: i64) -> Option<[usize; 3]> {
    let mut out = [0usize; 3];
    for i in 0..3 {
        let v = k[i] as i64 + e[i] * m;
        if v < 0 || v >= grid.n[i] as i64 {
            return None;
        }
        out[i] = v as usize;
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// supporting planes and subdifferentials
// ---------------------------------------------------------------------------

/// Worst violation of f(y) ≥ f(x) + b·(y−x) over all grid nodes
/// (≤ 0 means b is a discrete subgradient at x).
pub fn plane_violation(f: &GridFunction, idx: usize, b: &Point) -> f64 {
    let g = &f.grid;
    let x = g.point(idx);
    let fx = f.values[idx];
    let mut worst = f64::NEG_INFINITY;
    for j in 0..g.len() {
        let y = g.point(j);
        worst = worst.max(fx + dot(b, &sub(&y, &x)) - f.values[j]);
    }
    worst
}

#[derive(Clone, Debug)]
pub struct PlaneCheck {
    pub supported: bool,
    /// On failure: offset y with f(x+y) < f(x) + y·g for the central
    /// difference gradient g, certifying the −∞ value.
    pub witness: Option<Point>,
    pub gradient: Point,
}

/// Whether any supporting plane exists at node `idx` (true iff the lower
/// hull touches f there).
pub fn supporting_plane_check(f: &GridFunction, idx: usize) -> PlaneCheck {
    let gradient = f.gradient(idx);
    if f.convex {
        return PlaneCheck { supported: true, witness: None, gradient };
    }
    let (height, _) = hull_height_at(f, idx, None);
    let tol = 1e-10 * f.scale();
    if height >= f.values[idx] - tol {
        return PlaneCheck { supported: true, witness: None, gradient };
    }
    // find the strongest violation of the gradient plane
    let g = &f.grid;
    let x = g.point(idx);
    let fx = f.values[idx];
    let mut best = (0.0f64, [0.0; 3]);
    for j in 0..g.len() {
        let y = g.point(j);
        let gap = f.values[j] - fx - dot(&gradient, &sub(&y, &x));
        if gap < best.0 {
            best = (gap, sub(&y, &x));
        }
    }
    PlaneCheck { supported: false, witness: Some(best.1), gradient }
}

#[derive(Clone, Debug)]
pub struct SubdifferentialSet {
    pub point_idx: usize,
    /// Extreme points of the slope polytope (a single entry when u is
    /// differentiable at x).
    pub vertices: Vec<Point>,
    pub singleton: bool,
    /// Set when the contact extends to the computational boundary so slopes
    /// were clipped against the cone constraint Φ(θ) ≥ b·θ.
    pub cone_clipped: bool,
    /// d = 3 uses a fixed support-direction sample rather than exact vertex
    /// enumeration.
    pub approximate: bool,
}

impl SubdifferentialSet {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertex list plus `refine` rounds of barycentric midpoints, for the
    /// sup over the subdifferential in the operator.
    pub fn sample_slopes(&self, refine: usize) -> Vec<Point> {
        let mut out = self.vertices.clone();
        if self.vertices.len() > 1 {
            let mut centroid = [0.0; 3];
            for v in &self.vertices {
                for i in 0..3 {
                    centroid[i] += v[i] / self.vertices.len() as f64;
                }
            }
            out.push(centroid);
            if refine > 0 {
                for i in 0..self.vertices.len() {
                    for j in (i + 1)..self.vertices.len() {
                        let mid = [
                            0.5 * (self.vertices[i][0] + self.vertices[j][0]),
                            0.5 * (self.vertices[i][1] + self.vertices[j][1]),
                            0.5 * (self.vertices[i][2] + self.vertices[j][2]),
                        ];
                        out.push(mid);
                    }
                    let vm = [
                        0.5 * (self.vertices[i][0] + centroid[0]),
                        0.5 * (self.vertices[i][1] + centroid[1]),
                        0.5 * (self.vertices[i][2] + centroid[2]),
                    ];
                    out.push(vm);
                }
            }
        }
        dedup_points(&mut out, SLOPE_DEDUP_TOL);
        out
    }
}

fn dedup_points(pts: &mut Vec<Point>, tol: f64) {
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts.iter() {
        if !out.iter().any(|q| norm(&sub(p, q)) <= tol) {
            out.push(*p);
        }
    }
    *pts = std::mem::take(&mut out);
}

/// Width below which a slope polytope counts as a singleton: a C¹ point has
/// discrete subdifferential width ~ h·u'', while a kink keeps width O(1), so
/// the wide-stencil second difference separates the two.
fn singleton_width_tol(f: &GridFunction, idx: usize) -> f64 {
    let dirs = f.grid.stencil_directions();
    let mut dd_max = 0.0f64;
    for e in &dirs {
        for m in [3i64, 2, 1] {
            if let Some(dd) = f.second_difference(idx, e, m) {
                dd_max = dd_max.max(dd.abs());
                break;
            }
        }
    }
    (1.5 * f.grid.h * dd_max).max(1e-9 * (1.0 + f.scale() / f.grid.half_width))
}

/// Subdifferential polytope at a node of a convex-tagged function.
pub fn subdifferential_at(f: &GridFunction, idx: usize) -> Result<SubdifferentialSet> {
    if !f.convex {
        return Err(Error::NonConvexData);
    }
    let g = &f.grid;
    let d = g.dim;
    let x = g.point(idx);
    let fx = f.values[idx];
    let scale = f.scale();

    if d == 1 {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for j in 0..g.len() {
            if j == idx {
                continue;
            }
            let y = g.coord(0, j);
            let slope = (f.values[j] - fx) / (y - x[0]);
            if y < x[0] {
                lo = lo.max(slope);
            } else {
                hi = hi.min(slope);
            }
        }
        let mut clipped = false;
        if let Some(cone) = &f.cone {
            let phi_p = cone.phi(&[1.0, 0.0, 0.0]);
            let phi_m = cone.phi(&[-1.0, 0.0, 0.0]);
            if hi > phi_p {
                hi = phi_p;
                clipped = true;
            }
            if lo < -phi_m {
                lo = -phi_m;
                clipped = true;
            }
        }
        if lo > hi + SUBGRADIENT_TOL * scale {
            return Ok(SubdifferentialSet {
                point_idx: idx,
                vertices: vec![],
                singleton: false,
                cone_clipped: clipped,
                approximate: false,
            });
        }
        let singleton = (hi - lo).abs() <= singleton_width_tol(f, idx);
        let vertices = if singleton {
            vec![[f.gradient(idx)[0].clamp(lo.min(hi), hi.max(lo)), 0.0, 0.0]]
        } else {
            vec![[lo, 0.0, 0.0], [hi, 0.0, 0.0]]
        };
        return Ok(SubdifferentialSet {
            point_idx: idx,
            vertices,
            singleton,
            cone_clipped: clipped,
            approximate: false,
        });
    }

    // d >= 2: support-function sampling over the constraint polytope
    //   b·(y_j − x) ≤ f_j − f(x),   b·θ ≤ Φ(θ)
    let vmin = f.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = f.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slope_bound = 4.0 * (vmax - vmin) / g.h + 1.0;
    let mut cons: Vec<(Vec<f64>, f64)> = Vec::with_capacity(g.len() + 64);
    for j in 0..g.len() {
        if j == idx {
            continue;
        }
        let y = g.point(j);
        let dy = sub(&y, &x);
        cons.push(((0..d).map(|i| dy[i]).collect(), f.values[j] - fx));
    }
    if let Some(cone) = &f.cone {
        let (dirs, _) = angular_rule(d, 128);
        for t in &dirs {
            cons.push(((0..d).map(|i| t[i]).collect(), cone.phi(t)));
        }
    }
    let bounds = vec![slope_bound; d];
    let n_dirs = if d == 2 { 64 } else { 96 };
    let (dirs, _) = angular_rule(d, n_dirs);
    let mut vertices: Vec<Point> = Vec::new();
    let mut rng = xsubd_u64();
    for (di, t) in dirs.iter().enumerate() {
        // tiny secondary objective steers the LP to an extreme point
        let mut obj: Vec<f64> = (0..d).map(|i| t[i]).collect();
        let perp = [-t[1], t[0], 0.37 * t[2]];
        for i in 0..d {
            obj[i] += 1e-7 * perp[i];
        }
        let mut local_rng = rng ^ (di as u64).wrapping_mul(0x2545f4914f6cdd1d);
        if let Some(z) = seidel_lp(d, &obj, &cons, &bounds, &mut local_rng) {
            let mut b = [0.0; 3];
            b[..d].copy_from_slice(&z[..d]);
            vertices.push(b);
        }
        rng = rng.wrapping_add(1);
    }
    dedup_points(&mut vertices, SLOPE_DEDUP_TOL * (1.0 + scale / g.half_width));
    // drop sampled points that violate the node constraints (LP noise)
    vertices.retain(|b| plane_violation(f, idx, b) <= SUBGRADIENT_TOL * scale);
    let width_tol = singleton_width_tol(f, idx);
    let singleton = vertices.len() <= 1 || {
        let c0 = vertices[0];
        vertices.iter().all(|v| norm(&sub(v, &c0)) <= width_tol)
    };
    let vertices = if singleton && !vertices.is_empty() {
        let grad = f.gradient(idx);
        if plane_violation(f, idx, &grad) <= SUBGRADIENT_TOL * scale {
            vec![grad]
        } else {
            vec![vertices[0]]
        }
    } else {
        vertices
    };
    let cone_clipped = match &f.cone {
        Some(cone) => vertices.iter().any(|v| cone.interior_margin(v) < 0.02),
        None => false,
    };
    Ok(SubdifferentialSet {
        point_idx: idx,
        vertices,
        singleton,
        cone_clipped,
        approximate: d == 3,
    })
}

fn xsubd_u64() -> u64 {
    0x7b2d_e00d_5eed_5eedu64
}

// ---------------------------------------------------------------------------
// sections
// ---------------------------------------------------------------------------

/// Diameter of the section {y : f(y) − f(x) − b·(y − x) ≤ t}, extended past
/// the box by the cone homothety bound, +∞ when the cone interior-slope test
/// fails for b.
pub fn section_diameter(f: &GridFunction, idx: usize, b: &Point, t: f64) -> Result<f64> {
    let scale = f.scale();
    let viol = plane_violation(f, idx, b);
    if viol > SUBGRADIENT_TOL * scale {
        return Err(Error::NotSubgradient(viol));
    }
    if t < 0.0 {
        return Ok(0.0);
    }
    if let Some(cone) = &f.cone {
        if cone.interior_margin(b) <= 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let g = &f.grid;
    let x = g.point(idx);
    let fx = f.values[idx];
    let tol = SUBGRADIENT_TOL * scale;
    let mut in_band = false;
    let mut nodes: Vec<Point> = Vec::new();
    let mut band_min = f64::INFINITY;
    for j in 0..g.len() {
        let y = g.point(j);
        let inc = f.values[j] - fx - dot(b, &sub(&y, &x));
        if g.is_in_band(j) {
            band_min = band_min.min(inc);
        }
        if inc <= t + tol {
            nodes.push(y);
            if g.is_in_band(j) {
                in_band = true;
            }
        }
    }
    if nodes.is_empty() {
        return Ok(0.0);
    }
    if !in_band {
        return Ok(point_set_diameter(&nodes, g.dim));
    }
    // section exits the box: if no cone tail is attached the diameter is
    // unknowable from the data
    if f.cone.is_none() && f.growth == Growth::Cone {
        return Ok(f64::INFINITY);
    }
    // homothety bound diam D(t) <= (t/t_in) diam D(t_in) from the largest
    // level still inside the box
    let t_in = band_min - tol;
    if t_in <= tol.max(1e-12) {
        return Ok(f64::INFINITY);
    }
    let inner: Vec<Point> = nodes
        .iter()
        .cloned()
        .filter(|y| {
            let j = g.nearest_node(y).unwrap();
            f.values[j] - fx - dot(b, &sub(y, &x)) <= t_in + tol
        })
        .collect();
    if inner.is_empty() {
        return Ok(f64::INFINITY);
    }
    Ok((t / t_in).max(1.0) * point_set_diameter(&inner, g.dim))
}

fn point_set_diameter(pts: &[Point], dim: usize) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    if dim == 1 {
        let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return hi - lo;
    }
    if pts.len() <= 2048 {
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max(norm(&sub(&pts[i], &pts[j])));
            }
        }
        return best;
    }
    // support widths over an angular sample
    let (dirs, _) = angular_rule(dim, 256);
    let mut best = 0.0f64;
    for t in &dirs {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in pts {
            let v = dot(t, p);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        best = best.max(hi - lo);
    }
    best
}
