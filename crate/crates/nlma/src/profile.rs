//! Sublevel-measure profiles of the recentered increment.
//!
//! For a convex grid function u, a base node x and a slope b, the profile is
//! the monotone map t ↦ μ_b(t) = |{y : u(y) − u(x) − b·(y−x) < t}| stored in
//! three regimes:
//!   near  μ(t) = |B₁| (2t)^{d/2} / √det H      (local quadratic model)
//!   mid   empirical distribution from grid cells
//!   far   μ(t) = V(b) (t + σ)^d               (cone law, exponent exactly d)
//! The far shift σ absorbs the affine offset u(x) − b·x minus the cone's
//! asymptotic offset; by default it is calibrated so the far law matches the
//! grid count at the handoff level.

use crate::grid::GridFunction;
use crate::la::{dot, sub, Mat, Point};
use crate::num::{angular_rule, ball_volume};

/// Mid-regime engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileMode {
    /// Exact distribution of the piecewise-linear interpolant (1d events,
    /// symmetrized triangle slicing in 2d; falls back to cell counting in 3d).
    Interpolant,
    /// Sorted cell-center values; exact step-function integration.
    CellSort,
    /// Geometric histogram buckets; O(N) per point, for solver sweeps.
    Histogram,
}

#[derive(Clone, Debug)]
pub struct ProfileConfig {
    pub mode: ProfileMode,
    /// Force the (t_small, t_grid) breakpoints instead of auto-selection.
    pub breakpoints: Option<(f64, f64)>,
    /// Calibrate the far shift from the grid count at t_grid (default); when
    /// false the analytic shift u(x) − b·x − offset is used unconditionally.
    pub calibrate_shift: bool,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { mode: ProfileMode::Interpolant, breakpoints: None, calibrate_shift: true }
    }
}

#[derive(Clone, Debug)]
pub enum NearModel {
    /// μ(t) = coef · t^expo on [0, t_small]; the exponent comes from the
    /// Hessian (d/2) or an empirical fit, the coefficient is calibrated so
    /// the profile is continuous at t_small
    PowerLaw { coef: f64, expo: f64 },
    /// fat contact set: μ(t) = mu0 + slope·t on [0, t_small]
    Fat { mu0: f64, slope: f64 },
}

impl NearModel {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            NearModel::PowerLaw { coef, expo } => coef * t.max(0.0).powf(*expo),
            NearModel::Fat { mu0, slope } => mu0 + slope * t.max(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FarModel {
    /// unit-section volume V(b)
    pub v: f64,
    /// μ(t) = v (t + shift)^d
    pub shift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdfKind {
    Step,
    Linear,
}

/// Monotone empirical cdf: μ(ts[i]) = mus[i].
#[derive(Clone, Debug)]
pub struct MidCdf {
    pub ts: Vec<f64>,
    pub mus: Vec<f64>,
    pub kind: CdfKind,
}

impl MidCdf {
    pub fn eval(&self, t: f64) -> f64 {
        if self.ts.is_empty() {
            return 0.0;
        }
        match self.ts.partition_point(|v| *v <= t) {
            0 => 0.0,
            k if k >= self.ts.len() => *self.mus.last().unwrap(),
            k => match self.kind {
                CdfKind::Step => self.mus[k - 1],
                CdfKind::Linear => {
                    let (t0, t1) = (self.ts[k - 1], self.ts[k]);
                    let (m0, m1) = (self.mus[k - 1], self.mus[k]);
                    if t1 > t0 {
                        m0 + (m1 - m0) * (t - t0) / (t1 - t0)
                    } else {
                        m1
                    }
                }
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ProfileFlags {
    pub fat_level: bool,
    pub cone_unbounded: bool,
    pub hessian_fallback: bool,
    pub breakpoint_mismatch: bool,
}

#[derive(Clone, Debug)]
pub struct SectionProfile {
    pub x_idx: usize,
    pub x: Point,
    pub b: Point,
    pub dim: usize,
    pub cell_vol: f64,
    pub grid_h: f64,
    pub scale: f64,
    /// Every positive level has infinite measure (cone interior-slope test
    /// failed for b, or affine data): the operator value contribution is 0.
    pub all_infinite: bool,
    pub t_small: f64,
    pub t_grid: f64,
    pub near: NearModel,
    pub mid: MidCdf,
    pub far: Option<FarModel>,
    pub hessian: Option<Mat>,
    pub flags: ProfileFlags,
}

impl SectionProfile {
    /// μ_b(t); +∞ for levels past the resolvable range when no cone law is
    /// attached (callers gate this through growth checks).
    pub fn mu(&self, t: f64) -> f64 {
        if self.all_infinite {
            return if t > 0.0 { f64::INFINITY } else { 0.0 };
        }
        if t <= 0.0 {
            return match &self.near {
                NearModel::Fat { mu0, .. } if t == 0.0 => *mu0,
                _ => 0.0,
            };
        }
        if t <= self.t_small {
            return self.near.eval(t);
        }
        if t <= self.t_grid {
            let floor = self.near.eval(self.t_small);
            return self.mid.eval(t).max(floor);
        }
        match &self.far {
            Some(f) => f.v * (t + f.shift).max(0.0).powi(self.dim as i32),
            None => f64::INFINITY,
        }
    }

    /// Generalized inverse v(r) = inf{t : μ(t) ≥ |B₁| r^d}.
    pub fn v_of_r(&self, r: f64) -> f64 {
        self.v_of_measure(ball_volume(self.dim) * r.powi(self.dim as i32))
    }

    pub fn v_of_measure(&self, q: f64) -> f64 {
        if self.all_infinite || q <= 0.0 {
            return 0.0;
        }
        match &self.near {
            NearModel::Fat { mu0, slope } => {
                if q <= *mu0 {
                    return 0.0;
                }
                if q <= self.near.eval(self.t_small) {
                    return if *slope > 0.0 { (q - mu0) / slope } else { self.t_small };
                }
            }
            NearModel::PowerLaw { coef, expo } => {
                let q_small = coef * self.t_small.powf(*expo);
                if q <= q_small {
                    return (q / coef).powf(1.0 / expo);
                }
            }
        }
        let q_grid = self.mu_at_grid();
        if q <= q_grid {
            let k = self.mid.mus.partition_point(|m| *m < q);
            if k >= self.mid.ts.len() {
                return self.t_grid;
            }
            let raw = match self.mid.kind {
                CdfKind::Step => self.mid.ts[k],
                CdfKind::Linear => {
                    if k == 0 {
                        self.mid.ts[0]
                    } else {
                        let (m0, m1) = (self.mid.mus[k - 1], self.mid.mus[k]);
                        let (t0, t1) = (self.mid.ts[k - 1], self.mid.ts[k]);
                        if m1 > m0 {
                            t0 + (t1 - t0) * (q - m0) / (m1 - m0)
                        } else {
                            t1
                        }
                    }
                }
            };
            return raw.clamp(self.t_small, self.t_grid);
        }
        match &self.far {
            Some(f) => (q / f.v).powf(1.0 / self.dim as f64) - f.shift,
            None => f64::INFINITY,
        }
    }

    pub fn mu_at_grid(&self) -> f64 {
        self.mid
            .mus
            .last()
            .copied()
            .unwrap_or_else(|| self.near.eval(self.t_small))
            .max(self.near.eval(self.t_small))
    }

    /// Level at which the section first covers B_eps (quadratic model),
    /// used by the near-pinned evaluator.
    pub fn covering_level(&self, eps: f64) -> f64 {
        match &self.hessian {
            Some(h) => 0.5 * h.max_eigenvalue().max(0.0) * eps * eps,
            None => {
                let target = ball_volume(self.dim) * (2.0 * eps).powi(self.dim as i32);
                self.v_of_measure(target)
            }
        }
    }

    /// |{increment < t} ∩ B_eps| under the quadratic model.
    pub fn ball_overlap(&self, t: f64, eps: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let d = self.dim;
        let ball = ball_volume(d) * eps.powi(d as i32);
        match &self.hessian {
            Some(h) => {
                let (dirs, wts) = angular_rule(d, 32);
                let mut acc = 0.0;
                for (th, w) in dirs.iter().zip(&wts) {
                    let q = h.quad_form(th).max(1e-300);
                    let r_ell = (2.0 * t / q).sqrt();
                    acc += w * r_ell.min(eps).powi(d as i32);
                }
                (acc / d as f64).min(ball).min(self.mu(t))
            }
            None => self.mu(t).min(ball),
        }
    }
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

/// Minimum section size (in cells) before the empirical count is trusted.
fn min_cells(d: usize) -> f64 {
    match d {
        1 => 8.0,
        2 => 24.0,
        _ => 48.0,
    }
}

pub fn section_profile(f: &GridFunction, x_idx: usize, b: &Point, cfg: &ProfileConfig) -> SectionProfile {
    let g = &f.grid;
    let d = g.dim;
    let x = g.point(x_idx);
    let fx = f.values[x_idx];
    let cell_vol = g.h.powi(d as i32);
    let scale = f.scale();

    let mut flags = ProfileFlags::default();

    // cone interior-slope test: failure means every positive level has
    // infinite measure
    let far_v = match &f.cone {
        Some(cone) => {
            if cone.interior_margin(b) <= 0.0 {
                flags.cone_unbounded = true;
                None
            } else {
                cone.unit_section_volume(b)
            }
        }
        None => None,
    };
    let all_infinite = flags.cone_unbounded;

    if all_infinite {
        return SectionProfile {
            x_idx,
            x,
            b: *b,
            dim: d,
            cell_vol,
            grid_h: g.h,
            scale,
            all_infinite: true,
            t_small: 0.0,
            t_grid: 0.0,
            near: NearModel::PowerLaw { coef: 1.0, expo: d as f64 / 2.0 },
            mid: MidCdf { ts: vec![], mus: vec![], kind: CdfKind::Step },
            far: None,
            hessian: f.hessian(x_idx),
            flags,
        };
    }

    // increments at all nodes; exit level = min over the boundary band
    let n = g.len();
    let mut inc = vec![0.0f64; n];
    let mut band_min = f64::INFINITY;
    for (j, slot) in inc.iter_mut().enumerate() {
        let y = g.point(j);
        let v = f.values[j] - fx - dot(b, &sub(&y, &x));
        *slot = v;
        if g.is_in_band(j) {
            band_min = band_min.min(v);
        }
    }

    let t_grid_auto = band_min.max(0.0);
    let mid = build_mid_cdf(f, &inc, t_grid_auto, cfg.mode);

    // near model: fat contact, kink fallback, or quadratic Hessian law
    let contact_tol = 1e-9 * scale.max(1.0);
    let mu_contact = mid.eval(contact_tol);
    let hessian = f.hessian(x_idx).filter(|h| h.is_positive_definite());
    let kink = detect_kink(f, x_idx);

    let mut near;
    if mu_contact > 1.5 * cell_vol {
        flags.fat_level = true;
        near = NearModel::Fat { mu0: mu_contact, slope: 0.0 };
    } else if kink || hessian.is_none() {
        flags.hessian_fallback = true;
        near = empirical_power_law(&mid, cell_vol, d);
    } else {
        let h = hessian.as_ref().unwrap();
        let coef = ball_volume(d) * libm::pow(2.0, d as f64 / 2.0) / h.det().sqrt();
        near = NearModel::PowerLaw { coef, expo: d as f64 / 2.0 };
    }

    // breakpoints: t_small where the empirical count becomes trustworthy,
    // t_grid where the section exits the box
    let (mut t_small, t_grid) = match cfg.breakpoints {
        Some(bp) => bp,
        None => {
            let target = min_cells(d) * cell_vol;
            let mut ts = invert_cdf(&mid, target).unwrap_or(t_grid_auto / 4.0);
            ts = ts.min(t_grid_auto / 4.0).max(0.0);
            (ts, t_grid_auto)
        }
    };

    // regime agreement at the handoff: 10% relative, else push the
    // breakpoint up (the count is the more trustworthy side)
    if cfg.breakpoints.is_none() {
        for _ in 0..8 {
            let model = near.eval(t_small);
            let counted = mid.eval(t_small).max(1e-300);
            if t_small <= 0.0 || model <= 0.0 {
                break;
            }
            let rel = (model - counted).abs() / counted.max(model);
            if rel <= 0.10 {
                break;
            }
            t_small *= 1.9;
            if t_small > t_grid / 2.0 {
                t_small = t_grid / 2.0;
                flags.breakpoint_mismatch = true;
                break;
            }
        }
    }

    // calibrate the model level so the composite profile is continuous at
    // the handoff (the count is exact for the interpolant there; the model
    // supplies only the sub-resolution shape)
    let counted_at_small = mid.eval(t_small);
    match &mut near {
        NearModel::PowerLaw { coef, expo } => {
            if counted_at_small > 0.0 && t_small > 0.0 {
                *coef = counted_at_small / t_small.powf(*expo);
            }
        }
        NearModel::Fat { mu0, slope } => {
            if counted_at_small > *mu0 && t_small > 0.0 {
                *slope = (counted_at_small - *mu0) / t_small;
            }
        }
    }

    // far model shift
    let far = far_v.map(|v| {
        let analytic = f
            .cone
            .as_ref()
            .filter(|c| c.offset_exact)
            .map(|c| fx - dot(b, &x) - c.offset);
        let counted = mid.eval(t_grid);
        let calibrated = if counted > 0.0 && t_grid > 0.0 {
            Some((counted / v).powf(1.0 / d as f64) - t_grid)
        } else {
            None
        };
        let shift = match (cfg.calibrate_shift, analytic, calibrated) {
            (false, Some(a), _) => a,
            (false, None, Some(c)) => c,
            (true, Some(a), Some(c)) => {
                // the calibrated shift keeps the profile continuous at the
                // handoff; the analytic one only validates it (10% rule)
                let model = v * (t_grid + a).max(0.0).powi(d as i32);
                if counted > 0.0 && (model - counted).abs() / counted > 0.10 {
                    flags.breakpoint_mismatch = true;
                }
                c
            }
            (true, None, Some(c)) => c,
            (_, a, c) => a.or(c).unwrap_or(0.0),
        };
        FarModel { v, shift: shift.max(-0.5 * t_grid) }
    });

    SectionProfile {
        x_idx,
        x,
        b: *b,
        dim: d,
        cell_vol,
        grid_h: g.h,
        scale,
        all_infinite: false,
        t_small,
        t_grid,
        near,
        mid,
        far,
        hessian,
        flags,
    }
}

/// Two-scale kink detector: second differences grow like 1/h at a slope
/// discontinuity but stay bounded on C^{1,1} data.
pub fn detect_kink(f: &GridFunction, idx: usize) -> bool {
    for e in f.grid.stencil_directions() {
        if let (Some(d1), Some(d2)) = (f.second_difference(idx, &e, 1), f.second_difference(idx, &e, 2)) {
            if d1 > 1.6 * d2.max(0.0) + 1e-9 * f.scale() && d1 * f.grid.h > 0.05 {
                return true;
            }
        }
    }
    false
}

fn empirical_power_law(mid: &MidCdf, cell_vol: f64, d: usize) -> NearModel {
    // fit μ = A t^p on the smallest resolved levels of the cdf
    let t1 = invert_cdf(mid, 3.0 * cell_vol);
    let t2 = invert_cdf(mid, 12.0 * cell_vol);
    match (t1, t2) {
        (Some(t1), Some(t2)) if t2 > t1 * 1.05 && t1 > 0.0 => {
            let (m1, m2) = (mid.eval(t1).max(1e-300), mid.eval(t2).max(1e-300));
            let p = ((m2 / m1).ln() / (t2 / t1).ln()).clamp(0.25, 2.0 * d as f64);
            NearModel::PowerLaw { coef: m1 / t1.powf(p), expo: p }
        }
        _ => NearModel::PowerLaw {
            coef: ball_volume(d) * libm::pow(2.0, d as f64 / 2.0),
            expo: d as f64 / 2.0,
        },
    }
}

fn invert_cdf(mid: &MidCdf, target: f64) -> Option<f64> {
    let k = mid.mus.partition_point(|m| *m < target);
    if k >= mid.ts.len() {
        return None;
    }
    Some(mid.ts[k])
}

// ---------------------------------------------------------------------------
// mid-regime engines
// ---------------------------------------------------------------------------

fn build_mid_cdf(f: &GridFunction, inc: &[f64], t_grid: f64, mode: ProfileMode) -> MidCdf {
    let g = &f.grid;
    match (mode, g.dim) {
        (ProfileMode::Interpolant, 1) => events_1d(f, inc, t_grid),
        (ProfileMode::Interpolant, 2) => triangle_cdf(f, inc, t_grid),
        (ProfileMode::Histogram, _) => histogram_cdf(f, inc, t_grid),
        _ => cell_sort_cdf(f, inc, t_grid),
    }
}

fn cell_centers(f: &GridFunction, inc: &[f64]) -> Vec<f64> {
    let g = &f.grid;
    let d = g.dim;
    let counts: [usize; 3] = [
        g.n[0] - 1,
        if d >= 2 { g.n[1] - 1 } else { 1 },
        if d >= 3 { g.n[2] - 1 } else { 1 },
    ];
    let total = counts[0] * counts[1] * counts[2];
    let mut out = Vec::with_capacity(total);
    let corners = 1usize << d;
    let inv = 1.0 / corners as f64;
    for c0 in 0..counts[0] {
        for c1 in 0..counts[1] {
            for c2 in 0..counts[2] {
                let k = [c0, c1, c2];
                let mut acc = 0.0;
                for m in 0..corners {
                    let mut kk = k;
                    for i in 0..d {
                        if m >> i & 1 == 1 {
                            kk[i] += 1;
                        }
                    }
                    acc += inc[g.ravel(kk)];
                }
                out.push(acc * inv);
            }
        }
    }
    out
}

fn cell_sort_cdf(f: &GridFunction, inc: &[f64], t_grid: f64) -> MidCdf {
    let cell_vol = f.grid.h.powi(f.grid.dim as i32);
    let mut vals = cell_centers(f, inc);
    vals.retain(|v| *v <= t_grid);
    vals.sort_unstable_by(f64::total_cmp);
    let mut ts = Vec::with_capacity(vals.len());
    let mut mus = Vec::with_capacity(vals.len());
    for (k, v) in vals.iter().enumerate() {
        ts.push(v.max(0.0));
        mus.push((k + 1) as f64 * cell_vol);
    }
    MidCdf { ts, mus, kind: CdfKind::Step }
}

/// Geometric histogram: the bucket index comes from the IEEE-754 bit pattern
/// (32 buckets per octave), so the pass is O(N) with no sort.
fn histogram_cdf(f: &GridFunction, inc: &[f64], t_grid: f64) -> MidCdf {
    const MANT_BITS: u64 = 5;
    let cell_vol = f.grid.h.powi(f.grid.dim as i32);
    let vals = cell_centers(f, inc);
    let floor_level = (1e-9 * f.scale().max(1.0)).max(1e-300);
    let idx_of = |t: f64| -> i64 { (t.max(floor_level).to_bits() >> (52 - MANT_BITS)) as i64 };
    let level_of = |i: i64| -> f64 { f64::from_bits((i as u64) << (52 - MANT_BITS)) };
    let lo = idx_of(floor_level);
    let hi = idx_of(t_grid.max(floor_level)) + 1;
    let nb = (hi - lo + 2).max(2) as usize;
    let mut counts = vec![0u32; nb];
    let mut below = 0u32;
    for v in &vals {
        if *v > t_grid {
            continue;
        }
        if *v < floor_level {
            below += 1;
            continue;
        }
        let i = ((idx_of(*v) - lo) as usize).min(nb - 1);
        counts[i] += 1;
    }
    let mut ts = Vec::with_capacity(nb + 1);
    let mut mus = Vec::with_capacity(nb + 1);
    let mut acc = below as f64;
    ts.push(floor_level);
    mus.push(acc * cell_vol);
    for (i, c) in counts.iter().enumerate() {
        acc += *c as f64;
        if *c > 0 || i + 1 == nb {
            ts.push(level_of(lo + i as i64 + 1).min(t_grid.max(floor_level)));
            mus.push(acc * cell_vol);
        }
    }
    MidCdf { ts, mus, kind: CdfKind::Linear }
}

/// Exact distribution of the 1d piecewise-linear interpolant: each cell with
/// endpoint values (a, b) contributes measure h·(t−min)/(max−min) clamped to
/// [0, h]; sweeping the 2N breakpoints yields a piecewise-linear cdf.
fn events_1d(f: &GridFunction, inc: &[f64], t_grid: f64) -> MidCdf {
    let g = &f.grid;
    let h = g.h;
    // (level, slope change)
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * inc.len());
    for k in 0..g.n[0] - 1 {
        let (a, b) = (inc[k], inc[k + 1]);
        let (lo, hi) = (a.min(b), a.max(b));
        if hi - lo < 1e-300 {
            // flat cell: a jump of h at level lo, smeared over a hair's width
            let w = 1e-12 * (1.0 + lo.abs());
            events.push((lo - w, h / (2.0 * w)));
            events.push((lo + w, -h / (2.0 * w)));
        } else {
            let slope = h / (hi - lo);
            events.push((lo, slope));
            events.push((hi, -slope));
        }
    }
    events.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let mut ts = Vec::with_capacity(events.len());
    let mut mus = Vec::with_capacity(events.len());
    let mut mu = 0.0f64;
    let mut slope = 0.0f64;
    let mut last_t = events.first().map(|e| e.0).unwrap_or(0.0);
    for (t, ds) in events {
        if t > t_grid {
            break;
        }
        mu += slope * (t - last_t);
        slope += ds;
        last_t = t;
        ts.push(t.max(0.0));
        mus.push(mu.max(0.0));
    }
    if last_t < t_grid {
        mu += slope.max(0.0) * (t_grid - last_t);
        ts.push(t_grid);
        mus.push(mu.max(0.0));
    }
    for i in 1..mus.len() {
        if mus[i] < mus[i - 1] {
            mus[i] = mus[i - 1];
        }
    }
    MidCdf { ts, mus, kind: CdfKind::Linear }
}

/// Symmetrized triangle slicing in 2d: each cell is split along both
/// diagonals (four triangles at half weight) and the linear interpolant's
/// sublevel area is summed at log-spaced levels.
fn triangle_cdf(f: &GridFunction, inc: &[f64], t_grid: f64) -> MidCdf {
    let g = &f.grid;
    let (nx, ny) = (g.n[0], g.n[1]);
    let mut tris: Vec<[f64; 3]> = Vec::with_capacity(4 * (nx - 1) * (ny - 1));
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let v00 = inc[g.ravel([i, j, 0])];
            let v10 = inc[g.ravel([i + 1, j, 0])];
            let v01 = inc[g.ravel([i, j + 1, 0])];
            let v11 = inc[g.ravel([i + 1, j + 1, 0])];
            for t in [[v00, v10, v11], [v00, v11, v01], [v10, v11, v01], [v10, v00, v01]] {
                let mut s = t;
                s.sort_unstable_by(f64::total_cmp);
                tris.push(s);
            }
        }
    }
    let tri_area = 0.25 * g.h * g.h;
    let t_floor = (1e-7 * f.scale().max(1.0)).min(t_grid / 2.0).max(1e-300);
    let n_levels = 320usize;
    let ratio = (t_grid.max(2.0 * t_floor) / t_floor).powf(1.0 / (n_levels - 1) as f64);
    let mut ts = Vec::with_capacity(n_levels);
    let mut mus = Vec::with_capacity(n_levels);
    let mut level = t_floor;
    for _ in 0..n_levels {
        let t = level.min(t_grid);
        let mut acc = 0.0;
        for s in &tris {
            acc += tri_fraction(s, t);
        }
        ts.push(t);
        mus.push(acc * tri_area);
        level *= ratio;
        if t >= t_grid {
            break;
        }
    }
    for i in 1..mus.len() {
        if mus[i] < mus[i - 1] {
            mus[i] = mus[i - 1];
        }
    }
    MidCdf { ts, mus, kind: CdfKind::Linear }
}

/// Area fraction of {linear < t} on a triangle with sorted vertex values.
fn tri_fraction(s: &[f64; 3], t: f64) -> f64 {
    let (a, b, c) = (s[0], s[1], s[2]);
    if t <= a {
        return 0.0;
    }
    if t >= c {
        return 1.0;
    }
    if t <= b {
        let den = (b - a) * (c - a);
        if den <= 0.0 {
            return 0.5;
        }
        (t - a) * (t - a) / den
    } else {
        let den = (c - b) * (c - a);
        if den <= 0.0 {
            return 1.0;
        }
        1.0 - (c - t) * (c - t) / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid_function, BuilderSpec, Grid};
    use crate::la::Mat;
    use crate::num::ball_volume;
    use approx::assert_relative_eq;

    fn cone(d: usize, l: f64, h: f64, m: Mat) -> GridFunction {
        build_grid_function(&BuilderSpec::SmoothCone { a: 1.0, m }, Grid::from_spacing(d, l, h).unwrap()).unwrap()
    }

    #[test]
    fn smooth_cone_profile_matches_analytic_mu() {
        // μ(t) = |B1| (t^2+2t)^{d/2} for u = sqrt(1+|y|^2)-1, x = 0, b = 0
        for (d, l, h) in [(1usize, 20.0, 0.05), (2usize, 10.0, 0.1)] {
            let f = cone(d, l, h, Mat::identity(d));
            let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
            let p = section_profile(&f, idx, &[0.0; 3], &ProfileConfig::default());
            assert!(!p.all_infinite);
            for t in [0.01, 0.05, 0.3, 1.0, 3.0, l * 0.8, 3.0 * l] {
                let analytic = ball_volume(d) * (t * t + 2.0 * t).powf(d as f64 / 2.0);
                let got = p.mu(t);
                assert!(
                    (got - analytic).abs() / analytic < 0.03,
                    "d={d} t={t}: mu={got} vs {analytic}"
                );
            }
        }
    }

    #[test]
    fn affine_profile_flags_all_levels_infinite() {
        let g = Grid::from_spacing(1, 4.0, 0.1).unwrap();
        let f = build_grid_function(
            &BuilderSpec::MaxPlanes { planes: vec![([0.4, 0.0, 0.0], 0.2)], radius: 0.0 },
            g,
        )
        .unwrap();
        let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
        let p = section_profile(&f, idx, &[0.4, 0.0, 0.0], &ProfileConfig::default());
        assert!(p.all_infinite);
        assert!(p.flags.cone_unbounded);
        assert!(p.mu(0.5).is_infinite());
    }

    #[test]
    fn abs_at_half_with_slope_one_is_all_infinite() {
        let g = Grid::from_spacing(1, 10.0, 0.05).unwrap();
        let f = build_grid_function(&crate::grid::parse_builder_spec("abs", 1).unwrap(), g).unwrap();
        let idx = f.grid.nearest_node(&[0.5, 0.0, 0.0]).unwrap();
        let p = section_profile(&f, idx, &[1.0, 0.0, 0.0], &ProfileConfig::default());
        assert!(p.all_infinite, "half-line section has infinite measure at every level");
    }

    #[test]
    fn abs_at_origin_slope_zero_is_linear_in_t() {
        let g = Grid::from_spacing(1, 10.0, 0.05).unwrap();
        let f = build_grid_function(&crate::grid::parse_builder_spec("abs", 1).unwrap(), g).unwrap();
        let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
        let p = section_profile(&f, idx, &[0.0; 3], &ProfileConfig::default());
        assert!(p.flags.hessian_fallback, "kink at the origin must be detected");
        for t in [0.5, 1.0, 4.0, 20.0] {
            assert_relative_eq!(p.mu(t), 2.0 * t, max_relative = 0.05);
        }
    }

    #[test]
    fn generalized_inverse_roundtrip() {
        let f = cone(1, 20.0, 0.05, Mat::identity(1));
        let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
        let p = section_profile(&f, idx, &[0.0; 3], &ProfileConfig::default());
        // v(r) = sqrt(1+r^2) - 1 for the isotropic cone
        for r in [0.1, 0.5, 1.0, 3.0, 10.0, 40.0] {
            let v = p.v_of_r(r);
            let want = (1.0 + r * r).sqrt() - 1.0;
            assert!((v - want).abs() / want < 0.03, "r={r}: v={v} want {want}");
        }
        // distribution match |{v < λ}| = μ(λ) at continuity points
        for lam in [0.2, 1.0, 5.0] {
            let mu = p.mu(lam);
            let r = mu / ball_volume(1);
            assert_relative_eq!(p.v_of_r(r * 0.999), lam, max_relative = 0.02);
        }
    }

    #[test]
    fn anisotropic_profile_uses_hessian_determinant() {
        let m = Mat::from_rows(2, &[4.0, 0.0, 0.0, 1.0]);
        let f = cone(2, 10.0, 0.1, m);
        let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
        let p = section_profile(&f, idx, &[0.0; 3], &ProfileConfig::default());
        // near regime: μ(t) = |B1| 2t / sqrt(det H), H = M at the apex
        let t = p.t_small * 0.5;
        assert_relative_eq!(p.mu(t), std::f64::consts::PI * t, max_relative = 0.05);
    }

    #[test]
    fn modes_agree_on_smooth_input() {
        let f = cone(2, 8.0, 0.125, Mat::identity(2));
        let idx = f.grid.nearest_node(&[0.5, 0.25, 0.0]).unwrap();
        let b = f.gradient(idx);
        let base = section_profile(&f, idx, &b, &ProfileConfig::default());
        for mode in [ProfileMode::CellSort, ProfileMode::Histogram] {
            let cfg = ProfileConfig { mode, ..ProfileConfig::default() };
            let p = section_profile(&f, idx, &b, &cfg);
            for t in [0.3, 1.0, 3.0] {
                assert_relative_eq!(p.mu(t), base.mu(t), max_relative = 0.04);
            }
        }
    }

    #[test]
    fn profile_monotone_in_t() {
        let f = cone(2, 8.0, 0.25, Mat::identity(2));
        let idx = f.grid.nearest_node(&[1.0, -0.5, 0.0]).unwrap();
        let b = f.gradient(idx);
        let p = section_profile(&f, idx, &b, &ProfileConfig::default());
        let mut last = 0.0;
        let mut t = 1e-4;
        while t < 50.0 {
            let m = p.mu(t);
            assert!(m >= last - 1e-12, "mu not monotone at t={t}");
            last = m;
            t *= 1.3;
        }
    }

    #[test]
    fn quadratic_growth_has_no_far_model() {
        let g = Grid::from_spacing(2, 4.0, 0.125).unwrap();
        let f = build_grid_function(&BuilderSpec::Quadratic { m: Mat::identity(2) }, g).unwrap();
        let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
        let p = section_profile(&f, idx, &[0.0; 3], &ProfileConfig::default());
        assert!(p.far.is_none());
        assert!(p.mu(1e6).is_infinite());
        // within range the quadratic law holds: μ(t) = |B1| 2t
        assert_relative_eq!(p.mu(0.5), std::f64::consts::PI, max_relative = 0.03);
    }
}
