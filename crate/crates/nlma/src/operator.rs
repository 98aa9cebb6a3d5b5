//! Pointwise evaluation of the nonlocal Monge-Ampère operator.
//!
//! With μ_b the sublevel measure of the increment at x, the full-kernel
//! value is
//!
//!   MA u(x) = C_ma · sup_{b ∈ ∂u(x)} ∫₀^∞ μ_b(t)^{−s/d} dt,
//!   C_ma = (d/s) |B₁|^{1+s/d},
//!
//! under the unnormalized-kernel convention K(y) = |y|^{−d−s}. Levels with
//! μ = +∞ contribute zero; an empty subdifferential gives −∞. Kernel
//! variants reuse the same profile through its radial inverse v(r):
//! value-capped pairs v against min(r^{−d−s}, n), localized cuts the pairing
//! at radius R, and near-field-pinned adds the exact (non-rearranged)
//! near-field integral to the rearranged remainder outside B_ε.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Growth};
use crate::hull::{plane_violation, subdifferential_at, supporting_plane_check, SUBGRADIENT_TOL};
use crate::la::Point;
use crate::num::ball_volume;
use crate::profile::{
    section_profile, CdfKind, NearModel, ProfileConfig, SectionProfile,
};
use crate::quad::IncrementQuad;

// ---------------------------------------------------------------------------
// extended reals
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn from_f64(v: f64) -> Self {
        if v.is_infinite() {
            if v > 0.0 {
                ExtReal::PosInf
            } else {
                ExtReal::NegInf
            }
        } else {
            ExtReal::Finite(v)
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            _ => None,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::PosInf, _) | (_, ExtReal::PosInf) => ExtReal::PosInf,
            (ExtReal::NegInf, x) | (x, ExtReal::NegInf) => x,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
        }
    }

    /// Token spelling used in all file output: `inf`, `-inf`, or the number.
    pub fn token(&self) -> String {
        match self {
            ExtReal::NegInf => "-inf".to_string(),
            ExtReal::PosInf => "inf".to_string(),
            ExtReal::Finite(v) => format!("{:.12e}", v),
        }
    }
}

// ---------------------------------------------------------------------------
// parameters and kernels
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct OperatorParams {
    pub s: f64,
    pub dim: usize,
    pub ball_volume: f64,
    /// (d/s) |B₁|^{1+s/d}
    pub c_ma: f64,
    pub profile: ProfileConfig,
    /// Barycentric refinement rounds when sampling the sup over ∂u(x).
    pub subdiff_refine: usize,
}

impl OperatorParams {
    pub fn new(dim: usize, s: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Validation(format!("dimension {dim} not in 1..=3")));
        }
        if !(s > 1.0 && s < 2.0) {
            return Err(Error::Validation(format!("order s must lie strictly in (1, 2), got {s}")));
        }
        let b1 = ball_volume(dim);
        Ok(OperatorParams {
            s,
            dim,
            ball_volume: b1,
            c_ma: (dim as f64 / s) * b1.powf(1.0 + s / dim as f64),
            profile: ProfileConfig::default(),
            subdiff_refine: 1,
        })
    }

    pub fn with_s(&self, s: f64) -> Result<Self> {
        let mut p = Self::new(self.dim, s)?;
        p.profile = self.profile.clone();
        p.subdiff_refine = self.subdiff_refine;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// all kernels equidistributed with |y|^{−d−s}
    Full,
    /// kernels pinned to |y|^{−d−s} on B_ε
    NearPinned { eps: f64 },
    /// kernels capped at value n
    Capped { n: f64 },
    /// kernels equidistributed with |y|^{−d−s} χ_{B_R}
    Localized { radius: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            KernelSpec::Full => true,
            KernelSpec::NearPinned { eps } => *eps > 0.0,
            KernelSpec::Capped { n } => *n > 0.0,
            KernelSpec::Localized { radius } => *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("kernel parameter must be strictly positive: {self:?}")))
        }
    }

    /// Parse `full`, `nearpinned:eps=..`, `capped:n=..`, `localized:R=..`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, rest) = match text.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (text, None),
        };
        let param = |key: &str| -> Result<f64> {
            let r = rest.ok_or_else(|| Error::Validation(format!("kernel `{name}` needs {key}=<value>")))?;
            let (k, v) = r
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("malformed kernel parameter `{r}`")))?;
            if !k.eq_ignore_ascii_case(key) {
                return Err(Error::Validation(format!("kernel `{name}` expects parameter `{key}`, got `{k}`")));
            }
            v.parse::<f64>().map_err(|_| Error::Validation(format!("bad kernel parameter value `{v}`")))
        };
        let spec = match name.to_ascii_lowercase().as_str() {
            "full" => KernelSpec::Full,
            "nearpinned" => KernelSpec::NearPinned { eps: param("eps")? },
            "capped" => KernelSpec::Capped { n: param("n")? },
            "localized" => KernelSpec::Localized { radius: param("R")? },
            other => return Err(Error::Validation(format!("unknown kernel `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self {
            KernelSpec::Full => "full".into(),
            KernelSpec::NearPinned { eps } => format!("nearpinned:eps={eps}"),
            KernelSpec::Capped { n } => format!("capped:n={n}"),
            KernelSpec::Localized { radius } => format!("localized:R={radius}"),
        }
    }
}

// ---------------------------------------------------------------------------
// evaluation results
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: ExtReal,
    /// slope attaining the sup (the gradient at C¹ points)
    pub b: Point,
    pub flags: Vec<&'static str>,
}

fn growth_gate(f: &GridFunction, kernel: &KernelSpec) -> Result<()> {
    match kernel {
        KernelSpec::Localized { .. } => Ok(()),
        _ => {
            if f.growth == Growth::Quadratic {
                return Err(Error::GrowthViolation);
            }
            if f.cone.is_none() {
                return Err(Error::Validation(
                    "full-kernel evaluation needs an asymptotic cone model to integrate the tail".into(),
                ));
            }
            Ok(())
        }
    }
}

/// MA u(x) under the requested kernel variant. When `b` is supplied the sup
/// over the subdifferential is skipped (the slope must support u at x).
pub fn eval_ma(
    f: &GridFunction,
    x_idx: usize,
    params: &OperatorParams,
    kernel: &KernelSpec,
    b: Option<&Point>,
) -> Result<Evaluation> {
    kernel.validate()?;
    if x_idx >= f.grid.len() {
        return Err(Error::OutsideGrid([f64::NAN; 3]));
    }

    let mut flags: Vec<&'static str> = Vec::new();

    // Def 3.3(a): no supporting plane means −∞ (checked before the growth
    // gate: concave probes carry no cone model and need no tail integral)
    let slopes: Vec<Point> = match b {
        Some(b) => {
            let viol = plane_violation(f, x_idx, b);
            if viol > SUBGRADIENT_TOL * f.scale() {
                return Err(Error::NotSubgradient(viol));
            }
            vec![*b]
        }
        None => {
            let check = supporting_plane_check(f, x_idx);
            if !check.supported {
                return Ok(Evaluation {
                    value: ExtReal::NegInf,
                    b: check.gradient,
                    flags: vec!["nonconvex"],
                });
            }
            if f.convex {
                let sd = subdifferential_at(f, x_idx)?;
                if sd.is_empty() {
                    return Ok(Evaluation { value: ExtReal::NegInf, b: check.gradient, flags: vec!["nonconvex"] });
                }
                sd.sample_slopes(params.subdiff_refine)
            } else {
                // supported point of non-convex data: the gradient plane
                vec![check.gradient]
            }
        }
    };
    growth_gate(f, kernel)?;

    let mut best = ExtReal::NegInf;
    let mut best_b = slopes[0];
    for slope in &slopes {
        let prof = section_profile(f, x_idx, slope, &params.profile);
        collect_flags(&prof, &mut flags);
        let v = kernel_value(f, &prof, params, kernel)?;
        if matches!(v.max(best), x if x == v) && v != best {
            best_b = *slope;
        }
        best = best.max(v);
        if best == ExtReal::PosInf {
            best_b = *slope;
            break;
        }
    }
    Ok(Evaluation { value: best, b: best_b, flags: dedup_flags(flags) })
}

/// Independent cross-check: d|B₁| ∫₀^∞ v(r) r^{−1−s} dr by adaptive
/// quadrature on the radial rearrangement, with analytic endpoint pieces
/// (v ~ r²/2 near 0, the cone law at infinity).
pub fn eval_ma_oracle(
    f: &GridFunction,
    x_idx: usize,
    params: &OperatorParams,
    b: Option<&Point>,
) -> Result<Evaluation> {
    growth_gate(f, &KernelSpec::Full)?;
    let mut flags = Vec::new();
    let slopes: Vec<Point> = match b {
        Some(b) => vec![*b],
        None => {
            let check = supporting_plane_check(f, x_idx);
            if !check.supported {
                return Ok(Evaluation { value: ExtReal::NegInf, b: check.gradient, flags: vec!["nonconvex"] });
            }
            let sd = subdifferential_at(f, x_idx)?;
            if sd.is_empty() {
                return Ok(Evaluation { value: ExtReal::NegInf, b: check.gradient, flags: vec!["nonconvex"] });
            }
            sd.sample_slopes(params.subdiff_refine)
        }
    };
    let mut best = ExtReal::NegInf;
    let mut best_b = slopes[0];
    for slope in &slopes {
        let prof = section_profile(f, x_idx, slope, &params.profile);
        collect_flags(&prof, &mut flags);
        let v = oracle_value(&prof, params);
        if v.max(best) == v && v != best {
            best_b = *slope;
        }
        best = best.max(v);
    }
    Ok(Evaluation { value: best, b: best_b, flags: dedup_flags(flags) })
}

fn collect_flags(prof: &SectionProfile, flags: &mut Vec<&'static str>) {
    if prof.flags.fat_level {
        flags.push("fat-level");
    }
    if prof.flags.cone_unbounded {
        flags.push("cone-unbounded");
    }
    if prof.flags.hessian_fallback {
        flags.push("hessian-fallback");
    }
}

fn dedup_flags(mut flags: Vec<&'static str>) -> Vec<&'static str> {
    flags.sort_unstable();
    flags.dedup();
    flags
}

// ---------------------------------------------------------------------------
// kernel-variant values from one profile
// ---------------------------------------------------------------------------

pub fn kernel_value(
    f: &GridFunction,
    prof: &SectionProfile,
    params: &OperatorParams,
    kernel: &KernelSpec,
) -> Result<ExtReal> {
    match kernel {
        KernelSpec::Full => Ok(full_value(prof, params)),
        KernelSpec::Capped { n } => Ok(capped_value(prof, params, *n)),
        KernelSpec::Localized { radius } => localized_value(prof, params, *radius),
        KernelSpec::NearPinned { eps } => Ok(near_pinned_value(f, prof, params, *eps)),
    }
}

/// C_ma ∫₀^∞ μ(t)^{−s/d} dt with closed forms on the near power law and the
/// cone tail and exact integration of the empirical mid cdf.
pub fn full_value(prof: &SectionProfile, params: &OperatorParams) -> ExtReal {
    if prof.all_infinite {
        return ExtReal::Finite(0.0);
    }
    let (s, d) = (params.s, params.dim as f64);
    let e = s / d;

    // near regime
    let near = match &prof.near {
        NearModel::PowerLaw { coef, expo } => {
            let pow = 1.0 - expo * e;
            if pow <= 1e-9 {
                return ExtReal::PosInf;
            }
            coef.powf(-e) * prof.t_small.powf(pow) / pow
        }
        NearModel::Fat { mu0, slope } => {
            // ∫₀^{t_s} (mu0 + kt)^{-e} dt
            if *slope * prof.t_small < 1e-12 * mu0 {
                mu0.powf(-e) * prof.t_small
            } else {
                let p1 = 1.0 - e;
                ((mu0 + slope * prof.t_small).powf(p1) - mu0.powf(p1)) / (slope * p1)
            }
        }
    };

    let mid = integrate_mid_t(prof, e);

    let far = match &prof.far {
        Some(fm) => fm.v.powf(-e) * (prof.t_grid + fm.shift).max(1e-300).powf(1.0 - s) / (s - 1.0),
        None => 0.0,
    };

    ExtReal::Finite(params.c_ma * (near + mid + far))
}

/// ∫_{t_small}^{t_grid} μ(t)^{−e d} dt over the mid cdf (step: exact sums,
/// linear: per-piece antiderivative), with the near-model floor applied.
fn integrate_mid_t(prof: &SectionProfile, e: f64) -> f64 {
    let floor = prof.near.eval(prof.t_small);
    let (lo, hi) = (prof.t_small, prof.t_grid);
    if hi <= lo {
        return 0.0;
    }
    let ts = &prof.mid.ts;
    let mus = &prof.mid.mus;
    let mut acc = 0.0;
    let mut t_prev = lo;
    let mut mu_prev = prof.mid.eval(lo).max(floor);
    let start = ts.partition_point(|t| *t <= lo);
    for i in start..ts.len() {
        let t_i = ts[i].min(hi);
        if t_i <= t_prev {
            if ts[i] >= hi {
                break;
            }
            continue;
        }
        let mu_i = mus[i].max(floor);
        match prof.mid.kind {
            CdfKind::Step => {
                // μ = mu_prev on [t_prev, t_i)
                if mu_prev > 0.0 {
                    acc += mu_prev.powf(-e) * (t_i - t_prev);
                }
            }
            CdfKind::Linear => {
                let k = (mu_i - mu_prev) / (t_i - t_prev);
                if k.abs() < 1e-300 * mu_i.max(1.0) {
                    acc += mu_prev.powf(-e) * (t_i - t_prev);
                } else {
                    let p1 = 1.0 - e;
                    acc += (mu_i.powf(p1) - mu_prev.powf(p1)) / (k * p1);
                }
            }
        }
        t_prev = t_i;
        mu_prev = mu_i;
        if ts[i] >= hi {
            break;
        }
    }
    if t_prev < hi && mu_prev > 0.0 {
        acc += mu_prev.powf(-e) * (hi - t_prev);
    }
    acc
}

// ---------------------------------------------------------------------------
// radial pieces of the rearrangement
// ---------------------------------------------------------------------------

/// v(r) on [r_lo, r_hi]: the forms all admit closed integrals against r^k.
#[derive(Clone, Copy, Debug)]
enum VForm {
    Zero,
    /// c · r^e
    Power { c: f64, e: f64 },
    /// α + β r^d (inverse of a cdf linear in the measure)
    AffinePowD { alpha: f64, beta: f64 },
    /// α + c₁ r (cone law at infinity)
    AffineR { alpha: f64, c1: f64 },
    Const { c: f64 },
}

#[derive(Clone, Copy, Debug)]
struct RadialPiece {
    r_lo: f64,
    r_hi: f64,
    form: VForm,
}

fn radial_pieces(prof: &SectionProfile) -> Vec<RadialPiece> {
    let d = prof.dim as f64;
    let b1 = ball_volume(prof.dim);
    let r_of = |q: f64| (q.max(0.0) / b1).powf(1.0 / d);
    let mut pieces = Vec::with_capacity(prof.mid.ts.len() + 3);

    let q_small;
    match &prof.near {
        NearModel::Fat { mu0, slope } => {
            q_small = prof.near.eval(prof.t_small);
            pieces.push(RadialPiece { r_lo: 0.0, r_hi: r_of(*mu0), form: VForm::Zero });
            if *slope > 0.0 && q_small > *mu0 {
                // v = (q − mu0)/slope = −mu0/slope + (|B1|/slope) r^d
                pieces.push(RadialPiece {
                    r_lo: r_of(*mu0),
                    r_hi: r_of(q_small),
                    form: VForm::AffinePowD { alpha: -mu0 / slope, beta: b1 / slope },
                });
            }
        }
        NearModel::PowerLaw { coef, expo } => {
            q_small = coef * prof.t_small.powf(*expo);
            // t = (q/A)^{1/p}, q = |B1| r^d  =>  v = (|B1|/A)^{1/p} r^{d/p}
            let c = (b1 / coef).powf(1.0 / expo);
            pieces.push(RadialPiece {
                r_lo: 0.0,
                r_hi: r_of(q_small),
                form: VForm::Power { c, e: d / expo },
            });
        }
    }

    // mid pieces: walk the cdf above (t_small, q_small)
    let mut t_prev = prof.t_small;
    let mut q_prev = q_small;
    let start = prof.mid.ts.partition_point(|t| *t <= prof.t_small);
    for i in start..prof.mid.ts.len() {
        let t_i = prof.mid.ts[i].min(prof.t_grid).max(t_prev);
        let q_i = prof.mid.mus[i].max(q_prev);
        if q_i > q_prev * (1.0 + 1e-15) + 1e-300 {
            let (r0, r1) = (r_of(q_prev), r_of(q_i));
            let form = match prof.mid.kind {
                CdfKind::Step => VForm::Const { c: t_i },
                CdfKind::Linear => {
                    // v linear in q: v = t_prev + (t_i - t_prev)(q - q_prev)/(q_i - q_prev)
                    let slope = (t_i - t_prev) / (q_i - q_prev);
                    VForm::AffinePowD { alpha: t_prev - slope * q_prev, beta: slope * b1 }
                }
            };
            pieces.push(RadialPiece { r_lo: r0, r_hi: r1, form });
        }
        t_prev = t_i;
        q_prev = q_i;
        if prof.mid.ts[i] >= prof.t_grid {
            break;
        }
    }
    // flat stretch up to the far handoff
    if let Some(fm) = &prof.far {
        let q_grid = fm.v * (prof.t_grid + fm.shift).max(0.0).powf(d);
        if q_grid > q_prev {
            pieces.push(RadialPiece { r_lo: r_of(q_prev), r_hi: r_of(q_grid), form: VForm::Const { c: t_prev } });
        }
        // far: v = (|B1|/V)^{1/d} r − shift
        pieces.push(RadialPiece {
            r_lo: r_of(q_grid.max(q_prev)),
            r_hi: f64::INFINITY,
            form: VForm::AffineR {
                alpha: -fm.shift,
                c1: (b1 / fm.v).powf(1.0 / d),
            },
        });
    }
    pieces
}

/// ∫ v(r) r^k dr over [lo, hi] for one piece form; d is the dimension
/// (AffinePowD means α + β' r^d with β' = beta/|B1|·... prebaked).
fn piece_integral(form: &VForm, d: f64, k: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let powi = |r: f64, e: f64| -> f64 {
        if r.is_infinite() {
            0.0 // only used with negative exponents at infinity
        } else {
            r.powf(e)
        }
    };
    match form {
        VForm::Zero => 0.0,
        VForm::Const { c } => {
            let e = k + 1.0;
            if e.abs() < 1e-12 {
                c * (hi / lo).ln()
            } else {
                c * (powi(hi, e) - powi(lo, e)) / e
            }
        }
        VForm::Power { c, e } => {
            let p = e + k + 1.0;
            if p.abs() < 1e-12 {
                c * (hi / lo).ln()
            } else if hi.is_infinite() && p > 0.0 {
                f64::INFINITY
            } else {
                c * (powi(hi, p) - powi(lo, p)) / p
            }
        }
        VForm::AffinePowD { alpha, beta } => {
            let e1 = k + 1.0;
            let e2 = k + d + 1.0;
            let mut acc = 0.0;
            if e1.abs() < 1e-12 {
                acc += alpha * (hi / lo).ln();
            } else if hi.is_infinite() && e1 > 0.0 && *alpha != 0.0 {
                return f64::INFINITY;
            } else {
                acc += alpha * (powi(hi, e1) - powi(lo, e1)) / e1;
            }
            if e2.abs() < 1e-12 {
                acc += beta * (hi / lo).ln();
            } else if hi.is_infinite() && e2 > 0.0 && *beta != 0.0 {
                return f64::INFINITY;
            } else {
                acc += beta * (powi(hi, e2) - powi(lo, e2)) / e2;
            }
            acc
        }
        VForm::AffineR { alpha, c1 } => {
            let e1 = k + 1.0;
            let e2 = k + 2.0;
            let mut acc = 0.0;
            if e1.abs() < 1e-12 {
                acc += alpha * (hi / lo).ln();
            } else if hi.is_infinite() && e1 > 0.0 && *alpha != 0.0 {
                return f64::INFINITY;
            } else {
                acc += alpha * (powi(hi, e1) - powi(lo, e1)) / e1;
            }
            if e2.abs() < 1e-12 {
                acc += c1 * (hi / lo).ln();
            } else if hi.is_infinite() && e2 > 0.0 && *c1 != 0.0 {
                return f64::INFINITY;
            } else {
                acc += c1 * (powi(hi, e2) - powi(lo, e2)) / e2;
            }
            acc
        }
    }
}

/// d|B₁| [ n ∫₀^{r_n} v r^{d−1} dr + ∫_{r_n}^∞ v r^{−1−s} dr ],
/// r_n = n^{−1/(d+s)}: the optimal pairing against min(|y|^{−d−s}, n).
pub fn capped_value(prof: &SectionProfile, params: &OperatorParams, n: f64) -> ExtReal {
    if prof.all_infinite {
        return ExtReal::Finite(0.0);
    }
    let (s, d) = (params.s, params.dim as f64);
    let r_n = n.powf(-1.0 / (d + s));
    let mut acc = 0.0;
    for p in radial_pieces(prof) {
        // inner part against the flat cap
        let lo = p.r_lo.min(r_n);
        let hi = p.r_hi.min(r_n);
        acc += n * piece_integral(&p.form, d, d - 1.0, lo, hi);
        // outer part against the singular kernel
        let lo = p.r_lo.max(r_n);
        let hi = p.r_hi.max(r_n);
        acc += piece_integral(&p.form, d, -1.0 - s, lo, hi);
        if !acc.is_finite() {
            return ExtReal::PosInf;
        }
    }
    ExtReal::Finite(d * params.ball_volume * acc)
}

/// d|B₁| ∫₀^R v(r) r^{−1−s} dr: pairing cut at radius R.
pub fn localized_value(prof: &SectionProfile, params: &OperatorParams, radius: f64) -> Result<ExtReal> {
    if prof.all_infinite {
        return Ok(ExtReal::Finite(0.0));
    }
    let (s, d) = (params.s, params.dim as f64);
    // the profile must resolve levels up to v(R)
    if prof.far.is_none() {
        let q_need = params.ball_volume * radius.powf(d);
        let q_have = prof.mu_at_grid();
        if q_need > q_have {
            return Err(Error::LocalizedRange(radius, (q_have / params.ball_volume).powf(1.0 / d)));
        }
    }
    let mut acc = 0.0;
    for p in radial_pieces(prof) {
        let lo = p.r_lo.min(radius);
        let hi = p.r_hi.min(radius);
        acc += piece_integral(&p.form, d, -1.0 - s, lo, hi);
        if !acc.is_finite() {
            return Ok(ExtReal::PosInf);
        }
    }
    Ok(ExtReal::Finite(d * params.ball_volume * acc))
}

/// Exact near-field integral on B_ε plus the optimally paired remainder
/// outside: ∫_{B_ε} ũ K + d|B₁| ∫_ε^∞ v_ε(r) r^{−1−s} dr. The remainder's
/// rearrangement v_ε coincides with v once the section covers B_ε.
pub fn near_pinned_value(
    f: &GridFunction,
    prof: &SectionProfile,
    params: &OperatorParams,
    eps: f64,
) -> ExtReal {
    if prof.all_infinite {
        return ExtReal::Finite(0.0);
    }
    let (s, d) = (params.s, params.dim as f64);
    let b1 = params.ball_volume;

    // near field over B_eps
    let near = match (&prof.hessian, prof.flags.hessian_fallback) {
        (Some(h), false) => {
            // quadratic model: |B1| tr(H) ε^{2−s} / (2(2−s)); exact per-cell
            // at ε ≲ h where the model is the best available description
            let tr: f64 = (0..params.dim).map(|i| h.a[i][i]).sum();
            b1 * tr * eps.powf(2.0 - s) / (2.0 * (2.0 - s))
        }
        _ => {
            // kink or missing Hessian: direct singular quadrature
            let q = IncrementQuad::new(params.dim);
            q.increment_integral(f, prof.x_idx, &prof.b, s, Some(eps))
        }
    };
    if !near.is_finite() {
        return ExtReal::PosInf;
    }

    // level above which the section covers B_eps
    let t2 = prof.covering_level(eps).max(prof.v_of_r(eps));
    let r2 = {
        let q2 = prof.mu(t2).max(b1 * eps.powf(d));
        (q2 / b1).powf(1.0 / d).max(eps)
    };

    // bisection rearrangement of the increment restricted outside B_eps on
    // [eps, r2]
    let v_eps = |r: f64| -> f64 {
        let target = b1 * (r.powf(d) - eps.powf(d));
        if target <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, t2.max(1e-12));
        // mu_eps(t) = mu(t) − |section ∩ B_eps|
        for _ in 0..48 {
            let mid = 0.5 * (lo + hi);
            let m = prof.mu(mid) - prof.ball_overlap(mid, eps);
            if m < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut outer = 0.0;
    if r2 > eps {
        // composite Simpson on geometric panels
        let panels = 24usize;
        let ratio = (r2 / eps).powf(1.0 / panels as f64);
        let mut a = eps;
        for _ in 0..panels {
            let b_end = (a * ratio).min(r2);
            let m = 0.5 * (a + b_end);
            let g = |r: f64| v_eps(r) * r.powf(-1.0 - s);
            outer += (b_end - a) / 6.0 * (g(a) + 4.0 * g(m) + g(b_end));
            a = b_end;
        }
    }
    // beyond r2 the restricted rearrangement equals the full one
    for p in radial_pieces(prof) {
        let lo = p.r_lo.max(r2);
        let hi = p.r_hi.max(r2);
        outer += piece_integral(&p.form, d, -1.0 - s, lo, hi);
        if !outer.is_finite() {
            return ExtReal::PosInf;
        }
    }
    ExtReal::Finite(near + d * b1 * outer)
}

/// Fast near-pinned variant for solver sweeps: quadratic-model near field
/// plus the unrestricted rearrangement outside (skips the v_ε bisection).
pub fn near_pinned_fast(prof: &SectionProfile, params: &OperatorParams, eps: f64) -> ExtReal {
    if prof.all_infinite {
        return ExtReal::Finite(0.0);
    }
    let (s, d) = (params.s, params.dim as f64);
    let b1 = params.ball_volume;
    let near = match &prof.hessian {
        Some(h) => {
            let tr: f64 = (0..params.dim).map(|i| h.a[i][i]).sum();
            b1 * tr * eps.powf(2.0 - s) / (2.0 * (2.0 - s))
        }
        None => 0.0,
    };
    let mut outer = 0.0;
    for p in radial_pieces(prof) {
        let lo = p.r_lo.max(eps);
        let hi = p.r_hi.max(eps);
        outer += piece_integral(&p.form, d, -1.0 - s, lo, hi);
        if !outer.is_finite() {
            return ExtReal::PosInf;
        }
    }
    ExtReal::Finite(near + d * b1 * outer)
}

// ---------------------------------------------------------------------------
// rearrangement oracle
// ---------------------------------------------------------------------------

/// Adaptive-quadrature evaluation of d|B₁| ∫ v(r) r^{−1−s} dr. Endpoints:
/// the near power law integrates in closed form (integrand ~ r^{1−s}), and
/// the cone law closes the tail (integrand ~ r^{−s}).
pub fn oracle_value(prof: &SectionProfile, params: &OperatorParams) -> ExtReal {
    if prof.all_infinite {
        return ExtReal::Finite(0.0);
    }
    let (s, d) = (params.s, params.dim as f64);
    let b1 = params.ball_volume;

    let q_small = match &prof.near {
        NearModel::PowerLaw { coef, expo } => {
            // analytic check for divergence
            if d / expo <= s + 1e-12 {
                return ExtReal::PosInf;
            }
            coef * prof.t_small.powf(*expo)
        }
        NearModel::Fat { .. } => prof.near.eval(prof.t_small),
    };
    let r_small = (q_small / b1).powf(1.0 / d);
    let q_grid = prof.mu_at_grid().max(q_small);
    let r_grid = (q_grid / b1).powf(1.0 / d);

    // closed near endpoint (integrand ~ r^{1−s} under the power law; the fat
    // ramp integrates in closed form as well)
    let mut acc = match &prof.near {
        NearModel::PowerLaw { coef, expo } => {
            let c = (b1 / coef).powf(1.0 / expo);
            let p = d / expo - s;
            c * r_small.powf(p) / p
        }
        NearModel::Fat { mu0, slope } => {
            if *slope > 0.0 && q_small > *mu0 {
                // v = (|B1| r^d − mu0)/slope on [r(mu0), r_small]
                let r0 = (mu0 / b1).powf(1.0 / d);
                (b1 / slope) * (r_small.powf(d - s) - r0.powf(d - s)) / (d - s)
                    + (mu0 / slope) * (r_small.powf(-s) - r0.powf(-s)) / s
            } else {
                0.0
            }
        }
    };

    // adaptive Simpson on the sampled generalized inverse
    if r_grid > r_small * (1.0 + 1e-12) {
        let g = |r: f64| prof.v_of_r(r) * r.powf(-1.0 - s);
        acc += adaptive_simpson(&g, r_small, r_grid, 1e-8 * (1.0 + acc.abs()), 20);
    }

    // cone tail
    if let Some(fm) = &prof.far {
        let c1 = (b1 / fm.v).powf(1.0 / d);
        let t_far = prof.t_grid;
        let r_far = r_grid.max((fm.v * (t_far + fm.shift).max(0.0).powf(d) / b1).powf(1.0 / d));
        if r_far > r_grid * (1.0 + 1e-12) {
            let g = |r: f64| prof.v_of_r(r) * r.powf(-1.0 - s);
            acc += adaptive_simpson(&g, r_grid, r_far, 1e-8 * (1.0 + acc.abs()), 16);
        }
        acc += c1 * r_far.powf(1.0 - s) / (s - 1.0) - fm.shift * r_far.powf(-s) / s;
    }
    ExtReal::Finite(d * b1 * acc)
}

fn adaptive_simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(g: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = g(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn rec(
        g: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(g, a, fa, m, fm);
        let (right, rm, frm) = simpson(g, m, fm, b, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(g, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + rec(g, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb) = (g(a), g(b));
    let (whole, m, fm) = simpson(g, a, fa, b, fb);
    rec(g, a, fa, b, fb, whole, m, fm, tol, depth)
}

// ---------------------------------------------------------------------------
// radial rearrangement as a first-class result
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RadialProfile {
    /// v ≡ 0 marker (every level has infinite measure: MA contribution 0)
    pub all_zero: bool,
    pub rs: Vec<f64>,
    pub vs: Vec<f64>,
}

/// Radial rearrangement of the increment: the generalized inverse
/// v(r) = inf{t : μ(t) ≥ |B₁| r^d}, constant across fat levels.
pub fn radial_rearrangement(prof: &SectionProfile) -> RadialProfile {
    if prof.all_infinite {
        return RadialProfile { all_zero: true, rs: vec![], vs: vec![] };
    }
    let b1 = ball_volume(prof.dim);
    let d = prof.dim as f64;
    let r_grid = (prof.mu_at_grid() / b1).powf(1.0 / d).max(prof.grid_h);
    let r_lo = (prof.grid_h / 8.0).min(r_grid / 4.0);
    let n = 257usize;
    let ratio = (4.0 * r_grid / r_lo).powf(1.0 / (n - 1) as f64);
    let mut rs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut r = r_lo;
    for _ in 0..n {
        rs.push(r);
        vs.push(prof.v_of_r(r));
        r *= ratio;
    }
    RadialProfile { all_zero: false, rs, vs }
}

// ---------------------------------------------------------------------------
// s → 2 scaled-limit study
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LimitStudy {
    pub entries: Vec<(f64, f64)>,
    /// successive |Δ scaled| values (should shrink as s → 2)
    pub gaps: Vec<f64>,
    pub gaps_decreasing: bool,
}

/// Table of (s, (2−s)·MA u(x)) values sharing one section profile (the
/// rearrangement does not depend on s).
pub fn scaled_limit_study(
    f: &GridFunction,
    x_idx: usize,
    base: &OperatorParams,
    s_list: &[f64],
) -> Result<LimitStudy> {
    growth_gate(f, &KernelSpec::Full)?;
    let check = supporting_plane_check(f, x_idx);
    if !check.supported {
        return Err(Error::Validation("scaled-limit study needs a supported, smooth point".into()));
    }
    let b = check.gradient;
    let viol = plane_violation(f, x_idx, &b);
    if viol > SUBGRADIENT_TOL * f.scale() {
        return Err(Error::NotSubgradient(viol));
    }
    let prof = section_profile(f, x_idx, &b, &base.profile);
    let mut entries = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let p = base.with_s(s)?;
        let v = match full_value(&prof, &p) {
            ExtReal::Finite(v) => v,
            _ => f64::INFINITY,
        };
        entries.push((s, (2.0 - s) * v));
    }
    let gaps: Vec<f64> = entries.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let gaps_decreasing = gaps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    Ok(LimitStudy { entries, gaps, gaps_decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid_function, parse_builder_spec, BuilderSpec, Grid};
    use crate::la::Mat;
    use crate::num::smooth_cone_value;
    use approx::assert_relative_eq;

    fn cone(d: usize, l: f64, h: f64, m: Mat) -> GridFunction {
        build_grid_function(&BuilderSpec::SmoothCone { a: 1.0, m }, Grid::from_spacing(d, l, h).unwrap()).unwrap()
    }

    fn center(f: &GridFunction) -> usize {
        f.grid.nearest_node(&[0.0; 3]).unwrap()
    }

    #[test]
    fn closed_form_anchor_within_two_percent() {
        for (d, l, h) in [(1usize, 20.0, 0.05), (2usize, 12.0, 0.12)] {
            let f = cone(d, l, h, Mat::identity(d));
            for s in [1.3, 1.5, 1.8] {
                let params = OperatorParams::new(d, s).unwrap();
                let got = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None)
                    .unwrap()
                    .value
                    .finite()
                    .unwrap();
                let want = smooth_cone_value(d, s);
                assert!(
                    (got - want).abs() / want < 0.02,
                    "d={d} s={s}: {got} vs {want} ({:.2}%)",
                    100.0 * (got - want).abs() / want
                );
            }
        }
    }

    #[test]
    fn anisotropic_anchor_scales_with_determinant() {
        // MA(M-cone at apex) = closed(d,s) · (det M)^{s/(2d)} exactly
        let m = Mat::from_rows(2, &[4.0, 0.0, 0.0, 1.0]);
        let f = cone(2, 12.0, 0.12, m);
        let s = 1.5;
        let params = OperatorParams::new(2, s).unwrap();
        let got = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None)
            .unwrap()
            .value
            .finite()
            .unwrap();
        let want = smooth_cone_value(2, s) * 4.0f64.powf(s / 4.0);
        assert!((got - want).abs() / want < 0.02, "{got} vs {want}");
    }

    #[test]
    fn affine_evaluates_to_zero() {
        let g = Grid::from_spacing(1, 5.0, 0.1).unwrap();
        let f = build_grid_function(
            &BuilderSpec::MaxPlanes { planes: vec![([0.3, 0.0, 0.0], 0.1)], radius: 0.0 },
            g,
        )
        .unwrap();
        let params = OperatorParams::new(1, 1.5).unwrap();
        let ev = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap();
        assert_eq!(ev.value, ExtReal::Finite(0.0));
        assert!(ev.flags.contains(&"cone-unbounded"));
    }

    #[test]
    fn abs_value_edge_cases() {
        let g = Grid::from_spacing(1, 10.0, 0.05).unwrap();
        let f = build_grid_function(&parse_builder_spec("abs", 1).unwrap(), g).unwrap();
        let params = OperatorParams::new(1, 1.5).unwrap();
        // +∞ at the kink
        let at0 = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap();
        assert_eq!(at0.value, ExtReal::PosInf);
        // 0 away from it (half-line sections have infinite measure)
        let idx = f.grid.nearest_node(&[0.5, 0.0, 0.0]).unwrap();
        let at_half = eval_ma(&f, idx, &params, &KernelSpec::Full, None).unwrap();
        assert_eq!(at_half.value, ExtReal::Finite(0.0));
    }

    #[test]
    fn concave_input_gives_neg_inf() {
        let g = Grid::from_spacing(1, 10.0, 0.1).unwrap();
        let f = build_grid_function(&BuilderSpec::NegCone { a: 1.0, m: Mat::identity(1) }, g).unwrap();
        let params = OperatorParams::new(1, 1.5).unwrap();
        let ev = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap();
        assert_eq!(ev.value, ExtReal::NegInf);
        assert!(ev.flags.contains(&"nonconvex"));
    }

    #[test]
    fn oracle_matches_direct_evaluation() {
        for (d, m, l, h) in [
            (1usize, Mat::identity(1), 20.0, 0.05),
            (2usize, Mat::identity(2), 12.0, 0.12),
            (2usize, Mat::from_rows(2, &[4.0, 0.0, 0.0, 1.0]), 12.0, 0.12),
        ] {
            let f = cone(d, l, h, m);
            let params = OperatorParams::new(d, 1.5).unwrap();
            let a = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap().value.finite().unwrap();
            let b = eval_ma_oracle(&f, center(&f), &params, None).unwrap().value.finite().unwrap();
            assert!((a - b).abs() / a.max(1e-8) < 0.01, "d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn capped_monotone_in_n_and_below_full() {
        let f = cone(1, 20.0, 0.05, Mat::identity(1));
        let params = OperatorParams::new(1, 1.5).unwrap();
        let full = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap().value.finite().unwrap();
        let mut last = 0.0;
        for n in [1.0, 10.0, 1e3, 1e6, 1e12] {
            let v = eval_ma(&f, center(&f), &params, &KernelSpec::Capped { n }, None)
                .unwrap()
                .value
                .finite()
                .unwrap();
            assert!(v >= last - 1e-12, "capped not monotone at n={n}");
            assert!(v <= full * (1.0 + 1e-9), "capped exceeds full at n={n}");
            last = v;
        }
        assert_relative_eq!(last, full, max_relative = 1e-5);
    }

    #[test]
    fn capped_is_finite_at_kinks() {
        let g = Grid::from_spacing(1, 10.0, 0.05).unwrap();
        let f = build_grid_function(&parse_builder_spec("abs", 1).unwrap(), g).unwrap();
        let params = OperatorParams::new(1, 1.5).unwrap();
        let v = eval_ma(&f, center(&f), &params, &KernelSpec::Capped { n: 1e4 }, None).unwrap();
        assert!(matches!(v.value, ExtReal::Finite(x) if x > 0.0));
    }

    #[test]
    fn localized_below_full_and_translation_invariant_on_quadratics() {
        let f = cone(1, 20.0, 0.05, Mat::identity(1));
        let params = OperatorParams::new(1, 1.5).unwrap();
        let full = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap().value.finite().unwrap();
        let loc = eval_ma(&f, center(&f), &params, &KernelSpec::Localized { radius: 2.0 }, None)
            .unwrap()
            .value
            .finite()
            .unwrap();
        assert!(loc <= full * (1.0 + 1e-9) && loc > 0.0);

        // pure quadratic: the localized value is independent of x
        let g = Grid::from_spacing(1, 6.0, 0.05).unwrap();
        let q = build_grid_function(&BuilderSpec::Quadratic { m: Mat::identity(1) }, g).unwrap();
        let k = KernelSpec::Localized { radius: 1.0 };
        let mut vals = Vec::new();
        for xc in [-1.5, 0.0, 2.0] {
            let idx = q.grid.nearest_node(&[xc, 0.0, 0.0]).unwrap();
            let b = q.gradient(idx);
            vals.push(
                eval_ma(&q, idx, &params, &k, Some(&b)).unwrap().value.finite().unwrap(),
            );
        }
        for v in &vals {
            assert_relative_eq!(*v, vals[0], max_relative = 5e-3);
        }
        // quadratic growth is rejected by the full kernel
        let idx = q.grid.nearest_node(&[0.0; 3]).unwrap();
        assert!(matches!(
            eval_ma(&q, idx, &params, &KernelSpec::Full, None),
            Err(Error::GrowthViolation)
        ));
    }

    #[test]
    fn near_pinned_dominates_full_with_rate() {
        // 0 ≤ NP(ε) − Full ≤ C ε^{2−s}: pinning restricts the infimum family
        let m = Mat::from_rows(2, &[4.0, 0.0, 0.0, 1.0]);
        let f = cone(2, 12.0, 0.12, m);
        let s = 1.5;
        let params = OperatorParams::new(2, s).unwrap();
        let idx = center(&f);
        let b = [0.0; 3];
        let full = eval_ma(&f, idx, &params, &KernelSpec::Full, Some(&b)).unwrap().value.finite().unwrap();
        let h = f.grid.h;
        let mut gaps = Vec::new();
        for k in [1.0, 2.0, 4.0, 8.0] {
            let np = eval_ma(&f, idx, &params, &KernelSpec::NearPinned { eps: k * h }, Some(&b))
                .unwrap()
                .value
                .finite()
                .unwrap();
            let gap = np - full;
            assert!(gap > -1e-6 * full, "NP must dominate Full (gap {gap} at ε={k}h)");
            gaps.push(gap.max(1e-12));
        }
        // exponent fit within ±0.2 of 2−s
        let xs: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|k| (k * h).ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let (slope, _) = crate::num::linear_fit(&xs, &ys);
        assert!(
            (slope - (2.0 - s)).abs() <= 0.2,
            "gap exponent {slope} vs 2-s = {}",
            2.0 - s
        );
    }

    #[test]
    fn rearrangement_of_smooth_cone_profile() {
        let f = cone(1, 20.0, 0.05, Mat::identity(1));
        let prof = section_profile(&f, center(&f), &[0.0; 3], &ProfileConfig::default());
        let rp = radial_rearrangement(&prof);
        assert!(!rp.all_zero);
        for (r, v) in rp.rs.iter().zip(&rp.vs) {
            let want = (1.0 + r * r).sqrt() - 1.0;
            if *r > 0.05 && *r < 30.0 {
                assert!((v - want).abs() / want.max(1e-3) < 0.02, "r={r}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn rearrangement_all_infinite_marker() {
        let g = Grid::from_spacing(1, 4.0, 0.1).unwrap();
        let f = build_grid_function(
            &BuilderSpec::MaxPlanes { planes: vec![([0.4, 0.0, 0.0], 0.0)], radius: 0.0 },
            g,
        )
        .unwrap();
        let prof = section_profile(&f, center(&f), &[0.4, 0.0, 0.0], &ProfileConfig::default());
        let rp = radial_rearrangement(&prof);
        assert!(rp.all_zero);
    }

    #[test]
    fn quadratic_rearrangement_is_half_r_squared() {
        let g = Grid::from_spacing(1, 6.0, 0.05).unwrap();
        let q = build_grid_function(&BuilderSpec::Quadratic { m: Mat::identity(1) }, g).unwrap();
        let prof = section_profile(&q, center(&q), &[0.0; 3], &ProfileConfig::default());
        for r in [0.2, 0.5, 1.0, 2.0] {
            assert_relative_eq!(prof.v_of_r(r), r * r / 2.0, max_relative = 0.02);
        }
    }

    #[test]
    fn scaled_limit_ratio_and_cauchy_gaps() {
        let f1 = cone(2, 12.0, 0.12, Mat::identity(2));
        let f2 = cone(2, 12.0, 0.12, Mat::from_rows(2, &[4.0, 0.0, 0.0, 1.0]));
        let base = OperatorParams::new(2, 1.5).unwrap();
        let ss = [1.9, 1.95, 1.99];
        let s1 = scaled_limit_study(&f1, center(&f1), &base, &ss).unwrap();
        let s2 = scaled_limit_study(&f2, center(&f2), &base, &ss).unwrap();
        assert!(s1.gaps_decreasing, "gaps {:?}", s1.gaps);
        let ratio = s2.entries[2].1 / s1.entries[2].1;
        assert!((ratio - 2.0).abs() / 2.0 < 0.05, "ratio {ratio}");
    }

    #[test]
    fn scaled_limit_affine_is_zero() {
        let g = Grid::from_spacing(1, 5.0, 0.1).unwrap();
        let f = build_grid_function(
            &BuilderSpec::MaxPlanes { planes: vec![([0.2, 0.0, 0.0], 0.0)], radius: 0.0 },
            g,
        )
        .unwrap();
        let base = OperatorParams::new(1, 1.5).unwrap();
        let study = scaled_limit_study(&f, center(&f), &base, &[1.9, 1.95, 1.99]).unwrap();
        for (_, v) in study.entries {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn kernel_spec_parser() {
        assert_eq!(KernelSpec::parse("full").unwrap(), KernelSpec::Full);
        assert_eq!(
            KernelSpec::parse("nearpinned:eps=0.25").unwrap(),
            KernelSpec::NearPinned { eps: 0.25 }
        );
        assert_eq!(KernelSpec::parse("capped:n=100").unwrap(), KernelSpec::Capped { n: 100.0 });
        assert_eq!(
            KernelSpec::parse("localized:R=1.5").unwrap(),
            KernelSpec::Localized { radius: 1.5 }
        );
        assert!(KernelSpec::parse("bogus").is_err());
        assert!(KernelSpec::parse("capped:n=-1").is_err());
    }

    #[test]
    fn ext_real_tokens() {
        assert_eq!(ExtReal::PosInf.token(), "inf");
        assert_eq!(ExtReal::NegInf.token(), "-inf");
        assert!(ExtReal::Finite(1.5).token().starts_with("1.5"));
    }

    #[test]
    fn dirichlet_envelope_value() {
        // U = max(|y|, 1): MA U(0) = C_ma ∫ (2(1+t))^{-s} dt = 2/(s(s-1))
        let g = Grid::from_spacing(1, 8.0, 0.02).unwrap();
        let planes = vec![([1.0, 0.0, 0.0], 0.0), ([-1.0, 0.0, 0.0], 0.0), ([0.0, 0.0, 0.0], 1.0)];
        let f = build_grid_function(&BuilderSpec::MaxPlanes { planes, radius: 0.0 }, g).unwrap();
        let s = 1.5;
        let params = OperatorParams::new(1, s).unwrap();
        let ev = eval_ma(&f, center(&f), &params, &KernelSpec::Full, None).unwrap();
        let got = ev.value.finite().unwrap();
        let want = 2.0 / (s * (s - 1.0));
        assert!((got - want).abs() / want < 0.03, "{got} vs {want}");
        assert!(ev.flags.contains(&"fat-level"));
    }
}

#[doc(hidden)]
pub fn debug_v_pieces(prof: &SectionProfile) -> Vec<(f64, f64, f64, f64)> {
    radial_pieces(prof)
        .iter()
        .map(|p| {
            let d = prof.dim as f64;
            let vf = |r: f64| match p.form {
                VForm::Zero => 0.0,
                VForm::Const { c } => c,
                VForm::Power { c, e } => c * r.powf(e),
                VForm::AffinePowD { alpha, beta } => alpha + beta * r.powf(d),
                VForm::AffineR { alpha, c1 } => alpha + c1 * r,
            };
            (p.r_lo, p.r_hi, vf(p.r_lo), if p.r_hi.is_finite() { vf(p.r_hi) } else { f64::NAN })
        })
        .collect()
}
