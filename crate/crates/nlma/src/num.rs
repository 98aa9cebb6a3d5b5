//! Numeric helpers: special functions, quadrature rules, fits.

use crate::la::Point;

/// Volume of the unit ball in dimension d.
pub fn ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => unreachable!("dim must be 1..=3"),
    }
}

/// Surface measure of the unit sphere S^{d-1}.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * ball_volume(d)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn beta(a: f64, b: f64) -> f64 {
    libm::exp(libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b))
}

/// Normalization constant of the fractional Laplacian of order s in
/// dimension d, i.e. the c with (−Δ)^{s/2} f = c · P.V.∫ (f(x)−f(x+y))|y|^{−d−s} dy
/// matching the Fourier multiplier |ξ|^s. Uses the reflection formula for
/// Γ(−s/2); behaves like (2−s) near s = 2.
pub fn frac_lap_constant(d: usize, s: f64) -> f64 {
    let df = d as f64;
    // |Γ(−s/2)| = π / (sin(πs/2) Γ(1+s/2)) for s ∈ (0,2)
    let abs_gamma_neg = std::f64::consts::PI / ((std::f64::consts::PI * s / 2.0).sin() * gamma(1.0 + s / 2.0));
    libm::pow(4.0, s / 2.0) * gamma((df + s) / 2.0) / (libm::pow(std::f64::consts::PI, df / 2.0) * abs_gamma_neg)
}

/// Closed-form value of the operator on the isotropic smooth cone
/// u(y) = √(1+|y|²) − 1 at the origin: (d/s)|B₁| 2^{1−s} B(1−s/2, s−1).
pub fn smooth_cone_value(d: usize, s: f64) -> f64 {
    (d as f64 / s) * ball_volume(d) * libm::pow(2.0, 1.0 - s) * beta(1.0 - s / 2.0, s - 1.0)
}

/// Symmetric angular quadrature rule on S^{d-1}: (directions, weights),
/// weights summing to the sphere area. The point sets are invariant under
/// the grid's dihedral symmetries.
pub fn angular_rule(d: usize, n_hint: usize) -> (Vec<Point>, Vec<f64>) {
    match d {
        1 => (vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], vec![1.0, 1.0]),
        2 => {
            // multiple of 8 keeps the dihedral symmetry of the square grid
            let n = n_hint.max(8).div_ceil(8) * 8;
            let w = 2.0 * std::f64::consts::PI / n as f64;
            let (mut dirs, mut wts) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for k in 0..n {
                let th = 2.0 * std::f64::consts::PI * (k as f64) / n as f64;
                dirs.push([th.cos(), th.sin(), 0.0]);
                wts.push(w);
            }
            (dirs, wts)
        }
        3 => {
            // product rule: Gauss-Legendre in cos(polar) x uniform azimuthal
            let n_polar = (n_hint.max(16) / 4).max(4);
            let n_az = 4 * n_polar.div_ceil(2) * 2;
            let (gx, gw) = gauss_legendre(n_polar);
            let mut dirs = Vec::new();
            let mut wts = Vec::new();
            let waz = 2.0 * std::f64::consts::PI / n_az as f64;
            for (c, wp) in gx.iter().zip(&gw) {
                let sn = (1.0 - c * c).max(0.0).sqrt();
                for k in 0..n_az {
                    let ph = 2.0 * std::f64::consts::PI * (k as f64) / n_az as f64;
                    dirs.push([sn * ph.cos(), sn * ph.sin(), *c]);
                    wts.push(wp * waz);
                }
            }
            (dirs, wts)
        }
        _ => unreachable!(),
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on
/// Legendre polynomials.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_beta_values() {
        assert_relative_eq!(gamma(0.5), std::f64::consts::PI.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(gamma(4.0), 6.0, max_relative = 1e-12);
        assert_relative_eq!(beta(0.25, 0.5), 5.24411510858424, max_relative = 1e-10);
    }

    #[test]
    fn cone_anchor_closed_forms() {
        // frozen from an independent multiprecision quadrature of
        // d|B1| ∫ v(r) r^{-1-s} dr with v(r) = sqrt(1+r^2)-1
        assert_relative_eq!(smooth_cone_value(1, 1.3), 6.8734474731855, max_relative = 1e-10);
        assert_relative_eq!(smooth_cone_value(1, 1.5), 4.9441991394703, max_relative = 1e-10);
        assert_relative_eq!(smooth_cone_value(1, 1.8), 6.6143323423354, max_relative = 1e-10);
        assert_relative_eq!(smooth_cone_value(2, 1.3), 21.593572086595, max_relative = 1e-10);
        assert_relative_eq!(smooth_cone_value(2, 1.5), 15.532659694445, max_relative = 1e-10);
        assert_relative_eq!(smooth_cone_value(2, 1.8), 20.779537895082, max_relative = 1e-10);
    }

    #[test]
    fn frac_lap_constant_values() {
        assert_relative_eq!(frac_lap_constant(1, 1.5), 0.2992067103, max_relative = 1e-8);
        assert_relative_eq!(frac_lap_constant(2, 1.5), 0.1711671297, max_relative = 1e-8);
        assert_relative_eq!(frac_lap_constant(2, 1.99), 0.006295392956, max_relative = 1e-7);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(6)).sum();
        assert_relative_eq!(int, 2.0 / 7.0, max_relative = 1e-12);
    }

    #[test]
    fn angular_rules_integrate_quadratics() {
        for d in 1..=3usize {
            let (dirs, wts) = angular_rule(d, 32);
            let total: f64 = wts.iter().sum();
            assert_relative_eq!(total, sphere_area(d), max_relative = 1e-9);
            // ∫ θ_1^2 dσ = |S^{d-1}|/d
            let m2: f64 = dirs.iter().zip(&wts).map(|(t, w)| w * t[0] * t[0]).sum();
            assert_relative_eq!(m2, sphere_area(d) / d as f64, max_relative = 1e-9);
        }
    }
}
