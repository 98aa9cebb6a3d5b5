//! Asymptotic cone models Φ: positively homogeneous degree-one convex
//! profiles with their unit-section volumes V(b) = |{y : Φ(y) − b·y < 1}|.
//!
//! V(b) is what extends sublevel-set measures beyond the computational box:
//! by homogeneity |{Φ(y) − b·y < t}| = V(b) t^d.

use crate::la::{dot, Mat, Point};
use crate::num::{angular_rule, ball_volume};

#[derive(Clone, Debug)]
pub enum ConeShape {
    /// Φ(y) = √(yᵀMy)
    Elliptic { m: Mat, inv_m: Mat, det_m: f64 },
    /// Φ(y) = max_k aₖ·y
    Polyhedral { slopes: Vec<Point> },
}

#[derive(Clone, Debug)]
pub struct ConeModel {
    pub shape: ConeShape,
    /// Asymptotic offset: u(y) − Φ(y) → offset along rays (when exact).
    pub offset: f64,
    /// False when the offset is direction-dependent (e.g. tilted planes);
    /// far-regime shifts are then calibrated from grid data instead.
    pub offset_exact: bool,
}

impl ConeModel {
    pub fn dim(&self) -> usize {
        match &self.shape {
            ConeShape::Elliptic { m, .. } => m.dim,
            ConeShape::Polyhedral { slopes } => {
                if slopes.iter().any(|s| s[2] != 0.0) {
                    3
                } else if slopes.iter().any(|s| s[1] != 0.0) {
                    2
                } else {
                    1
                }
            }
        }
    }

    pub fn phi(&self, y: &Point) -> f64 {
        match &self.shape {
            ConeShape::Elliptic { m, .. } => m.quad_form(y).sqrt(),
            ConeShape::Polyhedral { slopes } => {
                slopes.iter().map(|a| dot(a, y)).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    /// Gradient of Φ away from the apex (subgradient choice on facets).
    pub fn grad_phi(&self, y: &Point) -> Point {
        match &self.shape {
            ConeShape::Elliptic { m, .. } => {
                let q = m.quad_form(y).sqrt();
                if q == 0.0 {
                    return [0.0; 3];
                }
                let my = m.apply(y);
                [my[0] / q, my[1] / q, my[2] / q]
            }
            ConeShape::Polyhedral { slopes } => {
                *slopes
                    .iter()
                    .max_by(|a, b| dot(a, y).total_cmp(&dot(b, y)))
                    .unwrap()
            }
        }
    }

    /// Worst-case margin min_{|θ|=1} (Φ(θ) − b·θ). The slope b is interior
    /// (all sections of Φ − b·y bounded) iff the margin is positive. For the
    /// elliptic shape the sign equals the sign of 1 − √(bᵀM⁻¹b).
    pub fn interior_margin(&self, b: &Point) -> f64 {
        match &self.shape {
            ConeShape::Elliptic { inv_m, .. } => 1.0 - inv_m.quad_form(b).max(0.0).sqrt(),
            ConeShape::Polyhedral { .. } => {
                let d = self.dim();
                let (dirs, _) = angular_rule(d, 512);
                dirs.iter()
                    .map(|t| self.phi(t) - dot(b, t))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Unit-section volume V(b) = |{y : Φ(y) − b·y < 1}|, or None when the
    /// section is unbounded. Elliptic cones admit the closed form
    /// |B₁| (1 − bᵀM⁻¹b)^{−(d+1)/2} / √det M; polyhedral cones use the radial
    /// formula V = (1/d) ∫_{S^{d−1}} (Φ(θ) − b·θ)^{−d} dσ.
    pub fn unit_section_volume(&self, b: &Point) -> Option<f64> {
        let d = self.dim();
        match &self.shape {
            ConeShape::Elliptic { inv_m, det_m, .. } => {
                let beta2 = inv_m.quad_form(b);
                if beta2 >= 1.0 {
                    return None;
                }
                Some(ball_volume(d) * (1.0 - beta2).powf(-((d as f64 + 1.0) / 2.0)) / det_m.sqrt())
            }
            ConeShape::Polyhedral { .. } => {
                if self.interior_margin(b) <= 0.0 {
                    return None;
                }
                let (dirs, wts) = angular_rule(d, 1024);
                let mut acc = 0.0;
                for (t, w) in dirs.iter().zip(&wts) {
                    let g = self.phi(t) - dot(b, t);
                    acc += w * g.powi(-(d as i32));
                }
                Some(acc / d as f64)
            }
        }
    }

    /// Positive homogeneity defect max over test rays of
    /// |Φ(λy) − λΦ(y)| / (λ Φ(y)); zero up to roundoff by construction.
    pub fn homogeneity_defect(&self) -> f64 {
        let d = self.dim();
        let (dirs, _) = angular_rule(d, 64);
        let mut worst = 0.0f64;
        for t in &dirs {
            let base = self.phi(t);
            if base <= 0.0 {
                continue;
            }
            for lam in [0.5, 2.0, 7.5] {
                let y = [t[0] * lam, t[1] * lam, t[2] * lam];
                worst = worst.max((self.phi(&y) - lam * base).abs() / (lam * base));
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn elliptic(dim: usize, rows: &[f64]) -> ConeModel {
        let m = Mat::from_rows(dim, rows);
        ConeModel {
            shape: ConeShape::Elliptic { m, inv_m: m.inverse().unwrap(), det_m: m.det() },
            offset: 0.0,
            offset_exact: true,
        }
    }

    #[test]
    fn elliptic_volume_closed_form() {
        // Φ = |y| in d=1: V(0) = |{|y| < 1}| = 2
        let c = elliptic(1, &[1.0]);
        assert_relative_eq!(c.unit_section_volume(&[0.0; 3]).unwrap(), 2.0, max_relative = 1e-14);
        // b = 0.5: {|y| - y/2 < 1} = (-2/3, 2): length 8/3 = 2/(1-1/4)^1... = |B1|(1-b^2)^{-1}
        let v = c.unit_section_volume(&[0.5, 0.0, 0.0]).unwrap();
        assert_relative_eq!(v, 8.0 / 3.0, max_relative = 1e-14);
        // boundary slope: unbounded
        assert!(c.unit_section_volume(&[1.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn polyhedral_volume_matches_elliptic_in_1d() {
        let poly = ConeModel {
            shape: ConeShape::Polyhedral { slopes: vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]] },
            offset: 0.0,
            offset_exact: true,
        };
        let b = [0.3, 0.0, 0.0];
        let expect = 1.0 / (1.0 - 0.3) + 1.0 / (1.0 + 0.3);
        assert_relative_eq!(poly.unit_section_volume(&b).unwrap(), expect, max_relative = 1e-12);
        assert!(poly.unit_section_volume(&[1.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn elliptic_volume_2d_isotropic() {
        let c = elliptic(2, &[1.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(
            c.unit_section_volume(&[0.0; 3]).unwrap(),
            std::f64::consts::PI,
            max_relative = 1e-14
        );
        // anisotropic: V = |B1|/sqrt(det M)
        let c2 = elliptic(2, &[4.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(
            c2.unit_section_volume(&[0.0; 3]).unwrap(),
            std::f64::consts::PI / 2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn homogeneity_holds() {
        assert!(elliptic(2, &[2.0, 0.3, 0.3, 1.0]).homogeneity_defect() < 1e-10);
    }

    #[test]
    fn interior_margin_signs() {
        let c = elliptic(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(c.interior_margin(&[0.5, 0.0, 0.0]) > 0.0);
        assert!(c.interior_margin(&[1.5, 0.0, 0.0]) < 0.0);
    }

    #[test]
    fn monotone_under_slope_shrinking() {
        // V(b) decreases as a symmetric cone's slope shrinks toward 0
        let c = elliptic(2, &[1.0, 0.0, 0.0, 1.0]);
        let v1 = c.unit_section_volume(&[0.8, 0.0, 0.0]).unwrap();
        let v2 = c.unit_section_volume(&[0.4, 0.0, 0.0]).unwrap();
        let v3 = c.unit_section_volume(&[0.0, 0.0, 0.0]).unwrap();
        assert!(v1 > v2 && v2 > v3);
    }
}
