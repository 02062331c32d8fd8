//! Volumes of balls, caps, two-ball unions and ball ∩ box intersections.
//!
//! Ball ∩ box volumes are computed by slicing along the last axis: each
//! slice is a lower-dimensional ball ∩ box problem, down to the exact
//! interval overlap in one dimension. The slice coordinate is
//! parametrized by angle (`x = c + r sin θ`) so the slice radius
//! `r cos θ` is smooth, and the θ-range is split wherever the slice ball
//! starts touching a new face, edge or corner of the box so every panel
//! is smooth in its interior.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::quadrature::{self, Tolerance};
use crate::special::beta_inc;

/// Volume of the unit ball in `d` dimensions, `π^{d/2} / Γ(1 + d/2)`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    Ok(kappa(d))
}

/// κ_d by the recurrence κ_d = 2π/d · κ_{d-2}; κ_0 = 1.
pub(crate) fn kappa(d: usize) -> f64 {
    let mut v = if d.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut m = if d.is_multiple_of(2) { 2 } else { 3 };
    while m <= d {
        v *= 2.0 * PI / m as f64;
        m += 2;
    }
    v
}

/// Volume of the cap `{y ∈ B(0,1) : y·u >= a}` of the unit ball in `d`
/// dimensions, for a signed offset `-1 <= a <= 1`.
pub fn spherical_cap_volume(d: usize, a: f64) -> Result<f64> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(-1.0..=1.0).contains(&a) {
        return Err(invalid(format!("cap offset {a} outside [-1, 1]")));
    }
    Ok(cap(d, a))
}

fn cap(d: usize, a: f64) -> f64 {
    let k = kappa(d);
    if a < 0.0 {
        return k - cap(d, -a);
    }
    0.5 * k * beta_inc(0.5 * (d as f64 + 1.0), 0.5, 1.0 - a * a)
}

/// Two congruent balls `B(0, r)` and `B(x, r)` with `‖x‖ = center_distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallUnionQuery {
    dim: usize,
    radius: f64,
    center_distance: f64,
}

impl BallUnionQuery {
    pub fn new(dim: usize, radius: f64, center_distance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        if !(center_distance >= 0.0) || !center_distance.is_finite() {
            return Err(invalid(format!(
                "center distance must be nonnegative, got {center_distance}"
            )));
        }
        Ok(Self {
            dim,
            radius,
            center_distance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center_distance(&self) -> f64 {
        self.center_distance
    }
}

/// Exact `λ(B(0,r) ∪ B(x,r))`: twice the ball minus the lens, the lens being
/// two caps at offset `‖x‖ / 2r`. One dimension uses interval arithmetic.
pub fn union_two_balls_exact(q: &BallUnionQuery) -> f64 {
    let (d, r, t) = (q.dim, q.radius, q.center_distance);
    if t >= 2.0 * r {
        return 2.0 * kappa(d) * r.powi(d as i32);
    }
    if d == 1 {
        return 2.0 * r + t;
    }
    let rd = r.powi(d as i32);
    2.0 * kappa(d) * rd - 2.0 * rd * cap(d, t / (2.0 * r))
}

/// The cone-plus-sector expression for the union of two unit balls at
/// distance `t`:
///
/// `2 (κ_d (1 - arccos(t/2)/π) + t κ_{d-1} / (2d) · (1 - t²/4)^{(d-1)/2})`.
///
/// Coincides with [`union_two_balls_exact`] in the plane only; for `d >= 3`
/// it undershoots (e.g. 73π/36 instead of 9π/4 at `d = 3, t = 1`).
pub fn union_two_balls_cone_sector(d: usize, t: f64) -> Result<f64> {
    if d < 2 {
        return Err(invalid("the cone/sector formula needs dimension >= 2"));
    }
    if !(0.0..=2.0).contains(&t) {
        return Err(invalid(format!("distance {t} outside [0, 2]")));
    }
    let half = 0.5 * t;
    let sector = kappa(d) * (1.0 - half.acos() / PI);
    let cone = t * kappa(d - 1) / (2.0 * d as f64) * (1.0 - half * half).sqrt().powi(d as i32 - 1);
    Ok(2.0 * (sector + cone))
}

/// A ball to be intersected with the unit cube `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxVolumeQuery {
    center: Vec<f64>,
    radius: f64,
}

impl BoxVolumeQuery {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid("dimension must be at least 1"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("center coordinates must be finite"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// `λ(B(center, r) ∩ [0,1]^d)` to relative accuracy 1e-9 (absolute floor 1e-12).
pub fn ball_box_volume(q: &BoxVolumeQuery) -> f64 {
    let d = q.dim();
    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    ball_aabb_volume(&q.center, q.radius, &lo, &hi, Tolerance::DEFAULT)
}

/// `λ(B(center, r) ∩ Π [lo_m, hi_m])` for an arbitrary axis-aligned box.
pub fn ball_aabb_volume(center: &[f64], r: f64, lo: &[f64], hi: &[f64], tol: Tolerance) -> f64 {
    debug_assert!(center.len() == lo.len() && lo.len() == hi.len());
    if !(r > 0.0) {
        return 0.0;
    }
    match classify(center, r, lo, hi) {
        Overlap::Disjoint => 0.0,
        Overlap::BallInside => kappa(center.len()) * r.powi(center.len() as i32),
        Overlap::BoxInside => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
        Overlap::Partial => sliced_volume(center, r, lo, hi, tol),
    }
}

/// How a ball sits relative to a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Overlap {
    Disjoint,
    BallInside,
    BoxInside,
    Partial,
}

pub(crate) fn classify(center: &[f64], r: f64, lo: &[f64], hi: &[f64]) -> Overlap {
    let r2 = r * r;
    let mut near = 0.0;
    let mut far = 0.0;
    let mut inside = true;
    for ((&c, &l), &h) in center.iter().zip(lo).zip(hi) {
        let gap = if c < l {
            l - c
        } else if c > h {
            c - h
        } else {
            0.0
        };
        near += gap * gap;
        let reach = (c - l).abs().max((h - c).abs());
        far += reach * reach;
        if c - r < l || c + r > h {
            inside = false;
        }
    }
    if near >= r2 {
        Overlap::Disjoint
    } else if inside {
        Overlap::BallInside
    } else if far <= r2 {
        Overlap::BoxInside
    } else {
        Overlap::Partial
    }
}

fn sliced_volume(center: &[f64], r: f64, lo: &[f64], hi: &[f64], tol: Tolerance) -> f64 {
    let d = center.len();
    if d == 1 {
        return ((center[0] + r).min(hi[0]) - (center[0] - r).max(lo[0])).max(0.0);
    }
    let c = center[d - 1];
    let (sub_c, sub_lo, sub_hi) = (&center[..d - 1], &lo[..d - 1], &hi[..d - 1]);
    let theta_lo = ((lo[d - 1] - c) / r).clamp(-1.0, 1.0).asin();
    let theta_hi = ((hi[d - 1] - c) / r).clamp(-1.0, 1.0).asin();

    let mut cuts = vec![theta_lo, theta_hi];
    for s in critical_radii(sub_c, sub_lo, sub_hi) {
        if s < r {
            let th = (s / r).acos();
            for cand in [th, -th] {
                if cand > theta_lo && cand < theta_hi {
                    cuts.push(cand);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // First pass: one panel per piece for a scale estimate.
    let coarse_tol = Tolerance::new(tol.rel, 0.0);
    let mut coarse = |th: f64| {
        let rho = r * th.cos();
        rho * ball_aabb_volume(sub_c, rho, sub_lo, sub_hi, coarse_tol)
    };
    let estimate: f64 = cuts
        .windows(2)
        .map(|w| quadrature::gauss_legendre(&mut coarse, w[0], w[1]))
        .sum();
    let allowed = tol.allowed(estimate);

    let inner = Tolerance::new(0.1 * tol.rel, 0.1 * allowed / (PI * r));
    let mut slice = |th: f64| {
        let rho = r * th.cos();
        rho * ball_aabb_volume(sub_c, rho, sub_lo, sub_hi, inner)
    };
    let span = theta_hi - theta_lo;
    cuts.windows(2)
        .map(|w| {
            let share = allowed * (w[1] - w[0]) / span;
            quadrature::adaptive_endpoint_smoothed(&mut slice, w[0], w[1], share)
        })
        .sum()
}

/// Distances from `center` to every face, edge and corner flat of the box:
/// `sqrt(Σ_{m∈A} δ_m²)` over nonempty axis subsets `A`, with `δ_m` the gap
/// to either the lower or upper face along axis `m`.
fn critical_radii(center: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for ((&c, &l), &h) in center.iter().zip(lo).zip(hi) {
        let (a, b) = ((c - l) * (c - l), (h - c) * (h - c));
        let mut next = Vec::with_capacity(acc.len() * 3);
        for &s in &acc {
            next.push(s);
            next.push(s + a);
            next.push(s + b);
        }
        acc = next;
    }
    acc.into_iter()
        .skip(1)
        .map(f64::sqrt)
        .filter(|s| *s > 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn unit_ball_volumes() {
        assert_eq!(unit_ball_volume(1).unwrap(), 2.0);
        assert!(close(unit_ball_volume(2).unwrap(), PI, 1e-15));
        assert!(close(unit_ball_volume(3).unwrap(), 4.0 * PI / 3.0, 1e-15));
        assert!(close(unit_ball_volume(4).unwrap(), PI * PI / 2.0, 1e-15));
        assert!(unit_ball_volume(0).is_err());
    }

    #[test]
    fn cap_examples() {
        for d in 1..=6 {
            assert!(close(
                spherical_cap_volume(d, 0.0).unwrap(),
                kappa(d) / 2.0,
                1e-13
            ));
            assert_eq!(spherical_cap_volume(d, 1.0).unwrap(), 0.0);
            assert!(close(
                spherical_cap_volume(d, -1.0).unwrap(),
                kappa(d),
                1e-15
            ));
        }
        // 3-D closed form πh²(3-h)/3, h = 1 - a = 0.5
        assert!(close(
            spherical_cap_volume(3, 0.5).unwrap(),
            5.0 * PI / 24.0,
            1e-13
        ));
        assert!(spherical_cap_volume(3, 1.5).is_err());
        assert!(spherical_cap_volume(3, -1.01).is_err());
    }

    #[test]
    fn cap_halves_sum_to_ball() {
        for d in 1..=8 {
            for i in 0..=50 {
                let a = i as f64 / 50.0;
                let s = cap(d, a) + cap(d, -a);
                assert!(close(s, kappa(d), 1e-12), "d={d} a={a}");
            }
        }
    }

    #[test]
    fn union_examples() {
        for d in 1..=5 {
            let k = kappa(d);
            let q0 = BallUnionQuery::new(d, 1.0, 0.0).unwrap();
            assert!(close(union_two_balls_exact(&q0), k, 1e-12));
            let q2 = BallUnionQuery::new(d, 1.0, 2.0).unwrap();
            assert!(close(union_two_balls_exact(&q2), 2.0 * k, 1e-15));
        }
        // lens closed form π(4r+t)(2r-t)²/12 at r=1, t=1 → 5π/12
        let q = BallUnionQuery::new(3, 1.0, 1.0).unwrap();
        let lens = PI * 5.0 * 1.0 / 12.0;
        assert!((union_two_balls_exact(&q) - (8.0 * PI / 3.0 - lens)).abs() < 1e-12);
        assert!(close(union_two_balls_exact(&q), 9.0 * PI / 4.0, 1e-13));
        // one dimension: [-1,1] ∪ [0,2]
        let q1 = BallUnionQuery::new(1, 1.0, 1.0).unwrap();
        assert_eq!(union_two_balls_exact(&q1), 3.0);
        assert!(BallUnionQuery::new(2, 0.0, 1.0).is_err());
        assert!(BallUnionQuery::new(2, 1.0, -0.1).is_err());
    }

    #[test]
    fn cone_sector_examples() {
        assert!(close(
            union_two_balls_cone_sector(2, 0.0).unwrap(),
            PI,
            1e-15
        ));
        assert!(close(
            union_two_balls_cone_sector(2, 2.0).unwrap(),
            2.0 * PI,
            1e-15
        ));
        let want = 4.0 * PI / 3.0 + 3f64.sqrt() / 2.0;
        assert!(close(
            union_two_balls_cone_sector(2, 1.0).unwrap(),
            want,
            1e-14
        ));
        assert!(close(
            union_two_balls_cone_sector(3, 1.0).unwrap(),
            73.0 * PI / 36.0,
            1e-14
        ));
        assert!(union_two_balls_cone_sector(1, 1.0).is_err());
        assert!(union_two_balls_cone_sector(2, 2.5).is_err());
    }

    #[test]
    fn ball_box_fast_paths_and_symmetry() {
        for d in 1..=4 {
            let k = kappa(d);
            let q = BoxVolumeQuery::new(vec![0.5; d], 0.25).unwrap();
            assert_eq!(ball_box_volume(&q), k * 0.25f64.powi(d as i32));
            let corner = BoxVolumeQuery::new(vec![0.0; d], 0.5).unwrap();
            let want = k * 0.5f64.powi(d as i32) / 2f64.powi(d as i32);
            assert!(close(ball_box_volume(&corner), want, 1e-9), "d={d}");
            let far = BoxVolumeQuery::new(vec![3.0; d], 0.5).unwrap();
            assert_eq!(ball_box_volume(&far), 0.0);
        }
        let edge = BoxVolumeQuery::new(vec![0.0, 0.5], 0.3).unwrap();
        assert!(close(ball_box_volume(&edge), PI * 0.09 / 2.0, 1e-9));
    }

    #[test]
    fn covering_ball_gives_box_volume() {
        let q = BoxVolumeQuery::new(vec![0.2, 0.9, 0.4], 3f64.sqrt()).unwrap();
        assert_eq!(ball_box_volume(&q), 1.0);
    }

    #[test]
    fn disk_box_against_closed_form_segment() {
        // disk of radius 0.3 centered 0.1 inside the left edge: area = disk - segment beyond x<0
        let r: f64 = 0.3;
        let h: f64 = 0.1; // distance from center to the cut line
        let segment = r * r * (h / r).acos() - h * (r * r - h * h).sqrt();
        let q = BoxVolumeQuery::new(vec![0.1, 0.5], r).unwrap();
        assert!(close(ball_box_volume(&q), PI * r * r - segment, 1e-10));
    }
}
