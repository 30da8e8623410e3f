//! Single-loop electrical parameters, mutual inductance between circular
//! filaments and planar grid layouts.

use std::cmp::Ordering;
use std::f64::consts::PI;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vec3 = Vector3<f64>;

/// Vacuum permeability (H/m).
pub const MU0: f64 = 4.0e-7 * PI;

/// Resistivity of copper (ohm m).
pub const RHO_COPPER: f64 = 1.72e-8;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.38e-23;

/// Geometry and material of one circular loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    /// Loop radius (m).
    pub radius: f64,
    /// Side of the square wire cross-section (m).
    pub wire_width: f64,
    pub turns: u32,
    /// Wire resistivity (ohm m).
    pub resistivity: f64,
    /// Permeability of the surrounding medium (H/m).
    pub permeability: f64,
    /// Resonance frequency f0 (Hz).
    pub resonance_freq: f64,
}

impl CoilSpec {
    /// 1 cm copper loop with 2 mm square wire in vacuum.
    pub fn reference(resonance_freq: f64) -> Self {
        Self {
            radius: 0.01,
            wire_width: 2.0e-3,
            turns: 1,
            resistivity: RHO_COPPER,
            permeability: MU0,
            resonance_freq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(invalid("radius", format!("{} must be > 0", self.radius)));
        }
        if !(self.wire_width > 0.0) || self.wire_width >= 2.0 * self.radius {
            return Err(invalid(
                "wire_width",
                format!("{} must lie in (0, 2r)", self.wire_width),
            ));
        }
        if self.turns != 1 {
            return Err(invalid("turns", "only single-turn loops are supported"));
        }
        if !(self.resistivity >= 0.0) {
            return Err(invalid("resistivity", "must be >= 0"));
        }
        if !(self.permeability > 0.0) {
            return Err(invalid("permeability", "must be > 0"));
        }
        Ok(())
    }

    /// Wire circumference l_c = 2 pi r.
    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius
    }
}

/// Series RLC parameters shared by every coil of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricalParams {
    pub resistance: f64,
    pub inductance: f64,
    pub capacitance: f64,
    pub omega0: f64,
}

impl ElectricalParams {
    /// Builds the parameter set from R and L, choosing C_s so that the coil
    /// resonates at `f0`.
    pub fn from_rl(resistance: f64, inductance: f64, f0: f64) -> Result<Self> {
        if !(resistance > 0.0) {
            return Err(invalid("resistance", "must be > 0"));
        }
        let capacitance = compute_capacitance(inductance, f0)?;
        Ok(Self {
            resistance,
            inductance,
            capacitance,
            omega0: 2.0 * PI * f0,
        })
    }

    /// Tabulated unit-cell values: R = 65 mOhm, L = 84 nH.
    pub fn table_defaults(f0: f64) -> Result<Self> {
        Self::from_rl(65e-3, 84e-9, f0)
    }

    /// Parameters evaluated from the closed-form skin-effect and loop
    /// inductance expressions.
    pub fn from_geometry(spec: &CoilSpec) -> Result<Self> {
        let r = compute_resistance(spec)?;
        let l = compute_inductance(spec)?;
        Self::from_rl(r, l, spec.resonance_freq)
    }

    pub fn f0(&self) -> f64 {
        self.omega0 / (2.0 * PI)
    }

    /// Thermal noise density 4 k_B T R.
    pub fn thermal_noise(&self, temperature: f64) -> f64 {
        4.0 * BOLTZMANN * temperature * self.resistance
    }
}

/// Skin depth sqrt(rho / (pi mu f0)).
pub fn skin_depth(spec: &CoilSpec) -> Result<f64> {
    if !(spec.resonance_freq > 0.0) {
        return Err(invalid("resonance_freq", "must be > 0"));
    }
    Ok((spec.resistivity / (PI * spec.permeability * spec.resonance_freq)).sqrt())
}

/// AC resistance of a square cross-section wire loop, pi r rho / (2 w_c delta).
pub fn compute_resistance(spec: &CoilSpec) -> Result<f64> {
    spec.validate()?;
    let delta = skin_depth(spec)?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(PI * spec.radius * spec.resistivity / (2.0 * spec.wire_width * delta))
}

/// Single-turn loop self-inductance
/// (mu l_c / 2pi) (ln(l_c / w_c) + 0.5 + 0.447 w_c / l_c).
pub fn compute_inductance(spec: &CoilSpec) -> Result<f64> {
    let lc = spec.circumference();
    if !(spec.wire_width > 0.0) || spec.wire_width >= lc {
        return Err(invalid("wire_width", "must lie in (0, l_c)"));
    }
    spec.validate()?;
    let w = spec.wire_width;
    Ok(spec.permeability * lc / (2.0 * PI) * ((lc / w).ln() + 0.5 + 0.447 * w / lc))
}

/// Series capacitance C_s = 1 / (omega0^2 L).
pub fn compute_capacitance(inductance: f64, f0: f64) -> Result<f64> {
    if !(inductance > 0.0) {
        return Err(invalid("inductance", "must be > 0"));
    }
    if !(f0 > 0.0) {
        return Err(invalid("f0", "must be > 0"));
    }
    let w0 = 2.0 * PI * f0;
    Ok(1.0 / (w0 * w0 * inductance))
}

/// Placement of one loop: center and unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilPose {
    pub center: Vec3,
    pub normal: Vec3,
}

impl CoilPose {
    /// Normalizes `normal`; fails on a zero or non-finite normal.
    pub fn new(center: Vec3, normal: Vec3) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("normal", "must be a finite non-zero vector"));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(invalid("center", "must be finite"));
        }
        Ok(Self {
            center,
            normal: normal / n,
        })
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            center: Vec3::new(x, y, z),
            normal: Vec3::z(),
        }
    }

    /// Orthonormal in-plane axes (u, v) with u x v = normal. For a +z normal
    /// this is (x, y).
    pub fn plane_axes(&self) -> (Vec3, Vec3) {
        let n = self.normal;
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = (helper - n * helper.dot(&n)).normalize();
        let v = n.cross(&u);
        (u, v)
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.center
            .iter()
            .chain(self.normal.iter())
            .zip(other.center.iter().chain(other.normal.iter()))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }
}

/// How mutual inductance is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutualModel {
    /// Trapezoidal nodes per loop.
    pub nodes: usize,
    /// Use the dipole closed form once D / r reaches this ratio.
    pub dipole_ratio: Option<f64>,
}

impl Default for MutualModel {
    fn default() -> Self {
        Self {
            nodes: 256,
            dipole_ratio: None,
        }
    }
}

impl MutualModel {
    pub fn with_nodes(nodes: usize) -> Self {
        Self {
            nodes,
            dipole_ratio: None,
        }
    }
}

/// Mutual inductance of two equal filamentary loops with the default model.
pub fn mutual_inductance(a: &CoilPose, b: &CoilPose, spec: &CoilSpec) -> Result<f64> {
    mutual_inductance_with(a, b, spec, &MutualModel::default())
}

/// Neumann double line integral over both loops,
/// M = mu / 4pi oint oint dl_a . dl_b / |r_a - r_b|,
/// evaluated with uniform trapezoidal nodes on each loop.
///
/// The kernel is expanded around the center separation so that the
/// constant 1/D part, which integrates to zero, never enters the sum. The
/// pose pair is put in a canonical order first, so the result is bitwise
/// symmetric in its arguments.
pub fn mutual_inductance_with(
    a: &CoilPose,
    b: &CoilPose,
    spec: &CoilSpec,
    model: &MutualModel,
) -> Result<f64> {
    if model.nodes < 4 {
        return Err(invalid("nodes", "need at least 4 quadrature nodes"));
    }
    let (a, b) = match a.total_cmp(b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let d = b.center - a.center;
    let dist = d.norm();
    if dist == 0.0 {
        return Err(Error::CoincidentCoils(a.center.x, a.center.y, a.center.z));
    }
    let r = spec.radius;
    if let Some(ratio) = model.dipole_ratio {
        if dist >= ratio * r {
            return Ok(dipole_mutual(a, b, spec));
        }
    }

    let n = model.nodes;
    let (ua, va) = a.plane_axes();
    let (ub, vb) = b.plane_axes();
    let step = 2.0 * PI / n as f64;
    let ring = |u: Vec3, v: Vec3| -> Vec<(Vec3, Vec3)> {
        (0..n)
            .map(|i| {
                let (s, c) = (i as f64 * step).sin_cos();
                (r * (u * c + v * s), v * c - u * s)
            })
            .collect()
    };
    let ring_a = ring(ua, va);
    let ring_b = ring(ub, vb);

    let d2 = dist * dist;
    let mut sum = 0.0;
    let mut closest = f64::INFINITY;
    for (p, tp) in &ring_a {
        let mut row = 0.0;
        for (q, tq) in &ring_b {
            let delta = q - p;
            let x = 2.0 * d.dot(&delta) + delta.norm_squared();
            let s2 = d2 + x;
            let s = s2.sqrt();
            closest = closest.min(s);
            // 1/s - 1/D without cancellation
            let g = -x / (dist * s * (dist + s));
            row += tp.dot(tq) * g;
        }
        sum += row;
    }
    if closest < spec.wire_width {
        warn!(
            "loops at {:?} and {:?} approach within {:.3e} m (< wire width); mutual inductance is near-singular",
            a.center, b.center, closest
        );
    }
    Ok(spec.permeability / (4.0 * PI) * r * r * step * step * sum)
}

/// Far-field magnetic dipole approximation of the mutual inductance.
pub fn dipole_mutual(a: &CoilPose, b: &CoilPose, spec: &CoilSpec) -> f64 {
    let d = b.center - a.center;
    let dist = d.norm();
    let dh = d / dist;
    let area = PI * spec.radius * spec.radius;
    let geom = 3.0 * a.normal.dot(&dh) * b.normal.dot(&dh) - a.normal.dot(&b.normal);
    spec.permeability / (4.0 * PI) * area * area * geom / dist.powi(3)
}

/// N x N planar grid of coils.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub side_count: usize,
    /// Row-major: index = row * N + col, row 0 on the +v side.
    pub poses: Vec<CoilPose>,
    pub pitch: f64,
}

impl GridLayout {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Side of the square covered by the loops (excluding wire thickness).
    pub fn extent(&self, spec: &CoilSpec) -> f64 {
        let n = self.side_count as f64;
        (n - 1.0) * self.pitch + 2.0 * spec.radius
    }
}

/// Lays out `n * n` coplanar coils with pitch 2r + `delta_c`, centered on
/// `origin` and sharing its normal.
pub fn build_grid(n: usize, spec: &CoilSpec, delta_c: f64, origin: &CoilPose) -> Result<GridLayout> {
    if n == 0 {
        return Err(invalid("side_count", "must be >= 1"));
    }
    if !(delta_c >= 0.0) {
        return Err(invalid("delta_c", "must be >= 0"));
    }
    let pitch = 2.0 * spec.radius + delta_c;
    let (u, v) = origin.plane_axes();
    let half = (n as f64 - 1.0) / 2.0;
    let mut poses = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let du = (col as f64 - half) * pitch;
            let dv = (half - row as f64) * pitch;
            poses.push(CoilPose {
                center: origin.center + u * du + v * dv,
                normal: origin.normal,
            });
        }
    }
    Ok(GridLayout {
        side_count: n,
        poses,
        pitch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> CoilSpec {
        CoilSpec::reference(1e6)
    }

    /// Independent transcription of the loop inductance closed form.
    fn inductance_reference(r: f64, w: f64, mu: f64) -> f64 {
        let perimeter = 2.0 * std::f64::consts::PI * r;
        let log_term = (perimeter / w).ln();
        let correction = 0.447 * (w / perimeter);
        (mu * perimeter / (2.0 * std::f64::consts::PI)) * (log_term + 0.5 + correction)
    }

    #[test]
    fn inductance_matches_reference_transcription() {
        let s = spec();
        let l = compute_inductance(&s).unwrap();
        let reference = inductance_reference(0.01, 2e-3, MU0);
        assert!(((l - reference) / reference).abs() < 1e-12);
        // the closed form sits near 50 nH, not the tabulated 84 nH
        assert!(l > 45e-9 && l < 55e-9, "{l}");
    }

    #[test]
    fn inductance_is_linear_in_permeability() {
        let s = spec();
        let mut s2 = s;
        s2.permeability *= 2.0;
        let l1 = compute_inductance(&s).unwrap();
        let l2 = compute_inductance(&s2).unwrap();
        assert!((l2 / l1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn resistance_scales_with_sqrt_frequency() {
        let s = spec();
        let mut s4 = s;
        s4.resonance_freq *= 4.0;
        let r1 = compute_resistance(&s).unwrap();
        let r4 = compute_resistance(&s4).unwrap();
        assert!((r4 / r1 - 2.0).abs() < 1e-12);
        // millohm scale at 1 MHz
        assert!(r1 > 1e-3 && r1 < 3e-3, "{r1}");
    }

    #[test]
    fn resistance_vanishes_without_resistivity() {
        let mut s = spec();
        s.resistivity = 0.0;
        assert_eq!(compute_resistance(&s).unwrap(), 0.0);
    }

    #[test]
    fn resistance_rejects_nonpositive_frequency() {
        let mut s = spec();
        s.resonance_freq = 0.0;
        assert!(compute_resistance(&s).is_err());
    }

    #[test]
    fn capacitance_values() {
        let c1 = compute_capacitance(84e-9, 1e6).unwrap();
        assert!((c1 / 300e-9 - 1.0).abs() < 0.01, "{c1}");
        let c10 = compute_capacitance(84e-9, 10e6).unwrap();
        assert!((c10 / 3e-9 - 1.0).abs() < 0.01, "{c10}");
        let w0 = 2.0 * PI * 1e6;
        let back = 1.0 / (84e-9 * c1).sqrt();
        assert!((back / w0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_invariants() {
        let p = ElectricalParams::table_defaults(1e6).unwrap();
        let w = 1.0 / (p.inductance * p.capacitance).sqrt();
        assert!((w / p.omega0 - 1.0).abs() < 1e-12);
        let nth = p.thermal_noise(300.0);
        assert!((nth / 1.08e-21 - 1.0).abs() < 0.01);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec();
        s.turns = 2;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.wire_width = 0.03;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.radius = -1.0;
        assert!(s.validate().is_err());
        assert!(compute_capacitance(0.0, 1e6).is_err());
    }

    #[test]
    fn coaxial_far_field_matches_dipole() {
        let s = spec();
        let a = CoilPose::at(0.0, 0.0, 0.0);
        let b = CoilPose::at(0.0, 0.0, 1.0);
        let m = mutual_inductance(&a, &b, &s).unwrap();
        let dip = MU0 * PI * 0.01f64.powi(4) / 2.0;
        assert!((dip - 1.974e-14).abs() < 1e-17);
        assert!(((m - dip) / dip).abs() < 1e-3, "{m} vs {dip}");
        let fine = mutual_inductance_with(&a, &b, &s, &MutualModel::with_nodes(512)).unwrap();
        assert!(((fine - m) / m).abs() < 1e-9);
    }

    #[test]
    fn swapped_arguments_are_bitwise_equal() {
        let s = spec();
        let a = CoilPose::new(Vec3::new(0.01, 0.02, -0.3), Vec3::new(0.1, 0.2, 1.0)).unwrap();
        let b = CoilPose::new(Vec3::new(-0.05, 0.0, 0.2), Vec3::new(1.0, 0.0, 0.3)).unwrap();
        let m1 = mutual_inductance(&a, &b, &s).unwrap();
        let m2 = mutual_inductance(&b, &a, &s).unwrap();
        assert_eq!(m1.to_bits(), m2.to_bits());
    }

    #[test]
    fn perpendicular_on_axis_loops_do_not_couple() {
        let s = spec();
        let a = CoilPose::at(0.0, 0.0, 0.0);
        let b = CoilPose::new(Vec3::new(0.0, 0.0, 0.2), Vec3::x()).unwrap();
        let m = mutual_inductance(&a, &b, &s).unwrap();
        let scale = mutual_inductance(&a, &CoilPose::at(0.0, 0.0, 0.2), &s).unwrap();
        assert!(m.abs() < 1e-12 * scale.abs(), "{m}");
    }

    #[test]
    fn coincident_centers_fail() {
        let s = spec();
        let a = CoilPose::at(0.0, 0.0, 0.0);
        assert!(matches!(
            mutual_inductance(&a, &a, &s),
            Err(Error::CoincidentCoils(..))
        ));
    }

    #[test]
    fn dipole_fast_path_is_used_far_away() {
        let s = spec();
        let a = CoilPose::at(0.0, 0.0, 0.0);
        let b = CoilPose::at(0.0, 0.0, 2.0);
        let model = MutualModel {
            nodes: 256,
            dipole_ratio: Some(10.0),
        };
        let m = mutual_inductance_with(&a, &b, &s, &model).unwrap();
        assert_eq!(m, dipole_mutual(&a, &b, &s));
    }

    #[test]
    fn grid_geometry() {
        let s = spec();
        let g = build_grid(3, &s, 1e-3, &CoilPose::at(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(g.len(), 9);
        assert!((g.extent(&s) - 0.062).abs() < 1e-12);
        // row-major: index 1 is right of index 0, index 3 is below index 0
        let p0 = g.poses[0].center;
        assert!((g.poses[1].center - p0 - Vec3::new(g.pitch, 0.0, 0.0)).norm() < 1e-12);
        assert!((g.poses[3].center - p0 - Vec3::new(0.0, -g.pitch, 0.0)).norm() < 1e-12);
        assert!(g.poses[4].center.norm() < 1e-15);

        let single = build_grid(1, &s, 1e-3, &CoilPose::at(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(single.poses, vec![CoilPose::at(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn in_grid_coupling_is_negative_and_decays() {
        let s = spec();
        let g = build_grid(3, &s, 1e-3, &CoilPose::at(0.0, 0.0, 0.0)).unwrap();
        let model = MutualModel::with_nodes(256);
        let m = |i: usize, j: usize| mutual_inductance_with(&g.poses[i], &g.poses[j], &s, &model).unwrap();
        let adjacent = m(0, 1);
        let diagonal = m(0, 4);
        let two_apart = m(0, 2);
        let far_corner = m(0, 8);
        for v in [adjacent, diagonal, two_apart, far_corner] {
            assert!(v < 0.0);
        }
        assert!(adjacent.abs() > diagonal.abs());
        assert!(diagonal.abs() > two_apart.abs());
        assert!(two_apart.abs() > far_corner.abs());
    }
}
