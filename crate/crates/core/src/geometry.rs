//! Points, deployments, regions, sampling and similarity transforms.
//!
//! Everything here is an immutable value. Regions are axis-aligned
//! parametric shapes (a segment along x, a rectangle in a horizontal plane,
//! an axis-aligned box) plus an explicit point list; rotated or reflected
//! areas are represented by transforming their [`SampleSet`].

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vec3 = Vector3<f64>;

const ORTHO_TOL: f64 = 1e-12;

/// Ordered list of base-station positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeploymentRepr", into = "DeploymentRepr")]
pub struct Deployment {
    positions: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct DeploymentRepr {
    positions_m: Vec<Vec3>,
}

impl TryFrom<DeploymentRepr> for Deployment {
    type Error = Error;
    fn try_from(r: DeploymentRepr) -> Result<Self> {
        Deployment::new(r.positions_m)
    }
}

impl From<Deployment> for DeploymentRepr {
    fn from(d: Deployment) -> Self {
        DeploymentRepr { positions_m: d.positions }
    }
}

impl Deployment {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("deployment needs at least one BS"));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("BS {i} has a non-finite coordinate")));
            }
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if positions[i] == positions[j] {
                    return Err(invalid(format!("BS {i} and BS {j} share a position")));
                }
            }
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Copy of this deployment with BS `n` moved to `p`.
    pub fn with_position(&self, n: usize, p: Vec3) -> Result<Self> {
        let mut positions = self.positions.clone();
        positions[n] = p;
        Self::new(positions)
    }

    pub fn into_positions(self) -> Vec<Vec3> {
        self.positions
    }
}

/// Area of interest.
///
/// `Segment` runs along +x from its anchor, `Rect` spans +x/+y in the
/// horizontal plane at the anchor's altitude, `Cuboid` spans +x/+y/+z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Segment {
        #[serde(rename = "anchor_m")]
        anchor: Vec3,
        #[serde(rename = "length_m")]
        length: f64,
    },
    Rect {
        #[serde(rename = "anchor_m")]
        anchor: Vec3,
        #[serde(rename = "extents_m")]
        extents: [f64; 2],
    },
    #[serde(rename = "box")]
    Cuboid {
        #[serde(rename = "anchor_m")]
        anchor: Vec3,
        #[serde(rename = "extents_m")]
        extents: [f64; 3],
    },
    Explicit {
        #[serde(rename = "points_m")]
        points: Vec<Vec3>,
    },
}

impl Region {
    pub fn segment(x0: f64, x1: f64) -> Self {
        Region::Segment { anchor: Vec3::new(x0, 0.0, 0.0), length: x1 - x0 }
    }

    pub fn rect(anchor: Vec3, width: f64, depth: f64) -> Self {
        Region::Rect { anchor, extents: [width, depth] }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |e: f64| e.is_finite() && e > 0.0;
        match self {
            Region::Segment { anchor, length } => {
                check_finite(anchor)?;
                if !ok(*length) {
                    return Err(invalid("segment length must be positive"));
                }
            }
            Region::Rect { anchor, extents } => {
                check_finite(anchor)?;
                if !extents.iter().all(|e| ok(*e)) {
                    return Err(invalid("rect extents must be positive"));
                }
            }
            Region::Cuboid { anchor, extents } => {
                check_finite(anchor)?;
                if !extents.iter().all(|e| ok(*e)) {
                    return Err(invalid("box extents must be positive"));
                }
            }
            Region::Explicit { points } => {
                if points.is_empty() {
                    return Err(invalid("explicit region needs at least one point"));
                }
                for p in points {
                    check_finite(p)?;
                }
            }
        }
        Ok(())
    }

    /// Dimension of the area; explicit point lists report 0.
    pub fn dim(&self) -> usize {
        match self {
            Region::Segment { .. } => 1,
            Region::Rect { .. } => 2,
            Region::Cuboid { .. } => 3,
            Region::Explicit { .. } => 0,
        }
    }

    /// Extents along the active axes (x, then y, then z).
    pub fn extents(&self) -> Vec<f64> {
        match self {
            Region::Segment { length, .. } => vec![*length],
            Region::Rect { extents, .. } => extents.to_vec(),
            Region::Cuboid { extents, .. } => extents.to_vec(),
            Region::Explicit { .. } => Vec::new(),
        }
    }

    pub fn anchor(&self) -> Vec3 {
        match self {
            Region::Segment { anchor, .. }
            | Region::Rect { anchor, .. }
            | Region::Cuboid { anchor, .. } => *anchor,
            Region::Explicit { points } => bounding_box(points).0,
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Region::Explicit { points } => bounding_box(points),
            _ => {
                let a = self.anchor();
                let mut hi = a;
                for (axis, e) in self.extents().iter().enumerate() {
                    hi[axis] += e;
                }
                (a, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        match self {
            Region::Explicit { points } => points.iter().any(|q| (q - p).norm() <= tol),
            _ => {
                let (lo, hi) = self.bounds();
                (0..3).all(|i| p[i] >= lo[i] - tol && p[i] <= hi[i] + tol)
            }
        }
    }

    fn with_extents(&self, anchor: Vec3, ext: &[f64]) -> Region {
        match self {
            Region::Segment { .. } => Region::Segment { anchor, length: ext[0] },
            Region::Rect { .. } => Region::Rect { anchor, extents: [ext[0], ext[1]] },
            Region::Cuboid { .. } => Region::Cuboid { anchor, extents: [ext[0], ext[1], ext[2]] },
            Region::Explicit { points } => Region::Explicit { points: points.clone() },
        }
    }
}

fn check_finite(p: &Vec3) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(invalid("non-finite coordinate"))
    }
}

fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Discretized area: points with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    points: Vec<Vec3>,
    weights: Vec<f64>,
}

impl SampleSet {
    /// Equal weights `1/K`.
    pub fn uniform(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(Self { points, weights })
    }

    /// Weights proportional to `raw`, renormalized to sum to one.
    pub fn weighted(points: Vec<Vec3>, raw: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        if points.len() != raw.len() {
            return Err(invalid("points and weights differ in length"));
        }
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateDensity);
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec3, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Union of several sets, each contributing its share `1/parts`.
    pub fn concat(parts: &[SampleSet]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptySamples);
        }
        let share = 1.0 / parts.len() as f64;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for part in parts {
            points.extend_from_slice(&part.points);
            weights.extend(part.weights.iter().map(|w| w * share));
        }
        Ok(Self { points, weights })
    }

    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self { points: self.points.iter().map(f).collect(), weights: self.weights.clone() }
    }
}

/// Target/user spatial density used for weighted sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Density {
    Uniform,
    /// Sum of isotropic Gaussian bumps.
    GaussianMixture { components: Vec<GaussianBump> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    #[serde(rename = "center_m")]
    pub center: Vec3,
    #[serde(rename = "sigma_m")]
    pub sigma: f64,
    pub weight: f64,
}

impl Density {
    pub fn value(&self, p: &Vec3) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::GaussianMixture { components } => components
                .iter()
                .map(|c| c.weight * (-(p - c.center).norm_squared() / (2.0 * c.sigma * c.sigma)).exp())
                .sum(),
        }
    }
}

pub enum SampleMode<'a> {
    UniformGrid,
    /// Weights proportional to the density at each grid point.
    PdfWeighted(&'a dyn Fn(&Vec3) -> f64),
}

fn axis_grid(start: f64, extent: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start + 0.5 * extent];
    }
    let step = extent / (count - 1) as f64;
    (0..count).map(|i| start + step * i as f64).collect()
}

/// Discretize a region on an endpoint-inclusive grid (a single count picks
/// the midpoint of that axis). Explicit regions ignore `counts`.
pub fn sample_region(region: &Region, counts: &[usize], mode: SampleMode<'_>) -> Result<SampleSet> {
    region.validate()?;
    let points = match region {
        Region::Explicit { points } => points.clone(),
        _ => {
            let dim = region.dim();
            if counts.len() != dim {
                return Err(invalid(format!("expected {dim} sample counts, got {}", counts.len())));
            }
            if counts.contains(&0) {
                return Err(invalid("sample counts must be at least 1"));
            }
            let anchor = region.anchor();
            let ext = region.extents();
            let axes: Vec<Vec<f64>> =
                (0..dim).map(|a| axis_grid(anchor[a], ext[a], counts[a])).collect();
            let mut pts = Vec::with_capacity(counts.iter().product());
            // x varies fastest
            let total: usize = counts.iter().product();
            for flat in 0..total {
                let mut p = anchor;
                let mut rem = flat;
                for a in 0..dim {
                    p[a] = axes[a][rem % counts[a]];
                    rem /= counts[a];
                }
                pts.push(p);
            }
            pts
        }
    };
    match mode {
        SampleMode::UniformGrid => SampleSet::uniform(points),
        SampleMode::PdfWeighted(pdf) => {
            let raw: Vec<f64> = points.iter().map(pdf).collect();
            if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(invalid("density must be finite and nonnegative"));
            }
            SampleSet::weighted(points, raw)
        }
    }
}

/// `p ↦ κ·O·R·p + Δ` with `R` a proper rotation and `O` an improper
/// orthogonal matrix or the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: Matrix3<f64>,
    reflection: Matrix3<f64>,
    displacement: Vec3,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: Matrix3<f64>, reflection: Matrix3<f64>, displacement: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("scale must be positive"));
        }
        check_finite(&displacement)?;
        if !is_orthogonal(&rotation) || (rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(invalid("rotation must be orthogonal with det +1"));
        }
        let is_identity = (reflection - Matrix3::identity()).abs().max() <= ORTHO_TOL;
        if !is_identity
            && (!is_orthogonal(&reflection) || (reflection.determinant() + 1.0).abs() > ORTHO_TOL)
        {
            return Err(invalid("reflection must be orthogonal with det -1, or the identity"));
        }
        Ok(Self { scale, rotation, reflection, displacement })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            reflection: Matrix3::identity(),
            displacement: Vec3::zeros(),
        }
    }

    pub fn translation(delta: Vec3) -> Self {
        Self { displacement: delta, ..Self::identity() }
    }

    pub fn scaling(kappa: f64) -> Result<Self> {
        Self::new(kappa, Matrix3::identity(), Matrix3::identity(), Vec3::zeros())
    }

    /// Rotation by `angle` radians about `axis`.
    pub fn rotation(axis: Vec3, angle: f64) -> Result<Self> {
        if axis.norm() == 0.0 {
            return Err(invalid("rotation axis must be nonzero"));
        }
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Ok(Self { rotation: r.into_inner(), ..Self::identity() })
    }

    /// Mirror across the plane through the origin with the given normal.
    pub fn reflection(normal: Vec3) -> Result<Self> {
        let n = normal.try_normalize(0.0).ok_or_else(|| invalid("reflection normal must be nonzero"))?;
        let o = Matrix3::identity() - 2.0 * n * n.transpose();
        Ok(Self { reflection: o, ..Self::identity() })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn reflection_matrix(&self) -> &Matrix3<f64> {
        &self.reflection
    }

    pub fn displacement(&self) -> &Vec3 {
        &self.displacement
    }

    /// The linear part `κ·O·R`.
    pub fn linear(&self) -> Matrix3<f64> {
        self.scale * self.reflection * self.rotation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear() * p + self.displacement
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        // κ₂O₂R₂(κ₁O₁R₁p + Δ₁) + Δ₂; O₂R₂O₁R₁ = O'R' with O' = O₂O₁, R' = O₁ᵀR₂O₁R₁.
        let o = self.reflection * first.reflection;
        let r = first.reflection.transpose() * self.rotation * first.reflection * first.rotation;
        let reflection = if (o.determinant() - 1.0).abs() < 1e-9 { Matrix3::identity() } else { o };
        let rotation = if reflection == Matrix3::identity() { o * r } else { r };
        SimilarityTransform {
            scale: self.scale * first.scale,
            rotation,
            reflection,
            displacement: self.linear() * first.displacement + self.displacement,
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        // (κOR)⁻¹ = κ⁻¹RᵀOᵀ = κ⁻¹ Oᵀ (O Rᵀ Oᵀ)
        let reflection = self.reflection.transpose();
        let rotation = self.reflection * self.rotation.transpose() * self.reflection.transpose();
        let inv_linear = self.rotation.transpose() * self.reflection.transpose() / self.scale;
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation,
            reflection,
            displacement: -(inv_linear * self.displacement),
        }
    }

    pub fn apply_deployment(&self, dep: &Deployment) -> Deployment {
        // κ > 0 and an invertible linear part keep positions distinct.
        Deployment { positions: dep.positions.iter().map(|p| self.apply(p)).collect() }
    }

    pub fn apply_samples(&self, samples: &SampleSet) -> SampleSet {
        samples.map_points(|p| self.apply(p))
    }
}

fn is_orthogonal(m: &Matrix3<f64>) -> bool {
    (m * m.transpose() - Matrix3::identity()).abs().max() <= ORTHO_TOL
}

/// Integer `Z` with `Z^dim == factor`.
pub fn integer_root(factor: usize, dim: usize) -> Result<usize> {
    if factor == 0 || dim == 0 || dim > 3 {
        return Err(Error::NotPerfectPower { factor, dim });
    }
    let guess = (factor as f64).powf(1.0 / dim as f64).round() as usize;
    for z in guess.saturating_sub(1).max(1)..=guess + 1 {
        if z.pow(dim as u32) == factor {
            return Ok(z);
        }
    }
    Err(Error::NotPerfectPower { factor, dim })
}

/// Offsets of the `Z^d` cells tiling a region whose cells have the given
/// extents, x fastest.
fn cell_offsets(cell_extents: &[f64], z: usize) -> Vec<Vec3> {
    let dim = cell_extents.len();
    let total = z.pow(dim as u32);
    (0..total)
        .map(|flat| {
            let mut off = Vec3::zeros();
            let mut rem = flat;
            for (a, e) in cell_extents.iter().enumerate() {
                off[a] = (rem % z) as f64 * e;
                rem /= z;
            }
            off
        })
        .collect()
}

/// Tile `base` over a region enlarged `Z` times along every active axis
/// (`Z^dim = factor`). Returns the enlarged region and the `factor` copies,
/// cell by cell.
pub fn replicate_deployment(base: &Deployment, base_region: &Region, factor: usize) -> Result<(Deployment, Region)> {
    base_region.validate()?;
    let dim = base_region.dim();
    let z = integer_root(factor, dim)?;
    let ext = base_region.extents();
    let offsets = cell_offsets(&ext, z);
    let positions = offsets
        .iter()
        .flat_map(|off| base.positions().iter().map(move |p| p + off))
        .collect();
    let big: Vec<f64> = ext.iter().map(|e| e * z as f64).collect();
    Ok((Deployment::new(positions)?, base_region.with_extents(base_region.anchor(), &big)))
}

/// Sample counterpart of [`replicate_deployment`]: the base samples copied
/// into every cell of the enlarged region, each cell carrying weight `1/factor`.
pub fn replicate_samples(base: &SampleSet, base_region: &Region, factor: usize) -> Result<Vec<SampleSet>> {
    let dim = base_region.dim();
    let z = integer_root(factor, dim)?;
    let offsets = cell_offsets(&base_region.extents(), z);
    Ok(offsets.iter().map(|off| base.map_points(|p| p + off)).collect())
}

/// Per-cell similarity maps for the subdivision construction: the base
/// region shrunk by `1/Z` about its anchor and moved into each of the
/// `Z^dim` cells of the same region.
pub fn subdivision_transforms(base_region: &Region, factor: usize) -> Result<Vec<SimilarityTransform>> {
    base_region.validate()?;
    let dim = base_region.dim();
    let z = integer_root(factor, dim)?;
    let kappa = 1.0 / z as f64;
    let anchor = base_region.anchor();
    let cell_ext: Vec<f64> = base_region.extents().iter().map(|e| e * kappa).collect();
    cell_offsets(&cell_ext, z)
        .into_iter()
        .map(|off| {
            // p ↦ anchor + κ(p − anchor) + off
            let disp = anchor * (1.0 - kappa) + off;
            SimilarityTransform::new(kappa, Matrix3::identity(), Matrix3::identity(), disp)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn segment_uniform_grid() {
        let s = sample_region(&Region::segment(0.0, 1000.0), &[5], SampleMode::UniformGrid).unwrap();
        let xs: Vec<f64> = s.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 250.0, 500.0, 750.0, 1000.0]);
        assert!(s.weights().iter().all(|w| (*w - 0.2).abs() < 1e-15));
    }

    #[test]
    fn rect_corners() {
        let r = Region::rect(Vec3::new(0.0, 0.0, 400.0), 2.0, 2.0);
        let s = sample_region(&r, &[2, 2], SampleMode::UniformGrid).unwrap();
        assert_eq!(s.len(), 4);
        for c in [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)] {
            assert!(s.points().contains(&Vec3::new(c.0, c.1, 400.0)));
        }
        assert!(s.weights().iter().all(|w| *w == 0.25));
    }

    #[test]
    fn pdf_weights_follow_density() {
        let pdf = |p: &Vec3| p.x;
        let s = sample_region(&Region::segment(0.0, 1.0), &[2], SampleMode::PdfWeighted(&pdf)).unwrap();
        assert_eq!(s.weights(), &[0.0, 1.0]);
    }

    #[test]
    fn zero_mass_density_is_rejected() {
        let pdf = |_: &Vec3| 0.0;
        let err = sample_region(&Region::segment(0.0, 1.0), &[3], SampleMode::PdfWeighted(&pdf)).unwrap_err();
        assert!(matches!(err, Error::DegenerateDensity));
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(sample_region(&Region::segment(0.0, 1.0), &[0], SampleMode::UniformGrid).is_err());
    }

    #[test]
    fn transform_examples() {
        let rot = SimilarityTransform::rotation(Vec3::z(), FRAC_PI_2).unwrap();
        let t = SimilarityTransform::translation(Vec3::new(5.0, 5.0, 0.0))
            .compose(&SimilarityTransform::scaling(2.0).unwrap().compose(&rot));
        let out = t.apply(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(out, Vec3::new(5.0, 7.0, 0.0), epsilon = 1e-12);

        let refl = SimilarityTransform::reflection(Vec3::y()).unwrap();
        assert_relative_eq!(refl.apply(&Vec3::new(0.0, 3.0, 1.0)), Vec3::new(0.0, -3.0, 1.0), epsilon = 1e-15);

        let p = Vec3::new(1.5, -2.0, 7.0);
        assert_eq!(SimilarityTransform::identity().apply(&p), p);
    }

    #[test]
    fn inverse_with_reflection() {
        let t = SimilarityTransform::new(
            3.0,
            *Rotation3::from_axis_angle(&Vec3::x_axis(), 0.7).matrix(),
            Matrix3::identity() - 2.0 * Vec3::new(0.6, 0.8, 0.0) * Vec3::new(0.6, 0.8, 0.0).transpose(),
            Vec3::new(1.0, -4.0, 2.5),
        )
        .unwrap();
        let inv = t.inverse();
        assert!((inv.reflection_matrix().determinant() + 1.0).abs() < 1e-12);
        assert!((inv.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
        let p = Vec3::new(0.3, 9.0, -1.0);
        assert_relative_eq!(inv.apply(&t.apply(&p)), p, epsilon = 1e-12);
    }

    #[test]
    fn invalid_transforms_are_rejected() {
        let m = Matrix3::new(2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(SimilarityTransform::new(1.0, m, Matrix3::identity(), Vec3::zeros()).is_err());
        assert!(SimilarityTransform::new(-1.0, Matrix3::identity(), Matrix3::identity(), Vec3::zeros()).is_err());
        let flip = Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        // improper matrix passed as the rotation
        assert!(SimilarityTransform::new(1.0, flip, Matrix3::identity(), Vec3::zeros()).is_err());
    }

    #[test]
    fn replicate_1d() {
        let base = Deployment::new(vec![Vec3::new(100.0, 50.0, 30.0), Vec3::new(300.0, -50.0, 30.0)]).unwrap();
        let (dep, region) = replicate_deployment(&base, &Region::segment(0.0, 400.0), 2).unwrap();
        assert_eq!(region, Region::segment(0.0, 800.0));
        assert_eq!(dep.len(), 4);
        assert_eq!(dep.positions()[2], Vec3::new(500.0, 50.0, 30.0));
        assert_eq!(dep.positions()[3], Vec3::new(700.0, -50.0, 30.0));

        let (same, r1) = replicate_deployment(&base, &Region::segment(0.0, 400.0), 1).unwrap();
        assert_eq!(same, base);
        assert_eq!(r1, Region::segment(0.0, 400.0));
    }

    #[test]
    fn replicate_2d_tiles() {
        let base = Deployment::new(vec![
            Vec3::new(1.0, 1.0, 5.0),
            Vec3::new(3.0, 1.0, 5.0),
            Vec3::new(1.0, 3.0, 5.0),
            Vec3::new(3.0, 3.0, 5.0),
        ])
        .unwrap();
        let region = Region::rect(Vec3::zeros(), 4.0, 4.0);
        let (dep, big) = replicate_deployment(&base, &region, 4).unwrap();
        assert_eq!(dep.len(), 16);
        assert_eq!(big.extents(), vec![8.0, 8.0]);
        assert!(dep.positions().contains(&Vec3::new(7.0, 7.0, 5.0)));
        assert!(matches!(replicate_deployment(&base, &region, 3), Err(Error::NotPerfectPower { .. })));
    }

    #[test]
    fn subdivision_maps_cells_into_region() {
        let region = Region::segment(0.0, 100.0);
        let ts = subdivision_transforms(&region, 4).unwrap();
        assert_eq!(ts.len(), 4);
        assert_relative_eq!(ts[3].apply(&Vec3::new(100.0, 0.0, 40.0)), Vec3::new(100.0, 0.0, 10.0), epsilon = 1e-12);
        assert_relative_eq!(ts[1].apply(&Vec3::new(0.0, 0.0, 0.0)), Vec3::new(25.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn deployment_rejects_duplicates() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert!(Deployment::new(vec![p, p]).is_err());
        assert!(Deployment::new(vec![]).is_err());
    }

    #[test]
    fn deployment_json_shape() {
        let d = Deployment::new(vec![Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"positions_m":[[1.0,2.0,3.0]]}"#);
        let back: Deployment = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
