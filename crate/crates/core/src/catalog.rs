//! Store of solved (region, deployment) pairs, reused on similar regions.
//!
//! Only sensing-only solutions are meaningful here: the A-CRLB transforms
//! predictably under similarity maps, the downlink rate does not (noise and
//! transmit power stay fixed while distances scale).

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Deployment, Region, SimilarityTransform, Vec3};
use crate::sensing::SensingParams;

/// Relative tolerance on normalized extent ratios for a match.
pub const RATIO_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionFamily {
    Segment,
    Rect,
    #[serde(rename = "box")]
    Cuboid,
}

/// Scale-free shape key of a parametric region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub family: RegionFamily,
    /// Extents sorted in decreasing order, divided by the largest.
    pub ratios: Vec<f64>,
    pub dim: usize,
}

impl RegionDescriptor {
    pub fn of(region: &Region) -> Result<Self> {
        region.validate()?;
        let family = match region {
            Region::Segment { .. } => RegionFamily::Segment,
            Region::Rect { .. } => RegionFamily::Rect,
            Region::Cuboid { .. } => RegionFamily::Cuboid,
            Region::Explicit { .. } => return Err(Error::Catalog("explicit point regions cannot be catalogued".into())),
        };
        let mut ext = region.extents();
        ext.sort_by(|a, b| b.total_cmp(a));
        let largest = ext[0];
        Ok(Self { family, ratios: ext.iter().map(|e| e / largest).collect(), dim: region.dim() })
    }

    pub fn matches(&self, other: &RegionDescriptor) -> bool {
        self.family == other.family
            && self.ratios.len() == other.ratios.len()
            && self.ratios.iter().zip(&other.ratios).all(|(a, b)| (a - b).abs() <= RATIO_TOL * a.max(*b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub descriptor: RegionDescriptor,
    pub region: Region,
    pub deployment: Deployment,
    /// Which optimizer produced the deployment.
    pub optimizer: String,
    /// A-CRLB of the deployment over the stored region, in m².
    pub objective: f64,
    pub beta: f64,
    pub kappa_s: f64,
    /// Seconds since the Unix epoch at insertion.
    #[serde(default)]
    pub timestamp: u64,
}

impl CatalogEntry {
    pub fn new(region: Region, deployment: Deployment, optimizer: &str, objective: f64, params: &SensingParams) -> Result<Self> {
        params.validate()?;
        if !objective.is_finite() || objective <= 0.0 {
            return Err(Error::Catalog("catalog objective must be finite and positive".into()));
        }
        Ok(Self {
            descriptor: RegionDescriptor::of(&region)?,
            region,
            deployment,
            optimizer: optimizer.to_string(),
            objective,
            beta: params.beta,
            kappa_s: params.kappa_s,
            timestamp: 0,
        })
    }

    fn largest_extent(&self) -> f64 {
        self.region.extents().into_iter().fold(0.0, f64::max)
    }

    /// Objective rescaled to unit largest extent and unit sensing constant,
    /// so entries of different sizes compare fairly.
    pub fn normalized_objective(&self) -> f64 {
        self.objective * self.kappa_s / self.largest_extent().powf(2.0 * self.beta)
    }

    fn same_key(&self, other: &CatalogEntry) -> bool {
        self.descriptor.matches(&other.descriptor) && self.beta == other.beta && self.deployment.len() == other.deployment.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Inserted,
    /// An entry with the same key and a worse objective was overwritten.
    Replaced,
    /// An entry with the same key and an objective at least as good exists.
    KeptExisting,
}

#[derive(Debug, Clone)]
pub struct QueryHit {
    pub entry_id: usize,
    pub transform: SimilarityTransform,
    pub deployment: Deployment,
    /// `κ^{2β}` times the stored objective, adjusted for the sensing constant.
    pub predicted_objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Empty catalog when the file does not exist yet.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn get(&self, id: usize) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    /// Insert `entry`, keeping the better of two entries with the same key.
    pub fn add(&mut self, mut entry: CatalogEntry) -> (usize, AddOutcome) {
        if entry.timestamp == 0 {
            entry.timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        }
        if let Some(id) = self.entries.iter().position(|e| e.same_key(&entry)) {
            if entry.normalized_objective() < self.entries[id].normalized_objective() {
                self.entries[id] = entry;
                return (id, AddOutcome::Replaced);
            }
            return (id, AddOutcome::KeptExisting);
        }
        self.entries.push(entry);
        (self.entries.len() - 1, AddOutcome::Inserted)
    }

    /// Stored deployment carried onto `region` by a similarity map, if an
    /// entry of the same shape, BS count and pathloss exponent exists.
    pub fn query(&self, region: &Region, n_bs: usize, params: &SensingParams) -> Result<Option<QueryHit>> {
        let desc = RegionDescriptor::of(region)?;
        let Some((id, entry)) = self
            .entries
            .iter()
            .enumerate()
            .find(|(_, e)| e.descriptor.matches(&desc) && e.deployment.len() == n_bs && e.beta == params.beta)
        else {
            return Ok(None);
        };
        let transform = region_map(&entry.region, region)?;
        let kappa = transform.scale();
        let predicted = kappa.powf(2.0 * params.beta) * entry.objective * entry.kappa_s / params.kappa_s;
        Ok(Some(QueryHit {
            entry_id: id,
            deployment: transform.apply_deployment(&entry.deployment),
            transform,
            predicted_objective: predicted,
        }))
    }
}

/// Axes of the region's extents, longest first (stable for ties).
fn axes_by_extent(region: &Region) -> Vec<usize> {
    let ext = region.extents();
    let mut idx: Vec<usize> = (0..ext.len()).collect();
    idx.sort_by(|&a, &b| ext[b].total_cmp(&ext[a]));
    idx
}

/// Similarity map sending the box of `from` onto the box of `to`: a signed
/// axis permutation (proper rotation), a uniform scale and a shift.
pub fn region_map(from: &Region, to: &Region) -> Result<SimilarityTransform> {
    let (src, dst) = (axes_by_extent(from), axes_by_extent(to));
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::Catalog("regions of different families".into()));
    }
    let mut perm = Matrix3::zeros();
    let mut used = [false; 3];
    for (s, d) in src.iter().zip(&dst) {
        perm[(*d, *s)] = 1.0;
        used[*d] = true;
    }
    // inactive axes map onto the remaining ones in order
    let inactive_src: Vec<usize> = (0..3).filter(|a| !src.contains(a)).collect();
    let inactive_dst: Vec<usize> = (0..3).filter(|a| !used[*a]).collect();
    for (s, d) in inactive_src.iter().zip(&inactive_dst) {
        perm[(*d, *s)] = 1.0;
    }
    if perm.determinant() < 0.0 {
        // flip the first horizontal axis
        let flip = if dst.contains(&0) || inactive_dst.contains(&0) { 0 } else { 1 };
        for c in 0..3 {
            perm[(flip, c)] = -perm[(flip, c)];
        }
    }
    let from_ext = from.extents();
    let to_ext = to.extents();
    let kappa = to_ext[dst[0]] / from_ext[src[0]];
    let linear = kappa * perm;
    let (lo, hi) = from.bounds();
    let mut image_min = Vec3::repeat(f64::INFINITY);
    for corner in 0..8 {
        let c = Vec3::from_fn(|i, _| if corner >> i & 1 == 1 { hi[i] } else { lo[i] });
        image_min = image_min.inf(&(linear * c));
    }
    SimilarityTransform::new(kappa, perm, Matrix3::identity(), to.anchor() - image_min)
}
