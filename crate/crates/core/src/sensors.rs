//! Chemical comparators and the workspace partition they induce.
//!
//! With equal-strength sources and any monotone radial concentration law,
//! a comparator between sources `a` and `b` reports which of the two is
//! nearer, so its decision boundary is their perpendicular bisector.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::SourceLayout;
use crate::error::{Error, Result};

/// Comparator between 1-based sources `a < b`. Serialized as `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "(usize, usize)", into = "(usize, usize)")]
pub struct Comparator {
    a: usize,
    b: usize,
}

impl Comparator {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 || a == b {
            return Err(Error::InvalidParameter(format!(
                "comparator needs two distinct 1-based sources, got ({a}, {b})"
            )));
        }
        Ok(Self { a: a.min(b), b: a.max(b) })
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn validate(&self, layout: &SourceLayout) -> Result<()> {
        if self.b > layout.sources().len() {
            return Err(Error::InvalidParameter(format!(
                "comparator {self} refers to a source beyond the {} available",
                layout.sources().len()
            )));
        }
        Ok(())
    }

    /// Normalized bisector `n . p = c` with `|n| = 1` and the first nonzero
    /// component of `n` positive.
    fn bisector(&self, layout: &SourceLayout) -> ([f64; 2], f64) {
        let pa = layout.source(self.a).expect("validated comparator");
        let pb = layout.source(self.b).expect("validated comparator");
        let mut n = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = n[0].hypot(n[1]);
        n = [n[0] / len, n[1] / len];
        let mid = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
        let mut c = n[0] * mid[0] + n[1] * mid[1];
        if n[0] < 0.0 || (n[0] == 0.0 && n[1] < 0.0) {
            n = [-n[0], -n[1]];
            c = -c;
        }
        (n, c)
    }
}

impl TryFrom<(usize, usize)> for Comparator {
    type Error = Error;

    fn try_from((a, b): (usize, usize)) -> Result<Self> {
        Self::new(a, b)
    }
}

impl From<Comparator> for (usize, usize) {
    fn from(c: Comparator) -> Self {
        (c.a, c.b)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.a, self.b)
    }
}

/// Ordered comparator list without duplicate pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Comparator>", into = "Vec<Comparator>")]
pub struct SensorSet {
    comparators: Vec<Comparator>,
}

impl SensorSet {
    pub fn new(comparators: Vec<Comparator>) -> Result<Self> {
        for (i, c) in comparators.iter().enumerate() {
            if comparators[..i].contains(c) {
                return Err(Error::InvalidParameter(format!("duplicate comparator {c}")));
            }
        }
        if comparators.len() > 64 {
            return Err(Error::InvalidParameter("at most 64 comparators are supported".into()));
        }
        Ok(Self { comparators })
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(a, b)| Comparator::new(a, b)).collect::<Result<_>>()?)
    }

    pub fn comparators(&self) -> &[Comparator] {
        &self.comparators
    }

    pub fn len(&self) -> usize {
        self.comparators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparators.is_empty()
    }

    pub fn validate(&self, layout: &SourceLayout) -> Result<()> {
        self.comparators.iter().try_for_each(|c| c.validate(layout))
    }

    pub fn with(&self, c: Comparator) -> Result<Self> {
        let mut v = self.comparators.clone();
        v.push(c);
        Self::new(v)
    }
}

impl TryFrom<Vec<Comparator>> for SensorSet {
    type Error = Error;

    fn try_from(v: Vec<Comparator>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SensorSet> for Vec<Comparator> {
    fn from(s: SensorSet) -> Self {
        s.comparators
    }
}

/// Comparator bit signature; bit `i` (most significant first) belongs to
/// comparator `i` of the sensor set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionId {
    len: u8,
    bits: u64,
}

impl RegionId {
    pub fn empty() -> Self {
        Self { len: 0, bits: 0 }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= 64);
        let packed = bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        Self { len: bits.len() as u8, bits: packed }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len());
        (self.bits >> (self.len() - 1 - i)) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.bit(i)).collect()
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return write!(f, "-");
        }
        for i in 0..self.len() {
            write!(f, "{}", if self.bit(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for RegionId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "-" {
            return Ok(Self::empty());
        }
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(format!("bad region signature `{s}`")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if bits.len() > 64 {
            return Err(format!("region signature `{s}` is longer than 64 bits"));
        }
        Ok(Self::from_bits(&bits))
    }
}

impl Serialize for RegionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True iff `pos` is at least as close to source `a` as to source `b`.
pub fn comparator_output(pos: [f64; 2], c: &Comparator, layout: &SourceLayout) -> bool {
    let pa = layout.source(c.a).expect("comparator refers to a valid source");
    let pb = layout.source(c.b).expect("comparator refers to a valid source");
    let da = (pos[0] - pa[0]).powi(2) + (pos[1] - pa[1]).powi(2);
    let db = (pos[0] - pb[0]).powi(2) + (pos[1] - pb[1]).powi(2);
    da <= db
}

pub fn region_signature(pos: [f64; 2], set: &SensorSet, layout: &SourceLayout) -> RegionId {
    let mut bits = 0u64;
    for c in set.comparators() {
        bits = (bits << 1) | comparator_output(pos, c, layout) as u64;
    }
    RegionId { len: set.len() as u8, bits }
}

/// Keeps one comparator per distinct bisector line, in pair order.
pub fn distinct_sensors(layout: &SourceLayout) -> SensorSet {
    const TOL: f64 = 1e-9;
    let n = layout.sources().len();
    let mut kept: Vec<(Comparator, [f64; 2], f64)> = Vec::new();
    for a in 1..=n {
        for b in (a + 1)..=n {
            let c = Comparator { a, b };
            let (normal, offset) = c.bisector(layout);
            let duplicate = kept.iter().any(|(_, n2, c2)| {
                (normal[0] - n2[0]).abs() < TOL && (normal[1] - n2[1]).abs() < TOL && (offset - c2).abs() < TOL
            });
            if !duplicate {
                kept.push((c, normal, offset));
            }
        }
    }
    SensorSet { comparators: kept.into_iter().map(|(c, _, _)| c).collect() }
}

/// Every comparator pair of a layout, duplicates included.
pub fn all_sensor_pairs(layout: &SourceLayout) -> Vec<Comparator> {
    let n = layout.sources().len();
    (1..=n).flat_map(|a| ((a + 1)..=n).map(move |b| Comparator { a, b })).collect()
}

/// A realized region with the probe points that landed in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: RegionId,
    pub members: Vec<[f64; 2]>,
}

impl Region {
    pub fn centroid(&self) -> [f64; 2] {
        let n = self.members.len() as f64;
        let (sx, sy) = self.members.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [sx / n, sy / n]
    }
}

/// Probe-grid cell centers, row-major with `x` fastest.
pub fn probe_points(layout: &SourceLayout, resolution: usize) -> Vec<[f64; 2]> {
    let ws = layout.workspace();
    let (dx, dy) = (ws.width() / resolution as f64, ws.height() / resolution as f64);
    (0..resolution)
        .flat_map(|iy| {
            (0..resolution).map(move |ix| [ws.x_min + (ix as f64 + 0.5) * dx, ws.y_min + (iy as f64 + 0.5) * dy])
        })
        .collect()
}

/// Realized regions on a dense probe grid, sorted by signature.
pub fn enumerate_regions(set: &SensorSet, layout: &SourceLayout, probe_resolution: usize) -> Result<Vec<Region>> {
    if probe_resolution < 100 {
        return Err(Error::InvalidParameter(format!(
            "probe resolution must be at least 100 per axis, got {probe_resolution}"
        )));
    }
    set.validate(layout)?;
    let mut map: BTreeMap<RegionId, Vec<[f64; 2]>> = BTreeMap::new();
    for p in probe_points(layout, probe_resolution) {
        map.entry(region_signature(p, set, layout)).or_default().push(p);
    }
    Ok(map.into_iter().map(|(id, members)| Region { id, members }).collect())
}

/// Comparators between source 1 and every other source.
pub fn source_one_sensors(layout: &SourceLayout) -> SensorSet {
    let n = layout.sources().len();
    SensorSet { comparators: (2..=n).map(|b| Comparator { a: 1, b }).collect() }
}
