//! Service area, perimeter APU layout, discretization grid, bistatic geometry
//! and role-assignment enumeration.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::{invalid, Error, Result, SPEED_OF_LIGHT};

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Self {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Square service area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceArea {
    pub side_length: f64,
    /// Lower-left corner.
    pub origin: Point2,
}

impl ServiceArea {
    pub fn new(side_length: f64, origin: Point2) -> Result<Self> {
        if !(side_length > 0.0 && side_length.is_finite()) {
            return Err(invalid(format!("side length must be > 0, got {side_length}")));
        }
        Ok(Self { side_length, origin })
    }

    pub fn from_perimeter(perimeter: f64) -> Result<Self> {
        Self::new(perimeter / 4.0, Point2::default())
    }

    pub fn center(&self) -> Point2 {
        self.origin + Point2::new(0.5 * self.side_length, 0.5 * self.side_length)
    }

    /// True if `p` lies strictly inside the square.
    pub fn contains_strictly(&self, p: Point2) -> bool {
        let d = p - self.origin;
        d.x > 0.0 && d.y > 0.0 && d.x < self.side_length && d.y < self.side_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApuDescriptor {
    pub index: usize,
    /// Array center.
    pub reference_point: Point2,
    /// Unit vector along the antenna line.
    pub axis_direction: Point2,
    /// Unit vector pointing into the service area.
    pub inward_normal: Point2,
}

impl ApuDescriptor {
    pub fn new(
        index: usize,
        reference_point: Point2,
        axis_direction: Point2,
        inward_normal: Point2,
    ) -> Result<Self> {
        if (axis_direction.norm() - 1.0).abs() > UNIT_TOL
            || (inward_normal.norm() - 1.0).abs() > UNIT_TOL
        {
            return Err(invalid("APU axis and normal must be unit vectors"));
        }
        if axis_direction.dot(inward_normal).abs() > UNIT_TOL {
            return Err(invalid("APU axis must be orthogonal to its normal"));
        }
        Ok(Self {
            index,
            reference_point,
            axis_direction,
            inward_normal,
        })
    }

    /// Sine of the azimuth of `p` measured from the array broadside.
    pub fn sin_angle_to(&self, p: Point2) -> Result<f64> {
        let los = self.line_of_sight(p)?;
        Ok(los.dot(self.axis_direction).clamp(-1.0, 1.0))
    }

    fn line_of_sight(&self, p: Point2) -> Result<Point2> {
        let d = p - self.reference_point;
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::CoincidentPoint {
                apu: self.index,
                x: p.x,
                y: p.y,
            });
        }
        let los = d * (1.0 / r);
        if los.dot(self.inward_normal) <= UNIT_TOL {
            return Err(Error::NotInFront {
                apu: self.index,
                x: p.x,
                y: p.y,
            });
        }
        Ok(los)
    }
}

/// APUs on the perimeter plus the shared antenna-array parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripeLayout {
    pub area: ServiceArea,
    pub apus: Vec<ApuDescriptor>,
    pub antennas_per_apu: usize,
    /// Inter-element spacing in carrier wavelengths.
    pub element_spacing: f64,
    pub carrier_freq: f64,
}

impl StripeLayout {
    pub fn apu_count(&self) -> usize {
        self.apus.len()
    }

    pub fn apu(&self, index: usize) -> &ApuDescriptor {
        &self.apus[index]
    }
}

/// Places `apus_per_side` APUs at the centers of equal segments on each side,
/// indexed counter-clockwise starting from the bottom side.
pub fn build_perimeter_layout(
    area: ServiceArea,
    apus_per_side: usize,
    antennas: usize,
    element_spacing: f64,
    carrier_freq: f64,
) -> Result<StripeLayout> {
    if apus_per_side == 0 {
        return Err(invalid("apus_per_side must be >= 1"));
    }
    if antennas == 0 {
        return Err(invalid("antennas per APU must be >= 1"));
    }
    if !(element_spacing > 0.0) {
        return Err(invalid("element spacing must be > 0"));
    }
    if !(carrier_freq > 0.0) {
        return Err(invalid("carrier frequency must be > 0"));
    }
    let side = area.side_length;
    let o = area.origin;
    // (start corner, direction of travel, inward normal) per side, CCW.
    let sides = [
        (o, Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)),
        (o + Point2::new(side, 0.0), Point2::new(0.0, 1.0), Point2::new(-1.0, 0.0)),
        (o + Point2::new(side, side), Point2::new(-1.0, 0.0), Point2::new(0.0, -1.0)),
        (o + Point2::new(0.0, side), Point2::new(0.0, -1.0), Point2::new(1.0, 0.0)),
    ];
    let segment = side / apus_per_side as f64;
    let mut apus = Vec::with_capacity(4 * apus_per_side);
    for (start, dir, normal) in sides {
        for j in 0..apus_per_side {
            let along = (j as f64 + 0.5) * segment;
            let index = apus.len();
            apus.push(ApuDescriptor::new(index, start + dir * along, dir, normal)?);
        }
    }
    Ok(StripeLayout {
        area,
        apus,
        antennas_per_apu: antennas,
        element_spacing,
        carrier_freq,
    })
}

/// Grid point from the 1-based index formula, before placement:
/// `((⌊(i−1)/√I⌋ − 1)·δ, ((i−1) mod √I + 1)·δ)`.
pub fn grid_point_coords(index: usize, point_count: usize, spacing: f64) -> Result<Point2> {
    let side = perfect_square_root(point_count)?;
    if index == 0 || index > point_count {
        return Err(Error::GridIndexOutOfRange {
            index,
            count: point_count,
        });
    }
    let k = index - 1;
    let row = (k / side) as f64 - 1.0;
    let col = (k % side) as f64 + 1.0;
    Ok(Point2::new(row * spacing, col * spacing))
}

fn perfect_square_root(n: usize) -> Result<usize> {
    let r = (n as f64).sqrt().round() as usize;
    if n == 0 || r * r != n {
        return Err(invalid(format!("grid point count {n} is not a positive perfect square")));
    }
    Ok(r)
}

/// Grid spacing rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "value")]
pub enum SpacingPolicy {
    /// δ = side / (√I + 1): the centered lattice keeps a one-δ margin.
    CenteredFit,
    Fixed(f64),
}

impl SpacingPolicy {
    pub fn resolve(self, area: &ServiceArea, point_count: usize) -> Result<f64> {
        let side = perfect_square_root(point_count)?;
        let spacing = match self {
            SpacingPolicy::CenteredFit => area.side_length / (side as f64 + 1.0),
            SpacingPolicy::Fixed(d) => d,
        };
        if !(spacing > 0.0) {
            return Err(invalid("grid spacing must be > 0"));
        }
        Ok(spacing)
    }
}

/// Discretization lattice, translated so its bounding box is centered in the
/// service area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub point_count: usize,
    pub spacing: f64,
    /// Translation applied to the raw index formula.
    pub offset: Point2,
    /// `coords[i]` is the placed position of 1-based grid index `i + 1`.
    pub coords: Vec<Point2>,
}

impl Grid {
    pub fn centered(area: &ServiceArea, point_count: usize, spacing: f64) -> Result<Self> {
        let side = perfect_square_root(point_count)? as f64;
        if !(spacing > 0.0) {
            return Err(invalid("grid spacing must be > 0"));
        }
        // Raw x spans [−δ, (√I−2)δ], raw y spans [δ, √I·δ].
        let raw_center = Point2::new(0.5 * (side - 3.0) * spacing, 0.5 * (side + 1.0) * spacing);
        let offset = area.center() - raw_center;
        let coords = (1..=point_count)
            .map(|i| grid_point_coords(i, point_count, spacing).map(|p| p + offset))
            .collect::<Result<Vec<_>>>()?;
        if let Some(p) = coords.iter().find(|p| !area.contains_strictly(**p)) {
            return Err(invalid(format!(
                "grid spacing {spacing} places point ({}, {}) outside the service area",
                p.x, p.y
            )));
        }
        Ok(Self {
            point_count,
            spacing,
            offset,
            coords,
        })
    }

    pub fn with_policy(area: &ServiceArea, point_count: usize, policy: SpacingPolicy) -> Result<Self> {
        let spacing = policy.resolve(area, point_count)?;
        Self::centered(area, point_count, spacing)
    }

    pub fn len(&self) -> usize {
        self.point_count
    }

    pub fn is_empty(&self) -> bool {
        self.point_count == 0
    }

    /// Placed position of 0-based column `col`.
    pub fn point(&self, col: usize) -> Point2 {
        self.coords[col]
    }
}

/// Angles and delay of a transmit → point → receive path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BistaticGeometry {
    pub sin_tx: f64,
    pub sin_rx: f64,
    pub delay: f64,
}

pub fn bistatic_geometry(tx: &ApuDescriptor, rx: &ApuDescriptor, p: Point2) -> Result<BistaticGeometry> {
    let sin_tx = tx.sin_angle_to(p)?;
    let sin_rx = rx.sin_angle_to(p)?;
    let path = p.distance(tx.reference_point) + p.distance(rx.reference_point);
    Ok(BistaticGeometry {
        sin_tx,
        sin_rx,
        delay: path / SPEED_OF_LIGHT,
    })
}

/// One partition of the APUs into communication and sensing roles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub comm_set: Vec<usize>,
    pub sense_set: Vec<usize>,
}

impl RoleAssignment {
    pub fn from_sense_set(total_apus: usize, mut sense_set: Vec<usize>) -> Result<Self> {
        sense_set.sort_unstable();
        sense_set.dedup();
        if sense_set.iter().any(|&s| s >= total_apus) {
            return Err(invalid("sensing APU index out of range"));
        }
        let comm_set: Vec<usize> = (0..total_apus).filter(|i| sense_set.binary_search(i).is_err()).collect();
        if sense_set.is_empty() || comm_set.is_empty() {
            return Err(invalid("both role sets must be nonempty"));
        }
        Ok(Self { comm_set, sense_set })
    }

    pub fn comm_count(&self) -> usize {
        self.comm_set.len()
    }

    pub fn sense_count(&self) -> usize {
        self.sense_set.len()
    }
}

/// All `C(total, S)` sensing-set choices in lexicographic order.
pub fn enumerate_configurations(total_apus: usize, sensing: usize) -> Result<Vec<RoleAssignment>> {
    if sensing == 0 || sensing >= total_apus {
        return Err(invalid(format!(
            "sensing count {sensing} must satisfy 1 <= S < {total_apus}"
        )));
    }
    (0..total_apus)
        .combinations(sensing)
        .map(|sense| RoleAssignment::from_sense_set(total_apus, sense))
        .collect()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, j| acc * (n - j) / (j + 1))
}
