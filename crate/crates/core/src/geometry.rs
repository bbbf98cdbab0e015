//! Discrete domains with a compactly contained refuge.
//!
//! Nodes sit on the vertices of a piecewise-uniform tensor mesh whose grid
//! lines include the refuge edges, so the refuge boundary passes through
//! nodes. Each node owns the dual cell made of the adjacent mesh-cell corners
//! (trapezoid weights); a node on the refuge boundary owns part habitat and
//! part refuge, recorded as its habitat fraction. Region measures are exact at
//! every resolution.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the domain a field or node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// The whole domain, where the prey lives.
    Domain,
    /// The closure of the complement of the refuge, where predators live.
    Habitat,
    /// Nodes strictly inside the protection zone.
    Refuge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DomainSpec {
    /// A circle of given circumference; the refuge is an arc starting at
    /// `refuge_start` (an angle in radians) with arc length `refuge_length`.
    #[serde(rename = "ring1d")]
    Ring {
        circumference: f64,
        #[serde(default)]
        refuge_start: f64,
        refuge_length: f64,
        nodes: usize,
    },
    /// The box `outer_x × outer_y` with the rectangular refuge `hole_x × hole_y`.
    #[serde(rename = "rect2d_with_hole")]
    RectWithHole {
        outer_x: [f64; 2],
        outer_y: [f64; 2],
        hole_x: [f64; 2],
        hole_y: [f64; 2],
        nx: usize,
        ny: usize,
    },
}

impl DomainSpec {
    /// Circle of circumference 2π whose refuge is the half arc [0, π], 256 nodes.
    pub fn ring_fixture() -> Self {
        Self::ring(256)
    }

    pub fn ring(nodes: usize) -> Self {
        DomainSpec::Ring {
            circumference: 2.0 * PI,
            refuge_start: 0.0,
            refuge_length: PI,
            nodes,
        }
    }

    /// (0,2)×(0,1) with the refuge (0.8,1.2)×(0.4,0.6), 128×64 nodes.
    pub fn rect_fixture() -> Self {
        Self::rect(128, 64)
    }

    pub fn rect(nx: usize, ny: usize) -> Self {
        DomainSpec::RectWithHole {
            outer_x: [0.0, 2.0],
            outer_y: [0.0, 1.0],
            hole_x: [0.8, 1.2],
            hole_y: [0.4, 0.6],
            nx,
            ny,
        }
    }

    /// Same geometry with every mesh interval split into `factor` pieces.
    pub fn refined(&self, factor: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            DomainSpec::Ring { nodes, .. } => *nodes *= factor,
            DomainSpec::RectWithHole { nx, ny, .. } => {
                *nx = (*nx - 1) * factor + 1;
                *ny = (*ny - 1) * factor + 1;
            }
        }
        out
    }
}

/// Flux coupling between two nodes through the part of their dual-cell face
/// that lies in one mesh cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    /// `face measure / node distance`.
    pub coef: f64,
    /// Which side of the refuge boundary the face piece lies on.
    pub side: Region,
}

#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    spec: DomainSpec,
    dim: usize,
    coords: Vec<[f64; 2]>,
    labels: Vec<Region>,
    weights: Vec<f64>,
    fraction: Vec<f64>,
    links: Vec<Link>,
    interface: Vec<usize>,
    spacing: Vec<f64>,
    habitat_nodes: Vec<usize>,
    refuge_nodes: Vec<usize>,
    all_nodes: Vec<usize>,
    local: Vec<usize>,
    band_order: Vec<usize>,
    bbox: [[f64; 2]; 2],
    #[serde(skip)]
    pub(crate) dirichlet_cache: OnceLock<f64>,
}

/// Split `total` intervals over segments proportionally to their lengths
/// (largest-remainder rounding, ties broken by segment order).
fn split_counts(lengths: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    let ideal: Vec<f64> = lengths.iter().map(|l| total as f64 * l / sum).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = ideal[i] - ideal[i].floor();
        let fj = ideal[j] - ideal[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for &k in order.iter().take(total - assigned) {
        counts[k] += 1;
    }
    counts
}

/// Interval widths along one axis split at `[start, hole_lo, hole_hi, end]`,
/// with a flag marking the intervals inside the hole.
fn axis_intervals(breaks: [f64; 4], total: usize) -> Result<Vec<(f64, bool)>> {
    let lengths: Vec<f64> = breaks.windows(2).map(|w| w[1] - w[0]).collect();
    // Round the outer segments and give the remainder to the hole, so that
    // doubling `total` doubles every segment whenever rounding allows.
    let sum: f64 = lengths.iter().sum();
    let outer = |l: f64| (total as f64 * l / sum).round() as usize;
    let (first, last) = (outer(lengths[0]), outer(lengths[2]));
    let counts = [first, total.saturating_sub(first + last), last];
    if counts[1] < 2 {
        return Err(Error::EmptyRefuge);
    }
    if counts[0] == 0 || counts[2] == 0 {
        return Err(Error::RefugeTouchesBoundary(
            "no habitat interval between the refuge and the boundary at this resolution".into(),
        ));
    }
    let mut cells = Vec::with_capacity(total);
    for (seg, (&len, &count)) in lengths.iter().zip(&counts).enumerate() {
        for _ in 0..count {
            cells.push((len / count as f64, seg == 1));
        }
    }
    Ok(cells)
}

impl Grid {
    pub fn build(spec: &DomainSpec) -> Result<Self> {
        let grid = match spec {
            DomainSpec::Ring {
                circumference,
                refuge_start,
                refuge_length,
                nodes,
            } => Self::build_ring(spec, *circumference, *refuge_start, *refuge_length, *nodes)?,
            DomainSpec::RectWithHole {
                outer_x,
                outer_y,
                hole_x,
                hole_y,
                nx,
                ny,
            } => Self::build_rect(spec, *outer_x, *outer_y, *hole_x, *hole_y, *nx, *ny)?,
        };
        if grid.refuge_nodes.is_empty() {
            return Err(Error::EmptyRefuge);
        }
        if grid.interface.is_empty() {
            return Err(Error::RefugeTouchesBoundary("no interface nodes".into()));
        }
        if !grid.habitat_connected() {
            return Err(Error::DisconnectedComplement);
        }
        Ok(grid)
    }

    fn build_ring(
        spec: &DomainSpec,
        circumference: f64,
        start_angle: f64,
        arc: f64,
        n: usize,
    ) -> Result<Self> {
        if !(circumference > 0.0) || !circumference.is_finite() {
            return Err(Error::BadParameter(format!("circumference {circumference}")));
        }
        if n < 8 {
            return Err(Error::BadParameter(format!("ring needs at least 8 nodes, got {n}")));
        }
        if !(arc > 0.0) {
            return Err(Error::EmptyRefuge);
        }
        if arc >= circumference {
            return Err(Error::RefugeTouchesBoundary(format!(
                "refuge arc {arc} is not shorter than the circumference {circumference}"
            )));
        }
        // n nodes on a circle bound n intervals.
        let counts = split_counts(&[arc, circumference - arc], n);
        if counts[0] < 2 {
            return Err(Error::EmptyRefuge);
        }
        if counts[1] < 2 {
            return Err(Error::RefugeTouchesBoundary(
                "refuge leaves no habitat node at this resolution".into(),
            ));
        }
        let h_refuge = arc / counts[0] as f64;
        let h_habitat = (circumference - arc) / counts[1] as f64;
        let origin = start_angle * circumference / (2.0 * PI);
        // Interval k joins node k and node k+1 (mod n); the first counts[0]
        // intervals form the refuge arc.
        let interval = |k: usize| {
            if k < counts[0] {
                (h_refuge, Region::Refuge)
            } else {
                (h_habitat, Region::Habitat)
            }
        };
        let mut coords = Vec::with_capacity(n);
        let mut weights = vec![0.0; n];
        let mut habitat_weight = vec![0.0; n];
        let mut links = Vec::with_capacity(n);
        let mut offset = 0.0;
        for k in 0..n {
            coords.push([(origin + offset).rem_euclid(circumference), 0.0]);
            let (h, side) = interval(k);
            offset += h;
            let j = (k + 1) % n;
            for node in [k, j] {
                weights[node] += 0.5 * h;
                if side == Region::Habitat {
                    habitat_weight[node] += 0.5 * h;
                }
            }
            links.push(Link {
                a: k,
                b: j,
                coef: 1.0 / h,
                side,
            });
        }
        // Zig-zag traversal keeps every cycle edge within bandwidth 2.
        let mut band_order = Vec::with_capacity(n);
        let (mut lo, mut hi) = (0usize, n - 1);
        while lo <= hi {
            band_order.push(lo);
            if hi != lo {
                band_order.push(hi);
            }
            lo += 1;
            hi -= 1;
        }
        Ok(Self::assemble(
            spec.clone(),
            1,
            coords,
            weights,
            habitat_weight,
            links,
            vec![h_refuge.max(h_habitat)],
            band_order,
            [[0.0, circumference], [0.0, 0.0]],
        ))
    }

    fn build_rect(
        spec: &DomainSpec,
        outer_x: [f64; 2],
        outer_y: [f64; 2],
        hole_x: [f64; 2],
        hole_y: [f64; 2],
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        if nx < 5 || ny < 5 {
            return Err(Error::BadParameter(format!(
                "rectangle needs at least 5 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(outer_x[0] < outer_x[1] && outer_y[0] < outer_y[1]) {
            return Err(Error::BadParameter("degenerate outer box".into()));
        }
        if !(hole_x[0] < hole_x[1] && hole_y[0] < hole_y[1]) {
            return Err(Error::EmptyRefuge);
        }
        let inside = outer_x[0] < hole_x[0]
            && hole_x[1] < outer_x[1]
            && outer_y[0] < hole_y[0]
            && hole_y[1] < outer_y[1];
        if !inside {
            return Err(Error::RefugeTouchesBoundary(format!(
                "hole {hole_x:?}x{hole_y:?} not strictly inside {outer_x:?}x{outer_y:?}"
            )));
        }
        let xs = axis_intervals([outer_x[0], hole_x[0], hole_x[1], outer_x[1]], nx - 1)?;
        let ys = axis_intervals([outer_y[0], hole_y[0], hole_y[1], outer_y[1]], ny - 1)?;
        // The shorter axis varies fastest so the natural order is banded.
        let y_fast = ny <= nx;
        let index = |ix: usize, iy: usize| if y_fast { ix * ny + iy } else { iy * nx + ix };
        let n = nx * ny;
        let mut coords = vec![[0.0; 2]; n];
        let mut x = outer_x[0];
        for ix in 0..nx {
            let mut y = outer_y[0];
            for iy in 0..ny {
                coords[index(ix, iy)] = [x, y];
                if iy + 1 < ny {
                    y += ys[iy].0;
                }
            }
            if ix + 1 < nx {
                x += xs[ix].0;
            }
        }
        // Snap the last grid lines onto the box to avoid accumulated round-off.
        for iy in 0..ny {
            coords[index(nx - 1, iy)][0] = outer_x[1];
        }
        for ix in 0..nx {
            coords[index(ix, ny - 1)][1] = outer_y[1];
        }
        let mut weights = vec![0.0; n];
        let mut habitat_weight = vec![0.0; n];
        let mut links = Vec::with_capacity(4 * n);
        for (ix, &(dx, in_x)) in xs.iter().enumerate() {
            for (iy, &(dy, in_y)) in ys.iter().enumerate() {
                let side = if in_x && in_y { Region::Refuge } else { Region::Habitat };
                let corners = [
                    index(ix, iy),
                    index(ix + 1, iy),
                    index(ix, iy + 1),
                    index(ix + 1, iy + 1),
                ];
                for &c in &corners {
                    weights[c] += 0.25 * dx * dy;
                    if side == Region::Habitat {
                        habitat_weight[c] += 0.25 * dx * dy;
                    }
                }
                let along_x = 0.5 * dy / dx;
                let along_y = 0.5 * dx / dy;
                for (a, b, coef) in [
                    (corners[0], corners[1], along_x),
                    (corners[2], corners[3], along_x),
                    (corners[0], corners[2], along_y),
                    (corners[1], corners[3], along_y),
                ] {
                    links.push(Link { a, b, coef, side });
                }
            }
        }
        let hx = xs.iter().map(|c| c.0).fold(0.0, f64::max);
        let hy = ys.iter().map(|c| c.0).fold(0.0, f64::max);
        Ok(Self::assemble(
            spec.clone(),
            2,
            coords,
            weights,
            habitat_weight,
            links,
            vec![hx, hy],
            (0..n).collect(),
            [outer_x, outer_y],
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        spec: DomainSpec,
        dim: usize,
        coords: Vec<[f64; 2]>,
        weights: Vec<f64>,
        habitat_weight: Vec<f64>,
        links: Vec<Link>,
        spacing: Vec<f64>,
        band_order: Vec<usize>,
        bbox: [[f64; 2]; 2],
    ) -> Self {
        let n = coords.len();
        let fraction: Vec<f64> = habitat_weight
            .iter()
            .zip(&weights)
            .map(|(h, w)| (h / w).clamp(0.0, 1.0))
            .collect();
        let mut labels = Vec::with_capacity(n);
        let mut habitat_nodes = Vec::new();
        let mut refuge_nodes = Vec::new();
        let mut interface = Vec::new();
        let mut local = vec![0; n];
        for (i, &theta) in fraction.iter().enumerate() {
            if theta > 0.0 {
                local[i] = habitat_nodes.len();
                habitat_nodes.push(i);
                labels.push(Region::Habitat);
                if theta < 1.0 {
                    interface.push(i);
                }
            } else {
                local[i] = refuge_nodes.len();
                refuge_nodes.push(i);
                labels.push(Region::Refuge);
            }
        }
        Grid {
            spec,
            dim,
            coords,
            labels,
            weights,
            fraction,
            links,
            interface,
            spacing,
            habitat_nodes,
            refuge_nodes,
            all_nodes: (0..n).collect(),
            local,
            band_order,
            bbox,
            dirichlet_cache: OnceLock::new(),
        }
    }

    fn habitat_connected(&self) -> bool {
        let Some(&start) = self.habitat_nodes.first() else {
            return false;
        };
        let n = self.len();
        let mut adjacency = vec![Vec::new(); n];
        for l in self.links.iter().filter(|l| l.side == Region::Habitat) {
            adjacency[l.a].push(l.b);
            adjacency[l.b].push(l.a);
        }
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.habitat_nodes.len()
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes in the whole domain.
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// `Habitat` for nodes whose dual cell meets the habitat, `Refuge` for
    /// nodes strictly inside the refuge.
    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> Region {
        self.labels[node]
    }

    /// Dual-cell volumes (trapezoid weights).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Share of each dual cell lying in the habitat: 1 away from the refuge,
    /// 0 strictly inside it, in between on its boundary.
    pub fn habitat_fraction(&self) -> &[f64] {
        &self.fraction
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Nodes on the refuge boundary.
    pub fn interface(&self) -> &[usize] {
        &self.interface
    }

    /// Largest mesh interval per axis.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> [[f64; 2]; 2] {
        self.bbox
    }

    /// Global node indices of a region, in ascending order.
    pub fn nodes(&self, region: Region) -> &[usize] {
        match region {
            Region::Domain => &self.all_nodes,
            Region::Habitat => &self.habitat_nodes,
            Region::Refuge => &self.refuge_nodes,
        }
    }

    pub fn region_len(&self, region: Region) -> usize {
        self.nodes(region).len()
    }

    /// Position of a global node inside `region`'s value vector.
    pub fn local_index(&self, region: Region, node: usize) -> Option<usize> {
        match region {
            Region::Domain => Some(node),
            r if self.labels[node] == r => Some(self.local[node]),
            _ => None,
        }
    }

    /// Quadrature weights of a region's nodes. Habitat weights count only the
    /// habitat share of each dual cell. Refuge weights are full dual cells of
    /// interior refuge nodes, exact for fields vanishing on the refuge boundary.
    pub fn region_weights(&self, region: Region) -> Vec<f64> {
        match region {
            Region::Habitat => self
                .habitat_nodes
                .iter()
                .map(|&i| self.weights[i] * self.fraction[i])
                .collect(),
            _ => self.nodes(region).iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Node ordering (local to `region`) with small matrix bandwidth.
    pub fn band_order(&self, region: Region) -> Vec<usize> {
        self.band_order
            .iter()
            .filter_map(|&i| self.local_index(region, i))
            .collect()
    }

    /// Ordering for a stacked unknown `[Domain values; Habitat values]`
    /// that interleaves the two fields node by node.
    pub fn coupled_order(&self) -> Vec<usize> {
        let n = self.len();
        let mut order = Vec::with_capacity(n + self.habitat_nodes.len());
        for &i in &self.band_order {
            order.push(i);
            if self.labels[i] == Region::Habitat {
                order.push(n + self.local[i]);
            }
        }
        order
    }

    /// `(|Ω|, |Ω₀|, |Ω₁|)`.
    pub fn measures(&self) -> (f64, f64, f64) {
        let mut all = 0.0;
        let mut habitat = 0.0;
        for (w, theta) in self.weights.iter().zip(&self.fraction) {
            all += w;
            habitat += w * theta;
        }
        let refuge: f64 = self
            .weights
            .iter()
            .zip(&self.fraction)
            .map(|(w, theta)| w * (1.0 - theta))
            .sum();
        (all, refuge, habitat)
    }

    pub fn integrate(&self, f: &Field) -> f64 {
        self.region_weights(f.region)
            .iter()
            .zip(&f.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Weighted L² inner product of two fields on the same region.
    pub fn inner(&self, f: &Field, g: &Field) -> Result<f64> {
        f.check_same(g)?;
        Ok(self
            .region_weights(f.region)
            .iter()
            .zip(f.values.iter().zip(&g.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    pub fn l2_norm(&self, f: &Field) -> f64 {
        self.inner(f, f).unwrap().sqrt()
    }

    pub fn mean(&self, f: &Field) -> f64 {
        let measure: f64 = self.region_weights(f.region).iter().sum();
        self.integrate(f) / measure
    }

    /// The habitat indicator as a field on the whole domain, sampled as the
    /// habitat fraction of each dual cell.
    pub fn habitat_indicator(&self) -> Field {
        Field::from_values(Region::Domain, self.fraction.clone())
    }

    pub fn refuge_indicator(&self) -> Field {
        Field::from_values(Region::Domain, self.fraction.iter().map(|t| 1.0 - t).collect())
    }
}

/// Scalar samples on the nodes of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    region: Region,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(region: Region, values: Vec<f64>) -> Self {
        Field { region, values }
    }

    /// Checked constructor: the value count must match the region.
    pub fn new(grid: &Grid, region: Region, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.region_len(region) {
            return Err(Error::BadParameter(format!(
                "{} values for a region of {} nodes",
                values.len(),
                grid.region_len(region)
            )));
        }
        Ok(Field { region, values })
    }

    pub fn constant(grid: &Grid, region: Region, value: f64) -> Self {
        Field {
            region,
            values: vec![value; grid.region_len(region)],
        }
    }

    pub fn zeros(grid: &Grid, region: Region) -> Self {
        Self::constant(grid, region, 0.0)
    }

    pub fn from_fn(grid: &Grid, region: Region, f: impl Fn([f64; 2]) -> f64) -> Self {
        Field {
            region,
            values: grid.nodes(region).iter().map(|&i| f(grid.coords[i])).collect(),
        }
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn expect_region(&self, region: Region) -> Result<()> {
        if self.region != region {
            return Err(Error::RegionMismatch {
                expected: region,
                found: self.region,
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &Field) -> Result<()> {
        other.expect_region(self.region)?;
        if self.values.len() != other.values.len() {
            return Err(Error::BadParameter("field lengths differ".into()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            region: self.region,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same(other)?;
        Ok(Field {
            region: self.region,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dist_inf(&self, other: &Field) -> Result<f64> {
        Ok(self.sub(other)?.norm_inf())
    }

    /// Restrict a domain field to the habitat or refuge nodes.
    pub fn restrict(&self, grid: &Grid, region: Region) -> Result<Field> {
        self.expect_region(Region::Domain)?;
        Ok(Field {
            region,
            values: grid.nodes(region).iter().map(|&i| self.values[i]).collect(),
        })
    }

    /// Extend a habitat or refuge field to the whole domain by zero.
    pub fn extend_by_zero(&self, grid: &Grid) -> Field {
        let mut values = vec![0.0; grid.len()];
        for (&i, &v) in grid.nodes(self.region).iter().zip(&self.values) {
            values[i] = v;
        }
        Field {
            region: Region::Domain,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol * (1.0 + b.abs()), "{a} vs {b}");
    }

    #[test]
    fn ring_fixture_measures() {
        let g = Grid::build(&DomainSpec::ring_fixture()).unwrap();
        let (all, refuge, habitat) = g.measures();
        assert_close(all, 2.0 * PI, 1e-13);
        assert_close(refuge, PI, 1e-13);
        assert_close(habitat, PI, 1e-13);
        assert!(!g.interface().is_empty());
        assert_eq!(g.interface().len(), 2);
    }

    #[test]
    fn rect_fixture_measures_are_resolution_independent() {
        for spec in [DomainSpec::rect_fixture(), DomainSpec::rect(256, 128)] {
            let g = Grid::build(&spec).unwrap();
            let (all, refuge, habitat) = g.measures();
            assert_close(all, 2.0, 1e-12);
            assert_close(refuge, 0.08, 1e-12);
            assert_close(habitat, 1.92, 1e-12);
            assert_close(refuge + habitat, all, 1e-12);
        }
    }

    #[test]
    fn full_arc_refuge_is_rejected() {
        let spec = DomainSpec::Ring {
            circumference: 2.0 * PI,
            refuge_start: 0.0,
            refuge_length: 2.0 * PI,
            nodes: 64,
        };
        assert!(matches!(Grid::build(&spec), Err(Error::RefugeTouchesBoundary(_))));
    }

    #[test]
    fn hole_touching_boundary_is_rejected() {
        let spec = DomainSpec::RectWithHole {
            outer_x: [0.0, 2.0],
            outer_y: [0.0, 1.0],
            hole_x: [0.0, 1.2],
            hole_y: [0.4, 0.6],
            nx: 32,
            ny: 16,
        };
        assert!(matches!(Grid::build(&spec), Err(Error::RefugeTouchesBoundary(_))));
    }

    #[test]
    fn coarse_resolution_rejected() {
        assert!(matches!(
            Grid::build(&DomainSpec::ring(4)),
            Err(Error::BadParameter(_))
        ));
    }

    #[test]
    fn integrate_indicator_fields() {
        let ring = Grid::build(&DomainSpec::ring_fixture()).unwrap();
        assert_close(ring.integrate(&Field::constant(&ring, Region::Domain, 1.0)), 2.0 * PI, 1e-13);
        assert_close(ring.integrate(&Field::constant(&ring, Region::Habitat, 1.0)), PI, 1e-13);
        let rect = Grid::build(&DomainSpec::rect_fixture()).unwrap();
        assert_close(rect.integrate(&rect.habitat_indicator()), 1.92, 1e-12);
    }

    #[test]
    fn refuge_arc_position_follows_start_angle() {
        let spec = DomainSpec::Ring {
            circumference: 2.0 * PI,
            refuge_start: PI / 2.0,
            refuge_length: PI / 2.0,
            nodes: 64,
        };
        let g = Grid::build(&spec).unwrap();
        for &i in g.nodes(Region::Refuge) {
            let x = g.coords()[i][0];
            assert!(x > PI / 2.0 && x < PI, "{x}");
        }
    }

    #[test]
    fn band_orders_are_permutations() {
        for spec in [DomainSpec::ring(33), DomainSpec::rect(20, 16)] {
            let g = Grid::build(&spec).unwrap();
            for region in [Region::Domain, Region::Habitat, Region::Refuge] {
                let mut order = g.band_order(region);
                order.sort();
                assert_eq!(order, (0..g.region_len(region)).collect::<Vec<_>>());
            }
            let mut coupled = g.coupled_order();
            coupled.sort();
            assert_eq!(coupled.len(), g.len() + g.region_len(Region::Habitat));
            assert_eq!(coupled, (0..coupled.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn region_mismatch_is_reported() {
        let g = Grid::build(&DomainSpec::ring(32)).unwrap();
        let a = Field::constant(&g, Region::Domain, 1.0);
        let b = Field::constant(&g, Region::Habitat, 1.0);
        assert!(matches!(a.add(&b), Err(Error::RegionMismatch { .. })));
    }

    #[test]
    fn restrict_and_extend_round_trip() {
        let g = Grid::build(&DomainSpec::rect(16, 16)).unwrap();
        let f = Field::from_fn(&g, Region::Domain, |x| x[0] + 2.0 * x[1]);
        let h = f.restrict(&g, Region::Habitat).unwrap();
        let back = h.extend_by_zero(&g);
        for i in 0..g.len() {
            let expected = if g.label(i) == Region::Habitat { f.values()[i] } else { 0.0 };
            assert_eq!(back.values()[i], expected);
        }
    }

    #[test]
    fn spec_serde_rejects_unknown_keys() {
        let ok: DomainSpec = serde_json::from_str(
            r#"{"kind":"ring1d","circumference":6.0,"refuge_length":3.0,"nodes":64}"#,
        )
        .unwrap();
        assert!(matches!(ok, DomainSpec::Ring { nodes: 64, .. }));
        let bad = serde_json::from_str::<DomainSpec>(
            r#"{"kind":"ring1d","circumference":6.0,"refuge_length":3.0,"nodes":64,"extra":1}"#,
        );
        assert!(bad.is_err());
    }

    proptest::proptest! {
        #[test]
        fn partition_of_unity(seed in 0u64..1000) {
            let g = Grid::build(&DomainSpec::rect(24, 16)).unwrap();
            let f = Field::from_fn(&g, Region::Domain, |x| ((seed as f64 + 1.0) * x[0]).sin() + x[1] * x[1]);
            let on_habitat = f.mul(&g.habitat_indicator()).unwrap();
            let on_refuge = f.mul(&g.refuge_indicator()).unwrap();
            let total = g.integrate(&f);
            let split = g.integrate(&on_habitat) + g.integrate(&on_refuge);
            proptest::prop_assert!((total - split).abs() <= 1e-13 * (1.0 + total.abs()));
        }
    }
}
