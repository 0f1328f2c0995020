//! Uniform Cartesian grid with node classification and interface crossings.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Axis, Crossing, InterfaceGeometry, Side};
use crate::multipole::{MultipoleSite, Vec3};

/// Anything that can classify points and locate mesh-line crossings.
pub trait Interface: Sync {
    fn classify(&self, r: &Vec3) -> Side;
    fn find_crossing(&self, a: &Vec3, b: &Vec3) -> Result<Option<Crossing>>;
}

impl Interface for InterfaceGeometry {
    fn classify(&self, r: &Vec3) -> Side {
        InterfaceGeometry::classify(self, r)
    }

    fn find_crossing(&self, a: &Vec3, b: &Vec3) -> Result<Option<Crossing>> {
        InterfaceGeometry::find_crossing(self, a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    RegularInside,
    RegularOutside,
    IrregularInside,
    IrregularOutside,
    /// Outermost layer, carries Dirichlet data.
    Boundary,
}

/// Crossing between node `lo` and its `+axis` neighbor `hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCrossing {
    pub lo: usize,
    pub hi: usize,
    pub axis: Axis,
    pub point: Vec3,
    pub normal: Vec3,
    /// Position of the crossing in units of h measured from `lo`.
    pub t: f64,
    /// The mesh segment crosses Γ more than once (sub-grid feature).
    pub multiple: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub h: f64,
    pub padding: f64,
    pub node_budget: usize,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub origin: Vec3,
    pub h: f64,
    pub dims: [usize; 3],
    sides: Vec<Side>,
    crossings: Vec<GridCrossing>,
    crossing_index: HashMap<(usize, Axis), usize>,
}

impl Grid {
    /// Classifies every node of the box and finds all crossings. The two
    /// outermost node layers must lie outside the interface.
    pub fn new(origin: Vec3, h: f64, dims: [usize; 3], iface: &dyn Interface) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
        }
        if dims.iter().any(|&d| d < 5) {
            return Err(Error::Grid(format!("grid {dims:?} is too small; need at least 5 nodes per axis")));
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut grid = Grid {
            origin,
            h,
            dims,
            sides: Vec::new(),
            crossings: Vec::new(),
            crossing_index: HashMap::new(),
        };
        grid.sides = (0..n)
            .into_par_iter()
            .map(|i| iface.classify(&grid.position(i)))
            .collect();

        for i in 0..n {
            if grid.sides[i] == Side::Inside && grid.layer(i) < 2 {
                return Err(Error::Grid("solute reaches the edge of the grid box; increase padding".into()));
            }
        }

        let mut pairs = Vec::new();
        for i in 0..n {
            for axis in Axis::ALL {
                if let Some(j) = grid.neighbor(i, axis, 1) {
                    if grid.sides[i] != grid.sides[j] {
                        pairs.push((i, j, axis));
                    }
                }
            }
        }
        let found: Vec<GridCrossing> = pairs
            .par_iter()
            .map(|&(lo, hi, axis)| {
                let c = iface
                    .find_crossing(&grid.position(lo), &grid.position(hi))?
                    .ok_or_else(|| Error::Geometry("classification and crossing search disagree".into()))?;
                Ok(GridCrossing {
                    lo,
                    hi,
                    axis,
                    point: c.point,
                    normal: c.normal,
                    t: c.t,
                    multiple: c.multiple,
                })
            })
            .collect::<Result<_>>()?;
        grid.crossing_index = found.iter().enumerate().map(|(k, c)| ((c.lo, c.axis), k)).collect();
        grid.crossings = found;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.sides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn position(&self, idx: usize) -> Vec3 {
        let c = self.coords(idx);
        self.origin + Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.h
    }

    /// Node `delta` steps along `axis`, if inside the box.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: Axis, delta: isize) -> Option<usize> {
        let a = axis.index();
        let c = self.coords(idx)[a] as isize + delta;
        if c < 0 || c >= self.dims[a] as isize {
            return None;
        }
        let stride = match a {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        } as isize;
        Some((idx as isize + delta * stride) as usize)
    }

    /// Distance in nodes to the nearest box face.
    pub fn layer(&self, idx: usize) -> usize {
        let c = self.coords(idx);
        (0..3).map(|a| c[a].min(self.dims[a] - 1 - c[a])).min().unwrap()
    }

    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        self.layer(idx) == 0
    }

    #[inline]
    pub fn side(&self, idx: usize) -> Side {
        self.sides[idx]
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn kind(&self, idx: usize) -> NodeKind {
        if self.is_boundary(idx) {
            return NodeKind::Boundary;
        }
        let s = self.sides[idx];
        let irregular = Axis::ALL.iter().any(|&a| {
            [-1, 1]
                .iter()
                .any(|&d| self.neighbor(idx, a, d).is_some_and(|m| self.sides[m] != s))
        });
        match (s, irregular) {
            (Side::Inside, false) => NodeKind::RegularInside,
            (Side::Outside, false) => NodeKind::RegularOutside,
            (Side::Inside, true) => NodeKind::IrregularInside,
            (Side::Outside, true) => NodeKind::IrregularOutside,
        }
    }

    pub fn crossings(&self) -> &[GridCrossing] {
        &self.crossings
    }

    /// Crossing on the segment from `idx` one step along `axis` in direction `delta`.
    pub fn crossing_between(&self, idx: usize, axis: Axis, delta: isize) -> Option<usize> {
        let lo = if delta > 0 { idx } else { self.neighbor(idx, axis, -1)? };
        self.crossing_index.get(&(lo, axis)).copied()
    }

    pub fn count_kinds(&self) -> HashMap<&'static str, usize> {
        let mut out = HashMap::new();
        for i in 0..self.len() {
            let key = match self.kind(i) {
                NodeKind::RegularInside => "regular_inside",
                NodeKind::RegularOutside => "regular_outside",
                NodeKind::IrregularInside => "irregular_inside",
                NodeKind::IrregularOutside => "irregular_outside",
                NodeKind::Boundary => "boundary",
            };
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    /// Nodes of the cube `[floor(x/h) - below, floor(x/h) + above]` per axis,
    /// clipped to the box.
    pub fn block_around(&self, r: &Vec3, below: isize, above: isize) -> Vec<usize> {
        let rel = (r - self.origin) / self.h;
        let base = [rel.x.floor() as isize, rel.y.floor() as isize, rel.z.floor() as isize];
        let range = |a: usize| {
            let lo = (base[a] - below).max(0);
            let hi = (base[a] + above).min(self.dims[a] as isize - 1);
            lo..=hi
        };
        let mut out = Vec::new();
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    out.push(self.index(i as usize, j as usize, k as usize));
                }
            }
        }
        out
    }
}

/// Builds the grid around a molecule: nodes at integer multiples of `h`
/// covering the solute bounding box plus padding.
pub fn build_grid(geometry: &InterfaceGeometry, sites: &[MultipoleSite], spec: &GridSpec) -> Result<Grid> {
    let h = spec.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("grid spacing must be positive, got {h}")));
    }
    for (n, s) in sites.iter().enumerate() {
        if geometry.level_set(&s.position) >= 0.0 {
            return Err(Error::Geometry(format!("site {} lies outside the solute surface", n + 1)));
        }
    }
    let (bmin, bmax) = geometry.bounds();
    let lo = (bmin.add_scalar(-spec.padding) / h).map(f64::floor);
    let hi = (bmax.add_scalar(spec.padding) / h).map(f64::ceil);
    let dims = [0, 1, 2].map(|a| (hi[a] - lo[a]).round() as usize + 1);
    let total = dims.iter().map(|&d| d as f64).product::<f64>();
    if total > spec.node_budget as f64 {
        let suggested = h * (total / spec.node_budget as f64).cbrt();
        return Err(Error::Grid(format!(
            "grid of {} x {} x {} nodes exceeds the budget of {}; try h >= {:.3}",
            dims[0], dims[1], dims[2], spec.node_budget, suggested
        )));
    }
    let grid = Grid::new(lo * h, h, dims, geometry)?;

    if !grid.sides.contains(&Side::Inside) {
        return Err(Error::Geometry("no grid node lies inside the solute; refine the grid".into()));
    }
    for (n, s) in sites.iter().enumerate() {
        let block = grid.block_around(&s.position, 1, 2);
        if !block.iter().any(|&i| grid.side(i) == Side::Inside) {
            return Err(Error::Geometry(format!(
                "site {} has no nearby grid node inside the solute; refine the grid",
                n + 1
            )));
        }
    }
    log::info!(
        "grid {}x{}x{} at h = {}, {} crossings",
        dims[0],
        dims[1],
        dims[2],
        h,
        grid.crossings.len()
    );
    Ok(grid)
}
