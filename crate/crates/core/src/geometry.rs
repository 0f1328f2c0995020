//! Dielectric interface geometry: side classification, mesh-line crossings
//! and outward normals.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::multipole::Vec3;

/// Nodes within this distance of the surface count as inside.
pub const ON_INTERFACE_EPS: f64 = 1e-12;
/// Bisection stops once the bracket is shorter than this (Å).
pub const ROOT_TOL: f64 = 1e-11;
/// Owner-sphere ties closer than this are resolved by nudging.
pub const SEAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Sphere { center, radius }
    }

    #[inline]
    pub fn distance(&self, r: &Vec3) -> f64 {
        (r - self.center).norm() - self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i]
    }
}

/// Intersection of a mesh segment with the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub point: Vec3,
    pub axis: Axis,
    /// Outward unit normal (inside to outside).
    pub normal: Vec3,
    /// Fraction of the way from the first to the second segment endpoint.
    pub t: f64,
    /// The segment crosses Γ more than once; this is the crossing
    /// nearest the inside endpoint.
    pub multiple: bool,
}

#[derive(Debug, Clone)]
pub enum Shape {
    AnalyticSphere(Sphere),
    SphereUnion(Vec<Sphere>),
}

#[derive(Debug, Clone)]
struct CellList {
    cell: f64,
    bins: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl CellList {
    fn new(spheres: &[Sphere], cell: f64) -> Self {
        let mut bins: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, s) in spheres.iter().enumerate() {
            bins.entry(Self::key(&s.center, cell)).or_default().push(i);
        }
        CellList { cell, bins }
    }

    fn key(r: &Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (r.x / cell).floor() as i64,
            (r.y / cell).floor() as i64,
            (r.z / cell).floor() as i64,
        )
    }

    fn for_each_near(&self, r: &Vec3, mut f: impl FnMut(usize)) {
        let (i, j, k) = Self::key(r, self.cell);
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    if let Some(list) = self.bins.get(&(i + di, j + dj, k + dk)) {
                        list.iter().for_each(|&s| f(s));
                    }
                }
            }
        }
    }
}

/// Interface Γ separating the solute (negative level set) from the solvent.
#[derive(Debug, Clone)]
pub struct InterfaceGeometry {
    shape: Shape,
    spheres: Vec<Sphere>,
    max_radius: f64,
    cells: Option<CellList>,
}

impl InterfaceGeometry {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        let s = Sphere::new(center, radius);
        check_sphere(&s)?;
        Ok(InterfaceGeometry {
            shape: Shape::AnalyticSphere(s),
            spheres: vec![s],
            max_radius: radius,
            cells: None,
        })
    }

    pub fn union(spheres: Vec<Sphere>) -> Result<Self> {
        if spheres.is_empty() {
            return Err(Error::Geometry("sphere union needs at least one sphere".into()));
        }
        spheres.iter().try_for_each(check_sphere)?;
        let max_radius = spheres.iter().map(|s| s.radius).fold(0.0, f64::max);
        let cells = CellList::new(&spheres, 2.0 * max_radius);
        Ok(InterfaceGeometry {
            shape: Shape::SphereUnion(spheres.clone()),
            spheres,
            max_radius,
            cells: Some(cells),
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    /// Axis-aligned bounding box of the solute.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for s in &self.spheres {
            lo = lo.inf(&s.center.add_scalar(-s.radius));
            hi = hi.sup(&s.center.add_scalar(s.radius));
        }
        (lo, hi)
    }

    /// Signed distance-like function, negative inside. For unions this is
    /// `min(min_k(|r - c_k| - r_k), max_radius)`, exact wherever it is
    /// below `max_radius`.
    pub fn level_set(&self, r: &Vec3) -> f64 {
        match (&self.shape, &self.cells) {
            (Shape::AnalyticSphere(s), _) => s.distance(r),
            (Shape::SphereUnion(spheres), Some(cells)) => {
                let mut best = self.max_radius;
                cells.for_each_near(r, |i| best = best.min(spheres[i].distance(r)));
                best
            }
            (Shape::SphereUnion(_), None) => unreachable!("union without cell list"),
        }
    }

    pub fn classify(&self, r: &Vec3) -> Side {
        if self.level_set(r) < ON_INTERFACE_EPS {
            Side::Inside
        } else {
            Side::Outside
        }
    }

    /// Best and second-best sphere distances at `r`, lowest index on ties.
    fn owner(&self, r: &Vec3) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut second = f64::INFINITY;
        let mut visit = |i: usize| {
            let d = self.spheres[i].distance(r);
            match best {
                Some((bi, bd)) if d > bd || (d == bd && i > bi) => second = second.min(d),
                Some((_, bd)) => {
                    second = second.min(bd);
                    best = Some((i, d));
                }
                None => best = Some((i, d)),
            }
        };
        match &self.cells {
            None => visit(0),
            Some(cells) => cells.for_each_near(r, &mut visit),
        }
        best.map(|(i, d)| (i, d, second))
    }

    fn owner_normal(&self, owner: usize, p: &Vec3) -> Result<Vec3> {
        let v = p - self.spheres[owner].center;
        let n = v.norm();
        if n < 1e-14 {
            return Err(Error::Geometry(format!("surface normal undefined at ({}, {}, {})", p.x, p.y, p.z)));
        }
        Ok(v / n)
    }

    /// Outward unit normal at a point on the interface.
    pub fn surface_normal(&self, p: &Vec3) -> Result<Vec3> {
        let ls = self.level_set(p);
        if ls.abs() >= 1e-8 {
            return Err(Error::Geometry(format!("point is not on the interface (level set {ls:e})")));
        }
        let (owner, _, _) = self
            .owner(p)
            .ok_or_else(|| Error::Geometry("no sphere near surface point".into()))?;
        self.owner_normal(owner, p)
    }

    /// Interface crossing on the segment `a`–`b`, if the endpoints lie on
    /// opposite sides. Segments must be axis aligned.
    pub fn find_crossing(&self, a: &Vec3, b: &Vec3) -> Result<Option<Crossing>> {
        let side_a = self.classify(a);
        if side_a == self.classify(b) {
            return Ok(None);
        }
        let delta = b - a;
        let axis = Axis::from_index(delta.iamax());
        let at = |t: f64| a + delta * t;

        const SAMPLES: usize = 8;
        // sub-intervals [k-1, k]/SAMPLES whose ends differ
        let mut changes = Vec::new();
        let mut prev = side_a;
        for k in 1..=SAMPLES {
            let side = self.classify(&at(k as f64 / SAMPLES as f64));
            if side != prev {
                changes.push(k);
                prev = side;
            }
        }
        let multiple = changes.len() != 1;
        let k = if side_a == Side::Inside { changes[0] } else { changes[changes.len() - 1] };
        if multiple {
            log::debug!(
                "segment from ({:.4}, {:.4}, {:.4}) along {:?} crosses the interface {} times; using the crossing nearest the inside node",
                a.x, a.y, a.z, axis, changes.len()
            );
        }

        let len = delta.norm();
        let (mut lo, mut hi) = ((k - 1) as f64 / SAMPLES as f64, k as f64 / SAMPLES as f64);
        let side_lo = self.classify(&at(lo));
        while (hi - lo) * len > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            if self.classify(&at(mid)) == side_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut t = 0.5 * (lo + hi);
        let (owner0, _, _) = self
            .owner(&at(t))
            .ok_or_else(|| Error::Geometry("no sphere near crossing".into()))?;
        // polish onto the owning sphere, whose surface is known in closed form
        if let Some(tp) = segment_sphere_root(a, &delta, &self.spheres[owner0], t) {
            if (tp - t).abs() * len < 1e-8 && (0.0..=1.0).contains(&tp) {
                t = tp;
            }
        }
        let point = at(t);

        let (mut owner, best, second) = self
            .owner(&point)
            .ok_or_else(|| Error::Geometry("no sphere near crossing".into()))?;
        if second - best < SEAM_EPS {
            let toward_out = if side_a == Side::Outside { -1.0 } else { 1.0 };
            let nudged = point + delta * (toward_out * 1e-6);
            if let Some((o, _, _)) = self.owner(&nudged) {
                owner = o;
            }
        }
        let normal = self.owner_normal(owner, &point)?;
        Ok(Some(Crossing { point, axis, normal, t, multiple }))
    }
}

/// Root of |a + t·d − c| = r closest to `near`.
fn segment_sphere_root(a: &Vec3, d: &Vec3, s: &Sphere, near: f64) -> Option<f64> {
    let f = a - s.center;
    let qa = d.dot(d);
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(&f) - s.radius * s.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 || qa == 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (qb + qb.signum() * sq);
    let mut roots = vec![];
    if q != 0.0 {
        roots.push(q / qa);
        roots.push(qc / q);
    } else {
        roots.push(0.0);
    }
    roots.into_iter().min_by(|x, y| (x - near).abs().total_cmp(&(y - near).abs()))
}

fn check_sphere(s: &Sphere) -> Result<()> {
    let finite = s.center.iter().all(|v| v.is_finite()) && s.radius.is_finite();
    if !finite || s.radius <= 0.0 {
        return Err(Error::Geometry(format!("invalid sphere radius {} or center", s.radius)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball() -> InterfaceGeometry {
        InterfaceGeometry::sphere(Vec3::zeros(), 2.0).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(ball().classify(&Vec3::new(1.0, 0.0, 0.0)), Side::Inside);
        assert_eq!(ball().classify(&Vec3::new(3.0, 0.0, 0.0)), Side::Outside);
        assert_eq!(ball().classify(&Vec3::new(2.0, 0.0, 0.0)), Side::Inside);
        let u = InterfaceGeometry::union(vec![
            Sphere::new(Vec3::zeros(), 1.0),
            Sphere::new(Vec3::new(1.5, 0.0, 0.0), 1.0),
        ])
        .unwrap();
        assert_eq!(u.classify(&Vec3::new(0.75, 0.0, 0.0)), Side::Inside);
        assert_eq!(u.classify(&Vec3::new(0.75, 0.9, 0.0)), Side::Outside);
        assert_eq!(u.classify(&Vec3::new(40.0, 0.0, 0.0)), Side::Outside);
    }

    #[test]
    fn crossing_examples() {
        let g = ball();
        let c = g
            .find_crossing(&Vec3::new(1.9, 0.0, 0.0), &Vec3::new(2.1, 0.0, 0.0))
            .unwrap()
            .unwrap();
        assert!((c.point - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-10);
        assert!((c.normal - Vec3::x()).norm() < 1e-12);
        assert_eq!(c.axis, Axis::X);
        assert!(g
            .find_crossing(&Vec3::new(0.0, 0.0, 0.0), &Vec3::new(0.5, 0.0, 0.0))
            .unwrap()
            .is_none());
        let n = g.surface_normal(&Vec3::new(0.0, 2.0, 0.0)).unwrap();
        assert!((n - Vec3::y()).norm() < 1e-15);
        assert!(g.surface_normal(&Vec3::new(0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn thin_feature_resolves_to_nearest_crossing() {
        let g = InterfaceGeometry::sphere(Vec3::new(0.5, 0.0, 0.0), 0.1).unwrap();
        // both endpoints outside: no crossing reported
        assert!(g
            .find_crossing(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0))
            .unwrap()
            .is_none());
        let u = InterfaceGeometry::union(vec![
            Sphere::new(Vec3::new(0.0, 0.0, 0.0), 0.3),
            Sphere::new(Vec3::new(0.8, 0.0, 0.0), 0.1),
        ])
        .unwrap();
        let c = u.find_crossing(&Vec3::zeros(), &Vec3::new(1.0, 0.0, 0.0)).unwrap().unwrap();
        assert!(c.multiple);
        assert!((c.t - 0.3).abs() < 1e-10);
        let back = u.find_crossing(&Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros()).unwrap().unwrap();
        assert!((back.t - 0.7).abs() < 1e-10);
        let single = u.find_crossing(&Vec3::zeros(), &Vec3::new(0.5, 0.0, 0.0)).unwrap().unwrap();
        assert!(!single.multiple);
    }

    #[test]
    fn seam_normal_matches_owner() {
        let u = InterfaceGeometry::union(vec![
            Sphere::new(Vec3::new(-0.5, 0.0, 0.0), 1.0),
            Sphere::new(Vec3::new(0.5, 0.0, 0.0), 1.0),
        ])
        .unwrap();
        // on the seam plane x = 0, vertical segment through the crease
        let z = (1.0f64 - 0.25).sqrt();
        let c = u
            .find_crossing(&Vec3::new(0.0, 0.0, z - 0.05), &Vec3::new(0.0, 0.0, z + 0.05))
            .unwrap()
            .unwrap();
        assert!((c.point.z - z).abs() < 1e-10);
        let owner0 = (c.point - Vec3::new(-0.5, 0.0, 0.0)).normalize();
        let owner1 = (c.point - Vec3::new(0.5, 0.0, 0.0)).normalize();
        assert!((c.normal - owner0).norm() < 1e-6 || (c.normal - owner1).norm() < 1e-6);
        // off the crease the owning sphere is unique
        let p = Vec3::new(0.5, 0.0, 1.0);
        let n = u.surface_normal(&p).unwrap();
        assert!((n - Vec3::z()).norm() < 1e-6);
    }

    #[test]
    fn union_level_set_is_exact_near_surface() {
        let spheres: Vec<Sphere> = (0..20)
            .map(|i| Sphere::new(Vec3::new(i as f64 * 0.9, (i % 3) as f64, 0.0), 1.0 + 0.05 * (i % 4) as f64))
            .collect();
        let u = InterfaceGeometry::union(spheres.clone()).unwrap();
        let brute = |r: &Vec3| spheres.iter().map(|s| s.distance(r)).fold(f64::INFINITY, f64::min);
        for k in 0..500 {
            let r = Vec3::new(-3.0 + k as f64 * 0.05, 0.3 * (k % 7) as f64 - 1.0, 0.1 * (k % 11) as f64 - 0.5);
            let exact = brute(&r);
            assert!((u.level_set(&r) - exact.min(1.15)).abs() < 1e-14);
        }
    }

    fn line_sphere(a: &Vec3, b: &Vec3, c: &Vec3, rad: f64) -> Vec<f64> {
        let d = b - a;
        let f = a - c;
        let (qa, qb, qc) = (d.dot(&d), 2.0 * f.dot(&d), f.dot(&f) - rad * rad);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)]
            .into_iter()
            .filter(|t| (0.0..=1.0).contains(t))
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn sphere_crossing_matches_closed_form(
            theta in 0.0..std::f64::consts::PI,
            phi in 0.0..std::f64::consts::TAU,
            axis in 0usize..3,
            frac in 0.01..0.99f64,
            h in 0.05..0.5f64,
        ) {
            let c = Vec3::new(0.3, -0.2, 0.1);
            let g = InterfaceGeometry::sphere(c, 2.0).unwrap();
            let p = c + 2.0 * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let mut a = p;
            a[axis] -= frac * h;
            let mut b = a;
            b[axis] += h;
            let found = g.find_crossing(&a, &b);
            let roots = line_sphere(&a, &b, &c, 2.0);
            match found {
                Ok(Some(x)) => {
                    prop_assert!((x.normal.norm() - 1.0).abs() < 1e-12);
                    prop_assert_ne!(g.classify(&a), g.classify(&b));
                    prop_assert!(g.level_set(&x.point).abs() < 1e-9);
                    let best = roots.iter().map(|t| (t - x.t).abs() * h).fold(f64::INFINITY, f64::min);
                    prop_assert!(best < 1e-10, "closed-form mismatch {}", best);
                }
                Ok(None) => prop_assert_eq!(g.classify(&a), g.classify(&b)),
                Err(_) => prop_assert!(roots.len() == 2),
            }
        }

        #[test]
        fn union_crossings_have_small_residual(
            x in -2.0..3.0f64, y in -1.5..1.5f64, z in -1.5..1.5f64, axis in 0usize..3,
        ) {
            let u = InterfaceGeometry::union(vec![
                Sphere::new(Vec3::new(0.0, 0.0, 0.0), 1.2),
                Sphere::new(Vec3::new(1.4, 0.3, 0.0), 1.0),
                Sphere::new(Vec3::new(0.5, -0.8, 0.6), 0.8),
            ]).unwrap();
            let a = Vec3::new(x, y, z);
            let mut b = a;
            b[axis] += 0.25;
            if let Ok(Some(c)) = u.find_crossing(&a, &b) {
                prop_assert!(u.level_set(&c.point).abs() < 1e-9);
                prop_assert!((c.normal.norm() - 1.0).abs() < 1e-12);
                prop_assert_ne!(u.classify(&a), u.classify(&b));
            }
        }
    }
}
