//! Point multipole sources and their free-space Coulomb fields.
//!
//! A site carries a monopole `q`, dipole `d` and symmetric quadrupole `Q`
//! whose potential at separation `s = r - center` is
//!
//! ```text
//! G(r) = q/|s| + (s·d)/|s|³ + (sᵀQs)/(2|s|⁵)
//! ```
//!
//! in e_c/Å. Gradients and Hessians are analytic.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Distance below which a field evaluation counts as hitting the singularity.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub value: f64,
    pub gradient: Vec3,
    pub hessian: Mat3,
}

impl Field {
    pub fn zero() -> Self {
        Field {
            value: 0.0,
            gradient: Vec3::zeros(),
            hessian: Mat3::zeros(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Field {
            value: self.value * factor,
            gradient: self.gradient * factor,
            hessian: self.hessian * factor,
        }
    }
}

impl std::ops::Add for Field {
    type Output = Field;

    fn add(self, rhs: Field) -> Field {
        Field {
            value: self.value + rhs.value,
            gradient: self.gradient + rhs.gradient,
            hessian: self.hessian + rhs.hessian,
        }
    }
}

impl std::ops::AddAssign for Field {
    fn add_assign(&mut self, rhs: Field) {
        *self = *self + rhs;
    }
}

/// Permanent moments of one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub q: f64,
    pub d: Vec3,
    pub quad: Mat3,
}

impl Moments {
    pub fn zero() -> Self {
        Moments {
            q: 0.0,
            d: Vec3::zeros(),
            quad: Mat3::zeros(),
        }
    }

    pub fn monopole(q: f64) -> Self {
        Moments { q, ..Self::zero() }
    }

    pub fn dipole(d: Vec3) -> Self {
        Moments { d, ..Self::zero() }
    }

    pub fn quadrupole(quad: Mat3) -> Self {
        Moments {
            quad,
            ..Self::zero()
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Moments {
            q: self.q * factor,
            d: self.d * factor,
            quad: self.quad * factor,
        }
    }

    /// Same moments with `extra` added to the dipole (total dipole p = d + μ).
    pub fn with_extra_dipole(&self, extra: Vec3) -> Self {
        Moments {
            d: self.d + extra,
            ..*self
        }
    }
}

/// An atom-centered polarizable multipole.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipoleSite {
    pub position: Vec3,
    /// Å
    pub radius: f64,
    pub q: f64,
    /// e_c·Å
    pub d: Vec3,
    /// e_c·Å², symmetric
    pub quad: Mat3,
    /// Isotropic polarizability, Å³.
    pub alpha: f64,
}

impl MultipoleSite {
    pub fn new(position: Vec3, radius: f64) -> Self {
        MultipoleSite {
            position,
            radius,
            q: 0.0,
            d: Vec3::zeros(),
            quad: Mat3::zeros(),
            alpha: 0.0,
        }
    }

    pub fn with_moments(mut self, moments: Moments) -> Self {
        self.q = moments.q;
        self.d = moments.d;
        self.quad = moments.quad;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn moments(&self) -> Moments {
        Moments {
            q: self.q,
            d: self.d,
            quad: self.quad,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().all(|v| v.is_finite())
            && self.d.iter().all(|v| v.is_finite())
            && self.quad.iter().all(|v| v.is_finite())
            && self.q.is_finite()
            && self.radius.is_finite()
            && self.alpha.is_finite();
        if !finite {
            return Err(Error::Invalid("site has non-finite fields".into()));
        }
        if self.radius <= 0.0 {
            return Err(Error::Invalid(format!("radius {} must be positive", self.radius)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Invalid(format!("polarizability {} must be non-negative", self.alpha)));
        }
        let asym = (self.quad - self.quad.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + self.quad.abs().max()) {
            return Err(Error::Invalid("quadrupole is not symmetric".into()));
        }
        Ok(())
    }
}

/// Potential, gradient and Hessian of `moments` placed at `center`, evaluated at `r`.
pub fn multipole_field(center: &Vec3, moments: &Moments, r: &Vec3) -> Result<Field> {
    let s = r - center;
    let r2 = s.norm_squared();
    let dist = r2.sqrt();
    if dist < SINGULAR_EPS {
        return Err(Error::Singular { distance: dist });
    }
    let inv = 1.0 / dist;
    let inv2 = inv * inv;
    let inv3 = inv2 * inv;
    let inv5 = inv3 * inv2;
    let inv7 = inv5 * inv2;
    let inv9 = inv7 * inv2;
    let sst = s * s.transpose();
    let eye = Mat3::identity();

    let mut out = Field::zero();

    let q = moments.q;
    if q != 0.0 {
        out.value += q * inv;
        out.gradient -= s * (q * inv3);
        out.hessian += (sst * 3.0 - eye * r2) * (q * inv5);
    }

    let d = &moments.d;
    let ds = d.dot(&s);
    if ds != 0.0 || d.norm_squared() != 0.0 {
        out.value += ds * inv3;
        out.gradient += d * inv3 - s * (3.0 * ds * inv5);
        let sym = d * s.transpose() + s * d.transpose();
        out.hessian += sym * (-3.0 * inv5) - eye * (3.0 * ds * inv5) + sst * (15.0 * ds * inv7);
    }

    let quad = &moments.quad;
    if quad.iter().any(|&v| v != 0.0) {
        let w = quad * s;
        let u = s.dot(&w);
        out.value += 0.5 * u * inv5;
        out.gradient += w * inv5 - s * (2.5 * u * inv7);
        let sym = w * s.transpose() + s * w.transpose();
        out.hessian += quad * inv5 - sym * (5.0 * inv7) - eye * (2.5 * u * inv7)
            + sst * (17.5 * u * inv9);
    }

    Ok(out)
}

pub fn green_potential(site: &MultipoleSite, r: &Vec3) -> Result<f64> {
    multipole_field(&site.position, &site.moments(), r).map(|f| f.value)
}

pub fn green_gradient(site: &MultipoleSite, r: &Vec3) -> Result<Vec3> {
    multipole_field(&site.position, &site.moments(), r).map(|f| f.gradient)
}

pub fn green_hessian(site: &MultipoleSite, r: &Vec3) -> Result<Mat3> {
    multipole_field(&site.position, &site.moments(), r).map(|f| f.hessian)
}

/// Superposed field of all sites at `r`. When `induced` is given, each
/// site's dipole is `d + μ`.
pub fn total_field(sites: &[MultipoleSite], induced: Option<&[Vec3]>, r: &Vec3) -> Result<Field> {
    let mut acc = Field::zero();
    for (n, site) in sites.iter().enumerate() {
        let moments = match induced {
            Some(mu) => site.moments().with_extra_dipole(mu[n]),
            None => site.moments(),
        };
        acc += multipole_field(&site.position, &moments, r)?;
    }
    Ok(acc)
}

pub fn total_coulomb(sites: &[MultipoleSite], induced: Option<&[Vec3]>, r: &Vec3) -> Result<f64> {
    let mut acc = 0.0;
    for (n, site) in sites.iter().enumerate() {
        let moments = match induced {
            Some(mu) => site.moments().with_extra_dipole(mu[n]),
            None => site.moments(),
        };
        acc += potential_only(&site.position, &moments, r)?;
    }
    Ok(acc)
}

/// Regularizing Coulomb potential G = (1/ε⁻) Σ Gⁿ used to split off the singular part.
pub fn regularized_coulomb(
    sites: &[MultipoleSite],
    induced: Option<&[Vec3]>,
    eps_in: f64,
    r: &Vec3,
) -> Result<f64> {
    Ok(total_coulomb(sites, induced, r)? / eps_in)
}

fn potential_only(center: &Vec3, m: &Moments, r: &Vec3) -> Result<f64> {
    let s = r - center;
    let r2 = s.norm_squared();
    let dist = r2.sqrt();
    if dist < SINGULAR_EPS {
        return Err(Error::Singular { distance: dist });
    }
    let inv = 1.0 / dist;
    let inv3 = inv * inv * inv;
    let inv5 = inv3 * inv * inv;
    let u = s.dot(&(m.quad * s));
    Ok(m.q * inv + m.d.dot(&s) * inv3 + 0.5 * u * inv5)
}

/// Modifies the bare dipole–dipole tensor between two sites.
pub trait DampingRule: Send + Sync {
    fn apply(&self, separation: &Vec3, tensor: Mat3) -> Mat3;
}

/// Leaves the tensor unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl DampingRule for Identity {
    fn apply(&self, _separation: &Vec3, tensor: Mat3) -> Mat3 {
        tensor
    }
}

/// Scales the tensor by a user function of the site–site distance.
pub struct DistanceScaling<F> {
    pub scale: F,
}

impl<F: Fn(f64) -> f64 + Send + Sync> DampingRule for DistanceScaling<F> {
    fn apply(&self, separation: &Vec3, tensor: Mat3) -> Mat3 {
        tensor * (self.scale)(separation.norm())
    }
}

/// Dipole field tensor T = (3ŝŝᵀ − I)/|s|³ with s = rₙ − rₘ, so that `T μ`
/// is the field at site n produced by a point dipole μ at site m.
pub fn interaction_tensor(
    site_n: &MultipoleSite,
    site_m: &MultipoleSite,
    damping: &dyn DampingRule,
) -> Result<Mat3> {
    let s = site_n.position - site_m.position;
    let dist = s.norm();
    if dist < SINGULAR_EPS {
        return Err(Error::Singular { distance: dist });
    }
    let hat = s / dist;
    let t = (hat * hat.transpose() * 3.0 - Mat3::identity()) / (dist * dist * dist);
    Ok(damping.apply(&s, t))
}

/// Removes the trace from a quadrupole. Returns the removed trace.
pub fn detrace(quad: &mut Mat3) -> f64 {
    let tr = quad.trace();
    *quad -= Mat3::identity() * (tr / 3.0);
    tr
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn site_at_origin(m: Moments) -> MultipoleSite {
        MultipoleSite::new(Vec3::zeros(), 1.0).with_moments(m)
    }

    #[test]
    fn potential_examples() {
        let r = Vec3::new(2.0, 0.0, 0.0);
        assert_relative_eq!(green_potential(&site_at_origin(Moments::monopole(1.0)), &r).unwrap(), 0.5);
        let dip = site_at_origin(Moments::dipole(Vec3::new(1.0, 0.0, 0.0)));
        assert_relative_eq!(green_potential(&dip, &r).unwrap(), 0.25);
        let mut q = Mat3::zeros();
        q[(0, 0)] = 1.0;
        let quad = site_at_origin(Moments::quadrupole(q));
        assert_relative_eq!(green_potential(&quad, &r).unwrap(), 0.0625);
    }

    #[test]
    fn gradient_examples() {
        let g = green_gradient(&site_at_origin(Moments::monopole(1.0)), &Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(g, Vec3::new(-0.25, 0.0, 0.0), epsilon = 1e-15);
        let dip = site_at_origin(Moments::dipole(Vec3::new(0.0, 0.0, 1.0)));
        let g = green_gradient(&dip, &Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(g, Vec3::new(0.0, 0.0, -0.25), epsilon = 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let mono = site_at_origin(Moments::monopole(1.0));
        let h = green_hessian(&mono, &Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(h[(0, 0)], 0.25, epsilon = 1e-15);
        let h = green_hessian(&mono, &Vec3::new(0.3, -1.7, 2.2)).unwrap();
        assert!(h.trace().abs() < 1e-10);
    }

    #[test]
    fn singular_point_is_an_error() {
        let site = site_at_origin(Moments::monopole(1.0));
        assert!(matches!(
            green_potential(&site, &Vec3::new(1e-13, 0.0, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn superposition_examples() {
        let a = MultipoleSite::new(Vec3::new(1.0, 0.0, 0.0), 1.0).with_moments(Moments::monopole(1.0));
        let b = MultipoleSite::new(Vec3::new(-1.0, 0.0, 0.0), 1.0).with_moments(Moments::monopole(1.0));
        let v = total_coulomb(&[a, b], None, &Vec3::new(0.0, 2.0, 0.0)).unwrap();
        assert_relative_eq!(v, 2.0 / 5f64.sqrt(), epsilon = 1e-14);
        assert_eq!(total_coulomb(&[], None, &Vec3::new(1.0, 2.0, 3.0)).unwrap(), 0.0);
    }

    #[test]
    fn induced_dipoles_add_to_permanent() {
        let site = MultipoleSite::new(Vec3::new(0.1, 0.2, -0.3), 1.0)
            .with_moments(Moments { q: 0.3, d: Vec3::new(0.1, 0.0, 0.2), quad: Mat3::zeros() });
        let mu = [Vec3::new(-0.05, 0.4, 0.1)];
        let r = Vec3::new(1.5, -0.5, 0.7);
        let with = total_coulomb(std::slice::from_ref(&site), Some(&mu), &r).unwrap();
        let mut shifted = site.clone();
        shifted.d += mu[0];
        let direct = total_coulomb(&[shifted], None, &r).unwrap();
        assert_relative_eq!(with, direct, epsilon = 1e-15);
    }

    #[test]
    fn tensor_examples() {
        let n = MultipoleSite::new(Vec3::new(1.0, 0.0, 0.0), 1.0);
        let m = MultipoleSite::new(Vec3::zeros(), 1.0);
        let t = interaction_tensor(&n, &m, &Identity).unwrap();
        assert_relative_eq!(t, Mat3::from_diagonal(&Vec3::new(2.0, -1.0, -1.0)), epsilon = 1e-15);
        assert!(interaction_tensor(&n, &n.clone(), &Identity).is_err());

        let halve = DistanceScaling { scale: |_d: f64| 0.5 };
        let t2 = interaction_tensor(&n, &m, &halve).unwrap();
        assert_relative_eq!(t2, t * 0.5);
    }

    #[test]
    fn detrace_removes_trace() {
        let mut q = Mat3::new(1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 0.5);
        let tr = detrace(&mut q);
        assert_relative_eq!(tr, 3.5);
        assert!(q.trace().abs() < 1e-15);
    }

    /// Three point charges (c at ±δẑ, −2c at 0) realize the quadrupole
    /// Q = diag(−2, −2, 4)·cδ² in this convention.
    #[test]
    fn quadrupole_convention_matches_point_charges() {
        let (c, delta) = (1.0, 1e-3);
        let quad = Mat3::from_diagonal(&Vec3::new(-2.0, -2.0, 4.0)) * (c * delta * delta);
        let charges = [
            (Vec3::new(0.0, 0.0, delta), c),
            (Vec3::new(0.0, 0.0, -delta), c),
            (Vec3::zeros(), -2.0 * c),
        ];
        let r = Vec3::new(0.7, -0.4, 1.1);
        let exact: f64 = charges.iter().map(|(p, q)| q / (r - p).norm()).sum();
        let model = green_potential(&site_at_origin(Moments::quadrupole(quad)), &r).unwrap();
        assert_relative_eq!(model, exact, max_relative = 1e-5);
    }

    fn arb_vec(range: f64) -> impl Strategy<Value = Vec3> {
        (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_moments() -> impl Strategy<Value = Moments> {
        (-2.0..2.0f64, arb_vec(1.0), proptest::array::uniform6(-1.0..1.0f64)).prop_map(|(q, d, c)| {
            let quad = Mat3::new(c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5]);
            Moments { q, d, quad }
        })
    }

    fn arb_offset() -> impl Strategy<Value = Vec3> {
        (0.5..50.0f64, arb_vec(1.0)).prop_filter_map("nonzero direction", |(len, dir)| {
            let n = dir.norm();
            (n > 1e-3).then(|| dir / n * len)
        })
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(m in arb_moments(), c in arb_vec(5.0), s in arb_offset()) {
            let r = c + s;
            let h = 1e-5;
            let f = multipole_field(&c, &m, &r).unwrap();
            let scale = f.gradient.norm().max(1e-3 * f.value.abs()).max(1e-12);
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                let fd = (multipole_field(&c, &m, &(r + e)).unwrap().value
                    - multipole_field(&c, &m, &(r - e)).unwrap().value) / (2.0 * h);
                prop_assert!((fd - f.gradient[k]).abs() <= 1e-5 * scale + 1e-13,
                    "k={} fd={} analytic={}", k, fd, f.gradient[k]);
            }
        }

        #[test]
        fn hessian_matches_gradient_differences(m in arb_moments(), c in arb_vec(5.0), s in arb_offset()) {
            let r = c + s;
            let h = 1e-5;
            let f = multipole_field(&c, &m, &r).unwrap();
            prop_assert!((f.hessian - f.hessian.transpose()).abs().max() <= 1e-12 * f.hessian.abs().max().max(1e-300));
            let scale = f.hessian.abs().max().max(1e-12);
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                let fd = (multipole_field(&c, &m, &(r + e)).unwrap().gradient
                    - multipole_field(&c, &m, &(r - e)).unwrap().gradient) / (2.0 * h);
                for i in 0..3 {
                    prop_assert!((fd[i] - f.hessian[(i, k)]).abs() <= 1e-5 * scale + 1e-13);
                }
            }
        }

        #[test]
        fn monopole_is_harmonic(q in -3.0..3.0f64, c in arb_vec(5.0), s in arb_offset()) {
            let f = multipole_field(&c, &Moments::monopole(q), &(c + s)).unwrap();
            prop_assert!(f.hessian.trace().abs() <= 1e-10 * (1.0 + f.hessian.abs().max()));
        }

        #[test]
        fn potential_scales_linearly(m in arb_moments(), s in arb_offset(), lambda in -4.0..4.0f64) {
            let c = Vec3::zeros();
            let base = multipole_field(&c, &m, &s).unwrap().value;
            let scaled = multipole_field(&c, &m.scaled(lambda), &s).unwrap().value;
            prop_assert!((scaled - lambda * base).abs() <= 1e-14 * (1.0 + (lambda * base).abs()));
        }

        #[test]
        fn tensor_matches_dipole_field(mu in arb_vec(1.0), s in arb_offset()) {
            let n = MultipoleSite::new(s, 1.0);
            let m = MultipoleSite::new(Vec3::zeros(), 1.0);
            let t = interaction_tensor(&n, &m, &Identity).unwrap();
            prop_assert!((t - t.transpose()).abs().max() < 1e-14 * t.abs().max());
            prop_assert!(t.trace().abs() < 1e-12 * t.abs().max());
            let dip = MultipoleSite::new(Vec3::zeros(), 1.0).with_moments(Moments::dipole(mu));
            let field = -green_gradient(&dip, &s).unwrap();
            prop_assert!((t * mu - field).norm() <= 1e-10 * (1.0 + field.norm()));
        }

        #[test]
        fn superposition_is_additive(ma in arb_moments(), mb in arb_moments(), r in arb_vec(10.0)) {
            let a = MultipoleSite::new(Vec3::new(20.0, 0.0, 0.0), 1.0).with_moments(ma);
            let b = MultipoleSite::new(Vec3::new(-20.0, 0.0, 0.0), 1.0).with_moments(mb);
            let both = total_coulomb(&[a.clone(), b.clone()], None, &r).unwrap();
            let sum = total_coulomb(&[a], None, &r).unwrap() + total_coulomb(&[b], None, &r).unwrap();
            prop_assert!((both - sum).abs() <= 1e-15 * (1.0 + both.abs()));
        }
    }
}
