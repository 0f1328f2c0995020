//! Closed-form fields and energies of centered multipoles in a dielectric
//! sphere (Kirkwood). Interior dielectric `eps1`, exterior `eps2`, no
//! screening.
//!
//! For an ℓ-pole with angular strength `T_ℓ` the interior potential is
//! `T_ℓ/(ε₁ r^{ℓ+1}) + R_ℓ T_ℓ r^ℓ` and the exterior one `C_ℓ T_ℓ / r^{ℓ+1}`.

use crate::error::{Error, Result};
use crate::multipole::{multipole_field, Field, Mat3, Moments, Vec3, SINGULAR_EPS};
use crate::units::COULOMB;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirkwoodCase {
    pub a: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub moments: Moments,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirkwoodEnergies {
    pub monopole: f64,
    pub dipole: f64,
    pub quadrupole: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KirkwoodKind {
    Monopole,
    Dipole,
    Quadrupole,
    Multipole,
}

impl KirkwoodKind {
    pub const ALL: [KirkwoodKind; 4] = [
        KirkwoodKind::Monopole,
        KirkwoodKind::Dipole,
        KirkwoodKind::Quadrupole,
        KirkwoodKind::Multipole,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KirkwoodKind::Monopole => "monopole",
            KirkwoodKind::Dipole => "dipole",
            KirkwoodKind::Quadrupole => "quadrupole",
            KirkwoodKind::Multipole => "multipole",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        KirkwoodKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Dipole magnitude of the default suite, e_c·Å.
pub const DEFAULT_DIPOLE: f64 = 0.343;
/// Target quadrupole energy of the default suite, kcal/mol.
pub const DEFAULT_QUADRUPOLE_ENERGY: f64 = -1.7924;

impl KirkwoodCase {
    pub fn new(a: f64, eps1: f64, eps2: f64, moments: Moments) -> Result<Self> {
        if !(a > 0.0 && eps1 > 0.0 && eps2 > 0.0) {
            return Err(Error::Invalid("Kirkwood sphere needs positive radius and dielectrics".into()));
        }
        Ok(KirkwoodCase { a, eps1, eps2, moments })
    }

    /// Standard suite: a = 2 Å, ε₁ = 1, ε₂ = 80.
    pub fn standard(kind: KirkwoodKind) -> Self {
        let (a, eps1, eps2) = (2.0, 1.0, 80.0);
        let q = Moments::monopole(1.0);
        let d = Moments::dipole(Vec3::new(0.0, 0.0, DEFAULT_DIPOLE));
        let quad = Moments::quadrupole(default_quadrupole(a, eps1, eps2));
        let moments = match kind {
            KirkwoodKind::Monopole => q,
            KirkwoodKind::Dipole => d,
            KirkwoodKind::Quadrupole => quad,
            KirkwoodKind::Multipole => Moments { q: q.q, d: d.d, quad: quad.quad },
        };
        KirkwoodCase { a, eps1, eps2, moments }
    }

    /// Reaction coefficient R_ℓ.
    pub fn reaction_coefficient(&self, l: usize) -> f64 {
        let lf = l as f64;
        -(lf + 1.0) * (self.eps2 - self.eps1)
            / (self.eps1 * ((lf + 1.0) * self.eps2 + lf * self.eps1) * self.a.powi(2 * l as i32 + 1))
    }

    /// Exterior coefficient C_ℓ.
    pub fn exterior_coefficient(&self, l: usize) -> f64 {
        let lf = l as f64;
        (2.0 * lf + 1.0) / (lf * self.eps1 + (lf + 1.0) * self.eps2)
    }

    fn angular(&self, r: &Vec3) -> [f64; 3] {
        let hat = r / r.norm();
        let m = &self.moments;
        [m.q, m.d.dot(&hat), 0.5 * hat.dot(&(m.quad * hat))]
    }

    /// Smooth reaction field φ_RF inside the sphere with its derivatives.
    pub fn reaction_field(&self, r: &Vec3) -> Field {
        let m = &self.moments;
        let (r0, r1, r2) = (
            self.reaction_coefficient(0),
            self.reaction_coefficient(1),
            self.reaction_coefficient(2),
        );
        Field {
            value: r0 * m.q + r1 * m.d.dot(r) + r2 * 0.5 * r.dot(&(m.quad * r)),
            gradient: m.d * r1 + m.quad * r * r2,
            hessian: m.quad * r2,
        }
    }

    pub fn reaction_potential(&self, r: &Vec3) -> Result<f64> {
        if r.norm() >= self.a {
            return Err(Error::Invalid("reaction potential is defined inside the sphere only".into()));
        }
        Ok(self.reaction_field(r).value)
    }

    /// Total potential φ at `r`, interior or exterior.
    pub fn potential(&self, r: &Vec3) -> Result<f64> {
        let dist = r.norm();
        if dist < SINGULAR_EPS {
            return Err(Error::Singular { distance: dist });
        }
        if dist < self.a {
            let g = multipole_field(&Vec3::zeros(), &self.moments, r)?.value;
            return Ok(g / self.eps1 + self.reaction_field(r).value);
        }
        let t = self.angular(r);
        Ok((0..3).map(|l| self.exterior_coefficient(l) * t[l] / dist.powi(l as i32 + 1)).sum())
    }

    /// φ_RF = φ − G/ε₁ at a point on either side; outside the sphere this
    /// is the exact regularized field the solver computes.
    pub fn regularized_field(&self, r: &Vec3) -> Result<f64> {
        let g = multipole_field(&Vec3::zeros(), &self.moments, r)?.value;
        Ok(self.potential(r)? - g / self.eps1)
    }

    pub fn energies(&self) -> KirkwoodEnergies {
        let m = &self.moments;
        let half_c = 0.5 * COULOMB;
        let monopole = half_c * self.reaction_coefficient(0) * m.q * m.q;
        let dipole = half_c * self.reaction_coefficient(1) * m.d.dot(&m.d);
        let quadrupole = half_c * self.reaction_coefficient(2) * m.quad.dot(&m.quad) / 6.0;
        KirkwoodEnergies { monopole, dipole, quadrupole, total: monopole + dipole + quadrupole }
    }
}

/// Axial traceless quadrupole diag(−b/2, −b/2, b) whose Kirkwood energy
/// equals [`DEFAULT_QUADRUPOLE_ENERGY`].
pub fn default_quadrupole(a: f64, eps1: f64, eps2: f64) -> Mat3 {
    let unit = Mat3::from_diagonal(&Vec3::new(-0.5, -0.5, 1.0));
    let case = KirkwoodCase { a, eps1, eps2, moments: Moments::quadrupole(unit) };
    let per_unit = case.energies().quadrupole;
    unit * (DEFAULT_QUADRUPOLE_ENERGY / per_unit).sqrt()
}

/// Factor s in Θ = s·Q relating the traceless Θ:r̂r̂/r³ form of the
/// quadrupole potential to the ½ sᵀQs/|s|⁵ form, from the homogeneous limit.
pub fn theta_bridge() -> f64 {
    let quad = Mat3::from_diagonal(&Vec3::new(-0.5, -0.5, 1.0));
    let r = Vec3::new(0.3, -0.4, 1.2);
    let ours = multipole_field(&Vec3::zeros(), &Moments::quadrupole(quad), &r)
        .expect("probe point is off-center")
        .value;
    let theta_form = r.dot(&(quad * r)) / r.norm().powi(5);
    ours / theta_form
}

/// Onsager reaction-field factor f of a centered dipole.
pub fn onsager_factor(a: f64, eps1: f64, eps2: f64) -> f64 {
    2.0 * (eps2 - eps1) / ((2.0 * eps2 + eps1) * a.powi(3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multipole::green_potential;
    use crate::multipole::MultipoleSite;

    fn mixed(eps2: f64) -> KirkwoodCase {
        KirkwoodCase::new(
            2.0,
            1.0,
            eps2,
            Moments {
                q: 0.7,
                d: Vec3::new(0.2, -0.1, 0.343),
                quad: Mat3::new(0.4, 0.1, -0.2, 0.1, -0.3, 0.05, -0.2, 0.05, -0.1),
            },
        )
        .unwrap()
    }

    #[test]
    fn monopole_values() {
        let k = KirkwoodCase::standard(KirkwoodKind::Monopole);
        assert!((k.reaction_potential(&Vec3::new(0.3, 0.2, -0.5)).unwrap() + 0.49375).abs() < 1e-15);
        assert!((k.energies().monopole + 81.978).abs() < 1e-3);
        let mut big = k;
        big.a = 4.0;
        assert!((big.energies().monopole * 2.0 - k.energies().monopole).abs() < 1e-12);
    }

    #[test]
    fn default_suite_energies() {
        let d = KirkwoodCase::standard(KirkwoodKind::Dipole).energies().dipole;
        assert!((d + 2.3962).abs() < 5e-4, "{d}");
        let q = KirkwoodCase::standard(KirkwoodKind::Quadrupole).energies().quadrupole;
        assert!((q - DEFAULT_QUADRUPOLE_ENERGY).abs() < 1e-12);
        let b = default_quadrupole(2.0, 1.0, 80.0)[(2, 2)];
        assert!((b - 1.1879).abs() < 1e-3, "{b}");
        let all = KirkwoodCase::standard(KirkwoodKind::Multipole).energies();
        assert!((all.total - (all.monopole + all.dipole + all.quadrupole)).abs() < 1e-12);
        assert!((all.total + 86.167).abs() < 0.01);
    }

    #[test]
    fn homogeneous_limit_is_coulomb() {
        let k = KirkwoodCase::new(2.0, 3.0, 3.0, mixed(3.0).moments).unwrap();
        let site = MultipoleSite::new(Vec3::zeros(), 2.0).with_moments(k.moments);
        for r in [Vec3::new(0.5, 0.2, 0.1), Vec3::new(3.0, -1.0, 2.0)] {
            assert!((k.potential(&r).unwrap() - green_potential(&site, &r).unwrap() / 3.0).abs() < 1e-14);
        }
        let e = k.energies();
        assert_eq!((e.monopole, e.dipole, e.quadrupole), (0.0, 0.0, 0.0));
        assert!((theta_bridge() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn potential_is_continuous_at_the_surface() {
        let k = mixed(80.0);
        for i in 0..1000 {
            let th = (i as f64 * 0.618_033_988_7).fract() * std::f64::consts::PI;
            let ph = (i as f64 * 0.414_213_562_3).fract() * std::f64::consts::TAU;
            let n = Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos());
            let inner = k.potential(&(n * (2.0 - 1e-9))).unwrap();
            let outer = k.potential(&(n * (2.0 + 1e-9))).unwrap();
            assert!((inner - outer).abs() < 1e-8, "{inner} {outer}");
        }
    }

    #[test]
    fn flux_is_continuous_at_the_surface() {
        let k = mixed(80.0);
        let n = Vec3::new(0.3, -0.5, 0.8).normalize();
        let e = 1e-5;
        let radial = |r0: f64| (k.potential(&(n * (r0 + e))).unwrap() - k.potential(&(n * (r0 - e))).unwrap()) / (2.0 * e);
        let inside = k.eps1 * radial(2.0 - 2e-4);
        let outside = k.eps2 * radial(2.0 + 2e-4);
        assert!((inside - outside).abs() < 1e-3 * inside.abs().max(1e-3), "{inside} {outside}");
    }

    #[test]
    fn reaction_field_is_harmonic_and_linear() {
        let k = mixed(80.0);
        assert!(k.reaction_field(&Vec3::zeros()).hessian.trace().abs() < 1e-14);
        let f = onsager_factor(2.0, 1.0, 80.0);
        let dk = KirkwoodCase::standard(KirkwoodKind::Dipole);
        let g = dk.reaction_field(&Vec3::zeros()).gradient;
        assert!((g + dk.moments.d * f).norm() < 1e-15);
        assert!((f - 0.122_671).abs() < 1e-6);
        let parts: f64 = [KirkwoodKind::Monopole, KirkwoodKind::Dipole, KirkwoodKind::Quadrupole]
            .iter()
            .map(|&kind| KirkwoodCase::standard(kind).potential(&Vec3::new(0.4, 0.1, 2.5)).unwrap())
            .sum();
        let whole = KirkwoodCase::standard(KirkwoodKind::Multipole).potential(&Vec3::new(0.4, 0.1, 2.5)).unwrap();
        assert!((parts - whole).abs() < 1e-14);
        assert!(k.potential(&Vec3::zeros()).is_err());
    }
}
