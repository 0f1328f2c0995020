//! Electrostatic energies: solvation energy from the reaction field plus the
//! induced-dipole difference, vacuum energy, and the grid-convergence
//! tables.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::multipole::{multipole_field, Field, Moments, MultipoleSite, Vec3};
use crate::units::COULOMB;

/// Contraction of a site's permanent moments with a smooth potential:
/// `q Ψ + d·∇Ψ + Q:∇∇Ψ / 6`, in e_c²/Å.
pub fn contract(site: &MultipoleSite, f: &Field) -> f64 {
    site.q * f.value + site.d.dot(&f.gradient) + site.quad.dot(&f.hessian) / 6.0
}

/// Field at site `n` of point dipoles `μ_m − μ_m^(V)` at the other sites.
pub fn g_delta(sites: &[MultipoleSite], mu_solvent: &[Vec3], mu_vacuum: &[Vec3], n: usize) -> Result<Field> {
    let r = sites[n].position;
    let mut f = Field::zero();
    for (m, s) in sites.iter().enumerate() {
        let delta = mu_solvent[m] - mu_vacuum[m];
        if m == n || delta == Vec3::zeros() {
            continue;
        }
        f += multipole_field(&s.position, &Moments::dipole(delta), &r)?;
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Energy {
    /// kcal/mol
    pub total: f64,
    /// kcal/mol, one entry per site
    pub per_site: Vec<f64>,
}

fn assemble(sites: &[MultipoleSite], fields: &[Field]) -> Result<Energy> {
    if fields.len() != sites.len() {
        return Err(Error::Invalid(format!(
            "energy needs field data for every site ({} sites, {} fields)",
            sites.len(),
            fields.len()
        )));
    }
    let per_site: Vec<f64> = sites
        .par_iter()
        .zip(fields.par_iter())
        .map(|(s, f)| 0.5 * COULOMB * contract(s, f))
        .collect();
    let total = per_site.iter().sum::<f64>();
    if !total.is_finite() {
        return Err(Error::Invalid("energy is not finite".into()));
    }
    Ok(Energy { total, per_site })
}

/// `½ C Σₙ contract(n, φ_RF + G^Δ)`.
pub fn solvation_energy(sites: &[MultipoleSite], reaction: &[Field], delta: &[Field]) -> Result<Energy> {
    if delta.len() != reaction.len() {
        return Err(Error::Invalid("reaction and induced-difference data differ in length".into()));
    }
    let psi: Vec<Field> = reaction.iter().zip(delta).map(|(a, b)| *a + *b).collect();
    assemble(sites, &psi)
}

/// Vacuum energy: each site's permanent moments against the field of the
/// other sites' permanent moments and vacuum induced dipoles.
pub fn vacuum_energy(sites: &[MultipoleSite], mu_vacuum: &[Vec3]) -> Result<Energy> {
    let fields: Vec<Field> = (0..sites.len())
        .into_par_iter()
        .map(|n| {
            let r = sites[n].position;
            let mut f = Field::zero();
            for (m, s) in sites.iter().enumerate() {
                if m != n {
                    f += multipole_field(&s.position, &s.moments().with_extra_dipole(mu_vacuum[m]), &r)?;
                }
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    assemble(sites, &fields)
}

/// Observed order between two error levels; `None` when undefined.
pub fn observed_order(e1: f64, e2: f64, h1: f64, h2: f64) -> Option<f64> {
    let p = (e1 / e2).ln() / (h1 / h2).ln();
    (e1 > 0.0 && e2 > 0.0 && e1 != e2 && p.is_finite()).then_some(p)
}

/// One level of a convergence study against a known reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderRow {
    pub h: f64,
    pub e_int: Option<f64>,
    pub e_int_order: Option<f64>,
    pub energy: f64,
    pub energy_error: f64,
    pub energy_order: Option<f64>,
}

/// Rows (h, E, |E − E_exact|, order) for levels sorted by decreasing h.
/// `e_int` carries the interface max error per level where available.
pub fn kirkwood_order_table(levels: &[(f64, f64, Option<f64>)], exact: f64) -> Result<Vec<OrderRow>> {
    if levels.len() < 2 {
        return Err(Error::Invalid("a convergence table needs at least two grid levels".into()));
    }
    let mut rows: Vec<OrderRow> = Vec::with_capacity(levels.len());
    for (k, &(h, energy, e_int)) in levels.iter().enumerate() {
        let energy_error = (energy - exact).abs();
        let (energy_order, e_int_order) = match k.checked_sub(1).map(|p| &rows[p]) {
            Some(prev) => (
                observed_order(prev.energy_error, energy_error, prev.h, h),
                match (prev.e_int, e_int) {
                    (Some(a), Some(b)) => observed_order(a, b, prev.h, h),
                    _ => None,
                },
            ),
            None => (None, None),
        };
        rows.push(OrderRow { h, e_int, e_int_order, energy, energy_error, energy_order });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtrapolationRow {
    pub h: f64,
    pub energy: f64,
    /// Percent deviation from the extrapolated energy.
    pub error_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extrapolation {
    pub extrapolated: f64,
    pub rows: Vec<ExtrapolationRow>,
}

/// Linear extrapolation to h → 0 from the two finest levels, with the
/// relative error of every level. Levels may come in any order.
pub fn extrapolation_table(levels: &[(f64, f64)]) -> Result<Extrapolation> {
    if levels.len() < 2 {
        return Err(Error::Invalid("extrapolation needs at least two grid levels".into()));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (h1, e1) = sorted[sorted.len() - 2];
    let (h2, e2) = sorted[sorted.len() - 1];
    if h1 == h2 {
        return Err(Error::Invalid("extrapolation needs two distinct grid spacings".into()));
    }
    let extrapolated = e2 - h2 * (e1 - e2) / (h1 - h2);
    let rows = sorted
        .iter()
        .map(|&(h, energy)| ExtrapolationRow {
            h,
            energy,
            error_percent: ((energy - extrapolated) / extrapolated).abs() * 100.0,
        })
        .collect();
    Ok(Extrapolation { extrapolated, rows })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn opt_sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2e}")).unwrap_or_default()
}

/// Aligned text rendering of a convergence table.
pub fn format_order_table(rows: &[OrderRow]) -> String {
    let mut out = format!(
        "{:>8} {:>10} {:>6} {:>12} {:>10} {:>6}\n",
        "h", "e_int", "order", "E_sol", "e_E", "order"
    );
    for r in rows {
        out += &format!(
            "{:>8} {:>10} {:>6} {:>12.4} {:>10} {:>6}\n",
            r.h,
            opt_sci(r.e_int),
            opt(r.e_int_order, 2),
            r.energy,
            format!("{:.2e}", r.energy_error),
            opt(r.energy_order, 2)
        );
    }
    out
}

pub fn order_table_csv(rows: &[OrderRow]) -> String {
    let mut out = String::from("h,e_int,e_int_order,e_sol,e_energy,energy_order\n");
    for r in rows {
        out += &format!(
            "{},{},{},{:.6},{:.6e},{}\n",
            r.h,
            r.e_int.map(|x| format!("{x:.6e}")).unwrap_or_default(),
            opt(r.e_int_order, 6),
            r.energy,
            r.energy_error,
            opt(r.energy_order, 6)
        );
    }
    out
}

pub fn format_extrapolation(ex: &Extrapolation) -> String {
    let mut out = format!("{:>8} {:>12} {:>9}\n", "h", "E_sol", "Error(%)");
    for r in &ex.rows {
        out += &format!("{:>8} {:>12.2} {:>9.2}\n", r.h, r.energy, r.error_percent);
    }
    out += &format!("{:>8} {:>12.2}\n", "extrap", ex.extrapolated);
    out
}

pub fn extrapolation_csv(ex: &Extrapolation) -> String {
    let mut out = String::from("h,e_sol,error_percent\n");
    for r in &ex.rows {
        out += &format!("{},{:.6},{:.6}\n", r.h, r.energy, r.error_percent);
    }
    out += &format!("extrapolated,{:.6},\n", ex.extrapolated);
    out
}
