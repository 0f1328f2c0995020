//! Induced dipoles by successive over-relaxation, in vacuum and coupled to
//! the solvent reaction field.
//!
//! The field convention is `E = −∇φ`; an induced dipole responds as
//! `μₙ = αₙ (Eₙ + Σₘ Tₙₘ μₘ)` where `Eₙ` collects the permanent-moment
//! field of the other sites and, in solvent, `−∇φ_RF(rₙ)`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::geometry::Side;
use crate::multipole::{interaction_tensor, multipole_field, DampingRule, Field, Identity, Mat3, MultipoleSite, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct InducedDipoleState {
    pub mu: Vec<Vec3>,
    pub iterations: usize,
    pub last_rms: f64,
    pub converged: bool,
    pub history: Vec<f64>,
}

impl InducedDipoleState {
    pub fn zeros(n: usize) -> Self {
        InducedDipoleState {
            mu: vec![Vec3::zeros(); n],
            iterations: 0,
            last_rms: 0.0,
            converged: true,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScfOptions {
    pub omega: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub max_cycles: usize,
}

impl Default for ScfOptions {
    fn default() -> Self {
        ScfOptions { omega: 0.7, tolerance: 1e-6, max_iters: 200, max_cycles: 100 }
    }
}

/// Site–site coupling rules: tensor damping plus excluded pairs.
pub struct Coupling {
    pub damping: Box<dyn DampingRule>,
    mask: HashSet<(usize, usize)>,
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling { damping: Box::new(Identity), mask: HashSet::new() }
    }
}

impl Coupling {
    pub fn new(damping: Box<dyn DampingRule>, excluded: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mask = excluded.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        Coupling { damping, mask }
    }

    pub fn excluded(&self, n: usize, m: usize) -> bool {
        n == m || self.mask.contains(&(n.min(m), n.max(m)))
    }
}

/// Field of the permanent moments of all other sites at site `n`.
pub fn direct_field(sites: &[MultipoleSite], n: usize, coupling: &Coupling) -> Result<Vec3> {
    let r = sites[n].position;
    let mut e = Vec3::zeros();
    for (m, s) in sites.iter().enumerate() {
        if coupling.excluded(n, m) {
            continue;
        }
        e -= multipole_field(&s.position, &s.moments(), &r)?.gradient;
    }
    Ok(e)
}

pub fn direct_fields(sites: &[MultipoleSite], coupling: &Coupling) -> Result<Vec<Vec3>> {
    (0..sites.len()).map(|n| direct_field(sites, n, coupling)).collect()
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.sum::<f64>() / n.max(1) as f64).sqrt()
}

/// Dense tensors T_nm for polarizable targets n (zero rows otherwise).
fn tensors(sites: &[MultipoleSite], coupling: &Coupling) -> Result<Vec<Vec<(usize, Mat3)>>> {
    let mut out = Vec::with_capacity(sites.len());
    for (n, sn) in sites.iter().enumerate() {
        let mut row = Vec::new();
        if sn.alpha > 0.0 {
            for (m, sm) in sites.iter().enumerate() {
                if sm.alpha > 0.0 && !coupling.excluded(n, m) {
                    row.push((m, interaction_tensor(sn, sm, coupling.damping.as_ref())?));
                }
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Gauss–Seidel SOR for `μ = α(E + Tμ)` with the given external field.
pub fn sor(
    sites: &[MultipoleSite],
    coupling: &Coupling,
    field: &[Vec3],
    initial: Option<&[Vec3]>,
    opts: &ScfOptions,
) -> Result<InducedDipoleState> {
    let n = sites.len();
    let t = tensors(sites, coupling)?;
    let mut mu: Vec<Vec3> = match initial {
        Some(m) => m.to_vec(),
        None => vec![Vec3::zeros(); n],
    };
    for (k, s) in sites.iter().enumerate() {
        if s.alpha == 0.0 {
            mu[k] = Vec3::zeros();
        }
    }
    let mut history = Vec::new();
    for it in 1..=opts.max_iters {
        let mut sq = 0.0;
        for k in 0..n {
            let alpha = sites[k].alpha;
            if alpha == 0.0 {
                continue;
            }
            let mut e = field[k];
            for (m, tm) in &t[k] {
                e += tm * mu[*m];
            }
            let new = mu[k] * (1.0 - opts.omega) + e * (alpha * opts.omega);
            sq += (new - mu[k]).norm_squared();
            mu[k] = new;
        }
        let change = rms(std::iter::once(sq), n);
        history.push(change);
        if change <= opts.tolerance {
            return Ok(InducedDipoleState { mu, iterations: it, last_rms: change, converged: true, history });
        }
    }
    Err(Error::ScfNotConverged {
        iterations: opts.max_iters,
        last_rms: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Residual rms of `μ − α(E + Tμ)`, recomputed from scratch.
pub fn fixed_point_residual(sites: &[MultipoleSite], coupling: &Coupling, field: &[Vec3], mu: &[Vec3]) -> Result<f64> {
    let t = tensors(sites, coupling)?;
    let mut sq = 0.0;
    for k in 0..sites.len() {
        let mut e = field[k];
        for (m, tm) in &t[k] {
            e += tm * mu[*m];
        }
        sq += (mu[k] - e * sites[k].alpha).norm_squared();
    }
    Ok(rms(std::iter::once(sq), sites.len()))
}

/// Induced dipoles in vacuum.
pub fn sor_vacuum(sites: &[MultipoleSite], coupling: &Coupling, opts: &ScfOptions) -> Result<InducedDipoleState> {
    let field = direct_fields(sites, coupling)?;
    sor(sites, coupling, &field, None, opts)
}

/// Dense solve of `(I − αT) μ = α E`, used as a reference.
pub fn dense_induced(sites: &[MultipoleSite], coupling: &Coupling, field: &[Vec3]) -> Result<Vec<Vec3>> {
    let n = sites.len();
    let t = tensors(sites, coupling)?;
    let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
    let mut g = DVector::<f64>::zeros(3 * n);
    for k in 0..n {
        let a = sites[k].alpha;
        for (j, tm) in &t[k] {
            for r in 0..3 {
                for c in 0..3 {
                    m[(3 * k + r, 3 * j + c)] -= a * tm[(r, c)];
                }
            }
        }
        for r in 0..3 {
            g[3 * k + r] = a * field[k][r];
        }
    }
    let x = m
        .lu()
        .solve(&g)
        .ok_or_else(|| Error::Invalid("induction matrix is singular".into()))?;
    Ok((0..n).map(|k| Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2])).collect())
}

/// Outcome of the solvent-coupled induction loop.
#[derive(Debug, Clone)]
pub struct SolvatedScf<D> {
    pub state: InducedDipoleState,
    /// Reaction data of the last PDE solve, consistent with `state.mu`.
    pub data: D,
    pub pde_solves: usize,
}

/// Couples induction to the reaction field. `pde` maps induced dipoles to
/// the reaction data (per-site φ_RF fields) plus any payload the caller
/// wants to keep; starting from `initial` (normally the vacuum dipoles),
/// each cycle solves the PDE, relaxes μ in the fixed reaction field and
/// stops once μ no longer changes.
pub fn sor_solvated<D>(
    sites: &[MultipoleSite],
    coupling: &Coupling,
    opts: &ScfOptions,
    initial: &[Vec3],
    mut pde: impl FnMut(&[Vec3]) -> Result<(Vec<Field>, D)>,
) -> Result<SolvatedScf<D>> {
    let n = sites.len();
    let direct = direct_fields(sites, coupling)?;
    let polarizable = sites.iter().any(|s| s.alpha > 0.0);
    let mut mu: Vec<Vec3> = initial.to_vec();
    let mut history = Vec::new();
    let mut inner_total = 0;
    for cycle in 1..=opts.max_cycles {
        let (fields, data) = pde(&mu)?;
        if !polarizable {
            return Ok(SolvatedScf {
                state: InducedDipoleState { mu: vec![Vec3::zeros(); n], iterations: 1, last_rms: 0.0, converged: true, history: vec![0.0] },
                data,
                pde_solves: cycle,
            });
        }
        let total: Vec<Vec3> = direct.iter().zip(&fields).map(|(e, f)| e - f.gradient).collect();
        let inner = sor(sites, coupling, &total, Some(&mu), opts)?;
        inner_total += inner.iterations;
        let change = rms(inner.mu.iter().zip(&mu).map(|(a, b)| (a - b).norm_squared()), n);
        history.push(change);
        log::debug!("solvated cycle {cycle}: rms change {change:.3e} after {} inner sweeps", inner.iterations);
        if change <= opts.tolerance {
            return Ok(SolvatedScf {
                state: InducedDipoleState { mu, iterations: cycle, last_rms: change, converged: true, history },
                data,
                pde_solves: cycle,
            });
        }
        mu = inner.mu;
    }
    log::warn!("solvated induction stopped after {} cycles ({inner_total} inner sweeps)", opts.max_cycles);
    Err(Error::ScfNotConverged {
        iterations: opts.max_cycles,
        last_rms: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

const QUADRATIC_TERMS: usize = 10;
const CUBIC_TERMS: usize = 20;

fn monomials(d: &Vec3, out: &mut [f64]) {
    let (x, y, z) = (d.x, d.y, d.z);
    let base = [1.0, x, y, z, x * x, y * y, z * z, x * y, x * z, y * z];
    out[..QUADRATIC_TERMS].copy_from_slice(&base);
    if out.len() == CUBIC_TERMS {
        let cubic = [x * x * x, y * y * y, z * z * z, x * x * y, x * x * z, y * y * x, y * y * z, z * z * x, z * z * y, x * y * z];
        out[QUADRATIC_TERMS..].copy_from_slice(&cubic);
    }
}

/// Least-squares polynomial fit in units of h around `center`; returns
/// value, gradient and Hessian at the center, or `None` when the nodes do
/// not determine the fit.
fn fit(grid: &Grid, values: &[f64], nodes: &[usize], center: &Vec3, terms: usize) -> Option<Field> {
    if nodes.len() < terms + terms / 2 {
        return None;
    }
    let h = grid.h;
    let mut a = DMatrix::<f64>::zeros(nodes.len(), terms);
    let mut b = DVector::<f64>::zeros(nodes.len());
    let mut row = vec![0.0; terms];
    for (k, &i) in nodes.iter().enumerate() {
        monomials(&((grid.position(i) - center) / h), &mut row);
        for (c, v) in row.iter().enumerate() {
            a[(k, c)] = *v;
        }
        b[k] = values[i];
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin.is_nan() || smin <= 1e-8 * smax {
        return None;
    }
    let c = svd.solve(&b, 0.0).ok()?;
    let h2 = h * h;
    Some(Field {
        value: c[0],
        gradient: Vec3::new(c[1], c[2], c[3]) / h,
        hessian: Mat3::new(
            2.0 * c[4], c[7], c[8],
            c[7], 2.0 * c[5], c[9],
            c[8], c[9], 2.0 * c[6],
        ) / h2,
    })
}

/// Value, gradient and Hessian of the grid field `values` at each site,
/// fitted over nearby nodes inside the solute. A cubic fit on the 4³
/// block is used when it is well determined; otherwise a quadratic fit,
/// widening to the 6³ block before giving up.
pub fn site_reaction_data(values: &[f64], grid: &Grid, sites: &[MultipoleSite]) -> Result<Vec<Field>> {
    sites
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let inside = |below, above| -> Vec<usize> {
                grid.block_around(&s.position, below, above)
                    .into_iter()
                    .filter(|&i| grid.side(i) == Side::Inside)
                    .collect()
            };
            let near = inside(1, 2);
            if let Some(f) = fit(grid, values, &near, &s.position, CUBIC_TERMS) {
                return Ok(f);
            }
            if let Some(f) = fit(grid, values, &near, &s.position, QUADRATIC_TERMS) {
                return Ok(f);
            }
            let wide = inside(2, 3);
            fit(grid, values, &wide, &s.position, CUBIC_TERMS)
                .or_else(|| fit(grid, values, &wide, &s.position, QUADRATIC_TERMS))
                .ok_or_else(|| {
                    Error::Geometry(format!(
                        "too few grid nodes inside the solute around site {} to reconstruct the reaction field; refine the grid",
                        n + 1
                    ))
                })
        })
        .collect()
}
