//! Dirichlet boundary data and a Jacobi-preconditioned BiCGSTAB solver for
//! the sparse interface system.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BoundaryCondition, Preconditioner, RunConfig};
use crate::error::{Error, Result};
use crate::multipole::{MultipoleSite, Vec3};

/// Parameters of the far-field model used on the box faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryModel {
    pub mode: BoundaryCondition,
    pub eps_in: f64,
    pub eps_out: f64,
    /// Debye screening constant, Å⁻¹.
    pub kappa: f64,
    /// Sphere radius of the multipole Debye–Hückel model, Å.
    pub sphere_radius: f64,
}

impl BoundaryModel {
    pub fn from_config(cfg: &RunConfig) -> Self {
        BoundaryModel {
            mode: cfg.boundary_condition,
            eps_in: cfg.eps_in,
            eps_out: cfg.eps_out,
            kappa: cfg.debye_kappa(),
            sphere_radius: cfg.bc_sphere_radius,
        }
    }
}

/// Radial function e^{-κx} p_ℓ(κx) / x^{ℓ+1} and its derivative.
fn radial(l: usize, kappa: f64, x: f64) -> (f64, f64) {
    let y = kappa * x;
    let (p, dp) = match l {
        0 => (1.0, 0.0),
        1 => (1.0 + y, 1.0),
        _ => (y * y + 3.0 * y + 3.0, 2.0 * y + 3.0),
    };
    let e = (-y).exp();
    let pw = x.powi(l as i32 + 1);
    let r = e * p / pw;
    let dr = e * kappa * (dp - p) / pw - (l as f64 + 1.0) * r / x;
    (r, dr)
}

/// Coefficient C_ℓ of the exterior solution for a unit ℓ-pole at the
/// center of a dielectric sphere of radius `a`.
pub fn mdh_coefficient(l: usize, eps_in: f64, eps_out: f64, kappa: f64, a: f64) -> f64 {
    let (r, dr) = radial(l, kappa, a);
    let lf = l as f64;
    (2.0 * lf + 1.0) / (a.powi(l as i32 + 2) * (eps_in * lf * r / a - eps_out * dr))
}

/// Far-field potential φ_b at `r` (no Coulomb constant).
pub fn boundary_potential(
    sites: &[MultipoleSite],
    induced: Option<&[Vec3]>,
    model: &BoundaryModel,
    coeffs: &[f64; 3],
    r: &Vec3,
) -> Result<f64> {
    let k = model.kappa;
    let mut acc = 0.0;
    for (n, site) in sites.iter().enumerate() {
        let s = r - site.position;
        let dist = s.norm();
        if dist < 1e-12 {
            return Err(Error::Singular { distance: dist });
        }
        let p = site.d + induced.map_or(Vec3::zeros(), |mu| mu[n]);
        match model.mode {
            BoundaryCondition::Sdh => {
                acc += site.q * (-k * dist).exp() / (model.eps_out * dist);
            }
            BoundaryCondition::Coulomb => {
                let inv = 1.0 / dist;
                let g = site.q * inv + p.dot(&s) * inv.powi(3) + 0.5 * s.dot(&(site.quad * s)) * inv.powi(5);
                acc += g * (-k * dist).exp() / model.eps_out;
            }
            BoundaryCondition::Mdh => {
                let hat = s / dist;
                let t = [site.q, p.dot(&hat), 0.5 * hat.dot(&(site.quad * hat))];
                for l in 0..3 {
                    if t[l] != 0.0 {
                        acc += coeffs[l] * t[l] * radial(l, k, dist).0;
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// φ_b at every point of `points`.
pub fn boundary_values(
    sites: &[MultipoleSite],
    induced: Option<&[Vec3]>,
    model: &BoundaryModel,
    points: &[Vec3],
) -> Result<Vec<f64>> {
    let a = model.sphere_radius;
    let coeffs = [0, 1, 2].map(|l| mdh_coefficient(l, model.eps_in, model.eps_out, model.kappa, a));
    points
        .par_iter()
        .map(|r| boundary_potential(sites, induced, model, &coeffs, r))
        .collect()
}

/// Square sparse matrix in compressed row form.
#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c as u32);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().zip(&self.vals[range]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).filter(|&(c, _)| c == i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_chunks_mut(4096).enumerate().for_each(|(chunk, out)| {
            let base = chunk * 4096;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let mut acc = 0.0;
                for j in s..e {
                    acc += self.vals[j] * x[self.cols[j] as usize];
                }
                *yi = acc;
            }
        });
    }

    /// ‖b − Ax‖₂
    pub fn residual_norm(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        ax.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual ‖b − Ax‖/‖b‖, recomputed at exit.
    pub residual: f64,
    /// Seconds.
    pub wall_time: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iters: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl SolverOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        SolverOptions {
            tolerance: cfg.solver_tolerance,
            max_iters: cfg.solver_max_iters,
            preconditioner: cfg.preconditioner,
        }
    }

    pub fn iteration_limit(&self, n: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| (1000.0 * (n.max(1) as f64).cbrt()).ceil() as usize)
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iters: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` with BiCGSTAB, starting from `x0` (or zero). The
/// preconditioner is applied on the right so the monitored residual is
/// the true residual. Returns the solution even when not converged.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolverOptions) -> (Vec<f64>, SolveReport) {
    let start = Instant::now();
    let n = a.n;
    let limit = opts.iteration_limit(n);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        let report = SolveReport { iterations: 0, residual: 0.0, wall_time: 0.0, converged: true };
        return (x, report);
    }
    let inv_diag: Vec<f64> = match opts.preconditioner {
        Preconditioner::Jacobi => a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect(),
        Preconditioner::None => vec![1.0; n],
    };
    let precond = |src: &[f64], dst: &mut [f64]| {
        dst.iter_mut().zip(src).zip(&inv_diag).for_each(|((d, s), m)| *d = s * m);
    };
    let tol = opts.tolerance * bnorm;

    let mut r = vec![0.0; n];
    let mut rhat = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];

    let mut iterations = 0;
    'restart: while iterations < limit {
        a.matvec(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let mut rnorm = norm(&r);
        if rnorm <= tol {
            break;
        }
        rhat.copy_from_slice(&r);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);

        while iterations < limit {
            iterations += 1;
            let rho_new = dot(&rhat, &r);
            if rho_new.abs() < 1e-30 * bnorm * bnorm {
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p.iter_mut().zip(&r).zip(&v).for_each(|((pi, ri), vi)| *pi = ri + beta * (*pi - omega * vi));
            precond(&p, &mut y);
            a.matvec(&y, &mut v);
            let denom = dot(&rhat, &v);
            if denom == 0.0 {
                continue 'restart;
            }
            alpha = rho / denom;
            s.iter_mut().zip(&r).zip(&v).for_each(|((si, ri), vi)| *si = ri - alpha * vi);
            let snorm = norm(&s);
            if snorm <= tol {
                x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi += alpha * yi);
                rnorm = snorm;
                break;
            }
            precond(&s, &mut z);
            a.matvec(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            x.iter_mut()
                .zip(&y)
                .zip(&z)
                .for_each(|((xi, yi), zi)| *xi += alpha * yi + omega * zi);
            r.iter_mut().zip(&s).zip(&t).for_each(|((ri, si), ti)| *ri = si - omega * ti);
            rnorm = norm(&r);
            if rnorm <= tol {
                break;
            }
            if omega == 0.0 {
                continue 'restart;
            }
        }
        // certify against the recomputed residual; restart if it drifted
        let true_rel = a.residual_norm(&x, b) / bnorm;
        if true_rel <= opts.tolerance {
            break;
        }
        log::debug!("bicgstab: recurrence residual {:.3e} drifted to {:.3e}, restarting", rnorm / bnorm, true_rel);
    }
    let residual = a.residual_norm(&x, b) / bnorm;
    let report = SolveReport {
        iterations,
        residual,
        wall_time: start.elapsed().as_secs_f64(),
        converged: residual <= opts.tolerance,
    };
    log::debug!("bicgstab: {} iterations, residual {:.3e}", iterations, residual);
    (x, report)
}

/// Like [`bicgstab`] but reports non-convergence as an error.
pub fn solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
    let (x, report) = bicgstab(a, b, x0, opts);
    if !report.converged {
        return Err(Error::NotConverged(report));
    }
    Ok((x, report))
}
