//! Discrete operator for the reaction field.
//!
//! The continuous problem is posed for φ_RF = φ − G:
//! inside `−ε⁻ Δφ_RF = 0`, outside `−ε⁺ Δφ_RF + κ̄² φ_RF = −κ̄² G`, with
//! `[φ_RF] = 0`, `[ε ∂φ_RF/∂ν] = (ε⁻ − ε⁺) ∂G/∂ν` and `φ_RF = φ_b − G` on
//! the box. The grid unknown is split: φ_RF on inside nodes and the total
//! potential `φ = φ_RF + G` on outside nodes, where it is smooth and small.
//! Then the exterior equation is homogeneous, the box data is `φ_b`, and the
//! jumps become `[u] = G`, `[ε ∂u/∂ν] = ε⁻ ∂G/∂ν`. Neighbors across Γ are
//! replaced by fictitious values. The matrix depends only on the grid and
//! the dielectric data, so it is built once and reused for every source set.
//!
//! Without a dielectric jump or screening there is no interface problem:
//! φ_RF itself is solved for with zero jumps, which is exact when the box
//! data is, and shifted back to the split form afterwards.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Axis, Side};
use crate::grid::Grid;
use crate::linsolve::{boundary_values, solve, BoundaryModel, CsrMatrix, SolveReport, SolverOptions};
use crate::mib::{fictitious_rules, split_jump_data, Jump, RulePair, RuleStats};
use crate::multipole::{regularized_coulomb, MultipoleSite, Vec3};

const NO_ROW: u32 = u32::MAX;

/// Source multipoles with optional induced dipoles.
#[derive(Debug, Clone, Copy)]
pub struct Sources<'a> {
    pub sites: &'a [MultipoleSite],
    pub induced: Option<&'a [Vec3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Media {
    pub eps_in: f64,
    pub eps_out: f64,
    /// Exterior κ̄², Å⁻².
    pub kappa_bar_sq: f64,
}

/// Row-level contributions to the right-hand side that depend on sources.
#[derive(Debug, Clone, Default)]
struct RowTerms {
    /// (boundary slot, coefficient multiplying φ_RF at that node)
    boundary: Vec<(u32, f64)>,
    /// (crossing, coefficients of value, flux and tangential jumps)
    jumps: Vec<(u32, f64, f64, [f64; 3])>,
}

#[derive(Debug, Clone)]
pub struct MibOperator {
    pub grid: Grid,
    pub media: Media,
    pub rules: Vec<RulePair>,
    pub rule_stats: RuleStats,
    pub matrix: CsrMatrix,
    /// Grid node of each unknown.
    pub unknown_nodes: Vec<usize>,
    row_of: Vec<u32>,
    /// Grid nodes on the box faces, in slot order.
    pub boundary_nodes: Vec<usize>,
    terms: Vec<RowTerms>,
}

/// Assembled right-hand side plus the boundary data it was built from.
#[derive(Debug, Clone)]
pub struct MibSystem {
    pub rhs: Vec<f64>,
    /// φ on `boundary_nodes`.
    pub boundary: Vec<f64>,
    /// Added to the unknowns after the solve to reach the split form; set
    /// when the system was posed for φ_RF on both sides.
    pub shift: Option<Vec<f64>>,
}

/// Split solution on every grid node: φ_RF inside, φ outside.
#[derive(Debug, Clone)]
pub struct ReactionField {
    pub values: Vec<f64>,
    pub report: SolveReport,
}

impl MibOperator {
    pub fn new(grid: Grid, media: Media) -> Result<Self> {
        let (rules, rule_stats) = fictitious_rules(&grid, media.eps_in, media.eps_out)?;
        let n = grid.len();
        let mut row_of = vec![NO_ROW; n];
        let mut boundary_slot = vec![NO_ROW; n];
        let mut unknown_nodes = Vec::new();
        let mut boundary_nodes = Vec::new();
        for i in 0..n {
            if grid.is_boundary(i) {
                boundary_slot[i] = boundary_nodes.len() as u32;
                boundary_nodes.push(i);
            } else {
                row_of[i] = unknown_nodes.len() as u32;
                unknown_nodes.push(i);
            }
        }
        if unknown_nodes.len() >= NO_ROW as usize {
            return Err(Error::Grid("too many unknowns for 32-bit indexing".into()));
        }

        let h2 = grid.h * grid.h;
        let built: Vec<(Vec<(usize, f64)>, RowTerms)> = unknown_nodes
            .par_iter()
            .map(|&node| {
                let side = grid.side(node);
                let eps = if side == Side::Inside { media.eps_in } else { media.eps_out };
                let react = if side == Side::Inside { 0.0 } else { media.kappa_bar_sq };
                let off = eps / h2;
                let mut entries: Vec<(usize, f64)> = vec![(node, 6.0 * off + react)];
                let mut terms = RowTerms::default();
                for axis in Axis::ALL {
                    for dir in [-1isize, 1] {
                        let m = grid.neighbor(node, axis, dir).expect("interior node has six neighbors");
                        if grid.side(m) == side {
                            entries.push((m, -off));
                            continue;
                        }
                        let k = grid
                            .crossing_between(node, axis, dir)
                            .expect("opposite-side neighbors share a crossing");
                        let pair = &rules[k];
                        let rule = if dir > 0 { &pair[1] } else { &pair[0] };
                        debug_assert_eq!(rule.target, m);
                        debug_assert_eq!(rule.side, side);
                        for &(s, w) in &rule.stencil {
                            entries.push((s, -off * w));
                        }
                        terms.jumps.push((k as u32, off * rule.w0, off * rule.w1, rule.wt.map(|w| off * w)));
                    }
                }
                entries.sort_by_key(|e| e.0);
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                for (col, v) in entries {
                    if boundary_slot[col] != NO_ROW {
                        terms.boundary.push((boundary_slot[col], -v));
                        continue;
                    }
                    let c = row_of[col] as usize;
                    match row.last_mut() {
                        Some((last, acc)) if *last == c => *acc += v,
                        _ => row.push((c, v)),
                    }
                }
                (row, terms)
            })
            .collect();

        let mut rows = Vec::with_capacity(built.len());
        let mut terms = Vec::with_capacity(built.len());
        for (r, t) in built {
            rows.push(r);
            terms.push(t);
        }
        let matrix = CsrMatrix::from_rows(rows);
        log::info!(
            "assembled {} unknowns, {} nonzeros, {} crossings",
            matrix.n,
            matrix.nnz(),
            grid.crossings().len()
        );
        Ok(MibOperator {
            grid,
            media,
            rules,
            rule_stats,
            matrix,
            unknown_nodes,
            row_of,
            boundary_nodes,
            terms,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.unknown_nodes.len()
    }

    /// Row of a grid node, or `None` for box-face nodes.
    pub fn row(&self, node: usize) -> Option<usize> {
        let r = self.row_of[node];
        (r != NO_ROW).then_some(r as usize)
    }

    /// Right-hand side from jump data per crossing and φ on the boundary
    /// nodes.
    pub fn rhs_from_parts(&self, jumps: &[Jump], boundary: &[f64]) -> Vec<f64> {
        self.terms
            .par_iter()
            .map(|t| {
                let mut b = 0.0;
                for &(slot, c) in &t.boundary {
                    b += c * boundary[slot as usize];
                }
                for &(k, c0, c1, ct) in &t.jumps {
                    let j = &jumps[k as usize];
                    b += c0 * j.value + c1 * j.flux + Vec3::from(ct).dot(&j.tangential);
                }
                b
            })
            .collect()
    }

    /// No dielectric jump and no screening.
    pub fn is_homogeneous(&self) -> bool {
        self.media.eps_in == self.media.eps_out && self.media.kappa_bar_sq == 0.0
    }

    /// Assembles the right-hand side for the given sources.
    pub fn system(&self, src: &Sources, bc: &BoundaryModel) -> Result<MibSystem> {
        let eps_in = self.media.eps_in;
        let points: Vec<Vec3> = self.boundary_nodes.iter().map(|&i| self.grid.position(i)).collect();
        let boundary = boundary_values(src.sites, src.induced, bc, &points)?;
        let coulomb = |p: &Vec3| regularized_coulomb(src.sites, src.induced, eps_in, p);
        if self.is_homogeneous() {
            let data: Vec<f64> = boundary
                .iter()
                .zip(&points)
                .map(|(b, p)| Ok(b - coulomb(p)?))
                .collect::<Result<_>>()?;
            let shift: Vec<f64> = self
                .unknown_nodes
                .par_iter()
                .map(|&i| match self.grid.side(i) {
                    Side::Inside => Ok(0.0),
                    Side::Outside => coulomb(&self.grid.position(i)),
                })
                .collect::<Result<_>>()?;
            let jumps = vec![Jump::ZERO; self.grid.crossings().len()];
            return Ok(MibSystem { rhs: self.rhs_from_parts(&jumps, &data), boundary, shift: Some(shift) });
        }
        let jumps: Vec<Jump> = self
            .grid
            .crossings()
            .par_iter()
            .map(|c| split_jump_data(&c.point, &c.normal, src.sites, src.induced, eps_in))
            .collect::<Result<_>>()?;
        Ok(MibSystem { rhs: self.rhs_from_parts(&jumps, &boundary), boundary, shift: None })
    }

    /// Solves for the split field on the whole grid, optionally
    /// warm-started from a previous solution.
    pub fn solve(
        &self,
        src: &Sources,
        bc: &BoundaryModel,
        opts: &SolverOptions,
        warm: Option<&[f64]>,
    ) -> Result<ReactionField> {
        let sys = self.system(src, bc)?;
        self.solve_system(&sys, opts, warm)
    }

    pub fn solve_system(&self, sys: &MibSystem, opts: &SolverOptions, warm: Option<&[f64]>) -> Result<ReactionField> {
        let shift = |r: usize| sys.shift.as_ref().map_or(0.0, |s| s[r]);
        let x0: Option<Vec<f64>> =
            warm.map(|full| self.unknown_nodes.iter().enumerate().map(|(r, &i)| full[i] - shift(r)).collect());
        let (mut x, report) = solve(&self.matrix, &sys.rhs, x0.as_deref(), opts)?;
        if let Some(s) = &sys.shift {
            x.iter_mut().zip(s).for_each(|(v, d)| *v += d);
        }
        Ok(ReactionField { values: self.expand(&x, &sys.boundary), report })
    }

    /// Full-grid vector from unknowns and boundary data.
    pub fn expand(&self, x: &[f64], boundary: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        for (r, &i) in self.unknown_nodes.iter().enumerate() {
            full[i] = x[r];
        }
        for (s, &i) in self.boundary_nodes.iter().enumerate() {
            full[i] = boundary[s];
        }
        full
    }

    /// φ_RF at a node from the split solution.
    pub fn reaction_at(&self, rf: &ReactionField, src: &Sources, node: usize) -> Result<f64> {
        let v = rf.values[node];
        if self.grid.side(node) == Side::Inside {
            return Ok(v);
        }
        Ok(v - regularized_coulomb(src.sites, src.induced, self.media.eps_in, &self.grid.position(node))?)
    }
}
