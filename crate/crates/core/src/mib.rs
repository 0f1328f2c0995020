//! Matched-interface fictitious values.
//!
//! At each crossing between nodes `lo` and `hi = lo + e_a`, the field on
//! each side is continued across Γ by one fictitious value: `F_hi` extends
//! the `lo`-side field to `hi`, `F_lo` extends the `hi`-side field to `lo`.
//! Both come from enforcing `[u] = g0` and `[ε ∂u/∂ν] = g1` at the crossing
//! point using one-dimensional interpolants along the mesh line and
//! one-sided tangential differences, and are returned as linear rules
//! `F = Σ w u + w0 g0 + w1 g1 + wt·s`, where `s` is the jump of the
//! tangential gradient (the surface gradient of `g0`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Axis, Side};
use crate::grid::{Grid, GridCrossing};
use crate::multipole::{total_field, MultipoleSite, Vec3};

/// Fictitious value of the field of `side`, placed at node `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct FictitiousRule {
    pub target: usize,
    pub side: Side,
    pub stencil: Vec<(usize, f64)>,
    pub w0: f64,
    pub w1: f64,
    pub wt: [f64; 3],
    pub crossing: usize,
}

/// Interface data at one crossing: `[u]`, `[ε ∂u/∂ν]` and the tangential
/// part of `[∇u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub value: f64,
    pub flux: f64,
    pub tangential: Vec3,
}

impl Jump {
    pub const ZERO: Jump = Jump { value: 0.0, flux: 0.0, tangential: Vec3::new(0.0, 0.0, 0.0) };
}

impl FictitiousRule {
    pub fn weight_sum(&self) -> f64 {
        self.stencil.iter().map(|&(_, w)| w).sum()
    }

    /// Applies the rule to node values and jump data.
    pub fn apply(&self, values: &[f64], jump: &Jump) -> f64 {
        self.stencil.iter().map(|&(n, w)| w * values[n]).sum::<f64>()
            + self.w0 * jump.value
            + self.w1 * jump.flux
            + Vec3::from(self.wt).dot(&jump.tangential)
    }
}

/// Rules for one crossing: `[F_lo, F_hi]`.
pub type RulePair = [FictitiousRule; 2];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RuleStats {
    pub rules: usize,
    /// Crossings where a tangential derivative fell back to lower order.
    pub degraded: usize,
    pub max_condition: f64,
    pub max_stencil: usize,
}

/// Linear combination of node values, the two fictitious unknowns and the
/// jump data (value, flux, tangential x/y/z).
#[derive(Debug, Clone, Default)]
struct LinForm {
    nodes: Vec<(usize, f64)>,
    f: [f64; 2],
    g: [f64; 5],
}

impl LinForm {
    fn node(n: usize, w: f64) -> Self {
        LinForm { nodes: vec![(n, w)], ..Default::default() }
    }

    fn add(&mut self, other: &LinForm, s: f64) {
        self.nodes.extend(other.nodes.iter().map(|&(n, w)| (n, w * s)));
        self.f[0] += other.f[0] * s;
        self.f[1] += other.f[1] * s;
        for k in 0..5 {
            self.g[k] += other.g[k] * s;
        }
    }

    fn scaled(&self, s: f64) -> LinForm {
        let mut out = LinForm::default();
        out.add(self, s);
        out
    }

    fn compact(&mut self) {
        self.nodes.sort_by_key(|&(n, _)| n);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.nodes.len());
        for &(n, w) in &self.nodes {
            match out.last_mut() {
                Some((m, acc)) if *m == n => *acc += w,
                _ => out.push((n, w)),
            }
        }
        out.retain(|&(_, w)| w != 0.0);
        self.nodes = out;
    }
}

/// Interpolation point: a node value or a fictitious unknown.
#[derive(Debug, Clone, Copy)]
enum Sample {
    Node(usize),
    Fict(usize),
}

impl Sample {
    fn form(self, w: f64) -> LinForm {
        match self {
            Sample::Node(n) => LinForm::node(n, w),
            Sample::Fict(k) => {
                let mut f = LinForm::default();
                f.f[k] = w;
                f
            }
        }
    }
}

/// Lagrange weights for value and first derivative at `t`.
fn lagrange(xs: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let mut val = vec![0.0; n];
    let mut der = vec![0.0; n];
    for i in 0..n {
        let denom: f64 = (0..n).filter(|&j| j != i).map(|j| xs[i] - xs[j]).product();
        let mut v = 1.0;
        for j in (0..n).filter(|&j| j != i) {
            v *= t - xs[j];
        }
        let mut d = 0.0;
        for k in (0..n).filter(|&k| k != i) {
            let mut p = 1.0;
            for j in (0..n).filter(|&j| j != i && j != k) {
                p *= t - xs[j];
            }
            d += p;
        }
        val[i] = v / denom;
        der[i] = d / denom;
    }
    (val, der)
}

/// One-dimensional interpolant along the crossing's mesh line, value and
/// derivative (per Å) at the crossing point.
fn line_interpolant(samples: &[(f64, Sample)], t: f64, h: f64) -> (LinForm, LinForm) {
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let (val, der) = lagrange(&xs, t);
    let mut v = LinForm::default();
    let mut d = LinForm::default();
    for (k, &(_, s)) in samples.iter().enumerate() {
        v.add(&s.form(1.0), val[k]);
        d.add(&s.form(1.0), der[k] / h);
    }
    (v, d)
}

fn same_side(grid: &Grid, n: Option<usize>, side: Side) -> Option<usize> {
    n.filter(|&m| grid.side(m) == side)
}

/// Derivative along `b` at node `n`, from nodes on `side` only.
/// Returns the stencil and its order.
fn axis_derivative(grid: &Grid, n: usize, b: Axis, side: Side) -> Option<(Vec<(usize, f64)>, u8)> {
    let h = grid.h;
    let p1 = same_side(grid, grid.neighbor(n, b, 1), side);
    let m1 = same_side(grid, grid.neighbor(n, b, -1), side);
    if let (Some(p), Some(m)) = (p1, m1) {
        return Some((vec![(p, 0.5 / h), (m, -0.5 / h)], 2));
    }
    if let Some(p) = p1 {
        if let Some(p2) = same_side(grid, grid.neighbor(n, b, 2), side) {
            return Some((vec![(n, -1.5 / h), (p, 2.0 / h), (p2, -0.5 / h)], 2));
        }
    }
    if let Some(m) = m1 {
        if let Some(m2) = same_side(grid, grid.neighbor(n, b, -2), side) {
            return Some((vec![(n, 1.5 / h), (m, -2.0 / h), (m2, 0.5 / h)], 2));
        }
    }
    if let Some(p) = p1 {
        return Some((vec![(n, -1.0 / h), (p, 1.0 / h)], 1));
    }
    m1.map(|m| (vec![(n, 1.0 / h), (m, -1.0 / h)], 1))
}

/// Tangential derivative along `b` at the crossing, estimated on one side.
/// `bases` are same-side nodes on the mesh line (nearest first) with their
/// line coordinates. Returns (form, score); higher scores are better.
fn tangential_on_side(
    grid: &Grid,
    bases: &[(f64, usize)],
    t: f64,
    b: Axis,
    side: Side,
) -> (LinForm, u8) {
    let stencils: Vec<_> = bases.iter().map(|&(_, n)| axis_derivative(grid, n, b, side)).collect();
    let to_form = |st: &[(usize, f64)], s: f64| {
        let mut f = LinForm::default();
        for &(n, w) in st {
            f.nodes.push((n, w * s));
        }
        f
    };
    match stencils.as_slice() {
        [Some((s0, 2)), Some((s1, 2)), ..] => {
            let (x0, x1) = (bases[0].0, bases[1].0);
            let w0 = (t - x1) / (x0 - x1);
            let w1 = (t - x0) / (x1 - x0);
            let mut f = to_form(s0, w0);
            f.add(&to_form(s1, w1), 1.0);
            (f, 3)
        }
        [Some((s0, 2)), ..] => (to_form(s0, 1.0), 2),
        [Some((s0, _)), ..] => (to_form(s0, 1.0), 1),
        _ => (LinForm::default(), 0),
    }
}

fn condition_2x2(m: [[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    let root = (s * s - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((s + root) / 2.0).sqrt();
    let smin = det / smax;
    smax / smin
}

/// Builds the two fictitious-value rules of one crossing.
pub fn crossing_rules(
    grid: &Grid,
    index: usize,
    c: &GridCrossing,
    eps_in: f64,
    eps_out: f64,
) -> Result<(RulePair, bool, f64)> {
    let h = grid.h;
    let a = c.axis;
    let (lo, hi, t) = (c.lo, c.hi, c.t);
    let side_lo = grid.side(lo);
    let side_hi = grid.side(hi);

    let lo_prev = same_side(grid, grid.neighbor(lo, a, -1), side_lo);
    let hi_next = same_side(grid, grid.neighbor(hi, a, 1), side_hi);

    // fictitious unknowns: 0 = F_lo (hi-side field at lo), 1 = F_hi (lo-side field at hi)
    let mut lo_samples = Vec::with_capacity(3);
    if let Some(p) = lo_prev {
        lo_samples.push((-1.0, Sample::Node(p)));
    }
    lo_samples.push((0.0, Sample::Node(lo)));
    lo_samples.push((1.0, Sample::Fict(1)));
    let mut hi_samples = vec![(0.0, Sample::Fict(0)), (1.0, Sample::Node(hi))];
    if let Some(n) = hi_next {
        hi_samples.push((2.0, Sample::Node(n)));
    }
    let (v_lo, d_lo) = line_interpolant(&lo_samples, t, h);
    let (v_hi, d_hi) = line_interpolant(&hi_samples, t, h);

    let (v_in, d_in, v_out, d_out) = if side_lo == Side::Inside {
        (v_lo, d_lo, v_hi, d_hi)
    } else {
        (v_hi, d_hi, v_lo, d_lo)
    };

    let nu = c.normal;
    let deps = eps_out - eps_in;
    let mut lo_bases = vec![(0.0, lo)];
    lo_bases.extend(lo_prev.map(|p| (-1.0, p)));
    let mut hi_bases = vec![(1.0, hi)];
    hi_bases.extend(hi_next.map(|n| (2.0, n)));

    let mut tangential = LinForm::default();
    let mut k_sum = 0.0;
    let mut plus_axes = Vec::with_capacity(2);
    let mut degraded = false;
    for b in Axis::ALL.into_iter().filter(|&b| b != a) {
        let nb = nu[b.index()];
        let (f_lo, s_lo) = tangential_on_side(grid, &lo_bases, t, b, side_lo);
        let (f_hi, s_hi) = tangential_on_side(grid, &hi_bases, t, b, side_hi);
        let outside_lo = side_lo == Side::Outside;
        let pick_lo = s_lo > s_hi || (s_lo == s_hi && outside_lo);
        let (form, score, side) = if pick_lo { (f_lo, s_lo, side_lo) } else { (f_hi, s_hi, side_hi) };
        if score < 3 {
            degraded = true;
        }
        if score == 0 {
            continue;
        }
        tangential.add(&form, nb);
        if side == Side::Outside {
            k_sum += nb * nb;
            plus_axes.push(b);
        }
    }
    let kk = eps_out - deps * k_sum;
    let na = nu[a.index()];

    // [u] - g0 = 0
    let mut eq1 = v_out.clone();
    eq1.add(&v_in, -1.0);
    eq1.g[0] -= 1.0;

    // K (m_a⁺ − m_a⁻ − s_a) + ν_a Δε (m_a⁻ ν_a + Σ_b m_b ν_b − Σ_{b⁺} ν_b s_b) − ν_a g1 = 0
    let mut eq2 = d_out.scaled(kk);
    eq2.add(&d_in, -kk + na * deps * na);
    eq2.add(&tangential, na * deps);
    eq2.g[1] -= na;
    eq2.g[2 + a.index()] -= kk;
    for b in plus_axes {
        eq2.g[2 + b.index()] -= na * deps * nu[b.index()];
    }

    let m = [[eq1.f[0], eq1.f[1]], [eq2.f[0], eq2.f[1]]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let cond = condition_2x2(m);
    if !cond.is_finite() || det == 0.0 {
        return Err(Error::Geometry(format!(
            "singular interface system at crossing {} ({:?} axis); refine the grid",
            index, a
        )));
    }
    if cond > 1e12 {
        log::warn!("ill-conditioned interface system at crossing {index}: cond {cond:.3e}");
    }
    let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
    let mut r1 = eq1;
    r1.f = [0.0; 2];
    let mut r2 = eq2;
    r2.f = [0.0; 2];

    let solve = |row: [f64; 2]| {
        let mut f = r1.scaled(-row[0]);
        f.add(&r2, -row[1]);
        f.compact();
        f
    };
    let f_lo = solve(inv[0]);
    let f_hi = solve(inv[1]);
    let rule = |form: LinForm, target: usize, side: Side| FictitiousRule {
        target,
        side,
        stencil: form.nodes,
        w0: form.g[0],
        w1: form.g[1],
        wt: [form.g[2], form.g[3], form.g[4]],
        crossing: index,
    };
    Ok((
        [rule(f_lo, lo, side_hi), rule(f_hi, hi, side_lo)],
        degraded,
        cond,
    ))
}

/// Fictitious-value rules for every crossing of the grid, indexed like
/// `grid.crossings()`.
pub fn fictitious_rules(grid: &Grid, eps_in: f64, eps_out: f64) -> Result<(Vec<RulePair>, RuleStats)> {
    let built: Vec<(RulePair, bool, f64)> = grid
        .crossings()
        .par_iter()
        .enumerate()
        .map(|(k, c)| crossing_rules(grid, k, c, eps_in, eps_out))
        .collect::<Result<_>>()?;
    let mut stats = RuleStats::default();
    let mut rules = Vec::with_capacity(built.len());
    for (pair, degraded, cond) in built {
        stats.rules += 2;
        stats.degraded += degraded as usize;
        stats.max_condition = stats.max_condition.max(cond);
        stats.max_stencil = stats.max_stencil.max(pair[0].stencil.len()).max(pair[1].stencil.len());
        rules.push(pair);
    }
    if stats.degraded > 0 {
        log::info!("{} of {} crossings used reduced-order tangential differences", stats.degraded, rules.len());
    }
    Ok((rules, stats))
}

/// Jump data of φ_RF at a crossing: `g0 = 0`, `g1 = (ε⁻ − ε⁺) ∂G/∂ν` with
/// `G = Σ Gⁿ / ε⁻` including induced dipoles.
pub fn jump_data(
    point: &Vec3,
    normal: &Vec3,
    sites: &[MultipoleSite],
    induced: Option<&[Vec3]>,
    eps_in: f64,
    eps_out: f64,
) -> Result<Jump> {
    let grad = total_field(sites, induced, point)?.gradient / eps_in;
    Ok(Jump { value: 0.0, flux: (eps_in - eps_out) * grad.dot(normal), tangential: Vec3::zeros() })
}

/// Jump data for the split unknown (φ_RF inside, φ outside):
/// `[u] = G`, `[ε ∂u/∂ν] = ε⁻ ∂G/∂ν`, tangential jump `(I − ννᵀ)∇G`.
pub fn split_jump_data(
    point: &Vec3,
    normal: &Vec3,
    sites: &[MultipoleSite],
    induced: Option<&[Vec3]>,
    eps_in: f64,
) -> Result<Jump> {
    let f = total_field(sites, induced, point)?;
    let grad = f.gradient / eps_in;
    Ok(Jump {
        value: f.value / eps_in,
        flux: eps_in * grad.dot(normal),
        tangential: grad - normal * grad.dot(normal),
    })
}
