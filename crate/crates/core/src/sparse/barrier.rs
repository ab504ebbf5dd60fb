//! Barrier interior-point method for the constrained problem restricted to a
//! small set of groups.
//!
//! The restricted problem is
//! `min Σ w_g t_g  s.t. ‖u_g‖ ≤ t_g, ‖z − A u‖² ≤ ε`
//! and is followed along the central path of
//! `τ Σ w_g t_g − Σ log(t_g² − ‖u_g‖²) − log(ε − ‖z − A u‖²)`.
//! Newton systems are dense but small: the `t` block is eliminated, leaving
//! twice the number of complex unknowns.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::solver::{dot_h, solve_spd, Coord, Point};
use super::SparseProblem;
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
/// Growth of `τ` between centering stages.
const MU: f64 = 20.0;
const CENTERING_STEPS: usize = 60;

#[derive(Debug, Clone, Copy)]
enum Slot {
    X(usize),
    Y(usize, usize),
}

struct Layout<'a> {
    /// (station, column, slot) per complex unknown.
    entries: Vec<(usize, &'a [C64], Slot)>,
    /// (first entry, entry count, weight) per group.
    groups: Vec<(usize, usize, f64)>,
}

impl<'a> Layout<'a> {
    fn new(p: &'a SparseProblem, coords: &[Coord]) -> Self {
        let nl = p.num_stations();
        let mut entries = Vec::new();
        let mut groups = Vec::with_capacity(coords.len());
        for &c in coords {
            let start = entries.len();
            match c {
                Coord::Row(q) => {
                    for l in 0..nl {
                        entries.push((l, p.location_dicts[l].column(q), Slot::X(q * nl + l)));
                    }
                    groups.push((start, nl, p.weight));
                }
                Coord::Angle(l, m) => {
                    entries.push((l, p.angle_dicts[l].column(m), Slot::Y(l, m)));
                    groups.push((start, 1, 1.0));
                }
            }
        }
        Self { entries, groups }
    }

    fn gather(&self, u: &Point) -> Vec<C64> {
        self.entries
            .iter()
            .map(|e| match e.2 {
                Slot::X(k) => u.x[k],
                Slot::Y(l, m) => u.y[l][m],
            })
            .collect()
    }

    fn scatter(&self, vals: &[C64], out: &mut Point) {
        for (e, v) in self.entries.iter().zip(vals) {
            match e.2 {
                Slot::X(k) => out.x[k] = *v,
                Slot::Y(l, m) => out.y[l][m] = *v,
            }
        }
    }

    /// `A·v` per station.
    fn apply(&self, p: &SparseProblem, vals: &[C64]) -> Vec<Vec<C64>> {
        let mut out: Vec<Vec<C64>> = p.snapshots.iter().map(|z| alloc::vec![ZERO; z.len()]).collect();
        for (e, v) in self.entries.iter().zip(vals) {
            if *v == ZERO {
                continue;
            }
            for (o, a) in out[e.0].iter_mut().zip(e.1) {
                *o += a * v;
            }
        }
        out
    }

    fn residual(&self, p: &SparseProblem, vals: &[C64]) -> Vec<Vec<C64>> {
        let av = self.apply(p, vals);
        p.snapshots
            .iter()
            .zip(av)
            .map(|(z, a)| z.iter().zip(a).map(|(x, y)| x - y).collect())
            .collect()
    }

    fn group_norm(&self, vals: &[C64], g: usize) -> f64 {
        let (s, n, _) = self.groups[g];
        vals[s..s + n].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn energy(r: &[Vec<C64>]) -> f64 {
    r.iter().flatten().map(|v| v.norm_sqr()).sum()
}

/// Real form of `AᴴA` over the layout: entry `i` occupies rows
/// `(2i, 2i + 1) = (Re, Im)`.
fn data_hessian(layout: &Layout) -> Vec<f64> {
    let n = layout.entries.len();
    let dim = 2 * n;
    let mut h = alloc::vec![0.0; dim * dim];
    for i in 0..n {
        for j in 0..=i {
            if layout.entries[i].0 != layout.entries[j].0 {
                continue;
            }
            let g = dot_h(layout.entries[i].1, layout.entries[j].1);
            let block = [[g.re, -g.im], [g.im, g.re]];
            for (a, row) in block.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    h[(2 * i + a) * dim + 2 * j + b] = *v;
                    h[(2 * j + b) * dim + 2 * i + a] = *v;
                }
            }
        }
    }
    h
}

/// Least-squares fit over the layout's columns.
fn least_squares(p: &SparseProblem, layout: &Layout, hd: &[f64]) -> Option<Vec<C64>> {
    let n = layout.entries.len();
    let dim = 2 * n;
    let mut rhs = alloc::vec![0.0; dim];
    for (i, e) in layout.entries.iter().enumerate() {
        let g = dot_h(e.1, &p.snapshots[e.0]);
        rhs[2 * i] = g.re;
        rhs[2 * i + 1] = g.im;
    }
    let mean_diag = (0..dim).map(|k| hd[k * dim + k]).sum::<f64>() / dim as f64;
    let mut damping = 1e-12 * mean_diag;
    for _ in 0..8 {
        let mut h = hd.to_vec();
        for k in 0..dim {
            h[k * dim + k] += damping;
        }
        if let Some(sol) = solve_spd(&mut h, rhs.clone(), dim) {
            return Some((0..n).map(|i| C64::new(sol[2 * i], sol[2 * i + 1])).collect());
        }
        damping *= 100.0;
    }
    None
}

/// Strictly feasible starting values on the segment from `vals` toward the
/// least-squares fit.
fn interior_start(p: &SparseProblem, layout: &Layout, hd: &[f64], vals: Vec<C64>) -> Option<Vec<C64>> {
    let eps = p.epsilon;
    let r = layout.residual(p, &vals);
    let rho = energy(&r);
    let ls = least_squares(p, layout, hd)?;
    let rl = layout.residual(p, &ls);
    let rho_ls = energy(&rl);
    if !(rho_ls < eps) {
        return None;
    }
    let target = eps - 1e-3 * (eps - rho_ls);
    if rho <= target {
        return Some(vals);
    }
    // ρ(s) = ‖r + s(r_ls − r)‖² is a convex quadratic with ρ(1) < target.
    let mut a = 0.0;
    let mut b = 0.0;
    for (x, y) in r.iter().flatten().zip(rl.iter().flatten()) {
        let d = y - x;
        a += d.norm_sqr();
        b += (x.conj() * d).re;
    }
    let c = rho - target;
    let disc = (b * b - a * c).max(0.0);
    let s = if a > 0.0 { ((-b - disc.sqrt()) / a).clamp(0.0, 1.0) } else { 1.0 };
    let mut s = s.max(1e-12);
    for _ in 0..60 {
        let mix: Vec<C64> = vals.iter().zip(&ls).map(|(v, w)| v * (1.0 - s) + w * s).collect();
        if energy(&layout.residual(p, &mix)) < eps {
            return Some(mix);
        }
        s = (2.0 * s).min(1.0);
    }
    None
}

/// Solves the restricted problem over `coords`, starting from `start`,
/// until the barrier duality measure is below `gap` (absolute). Returns the
/// full-size point, or `None` when the restriction cannot meet the residual
/// constraint.
pub(super) fn solve_restricted(p: &SparseProblem, coords: &[Coord], start: &Point, gap: f64) -> Option<Point> {
    let layout = Layout::new(p, coords);
    let n = layout.entries.len();
    let ng = layout.groups.len();
    if n == 0 {
        return None;
    }
    let dim = 2 * n;
    let hd = data_hessian(&layout);
    let mut u = interior_start(p, &layout, &hd, layout.gather(start))?;
    let scale = (0..ng).map(|g| layout.group_norm(&u, g)).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { p.snapshot_energy().sqrt() * 1e-6 };
    let mut t: Vec<f64> = (0..ng).map(|g| layout.group_norm(&u, g) * 1.01 + 1e-3 * scale).collect();
    let weights: Vec<f64> = layout.groups.iter().map(|g| g.2).collect();
    let m = (2 * ng + 1) as f64;
    let obj0: f64 = weights.iter().zip(&t).map(|(w, t)| w * t).sum();
    let mut tau = m / obj0.max(f64::MIN_POSITIVE);

    let barrier = |u: &[C64], t: &[f64], r: &[Vec<C64>], tau: f64| -> f64 {
        let psi = p.epsilon - energy(r);
        if !(psi > 0.0) {
            return f64::INFINITY;
        }
        let mut f = -psi.ln();
        for g in 0..ng {
            let s = layout.group_norm(u, g);
            let phi = t[g] * t[g] - s * s;
            if !(phi > 0.0) || !(t[g] > 0.0) {
                return f64::INFINITY;
            }
            f += tau * weights[g] * t[g] - phi.ln();
        }
        f
    };

    // Every iterate is strictly feasible, so a Newton system too
    // ill-conditioned to factor ends the path at the current point.
    'path: loop {
        for _ in 0..CENTERING_STEPS {
            let r = layout.residual(p, &u);
            let psi = p.epsilon - energy(&r);
            // ∇ψ over u, in the real layout.
            let mut dpsi = alloc::vec![0.0; dim];
            for (i, e) in layout.entries.iter().enumerate() {
                let g = dot_h(e.1, &r[e.0]);
                dpsi[2 * i] = 2.0 * g.re;
                dpsi[2 * i + 1] = 2.0 * g.im;
            }
            let mut grad_u: Vec<f64> = dpsi.iter().map(|d| -d / psi).collect();
            let mut h = alloc::vec![0.0; dim * dim];
            for a in 0..dim {
                for b in 0..dim {
                    h[a * dim + b] = 2.0 * hd[a * dim + b] / psi + dpsi[a] * dpsi[b] / (psi * psi);
                }
            }
            let mut grad_t = alloc::vec![0.0; ng];
            let mut h_tt = alloc::vec![0.0; ng];
            // Off-diagonal u–t coupling per group, over the group's real rows.
            let mut h_ut: Vec<Vec<f64>> = Vec::with_capacity(ng);
            for g in 0..ng {
                let (s0, len, w) = layout.groups[g];
                let nu = layout.group_norm(&u, g);
                let phi = t[g] * t[g] - nu * nu;
                let lo = 2 * s0;
                let hi = 2 * (s0 + len);
                let re: Vec<f64> = (lo..hi)
                    .map(|k| if k % 2 == 0 { u[k / 2].re } else { u[k / 2].im })
                    .collect();
                for a in lo..hi {
                    grad_u[a] += 2.0 * re[a - lo] / phi;
                    for b in lo..hi {
                        let id = if a == b { 2.0 / phi } else { 0.0 };
                        h[a * dim + b] += 4.0 * re[a - lo] * re[b - lo] / (phi * phi) + id;
                    }
                }
                grad_t[g] = tau * w - 2.0 * t[g] / phi;
                h_tt[g] = (2.0 * t[g] * t[g] + 2.0 * nu * nu) / (phi * phi);
                h_ut.push(re.iter().map(|x| -4.0 * t[g] * x / (phi * phi)).collect());
            }
            // Eliminate t.
            let mut rhs: Vec<f64> = grad_u.iter().map(|g| -g).collect();
            for g in 0..ng {
                let (s0, len, _) = layout.groups[g];
                let lo = 2 * s0;
                let hi = 2 * (s0 + len);
                let c = &h_ut[g];
                for a in lo..hi {
                    rhs[a] += c[a - lo] * grad_t[g] / h_tt[g];
                    for b in lo..hi {
                        h[a * dim + b] -= c[a - lo] * c[b - lo] / h_tt[g];
                    }
                }
            }
            let mean_diag = (0..dim).map(|k| h[k * dim + k]).sum::<f64>() / dim as f64;
            let mut damping = 0.0;
            let du = loop {
                let mut hh = h.clone();
                for k in 0..dim {
                    hh[k * dim + k] += damping;
                }
                if let Some(d) = solve_spd(&mut hh, rhs.clone(), dim) {
                    break d;
                }
                damping = if damping == 0.0 { 1e-14 * mean_diag } else { damping * 100.0 };
                if !(damping < mean_diag) {
                    break 'path;
                }
            };
            let dt: Vec<f64> = (0..ng)
                .map(|g| {
                    let (s0, len, _) = layout.groups[g];
                    let lo = 2 * s0;
                    let coupling: f64 = (lo..lo + 2 * len).map(|a| h_ut[g][a - lo] * du[a]).sum();
                    (-grad_t[g] - coupling) / h_tt[g]
                })
                .collect();
            let slope: f64 = grad_u.iter().zip(&du).map(|(g, d)| g * d).sum::<f64>()
                + grad_t.iter().zip(&dt).map(|(g, d)| g * d).sum::<f64>();
            if !(slope < 0.0) || -slope <= 1e-12 {
                break;
            }
            let duc: Vec<C64> = (0..n).map(|i| C64::new(du[2 * i], du[2 * i + 1])).collect();
            let ad = layout.apply(p, &duc);
            let f0 = barrier(&u, &t, &r, tau);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let un: Vec<C64> = u.iter().zip(&duc).map(|(a, b)| a + b * step).collect();
                let tn: Vec<f64> = t.iter().zip(&dt).map(|(a, b)| a + b * step).collect();
                let rn: Vec<Vec<C64>> = r
                    .iter()
                    .zip(&ad)
                    .map(|(rl, al)| rl.iter().zip(al).map(|(x, y)| x - y * step).collect())
                    .collect();
                let fn_ = barrier(&un, &tn, &rn, tau);
                if fn_ <= f0 + 0.25 * step * slope {
                    u = un;
                    t = tn;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved || -slope * 0.5 <= 1e-10 {
                break;
            }
        }
        if m / tau <= gap {
            break;
        }
        tau *= MU;
        if !tau.is_finite() {
            break;
        }
    }

    // Tiny groups are barrier artefacts; drop them when feasibility allows.
    let largest = (0..ng).map(|g| layout.group_norm(&u, g)).fold(0.0, f64::max);
    for rel in [1e-6, 1e-8, 1e-10] {
        let mut trial = u.clone();
        for g in 0..ng {
            if layout.group_norm(&u, g) <= rel * largest {
                let (s0, len, _) = layout.groups[g];
                trial[s0..s0 + len].iter_mut().for_each(|v| *v = ZERO);
            }
        }
        if energy(&layout.residual(p, &trial)) <= p.epsilon {
            u = trial;
            break;
        }
    }
    let mut out = Point::zeros(p);
    layout.scatter(&u, &mut out);
    Some(out)
}
