//! Certified solver for the constrained recovery problem.
//!
//! The constrained problem is reached through its penalized form
//! `½‖z − Au‖² + λ R(u)`, whose solution path meets the constraint boundary
//! at one `λ`. Each penalized problem is solved by block coordinate descent
//! on a growing working set, with Anderson extrapolation; `λ` is located by
//! a bracketed root search on `log ‖r(λ)‖² = log ε`. Feasible iterates on
//! either side of the root are blended to land exactly on the boundary, and
//! every residual visited yields a dual lower bound.
//!
//! Fine grids make neighbouring columns nearly parallel and coordinate
//! descent crawls. Once its epoch budget is spent, the support found so far
//! seeds an interior-point solve of the restricted problem, grown by dual
//! violators until the certificate closes.
//!
//! The solver stops once the best feasible objective is within the relative
//! tolerance of the best lower bound.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{SparseProblem, SparseSolution};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative duality gap at which a solution is accepted.
    pub tolerance: f64,
    /// Coordinate-descent epochs allowed across all subproblems.
    pub max_epochs: usize,
    /// Penalized subproblems allowed.
    pub max_subproblems: usize,
    /// Epochs after which coordinate descent hands over to the
    /// interior-point finish on a working set.
    pub descent_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_epochs: 100_000,
            max_subproblems: 200,
            descent_budget: 2_000,
        }
    }
}

/// Starting point; also a candidate answer when it is feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<C64>,
    pub y: Vec<Vec<C64>>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Point {
    pub(super) x: Vec<C64>,
    pub(super) y: Vec<Vec<C64>>,
}

impl Point {
    pub(super) fn zeros(p: &SparseProblem) -> Self {
        Self {
            x: alloc::vec![ZERO; p.num_locations() * p.num_stations()],
            y: p.angle_dicts.iter().map(|b| alloc::vec![ZERO; b.cols()]).collect(),
        }
    }

    fn blend(&self, other: &Point, t: f64) -> Point {
        let mix = |a: &C64, b: &C64| a * (1.0 - t) + b * t;
        Point {
            x: self.x.iter().zip(&other.x).map(|(a, b)| mix(a, b)).collect(),
            y: self
                .y
                .iter()
                .zip(&other.y)
                .map(|(u, v)| u.iter().zip(v).map(|(a, b)| mix(a, b)).collect())
                .collect(),
        }
    }
}

/// Exact quantities at one point.
#[derive(Debug, Clone)]
struct Eval {
    rho: f64,
    reg: f64,
    re_rz: f64,
    gx: Vec<C64>,
    gy: Vec<Vec<C64>>,
    dual_norm: f64,
}

pub(super) fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    let mut acc = ZERO;
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

fn dual_norm(p: &SparseProblem, gx: &[C64], gy: &[Vec<C64>]) -> f64 {
    let nl = p.num_stations();
    let rows = gx
        .chunks(nl)
        .map(|g| g.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        / p.weight;
    gy.iter().flatten().map(|v| v.norm()).fold(rows, f64::max)
}

fn evaluate(p: &SparseProblem, u: &Point) -> (Vec<Vec<C64>>, Eval) {
    let r = p.residuals(&u.x, &u.y);
    let ev = evaluate_residual(p, u, &r);
    (r, ev)
}

fn evaluate_residual(p: &SparseProblem, u: &Point, r: &[Vec<C64>]) -> Eval {
    let nl = p.num_stations();
    let nq = p.num_locations();
    let mut gx = alloc::vec![ZERO; nq * nl];
    for (l, rl) in r.iter().enumerate() {
        let d = &p.location_dicts[l];
        for q in 0..nq {
            gx[q * nl + l] = dot_h(d.column(q), rl);
        }
    }
    let gy: Vec<Vec<C64>> = r
        .iter()
        .zip(&p.angle_dicts)
        .map(|(rl, b)| (0..b.cols()).map(|m| dot_h(b.column(m), rl)).collect())
        .collect();
    let rho = r.iter().flatten().map(|v| v.norm_sqr()).sum();
    let re_rz = r
        .iter()
        .zip(&p.snapshots)
        .map(|(rl, zl)| dot_h(rl, zl).re)
        .sum();
    let dn = dual_norm(p, &gx, &gy);
    Eval {
        rho,
        reg: p.objective(&u.x, &u.y),
        re_rz,
        gx,
        gy,
        dual_norm: dn,
    }
}

/// Lower bound from scaling the residual into the dual feasible set.
fn constrained_dual(epsilon: f64, re_rz: f64, rho: f64, dn: f64) -> f64 {
    if dn > 0.0 {
        (re_rz - epsilon.sqrt() * rho.sqrt()) / dn
    } else {
        0.0
    }
}

/// `argmin ½Σ n_l |x_l − b_l/n_l|² + τ‖x‖`.
fn group_prox(b: &[C64], n: &[f64], tau: f64, out: &mut [C64]) {
    let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if nb <= tau {
        out.iter_mut().for_each(|o| *o = ZERO);
        return;
    }
    let n_min = n.iter().copied().fold(f64::INFINITY, f64::min);
    let n_max = n.iter().copied().fold(0.0, f64::max);
    if n_max - n_min <= 1e-14 * n_max {
        let s = (1.0 - tau / nb) / n_max;
        for (o, bi) in out.iter_mut().zip(b) {
            *o = bi * s;
        }
        return;
    }
    // ‖x‖ = t solves Σ|b_l|²/(n_l t + τ)² = 1; the left side decreases in t.
    let g = |t: f64| -> f64 {
        b.iter()
            .zip(n)
            .map(|(bi, ni)| bi.norm_sqr() / (ni * t + tau).powi(2))
            .sum::<f64>()
            - 1.0
    };
    let mut lo = (nb - tau) / n_max;
    let mut hi = (nb - tau) / n_min;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..100 {
        let v = g(t);
        if v > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let dv: f64 = b
            .iter()
            .zip(n)
            .map(|(bi, ni)| -2.0 * ni * bi.norm_sqr() / (ni * t + tau).powi(3))
            .sum();
        let mut next = t - v / dv;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t || hi - lo <= 1e-15 * hi {
            t = next;
            break;
        }
        t = next;
    }
    for ((o, bi), ni) in out.iter_mut().zip(b).zip(n) {
        *o = bi * (t / (ni * t + tau));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(super) enum Coord {
    Row(usize),
    Angle(usize, usize),
}

struct Descent<'a> {
    p: &'a SparseProblem,
    u: Point,
    r: Vec<Vec<C64>>,
    epochs: usize,
    max_epochs: usize,
    b: Vec<C64>,
    n: Vec<f64>,
    new: Vec<C64>,
}

impl<'a> Descent<'a> {
    fn new(p: &'a SparseProblem, u: Point, max_epochs: usize) -> Self {
        let nl = p.num_stations();
        let r = p.residuals(&u.x, &u.y);
        Self {
            p,
            u,
            r,
            epochs: 0,
            max_epochs,
            b: alloc::vec![ZERO; nl],
            n: alloc::vec![0.0; nl],
            new: alloc::vec![ZERO; nl],
        }
    }

    fn update(&mut self, c: Coord, lambda: f64) {
        let p = self.p;
        let nl = p.num_stations();
        match c {
            Coord::Row(q) => {
                for l in 0..nl {
                    let d = &p.location_dicts[l];
                    let n = d.norm_sqr(q);
                    self.n[l] = n;
                    self.b[l] = self.u.x[q * nl + l] * n + dot_h(d.column(q), &self.r[l]);
                }
                group_prox(&self.b, &self.n, lambda * p.weight, &mut self.new);
                for l in 0..nl {
                    let old = self.u.x[q * nl + l];
                    let delta = self.new[l] - old;
                    if delta != ZERO {
                        self.u.x[q * nl + l] = self.new[l];
                        for (ri, a) in self.r[l].iter_mut().zip(p.location_dicts[l].column(q)) {
                            *ri -= a * delta;
                        }
                    }
                }
            }
            Coord::Angle(l, m) => {
                let col = p.angle_dicts[l].column(m);
                let n = p.angle_dicts[l].norm_sqr(m);
                let old = self.u.y[l][m];
                let b = old * n + dot_h(col, &self.r[l]);
                let nb = b.norm();
                let new = if nb <= lambda { ZERO } else { b * ((1.0 - lambda / nb) / n) };
                let delta = new - old;
                if delta != ZERO {
                    self.u.y[l][m] = new;
                    for (ri, a) in self.r[l].iter_mut().zip(col) {
                        *ri -= a * delta;
                    }
                }
            }
        }
    }

    fn gather(&self, ws: &[Coord]) -> Vec<C64> {
        let nl = self.p.num_stations();
        let mut out = Vec::with_capacity(ws.len() * nl);
        for &c in ws {
            match c {
                Coord::Row(q) => out.extend_from_slice(&self.u.x[q * nl..(q + 1) * nl]),
                Coord::Angle(l, m) => out.push(self.u.y[l][m]),
            }
        }
        out
    }

    fn scatter(&mut self, ws: &[Coord], values: &[C64]) {
        let nl = self.p.num_stations();
        let mut k = 0;
        for &c in ws {
            match c {
                Coord::Row(q) => {
                    self.u.x[q * nl..(q + 1) * nl].copy_from_slice(&values[k..k + nl]);
                    k += nl;
                }
                Coord::Angle(l, m) => {
                    self.u.y[l][m] = values[k];
                    k += 1;
                }
            }
        }
    }

    fn penalized_value(&self, lambda: f64) -> f64 {
        let rho: f64 = self.r.iter().flatten().map(|v| v.norm_sqr()).sum();
        0.5 * rho + lambda * self.p.objective(&self.u.x, &self.u.y)
    }

    /// Anderson extrapolation of the last coordinate-descent iterates; the
    /// extrapolated point is kept only when it lowers the penalized
    /// objective.
    fn extrapolate(&mut self, ws: &[Coord], history: &[Vec<C64>], lambda: f64) {
        let k = history.len() - 1;
        let diffs: Vec<Vec<C64>> = history
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect();
        let mut gram = alloc::vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| (a.conj() * b).re).sum();
                gram[i * k + j] = v;
                gram[j * k + i] = v;
            }
        }
        let scale = (0..k).map(|i| gram[i * k + i]).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return;
        }
        for i in 0..k {
            gram[i * k + i] += 1e-10 * scale;
        }
        let Some(c) = solve_spd(&mut gram, alloc::vec![1.0; k], k) else {
            return;
        };
        let total: f64 = c.iter().sum();
        if !(total.abs() > 0.0) || !total.is_finite() {
            return;
        }
        let mut candidate = alloc::vec![ZERO; history[0].len()];
        for (ci, h) in c.iter().zip(&history[1..]) {
            let w = ci / total;
            for (o, v) in candidate.iter_mut().zip(h) {
                *o += v * w;
            }
        }
        let before = self.penalized_value(lambda);
        let current = history[k].clone();
        self.scatter(ws, &candidate);
        self.r = self.p.residuals(&self.u.x, &self.u.y);
        if !(self.penalized_value(lambda) < before) {
            self.scatter(ws, &current);
            self.r = self.p.residuals(&self.u.x, &self.u.y);
        }
    }

    fn is_zero(&self, c: Coord) -> bool {
        let nl = self.p.num_stations();
        match c {
            Coord::Row(q) => self.u.x[q * nl..(q + 1) * nl].iter().all(|v| *v == ZERO),
            Coord::Angle(l, m) => self.u.y[l][m] == ZERO,
        }
    }

    /// Penalized duality gap restricted to the working set.
    fn working_gap(&self, ws: &[Coord], lambda: f64) -> f64 {
        let p = self.p;
        let nl = p.num_stations();
        let mut dn: f64 = 0.0;
        for &c in ws {
            let v = match c {
                Coord::Row(q) => {
                    (0..nl)
                        .map(|l| dot_h(p.location_dicts[l].column(q), &self.r[l]).norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                        / p.weight
                }
                Coord::Angle(l, m) => dot_h(p.angle_dicts[l].column(m), &self.r[l]).norm(),
            };
            dn = dn.max(v);
        }
        let rho: f64 = self.r.iter().flatten().map(|v| v.norm_sqr()).sum();
        let re_rz: f64 = self
            .r
            .iter()
            .zip(&p.snapshots)
            .map(|(rl, zl)| dot_h(rl, zl).re)
            .sum();
        let reg = p.objective(&self.u.x, &self.u.y);
        penalized_gap(rho, reg, re_rz, dn, lambda)
    }

    /// Runs working-set coordinate descent until the penalized gap is at most
    /// `target_gap(reg)`; returns the exact evaluation at the final point.
    fn solve_penalized(&mut self, lambda: f64, kappa: f64) -> Result<Eval> {
        let p = self.p;
        let nl = p.num_stations();
        let mut grow = 1usize;
        let mut prev_gap = f64::INFINITY;
        loop {
            self.r = p.residuals(&self.u.x, &self.u.y);
            let ev = evaluate_residual(p, &self.u, &self.r);
            let gap = penalized_gap(ev.rho, ev.reg, ev.re_rz, ev.dual_norm, lambda);
            let primal = 0.5 * ev.rho + lambda * ev.reg;
            let target = kappa * lambda * ev.reg + 1e-15 * primal;
            if gap <= target {
                return Ok(ev);
            }
            if self.epochs >= self.max_epochs {
                return Ok(ev);
            }
            if gap > 0.5 * prev_gap {
                grow = (grow * 2).min(1 << 20);
            }
            prev_gap = gap;

            // Working set: current support plus the strongest zero coordinates.
            let mut active = Vec::new();
            let mut candidates: Vec<(f64, Coord)> = Vec::new();
            for q in 0..p.num_locations() {
                let c = Coord::Row(q);
                if self.is_zero(c) {
                    let g = ev.gx[q * nl..(q + 1) * nl]
                        .iter()
                        .map(|v| v.norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    candidates.push((g / (p.weight * lambda), c));
                } else {
                    active.push(c);
                }
            }
            for (l, gy) in ev.gy.iter().enumerate() {
                for (m, g) in gy.iter().enumerate() {
                    let c = Coord::Angle(l, m);
                    if self.is_zero(c) {
                        candidates.push((g.norm() / lambda, c));
                    } else {
                        active.push(c);
                    }
                }
            }
            let extra = (active.len().max(8) * grow).min(candidates.len());
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut ws = active;
            ws.extend(candidates.iter().take(extra).map(|(_, c)| *c));
            ws.sort_unstable();

            let inner_target = (0.3 * gap).max(0.5 * target);
            let mut history: Vec<Vec<C64>> = Vec::with_capacity(ANDERSON_DEPTH + 1);
            loop {
                for _ in 0..10 {
                    for &c in &ws {
                        self.update(c, lambda);
                    }
                    self.epochs += 1;
                    history.push(self.gather(&ws));
                    if history.len() > ANDERSON_DEPTH {
                        self.extrapolate(&ws, &history, lambda);
                        history.clear();
                    }
                }
                if self.epochs >= self.max_epochs || self.working_gap(&ws, lambda) <= inner_target {
                    break;
                }
            }
        }
    }
}

const ANDERSON_DEPTH: usize = 5;
/// Cholesky solve of a small symmetric positive definite system.
pub(super) fn solve_spd(a: &mut [f64], mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i * n + k] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k * n + i] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    Some(b)
}

fn penalized_gap(rho: f64, reg: f64, re_rz: f64, dn: f64, lambda: f64) -> f64 {
    let primal = 0.5 * rho + lambda * reg;
    let s = if dn > lambda { lambda / dn } else { 1.0 };
    let dual = s * re_rz - 0.5 * s * s * rho;
    (primal - dual).max(0.0)
}

struct Tracker<'a> {
    p: &'a SparseProblem,
    best: Option<(Point, f64, f64)>,
    lower: f64,
}

impl Tracker<'_> {
    fn offer_feasible(&mut self, u: &Point, obj: f64, rho: f64) {
        if rho <= self.p.epsilon && self.best.as_ref().is_none_or(|(_, b, _)| obj < *b) {
            self.best = Some((u.clone(), obj, rho));
        }
    }

    fn offer_dual(&mut self, re_rz: f64, rho: f64, dn: f64) {
        let d = constrained_dual(self.p.epsilon, re_rz, rho, dn);
        if d > self.lower {
            self.lower = d;
        }
    }

    fn relative_gap(&self) -> f64 {
        match &self.best {
            Some((_, obj, _)) if *obj > 0.0 => (obj - self.lower).max(0.0) / obj,
            Some(_) => 0.0,
            None => f64::INFINITY,
        }
    }
}

/// Blends a feasible and an infeasible point onto the constraint boundary.
fn polish(
    p: &SparseProblem,
    feas: &(Point, Vec<Vec<C64>>, Eval),
    infeas: &(Point, Vec<Vec<C64>>, Eval),
    tracker: &mut Tracker,
) {
    let (uf, rf, ef) = feas;
    let (ui, ri, ei) = infeas;
    let mut a = 0.0;
    let mut b = 0.0;
    for (rfl, ril) in rf.iter().zip(ri) {
        for (x, y) in rfl.iter().zip(ril) {
            let d = y - x;
            a += d.norm_sqr();
            b += (x.conj() * d).re;
        }
    }
    if !(a > 0.0) {
        return;
    }
    // Aim a little inside the boundary so that re-evaluating the point with
    // a different summation order still finds it feasible.
    let c = ef.rho - p.epsilon * (1.0 - 1e-10);
    let disc = (b * b - a * c).max(0.0);
    let mut t = ((-b + disc.sqrt()) / a).clamp(0.0, 1.0);
    // Rounding can leave the root a hair outside; back off geometrically.
    let mut backoff = 1e-12;
    for _ in 0..40 {
        let ut = uf.blend(ui, t);
        let rt = p.residuals(&ut.x, &ut.y);
        let rho: f64 = rt.iter().flatten().map(|v| v.norm_sqr()).sum();
        if rho <= p.epsilon {
            let obj = p.objective(&ut.x, &ut.y);
            tracker.offer_feasible(&ut, obj, rho);
            let re_rz = (1.0 - t) * ef.re_rz + t * ei.re_rz;
            let gx: Vec<C64> = ef.gx.iter().zip(&ei.gx).map(|(x, y)| x * (1.0 - t) + y * t).collect();
            let gy: Vec<Vec<C64>> = ef
                .gy
                .iter()
                .zip(&ei.gy)
                .map(|(u, v)| u.iter().zip(v).map(|(x, y)| x * (1.0 - t) + y * t).collect())
                .collect();
            tracker.offer_dual(re_rz, rho, dual_norm(p, &gx, &gy));
            return;
        }
        t *= 1.0 - backoff;
        backoff = (backoff * 10.0).min(0.5);
    }
}

fn zero_solution(p: &SparseProblem, lambda: f64) -> SparseSolution {
    let u = Point::zeros(p);
    SparseSolution {
        x: u.x,
        y: u.y,
        num_stations: p.num_stations(),
        objective: 0.0,
        residual: p.snapshot_energy(),
        lower_bound: 0.0,
        lambda,
        epochs: 0,
        subproblems: 0,
    }
}

/// Solves the constrained problem to the requested relative duality gap.
pub fn solve(p: &SparseProblem, opts: &SolverOptions, warm: Option<&WarmStart>) -> Result<SparseSolution> {
    let energy = p.snapshot_energy();
    let zero = Point::zeros(p);
    let (r0, e0) = evaluate(p, &zero);
    let lambda_max = e0.dual_norm;
    if energy <= p.epsilon {
        return Ok(zero_solution(p, lambda_max));
    }
    let mut tracker = Tracker {
        p,
        best: None,
        lower: 0.0,
    };
    tracker.offer_dual(e0.re_rz, e0.rho, e0.dual_norm);
    let mut last_feas: Option<(Point, Vec<Vec<C64>>, Eval)> = None;
    let mut last_infeas: Option<(Point, Vec<Vec<C64>>, Eval)> = Some((zero.clone(), r0, e0));

    let mut start = zero;
    let mut lambda = 0.5 * lambda_max;
    if let Some(w) = warm {
        if w.x.len() != start.x.len()
            || w.y.len() != start.y.len()
            || w.y.iter().zip(&start.y).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::LengthMismatch {
                expected: start.x.len(),
                found: w.x.len(),
            });
        }
        let u = Point {
            x: w.x.clone(),
            y: w.y.clone(),
        };
        let (r, ev) = evaluate(p, &u);
        tracker.offer_feasible(&u, ev.reg, ev.rho);
        tracker.offer_dual(ev.re_rz, ev.rho, ev.dual_norm);
        if let Some(l) = w.lambda {
            if l > 0.0 && l < lambda_max {
                lambda = l;
            }
        }
        if ev.rho <= p.epsilon {
            last_feas = Some((u.clone(), r, ev));
        }
        start = u;
    }

    let log_eps = p.epsilon.ln();
    // Bracket in (log λ, log ρ − log ε); lo has f ≤ 0, hi has f > 0.
    let mut lo: Option<(f64, f64)> = None;
    let mut hi: Option<(f64, f64)> = Some((lambda_max.ln(), energy.ln() - log_eps));
    let mut prev_hi: Option<(f64, f64)> = None;
    let mut last_side = 0i8;
    let mut cd = Descent::new(p, start, opts.max_epochs.min(opts.descent_budget));
    let mut kappa = 1e-3;
    let mut rounds = 0;
    for round in 0..opts.max_subproblems {
        rounds = round + 1;
        let ev = cd.solve_penalized(lambda, kappa)?;
        let rho = ev.rho;
        tracker.offer_dual(ev.re_rz, ev.rho, ev.dual_norm);
        let u = cd.u.clone();
        let r = cd.r.clone();
        let f = rho.ln() - log_eps;
        let x = lambda.ln();
        if rho <= p.epsilon {
            tracker.offer_feasible(&u, ev.reg, rho);
            last_feas = Some((u, r, ev));
        } else {
            last_infeas = Some((u, r, ev));
        }
        if let (Some(fe), Some(ie)) = (&last_feas, &last_infeas) {
            polish(p, fe, ie, &mut tracker);
        }
        let gap = tracker.relative_gap();
        if gap <= opts.tolerance {
            return Ok(certified(p, &tracker, lambda, cd.epochs, round + 1));
        }
        if cd.epochs >= opts.max_epochs.min(opts.descent_budget) {
            break;
        }
        if gap.is_finite() {
            kappa = (0.05 * gap).clamp(1e-13, 1e-3);
        }

        // Illinois false position once bracketed; extrapolation otherwise.
        let mut next;
        if f <= 0.0 {
            if last_side == -1 {
                if let Some(h) = hi.as_mut() {
                    h.1 *= 0.5;
                }
            }
            lo = Some((x, f));
            last_side = -1;
        } else {
            if last_side == 1 {
                if let Some(l) = lo.as_mut() {
                    l.1 *= 0.5;
                }
            }
            prev_hi = hi;
            hi = Some((x, f));
            last_side = 1;
        }
        match (lo, hi) {
            (Some((a, fa)), Some((b, fb))) => {
                next = a - fa * (b - a) / (fb - fa);
                let width = b - a;
                if !(next > a + 1e-3 * width && next < b - 1e-3 * width) {
                    next = 0.5 * (a + b);
                }
                if width.abs() < 1e-13 {
                    // Bracket collapsed: the remaining gap is inner inaccuracy.
                    kappa *= 0.01;
                    next = 0.5 * (a + b);
                }
            }
            (None, Some((b, fb))) => {
                let step = match prev_hi {
                    Some((b0, f0)) if f0 > fb && b0 > b => {
                        let slope = (f0 - fb) / (b0 - b);
                        (fb / slope).clamp(0.5f64.ln().abs(), 1000f64.ln())
                    }
                    _ => 4f64.ln(),
                };
                next = b - step;
            }
            (Some((a, _)), None) => {
                next = (a + 2f64.ln()).min(lambda_max.ln() - 1e-9);
            }
            (None, None) => unreachable!("the zero point always brackets from above"),
        }
        lambda = next.exp();
        if !(lambda > lambda_max * 1e-14) {
            break;
        }
    }
    let infeasible = last_infeas.map(|(u, _, _)| u);
    if let Some(lambda) = barrier_finish(p, opts, &mut tracker, infeasible.as_ref()) {
        return Ok(certified(p, &tracker, lambda, cd.epochs, rounds));
    }
    Err(Error::NoCertificate {
        gap: tracker.relative_gap(),
        epochs: cd.epochs,
        subproblems: rounds,
    })
}

fn certified(p: &SparseProblem, tracker: &Tracker, lambda: f64, epochs: usize, subproblems: usize) -> SparseSolution {
    let (u, obj, res) = tracker.best.clone().expect("feasible point exists when gap is finite");
    SparseSolution {
        x: u.x,
        y: u.y,
        num_stations: p.num_stations(),
        objective: obj,
        residual: res,
        lower_bound: tracker.lower.min(obj),
        lambda,
        epochs,
        subproblems,
    }
}

const BARRIER_ROUNDS: usize = 12;
/// Working sets beyond this many complex unknowns are not attempted.
const BARRIER_MAX_ENTRIES: usize = 600;

/// Working-set interior-point finish: solve the problem restricted to the
/// current support, then add the groups whose dual values exceed those of
/// the working set, until the certificate closes. Returns the penalty
/// parameter implied by the final residual.
fn barrier_finish(
    p: &SparseProblem,
    opts: &SolverOptions,
    tracker: &mut Tracker,
    infeasible: Option<&Point>,
) -> Option<f64> {
    let nl = p.num_stations();
    let mut current = match (&tracker.best, infeasible) {
        (Some((u, _, _)), _) => u.clone(),
        (None, Some(u)) => u.clone(),
        (None, None) => Point::zeros(p),
    };
    let mut ws: BTreeSet<Coord> = BTreeSet::new();
    let add_support = |u: &Point, ws: &mut BTreeSet<Coord>| {
        for q in 0..p.num_locations() {
            if u.x[q * nl..(q + 1) * nl].iter().any(|v| *v != ZERO) {
                ws.insert(Coord::Row(q));
            }
        }
        for (l, y) in u.y.iter().enumerate() {
            for (m, v) in y.iter().enumerate() {
                if *v != ZERO {
                    ws.insert(Coord::Angle(l, m));
                }
            }
        }
    };
    add_support(&current, &mut ws);
    if let Some(u) = infeasible {
        add_support(u, &mut ws);
    }
    let mut accuracy = 0.1 * opts.tolerance;
    let (_, mut ev) = evaluate(p, &current);
    let mut infeasible_restriction = false;
    for _ in 0..BARRIER_ROUNDS {
        let added = add_violators(p, &ev, &mut ws, infeasible_restriction);
        infeasible_restriction = false;
        let entries: usize = ws
            .iter()
            .map(|c| match c {
                Coord::Row(_) => nl,
                Coord::Angle(..) => 1,
            })
            .sum();
        if entries > BARRIER_MAX_ENTRIES {
            return None;
        }
        let scale = match &tracker.best {
            Some((_, obj, _)) if *obj > 0.0 => *obj,
            _ => ev.reg.max(f64::MIN_POSITIVE),
        };
        let coords: Vec<Coord> = ws.iter().copied().collect();
        match super::barrier::solve_restricted(p, &coords, &current, accuracy * scale) {
            Some(u) => {
                let (_, e) = evaluate(p, &u);
                tracker.offer_feasible(&u, e.reg, e.rho);
                tracker.offer_dual(e.re_rz, e.rho, e.dual_norm);
                current = u;
                ev = e;
                // Interior points leave every group non-zero; re-solve on
                // the groups that matter so the answer is genuinely sparse.
                let kept = significant(p, &current, &ws);
                if kept.len() < ws.len() {
                    let coords: Vec<Coord> = kept.iter().copied().collect();
                    if let Some(u) = super::barrier::solve_restricted(p, &coords, &current, accuracy * scale) {
                        let (_, e) = evaluate(p, &u);
                        tracker.offer_feasible(&u, e.reg, e.rho);
                        tracker.offer_dual(e.re_rz, e.rho, e.dual_norm);
                        if tracker.relative_gap() <= opts.tolerance {
                            return Some(e.dual_norm);
                        }
                    }
                }
            }
            None => {
                // The restriction cannot fit the snapshots within ε.
                infeasible_restriction = true;
                continue;
            }
        }
        if tracker.relative_gap() <= opts.tolerance {
            return Some(ev.dual_norm);
        }
        if added == 0 {
            accuracy *= 0.01;
        }
    }
    None
}

/// Groups of `ws` whose weighted norm is at least a small fraction of the
/// largest.
fn significant(p: &SparseProblem, u: &Point, ws: &BTreeSet<Coord>) -> BTreeSet<Coord> {
    let nl = p.num_stations();
    let size = |c: &Coord| match *c {
        Coord::Row(q) => p.weight * u.x[q * nl..(q + 1) * nl].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
        Coord::Angle(l, m) => u.y[l][m].norm(),
    };
    let largest = ws.iter().map(size).fold(0.0, f64::max);
    ws.iter().filter(|c| size(c) > PRUNE_FRACTION * largest).copied().collect()
}

const PRUNE_FRACTION: f64 = 1e-5;

/// Adds the groups outside `ws` whose dual value exceeds the largest inside
/// it, or with `force` the strongest outside groups regardless; returns how
/// many were added.
fn add_violators(p: &SparseProblem, ev: &Eval, ws: &mut BTreeSet<Coord>, force: bool) -> usize {
    let nl = p.num_stations();
    let value = |c: Coord| match c {
        Coord::Row(q) => {
            ev.gx[q * nl..(q + 1) * nl].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / p.weight
        }
        Coord::Angle(l, m) => ev.gy[l][m].norm(),
    };
    let inside = ws.iter().map(|c| value(*c)).fold(0.0, f64::max);
    let mut outside: Vec<(f64, Coord)> = (0..p.num_locations())
        .map(Coord::Row)
        .chain((0..nl).flat_map(|l| (0..p.num_angles(l)).map(move |m| Coord::Angle(l, m))))
        .filter(|c| !ws.contains(c))
        .map(|c| (value(c), c))
        .filter(|(v, _)| force || *v > inside * (1.0 + 1e-9))
        .collect();
    outside.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let take = outside.len().min(ws.len().max(16));
    for (_, c) in outside.iter().take(take) {
        ws.insert(*c);
    }
    take
}
