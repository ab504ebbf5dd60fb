//! Independent interior-point solution of the recovery problem through a
//! general conic solver, used to cross-check the built-in solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use disoul_core::sparse::SparseProblem;
use disoul_core::C64;

use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    /// Row-major like the built-in solver: entry `(q, l)` at `q·L + l`.
    pub x: Vec<C64>,
    pub y: Vec<Vec<C64>>,
    pub objective: f64,
    pub status: String,
}

/// Realified second-order cone program.
///
/// Variables, in order: `Re/Im x` per location row, `Re/Im y` per station,
/// one epigraph `t_q` per row and one `u` per angle entry. Cones: one per
/// row `(t_q, x_q)`, one per angle entry `(u, y)`, and the residual cone
/// `(√ε, z − D x − B y)`.
pub fn solve_reference(p: &SparseProblem) -> Result<ReferenceSolution, Error> {
    let nl = p.num_stations();
    let nq = p.num_locations();
    let angles: Vec<usize> = (0..nl).map(|l| p.num_angles(l)).collect();
    let total_angles: usize = angles.iter().sum();
    let rows: Vec<usize> = p.snapshots.iter().map(Vec::len).collect();
    let total_rows: usize = rows.iter().sum();

    let x_re = |q: usize, l: usize| 2 * (q * nl + l);
    let y_base = 2 * nq * nl;
    let mut y_offsets = Vec::with_capacity(nl);
    let mut acc = 0;
    for &m in &angles {
        y_offsets.push(acc);
        acc += m;
    }
    let y_re = |l: usize, m: usize| y_base + 2 * (y_offsets[l] + m);
    let t_base = y_base + 2 * total_angles;
    let u_base = t_base + nq;
    let n = u_base + total_angles;

    let mut c = vec![0.0; n];
    for q in 0..nq {
        c[t_base + q] = p.weight;
    }
    for k in 0..total_angles {
        c[u_base + k] = 1.0;
    }

    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut row = 0;
    let mut push = |i: usize, j: usize, v: f64| {
        ii.push(i);
        jj.push(j);
        vv.push(v);
    };

    for q in 0..nq {
        push(row, t_base + q, -1.0);
        b.push(0.0);
        row += 1;
        for l in 0..nl {
            for part in 0..2 {
                push(row, x_re(q, l) + part, -1.0);
                b.push(0.0);
                row += 1;
            }
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + 2 * nl));
    }
    for l in 0..nl {
        for m in 0..angles[l] {
            push(row, u_base + y_offsets[l] + m, -1.0);
            push(row + 1, y_re(l, m), -1.0);
            push(row + 2, y_re(l, m) + 1, -1.0);
            b.extend([0.0; 3]);
            row += 3;
            cones.push(SupportedConeT::SecondOrderConeT(3));
        }
    }
    // s = b − A v must equal (√ε, Re r, Im r) with r = z − D x − B y, so the
    // data rows of A carry +D and +B in realified form.
    b.push(p.epsilon.sqrt());
    row += 1;
    for l in 0..nl {
        let d = &p.location_dicts[l];
        let bd = &p.angle_dicts[l];
        for s in 0..rows[l] {
            let (re_row, im_row) = (row + 2 * s, row + 2 * s + 1);
            b.push(p.snapshots[l][s].re);
            b.push(p.snapshots[l][s].im);
            let mut put = |col: usize, a: C64| {
                // (a_r + j a_i)(v_r + j v_i): real part a_r v_r − a_i v_i,
                // imaginary part a_i v_r + a_r v_i.
                push(re_row, col, a.re);
                push(re_row, col + 1, -a.im);
                push(im_row, col, a.im);
                push(im_row, col + 1, a.re);
            };
            for q in 0..nq {
                put(x_re(q, l), d.column(q)[s]);
            }
            for m in 0..angles[l] {
                put(y_re(l, m), bd.column(m)[s]);
            }
        }
        row += 2 * rows[l];
    }
    cones.push(SupportedConeT::SecondOrderConeT(1 + 2 * total_rows));
    let m = row;

    let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
    let pm = CscMatrix::zeros((n, n));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(500)
        .tol_gap_abs(1e-10)
        .tol_gap_rel(1e-10)
        .tol_feas(1e-10)
        .build()
        .map_err(|e| Error::Reference(format!("{e:?}")))?;
    let mut solver =
        DefaultSolver::new(&pm, &c, &a, &b, &cones, settings).map_err(|e| Error::Reference(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let status = format!("{:?}", sol.status);
    if !matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        return Err(Error::Reference(format!("conic solver status {status}")));
    }
    let v = &sol.x;
    let x = (0..nq * nl).map(|k| C64::new(v[2 * k], v[2 * k + 1])).collect();
    let y = (0..nl)
        .map(|l| (0..angles[l]).map(|m| C64::new(v[y_re(l, m)], v[y_re(l, m) + 1])).collect())
        .collect();
    Ok(ReferenceSolution {
        x,
        y,
        objective: sol.obj_val,
        status,
    })
}
