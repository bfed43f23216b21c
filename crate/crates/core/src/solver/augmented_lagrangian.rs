//! Augmented-Lagrangian outer loop with a bound-constrained Newton-type
//! inner solver.
//!
//! Every nonlinear term of the transcription is node-local, so the Hessian
//! of the Lagrangian is a sum of small per-node blocks. Each block comes from
//! second differences of the node's Lagrangian contribution, with its
//! eigenvalues replaced by their magnitudes so the sum stays positive
//! semidefinite. The penalty curvature is the Gauss-Newton term `mu J^T J`.
//! Bounds are handled by projected steps on the free variables.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::transcription::{CollocationNlp, Derivatives, Evaluation};
use crate::error::{Error, Result};

const MU_INIT: f64 = 10.0;
const MU_MAX: f64 = 1e9;
const ARMIJO: f64 = 1e-4;
/// Eigenvalue floor of the per-node blocks, relative to the block's largest.
const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct AlOutcome {
    pub w: Vec<f64>,
    pub converged: bool,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub message: String,
}

struct Multipliers {
    eq: Vec<f64>,
    ineq: Vec<f64>,
    mu: f64,
}

impl Multipliers {
    fn merit(&self, e: &Evaluation) -> f64 {
        let mut v = e.objective;
        for (c, l) in e.eq.iter().zip(&self.eq) {
            v += l * c + 0.5 * self.mu * c * c;
        }
        for (h, n) in e.ineq.iter().zip(&self.ineq) {
            let a = (n + self.mu * h).max(0.0);
            v += (a * a - n * n) / (2.0 * self.mu);
        }
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn eq_estimate(&self, e: &Evaluation) -> Vec<f64> {
        e.eq.iter().zip(&self.eq).map(|(c, l)| l + self.mu * c).collect()
    }

    fn ineq_estimate(&self, e: &Evaluation) -> Vec<f64> {
        e.ineq
            .iter()
            .zip(&self.ineq)
            .map(|(h, n)| (n + self.mu * h).max(0.0))
            .collect()
    }

    fn gradient(&self, d: &Derivatives) -> Vec<f64> {
        let mut g = d.grad.clone();
        d.jac_eq.add_transpose_mul(&self.eq_estimate(&d.eval), &mut g);
        d.jac_ineq.add_transpose_mul(&self.ineq_estimate(&d.eval), &mut g);
        g
    }
}

fn project(w: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..w.len() {
        w[i] = w[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient_norm(w: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..w.len())
        .map(|i| (w[i] - (w[i] - g[i]).clamp(lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn max_violation(e: &Evaluation) -> f64 {
    let eq = e.eq.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let ineq = e.ineq.iter().fold(0.0_f64, |a, h| a.max(*h));
    eq.max(ineq)
}

pub(crate) fn solve(nlp: &CollocationNlp, w0: Vec<f64>) -> Result<AlOutcome> {
    let opts = nlp.options();
    let dim = nlp.dim();
    let (lo, hi) = nlp.bounds();
    let mut w = w0;
    project(&mut w, &lo, &hi);

    let mut mult = Multipliers {
        eq: vec![0.0; nlp.num_eq()],
        ineq: vec![0.0; nlp.num_ineq()],
        mu: MU_INIT,
    };
    let fixed: Vec<bool> = (0..dim).map(|i| lo[i] == hi[i]).collect();

    let mut deriv = nlp.derivatives(&w)?;
    check_point(&deriv)?;
    let mut inner_tol = 1e-2_f64.max(opts.kkt_tolerance);
    let mut prev_v = f64::INFINITY;
    let mut total_inner = 0;
    let mut kkt = f64::INFINITY;
    let mut viol = max_violation(&deriv.eval);
    let mut damping = 1e-8;

    for outer in 1..=opts.max_outer_iterations {
        let mut grad = mult.gradient(&deriv);
        let mut phi = mult.merit(&deriv.eval);
        let mut stalled = false;
        for _ in 0..opts.max_inner_iterations {
            let pg = projected_gradient_norm(&w, &grad, &lo, &hi);
            if pg <= inner_tol {
                break;
            }
            total_inner += 1;
            let eps = pg.min(1e-6);
            let active: Vec<bool> = (0..dim)
                .map(|i| {
                    fixed[i]
                        || (w[i] <= lo[i] + eps && grad[i] > 0.0)
                        || (w[i] >= hi[i] - eps && grad[i] < 0.0)
                })
                .collect();
            let hess = assemble_hessian(nlp, &w, &deriv, &mult);
            let mut accepted = None;
            for _attempt in 0..12 {
                let step = match newton_step(&hess, &grad, &active, damping) {
                    Some(s) => s,
                    None => {
                        damping = (damping * 10.0).max(1e-8);
                        continue;
                    }
                };
                if let Some(found) = line_search(nlp, &mult, &w, &step, &grad, phi, &lo, &hi) {
                    accepted = Some(found);
                    break;
                }
                damping = (damping * 10.0).max(1e-6);
            }
            let Some((w_new, phi_new, full_step)) = accepted else {
                stalled = true;
                break;
            };
            if full_step {
                damping = (damping * 0.25).max(1e-10);
            }
            if opts.verbosity >= 2 {
                log::debug!(
                    "al inner={} merit={:.10e} pg={:.3e} damping={:.1e} full_step={}",
                    total_inner,
                    phi_new,
                    pg,
                    damping,
                    full_step
                );
            }
            w = w_new;
            deriv = nlp.derivatives(&w)?;
            check_point(&deriv)?;
            phi = phi_new;
            grad = mult.gradient(&deriv);
        }

        // multiplier and penalty updates
        let e = &deriv.eval;
        let comp = e
            .ineq
            .iter()
            .zip(&mult.ineq)
            .map(|(h, n)| (-h).min(n / mult.mu).abs())
            .fold(0.0_f64, f64::max);
        let eq_inf = e.eq.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let v = eq_inf.max(comp);
        kkt = projected_gradient_norm(&w, &grad, &lo, &hi);
        viol = max_violation(e);
        mult.eq = mult.eq_estimate(e);
        mult.ineq = mult.ineq_estimate(e);

        if opts.verbosity >= 1 {
            log::info!(
                "al outer={} inner_total={} objective={:.10e} kkt={:.3e} violation={:.3e} mu={:.1e}",
                outer,
                total_inner,
                e.objective,
                kkt,
                viol,
                mult.mu
            );
        }

        let tol = opts.path_constraint_tolerance;
        if viol <= tol && v <= tol && kkt <= opts.kkt_tolerance {
            return Ok(AlOutcome {
                w,
                converged: true,
                kkt_residual: kkt,
                max_violation: viol,
                outer_iterations: outer,
                inner_iterations: total_inner,
                message: "converged".into(),
            });
        }
        if v > 0.25 * prev_v || (stalled && v > tol) {
            mult.mu = (mult.mu * 10.0).min(MU_MAX);
        }
        prev_v = v.min(prev_v);
        inner_tol = (inner_tol * 0.1).max(opts.kkt_tolerance);
        if v <= tol {
            inner_tol = opts.kkt_tolerance;
        }
    }

    Ok(AlOutcome {
        w,
        converged: false,
        kkt_residual: kkt,
        max_violation: viol,
        outer_iterations: opts.max_outer_iterations,
        inner_iterations: total_inner,
        message: "iteration limit reached".into(),
    })
}

fn check_point(d: &Derivatives) -> Result<()> {
    if let Some(index) = d.grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "objective gradient",
            index,
        });
    }
    Ok(())
}

/// Replaces eigenvalues by their magnitudes, with a small relative floor.
fn make_positive(block: DMatrix<f64>) -> DMatrix<f64> {
    let eig = block.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let floor = EIGEN_FLOOR * top;
    let vals = eig
        .eigenvalues
        .map(|v| if v.is_finite() { v.abs().max(floor) } else { floor });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn assemble_hessian(nlp: &CollocationNlp, w: &[f64], d: &Derivatives, mult: &Multipliers) -> DMatrix<f64> {
    let (naug, k) = (nlp.naug(), nlp.k);
    let lam = mult.eq_estimate(&d.eval);
    let nu = mult.ineq_estimate(&d.eval);
    let tfi = nlp.tf_index();
    let blocks: Vec<(Vec<usize>, DMatrix<f64>)> = (0..nlp.nodes)
        .into_par_iter()
        .map(|node| {
            let mut coef = vec![0.0; naug];
            if node > 0 {
                let h = nlp.tau[node] - nlp.tau[node - 1];
                for (i, c) in coef.iter_mut().enumerate() {
                    *c += 0.5 * h * lam[(node - 1) * naug + i];
                }
            }
            if node + 1 < nlp.nodes {
                let h = nlp.tau[node + 1] - nlp.tau[node];
                for (i, c) in coef.iter_mut().enumerate() {
                    *c += 0.5 * h * lam[node * naug + i];
                }
            }
            let block = nlp.node_hessian(w, node, &coef, &nu[node * k..(node + 1) * k]);
            let mut cols = nlp.node_columns(node);
            cols.push(tfi);
            (cols, make_positive(block))
        })
        .collect();
    let mut h = DMatrix::zeros(nlp.dim(), nlp.dim());
    for (cols, block) in &blocks {
        scatter(&mut h, cols, block);
    }
    let term = nlp.terminal_hessian(w, &lam[(nlp.nodes - 1) * naug..]);
    if term.iter().any(|v| *v != 0.0) {
        let last = nlp.state_index(nlp.nodes - 1, 0);
        let mut cols: Vec<usize> = (last..last + nlp.n).collect();
        cols.push(tfi);
        scatter(&mut h, &cols, &make_positive(term));
    }
    let mu = mult.mu;
    for row in &d.jac_eq.rows {
        add_outer(&mut h, row, mu);
    }
    for (j, row) in d.jac_ineq.rows.iter().enumerate() {
        if nu[j] > 0.0 {
            add_outer(&mut h, row, mu);
        }
    }
    h
}

fn scatter(h: &mut DMatrix<f64>, cols: &[usize], block: &DMatrix<f64>) {
    for (a, &ca) in cols.iter().enumerate() {
        for (b, &cb) in cols.iter().enumerate() {
            h[(ca, cb)] += block[(a, b)];
        }
    }
}

fn add_outer(h: &mut DMatrix<f64>, row: &[(usize, f64)], scale: f64) {
    for &(ca, va) in row {
        for &(cb, vb) in row {
            h[(ca, cb)] += scale * va * vb;
        }
    }
}

/// Newton step on the free variables; active variables take a scaled
/// gradient step that the projection then clips.
fn newton_step(hess: &DMatrix<f64>, grad: &[f64], active: &[bool], damping: f64) -> Option<Vec<f64>> {
    let dim = grad.len();
    let free: Vec<usize> = (0..dim).filter(|&i| !active[i]).collect();
    let mut step = vec![0.0; dim];
    for i in 0..dim {
        if active[i] {
            step[i] = -grad[i] / hess[(i, i)].max(1e-8);
        }
    }
    if free.is_empty() {
        return Some(step);
    }
    let nf = free.len();
    let diag_max = free.iter().map(|&i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut reduced = DMatrix::zeros(nf, nf);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            reduced[(a, b)] = hess[(i, j)];
        }
        reduced[(a, a)] += damping * diag_max;
    }
    let rhs = nalgebra::DVector::from_iterator(nf, free.iter().map(|&i| -grad[i]));
    let chol = reduced.cholesky()?;
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (a, &i) in free.iter().enumerate() {
        step[i] = sol[a];
    }
    Some(step)
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    nlp: &CollocationNlp,
    mult: &Multipliers,
    w: &[f64],
    step: &[f64],
    grad: &[f64],
    phi: f64,
    lo: &[f64],
    hi: &[f64],
) -> Option<(Vec<f64>, f64, bool)> {
    let mut alpha = 1.0;
    for _ in 0..40 {
        let mut trial: Vec<f64> = w.iter().zip(step).map(|(a, b)| a + alpha * b).collect();
        project(&mut trial, lo, hi);
        let dec: f64 = grad
            .iter()
            .zip(trial.iter().zip(w))
            .map(|(g, (t, x))| g * (t - x))
            .sum();
        if dec >= 0.0 {
            // projected path is not a descent direction at this scale
            alpha *= 0.5;
            if alpha < 1e-12 {
                return None;
            }
            continue;
        }
        let value = match nlp.evaluate(&trial) {
            Ok(e) => mult.merit(&e),
            Err(_) => f64::INFINITY,
        };
        if value <= phi + ARMIJO * dec {
            return Some((trial, value, alpha == 1.0));
        }
        alpha *= 0.5;
        if alpha < 1e-12 {
            return None;
        }
    }
    None
}
