//! Trapezoidal direct collocation of the (optionally sensitivity-augmented)
//! optimal-control problem.
//!
//! Decision vector layout, `N` nodes:
//!
//! ```text
//! [ z_0 .. z_{N-1} | u_0 .. u_{N-1} | t_f ]     z_i = [x_i, vec S_i (tracked entries)]
//! ```
//!
//! Time is scaled as `t = t0 + tau (t_f - t0)` with `tau` uniform on `[0, 1]`.
//! Every nonlinear quantity is a function of one node's variables and `t_f`,
//! so all derivatives are assembled from node-local central differences.

use nalgebra::DMatrix;

use super::sparse::SparseRows;
use super::{CostMode, TranscriptionOptions};
use crate::error::{Error, Result};
use crate::ocp::{OcpProblem, Trajectory};
use crate::relevance::{rcs_matrix, RcsWeights};
use crate::sensitivity::{constraint_partials, fd_step, jacobians_at, JacobianScheme};

#[derive(Debug, Clone)]
pub struct CollocationNlp {
    pub(crate) problem: OcpProblem,
    pub(crate) options: TranscriptionOptions,
    pub(crate) scheme: JacobianScheme,
    /// Tracked `(state, param)` sensitivity entries, empty in nominal mode.
    pub(crate) entries: Vec<(usize, usize)>,
    pub(crate) n: usize,
    pub(crate) ns: usize,
    pub(crate) m: usize,
    pub(crate) k: usize,
    pub(crate) q: usize,
    pub(crate) nodes: usize,
    pub(crate) tau: Vec<f64>,
    pub(crate) quad: Vec<f64>,
}

/// Values of the node-local functions.
#[derive(Debug, Clone, Default)]
pub(crate) struct NodeValues {
    /// `[f; vec(A S + B)]` over tracked entries.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub running: f64,
    pub sens: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub nominal: f64,
    pub sensitivity: f64,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub(crate) nodes: Vec<NodeValues>,
}

#[derive(Debug, Clone)]
pub struct Derivatives {
    pub eval: Evaluation,
    pub tf: f64,
    pub grad: Vec<f64>,
    pub jac_eq: SparseRows,
    pub jac_ineq: SparseRows,
}

impl CollocationNlp {
    pub(crate) fn new(problem: &OcpProblem, options: &TranscriptionOptions) -> Result<Self> {
        options.validate()?;
        let n = problem.state_dim();
        let l = problem.param_dim();
        let k = problem.constraint_dim();
        let entries = match options.cost_mode {
            CostMode::Nominal => Vec::new(),
            _ => problem.sensitivity_entries(),
        };
        if options.cost_mode == CostMode::Nominal && !options.weights.is_zero() {
            log::warn!("nominal cost mode ignores nonzero sensitivity weights");
        }
        if let Some(dim) = options.weights.dim() {
            let expected = match options.cost_mode {
                CostMode::Nominal => dim,
                CostMode::Doc => n * l,
                CostMode::Naive | CostMode::Rcs => k * l,
            };
            if dim != expected {
                return Err(Error::DimensionMismatch {
                    what: "sensitivity weight matrix Q",
                    expected,
                    got: dim,
                });
            }
        }
        let scheme = options
            .jacobian_scheme
            .unwrap_or_else(|| JacobianScheme::preferred(problem));
        let nodes = options.num_nodes;
        let tau: Vec<f64> = (0..nodes).map(|i| i as f64 / (nodes - 1) as f64).collect();
        let mut quad = vec![0.0; nodes];
        for i in 0..nodes - 1 {
            let h = tau[i + 1] - tau[i];
            quad[i] += 0.5 * h;
            quad[i + 1] += 0.5 * h;
        }
        Ok(Self {
            problem: problem.clone(),
            options: options.clone(),
            scheme,
            ns: entries.len(),
            entries,
            n,
            m: problem.control_dim(),
            k,
            q: problem.terminal_dim(),
            nodes,
            tau,
            quad,
        })
    }

    pub fn problem(&self) -> &OcpProblem {
        &self.problem
    }

    pub fn options(&self) -> &TranscriptionOptions {
        &self.options
    }

    /// Number of decision variables.
    pub fn dim(&self) -> usize {
        self.nodes * (self.n + self.ns) + self.nodes * self.m + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    /// Sensitivity states per node.
    pub fn sensitivity_states(&self) -> usize {
        self.ns
    }

    pub fn num_eq(&self) -> usize {
        (self.nodes - 1) * self.naug() + self.q
    }

    pub fn num_ineq(&self) -> usize {
        self.nodes * self.k
    }

    pub(crate) fn naug(&self) -> usize {
        self.n + self.ns
    }

    pub(crate) fn state_index(&self, node: usize, i: usize) -> usize {
        node * self.naug() + i
    }

    pub(crate) fn control_index(&self, node: usize, j: usize) -> usize {
        self.nodes * self.naug() + node * self.m + j
    }

    pub(crate) fn tf_index(&self) -> usize {
        self.dim() - 1
    }

    /// Decision indices of the node-local variables `[x, s, u]`.
    pub(crate) fn node_columns(&self, node: usize) -> Vec<usize> {
        (0..self.naug())
            .map(|i| self.state_index(node, i))
            .chain((0..self.m).map(|j| self.control_index(node, j)))
            .collect()
    }

    pub(crate) fn time_at(&self, node: usize, tf: f64) -> f64 {
        let t0 = self.problem.initial_time();
        t0 + self.tau[node] * (tf - t0)
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; dim];
        let mut hi = vec![f64::INFINITY; dim];
        for (i, &x0) in self.problem.initial_state().iter().enumerate() {
            lo[self.state_index(0, i)] = x0;
            hi[self.state_index(0, i)] = x0;
        }
        for e in 0..self.ns {
            lo[self.state_index(0, self.n + e)] = 0.0;
            hi[self.state_index(0, self.n + e)] = 0.0;
        }
        for node in 0..self.nodes {
            for j in 0..self.m {
                lo[self.control_index(node, j)] = self.problem.control_lower()[j];
                hi[self.control_index(node, j)] = self.problem.control_upper()[j];
            }
        }
        let (tlo, thi) = self.problem.final_time_bounds();
        lo[self.tf_index()] = tlo;
        hi[self.tf_index()] = thi;
        (lo, hi)
    }

    fn node_vars(&self, w: &[f64], node: usize) -> Vec<f64> {
        let base = node * self.naug();
        let mut v = w[base..base + self.naug()].to_vec();
        let cb = self.control_index(node, 0);
        v.extend_from_slice(&w[cb..cb + self.m]);
        v
    }

    /// Full `n x l` sensitivity matrix from the tracked entries.
    pub(crate) fn sensitivity_matrix(&self, s: &[f64]) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(self.n, self.problem.param_dim());
        for (&(i, j), &v) in self.entries.iter().zip(s) {
            full[(i, j)] = v;
        }
        full
    }

    fn eval_node(&self, v: &[f64], t: f64) -> Result<NodeValues> {
        let (n, ns, m) = (self.n, self.ns, self.m);
        let x = &v[..n];
        let s = &v[n..n + ns];
        let u = &v[n + ns..n + ns + m];
        let p0 = self.problem.nominal_param();
        let mut f = vec![0.0; n + ns];
        self.problem.dynamics(x, p0, u, t, &mut f[..n]);
        let mut g = vec![0.0; self.k];
        self.problem.constraints_into(x, p0, t, &mut g);
        let running = self.problem.running_cost(x, u, t);
        let mut sens = 0.0;
        if ns > 0 {
            let jac = jacobians_at(&self.problem, x, p0, u, t, self.scheme)?;
            let full = self.sensitivity_matrix(s);
            let sdot = &jac.a * &full + &jac.b;
            for (e, &(i, j)) in self.entries.iter().enumerate() {
                f[n + e] = sdot[(i, j)];
            }
            sens = self.sensitivity_integrand(x, &full, &g, t)?;
        }
        let finite = f.iter().chain(&g).all(|v| v.is_finite()) && running.is_finite() && sens.is_finite();
        if !finite {
            return Err(Error::NonFinite {
                what: "collocation node callbacks",
                index: 0,
            });
        }
        Ok(NodeValues { f, g, running, sens })
    }

    fn sensitivity_integrand(&self, x: &[f64], s: &DMatrix<f64>, g: &[f64], t: f64) -> Result<f64> {
        let weights: &RcsWeights = &self.options.weights;
        if weights.is_zero() {
            return Ok(0.0);
        }
        match self.options.cost_mode {
            CostMode::Nominal => Ok(0.0),
            CostMode::Doc => weights.quadratic_form(s.as_slice()),
            CostMode::Naive | CostMode::Rcs => {
                let p0 = self.problem.nominal_param();
                let (gx, gp) = constraint_partials(&self.problem, x, p0, t, self.scheme)?;
                let sg = gx * s + gp;
                if self.options.cost_mode == CostMode::Naive {
                    weights.quadratic_form(sg.as_slice())
                } else {
                    let sr = rcs_matrix(g, &sg, &self.options.relevance)?;
                    weights.quadratic_form(sr.as_slice())
                }
            }
        }
    }

    fn eval_terminal(&self, x: &[f64], tf: f64) -> (f64, Vec<f64>) {
        let phi = self.problem.terminal_cost(x, tf);
        let psi = self.problem.terminal_residual(x, tf);
        (phi, psi)
    }

    /// Objective and constraint values.
    pub fn evaluate(&self, w: &[f64]) -> Result<Evaluation> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: self.dim(),
                got: w.len(),
            });
        }
        let tf = w[self.tf_index()];
        let nodes = (0..self.nodes)
            .map(|i| self.eval_node(&self.node_vars(w, i), self.time_at(i, tf)))
            .collect::<Result<Vec<_>>>()?;
        let last = self.state_index(self.nodes - 1, 0);
        let (phi, psi) = self.eval_terminal(&w[last..last + self.n], tf);
        Ok(self.assemble_values(w, nodes, phi, psi))
    }

    fn assemble_values(&self, w: &[f64], nodes: Vec<NodeValues>, phi: f64, psi: Vec<f64>) -> Evaluation {
        let tf = w[self.tf_index()];
        let span = tf - self.problem.initial_time();
        let naug = self.naug();
        let mut running = 0.0;
        let mut sens = 0.0;
        for (node, vals) in nodes.iter().enumerate() {
            running += self.quad[node] * vals.running;
            sens += self.quad[node] * vals.sens;
        }
        let nominal = phi + span * running;
        let sensitivity = span * sens;
        let mut eq = Vec::with_capacity(self.num_eq());
        for node in 0..self.nodes - 1 {
            let h = self.tau[node + 1] - self.tau[node];
            for i in 0..naug {
                let z0 = w[self.state_index(node, i)];
                let z1 = w[self.state_index(node + 1, i)];
                eq.push(z1 - z0 - 0.5 * span * h * (nodes[node].f[i] + nodes[node + 1].f[i]));
            }
        }
        eq.extend_from_slice(&psi);
        let ineq = nodes.iter().flat_map(|v| v.g.iter().copied()).collect();
        Evaluation {
            objective: nominal + sensitivity,
            nominal,
            sensitivity,
            eq,
            ineq,
            nodes,
        }
    }

    fn node_jacobian(&self, v: &[f64], t: f64) -> Result<(NodeValues, DMatrix<f64>)> {
        let center = self.eval_node(v, t)?;
        let naug = self.naug();
        let rows = naug + self.k + 2;
        let cols = v.len() + 1;
        let mut jac = DMatrix::zeros(rows, cols);
        let mut vp = v.to_vec();
        let flatten = |nv: &NodeValues| -> Vec<f64> {
            let mut out = Vec::with_capacity(rows);
            out.extend_from_slice(&nv.f);
            out.extend_from_slice(&nv.g);
            out.push(nv.running);
            out.push(nv.sens);
            out
        };
        for c in 0..cols {
            let (plus, minus, h) = if c < v.len() {
                let h = fd_step(v[c]);
                vp[c] = v[c] + h;
                let plus = self.eval_node(&vp, t)?;
                vp[c] = v[c] - h;
                let minus = self.eval_node(&vp, t)?;
                vp[c] = v[c];
                (plus, minus, h)
            } else {
                let h = fd_step(t);
                (self.eval_node(v, t + h)?, self.eval_node(v, t - h)?, h)
            };
            let (a, b) = (flatten(&plus), flatten(&minus));
            for r in 0..rows {
                jac[(r, c)] = (a[r] - b[r]) / (2.0 * h);
            }
        }
        Ok((center, jac))
    }

    /// Values plus objective gradient and constraint Jacobians.
    pub fn derivatives(&self, w: &[f64]) -> Result<Derivatives> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: self.dim(),
                got: w.len(),
            });
        }
        let tf = w[self.tf_index()];
        let tfi = self.tf_index();
        let span = tf - self.problem.initial_time();
        let (n, naug, m, k) = (self.n, self.naug(), self.m, self.k);

        let mut node_vals = Vec::with_capacity(self.nodes);
        let mut node_jac = Vec::with_capacity(self.nodes);
        for i in 0..self.nodes {
            let (vals, jac) = self.node_jacobian(&self.node_vars(w, i), self.time_at(i, tf))?;
            node_vals.push(vals);
            node_jac.push(jac);
        }

        // terminal: rows [phi, psi], columns [x_N, t_f]
        let last = self.state_index(self.nodes - 1, 0);
        let xn = w[last..last + n].to_vec();
        let (phi, psi) = self.eval_terminal(&xn, tf);
        let mut term_jac = DMatrix::zeros(1 + self.q, n + 1);
        let mut xp = xn.clone();
        for c in 0..=n {
            let (pp, pm, h) = if c < n {
                let h = fd_step(xn[c]);
                xp[c] = xn[c] + h;
                let a = self.eval_terminal(&xp, tf);
                xp[c] = xn[c] - h;
                let b = self.eval_terminal(&xp, tf);
                xp[c] = xn[c];
                (a, b, h)
            } else {
                let h = fd_step(tf);
                (self.eval_terminal(&xn, tf + h), self.eval_terminal(&xn, tf - h), h)
            };
            term_jac[(0, c)] = (pp.0 - pm.0) / (2.0 * h);
            for r in 0..self.q {
                term_jac[(1 + r, c)] = (pp.1[r] - pm.1[r]) / (2.0 * h);
            }
        }

        let eval = self.assemble_values(w, node_vals, phi, psi);

        // objective gradient
        let mut grad = vec![0.0; self.dim()];
        let (row_l, row_s) = (naug + k, naug + k + 1);
        for node in 0..self.nodes {
            let jac = &node_jac[node];
            let wq = self.quad[node];
            let cols = self.node_columns(node);
            for (c, &col) in cols.iter().enumerate() {
                grad[col] += span * wq * (jac[(row_l, c)] + jac[(row_s, c)]);
            }
            let tcol = naug + m;
            let vals = &eval.nodes[node];
            grad[tfi] += wq * (vals.running + vals.sens)
                + span * wq * self.tau[node] * (jac[(row_l, tcol)] + jac[(row_s, tcol)]);
        }
        for c in 0..n {
            grad[last + c] += term_jac[(0, c)];
        }
        grad[tfi] += term_jac[(0, n)];

        // defect Jacobian
        let mut jac_eq = SparseRows::new(self.dim());
        for node in 0..self.nodes - 1 {
            let h = self.tau[node + 1] - self.tau[node];
            let (ja, jb) = (&node_jac[node], &node_jac[node + 1]);
            let (ca, cb) = (self.node_columns(node), self.node_columns(node + 1));
            let tcol = naug + m;
            for i in 0..naug {
                let mut row = Vec::with_capacity(2 * (naug + m) + 1);
                for (c, &col) in ca.iter().enumerate() {
                    let mut v = -0.5 * span * h * ja[(i, c)];
                    if c == i {
                        v -= 1.0;
                    }
                    if v != 0.0 {
                        row.push((col, v));
                    }
                }
                for (c, &col) in cb.iter().enumerate() {
                    let mut v = -0.5 * span * h * jb[(i, c)];
                    if c == i {
                        v += 1.0;
                    }
                    if v != 0.0 {
                        row.push((col, v));
                    }
                }
                let fa = eval.nodes[node].f[i];
                let fb = eval.nodes[node + 1].f[i];
                let dt = -0.5 * h * (fa + fb)
                    - 0.5 * span * h * (ja[(i, tcol)] * self.tau[node] + jb[(i, tcol)] * self.tau[node + 1]);
                row.push((tfi, dt));
                jac_eq.rows.push(row);
            }
        }
        for r in 0..self.q {
            let mut row: Vec<(usize, f64)> = (0..n)
                .filter(|&c| term_jac[(1 + r, c)] != 0.0)
                .map(|c| (last + c, term_jac[(1 + r, c)]))
                .collect();
            row.push((tfi, term_jac[(1 + r, n)]));
            jac_eq.rows.push(row);
        }

        // path constraints depend on (x, t) only
        let mut jac_ineq = SparseRows::new(self.dim());
        for node in 0..self.nodes {
            let jac = &node_jac[node];
            let tcol = naug + m;
            for j in 0..k {
                let mut row: Vec<(usize, f64)> = (0..n)
                    .filter(|&c| jac[(naug + j, c)] != 0.0)
                    .map(|c| (self.state_index(node, c), jac[(naug + j, c)]))
                    .collect();
                row.push((tfi, jac[(naug + j, tcol)] * self.tau[node]));
                jac_ineq.rows.push(row);
            }
        }

        Ok(Derivatives {
            eval,
            tf,
            grad,
            jac_eq,
            jac_ineq,
        })
    }

    /// Lagrangian contribution of one node as a function of its local
    /// variables `v = [x, s, u]` and `t_f`:
    /// `span (w L + w sens - sum_i coef_i f_i) + sum_j nu_j g_j`.
    fn node_lagrangian(&self, node: usize, v: &[f64], tf: f64, coef: &[f64], nu: &[f64]) -> f64 {
        let span = tf - self.problem.initial_time();
        match self.eval_node(v, self.time_at(node, tf)) {
            Ok(vals) => {
                let wq = self.quad[node];
                let mut l = wq * (vals.running + vals.sens);
                for (c, f) in coef.iter().zip(&vals.f) {
                    l -= c * f;
                }
                let mut out = span * l;
                for (n, g) in nu.iter().zip(&vals.g) {
                    out += n * g;
                }
                out
            }
            Err(_) => f64::NAN,
        }
    }

    /// Central second differences of the node Lagrangian over `[v, t_f]`.
    /// `coef` weights the node's dynamics (already containing the
    /// trapezoid factors), `nu` its path constraints.
    pub(crate) fn node_hessian(&self, w: &[f64], node: usize, coef: &[f64], nu: &[f64]) -> DMatrix<f64> {
        let mut z = self.node_vars(w, node);
        z.push(w[self.tf_index()]);
        let nv = z.len() - 1;
        let f = |z: &[f64]| self.node_lagrangian(node, &z[..nv], z[nv], coef, nu);
        second_differences(&mut z, f)
    }

    /// Same for the terminal element `phi + lam^T psi` over `[x_N, t_f]`.
    pub(crate) fn terminal_hessian(&self, w: &[f64], lam: &[f64]) -> DMatrix<f64> {
        let last = self.state_index(self.nodes - 1, 0);
        let mut z = w[last..last + self.n].to_vec();
        z.push(w[self.tf_index()]);
        let n = self.n;
        let f = |z: &[f64]| {
            let (phi, psi) = self.eval_terminal(&z[..n], z[n]);
            phi + lam.iter().zip(&psi).map(|(a, b)| a * b).sum::<f64>()
        };
        second_differences(&mut z, f)
    }

    /// Packs a trajectory into a decision vector on this NLP's grid. States
    /// and controls are linearly resampled; sensitivity states come from the
    /// guess when present, otherwise from integrating the sensitivity
    /// equation along the guess.
    pub fn pack(&self, guess: &Trajectory) -> Result<Vec<f64>> {
        guess.check_dims(&self.problem)?;
        let (lo, hi) = self.bounds();
        let t0 = self.problem.initial_time();
        let tf = guess.final_time.clamp(lo[self.tf_index()], hi[self.tf_index()]);
        let scale = (guess.final_time - t0) / (tf - t0);
        let mut w = vec![0.0; self.dim()];
        let times: Vec<f64> = (0..self.nodes).map(|i| self.time_at(i, tf)).collect();
        for (node, &t) in times.iter().enumerate() {
            // sample the guess at the same relative position in its own horizon
            let tg = t0 + (t - t0) * scale;
            let x = guess.state_at(tg);
            let u = guess.control_at(tg);
            for i in 0..self.n {
                w[self.state_index(node, i)] = x[i];
            }
            for j in 0..self.m {
                w[self.control_index(node, j)] = u[j];
            }
        }
        if self.ns > 0 {
            let sens: Vec<DMatrix<f64>> = match &guess.sensitivities {
                Some(s) => times
                    .iter()
                    .map(|&t| {
                        let tg = t0 + (t - t0) * scale;
                        interpolate_matrix(&guess.times, s, tg)
                    })
                    .collect(),
                None => self.integrate_sensitivity(&w, &times)?,
            };
            for (node, s) in sens.iter().enumerate() {
                for (e, &(i, j)) in self.entries.iter().enumerate() {
                    w[self.state_index(node, self.n + e)] = s[(i, j)];
                }
            }
        }
        w[self.tf_index()] = tf;
        for i in 0..w.len() {
            w[i] = w[i].clamp(lo[i], hi[i]);
        }
        Ok(w)
    }

    /// Trapezoidal integration of `S' = A S + B` along the packed states.
    fn integrate_sensitivity(&self, w: &[f64], times: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let l = self.problem.param_dim();
        let p0 = self.problem.nominal_param();
        let mut out = vec![DMatrix::zeros(self.n, l)];
        let jac_at = |node: usize| {
            let b = self.state_index(node, 0);
            let c = self.control_index(node, 0);
            jacobians_at(&self.problem, &w[b..b + self.n], p0, &w[c..c + self.m], times[node], self.scheme)
        };
        let mut prev = jac_at(0)?;
        for node in 1..self.nodes {
            let next = jac_at(node)?;
            let h = times[node] - times[node - 1];
            let s = out.last().unwrap();
            // (I - h/2 A1) S1 = (I + h/2 A0) S0 + h/2 (B0 + B1)
            let id = DMatrix::<f64>::identity(self.n, self.n);
            let lhs = &id - &next.a * (0.5 * h);
            let rhs = (&id + &prev.a * (0.5 * h)) * s + (&prev.b + &next.b) * (0.5 * h);
            let s1 = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Singularity("sensitivity step matrix".into()))?;
            out.push(s1);
            prev = next;
        }
        Ok(out)
    }

    /// Unpacks a decision vector into a trajectory.
    pub fn unpack(&self, w: &[f64]) -> Result<Trajectory> {
        let tf = w[self.tf_index()];
        let times: Vec<f64> = (0..self.nodes).map(|i| self.time_at(i, tf)).collect();
        let states = (0..self.nodes)
            .map(|node| {
                let b = self.state_index(node, 0);
                w[b..b + self.n].to_vec()
            })
            .collect();
        let controls = (0..self.nodes)
            .map(|node| {
                let c = self.control_index(node, 0);
                w[c..c + self.m].to_vec()
            })
            .collect();
        let mut traj = Trajectory::new(times, states, controls)?;
        if self.ns > 0 {
            traj.sensitivities = Some(
                (0..self.nodes)
                    .map(|node| {
                        let b = self.state_index(node, self.n);
                        self.sensitivity_matrix(&w[b..b + self.ns])
                    })
                    .collect(),
            );
        }
        traj.annotate(&self.problem)?;
        Ok(traj)
    }
}

const HESSIAN_RELATIVE_STEP: f64 = 1e-4;

fn second_differences(z: &mut [f64], f: impl Fn(&[f64]) -> f64) -> DMatrix<f64> {
    let d = z.len();
    let h: Vec<f64> = z.iter().map(|v| HESSIAN_RELATIVE_STEP * v.abs().max(1.0)).collect();
    let f0 = f(z);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let zi = z[i];
        z[i] = zi + h[i];
        let fp = f(z);
        z[i] = zi - h[i];
        let fm = f(z);
        z[i] = zi;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let zj = z[j];
            let mut corner = |a: f64, b: f64| {
                z[i] = zi + a * h[i];
                z[j] = zj + b * h[j];
                f(z)
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            z[i] = zi;
            z[j] = zj;
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn interpolate_matrix(times: &[f64], mats: &[DMatrix<f64>], t: f64) -> DMatrix<f64> {
    let last = times.len() - 1;
    if t <= times[0] {
        return mats[0].clone();
    }
    if t >= times[last] {
        return mats[last].clone();
    }
    let hi = times.partition_point(|&s| s <= t).min(last);
    let lo = hi - 1;
    let a = (t - times[lo]) / (times[hi] - times[lo]);
    &mats[lo] * (1.0 - a) + &mats[hi] * a
}
