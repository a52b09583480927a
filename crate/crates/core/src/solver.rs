//! Constrained maximum-likelihood solves.
//!
//! The feasible set is an intersection of half-spaces `c_k + a_kᵀx ≥ 0`
//! (intensity nonnegativity on the check grid, the optional `R_x ≤ R_max`
//! box, and optional coefficient nonnegativity), optionally intersected with
//! an ℓ1 ball. Without the ℓ1 ball each step moves along the projection of
//! the negative gradient onto the tangent cone of the active half-spaces,
//! with a ratio test so iterates never leave the feasible set. With the ℓ1
//! ball the step is the usual Euclidean projection of a gradient step, and
//! half-space violations are rejected by the line search.
//!
//! Every accepted step satisfies the Armijo condition and does not increase
//! the objective; objective differences are computed in a cancellation-free
//! form so this holds down to the last few ulps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{for_each_combination, validate_support, MAX_ENUMERABLE};
use crate::error::{Error, Result};
use crate::likelihood::{
    dot, feasibility_margin, AffineRows, FeasibilityReport, LikelihoodContext, LogSum,
};
use crate::process::CountData;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    /// ℓ1 radius `η`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1_radius: Option<f64>,
    #[serde(default)]
    pub nonnegative: bool,
    /// Only these coefficients (0-based) may be nonzero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    /// Enforce `R_x ≤ r_max` on the same points as `R_x ≥ 0`. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_box: Option<f64>,
}

/// Metric in which gradient steps are projected onto the feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Scale by the Hessian (projected Newton). Falls back to `Euclidean`
    /// on any iteration where the scaled projection cannot be formed.
    #[default]
    Hessian,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop once the KKT residual is at most `tol · (1 + |nll|)`.
    pub tol: f64,
    /// Keep the objective value of every accepted iterate.
    #[serde(default)]
    pub record_trace: bool,
    #[serde(default)]
    pub metric: Metric,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-8,
            record_trace: false,
            metric: Metric::Hessian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_hat: Vec<f64>,
    pub nll_value: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub termination: String,
    pub feasibility: FeasibilityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const ACTIVE_REL: f64 = 1e-9;
/// Relative diagonal shifts tried, in order, for the projected Newton step.
const NEWTON_DAMPING: [f64; 6] = [1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0];
const ACCEPT_REL: f64 = 1e-12;
/// Newton steps taken after the stopping rule is met.
const POLISH_STEPS: usize = 3;
/// Rounding allowance when a polish step's decrease is below the
/// resolution of the objective value.
const DESCENT_SLACK: f64 = 1e-12;
/// Relative objective gap below which double precision cannot make progress.
const DECREMENT_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Euclidean projection onto `{x : ‖x‖₁ ≤ radius}` by the sort-based method.
pub fn project_l1(x: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::argument(format!(
            "l1 radius must be positive, got {radius}"
        )));
    }
    Ok(project_l1_unchecked(x, radius))
}

fn project_l1_unchecked(x: &[f64], radius: f64) -> Vec<f64> {
    let norm: f64 = x.iter().map(|v| v.abs()).sum();
    if norm <= radius {
        return x.to_vec();
    }
    let mut u: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    x.iter()
        .map(|&v| v.signum() * (v.abs() - theta).max(0.0))
        .collect()
}

/// Lawson–Hanson nonnegative least squares: `argmin_{λ ≥ 0} ‖Eλ − f‖₂`.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let k = e.ncols();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let scale = e.amax().max(f64::MIN_POSITIVE) * f.amax().max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale * (e.nrows().max(k) as f64);
    let ls = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
        let sub = e.select_columns(&idx);
        let sol = sub
            .svd(true, true)
            .solve(f, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut s = DVector::zeros(k);
        for (i, &j) in idx.iter().enumerate() {
            s[j] = sol[i];
        }
        s
    };
    for _ in 0..3 * k + 10 {
        let w = e.transpose() * (f - e * &x);
        let cand = (0..k)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = cand else {
            break;
        };
        passive[t] = true;
        for _ in 0..3 * k + 10 {
            let s = ls(&passive);
            if (0..k).all(|j| !passive[j] || s[j] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut limiting = t;
            for j in 0..k {
                if passive[j] && s[j] <= 0.0 {
                    let denom = x[j] - s[j];
                    let a = if denom > 0.0 { x[j] / denom } else { 0.0 };
                    if a < alpha {
                        alpha = a;
                        limiting = j;
                    }
                }
            }
            x += (s - &x) * alpha;
            x[limiting] = 0.0;
            for j in 0..k {
                if passive[j] && x[j] <= 0.0 {
                    passive[j] = false;
                    x[j] = 0.0;
                }
            }
        }
    }
    x
}

/// Reduced problem over the free coordinates.
struct Problem<'c> {
    obj: LogSum,
    rows: AffineRows,
    l1: Option<f64>,
    nonneg: bool,
    free: Vec<usize>,
    n_full: usize,
    ctx: &'c LikelihoodContext<'c>,
}

fn row_scale(rows: &AffineRows, j: usize, z: &[f64]) -> f64 {
    1.0 + rows.offsets[j].abs()
        + rows
            .row(j)
            .iter()
            .zip(z)
            .map(|(a, z)| (a * z).abs())
            .sum::<f64>()
}

impl<'c> Problem<'c> {
    fn new(ctx: &'c LikelihoodContext<'c>, cons: &ConstraintSet) -> Result<Self> {
        let n = ctx.n();
        if let Some(r) = cons.l1_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::argument(format!(
                    "l1 radius must be positive, got {r}"
                )));
            }
        }
        let free = match &cons.support {
            Some(s) => validate_support(s, n)?,
            None => (0..n).collect(),
        };
        let obj = ctx.objective().restrict(&free);
        let mut source = ctx.nonneg_rows().restrict(&free);
        if let Some(r_max) = cons.intensity_box {
            if !(r_max.is_finite() && r_max > 0.0) {
                return Err(Error::argument(format!(
                    "r_max must be positive, got {r_max}"
                )));
            }
            let b = ctx.box_rows(r_max).restrict(&free);
            for j in 0..b.len() {
                source.push(b.offsets[j], b.row(j), b.coords[j]);
            }
        }
        let k = free.len();
        let mut rows = AffineRows::new(k);
        for j in 0..source.len() {
            let a = source.row(j);
            if a.iter().all(|&v| v == 0.0) {
                if source.offsets[j] < crate::likelihood::FEASIBILITY_TOL {
                    return Err(Error::Initialization(format!(
                        "intensity constraint violated at t = {} for every coefficient choice",
                        source.coords[j]
                    )));
                }
                continue;
            }
            rows.push(source.offsets[j], a, source.coords[j]);
        }
        if cons.nonnegative && cons.l1_radius.is_none() {
            let mut e = vec![0.0; k];
            for i in 0..k {
                e[i] = 1.0;
                rows.push(0.0, &e, f64::NAN);
                e[i] = 0.0;
            }
        }
        Ok(Self {
            obj,
            rows,
            l1: cons.l1_radius,
            nonneg: cons.nonnegative,
            free,
            n_full: n,
            ctx,
        })
    }

    fn embed(&self, z: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_full];
        for (&i, &v) in self.free.iter().zip(z) {
            x[i] = v;
        }
        x
    }

    fn rows_ok(&self, z: &[f64]) -> bool {
        (0..self.rows.len())
            .all(|j| self.rows.eval(j, z) >= -ACCEPT_REL * row_scale(&self.rows, j, z))
    }

    fn project_set(&self, z: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = if self.nonneg {
            z.iter().map(|v| v.max(0.0)).collect()
        } else {
            z.to_vec()
        };
        if let Some(r) = self.l1 {
            out = project_l1_unchecked(&out, r);
        }
        out
    }

    fn in_set(&self, z: &[f64]) -> bool {
        (!self.nonneg || z.iter().all(|&v| v >= 0.0))
            && self
                .l1
                .is_none_or(|r| z.iter().map(|v| v.abs()).sum::<f64>() <= r * (1.0 + 1e-12))
    }

    fn strictly_feasible(&self, z: &[f64]) -> bool {
        self.in_set(z) && self.rows_ok(z) && self.obj.value(z).is_finite()
    }

    fn log_args(&self, z: &[f64]) -> Vec<f64> {
        (0..self.obj.weights.len())
            .map(|j| self.obj.terms.eval(j, z))
            .collect()
    }

    /// `f(z + s) − f(z)` without cancellation; `+∞` if the step leaves the log domain.
    fn delta(&self, args: &[f64], s: &[f64]) -> f64 {
        let mut acc = dot(&self.obj.linear, s);
        for (j, (&arg, &w)) in args.iter().zip(&self.obj.weights).enumerate() {
            let r = dot(self.obj.terms.row(j), s) / arg;
            if !(r > -1.0) {
                return f64::INFINITY;
            }
            acc -= w * r.ln_1p();
        }
        acc
    }

    fn gradient(&self, args: &[f64]) -> Vec<f64> {
        let mut g = self.obj.linear.clone();
        for (j, (&arg, &w)) in args.iter().zip(&self.obj.weights).enumerate() {
            let s = w / arg;
            for (gi, a) in g.iter_mut().zip(self.obj.terms.row(j)) {
                *gi -= s * a;
            }
        }
        g
    }

    fn initial_point(&self, init: Option<&[f64]>) -> Result<Vec<f64>> {
        let k = self.free.len();
        if let Some(x0) = init {
            self.ctx.basis().spec().check_len(x0)?;
            if let Some(i) = (0..self.n_full).find(|i| !self.free.contains(i) && x0[*i] != 0.0) {
                return Err(Error::Initialization(format!(
                    "initial coefficient {i} is nonzero outside the support"
                )));
            }
            let z: Vec<f64> = self.free.iter().map(|&i| x0[i]).collect();
            if !self.strictly_feasible(&z) {
                return Err(Error::Initialization(
                    "supplied initial point is not strictly feasible".into(),
                ));
            }
            return Ok(z);
        }
        let basis = self.ctx.basis();
        let target = self.ctx.observed_count() - basis.offset_integral();
        let b: Vec<f64> = self.free.iter().map(|&i| basis.b()[i]).collect();
        let mut candidates = Vec::new();
        let gram = crate::basis::submatrix(basis.gram(), &self.free);
        if let Some(ch) = gram.cholesky() {
            let u = ch.solve(&DVector::from_column_slice(&b));
            let btu = dot(&b, u.as_slice());
            if btu > 0.0 && target > 0.0 {
                candidates.push(u.iter().map(|v| v * target / btu).collect::<Vec<_>>());
            }
        }
        let bsum: f64 = b.iter().sum();
        if bsum > 0.0 {
            let scale = target.max(1.0) / bsum;
            candidates.push(vec![scale; k]);
        }
        candidates.push(vec![1.0; k]);
        candidates.push(vec![0.0; k]);
        for cand in candidates {
            let mut z = self.project_set(&cand);
            for _ in 0..40 {
                if self.strictly_feasible(&z) {
                    return Ok(z);
                }
                z.iter_mut().for_each(|v| *v *= 0.5);
            }
        }
        Err(Error::Initialization(
            "no candidate start has finite likelihood and satisfies the constraints".into(),
        ))
    }

    /// Projection of `-g` onto the tangent cone of the active rows at `z`.
    fn cone_direction(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        let k = z.len();
        let active: Vec<usize> = (0..self.rows.len())
            .filter(|&j| self.rows.eval(j, z) <= ACTIVE_REL * row_scale(&self.rows, j, z))
            .collect();
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        if active.is_empty() {
            return d;
        }
        let wt = DMatrix::from_fn(k, active.len(), |i, c| self.rows.row(active[c])[i]);
        let lambda = nnls(&wt, &DVector::from_column_slice(g));
        let push = &wt * lambda;
        for (di, p) in d.iter_mut().zip(push.iter()) {
            *di += p;
        }
        d
    }

    fn hessian(&self, args: &[f64]) -> DMatrix<f64> {
        let k = self.free.len();
        let mut h = DMatrix::zeros(k, k);
        for (j, (&arg, &w)) in args.iter().zip(&self.obj.weights).enumerate() {
            let s = w / (arg * arg);
            let a = self.obj.terms.row(j);
            for p in 0..k {
                if a[p] == 0.0 {
                    continue;
                }
                let sp = s * a[p];
                for q in p..k {
                    h[(p, q)] += sp * a[q];
                }
            }
        }
        h.fill_lower_triangle_with_upper_triangle();
        h
    }

    /// Projection of the Newton step onto the feasible polyhedron in the
    /// Hessian metric: `argmin_d ½dᵀHd + gᵀd` subject to every row. Rows are
    /// added to the working set until the solution satisfies all of them.
    /// Flat directions make the least-distance problem ill-conditioned; when
    /// the result fails verification the Hessian is damped and the step
    /// recomputed.
    fn newton_direction(&self, z: &[f64], args: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let k = z.len();
        let h = self.hessian(args);
        let base = (h.trace() / k as f64).max(f64::MIN_POSITIVE);
        let slack: Vec<f64> = (0..self.rows.len()).map(|j| self.rows.eval(j, z)).collect();
        let scale: Vec<f64> = (0..self.rows.len())
            .map(|j| row_scale(&self.rows, j, z))
            .collect();
        let gv = DVector::from_column_slice(g);
        if let Some(d) = self.active_set_step(&h, &gv, &slack, &scale) {
            let dv = DVector::from_column_slice(&d);
            if 0.5 * dv.dot(&(&h * &dv)) + gv.dot(&dv) <= 0.0 && gv.dot(&dv) <= 0.0 {
                return Some(d);
            }
        }
        let mut fallback: Option<(f64, Vec<f64>)> = None;
        for damping in NEWTON_DAMPING {
            let mut hd = h.clone();
            for i in 0..k {
                hd[(i, i)] += damping * base;
            }
            let Some(chol) = hd.cholesky() else {
                continue;
            };
            let l = chol.l();
            let Some(lg) = l.solve_lower_triangular(&gv) else {
                continue;
            };
            let hg = chol.solve(&gv);
            let mut in_work: Vec<bool> = (0..self.rows.len())
                .map(|j| slack[j] <= ACTIVE_REL * scale[j])
                .collect();
            for _ in 0..self.rows.len().min(50) {
                let work: Vec<usize> = (0..self.rows.len()).filter(|&j| in_work[j]).collect();
                let Some(d) = self.least_distance_step(&l, &lg, &hg, &work, &slack) else {
                    break;
                };
                let mut violated = false;
                let mut sound = true;
                for j in 0..self.rows.len() {
                    if slack[j] + dot(self.rows.row(j), &d) < -0.5 * ACCEPT_REL * scale[j] {
                        if in_work[j] {
                            sound = false;
                        } else {
                            in_work[j] = true;
                            violated = true;
                        }
                    }
                }
                if !sound {
                    break;
                }
                if !violated {
                    // A feasible step must also decrease the damped model;
                    // cancellation in the subproblem can break that. At an
                    // optimum the step is rounding noise of either sign, so
                    // the least-bad candidate is kept for the decrement test.
                    let dv = DVector::from_column_slice(&d);
                    let model = 0.5 * (dv.dot(&(&h * &dv)) + damping * base * dv.norm_squared())
                        + gv.dot(&dv);
                    if model <= 0.0 && gv.dot(&dv) <= 0.0 {
                        return Some(d);
                    }
                    if fallback.as_ref().is_none_or(|(m, _)| model < *m) {
                        fallback = Some((model, d));
                    }
                    break;
                }
            }
        }
        fallback.map(|(_, d)| d)
    }

    /// Primal active-set solve of the Newton QP. Each pass minimizes the model
    /// on the null space of the working rows, which stays well conditioned
    /// when the Hessian is singular along a row normal (an empty bin pinned at
    /// zero intensity). Rows are added when violated and dropped when their
    /// multiplier turns negative.
    fn active_set_step(
        &self,
        h: &DMatrix<f64>,
        g: &DVector<f64>,
        slack: &[f64],
        scale: &[f64],
    ) -> Option<Vec<f64>> {
        let k = g.len();
        let rows = self.rows.len();
        let mut work: Vec<usize> = (0..rows)
            .filter(|&j| slack[j] <= ACTIVE_REL * scale[j])
            .collect();
        if work.len() >= k {
            return None;
        }
        for _ in 0..2 * rows.min(50) {
            let (dp, z) = if work.is_empty() {
                (DVector::zeros(k), DMatrix::identity(k, k))
            } else {
                // Zero rows pad A_W to square so the SVD yields a full basis.
                let aw = DMatrix::from_fn(k, k, |r, c| {
                    work.get(r).map_or(0.0, |&j| self.rows.row(j)[c])
                });
                let svd = aw.svd(true, true);
                let v_t = svd.v_t.as_ref()?;
                let smax = svd.singular_values.max();
                let rank = svd
                    .singular_values
                    .iter()
                    .filter(|&&sv| sv > 1e-12 * smax)
                    .count();
                if rank >= k {
                    return None;
                }
                let rhs = DVector::from_fn(k, |r, _| work.get(r).map_or(0.0, |&j| -slack[j]));
                let dp = svd.solve(&rhs, 1e-12 * smax).ok()?;
                let z = v_t.rows(rank, k - rank).transpose();
                (dp, z)
            };
            let reduced = z.transpose() * h * &z;
            let rhs = -(z.transpose() * (g + h * &dp));
            let w = reduced.cholesky()?.solve(&rhs);
            let d = &dp + &z * w;
            if !d.iter().all(|v| v.is_finite()) {
                return None;
            }
            if !work.is_empty() {
                // Stationarity: H d + g = A_Wᵀ λ with λ ≥ 0.
                let awt = DMatrix::from_fn(k, work.len(), |r, c| self.rows.row(work[c])[r]);
                let lambda = awt.svd(true, true).solve(&(h * &d + g), 1e-12).ok()?;
                let (worst, lmin) =
                    lambda.iter().enumerate().fold(
                        (0, 0.0),
                        |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc },
                    );
                let lscale = 1e-9 * (1.0 + g.amax());
                if lmin < -lscale {
                    work.remove(worst);
                    continue;
                }
            }
            let violated = (0..rows)
                .filter(|j| !work.contains(j))
                .map(|j| {
                    (
                        j,
                        (slack[j] + dot(self.rows.row(j), d.as_slice())) / scale[j],
                    )
                })
                .filter(|&(_, v)| v < -0.5 * ACCEPT_REL)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match violated {
                None => return Some(d.as_slice().to_vec()),
                Some((j, _)) => {
                    work.push(j);
                    if work.len() >= k {
                        return None;
                    }
                }
            }
        }
        None
    }

    /// Solves the working-set QP as a least-distance problem through NNLS.
    fn least_distance_step(
        &self,
        l: &DMatrix<f64>,
        lg: &DVector<f64>,
        hg: &DVector<f64>,
        work: &[usize],
        slack: &[f64],
    ) -> Option<Vec<f64>> {
        let k = lg.len();
        let mut m = DMatrix::zeros(k + 1, work.len());
        let mut binding = false;
        for (c, &j) in work.iter().enumerate() {
            let a = DVector::from_column_slice(self.rows.row(j));
            let e = l.solve_lower_triangular(&a)?;
            let fj = -slack[j] + a.dot(hg);
            // Unit columns keep NNLS well scaled; u does not depend on it.
            let norm = (e.norm_squared() + fj * fj).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return None;
            }
            m.view_mut((0, c), (k, 1)).copy_from(&(e / norm));
            m[(k, c)] = fj / norm;
            binding |= fj > 0.0;
        }
        let u = if binding {
            let mut target = DVector::zeros(k + 1);
            target[k] = 1.0;
            let lambda = nnls(&m, &target);
            let r = &m * lambda - target;
            if !(r[k] < -1e-14) {
                return None;
            }
            -r.rows(0, k) / r[k]
        } else {
            DVector::zeros(k)
        };
        let d = l.tr_solve_lower_triangular(&(u - lg))?;
        d.iter()
            .all(|v| v.is_finite())
            .then(|| d.as_slice().to_vec())
    }

    /// One full Newton step once converged. The stopping rule is relative to
    /// |f|, so a few quadratically convergent steps buy accuracy in `x` for
    /// free. Kept only if the line search accepts it whole (so the objective
    /// decreases, measured without cancellation), the residual shrinks, and
    /// the evaluated objective does not rise beyond rounding.
    fn polish(
        &self,
        z: &[f64],
        args: &[f64],
        g: &[f64],
        f: f64,
        kkt: f64,
        opts: &SolveOptions,
    ) -> Option<(Vec<f64>, f64, f64)> {
        if self.l1.is_some() || opts.metric != Metric::Hessian {
            return None;
        }
        let nd = self.newton_direction(z, args, g)?;
        let (mut zn, alpha) = self.line_search(z, args, g, &nd, 1.0)?;
        if alpha != 1.0 {
            return None;
        }
        if self.nonneg {
            zn.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let args_n = self.log_args(&zn);
        if args_n.iter().any(|a| !(*a > 0.0)) {
            return None;
        }
        let gn = self.gradient(&args_n);
        let kn = norm(&self.cone_direction(&zn, &gn));
        let fn_ = self.obj.value(&zn);
        (kn < kkt && fn_ <= f + DESCENT_SLACK).then_some((zn, kn, fn_))
    }

    fn line_search(
        &self,
        z: &[f64],
        args: &[f64],
        g: &[f64],
        dir: &[f64],
        alpha0: f64,
    ) -> Option<(Vec<f64>, f64)> {
        let mut alpha = alpha0.min(self.max_step(z, dir));
        let slope = dot(g, dir);
        if !(slope < 0.0) {
            return None;
        }
        for _ in 0..MAX_HALVINGS {
            let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
            let zn = add(z, &s);
            if self.rows_ok(&zn) {
                let df = self.delta(args, &s);
                if df <= ARMIJO_C1 * alpha * slope && df <= 0.0 {
                    return Some((zn, alpha));
                }
            }
            alpha *= 0.5;
        }
        None
    }

    fn max_step(&self, z: &[f64], d: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for j in 0..self.rows.len() {
            let ad = dot(self.rows.row(j), d);
            if ad < 0.0 {
                let slack = self.rows.eval(j, z);
                if slack > ACTIVE_REL * row_scale(&self.rows, j, z) {
                    alpha = alpha.min(slack / -ad);
                }
            }
        }
        alpha
    }

    fn solve(
        &self,
        z0: Vec<f64>,
        opts: &SolveOptions,
    ) -> (Vec<f64>, usize, f64, bool, String, Vec<f64>) {
        let mut z = z0;
        let mut f = self.obj.value(&z);
        let mut args = self.log_args(&z);
        let mut g = self.gradient(&args);
        let mut trace = Vec::new();
        if opts.record_trace {
            trace.push(f);
        }
        let gnorm = norm(&g);
        let mut step = if gnorm > 0.0 {
            norm(&z).max(1.0) / gnorm
        } else {
            1.0
        };
        let mut kkt = f64::INFINITY;
        for iter in 0..opts.max_iters {
            let (dir, residual) = match self.l1 {
                None => {
                    let d = self.cone_direction(&z, &g);
                    let r = norm(&d);
                    (d, r)
                }
                Some(_) => {
                    let unit: Vec<f64> = z.iter().zip(&g).map(|(z, g)| z - g).collect();
                    let p = self.project_set(&unit);
                    (Vec::new(), norm(&sub(&p, &z)))
                }
            };
            kkt = residual;
            let ftol = opts.tol * (1.0 + f.abs());
            if kkt <= ftol {
                let mut iters = iter;
                for _ in 0..POLISH_STEPS {
                    let Some((zp, kp, fp)) = self.polish(&z, &args, &g, f, kkt, opts) else {
                        break;
                    };
                    if opts.record_trace {
                        trace.push(fp);
                    }
                    args = self.log_args(&zp);
                    g = self.gradient(&args);
                    (z, kkt, f) = (zp, kp, fp);
                    iters += 1;
                }
                return (z, iters, kkt, true, "converged".into(), trace);
            }
            let newton = if self.l1.is_none() && opts.metric == Metric::Hessian {
                self.newton_direction(&z, &args, &g)
            } else {
                None
            };
            // The Newton model's predicted decrease bounds the remaining gap
            // in objective units, even when near-active rows inflate `kkt`.
            // The gap is quadratic in the error, hence the squared tolerance;
            // the floor lets it fire once f no longer resolves progress.
            if let Some(nd) = &newton {
                let gap_tol = (opts.tol * opts.tol).max(DECREMENT_FLOOR) * (1.0 + f.abs());
                if dot(&g, nd).abs() <= gap_tol {
                    return (
                        z,
                        iter,
                        kkt,
                        true,
                        "converged (newton decrement)".into(),
                        trace,
                    );
                }
            }
            let mut alpha = step;
            let mut accepted = None;
            if self.l1.is_none() {
                let mut full_newton = false;
                if let Some(nd) = newton {
                    accepted = self.line_search(&z, &args, &g, &nd, 1.0).map(|(zn, a)| {
                        alpha = a;
                        full_newton = a == 1.0;
                        (zn, ())
                    });
                }
                // A shortened Newton step means the quadratic model is poor
                // (a log term nearly vanishes along it); the gradient step
                // may then do better.
                if !full_newton {
                    if let Some((zg, ag)) = self.line_search(&z, &args, &g, &dir, step) {
                        let better = accepted.as_ref().is_none_or(|(zn, _)| {
                            self.delta(&args, &sub(&zg, &z)) < self.delta(&args, &sub(zn, &z))
                        });
                        if better {
                            alpha = ag;
                            accepted = Some((zg, ()));
                        }
                    }
                }
            } else {
                for _ in 0..MAX_HALVINGS {
                    let trial: Vec<f64> = z.iter().zip(&g).map(|(z, g)| z - alpha * g).collect();
                    let zn = self.project_set(&trial);
                    let s = sub(&zn, &z);
                    if self.rows_ok(&zn) {
                        let df = self.delta(&args, &s);
                        if df <= ARMIJO_C1 * dot(&g, &s) && df <= 0.0 {
                            accepted = Some((zn, ()));
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
            }
            let Some((mut zn, _)) = accepted else {
                return (
                    z,
                    iter,
                    kkt,
                    false,
                    "line search made no progress".into(),
                    trace,
                );
            };
            if self.nonneg {
                zn.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let s = sub(&zn, &z);
            let args_n = self.log_args(&zn);
            if args_n.iter().any(|a| !(*a > 0.0)) {
                return (
                    z,
                    iter,
                    kkt,
                    false,
                    "step left the log domain".into(),
                    trace,
                );
            }
            let gn = self.gradient(&args_n);
            let y = sub(&gn, &g);
            let sy = dot(&s, &y);
            let ss = dot(&s, &s);
            step = if sy > 0.0 && ss > 0.0 {
                (ss / sy).clamp(1e-20, 1e20)
            } else {
                (alpha * 2.0).min(1e20)
            };
            z = zn;
            args = args_n;
            g = gn;
            f = self.obj.value(&z);
            if opts.record_trace {
                trace.push(f);
            }
        }
        (
            z,
            opts.max_iters,
            kkt,
            false,
            "iteration limit reached".into(),
            trace,
        )
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a + b).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a - b).collect()
}

/// Minimize the context's negative log-likelihood over the constraint set.
pub fn estimate_mle(
    ctx: &LikelihoodContext<'_>,
    constraints: &ConstraintSet,
    init: Option<&[f64]>,
    options: &SolveOptions,
) -> Result<SolveResult> {
    if !(options.tol.is_finite() && options.tol >= 0.0) {
        return Err(Error::argument("tolerance must be finite and nonnegative"));
    }
    let problem = Problem::new(ctx, constraints)?;
    let z0 = problem.initial_point(init)?;
    let (z, iterations, kkt_residual, converged, termination, trace) = problem.solve(z0, options);
    let x_hat = problem.embed(&z);
    let feasibility = feasibility_margin(ctx.basis().spec(), &x_hat, constraints.intensity_box)?;
    Ok(SolveResult {
        nll_value: ctx.nll(&x_hat),
        x_hat,
        iterations,
        kkt_residual,
        converged,
        termination,
        feasibility,
        support: constraints.support.as_ref().map(|_| problem.free.clone()),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseMode {
    /// Solve on every support of size `s` and keep the best.
    Exhaustive,
    /// Alternate hard thresholding with restricted solves. No optimality guarantee.
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSolveResult {
    pub result: SolveResult,
    pub support: Vec<usize>,
    pub supports_evaluated: usize,
    /// Supports on which no feasible start existed.
    pub supports_infeasible: usize,
    pub guaranteed_optimal: bool,
}

fn solve_on_support(
    ctx: &LikelihoodContext<'_>,
    constraints: &ConstraintSet,
    support: &[usize],
    options: &SolveOptions,
) -> Result<Option<SolveResult>> {
    let cons = ConstraintSet {
        support: Some(support.to_vec()),
        ..constraints.clone()
    };
    match estimate_mle(ctx, &cons, None, options) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Initialization(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(feature = "parallel")]
fn map_supports(
    supports: &[Vec<usize>],
    f: impl Fn(&[usize]) -> Result<Option<SolveResult>> + Sync,
) -> Vec<Result<Option<SolveResult>>> {
    use rayon::prelude::*;
    supports.par_iter().map(|s| f(s)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_supports(
    supports: &[Vec<usize>],
    f: impl Fn(&[usize]) -> Result<Option<SolveResult>>,
) -> Vec<Result<Option<SolveResult>>> {
    supports.iter().map(|s| f(s)).collect()
}

/// MLE under `‖x‖₀ ≤ s`. Ties in exhaustive mode go to the lowest NLL, then
/// the lexicographically smallest support.
pub fn estimate_mle_sparse(
    ctx: &LikelihoodContext<'_>,
    s: usize,
    constraints: &ConstraintSet,
    options: &SolveOptions,
    mode: SparseMode,
) -> Result<SparseSolveResult> {
    let n = ctx.n();
    if s == 0 || s > n {
        return Err(Error::argument(format!("sparsity {s} must be in 1..={n}")));
    }
    if constraints.support.is_some() {
        return Err(Error::argument(
            "sparse search and a fixed support are mutually exclusive",
        ));
    }
    match mode {
        SparseMode::Exhaustive => {
            if n > MAX_ENUMERABLE {
                return Err(Error::Capacity(format!(
                    "exhaustive support search limited to N <= {MAX_ENUMERABLE}, got {n}"
                )));
            }
            let mut supports = Vec::new();
            for_each_combination(n, s, |c| supports.push(c.to_vec()));
            let results = map_supports(&supports, |sup| {
                solve_on_support(ctx, constraints, sup, options)
            });
            let mut best: Option<(usize, SolveResult)> = None;
            let mut infeasible = 0;
            for (i, r) in results.into_iter().enumerate() {
                match r? {
                    None => infeasible += 1,
                    Some(res) => {
                        if best
                            .as_ref()
                            .is_none_or(|(_, b)| res.nll_value < b.nll_value)
                        {
                            best = Some((i, res));
                        }
                    }
                }
            }
            let (i, result) = best.ok_or_else(|| {
                Error::Initialization(format!("no support of size {s} admits a feasible start"))
            })?;
            Ok(SparseSolveResult {
                result,
                support: supports[i].clone(),
                supports_evaluated: supports.len(),
                supports_infeasible: infeasible,
                guaranteed_optimal: true,
            })
        }
        SparseMode::Iterative => {
            let full = estimate_mle(ctx, constraints, None, options)?;
            let basis = ctx.basis();
            let weight: Vec<f64> = (0..n).map(|i| basis.gram()[(i, i)].sqrt()).collect();
            let top = |v: &[f64]| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| {
                    (v[b].abs() * weight[b])
                        .total_cmp(&(v[a].abs() * weight[a]))
                        .then(a.cmp(&b))
                });
                let mut s_idx = idx[..s].to_vec();
                s_idx.sort_unstable();
                s_idx
            };
            let mut support = top(&full.x_hat);
            let mut evaluated = 0;
            let mut infeasible = 0;
            let mut best: Option<(Vec<usize>, SolveResult)> = None;
            for _ in 0..50 {
                evaluated += 1;
                let Some(res) = solve_on_support(ctx, constraints, &support, options)? else {
                    infeasible += 1;
                    break;
                };
                let grad = ctx.gradient(&res.x_hat)?;
                let hess = ctx.hessian(&res.x_hat)?;
                let z: Vec<f64> = (0..n)
                    .map(|i| {
                        let h = hess[(i, i)];
                        if h > 0.0 {
                            res.x_hat[i] - grad[i] / h
                        } else {
                            res.x_hat[i]
                        }
                    })
                    .collect();
                let next = top(&z);
                let improved = best
                    .as_ref()
                    .is_none_or(|(_, b)| res.nll_value < b.nll_value);
                if improved {
                    best = Some((support.clone(), res));
                }
                if next == support || !improved {
                    break;
                }
                support = next;
            }
            let (support, result) = best.ok_or_else(|| {
                Error::Initialization("hard-thresholded support admits no feasible start".into())
            })?;
            Ok(SparseSolveResult {
                result,
                support,
                supports_evaluated: evaluated,
                supports_infeasible: infeasible,
                guaranteed_optimal: false,
            })
        }
    }
}

/// Largest per-bin empirical rate `y_m / |T_m|`. A heuristic `R_max`
/// estimate only: it is noisy and biased upward for small counts.
pub fn heuristic_rmax(counts: &CountData) -> f64 {
    counts
        .counts
        .iter()
        .zip(counts.widths())
        .map(|(&y, w)| y as f64 / w)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisSpec, PreparedBasis};
    use crate::likelihood::{Observations, Regularization};
    use crate::process::EventSet;

    #[test]
    fn l1_projection_examples() {
        assert_eq!(project_l1(&[0.2, -0.3], 1.0).unwrap(), vec![0.2, -0.3]);
        assert_eq!(project_l1(&[3.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        let p = project_l1(&[1.0, -2.0, 0.5], 1.0).unwrap();
        assert!((p.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(project_l1(&p, 1.0).unwrap(), p);
        assert!(project_l1(&[1.0], 0.0).is_err());
    }

    #[test]
    fn nnls_simple() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let f = DVector::from_vec(vec![2.0, -1.0]);
        let x = nnls(&e, &f);
        assert_eq!(x.as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn identity_basis_mle_is_counts() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(4)).unwrap();
        let ev = EventSet::new(&p.spec().domain, vec![0.1, 0.2, 0.7, 2.5, 3.1, 3.2, 3.3]).unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let opts = SolveOptions {
            tol: 1e-14,
            ..Default::default()
        };
        let r = estimate_mle(&ctx, &ConstraintSet::default(), None, &opts).unwrap();
        assert!(r.converged, "{r:?}");
        for (x, c) in r.x_hat.iter().zip([3.0, 0.0, 1.0, 3.0]) {
            assert!((x - c).abs() < 1e-8, "{:?}", r.x_hat);
        }
    }

    #[test]
    fn no_events_nonnegative_gives_zero() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(1)).unwrap();
        let ev = EventSet::empty();
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let cons = ConstraintSet {
            nonnegative: true,
            ..Default::default()
        };
        let r = estimate_mle(&ctx, &cons, None, &SolveOptions::default()).unwrap();
        assert_eq!(r.x_hat, vec![0.0]);
        assert!(r.converged);
    }

    #[test]
    fn infeasible_init_rejected() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(2)).unwrap();
        let ev = EventSet::new(&p.spec().domain, vec![0.5, 1.5]).unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let err = estimate_mle(
            &ctx,
            &ConstraintSet::default(),
            Some(&[-1.0, 1.0]),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Initialization(_)));
    }

    #[test]
    fn events_outside_support_cannot_be_explained() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(2)).unwrap();
        let ev = EventSet::new(&p.spec().domain, vec![0.5, 1.5]).unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let cons = ConstraintSet {
            support: Some(vec![0]),
            ..Default::default()
        };
        assert!(matches!(
            estimate_mle(&ctx, &cons, None, &SolveOptions::default()),
            Err(Error::Initialization(_))
        ));
    }

    #[test]
    fn trace_is_monotone() {
        let p = PreparedBasis::new(BasisSpec::gaussian_grid(
            crate::basis::Domain::new(0.0, 1.0).unwrap(),
            4,
            0.2,
            1.0,
        ))
        .unwrap();
        let ev = crate::process::sample_arrivals(
            p.spec(),
            &[40.0, 10.0, 30.0, 60.0],
            None,
            crate::process::RngSeed::new(5),
        )
        .unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let opts = SolveOptions {
            record_trace: true,
            ..Default::default()
        };
        let r = estimate_mle(&ctx, &ConstraintSet::default(), None, &opts).unwrap();
        assert!(r.converged, "{}", r.termination);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn heuristic_rmax_is_max_bin_rate() {
        let b = BasisSpec::unit_indicators(2);
        let d = crate::process::BinnedDesign::uniform(&b, 4).unwrap();
        let c = d.with_counts(vec![1, 3, 0, 2]).unwrap();
        assert_eq!(heuristic_rmax(&c), 6.0);
    }
}
