//! Negative log-likelihoods for the arrival and counting models, the two
//! regularized variants, and the intensity feasibility check.
//!
//! Every objective here has the form
//!
//! ```text
//! f(x) = lᵀx + k − Σ_j w_j · log(c_j + a_jᵀx)
//! ```
//!
//! so a single evaluator covers values, gradients and Hessians. Rows whose
//! log argument is nonpositive make the value `+∞`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, PreparedBasis, DEFAULT_CHECK_GRID};
use crate::error::{Error, Result};
use crate::process::{BinnedDesign, CountData, EventSet};
use crate::quad::{composite_gauss_legendre, golden_max};
use crate::stats::KahanSum;

/// Intensities at or above this are treated as nonnegative.
pub const FEASIBILITY_TOL: f64 = -1e-9;

pub const DEFAULT_REG_PANELS: usize = 64;
pub const DEFAULT_REG_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    Arrival,
    Counting,
    Augmented,
    DetRegularized,
}

#[derive(Debug, Clone, Copy)]
pub enum Observations<'a> {
    Events(&'a EventSet),
    Counts(&'a CountData),
}

#[derive(Debug, Clone, Copy, Default)]
pub enum Regularization<'a> {
    #[default]
    None,
    /// Merge the data with homogeneous noise events `ρ` of rate `beta`.
    Noise { events: &'a EventSet, beta: f64 },
    /// Replace the noise events' log-likelihood by its expectation.
    Deterministic {
        beta: f64,
        panels: usize,
        points: usize,
    },
}

impl Regularization<'_> {
    pub fn deterministic(beta: f64) -> Self {
        Regularization::Deterministic {
            beta,
            panels: DEFAULT_REG_PANELS,
            points: DEFAULT_REG_POINTS,
        }
    }
}

/// Rows `c_j + a_jᵀx`, stored row-major.
#[derive(Debug, Clone, Default)]
pub(crate) struct AffineRows {
    pub n: usize,
    pub offsets: Vec<f64>,
    pub rows: Vec<f64>,
    /// Coordinate each row refers to, for diagnostics.
    pub coords: Vec<f64>,
}

impl AffineRows {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ..Default::default()
        }
    }

    pub fn push(&mut self, c: f64, a: &[f64], t: f64) {
        self.offsets.push(c);
        self.rows.extend_from_slice(a);
        self.coords.push(t);
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.n..(j + 1) * self.n]
    }

    pub fn eval(&self, j: usize, x: &[f64]) -> f64 {
        self.offsets[j] + dot(self.row(j), x)
    }

    /// Keep columns `cols`; the dropped coordinates are fixed at zero.
    pub fn restrict(&self, cols: &[usize]) -> Self {
        let mut out = Self::new(cols.len());
        let mut buf = vec![0.0; cols.len()];
        for j in 0..self.len() {
            let r = self.row(j);
            for (b, &c) in buf.iter_mut().zip(cols) {
                *b = r[c];
            }
            out.push(self.offsets[j], &buf, self.coords[j]);
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone)]
pub(crate) struct LogSum {
    pub linear: Vec<f64>,
    pub constant: f64,
    pub terms: AffineRows,
    pub weights: Vec<f64>,
}

impl LogSum {
    fn push(&mut self, c: f64, a: &[f64], t: f64, w: f64) {
        if w > 0.0 {
            self.terms.push(c, a, t);
            self.weights.push(w);
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        // Compensated sum: near an optimum the terms cancel, and plain
        // summation would let rounding mask true decreases.
        let mut acc = KahanSum::new();
        acc.add(self.constant);
        for (l, xi) in self.linear.iter().zip(x) {
            acc.add(l * xi);
        }
        for (j, w) in self.weights.iter().enumerate() {
            let z = self.terms.eval(j, x);
            if !(z > 0.0) {
                return f64::INFINITY;
            }
            acc.add(-w * z.ln());
        }
        acc.value()
    }

    fn checked_args(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.weights.len())
            .map(|j| {
                let z = self.terms.eval(j, x);
                if z > 0.0 {
                    Ok(z)
                } else {
                    Err(Error::Infeasible {
                        t: self.terms.coords[j],
                        value: z,
                    })
                }
            })
            .collect()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.checked_args(x)?;
        let mut g = self.linear.clone();
        for (j, (zj, w)) in z.iter().zip(&self.weights).enumerate() {
            let s = w / zj;
            for (gi, a) in g.iter_mut().zip(self.terms.row(j)) {
                *gi -= s * a;
            }
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let z = self.checked_args(x)?;
        let n = self.linear.len();
        let mut h = DMatrix::zeros(n, n);
        for (j, (zj, w)) in z.iter().zip(&self.weights).enumerate() {
            let s = w / (zj * zj);
            let a = self.terms.row(j);
            for p in 0..n {
                if a[p] == 0.0 {
                    continue;
                }
                for q in p..n {
                    h[(p, q)] += s * a[p] * a[q];
                }
            }
        }
        for p in 0..n {
            for q in 0..p {
                h[(p, q)] = h[(q, p)];
            }
        }
        Ok(h)
    }

    pub fn restrict(&self, cols: &[usize]) -> Self {
        Self {
            linear: cols.iter().map(|&c| self.linear[c]).collect(),
            constant: self.constant,
            terms: self.terms.restrict(cols),
            weights: self.weights.clone(),
        }
    }
}

/// A likelihood bound to a basis, observations and an optional regularizer.
#[derive(Debug, Clone)]
pub struct LikelihoodContext<'a> {
    basis: &'a PreparedBasis,
    kind: LikelihoodKind,
    counting: bool,
    objective: LogSum,
    /// `R_x ≥ 0` rows: check grid (arrival) or per-bin integrated rates (counting).
    nonneg_rows: AffineRows,
    /// Same points as `nonneg_rows`, scaled so that `r_max · scale − row ≥ 0`
    /// expresses `R_x ≤ r_max`.
    box_scale: Vec<f64>,
    observed: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::argument(format!(
            "beta must be finite and nonnegative, got {beta}"
        )));
    }
    Ok(())
}

impl<'a> LikelihoodContext<'a> {
    pub fn new(
        basis: &'a PreparedBasis,
        data: Observations<'_>,
        reg: Regularization<'_>,
    ) -> Result<Self> {
        match data {
            Observations::Events(ev) => Self::arrival(basis, ev, reg),
            Observations::Counts(c) => Self::counting(basis, c, reg),
        }
    }

    fn arrival(
        basis: &'a PreparedBasis,
        events: &EventSet,
        reg: Regularization<'_>,
    ) -> Result<Self> {
        let spec = basis.spec();
        let n = spec.n();
        for &t in events.coordinates() {
            spec.domain.check(t)?;
        }
        let mut obj = LogSum {
            linear: basis.b().to_vec(),
            constant: 0.0,
            terms: AffineRows::new(n),
            weights: Vec::new(),
        };
        let mut buf = vec![0.0; n];
        let mut push_events = |obj: &mut LogSum, ev: &EventSet, shift: f64| {
            for &t in ev.coordinates() {
                spec.eval_into(t, &mut buf);
                obj.push(shift + spec.offset_at(t), &buf, t, 1.0);
            }
        };
        let kind = match reg {
            Regularization::None => {
                push_events(&mut obj, events, 0.0);
                LikelihoodKind::Arrival
            }
            Regularization::Noise { events: rho, beta } => {
                check_beta(beta)?;
                for &t in rho.coordinates() {
                    spec.domain.check(t)?;
                }
                obj.constant = basis.offset_integral();
                push_events(&mut obj, events, beta);
                push_events(&mut obj, rho, beta);
                LikelihoodKind::Augmented
            }
            Regularization::Deterministic {
                beta,
                panels,
                points,
            } => {
                check_beta(beta)?;
                if points < 2 || panels < 1 {
                    return Err(Error::argument(
                        "regularizer quadrature needs >= 1 panel and >= 2 points",
                    ));
                }
                push_events(&mut obj, events, beta);
                if beta > 0.0 {
                    let d = spec.domain;
                    // Panels never straddle a jump of g or γ.
                    let mut cuts = vec![d.lower];
                    cuts.extend(spec.breakpoints());
                    cuts.push(d.upper);
                    for piece in cuts.windows(2) {
                        let share = ((piece[1] - piece[0]) / d.volume() * panels as f64)
                            .ceil()
                            .max(1.0) as usize;
                        let (nodes, weights) =
                            composite_gauss_legendre(piece[0], piece[1], share, points);
                        for (t, w) in nodes.into_iter().zip(weights) {
                            spec.eval_into(t, &mut buf);
                            obj.push(beta + spec.offset_at(t), &buf, t, beta * w);
                        }
                    }
                }
                LikelihoodKind::DetRegularized
            }
        };
        let grid = basis.check_grid();
        let mut nonneg_rows = AffineRows::new(n);
        for k in 0..grid.len() {
            nonneg_rows.push(grid.offsets[k], grid.row(k), grid.points[k]);
        }
        let box_scale = vec![1.0; nonneg_rows.len()];
        Ok(Self {
            basis,
            kind,
            counting: false,
            objective: obj,
            nonneg_rows,
            box_scale,
            observed: events.len() as f64,
        })
    }

    fn counting(
        basis: &'a PreparedBasis,
        data: &CountData,
        reg: Regularization<'_>,
    ) -> Result<Self> {
        let n = basis.n();
        if data.design.ncols() != n
            || data.design.nrows() != data.bins()
            || data.g_integrals.len() != data.bins()
        {
            return Err(Error::argument("count data does not match the basis"));
        }
        let m0 = data.bins();
        let widths = data.widths();
        let mids: Vec<f64> = data.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let rows: Vec<Vec<f64>> = (0..m0)
            .map(|m| data.design.row(m).iter().copied().collect())
            .collect();
        let col_sums: Vec<f64> = (0..n).map(|j| data.design.column(j).sum()).collect();
        let mut obj = LogSum {
            linear: col_sums,
            constant: 0.0,
            terms: AffineRows::new(n),
            weights: Vec::new(),
        };
        let kind = match reg {
            Regularization::None => {
                for m in 0..m0 {
                    obj.push(
                        data.g_integrals[m],
                        &rows[m],
                        mids[m],
                        data.counts[m] as f64,
                    );
                }
                LikelihoodKind::Counting
            }
            Regularization::Noise { events: rho, beta } => {
                check_beta(beta)?;
                let binned = BinnedDesign {
                    edges: data.edges.clone(),
                    g_integrals: data.g_integrals.clone(),
                    design: DMatrix::zeros(0, 0),
                };
                let noise = binned.bin_counts(rho);
                obj.constant = data.g_integrals.iter().sum();
                for m in 0..m0 {
                    let c = data.g_integrals[m] + beta * widths[m];
                    obj.push(c, &rows[m], mids[m], (data.counts[m] + noise[m]) as f64);
                }
                LikelihoodKind::Augmented
            }
            Regularization::Deterministic { beta, .. } => {
                check_beta(beta)?;
                // Bin-averaged form of β∫log(β + R): β Σ w_m log(β + R_m / w_m).
                for m in 0..m0 {
                    let c = data.g_integrals[m] + beta * widths[m];
                    obj.push(
                        c,
                        &rows[m],
                        mids[m],
                        data.counts[m] as f64 + beta * widths[m],
                    );
                    if beta > 0.0 {
                        obj.constant += beta * widths[m] * widths[m].ln();
                    }
                }
                LikelihoodKind::DetRegularized
            }
        };
        let mut nonneg_rows = AffineRows::new(n);
        for m in 0..m0 {
            nonneg_rows.push(data.g_integrals[m], &rows[m], mids[m]);
        }
        Ok(Self {
            basis,
            kind,
            counting: true,
            objective: obj,
            nonneg_rows,
            box_scale: widths,
            observed: data.total() as f64,
        })
    }

    pub fn basis(&self) -> &PreparedBasis {
        self.basis
    }

    pub fn kind(&self) -> LikelihoodKind {
        self.kind
    }

    pub fn is_counting(&self) -> bool {
        self.counting
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// Observed event count `M` (or `Σ y_m`).
    pub fn observed_count(&self) -> f64 {
        self.observed
    }

    /// Negative log-likelihood; `+∞` outside the log domain.
    pub fn nll(&self, x: &[f64]) -> f64 {
        if x.len() != self.n() || x.iter().any(|v| !v.is_finite()) {
            return f64::NAN;
        }
        self.objective.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.basis.spec().check_len(x)?;
        self.objective.gradient(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.basis.spec().check_len(x)?;
        self.objective.hessian(x)
    }

    pub(crate) fn objective(&self) -> &LogSum {
        &self.objective
    }

    pub(crate) fn nonneg_rows(&self) -> &AffineRows {
        &self.nonneg_rows
    }

    /// Rows expressing `R_x ≤ r_max` at the same points as the nonnegativity rows.
    pub(crate) fn box_rows(&self, r_max: f64) -> AffineRows {
        let src = &self.nonneg_rows;
        let mut out = AffineRows::new(src.n);
        let mut neg = vec![0.0; src.n];
        for j in 0..src.len() {
            for (o, a) in neg.iter_mut().zip(src.row(j)) {
                *o = -a;
            }
            out.push(
                r_max * self.box_scale[j] - src.offsets[j],
                &neg,
                src.coords[j],
            );
        }
        out
    }

    /// Smallest row of the enforced nonnegativity constraint at `x`.
    pub fn min_constraint_intensity(&self, x: &[f64]) -> f64 {
        (0..self.nonneg_rows.len())
            .map(|j| self.nonneg_rows.eval(j, x) / self.box_scale[j])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Extremes of `R_x` over the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub min_intensity: f64,
    pub argmin: f64,
    pub max_intensity: f64,
    pub argmax: f64,
    /// `min_intensity ≥ −1e-9`.
    pub feasible: bool,
    /// `max_intensity ≤ r_max`, when an `r_max` was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_box: Option<bool>,
}

/// Min and max of `R_x` on a dense grid, refined by golden-section search.
pub fn feasibility_margin(
    basis: &BasisSpec,
    x: &[f64],
    r_max: Option<f64>,
) -> Result<FeasibilityReport> {
    feasibility_margin_with(basis, x, r_max, DEFAULT_CHECK_GRID)
}

pub fn feasibility_margin_with(
    basis: &BasisSpec,
    x: &[f64],
    r_max: Option<f64>,
    grid: usize,
) -> Result<FeasibilityReport> {
    basis.check_len(x)?;
    let d = basis.domain;
    let r = |t: f64| basis.intensity_unchecked(x, t);
    let mut pts = d.grid(grid);
    let piecewise = basis.is_piecewise_constant();
    if piecewise {
        let mut cuts = vec![d.lower];
        cuts.extend(basis.breakpoints());
        cuts.push(d.upper);
        pts.extend(cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        pts.sort_by(f64::total_cmp);
    }
    let vals: Vec<f64> = pts.iter().map(|&t| r(t)).collect();
    let (mut imin, mut imax) = (0, 0);
    for (i, &v) in vals.iter().enumerate() {
        if v < vals[imin] {
            imin = i;
        }
        if v > vals[imax] {
            imax = i;
        }
    }
    let (mut tmin, mut vmin) = (pts[imin], vals[imin]);
    let (mut tmax, mut vmax) = (pts[imax], vals[imax]);
    if !piecewise {
        let bracket = |i: usize| (pts[i.saturating_sub(1)], pts[(i + 1).min(pts.len() - 1)]);
        let (a, b) = bracket(imin);
        let (t, negv) = golden_max(|t| -r(t), a, b, 1e-10);
        if -negv < vmin {
            tmin = t;
            vmin = -negv;
        }
        let (a, b) = bracket(imax);
        let (t, v) = golden_max(r, a, b, 1e-10);
        if v > vmax {
            tmax = t;
            vmax = v;
        }
    }
    Ok(FeasibilityReport {
        min_intensity: vmin,
        argmin: tmin,
        max_intensity: vmax,
        argmax: tmax,
        feasible: vmin >= FEASIBILITY_TOL,
        within_box: r_max.map(|rm| vmax <= rm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Domain, FunctionSpec};

    fn constant_basis(t_end: f64) -> PreparedBasis {
        PreparedBasis::new(
            BasisSpec::new(
                Domain::new(0.0, t_end).unwrap(),
                FunctionSpec::Constant { value: 0.0 },
                vec![FunctionSpec::Constant { value: 1.0 }],
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn events(d: &Domain, ts: &[f64]) -> EventSet {
        EventSet::new(d, ts.to_vec()).unwrap()
    }

    #[test]
    fn arrival_constant_rate() {
        let p = constant_basis(3.0);
        let ev = events(&p.spec().domain, &[0.5, 1.0, 2.9, 0.1]);
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let lam: f64 = 2.5;
        let expect = lam * 3.0 - 4.0 * lam.ln();
        assert!((ctx.nll(&[lam]) - expect).abs() < 1e-12);
        assert_eq!(ctx.nll(&[-1.0]), f64::INFINITY);
        assert_eq!(ctx.nll(&[0.0]), f64::INFINITY);
    }

    #[test]
    fn empty_events_is_linear() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(3)).unwrap();
        let ev = EventSet::empty();
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        assert!((ctx.nll(&[1.0, 2.0, 3.0]) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn counting_zero_counts_and_single_bin() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(1)).unwrap();
        let design = BinnedDesign::uniform(p.spec(), 1).unwrap();
        let zero = design.with_counts(vec![0]).unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Counts(&zero), Regularization::None).unwrap();
        assert!((ctx.nll(&[4.0]) - 4.0).abs() < 1e-12);
        let k = design.with_counts(vec![7]).unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Counts(&k), Regularization::None).unwrap();
        assert!(ctx.gradient(&[7.0]).unwrap()[0].abs() < 1e-14);
        assert!(ctx.nll(&[7.0]) < ctx.nll(&[6.9]) && ctx.nll(&[7.0]) < ctx.nll(&[7.1]));
    }

    #[test]
    fn identity_gradient_closed_form() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(3)).unwrap();
        let ev = events(&p.spec().domain, &[0.2, 0.4, 1.5, 2.1, 2.2, 2.3]);
        let ctx =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let x = [1.5, 2.0, 4.0];
        let g = ctx.gradient(&x).unwrap();
        let counts = [2.0, 1.0, 3.0];
        for n in 0..3 {
            assert!((g[n] - (1.0 - counts[n] / x[n])).abs() < 1e-14);
        }
        assert!(matches!(
            ctx.gradient(&[0.0, 1.0, 1.0]),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn augmented_reduces_to_arrival_plus_offset_integral() {
        let b = BasisSpec::unit_indicators(2).with_offset(FunctionSpec::Constant { value: 0.7 });
        let p = PreparedBasis::new(b).unwrap();
        let ev = events(&p.spec().domain, &[0.3, 1.2, 1.9]);
        let empty = EventSet::empty();
        let arr =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let aug = LikelihoodContext::new(
            &p,
            Observations::Events(&ev),
            Regularization::Noise {
                events: &empty,
                beta: 0.0,
            },
        )
        .unwrap();
        let x = [1.3, 0.4];
        assert!((aug.nll(&x) - (arr.nll(&x) + 1.4)).abs() < 1e-12);
    }

    #[test]
    fn augmented_at_zero_intensity() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(2)).unwrap();
        let d = p.spec().domain;
        let ev = events(&d, &[0.3, 1.2, 1.9]);
        let rho = events(&d, &[0.5, 1.5]);
        let beta: f64 = 4.0;
        let ctx = LikelihoodContext::new(
            &p,
            Observations::Events(&ev),
            Regularization::Noise { events: &rho, beta },
        )
        .unwrap();
        assert!((ctx.nll(&[0.0, 0.0]) + 5.0 * beta.ln()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_beta_zero_equals_arrival() {
        let p = PreparedBasis::new(BasisSpec::gaussian_grid(
            Domain::new(0.0, 1.0).unwrap(),
            3,
            0.2,
            1.0,
        ))
        .unwrap();
        let ev = events(&p.spec().domain, &[0.1, 0.45, 0.8]);
        let arr =
            LikelihoodContext::new(&p, Observations::Events(&ev), Regularization::None).unwrap();
        let det = LikelihoodContext::new(
            &p,
            Observations::Events(&ev),
            Regularization::deterministic(0.0),
        )
        .unwrap();
        let x = [3.0, 1.0, 2.0];
        assert_eq!(arr.nll(&x), det.nll(&x));
    }

    #[test]
    fn deterministic_constant_rate() {
        let p = constant_basis(1.0);
        let ev = events(&p.spec().domain, &[0.2, 0.6]);
        let (lam, beta): (f64, f64) = (3.0, 1.5);
        let ctx = LikelihoodContext::new(
            &p,
            Observations::Events(&ev),
            Regularization::deterministic(beta),
        )
        .unwrap();
        let expect = lam - 2.0 * (beta + lam).ln() - beta * (beta + lam).ln();
        assert!((ctx.nll(&[lam]) - expect).abs() < 1e-12);
    }

    #[test]
    fn hessian_is_symmetric_psd() {
        let p = PreparedBasis::new(BasisSpec::gaussian_grid(
            Domain::new(0.0, 1.0).unwrap(),
            3,
            0.25,
            1.0,
        ))
        .unwrap();
        let ev = events(&p.spec().domain, &[0.1, 0.3, 0.45, 0.8, 0.9]);
        let ctx = LikelihoodContext::new(
            &p,
            Observations::Events(&ev),
            Regularization::deterministic(2.0),
        )
        .unwrap();
        let h = ctx.hessian(&[2.0, 1.0, 3.0]).unwrap();
        assert_eq!(h, h.transpose());
        let ev = crate::basis::symmetric_eigenvalues(&h);
        assert!(ev[0] >= -1e-12);
    }

    #[test]
    fn feasibility_identity_and_violation() {
        let b = BasisSpec::unit_indicators(4);
        let r = feasibility_margin(&b, &[0.0, 1.0, 2.0, 0.5], Some(1.5)).unwrap();
        assert!(r.feasible);
        assert_eq!(r.min_intensity, 0.0);
        assert_eq!(r.max_intensity, 2.0);
        assert_eq!(r.within_box, Some(false));
        let r = feasibility_margin(&b, &[1.0, -1.0, 2.0, 0.5], None).unwrap();
        assert!(!r.feasible);
        assert!(r.min_intensity <= -1.0);
        assert!(r.argmin >= 1.0 && r.argmin < 2.0);
    }

    #[test]
    fn counting_box_rows_use_bin_rates() {
        let p = PreparedBasis::new(BasisSpec::unit_indicators(2)).unwrap();
        let design = BinnedDesign::uniform(p.spec(), 4).unwrap();
        let c = design.with_counts(vec![1, 0, 2, 3]).unwrap();
        let ctx =
            LikelihoodContext::new(&p, Observations::Counts(&c), Regularization::None).unwrap();
        let rows = ctx.box_rows(5.0);
        // bin of width 0.5 under element 0 with x0 = 4: 5·0.5 − 0.5·4 = 0.5
        assert!((rows.eval(0, &[4.0, 1.0]) - 0.5).abs() < 1e-12);
        assert!((ctx.min_constraint_intensity(&[4.0, 1.0]) - 1.0).abs() < 1e-12);
    }
}
