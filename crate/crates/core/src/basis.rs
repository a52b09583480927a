//! Intensity model: domain, known offset `g(t)`, basis elements `γ_n(t)`, and
//! the spectral quantities of the Gram matrix that the error bounds consume.

use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, golden_max, QuadSettings};

/// Points on the dense grid used for sup-norm and feasibility searches.
pub const DEFAULT_CHECK_GRID: usize = 4096;

/// Largest basis size for which supports are enumerated exhaustively.
pub const MAX_ENUMERABLE: usize = 20;

/// A closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: f64,
    pub upper: f64,
}

impl Domain {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let d = Self { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.upper > self.lower) {
            return Err(Error::argument(format!(
                "domain [{}, {}] must be finite with upper > lower",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower && t <= self.upper
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// `n` uniformly spaced points including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let h = self.volume() / (n - 1) as f64;
        let mut g: Vec<f64> = (0..n).map(|i| self.lower + h * i as f64).collect();
        g[n - 1] = self.upper;
        g
    }
}

fn one() -> f64 {
    1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// One scalar function of the coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    /// `height` on `[lower, upper)`, zero elsewhere.
    Indicator {
        lower: f64,
        upper: f64,
        #[serde(default = "one")]
        height: f64,
    },
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// A tabulated kernel translated by `shift`: node `i` sits at
    /// `origin + shift + i * spacing`, linear in between, zero outside.
    ShiftedKernel {
        table: Vec<f64>,
        spacing: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        origin: f64,
        shift: f64,
    },
    /// Piecewise-linear through `(knots, values)`, zero outside the knot range.
    GridSampled {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

fn lerp_table(x0: f64, h: f64, table: &[f64], t: f64) -> f64 {
    let u = (t - x0) / h;
    let last = (table.len() - 1) as f64;
    if !(0.0..=last).contains(&u) {
        return 0.0;
    }
    let i = (u.floor() as usize).min(table.len() - 2);
    let frac = u - i as f64;
    table[i] + frac * (table[i + 1] - table[i])
}

impl FunctionSpec {
    pub fn indicator(lower: f64, upper: f64) -> Self {
        FunctionSpec::Indicator {
            lower,
            upper,
            height: 1.0,
        }
    }

    pub fn gaussian(center: f64, width: f64, amplitude: f64) -> Self {
        FunctionSpec::Gaussian {
            center,
            width,
            amplitude,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Indicator {
                lower,
                upper,
                height,
            } => {
                if t >= *lower && t < *upper {
                    *height
                } else {
                    0.0
                }
            }
            FunctionSpec::Gaussian {
                center,
                width,
                amplitude,
            } => {
                let z = (t - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
            FunctionSpec::ShiftedKernel {
                table,
                spacing,
                origin,
                shift,
            } => lerp_table(origin + shift, *spacing, table, t),
            FunctionSpec::GridSampled { knots, values } => {
                if t < knots[0] || t > knots[knots.len() - 1] {
                    return 0.0;
                }
                let j = knots.partition_point(|&k| k <= t).clamp(1, knots.len() - 1);
                let (k0, k1) = (knots[j - 1], knots[j]);
                let frac = (t - k0) / (k1 - k0);
                values[j - 1] + frac * (values[j] - values[j - 1])
            }
        }
    }

    /// Left limit at `t`. Differs from `eval` only at an indicator's jumps.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self {
            FunctionSpec::Indicator {
                lower,
                upper,
                height,
            } => {
                if t > *lower && t <= *upper {
                    *height
                } else {
                    0.0
                }
            }
            _ => self.eval(t),
        }
    }

    /// Coordinates where the function or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            FunctionSpec::Constant { .. } | FunctionSpec::Gaussian { .. } => Vec::new(),
            FunctionSpec::Indicator { lower, upper, .. } => vec![*lower, *upper],
            FunctionSpec::ShiftedKernel {
                table,
                spacing,
                origin,
                shift,
            } => (0..table.len())
                .map(|i| origin + shift + spacing * i as f64)
                .collect(),
            FunctionSpec::GridSampled { knots, .. } => knots.clone(),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(
            self,
            FunctionSpec::Constant { .. } | FunctionSpec::Indicator { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match self {
            FunctionSpec::Constant { value } if !value.is_finite() => {
                Err(Error::argument("constant value must be finite"))
            }
            FunctionSpec::Indicator {
                lower,
                upper,
                height,
            } if !(finite(&[*lower, *upper, *height]) && lower < upper) => Err(
                Error::argument(format!("indicator [{lower}, {upper}) must be finite and ordered")),
            ),
            FunctionSpec::Gaussian {
                center,
                width,
                amplitude,
            } if !(finite(&[*center, *width, *amplitude]) && *width > 0.0) => Err(
                Error::argument("gaussian needs finite parameters and positive width"),
            ),
            FunctionSpec::ShiftedKernel {
                table,
                spacing,
                origin,
                shift,
            } if !(table.len() >= 2
                && finite(table)
                && finite(&[*spacing, *origin, *shift])
                && *spacing > 0.0) =>
            {
                Err(Error::argument(
                    "shifted kernel needs at least two finite table values and positive spacing",
                ))
            }
            FunctionSpec::GridSampled { knots, values }
                if !(knots.len() >= 2
                    && knots.len() == values.len()
                    && finite(knots)
                    && finite(values)
                    && knots.windows(2).all(|w| w[1] > w[0])) =>
            {
                Err(Error::argument(
                    "grid-sampled function needs >= 2 strictly increasing knots and matching values",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Offset `g(t)` plus the ordered basis `γ_1..γ_N` on a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub domain: Domain,
    pub offset: FunctionSpec,
    pub elements: Vec<FunctionSpec>,
}

impl BasisSpec {
    pub fn new(domain: Domain, offset: FunctionSpec, elements: Vec<FunctionSpec>) -> Result<Self> {
        let b = Self {
            domain,
            offset,
            elements,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: BasisSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.elements.is_empty() {
            return Err(Error::argument("basis needs at least one element"));
        }
        self.offset.validate()?;
        for (i, e) in self.elements.iter().enumerate() {
            e.validate()
                .map_err(|err| Error::argument(format!("element {i}: {err}")))?;
        }
        Ok(())
    }

    /// Disjoint unit indicators `[n-1, n)` on `[0, n]`, zero offset.
    pub fn unit_indicators(n: usize) -> Self {
        let elements = (0..n)
            .map(|i| FunctionSpec::indicator(i as f64, (i + 1) as f64))
            .collect();
        Self {
            domain: Domain {
                lower: 0.0,
                upper: n as f64,
            },
            offset: FunctionSpec::Constant { value: 0.0 },
            elements,
        }
    }

    /// `n` Gaussians centered at the midpoints of `n` equal cells of the domain.
    pub fn gaussian_grid(domain: Domain, n: usize, width: f64, amplitude: f64) -> Self {
        let h = domain.volume() / n as f64;
        let elements = (0..n)
            .map(|i| FunctionSpec::gaussian(domain.lower + h * (i as f64 + 0.5), width, amplitude))
            .collect();
        Self {
            domain,
            offset: FunctionSpec::Constant { value: 0.0 },
            elements,
        }
    }

    pub fn with_offset(mut self, offset: FunctionSpec) -> Self {
        self.offset = offset;
        self
    }

    pub fn n(&self) -> usize {
        self.elements.len()
    }

    /// The domain is closed, so its right endpoint takes left limits and the
    /// last half-open indicator still covers it.
    fn eval_fn(&self, f: &FunctionSpec, t: f64) -> f64 {
        if t == self.domain.upper {
            f.eval_left(t)
        } else {
            f.eval(t)
        }
    }

    pub fn offset_at(&self, t: f64) -> f64 {
        self.eval_fn(&self.offset, t)
    }

    /// Writes `γ(t)` into `out` without a domain check.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.elements) {
            *o = self.eval_fn(e, t);
        }
    }

    pub fn eval_basis(&self, t: f64) -> Result<Vec<f64>> {
        self.domain.check(t)?;
        let mut out = vec![0.0; self.n()];
        self.eval_into(t, &mut out);
        Ok(out)
    }

    pub(crate) fn intensity_unchecked(&self, x: &[f64], t: f64) -> f64 {
        self.offset_at(t)
            + self
                .elements
                .iter()
                .zip(x)
                .map(|(e, xn)| xn * self.eval_fn(e, t))
                .sum::<f64>()
    }

    /// `g(t) + x·γ(t)`. May be negative; feasibility is checked elsewhere.
    pub fn eval_intensity(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_len(x)?;
        self.domain.check(t)?;
        Ok(self.intensity_unchecked(x, t))
    }

    pub(crate) fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::argument(format!(
                "coefficient vector has length {}, basis has {} elements",
                x.len(),
                self.n()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("coefficients must be finite"));
        }
        Ok(())
    }

    /// Sorted, deduplicated breakpoints of offset and elements inside the domain.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = std::iter::once(&self.offset)
            .chain(&self.elements)
            .flat_map(FunctionSpec::breakpoints)
            .filter(|&p| p > self.domain.lower && p < self.domain.upper)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.offset.is_piecewise_constant()
            && self.elements.iter().all(|e| e.is_piecewise_constant())
    }

    /// `(∫g, [∫γ_n])` over `[a, b]`.
    pub fn integrals_over(
        &self,
        a: f64,
        b: f64,
        settings: &QuadSettings,
    ) -> Result<(f64, Vec<f64>)> {
        let n = self.n();
        let out = adaptive_simpson(
            |t, o| {
                o[0] = self.offset.eval(t);
                self.eval_into(t, &mut o[1..]);
            },
            n + 1,
            a,
            b,
            &self.breakpoints(),
            settings,
        )?;
        let mut values = out.values;
        let g = values.remove(0);
        Ok((g, values))
    }

    /// `(∫g, b)` over the whole domain, `b_n = ∫γ_n`.
    pub fn integrals(&self) -> Result<(f64, Vec<f64>)> {
        self.integrals_over(
            self.domain.lower,
            self.domain.upper,
            &QuadSettings::default(),
        )
    }

    /// Gram matrix `Γ_ij = ∫ γ_i γ_j` and the quadrature error estimate.
    pub fn gram(&self, settings: &QuadSettings) -> Result<(DMatrix<f64>, f64)> {
        let n = self.n();
        let mut gamma = vec![0.0; n];
        let out = adaptive_simpson(
            |t, o| {
                self.eval_into(t, &mut gamma);
                let mut k = 0;
                for i in 0..n {
                    for j in i..n {
                        o[k] = gamma[i] * gamma[j];
                        k += 1;
                    }
                }
            },
            n * (n + 1) / 2,
            self.domain.lower,
            self.domain.upper,
            &self.breakpoints(),
            settings,
        )?;
        let mut m = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = out.values[k];
                m[(j, i)] = out.values[k];
                k += 1;
            }
        }
        Ok((m, out.error_estimate))
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub(crate) fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub(crate) fn validate_support(support: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut s = support.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != support.len() {
        return Err(Error::argument("support contains duplicate indices"));
    }
    if s.is_empty() {
        return Err(Error::argument("support must be nonempty"));
    }
    if let Some(&bad) = s.iter().find(|&&i| i >= n) {
        return Err(Error::argument(format!(
            "support index {bad} out of range for {n} elements"
        )));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramSettings {
    pub quad: QuadSettings,
    pub sup_grid: usize,
    pub sup_tol: f64,
    /// Γ is rejected when its smallest eigenvalue is below `-psd_rel_tol · Tr(Γ)`.
    pub psd_rel_tol: f64,
}

impl Default for GramSettings {
    fn default() -> Self {
        Self {
            quad: QuadSettings::default(),
            sup_grid: DEFAULT_CHECK_GRID,
            sup_tol: 1e-10,
            psd_rel_tol: 1e-8,
        }
    }
}

/// Gram matrix of `γ_S` with the scalars the bounds use.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSummary {
    /// Sorted element indices (0-based).
    pub support: Vec<usize>,
    /// Number of elements in the full basis.
    pub full_dim: usize,
    pub gram: DMatrix<f64>,
    pub trace: f64,
    /// Smallest eigenvalue `σ(Γ_S)`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `sup_t ‖γ_S(t)‖₂`.
    pub sup_norm_2inf: f64,
    pub quadrature_error_estimate: f64,
    /// Domain volume `|𝕋|`.
    pub volume: f64,
}

impl GramSummary {
    pub fn size(&self) -> usize {
        self.support.len()
    }

    pub fn is_full(&self) -> bool {
        self.support.len() == self.full_dim
    }

    /// `Tr(Γ_S⁻¹)`.
    pub fn trace_inverse(&self) -> Result<f64> {
        let ev = symmetric_eigenvalues(&self.gram);
        if ev[0] <= 0.0 {
            return Err(Error::RankDeficient(ev[0].max(0.0).sqrt()));
        }
        Ok(ev.iter().map(|l| 1.0 / l).sum())
    }
}

/// Sup norm of `γ_S` over the domain.
pub fn sup_norm(basis: &BasisSpec, support: &[usize], grid: usize, tol: f64) -> f64 {
    let mut buf = vec![0.0; basis.n()];
    let mut norm_at = |t: f64| {
        basis.eval_into(t, &mut buf);
        support.iter().map(|&i| buf[i] * buf[i]).sum::<f64>().sqrt()
    };
    let d = basis.domain;
    if basis.is_piecewise_constant() {
        let mut pts = vec![d.lower];
        pts.extend(basis.breakpoints());
        pts.push(d.upper);
        return pts
            .windows(2)
            .map(|w| norm_at(0.5 * (w[0] + w[1])))
            .fold(0.0, f64::max);
    }
    let ts = d.grid(grid);
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for (k, &t) in ts.iter().enumerate() {
        let v = norm_at(t);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let a = ts[best_k.saturating_sub(1)];
    let b = ts[(best_k + 1).min(ts.len() - 1)];
    let (_, refined) = golden_max(&mut norm_at, a, b, tol);
    best.max(refined)
}

/// Summary of `Γ_S` from an already computed full Gram matrix.
pub fn summary_from_gram(
    basis: &BasisSpec,
    gram: &DMatrix<f64>,
    quadrature_error_estimate: f64,
    support: Option<&[usize]>,
    settings: &GramSettings,
) -> Result<GramSummary> {
    let n = basis.n();
    let support = match support {
        Some(s) => validate_support(s, n)?,
        None => (0..n).collect(),
    };
    let sub = submatrix(gram, &support);
    let ev = symmetric_eigenvalues(&sub);
    let trace = sub.trace();
    let sigma_min = ev[0];
    if sigma_min < -settings.psd_rel_tol * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric {
            message: format!(
                "Gram matrix is not positive semidefinite (min eigenvalue {sigma_min:e})"
            ),
            estimate: quadrature_error_estimate,
        });
    }
    Ok(GramSummary {
        sup_norm_2inf: sup_norm(basis, &support, settings.sup_grid, settings.sup_tol),
        support,
        full_dim: n,
        gram: sub,
        trace,
        sigma_min,
        sigma_max: ev[ev.len() - 1],
        quadrature_error_estimate,
        volume: basis.domain.volume(),
    })
}

pub fn gram_summary_with(
    basis: &BasisSpec,
    support: Option<&[usize]>,
    settings: &GramSettings,
) -> Result<GramSummary> {
    let (gram, err) = basis.gram(&settings.quad)?;
    summary_from_gram(basis, &gram, err, support, settings)
}

/// Γ, trace, smallest eigenvalue and `‖γ‖₂,∞`, optionally restricted to `support`.
pub fn gram_summary(basis: &BasisSpec, support: Option<&[usize]>) -> Result<GramSummary> {
    gram_summary_with(basis, support, &GramSettings::default())
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact restricted isometry constant of order `s` by enumerating every
/// support of size `s`.
pub fn rip_constant(gram: &DMatrix<f64>, s: usize) -> Result<f64> {
    let n = gram.nrows();
    if n > MAX_ENUMERABLE {
        return Err(Error::Capacity(format!(
            "RIP enumeration limited to N <= {MAX_ENUMERABLE}, got {n}"
        )));
    }
    if s == 0 || s > n {
        return Err(Error::argument(format!("sparsity {s} must be in 1..={n}")));
    }
    let mut delta = 0.0f64;
    for_each_combination(n, s, |idx| {
        let ev = symmetric_eigenvalues(&submatrix(gram, idx));
        delta = delta.max(ev[ev.len() - 1] - 1.0).max(1.0 - ev[0]);
    });
    Ok(delta.max(0.0))
}

/// Dense-grid samples of `(g(t), γ(t))` used to enforce intensity
/// nonnegativity. Duplicate rows are dropped, which collapses
/// piecewise-constant bases to one row per piece.
#[derive(Debug, Clone)]
pub struct CheckGrid {
    n: usize,
    pub(crate) points: Vec<f64>,
    pub(crate) offsets: Vec<f64>,
    pub(crate) rows: Vec<f64>,
}

impl CheckGrid {
    pub fn new(basis: &BasisSpec, size: usize) -> Self {
        let n = basis.n();
        let mut seen = HashSet::new();
        let mut grid = Self {
            n,
            points: Vec::new(),
            offsets: Vec::new(),
            rows: Vec::new(),
        };
        let mut buf = vec![0.0; n];
        for t in basis.domain.grid(size) {
            let g = basis.offset_at(t);
            basis.eval_into(t, &mut buf);
            let key: Vec<u64> = std::iter::once(g)
                .chain(buf.iter().copied())
                .map(f64::to_bits)
                .collect();
            if seen.insert(key) {
                grid.points.push(t);
                grid.offsets.push(g);
                grid.rows.extend_from_slice(&buf);
            }
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n..(k + 1) * self.n]
    }
}

/// A basis with the integrals every likelihood needs computed once.
#[derive(Debug, Clone)]
pub struct PreparedBasis {
    spec: BasisSpec,
    offset_integral: f64,
    b: Vec<f64>,
    gram: DMatrix<f64>,
    gram_error: f64,
    check: CheckGrid,
}

impl PreparedBasis {
    pub fn new(spec: BasisSpec) -> Result<Self> {
        Self::with_check_grid(spec, DEFAULT_CHECK_GRID)
    }

    pub fn with_check_grid(spec: BasisSpec, grid: usize) -> Result<Self> {
        spec.validate()?;
        let (offset_integral, b) = spec.integrals()?;
        let (gram, gram_error) = spec.gram(&QuadSettings::default())?;
        let check = CheckGrid::new(&spec, grid);
        Ok(Self {
            spec,
            offset_integral,
            b,
            gram,
            gram_error,
            check,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// `∫g` over the domain.
    pub fn offset_integral(&self) -> f64 {
        self.offset_integral
    }

    /// `b_n = ∫γ_n`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_error(&self) -> f64 {
        self.gram_error
    }

    pub fn check_grid(&self) -> &CheckGrid {
        &self.check
    }

    pub fn summary(&self, support: Option<&[usize]>) -> Result<GramSummary> {
        summary_from_gram(
            &self.spec,
            &self.gram,
            self.gram_error,
            support,
            &GramSettings::default(),
        )
    }

    /// `M̄ = ∫g + b·x`, without a feasibility check.
    pub fn expected_count_unchecked(&self, x: &[f64]) -> f64 {
        self.offset_integral + self.b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>()
    }
}
