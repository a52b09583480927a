//! Error-bound evaluators, Fisher information by Monte Carlo, and the
//! random quantities that drive the concentration lemmas.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{symmetric_eigenvalues, GramSummary, PreparedBasis};
use crate::error::{Error, Result};
use crate::process::{ArrivalSampler, EventSet, RngSeed};
use crate::stats::{mean_se, KahanSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Theorem1,
    Theorem2,
    RipForm,
    CorollaryCounting,
    CorollaryNoised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub zeta: f64,
    /// The constant `c` multiplying the bound.
    pub c_value: f64,
    /// Slack ratio `α` implied by the inputs; the precondition is `α > 2`.
    pub alpha: f64,
    /// The `s` in `c_{α,s}`.
    pub s: usize,
    /// Error bound `ε` on `‖x̂ − x̄‖₂`.
    pub bound: f64,
    /// `1 − (2k + 1)·exp(−ζ)`; negative values are reported as computed.
    pub probability: f64,
    pub k: usize,
    pub precondition_ok: bool,
    pub precondition_detail: String,
    /// `ζ > log(2k + 1)`, i.e. the probability is positive.
    pub nontrivial: bool,
}

/// `c_{α,s} = (10/3)·(2/(3√(αs)) + √2)/(1 − √(2/α))`, defined for `α > 2`.
/// `α = ∞` gives the limit `10√2/3`.
pub fn c_alpha_s(alpha: f64, s: usize) -> Result<f64> {
    if alpha.is_nan() || alpha <= 2.0 {
        return Err(Error::argument(format!(
            "c_alpha_s needs alpha > 2, got {alpha}"
        )));
    }
    if s == 0 {
        return Err(Error::argument("c_alpha_s needs s >= 1"));
    }
    let num = 2.0 / (3.0 * (alpha * s as f64).sqrt()) + std::f64::consts::SQRT_2;
    let den = 1.0 - (2.0 / alpha).sqrt();
    Ok(10.0 / 3.0 * num / den)
}

/// The `α` used when the inputs give `α ≤ 2` and no explicit constant is set.
pub const FALLBACK_ALPHA: f64 = 3.0;

pub fn success_probability(k: usize, zeta: f64) -> f64 {
    1.0 - (2 * k + 1) as f64 * (-zeta).exp()
}

fn check_rates(r_min: Option<f64>, r_max: f64, zeta: f64) -> Result<()> {
    if !(zeta.is_finite() && zeta > 0.0) {
        return Err(Error::argument(format!(
            "zeta must be positive, got {zeta}"
        )));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::argument(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    if let Some(r_min) = r_min {
        if !(r_min.is_finite() && r_min > 0.0 && r_min <= r_max) {
            return Err(Error::argument(format!(
                "need 0 < r_min <= r_max, got r_min = {r_min}, r_max = {r_max}"
            )));
        }
    }
    Ok(())
}

struct Assembled {
    kind: BoundKind,
    zeta: f64,
    alpha: f64,
    s: usize,
    k: usize,
    /// Bound with `c = 1`.
    unit_bound: f64,
    threshold_name: &'static str,
    rate: f64,
    threshold: f64,
}

fn assemble(a: Assembled, c_override: Option<f64>) -> Result<BoundReport> {
    let ok = a.rate > a.threshold;
    let mut detail = format!(
        "{} = {} {} 2ζ·ratio = {}",
        a.threshold_name,
        a.rate,
        if ok { ">" } else { "<=" },
        a.threshold
    );
    let c_value = match c_override {
        Some(c) if !(c.is_finite() && c > 0.0) => {
            return Err(Error::argument(format!(
                "constant c must be positive, got {c}"
            )))
        }
        Some(c) => {
            detail.push_str("; c supplied by caller");
            c
        }
        None if a.alpha > 2.0 => c_alpha_s(a.alpha, a.s)?,
        None => {
            detail.push_str("; alpha <= 2 leaves c_alpha_s undefined, c_{3,s} reported instead");
            c_alpha_s(FALLBACK_ALPHA, a.s)?
        }
    };
    let probability = success_probability(a.k, a.zeta);
    Ok(BoundReport {
        kind: a.kind,
        zeta: a.zeta,
        c_value,
        alpha: a.alpha,
        s: a.s,
        bound: c_value * a.unit_bound,
        probability,
        k: a.k,
        precondition_ok: ok,
        precondition_detail: detail,
        nontrivial: a.zeta > ((2 * a.k + 1) as f64).ln(),
    })
}

/// Error bound for the full support or a restricted support.
pub fn theorem_bound(
    summary: &GramSummary,
    r_min: f64,
    r_max: f64,
    zeta: f64,
    c: Option<f64>,
) -> Result<BoundReport> {
    check_rates(Some(r_min), r_max, zeta)?;
    let sup2 = summary.sup_norm_2inf.powi(2);
    let sigma = summary.sigma_min;
    let ratio = sup2 / sigma;
    assemble(
        Assembled {
            kind: if summary.is_full() {
                BoundKind::Theorem1
            } else {
                BoundKind::Theorem2
            },
            zeta,
            alpha: r_min / (zeta * ratio),
            s: summary.size(),
            k: summary.size(),
            unit_bound: (zeta * summary.trace).sqrt() / sigma * r_max / r_min.sqrt(),
            threshold_name: "r_min",
            rate: r_min,
            threshold: 2.0 * zeta * ratio,
        },
        c,
    )
}

/// Bound restated through the restricted isometry constant `δ_s`.
/// `sup_norm_2inf` is `‖γ‖₂,∞` of the full basis, which bounds every `‖γ_S‖₂,∞`.
pub fn rip_bound(
    delta_s: f64,
    s: usize,
    sup_norm_2inf: f64,
    r_min: f64,
    r_max: f64,
    zeta: f64,
    c: Option<f64>,
) -> Result<BoundReport> {
    if !(0.0..1.0).contains(&delta_s) {
        return Err(Error::argument(format!(
            "delta_s must lie in [0, 1), got {delta_s}"
        )));
    }
    if s == 0 {
        return Err(Error::argument("sparsity must be at least 1"));
    }
    check_rates(Some(r_min), r_max, zeta)?;
    let ratio = sup_norm_2inf.powi(2) / (1.0 - delta_s);
    assemble(
        Assembled {
            kind: BoundKind::RipForm,
            zeta,
            alpha: r_min / (zeta * ratio),
            s,
            k: s,
            unit_bound: (zeta * s as f64 * (1.0 + delta_s)).sqrt() / (1.0 - delta_s) * r_max
                / r_min.sqrt(),
            threshold_name: "r_min",
            rate: r_min,
            threshold: 2.0 * zeta * ratio,
        },
        c,
    )
}

/// Norms of a design matrix used by the counting corollary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignNorms {
    pub frobenius: f64,
    /// Smallest singular value `σ(A)`.
    pub sigma_min: f64,
    /// Largest row 2-norm `‖A‖₂,∞`.
    pub max_row_norm: f64,
}

pub fn design_norms(a: &DMatrix<f64>) -> Result<DesignNorms> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::argument("design matrix is empty"));
    }
    let frobenius = a.norm();
    if frobenius == 0.0 {
        return Err(Error::argument("design matrix is zero"));
    }
    let sv = a.clone().svd(false, false).singular_values;
    let sigma_min = if a.nrows() < a.ncols() {
        0.0
    } else {
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if sigma_min <= 1e-14 * frobenius {
        return Err(Error::RankDeficient(sigma_min));
    }
    let max_row_norm = a.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    Ok(DesignNorms {
        frobenius,
        sigma_min,
        max_row_norm,
    })
}

/// Bound for the counting model `y ~ Poisson(g + Ax̄)`.
pub fn counting_bound(
    a: &DMatrix<f64>,
    r_min: f64,
    r_max: f64,
    zeta: f64,
    c: Option<f64>,
) -> Result<BoundReport> {
    check_rates(Some(r_min), r_max, zeta)?;
    let norms = design_norms(a)?;
    let s2 = norms.sigma_min.powi(2);
    let ratio = norms.max_row_norm.powi(2) / s2;
    let n = a.ncols();
    assemble(
        Assembled {
            kind: BoundKind::CorollaryCounting,
            zeta,
            alpha: r_min / (zeta * ratio),
            s: n,
            k: n,
            unit_bound: zeta.sqrt() * norms.frobenius / s2 * r_max / r_min.sqrt(),
            threshold_name: "r_min",
            rate: r_min,
            threshold: 2.0 * zeta * ratio,
        },
        c,
    )
}

/// Bound after augmenting the data with homogeneous noise of rate `r_max`.
pub fn noised_bound(
    summary: &GramSummary,
    r_max: f64,
    zeta: f64,
    c: Option<f64>,
) -> Result<BoundReport> {
    check_rates(None, r_max, zeta)?;
    let ratio = summary.sup_norm_2inf.powi(2) / summary.sigma_min;
    assemble(
        Assembled {
            kind: BoundKind::CorollaryNoised,
            zeta,
            alpha: r_max / (zeta * ratio),
            s: summary.size(),
            k: summary.size(),
            unit_bound: 2.0 * (zeta * summary.trace).sqrt() / summary.sigma_min * r_max.sqrt(),
            threshold_name: "r_max",
            rate: r_max,
            threshold: 2.0 * zeta * ratio,
        },
        c,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityReport {
    pub s: usize,
    /// `log(2s + 1)`: the smallest ζ giving a positive probability.
    pub zeta_min: f64,
    /// `‖γ_S‖²₂,∞ / σ(Γ_S)`.
    pub ratio: f64,
    /// `s / |𝕋|`, the lower end of the chain `ratio ≥ s/|𝕋|`.
    pub ratio_lower: f64,
    pub chain_holds: bool,
    /// `2·ζ_min·s`, what `|𝕋|·r_min` must exceed.
    pub necessary_events_lb: f64,
    pub volume_times_rmin: f64,
    pub satisfied: bool,
    /// `|𝕋|·r_min ≤ M̄ ≤ |𝕋|·r_max`.
    pub mbar_lower: f64,
    pub mbar_upper: f64,
}

pub fn sample_complexity_check(
    summary: &GramSummary,
    r_min: f64,
    r_max: f64,
    s: usize,
) -> Result<SampleComplexityReport> {
    if s == 0 {
        return Err(Error::argument("sparsity must be at least 1"));
    }
    if !(r_min >= 0.0 && r_max >= r_min && r_max.is_finite()) {
        return Err(Error::argument(format!(
            "need 0 <= r_min <= r_max, got {r_min}, {r_max}"
        )));
    }
    let zeta_min = ((2 * s + 1) as f64).ln();
    let ratio = summary.sup_norm_2inf.powi(2) / summary.sigma_min;
    let ratio_lower = s as f64 / summary.volume;
    let necessary = 2.0 * zeta_min * s as f64;
    let vr = summary.volume * r_min;
    Ok(SampleComplexityReport {
        s,
        zeta_min,
        ratio,
        ratio_lower,
        chain_holds: ratio >= ratio_lower * (1.0 - 1e-12),
        necessary_events_lb: necessary,
        volume_times_rmin: vr,
        satisfied: vr > necessary,
        mbar_lower: vr,
        mbar_upper: summary.volume * r_max,
    })
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Monte-Carlo Fisher information `E[AᵀD²A]` and the companion `E[AᵀDA]`,
/// with `D = diag(g + Ax̄)⁻¹` evaluated at the sampled events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub trials: usize,
    pub fisher: Vec<Vec<f64>>,
    pub fisher_se: Vec<Vec<f64>>,
    pub gamma_check: Vec<Vec<f64>>,
    pub gamma_check_se: Vec<Vec<f64>>,
    /// `Tr(𝓘⁻¹)`.
    pub crlb_trace: f64,
    /// Delta-method standard error of `crlb_trace`.
    pub crlb_trace_se: f64,
    pub pseudo_inverse: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl FisherEstimate {
    pub fn fisher_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.fisher)
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.gamma_check)
    }
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])
}

/// Relative eigenvalue floor below which the Fisher estimate is treated as singular.
pub const FISHER_EIGEN_FLOOR: f64 = 1e-12;

/// Per-realization `(AᵀD²A, AᵀDA)` for events drawn under `x̄`.
pub fn fisher_terms(
    basis: &PreparedBasis,
    x_bar: &[f64],
    events: &EventSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let spec = basis.spec();
    spec.check_len(x_bar)?;
    let n = spec.n();
    let mut f = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(n, n);
    let mut a = vec![0.0; n];
    for &t in events.coordinates() {
        spec.eval_into(t, &mut a);
        let r = spec.offset_at(t) + crate::likelihood::dot(&a, x_bar);
        if !(r > 0.0) {
            return Err(Error::Infeasible { t, value: r });
        }
        for p in 0..n {
            for q in p..n {
                let v = a[p] * a[q] / r;
                g[(p, q)] += v;
                f[(p, q)] += v / r;
            }
        }
    }
    f.fill_lower_triangle_with_upper_triangle();
    g.fill_lower_triangle_with_upper_triangle();
    Ok((f, g))
}

fn mean_and_se(mats: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r, c) = mats[0].shape();
    let mut mean = DMatrix::zeros(r, c);
    let mut se = DMatrix::zeros(r, c);
    let mut buf = vec![0.0; mats.len()];
    for i in 0..r {
        for j in 0..c {
            for (b, m) in buf.iter_mut().zip(mats) {
                *b = m[(i, j)];
            }
            let (m, s) = mean_se(&buf);
            mean[(i, j)] = m;
            se[(i, j)] = s;
        }
    }
    (mean, se)
}

pub fn fisher_mc(
    basis: &PreparedBasis,
    x_bar: &[f64],
    trials: usize,
    seed: RngSeed,
) -> Result<FisherEstimate> {
    if trials == 0 {
        return Err(Error::argument("trials must be at least 1"));
    }
    let spec = basis.spec();
    let sampler = ArrivalSampler::new(spec, x_bar, None)?;
    let per_trial = crate::stats::map_trials(trials, |i| {
        let ev = sampler.sample(&mut seed.child(i as u64).rng())?;
        fisher_terms(basis, x_bar, &ev)
    })?;
    let (fs, gs): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
    let (fisher, fisher_se) = mean_and_se(&fs);
    let (gamma, gamma_se) = mean_and_se(&gs);

    let eig = nalgebra::SymmetricEigen::new(fisher.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let floor = FISHER_EIGEN_FLOOR * lmax;
    let mut pseudo = false;
    let n = spec.n();
    let mut inv = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > floor && lmax > 0.0 {
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / l;
        } else {
            pseudo = true;
        }
    }
    let crlb_trace = inv.trace();
    // d Tr(F⁻¹) = −Tr(F⁻¹ dF F⁻¹): linearize each trial around the mean.
    let inv2 = &inv * &inv;
    let lin: Vec<f64> = fs
        .iter()
        .map(|fi| {
            let mut acc = KahanSum::new();
            for (a, b) in inv2.iter().zip((fi - &fisher).iter()) {
                acc.add(-a * b);
            }
            acc.value()
        })
        .collect();
    let (_, crlb_trace_se) = mean_se(&lin);
    Ok(FisherEstimate {
        trials,
        fisher: rows_of(&fisher),
        fisher_se: rows_of(&fisher_se),
        gamma_check: rows_of(&gamma),
        gamma_check_se: rows_of(&gamma_se),
        crlb_trace,
        crlb_trace_se,
        pseudo_inverse: pseudo,
        warning: pseudo.then(|| {
            format!("Fisher estimate has eigenvalues below {FISHER_EIGEN_FLOOR:e}·λmax; pseudo-inverse trace reported")
        }),
    })
}

/// Realized values of the two random terms in the error analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaQuantities {
    /// `b_S − A_SᵀD1`.
    pub l1_vector: Vec<f64>,
    /// `‖b_S − A_SᵀD1‖₂`.
    pub l1_quantity: f64,
    /// `σ(A_SᵀDA_S)`.
    pub l2_quantity: f64,
    /// Realized event count `M`.
    pub events: usize,
}

pub fn lemma_quantities(
    basis: &PreparedBasis,
    x_bar: &[f64],
    events: &EventSet,
    support: Option<&[usize]>,
) -> Result<LemmaQuantities> {
    let spec = basis.spec();
    spec.check_len(x_bar)?;
    let s: Vec<usize> = match support {
        Some(s) => crate::basis::validate_support(s, spec.n())?,
        None => (0..spec.n()).collect(),
    };
    let k = s.len();
    let mut v: Vec<KahanSum> = s
        .iter()
        .map(|&i| {
            let mut acc = KahanSum::new();
            acc.add(basis.b()[i]);
            acc
        })
        .collect();
    let mut m = DMatrix::zeros(k, k);
    let mut a = vec![0.0; spec.n()];
    for &t in events.coordinates() {
        spec.eval_into(t, &mut a);
        let r = spec.offset_at(t) + crate::likelihood::dot(&a, x_bar);
        if !(r > 0.0) {
            return Err(Error::Infeasible { t, value: r });
        }
        for (p, &i) in s.iter().enumerate() {
            v[p].add(-a[i] / r);
            for (q, &j) in s.iter().enumerate().skip(p) {
                m[(p, q)] += a[i] * a[j] / r;
            }
        }
    }
    m.fill_lower_triangle_with_upper_triangle();
    let l1_vector: Vec<f64> = v.iter().map(KahanSum::value).collect();
    Ok(LemmaQuantities {
        l1_quantity: l1_vector.iter().map(|x| x * x).sum::<f64>().sqrt(),
        l1_vector,
        l2_quantity: symmetric_eigenvalues(&m)[0],
        events: events.len(),
    })
}

/// `(2/3)ζ‖γ_S‖₂,∞/R_min + √(2ζ(M/M̄)Tr(Γ_S)/R_min)`.
pub fn lemma1_bound(summary: &GramSummary, zeta: f64, r_min: f64, m_over_mbar: f64) -> f64 {
    2.0 / 3.0 * zeta * summary.sup_norm_2inf / r_min
        + (2.0 * zeta * m_over_mbar * summary.trace / r_min).sqrt()
}

/// `σ(Γ_S)·(1 − √(2ζ‖γ_S‖²₂,∞/(R_min σ(Γ_S))))`.
pub fn lemma2_bound(summary: &GramSummary, zeta: f64, r_min: f64) -> f64 {
    let s = summary.sigma_min;
    s * (1.0 - (2.0 * zeta * summary.sup_norm_2inf.powi(2) / (r_min * s)).sqrt())
}
