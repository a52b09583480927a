//! Numerical integration and one-dimensional search.
//!
//! The adaptive rule is composite Simpson with Richardson correction, applied
//! to vector-valued integrands so that a whole Gram matrix (or a row of bin
//! integrals) shares one set of function evaluations. Panel boundaries always
//! include the caller's breakpoints, and panel endpoints are evaluated as
//! one-sided limits, so piecewise-polynomial integrands of degree at most three
//! with aligned breakpoints are integrated exactly.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    /// Absolute tolerance per integrand component over the whole interval.
    pub abs_tol: f64,
    /// Subinterval budget before reporting non-convergence.
    pub max_intervals: usize,
    /// Uniform panels laid down before adaptive refinement starts.
    pub initial_panels: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_intervals: 1 << 20,
            initial_panels: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Integral {
    pub values: Vec<f64>,
    pub error_estimate: f64,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    fa: Vec<f64>,
    fm: Vec<f64>,
    fb: Vec<f64>,
    whole: Vec<f64>,
}

fn simpson(h: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    fa.iter()
        .zip(fm)
        .zip(fb)
        .map(|((a, m), b)| h / 6.0 * (a + 4.0 * m + b))
        .collect()
}

/// Integrate a vector-valued function over `[a, b]`.
///
/// `f(t, out)` writes `dim` values. Breakpoints outside `(a, b)` are ignored.
pub fn adaptive_simpson<F>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    settings: &QuadSettings,
) -> Result<Integral>
where
    F: FnMut(f64, &mut [f64]),
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::argument(format!(
            "integration interval [{a}, {b}] is not a finite ordered interval"
        )));
    }
    let mut total = vec![0.0; dim];
    if b == a {
        return Ok(Integral {
            values: total,
            error_estimate: 0.0,
            intervals: 0,
        });
    }
    let length = b - a;
    let panels = settings.initial_panels.max(1);
    let mut cuts: Vec<f64> = (0..=panels)
        .map(|i| a + length * i as f64 / panels as f64)
        .collect();
    cuts[panels] = b;
    cuts.extend(breakpoints.iter().copied().filter(|&p| p > a && p < b));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut eval = |t: f64| {
        let mut out = vec![0.0; dim];
        f(t, &mut out);
        out
    };

    let mut stack = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2).rev() {
        let (l, r) = (w[0], w[1]);
        let (lo, hi) = (l.next_up(), r.next_down());
        if hi <= lo {
            continue;
        }
        let fa = eval(lo);
        let fb = eval(hi);
        let fm = eval(0.5 * (l + r));
        let whole = simpson(r - l, &fa, &fm, &fb);
        stack.push(Segment {
            a: l,
            b: r,
            fa,
            fm,
            fb,
            whole,
        });
    }

    let mut intervals = stack.len();
    let mut error_estimate = 0.0;
    let floor = length * 1e-14;
    while let Some(seg) = stack.pop() {
        let m = 0.5 * (seg.a + seg.b);
        let flm = eval(0.5 * (seg.a + m));
        let frm = eval(0.5 * (m + seg.b));
        let left = simpson(m - seg.a, &seg.fa, &flm, &seg.fm);
        let right = simpson(seg.b - m, &seg.fm, &frm, &seg.fb);
        let delta = left
            .iter()
            .zip(&right)
            .zip(&seg.whole)
            .map(|((l, r), w)| (l + r - w).abs())
            .fold(0.0, f64::max);
        let local_tol = settings.abs_tol * (seg.b - seg.a) / length;
        if delta <= 15.0 * local_tol || seg.b - seg.a <= floor {
            for (i, t) in total.iter_mut().enumerate() {
                let s = left[i] + right[i];
                *t += s + (s - seg.whole[i]) / 15.0;
            }
            error_estimate += delta / 15.0;
            continue;
        }
        intervals += 1;
        if intervals > settings.max_intervals {
            return Err(Error::Numeric {
                message: format!(
                    "adaptive quadrature exceeded {} subintervals",
                    settings.max_intervals
                ),
                estimate: error_estimate + delta / 15.0,
            });
        }
        stack.push(Segment {
            a: m,
            b: seg.b,
            fa: seg.fm.clone(),
            fm: frm,
            fb: seg.fb,
            whole: right,
        });
        stack.push(Segment {
            a: seg.a,
            b: m,
            fa: seg.fa,
            fm: flm,
            fb: seg.fm,
            whole: left,
        });
    }
    Ok(Integral {
        values: total,
        error_estimate,
        intervals,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z_prev = z;
            z = z_prev - p1 / dp;
            if (z - z_prev).abs() <= 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed composite Gauss–Legendre rule: `panels` equal panels with `points`
/// nodes each. Returns `(nodes, weights)` on `[a, b]`.
pub fn composite_gauss_legendre(
    a: f64,
    b: f64,
    panels: usize,
    points: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (ref_nodes, ref_weights) = gauss_legendre(points);
    let h = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * points);
    let mut weights = Vec::with_capacity(panels * points);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (z, w) in ref_nodes.iter().zip(&ref_weights) {
            nodes.push(mid + 0.5 * h * z);
            weights.push(0.5 * h * w);
        }
    }
    (nodes, weights)
}

/// Golden-section search for a maximum of `f` on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    let ft = f(t);
    [(c, fc), (d, fd), (t, ft)]
        .into_iter()
        .fold((t, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        })
}
