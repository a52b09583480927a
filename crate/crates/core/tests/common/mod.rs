#![allow(dead_code)]

use arrival_mle::basis::{BasisSpec, Domain, FunctionSpec};
use arrival_mle::process::{EventSet, RngSeed};
use nalgebra::DMatrix;
use rand::Rng;

/// Cyclic Jacobi eigenvalues, ascending. Deliberately independent of the
/// library's eigensolver.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Gaussian basis on [0, 1] with random centers and widths, normalized so
/// each element has unit L² norm.
pub fn random_gaussian_basis(n: usize, width: (f64, f64), seed: u64) -> BasisSpec {
    let mut rng = RngSeed::new(seed).rng();
    let elements = (0..n)
        .map(|i| {
            let center = (i as f64 + rng.random_range(0.3..0.7)) / n as f64;
            let w = rng.random_range(width.0..width.1);
            FunctionSpec::gaussian(center, w, (w * std::f64::consts::PI.sqrt()).powf(-0.5))
        })
        .collect();
    BasisSpec::new(
        Domain::new(0.0, 1.0).unwrap(),
        FunctionSpec::Constant { value: 0.0 },
        elements,
    )
    .unwrap()
}

pub fn random_events(domain: &Domain, m: usize, seed: u64) -> EventSet {
    let mut rng = RngSeed::new(seed).rng();
    let coords = (0..m)
        .map(|_| rng.random_range(domain.lower..domain.upper))
        .collect();
    EventSet::new(domain, coords).unwrap()
}

/// Composite trapezoid rule on `n` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for k in 1..n {
        s += f(a + h * k as f64);
    }
    s * h
}
