//! Sampling from the arrival model, homogeneous augmentation noise, and
//! binning into the counting model.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, Domain, PreparedBasis};
use crate::error::{Error, Result};
use crate::likelihood::feasibility_margin;
use crate::quad::QuadSettings;

/// Seed for a reproducible random stream. Distinct `stream` values under the
/// same `seed` give independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// A derived seed for sub-task `index`, independent of execution order.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index)),
        }
    }
}

/// Sorted event coordinates inside a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    coordinates: Vec<f64>,
}

impl EventSet {
    pub fn empty() -> Self {
        Self {
            coordinates: Vec::new(),
        }
    }

    /// Sorts the coordinates and checks that each lies in `domain`.
    pub fn new(domain: &Domain, mut coordinates: Vec<f64>) -> Result<Self> {
        if let Some(&t) = coordinates.iter().find(|&&t| !domain.contains(t)) {
            return Err(Error::Domain {
                t,
                lower: domain.lower,
                upper: domain.upper,
            });
        }
        coordinates.sort_by(f64::total_cmp);
        Ok(Self { coordinates })
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    /// `τ ∪ ρ`, still sorted.
    pub fn merge(&self, other: &EventSet) -> EventSet {
        let mut c = Vec::with_capacity(self.len() + other.len());
        c.extend_from_slice(&self.coordinates);
        c.extend_from_slice(&other.coordinates);
        c.sort_by(f64::total_cmp);
        EventSet { coordinates: c }
    }

    /// Number of events in `[a, b)`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.coordinates.partition_point(|&t| t < b) - self.coordinates.partition_point(|&t| t < a)
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::argument(format!("poisson mean {mean}: {e}")))?;
    Ok(p.sample(rng) as u64)
}

/// Homogeneous Poisson process of the given rate on `domain`.
pub fn sample_homogeneous_with<R: Rng + ?Sized>(
    rate: f64,
    domain: &Domain,
    rng: &mut R,
) -> Result<EventSet> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::argument(format!(
            "rate must be finite and nonnegative, got {rate}"
        )));
    }
    let m = poisson_count(rate * domain.volume(), rng)?;
    let coordinates = (0..m)
        .map(|_| domain.lower + domain.volume() * rng.random::<f64>())
        .collect();
    EventSet::new(domain, coordinates)
}

pub fn sample_homogeneous(rate: f64, domain: &Domain, seed: RngSeed) -> Result<EventSet> {
    sample_homogeneous_with(rate, domain, &mut seed.rng())
}

/// Thinning sampler for `R_x`, with the rate bound validated once.
#[derive(Debug, Clone)]
pub struct ArrivalSampler<'a> {
    basis: &'a BasisSpec,
    x: Vec<f64>,
    rate_bound: f64,
}

/// Default headroom over the computed supremum when no bound is given.
pub const RATE_BOUND_SAFETY: f64 = 1.1;

impl<'a> ArrivalSampler<'a> {
    /// With `rate_bound = None` the bound is `1.1 · sup R_x`. A supplied
    /// bound below the computed supremum is rejected.
    pub fn new(basis: &'a BasisSpec, x: &[f64], rate_bound: Option<f64>) -> Result<Self> {
        let report = feasibility_margin(basis, x, None)?;
        if !report.feasible {
            return Err(Error::Infeasible {
                t: report.argmin,
                value: report.min_intensity,
            });
        }
        let rate_bound = match rate_bound {
            Some(b) if !(b.is_finite() && b >= 0.0) => {
                return Err(Error::argument(format!(
                    "rate bound must be finite and nonnegative, got {b}"
                )))
            }
            Some(b) if b < report.max_intensity => {
                return Err(Error::BoundViolation {
                    t: report.argmax,
                    value: report.max_intensity,
                    bound: b,
                })
            }
            Some(b) => b,
            None => RATE_BOUND_SAFETY * report.max_intensity.max(0.0),
        };
        Ok(Self {
            basis,
            x: x.to_vec(),
            rate_bound,
        })
    }

    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    /// One realization. Draw order: candidate count, then for each candidate
    /// its position followed by its acceptance uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EventSet> {
        let d = self.basis.domain;
        let m = poisson_count(self.rate_bound * d.volume(), rng)?;
        let mut accepted = Vec::new();
        for _ in 0..m {
            let t = d.lower + d.volume() * rng.random::<f64>();
            let u: f64 = rng.random();
            let r = self.basis.intensity_unchecked(&self.x, t);
            if r > self.rate_bound {
                return Err(Error::BoundViolation {
                    t,
                    value: r,
                    bound: self.rate_bound,
                });
            }
            if r < -1e-9 {
                return Err(Error::Infeasible { t, value: r });
            }
            if u * self.rate_bound < r {
                accepted.push(t);
            }
        }
        accepted.sort_by(f64::total_cmp);
        Ok(EventSet {
            coordinates: accepted,
        })
    }
}

/// One draw from the arrival model with intensity `R_x`.
pub fn sample_arrivals(
    basis: &BasisSpec,
    x: &[f64],
    rate_bound: Option<f64>,
    seed: RngSeed,
) -> Result<EventSet> {
    ArrivalSampler::new(basis, x, rate_bound)?.sample(&mut seed.rng())
}

/// `M̄ = ∫ R_x`, after checking that `R_x ≥ 0`.
pub fn expected_count(basis: &PreparedBasis, x: &[f64]) -> Result<f64> {
    let report = feasibility_margin(basis.spec(), x, None)?;
    if !report.feasible {
        return Err(Error::Infeasible {
            t: report.argmin,
            value: report.min_intensity,
        });
    }
    Ok(basis.expected_count_unchecked(x))
}

/// Per-bin integrals of the model: `g_m = ∫_{T_m} g` and rows `γ_m = ∫_{T_m} γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDesign {
    pub edges: Vec<f64>,
    pub g_integrals: Vec<f64>,
    /// `M₀ × N`.
    pub design: DMatrix<f64>,
}

pub fn uniform_edges(domain: &Domain, m0: usize) -> Result<Vec<f64>> {
    if m0 == 0 {
        return Err(Error::argument("bin count must be at least 1"));
    }
    Ok(domain.grid(m0 + 1))
}

fn validate_edges(domain: &Domain, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::argument("need at least two bin edges"));
    }
    if !edges.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::argument("bin edges must be strictly increasing"));
    }
    let tol = 1e-12 * domain.volume();
    if (edges[0] - domain.lower).abs() > tol || (edges[edges.len() - 1] - domain.upper).abs() > tol
    {
        return Err(Error::argument(format!(
            "bin edges [{}, {}] must span the domain [{}, {}]",
            edges[0],
            edges[edges.len() - 1],
            domain.lower,
            domain.upper
        )));
    }
    Ok(())
}

impl BinnedDesign {
    pub fn new(basis: &BasisSpec, edges: Vec<f64>) -> Result<Self> {
        validate_edges(&basis.domain, &edges)?;
        let m0 = edges.len() - 1;
        let settings = QuadSettings {
            initial_panels: 4,
            ..Default::default()
        };
        let mut g_integrals = Vec::with_capacity(m0);
        let mut design = DMatrix::zeros(m0, basis.n());
        for (m, w) in edges.windows(2).enumerate() {
            let (g, row) = basis.integrals_over(w[0], w[1], &settings)?;
            g_integrals.push(g);
            for (n, v) in row.into_iter().enumerate() {
                design[(m, n)] = v;
            }
        }
        Ok(Self {
            edges,
            g_integrals,
            design,
        })
    }

    pub fn uniform(basis: &BasisSpec, m0: usize) -> Result<Self> {
        Self::new(basis, uniform_edges(&basis.domain, m0)?)
    }

    pub fn bins(&self) -> usize {
        self.g_integrals.len()
    }

    /// Bin index for each event; bins are `[left, right)` except the last,
    /// which is closed.
    pub fn bin_counts(&self, events: &EventSet) -> Vec<u64> {
        let m0 = self.bins();
        let mut counts = vec![0u64; m0];
        for &t in events.coordinates() {
            let j = self.edges.partition_point(|&e| e <= t).clamp(1, m0) - 1;
            counts[j] += 1;
        }
        counts
    }

    pub fn with_counts(&self, counts: Vec<u64>) -> Result<CountData> {
        if counts.len() != self.bins() {
            return Err(Error::argument(format!(
                "{} counts supplied for {} bins",
                counts.len(),
                self.bins()
            )));
        }
        Ok(CountData {
            edges: self.edges.clone(),
            counts,
            g_integrals: self.g_integrals.clone(),
            design: self.design.clone(),
        })
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Bin counts `y` together with the per-bin model integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct CountData {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub g_integrals: Vec<f64>,
    /// `M₀ × N` matrix `A` with rows `γ_m`.
    pub design: DMatrix<f64>,
}

impl CountData {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Uniform binning of `events` into `m0` bins.
pub fn discretize(basis: &BasisSpec, events: &EventSet, m0: usize) -> Result<CountData> {
    let design = BinnedDesign::uniform(basis, m0)?;
    design.with_counts(design.bin_counts(events))
}

pub fn discretize_with_edges(
    basis: &BasisSpec,
    events: &EventSet,
    edges: Vec<f64>,
) -> Result<CountData> {
    let design = BinnedDesign::new(basis, edges)?;
    design.with_counts(design.bin_counts(events))
}
