//! Rights distribution mechanisms.
//!
//! A mechanism splits the offered volume `V` into rights for the buyers given
//! their claims. Every mechanism here hands out exactly `V`, and the
//! [`verify_axioms`] harness samples the monotonicity conditions (in the
//! buyer's own claim and in `V`) for any [`Allocator`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};

/// Tolerance used when checking that weights sum to one.
const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionMechanism {
    Proportional,
    ContestedGarment,
    /// All rights go to the buyer with the `rank`-th highest claim (1-based).
    Canonical {
        rank: usize,
    },
    /// Convex combination of canonical mechanisms, `(alpha, rank)` pairs.
    Weighted {
        weights: Vec<(f64, usize)>,
    },
}

impl DistributionMechanism {
    pub fn validate(&self, num_buyers: usize) -> Result<()> {
        match self {
            DistributionMechanism::Proportional | DistributionMechanism::ContestedGarment => Ok(()),
            DistributionMechanism::Canonical { rank } => check_rank(*rank, num_buyers),
            DistributionMechanism::Weighted { weights } => {
                if weights.is_empty() {
                    return Err(MarketError::InvalidWeights("no weights".into()));
                }
                let mut sum = 0.0;
                for &(alpha, rank) in weights {
                    if !(0.0..=1.0).contains(&alpha) {
                        return Err(MarketError::InvalidWeights(format!(
                            "weight {alpha} outside [0, 1]"
                        )));
                    }
                    check_rank(rank, num_buyers)?;
                    sum += alpha;
                }
                if (sum - 1.0).abs() > WEIGHT_TOL {
                    return Err(MarketError::InvalidWeights(format!(
                        "weights sum to {sum}, not 1"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            DistributionMechanism::Proportional => "proportional".into(),
            DistributionMechanism::ContestedGarment => "contested_garment".into(),
            DistributionMechanism::Canonical { rank } => format!("canonical({rank})"),
            DistributionMechanism::Weighted { weights } => {
                let parts: Vec<String> = weights
                    .iter()
                    .map(|(a, n)| format!("{a}*canonical({n})"))
                    .collect();
                format!("weighted({})", parts.join(" + "))
            }
        }
    }

    /// Per-buyer share of the volume under the weighted decomposition, i.e.
    /// `alpha` re-indexed by buyer. Only defined for canonical and weighted
    /// mechanisms.
    pub fn buyer_weights(&self, claims: &[f64]) -> Option<Vec<f64>> {
        let order = claim_order(claims);
        let mut out = vec![0.0; claims.len()];
        match self {
            DistributionMechanism::Canonical { rank } => {
                out[*order.get(rank.checked_sub(1)?)?] = 1.0;
            }
            DistributionMechanism::Weighted { weights } => {
                for &(alpha, rank) in weights {
                    out[*order.get(rank.checked_sub(1)?)?] += alpha;
                }
            }
            _ => return None,
        }
        Some(out)
    }
}

fn check_rank(rank: usize, buyers: usize) -> Result<()> {
    if rank == 0 || rank > buyers {
        Err(MarketError::InvalidRank { rank, buyers })
    } else {
        Ok(())
    }
}

/// Anything that turns `(V, claims)` into rights.
pub trait Allocator {
    fn allocate(&self, total_volume: f64, claims: &[f64]) -> Result<Vec<f64>>;
}

impl Allocator for DistributionMechanism {
    fn allocate(&self, total_volume: f64, claims: &[f64]) -> Result<Vec<f64>> {
        allocate(self, total_volume, claims)
    }
}

impl<F> Allocator for F
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    fn allocate(&self, total_volume: f64, claims: &[f64]) -> Result<Vec<f64>> {
        self(total_volume, claims)
    }
}

fn check_inputs(total_volume: f64, claims: &[f64]) -> Result<()> {
    if claims.is_empty() {
        return Err(MarketError::NoBuyers);
    }
    if !total_volume.is_finite() {
        return Err(MarketError::NonFinite(total_volume));
    }
    if total_volume < 0.0 {
        return Err(MarketError::NegativeQuantity(total_volume));
    }
    for &d in claims {
        if !d.is_finite() {
            return Err(MarketError::NonFinite(d));
        }
        if d < 0.0 {
            return Err(MarketError::NegativeQuantity(d));
        }
    }
    Ok(())
}

pub fn allocate(
    mech: &DistributionMechanism,
    total_volume: f64,
    claims: &[f64],
) -> Result<Vec<f64>> {
    check_inputs(total_volume, claims)?;
    mech.validate(claims.len())?;
    match mech {
        DistributionMechanism::Proportional => Ok(proportional(total_volume, claims)),
        DistributionMechanism::ContestedGarment => contested_garment_rule(total_volume, claims),
        DistributionMechanism::Canonical { rank } => Ok(canonical(*rank, total_volume, claims)),
        DistributionMechanism::Weighted { weights } => {
            let mut out = vec![0.0; claims.len()];
            for &(alpha, rank) in weights {
                for (o, r) in out.iter_mut().zip(canonical(rank, total_volume, claims)) {
                    *o += alpha * r;
                }
            }
            Ok(out)
        }
    }
}

fn proportional(total_volume: f64, claims: &[f64]) -> Vec<f64> {
    let sum: f64 = claims.iter().sum();
    if sum <= 0.0 {
        let share = total_volume / claims.len() as f64;
        return vec![share; claims.len()];
    }
    claims.iter().map(|d| d * total_volume / sum).collect()
}

/// Buyer indices by descending claim; ties keep the lower index first.
fn claim_order(claims: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..claims.len()).collect();
    order.sort_by(|&a, &b| claims[b].total_cmp(&claims[a]).then(a.cmp(&b)));
    order
}

fn canonical(rank: usize, total_volume: f64, claims: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; claims.len()];
    out[claim_order(claims)[rank - 1]] = total_volume;
    out
}

/// Water level `lambda` with `sum_i min(caps_i, lambda) = volume`, found by
/// scanning the sorted caps. Requires `0 <= volume <= sum(caps)`.
pub(crate) fn fill_level(caps: &[f64], volume: f64) -> f64 {
    let mut sorted = caps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut below = 0.0;
    for (k, &cap) in sorted.iter().enumerate() {
        let level = (volume - below) / (n - k) as f64;
        if level <= cap {
            return level;
        }
        below += cap;
    }
    sorted.last().copied().unwrap_or(0.0)
}

/// The contested garment (Talmud) division, extended with an equal split of
/// any surplus beyond the total claim.
///
/// Below half the total claim every claimant receives `min(d/2, lambda)`;
/// between half and the full claim every claimant loses `min(d/2, mu)`;
/// above the total claim everyone gets their claim plus an equal share of
/// the rest.
pub fn contested_garment_rule(total_volume: f64, claims: &[f64]) -> Result<Vec<f64>> {
    check_inputs(total_volume, claims)?;
    let total: f64 = claims.iter().sum();
    let n = claims.len() as f64;
    if total_volume >= total {
        let surplus = (total_volume - total) / n;
        return Ok(claims.iter().map(|d| d + surplus).collect());
    }
    let halves: Vec<f64> = claims.iter().map(|d| d / 2.0).collect();
    if total_volume <= total / 2.0 {
        let lambda = fill_level(&halves, total_volume);
        Ok(halves.iter().map(|h| h.min(lambda)).collect())
    } else {
        let mu = fill_level(&halves, total - total_volume);
        Ok(claims
            .iter()
            .zip(&halves)
            .map(|(d, h)| d - h.min(mu))
            .collect())
    }
}

/// One violated axiom instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub axiom: u8,
    pub volume: f64,
    pub claims: Vec<f64>,
    pub other_volume: f64,
    pub other_claims: Vec<f64>,
    pub buyer: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AxiomReport {
    pub samples: usize,
    pub checks: [usize; 3],
    pub failures: [usize; 3],
    pub counterexamples: Vec<Counterexample>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.failures.iter().all(|&f| f == 0)
    }

    pub fn axiom_passed(&self, axiom: u8) -> bool {
        self.failures[(axiom - 1) as usize] == 0
    }
}

const MAX_COUNTEREXAMPLES: usize = 16;

/// Samples random `(V, D)` instances and checks:
/// 1. rights sum to `V` (within 1e-12, relative to `max(1, V)`);
/// 2. lowering one buyer's claim never raises that buyer's rights;
/// 3. lowering `V` never raises anybody's rights.
///
/// The number of buyers per instance is drawn from `min_buyers..=max_buyers`.
pub fn verify_axioms_with<A: Allocator + ?Sized>(
    mech: &A,
    samples: usize,
    rng_seed: u64,
    min_buyers: usize,
    max_buyers: usize,
) -> AxiomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = AxiomReport {
        samples,
        ..Default::default()
    };
    let tol = 1e-12;
    let record = |report: &mut AxiomReport, ce: Counterexample| {
        report.failures[(ce.axiom - 1) as usize] += 1;
        if report.counterexamples.len() < MAX_COUNTEREXAMPLES {
            report.counterexamples.push(ce);
        }
    };

    for _ in 0..samples {
        let n = rng.random_range(min_buyers..=max_buyers.max(min_buyers));
        let claims = sample_claims(&mut rng, n);
        let total: f64 = claims.iter().sum();
        let volume = rng.random_range(0.0..=2.0 * total.max(0.5));

        let Ok(base) = mech.allocate(volume, &claims) else {
            report.checks[0] += 1;
            record(
                &mut report,
                Counterexample {
                    axiom: 1,
                    volume,
                    claims: claims.clone(),
                    other_volume: volume,
                    other_claims: claims.clone(),
                    buyer: None,
                    detail: "allocation failed".into(),
                },
            );
            continue;
        };

        report.checks[0] += 1;
        let sum: f64 = base.iter().sum();
        if (sum - volume).abs() > tol * volume.max(1.0) || base.iter().any(|&r| r < -tol) {
            record(
                &mut report,
                Counterexample {
                    axiom: 1,
                    volume,
                    claims: claims.clone(),
                    other_volume: volume,
                    other_claims: claims.clone(),
                    buyer: None,
                    detail: format!("rights sum to {sum}"),
                },
            );
        }

        // Own-claim monotonicity: shrink one claim, sometimes to zero or to a tie.
        let b = rng.random_range(0..n);
        let mut lower = claims.clone();
        lower[b] = match rng.random_range(0..4) {
            0 => 0.0,
            1 => claims
                .iter()
                .enumerate()
                .filter(|&(j, &d)| j != b && d <= claims[b])
                .map(|(_, &d)| d)
                .fold(0.0, f64::max),
            _ => claims[b] * rng.random_range(0.0..1.0),
        };
        report.checks[1] += 1;
        if let Ok(alt) = mech.allocate(volume, &lower) {
            if alt[b] > base[b] + tol * volume.max(1.0) {
                record(
                    &mut report,
                    Counterexample {
                        axiom: 2,
                        volume,
                        claims: claims.clone(),
                        other_volume: volume,
                        other_claims: lower,
                        buyer: Some(b),
                        detail: format!("rights {} with claim lowered vs {}", alt[b], base[b]),
                    },
                );
            }
        }

        // Volume monotonicity.
        let smaller = volume * rng.random_range(0.0..1.0);
        report.checks[2] += 1;
        if let Ok(alt) = mech.allocate(smaller, &claims) {
            if let Some(b) = (0..n).find(|&b| alt[b] > base[b] + tol * volume.max(1.0)) {
                record(
                    &mut report,
                    Counterexample {
                        axiom: 3,
                        volume,
                        claims: claims.clone(),
                        other_volume: smaller,
                        other_claims: claims.clone(),
                        buyer: Some(b),
                        detail: format!("rights {} at smaller volume vs {}", alt[b], base[b]),
                    },
                );
            }
        }
    }
    report
}

/// [`verify_axioms_with`] over 2 to 8 buyers.
pub fn verify_axioms<A: Allocator + ?Sized>(
    mech: &A,
    samples: usize,
    rng_seed: u64,
) -> AxiomReport {
    verify_axioms_with(mech, samples, rng_seed, 2, 8)
}

fn sample_claims(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut claims: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    // Occasional ties and zero claims exercise tie-breaking and degenerate splits.
    if n >= 2 && rng.random_bool(0.2) {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        claims[i] = claims[j];
    }
    if rng.random_bool(0.1) {
        let i = rng.random_range(0..n);
        claims[i] = 0.0;
    }
    claims
}
