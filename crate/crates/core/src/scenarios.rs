//! Reference scenarios and the random scenario generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::market::{BuyerSpec, MarketConfig, Quantity, SellerSpec, Variant};
use crate::rights::DistributionMechanism;
use crate::schedule::SupplySchedule;

pub const SCENARIO_A_CLAIMS: [f64; 3] = [1.0, 0.75, 0.125];
pub const SCENARIO_A_INCOMES: [f64; 3] = [0.0, 0.25, 0.75];

/// Config with constant schedules.
pub fn constant_config(
    resupplies: &[f64],
    claims: &[f64],
    incomes: &[f64],
    mechanism: DistributionMechanism,
    variant: Variant,
    horizon: usize,
) -> Result<MarketConfig> {
    if claims.len() != incomes.len() {
        return Err(MarketError::LengthMismatch {
            what: "incomes",
            got: incomes.len(),
            expected: claims.len(),
        });
    }
    let sellers = resupplies
        .iter()
        .map(|&g| {
            Quantity::new(g)?;
            Ok(SellerSpec {
                resupply: SupplySchedule::constant(g),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let buyers = claims
        .iter()
        .zip(incomes)
        .map(|(&d, &m)| {
            Quantity::new(m)?;
            Ok(BuyerSpec {
                claim: Quantity::new(d)?,
                income: SupplySchedule::constant(m),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MarketConfig::new(sellers, buyers, mechanism, variant, horizon)
}

/// One seller with unit supply; buyers with claims (1, 3/4, 1/8) and
/// incomes (0, 1/4, 3/4). Claims exceed supply, so Right is scarce.
pub fn scenario_a(mechanism: DistributionMechanism, variant: Variant) -> MarketConfig {
    constant_config(
        &[1.0],
        &SCENARIO_A_CLAIMS,
        &SCENARIO_A_INCOMES,
        mechanism,
        variant,
        100,
    )
    .expect("scenario A is valid")
}

/// Scenario A with every claim divided by five, so supply exceeds demand.
pub fn scenario_b(mechanism: DistributionMechanism, variant: Variant) -> MarketConfig {
    let claims: Vec<f64> = SCENARIO_A_CLAIMS.iter().map(|d| d / 5.0).collect();
    constant_config(
        &[1.0],
        &claims,
        &SCENARIO_A_INCOMES,
        mechanism,
        variant,
        200,
    )
    .expect("scenario B is valid")
}

/// Scenario A with the unit supply split between two identical sellers.
pub fn scenario_a_two_sellers(mechanism: DistributionMechanism, variant: Variant) -> MarketConfig {
    constant_config(
        &[0.5, 0.5],
        &SCENARIO_A_CLAIMS,
        &SCENARIO_A_INCOMES,
        mechanism,
        variant,
        100,
    )
    .expect("split scenario A is valid")
}

/// Total claim of a generated scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimScale {
    /// Claims sum to twice the unit supply.
    Scarce,
    /// Claims are `|B|` times smaller than in `Scarce`.
    PerBuyer,
}

impl ClaimScale {
    pub fn total(self, num_buyers: usize) -> f64 {
        match self {
            ClaimScale::Scarce => 2.0,
            ClaimScale::PerBuyer => 2.0 / num_buyers as f64,
        }
    }
}

fn dirichlet(means: &[f64], concentration: Option<f64>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let Some(alpha) = concentration else {
        return Ok(means.to_vec());
    };
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(MarketError::InvalidConfig(
            "concentration must be positive".into(),
        ));
    }
    let mut draws = Vec::with_capacity(means.len());
    for &mean in means {
        let gamma =
            Gamma::new(alpha * mean, 1.0).map_err(|e| MarketError::InvalidConfig(e.to_string()))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Ok(means.to_vec());
    }
    Ok(draws.iter().map(|d| d / total).collect())
}

fn inverse_position_means(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Random scenario: buyer `k` (1-based) has mean claim proportional to
/// `1/k` and mean income proportional to `1/(n + 1 - k)`. Incomes sum to
/// one, the seller supplies one unit per round. `None` for the
/// concentration returns the means without noise.
pub fn generate_dirichlet_scenario(
    num_buyers: usize,
    concentration: Option<f64>,
    scale: ClaimScale,
    rng_seed: u64,
) -> Result<MarketConfig> {
    if num_buyers < 2 {
        return Err(MarketError::InvalidConfig(
            "a generated scenario needs at least two buyers".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let claim_means = inverse_position_means(num_buyers);
    let mut income_means = claim_means.clone();
    income_means.reverse();
    let claim_total = scale.total(num_buyers);
    let claims: Vec<f64> = dirichlet(&claim_means, concentration, &mut rng)?
        .iter()
        .map(|c| c * claim_total)
        .collect();
    let incomes = dirichlet(&income_means, concentration, &mut rng)?;
    constant_config(
        &[1.0],
        &claims,
        &incomes,
        DistributionMechanism::Proportional,
        Variant::Rights,
        10 * num_buyers,
    )
}
