//! Domain types, market state and the inter-round transition.

use std::fmt;
use std::ops::{Add, AddAssign, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::rights::DistributionMechanism;
use crate::schedule::SupplySchedule;

/// Tolerance for conservation checks within one round.
pub const CONSERVATION_TOL: f64 = 1e-9;
/// Tolerance for equality of closed-form values.
pub const EQ_TOL: f64 = 1e-12;

/// Non-negative amount of Good, Money or Right.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Quantity(f64);

impl Quantity {
    pub const ZERO: Quantity = Quantity(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(MarketError::NonFinite(value));
        }
        if value < 0.0 {
            return Err(MarketError::NegativeQuantity(value));
        }
        Ok(Quantity(value))
    }

    /// Clamps rounding residue below zero. Anything more negative than
    /// `CONSERVATION_TOL` is still clamped, callers that care check first.
    pub fn clamped(value: f64) -> Self {
        if value.is_finite() && value > 0.0 {
            Quantity(value)
        } else {
            Quantity(0.0)
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn saturating_sub(self, other: Quantity) -> Quantity {
        Quantity::clamped(self.0 - other.0)
    }
}

impl TryFrom<f64> for Quantity {
    type Error = MarketError;
    fn try_from(value: f64) -> Result<Self> {
        Quantity::new(value)
    }
}

impl From<Quantity> for f64 {
    fn from(q: Quantity) -> f64 {
        q.0
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Add for Quantity {
    type Output = Quantity;
    fn add(self, rhs: Quantity) -> Quantity {
        Quantity(self.0 + rhs.0)
    }
}

impl AddAssign for Quantity {
    fn add_assign(&mut self, rhs: Quantity) {
        self.0 += rhs.0;
    }
}

impl Mul<Quantity> for Quantity {
    type Output = f64;
    fn mul(self, rhs: Quantity) -> f64 {
        self.0 * rhs.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellerState {
    pub good: Quantity,
    pub money: Quantity,
    /// Good received at the start of the current round.
    pub resupply: Quantity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerState {
    pub good: Quantity,
    pub money: Quantity,
    pub right: Quantity,
    pub claim: Quantity,
    /// Income received at the start of the current round.
    pub income: Quantity,
}

/// Which trading rules apply to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Rights are distributed and traded; proceeds from selling Right are
    /// only spendable from the next round on.
    Rights,
    /// No rights; buyers spend all Money at the clearing price.
    FreeMarket,
    /// Rights are traded and sale proceeds are spendable in the same round.
    MyopicRights,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Rights => "rights",
            Variant::FreeMarket => "free_market",
            Variant::MyopicRights => "myopic_rights",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rights" => Ok(Variant::Rights),
            "free_market" | "free-market" => Ok(Variant::FreeMarket),
            "myopic_rights" | "myopic-rights" | "myopic" => Ok(Variant::MyopicRights),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellerSpec {
    pub resupply: SupplySchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerSpec {
    pub claim: Quantity,
    pub income: SupplySchedule,
}

/// Immutable scenario description.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub sellers: Vec<SellerSpec>,
    pub buyers: Vec<BuyerSpec>,
    pub mechanism: DistributionMechanism,
    pub variant: Variant,
    pub horizon: usize,
    pub seller_storage_cost: f64,
    pub tolerance: f64,
    /// Relative markup greedy sellers add to the solved price. Zero for the
    /// actual greedy strategy; non-zero only for negative-control scenarios.
    pub greedy_price_markup: f64,
}

impl MarketConfig {
    pub fn new(
        sellers: Vec<SellerSpec>,
        buyers: Vec<BuyerSpec>,
        mechanism: DistributionMechanism,
        variant: Variant,
        horizon: usize,
    ) -> Result<Self> {
        let config = MarketConfig {
            sellers,
            buyers,
            mechanism,
            variant,
            horizon,
            seller_storage_cost: 1.0,
            tolerance: CONSERVATION_TOL,
            greedy_price_markup: 0.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        MarketConfig {
            variant,
            ..self.clone()
        }
    }

    pub fn with_mechanism(&self, mechanism: DistributionMechanism) -> Self {
        MarketConfig {
            mechanism,
            ..self.clone()
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        MarketConfig {
            horizon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sellers.is_empty() {
            return Err(MarketError::NoSellers);
        }
        if self.buyers.is_empty() {
            return Err(MarketError::NoBuyers);
        }
        if self.horizon == 0 {
            return Err(MarketError::InvalidConfig(
                "horizon must be positive".into(),
            ));
        }
        if !(self.seller_storage_cost.is_finite() && self.seller_storage_cost >= 0.0) {
            return Err(MarketError::InvalidConfig(
                "seller storage cost must be non-negative".into(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(MarketError::InvalidConfig(
                "tolerance must be positive".into(),
            ));
        }
        if !self.greedy_price_markup.is_finite() || self.greedy_price_markup <= -1.0 {
            return Err(MarketError::InvalidConfig(
                "price markup must be greater than -1".into(),
            ));
        }
        for (i, s) in self.sellers.iter().enumerate() {
            s.resupply
                .validate()
                .map_err(|e| MarketError::InvalidConfig(format!("seller {i}: {e}")))?;
        }
        for (i, b) in self.buyers.iter().enumerate() {
            b.income
                .validate()
                .map_err(|e| MarketError::InvalidConfig(format!("buyer {i}: {e}")))?;
        }
        self.mechanism.validate(self.buyers.len())?;
        Ok(())
    }

    pub fn claims(&self) -> Vec<f64> {
        self.buyers.iter().map(|b| b.claim.get()).collect()
    }

    pub fn incomes(&self, round: usize) -> Vec<f64> {
        self.buyers
            .iter()
            .map(|b| b.income.evaluate(round))
            .collect()
    }

    pub fn resupplies(&self, round: usize) -> Vec<f64> {
        self.sellers
            .iter()
            .map(|s| s.resupply.evaluate(round))
            .collect()
    }

    /// Constant schedules with total resupply and total income both one.
    pub fn is_normalized_constant(&self) -> bool {
        let constant = self.sellers.iter().all(|s| s.resupply.is_constant())
            && self.buyers.iter().all(|b| b.income.is_constant());
        let g: f64 = self.resupplies(1).iter().sum();
        let m: f64 = self.incomes(1).iter().sum();
        constant && (g - 1.0).abs() < EQ_TOL && (m - 1.0).abs() < EQ_TOL
    }
}

/// Snapshot of all holdings at a point within a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub round: usize,
    pub sellers: Vec<SellerState>,
    pub buyers: Vec<BuyerState>,
}

impl MarketState {
    /// Start of round 1: sellers hold their first resupply, buyers their first
    /// income, nobody holds Right yet.
    pub fn initial(config: &MarketConfig) -> Self {
        let sellers = config
            .sellers
            .iter()
            .map(|s| {
                let g = Quantity::clamped(s.resupply.evaluate(1));
                SellerState {
                    good: g,
                    money: Quantity::ZERO,
                    resupply: g,
                }
            })
            .collect();
        let buyers = config
            .buyers
            .iter()
            .map(|b| {
                let m = Quantity::clamped(b.income.evaluate(1));
                BuyerState {
                    good: Quantity::ZERO,
                    money: m,
                    right: Quantity::ZERO,
                    claim: b.claim,
                    income: m,
                }
            })
            .collect();
        MarketState {
            round: 1,
            sellers,
            buyers,
        }
    }

    pub fn total_money(&self) -> f64 {
        self.sellers.iter().map(|s| s.money.get()).sum::<f64>()
            + self.buyers.iter().map(|b| b.money.get()).sum::<f64>()
    }

    pub fn total_good(&self) -> f64 {
        self.sellers.iter().map(|s| s.good.get()).sum::<f64>()
            + self.buyers.iter().map(|b| b.good.get()).sum::<f64>()
    }

    pub fn total_right(&self) -> f64 {
        self.buyers.iter().map(|b| b.right.get()).sum()
    }

    pub fn buyer_money(&self) -> Vec<f64> {
        self.buyers.iter().map(|b| b.money.get()).collect()
    }

    pub fn buyer_rights(&self) -> Vec<f64> {
        self.buyers.iter().map(|b| b.right.get()).collect()
    }

    pub fn set_rights(&mut self, rights: &[f64]) {
        for (b, &r) in self.buyers.iter_mut().zip(rights) {
            b.right = Quantity::clamped(r);
        }
    }
}

/// Moves a post-clearing state of round `τ` to the start of round `τ+1`:
/// sellers receive their resupply and lose their Money, buyers consume Good
/// up to their claim and receive income, rights expire.
pub fn apply_transition(state: &MarketState, config: &MarketConfig) -> MarketState {
    let next = state.round + 1;
    let sellers = state
        .sellers
        .iter()
        .zip(&config.sellers)
        .map(|(s, spec)| {
            let g = Quantity::clamped(spec.resupply.evaluate(next));
            SellerState {
                good: s.good + g,
                money: Quantity::ZERO,
                resupply: g,
            }
        })
        .collect();
    let buyers = state
        .buyers
        .iter()
        .zip(&config.buyers)
        .map(|(b, spec)| {
            let m = Quantity::clamped(spec.income.evaluate(next));
            BuyerState {
                good: b.good.saturating_sub(b.claim),
                money: b.money + m,
                right: Quantity::ZERO,
                claim: b.claim,
                income: m,
            }
        })
        .collect();
    MarketState {
        round: next,
        sellers,
        buyers,
    }
}

/// Utilities realised in one round, evaluated on a post-clearing state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundUtilities {
    pub sellers: Vec<f64>,
    pub buyers: Vec<f64>,
}

impl RoundUtilities {
    /// Sellers first, then buyers; the trader indexing used by audits.
    pub fn flat(&self) -> Vec<f64> {
        self.sellers.iter().chain(&self.buyers).copied().collect()
    }
}

/// Seller utility is Money minus storage cost of unsold Good; buyer utility
/// is the Good consumed, capped by the claim.
pub fn consumed_utility(state: &MarketState, config: &MarketConfig) -> RoundUtilities {
    let c = config.seller_storage_cost;
    RoundUtilities {
        sellers: state
            .sellers
            .iter()
            .map(|s| s.money.get() - c * s.good.get())
            .collect(),
        buyers: state
            .buyers
            .iter()
            .map(|b| b.claim.get().min(b.good.get()))
            .collect(),
    }
}
