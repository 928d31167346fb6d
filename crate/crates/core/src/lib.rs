//! Repeated markets with tradable buying rights.
//!
//! Each round, sellers offer Good, a distribution mechanism splits the offered
//! volume into buying rights according to buyers' claims, and buyers trade
//! Good and Right in a two-stage market. Rights expire at the end of the
//! round; Money paid for Right comes back to the seller of the Right in the
//! next round. The crate simulates this loop under greedy play, audits the
//! greedy profile against unilateral and coalition deviations, and compares
//! it with a free market.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod market;
pub mod mechanism;
pub mod pricing;
pub mod rights;
pub mod scenarios;
pub mod schedule;

pub use engine::{frustration, run, run_with, Greedy, RoundRecord, Strategy, Trace};
pub use error::{MarketError, Result};
pub use market::{
    apply_transition, consumed_utility, BuyerSpec, BuyerState, MarketConfig, MarketState, Quantity,
    RoundUtilities, SellerSpec, SellerState, Variant,
};
pub use mechanism::{clear, useful_useless_split, BuyerBid, ClearingResult, SellerOffer};
pub use pricing::{solve_implicit_price, GreedyPriceSolution};
pub use rights::{allocate, Allocator, DistributionMechanism};
pub use schedule::SupplySchedule;
