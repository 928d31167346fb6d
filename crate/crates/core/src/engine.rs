//! The repeated market loop: distribution, trading, transition.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market::{
    apply_transition, consumed_utility, MarketConfig, MarketState, Quantity, RoundUtilities,
    Variant,
};
use crate::mechanism::{clear, useful_useless_split, BuyerBid, SellerOffer};
use crate::pricing::{average_offer_price, greedy_buyer_bid, greedy_posted_price};
use crate::rights::allocate;

/// Share of the assigned Right that the buyer could not turn into Good.
pub fn frustration(right_assigned: f64, good_end: f64) -> f64 {
    if right_assigned <= 0.0 {
        return 0.0;
    }
    ((right_assigned - good_end) / right_assigned).clamp(0.0, 1.0)
}

/// Totals before and after trading within one round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConservationAudit {
    pub money_before: f64,
    pub money_after: f64,
    pub good_before: f64,
    pub good_after: f64,
    /// Largest excess of Good bought over Right held, across buyers.
    pub right_cap_excess: f64,
}

impl ConservationAudit {
    pub fn holds(&self, tol: f64) -> bool {
        (self.money_before - self.money_after).abs() <= tol
            && (self.good_before - self.good_after).abs() <= tol
            && self.right_cap_excess <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub price_good: f64,
    pub price_right: f64,
    pub money_start: Vec<f64>,
    pub good_end: Vec<f64>,
    pub right_assigned: Vec<f64>,
    pub frustration: Vec<f64>,
    pub useful_money: f64,
    pub useless_money: f64,
    pub volume_offered: f64,
    pub volume_sold: f64,
    pub seller_utilities: Vec<f64>,
    pub buyer_utilities: Vec<f64>,
    pub conservation: ConservationAudit,
    /// Nothing on offer, or Good posted at price zero.
    pub degenerate: bool,
    pub rejected_orders: usize,
}

impl RoundRecord {
    pub fn mean_frustration(&self) -> f64 {
        self.frustration.iter().sum::<f64>() / self.frustration.len() as f64
    }

    /// Sellers first, then buyers.
    pub fn utilities(&self) -> Vec<f64> {
        self.seller_utilities
            .iter()
            .chain(&self.buyer_utilities)
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub variant: Variant,
    pub records: Vec<RoundRecord>,
    /// Running average of frustration over rounds and buyers.
    pub expected_frustration_path: Vec<f64>,
    /// Mean frustration across buyers in each round.
    pub mean_frustration_path: Vec<f64>,
}

impl Trace {
    fn new(variant: Variant) -> Self {
        Trace {
            variant,
            records: Vec::new(),
            expected_frustration_path: Vec::new(),
            mean_frustration_path: Vec::new(),
        }
    }

    fn push(&mut self, record: RoundRecord) {
        let mean = record.mean_frustration();
        let n = self.records.len() as f64;
        let previous = self
            .expected_frustration_path
            .last()
            .copied()
            .unwrap_or(0.0);
        self.expected_frustration_path
            .push((previous * n + mean) / (n + 1.0));
        self.mean_frustration_path.push(mean);
        self.records.push(record);
    }

    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price_good).collect()
    }

    pub fn expected_frustration(&self) -> f64 {
        self.expected_frustration_path
            .last()
            .copied()
            .unwrap_or(0.0)
    }

    /// Expected frustration recomputed from the per-buyer records.
    pub fn recompute_expected_frustration(&self, rounds: usize) -> f64 {
        let rounds = rounds.min(self.records.len());
        if rounds == 0 {
            return 0.0;
        }
        let buyers = self.records[0].frustration.len() as f64;
        let total: f64 = self.records[..rounds]
            .iter()
            .flat_map(|r| r.frustration.iter())
            .sum();
        total / (rounds as f64 * buyers)
    }

    /// First round from which no buyer is frustrated for the rest of the trace.
    pub fn first_settled_round(&self, tol: f64) -> Option<usize> {
        let mut first = None;
        for record in self.records.iter().rev() {
            if record.frustration.iter().all(|&f| f <= tol) {
                first = Some(record.round);
            } else {
                break;
            }
        }
        first
    }

    /// Utility summed over all rounds, sellers first, then buyers.
    pub fn total_utilities(&self) -> Vec<f64> {
        let mut totals = match self.records.first() {
            Some(r) => vec![0.0; r.seller_utilities.len() + r.buyer_utilities.len()],
            None => return Vec::new(),
        };
        for record in &self.records {
            for (t, u) in totals.iter_mut().zip(record.utilities()) {
                *t += u;
            }
        }
        totals
    }
}

/// Hooks through which a strategy profile departs from greedy play. The
/// default methods leave the greedy orders untouched.
pub trait Strategy {
    /// Adjusts the volumes sellers put on offer, before rights are assigned.
    fn offered_volumes(&self, _state: &MarketState, _volumes: &mut [f64]) {}

    /// Adjusts the orders after rights are assigned, before clearing.
    fn orders(&self, _state: &MarketState, _offers: &mut [SellerOffer], _bids: &mut [BuyerBid]) {}
}

/// Every trader plays greedily.
#[derive(Debug, Clone, Copy, Default)]
pub struct Greedy;

impl Strategy for Greedy {}

/// Runs the greedy profile for `horizon` rounds.
pub fn run(config: &MarketConfig, horizon: usize) -> Result<Trace> {
    run_with(config, horizon, &Greedy)
}

pub fn run_with(config: &MarketConfig, horizon: usize, strategy: &dyn Strategy) -> Result<Trace> {
    config.validate()?;
    let mut trace = Trace::new(config.variant);
    let mut state = MarketState::initial(config);
    for _ in 0..horizon {
        let round = state.round;
        let (record, post) = play_round(&state, config, strategy).map_err(|e| e.at_round(round))?;
        trace.push(record);
        state = apply_transition(&post, config);
    }
    Ok(trace)
}

fn offered_volumes(state: &MarketState, strategy: &dyn Strategy) -> Vec<f64> {
    let mut volumes: Vec<f64> = state
        .sellers
        .iter()
        .map(|s| s.resupply.get().min(s.good.get()))
        .collect();
    strategy.offered_volumes(state, &mut volumes);
    for (v, s) in volumes.iter_mut().zip(&state.sellers) {
        *v = v.clamp(0.0, s.good.get());
    }
    volumes
}

/// One round from the start-of-round state; returns the record and the
/// post-trading state.
pub fn play_round(
    state: &MarketState,
    config: &MarketConfig,
    strategy: &dyn Strategy,
) -> Result<(RoundRecord, MarketState)> {
    let volumes = offered_volumes(state, strategy);
    let total_volume: f64 = volumes.iter().sum();
    let rights = allocate(&config.mechanism, total_volume, &config.claims())?;
    let mut assigned = state.clone();
    assigned.set_rights(&rights);
    if config.variant == Variant::FreeMarket {
        return Ok(free_market_round(&assigned, config, &volumes));
    }
    if total_volume <= 0.0 {
        return Ok(idle_round(&assigned, config));
    }

    let price = greedy_posted_price(&assigned, config, total_volume)?;
    let mut offers: Vec<SellerOffer> = volumes
        .iter()
        .map(|&volume| SellerOffer { volume, price })
        .collect();
    let mut bids = (0..state.buyers.len())
        .map(|b| greedy_buyer_bid(b, &offers, &assigned, config))
        .collect::<Result<Vec<_>>>()?;
    strategy.orders(&assigned, &mut offers, &mut bids);

    let result = clear(&offers, &bids, &assigned, config.variant)?;
    let post = result.apply(&assigned);
    let (useful, useless) = useful_useless_split(&result);
    let sold = result.total_sold();
    let rights_sold: f64 = result.right_sold.iter().sum();
    let posted = average_offer_price(&offers);
    let price_good = if sold > 0.0 { useful / sold } else { posted };
    let price_right = if rights_sold > 0.0 {
        useless / rights_sold
    } else {
        posted
    };
    let right_cap_excess = (0..state.buyers.len())
        .map(|b| {
            result.good_bought[b] - (rights[b] + result.right_bought[b] - result.right_sold[b])
        })
        .fold(0.0, f64::max);
    let record = build_record(
        &assigned,
        &post,
        config,
        RoundTotals {
            price_good,
            price_right,
            useful,
            useless,
            offered: total_volume,
            sold,
            right_cap_excess,
            degenerate: posted <= 0.0,
            rejected: result.rejected.len(),
        },
    );
    Ok((record, post))
}

struct RoundTotals {
    price_good: f64,
    price_right: f64,
    useful: f64,
    useless: f64,
    offered: f64,
    sold: f64,
    right_cap_excess: f64,
    degenerate: bool,
    rejected: usize,
}

fn build_record(
    assigned: &MarketState,
    post: &MarketState,
    config: &MarketConfig,
    totals: RoundTotals,
) -> RoundRecord {
    let right_assigned = assigned.buyer_rights();
    let good_end: Vec<f64> = post.buyers.iter().map(|b| b.good.get()).collect();
    let frustration = right_assigned
        .iter()
        .zip(&good_end)
        .map(|(&r, &g)| frustration(r, g))
        .collect();
    let RoundUtilities { sellers, buyers } = consumed_utility(post, config);
    RoundRecord {
        round: assigned.round,
        price_good: totals.price_good,
        price_right: totals.price_right,
        money_start: assigned.buyer_money(),
        good_end,
        right_assigned,
        frustration,
        useful_money: totals.useful,
        useless_money: totals.useless,
        volume_offered: totals.offered,
        volume_sold: totals.sold,
        seller_utilities: sellers,
        buyer_utilities: buyers,
        conservation: ConservationAudit {
            money_before: assigned.total_money(),
            money_after: post.total_money(),
            good_before: assigned.total_good(),
            good_after: post.total_good(),
            right_cap_excess: totals.right_cap_excess,
        },
        degenerate: totals.degenerate,
        rejected_orders: totals.rejected,
    }
}

fn idle_round(assigned: &MarketState, config: &MarketConfig) -> (RoundRecord, MarketState) {
    let record = build_record(
        assigned,
        assigned,
        config,
        RoundTotals {
            price_good: 0.0,
            price_right: 0.0,
            useful: 0.0,
            useless: 0.0,
            offered: 0.0,
            sold: 0.0,
            right_cap_excess: 0.0,
            degenerate: true,
            rejected: 0,
        },
    );
    (record, assigned.clone())
}

/// Buyers spend all their Money at `sum M / V`; the rights in `assigned`
/// are hypothetical and only used to measure frustration.
fn free_market_round(
    assigned: &MarketState,
    config: &MarketConfig,
    volumes: &[f64],
) -> (RoundRecord, MarketState) {
    let total_volume: f64 = volumes.iter().sum();
    let total_money = assigned.buyer_money().iter().sum::<f64>();
    if total_volume <= 0.0 || total_money <= 0.0 {
        let (mut record, post) = idle_round(assigned, config);
        record.volume_offered = total_volume;
        return (record, post);
    }
    let price = total_money / total_volume;
    let mut post = assigned.clone();
    for buyer in post.buyers.iter_mut() {
        buyer.good = Quantity::clamped(buyer.good.get() + buyer.money.get() / price);
        buyer.money = Quantity::ZERO;
    }
    for (seller, &v) in post.sellers.iter_mut().zip(volumes) {
        seller.good = Quantity::clamped(seller.good.get() - v);
        seller.money = Quantity::clamped(seller.money.get() + v * price);
    }
    let record = build_record(
        assigned,
        &post,
        config,
        RoundTotals {
            price_good: price,
            price_right: 0.0,
            useful: total_money,
            useless: 0.0,
            offered: total_volume,
            sold: total_volume,
            right_cap_excess: 0.0,
            degenerate: false,
            rejected: 0,
        },
    );
    (record, post)
}
