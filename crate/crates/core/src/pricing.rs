//! The greedy price and the greedy bids built from it.
//!
//! Under greedy play sellers post the price `p` solving
//!
//! ```text
//! sum_b M_b - max(0, p R_b - M_b) = p sum_b R_b
//! ```
//!
//! The left side is concave, piecewise linear and decreasing in `p` with
//! kinks at `M_b / R_b`; the right side is linear and increasing, so there is
//! exactly one root. Between two consecutive kinks the set of poor buyers
//! (those with `p R_b > M_b`) is fixed and the equation is linear, which
//! gives an exact `O(|B| log |B|)` solver.

use crate::error::{MarketError, Result};
use crate::market::{MarketConfig, MarketState, Variant, EQ_TOL};
use crate::mechanism::{BuyerBid, SellerOffer};
use crate::rights::allocate;

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPriceSolution {
    pub price: f64,
    /// Buyers with `p R_b > M_b`. Buyers exactly on the boundary count as rich.
    pub poor: Vec<usize>,
    /// Money that reaches sellers, `p sum R_b`.
    pub useful_money: f64,
    /// Money paid for Right, `sum max(0, p R_b - M_b)`; spendable next round.
    pub useless_money: f64,
}

fn check_vector(what: &'static str, values: &[f64]) -> Result<()> {
    for &v in values {
        if !v.is_finite() {
            return Err(MarketError::NonFinite(v));
        }
        if v < 0.0 {
            let _ = what;
            return Err(MarketError::NegativeQuantity(v));
        }
    }
    Ok(())
}

pub fn solve_implicit_price(money: &[f64], rights: &[f64]) -> Result<GreedyPriceSolution> {
    if money.len() != rights.len() {
        return Err(MarketError::LengthMismatch {
            what: "rights",
            got: rights.len(),
            expected: money.len(),
        });
    }
    check_vector("money", money)?;
    check_vector("rights", rights)?;
    let total_rights: f64 = rights.iter().sum();
    if total_rights <= 0.0 {
        return Err(MarketError::NoRights);
    }
    let total_money: f64 = money.iter().sum();

    let mut kinks: Vec<(f64, usize)> = rights
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 0.0)
        .map(|(b, &r)| (money[b] / r, b))
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut poor_money = 0.0;
    let mut poor_rights = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=kinks.len() {
        if k > 0 {
            let b = kinks[k - 1].1;
            poor_money += money[b];
            poor_rights += rights[b];
        }
        let lo = if k == 0 { 0.0 } else { kinks[k - 1].0 };
        let hi = kinks.get(k).map_or(f64::INFINITY, |kink| kink.0);
        let candidate = (total_money + poor_money) / (total_rights + poor_rights);
        let slack = EQ_TOL * hi.min(candidate).max(1.0);
        if candidate >= lo - slack && candidate <= hi + slack {
            best = Some((candidate, 0.0));
            break;
        }
        let violation = (lo - candidate).max(candidate - hi);
        if best.is_none_or(|(_, v)| violation < v) {
            best = Some((candidate, violation));
        }
    }
    let price = best.map_or(0.0, |(p, _)| p);
    Ok(solution_at(price, money, rights))
}

fn solution_at(price: f64, money: &[f64], rights: &[f64]) -> GreedyPriceSolution {
    let poor = (0..money.len())
        .filter(|&b| price * rights[b] > money[b])
        .collect();
    let useless_money = money
        .iter()
        .zip(rights)
        .map(|(m, r)| (price * r - m).max(0.0))
        .sum();
    GreedyPriceSolution {
        price,
        poor,
        useful_money: price * rights.iter().sum::<f64>(),
        useless_money,
    }
}

/// `sum_b (M_b - max(0, p R_b - M_b)) - p sum_b R_b`, strictly decreasing in `p`.
pub fn implicit_price_residual(price: f64, money: &[f64], rights: &[f64]) -> f64 {
    money
        .iter()
        .zip(rights)
        .map(|(m, r)| m - (price * r - m).max(0.0) - price * r)
        .sum()
}

pub fn free_market_clearing_price(money: &[f64], offered_good: f64) -> Result<f64> {
    check_vector("money", money)?;
    if offered_good.is_nan() || offered_good <= 0.0 {
        return Err(MarketError::NoVolume);
    }
    Ok(money.iter().sum::<f64>() / offered_good)
}

/// Total volume greedy sellers offer in the current round.
pub fn greedy_volume(state: &MarketState) -> f64 {
    state
        .sellers
        .iter()
        .map(|s| s.resupply.get().min(s.good.get()))
        .sum()
}

/// Price greedy sellers post when the total offered volume is `volume`.
pub fn greedy_posted_price(state: &MarketState, config: &MarketConfig, volume: f64) -> Result<f64> {
    let money = state.buyer_money();
    let base = match config.variant {
        Variant::MyopicRights | Variant::FreeMarket => free_market_clearing_price(&money, volume)?,
        Variant::Rights => {
            let rights = allocate(&config.mechanism, volume, &config.claims())?;
            solve_implicit_price(&money, &rights)?.price
        }
    };
    Ok(base * (1.0 + config.greedy_price_markup))
}

/// Greedy seller offer: this round's resupply at the greedy price. The price
/// assumes every seller offers its resupply.
pub fn greedy_seller_bid(
    seller_index: usize,
    state: &MarketState,
    config: &MarketConfig,
) -> Result<SellerOffer> {
    let seller = state
        .sellers
        .get(seller_index)
        .ok_or(MarketError::LengthMismatch {
            what: "seller index",
            got: seller_index,
            expected: state.sellers.len(),
        })?;
    let price = greedy_posted_price(state, config, greedy_volume(state))?;
    Ok(SellerOffer {
        volume: seller.resupply.get().min(seller.good.get()),
        price,
    })
}

/// Mean posted seller price, the buyers' estimate of the Right price.
pub fn average_offer_price(offers: &[SellerOffer]) -> f64 {
    if offers.is_empty() {
        return 0.0;
    }
    offers.iter().map(|o| o.price).sum::<f64>() / offers.len() as f64
}

/// Greedy buyer bid given the sellers' offers and the Right the buyer holds.
///
/// A buyer whose Money buys less Good than its Right offers the excess Right
/// (`psi`) at the estimated price; a buyer with Money to spare bids for that
/// much extra Right (`xi`). In the myopic variant sale proceeds are spent in
/// the same round, so a poor buyer sells only half of the excess and uses the
/// proceeds on the other half.
pub fn greedy_buyer_bid(
    buyer_index: usize,
    offers: &[SellerOffer],
    state: &MarketState,
    config: &MarketConfig,
) -> Result<BuyerBid> {
    let buyer = state
        .buyers
        .get(buyer_index)
        .ok_or(MarketError::LengthMismatch {
            what: "buyer index",
            got: buyer_index,
            expected: state.buyers.len(),
        })?;
    let estimate = average_offer_price(offers);
    let money = buyer.money.get();
    let right = buyer.right.get();
    let affordable = if estimate > 0.0 {
        money / estimate
    } else if money > 0.0 {
        // Free Good: demand is bounded only by what is on offer.
        offers.iter().map(|o| o.volume).sum::<f64>().max(right)
    } else {
        0.0
    };
    let mut psi = (right - affordable).max(0.0);
    let xi = (affordable - right).max(0.0);
    if config.variant == Variant::MyopicRights {
        psi /= 2.0;
    }
    Ok(BuyerBid {
        right_offer_volume: psi,
        right_offer_price: estimate,
        max_good_volume: right + xi,
        max_good_price: estimate,
        max_right_volume: xi,
        max_right_price: estimate,
    })
}

/// Round-one price under the canonical mechanism that gives every Right to
/// `holder`, and the fixed point one from round two on. Incomes must sum to one.
pub fn canonical_closed_form(holder: usize, incomes: &[f64], round: usize) -> Result<f64> {
    let sum: f64 = incomes.iter().sum();
    if (sum - 1.0).abs() > EQ_TOL {
        return Err(MarketError::NotNormalized(sum));
    }
    let m = *incomes.get(holder).ok_or(MarketError::InvalidRank {
        rank: holder + 1,
        buyers: incomes.len(),
    })?;
    if round == 0 {
        return Err(MarketError::InvalidConfig("rounds start at 1".into()));
    }
    Ok(if round == 1 { (1.0 + m) / 2.0 } else { 1.0 })
}

/// Lower bound on the greedy price from the canonical decomposition:
/// `sum_n alpha_n (M_{b_n} + sum_b M_b) / 2`, with the weights re-indexed by
/// the buyer each canonical component favours. With `alpha_b = phi_b(V, D)`
/// and `V = 1` this equals `sum_b (alpha_b + 1) M_b / 2`.
pub fn canonical_lower_bound(buyer_weights: &[f64], money: &[f64]) -> Result<f64> {
    if buyer_weights.len() != money.len() {
        return Err(MarketError::LengthMismatch {
            what: "weights",
            got: buyer_weights.len(),
            expected: money.len(),
        });
    }
    let total: f64 = money.iter().sum();
    Ok(buyer_weights
        .iter()
        .zip(money)
        .map(|(a, m)| a * (m + total) / 2.0)
        .sum())
}
