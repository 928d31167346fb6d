//! Two-stage market clearing over arbitrary offers and bids.
//!
//! Stage one sells Good to buyers who already hold Right. Stage two sells
//! Good and Right together, in equal volumes, to buyers with Money left over.
//! Within a price level sellers of the same item deplete at an equal rate;
//! when a level is short, buyers are rationed in proportion to their residual
//! demand. Both rules make the outcome independent of trader order.

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::market::{MarketState, Quantity, Variant, CONSERVATION_TOL};
use crate::rights::fill_level;

/// Trades below this size end an iteration.
const PROGRESS_TOL: f64 = 1e-12;
/// Safety cap on re-clearing passes.
const MAX_PASSES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellerOffer {
    pub volume: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BuyerBid {
    /// Right put up for sale (`w`), reserved from the buyer's own purchases.
    pub right_offer_volume: f64,
    pub right_offer_price: f64,
    pub max_good_volume: f64,
    pub max_good_price: f64,
    pub max_right_volume: f64,
    pub max_right_price: f64,
}

impl BuyerBid {
    fn fields(&self) -> [f64; 6] {
        [
            self.right_offer_volume,
            self.right_offer_price,
            self.max_good_volume,
            self.max_good_price,
            self.max_right_volume,
            self.max_right_price,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rejection {
    Seller { index: usize, reason: String },
    Buyer { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClearingResult {
    pub good_bought: Vec<f64>,
    pub right_bought: Vec<f64>,
    pub right_sold: Vec<f64>,
    pub money_spent_good: Vec<f64>,
    pub money_spent_right: Vec<f64>,
    /// Proceeds of Right sales. Outside the myopic variant they are not
    /// spendable before the next round.
    pub money_earned_right: Vec<f64>,
    pub seller_sold: Vec<f64>,
    pub seller_revenue: Vec<f64>,
    pub unsold_good: Vec<f64>,
    pub rejected: Vec<Rejection>,
}

impl ClearingResult {
    pub fn total_sold(&self) -> f64 {
        self.seller_sold.iter().sum()
    }

    /// Holdings after the trades. Rights stay as assigned; they expire in the
    /// transition.
    pub fn apply(&self, state: &MarketState) -> MarketState {
        let mut next = state.clone();
        for (s, seller) in next.sellers.iter_mut().enumerate() {
            seller.good = Quantity::clamped(seller.good.get() - self.seller_sold[s]);
            seller.money = Quantity::clamped(seller.money.get() + self.seller_revenue[s]);
        }
        for (b, buyer) in next.buyers.iter_mut().enumerate() {
            buyer.good = Quantity::clamped(buyer.good.get() + self.good_bought[b]);
            buyer.money = Quantity::clamped(
                buyer.money.get() - self.money_spent_good[b] - self.money_spent_right[b]
                    + self.money_earned_right[b],
            );
        }
        next
    }
}

/// Money reaching sellers and Money paid for Right in one clearing.
pub fn useful_useless_split(result: &ClearingResult) -> (f64, f64) {
    (
        result.seller_revenue.iter().sum(),
        result.money_earned_right.iter().sum(),
    )
}

fn affordable(money: f64, price: f64) -> f64 {
    if price > 0.0 {
        money / price
    } else {
        f64::INFINITY
    }
}

fn distinct_prices(prices: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut levels: Vec<f64> = prices.collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

/// Splits `volume` across `remaining` at an equal rate, capped per entry.
fn equal_rate(remaining: &[f64], volume: f64) -> Vec<f64> {
    let total: f64 = remaining.iter().sum();
    if volume >= total {
        return remaining.to_vec();
    }
    let level = fill_level(remaining, volume);
    remaining.iter().map(|&r| r.min(level)).collect()
}

struct Book {
    myopic: bool,
    active: Vec<bool>,
    bids: Vec<BuyerBid>,
    seller_price: Vec<f64>,
    seller_left: Vec<f64>,
    money: Vec<f64>,
    usable_right: Vec<f64>,
    right_left: Vec<f64>,
    result: ClearingResult,
}

impl Book {
    fn good_levels(&self) -> Vec<f64> {
        distinct_prices(
            self.seller_price
                .iter()
                .zip(&self.seller_left)
                .filter(|(_, &left)| left > 0.0)
                .map(|(&p, _)| p),
        )
    }

    fn sell_good(&mut self, price: f64, volume: f64) {
        let at_level: Vec<usize> = (0..self.seller_left.len())
            .filter(|&s| self.seller_price[s] == price && self.seller_left[s] > 0.0)
            .collect();
        let remaining: Vec<f64> = at_level.iter().map(|&s| self.seller_left[s]).collect();
        for (&s, sold) in at_level.iter().zip(equal_rate(&remaining, volume)) {
            self.seller_left[s] = (self.seller_left[s] - sold).max(0.0);
            self.result.seller_sold[s] += sold;
            self.result.seller_revenue[s] += sold * price;
        }
    }

    fn good_supply(&self, price: f64) -> f64 {
        (0..self.seller_left.len())
            .filter(|&s| self.seller_price[s] == price)
            .map(|s| self.seller_left[s])
            .sum()
    }

    fn good_headroom(&self, b: usize) -> f64 {
        (self.bids[b].max_good_volume - self.result.good_bought[b]).max(0.0)
    }

    /// Good bought against Right already held.
    fn stage_one(&mut self) -> f64 {
        let mut traded = 0.0;
        for price in self.good_levels() {
            let supply = self.good_supply(price);
            let demand: Vec<f64> = (0..self.bids.len())
                .map(|b| {
                    if !self.active[b] || self.bids[b].max_good_price < price {
                        return 0.0;
                    }
                    self.good_headroom(b)
                        .min(self.usable_right[b])
                        .min(affordable(self.money[b], price))
                        .max(0.0)
                })
                .collect();
            let total: f64 = demand.iter().sum();
            if total <= PROGRESS_TOL || supply <= 0.0 {
                continue;
            }
            let volume = total.min(supply);
            let share = volume / total;
            for (b, d) in demand.iter().enumerate() {
                let x = d * share;
                if x <= 0.0 {
                    continue;
                }
                self.result.good_bought[b] += x;
                self.usable_right[b] = (self.usable_right[b] - x).max(0.0);
                self.money[b] = (self.money[b] - x * price).max(0.0);
                self.result.money_spent_good[b] += x * price;
            }
            self.sell_good(price, volume);
            traded += volume;
        }
        traded
    }

    /// Good and Right bought together.
    fn stage_two(&mut self) -> f64 {
        let right_levels = distinct_prices(
            (0..self.bids.len())
                .filter(|&b| self.right_left[b] > 0.0)
                .map(|b| self.bids[b].right_offer_price),
        );
        let mut pairs: Vec<(f64, f64)> = self
            .good_levels()
            .into_iter()
            .flat_map(|p| right_levels.iter().map(move |&q| (p, q)))
            .collect();
        pairs.sort_by(|a, b| {
            (a.0 + a.1)
                .total_cmp(&(b.0 + b.1))
                .then(a.0.total_cmp(&b.0))
                .then(a.1.total_cmp(&b.1))
        });
        let mut traded = 0.0;
        for (p, q) in pairs {
            for _ in 0..MAX_PASSES {
                let step = self.clear_pair_level(p, q);
                traded += step;
                if step < PROGRESS_TOL {
                    break;
                }
            }
        }
        traded
    }

    fn clear_pair_level(&mut self, p: f64, q: f64) -> f64 {
        let n = self.bids.len();
        let good_supply = self.good_supply(p);
        let own: Vec<f64> = (0..n)
            .map(|b| {
                if self.bids[b].right_offer_price == q {
                    self.right_left[b]
                } else {
                    0.0
                }
            })
            .collect();
        let right_supply: f64 = own.iter().sum();
        if good_supply <= PROGRESS_TOL || right_supply <= PROGRESS_TOL {
            return 0.0;
        }
        let demand: Vec<f64> = (0..n)
            .map(|b| {
                let bid = &self.bids[b];
                if !self.active[b] || bid.max_good_price < p || bid.max_right_price < q {
                    return 0.0;
                }
                self.good_headroom(b)
                    .min(bid.max_right_volume - self.result.right_bought[b])
                    .min(affordable(self.money[b], p + q))
                    .min(right_supply - own[b])
                    .max(0.0)
            })
            .collect();
        let total: f64 = demand.iter().sum();
        if total <= PROGRESS_TOL {
            return 0.0;
        }
        let mut volume = total.min(good_supply).min(right_supply);
        let mut bought: Vec<f64> = demand.iter().map(|d| d * volume / total).collect();
        // A Right seller's units must go to other buyers: y_b <= X - x_b.
        let caps = |bought: &[f64], volume: f64| -> Vec<f64> {
            (0..n)
                .map(|b| own[b].min(volume - bought[b]).max(0.0))
                .collect::<Vec<f64>>()
        };
        let mut right_caps = caps(&bought, volume);
        let cap_total: f64 = right_caps.iter().sum();
        if cap_total < volume {
            let t = cap_total / volume;
            bought.iter_mut().for_each(|x| *x *= t);
            volume = cap_total;
            right_caps = caps(&bought, volume);
        }
        if volume <= 0.0 {
            return 0.0;
        }
        let sold = equal_rate(&right_caps, volume);
        for b in 0..n {
            let x = bought[b];
            if x > 0.0 {
                self.result.good_bought[b] += x;
                self.result.right_bought[b] += x;
                self.money[b] = (self.money[b] - x * (p + q)).max(0.0);
                self.result.money_spent_good[b] += x * p;
                self.result.money_spent_right[b] += x * q;
            }
            let y = sold[b];
            if y > 0.0 {
                self.right_left[b] = (self.right_left[b] - y).max(0.0);
                self.result.right_sold[b] += y;
                self.result.money_earned_right[b] += y * q;
                if self.myopic {
                    self.money[b] += y * q;
                }
            }
        }
        self.sell_good(p, volume);
        volume
    }
}

fn check_seller(offer: &SellerOffer, held: f64) -> std::result::Result<SellerOffer, String> {
    if !(offer.volume.is_finite() && offer.price.is_finite()) {
        return Err("non-finite offer".into());
    }
    if offer.volume < 0.0 || offer.price < 0.0 {
        return Err("negative offer".into());
    }
    if offer.volume > held + CONSERVATION_TOL {
        return Err(format!("offers {} but holds {}", offer.volume, held));
    }
    Ok(SellerOffer {
        volume: offer.volume.min(held),
        price: offer.price,
    })
}

fn check_buyer(bid: &BuyerBid, right: f64) -> std::result::Result<BuyerBid, String> {
    if bid.fields().iter().any(|v| !v.is_finite()) {
        return Err("non-finite bid".into());
    }
    if bid.fields().iter().any(|&v| v < 0.0) {
        return Err("negative bid".into());
    }
    if bid.right_offer_volume > right + CONSERVATION_TOL {
        return Err(format!(
            "offers {} Right but holds {}",
            bid.right_offer_volume, right
        ));
    }
    Ok(BuyerBid {
        right_offer_volume: bid.right_offer_volume.min(right),
        ..*bid
    })
}

/// Clears one market. Malformed offers and bids are dropped and listed in
/// `rejected`; the rest still trade.
pub fn clear(
    offers: &[SellerOffer],
    bids: &[BuyerBid],
    state: &MarketState,
    variant: Variant,
) -> Result<ClearingResult> {
    let (ns, nb) = (state.sellers.len(), state.buyers.len());
    if offers.len() != ns {
        return Err(MarketError::LengthMismatch {
            what: "offers",
            got: offers.len(),
            expected: ns,
        });
    }
    if bids.len() != nb {
        return Err(MarketError::LengthMismatch {
            what: "bids",
            got: bids.len(),
            expected: nb,
        });
    }
    let mut rejected = Vec::new();
    let mut seller_price = vec![0.0; ns];
    let mut seller_left = vec![0.0; ns];
    for (s, offer) in offers.iter().enumerate() {
        match check_seller(offer, state.sellers[s].good.get()) {
            Ok(o) => {
                seller_price[s] = o.price;
                seller_left[s] = o.volume;
            }
            Err(reason) => rejected.push(Rejection::Seller { index: s, reason }),
        }
    }
    let mut active = vec![true; nb];
    let mut clean = vec![BuyerBid::default(); nb];
    for (b, bid) in bids.iter().enumerate() {
        match check_buyer(bid, state.buyers[b].right.get()) {
            Ok(c) => clean[b] = c,
            Err(reason) => {
                active[b] = false;
                rejected.push(Rejection::Buyer { index: b, reason });
            }
        }
    }
    let usable_right = (0..nb)
        .map(|b| (state.buyers[b].right.get() - clean[b].right_offer_volume).max(0.0))
        .collect();
    let right_left = clean.iter().map(|c| c.right_offer_volume).collect();
    let mut book = Book {
        myopic: variant == Variant::MyopicRights,
        active,
        bids: clean,
        seller_price,
        seller_left,
        money: state.buyer_money(),
        usable_right,
        right_left,
        result: ClearingResult {
            good_bought: vec![0.0; nb],
            right_bought: vec![0.0; nb],
            right_sold: vec![0.0; nb],
            money_spent_good: vec![0.0; nb],
            money_spent_right: vec![0.0; nb],
            money_earned_right: vec![0.0; nb],
            seller_sold: vec![0.0; ns],
            seller_revenue: vec![0.0; ns],
            unsold_good: vec![0.0; ns],
            rejected,
        },
    };
    // Same-round proceeds can fund further purchases, so the myopic variant
    // alternates the stages until nothing more trades.
    for _ in 0..MAX_PASSES {
        let traded = book.stage_one() + book.stage_two();
        if !book.myopic || traded < PROGRESS_TOL {
            break;
        }
    }
    let mut result = book.result;
    result.unsold_good = book.seller_left;
    Ok(result)
}
