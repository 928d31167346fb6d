//! Empirical checks of the greedy profile: deviation and coalition audits,
//! price convergence, and a cross-check of the price solver.
//!
//! Orders within a round are simultaneous: a deviating trader changes its
//! own offer or bid after everyone has formed greedy orders, so the others
//! cannot react to it before the following round.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{run, run_with, Strategy, Trace};
use crate::error::{MarketError, Result};
use crate::market::{MarketConfig, MarketState};
use crate::mechanism::{BuyerBid, SellerOffer};
use crate::pricing::{implicit_price_residual, solve_implicit_price};

/// Smallest utility gain counted as profitable.
pub const GAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trader {
    Seller(usize),
    Buyer(usize),
}

impl Trader {
    /// Position in per-trader vectors, sellers first.
    pub fn flat_index(self, num_sellers: usize) -> usize {
        match self {
            Trader::Seller(s) => s,
            Trader::Buyer(b) => num_sellers + b,
        }
    }

    pub fn all(config: &MarketConfig) -> Vec<Trader> {
        (0..config.sellers.len())
            .map(Trader::Seller)
            .chain((0..config.buyers.len()).map(Trader::Buyer))
            .collect()
    }
}

impl fmt::Display for Trader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trader::Seller(s) => write!(f, "s{s}"),
            Trader::Buyer(b) => write!(f, "b{b}"),
        }
    }
}

/// Parses the `s<i>` / `b<i>` form used by `Display`.
impl FromStr for Trader {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("`{s}` is not a trader; expected s<i> or b<i>");
        let (kind, index) = s.split_at_checked(1).ok_or_else(bad)?;
        let index: usize = index.parse().map_err(|_| bad())?;
        match kind {
            "s" => Ok(Trader::Seller(index)),
            "b" => Ok(Trader::Buyer(index)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    /// Fraction of the greedy value.
    Relative(f64),
    Absolute(f64),
}

impl Magnitude {
    fn value(self) -> f64 {
        match self {
            Magnitude::Relative(v) | Magnitude::Absolute(v) => v,
        }
    }

    /// The greedy value shifted by this magnitude.
    fn shift(self, base: f64) -> f64 {
        match self {
            Magnitude::Relative(f) => base * (1.0 + f),
            Magnitude::Absolute(d) => base + d,
        }
    }

    /// The part of the greedy value this magnitude stands for.
    fn portion(self, base: f64) -> f64 {
        match self {
            Magnitude::Relative(f) => base * f,
            Magnitude::Absolute(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationKind {
    /// Offer less Good, and everything held in the round after.
    SellerWithhold(Magnitude),
    SellerPrice(Magnitude),
    /// Scale the Right offered for sale by `1 - fraction`.
    BuyerSellLessRight(f64),
    /// Scale the Right demanded by `1 - fraction`.
    BuyerBuyLessRight(f64),
    /// Change the asking price for Right.
    BuyerPrice(Magnitude),
}

impl DeviationKind {
    fn for_seller(self) -> bool {
        matches!(
            self,
            DeviationKind::SellerWithhold(_) | DeviationKind::SellerPrice(_)
        )
    }

    fn magnitude(self) -> f64 {
        match self {
            DeviationKind::SellerWithhold(m)
            | DeviationKind::SellerPrice(m)
            | DeviationKind::BuyerPrice(m) => m.value(),
            DeviationKind::BuyerSellLessRight(f) | DeviationKind::BuyerBuyLessRight(f) => f,
        }
    }
}

/// One trader departing from greedy play in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub trader: Trader,
    pub round: usize,
    pub kind: DeviationKind,
}

impl Deviation {
    fn check(&self, config: &MarketConfig, horizon: usize) -> std::result::Result<(), String> {
        let in_range = match self.trader {
            Trader::Seller(s) => s < config.sellers.len(),
            Trader::Buyer(b) => b < config.buyers.len(),
        };
        if !in_range {
            return Err(format!("{self}: no such trader"));
        }
        if self.round == 0 || self.round > horizon {
            return Err(format!("{self}: round outside 1..={horizon}"));
        }
        if self.kind.for_seller() != matches!(self.trader, Trader::Seller(_)) {
            return Err(format!("{self}: not available to this trader"));
        }
        if !self.kind.magnitude().is_finite() {
            return Err(format!("{self}: non-finite magnitude"));
        }
        Ok(())
    }
}

impl fmt::Display for Deviation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at round {}: {:?}",
            self.trader, self.round, self.kind
        )
    }
}

/// Greedy play except for the listed deviations.
#[derive(Debug, Clone, Default)]
pub struct DeviationProfile {
    pub deviations: Vec<Deviation>,
}

impl Strategy for DeviationProfile {
    fn offered_volumes(&self, state: &MarketState, volumes: &mut [f64]) {
        for d in &self.deviations {
            let Trader::Seller(s) = d.trader else {
                continue;
            };
            if state.round == d.round {
                if let DeviationKind::SellerWithhold(m) = d.kind {
                    let v = volumes[s];
                    volumes[s] = v - m.portion(v).clamp(-state.sellers[s].good.get(), v);
                }
            } else if state.round == d.round + 1 {
                volumes[s] = state.sellers[s].good.get();
            }
        }
    }

    fn orders(&self, state: &MarketState, offers: &mut [SellerOffer], bids: &mut [BuyerBid]) {
        for d in self.deviations.iter().filter(|d| d.round == state.round) {
            match (d.trader, d.kind) {
                (Trader::Seller(s), DeviationKind::SellerPrice(m)) => {
                    offers[s].price = m.shift(offers[s].price).max(0.0);
                }
                (Trader::Buyer(b), DeviationKind::BuyerSellLessRight(f)) => {
                    let held = state.buyers[b].right.get();
                    let w = &mut bids[b].right_offer_volume;
                    *w = (*w * (1.0 - f)).clamp(0.0, held);
                }
                (Trader::Buyer(b), DeviationKind::BuyerBuyLessRight(f)) => {
                    let bid = &mut bids[b];
                    let wanted = (bid.max_right_volume * (1.0 - f)).max(0.0);
                    bid.max_good_volume =
                        (bid.max_good_volume + wanted - bid.max_right_volume).max(0.0);
                    bid.max_right_volume = wanted;
                }
                (Trader::Buyer(b), DeviationKind::BuyerPrice(m)) => {
                    bids[b].right_offer_price = m.shift(bids[b].right_offer_price).max(0.0);
                }
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub deviations: Vec<Deviation>,
    /// Total utility per trader, sellers first.
    pub utilities: Vec<f64>,
    /// Gain of each deviating trader over the baseline, in `deviations` order
    /// with duplicates removed.
    pub gains: Vec<(Trader, f64)>,
}

impl Trial {
    /// Smallest gain among the deviating traders.
    pub fn weakest_gain(&self) -> f64 {
        self.gains.iter().map(|g| g.1).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub baseline_utilities: Vec<f64>,
    pub trials: Vec<Trial>,
    /// Largest gain the deviators all achieve at once; `-inf` without trials.
    pub max_gain: f64,
    /// Indices into `trials` where every deviator gains more than the tolerance.
    pub witnesses: Vec<usize>,
    pub skipped: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }

    pub fn witness_trials(&self) -> impl Iterator<Item = &Trial> {
        self.witnesses.iter().map(|&i| &self.trials[i])
    }
}

pub const DEFAULT_MAGNITUDES: [f64; 8] = [-0.5, -0.25, -0.1, -0.05, 0.05, 0.1, 0.25, 0.5];

/// Rounds 1, half the horizon and the last round.
pub fn default_rounds(horizon: usize) -> Vec<usize> {
    let mut rounds = vec![1, (horizon / 2).max(1), horizon.max(1)];
    rounds.dedup();
    rounds
}

/// Every single-round deviation a trader can make from the default grid.
pub fn trader_options(trader: Trader, rounds: &[usize], magnitudes: &[f64]) -> Vec<Deviation> {
    let mut out = Vec::new();
    for &round in rounds {
        for &m in magnitudes {
            let kinds: Vec<DeviationKind> = match trader {
                Trader::Seller(_) => vec![
                    DeviationKind::SellerWithhold(Magnitude::Relative(m.abs())),
                    DeviationKind::SellerPrice(Magnitude::Relative(m)),
                ],
                Trader::Buyer(_) => vec![
                    DeviationKind::BuyerSellLessRight(m),
                    DeviationKind::BuyerBuyLessRight(m),
                    DeviationKind::BuyerPrice(Magnitude::Relative(m)),
                ],
            };
            out.extend(kinds.into_iter().map(|kind| Deviation {
                trader,
                round,
                kind,
            }));
        }
    }
    out.dedup();
    out
}

pub fn unilateral_grid(config: &MarketConfig, horizon: usize) -> Vec<Deviation> {
    let rounds = default_rounds(horizon);
    Trader::all(config)
        .into_iter()
        .flat_map(|t| trader_options(t, &rounds, &DEFAULT_MAGNITUDES))
        .collect()
}

/// Joint deviations for a coalition: in each default round, every
/// combination of the members' options, or the members moving together
/// with equal magnitudes when the product exceeds `max_per_round`.
pub fn coalition_grid(
    coalition: &[Trader],
    horizon: usize,
    max_per_round: usize,
) -> Vec<Vec<Deviation>> {
    coalition_grid_with(
        coalition,
        &default_rounds(horizon),
        &DEFAULT_MAGNITUDES,
        max_per_round,
    )
}

/// [`coalition_grid`] over explicit rounds and magnitudes.
pub fn coalition_grid_with(
    coalition: &[Trader],
    rounds: &[usize],
    magnitudes: &[f64],
    max_per_round: usize,
) -> Vec<Vec<Deviation>> {
    let mut grid = Vec::new();
    for &round in rounds {
        let options: Vec<Vec<Deviation>> = coalition
            .iter()
            .map(|&t| trader_options(t, &[round], magnitudes))
            .collect();
        let product: usize = options.iter().map(Vec::len).product();
        if product <= max_per_round {
            let mut combos: Vec<Vec<Deviation>> = vec![Vec::new()];
            for member in &options {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        member.iter().map(move |d| {
                            let mut next = c.clone();
                            next.push(*d);
                            next
                        })
                    })
                    .collect();
            }
            grid.extend(combos);
        } else {
            let longest = options.iter().map(Vec::len).max().unwrap_or(0);
            for k in 0..longest {
                grid.push(options.iter().map(|o| o[k % o.len()]).collect());
            }
        }
    }
    grid
}

fn replay(
    config: &MarketConfig,
    horizon: usize,
    baseline: &[f64],
    deviations: Vec<Deviation>,
) -> Result<Trial> {
    let profile = DeviationProfile { deviations };
    let utilities = run_with(config, horizon, &profile)?.total_utilities();
    let ns = config.sellers.len();
    let mut gains: Vec<(Trader, f64)> = Vec::new();
    for d in &profile.deviations {
        if gains.iter().all(|g| g.0 != d.trader) {
            let i = d.trader.flat_index(ns);
            gains.push((d.trader, utilities[i] - baseline[i]));
        }
    }
    Ok(Trial {
        deviations: profile.deviations,
        utilities,
        gains,
    })
}

fn audit(config: &MarketConfig, horizon: usize, grid: Vec<Vec<Deviation>>) -> Result<AuditReport> {
    let baseline = run(config, horizon)?.total_utilities();
    let mut report = AuditReport {
        baseline_utilities: baseline.clone(),
        trials: Vec::new(),
        max_gain: f64::NEG_INFINITY,
        witnesses: Vec::new(),
        skipped: Vec::new(),
    };
    for deviations in grid {
        if let Some(reason) = deviations
            .iter()
            .find_map(|d| d.check(config, horizon).err())
        {
            report.skipped.push(reason);
            continue;
        }
        let trial = replay(config, horizon, &baseline, deviations)?;
        let gain = trial.weakest_gain();
        report.max_gain = report.max_gain.max(gain);
        if gain > GAIN_TOL {
            report.witnesses.push(report.trials.len());
        }
        report.trials.push(trial);
    }
    Ok(report)
}

/// Replays the market once per deviation, everyone else playing greedily.
pub fn audit_unilateral(
    config: &MarketConfig,
    horizon: usize,
    grid: &[Deviation],
) -> Result<AuditReport> {
    audit(config, horizon, grid.iter().map(|d| vec![*d]).collect())
}

/// Replays joint deviations by `coalition`; a trial wins only if every
/// member gains.
pub fn audit_coalition(
    config: &MarketConfig,
    horizon: usize,
    coalition: &[Trader],
    joint_grid: &[Vec<Deviation>],
) -> Result<AuditReport> {
    if coalition.len() < 2 {
        return Err(MarketError::InvalidConfig(
            "a coalition needs at least two traders".into(),
        ));
    }
    let mut report = audit(config, horizon, Vec::new())?;
    let mut grid = Vec::new();
    for joint in joint_grid {
        if joint.iter().any(|d| !coalition.contains(&d.trader)) {
            report
                .skipped
                .push("joint deviation involves a trader outside the coalition".into());
        } else {
            grid.push(joint.clone());
        }
    }
    let mut rest = audit(config, horizon, grid)?;
    rest.skipped.splice(0..0, report.skipped);
    Ok(rest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonexpansiveReport {
    /// `|p - 1|` per round.
    pub distances: Vec<f64>,
    /// First round whose distance exceeds the previous one.
    pub first_violation: Option<usize>,
    /// First round where the price moved away from one's side instead of
    /// towards it.
    pub first_sign_violation: Option<usize>,
}

impl NonexpansiveReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none() && self.first_sign_violation.is_none()
    }
}

/// Checks `|p^(t+1) - 1| <= |p^t - 1| + slack` along the trace, and that a
/// price below one rises and a price above one falls. The second check is
/// skipped once the price is within `tol` of one.
pub fn check_nonexpansive(trace: &Trace, slack: f64, tol: f64) -> NonexpansiveReport {
    let prices = trace.prices();
    let distances: Vec<f64> = prices.iter().map(|p| (p - 1.0).abs()).collect();
    let mut first_violation = None;
    let mut first_sign_violation = None;
    for t in 1..prices.len() {
        let round = trace.records[t].round;
        if first_violation.is_none() && distances[t] > distances[t - 1] + slack {
            first_violation = Some(round);
        }
        let (prev, cur) = (prices[t - 1], prices[t]);
        let wrong_way = (prev < 1.0 - tol && cur <= prev) || (prev > 1.0 + tol && cur >= prev);
        if first_sign_violation.is_none() && wrong_way {
            first_sign_violation = Some(round);
        }
    }
    NonexpansiveReport {
        distances,
        first_violation,
        first_sign_violation,
    }
}

/// Largest error of `M^(t+1) = m^(t+1) + max(0, p^t R^t - M^t)` along a
/// greedy trace with rights.
pub fn money_law_error(trace: &Trace, config: &MarketConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for pair in trace.records.windows(2) {
        let (now, next) = (&pair[0], &pair[1]);
        let incomes = config.incomes(next.round);
        for (b, income) in incomes.iter().enumerate() {
            let predicted =
                income + (now.price_good * now.right_assigned[b] - now.money_start[b]).max(0.0);
            worst = worst.max((predicted - next.money_start[b]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub instances: usize,
    pub max_discrepancy: f64,
    pub worst_instance: Option<(Vec<f64>, Vec<f64>)>,
}

/// Root of the monotone residual by bisection.
pub fn bisect_implicit_price(money: &[f64], rights: &[f64]) -> f64 {
    if implicit_price_residual(0.0, money, rights) <= 0.0 {
        return 0.0;
    }
    let total_rights: f64 = rights.iter().sum();
    let mut lo = 0.0;
    let mut hi = money.iter().sum::<f64>() / total_rights + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if implicit_price_residual(mid, money, rights) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Compares the interval-scan solver with bisection on random instances.
/// Every tenth instance has no Money, every seventh a single buyer.
pub fn cross_validate_price_solver(instances: usize, rng_seed: u64) -> Result<SolverReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = SolverReport {
        instances,
        max_discrepancy: 0.0,
        worst_instance: None,
    };
    for i in 0..instances {
        let n = if i % 7 == 0 {
            1
        } else {
            rng.random_range(2..=12)
        };
        let broke = i % 10 == 0;
        let money: Vec<f64> = (0..n)
            .map(|_| {
                if broke || rng.random_bool(0.15) {
                    0.0
                } else {
                    rng.random_range(0.0..2.0)
                }
            })
            .collect();
        let mut rights: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let raw: f64 = rights.iter().sum();
        if raw <= 0.0 {
            rights[0] = 1.0;
        }
        let target = rng.random_range(1e-3..=10.0);
        let raw: f64 = rights.iter().sum();
        rights.iter_mut().for_each(|r| *r *= target / raw);

        let solved = solve_implicit_price(&money, &rights)?.price;
        let oracle = if n == 1 {
            money[0] / rights[0]
        } else {
            bisect_implicit_price(&money, &rights)
        };
        let gap = (solved - oracle).abs();
        if gap > report.max_discrepancy {
            report.max_discrepancy = gap;
            report.worst_instance = Some((money, rights));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Variant;
    use crate::rights::DistributionMechanism;
    use crate::scenarios::scenario_a;

    fn config() -> MarketConfig {
        scenario_a(DistributionMechanism::Proportional, Variant::Rights)
    }

    #[test]
    fn default_rounds_dedup() {
        assert_eq!(default_rounds(20), vec![1, 10, 20]);
        assert_eq!(default_rounds(1), vec![1]);
        assert_eq!(default_rounds(2), vec![1, 2]);
    }

    #[test]
    fn trader_names_round_trip() {
        for t in [Trader::Seller(0), Trader::Buyer(12)] {
            assert_eq!(t.to_string().parse::<Trader>(), Ok(t));
        }
        for bad in ["", "x1", "b", "b-1", "s1.5"] {
            assert!(bad.parse::<Trader>().is_err(), "{bad}");
        }
    }

    #[test]
    fn withheld_good_is_offered_next_round() {
        let dev = Deviation {
            trader: Trader::Seller(0),
            round: 3,
            kind: DeviationKind::SellerWithhold(Magnitude::Absolute(0.25)),
        };
        let trace = run_with(
            &config(),
            5,
            &DeviationProfile {
                deviations: vec![dev],
            },
        )
        .unwrap();
        assert!((trace.records[2].volume_offered - 0.75).abs() < 1e-12);
        assert!((trace.records[3].volume_offered - 1.25).abs() < 1e-12);
        assert!((trace.records[4].volume_offered - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overpriced_seller_sells_nothing() {
        let dev = Deviation {
            trader: Trader::Seller(0),
            round: 1,
            kind: DeviationKind::SellerPrice(Magnitude::Absolute(0.1)),
        };
        let trace = run_with(
            &config(),
            2,
            &DeviationProfile {
                deviations: vec![dev],
            },
        )
        .unwrap();
        assert_eq!(trace.records[0].volume_sold, 0.0);
        let report = audit_unilateral(&config(), 10, &[dev]).unwrap();
        assert!(report.max_gain <= GAIN_TOL);
    }

    #[test]
    fn invalid_deviations_are_skipped() {
        let bad = [
            Deviation {
                trader: Trader::Buyer(7),
                round: 1,
                kind: DeviationKind::BuyerSellLessRight(0.5),
            },
            Deviation {
                trader: Trader::Seller(0),
                round: 1,
                kind: DeviationKind::BuyerPrice(Magnitude::Relative(0.1)),
            },
            Deviation {
                trader: Trader::Seller(0),
                round: 99,
                kind: DeviationKind::SellerPrice(Magnitude::Relative(0.1)),
            },
        ];
        let report = audit_unilateral(&config(), 5, &bad).unwrap();
        assert_eq!(report.skipped.len(), 3);
        assert!(report.trials.is_empty());
        assert_eq!(report.max_gain, f64::NEG_INFINITY);
    }

    #[test]
    fn coalition_needs_two_members() {
        assert!(audit_coalition(&config(), 5, &[Trader::Buyer(0)], &[]).is_err());
    }

    #[test]
    fn coalition_grid_size() {
        let grid = coalition_grid(&[Trader::Buyer(0), Trader::Buyer(1)], 10, 1000);
        // 24 options per buyer per round, three rounds
        assert_eq!(grid.len(), 3 * 24 * 24);
        let diag = coalition_grid(&[Trader::Buyer(0), Trader::Buyer(1)], 10, 100);
        assert_eq!(diag.len(), 3 * 24);
    }

    #[test]
    fn nonexpansive_on_scenario_a() {
        let trace = run(&config(), 40).unwrap();
        let report = check_nonexpansive(&trace, 1e-12, 1e-9);
        assert!(report.passed(), "{report:?}");
        assert!((report.distances[0] - 0.353448).abs() < 1e-6);
        assert!((report.distances[1] - 0.012188).abs() < 1e-6);
    }

    #[test]
    fn money_law_holds_on_scenario_a() {
        let trace = run(&config(), 40).unwrap();
        assert!(money_law_error(&trace, &config()) < 1e-9);
    }

    #[test]
    fn solver_agrees_with_bisection() {
        let report = cross_validate_price_solver(500, 3).unwrap();
        assert!(report.max_discrepancy < 1e-10, "{report:?}");
    }

    #[test]
    fn bisection_handles_zero_money() {
        assert_eq!(bisect_implicit_price(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }
}
