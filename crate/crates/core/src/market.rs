//! One trading round between providers and consumers.
//!
//! The round runs in four phases:
//!
//! 1. every consumer announces its allocator family;
//! 2. every provider reports its price (truthfully) to every consumer;
//! 3. every consumer solves its budget problem for `c` and quotes each
//!    provider `ε = f(c, p)` with the matching offer;
//! 4. every provider splits its privacy budget across the quotes and the
//!    chosen deals are confirmed.
//!
//! Announcing the family before prices are reported lets consumers solve for
//! `c` on the reported prices without changing any provider's best response.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{EpsilonAllocator, Family};
use crate::error::{check_positive, Error, Result};
use crate::optimizer::{BudgetProblem, SolvedAllocator};
use crate::privacy::{LaplaceMechanism, PrivacyAccount};
pub use crate::provider::ConsumerId;
use crate::provider::{split_privacy_budget, ConsumerQuote, Provider, ProviderId};

pub const DEFAULT_UNIT_VALUE: f64 = 0.1;
pub const DEFAULT_PROVIDER_MAX_EPSILON: f64 = 3.0;
/// Sensitivity of a provider's datum (unit-range data).
pub const DEFAULT_SENSITIVITY: f64 = 1.0;
/// Slack on `spent ≤ budget` in the ledger audit.
pub const BUDGET_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consumer {
    pub id: ConsumerId,
    pub budget: f64,
    /// Payoff per ε unit.
    pub payoff_rate: f64,
    pub family: Family,
    /// Skip the optimizer and publish `f(fixed_c, ·)`. The full spend at this
    /// `c` must still fit the budget.
    pub fixed_c: Option<f64>,
}

impl Consumer {
    pub fn new(id: ConsumerId, budget: f64, payoff_rate: f64, family: Family) -> Result<Self> {
        check_positive("budget", budget)?;
        check_positive("payoff rate", payoff_rate)?;
        Ok(Self {
            id,
            budget,
            payoff_rate,
            family,
            fixed_c: None,
        })
    }

    pub fn with_fixed_c(mut self, c: f64) -> Result<Self> {
        check_positive("c", c)?;
        self.fixed_c = Some(c);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deal {
    pub provider_id: ProviderId,
    pub consumer_id: ConsumerId,
    /// Absolute ε, `epsilon_units × unit_value`.
    pub epsilon: f64,
    pub epsilon_units: f64,
    pub payment: f64,
    pub provider_utility: f64,
    /// `payoff_rate · epsilon_units − payment`
    pub consumer_profit_contrib: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConsumerSummary {
    pub solved: Option<SolvedAllocator>,
    /// Why the consumer did not trade, if it could not publish an allocator.
    pub failure: Option<String>,
    pub spent: f64,
    /// ε units bought across confirmed deals.
    pub information: f64,
    pub profit: f64,
    pub deals: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProviderSummary {
    /// Absolute ε released across confirmed deals.
    pub epsilon_consumed: f64,
    pub utility: f64,
    pub received: f64,
    pub deals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub unit_value: f64,
    pub deals: Vec<Deal>,
    pub per_consumer: BTreeMap<ConsumerId, ConsumerSummary>,
    pub per_provider: BTreeMap<ProviderId, ProviderSummary>,
}

/// Runs one trading round. Deals are ordered by provider (input order), then
/// consumer id.
pub fn run_market(
    providers: &[Provider],
    consumers: &[Consumer],
    unit_value: f64,
) -> Result<MarketOutcome> {
    check_positive("unit value", unit_value)?;
    if providers.is_empty() {
        return Err(Error::EmptyInput("providers"));
    }
    if consumers.is_empty() {
        return Err(Error::EmptyInput("consumers"));
    }
    let provider_ids: BTreeSet<_> = providers.iter().map(|p| p.id).collect();
    if provider_ids.len() != providers.len() {
        return Err(Error::Config("duplicate provider id".into()));
    }
    let consumer_ids: BTreeSet<_> = consumers.iter().map(|c| c.id).collect();
    if consumer_ids.len() != consumers.len() {
        return Err(Error::Config("duplicate consumer id".into()));
    }

    // Phase 2: reports.
    let reported: Vec<f64> = providers.iter().map(Provider::report_price).collect();

    // Phase 3: consumers fix c on the reported prices.
    let mut per_consumer: BTreeMap<ConsumerId, ConsumerSummary> = BTreeMap::new();
    let mut published: Vec<(&Consumer, EpsilonAllocator)> = Vec::new();
    for consumer in consumers {
        let mut summary = ConsumerSummary::default();
        match publish_allocator(consumer, &reported) {
            Ok(solved) => {
                published.push((consumer, solved.allocator));
                summary.solved = Some(solved);
            }
            Err(e) => summary.failure = Some(e.to_string()),
        }
        per_consumer.insert(consumer.id, summary);
    }
    published.sort_by_key(|(c, _)| c.id);

    // Phase 4: each provider picks its deals.
    let mut deals = Vec::new();
    let mut per_provider = BTreeMap::new();
    for (provider, &price) in providers.iter().zip(&reported) {
        let mut offers = BTreeMap::new();
        let mut quotes = Vec::new();
        for &(consumer, alloc) in &published {
            let offer = alloc.offer_unchecked(price);
            if offer.epsilon_granted <= 0.0 {
                continue;
            }
            // ρ(π, π) equals the incentive, so only rounding can push it below zero.
            let utility = (offer.total - provider.true_price * offer.epsilon_granted).max(0.0);
            quotes.push(ConsumerQuote {
                consumer_id: consumer.id,
                epsilon_requested: offer.epsilon_granted * unit_value,
                utility,
            });
            offers.insert(consumer.id, (consumer.payoff_rate, offer, utility));
        }

        let selected = split_privacy_budget(&quotes, provider.epsilon_total, unit_value)?;
        let mut account = PrivacyAccount::new(provider.epsilon_total + unit_value / 2.0)?;
        let mut summary = ProviderSummary::default();
        for consumer_id in selected {
            let (payoff_rate, offer, utility) = offers[&consumer_id];
            let epsilon = offer.epsilon_granted * unit_value;
            if account.charge(epsilon).is_err() {
                continue;
            }
            let deal = Deal {
                provider_id: provider.id,
                consumer_id,
                epsilon,
                epsilon_units: offer.epsilon_granted,
                payment: offer.total,
                provider_utility: utility,
                consumer_profit_contrib: payoff_rate * offer.epsilon_granted - offer.total,
            };
            summary.epsilon_consumed += epsilon;
            summary.utility += utility;
            summary.received += deal.payment;
            summary.deals += 1;
            deals.push(deal);
        }
        per_provider.insert(provider.id, summary);
    }

    for deal in &deals {
        let s = per_consumer
            .get_mut(&deal.consumer_id)
            .expect("deal for unknown consumer");
        s.spent += deal.payment;
        s.information += deal.epsilon_units;
        s.profit += deal.consumer_profit_contrib;
        s.deals += 1;
    }

    Ok(MarketOutcome {
        unit_value,
        deals,
        per_consumer,
        per_provider,
    })
}

fn publish_allocator(consumer: &Consumer, reported: &[f64]) -> Result<SolvedAllocator> {
    let problem = BudgetProblem::new(consumer.family, reported.to_vec(), consumer.budget)?;
    match consumer.fixed_c {
        None => problem.solve(),
        Some(c) => {
            let solved = problem.evaluate(c)?;
            if solved.spent > consumer.budget + BUDGET_SLACK {
                return Err(Error::Config(format!(
                    "fixed c = {c} spends {} over a budget of {}",
                    solved.spent, consumer.budget
                )));
            }
            Ok(solved)
        }
    }
}

/// A provider's datum after Laplace noise at the deal's ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanitizedRelease {
    pub consumer_id: ConsumerId,
    pub provider_id: ProviderId,
    pub value: f64,
}

/// Sanitizes each deal's datum with the Laplace mechanism. Noise is seeded
/// per `(seed, provider, consumer)`, so the output is independent of deal order.
pub fn settle_and_sanitize(
    outcome: &MarketOutcome,
    providers: &[Provider],
    seed: u64,
) -> Result<Vec<SanitizedRelease>> {
    let by_id: BTreeMap<_, _> = providers.iter().map(|p| (p.id, p)).collect();
    let mut mechanisms = Vec::with_capacity(outcome.deals.len());
    for deal in &outcome.deals {
        let provider = by_id.get(&deal.provider_id).ok_or_else(|| {
            Error::Config(format!("deal references unknown provider {}", deal.provider_id))
        })?;
        let mechanism = LaplaceMechanism::new(DEFAULT_SENSITIVITY, deal.epsilon)?;
        mechanisms.push((deal, *provider, mechanism));
    }

    Ok(mechanisms
        .into_iter()
        .map(|(deal, provider, mechanism)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                deal.provider_id.0,
                deal.consumer_id.0,
            ));
            SanitizedRelease {
                consumer_id: deal.consumer_id,
                provider_id: deal.provider_id,
                value: mechanism.release(provider.datum, &mut rng),
            }
        })
        .collect())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, provider: u32, consumer: u32) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(provider as u64)) ^ consumer as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LedgerViolation {
    Conservation { consumers: f64, deals: f64, providers: f64 },
    ConsumerMismatch { consumer: ConsumerId, field: &'static str, recorded: f64, recomputed: f64 },
    OverBudget { consumer: ConsumerId, spent: f64, budget: f64 },
    OverPrivacyBudget { provider: ProviderId, consumed: f64, cap: f64 },
    InvalidDeal { provider: ProviderId, consumer: ConsumerId },
    UnknownParty { provider: ProviderId, consumer: ConsumerId },
}

impl fmt::Display for LedgerViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Conservation { consumers, deals, providers } => write!(
                f,
                "payments not conserved: consumers {consumers}, deals {deals}, providers {providers}"
            ),
            Self::ConsumerMismatch { consumer, field, recorded, recomputed } => write!(
                f,
                "{consumer} {field} recorded {recorded} but deals sum to {recomputed}"
            ),
            Self::OverBudget { consumer, spent, budget } => {
                write!(f, "{consumer} spent {spent} over budget {budget}")
            }
            Self::OverPrivacyBudget { provider, consumed, cap } => {
                write!(f, "{provider} released ε = {consumed} over cap {cap}")
            }
            Self::InvalidDeal { provider, consumer } => {
                write!(f, "deal {provider}→{consumer} has invalid ε or payment")
            }
            Self::UnknownParty { provider, consumer } => {
                write!(f, "deal {provider}→{consumer} references an unknown party")
            }
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl MarketOutcome {
    /// Checks payment conservation, consumer budgets and provider privacy caps.
    pub fn audit(&self, providers: &[Provider], consumers: &[Consumer]) -> Vec<LedgerViolation> {
        let mut violations = Vec::new();
        let providers_by_id: BTreeMap<_, _> = providers.iter().map(|p| (p.id, p)).collect();
        let consumers_by_id: BTreeMap<_, _> = consumers.iter().map(|c| (c.id, c)).collect();

        let mut spent: BTreeMap<ConsumerId, f64> = BTreeMap::new();
        let mut info: BTreeMap<ConsumerId, f64> = BTreeMap::new();
        let mut released: BTreeMap<ProviderId, f64> = BTreeMap::new();
        for d in &self.deals {
            if !providers_by_id.contains_key(&d.provider_id)
                || !consumers_by_id.contains_key(&d.consumer_id)
            {
                violations.push(LedgerViolation::UnknownParty {
                    provider: d.provider_id,
                    consumer: d.consumer_id,
                });
            }
            if !(d.epsilon.is_finite() && d.epsilon > 0.0 && d.payment >= 0.0) {
                violations.push(LedgerViolation::InvalidDeal {
                    provider: d.provider_id,
                    consumer: d.consumer_id,
                });
            }
            *spent.entry(d.consumer_id).or_default() += d.payment;
            *info.entry(d.consumer_id).or_default() += d.epsilon_units;
            *released.entry(d.provider_id).or_default() += d.epsilon;
        }

        let deal_total: f64 = self.deals.iter().map(|d| d.payment).sum();
        let consumer_total: f64 = self.per_consumer.values().map(|s| s.spent).sum();
        let provider_total: f64 = self.per_provider.values().map(|s| s.received).sum();
        if !close(consumer_total, deal_total) || !close(provider_total, deal_total) {
            violations.push(LedgerViolation::Conservation {
                consumers: consumer_total,
                deals: deal_total,
                providers: provider_total,
            });
        }

        for (&id, summary) in &self.per_consumer {
            let recomputed = spent.get(&id).copied().unwrap_or(0.0);
            if !close(summary.spent, recomputed) {
                violations.push(LedgerViolation::ConsumerMismatch {
                    consumer: id,
                    field: "spent",
                    recorded: summary.spent,
                    recomputed,
                });
            }
            let recomputed = info.get(&id).copied().unwrap_or(0.0);
            if !close(summary.information, recomputed) {
                violations.push(LedgerViolation::ConsumerMismatch {
                    consumer: id,
                    field: "information",
                    recorded: summary.information,
                    recomputed,
                });
            }
            if let Some(c) = consumers_by_id.get(&id) {
                if summary.spent > c.budget + BUDGET_SLACK {
                    violations.push(LedgerViolation::OverBudget {
                        consumer: id,
                        spent: summary.spent,
                        budget: c.budget,
                    });
                }
            }
        }

        for (&id, &consumed) in &released {
            if let Some(p) = providers_by_id.get(&id) {
                let cap = p.epsilon_total + self.unit_value / 2.0;
                if consumed > cap {
                    violations.push(LedgerViolation::OverPrivacyBudget {
                        provider: id,
                        consumed,
                        cap,
                    });
                }
            }
        }
        violations
    }
}
