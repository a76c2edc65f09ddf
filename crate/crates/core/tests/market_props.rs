mod common;

use std::collections::BTreeMap;

use datamarket::market::{BUDGET_SLACK, DEFAULT_UNIT_VALUE};
use datamarket::{
    run_market, settle_and_sanitize, Consumer, ConsumerId, Family, MarketOutcome, Provider,
    ProviderId,
};
use proptest::prelude::*;

fn providers(prices: &[f64], eps_total: f64) -> Vec<Provider> {
    prices
        .iter()
        .enumerate()
        .map(|(i, &p)| Provider::new(ProviderId(i as u32), p, eps_total, i as f64).unwrap())
        .collect()
}

/// Conservation, budget safety and privacy safety recomputed from the deal list.
fn check_ledger(outcome: &MarketOutcome, providers: &[Provider], consumers: &[Consumer]) {
    let paid: f64 = outcome.deals.iter().map(|d| d.payment).sum();
    let spent: f64 = outcome.per_consumer.values().map(|s| s.spent).sum();
    let received: f64 = outcome.per_provider.values().map(|s| s.received).sum();
    let tol = 1e-9 * paid.max(1.0);
    assert!((paid - spent).abs() <= tol, "deals {paid} vs consumers {spent}");
    assert!((paid - received).abs() <= tol, "deals {paid} vs providers {received}");

    for c in consumers {
        let total: f64 = outcome
            .deals
            .iter()
            .filter(|d| d.consumer_id == c.id)
            .map(|d| d.payment)
            .sum();
        assert!(total <= c.budget + BUDGET_SLACK, "{} spent {total} of {}", c.id, c.budget);
    }

    let mut released: BTreeMap<ProviderId, f64> = BTreeMap::new();
    for d in &outcome.deals {
        assert!(d.epsilon > 0.0 && d.payment >= 0.0);
        *released.entry(d.provider_id).or_default() += d.epsilon;
    }
    for p in providers {
        let eps = released.get(&p.id).copied().unwrap_or(0.0);
        assert!(eps <= p.epsilon_total + outcome.unit_value / 2.0);
    }

    assert!(outcome.audit(providers, consumers).is_empty());
}

fn market_case() -> impl Strategy<Value = (Vec<f64>, f64, Vec<(f64, Family)>)> {
    let price = prop_oneof![Just(0.0), 0.0f64..2.0, Just(2.0)];
    (
        prop::collection::vec(price, 1..=120),
        0.05f64..3.0,
        prop::collection::vec(
            (0.05f64..2.0, prop_oneof![Just(Family::Log), Just(Family::Linear)]),
            1..=10,
        ),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ledger_invariants_hold((prices, eps_total, demand) in market_case()) {
        let providers = providers(&prices, eps_total);
        let consumers: Vec<Consumer> = demand
            .iter()
            .enumerate()
            .map(|(j, &(u, family))| {
                let budget = u * prices.len() as f64 * family.peak_offer_scale();
                Consumer::new(ConsumerId(j as u32), budget, 10.0, family).unwrap()
            })
            .collect();
        let outcome = run_market(&providers, &consumers, DEFAULT_UNIT_VALUE).unwrap();
        check_ledger(&outcome, &providers, &consumers);
        prop_assert!(outcome.per_consumer.values().all(|s| s.solved.is_some()));
    }
}

#[test]
fn favoured_consumer_gains_share_when_supply_is_short() {
    let mut rng = common::rng(11);
    let prices = common::clipped_normal_prices(&mut rng, 150);
    // Capacity of one unit: each provider serves exactly one consumer.
    let providers = providers(&prices, DEFAULT_UNIT_VALUE);
    let consumers_at = |c0: f64| -> Vec<Consumer> {
        (0..3)
            .map(|j| {
                let c = if j == 0 { c0 } else { 1.0 };
                Consumer::new(ConsumerId(j), 1e6, 10.0, Family::Log)
                    .unwrap()
                    .with_fixed_c(c)
                    .unwrap()
            })
            .collect()
    };
    let share = |outcome: &MarketOutcome| {
        let mine = outcome.deals.iter().filter(|d| d.consumer_id == ConsumerId(0)).count();
        mine as f64 / outcome.deals.len().max(1) as f64
    };

    let mut last = 0.0;
    for c0 in [1.5, 1.0, 0.8, 0.5, 0.2] {
        let consumers = consumers_at(c0);
        let outcome = run_market(&providers, &consumers, DEFAULT_UNIT_VALUE).unwrap();
        check_ledger(&outcome, &providers, &consumers);
        let s = share(&outcome);
        assert!(s >= last, "share fell to {s} at c = {c0}");
        last = s;
    }
    assert!(last > 0.9);
}

#[test]
fn deals_follow_provider_then_consumer_order() {
    let prices = [0.4, 1.2, 0.0, 1.9];
    let providers = providers(&prices, 3.0);
    let consumers: Vec<Consumer> = [2, 0, 1]
        .iter()
        .map(|&j| Consumer::new(ConsumerId(j), 2.0, 10.0, Family::Linear).unwrap())
        .collect();
    let outcome = run_market(&providers, &consumers, DEFAULT_UNIT_VALUE).unwrap();
    let keys: Vec<_> = outcome.deals.iter().map(|d| (d.provider_id, d.consumer_id)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    check_ledger(&outcome, &providers, &consumers);
}

#[test]
fn sanitized_noise_shrinks_with_epsilon() {
    // One provider with datum 0, one consumer; vary the deal's ε and measure
    // the spread of releases across seeds.
    let provider = Provider::new(ProviderId(0), 0.0, 20.0, 0.0).unwrap();
    let consumer = Consumer::new(ConsumerId(0), 1.0, 10.0, Family::Linear)
        .unwrap()
        .with_fixed_c(1.0)
        .unwrap();
    let spread = |unit_value: f64| {
        let outcome = run_market(std::slice::from_ref(&provider), std::slice::from_ref(&consumer), unit_value).unwrap();
        assert_eq!(outcome.deals.len(), 1);
        let eps = outcome.deals[0].epsilon;
        let draws: Vec<f64> = (0..20_000)
            .map(|seed| settle_and_sanitize(&outcome, std::slice::from_ref(&provider), seed).unwrap()[0].value)
            .collect();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
        (eps, var)
    };
    // At price 0 and c = 1 the deal buys one ε unit, so unit_value sets ε.
    let (eps_lo, var_lo) = spread(1.0);
    let (eps_hi, var_hi) = spread(10.0);
    assert!((eps_lo - 1.0).abs() < 1e-12 && (eps_hi - 10.0).abs() < 1e-12);
    assert!((var_lo / 2.0 - 1.0).abs() < 0.1, "variance {var_lo} at ε = 1");
    assert!((var_hi / 0.02 - 1.0).abs() < 0.1, "variance {var_hi} at ε = 10");
}
