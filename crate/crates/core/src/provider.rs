//! Provider-side decisions: price reporting and splitting a privacy budget
//! across competing consumers.
//!
//! A provider that receives quotes from several consumers picks the subset
//! maximizing total utility subject to `Σ ε ≤ ε_total`, a 0/1 knapsack over
//! ε discretized to multiples of `unit`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};

/// Absorbs float noise when mapping ε onto whole units.
const UNIT_ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProviderId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConsumerId(pub u32);

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ConsumerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provider {
    pub id: ProviderId,
    /// True price per ε unit. Private to the provider.
    pub true_price: f64,
    /// Cap on the cumulative ε released across all deals.
    pub epsilon_total: f64,
    /// Raw value to be sanitized.
    pub datum: f64,
}

impl Provider {
    pub fn new(id: ProviderId, true_price: f64, epsilon_total: f64, datum: f64) -> Result<Self> {
        check_non_negative("true price", true_price)?;
        check_positive("epsilon_total", epsilon_total)?;
        if !datum.is_finite() {
            return Err(Error::InvalidParameter {
                name: "datum",
                value: datum,
                reason: "must be finite",
            });
        }
        Ok(Self {
            id,
            true_price,
            epsilon_total,
            datum,
        })
    }

    /// Truthful reporting is a dominant strategy under the incentive payment rule.
    pub fn report_price(&self) -> f64 {
        self.true_price
    }
}

/// A consumer's request to one provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumerQuote {
    pub consumer_id: ConsumerId,
    pub epsilon_requested: f64,
    /// Utility the provider earns by accepting.
    pub utility: f64,
}

/// Number of whole units charged for `epsilon`, rounded up so that the
/// selected ε never exceeds the capacity.
pub fn weight_units(epsilon: f64, unit: f64) -> usize {
    let units = (epsilon / unit - UNIT_ROUNDING_SLACK).ceil();
    if units > 0.0 {
        units as usize
    } else {
        0
    }
}

/// Number of whole units that fit in `epsilon_total`.
pub fn capacity_units(epsilon_total: f64, unit: f64) -> usize {
    (epsilon_total / unit + UNIT_ROUNDING_SLACK).floor().max(0.0) as usize
}

/// Picks the consumers to deal with, maximizing total utility under the
/// privacy budget.
///
/// Ties in utility go to the subset with the fewest ε units, then to the
/// lexicographically smallest list of consumer ids. Returned ids are sorted.
pub fn split_privacy_budget(
    quotes: &[ConsumerQuote],
    epsilon_total: f64,
    unit: f64,
) -> Result<Vec<ConsumerId>> {
    check_positive("unit", unit)?;
    check_positive("epsilon_total", epsilon_total)?;
    for q in quotes {
        check_non_negative("epsilon requested", q.epsilon_requested)?;
        if !q.utility.is_finite() || q.utility < 0.0 {
            return Err(Error::InvalidParameter {
                name: "quote utility",
                value: q.utility,
                reason: "must be finite and non-negative",
            });
        }
    }

    let capacity = capacity_units(epsilon_total, unit);

    // Largest id first, so backtracking settles the smallest ids first.
    let mut items: Vec<(ConsumerId, usize, f64)> = quotes
        .iter()
        .filter(|q| q.epsilon_requested > 0.0)
        .map(|q| (q.consumer_id, weight_units(q.epsilon_requested, unit), q.utility))
        .filter(|&(_, w, _)| w <= capacity)
        .collect();
    items.sort_by_key(|item| std::cmp::Reverse(item.0));

    // best[i][j]: max utility over the first i items using exactly j units.
    let width = capacity + 1;
    let mut best = vec![f64::NEG_INFINITY; (items.len() + 1) * width];
    best[0] = 0.0;
    for (i, &(_, w, v)) in items.iter().enumerate() {
        let (prev, cur) = best.split_at_mut((i + 1) * width);
        let prev = &prev[i * width..];
        let cur = &mut cur[..width];
        for j in 0..width {
            let mut value = prev[j];
            if j >= w && prev[j - w] > f64::NEG_INFINITY {
                let with_item = prev[j - w] + v;
                if with_item > value {
                    value = with_item;
                }
            }
            cur[j] = value;
        }
    }

    let last = &best[items.len() * width..];
    let top = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let Some(mut j) = last.iter().position(|&u| u == top) else {
        return Ok(Vec::new());
    };

    let mut target = top;
    let mut selected = Vec::new();
    for i in (1..=items.len()).rev() {
        let (id, w, v) = items[i - 1];
        let prev = &best[(i - 1) * width..i * width];
        if j >= w && prev[j - w] > f64::NEG_INFINITY && prev[j - w] + v == target {
            selected.push(id);
            target = prev[j - w];
            j -= w;
        } else {
            debug_assert_eq!(prev[j], target);
        }
    }
    selected.sort();
    Ok(selected)
}
