//! ε-allocating function families and the incentive payment rule.
//!
//! A consumer publishes `f(c, ·)`, a non-increasing map from a reported price
//! per ε unit to the number of ε units it buys. The payment offered for a
//! report `p` is `μ(p) = p·f(p) + ∫_p^∞ f(z) dz`; the integral is the
//! incentive that makes reporting the true price optimal for the provider.
//!
//! Both families vanish beyond a finite support bound, so the incentive
//! integral is computed in closed form over `[p, support_bound]`.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `f(c, p) = max(0, ln(e − c·p))`
    Log,
    /// `f(c, p) = max(0, 1 − c·p)`
    Linear,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Log, Family::Linear];

    /// `c · support_bound`, i.e. the support bound at `c = 1`.
    pub fn support_scale(self) -> f64 {
        match self {
            Family::Log => E - 1.0,
            Family::Linear => 1.0,
        }
    }

    /// `c · μ(0)`: the offer for a zero price at `c = 1`.
    ///
    /// Offers are non-increasing in the price, so `n · peak_offer_scale / c`
    /// bounds the total spend over any `n` prices.
    pub fn peak_offer_scale(self) -> f64 {
        match self {
            Family::Log => 1.0,
            Family::Linear => 0.5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Log => "log",
            Family::Linear => "linear",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log" => Ok(Family::Log),
            "linear" | "lin" => Ok(Family::Linear),
            other => Err(Error::Config(format!(
                "unknown family {other:?}, expected \"log\" or \"linear\""
            ))),
        }
    }
}

/// A member `f(c, ·)` of an allocator family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonAllocator {
    family: Family,
    c: f64,
}

/// The payment offered for one reported price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub reported_price: f64,
    /// ε units bought, `f(c, p)`.
    pub epsilon_granted: f64,
    /// `p · f(c, p)`
    pub base_payment: f64,
    /// `∫_p^∞ f(c, z) dz`
    pub incentive: f64,
    /// `base_payment + incentive`
    pub total: f64,
}

impl EpsilonAllocator {
    pub fn new(family: Family, c: f64) -> Result<Self> {
        check_positive("c", c)?;
        Ok(Self { family, c })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Largest price that still receives a positive allocation.
    pub fn support_bound(&self) -> f64 {
        self.family.support_scale() / self.c
    }

    /// ε units bought from a provider reporting `price`.
    pub fn allocate(&self, price: f64) -> Result<f64> {
        check_non_negative("price", price)?;
        Ok(self.allocate_unchecked(price))
    }

    pub fn payment_offer(&self, price: f64) -> Result<Offer> {
        check_non_negative("price", price)?;
        Ok(self.offer_unchecked(price))
    }

    /// Provider surplus `μ(reported) − true_price · f(reported)`.
    pub fn provider_utility(&self, reported: f64, true_price: f64) -> Result<f64> {
        check_non_negative("reported price", reported)?;
        check_non_negative("true price", true_price)?;
        let offer = self.offer_unchecked(reported);
        Ok(offer.total - true_price * offer.epsilon_granted)
    }

    pub(crate) fn allocate_unchecked(&self, price: f64) -> f64 {
        match self.family {
            Family::Linear => (1.0 - self.c * price).max(0.0),
            Family::Log => {
                // ln(e − cp) = ln(1 + d) with d = (e − 1) − cp, exact near the bound.
                let d = (E - 1.0) - self.c * price;
                if d > 0.0 {
                    d.ln_1p()
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form incentive `∫_p^{support_bound} f(c, z) dz`.
    pub(crate) fn incentive_unchecked(&self, price: f64) -> f64 {
        match self.family {
            // ∫_p^{1/c} (1 − cz) dz = (1 − cp)² / (2c)
            Family::Linear => {
                let f = (1.0 - self.c * price).max(0.0);
                f * f / (2.0 * self.c)
            }
            // With w = e − cp = 1 + d: (1/c)·[w ln w − w + 1] = (1/c)·[(1 + d)·ln(1 + d) − d]
            Family::Log => {
                let d = (E - 1.0) - self.c * price;
                if d > 0.0 {
                    (((1.0 + d) * d.ln_1p()) - d).max(0.0) / self.c
                } else {
                    0.0
                }
            }
        }
    }

    pub(crate) fn offer_unchecked(&self, price: f64) -> Offer {
        let epsilon_granted = self.allocate_unchecked(price);
        let base_payment = price * epsilon_granted;
        let incentive = self.incentive_unchecked(price);
        Offer {
            reported_price: price,
            epsilon_granted,
            base_payment,
            incentive,
            total: base_payment + incentive,
        }
    }
}
