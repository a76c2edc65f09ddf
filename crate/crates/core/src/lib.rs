//! Incentive-compatible pricing for personal-data markets.
//!
//! Data providers sell differentially private releases of their data to
//! data consumers. Each consumer publishes an ε-allocating function `f(c, ·)`
//! that maps a provider's reported price per ε unit to the amount of ε the
//! consumer wants to buy, and pays
//!
//! ```text
//! μ(p) = p·f(p) + ∫_p^∞ f(z) dz
//! ```
//!
//! which makes truthful price reporting a dominant strategy for providers.
//!
//! The crate is organised as:
//!
//! - [`allocation`]: allocator families, payment offers and provider utility.
//! - [`optimizer`]: the consumer's budget-constrained choice of `c`.
//! - [`provider`]: truthful reporting and 0/1-knapsack privacy-budget splitting.
//! - [`privacy`]: Laplace mechanism and composition accounting.
//! - [`market`]: the end-to-end trading round and its ledger.
//! - [`experiment`]: seeded experiment runner and CSV/JSON result emission.

pub mod allocation;
pub mod error;
pub mod experiment;
pub mod market;
pub mod optimizer;
pub mod privacy;
pub mod provider;

pub use allocation::{EpsilonAllocator, Family, Offer};
pub use error::{Error, Result};
pub use market::{run_market, settle_and_sanitize, Consumer, ConsumerId, Deal, MarketOutcome};
pub use optimizer::{BudgetProblem, SolvedAllocator};
pub use privacy::PrivacyAccount;
pub use provider::{ConsumerQuote, Provider, ProviderId};
