//! Local differential privacy: the Laplace mechanism and composition accounting.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_positive, Error, Result};

/// Laplace noise with scale `b` from a uniform draw `u ∈ (−0.5, 0.5)`:
/// `−b · sign(u) · ln(1 − 2|u|)`.
pub fn laplace_noise_from_uniform(u: f64, scale: f64) -> f64 {
    -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// Laplace mechanism with scale `sensitivity / epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceMechanism {
    scale: f64,
}

impl LaplaceMechanism {
    pub fn new(sensitivity: f64, epsilon: f64) -> Result<Self> {
        check_positive("sensitivity", sensitivity)?;
        check_positive("epsilon", epsilon)?;
        Ok(Self {
            scale: sensitivity / epsilon,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Theoretical variance `2b²`.
    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }

    pub fn release<R: Rng + ?Sized>(&self, value: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
        value + laplace_noise_from_uniform(u, self.scale)
    }
}

/// Releases `value` with Laplace noise drawn from a generator seeded by `seed`.
pub fn laplace_release(value: f64, sensitivity: f64, epsilon: f64, seed: u64) -> Result<f64> {
    let mechanism = LaplaceMechanism::new(sensitivity, epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(mechanism.release(value, &mut rng))
}

fn check_eps_list(eps: &[f64]) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::EmptyInput("epsilon list"));
    }
    for &e in eps {
        check_positive("epsilon", e)?;
    }
    Ok(())
}

/// Releases of the same data at `ε₁, …, εₖ` are jointly `Σεᵢ`-DP.
pub fn sequential_compose(eps: &[f64]) -> Result<f64> {
    check_eps_list(eps)?;
    Ok(eps.iter().sum())
}

/// Releases over disjoint partitions are jointly `max εᵢ`-DP.
pub fn parallel_compose(eps: &[f64]) -> Result<f64> {
    check_eps_list(eps)?;
    Ok(eps.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Sequential-composition ledger for one data owner.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyAccount {
    consumed: f64,
    cap: f64,
}

impl PrivacyAccount {
    pub fn new(cap: f64) -> Result<Self> {
        check_positive("privacy cap", cap)?;
        Ok(Self { consumed: 0.0, cap })
    }

    pub fn consumed(&self) -> f64 {
        self.consumed
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn remaining(&self) -> f64 {
        self.cap - self.consumed
    }

    /// Records `epsilon`; leaves the account untouched when it would exceed the cap.
    pub fn charge(&mut self, epsilon: f64) -> Result<()> {
        check_positive("epsilon", epsilon)?;
        let next = self.consumed + epsilon;
        if next > self.cap {
            return Err(Error::BudgetExceeded {
                consumed: self.consumed,
                requested: epsilon,
                cap: self.cap,
            });
        }
        self.consumed = next;
        Ok(())
    }

    /// Charges the account, then releases `value` through the Laplace mechanism.
    pub fn release(&mut self, value: f64, sensitivity: f64, epsilon: f64, seed: u64) -> Result<f64> {
        let mechanism = LaplaceMechanism::new(sensitivity, epsilon)?;
        self.charge(epsilon)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(mechanism.release(value, &mut rng))
    }
}
