//! The consumer's choice of `c` under a fixed expense budget.
//!
//! For an additive payoff, maximizing profit and maximizing total information
//! `I(c) = Σ f(c, pᵢ)` coincide once the budget is fixed. Both `I(c)` and the
//! total spend `G(c) = Σ μ_c(pᵢ)` are non-increasing in `c`, so the optimum
//! is the smallest `c` whose spend fits the budget, i.e. the root of
//! `G(c) = B`. The Lagrange multiplier of the constrained problem is always
//! satisfiable for any `c`, so only the budget equation needs solving.
//!
//! [`BudgetProblem::solve_linear`] uses the closed-form root of
//! `c²·Σpᵢ² + 2Bc − n = 0` when every price stays inside the support and
//! falls back to bisection otherwise; [`BudgetProblem::solve_log`] always
//! bisects. [`BudgetProblem::grid_oracle`] is an exhaustive scan used to
//! cross-check both.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{EpsilonAllocator, Family};
use crate::error::{check_non_negative, check_positive, Error, Result};

/// Absolute tolerance on `spend − budget`, scaled by `max(1, budget)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const MAX_BISECTION_ITERATIONS: usize = 200;
const INITIAL_C_LOW: f64 = 1e-9;
const MAX_BRACKET_EXPANSIONS: usize = 200;
/// Relative slack on `spend ≤ budget` in the grid scan, for rounding only.
const GRID_FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetProblem {
    family: Family,
    reported_prices: Vec<f64>,
    budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedAllocator {
    pub allocator: EpsilonAllocator,
    /// `Σ μ(pᵢ)` at the solved `c`.
    pub spent: f64,
    /// `Σ f(c, pᵢ)` in ε units.
    pub total_information: f64,
    /// `spent − budget`.
    pub residual: f64,
}

/// One evaluated point of a `c` scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub spend: f64,
    pub information: f64,
}

impl BudgetProblem {
    pub fn new(family: Family, reported_prices: Vec<f64>, budget: f64) -> Result<Self> {
        if reported_prices.is_empty() {
            return Err(Error::EmptyInput("reported prices"));
        }
        for &p in &reported_prices {
            check_non_negative("reported price", p)?;
        }
        check_positive("budget", budget)?;
        Ok(Self {
            family,
            reported_prices,
            budget,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn reported_prices(&self) -> &[f64] {
        &self.reported_prices
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn n(&self) -> usize {
        self.reported_prices.len()
    }

    fn tolerance(&self) -> f64 {
        RESIDUAL_TOLERANCE * self.budget.max(1.0)
    }

    /// Total payment `Σ μ_c(pᵢ)`, each term clamped to zero outside the support.
    pub fn spend_at(&self, c: f64) -> Result<f64> {
        let alloc = EpsilonAllocator::new(self.family, c)?;
        Ok(self.spend_with(&alloc))
    }

    /// Total information `Σ f(c, pᵢ)` in ε units.
    pub fn information_at(&self, c: f64) -> Result<f64> {
        let alloc = EpsilonAllocator::new(self.family, c)?;
        Ok(self.information_with(&alloc))
    }

    fn spend_with(&self, alloc: &EpsilonAllocator) -> f64 {
        self.reported_prices
            .iter()
            .map(|&p| alloc.offer_unchecked(p).total)
            .sum()
    }

    fn information_with(&self, alloc: &EpsilonAllocator) -> f64 {
        self.reported_prices
            .iter()
            .map(|&p| alloc.allocate_unchecked(p))
            .sum()
    }

    /// Consumer profit `rate · Σ f(pᵢ) − Σ μ(pᵢ)` for a linear payoff `τ(ε) = rate · ε`.
    pub fn profit(&self, alloc: &EpsilonAllocator, payoff_rate: f64) -> Result<f64> {
        check_positive("payoff rate", payoff_rate)?;
        Ok(payoff_rate * self.information_with(alloc) - self.spend_with(alloc))
    }

    /// Solves with the method matching the problem's family.
    pub fn solve(&self) -> Result<SolvedAllocator> {
        match self.family {
            Family::Linear => self.solve_linear(),
            Family::Log => self.solve_log(),
        }
    }

    pub fn solve_linear(&self) -> Result<SolvedAllocator> {
        self.expect_family(Family::Linear)?;
        let n = self.n() as f64;
        let sum_sq: f64 = self.reported_prices.iter().map(|p| p * p).sum();
        // Positive root of c²Σp² + 2Bc − n = 0, rationalized so Σp² = 0 gives n/(2B).
        let b = self.budget;
        let c = n / (b + (b * b + n * sum_sq).sqrt());
        let max_price = self.reported_prices.iter().copied().fold(0.0, f64::max);
        if c.is_finite() && c > 0.0 && c * max_price <= 1.0 {
            let solved = self.evaluate(c)?;
            if solved.residual.abs() <= self.tolerance() {
                return Ok(solved);
            }
        }
        self.solve_by_bisection()
    }

    pub fn solve_log(&self) -> Result<SolvedAllocator> {
        self.expect_family(Family::Log)?;
        self.solve_by_bisection()
    }

    fn expect_family(&self, expected: Family) -> Result<()> {
        if self.family != expected {
            return Err(Error::FamilyMismatch {
                expected,
                found: self.family,
            });
        }
        Ok(())
    }

    /// Spend, information and residual of `f(c, ·)` on this problem.
    pub fn evaluate(&self, c: f64) -> Result<SolvedAllocator> {
        let allocator = EpsilonAllocator::new(self.family, c)?;
        let spent = self.spend_with(&allocator);
        Ok(SolvedAllocator {
            allocator,
            spent,
            total_information: self.information_with(&allocator),
            residual: spent - self.budget,
        })
    }

    /// `spend(c) − B`; NaN when `c` is not a valid parameter.
    fn residual_at(&self, c: f64) -> f64 {
        match EpsilonAllocator::new(self.family, c) {
            Ok(alloc) => self.spend_with(&alloc) - self.budget,
            Err(_) => f64::NAN,
        }
    }

    /// `[lo, hi]` with `spend(lo) ≥ B ≥ spend(hi)`.
    // The negated comparisons keep expanding on NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn bracket(&self) -> Result<(f64, f64)> {
        let mut lo = INITIAL_C_LOW;
        let mut expansions = 0;
        while !(self.residual_at(lo) >= 0.0) {
            expansions += 1;
            lo *= 0.5;
            if expansions > MAX_BRACKET_EXPANSIONS || lo < f64::MIN_POSITIVE {
                return Err(Error::NoFeasibleRoot {
                    budget: self.budget,
                    side: "below",
                });
            }
        }

        // Beyond support_scale / min price every term vanishes.
        let min_price = self
            .reported_prices
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let mut hi = if min_price > 0.0 {
            self.family.support_scale() / min_price
        } else {
            1.0
        };
        let mut expansions = 0;
        while !(self.residual_at(hi) <= 0.0) {
            expansions += 1;
            hi *= 2.0;
            if expansions > MAX_BRACKET_EXPANSIONS || !hi.is_finite() {
                return Err(Error::NoFeasibleRoot {
                    budget: self.budget,
                    side: "above",
                });
            }
        }
        Ok((lo, hi.max(lo)))
    }

    fn solve_by_bisection(&self) -> Result<SolvedAllocator> {
        let tol = self.tolerance();
        let (mut lo, mut hi) = self.bracket()?;

        let r_lo = self.residual_at(lo);
        let r_hi = self.residual_at(hi);
        let (mut best_c, mut best_r) = if r_lo.abs() <= r_hi.abs() {
            (lo, r_lo)
        } else {
            (hi, r_hi)
        };
        if best_r.abs() <= tol {
            return self.evaluate(best_c);
        }

        for _ in 0..MAX_BISECTION_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = self.residual_at(mid);
            if r.abs() < best_r.abs() {
                best_c = mid;
                best_r = r;
            }
            if r.abs() <= tol {
                return self.evaluate(mid);
            }
            if r > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }

        if best_r.abs() <= tol {
            self.evaluate(best_c)
        } else {
            Err(Error::NonConvergence {
                best_c,
                residual: best_r,
            })
        }
    }

    /// Evaluates spend and information at each `c` (in parallel, order preserved).
    pub fn scan(&self, cs: &[f64]) -> Result<Vec<GridPoint>> {
        for &c in cs {
            check_positive("c", c)?;
        }
        Ok(cs
            .par_iter()
            .map(|&c| {
                let alloc = EpsilonAllocator::new(self.family, c).unwrap();
                GridPoint {
                    c,
                    spend: self.spend_with(&alloc),
                    information: self.information_with(&alloc),
                }
            })
            .collect())
    }

    /// Exhaustive scan of `c ∈ {h, 2h, …}` returning the information maximizer
    /// subject to `spend ≤ B`; ties go to the smaller `c`.
    ///
    /// The scan stops at `n · μ_1(0) / B`, where the spend bound guarantees
    /// feasibility, or at the support-exhaustion point when that is smaller.
    pub fn grid_oracle(&self, grid_step: f64) -> Result<SolvedAllocator> {
        check_positive("grid step", grid_step)?;
        let points = self.scan(&self.oracle_grid(grid_step))?;
        let c = match information_argmax(&points, self.budget) {
            Some(i) => points[i].c,
            None => points.last().map(|p| p.c).unwrap_or(grid_step),
        };
        self.evaluate(c)
    }

    /// The `c` grid used by [`grid_oracle`](Self::grid_oracle).
    pub fn oracle_grid(&self, grid_step: f64) -> Vec<f64> {
        let mut c_max = self.n() as f64 * self.family.peak_offer_scale() / self.budget;
        let min_price = self
            .reported_prices
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_price > 0.0 {
            c_max = c_max.min(self.family.support_scale() / min_price);
        }
        let steps = (c_max / grid_step).ceil().max(1.0) as usize;
        (1..=steps).map(|k| k as f64 * grid_step).collect()
    }
}

/// Index of the point with the most information among those with
/// `spend ≤ budget`; ties go to the earliest point.
pub fn information_argmax(points: &[GridPoint], budget: f64) -> Option<usize> {
    argmax_feasible(points, budget, |p| p.information)
}

/// Index of the feasible point maximizing `objective`; ties go to the earliest point.
pub fn argmax_feasible(
    points: &[GridPoint],
    budget: f64,
    objective: impl Fn(&GridPoint) -> f64,
) -> Option<usize> {
    let limit = budget * (1.0 + GRID_FEASIBILITY_SLACK);
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if p.spend > limit {
            continue;
        }
        let v = objective(p);
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
