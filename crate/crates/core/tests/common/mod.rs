//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use datamarket::provider::{capacity_units, weight_units};
use datamarket::{ConsumerId, ConsumerQuote, EpsilonAllocator, Family};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// The allocator formula written out directly from its definition.
pub fn f_direct(family: Family, c: f64, z: f64) -> f64 {
    match family {
        Family::Linear => (1.0 - c * z).max(0.0),
        Family::Log => {
            let w = std::f64::consts::E - c * z;
            if w > 1.0 {
                w.ln()
            } else {
                0.0
            }
        }
    }
}

/// `μ(p) = p·f(p) + ∫_p^∞ f(z) dz` by quadrature; the integrand vanishes past
/// `support_scale / c`, which caps the integration range.
pub fn offer_by_quadrature(family: Family, c: f64, p: f64) -> f64 {
    let upper = match family {
        Family::Linear => 1.0 / c,
        Family::Log => (std::f64::consts::E - 1.0) / c,
    };
    let f = |z: f64| f_direct(family, c, z);
    p * f(p) + adaptive_simpson(&f, p, upper.max(p), 1e-12)
}

pub fn allocator(family: Family, c: f64) -> EpsilonAllocator {
    EpsilonAllocator::new(family, c).unwrap()
}

/// Quotes by descending consumer id, the order in which utilities are summed
/// so that float totals compare exactly with the solver's.
fn summation_order(quotes: &[ConsumerQuote]) -> Vec<ConsumerQuote> {
    let mut sorted = quotes.to_vec();
    sorted.sort_by_key(|q| std::cmp::Reverse(q.consumer_id));
    sorted
}

/// Exhaustive best utility over all subsets, with the same unit discretization.
pub fn brute_force_knapsack(quotes: &[ConsumerQuote], epsilon_total: f64, unit: f64) -> (f64, Vec<ConsumerId>) {
    let quotes = &summation_order(quotes)[..];
    let cap = capacity_units(epsilon_total, unit);
    let m = quotes.len();
    let mut best = (0.0, Vec::new(), 0usize);
    for mask in 0u32..(1 << m) {
        let mut weight = 0;
        let mut utility = 0.0;
        let mut ids = Vec::new();
        for (i, q) in quotes.iter().enumerate() {
            if mask & (1 << i) != 0 && q.epsilon_requested > 0.0 {
                weight += weight_units(q.epsilon_requested, unit);
                utility += q.utility;
                ids.push(q.consumer_id);
            }
        }
        if weight > cap {
            continue;
        }
        ids.sort();
        let better = utility > best.0
            || (utility == best.0 && (weight < best.2 || (weight == best.2 && ids < best.1)));
        if better {
            best = (utility, ids, weight);
        }
    }
    (best.0, best.1)
}

/// Utility of a selection, summed in the same order as the oracle.
pub fn selection_utility(quotes: &[ConsumerQuote], selected: &[ConsumerId]) -> f64 {
    summation_order(quotes)
        .iter()
        .filter(|q| selected.contains(&q.consumer_id) && q.epsilon_requested > 0.0)
        .map(|q| q.utility)
        .sum()
}

pub fn selection_epsilon(quotes: &[ConsumerQuote], selected: &[ConsumerId]) -> f64 {
    quotes
        .iter()
        .filter(|q| selected.contains(&q.consumer_id))
        .map(|q| q.epsilon_requested)
        .sum()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Prices drawn from N(1, 1) clamped to [0, 2].
pub fn clipped_normal_prices(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let normal = Normal::new(1.0f64, 1.0).unwrap();
    (0..n).map(|_| normal.sample(rng).clamp(0.0, 2.0)).collect()
}

pub fn random_quotes(rng: &mut ChaCha8Rng, m: usize) -> Vec<ConsumerQuote> {
    (0..m)
        .map(|i| ConsumerQuote {
            consumer_id: ConsumerId(i as u32),
            epsilon_requested: rng.random_range(0.0..1.5),
            utility: rng.random_range(0.0..5.0),
        })
        .collect()
}
