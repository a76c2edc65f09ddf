mod common;

use datamarket::optimizer::{argmax_feasible, information_argmax};
use datamarket::{BudgetProblem, Family};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Log), Just(Family::Linear)]
}

fn prices(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0, Just(2.0)], 1..=max_len)
}

/// A budget in `[n·peak/4, 2·n·peak]`, which keeps the oracle grid short.
fn problem() -> impl Strategy<Value = BudgetProblem> {
    (family(), prices(30), 0.25f64..2.0).prop_map(|(family, prices, u)| {
        let budget = u * prices.len() as f64 * family.peak_offer_scale();
        BudgetProblem::new(family, prices, budget).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spend_is_non_increasing(family in family(), prices in prices(40), c1 in 0.01f64..10.0, dc in 0.0f64..5.0) {
        let p = BudgetProblem::new(family, prices, 1.0).unwrap();
        let a = p.spend_at(c1).unwrap();
        let b = p.spend_at(c1 + dc).unwrap();
        prop_assert!(b <= a + 1e-12 * a.max(1.0));
        if dc > 0.0 && b > 0.0 {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn solver_meets_budget(p in problem()) {
        let solved = p.solve().unwrap();
        let b = p.budget();
        prop_assert!(solved.spent <= b + 1e-6);
        prop_assert!((solved.spent - b).abs() <= 1e-6 * b.max(1.0));
        prop_assert!(solved.allocator.c() > 0.0);
    }

    #[test]
    fn solver_agrees_with_grid_oracle(p in problem()) {
        let h = 1e-3;
        let solved = p.solve().unwrap();
        let oracle = p.grid_oracle(h).unwrap();
        prop_assert!(
            (solved.allocator.c() - oracle.allocator.c()).abs() <= h,
            "solver {} vs oracle {}", solved.allocator.c(), oracle.allocator.c()
        );
    }

    #[test]
    fn more_supply_never_lowers_c(family in family(), prices in prices(20), budget in 0.5f64..20.0) {
        let single = BudgetProblem::new(family, prices.clone(), budget).unwrap().solve().unwrap();
        let doubled: Vec<f64> = prices.iter().chain(&prices).copied().collect();
        let double = BudgetProblem::new(family, doubled, budget).unwrap().solve().unwrap();
        let c1 = single.allocator.c();
        let c2 = double.allocator.c();
        prop_assert!(c2 >= c1 * (1.0 - 1e-9), "c went from {c1} to {c2}");
    }

    #[test]
    fn information_argmax_is_smallest_feasible_c(p in problem()) {
        let grid: Vec<f64> = (1..=400).map(|k| k as f64 * 0.01).collect();
        let points = p.scan(&grid).unwrap();
        if let Some(i) = information_argmax(&points, p.budget()) {
            prop_assert!(points[i].spend <= p.budget() * (1.0 + 1e-12));
            for q in &points[..i] {
                prop_assert!(q.spend > p.budget() || q.information <= points[i].information);
            }
        }
    }
}

#[test]
fn linear_closed_form_matches_bisection_oracle() {
    // All prices inside the support, so the quadratic applies directly.
    let p = BudgetProblem::new(Family::Linear, vec![0.2, 0.4, 0.6], 1.0).unwrap();
    let closed = p.solve_linear().unwrap().allocator.c();
    let grid = p.grid_oracle(1e-5).unwrap().allocator.c();
    assert!((closed - grid).abs() <= 1e-5);
    assert!(closed * 0.6 <= 1.0);
}

#[test]
fn argmax_feasible_ignores_infeasible_points() {
    let p = BudgetProblem::new(Family::Log, vec![0.5, 1.0, 1.5], 1.0).unwrap();
    let points = p.scan(&[0.5, 1.0, 2.0, 4.0]).unwrap();
    let i = argmax_feasible(&points, 1.0, |q| q.information).unwrap();
    assert!(points[i].spend <= 1.0);
    assert!(points[..i].iter().all(|q| q.spend > 1.0));
}
