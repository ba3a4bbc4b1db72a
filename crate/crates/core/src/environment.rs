//! Resource dynamics: simultaneous catch, depletion and logistic regrowth.

use crate::config::Rationing;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestResult {
    pub harvests: Vec<f64>,
    pub stock_post: f64,
}

impl HarvestResult {
    pub fn total(&self) -> f64 {
        self.harvests.iter().sum()
    }
}

/// Catch `α·e_i·R` for every agent, then deplete the stock.
///
/// With [`Rationing::Proportional`], demand above the stock scales every catch
/// by `R / Σh` so the realized total equals the stock exactly.
pub fn compute_harvests(efforts: &[f64], productivity: f64, stock: f64, rationing: Rationing) -> Result<HarvestResult> {
    if !(stock >= 0.0) {
        return Err(Error::Precondition(format!("stock must be >= 0, got {stock}")));
    }
    if let Some(e) = efforts.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::Precondition(format!("effort must lie in [0, 1], got {e}")));
    }

    let mut harvests: Vec<f64> = efforts.iter().map(|e| productivity * e * stock).collect();
    let demand: f64 = harvests.iter().sum();
    if demand > stock && rationing == Rationing::Proportional {
        let scale = stock / demand;
        for h in &mut harvests {
            *h *= scale;
        }
        return Ok(HarvestResult {
            harvests,
            stock_post: 0.0,
        });
    }
    Ok(HarvestResult {
        harvests,
        stock_post: (stock - demand).max(0.0),
    })
}

/// Discrete logistic step `R⁺ + r·R⁺·(1 − R⁺/K)`, clamped to `[0, K]`.
pub fn regenerate(stock_post: f64, growth_rate: f64, carrying_capacity: f64) -> f64 {
    let next = stock_post + growth_rate * stock_post * (1.0 - stock_post / carrying_capacity);
    next.clamp(0.0, carrying_capacity)
}

/// Maximum sustainable yield `rK/4`, the surplus at `R = K/2`.
pub fn msy_harvest(growth_rate: f64, carrying_capacity: f64) -> f64 {
    growth_rate * carrying_capacity / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const P: Rationing = Rationing::Proportional;

    #[test]
    fn zero_effort_takes_nothing() {
        let h = compute_harvests(&[0.0; 4], 0.05, 120.0, P).unwrap();
        assert!(h.harvests.iter().all(|&x| x == 0.0));
        assert_eq!(h.stock_post, 120.0);
    }

    #[test]
    fn single_agent_catch() {
        let h = compute_harvests(&[0.5], 0.1, 100.0, P).unwrap();
        assert_relative_eq!(h.harvests[0], 5.0, max_relative = 1e-9);
        assert_relative_eq!(h.stock_post, 95.0, max_relative = 1e-9);
    }

    #[test]
    fn over_demand_is_rationed() {
        let h = compute_harvests(&[1.0; 30], 0.05, 100.0, P).unwrap();
        for x in &h.harvests {
            assert_relative_eq!(*x, 100.0 / 30.0, max_relative = 1e-9);
        }
        assert_eq!(h.stock_post, 0.0);
        assert_relative_eq!(h.total(), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn unrationed_keeps_nominal_catch() {
        let h = compute_harvests(&[1.0; 30], 0.05, 100.0, Rationing::Unrationed).unwrap();
        assert_relative_eq!(h.harvests[0], 5.0, max_relative = 1e-9);
        assert_eq!(h.stock_post, 0.0);
    }

    #[test]
    fn preconditions() {
        assert!(compute_harvests(&[-0.1], 0.05, 10.0, P).is_err());
        assert!(compute_harvests(&[1.1], 0.05, 10.0, P).is_err());
        assert!(compute_harvests(&[0.5], 0.05, -1.0, P).is_err());
    }

    #[test]
    fn regenerate_examples() {
        assert_eq!(regenerate(0.0, 0.6, 300.0), 0.0);
        assert_eq!(regenerate(300.0, 0.6, 300.0), 300.0);
        assert_relative_eq!(regenerate(150.0, 0.6, 300.0), 195.0, max_relative = 1e-9);
    }

    #[test]
    fn msy_examples() {
        assert_relative_eq!(msy_harvest(0.6, 300.0), 45.0, max_relative = 1e-9);
        assert_eq!(msy_harvest(0.0, 300.0), 0.0);
        assert_relative_eq!(msy_harvest(0.2, 300.0), 15.0, max_relative = 1e-9);
    }

    #[test]
    fn msy_is_the_surplus_maximum() {
        // Brute-force the surplus r·R·(1 − R/K) over a fine grid.
        let (r, k) = (0.6, 300.0);
        let best = (0..=30_000)
            .map(|i| {
                let s = k * i as f64 / 30_000.0;
                r * s * (1.0 - s / k)
            })
            .fold(f64::MIN, f64::max);
        assert_relative_eq!(best, msy_harvest(r, k), max_relative = 1e-9);
    }

    #[test]
    fn msy_fixed_point_holds_exactly() {
        let (r, k) = (0.6, 300.0);
        let h_opt = msy_harvest(r, k);
        let mut stock = k / 2.0 + h_opt;
        for _ in 0..1000 {
            let post = stock - h_opt;
            assert_eq!(post, k / 2.0);
            stock = regenerate(post, r, k);
        }
    }

    proptest! {
        #[test]
        fn stock_stays_in_bounds(
            efforts in prop::collection::vec(0.0f64..=1.0, 1..20),
            alpha in 0.001f64..0.5,
            r in 0.0f64..3.0,
            k in 1.0f64..1000.0,
            frac in 0.0f64..=1.0,
        ) {
            let mut stock = k * frac;
            for _ in 0..50 {
                let h = compute_harvests(&efforts, alpha, stock, P).unwrap();
                prop_assert!(h.total() <= stock * (1.0 + 1e-12));
                prop_assert!(h.stock_post >= 0.0);
                stock = regenerate(h.stock_post, r, k);
                prop_assert!((0.0..=k).contains(&stock));
            }
        }

        #[test]
        fn regenerate_monotone_for_small_r(a in 0.0f64..=1.0, b in 0.0f64..=1.0, r in 0.0f64..=1.0, k in 1.0f64..1000.0) {
            let (lo, hi) = if a <= b { (a * k, b * k) } else { (b * k, a * k) };
            prop_assert!(regenerate(lo, r, k) <= regenerate(hi, r, k));
        }

        #[test]
        fn harvests_are_permutation_equivariant(
            efforts in prop::collection::vec(0.0f64..=1.0, 2..12),
            stock in 0.0f64..500.0,
            rot in 0usize..12,
        ) {
            let rot = rot % efforts.len();
            let mut rotated = efforts.clone();
            rotated.rotate_left(rot);
            let a = compute_harvests(&efforts, 0.2, stock, P).unwrap();
            let b = compute_harvests(&rotated, 0.2, stock, P).unwrap();
            let mut expect = a.harvests.clone();
            expect.rotate_left(rot);
            for (x, y) in expect.iter().zip(&b.harvests) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
