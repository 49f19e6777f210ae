//! Scenario generation: Poisson arrivals, truncated-exponential patience and
//! uniform values around a mean that follows a discrete geometric random
//! walk.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Offer, OfferId, Period, Side};
use crate::money::Money;

/// Share of the untruncated exponential that falls inside `[0, K]`.
const MASS_INSIDE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Patience bound K.
    pub patience: Period,
    /// Mean gap between consecutive offers, in periods.
    pub interarrival: f64,
    pub n_bids: usize,
    pub n_asks: usize,
    /// Per-period log step of the value mean.
    pub volatility_step: f64,
    pub value_mean0: f64,
    pub value_halfwidth: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            patience: 5,
            interarrival: 0.25,
            n_bids: 500,
            n_asks: 500,
            volatility_step: 0.0,
            value_mean0: 1.0,
            value_halfwidth: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("interarrival must be positive and finite, got {0}")]
    Interarrival(f64),
    #[error("volatility step must be non-negative and finite, got {0}")]
    Volatility(f64),
    #[error("value half-width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("initial value mean must be positive and finite, got {0}")]
    Mean(f64),
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.interarrival > 0.0 && self.interarrival.is_finite()) {
            return Err(ScenarioError::Interarrival(self.interarrival));
        }
        if !(self.volatility_step >= 0.0 && self.volatility_step.is_finite()) {
            return Err(ScenarioError::Volatility(self.volatility_step));
        }
        if !(self.value_halfwidth > 0.0 && self.value_halfwidth.is_finite()) {
            return Err(ScenarioError::HalfWidth(self.value_halfwidth));
        }
        if !(self.value_mean0 > 0.0 && self.value_mean0.is_finite()) {
            return Err(ScenarioError::Mean(self.value_mean0));
        }
        Ok(())
    }
}

/// Scale of the exponential whose 95% quantile is `patience`.
pub fn duration_scale(patience: Period) -> f64 {
    patience as f64 / libm::log(1.0 / (1.0 - MASS_INSIDE))
}

/// Inverse CDF of the exponential truncated to `[0, patience]`.
pub fn sample_duration(u: f64, patience: Period) -> f64 {
    let beta = duration_scale(patience);
    let d = -beta * libm::log(1.0 - MASS_INSIDE * u);
    d.clamp(0.0, patience as f64)
}

/// Analytic mean of [`sample_duration`] over `u ~ U[0, 1)`.
pub fn mean_duration(patience: Period) -> f64 {
    let beta = duration_scale(patience);
    let k = patience as f64;
    beta - k * (1.0 - MASS_INSIDE) / MASS_INSIDE
}

/// Interarrival that keeps the expected number of overlapping offers equal
/// to that of `base` under the reference patience bound.
pub fn normalized_interarrival(base: f64, patience: Period, reference: Period) -> f64 {
    if patience == 0 || reference == 0 {
        return base;
    }
    base * mean_duration(patience) / mean_duration(reference)
}

/// One step of the value mean: `mu * exp(direction * delta)`.
pub fn evolve_mean(mu: f64, up: bool, delta: f64) -> f64 {
    let step = if up { delta } else { -delta };
    mu * libm::exp(step)
}

/// Generates `n_bids + n_asks` true offer types, sorted by arrival then id.
pub fn gen_scenario(config: &ScenarioConfig, seed: u64) -> Result<Vec<Offer>, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = config.n_bids + config.n_asks;
    let mut ids: Vec<u64> = (1..=total as u64).collect();
    ids.shuffle(&mut rng);

    let (mut bids_left, mut asks_left) = (config.n_bids, config.n_asks);
    let mut clock = 0.0f64;
    let mut mu = config.value_mean0;
    let mut mu_period: Period = 0;
    let mut offers = Vec::with_capacity(total);
    for id in ids {
        let u: f64 = rng.gen();
        clock += -config.interarrival * libm::log(1.0 - u);
        let arrival = libm::floor(clock) as Period;
        while mu_period < arrival {
            mu = evolve_mean(mu, rng.gen_bool(0.5), config.volatility_step);
            mu_period += 1;
        }
        let side = if bids_left > 0 && asks_left > 0 {
            if rng.gen_bool(0.5) {
                Side::Buy
            } else {
                Side::Sell
            }
        } else if bids_left > 0 {
            Side::Buy
        } else {
            Side::Sell
        };
        match side {
            Side::Buy => bids_left -= 1,
            Side::Sell => asks_left -= 1,
        }
        let stay = libm::floor(sample_duration(rng.gen(), config.patience)) as Period;
        let depart = arrival + stay.min(config.patience);
        let low = mu - config.value_halfwidth;
        let high = mu + config.value_halfwidth;
        let magnitude = rng.gen_range(low..high).max(0.0);
        let magnitude = Money::from_f64(magnitude);
        let value = match side {
            Side::Buy => magnitude,
            Side::Sell => -magnitude,
        };
        offers.push(Offer {
            id: OfferId(id),
            arrival,
            depart,
            side,
            value,
        });
    }
    offers.sort_by_key(|o| (o.arrival, o.id));
    Ok(offers)
}
