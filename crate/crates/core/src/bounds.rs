//! Closed-form performance bounds for the drift-plus-penalty scheduler.

use ndarray::Array2;

use crate::model::{AgeDriftWeight, SystemConfig};
use crate::region::{epsilon_of_lambda, in_subset, ArrivalMatrix, DEFAULT_EPSILON_TOL};
use crate::{Error, Result};

/// `E[c^2] = lambda + lambda^2` for Poisson arrivals.
pub fn poisson_second_moments(lambda: &ArrivalMatrix) -> Array2<f64> {
    lambda.as_array().mapv(|l| l + l * l)
}

/// Drift constant `C = 1/2 sum lambda E[c^2] + 1/2 max_{m,k} lambda ceil(N/k)^2`.
pub fn constant_c(lambda: &ArrivalMatrix, second_moments: &Array2<f64>, slots: usize) -> Result<f64> {
    if second_moments.dim() != lambda.as_array().dim() {
        return Err(Error::Parameter(format!(
            "second moments are {:?}, lambda is {:?}",
            second_moments.dim(),
            lambda.as_array().dim()
        )));
    }
    let arrival_term: f64 = lambda
        .as_array()
        .iter()
        .zip(second_moments.iter())
        .map(|(l, s)| l * s)
        .sum();
    let service_term = lambda
        .as_array()
        .indexed_iter()
        .map(|((_, j), &l)| {
            let burst = (slots as f64 / (j + 1) as f64).ceil();
            l * burst * burst
        })
        .fold(0.0, f64::max);
    Ok(0.5 * arrival_term + 0.5 * service_term)
}

/// `M * Kbar * max_{m,k}(lambda + eps)`.
pub fn default_v0(lambda: &ArrivalMatrix, epsilon: f64) -> f64 {
    (lambda.sources() * lambda.max_cost()) as f64 * (lambda.max_entry() + epsilon)
}

/// `eps(lambda)` inside the inner region, zero outside it.
pub fn epsilon_or_zero(lambda: &ArrivalMatrix, slots: usize, khat: u32) -> f64 {
    if in_subset(lambda, slots, khat) {
        epsilon_of_lambda(lambda, slots, khat, DEFAULT_EPSILON_TOL).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// The age-drift weight a configuration actually uses.
pub fn resolve_drift_weight(config: &SystemConfig, khat: u32) -> Result<f64> {
    match config.drift_weight {
        AgeDriftWeight::Fixed(v0) => Ok(v0),
        AgeDriftWeight::Auto => {
            let eps = epsilon_or_zero(&config.arrivals, config.slots, khat);
            let v0 = default_v0(&config.arrivals, eps);
            if v0 > 0.0 {
                Ok(v0)
            } else {
                Err(Error::Config(
                    "V0 = auto resolves to 0 for this lambda; set V0 explicitly".into(),
                ))
            }
        }
    }
}

fn check_load(lambda: &ArrivalMatrix) -> Result<f64> {
    let total = lambda.total();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::Domain("bounds need a positive total arrival rate".into()))
    }
}

/// Average-AoI bound: `(max(lambda + eps) M^2 Kbar + sum lambda + C/V) / sum lambda`.
pub fn aoi_upper_bound(lambda: &ArrivalMatrix, epsilon: f64, c: f64, tradeoff: f64) -> Result<f64> {
    let total = check_load(lambda)?;
    if !(tradeoff > 0.0) {
        return Err(Error::Domain(format!("AoI bound needs V > 0, got {tradeoff}")));
    }
    let m = lambda.sources() as f64;
    let kbar = lambda.max_cost() as f64;
    let peak = lambda.max_entry() + epsilon;
    Ok((peak * m * m * kbar + total + c / tradeoff) / total)
}

/// Average-delay bound:
/// `((max(lambda + eps) M^2 Kbar + sum(lambda + eps)) V + C) / (eps sum lambda) + 1`,
/// infinite when `eps = 0`.
pub fn delay_upper_bound(lambda: &ArrivalMatrix, epsilon: f64, c: f64, tradeoff: f64) -> Result<f64> {
    let total = check_load(lambda)?;
    if epsilon <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let m = lambda.sources() as f64;
    let kbar = lambda.max_cost() as f64;
    let peak = lambda.max_entry() + epsilon;
    let inflated_total = total + m * kbar * epsilon;
    Ok(((peak * m * m * kbar + inflated_total) * tradeoff + c) / (epsilon * total) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub tradeoff: f64,
    pub c: f64,
    pub v0: f64,
    pub epsilon: f64,
    pub aoi_bound: f64,
    pub delay_bound: f64,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "V,C,V0,epsilon,aoi_bound,delay_bound";

    /// Bounds for Poisson arrivals at tradeoff weight `tradeoff`.
    pub fn evaluate(config: &SystemConfig, khat: u32, tradeoff: f64) -> Result<Self> {
        let lambda = &config.arrivals;
        let epsilon = epsilon_or_zero(lambda, config.slots, khat);
        let c = constant_c(lambda, &poisson_second_moments(lambda), config.slots)?;
        let v0 = match config.drift_weight {
            AgeDriftWeight::Fixed(v) => v,
            AgeDriftWeight::Auto => default_v0(lambda, epsilon),
        };
        Ok(Self {
            tradeoff,
            c,
            v0,
            epsilon,
            aoi_bound: aoi_upper_bound(lambda, epsilon, c, tradeoff)?,
            delay_bound: delay_upper_bound(lambda, epsilon, c, tradeoff)?,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.tradeoff, self.c, self.v0, self.epsilon, self.aoi_bound, self.delay_bound
        )
    }
}
