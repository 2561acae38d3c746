// SPDX-License-Identifier: Apache-2.0

//! Unbiased pass@k estimator.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("pass@k domain error: {0}")]
pub struct DomainError(pub String);

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // exact at each step: acc * (n - i) is divisible by (i + 1)
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `num / den` as f64, scaling both down together when they are too large
/// for a direct conversion.
fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    let shift = den.bits().saturating_sub(1000);
    let (n, d) = if shift > 0 {
        (num >> shift, den >> shift)
    } else {
        (num.clone(), den.clone())
    };
    n.to_f64().unwrap_or(f64::INFINITY) / d.to_f64().unwrap_or(f64::INFINITY)
}

/// `1 - C(n - c, k) / C(n, k)`, with `C(a, k) = 0` for `a < k`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, DomainError> {
    if c > n {
        return Err(DomainError(format!("successes {c} exceed generations {n}")));
    }
    if k < 1 || k > n {
        return Err(DomainError(format!("k={k} must lie in [1, {n}]")));
    }
    let total = binomial(n, k);
    let misses = binomial(n - c, k);
    Ok(ratio(&(&total - &misses), &total))
}

/// Trial outcomes for one benchmark configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialLedger {
    pub outcomes: Vec<bool>,
}

impl TrialLedger {
    pub fn record(&mut self, success: bool) {
        self.outcomes.push(success);
    }

    pub fn n(&self) -> u64 {
        self.outcomes.len() as u64
    }

    pub fn successes(&self) -> u64 {
        self.outcomes.iter().filter(|&&s| s).count() as u64
    }

    pub fn pass_at(&self, k: u64) -> Result<f64, DomainError> {
        pass_at_k(self.n(), self.successes(), k)
    }
}
