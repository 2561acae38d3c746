// SPDX-License-Identifier: Apache-2.0

//! Code selection among repair attempts.

use super::{DebugAttempt, Objective};

/// Minimum objective among passing attempts; otherwise fewest failed
/// cases. Ties go to the lowest thread index. Panics on an empty slice.
pub fn select_best(attempts: &[DebugAttempt], objective: Objective) -> &DebugAttempt {
    assert!(
        !attempts.is_empty(),
        "select_best needs at least one attempt"
    );
    let passing = attempts.iter().filter_map(|a| {
        a.ppa
            .filter(|_| a.report.passed)
            .map(|p| (a, objective.value(&p)))
    });
    let best_pass = passing.fold(None::<(&DebugAttempt, f64)>, |best, (a, v)| match best {
        Some((b, bv)) if bv < v || (bv == v && b.thread_index < a.thread_index) => Some((b, bv)),
        _ => Some((a, v)),
    });
    if let Some((a, _)) = best_pass {
        return a;
    }
    attempts
        .iter()
        .min_by_key(|a| (a.report.failed_cases, a.thread_index))
        .expect("non-empty")
}
