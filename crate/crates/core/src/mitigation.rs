//! Delay-only release schedules applied to recorded traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceSet;

/// Slots per epoch before the double scheme declares a miss.
pub const SLOT_BUDGET: u32 = 64;
pub const DEFAULT_T0: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MitigationScheme {
    /// Release at the next multiple of `q`.
    Quantize { q: f64 },
    /// Epoch-doubling predictive schedule starting at `t0`.
    DoubleScheme {
        #[serde(default = "default_t0")]
        t0: f64,
    },
}

fn default_t0() -> f64 {
    DEFAULT_T0
}

impl MitigationScheme {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            MitigationScheme::Quantize { q } => ("q", q),
            MitigationScheme::DoubleScheme { t0 } => ("t0", t0),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
        }
        Ok(())
    }
}

/// Smallest positive multiple of `q` not below `t`: `q * max(1, ceil(t / q))`.
pub fn quantize(t: f64, q: f64) -> f64 {
    let mut m = (t / q).ceil().max(1.0);
    // Guard against t / q rounding down across a slot boundary. `next_up`
    // keeps the loop finite once `m + 1` is no longer representable.
    while q * m < t {
        m = (m + 1.0).max(m.next_up());
    }
    q * m
}

/// Smallest multiple of `step` that is `>= t`.
fn ceil_to(t: f64, step: f64) -> f64 {
    let mut m = (t / step).ceil();
    while step * m < t {
        m = (m + 1.0).max(m.next_up());
    }
    step * m
}

/// Runs the double scheme over `times` in the given order.
///
/// In epoch `N` with start `t_N` the slots are `t_N + i * 2^N` for
/// `0 <= i <= SLOT_BUDGET`. A time beyond the last slot is a miss: the epoch
/// advances and restarts at the first multiple of the new spacing not below
/// the time, which is also its release time.
pub fn double_scheme(times: &[f64], t0: f64) -> Vec<f64> {
    let mut epoch: i32 = 0;
    let mut start = t0;
    times
        .iter()
        .map(|&t| {
            let width = 2f64.powi(epoch);
            let mut i = ((t - start) / width).ceil().max(0.0);
            while start + i * width < t {
                i = (i + 1.0).max(i.next_up());
            }
            if i <= SLOT_BUDGET as f64 {
                return start + i * width;
            }
            epoch += 1;
            start = ceil_to(t, 2f64.powi(epoch));
            start
        })
        .collect()
}

/// Applies `scheme` to every trace time. The double scheme runs once per
/// secret, over that secret's traces in ascending public order.
pub fn mitigate_traces(traces: &TraceSet, scheme: &MitigationScheme) -> Result<TraceSet> {
    scheme.validate()?;
    let mut records = traces.records().to_vec();
    match *scheme {
        MitigationScheme::Quantize { q } => {
            for r in &mut records {
                r.time = quantize(r.time, q);
            }
        }
        MitigationScheme::DoubleScheme { t0 } => {
            let mut by_secret: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
            for (i, r) in records.iter().enumerate() {
                let key = r.secret.iter().map(|x| (x + 0.0).to_bits()).collect();
                by_secret.entry(key).or_default().push(i);
            }
            for idx in by_secret.values_mut() {
                idx.sort_by(|&a, &b| records[a].public.total_cmp(&records[b].public).then(a.cmp(&b)));
                let times: Vec<f64> = idx.iter().map(|&i| records[i].time).collect();
                for (&i, t) in idx.iter().zip(double_scheme(&times, t0)) {
                    records[i].time = t;
                }
            }
        }
    }
    traces.with_records(records)
}
