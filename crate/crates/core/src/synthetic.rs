//! Synthetic households for tests, demos and benchmarks.
//!
//! Five seasonal archetypes: one day-heavy winter-peaking profile, three
//! night-heavy variants and one balanced profile whose night use overtakes
//! day use in winter. Users are archetype shapes scaled by a random annual
//! total with multiplicative lognormal noise on every (month, slot) cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::features::{SlotUsage, MONTHS, PROFILE_LEN};
use crate::ingest::{AnalysisWindow, Mprn, RawReading, ReadType};

pub const ARCHETYPES: usize = 5;

struct Archetype {
    /// Amplitude of the seasonal swing in monthly totals (peaks in January).
    winter_swing: f64,
    /// (day, night, peak) shares at the seasonal midpoint.
    shares: [f64; 3],
    /// Shift of share from day to night at the height of winter.
    winter_night_shift: f64,
}

const SHAPES: [Archetype; ARCHETYPES] = [
    Archetype { winter_swing: 0.40, shares: [0.66, 0.24, 0.10], winter_night_shift: 0.0 },
    Archetype { winter_swing: 0.70, shares: [0.34, 0.60, 0.06], winter_night_shift: 0.16 },
    Archetype { winter_swing: 0.00, shares: [0.22, 0.72, 0.06], winter_night_shift: 0.0 },
    Archetype { winter_swing: -0.15, shares: [0.36, 0.56, 0.08], winter_night_shift: -0.14 },
    Archetype { winter_swing: 0.30, shares: [0.48, 0.40, 0.12], winter_night_shift: 0.12 },
];

/// +1 in January, -1 in July, for a window starting in May.
fn winterness(month_index: usize) -> f64 {
    ((month_index as f64 - 8.0) * std::f64::consts::PI / 6.0).cos()
}

/// The five archetype profiles as 36-entry vectors summing to 1.
pub fn archetype_centroids() -> Vec<Vec<f64>> {
    SHAPES
        .iter()
        .map(|a| {
            let mut v = Vec::with_capacity(PROFILE_LEN);
            for m in 0..MONTHS {
                let s = winterness(m);
                let weight = 1.0 + a.winter_swing * s;
                let shift = a.winter_night_shift * s;
                v.extend([
                    weight * (a.shares[0] - shift),
                    weight * (a.shares[1] + shift),
                    weight * a.shares[2],
                ]);
            }
            let total: f64 = v.iter().sum();
            v.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub mprn: Mprn,
    pub archetype: usize,
    /// All twelve months, in order.
    pub usages: Vec<SlotUsage>,
}

/// `per_archetype` users of every archetype, generator labels in `archetype`.
pub fn archetype_cohort(per_archetype: usize, noise_sigma: f64, seed: u64) -> Vec<SyntheticUser> {
    let centroids = archetype_centroids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = LogNormal::new(0.0, noise_sigma).expect("valid sigma");
    let annual = LogNormal::new(5000f64.ln(), 0.4).expect("valid sigma");
    let mut users = Vec::with_capacity(per_archetype * ARCHETYPES);
    for (a, centroid) in centroids.iter().enumerate() {
        for i in 0..per_archetype {
            let total = annual.sample(&mut rng);
            let usages = (0..MONTHS)
                .map(|m| {
                    SlotUsage::new(
                        m,
                        std::array::from_fn(|s| centroid[m * 3 + s] * total * noise.sample(&mut rng)),
                    )
                })
                .collect();
            users.push(SyntheticUser {
                mprn: synthetic_mprn(a * 100_000 + i),
                archetype: a,
                usages,
            });
        }
    }
    users
}

pub fn synthetic_mprn(n: usize) -> Mprn {
    format!("1{:010}", n).parse().expect("11 digits")
}

/// Half-hourly Import readings that reproduce the given monthly slot totals
/// (to the 1 W resolution of HDF values). Months absent from `usages` get no
/// readings.
pub fn readings_for_usage(mprn: &Mprn, window: &AnalysisWindow, usages: &[SlotUsage]) -> Vec<RawReading> {
    let mut out = Vec::new();
    for u in usages {
        let start = window.month_start(u.month_index);
        let days = window.days_in_month(u.month_index) as f64;
        let n = window.days_in_month(u.month_index) as i64 * 48;
        for i in 0..n {
            let interval_start = start + chrono::Duration::minutes(30 * i);
            let slot = crate::features::slot_of(interval_start.time());
            let intervals = days * f64::from(slot.hours()) * 2.0;
            // average kW over the interval, rounded to whole watts
            let kw = (u.kwh(slot) / intervals / 0.5 * 1000.0).round() / 1000.0;
            out.push(RawReading {
                mprn: mprn.clone(),
                value: kw,
                read_type: ReadType::Import,
                timestamp: interval_start + chrono::Duration::minutes(30),
            });
        }
    }
    out
}

/// A full window of random Import readings plus an Export reading every
/// `export_every` intervals (0 for none).
pub fn random_year(mprn: &Mprn, window: &AnalysisWindow, export_every: usize, seed: u64) -> Vec<RawReading> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let intervals = (window.end() - window.start()).num_minutes() / 30;
    let mut out = Vec::new();
    for i in 0..intervals {
        let timestamp = window.start() + chrono::Duration::minutes(30 * i);
        out.push(RawReading {
            mprn: mprn.clone(),
            value: rng.gen_range(0..4000u32) as f64 / 1000.0,
            read_type: ReadType::Import,
            timestamp,
        });
        if export_every > 0 && (i as usize).is_multiple_of(export_every) {
            out.push(RawReading {
                mprn: mprn.clone(),
                value: rng.gen_range(0..2000u32) as f64 / 1000.0,
                read_type: ReadType::Export,
                timestamp,
            });
        }
    }
    out
}
