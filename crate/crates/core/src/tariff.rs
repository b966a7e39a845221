//! Fixed and time-of-use tariff plans, annual bills and plan ranking.
//!
//! Money is held as exact decimals; the only rounding is of the bill total to
//! whole cents, half away from zero.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rust_decimal::prelude::FromPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use thiserror::Error;

use crate::features::{Slot, SlotUsage, MONTHS, SLOTS};

#[derive(Debug, Error, PartialEq)]
pub enum TariffError {
    #[error("missing or unexpected header, expected \"{expected}\"")]
    BadHeader { expected: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("no tariff plans to rank")]
    NoPlans,
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for TariffError {
    fn from(e: csv::Error) -> Self {
        TariffError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanKind {
    Fixed,
    DayNight,
    SmartToU,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::Fixed => "Fixed",
            PlanKind::DayNight => "DayNight",
            PlanKind::SmartToU => "SmartToU",
        }
    }
}

impl FromStr for PlanKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Fixed" => Ok(PlanKind::Fixed),
            "DayNight" => Ok(PlanKind::DayNight),
            "SmartToU" => Ok(PlanKind::SmartToU),
            _ => Err(format!("unknown plan kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Locality {
    Urban,
    Rural,
}

impl Locality {
    pub fn as_str(self) -> &'static str {
        match self {
            Locality::Urban => "Urban",
            Locality::Rural => "Rural",
        }
    }
}

impl fmt::Display for Locality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Locality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "urban" => Ok(Locality::Urban),
            "rural" => Ok(Locality::Rural),
            _ => Err(format!("unknown locality {s:?} (expected urban or rural)")),
        }
    }
}

/// A supplier plan. Rates are €/kWh, standing charges €/year.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TariffPlan {
    pub supplier: String,
    pub plan_name: String,
    pub kind: PlanKind,
    pub rate_day: Decimal,
    pub rate_night: Decimal,
    pub rate_peak: Decimal,
    pub standing_urban: Decimal,
    pub standing_rural: Decimal,
}

impl TariffPlan {
    pub fn rate(&self, slot: Slot) -> Decimal {
        match slot {
            Slot::Day => self.rate_day,
            Slot::Night => self.rate_night,
            Slot::Peak => self.rate_peak,
        }
    }

    pub fn standing(&self, locality: Locality) -> Decimal {
        match locality {
            Locality::Urban => self.standing_urban,
            Locality::Rural => self.standing_rural,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if Slot::ALL.iter().any(|&s| self.rate(s) <= Decimal::ZERO) {
            return Err("all unit rates must be positive".into());
        }
        if self.standing_urban < Decimal::ZERO || self.standing_rural < Decimal::ZERO {
            return Err("standing charges must not be negative".into());
        }
        match self.kind {
            PlanKind::Fixed if self.rate_day != self.rate_night || self.rate_day != self.rate_peak => {
                Err("Fixed plan must charge one rate in every slot".into())
            }
            PlanKind::DayNight if self.rate_peak != self.rate_day => {
                Err("DayNight plan must bill peak at the day rate".into())
            }
            _ => Ok(()),
        }
    }
}

pub const TARIFF_HEADER: [&str; 8] = [
    "supplier",
    "plan_name",
    "kind",
    "rate_day",
    "rate_night",
    "rate_peak",
    "standing_urban",
    "standing_rural",
];

/// Parses and validates a tariff catalog. The first bad row is reported with
/// its line number.
pub fn parse_tariffs(text: &str) -> Result<Vec<TariffPlan>, TariffError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(TARIFF_HEADER) {
        return Err(TariffError::BadHeader {
            expected: TARIFF_HEADER.join(","),
        });
    }
    let mut plans = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| TariffError::Row { line, message };
        if rec.len() != TARIFF_HEADER.len() {
            return Err(fail(format!("expected 8 fields, found {}", rec.len())));
        }
        let money = |i: usize| {
            Decimal::from_str(rec[i].trim())
                .map_err(|_| fail(format!("bad {} {:?}", TARIFF_HEADER[i], &rec[i])))
        };
        let plan = TariffPlan {
            supplier: rec[0].trim().to_owned(),
            plan_name: rec[1].trim().to_owned(),
            kind: rec[2].trim().parse().map_err(fail)?,
            rate_day: money(3)?,
            rate_night: money(4)?,
            rate_peak: money(5)?,
            standing_urban: money(6)?,
            standing_rural: money(7)?,
        };
        plan.validate().map_err(fail)?;
        plans.push(plan);
    }
    Ok(plans)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BillEstimate {
    pub plan: TariffPlan,
    pub locality: Locality,
    /// Exact, unrounded.
    pub energy_cost: Decimal,
    pub standing_cost: Decimal,
    /// `energy_cost + standing_cost` rounded to cents.
    pub total: Decimal,
    /// Annual kWh per slot, indexed by [`Slot::index`].
    pub per_slot_kwh: [f64; SLOTS],
}

fn kwh_decimal(kwh: f64) -> Decimal {
    Decimal::from_f64(kwh).unwrap_or(Decimal::ZERO)
}

pub fn round_cents(amount: Decimal) -> Decimal {
    amount.round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero)
}

/// Annual cost of a completed year of usage on one plan.
pub fn annual_bill(completed: &[SlotUsage; MONTHS], plan: &TariffPlan, locality: Locality) -> BillEstimate {
    let mut per_slot_kwh = [0.0; SLOTS];
    for u in completed {
        for s in Slot::ALL {
            per_slot_kwh[s.index()] += u.kwh(s);
        }
    }
    let energy_cost: Decimal = Slot::ALL
        .iter()
        .map(|&s| plan.rate(s) * kwh_decimal(per_slot_kwh[s.index()]))
        .sum();
    let standing_cost = plan.standing(locality);
    BillEstimate {
        plan: plan.clone(),
        locality,
        energy_cost,
        standing_cost,
        total: round_cents(energy_cost + standing_cost),
        per_slot_kwh,
    }
}

fn bill_order(a: &BillEstimate, b: &BillEstimate) -> Ordering {
    a.total
        .cmp(&b.total)
        .then_with(|| a.plan.supplier.cmp(&b.plan.supplier))
        .then_with(|| a.plan.plan_name.cmp(&b.plan.plan_name))
}

/// Bills for every plan, cheapest first; equal totals order by supplier then
/// plan name.
pub fn rank_plans(
    completed: &[SlotUsage; MONTHS],
    plans: &[TariffPlan],
    locality: Locality,
) -> Result<Vec<BillEstimate>, TariffError> {
    if plans.is_empty() {
        return Err(TariffError::NoPlans);
    }
    let mut bills: Vec<BillEstimate> = plans.iter().map(|p| annual_bill(completed, p, locality)).collect();
    bills.sort_by(bill_order);
    Ok(bills)
}

const BILL_HEADER: [&str; 7] = [
    "supplier",
    "plan_name",
    "kind",
    "locality",
    "energy_eur",
    "standing_eur",
    "total_eur",
];

/// Writes a ranked bill report; `total_eur` always carries two decimals.
pub fn write_bill_csv<W: std::io::Write>(writer: W, bills: &[BillEstimate]) -> Result<(), TariffError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BILL_HEADER)?;
    for b in bills {
        w.write_record([
            b.plan.supplier.as_str(),
            &b.plan.plan_name,
            b.plan.kind.as_str(),
            b.locality.as_str(),
            &b.energy_cost.normalize().to_string(),
            &b.standing_cost.normalize().to_string(),
            &format!("{:.2}", b.total),
        ])?;
    }
    w.flush().map_err(|e| TariffError::Csv(e.to_string()))?;
    Ok(())
}
