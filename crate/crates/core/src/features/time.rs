//! Mapping timestamps onto the circle.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Days, FixedOffset, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

/// Circular view of a timestamp: fraction of the day, week or month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Day,
    Week,
    Month,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Period::Day => "day",
            Period::Week => "week",
            Period::Month => "month",
        })
    }
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Period::Day),
            "week" => Ok(Period::Week),
            "month" => Ok(Period::Month),
            other => Err(format!("unknown period {other:?}; expected day, week or month")),
        }
    }
}

/// Angle in [0, 2π) proportional to the local time elapsed since the start
/// of the period. Weeks start on Monday; months use their true calendar
/// length.
pub fn timestamp_to_angle(ts: DateTime<FixedOffset>, period: Period, tz: FixedOffset) -> f64 {
    let local = ts.with_timezone(&tz).naive_local();
    let second_of_day =
        local.num_seconds_from_midnight() as f64 + local.nanosecond() as f64 / 1e9;
    let fraction = match period {
        Period::Day => second_of_day / 86_400.0,
        Period::Week => {
            let days = local.weekday().num_days_from_monday() as f64;
            (days * 86_400.0 + second_of_day) / (7.0 * 86_400.0)
        }
        Period::Month => {
            let days_in_month = month_length_days(local.date());
            let elapsed = (local.day0()) as f64 * 86_400.0 + second_of_day;
            elapsed / (days_in_month as f64 * 86_400.0)
        }
    };
    (fraction * TAU).rem_euclid(TAU)
}

fn month_length_days(date: NaiveDate) -> u32 {
    let first = date.with_day(1).expect("day 1 exists");
    let next = first
        .checked_add_days(Days::new(32))
        .and_then(|d| d.with_day(1))
        .expect("next month exists");
    (next - first).num_days() as u32
}
