//! Injectable time source. Article ages and market horizons are always
//! measured against a [`Clock`], never against the wall clock directly.

use chrono::{DateTime, NaiveDate, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;

    /// Age of `at` in fractional days; negative when `at` lies in the future.
    fn age_days(&self, at: DateTime<Utc>) -> f64 {
        (self.now() - at).num_milliseconds() as f64 / 86_400_000.0
    }

    /// Whole calendar days from today until `date`.
    fn days_until(&self, date: NaiveDate) -> i64 {
        (date - self.now().date_naive()).num_days()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedClock(pub DateTime<Utc>);

impl FixedClock {
    /// A clock frozen at the end (23:59:59 UTC) of `date`.
    pub fn end_of_day(date: NaiveDate) -> Self {
        let at = date.and_hms_opt(23, 59, 59).expect("valid time");
        FixedClock(Utc.from_utc_datetime(&at))
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}
