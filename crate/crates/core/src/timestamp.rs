//! Timestamp parsing and formatting.

use chrono::{DateTime, FixedOffset, SecondsFormat, Utc};

/// Parses an ISO 8601 date-time that carries an explicit offset. Naive
/// timestamps are rejected.
pub fn parse(ts: &str) -> Option<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(ts).ok()
}

/// UTC, microsecond precision, `+00:00` offset.
pub fn format_utc(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, false)
}

pub fn now() -> String {
    format_utc(Utc::now())
}
