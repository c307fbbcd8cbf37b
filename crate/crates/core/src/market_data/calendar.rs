use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One continuous trading session within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub open: NaiveTime,
    pub close: NaiveTime,
}

/// Session layout of a trading day and its split into equal intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    sessions: Vec<Session>,
    interval_secs: u32,
}

fn nanos_of_day(t: NaiveTime) -> i64 {
    i64::from(t.num_seconds_from_midnight()) * 1_000_000_000 + i64::from(t.nanosecond())
}

impl TradingCalendar {
    pub fn new(sessions: Vec<Session>, interval_secs: u32) -> Result<Self> {
        if interval_secs == 0 {
            return Err(Error::InvalidConfig("interval length must be positive".into()));
        }
        if sessions.is_empty() {
            return Err(Error::InvalidConfig("calendar needs at least one session".into()));
        }
        for (k, s) in sessions.iter().enumerate() {
            if s.close <= s.open {
                return Err(Error::InvalidConfig(format!("session {k} closes before it opens")));
            }
            let secs = (s.close - s.open).num_seconds();
            if secs % i64::from(interval_secs) != 0 {
                return Err(Error::InvalidConfig(format!(
                    "session {}-{} is not a multiple of {interval_secs}s",
                    s.open, s.close
                )));
            }
            if k > 0 && s.open < sessions[k - 1].close {
                return Err(Error::InvalidConfig("sessions overlap or are unordered".into()));
            }
        }
        Ok(Self { sessions, interval_secs })
    }

    /// Shenzhen main board: 09:30-11:30 and 13:00-15:00 in 5-minute intervals.
    pub fn shenzhen() -> Self {
        Self::parse("09:30-11:30,13:00-15:00", 300).expect("static calendar")
    }

    /// Parses a session list such as `09:30-11:30,13:00-15:00`.
    pub fn parse(sessions: &str, interval_secs: u32) -> Result<Self> {
        let mut out = Vec::new();
        for part in sessions.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (a, b) = part
                .split_once('-')
                .ok_or_else(|| Error::InvalidConfig(format!("bad session `{part}`")))?;
            let parse = |s: &str| {
                NaiveTime::parse_from_str(s.trim(), "%H:%M")
                    .or_else(|_| NaiveTime::parse_from_str(s.trim(), "%H:%M:%S"))
                    .map_err(|_| Error::InvalidConfig(format!("bad time `{s}`")))
            };
            out.push(Session { open: parse(a)?, close: parse(b)? });
        }
        Self::new(out, interval_secs)
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn interval_secs(&self) -> u32 {
        self.interval_secs
    }

    /// Number of intervals `n` in one trading day.
    pub fn intervals_per_day(&self) -> usize {
        self.sessions.iter().map(|s| self.session_intervals(s)).sum()
    }

    /// Intervals covering one hour of trading time.
    pub fn intervals_per_hour(&self) -> usize {
        (3600 / self.interval_secs).max(1) as usize
    }

    fn session_intervals(&self, s: &Session) -> usize {
        ((s.close - s.open).num_seconds() / i64::from(self.interval_secs)) as usize
    }

    /// Zero-based interval holding `time`, or `None` outside every session.
    ///
    /// Buckets are left-open and right-closed, except that the session open
    /// itself belongs to the first interval of the session.
    pub fn interval_of(&self, time: NaiveTime) -> Option<usize> {
        let t = nanos_of_day(time);
        let len = i64::from(self.interval_secs) * 1_000_000_000;
        let mut offset = 0;
        for s in &self.sessions {
            let (open, close) = (nanos_of_day(s.open), nanos_of_day(s.close));
            if t == open {
                return Some(offset);
            }
            if t > open && t <= close {
                let k = (t - open + len - 1) / len - 1;
                return Some(offset + k as usize);
            }
            offset += self.session_intervals(s);
        }
        None
    }

    /// First interval whose end lies at or after `time`; `None` past the close.
    pub fn interval_at_or_after(&self, time: NaiveTime) -> Option<usize> {
        if let Some(i) = self.interval_of(time) {
            return Some(i);
        }
        let t = nanos_of_day(time);
        let mut offset = 0;
        for s in &self.sessions {
            if t < nanos_of_day(s.open) {
                return Some(offset);
            }
            offset += self.session_intervals(s);
        }
        None
    }

    /// Start and end time of zero-based interval `i`.
    pub fn interval_bounds(&self, i: usize) -> Option<(NaiveTime, NaiveTime)> {
        let mut offset = 0;
        let len = chrono::Duration::seconds(i64::from(self.interval_secs));
        for s in &self.sessions {
            let count = self.session_intervals(s);
            if i < offset + count {
                let start = s.open + len * (i - offset) as i32;
                return Some((start, start + len));
            }
            offset += count;
        }
        None
    }
}
