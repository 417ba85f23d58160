//! Check reports: per-identity status with a localized first mismatch, the
//! truncation that was used, and wall time kept apart from the deterministic payload.

use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

/// Outcome of one identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    SkippedClipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::SkippedClipped => "skipped-clipped",
        };
        write!(f, "{s}")
    }
}

/// Truncation parameters attached to a report (unused fields are omitted).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Truncation {
    pub hbar_order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_window: Option<(i64, i64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_window: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock_degree: Option<i64>,
}

impl Truncation {
    pub fn series(hbar_order: usize, x_lo: i64, x_hi: i64) -> Self {
        Self { hbar_order, x_window: Some((x_lo, x_hi)), ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityResult {
    pub identity: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_mismatch: Option<String>,
    pub compared: usize,
    pub skipped: usize,
}

impl IdentityResult {
    pub fn pass(identity: impl Into<String>, compared: usize) -> Self {
        Self { identity: identity.into(), status: Status::Pass, first_mismatch: None, compared, skipped: 0 }
    }

    pub fn fail(identity: impl Into<String>, mismatch: impl Into<String>) -> Self {
        Self {
            identity: identity.into(),
            status: Status::Fail,
            first_mismatch: Some(mismatch.into()),
            compared: 0,
            skipped: 0,
        }
    }

    /// Pass when `mismatch` is `None`, fail with the given location otherwise.
    pub fn from_mismatch(identity: impl Into<String>, mismatch: Option<String>, compared: usize) -> Self {
        match mismatch {
            None => Self::pass(identity, compared),
            Some(m) => Self { compared, ..Self::fail(identity, m) },
        }
    }

    pub fn skipped(identity: impl Into<String>, why: impl Into<String>) -> Self {
        Self {
            identity: identity.into(),
            status: Status::SkippedClipped,
            first_mismatch: Some(why.into()),
            compared: 0,
            skipped: 1,
        }
    }

    pub fn from_bool(identity: impl Into<String>, ok: bool, detail: impl FnOnce() -> String) -> Self {
        if ok {
            Self::pass(identity, 1)
        } else {
            Self::fail(identity, detail())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub datum: String,
    pub truncation: Truncation,
    pub results: Vec<IdentityResult>,
    #[serde(skip)]
    pub wall: Duration,
}

impl CheckReport {
    pub fn new(suite: impl Into<String>, datum: impl Into<String>, truncation: Truncation) -> Self {
        Self { suite: suite.into(), datum: datum.into(), truncation, results: Vec::new(), wall: Duration::ZERO }
    }

    pub fn push(&mut self, r: IdentityResult) {
        self.results.push(r);
    }

    pub fn extend(&mut self, rs: impl IntoIterator<Item = IdentityResult>) {
        self.results.extend(rs);
    }

    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.status == Status::Pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityResult> {
        self.results.iter().filter(|r| r.status == Status::Fail)
    }

    pub fn count(&self, s: Status) -> usize {
        self.results.iter().filter(|r| r.status == s).count()
    }

    /// Runs `f` and records its wall time.
    pub fn timed(mut self, f: impl FnOnce(&mut Self)) -> Self {
        let t = Instant::now();
        f(&mut self);
        self.wall = t.elapsed();
        self
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("[{}] {}\n", self.suite, self.datum);
        for r in &self.results {
            out.push_str(&format!("  {:<16} {}", r.status.to_string(), r.identity));
            if let Some(m) = &r.first_mismatch {
                out.push_str(&format!("  ({m})"));
            }
            out.push('\n');
        }
        out
    }
}
