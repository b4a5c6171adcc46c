use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// One inequality `lhs ≤ rhs + slack`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `rhs + slack − lhs`; negative on failure.
    pub margin: f64,
    pub status: CheckStatus,
}

impl Check {
    pub fn leq(name: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = rhs + slack - lhs;
        let status = if margin.is_finite() && margin >= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail };
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack,
            margin,
            status,
        }
    }

    pub fn inconclusive(mut self) -> Self {
        self.status = CheckStatus::Inconclusive;
        self
    }
}

/// A named list of checks, serialized as the `diagnose` JSON output.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticReport {
    pub suite: String,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl DiagnosticReport {
    pub fn new(suite: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            ..Self::default()
        }
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn any_fail(&self) -> bool {
        self.checks.iter().any(|c| c.status == CheckStatus::Fail)
    }
}
