//! The uniform result shape of every checker.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Marginal,
    Fail,
}

impl Verdict {
    pub fn classify(statistic: f64, margin: f64) -> Verdict {
        if statistic > margin || statistic.is_nan() {
            Verdict::Fail
        } else if statistic >= -margin {
            Verdict::Marginal
        } else {
            Verdict::Pass
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Marginal => "marginal",
            Verdict::Fail => "fail",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        match s {
            "pass" => Some(Verdict::Pass),
            "marginal" => Some(Verdict::Marginal),
            "fail" => Some(Verdict::Fail),
            _ => None,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated sample. `raw` is the quantity the check measures; the
/// classified `statistic` is `raw - allowance`, where the allowance is the
/// slack granted to non-strict inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub raw: f64,
    pub statistic: f64,
    pub classification: Verdict,
}

impl Sample {
    pub fn new(t: f64, x: Vec<f64>, raw: f64, allowance: f64, margin: f64) -> Sample {
        let statistic = raw - allowance;
        Sample { t, x, raw, statistic, classification: Verdict::classify(statistic, margin) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub samples: Vec<Sample>,
    pub margin: f64,
    pub notes: Vec<String>,
    /// A `(t, value)` curve illustrating the verdict, e.g. a certificate
    /// along the worst trajectory.
    pub witness: Vec<(f64, f64)>,
    /// Secondary samples that inform but do not decide the verdict.
    pub diagnostics: Vec<Sample>,
    pub sample_count: usize,
    pub seed: u64,
}

impl CheckReport {
    pub fn new(samples: Vec<Sample>, margin: f64, seed: u64) -> CheckReport {
        let verdict = aggregate(&samples);
        CheckReport {
            verdict,
            sample_count: samples.len(),
            samples,
            margin,
            notes: Vec::new(),
            witness: Vec::new(),
            diagnostics: Vec::new(),
            seed,
        }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn max_statistic(&self) -> f64 {
        self.samples.iter().map(|s| s.statistic).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_raw(&self) -> f64 {
        self.samples.iter().map(|s| s.raw).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Appends samples and recomputes the verdict.
    pub fn extend(&mut self, samples: Vec<Sample>) {
        self.samples.extend(samples);
        self.sample_count = self.samples.len();
        self.verdict = aggregate(&self.samples);
    }
}

/// Fail if any sample fails, marginal if any is marginal, pass otherwise.
pub fn aggregate(samples: &[Sample]) -> Verdict {
    samples.iter().map(|s| s.classification).fold(Verdict::Pass, |acc, c| match (acc, c) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
        (Verdict::Marginal, _) | (_, Verdict::Marginal) => Verdict::Marginal,
        _ => Verdict::Pass,
    })
}
