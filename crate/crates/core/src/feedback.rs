//! Turning compile diagnostics and simulation outcomes into feedback text,
//! optionally enhanced with keyword-matched explanations and suggestions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::dsl::Diagnostic;
use crate::sim::config::{parse_toml, ConfigError};
use crate::sim::{Metric, SimError, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    CompileError,
    ExecutionError,
    PerformanceMetric,
}

impl FeedbackKind {
    /// Identifier used in trajectory files.
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackKind::CompileError => "compile_error",
            FeedbackKind::ExecutionError => "execution_error",
            FeedbackKind::PerformanceMetric => "performance",
        }
    }

    fn label(self) -> &'static str {
        match self {
            FeedbackKind::CompileError => "Compile Error",
            FeedbackKind::ExecutionError => "Execution Error",
            FeedbackKind::PerformanceMetric => "Performance Metric",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackReport {
    pub kind: FeedbackKind,
    pub system_message: String,
    pub explain: Option<String>,
    pub suggest: Option<String>,
    /// Throughput in flop/s; present only for performance reports.
    pub score: Option<f64>,
}

impl FeedbackReport {
    pub fn compile_error(message: impl Into<String>) -> Self {
        FeedbackReport {
            kind: FeedbackKind::CompileError,
            system_message: message.into(),
            explain: None,
            suggest: None,
            score: None,
        }
    }
}

/// What happened to one candidate mapper.
#[derive(Debug, Clone, Copy)]
pub enum Outcome<'a> {
    Diagnostics(&'a [Diagnostic]),
    Failed(&'a SimError),
    Ran(&'a SimResult),
}

/// Formats with six significant digits and no trailing zeros.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).clamp(0, 17) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// The performance sentence for a successful run.
pub fn performance_message(result: &SimResult) -> String {
    match result.metric {
        Metric::Time => format!("Execution time is {}s.", format_number(result.wall_time)),
        Metric::Gflops => format!("Achieved throughput = {} GFLOPS", format_number(result.gflops())),
    }
}

pub fn classify(outcome: Outcome) -> FeedbackReport {
    match outcome {
        Outcome::Diagnostics(diags) => {
            let messages: Vec<&str> = diags.iter().map(|d| d.message.as_str()).collect();
            FeedbackReport::compile_error(messages.join("; "))
        }
        Outcome::Failed(err) => FeedbackReport {
            kind: FeedbackKind::ExecutionError,
            system_message: err.to_string(),
            explain: None,
            suggest: None,
            score: None,
        },
        Outcome::Ran(result) => FeedbackReport {
            kind: FeedbackKind::PerformanceMetric,
            system_message: performance_message(result),
            explain: None,
            suggest: None,
            score: Some(result.throughput),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeedbackLevel {
    System,
    SystemExplain,
    SystemExplainSuggest,
}

impl FeedbackLevel {
    pub const ALL: [FeedbackLevel; 3] = [
        FeedbackLevel::System,
        FeedbackLevel::SystemExplain,
        FeedbackLevel::SystemExplainSuggest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackLevel::System => "system",
            FeedbackLevel::SystemExplain => "system+explain",
            FeedbackLevel::SystemExplainSuggest => "system+explain+suggest",
        }
    }
}

impl fmt::Display for FeedbackLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedbackLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "system" => Ok(FeedbackLevel::System),
            "system+explain" | "explain" => Ok(FeedbackLevel::SystemExplain),
            "system+explain+suggest" | "full" => Ok(FeedbackLevel::SystemExplainSuggest),
            _ => Err(format!(
                "unknown feedback level {s}; expected system, system+explain or system+explain+suggest"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhancerRule {
    pub keyword: String,
    pub explain: Option<String>,
    pub suggest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(rename = "rule", default)]
    pub rules: Vec<EnhancerRule>,
}

const DEFAULT_RULES: &str = include_str!("../../../corpus/config/feedback_rules.cfg");

impl RuleSet {
    pub fn parse(text: &str) -> Result<RuleSet, Vec<String>> {
        let set: RuleSet = parse_toml(text)?;
        let problems: Vec<String> = set
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.keyword.is_empty())
            .map(|(i, _)| format!("rule[{i}].keyword: must not be empty"))
            .collect();
        if problems.is_empty() {
            Ok(set)
        } else {
            Err(problems)
        }
    }

    pub fn load(path: &Path) -> Result<RuleSet, ConfigError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: file.clone(),
            problems: vec![e.to_string()],
            io: true,
        })?;
        RuleSet::parse(&text).map_err(|problems| ConfigError {
            file,
            problems,
            io: false,
        })
    }

    /// The bundled rules.
    pub fn bundled() -> RuleSet {
        RuleSet::parse(DEFAULT_RULES).expect("bundled feedback rules are valid")
    }

    pub fn find(&self, message: &str) -> Option<&EnhancerRule> {
        self.rules.iter().find(|r| message.contains(&r.keyword))
    }
}

pub fn enhance(report: &FeedbackReport, rules: &RuleSet, level: FeedbackLevel) -> FeedbackReport {
    let mut out = FeedbackReport {
        explain: None,
        suggest: None,
        ..report.clone()
    };
    if let Some(rule) = rules.find(&report.system_message) {
        if level >= FeedbackLevel::SystemExplain {
            out.explain = rule.explain.clone();
        }
        if level >= FeedbackLevel::SystemExplainSuggest {
            out.suggest = rule.suggest.clone();
        }
    }
    out
}

pub fn render(report: &FeedbackReport) -> String {
    let mut s = format!("{}: {}", report.kind.label(), report.system_message);
    if let Some(e) = &report.explain {
        s.push_str("\nExplanation: ");
        s.push_str(e);
    }
    if let Some(g) = &report.suggest {
        s.push_str("\nSuggestion: ");
        s.push_str(g);
    }
    s
}
