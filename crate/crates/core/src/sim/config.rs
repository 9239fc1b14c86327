//! Loading `.app`, `.machine` and `.costs` files (TOML).

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::app::AppDescriptor;
use crate::machine::MachineModel;

/// Penalty factors of the cost model. All factors are at least 1.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Compute slowdown for array-of-structs data on a GPU.
    pub aos_gpu_penalty: f64,
    /// Slowdown when a layout's dimension order differs from the kernel's
    /// traversal order.
    pub order_mismatch_penalty: f64,
    /// Slowdown when an alignment constraint rules out `alignment_bytes`.
    pub misalignment_penalty: f64,
    pub alignment_bytes: u64,
    /// Slowdown of GPU kernels reading zero-copy memory.
    pub zcmem_gpu_penalty: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            aos_gpu_penalty: 1.0,
            order_mismatch_penalty: 1.0,
            misalignment_penalty: 1.0,
            alignment_bytes: 64,
            zcmem_gpu_penalty: 1.0,
        }
    }
}

impl CostParams {
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let factors = [
            ("aos_gpu_penalty", self.aos_gpu_penalty),
            ("order_mismatch_penalty", self.order_mismatch_penalty),
            ("misalignment_penalty", self.misalignment_penalty),
            ("zcmem_gpu_penalty", self.zcmem_gpu_penalty),
        ];
        for (name, v) in factors {
            if !(v >= 1.0 && v.is_finite()) {
                problems.push(format!("{name}: must be a finite factor of at least 1"));
            }
        }
        if !self.alignment_bytes.is_power_of_two() {
            problems.push("alignment_bytes: must be a power of two".into());
        }
        problems
    }
}

/// Problems found while loading a configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: String,
    pub problems: Vec<String>,
    /// True when the file could not be read at all.
    pub io: bool,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.problems.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {p}", self.file)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn tidy(message: &str) -> String {
    let message = message.trim();
    let field = |prefix: &str| {
        message
            .strip_prefix(prefix)
            .and_then(|rest| rest.split('`').next())
            .map(str::to_string)
    };
    if let Some(f) = field("missing field `") {
        format!("missing required field: {f}")
    } else if let Some(f) = field("unknown field `") {
        format!("unknown field: {f}")
    } else {
        message.to_string()
    }
}

/// Parses TOML text into `T`, reporting the field path of any mismatch.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T, Vec<String>> {
    let de = toml::Deserializer::parse(text).map_err(|e| {
        let line = e.span().map(|s| format!(" (line {})", line_of(text, s.start)));
        vec![format!("{}{}", tidy(e.message()), line.unwrap_or_default())]
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner();
        let msg = tidy(inner.message());
        // a missing field is reported against the whole enclosing table
        let line = match inner.span() {
            Some(s) if !msg.starts_with("missing") => format!(" (line {})", line_of(text, s.start)),
            _ => String::new(),
        };
        if let Some(field) = msg.strip_prefix("unknown field: ") {
            if let Some(parent) = path.strip_suffix(field) {
                path = parent.trim_end_matches('.').to_string();
            }
        }
        if path == "." || path.is_empty() {
            vec![format!("{msg}{line}")]
        } else {
            vec![format!("{path}: {msg}{line}")]
        }
    })
}

fn load<T: DeserializeOwned>(path: &Path, check: fn(&T) -> Vec<String>) -> Result<T, ConfigError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: file.clone(),
        problems: vec![e.to_string()],
        io: true,
    })?;
    let value = parse_toml::<T>(&text).map_err(|problems| ConfigError {
        file: file.clone(),
        problems,
        io: false,
    })?;
    let problems = check(&value);
    if problems.is_empty() {
        Ok(value)
    } else {
        Err(ConfigError {
            file,
            problems,
            io: false,
        })
    }
}

pub fn load_app(path: &Path) -> Result<AppDescriptor, ConfigError> {
    load(path, AppDescriptor::check)
}

pub fn load_machine(path: &Path) -> Result<MachineModel, ConfigError> {
    load(path, MachineModel::check)
}

pub fn load_costs(path: &Path) -> Result<CostParams, ConfigError> {
    load(path, CostParams::check)
}

pub fn parse_app(text: &str) -> Result<AppDescriptor, Vec<String>> {
    let app: AppDescriptor = parse_toml(text)?;
    let problems = app.check();
    if problems.is_empty() {
        Ok(app)
    } else {
        Err(problems)
    }
}

pub fn parse_machine(text: &str) -> Result<MachineModel, Vec<String>> {
    let m: MachineModel = parse_toml(text)?;
    let problems = m.check();
    if problems.is_empty() {
        Ok(m)
    } else {
        Err(problems)
    }
}

pub fn parse_costs(text: &str) -> Result<CostParams, Vec<String>> {
    let c: CostParams = parse_toml(text)?;
    let problems = c.check();
    if problems.is_empty() {
        Ok(c)
    } else {
        Err(problems)
    }
}
