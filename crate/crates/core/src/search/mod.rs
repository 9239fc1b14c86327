//! The optimization loop: a strategy proposes a mapper, it is checked,
//! bound and simulated, and the feedback is appended to the history the
//! strategy sees next.

pub mod adapter;
pub mod aggregate;
pub mod strategy;
pub mod trajectory;

use std::collections::{BTreeMap, HashMap};

use crate::binder::{emit_text_blocks, resolve, DecisionSpace, DecisionTable, BLOCKS};
use crate::dsl;
use crate::eval::{builtin_library, FunctionLibrary};
use crate::feedback::{classify, enhance, render, FeedbackLevel, FeedbackReport, Outcome, RuleSet};
use crate::machine::MachineModel;
use crate::sim::{simulate, AppDescriptor, CostParams};

pub use strategy::{by_name, Exhaustive, HillClimb, RandomAgent, Strategy};

/// What a strategy asks to evaluate next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proposal {
    Vector(Vec<usize>),
    /// Replacement DSL text for named statement blocks; blocks not named
    /// are taken from the best candidate so far.
    Blocks(BTreeMap<String, String>),
    /// The strategy could not produce a candidate (for example the
    /// external optimizer was unreachable).
    Failed(String),
}

/// A mapper that was evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Candidate {
    /// Position in the decision space, when the mapper has one.
    pub vector: Option<Vec<usize>>,
    /// DSL text per block, in block order.
    pub blocks: Vec<(String, String)>,
}

impl Candidate {
    pub fn program(&self) -> String {
        let parts: Vec<&str> = self
            .blocks
            .iter()
            .map(|(_, t)| t.as_str())
            .filter(|t| !t.trim().is_empty())
            .collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Starts at 1.
    pub iteration: usize,
    pub candidate: Candidate,
    pub feedback: FeedbackReport,
    /// `feedback` as the optimizer reads it.
    pub rendered: String,
    /// None when the candidate failed.
    pub score: Option<f64>,
    pub best_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub strategy: String,
    pub seed: u64,
    pub app: String,
    pub machine: String,
    pub records: Vec<IterationRecord>,
}

impl Trajectory {
    pub fn best(&self) -> Option<&IterationRecord> {
        best_index(&self.records).map(|i| &self.records[i])
    }
}

/// Index of the first record holding the highest score.
pub fn best_index(records: &[IterationRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        if let Some(s) = r.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// What a strategy sees when proposing.
pub struct Context<'a> {
    pub app: &'a str,
    pub space: &'a DecisionSpace,
    pub history: &'a [IterationRecord],
}

impl Context<'_> {
    pub fn best(&self) -> Option<&IterationRecord> {
        best_index(self.history).map(|i| &self.history[i])
    }
}

#[derive(Debug, Clone)]
pub struct LoopConfig<'a> {
    pub budget: usize,
    pub level: FeedbackLevel,
    pub rules: &'a RuleSet,
}

/// Runs `budget` iterations. `evaluate` turns a proposal into a candidate
/// and its unenhanced feedback.
pub fn run_loop(
    app: &str,
    space: &DecisionSpace,
    strategy: &mut dyn Strategy,
    config: &LoopConfig,
    mut evaluate: impl FnMut(&Proposal, &[IterationRecord]) -> (Candidate, FeedbackReport),
) -> Vec<IterationRecord> {
    let mut history: Vec<IterationRecord> = Vec::with_capacity(config.budget);
    let mut best: Option<f64> = None;
    for iteration in 1..=config.budget {
        let proposal = strategy.propose(&Context {
            app,
            space,
            history: &history,
        });
        let (candidate, report) = evaluate(&proposal, &history);
        let feedback = enhance(&report, config.rules, config.level);
        let score = feedback.score.filter(|s| s.is_finite());
        if let Some(s) = score {
            if best.is_none_or(|b| s > b) {
                best = Some(s);
            }
        }
        history.push(IterationRecord {
            iteration,
            candidate,
            rendered: render(&feedback),
            feedback,
            score,
            best_so_far: best,
        });
    }
    history
}

/// Evaluates proposals for one application with the binder and simulator.
pub struct AppEvaluator<'a> {
    pub app: &'a AppDescriptor,
    pub machine: &'a MachineModel,
    pub costs: &'a CostParams,
    pub space: &'a DecisionSpace,
    library: FunctionLibrary,
    cache: HashMap<Vec<usize>, (Candidate, FeedbackReport)>,
}

impl<'a> AppEvaluator<'a> {
    pub fn new(
        app: &'a AppDescriptor,
        machine: &'a MachineModel,
        costs: &'a CostParams,
        space: &'a DecisionSpace,
    ) -> Self {
        AppEvaluator {
            app,
            machine,
            costs,
            space,
            library: builtin_library(),
            cache: HashMap::new(),
        }
    }

    fn run_table(&self, table: &DecisionTable, library: &FunctionLibrary) -> FeedbackReport {
        match simulate(self.app, table, library, self.machine, self.costs) {
            Ok(r) => classify(Outcome::Ran(&r)),
            Err(e) => classify(Outcome::Failed(&e)),
        }
    }

    pub fn evaluate_vector(&mut self, vector: &[usize]) -> (Candidate, FeedbackReport) {
        if let Some(hit) = self.cache.get(vector) {
            return hit.clone();
        }
        let table = match self.space.table(self.app, vector) {
            Ok(t) => t,
            Err(e) => return (Candidate::default(), FeedbackReport::compile_error(e)),
        };
        let candidate = Candidate {
            vector: Some(vector.to_vec()),
            blocks: emit_text_blocks(&table, &self.library),
        };
        let out = (candidate, self.run_table(&table, &self.library));
        self.cache.insert(vector.to_vec(), out.clone());
        out
    }

    /// Evaluates a complete mapper program.
    pub fn evaluate_program(&self, source: &str, blocks: Vec<(String, String)>) -> (Candidate, FeedbackReport) {
        let mut candidate = Candidate { vector: None, blocks };
        let program = match dsl::check(source) {
            Ok(p) => p,
            Err(diags) => return (candidate, classify(Outcome::Diagnostics(&diags))),
        };
        let resolved = match resolve(&program, self.app, self.machine) {
            Ok(r) => r,
            Err(diags) => return (candidate, classify(Outcome::Diagnostics(&diags))),
        };
        candidate.vector = self.space.vector(&resolved.table).ok();
        let report = self.run_table(&resolved.table, &resolved.library);
        (candidate, report)
    }

    pub fn evaluate(&mut self, proposal: &Proposal, history: &[IterationRecord]) -> (Candidate, FeedbackReport) {
        match proposal {
            Proposal::Vector(v) => self.evaluate_vector(v),
            Proposal::Failed(msg) => (Candidate::default(), FeedbackReport::compile_error(msg.clone())),
            Proposal::Blocks(replacements) => {
                if let Some(unknown) = replacements.keys().find(|k| !BLOCKS.contains(&k.as_str())) {
                    return (
                        Candidate::default(),
                        FeedbackReport::compile_error(format!(
                            "unknown block {unknown}; expected one of {}",
                            BLOCKS.join(", ")
                        )),
                    );
                }
                let base = match best_index(history) {
                    Some(i) if !history[i].candidate.blocks.is_empty() => history[i].candidate.blocks.clone(),
                    _ => self.evaluate_vector(&vec![0; self.space.len()]).0.blocks,
                };
                let blocks: Vec<(String, String)> = BLOCKS
                    .iter()
                    .map(|&name| {
                        let text = replacements
                            .get(name)
                            .cloned()
                            .or_else(|| base.iter().find(|(n, _)| n == name).map(|(_, t)| t.clone()))
                            .unwrap_or_default();
                        (name.to_string(), text)
                    })
                    .collect();
                let candidate = Candidate { vector: None, blocks };
                let source = candidate.program();
                self.evaluate_program(&source, candidate.blocks)
            }
        }
    }
}

/// Everything that determines one optimization run.
pub struct RunSpec<'a> {
    pub app: &'a AppDescriptor,
    pub machine: &'a MachineModel,
    pub costs: &'a CostParams,
    pub space: &'a DecisionSpace,
    pub budget: usize,
    pub level: FeedbackLevel,
    pub rules: &'a RuleSet,
}

/// Runs one seeded trajectory on an application.
pub fn run(spec: &RunSpec, strategy: &mut dyn Strategy, seed: u64) -> Trajectory {
    let mut evaluator = AppEvaluator::new(spec.app, spec.machine, spec.costs, spec.space);
    let config = LoopConfig {
        budget: spec.budget,
        level: spec.level,
        rules: spec.rules,
    };
    let records = run_loop(&spec.app.name, spec.space, strategy, &config, |p, h| {
        evaluator.evaluate(p, h)
    });
    Trajectory {
        strategy: strategy.name().to_string(),
        seed,
        app: spec.app.name.clone(),
        machine: spec.machine.name.clone(),
        records,
    }
}
