//! Averaging trajectories over seeds, normalized by a baseline score.

use super::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    /// Mean over seeds of best-so-far / baseline. A seed with no success
    /// yet counts as 0.
    pub mean_normalized: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestMapper {
    pub seed: u64,
    pub iteration: usize,
    pub score: f64,
    pub normalized: f64,
    pub program: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<AggregateRow>,
    pub best: Option<BestMapper>,
}

pub fn aggregate(trajectories: &[Trajectory], baseline: f64) -> Result<Summary, String> {
    if trajectories.is_empty() {
        return Err("no trajectories to aggregate".to_string());
    }
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(format!("baseline score must be positive, got {baseline}"));
    }
    let longest = trajectories.iter().map(|t| t.records.len()).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(longest);
    for i in 0..longest {
        let mut sum = 0.0;
        let mut seeds = 0;
        for t in trajectories {
            if let Some(r) = t.records.get(i) {
                sum += r.best_so_far.unwrap_or(0.0) / baseline;
                seeds += 1;
            }
        }
        rows.push(AggregateRow {
            iteration: i + 1,
            mean_normalized: sum / seeds as f64,
            seeds,
        });
    }
    let mut best: Option<BestMapper> = None;
    for t in trajectories {
        if let Some(r) = t.best() {
            let score = r.score.expect("best record has a score");
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(BestMapper {
                    seed: t.seed,
                    iteration: r.iteration,
                    score,
                    normalized: score / baseline,
                    program: r.candidate.program(),
                });
            }
        }
    }
    Ok(Summary { rows, best })
}
