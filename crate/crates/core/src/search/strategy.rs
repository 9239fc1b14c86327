//! Built-in search strategies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adapter::Adapter, Context, Proposal};

pub trait Strategy {
    fn name(&self) -> &str;
    /// Next candidate, given everything evaluated so far.
    fn propose(&mut self, ctx: &Context) -> Proposal;
}

pub const STRATEGIES: [&str; 4] = ["random", "hillclimb", "exhaustive", "external"];

/// Builds a strategy by name. `endpoint` is only used by `external`.
pub fn by_name(name: &str, seed: u64, endpoint: Option<&str>) -> Result<Box<dyn Strategy + Send>, String> {
    match name {
        "random" => Ok(Box::new(RandomAgent::new(seed))),
        "hillclimb" => Ok(Box::new(HillClimb::new(seed, HillClimb::DEFAULT_STALL_LIMIT))),
        "exhaustive" => Ok(Box::new(Exhaustive::new())),
        "external" => match endpoint {
            Some(e) => Ok(Box::new(Adapter::new(e))),
            None => Err("the external strategy needs --adapter-url or MAPFORGE_ADAPTER".to_string()),
        },
        _ => Err(format!(
            "unknown strategy {name}; expected one of {}",
            STRATEGIES.join(", ")
        )),
    }
}

fn sample(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Vec<usize> {
    sizes.iter().map(|&n| rng.gen_range(0..n.max(1))).collect()
}

/// Samples every dimension independently and uniformly.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Strategy for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn propose(&mut self, ctx: &Context) -> Proposal {
        Proposal::Vector(sample(&mut self.rng, &ctx.space.domain_sizes()))
    }
}

/// Changes one coordinate of its incumbent at a time and restarts from a
/// random point after `stall_limit` proposals without improvement.
pub struct HillClimb {
    rng: ChaCha8Rng,
    stall_limit: usize,
    stalled: usize,
    incumbent: Option<(Vec<usize>, Option<f64>)>,
    pending: Option<Vec<usize>>,
}

impl HillClimb {
    pub const DEFAULT_STALL_LIMIT: usize = 24;

    pub fn new(seed: u64, stall_limit: usize) -> Self {
        HillClimb {
            rng: ChaCha8Rng::seed_from_u64(seed),
            stall_limit: stall_limit.max(1),
            stalled: 0,
            incumbent: None,
            pending: None,
        }
    }

    fn better(a: Option<f64>, b: Option<f64>) -> bool {
        match (a, b) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

impl Strategy for HillClimb {
    fn name(&self) -> &str {
        "hillclimb"
    }

    fn propose(&mut self, ctx: &Context) -> Proposal {
        let sizes = ctx.space.domain_sizes();
        if let (Some(last), Some(tried)) = (ctx.history.last(), self.pending.take()) {
            match &self.incumbent {
                Some((_, score)) if !Self::better(last.score, *score) => self.stalled += 1,
                _ => {
                    self.incumbent = Some((tried, last.score));
                    self.stalled = 0;
                }
            }
        }
        let next = match &self.incumbent {
            Some((v, _)) if self.stalled < self.stall_limit => {
                let mutable: Vec<usize> = (0..sizes.len()).filter(|&d| sizes[d] > 1).collect();
                let mut v = v.clone();
                if !mutable.is_empty() {
                    let d = mutable[self.rng.gen_range(0..mutable.len())];
                    let shift = self.rng.gen_range(1..sizes[d]);
                    v[d] = (v[d] + shift) % sizes[d];
                }
                v
            }
            _ => {
                // fresh start; the new point becomes the incumbent whatever
                // it scores
                let v = sample(&mut self.rng, &sizes);
                self.incumbent = None;
                self.stalled = 0;
                v
            }
        };
        self.pending = Some(next.clone());
        Proposal::Vector(next)
    }
}

/// Visits the space in lexicographic order, last dimension fastest,
/// starting over once every point has been seen.
pub struct Exhaustive {
    next: u128,
}

impl Exhaustive {
    pub fn new() -> Self {
        Exhaustive { next: 0 }
    }
}

impl Default for Exhaustive {
    fn default() -> Self {
        Exhaustive::new()
    }
}

/// The `index`-th vector in lexicographic order, wrapping around.
pub fn nth_vector(sizes: &[usize], index: u128) -> Vec<usize> {
    let mut rest = index;
    let mut v = vec![0; sizes.len()];
    for d in (0..sizes.len()).rev() {
        let n = sizes[d].max(1) as u128;
        v[d] = (rest % n) as usize;
        rest /= n;
    }
    v
}

impl Strategy for Exhaustive {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn propose(&mut self, ctx: &Context) -> Proposal {
        let v = nth_vector(&ctx.space.domain_sizes(), self.next);
        self.next += 1;
        Proposal::Vector(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nth_vector_is_mixed_radix() {
        let sizes = [2, 3];
        let all: Vec<Vec<usize>> = (0..7).map(|i| nth_vector(&sizes, i)).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![1, 2],
                vec![0, 0]
            ]
        );
    }

    #[test]
    fn unknown_strategy_is_an_error() {
        assert!(by_name("annealing", 0, None).is_err());
        assert!(by_name("external", 0, None).is_err());
        assert!(by_name("hillclimb", 0, None).is_ok());
    }
}
