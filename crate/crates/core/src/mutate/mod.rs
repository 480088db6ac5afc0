//! Validity-preserving mutation of IR modules.
//!
//! A [`Mutator`] owns its configuration and a seeded RNG stream. Each
//! strategy either applies one small change that keeps the module
//! verifier-clean or reports why it could not.

mod gen;
mod model;
mod scfg;
mod source;
mod universe;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::feedback::GuidanceReport;
use crate::ir::{Module, Opcode};
use crate::target::Root;

pub use gen::unstored_placeholder_loads;
pub use model::{generated_opcodes, model, plan, OperandConstraint, Plan};
pub use source::{available, available_at_end, random_const, Cursor};
pub use universe::TypeUniverse;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MutateError {
    #[error("size limit reached")]
    LimitExceeded,
    #[error("no opcode can be typed in this universe")]
    NoCandidateOpcode,
    #[error("nothing to call")]
    NoCallable,
    #[error("no dead values")]
    NothingDead,
    #[error("module has no function")]
    NoFunction,
    #[error("invalid configuration: {0}")]
    ConfigError(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    GenerateFunction,
    InsertScfg,
    GenerateInstruction,
    GenerateCall,
    SinkValue,
    FixupPlaceholders,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::GenerateFunction,
        Strategy::InsertScfg,
        Strategy::GenerateInstruction,
        Strategy::GenerateCall,
        Strategy::SinkValue,
        Strategy::FixupPlaceholders,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrategyWeights {
    pub function: u32,
    pub scfg: u32,
    pub instruction: u32,
    pub call: u32,
    pub sink: u32,
    pub fixup: u32,
}

impl StrategyWeights {
    pub fn get(&self, s: Strategy) -> u32 {
        match s {
            Strategy::GenerateFunction => self.function,
            Strategy::InsertScfg => self.scfg,
            Strategy::GenerateInstruction => self.instruction,
            Strategy::GenerateCall => self.call,
            Strategy::SinkValue => self.sink,
            Strategy::FixupPlaceholders => self.fixup,
        }
    }

    /// All weight on one strategy.
    pub fn only(s: Strategy) -> StrategyWeights {
        let mut w = StrategyWeights { function: 0, scfg: 0, instruction: 0, call: 0, sink: 0, fixup: 0 };
        match s {
            Strategy::GenerateFunction => w.function = 1,
            Strategy::InsertScfg => w.scfg = 1,
            Strategy::GenerateInstruction => w.instruction = 1,
            Strategy::GenerateCall => w.call = 1,
            Strategy::SinkValue => w.sink = 1,
            Strategy::FixupPlaceholders => w.fixup = 1,
        }
        w
    }
}

impl Default for StrategyWeights {
    fn default() -> Self {
        StrategyWeights { function: 1, scfg: 2, instruction: 8, call: 2, sink: 2, fixup: 1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MutatorConfig {
    pub seed: u64,
    pub max_blocks: usize,
    /// Per block, phis included.
    pub max_instrs: usize,
    pub max_functions: usize,
    /// Whole-module count past which no new instructions are generated.
    /// Fixups and sCFG phis may still add a few beyond it.
    pub max_module_instrs: usize,
    pub weights: StrategyWeights,
    pub guidance: Option<GuidanceReport>,
    pub universe: TypeUniverse,
}

impl Default for MutatorConfig {
    fn default() -> Self {
        MutatorConfig {
            seed: 0,
            max_blocks: 64,
            max_instrs: 48,
            max_functions: 4,
            max_module_instrs: 192,
            weights: StrategyWeights::default(),
            guidance: None,
            universe: TypeUniverse::default(),
        }
    }
}

/// Share of opcode draws taken from the guidance report when it is non-empty.
const GUIDED_SHARE: f64 = 0.5;

pub struct Mutator {
    pub cfg: MutatorConfig,
    rng: ChaCha8Rng,
    opcodes: Vec<Opcode>,
}

impl Mutator {
    pub fn new(cfg: MutatorConfig) -> Result<Mutator, MutateError> {
        if Strategy::ALL.iter().all(|s| cfg.weights.get(*s) == 0) {
            return Err(MutateError::ConfigError("all strategy weights are zero".into()));
        }
        if cfg.max_blocks < 1 || cfg.max_instrs < 1 || cfg.max_functions < 1 {
            return Err(MutateError::ConfigError("limits must be positive".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Mutator { cfg, rng, opcodes: generated_opcodes() })
    }

    pub fn set_guidance(&mut self, g: Option<GuidanceReport>) {
        self.cfg.guidance = g;
    }

    /// Draws a number from the mutator's stream (used by the campaign so a
    /// whole run hangs off one seed).
    pub fn gen_range(&mut self, lo: u64, hi_inclusive: u64) -> u64 {
        self.rng.gen_range(lo..=hi_inclusive)
    }

    fn effective_weights(&self) -> StrategyWeights {
        let mut w = self.cfg.weights;
        if let Some(g) = &self.cfg.guidance {
            let boost = |base: u32| if base > 0 { base + 1 } else { 0 };
            if !g.intrinsics.is_empty() || g.roots.iter().any(|r| r.root == Root::Call) {
                w.call = boost(w.call);
            }
            if g.roots.iter().any(|r| matches!(r.root, Root::Br | Root::CondBr | Root::Switch)) {
                w.scfg = boost(w.scfg);
            }
        }
        w
    }

    fn pick_strategy(&mut self) -> Strategy {
        let w = self.effective_weights();
        let total: u32 = Strategy::ALL.iter().map(|s| w.get(*s)).sum();
        let mut x = self.rng.gen_range(0..total);
        for s in Strategy::ALL {
            if x < w.get(s) {
                return s;
            }
            x -= w.get(s);
        }
        unreachable!("weights cover the draw")
    }

    pub fn apply(&mut self, m: &mut Module, s: Strategy) -> Result<(), MutateError> {
        match s {
            Strategy::GenerateFunction => self.generate_function(m),
            Strategy::InsertScfg => self.insert_scfg(m),
            Strategy::GenerateInstruction => self.generate_instruction(m),
            Strategy::GenerateCall => self.generate_call(m),
            Strategy::SinkValue => self.sink_value(m),
            Strategy::FixupPlaceholders => self.fixup_placeholders(m),
        }
    }

    /// One weighted strategy application. A strategy that cannot apply
    /// falls back to instruction then function generation; the strategy
    /// that finally changed the module is returned.
    pub fn mutate_step(&mut self, m: &mut Module) -> Option<Strategy> {
        let s = self.pick_strategy();
        if self.apply(m, s).is_ok() {
            return Some(s);
        }
        for fallback in [Strategy::GenerateInstruction, Strategy::GenerateFunction] {
            if fallback != s && self.cfg.weights.get(fallback) > 0 && self.apply(m, fallback).is_ok() {
                return Some(fallback);
            }
        }
        if m.functions.is_empty() && self.apply(m, Strategy::GenerateFunction).is_ok() {
            return Some(Strategy::GenerateFunction);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::print_module;
    use crate::verify::verify_module;

    #[test]
    fn zero_weights_rejected() {
        let cfg = MutatorConfig {
            weights: StrategyWeights { function: 0, scfg: 0, instruction: 0, call: 0, sink: 0, fixup: 0 },
            ..MutatorConfig::default()
        };
        assert!(matches!(Mutator::new(cfg), Err(MutateError::ConfigError(_))));
    }

    #[test]
    fn steps_are_deterministic() {
        let run = |seed| {
            let mut mu = Mutator::new(MutatorConfig { seed, ..MutatorConfig::default() }).unwrap();
            let mut m = Module::default();
            for _ in 0..200 {
                mu.mutate_step(&mut m);
            }
            print_module(&m)
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn chained_steps_stay_valid() {
        let universe = TypeUniverse::new(&[1, 8, 16, 20, 32, 64, 128], true);
        for seed in 0..4 {
            let mut mu =
                Mutator::new(MutatorConfig { seed, universe: universe.clone(), ..MutatorConfig::default() }).unwrap();
            let mut m = Module::default();
            for step in 0..1500 {
                let s = mu.mutate_step(&mut m);
                let v = verify_module(&m);
                assert!(
                    v.is_empty(),
                    "seed {seed} step {step} after {s:?}: {:?}\n{}",
                    v[0].describe(&m),
                    print_module(&m)
                );
            }
        }
    }

    #[test]
    fn scfg_only_grows_blocks_until_cap() {
        let cfg = MutatorConfig {
            weights: StrategyWeights::only(Strategy::InsertScfg),
            max_blocks: 20,
            ..MutatorConfig::default()
        };
        let mut mu = Mutator::new(cfg).unwrap();
        let mut m = Module::default();
        mu.generate_function(&mut m).unwrap();
        let mut last = m.functions[0].blocks.len();
        loop {
            match mu.insert_scfg(&mut m) {
                Ok(()) => {
                    let now = m.functions[0].blocks.len();
                    assert!(now > last && now <= 20);
                    last = now;
                }
                Err(e) => {
                    assert_eq!(e, MutateError::LimitExceeded);
                    break;
                }
            }
        }
        assert!(last >= 19);
        assert!(verify_module(&m).is_empty());
    }
}
