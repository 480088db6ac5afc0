//! The fuzzing loop: pick, mutate, select, evaluate, store.

mod bytes;
mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coverage::{CoverageState, Novelty};
use crate::feedback::{build_report, decode_coverage, EpochSchedule, GuidanceReport};
use crate::ir::{parse_module, print_module, Module};
use crate::mutate::{MutateError, Mutator, MutatorConfig, TypeUniverse};
use crate::select::{FailureSignature, SelectError, SelectionResult, Selector, Verdict};
use crate::target::{compile_patterns, FeatureSet, LookupTable, MatcherProgram, TargetError, TargetSpec};
use crate::verify::verify_module;

pub use bytes::havoc;
pub use output::{load_seeds, stats_csv, write_output, STATS_HEADER};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Mutate(#[from] MutateError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    Executions(u64),
    Seconds(u64),
}

/// How new inputs are made.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// IR-level mutation through [`Mutator`].
    Structured,
    /// Byte-level havoc on the IR text, for comparison.
    RandomBytes,
}

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub seed: u64,
    pub budget: Budget,
    pub guidance: bool,
    pub seeds_dir: Option<PathBuf>,
    pub epoch_every: u64,
    /// A timeline row is recorded every this many executions.
    pub stats_every: u64,
    pub engine: Engine,
    pub mutator: MutatorConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            seed: 0,
            budget: Budget::Executions(1000),
            guidance: true,
            seeds_dir: None,
            epoch_every: EpochSchedule::DEFAULT,
            stats_every: 1000,
            engine: Engine::Structured,
            mutator: MutatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub id: u32,
    pub text: String,
    /// Parsed form, kept for structured mutation.
    pub module: Option<Module>,
    pub found_at: u64,
    pub parent: Option<u32>,
    pub novelty: Novelty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FindingRecord {
    pub signature: FailureSignature,
    pub reproducer: String,
    pub first_seen: u64,
}

/// Findings keyed by signature.
#[derive(Clone, Debug, Default)]
pub struct FindingStore {
    records: BTreeMap<FailureSignature, FindingRecord>,
    order: Vec<FailureSignature>,
}

impl FindingStore {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, sig: &FailureSignature) -> bool {
        self.records.contains_key(sig)
    }

    /// Records in first-seen order.
    pub fn records(&self) -> impl Iterator<Item = &FindingRecord> {
        self.order.iter().map(|s| &self.records[s])
    }

    pub fn insert(&mut self, rec: FindingRecord) -> bool {
        if self.records.contains_key(&rec.signature) {
            return false;
        }
        self.order.push(rec.signature.clone());
        self.records.insert(rec.signature.clone(), rec);
        true
    }
}

/// Inserts `sig` unless an identical signature is already stored.
pub fn dedup_finding(sig: &FailureSignature, reproducer: &str, exec: u64, store: &mut FindingStore) -> bool {
    store.insert(FindingRecord { signature: sig.clone(), reproducer: reproducer.to_string(), first_seen: exec })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimelineRow {
    pub executions: u64,
    pub corpus: usize,
    pub edge_buckets: u64,
    pub matcher_bits: u64,
    pub findings: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CampaignStats {
    pub executions: u64,
    pub corpus: usize,
    pub edge_buckets: u64,
    pub matcher_bits: u64,
    pub findings: usize,
    pub timeline: Vec<TimelineRow>,
    /// Executions at which a guidance epoch fired.
    pub epochs: Vec<u64>,
    /// Byte engine only: inputs that did not parse.
    pub parse_failures: u64,
}

/// Observer hook, called after every execution with its novelty.
pub type ExecHook<'a> = dyn FnMut(u64, &Novelty) + 'a;

pub struct CampaignResult {
    pub stats: CampaignStats,
    pub corpus: Vec<CorpusEntry>,
    pub findings: FindingStore,
    pub coverage: CoverageState,
    pub reports: Vec<GuidanceReport>,
}

struct Runner<'a> {
    target: &'a TargetSpec,
    program: MatcherProgram,
    lut: LookupTable,
    features: FeatureSet,
    cov: CoverageState,
    corpus: Vec<CorpusEntry>,
    findings: FindingStore,
    stats: CampaignStats,
    reports: Vec<GuidanceReport>,
}

impl Runner<'_> {
    fn row(&mut self) {
        let row = TimelineRow {
            executions: self.stats.executions,
            corpus: self.corpus.len(),
            edge_buckets: self.cov.edge_buckets() as u64,
            matcher_bits: self.cov.matcher_bits() as u64,
            findings: self.findings.len(),
        };
        if self.stats.timeline.last() != Some(&row) {
            self.stats.timeline.push(row);
        }
    }

    /// Scores the current run; stores the input if it is a new finding or
    /// shows new coverage. `text` is only rendered when something is stored.
    /// Returns the novelty and the new corpus id, if any.
    fn evaluate(
        &mut self,
        verdict: Verdict,
        text: impl FnOnce() -> String,
        parent: Option<u32>,
    ) -> (Novelty, Option<usize>) {
        let (interesting, novelty) = self.cov.is_interesting();
        let exec = self.stats.executions;
        match verdict {
            Verdict::Finding(sig) => {
                if !self.findings.contains(&sig) {
                    dedup_finding(&sig, &text(), exec, &mut self.findings);
                }
                (novelty, None)
            }
            Verdict::Ok if interesting => {
                let id = self.corpus.len();
                self.corpus.push(CorpusEntry {
                    id: id as u32,
                    text: text(),
                    module: None,
                    found_at: exec,
                    parent,
                    novelty,
                });
                (novelty, Some(id))
            }
            Verdict::Ok => (novelty, None),
        }
    }

    fn epoch(&mut self, mutator: &mut Mutator) -> Result<(), CampaignError> {
        let decoded = decode_coverage(&self.cov.virgin_matcher, &self.lut, self.program.size())
            .map_err(|e| CampaignError::ConfigError(e.to_string()))?;
        let mut report = build_report(&decoded, self.target);
        report.epoch = self.stats.epochs.len() as u64 + 1;
        self.stats.epochs.push(self.stats.executions);
        mutator.set_guidance(Some(report.clone()));
        self.reports.push(report);
        Ok(())
    }
}

/// Runs one campaign. Deterministic for a given configuration when the
/// budget is counted in executions. `hook` sees every execution.
pub fn run_campaign_with(
    target: &TargetSpec,
    features: FeatureSet,
    cfg: &CampaignConfig,
    hook: &mut ExecHook<'_>,
) -> Result<CampaignResult, CampaignError> {
    let schedule = EpochSchedule::new(cfg.epoch_every).map_err(|e| CampaignError::ConfigError(e.to_string()))?;
    if cfg.stats_every == 0 {
        return Err(CampaignError::ConfigError("stats interval must be at least 1".into()));
    }
    match cfg.budget {
        Budget::Executions(0) | Budget::Seconds(0) => {
            return Err(CampaignError::ConfigError("budget must be positive".into()))
        }
        _ => {}
    }
    let (program, lut) = compile_patterns(target)?;
    let mut mcfg = cfg.mutator.clone();
    mcfg.seed = cfg.seed;
    mcfg.universe = TypeUniverse::for_target(target, features);
    mcfg.guidance = None;
    let mut mutator = Mutator::new(mcfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ca3e);
    let cov = CoverageState::new(program.size());
    let mut r = Runner {
        target,
        program,
        lut,
        features,
        cov,
        corpus: Vec::new(),
        findings: FindingStore::default(),
        stats: CampaignStats::default(),
        reports: Vec::new(),
    };
    let program = r.program.clone();
    let mut selector = Selector::new(target, &program, r.features);
    let start = Instant::now();
    let done = |execs: u64| match cfg.budget {
        Budget::Executions(n) => execs >= n,
        Budget::Seconds(s) => start.elapsed() >= Duration::from_secs(s),
    };

    if let Some(dir) = &cfg.seeds_dir {
        for (_, text) in load_seeds(dir)? {
            if done(r.stats.executions) {
                break;
            }
            let m = parse_module(&text).map_err(|e| CampaignError::ConfigError(format!("seed does not parse: {e}")))?;
            if !verify_module(&m).is_empty() {
                return Err(CampaignError::ConfigError("seed does not verify".into()));
            }
            r.stats.executions += 1;
            r.cov.begin_run();
            let res = selector.select_module(&m, &mut r.cov)?;
            let (_, novelty) = r.cov.is_interesting();
            let exec = r.stats.executions;
            match res.verdict {
                Verdict::Finding(sig) => {
                    dedup_finding(&sig, &text, exec, &mut r.findings);
                }
                Verdict::Ok => {
                    let id = r.corpus.len() as u32;
                    r.corpus.push(CorpusEntry { id, text, module: Some(m), found_at: exec, parent: None, novelty });
                }
            }
            hook(exec, &novelty);
        }
    }

    while !done(r.stats.executions) {
        r.stats.executions += 1;
        let exec = r.stats.executions;
        let parent = (!r.corpus.is_empty()).then(|| rng.gen_range(0..r.corpus.len()));
        let novelty = match cfg.engine {
            Engine::Structured => {
                let mut m = parent.and_then(|p| r.corpus[p].module.clone()).unwrap_or_default();
                for _ in 0..rng.gen_range(1..=5) {
                    mutator.mutate_step(&mut m);
                }
                r.cov.begin_run();
                let res = selector.select_module(&m, &mut r.cov)?;
                let (nov, stored) = r.evaluate(res.verdict, || print_module(&m), parent.map(|p| p as u32));
                if let Some(id) = stored {
                    r.corpus[id].module = Some(m);
                }
                nov
            }
            Engine::RandomBytes => {
                let base = parent.map(|p| r.corpus[p].text.as_bytes().to_vec()).unwrap_or_default();
                let input = havoc(&mut rng, &base);
                let text = String::from_utf8_lossy(&input).into_owned();
                r.cov.begin_run();
                match selector.select_text(&text, &mut r.cov)? {
                    Ok(res) => r.evaluate(res.verdict, || text, parent.map(|p| p as u32)).0,
                    // Unparsable text still counts toward coverage but is
                    // never stored: the corpus holds verifier-clean IR only.
                    Err(_) => {
                        r.stats.parse_failures += 1;
                        r.cov.is_interesting().1
                    }
                }
            }
        };
        hook(exec, &novelty);
        if cfg.guidance && cfg.engine == Engine::Structured && schedule.fires(exec) {
            r.epoch(&mut mutator)?;
        }
        if exec.is_multiple_of(cfg.stats_every) {
            r.row();
        }
    }
    r.row();
    r.stats.corpus = r.corpus.len();
    r.stats.edge_buckets = r.cov.edge_buckets() as u64;
    r.stats.matcher_bits = r.cov.matcher_bits() as u64;
    r.stats.findings = r.findings.len();
    Ok(CampaignResult { stats: r.stats, corpus: r.corpus, findings: r.findings, coverage: r.cov, reports: r.reports })
}

pub fn run_campaign(
    target: &TargetSpec,
    features: FeatureSet,
    cfg: &CampaignConfig,
) -> Result<CampaignResult, CampaignError> {
    run_campaign_with(target, features, cfg, &mut |_, _| {})
}

/// Re-runs a stored reproducer or corpus entry against a target.
pub fn replay(text: &str, target: &TargetSpec, features: FeatureSet) -> Result<SelectionResult, CampaignError> {
    let m = parse_module(text).map_err(|e| CampaignError::ConfigError(format!("reproducer does not parse: {e}")))?;
    let (program, _) = compile_patterns(target)?;
    let mut cov = CoverageState::new(program.size());
    Ok(Selector::new(target, &program, features).select_module(&m, &mut cov)?)
}

/// Convenience for callers holding a directory path as a string.
pub fn seeds_dir(p: impl AsRef<Path>) -> Option<PathBuf> {
    Some(p.as_ref().to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::FindingKind;
    use crate::target::{builtin_target, FaultSpec};

    fn sig(kind: FindingKind, root: &str, types: &str) -> FailureSignature {
        FailureSignature { kind, root: root.into(), types: types.into(), byte_index: 3, target: "vex".into() }
    }

    #[test]
    fn dedup_rules() {
        let mut store = FindingStore::default();
        assert!(dedup_finding(&sig(FindingKind::MissingPattern, "add", "i8,i8->i8"), "", 1, &mut store));
        assert!(!dedup_finding(&sig(FindingKind::MissingPattern, "add", "i8,i8->i8"), "", 2, &mut store));
        assert!(dedup_finding(&sig(FindingKind::MissingPattern, "sub", "i8,i8->i8"), "", 3, &mut store));
        assert!(dedup_finding(&sig(FindingKind::InjectedAbort, "add", "i8,i8->i8"), "", 4, &mut store));
        assert_eq!(store.len(), 3);
        assert_eq!(store.records().next().unwrap().first_seen, 1);
    }

    #[test]
    fn small_alpha_campaign() {
        let alpha = builtin_target("alpha").unwrap();
        let cfg =
            CampaignConfig { seed: 3, budget: Budget::Executions(1000), stats_every: 100, ..CampaignConfig::default() };
        let res = run_campaign(&alpha, alpha.default_features(), &cfg).unwrap();
        assert!(!res.corpus.is_empty());
        assert!(res.stats.timeline.len() >= 10);
        assert!(res.findings.records().all(|f| f.signature.kind != FindingKind::VerifierReject));
        for e in &res.corpus {
            assert!(verify_module(&parse_module(&e.text).unwrap()).is_empty());
        }
        let bits: Vec<u64> = res.stats.timeline.iter().map(|r| r.matcher_bits).collect();
        assert!(bits.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn campaigns_are_deterministic() {
        let vex = builtin_target("vex").unwrap();
        let cfg = CampaignConfig {
            seed: 7,
            budget: Budget::Executions(600),
            epoch_every: 200,
            stats_every: 50,
            ..CampaignConfig::default()
        };
        let a = run_campaign(&vex, vex.default_features(), &cfg).unwrap();
        let b = run_campaign(&vex, vex.default_features(), &cfg).unwrap();
        assert_eq!(a.stats, b.stats);
        let ids = |r: &CampaignResult| r.corpus.iter().map(|e| (e.id, e.text.clone())).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        assert_eq!(a.stats.epochs, vec![200, 400, 600]);
        let off = CampaignConfig { guidance: false, ..cfg };
        assert!(run_campaign(&vex, vex.default_features(), &off).unwrap().stats.epochs.is_empty());
    }

    #[test]
    fn injected_faults_are_found_once_and_replay() {
        let vex = builtin_target("vex").unwrap().with_fault(FaultSpec::parse("width=20:abort").unwrap());
        let cfg = CampaignConfig { seed: 1, budget: Budget::Executions(3000), ..CampaignConfig::default() };
        let res = run_campaign(&vex, vex.default_features(), &cfg).unwrap();
        let aborts: Vec<&FindingRecord> =
            res.findings.records().filter(|f| f.signature.kind == FindingKind::InjectedAbort).collect();
        assert!(!aborts.is_empty());
        for f in res.findings.records() {
            let again = replay(&f.reproducer, &vex, vex.default_features()).unwrap();
            assert_eq!(again.finding(), Some(&f.signature));
        }
        for e in res.corpus.iter().take(20) {
            assert_eq!(replay(&e.text, &vex, vex.default_features()).unwrap().verdict, Verdict::Ok);
        }
    }

    #[test]
    fn config_errors() {
        let alpha = builtin_target("alpha").unwrap();
        let bad = CampaignConfig { epoch_every: 0, ..CampaignConfig::default() };
        assert!(matches!(run_campaign(&alpha, alpha.default_features(), &bad), Err(CampaignError::ConfigError(_))));
        let bad = CampaignConfig { budget: Budget::Executions(0), ..CampaignConfig::default() };
        assert!(matches!(run_campaign(&alpha, alpha.default_features(), &bad), Err(CampaignError::ConfigError(_))));
    }

    #[test]
    fn shipped_seeds_load_and_seed_the_corpus() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("seeds");
        let seeds = load_seeds(&dir).unwrap();
        assert!(seeds.len() >= 5);
        for (path, text) in &seeds {
            let m = parse_module(text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(verify_module(&m).is_empty(), "{}", path.display());
        }
        let vex = builtin_target("vex").unwrap();
        let cfg = CampaignConfig {
            seed: 4,
            budget: Budget::Executions(500),
            seeds_dir: Some(dir),
            ..CampaignConfig::default()
        };
        let res = run_campaign(&vex, vex.default_features(), &cfg).unwrap();
        assert_eq!(res.corpus.iter().filter(|e| e.found_at <= seeds.len() as u64).count(), seeds.len());
    }

    #[test]
    fn byte_engine_runs() {
        let alpha = builtin_target("alpha").unwrap();
        let cfg = CampaignConfig {
            seed: 2,
            budget: Budget::Executions(2000),
            engine: Engine::RandomBytes,
            ..CampaignConfig::default()
        };
        let res = run_campaign(&alpha, alpha.default_features(), &cfg).unwrap();
        assert!(res.stats.parse_failures > 0);
        assert!(res.stats.epochs.is_empty());
        for e in &res.corpus {
            assert!(verify_module(&parse_module(&e.text).unwrap()).is_empty());
        }
    }
}
