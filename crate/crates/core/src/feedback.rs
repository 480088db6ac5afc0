//! Matcher coverage decoding and mutation guidance.
//!
//! The bitmap is read back through the lookup table: a pattern counts as
//! covered once any byte of its EMIT entry was read. Uncovered patterns are
//! folded into a [`GuidanceReport`], one line per root.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::coverage::MatcherBitmap;
use crate::ir::{parse_module, Decl};
use crate::target::{Check, LookupTable, Root, TargetSpec, TypeClass};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeedbackError {
    #[error("bitmap covers {bitmap} bytes but the table has {table}")]
    SizeMismatch { bitmap: usize, table: usize },
    #[error("epoch length must be at least 1")]
    ConfigError,
    #[error("report line {line}: {message}")]
    BadReport { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodedPattern {
    pub pattern: u16,
    pub covered: bool,
}

/// One entry per lookup row, in row order. `table_size` is the size of the
/// program the table was compiled with.
pub fn decode_coverage(
    bitmap: &MatcherBitmap,
    lut: &LookupTable,
    table_size: usize,
) -> Result<Vec<DecodedPattern>, FeedbackError> {
    if bitmap.size() != table_size {
        return Err(FeedbackError::SizeMismatch { bitmap: bitmap.size(), table: table_size });
    }
    Ok(lut
        .rows
        .iter()
        .map(|r| DecodedPattern { pattern: r.pattern, covered: bitmap.any_in(r.start as usize, r.end as usize) })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UncoveredRoot {
    pub root: Root,
    pub weight: u32,
    /// Type classes named by the uncovered patterns' checks.
    pub types: Vec<TypeClass>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UncoveredIntrinsic {
    pub decl: Decl,
    pub weight: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GuidanceReport {
    pub roots: Vec<UncoveredRoot>,
    pub intrinsics: Vec<UncoveredIntrinsic>,
    pub epoch: u64,
}

impl GuidanceReport {
    pub fn is_empty(&self) -> bool {
        self.roots.is_empty() && self.intrinsics.is_empty()
    }

    pub fn weight_of(&self, root: &Root) -> Option<u32> {
        self.roots.iter().find(|r| &r.root == root).map(|r| r.weight)
    }

    /// Parses the text form written by `Display`. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<GuidanceReport, FeedbackError> {
        let mut report = GuidanceReport::default();
        for (n, raw) in text.lines().enumerate() {
            let bad = |message: &str| FeedbackError::BadReport { line: n + 1, message: message.to_string() };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("epoch ") {
                report.epoch = rest.trim().parse().map_err(|_| bad("bad epoch"))?;
            } else if let Some(rest) = line.strip_prefix("uncovered-intrinsic ") {
                let (decl, weight) = rest.rsplit_once(" weight=").ok_or_else(|| bad("missing weight"))?;
                let weight = parse_weight(weight).ok_or_else(|| bad("bad weight"))?;
                let m = parse_module(decl).map_err(|e| bad(&e.to_string()))?;
                match <[Decl; 1]>::try_from(m.decls) {
                    Ok([decl]) if m.functions.is_empty() && m.globals.is_empty() => {
                        report.intrinsics.push(UncoveredIntrinsic { decl, weight })
                    }
                    _ => return Err(bad("expected one declaration")),
                }
            } else if let Some(rest) = line.strip_prefix("uncovered ") {
                let mut words = rest.split_whitespace();
                let root = words.next().and_then(Root::parse).ok_or_else(|| bad("bad root"))?;
                let mut weight = None;
                let mut types = Vec::new();
                for w in words {
                    if let Some(v) = w.strip_prefix("weight=") {
                        weight = Some(parse_weight(v).ok_or_else(|| bad("bad weight"))?);
                    } else if let Some(v) = w.strip_prefix("types=") {
                        for c in v.split(',') {
                            types.push(TypeClass::parse(c).ok_or_else(|| bad("bad type class"))?);
                        }
                    } else {
                        return Err(bad("unexpected field"));
                    }
                }
                let weight = weight.ok_or_else(|| bad("missing weight"))?;
                report.roots.push(UncoveredRoot { root, weight, types });
            } else {
                return Err(bad("unknown line"));
            }
        }
        Ok(report)
    }
}

fn parse_weight(s: &str) -> Option<u32> {
    s.parse().ok().filter(|w| *w > 0)
}

impl fmt::Display for GuidanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.roots {
            write!(f, "uncovered {} weight={}", r.root, r.weight)?;
            if !r.types.is_empty() {
                let types: Vec<String> = r.types.iter().map(|t| t.to_string()).collect();
                write!(f, " types={}", types.join(","))?;
            }
            writeln!(f)?;
        }
        for i in &self.intrinsics {
            writeln!(f, "uncovered-intrinsic {} weight={}", i.decl, i.weight)?;
        }
        Ok(())
    }
}

/// Folds decoded coverage into a report. Instruction roots are weighted by
/// their number of uncovered patterns.
pub fn build_report(decoded: &[DecodedPattern], t: &TargetSpec) -> GuidanceReport {
    let mut roots: BTreeMap<Root, (u32, Vec<TypeClass>)> = BTreeMap::new();
    let mut intrinsics: BTreeMap<&str, u32> = BTreeMap::new();
    for d in decoded.iter().filter(|d| !d.covered) {
        let Some(p) = t.patterns.get(d.pattern as usize) else { continue };
        if let Root::Intrinsic(name) = &p.root {
            *intrinsics.entry(name.as_str()).or_default() += 1;
            continue;
        }
        let entry = roots.entry(p.root.clone()).or_default();
        entry.0 += 1;
        for c in &p.checks {
            if let Check::Type(_, class) = c {
                if !entry.1.contains(class) {
                    entry.1.push(*class);
                }
            }
        }
    }
    GuidanceReport {
        roots: roots
            .into_iter()
            .map(|(root, (weight, mut types))| {
                types.sort();
                UncoveredRoot { root, weight, types }
            })
            .collect(),
        intrinsics: t
            .intrinsics
            .iter()
            .filter_map(|d| intrinsics.get(d.name.as_str()).map(|w| UncoveredIntrinsic { decl: d.clone(), weight: *w }))
            .collect(),
        epoch: 0,
    }
}

/// Fires once every `every` executions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochSchedule {
    every: u64,
}

impl EpochSchedule {
    pub const DEFAULT: u64 = 10_000;

    pub fn new(every: u64) -> Result<EpochSchedule, FeedbackError> {
        if every == 0 {
            return Err(FeedbackError::ConfigError);
        }
        Ok(EpochSchedule { every })
    }

    pub fn every(self) -> u64 {
        self.every
    }

    /// True when `executions` (counted from 1) closes an epoch.
    pub fn fires(self, executions: u64) -> bool {
        executions > 0 && executions.is_multiple_of(self.every)
    }
}

impl Default for EpochSchedule {
    fn default() -> Self {
        EpochSchedule { every: Self::DEFAULT }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::CoverageState;
    use crate::select::Selector;
    use crate::target::{builtin_target, compile_patterns, EntryKind};

    #[test]
    fn empty_and_full_bitmaps() {
        let vex = builtin_target("vex").unwrap();
        let (prog, lut) = compile_patterns(&vex).unwrap();
        let mut bm = MatcherBitmap::new(prog.size());
        let d = decode_coverage(&bm, &lut, prog.size()).unwrap();
        assert_eq!(d.len(), vex.patterns.len());
        assert!(d.iter().all(|d| !d.covered));
        let report = build_report(&d, &vex);
        assert_eq!(report.intrinsics.len(), vex.intrinsics.len());
        let total: u32 = report.roots.iter().map(|r| r.weight).sum::<u32>()
            + report.intrinsics.iter().map(|i| i.weight).sum::<u32>();
        assert_eq!(total as usize, vex.patterns.len());
        bm.set_range(0, prog.size()).unwrap();
        let d = decode_coverage(&bm, &lut, prog.size()).unwrap();
        assert!(d.iter().all(|d| d.covered));
        assert!(build_report(&d, &vex).is_empty());
    }

    #[test]
    fn size_mismatch() {
        let vex = builtin_target("vex").unwrap();
        let (prog, lut) = compile_patterns(&vex).unwrap();
        let bm = MatcherBitmap::new(prog.size() - 1);
        assert!(matches!(decode_coverage(&bm, &lut, prog.size()), Err(FeedbackError::SizeMismatch { .. })));
    }

    #[test]
    fn covered_intrinsic_leaves_the_report() {
        let vex = builtin_target("vex").unwrap();
        let (prog, lut) = compile_patterns(&vex).unwrap();
        let m = parse_module(
            "declare i32 @llvm.ctpop.i32(i32)\n\
             define i32 @f(i32 %a) { E: %s = call i32 @llvm.ctpop.i32(i32 %a)  ret i32 %s }",
        )
        .unwrap();
        let mut cov = CoverageState::new(prog.size());
        let mut sel = Selector::new(&vex, &prog, vex.default_features()).with_trace();
        let before = build_report(&decode_coverage(&cov.virgin_matcher, &lut, prog.size()).unwrap(), &vex);
        assert!(before.intrinsics.iter().any(|i| i.decl.name == "llvm.ctpop.i32"));
        cov.begin_run();
        sel.select_module(&m, &mut cov).unwrap();
        cov.commit();
        let decoded = decode_coverage(&cov.virgin_matcher, &lut, prog.size()).unwrap();
        let after = build_report(&decoded, &vex);
        assert!(!after.intrinsics.iter().any(|i| i.decl.name == "llvm.ctpop.i32"));
        assert_eq!(after.intrinsics.len(), before.intrinsics.len() - 1);
        // the trace names exactly the covered patterns
        let emitted: std::collections::BTreeSet<u16> = sel
            .trace
            .unwrap()
            .iter()
            .filter(|(_, k)| *k == EntryKind::Emit)
            .filter_map(|(i, _)| lut.pattern_at(*i))
            .collect();
        let covered: std::collections::BTreeSet<u16> =
            decoded.iter().filter(|d| d.covered).map(|d| d.pattern).collect();
        assert_eq!(emitted, covered);
    }

    #[test]
    fn report_text_round_trips() {
        let vex = builtin_target("vex").unwrap();
        let (prog, lut) = compile_patterns(&vex).unwrap();
        let d = decode_coverage(&MatcherBitmap::new(prog.size()), &lut, prog.size()).unwrap();
        let report = build_report(&d, &vex);
        let text = report.to_string();
        assert!(text.contains("uncovered-intrinsic declare i64 @llvm.smax.i64(i64, i64) weight=2"));
        assert!(text.lines().any(|l| l.starts_with("uncovered add-vector weight=")));
        assert_eq!(GuidanceReport::parse(&text).unwrap(), report);
        assert!(GuidanceReport::parse("uncovered add weight=0").is_err());
        assert!(GuidanceReport::parse("uncovered nonsense weight=1").is_err());
    }

    #[test]
    fn epochs() {
        assert_eq!(EpochSchedule::new(0), Err(FeedbackError::ConfigError));
        let one = EpochSchedule::new(1).unwrap();
        assert!((1..100).all(|n| one.fires(n)));
        let s = EpochSchedule::default();
        let fired: Vec<u64> = (1..=25_000).filter(|n| s.fires(*n)).collect();
        assert_eq!(fired, vec![10_000, 20_000]);
    }
}
