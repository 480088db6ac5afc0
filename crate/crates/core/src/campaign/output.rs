//! Seed loading and the on-disk layout of a finished campaign.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{CampaignError, CampaignResult};

pub const STATS_HEADER: &str = "executions,corpus,edge_buckets,matcher_bits,findings";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |source| CampaignError::Io { path: path.to_path_buf(), source }
}

/// The `*.ir` files of `dir`, sorted by file name.
pub fn load_seeds(dir: &Path) -> Result<Vec<(PathBuf, String)>, CampaignError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ir") && p.is_file())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(io(&p))?;
            Ok((p, text))
        })
        .collect()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CampaignError> {
    fs::write(path, contents).map_err(io(path))
}

fn mkdir(path: &Path) -> Result<(), CampaignError> {
    fs::create_dir_all(path).map_err(io(path))
}

/// Renders the timeline as CSV.
pub fn stats_csv(res: &CampaignResult) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for r in &res.stats.timeline {
        let _ = writeln!(s, "{},{},{},{},{}", r.executions, r.corpus, r.edge_buckets, r.matcher_bits, r.findings);
    }
    s
}

/// Writes `corpus/`, `findings/`, `stats.csv`, `coverage.dump` and, when
/// guidance ran, `guidance/` under `dir`.
pub fn write_output(dir: &Path, res: &CampaignResult) -> Result<(), CampaignError> {
    let corpus = dir.join("corpus");
    let findings = dir.join("findings");
    mkdir(&corpus)?;
    mkdir(&findings)?;
    for e in &res.corpus {
        write(&corpus.join(format!("{:06}.ir", e.id)), &e.text)?;
    }
    for f in res.findings.records() {
        let h = f.signature.hash_hex();
        write(&findings.join(format!("{h}.ir")), &f.reproducer)?;
        write(&findings.join(format!("{h}.txt")), format!("{}\nfirst_seen={}\n", f.signature, f.first_seen))?;
    }
    write(&dir.join("stats.csv"), stats_csv(res))?;
    write(&dir.join("coverage.dump"), res.coverage.to_dump())?;
    if !res.reports.is_empty() {
        let g = dir.join("guidance");
        mkdir(&g)?;
        for r in &res.reports {
            write(&g.join(format!("epoch-{:03}.txt", r.epoch)), r.to_string())?;
        }
    }
    Ok(())
}
