//! Replay buffer, filtering and preference-pair construction.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{to_pretty_json, IoError};
use crate::trace::{CandidateProof, TheoremRecord};

pub const RESERVOIR_SCHEMA: &str = "improver2-reservoir/1";

const MARK_STREAM: u64 = 1;
const PAIR_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid buffer configuration: {0}")]
    Config(String),
    #[error("reservoir: {0}")]
    Reservoir(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    Mark,
    Join,
    Replace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BufferConfig {
    pub rho: f64,
    pub mode: ReplayMode,
    pub pi_max: f64,
    pub gamma: f64,
    pub winners: usize,
    pub losers: usize,
    pub seed: u64,
}

impl BufferConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [("rho", self.rho), ("piMax", self.pi_max), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.winners == 0 || self.losers == 0 {
            return Err(PipelineError::Config("winners and losers must be positive".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Frontier,
    Replay,
}

/// Identity of a problem: context, statement and baseline proof.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProblemInfo {
    pub theorem_name: String,
    pub project_name: String,
    pub context_id: String,
    pub statement_text: String,
    pub original_proof_text: String,
}

impl From<&TheoremRecord> for ProblemInfo {
    fn from(r: &TheoremRecord) -> Self {
        ProblemInfo {
            theorem_name: r.theorem_name.clone(),
            project_name: r.project_name.clone(),
            context_id: r.context_id.clone(),
            statement_text: r.statement_text.clone(),
            original_proof_text: r.original_proof_text.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProblemEntry {
    #[serde(flatten)]
    pub problem: ProblemInfo,
    pub candidates: Vec<CandidateProof>,
    pub tag: Tag,
    pub improvement_rate: f64,
}

impl ProblemEntry {
    pub fn new(problem: ProblemInfo, candidates: Vec<CandidateProof>) -> Self {
        let mut e = ProblemEntry {
            problem,
            candidates,
            tag: Tag::Frontier,
            improvement_rate: 0.0,
        };
        e.improvement_rate = improvement_rate(&e);
        e
    }

    pub fn name(&self) -> &str {
        &self.problem.theorem_name
    }
}

/// Fraction of candidates that verify and strictly improve.
pub fn improvement_rate(entry: &ProblemEntry) -> f64 {
    if entry.candidates.is_empty() {
        return 0.0;
    }
    let improving = entry.candidates.iter().filter(|c| c.is_improving()).count();
    improving as f64 / entry.candidates.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReservoirEntry {
    pub best_pi: f64,
    pub best_iteration: u64,
    /// The problem as it appeared in the most recent replay dataset.
    pub snapshot: ProblemEntry,
}

/// Replay-eligible problems carried across iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Reservoir {
    pub schema: String,
    /// Number of shaping iterations folded into this reservoir.
    pub iteration: u64,
    pub entries: BTreeMap<String, ReservoirEntry>,
}

impl Default for Reservoir {
    fn default() -> Self {
        Reservoir {
            schema: RESERVOIR_SCHEMA.to_string(),
            iteration: 0,
            entries: BTreeMap::new(),
        }
    }
}

impl Reservoir {
    pub fn parse(text: &str) -> Result<Reservoir, PipelineError> {
        let r: Reservoir = serde_json::from_str(text).map_err(|e| PipelineError::Reservoir(e.to_string()))?;
        if r.schema != RESERVOIR_SCHEMA {
            return Err(PipelineError::Reservoir(format!(
                "unsupported schema `{}` (expected {RESERVOIR_SCHEMA})",
                r.schema
            )));
        }
        Ok(r)
    }

    /// Missing file means an empty reservoir (first iteration).
    pub fn load(path: impl AsRef<Path>) -> Result<Reservoir, PipelineError> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(text) => Reservoir::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Reservoir::default()),
            Err(e) => Err(IoError::io(path, e).into()),
        }
    }

    pub fn to_json(&self) -> String {
        to_pretty_json(self)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarkOutcome {
    pub entries: Vec<ProblemEntry>,
    pub demoted: Vec<String>,
    /// Names of frontier problems replaced by reservoir items, with the
    /// replacement.
    pub replaced: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl MarkOutcome {
    pub fn replay_count(&self) -> usize {
        self.entries.iter().filter(|e| e.tag == Tag::Replay).count()
    }
}

/// Tags entries as replay or frontier so that the replay share approaches
/// `rho`: reservoir members are tagged replay, then the excess is demoted
/// (entries above `piMax` first, then by descending rate), or a shortfall is
/// filled by replacing seeded-uniform frontier entries with reservoir items
/// in descending `bestPi` order.
pub fn mark_replay(entries: Vec<ProblemEntry>, reservoir: &Reservoir, config: &BufferConfig) -> MarkOutcome {
    let mut out = MarkOutcome {
        entries,
        ..MarkOutcome::default()
    };
    let n = out.entries.len();
    let target = (config.rho * n as f64 + 1e-9).floor() as usize;
    for e in &mut out.entries {
        e.tag = if reservoir.entries.contains_key(e.name()) {
            Tag::Replay
        } else {
            Tag::Frontier
        };
    }
    let replay = out.replay_count();
    if replay > target {
        let mut order: Vec<usize> = (0..n).filter(|&i| out.entries[i].tag == Tag::Replay).collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&out.entries[a], &out.entries[b]);
            let over = |e: &ProblemEntry| e.improvement_rate > config.pi_max;
            over(eb)
                .cmp(&over(ea))
                .then(eb.improvement_rate.total_cmp(&ea.improvement_rate))
                .then(ea.name().cmp(eb.name()))
        });
        for &i in order.iter().take(replay - target) {
            out.entries[i].tag = Tag::Frontier;
            out.demoted.push(out.entries[i].name().to_string());
        }
    } else if replay < target {
        let present: HashSet<&str> = out.entries.iter().map(|e| e.name()).collect();
        let mut pool: Vec<&ReservoirEntry> = reservoir
            .entries
            .iter()
            .filter(|(name, _)| !present.contains(name.as_str()))
            .map(|(_, r)| r)
            .collect();
        pool.sort_by(|a, b| {
            b.best_pi
                .total_cmp(&a.best_pi)
                .then(a.snapshot.name().cmp(b.snapshot.name()))
        });
        let frontier: Vec<usize> = (0..n).filter(|&i| out.entries[i].tag == Tag::Frontier).collect();
        let take = (target - replay).min(pool.len()).min(frontier.len());
        if take < target - replay {
            out.warnings.push(format!(
                "replay target {target} of {n} not reachable: {replay} eligible, {} reservoir items available",
                pool.len()
            ));
        }
        let mut rng = config.rng(MARK_STREAM);
        let mut chosen: Vec<usize> = sample(&mut rng, frontier.len(), take).into_iter().map(|k| frontier[k]).collect();
        chosen.sort_unstable();
        for (slot, item) in chosen.into_iter().zip(pool) {
            let mut entry = item.snapshot.clone();
            entry.tag = Tag::Replay;
            entry.improvement_rate = improvement_rate(&entry);
            out.replaced.push((out.entries[slot].name().to_string(), entry.name().to_string()));
            out.entries[slot] = entry;
        }
    }
    out
}

/// Whitespace-collapsed proof text used to identify duplicate candidates.
pub fn normalize_proof_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splices the previous iteration's candidates into a replay entry.
/// Returns a warning when `join`/`replace` had no counterpart to use.
pub fn merge_candidates(
    current: ProblemEntry,
    previous: Option<&ProblemEntry>,
    mode: ReplayMode,
) -> (ProblemEntry, Option<String>) {
    if current.tag == Tag::Frontier || mode == ReplayMode::Mark {
        return (current, None);
    }
    let Some(previous) = previous else {
        let warning = format!(
            "{}: no previous candidates for {mode:?} merge; keeping current candidates",
            current.name()
        );
        return (current, Some(warning));
    };
    let mut merged = current;
    match mode {
        ReplayMode::Mark => unreachable!(),
        ReplayMode::Replace => merged.candidates = previous.candidates.clone(),
        ReplayMode::Join => {
            let mut seen = HashSet::new();
            let all = std::mem::take(&mut merged.candidates)
                .into_iter()
                .chain(previous.candidates.iter().cloned());
            merged.candidates = all
                .filter(|c| seen.insert(normalize_proof_text(&c.proof_text)))
                .enumerate()
                .map(|(i, mut c)| {
                    c.candidate_index = i;
                    c
                })
                .collect();
        }
    }
    merged.improvement_rate = improvement_rate(&merged);
    (merged, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilteredEntry {
    #[serde(flatten)]
    pub problem: ProblemInfo,
    pub winners: Vec<CandidateProof>,
    pub losers: Vec<CandidateProof>,
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOutcome {
    pub entries: Vec<FilteredEntry>,
    /// `None` when no scores survived the filter.
    pub threshold: Option<f64>,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Nearest-rank percentile: element `⌈γN⌉` (0-based, clamped) of the
/// ascending scores.
pub fn nearest_rank(scores: &[f64], gamma: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (gamma * sorted.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    Some(sorted[rank.min(sorted.len() - 1)])
}

/// Drops problems above `piMax` and splits the rest into winners
/// (verified with score above the global percentile threshold) and losers.
pub fn filter_dataset(entries: &[ProblemEntry], config: &BufferConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    let surviving: Vec<&ProblemEntry> = entries
        .iter()
        .filter(|e| {
            let keep = e.improvement_rate <= config.pi_max;
            if !keep {
                out.dropped.push(e.name().to_string());
            }
            keep
        })
        .collect();
    if surviving.is_empty() {
        out.warnings.push("no problems survive the improvement-rate cap".into());
        return out;
    }
    let pool: Vec<f64> = surviving
        .iter()
        .flat_map(|e| e.candidates.iter().filter_map(CandidateProof::score))
        .collect();
    out.threshold = nearest_rank(&pool, config.gamma);
    let delta = out.threshold.unwrap_or(f64::INFINITY);
    for e in surviving {
        let (winners, losers) = e
            .candidates
            .iter()
            .cloned()
            .partition(|c| c.is_verified() && c.score().is_some_and(|s| s > delta));
        out.entries.push(FilteredEntry {
            problem: e.problem.clone(),
            winners,
            losers,
            threshold: delta,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PairKind {
    WinnerWinner,
    WinnerLoser,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PreferencePair {
    #[serde(flatten)]
    pub problem: ProblemInfo,
    pub chosen: String,
    pub rejected: String,
    pub pair_kind: PairKind,
    pub chosen_score: f64,
    pub rejected_score: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rejected_unscoreable: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairOutcome {
    pub pairs: Vec<PreferencePair>,
    /// Entries that produced no pairs because they had no winners.
    pub skipped: Vec<String>,
}

/// Brings `items` to exactly `size` elements: a seeded uniform subset when
/// too long, seeded uniform duplicates appended when too short.
fn resize_uniform<T: Clone>(items: Vec<T>, size: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let len = items.len();
    if len == 0 || len == size {
        return items;
    }
    if len > size {
        let mut keep = sample(rng, len, size).into_vec();
        keep.sort_unstable();
        return keep.into_iter().map(|i| items[i].clone()).collect();
    }
    let mut out = items;
    for _ in len..size {
        let i = rng.random_range(0..len);
        out.push(out[i].clone());
    }
    out
}

/// Winners and losers of one entry after deduplication and resizing.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSets<'a> {
    pub winners: Vec<&'a CandidateProof>,
    pub losers: Vec<&'a CandidateProof>,
}

/// Per-entry pairing sets; `None` for entries without winners. Winners are
/// deduplicated by score and losers by text before seeded resizing.
pub fn select_pair_sets<'a>(filtered: &'a [FilteredEntry], config: &BufferConfig) -> Vec<Option<PairSets<'a>>> {
    let mut rng = config.rng(PAIR_STREAM);
    filtered
        .iter()
        .map(|entry| {
            let mut seen_scores = HashSet::new();
            let winners: Vec<&CandidateProof> = entry
                .winners
                .iter()
                .filter(|c| seen_scores.insert(c.score().map(f64::to_bits)))
                .collect();
            if winners.is_empty() {
                return None;
            }
            let mut seen_text = HashSet::new();
            let losers: Vec<&CandidateProof> = entry
                .losers
                .iter()
                .filter(|c| seen_text.insert(c.proof_text.as_str()))
                .collect();
            Some(PairSets {
                winners: resize_uniform(winners, config.winners, &mut rng),
                losers: resize_uniform(losers, config.losers, &mut rng),
            })
        })
        .collect()
}

pub fn create_pairs(filtered: &[FilteredEntry], config: &BufferConfig) -> PairOutcome {
    let mut out = PairOutcome::default();
    for (entry, sets) in filtered.iter().zip(select_pair_sets(filtered, config)) {
        let Some(PairSets { winners, losers }) = sets else {
            out.skipped.push(entry.problem.theorem_name.clone());
            continue;
        };
        let score = |c: &CandidateProof| c.score().unwrap_or(f64::NEG_INFINITY);
        for w1 in &winners {
            for w2 in &winners {
                if score(w1) > score(w2) {
                    out.pairs.push(PreferencePair {
                        problem: entry.problem.clone(),
                        chosen: w1.proof_text.clone(),
                        rejected: w2.proof_text.clone(),
                        pair_kind: PairKind::WinnerWinner,
                        chosen_score: score(w1),
                        rejected_score: w2.score(),
                        rejected_unscoreable: false,
                    });
                }
            }
        }
        for w in &winners {
            for l in &losers {
                out.pairs.push(PreferencePair {
                    problem: entry.problem.clone(),
                    chosen: w.proof_text.clone(),
                    rejected: l.proof_text.clone(),
                    pair_kind: PairKind::WinnerLoser,
                    chosen_score: score(w),
                    rejected_score: l.score(),
                    rejected_unscoreable: l.score().is_none(),
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShapeReport {
    pub iteration: u64,
    pub entries: usize,
    pub replay_entries: usize,
    pub demoted: Vec<String>,
    pub replaced: Vec<(String, String)>,
    pub dropped_by_pi_max: Vec<String>,
    pub threshold: Option<f64>,
    pub winners: usize,
    pub losers: usize,
    pub winner_winner_pairs: usize,
    pub winner_loser_pairs: usize,
    pub skipped_without_winners: Vec<String>,
    pub reservoir_size: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeOutcome {
    pub pairs: Vec<PreferencePair>,
    pub reservoir: Reservoir,
    pub replay: Vec<ProblemEntry>,
    pub report: ShapeReport,
}

/// One data-shaping round: mark, merge, filter, pair, and fold the new
/// results into the reservoir.
pub fn shape_iteration(
    new_data: Vec<ProblemEntry>,
    reservoir: &Reservoir,
    config: &BufferConfig,
) -> Result<ShapeOutcome, PipelineError> {
    config.validate()?;
    let iteration = reservoir.iteration;
    let mut fresh: Vec<ProblemEntry> = new_data;
    for e in &mut fresh {
        e.tag = Tag::Frontier;
        e.improvement_rate = improvement_rate(e);
    }
    let fresh_rates: BTreeMap<String, f64> = fresh.iter().map(|e| (e.name().to_string(), e.improvement_rate)).collect();

    let marked = mark_replay(fresh, reservoir, config);
    let mut report = ShapeReport {
        iteration,
        entries: marked.entries.len(),
        replay_entries: marked.replay_count(),
        demoted: marked.demoted.clone(),
        replaced: marked.replaced.clone(),
        warnings: marked.warnings.clone(),
        ..ShapeReport::default()
    };

    let mut replay = Vec::with_capacity(marked.entries.len());
    for e in marked.entries {
        let previous = reservoir.entries.get(e.name()).map(|r| &r.snapshot);
        let (merged, warning) = merge_candidates(e, previous, config.mode);
        report.warnings.extend(warning);
        replay.push(merged);
    }

    let filtered = filter_dataset(&replay, config);
    report.dropped_by_pi_max = filtered.dropped.clone();
    report.threshold = filtered.threshold;
    report.warnings.extend(filtered.warnings.iter().cloned());
    report.winners = filtered.entries.iter().map(|e| e.winners.len()).sum();
    report.losers = filtered.entries.iter().map(|e| e.losers.len()).sum();

    let paired = create_pairs(&filtered.entries, config);
    report.winner_winner_pairs = paired.pairs.iter().filter(|p| p.pair_kind == PairKind::WinnerWinner).count();
    report.winner_loser_pairs = paired.pairs.len() - report.winner_winner_pairs;
    report.skipped_without_winners = paired.skipped;

    let mut updated = reservoir.clone();
    updated.iteration = iteration + 1;
    for e in &replay {
        let Some(&pi) = fresh_rates.get(e.name()) else {
            continue;
        };
        if pi > 0.0 {
            let slot = updated.entries.entry(e.name().to_string()).or_insert_with(|| ReservoirEntry {
                best_pi: pi,
                best_iteration: iteration,
                snapshot: e.clone(),
            });
            if pi > slot.best_pi {
                slot.best_pi = pi;
                slot.best_iteration = iteration;
            }
        }
    }
    for e in &replay {
        if let Some(slot) = updated.entries.get_mut(e.name()) {
            slot.snapshot = e.clone();
        }
    }
    report.reservoir_size = updated.entries.len();

    Ok(ShapeOutcome {
        pairs: paired.pairs,
        reservoir: updated,
        replay,
        report,
    })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn config() -> BufferConfig {
        BufferConfig {
            rho: 0.3,
            mode: ReplayMode::Join,
            pi_max: 1.0,
            gamma: 0.0,
            winners: 2,
            losers: 1,
            seed: 7,
        }
    }

    pub fn info(name: &str) -> ProblemInfo {
        ProblemInfo {
            theorem_name: name.to_string(),
            project_name: "p".into(),
            context_id: "ctx".into(),
            statement_text: format!("theorem {name} : P"),
            original_proof_text: format!("theorem {name} : P := by\n  rfl"),
        }
    }

    /// Candidate with an explicit outcome; `None` score means unscoreable.
    pub fn cand(i: usize, text: &str, verified: bool, score: Option<f64>) -> CandidateProof {
        let mut c = CandidateProof::new(i, text);
        c.verified = Some(verified);
        match score {
            Some(s) => {
                c.improvement_score = Some(s);
                c.metric_value = Some(s);
            }
            None => c.unscoreable = true,
        }
        c
    }

    pub fn entry(name: &str, improving: usize, total: usize) -> ProblemEntry {
        let cands = (0..total)
            .map(|i| {
                let s = if i < improving { 1.0 } else { 0.0 };
                cand(i, &format!("{name} proof {i}"), true, Some(s))
            })
            .collect();
        ProblemEntry::new(info(name), cands)
    }

    pub fn reservoir_of(items: &[(&str, f64)]) -> Reservoir {
        let mut r = Reservoir::default();
        for (name, pi) in items {
            r.entries.insert(
                name.to_string(),
                ReservoirEntry {
                    best_pi: *pi,
                    best_iteration: 0,
                    snapshot: entry(name, 1, 4),
                },
            );
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn improvement_rate_counts_verified_improving_only() {
        let none = ProblemEntry::new(info("a"), (0..16).map(|i| cand(i, "x", false, None)).collect());
        assert_eq!(none.improvement_rate, 0.0);
        let mut cands: Vec<CandidateProof> = (0..16).map(|i| cand(i, "x", true, Some(0.0))).collect();
        for c in cands.iter_mut().take(4) {
            c.improvement_score = Some(2.0);
        }
        assert_eq!(improvement_rate(&ProblemEntry::new(info("a"), cands)), 0.25);
        let mixed = vec![
            cand(0, "a", true, Some(1.0)),
            cand(1, "b", true, Some(-1.0)),
            cand(2, "c", false, Some(3.0)),
            cand(3, "d", false, None),
        ];
        assert_eq!(improvement_rate(&ProblemEntry::new(info("m"), mixed)), 0.25);
    }

    #[test]
    fn rho_zero_leaves_everything_frontier() {
        let entries: Vec<_> = (0..5).map(|i| entry(&format!("t{i}"), 1, 4)).collect();
        let res = reservoir_of(&[("t0", 0.5), ("t1", 0.5), ("z", 1.0)]);
        let cfg = BufferConfig { rho: 0.0, ..config() };
        let out = mark_replay(entries.clone(), &res, &cfg);
        assert_eq!(out.replay_count(), 0);
        assert_eq!(out.entries.iter().map(|e| e.name()).collect::<Vec<_>>(), entries.iter().map(|e| e.name()).collect::<Vec<_>>());
    }

    #[test]
    fn excess_eligible_are_demoted_easiest_first() {
        // 10 entries, 6 eligible with rates 1/8..6/8, rho 0.3
        let entries: Vec<_> = (0..10).map(|i| entry(&format!("t{i}"), if i < 6 { i + 1 } else { 0 }, 8)).collect();
        let res = reservoir_of(&(0..6).map(|i| (["t0", "t1", "t2", "t3", "t4", "t5"][i], 0.5)).collect::<Vec<_>>());
        let out = mark_replay(entries, &res, &config());
        assert_eq!(out.replay_count(), 3);
        assert_eq!(out.demoted, vec!["t5", "t4", "t3"]);
        let replay: Vec<&str> = out.entries.iter().filter(|e| e.tag == Tag::Replay).map(|e| e.name()).collect();
        assert_eq!(replay, vec!["t0", "t1", "t2"]);
    }

    #[test]
    fn demotion_prefers_entries_above_the_cap() {
        let entries = vec![entry("a", 2, 4), entry("b", 4, 4), entry("c", 1, 4)];
        let res = reservoir_of(&[("a", 0.1), ("b", 0.1), ("c", 0.1)]);
        let cfg = BufferConfig { rho: 0.34, pi_max: 0.4, ..config() };
        let out = mark_replay(entries, &res, &cfg);
        assert_eq!(out.demoted, vec!["b", "a"]);
    }

    #[test]
    fn shortfall_is_filled_from_reservoir_deterministically() {
        let entries: Vec<_> = (0..10).map(|i| entry(&format!("t{i}"), 0, 4)).collect();
        let res = reservoir_of(&[("t0", 0.5), ("r1", 0.9), ("r2", 0.2), ("r3", 0.7), ("r4", 0.7), ("r5", 0.1)]);
        let a = mark_replay(entries.clone(), &res, &config());
        assert_eq!(a.replay_count(), 3);
        assert_eq!(a.entries.len(), 10);
        assert_eq!(a.replaced.len(), 2);
        let inserted: Vec<&str> = a.replaced.iter().map(|(_, r)| r.as_str()).collect();
        assert_eq!(inserted, vec!["r1", "r3"]);
        assert!(a.replaced.iter().all(|(old, _)| old != "t0"));
        let b = mark_replay(entries.clone(), &res, &config());
        assert_eq!(a, b);
        let other = mark_replay(entries, &res, &BufferConfig { seed: 99, ..config() });
        assert_eq!(other.replay_count(), 3);
    }

    #[test]
    fn unreachable_target_warns() {
        let entries: Vec<_> = (0..4).map(|i| entry(&format!("t{i}"), 0, 4)).collect();
        let out = mark_replay(entries, &Reservoir::default(), &BufferConfig { rho: 1.0, ..config() });
        assert_eq!(out.replay_count(), 0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn merge_modes() {
        let mut cur = entry("a", 1, 16);
        cur.tag = Tag::Replay;
        let mut prev = entry("a", 0, 16);
        for c in &mut prev.candidates {
            c.proof_text = format!("old {}", c.proof_text);
        }
        assert_eq!(merge_candidates(cur.clone(), Some(&prev), ReplayMode::Mark).0, cur);
        assert_eq!(merge_candidates(cur.clone(), Some(&prev), ReplayMode::Join).0.candidates.len(), 32);
        let replaced = merge_candidates(cur.clone(), Some(&prev), ReplayMode::Replace).0;
        assert_eq!(replaced.candidates, prev.candidates);
        assert_eq!(replaced.improvement_rate, 0.0);

        for i in 0..4 {
            prev.candidates[i].proof_text = format!("  {}\n", cur.candidates[i].proof_text.replace(' ', "\t "));
        }
        let joined = merge_candidates(cur.clone(), Some(&prev), ReplayMode::Join).0;
        let oracle: HashSet<String> = cur
            .candidates
            .iter()
            .chain(&prev.candidates)
            .map(|c| c.proof_text.split_whitespace().collect::<Vec<_>>().join(" "))
            .collect();
        assert_eq!(joined.candidates.len(), 28);
        assert_eq!(joined.candidates.len(), oracle.len());

        let (kept, warn) = merge_candidates(cur.clone(), None, ReplayMode::Join);
        assert_eq!(kept, cur);
        assert!(warn.is_some());
        let frontier = entry("f", 1, 2);
        assert_eq!(merge_candidates(frontier.clone(), Some(&prev), ReplayMode::Replace).0, frontier);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let scores: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(nearest_rank(&scores, 0.5), Some(5.0));
        assert_eq!(nearest_rank(&scores, 0.0), Some(0.0));
        assert_eq!(nearest_rank(&scores, 1.0), Some(9.0));
        assert_eq!(nearest_rank(&[], 0.5), None);
    }

    #[test]
    fn filter_uses_strict_threshold() {
        let cands: Vec<_> = (0..10).map(|i| cand(i, &format!("p{i}"), true, Some(i as f64))).collect();
        let e = ProblemEntry::new(info("a"), cands);
        let out = filter_dataset(&[e], &BufferConfig { gamma: 0.5, ..config() });
        assert_eq!(out.threshold, Some(5.0));
        let w: Vec<f64> = out.entries[0].winners.iter().filter_map(|c| c.score()).collect();
        assert_eq!(w, vec![6.0, 7.0, 8.0, 9.0]);
        assert_eq!(out.entries[0].losers.len(), 6);

        let tie = ProblemEntry::new(info("t"), (0..4).map(|i| cand(i, "x", true, Some(2.0))).collect());
        let out = filter_dataset(&[tie], &BufferConfig { gamma: 0.0, ..config() });
        assert!(out.entries[0].winners.is_empty());
    }

    #[test]
    fn filter_drops_easy_problems_and_ignores_unscoreable_in_pool() {
        let easy = entry("easy", 9, 10);
        let mut hard = entry("hard", 1, 10);
        hard.candidates.push(cand(10, "broken", false, None));
        let out = filter_dataset(&[easy, hard], &BufferConfig { pi_max: 0.5, ..config() });
        assert_eq!(out.dropped, vec!["easy"]);
        assert_eq!(out.entries.len(), 1);
        assert_eq!(out.threshold, Some(0.0));
        assert_eq!(out.entries[0].winners.len() + out.entries[0].losers.len(), 11);

        let all_gone = filter_dataset(&[entry("x", 4, 4)], &BufferConfig { pi_max: 0.5, ..config() });
        assert!(all_gone.entries.is_empty());
        assert_eq!(all_gone.warnings.len(), 1);
    }

    fn filtered(winners: &[f64], losers: &[&str]) -> FilteredEntry {
        FilteredEntry {
            problem: info("t"),
            winners: winners.iter().enumerate().map(|(i, s)| cand(i, &format!("w{i}"), true, Some(*s))).collect(),
            losers: losers.iter().enumerate().map(|(i, t)| cand(i, t, false, None)).collect(),
            threshold: 0.0,
        }
    }

    #[test]
    fn pairs_for_two_winners_and_one_loser() {
        let out = create_pairs(&[filtered(&[3.0, 1.0], &["bad"])], &config());
        let ww: Vec<_> = out.pairs.iter().filter(|p| p.pair_kind == PairKind::WinnerWinner).collect();
        assert_eq!(ww.len(), 1);
        assert_eq!((ww[0].chosen_score, ww[0].rejected_score), (3.0, Some(1.0)));
        assert_eq!(out.pairs.len(), 3);
        assert!(out.pairs.iter().filter(|p| p.pair_kind == PairKind::WinnerLoser).all(|p| p.rejected_unscoreable));
    }

    #[test]
    fn equal_winners_collapse_to_one() {
        let cfg = BufferConfig { winners: 4, losers: 3, ..config() };
        let out = create_pairs(&[filtered(&[2.0, 2.0, 2.0], &["a", "b", "a"])], &cfg);
        assert!(out.pairs.iter().all(|p| p.pair_kind == PairKind::WinnerLoser));
        assert_eq!(out.pairs.len(), 4 * 3);
    }

    #[test]
    fn no_winners_no_pairs_and_no_losers_only_ww() {
        let out = create_pairs(&[filtered(&[], &["a"])], &config());
        assert!(out.pairs.is_empty());
        assert_eq!(out.skipped, vec!["t"]);
        let out = create_pairs(&[filtered(&[1.0, 2.0], &[])], &config());
        assert_eq!(out.pairs.len(), 1);
    }

    proptest! {
        #[test]
        fn winners_and_losers_partition_candidates(
            scores in prop::collection::vec((any::<bool>(), prop::option::of(-5i32..5)), 0..30),
            gamma in 0.0f64..=1.0,
        ) {
            let cands: Vec<_> = scores.iter().enumerate()
                .map(|(i, (v, s))| cand(i, &format!("c{i}"), *v, s.map(f64::from)))
                .collect();
            let e = ProblemEntry::new(info("a"), cands.clone());
            let out = filter_dataset(&[e], &BufferConfig { gamma, ..config() });
            let f = &out.entries[0];
            prop_assert_eq!(f.winners.len() + f.losers.len(), cands.len());
            let mut idx: Vec<usize> = f.winners.iter().chain(&f.losers).map(|c| c.candidate_index).collect();
            idx.sort_unstable();
            prop_assert_eq!(idx, (0..cands.len()).collect::<Vec<_>>());
            for w in &f.winners {
                prop_assert!(w.is_verified() && w.score().unwrap() > f.threshold);
            }
        }
    }

    #[test]
    fn first_iteration_populates_reservoir() {
        let data = vec![entry("a", 2, 4), entry("b", 0, 4), entry("c", 4, 4)];
        let out = shape_iteration(data, &Reservoir::default(), &config()).unwrap();
        assert_eq!(out.reservoir.iteration, 1);
        assert_eq!(out.reservoir.entries.keys().collect::<Vec<_>>(), vec!["a", "c"]);
        assert_eq!(out.reservoir.entries["a"].best_pi, 0.5);
        assert!(out.replay.iter().all(|e| e.tag == Tag::Frontier));
        assert!(!out.pairs.is_empty());
    }

    #[test]
    fn second_iteration_joins_previous_candidates() {
        let cfg = BufferConfig { rho: 0.5, ..config() };
        let first = shape_iteration(vec![entry("a", 2, 4), entry("b", 0, 4)], &Reservoir::default(), &cfg).unwrap();
        let mut next_a = entry("a", 1, 4);
        for c in &mut next_a.candidates {
            c.proof_text = format!("new {}", c.proof_text);
        }
        let second = shape_iteration(vec![next_a, entry("b", 0, 4)], &first.reservoir, &cfg).unwrap();
        let a = second.replay.iter().find(|e| e.name() == "a").unwrap();
        assert_eq!(a.tag, Tag::Replay);
        assert_eq!(a.candidates.len(), 8);
        assert_eq!(second.reservoir.entries["a"].best_pi, 0.5);
        assert_eq!(second.reservoir.entries["a"].best_iteration, 0);
        assert_eq!(second.reservoir.entries["a"].snapshot.candidates.len(), 8);
    }

    #[test]
    fn shaping_is_deterministic_through_persistence() {
        let data = vec![entry("a", 2, 4), entry("b", 1, 4), entry("c", 3, 4)];
        let res = reservoir_of(&[("z", 0.9)]);
        let a = shape_iteration(data.clone(), &res, &config()).unwrap();
        let reloaded = Reservoir::parse(&res.to_json()).unwrap();
        let data2: Vec<ProblemEntry> = crate::io::parse_jsonl(&crate::io::to_jsonl(&data), "mem").unwrap();
        let b = shape_iteration(data2, &reloaded, &config()).unwrap();
        assert_eq!(crate::io::to_jsonl(&a.pairs), crate::io::to_jsonl(&b.pairs));
        assert_eq!(a.reservoir.to_json(), b.reservoir.to_json());
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        assert!(BufferConfig { rho: 1.5, ..config() }.validate().is_err());
        assert!(BufferConfig { winners: 0, ..config() }.validate().is_err());
        let parsed: BufferConfig = serde_json::from_str(
            r#"{"rho":0.2,"mode":"replace","piMax":0.8,"gamma":0.5,"winners":3,"losers":2,"seed":1}"#,
        )
        .unwrap();
        assert_eq!(parsed.mode, ReplayMode::Replace);
        assert!(Reservoir::parse(r#"{"schema":"other","iteration":0,"entries":{}}"#).is_err());
    }
}
