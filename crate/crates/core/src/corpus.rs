//! Event-log ingestion: CSV parsing, per-student token sequences, outcome
//! and forum decorations, and the training vocabulary.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prefix applied to every token of a passing student's sequence.
pub const PASS_PREFIX: &str = "p-";
/// Prefix applied to every token of a failing student's sequence.
pub const FAIL_PREFIX: &str = "n-";
/// Prefix shared by all forum tokens.
pub const FORUM_PREFIX: &str = "forum:";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("duplicate interaction {1} for user {0}")]
    DuplicateInteraction(String, i64),
    #[error("interaction {1} for user {0} appears in both the event and forum logs")]
    InteractionCollision(String, i64),
    #[error("no outcome recorded for user {0}")]
    MissingOutcome(String),
    #[error("no token survives the minimum count")]
    EmptyVocabulary,
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub user_id: String,
    pub screen_id: String,
    pub interaction_id: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForumEventRecord {
    pub user_id: String,
    pub interaction_id: i64,
    pub topic: Option<String>,
}

/// One student's chronologically ordered token stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub user_id: String,
    pub tokens: Vec<String>,
}

/// user_id → passed.
pub type OutcomeMap = BTreeMap<String, bool>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScreenKind {
    Training,
    Application,
    Project,
    Forum,
    Unknown,
}

impl ScreenKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "training" => Some(Self::Training),
            "application" => Some(Self::Application),
            "project" => Some(Self::Project),
            "forum" => Some(Self::Forum),
            "unknown" => Some(Self::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Training => "training",
            Self::Application => "application",
            Self::Project => "project",
            Self::Forum => "forum",
            Self::Unknown => "unknown",
        }
    }
}

impl fmt::Display for ScreenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenInfo {
    pub lesson: String,
    pub kind: ScreenKind,
    pub title: String,
}

/// screen_id → lesson, kind and title.
pub type ScreenMetadata = BTreeMap<String, ScreenInfo>;

/// How decorate_outcome treats a user missing from the outcome map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingOutcomePolicy {
    #[default]
    Error,
    Skip,
}

/// Tokenization of forum posts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForumScheme {
    /// `forum:<topic>`, with `general` for posts without a topic.
    #[default]
    PerTopic,
    /// Every post becomes `forum:post`.
    SingleToken,
}

// ---------------------------------------------------------------------------
// CSV readers
// ---------------------------------------------------------------------------

fn csv_reader<R: Read>(input: R, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found.len() < expected.len() || found[..expected.len()] != *expected {
        return Err(CorpusError::BadHeader {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(rdr)
}

fn required(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<&str> {
    match rec.get(idx) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(CorpusError::MalformedRow(line)),
    }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses the events CSV (`user_id,screen_id,interaction_id`). Rows are
/// returned in file order; extra trailing columns (e.g. a timestamp) are
/// ignored.
pub fn parse_events<R: Read>(input: R) -> Result<Vec<EventRecord>> {
    let mut rdr = csv_reader(input, &["user_id", "screen_id", "interaction_id"])?;
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let user_id = required(&rec, 0, line)?.to_string();
        let screen_id = required(&rec, 1, line)?.to_string();
        let interaction_id: i64 = required(&rec, 2, line)?
            .parse()
            .map_err(|_| CorpusError::MalformedRow(line))?;
        if !seen.insert((user_id.clone(), interaction_id)) {
            return Err(CorpusError::DuplicateInteraction(user_id, interaction_id));
        }
        out.push(EventRecord { user_id, screen_id, interaction_id });
    }
    Ok(out)
}

/// Parses the forum CSV (`user_id,interaction_id,topic`); topic may be empty.
pub fn parse_forum<R: Read>(input: R) -> Result<Vec<ForumEventRecord>> {
    let mut rdr = csv_reader(input, &["user_id", "interaction_id", "topic"])?;
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let user_id = required(&rec, 0, line)?.to_string();
        let interaction_id: i64 = required(&rec, 1, line)?
            .parse()
            .map_err(|_| CorpusError::MalformedRow(line))?;
        let topic = rec.get(2).filter(|t| !t.is_empty()).map(str::to_string);
        if !seen.insert((user_id.clone(), interaction_id)) {
            return Err(CorpusError::DuplicateInteraction(user_id, interaction_id));
        }
        out.push(ForumEventRecord { user_id, interaction_id, topic });
    }
    Ok(out)
}

/// Parses the outcomes CSV (`user_id,passed`), accepting true/false/1/0.
pub fn parse_outcomes<R: Read>(input: R) -> Result<OutcomeMap> {
    let mut rdr = csv_reader(input, &["user_id", "passed"])?;
    let mut out = OutcomeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let user_id = required(&rec, 0, line)?.to_string();
        let passed = match required(&rec, 1, line)?.to_ascii_lowercase().as_str() {
            "true" | "1" => true,
            "false" | "0" => false,
            _ => return Err(CorpusError::MalformedRow(line)),
        };
        out.insert(user_id, passed);
    }
    Ok(out)
}

/// Parses the metadata CSV (`screen_id,lesson,kind,title`).
pub fn parse_metadata<R: Read>(input: R) -> Result<ScreenMetadata> {
    let mut rdr = csv_reader(input, &["screen_id", "lesson", "kind", "title"])?;
    let mut out = ScreenMetadata::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let screen_id = required(&rec, 0, line)?.to_string();
        let lesson = required(&rec, 1, line)?.to_string();
        let kind = ScreenKind::parse(required(&rec, 2, line)?)
            .ok_or(CorpusError::MalformedRow(line))?;
        let title = rec.get(3).unwrap_or("").to_string();
        out.insert(screen_id, ScreenInfo { lesson, kind, title });
    }
    Ok(out)
}

pub fn write_events<W: Write>(out: W, events: &[EventRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "screen_id", "interaction_id"])?;
    for e in events {
        w.write_record([e.user_id.as_str(), e.screen_id.as_str(), &e.interaction_id.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_forum<W: Write>(out: W, forum: &[ForumEventRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "interaction_id", "topic"])?;
    for f in forum {
        w.write_record([
            f.user_id.as_str(),
            &f.interaction_id.to_string(),
            f.topic.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outcomes<W: Write>(out: W, outcomes: &OutcomeMap) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "passed"])?;
    for (user, passed) in outcomes {
        w.write_record([user.as_str(), if *passed { "true" } else { "false" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metadata<W: Write>(out: W, metadata: &ScreenMetadata) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["screen_id", "lesson", "kind", "title"])?;
    for (screen, info) in metadata {
        w.write_record([screen.as_str(), &info.lesson, info.kind.as_str(), &info.title])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

/// Groups events by user and orders each user's tokens by interaction id.
/// Users appear in lexicographic order of user_id.
pub fn build_sequences(events: &[EventRecord]) -> Vec<Sequence> {
    let mut by_user: BTreeMap<&str, Vec<(i64, &str)>> = BTreeMap::new();
    for e in events {
        by_user
            .entry(e.user_id.as_str())
            .or_default()
            .push((e.interaction_id, e.screen_id.as_str()));
    }
    by_user
        .into_iter()
        .map(|(user, mut evs)| {
            evs.sort_by_key(|&(id, _)| id);
            Sequence {
                user_id: user.to_string(),
                tokens: evs.into_iter().map(|(_, s)| s.to_string()).collect(),
            }
        })
        .collect()
}

/// Prefixes every token with `p-` or `n-` according to the user's outcome.
pub fn decorate_outcome(
    sequences: &[Sequence],
    outcomes: &OutcomeMap,
    on_missing: MissingOutcomePolicy,
) -> Result<Vec<Sequence>> {
    let mut out = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let prefix = match outcomes.get(&seq.user_id) {
            Some(true) => PASS_PREFIX,
            Some(false) => FAIL_PREFIX,
            None => match on_missing {
                MissingOutcomePolicy::Error => {
                    return Err(CorpusError::MissingOutcome(seq.user_id.clone()))
                }
                MissingOutcomePolicy::Skip => continue,
            },
        };
        out.push(Sequence {
            user_id: seq.user_id.clone(),
            tokens: seq.tokens.iter().map(|t| format!("{prefix}{t}")).collect(),
        });
    }
    Ok(out)
}

/// Outcome group encoded in a token's prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeGroup {
    Pass,
    Fail,
    All,
}

impl OutcomeGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::All => "all",
        }
    }
}

/// Splits a token into its outcome group and the undecorated token.
pub fn split_outcome_prefix(token: &str) -> (OutcomeGroup, &str) {
    if let Some(rest) = token.strip_prefix(PASS_PREFIX) {
        (OutcomeGroup::Pass, rest)
    } else if let Some(rest) = token.strip_prefix(FAIL_PREFIX) {
        (OutcomeGroup::Fail, rest)
    } else {
        (OutcomeGroup::All, token)
    }
}

/// Inverse of [`decorate_outcome`].
pub fn strip_outcome(sequences: &[Sequence]) -> Vec<Sequence> {
    sequences
        .iter()
        .map(|s| Sequence {
            user_id: s.user_id.clone(),
            tokens: s.tokens.iter().map(|t| split_outcome_prefix(t).1.to_string()).collect(),
        })
        .collect()
}

pub fn forum_token(topic: Option<&str>, scheme: ForumScheme) -> String {
    match scheme {
        ForumScheme::PerTopic => format!("{FORUM_PREFIX}{}", topic.unwrap_or("general")),
        ForumScheme::SingleToken => format!("{FORUM_PREFIX}post"),
    }
}

/// Merges forum posts into the screen event stream as forum tokens.
///
/// The output is ordered by (user_id, interaction_id). Restricted to the
/// non-forum events it reproduces each user's original screen events.
pub fn interleave_forum(
    events: &[EventRecord],
    forum: &[ForumEventRecord],
    scheme: ForumScheme,
) -> Result<Vec<EventRecord>> {
    let screen_ids: HashSet<(&str, i64)> =
        events.iter().map(|e| (e.user_id.as_str(), e.interaction_id)).collect();
    let mut merged: Vec<EventRecord> = events.to_vec();
    for f in forum {
        if screen_ids.contains(&(f.user_id.as_str(), f.interaction_id)) {
            return Err(CorpusError::InteractionCollision(f.user_id.clone(), f.interaction_id));
        }
        merged.push(EventRecord {
            user_id: f.user_id.clone(),
            screen_id: forum_token(f.topic.as_deref(), scheme),
            interaction_id: f.interaction_id,
        });
    }
    merged.sort_by(|a, b| {
        a.user_id.cmp(&b.user_id).then(a.interaction_id.cmp(&b.interaction_id))
    });
    Ok(merged)
}

/// Writes one line per student: `user_id<TAB>token token ...`.
pub fn write_sequences<W: Write>(mut out: W, sequences: &[Sequence]) -> Result<()> {
    for s in sequences {
        writeln!(out, "{}\t{}", s.user_id, s.tokens.join(" "))?;
    }
    Ok(())
}

pub fn sequences_to_string(sequences: &[Sequence]) -> String {
    let mut buf = Vec::new();
    write_sequences(&mut buf, sequences).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("tokens are UTF-8")
}

pub fn read_sequences<R: BufRead>(input: R) -> Result<Vec<Sequence>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (user, rest) = line
            .split_once('\t')
            .ok_or(CorpusError::MalformedRow(i as u64 + 1))?;
        if user.is_empty() {
            return Err(CorpusError::MalformedRow(i as u64 + 1));
        }
        out.push(Sequence {
            user_id: user.to_string(),
            tokens: rest.split_whitespace().map(str::to_string).collect(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Dense token index. Ordered by descending count, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    /// Builds a vocabulary from explicit (token, count) entries, keeping
    /// the given order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Self { tokens, counts, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn count_of(&self, token: &str) -> Option<u64> {
        self.index_of(token).map(|i| self.counts[i])
    }

    /// Maps tokens to indices, dropping out-of-vocabulary tokens.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }
}

pub fn build_vocab(sequences: &[Sequence], min_count: u64) -> Result<TokenVocab> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sequences {
        for t in &s.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count.max(1))
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    if entries.is_empty() {
        return Err(CorpusError::EmptyVocabulary);
    }
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(TokenVocab::from_entries(entries))
}
