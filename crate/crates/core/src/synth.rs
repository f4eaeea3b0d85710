//! Seeded synthetic learner corpora with planted navigation behavior, and
//! cohesion scores that quantify how tightly a token group clusters.
//!
//! Screens are numbered `s:1 .. s:L*K` in course order and grouped into
//! lessons `L1 .. LL` of `K` screens each. The last third of each lesson
//! (at least one screen) is graded application content; the rest is
//! training.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    forum_token, EventRecord, ForumEventRecord, ForumScheme, OutcomeMap, ScreenInfo, ScreenKind, ScreenMetadata,
};
use crate::skipgram::{cosine, SkipGramModel};
use crate::tsne::Point2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("group `{0}` has fewer than two members")]
    DegenerateGroup(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Walk the course in order.
    Linear,
    /// Per lesson, visit the applications first, then bounce between
    /// applications and short runs of training screens starting at a
    /// random one.
    HubSpoke,
    /// Passing students walk linearly, failing students hub-and-spoke.
    ByOutcome,
}

impl std::str::FromStr for Behavior {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Self::Linear),
            "hub-spoke" | "hub_spoke" => Ok(Self::HubSpoke),
            "by-outcome" | "by_outcome" => Ok(Self::ByOutcome),
            _ => Err(format!("unknown behavior `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_students: usize,
    pub n_lessons: usize,
    pub screens_per_lesson: usize,
    pub behavior: Behavior,
    /// Probability of a detour to a random screen before each step.
    pub noise: f64,
    pub seed: u64,
    pub pass_fraction: f64,
    /// Probability of a forum post right after an application visit.
    pub forum_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_students: 100,
            n_lessons: 6,
            screens_per_lesson: 20,
            behavior: Behavior::ByOutcome,
            noise: 0.05,
            seed: 7,
            pass_fraction: 0.5,
            forum_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub events: Vec<EventRecord>,
    pub forum: Vec<ForumEventRecord>,
    pub outcomes: OutcomeMap,
    pub metadata: ScreenMetadata,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::InvalidSpec(format!("{name} must lie in [0, 1]")))
            }
        };
        prob("noise", self.noise)?;
        prob("pass_fraction", self.pass_fraction)?;
        prob("forum_rate", self.forum_rate)?;
        if self.n_students == 0 || self.n_lessons == 0 || self.screens_per_lesson == 0 {
            return Err(SynthError::InvalidSpec(
                "students, lessons and screens per lesson must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_screens(&self) -> usize {
        self.n_lessons * self.screens_per_lesson
    }

    pub fn applications_per_lesson(&self) -> usize {
        (self.screens_per_lesson / 3).max(1)
    }

    pub fn lesson_name(lesson: usize) -> String {
        format!("L{}", lesson + 1)
    }

    /// Screen id of the zero-based course position.
    pub fn screen_id(position: usize) -> String {
        format!("s:{}", position + 1)
    }

    /// Course positions of a lesson's training screens.
    pub fn training_positions(&self, lesson: usize) -> Vec<usize> {
        let start = lesson * self.screens_per_lesson;
        (start..start + self.screens_per_lesson - self.applications_per_lesson()).collect()
    }

    /// Course positions of a lesson's application screens.
    pub fn application_positions(&self, lesson: usize) -> Vec<usize> {
        let end = (lesson + 1) * self.screens_per_lesson;
        (end - self.applications_per_lesson()..end).collect()
    }

    pub fn metadata(&self) -> ScreenMetadata {
        let mut md = ScreenMetadata::new();
        for lesson in 0..self.n_lessons {
            let apps = self.application_positions(lesson);
            for pos in lesson * self.screens_per_lesson..(lesson + 1) * self.screens_per_lesson {
                let kind = if apps.contains(&pos) {
                    ScreenKind::Application
                } else {
                    ScreenKind::Training
                };
                let title = format!("{} {} {}", Self::lesson_name(lesson), kind, pos + 1);
                md.insert(
                    Self::screen_id(pos),
                    ScreenInfo { lesson: Self::lesson_name(lesson), kind, title },
                );
            }
            // posts are per-topic forum tokens named after their lesson
            let name = Self::lesson_name(lesson);
            md.insert(
                forum_token(Some(&name), ForumScheme::PerTopic),
                ScreenInfo { lesson: name.clone(), kind: ScreenKind::Forum, title: format!("{name} forum") },
            );
        }
        md
    }
}

/// Training screens visited in course order on one excursion away from
/// the applications.
const SPOKE_LEN: usize = 3;

#[derive(Clone, Copy)]
enum Step {
    Screen(usize),
    Forum(usize),
}

struct Walker<'a> {
    spec: &'a SynthSpec,
    rng: &'a mut ChaCha8Rng,
    steps: Vec<Step>,
}

impl Walker<'_> {
    fn visit(&mut self, pos: usize) {
        if self.spec.noise > 0.0 && self.rng.random_bool(self.spec.noise) {
            let jump = self.rng.random_range(0..self.spec.n_screens());
            self.steps.push(Step::Screen(jump));
        }
        self.steps.push(Step::Screen(pos));
        let lesson = pos / self.spec.screens_per_lesson;
        if self.spec.forum_rate > 0.0
            && self.spec.application_positions(lesson).contains(&pos)
            && self.rng.random_bool(self.spec.forum_rate)
        {
            self.steps.push(Step::Forum(lesson));
        }
    }

    fn linear(&mut self) {
        for pos in 0..self.spec.n_screens() {
            self.visit(pos);
        }
    }

    fn hub_spoke(&mut self) {
        for lesson in 0..self.spec.n_lessons {
            let apps = self.spec.application_positions(lesson);
            let training = self.spec.training_positions(lesson);
            for &a in &apps {
                self.visit(a);
            }
            if training.is_empty() {
                continue;
            }
            for _ in 0..training.len() {
                let start = self.rng.random_range(0..training.len());
                for &t in training[start..].iter().take(SPOKE_LEN) {
                    self.visit(t);
                }
                let a = *apps.choose(self.rng).expect("non-empty");
                self.visit(a);
            }
        }
    }
}

/// Generates events, forum posts, outcomes and screen metadata.
///
/// Users are `u0001, u0002, ...`; exactly `round(n * pass_fraction)` of them
/// pass, chosen by a seeded shuffle. Interaction ids count up from 1 per
/// user and are shared between screen events and forum posts.
pub fn gen_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let users: Vec<String> = (0..spec.n_students).map(|i| format!("u{:04}", i + 1)).collect();
    let n_pass = (spec.n_students as f64 * spec.pass_fraction).round() as usize;
    let mut order: Vec<usize> = (0..spec.n_students).collect();
    order.shuffle(&mut rng);
    let mut passed = vec![false; spec.n_students];
    for &i in &order[..n_pass] {
        passed[i] = true;
    }

    let mut corpus = SynthCorpus {
        events: Vec::new(),
        forum: Vec::new(),
        outcomes: OutcomeMap::new(),
        metadata: spec.metadata(),
    };
    for (i, user) in users.iter().enumerate() {
        corpus.outcomes.insert(user.clone(), passed[i]);
        let linear = match spec.behavior {
            Behavior::Linear => true,
            Behavior::HubSpoke => false,
            Behavior::ByOutcome => passed[i],
        };
        let mut walker = Walker { spec, rng: &mut rng, steps: Vec::new() };
        if linear {
            walker.linear();
        } else {
            walker.hub_spoke();
        }
        for (k, step) in walker.steps.into_iter().enumerate() {
            let interaction_id = k as i64 + 1;
            match step {
                Step::Screen(pos) => corpus.events.push(EventRecord {
                    user_id: user.clone(),
                    screen_id: SynthSpec::screen_id(pos),
                    interaction_id,
                }),
                Step::Forum(lesson) => corpus.forum.push(ForumEventRecord {
                    user_id: user.clone(),
                    interaction_id,
                    topic: Some(SynthSpec::lesson_name(lesson)),
                }),
            }
        }
    }
    Ok(corpus)
}

/// Where cohesion is measured.
#[derive(Debug, Clone, Copy)]
pub enum CohesionSpace<'a> {
    /// Mean pairwise cosine similarity of embeddings.
    Embedding(&'a SkipGramModel),
    /// Negative mean pairwise Euclidean distance of 2-D points.
    Projection { tokens: &'a [String], points: &'a [Point2] },
}

/// Per-group mean over unordered pairs of the group's similarity.
pub fn cohesion(space: CohesionSpace<'_>, groups: &[(String, Vec<String>)]) -> Result<Vec<(String, f64)>> {
    let proj_index: HashMap<&str, usize> = match space {
        CohesionSpace::Projection { tokens, .. } => {
            tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect()
        }
        CohesionSpace::Embedding(_) => HashMap::new(),
    };
    let mut out = Vec::with_capacity(groups.len());
    for (name, members) in groups {
        if members.len() < 2 {
            return Err(SynthError::DegenerateGroup(name.clone()));
        }
        let score = match space {
            CohesionSpace::Embedding(model) => {
                let vecs = members
                    .iter()
                    .map(|t| model.embedding_of(t).map_err(|_| SynthError::UnknownToken(t.clone())))
                    .collect::<Result<Vec<_>>>()?;
                mean_over_pairs(vecs.len(), |i, j| cosine(vecs[i], vecs[j]))
            }
            CohesionSpace::Projection { points, .. } => {
                let pts = members
                    .iter()
                    .map(|t| {
                        proj_index
                            .get(t.as_str())
                            .map(|&i| points[i])
                            .ok_or_else(|| SynthError::UnknownToken(t.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                -mean_over_pairs(pts.len(), |i, j| {
                    ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt()
                })
            }
        };
        out.push((name.clone(), score));
    }
    Ok(out)
}

fn mean_over_pairs(n: usize, f: impl Fn(usize, usize) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            sum += f(i, j);
            count += 1;
        }
    }
    sum / count as f64
}
