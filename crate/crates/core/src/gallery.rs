//! Hyperparameter sweep over (window, vector size) and the rated gallery
//! it produces.
//!
//! A gallery directory looks like
//!
//! ```text
//! GALLERY/
//!   gallery.json                 manifest
//!   cells/w5-d12/model.json
//!   cells/w5-d12/projection.json          (joint scope)
//!   cells/w5-d12/projection-pass.json     (per-group scope, one per group)
//!   cells/w5-d12/points.json              all points of the cell
//!   cells/w5-d12/points-pass.json         (per-group scope)
//!   viewer/                      optional static viewer assets
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    sequences_to_string, split_outcome_prefix, OutcomeGroup, ScreenKind, ScreenMetadata, Sequence,
    TokenVocab, FORUM_PREFIX,
};
use crate::skipgram::{self, SkipGramConfig, SkipGramModel};
use crate::tsne::{self, ProjectionFile, TsneConfig};

pub const GALLERY_FORMAT: &str = "pathlens-gallery/1";
pub const POINTS_FORMAT: &str = "pathlens-points/1";
pub const MANIFEST_FILE: &str = "gallery.json";

#[derive(Debug, Error)]
pub enum GalleryError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown plot `{0}`")]
    UnknownPlot(String),
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("corpus fingerprint {found} does not match the gallery's {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("gallery was built with different settings: {0}")]
    ConfigMismatch(String),
    #[error("no manifest at {0}")]
    ManifestMissing(PathBuf),
    #[error("invalid gallery file: {0}")]
    Format(String),
    #[error(transparent)]
    SkipGram(#[from] skipgram::SkipGramError),
    #[error(transparent)]
    Tsne(#[from] tsne::TsneError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GalleryError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub windows: Vec<usize>,
    pub vector_sizes: Vec<usize>,
}

impl SweepGrid {
    /// Windows 1, 3, 5 by vector sizes 2 to 32 in steps of 5.
    pub fn standard() -> Self {
        Self { windows: vec![1, 3, 5], vector_sizes: vec![2, 7, 12, 17, 22, 27, 32] }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("windows", &self.windows), ("vector_sizes", &self.vector_sizes)] {
            if list.is_empty() {
                return Err(GalleryError::Precondition(format!("{name} is empty")));
            }
            if list.contains(&0) {
                return Err(GalleryError::Precondition(format!("{name} must be positive")));
            }
            let unique: HashSet<_> = list.iter().collect();
            if unique.len() != list.len() {
                return Err(GalleryError::Precondition(format!("{name} has duplicates")));
            }
        }
        Ok(())
    }

    /// Cells in row-major (window, vector size) order.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.windows
            .iter()
            .flat_map(|&w| self.vector_sizes.iter().map(move |&d| (w, d)))
            .collect()
    }
}

pub fn plot_id(window: usize, vector_size: usize) -> String {
    format!("w{window}-d{vector_size}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionScope {
    /// One t-SNE over every token.
    #[default]
    Joint,
    /// One t-SNE per outcome group (`p-`, `n-`, undecorated).
    PerGroup,
}

impl std::str::FromStr for ProjectionScope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "joint" => Ok(Self::Joint),
            "per-group" | "per_group" => Ok(Self::PerGroup),
            _ => Err(format!("unknown projection scope `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub token: String,
    pub x: f64,
    pub y: f64,
    pub lesson: String,
    pub kind: ScreenKind,
    pub group: OutcomeGroup,
    pub count: u64,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsFile {
    pub format: String,
    pub points: Vec<PointRecord>,
}

impl PointsFile {
    pub fn new(points: Vec<PointRecord>) -> Self {
        Self { format: POINTS_FORMAT.to_string(), points }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        if f.format != POINTS_FORMAT {
            return Err(GalleryError::Format(format!("unsupported points format `{}`", f.format)));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub plot_id: String,
    pub window: usize,
    pub vector_size: usize,
    pub scope: ProjectionScope,
    /// Seed the cell's skip-gram model was trained with.
    pub seed: u64,
    pub rating: Option<u8>,
    #[serde(default)]
    pub note: String,
    /// Artifact name → path relative to the gallery directory.
    pub files: BTreeMap<String, String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryManifest {
    pub format: String,
    pub corpus_fingerprint: String,
    pub created_by: String,
    pub scope: ProjectionScope,
    pub skipgram: SkipGramConfig,
    pub tsne: TsneConfig,
    pub entries: Vec<GalleryEntry>,
}

impl GalleryManifest {
    pub fn entry(&self, plot_id: &str) -> Option<&GalleryEntry> {
        self.entries.iter().find(|e| e.plot_id == plot_id)
    }

    /// Stores a 1–5 rating, replacing any previous one.
    pub fn record_rating(&mut self, plot_id: &str, rating: i64) -> Result<&GalleryEntry> {
        if !(1..=5).contains(&rating) {
            return Err(GalleryError::RatingOutOfRange(rating));
        }
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.plot_id == plot_id)
            .ok_or_else(|| GalleryError::UnknownPlot(plot_id.to_string()))?;
        entry.rating = Some(rating as u8);
        Ok(entry)
    }

    pub fn set_note(&mut self, plot_id: &str, note: &str) -> Result<()> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.plot_id == plot_id)
            .ok_or_else(|| GalleryError::UnknownPlot(plot_id.to_string()))?;
        entry.note = note.to_string();
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.format != GALLERY_FORMAT {
            return Err(GalleryError::Format(format!("unsupported gallery format `{}`", m.format)));
        }
        let ids: HashSet<&str> = m.entries.iter().map(|e| e.plot_id.as_str()).collect();
        if ids.len() != m.entries.len() {
            return Err(GalleryError::Format("duplicate plot ids".into()));
        }
        Ok(m)
    }

    pub fn load(gallery_dir: &Path) -> Result<Self> {
        let path = gallery_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(GalleryError::ManifestMissing(path));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Writes `gallery.json` via a temporary file and rename.
    pub fn save(&self, gallery_dir: &Path) -> Result<()> {
        write_atomic(&gallery_dir.join(MANIFEST_FILE), self.to_json().as_bytes())
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads the manifest, stores the rating and rewrites the manifest.
pub fn record_rating(gallery_dir: &Path, plot_id: &str, rating: i64) -> Result<GalleryManifest> {
    let mut manifest = GalleryManifest::load(gallery_dir)?;
    manifest.record_rating(plot_id, rating)?;
    manifest.save(gallery_dir)?;
    Ok(manifest)
}

/// Hex SHA-256 of the sequences in their one-line-per-student text form.
pub fn corpus_fingerprint(sequences: &[Sequence]) -> String {
    hex::encode(Sha256::digest(sequences_to_string(sequences).as_bytes()))
}

fn label_hash(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Seed of one grid cell: `base ^ hash(plot_id)`.
pub fn cell_seed(base: u64, plot_id: &str) -> u64 {
    base ^ label_hash(plot_id)
}

/// Attaches screen metadata to projected tokens. Outcome prefixes map to
/// the point's group and are stripped before the metadata lookup.
pub fn export_points(
    projection: &ProjectionFile,
    metadata: &ScreenMetadata,
    vocab: &TokenVocab,
) -> Vec<PointRecord> {
    projection
        .tokens
        .iter()
        .zip(&projection.xy)
        .map(|(token, xy)| {
            let (group, base) = split_outcome_prefix(token);
            let (lesson, kind, title) = match metadata.get(base) {
                Some(info) => (info.lesson.clone(), info.kind, info.title.clone()),
                None => ("unknown".to_string(), ScreenKind::Unknown, base.to_string()),
            };
            let kind = if base.starts_with(FORUM_PREFIX) { ScreenKind::Forum } else { kind };
            PointRecord {
                token: token.clone(),
                x: xy[0],
                y: xy[1],
                lesson,
                kind,
                group,
                count: vocab.count_of(token).unwrap_or(0),
                title,
            }
        })
        .collect()
}

/// Everything a sweep needs besides the output directory.
#[derive(Debug, Clone)]
pub struct SweepPlan<'a> {
    pub sequences: &'a [Sequence],
    pub vocab: &'a TokenVocab,
    pub metadata: &'a ScreenMetadata,
    pub grid: SweepGrid,
    pub base: SkipGramConfig,
    pub tsne: TsneConfig,
    pub scope: ProjectionScope,
    /// Run cells on the rayon pool. Results are identical to serial runs.
    pub parallel: bool,
}

/// Trains and projects every grid cell into `out_dir` and writes the
/// manifest. Cells that fail are recorded with an error note.
///
/// If `out_dir` already holds a manifest, the sweep resumes: the corpus
/// fingerprint and settings must match, completed cells (with their
/// ratings) are kept and failed or missing ones are recomputed.
pub fn run_sweep(plan: &SweepPlan<'_>, out_dir: &Path) -> Result<GalleryManifest> {
    plan.grid.validate()?;
    plan.base.validate()?;
    plan.tsne.validate()?;
    let fingerprint = corpus_fingerprint(plan.sequences);
    fs::create_dir_all(out_dir)?;

    let previous = if out_dir.join(MANIFEST_FILE).is_file() {
        let m = GalleryManifest::load(out_dir)?;
        if m.corpus_fingerprint != fingerprint {
            return Err(GalleryError::FingerprintMismatch {
                expected: m.corpus_fingerprint,
                found: fingerprint,
            });
        }
        if m.scope != plan.scope || m.skipgram != plan.base || m.tsne != plan.tsne {
            return Err(GalleryError::ConfigMismatch(
                "scope, skip-gram or t-SNE settings differ from the existing manifest".into(),
            ));
        }
        Some(m)
    } else {
        None
    };

    let reusable = |w: usize, d: usize| -> Option<GalleryEntry> {
        let e = previous.as_ref()?.entry(&plot_id(w, d))?;
        let complete = e.error.is_none() && e.files.values().all(|f| out_dir.join(f).is_file());
        complete.then(|| e.clone())
    };

    let cells = plan.grid.cells();
    let run = |&(w, d): &(usize, usize)| reusable(w, d).unwrap_or_else(|| run_cell(plan, out_dir, w, d));
    let entries: Vec<GalleryEntry> = if plan.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    };

    let manifest = GalleryManifest {
        format: GALLERY_FORMAT.to_string(),
        corpus_fingerprint: fingerprint,
        created_by: concat!("pathlens ", env!("CARGO_PKG_VERSION")).to_string(),
        scope: plan.scope,
        skipgram: plan.base.clone(),
        tsne: plan.tsne.clone(),
        entries,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn run_cell(plan: &SweepPlan<'_>, out_dir: &Path, window: usize, vector_size: usize) -> GalleryEntry {
    let id = plot_id(window, vector_size);
    let seed = cell_seed(plan.base.seed, &id);
    let mut entry = GalleryEntry {
        plot_id: id.clone(),
        window,
        vector_size,
        scope: plan.scope,
        seed,
        rating: None,
        note: String::new(),
        files: BTreeMap::new(),
        error: None,
    };
    if let Err(e) = build_cell(plan, out_dir, &mut entry) {
        entry.error = Some(e.to_string());
    }
    entry
}

fn build_cell(plan: &SweepPlan<'_>, out_dir: &Path, entry: &mut GalleryEntry) -> Result<()> {
    let rel_dir = format!("cells/{}", entry.plot_id);
    fs::create_dir_all(out_dir.join(&rel_dir))?;
    let mut write = |name: &str, file: &str, contents: String| -> Result<()> {
        let rel = format!("{rel_dir}/{file}");
        fs::write(out_dir.join(&rel), contents)?;
        entry.files.insert(name.to_string(), rel);
        Ok(())
    };

    let config = SkipGramConfig {
        window: entry.window,
        vector_size: entry.vector_size,
        seed: entry.seed,
        ..plan.base.clone()
    };
    let (model, _) = skipgram::train(plan.sequences, plan.vocab, &config)?;
    write("model", "model.json", model.to_json())?;

    let tsne_config = TsneConfig { seed: cell_seed(plan.tsne.seed, &entry.plot_id), ..plan.tsne.clone() };
    let mut all_points = Vec::new();
    for (group, indices) in projection_groups(&model, plan.scope) {
        let tokens: Vec<String> = indices.iter().map(|&i| model.vocab().token(i).to_string()).collect();
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| model.input_row(i).to_vec()).collect();
        let projection = tsne::run_tsne(&rows, &tsne_config)?;
        let file = projection.to_file(&tokens);
        let points = export_points(&file, plan.metadata, plan.vocab);
        match group {
            None => write("projection", "projection.json", file.to_json())?,
            Some(g) => {
                let g = g.as_str();
                write(&format!("projection_{g}"), &format!("projection-{g}.json"), file.to_json())?;
                let pf = PointsFile::new(points.clone());
                write(&format!("points_{g}"), &format!("points-{g}.json"), serde_json::to_string(&pf)?)?;
            }
        }
        all_points.extend(points);
    }
    write("points", "points.json", serde_json::to_string(&PointsFile::new(all_points))?)?;
    Ok(())
}

/// Vocabulary indices to project together. `None` labels the single joint
/// projection.
fn projection_groups(model: &SkipGramModel, scope: ProjectionScope) -> Vec<(Option<OutcomeGroup>, Vec<usize>)> {
    let v = model.vocab_size();
    match scope {
        ProjectionScope::Joint => vec![(None, (0..v).collect())],
        ProjectionScope::PerGroup => {
            let mut groups: BTreeMap<OutcomeGroup, Vec<usize>> = BTreeMap::new();
            for i in 0..v {
                let (g, _) = split_outcome_prefix(model.vocab().token(i));
                groups.entry(g).or_default().push(i);
            }
            groups.into_iter().map(|(g, idx)| (Some(g), idx)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ScreenInfo;

    fn manifest_with(ids: &[&str]) -> GalleryManifest {
        GalleryManifest {
            format: GALLERY_FORMAT.into(),
            corpus_fingerprint: "00".into(),
            created_by: "test".into(),
            scope: ProjectionScope::Joint,
            skipgram: SkipGramConfig::default(),
            tsne: TsneConfig::default(),
            entries: ids
                .iter()
                .map(|id| GalleryEntry {
                    plot_id: id.to_string(),
                    window: 1,
                    vector_size: 2,
                    scope: ProjectionScope::Joint,
                    seed: 0,
                    rating: None,
                    note: String::new(),
                    files: BTreeMap::new(),
                    error: None,
                })
                .collect(),
        }
    }

    #[test]
    fn standard_grid_has_21_cells() {
        let g = SweepGrid::standard();
        g.validate().unwrap();
        let cells = g.cells();
        assert_eq!(cells.len(), 21);
        assert_eq!(plot_id(cells[0].0, cells[0].1), "w1-d2");
        assert_eq!(plot_id(cells[20].0, cells[20].1), "w5-d32");
    }

    #[test]
    fn bad_grids_rejected() {
        let g = SweepGrid { windows: vec![], vector_sizes: vec![2] };
        assert!(matches!(g.validate(), Err(GalleryError::Precondition(_))));
        let g = SweepGrid { windows: vec![1, 1], vector_sizes: vec![2] };
        assert!(g.validate().is_err());
    }

    #[test]
    fn ratings() {
        let mut m = manifest_with(&["w5-d12", "w1-d2"]);
        m.record_rating("w5-d12", 5).unwrap();
        assert_eq!(m.entry("w5-d12").unwrap().rating, Some(5));
        m.record_rating("w1-d2", 3).unwrap();
        m.record_rating("w1-d2", 4).unwrap();
        assert_eq!(m.entry("w1-d2").unwrap().rating, Some(4));
        assert!(matches!(m.record_rating("w1-d2", 6), Err(GalleryError::RatingOutOfRange(6))));
        assert!(matches!(m.record_rating("w1-d2", 0), Err(GalleryError::RatingOutOfRange(0))));
        assert!(matches!(m.record_rating("nope", 3), Err(GalleryError::UnknownPlot(_))));
        let before = m.clone();
        m.record_rating("w1-d2", 4).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn rating_persists_atomically() {
        let dir = tempfile::tempdir().unwrap();
        manifest_with(&["w5-d12"]).save(dir.path()).unwrap();
        record_rating(dir.path(), "w5-d12", 5).unwrap();
        let back = GalleryManifest::load(dir.path()).unwrap();
        assert_eq!(back.entry("w5-d12").unwrap().rating, Some(5));
        assert!(!dir.path().join("gallery.json.tmp").exists());
        assert!(matches!(
            GalleryManifest::load(&dir.path().join("missing")),
            Err(GalleryError::ManifestMissing(_))
        ));
    }

    #[test]
    fn point_export_rules() {
        let mut md = ScreenMetadata::new();
        md.insert(
            "s:12".into(),
            ScreenInfo { lesson: "R*".into(), kind: ScreenKind::Application, title: "Star quiz".into() },
        );
        let tokens: Vec<String> = vec!["p-s:12".into(), "forum:general".into(), "n-s:99".into()];
        let vocab = TokenVocab::from_entries(tokens.iter().map(|t| (t.clone(), 3)).collect());
        let proj = ProjectionFile {
            format: tsne::PROJECTION_FORMAT.into(),
            tokens,
            xy: vec![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            kl_trace: vec![],
        };
        let pts = export_points(&proj, &md, &vocab);
        assert_eq!(pts[0].token, "p-s:12");
        assert_eq!(pts[0].group, OutcomeGroup::Pass);
        assert_eq!(pts[0].lesson, "R*");
        assert_eq!(pts[0].kind, ScreenKind::Application);
        assert_eq!(pts[0].title, "Star quiz");
        assert_eq!((pts[0].x, pts[0].y, pts[0].count), (1.0, 2.0, 3));
        assert_eq!(pts[1].kind, ScreenKind::Forum);
        assert_eq!(pts[1].group, OutcomeGroup::All);
        assert_eq!(pts[1].lesson, "unknown");
        assert_eq!(pts[2].kind, ScreenKind::Unknown);
        assert_eq!(pts[2].lesson, "unknown");
        assert_eq!(pts[2].group, OutcomeGroup::Fail);

        let json = serde_json::to_value(&pts[0]).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        let mut want = vec!["token", "x", "y", "lesson", "kind", "group", "count", "title"];
        want.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, want);
        assert_eq!(json["kind"], "application");
        assert_eq!(json["group"], "pass");
    }

    #[test]
    fn cell_seeds_differ_per_plot() {
        assert_ne!(cell_seed(1, "w1-d2"), cell_seed(1, "w1-d7"));
        assert_eq!(cell_seed(1, "w1-d2"), cell_seed(1, "w1-d2"));
    }
}
