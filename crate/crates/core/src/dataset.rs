//! Benchmark ingestion: scenario records, the country-to-group map, and
//! label-distribution queries.
//!
//! The dataset is a delimited text file with a header naming the columns
//! `id`, `country`, `rule_of_thumb`, `story`, `label` (`id` is optional and
//! synthesized from the 1-based row index when absent). Files ending in
//! `.tsv` or `.tab` are read tab-separated, anything else comma-separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The closed ternary answer set, plus the sentinel for model output that
/// contains no recognizable answer. Gold labels are never `Unparseable`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TernaryLabel {
    Yes,
    No,
    Neither,
    Unparseable,
}

impl TernaryLabel {
    pub const ANSWERS: [TernaryLabel; 3] =
        [TernaryLabel::Yes, TernaryLabel::No, TernaryLabel::Neither];

    pub fn as_str(self) -> &'static str {
        match self {
            TernaryLabel::Yes => "Yes",
            TernaryLabel::No => "No",
            TernaryLabel::Neither => "Neither",
            TernaryLabel::Unparseable => "Unparseable",
        }
    }

    /// Parse a gold-label cell: exact, case-insensitive match on the full
    /// cell. Anything else is rejected so corrupted files surface early.
    pub fn parse_gold(cell: &str) -> Option<Self> {
        Self::ANSWERS
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(cell))
    }
}

impl fmt::Display for TernaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The eight cultural bins countries are partitioned into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CulturalGroup {
    AfricanIslamic,
    CatholicEurope,
    Confucian,
    EnglishSpeaking,
    LatinAmerica,
    OrthodoxEurope,
    ProtestantEurope,
    WestSouthAsia,
}

impl CulturalGroup {
    pub const ALL: [CulturalGroup; 8] = [
        CulturalGroup::AfricanIslamic,
        CulturalGroup::CatholicEurope,
        CulturalGroup::Confucian,
        CulturalGroup::EnglishSpeaking,
        CulturalGroup::LatinAmerica,
        CulturalGroup::OrthodoxEurope,
        CulturalGroup::ProtestantEurope,
        CulturalGroup::WestSouthAsia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CulturalGroup::AfricanIslamic => "African-Islamic",
            CulturalGroup::CatholicEurope => "Catholic Europe",
            CulturalGroup::Confucian => "Confucian",
            CulturalGroup::EnglishSpeaking => "English-speaking",
            CulturalGroup::LatinAmerica => "Latin America",
            CulturalGroup::OrthodoxEurope => "Orthodox Europe",
            CulturalGroup::ProtestantEurope => "Protestant Europe",
            CulturalGroup::WestSouthAsia => "West & South Asia",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }
}

impl fmt::Display for CulturalGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub id: String,
    pub country: String,
    pub rule_of_thumb: String,
    pub story: String,
    pub gold: TernaryLabel,
    pub group: CulturalGroup,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited file {path}: {source}")]
    Malformed {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("missing required column '{column}' in {path}")]
    MissingColumn { path: String, column: String },
    #[error("row {row} (id {id}): unknown gold label '{value}'")]
    UnknownLabel { row: usize, id: String, value: String },
    #[error("row {row} (id {id}): country '{country}' not present in the group map")]
    UnmappedCountry { row: usize, id: String, country: String },
    #[error("row {row} (id {id}): column '{column}' is empty")]
    EmptyField { row: usize, id: String, column: String },
    #[error("row {row}: duplicate id '{id}'")]
    DuplicateId { row: usize, id: String },
    #[error("group map {path} line {line}: unknown group '{group}'")]
    UnknownGroup { path: String, line: usize, group: String },
    #[error("group map {path} line {line}: expected 'country<TAB>group'")]
    MalformedGroupLine { path: String, line: usize },
    #[error("group map {path} line {line}: country '{country}' mapped to two groups")]
    ConflictingGroup { path: String, line: usize, country: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("fixed label must be Yes, No or Neither")]
    InvalidFixedLabel,
}

/// Country-to-group map loaded from a `country<TAB>group` text file.
#[derive(Debug, Clone, Default)]
pub struct GroupMap {
    entries: BTreeMap<String, CulturalGroup>,
}

impl GroupMap {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (country, group_name) =
                raw.split_once('\t')
                    .ok_or_else(|| DatasetError::MalformedGroupLine {
                        path: path.display().to_string(),
                        line,
                    })?;
            let group = CulturalGroup::from_name(group_name).ok_or_else(|| {
                DatasetError::UnknownGroup {
                    path: path.display().to_string(),
                    line,
                    group: group_name.to_string(),
                }
            })?;
            if let Some(prev) = entries.insert(country.to_string(), group) {
                if prev != group {
                    return Err(DatasetError::ConflictingGroup {
                        path: path.display().to_string(),
                        line,
                        country: country.to_string(),
                    });
                }
            }
        }
        Ok(GroupMap { entries })
    }

    pub fn get(&self, country: &str) -> Option<CulturalGroup> {
        self.entries.get(country).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

/// Load the dataset and attach cultural groups. The returned order is the
/// file order; loading is deterministic for identical input bytes.
pub fn load_dataset(path: &Path, group_map_path: &Path) -> Result<Vec<ScenarioRecord>, DatasetError> {
    let groups = GroupMap::load(group_map_path)?;
    load_dataset_with_map(path, &groups)
}

pub fn load_dataset_with_map(
    path: &Path,
    groups: &GroupMap,
) -> Result<Vec<ScenarioRecord>, DatasetError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DatasetError::Io {
                path: path_str.clone(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DatasetError::Malformed {
                path: path_str.clone(),
                source: e,
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|source| DatasetError::Malformed {
            path: path_str.clone(),
            source,
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| DatasetError::MissingColumn {
            path: path_str.clone(),
            column: name.to_string(),
        })
    };
    let id_col = col("id");
    let country_col = required("country")?;
    let rot_col = required("rule_of_thumb")?;
    let story_col = required("story")?;
    let label_col = required("label")?;

    let mut records = Vec::new();
    let mut seen_ids = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|source| DatasetError::Malformed {
            path: path_str.clone(),
            source,
        })?;
        let field = |idx: usize| row.get(idx).unwrap_or("").to_string();
        let id = match id_col {
            Some(idx) => field(idx),
            None => row_no.to_string(),
        };
        if let Some(prev) = seen_ids.insert(id.clone(), row_no) {
            let _ = prev;
            return Err(DatasetError::DuplicateId { row: row_no, id });
        }
        let country = field(country_col);
        let rule_of_thumb = field(rot_col);
        let story = field(story_col);
        for (column, value) in [
            ("country", &country),
            ("rule_of_thumb", &rule_of_thumb),
            ("story", &story),
        ] {
            if value.is_empty() {
                return Err(DatasetError::EmptyField {
                    row: row_no,
                    id,
                    column: column.to_string(),
                });
            }
        }
        let label_cell = field(label_col);
        let gold = TernaryLabel::parse_gold(&label_cell).ok_or_else(|| {
            DatasetError::UnknownLabel {
                row: row_no,
                id: id.clone(),
                value: label_cell.clone(),
            }
        })?;
        let group = groups
            .get(&country)
            .ok_or_else(|| DatasetError::UnmappedCountry {
                row: row_no,
                id: id.clone(),
                country: country.clone(),
            })?;
        records.push(ScenarioRecord {
            id,
            country,
            rule_of_thumb,
            story,
            gold,
            group,
        });
    }
    Ok(records)
}

/// Accuracy a constant-answer baseline achieves: the fraction of records whose
/// gold label equals `fixed`.
pub fn label_only_baseline(
    records: &[ScenarioRecord],
    fixed: TernaryLabel,
) -> Result<f64, DatasetError> {
    if fixed == TernaryLabel::Unparseable {
        return Err(DatasetError::InvalidFixedLabel);
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let hits = records.iter().filter(|r| r.gold == fixed).count();
    Ok(hits as f64 / records.len() as f64)
}

/// Counts over a record set: totals per label, country, and group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_total: usize,
    pub n_per_label: BTreeMap<TernaryLabel, usize>,
    pub n_per_country: BTreeMap<String, usize>,
    pub n_per_group: BTreeMap<CulturalGroup, usize>,
}

impl DatasetStats {
    pub fn compute(records: &[ScenarioRecord]) -> Self {
        let mut n_per_label = BTreeMap::new();
        let mut n_per_country = BTreeMap::new();
        let mut n_per_group = BTreeMap::new();
        for r in records {
            *n_per_label.entry(r.gold).or_insert(0) += 1;
            *n_per_country.entry(r.country.clone()).or_insert(0) += 1;
            *n_per_group.entry(r.group).or_insert(0) += 1;
        }
        DatasetStats {
            n_total: records.len(),
            n_per_label,
            n_per_country,
            n_per_group,
        }
    }

    /// Machine-readable dump: `kind<TAB>key<TAB>count`, one row per label,
    /// country, and group, keys sorted within each kind.
    pub fn render_table(&self) -> String {
        let mut out = String::from("kind\tkey\tcount\n");
        out.push_str(&format!("total\tall\t{}\n", self.n_total));
        for label in TernaryLabel::ANSWERS {
            let n = self.n_per_label.get(&label).copied().unwrap_or(0);
            out.push_str(&format!("label\t{label}\t{n}\n"));
        }
        for (country, n) in &self.n_per_country {
            out.push_str(&format!("country\t{country}\t{n}\n"));
        }
        for (group, n) in &self.n_per_group {
            out.push_str(&format!("group\t{group}\t{n}\n"));
        }
        out
    }

    /// Totals agree across the three partitions.
    pub fn is_consistent(&self) -> bool {
        let labels: usize = self.n_per_label.values().sum();
        let countries: usize = self.n_per_country.values().sum();
        let groups: usize = self.n_per_group.values().sum();
        labels == self.n_total && countries == self.n_total && groups == self.n_total
    }
}
