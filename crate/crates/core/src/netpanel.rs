//! Longitudinal network panel: persons, per-wave exams and directed ties.
//!
//! A [`CohortPanel`] is validated once on construction and is immutable
//! afterwards. Ties are stored directed (`source` named `target`); the
//! three directional classes of a focal-participant/alter pair are derived
//! on demand by [`CohortPanel::classify_tie`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_WAVE: u8 = 1;
pub const MAX_WAVE: u8 = 7;
pub const MIN_BIRTH_YEAR: i32 = 1850;
pub const MAX_BIRTH_YEAR: i32 = 2100;

pub const PERSONS_HEADER: &str = "person_id,is_fp,female,birth_year";
pub const EXAMS_HEADER: &str = "person_id,wave,exam_year,trait,age_years,education_years";
pub const TIES_HEADER: &str = "wave,source_id,target_id,tie_kind";

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("{file} row {row}, column `{column}`: {message}")]
    Schema {
        file: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{file} row {row}: person `{person}` has no person record")]
    DanglingPerson { file: String, row: usize, person: String },
    #[error("duplicate person record for `{0}`")]
    DuplicatePerson(String),
    #[error("exams.csv row {row}: duplicate exam for person `{person}` at wave {wave}")]
    DuplicateExam { row: usize, person: String, wave: u8 },
    #[error("exams.csv row {row}: trait value {value} out of range for {kind} panel")]
    TraitOutOfRange { row: usize, value: i64, kind: TraitKind },
    #[error("ties.csv row {row}: self-tie on person `{person}`")]
    SelfTie { row: usize, person: String },
    #[error("person `{0}` is not a focal participant")]
    NotFocal(String),
    #[error("unknown person `{0}`")]
    UnknownPerson(String),
    #[error("wave {0} has no lagged wave; tie sets need wave >= 2")]
    NoLag(u8),
    #[error("wave {0} outside 1..=7")]
    WaveOutOfRange(u8),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Opaque person identifier, ordered byte-wise.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonId(pub String);

impl PersonId {
    pub fn new(id: impl Into<String>) -> Self {
        PersonId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PersonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonId {
    fn from(s: &str) -> Self {
        PersonId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraitKind {
    /// 0/1 indicator (e.g. obese at the exam).
    Binary,
    /// Days per week, 0..=7 (e.g. loneliness).
    Count0to7,
}

impl TraitKind {
    pub fn max_value(self) -> u8 {
        match self {
            TraitKind::Binary => 1,
            TraitKind::Count0to7 => 7,
        }
    }
}

impl fmt::Display for TraitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraitKind::Binary => f.write_str("binary"),
            TraitKind::Count0to7 => f.write_str("count0to7"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: PersonId,
    pub is_fp: bool,
    pub female: bool,
    pub birth_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamRecord {
    pub person_id: PersonId,
    pub wave: u8,
    pub exam_year: i32,
    pub trait_value: u8,
    pub age_years: f64,
    pub education_years: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieKind {
    Friend,
    Spouse,
    Sibling,
    Coworker,
    Neighbor,
}

impl TieKind {
    pub const ALL: [TieKind; 5] = [
        TieKind::Friend,
        TieKind::Spouse,
        TieKind::Sibling,
        TieKind::Coworker,
        TieKind::Neighbor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TieKind::Friend => "friend",
            TieKind::Spouse => "spouse",
            TieKind::Sibling => "sibling",
            TieKind::Coworker => "coworker",
            TieKind::Neighbor => "neighbor",
        }
    }

    pub fn parse(s: &str) -> Option<TieKind> {
        TieKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TieRecord {
    pub wave: u8,
    pub source_id: PersonId,
    pub target_id: PersonId,
    pub tie_kind: TieKind,
}

/// Direction of a focal-participant/alter pair at one wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieClass {
    /// Each named the other.
    Mutual,
    /// Only the focal participant named the alter.
    FpNamesLp,
    /// Only the alter named the focal participant.
    LpNamesFp,
}

impl TieClass {
    pub const ALL: [TieClass; 3] = [TieClass::Mutual, TieClass::FpNamesLp, TieClass::LpNamesFp];

    pub fn as_str(self) -> &'static str {
        match self {
            TieClass::Mutual => "mutual",
            TieClass::FpNamesLp => "fp-names-lp",
            TieClass::LpNamesFp => "lp-names-fp",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TieClass::Mutual => "FP<->LP",
            TieClass::FpNamesLp => "FP->LP",
            TieClass::LpNamesFp => "LP->FP",
        }
    }

    pub fn parse(s: &str) -> Option<TieClass> {
        TieClass::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// Which pairs enter the tie set `T_t` at a wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieSelector {
    /// `None` merges all tie kinds.
    pub kind: Option<TieKind>,
    /// `None` accepts any direction.
    pub class: Option<TieClass>,
    /// Require the pair to hold the same classification at `t - 1`.
    pub persistent: bool,
}

impl TieSelector {
    pub fn friends(class: TieClass) -> Self {
        TieSelector {
            kind: Some(TieKind::Friend),
            class: Some(class),
            persistent: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieSet {
    pub wave: u8,
    /// `(fp_id, alter_id)`, sorted.
    pub pairs: Vec<(PersonId, PersonId)>,
}

impl TieSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

type DirectedKey = (u8, PersonId, PersonId, TieKind);

#[derive(Debug, Clone)]
pub struct CohortPanel {
    trait_kind: TraitKind,
    persons: BTreeMap<PersonId, PersonRecord>,
    exams: BTreeMap<(PersonId, u8), ExamRecord>,
    ties: Vec<TieRecord>,
    directed: HashSet<DirectedKey>,
    neighbors: BTreeMap<(u8, PersonId), BTreeSet<PersonId>>,
}

impl CohortPanel {
    /// Validates all records and builds the lookup indexes.
    ///
    /// Row numbers in errors are 1-based data rows (the header is row 0).
    pub fn new(
        trait_kind: TraitKind,
        persons: Vec<PersonRecord>,
        exams: Vec<ExamRecord>,
        ties: Vec<TieRecord>,
    ) -> Result<Self, PanelError> {
        let mut person_map = BTreeMap::new();
        for (idx, p) in persons.into_iter().enumerate() {
            let row = idx + 1;
            if !(MIN_BIRTH_YEAR..=MAX_BIRTH_YEAR).contains(&p.birth_year) {
                return Err(schema("persons.csv", row, "birth_year", "implausible birth year"));
            }
            if p.person_id.0.is_empty() {
                return Err(schema("persons.csv", row, "person_id", "empty id"));
            }
            let id = p.person_id.clone();
            if person_map.insert(id.clone(), p).is_some() {
                return Err(PanelError::DuplicatePerson(id.0));
            }
        }

        let mut exam_map = BTreeMap::new();
        for (idx, e) in exams.into_iter().enumerate() {
            let row = idx + 1;
            if !person_map.contains_key(&e.person_id) {
                return Err(PanelError::DanglingPerson {
                    file: "exams.csv".into(),
                    row,
                    person: e.person_id.0,
                });
            }
            if !(MIN_WAVE..=MAX_WAVE).contains(&e.wave) {
                return Err(schema("exams.csv", row, "wave", "wave outside 1..=7"));
            }
            if e.trait_value > trait_kind.max_value() {
                return Err(PanelError::TraitOutOfRange {
                    row,
                    value: e.trait_value as i64,
                    kind: trait_kind,
                });
            }
            if !(e.age_years.is_finite() && e.age_years >= 0.0) {
                return Err(schema("exams.csv", row, "age_years", "must be finite and >= 0"));
            }
            if !(e.education_years.is_finite() && e.education_years >= 0.0) {
                return Err(schema("exams.csv", row, "education_years", "must be finite and >= 0"));
            }
            let key = (e.person_id.clone(), e.wave);
            if exam_map.contains_key(&key) {
                return Err(PanelError::DuplicateExam {
                    row,
                    person: e.person_id.0,
                    wave: e.wave,
                });
            }
            exam_map.insert(key, e);
        }

        let mut directed = HashSet::with_capacity(ties.len());
        let mut neighbors: BTreeMap<(u8, PersonId), BTreeSet<PersonId>> = BTreeMap::new();
        for (idx, t) in ties.iter().enumerate() {
            let row = idx + 1;
            if !(MIN_WAVE..=MAX_WAVE).contains(&t.wave) {
                return Err(schema("ties.csv", row, "wave", "wave outside 1..=7"));
            }
            if t.source_id == t.target_id {
                return Err(PanelError::SelfTie {
                    row,
                    person: t.source_id.0.clone(),
                });
            }
            for id in [&t.source_id, &t.target_id] {
                if !person_map.contains_key(id) {
                    return Err(PanelError::DanglingPerson {
                        file: "ties.csv".into(),
                        row,
                        person: id.0.clone(),
                    });
                }
            }
            directed.insert((t.wave, t.source_id.clone(), t.target_id.clone(), t.tie_kind));
            neighbors
                .entry((t.wave, t.source_id.clone()))
                .or_default()
                .insert(t.target_id.clone());
            neighbors
                .entry((t.wave, t.target_id.clone()))
                .or_default()
                .insert(t.source_id.clone());
        }

        Ok(CohortPanel {
            trait_kind,
            persons: person_map,
            exams: exam_map,
            ties,
            directed,
            neighbors,
        })
    }

    pub fn trait_kind(&self) -> TraitKind {
        self.trait_kind
    }

    pub fn persons(&self) -> impl Iterator<Item = &PersonRecord> {
        self.persons.values()
    }

    pub fn person(&self, id: &PersonId) -> Option<&PersonRecord> {
        self.persons.get(id)
    }

    pub fn exams(&self) -> impl Iterator<Item = &ExamRecord> {
        self.exams.values()
    }

    pub fn exam(&self, id: &PersonId, wave: u8) -> Option<&ExamRecord> {
        self.exams.get(&(id.clone(), wave))
    }

    pub fn ties(&self) -> &[TieRecord] {
        &self.ties
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn n_exams(&self) -> usize {
        self.exams.len()
    }

    /// Waves that carry at least one exam or tie, ascending.
    pub fn waves(&self) -> Vec<u8> {
        let mut w: BTreeSet<u8> = self.exams.keys().map(|(_, w)| *w).collect();
        w.extend(self.ties.iter().map(|t| t.wave));
        w.into_iter().collect()
    }

    pub fn has_wave(&self, wave: u8) -> bool {
        self.exams.keys().any(|(_, w)| *w == wave) || self.ties.iter().any(|t| t.wave == wave)
    }

    pub fn named(&self, wave: u8, source: &PersonId, target: &PersonId, kind: Option<TieKind>) -> bool {
        match kind {
            Some(k) => self.directed.contains(&(wave, source.clone(), target.clone(), k)),
            None => TieKind::ALL
                .iter()
                .any(|k| self.directed.contains(&(wave, source.clone(), target.clone(), *k))),
        }
    }

    /// Classify the pair over all tie kinds.
    pub fn classify_tie(&self, fp: &PersonId, alter: &PersonId, wave: u8) -> Result<Option<TieClass>, PanelError> {
        self.classify_tie_of_kind(fp, alter, wave, None)
    }

    pub fn classify_tie_of_kind(
        &self,
        fp: &PersonId,
        alter: &PersonId,
        wave: u8,
        kind: Option<TieKind>,
    ) -> Result<Option<TieClass>, PanelError> {
        let rec = self
            .persons
            .get(fp)
            .ok_or_else(|| PanelError::UnknownPerson(fp.0.clone()))?;
        if !rec.is_fp {
            return Err(PanelError::NotFocal(fp.0.clone()));
        }
        let out = self.named(wave, fp, alter, kind);
        let back = self.named(wave, alter, fp, kind);
        Ok(match (out, back) {
            (true, true) => Some(TieClass::Mutual),
            (true, false) => Some(TieClass::FpNamesLp),
            (false, true) => Some(TieClass::LpNamesFp),
            (false, false) => None,
        })
    }

    /// Undirected neighbours of `id` at `wave`, all kinds merged.
    pub fn neighbors(&self, wave: u8, id: &PersonId) -> impl Iterator<Item = &PersonId> {
        self.neighbors
            .get(&(wave, id.clone()))
            .into_iter()
            .flat_map(|s| s.iter())
    }

    /// The tie set `T_t`: FP/alter pairs at `wave` matching `selector`, with
    /// complete exams for both members at `wave` and `wave - 1`.
    pub fn tie_set(&self, wave: u8, selector: &TieSelector) -> Result<TieSet, PanelError> {
        if wave > MAX_WAVE {
            return Err(PanelError::WaveOutOfRange(wave));
        }
        if wave < 2 {
            return Err(PanelError::NoLag(wave));
        }
        let mut pairs = Vec::new();
        for fp in self.persons.values().filter(|p| p.is_fp) {
            let fp_id = &fp.person_id;
            for alter in self.neighbors(wave, fp_id) {
                let Some(class) = self.classify_tie_of_kind(fp_id, alter, wave, selector.kind)? else {
                    continue;
                };
                if selector.class.is_some_and(|c| c != class) {
                    continue;
                }
                if selector.persistent {
                    let prev = self.classify_tie_of_kind(fp_id, alter, wave - 1, selector.kind)?;
                    match (selector.class, prev) {
                        (_, None) => continue,
                        (Some(c), Some(p)) if c != p => continue,
                        _ => {}
                    }
                }
                let complete = [wave, wave - 1]
                    .iter()
                    .all(|w| self.exam(fp_id, *w).is_some() && self.exam(alter, *w).is_some());
                if complete {
                    pairs.push((fp_id.clone(), alter.clone()));
                }
            }
        }
        // Neighbour sets are BTreeSets and persons iterate in id order.
        debug_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        Ok(TieSet { wave, pairs })
    }

    /// Writes `persons.csv`, `exams.csv` and `ties.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), PanelError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        write_file(&dir.join("persons.csv"), &self.persons_csv())?;
        write_file(&dir.join("exams.csv"), &self.exams_csv())?;
        write_file(&dir.join("ties.csv"), &self.ties_csv())?;
        Ok(())
    }

    pub fn persons_csv(&self) -> String {
        let mut s = String::from(PERSONS_HEADER);
        s.push('\n');
        for p in self.persons.values() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                p.person_id, p.is_fp as u8, p.female as u8, p.birth_year
            ));
        }
        s
    }

    pub fn exams_csv(&self) -> String {
        let mut s = String::from(EXAMS_HEADER);
        s.push('\n');
        for e in self.exams.values() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.person_id, e.wave, e.exam_year, e.trait_value, e.age_years, e.education_years
            ));
        }
        s
    }

    pub fn ties_csv(&self) -> String {
        let mut s = String::from(TIES_HEADER);
        s.push('\n');
        for t in &self.ties {
            s.push_str(&format!(
                "{},{},{},{}\n",
                t.wave,
                t.source_id,
                t.target_id,
                t.tie_kind.as_str()
            ));
        }
        s
    }
}

impl PartialEq for CohortPanel {
    fn eq(&self, other: &Self) -> bool {
        self.trait_kind == other.trait_kind
            && self.persons == other.persons
            && self.exams == other.exams
            && self.ties == other.ties
    }
}

fn schema(file: &str, row: usize, column: &str, message: &str) -> PanelError {
    PanelError::Schema {
        file: file.into(),
        row,
        column: column.into(),
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PanelError {
    PanelError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PanelError> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<String, PanelError> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| io_err(path, e))?;
    Ok(s)
}

struct CsvTable {
    file: String,
    rows: Vec<(usize, csv::StringRecord)>,
}

fn parse_table(file: &str, text: &str, header: &str) -> Result<CsvTable, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let got = rdr
        .headers()
        .map_err(|e| schema(file, 0, "header", &e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if got != header {
        return Err(schema(
            file,
            0,
            "header",
            &format!("expected `{header}`, found `{got}`"),
        ));
    }
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| schema(file, idx + 1, "row", &e.to_string()))?;
        rows.push((idx + 1, rec));
    }
    Ok(CsvTable {
        file: file.to_string(),
        rows,
    })
}

impl CsvTable {
    fn field<'a>(&self, row: usize, rec: &'a csv::StringRecord, col: usize, name: &str) -> Result<&'a str, PanelError> {
        rec.get(col)
            .ok_or_else(|| schema(&self.file, row, name, "missing field"))
    }

    fn parse<T: std::str::FromStr>(
        &self,
        row: usize,
        rec: &csv::StringRecord,
        col: usize,
        name: &str,
    ) -> Result<T, PanelError> {
        let raw = self.field(row, rec, col, name)?;
        raw.parse::<T>()
            .map_err(|_| schema(&self.file, row, name, &format!("cannot parse `{raw}`")))
    }

    fn flag(&self, row: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<bool, PanelError> {
        match self.field(row, rec, col, name)? {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(schema(
                &self.file,
                row,
                name,
                &format!("expected 0 or 1, found `{other}`"),
            )),
        }
    }
}

/// Parses the three CSV documents into a validated panel.
pub fn parse_panel(
    persons_csv: &str,
    exams_csv: &str,
    ties_csv: &str,
    trait_kind: TraitKind,
) -> Result<CohortPanel, PanelError> {
    let t = parse_table("persons.csv", persons_csv, PERSONS_HEADER)?;
    let mut persons = Vec::with_capacity(t.rows.len());
    for (row, rec) in &t.rows {
        persons.push(PersonRecord {
            person_id: PersonId::new(t.field(*row, rec, 0, "person_id")?),
            is_fp: t.flag(*row, rec, 1, "is_fp")?,
            female: t.flag(*row, rec, 2, "female")?,
            birth_year: t.parse(*row, rec, 3, "birth_year")?,
        });
    }

    let t = parse_table("exams.csv", exams_csv, EXAMS_HEADER)?;
    let mut exams = Vec::with_capacity(t.rows.len());
    for (row, rec) in &t.rows {
        let raw_trait: i64 = t.parse(*row, rec, 3, "trait")?;
        if raw_trait < 0 || raw_trait > trait_kind.max_value() as i64 {
            return Err(PanelError::TraitOutOfRange {
                row: *row,
                value: raw_trait,
                kind: trait_kind,
            });
        }
        exams.push(ExamRecord {
            person_id: PersonId::new(t.field(*row, rec, 0, "person_id")?),
            wave: t.parse(*row, rec, 1, "wave")?,
            exam_year: t.parse(*row, rec, 2, "exam_year")?,
            trait_value: raw_trait as u8,
            age_years: t.parse(*row, rec, 4, "age_years")?,
            education_years: t.parse(*row, rec, 5, "education_years")?,
        });
    }

    let t = parse_table("ties.csv", ties_csv, TIES_HEADER)?;
    let mut ties = Vec::with_capacity(t.rows.len());
    for (row, rec) in &t.rows {
        let kind_raw = t.field(*row, rec, 3, "tie_kind")?;
        let tie_kind = TieKind::parse(kind_raw)
            .ok_or_else(|| schema("ties.csv", *row, "tie_kind", &format!("unknown tie kind `{kind_raw}`")))?;
        ties.push(TieRecord {
            wave: t.parse(*row, rec, 0, "wave")?,
            source_id: PersonId::new(t.field(*row, rec, 1, "source_id")?),
            target_id: PersonId::new(t.field(*row, rec, 2, "target_id")?),
            tie_kind,
        });
    }

    CohortPanel::new(trait_kind, persons, exams, ties)
}

pub fn load_panel(
    persons_path: &Path,
    exams_path: &Path,
    ties_path: &Path,
    trait_kind: TraitKind,
) -> Result<CohortPanel, PanelError> {
    parse_panel(
        &read_file(persons_path)?,
        &read_file(exams_path)?,
        &read_file(ties_path)?,
        trait_kind,
    )
}

/// Loads `persons.csv`, `exams.csv` and `ties.csv` from one directory.
pub fn load_panel_dir(dir: &Path, trait_kind: TraitKind) -> Result<CohortPanel, PanelError> {
    load_panel(
        &dir.join("persons.csv"),
        &dir.join("exams.csv"),
        &dir.join("ties.csv"),
        trait_kind,
    )
}
