//! Reading measurement and patient files, writing stage records.
//!
//! Input files are comma-delimited with a header row. Column order is free,
//! but the column set is fixed per file kind:
//!
//! | file        | columns                                               |
//! |-------------|-------------------------------------------------------|
//! | urine       | `subject_id,timestamp,urineoutput_ml`                 |
//! | creatinine  | `subject_id,timestamp,creatinine`                     |
//! | dialysis    | `subject_id,timestamp,dialysis_active`                |
//! | patients    | `subject_id,weight_kg[,height_cm][,age_years][,sex]`  |
//!
//! Rows are parsed one at a time. Each subject's points are sorted by
//! timestamp afterwards if the file was not already in order.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::model::fixed::format_micros;
use crate::model::{
    convert_unit, ModelError, Observation, ObservationSeries, PatientProfile, Pathway, Quantity,
    Sex, Signal, StageRecord, SubjectId, Unit,
};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const ACCEPTED_TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

pub const OUTPUT_COLUMNS: [&str; 9] = [
    "subject_id",
    "timestamp",
    "uo_stage",
    "abs_scr_stage",
    "rel_scr_stage",
    "dialysis_stage",
    "overall_stage",
    "baseline_rel",
    "baseline_abs",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
    #[error("{file}, row {row}, field {field}: {message}")]
    Parse {
        file: String,
        row: u64,
        field: String,
        message: String,
    },
    #[error("subject {subject}, {signal} at {}: {reason}", .timestamp.format(TIMESTAMP_FORMAT))]
    Integrity {
        subject: SubjectId,
        signal: Signal,
        timestamp: NaiveDateTime,
        reason: String,
    },
    #[error("{file}, row {row}: {source}")]
    InvalidPatient {
        file: String,
        row: u64,
        source: ModelError,
    },
}

impl IngestError {
    pub(crate) fn from_csv(file: &str, e: csv::Error) -> Self {
        let row = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => IngestError::Io {
                path: PathBuf::from(file),
                source,
            },
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => IngestError::Parse {
                file: file.to_string(),
                row,
                field: "*".into(),
                message: format!("expected {expected_len} fields, found {len}"),
            },
            csv::ErrorKind::Utf8 { err, .. } => IngestError::Parse {
                file: file.to_string(),
                row,
                field: "*".into(),
                message: err.to_string(),
            },
            other => IngestError::Parse {
                file: file.to_string(),
                row,
                field: "*".into(),
                message: format!("{other:?}"),
            },
        }
    }
}

impl From<ModelError> for IngestError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidObservation {
                subject,
                signal,
                timestamp,
                reason,
            } => IngestError::Integrity {
                subject,
                signal,
                timestamp,
                reason,
            },
            other => IngestError::Schema {
                file: "input".into(),
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Unit of the values in the creatinine file; converted to mg/dL.
    pub creatinine_unit: Unit,
    pub delimiter: u8,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            creatinine_unit: Unit::MilligramPerDeciliter,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub urine_output: PathBuf,
    pub creatinine: PathBuf,
    pub dialysis: Option<PathBuf>,
    pub patients: PathBuf,
}

/// Validated profiles and series, immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetBundle {
    profiles: BTreeMap<SubjectId, PatientProfile>,
    series: BTreeMap<(SubjectId, Signal), ObservationSeries>,
}

impl DatasetBundle {
    /// Checks that profiles and series are unique and that every series has
    /// a profile.
    pub fn new(
        profiles: Vec<PatientProfile>,
        series: Vec<ObservationSeries>,
    ) -> Result<Self, IngestError> {
        let mut bundle = DatasetBundle::default();
        for p in profiles {
            let id = p.subject_id().clone();
            if bundle.profiles.insert(id.clone(), p).is_some() {
                return Err(IngestError::InvalidPatient {
                    file: "patients".into(),
                    row: 0,
                    source: ModelError::InvalidProfile {
                        subject: id,
                        reason: "duplicate profile".into(),
                    },
                });
            }
        }
        for s in series {
            let first = s.first_timestamp();
            let key = (s.subject_id().clone(), s.signal());
            if !bundle.profiles.contains_key(&key.0) {
                return Err(IngestError::Integrity {
                    subject: key.0,
                    signal: key.1,
                    timestamp: first.unwrap_or_default(),
                    reason: "no patient profile for this subject".into(),
                });
            }
            if s.is_empty() {
                continue;
            }
            if let Some(prior) = bundle.series.insert(key.clone(), s) {
                return Err(IngestError::Integrity {
                    subject: key.0,
                    signal: key.1,
                    timestamp: prior.first_timestamp().unwrap_or_default(),
                    reason: "series given twice".into(),
                });
            }
        }
        Ok(bundle)
    }

    /// Subjects with a profile, in sorted order.
    pub fn subjects(&self) -> impl Iterator<Item = &SubjectId> {
        self.profiles.keys()
    }

    pub fn profiles(&self) -> impl Iterator<Item = &PatientProfile> {
        self.profiles.values()
    }

    pub fn profile(&self, subject: &SubjectId) -> Option<&PatientProfile> {
        self.profiles.get(subject)
    }

    pub fn series(&self, subject: &SubjectId, signal: Signal) -> Option<&ObservationSeries> {
        self.series.get(&(subject.clone(), signal))
    }

    /// Non-empty series of one subject, in signal order.
    pub fn series_for(&self, subject: &SubjectId) -> Vec<ObservationSeries> {
        Signal::ALL
            .iter()
            .filter_map(|&sig| self.series(subject, sig).cloned())
            .collect()
    }

    pub fn all_series(&self) -> impl Iterator<Item = &ObservationSeries> {
        self.series.values()
    }

    pub fn observation_count(&self) -> usize {
        self.series.values().map(|s| s.points().len()).sum()
    }
}

/// Loads all files of a dataset. The dialysis file is optional.
pub fn load_dataset(paths: &DatasetPaths, options: &LoadOptions) -> Result<DatasetBundle, IngestError> {
    let profiles = read_patients(open(&paths.patients)?, &source_name(&paths.patients), options)?;
    let mut series = read_series(
        open(&paths.urine_output)?,
        &source_name(&paths.urine_output),
        Signal::UrineOutput,
        options,
    )?;
    series.extend(read_series(
        open(&paths.creatinine)?,
        &source_name(&paths.creatinine),
        Signal::Creatinine,
        options,
    )?);
    if let Some(d) = &paths.dialysis {
        series.extend(read_series(open(d)?, &source_name(d), Signal::Dialysis, options)?);
    }
    DatasetBundle::new(profiles, series)
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|e| IngestError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

pub fn value_column(signal: Signal) -> &'static str {
    match signal {
        Signal::UrineOutput => "urineoutput_ml",
        Signal::Creatinine => "creatinine",
        Signal::Dialysis => "dialysis_active",
    }
}

/// Parses one measurement file into per-subject series of `signal`.
pub fn read_series<R: Read>(
    reader: R,
    source: &str,
    signal: Signal,
    options: &LoadOptions,
) -> Result<Vec<ObservationSeries>, IngestError> {
    let column = value_column(signal);
    let mut table = Table::open_with(reader, source, &["subject_id", "timestamp", column], &[], false, options.delimiter)?;

    let mut by_subject: BTreeMap<SubjectId, (Vec<Observation>, bool)> = BTreeMap::new();
    while let Some(row) = table.next_row()? {
        let subject = row.subject("subject_id")?;
        let timestamp = row.timestamp("timestamp")?;
        let obs = match signal {
            Signal::UrineOutput => {
                let q = row.parse_field(column, |s| parse_amount(s, Unit::Milliliter))?;
                Observation::amount(timestamp, q)
            }
            Signal::Creatinine => {
                let q = row.parse_field(column, |s| {
                    let raw = parse_amount(s, options.creatinine_unit)?;
                    convert_unit(raw, Unit::MilligramPerDeciliter).map_err(|e| e.to_string())
                })?;
                Observation::amount(timestamp, q)
            }
            Signal::Dialysis => Observation::flag(timestamp, row.parse_field(column, parse_flag)?),
        };
        let (points, sorted) = by_subject.entry(subject).or_insert_with(|| (Vec::new(), true));
        if points.last().is_some_and(|p| p.timestamp > timestamp) {
            *sorted = false;
        }
        points.push(obs);
    }

    by_subject
        .into_iter()
        .map(|(subject, (mut points, sorted))| {
            if !sorted {
                points.sort_by_key(|p| p.timestamp);
            }
            if let Some(pair) = points.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
                return Err(IngestError::Integrity {
                    subject,
                    signal,
                    timestamp: pair[1].timestamp,
                    reason: "duplicate timestamp".into(),
                });
            }
            Ok(ObservationSeries::new(subject, signal, points)?)
        })
        .collect()
}

/// Parses the patients file.
pub fn read_patients<R: Read>(
    reader: R,
    source: &str,
    options: &LoadOptions,
) -> Result<Vec<PatientProfile>, IngestError> {
    let mut table = Table::open_with(
        reader,
        source,
        &["subject_id", "weight_kg"],
        &["height_cm", "age_years", "sex"],
        false,
        options.delimiter,
    )?;
    let mut profiles = Vec::new();
    let mut seen = std::collections::HashSet::new();
    while let Some(row) = table.next_row()? {
        let subject = row.subject("subject_id")?;
        let weight = row.parse_field("weight_kg", |s| parse_amount(s, Unit::Kilogram))?;
        let height = row.optional("height_cm", |s| parse_amount(s, Unit::Centimeter))?;
        let age = row.optional("age_years", |s| parse_amount(s, Unit::Year))?;
        let sex = row.optional("sex", |s| s.parse::<Sex>().map_err(|e| e.to_string()))?;
        let line = row.line;
        let invalid = |e| IngestError::InvalidPatient {
            file: source.to_string(),
            row: line,
            source: e,
        };
        if !seen.insert(subject.clone()) {
            return Err(invalid(ModelError::InvalidProfile {
                subject,
                reason: "duplicate profile".into(),
            }));
        }
        profiles.push(PatientProfile::new(subject, weight, height, age, sex).map_err(invalid)?);
    }
    Ok(profiles)
}

fn parse_amount(text: &str, unit: Unit) -> Result<Quantity, String> {
    Quantity::parse(text, unit).map_err(|e| e.to_string())
}

fn parse_flag(text: &str) -> Result<bool, String> {
    match text {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        other => Err(format!("expected 0, 1, true or false, got {other:?}")),
    }
}

pub fn parse_timestamp(text: &str) -> Result<NaiveDateTime, String> {
    ACCEPTED_TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .ok_or_else(|| format!("expected YYYY-MM-DDTHH:MM:SS, got {text:?}"))
}

/// A delimited file with a checked header.
pub(crate) struct Table<R: Read> {
    reader: csv::Reader<R>,
    source: String,
    columns: HashMap<String, usize>,
    record: csv::StringRecord,
}

impl<R: Read> Table<R> {
    pub(crate) fn open(
        reader: R,
        source: &str,
        required: &[&str],
        optional: &[&str],
        allow_extra: bool,
    ) -> Result<Self, IngestError> {
        Self::open_with(reader, source, required, optional, allow_extra, b',')
    }

    pub(crate) fn open_with(
        reader: R,
        source: &str,
        required: &[&str],
        optional: &[&str],
        allow_extra: bool,
        delimiter: u8,
    ) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(reader);
        let schema = |message: String| IngestError::Schema {
            file: source.to_string(),
            message,
        };
        let header = reader
            .headers()
            .map_err(|e| IngestError::from_csv(source, e))?
            .clone();

        let mut columns = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            let name = name.trim_start_matches('\u{feff}').trim();
            if !allow_extra && !required.contains(&name) && !optional.contains(&name) {
                return Err(schema(format!("unexpected column {name:?}")));
            }
            if columns.insert(name.to_string(), i).is_some() {
                return Err(schema(format!("column {name:?} appears twice")));
            }
        }
        if let Some(missing) = required.iter().find(|c| !columns.contains_key(**c)) {
            return Err(schema(format!("missing column {missing:?}")));
        }

        Ok(Table {
            reader,
            source: source.to_string(),
            columns,
            record: csv::StringRecord::new(),
        })
    }

    pub(crate) fn next_row(&mut self) -> Result<Option<Row<'_>>, IngestError> {
        let more = self
            .reader
            .read_record(&mut self.record)
            .map_err(|e| IngestError::from_csv(&self.source, e))?;
        if !more {
            return Ok(None);
        }
        let line = self.record.position().map_or(0, |p| p.line());
        Ok(Some(Row {
            record: &self.record,
            columns: &self.columns,
            source: &self.source,
            line,
        }))
    }
}

pub(crate) struct Row<'a> {
    record: &'a csv::StringRecord,
    columns: &'a HashMap<String, usize>,
    source: &'a str,
    pub(crate) line: u64,
}

impl Row<'_> {
    fn error(&self, field: &str, message: String) -> IngestError {
        IngestError::Parse {
            file: self.source.to_string(),
            row: self.line,
            field: field.to_string(),
            message,
        }
    }

    fn raw(&self, column: &str) -> Option<&str> {
        self.columns
            .get(column)
            .and_then(|&i| self.record.get(i))
            .map(str::trim)
    }

    pub(crate) fn parse_field<T>(
        &self,
        column: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, IngestError> {
        let text = self.raw(column).unwrap_or("");
        parse(text).map_err(|m| self.error(column, m))
    }

    /// `None` when the column is absent or the field is empty.
    pub(crate) fn optional<T>(
        &self,
        column: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, IngestError> {
        match self.raw(column) {
            None | Some("") => Ok(None),
            Some(text) => parse(text).map(Some).map_err(|m| self.error(column, m)),
        }
    }

    pub(crate) fn subject(&self, column: &str) -> Result<SubjectId, IngestError> {
        self.parse_field(column, |s| {
            if s.is_empty() {
                Err("empty subject id".to_string())
            } else {
                Ok(SubjectId::new(s))
            }
        })
    }

    pub(crate) fn timestamp(&self, column: &str) -> Result<NaiveDateTime, IngestError> {
        self.parse_field(column, parse_timestamp)
    }
}

fn write_err(path: &Path) -> impl Fn(io::Error) -> IngestError + '_ {
    move |e| IngestError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn csv_write_err(path: &Path) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |e| IngestError::from_csv(&path.display().to_string(), e)
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    File::create(path).map(BufWriter::new).map_err(write_err(path))
}

/// Writes stage records to `path`. Unknown stages and absent baselines are
/// written as empty fields.
pub fn write_stage_records(records: &[StageRecord], path: &Path) -> Result<(), IngestError> {
    let file = create(path)?;
    write_stage_records_to(records, file).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn write_stage_records_to<W: Write>(records: &[StageRecord], writer: W) -> Result<(), IngestError> {
    let out = Path::new("output");
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OUTPUT_COLUMNS).map_err(csv_write_err(out))?;
    for r in records {
        let mut row: Vec<String> = Vec::with_capacity(OUTPUT_COLUMNS.len());
        row.push(r.subject_id().to_string());
        row.push(r.timestamp().format(TIMESTAMP_FORMAT).to_string());
        row.extend(Pathway::ALL.iter().map(|&p| r.stage(p).as_field().to_string()));
        row.push(optional_value(r.audit().baseline_rel));
        row.push(optional_value(r.audit().baseline_abs));
        w.write_record(&row).map_err(csv_write_err(out))?;
    }
    w.flush().map_err(write_err(out))
}

fn optional_value(q: Option<Quantity>) -> String {
    q.map_or_else(String::new, |q| format_micros(q.raw()))
}

/// Writes the bundle back out in the input formats. The dialysis file is
/// written only when a path is given.
pub fn write_dataset(bundle: &DatasetBundle, paths: &DatasetPaths) -> Result<(), IngestError> {
    write_patients_to(bundle, create(&paths.patients)?)?;
    write_series_to(bundle, Signal::UrineOutput, create(&paths.urine_output)?)?;
    write_series_to(bundle, Signal::Creatinine, create(&paths.creatinine)?)?;
    if let Some(d) = &paths.dialysis {
        write_series_to(bundle, Signal::Dialysis, create(d)?)?;
    }
    Ok(())
}

pub fn write_series_to<W: Write>(bundle: &DatasetBundle, signal: Signal, writer: W) -> Result<(), IngestError> {
    let out = Path::new(signal.name());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "timestamp", value_column(signal)])
        .map_err(csv_write_err(out))?;
    for s in bundle.all_series().filter(|s| s.signal() == signal) {
        for p in s.points() {
            let value = match p.reading {
                crate::model::Reading::Amount(q) => format_micros(q.raw()),
                crate::model::Reading::Flag(b) => u8::from(b).to_string(),
            };
            w.write_record([
                s.subject_id().as_str(),
                &p.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                &value,
            ])
            .map_err(csv_write_err(out))?;
        }
    }
    w.flush().map_err(write_err(out))
}

pub fn write_patients_to<W: Write>(bundle: &DatasetBundle, writer: W) -> Result<(), IngestError> {
    let out = Path::new("patients");
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "weight_kg", "height_cm", "age_years", "sex"])
        .map_err(csv_write_err(out))?;
    for p in bundle.profiles() {
        w.write_record([
            p.subject_id().to_string(),
            format_micros(p.weight().raw()),
            optional_value(p.height()),
            optional_value(p.age()),
            p.sex().map_or_else(String::new, |s| s.to_string()),
        ])
        .map_err(csv_write_err(out))?;
    }
    w.flush().map_err(write_err(out))
}
