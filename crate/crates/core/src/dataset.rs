//! Loading and validating two-arm right-censored survival data.
//!
//! A CSV file must carry the reserved columns `id`, `arm`, `time` and `event`
//! (names can be overridden with a [`SchemaHint`]). Every other column is a
//! covariate. Columns whose cells all parse as numbers pass through unchanged;
//! anything else is one-hot encoded against its lexicographically smallest
//! level, which is dropped.

use std::collections::{BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One subject: observed time `min(T, C)`, event flag and encoded covariates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRecord {
    pub id: String,
    /// Treatment arm, 1 = investigational, 0 = control.
    pub arm: u8,
    /// Observed time, strictly positive.
    pub time: f64,
    /// `true` for an event, `false` for a censoring.
    pub event: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CovariateKind {
    Numeric,
    /// Levels in lexicographic order; the first one is the reference.
    Categorical {
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
}

/// Raw covariate columns and the names of their encoded counterparts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Schema {
    pub covariates: Vec<CovariateSpec>,
    pub encoded_names: Vec<String>,
}

impl Schema {
    /// Schema with purely numeric covariates.
    pub fn numeric<S: AsRef<str>>(names: &[S]) -> Self {
        Schema {
            covariates: names
                .iter()
                .map(|n| CovariateSpec {
                    name: n.as_ref().to_string(),
                    kind: CovariateKind::Numeric,
                })
                .collect(),
            encoded_names: names.iter().map(|n| n.as_ref().to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.encoded_names.len()
    }
}

/// Overrides for column-role discovery.
#[derive(Debug, Clone, Default)]
pub struct SchemaHint {
    pub id: Option<String>,
    pub arm: Option<String>,
    pub time: Option<String>,
    pub event: Option<String>,
    /// Columns to encode as categorical even when every cell is numeric.
    pub categorical: Vec<String>,
    /// Columns to drop entirely.
    pub ignore: Vec<String>,
}

/// A validated two-arm study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyData {
    records: Vec<SurvivalRecord>,
    schema: Schema,
    n1: usize,
    n0: usize,
}

impl StudyData {
    /// Validate records against the schema and the two-arm invariants.
    pub fn new(records: Vec<SurvivalRecord>, schema: Schema) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let (mut n1, mut n0) = (0usize, 0usize);
        for (i, r) in records.iter().enumerate() {
            let row = Some(i + 1);
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::validation(
                    row,
                    format!("time must be positive, got {}", r.time),
                ));
            }
            match r.arm {
                1 => n1 += 1,
                0 => n0 += 1,
                a => {
                    return Err(Error::validation(
                        row,
                        format!("arm must be 0 or 1, got {a}"),
                    ))
                }
            }
            if r.covariates.len() != schema.dim() {
                return Err(Error::validation(
                    row,
                    format!(
                        "expected {} covariates, got {}",
                        schema.dim(),
                        r.covariates.len()
                    ),
                ));
            }
            if r.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(row, "non-finite covariate value"));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation(row, format!("duplicate id `{}`", r.id)));
            }
        }
        if n1 < 2 || n0 < 2 {
            return Err(Error::validation(
                None,
                format!("each arm needs at least 2 subjects (n1 = {n1}, n0 = {n0})"),
            ));
        }
        Ok(StudyData {
            records,
            schema,
            n1,
            n0,
        })
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (Vec<SurvivalRecord>, Schema) {
        (self.records, self.schema)
    }
}

/// Records of one arm, in their original relative order.
#[derive(Debug, Clone)]
pub struct ArmView<'a> {
    pub arm: u8,
    pub records: Vec<&'a SurvivalRecord>,
    /// Position of each record in the parent [`StudyData`].
    pub positions: Vec<usize>,
}

impl ArmView<'_> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }
}

/// Partition a study into its treated (arm 1) and control (arm 0) views.
pub fn split_by_arm(data: &StudyData) -> (ArmView<'_>, ArmView<'_>) {
    let mut treated = ArmView {
        arm: 1,
        records: Vec::with_capacity(data.n1),
        positions: Vec::with_capacity(data.n1),
    };
    let mut control = ArmView {
        arm: 0,
        records: Vec::with_capacity(data.n0),
        positions: Vec::with_capacity(data.n0),
    };
    for (i, r) in data.records.iter().enumerate() {
        let view = if r.arm == 1 {
            &mut treated
        } else {
            &mut control
        };
        view.records.push(r);
        view.positions.push(i);
    }
    (treated, control)
}

pub fn load_csv(path: impl AsRef<Path>, hint: Option<&SchemaHint>) -> Result<StudyData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, hint)
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | ".")
}

fn parse_indicator(cell: &str, row: usize, column: &str) -> Result<u8> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("expected 0 or 1, got `{cell}`"),
    })?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::validation(
            Some(row),
            format!("column `{column}` must be 0 or 1, got `{cell}`"),
        ))
    }
}

/// Parse a study from any CSV source.
pub fn read_csv<R: Read>(reader: R, hint: Option<&SchemaHint>) -> Result<StudyData> {
    let default_hint = SchemaHint::default();
    let hint = hint.unwrap_or(&default_hint);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let id_name = hint.id.as_deref().unwrap_or("id");
    let arm_name = hint.arm.as_deref().unwrap_or("arm");
    let time_name = hint.time.as_deref().unwrap_or("time");
    let event_name = hint.event.as_deref().unwrap_or("event");
    let id_col = find(id_name)?;
    let arm_col = find(arm_name)?;
    let time_col = find(time_name)?;
    let event_col = find(event_name)?;
    let reserved = [id_col, arm_col, time_col, event_col];

    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|c| !reserved.contains(c) && !hint.ignore.iter().any(|g| g == &headers[*c]))
        .collect();

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }

    // First pass: missing values and column kinds.
    for (i, rec) in rows.iter().enumerate() {
        for &c in reserved.iter().chain(cov_cols.iter()) {
            let cell = rec.get(c).unwrap_or("");
            if is_missing(cell) {
                return Err(Error::validation(
                    Some(i + 1),
                    format!("missing value in column `{}`", headers[c]),
                ));
            }
        }
    }
    let mut covariates = Vec::with_capacity(cov_cols.len());
    let mut encoded_names = Vec::new();
    for &c in &cov_cols {
        let name = headers[c].clone();
        let forced = hint.categorical.iter().any(|n| n == &name);
        let numeric = !forced && rows.iter().all(|r| r[c].parse::<f64>().is_ok());
        if numeric {
            encoded_names.push(name.clone());
            covariates.push(CovariateSpec {
                name,
                kind: CovariateKind::Numeric,
            });
        } else {
            let levels: BTreeSet<&str> = rows.iter().map(|r| &r[c]).collect();
            let levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
            for level in levels.iter().skip(1) {
                encoded_names.push(format!("{name}={level}"));
            }
            covariates.push(CovariateSpec {
                name,
                kind: CovariateKind::Categorical { levels },
            });
        }
    }
    let schema = Schema {
        covariates,
        encoded_names,
    };

    let mut records = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        let time_cell = &rec[time_col];
        let time: f64 = time_cell.parse().map_err(|_| Error::Parse {
            row,
            column: time_name.to_string(),
            message: format!("non-numeric time `{time_cell}`"),
        })?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::validation(
                Some(row),
                format!("time must be positive, got {time_cell}"),
            ));
        }
        let arm = parse_indicator(&rec[arm_col], row, arm_name)?;
        let event = parse_indicator(&rec[event_col], row, event_name)? == 1;

        let mut x = Vec::with_capacity(schema.dim());
        for (spec, &c) in schema.covariates.iter().zip(&cov_cols) {
            let cell = &rec[c];
            match &spec.kind {
                CovariateKind::Numeric => {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row,
                        column: spec.name.clone(),
                        message: format!("non-numeric value `{cell}`"),
                    })?;
                    x.push(v);
                }
                CovariateKind::Categorical { levels } => {
                    for level in levels.iter().skip(1) {
                        x.push(if cell == level { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        records.push(SurvivalRecord {
            id: rec[id_col].to_string(),
            arm,
            time,
            event,
            covariates: x,
        });
    }
    StudyData::new(records, schema)
}

/// Write a study as CSV with encoded covariate columns.
///
/// Reloading the output with [`read_csv`] reproduces every record exactly.
pub fn write_csv<W: Write>(data: &StudyData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "id".to_string(),
        "arm".to_string(),
        "time".to_string(),
        "event".to_string(),
    ];
    header.extend(data.schema.encoded_names.iter().cloned());
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![
            r.id.clone(),
            r.arm.to_string(),
            r.time.to_string(),
            u8::from(r.event).to_string(),
        ];
        row.extend(r.covariates.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Copy a CSV source to `writer`, appending one column of values in row order.
pub fn append_column_csv<R: Read, W: Write>(
    reader: R,
    writer: W,
    name: &str,
    values: &[f64],
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = rdr.headers()?.clone();
    header.push_field(name);
    w.write_record(&header)?;
    let mut n = 0usize;
    for rec in rdr.records() {
        let mut rec = rec?;
        let v = values.get(n).ok_or_else(|| {
            Error::validation(Some(n + 1), "more input rows than appended values")
        })?;
        rec.push_field(&v.to_string());
        w.write_record(&rec)?;
        n += 1;
    }
    if n != values.len() {
        return Err(Error::validation(
            None,
            format!("{} values for {} rows", values.len(), n),
        ));
    }
    w.flush()?;
    Ok(())
}
