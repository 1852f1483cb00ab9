//! Mixed-type tables: schema, CSV ingestion with type inference, CSV output
//! and seeded train/holdout splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkernels::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Integer,
    Categorical,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, ColumnKind::Categorical)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Integer => "integer",
            ColumnKind::Categorical => "categorical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Category labels, in code order. Empty unless `kind` is categorical.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl ColumnSchema {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Continuous, categories: Vec::new() }
    }

    pub fn integer(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Integer, categories: Vec::new() }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn category_code(&self, label: &str) -> Option<u32> {
        self.categories.iter().position(|c| c == label).map(|i| i as u32)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ColumnKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(Error::Schema(format!("categorical column `{}` has no categories", self.name)));
                }
                let unique: HashSet<&String> = self.categories.iter().collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::Schema(format!("column `{}` has duplicate category labels", self.name)));
                }
            }
            _ if !self.categories.is_empty() => {
                return Err(Error::Schema(format!("{} column `{}` must not carry categories", self.kind, self.name)));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Column storage. `None` marks a missing cell; categorical cells hold codes
/// into the column schema's category list.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<Option<f64>>),
    Integer(Vec<Option<i64>>),
    Categorical(Vec<Option<u32>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Integer(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Continuous(_) => ColumnKind::Continuous,
            Column::Integer(_) => ColumnKind::Integer,
            Column::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn is_missing(&self, i: usize) -> bool {
        match self {
            Column::Continuous(v) => v[i].is_none(),
            Column::Integer(v) => v[i].is_none(),
            Column::Categorical(v) => v[i].is_none(),
        }
    }

    pub fn missing_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_missing(i)).count()
    }

    /// Numeric view of cell `i` (`None` for missing or categorical cells).
    pub fn numeric(&self, i: usize) -> Option<f64> {
        match self {
            Column::Continuous(v) => v[i],
            Column::Integer(v) => v[i].map(|x| x as f64),
            Column::Categorical(_) => None,
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&i| v[i]).collect()),
            Column::Integer(v) => Column::Integer(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// An owned cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Real(f64),
    Int(i64),
    Label(String),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Column-ordered table with explicit missingness. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Vec<ColumnSchema>,
    columns: Vec<Column>,
}

impl Table {
    pub fn new(schema: Vec<ColumnSchema>, columns: Vec<Column>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::Schema("a table needs at least one column".into()));
        }
        if schema.len() != columns.len() {
            return Err(Error::Schema(format!(
                "schema has {} columns but {} were supplied",
                schema.len(),
                columns.len()
            )));
        }
        let mut names = HashSet::new();
        for s in &schema {
            s.validate()?;
            if !names.insert(s.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", s.name)));
            }
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::Schema("a table needs at least one row".into()));
        }
        for (s, c) in schema.iter().zip(&columns) {
            if c.len() != n {
                return Err(Error::Schema(format!("column `{}` has {} rows, expected {n}", s.name, c.len())));
            }
            if c.kind() != s.kind {
                return Err(Error::Schema(format!(
                    "column `{}` is declared {} but holds {} data",
                    s.name,
                    s.kind,
                    c.kind()
                )));
            }
            match c {
                Column::Continuous(v) if v.iter().flatten().any(|x| !x.is_finite()) => {
                    return Err(Error::Schema(format!("column `{}` holds a non-finite value", s.name)));
                }
                Column::Categorical(v) => {
                    let k = s.categories.len() as u32;
                    if v.iter().flatten().any(|&code| code >= k) {
                        return Err(Error::Schema(format!("column `{}` holds an out-of-range category code", s.name)));
                    }
                }
                _ => {}
            }
        }
        Ok(Self { schema, columns })
    }

    /// Builds a table from row-major owned cells.
    pub fn from_rows(schema: Vec<ColumnSchema>, rows: &[Vec<Cell>]) -> Result<Self> {
        let mut columns: Vec<Column> = schema
            .iter()
            .map(|s| match s.kind {
                ColumnKind::Continuous => Column::Continuous(Vec::with_capacity(rows.len())),
                ColumnKind::Integer => Column::Integer(Vec::with_capacity(rows.len())),
                ColumnKind::Categorical => Column::Categorical(Vec::with_capacity(rows.len())),
            })
            .collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Parse {
                    row: r + 1,
                    message: format!("expected {} cells, found {}", schema.len(), row.len()),
                });
            }
            for ((s, col), cell) in schema.iter().zip(columns.iter_mut()).zip(row) {
                let bad = || Error::Parse {
                    row: r + 1,
                    message: format!("cell {cell:?} does not fit {} column `{}`", s.kind, s.name),
                };
                match (col, cell) {
                    (Column::Continuous(v), Cell::Missing) => v.push(None),
                    (Column::Continuous(v), Cell::Real(x)) => v.push(Some(*x)),
                    (Column::Continuous(v), Cell::Int(x)) => v.push(Some(*x as f64)),
                    (Column::Integer(v), Cell::Missing) => v.push(None),
                    (Column::Integer(v), Cell::Int(x)) => v.push(Some(*x)),
                    (Column::Categorical(v), Cell::Missing) => v.push(None),
                    (Column::Categorical(v), Cell::Label(l)) => v.push(Some(s.category_code(l).ok_or_else(bad)?)),
                    _ => return Err(bad()),
                }
            }
        }
        Table::new(schema, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s.name == name)
    }

    pub fn cell(&self, i: usize, j: usize) -> Cell {
        match &self.columns[j] {
            Column::Continuous(v) => v[i].map_or(Cell::Missing, Cell::Real),
            Column::Integer(v) => v[i].map_or(Cell::Missing, Cell::Int),
            Column::Categorical(v) => {
                v[i].map_or(Cell::Missing, |c| Cell::Label(self.schema[j].categories[c as usize].clone()))
            }
        }
    }

    pub fn row(&self, i: usize) -> Vec<Cell> {
        (0..self.n_cols()).map(|j| self.cell(i, j)).collect()
    }

    /// New table holding the given rows, in the given order.
    pub fn take_rows(&self, rows: &[usize]) -> Result<Table> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n_rows()) {
            return Err(Error::Argument(format!("row {bad} out of range for {} rows", self.n_rows())));
        }
        Table::new(self.schema.clone(), self.columns.iter().map(|c| c.take(rows)).collect())
    }

    /// Rows concatenated with another table of the same schema.
    pub fn concat(&self, other: &Table) -> Result<Table> {
        if self.schema != other.schema {
            return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| match (a, b) {
                (Column::Continuous(a), Column::Continuous(b)) => Column::Continuous([&a[..], &b[..]].concat()),
                (Column::Integer(a), Column::Integer(b)) => Column::Integer([&a[..], &b[..]].concat()),
                (Column::Categorical(a), Column::Categorical(b)) => Column::Categorical([&a[..], &b[..]].concat()),
                _ => unreachable!("schemas already compared equal"),
            })
            .collect();
        Table::new(self.schema.clone(), columns)
    }
}

/// Parsing options for [`read_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Tokens read as missing, compared case-insensitively after trimming.
    pub missing_tokens: Vec<String>,
    /// Integer columns with more distinct values than this are inferred as
    /// continuous. `None` disables the promotion.
    pub integer_promotion_threshold: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            missing_tokens: ["", "NA", "NaN", "N/A", "?", "nan"].iter().map(|s| s.to_string()).collect(),
            integer_promotion_threshold: Some(10_000),
        }
    }
}

impl CsvOptions {
    fn missing_set(&self) -> HashSet<String> {
        self.missing_tokens.iter().map(|t| t.trim().to_lowercase()).collect()
    }
}

/// One override entry: either a bare kind or a kind with a fixed category list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OverrideEntry {
    Kind(ColumnKind),
    Detailed {
        kind: ColumnKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        categories: Option<Vec<String>>,
    },
}

impl OverrideEntry {
    fn kind(&self) -> ColumnKind {
        match self {
            OverrideEntry::Kind(k) | OverrideEntry::Detailed { kind: k, .. } => *k,
        }
    }

    fn categories(&self) -> Option<&[String]> {
        match self {
            OverrideEntry::Detailed { categories: Some(c), .. } => Some(c),
            _ => None,
        }
    }
}

/// Schema override document: column name to kind (plus optional categories).
///
/// ```json
/// { "age": "integer", "income": { "kind": "categorical", "categories": ["<=50K", ">50K"] } }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaOverride {
    pub columns: BTreeMap<String, OverrideEntry>,
}

impl SchemaOverride {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid schema override: {e}")))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Pins every kind and category list of `schema`.
    pub fn exact(schema: &[ColumnSchema]) -> Self {
        let columns = schema
            .iter()
            .map(|s| {
                let entry = match s.kind {
                    ColumnKind::Categorical => {
                        OverrideEntry::Detailed { kind: s.kind, categories: Some(s.categories.clone()) }
                    }
                    k => OverrideEntry::Kind(k),
                };
                (s.name.clone(), entry)
            })
            .collect();
        Self { columns }
    }

    /// Pins the kinds of `schema` but lets category lists be inferred.
    pub fn kinds_only(schema: &[ColumnSchema]) -> Self {
        Self { columns: schema.iter().map(|s| (s.name.clone(), OverrideEntry::Kind(s.kind))).collect() }
    }
}

/// Kind inference for one column of raw tokens (missing tokens already
/// removed): integer if every token parses as an integer, else continuous if
/// every token parses as a finite real, else categorical.
pub fn infer_kind<S: AsRef<str>>(name: &str, tokens: &[S], options: &CsvOptions) -> Result<ColumnKind> {
    if tokens.is_empty() {
        return Err(Error::Schema(format!("column `{name}` has no observed values; its kind is undecidable")));
    }
    if tokens.iter().all(|t| t.as_ref().parse::<i64>().is_ok()) {
        if let Some(limit) = options.integer_promotion_threshold {
            let distinct: HashSet<&str> = tokens.iter().map(|t| t.as_ref()).collect();
            if distinct.len() > limit {
                return Ok(ColumnKind::Continuous);
            }
        }
        return Ok(ColumnKind::Integer);
    }
    if tokens.iter().all(|t| parse_real(t.as_ref()).is_some()) {
        return Ok(ColumnKind::Continuous);
    }
    Ok(ColumnKind::Categorical)
}

fn parse_real(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Infers a schema from raw token columns. Missing tokens are recognised
/// through `options`; categories are sorted lexicographically.
pub fn infer_schema<S: AsRef<str>>(
    names: &[String],
    raw_columns: &[Vec<S>],
    options: &CsvOptions,
) -> Result<Vec<ColumnSchema>> {
    let missing = options.missing_set();
    names
        .iter()
        .zip(raw_columns)
        .map(|(name, raw)| {
            let observed: Vec<&str> =
                raw.iter().map(|t| t.as_ref().trim()).filter(|t| !missing.contains(&t.to_lowercase())).collect();
            let kind = infer_kind(name, &observed, options)?;
            let categories = if kind == ColumnKind::Categorical {
                observed.iter().copied().collect::<BTreeSet<&str>>().into_iter().map(String::from).collect()
            } else {
                Vec::new()
            };
            Ok(ColumnSchema { name: name.clone(), kind, categories })
        })
        .collect()
}

/// Reads a headed CSV file. Without an override every column's kind is
/// inferred; override entries pin kinds (and optionally category lists).
pub fn read_csv(
    path: impl AsRef<Path>,
    schema_override: Option<&SchemaOverride>,
    options: &CsvOptions,
) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, schema_override, options).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// [`read_csv`] over any reader.
pub fn read_csv_from<R: Read>(
    reader: R,
    schema_override: Option<&SchemaOverride>,
    options: &CsvOptions,
) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers().map_err(|e| csv_error(e, 0))?.iter().map(String::from).collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(Error::Parse { row: 0, message: "missing header row".into() });
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, r + 1))?;
        for (col, field) in raw.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
    }
    if raw[0].is_empty() {
        return Err(Error::Parse { row: 1, message: "no data rows".into() });
    }

    if let Some(ov) = schema_override {
        if let Some(absent) = ov.columns.keys().find(|k| !names.contains(k)) {
            return Err(Error::Schema(format!("override names column `{absent}`, which is not in the header")));
        }
    }

    let missing = options.missing_set();
    let mut schema = Vec::with_capacity(names.len());
    for (name, tokens) in names.iter().zip(&raw) {
        let column_schema = match schema_override.and_then(|ov| ov.columns.get(name)) {
            Some(entry) => {
                let categories = match (entry.kind(), entry.categories()) {
                    (ColumnKind::Categorical, Some(c)) => c.to_vec(),
                    (ColumnKind::Categorical, None) => tokens
                        .iter()
                        .filter(|t| !missing.contains(&t.to_lowercase()))
                        .map(String::as_str)
                        .collect::<BTreeSet<&str>>()
                        .into_iter()
                        .map(String::from)
                        .collect(),
                    _ => Vec::new(),
                };
                ColumnSchema { name: name.clone(), kind: entry.kind(), categories }
            }
            None => infer_schema(std::slice::from_ref(name), std::slice::from_ref(tokens), options)?.remove(0),
        };
        column_schema.validate()?;
        schema.push(column_schema);
    }

    let columns =
        schema.iter().zip(&raw).map(|(s, tokens)| parse_column(s, tokens, &missing)).collect::<Result<Vec<_>>>()?;
    Table::new(schema, columns)
}

fn csv_error(e: csv::Error, fallback_row: usize) -> Error {
    let row = e.position().map(|p| p.record() as usize).unwrap_or(fallback_row);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            Error::Parse { row, message: format!("ragged row: expected {expected_len} fields, found {len}") }
        }
        _ => Error::Parse { row, message: e.to_string() },
    }
}

fn parse_column(schema: &ColumnSchema, tokens: &[String], missing: &HashSet<String>) -> Result<Column> {
    let is_missing = |t: &str| missing.contains(&t.to_lowercase());
    let bad = |row: usize, token: &str| Error::Parse {
        row: row + 1,
        message: format!("`{token}` is not a valid {} value for column `{}`", schema.kind, schema.name),
    };
    Ok(match schema.kind {
        ColumnKind::Continuous => Column::Continuous(
            tokens
                .iter()
                .enumerate()
                .map(|(r, t)| if is_missing(t) { Ok(None) } else { parse_real(t).map(Some).ok_or_else(|| bad(r, t)) })
                .collect::<Result<_>>()?,
        ),
        ColumnKind::Integer => Column::Integer(
            tokens
                .iter()
                .enumerate()
                .map(|(r, t)| if is_missing(t) { Ok(None) } else { t.parse::<i64>().map(Some).map_err(|_| bad(r, t)) })
                .collect::<Result<_>>()?,
        ),
        ColumnKind::Categorical => {
            let codes: HashMap<&str, u32> =
                schema.categories.iter().enumerate().map(|(i, c)| (c.as_str(), i as u32)).collect();
            Column::Categorical(
                tokens
                    .iter()
                    .enumerate()
                    .map(|(r, t)| {
                        if is_missing(t) {
                            Ok(None)
                        } else {
                            codes.get(t.as_str()).copied().map(Some).ok_or_else(|| bad(r, t))
                        }
                    })
                    .collect::<Result<_>>()?,
            )
        }
    })
}

/// Writes `table` as CSV: missing cells are empty, integers have no decimal
/// point and reals use the shortest representation that parses back exactly.
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(table, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// [`write_csv`] over any writer.
pub fn write_csv_to<W: Write>(table: &Table, writer: W) -> Result<()> {
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io("<csv output>", source),
        other => Error::Parse { row: 0, message: format!("{other:?}") },
    };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(table.schema().iter().map(|s| s.name.as_str())).map_err(io_err)?;
    let mut record: Vec<String> = Vec::with_capacity(table.n_cols());
    for i in 0..table.n_rows() {
        record.clear();
        for (s, col) in table.schema().iter().zip(table.columns()) {
            record.push(match col {
                Column::Continuous(v) => v[i].map(|x| x.to_string()).unwrap_or_default(),
                Column::Integer(v) => v[i].map(|x| x.to_string()).unwrap_or_default(),
                Column::Categorical(v) => v[i].map(|c| s.categories[c as usize].clone()).unwrap_or_default(),
            });
        }
        w.write_record(&record).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Seeded train/holdout split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self { train_fraction, seed }
    }

    /// `⌊f·n⌋`, guarded against products like `0.57 * 100 = 56.999…`.
    pub fn train_rows(&self, n: usize) -> usize {
        (self.train_fraction * n as f64 + 1e-9).floor() as usize
    }
}

/// Row indices of the two partitions, each sorted ascending.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Argument(format!("train fraction must lie in (0, 1), got {}", spec.train_fraction)));
    }
    let n_train = spec.train_rows(n);
    if n_train < 1 || n_train >= n {
        return Err(Error::Argument(format!("a {} split of {n} rows leaves an empty partition", spec.train_fraction)));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(spec.seed).shuffle(&mut idx);
    let mut holdout = idx.split_off(n_train);
    idx.sort_unstable();
    holdout.sort_unstable();
    Ok((idx, holdout))
}

/// Shuffles the row indices with the seeded stream and cuts at `⌊f·n⌋`.
pub fn split(table: &Table, spec: &SplitSpec) -> Result<(Table, Table)> {
    let (train, holdout) = split_indices(table.n_rows(), spec)?;
    Ok((table.take_rows(&train)?, table.take_rows(&holdout)?))
}
