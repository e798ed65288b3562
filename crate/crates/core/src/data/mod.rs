//! Observation tables, CSV ingestion and per-group summaries.

pub mod education;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use education::{EducationCategory, EducationLevel, EducationRecord};

/// One unit-level row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub unit: String,
    pub group: String,
    pub second: Option<String>,
    pub covariate: Option<f64>,
    pub response: f64,
}

/// Column-name map for CSV ingestion.
///
/// When `education` names a column of education categories, the covariate
/// defaults to the category's years and the second cluster to its level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub unit: Option<String>,
    pub group: String,
    #[serde(default)]
    pub second: Option<String>,
    #[serde(default)]
    pub covariate: Option<String>,
    pub response: String,
    #[serde(default)]
    pub education: Option<String>,
    /// Closed set of admissible group labels, in report order.
    #[serde(default)]
    pub groups: Option<Vec<String>>,
}

impl Schema {
    pub fn new(group: &str, response: &str) -> Self {
        Schema {
            unit: None,
            group: group.to_string(),
            second: None,
            covariate: None,
            response: response.to_string(),
            education: None,
            groups: None,
        }
    }

    /// The column names of a table written by [`save_table`].
    pub fn canonical() -> Self {
        Schema {
            unit: Some("unit".into()),
            group: "group".into(),
            second: Some("second".into()),
            covariate: Some("covariate".into()),
            response: "response".into(),
            education: None,
            groups: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    pub drop_nonpositive: bool,
}

/// Validated rows plus the group index.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    rows: Vec<Observation>,
    groups: Vec<String>,
    nonpositive: usize,
    dropped: usize,
}

impl ObservationTable {
    /// Builds a table; groups are indexed in order of first appearance.
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        Self::with_groups(rows, None)
    }

    /// Builds a table against a declared group index; unknown labels are a
    /// schema error and declared groups need not all be present.
    pub fn with_groups(rows: Vec<Observation>, declared: Option<Vec<String>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (i, r) in rows.iter().enumerate() {
            if !r.response.is_finite() {
                return Err(Error::Parse {
                    row: i + 1,
                    column: "response".into(),
                    message: format!("non-finite response {}", r.response),
                });
            }
            if let Some(x) = r.covariate {
                if !x.is_finite() {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: "covariate".into(),
                        message: format!("non-finite covariate {x}"),
                    });
                }
            }
        }
        let groups = match declared {
            Some(groups) => {
                for r in &rows {
                    if !groups.contains(&r.group) {
                        return Err(Error::Schema(format!("unknown group label `{}`", r.group)));
                    }
                }
                groups
            }
            None => first_appearance(rows.iter().map(|r| r.group.as_str())),
        };
        let nonpositive = rows.iter().filter(|r| r.response <= 0.0).count();
        Ok(Self {
            rows,
            groups,
            nonpositive,
            dropped: 0,
        })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    /// Second-cluster levels in order of first appearance.
    pub fn seconds(&self) -> Vec<String> {
        first_appearance(self.rows.iter().filter_map(|r| r.second.as_deref()))
    }

    /// Rows with response ≤ 0 still present in the table.
    pub fn nonpositive_count(&self) -> usize {
        self.nonpositive
    }

    /// Rows removed by [`drop_nonpositive`](Self::drop_nonpositive).
    pub fn dropped_count(&self) -> usize {
        self.dropped
    }

    pub fn has_covariate(&self) -> bool {
        self.rows.iter().all(|r| r.covariate.is_some())
    }

    pub fn has_second(&self) -> bool {
        self.rows.iter().all(|r| r.second.is_some())
    }

    /// Removes rows with response ≤ 0, keeping the group index.
    pub fn drop_nonpositive(mut self) -> Result<Self> {
        let before = self.rows.len();
        self.rows.retain(|r| r.response > 0.0);
        self.dropped += before - self.rows.len();
        self.nonpositive = 0;
        if self.rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(self)
    }

    /// Restricts to rows whose second-cluster label equals `level`.
    pub fn filter_second(&self, level: &str) -> Result<Self> {
        let rows: Vec<Observation> = self
            .rows
            .iter()
            .filter(|r| r.second.as_deref() == Some(level))
            .cloned()
            .collect();
        Self::with_groups(rows, Some(self.groups.clone()))
    }

    /// Averages rows sharing `(unit, group, second)` into a single row.
    pub fn aggregate_by_unit(&self) -> Result<Self> {
        let mut order: Vec<(String, String, Option<String>)> = Vec::new();
        let mut acc: HashMap<(String, String, Option<String>), (f64, f64, usize, bool)> = HashMap::new();
        for r in &self.rows {
            let key = (r.unit.clone(), r.group.clone(), r.second.clone());
            let e = acc.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                (0.0, 0.0, 0, true)
            });
            e.0 += r.response;
            match r.covariate {
                Some(x) => e.1 += x,
                None => e.3 = false,
            }
            e.2 += 1;
        }
        let rows = order
            .into_iter()
            .map(|key| {
                let (ys, xs, n, has_x) = acc[&key];
                Observation {
                    unit: key.0,
                    group: key.1,
                    second: key.2,
                    covariate: has_x.then(|| xs / n as f64),
                    response: ys / n as f64,
                }
            })
            .collect();
        Self::with_groups(rows, Some(self.groups.clone()))
    }

    /// Group responses (and covariates when present) in group-index order.
    pub fn grouped(&self, by: Grouping) -> Result<GroupedData> {
        let labels: Vec<String> = match by {
            Grouping::Group => self.groups.clone(),
            Grouping::Second => {
                if !self.has_second() {
                    return Err(Error::Schema("rows without a second-cluster label".into()));
                }
                self.seconds()
            }
            Grouping::Cell => {
                let cells = self.cells()?;
                let mut labels = Vec::new();
                for g in &cells.groups {
                    for l in &cells.levels {
                        labels.push(cell_label(g, l));
                    }
                }
                labels
            }
        };
        let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let with_x = self.has_covariate();
        let mut y = vec![Vec::new(); labels.len()];
        let mut x = vec![Vec::new(); labels.len()];
        for r in &self.rows {
            let key = match by {
                Grouping::Group => r.group.clone(),
                Grouping::Second => r.second.clone().unwrap_or_default(),
                Grouping::Cell => cell_label(&r.group, r.second.as_deref().unwrap_or_default()),
            };
            let j = index[key.as_str()];
            y[j].push(r.response);
            if with_x {
                x[j].push(r.covariate.unwrap_or_default());
            }
        }
        let empty: Vec<String> = labels
            .iter()
            .zip(&y)
            .filter(|(_, v)| v.is_empty())
            .map(|(l, _)| l.clone())
            .collect();
        if !empty.is_empty() {
            return Err(match by {
                Grouping::Cell => Error::EmptyCells(empty),
                _ => Error::EmptyGroups(empty),
            });
        }
        Ok(GroupedData {
            labels,
            y,
            x: with_x.then_some(x),
        })
    }

    /// Responses arranged by (group, second-cluster level) cells.
    pub fn cells(&self) -> Result<CellData> {
        if !self.has_second() {
            return Err(Error::Schema("rows without a second-cluster label".into()));
        }
        let levels = self.seconds();
        let gi: HashMap<&str, usize> = self.groups.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let li: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let mut y = vec![vec![Vec::new(); levels.len()]; self.groups.len()];
        for r in &self.rows {
            let k = li[r.second.as_deref().unwrap_or_default()];
            y[gi[r.group.as_str()]][k].push(r.response);
        }
        let mut empty = Vec::new();
        for (j, g) in self.groups.iter().enumerate() {
            for (k, l) in levels.iter().enumerate() {
                if y[j][k].is_empty() {
                    empty.push(cell_label(g, l));
                }
            }
        }
        if !empty.is_empty() {
            return Err(Error::EmptyCells(empty));
        }
        Ok(CellData {
            groups: self.groups.clone(),
            levels,
            y,
        })
    }

    /// SHA-256 over the canonical serialization of every row.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.rows {
            h.update(r.unit.as_bytes());
            h.update([0x1f]);
            h.update(r.group.as_bytes());
            h.update([0x1f]);
            if let Some(s) = &r.second {
                h.update(s.as_bytes());
            }
            h.update([0x1f]);
            if let Some(x) = r.covariate {
                h.update(x.to_bits().to_le_bytes());
            }
            h.update([0x1f]);
            h.update(r.response.to_bits().to_le_bytes());
            h.update([0x1e]);
        }
        hex::encode(h.finalize())
    }
}

pub fn cell_label(group: &str, level: &str) -> String {
    format!("{group}|{level}")
}

fn first_appearance<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for l in labels {
        if seen.insert(l) {
            out.push(l.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    Group,
    Second,
    Cell,
}

/// Raw responses (and covariates) split by group, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData {
    pub labels: Vec<String>,
    pub y: Vec<Vec<f64>>,
    pub x: Option<Vec<Vec<f64>>>,
}

impl GroupedData {
    pub fn new(labels: Vec<String>, y: Vec<Vec<f64>>) -> Self {
        Self { labels, y, x: None }
    }

    /// Groups labelled `g1, g2, …`.
    pub fn from_groups(y: Vec<Vec<f64>>) -> Self {
        let labels = (1..=y.len()).map(|j| format!("g{j}")).collect();
        Self::new(labels, y)
    }

    pub fn with_covariate(mut self, x: Vec<Vec<f64>>) -> Self {
        self.x = Some(x);
        self
    }

    pub fn n_groups(&self) -> usize {
        self.y.len()
    }

    pub fn n_total(&self) -> usize {
        self.y.iter().map(Vec::len).sum()
    }

    pub fn all_y(&self) -> Vec<f64> {
        self.y.iter().flatten().copied().collect()
    }

    pub fn all_x(&self) -> Option<Vec<f64>> {
        self.x.as_ref().map(|x| x.iter().flatten().copied().collect())
    }

    pub fn summaries(&self) -> GroupSummaries {
        GroupSummaries::from_grouped(self)
    }

    /// Covariates or a schema error naming the missing column.
    pub fn covariate(&self) -> Result<&Vec<Vec<f64>>> {
        self.x
            .as_ref()
            .ok_or_else(|| Error::Schema("model requires a covariate column".into()))
    }

    pub fn to_table(&self) -> Result<ObservationTable> {
        let mut rows = Vec::new();
        for (j, label) in self.labels.iter().enumerate() {
            for (i, &y) in self.y[j].iter().enumerate() {
                rows.push(Observation {
                    unit: format!("{label}-{}", i + 1),
                    group: label.clone(),
                    second: None,
                    covariate: self.x.as_ref().map(|x| x[j][i]),
                    response: y,
                });
            }
        }
        ObservationTable::with_groups(rows, Some(self.labels.clone()))
    }
}

/// Responses arranged as `y[j][k]`, for group `j` and level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    pub groups: Vec<String>,
    pub levels: Vec<String>,
    pub y: Vec<Vec<Vec<f64>>>,
}

impl CellData {
    pub fn n_total(&self) -> usize {
        self.y.iter().flatten().map(Vec::len).sum()
    }

    /// The observations of one level, grouped by region.
    pub fn level(&self, k: usize) -> GroupedData {
        GroupedData::new(self.groups.clone(), self.y.iter().map(|row| row[k].clone()).collect())
    }

    /// All observations grouped by region.
    pub fn by_group(&self) -> GroupedData {
        GroupedData::new(
            self.groups.clone(),
            self.y.iter().map(|row| row.iter().flatten().copied().collect()).collect(),
        )
    }
}

/// Summary statistics of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    /// Sample variance with divisor `n - 1`; zero for singleton groups.
    pub var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xbar: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledSummary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xbar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummaries {
    pub groups: Vec<GroupSummary>,
    pub pooled: PooledSummary,
}

impl GroupSummaries {
    pub fn from_grouped(data: &GroupedData) -> Self {
        let groups = data
            .labels
            .iter()
            .enumerate()
            .map(|(j, label)| {
                let y = &data.y[j];
                let (mean, var) = mean_var(y);
                GroupSummary {
                    label: label.clone(),
                    n: y.len(),
                    mean,
                    var,
                    xbar: data.x.as_ref().map(|x| mean_var(&x[j]).0),
                    degenerate: y.iter().all(|v| *v == y[0]),
                }
            })
            .collect();
        let all = data.all_y();
        let (mean, var) = mean_var(&all);
        let pooled = PooledSummary {
            n: all.len(),
            mean,
            var,
            xbar: data.all_x().map(|x| mean_var(&x).0),
        };
        Self { groups, pooled }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.n as f64).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.mean).collect()
    }

    pub fn vars(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.var).collect()
    }

    /// `Σ n_j Ȳ·j / Σ n_j`.
    pub fn weighted_grand_mean(&self) -> f64 {
        let n: f64 = self.n().iter().sum();
        self.groups.iter().map(|g| g.n as f64 * g.mean).sum::<f64>() / n
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mean and sample variance (divisor `n - 1`, zero when `n < 2`).
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() < 2 {
        0.0
    } else {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
}

fn parse_number(field: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    let v: f64 = trimmed.parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{trimmed}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("`{trimmed}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads a CSV file. Row numbers in errors count the header as row 1.
pub fn load_table(path: &Path, schema: &Schema, options: LoadOptions) -> Result<ObservationTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema, options)
}

pub fn read_table<R: std::io::Read>(reader: R, schema: &Schema, options: LoadOptions) -> Result<ObservationTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let unit = schema.unit.as_deref().map(|c| find_column(&headers, c)).transpose()?;
    let group = find_column(&headers, &schema.group)?;
    let second = schema.second.as_deref().map(|c| find_column(&headers, c)).transpose()?;
    let covariate = schema.covariate.as_deref().map(|c| find_column(&headers, c)).transpose()?;
    let response = find_column(&headers, &schema.response)?;
    let education = schema.education.as_deref().map(|c| find_column(&headers, c)).transpose()?;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let get = |c: usize| record.get(c).unwrap_or("");
        let edu = match education {
            Some(c) => {
                let cat: EducationCategory = get(c).parse().map_err(|_| Error::Parse {
                    row,
                    column: schema.education.clone().unwrap_or_default(),
                    message: format!("`{}` is not an education category", get(c)),
                })?;
                Some(cat.record())
            }
            None => None,
        };
        let group_label = get(group).trim().to_string();
        if group_label.is_empty() {
            return Err(Error::Parse {
                row,
                column: schema.group.clone(),
                message: "missing group label".into(),
            });
        }
        let covariate_value = match covariate {
            Some(c) => Some(parse_number(get(c), row, schema.covariate.as_deref().unwrap_or_default())?),
            None => edu.map(|e| e.years as f64),
        };
        let second_value = match second {
            Some(c) => Some(get(c).trim().to_string()),
            None => edu.map(|e| e.level.to_string()),
        };
        rows.push(Observation {
            unit: unit.map(|c| get(c).trim().to_string()).unwrap_or_else(|| (row - 1).to_string()),
            group: group_label,
            second: second_value,
            covariate: covariate_value,
            response: parse_number(get(response), row, &schema.response)?,
        });
    }
    let table = ObservationTable::with_groups(rows, schema.groups.clone())?;
    if options.drop_nonpositive {
        table.drop_nonpositive()
    } else {
        Ok(table)
    }
}

/// Writes a table with the [`Schema::canonical`] columns.
pub fn save_table(table: &ObservationTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(table, file)
}

pub fn write_table<W: std::io::Write>(table: &ObservationTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit", "group", "second", "covariate", "response"])?;
    for r in table.rows() {
        w.write_record([
            r.unit.clone(),
            r.group.clone(),
            r.second.clone().unwrap_or_default(),
            r.covariate.map(|x| x.to_string()).unwrap_or_default(),
            r.response.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Reads a table written by [`save_table`]; empty optional columns stay empty.
pub fn load_canonical(path: &Path) -> Result<ObservationTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        rows.push(Observation {
            unit: rec.get(0).unwrap_or("").to_string(),
            group: rec.get(1).unwrap_or("").to_string(),
            second: opt(rec.get(2).unwrap_or("")),
            covariate: match rec.get(3).unwrap_or("") {
                "" => None,
                s => Some(parse_number(s, row, "covariate")?),
            },
            response: parse_number(rec.get(4).unwrap_or(""), row, "response")?,
        });
    }
    ObservationTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        let mut s = Schema::new("region", "income");
        s.unit = Some("province".into());
        s
    }

    #[test]
    fn three_row_csv() {
        let csv = "province,region,income\na,north,10\nb,south,20\nc,north,30\n";
        let t = read_table(csv.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.groups(), &["north".to_string(), "south".to_string()]);
    }

    #[test]
    fn non_numeric_income_names_row_and_column() {
        let csv = "province,region,income\na,north,10\nb,south,abc\n";
        match read_table(csv.as_bytes(), &schema(), LoadOptions::default()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "income");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_response_is_rejected() {
        let csv = "province,region,income\na,north,\n";
        assert!(matches!(
            read_table(csv.as_bytes(), &schema(), LoadOptions::default()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn education_column_populates_years_and_level() {
        let csv = "province,region,edu,income\na,north,elementary,10\nb,north,bachelor,30\n";
        let mut s = schema();
        s.education = Some("edu".into());
        let t = read_table(csv.as_bytes(), &s, LoadOptions::default()).unwrap();
        assert_eq!(t.rows()[0].covariate, Some(6.0));
        assert_eq!(t.rows()[0].second.as_deref(), Some("low"));
        assert_eq!(t.rows()[1].covariate, Some(16.0));
        assert_eq!(t.rows()[1].second.as_deref(), Some("high"));
    }

    #[test]
    fn unknown_education_category_is_a_parse_error() {
        let csv = "province,region,edu,income\na,north,phd,10\n";
        let mut s = schema();
        s.education = Some("edu".into());
        assert!(matches!(
            read_table(csv.as_bytes(), &s, LoadOptions::default()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn unknown_group_label_is_schema_error() {
        let csv = "province,region,income\na,west,10\n";
        let mut s = schema();
        s.groups = Some(vec!["north".into(), "south".into()]);
        assert!(matches!(
            read_table(csv.as_bytes(), &s, LoadOptions::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn header_only_is_empty_input() {
        let csv = "province,region,income\n";
        assert!(matches!(
            read_table(csv.as_bytes(), &schema(), LoadOptions::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn nonpositive_rows_counted_or_dropped() {
        let csv = "province,region,income\na,north,0\nb,north,5\nc,south,-1\nd,south,4\n";
        let t = read_table(csv.as_bytes(), &schema(), LoadOptions::default()).unwrap();
        assert_eq!(t.nonpositive_count(), 2);
        assert_eq!(t.len(), 4);
        let d = read_table(csv.as_bytes(), &schema(), LoadOptions { drop_nonpositive: true }).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dropped_count(), 2);
    }

    #[test]
    fn dropping_a_whole_group_reports_it_empty() {
        let csv = "province,region,income\na,north,5\nb,south,-1\n";
        let t = read_table(csv.as_bytes(), &schema(), LoadOptions { drop_nonpositive: true }).unwrap();
        match t.grouped(Grouping::Group) {
            Err(Error::EmptyGroups(g)) => assert_eq!(g, vec!["south".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_hand_arithmetic() {
        let s = GroupedData::from_groups(vec![vec![2.0, 4.0]]).summaries();
        assert_eq!(s.groups[0].n, 2);
        assert_eq!(s.groups[0].mean, 3.0);
        assert_eq!(s.groups[0].var, 2.0);
    }

    #[test]
    fn constant_group_is_flagged_degenerate() {
        let s = GroupedData::from_groups(vec![vec![1.0, 1.0, 1.0]]).summaries();
        assert_eq!(s.groups[0].var, 0.0);
        assert!(s.groups[0].degenerate);
    }

    #[test]
    fn symmetric_grand_mean() {
        let s = GroupedData::from_groups(vec![vec![0.0], vec![2.0]]).summaries();
        assert_eq!(s.weighted_grand_mean(), 1.0);
        assert_eq!(s.pooled.n, 2);
    }

    #[test]
    fn aggregate_averages_unit_rows() {
        let rows = vec![
            Observation { unit: "p1".into(), group: "a".into(), second: None, covariate: Some(2.0), response: 10.0 },
            Observation { unit: "p1".into(), group: "a".into(), second: None, covariate: Some(4.0), response: 20.0 },
            Observation { unit: "p2".into(), group: "b".into(), second: None, covariate: Some(1.0), response: 7.0 },
        ];
        let t = ObservationTable::new(rows).unwrap().aggregate_by_unit().unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[0].response, 15.0);
        assert_eq!(t.rows()[0].covariate, Some(3.0));
    }

    #[test]
    fn cells_report_missing_combinations() {
        let mk = |g: &str, s: &str| Observation {
            unit: "u".into(),
            group: g.into(),
            second: Some(s.into()),
            covariate: None,
            response: 1.0,
        };
        let t = ObservationTable::new(vec![mk("a", "low"), mk("a", "high"), mk("b", "low")]).unwrap();
        match t.cells() {
            Err(Error::EmptyCells(c)) => assert_eq!(c, vec!["b|high".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let rows = (0..50)
            .map(|i| Observation {
                unit: format!("u{i}"),
                group: ["α", "b", "c"][i % 3].into(),
                second: Some(["low", "high"][i % 2].into()),
                covariate: Some(i as f64 / 7.0),
                response: (i as f64).sin() * 1e3 + 1.0 / 3.0,
            })
            .collect();
        let t = ObservationTable::new(rows).unwrap();
        let mut buf = Vec::new();
        write_table(&t, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, &buf).unwrap();
        let back = load_canonical(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.digest(), t.digest());
        let a = t.grouped(Grouping::Group).unwrap().summaries();
        let b = back.grouped(Grouping::Group).unwrap().summaries();
        assert_eq!(a, b);
    }
}
