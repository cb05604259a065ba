//! Columnar samples of named variables.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Codes index into `labels`.
    Categorical {
        labels: Vec<String>,
        codes: Vec<u32>,
    },
    Real(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical { codes, .. } => codes.len(),
            Column::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a categorical column with labels sorted lexicographically.
    pub fn categorical_from_strings<S: AsRef<str>>(values: &[S]) -> Column {
        let labels: Vec<String> = values.iter().map(|v| v.as_ref().to_string()).collect::<BTreeSet<_>>().into_iter().collect();
        let codes = values.iter().map(|v| labels.binary_search_by(|l| l.as_str().cmp(v.as_ref())).unwrap() as u32).collect();
        Column::Categorical { labels, codes }
    }

    fn render(&self, row: usize) -> String {
        match self {
            Column::Categorical { labels, codes } => labels[codes[row] as usize].clone(),
            Column::Real(v) => format_real(v[row]),
        }
    }
}

/// Shortest representation that parses back to the same value.
pub fn format_real(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push(&mut self, name: &str, column: Column) -> Result<()> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Duplicate(format!("column `{name}`")));
        }
        if !self.columns.is_empty() && column.len() != self.len() {
            return Err(Error::Data(format!("column `{name}` has {} rows, expected {}", column.len(), self.len())));
        }
        if let Column::Categorical { labels, codes } = &column {
            if codes.iter().any(|&c| c as usize >= labels.len()) {
                return Err(Error::Data(format!("column `{name}` has codes outside its label set")));
            }
        }
        self.names.push(name.to_string());
        self.columns.push(column);
        Ok(())
    }

    pub fn push_real(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.push(name, Column::Real(values))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names.iter().position(|n| n == name).map(|i| &self.columns[i]).ok_or_else(|| Error::Data(format!("no column `{name}`")))
    }

    pub fn real(&self, name: &str) -> Result<&[f64]> {
        match self.column(name)? {
            Column::Real(v) => Ok(v),
            Column::Categorical { .. } => Err(Error::Data(format!("column `{name}` is categorical"))),
        }
    }

    /// Codes and labels of a categorical column.
    pub fn categorical(&self, name: &str) -> Result<(&[u32], &[String])> {
        match self.column(name)? {
            Column::Categorical { labels, codes } => Ok((codes, labels)),
            Column::Real(_) => Err(Error::Data(format!("column `{name}` is not categorical"))),
        }
    }

    /// Reads a column as 0/1. Accepts real columns holding only 0 and 1, and
    /// categorical columns whose labels are drawn from {0, 1, false, true}.
    pub fn binary(&self, name: &str) -> Result<Vec<bool>> {
        let bad = || Error::Data(format!("column `{name}` is not binary"));
        match self.column(name)? {
            Column::Real(v) => v
                .iter()
                .map(|&x| {
                    if x == 0.0 {
                        Ok(false)
                    } else if x == 1.0 {
                        Ok(true)
                    } else {
                        Err(bad())
                    }
                })
                .collect(),
            Column::Categorical { labels, codes } => {
                let map: Vec<bool> = labels
                    .iter()
                    .map(|l| match l.as_str() {
                        "0" | "false" => Ok(false),
                        "1" | "true" => Ok(true),
                        _ => Err(bad()),
                    })
                    .collect::<Result<_>>()?;
                Ok(codes.iter().map(|&c| map[c as usize]).collect())
            }
        }
    }

    /// Parses CSV with a header row. Columns named in `categorical` keep
    /// their string labels; every other column must parse as a real.
    pub fn from_csv<R: Read>(reader: R, categorical: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for c in categorical {
            if !headers.contains(c) {
                return Err(Error::Data(format!("categorical column `{c}` not in header")));
            }
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record?;
            for (i, field) in record.iter().enumerate() {
                raw[i].push(field.to_string());
            }
        }
        let mut data = Dataset::new();
        for (name, values) in headers.iter().zip(raw) {
            let column = if categorical.contains(name) {
                Column::categorical_from_strings(&values)
            } else {
                let parsed = values
                    .iter()
                    .enumerate()
                    .map(|(row, v)| {
                        v.parse::<f64>().map_err(|_| Error::Data(format!("column `{name}` row {}: `{v}` is not a number", row + 1)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Column::Real(parsed)
            };
            data.push(name, column)?;
        }
        Ok(data)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in 0..self.len() {
            w.write_record(self.columns.iter().map(|c| c.render(row)))?;
        }
        w.flush()?;
        Ok(())
    }
}
