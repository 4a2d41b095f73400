//! CSV ingestion and export of [`DatasetFrame`]s.
//!
//! Comma separated, header row required, `.` decimal point. A column is
//! numeric when every field parses as a finite number, categorical
//! otherwise or when listed in `categorical`. Empty fields are rejected.

use std::io::{Read, Write};

use crate::design::{Column, DatasetFrame, Factor};
use crate::error::{Error, Result};

pub fn read_csv<R: Read>(
    reader: R,
    response: &str,
    categorical: &[String],
) -> Result<DatasetFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() {
        return Err(Error::InvalidFrame("CSV has no header".into()));
    }
    for name in categorical {
        if !headers.contains(name) {
            return Err(Error::ColumnNotFound(name.clone()));
        }
    }
    if !headers.iter().any(|h| h == response) {
        return Err(Error::ColumnNotFound(response.to_owned()));
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::MissingValue {
                    column: headers[j].clone(),
                    row,
                });
            }
            raw[j].push(field.to_owned());
        }
    }

    let columns = headers
        .into_iter()
        .zip(raw)
        .map(|(name, values)| {
            let parsed: Option<Vec<f64>> = if categorical.contains(&name) {
                None
            } else {
                values
                    .iter()
                    .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                    .collect()
            };
            let column = match parsed {
                Some(v) => Column::Numeric(v),
                None if name == response => {
                    return Err(Error::InvalidResponse(
                        name,
                        "response must be numeric and finite".into(),
                    ))
                }
                None => Column::Categorical(Factor::from_labels(&values)?),
            };
            Ok((name, column))
        })
        .collect::<Result<Vec<_>>>()?;

    DatasetFrame::new(columns, response)
}

pub fn write_csv<W: Write>(frame: &DatasetFrame, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let cols: Vec<(&str, &Column)> = frame.columns().collect();
    wtr.write_record(cols.iter().map(|(name, _)| *name))?;
    for row in 0..frame.n() {
        wtr.write_record(cols.iter().map(|(_, col)| match col {
            Column::Numeric(v) => v[row].to_string(),
            Column::Categorical(f) => f.label(row).to_owned(),
        }))?;
    }
    wtr.flush()?;
    Ok(())
}
