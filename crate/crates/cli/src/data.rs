//! CSV ingestion and export.

use std::io::{Read, Write};
use std::path::Path;

use misclass_core::{Dataset, Error as EngineError};

use crate::config::ModelConfig;
use crate::error::{CliError, Result};

fn parse_error(row: usize, column: &str, message: impl Into<String>) -> CliError {
    CliError::Engine(EngineError::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    })
}

pub fn load_csv(path: &Path, config: &ModelConfig) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(file, config)
}

/// Reads the columns `config` refers to; others are ignored.
///
/// Rows are numbered from 1 after the header in error messages. An empty
/// field is a missing value in the error-prone column and an error anywhere
/// else.
pub fn read_dataset<R: Read>(input: R, config: &ModelConfig) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let wanted = config.referenced_columns();
    let mut positions = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let position = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Engine(EngineError::MissingColumn(name.clone())))?;
        positions.push(position);
    }

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut mc: Vec<Option<u8>> = Vec::new();
    let mc_name = config.mc_covariate.as_deref();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let row = index + 1;
        for (k, (name, &position)) in wanted.iter().zip(&positions).enumerate() {
            let field = record.get(position).unwrap_or("");
            if Some(name.as_str()) == mc_name {
                mc.push(match field {
                    "" => None,
                    "0" | "0.0" => Some(0),
                    "1" | "1.0" => Some(1),
                    other => return Err(parse_error(row, name, format!("expected 0, 1 or empty, found {other:?}"))),
                });
                continue;
            }
            if field.is_empty() {
                return Err(parse_error(row, name, "empty field"));
            }
            let value: f64 = field
                .parse()
                .map_err(|_| parse_error(row, name, format!("{field:?} is not a number")))?;
            if !value.is_finite() {
                return Err(parse_error(row, name, "value is not finite"));
            }
            values[k].push(value);
        }
    }

    let mut columns = wanted.into_iter().zip(values);
    let (_, response) = columns.next().expect("the response is always referenced");
    let mut dataset = match mc_name {
        Some(_) => Dataset::new(response, mc)?,
        None => Dataset::response_only(response)?,
    };
    for (name, column) in columns {
        if Some(name.as_str()) == mc_name {
            continue;
        }
        if Some(&name) == config.truth_column.as_ref() {
            let truth = column
                .iter()
                .enumerate()
                .map(|(i, &v)| match v {
                    0.0 => Ok(0),
                    1.0 => Ok(1),
                    _ => Err(parse_error(i + 1, &name, "truth values must be 0 or 1")),
                })
                .collect::<Result<Vec<u8>>>()?;
            dataset = dataset.with_truth(truth)?;
            if !config.covariates.contains(&name) {
                continue;
            }
        }
        dataset = dataset.with_column(name, column)?;
    }
    Ok(dataset)
}

/// Writes `y`, the error-prone `w` (empty when missing), every named column
/// and, when present, the true covariate as `x_true`.
pub fn write_dataset<W: Write>(dataset: &Dataset, output: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    let names: Vec<String> = dataset.column_names().map(str::to_string).collect();
    let has_mc = dataset.mc_observed().iter().any(Option::is_some);
    let mut header = vec!["y".to_string()];
    if has_mc {
        header.push("w".into());
    }
    header.extend(names.iter().cloned());
    if dataset.truth().is_some() {
        header.push("x_true".into());
    }
    writer.write_record(&header)?;
    let columns: Vec<&[f64]> = names.iter().map(|n| dataset.column(n)).collect::<std::result::Result<_, _>>()?;
    for i in 0..dataset.n() {
        let mut record = vec![dataset.response()[i].to_string()];
        if has_mc {
            record.push(dataset.mc_observed()[i].map(|w| w.to_string()).unwrap_or_default());
        }
        record.extend(columns.iter().map(|c| c[i].to_string()));
        if let Some(truth) = dataset.truth() {
            record.push(truth[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| CliError::Csv(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ModelConfig {
        ModelConfig::from_json(&format!(
            r#"{{"family": "gaussian", "response": "y", "covariates": ["z"], "mc_covariate": "w",
                "mc_model": {{"variant": "uniform", "entries": [[0.9, 0.1], [0.2, 0.8]]}},
                "exposure": {{"probability": 0.4}}, "sampler": {{"iterations": 10, "seed": 1}}{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn non_numeric_field_reports_row_and_column() {
        let err = read_dataset("y,w,z\n1,0,0.5\n2,1,abc\n".as_bytes(), &config("")).unwrap_err();
        match err {
            CliError::Engine(EngineError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "z")),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn truth_column_is_kept_apart() {
        let data = read_dataset(
            "y,w,z,x\n1,0,0.5,1\n2,1,0.1,0\n".as_bytes(),
            &config(r#", "truth_column": "x""#),
        )
        .unwrap();
        assert_eq!(data.truth(), Some(&[1u8, 0][..]));
        assert!(data.column("x").is_err());
    }

    #[test]
    fn written_data_reads_back() {
        let data = read_dataset("y,w,z\n1,0,0.5\n2,,0.25\n".as_bytes(), &config("")).unwrap();
        let mut buffer = Vec::new();
        write_dataset(&data, &mut buffer).unwrap();
        assert_eq!(String::from_utf8(buffer).unwrap(), "y,w,z\n1,0,0.5\n2,,0.25\n");
    }
}
