//! Response files: CSV rows `item_id,a,b,u`, optional header, `#` comments.

use std::path::Path;

use placement_core::irt::{ItemParameters, Response};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRow {
    pub item_id: String,
    pub response: Response,
}

pub fn read_responses(path: &Path) -> Result<Vec<ResponseRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_responses(&text).map_err(|e| match e {
        CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_responses(text: &str) -> Result<Vec<ResponseRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Usage(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |msg: String| CliError::Usage(format!("line {line}: {msg}"));
        if k == 0 && record.get(3).is_some_and(|u| u.eq_ignore_ascii_case("u")) {
            continue;
        }
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields (item_id,a,b,u), found {}", record.len())));
        }
        let number = |i: usize, name: &str| -> Result<f64, CliError> {
            record[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("{name} '{}' is not a number", &record[i])))
        };
        let (a, b) = (number(1, "a")?, number(2, "b")?);
        let u: u8 = record[3]
            .parse()
            .map_err(|_| bad(format!("u '{}' must be 0 or 1", &record[3])))?;
        let item = ItemParameters::new(a, b).map_err(|e| bad(e.to_string()))?;
        let response = Response::scored(item, u).map_err(|e| bad(e.to_string()))?;
        rows.push(ResponseRow {
            item_id: record[0].to_string(),
            response,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Usage("the response file holds no responses".into()));
    }
    Ok(rows)
}
