//! Trace CSV: `arrival_ms,input_tokens,output_tokens[,adapter_id]`.

use std::path::Path;

use lorasim_core::workload::TraceRow;
use serde::Deserialize;

use crate::CliError;

#[derive(Deserialize)]
struct Row {
    arrival_ms: u64,
    input_tokens: u32,
    output_tokens: u32,
    #[serde(default)]
    adapter_id: Option<u32>,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open trace {}: {e}", path.display())))?;
    parse_trace(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_trace<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>, String> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let expected = ["arrival_ms", "input_tokens", "output_tokens"];
    if headers.len() < 3
        || headers.iter().take(3).ne(expected)
        || (headers.len() == 4 && &headers[3] != "adapter_id")
        || headers.len() > 4
    {
        return Err(format!(
            "bad header {:?}; expected arrival_ms,input_tokens,output_tokens[,adapter_id]",
            headers.iter().collect::<Vec<_>>()
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let r = rec.map_err(|e| format!("line {}: {e}", i + 2))?;
        rows.push(TraceRow {
            arrival_ms: r.arrival_ms,
            input_tokens: r.input_tokens,
            output_tokens: r.output_tokens,
            adapter: r.adapter_id,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows() {
        let rows = parse_trace("arrival_ms,input_tokens,output_tokens\n0,10,5\n3,20,6\n9,30,7\n".as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1], TraceRow { arrival_ms: 3, input_tokens: 20, output_tokens: 6, adapter: None });
    }

    #[test]
    fn optional_adapter_column() {
        let rows = parse_trace("arrival_ms,input_tokens,output_tokens,adapter_id\n5,1,1,4\n".as_bytes()).unwrap();
        assert_eq!(rows[0].adapter, Some(4));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_trace("t,in,out\n0,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn non_numeric_field_names_its_line() {
        let err = parse_trace("arrival_ms,input_tokens,output_tokens\n0,1,1\nx,1,1\n".as_bytes()).unwrap_err();
        assert!(err.starts_with("line 3"), "{err}");
    }
}
