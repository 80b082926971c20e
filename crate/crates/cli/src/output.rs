use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use crate::CliResult;

/// Buffered writer for `path`, or stdout when absent.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Print a command summary. It goes to stderr when stdout already carries
/// the command's data.
pub fn summary(value: &Value, json: bool, data_on_stdout: bool) -> CliResult<()> {
    let text = if json { serde_json::to_string(value).expect("summary serializes") } else { render(value) };
    if data_on_stdout {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
    Ok(())
}

fn render(value: &Value) -> String {
    let mut lines = Vec::new();
    flatten("", value, &mut lines);
    lines.join("\n")
}

fn flatten(prefix: &str, value: &Value, lines: &mut Vec<String>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, lines);
            }
        }
        other => lines.push(format!("{prefix}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_keys_are_dotted() {
        let v = json!({"n": 3, "params": {"eps": 0.5}, "flagged": [1, 2]});
        assert_eq!(render(&v), "flagged: [1,2]\nn: 3\nparams.eps: 0.5");
    }
}
