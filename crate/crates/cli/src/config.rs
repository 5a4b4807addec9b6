//! Flat `key = value` files whose keys are long flag names.
//!
//! ```text
//! # training run
//! learning-rate = 5
//! max_epochs = 20
//! schema = subtask2
//! ```
//!
//! Each entry becomes `--key=value` in front of the command-line flags, so
//! a flag given explicitly overrides the file.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

pub fn parse_config(text: &str) -> Result<Vec<String>, String> {
    let mut args = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", idx + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(format!("line {}: invalid key '{key}'", idx + 1));
        }
        if key == "config" {
            return Err(format!(
                "line {}: config files cannot include other config files",
                idx + 1
            ));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        args.push(format!("--{key}={value}"));
    }
    Ok(args)
}

/// Splices the entries of the subcommand's `--config` file (last one wins)
/// in right after the subcommand name.
pub fn expand_config_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    if args
        .get(1)
        .is_none_or(|a| a.to_string_lossy().starts_with('-'))
    {
        return Ok(args);
    }
    let mut path: Option<OsString> = None;
    let mut iter = args.iter().skip(2);
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--" {
            break;
        }
        if text == "--config" {
            path = iter.next().cloned();
        } else if let Some(p) = text.strip_prefix("--config=") {
            path = Some(p.into());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let extra =
        parse_config(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))?;
    let mut out = Vec::with_capacity(args.len() + extra.len());
    out.extend(args[..2].iter().cloned());
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_values() {
        let text = "# comment\nlearning_rate = 5\n\n--seed=7\nlabels = \"a,b\"\n";
        assert_eq!(
            parse_config(text).unwrap(),
            vec!["--learning-rate=5", "--seed=7", "--labels=a,b"]
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_config("seed 7").unwrap_err().starts_with("line 1"));
        assert!(parse_config("\nbad key = 1")
            .unwrap_err()
            .starts_with("line 2"));
        assert!(parse_config("config = x").is_err());
    }
}
