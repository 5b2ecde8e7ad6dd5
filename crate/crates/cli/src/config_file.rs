//! `key = value` run files. Keys are long flag names (dashes or
//! underscores); values from the file are spliced in ahead of the command
//! line arguments, so explicit flags win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::error::CliError;

/// Global options that may appear before the subcommand and take a value.
const GLOBAL_WITH_VALUE: [&str; 2] = ["--config", "--jobs"];

pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            CliError::Input(format!("{}:{}: expected `key = value`", origin.display(), idx + 1))
        })?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Input(format!("{}:{}: empty key", origin.display(), idx + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if GLOBAL_WITH_VALUE.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Returns `args` with the settings of the `--config` file (if any)
/// inserted right after the subcommand name, skipping keys that are also
/// given as flags.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config file {}: {e}", path.display())))?;
    let settings = parse(&text, path)?;
    let Some(at) = subcommand_index(&args) else {
        return Ok(args);
    };
    let explicit: Vec<String> = args[at + 1..]
        .iter()
        .filter_map(|a| a.to_str()?.strip_prefix("--").map(|k| k.split('=').next().unwrap_or(k).to_string()))
        .collect();
    let mut out: Vec<OsString> = args[..=at].to_vec();
    for (key, value) in settings {
        if explicit.contains(&key) {
            continue;
        }
        match value.as_str() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => out.push(format!("--{key}={value}").into()),
        }
    }
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_pairs_and_comments() {
        let got = parse("groups = 3\n# note\n\nn_actors=10 # trailing\n", Path::new("x")).unwrap();
        assert_eq!(got, vec![("groups".into(), "3".into()), ("n-actors".into(), "10".into())]);
        assert!(parse("nonsense", Path::new("x")).is_err());
    }

    #[test]
    fn finds_subcommand_after_globals() {
        assert_eq!(subcommand_index(&os(&["m", "--jobs", "2", "--config", "c", "fit", "--groups", "3"])), Some(5));
        assert_eq!(subcommand_index(&os(&["m", "-v", "cv"])), Some(2));
        assert_eq!(config_path(&os(&["m", "fit", "--config=a.cfg"])), Some("a.cfg".into()));
    }
}
