//! Flat `key = value` configuration files.
//!
//! Each key names a long flag of the chosen subcommand. Values are spliced
//! into the argument list ahead of the command-line flags, so flags given on
//! the command line take precedence.

use std::fs;
use std::path::Path;

use clap::{ArgAction, Command};

use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        let value = v.trim().trim_matches('"').to_string();
        out.push((key, value));
    }
    Ok(out)
}

/// Position of the subcommand name in `argv`, skipping global options.
fn subcommand_index(cmd: &Command, argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--config" {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        return cmd.find_subcommand(a).map(|_| i);
    }
    None
}

/// Removes `--config PATH` (or `--config=PATH`) from argv and returns the path.
fn take_config_flag(argv: &mut Vec<String>) -> Result<Option<String>, CliError> {
    let mut i = 1;
    while i < argv.len() {
        if argv[i] == "--config" {
            if i + 1 >= argv.len() {
                return Err(CliError::Usage("--config requires a path".into()));
            }
            let path = argv.remove(i + 1);
            argv.remove(i);
            return Ok(Some(path));
        }
        if let Some(p) = argv[i].strip_prefix("--config=") {
            let p = p.to_string();
            argv.remove(i);
            return Ok(Some(p));
        }
        if !argv[i].starts_with('-') {
            break;
        }
        i += 1;
    }
    Ok(None)
}

/// Returns argv with config-file values inserted right after the subcommand.
pub fn expand_config(cmd: &Command, argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut argv = argv;
    let Some(path) = take_config_flag(&mut argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| CliError::Usage(format!("config {path}: {e}")))?;
    let entries = parse_config(&text)?;
    let Some(idx) = subcommand_index(cmd, &argv) else {
        return Err(CliError::Usage("--config needs a subcommand".into()));
    };
    let sub = cmd.find_subcommand(&argv[idx]).expect("subcommand exists");
    let mut extra = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("config key '{key}' is not a flag of '{}'", sub.get_name())))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => extra.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                _ => return Err(CliError::Usage(format!("config key '{key}' expects true or false"))),
            }
        } else {
            extra.push(format!("--{key}={value}"));
        }
    }
    argv.splice(idx + 1..idx + 1, extra);
    Ok(argv)
}
