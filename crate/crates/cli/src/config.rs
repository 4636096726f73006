//! Flat `key = value` config files merged into the argument list.
//!
//! Entries become `--key value` tokens placed right after the subcommand, so
//! anything given on the command line later overrides them.

use std::fs;
use std::path::Path;

use clap::ArgAction;

use crate::error::CliError;

/// Parsed entries in file order.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value, got {raw:?}", k + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", k + 1)));
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

/// Removes `--config FILE` / `--config=FILE` from `argv`, returning the path.
fn take_config_flag(argv: &mut Vec<String>) -> Result<Option<String>, CliError> {
    let mut path = None;
    let mut k = 1;
    while k < argv.len() {
        if argv[k] == "--" {
            break;
        }
        if argv[k] == "--config" {
            if k + 1 >= argv.len() {
                return Err(CliError::Usage("--config needs a file".into()));
            }
            path = Some(argv.remove(k + 1));
            argv.remove(k);
        } else if let Some(p) = argv[k].strip_prefix("--config=") {
            path = Some(p.to_string());
            argv.remove(k);
        } else {
            k += 1;
        }
    }
    Ok(path)
}

/// Expands a `--config` file into flags for the chosen subcommand. Unknown
/// keys and malformed booleans are usage errors. Returns `argv` unchanged
/// when no config is given.
pub fn merge_config(mut argv: Vec<String>, command: &clap::Command) -> Result<Vec<String>, CliError> {
    let Some(path) = take_config_flag(&mut argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
    let entries = parse_config(&text)?;
    let Some(pos) = argv.iter().skip(1).position(|a| command.find_subcommand(a).is_some()).map(|p| p + 1) else {
        // Let clap report the missing subcommand.
        return Ok(argv);
    };
    let sub = command.find_subcommand(&argv[pos]).expect("found above");
    let mut tokens = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?} for `{}`", sub.get_name())))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => tokens.push(format!("--{key}")),
                "false" => {}
                _ => return Err(CliError::Usage(format!("config key {key:?} takes true or false, got {value:?}"))),
            }
        } else {
            tokens.push(format!("--{key}"));
            tokens.push(value);
        }
    }
    argv.splice(pos + 1..pos + 1, tokens);
    Ok(argv)
}
