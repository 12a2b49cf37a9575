//! Flat `key = value` config files. Keys are long flag names without the
//! leading dashes; lists are comma-separated; boolean flags take `true` or
//! `false`. Values from the file are inserted after the subcommand unless
//! the same flag is given on the command line.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, ArgMatches, CommandFactory};

use crate::Cli;

const SKIPPED: [&str; 4] = ["config", "print_config", "help", "version"];

pub fn parse_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected `key = value`", path.display(), i + 1);
        };
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
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

fn is_flag(sub: &str, key: &str) -> Result<bool> {
    let cmd = Cli::command();
    let sc = cmd
        .find_subcommand(sub)
        .with_context(|| format!("unknown subcommand `{sub}`"))?;
    let arg = sc
        .get_arguments()
        .find(|a| a.get_long() == Some(key))
        .with_context(|| format!("unknown config key `{key}` for `{sub}`"))?;
    Ok(matches!(arg.get_action(), ArgAction::SetTrue))
}

/// Splices the settings of a `--config` file into `args`.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let Some(sub) = args.get(1).map(|s| s.to_string_lossy().into_owned()) else {
        return Ok(args);
    };
    let given: Vec<String> = args[2..]
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut inserted = Vec::new();
    for (key, value) in parse_file(Path::new(&path))? {
        if given.contains(&key) || SKIPPED.contains(&key.replace('-', "_").as_str()) {
            continue;
        }
        if is_flag(&sub, &key)? {
            match value.as_str() {
                "true" => inserted.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => bail!("config key `{key}` takes true or false, got `{other}`"),
            }
        } else if !value.is_empty() {
            inserted.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut out = args[..2].to_vec();
    out.extend(inserted);
    out.extend_from_slice(&args[2..]);
    Ok(out)
}

/// Every argument of the subcommand in config-file form, defaults included.
/// Unset optional values are written as comments.
pub fn render(sub: &str, matches: &ArgMatches) -> String {
    let cmd = Cli::command();
    let sc = cmd.find_subcommand(sub).expect("known subcommand");
    let mut out = String::new();
    for arg in sc.get_arguments() {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if SKIPPED.contains(&id) {
            continue;
        }
        let values: Vec<String> = matches
            .get_raw(id)
            .map(|vals| vals.map(|v| v.to_string_lossy().into_owned()).collect())
            .unwrap_or_default();
        if values.is_empty() {
            out.push_str(&format!("# {long} =\n"));
        } else {
            out.push_str(&format!("{long} = {}\n", values.join(",")));
        }
    }
    out
}
