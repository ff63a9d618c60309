use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::Cli;

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, found `{raw}`", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Result<Option<OsString>> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned().map(Some).context("--config needs a file path");
        }
        if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            return Ok(Some(p.into()));
        }
    }
    Ok(None)
}

/// Insert config-file entries as flags right after the subcommand, so flags
/// given on the command line (which come later) override them.
///
/// Keys that belong to another subcommand are skipped; keys no subcommand
/// accepts are rejected.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    let entries = parse_config(&text).with_context(|| format!("in config file {}", path.display()))?;

    let mut cmd = Cli::command();
    cmd.build();
    let Some(pos) = args.iter().position(|a| cmd.get_subcommands().any(|s| a == s.get_name())) else {
        return Ok(args);
    };
    let sub = cmd.find_subcommand(args[pos].to_str().unwrap_or_default()).expect("matched above");
    let known: BTreeSet<&str> = sub.get_arguments().filter_map(|a| a.get_long()).collect();
    let all: BTreeSet<&str> =
        cmd.get_subcommands().flat_map(|s| s.get_arguments()).filter_map(|a| a.get_long()).collect();
    let flags: BTreeSet<&str> = sub
        .get_arguments()
        .filter(|a| !a.get_action().takes_values())
        .filter_map(|a| a.get_long())
        .collect();

    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            bail!("config file {} may not name another config file", path.display());
        }
        if !known.contains(key.as_str()) {
            if all.contains(key.as_str()) {
                continue;
            }
            bail!("config file {}: unknown key `{key}`", path.display());
        }
        if flags.contains(key.as_str()) {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                other => bail!("config file {}: `{key}` must be true or false, got `{other}`", path.display()),
            }
        } else {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
