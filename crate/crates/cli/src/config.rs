//! Config-file support: `--config FILE` loads `key=value` lines naming any
//! long flag of the invoked subcommand. The pairs are spliced into the
//! argument list right after the subcommand token, so flags typed on the
//! command line come later and win.

use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;

use crate::{Cli, Failure};

pub fn expand(raw: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let command = Cli::command();
    let names: Vec<String> = command
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();

    // Locate the subcommand and the last --config occurrence.
    let mut sub_pos = None;
    let mut config_path: Option<OsString> = None;
    let mut skip_value = false;
    for (i, arg) in raw.iter().enumerate().skip(1) {
        if skip_value {
            skip_value = false;
            continue;
        }
        let text = arg.to_string_lossy();
        if text == "--config" {
            if let Some(v) = raw.get(i + 1) {
                config_path = Some(v.clone());
            }
            skip_value = true;
            continue;
        }
        if let Some(v) = text.strip_prefix("--config=") {
            config_path = Some(v.into());
            continue;
        }
        if sub_pos.is_none() && names.iter().any(|n| *n == text) {
            sub_pos = Some(i);
        }
    }
    let (Some(pos), Some(path)) = (sub_pos, config_path) else {
        return Ok(raw);
    };

    let sub_name = raw[pos].to_string_lossy().into_owned();
    let sub = command
        .get_subcommands()
        .find(|c| c.get_name() == sub_name)
        .expect("subcommand was matched by name");

    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;

    // Flags the user typed themselves; their config entries are dropped
    // outright since clap rejects a flag given twice.
    let explicit: Vec<String> = raw[pos + 1..]
        .iter()
        .filter_map(|a| {
            let text = a.to_string_lossy();
            let long = text.strip_prefix("--")?;
            Some(long.split('=').next().unwrap_or(long).to_string())
        })
        .collect();

    let mut injected: Vec<OsString> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::parse(format!(
                "{}:{}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            return Err(Failure::parse(format!(
                "{}:{}: config files cannot nest",
                path.display(),
                lineno + 1
            )));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key))
            .ok_or_else(|| {
                Failure::parse(format!(
                    "{}:{}: `{key}` is not a flag of `{sub_name}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
        if explicit.iter().any(|e| e == key) {
            continue;
        }
        if matches!(arg.get_action(), clap::ArgAction::SetTrue) {
            match value {
                "true" | "1" | "yes" => injected.push(format!("--{key}").into()),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Failure::parse(format!(
                        "{}:{}: `{key}` is a switch; got `{other}`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        } else {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        }
    }

    let mut args = raw;
    args.splice(pos + 1..pos + 1, injected);
    Ok(args)
}
