//! Key-value config files and run metadata.
//!
//! A config file holds one `key = value` per line, where `key` is the long
//! name of a flag of the chosen subcommand (`batch-size = 128`). Boolean flags
//! take `true` or `false`. `#` starts a comment. Flags given on the command
//! line win over the file. Run metadata files use the same format, so
//! `gspn <command> --config <run file>` repeats a run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::{ArgAction, ArgMatches, Command};

use crate::error::CliError;

fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{}: expected `key = value`, found `{line}`",
                path.display(),
                no + 1
            )));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Command-line arguments equivalent to the config file at `path`.
pub fn file_args(sub: &Command, path: &Path) -> Result<Vec<OsString>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut args = Vec::new();
    for (key, value) in parse_pairs(&text, path)? {
        if key == "config" {
            return Err(CliError::Config(format!("{}: config files cannot include others", path.display())));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Config(format!("{}: unknown key `{key}` for `{}`", path.display(), sub.get_name())))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => args.push(format!("--{key}").into()),
                "false" => {}
                _ => return Err(CliError::Config(format!("{}: `{key}` takes true or false", path.display()))),
            }
        } else {
            args.push(format!("--{key}").into());
            args.push(value.into());
        }
    }
    Ok(args)
}

/// Inserts the arguments of a `--config` file right after the subcommand
/// name, so explicit flags, which come later, override them.
pub fn expand(cmd: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(pos) = argv
        .iter()
        .position(|a| cmd.get_subcommands().any(|s| a.to_str() == Some(s.get_name())))
    else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(argv[pos].to_str().unwrap()).expect("matched above");
    let mut path = None;
    let mut i = pos + 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            path = argv.get(i + 1).cloned();
            i += 1;
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.into());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let extra = file_args(sub, Path::new(&path))?;
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

/// Every resolved flag of a subcommand, defaults included, in config-file
/// format, preceded by comment lines describing the run.
pub fn metadata(sub: &Command, matches: &ArgMatches, notes: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# gspn {} run", sub.get_name());
    let _ = writeln!(out, "# gspn version = {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in notes {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let mut pairs: Vec<(String, String)> = sub
        .get_arguments()
        .filter_map(|a| {
            let long = a.get_long()?;
            if long == "config" {
                return None;
            }
            let raw = matches.get_raw(a.get_id().as_str())?;
            let value = raw.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(",");
            Some((long.to_string(), value))
        })
        .collect();
    pairs.sort();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Arg;

    fn cmd() -> Command {
        Command::new("gspn").subcommand(
            Command::new("train")
                .args_override_self(true)
                .arg(Arg::new("config").long("config"))
                .arg(Arg::new("epochs").long("epochs").default_value("40"))
                .arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)),
        )
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "# x\nepochs = 3\nfast = true\n").unwrap();
        let p = path.to_str().unwrap();
        let c = cmd();
        let argv: Vec<OsString> = ["gspn", "train", "--config", p].iter().map(Into::into).collect();
        let m = c.clone().get_matches_from(expand(&c, argv).unwrap());
        let (_, sub) = m.subcommand().unwrap();
        assert_eq!(sub.get_one::<String>("epochs").unwrap(), "3");
        assert!(sub.get_flag("fast"));

        let argv: Vec<OsString> = ["gspn", "train", "--epochs", "7", "--config", p].iter().map(Into::into).collect();
        let m = c.clone().get_matches_from(expand(&c, argv).unwrap());
        let (_, sub) = m.subcommand().unwrap();
        assert_eq!(sub.get_one::<String>("epochs").unwrap(), "7");

        let text = metadata(c.find_subcommand("train").unwrap(), sub, &[]);
        assert!(text.contains("epochs = 7\n") && text.contains("fast = true\n"));
        assert!(!text.contains("config ="));
    }

    #[test]
    fn bad_files_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let c = cmd();
        let sub = c.find_subcommand("train").unwrap();
        for body in ["epochs 3", "speed = 2", "fast = yes"] {
            let path = dir.path().join("c.txt");
            fs::write(&path, body).unwrap();
            assert!(matches!(file_args(sub, &path), Err(CliError::Config(_))), "{body}");
        }
        assert!(matches!(file_args(sub, &dir.path().join("missing")), Err(CliError::Config(_))));
    }
}
