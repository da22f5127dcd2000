//! `--config FILE` support: `key = value` lines appended as `--key value`
//! after the command line, so file values win over flags.

use std::ffi::OsString;
use std::fs;

pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut out = Vec::with_capacity(args.len());
    let mut extra = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy().into_owned();
        let path = if s == "--config" {
            match it.next() {
                Some(p) => p.to_string_lossy().into_owned(),
                None => return Err("--config needs a file argument".into()),
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            p.to_string()
        } else {
            out.push(arg);
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
        extra.extend(parse(&text)?);
    }
    out.extend(extra.into_iter().map(OsString::from));
    Ok(out)
}

fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}
