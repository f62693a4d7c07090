use std::fs;

use pose2traj::config::{parse_pairs, RunConfig};

use crate::error::CliError;
use crate::records::{GAPFILL_KEYS, SYNTH_KEYS};
use crate::ConfigArgs;

pub type Pairs = Vec<(String, String)>;

/// Config file pairs followed by `--set` pairs, in precedence order.
/// Rejects keys that no subcommand understands.
pub fn load(args: &ConfigArgs) -> Result<Pairs, CliError> {
    let mut pairs = Vec::new();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        pairs = parse_pairs(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    for o in &args.overrides {
        if !o.contains('=') {
            return Err(CliError::Input(format!("--set expects KEY=VALUE, got `{o}`")));
        }
        pairs.extend(parse_pairs(o)?);
    }
    let run_keys: Vec<&str> = RunConfig::default().to_pairs().into_iter().map(|(k, _)| k).collect();
    for (k, _) in &pairs {
        let k = k.as_str();
        if !run_keys.contains(&k) && !SYNTH_KEYS.contains(&k) && !GAPFILL_KEYS.contains(&k) {
            return Err(CliError::Input(format!("unknown config key `{k}`")));
        }
    }
    Ok(pairs)
}

/// The pairs whose key is in `keys`, order kept.
pub fn owned(pairs: &Pairs, keys: &[&str]) -> Pairs {
    pairs
        .iter()
        .filter(|(k, _)| keys.contains(&k.as_str()))
        .cloned()
        .collect()
}
