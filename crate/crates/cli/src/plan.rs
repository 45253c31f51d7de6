//! Experiment plans: flat `key = value` files describing multi-generation cells.
//!
//! ```text
//! output_dir = results
//! jobs = 2
//! cell.ctrl.input = toy.ply
//! cell.ctrl.codec = control
//! cell.ctrl.generations = 50
//! cell.lcc.input = toy.ply
//! cell.lcc.codec = lcc.ckpt
//! cell.lcc.method = LCC
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub enum CodecRef {
    Control,
    Checkpoint(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub label: String,
    pub input: PathBuf,
    pub codec: CodecRef,
    pub method: String,
    /// `None` means: derive from the checkpoint's lambda id.
    pub rate_point: Option<String>,
    pub sequence: String,
    pub generations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub cells: Vec<Cell>,
}

fn check_label(what: &str, v: &str) -> Result<(), String> {
    if v.is_empty() || v.contains([',', '\n', '"']) {
        Err(format!("{what} `{v}` must be non-empty and free of commas and quotes"))
    } else {
        Ok(())
    }
}

/// Parses and validates a plan. Relative paths resolve against `base`.
/// Every referenced file must exist.
pub fn parse_plan(text: &str, base: &Path) -> Result<Plan, String> {
    let mut output_dir = None;
    let mut jobs = 1;
    let mut raw: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| format!("plan line {}: {m}", i + 1);
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "output_dir" => output_dir = Some(resolve(v)),
            "jobs" => jobs = v.parse().ok().filter(|&j| j > 0).ok_or_else(|| err(format!("bad jobs `{v}`")))?,
            _ => {
                let rest = k.strip_prefix("cell.").ok_or_else(|| err(format!("unknown key `{k}`")))?;
                let (label, field) = rest.rsplit_once('.').ok_or_else(|| err(format!("bad cell key `{k}`")))?;
                check_label("cell label", label).map_err(err)?;
                if !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(err(format!("cell label `{label}` may only use letters, digits, `_` and `-`")));
                }
                if !raw.contains_key(label) {
                    order.push(label.to_string());
                }
                let fields = raw.entry(label.to_string()).or_default();
                if fields.insert(field.to_string(), v.to_string()).is_some() {
                    return Err(err(format!("duplicate key `{k}`")));
                }
            }
        }
    }

    let output_dir = output_dir.ok_or("plan lacks `output_dir`")?;
    if order.is_empty() {
        return Err("plan has no cells".into());
    }
    let mut cells = Vec::new();
    for label in order {
        let mut f = raw.remove(&label).unwrap();
        let err = |m: String| format!("cell `{label}`: {m}");
        let input = resolve(&f.remove("input").ok_or_else(|| err("missing `input`".into()))?);
        if !input.is_file() {
            return Err(err(format!("input {} does not exist", input.display())));
        }
        let codec = match f.remove("codec").ok_or_else(|| err("missing `codec`".into()))?.as_str() {
            "control" => CodecRef::Control,
            p => {
                let path = resolve(p);
                if !path.is_file() {
                    return Err(err(format!("checkpoint {} does not exist", path.display())));
                }
                CodecRef::Checkpoint(path)
            }
        };
        let method = f.remove("method").unwrap_or_else(|| match codec {
            CodecRef::Control => "control".into(),
            CodecRef::Checkpoint(_) => label.clone(),
        });
        let sequence = f.remove("sequence").unwrap_or_else(|| {
            input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
        });
        let rate_point = f.remove("rate_point");
        let generations = match f.remove("generations") {
            None => 50,
            Some(g) => g.parse().ok().filter(|&g| g > 0).ok_or_else(|| err(format!("bad generations `{g}`")))?,
        };
        for (what, v) in [("method", &method), ("sequence", &sequence)] {
            check_label(what, v).map_err(err)?;
        }
        if let Some(r) = &rate_point {
            check_label("rate_point", r).map_err(err)?;
        }
        if let Some(k) = f.keys().next() {
            return Err(err(format!("unknown field `{k}`")));
        }
        cells.push(Cell {
            label,
            input,
            codec,
            method,
            rate_point,
            sequence,
            generations,
        });
    }
    Ok(Plan {
        output_dir,
        jobs,
        cells,
    })
}
