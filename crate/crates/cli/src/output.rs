//! Errors, exit codes, artifact writing and config resolution.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use tpe_core::data::{load_manifest_with, Dataset, LoadOptions, Split};

use crate::args::InputArgs;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Core(tpe_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                tpe_core::Error::Divergence { .. } => 4,
                tpe_core::Error::InvalidConfig(_) | tpe_core::Error::OutOfRange(_) => 2,
                _ => 3,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            4 => "divergence",
            _ => "data",
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<tpe_core::Error> for CliError {
    fn from(e: tpe_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Collects artifacts written into one output directory.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path for an artifact the caller writes itself.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).expect("serializable");
        s.push('\n');
        self.text(name, &s)
    }

    /// CSV with a header row; every row must match the header's width.
    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> CliResult<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_error(&path, e))?;
        w.write_record(header).map_err(|e| io_error(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| io_error(&path, e))?;
        }
        w.flush().map_err(|e| io_error(&path, e))
    }

    /// Writes `run.json`: the command, its arguments, the resolved config and
    /// the artifacts produced, in a form that replays the run.
    pub fn finish(mut self, command: &str, args: &impl Serialize, config: Value) -> CliResult<()> {
        self.written.push("run.json".into());
        let argv: Vec<String> = std::env::args().skip(1).collect();
        let run = json!({
            "tool": "tpe",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "argv": argv,
            "threads": rayon::current_num_threads(),
            "args": args,
            "config": config,
            "outputs": self.written,
        });
        let path = self.dir.join("run.json");
        let mut s = serde_json::to_string_pretty(&run).expect("serializable");
        s.push('\n');
        fs::write(&path, s).map_err(|e| io_error(&path, e))
    }
}

/// Formats a float so that it parses back to the same value; infinities as `inf`/`-inf`.
pub fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        x.to_string()
    }
}

/// A JSON number, or the strings `inf` / `-inf` which JSON cannot represent.
pub fn json_num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(num(x))
    }
}

pub fn load(input: &InputArgs) -> CliResult<Dataset> {
    let opts = LoadOptions {
        normalize: !input.no_normalize,
    };
    let ds = load_manifest_with(&input.input, opts)?;
    match &input.split {
        Some(s) => {
            let split: Split = s.parse().map_err(CliError::Usage)?;
            Ok(ds.split(split)?)
        }
        None => Ok(ds),
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `base` overlaid with the JSON object in `file`. A `run.json` contributes
/// its `config` member. Missing fields keep their base values.
pub fn resolve_config<T: Serialize + DeserializeOwned>(
    base: T,
    file: Option<&Path>,
) -> CliResult<T> {
    let Some(path) = file else { return Ok(base) };
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut overlay: Value = serde_json::from_str(&text).map_err(|e| io_error(path, e))?;
    if overlay.get("command").is_some() {
        overlay = overlay.get("config").cloned().unwrap_or(Value::Null);
    }
    if !overlay.is_object() {
        return Err(CliError::Usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    }
    let mut value = serde_json::to_value(base).expect("serializable");
    merge(&mut value, overlay);
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
