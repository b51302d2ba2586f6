//! Command configuration: per-command key schemas with defaults, config files
//! (plain or a previous run's manifest), `--set` overrides and the manifest
//! written next to every run's outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pvann_core::kv::KvDoc;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_VERSION: &str = "1";

/// Key and default value. An empty default means "not set".
pub type Schema = &'static [(&'static str, &'static str)];

#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: &'static str,
    entries: Vec<(&'static str, String)>,
}

impl Resolved {
    /// Defaults, then the config file, then `--set`, then dedicated flags.
    pub fn load(
        command: &'static str,
        schema: Schema,
        config: Option<&Path>,
        overrides: &[(String, String)],
        quiet: bool,
    ) -> Result<Resolved, CliError> {
        let mut entries: Vec<(&'static str, String)> =
            schema.iter().map(|(k, v)| (*k, v.to_string())).collect();
        if let Some(path) = config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let doc = KvDoc::parse(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            let section = if doc.get("", "manifest_version").is_some() {
                check_manifest(&doc, command, quiet)?;
                "config"
            } else {
                if let Some(s) = doc.sections().into_iter().find(|s| !s.is_empty()) {
                    return Err(CliError::Usage(format!(
                        "config {}: unexpected section [{s}]",
                        path.display()
                    )));
                }
                ""
            };
            for e in doc.entries().iter().filter(|e| e.section == section) {
                set(&mut entries, command, &e.key, &e.value)?;
            }
        }
        for (k, v) in overrides {
            set(&mut entries, command, k, v)?;
        }
        Ok(Resolved { command, entries })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("`{key}` is not in the {} schema", self.command))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| CliError::Usage(format!("invalid value `{v}` for key `{key}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Usage(format!("invalid list item `{s}` for key `{key}`")))
            })
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)
            .ok_or_else(|| CliError::Usage(format!("`{key}` is required for {}", self.command)))
    }

    pub fn entries(&self) -> &[(&'static str, String)] {
        &self.entries
    }
}

fn set(entries: &mut [(&'static str, String)], command: &str, key: &str, value: &str) -> Result<(), CliError> {
    match entries.iter_mut().find(|(k, _)| *k == key) {
        Some(e) => {
            e.1 = value.trim().to_string();
            Ok(())
        }
        None => Err(CliError::Usage(format!("unknown key `{key}` for {command}"))),
    }
}

fn check_manifest(doc: &KvDoc, command: &str, quiet: bool) -> Result<(), CliError> {
    let version = doc.get("", "manifest_version").unwrap_or_default();
    if version != MANIFEST_VERSION {
        return Err(CliError::Usage(format!("unsupported manifest_version `{version}`")));
    }
    match doc.get("", "command") {
        Some(c) if c == command => {}
        other => {
            return Err(CliError::Usage(format!(
                "manifest was written by `{}`, not `{command}`",
                other.unwrap_or("?")
            )))
        }
    }
    // Inputs that changed since the recorded run make the rerun differ.
    for e in doc.entries().iter().filter(|e| e.section == "inputs") {
        if let Some(name) = e.key.strip_suffix(".sha256") {
            let Some(path) = doc.get("inputs", &format!("{name}.path")) else {
                continue;
            };
            let now = fs::read(path).map(|b| sha256_hex(&b)).ok();
            if now.as_deref() != Some(e.value.as_str()) && !quiet {
                eprintln!("warning: input {path} differs from the recorded run");
            }
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, found `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Output directory that records what was read and written.
pub struct RunDir {
    dir: PathBuf,
    inputs: Vec<(String, String, String)>,
    artifacts: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<RunDir, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    /// Reads an input file and records its digest. A missing file is a usage
    /// error.
    pub fn read_input(&mut self, name: &str, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.inputs
            .push((name.to_string(), path.display().to_string(), sha256_hex(&bytes)));
        Ok(bytes)
    }

    pub fn read_input_text(&mut self, name: &str, path: &Path) -> Result<String, CliError> {
        let bytes = self.read_input(name, path)?;
        String::from_utf8(bytes)
            .map_err(|_| CliError::Usage(format!("{} is not UTF-8 text", path.display())))
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(file);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.push((file.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn finish(self, config: &Resolved) -> Result<(), CliError> {
        let mut m = format!(
            "# pvann run manifest; pass it back with --config to repeat the run\n\
             manifest_version = {MANIFEST_VERSION}\ncommand = {}\n\n[config]\n",
            config.command
        );
        for (k, v) in config.entries() {
            m += &format!("{k} = {v}\n");
        }
        m += "\n[inputs]\n";
        for (name, path, digest) in &self.inputs {
            m += &format!("{name}.path = {path}\n{name}.sha256 = {digest}\n");
        }
        m += "\n[artifacts]\n";
        for (file, digest) in &self.artifacts {
            m += &format!("{file} = {digest}\n");
        }
        let path = self.dir.join("manifest.txt");
        fs::write(&path, m)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
