use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

/// Output directory; every write failure is an internal error.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root)
            .map_err(|e| Failure::Internal(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Opens `name` for writing, runs `f`, and flushes.
    pub fn write<F>(&self, name: &str, f: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), Failure>,
    {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::Internal(format!("cannot create {}: {e}", dir.display())))?;
        }
        let file = File::create(&path)
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))
    }

    pub fn write_str(&self, name: &str, content: &str) -> Result<(), Failure> {
        self.write(name, |w| {
            w.write_all(content.as_bytes())
                .map_err(|e| Failure::Internal(e.to_string()))
        })
    }
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Everything needed to rerun a command: the effective configuration, the
/// seed, the tool version and digests of every input file.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    profile: &'a str,
    inputs: Vec<InputDigest>,
    config: &'a C,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, seed: u64, profile: &'a str, config: &'a C) -> Self {
        Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            profile,
            inputs: Vec::new(),
            config,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let bytes = fs::read(path)
            .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex,
        });
        Ok(())
    }

    pub fn write(&self, out: &OutDir) -> Result<(), Failure> {
        let text =
            toml::to_string(self).map_err(|e| Failure::Internal(format!("manifest: {e}")))?;
        out.write_str("manifest.toml", &text)
    }
}
