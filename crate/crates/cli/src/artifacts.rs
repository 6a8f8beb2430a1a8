//! Every output file goes through one [`Artifacts`] value, which keeps the
//! manifest in step with what is on disk.

use std::fs;
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct Artifacts {
    root: PathBuf,
    entries: Vec<Entry>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    config: &'a C,
    files: &'a [Entry],
}

fn check_relative(rel: &str) -> io::Result<()> {
    let path = Path::new(rel);
    let ok = !rel.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)));
    if !ok {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("artifact path {rel:?} escapes the output directory")));
    }
    Ok(())
}

impl Artifacts {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Artifacts { root: root.to_path_buf(), entries: Vec::new() })
    }

    #[cfg(test)]
    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Write `bytes` to `rel` under the output directory. `rel` must be a plain
    /// relative path; `..`, absolute paths and the manifest name are rejected.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        check_relative(rel)?;
        if rel == MANIFEST || self.entries.iter().any(|e| e.path == rel) {
            return Err(io::Error::new(io::ErrorKind::AlreadyExists, format!("artifact {rel} written twice")));
        }
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.entries.push(Entry { path: rel.to_string(), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// Render into memory with `f`, then [`write`](Self::write).
    pub fn write_with<F>(&mut self, rel: &str, f: F) -> io::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    /// Write `manifest.json` with the resolved configuration and every file so far.
    pub fn finish<C: Serialize>(self, config: &C) -> io::Result<Vec<Entry>> {
        let m = Manifest { config, files: &self.entries };
        let mut text = serde_json::to_vec_pretty(&m).map_err(io::Error::other)?;
        text.push(b'\n');
        let mut f = fs::File::create(self.root.join(MANIFEST))?;
        f.write_all(&text)?;
        Ok(self.entries)
    }
}
