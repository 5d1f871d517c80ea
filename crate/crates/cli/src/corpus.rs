//! Finding documentation files and the urls they are registered under.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "docs-manifest.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocFile {
    pub path: PathBuf,
    /// Path as shown to the user, relative to the corpus root.
    pub name: String,
    pub url: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("bad manifest {path}: {message}")]
    Manifest { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn is_html(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("html" | "htm"))
}

fn html_files(root: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let p = entry.map_err(io_err(&dir))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if is_html(&p) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn file_url(path: &Path) -> String {
    let abs = fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    url::Url::from_file_path(&abs)
        .map(|u| u.to_string())
        .unwrap_or_else(|_| format!("file://{}", abs.display()))
}

fn relative_name(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Files to import from `target`: a single html file, a manifest (only its entries), or a
/// directory (every html file below it; urls from its manifest when listed
/// there, `file://` urls otherwise).
pub fn plan(target: &Path) -> Result<Vec<DocFile>, CorpusError> {
    if target.is_file() && is_html(target) {
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![DocFile {
            path: target.to_path_buf(),
            name,
            url: file_url(target),
        }]);
    }
    if target.is_file() {
        let root = target.parent().unwrap_or(Path::new("."));
        return Ok(read_manifest(target)?
            .into_iter()
            .map(|(name, url)| DocFile {
                path: root.join(&name),
                name,
                url,
            })
            .collect());
    }
    let manifest_path = target.join(MANIFEST);
    let manifest = if manifest_path.is_file() {
        read_manifest(&manifest_path)?
    } else {
        BTreeMap::new()
    };
    Ok(html_files(target)?
        .into_iter()
        .map(|path| {
            let name = relative_name(target, &path);
            let url = manifest.get(&name).cloned().unwrap_or_else(|| file_url(&path));
            DocFile { path, name, url }
        })
        .collect())
}
