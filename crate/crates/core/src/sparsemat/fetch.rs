//! Download and cache matrices from the SuiteSparse Matrix Collection.
//!
//! Archives are fetched from the collection's `MM/<group>/<name>.tar.gz`
//! scheme, the Matrix Market file is extracted, validated, and stored under
//! `<cache>/<group>/<name>.mtx`; later calls read the cache and touch no
//! network.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("unknown matrix name '{0}' (use 'group/name' for matrices outside the built-in table)")]
    UnknownName(String),
    #[error("download failed for {url}: {detail}")]
    Download { url: String, detail: String },
    #[error("archive for '{name}' did not contain {entry}")]
    MissingEntry { name: String, entry: String },
    #[error("downloaded data for '{0}' is not a Matrix Market file")]
    NotMatrixMarket(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Groups for the matrices the experiments use; other matrices can be
/// addressed as "group/name".
const KNOWN_GROUPS: &[(&str, &str)] = &[("orani678", "HB"), ("bcspwr10", "HB")];

const HOSTS: &[&str] = &[
    "https://suitesparse-collection-website.herokuapp.com/MM",
    "https://sparse.tamu.edu/MM",
];

fn resolve(name: &str) -> Result<(String, String), FetchError> {
    if let Some((group, bare)) = name.split_once('/') {
        if group.is_empty() || bare.is_empty() {
            return Err(FetchError::UnknownName(name.into()));
        }
        return Ok((group.into(), bare.into()));
    }
    KNOWN_GROUPS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, g)| ((*g).into(), (*n).into()))
        .ok_or_else(|| FetchError::UnknownName(name.into()))
}

/// Fetch a collection matrix, returning the path of the cached `.mtx` file.
/// The cache is written atomically; a failed download never leaves partial
/// data behind.
pub fn fetch_suitesparse_path(name: &str, cache_dir: &Path) -> Result<PathBuf, FetchError> {
    let (group, bare) = resolve(name)?;
    let cached = cache_dir.join(&group).join(format!("{bare}.mtx"));
    if cached.is_file() {
        return Ok(cached);
    }
    fs::create_dir_all(cached.parent().unwrap())?;

    let mut last_err = None;
    for host in HOSTS {
        let url = format!("{host}/{group}/{bare}.tar.gz");
        match download(&url) {
            Ok(archive) => {
                let mtx = extract_mtx(&archive, &bare)?;
                if !mtx.starts_with(b"%%MatrixMarket") && !mtx.starts_with(b"%%matrixmarket") {
                    return Err(FetchError::NotMatrixMarket(name.into()));
                }
                let tmp = cached.with_extension("mtx.partial");
                fs::write(&tmp, &mtx)?;
                fs::rename(&tmp, &cached)?;
                return Ok(cached);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one host attempted"))
}

/// Fetch a collection matrix and return the Matrix Market bytes.
pub fn fetch_suitesparse(name: &str, cache_dir: &Path) -> Result<Vec<u8>, FetchError> {
    let path = fetch_suitesparse_path(name, cache_dir)?;
    Ok(fs::read(path)?)
}

fn download(url: &str) -> Result<Vec<u8>, FetchError> {
    let response = ureq::get(url)
        .timeout(std::time::Duration::from_secs(120))
        .call()
        .map_err(|e| FetchError::Download {
            url: url.into(),
            detail: e.to_string(),
        })?;
    let mut data = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut data)
        .map_err(|e| FetchError::Download {
            url: url.into(),
            detail: e.to_string(),
        })?;
    Ok(data)
}

fn extract_mtx(archive: &[u8], bare: &str) -> Result<Vec<u8>, FetchError> {
    let entry_name = format!("{bare}/{bare}.mtx");
    let mut tar = tar::Archive::new(GzDecoder::new(archive));
    for entry in tar.entries()? {
        let mut entry = entry?;
        let path = entry.path()?.to_string_lossy().into_owned();
        if path == entry_name || path.ends_with(&format!("/{bare}.mtx")) {
            let mut data = Vec::new();
            entry.read_to_end(&mut data)?;
            return Ok(data);
        }
    }
    Err(FetchError::MissingEntry {
        name: bare.into(),
        entry: entry_name,
    })
}
