//! Versioned JSON envelopes for model files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    body: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    body: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub(crate) fn to_string<T: Serialize>(format: &str, version: u32, body: &T) -> Result<String> {
    Ok(serde_json::to_string(&EnvelopeRef {
        format,
        version,
        body,
    })?)
}

pub(crate) fn from_str<T: DeserializeOwned>(text: &str, format: &str, version: u32) -> Result<T> {
    let header: Header = serde_json::from_str(text)?;
    check(&header.format, header.version, format, version)?;
    let env: Envelope<T> = serde_json::from_str(text)?;
    Ok(env.body)
}

fn check(found: &str, found_version: u32, format: &str, version: u32) -> Result<()> {
    if found != format {
        return Err(Error::Format(format!("expected {format:?}, found {found:?}")));
    }
    if found_version != version {
        return Err(Error::Format(format!(
            "{format} version {found_version} is not supported (expected {version})"
        )));
    }
    Ok(())
}

pub(crate) fn save<T: Serialize>(
    path: impl AsRef<Path>,
    format: &str,
    version: u32,
    body: &T,
) -> Result<()> {
    let path = path.as_ref();
    let text = to_string(format, version, body)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn load<T: DeserializeOwned>(
    path: impl AsRef<Path>,
    format: &str,
    version: u32,
) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text, format, version)
}
