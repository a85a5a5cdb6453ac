//! Bank files: `id,a,b,key,stem,options` CSV plus a `.meta.toml` sidecar.
//!
//! Options are packed into one field as `A|text;;B|text;;...`. Numbers are
//! written in Rust's shortest round-trip form, so write-then-load returns
//! an identical bank.

use std::fs;
use std::path::{Path, PathBuf};

use catlab_core::item::{BankError, BankMetadata, ItemBank, ItemParameters};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

pub const HEADER: [&str; 6] = ["id", "a", "b", "key", "stem", "options"];
const PAIR_SEP: &str = ";;";

#[derive(Debug, Error)]
pub enum BankFileError {
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: expected header `{}`, found `{found}`", .path.display(), HEADER.join(","))]
    Header { path: PathBuf, found: String },
    #[error("{}, row {row}: {message}", .path.display())]
    Record { path: PathBuf, row: usize, message: String },
    #[error("{}, row {row}, field `{field}`: {message}", .path.display())]
    Field {
        path: PathBuf,
        row: usize,
        field: &'static str,
        message: String,
    },
    #[error("{}, row {row}: {source}", .path.display())]
    Invalid {
        path: PathBuf,
        row: usize,
        source: BankError,
    },
    #[error("{}: {source}", .path.display())]
    Bank { path: PathBuf, source: BankError },
    #[error("{}: metadata: {message}", .path.display())]
    Meta { path: PathBuf, message: String },
    #[error("item `{id}`: option text cannot contain `;;`")]
    Unencodable { id: String },
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct MetaFile {
    #[serde(default)]
    name: String,
    #[serde(default)]
    source: String,
    #[serde(default)]
    calibration: String,
}

/// `bank.csv` -> `bank.meta.toml`.
pub fn sidecar_path(bank_path: &Path) -> PathBuf {
    bank_path.with_extension("meta.toml")
}

pub fn load_bank(path: &Path) -> Result<ItemBank, BankFileError> {
    let text = fs::read_to_string(path).map_err(|source| BankFileError::Io {
        path: path.into(),
        source,
    })?;
    let items = parse_items(path, &text)?;
    let metadata = load_metadata(path)?;
    ItemBank::new(items, metadata).map_err(|source| BankFileError::Bank {
        path: path.into(),
        source,
    })
}

fn parse_items(path: &Path, text: &str) -> Result<Vec<ItemParameters>, BankFileError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| BankFileError::Record {
        path: path.into(),
        row: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(BankFileError::Header {
            path: path.into(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut items = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (i, rec) in reader.records().enumerate() {
        // row numbers count the header as row 1
        let row = i + 2;
        let rec = rec.map_err(|e| BankFileError::Record {
            path: path.into(),
            row,
            message: e.to_string(),
        })?;
        let field_err = |field, message: String| BankFileError::Field {
            path: path.into(),
            row,
            field,
            message,
        };
        let id = rec[0].to_string();
        let a: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|e| field_err("a", format!("`{}`: {e}", &rec[1])))?;
        let b: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|e| field_err("b", format!("`{}`: {e}", &rec[2])))?;
        let key = match rec[3].trim() {
            "" => None,
            k if k.chars().count() == 1 => k.chars().next(),
            k => return Err(field_err("key", format!("`{k}` is not a single letter"))),
        };
        let stem = (!rec[4].is_empty()).then(|| rec[4].to_string());
        let options = decode_options(&rec[5]).map_err(|m| field_err("options", m))?;
        let item = ItemParameters {
            id: id.clone(),
            discrimination: a,
            difficulty: b,
            answer_key: key,
            stem,
            options,
        };
        item.validate().map_err(|source| BankFileError::Invalid {
            path: path.into(),
            row,
            source,
        })?;
        if let Some(first) = seen.insert(id.clone(), row) {
            return Err(BankFileError::Record {
                path: path.into(),
                row,
                message: format!("duplicate item id `{id}` (first seen on row {first})"),
            });
        }
        items.push(item);
    }
    Ok(items)
}

fn decode_options(field: &str) -> Result<Vec<(char, String)>, String> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(PAIR_SEP)
        .map(|pair| {
            let (letter, text) = pair
                .split_once('|')
                .ok_or_else(|| format!("option `{pair}` lacks a `|` after its letter"))?;
            let mut chars = letter.trim().chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok((c, text.to_string())),
                _ => Err(format!("option letter `{letter}` is not a single character")),
            }
        })
        .collect()
}

fn encode_options(item: &ItemParameters) -> Result<String, BankFileError> {
    let mut parts = Vec::with_capacity(item.options.len());
    for (letter, text) in &item.options {
        if text.contains(PAIR_SEP) {
            return Err(BankFileError::Unencodable { id: item.id.clone() });
        }
        parts.push(format!("{letter}|{text}"));
    }
    Ok(parts.join(PAIR_SEP))
}

fn load_metadata(bank_path: &Path) -> Result<BankMetadata, BankFileError> {
    let meta_path = sidecar_path(bank_path);
    let stem_name = || {
        bank_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let text = match fs::read_to_string(&meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(BankMetadata {
                name: stem_name(),
                ..BankMetadata::default()
            })
        }
        Err(source) => {
            return Err(BankFileError::Io {
                path: meta_path,
                source,
            })
        }
    };
    let meta: MetaFile = toml::from_str(&text).map_err(|e| BankFileError::Meta {
        path: meta_path,
        message: e.to_string(),
    })?;
    Ok(BankMetadata {
        name: meta.name,
        source: meta.source,
        calibration: meta.calibration,
    })
}

/// The bank's CSV bytes exactly as [`write_bank`] writes them.
pub fn render_bank_csv(bank: &ItemBank) -> Result<Vec<u8>, BankFileError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| BankFileError::Record {
        path: PathBuf::new(),
        row: 0,
        message: e.to_string(),
    };
    w.write_record(HEADER).map_err(csv_err)?;
    for item in bank.items() {
        let options = encode_options(item)?;
        w.write_record([
            item.id.clone(),
            item.discrimination.to_string(),
            item.difficulty.to_string(),
            item.answer_key.map(String::from).unwrap_or_default(),
            item.stem.clone().unwrap_or_default(),
            options,
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| BankFileError::Record {
        path: PathBuf::new(),
        row: 0,
        message: e.to_string(),
    })
}

pub fn render_metadata(meta: &BankMetadata) -> String {
    toml::to_string(&MetaFile {
        name: meta.name.clone(),
        source: meta.source.clone(),
        calibration: meta.calibration.clone(),
    })
    .expect("plain strings serialize")
}

/// Writes the bank and its metadata sidecar.
pub fn write_bank(path: &Path, bank: &ItemBank) -> Result<(), BankFileError> {
    let bytes = render_bank_csv(bank)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BankFileError::Io { path, source }
    };
    fs::write(path, bytes).map_err(io(path))?;
    let meta_path = sidecar_path(path);
    fs::write(&meta_path, render_metadata(bank.metadata())).map_err(io(&meta_path))?;
    Ok(())
}

/// Digest of the item table (metadata excluded).
pub fn bank_digest(bank: &ItemBank) -> Result<String, BankFileError> {
    Ok(sha256_hex(&render_bank_csv(bank)?))
}
