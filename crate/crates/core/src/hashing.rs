use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a file, or of a directory as the sorted list of `(name, hash)` pairs.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        names.sort();
        let mut acc = String::new();
        for p in names {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            acc.push_str(&name);
            acc.push(':');
            acc.push_str(&hash_path(&p)?);
            acc.push('\n');
        }
        Ok(sha256_hex(acc.as_bytes()))
    } else {
        Ok(sha256_hex(&fs::read(path)?))
    }
}
