//! JSON artifact helpers: canonical (sorted-key) rendering and atomic writes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

/// Pretty JSON with object keys in sorted order and a trailing newline.
///
/// Serializing through `serde_json::Value` sorts keys because the default
/// `serde_json::Map` is a `BTreeMap`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("artifact types always serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("json value always renders");
    out.push('\n');
    out
}

/// Single-line canonical JSON, used for json-lines records.
pub fn to_canonical_line<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("artifact types always serialize");
    serde_json::to_string(&value).expect("json value always renders")
}

/// Writes `contents` to a sibling temp file, syncs it, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "artifact path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn keys_are_sorted() {
        let mut m = HashMap::new();
        for k in ["zeta", "alpha", "mid"] {
            m.insert(k, 1);
        }
        let s = to_canonical_line(&m);
        assert_eq!(s, r#"{"alpha":1,"mid":1,"zeta":1}"#);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
