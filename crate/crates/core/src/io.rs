//! Atomic file output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    })();
    match res {
        Ok(()) => {
            fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Serializes `value` as pretty JSON to `path` atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Serde adapter for `(f64, f64)` pairs that may hold infinities, written as
/// the strings `"inf"` and `"-inf"` since JSON has no literal for them.
pub mod extended_pair {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Ext {
        Num(f64),
        Tag(String),
    }

    fn to_ext(v: f64) -> Ext {
        match v {
            f64::INFINITY => Ext::Tag("inf".into()),
            f64::NEG_INFINITY => Ext::Tag("-inf".into()),
            v if v.is_nan() => Ext::Tag("nan".into()),
            v => Ext::Num(v),
        }
    }

    fn from_ext<E: serde::de::Error>(e: Ext) -> Result<f64, E> {
        match e {
            Ext::Num(v) => Ok(v),
            Ext::Tag(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::custom(format!("expected a number, \"inf\" or \"-inf\", got \"{s}\""))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &(f64, f64), s: S) -> Result<S::Ok, S::Error> {
        (to_ext(v.0), to_ext(v.1)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(f64, f64), D::Error> {
        let (a, b) = <(Ext, Ext)>::deserialize(d)?;
        Ok((from_ext::<D::Error>(a)?, from_ext::<D::Error>(b)?))
    }
}
