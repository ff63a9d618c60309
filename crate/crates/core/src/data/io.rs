use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::LesionVolume;
use crate::error::{Error, Result};
use crate::network::write_atomic;

const TAG: &str = "MDUVOL 1";
const KIND: &str = "volume";

/// Text header, blank line, little-endian `f32` voxels, then one byte per
/// label voxel when `label 1`.
pub fn volume_to_bytes(v: &LesionVolume) -> Vec<u8> {
    let [h, w, l] = v.dims();
    let [a, b, c] = v.spacing();
    let header = format!(
        "{TAG}\ndims {h} {w} {l}\nspacing {a} {b} {c}\ndiameter {}\nlabel {}\nid {}\n\n",
        v.diameter_mm,
        u8::from(v.label().is_some()),
        v.id
    );
    let mut out = Vec::with_capacity(header.len() + 5 * v.numel());
    out.extend_from_slice(header.as_bytes());
    for x in v.voxels() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(label) = v.label() {
        out.extend_from_slice(label.data());
    }
    out
}

fn fields<'a, const N: usize>(line: Option<&'a str>, key: &str) -> Result<[&'a str; N]> {
    let line = line.ok_or_else(|| Error::format(KIND, format!("missing `{key}` line")))?;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::format(KIND, format!("expected `{key}`, found `{line}`")))?;
    let parts: Vec<&str> = rest.split(' ').collect();
    parts
        .try_into()
        .map_err(|_| Error::format(KIND, format!("`{key}` needs {N} values")))
}

fn parse<T: FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse().map_err(|_| Error::format(KIND, format!("bad `{key}` value `{s}`")))
}

pub fn volume_from_bytes(bytes: &[u8]) -> Result<LesionVolume> {
    let end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::format(KIND, "header is not terminated by a blank line"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format(KIND, "header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some(TAG) {
        return Err(Error::format(KIND, "bad format tag"));
    }
    let dims = fields::<3>(lines.next(), "dims")?;
    let dims: [usize; 3] = [parse(dims[0], "dims")?, parse(dims[1], "dims")?, parse(dims[2], "dims")?];
    let sp = fields::<3>(lines.next(), "spacing")?;
    let spacing = [parse(sp[0], "spacing")?, parse(sp[1], "spacing")?, parse(sp[2], "spacing")?];
    let [d] = fields::<1>(lines.next(), "diameter")?;
    let diameter: f64 = parse(d, "diameter")?;
    let [has_label] = fields::<1>(lines.next(), "label")?;
    let has_label = match has_label {
        "0" => false,
        "1" => true,
        other => return Err(Error::format(KIND, format!("bad `label` flag `{other}`"))),
    };
    let id_line = lines.next().ok_or_else(|| Error::format(KIND, "missing `id` line"))?;
    let id = id_line.strip_prefix("id ").ok_or_else(|| Error::format(KIND, "expected `id`"))?;
    if lines.next().is_some() {
        return Err(Error::format(KIND, "unexpected header line"));
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(KIND, "dims overflow"))?;
    let body = &bytes[end + 2..];
    let expected = n * 4 + if has_label { n } else { 0 };
    if body.len() != expected {
        return Err(Error::format(KIND, format!("payload has {} bytes, expected {expected}", body.len())));
    }
    let voxels = body[..4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let label = has_label.then(|| body[4 * n..].to_vec());
    LesionVolume::new(id, dims, spacing, diameter, voxels, label)
}

pub fn write_volume(path: &Path, v: &LesionVolume) -> Result<()> {
    if v.id.contains('\n') {
        return Err(Error::invalid("write_volume", "id must be a single line"));
    }
    write_atomic(path, &volume_to_bytes(v))
}

pub fn read_volume(path: &Path) -> Result<LesionVolume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    volume_from_bytes(&bytes)
}

/// Role of a corpus file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    /// Unlabelled 3D volume for pretraining.
    Unlabeled,
    /// Labelled RECIST slice.
    Slice,
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Unlabeled => "unlabeled",
            Split::Slice => "slice",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unlabeled" => Split::Unlabeled,
            "slice" => Split::Slice,
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            other => return Err(Error::format("manifest", format!("unknown split `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub split: Split,
    pub id: String,
}

/// Tab-separated `path split id` lines under a header row.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    w.write_record(["path", "split", "id"])?;
    for e in entries {
        let p = e.path.to_str().ok_or_else(|| Error::invalid("write_manifest", "path is not UTF-8"))?;
        w.write_record([p, e.split.as_str(), e.id.as_str()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("write_manifest", e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Entries with paths resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(file);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::format("manifest", format!("expected 3 fields, got {}", rec.len())));
        }
        let p = PathBuf::from(&rec[0]);
        out.push(ManifestEntry {
            path: if p.is_absolute() { p } else { base.join(p) },
            split: rec[1].parse()?,
            id: rec[2].to_string(),
        });
    }
    Ok(out)
}
