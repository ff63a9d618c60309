use std::path::Path;

use crate::data::{
    extract_recist_slice, gen_phantom, preprocess, read_manifest, read_volume, split_corpus, write_manifest,
    write_volume, LesionVolume, ManifestEntry, PhantomSpec, Prepared, PreprocessConfig, Split,
};
use crate::error::{Error, Result};

/// Sizes of a synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusConfig {
    pub unlabeled: usize,
    pub slices: usize,
    pub labeled: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            unlabeled: 200,
            slices: 100,
            labeled: 60,
            seed: 0,
        }
    }
}

/// Raw volumes grouped by role.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub unlabeled: Vec<LesionVolume>,
    /// Depth-1 labelled RECIST slices.
    pub slices: Vec<LesionVolume>,
    pub train: Vec<LesionVolume>,
    pub val: Vec<LesionVolume>,
    pub test: Vec<LesionVolume>,
}

const GROUP_UNLABELED: u64 = 1;
const GROUP_SLICE: u64 = 2;
const GROUP_LABELED: u64 = 3;

/// Independent per-item stream, so any subset regenerates identically.
fn item_seed(seed: u64, group: u64, i: usize) -> u64 {
    let mut z = seed ^ group.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn phantom(seed: u64, group: u64, i: usize, prefix: &str) -> Result<LesionVolume> {
    gen_phantom(&PhantomSpec::random(item_seed(seed, group, i), format!("{prefix}-{i:04}")))
}

impl Corpus {
    /// Draw every role from disjoint phantom streams; labelled volumes are split
    /// into train/validation/test.
    pub fn generate(cfg: &CorpusConfig) -> Result<Self> {
        let unlabeled = (0..cfg.unlabeled)
            .map(|i| Ok(phantom(cfg.seed, GROUP_UNLABELED, i, "unlabeled")?.without_label()))
            .collect::<Result<_>>()?;
        let slices = (0..cfg.slices)
            .map(|i| Ok(extract_recist_slice(&phantom(cfg.seed, GROUP_SLICE, i, "slice")?)?.volume))
            .collect::<Result<_>>()?;
        let (train, val, test) = if cfg.labeled == 0 {
            Default::default()
        } else {
            let labeled: Vec<LesionVolume> = (0..cfg.labeled)
                .map(|i| phantom(cfg.seed, GROUP_LABELED, i, "lesion"))
                .collect::<Result<_>>()?;
            split_corpus(&labeled, cfg.seed)?
        };
        Ok(Self {
            unlabeled,
            slices,
            train,
            val,
            test,
        })
    }

    fn groups(&self) -> [(Split, &[LesionVolume]); 5] {
        [
            (Split::Unlabeled, &self.unlabeled),
            (Split::Slice, &self.slices),
            (Split::Train, &self.train),
            (Split::Val, &self.val),
            (Split::Test, &self.test),
        ]
    }

    pub fn len(&self) -> usize {
        self.groups().iter().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One volume file per item under `dir/<split>/`, plus `dir/manifest.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.len());
        for (split, vols) in self.groups() {
            if vols.is_empty() {
                continue;
            }
            let sub = dir.join(split.as_str());
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for v in vols {
                let rel = Path::new(split.as_str()).join(format!("{}.mdv", file_stem(&v.id)));
                write_volume(&dir.join(&rel), v)?;
                entries.push(ManifestEntry {
                    path: rel,
                    split,
                    id: v.id.clone(),
                });
            }
        }
        write_manifest(&dir.join(MANIFEST), &entries)
    }

    /// Load every volume listed in `manifest`.
    pub fn read(manifest: &Path) -> Result<Self> {
        let mut c = Corpus::default();
        for e in read_manifest(manifest)? {
            let v = read_volume(&e.path)?;
            if v.id != e.id {
                return Err(Error::format("manifest", format!("{} holds id `{}`, listed as `{}`", e.path.display(), v.id, e.id)));
            }
            match e.split {
                Split::Unlabeled => c.unlabeled.push(v),
                Split::Slice => c.slices.push(v),
                Split::Train => c.train.push(v),
                Split::Val => c.val.push(v),
                Split::Test => c.test.push(v),
            }
        }
        Ok(c)
    }
}

pub const MANIFEST: &str = "manifest.tsv";

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// A preprocessed item ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub prepared: Prepared,
}

/// Preprocess every volume; depth-1 slices use the planar geometry.
pub fn prepare(vols: &[LesionVolume], cfg: &PreprocessConfig) -> Result<Vec<Sample>> {
    vols.iter()
        .map(|v| {
            Ok(Sample {
                id: v.id.clone(),
                prepared: preprocess(v, cfg)?,
            })
        })
        .collect()
}
