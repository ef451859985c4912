//! Feature-sequence files, text manifests and the synthetic multimodal
//! gesture generator.
//!
//! Feature file layout, little-endian:
//!
//! ```text
//! "MWFS" | version u32 (= 1) | m u32 | d_in u32 | name length u32 | name bytes
//! | label i32 (−1 = unlabeled) | m·d_in × f64, row-major
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::{put_f64s, put_u32, u32_field, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"MWFS";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_EXTENSION: &str = "mwfs";

/// One `m×d_in` feature sequence of one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequenceFile {
    pub modality: String,
    pub label: Option<usize>,
    pub features: Tensor,
}

impl FeatureSequenceFile {
    pub fn frames(&self) -> usize {
        self.features.dims()[0]
    }

    pub fn dim(&self) -> usize {
        self.features.dims()[1]
    }
}

pub fn write_features<W: Write>(mut w: W, file: &FeatureSequenceFile) -> Result<()> {
    if file.features.dims().len() != 2 {
        return Err(Error::dim(format!(
            "feature sequence must be m×d_in, got {}",
            file.features.shape()
        )));
    }
    let label = match file.label {
        None => -1,
        Some(l) => i32::try_from(l).map_err(|_| Error::input(format!("label {l} too large")))?,
    };
    let mut out = Vec::with_capacity(32 + file.modality.len() + 8 * file.features.numel());
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FEATURE_VERSION);
    put_u32(&mut out, u32_field(file.frames(), "m")?);
    put_u32(&mut out, u32_field(file.dim(), "d_in")?);
    put_u32(&mut out, u32_field(file.modality.len(), "modality name length")?);
    out.extend_from_slice(file.modality.as_bytes());
    out.extend_from_slice(&label.to_le_bytes());
    put_f64s(&mut out, file.features.data());
    w.write_all(&out)?;
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureSequenceFile> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut rd = ByteReader::new(&buf);
    rd.expect_magic(FEATURE_MAGIC)?;
    let at = rd.offset();
    let version = rd.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(rd.format_error(at, format!("unsupported feature file version {version}")));
    }
    let at = rd.offset();
    let m = rd.u32("m")? as usize;
    let d = rd.u32("d_in")? as usize;
    if m == 0 || d == 0 {
        return Err(rd.format_error(at, format!("empty feature sequence {m}×{d}")));
    }
    let len = rd.u32("modality name length")? as usize;
    let at = rd.offset();
    let name = rd.take(len, "modality name")?;
    let modality = String::from_utf8(name.to_vec())
        .map_err(|_| rd.format_error(at, "modality name is not UTF-8"))?;
    let at = rd.offset();
    let label = match rd.i32("label")? {
        -1 => None,
        l if l >= 0 => Some(l as usize),
        l => return Err(rd.format_error(at, format!("invalid label {l}"))),
    };
    let values = rd.f64s(m * d, "payload")?;
    if rd.remaining() != 0 {
        return Err(rd.format_error(
            rd.offset(),
            format!("{} trailing bytes after payload", rd.remaining()),
        ));
    }
    Ok(FeatureSequenceFile {
        modality,
        label,
        features: Tensor::from_vec([m, d], values)?,
    })
}

pub fn save_features(path: impl AsRef<Path>, file: &FeatureSequenceFile) -> Result<()> {
    let mut buf = Vec::new();
    write_features(&mut buf, file)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequenceFile> {
    let path = path.as_ref();
    read_features(fs::File::open(path).map_err(Error::io_at(path))?)
}

/// One `path,label,modality` manifest line; `path` is relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub modality: String,
}

impl ManifestEntry {
    /// File stem with the `_modality` suffix removed, shared by all views of
    /// one sample.
    pub fn sample_id(&self) -> String {
        let stem = self
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let suffix = format!("_{}", self.modality);
        stem.strip_suffix(&suffix).unwrap_or(&stem).to_string()
    }
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!("{},{},{}\n", e.path.display(), e.label, e.modality));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(Error::io_at(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |why: &str| Error::input(format!("{}:{}: {why}: {line:?}", path.display(), i + 1));
        let mut parts = line.rsplitn(3, ',');
        let (modality, label, file) = match (parts.next(), parts.next(), parts.next()) {
            (Some(m), Some(l), Some(f)) => (m, l, f),
            _ => return Err(bad("expected path,label,modality")),
        };
        let label = label.trim().parse().map_err(|_| bad("label is not a class index"))?;
        out.push(ManifestEntry {
            path: PathBuf::from(file.trim()),
            label,
            modality: modality.trim().to_string(),
        });
    }
    Ok(out)
}

/// A labelled sample loaded for one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub id: String,
    pub label: usize,
    pub features: Tensor,
}

/// Loads every entry of `manifest` whose modality is `modality`, or every
/// entry when it is `None`. A file whose stored label disagrees with the
/// manifest is a format error.
pub fn load_split(manifest: impl AsRef<Path>, modality: Option<&str>) -> Result<Vec<LabeledSequence>> {
    let manifest = manifest.as_ref();
    let root = manifest.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for e in read_manifest(manifest)? {
        if modality.is_some_and(|m| m != e.modality) {
            continue;
        }
        let file = load_features(root.join(&e.path))?;
        if file.label.is_some_and(|l| l != e.label) {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "{}: stored label {:?} disagrees with manifest label {}",
                    e.path.display(),
                    file.label,
                    e.label
                ),
            });
        }
        out.push(LabeledSequence {
            id: e.sample_id(),
            label: e.label,
            features: file.features,
        });
    }
    Ok(out)
}

/// Parameters of the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub frames: usize,
    pub input_dim: usize,
    pub modalities: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl SyntheticSpec {
    /// `total` samples split 80/20 between train and test.
    pub fn with_total(mut self, total: usize) -> Self {
        self.test_samples = total / 5;
        self.train_samples = total - self.test_samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config(format!("classes = {} (need ≥ 2)", self.classes)));
        }
        if self.frames == 0 || self.input_dim == 0 || self.modalities == 0 {
            return Err(Error::config("frames, input_dim and modalities must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config(format!("noise = {} (need finite ≥ 0)", self.noise)));
        }
        Ok(())
    }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 3,
            frames: 40,
            input_dim: 16,
            modalities: 1,
            noise: 0.3,
            seed: 0,
            train_samples: 300,
            test_samples: 60,
        }
    }
}

/// One generated gesture: the same class prototype seen through every
/// modality.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub label: usize,
    /// One `m×d_in` map per modality, in [`Dataset::modalities`] order.
    pub views: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub modalities: Vec<String>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Default modality names; extra modalities are numbered.
pub fn modality_name(i: usize) -> String {
    const NAMES: [&str; 5] = ["color", "depth", "ir", "normals", "flow"];
    NAMES
        .get(i)
        .map_or_else(|| format!("modality{i}"), |s| s.to_string())
}

/// Deterministic synthetic dataset. Class `j` has prototype
/// `P[t,f] = sin(2π·ν·t/m + φ)` with `ν ∈ [0.25, 1.25)` cycles and
/// `φ ∈ [0, 2π)` drawn per (class, feature). Modality `i` sees
/// `P·Dᵢᵀ + ε`, where `Dᵢ = I + G/√d_in` with standard normal `G`, and
/// `ε ~ N(0, σ²)` is drawn independently per view. Labels cycle through the
/// classes so counts differ by at most one.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (m, d) = (spec.frames, spec.input_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let prototypes: Vec<Tensor> = (0..spec.classes)
        .map(|_| {
            let waves: Vec<(f64, f64)> = (0..d)
                .map(|_| {
                    (
                        rng.gen_range(0.25..1.25),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let mut data = vec![0.0; m * d];
            for t in 0..m {
                for (f, &(nu, phi)) in waves.iter().enumerate() {
                    let x = std::f64::consts::TAU * nu * t as f64 / m as f64 + phi;
                    data[t * d + f] = x.sin();
                }
            }
            Tensor::from_vec([m, d], data)
        })
        .collect::<Result<_>>()?;

    let scale = 1.0 / (d as f64).sqrt();
    let distortions: Vec<Tensor> = (0..spec.modalities)
        .map(|_| {
            let mut g: Vec<f64> = (0..d * d).map(|_| std_normal.sample(&mut rng) * scale).collect();
            for i in 0..d {
                g[i * d + i] += 1.0;
            }
            Tensor::from_vec([d, d], g)
        })
        .collect::<Result<_>>()?;

    // clean[class][modality] = P · Dᵀ
    let clean: Vec<Vec<Tensor>> = prototypes
        .iter()
        .map(|p| {
            distortions
                .iter()
                .map(|dist| crate::tensor::linear(p, dist, None))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let mut make = |count: usize, offset: usize| -> Vec<Sample> {
        (0..count)
            .map(|i| {
                let label = i % spec.classes;
                let views = clean[label]
                    .iter()
                    .map(|c| {
                        let mut v = c.clone();
                        if spec.noise > 0.0 {
                            for x in v.data_mut() {
                                *x += spec.noise * std_normal.sample(&mut rng);
                            }
                        }
                        v
                    })
                    .collect();
                Sample {
                    index: offset + i,
                    label,
                    views,
                }
            })
            .collect()
    };
    let train = make(spec.train_samples, 0);
    let test = make(spec.test_samples, spec.train_samples);
    Ok(Dataset {
        modalities: (0..spec.modalities).map(modality_name).collect(),
        train,
        test,
    })
}

pub const TRAIN_MANIFEST: &str = "train.manifest";
pub const TEST_MANIFEST: &str = "test.manifest";

impl Dataset {
    /// Samples of one split for one modality.
    pub fn view(&self, split: &[Sample], modality: usize) -> Vec<LabeledSequence> {
        split
            .iter()
            .map(|s| LabeledSequence {
                id: format!("{:05}", s.index),
                label: s.label,
                features: s.views[modality].clone(),
            })
            .collect()
    }

    /// Writes `train/` and `test/` feature files plus one manifest per split
    /// into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (split, samples, manifest) in [
            ("train", &self.train, TRAIN_MANIFEST),
            ("test", &self.test, TEST_MANIFEST),
        ] {
            fs::create_dir_all(dir.join(split))?;
            let mut entries = Vec::new();
            for s in samples {
                for (name, view) in self.modalities.iter().zip(&s.views) {
                    let rel = PathBuf::from(split)
                        .join(format!("{:05}_{name}.{FEATURE_EXTENSION}", s.index));
                    save_features(
                        dir.join(&rel),
                        &FeatureSequenceFile {
                            modality: name.clone(),
                            label: Some(s.label),
                            features: view.clone(),
                        },
                    )?;
                    entries.push(ManifestEntry {
                        path: rel,
                        label: s.label,
                        modality: name.clone(),
                    });
                }
            }
            write_manifest(dir.join(manifest), &entries)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_file() -> FeatureSequenceFile {
        FeatureSequenceFile {
            modality: "depth".into(),
            label: Some(2),
            features: Tensor::from_vec([3, 2], vec![0.5, -1.0, 1e-300, 3.25, f64::MAX, -0.0])
                .unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let f = sample_file();
        let mut buf = Vec::new();
        write_features(&mut buf, &f).unwrap();
        let back = read_features(&buf[..]).unwrap();
        assert_eq!(back.modality, f.modality);
        assert_eq!(back.label, f.label);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.features), bits(&f.features));

        let unlabeled = FeatureSequenceFile { label: None, ..f };
        let mut buf = Vec::new();
        write_features(&mut buf, &unlabeled).unwrap();
        assert_eq!(read_features(&buf[..]).unwrap().label, None);
    }

    #[test]
    fn corrupt_headers() {
        let mut buf = Vec::new();
        write_features(&mut buf, &sample_file()).unwrap();

        let mut bad = buf.clone();
        bad[1] = b'X';
        assert!(matches!(read_features(&bad[..]), Err(Error::Format { offset: 0, .. })));

        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_features(&bad[..]), Err(Error::Format { offset: 4, .. })));

        let short = &buf[..buf.len() - 8];
        match read_features(short) {
            Err(Error::Length { expected, actual, .. }) => assert_eq!((expected, actual), (6, 5)),
            other => panic!("expected length error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.manifest");
        fs::write(&p, "# header\ntrain/00001_ir.mwfs,2,ir\n\n").unwrap();
        let e = read_manifest(&p).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].label, 2);
        assert_eq!(e[0].sample_id(), "00001");
        fs::write(&p, "a.mwfs,x,ir\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Input(_))));
    }

    #[test]
    fn noiseless_samples_equal_their_prototype() {
        let spec = SyntheticSpec {
            noise: 0.0,
            modalities: 2,
            train_samples: 12,
            test_samples: 6,
            ..SyntheticSpec::default()
        };
        let ds = gen_synthetic(&spec).unwrap();
        for split in [&ds.train, &ds.test] {
            for s in split {
                let first = ds.train.iter().find(|t| t.label == s.label).unwrap();
                assert_eq!(s.views, first.views);
            }
        }
    }

    #[test]
    fn split_helper_is_80_20() {
        let s = SyntheticSpec::default().with_total(360);
        assert_eq!((s.train_samples, s.test_samples), (288, 72));
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            SyntheticSpec { classes: 1, ..Default::default() },
            SyntheticSpec { noise: -0.1, ..Default::default() },
            SyntheticSpec { noise: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(gen_synthetic(&spec), Err(Error::Config(_))));
        }
    }
}
