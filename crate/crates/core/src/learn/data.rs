use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::deployment::Deployment;
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, DrawKind, SERVER};

/// Side of the square images fed to the model.
pub const IMAGE_SIDE: usize = 8;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn refs(&self) -> Vec<&Sample> {
        self.samples.iter().collect()
    }

    /// Count of samples per label.
    pub fn label_counts(&self) -> [usize; CLASSES] {
        let mut c = [0; CLASSES];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }
}

/// Big-endian IDX array: dimensions and raw unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX file holding unsigned bytes (type code `0x08`).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Config("not an IDX file: bad magic".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Config(format!(
            "unsupported IDX element type 0x{:02x}",
            bytes[2]
        )));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Config("truncated IDX header".into()));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|k| {
            let b = &bytes[4 + 4 * k..8 + 4 * k];
            u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    let data = &bytes[header..];
    if data.len() != count {
        return Err(Error::Config(format!(
            "IDX payload has {} bytes, header promises {count}",
            data.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: data.to_vec(),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes =
        fs::read(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_idx(&bytes)
}

/// Area-averaging resample of a `rows × cols` image to `side × side`.
pub fn downsample(pixels: &[u8], rows: usize, cols: usize, side: usize) -> Vec<f64> {
    let weights = |n: usize| -> Vec<Vec<(usize, f64)>> {
        let scale = n as f64 / side as f64;
        (0..side)
            .map(|o| {
                let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
                (a.floor() as usize..(b.ceil() as usize).min(n))
                    .map(|i| {
                        let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                        (i, overlap / scale)
                    })
                    .filter(|(_, w)| *w > 0.0)
                    .collect()
            })
            .collect()
    };
    let wr = weights(rows);
    let wc = weights(cols);
    let mut out = Vec::with_capacity(side * side);
    for r in &wr {
        for c in &wc {
            let mut v = 0.0;
            for (i, a) in r {
                for (j, b) in c {
                    v += a * b * pixels[i * cols + j] as f64;
                }
            }
            out.push(v / 255.0);
        }
    }
    out
}

/// Loads an IDX image/label pair, downsampled to 8×8 with features in `[0, 1]`.
pub fn load_idx_dataset(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() != 3 || lab.dims.len() != 1 {
        return Err(Error::Config(
            "expected a 3-d image array and a 1-d label array".into(),
        ));
    }
    let (n, rows, cols) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(Error::Config(format!(
            "{n} images but {} labels",
            lab.dims[0]
        )));
    }
    let n = limit.map_or(n, |l| l.min(n));
    let samples = (0..n)
        .map(|k| {
            let label = lab.data[k] as usize;
            if label >= CLASSES {
                return Err(Error::Config(format!("label {label} out of range")));
            }
            let px = &img.data[k * rows * cols..(k + 1) * rows * cols];
            Ok(Sample {
                features: downsample(px, rows, cols, IMAGE_SIDE),
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { samples })
}

const GLYPHS: [[&str; IMAGE_SIDE]; CLASSES] = [
    [
        "..####..", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.", ".##..##.",
        "..####..",
    ],
    [
        "...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...",
        ".######.",
    ],
    [
        "..####..", ".##..##.", ".....##.", "....##..", "...##...", "..##....", ".##.....",
        ".######.",
    ],
    [
        "..####..", ".##..##.", ".....##.", "...###..", ".....##.", ".....##.", ".##..##.",
        "..####..",
    ],
    [
        "....##..", "...###..", "..####..", ".##.##..", "##..##..", "#######.", "....##..",
        "....##..",
    ],
    [
        ".######.", ".##.....", ".##.....", ".#####..", ".....##.", ".....##.", ".##..##.",
        "..####..",
    ],
    [
        "..####..", ".##.....", ".##.....", ".#####..", ".##..##.", ".##..##.", ".##..##.",
        "..####..",
    ],
    [
        ".######.", ".....##.", "....##..", "....##..", "...##...", "...##...", "..##....",
        "..##....",
    ],
    [
        "..####..", ".##..##.", ".##..##.", "..####..", ".##..##.", ".##..##.", ".##..##.",
        "..####..",
    ],
    [
        "..####..", ".##..##.", ".##..##.", ".##..##.", "..#####.", ".....##.", ".....##.",
        "..####..",
    ],
];

fn glyph(label: usize) -> Vec<f64> {
    GLYPHS[label]
        .iter()
        .flat_map(|row| row.bytes().map(|b| if b == b'#' { 1.0 } else { 0.0 }))
        .collect()
}

/// Synthetic 8×8 digits: fixed glyphs shifted by up to one pixel, with random
/// stroke intensity, pixel dropout and additive Gaussian noise.
pub fn synthetic_digits(per_class: usize, seed: u64) -> Dataset {
    let mut rng = keyed_rng(seed, 0, SERVER, DrawKind::Dataset);
    let noise = Normal::new(0.0, 0.15).expect("valid noise deviation");
    let templates: Vec<Vec<f64>> = (0..CLASSES).map(glyph).collect();
    let mut samples = Vec::with_capacity(per_class * CLASSES);
    for k in 0..per_class * CLASSES {
        let label = k % CLASSES;
        let (dr, dc): (i64, i64) = (rng.random_range(-1..=1), rng.random_range(-1..=1));
        let gain = rng.random_range(0.6..1.0);
        let side = IMAGE_SIDE as i64;
        let mut features = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
        for r in 0..side {
            for c in 0..side {
                let (sr, sc) = (r - dr, c - dc);
                let mut v = if (0..side).contains(&sr) && (0..side).contains(&sc) {
                    templates[label][(sr * side + sc) as usize] * gain
                } else {
                    0.0
                };
                if rng.random::<f64>() < 0.05 {
                    v = 0.0;
                }
                v += noise.sample(&mut rng);
                features[(r * side + c) as usize] = v.clamp(0.0, 1.0);
            }
        }
        samples.push(Sample { features, label });
    }
    Dataset { samples }
}

/// How labels are spread over devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Every device sees every label in equal proportion.
    Homogeneous,
    /// Inner-disk devices hold labels 0–4, ring devices labels 5–9.
    Heterogeneous,
}

/// Training data held by one device.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    pub data: Dataset,
    pub ed_distance: f64,
    pub label_set: Vec<usize>,
}

/// Deals the samples of each label round-robin over `owners`.
fn deal(samples: Vec<Sample>, owners: &[usize], out: &mut [Vec<Sample>], rng: &mut impl Rng) {
    let mut by_label: Vec<Vec<Sample>> = vec![Vec::new(); CLASSES];
    for s in samples {
        by_label[s.label].push(s);
    }
    let mut turn = 0;
    for mut group in by_label {
        group.shuffle(rng);
        for s in group {
            out[owners[turn % owners.len()]].push(s);
            turn += 1;
        }
    }
}

/// Splits `full` over the devices of `deployment`. The result is a partition:
/// every sample goes to exactly one device.
pub fn partition_dataset(
    full: &Dataset,
    deployment: &Deployment,
    mode: DataMode,
    seed: u64,
) -> Result<Vec<LocalDataset>> {
    let k = deployment.len();
    if full.len() < k {
        return Err(Error::Config(format!(
            "{} samples cannot be spread over {k} devices",
            full.len()
        )));
    }
    let mut rng = keyed_rng(seed, 0, SERVER, DrawKind::Partition);
    let mut parts: Vec<Vec<Sample>> = vec![Vec::new(); k];
    let all: Vec<usize> = (0..CLASSES).collect();
    let label_sets: Vec<Vec<usize>> = match mode {
        DataMode::Homogeneous => {
            let owners: Vec<usize> = (0..k).collect();
            deal(full.samples.clone(), &owners, &mut parts, &mut rng);
            vec![all; k]
        }
        DataMode::Heterogeneous => {
            let inner: Vec<usize> = (0..k).filter(|i| deployment.is_inner(*i)).collect();
            let outer: Vec<usize> = (0..k).filter(|i| !deployment.is_inner(*i)).collect();
            if inner.is_empty() || outer.is_empty() {
                return Err(Error::Config(
                    "heterogeneous split needs devices both inside and outside r_max/sqrt(2)"
                        .into(),
                ));
            }
            let (low, high): (Vec<Sample>, Vec<Sample>) = full
                .samples
                .iter()
                .cloned()
                .partition(|s| s.label < CLASSES / 2);
            deal(low, &inner, &mut parts, &mut rng);
            deal(high, &outer, &mut parts, &mut rng);
            (0..k)
                .map(|i| {
                    if deployment.is_inner(i) {
                        (0..CLASSES / 2).collect()
                    } else {
                        (CLASSES / 2..CLASSES).collect()
                    }
                })
                .collect()
        }
    };
    Ok(parts
        .into_iter()
        .zip(label_sets)
        .zip(&deployment.ed_distances)
        .map(|((samples, label_set), d)| LocalDataset {
            data: Dataset { samples },
            ed_distance: *d,
            label_set,
        })
        .collect())
}
