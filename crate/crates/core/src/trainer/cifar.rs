//! CIFAR-10 binary batches: each record is one label byte followed by
//! 3072 pixel bytes (1024 red, 1024 green, 1024 blue, rows top to bottom).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, RngStream};
use crate::trainer::data::{Dataset, ImageShape};

pub const IMAGE_BYTES: usize = 3072;
pub const RECORD_BYTES: usize = IMAGE_BYTES + 1;
pub const NUM_CLASSES: usize = 10;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";
pub const CIFAR_SHAPE: ImageShape = ImageShape {
    channels: 3,
    height: 32,
    width: 32,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CifarRecord {
    pub label: u8,
    pub pixels: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct CifarOptions {
    /// Records each file must hold; the published batches hold 10000.
    pub records_per_file: usize,
    /// Keep at most this many training records per class.
    pub per_class: Option<usize>,
    pub val_fraction: f64,
    /// Drives subsampling and the validation split, independently of any
    /// training seed.
    pub split_seed: u64,
}

impl Default for CifarOptions {
    fn default() -> Self {
        Self {
            records_per_file: 10_000,
            per_class: None,
            val_fraction: 0.1,
            split_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cifar10 {
    pub train: Vec<CifarRecord>,
    pub val: Vec<CifarRecord>,
    /// Empty when the directory has no test batch.
    pub test: Vec<CifarRecord>,
}

impl Cifar10 {
    pub fn to_dataset(records: &[CifarRecord]) -> Dataset {
        let features = DenseMatrix::from_fn(records.len(), IMAGE_BYTES, |r, c| {
            records[r].pixels[c] as f64 / 255.0
        });
        Dataset {
            features,
            labels: records.iter().map(|r| r.label as usize).collect(),
            num_classes: NUM_CLASSES,
            image: Some(CIFAR_SHAPE),
        }
    }
}

/// Reads one batch file, failing on any size or label mismatch.
pub fn read_batch(path: &Path, records_per_file: usize) -> Result<Vec<CifarRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let expected = records_per_file * RECORD_BYTES;
    if bytes.len() != expected {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            if rec[0] as usize >= NUM_CLASSES {
                return Err(Error::Ingestion {
                    path: path.to_path_buf(),
                    reason: format!("record {i} has label {}", rec[0]),
                });
            }
            Ok(CifarRecord {
                label: rec[0],
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

pub fn load_cifar10(dir: &Path, opts: &CifarOptions) -> Result<Cifar10> {
    if !(0.0..1.0).contains(&opts.val_fraction) {
        return Err(Error::config("validation fraction must lie in [0, 1)"));
    }
    let mut all = Vec::new();
    for name in TRAIN_FILES {
        all.extend(read_batch(&dir.join(name), opts.records_per_file)?);
    }
    let test_path: PathBuf = dir.join(TEST_FILE);
    let test = if test_path.exists() {
        read_batch(&test_path, opts.records_per_file)?
    } else {
        Vec::new()
    };

    let root = RngStream::new(opts.split_seed);
    if let Some(k) = opts.per_class {
        let mut order = root.fork(0).permutation(all.len());
        let mut seen = [0usize; NUM_CLASSES];
        order.retain(|&i| {
            let c = all[i].label as usize;
            seen[c] += 1;
            seen[c] <= k
        });
        order.sort_unstable();
        all = order.into_iter().map(|i| all[i].clone()).collect();
    }

    let perm = root.fork(1).permutation(all.len());
    let n_val = (opts.val_fraction * all.len() as f64).round() as usize;
    let mut is_val = vec![false; all.len()];
    for &i in &perm[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = all
        .into_iter()
        .zip(is_val)
        .partition(|(_, v)| *v);
    Ok(Cifar10 {
        train: train.into_iter().map(|(r, _)| r).collect(),
        val: val.into_iter().map(|(r, _)| r).collect(),
        test,
    })
}
