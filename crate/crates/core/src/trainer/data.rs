use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::imaging::{bicubic_resize, load_png, ColorSpace, ImageTensor};
use crate::models::stack_images;

use super::TrainerError;

/// An LR image and the HR image exactly 4× its size.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    pub name: String,
    pub lr: ImageTensor,
    pub hr: ImageTensor,
}

impl TrainingPair {
    /// Crops `hr` to a multiple of 4 and derives the LR image by bicubic ¼.
    pub fn from_hr(name: impl Into<String>, hr: &ImageTensor) -> Result<Self, TrainerError> {
        let (h, w) = (hr.height() / 4 * 4, hr.width() / 4 * 4);
        if h == 0 || w == 0 {
            return Err(TrainerError::Undersized(format!("{}x{} HR image", hr.height(), hr.width())));
        }
        let hr = hr.crop(0, 0, h, w);
        let lr = bicubic_resize(&hr, 0.25)?;
        Ok(Self { name: name.into(), lr, hr })
    }

    pub fn new(name: impl Into<String>, lr: ImageTensor, hr: ImageTensor) -> Result<Self, TrainerError> {
        let name = name.into();
        if (hr.height(), hr.width()) != (4 * lr.height(), 4 * lr.width()) {
            return Err(TrainerError::Undersized(format!(
                "{name}: HR {}x{} is not 4x LR {}x{}",
                hr.height(),
                hr.width(),
                lr.height(),
                lr.width()
            )));
        }
        if lr.colorspace() != ColorSpace::Rgb || hr.colorspace() != ColorSpace::Rgb {
            return Err(TrainerError::Config(format!("{name}: training images must be RGB")));
        }
        Ok(Self { name, lr, hr })
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pairs: Vec<TrainingPair>,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, TrainerError> {
    let entries = std::fs::read_dir(dir).map_err(|source| TrainerError::Io { path: dir.into(), source })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| TrainerError::Io { path: dir.into(), source })?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

impl Dataset {
    pub fn new(pairs: Vec<TrainingPair>) -> Result<Self, TrainerError> {
        if pairs.is_empty() {
            return Err(TrainerError::EmptyDataset);
        }
        Ok(Self { pairs })
    }

    /// Reads `dir/HR/*.png`; LR images come from `dir/LR/<same name>` when
    /// that directory exists, otherwise from bicubic ¼ downsampling.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, TrainerError> {
        let dir = dir.as_ref();
        let lr_dir = dir.join("LR");
        let mut pairs = Vec::new();
        for path in png_files(&dir.join("HR"))? {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let hr = load_png(&path)?;
            let pair = if lr_dir.is_dir() {
                TrainingPair::new(name.clone(), load_png(lr_dir.join(&name))?, hr)?
            } else {
                TrainingPair::from_hr(name, &hr)?
            };
            pairs.push(pair);
        }
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[TrainingPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Fails unless every LR image fits a `patch`×`patch` crop.
    pub fn check_patch(&self, patch: usize) -> Result<(), TrainerError> {
        match self.pairs.iter().find(|p| p.lr.height() < patch || p.lr.width() < patch) {
            Some(p) => Err(TrainerError::Undersized(format!(
                "{}: LR {}x{} is smaller than the {patch}px patch",
                p.name,
                p.lr.height(),
                p.lr.width()
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CropPair {
    pub lr: ImageTensor,
    pub hr: ImageTensor,
    /// LR offset `(top, left)`; the HR offset is 4× this.
    pub offset: (usize, usize),
}

/// Uniformly random `patch`×`patch` LR crop and the aligned 4× HR crop.
pub fn crop_pair(
    lr: &ImageTensor,
    hr: &ImageTensor,
    patch: usize,
    rng: &mut impl Rng,
) -> Result<CropPair, TrainerError> {
    if (hr.height(), hr.width()) != (4 * lr.height(), 4 * lr.width()) {
        return Err(TrainerError::Undersized(format!(
            "HR {}x{} is not 4x LR {}x{}",
            hr.height(),
            hr.width(),
            lr.height(),
            lr.width()
        )));
    }
    if patch == 0 || lr.height() < patch || lr.width() < patch {
        return Err(TrainerError::Undersized(format!(
            "LR {}x{} cannot hold a {patch}px patch",
            lr.height(),
            lr.width()
        )));
    }
    let top = rng.random_range(0..=lr.height() - patch);
    let left = rng.random_range(0..=lr.width() - patch);
    Ok(crop_at(lr, hr, patch, (top, left)))
}

/// The crop pair at a given LR offset.
pub fn crop_at(lr: &ImageTensor, hr: &ImageTensor, patch: usize, (top, left): (usize, usize)) -> CropPair {
    CropPair {
        lr: lr.crop(top, left, patch, patch),
        hr: hr.crop(4 * top, 4 * left, 4 * patch, 4 * patch),
        offset: (top, left),
    }
}

/// `(B, 3, p, p)` LR and `(B, 3, 4p, 4p)` HR crops.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub lr: Tensor,
    pub hr: Tensor,
}

/// Draws batches from a seeded sampler over (image, offset).
pub struct BatchSampler {
    data: Arc<Dataset>,
    patch: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(data: Arc<Dataset>, patch: usize, batch: usize, seed: u64) -> Result<Self, TrainerError> {
        if data.is_empty() {
            return Err(TrainerError::EmptyDataset);
        }
        data.check_patch(patch)?;
        Ok(Self { data, patch, batch, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn next_batch(&mut self) -> Result<Batch, TrainerError> {
        let mut lrs = Vec::with_capacity(self.batch);
        let mut hrs = Vec::with_capacity(self.batch);
        for _ in 0..self.batch {
            let pair = &self.data.pairs[self.rng.random_range(0..self.data.len())];
            let crop = crop_pair(&pair.lr, &pair.hr, self.patch, &mut self.rng)?;
            lrs.push(crop.lr);
            hrs.push(crop.hr);
        }
        Ok(Batch { lr: stack_images(&lrs)?, hr: stack_images(&hrs)? })
    }
}

/// A [`BatchSampler`] running on a worker thread, `depth` batches ahead,
/// delivering in order through a bounded channel. The consumed sequence is
/// the sampler's sequence regardless of timing.
pub struct BatchStream {
    rx: Option<Receiver<Result<Batch, TrainerError>>>,
    worker: Option<JoinHandle<()>>,
}

impl BatchStream {
    pub fn spawn(mut sampler: BatchSampler, count: usize, depth: usize) -> Self {
        let (tx, rx) = sync_channel(depth.max(1));
        let worker = std::thread::spawn(move || {
            for _ in 0..count {
                let batch = sampler.next_batch();
                let failed = batch.is_err();
                if tx.send(batch).is_err() || failed {
                    return;
                }
            }
        });
        Self { rx: Some(rx), worker: Some(worker) }
    }

    pub fn next_batch(&mut self) -> Result<Batch, TrainerError> {
        self.rx
            .as_ref()
            .and_then(|rx| rx.recv().ok())
            .unwrap_or_else(|| Err(TrainerError::Config("batch stream exhausted".into())))
    }
}

impl Drop for BatchStream {
    fn drop(&mut self) {
        // closing the receiver unblocks a worker waiting on a full queue
        drop(self.rx.take());
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
