//! Audio frame extraction from mono 16-bit PCM WAV files.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::DataMatrix;

/// Frames below this norm are considered silence and redrawn.
const FRAME_NORM_FLOOR: f64 = 1e-8;

/// Extracts `num_frames` frames of `frame_len` consecutive samples at
/// seeded uniform-random offsets, scaled to [-1, 1] by 1/32768.
///
/// Near-silent frames are redrawn, up to 100 * num_frames attempts in
/// total.
pub fn ingest_wav(
    path: &Path,
    frame_len: usize,
    num_frames: usize,
    seed: u64,
) -> Result<DataMatrix> {
    if frame_len == 0 || num_frames == 0 {
        return Err(Error::InvalidInput(
            "frame length and frame count must be positive".into(),
        ));
    }
    let samples = read_mono_pcm16(path)?;
    if samples.len() < frame_len {
        return Err(Error::InvalidInput(format!(
            "{}: {} samples, need at least {frame_len}",
            path.display(),
            samples.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = DMatrix::zeros(frame_len, num_frames);
    let max_offset = samples.len() - frame_len;
    let budget = num_frames.saturating_mul(100);
    let mut attempts = 0usize;
    let mut collected = 0usize;
    while collected < num_frames {
        if attempts >= budget {
            return Err(Error::InvalidInput(format!(
                "{}: could not find {num_frames} non-silent frames in {budget} draws",
                path.display()
            )));
        }
        attempts += 1;
        let offset = rng.gen_range(0..=max_offset);
        let frame = &samples[offset..offset + frame_len];
        let norm_sq: f64 = frame.iter().map(|v| v * v).sum();
        if norm_sq.sqrt() < FRAME_NORM_FLOOR {
            continue;
        }
        for (i, &v) in frame.iter().enumerate() {
            frames[(i, collected)] = v;
        }
        collected += 1;
    }
    DataMatrix::new(frames)
}

fn read_mono_pcm16(path: &Path) -> Result<Vec<f64>> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.sample_format != hound::SampleFormat::Int
        || spec.bits_per_sample != 16
    {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported WAV encoding ({} ch, {:?}, {} bit); need mono 16-bit PCM",
            path.display(),
            spec.channels,
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f64 / 32768.0)
                .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
        })
        .collect()
}
