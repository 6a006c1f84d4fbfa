use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::RawCapture;
use crate::error::{Error, Result};

/// Writes a capture as 32-bit float RIFF, one channel per microphone.
pub fn write_wav(capture: &RawCapture, path: impl AsRef<Path>) -> Result<()> {
    capture.validate()?;
    let spec = WavSpec {
        channels: capture.channels.len() as u16,
        sample_rate: capture.sample_rate as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for i in 0..capture.len() {
        for ch in &capture.channels {
            w.write_sample(ch[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a multichannel 32-bit float RIFF file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<RawCapture> {
    let mut r = WavReader::open(path)?;
    let spec = r.spec();
    if spec.sample_format != SampleFormat::Float || spec.bits_per_sample != 32 {
        return Err(Error::arg("capture files must be 32-bit float"));
    }
    let nch = spec.channels as usize;
    let mut channels = vec![Vec::new(); nch];
    for (i, s) in r.samples::<f32>().enumerate() {
        channels[i % nch].push(s? as f64);
    }
    RawCapture::new(spec.sample_rate as f64, channels)
}
