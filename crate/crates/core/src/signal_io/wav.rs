use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Recording;
use crate::error::{Error, Result};

fn format_err(path: &Path, e: hound::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Reads a 16-bit PCM or 32-bit float WAV file. Only the first channel is
/// kept. Integer samples are scaled by 1/32768; the result is divided by
/// its peak magnitude when that exceeds 1.
pub fn load_wav(path: &Path) -> Result<Recording> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = WavReader::new(BufReader::new(file)).map_err(|e| format_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let mut samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    }
    .map_err(|e| format_err(path, e))?;

    if samples.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no samples", path.display())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} contains NaN or infinite samples", path.display())));
    }
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        samples.iter_mut().for_each(|v| *v /= peak);
    }
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Recording::new(id, samples, spec.sample_rate))
}

/// Writes a mono 16-bit PCM WAV file; samples are clipped to the
/// representable range.
pub fn write_wav(path: &Path, rec: &Recording) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: rec.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let write_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => format_err(path, other),
    };
    let mut w = WavWriter::create(path, spec).map_err(write_err)?;
    for &v in &rec.samples {
        let q = (v * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(q).map_err(write_err)?;
    }
    w.finalize().map_err(write_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw<S: hound::Sample + Copy>(path: &Path, spec: WavSpec, data: &[S]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    fn spec(bits: u16, fmt: SampleFormat, channels: u16, rate: u32) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: fmt,
        }
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, spec(16, SampleFormat::Int, 1, 2000), &[0i16, 16384, -16384]);
        let r = load_wav(&p).unwrap();
        assert_eq!(r.samples, vec![0.0, 0.5, -0.5]);
        assert_eq!(r.sample_rate_hz, 2000);
        assert_eq!(r.id, "a");
    }

    #[test]
    fn float32_identity_and_peak_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        write_raw(&p, spec(32, SampleFormat::Float, 1, 1000), &[0.25f32]);
        assert_eq!(load_wav(&p).unwrap().samples, vec![0.25]);
        write_raw(&p, spec(32, SampleFormat::Float, 1, 1000), &[2.0f32, -1.0]);
        assert_eq!(load_wav(&p).unwrap().samples, vec![1.0, -0.5]);
    }

    #[test]
    fn first_channel_of_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, spec(16, SampleFormat::Int, 2, 1000), &[8192i16, -1, 16384, -1]);
        assert_eq!(load_wav(&p).unwrap().samples, vec![0.25, 0.5]);
    }

    #[test]
    fn malformed_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw(&p, spec(16, SampleFormat::Int, 1, 1000), &[1i16, 2, 3]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..20]).unwrap();
        let r = load_wav(&p);
        assert!(matches!(r, Err(Error::Format(_))), "{r:?}");

        write_raw(&p, spec(16, SampleFormat::Int, 1, 1000), &[] as &[i16]);
        assert!(matches!(load_wav(&p), Err(Error::EmptyInput(_))));

        write_raw(&p, spec(8, SampleFormat::Int, 1, 1000), &[1i8]);
        assert!(matches!(load_wav(&p), Err(Error::Format(_))));
    }

    #[test]
    fn pcm16_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.wav");
        let b = dir.path().join("b.wav");
        let data: Vec<i16> = (0..500).map(|i| ((i * 7919) % 65536 - 32768) as i16).collect();
        write_raw(&a, spec(16, SampleFormat::Int, 1, 4000), &data);
        let r = load_wav(&a).unwrap();
        write_wav(&b, &r).unwrap();
        let back: Vec<i16> = WavReader::open(&b).unwrap().samples::<i16>().map(|s| s.unwrap()).collect();
        assert_eq!(back, data);
    }
}
