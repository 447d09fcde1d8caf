//! Mono 8 kHz WAV files, 16-bit PCM or 32-bit IEEE float.

use std::path::Path;

use hound::{SampleFormat, WavSpec};
use serde::{Deserialize, Serialize};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    Pcm16,
    Float32,
}

fn wav_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(
            path,
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(wav_err(
            path,
            format!("expected {SAMPLE_RATE} Hz, found {} Hz", spec.sample_rate),
        ));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(wav_err(
                path,
                format!("unsupported encoding: {bits}-bit {fmt:?} (expected 16-bit PCM or 32-bit float)"),
            ))
        }
    }
    .map_err(|e| wav_err(path, e.to_string()))?;
    if samples.is_empty() {
        return Err(wav_err(path, "file contains no samples"));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Quantises to 16 bits: round half away from zero, then clamp.
pub fn to_pcm16(v: f64) -> i16 {
    (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let err = |e: hound::Error| wav_err(path, e.to_string());
    let mut writer = hound::WavWriter::create(path, spec).map_err(err)?;
    for &v in wave.samples() {
        match format {
            WavFormat::Pcm16 => writer.write_sample(to_pcm16(v)),
            WavFormat::Float32 => writer.write_sample(v as f32),
        }
        .map_err(err)?;
    }
    writer.finalize().map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm_rounding_and_clamping() {
        assert_eq!(to_pcm16(0.5 / 32768.0), 1);
        assert_eq!(to_pcm16(-0.5 / 32768.0), -1);
        assert_eq!(to_pcm16(1.0), 32767);
        assert_eq!(to_pcm16(-1.5), -32768);
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..100).map(|i| ((i as f32) * 0.013).sin() as f64).collect();
        let w = Waveform::from_samples(samples).unwrap();
        write_wav(&path, &w, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), w);
    }

    #[test]
    fn pcm_round_trip_within_quantum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let w = Waveform::from_samples((0..500).map(|i| (i as f64 * 0.07).sin() * 0.9).collect()).unwrap();
        write_wav(&path, &w, WavFormat::Pcm16).unwrap();
        let r = read_wav(&path).unwrap();
        let worst = w
            .samples()
            .iter()
            .zip(r.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0);
    }

    #[test]
    fn empty_and_foreign_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.wav");
        std::fs::write(&empty, b"").unwrap();
        assert!(read_wav(&empty).is_err());

        let no_samples = dir.path().join("none.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        hound::WavWriter::create(&no_samples, spec).unwrap().finalize().unwrap();
        assert!(read_wav(&no_samples).is_err());

        let stereo = dir.path().join("stereo.wav");
        let mut w = hound::WavWriter::create(&stereo, WavSpec { channels: 2, ..spec }).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&stereo).unwrap_err().to_string().contains("mono"));

        let fast = dir.path().join("fast.wav");
        let mut w = hound::WavWriter::create(
            &fast,
            WavSpec {
                sample_rate: 16000,
                ..spec
            },
        )
        .unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&fast).unwrap_err().to_string().contains("8000"));

        let wide = dir.path().join("wide.wav");
        let mut w = hound::WavWriter::create(
            &wide,
            WavSpec {
                bits_per_sample: 24,
                ..spec
            },
        )
        .unwrap();
        w.write_sample(0i32).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&wide).unwrap_err().to_string().contains("unsupported"));
    }
}
