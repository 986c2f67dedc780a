use std::f64::consts::PI;
use std::io::Cursor;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PIPELINE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{0}")]
    Decode(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid audio: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleQuality {
    Linear,
    #[default]
    Sinc,
}

/// Interleaved signed 16-bit PCM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioBlob {
    pub samples: Vec<i16>,
    pub sample_rate_hz: u32,
    pub channels: u16,
}

impl AudioBlob {
    pub fn new(samples: Vec<i16>, sample_rate_hz: u32, channels: u16) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 || channels == 0 {
            return Err(AudioError::Invalid(
                "sample rate and channel count must be positive".into(),
            ));
        }
        if !samples.len().is_multiple_of(channels as usize) {
            return Err(AudioError::Invalid(
                "sample count is not a multiple of the channel count".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            channels,
        })
    }

    pub fn mono16k(samples: Vec<i16>) -> Self {
        Self {
            samples,
            sample_rate_hz: PIPELINE_RATE,
            channels: 1,
        }
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate_hz as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_pipeline_format(&self) -> bool {
        self.channels == 1 && self.sample_rate_hz == PIPELINE_RATE
    }

    /// Channel average, rounded to nearest.
    pub fn to_mono(&self) -> AudioBlob {
        if self.channels == 1 {
            return self.clone();
        }
        let c = self.channels as usize;
        let samples = self
            .samples
            .chunks_exact(c)
            .map(|frame| {
                let sum: i64 = frame.iter().map(|&s| s as i64).sum();
                (sum as f64 / c as f64).round() as i16
            })
            .collect();
        AudioBlob {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            channels: 1,
        }
    }

    /// Resamples a mono signal; multichannel input is downmixed first.
    pub fn resample(&self, target_hz: u32, quality: ResampleQuality) -> AudioBlob {
        let mono = self.to_mono();
        if mono.sample_rate_hz == target_hz {
            return mono;
        }
        let x: Vec<f64> = mono.samples.iter().map(|&s| s as f64).collect();
        let y = match quality {
            ResampleQuality::Linear => resample_linear(&x, mono.sample_rate_hz, target_hz),
            ResampleQuality::Sinc => resample_sinc(&x, mono.sample_rate_hz, target_hz),
        };
        AudioBlob {
            samples: y.into_iter().map(to_i16).collect(),
            sample_rate_hz: target_hz,
            channels: 1,
        }
    }

    /// Mono 16 kHz; conformant input is returned unchanged.
    pub fn standardize(&self, quality: ResampleQuality) -> AudioBlob {
        if self.is_pipeline_format() {
            return self.clone();
        }
        self.resample(PIPELINE_RATE, quality)
    }

    /// Frames `[start, end)` by time, clamped to the signal.
    pub fn slice_s(&self, start_s: f64, end_s: f64) -> &[i16] {
        let c = self.channels as usize;
        let rate = self.sample_rate_hz as f64;
        let a = ((start_s * rate).round().max(0.0) as usize).min(self.frames());
        let b = ((end_s * rate).round().max(0.0) as usize).clamp(a, self.frames());
        &self.samples[a * c..b * c]
    }

    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: self.channels,
            sample_rate: self.sample_rate_hz,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
            let mut i16w = w.get_i16_writer(self.samples.len() as u32);
            for &s in &self.samples {
                i16w.write_sample(s);
            }
            i16w.flush().expect("in-memory write");
            w.finalize().expect("in-memory finalize");
        }
        cursor.into_inner()
    }

    /// Decodes integer PCM of 8–32 bits or 32-bit float into 16-bit samples.
    pub fn from_wav_bytes(bytes: &[u8]) -> Result<AudioBlob, AudioError> {
        let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(|e| AudioError::Decode(e.to_string()))?;
        decode_reader(reader)
    }

    pub fn read_wav(path: &Path) -> Result<AudioBlob, AudioError> {
        let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_wav_bytes(&bytes).map_err(|e| AudioError::Decode(format!("{}: {e}", path.display())))
    }

    pub fn write_wav(&self, path: &Path) -> Result<Vec<u8>, AudioError> {
        let bytes = self.to_wav_bytes();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| AudioError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        std::fs::write(path, &bytes).map_err(|source| AudioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(bytes)
    }
}

fn decode_reader<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<AudioBlob, AudioError> {
    let spec = reader.spec();
    let err = |e: hound::Error| AudioError::Decode(e.to_string());
    let samples: Vec<i16> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader.into_samples::<i16>().collect::<Result<_, _>>().map_err(err)?,
        (hound::SampleFormat::Int, bits) if bits <= 32 => {
            let shift = bits as i32 - 16;
            reader
                .into_samples::<i32>()
                .map(|s| {
                    s.map(|v| {
                        if shift >= 0 {
                            (v >> shift) as i16
                        } else {
                            (v << -shift) as i16
                        }
                    })
                })
                .collect::<Result<_, _>>()
                .map_err(err)?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| to_i16(v as f64 * 32768.0)))
            .collect::<Result<_, _>>()
            .map_err(err)?,
        (fmt, bits) => return Err(AudioError::Decode(format!("unsupported sample format {fmt:?}/{bits}"))),
    };
    AudioBlob::new(samples, spec.sample_rate, spec.channels)
}

fn to_i16(v: f64) -> i16 {
    v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

fn output_len(n: usize, from: u32, to: u32) -> usize {
    ((n as u128 * to as u128 + from as u128 / 2) / from as u128) as usize
}

pub fn resample_linear(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    let n_out = output_len(x.len(), from, to);
    let step = from as f64 / to as f64;
    (0..n_out)
        .map(|n| {
            let t = n as f64 * step;
            let i = t.floor() as usize;
            let frac = t - i as f64;
            let a = x.get(i).copied().unwrap_or(0.0);
            let b = x.get(i + 1).copied().unwrap_or(a);
            a + (b - a) * frac
        })
        .collect()
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;

/// Blackman-windowed sinc interpolation with the cutoff at the lower
/// Nyquist frequency, normalized to unit DC gain.
pub fn resample_sinc(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    let n_out = output_len(x.len(), from, to);
    let ratio = to as f64 / from as f64;
    let cutoff = ratio.min(1.0) * 0.95;
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    (0..n_out)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = (t - half_width).ceil().max(0.0) as usize;
            let hi = ((t + half_width).floor() as usize).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (k, &xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                let w = blackman(d / half_width) * sinc(cutoff * d);
                acc += xk * w;
                wsum += w;
            }
            if wsum.abs() > 1e-12 {
                acc / wsum
            } else {
                0.0
            }
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman window over `u ∈ [-1, 1]`.
fn blackman(u: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    let p = PI * (u + 1.0);
    0.42 - 0.5 * p.cos() + 0.08 * (2.0 * p).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(rate: u32, secs: f64, hz: f64, channels: u16) -> AudioBlob {
        let n = (rate as f64 * secs) as usize;
        let mut s = Vec::with_capacity(n * channels as usize);
        for i in 0..n {
            let v = (8000.0 * (2.0 * PI * hz * i as f64 / rate as f64).sin()) as i16;
            for _ in 0..channels {
                s.push(v);
            }
        }
        AudioBlob::new(s, rate, channels).unwrap()
    }

    #[test]
    fn stereo_44k1_to_mono_16k_length() {
        let a = tone(44_100, 10.0, 440.0, 2);
        for q in [ResampleQuality::Linear, ResampleQuality::Sinc] {
            let b = a.standardize(q);
            assert!(b.is_pipeline_format());
            assert!((b.samples.len() as i64 - 160_000).abs() <= 1);
        }
    }

    #[test]
    fn conformant_audio_passes_through() {
        let a = tone(16_000, 1.0, 300.0, 1);
        assert_eq!(a.standardize(ResampleQuality::Sinc), a);
    }

    #[test]
    fn sinc_preserves_a_low_tone() {
        let a = tone(24_000, 1.0, 440.0, 1);
        let b = a.resample(16_000, ResampleQuality::Sinc);
        let expect = tone(16_000, 1.0, 440.0, 1);
        let mid = 4000..12000;
        let err: f64 = b.samples[mid.clone()]
            .iter()
            .zip(&expect.samples[mid.clone()])
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum::<f64>()
            / mid.len() as f64;
        assert!(err.sqrt() < 80.0, "rms error {}", err.sqrt());
    }

    #[test]
    fn wav_round_trip_and_corrupt_header() {
        let a = tone(16_000, 0.5, 200.0, 1);
        let bytes = a.to_wav_bytes();
        assert_eq!(AudioBlob::from_wav_bytes(&bytes).unwrap(), a);
        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(b"JUNK");
        assert!(matches!(AudioBlob::from_wav_bytes(&bad), Err(AudioError::Decode(_))));
    }

    #[test]
    fn float_wav_decodes() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut cur = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cur, spec).unwrap();
            for v in [0.0f32, 0.5, -0.5] {
                w.write_sample(v).unwrap();
            }
            w.finalize().unwrap();
        }
        let a = AudioBlob::from_wav_bytes(&cur.into_inner()).unwrap();
        assert_eq!(a.samples, vec![0, 16384, -16384]);
    }

    #[test]
    fn slicing_by_time() {
        let a = tone(16_000, 2.0, 100.0, 1);
        assert_eq!(a.slice_s(0.5, 1.0).len(), 8000);
        assert_eq!(a.slice_s(1.5, 9.0).len(), 8000);
    }
}
