//! Minimal RIFF/WAVE codec: PCM16 and IEEE float32, mono or stereo.

use std::path::Path;

use log::warn;

use super::{AudioClip, AudioError, EXPECTED_SAMPLE_RATE};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Decoded, downmixed WAV payload.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

#[derive(Debug, Clone, Copy)]
enum Codec {
    Pcm16,
    Float32,
}

struct Fmt {
    codec: Codec,
    channels: u16,
    sample_rate: u32,
    block_align: usize,
}

fn parse_err(offset: usize, reason: impl Into<String>) -> AudioError {
    AudioError::Parse { offset, reason: reason.into() }
}

fn u16_at(b: &[u8], off: usize) -> Result<u16, AudioError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| parse_err(off, "unexpected end of data"))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32, AudioError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| parse_err(off, "unexpected end of data"))
}

fn parse_fmt(body: &[u8], base: usize) -> Result<Fmt, AudioError> {
    if body.len() < 16 {
        return Err(parse_err(base, format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut tag = u16_at(body, 0)?;
    let channels = u16_at(body, 2)?;
    let sample_rate = u32_at(body, 4)?;
    let block_align = u16_at(body, 12)? as usize;
    let bits = u16_at(body, 14)?;
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(parse_err(base, "extensible fmt chunk without sub-format"));
        }
        tag = u16_at(body, 24)?;
    }
    let codec = match (tag, bits) {
        (FORMAT_PCM, 16) => Codec::Pcm16,
        (FORMAT_FLOAT, 32) => Codec::Float32,
        (t, b) => return Err(AudioError::UnsupportedFormat(format!("format tag {t:#06x} with {b} bits per sample"))),
    };
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedFormat(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(parse_err(base + 4, "sample rate is zero"));
    }
    let expected_align = channels as usize * (bits as usize / 8);
    if block_align != expected_align {
        return Err(parse_err(base + 12, format!("block align {block_align}, expected {expected_align}")));
    }
    Ok(Fmt { codec, channels, sample_rate, block_align })
}

/// Decodes a complete WAV byte stream. Stereo is averaged to mono and PCM16 is
/// scaled by 1/32768. Unknown chunks are skipped.
pub fn decode_wav(bytes: &[u8]) -> Result<WavData, AudioError> {
    if bytes.len() < 12 {
        return Err(parse_err(0, "shorter than RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(parse_err(0, "missing RIFF signature"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(parse_err(8, "missing WAVE form type"));
    }
    let riff_end = (8usize.saturating_add(u32_at(bytes, 4)? as usize)).min(bytes.len());
    let mut off = 12;
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<(usize, &[u8])> = None;
    while off + 8 <= riff_end {
        let id = &bytes[off..off + 4];
        let size = u32_at(bytes, off + 4)? as usize;
        let body_start = off + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| parse_err(off + 4, format!("chunk size {size} overruns file")))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body, body_start)?),
            b"data" => {
                if fmt.is_none() {
                    return Err(parse_err(off, "data chunk before fmt chunk"));
                }
                data = Some((body_start, body));
            }
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        // chunks are padded to even length
        off = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| parse_err(off, "missing fmt chunk"))?;
    let (data_off, data) = data.ok_or_else(|| parse_err(off, "missing data chunk"))?;
    if data.len() % fmt.block_align != 0 {
        return Err(parse_err(data_off, format!("data length {} not a multiple of block align {}", data.len(), fmt.block_align)));
    }
    let frames = data.len() / fmt.block_align;
    if frames == 0 {
        return Err(parse_err(data_off, "no samples"));
    }
    let ch = fmt.channels as usize;
    let mut samples = Vec::with_capacity(frames);
    for (f, block) in data.chunks_exact(fmt.block_align).enumerate() {
        let mut acc = 0.0;
        for c in 0..ch {
            acc += match fmt.codec {
                Codec::Pcm16 => f64::from(i16::from_le_bytes([block[2 * c], block[2 * c + 1]])) / 32768.0,
                Codec::Float32 => {
                    let v = f32::from_le_bytes([block[4 * c], block[4 * c + 1], block[4 * c + 2], block[4 * c + 3]]);
                    if !v.is_finite() {
                        return Err(parse_err(data_off + f * fmt.block_align + 4 * c, "non-finite float sample"));
                    }
                    f64::from(v)
                }
            };
        }
        samples.push(acc / ch as f64);
    }
    Ok(WavData { samples, sample_rate: fmt.sample_rate, channels: fmt.channels })
}

/// Reads a WAV file. The clip's cough id is the path; patient and label are
/// left for the caller to fill in.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io { path: path.to_path_buf(), source })?;
    let wav = decode_wav(&bytes)?;
    if wav.sample_rate != EXPECTED_SAMPLE_RATE {
        warn!("{}: sample rate {} Hz (expected {EXPECTED_SAMPLE_RATE}); frame sizes stay in samples", path.display(), wav.sample_rate);
    }
    let mut clip = AudioClip::new(wav.samples, wav.sample_rate);
    clip.cough_id = path.display().to_string();
    Ok(clip)
}

fn header(channels: u16, sample_rate: u32, format: u16, bits: u16, data_len: usize) -> Vec<u8> {
    let block_align = channels * bits / 8;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    out
}

/// Encodes interleaved 16-bit samples.
pub fn encode_wav_pcm16(interleaved: &[i16], channels: u16, sample_rate: u32) -> Vec<u8> {
    let mut out = header(channels, sample_rate, FORMAT_PCM, 16, interleaved.len() * 2);
    for s in interleaved {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Encodes interleaved float samples.
pub fn encode_wav_f32(interleaved: &[f32], channels: u16, sample_rate: u32) -> Vec<u8> {
    let mut out = header(channels, sample_rate, FORMAT_FLOAT, 32, interleaved.len() * 4);
    for s in interleaved {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Writes mono amplitudes in `[-1, 1]` as PCM16 (`round(x * 32768)`, clamped).
pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<(), AudioError> {
    let pcm: Vec<i16> = samples.iter().map(|&x| (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16).collect();
    let path = path.as_ref();
    std::fs::write(path, encode_wav_pcm16(&pcm, 1, sample_rate))
        .map_err(|source| AudioError::Io { path: path.to_path_buf(), source })
}
