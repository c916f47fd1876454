//! Fixed audio format carried in segment payloads: RIFF/WAVE, 16 kHz, mono,
//! 16-bit little-endian PCM with the canonical 44-byte header.

pub const SAMPLE_RATE: u32 = 16_000;
pub const CHANNELS: u16 = 1;
pub const BITS_PER_SAMPLE: u16 = 16;
pub const HEADER_LEN: usize = 44;
const BYTES_PER_SAMPLE: usize = 2;
const SAMPLES_PER_MS: u64 = SAMPLE_RATE as u64 / 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AudioError {
    #[error("payload shorter than the {HEADER_LEN}-byte WAV header")]
    TooShort,
    #[error("not a RIFF/WAVE payload")]
    NotWave,
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("data chunk length {declared} does not match payload ({actual} bytes)")]
    LengthMismatch { declared: usize, actual: usize },
}

/// Wrap little-endian samples into a WAV payload.
pub fn encode_wav(samples: &[i16]) -> Vec<u8> {
    let mut out = wav_header(samples.len());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Header for `sample_count` samples, with room reserved for the data.
fn wav_header(sample_count: usize) -> Vec<u8> {
    let data_len = sample_count * BYTES_PER_SAMPLE;
    let mut out = Vec::with_capacity(HEADER_LEN + data_len);
    let byte_rate = SAMPLE_RATE * u32::from(CHANNELS) * u32::from(BITS_PER_SAMPLE) / 8;
    let block_align = CHANNELS * BITS_PER_SAMPLE / 8;
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&CHANNELS.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&BITS_PER_SAMPLE.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    out
}

/// Validate a payload against the fixed format and return its PCM bytes.
pub fn pcm_data(payload: &[u8]) -> Result<&[u8], AudioError> {
    if payload.len() < HEADER_LEN {
        return Err(AudioError::TooShort);
    }
    if &payload[0..4] != b"RIFF" || &payload[8..12] != b"WAVE" || &payload[12..16] != b"fmt " {
        return Err(AudioError::NotWave);
    }
    let u16_at = |i: usize| u16::from_le_bytes([payload[i], payload[i + 1]]);
    let u32_at =
        |i: usize| u32::from_le_bytes([payload[i], payload[i + 1], payload[i + 2], payload[i + 3]]);
    if u32_at(16) != 16 || u16_at(20) != 1 {
        return Err(AudioError::UnsupportedFormat(
            "expected 16-byte PCM fmt chunk".into(),
        ));
    }
    if u16_at(22) != CHANNELS || u32_at(24) != SAMPLE_RATE || u16_at(34) != BITS_PER_SAMPLE {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} ch, {} Hz, {} bit",
            u16_at(22),
            u32_at(24),
            u16_at(34)
        )));
    }
    if &payload[36..40] != b"data" {
        return Err(AudioError::NotWave);
    }
    let declared = u32_at(40) as usize;
    let actual = payload.len() - HEADER_LEN;
    if declared != actual || !actual.is_multiple_of(BYTES_PER_SAMPLE) {
        return Err(AudioError::LengthMismatch { declared, actual });
    }
    Ok(&payload[HEADER_LEN..])
}

/// Playback duration of a PCM byte count, rounded to the nearest millisecond.
pub fn duration_ms_for_pcm_len(pcm_len: usize) -> u64 {
    let samples = (pcm_len / BYTES_PER_SAMPLE) as u64;
    (samples + SAMPLES_PER_MS / 2) / SAMPLES_PER_MS
}

/// Duration of a complete payload in milliseconds.
pub fn payload_duration_ms(payload: &[u8]) -> Result<u64, AudioError> {
    pcm_data(payload).map(|pcm| duration_ms_for_pcm_len(pcm.len()))
}

pub fn samples_for_ms(ms: u64) -> usize {
    (ms * SAMPLES_PER_MS) as usize
}

/// Silence of `duration_ms` opened by a short 1 kHz square-wave marker.
///
/// Used by the mock voice and the local fallback voice; bit-identical across
/// platforms because it involves no floating point.
pub fn beep_marked_silence(duration_ms: u64) -> Vec<u8> {
    let total = samples_for_ms(duration_ms);
    let marker = samples_for_ms(10).min(total);
    let mut out = wav_header(total);
    for i in 0..marker {
        let s: i16 = if (i / 8) % 2 == 0 { 4000 } else { -4000 };
        out.extend_from_slice(&s.to_le_bytes());
    }
    // Written in one block: long silent payloads are common in sweeps.
    out.resize(HEADER_LEN + total * BYTES_PER_SAMPLE, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoded_payload_parses_back() {
        let wav = encode_wav(&[1, -2, 3]);
        assert_eq!(wav.len(), HEADER_LEN + 6);
        assert_eq!(pcm_data(&wav).unwrap(), &[1, 0, 254, 255, 3, 0]);
    }

    #[test]
    fn duration_matches_sample_count() {
        let wav = beep_marked_silence(2400);
        assert_eq!(payload_duration_ms(&wav).unwrap(), 2400);
        assert_eq!(payload_duration_ms(&beep_marked_silence(60)).unwrap(), 60);
        assert_eq!(payload_duration_ms(&encode_wav(&[])).unwrap(), 0);
    }

    #[test]
    fn rejects_wrong_rate_and_truncation() {
        let mut wav = encode_wav(&[0; 16]);
        wav[24..28].copy_from_slice(&44_100u32.to_le_bytes());
        assert!(matches!(
            pcm_data(&wav),
            Err(AudioError::UnsupportedFormat(_))
        ));

        let wav = encode_wav(&[0; 16]);
        assert!(matches!(
            pcm_data(&wav[..wav.len() - 2]),
            Err(AudioError::LengthMismatch { .. })
        ));
        assert_eq!(pcm_data(&wav[..10]), Err(AudioError::TooShort));
    }
}
