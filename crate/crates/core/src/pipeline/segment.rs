use serde::{Deserialize, Serialize};

use crate::guardrails::splitter::{sentences, split_spans};
use crate::text::char_len;

pub const DEFAULT_MIN_SEGMENT_CHARS: usize = 20;
pub const DEFAULT_MAX_SEGMENT_CHARS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentParams {
    pub min_segment_chars: usize,
    pub max_segment_chars: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            min_segment_chars: DEFAULT_MIN_SEGMENT_CHARS,
            max_segment_chars: DEFAULT_MAX_SEGMENT_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("min_segment_chars {min} exceeds max_segment_chars {max}")]
pub struct InvalidSegmentParams {
    pub min: usize,
    pub max: usize,
}

impl SegmentParams {
    pub fn new(
        min_segment_chars: usize,
        max_segment_chars: usize,
    ) -> Result<Self, InvalidSegmentParams> {
        let p = SegmentParams {
            min_segment_chars,
            max_segment_chars,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), InvalidSegmentParams> {
        if self.min_segment_chars > self.max_segment_chars {
            return Err(InvalidSegmentParams {
                min: self.min_segment_chars,
                max: self.max_segment_chars,
            });
        }
        Ok(())
    }
}

/// Greedy sentence packer shared by batch and streaming segmentation.
///
/// A sentence that would push the pending segment past `max` flushes it
/// first; the pending segment flushes as soon as it reaches `min`.
#[derive(Debug, Clone)]
pub struct SegmentBuilder {
    params: SegmentParams,
    pending: String,
}

impl SegmentBuilder {
    pub fn new(params: SegmentParams) -> Self {
        SegmentBuilder {
            params,
            pending: String::new(),
        }
    }

    pub fn push(&mut self, sentence: &str) -> Vec<String> {
        let mut out = Vec::new();
        if sentence.is_empty() {
            return out;
        }
        if !self.pending.is_empty()
            && char_len(&self.pending) + 1 + char_len(sentence) > self.params.max_segment_chars
        {
            out.push(std::mem::take(&mut self.pending));
        }
        if !self.pending.is_empty() {
            self.pending.push(' ');
        }
        self.pending.push_str(sentence);
        if char_len(&self.pending) >= self.params.min_segment_chars {
            out.push(std::mem::take(&mut self.pending));
        }
        out
    }

    pub fn finish(&mut self) -> Option<String> {
        (!self.pending.is_empty()).then(|| std::mem::take(&mut self.pending))
    }
}

/// Split guarded text into speakable segments.
pub fn segment_text(text: &str, params: SegmentParams) -> Vec<String> {
    let mut builder = SegmentBuilder::new(params);
    let mut out: Vec<String> = sentences(text)
        .into_iter()
        .flat_map(|s| builder.push(s))
        .collect();
    out.extend(builder.finish());
    out
}

/// Reassembles streamed chunks into completed sentences.
///
/// A sentence counts as complete once its terminator has arrived, even at
/// the very end of the received text. Chunks that split a terminator from
/// its closing quote can therefore cut a sentence early; word-aligned
/// streams never do.
#[derive(Debug, Clone, Default)]
pub struct SentenceStream {
    buf: String,
}

impl SentenceStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, chunk: &str) -> Vec<String> {
        self.buf.push_str(chunk);
        let spans = split_spans(&self.buf);
        let complete = match spans.last() {
            Some(last) if last.terminated => spans.len(),
            _ => spans.len().saturating_sub(1),
        };
        if complete == 0 {
            return Vec::new();
        }
        let out = spans[..complete]
            .iter()
            .map(|s| self.buf[s.range.clone()].to_string())
            .collect();
        let consumed = spans[complete - 1].range.end;
        self.buf.drain(..consumed);
        out
    }

    /// Whatever is left once the stream ends.
    pub fn finish(&mut self) -> Option<String> {
        let rest = std::mem::take(&mut self.buf);
        let rest = rest.trim();
        (!rest.is_empty()).then(|| rest.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::word_chunks;

    #[test]
    fn merges_short_sentences() {
        let p = SegmentParams::new(5, 120).unwrap();
        assert_eq!(
            segment_text("Hi! I am happy. What did you do today?", p),
            ["Hi! I am happy.", "What did you do today?"]
        );
        assert!(segment_text("", p).is_empty());
    }

    #[test]
    fn oversize_sentence_stays_whole() {
        let long = format!("{}.", "a".repeat(299));
        let segs = segment_text(&long, SegmentParams::default());
        assert_eq!(segs, [long]);
    }

    #[test]
    fn max_forces_a_flush() {
        let p = SegmentParams::new(50, 30).unwrap_err();
        assert_eq!(p, InvalidSegmentParams { min: 50, max: 30 });
        let p = SegmentParams::new(25, 30).unwrap();
        assert_eq!(
            segment_text("Short one. Another short. Third bit here.", p),
            ["Short one. Another short.", "Third bit here."]
        );
    }

    #[test]
    fn streaming_matches_batch_sentences() {
        let text = "Hi! Dr. Kim has 3.5 apples.  \"Wow!\" she said. Ok… bye";
        let mut stream = SentenceStream::new();
        let mut got: Vec<String> = word_chunks(text)
            .into_iter()
            .flat_map(|c| stream.push(c))
            .collect();
        got.extend(stream.finish());
        let want: Vec<String> = sentences(text).into_iter().map(String::from).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn sentence_completes_with_its_terminator() {
        let mut stream = SentenceStream::new();
        assert!(stream.push("Hello").is_empty());
        assert_eq!(stream.push(" there!"), ["Hello there!"]);
        assert!(stream.push(" Ask the Dr.").is_empty());
        assert_eq!(stream.push(" Now."), ["Ask the Dr. Now."]);
        assert_eq!(stream.finish(), None);
    }
}
