use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Scripted provider behaviour loaded from `fixtures.json`:
///
/// ```json
/// {
///   "transcripts": [{"audio": "hello.wav", "transcript": "hello teddy"}],
///   "responses": [{"utterance": "hello teddy", "response": "Hi! ..."}]
/// }
/// ```
///
/// A transcript entry names an audio file next to the JSON document and/or
/// gives its `sha256` digest directly; the mock recogniser is keyed by digest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixtures {
    #[serde(default)]
    pub transcripts: Vec<TranscriptFixture>,
    #[serde(default)]
    pub responses: Vec<ResponseFixture>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptFixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseFixture {
    pub utterance: String,
    pub response: String,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("transcript fixture {0} has neither `audio` nor `sha256`")]
    Unkeyed(usize),
    #[error("transcript fixture {index}: declared sha256 does not match {audio}")]
    DigestMismatch { index: usize, audio: String },
}

/// Lowercase hex SHA-256 of an audio payload.
pub fn audio_digest(audio: &[u8]) -> String {
    hex::encode(Sha256::digest(audio))
}

/// Key used to match an utterance against scripted responses: lowercase,
/// whitespace collapsed, trailing sentence punctuation removed.
pub fn utterance_key(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(['.', '!', '?', '…'])
        .trim_end()
        .to_string()
}

impl Fixtures {
    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let raw = std::fs::read(path).map_err(|source| FixtureError::Io {
            path: path.into(),
            source,
        })?;
        let mut fixtures: Fixtures =
            serde_json::from_slice(&raw).map_err(|source| FixtureError::Json {
                path: path.into(),
                source,
            })?;
        fixtures.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        fixtures.resolve_digests()?;
        Ok(fixtures)
    }

    /// Fixtures built in code; audio names resolve against `base_dir`.
    pub fn from_parts(
        base_dir: impl Into<PathBuf>,
        transcripts: Vec<TranscriptFixture>,
        responses: Vec<ResponseFixture>,
    ) -> Result<Self, FixtureError> {
        let mut fixtures = Fixtures {
            transcripts,
            responses,
            base_dir: base_dir.into(),
        };
        fixtures.resolve_digests()?;
        Ok(fixtures)
    }

    fn resolve_digests(&mut self) -> Result<(), FixtureError> {
        for (index, t) in self.transcripts.iter_mut().enumerate() {
            let Some(audio) = &t.audio else {
                if t.sha256.is_none() {
                    return Err(FixtureError::Unkeyed(index));
                }
                continue;
            };
            let path = self.base_dir.join(audio);
            let bytes = std::fs::read(&path).map_err(|source| FixtureError::Io { path, source })?;
            let digest = audio_digest(&bytes);
            match &t.sha256 {
                Some(declared) if !declared.eq_ignore_ascii_case(&digest) => {
                    return Err(FixtureError::DigestMismatch {
                        index,
                        audio: audio.clone(),
                    })
                }
                _ => t.sha256 = Some(digest),
            }
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Path of a named audio fixture.
    pub fn audio_path(&self, name: &str) -> PathBuf {
        self.base_dir.join(name)
    }

    pub fn transcripts_by_digest(&self) -> HashMap<String, String> {
        self.transcripts
            .iter()
            .filter_map(|t| {
                t.sha256
                    .as_ref()
                    .map(|d| (d.to_lowercase(), t.transcript.clone()))
            })
            .collect()
    }

    pub fn responses_by_utterance(&self) -> HashMap<String, String> {
        self.responses
            .iter()
            .map(|r| (utterance_key(&r.utterance), r.response.clone()))
            .collect()
    }
}
