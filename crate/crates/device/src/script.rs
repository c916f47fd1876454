//! Scripted button presses: a JSON list of
//! `{"press_at_ms": n, "audio_fixture": "x.wav"}` or
//! `{"press_at_ms": n, "aac_text": "..."}`. Audio names resolve against the
//! script's directory.

use std::path::{Path, PathBuf};

use companion_core::protocol::audio;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("script {0} does not exist")]
    Missing(PathBuf),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("step {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptInput {
    /// Spoken input: the named WAV is what the microphone hears.
    Voice {
        fixture: String,
        audio: Vec<u8>,
        duration_ms: u64,
    },
    AacText(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    pub press_at_ms: u64,
    pub input: ScriptInput,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    press_at_ms: u64,
    #[serde(default)]
    audio_fixture: Option<String>,
    #[serde(default)]
    aac_text: Option<String>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        if !path.exists() {
            return Err(ScriptError::Missing(path.into()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.into(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ScriptError::Json { source, .. } => ScriptError::Json {
                path: path.into(),
                source,
            },
            other => other,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScriptError> {
        let raw: Vec<RawStep> = serde_json::from_str(text).map_err(|source| ScriptError::Json {
            path: "<script>".into(),
            source,
        })?;
        let mut steps = Vec::with_capacity(raw.len());
        let mut last = 0;
        for (index, r) in raw.into_iter().enumerate() {
            let invalid = |reason: String| ScriptError::Invalid { index, reason };
            if r.press_at_ms < last {
                return Err(invalid("press_at_ms must not decrease".into()));
            }
            last = r.press_at_ms;
            let input = match (r.audio_fixture, r.aac_text) {
                (Some(fixture), None) => {
                    let path = base_dir.join(&fixture);
                    let audio = std::fs::read(&path)
                        .map_err(|e| invalid(format!("audio fixture {}: {e}", path.display())))?;
                    let duration_ms = audio::payload_duration_ms(&audio)
                        .map_err(|e| invalid(format!("{fixture}: {e}")))?;
                    ScriptInput::Voice {
                        fixture,
                        audio,
                        duration_ms,
                    }
                }
                (None, Some(text)) if !text.trim().is_empty() => ScriptInput::AacText(text),
                (None, Some(_)) => return Err(invalid("aac_text is blank".into())),
                _ => {
                    return Err(invalid(
                        "exactly one of audio_fixture and aac_text is required".into(),
                    ))
                }
            };
            steps.push(ScriptStep {
                press_at_ms: r.press_at_ms,
                input,
            });
        }
        Ok(Script { steps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir_with_wav() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.wav"), audio::beep_marked_silence(700)).unwrap();
        dir
    }

    #[test]
    fn parses_both_inputs() {
        let dir = dir_with_wav();
        let s = Script::parse(
            r#"[{"press_at_ms": 0, "audio_fixture": "a.wav"}, {"press_at_ms": 10, "aac_text": "hi"}]"#,
            dir.path(),
        )
        .unwrap();
        assert!(matches!(
            &s.steps[0].input,
            ScriptInput::Voice {
                duration_ms: 700,
                ..
            }
        ));
        assert_eq!(s.steps[1].input, ScriptInput::AacText("hi".into()));
    }

    #[test]
    fn rejects_bad_steps() {
        let dir = dir_with_wav();
        let index = |text: &str| match Script::parse(text, dir.path()) {
            Err(ScriptError::Invalid { index, .. }) => index,
            other => panic!("{other:?}"),
        };
        assert_eq!(index(r#"[{"press_at_ms": 0}]"#), 0);
        assert_eq!(
            index(
                r#"[{"press_at_ms": 0, "aac_text": "a"}, {"press_at_ms": 1, "aac_text": "b", "audio_fixture": "a.wav"}]"#
            ),
            1
        );
        assert_eq!(
            index(r#"[{"press_at_ms": 5, "aac_text": "a"}, {"press_at_ms": 1, "aac_text": "b"}]"#),
            1
        );
        assert_eq!(
            index(r#"[{"press_at_ms": 0, "audio_fixture": "missing.wav"}]"#),
            0
        );
        assert_eq!(index(r#"[{"press_at_ms": 0, "aac_text": "  "}]"#), 0);
        assert!(matches!(
            Script::parse(r#"[{"press_at_ms": -1, "aac_text": "a"}]"#, dir.path()),
            Err(ScriptError::Json { .. })
        ));
        assert!(matches!(
            Script::load(&dir.path().join("nope.json")),
            Err(ScriptError::Missing(_))
        ));
    }

    #[test]
    fn empty_script() {
        assert!(Script::parse("[]", Path::new("."))
            .unwrap()
            .steps
            .is_empty());
    }
}
