//! Gateway configuration, read from one TOML file.
//!
//! Relative paths are resolved against the directory holding the file.
//! `COMPANION_BIND` and `COMPANION_TOKEN` override the `[server]` values.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use companion_core::guardrails::{Blocklist, Guardrails, Profile, PromptTemplate};
use companion_core::pipeline::{
    DelayConfig, Providers, SegmentParams, Strategy, StrategyKind, DEFAULT_MAX_SEGMENT_CHARS,
    DEFAULT_MIN_SEGMENT_CHARS,
};
use companion_core::providers::{
    Fixtures, MockDialogue, MockSpeechToText, MockTextToSpeech, Pacing, DEFAULT_TIMEOUT_MS,
};
use companion_core::store::Store;
use serde::{Deserialize, Serialize};

pub const BIND_ENV: &str = "COMPANION_BIND";
pub const TOKEN_ENV: &str = "COMPANION_TOKEN";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Fixtures(#[from] companion_core::providers::FixtureError),
    #[error(transparent)]
    Blocklist(#[from] companion_core::guardrails::BlocklistError),
    #[error(transparent)]
    Template(#[from] companion_core::guardrails::TemplateError),
    #[error(transparent)]
    Store(#[from] companion_core::store::StoreError),
}

fn invalid(field: &str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default)]
    pub server: ServerConfig,
    #[serde(default)]
    pub store: StoreConfig,
    #[serde(default)]
    pub providers: ProviderConfig,
    #[serde(default)]
    pub guardrails: GuardrailConfig,
    #[serde(default)]
    pub turns: TurnConfig,
    /// Profiles created at startup when the store has none with that id.
    #[serde(default)]
    pub profiles: Vec<Profile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Shared bearer token; when absent the API is open.
    #[serde(default)]
    pub token: Option<String>,
    #[serde(default = "default_max_upload")]
    pub max_upload_bytes: usize,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_max_upload() -> usize {
    8 << 20
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: default_bind(),
            token: None,
            max_upload_bytes: default_max_upload(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreConfig {
    /// Directory of the JSON-lines store; in memory when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default = "default_fixtures")]
    pub fixtures: PathBuf,
    #[serde(default)]
    pub pacing: Pacing,
    #[serde(default)]
    pub seed: u64,
    /// Echo unscripted utterances instead of failing the turn.
    #[serde(default)]
    pub lenient: bool,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub delay: DelayConfig,
    #[serde(default)]
    pub cloud: CloudConfig,
}

fn default_fixtures() -> PathBuf {
    "fixtures/fixtures.json".into()
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            fixtures: default_fixtures(),
            pacing: Pacing::Virtual,
            seed: 0,
            lenient: false,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            delay: DelayConfig::default(),
            cloud: CloudConfig::default(),
        }
    }
}

/// Hosted services used when `kind = "cloud"`. Secrets are read from the
/// named environment variables, never from the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudConfig {
    #[serde(default = "default_dialogue_url")]
    pub dialogue_base_url: String,
    #[serde(default = "default_dialogue_model")]
    pub dialogue_model: String,
    #[serde(default = "default_dialogue_key_env")]
    pub dialogue_api_key_env: String,
    #[serde(default)]
    pub voice_endpoint: Option<String>,
    #[serde(default = "default_voice_id_env")]
    pub voice_client_id_env: String,
    #[serde(default = "default_voice_secret_env")]
    pub voice_client_secret_env: String,
}

fn default_dialogue_url() -> String {
    "https://api.openai.com/v1".into()
}

fn default_dialogue_model() -> String {
    "gpt-4o-mini".into()
}

fn default_dialogue_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_voice_id_env() -> String {
    "CLOVA_CLIENT_ID".into()
}

fn default_voice_secret_env() -> String {
    "CLOVA_CLIENT_SECRET".into()
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig {
            dialogue_base_url: default_dialogue_url(),
            dialogue_model: default_dialogue_model(),
            dialogue_api_key_env: default_dialogue_key_env(),
            voice_endpoint: None,
            voice_client_id_env: default_voice_id_env(),
            voice_client_secret_env: default_voice_secret_env(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardrailConfig {
    /// Blocklist table replacing the bundled one.
    #[serde(default)]
    pub blocklist: Option<PathBuf>,
    /// System prompt template replacing the bundled one.
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default)]
    pub praise: Option<String>,
    #[serde(default)]
    pub topic_redirect: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnConfig {
    /// Used when a turn request names no strategy.
    #[serde(default)]
    pub default_strategy: StrategyKind,
    #[serde(default = "default_min_segment")]
    pub min_segment_chars: usize,
    #[serde(default = "default_max_segment")]
    pub max_segment_chars: usize,
}

fn default_min_segment() -> usize {
    DEFAULT_MIN_SEGMENT_CHARS
}

fn default_max_segment() -> usize {
    DEFAULT_MAX_SEGMENT_CHARS
}

impl Default for TurnConfig {
    fn default() -> Self {
        TurnConfig {
            default_strategy: StrategyKind::default(),
            min_segment_chars: DEFAULT_MIN_SEGMENT_CHARS,
            max_segment_chars: DEFAULT_MAX_SEGMENT_CHARS,
        }
    }
}

impl TurnConfig {
    pub fn segments(&self) -> SegmentParams {
        SegmentParams {
            min_segment_chars: self.min_segment_chars,
            max_segment_chars: self.max_segment_chars,
        }
    }

    pub fn strategy(&self, kind: StrategyKind) -> Strategy {
        match kind {
            StrategyKind::Monolithic => Strategy::monolithic(),
            StrategyKind::Segmented => Strategy::segmented(self.segments()),
        }
    }
}

impl GatewayConfig {
    /// Parse `path`, resolve its relative paths and validate it. Environment
    /// overrides are not applied; see [`GatewayConfig::apply_env`].
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            ConfigError::Syntax { message, .. } => ConfigError::Syntax {
                path: path.into(),
                message,
            },
            other => other,
        })?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Parse and validate TOML text; paths stay as written.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: GatewayConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.providers.fixtures);
        if let Some(p) = self.store.dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.guardrails.blocklist.as_mut() {
            fix(p);
        }
        if let Some(p) = self.guardrails.prompt_template.as_mut() {
            fix(p);
        }
    }

    /// Apply `COMPANION_BIND` / `COMPANION_TOKEN` from `lookup`.
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(bind) = lookup(BIND_ENV) {
            self.server.bind = bind;
        }
        if let Some(token) = lookup(TOKEN_ENV) {
            self.server.token = Some(token).filter(|t| !t.is_empty());
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bind_addr()?;
        if self
            .server
            .token
            .as_deref()
            .is_some_and(|t| t.trim().is_empty())
        {
            return Err(invalid("server.token", "must not be blank"));
        }
        if self.server.max_upload_bytes == 0 {
            return Err(invalid("server.max_upload_bytes", "must be positive"));
        }
        if self.providers.timeout_ms == 0 {
            return Err(invalid("providers.timeout_ms", "must be positive"));
        }
        self.providers
            .delay
            .validate()
            .map_err(|e| invalid("providers.delay", e))?;
        if self.providers.delay.tts_ms_per_char == 0 {
            return Err(invalid(
                "providers.delay.tts_ms_per_char",
                "must be positive",
            ));
        }
        self.turns
            .segments()
            .validate()
            .map_err(|e| invalid("turns", e))?;
        for (i, p) in self.profiles.iter().enumerate() {
            p.validate()
                .map_err(|e| invalid(&format!("profiles[{i}]"), e))?;
        }
        Ok(())
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.server
            .bind
            .parse()
            .map_err(|e| invalid("server.bind", e))
    }

    pub fn open_store(&self) -> Result<Store, ConfigError> {
        Ok(match &self.store.dir {
            Some(dir) => Store::open(dir)?,
            None => Store::in_memory(),
        })
    }

    pub fn guardrails(&self) -> Result<Guardrails, ConfigError> {
        let blocklist = match &self.guardrails.blocklist {
            Some(p) => Blocklist::load(p)?,
            None => Blocklist::default(),
        };
        let template = match &self.guardrails.prompt_template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default(),
        };
        let mut guard = Guardrails::new(blocklist, template);
        if let Some(praise) = &self.guardrails.praise {
            guard = guard
                .with_praise(praise)
                .map_err(|e| invalid("guardrails.praise", e))?;
        }
        if let Some(redirect) = &self.guardrails.topic_redirect {
            guard = guard
                .with_topic_redirect(redirect)
                .map_err(|e| invalid("guardrails.topic_redirect", e))?;
        }
        Ok(guard)
    }

    pub fn providers(&self) -> Result<Providers, ConfigError> {
        match self.providers.kind {
            ProviderKind::Mock => self.mock_providers(),
            ProviderKind::Cloud => self.cloud_providers(),
        }
    }

    fn mock_providers(&self) -> Result<Providers, ConfigError> {
        let p = &self.providers;
        let fixtures = Fixtures::load(&p.fixtures)?;
        let dialogue = MockDialogue::new(&fixtures, p.delay.dialogue)
            .with_seed(p.seed)
            .with_timeout(p.timeout_ms)
            .with_pacing(p.pacing);
        let dialogue = if p.lenient {
            dialogue.lenient()
        } else {
            dialogue
        };
        Ok(Providers::new(
            Arc::new(
                MockSpeechToText::new(&fixtures, p.delay.stt)
                    .with_seed(p.seed)
                    .with_timeout(p.timeout_ms)
                    .with_pacing(p.pacing),
            ),
            Arc::new(dialogue),
            Arc::new(
                MockTextToSpeech::new(p.delay.tts)
                    .with_seed(p.seed)
                    .with_timeout(p.timeout_ms)
                    .with_pacing(p.pacing)
                    .with_ms_per_char(p.delay.tts_ms_per_char),
            ),
        ))
    }

    #[cfg(feature = "cloud")]
    fn cloud_providers(&self) -> Result<Providers, ConfigError> {
        use companion_core::providers::cloud::{ClovaVoice, OpenAiDialogue, TranscribeRecognizer};
        let c = &self.providers.cloud;
        let secret = |name: &str| {
            std::env::var(name).map_err(|_| {
                invalid(
                    "providers.cloud",
                    format!("environment variable {name} is not set"),
                )
            })
        };
        let dialogue = OpenAiDialogue::new(secret(&c.dialogue_api_key_env)?, &c.dialogue_model)
            .with_base_url(&c.dialogue_base_url);
        let mut voice = ClovaVoice::new(
            secret(&c.voice_client_id_env)?,
            secret(&c.voice_client_secret_env)?,
        );
        if let Some(endpoint) = &c.voice_endpoint {
            voice = voice.with_endpoint(endpoint);
        }
        Ok(Providers::new(
            Arc::new(TranscribeRecognizer),
            Arc::new(dialogue),
            Arc::new(voice),
        ))
    }

    #[cfg(not(feature = "cloud"))]
    fn cloud_providers(&self) -> Result<Providers, ConfigError> {
        Err(invalid(
            "providers.kind",
            "this build has no cloud providers; rebuild with the `cloud` feature",
        ))
    }

    /// Profiles to create at startup: the configured ones, or the default.
    pub fn seed_profiles(&self) -> Vec<Profile> {
        if self.profiles.is_empty() {
            vec![Profile::default_profile()]
        } else {
            self.profiles.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_means_defaults() {
        let c = GatewayConfig::parse("").unwrap();
        assert_eq!(c, GatewayConfig::default());
        assert_eq!(c.providers.delay, DelayConfig::default());
        assert_eq!(c.turns.default_strategy, StrategyKind::Segmented);
    }

    #[test]
    fn nested_tables_parse() {
        let c = GatewayConfig::parse(
            r#"
            [server]
            bind = "0.0.0.0:9000"
            token = "t"
            [providers]
            seed = 7
            pacing = "real"
            [providers.delay]
            stt = { fixed_ms = 100, per_char_ms = 0.0 }
            dialogue = { fixed_ms = 200, per_char_ms = 1.5, jitter_ms = 10 }
            tts = { fixed_ms = 300, per_char_ms = 2.0 }
            [turns]
            default_strategy = "monolithic"
            min_segment_chars = 10
            max_segment_chars = 80
            "#,
        )
        .unwrap();
        assert_eq!(c.bind_addr().unwrap().port(), 9000);
        assert_eq!(c.providers.pacing, Pacing::Real);
        assert_eq!(c.providers.delay.dialogue.jitter_ms, 10);
        assert_eq!(c.turns.segments(), SegmentParams::new(10, 80).unwrap());
    }

    #[test]
    fn malformed_values_are_diagnosed() {
        let field = |text: &str| match GatewayConfig::parse(text) {
            Err(ConfigError::Invalid { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field("[server]\nbind = \"nowhere\""), "server.bind");
        assert_eq!(field("[server]\ntoken = \" \""), "server.token");
        assert_eq!(
            field("[turns]\nmin_segment_chars = 90\nmax_segment_chars = 10"),
            "turns"
        );
        assert_eq!(
            field("[providers.delay]\nstt = { fixed_ms = 1, per_char_ms = -1.0 }\ndialogue = { fixed_ms = 1, per_char_ms = 0.0 }\ntts = { fixed_ms = 1, per_char_ms = 0.0 }"),
            "providers.delay"
        );
        assert!(matches!(
            GatewayConfig::parse("[server]\nport = 1"),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn env_overrides_bind_and_token() {
        let mut c = GatewayConfig::default();
        c.apply_env(|k| match k {
            BIND_ENV => Some("127.0.0.1:0".into()),
            TOKEN_ENV => Some("secret".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.server.bind, "127.0.0.1:0");
        assert_eq!(c.server.token.as_deref(), Some("secret"));
        assert!(c
            .apply_env(|k| (k == BIND_ENV).then(|| "bad".to_string()))
            .is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = GatewayConfig::default();
        c.store.dir = Some("data".into());
        c.resolve_paths(Path::new("/etc/companion"));
        assert_eq!(
            c.providers.fixtures,
            Path::new("/etc/companion/fixtures/fixtures.json")
        );
        assert_eq!(
            c.store.dir.as_deref(),
            Some(Path::new("/etc/companion/data"))
        );
    }
}
