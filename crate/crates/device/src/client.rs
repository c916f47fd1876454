//! HTTP client for the gateway API.

use std::time::Duration;

use companion_core::pipeline::{StrategyKind, TurnRecord};
use companion_core::protocol::{DeviceEvent, FrameDecoder, ProtocolError, TurnEnvelope};
use companion_core::store::{LogPage, SessionMeta};
use futures::stream::BoxStream;
use futures::StreamExt;
use serde::Deserialize;
use serde_json::json;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The gateway could not be reached or the connection dropped.
    #[error("connection failed: {0}")]
    Transport(String),
    /// The gateway answered with an error body.
    #[error("gateway returned {status} {code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
    #[error("undecodable turn stream: {0}")]
    Protocol(#[from] ProtocolError),
}

impl ClientError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ClientError::Transport(_))
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    code: String,
    message: String,
}

#[derive(Debug, Clone)]
pub struct GatewayClient {
    http: reqwest::Client,
    base: String,
    token: Option<String>,
}

impl GatewayClient {
    pub fn new(base: &str, token: Option<String>) -> Self {
        let http = reqwest::Client::builder()
            .connect_timeout(CONNECT_TIMEOUT)
            .build()
            .expect("static client settings are valid");
        GatewayClient {
            http,
            base: base.trim_end_matches('/').to_string(),
            token,
        }
    }

    fn request(&self, method: reqwest::Method, path: &str) -> reqwest::RequestBuilder {
        let r = self.http.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    async fn checked(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.code, b.message),
            Err(_) => ("unknown".into(), text),
        };
        Err(ClientError::Api {
            status,
            code,
            message,
        })
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        Self::checked(
            self.request(reqwest::Method::GET, "/v1/healthz")
                .send()
                .await?,
        )
        .await?;
        Ok(())
    }

    pub async fn create_session(
        &self,
        profile_id: &str,
        device_label: &str,
    ) -> Result<SessionMeta, ClientError> {
        let body = json!({"profile_id": profile_id, "device_label": device_label});
        let resp = self
            .request(reqwest::Method::POST, "/v1/sessions")
            .json(&body)
            .send()
            .await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    pub async fn session(&self, session_id: &str) -> Result<SessionMeta, ClientError> {
        let resp = self
            .request(reqwest::Method::GET, &format!("/v1/sessions/{session_id}"))
            .send()
            .await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    pub async fn log(&self, session_id: &str) -> Result<Vec<TurnRecord>, ClientError> {
        let resp = self
            .request(
                reqwest::Method::GET,
                &format!("/v1/sessions/{session_id}/log"),
            )
            .send()
            .await?;
        Ok(Self::checked(resp).await?.json::<LogPage>().await?.records)
    }

    pub async fn post_events(
        &self,
        session_id: &str,
        events: &[DeviceEvent],
    ) -> Result<(), ClientError> {
        let body = json!({"events": events});
        let resp = self
            .request(
                reqwest::Method::POST,
                &format!("/v1/sessions/{session_id}/events"),
            )
            .json(&body)
            .send()
            .await?;
        Self::checked(resp).await?;
        Ok(())
    }

    pub async fn voice_turn(
        &self,
        session_id: &str,
        audio: Vec<u8>,
        strategy: StrategyKind,
    ) -> Result<TurnResponse, ClientError> {
        let part = reqwest::multipart::Part::bytes(audio)
            .file_name("capture.wav")
            .mime_str("audio/wav")
            .expect("static mime type");
        let form = reqwest::multipart::Form::new().part("audio", part);
        let resp = self
            .request(
                reqwest::Method::POST,
                &format!("/v1/sessions/{session_id}/turns?strategy={strategy}"),
            )
            .multipart(form)
            .send()
            .await?;
        Ok(TurnResponse::new(Self::checked(resp).await?))
    }

    pub async fn aac_turn(
        &self,
        session_id: &str,
        text: &str,
        strategy: StrategyKind,
    ) -> Result<TurnResponse, ClientError> {
        let resp = self
            .request(
                reqwest::Method::POST,
                &format!("/v1/sessions/{session_id}/turns?strategy={strategy}"),
            )
            .json(&json!({"aac_text": text}))
            .send()
            .await?;
        Ok(TurnResponse::new(Self::checked(resp).await?))
    }
}

/// Envelopes decoded incrementally from a streamed turn response.
pub struct TurnResponse {
    body: BoxStream<'static, reqwest::Result<bytes_chunk::Chunk>>,
    decoder: FrameDecoder,
    done: bool,
}

mod bytes_chunk {
    pub type Chunk = Vec<u8>;
}

impl TurnResponse {
    fn new(resp: reqwest::Response) -> Self {
        TurnResponse {
            body: resp.bytes_stream().map(|r| r.map(|b| b.to_vec())).boxed(),
            decoder: FrameDecoder::new(),
            done: false,
        }
    }

    /// The next complete envelope, or `None` at a clean end of stream.
    pub async fn next_envelope(&mut self) -> Result<Option<TurnEnvelope>, ClientError> {
        loop {
            if let Some(env) = self.decoder.next_envelope()? {
                return Ok(Some(env));
            }
            if self.done {
                self.decoder.finish()?;
                return Ok(None);
            }
            match self.body.next().await {
                Some(chunk) => self.decoder.extend(&chunk?),
                None => self.done = true,
            }
        }
    }
}
