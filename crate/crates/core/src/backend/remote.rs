use std::io::ErrorKind;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::backend::{GeneratedImage, GenerationBackend};
use crate::domain::Strength;
use crate::error::{Error, Result};
use crate::scheduler::DenoisePlan;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
const MAX_BODY: u64 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Txt2img,
    Img2img,
}

/// Body of `POST /v1/generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub mode: Mode,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timesteps: Option<Vec<u32>>,
    pub steps: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_image_b64: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub image_b64: String,
    pub width: u32,
    pub height: u32,
}

/// Client for a model server speaking the `/v1/generate` contract.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    url: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// `endpoint` is the server base URL, e.g. `http://10.0.0.2:7860`.
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend {
            url: format!("{}/v1/generate", endpoint.trim_end_matches('/')),
            agent,
        }
    }

    pub fn remote_generate(&self, request: &GenerateRequest) -> Result<GeneratedImage> {
        let body = serde_json::to_vec(request)?;
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(map_transport)?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY)
            .read_to_vec()
            .map_err(map_transport)?;
        match status {
            200..=299 => {}
            500..=599 => {
                return Err(Error::BackendUnavailable(format!(
                    "{} returned {status}",
                    self.url
                )))
            }
            _ => return Err(Error::ProtocolError(format!("unexpected status {status}"))),
        }
        let parsed: GenerateResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Error::ProtocolError(format!("malformed response body: {e}")))?;
        let encoded = B64
            .decode(parsed.image_b64.as_bytes())
            .map_err(|e| Error::ProtocolError(format!("image_b64: {e}")))?;
        let strength = request.strength.map(Strength::new).transpose()?;
        let image = GeneratedImage::from_remote(encoded, bytes.len(), request.seed, strength)?;
        if (image.width(), image.height()) != (parsed.width, parsed.height) {
            return Err(Error::ProtocolError(format!(
                "declared {}x{} but image is {}x{}",
                parsed.width,
                parsed.height,
                image.width(),
                image.height()
            )));
        }
        Ok(image)
    }
}

fn map_transport(err: ureq::Error) -> Error {
    match err {
        ureq::Error::Timeout(_) => Error::Timeout,
        ureq::Error::Io(e) if matches!(e.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            Error::Timeout
        }
        ureq::Error::Io(e) => Error::BackendUnavailable(e.to_string()),
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            Error::BackendUnavailable(err.to_string())
        }
        other => Error::ProtocolError(other.to_string()),
    }
}

impl GenerationBackend for RemoteBackend {
    fn txt2img(&self, prompt: &str, steps: u32, seed: u64) -> Result<GeneratedImage> {
        self.remote_generate(&GenerateRequest {
            mode: Mode::Txt2img,
            prompt: prompt.to_string(),
            strength: None,
            timesteps: None,
            steps,
            seed,
            init_image_b64: None,
        })
    }

    fn img2img(
        &self,
        image: &GeneratedImage,
        prompt: &str,
        plan: &DenoisePlan,
        seed: u64,
    ) -> Result<GeneratedImage> {
        let mut init = String::new();
        B64.encode_string(image.encoded(), &mut init);
        self.remote_generate(&GenerateRequest {
            mode: Mode::Img2img,
            prompt: prompt.to_string(),
            strength: Some(plan.strength.value()),
            timesteps: Some(plan.timesteps.clone()),
            steps: plan.steps as u32,
            seed,
            init_image_b64: Some(init),
        })
    }
}
