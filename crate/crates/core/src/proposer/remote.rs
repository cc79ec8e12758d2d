use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ProposalContext, Proposer, ProposerError, ProposerRequest, ProposerResponse, RequestMode};
use crate::optimizer::AdjustCommand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    pub auth_env_var: Option<String>,
    pub model: Option<String>,
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            timeout_s: 60.0,
            max_retries: 2,
            auth_env_var: None,
            model: None,
            backoff_ms: 500,
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    #[serde(flatten)]
    request: &'a ProposerRequest,
}

pub struct RemoteProposer {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteProposer {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }

    fn token(&self) -> Option<String> {
        self.cfg.auth_env_var.as_deref().and_then(|v| std::env::var(v).ok())
    }

    fn post_once(&self, body: &Envelope<'_>) -> Result<String, String> {
        let mut req = self.agent.post(&self.cfg.endpoint_url);
        if let Some(t) = self.token() {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(format!("HTTP {status}"))
        }
    }

    /// Posts the request, retrying transport and non-2xx failures with
    /// exponential backoff, and validates the reply.
    pub fn call(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        if self.cfg.endpoint_url.is_empty() {
            return Err(ProposerError::Unavailable("no endpoint configured".into()));
        }
        let body = Envelope {
            model: self.cfg.model.as_deref(),
            request,
        };
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let wait = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(wait));
            }
            match self.post_once(&body) {
                Ok(text) => {
                    return ProposerResponse::parse(&text, request.mode).inspect_err(|e| {
                        if let ProposerError::Rejected { reason, payload } = e {
                            log::warn!("rejected proposer payload ({reason}): {payload}");
                        }
                    })
                }
                Err(e) => {
                    log::debug!("proposer attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(ProposerError::Unavailable(format!(
            "{} after {} attempt(s)",
            last,
            self.cfg.max_retries + 1
        )))
    }
}

impl Proposer for RemoteProposer {
    fn name(&self) -> &str {
        "remote"
    }

    fn propose(&self, ctx: &ProposalContext<'_>) -> Result<Vec<AdjustCommand>, ProposerError> {
        let req = ProposerRequest::adjust(ctx);
        debug_assert_eq!(req.mode, RequestMode::Adjust);
        Ok(self.call(&req)?.commands)
    }
}
