//! Blocking client for the `mapss_mm` API, playing the slice manager role.

use anyhow::Context;
use edgeslice_core::{ClusterState, MapssDescriptor};
use serde_json::Value;
use ureq::Agent;

use crate::server::DELETED_OBJECTS_HEADER;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    /// Parsed JSON body; `Null` when empty.
    pub body: Value,
    pub deleted_objects: Option<usize>,
}

impl ApiResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// The failing step named in an error body.
    pub fn step(&self) -> Option<&str> {
        self.body.get("step").and_then(Value::as_str)
    }
}

#[derive(Clone)]
pub struct MecoClient {
    base: String,
    agent: Agent,
}

impl MecoClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        MecoClient {
            base: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn read(mut resp: ureq::http::Response<ureq::Body>) -> anyhow::Result<ApiResponse> {
        let status = resp.status().as_u16();
        let deleted_objects = resp
            .headers()
            .get(DELETED_OBJECTS_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        let text = resp
            .body_mut()
            .read_to_string()
            .context("reading response")?;
        let body = if text.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).context("response is not JSON")?
        };
        Ok(ApiResponse {
            status,
            body,
            deleted_objects,
        })
    }

    pub fn instantiate_raw(&self, document: &[u8]) -> anyhow::Result<ApiResponse> {
        let resp = self
            .agent
            .post(format!("{}/mapss_mm/v1/mapss", self.base))
            .content_type("application/json")
            .send(document)
            .context("POST mapss")?;
        Self::read(resp)
    }

    pub fn instantiate(&self, d: &MapssDescriptor) -> anyhow::Result<ApiResponse> {
        self.instantiate_raw(d.to_json().as_bytes())
    }

    pub fn terminate(&self, mapss_id: &str) -> anyhow::Result<ApiResponse> {
        let resp = self
            .agent
            .delete(format!("{}/mapss_mm/v1/mapss/{mapss_id}", self.base))
            .call()
            .context("DELETE mapss")?;
        Self::read(resp)
    }

    pub fn get(&self, mapss_id: &str) -> anyhow::Result<ApiResponse> {
        let resp = self
            .agent
            .get(format!("{}/mapss_mm/v1/mapss/{mapss_id}", self.base))
            .call()
            .context("GET mapss")?;
        Self::read(resp)
    }

    pub fn list(&self) -> anyhow::Result<ApiResponse> {
        let resp = self
            .agent
            .get(format!("{}/mapss_mm/v1/mapss", self.base))
            .call()
            .context("GET mapss list")?;
        Self::read(resp)
    }

    pub fn image(&self, image_ref: &str) -> anyhow::Result<ApiResponse> {
        let resp = self
            .agent
            .get(format!("{}/registry/v1/images/{image_ref}", self.base))
            .call()
            .context("GET image")?;
        Self::read(resp)
    }

    pub fn cluster_state(&self) -> anyhow::Result<ClusterState> {
        let resp = self.read_ok(
            self.agent
                .get(format!("{}/cluster/v1/state", self.base))
                .call()
                .context("GET cluster state")?,
        )?;
        serde_json::from_value(resp.body).context("decoding cluster state")
    }

    fn read_ok(&self, resp: ureq::http::Response<ureq::Body>) -> anyhow::Result<ApiResponse> {
        let r = Self::read(resp)?;
        anyhow::ensure!(r.is_success(), "unexpected status {}: {}", r.status, r.body);
        Ok(r)
    }
}
