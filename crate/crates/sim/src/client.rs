//! Thin typed client for the fleet server's HTTP API.

use cavfleet_core::wire::{
    Ack, AssignmentUpdate, FleetEntry, HealthReport, HeartbeatRequest, HeartbeatResponse, RelayMeasurement, RelayQuery,
    TelemetryAck, TelemetryRecord, VersionAssignment, WhitelistState, WhitelistUpdate,
};
use cavfleet_core::Vin;
use serde::de::DeserializeOwned;

use crate::error::SimError;

#[derive(Clone)]
pub struct FleetClient {
    base: String,
    http: reqwest::Client,
}

impl FleetClient {
    pub fn new(base: impl Into<String>) -> Self {
        FleetClient {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send<T: DeserializeOwned>(&self, what: &str, req: reqwest::RequestBuilder) -> Result<T, SimError> {
        let resp = req.send().await.map_err(|e| SimError::Unreachable(format!("{what}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(SimError::Rejected {
                what: what.to_owned(),
                status: status.as_u16(),
                body,
            });
        }
        resp.json().await.map_err(|e| SimError::Unreachable(format!("{what}: bad response body: {e}")))
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn telemetry(&self, rec: &TelemetryRecord) -> Result<TelemetryAck, SimError> {
        self.send("POST /telemetry", self.http.post(self.url("/telemetry")).json(rec)).await
    }

    pub async fn health(&self, h: &HealthReport) -> Result<Ack, SimError> {
        self.send("POST /health", self.http.post(self.url("/health")).json(h)).await
    }

    pub async fn heartbeat(&self, vin: &Vin, t: f64) -> Result<HeartbeatResponse, SimError> {
        let body = HeartbeatRequest { vin: vin.clone(), t };
        self.send("POST /heartbeat", self.http.post(self.url("/heartbeat")).json(&body)).await
    }

    pub async fn fleet(&self) -> Result<Vec<FleetEntry>, SimError> {
        self.send("GET /fleet", self.http.get(self.url("/fleet"))).await
    }

    pub async fn get_whitelist(&self, vin: &Vin) -> Result<WhitelistState, SimError> {
        self.send("GET /whitelist", self.http.get(self.url(&format!("/whitelist/{vin}")))).await
    }

    pub async fn set_whitelist(&self, vin: &Vin, whitelisted: bool) -> Result<WhitelistState, SimError> {
        let body = WhitelistUpdate { whitelisted };
        self.send("PUT /whitelist", self.http.put(self.url(&format!("/whitelist/{vin}"))).json(&body))
            .await
    }

    pub async fn publish(&self, m: &RelayMeasurement) -> Result<Ack, SimError> {
        self.send("POST /relay", self.http.post(self.url("/relay")).json(m)).await
    }

    pub async fn query(&self, q: &RelayQuery) -> Result<Vec<RelayMeasurement>, SimError> {
        self.send("GET /relay", self.http.get(self.url("/relay")).query(q)).await
    }

    pub async fn assign(&self, vin: &Vin, version_set_id: &str) -> Result<VersionAssignment, SimError> {
        let body = AssignmentUpdate {
            version_set_id: version_set_id.to_owned(),
        };
        self.send("PUT /assignment", self.http.put(self.url(&format!("/assignment/{vin}"))).json(&body))
            .await
    }

    pub async fn get_assignment(&self, vin: &Vin) -> Result<VersionAssignment, SimError> {
        self.send("GET /assignment", self.http.get(self.url(&format!("/assignment/{vin}")))).await
    }
}
