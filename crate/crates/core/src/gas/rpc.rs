//! Deployment measurement against an external node over JSON-RPC
//! (Ganache, Hardhat, Anvil and similar development nodes).

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use alloy_primitives::{hex, Address};
use serde_json::{json, Value};

use super::{GasBackend, GasError};
use crate::evm::SpecId;

#[derive(Debug)]
pub struct RpcBackend {
    url: String,
    /// Fork rules the node is configured with; recorded, not probed.
    spec: SpecId,
    from: Option<Address>,
    gas_limit: u64,
    poll_interval: Duration,
    max_polls: u32,
    client: reqwest::blocking::Client,
    next_id: AtomicU64,
}

impl RpcBackend {
    pub fn new(url: impl Into<String>, spec: SpecId) -> Self {
        Self {
            url: url.into(),
            spec,
            from: None,
            gas_limit: super::DEFAULT_GAS_LIMIT,
            poll_interval: Duration::from_millis(100),
            max_polls: 100,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("http client"),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_sender(mut self, from: Address) -> Self {
        self.from = Some(from);
        self
    }

    pub fn with_gas_limit(mut self, gas_limit: u64) -> Self {
        self.gas_limit = gas_limit;
        self
    }

    pub fn with_polling(mut self, interval: Duration, max_polls: u32) -> Self {
        self.poll_interval = interval;
        self.max_polls = max_polls;
        self
    }

    fn unavailable(&self, reason: impl Into<String>) -> GasError {
        GasError::Unavailable {
            backend: self.id(),
            reason: reason.into(),
        }
    }

    fn call(&self, method: &str, params: Value) -> Result<Value, GasError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = json!({ "jsonrpc": "2.0", "id": id, "method": method, "params": params });
        let response = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| self.unavailable(e.to_string()))?;
        let value: Value = response.json().map_err(|e| self.unavailable(format!("bad JSON-RPC response: {e}")))?;
        if let Some(err) = value.get("error") {
            let message = err.get("message").and_then(Value::as_str).unwrap_or("unknown error");
            return Err(GasError::Rejected(format!("{method}: {message}")));
        }
        Ok(value.get("result").cloned().unwrap_or(Value::Null))
    }

    fn sender(&self) -> Result<Address, GasError> {
        if let Some(from) = self.from {
            return Ok(from);
        }
        let accounts = self.call("eth_accounts", json!([]))?;
        accounts
            .as_array()
            .and_then(|a| a.first())
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.unavailable("node exposes no unlocked account"))
    }
}

fn parse_quantity(v: &Value) -> Option<u64> {
    u64::from_str_radix(v.as_str()?.trim_start_matches("0x"), 16).ok()
}

impl GasBackend for RpcBackend {
    fn id(&self) -> String {
        format!("rpc:{}", self.url)
    }

    fn spec(&self) -> SpecId {
        self.spec
    }

    fn deploy_gas(&self, init_code: &[u8]) -> Result<u64, GasError> {
        let from = self.sender()?;
        let tx = json!({
            "from": from,
            "data": format!("0x{}", hex::encode(init_code)),
            "gas": format!("0x{:x}", self.gas_limit),
        });
        let hash = self.call("eth_sendTransaction", json!([tx]))?;
        let hash = hash
            .as_str()
            .ok_or_else(|| GasError::Rejected("eth_sendTransaction returned no hash".into()))?
            .to_string();
        for _ in 0..self.max_polls {
            let receipt = self.call("eth_getTransactionReceipt", json!([hash]))?;
            if receipt.is_null() {
                std::thread::sleep(self.poll_interval);
                continue;
            }
            let gas = receipt
                .get("gasUsed")
                .and_then(parse_quantity)
                .ok_or_else(|| GasError::Rejected("receipt without gasUsed".into()))?;
            return match receipt.get("status").and_then(parse_quantity) {
                Some(1) | None => Ok(gas),
                _ => Err(GasError::Reverted(Default::default())),
            };
        }
        Err(self.unavailable(format!("no receipt for {hash}")))
    }
}
