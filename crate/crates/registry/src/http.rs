//! HTTP plumbing: retries, bearer-token challenges, credentials.

use std::collections::HashMap;
use std::io::Read;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use ureq::http::Response;
use ureq::Body;

use crate::RegistryError;

pub const USER_ENV: &str = "VETRI_REGISTRY_USER";
pub const TOKEN_ENV: &str = "VETRI_REGISTRY_TOKEN";

#[derive(Clone, PartialEq, Eq)]
pub struct Credentials {
    pub user: String,
    pub token: String,
}

impl std::fmt::Debug for Credentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Credentials")
            .field("user", &self.user)
            .finish_non_exhaustive()
    }
}

impl Credentials {
    /// Reads both variables; `None` unless both are set and non-empty.
    pub fn from_env() -> Option<Self> {
        let user = std::env::var(USER_ENV).ok().filter(|s| !s.is_empty())?;
        let token = std::env::var(TOKEN_ENV).ok().filter(|s| !s.is_empty())?;
        Some(Credentials { user, token })
    }

    fn basic(&self) -> String {
        let raw = format!("{}:{}", self.user, self.token);
        format!("Basic {}", base64::engine::general_purpose::STANDARD.encode(raw))
    }
}

/// Parsed `WWW-Authenticate` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub scheme: String,
    pub params: HashMap<String, String>,
}

impl Challenge {
    pub fn parse(header: &str) -> Option<Challenge> {
        let header = header.trim();
        let (scheme, rest) = header.split_once(' ').unwrap_or((header, ""));
        let mut params = HashMap::new();
        let mut chars = rest.chars().peekable();
        loop {
            while chars.peek().is_some_and(|c| *c == ',' || c.is_whitespace()) {
                chars.next();
            }
            let key: String = chars.by_ref().take_while(|c| *c != '=').collect();
            if key.is_empty() {
                break;
            }
            let mut value = String::new();
            if chars.peek() == Some(&'"') {
                chars.next();
                while let Some(c) = chars.next() {
                    match c {
                        '\\' => value.extend(chars.next()),
                        '"' => break,
                        c => value.push(c),
                    }
                }
            } else {
                while let Some(c) = chars.peek().copied() {
                    if c == ',' {
                        break;
                    }
                    value.push(c);
                    chars.next();
                }
            }
            params.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
        }
        (!scheme.is_empty()).then(|| Challenge {
            scheme: scheme.to_ascii_lowercase(),
            params,
        })
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub(crate) struct Http {
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
    credentials: Option<Credentials>,
    /// Authorization header per scope.
    tokens: Mutex<HashMap<String, String>>,
}

fn transient(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

impl Http {
    pub fn new(attempts: u32, backoff: Duration, timeout: Duration, credentials: Option<Credentials>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .user_agent(concat!("vetri/", env!("CARGO_PKG_VERSION")))
            .build()
            .new_agent();
        Http {
            agent,
            attempts: attempts.max(1),
            backoff,
            credentials,
            tokens: Mutex::new(HashMap::new()),
        }
    }

    /// GET with retries on transport errors, 429 and 5xx. Returns the last
    /// response whatever its status.
    fn get_retrying(&self, url: &str, headers: &[(&str, &str)]) -> Result<Response<Body>, RegistryError> {
        let mut last_err = String::new();
        for attempt in 0..self.attempts {
            if attempt > 0 {
                let delay = self.backoff * 2u32.pow(attempt - 1);
                log::debug!("retrying {url} in {delay:?} ({last_err})");
                std::thread::sleep(delay);
            }
            let mut req = self.agent.get(url);
            for (k, v) in headers {
                req = req.header(*k, *v);
            }
            match req.call() {
                Ok(resp) if transient(resp.status().as_u16()) && attempt + 1 < self.attempts => {
                    last_err = format!("HTTP {}", resp.status());
                }
                Ok(resp) => return Ok(resp),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(RegistryError::Network(format!("{url}: {last_err}")))
    }

    /// Plain GET without registry authentication.
    pub fn get(&self, url: &str, accept: Option<&str>) -> Result<Response<Body>, RegistryError> {
        let headers: Vec<(&str, &str)> = accept.map(|a| ("Accept", a)).into_iter().collect();
        self.get_retrying(url, &headers)
    }

    /// GET against a registry, answering one authentication challenge.
    pub fn get_authed(&self, url: &str, accept: Option<&str>, scope: &str) -> Result<Response<Body>, RegistryError> {
        let cached = self.tokens.lock().unwrap().get(scope).cloned();
        let send = |auth: Option<&str>| {
            let mut headers: Vec<(&str, &str)> = Vec::new();
            if let Some(a) = accept {
                headers.push(("Accept", a));
            }
            if let Some(a) = auth {
                headers.push(("Authorization", a));
            }
            self.get_retrying(url, &headers)
        };
        let resp = send(cached.as_deref())?;
        if resp.status().as_u16() != 401 {
            return Ok(resp);
        }
        let challenge = resp
            .headers()
            .get("www-authenticate")
            .and_then(|v| v.to_str().ok())
            .and_then(Challenge::parse)
            .ok_or_else(|| RegistryError::Auth(format!("{url}: 401 without a usable challenge")))?;
        let auth = match challenge.scheme.as_str() {
            "bearer" => self.fetch_token(&challenge, scope)?,
            "basic" => self
                .credentials
                .as_ref()
                .map(Credentials::basic)
                .ok_or_else(|| RegistryError::Auth(format!("{url}: basic auth required and no credentials set")))?,
            other => return Err(RegistryError::Auth(format!("{url}: unsupported auth scheme {other}"))),
        };
        self.tokens.lock().unwrap().insert(scope.to_string(), auth.clone());
        let resp = send(Some(&auth))?;
        if matches!(resp.status().as_u16(), 401 | 403) {
            return Err(RegistryError::Auth(format!(
                "{url}: rejected after authentication (HTTP {})",
                resp.status()
            )));
        }
        Ok(resp)
    }

    fn fetch_token(&self, challenge: &Challenge, scope: &str) -> Result<String, RegistryError> {
        let realm = challenge
            .params
            .get("realm")
            .ok_or_else(|| RegistryError::Auth("bearer challenge without realm".into()))?;
        let mut url = realm.clone();
        let mut sep = if url.contains('?') { '&' } else { '?' };
        if let Some(service) = challenge.params.get("service") {
            url.push_str(&format!("{sep}service={}", percent_encode(service)));
            sep = '&';
        }
        let scope = challenge.params.get("scope").map_or(scope, String::as_str);
        url.push_str(&format!("{sep}scope={}", percent_encode(scope)));

        let basic = self.credentials.as_ref().map(Credentials::basic);
        let headers: Vec<(&str, &str)> = basic.as_deref().map(|b| ("Authorization", b)).into_iter().collect();
        let mut resp = self.get_retrying(&url, &headers)?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(RegistryError::Auth(format!(
                "token endpoint {realm} returned HTTP {status}"
            )));
        }
        let body: serde_json::Value = serde_json::from_slice(&read_body(&mut resp, 1 << 20)?)
            .map_err(|e| RegistryError::Protocol(format!("token response: {e}")))?;
        let token = body
            .get("token")
            .or_else(|| body.get("access_token"))
            .and_then(|t| t.as_str())
            .ok_or_else(|| RegistryError::Protocol("token response has no token".into()))?;
        Ok(format!("Bearer {token}"))
    }
}

pub(crate) fn read_body(resp: &mut Response<Body>, limit: u64) -> Result<Vec<u8>, RegistryError> {
    let mut out = Vec::new();
    resp.body_mut()
        .with_config()
        .limit(limit)
        .reader()
        .read_to_end(&mut out)
        .map_err(|e| RegistryError::Network(format!("reading response body: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bearer_challenge() {
        let c = Challenge::parse(
            r#"Bearer realm="https://auth.docker.io/token",service="registry.docker.io",scope="repository:library/ubuntu:pull""#,
        )
        .unwrap();
        assert_eq!(c.scheme, "bearer");
        assert_eq!(c.params["realm"], "https://auth.docker.io/token");
        assert_eq!(c.params["scope"], "repository:library/ubuntu:pull");
        assert_eq!(Challenge::parse("Basic realm=x").unwrap().params["realm"], "x");
    }

    #[test]
    fn encodes_scope() {
        assert_eq!(percent_encode("repository:a/b:pull"), "repository%3Aa%2Fb%3Apull");
    }
}
