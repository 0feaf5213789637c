//! JSON-over-HTTP transport shared by the generator and corrector backends.
//!
//! Requests are retried with exponential backoff on 429, 5xx, timeouts and
//! connection failures. Any other non-2xx status and malformed response
//! bodies fail immediately.

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: f64,
    pub max_attempts: u32,
    /// Per-request timeout.
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base_delay: Duration::from_millis(500),
            factor: 2.0,
            max_attempts: 5,
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// Sleep before retry number `retry` (1-based).
    pub fn delay_before(&self, retry: u32) -> Duration {
        self.base_delay
            .mul_f64(self.factor.powi(retry.saturating_sub(1) as i32))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message} (after {attempts} attempt(s))")]
pub struct TransportError {
    pub message: String,
    pub attempts: u32,
    pub status: Option<u16>,
}

#[cfg(feature = "http")]
pub use client::JsonClient;

#[cfg(feature = "http")]
mod client {
    use super::*;
    use serde::de::DeserializeOwned;
    use serde::Serialize;

    enum Failure {
        Retry(String, Option<u16>),
        Fatal(String, Option<u16>),
    }

    /// POSTs JSON bodies to one endpoint.
    #[derive(Debug, Clone)]
    pub struct JsonClient {
        agent: ureq::Agent,
        url: String,
        token: Option<String>,
        policy: RetryPolicy,
    }

    impl JsonClient {
        pub fn new(url: impl Into<String>, token: Option<String>, policy: RetryPolicy) -> Self {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(policy.timeout))
                .http_status_as_error(false)
                .build()
                .into();
            JsonClient {
                agent,
                url: url.into(),
                token,
                policy,
            }
        }

        pub fn url(&self) -> &str {
            &self.url
        }

        fn attempt<B: Serialize, T: DeserializeOwned>(&self, body: &B) -> Result<T, Failure> {
            let mut req = self.agent.post(&self.url);
            if let Some(token) = &self.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let resp = match req.send_json(body) {
                Ok(r) => r,
                Err(e @ (ureq::Error::Timeout(_)
                | ureq::Error::Io(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound)) => return Err(Failure::Retry(e.to_string(), None)),
                Err(e) => return Err(Failure::Fatal(e.to_string(), None)),
            };
            let status = resp.status().as_u16();
            let text = resp.into_body().read_to_string();
            match status {
                200..=299 => {
                    let text = text.map_err(|e| Failure::Retry(e.to_string(), Some(status)))?;
                    serde_json::from_str(&text).map_err(|e| {
                        Failure::Fatal(format!("malformed response: {e}"), Some(status))
                    })
                }
                429 | 500..=599 => Err(Failure::Retry(format!("http status {status}"), Some(status))),
                _ => Err(Failure::Fatal(format!("http status {status}"), Some(status))),
            }
        }

        /// Sends `body`, retrying per the policy. Returns the decoded response
        /// and the number of attempts made.
        pub fn post<B: Serialize, T: DeserializeOwned>(&self, body: &B) -> Result<(T, u32), TransportError> {
            let max = self.policy.max_attempts.max(1);
            let mut attempt = 1;
            loop {
                match self.attempt(body) {
                    Ok(v) => return Ok((v, attempt)),
                    Err(Failure::Retry(message, status)) if attempt >= max => {
                        return Err(TransportError { message, attempts: attempt, status })
                    }
                    Err(Failure::Retry(..)) => {
                        std::thread::sleep(self.policy.delay_before(attempt));
                        attempt += 1;
                    }
                    Err(Failure::Fatal(message, status)) => {
                        return Err(TransportError { message, attempts: attempt, status })
                    }
                }
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod mock {
    //! A throwaway HTTP server answering each request with the next canned
    //! response, for exercising the transport without a real service.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    pub struct MockServer {
        pub url: String,
        pub requests: Arc<Mutex<Vec<String>>>,
    }

    /// `responses` are (status, body); the last one repeats forever.
    pub fn serve(responses: Vec<(u16, String)>) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                seen.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
                let (status, text) = &responses[i.min(responses.len() - 1)];
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
            }
        });
        MockServer { url, requests }
    }
}
