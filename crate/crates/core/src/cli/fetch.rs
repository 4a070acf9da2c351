//! Retrieval of ontology sources from local paths, `file://` URLs and HTTP.

use std::fs;
use std::path::Path;
use std::time::Duration;

use chrono::Utc;
use thiserror::Error;
use ureq::ResponseExt;

use crate::store::Timestamp;

pub const USER_AGENT: &str = "rulemerge";
pub const MAX_REDIRECTS: u32 = 5;
pub const TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
#[error("cannot fetch {address}: {cause}")]
pub struct FetchError {
    pub address: String,
    pub cause: String,
}

#[derive(Debug, Clone)]
pub struct FetchResult {
    pub body: String,
    /// Absolute path for local files, final URL for HTTP.
    pub resolved_address: String,
    /// The retrieval instant.
    pub access_date: Timestamp,
}

pub fn fetch(address: &str) -> Result<FetchResult, FetchError> {
    let fail = |cause: String| FetchError {
        address: address.to_owned(),
        cause,
    };
    let lower = address.to_ascii_lowercase();
    if lower.starts_with("http://") || lower.starts_with("https://") {
        return fetch_http(address).map_err(fail);
    }
    let path = if let Some(rest) = strip_prefix_ci(address, "file://") {
        // file:///abs/path or file://localhost/abs/path
        let rest = rest.strip_prefix("localhost").unwrap_or(rest);
        if !rest.starts_with('/') {
            return Err(fail("only local file URLs are supported".into()));
        }
        rest.to_owned()
    } else if has_url_scheme(address) {
        return Err(fail("unsupported address scheme".into()));
    } else {
        address.to_owned()
    };
    let path = Path::new(&path);
    let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
    let access_date = Utc::now();
    let body = String::from_utf8(bytes).map_err(|_| fail("content is not UTF-8".into()))?;
    let resolved_address = if address.starts_with("file://") {
        address.to_owned()
    } else {
        fs::canonicalize(path)
            .map_err(|e| fail(e.to_string()))?
            .to_string_lossy()
            .into_owned()
    };
    Ok(FetchResult {
        body,
        resolved_address,
        access_date,
    })
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    let head = text.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &text[prefix.len()..])
}

/// `scheme://...`; single-letter schemes are left to Windows drive paths.
fn has_url_scheme(address: &str) -> bool {
    match address.find("://") {
        Some(idx) if idx > 1 => address[..idx]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.')),
        _ => false,
    }
}

fn fetch_http(address: &str) -> Result<FetchResult, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .max_redirects(MAX_REDIRECTS)
        .timeout_global(Some(TIMEOUT))
        .user_agent(USER_AGENT)
        .http_status_as_error(true)
        .build()
        .into();
    let mut response = agent.get(address).call().map_err(|e| e.to_string())?;
    let access_date = Utc::now();
    let resolved_address = response.get_uri().to_string();
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    Ok(FetchResult {
        body,
        resolved_address,
        access_date,
    })
}
