//! Page identity shared by selectors and the store.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("invalid url `{input}`: {reason}")]
pub struct UrlError {
    pub input: String,
    pub reason: String,
}

/// A normalized page URL: lowercase scheme and host, no fragment, no default
/// port. Path and query are kept as given.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PageUrl(String);

impl PageUrl {
    pub fn parse(raw: &str) -> Result<Self, UrlError> {
        let mut parsed = ::url::Url::parse(raw.trim()).map_err(|e| UrlError {
            input: raw.to_string(),
            reason: e.to_string(),
        })?;
        parsed.set_fragment(None);
        Ok(PageUrl(parsed.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `scheme://host[:port]` of this page.
    pub fn site(&self) -> SitePrefix {
        let parsed = ::url::Url::parse(&self.0).expect("PageUrl holds a valid url");
        SitePrefix(parsed.origin().ascii_serialization())
    }
}

impl fmt::Display for PageUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for PageUrl {
    type Error = UrlError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        PageUrl::parse(&value)
    }
}

impl From<PageUrl> for String {
    fn from(value: PageUrl) -> Self {
        value.0
    }
}

/// Normalized `scheme://host[:port]` used for site-scoped queries.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SitePrefix(String);

impl SitePrefix {
    /// Accepts either a bare origin or any url on the site.
    pub fn parse(raw: &str) -> Result<Self, UrlError> {
        let parsed = ::url::Url::parse(raw.trim()).map_err(|e| UrlError {
            input: raw.to_string(),
            reason: e.to_string(),
        })?;
        let origin = parsed.origin();
        if !origin.is_tuple() {
            return Err(UrlError {
                input: raw.to_string(),
                reason: "url has no host".into(),
            });
        }
        Ok(SitePrefix(origin.ascii_serialization()))
    }

    pub fn contains(&self, page: &PageUrl) -> bool {
        page.as_str()
            .strip_prefix(&self.0)
            .is_some_and(|rest| rest.is_empty() || rest.starts_with(['/', '?']))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SitePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_scheme_host_port_and_fragment() {
        let url = PageUrl::parse("HTTPS://Docs.Example.COM:443/Guide/Intro?x=1#section").unwrap();
        assert_eq!(url.as_str(), "https://docs.example.com/Guide/Intro?x=1");
        let url = PageUrl::parse("http://example.com:80").unwrap();
        assert_eq!(url.as_str(), "http://example.com/");
        let url = PageUrl::parse("http://example.com:8080/a").unwrap();
        assert_eq!(url.as_str(), "http://example.com:8080/a");
    }

    #[test]
    fn rejects_garbage() {
        assert!(PageUrl::parse("not a url").is_err());
    }

    #[test]
    fn site_membership() {
        let site = SitePrefix::parse("https://Example.com").unwrap();
        assert!(site.contains(&PageUrl::parse("https://example.com/a").unwrap()));
        assert!(!site.contains(&PageUrl::parse("https://example.com.evil/a").unwrap()));
        assert!(!site.contains(&PageUrl::parse("http://example.com/a").unwrap()));
        assert_eq!(
            PageUrl::parse("https://example.com/x/y").unwrap().site(),
            site
        );
    }
}
