use serde::{Deserialize, Serialize};
use vetri_core::ImageRef;

use crate::http::read_body;
use crate::{pull_scope, RegistryClient, RegistryError};

const JSON_LIMIT: u64 = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceType {
    Community,
    Official,
}

impl std::str::FromStr for SourceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "community" => Ok(SourceType::Community),
            "official" => Ok(SourceType::Official),
            other => Err(format!("unknown source type {other:?} (community|official)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogQuery {
    pub query: String,
    pub source: SourceType,
    pub page_limit: usize,
    pub page_size: usize,
    /// Registry host recorded on the returned image references.
    pub registry: String,
    /// Also look up each entry's source repository.
    pub resolve_sources: bool,
}

impl Default for CatalogQuery {
    fn default() -> Self {
        CatalogQuery {
            query: String::new(),
            source: SourceType::Community,
            page_limit: 1,
            page_size: 25,
            registry: "docker.io".into(),
            resolve_sources: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub image: ImageRef,
    pub download_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_repo_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crawl {
    pub entries: Vec<CatalogEntry>,
    /// A page after the first failed; `entries` holds what came before it.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Deserialize)]
struct SearchPage {
    #[serde(default)]
    next: Option<String>,
    results: Vec<SearchResult>,
}

#[derive(Deserialize)]
struct SearchResult {
    repo_name: String,
    #[serde(default)]
    pull_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagInfo {
    pub name: String,
    #[serde(default)]
    pub last_updated: Option<String>,
}

fn encode_query(s: &str) -> String {
    s.bytes()
        .map(|b| {
            if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
                (b as char).to_string()
            } else {
                format!("%{b:02X}")
            }
        })
        .collect()
}

fn json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T, RegistryError> {
    serde_json::from_slice(bytes).map_err(|e| RegistryError::Protocol(format!("{what}: {e}")))
}

impl RegistryClient {
    fn get_json<T: serde::de::DeserializeOwned>(&self, url: &str) -> Result<Option<T>, RegistryError> {
        let mut resp = self.http.get(url, Some("application/json"))?;
        match resp.status().as_u16() {
            200 => json(&read_body(&mut resp, JSON_LIMIT)?, url).map(Some),
            404 => Ok(None),
            s => Err(RegistryError::Protocol(format!("{url}: HTTP {s}"))),
        }
    }

    /// Searches the catalog, following `next` links up to `page_limit` pages,
    /// and returns entries by download count, most downloaded first. Ties
    /// break on repository name.
    pub fn crawl_catalog(&self, query: &CatalogQuery) -> Result<Crawl, RegistryError> {
        if query.page_limit == 0 {
            return Err(RegistryError::Precondition("page_limit must be at least 1".into()));
        }
        if query.page_size == 0 {
            return Err(RegistryError::Precondition("page_size must be at least 1".into()));
        }
        let official = matches!(query.source, SourceType::Official);
        let mut url = Some(format!(
            "{}/v2/search/repositories/?query={}&is_official={official}&page=1&page_size={}",
            self.hub_base(),
            encode_query(&query.query),
            query.page_size
        ));
        let mut entries = Vec::new();
        let (mut partial, mut error) = (false, None);
        for page in 0..query.page_limit {
            let Some(u) = url.take() else { break };
            let fetched = self
                .get_json::<SearchPage>(&u)
                .and_then(|b| b.ok_or_else(|| RegistryError::Protocol(format!("{u}: HTTP 404"))));
            let body = match fetched {
                Ok(b) => b,
                Err(e) if page > 0 => {
                    log::warn!("stopping crawl at page {}: {e}", page + 1);
                    partial = true;
                    error = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            };
            for r in body.results {
                let image = ImageRef::parse(&format!("{}/{}", query.registry, r.repo_name))
                    .or_else(|_| ImageRef::new(&query.registry, &r.repo_name, None, None))
                    .map_err(|e| RegistryError::Protocol(format!("search result {:?}: {e}", r.repo_name)))?;
                entries.push(CatalogEntry {
                    image,
                    download_count: r.pull_count,
                    source_repo_url: None,
                });
            }
            url = body.next.filter(|n| !n.is_empty());
        }
        if query.resolve_sources {
            for e in &mut entries {
                e.source_repo_url = self.resolve_source_repo(&e.image)?;
            }
        }
        entries.sort_by(|a, b| {
            b.download_count
                .cmp(&a.download_count)
                .then_with(|| a.image.repository.cmp(&b.image.repository))
        });
        Ok(Crawl {
            entries,
            partial,
            error,
        })
    }

    /// Source repository declared in the image's build settings. A missing
    /// build record, including a 404, is `None`.
    pub fn resolve_source_repo(&self, image: &ImageRef) -> Result<Option<String>, RegistryError> {
        let url = format!("{}/v2/repositories/{}/autobuild/", self.hub_base(), image.repository);
        let Some(body) = self.get_json::<serde_json::Value>(&url)? else {
            return Ok(None);
        };
        Ok(["source_url", "repo_web_url"]
            .iter()
            .find_map(|k| body.get(*k).and_then(|v| v.as_str()))
            .filter(|s| !s.is_empty())
            .map(str::to_string))
    }

    /// Tags as listed by the registry, in its order.
    pub fn list_tags(&self, image: &ImageRef) -> Result<Vec<String>, RegistryError> {
        #[derive(Deserialize)]
        struct TagList {
            #[serde(default)]
            tags: Option<Vec<String>>,
        }
        let url = format!("{}/v2/{}/tags/list", self.registry_base(image), image.repository);
        let mut resp = self
            .http
            .get_authed(&url, Some("application/json"), &pull_scope(image))?;
        match resp.status().as_u16() {
            200 => Ok(json::<TagList>(&read_body(&mut resp, JSON_LIMIT)?, &url)?
                .tags
                .unwrap_or_default()),
            404 => Err(RegistryError::NotFound(image.repository.clone())),
            s => Err(RegistryError::Protocol(format!("{url}: HTTP {s}"))),
        }
    }

    /// Tag metadata from the hub API, `None` when it has no record.
    pub fn tag_details(&self, image: &ImageRef) -> Result<Option<Vec<TagInfo>>, RegistryError> {
        #[derive(Deserialize)]
        struct Page {
            results: Vec<TagInfo>,
        }
        let url = format!(
            "{}/v2/repositories/{}/tags/?page_size=100",
            self.hub_base(),
            image.repository
        );
        Ok(self.get_json::<Page>(&url)?.map(|p| p.results))
    }

    /// The most recently updated tag according to the hub API, or the
    /// lexically greatest registry tag when no update times are available.
    pub fn most_recent_tag(&self, image: &ImageRef) -> Result<String, RegistryError> {
        match self.tag_details(image) {
            Ok(Some(tags)) => {
                if let Some(t) = pick_most_recent(&tags) {
                    return Ok(t);
                }
            }
            Ok(None) => {}
            Err(e) => log::debug!("tag metadata unavailable for {}: {e}", image.repository),
        }
        self.list_tags(image)?
            .into_iter()
            .max()
            .ok_or_else(|| RegistryError::NotFound(format!("{} has no tags", image.repository)))
    }
}

/// Latest `last_updated`; timestamps are RFC 3339 in one format so string
/// order is time order. Ties go to the lexically greater name.
pub(crate) fn pick_most_recent(tags: &[TagInfo]) -> Option<String> {
    tags.iter()
        .filter_map(|t| {
            t.last_updated
                .as_deref()
                .filter(|s| !s.is_empty())
                .map(|u| (u, t.name.as_str()))
        })
        .max()
        .map(|(_, n)| n.to_string())
}
