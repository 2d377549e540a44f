//! In-process registry speaking enough of the distribution API (and the hub
//! search / build-info endpoints) for client tests.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::build::sha256_digest;
use crate::image::{FixtureImage, DOCKER_MANIFEST_LIST};

pub const FIXTURE_TOKEN: &str = "fixture-token";

#[derive(Debug, Clone)]
struct Manifest {
    media_type: String,
    bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
struct Repo {
    /// tag -> (manifest digest, last_updated)
    tags: BTreeMap<String, (String, String)>,
    manifests: BTreeMap<String, Manifest>,
    blobs: BTreeMap<String, Vec<u8>>,
    source_url: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchEntry {
    pub repo_name: String,
    pub pull_count: u64,
    pub is_official: bool,
}

#[derive(Debug, Clone, Default)]
struct State {
    repos: BTreeMap<String, Repo>,
    search: Vec<SearchEntry>,
    require_token: bool,
    /// Basic credentials the token endpoint insists on, if any.
    credentials: Option<(String, String)>,
    tampered: Vec<String>,
    /// Number of upcoming requests to answer with 503.
    fail_next: usize,
    /// Canned body for the search endpoint, overriding `search`.
    search_override: Option<String>,
}

/// Builder for a [`FixtureRegistry`].
#[derive(Default)]
pub struct RegistryBuilder {
    state: State,
}

impl RegistryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Serves `image` as `repo:tag`.
    pub fn image(mut self, repo: &str, tag: &str, image: &FixtureImage) -> Self {
        self.image_updated(repo, tag, image, "2019-06-01T00:00:00Z");
        self
    }

    pub fn image_updated(&mut self, repo: &str, tag: &str, image: &FixtureImage, last_updated: &str) {
        let r = self.state.repos.entry(repo.to_string()).or_default();
        let digest = image.manifest_digest();
        r.manifests.insert(
            digest.clone(),
            Manifest {
                media_type: crate::image::DOCKER_MANIFEST_V2.into(),
                bytes: image.manifest.clone(),
            },
        );
        for (d, b) in image.blobs() {
            r.blobs.insert(d, b);
        }
        r.tags.insert(tag.to_string(), (digest, last_updated.to_string()));
    }

    /// Serves a manifest list over already-added per-platform images as `repo:tag`.
    pub fn index(mut self, repo: &str, tag: &str, images: &[(&FixtureImage, &str, &str)]) -> Self {
        let r = self.state.repos.entry(repo.to_string()).or_default();
        let mut entries = Vec::new();
        for (img, os, arch) in images {
            let d = img.manifest_digest();
            r.manifests.insert(
                d.clone(),
                Manifest {
                    media_type: crate::image::DOCKER_MANIFEST_V2.into(),
                    bytes: img.manifest.clone(),
                },
            );
            for (bd, b) in img.blobs() {
                r.blobs.insert(bd, b);
            }
            entries.push((d, img.manifest.len(), *os, *arch));
        }
        let bytes = crate::image::manifest_list(&entries);
        let digest = sha256_digest(&bytes);
        r.manifests.insert(
            digest.clone(),
            Manifest {
                media_type: DOCKER_MANIFEST_LIST.into(),
                bytes,
            },
        );
        r.tags.insert(tag.to_string(), (digest, "2019-06-01T00:00:00Z".into()));
        self
    }

    pub fn tag_only(mut self, repo: &str, tag: &str, last_updated: &str) -> Self {
        let r = self.state.repos.entry(repo.to_string()).or_default();
        r.tags
            .insert(tag.to_string(), (String::new(), last_updated.to_string()));
        self
    }

    pub fn source_url(mut self, repo: &str, url: &str) -> Self {
        self.state.repos.entry(repo.to_string()).or_default().source_url = Some(url.to_string());
        self
    }

    pub fn search_entry(mut self, repo_name: &str, pull_count: u64, is_official: bool) -> Self {
        self.state.search.push(SearchEntry {
            repo_name: repo_name.to_string(),
            pull_count,
            is_official,
        });
        self
    }

    /// Serves `body` verbatim from the search endpoint.
    pub fn search_body(mut self, body: &str) -> Self {
        self.state.search_override = Some(body.to_string());
        self
    }

    /// Requires a bearer token obtained from `/token` on every `/v2/` call.
    pub fn require_token(mut self) -> Self {
        self.state.require_token = true;
        self
    }

    /// Token endpoint rejects requests lacking these basic credentials.
    pub fn credentials(mut self, user: &str, password: &str) -> Self {
        self.state.require_token = true;
        self.state.credentials = Some((user.to_string(), password.to_string()));
        self
    }

    /// Flips a byte of the blob with this digest when served.
    pub fn tamper(mut self, digest: &str) -> Self {
        self.state.tampered.push(digest.to_string());
        self
    }

    pub fn fail_next(mut self, n: usize) -> Self {
        self.state.fail_next = n;
        self
    }

    pub fn start(self) -> FixtureRegistry {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind fixture registry"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let base = format!("http://127.0.0.1:{port}");
        let shared = Arc::new(Shared {
            state: Mutex::new(self.state),
            log: Mutex::new(Vec::new()),
            blob_gets: AtomicUsize::new(0),
            base: base.clone(),
        });
        let workers = (0..4)
            .map(|_| {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                std::thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        shared.handle(req);
                    }
                })
            })
            .collect();
        FixtureRegistry {
            server,
            shared,
            workers,
            base,
        }
    }
}

struct Shared {
    state: Mutex<State>,
    log: Mutex<Vec<String>>,
    blob_gets: AtomicUsize,
    base: String,
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("header")
}

fn json_response(status: u16, body: serde_json::Value) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_data(serde_json::to_vec(&body).expect("json"))
        .with_status_code(status)
        .with_header(header("Content-Type", "application/json"))
}

fn error(status: u16, code: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    json_response(
        status,
        json!({"errors": [{"code": code, "message": code.to_lowercase()}]}),
    )
}

fn query_param<'a>(query: &'a str, key: &str) -> Option<&'a str> {
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

fn basic(user: &str, pass: &str) -> String {
    use base64::Engine;
    format!(
        "Basic {}",
        base64::engine::general_purpose::STANDARD.encode(format!("{user}:{pass}"))
    )
}

impl Shared {
    fn handle(&self, req: Request) {
        let url = req.url().to_string();
        let (path, query) = url.split_once('?').unwrap_or((&url, ""));
        self.log.lock().unwrap().push(format!("{} {}", req.method(), path));
        let auth = req
            .headers()
            .iter()
            .find(|h| h.field.equiv("Authorization"))
            .map(|h| h.value.as_str().to_string());
        let head = *req.method() == Method::Head;

        let mut state = self.state.lock().unwrap();
        if state.fail_next > 0 {
            state.fail_next -= 1;
            drop(state);
            let _ = req.respond(error(503, "UNAVAILABLE"));
            return;
        }

        let resp = if path == "/token" {
            match &state.credentials {
                Some((u, p)) if auth.as_deref() != Some(basic(u, p).as_str()) => error(401, "UNAUTHORIZED"),
                _ => json_response(200, json!({"token": FIXTURE_TOKEN, "expires_in": 300})),
            }
        } else if path.trim_end_matches('/') == "/v2/search/repositories" {
            self.search(&state, query)
        } else if let Some(rest) = path.strip_prefix("/v2/repositories/") {
            self.hub(&state, rest.trim_end_matches('/'))
        } else if let Some(rest) = path.strip_prefix("/v2/") {
            if state.require_token && auth.as_deref() != Some(&format!("Bearer {FIXTURE_TOKEN}")) {
                let name = rest
                    .rsplit_once("/manifests/")
                    .or(rest.rsplit_once("/blobs/"))
                    .or(rest.rsplit_once("/tags/"));
                let scope = name
                    .map(|(n, _)| format!(",scope=\"repository:{n}:pull\""))
                    .unwrap_or_default();
                error(401, "UNAUTHORIZED").with_header(header(
                    "WWW-Authenticate",
                    &format!("Bearer realm=\"{}/token\",service=\"fixture\"{scope}", self.base),
                ))
            } else {
                self.distribution(&state, rest)
            }
        } else {
            error(404, "NOT_FOUND")
        };
        drop(state);
        let resp = if head {
            let mut r = Response::from_data(Vec::new()).with_status_code(resp.status_code());
            for h in resp.headers() {
                r.add_header(h.clone());
            }
            r
        } else {
            resp
        };
        let _ = req.respond(resp);
    }

    fn distribution(&self, state: &State, rest: &str) -> Response<std::io::Cursor<Vec<u8>>> {
        if rest.is_empty() {
            return json_response(200, json!({}));
        }
        if let Some(name) = rest.strip_suffix("/tags/list") {
            return match state.repos.get(name) {
                Some(r) => json_response(200, json!({"name": name, "tags": r.tags.keys().collect::<Vec<_>>()})),
                None => error(404, "NAME_UNKNOWN"),
            };
        }
        if let Some((name, reference)) = rest.rsplit_once("/manifests/") {
            let Some(repo) = state.repos.get(name) else {
                return error(404, "NAME_UNKNOWN");
            };
            let digest = if reference.starts_with("sha256:") {
                reference.to_string()
            } else {
                match repo.tags.get(reference) {
                    Some((d, _)) => d.clone(),
                    None => return error(404, "MANIFEST_UNKNOWN"),
                }
            };
            return match repo.manifests.get(&digest) {
                Some(m) => Response::from_data(m.bytes.clone())
                    .with_header(header("Content-Type", &m.media_type))
                    .with_header(header("Docker-Content-Digest", &digest)),
                None => error(404, "MANIFEST_UNKNOWN"),
            };
        }
        if let Some((name, digest)) = rest.rsplit_once("/blobs/") {
            self.blob_gets.fetch_add(1, Ordering::SeqCst);
            let Some(repo) = state.repos.get(name) else {
                return error(404, "NAME_UNKNOWN");
            };
            return match repo.blobs.get(digest) {
                Some(b) => {
                    let mut bytes = b.clone();
                    if state.tampered.iter().any(|t| t == digest) {
                        if let Some(last) = bytes.last_mut() {
                            *last ^= 0xff;
                        }
                    }
                    Response::from_data(bytes)
                        .with_header(header("Content-Type", "application/octet-stream"))
                        .with_header(header("Docker-Content-Digest", digest))
                }
                None => error(404, "BLOB_UNKNOWN"),
            };
        }
        error(404, "NOT_FOUND")
    }

    fn search(&self, state: &State, query: &str) -> Response<std::io::Cursor<Vec<u8>>> {
        if let Some(body) = &state.search_override {
            return Response::from_data(body.clone().into_bytes())
                .with_header(header("Content-Type", "application/json"));
        }
        let page: usize = query_param(query, "page")
            .and_then(|p| p.parse().ok())
            .unwrap_or(1)
            .max(1);
        let size: usize = query_param(query, "page_size")
            .and_then(|p| p.parse().ok())
            .unwrap_or(25)
            .max(1);
        let official = query_param(query, "is_official").map(|v| v == "true");
        let hits: Vec<&SearchEntry> = state
            .search
            .iter()
            .filter(|e| official.is_none_or(|o| e.is_official == o))
            .collect();
        let start = (page - 1) * size;
        let results: Vec<_> = hits
            .iter()
            .skip(start)
            .take(size)
            .map(|e| {
                json!({
                    "repo_name": e.repo_name, "pull_count": e.pull_count,
                    "is_official": e.is_official, "is_automated": !e.is_official,
                    "short_description": ""
                })
            })
            .collect();
        let next = (start + size < hits.len()).then(|| {
            format!(
                "{}/v2/search/repositories/?{}page={}&page_size={size}",
                self.base,
                official.map(|o| format!("is_official={o}&")).unwrap_or_default(),
                page + 1
            )
        });
        json_response(
            200,
            json!({"count": hits.len(), "next": next, "previous": null, "results": results}),
        )
    }

    fn hub(&self, state: &State, rest: &str) -> Response<std::io::Cursor<Vec<u8>>> {
        if let Some(name) = rest.strip_suffix("/autobuild") {
            return match state.repos.get(name).and_then(|r| r.source_url.as_ref()) {
                Some(url) => json_response(
                    200,
                    json!({
                        "build_name": name, "provider": "github", "source_url": url, "repo_web_url": url,
                    }),
                ),
                None => error(404, "NOT_FOUND"),
            };
        }
        if let Some(name) = rest.strip_suffix("/tags") {
            return match state.repos.get(name) {
                Some(r) => json_response(
                    200,
                    json!({
                        "count": r.tags.len(),
                        "results": r.tags.iter().map(|(t, (_, updated))| json!({"name": t, "last_updated": updated})).collect::<Vec<_>>(),
                    }),
                ),
                None => error(404, "NOT_FOUND"),
            };
        }
        error(404, "NOT_FOUND")
    }
}

/// Running fixture registry; stops on drop.
pub struct FixtureRegistry {
    server: Arc<Server>,
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
    base: String,
}

impl FixtureRegistry {
    /// `http://127.0.0.1:<port>`
    pub fn url(&self) -> &str {
        &self.base
    }

    /// `127.0.0.1:<port>`, usable as the registry part of an image reference.
    pub fn host(&self) -> &str {
        self.base.trim_start_matches("http://")
    }

    /// `METHOD /path` for every request so far.
    pub fn requests(&self) -> Vec<String> {
        self.shared.log.lock().unwrap().clone()
    }

    pub fn blob_requests(&self) -> usize {
        self.shared.blob_gets.load(Ordering::SeqCst)
    }

    pub fn fail_next(&self, n: usize) {
        self.shared.state.lock().unwrap().fail_next = n;
    }
}

impl Drop for FixtureRegistry {
    fn drop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
