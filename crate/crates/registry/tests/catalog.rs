use vetri_core::ImageRef;
use vetri_registry::{CatalogQuery, RegistryClient, RegistryConfig, RegistryError, SourceType};
use vetri_testkit::{FixtureImage, LayerBuilder, RegistryBuilder};

fn client(hub: &str) -> RegistryClient {
    RegistryClient::new(RegistryConfig {
        hub_url: hub.to_string(),
        backoff: std::time::Duration::from_millis(5),
        ..Default::default()
    })
}

fn counts(entries: &[vetri_registry::CatalogEntry]) -> Vec<u64> {
    entries.iter().map(|e| e.download_count).collect()
}

#[test]
fn sorted_by_downloads() {
    let reg = RegistryBuilder::new()
        .search_entry("a/low", 5, false)
        .search_entry("b/high", 900000, false)
        .search_entry("c/mid", 12, false)
        .start();
    let crawl = client(reg.url()).crawl_catalog(&CatalogQuery::default()).unwrap();
    assert_eq!(counts(&crawl.entries), [900000, 12, 5]);
    assert!(!crawl.partial);
    assert_eq!(crawl.entries[0].image, ImageRef::parse("b/high").unwrap());
}

#[test]
fn zero_page_limit_is_rejected() {
    let q = CatalogQuery {
        page_limit: 0,
        ..Default::default()
    };
    let err = client("http://127.0.0.1:9").crawl_catalog(&q).unwrap_err();
    assert!(matches!(err, RegistryError::Precondition(_)));
}

#[test]
fn recorded_search_page() {
    let reg = RegistryBuilder::new()
        .search_body(include_str!("data/search_community.json"))
        .start();
    let crawl = client(reg.url()).crawl_catalog(&CatalogQuery::default()).unwrap();
    let got: Vec<(String, u64)> = crawl
        .entries
        .iter()
        .map(|e| (e.image.name_tag(), e.download_count))
        .collect();
    let want = [
        ("sonatype/nexus3:latest", 100243914),
        ("jenkinsci/blueocean:latest", 26310519),
        ("jboss/wildfly:latest", 10426731),
        ("bitnami/tomcat:latest", 1087422),
    ];
    assert_eq!(got, want.map(|(n, c)| (n.to_string(), c)));
}

#[test]
fn pagination_and_partial_results() {
    let mut b = RegistryBuilder::new();
    for i in 0..7u64 {
        b = b.search_entry(&format!("ns/img{i}"), i * 10, false);
    }
    b = b.search_entry("library/official", 1, true);
    let reg = b.start();
    let c = client(reg.url());
    let q = CatalogQuery {
        page_size: 3,
        page_limit: 2,
        ..Default::default()
    };
    let crawl = c.crawl_catalog(&q).unwrap();
    assert_eq!(counts(&crawl.entries), [50, 40, 30, 20, 10, 0]);

    let all = c
        .crawl_catalog(&CatalogQuery {
            page_limit: 10,
            ..q.clone()
        })
        .unwrap();
    assert_eq!(all.entries.len(), 7, "permutation of the community entries");

    let official = c
        .crawl_catalog(&CatalogQuery {
            source: SourceType::Official,
            ..q.clone()
        })
        .unwrap();
    assert_eq!(official.entries.len(), 1);

    assert!(official
        .entries
        .iter()
        .all(|e| e.image.repository == "library/official"));
}

#[test]
fn failing_later_page_gives_partial_result() {
    let body = r#"{"count": 4, "next": "http://127.0.0.1:9/v2/search/repositories/?page=2",
        "results": [{"repo_name": "ns/a", "pull_count": 3}, {"repo_name": "ns/b", "pull_count": 7}]}"#;
    let reg = RegistryBuilder::new().search_body(body).start();
    let c = RegistryClient::new(RegistryConfig {
        hub_url: reg.url().to_string(),
        attempts: 1,
        ..Default::default()
    });
    let crawl = c
        .crawl_catalog(&CatalogQuery {
            page_limit: 5,
            ..Default::default()
        })
        .unwrap();
    assert!(crawl.partial);
    assert!(crawl.error.is_some());
    assert_eq!(counts(&crawl.entries), [7, 3]);

    // A failing first page is an error, not an empty partial result.
    reg.fail_next(1);
    assert!(matches!(
        c.crawl_catalog(&CatalogQuery::default()),
        Err(RegistryError::Protocol(_))
    ));
}

#[test]
fn source_repo_lookup() {
    let img = FixtureImage::from_layers(&[LayerBuilder::new().file("x", "y")]);
    let reg = RegistryBuilder::new()
        .image("acme/shop", "1", &img)
        .source_url("acme/shop", "https://github.com/acme/shop")
        .image("acme/nobuild", "1", &img)
        .start();
    let c = client(reg.url());
    let r = |n: &str| ImageRef::parse(n).unwrap();
    assert_eq!(
        c.resolve_source_repo(&r("acme/shop")).unwrap().as_deref(),
        Some("https://github.com/acme/shop")
    );
    assert_eq!(c.resolve_source_repo(&r("acme/nobuild")).unwrap(), None);
    assert_eq!(c.resolve_source_repo(&r("acme/missing")).unwrap(), None);
}

#[test]
fn tags_pass_through() {
    let img = FixtureImage::from_layers(&[LayerBuilder::new().file("x", "y")]);
    let mut b = RegistryBuilder::new().image("acme/a", "latest", &img);
    b.image_updated("acme/a", "1.2", &img, "2019-07-01T00:00:00Z");
    let reg = b
        .image("acme/b", "v1", &img)
        .tag_only("acme/c", "2.0", "")
        .tag_only("acme/c", "10.0", "")
        .start();
    let c = client(reg.url());
    let r = |n: &str| ImageRef::parse(&format!("{}/{n}", reg.host())).unwrap();

    let mut tags = c.list_tags(&r("acme/a")).unwrap();
    tags.sort();
    assert_eq!(tags, ["1.2", "latest"]);
    assert_eq!(c.list_tags(&r("acme/b")).unwrap(), ["v1"]);
    assert!(matches!(c.list_tags(&r("acme/none")), Err(RegistryError::NotFound(_))));

    assert_eq!(c.most_recent_tag(&r("acme/a")).unwrap(), "1.2");
    // No update times: lexical fallback.
    assert_eq!(c.most_recent_tag(&r("acme/c")).unwrap(), "2.0");
}
