use liverec::dataset::TrackKey;
use liverec::preview::mock::{MockCatalog, MockCatalogServer};
use liverec::preview::{DiscardReason, PreviewConfig, PreviewError, PreviewQuery, PreviewResolver, Resolution};

fn resolver(base: String) -> PreviewResolver {
    PreviewResolver::new(PreviewConfig {
        retry_base_delay_ms: 1,
        ..PreviewConfig::new(base)
    })
    .unwrap()
}

fn q(artist: &str, title: &str, market: &str) -> PreviewQuery {
    PreviewQuery::new(&TrackKey::new(artist, title), market).unwrap()
}

fn catalog() -> MockCatalog {
    let mut c = MockCatalog::default();
    c.add("Nina Simone", "Feeling Good");
    c.add("Radiohead", "nude");
    c.add("Björk", "Jóga").markets = Some(vec!["IS".into()]);
    c.add("Slowdive", "Alison").preview_url = None;
    c.add("Low", "Words").preview_seconds = 90;
    c
}

#[tokio::test]
async fn exact_match_resolves_with_30_second_preview() {
    let server = MockCatalogServer::start(catalog()).await.unwrap();
    let r = resolver(server.base_url());
    match r
        .resolve_preview(&q("Nina Simone", "Feeling Good", "us"))
        .await
        .unwrap()
    {
        Resolution::Resolved(p) => {
            assert_eq!(p.preview_duration, 30);
            assert_eq!(p.catalog_track_id, "trk0");
            assert!(p.embed_markup_ref.ends_with("/embed/track/trk0"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.search_count(), 1);
}

#[tokio::test]
async fn discard_reasons() {
    let server = MockCatalogServer::start(catalog()).await.unwrap();
    let r = resolver(server.base_url());
    let discarded = |res| match res {
        Resolution::Discarded(reason) => reason,
        Resolution::Resolved(p) => panic!("resolved {p:?}"),
    };
    assert_eq!(
        discarded(r.resolve_preview(&q("Nobody", "Nothing", "US")).await.unwrap()),
        DiscardReason::NoResults
    );
    // catalog only has "nude", lower-case
    assert_eq!(
        discarded(r.resolve_preview(&q("Radiohead", "Nude", "US")).await.unwrap()),
        DiscardReason::NoExactMatch
    );
    assert_eq!(
        discarded(r.resolve_preview(&q("Björk", "Jóga", "US")).await.unwrap()),
        DiscardReason::NoPreviewInMarket
    );
    assert_eq!(
        discarded(r.resolve_preview(&q("Slowdive", "Alison", "US")).await.unwrap()),
        DiscardReason::NoPreviewInMarket
    );
    assert_eq!(
        discarded(r.resolve_preview(&q("Low", "Words", "US")).await.unwrap()),
        DiscardReason::NoPreviewInMarket
    );
    assert!(matches!(
        r.resolve_preview(&q("Björk", "Jóga", "IS")).await.unwrap(),
        Resolution::Resolved(_)
    ));
}

#[tokio::test]
async fn case_folding_is_opt_in() {
    let server = MockCatalogServer::start(catalog()).await.unwrap();
    let r = PreviewResolver::new(PreviewConfig {
        case_insensitive_match: true,
        ..PreviewConfig::new(server.base_url())
    })
    .unwrap();
    assert!(matches!(
        r.resolve_preview(&q("Radiohead", "Nude", "US")).await.unwrap(),
        Resolution::Resolved(_)
    ));
}

#[tokio::test]
async fn unsupported_market_falls_back_to_default() {
    let server = MockCatalogServer::start(catalog()).await.unwrap();
    let r = PreviewResolver::new(PreviewConfig {
        default_market: "is".into(),
        supported_markets: Some(vec!["IS".into(), "US".into()]),
        ..PreviewConfig::new(server.base_url())
    })
    .unwrap();
    assert_eq!(r.effective_market("FR"), "IS");
    assert_eq!(r.effective_market("us"), "US");
    assert!(matches!(
        r.resolve_preview(&q("Björk", "Jóga", "FR")).await.unwrap(),
        Resolution::Resolved(_)
    ));
}

#[tokio::test]
async fn catalog_outage_is_an_error_not_a_discard() {
    let server = MockCatalogServer::start(catalog()).await.unwrap();
    server.set_unavailable(true);
    let r = resolver(server.base_url());
    assert!(matches!(
        r.resolve_preview(&q("Nina Simone", "Feeling Good", "US")).await,
        Err(PreviewError::CatalogUnavailable(_))
    ));
    let keys = vec![TrackKey::new("Nina Simone", "Feeling Good")];
    assert!(r.resolve_ranked_list(&keys, "US", 1).await.is_err());
}

fn ranked(n: usize) -> Vec<TrackKey> {
    (0..n)
        .map(|i| TrackKey::new(&format!("Artist {i}"), &format!("Song {i}")))
        .collect()
}

#[tokio::test]
async fn no_misses_takes_first_n() {
    let list = ranked(8);
    let server = MockCatalogServer::start(MockCatalog::covering(&list, |_, _| false))
        .await
        .unwrap();
    let r = resolver(server.base_url());
    let out = r.resolve_ranked_list(&list, "US", 5).await.unwrap();
    assert_eq!(
        out.items.iter().map(|i| i.source_rank).collect::<Vec<_>>(),
        vec![0, 1, 2, 3, 4]
    );
    assert_eq!(out.discarded_count, 0);
    assert!(!out.shortfall);
    assert_eq!(server.search_count(), 5);
}

#[tokio::test]
async fn miss_is_backfilled_from_next_rank() {
    let list = ranked(8);
    let server = MockCatalogServer::start(MockCatalog::covering(&list, |i, _| i == 2))
        .await
        .unwrap();
    let r = resolver(server.base_url());
    let out = r.resolve_ranked_list(&list, "US", 5).await.unwrap();
    assert_eq!(
        out.items.iter().map(|i| i.source_rank).collect::<Vec<_>>(),
        vec![0, 1, 3, 4, 5]
    );
    assert_eq!(out.discarded_count, 1);
    assert_eq!(out.discarded[0].source_rank, 2);
    assert_eq!(out.discarded[0].reason, DiscardReason::NoResults);
    assert_eq!(out.consumed(), 6);
}

#[tokio::test]
async fn shortfall_when_too_few_resolve() {
    let list = ranked(6);
    let server = MockCatalogServer::start(MockCatalog::covering(&list, |i, _| i % 2 == 0))
        .await
        .unwrap();
    let r = resolver(server.base_url());
    let out = r.resolve_ranked_list(&list, "US", 5).await.unwrap();
    assert_eq!(out.len(), 3);
    assert!(out.shortfall);
    assert_eq!(out.discarded_count + out.len(), 6);
}

#[tokio::test]
async fn zero_requested_issues_no_searches() {
    let list = ranked(3);
    let server = MockCatalogServer::start(MockCatalog::covering(&list, |_, _| false))
        .await
        .unwrap();
    let r = resolver(server.base_url());
    let out = r.resolve_ranked_list(&list, "US", 0).await.unwrap();
    assert!(out.is_empty() && !out.shortfall);
    assert_eq!(server.search_count(), 0);
}

#[tokio::test]
async fn resolution_is_deterministic_and_invariants_hold() {
    let list = ranked(40);
    let server = MockCatalogServer::start(MockCatalog::covering(&list, |i, _| i % 3 == 1))
        .await
        .unwrap();
    let r = resolver(server.base_url());
    let a = r.resolve_ranked_list(&list, "US", 12).await.unwrap();
    let b = r.resolve_ranked_list(&list, "US", 12).await.unwrap();
    assert_eq!(a, b);
    let ranks: Vec<usize> = a.items.iter().map(|i| i.source_rank).collect();
    assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    assert!(a.items.iter().all(|i| i.source_rank % 3 != 1));
    assert_eq!(a.discarded_count + a.len(), a.consumed());
    assert_eq!(a.consumed(), 18);
}
