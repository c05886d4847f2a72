mod common;

use std::fs;
use std::sync::Arc;

use biaskit::ingest::canon::{article_id, DEFAULT_STRIPPED_PARAMS};
use biaskit::ingest::{
    build_snapshot_urls, dedup_articles, extract_images, ingest, normalize_category, parse_category_page,
    ArticleRecord, CorpusStore, Fetcher, FixtureTransport, ImageDenyList, IngestConfig, IngestError, RetryPolicy,
    DEFAULT_ARCHIVE_HOST,
};
use biaskit::pipeline::files::hash_tree;
use biaskit::types::{CategoryLabel, VenueId};
use chrono::NaiveDate;
use common::fixtures_dir;
use proptest::prelude::*;

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn page(name: &str) -> String {
    fs::read_to_string(fixtures_dir().join("site/pages").join(name)).unwrap()
}

fn sections(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn full_corpus_grid_has_one_snapshot_per_day_and_section() {
    let s = sections(&["sports", "arts", "world"]);
    let grid = build_snapshot_urls(VenueId::Nyt, d(2012, 1, 1), d(2022, 12, 31), &s, DEFAULT_ARCHIVE_HOST).unwrap();
    // 11 years, three of them leap years.
    assert_eq!(grid.len(), (365 * 11 + 3) * 3);
    assert_eq!(grid[0].archive_url, "https://web.archive.org/web/20120101/https://www.nytimes.com/section/sports");
    assert_eq!(grid[3].date, d(2012, 1, 2));
    assert_eq!(grid.last().unwrap().archive_url, "https://web.archive.org/web/20221231/https://www.nytimes.com/section/world");

    let fox = build_snapshot_urls(VenueId::Fox, d(2016, 2, 28), d(2016, 3, 1), &sections(&["entertainment"]), DEFAULT_ARCHIVE_HOST)
        .unwrap();
    let urls: Vec<_> = fox.iter().map(|s| s.archive_url.as_str()).collect();
    assert_eq!(
        urls,
        [
            "https://web.archive.org/web/20160228/https://www.foxnews.com/entertainment",
            "https://web.archive.org/web/20160229/https://www.foxnews.com/entertainment",
            "https://web.archive.org/web/20160301/https://www.foxnews.com/entertainment",
        ]
    );
}

#[test]
fn grid_rejects_bad_input() {
    let s = sections(&["sports"]);
    assert!(build_snapshot_urls(VenueId::Nyt, d(2015, 3, 2), d(2015, 3, 1), &s, DEFAULT_ARCHIVE_HOST).unwrap().is_empty());
    assert!(matches!(
        build_snapshot_urls(VenueId::Nyt, d(2011, 12, 31), d(2012, 1, 1), &s, DEFAULT_ARCHIVE_HOST),
        Err(IngestError::Config(_))
    ));
    assert!(matches!(build_snapshot_urls(VenueId::Nyt, d(2015, 1, 1), d(2015, 1, 1), &[], DEFAULT_ARCHIVE_HOST), Err(IngestError::Config(_))));
    assert!(matches!(
        build_snapshot_urls(VenueId::Nyt, d(2015, 1, 1), d(2015, 1, 1), &sections(&["spo rts"]), DEFAULT_ARCHIVE_HOST),
        Err(IngestError::Config(_))
    ));
}

proptest! {
    #[test]
    fn grid_cardinality_is_days_times_sections(start in 0i64..4000, len in 0i64..60, n in 1usize..5) {
        let from = d(2012, 1, 1) + chrono::Duration::days(start);
        let to = (from + chrono::Duration::days(len)).min(d(2022, 12, 31));
        let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let grid = build_snapshot_urls(VenueId::Fox, from, to, &names, DEFAULT_ARCHIVE_HOST).unwrap();
        let days = (to - from).num_days() as usize + 1;
        prop_assert_eq!(grid.len(), days * n);
        let unique: std::collections::HashSet<_> = grid.iter().map(|s| &s.archive_url).collect();
        prop_assert_eq!(unique.len(), grid.len());
    }
}

#[test]
fn category_pages_yield_hand_counted_links() {
    let nyt = parse_category_page(&page("nyt_sports_20150302.html"), VenueId::Nyt, DEFAULT_STRIPPED_PARAMS).unwrap();
    // 24 stories; repeats, a tracking-parameter copy, an archived copy, video,
    // section and script links are not counted; nav and footer are outside the panel.
    assert_eq!(nyt.len(), 24);
    assert_eq!(nyt[0], "https://www.nytimes.com/2015/03/01/sports/story-00.html");
    assert_eq!(nyt[23], "https://www.nytimes.com/2015/03/02/sports/story-23.html");
    assert!(nyt.iter().all(|u| u.contains("/sports/story-")));

    let fox = parse_category_page(&page("fox_entertainment_20150302.html"), VenueId::Fox, DEFAULT_STRIPPED_PARAMS).unwrap();
    assert_eq!(fox.len(), 15);
    assert!(fox.iter().all(|u| u.starts_with("https://www.foxnews.com/entertainment/celebrity-story-")));

    let arts1 = parse_category_page(&page("nyt_arts_20150302.html"), VenueId::Nyt, DEFAULT_STRIPPED_PARAMS).unwrap();
    let arts2 = parse_category_page(&page("nyt_arts_20150303.html"), VenueId::Nyt, DEFAULT_STRIPPED_PARAMS).unwrap();
    assert_eq!((arts1.len(), arts2.len()), (3, 3));
    assert_eq!(arts1[2], arts2[0]);

    assert!(parse_category_page(&page("blank.html"), VenueId::Nyt, DEFAULT_STRIPPED_PARAMS).unwrap().is_empty());
    match parse_category_page(&page("unknown_layout.html"), VenueId::Nyt, DEFAULT_STRIPPED_PARAMS) {
        Err(IngestError::ParseFailure { venue, fingerprint }) => {
            assert_eq!(venue, VenueId::Nyt);
            assert_eq!(fingerprint.len(), 12);
        }
        other => panic!("expected a parse failure, got {other:?}"),
    }
}

#[test]
fn article_images_skip_chrome_and_repeats() {
    let html = fs::read_to_string(fixtures_dir().join("site/articles/museum-reopens.html")).unwrap();
    let url = "https://www.nytimes.com/2015/03/01/arts/design/museum-reopens.html";
    let imgs = extract_images(&html, url, &ImageDenyList::bundled(VenueId::Nyt), DEFAULT_STRIPPED_PARAMS);
    let names: Vec<_> = imgs.iter().map(|i| i.source_url.rsplit('/').next().unwrap()).collect();
    assert_eq!(names, ["museum-1.png", "museum-2.png", "museum-3.png"]);
    assert_eq!((imgs[1].width_px, imgs[1].height_px), (Some(800), Some(600)));
    assert_eq!(imgs[0].width_px, None);
}

#[test]
fn categories_follow_merge_rules() {
    use CategoryLabel::*;
    let cases = [
        (VenueId::Fox, "entertainment", Art),
        (VenueId::Fox, "Lifestyle", Art),
        (VenueId::Nyt, "lifestyle", Art),
        (VenueId::Nyt, "arts", Art),
        (VenueId::Nyt, "sports", Sport),
        (VenueId::Fox, "sports", Sport),
        (VenueId::Fox, "food-drink", Food),
        (VenueId::Nyt, "us", US),
        (VenueId::Nyt, "https://www.nytimes.com/section/world", World),
        (VenueId::Fox, "/politics/", Politics),
    ];
    for (venue, raw, want) in cases {
        assert_eq!(normalize_category(raw, venue).unwrap(), want, "{venue:?} {raw}");
    }
    assert!(matches!(normalize_category("entertainment", VenueId::Nyt), Err(IngestError::UnmappedCategory { .. })));
    assert!(matches!(normalize_category("weather", VenueId::Fox), Err(IngestError::UnmappedCategory { .. })));
}

fn arts_crawl(out: &std::path::Path) -> IngestConfig {
    let mut c = IngestConfig::new(VenueId::Nyt, d(2015, 3, 1), d(2015, 3, 3), sections(&["arts"]), out.to_path_buf());
    c.fixtures = Some(fixtures_dir().join("site"));
    c.parallelism = 2;
    c
}

fn fetcher() -> Fetcher {
    let transport = Arc::new(FixtureTransport::open(&fixtures_dir().join("site")).unwrap());
    Fetcher::new(transport, RetryPolicy { rate_per_host: 0.0, ..RetryPolicy::default() }).with_sleeper(|_| {})
}

#[test]
fn fixture_crawl_counts_and_dedup_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = arts_crawl(&dir.path().join("corpus"));
    let r = ingest(&cfg, &fetcher()).unwrap();
    // Three days; no capture exists for the first.
    assert_eq!((r.snapshots, r.snapshot_failures), (3, 1));
    assert_eq!((r.links, r.duplicates_dropped), (6, 1));
    // One of the five articles was published before the range.
    assert_eq!((r.out_of_range, r.articles_written, r.article_failures), (1, 4, 0));
    assert_eq!((r.images, r.images_unfetched), (5, 0));

    let store = CorpusStore::open(&cfg.out).unwrap();
    let articles = store.load_articles().unwrap();
    assert_eq!(articles.len(), 4);
    assert!(articles.iter().all(|a| a.category == CategoryLabel::Art && a.venue == VenueId::Nyt));
    let museum = articles.iter().find(|a| a.title == "Museum Reopens After Renovation").unwrap();
    assert_eq!(museum.publish_date, d(2015, 3, 1));
    assert_eq!(museum.body, "The museum reopened on Sunday.\n\nVisitors lined up around the block.");
    assert_eq!(museum.image_refs.len(), 3);
    assert_eq!((museum.image_refs[0].width_px, museum.image_refs[0].height_px), (Some(640), Some(480)));
    assert!(museum.image_refs.iter().all(|i| i.fetched));
    let shared: Vec<_> = articles.iter().filter(|a| a.image_refs.iter().any(|i| i.source_url.ends_with("shared.png"))).collect();
    assert_eq!(shared.len(), 2);
    assert_eq!(shared[0].image_refs[0].image_id, shared[1].image_refs[0].image_id);

    // A second crawl over the same store finds nothing new and changes nothing.
    let before = hash_tree(&cfg.out).unwrap();
    let again = ingest(&cfg, &fetcher()).unwrap();
    assert_eq!(again.articles_written, 0);
    // The stale article was never stored, so it is fetched and rejected again.
    assert_eq!((again.duplicates_dropped, again.out_of_range), (5, 1));
    assert_eq!(hash_tree(&cfg.out).unwrap(), before);

    // A fresh store reaches the same bytes.
    let other = arts_crawl(&dir.path().join("corpus2"));
    ingest(&other, &fetcher()).unwrap();
    assert_eq!(hash_tree(&other.out).unwrap(), before);
}

fn record(url: &str) -> ArticleRecord {
    ArticleRecord {
        article_id: article_id(url, DEFAULT_STRIPPED_PARAMS).unwrap(),
        url: url.into(),
        venue: VenueId::Fox,
        category: CategoryLabel::World,
        publish_date: d(2015, 1, 1),
        title: String::new(),
        body: "b".into(),
        image_refs: vec![],
    }
}

proptest! {
    #[test]
    fn dedup_is_idempotent(picks in prop::collection::vec((0usize..8, 0usize..3), 0..40)) {
        let suffixes = ["", "?utm_source=x", "#top"];
        let records: Vec<_> = picks
            .iter()
            .map(|(i, s)| record(&format!("https://www.foxnews.com/world/story-{i}{}", suffixes[*s])))
            .collect();
        let (once, dropped) = dedup_articles(records.clone());
        let distinct: std::collections::HashSet<_> = picks.iter().map(|(i, _)| i).collect();
        prop_assert_eq!(once.len(), distinct.len());
        prop_assert_eq!(once.len() + dropped, records.len());
        let (twice, none) = dedup_articles(once.clone());
        prop_assert_eq!(none, 0);
        prop_assert_eq!(twice, once);
    }
}
