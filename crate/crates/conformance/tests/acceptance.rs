//! One line per acceptance criterion. Exits non-zero when any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use biaskit::annotate::{build_vp_prompt, parse_vp_response, serialize_vp, VictimPerpRecord};
use biaskit::ingest::canon::DEFAULT_STRIPPED_PARAMS;
use biaskit::ingest::{
    build_snapshot_urls, dedup_articles, ingest, normalize_category, parse_category_page, CorpusStore, Fetcher,
    FixtureTransport, IngestConfig, RetryPolicy, DEFAULT_ARCHIVE_HOST,
};
use biaskit::labels::{PerpetratorLabel, VictimLabel};
use biaskit::metrics::cohens_kappa;
use biaskit::pipeline::files::hash_tree;
use biaskit::pipeline::report::ARTIFACTS;
use biaskit::pipeline::synthetic::write_synthetic_run;
use biaskit::pipeline::{run_pipeline, RunConfig, Stage};
use biaskit::stats::{chi2_2x2, normalized_areas, welch_t, zscores, ContingencyTable};
use biaskit::svm::{ensemble_average, ProbVector};
use biaskit::synth::{synthetic_corpus, synthetic_corpus_sized};
use biaskit::types::{CategoryLabel, VenueId};
use chrono::NaiveDate;
use common::suites;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(what: &str, value: f64, target: f64, tol: f64) -> Result<(), String> {
    ensure((value - target).abs() <= tol, format!("{what} = {value:.6}, expected {target} ± {tol}"))
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let detail = f()?;
    let took = start.elapsed();
    ensure(took <= budget, format!("took {took:.1?}, budget {budget:?}"))?;
    Ok(format!("{detail}; {took:.1?}"))
}

fn metrics() -> Outcome {
    timed(Duration::from_secs(10), || {
        let worst = suites::metrics_max_error(2024, 1000);
        ensure(worst <= 1e-9, format!("max oracle error {worst:e} > 1e-9"))?;
        ensure(cohens_kappa(&["A", "A", "B", "B"], &["A", "B", "A", "B"]) == Ok(0.0), "kappa example 0")?;
        ensure(cohens_kappa(&["A", "A", "A", "B"], &["A", "A", "B", "B"]) == Ok(0.5), "kappa example 0.5")?;
        ensure(cohens_kappa(&["A", "B", "A"], &["A", "B", "A"]) == Ok(1.0), "kappa example 1")?;
        Ok(format!("1000 instances, max error {worst:.1e}; hand examples exact"))
    })
}

fn statistics() -> Outcome {
    timed(Duration::from_secs(30), || {
        let (stat, p) = chi2_2x2(&ContingencyTable::new([[20, 10], [10, 20]])).map_err(|e| e.to_string())?;
        within("chi2", stat, 6.6667, 1e-3)?;
        within("chi2 p", p, 0.0098, 1e-4)?;
        let worst = suites::pvalue_max_error(2024, 500);
        ensure(worst <= 1e-6, format!("max p-value error {worst:e} > 1e-6"))?;
        let t = welch_t(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
        within("Welch t", t.t, -2.449, 1e-3)?;
        Ok(format!("chi2 {stat:.4} (p {p:.4}); 500 p-values within {worst:.1e}; Welch t {:.4}", t.t))
    })
}

fn svm() -> Outcome {
    timed(Duration::from_secs(300), || {
        let (d1, d2) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
        let first = suites::blob_ensemble(d1.path(), 3);
        let second = suites::blob_ensemble(d2.path(), 3);
        ensure(first.accuracy >= 0.95, format!("accuracy {:.4} < 0.95", first.accuracy))?;
        ensure(first.model_a == second.model_a && first.model_b == second.model_b, "model files differ between runs")?;

        let mut rng = common::rng(77);
        let simplex = |rng: &mut rand_chacha::ChaCha8Rng| {
            let raw: Vec<f64> = (0..7).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
            let s: f64 = raw.iter().sum();
            ProbVector::new(biaskit::labels::RaceLabel7::ALL.to_vec(), raw.iter().map(|v| v / s).collect()).unwrap()
        };
        let mut checked = 0;
        while checked < 10_000 {
            let (a, b) = (simplex(&mut rng), simplex(&mut rng));
            if a.argmax() == b.argmax() {
                ensure(ensemble_average(&a, &b).unwrap().argmax() == a.argmax(), "averaging moved a shared argmax")?;
                checked += 1;
            }
        }
        Ok(format!("accuracy {:.4} on 700 held-out faces; 10000 agreeing pairs; models byte-identical", first.accuracy))
    })
}

fn zscore() -> Outcome {
    ensure(zscores(&[1.0, 2.0, 3.0]) == Some(vec![-1.0, 0.0, 1.0]), "[1,2,3] does not map to [-1,0,1]")?;
    let corpus = synthetic_corpus_sized(9, 0, 5000);
    let z = normalized_areas(&corpus.faces);
    let mut worst = 0.0f64;
    for venue in VenueId::ALL {
        let zs: Vec<f64> = corpus.faces.iter().zip(&z).filter(|(f, _)| f.venue == venue).map(|(_, z)| z.unwrap()).collect();
        let n = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / n;
        let sd = (zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        worst = worst.max(mean.abs()).max((sd - 1.0).abs());
    }
    ensure(worst <= 1e-9, format!("per-venue mean/sd off by {worst:e}"))?;
    let areas: Vec<f64> = corpus.faces.iter().map(|f| f.area.unwrap() as f64).collect();
    let base = zscores(&areas).unwrap();
    for (scale, shift) in [(3.5, 0.0), (1e-4, 7.0), (250.0, -1e6)] {
        let moved: Vec<f64> = areas.iter().map(|a| a * scale + shift).collect();
        let gap = zscores(&moved).unwrap().iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(gap <= 1e-9, format!("scale {scale} shift {shift} changes z by {gap:e}"))?;
    }
    Ok(format!("per-venue deviation {worst:.1e}; scale invariance holds"))
}

fn planted() -> Outcome {
    timed(Duration::from_secs(120), || {
        let corpus = synthetic_corpus(2024);
        ensure(corpus.text.len() == 10_000 && corpus.faces.len() == 5_000, "bundled corpus has the wrong size")?;
        let r = suites::planted_recovery(&corpus);
        ensure(r.share() >= 0.99, format!("{}/{} cells within 3 SE: {:?}", r.within, r.cells, r.misses))?;
        ensure(r.invariant_error <= 1e-9, format!("share sums off by {:e}", r.invariant_error))?;
        Ok(format!("{}/{} cells within 3 SE ({:.2}%); sums within {:.1e}", r.within, r.cells, 100.0 * r.share(), r.invariant_error))
    })
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn ingestion() -> Outcome {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
    let sections: Vec<String> = ["sports", "arts", "world"].iter().map(|s| s.to_string()).collect();
    let grid = build_snapshot_urls(VenueId::Nyt, d(2012, 1, 1), d(2022, 12, 31), &sections, DEFAULT_ARCHIVE_HOST)
        .map_err(|e| e.to_string())?;
    ensure(grid.len() == 4018 * 3, format!("grid has {} snapshots, expected {}", grid.len(), 4018 * 3))?;
    let leap = build_snapshot_urls(VenueId::Fox, d(2016, 2, 27), d(2016, 3, 1), &sections[..2], DEFAULT_ARCHIVE_HOST)
        .map_err(|e| e.to_string())?;
    ensure(leap.len() == 8, "leap-year grid")?;

    let page = |name: &str| std::fs::read_to_string(fixtures().join("site/pages").join(name)).unwrap();
    let nyt = parse_category_page(&page("nyt_sports_20150302.html"), VenueId::Nyt, DEFAULT_STRIPPED_PARAMS).map_err(|e| e.to_string())?;
    let fox = parse_category_page(&page("fox_entertainment_20150302.html"), VenueId::Fox, DEFAULT_STRIPPED_PARAMS)
        .map_err(|e| e.to_string())?;
    ensure(nyt.len() == 24 && fox.len() == 15, format!("links {} and {}, expected 24 and 15", nyt.len(), fox.len()))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = IngestConfig::new(VenueId::Nyt, d(2015, 3, 1), d(2015, 3, 3), vec!["arts".into()], dir.path().join("c"));
    cfg.fixtures = Some(fixtures().join("site"));
    let fetcher = || {
        let t = Arc::new(FixtureTransport::open(&fixtures().join("site")).unwrap());
        Fetcher::new(t, RetryPolicy { rate_per_host: 0.0, ..RetryPolicy::default() }).with_sleeper(|_| {})
    };
    let first = ingest(&cfg, &fetcher()).map_err(|e| e.to_string())?;
    let before = hash_tree(&cfg.out).map_err(|e| e.to_string())?;
    let second = ingest(&cfg, &fetcher()).map_err(|e| e.to_string())?;
    ensure(first.articles_written == 4 && first.duplicates_dropped == 1, format!("first crawl {first:?}"))?;
    ensure(second.articles_written == 0, "second crawl wrote articles")?;
    ensure(hash_tree(&cfg.out).map_err(|e| e.to_string())? == before, "second crawl changed the store")?;
    let articles = CorpusStore::open(&cfg.out).and_then(|s| s.load_articles()).map_err(|e| e.to_string())?;
    let (once, _) = dedup_articles(articles.clone().into_iter().chain(articles.clone()));
    let (twice, dropped) = dedup_articles(once.clone());
    ensure(once.len() == articles.len() && twice == once && dropped == 0, "dedup is not idempotent")?;

    for (venue, raw) in [(VenueId::Fox, "entertainment"), (VenueId::Fox, "lifestyle"), (VenueId::Nyt, "lifestyle"), (VenueId::Nyt, "arts")] {
        ensure(normalize_category(raw, venue).ok() == Some(CategoryLabel::Art), format!("{venue:?} {raw} is not Art"))?;
    }
    Ok("grid 12054 snapshots; links 24/15; recrawl unchanged; Entertainment/Lifestyle -> Art".into())
}

fn prompt() -> Outcome {
    let p = build_vp_prompt("Article text.");
    for fragment in suites::VP_PROMPT_FRAGMENTS {
        ensure(p.contains(fragment), format!("prompt lacks {fragment:?}"))?;
    }
    let mut pairs = 0;
    for &victim in VictimLabel::ALL {
        for &perpetrator in PerpetratorLabel::ALL {
            let r = VictimPerpRecord { victim, perpetrator };
            ensure(parse_vp_response(&serialize_vp(&r)).ok() == Some(r), format!("{r:?} does not round-trip"))?;
            pairs += 1;
        }
    }
    let bad = suites::malformed_vp_payloads(2024, 50);
    let accepted: Vec<_> = bad.iter().filter(|raw| parse_vp_response(raw).is_ok()).collect();
    ensure(accepted.is_empty(), format!("accepted malformed replies {accepted:?}"))?;
    Ok(format!("{} fragments present; {pairs} pairs round-trip; {} malformed replies rejected", suites::VP_PROMPT_FRAGMENTS.len(), bad.len()))
}

fn determinism() -> Outcome {
    let run = |seed| -> Result<_, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = write_synthetic_run(dir.path(), seed).map_err(|e| e.to_string())?;
        let cfg = RunConfig::load(&cfg.config_path).map_err(|e| e.to_string())?;
        run_pipeline(&cfg, &Stage::ALL).map_err(|e| e.to_string())?;
        let tree = hash_tree(&cfg.out_dir.join("report")).map_err(|e| e.to_string())?;
        Ok((dir, tree))
    };
    let (_a, first) = run(5)?;
    let (_b, second) = run(5)?;
    ensure(first == second, "report bundles differ")?;
    let names: HashSet<&str> = first.keys().map(String::as_str).collect();
    for (name, artifact) in ARTIFACTS {
        ensure(names.contains(format!("{name}.csv").as_str()), format!("no data file for {artifact}"))?;
    }
    ensure(first.len() == 2 * ARTIFACTS.len() + 1, format!("{} files in the bundle", first.len()))?;
    Ok(format!("{} artifacts, {} files, byte-identical", ARTIFACTS.len(), first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("metrics oracle suite", metrics),
        ("statistical tests", statistics),
        ("svm pipeline", svm),
        ("z-score and area", zscore),
        ("planted-bias recovery", planted),
        ("ingestion fixtures", ingestion),
        ("prompt/parse", prompt),
        ("end-to-end determinism", determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
