use std::collections::BTreeMap;
use std::path::Path;

use liverec::cli::{dispatch, read_events, write_event_file};
use liverec::dataset::{build_interaction_matrix, filter_min_interactions, split_holdout, top_up_merge, TrackKey};
use liverec::preview::{PresentationItem, PresentationList, PreviewResult};
use liverec::recommend::{
    evaluate, read_model_file, train_mf, write_model_file, EvalReport, Model, ModelBundle, TrainingConfig,
};
use liverec::scrobble::mock::{MockOptions, MockScrobbleServer, MockWorld};
use liverec::scrobble::{CrawlPlan, ScrobbleApiConfig, ScrobbleClient};
use liverec::study::{AnswerValue, GlobalResponse, LogEvent, LogRecord, ResponseLog, TrackResponse};
use liverec::synth::zipf_dataset;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("liverec").chain(args.iter().copied());
    let code = dispatch(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let r = run(&["frobnicate"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("Usage"), "{}", r.err);
    assert!(r.out.is_empty());

    assert_eq!(run(&[]).code, 2);
    assert_eq!(run(&["filter", "--in", "x.tsv"]).code, 2);
    assert_eq!(run(&["filter", "--in", "a", "--out", "b", "--min-le", "ten"]).code, 2);

    let help = run(&["--help"]);
    assert_eq!(help.code, 0);
    for cmd in ["crawl", "topup", "filter", "train", "evaluate", "serve", "export"] {
        assert!(help.out.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn runtime_errors_exit_1_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tsv");
    let r = run(&[
        "filter",
        "--in",
        p(&missing),
        "--out",
        p(&dir.path().join("o.tsv")),
        "--min-le",
        "1",
    ]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error: read:"), "{}", r.err);
}

#[test]
fn filter_prints_the_library_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("zipf.tsv");
    let output = dir.path().join("filtered.tsv");
    write_event_file(&input, &zipf_dataset(300, 2000, 20_000, 1.1, 9)).unwrap();

    let r = run(&["filter", "--min-le", "10", "--in", p(&input), "--out", p(&output)]);
    assert_eq!(r.code, 0, "{}", r.err);

    let ds = read_events(&input).unwrap();
    let (kept, report) = filter_min_interactions(&ds, 10);
    assert_eq!(r.out, format!("{}\n", serde_json::to_string_pretty(&report).unwrap()));
    let expected = dir.path().join("expected.tsv");
    write_event_file(&expected, &kept).unwrap();
    assert_eq!(std::fs::read(&output).unwrap(), std::fs::read(&expected).unwrap());
}

#[test]
fn topup_matches_library_merge() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, merged) = (
        dir.path().join("a.tsv"),
        dir.path().join("b.tsv"),
        dir.path().join("m.tsv"),
    );
    let da = zipf_dataset(50, 200, 2000, 1.0, 1);
    let db = zipf_dataset(60, 200, 2000, 1.0, 2);
    write_event_file(&a, &da).unwrap();
    write_event_file(&b, &db).unwrap();
    let r = run(&[
        "topup",
        "--base",
        p(&a),
        "--fresh",
        p(&b),
        "--out",
        p(&merged),
        "--seed",
        "7",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);

    let expected = top_up_merge(&read_events(&a).unwrap(), &read_events(&b).unwrap(), 7);
    let exp_path = dir.path().join("e.tsv");
    write_event_file(&exp_path, &expected).unwrap();
    assert_eq!(std::fs::read(&merged).unwrap(), std::fs::read(&exp_path).unwrap());
}

fn write_variants(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let mf = dir.join("mf.json");
    let vae = dir.join("vae.json");
    std::fs::write(
        &mf,
        r#"{"kind": "mf", "factors": 6, "als_iterations": 4, "alpha": 5.0}"#,
    )
    .unwrap();
    std::fs::write(
        &vae,
        r#"{"kind": "multvae", "name": "vae-small", "hidden": 12, "latent": 3, "epochs": 5, "batch_size": 16}"#,
    )
    .unwrap();
    (mf, vae)
}

#[test]
fn concurrent_training_equals_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("events.tsv");
    write_event_file(&input, &zipf_dataset(80, 300, 4000, 1.0, 4)).unwrap();
    let (mf, vae) = write_variants(dir.path());

    let both = dir.path().join("both");
    let r = run(&[
        "train",
        "--in",
        p(&input),
        "--variant",
        p(&mf),
        "--variant",
        p(&vae),
        "--out-dir",
        p(&both),
        "--seed",
        "11",
        "--min-le",
        "2",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.lines().count(), 2);

    let solo = dir.path().join("solo");
    for v in [&mf, &vae] {
        let r = run(&[
            "train",
            "--in",
            p(&input),
            "--variant",
            p(v),
            "--out-dir",
            p(&solo),
            "--seed",
            "11",
            "--min-le",
            "2",
        ]);
        assert_eq!(r.code, 0, "{}", r.err);
    }
    for name in ["mf", "vae-small"] {
        let a = std::fs::read(both.join(format!("{name}.lrs"))).unwrap();
        let b = std::fs::read(solo.join(format!("{name}.lrs"))).unwrap();
        assert!(a == b, "{name} differs between concurrent and sequential runs");
        assert_eq!(
            std::fs::read_to_string(both.join(format!("{name}.log"))).unwrap(),
            std::fs::read_to_string(solo.join(format!("{name}.log"))).unwrap()
        );
    }
    let log = std::fs::read_to_string(both.join("mf.log")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(log.starts_with("iteration 1 objective "));
    let log = std::fs::read_to_string(both.join("vae-small.log")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.lines().all(|l| l.starts_with("epoch ") && l.contains(" loss ")));
}

#[test]
fn train_and_evaluate_match_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("events.tsv");
    write_event_file(&input, &zipf_dataset(120, 300, 6000, 1.0, 5)).unwrap();
    let (mf, _) = write_variants(dir.path());
    let split_flags = [
        "--validation-fraction",
        "0.25",
        "--holdout-fraction",
        "0.3",
        "--split-seed",
        "3",
    ];

    let mut args = vec![
        "train",
        "--in",
        p(&input),
        "--variant",
        p(&mf),
        "--out-dir",
        p(dir.path()),
        "--seed",
        "2",
    ];
    args.extend(split_flags);
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.err);

    // the same pipeline through the library
    let ds = read_events(&input).unwrap();
    let m = build_interaction_matrix(&ds, false);
    let split = split_holdout(&m, 0.25, 0.3, 3).unwrap();
    let cfg = TrainingConfig {
        factors: 6,
        als_iterations: 4,
        alpha: 5.0,
        rng_seed: 2,
        ..TrainingConfig::default()
    };
    let model = train_mf(&split.train, &cfg).unwrap();
    let bundle = ModelBundle::new(Model::Mf(model), cfg, ds.track_keys());
    let lib_path = dir.path().join("lib.lrs");
    write_model_file(&lib_path, &bundle).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("mf.lrs")).unwrap(),
        std::fs::read(&lib_path).unwrap()
    );

    let model_path = dir.path().join("mf.lrs");
    let mut args = vec!["evaluate", "--in", p(&input), "--model", p(&model_path), "--k", "10"];
    args.extend(split_flags);
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.err);
    let expected = evaluate(&read_model_file(&lib_path).unwrap().model, &split, 10).unwrap();
    assert_eq!(r.out, format!("{}\n", serde_json::to_string(&expected).unwrap()));
    let printed: EvalReport = serde_json::from_str(r.out.trim()).unwrap();
    assert_eq!(printed.n_eval_users, 30);

    // a model trained on a different catalog is refused
    let mut args = vec![
        "evaluate",
        "--in",
        p(&input),
        "--model",
        p(&model_path),
        "--min-le",
        "5",
    ];
    args.extend(split_flags);
    assert_eq!(run(&args).code, 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn crawl_matches_library_crawl() {
    let world = MockWorld::synthetic(40, 100, 5..30, 4, 8);
    let server = MockScrobbleServer::start(world, MockOptions::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("crawl.tsv");
    let users = dir.path().join("users.txt");
    let config = dir.path().join("study.toml");
    std::fs::write(
        &config,
        format!(
            "[scrobble]\nbase_url = \"{}\"\nmin_request_interval_ms = 0\n",
            server.base_url()
        ),
    )
    .unwrap();
    let args = [
        "crawl",
        "--config",
        p(&config),
        "--seed-user",
        "user0",
        "--target",
        "15",
        "--seed",
        "21",
        "--out",
        p(&out),
        "--users-out",
        p(&users),
    ]
    .map(String::from);
    let r = tokio::task::spawn_blocking(move || run(&args.iter().map(String::as_str).collect::<Vec<_>>()))
        .await
        .unwrap();
    assert_eq!(r.code, 0, "{}", r.err);

    let client = ScrobbleClient::new(ScrobbleApiConfig {
        min_request_interval_ms: 0,
        ..ScrobbleApiConfig::new(server.base_url())
    })
    .unwrap();
    let plan = CrawlPlan {
        seed_usernames: vec!["user0".into()],
        target_user_count: 15,
        rng_seed: 21,
        max_friends_per_user: 50,
    };
    let crawled = client.crawl_social_graph(&plan).await.unwrap();
    let listed: Vec<String> = std::fs::read_to_string(&users)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(listed, crawled.usernames);
    let mut events = Vec::new();
    for u in &crawled.usernames {
        events.extend(client.fetch_user_history(u, None).await.unwrap());
    }
    let expected = liverec::dataset::Dataset::from_events(events);
    assert_eq!(read_events(&out).unwrap().events(), expected.events());
    let summary: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(summary["users"], 15);
    assert_eq!(summary["events"], expected.n_events());
}

#[test]
fn export_replays_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("log.ndjson");
    let log = ResponseLog::open(&log_path, false).unwrap();
    let track = TrackKey::new("Artist", "Song");
    let items = PresentationList {
        items: vec![PresentationItem {
            source_rank: 0,
            track: track.clone(),
            preview: PreviewResult {
                catalog_track_id: "c1".into(),
                preview_url: "https://p/c1.mp3".into(),
                artwork_url: "https://a/c1.jpg".into(),
                preview_duration: 30,
                embed_markup_ref: "https://c/embed/track/c1".into(),
            },
        }],
        requested_n: 1,
        discarded_count: 0,
        discarded: vec![],
        shortfall: false,
    };
    let answers: BTreeMap<String, AnswerValue> = [("fit".to_string(), AnswerValue::Scale(4))].into();
    let records = vec![
        LogRecord::event("s1", 1, LogEvent::Created),
        LogRecord::event("s1", 2, LogEvent::Consent),
        LogRecord::event(
            "s1",
            3,
            LogEvent::UsernameAccepted {
                username: "ann".into(),
                model: "mf".into(),
            },
        ),
        LogRecord::event("s1", 4, LogEvent::CollectionDone),
        LogRecord::event("s1", 5, LogEvent::RecommendationDone { items }),
        LogRecord::TrackResponse(TrackResponse {
            session_id: "s1".into(),
            rank: 1,
            track,
            answers: answers.clone(),
            answered_at: 6,
        }),
        LogRecord::GlobalResponse(GlobalResponse {
            session_id: "s1".into(),
            answers,
            answered_at: 7,
        }),
        LogRecord::event("s1", 8, LogEvent::LastResponse),
        LogRecord::event("s2", 9, LogEvent::Created),
    ];
    for rec in &records {
        log.append(rec).unwrap();
    }

    let r = run(&["export", "--log", p(&log_path)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(
        r.out,
        concat!(
            r#"{"kind":"track_response","session_id":"s1","username":"ann","model":"mf","session_state":"completed","rank":1,"artist":"Artist","title":"Song","answers":{"fit":4},"answered_at":6}"#,
            "\n",
            r#"{"kind":"global_response","session_id":"s1","username":"ann","model":"mf","session_state":"completed","rank":null,"artist":null,"title":null,"answers":{"fit":4},"answered_at":7}"#,
            "\n"
        )
    );
    let r = run(&["export", "--log", p(&log_path), "--from", "7"]);
    assert_eq!(r.out.lines().count(), 1);
    let out_file = dir.path().join("export.ndjson");
    assert_eq!(run(&["export", "--log", p(&log_path), "--out", p(&out_file)]).code, 0);
    assert_eq!(std::fs::read_to_string(&out_file).unwrap().lines().count(), 2);
}
