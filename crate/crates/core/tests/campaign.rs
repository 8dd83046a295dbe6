use std::path::Path;

use diacritic_core::adapter::InputMode;
use diacritic_core::campaign::{
    aggregate, aggregates_csv, read_records, run_campaign, AdapterSpec, CampaignConfig, CampaignError,
    OptimizerSettings, RecordStatus, ReferenceSource, TaskSpec, TransportSpec, AGGREGATES_FILE,
};
use diacritic_core::metrics::Metric;
use diacritic_core::perturb::unescape_unicode;
use diacritic_core::toy::ToyModel;

fn config(dir: &Path, dataset: &str, transport: TransportSpec, task: TaskSpec) -> CampaignConfig {
    let path = dir.join("data.jsonl");
    std::fs::write(&path, dataset).unwrap();
    CampaignConfig {
        dataset: path,
        task,
        budgets: vec![0, 1, 3],
        optimizer: OptimizerSettings {
            population_size: 10,
            iterations: 4,
            ..OptimizerSettings::default()
        },
        adapter: AdapterSpec {
            transport,
            input: InputMode::Image {
                canvas_width: 24,
                max_canvases: 3,
            },
            timeout_ms: Some(5_000),
            window: 4,
        },
        seed: 3,
        output_dir: dir.join("out"),
        max_inputs: None,
        escape_unicode: true,
        alphabet: None,
        workers: Some(2),
    }
}

const TRANSLATE_SET: &str = r#"{"id":"b","input":"the cat sees the dog","reference":"le chat voit le chien"}
{"id":"a","input":"hello world","reference":"bonjour monde"}
{"id":"c","input":"a small red car","reference":"un petit rouge voiture"}
"#;

#[test]
fn records_obey_their_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        TRANSLATE_SET,
        TransportSpec::Toy { model: ToyModel::Translate },
        TaskSpec::Generate {
            reference: ReferenceSource::Reference,
            metric: Metric::Chrf,
        },
    );
    let summary = run_campaign(&cfg).unwrap();
    assert_eq!(summary.failed, 0);
    let ids: Vec<(&str, usize)> = summary.records.iter().map(|r| (r.id.as_str(), r.budget)).collect();
    assert_eq!(ids, [("a", 0), ("a", 1), ("a", 3), ("b", 0), ("b", 1), ("b", 3), ("c", 0), ("c", 1), ("c", 3)]);
    for r in &summary.records {
        assert!(r.realized_marks <= r.genome_len);
        assert!(r.fitness_after.unwrap() <= r.fitness_before.unwrap());
        assert_eq!(r.metric_before, Some(100.0));
        if r.budget == 0 {
            assert_eq!(r.perturbed, r.original);
            assert_eq!(r.fitness_after, r.fitness_before);
            assert_eq!(r.genome_len, 1);
        }
        assert!(unescape_unicode(&r.perturbed).is_ok());
    }
    assert!(summary.records.iter().any(|r| r.success()), "no attack lowered chrF");

    // aggregates are a pure function of the records on disk
    let on_disk = read_records(&summary.output_dir).unwrap();
    assert_eq!(on_disk, summary.records);
    let csv = std::fs::read_to_string(summary.output_dir.join(AGGREGATES_FILE)).unwrap();
    assert_eq!(aggregates_csv(&aggregate(&on_disk)), csv);
    for name in ["records.jsonl", "aggregates.csv", "traces.jsonl", "timing.jsonl"] {
        assert!(std::fs::read(summary.output_dir.join(name)).unwrap().is_ascii(), "{name}");
    }
}

#[test]
fn unescaped_output_keeps_marks() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        TRANSLATE_SET,
        TransportSpec::Toy { model: ToyModel::Ocr },
        TaskSpec::Generate {
            reference: ReferenceSource::Input,
            metric: Metric::Levenshtein,
        },
    );
    cfg.escape_unicode = false;
    let summary = run_campaign(&cfg).unwrap();
    let marked = summary.records.iter().filter(|r| r.budget == 3).any(|r| !r.perturbed.is_ascii());
    assert!(marked);
}

#[test]
fn adapter_failures_mark_records_and_continue() {
    // answers until it sees "boom", then dies
    let script = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if "boom" in req.get("text", ""):
        sys.exit(1)
    print(json.dumps({"id": req["id"], "output": req.get("text", "")}), flush=True)
"#;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        dir.path(),
        "{\"id\":\"x\",\"input\":\"boom\"}\n",
        TransportSpec::Command {
            argv: vec!["python3".into(), "-u".into(), "-c".into(), script.into()],
        },
        TaskSpec::Generate {
            reference: ReferenceSource::Input,
            metric: Metric::Levenshtein,
        },
    );
    cfg.adapter.input = InputMode::Text;
    let summary = run_campaign(&cfg).unwrap();
    assert_eq!(summary.failed, 3);
    assert!(summary.records.iter().all(|r| r.status == RecordStatus::Failed && r.error.is_some()));
    assert!(summary.aggregates.iter().all(|a| a.failed == a.total));
}

#[test]
fn dataset_errors_abort_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "{\"id\":\"a\",\"input\":\"x\"}\n\n{\"id\":\"b\",\"input\":\"y\"}\n",
        TransportSpec::Toy { model: ToyModel::Translate },
        TaskSpec::Generate {
            reference: ReferenceSource::Reference,
            metric: Metric::Chrf,
        },
    );
    match run_campaign(&cfg) {
        Err(CampaignError::Dataset(e)) => assert!(e.to_string().contains("line 1"), "{e}"),
        other => panic!("{other:?}"),
    }
    assert!(!dir.path().join("out").exists());
}
