//! The external-evaluator driver must produce exactly the records of an
//! in-process run of the same objective.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;

use bbcov::objectives::holder_table;
use bbcov::objectives::protocol::{AskMessage, TellMessage, TellResult};
use bbcov::runner::{CampaignConfig, run_external, run_single};
use serde_json::Value;

fn evaluator(stream: UnixStream, fail_after: Option<usize>) -> std::thread::JoinHandle<usize> {
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        let mut batches = 0;
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap() == 0 {
                return batches;
            }
            let v: Value = serde_json::from_str(&line).unwrap();
            if v.get("done").is_some() {
                return batches;
            }
            if fail_after == Some(batches) {
                return batches; // hang up mid-campaign
            }
            let ask: AskMessage = serde_json::from_value(v).unwrap();
            // answer in reverse order: the driver matches by point
            let results: Vec<TellResult> = ask
                .points
                .iter()
                .rev()
                .map(|x| TellResult { x: x.clone(), y: holder_table(x) })
                .collect();
            let tell = TellMessage {
                campaign: Some(ask.campaign),
                seed: Some(ask.seed),
                results,
            };
            writeln!(writer, "{}", serde_json::to_string(&tell).unwrap()).unwrap();
            writeln!(writer).unwrap(); // blank lines are tolerated
            batches += 1;
        }
    })
}

fn external(base: &CampaignConfig) -> CampaignConfig {
    base.with_overrides(&[
        "objective.id=\"external\"",
        "objective.lower=[-10.0, -10.0]",
        "objective.upper=[10.0, 10.0]",
    ])
    .unwrap()
}

#[test]
fn external_records_match_in_process() {
    let base = CampaignConfig::preset("holder").unwrap().with_overrides(&["budget=800"]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_single(&base, &dir.path().join("inproc")).unwrap();

    let (ours, theirs) = UnixStream::pair().unwrap();
    let worker = evaluator(theirs, None);
    let reader = BufReader::new(ours.try_clone().unwrap());
    let summary = run_external(&external(&base), &dir.path().join("ext"), reader, ours).unwrap();
    assert!(worker.join().unwrap() > 1);
    assert_eq!(summary.manifest.records, 800);
    assert!(summary.manifest.truncated.is_none());

    let a = fs::read(dir.path().join("inproc/records.csv")).unwrap();
    let b = fs::read(dir.path().join("ext/records.csv")).unwrap();
    assert!(a == b, "external and in-process records differ");
}

#[test]
fn evaluator_hangup_truncates() {
    let base = CampaignConfig::preset("holder").unwrap().with_overrides(&["budget=800"]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (ours, theirs) = UnixStream::pair().unwrap();
    let worker = evaluator(theirs, Some(3));
    let reader = BufReader::new(ours.try_clone().unwrap());
    let summary = run_external(&external(&base), dir.path(), reader, ours).unwrap();
    worker.join().unwrap();
    assert!(summary.manifest.truncated.is_some());
    assert!(summary.manifest.records < 800);
    assert!(dir.path().join("TRUNCATED").exists());
}
