mod common;

use std::collections::BTreeSet;
use std::io::BufReader;

use common::{model, polytope};
use gsoliton::record::{read_snapshot, write_snapshot, RecordHeader, RunRecord, SCHEMA_VERSION};
use gsoliton::solver::{continue_path, SolveConfig};
use gsoliton::toricfield::PotentialField;
use gsoliton::weights::WeightFunction;
use gsoliton::Error;

fn small_record() -> RunRecord {
    let m = model("p1", 6.0, 33);
    let g = WeightFunction::make_constant(polytope("p1"));
    let cfg = SolveConfig::default();
    let run = continue_path(&PotentialField::zero(m.clone()), &g, &cfg, 0.3).unwrap();
    RunRecord::from_run(RecordHeader::new(&m, &g, &cfg, 0.3), &run, 0.0)
}

fn keys(line: &str) -> BTreeSet<String> {
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn record_round_trips() {
    let rec = small_record();
    assert!(rec.states.len() >= 3);
    let text = rec.to_string().unwrap();
    let back = RunRecord::read(BufReader::new(text.as_bytes())).unwrap();
    assert_eq!(back, rec);
    // Fields come back bit for bit.
    let m = back.model().unwrap();
    let last = rec.states.len() - 1;
    assert_eq!(back.field(&m, last).unwrap().values(), rec.field(&m, last).unwrap().values());
}

#[test]
fn record_schema_is_pinned() {
    let rec = small_record();
    let text = rec.to_string().unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), rec.states.len() + 2);
    let header: BTreeSet<&str> = [
        "type",
        "schema_version",
        "producer",
        "polytope",
        "polytope_hash",
        "polytope_text",
        "weight",
        "weight_label",
        "grid",
        "reference",
        "solve",
        "t_max",
    ]
    .into_iter()
    .collect();
    assert_eq!(keys(lines[0]), header.iter().map(|s| s.to_string()).collect());
    let state: BTreeSet<String> = ["type", "t", "newton", "energies", "lambda1", "diagnostics", "near_degenerate", "phi_hi", "phi_lo"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(keys(lines[1]), state);
    let stop: BTreeSet<String> = ["type", "stop", "rejections", "elapsed_s"].iter().map(|s| s.to_string()).collect();
    assert_eq!(keys(lines.last().unwrap()), stop);
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["type"], "header");
}

#[test]
fn malformed_records_are_rejected() {
    let rec = small_record();
    let text = rec.to_string().unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let read = |s: String| RunRecord::read(BufReader::new(s.as_bytes()));

    assert!(matches!(read(String::new()), Err(Error::Record(_))));
    assert!(matches!(read(lines[1..].join("\n")), Err(Error::Record(_))));
    assert!(matches!(read(format!("{}\nnot json\n", lines[0])), Err(Error::Record(_))));
    let bumped = lines[0].replacen(&format!("\"schema_version\":{SCHEMA_VERSION}"), "\"schema_version\":99", 1);
    assert!(matches!(read(bumped), Err(Error::Record(_))));
    // States out of order.
    let swapped = [lines[0], lines[2], lines[1]].join("\n");
    assert!(matches!(read(swapped), Err(Error::Record(_))));
    // A tampered polytope no longer matches its hash.
    let mut r = rec.clone();
    r.header.polytope_text = r.header.polytope_text.replace("facet -1 -1", "facet -1 -2");
    assert!(r.polytope().is_err());
}

#[test]
fn plot_columns_have_one_row_per_state() {
    let rec = small_record();
    let cols = rec.plot_columns();
    let rows: Vec<&str> = cols.lines().collect();
    assert!(rows[0].starts_with("# t E"));
    assert_eq!(rows.len(), rec.states.len() + 1);
    let width = rows[0].split_whitespace().count() - 1;
    assert!(rows[1..].iter().all(|r| r.split_whitespace().count() == width));
}

#[test]
fn snapshot_round_trips() {
    let rec = small_record();
    let m = rec.model().unwrap();
    let f = rec.field(&m, rec.states.len() - 1).unwrap();
    let mut buf = Vec::new();
    write_snapshot(&f, &mut buf).unwrap();
    let back = read_snapshot(m.clone(), BufReader::new(buf.as_slice())).unwrap();
    assert_eq!(back.parts(), f.parts());
    // A snapshot does not load onto another grid.
    let other = model("p1", 6.0, 65);
    assert!(read_snapshot(other, BufReader::new(buf.as_slice())).is_err());
}
