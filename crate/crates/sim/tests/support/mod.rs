//! Helpers for driving the binary and inspecting its CSV output.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use starnoma::tables::WALL_CLOCK_COLUMNS;

pub fn starnoma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starnoma")).args(args).output().expect("spawn starnoma")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = starnoma(args);
    assert!(out.status.success(), "starnoma {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Header and records of a CSV file.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// The CSV with wall-clock columns removed, re-serialized.
pub fn without_wall_clock(path: &Path) -> String {
    let (header, rows) = read_csv(path);
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !WALL_CLOCK_COLUMNS.contains(&header[i].as_str())).collect();
    let line = |cells: &[String]| keep.iter().map(|&i| cells[i].as_str()).collect::<Vec<_>>().join(",");
    std::iter::once(line(&header)).chain(rows.iter().map(|r| line(r))).collect::<Vec<_>>().join("\n")
}

/// Every CSV in `dir`, keyed by file name, with wall-clock columns removed.
pub fn csv_contents(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), without_wall_clock(&p)))
        .collect()
}

/// Columns whose every cell parses as a number must be finite; empty
/// tables still need a header.
pub fn check_csv(path: &Path) {
    let (header, rows) = read_csv(path);
    assert!(!header.is_empty(), "{}: no header", path.display());
    for row in &rows {
        assert_eq!(row.len(), header.len(), "{}: ragged row", path.display());
        for (h, cell) in header.iter().zip(row) {
            if let Ok(x) = cell.parse::<f64>() {
                assert!(x.is_finite(), "{}: column {h} holds {cell}", path.display());
            }
        }
    }
}

pub fn summary_column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}
