use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use taskweight::cli::{self, DELTA_M_HEADER, TRAJECTORY_HEADER, WEIGHTS_HEADER};

const SMALL: &str = r#"{
  "seed": 3,
  "data": {"n": 100, "d": 3, "tasks": [
    {"name": "a", "margin": 2.0, "positive_rate": 0.4},
    {"name": "b", "margin": 0.7, "positive_rate": 0.3, "label_noise": 0.05}
  ]},
  "train": {"epochs": 3, "batch_size": 16, "hidden_dims": [4]}
}"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskweight"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_writes_header_plus_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("d.csv");
    let o = bin(&["gen-data", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert_eq!(text.lines().next().unwrap(), "x_0,x_1,x_2,y_a,y_b");
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"train": {"epochz": 3}}"#);
    let o = bin(&["compare", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epochz"));
}

#[test]
fn missing_files_exit_3() {
    let o = bin(&["delta-m", "--data", "/nonexistent/table.csv"]);
    assert_eq!(o.status.code(), Some(3));
    let o = bin(&["compare", "--config", "/nonexistent/c.json", "--out", "/tmp"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn divergence_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        &SMALL.replace(r#""hidden_dims": [4]"#, r#""hidden_dims": [4], "learning_rate": 1e300"#),
    );
    let o = bin(&["compare", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SMALL);
    let data = tmp.path().join("d.csv");
    assert!(bin(&["gen-data", "--config", s(&cfg), "--out", s(&data)]).status.success());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = bin(&["compare", "--config", s(&cfg), "--data", s(&data), "--out", s(dir)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["weights.csv", "delta_m.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let weights = fs::read_to_string(a.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().next(), Some(WEIGHTS_HEADER));
    // strategies x epochs x tasks
    assert_eq!(weights.lines().count(), 1 + 3 * 3 * 2);

    let dm = fs::read_to_string(a.join("delta_m.csv")).unwrap();
    let mut lines = dm.lines();
    assert_eq!(lines.next(), Some(DELTA_M_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let mut sum = 0.0;
    for r in &rows[..2] {
        let (stl, mtl, d): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!((d - (mtl - stl) / stl).abs() < 1e-7, "{r:?}");
        sum += d;
    }
    assert_eq!(rows[2][0], "TOTAL");
    assert!((rows[2][3].parse::<f64>().unwrap() - sum / 2.0).abs() < 1e-7);

    assert!(fs::read_to_string(a.join("summary.txt")).unwrap().contains("validation split"));
}

#[test]
fn simulate_rows_and_symmetry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"sim": {"epochs": 1, "strategies": ["deepchest"], "tasks": [
            {"ceiling": 1.0, "rate": 0.2}, {"ceiling": 1.0, "rate": 0.2}]}}"#,
    );
    let o = bin(&["simulate", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], TRAJECTORY_HEADER);
    for pair in lines[1..].chunks(2) {
        let a: Vec<&str> = pair[0].split(',').collect();
        let b: Vec<&str> = pair[1].split(',').collect();
        assert_eq!((a[4], a[6]), (b[4], b[6]));
        assert_eq!(a[5], "");
    }
}

#[test]
fn plot_series_and_empty_input() {
    let tmp = tempfile::tempdir().unwrap();
    let log = write(
        tmp.path(),
        "w.csv",
        &format!("{WEIGHTS_HEADER}\ndeepchest,0,a,1.1,0.5,0.6\ndeepchest,0,b,1.2,0.5,0.6\ndeepchest,1,a,1.0,0.4,0.7\ndeepchest,1,b,1.3,0.4,0.7\nuniform,0,a,1,0.5,0.6\n"),
    );
    let out = tmp.path().join("p.svg");
    assert!(bin(&["plot", "--data", s(&log), "--out", s(&out)]).status.success());
    let svg = fs::read_to_string(&out).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, 3);

    let empty = write(tmp.path(), "e.csv", &format!("{WEIGHTS_HEADER}\n"));
    let o = bin(&["plot", "--data", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let svg = fs::read_to_string(&out).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    assert!(svg.contains("no data"));
}

#[test]
fn delta_m_table() {
    let tmp = tempfile::tempdir().unwrap();
    let one = write(tmp.path(), "one.csv", "task,mtl_loss,stl_loss\nx,0.5,0.5\n");
    let o = bin(&["delta-m", "--data", s(&one)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().last().unwrap().trim_end().ends_with("0.00"), "{text}");

    let zero = write(tmp.path(), "zero.csv", "task,mtl_loss,stl_loss\nx,0.5,0\n");
    let o = bin(&["delta-m", "--data", s(&zero)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ZeroBaseline"));

    let bad = write(tmp.path(), "bad.csv", "task,stl_loss,mtl_loss\nx,0.5,0.5\n");
    assert_eq!(bin(&["delta-m", "--data", s(&bad)]).status.code(), Some(2));
}

#[test]
fn table_fixture_total() {
    let text = cli::cmd_delta_m(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/published_losses.csv")).unwrap();
    assert!(text.lines().last().unwrap().ends_with("-0.44"), "{text}");
}
