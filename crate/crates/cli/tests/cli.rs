use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn run(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lattice-eit"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join(format!("cfg{}.toml", extra.len()));
    std::fs::write(
        &p,
        format!(
            "design = {:?}\nscenario = {:?}\n[mesh]\nmax_edge = 3.0\n{extra}",
            root().join("designs/A.toml"),
            root().join("scenarios/single_cut.txt")
        ),
    )
    .unwrap();
    p
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&tmp.path().join("missing.toml"), &out, &["generate"]).status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[mesh]\nmax_edge = 0\n").unwrap();
    let o = run(&bad, &out, &["mesh"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh: "));
    let few = tmp.path().join("few.toml");
    std::fs::write(&few, format!("[compare]\ndesigns = [{:?}]\n", root().join("designs/B.toml"))).unwrap();
    assert_eq!(run(&few, &out, &["compare-designs"]).status.code(), Some(2));
    let no_scenario = tmp.path().join("ns.toml");
    std::fs::write(&no_scenario, format!("design = {:?}\n", root().join("designs/A.toml"))).unwrap();
    assert_eq!(run(&no_scenario, &out, &["simulate"]).status.code(), Some(2));
}

#[test]
fn stale_and_missing_upstream_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = config(tmp.path(), "");
    let o = run(&cfg, &out, &["mesh"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `generate` first"));
    for s in ["generate", "mesh", "simulate"] {
        assert!(run(&cfg, &out, &[s]).status.success(), "{s}");
    }
    // frames were taken under the adjacent protocol
    let across = config(tmp.path(), "[protocol]\nscheme = \"across\"\noffset = 11\n");
    assert_eq!(run(&across, &out, &["reconstruct"]).status.code(), Some(4));
    // electrode settings changed since the mesh was written
    let moved = config(tmp.path(), "[electrodes]\ncontact_length = 3.0\n");
    assert_eq!(run(&moved, &out, &["forward"]).status.code(), Some(4));
    // the original config still reconstructs and renders
    assert!(run(&cfg, &out, &["reconstruct"]).status.success());
    assert!(run(&cfg, &out, &["render"]).status.success());
    assert!(out.join("renders/image_001.svg").is_file());
}

#[test]
fn compare_designs_writes_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cmp.toml");
    let list: Vec<String> = ["A", "B", "C", "D"]
        .iter()
        .map(|n| format!("{:?}", root().join(format!("designs/{n}.toml"))))
        .collect();
    std::fs::write(&cfg, format!("[mesh]\nmax_edge = 3.0\n[compare]\ndesigns = [{}]\n", list.join(", "))).unwrap();
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, &["compare-designs"]).status.success());
    let text = std::fs::read_to_string(out.join("ranking.txt")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').count() == 8));
}
