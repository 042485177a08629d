use std::fs;
use std::path::Path;
use std::process::Command;

use crossaug::io::{cache, idx, model, tabular};
use crossaug::report;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossaug"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const SMALL_DIGITS: &str = r#"
[data]
source = "synthetic-digits"
rows = 240

[mapping.train]
epochs = 2

[classifier]
conv_filters = [4, 8]
dense_units = 16

[classifier.train]
epochs = 1

[experiment]
values = [6, 12]
folds = 2
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn usage_and_config_errors_exit_2() {
    let (code, _, err) = run(&["experiment", "--bogus"]);
    assert_eq!(code, 2);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(run(&[]).0, 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[experiment]\nfoldz = 3\n");
    let (code, _, err) = run(&["experiment", "-c", &cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("foldz"), "{err}");

    let cfg = write_config(dir.path(), "c2.toml", "[image]\ncommon = 28\n");
    let out = dir.path().join("o");
    let (code, _, err) = run(&["mask-images", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("bad.idx");
    fs::write(&images, [0u8, 0, 8, 2, 0, 0, 0, 1]).unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!(
            "[data]\nsource = \"image-idx\"\nimages = [{:?}]\nlabels = {:?}\n",
            images.to_str().unwrap(),
            images.to_str().unwrap()
        ),
    );
    let out = dir.path().join("o");
    let (code, _, err) = run(&["mask-images", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("event=failed") && err.contains("magic"), "{err}");

    let (code, _, _) = run(&["report", "--input", "/definitely/missing.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn gradcheck_prints_every_kind() {
    let (code, stdout, _) = run(&["gradcheck", "--seeds", "3"]);
    assert_eq!(code, 0);
    for kind in crossaug::gradcheck::KINDS {
        assert!(stdout.contains(&format!("layer={kind} ")), "{stdout}");
    }
    assert_eq!(stdout.lines().count(), 10);
}

#[test]
fn image_pipeline_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let cfg = write_config(d, "gen.toml", "[data]\nrows = 120\nseed = 4\n");
    assert_eq!(run(&["synth-digits", "-c", &cfg, "--out", data.to_str().unwrap()]).0, 0);
    assert!(data.join("resolved.toml").exists());

    let body = format!(
        "[data]\nsource = \"image-idx\"\nimages = [{:?}]\nlabels = {:?}\n[image]\ncommon = 6\n[mapping.train]\nepochs = 2\n",
        data.join("images.idx").to_str().unwrap(),
        data.join("labels.idx").to_str().unwrap()
    );
    let cfg = write_config(d, "img.toml", &body);

    let masked = d.join("masked");
    let (code, _, err) = run(&["mask-images", "-c", &cfg, "--side", "B", "--out", masked.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let m = idx::read_images(&masked.join("masked-images.idx")).unwrap();
    assert_eq!(m.shape(), &[120, 28, 28, 1]);
    // side B with n = 6 keeps columns 11..=27
    assert!((0..120).all(|i| (0..28).all(|r| m.data()[(i * 28 + r) * 28 + 10] == 0.0)));
    let common = cache::read_cache(&masked.join("common.bin")).unwrap();
    assert_eq!(common.data.shape(), &[120, 6 * 28]);
    assert!(err.contains("event=written"));

    let fit = d.join("fit");
    assert_eq!(run(&["fit-mapping", "-c", &cfg, "--out", fit.to_str().unwrap()]).0, 0);
    let mapping = model::read_mapping(&fit.join("mapping.txt")).unwrap();
    assert_eq!(mapping.input_width(), 6 * 28);
    assert_eq!(mapping.output_width(), 17 * 28);
    assert_eq!(fs::read_to_string(fit.join("fit_history.csv")).unwrap().lines().count(), 3);

    let aug = d.join("aug");
    let mp = fit.join("mapping.txt");
    let (code, _, err) = run(&["augment", "-c", &cfg, "--model", mp.to_str().unwrap(), "--out", aug.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let images = idx::read_images(&aug.join("augmented-images.idx")).unwrap();
    assert_eq!(images.shape(), &[60, 28, 28, 1]);
    let prov = tabular::read_sidecar(&aug.join("augmented-images.provenance.csv")).unwrap();
    assert_eq!(prov.len(), 28);
    assert_eq!(prov.iter().filter(|(_, s)| *s).count(), 11);
    assert!(!aug.join("mapping.txt").exists());
}

#[test]
fn tabular_pipeline_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = write_config(
        d,
        "gen.toml",
        "[data]\nsource = \"synthetic-pair\"\n[data.synthetic]\nrows_a = 150\nrows_b = 300\n[mapping.train]\nepochs = 3\n[classifier.train]\nepochs = 2\n[experiment]\nfolds = 2\nvalues = [100, 0]\n",
    );
    let pair_dir = d.join("pair");
    let (code, _, err) = run(&["synth-pair", "-c", &gen, "--out", pair_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(pair_dir.join("gdc.csv").exists() && pair_dir.join("seer.csv").exists());
    let header = fs::read_to_string(pair_dir.join("gdc.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with("survival_months,id"));

    let cfg = pair_dir.join("pair.toml");
    let cfg = cfg.to_str().unwrap();
    let aug = d.join("aug");
    let (code, _, err) = run(&["augment", "-c", cfg, "--out", aug.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let mut reader = csv::Reader::from_path(aug.join("augmented.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().len(), 68 + 51 + 2);
    assert_eq!(reader.records().count(), 150);
    let prov = tabular::read_sidecar(&aug.join("augmented.provenance.csv")).unwrap();
    assert_eq!(prov.iter().filter(|(_, s)| *s).count(), 51);
    assert!(prov.iter().filter(|(_, s)| *s).all(|(n, _)| n.starts_with("seer:")));
    let cached = cache::read_cache(&aug.join("augmented.bin")).unwrap();
    assert_eq!(cached.data.shape(), &[150, 119]);

    let swapped = d.join("swapped");
    let (code, _, err) = run(&["augment", "-c", cfg, "--side", "B", "--variant", "vae", "--out", swapped.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let prov = tabular::read_sidecar(&swapped.join("augmented.provenance.csv")).unwrap();
    assert_eq!(prov.len(), 78 + 41);

    let exp = d.join("exp");
    let (code, _, err) = run(&["experiment", "-c", cfg, "--out", exp.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = report::read_csv(&exp.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.folds.len() == 2 && r.error.is_empty()));
    assert!(err.contains("event=cell_done"));
}

#[test]
fn failed_cells_are_recorded_and_others_proceed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "[data]\nsource = \"synthetic-pair\"\n[data.synthetic]\nrows_a = 120\nrows_b = 200\n[mapping.train]\nepochs = 1\n[classifier.train]\nepochs = 1\n[experiment]\nfolds = 2\nvalues = [100, 5000]\nvariants = [\"baseline\", \"ae\"]\n",
    );
    let out = dir.path().join("o");
    let (code, _, err) = run(&["experiment", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(err.contains("event=cell_failed"));
    let rows = report::read_csv(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[..2].iter().all(|r| r.error.is_empty() && r.mean_f1.is_some()));
    assert!(rows[2..].iter().all(|r| !r.error.is_empty() && r.mean_f1.is_none()));
}

#[test]
fn jobs_and_replay_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.toml", SMALL_DIGITS);
    let (one, two, replay) = (d.join("one"), d.join("two"), d.join("replay"));
    assert_eq!(run(&["experiment", "-c", &cfg, "--jobs", "1", "--out", one.to_str().unwrap()]).0, 0);
    assert_eq!(run(&["experiment", "-c", &cfg, "--jobs", "2", "--out", two.to_str().unwrap()]).0, 0);
    let resolved = one.join("resolved.toml");
    assert_eq!(
        run(&["experiment", "-c", resolved.to_str().unwrap(), "--jobs", "1", "--out", replay.to_str().unwrap()]).0,
        0
    );
    let a = fs::read(one.join("results.csv")).unwrap();
    assert_eq!(a, fs::read(two.join("results.csv")).unwrap());
    assert_eq!(a, fs::read(replay.join("results.csv")).unwrap());
    let svg = fs::read_to_string(one.join("results.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="xtick""#).count(), 2);

    let rep = d.join("rep");
    let csv = one.join("results.csv");
    assert_eq!(run(&["report", "--input", csv.to_str().unwrap(), "--out", rep.to_str().unwrap()]).0, 0);
    assert_eq!(fs::read(rep.join("results.csv")).unwrap(), a);
    assert_eq!(fs::read_to_string(rep.join("results.svg")).unwrap(), svg);
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            crossaug::config::RunConfig::load(&p).and_then(|c| c.resolve()).unwrap_or_else(|e| panic!("{e}"));
            n += 1;
        }
    }
    assert!(n >= 4);
}
