use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn copy_synthetic(dest: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    for entry in fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            fs::copy(entry.path(), dest.join(entry.file_name())).unwrap();
        }
    }
    dest.join("config.json")
}

fn stormlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stormlens"))
        .args(args)
        .env("STORMLENS_LOG", "error")
        .output()
        .unwrap()
}

fn read(path: PathBuf) -> String {
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn report_on_the_synthetic_season() {
    let tmp = tempfile::tempdir().unwrap();
    let config = copy_synthetic(tmp.path());
    let out = stormlens(&["report", "--config", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("out");

    let summary = read(dir.join("attention_summary.csv"));
    assert!(summary.lines().count() > 6, "{summary}");
    assert!(summary.contains("Dune"));

    let fits = read(dir.join("decay_fits.csv"));
    assert!(fits.contains("biexponential") && fits.contains("powerlaw"));

    let post = read(dir.join("posterior_reg1.csv"));
    assert!(post.starts_with("param,mean,sd,mc_error,hpd_2.5,hpd_97.5,n_eff,Rhat"));
    for p in ["a0", "a_death", "a_damage", "sigma"] {
        assert!(
            post.lines().any(|l| l.starts_with(&format!("{p},"))),
            "{post}"
        );
    }

    for season in [2017, 2018] {
        let text = read(dir.join(format!("attention_map_{season}.geojson")));
        let parsed: geojson::GeoJson = text.parse().unwrap();
        assert!(matches!(parsed, geojson::GeoJson::FeatureCollection(_)));
    }
    assert!(dir.join("radar_table.csv").exists());
    assert!(dir.join("attention_share_2017.csv").exists());
}

#[test]
fn ingest_writes_counts_and_skips() {
    let tmp = tempfile::tempdir().unwrap();
    let config = copy_synthetic(tmp.path());
    let out = stormlens(&["ingest", "--config", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let counts = read(tmp.path().join("out/counts.tsv"));
    assert!(counts.contains("#hurricanedune"));
    let skips = read(tmp.path().join("out/ingest_skips.tsv"));
    assert!(skips.starts_with("record\treason"), "{skips}");
    assert_eq!(skips.lines().skip(1).count(), 2, "{skips}");
}

#[test]
fn seed_changes_the_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let config = copy_synthetic(tmp.path());
    let config = config.to_str().unwrap();
    let mut posteriors = Vec::new();
    for seed in ["1", "2"] {
        let out = stormlens(&["regress", "--config", config, "--seed", seed]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        posteriors.push(read(tmp.path().join("out/posterior_reg1.csv")));
    }
    assert_ne!(posteriors[0], posteriors[1]);
}

#[test]
fn missing_impacts_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let config = copy_synthetic(tmp.path());
    fs::remove_file(tmp.path().join("impacts.csv")).unwrap();
    let out = stormlens(&["metrics", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("impacts.csv"), "{err}");
}

#[test]
fn seeded_commands_require_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = copy_synthetic(tmp.path());
    let text = read(config.clone()).replace("\"seed\": 2017,", "");
    fs::write(&config, text).unwrap();
    let out = stormlens(&["fit-decay", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let out = stormlens(&["metrics", "--config", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = copy_synthetic(tmp.path());
    let text = read(config.clone()).replacen('{', "{\n  \"sede\": 3,", 1);
    fs::write(&config, text).unwrap();
    let out = stormlens(&["metrics", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}
