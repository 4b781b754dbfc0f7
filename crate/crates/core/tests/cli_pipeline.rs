//! simulate -> validate -> fit -> calibrate -> test -> dpl -> report through the
//! command-line entry point, plus resume and the exit codes.

use std::path::Path;

use bnpgi::cli::{cli_main, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use bnpgi::inference::{reports_from_toml, Calibration};
use bnpgi::runtime::ChainOutput;

const SPEC: &str = r#"
seed = 5
n_controls = 40
n_cases = 40
loci_per_gene = [4, 3]
[environment]
dim = 1
case_mean = 0.5
[generator]
kind = "subpopulation"
k = 2
dpl = [{ gene = 0, locus = 2, delta = 0.4 }]
"#;

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("bnpgi").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let spec = root.join("spec.toml");
    std::fs::write(&spec, SPEC).unwrap();
    let data = root.join("data");
    assert_eq!(run(&["simulate", "--spec", s(&spec), "--out", s(&data)]), EXIT_OK);
    for f in ["genotypes.csv", "genemap.csv", "environment.csv", "truth.toml"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let (g, m, e) = (data.join("genotypes.csv"), data.join("genemap.csv"), data.join("environment.csv"));
    let input = ["--genotypes", s(&g), "--genemap", s(&m), "--environment", s(&e)];
    assert_eq!(run(&[&["validate"][..], &input].concat()), EXIT_OK);

    for model in ["gg", "ge", "hdp"] {
        let out = root.join(model);
        let common = [
            &["--model", model, "--iterations", "120", "--burn-in", "60", "--thinning", "2", "--out", s(&out), "--m", "8"][..],
            &input,
        ]
        .concat();
        assert_eq!(run(&[&["fit", "--checkpoint-every", "40"][..], &common].concat()), EXIT_OK, "fit {model}");
        let chain = ChainOutput::read_dir(&out).unwrap();
        assert_eq!(chain.n_retained(), 30);
        assert!(out.join("checkpoint.json").exists());
        assert!(out.join("config.toml").exists());

        // resuming a finished run reproduces it
        let first = chain.hash();
        assert_eq!(run(&[&["fit", "--resume"][..], &common].concat()), EXIT_OK);
        assert_eq!(ChainOutput::read_dir(&out).unwrap().hash(), first);

        let cal_path = out.join("calibration.toml");
        assert_eq!(run(&[&["calibrate", "--seeds", "11,12", "--quantile", "0.6"][..], &common].concat()), EXIT_OK);
        let cal = Calibration::from_file(&cal_path).unwrap();
        assert_eq!(cal.seeds, vec![11, 12]);
        assert!(!cal.thresholds.is_empty());

        assert_eq!(run(&["test", "--chain", s(&out), "--calibration", s(&cal_path)]), EXIT_OK, "test {model}");
        let reports = reports_from_toml(&std::fs::read_to_string(out.join("tests.toml")).unwrap()).unwrap();
        assert!(reports.iter().any(|r| r.test.starts_with("gene_effect")));
        assert!(reports.iter().all(|r| (0.0..=1.0).contains(&r.probability)));
        if model != "gg" {
            assert!(reports.iter().any(|r| r.test.starts_with("env_coefficient")));
        }

        assert_eq!(run(&["dpl", "--chain", s(&out)]), EXIT_OK);
        let calls = reports_from_toml(&std::fs::read_to_string(out.join("dpl.toml")).unwrap()).unwrap();
        assert_eq!(calls.len(), 7);
        assert_eq!(run(&["report", "--chain", s(&out), "--prefix", "pbar"]), EXIT_OK);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(run(&["fit", "--iterations", "10", "--burn-in", "10"]), EXIT_USAGE);
    assert_eq!(run(&["fit", "--dp-alpha=0"]), EXIT_USAGE);
    let g = root.join("g.csv");
    let m = root.join("m.csv");
    std::fs::write(&g, "subject,group,chrom,rs1\ns1,0,1,1\ns1,0,2,3\n").unwrap();
    std::fs::write(&m, "locus,gene\nrs1,G1\n").unwrap();
    assert_eq!(run(&["validate", "--genotypes", s(&g), "--genemap", s(&m)]), EXIT_DATA);
}
