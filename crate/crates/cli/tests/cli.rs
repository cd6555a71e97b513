use std::path::Path;
use std::process::Command;

use wavepinn_cli::commands::{export_points, theory, AprioriConfig, TheoryConfig};
use wavepinn_cli::pipeline::{sweep_header, CachedTraining};
use wavepinn_cli::presets::damped_wave_setting;
use wavepinn_cli::{run, sweep, RunConfig, SeedReport};

fn tiny(out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.architecture.hidden = vec![8, 8];
    c.train.max_iterations = 15;
    c.train.history_stride = 1;
    c.settings = vec![damped_wave_setting(144).unwrap()];
    c.seeds = vec![0, 1];
    c.metric_factor = 2;
    c.bound.fd_nodes = 9;
    c.out = out.to_path_buf();
    c
}

fn without_timing(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(o) = v.as_object_mut() {
        o.remove("timing");
        if let Some(r) = o.get_mut("record").and_then(|r| r.as_object_mut()) {
            r.remove("wall_seconds");
        }
    }
    v
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn keys(v: &serde_json::Value) -> Vec<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn sweep_csv_header_is_stable() {
    let golden = "setting,aggregate,M_total,M_PDE,M_s,M_t,E_T,E_pde_sq,E_su_sq,E_sut_sq,E_u0_sq,E_u1_sq,E_grad_sq,\
initial_E_T,l2_error,h1_quantity,h1_norm,bound,log10_bound,log10_bound_over_l2,iterations,final_loss,train_seconds";
    assert_eq!(sweep_header().join(","), golden);
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let reports = sweep(&cfg).unwrap();
    assert_eq!(reports.len(), 1);
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], golden);
    // mean, min and max rows for the single setting.
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("m144,mean,144,"));
}

#[test]
fn report_field_names_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    run(&tiny(dir.path())).unwrap();
    let seed = read_json(&dir.path().join("m144/seed-0.json"));
    assert_eq!(
        keys(&seed),
        ["bound", "fingerprint", "h1", "initial_training", "l2_error", "record", "seed", "setting", "sizes", "training"]
    );
    assert_eq!(
        keys(&seed["training"]),
        ["grad", "pde", "sizes", "su", "sut", "total", "total_sq", "u0", "u1"]
    );
    assert_eq!(
        keys(&seed["bound"]),
        [
            "bound_value",
            "c_of_m",
            "gronwall_factor",
            "include_nonlinearity",
            "log10_bound",
            "log10_c_of_m",
            "norm_source",
            "prefactor",
            "terms"
        ]
    );
    let report = read_json(&dir.path().join("m144/report.json"));
    assert_eq!(keys(&report), ["bound_mode", "metrics", "seeds", "setting", "sizes", "terminations", "timing"]);
    assert_eq!(report["metrics"].as_object().unwrap().len(), 16);
    assert!(dir.path().join("m144/train-seed-1.json").exists());
}

#[test]
fn zero_iterations_reports_initial_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.train.max_iterations = 0;
    cfg.seeds = vec![3];
    let (_, seeds) = run(&cfg).unwrap();
    assert_eq!(seeds[0].record.iterations, 0);
    assert_eq!(seeds[0].training, seeds[0].initial_training);
}

#[test]
fn identical_configs_give_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&tiny(a.path())).unwrap();
    let mut cb = tiny(b.path());
    cb.out = b.path().to_path_buf();
    run(&cb).unwrap();
    for f in ["m144/report.json", "m144/seed-0.json", "m144/seed-1.json"] {
        let mut ja = without_timing(read_json(&a.path().join(f)));
        let mut jb = without_timing(read_json(&b.path().join(f)));
        // Only `out` differs between the two configs and it is not part of any report.
        ja.as_object_mut().unwrap().remove("fingerprint");
        jb.as_object_mut().unwrap().remove("fingerprint");
        assert_eq!(ja, jb, "{f}");
    }
}

#[test]
fn completed_seeds_are_not_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    run(&cfg).unwrap();
    let seed_path = SeedReport::path(&dir.path().join("m144"), 0);
    let train_path = CachedTraining::path(&dir.path().join("m144"), 0);
    let before = std::fs::read_to_string(&seed_path).unwrap();
    let stamp = std::fs::metadata(&seed_path).unwrap().modified().unwrap();
    run(&cfg).unwrap();
    assert_eq!(std::fs::metadata(&seed_path).unwrap().modified().unwrap(), stamp);
    assert_eq!(std::fs::read_to_string(&seed_path).unwrap(), before);

    // Evaluation-only change: training is reused, the report is redone.
    let train_before = std::fs::read_to_string(&train_path).unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.bound.fd_nodes = 11;
    run(&cfg2).unwrap();
    assert_eq!(std::fs::read_to_string(&train_path).unwrap(), train_before);
    let after: SeedReport = serde_json::from_str(&std::fs::read_to_string(&seed_path).unwrap()).unwrap();
    assert_eq!(after.fingerprint["bound"]["fd_nodes"], 11);
    let old: SeedReport = serde_json::from_str(&before).unwrap();
    assert_eq!(after.record.loss_history, old.record.loss_history);
}

#[test]
fn invalid_config_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds.clear();
    assert!(run(&cfg).is_err());
    assert!(!dir.path().join("m144").exists());
}

#[test]
fn theory_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = theory(&TheoryConfig::default(), dir.path()).unwrap();
    assert_eq!(out.widths, (338, 19440));
    assert!(out.lambdas.is_none() && out.skipped.is_some());
    let rates = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let mut lines = rates.lines();
    assert_eq!(lines.next().unwrap(), "N,generalization,training_network,m_s_term,m_t_term,m_pde_term,training_total");
    let gen: Vec<f64> = lines
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gen.len(), 59);
    assert!(gen.windows(2).all(|w| w[1] < w[0]));
    let json = read_json(&dir.path().join("theory.json"));
    assert_eq!(keys(&json), ["lambdas", "residual_bounds", "sizing", "skipped", "widths"]);

    let mut cfg = TheoryConfig::default();
    cfg.apriori = vec![AprioriConfig { epsilon: 0.1, d: 1, k: 146 }];
    let err = format!("{:#}", theory(&cfg, dir.path()).unwrap_err());
    assert!(err.contains("hypothesis violated") && err.contains("η = 146"), "{err}");

    let mut cfg = TheoryConfig::default();
    cfg.inputs.seminorm_hk1 = Some(1.0);
    cfg.inputs.w_inf = Some([0.1, 0.5, 2.0]);
    let out = theory(&cfg, dir.path()).unwrap();
    assert_eq!(out.lambdas.unwrap().len(), 3);
    assert!(out.residual_bounds.unwrap().pde > 0.0);
}

#[test]
fn export_points_writes_strata_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds = vec![0];
    run(&cfg).unwrap();
    let written = export_points(&cfg, Some(&dir.path().join("m144/seed-0.json")), 5).unwrap();
    assert_eq!(written.len(), 4);
    let pts = std::fs::read_to_string(dir.path().join("points-m144.csv")).unwrap();
    assert_eq!(pts.lines().next().unwrap(), "stratum,x1,x2,t,weight");
    assert_eq!(pts.lines().count(), 145);
    let field = std::fs::read_to_string(dir.path().join("error-t0.25.csv")).unwrap();
    assert!(field.starts_with("# t=0.25 "));
    assert_eq!(field.lines().count(), 6);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavepinn"))
}

#[test]
fn binary_exit_codes_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["theory", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("widths 338 19440"));

    let out = bin().args(["train", "--preset", "fig5-huge"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let cfg_path = dir.path().join("cfg.json");
    let mut cfg = tiny(Path::new("ignored"));
    cfg.train.max_iterations = 2;
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let env_out = dir.path().join("from-env");
    let out = bin()
        .args(["train", "--seeds", "4..5", "--config"])
        .arg(&cfg_path)
        .env("WAVEPINN_OUT", &env_out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_out.join("m144/seed-4.json").exists());
    assert!(!Path::new("ignored").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seeds": []}"#).unwrap();
    let out = bin().args(["train", "--config"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}
