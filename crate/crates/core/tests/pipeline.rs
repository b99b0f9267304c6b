use std::fs;
use std::path::Path;

use motiongen::pipeline::*;
use motiongen::Error;

fn tiny(dir: &Path, seed: u64) -> PipelineConfig {
    let text = format!(
        r#"
seed = {seed}
artifact_dir = "{}"

[corpus]
count = 36

[tokenizer]
steps = 30

[model]
d_model = 16
heads = 2
layers = 1
ffn = 32

[sft]
steps = 4
batch_size = 4

[grpo]
steps = 2
prompts_per_step = 1
max_new = 24

[reward]
group_size = 3

[eval]
gallery_size = 8
repetitions = 2
"#,
        dir.display()
    );
    PipelineConfig::from_toml_str(&text).unwrap()
}

fn config_errors(text: &str) -> Vec<String> {
    match PipelineConfig::from_toml_str(text) {
        Err(Error::Config(v)) => v,
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn empty_config_lists_required_fields() {
    let v = config_errors("");
    assert!(v.iter().any(|s| s.contains("seed")), "{v:?}");
    assert!(v.iter().any(|s| s.contains("artifact_dir")), "{v:?}");
}

#[test]
fn every_violation_is_reported() {
    let v = config_errors(
        "seed = 1\nartifact_dir = \"a\"\n[reward]\nclip_eps = 1.5\n[sft]\nbatch_size = 0\n[eval.reflect]\ntemperature = -1.0\n",
    );
    assert!(v.iter().any(|s| s.contains("reward.clip_eps")), "{v:?}");
    assert!(v.iter().any(|s| s.contains("sft.batch_size")), "{v:?}");
    assert!(v.iter().any(|s| s.contains("eval.reflect.temperature")), "{v:?}");
    let v = config_errors("[reward]\nclip_eps = 1.5\n");
    assert_eq!(v.len(), 3, "{v:?}");
}

#[test]
fn unknown_keys_are_rejected() {
    let v = config_errors("seed = 1\nartifact_dir = \"a\"\n[sft]\nstpes = 3\n");
    assert!(v.iter().any(|s| s.contains("stpes")), "{v:?}");
}

#[test]
fn minimal_config_materializes_defaults() {
    let cfg = PipelineConfig::from_toml_str("seed = 7\nartifact_dir = \"runs/x\"\n").unwrap();
    assert_eq!(cfg, PipelineConfig::new(7, "runs/x"));
    assert_eq!(cfg.reward.clip_eps, 0.2);
    assert_eq!(cfg.tokenizer.levels, 3);
    assert_eq!(cfg.tokenizer.codebook_size, 64);
    let echoed = PipelineConfig::from_toml_str(&cfg.to_toml()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn relative_artifact_dir_resolves_against_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("exp.toml");
    fs::write(&path, "seed = 1\nartifact_dir = \"out\"\n").unwrap();
    assert_eq!(validate_config(&path).unwrap().artifact_dir, tmp.path().join("out"));
}

#[test]
fn stage_seeds_differ_by_name() {
    let cfg = PipelineConfig::new(3, "x");
    let seeds: std::collections::HashSet<u64> = STAGES.iter().map(|s| cfg.stage_seed(s)).collect();
    assert_eq!(seeds.len(), STAGES.len());
    assert_eq!(cfg.stage_seed("sft"), PipelineConfig::new(3, "y").stage_seed("sft"));
}

#[test]
fn gen_data_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_stage("gen-data", &tiny(a.path(), 5)).unwrap();
    let rb = run_stage("gen-data", &tiny(b.path(), 5)).unwrap();
    let rc = run_stage("gen-data", &tiny(a.path(), 5)).unwrap();
    assert_eq!(ra.outputs, rb.outputs);
    assert_eq!(ra.outputs, rc.outputs);
    let rd = run_stage("gen-data", &tiny(b.path(), 6)).unwrap();
    assert_ne!(ra.outputs, rd.outputs);
}

#[test]
fn missing_input_names_the_producing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), 1);
    run_stage("gen-data", &cfg).unwrap();
    match run_stage("sft", &cfg) {
        Err(Error::Dependency { stage, needs, .. }) => {
            assert_eq!(stage, "sft");
            assert_eq!(needs, "train-tokenizer");
        }
        other => panic!("expected dependency error, got {other:?}"),
    }
    assert!(
        matches!(run_stage("build-graph", &tiny(&tmp.path().join("empty"), 1)), Err(Error::Dependency { needs, .. }) if needs == "gen-data")
    );
    assert!(matches!(run_stage("train", &cfg), Err(Error::Config(_))));
}

#[test]
fn full_pipeline_is_reproducible_and_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), 11);
    let records = run_pipeline(&cfg).unwrap();
    assert_eq!(records.iter().map(|r| r.stage.as_str()).collect::<Vec<_>>(), STAGES);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(cfg.path(EVAL_REPORT)).unwrap()).unwrap();
    assert!(!report["rows"].as_array().unwrap().is_empty());
    let manifest = cfg.path(MANIFEST);
    assert!(verify_manifest(&manifest).unwrap().is_empty());

    // Inputs recorded by a stage are the outputs of its producer.
    let by_stage = |s: &str| records.iter().find(|r| r.stage == s).unwrap().clone();
    assert_eq!(
        by_stage("sft").inputs[TOKENIZER_FILE],
        by_stage("train-tokenizer").outputs[TOKENIZER_FILE]
    );

    let before = fs::read_to_string(&manifest).unwrap();
    fs::remove_file(cfg.path(SFT_POLICY)).unwrap();
    fs::remove_file(cfg.path(GRPO_POLICY)).unwrap();
    assert!(matches!(run_stage("grpo", &cfg), Err(Error::Dependency { needs, .. }) if needs == "sft"));
    for s in ["sft", "grpo", "eval"] {
        assert_eq!(run_stage(s, &cfg).unwrap().outputs, by_stage(s).outputs, "stage {s}");
    }
    let after = fs::read_to_string(&manifest).unwrap();
    assert!(after.starts_with(&before));
    assert_eq!(read_manifest(&manifest).unwrap().len(), STAGES.len() + 3);

    let other = tempfile::tempdir().unwrap();
    let cfg2 = tiny(other.path(), 11);
    run_pipeline(&cfg2).unwrap();
    assert_eq!(fs::read(cfg.path(EVAL_REPORT)).unwrap(), fs::read(cfg2.path(EVAL_REPORT)).unwrap());

    fs::write(cfg.path(EVAL_TEXT), "tampered").unwrap();
    let bad = verify_manifest(&manifest).unwrap();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].path, EVAL_TEXT);
}
