use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowtrust::flownet::{
    decode_checkpoint, encode_checkpoint, Checkpoint, NetConfig, PretrainMeta, VelocityNet,
};
use flowtrust::harness::RunConfig;
use tempfile::TempDir;

use crate::criteria::quick_config;
use crate::shared::{config_path, verdict};
use crate::Outcome;

pub const ALL: &[crate::Check] = &[
    ("contract_golden_checkpoint", golden_checkpoint),
    ("contract_golden_csv_headers", golden_csv_headers),
    ("contract_cli_config_errors", cli_config_errors),
    ("contract_cli_divergence_exit", cli_divergence_exit),
    ("contract_cli_missing_checkpoint", cli_missing_checkpoint),
];

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn golden_checkpoint() -> Outcome {
    let bytes = std::fs::read(golden("tiny.ckpt")).map_err(|e| e.to_string())?;
    let cfg = NetConfig {
        state_dim: 2,
        hidden: vec![3],
        time_embed: 2,
        cond_embed: 2,
        num_conditions: 2,
    };
    let net = VelocityNet::new(cfg, 42).map_err(|e| e.to_string())?;
    let fresh = encode_checkpoint(&Checkpoint {
        net: net.clone(),
        meta: PretrainMeta {
            steps: 10,
            final_loss: 0.5,
            seed: 1,
        },
    });
    let decoded = decode_checkpoint(&bytes).map_err(|e| e.to_string())?;
    let same_params = decoded.net.params() == net.params();
    verdict(
        fresh == bytes && same_params && encode_checkpoint(&decoded) == bytes,
        format!(
            "{} golden bytes; fresh encoding identical: {}; decoded parameters identical: {same_params}",
            bytes.len(),
            fresh == bytes
        ),
    )
}

fn first_line(path: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

fn flowtrust(args: &[&str]) -> Result<Output, String> {
    Command::new(env!("CARGO_BIN_EXE_flowtrust"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())
}

fn golden_csv_headers() -> Outcome {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let config = quick_config(tmp.path())?;
    // The output directory does not exist yet; commands must create it.
    let out = tmp.path().join("nested/out");
    let c = config.to_str().unwrap();
    let o = out.to_str().unwrap();
    for cmd in [
        "pretrain",
        "align",
        "analyze-std",
        "analyze-gradnorm",
        "compare-kl",
    ] {
        let r = flowtrust(&[cmd, "--config", c, "--out", o])?;
        if !r.status.success() {
            return Err(format!(
                "{cmd} failed: {}",
                String::from_utf8_lossy(&r.stderr)
            ));
        }
    }
    let pairs = [
        ("pretrain_loss.csv", "pretrain_loss_header.csv"),
        ("metrics.csv", "metrics_header.csv"),
        ("analyze_std.csv", "analyze_std_header.csv"),
        ("analyze_gradnorm.csv", "analyze_gradnorm_header.csv"),
        ("no_kl.csv", "metrics_header.csv"),
        ("fixed.csv", "metrics_header.csv"),
        ("stepwise.csv", "metrics_header.csv"),
        ("moving.csv", "metrics_header.csv"),
        ("dual.csv", "metrics_header.csv"),
    ];
    let mut mismatched = Vec::new();
    for (file, gold) in pairs {
        if first_line(&out.join(file))? != first_line(&golden(gold))? {
            mismatched.push(file);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("{} headers checked; mismatched {mismatched:?}", pairs.len()),
    )
}

fn cli_config_errors() -> Outcome {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let base = std::fs::read_to_string(config_path("default.toml")).map_err(|e| e.to_string())?;
    let cases = [
        (
            "unknown field",
            base.replace("group_size = 8", "group_size = 8\nbogus_knob = 1"),
            "bogus_knob",
        ),
        (
            "bad value",
            base.replace("eta = 0.7", "eta = -0.7"),
            "[sde]",
        ),
        ("missing seed", base.replace("seed = 7", ""), "seed"),
    ];
    let mut problems = Vec::new();
    for (label, text, needle) in &cases {
        let path = tmp.path().join("bad.toml");
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
        let r = flowtrust(&[
            "analyze-std",
            "--config",
            path.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ])?;
        let stderr = String::from_utf8_lossy(&r.stderr);
        if r.status.code() != Some(1) || !stderr.contains(needle) {
            problems.push(format!(
                "{label}: exit {:?}, stderr {stderr:?}",
                r.status.code()
            ));
        }
    }
    let parsed = RunConfig::from_toml_str(&base).is_ok();
    verdict(
        problems.is_empty() && parsed,
        format!(
            "{} malformed configs rejected with exit 1 naming the field; {problems:?}",
            cases.len()
        ),
    )
}

fn cli_divergence_exit() -> Outcome {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let config = quick_config(tmp.path())?;
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    let pre = flowtrust(&["pretrain", "--config", config.to_str().unwrap(), "--out", o])?;
    if !pre.status.success() {
        return Err("pretraining failed".into());
    }
    let mut cfg = RunConfig::load(&config).map_err(|e| e.to_string())?;
    cfg.grpo.lr = 1e9;
    let wild = tmp.path().join("wild.toml");
    std::fs::write(&wild, cfg.to_toml_string()).map_err(|e| e.to_string())?;
    let r = flowtrust(&["align", "--config", wild.to_str().unwrap(), "--out", o])?;
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).map_err(|e| e.to_string())?;
    let last = metrics.lines().last().unwrap_or_default().to_string();
    verdict(
        r.status.code() == Some(2) && last.contains("NaN"),
        format!(
            "exit {:?} ({}); last metrics row {last:?}",
            r.status.code(),
            String::from_utf8_lossy(&r.stderr).trim()
        ),
    )
}

fn cli_missing_checkpoint() -> Outcome {
    let tmp = TempDir::new().map_err(|e| e.to_string())?;
    let r = flowtrust(&[
        "align",
        "--config",
        config_path("default.toml").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ])?;
    let stderr = String::from_utf8_lossy(&r.stderr);
    verdict(
        r.status.code() == Some(1) && stderr.contains("pretrained.ckpt"),
        format!("exit {:?}; {}", r.status.code(), stderr.trim()),
    )
}
