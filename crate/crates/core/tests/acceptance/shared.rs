use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use flowtrust::flownet::VelocityNet;
use flowtrust::harness::{cmd_pretrain, RunConfig};
use tempfile::TempDir;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

pub fn load_config(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).expect("shipped configuration loads")
}

/// The default configuration pretrained once and shared by every check
/// that needs a pretrained policy.
pub struct Pretrained {
    _dir: TempDir,
    pub checkpoint: PathBuf,
    pub net: VelocityNet,
    pub losses: Vec<f64>,
    pub seconds: f64,
}

pub fn pretrained() -> &'static Pretrained {
    static CELL: OnceLock<Pretrained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = TempDir::new().expect("temp dir");
        let mut cfg = load_config("default.toml");
        cfg.run.out = dir.path().to_path_buf();
        let start = std::time::Instant::now();
        let out = cmd_pretrain(&cfg).expect("default pretraining succeeds");
        let seconds = start.elapsed().as_secs_f64();
        let net = flowtrust::flownet::load_checkpoint(&out.checkpoint)
            .expect("fresh checkpoint loads")
            .net;
        Pretrained {
            checkpoint: out.checkpoint,
            net,
            losses: out.losses,
            seconds,
            _dir: dir,
        }
    })
}

/// Turn a boolean verdict into an outcome carrying the same summary.
pub fn verdict(ok: bool, detail: String) -> crate::Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Propagate library errors as failures.
pub fn lib<T>(r: flowtrust::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}
