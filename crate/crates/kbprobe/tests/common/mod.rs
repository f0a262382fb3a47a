//! Shared helpers for the integration and acceptance tests: paths into the
//! bundled mini fixture set and run configs wired to it.

use std::path::{Path, PathBuf};

use kbprobe::pipeline::{ProviderChoice, RunConfig};
use kbprobe_core::disambig::DisambiguationMode;
use kbprobe_core::prompt::PromptSetting;

/// Model name every bundled fixture was recorded under.
pub const MINI_MODEL: &str = "test-model-1";

pub fn mini_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini")
}

// Not every test binary uses every helper.
#[allow(dead_code)]
pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Replay config over the bundled mini fixture set.
pub fn mini_config(out_dir: PathBuf, setting: PromptSetting, mode: DisambiguationMode) -> RunConfig {
    let mini = mini_dir();
    let mut config = RunConfig::new(mini.join("input.jsonl"), mini.join("train.jsonl"), out_dir);
    config.truth = Some(mini.join("truth.jsonl"));
    config.model = MINI_MODEL.to_string();
    config.setting = setting;
    config.mode = mode;
    config.provider = ProviderChoice::Replay;
    config.fixtures = Some(mini.join("fixtures.jsonl"));
    config.candidates = Some(mini.join("candidates.jsonl"));
    config.pages = Some(mini.join("pages.jsonl"));
    config.imdb = Some(mini.join("imdb.jsonl"));
    config
}
