#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use kdqe::corpus::{write_pairs, Dataset};
use kdqe::synthetic_bench::{generate_scenario, PoolSizes, Scenario, ScenarioData};

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn kdqe(args: &[&str]) -> Run {
    kdqe_env(args, &[])
}

pub fn kdqe_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kdqe"));
    for (k, _) in std::env::vars() {
        if k.starts_with("KDQE_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).envs(env.iter().copied());
    let out = cmd.output().expect("run kdqe");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn tiny_data() -> ScenarioData {
    generate_scenario(&Scenario {
        vocab_size: 200,
        junk_size: 200,
        tail_rank: 40,
        sizes: PoolSizes {
            train: 120,
            validation: 40,
            test: 40,
            unlabeled: 80,
            shifted: 40,
        },
        ..Scenario::default()
    })
    .expect("scenario")
}

pub fn write(dir: &Path, name: &str, d: &Dataset) -> PathBuf {
    let p = dir.join(name);
    write_pairs(d, &p).expect("write pairs");
    p
}

/// Flags for a student small enough to train in well under a second.
pub const TINY: &[&str] = &[
    "--embedding-dim",
    "6",
    "--hidden-dim",
    "4",
    "--attention-dim",
    "6",
    "--max-len",
    "16",
    "--max-epochs",
    "2",
    "--batch-size",
    "16",
];

pub fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(TINY);
    v
}
