#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

pub const SCAN: [&str; 6] = ["--angles", "60", "--pixels", "128", "--pitch-mm", "0.5"];
pub const TUBE: [&str; 4] = ["--kvp", "150", "--filter", "aluminum:2.5"];

pub struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    pub fn new() -> Self {
        Work { dir: tempfile::tempdir().unwrap() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn run(&self, args: &[&str], threads: Option<&str>) -> Output {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_bhc"));
        cmd.current_dir(self.dir.path()).args(args).env_remove("BHC_THREADS");
        if let Some(t) = threads {
            cmd.env("BHC_THREADS", t);
        }
        cmd.output().unwrap()
    }

    pub fn ok(&self, args: &[&str]) {
        let out = self.run(args, None);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    pub fn bytes(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }

    pub fn phantom(&self, builtin: &str, out: &str) {
        self.ok(&["phantom", "--builtin", builtin, "--nx", "128", "--voxel-mm", "0.5", "-o", out]);
    }
}

pub fn args<'a>(head: &[&'a str], tails: &[&[&'a str]]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    for t in tails {
        v.extend_from_slice(t);
    }
    v
}

/// Report with the wall-clock stage timings removed.
pub fn without_timings(report: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(report).unwrap();
    assert!(v.as_object_mut().unwrap().remove("timings").is_some());
    v
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap()
}
