#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dereverb::audio_io::write_wav;
use dereverb::{AudioBuffer, Codec, CorpusManifest};

pub fn dereverb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dereverb"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Writes each buffer as `<dir>/<prefix>_NNN.wav` (float32) plus
/// `<dir>/<prefix>.json`, returning the manifest path.
pub fn write_corpus(dir: &Path, prefix: &str, bufs: &[AudioBuffer]) -> PathBuf {
    let files: Vec<PathBuf> = bufs
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let p = dir.join(format!("{prefix}_{i:03}.wav"));
            write_wav(&p, b, Codec::Float32).unwrap();
            p
        })
        .collect();
    let manifest = dir.join(format!("{prefix}.json"));
    CorpusManifest::new(files, bufs[0].sample_rate()).unwrap().save(&manifest).unwrap();
    manifest
}
