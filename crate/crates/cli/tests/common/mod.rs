#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use relight_core::io::{save_depth, save_image, save_lights};
use relight_core::synth::{planted_depth, random_lighting, textured_image, PlantedScene};
use relight_core::ShadingConfig;

pub const BIN: &str = env!("CARGO_BIN_EXE_relight");

pub fn relight(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn ok(args: &[&str]) -> String {
    let out = relight(args);
    assert!(
        out.status.success(),
        "relight {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(args: &[&str]) -> i32 {
    relight(args).status.code().expect("exit code")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Image, depth, target and a three-light preset written into `dir`.
pub struct Fixture {
    pub image: PathBuf,
    pub depth: PathBuf,
    pub target: PathBuf,
    pub lights: PathBuf,
    pub frames: PathBuf,
    pub depth_frames: PathBuf,
}

pub fn fixture(dir: &Path) -> Fixture {
    let (w, h) = (48, 32);
    let scene = PlantedScene::random(w, h, 3, 5).unwrap();
    let f = Fixture {
        image: dir.join("image.png"),
        depth: dir.join("depth.png"),
        target: dir.join("target.png"),
        lights: dir.join("lights.json"),
        frames: dir.join("frames"),
        depth_frames: dir.join("depths"),
    };
    save_image(&f.image, &scene.input).unwrap();
    save_depth(&f.depth, &scene.depth).unwrap();
    save_image(&f.target, &scene.target).unwrap();
    save_lights(&f.lights, &random_lighting(3, 6), &ShadingConfig::default()).unwrap();
    std::fs::create_dir_all(&f.frames).unwrap();
    std::fs::create_dir_all(&f.depth_frames).unwrap();
    for i in 0..4 {
        let name = relight_core::io::frame_name(i, "png");
        save_image(f.frames.join(&name), &textured_image(w, h, 10 + i as u64)).unwrap();
        save_depth(f.depth_frames.join(&name), &planted_depth(w, h, 20 + i as u64)).unwrap();
    }
    f
}

/// `relight serve` on an ephemeral port; killed on drop.
pub struct Server {
    child: Child,
    pub url: String,
}

impl Server {
    pub fn start(extra: &[&str]) -> Self {
        let mut child = Command::new(BIN)
            .args(["serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("server starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        Self { child, url }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
