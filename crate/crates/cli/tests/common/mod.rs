#![allow(dead_code)]

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const REPO: &str = "lab/cells";

pub fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn pattern(n: usize, seed: u32, modulus: u32) -> impl Iterator<Item = u32> {
    (0..n as u32).map(move |i| (i.wrapping_mul(2_654_435_761).wrapping_add(seed.wrapping_mul(40_503))) % modulus)
}

pub fn png8(w: u32, h: u32, rgb: bool, seed: u32) -> Vec<u8> {
    let ch = if rgb { 3 } else { 1 };
    let data: Vec<u8> = pattern((w * h * ch) as usize, seed, 256).map(|v| v as u8).collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w, h);
    enc.set_color(if rgb { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(&data).unwrap();
    out
}

pub fn png16(w: u32, h: u32, rgb: bool, seed: u32) -> Vec<u8> {
    let ch = if rgb { 3 } else { 1 };
    let data: Vec<u8> = pattern((w * h * ch) as usize, seed, 65536)
        .flat_map(|v| (v as u16).to_be_bytes())
        .collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, w, h);
    enc.set_color(if rgb { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Sixteen);
    enc.write_header().unwrap().write_image_data(&data).unwrap();
    out
}

pub fn tiff16(w: u32, h: u32, pages: usize, seed: u32) -> Vec<u8> {
    let mut cursor = Cursor::new(Vec::new());
    let mut enc = tiff::encoder::TiffEncoder::new(&mut cursor).unwrap();
    for p in 0..pages {
        let data: Vec<u16> = pattern((w * h) as usize, seed + p as u32, 65536).map(|v| v as u16).collect();
        enc.write_image::<tiff::encoder::colortype::Gray16>(w, h, &data).unwrap();
    }
    cursor.into_inner()
}

pub fn tiff8(w: u32, h: u32, rgb: bool, seed: u32) -> Vec<u8> {
    let mut cursor = Cursor::new(Vec::new());
    let mut enc = tiff::encoder::TiffEncoder::new(&mut cursor).unwrap();
    if rgb {
        let data: Vec<u8> = pattern((w * h * 3) as usize, seed, 256).map(|v| v as u8).collect();
        enc.write_image::<tiff::encoder::colortype::RGB8>(w, h, &data).unwrap();
    } else {
        let data: Vec<u8> = pattern((w * h) as usize, seed, 256).map(|v| v as u8).collect();
        enc.write_image::<tiff::encoder::colortype::Gray8>(w, h, &data).unwrap();
    }
    cursor.into_inner()
}

pub fn write(root: &Path, rel: &str, bytes: &[u8]) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, bytes).unwrap();
}

pub const ANSWERS: &str = "\
license = CC-BY-4.0
pretty_name = Synthetic cells
tags = microscopy; synthetic
authors = Ada Researcher; Ben Researcher
citation = Researcher A, Researcher B. Synthetic cells. 2026.
description = Synthetic fluorescence images for pipeline tests.
";

/// A scratch project: `data/`, annotation tables, answers and config.
pub struct Project {
    pub dir: tempfile::TempDir,
}

impl Project {
    pub fn new() -> Self {
        let p = Project { dir: tempfile::tempdir().unwrap() };
        fs::write(p.path().join("answers.txt"), ANSWERS).unwrap();
        p
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn data(&self) -> PathBuf {
        self.path().join("data")
    }

    pub fn workdir(&self) -> PathBuf {
        self.path().join("out")
    }

    pub fn add(&self, rel: &str, bytes: &[u8]) {
        write(&self.data(), rel, bytes);
    }

    pub fn add_file(&self, rel: &str, text: &str) {
        write(self.path(), rel, text.as_bytes());
    }

    /// Base config; `extra` keys are merged over it.
    pub fn config(&self, hub_url: &str, extra: Value) -> PathBuf {
        let mut c = json!({
            "source": {"kind": "local", "root": "data"},
            "split_rules": [{"glob": "test/**", "split": "test"}, {"glob": "**", "split": "train"}],
            "card_answers": "answers.txt",
            "target": {"endpoint": hub_url, "repo_id": REPO},
            "workdir": "out",
            "retry": {"source_base_delay_ms": 1, "hub_base_delay_ms": 1}
        });
        for (k, v) in extra.as_object().unwrap() {
            c[k] = v.clone();
        }
        let path = self.path().join("config.json");
        fs::write(&path, serde_json::to_vec_pretty(&c).unwrap()).unwrap();
        path
    }
}

/// Four train and two test images plus a USER table covering them.
pub fn six_image_project() -> Project {
    let p = Project::new();
    p.add("train/a01.tif", &tiff16(8, 6, 1, 1));
    p.add("train/a02.png", &png8(5, 5, false, 2));
    p.add("train/a03.png", &png16(4, 7, true, 3));
    p.add("train/a04.tif", &tiff8(6, 6, false, 4));
    p.add("test/b01.tif", &tiff16(8, 6, 1, 5));
    p.add("test/b02.png", &png8(3, 3, false, 6));
    p.add_file(
        "user.csv",
        "file,label,count\na01,mitotic,3\na02,interphase,1\na03,mitotic,4\na04,interphase,0\nb01,mitotic,2\nb02,interphase,5\n",
    );
    p
}

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bioimagepub"));
    c.env_remove("BIOIMAGEPUB_TOKEN").env_remove("RUST_LOG");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Every file under `dir`, hidden ones included, as sorted (path, sha256).
pub fn tree_listing(dir: &Path) -> Vec<(String, String)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) {
        for e in fs::read_dir(dir).unwrap() {
            let e = e.unwrap();
            let p = e.path();
            if e.file_type().unwrap().is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, sha_hex(&fs::read(&p).unwrap())));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

pub fn tree_hash(dir: &Path) -> String {
    let mut h = Sha256::new();
    for (path, digest) in tree_listing(dir) {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn fetch_state(hub_url: &str) -> Value {
    reqwest::blocking::get(format!("{hub_url}/_state")).unwrap().json().unwrap()
}

/// Twenty images across two splits, 8- and 16-bit, gray and RGB, one
/// three-page TIFF; an IDR-style table and a USER table.
pub fn twenty_image_project() -> Project {
    let p = Project::new();
    let mut idr = String::from("Image Name,Gene Symbol,Phenotype,Well\n");
    let mut user = String::from("file,label\n");
    for i in 0..19u32 {
        let split = if i < 13 { "train" } else { "test" };
        let stem = format!("img{i:02}");
        let (ext, bytes) = match i % 7 {
            0 => ("png", png8(12, 9, false, i)),
            1 => ("png", png8(7, 11, true, i)),
            2 => ("png", png16(10, 10, false, i)),
            3 => ("png", png16(6, 5, true, i)),
            4 => ("tif", tiff16(16, 8, 1, i)),
            5 => ("tif", tiff8(9, 9, false, i)),
            _ => ("tif", tiff8(8, 4, true, i)),
        };
        p.add(&format!("{split}/{stem}.{ext}"), &bytes);
        idr.push_str(&format!("{stem},GENE{},\"phenotype, {}\",A{}\n", i % 5, i % 3, i + 1));
        if i % 2 == 0 {
            user.push_str(&format!("{stem},{}\n", if i % 4 == 0 { "mitotic" } else { "interphase" }));
        }
    }
    p.add("train/stack.tif", &tiff16(8, 8, 3, 99));
    idr.push_str("stack,GENE9,\"phenotype, 9\",H12\n");
    p.add_file("idr.csv", &idr);
    p.add_file("user.csv", &user);
    p
}

pub fn twenty_image_extra() -> Value {
    json!({
        "conversion": {"format": "tiff16", "plane_split": false},
        "annotation_sources": [
            {"kind": "idr", "path": "idr.csv", "key_column": "Image Name"},
            {"kind": "user", "path": "user.csv", "key_column": "file"}
        ],
        "study_accession": null
    })
}
