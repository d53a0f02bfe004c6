use std::fmt::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

use skepxel::arrangement::ArrangementSet;
use skepxel::codec::decode_raw;
use skepxel::ftp::FeatureSeries;

/// Human-readable summary of an artifact, chosen by extension and content.
pub fn describe(path: &Path) -> Result<String> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let mut out = String::new();
    match ext {
        "skpx" => {
            let raw = decode_raw(&std::fs::read(path)?)?;
            let (min, max) = raw
                .data
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            writeln!(out, "raw skeletal image {}x{}x{} (HxWxC)", raw.height, raw.width, raw.channels)?;
            writeln!(out, "value range [{min}, {max}]")?;
        }
        "fser" => {
            let s = FeatureSeries::from_bytes(&std::fs::read(path)?, "", None)?;
            writeln!(out, "feature series Q={} D={}", s.q(), s.d())?;
        }
        "png" => {
            let bytes = std::fs::read(path)?;
            if bytes.len() < 24 || &bytes[1..4] != b"PNG" {
                bail!("{} is not a PNG file", path.display());
            }
            let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
            writeln!(out, "PNG {}x{} (HxW), bit depth {}, color type {}", be(20), be(16), bytes[24], bytes[25])?;
        }
        "json" => describe_json(path, &mut out)?,
        "skeleton" => {
            let layout = skepxel::skeleton::SkeletonLayout::ntu25();
            let tracks = skepxel::skeleton::parse_ntu_skeleton(&std::fs::read_to_string(path)?, &layout)?;
            writeln!(out, "NTU skeleton file with {} body track(s)", tracks.len())?;
            for (i, t) in tracks.iter().enumerate() {
                writeln!(out, "  track {i}: {} frames", t.len())?;
            }
        }
        _ => bail!("don't know how to inspect {}", path.display()),
    }
    Ok(out)
}

fn describe_json(path: &Path, out: &mut String) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let has = |k: &str| v.get(k).is_some();
    let len = |k: &str| v.get(k).and_then(Value::as_array).map_or(0, Vec::len);
    if has("members") && has("gamma") {
        let set = ArrangementSet::from_json(&text)?;
        writeln!(out, "arrangement set {}", set.id())?;
        writeln!(out, "grid {}x{}, m={} (image height {})", set.h(), set.w(), set.m(), set.m() * set.h())?;
        writeln!(out, "gamma {} > gamma_t {}, seed {}", set.gamma(), set.gamma_t(), set.seed())?;
    } else if has("window") && has("arrangement_set") {
        writeln!(out, "image sidecar")?;
        for k in ["source", "label", "kind", "window", "stride", "fps", "arrangement_set", "scale"] {
            if let Some(x) = v.get(k) {
                writeln!(out, "  {k}: {x}")?;
            }
        }
    } else if has("confusion") && has("accuracy") {
        writeln!(out, "evaluation report: accuracy {}, {} samples", v["accuracy"], v["total"])?;
        writeln!(out, "classes: {}", v["classes"])?;
    } else if has("records") {
        let dim = v["records"][0]["values"].as_array().map_or(0, Vec::len);
        writeln!(out, "descriptor set: {} record(s) of length {dim}", len("records"))?;
    } else if let Some(kind) = v.get("kind").and_then(Value::as_str).filter(|_| has("labels") || has("weights")) {
        match kind {
            "knn" => writeln!(out, "k-NN model: k={}, dim {}, {} stored descriptor(s)", v["k"], v["dim"], len("labels"))?,
            _ => writeln!(out, "ridge model: lambda {}, dim {}, classes {}", v["lambda"], v["dim"], v["classes"])?,
        }
    } else if has("entries") && has("layout") {
        writeln!(out, "dataset manifest: {} entr(ies), layout {}", len("entries"), v["layout"]["name"])?;
    } else if has("videos") {
        writeln!(out, "run summary: {} video(s)", len("videos"))?;
        if let Some(f) = v.get("failures").and_then(Value::as_array) {
            writeln!(out, "failures: {}", f.len())?;
        }
        if let Some(n) = v.get("images") {
            writeln!(out, "images: {n}")?;
        }
    } else if has("frames") && has("joints") {
        writeln!(out, "skeleton sequence: {} frame(s) of {} joints at {} fps", len("frames"), v["joints"], v["fps"])?;
    } else if has("video") {
        writeln!(out, "feature series sidecar: video {} label {}", v["video"], v["label"])?;
    } else {
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    }
    Ok(())
}
