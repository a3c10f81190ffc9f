//! On-disk formats.
//!
//! * Gaussians and checkpoints: ASCII PLY, every real written with 17
//!   significant digits so a save/load round trip is exact.
//! * Cameras, curves, metric reports: JSON.
//! * Edge maps: binary PGM, 16-bit on write; 8- and 16-bit on read.

use std::fs;
use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Intrinsics, RationalBezier, Vec3};
use crate::image::EdgeMap;
use crate::splat::{SphericalGaussian, SphericalGaussianSet};
use crate::train::{Checkpoint, TrainConfig};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

const BASE_PROPS: [&str; 5] = ["x", "y", "z", "opacity", "color"];
const LOGIT_PROPS: [&str; 2] = ["opacity_logit", "color_logit"];

fn ply_header(n: usize, radius: f64, comments: &[String], extra: &[&str]) -> String {
    let mut s = String::from("ply\nformat ascii 1.0\n");
    s.push_str(&format!("comment radius {}\n", num(radius)));
    for c in comments {
        s.push_str(&format!("comment {c}\n"));
    }
    s.push_str(&format!("element vertex {n}\n"));
    for p in BASE_PROPS.iter().chain(extra) {
        s.push_str(&format!("property double {p}\n"));
    }
    s.push_str("end_header\n");
    s
}

pub fn gaussians_to_ply(set: &SphericalGaussianSet) -> String {
    let mut s = ply_header(set.len(), set.radius, &[], &[]);
    for g in &set.gaussians {
        s.push_str(&format!(
            "{} {} {} {} {}\n",
            num(g.center.x),
            num(g.center.y),
            num(g.center.z),
            num(g.opacity),
            num(g.color)
        ));
    }
    s
}

pub fn checkpoint_to_ply(ck: &Checkpoint) -> Result<String> {
    let comments = vec![
        format!("iteration {}", ck.iteration),
        format!("phases_done {}", ck.phases_done),
        format!("config {}", serde_json::to_string(&ck.config)?),
    ];
    let set = ck.gaussians();
    let mut s = ply_header(set.len(), ck.radius, &comments, &LOGIT_PROPS);
    for (g, (o, c)) in set.gaussians.iter().zip(ck.opacity_logit.iter().zip(&ck.color_logit)) {
        s.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            num(g.center.x),
            num(g.center.y),
            num(g.center.z),
            num(g.opacity),
            num(g.color),
            num(*o),
            num(*c)
        ));
    }
    Ok(s)
}

struct Ply {
    radius: f64,
    comments: Vec<String>,
    props: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Ply {
    fn column(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p == name)
    }

    fn comment(&self, key: &str) -> Option<&str> {
        self.comments
            .iter()
            .find_map(|c| c.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
    }
}

fn parse_ply(text: &str) -> Result<Ply> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Parse("missing ply magic".into()));
    }
    let mut radius = None;
    let mut comments = Vec::new();
    let mut props = Vec::new();
    let mut count = None;
    let mut ascii = false;
    for line in lines.by_ref() {
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("format") => ascii = it.next() == Some("ascii"),
            Some("comment") => {
                let rest = line["comment".len()..].trim_start();
                if let Some(r) = rest.strip_prefix("radius ") {
                    radius = Some(parse_f64(r.trim())?);
                } else {
                    comments.push(rest.to_string());
                }
            }
            Some("element") => {
                if it.next() != Some("vertex") {
                    return Err(Error::Parse("only a vertex element is supported".into()));
                }
                let n = it.next().ok_or_else(|| Error::Parse("vertex count missing".into()))?;
                count = Some(n.parse::<usize>().map_err(|_| Error::Parse(format!("bad vertex count {n:?}")))?);
            }
            Some("property") => {
                let name = it.last().ok_or_else(|| Error::Parse("property without name".into()))?;
                props.push(name.to_string());
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Parse(format!("unexpected header line {other:?}"))),
            None => {}
        }
    }
    if !ascii {
        return Err(Error::Parse("only ascii ply is supported".into()));
    }
    let radius = radius.ok_or_else(|| Error::Parse("missing radius comment".into()))?;
    let count = count.ok_or_else(|| Error::Parse("missing vertex element".into()))?;
    let mut rows = Vec::with_capacity(count);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row = line.split_whitespace().map(parse_f64).collect::<Result<Vec<f64>>>()?;
        if row.len() != props.len() {
            return Err(Error::Parse(format!("row has {} values, expected {}", row.len(), props.len())));
        }
        rows.push(row);
    }
    if rows.len() != count {
        return Err(Error::Parse(format!("expected {count} vertices, found {}", rows.len())));
    }
    Ok(Ply {
        radius,
        comments,
        props,
        rows,
    })
}

fn ply_gaussians(ply: &Ply) -> Result<SphericalGaussianSet> {
    let cols = BASE_PROPS
        .iter()
        .map(|p| ply.column(p).ok_or_else(|| Error::Parse(format!("missing property {p}"))))
        .collect::<Result<Vec<usize>>>()?;
    if !(ply.radius > 0.0 && ply.radius.is_finite()) {
        return Err(Error::Parse("radius must be positive".into()));
    }
    let mut set = SphericalGaussianSet::new(ply.radius);
    for r in &ply.rows {
        let v: Vec<f64> = cols.iter().map(|&c| r[c]).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("non-finite gaussian attribute".into()));
        }
        set.gaussians
            .push(SphericalGaussian::new(Vec3::new(v[0], v[1], v[2]), v[3], v[4]));
    }
    Ok(set)
}

pub fn gaussians_from_ply(text: &str) -> Result<SphericalGaussianSet> {
    ply_gaussians(&parse_ply(text)?)
}

/// Reads a checkpoint; a plain Gaussian file is accepted too, with logits
/// recovered from the stored values and default config.
pub fn checkpoint_from_ply(text: &str) -> Result<Checkpoint> {
    let ply = parse_ply(text)?;
    let set = ply_gaussians(&ply)?;
    let config: TrainConfig = match ply.comment("config") {
        Some(c) => serde_json::from_str(c)?,
        None => TrainConfig::default(),
    };
    let int = |key: &str| -> Result<usize> {
        ply.comment(key)
            .map(|v| v.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad {key}"))))
            .unwrap_or(Ok(0))
    };
    let mut ck = Checkpoint::from_gaussians(config, &set, int("iteration")?, int("phases_done")?);
    if let (Some(o), Some(c)) = (ply.column(LOGIT_PROPS[0]), ply.column(LOGIT_PROPS[1])) {
        ck.opacity_logit = ply.rows.iter().map(|r| r[o]).collect();
        ck.color_logit = ply.rows.iter().map(|r| r[c]).collect();
    }
    Ok(ck)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CameraDoc {
    intrinsics: Intrinsics,
    /// row-major 4×4
    world_to_camera: [[f64; 4]; 4],
}

pub fn cameras_to_json(cameras: &[Camera]) -> Result<String> {
    let docs: Vec<CameraDoc> = cameras
        .iter()
        .map(|c| {
            let m = &c.world_to_camera;
            CameraDoc {
                intrinsics: c.intrinsics,
                world_to_camera: std::array::from_fn(|r| std::array::from_fn(|k| m[(r, k)])),
            }
        })
        .collect();
    Ok(serde_json::to_string_pretty(&docs)?)
}

pub fn cameras_from_json(text: &str) -> Result<Vec<Camera>> {
    let docs: Vec<CameraDoc> = serde_json::from_str(text)?;
    docs.into_iter()
        .map(|d| {
            let m = Matrix4::from_fn(|r, k| d.world_to_camera[r][k]);
            Camera::new(d.intrinsics, m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDocument {
    pub curves: Vec<RationalBezier>,
}

pub fn curves_to_json(curves: &[RationalBezier]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CurveDocument {
        curves: curves.to_vec(),
    })?)
}

pub fn curves_from_json(text: &str) -> Result<Vec<RationalBezier>> {
    let doc: CurveDocument = serde_json::from_str(text)?;
    doc.curves
        .into_iter()
        .map(|c| RationalBezier::new(c.control_points, c.weights))
        .collect()
}

/// One `x y z` line per point.
pub fn points_to_text(points: &[Vec3]) -> String {
    let mut s = String::with_capacity(points.len() * 72);
    for p in points {
        s.push_str(&format!("{} {} {}\n", num(p.x), num(p.y), num(p.z)));
    }
    s
}

pub fn points_from_text(text: &str) -> Result<Vec<Vec3>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let v = l.split_whitespace().map(parse_f64).collect::<Result<Vec<f64>>>()?;
            match v[..] {
                [x, y, z] => Ok(Vec3::new(x, y, z)),
                _ => Err(Error::Parse(format!("expected 3 coordinates: {l:?}"))),
            }
        })
        .collect()
}

pub fn edge_map_to_pgm(map: &EdgeMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", map.width(), map.height()).into_bytes();
    out.reserve(map.pixels().len() * 2);
    for v in map.pixels() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Binary PGM (`P5`), maxval up to 65535.
pub fn edge_map_from_pgm(bytes: &[u8]) -> Result<EdgeMap> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated pgm header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Parse("not a binary pgm".into()));
    }
    let mut field = || -> Result<usize> {
        let t = token()?;
        t.parse::<usize>().map_err(|_| Error::Parse(format!("bad pgm header field {t:?}")))
    };
    let (w, h, maxval) = (field()?, field()?, field()?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let bpp = if maxval > 255 { 2 } else { 1 };
    if data.len() < w * h * bpp {
        return Err(Error::Parse("pgm raster is truncated".into()));
    }
    let scale = maxval as f64;
    let pixels = (0..w * h)
        .map(|i| {
            let v = if bpp == 2 {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64
            } else {
                data[i] as f64
            };
            v / scale
        })
        .collect();
    EdgeMap::from_pixels(w, h, pixels)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}
