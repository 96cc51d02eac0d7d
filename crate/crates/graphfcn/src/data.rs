//! Synthetic segmentation data and binary PPM/PGM raster I/O.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sentinel class excluded from losses and metrics.
pub const IGNORE: u8 = 255;

/// H x W map of 8-bit class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::Parameter(format!(
                "label map {h}x{w} needs {} values, got {}",
                h * w,
                data.len()
            )));
        }
        Ok(LabelMap { h, w, data })
    }

    pub fn filled(h: usize, w: usize, v: u8) -> Self {
        LabelMap {
            h,
            w,
            data: vec![v; h * w],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.w + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u8) {
        self.data[i * self.w + j] = v;
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        for (i, &v) in self.data.iter().enumerate() {
            if v != IGNORE && (v as usize) >= num_classes {
                return Err(Error::Parameter(format!(
                    "label {} at pixel {} exceeds {} classes",
                    v, i, num_classes
                )));
            }
        }
        Ok(())
    }
}

/// One image/label pair.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub labels: LabelMap,
    pub id: String,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Clone, Copy)]
enum ShapeKind {
    Rect,
    Disc,
    Triangle,
}

/// Generates `count` textured-background images, each with 1-3
/// non-overlapping filled shapes. Shape kinds map to classes 1..=3
/// (rectangle, disc, triangle); background is class 0. Labels are exact and
/// the generator never emits [`IGNORE`].
pub fn generate_shapes(
    count: usize,
    h: usize,
    w: usize,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    if num_classes < 2 {
        return Err(Error::Parameter(
            "generator needs at least 2 classes (background + one shape)".into(),
        ));
    }
    if h < 32 || w < 32 {
        return Err(Error::Parameter(format!(
            "image extent {h}x{w} below minimum 32x32"
        )));
    }
    let max_shape_class = (num_classes - 1).min(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let mut image = Tensor::zeros(vec![3, h, w]);
        let mut labels = LabelMap::filled(h, w, 0);

        // Low-frequency textured background.
        let base: [f64; 3] = [
            rng.random_range(0.1..0.4),
            rng.random_range(0.1..0.4),
            rng.random_range(0.1..0.4),
        ];
        let (fx, fy) = (rng.random_range(0.05..0.2), rng.random_range(0.05..0.2));
        for i in 0..h {
            for j in 0..w {
                let tex = 0.05 * ((i as f64 * fy).sin() + (j as f64 * fx).cos());
                for c in 0..3 {
                    let v = base[c] + tex;
                    let p = image.idx3(c, i, j);
                    image.data_mut()[p] = v;
                }
            }
        }

        // 1-3 non-overlapping shapes by bounding-box rejection.
        let n_shapes = rng.random_range(1..=3usize);
        let mut boxes: Vec<(usize, usize, usize, usize)> = Vec::new();
        for _ in 0..n_shapes {
            let class = rng.random_range(1..=max_shape_class) as u8;
            let mut placed = None;
            for _try in 0..40 {
                let side_h = rng.random_range(h / 4..=h / 2);
                let side_w = rng.random_range(w / 4..=w / 2);
                let top = rng.random_range(0..=h - side_h);
                let left = rng.random_range(0..=w - side_w);
                let candidate = (top, left, side_h, side_w);
                let overlaps = boxes.iter().any(|&(t, l, sh, sw)| {
                    top < t + sh && t < top + side_h && left < l + sw && l < left + side_w
                });
                if !overlaps {
                    placed = Some(candidate);
                    break;
                }
            }
            let Some((top, left, sh, sw)) = placed else {
                continue;
            };
            boxes.push((top, left, sh, sw));
            let kind = match class {
                1 => ShapeKind::Rect,
                2 => ShapeKind::Disc,
                _ => ShapeKind::Triangle,
            };
            let color: [f64; 3] = [
                (0.6 + 0.3 * (class as f64 / 3.0) + 0.1 * gauss(&mut rng)).clamp(0.0, 1.0),
                (0.5 + 0.1 * gauss(&mut rng)).clamp(0.0, 1.0),
                (0.4 + 0.2 * (class as f64 / 3.0) + 0.1 * gauss(&mut rng)).clamp(0.0, 1.0),
            ];
            for i in top..top + sh {
                for j in left..left + sw {
                    let inside = match kind {
                        ShapeKind::Rect => true,
                        ShapeKind::Disc => {
                            let cy = top as f64 + sh as f64 / 2.0;
                            let cx = left as f64 + sw as f64 / 2.0;
                            let dy = (i as f64 + 0.5 - cy) / (sh as f64 / 2.0);
                            let dx = (j as f64 + 0.5 - cx) / (sw as f64 / 2.0);
                            dy * dy + dx * dx <= 1.0
                        }
                        ShapeKind::Triangle => {
                            // apex at top-center, base along the bottom edge
                            let frac = (i - top) as f64 / sh.max(1) as f64;
                            let half = frac * sw as f64 / 2.0;
                            let cx = left as f64 + sw as f64 / 2.0;
                            (j as f64 + 0.5 - cx).abs() <= half
                        }
                    };
                    if inside {
                        labels.set(i, j, class);
                        for c in 0..3 {
                            let p = image.idx3(c, i, j);
                            image.data_mut()[p] = color[c];
                        }
                    }
                }
            }
        }

        // Additive pixel noise.
        for v in image.data_mut() {
            *v = (*v + 0.05 * gauss(&mut rng)).clamp(0.0, 1.0);
        }
        out.push(Sample {
            image,
            labels,
            id: format!("img{idx:05}"),
        });
    }
    Ok(out)
}

fn parse_header(bytes: &[u8], magic: &str) -> Result<(usize, usize, usize)> {
    let mut pos = 0usize;
    let mut tokens: Vec<(usize, String)> = Vec::new();
    // magic + width + height + maxval, whitespace separated, '#' comments
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Format {
                offset: pos,
                msg: "truncated header".into(),
            });
        }
        tokens.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if tokens[0].1 != magic {
        return Err(Error::Format {
            offset: tokens[0].0,
            msg: format!("expected magic {magic}, found {}", tokens[0].1),
        });
    }
    let parse = |tok: &(usize, String), what: &str| -> Result<usize> {
        tok.1.parse::<usize>().map_err(|_| Error::Format {
            offset: tok.0,
            msg: format!("bad {what} {:?}", tok.1),
        })
    };
    let w = parse(&tokens[1], "width")?;
    let h = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Format {
            offset: tokens[3].0,
            msg: format!("unsupported maxval {maxval}"),
        });
    }
    // exactly one whitespace byte after maxval
    Ok((w, h, pos + 1))
}

pub fn write_ppm(image: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let mut buf = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                let v = (image.at3(c, i, j).clamp(0.0, 1.0) * 255.0).round() as u8;
                buf.push(v);
            }
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (w, h, data_start) = parse_header(&bytes, "P6")?;
    let need = 3 * w * h;
    if bytes.len() < data_start + need {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!("pixel data truncated, need {} bytes", data_start + need),
        });
    }
    let mut image = Tensor::zeros(vec![3, h, w]);
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                let v = bytes[data_start + (i * w + j) * 3 + c];
                let p = image.idx3(c, i, j);
                image.data_mut()[p] = v as f64 / 255.0;
            }
        }
    }
    Ok(image)
}

pub fn write_pgm(labels: &LabelMap, path: &Path) -> Result<()> {
    let (h, w) = (labels.height(), labels.width());
    let mut buf = format!("P5\n{w} {h}\n255\n").into_bytes();
    buf.extend_from_slice(labels.data());
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<LabelMap> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (w, h, data_start) = parse_header(&bytes, "P5")?;
    if bytes.len() < data_start + w * h {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: format!("label data truncated, need {} bytes", data_start + w * h),
        });
    }
    LabelMap::new(h, w, bytes[data_start..data_start + w * h].to_vec())
}

/// Loads and validates an image/label pair.
pub fn read_sample(image_path: &Path, label_path: &Path, num_classes: usize) -> Result<Sample> {
    let image = read_ppm(image_path)?;
    let labels = read_pgm(label_path)?;
    if image.shape()[1] != labels.height() || image.shape()[2] != labels.width() {
        return Err(Error::ShapeMismatch {
            op: "read_sample",
            lhs: image.shape().to_vec(),
            rhs: vec![labels.height(), labels.width()],
        });
    }
    labels.validate(num_classes)?;
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sample { image, labels, id })
}

pub fn write_prediction(labels: &LabelMap, path: &Path) -> Result<()> {
    write_pgm(labels, path)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Writes root/images/<id>.ppm, root/labels/<id>.pgm and root/split.json.
pub fn save_dataset(train: &[Sample], test: &[Sample], root: &Path) -> Result<()> {
    let images = root.join("images");
    let labels = root.join("labels");
    std::fs::create_dir_all(&images)?;
    std::fs::create_dir_all(&labels)?;
    for s in train.iter().chain(test) {
        write_ppm(&s.image, &images.join(format!("{}.ppm", s.id)))?;
        write_pgm(&s.labels, &labels.join(format!("{}.pgm", s.id)))?;
    }
    let split = Split {
        train: train.iter().map(|s| s.id.clone()).collect(),
        test: test.iter().map(|s| s.id.clone()).collect(),
    };
    let f = std::fs::File::create(root.join("split.json"))?;
    serde_json::to_writer_pretty(f, &split)
        .map_err(|e| Error::Config(format!("split.json: {e}")))?;
    Ok(())
}

/// Reads the dataset layout written by [`save_dataset`].
pub fn load_dataset(root: &Path, num_classes: usize) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let f = std::fs::File::open(root.join("split.json"))?;
    let split: Split =
        serde_json::from_reader(f).map_err(|e| Error::Config(format!("split.json: {e}")))?;
    let load = |ids: &[String]| -> Result<Vec<Sample>> {
        ids.iter()
            .map(|id| {
                read_sample(
                    &root.join("images").join(format!("{id}.ppm")),
                    &root.join("labels").join(format!("{id}.pgm")),
                    num_classes,
                )
            })
            .collect()
    };
    Ok((load(&split.train)?, load(&split.test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_empty_and_deterministic() {
        assert!(generate_shapes(0, 32, 32, 4, 1).unwrap().is_empty());
        let a = generate_shapes(3, 32, 32, 4, 7).unwrap();
        let b = generate_shapes(3, 32, 32, 4, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.labels, y.labels);
        }
        let c = generate_shapes(1, 32, 32, 4, 8).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn generator_never_emits_ignore() {
        for s in generate_shapes(5, 32, 32, 4, 3).unwrap() {
            assert!(s.labels.data().iter().all(|&v| v != IGNORE));
            s.labels.validate(4).unwrap();
        }
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.pgm");
        let lm = LabelMap::new(2, 3, vec![0, 1, 2, 255, 3, 0]).unwrap();
        write_pgm(&lm, &p).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), lm);
    }

    #[test]
    fn solid_ppm_is_constant_and_max_maps_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.ppm");
        let img = Tensor::full(vec![3, 4, 5], 1.0);
        write_ppm(&img, &p).unwrap();
        let back = read_ppm(&p).unwrap();
        assert!(back.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn malformed_header_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ppm");
        std::fs::write(&p, b"P6\n4 x\n255\n").unwrap();
        match read_ppm(&p) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn read_sample_rejects_out_of_range_label() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i.ppm");
        let lp = dir.path().join("l.pgm");
        write_ppm(&Tensor::zeros(vec![3, 2, 2]), &ip).unwrap();
        write_pgm(&LabelMap::new(2, 2, vec![0, 9, 0, 0]).unwrap(), &lp).unwrap();
        assert!(read_sample(&ip, &lp, 4).is_err());
    }

    #[test]
    fn shape_classes_cover_pixels() {
        // aggregate class histogram over many samples
        let samples = generate_shapes(500, 32, 32, 4, 42).unwrap();
        let mut counts = [0usize; 4];
        let mut total = 0usize;
        for s in &samples {
            for &v in s.labels.data() {
                counts[v as usize] += 1;
                total += 1;
            }
        }
        for class in 1..4 {
            let frac = counts[class] as f64 / total as f64;
            assert!(frac >= 0.02, "class {class} covers only {frac:.4}");
        }
    }
}
