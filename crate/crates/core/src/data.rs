//! Dataset ingestion and synthesis: IDX (MNIST) parsing, deterministic
//! rotation for the second viewpoint, stratified subsetting, directory-tree
//! image loading, PGM export, and the tail-to-tail synthetic generator used
//! by the oracle experiments.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::gmm::{Sign, SignVector};
use crate::probability::{sample_normal_wishart, NwHyper, ProbError, SpdMatrix};
use crate::rng::RngStream;
use crate::Scalar;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803; // 2051
const IDX_LABELS_MAGIC: u32 = 0x0000_0801; // 2049

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad IDX magic: got {got:#010x}, expected {expected:#010x}")]
    BadMagic { got: u32, expected: u32 },
    #[error("truncated file: needed {needed} more bytes")]
    TruncatedFile { needed: usize },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("class {class} has only {available} examples, need {requested}")]
    InsufficientClassCount { class: usize, available: usize, requested: usize },
    #[error("unreadable image {path}: {reason}")]
    UnreadableImage { path: String, reason: String },
    #[error("class directory {0} contains no images")]
    EmptyClass(String),
    #[error("no class directories under {0}")]
    EmptyRoot(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// A labeled image collection with pixels scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ImageSet<S> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major flattened pixels, one `Vec` per image.
    pub images: Vec<Vec<S>>,
    pub labels: Vec<usize>,
    pub provenance: String,
}

impl<S: Scalar> ImageSet<S> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixel_dim(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Structural validation: pixel range and shape consistency.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.images.len() != self.labels.len() {
            return Err(DataError::CountMismatch {
                images: self.images.len(),
                labels: self.labels.len(),
            });
        }
        let dim = self.pixel_dim();
        for img in &self.images {
            if img.len() != dim {
                return Err(DataError::CountMismatch { images: img.len(), labels: dim });
            }
            for v in img {
                let f = v.cast_f64();
                if !(0.0..=1.0).contains(&f) {
                    return Err(DataError::UnreadableImage {
                        path: self.provenance.clone(),
                        reason: format!("pixel {f} outside [0,1]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Applies a rotation to every image (grayscale only).
    pub fn rotated(&self, degrees: f64) -> Self {
        let images = self
            .images
            .iter()
            .map(|img| rotate(img, self.height, self.width, degrees))
            .collect();
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            images,
            labels: self.labels.clone(),
            provenance: format!("{} (rotated {degrees}°)", self.provenance),
        }
    }
}

fn read_be_u32<R: Read>(r: &mut R) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(map_eof(4))?;
    Ok(u32::from_be_bytes(buf))
}

fn map_eof(needed: usize) -> impl Fn(std::io::Error) -> DataError {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DataError::TruncatedFile { needed }
        } else {
            DataError::Io(e)
        }
    }
}

/// Loads the big-endian IDX image/label pair (the MNIST container format).
pub fn load_mnist_idx<S: Scalar>(
    images_path: &Path,
    labels_path: &Path,
) -> Result<ImageSet<S>, DataError> {
    let mut ir = BufReader::new(File::open(images_path)?);
    let magic = read_be_u32(&mut ir)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic { got: magic, expected: IDX_IMAGES_MAGIC });
    }
    let count = read_be_u32(&mut ir)? as usize;
    let rows = read_be_u32(&mut ir)? as usize;
    let cols = read_be_u32(&mut ir)? as usize;
    let mut raw = vec![0u8; count * rows * cols];
    ir.read_exact(&mut raw).map_err(map_eof(count * rows * cols))?;

    let mut lr = BufReader::new(File::open(labels_path)?);
    let magic = read_be_u32(&mut lr)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic { got: magic, expected: IDX_LABELS_MAGIC });
    }
    let label_count = read_be_u32(&mut lr)? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch { images: count, labels: label_count });
    }
    let mut labels_raw = vec![0u8; label_count];
    lr.read_exact(&mut labels_raw).map_err(map_eof(label_count))?;

    let scale = S::cast_from(1.0 / 255.0);
    let images = raw
        .chunks_exact(rows * cols)
        .map(|chunk| chunk.iter().map(|&b| S::cast_from(b as f64) * scale).collect())
        .collect();
    Ok(ImageSet {
        height: rows,
        width: cols,
        channels: 1,
        images,
        labels: labels_raw.into_iter().map(|b| b as usize).collect(),
        provenance: images_path.display().to_string(),
    })
}

/// Writes an image/label pair in IDX format (the inverse of
/// [`load_mnist_idx`]); handy for fixtures and for re-exporting subsets.
pub fn save_mnist_idx<S: Scalar>(
    set: &ImageSet<S>,
    images_path: &Path,
    labels_path: &Path,
) -> Result<(), DataError> {
    let mut iw = File::create(images_path)?;
    iw.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    iw.write_all(&(set.len() as u32).to_be_bytes())?;
    iw.write_all(&(set.height as u32).to_be_bytes())?;
    iw.write_all(&(set.width as u32).to_be_bytes())?;
    for img in &set.images {
        let bytes: Vec<u8> = img
            .iter()
            .map(|v| (v.cast_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        iw.write_all(&bytes)?;
    }
    let mut lw = File::create(labels_path)?;
    lw.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    lw.write_all(&(set.len() as u32).to_be_bytes())?;
    let bytes: Vec<u8> = set.labels.iter().map(|&l| l as u8).collect();
    lw.write_all(&bytes)?;
    Ok(())
}

/// Rotates a grayscale image counterclockwise about its center with bilinear
/// interpolation and zero fill; output clamped to `[0, 1]`.
pub fn rotate<S: Scalar>(img: &[S], height: usize, width: usize, degrees: f64) -> Vec<S> {
    if degrees == 0.0 {
        return img.to_vec();
    }
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut out = vec![S::zero(); img.len()];
    for y in 0..height {
        for x in 0..width {
            // Counterclockwise rotation in image coordinates (y grows down):
            // sample the source at the clockwise-rotated position.
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let mut acc = 0.0;
            for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
                for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                    let px = x0 + ox;
                    let py = y0 + oy;
                    if px >= 0.0 && py >= 0.0 && (px as usize) < width && (py as usize) < height {
                        let v = img[py as usize * width + px as usize].cast_f64();
                        acc += wx * wy * v;
                    }
                }
            }
            out[y * width + x] = S::cast_from(acc.clamp(0.0, 1.0));
        }
    }
    out
}

/// Stratified subset: `n_per_class` images for each class in `classes`,
/// relabeled to `0..classes.len()`, order shuffled deterministically.
pub fn subset_per_class<S: Scalar>(
    set: &ImageSet<S>,
    n_per_class: usize,
    classes: &[usize],
    rng: &mut RngStream,
) -> Result<ImageSet<S>, DataError> {
    let mut picked: Vec<(Vec<S>, usize)> = Vec::with_capacity(n_per_class * classes.len());
    for (new_label, &class) in classes.iter().enumerate() {
        let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == class).collect();
        if idx.len() < n_per_class {
            return Err(DataError::InsufficientClassCount {
                class,
                available: idx.len(),
                requested: n_per_class,
            });
        }
        rng.shuffle(&mut idx);
        for &i in idx.iter().take(n_per_class) {
            picked.push((set.images[i].clone(), new_label));
        }
    }
    rng.shuffle(&mut picked);
    let (images, labels) = picked.into_iter().unzip();
    Ok(ImageSet {
        height: set.height,
        width: set.width,
        channels: set.channels,
        images,
        labels,
        provenance: format!("{} (subset)", set.provenance),
    })
}

/// Spec of the tail-to-tail synthetic generative process.
#[derive(Clone, Debug)]
pub struct SyntheticSpec<S> {
    pub k: usize,
    pub d: usize,
    pub latent_dim: usize,
    pub hyper: NwHyper<S>,
    pub seed: u64,
}

/// Output of [`synthesize_inter_gmm`]: two agents' latents generated from a
/// shared sign vector, plus the ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticInterGmm<S> {
    pub z_a: Vec<Vec<S>>,
    pub z_b: Vec<Vec<S>>,
    pub w_true: Vec<Sign>,
    pub phi_a: crate::gmm::ComponentSet<S>,
    pub phi_b: crate::gmm::ComponentSet<S>,
}

/// Draws from the tail-to-tail process: shared signs from a uniform
/// categorical, per-agent components from the normal-Wishart prior, then
/// per-agent latents from the sign's component.
pub fn synthesize_inter_gmm<S: Scalar>(
    spec: &SyntheticSpec<S>,
) -> Result<SyntheticInterGmm<S>, DataError> {
    let mut rng = RngStream::substream(spec.seed, 9);
    let w_true: Vec<Sign> = (0..spec.d).map(|_| rng.index(spec.k)).collect();
    let draw_phi = |rng: &mut RngStream| -> Result<crate::gmm::ComponentSet<S>, DataError> {
        let mut comps = Vec::with_capacity(spec.k);
        for _ in 0..spec.k {
            let (mu, lambda) = sample_normal_wishart(&spec.hyper, rng)?;
            comps.push(crate::gmm::Component { mu, lambda });
        }
        crate::gmm::ComponentSet::new(comps).map_err(|e| match e {
            crate::gmm::GmmError::Prob(p) => DataError::Prob(p),
            other => DataError::UnreadableImage { path: String::new(), reason: other.to_string() },
        })
    };
    let phi_a = draw_phi(&mut rng)?;
    let phi_b = draw_phi(&mut rng)?;
    let draw_z = |phi: &crate::gmm::ComponentSet<S>,
                      rng: &mut RngStream|
     -> Result<Vec<Vec<S>>, DataError> {
        w_true
            .iter()
            .map(|&w| {
                let c = phi.component(w).expect("sign in range");
                Ok(crate::probability::sample_mvn(&c.mu, &c.lambda, rng)?)
            })
            .collect()
    };
    let z_a = draw_z(&phi_a, &mut rng)?;
    let z_b = draw_z(&phi_b, &mut rng)?;
    Ok(SyntheticInterGmm { z_a, z_b, w_true: w_true.clone(), phi_a, phi_b })
}

/// Loads a directory-per-class tree of PNG/PGM images, resized bilinearly to
/// `size` and converted to grayscale in `[0, 1]`. Labels follow the
/// lexicographic order of the class directories.
pub fn load_image_folder<S: Scalar>(
    root: &Path,
    size: (usize, usize),
) -> Result<ImageSet<S>, DataError> {
    let (height, width) = size;
    let mut class_dirs: Vec<_> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(DataError::EmptyRoot(root.display().to_string()));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png") | Some("pgm") | Some("ppm") | Some("pnm")
                )
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(DataError::EmptyClass(dir.display().to_string()));
        }
        for f in files {
            let img = image::open(&f).map_err(|e| DataError::UnreadableImage {
                path: f.display().to_string(),
                reason: e.to_string(),
            })?;
            let gray = image::imageops::resize(
                &img.to_luma32f(),
                width as u32,
                height as u32,
                image::imageops::FilterType::Triangle,
            );
            let flat: Vec<S> = gray
                .pixels()
                .map(|p| S::cast_from((p.0[0] as f64).clamp(0.0, 1.0)))
                .collect();
            images.push(flat);
            labels.push(label);
        }
    }
    Ok(ImageSet {
        height,
        width,
        channels: 1,
        images,
        labels,
        provenance: root.display().to_string(),
    })
}

/// Writes a grayscale image as binary PGM (P5).
pub fn write_pgm<S: Scalar>(
    img: &[S],
    height: usize,
    width: usize,
    path: &Path,
) -> Result<(), DataError> {
    debug_assert_eq!(img.len(), height * width);
    let mut f = File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = img
        .iter()
        .map(|v| (v.cast_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// Minimum pairwise Mahalanobis separation between components, measured with
/// each pair's average precision. Used by tests to certify an instance is
/// "well separated".
pub fn min_pairwise_mahalanobis<S: Scalar>(
    phi: &crate::gmm::ComponentSet<S>,
) -> Result<f64, DataError> {
    let k = phi.k();
    let mut best = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            let ci = phi.component(i).expect("in range");
            let cj = phi.component(j).expect("in range");
            let delta: Vec<S> = ci.mu.iter().zip(&cj.mu).map(|(a, b)| *a - *b).collect();
            let di = ci.lambda.quad_form(&delta)?.cast_f64();
            let dj = cj.lambda.quad_form(&delta)?.cast_f64();
            best = best.min((0.5 * (di + dj)).sqrt());
        }
    }
    Ok(best)
}

/// Builds a [`SignVector`] wrapper over the synthetic truth.
pub fn truth_signs(w: &[Sign]) -> SignVector {
    SignVector::new(w.to_vec())
}

/// Scaled-identity convenience for separated synthetic hypers: low `alpha`
/// spreads the component means far apart.
pub fn separated_hyper<S: Scalar>(latent_dim: usize, alpha: f64) -> NwHyper<S> {
    let nu = (latent_dim + 2) as f64;
    NwHyper {
        m: vec![S::zero(); latent_dim],
        alpha: S::cast_from(alpha),
        nu: S::cast_from(nu),
        beta: SpdMatrix::scaled_identity(latent_dim, S::cast_from(1.0 / nu)),
    }
}
