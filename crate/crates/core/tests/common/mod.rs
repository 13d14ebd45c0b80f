//! Shared fixtures for the integration suites: a deterministic, procedurally
//! generated 3-class 28×28 glyph corpus (disk / cross / stripes) standing in
//! for a small stratified digit subset, serialized through the IDX container
//! so tests exercise the real ingestion path.

use emcom_core::data::ImageSet;
use emcom_core::rng::RngStream;
use emcom_core::Scalar;

pub const GLYPH_SIDE: usize = 28;

fn put<S: Scalar>(img: &mut [S], x: i64, y: i64, v: f64) {
    if (0..GLYPH_SIDE as i64).contains(&x) && (0..GLYPH_SIDE as i64).contains(&y) {
        img[y as usize * GLYPH_SIDE + x as usize] = S::cast_from(v);
    }
}

fn render_disk<S: Scalar>(img: &mut [S], cx: f64, cy: f64, r: f64, fg: f64) {
    for y in 0..GLYPH_SIDE {
        for x in 0..GLYPH_SIDE {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d2 <= r * r {
                put(img, x as i64, y as i64, fg);
            }
        }
    }
}

fn render_cross<S: Scalar>(img: &mut [S], cx: f64, cy: f64, half: f64, thick: f64, fg: f64) {
    for y in 0..GLYPH_SIDE {
        for x in 0..GLYPH_SIDE {
            let dx = (x as f64 - cx).abs();
            let dy = (y as f64 - cy).abs();
            if (dx <= thick && dy <= half) || (dy <= thick && dx <= half) {
                put(img, x as i64, y as i64, fg);
            }
        }
    }
}

fn render_stripes<S: Scalar>(img: &mut [S], phase: f64, period: f64, thick: f64, fg: f64) {
    for y in 0..GLYPH_SIDE {
        let pos = (y as f64 + phase) % period;
        if pos < thick {
            for x in 0..GLYPH_SIDE {
                put(img, x as i64, y as i64, fg);
            }
        }
    }
}

/// `n_per_class` examples of each of the three glyph classes with seeded
/// jitter in position, size, and pixel noise. Labels 0 = disk, 1 = cross,
/// 2 = stripes.
pub fn glyph_corpus<S: Scalar>(n_per_class: usize, seed: u64) -> ImageSet<S> {
    let mut rng = RngStream::substream(seed, 101);
    let mut images = Vec::with_capacity(3 * n_per_class);
    let mut labels = Vec::with_capacity(3 * n_per_class);
    for class in 0..3 {
        for _ in 0..n_per_class {
            let mut img = vec![S::cast_from(0.04); GLYPH_SIDE * GLYPH_SIDE];
            let fg = 0.90 + 0.06 * rng.uniform::<f64>();
            let jx = 1.5 * (rng.uniform::<f64>() - 0.5);
            let jy = 1.5 * (rng.uniform::<f64>() - 0.5);
            let c = (GLYPH_SIDE as f64 - 1.0) / 2.0;
            match class {
                0 => render_disk(&mut img, c + jx, c + jy, 6.0 + rng.uniform::<f64>(), fg),
                1 => render_cross(
                    &mut img,
                    c + jx,
                    c + jy,
                    10.0 + rng.uniform::<f64>(),
                    2.0,
                    fg,
                ),
                _ => render_stripes(
                    &mut img,
                    8.0 * rng.uniform::<f64>(),
                    8.0,
                    3.5,
                    fg,
                ),
            }
            for v in &mut img {
                let noisy =
                    (v.cast_f64() + 0.02 * rng.standard_normal::<f64>()).clamp(0.0, 1.0);
                *v = S::cast_from(noisy);
            }
            images.push(img);
            labels.push(class);
        }
    }
    // Interleave classes deterministically.
    let mut order: Vec<usize> = (0..images.len()).collect();
    rng.shuffle(&mut order);
    let images = order.iter().map(|&i| images[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    ImageSet {
        height: GLYPH_SIDE,
        width: GLYPH_SIDE,
        channels: 1,
        images,
        labels,
        provenance: "procedural glyph corpus".into(),
    }
}

/// Round-trips the corpus through IDX files in a temp dir so the loader path
/// is exercised, then produces the two rotated viewpoints.
pub fn desk_scale_views<S: Scalar>(
    n_per_class: usize,
    seed: u64,
    rotate_b_degrees: f64,
) -> (Vec<Vec<S>>, Vec<Vec<S>>, Vec<usize>) {
    let corpus: ImageSet<S> = glyph_corpus(n_per_class, seed);
    let dir = tempfile::tempdir().expect("tempdir");
    let ip = dir.path().join("glyphs-images-idx3-ubyte");
    let lp = dir.path().join("glyphs-labels-idx1-ubyte");
    emcom_core::data::save_mnist_idx(&corpus, &ip, &lp).expect("write idx");
    let loaded: ImageSet<S> = emcom_core::data::load_mnist_idx(&ip, &lp).expect("read idx");
    let view_a = loaded.rotated(0.0);
    let view_b = loaded.rotated(rotate_b_degrees);
    (view_a.images, view_b.images, loaded.labels)
}
