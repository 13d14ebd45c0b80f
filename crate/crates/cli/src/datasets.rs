//! Materializes the two agents' observation sets from a config: raw view for
//! agent A, rotated view for agent B, plus truth labels for metrics.

use anyhow::{Context, Result};

use emcom_core::data::{
    load_image_folder, load_mnist_idx, subset_per_class, synthesize_inter_gmm, ImageSet,
    SyntheticSpec,
};
use emcom_core::probability::{NwHyper, SpdMatrix};
use emcom_core::rng::RngStream;
use emcom_core::Scalar;

use crate::config::ExperimentConfig;

/// One experiment's inputs. For image sources `height`/`width` describe the
/// frames; synthetic latents have no frame.
pub struct Prepared<S> {
    pub obs_a: Vec<Vec<S>>,
    pub obs_b: Vec<Vec<S>>,
    pub truth: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub is_images: bool,
}

pub fn prepare<S: Scalar>(cfg: &ExperimentConfig) -> Result<Prepared<S>> {
    match cfg.data.source.as_str() {
        "synthetic" => {
            let d = cfg.data.synthetic_d.expect("validated");
            let alpha = cfg.data.synthetic_alpha.unwrap_or(0.05);
            let l = cfg.game.latent_dim;
            let nu = (l + 2) as f64;
            let hyper = NwHyper {
                m: vec![S::zero(); l],
                alpha: S::cast_from(alpha),
                nu: S::cast_from(nu),
                beta: SpdMatrix::scaled_identity(l, S::cast_from(1.0 / nu)),
            };
            let spec = SyntheticSpec { k: cfg.game.k, d, latent_dim: l, hyper, seed: cfg.master_seed };
            let out = synthesize_inter_gmm(&spec).context("synthesizing latents")?;
            Ok(Prepared {
                obs_a: out.z_a,
                obs_b: out.z_b,
                truth: out.w_true,
                height: 0,
                width: 0,
                is_images: false,
            })
        }
        "mnist" => {
            let images = cfg.data.mnist_images.as_ref().expect("validated");
            let labels = cfg.data.mnist_labels.as_ref().expect("validated");
            let set: ImageSet<S> = load_mnist_idx(images, labels).context("loading IDX data")?;
            from_images(cfg, set)
        }
        "image_folder" => {
            let folder = cfg.data.folder.as_ref().expect("validated");
            let [h, w] = cfg.data.resize.unwrap_or([28, 28]);
            let set: ImageSet<S> =
                load_image_folder(folder, (h, w)).context("loading image folder")?;
            from_images(cfg, set)
        }
        other => anyhow::bail!("unknown data source {other:?}"),
    }
}

fn from_images<S: Scalar>(cfg: &ExperimentConfig, set: ImageSet<S>) -> Result<Prepared<S>> {
    let subset = if let Some(per_class) = cfg.data.per_class {
        let classes: Vec<usize> = if cfg.data.classes.is_empty() {
            let mut cs: Vec<usize> = set.labels.to_vec();
            cs.sort_unstable();
            cs.dedup();
            cs
        } else {
            cfg.data.classes.clone()
        };
        let mut rng = RngStream::substream(cfg.master_seed, 17);
        subset_per_class(&set, per_class, &classes, &mut rng).context("stratified subset")?
    } else {
        set
    };
    subset.validate().context("dataset validation")?;
    let view_a = subset.rotated(cfg.data.rotate_a);
    let view_b = subset.rotated(cfg.data.rotate_b);
    Ok(Prepared {
        obs_a: view_a.images,
        obs_b: view_b.images,
        truth: subset.labels.clone(),
        height: subset.height,
        width: subset.width,
        is_images: true,
    })
}
