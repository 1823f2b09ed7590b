use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    branch_scores, load_image, score_items_with, score_pairs_with, EvalError, EvalOptions,
    ScoredBenchmark,
};
use crate::corpus::{Benchmark, Branch, ImageRef};
use crate::debias::{make_noise_image, png_dimensions};
use crate::scorer::LogProbProvider;
use crate::seed::Seed;

/// Noise image size for items whose image size is unknown.
pub const DEFAULT_NOISE_DIMS: (u32, u32) = (224, 224);

#[derive(Debug, Clone)]
pub struct AblationOptions {
    pub eval: EvalOptions,
    pub seed: Seed,
    pub default_dims: (u32, u32),
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            eval: EvalOptions::default(),
            seed: Seed(0),
            default_dims: DEFAULT_NOISE_DIMS,
        }
    }
}

/// Branch headline value with original and with noise images.
/// `delta = noise - original`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub items: usize,
    pub original: f64,
    pub noise: f64,
    pub delta: f64,
}

fn noise_for(
    image: Option<&ImageRef>,
    label: &str,
    opts: &AblationOptions,
) -> Result<Vec<u8>, EvalError> {
    let original = load_image(image, &opts.eval)?;
    let (w, h) = original
        .as_deref()
        .and_then(png_dimensions)
        .unwrap_or(opts.default_dims);
    Ok(make_noise_image(w, h, opts.seed.derive(label))?)
}

/// Evaluates `b` twice, once as-is and once with every image replaced by
/// seeded uniform noise of the same size.
pub fn ablate_noise<P: LogProbProvider + ?Sized>(
    b: &Benchmark,
    provider: &P,
    opts: &AblationOptions,
) -> Result<BTreeMap<Branch, AblationRow>, EvalError> {
    let original = branch_scores(&super::score_benchmark(b, provider, &opts.eval)?)?;

    let item_images = b
        .items
        .iter()
        .map(|i| noise_for(i.image.as_ref(), &format!("noise/{}", i.item_id), opts).map(Some))
        .collect::<Result<Vec<_>, _>>()?;
    let pair_images = b
        .pairs
        .iter()
        .map(|p| {
            Ok([
                Some(noise_for(
                    p.image_0.as_ref(),
                    &format!("noise/{}/0", p.pair_id),
                    opts,
                )?),
                Some(noise_for(
                    p.image_1.as_ref(),
                    &format!("noise/{}/1", p.pair_id),
                    opts,
                )?),
            ])
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let noisy = ScoredBenchmark {
        items: score_items_with(&b.items, item_images, provider, &opts.eval)?,
        pairs: score_pairs_with(&b.pairs, pair_images, provider, &opts.eval)?,
    };
    let noise = branch_scores(&noisy)?;

    for (branch, counts) in &b.metadata.counts {
        if counts.items == 0 {
            log::warn!("{branch}: no items, omitted from ablation");
        }
    }
    Ok(original
        .into_iter()
        .map(|(branch, o)| {
            let n = noise[&branch].value;
            (
                branch,
                AblationRow {
                    items: o.items,
                    original: o.value,
                    noise: n,
                    delta: n - o.value,
                },
            )
        })
        .collect())
}
