//! Acquisition strategies: given a model (possibly freshly initialized) and
//! the unlabeled pool, pick `m` example ids to send for labeling.
//!
//! Strategies share one calling convention via [`acquire`]; every one is
//! deterministic given the model, pool order, and the RNG state passed in.
//! Per-example scoring fans out across threads with per-example seeds
//! derived from `(base seed, example id)`, so results do not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, kmeans_pp_seeds, nearest_distinct, DEFAULT_KMEANS_MAX_ITERS};
use crate::error::{Error, Result};
use crate::math::{entropy, l2_norm};
use crate::model::{output_layer_input, predict_proba, ModelParams};
use crate::seed;
use crate::vat::{compute_vadv, kl_contribution_vector, Perturbation, VatConfig};

pub type ExampleId = String;

/// An unlabeled pool entry: id plus feature vector.
pub type PoolEntry = (ExampleId, Vec<f64>);

/// Which acquisition rule to run, with its strategy-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform sampling without replacement.
    Rand,
    /// Highest predictive entropy.
    Entropy,
    /// k-means++ seeding over last-layer gradient embeddings.
    Badge,
    /// k-means over virtual adversarial perturbations, nearest to centers.
    Vapal(VatConfig),
    /// Like VAPAL but clustering the C-way per-class KL vectors.
    LdsVec(VatConfig),
    /// Percentile-filtered LDR scores with per-predicted-class round-robin.
    LdrClass { vat: VatConfig, prt: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Rand => "rand",
            Strategy::Entropy => "entropy",
            Strategy::Badge => "badge",
            Strategy::Vapal(_) => "vapal",
            Strategy::LdsVec(_) => "lds_vec",
            Strategy::LdrClass { .. } => "ldr_class",
        }
    }

    /// Build a strategy from its CLI name, attaching the VAT parameters and
    /// percentile threshold where the variant needs them.
    pub fn parse(name: &str, vat: VatConfig, prt: f64) -> Result<Strategy> {
        match name.to_ascii_lowercase().as_str() {
            "rand" | "random" => Ok(Strategy::Rand),
            "entropy" => Ok(Strategy::Entropy),
            "badge" => Ok(Strategy::Badge),
            "vapal" => Ok(Strategy::Vapal(vat)),
            "lds_vec" | "lds-vec" => Ok(Strategy::LdsVec(vat)),
            "ldr_class" | "ldr-class" => Ok(Strategy::LdrClass { vat, prt }),
            other => Err(Error::UnknownStrategy(other.to_string())),
        }
    }
}

/// The ids chosen in one round, with a per-selected-example diagnostic
/// score (meaning depends on the strategy: entropy, KL at the perturbation,
/// or embedding norm).
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionBatch {
    pub ids: Vec<ExampleId>,
    pub diagnostics: Vec<(ExampleId, f64)>,
}

/// Select `min(m, |pool|)` distinct ids from the pool with the given
/// strategy. When `m` covers the whole pool every strategy returns the pool
/// as-is.
pub fn acquire(
    strategy: &Strategy,
    params: &ModelParams,
    pool: &[PoolEntry],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AcquisitionBatch> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if m == 0 {
        return Err(Error::InvalidConfig("query size must be >= 1".into()));
    }
    if m >= pool.len() {
        let ids = pool.iter().map(|(id, _)| id.clone()).collect();
        return Ok(AcquisitionBatch { ids, diagnostics: Vec::new() });
    }
    let batch = match strategy {
        Strategy::Rand => select_rand(pool, m, rng),
        Strategy::Entropy => select_entropy(params, pool, m)?,
        Strategy::Badge => select_badge(params, pool, m, rng)?,
        Strategy::Vapal(vcfg) => select_vapal(params, pool, m, vcfg, rng)?,
        Strategy::LdsVec(vcfg) => select_lds_vec(params, pool, m, vcfg, rng)?,
        Strategy::LdrClass { vat, prt } => select_ldr_class(params, pool, m, vat, *prt, rng)?,
    };
    debug_assert_eq!(batch.ids.len(), m.min(pool.len()));
    debug_assert!(distinct_and_in_pool(&batch.ids, pool));
    Ok(batch)
}

fn distinct_and_in_pool(ids: &[ExampleId], pool: &[PoolEntry]) -> bool {
    let pool_ids: std::collections::HashSet<&str> =
        pool.iter().map(|(id, _)| id.as_str()).collect();
    let mut seen = std::collections::HashSet::new();
    ids.iter().all(|id| pool_ids.contains(id.as_str()) && seen.insert(id.as_str()))
}

fn select_rand(pool: &[PoolEntry], m: usize, rng: &mut ChaCha8Rng) -> AcquisitionBatch {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for i in 0..m {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    let ids = indices[..m].iter().map(|&i| pool[i].0.clone()).collect();
    AcquisitionBatch { ids, diagnostics: Vec::new() }
}

/// Top-`m` by predictive entropy, ties broken by lowest id.
pub fn select_entropy(params: &ModelParams, pool: &[PoolEntry], m: usize) -> Result<AcquisitionBatch> {
    let m = m.min(pool.len());
    let scores: Vec<f64> = pool
        .par_iter()
        .map(|(_, h)| predict_proba(params, h).map(|p| entropy(&p)))
        .collect::<Result<_>>()?;
    let order = rank_descending(pool, &scores);
    Ok(take_top(pool, &scores, &order, m))
}

/// Indices sorted by score descending, then id ascending.
fn rank_descending(pool: &[PoolEntry], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then_with(|| pool[a].0.cmp(&pool[b].0))
    });
    order
}

fn take_top(pool: &[PoolEntry], scores: &[f64], order: &[usize], m: usize) -> AcquisitionBatch {
    let chosen = &order[..m];
    AcquisitionBatch {
        ids: chosen.iter().map(|&i| pool[i].0.clone()).collect(),
        diagnostics: chosen.iter().map(|&i| (pool[i].0.clone(), scores[i])).collect(),
    }
}

/// BADGE gradient embedding: the outer product of `(probs − onehot(ŷ))`
/// with the representation feeding the output layer, flattened class-major.
/// Equals the output-layer weight gradient of cross-entropy at the model's
/// own argmax pseudo-label; its length is `C·d_last`.
pub fn badge_embedding(params: &ModelParams, h: &[f64]) -> Result<Vec<f64>> {
    let p = predict_proba(params, h)?;
    let a = output_layer_input(params, h)?;
    let top = p.argmax();
    let mut g = Vec::with_capacity(p.len() * a.len());
    for c in 0..p.len() {
        let coeff = p[c] - if c == top { 1.0 } else { 0.0 };
        g.extend(a.iter().map(|&aj| coeff * aj));
    }
    Ok(g)
}

/// BADGE selection: the k-means++ seed points over gradient embeddings are
/// the batch (seeds themselves, not Lloyd-refined centers).
pub fn select_badge(
    params: &ModelParams,
    pool: &[PoolEntry],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AcquisitionBatch> {
    let m = m.min(pool.len());
    let embeddings: Vec<Vec<f64>> = pool
        .par_iter()
        .map(|(_, h)| badge_embedding(params, h))
        .collect::<Result<_>>()?;
    let chosen = kmeans_pp_seeds(&embeddings, m, rng.gen())?;
    Ok(AcquisitionBatch {
        ids: chosen.iter().map(|&i| pool[i].0.clone()).collect(),
        diagnostics: chosen.iter().map(|&i| (pool[i].0.clone(), l2_norm(&embeddings[i]))).collect(),
    })
}

/// Virtual adversarial perturbations for every pool entry, each from its
/// own `(base_seed, id)`-derived stream; order matches the pool.
pub fn vapal_perturbations(
    params: &ModelParams,
    pool: &[PoolEntry],
    vcfg: &VatConfig,
    base_seed: u64,
) -> Result<Vec<Perturbation>> {
    pool.par_iter()
        .map(|(id, h)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::for_id(base_seed, id));
            compute_vadv(params, h, vcfg, &mut rng)
        })
        .collect()
}

/// VAPAL: k-means (k = m) over the perturbation vectors, then the nearest
/// still-free example to each center.
pub fn select_vapal(
    params: &ModelParams,
    pool: &[PoolEntry],
    m: usize,
    vcfg: &VatConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AcquisitionBatch> {
    let m = m.min(pool.len());
    let base_seed = seed::mix(vcfg.seed, rng.gen());
    let perts = vapal_perturbations(params, pool, vcfg, base_seed)?;
    let reps: Vec<Vec<f64>> = perts.iter().map(|p| p.r.clone()).collect();
    cluster_and_pick(pool, &reps, m, rng.gen(), |i| perts[i].kl_at_r)
}

/// `LDS_vec`: identical pipeline to VAPAL but clustering the C-way KL
/// contribution vectors instead of the raw perturbations.
pub fn select_lds_vec(
    params: &ModelParams,
    pool: &[PoolEntry],
    m: usize,
    vcfg: &VatConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AcquisitionBatch> {
    let m = m.min(pool.len());
    let base_seed = seed::mix(vcfg.seed, rng.gen());
    let perts = vapal_perturbations(params, pool, vcfg, base_seed)?;
    let reps: Vec<Vec<f64>> = pool
        .par_iter()
        .zip(&perts)
        .map(|((_, h), p)| kl_contribution_vector(params, h, &p.r))
        .collect::<Result<_>>()?;
    cluster_and_pick(pool, &reps, m, rng.gen(), |i| perts[i].kl_at_r)
}

fn cluster_and_pick(
    pool: &[PoolEntry],
    reps: &[Vec<f64>],
    m: usize,
    kmeans_seed: u64,
    score: impl Fn(usize) -> f64,
) -> Result<AcquisitionBatch> {
    let clusters = kmeans(reps, m, DEFAULT_KMEANS_MAX_ITERS, kmeans_seed)?;
    let chosen = nearest_distinct(reps, &clusters.centers)?;
    Ok(AcquisitionBatch {
        ids: chosen.iter().map(|&i| pool[i].0.clone()).collect(),
        diagnostics: chosen.iter().map(|&i| (pool[i].0.clone(), score(i))).collect(),
    })
}

/// `LDR_class`: keep examples whose LDR (KL at the perturbation) reaches
/// the `prt`-th percentile of the pool, group them by predicted label, and
/// round-robin the highest-LDR example from each group until `m` are
/// collected. A shortfall falls back to the next-highest LDR regardless of
/// group.
pub fn select_ldr_class(
    params: &ModelParams,
    pool: &[PoolEntry],
    m: usize,
    vcfg: &VatConfig,
    prt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<AcquisitionBatch> {
    if !(0.0..=100.0).contains(&prt) {
        return Err(Error::InvalidConfig(format!("prt percentile {prt} outside [0,100]")));
    }
    let m = m.min(pool.len());
    let base_seed = seed::mix(vcfg.seed, rng.gen());
    let perts = vapal_perturbations(params, pool, vcfg, base_seed)?;
    let ldr: Vec<f64> = perts.iter().map(|p| p.kl_at_r).collect();
    let predicted: Vec<usize> = pool
        .par_iter()
        .map(|(_, h)| predict_proba(params, h).map(|p| p.argmax()))
        .collect::<Result<_>>()?;

    // nearest-rank percentile threshold
    let mut sorted = ldr.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("KL is finite"));
    let rank = ((prt / 100.0) * pool.len() as f64).ceil() as usize;
    let threshold = if rank == 0 { f64::NEG_INFINITY } else { sorted[rank - 1] };

    // per-predicted-class queues of filtered examples, best LDR first
    let classes = params.cfg.num_classes;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for i in 0..pool.len() {
        if ldr[i] >= threshold {
            groups[predicted[i]].push(i);
        }
    }
    for group in &mut groups {
        group.sort_by(|&a, &b| {
            ldr[b]
                .partial_cmp(&ldr[a])
                .expect("KL is finite")
                .then_with(|| pool[a].0.cmp(&pool[b].0))
        });
    }

    let mut chosen = Vec::with_capacity(m);
    let mut cursors = vec![0usize; classes];
    while chosen.len() < m {
        let mut advanced = false;
        for (c, group) in groups.iter().enumerate() {
            if chosen.len() == m {
                break;
            }
            if cursors[c] < group.len() {
                chosen.push(group[cursors[c]]);
                cursors[c] += 1;
                advanced = true;
            }
        }
        if !advanced {
            break;
        }
    }
    if chosen.len() < m {
        // filtered set too small: extend with next-highest LDR overall
        let taken: std::collections::HashSet<usize> = chosen.iter().copied().collect();
        let mut rest: Vec<usize> = (0..pool.len()).filter(|i| !taken.contains(i)).collect();
        rest.sort_by(|&a, &b| {
            ldr[b]
                .partial_cmp(&ldr[a])
                .expect("KL is finite")
                .then_with(|| pool[a].0.cmp(&pool[b].0))
        });
        chosen.extend(rest.into_iter().take(m - chosen.len()));
    }
    Ok(AcquisitionBatch {
        ids: chosen.iter().map(|&i| pool[i].0.clone()).collect(),
        diagnostics: chosen.iter().map(|&i| (pool[i].0.clone(), ldr[i])).collect(),
    })
}
