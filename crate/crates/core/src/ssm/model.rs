//! Full forward pass: RFN stem, one spectral traversal, stacked blocks,
//! global pooling and a linear head.

use crate::config::ModelConfig;
use crate::eigensolver::{lanczos_smallest, EigReport, SpectralBasis};
use crate::error::{Error, Result};
use crate::patch_embed::{rfn_aggregate, FeatureMap};
use crate::spectral_graph::{flatten_features, PatchGraph};
use crate::tensor_io::ImageTensor;
use crate::traversal::{build_plan, downsample_plan, pool_indices, TraversalPlan};

use super::block::block_forward;
use super::weights::ModelWeights;

/// Graph, eigenpairs and orders computed once from the stem features.
#[derive(Debug, Clone)]
pub struct SpectralTraversal {
    pub graph: PatchGraph,
    pub basis: SpectralBasis,
    pub plan: TraversalPlan,
    pub eig: EigReport,
}

pub fn stem_features(img: &ImageTensor, w: &ModelWeights, cfg: &ModelConfig) -> Result<FeatureMap> {
    rfn_aggregate(img, &w.stem, &cfg.rfn_turns, cfg.parallel).map_err(|e| e.in_stage("rfn"))
}

pub fn spectral_traversal(f: &FeatureMap, cfg: &ModelConfig) -> Result<SpectralTraversal> {
    let graph = PatchGraph::build(&flatten_features(f), &cfg.graph()).map_err(|e| e.in_stage("graph"))?;
    let (basis, eig) = lanczos_smallest(&graph.laplacian, &cfg.eig()).map_err(|e| e.in_stage("eigensolver"))?;
    let plan = build_plan(&basis, f.shape()).map_err(|e| e.in_stage("traversal"))?;
    Ok(SpectralTraversal { graph, basis, plan, eig })
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// RFN output.
    pub features: FeatureMap,
    pub traversal: SpectralTraversal,
    /// Token grid of every stage.
    pub stage_shapes: Vec<(usize, usize)>,
    /// Globally pooled features fed to the head.
    pub pooled: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Class scores for `img`.
pub fn network_forward(img: &ImageTensor, w: &ModelWeights, cfg: &ModelConfig) -> Result<Vec<f64>> {
    Ok(network_forward_traced(img, w, cfg)?.scores)
}

/// Stages after the first pool their input 2x2 and carry the traversal along;
/// a grid with an odd side is left at its size.
pub fn network_forward_traced(img: &ImageTensor, w: &ModelWeights, cfg: &ModelConfig) -> Result<ForwardTrace> {
    if w.layers.len() != cfg.layout.len() {
        return Err(Error::shape(format!("weights have {} stages, layout has {}", w.layers.len(), cfg.layout.len())));
    }
    let features = stem_features(img, w, cfg)?;
    let traversal = spectral_traversal(&features, cfg)?;
    let mut f = features.clone();
    let mut plan = traversal.plan.clone();
    let mut basis = traversal.basis.clone();
    let mut stage_shapes = Vec::with_capacity(w.layers.len());
    for (l, blocks) in w.layers.iter().enumerate() {
        let (hp, wp) = f.shape();
        if l > 0 && hp % 2 == 0 && wp % 2 == 0 {
            let (pooled, pool) = pool_indices(&f).map_err(|e| e.in_stage("pool"))?;
            let (p, b) = downsample_plan(&plan, &basis, &pool).map_err(|e| e.in_stage("pool"))?;
            f = pooled;
            plan = p;
            basis = b;
        }
        stage_shapes.push(f.shape());
        for block in blocks {
            f = block_forward(&f, &plan, block, cfg.zoh_mode, cfg.parallel).map_err(|e| e.in_stage("block"))?;
        }
    }

    let c = f.channels();
    let mut pooled = vec![0.0; c];
    // token order follows the traversal so rotated inputs sum identically
    for &i in &plan.orders[0] {
        pooled.iter_mut().zip(f.token(i)).for_each(|(p, x)| *p += x);
    }
    pooled.iter_mut().for_each(|p| *p /= plan.n as f64);

    let classes = w.head_bias.len();
    if w.head_weight.len() != c * classes {
        return Err(Error::shape(format!("head has {} weights, expected {c}x{classes}", w.head_weight.len()))
            .in_stage("head"));
    }
    let mut scores: Vec<f64> = w.head_bias.iter().map(|&b| b as f64).collect();
    for (ci, &x) in pooled.iter().enumerate() {
        let row = &w.head_weight[ci * classes..(ci + 1) * classes];
        scores.iter_mut().zip(row).for_each(|(s, &w)| *s += x * w as f64);
    }
    Ok(ForwardTrace { features, traversal, stage_shapes, pooled, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MergeMode;
    use crate::ssm::ZohMode;
    use crate::tensor_io::{rotate_quarter, synth_noise, QuarterTurn};

    fn small(merge_mode: MergeMode) -> ModelConfig {
        ModelConfig {
            channels: 8,
            state: 4,
            m: 2,
            layout: vec![1, 1, 1],
            classes: 5,
            image_size: 32,
            merge_mode,
            ..Default::default()
        }
    }

    #[test]
    fn zero_head_gives_zero_scores() {
        let cfg = small(MergeMode::ConcatProj);
        let mut w = ModelWeights::seeded(&cfg, 1).unwrap();
        w.head_weight.iter_mut().for_each(|v| *v = 0.0);
        let img = synth_noise(32, 32, 3, 4).unwrap();
        assert_eq!(network_forward(&img, &w, &cfg).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let cfg = small(MergeMode::Sum);
        let w = ModelWeights::seeded(&cfg, 2).unwrap();
        let img = synth_noise(32, 32, 3, 5).unwrap();
        let a = network_forward(&img, &w, &cfg).unwrap();
        assert_eq!(a, network_forward(&img, &w, &cfg).unwrap());
        let par = ModelConfig { parallel: true, ..cfg.clone() };
        assert_eq!(a, network_forward(&img, &w, &par).unwrap());
    }

    #[test]
    fn stages_pool_until_odd() {
        let cfg = small(MergeMode::Mean);
        let w = ModelWeights::seeded(&cfg, 3).unwrap();
        let trace = network_forward_traced(&synth_noise(32, 32, 3, 6).unwrap(), &w, &cfg).unwrap();
        assert_eq!(trace.stage_shapes, vec![(8, 8), (4, 4), (2, 2)]);
    }

    #[test]
    fn rotations_leave_scores_unchanged() {
        for (merge_mode, zoh) in [(MergeMode::ConcatProj, ZohMode::Approx), (MergeMode::Sum, ZohMode::Exact)] {
            let cfg = ModelConfig { zoh_mode: zoh, ..small(merge_mode) };
            let w = ModelWeights::seeded(&cfg, 4).unwrap();
            let img = synth_noise(32, 32, 3, 7).unwrap();
            let base = network_forward(&img, &w, &cfg).unwrap();
            for q in 1..4 {
                let rotated = network_forward(&rotate_quarter(&img, QuarterTurn::new(q)), &w, &cfg).unwrap();
                for (a, b) in base.iter().zip(&rotated) {
                    assert!((a - b).abs() <= 1e-6, "q={q}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn stage_errors_are_labelled() {
        let cfg = ModelConfig { k: 70, ..small(MergeMode::Sum) };
        let w = ModelWeights::seeded(&cfg, 1).unwrap();
        let err = network_forward(&synth_noise(32, 32, 3, 1).unwrap(), &w, &cfg).unwrap_err();
        assert!(err.to_string().starts_with("graph:"), "{err}");
    }
}
