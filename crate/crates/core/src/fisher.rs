//! Per-instance diagonal Fisher information over the head parameters.
//!
//! With equal class priors the diagonal is `0.5*(g0 ⊙ g0) + 0.5*(g1 ⊙ g1)`
//! where `g_y` is the BCE gradient for hypothetical label `y`. Three scalar
//! summaries (trace, Frobenius norm, mean per-layer entropy) are turned into
//! uncertainties by taking reciprocals, so that low information reads as
//! high non-conformity.

use crate::error::Result;
use crate::head::ClassifierHead;

/// Guard constant for both the entropy log and the reciprocal transforms.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Diagonal of the approximated per-instance FIM, partitioned by layer in
/// the head's frozen parameter order.
#[derive(Debug, Clone)]
pub struct FisherDiag {
    layers: Vec<Vec<f64>>,
    epsilon: f64,
}

impl FisherDiag {
    /// Build from per-layer diagonal vectors. Entries must be nonnegative.
    pub fn from_layers(layers: Vec<Vec<f64>>, epsilon: f64) -> Self {
        debug_assert!(layers.iter().flatten().all(|&v| v >= 0.0));
        Self { layers, epsilon }
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Diagonal FIM for one input, evaluation mode, equal class priors.
pub fn fim_diag(head: &ClassifierHead, x: &[f64]) -> Result<FisherDiag> {
    let g0 = head.grad_params(x, 0)?;
    let g1 = head.grad_params(x, 1)?;
    let flat: Vec<f64> = g0
        .iter()
        .zip(g1.iter())
        .map(|(a, b)| 0.5 * a * a + 0.5 * b * b)
        .collect();
    let mut layers = Vec::new();
    let mut offset = 0;
    for size in head.layer_param_sizes() {
        layers.push(flat[offset..offset + size].to_vec());
        offset += size;
    }
    Ok(FisherDiag::from_layers(layers, DEFAULT_EPSILON))
}

/// Total Fisher information: the diagonal summed across all layers.
pub fn fisher_trace(diag: &FisherDiag) -> f64 {
    diag.layers.iter().flatten().sum()
}

/// How per-layer contributions enter the Frobenius summary. The cumulative
/// wording of the source aggregation is ambiguous for a norm, so both
/// readings are available; pooling is the default everywhere.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FrobeniusMode {
    /// Pool squared entries across layers, then take one square root.
    #[default]
    PooledRoot,
    /// Sum the per-layer Frobenius norms.
    PerLayerSum,
}

/// Frobenius norm of the diagonal approximation: squared entries are pooled
/// across layers before the single square root.
pub fn fisher_frobenius(diag: &FisherDiag) -> f64 {
    fisher_frobenius_mode(diag, FrobeniusMode::PooledRoot)
}

pub fn fisher_frobenius_mode(diag: &FisherDiag, mode: FrobeniusMode) -> f64 {
    match mode {
        FrobeniusMode::PooledRoot => diag
            .layers
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt(),
        FrobeniusMode::PerLayerSum => diag
            .layers
            .iter()
            .map(|layer| layer.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum(),
    }
}

/// Mean across layers of each layer's normalized-diagonal entropy
/// (natural log, `+epsilon` inside the log).
///
/// A layer with zero trace contributes entropy 0; the second return value
/// flags that degenerate case.
pub fn fisher_entropy(diag: &FisherDiag) -> (f64, bool) {
    let mut degenerate = false;
    let mut total = 0.0;
    for layer in &diag.layers {
        let trace: f64 = layer.iter().sum();
        if trace <= 0.0 {
            degenerate = true;
            continue;
        }
        let mut h = 0.0;
        for &v in layer {
            let p = v / trace;
            if p > 0.0 {
                h -= p * (p + diag.epsilon).ln();
            }
        }
        total += h;
    }
    (total / diag.layers.len() as f64, degenerate)
}

/// The three reciprocal uncertainty transforms.
pub fn fisher_uncertainties(
    trace: f64,
    frobenius: f64,
    entropy: f64,
    epsilon: f64,
) -> (f64, f64, f64) {
    (
        1.0 / (trace + epsilon),
        1.0 / (frobenius + epsilon),
        1.0 / (entropy + epsilon),
    )
}

/// Scalar summaries of one diagonal FIM plus their reciprocal uncertainties.
#[derive(Debug, Clone, Copy)]
pub struct FisherSummary {
    pub trace: f64,
    pub frobenius: f64,
    pub entropy: f64,
    pub fisher_total_u: f64,
    pub fisher_frobenius_u: f64,
    pub fisher_entropy_u: f64,
    pub degenerate_layers: bool,
}

pub fn summarize(diag: &FisherDiag) -> FisherSummary {
    let trace = fisher_trace(diag);
    let frobenius = fisher_frobenius(diag);
    let (entropy, degenerate_layers) = fisher_entropy(diag);
    let (fisher_total_u, fisher_frobenius_u, fisher_entropy_u) =
        fisher_uncertainties(trace, frobenius, entropy, diag.epsilon());
    FisherSummary {
        trace,
        frobenius,
        entropy,
        fisher_total_u,
        fisher_frobenius_u,
        fisher_entropy_u,
        degenerate_layers,
    }
}
