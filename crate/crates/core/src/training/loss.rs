use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Loss nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub l1: Var,
    /// Absent when the batch has no labeled queries or only one class.
    pub ce: Option<Var>,
}

/// How the two task losses are combined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    /// Clamp applied to both predicted and target distances inside ℓ1.
    pub clamp: Option<f64>,
    /// Learned log-variance weighting; plain sum when false.
    pub uncertainty: bool,
}

/// `exp(−s1)·L1 + s1 + exp(−s2)·CE + s2`, or `L1 + CE` without uncertainty
/// weighting. Cross-entropy covers the queries flagged in `mask`.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss<T: Scalar>(
    g: &mut Graph<T>,
    distance: Var,
    targets: &[f32],
    logits: Var,
    labels: &[u32],
    mask: Option<&[bool]>,
    s: (Var, Var),
    settings: LossSettings,
) -> Result<LossParts> {
    if g.value(distance).len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predicted distances for {} targets",
            g.value(distance).len(),
            targets.len()
        )));
    }
    let (pred, target) = match settings.clamp {
        Some(c) => {
            let t = targets.iter().map(|&d| T::of((d as f64).min(c))).collect();
            (g.clamp_max(distance, c), t)
        }
        None => (distance, targets.iter().map(|&d| T::from_f32(d)).collect()),
    };
    let target = g.constant(Tensor::matrix(targets.len(), 1, target)?);
    let l1 = g.l1(pred, target)?;
    let classes = g.value(logits).cols();
    let labeled = match mask {
        Some(m) => m.iter().filter(|&&b| b).count(),
        None => labels.len(),
    };
    let ce = if classes >= 2 && labeled > 0 {
        Some(g.cross_entropy(logits, labels, mask)?)
    } else {
        None
    };
    let weighted = |g: &mut Graph<T>, loss: Var, s: Var| -> Result<Var> {
        let neg = g.scale(s, -1.0);
        let w = g.exp(neg);
        let term = g.mul(w, loss)?;
        g.add(term, s)
    };
    let total = if settings.uncertainty {
        let a = weighted(g, l1, s.0)?;
        match ce {
            Some(ce) => {
                let b = weighted(g, ce, s.1)?;
                g.add(a, b)?
            }
            None => a,
        }
    } else {
        match ce {
            Some(ce) => g.add(l1, ce)?,
            None => l1,
        }
    };
    Ok(LossParts { total, l1, ce })
}

/// Deterministic per-sample choice of which queries carry a semantic label.
pub fn label_mask(seed: u64, count: usize, fraction: f64) -> Vec<bool> {
    if fraction >= 1.0 {
        return vec![true; count];
    }
    let cut = (fraction.max(0.0) * u64::MAX as f64) as u64;
    (0..count as u64).map(|i| splitmix64(seed ^ splitmix64(i)) < cut).collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
