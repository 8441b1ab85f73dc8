//! Binned goodness-of-fit evaluation.
//!
//! Sections are segmented into narrow intervals of the predicted mean crash
//! frequency. Within each segment the empirical distribution of observed
//! counts is set against the model's pmf evaluated at the interval midpoint;
//! segments pool into overall distributions with section counts as weights,
//! and the per-segment observed/predicted means feed a weighted pseudo-R²:
//!
//!   R² = 1 - sum N_i (O_i - P_i)² / sum N_i (O_i - Ō)²
//!
//! Predicted pmfs are renormalized over their truncated support (tail mass
//! below the 1e-9 budget) so pooled distributions are proper probability
//! vectors.

use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, Family};
use crate::distributions::{CountDist, NbParams, ZinbParams, DEFAULT_TAIL_BUDGET};
use crate::error::{Error, Result};
use crate::estimation::{predict_mean, zero_probabilities, FitResult};
use crate::num::{pairwise_sum, Float};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofConfig<F> {
    /// Width of each predicted-mean interval.
    pub bin_width: F,
    /// Predictions at or above this form the overflow group (excluded from
    /// charts and, by default, from the pseudo-R²).
    pub max_binned_mean: F,
    /// Bins with fewer sections are excluded from the pseudo-R².
    pub min_bin_count: usize,
    /// Largest count rendered separately in charts; the rest aggregate into
    /// a trailing "+" bucket.
    pub k_display: usize,
}

impl<F: Float> Default for GofConfig<F> {
    fn default() -> Self {
        Self {
            bin_width: F::cast(0.2),
            max_binned_mean: F::cast(2.0),
            min_bin_count: 1,
            k_display: 8,
        }
    }
}

impl<F: Float> GofConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > F::zero()) {
            return Err(Error::Invalid("bin_width must be positive".into()));
        }
        if !(self.max_binned_mean > F::zero()) {
            return Err(Error::Invalid("max_binned_mean must be positive".into()));
        }
        let ratio = self.max_binned_mean / self.bin_width;
        let rounded = ratio.round();
        if rounded < F::one() || (ratio - rounded).abs() > F::cast(1e-9) * ratio.max(F::one()) {
            return Err(Error::Invalid(format!(
                "max_binned_mean ({}) must be a positive multiple of bin_width ({})",
                self.max_binned_mean, self.bin_width
            )));
        }
        if self.k_display == 0 {
            return Err(Error::Invalid("k_display must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        (self.max_binned_mean / self.bin_width)
            .round()
            .to_f64_lossy() as usize
    }
}

/// One data segment: the sections whose predictions fall in
/// `[lower, upper)`, their observed count distribution, and the model
/// distribution at the interval midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: serde::Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct GofBin<F> {
    pub lower: F,
    pub upper: F,
    pub midpoint: F,
    pub member_indices: Vec<usize>,
    pub n_sections: usize,
    pub total_observed_crashes: u64,
    /// Histogram of observed counts over 0..support.
    pub observed_counts: Vec<u64>,
    /// `observed_counts / n_sections`.
    pub observed_pmf: Vec<F>,
    /// Model pmf at the midpoint mean, renormalized over the support.
    pub predicted_pmf: Vec<F>,
    pub observed_mean: F,
    pub predicted_mean: F,
    /// Member-average zero-inflation probability (ZINB fits only).
    pub mean_zero_prob: Option<F>,
}

/// The full report: bins, overflow and exclusions, pooled distributions, and
/// both pseudo-R² variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: serde::Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct GofReport<F> {
    pub bins: Vec<GofBin<F>>,
    pub overflow_indices: Vec<usize>,
    pub excluded_zero_indices: Vec<usize>,
    pub pooled_observed: Vec<F>,
    pub pooled_predicted: Vec<F>,
    pub pseudo_r2_weighted: F,
    pub pseudo_r2_unweighted: F,
    pub n_obs: usize,
    pub forced: bool,
    pub warnings: Vec<String>,
}

/// Segmentation skeleton before bins are filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Member observation indices per bin slot (0..n_bins).
    pub bin_members: Vec<Vec<usize>>,
    pub overflow: Vec<usize>,
    pub excluded_zero: Vec<usize>,
}

/// Assigns each observation to its half-open interval `[lower, upper)`, the
/// overflow group (prediction >= max), or the zero-prediction exclusion
/// list.
pub fn segment_by_prediction<F: Float>(
    predictions: &[F],
    cfg: &GofConfig<F>,
) -> Result<Segmentation> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let mut bin_members = vec![Vec::new(); n_bins];
    let mut overflow = Vec::new();
    let mut excluded_zero = Vec::new();
    for (i, &p) in predictions.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::Data(format!(
                "prediction at index {i} is not finite"
            )));
        }
        if p <= F::zero() {
            excluded_zero.push(i);
            continue;
        }
        if p >= cfg.max_binned_mean {
            overflow.push(i);
            continue;
        }
        let slot = (p / cfg.bin_width).floor().to_f64_lossy() as usize;
        let slot = slot.min(n_bins - 1);
        bin_members[slot].push(i);
    }
    Ok(Segmentation {
        bin_members,
        overflow,
        excluded_zero,
    })
}

/// Model distribution for a bin at the midpoint mean.
///
/// For ZINB fits, bins are formed on the unconditional mean, so the NB
/// component is evaluated at `midpoint / (1 - w)` with `w` the
/// member-average zero-inflation probability, and mixed with that same `w`.
fn bin_distribution<F: Float>(
    family: Family,
    midpoint: F,
    theta: F,
    mean_zero_prob: Option<F>,
) -> Result<CountDist<F>> {
    match family {
        Family::Nb | Family::GlmmNb => Ok(CountDist::Nb(NbParams::new(midpoint, theta)?)),
        Family::Zinb => {
            let w = mean_zero_prob.unwrap_or_else(F::zero);
            let denom = F::one() - w;
            if !(denom > F::zero()) {
                return Err(Error::Domain(
                    "bin zero-inflation probability is 1; NB component mean undefined".to_string(),
                ));
            }
            let nb = NbParams::new(midpoint / denom, theta)?;
            Ok(CountDist::Zinb(ZinbParams::new(nb, w)?))
        }
    }
}

/// Fills one bin: observed histogram and its exact proportions, plus the
/// midpoint model pmf over `0..support_len`.
#[allow(clippy::too_many_arguments)]
fn fill_bin<F: Float>(
    lower: F,
    upper: F,
    midpoint: F,
    members: Vec<usize>,
    y: &[u64],
    dist: &CountDist<F>,
    mean_zero_prob: Option<F>,
    support_len: usize,
) -> GofBin<F> {
    debug_assert!(!members.is_empty());
    let n = members.len();
    let mut observed_counts = vec![0u64; support_len];
    let mut total = 0u64;
    for &i in &members {
        let k = y[i] as usize;
        debug_assert!(k < support_len);
        observed_counts[k] += 1;
        total += y[i];
    }
    let nf = F::from_count(n);
    let observed_pmf: Vec<F> = observed_counts
        .iter()
        .map(|&c| F::from_count(c as usize) / nf)
        .collect();

    let raw: Vec<F> = (0..support_len as u64).map(|k| dist.pmf(k)).collect();
    let raw_total = pairwise_sum(&raw);
    debug_assert!(raw_total.to_f64_lossy() >= 1.0 - 1e-8);
    let predicted_pmf: Vec<F> = raw.iter().map(|&p| p / raw_total).collect();

    let observed_mean = F::from_count(total as usize) / nf;
    let predicted_mean = pairwise_sum(
        &predicted_pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| F::from_count(k) * p)
            .collect::<Vec<_>>(),
    );

    GofBin {
        lower,
        upper,
        midpoint,
        member_indices: members,
        n_sections: n,
        total_observed_crashes: total,
        observed_counts,
        observed_pmf,
        predicted_pmf,
        observed_mean,
        predicted_mean,
        mean_zero_prob,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Observed,
    Predicted,
}

/// Pools bin distributions with section counts as weights. The observed
/// pool is computed from the raw count histograms, so it equals the
/// empirical distribution of all binned observations exactly.
pub fn pooled_distribution<F: Float>(bins: &[GofBin<F>], which: Which) -> Result<Vec<F>> {
    if bins.is_empty() {
        return Err(Error::EmptyReport("no bins to pool".to_string()));
    }
    let support = bins.iter().map(|b| b.predicted_pmf.len()).max().unwrap();
    let total_n: usize = bins.iter().map(|b| b.n_sections).sum();
    let total_f = F::from_count(total_n);
    match which {
        Which::Observed => {
            let mut counts = vec![0u64; support];
            for bin in bins {
                for (k, &c) in bin.observed_counts.iter().enumerate() {
                    counts[k] += c;
                }
            }
            Ok(counts
                .iter()
                .map(|&c| F::from_count(c as usize) / total_f)
                .collect())
        }
        Which::Predicted => {
            let mut pooled = vec![F::zero(); support];
            for bin in bins {
                let w = F::from_count(bin.n_sections);
                for (k, &p) in bin.predicted_pmf.iter().enumerate() {
                    pooled[k] += w * p;
                }
            }
            for p in pooled.iter_mut() {
                *p = *p / total_f;
            }
            Ok(pooled)
        }
    }
}

/// Eq.-16-style pseudo-R² over the bin means. `weighted` selects section
/// counts as weights (the headline variant); the unweighted variant uses
/// unit weights, and the central mean Ō follows the chosen mode.
pub fn pseudo_r2<F: Float>(bins: &[GofBin<F>], weighted: bool, cfg: &GofConfig<F>) -> Result<F> {
    let used: Vec<&GofBin<F>> = bins
        .iter()
        .filter(|b| b.n_sections >= cfg.min_bin_count.max(1))
        .collect();
    if used.len() < 2 {
        return Err(Error::EmptyReport(format!(
            "pseudo-R² needs at least 2 bins with >= {} sections, have {}",
            cfg.min_bin_count.max(1),
            used.len()
        )));
    }
    let weight = |b: &GofBin<F>| {
        if weighted {
            F::from_count(b.n_sections)
        } else {
            F::one()
        }
    };
    let total_weight: F = pairwise_sum(&used.iter().map(|b| weight(b)).collect::<Vec<_>>());
    let center = pairwise_sum(
        &used
            .iter()
            .map(|b| weight(b) * b.observed_mean)
            .collect::<Vec<_>>(),
    ) / total_weight;
    let numerator = pairwise_sum(
        &used
            .iter()
            .map(|b| {
                let d = b.observed_mean - b.predicted_mean;
                weight(b) * d * d
            })
            .collect::<Vec<_>>(),
    );
    let denominator = pairwise_sum(
        &used
            .iter()
            .map(|b| {
                let d = b.observed_mean - center;
                weight(b) * d * d
            })
            .collect::<Vec<_>>(),
    );
    if !(denominator > F::zero()) {
        return Err(Error::UndefinedDenominator(
            "all bin observed means are equal".to_string(),
        ));
    }
    Ok(F::one() - numerator / denominator)
}

/// Runs the whole evaluation: predict, segment, fill bins, pool, and score.
///
/// `force` permits running on a non-converged fit; the report records it.
pub fn run_gof<F: Float>(
    fit: &FitResult<F>,
    design: &DesignMatrix<F>,
    cfg: &GofConfig<F>,
    force: bool,
) -> Result<GofReport<F>> {
    cfg.validate()?;
    if !fit.converged && !force {
        return Err(Error::Invalid(
            "fit did not converge; pass force=true to evaluate anyway".to_string(),
        ));
    }
    let mut warnings = Vec::new();
    let predictions = predict_mean(fit, design)?;
    let zero_probs = zero_probabilities(fit, design)?;

    let segmentation = segment_by_prediction(&predictions, cfg)?;
    for &i in &segmentation.excluded_zero {
        let w = format!("observation {i} predicted mean 0; excluded from binning");
        log::warn!("{w}");
        warnings.push(w);
    }

    // Support covers every observed binned count and every bin's tail
    // budget.
    let mut support_len = 1usize;
    for members in &segmentation.bin_members {
        for &i in members {
            support_len = support_len.max(design.y[i] as usize + 1);
        }
    }
    let half = cfg.bin_width / F::cast(2.0);
    let mut bin_inputs = Vec::new();
    for (slot, members) in segmentation.bin_members.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let lower = F::from_count(slot) * cfg.bin_width;
        let midpoint = lower + half;
        let mean_zero_prob = zero_probs.as_ref().map(|w| {
            pairwise_sum(&members.iter().map(|&i| w[i]).collect::<Vec<_>>())
                / F::from_count(members.len())
        });
        let dist = bin_distribution(fit.family, midpoint, fit.theta, mean_zero_prob)?;
        let k_max = dist.tail_k_max(F::cast(DEFAULT_TAIL_BUDGET))?;
        support_len = support_len.max(k_max as usize + 1);
        bin_inputs.push((slot, members.clone(), dist, mean_zero_prob));
    }

    if bin_inputs.is_empty() {
        return Err(Error::EmptyReport(format!(
            "no predictions below max_binned_mean = {}; overflow holds {} and {} were excluded",
            cfg.max_binned_mean,
            segmentation.overflow.len(),
            segmentation.excluded_zero.len()
        )));
    }

    let mut bins = Vec::with_capacity(bin_inputs.len());
    for (slot, members, dist, mean_zero_prob) in bin_inputs {
        let lower = F::from_count(slot) * cfg.bin_width;
        let upper = lower + cfg.bin_width;
        bins.push(fill_bin(
            lower,
            upper,
            lower + half,
            members,
            &design.y,
            &dist,
            mean_zero_prob,
            support_len,
        ));
    }

    let binned: usize = bins.iter().map(|b| b.n_sections).sum();
    debug_assert_eq!(
        binned + segmentation.overflow.len() + segmentation.excluded_zero.len(),
        design.n_obs()
    );

    let pooled_observed = pooled_distribution(&bins, Which::Observed)?;
    let pooled_predicted = pooled_distribution(&bins, Which::Predicted)?;
    let pseudo_r2_weighted = pseudo_r2(&bins, true, cfg)?;
    let pseudo_r2_unweighted = pseudo_r2(&bins, false, cfg)?;

    Ok(GofReport {
        bins,
        overflow_indices: segmentation.overflow,
        excluded_zero_indices: segmentation.excluded_zero,
        pooled_observed,
        pooled_predicted,
        pseudo_r2_weighted,
        pseudo_r2_unweighted,
        n_obs: design.n_obs(),
        forced: force && !fit.converged,
        warnings,
    })
}

/// One calibration-envelope violation: an observed proportion further from
/// its prediction than binomial sampling noise plus midpoint slack allows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBreach<F> {
    pub bin_index: usize,
    pub count: usize,
    pub observed: F,
    pub predicted: F,
    pub bound: F,
}

/// Checks every bin with at least `min_sections` members against the
/// envelope `|obs - pred| <= z sqrt(p (1-p) / n) + slack`.
pub fn envelope_breaches<F: Float>(
    report: &GofReport<F>,
    min_sections: usize,
    z: F,
    slack: F,
) -> Vec<EnvelopeBreach<F>> {
    let mut breaches = Vec::new();
    for (bin_index, bin) in report.bins.iter().enumerate() {
        if bin.n_sections < min_sections {
            continue;
        }
        let n = F::from_count(bin.n_sections);
        for (k, (&obs, &pred)) in bin
            .observed_pmf
            .iter()
            .zip(&bin.predicted_pmf)
            .enumerate()
        {
            let sd = (pred * (F::one() - pred) / n).sqrt();
            let bound = z * sd + slack;
            if (obs - pred).abs() > bound {
                breaches.push(EnvelopeBreach {
                    bin_index,
                    count: k,
                    observed: obs,
                    predicted: pred,
                    bound,
                });
            }
        }
    }
    breaches
}

impl<F: Float> GofReport<F> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-bin table as CSV: interval, membership, means, then the two pmfs with
/// counts above `k_display` aggregated into a trailing "plus" column.
pub fn bins_csv<F: Float>(report: &GofReport<F>, k_display: usize) -> String {
    let mut header = vec![
        "lower".to_string(),
        "upper".to_string(),
        "midpoint".to_string(),
        "n_sections".to_string(),
        "total_crashes".to_string(),
        "observed_mean".to_string(),
        "predicted_mean".to_string(),
    ];
    for prefix in ["observed_pmf", "predicted_pmf"] {
        for k in 0..k_display {
            header.push(format!("{prefix}_{k}"));
        }
        header.push(format!("{prefix}_{k_display}plus"));
    }
    let mut out = header.join(",") + "\n";
    for bin in &report.bins {
        let mut row = vec![
            format!("{}", bin.lower),
            format!("{}", bin.upper),
            format!("{}", bin.midpoint),
            format!("{}", bin.n_sections),
            format!("{}", bin.total_observed_crashes),
            format!("{}", bin.observed_mean),
            format!("{}", bin.predicted_mean),
        ];
        for pmf in [&bin.observed_pmf, &bin.predicted_pmf] {
            let display = display_pmf(pmf, k_display);
            for v in display {
                row.push(format!("{v}"));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Folds a pmf vector into `k_display` leading entries plus one aggregate
/// tail bucket.
pub fn display_pmf<F: Float>(pmf: &[F], k_display: usize) -> Vec<F> {
    let mut out: Vec<F> = pmf.iter().copied().take(k_display).collect();
    while out.len() < k_display {
        out.push(F::zero());
    }
    let tail = if pmf.len() > k_display {
        pairwise_sum(&pmf[k_display..])
    } else {
        F::zero()
    };
    out.push(tail);
    out
}
