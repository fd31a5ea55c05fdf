//! Generation-quality metrics and the worst-noise stress protocol.
//!
//! Mode coverage and multi-bandwidth RBF maximum mean discrepancy stand in
//! for the classifier-based scores used on image data; both operate directly
//! on 2-D samples.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSource;
use crate::error::{Error, Result};
use crate::gan::sample_latent;
use crate::models::Mlp;
use crate::robust::{worst_latent_perturbation, PerturbationConfig};
use crate::tensor::Tensor;

/// Scale factors applied to the median pairwise distance to form the RBF
/// bandwidth set.
pub const MMD_BANDWIDTH_SCALES: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Number of repetitions of the worst-noise stress protocol.
pub const STRESS_REPEATS: usize = 5;

/// Coverage of the target mixture components by a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    /// Modes that captured at least `min_hits` samples within the radius.
    pub covered_modes: usize,
    /// Fraction of samples within the capture radius of any mode.
    pub high_quality_fraction: f64,
    pub per_mode_hits: Vec<usize>,
    pub capture_radius: f64,
    pub min_hits: usize,
}

/// Nearest-mode assignment with capture radius `3σ` and hit threshold
/// `max(5, N/(10k))`. Needs at least 100 samples to be meaningful.
pub fn mode_coverage(samples: &Tensor, modes: &[[f64; 2]], sigma: f64) -> Result<ModeReport> {
    let (n, dim) = samples.dims2()?;
    if dim != 2 {
        return Err(Error::ShapeMismatch {
            op: "mode_coverage",
            detail: format!("expected [N x 2] samples, got dim {dim}"),
        });
    }
    if n < 100 {
        return Err(Error::Contract(format!(
            "mode_coverage needs at least 100 samples, got {n}"
        )));
    }
    if modes.is_empty() || sigma <= 0.0 {
        return Err(Error::Contract("mode_coverage needs modes and sigma > 0".into()));
    }
    let radius = 3.0 * sigma;
    let radius_sq = radius * radius;
    let mut hits = vec![0usize; modes.len()];
    let mut captured = 0usize;
    for i in 0..n {
        let p = samples.row(i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, c) in modes.iter().enumerate() {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            let d = dx * dx + dy * dy;
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if best_d <= radius_sq {
            hits[best] += 1;
            captured += 1;
        }
    }
    let min_hits = 5usize.max(n / (10 * modes.len()));
    let covered = hits.iter().filter(|&&h| h >= min_hits).count();
    Ok(ModeReport {
        covered_modes: covered,
        high_quality_fraction: captured as f64 / n as f64,
        per_mode_hits: hits,
        capture_radius: radius,
        min_hits,
    })
}

/// Median pairwise Euclidean distance over the pooled rows of `x` and `y`
/// (self-pairs excluded), floored at 1e-12 so it can serve as a bandwidth.
pub fn median_pairwise_distance(x: &Tensor, y: &Tensor) -> Result<f64> {
    let (nx, dx) = x.dims2()?;
    let (ny, dy) = y.dims2()?;
    if dx != dy {
        return Err(Error::ShapeMismatch {
            op: "median_pairwise_distance",
            detail: format!("{dx} vs {dy} columns"),
        });
    }
    let total = nx + ny;
    let point = |i: usize| -> &[f64] {
        if i < nx {
            x.row(i)
        } else {
            y.row(i - nx)
        }
    };
    let mut dists = Vec::with_capacity(total * (total - 1) / 2);
    for i in 0..total {
        let a = point(i);
        for j in (i + 1)..total {
            let b = point(j);
            let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
            dists.push(d.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        (dists[mid - 1] + dists[mid]) / 2.0
    };
    Ok(median.max(1e-12))
}

fn kernel_sums(x: &Tensor, y: &Tensor, bandwidths: &[f64]) -> (f64, f64, f64) {
    let nx = x.shape()[0];
    let ny = y.shape()[0];
    let k = |a: &[f64], b: &[f64]| -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
        bandwidths.iter().map(|h| (-d2 / (2.0 * h * h)).exp()).sum()
    };
    let mut kxx = 0.0;
    for i in 0..nx {
        for j in 0..nx {
            if i != j {
                kxx += k(x.row(i), x.row(j));
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..ny {
        for j in 0..ny {
            if i != j {
                kyy += k(y.row(i), y.row(j));
            }
        }
    }
    let mut kxy = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            kxy += k(x.row(i), y.row(j));
        }
    }
    (kxx, kyy, kxy)
}

fn check_mmd_inputs(x: &Tensor, y: &Tensor) -> Result<(usize, usize)> {
    let (nx, dx) = x.dims2()?;
    let (ny, dy) = y.dims2()?;
    if dx != dy {
        return Err(Error::ShapeMismatch {
            op: "mmd_rbf",
            detail: format!("{dx} vs {dy} columns"),
        });
    }
    if nx < 2 || ny < 2 {
        return Err(Error::Contract("mmd_rbf needs at least 2 samples per side".into()));
    }
    Ok((nx, ny))
}

/// Unbiased multi-bandwidth RBF MMD² with an explicit base bandwidth,
/// clamped below at zero for reporting.
pub fn mmd_rbf_with_base(x: &Tensor, y: &Tensor, scales: &[f64], base: f64) -> Result<f64> {
    let (nx, ny) = check_mmd_inputs(x, y)?;
    let bandwidths: Vec<f64> = scales.iter().map(|s| s * base).collect();
    let (kxx, kyy, kxy) = kernel_sums(x, y, &bandwidths);
    let (nx, ny) = (nx as f64, ny as f64);
    let est = kxx / (nx * (nx - 1.0)) + kyy / (ny * (ny - 1.0)) - 2.0 * kxy / (nx * ny);
    Ok(est.max(0.0))
}

/// Unbiased multi-bandwidth RBF MMD²; bandwidths are
/// `MMD_BANDWIDTH_SCALES`-style multiples of the pooled median pairwise
/// distance. Clamped below at zero for reporting.
pub fn mmd_rbf(x: &Tensor, y: &Tensor, scales: &[f64]) -> Result<f64> {
    let base = median_pairwise_distance(x, y)?;
    mmd_rbf_with_base(x, y, scales, base)
}

/// Biased MMD² variant (includes self-pairs), which is exactly zero when the
/// two sample sets are identical.
pub fn mmd_rbf_biased(x: &Tensor, y: &Tensor, scales: &[f64]) -> Result<f64> {
    let (nx, ny) = check_mmd_inputs(x, y)?;
    let base = median_pairwise_distance(x, y)?;
    let bandwidths: Vec<f64> = scales.iter().map(|s| s * base).collect();
    let (mut kxx, mut kyy, kxy) = kernel_sums(x, y, &bandwidths);
    // Self-pairs: k(a,a) = Σ_h exp(0) = number of bandwidths.
    kxx += nx as f64 * bandwidths.len() as f64;
    kyy += ny as f64 * bandwidths.len() as f64;
    let (nx, ny) = (nx as f64, ny as f64);
    Ok(kxx / (nx * nx) + kyy / (ny * ny) - 2.0 * kxy / (nx * ny))
}

/// One worst-noise stress measurement, averaged over `STRESS_REPEATS`
/// repetitions with fresh draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    /// Mean MMD²(real, G(z)) over repetitions.
    pub metric_clean: f64,
    /// Mean MMD²(real, G(z + ε₁ r)) over repetitions.
    pub metric_worst: f64,
    /// Mean of (worst - clean); for MMD higher is worse.
    pub robustness_gap: f64,
    pub clean_std: f64,
    pub worst_std: f64,
    pub gap_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Worst-noise stress protocol against a trained snapshot: per repetition,
/// draw fresh latents and real samples, re-solve the worst latent
/// perturbation against the final (G, D), and compare MMD under clean and
/// worst latents. The bandwidth is fixed per repetition from the
/// (real, clean) pool so both evaluations use the same yardstick.
pub fn worst_noise_stress(
    g: &Mlp,
    d: &Mlp,
    cfg: &PerturbationConfig,
    data: &DataSource,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StressReport> {
    let mut clean = Vec::with_capacity(STRESS_REPEATS);
    let mut worst = Vec::with_capacity(STRESS_REPEATS);
    let mut gaps = Vec::with_capacity(STRESS_REPEATS);
    for _ in 0..STRESS_REPEATS {
        let real = data.sample(n, rng)?;
        let z = sample_latent(n, g.spec.input_dim(), rng);
        let fake_clean = g.forward_inference(&z)?;
        let r = worst_latent_perturbation(g, d, &z, cfg)?;
        let fake_worst = g.forward_inference(&r.apply(&z, cfg.eps1)?)?;
        let base = median_pairwise_distance(&real, &fake_clean)?;
        let c = mmd_rbf_with_base(&real, &fake_clean, &MMD_BANDWIDTH_SCALES, base)?;
        let w = mmd_rbf_with_base(&real, &fake_worst, &MMD_BANDWIDTH_SCALES, base)?;
        clean.push(c);
        worst.push(w);
        gaps.push(w - c);
    }
    let (metric_clean, clean_std) = mean_std(&clean);
    let (metric_worst, worst_std) = mean_std(&worst);
    let (robustness_gap, gap_std) = mean_std(&gaps);
    Ok(StressReport {
        metric_clean,
        metric_worst,
        robustness_gap,
        clean_std,
        worst_std,
        gap_std,
    })
}

// ── metrics records and CSV schema ──────────────────────────────────────

pub const CSV_HEADER: &str = "step,seed,arm,d_loss,g_loss,mode_coverage,high_quality_fraction,mmd,mmd_worst_noise,robustness_gap,gen_gap_d";

/// One evaluation snapshot, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub seed: u64,
    pub arm: String,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mode_coverage: usize,
    pub high_quality_fraction: f64,
    pub mmd: f64,
    pub mmd_worst_noise: f64,
    pub robustness_gap: f64,
    pub gen_gap_d: f64,
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.seed,
            self.arm,
            self.d_loss,
            self.g_loss,
            self.mode_coverage,
            self.high_quality_fraction,
            self.mmd,
            self.mmd_worst_noise,
            self.robustness_gap,
            self.gen_gap_d
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Contract(format!(
                "metrics row has {} fields, expected 11: {line:?}",
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Contract(format!("bad float field {i} in {line:?}")))
        };
        Ok(Self {
            step: fields[0]
                .parse()
                .map_err(|_| Error::Contract(format!("bad step in {line:?}")))?,
            seed: fields[1]
                .parse()
                .map_err(|_| Error::Contract(format!("bad seed in {line:?}")))?,
            arm: fields[2].to_string(),
            d_loss: f(3)?,
            g_loss: f(4)?,
            mode_coverage: fields[5]
                .parse()
                .map_err(|_| Error::Contract(format!("bad coverage in {line:?}")))?,
            high_quality_fraction: f(6)?,
            mmd: f(7)?,
            mmd_worst_noise: f(8)?,
            robustness_gap: f(9)?,
            gen_gap_d: f(10)?,
        })
    }
}

/// Renders records as a CSV document: header row, LF endings, `.` decimals.
pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Parses a CSV document produced by [`records_to_csv`].
pub fn records_from_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => {
            return Err(Error::Contract(format!(
                "bad metrics CSV header: {other:?}"
            )))
        }
    }
    lines.map(MetricsRecord::from_csv_row).collect()
}
