//! Executable verification of the closed-form theory on discrete densities.
//!
//! On a finite support everything is computable exactly: the optimal
//! discriminator of the mixture game, `D*(x) = p_r(x) / (p_r(x) + p_g(x))`,
//! the value of the game at that optimum, and the identity tying it to the
//! Jensen-Shannon divergence,
//!
//! ```text
//! Σ p_r log D* + Σ p_g log(1 - D*)  =  -2 log 2 + 2 JSD(p_r || p_g)
//! ```
//!
//! with the global minimum `-2 log 2` reached exactly when the two mixtures
//! coincide. Logs are natural throughout; `0·log 0` terms are zero.
//!
//! The worst distributions entering the mixtures are supplied explicitly
//! (for instance shifted copies): the identities hold for any fixed pair, so
//! verifying them does not require solving the Wasserstein sup.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSource;
use crate::error::{Error, Result};
use crate::models::Mlp;
use crate::robust::{solve_real_perturbation, PerturbationConfig, Weighting};
use crate::seeding::{derive, rng_from, SALT_THEORY};
use crate::tape::LOG_FLOOR;
use crate::tensor::Tensor;

/// A probability mass function on a finite set of distinct 1-D or 2-D points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDensity {
    support: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl DiscreteDensity {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::Contract(
                "density needs matching non-empty support/probs".into(),
            ));
        }
        let dim = support[0].len();
        if dim == 0 || support.iter().any(|p| p.len() != dim) {
            return Err(Error::Contract("support points must share a dimension".into()));
        }
        for (i, a) in support.iter().enumerate() {
            for b in support.iter().skip(i + 1) {
                if a == b {
                    return Err(Error::Contract(format!("duplicate support point {a:?}")));
                }
            }
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Contract("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "probabilities sum to {total}, need 1 within 1e-12"
            )));
        }
        Ok(Self { support, probs })
    }

    /// Density on the 1-D integer grid `0..probs.len()`.
    pub fn on_grid_1d(probs: Vec<f64>) -> Result<Self> {
        let support = (0..probs.len()).map(|i| vec![i as f64]).collect();
        Self::new(support, probs)
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn same_support(&self, other: &Self) -> bool {
        self.support == other.support
    }

    /// Total variation distance `½ Σ |p - q|`.
    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        self.check_support(other, "total_variation")?;
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            / 2.0)
    }

    fn check_support(&self, other: &Self, op: &'static str) -> Result<()> {
        if !self.same_support(other) {
            return Err(Error::Domain {
                op,
                detail: "densities live on different supports".into(),
            });
        }
        Ok(())
    }
}

/// Pointwise convex combination `(1-λ)·p + λ·p_worst` on a shared support.
pub fn mixture(p: &DiscreteDensity, p_worst: &DiscreteDensity, lambda: f64) -> Result<DiscreteDensity> {
    p.check_support(p_worst, "mixture")?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!("mixture lambda {lambda} outside [0,1]")));
    }
    let probs = p
        .probs
        .iter()
        .zip(&p_worst.probs)
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect();
    DiscreteDensity::new(p.support.clone(), probs)
}

/// The closed-form optimal discriminator `D*(x) = p_r(x)/(p_r(x)+p_g(x))`
/// per support point. Points where both densities vanish are excluded by
/// contract and produce a domain error.
pub fn optimal_discriminator(p_r: &DiscreteDensity, p_g: &DiscreteDensity) -> Result<Vec<f64>> {
    p_r.check_support(p_g, "optimal_discriminator")?;
    p_r.probs
        .iter()
        .zip(&p_g.probs)
        .enumerate()
        .map(|(i, (r, g))| {
            let denom = r + g;
            if denom <= 0.0 {
                Err(Error::Domain {
                    op: "optimal_discriminator",
                    detail: format!("support point {i} has zero mass under both densities"),
                })
            } else {
                Ok(r / denom)
            }
        })
        .collect()
}

/// Jensen-Shannon divergence with natural log, `0·log 0 = 0`.
pub fn jsd(p: &DiscreteDensity, q: &DiscreteDensity) -> Result<f64> {
    p.check_support(q, "jsd")?;
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(ai, bi)| {
                if *ai == 0.0 {
                    0.0
                } else {
                    let mid = (ai + bi) / 2.0;
                    ai * (ai / mid).ln()
                }
            })
            .sum()
    };
    Ok(0.5 * kl_to_mid(&p.probs, &q.probs) + 0.5 * kl_to_mid(&q.probs, &p.probs))
}

/// Game value `Σ p_r log d + Σ p_g log(1-d)` for an arbitrary discriminator
/// `d` given per support point; `0·log 0` terms are zero.
pub fn value_with_discriminator(
    p_r: &DiscreteDensity,
    p_g: &DiscreteDensity,
    d: &[f64],
) -> Result<f64> {
    p_r.check_support(p_g, "value_with_discriminator")?;
    if d.len() != p_r.len() {
        return Err(Error::Contract(format!(
            "discriminator table has {} entries for {} support points",
            d.len(),
            p_r.len()
        )));
    }
    let mut value = 0.0;
    for ((r, g), di) in p_r.probs.iter().zip(&p_g.probs).zip(d) {
        if *r > 0.0 {
            value += r * di.ln();
        }
        if *g > 0.0 {
            value += g * (1.0 - di).ln();
        }
    }
    Ok(value)
}

/// Game value at the optimal discriminator, asserting the identity
/// `value = -2 log 2 + 2 JSD(p_r || p_g)` within 1e-9. A violation is a
/// build-level red flag and comes back as a theory-check error.
pub fn value_at_optimum(p_r: &DiscreteDensity, p_g: &DiscreteDensity) -> Result<f64> {
    let d_star = optimal_discriminator(p_r, p_g)?;
    let lhs = value_with_discriminator(p_r, p_g, &d_star)?;
    let rhs = -2.0 * std::f64::consts::LN_2 + 2.0 * jsd(p_r, p_g)?;
    if (lhs - rhs).abs() > 1e-9 {
        return Err(Error::TheoryCheck {
            name: "value_at_optimum identity".into(),
            lhs,
            rhs,
            tolerance: 1e-9,
        });
    }
    Ok(lhs)
}

// ── generalization gap ──────────────────────────────────────────────────

/// Which discriminator objective the gap is measured on.
#[derive(Debug, Clone, PartialEq)]
pub enum GapObjective {
    /// Per-sample `log D(x)`.
    Baseline,
    /// Per-sample mixture of clean and worst-case terms,
    /// `(1-λ) log D(x) + λ log D(x + ε₂ r1(x))` under the convex weighting
    /// (weight 1 on the clean term under the additive weighting).
    Robust {
        lambda: f64,
        perturb: PerturbationConfig,
        weighting: Weighting,
    },
}

/// One generalization-gap measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub train_value: f64,
    pub population_value: f64,
    pub gap: f64,
    pub n: usize,
    pub fresh_n: usize,
    pub seed: u64,
}

fn mean_objective(d: &Mlp, obj: &GapObjective, xs: &Tensor) -> Result<f64> {
    let n = xs.dims2()?.0 as f64;
    let mean_log_d = |batch: &Tensor| -> Result<f64> {
        let out = d.forward_inference(batch)?;
        Ok(out.data().iter().map(|v| v.max(LOG_FLOOR).ln()).sum::<f64>() / n)
    };
    match obj {
        GapObjective::Baseline => mean_log_d(xs),
        GapObjective::Robust {
            lambda,
            perturb,
            weighting,
        } => {
            let clean = mean_log_d(xs)?;
            if *lambda == 0.0 || (perturb.eps2 == 0.0 && *weighting == Weighting::Eq11Convex) {
                return Ok(clean);
            }
            let r1 = solve_real_perturbation(d, xs, perturb)?;
            let worst = mean_log_d(&r1.apply(xs, perturb.eps2)?)?;
            Ok(match weighting {
                Weighting::Eq11Convex => (1.0 - lambda) * clean + lambda * worst,
                Weighting::Algorithm1Additive => clean + lambda * worst,
            })
        }
    }
}

/// Real-data part of the objective on explicit train and fresh sets. The
/// fake-sample terms cancel in the difference when both evaluations share a
/// fake batch, so only the real-data terms are compared.
pub fn objective_gap(
    d: &Mlp,
    obj: &GapObjective,
    train_x: &Tensor,
    fresh_x: &Tensor,
) -> Result<(f64, f64)> {
    Ok((mean_objective(d, obj, train_x)?, mean_objective(d, obj, fresh_x)?))
}

/// Empirical generalization gap: the objective on the fixed training sample
/// versus `fresh_n ≫ n` fresh draws from the data source. Requires
/// `fresh_n ≥ 50·n` so the fresh estimate stands in for the population value.
pub fn generalization_gap(
    d: &Mlp,
    obj: &GapObjective,
    train_x: &Tensor,
    data: &DataSource,
    fresh_n: usize,
    seed: u64,
) -> Result<GapEstimate> {
    let n = train_x.dims2()?.0;
    if fresh_n < 50 * n {
        return Err(Error::Contract(format!(
            "fresh sample {fresh_n} too small for train size {n}; need at least {}",
            50 * n
        )));
    }
    let mut rng: ChaCha8Rng = rng_from(derive(seed, SALT_THEORY));
    let fresh = data.sample(fresh_n, &mut rng)?;
    let (train_value, population_value) = objective_gap(d, obj, train_x, &fresh)?;
    Ok(GapEstimate {
        train_value,
        population_value,
        gap: (train_value - population_value).abs(),
        n,
        fresh_n,
        seed,
    })
}

// ── theory-check suite ──────────────────────────────────────────────────

/// Outcome of one named identity check.
#[derive(Debug, Clone)]
pub struct TheoryCheckReport {
    pub name: &'static str,
    /// Worst observed left-hand side (or deviation) across trials.
    pub lhs: f64,
    /// Right-hand side or bound it is compared against.
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn random_density(rng: &mut ChaCha8Rng, support_points: usize) -> DiscreteDensity {
    use rand::Rng;
    let raw: Vec<f64> = (0..support_points).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteDensity::on_grid_1d(raw.into_iter().map(|v| v / total).collect())
        .expect("normalized density")
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Runs the full identity suite. `dstar_perturbation` shifts the closed-form
/// discriminator before comparison and exists as a negative-control fixture
/// for the command-line gate; pass 0 for the real checks.
pub fn run_theory_checks(seed: u64, dstar_perturbation: f64) -> Vec<TheoryCheckReport> {
    let mut rng = rng_from(derive(seed, SALT_THEORY));
    let points = 32;
    let pairs = 100;
    let mut reports = Vec::new();

    // Mixture densities built from random nominal/worst pairs with random λ.
    let mut mixtures = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        use rand::Rng;
        let lambda = rng.random_range(0.0..=1.0);
        let p_r = mixture(
            &random_density(&mut rng, points),
            &random_density(&mut rng, points),
            lambda,
        )
        .expect("shared support");
        let p_g = mixture(
            &random_density(&mut rng, points),
            &random_density(&mut rng, points),
            lambda,
        )
        .expect("shared support");
        mixtures.push((p_r, p_g));
    }

    // 1. Closed-form D* against per-point golden-section maximization.
    let mut worst_diff = 0.0f64;
    for (p_r, p_g) in &mixtures {
        let d_star: Vec<f64> = optimal_discriminator(p_r, p_g)
            .expect("positive mass")
            .iter()
            .map(|d| (d + dstar_perturbation).clamp(1e-9, 1.0 - 1e-9))
            .collect();
        for i in 0..points {
            let (a, b) = (p_r.probs()[i], p_g.probs()[i]);
            let numeric = golden_section_max(
                |d| a * d.ln() + b * (1.0 - d).ln(),
                1e-9,
                1.0 - 1e-9,
                200,
            );
            worst_diff = worst_diff.max((d_star[i] - numeric).abs());
        }
    }
    reports.push(TheoryCheckReport {
        name: "optimal_discriminator vs golden-section maximizer",
        lhs: worst_diff,
        rhs: 0.0,
        tolerance: 1e-6,
        pass: worst_diff <= 1e-6,
    });

    // 2. Value identity: Σ p_r log D* + Σ p_g log(1-D*) = -2log2 + 2 JSD.
    let mut worst_gap = 0.0f64;
    for (p_r, p_g) in &mixtures {
        let d_star: Vec<f64> = optimal_discriminator(p_r, p_g)
            .expect("positive mass")
            .iter()
            .map(|d| (d + dstar_perturbation).clamp(1e-9, 1.0 - 1e-9))
            .collect();
        let lhs = value_with_discriminator(p_r, p_g, &d_star).expect("valid table");
        let rhs = -2.0 * std::f64::consts::LN_2 + 2.0 * jsd(p_r, p_g).expect("shared support");
        worst_gap = worst_gap.max((lhs - rhs).abs());
    }
    reports.push(TheoryCheckReport {
        name: "game value at D* equals -2log2 + 2JSD",
        lhs: worst_gap,
        rhs: 0.0,
        tolerance: 1e-9,
        pass: worst_gap <= 1e-9,
    });

    // 3. Equal mixtures: D* ≡ 1/2 and value = -2 log 2.
    let p = random_density(&mut rng, points);
    let q = random_density(&mut rng, points);
    let equal_r = mixture(&p, &q, 0.3).expect("shared support");
    let equal_g = equal_r.clone();
    let d_star = optimal_discriminator(&equal_r, &equal_g).expect("positive mass");
    let d_star_dev = d_star
        .iter()
        .map(|d| (d + dstar_perturbation - 0.5).abs())
        .fold(0.0f64, f64::max);
    let value = value_with_discriminator(
        &equal_r,
        &equal_g,
        &d_star
            .iter()
            .map(|d| (d + dstar_perturbation).clamp(1e-9, 1.0 - 1e-9))
            .collect::<Vec<_>>(),
    )
    .expect("valid table");
    let min_dev = (value - (-2.0 * std::f64::consts::LN_2)).abs().max(d_star_dev);
    reports.push(TheoryCheckReport {
        name: "equal mixtures reach the global minimum -2log2 with D*=1/2",
        lhs: min_dev,
        rhs: 0.0,
        tolerance: 1e-12,
        pass: min_dev <= 1e-12,
    });

    // 4. Strictness: densities >= 1e-3 apart in total variation sit strictly
    //    above the minimum.
    let mut strict_ok = true;
    let mut worst_margin = f64::INFINITY;
    for (p_r, p_g) in &mixtures {
        let tv = p_r.total_variation(p_g).expect("shared support");
        if tv < 1e-3 {
            continue;
        }
        let v = value_at_optimum(p_r, p_g).expect("identity holds");
        let margin = v - (-2.0 * std::f64::consts::LN_2);
        worst_margin = worst_margin.min(margin);
        strict_ok &= margin > 1e-12;
    }
    reports.push(TheoryCheckReport {
        name: "value exceeds -2log2 when mixtures differ (TV >= 1e-3)",
        lhs: worst_margin,
        rhs: 1e-12,
        tolerance: 0.0,
        pass: strict_ok,
    });

    // 5. JSD symmetry and range [0, log 2].
    let mut sym_dev = 0.0f64;
    let mut range_ok = true;
    for (p_r, p_g) in &mixtures {
        let a = jsd(p_r, p_g).expect("shared support");
        let b = jsd(p_g, p_r).expect("shared support");
        sym_dev = sym_dev.max((a - b).abs());
        range_ok &= (0.0..=std::f64::consts::LN_2 + 1e-12).contains(&a);
    }
    reports.push(TheoryCheckReport {
        name: "jsd symmetry within 1e-12 and range [0, log2]",
        lhs: sym_dev,
        rhs: 0.0,
        tolerance: 1e-12,
        pass: sym_dev <= 1e-12 && range_ok,
    });

    // 6. Disjoint point masses reach the maximum log 2 and game value 0.
    let disjoint_p = DiscreteDensity::on_grid_1d(vec![0.5, 0.5, 0.0, 0.0]).expect("valid");
    let disjoint_q = DiscreteDensity::on_grid_1d(vec![0.0, 0.0, 0.5, 0.5]).expect("valid");
    let j = jsd(&disjoint_p, &disjoint_q).expect("shared support");
    let v = value_at_optimum(&disjoint_p, &disjoint_q).expect("identity holds");
    let dev = (j - std::f64::consts::LN_2).abs().max(v.abs());
    reports.push(TheoryCheckReport {
        name: "disjoint supports: jsd = log2 and value = 0",
        lhs: dev,
        rhs: 0.0,
        tolerance: 1e-12,
        pass: dev <= 1e-12,
    });

    reports
}
