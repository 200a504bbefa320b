//! Synthetic admission cohorts: feature generation, a hidden linear outcome
//! process, least-squares outcome fitting, and a score-based history filter
//! that mimics how past cohorts were admitted.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::historical_topk;
use crate::outcome::{LinearOutcomeModel, OutcomeMatrix};
use crate::population::Population;
use crate::selection::Selection;
use crate::util::{derive_seed, sigmoid};

/// Number of generated candidate features: age, gender indicator,
/// grade-point average, science score, language score, other score, and a
/// priority score, in this order.
pub const FEATURE_COUNT: usize = 7;

/// Column index of the quantized grade-point average.
const GPA_COLUMN: usize = 1 + 1;

/// Per-column means and standard deviations of the continuous features
/// (the gender indicator at index 1 is drawn as a fair coin instead).
const FEATURE_MEANS: [f64; FEATURE_COUNT] = [0.5, 0.5, 0.62, 0.55, 0.5, 0.45, 0.3];
const FEATURE_SDS: [f64; FEATURE_COUNT] = [0.2, 0.5, 0.18, 0.25, 0.22, 0.25, 0.25];

/// Scoring weights and offset of the legacy admission rule.
const HISTORICAL_WEIGHTS: [f64; FEATURE_COUNT] = [0.3, 0.0, 2.2, 0.7, 0.4, 0.2, 1.5];
const HISTORICAL_BIAS: f64 = 1.6;

/// Knobs of the cohort generator and its hidden outcome process.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Cohort size.
    pub n: usize,
    /// How far the second group's mean grade-point average is lowered before
    /// quantization.
    pub grade_shift: f64,
    /// Standard deviation of the additive outcome noise.
    pub outcome_noise_sd: f64,
    /// Weight of the gender indicator in the hidden outcome model.
    pub outcome_group_weight: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 200,
            grade_shift: 0.15,
            outcome_noise_sd: 0.015,
            outcome_group_weight: -0.05,
        }
    }
}

impl GeneratorConfig {
    /// The hidden three-outcome linear model actually driving the generated
    /// outcomes. Fitting procedures never see these coefficients.
    pub fn hidden_model(&self) -> LinearOutcomeModel {
        let w = self.outcome_group_weight;
        LinearOutcomeModel {
            coeffs: vec![
                vec![0.02, w, 0.26, 0.08, 0.02, 0.02, 0.12],
                vec![0.0, 0.8 * w, 0.30, 0.12, 0.03, 0.0, 0.07],
                vec![0.03, 1.2 * w, 0.22, 0.05, 0.05, 0.02, 0.14],
            ],
            intercepts: vec![-0.15, -0.17, -0.13],
            ridge: false,
        }
    }
}

/// The fixed six-letter grade scale: A=1.0, B=0.8, C=0.6, D=0.4, E=0.2,
/// F=0.0.
pub struct GradeScale;

const GRADE_LETTERS: [char; 6] = ['F', 'E', 'D', 'C', 'B', 'A'];
const GRADE_POINTS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

impl GradeScale {
    /// Numeric grade point of a letter, if the letter is on the scale.
    pub fn numeric(letter: char) -> Option<f64> {
        GRADE_LETTERS
            .iter()
            .position(|l| *l == letter)
            .map(|idx| GRADE_POINTS[idx])
    }

    /// Closest letter grade for a numeric value in [0, 1]; halfway points
    /// round toward the better grade.
    pub fn letter(value: f64) -> char {
        GRADE_LETTERS[Self::index(value)]
    }

    /// Snap a numeric value in [0, 1] to the closest grade point.
    pub fn quantize(value: f64) -> f64 {
        GRADE_POINTS[Self::index(value)]
    }

    fn index(value: f64) -> usize {
        ((value * 5.0).round().clamp(0.0, 5.0)) as usize
    }
}

/// Draw from a Gaussian, retrying until the sample lands in [0, 1].
fn truncated_gaussian(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> Result<f64> {
    let normal = Normal::new(mean, sd)
        .map_err(|e| Error::Argument(format!("bad gaussian parameters: {e}")))?;
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return Ok(v);
        }
    }
    Err(Error::Argument(format!(
        "gaussian with mean {mean} and sd {sd} never hit [0, 1]"
    )))
}

/// Generate a synthetic cohort. Candidates carry seven features in [0, 1]
/// and a binary group label ("m"/"f") mirrored by the gender indicator
/// column; grade-point averages are quantized to the [`GradeScale`], with
/// the second group's pre-quantization mean lowered by `grade_shift`.
pub fn generate_population(cfg: &GeneratorConfig, seed: u64) -> Result<Population> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut ids = Vec::with_capacity(cfg.n);
    let mut groups = Vec::with_capacity(cfg.n);
    let mut features = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        ids.push(format!("a{i:05}"));
        let second_group = rng.gen_bool(0.5);
        groups.push(if second_group { "f".to_string() } else { "m".to_string() });
        let mut row = vec![0.0; FEATURE_COUNT];
        for (col, slot) in row.iter_mut().enumerate() {
            if col == 1 {
                *slot = if second_group { 1.0 } else { 0.0 };
                continue;
            }
            let mut mean = FEATURE_MEANS[col];
            if col == GPA_COLUMN && second_group {
                mean -= cfg.grade_shift;
            }
            *slot = truncated_gaussian(&mut rng, mean, FEATURE_SDS[col])?;
        }
        row[GPA_COLUMN] = GradeScale::quantize(row[GPA_COLUMN]);
        features.push(row);
    }
    Population::new(ids, groups, features)
}

/// Realized outcomes of the hidden model: the affine prediction plus
/// Gaussian noise, clipped to [0, 1].
pub fn generate_true_outcomes(
    cfg: &GeneratorConfig,
    pop: &Population,
    seed: u64,
) -> Result<OutcomeMatrix> {
    if pop.dim() != FEATURE_COUNT {
        return Err(Error::Dimension(format!(
            "outcome process expects {FEATURE_COUNT} features, population has {}",
            pop.dim()
        )));
    }
    let model = cfg.hidden_model();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let noise = Normal::new(0.0, cfg.outcome_noise_sd)
        .map_err(|e| Error::Argument(format!("bad outcome noise sd: {e}")))?;
    let mut rows = Vec::with_capacity(pop.len());
    for i in 0..pop.len() {
        let x = pop.feature_row(i);
        let row = model
            .coeffs
            .iter()
            .zip(&model.intercepts)
            .map(|(w, b)| {
                let mut v = *b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                if cfg.outcome_noise_sd > 0.0 {
                    v += noise.sample(&mut rng);
                }
                v.clamp(0.0, 1.0)
            })
            .collect();
        rows.push(row);
    }
    OutcomeMatrix::from_rows(rows)
}

/// Ordinary least squares with an intercept for every outcome column,
/// optionally restricted to the given rows. Full-rank designs are solved by
/// singular value decomposition; rank-deficient ones fall back to a lightly
/// ridged solve and flag the result. Needs strictly more rows than
/// parameters.
pub fn fit_outcome_model(
    pop: &Population,
    outcomes: &OutcomeMatrix,
    rows: Option<&[usize]>,
) -> Result<LinearOutcomeModel> {
    if outcomes.rows() != pop.len() {
        return Err(Error::Dimension(format!(
            "{} outcome rows for {} candidates",
            outcomes.rows(),
            pop.len()
        )));
    }
    let index: Vec<usize> = match rows {
        Some(r) => {
            if let Some(bad) = r.iter().find(|i| **i >= pop.len()) {
                return Err(Error::Argument(format!(
                    "fit row {bad} out of range for {} candidates",
                    pop.len()
                )));
            }
            r.to_vec()
        }
        None => (0..pop.len()).collect(),
    };
    let d = pop.dim();
    let m = outcomes.cols();
    if index.len() < d + 1 {
        return Err(Error::Argument(format!(
            "least squares needs more than {} rows, got {}",
            d,
            index.len()
        )));
    }

    let design = DMatrix::from_fn(index.len(), d + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            pop.feature_row(index[r])[c - 1]
        }
    });
    let targets = DMatrix::from_fn(index.len(), m, |r, c| outcomes.get(index[r], c));

    let svd = design.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = 1e-9 * sigma_max.max(1.0);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();

    let (solution, ridge) = if rank == d + 1 {
        let sol = svd
            .solve(&targets, eps)
            .map_err(|e| Error::Model(format!("least-squares solve failed: {e}")))?;
        (sol, false)
    } else {
        // Rank-deficient design: ridge-regularized normal equations.
        let gram = design.transpose() * &design + DMatrix::identity(d + 1, d + 1) * 1e-8;
        let rhs = design.transpose() * &targets;
        let sol = gram
            .cholesky()
            .ok_or_else(|| Error::Model("ridge normal equations not positive definite".into()))?
            .solve(&rhs);
        (sol, true)
    };

    let intercepts = (0..m).map(|j| solution[(0, j)]).collect();
    let coeffs = (0..m)
        .map(|j| (0..d).map(|k| solution[(k + 1, j)]).collect())
        .collect();
    Ok(LinearOutcomeModel { coeffs, intercepts, ridge })
}

/// Replay the legacy admission rule: a fixed logistic score over the seven
/// features plus seeded Gaussian score noise, keeping the top `k`. Returns
/// the admitted set together with every candidate's score.
pub fn historical_admission(
    pop: &Population,
    k: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<(Selection, Vec<f64>)> {
    if pop.dim() != FEATURE_COUNT {
        return Err(Error::Dimension(format!(
            "historical scores expect {FEATURE_COUNT} features, population has {}",
            pop.dim()
        )));
    }
    if k > pop.len() {
        return Err(Error::Argument(format!(
            "cannot admit {k} of {} candidates",
            pop.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::Argument(format!("bad admission noise sd: {e}")))?;
    let scores: Vec<f64> = (0..pop.len())
        .map(|i| {
            let x = pop.feature_row(i);
            let mut z = -HISTORICAL_BIAS;
            for (w, v) in HISTORICAL_WEIGHTS.iter().zip(x) {
                z += w * v;
            }
            if noise_sd > 0.0 {
                z += noise.sample(&mut rng);
            }
            sigmoid(z)
        })
        .collect();
    let admitted = historical_topk(&scores, k)?;
    Ok((admitted, scores))
}
