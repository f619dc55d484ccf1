//! Seeded deterministic training over one (store, item) series and rolling
//! prediction from a trained model.
//!
//! The series is split chronologically: the final `val_days` are validation,
//! everything before is training. Seasonal means and normalization constants
//! come from the training split only and are carried inside the model, so
//! validation and forecasting never leak future data into features.

use super::cells::{forward_window, loss_and_gradients, CellKind, CellParams, RecurrentParams};
use super::features::{raw_input_vector, FeatureNorm, SeasonalProfile, INPUT_SIZE};
use super::linear::fit_linear;
use super::ForecastError;
use crate::io::{ForecastPoint, SalesRecord};
use chrono::Days;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Lstm,
    Gru,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelKind::Linear),
            "lstm" => Ok(ModelKind::Lstm),
            "gru" => Ok(ModelKind::Gru),
            other => Err(format!("unknown model kind `{other}` (linear, lstm, gru)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Linear => write!(f, "linear"),
            ModelKind::Lstm => write!(f, "lstm"),
            ModelKind::Gru => write!(f, "gru"),
        }
    }
}

/// Training hyperparameters; serializes as a flat JSON object with these
/// defaults for absent fields. Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window_length: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub momentum_decay: f64,
    pub variance_decay: f64,
    pub epsilon: f64,
    pub val_days: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window_length: 28,
            epochs: 60,
            learning_rate: 1e-3,
            seed: 42,
            hidden_size: 8,
            batch_size: 1,
            momentum_decay: 0.9,
            variance_decay: 0.999,
            epsilon: 1e-8,
            val_days: 92,
        }
    }
}

/// Per-epoch mean squared error on normalized targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl LossHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            writeln!(out, "{},{},{}", i + 1, t, v).expect("string write");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Linear { weights: DVector<f64>, intercept: f64 },
    Recurrent(Box<RecurrentParams>),
}

/// A trained forecaster plus everything needed to rebuild its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub store: u32,
    pub item: u32,
    pub window_length: usize,
    pub norm: FeatureNorm,
    pub profile: SeasonalProfile,
    pub params: ModelParams,
}

struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    momentum: Vec<f64>,
    variance: Vec<f64>,
    steps: u64,
}

impl Adam {
    fn new(cfg: &TrainConfig, param_count: usize) -> Self {
        Adam {
            learning_rate: cfg.learning_rate,
            beta1: cfg.momentum_decay,
            beta2: cfg.variance_decay,
            epsilon: cfg.epsilon,
            momentum: vec![0.0; param_count],
            variance: vec![0.0; param_count],
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut RecurrentParams, grads: &RecurrentParams) {
        self.steps += 1;
        let mut flat = Vec::with_capacity(self.momentum.len());
        grads.visit(&mut |g| flat.push(g));
        let bias1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bias2 = 1.0 - self.beta2.powi(self.steps as i32);
        let mut k = 0;
        params.visit_mut(&mut |p| {
            let g = flat[k];
            self.momentum[k] = self.beta1 * self.momentum[k] + (1.0 - self.beta1) * g;
            self.variance[k] = self.beta2 * self.variance[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.momentum[k] / bias1;
            let v_hat = self.variance[k] / bias2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            k += 1;
        });
    }
}

/// Sorted copy of the series; rejects empty or mixed (store, item) input.
fn prepare_series(series: &[SalesRecord]) -> Result<Vec<SalesRecord>, ForecastError> {
    if series.is_empty() {
        return Err(ForecastError::EmptySeries);
    }
    let (store, item) = (series[0].store, series[0].item);
    if series.iter().any(|r| r.store != store || r.item != item) {
        return Err(ForecastError::MixedSeries);
    }
    let mut sorted = series.to_vec();
    sorted.sort_by_key(|r| r.date);
    Ok(sorted)
}

fn build_inputs(
    records: &[SalesRecord],
    norm: &FeatureNorm,
    profile: &SeasonalProfile,
) -> Vec<DVector<f64>> {
    records
        .iter()
        .map(|r| norm.input_vector(r.date, r.sales as f64, profile))
        .collect()
}

/// Train one model on one series.
///
/// Identical seed, config, and data give a bit-identical loss history and
/// model. The linear model is fit in closed form, so its history has a single
/// entry; recurrent models record one entry per epoch.
pub fn train(
    series: &[SalesRecord],
    kind: ModelKind,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, LossHistory), ForecastError> {
    let records = prepare_series(series)?;
    let n = records.len();
    let window = match kind {
        ModelKind::Linear => 1,
        _ => cfg.window_length,
    };
    // At least one training window plus its target before the validation tail.
    let needed = cfg.val_days + window + 1;
    if n < needed {
        return Err(ForecastError::InsufficientData { needed, available: n });
    }
    let train_len = n - cfg.val_days;

    let profile = SeasonalProfile::from_series(&records[..train_len]);
    let norm = FeatureNorm::from_training(&records[..train_len], &profile);

    // A window ending at day t predicts day t + 1.
    let train_ends: Vec<usize> = (window - 1..train_len - 1).collect();
    let val_ends: Vec<usize> = (train_len - 1..n - 1).collect();

    let (params, history) = match kind {
        ModelKind::Linear => {
            // The closed-form fit works on the raw feature columns in raw
            // sales units; the loss history is reported on normalized targets
            // so linear and recurrent histories stay comparable.
            let inputs: Vec<DVector<f64>> = records
                .iter()
                .map(|r| raw_input_vector(r.date, r.sales as f64, &profile))
                .collect();
            let design = DMatrix::from_fn(train_ends.len(), INPUT_SIZE, |r, c| {
                inputs[train_ends[r]][c]
            });
            let y = DVector::from_fn(train_ends.len(), |r, _| {
                records[train_ends[r] + 1].sales as f64
            });
            let (weights, intercept) = fit_linear(&design, &y)?;

            let mse = |ends: &[usize]| -> f64 {
                let total: f64 = ends
                    .iter()
                    .map(|&t| {
                        let pred = weights.dot(&inputs[t]) + intercept;
                        let err = norm.normalize_target(pred)
                            - norm.normalize_target(records[t + 1].sales as f64);
                        err * err
                    })
                    .sum();
                total / ends.len() as f64
            };
            let history = LossHistory {
                train_loss: vec![mse(&train_ends)],
                val_loss: vec![mse(&val_ends)],
            };
            (ModelParams::Linear { weights, intercept }, history)
        }
        ModelKind::Lstm | ModelKind::Gru => {
            let inputs = build_inputs(&records, &norm, &profile);
            let targets: Vec<f64> =
                records.iter().map(|r| norm.normalize_target(r.sales as f64)).collect();
            let cell_kind = if kind == ModelKind::Gru { CellKind::Gru } else { CellKind::Lstm };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut params =
                RecurrentParams::init(cell_kind, INPUT_SIZE, cfg.hidden_size, &mut rng);
            let mut adam = Adam::new(cfg, params.param_count());

            let mut history =
                LossHistory { train_loss: Vec::with_capacity(cfg.epochs), val_loss: Vec::new() };
            let mut order = train_ends.clone();
            let batch_size = cfg.batch_size.max(1);
            for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                let mut epoch_loss = 0.0;
                for batch in order.chunks(batch_size) {
                    if let [t] = batch {
                        let slice = &inputs[t + 1 - window..=*t];
                        let (loss, grads) = loss_and_gradients(&params, slice, targets[t + 1])?;
                        adam.step(&mut params, &grads);
                        epoch_loss += loss;
                    } else {
                        let mut grads = params.zeros_like();
                        for &t in batch {
                            let slice = &inputs[t + 1 - window..=t];
                            let (loss, g) = loss_and_gradients(&params, slice, targets[t + 1])?;
                            grads.add_scaled(&g, 1.0 / batch.len() as f64);
                            epoch_loss += loss;
                        }
                        adam.step(&mut params, &grads);
                    }
                }
                history.train_loss.push(epoch_loss / order.len() as f64);

                let mut val_loss = 0.0;
                for &t in &val_ends {
                    let slice = &inputs[t + 1 - window..=t];
                    let pred = forward_window(&params, slice)?;
                    val_loss += (pred - targets[t + 1]).powi(2);
                }
                history.val_loss.push(val_loss / val_ends.len() as f64);
            }
            (ModelParams::Recurrent(Box::new(params)), history)
        }
    };

    let model = TrainedModel {
        kind,
        store: records[0].store,
        item: records[0].item,
        window_length: window,
        norm,
        profile,
        params,
    };
    Ok((model, history))
}

impl TrainedModel {
    /// Model input for one day: raw columns for the linear model, normalized
    /// columns for the recurrent ones.
    fn day_vector(&self, date: chrono::NaiveDate, sales_value: f64) -> DVector<f64> {
        match self.kind {
            ModelKind::Linear => raw_input_vector(date, sales_value, &self.profile),
            _ => self.norm.input_vector(date, sales_value, &self.profile),
        }
    }

    /// One-step prediction from a window of day vectors, in sales units.
    fn predict_from_window(&self, window: &[DVector<f64>]) -> Result<f64, ForecastError> {
        match &self.params {
            ModelParams::Linear { weights, intercept } => {
                let last = window.last().expect("window is non-empty");
                Ok(weights.dot(last) + intercept)
            }
            ModelParams::Recurrent(params) => {
                Ok(self.norm.denormalize(forward_window(params, window)?))
            }
        }
    }
}

/// Roll the model forward `horizon` days past the end of the series, feeding
/// predictions back as the sales input for later steps. Output is in sales
/// units.
pub fn predict(
    model: &TrainedModel,
    series: &[SalesRecord],
    horizon: usize,
) -> Result<Vec<ForecastPoint>, ForecastError> {
    if horizon == 0 {
        return Ok(Vec::new());
    }
    let records = prepare_series(series)?;
    if records[0].store != model.store || records[0].item != model.item {
        return Err(ForecastError::MixedSeries);
    }
    if records.len() < model.window_length {
        return Err(ForecastError::InsufficientHistory {
            needed: model.window_length,
            available: records.len(),
        });
    }

    let mut history: Vec<(chrono::NaiveDate, f64)> =
        records.iter().map(|r| (r.date, r.sales as f64)).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let start = history.len() - model.window_length;
        let window: Vec<DVector<f64>> = history[start..]
            .iter()
            .map(|&(date, value)| model.day_vector(date, value))
            .collect();
        let next_date = history
            .last()
            .expect("history is non-empty")
            .0
            .checked_add_days(Days::new(1))
            .expect("date in range");
        let predicted = model.predict_from_window(&window)?;
        out.push(ForecastPoint {
            date: next_date,
            store: model.store,
            item: model.item,
            predicted_sales: predicted,
        });
        history.push((next_date, predicted));
    }
    Ok(out)
}

/// One-step-ahead predictions over the last `eval_days` of the series using
/// true history, paired with the actual values — both in sales units.
pub fn one_step_eval(
    model: &TrainedModel,
    series: &[SalesRecord],
    eval_days: usize,
) -> Result<(Vec<f64>, Vec<f64>), ForecastError> {
    let records = prepare_series(series)?;
    if records[0].store != model.store || records[0].item != model.item {
        return Err(ForecastError::MixedSeries);
    }
    let n = records.len();
    if eval_days == 0 || n < eval_days + model.window_length {
        return Err(ForecastError::InsufficientHistory {
            needed: eval_days + model.window_length,
            available: n,
        });
    }
    let inputs: Vec<DVector<f64>> =
        records.iter().map(|r| model.day_vector(r.date, r.sales as f64)).collect();
    let mut predicted = Vec::with_capacity(eval_days);
    let mut actual = Vec::with_capacity(eval_days);
    for (target, record) in records.iter().enumerate().skip(n - eval_days) {
        let end = target - 1;
        let window = &inputs[end + 1 - model.window_length..=end];
        predicted.push(model.predict_from_window(window)?);
        actual.push(record.sales as f64);
    }
    Ok((predicted, actual))
}

#[derive(Serialize, Deserialize)]
struct NormalizationFile {
    sales_mean: f64,
    sales_std: f64,
    daily_mean: f64,
    daily_std: f64,
    monthly_mean: f64,
    monthly_std: f64,
    weekday_means: Vec<f64>,
    month_means: Vec<f64>,
    overall_mean: f64,
}

/// On-disk model schema: named weight arrays are row-major.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: ModelKind,
    store: u32,
    item: u32,
    window_length: usize,
    input_size: usize,
    hidden_size: usize,
    weights: BTreeMap<String, Vec<f64>>,
    normalization: NormalizationFile,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn gate_names(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Gru => &["update", "reset", "candidate"],
        ModelKind::Lstm => &["input", "forget", "output", "cell"],
        ModelKind::Linear => &[],
    }
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        let mut weights = BTreeMap::new();
        let hidden_size = match &self.params {
            ModelParams::Linear { weights: w, intercept } => {
                weights.insert("weights".to_string(), w.iter().copied().collect());
                weights.insert("intercept".to_string(), vec![*intercept]);
                0
            }
            ModelParams::Recurrent(p) => {
                let gates: Vec<&super::cells::GateParams> = match &p.cell {
                    CellParams::Gru(g) => vec![&g.update, &g.reset, &g.candidate],
                    CellParams::Lstm(l) => vec![&l.input, &l.forget, &l.output, &l.cell],
                };
                for (gate, name) in gates.iter().zip(gate_names(self.kind)) {
                    weights.insert(format!("w_{name}"), matrix_rows(&gate.input));
                    weights.insert(format!("u_{name}"), matrix_rows(&gate.recurrent));
                    weights.insert(format!("b_{name}"), gate.bias.iter().copied().collect());
                }
                weights
                    .insert("w_out".to_string(), p.output_weights.iter().copied().collect());
                weights.insert("b_out".to_string(), vec![p.output_bias]);
                p.hidden_size
            }
        };
        let file = ModelFile {
            kind: self.kind,
            store: self.store,
            item: self.item,
            window_length: self.window_length,
            input_size: INPUT_SIZE,
            hidden_size,
            weights,
            normalization: NormalizationFile {
                sales_mean: self.norm.sales_mean,
                sales_std: self.norm.sales_std,
                daily_mean: self.norm.daily_mean,
                daily_std: self.norm.daily_std,
                monthly_mean: self.norm.monthly_mean,
                monthly_std: self.norm.monthly_std,
                weekday_means: self.profile.weekday_means.to_vec(),
                month_means: self.profile.month_means.to_vec(),
                overall_mean: self.profile.overall_mean,
            },
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ForecastError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ForecastError::BadModelFile(e.to_string()))?;
        if file.input_size != INPUT_SIZE {
            return Err(ForecastError::BadModelFile(format!(
                "unsupported input size {}",
                file.input_size
            )));
        }
        let take = |name: &str, len: usize| -> Result<Vec<f64>, ForecastError> {
            let v = file
                .weights
                .get(name)
                .ok_or_else(|| ForecastError::BadModelFile(format!("missing array `{name}`")))?;
            if v.len() != len {
                return Err(ForecastError::BadModelFile(format!(
                    "array `{name}` has {} values, expected {len}",
                    v.len()
                )));
            }
            Ok(v.clone())
        };

        let params = match file.kind {
            ModelKind::Linear => ModelParams::Linear {
                weights: DVector::from_vec(take("weights", INPUT_SIZE)?),
                intercept: take("intercept", 1)?[0],
            },
            ModelKind::Gru | ModelKind::Lstm => {
                let h = file.hidden_size;
                if h == 0 {
                    return Err(ForecastError::BadModelFile("hidden_size is zero".into()));
                }
                let cell_kind =
                    if file.kind == ModelKind::Gru { CellKind::Gru } else { CellKind::Lstm };
                let mut params = RecurrentParams::zeros(cell_kind, INPUT_SIZE, h);
                {
                    let gates: Vec<&mut super::cells::GateParams> = match &mut params.cell {
                        CellParams::Gru(g) => vec![&mut g.update, &mut g.reset, &mut g.candidate],
                        CellParams::Lstm(l) => {
                            vec![&mut l.input, &mut l.forget, &mut l.output, &mut l.cell]
                        }
                    };
                    for (gate, name) in gates.into_iter().zip(gate_names(file.kind)) {
                        gate.input =
                            DMatrix::from_row_slice(h, INPUT_SIZE, &take(&format!("w_{name}"), h * INPUT_SIZE)?);
                        gate.recurrent =
                            DMatrix::from_row_slice(h, h, &take(&format!("u_{name}"), h * h)?);
                        gate.bias = DVector::from_vec(take(&format!("b_{name}"), h)?);
                    }
                }
                params.output_weights = DVector::from_vec(take("w_out", h)?);
                params.output_bias = take("b_out", 1)?[0];
                ModelParams::Recurrent(Box::new(params))
            }
        };

        let nf = file.normalization;
        if nf.weekday_means.len() != 7 || nf.month_means.len() != 12 {
            return Err(ForecastError::BadModelFile("seasonal mean arrays misshapen".into()));
        }
        let mut weekday_means = [0.0; 7];
        weekday_means.copy_from_slice(&nf.weekday_means);
        let mut month_means = [0.0; 12];
        month_means.copy_from_slice(&nf.month_means);

        Ok(TrainedModel {
            kind: file.kind,
            store: file.store,
            item: file.item,
            window_length: file.window_length,
            norm: FeatureNorm {
                sales_mean: nf.sales_mean,
                sales_std: nf.sales_std,
                daily_mean: nf.daily_mean,
                daily_std: nf.daily_std,
                monthly_mean: nf.monthly_mean,
                monthly_std: nf.monthly_std,
            },
            profile: SeasonalProfile { weekday_means, month_means, overall_mean: nf.overall_mean },
            params,
        })
    }
}
