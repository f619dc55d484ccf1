//! Calendar and seasonal-average features over daily sales records.

use crate::io::SalesRecord;
use chrono::{Datelike, NaiveDate};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Length of the per-day model input vector:
/// (sales, month/12, day/31, week/53, daily_avg, monthly_avg), normalized.
pub const INPUT_SIZE: usize = 6;

/// One engineered row: the raw record plus calendar fields and seasonal means.
/// `week` is the ISO-8601 week number, so early-January dates may carry week
/// 52/53 of the previous ISO year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub date: NaiveDate,
    pub store: u32,
    pub item: u32,
    pub sales: u32,
    pub month: u32,
    pub week: u32,
    pub day: u32,
    pub daily_avg_sales: f64,
    pub monthly_avg_sales: f64,
}

fn weekday_index(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Engineer features for a whole dataset. `daily_avg_sales` is the mean over
/// records sharing (store, item, day-of-week); `monthly_avg_sales` over
/// records sharing (store, item, month) — both computed on the given records.
pub fn engineer_features(records: &[SalesRecord]) -> Vec<FeatureRow> {
    let mut daily: BTreeMap<(u32, u32, usize), (f64, u64)> = BTreeMap::new();
    let mut monthly: BTreeMap<(u32, u32, u32), (f64, u64)> = BTreeMap::new();
    for r in records {
        let d = daily.entry((r.store, r.item, weekday_index(r.date))).or_insert((0.0, 0));
        d.0 += r.sales as f64;
        d.1 += 1;
        let m = monthly.entry((r.store, r.item, r.date.month())).or_insert((0.0, 0));
        m.0 += r.sales as f64;
        m.1 += 1;
    }

    records
        .iter()
        .map(|r| {
            let (ds, dn) = daily[&(r.store, r.item, weekday_index(r.date))];
            let (ms, mn) = monthly[&(r.store, r.item, r.date.month())];
            FeatureRow {
                date: r.date,
                store: r.store,
                item: r.item,
                sales: r.sales,
                month: r.date.month(),
                week: r.date.iso_week().week(),
                day: r.date.day(),
                daily_avg_sales: ds / dn as f64,
                monthly_avg_sales: ms / mn as f64,
            }
        })
        .collect()
}

/// Seasonal means of one (store, item) series, built from its training split
/// and joined onto later rows so validation data never leaks into features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalProfile {
    /// Mean sales per weekday, Monday first.
    pub weekday_means: [f64; 7],
    /// Mean sales per calendar month, January first.
    pub month_means: [f64; 12],
    /// Overall mean, the fallback for unseen weekday/month groups.
    pub overall_mean: f64,
}

impl SeasonalProfile {
    pub fn from_series(records: &[SalesRecord]) -> Self {
        let mut weekday = [(0.0f64, 0u64); 7];
        let mut month = [(0.0f64, 0u64); 12];
        let mut total = (0.0f64, 0u64);
        for r in records {
            let w = &mut weekday[weekday_index(r.date)];
            w.0 += r.sales as f64;
            w.1 += 1;
            let m = &mut month[(r.date.month() - 1) as usize];
            m.0 += r.sales as f64;
            m.1 += 1;
            total.0 += r.sales as f64;
            total.1 += 1;
        }
        let overall_mean = if total.1 > 0 { total.0 / total.1 as f64 } else { 0.0 };
        let mean_or = |(sum, n): (f64, u64)| if n > 0 { sum / n as f64 } else { overall_mean };
        SeasonalProfile {
            weekday_means: weekday.map(mean_or),
            month_means: month.map(mean_or),
            overall_mean,
        }
    }

    pub fn daily_avg(&self, date: NaiveDate) -> f64 {
        self.weekday_means[weekday_index(date)]
    }

    pub fn monthly_avg(&self, date: NaiveDate) -> f64 {
        self.month_means[(date.month() - 1) as usize]
    }
}

/// Per-column z-score constants for the sales-scale features, computed on the
/// training split. A zero standard deviation falls back to 1 so constant
/// columns normalize to zero instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub sales_mean: f64,
    pub sales_std: f64,
    pub daily_mean: f64,
    pub daily_std: f64,
    pub monthly_mean: f64,
    pub monthly_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 1.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl FeatureNorm {
    pub fn from_training(records: &[SalesRecord], profile: &SeasonalProfile) -> Self {
        let (sales_mean, sales_std) = mean_std(records.iter().map(|r| r.sales as f64));
        let (daily_mean, daily_std) = mean_std(records.iter().map(|r| profile.daily_avg(r.date)));
        let (monthly_mean, monthly_std) =
            mean_std(records.iter().map(|r| profile.monthly_avg(r.date)));
        FeatureNorm { sales_mean, sales_std, daily_mean, daily_std, monthly_mean, monthly_std }
    }

    /// Model input for one day; `sales_value` is the observed value or, when
    /// rolling forward, a fed-back prediction.
    pub fn input_vector(&self, date: NaiveDate, sales_value: f64, profile: &SeasonalProfile) -> DVector<f64> {
        DVector::from_vec(vec![
            (sales_value - self.sales_mean) / self.sales_std,
            date.month() as f64 / 12.0,
            date.day() as f64 / 31.0,
            date.iso_week().week() as f64 / 53.0,
            (profile.daily_avg(date) - self.daily_mean) / self.daily_std,
            (profile.monthly_avg(date) - self.monthly_mean) / self.monthly_std,
        ])
    }

    pub fn normalize_target(&self, sales: f64) -> f64 {
        (sales - self.sales_mean) / self.sales_std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.sales_std + self.sales_mean
    }
}

/// Untransformed feature columns (sales, month, day, week, daily_avg,
/// monthly_avg) for the closed-form linear model, which needs no gate-friendly
/// scaling and keeps the ridge jitter negligible against the raw data scale.
pub fn raw_input_vector(date: NaiveDate, sales_value: f64, profile: &SeasonalProfile) -> DVector<f64> {
    DVector::from_vec(vec![
        sales_value,
        date.month() as f64,
        date.day() as f64,
        date.iso_week().week() as f64,
        profile.daily_avg(date),
        profile.monthly_avg(date),
    ])
}
