//! Per-layer distribution analysis: which family fits the weight
//! magnitudes, the analytic threshold each family implies, and how much the
//! selected threshold improves on assuming a Gaussian.

use anyhow::{Context, Result};
use serde::Serialize;

use fgq::distfit::{
    analytic_delta_with, compare_fits, estimate_with, theoretical_g_exponential, DistFit,
};
use fgq::ternary::{objective_at_threshold, solve_symmetric_brute, solve_with_threshold};
use fgq::{Family, FitOptions, GaussianRule, WeightTensor};

use crate::config::RunConfig;
use crate::{csv_line, load_weights};

#[derive(Debug, Clone, Serialize)]
pub struct FamilyFit {
    pub ks_stat: f64,
    /// sigma (Gaussian), mean |W| (exponential) or max |W| (uniform).
    pub scale: f64,
    pub delta: f64,
    /// Whole-layer `||W - alpha W_hat||^2` at `delta` with the optimal alpha.
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerAnalysis {
    pub index: usize,
    pub name: String,
    pub dims: [usize; 4],
    pub n: usize,
    pub selected: Family,
    pub gaussian: FamilyFit,
    pub exponential: FamilyFit,
    pub uniform: FamilyFit,
    pub selected_delta: f64,
    pub selected_error: f64,
    pub brute_delta: f64,
    pub brute_error: f64,
    pub weight_norm_sq: f64,
    /// `(sum kept |W|)^2 / kept` at the exponential threshold.
    pub empirical_g_exponential: f64,
    /// Closed-form expectation of the same quantity under the exponential fit.
    pub theoretical_g_exponential: f64,
    /// `100 * (error at Gaussian delta - error at selected delta) / error at Gaussian delta`.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub command: &'static str,
    pub seed: u64,
    pub prune_fraction: f64,
    pub gaussian_rule: crate::config::GaussianRuleArg,
    pub layers: Vec<LayerAnalysis>,
}

fn family_fit(w: &[f64], fit: &DistFit<f64>, rule: GaussianRule) -> Result<FamilyFit> {
    let delta = analytic_delta_with(fit, rule)?;
    Ok(FamilyFit {
        ks_stat: fit.ks_stat,
        scale: fit.scale(),
        delta,
        error: solve_with_threshold(w, delta)?.error,
    })
}

pub fn analyze_tensor(
    index: usize,
    name: &str,
    w: &WeightTensor<f64>,
    fit_opts: &FitOptions,
    rule: GaussianRule,
) -> Result<LayerAnalysis> {
    let data = w.data();
    let cmp = compare_fits(data, fit_opts)?;
    let uniform_fit = estimate_with(data, Family::Uniform, fit_opts)?;
    let gaussian = family_fit(data, &cmp.gaussian, rule)?;
    let exponential = family_fit(data, &cmp.exponential, rule)?;
    let uniform = family_fit(data, &uniform_fit, rule)?;
    let (selected_delta, selected_error) = match cmp.selected {
        Family::Exponential => (exponential.delta, exponential.error),
        _ => (gaussian.delta, gaussian.error),
    };
    let brute = solve_symmetric_brute(data)?;
    let improvement_pct = if gaussian.error > 0.0 {
        100.0 * (gaussian.error - selected_error) / gaussian.error
    } else {
        0.0
    };
    Ok(LayerAnalysis {
        index,
        name: name.to_string(),
        dims: w.dims().as_array(),
        n: data.len(),
        selected: cmp.selected,
        selected_delta,
        selected_error,
        brute_delta: brute.delta_pos,
        brute_error: brute.error,
        weight_norm_sq: data.iter().map(|x| x * x).sum(),
        empirical_g_exponential: objective_at_threshold(data, exponential.delta),
        theoretical_g_exponential: theoretical_g_exponential(
            exponential.delta,
            cmp.exponential.mean_abs,
            data.len(),
        ),
        improvement_pct,
        gaussian,
        exponential,
        uniform,
    })
}

pub fn analyze_layers(
    layers: &[(String, WeightTensor<f64>)],
    cfg: &RunConfig,
) -> Result<AnalyzeReport> {
    let fit_opts = FitOptions {
        prune_fraction: cfg.prune_fraction,
    };
    let analyses = layers
        .iter()
        .enumerate()
        .map(|(i, (name, w))| {
            analyze_tensor(i, name, w, &fit_opts, cfg.gaussian_rule.into())
                .with_context(|| format!("layer {i} ({name})"))
        })
        .collect::<Result<_>>()?;
    Ok(AnalyzeReport {
        command: "analyze",
        seed: cfg.seed,
        prune_fraction: cfg.prune_fraction,
        gaussian_rule: cfg.gaussian_rule,
        layers: analyses,
    })
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeReport> {
    analyze_layers(&load_weights(&cfg.weights)?, cfg)
}

impl AnalyzeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,name,selected,ks_gaussian,ks_exponential,delta_gaussian,delta_exponential,\
             error_gaussian,error_exponential,brute_error,improvement_pct\n",
        );
        for l in &self.layers {
            out += &csv_line(&[
                l.index.to_string(),
                l.name.clone(),
                serde_json::to_value(l.selected).unwrap().as_str().unwrap().to_string(),
                l.gaussian.ks_stat.to_string(),
                l.exponential.ks_stat.to_string(),
                l.gaussian.delta.to_string(),
                l.exponential.delta.to_string(),
                l.gaussian.error.to_string(),
                l.exponential.error.to_string(),
                l.brute_error.to_string(),
                l.improvement_pct.to_string(),
            ]);
        }
        out
    }
}
