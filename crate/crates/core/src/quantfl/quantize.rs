use serde::{Deserialize, Serialize};

use super::model::DenseModel;
use crate::error::{Error, Result};

/// Ternarization threshold as a fraction of the layer's mean magnitude.
pub const TERNARY_THRESHOLD: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codebook {
    /// Codes in `{-1, 0, 1}`.
    Ternary,
    /// Codes in `{0, 1}`, dequantized to `{-a, +a}`.
    Binary,
}

impl Codebook {
    pub fn min_code(self) -> i64 {
        match self {
            Codebook::Ternary => -1,
            Codebook::Binary => 0,
        }
    }

    pub fn max_code(self) -> i64 {
        1
    }

    pub fn codes(self) -> &'static [i64] {
        match self {
            Codebook::Ternary => &[-1, 0, 1],
            Codebook::Binary => &[0, 1],
        }
    }

    pub fn contains(self, code: i64) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Codebook::Ternary => "ternary",
            Codebook::Binary => "binary",
        }
    }

    pub fn check(self, codes: &[i64]) -> Result<()> {
        match codes.iter().find(|&&c| !self.contains(c)) {
            Some(&code) => Err(Error::CodeOutsideCodebook {
                code,
                codebook: self.name(),
            }),
            None => Ok(()),
        }
    }

    /// Real weight for a (possibly averaged) code.
    pub fn dequantize(self, code: f64, scale: f64) -> f64 {
        match self {
            Codebook::Ternary => scale * code,
            Codebook::Binary => scale * (2.0 * code - 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub codes: Vec<i64>,
    pub scale: f64,
}

/// Integer codes plus one positive scale per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedModel {
    pub codebook: Codebook,
    pub layers: Vec<QuantizedLayer>,
}

impl QuantizedModel {
    pub fn codes(&self) -> Vec<i64> {
        self.layers
            .iter()
            .flat_map(|l| l.codes.iter().copied())
            .collect()
    }

    pub fn scales(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.scale).collect()
    }
}

fn layer_values(model: &DenseModel) -> Vec<Vec<f64>> {
    model
        .layers
        .iter()
        .map(|l| l.weights.iter().chain(&l.bias).copied().collect())
        .collect()
}

fn mean_abs(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
    }
}

/// Per layer: threshold `0.7 * mean|w|`, codes `sign(w)` above it, scale the
/// mean magnitude of the surviving weights.
pub fn quantize_ternary(model: &DenseModel) -> QuantizedModel {
    let layers = layer_values(model)
        .into_iter()
        .map(|values| {
            let threshold = TERNARY_THRESHOLD * mean_abs(&values);
            let codes: Vec<i64> = values
                .iter()
                .map(|&w| {
                    if w.abs() > threshold {
                        w.signum() as i64
                    } else {
                        0
                    }
                })
                .collect();
            let kept: Vec<f64> = values
                .iter()
                .zip(&codes)
                .filter(|(_, &c)| c != 0)
                .map(|(&w, _)| w)
                .collect();
            QuantizedLayer {
                codes,
                scale: mean_abs(&kept),
            }
        })
        .collect();
    QuantizedModel {
        codebook: Codebook::Ternary,
        layers,
    }
}

/// Per layer: code 1 for non-negative weights, 0 otherwise; scale `mean|w|`.
pub fn quantize_binary(model: &DenseModel) -> QuantizedModel {
    let layers = layer_values(model)
        .into_iter()
        .map(|values| QuantizedLayer {
            codes: values.iter().map(|&w| i64::from(w >= 0.0)).collect(),
            scale: mean_abs(&values),
        })
        .collect();
    QuantizedModel {
        codebook: Codebook::Binary,
        layers,
    }
}

pub fn quantize(model: &DenseModel, codebook: Codebook) -> QuantizedModel {
    match codebook {
        Codebook::Ternary => quantize_ternary(model),
        Codebook::Binary => quantize_binary(model),
    }
}

/// Rebuilds real weights on the shapes of `template`.
pub fn dequantize(quantized: &QuantizedModel, template: &DenseModel) -> Result<DenseModel> {
    let codes: Vec<f64> = quantized.codes().into_iter().map(|c| c as f64).collect();
    apply_global(template, &codes, &quantized.scales(), quantized.codebook)
}

/// Replaces the weights of `model` with the dequantized aggregate.
pub fn apply_global(
    model: &DenseModel,
    mean_codes: &[f64],
    scales: &[f64],
    codebook: Codebook,
) -> Result<DenseModel> {
    if scales.len() != model.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scales for {} layers",
            scales.len(),
            model.layers.len()
        )));
    }
    if mean_codes.len() != model.parameter_count() {
        return Err(Error::LengthMismatch {
            expected: model.parameter_count(),
            got: mean_codes.len(),
        });
    }
    let mut flat = Vec::with_capacity(mean_codes.len());
    for ((offset, len), &scale) in model.layer_spans().into_iter().zip(scales) {
        flat.extend(
            mean_codes[offset..offset + len]
                .iter()
                .map(|&c| codebook.dequantize(c, scale)),
        );
    }
    let mut out = model.clone();
    out.set_flat(&flat)?;
    Ok(out)
}
