//! The user's forward pass and the single-process references it is tested
//! against.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::MpiError;
use crate::matrix::FloatMatrix;
use crate::quantizer::{delta_exact, dequantize, quantization_error_bound, quantize, QuantizedMatrix};
use crate::tensorio::{
    read_json, read_tensors, Activation, LoraManifest, LoraWeights, ModelConfig, Tensor, MODEL_CONFIG_FILE, MODEL_TENSORS_FILE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Local,
    Remote(u32),
}

/// Base model with weights resolved per slot, in forward order.
pub struct BaseModel {
    pub config: ModelConfig,
    weights: Vec<FloatMatrix>,
}

impl BaseModel {
    pub fn new(config: ModelConfig, tensors: &BTreeMap<String, Tensor>) -> Result<Self, MpiError> {
        config.validate(tensors)?;
        let weights = config
            .slots()
            .map(|(_, s)| tensors[&s.weight].to_matrix())
            .collect::<Result<_, _>>()?;
        Ok(BaseModel { config, weights })
    }

    /// Reads `model.json` and `model.zklt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, MpiError> {
        let config: ModelConfig = read_json(&dir.join(MODEL_CONFIG_FILE))?;
        let tensors = read_tensors(&dir.join(MODEL_TENSORS_FILE))?;
        Self::new(config, &tensors)
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim().unwrap_or(0) as usize
    }

    /// One route per slot in forward order.
    pub fn routes(&self, manifest: &LoraManifest) -> Result<Vec<Route>, MpiError> {
        manifest.validate_against(&self.config)?;
        let by_target: HashMap<&str, u32> = manifest.modules.iter().map(|m| (m.target.as_str(), m.module_id)).collect();
        Ok(self
            .config
            .slots()
            .map(|(path, _)| by_target.get(path.as_str()).map_or(Route::Local, |id| Route::Remote(*id)))
            .collect())
    }

    /// Runs the pass, calling `remote(module_id, x)` for the delta of every
    /// adapted slot. The activation is applied between layers, not after the last.
    pub fn forward(
        &self,
        routes: &[Route],
        x: &FloatMatrix,
        mut remote: impl FnMut(u32, &FloatMatrix) -> Result<FloatMatrix, MpiError>,
    ) -> Result<FloatMatrix, MpiError> {
        if x.rows != self.input_dim() || x.cols == 0 {
            return Err(MpiError::Config(format!("input is {}x{}, model expects {} rows", x.rows, x.cols, self.input_dim())));
        }
        let mut cur = x.clone();
        let mut slot = 0;
        let layers = self.config.layers.len();
        for (li, layer) in self.config.layers.iter().enumerate() {
            for _ in &layer.slots {
                let mut h = self.weights[slot].matmul(&cur);
                if let Route::Remote(id) = routes[slot] {
                    let delta = remote(id, &cur)?;
                    for (o, d) in h.data.iter_mut().zip(&delta.data) {
                        *o += *d;
                    }
                }
                cur = h;
                slot += 1;
            }
            if li + 1 < layers && self.config.activation == Activation::Relu {
                cur.relu_in_place();
            }
        }
        Ok(cur)
    }
}

/// The same quantized pipeline the distributed run performs, in one process.
/// Outputs and deltas must match the distributed run bit for bit.
pub fn monolithic_quantized(
    base: &BaseModel,
    manifest: &LoraManifest,
    weights: &LoraWeights,
    x: &FloatMatrix,
) -> Result<(FloatMatrix, BTreeMap<u32, QuantizedMatrix>), MpiError> {
    let routes = base.routes(manifest)?;
    let mut deltas = BTreeMap::new();
    let out = base.forward(&routes, x, |id, xin| {
        let m = &manifest.modules[id as usize];
        let pair = &weights.modules[id as usize];
        let f = m.scale_bits;
        let delta_q = delta_exact(&quantize(&pair.a, f)?, &quantize(&pair.b, f)?, &quantize(xin, f)?)?;
        let delta = dequantize(&delta_q, f);
        deltas.insert(id, delta_q);
        Ok(delta)
    })?;
    Ok((out, deltas))
}

/// Float reference output (f64 throughout) with an entrywise bound on how far
/// the quantized pipeline may deviate from it.
#[derive(Clone, Debug)]
pub struct ReferenceRun {
    pub rows: usize,
    pub cols: usize,
    pub output: Vec<f64>,
    pub error_bound: f64,
}

impl ReferenceRun {
    /// Largest entrywise deviation of `h` from the reference.
    pub fn max_deviation(&self, h: &FloatMatrix) -> f64 {
        assert_eq!((h.rows, h.cols), (self.rows, self.cols));
        self.output.iter().zip(&h.data).map(|(r, v)| (r - *v as f64).abs()).fold(0.0, f64::max)
    }
}

fn mm(a: &FloatMatrix, x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.rows * cols];
    for i in 0..a.rows {
        let orow = &mut out[i * cols..(i + 1) * cols];
        for k in 0..a.cols {
            let w = a.data[i * a.cols + k] as f64;
            for (o, xv) in orow.iter_mut().zip(&x[k * cols..(k + 1) * cols]) {
                *o += w * xv;
            }
        }
    }
    out
}

/// Computes `h = W·x + B·(A·x)` per slot in f64 and propagates the bound
/// layer by layer. For a slot with input error `e`:
///
/// ```text
/// e' = (‖W‖ + ‖B‖·‖A‖)·e + q(maxA, maxB, max|x| + e) + rounding
/// ```
///
/// where `q` is [`quantization_error_bound`], norms are induced infinity
/// norms, and rounding covers the f32 conversions of the distributed path.
/// ReLU is 1-Lipschitz and leaves `e` unchanged.
pub fn monolithic_reference(base: &BaseModel, manifest: &LoraManifest, weights: &LoraWeights, x: &FloatMatrix) -> Result<ReferenceRun, MpiError> {
    let routes = base.routes(manifest)?;
    if x.rows != base.input_dim() {
        return Err(MpiError::Config("input dimension mismatch".into()));
    }
    let cols = x.cols;
    let mut cur: Vec<f64> = x.data.iter().map(|v| *v as f64).collect();
    let mut err = 0.0f64;
    let f32_unit = (-23f64).exp2();
    let mut slot = 0;
    let layers = base.config.layers.len();
    for (li, layer) in base.config.layers.iter().enumerate() {
        for _ in &layer.slots {
            let w = &base.weights[slot];
            let max_x = cur.iter().fold(0.0f64, |m, v| m.max(v.abs())) + err;
            let w_norm = w.row_sum_norm();
            let mut h = mm(w, &cur, cols);
            let mut next_err = w_norm * err + f32_unit * w_norm * max_x;
            if let Route::Remote(id) = routes[slot] {
                let m = &manifest.modules[id as usize];
                let pair = &weights.modules[id as usize];
                let ax = mm(&pair.a, &cur, cols);
                let bax = mm(&pair.b, &ax, cols);
                for (o, d) in h.iter_mut().zip(&bax) {
                    *o += d;
                }
                let ba_norm = pair.b.row_sum_norm() * pair.a.row_sum_norm();
                let q = quantization_error_bound(
                    pair.a.max_abs() as f64,
                    pair.b.max_abs() as f64,
                    max_x,
                    m.n as usize,
                    m.r as usize,
                    m.scale_bits,
                );
                let magnitude = (w_norm + ba_norm) * max_x + q;
                next_err += ba_norm * err + q + 2.0 * f32_unit * magnitude;
            }
            cur = h;
            err = next_err;
            slot += 1;
        }
        if li + 1 < layers && base.config.activation == Activation::Relu {
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    let rows = cur.len() / cols.max(1);
    Ok(ReferenceRun { rows, cols, output: cur, error_bound: err })
}
