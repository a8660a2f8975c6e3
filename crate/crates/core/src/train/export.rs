use std::fmt::Write as _;

use crate::device::MifParams;

use super::Checkpoint;

/// Mapping from signed weights to differential conductance pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExportConfig {
    /// Siemens per unit weight.
    pub g_scale: f64,
    /// Conductance of a device representing zero.
    pub g_min: f64,
    pub g_low: f64,
    pub g_high: f64,
}

impl ExportConfig {
    /// Device range `[1/R_off, 1/R_on]`, zero at `1/R_off`, and the largest
    /// weight magnitude mapped onto the full range.
    pub fn fit(max_abs_weight: f64, params: &MifParams) -> Self {
        let g_low = 1.0 / params.r_off1;
        let g_high = 1.0 / params.r_on1;
        let span = if max_abs_weight > 0.0 { max_abs_weight } else { 1.0 };
        Self {
            g_scale: (g_high - g_low) / span,
            g_min: g_low,
            g_low,
            g_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedLayer {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub g_plus: Vec<f64>,
    pub g_minus: Vec<f64>,
}

impl ExportedLayer {
    pub fn reconstructed(&self, g_scale: f64, k: usize) -> f64 {
        (self.g_plus[k] - self.g_minus[k]) / g_scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportReport {
    pub config: ExportConfig,
    pub layers: Vec<ExportedLayer>,
    pub max_abs_error: f64,
    /// Devices whose ideal conductance fell outside the device range.
    pub clipped: usize,
}

impl ExportReport {
    /// `layer,row,col,w,g_plus,g_minus,w_reconstructed,abs_error`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,row,col,w,g_plus,g_minus,w_reconstructed,abs_error\n");
        for l in &self.layers {
            for k in 0..l.weights.len() {
                let r = l.reconstructed(self.config.g_scale, k);
                let _ = writeln!(
                    s,
                    "{},{},{},{:e},{:e},{:e},{:e},{:e}",
                    l.name,
                    k / l.cols,
                    k % l.cols,
                    l.weights[k],
                    l.g_plus[k],
                    l.g_minus[k],
                    r,
                    (r - l.weights[k]).abs()
                );
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let devices: usize = self.layers.iter().map(|l| 2 * l.weights.len()).sum();
        format!(
            "devices={devices}\ng_scale={:e}\ng_min={:e}\nclipped={}\nmax_abs_error={:e}\n",
            self.config.g_scale, self.config.g_min, self.clipped, self.max_abs_error
        )
    }
}

/// `G+ = max(w, 0) g_scale + g_min`, `G- = max(-w, 0) g_scale + g_min`,
/// each clipped to `[g_low, g_high]`.
pub fn export_weights(ckpt: &Checkpoint, config: Option<ExportConfig>) -> ExportReport {
    let max_abs = ckpt
        .tensors
        .iter()
        .flat_map(|t| &t.data)
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let config = config.unwrap_or_else(|| ExportConfig::fit(max_abs, &ckpt.meta.model.mif));
    let mut clipped = 0;
    let mut max_abs_error = 0.0f64;
    let mut device = |w: f64| {
        let ideal = w.max(0.0) * config.g_scale + config.g_min;
        let g = ideal.clamp(config.g_low, config.g_high);
        if g != ideal {
            clipped += 1;
        }
        g
    };
    let mut layers = Vec::with_capacity(ckpt.tensors.len());
    for t in &ckpt.tensors {
        let (rows, cols) = match t.dims[..] {
            [r, c] => (r, c),
            _ => (1, t.data.len()),
        };
        let g_plus: Vec<f64> = t.data.iter().map(|&w| device(w)).collect();
        let g_minus: Vec<f64> = t.data.iter().map(|&w| device(-w)).collect();
        let layer = ExportedLayer {
            name: t.name.clone(),
            rows,
            cols,
            weights: t.data.clone(),
            g_plus,
            g_minus,
        };
        for k in 0..t.data.len() {
            max_abs_error = max_abs_error.max((layer.reconstructed(config.g_scale, k) - t.data[k]).abs());
        }
        layers.push(layer);
    }
    ExportReport {
        config,
        layers,
        max_abs_error,
        clipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ModelConfig, MsnnModel};

    fn ckpt(weights: Vec<f64>) -> Checkpoint {
        let cfg = ModelConfig::new(vec![weights.len(), 1]);
        let m = MsnnModel::from_weights(cfg, vec![weights]).unwrap();
        Checkpoint::from_model(&m, None, vec![])
    }

    #[test]
    fn zero_weight_is_two_minimum_devices() {
        let r = export_weights(&ckpt(vec![0.0, 0.5]), None);
        assert_eq!(r.layers[0].g_plus[0], r.config.g_min);
        assert_eq!(r.layers[0].g_minus[0], r.config.g_min);
        assert_eq!(r.config.g_min, 1e-5);
    }

    #[test]
    fn in_range_weights_reconstruct() {
        let r = export_weights(&ckpt(vec![0.03, -0.02, 0.1, -0.1, 0.0]), None);
        assert!(r.max_abs_error < 1e-12);
        assert_eq!(r.clipped, 0);
        assert!((r.layers[0].g_plus[2] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn clipping_shows_in_the_error() {
        let cfg = ExportConfig {
            g_scale: 1e-3,
            g_min: 1e-5,
            g_low: 1e-5,
            g_high: 1e-3,
        };
        let r = export_weights(&ckpt(vec![2.0, -0.5]), Some(cfg));
        assert_eq!(r.clipped, 1);
        assert!(r.max_abs_error > 0.5);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 8));
    }
}
