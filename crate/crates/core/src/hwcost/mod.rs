//! Area, power and latency of the spike-based crossbar design against a
//! mixed-signal design with ADC/DAC peripherals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HwError {
    #[error("invalid hardware config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HwConfig {
    pub layers: Vec<usize>,
    pub devices_per_weight: usize,
    /// Tiles are `tile_dim x tile_dim` cells.
    pub tile_dim: usize,
    /// mm^2 per tile.
    pub tile_area: f64,
    /// mm^2 per ADC.
    pub adc_area: f64,
    pub adcs_per_tile: usize,
    /// W per ADC.
    pub adc_power: f64,
    /// Hz.
    pub adc_freq: f64,
    pub v_on: f64,
    pub v_off: f64,
    /// Mean cell voltage; `None` uses `(v_on + v_off) / 2`.
    pub v_ave: Option<f64>,
    pub r_on: f64,
    pub r_off: f64,
    /// Mean cell resistance; `None` uses `(r_on + r_off) / 2`.
    pub r_ave: Option<f64>,
    /// Fraction of cells conducting at a time.
    pub activity: f64,
    pub steps: usize,
    /// s, alpha-current settling time shared by both designs.
    pub alpha_latency: f64,
    /// Input rows sharing one DAC.
    pub rows_per_dac: usize,
    /// Conversion cycles per DAC input (bits).
    pub dac_cycles: usize,
    /// Output columns sharing one ADC.
    pub cols_per_adc: usize,
}

impl Default for HwConfig {
    fn default() -> Self {
        Self {
            layers: vec![784, 100, 10],
            devices_per_weight: 2,
            tile_dim: 128,
            tile_area: 2.77e-3,
            adc_area: 3e-3,
            adcs_per_tile: 4,
            adc_power: 2e-4,
            adc_freq: 40e6,
            v_on: 0.110,
            v_off: 0.005,
            v_ave: None,
            r_on: 1e3,
            r_off: 1e5,
            r_ave: None,
            activity: 0.02,
            steps: 1000,
            alpha_latency: 0.64e-3,
            rows_per_dac: 32,
            dac_cycles: 8,
            cols_per_adc: 16,
        }
    }
}

impl HwConfig {
    pub fn validate(&self) -> Result<(), HwError> {
        let bad = |m: String| Err(HwError::Config(m));
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return bad(format!("need at least two positive layer sizes, got {:?}", self.layers));
        }
        if self.devices_per_weight == 0 || self.tile_dim == 0 {
            return bad("devices_per_weight and tile_dim must be >= 1".into());
        }
        let positive = [
            ("tile_area", self.tile_area),
            ("adc_freq", self.adc_freq),
            ("r_on", self.r_on),
            ("r_off", self.r_off),
            ("r_ave", self.r_ave()),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("{name} must be > 0, got {x}"));
            }
        }
        let non_negative = [
            ("adc_area", self.adc_area),
            ("adc_power", self.adc_power),
            ("activity", self.activity),
            ("alpha_latency", self.alpha_latency),
            ("v_ave", self.v_ave()),
        ];
        for (name, x) in non_negative {
            if !(x.is_finite() && x >= 0.0) {
                return bad(format!("{name} must be >= 0, got {x}"));
            }
        }
        if self.activity > 1.0 {
            return bad("activity must be <= 1".into());
        }
        Ok(())
    }

    pub fn v_ave(&self) -> f64 {
        self.v_ave.unwrap_or(0.5 * (self.v_on + self.v_off))
    }

    pub fn r_ave(&self) -> f64 {
        self.r_ave.unwrap_or(0.5 * (self.r_on + self.r_off))
    }
}

/// Synapses, cells and tiles of a dense network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCount {
    pub synapses: usize,
    pub cells: usize,
    pub tiles: usize,
}

pub fn count_cells(layers: &[usize], devices_per_weight: usize, tile_dim: usize) -> CellCount {
    let synapses: usize = layers.windows(2).map(|w| w[0] * w[1]).sum();
    let cells = synapses * devices_per_weight;
    CellCount {
        synapses,
        cells,
        tiles: cells.div_ceil(tile_dim * tile_dim),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub ours: f64,
    pub mixed: f64,
}

impl Comparison {
    pub fn improvement(&self) -> f64 {
        self.mixed / self.ours
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    /// W per tile.
    pub per_tile: f64,
    pub total: Comparison,
}

/// `v_ave^2 / r_ave * tile_dim^2 * activity` per tile; the mixed design adds
/// the ADCs.
pub fn power_estimate(cfg: &HwConfig, tiles: usize) -> PowerEstimate {
    let v = cfg.v_ave();
    let per_tile = v * v / cfg.r_ave() * (cfg.tile_dim * cfg.tile_dim) as f64 * cfg.activity;
    let ours = per_tile * tiles as f64;
    let mixed = ours + (tiles * cfg.adcs_per_tile) as f64 * cfg.adc_power;
    PowerEstimate {
        per_tile,
        total: Comparison { ours, mixed },
    }
}

/// mm^2.
pub fn area_estimate(cfg: &HwConfig, tiles: usize) -> Comparison {
    let ours = tiles as f64 * cfg.tile_area;
    let mixed = ours + (tiles * cfg.adcs_per_tile) as f64 * cfg.adc_area;
    Comparison { ours, mixed }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyEstimate {
    /// s to serialise one input vector through the shared DACs.
    pub dac_per_vmm: f64,
    /// s to read one output vector through the shared ADCs.
    pub adc_per_vmm: f64,
    pub total: Comparison,
}

impl LatencyEstimate {
    pub fn per_vmm(&self) -> f64 {
        self.dac_per_vmm + self.adc_per_vmm
    }
}

/// The mixed design converts every step; ours only waits for the alpha
/// current.
pub fn latency_estimate(cfg: &HwConfig) -> LatencyEstimate {
    let dac = (cfg.rows_per_dac * cfg.dac_cycles) as f64 / cfg.adc_freq;
    let adc = cfg.cols_per_adc as f64 / cfg.adc_freq;
    LatencyEstimate {
        dac_per_vmm: dac,
        adc_per_vmm: adc,
        total: Comparison {
            ours: cfg.alpha_latency,
            mixed: (dac + adc) * cfg.steps as f64 + cfg.alpha_latency,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HwReport {
    pub cells: CellCount,
    pub power: PowerEstimate,
    pub area: Comparison,
    pub latency: LatencyEstimate,
}

pub const AREA_NOTE: &str = "note: areas are tiles x 2.77e-3 mm^2 per tile; a table printing 2.77 / 14.77 mm^2 differs by a factor of 100 in units, the ratio is unchanged";
pub const LATENCY_NOTE: &str = "note: memristor switching adds only ~100s of ns to our latency and is not included";

pub fn estimate(cfg: &HwConfig) -> Result<HwReport, HwError> {
    cfg.validate()?;
    let cells = count_cells(&cfg.layers, cfg.devices_per_weight, cfg.tile_dim);
    Ok(HwReport {
        cells,
        power: power_estimate(cfg, cells.tiles),
        area: area_estimate(cfg, cells.tiles),
        latency: latency_estimate(cfg),
    })
}

impl HwReport {
    fn rows(&self) -> [(&'static str, &'static str, Comparison); 3] {
        [
            ("Area", "mm^2", self.area),
            ("Power", "mW", Comparison {
                ours: self.power.total.ours * 1e3,
                mixed: self.power.total.mixed * 1e3,
            }),
            ("Latency", "ms", Comparison {
                ours: self.latency.total.ours * 1e3,
                mixed: self.latency.total.mixed * 1e3,
            }),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,unit,ours,mixed,improvement\n");
        for (name, unit, c) in self.rows() {
            let _ = writeln!(s, "{name},{unit},{},{},{}", c.ours, c.mixed, c.improvement());
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "synapses={} cells={} tiles={}\nper_tile_power_uW={:.4}\nper_vmm_us={:.4}\n\n",
            self.cells.synapses,
            self.cells.cells,
            self.cells.tiles,
            self.power.per_tile * 1e6,
            self.latency.per_vmm() * 1e6
        );
        let _ = writeln!(s, "{:<16}{:>10}{:>12}{:>14}", "", "Ours", "Mixed", "Improvement");
        for (name, unit, c) in self.rows() {
            let label = format!("{name} ({unit})");
            let _ = writeln!(
                s,
                "{label:<16}{:>10.4}{:>12.4}{:>13.3}x",
                c.ours,
                c.mixed,
                c.improvement()
            );
        }
        let _ = writeln!(s, "\n{AREA_NOTE}\n{LATENCY_NOTE}");
        s
    }
}
