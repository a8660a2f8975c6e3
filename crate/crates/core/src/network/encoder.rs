use serde::{Deserialize, Serialize};

use super::{NetworkError, Result};
use crate::device::{alpha_step, AlphaParams, AlphaState, StepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Static intensities injected once every `spike_period` steps.
    #[default]
    Static,
    /// Per-step event counts injected every step.
    Events,
}

/// One input sample.
#[derive(Debug, Clone, Copy)]
pub enum Stimulus<'a> {
    /// Intensities in `[0, 1]`, one per input channel.
    Static(&'a [f64]),
    /// Event counts, `frames x features` row-major. Steps beyond the last
    /// frame receive no input.
    Events {
        counts: &'a [u8],
        frames: usize,
        features: usize,
    },
}

impl Stimulus<'_> {
    fn features(&self) -> usize {
        match self {
            Stimulus::Static(x) => x.len(),
            Stimulus::Events { features, .. } => *features,
        }
    }
}

/// Alpha current generators, one per input channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEncoder {
    pub n: usize,
    pub params: AlphaParams,
    pub spike_period: usize,
    /// Impulse weight (A) per unit intensity or per event.
    pub input_gain: f64,
    pub encoding: Encoding,
}

impl AlphaEncoder {
    pub fn new(
        n: usize,
        params: AlphaParams,
        spike_period: usize,
        input_gain: f64,
        encoding: Encoding,
    ) -> Result<Self> {
        if spike_period == 0 {
            return Err(NetworkError::Config("spike_period must be >= 1".into()));
        }
        if !(input_gain.is_finite() && input_gain > 0.0) {
            return Err(NetworkError::Config("input_gain must be > 0".into()));
        }
        params.validate()?;
        Ok(Self {
            n,
            params,
            spike_period,
            input_gain,
            encoding,
        })
    }

    pub fn initial_states(&self) -> Vec<AlphaState> {
        vec![AlphaState::default(); self.n]
    }

    /// Impulse weights of step `t`.
    fn impulses(&self, stimulus: &Stimulus, t: usize, out: &mut [f64]) {
        match *stimulus {
            Stimulus::Static(x) => {
                if t % self.spike_period == 0 {
                    for (o, &v) in out.iter_mut().zip(x) {
                        *o = self.input_gain * v;
                    }
                } else {
                    out.fill(0.0);
                }
            }
            Stimulus::Events {
                counts,
                frames,
                features,
            } => {
                if t < frames {
                    let frame = &counts[t * features..(t + 1) * features];
                    for (o, &c) in out.iter_mut().zip(frame) {
                        *o = self.input_gain * f64::from(c);
                    }
                } else {
                    out.fill(0.0);
                }
            }
        }
    }

    fn check(&self, stimulus: &Stimulus) -> Result<()> {
        if stimulus.features() != self.n {
            return Err(NetworkError::Dimension {
                expected: self.n,
                got: stimulus.features(),
            });
        }
        if let Stimulus::Events {
            counts,
            frames,
            features,
        } = stimulus
        {
            if counts.len() != frames * features {
                return Err(NetworkError::Dimension {
                    expected: frames * features,
                    got: counts.len(),
                });
            }
        }
        Ok(())
    }

    /// Advance every channel by one step and return the alpha currents.
    pub fn encode_step(
        &self,
        states: &mut [AlphaState],
        stimulus: &Stimulus,
        t: usize,
        cfg: &StepConfig,
    ) -> Result<Vec<f64>> {
        self.check(stimulus)?;
        if states.len() != self.n {
            return Err(NetworkError::Dimension {
                expected: self.n,
                got: states.len(),
            });
        }
        let mut weights = vec![0.0; self.n];
        self.impulses(stimulus, t, &mut weights);
        Ok(states
            .iter_mut()
            .zip(&weights)
            .map(|(s, &w)| {
                *s = alpha_step(*s, &self.params, w, cfg);
                s.i
            })
            .collect())
    }

    /// Alpha currents for `steps` steps from freshly reset generators.
    pub fn drive(&self, stimulus: &Stimulus, steps: usize, cfg: &StepConfig) -> Result<Vec<Vec<f64>>> {
        let mut states = self.initial_states();
        (0..steps)
            .map(|t| self.encode_step(&mut states, stimulus, t, cfg))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Integrator;

    fn cfg() -> StepConfig {
        StepConfig::new(1e-5, Integrator::ExpEuler, 1)
    }

    fn encoder(n: usize, encoding: Encoding) -> AlphaEncoder {
        AlphaEncoder::new(n, AlphaParams::default(), 100, 1e-7, encoding).unwrap()
    }

    #[test]
    fn zero_image_gives_zero_drive() {
        let enc = encoder(4, Encoding::Static);
        let d = enc.drive(&Stimulus::Static(&[0.0; 4]), 500, &cfg()).unwrap();
        assert!(d.iter().flatten().all(|&i| i == 0.0));
    }

    #[test]
    fn single_pixel_follows_single_impulse_response() {
        let enc = encoder(3, Encoding::Static);
        let d = enc.drive(&Stimulus::Static(&[0.0, 1.0, 0.0]), 99, &cfg()).unwrap();
        let mut s = AlphaState::default();
        for (t, row) in d.iter().enumerate() {
            s = alpha_step(s, &enc.params, if t == 0 { 1e-7 } else { 0.0 }, &cfg());
            assert_eq!(row[1], s.i);
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn static_injection_count() {
        let enc = encoder(2, Encoding::Static);
        let mut states = enc.initial_states();
        let stim = Stimulus::Static(&[0.5, 0.0]);
        let mut injections = [0usize; 2];
        for t in 0..1000 {
            let before: Vec<f64> = states.iter().map(|s| s.a).collect();
            enc.encode_step(&mut states, &stim, t, &cfg()).unwrap();
            for k in 0..2 {
                if states[k].a > before[k] {
                    injections[k] += 1;
                }
            }
        }
        assert_eq!(injections, [10, 0]);
    }

    #[test]
    fn event_counts_drive_every_step() {
        let enc = encoder(2, Encoding::Events);
        let counts = [1u8, 0, 0, 2, 3, 0];
        let stim = Stimulus::Events {
            counts: &counts,
            frames: 3,
            features: 2,
        };
        let mut states = enc.initial_states();
        let mut a_prev = [0.0; 2];
        for t in 0..5 {
            enc.encode_step(&mut states, &stim, t, &cfg()).unwrap();
            for k in 0..2 {
                let decayed = a_prev[k] * (1.0 - 1e-5 / 0.64e-3);
                let expected = if t < 3 { decayed + 1e-7 * f64::from(counts[t * 2 + k]) } else { decayed };
                assert!((states[k].a - expected).abs() < 1e-22);
                a_prev[k] = states[k].a;
            }
        }
    }

    #[test]
    fn mismatched_stimulus_is_rejected() {
        let enc = encoder(3, Encoding::Static);
        let mut st = enc.initial_states();
        assert!(enc.encode_step(&mut st, &Stimulus::Static(&[0.0; 2]), 0, &cfg()).is_err());
        let bad = Stimulus::Events {
            counts: &[0u8; 5],
            frames: 2,
            features: 3,
        };
        assert!(enc.encode_step(&mut st, &bad, 0, &cfg()).is_err());
        assert!(AlphaEncoder::new(3, AlphaParams::default(), 0, 1e-7, Encoding::Static).is_err());
    }
}
