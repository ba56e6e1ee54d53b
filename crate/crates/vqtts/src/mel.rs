//! Log-mel spectrograms over a fixed framing: frame `t` covers samples
//! `[t*hop, t*hop + win)`, zero-padded past the signal end, so every
//! extractor in the pipeline agrees on `T = floor(samples / hop)`.
//!
//! The DFT is applied as a matmul against precomputed cosine/sine bases.
//! That keeps the transform trivially differentiable: the vocoder's
//! spectral loss backpropagates through [`MelSpectrogram::backward`] into
//! raw samples.

use ndarray::{Array1, Array2, Axis};

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub hop: usize,
    pub win: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelConfig {
    pub fn new(sample_rate: u32, hop: usize, win: usize, n_mels: usize) -> Self {
        let n_fft = win.next_power_of_two();
        Self {
            sample_rate,
            hop,
            win,
            n_fft,
            n_mels,
            fmin: 0.0,
            fmax: sample_rate as f64 / 2.0,
        }
    }
}

pub struct MelSpectrogram {
    pub cfg: MelConfig,
    window: Array1<f64>,
    cos_basis: Array2<f64>, // n_fft x bins
    sin_basis: Array2<f64>,
    filterbank: Array2<f64>, // bins x n_mels
}

/// Intermediates kept for the backward pass.
pub struct MelTrace {
    re: Array2<f64>,
    im: Array2<f64>,
    mag: Array2<f64>,
    mel_lin: Array2<f64>,
    n_samples: usize,
}

const MAG_GUARD: f64 = 1e-20;
pub const LOG_FLOOR_EPS: f64 = 1e-5;

impl MelSpectrogram {
    pub fn new(cfg: MelConfig) -> Self {
        assert!(cfg.hop > 0 && cfg.win > 0 && cfg.n_fft >= cfg.win);
        assert!(cfg.n_mels >= 1);
        let bins = cfg.n_fft / 2 + 1;
        let window = Array1::from_shape_fn(cfg.win, |i| {
            0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / cfg.win as f64).cos())
        });
        let mut cos_basis = Array2::zeros((cfg.n_fft, bins));
        let mut sin_basis = Array2::zeros((cfg.n_fft, bins));
        for n in 0..cfg.n_fft {
            for k in 0..bins {
                let arg = std::f64::consts::TAU * (n * k) as f64 / cfg.n_fft as f64;
                cos_basis[[n, k]] = arg.cos();
                sin_basis[[n, k]] = -arg.sin();
            }
        }
        let filterbank = Self::build_filterbank(&cfg, bins);
        Self {
            cfg,
            window,
            cos_basis,
            sin_basis,
            filterbank,
        }
    }

    fn build_filterbank(cfg: &MelConfig, bins: usize) -> Array2<f64> {
        let mel_lo = hz_to_mel(cfg.fmin);
        let mel_hi = hz_to_mel(cfg.fmax);
        let centers: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut fb = Array2::zeros((bins, cfg.n_mels));
        for k in 0..bins {
            let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
            for m in 0..cfg.n_mels {
                let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
                let w = if f >= lo && f <= mid && mid > lo {
                    (f - lo) / (mid - lo)
                } else if f > mid && f <= hi && hi > mid {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                fb[[k, m]] = w;
            }
        }
        fb
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples / self.cfg.hop
    }

    /// Windowed, zero-padded frames as a T x n_fft matrix.
    fn frames(&self, samples: &[f64]) -> Array2<f64> {
        let t_frames = self.n_frames(samples.len());
        let mut out = Array2::zeros((t_frames, self.cfg.n_fft));
        for t in 0..t_frames {
            let start = t * self.cfg.hop;
            let stop = (start + self.cfg.win).min(samples.len());
            for (i, s) in samples[start..stop].iter().enumerate() {
                out[[t, i]] = s * self.window[i];
            }
        }
        out
    }

    /// Log-mel features, T x n_mels with T = floor(samples / hop).
    pub fn extract(&self, samples: &[f64]) -> Array2<f64> {
        self.forward(samples).0
    }

    /// Like [`extract`](Self::extract) but keeps intermediates for
    /// [`backward`](Self::backward).
    pub fn forward(&self, samples: &[f64]) -> (Array2<f64>, MelTrace) {
        let frames = self.frames(samples);
        let re = frames.dot(&self.cos_basis);
        let im = frames.dot(&self.sin_basis);
        let mag = (&re * &re + &im * &im + MAG_GUARD).mapv(f64::sqrt);
        let mel_lin = mag.dot(&self.filterbank);
        let logmel = mel_lin.mapv(|v| (v + LOG_FLOOR_EPS).ln());
        (
            logmel,
            MelTrace {
                re,
                im,
                mag,
                mel_lin,
                n_samples: samples.len(),
            },
        )
    }

    /// Gradient of a scalar loss w.r.t. the input samples, given its gradient
    /// w.r.t. the log-mel output.
    pub fn backward(&self, trace: &MelTrace, d_logmel: &Array2<f64>) -> Vec<f64> {
        let d_mel = d_logmel / &trace.mel_lin.mapv(|v| v + LOG_FLOOR_EPS);
        let d_mag = d_mel.dot(&self.filterbank.t());
        let d_re = &d_mag * &trace.re / &trace.mag;
        let d_im = &d_mag * &trace.im / &trace.mag;
        let d_frames = d_re.dot(&self.cos_basis.t()) + d_im.dot(&self.sin_basis.t());
        let mut d_samples = vec![0.0; trace.n_samples];
        for (t, row) in d_frames.axis_iter(Axis(0)).enumerate() {
            let start = t * self.cfg.hop;
            let stop = (start + self.cfg.win).min(trace.n_samples);
            for i in 0..stop - start {
                d_samples[start + i] += row[i] * self.window[i];
            }
        }
        d_samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn extractor() -> MelSpectrogram {
        MelSpectrogram::new(MelConfig::new(16000, 160, 400, 24))
    }

    #[test]
    fn frame_count_is_floor_of_samples_over_hop() {
        let mel = extractor();
        assert_eq!(mel.extract(&vec![0.0; 1600]).nrows(), 10);
        assert_eq!(mel.extract(&vec![0.0; 1759]).nrows(), 10);
        assert_eq!(mel.extract(&vec![0.0; 159]).nrows(), 0);
    }

    #[test]
    fn tone_energy_lands_in_matching_band() {
        let mel = extractor();
        let sr = 16000.0;
        let tone =
            |f: f64| -> Vec<f64> { (0..8000).map(|i| (std::f64::consts::TAU * f * i as f64 / sr).sin()).collect() };
        let low = mel.extract(&tone(200.0));
        let high = mel.extract(&tone(3000.0));
        // centroid over mel channels should move up with frequency
        let centroid = |m: &Array2<f64>| {
            let row = m.row(10);
            let lin: Vec<f64> = row.iter().map(|v| v.exp()).collect();
            let total: f64 = lin.iter().sum();
            lin.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>() / total
        };
        assert!(centroid(&high) > centroid(&low) + 2.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mel = MelSpectrogram::new(MelConfig::new(8000, 40, 80, 8));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..200).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (out, trace) = mel.forward(&samples);
        // loss = weighted sum of log-mel entries
        let weights = Array2::from_shape_fn(out.dim(), |(i, j)| ((i + 2 * j) % 5) as f64 - 2.0);
        let analytic = mel.backward(&trace, &weights);
        let loss = |s: &[f64]| (&mel.forward(s).0 * &weights).sum();
        let h = 1e-6;
        for &i in &[0usize, 17, 63, 127, 199] {
            let mut plus = samples.clone();
            plus[i] += h;
            let mut minus = samples.clone();
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-8);
            assert!(
                (fd - analytic[i]).abs() / denom < 1e-5,
                "sample {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }
}
