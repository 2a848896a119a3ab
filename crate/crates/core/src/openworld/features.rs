use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::trace::SensorWindow;

/// Per channel: mean, standard deviation, dominant non-DC FFT bin and its
/// single-sided amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub const PER_CHANNEL: usize = 4;

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn extract_features(window: &SensorWindow) -> Result<FeatureVector> {
    let w = window.samples;
    if w < 2 {
        return Err(Error::invalid(
            "window needs at least two samples per channel",
        ));
    }
    if window.data.len() != window.channels * w {
        return Err(Error::DimensionMismatch {
            expected: window.channels * w,
            got: window.data.len(),
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(w);
    let mut buf = vec![Complex::new(0.0, 0.0); w];
    let mut values = Vec::with_capacity(window.channels * FeatureVector::PER_CHANNEL);
    for c in 0..window.channels {
        let xs = window.channel(c);
        let mean = xs.iter().sum::<f64>() / w as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w as f64;

        for (b, &x) in buf.iter_mut().zip(xs) {
            *b = Complex::new(x, 0.0);
        }
        fft.process(&mut buf);
        let half = w / 2;
        let (mut bin, mut mag) = (1, f64::NEG_INFINITY);
        for (k, z) in buf.iter().enumerate().take(half + 1).skip(1) {
            // Nyquist has no mirrored partner.
            let scale = if 2 * k == w { 1.0 } else { 2.0 };
            let m = scale * z.norm() / w as f64;
            if m > mag + 1e-12 {
                bin = k;
                mag = m;
            }
        }
        // Round-off on constant signals.
        if mag < 1e-9 {
            mag = 0.0;
            bin = 1;
        }
        values.extend([mean, var.sqrt(), bin as f64, mag]);
    }
    Ok(FeatureVector { values })
}
