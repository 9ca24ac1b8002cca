use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error("waveform needs at least one breakpoint starting at t = 0")]
    BadStart,
    #[error("breakpoint times must be strictly increasing (index {0})")]
    Unsorted(usize),
    #[error("t = {t} s is outside the waveform span [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
}

/// Piecewise-linear voltage waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    points: Vec<(f64, f64)>,
    duration: f64,
}

/// Relative slack when checking that `t` lies within the waveform span.
const SPAN_EPS: f64 = 1e-9;

impl Waveform {
    /// `points` are (time s, voltage V). A single point is a constant level
    /// held for `duration`.
    pub fn new(points: Vec<(f64, f64)>, duration: f64) -> Result<Self, WaveformError> {
        if !matches!(points.first(), Some(&(0.0, _))) {
            return Err(WaveformError::BadStart);
        }
        for i in 1..points.len() {
            if points[i].0 <= points[i - 1].0 {
                return Err(WaveformError::Unsorted(i));
            }
        }
        let last = points[points.len() - 1].0;
        Ok(Waveform {
            points,
            duration: duration.max(last),
        })
    }

    pub fn dc(v: f64, duration: f64) -> Self {
        Waveform {
            points: vec![(0.0, v)],
            duration,
        }
    }

    /// Symmetric 0 -> peak -> 0 ramp.
    pub fn triangle(peak: f64, duration: f64) -> Self {
        Waveform {
            points: vec![(0.0, 0.0), (duration / 2.0, peak), (duration, 0.0)],
            duration,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn peak(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Same shape with every voltage multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Waveform {
            points: self.points.iter().map(|&(t, v)| (t, v * k)).collect(),
            duration: self.duration,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, WaveformError> {
        let slack = SPAN_EPS * self.duration.max(f64::MIN_POSITIVE);
        if !(t >= -slack && t <= self.duration + slack) {
            return Err(WaveformError::OutOfRange {
                t,
                duration: self.duration,
            });
        }
        let pts = &self.points;
        let k = pts.partition_point(|p| p.0 <= t);
        if k == 0 {
            return Ok(pts[0].1);
        }
        if k == pts.len() {
            return Ok(pts[k - 1].1);
        }
        let (t0, v0) = pts[k - 1];
        let (t1, v1) = pts[k];
        Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_eval() {
        let w = Waveform::triangle(2.0, 4e-3);
        assert_eq!(w.eval(0.0).unwrap(), 0.0);
        assert_eq!(w.eval(2e-3).unwrap(), 2.0);
        assert!((w.eval(1e-3).unwrap() - 1.0).abs() < 1e-12);
        assert!((w.eval(3e-3).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(w.eval(4e-3).unwrap(), 0.0);
        assert_eq!(w.peak(), 2.0);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let w = Waveform::dc(3.3, 1e-3);
        assert!(matches!(w.eval(2e-3), Err(WaveformError::OutOfRange { .. })));
        assert!(w.eval(-1e-6).is_err());
        assert_eq!(w.eval(1e-3).unwrap(), 3.3);
    }

    #[test]
    fn constructor_checks() {
        assert_eq!(Waveform::new(vec![], 1.0), Err(WaveformError::BadStart));
        assert_eq!(Waveform::new(vec![(0.1, 0.0)], 1.0), Err(WaveformError::BadStart));
        assert_eq!(
            Waveform::new(vec![(0.0, 0.0), (0.5, 1.0), (0.5, 2.0)], 1.0),
            Err(WaveformError::Unsorted(2))
        );
        let w = Waveform::new(vec![(0.0, 0.0), (2.0, 1.0)], 1.0).unwrap();
        assert_eq!(w.duration(), 2.0);
    }
}
