use super::{unflatten, DirVecSequence, PoseSequence, Vec3, NUM_BONES, NUM_JOINTS};
use crate::error::{Error, Result};

/// Frame-rate conversion. Upsampling uses a natural cubic spline through
/// every channel; downsampling picks the frame nearest in time.
pub trait Resample: Sized {
    fn resample(&self, dst_fps: f64) -> Result<Self>;
}

impl Resample for PoseSequence {
    fn resample(&self, dst_fps: f64) -> Result<Self> {
        let frames = resample_frames::<NUM_JOINTS>(&self.frames, self.fps, dst_fps)?;
        Ok(PoseSequence { frames, fps: dst_fps })
    }
}

impl Resample for DirVecSequence {
    fn resample(&self, dst_fps: f64) -> Result<Self> {
        let frames = resample_frames::<NUM_BONES>(&self.frames, self.fps, dst_fps)?;
        DirVecSequence { frames, fps: dst_fps }.normalized()
    }
}

/// Number of output frames spanning the same duration as `n` input frames.
pub(crate) fn output_len(n: usize, src_fps: f64, dst_fps: f64) -> usize {
    (((n - 1) as f64) * dst_fps / src_fps + 1e-9).floor() as usize + 1
}

fn resample_frames<const N: usize>(
    frames: &[[Vec3; N]],
    src_fps: f64,
    dst_fps: f64,
) -> Result<Vec<[Vec3; N]>> {
    if !(dst_fps.is_finite() && dst_fps > 0.0) {
        return Err(Error::InvalidInput(format!("destination frame rate {dst_fps} must be positive")));
    }
    if frames.is_empty() {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    let n = frames.len();
    if dst_fps == src_fps {
        return Ok(frames.to_vec());
    }
    let m = output_len(n, src_fps, dst_fps);
    if dst_fps < src_fps {
        return Ok((0..m)
            .map(|k| {
                let idx = (k as f64 * src_fps / dst_fps).round() as usize;
                frames[idx.min(n - 1)]
            })
            .collect());
    }
    if n < 4 {
        return Err(Error::InsufficientFrames { needed: 4, got: n });
    }
    let channels = N * 3;
    let mut out = vec![vec![0.0; channels]; m];
    let mut y = vec![0.0; n];
    for ch in 0..channels {
        for (i, f) in frames.iter().enumerate() {
            y[i] = f[ch / 3][ch % 3];
        }
        let spline = NaturalSpline::fit(&y);
        for (k, row) in out.iter_mut().enumerate() {
            row[ch] = spline.eval(k as f64 * src_fps / dst_fps);
        }
    }
    Ok(out.iter().map(|row| unflatten::<N>(row)).collect())
}

/// Natural cubic spline through samples at integer abscissae.
struct NaturalSpline<'a> {
    y: &'a [f64],
    second: Vec<f64>,
}

impl<'a> NaturalSpline<'a> {
    fn fit(y: &'a [f64]) -> Self {
        let n = y.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior system
            // M[i-1] + 4 M[i] + M[i+1] = 6 (y[i-1] - 2 y[i] + y[i+1]).
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]);
                let (cp, dp) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
                let denom = 4.0 - cp;
                c[i] = 1.0 / denom;
                d[i] = (rhs - dp) / denom;
            }
            for i in (0..k).rev() {
                let next = if i + 1 < k { second[i + 2] } else { 0.0 };
                second[i + 1] = d[i] - c[i] * next;
            }
        }
        Self { y, second }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let a = 1.0 - t;
        a * y0 + t * y1 + ((a * a * a - a) * m0 + (t * t * t - t) * m1) / 6.0
    }
}
