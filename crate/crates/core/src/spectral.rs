//! Frequency-domain feature extraction: DFT (naive oracle and chirp-z FFT),
//! the exponential bin-width schedule, resampling onto the 25 FPS reference
//! grid, and the binned magnitude-feature tensor.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Read;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::NUM_JOINTS;
use crate::pose::{Label, PoseSequence};

pub const DEFAULT_REF_FPS: f64 = 25.0;
pub const DEFAULT_N_FFT: usize = 1000;
pub const DEFAULT_CUTOFF_HZ: f64 = 6.0;
pub const DEFAULT_C: f64 = 1.00264;
pub const NUM_CHANNELS: usize = 2;

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Param(format!(
                "time series needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if sample_rate <= 0.0 {
            return Err(Error::Param(format!("sample rate {sample_rate} must be positive")));
        }
        Ok(TimeSeries { samples, sample_rate })
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub coefficients: Vec<Complex64>,
    /// Hz per coefficient index (= sample_rate / N).
    pub resolution: f64,
}

/// Literal O(N^2) evaluation of the DFT sum; the independent oracle the FFT
/// is checked against.
pub fn dft_naive(series: &TimeSeries) -> Result<Spectrum> {
    let n = series.samples.len();
    if n < 2 {
        return Err(Error::Param("dft_naive needs N >= 2".into()));
    }
    let mut coefficients = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &x) in series.samples.iter().enumerate() {
            // k*i mod N keeps the twiddle argument small for large N.
            let angle = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
            acc += Complex64::new(angle.cos(), angle.sin()) * x;
        }
        coefficients.push(acc);
    }
    Ok(Spectrum {
        coefficients,
        resolution: series.sample_rate / n as f64,
    })
}

/// Iterative radix-2 FFT; `buf.len()` must be a power of two.
fn fft_pow2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[start + k];
                let v = buf[start + k + len / 2] * w;
                buf[start + k] = u + v;
                buf[start + k + len / 2] = u - v;
                w *= wlen;
            }
        }
        len <<= 1;
    }
    if inverse {
        let inv = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= inv;
        }
    }
}

/// Exact DFT of arbitrary length via the chirp-z reduction to a
/// power-of-two cyclic convolution.
pub fn fft_bluestein(series: &TimeSeries) -> Result<Spectrum> {
    let n = series.samples.len();
    if n < 2 {
        return Err(Error::Param("fft_bluestein needs N >= 2".into()));
    }
    let coefficients = if n.is_power_of_two() {
        let mut buf: Vec<Complex64> = series
            .samples
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        fft_pow2(&mut buf, false);
        buf
    } else {
        bluestein_complex(&series.samples)
    };
    Ok(Spectrum {
        coefficients,
        resolution: series.sample_rate / n as f64,
    })
}

fn bluestein_complex(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    // chirp(m) = e^{-i pi m^2 / n}; m^2 taken mod 2n keeps angles exact.
    let chirp = |m: usize| -> Complex64 {
        let sq = ((m as u128 * m as u128) % (2 * n as u128)) as f64;
        let angle = -PI * sq / n as f64;
        Complex64::new(angle.cos(), angle.sin())
    };
    let m = (2 * n - 1).next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..n {
        a[i] = chirp(i) * x[i];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = Complex64::new(1.0, 0.0);
    for i in 1..n {
        let c = chirp(i).conj();
        b[i] = c;
        b[m - i] = c;
    }
    fft_pow2(&mut a, false);
    fft_pow2(&mut b, false);
    for i in 0..m {
        a[i] *= b[i];
    }
    fft_pow2(&mut a, true);
    (0..n).map(|k| chirp(k) * a[k]).collect()
}

fn round_half_away_from_zero(x: f64) -> f64 {
    // f64::round already rounds half away from zero.
    x.round()
}

/// Bin widths of the exponential schedule: width(n) = Round(b0*c^n) while
/// b0*c^n < 3, Ceiling(b0*c^n) afterwards; enumeration stops once the
/// cumulative width reaches `coverage`.
pub fn bin_widths(b0: u64, c: f64, coverage: usize) -> Result<Vec<usize>> {
    if b0 < 1 {
        return Err(Error::Param("b0 must be >= 1".into()));
    }
    if c <= 1.0 {
        return Err(Error::Param(format!("growth parameter c = {c} must exceed 1")));
    }
    if coverage < 1 {
        return Err(Error::Param("coverage must be >= 1".into()));
    }
    let mut widths = Vec::new();
    let mut cumulative = 0usize;
    let mut raw = b0 as f64;
    while cumulative < coverage {
        let w = if raw < 3.0 {
            round_half_away_from_zero(raw) as usize
        } else {
            raw.ceil() as usize
        };
        let w = w.max(1);
        widths.push(w);
        cumulative += w;
        raw *= c;
    }
    Ok(widths)
}

/// Immutable description of how FFT coefficients map onto frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSchedule {
    pub b0: u64,
    pub c: f64,
    pub widths: Vec<usize>,
    /// bins+1 strictly increasing coefficient boundaries; bin k covers
    /// indices edges[k]..edges[k+1]; edges[0] = 0, last edge = coverage.
    pub edges: Vec<usize>,
    pub cutoff_hz: f64,
    pub ref_fps: f64,
    pub n_fft: usize,
}

impl BinSchedule {
    pub fn num_bins(&self) -> usize {
        self.widths.len()
    }

    pub fn coverage(&self) -> usize {
        *self.edges.last().unwrap()
    }

    /// Degenerate schedule with width-1 bins over every covered coefficient;
    /// the no-binning limit used by ablations.
    pub fn unit(fps: f64, n_fft: usize, cutoff_hz: f64) -> Result<BinSchedule> {
        let mut s = build_schedule(fps, n_fft, cutoff_hz, 2.0)?;
        let coverage = s.coverage();
        s.c = 1.0;
        s.widths = vec![1; coverage];
        s.edges = (0..=coverage).collect();
        Ok(s)
    }
}

/// Build the schedule for a transform of `n_fft` samples at `fps`, keeping
/// coefficients at or below `cutoff_hz`.
pub fn build_schedule(fps: f64, n_fft: usize, cutoff_hz: f64, c: f64) -> Result<BinSchedule> {
    if !(24.0..=60.0).contains(&fps) {
        return Err(Error::Param(format!("fps {fps} outside the supported 24-60 range")));
    }
    if cutoff_hz >= fps / 2.0 {
        return Err(Error::Param(format!(
            "cutoff {cutoff_hz} Hz at or above Nyquist ({} Hz)",
            fps / 2.0
        )));
    }
    let coverage = (cutoff_hz * n_fft as f64 / fps).floor() as usize + 1;
    if coverage < 2 {
        return Err(Error::Param(format!(
            "window of {n_fft} samples too short for a {cutoff_hz} Hz cutoff (coverage {coverage})"
        )));
    }
    let mut widths = bin_widths(1, c, coverage)?;
    let mut edges = Vec::with_capacity(widths.len() + 1);
    edges.push(0usize);
    let mut cum = 0usize;
    for w in widths.iter_mut() {
        // Truncate the final bin at the coverage boundary.
        if cum + *w > coverage {
            *w = coverage - cum;
        }
        cum += *w;
        edges.push(cum);
    }
    Ok(BinSchedule {
        b0: 1,
        c,
        widths,
        edges,
        cutoff_hz,
        ref_fps: fps,
        n_fft,
    })
}

/// Linear-interpolation resampling onto a uniform grid at `target_fps`
/// spanning the original duration.
pub fn resample(series: &TimeSeries, target_fps: f64) -> Result<TimeSeries> {
    if target_fps <= 0.0 {
        return Err(Error::Param(format!("target fps {target_fps} must be positive")));
    }
    if (series.sample_rate - target_fps).abs() < 1e-12 {
        return Ok(series.clone());
    }
    let n = series.samples.len();
    let duration = (n - 1) as f64 / series.sample_rate;
    let out_len = ((duration * target_fps).floor() as usize + 1).max(2);
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let t = j as f64 / target_fps;
        let pos = t * series.sample_rate;
        let i = (pos.floor() as usize).min(n - 1);
        let frac = pos - i as f64;
        let v = if i + 1 < n {
            series.samples[i] * (1.0 - frac) + series.samples[i + 1] * frac
        } else {
            series.samples[n - 1]
        };
        out.push(v);
    }
    TimeSeries::new(out, target_fps)
}

/// Binned spectral magnitudes, shape (bins x 18 joints x 2 channels),
/// row-major in (bin, joint, channel) order.
#[derive(Debug, Clone)]
pub struct SpectralFeatures {
    pub values: Vec<f64>,
    pub bins: usize,
    pub schedule: BinSchedule,
    pub subject_id: String,
    pub label: Option<Label>,
}

impl SpectralFeatures {
    pub fn value(&self, bin: usize, joint: usize, channel: usize) -> f64 {
        self.values[(bin * NUM_JOINTS + joint) * NUM_CHANNELS + channel]
    }
}

/// Per-joint, per-channel pipeline: resample to the reference rate, truncate
/// to the transform window, remove the mean, zero-pad, transform, and average
/// coefficient magnitudes within each bin.
pub fn extract_features(seq: &PoseSequence, schedule: &BinSchedule) -> Result<SpectralFeatures> {
    let bins = schedule.num_bins();
    let coverage = schedule.coverage();
    let mut values = vec![0.0; bins * NUM_JOINTS * NUM_CHANNELS];
    for joint in 0..NUM_JOINTS {
        for channel in 0..NUM_CHANNELS {
            let raw: Vec<f64> = seq
                .frames
                .iter()
                .map(|f| {
                    let kp = &f.keypoints[joint];
                    if channel == 0 {
                        kp.x
                    } else {
                        kp.y
                    }
                })
                .collect();
            if raw.iter().all(|&v| v == 0.0) {
                continue; // joint missing everywhere stays all-zero
            }
            let series = TimeSeries::new(raw, seq.fps)?;
            let resampled = resample(&series, schedule.ref_fps)?;
            let mut samples = resampled.samples;
            samples.truncate(schedule.n_fft);
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            for s in &mut samples {
                *s -= mean;
            }
            samples.resize(schedule.n_fft, 0.0);
            let spectrum = fft_bluestein(&TimeSeries::new(samples, schedule.ref_fps)?)?;
            let mags: Vec<f64> = spectrum.coefficients[..coverage]
                .iter()
                .map(|c| c.norm())
                .collect();
            for b in 0..bins {
                let (lo, hi) = (schedule.edges[b], schedule.edges[b + 1]);
                let mean_mag = mags[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                values[(b * NUM_JOINTS + joint) * NUM_CHANNELS + channel] = mean_mag;
            }
        }
    }
    Ok(SpectralFeatures {
        values,
        bins,
        schedule: schedule.clone(),
        subject_id: seq.subject_id.clone(),
        label: seq.label,
    })
}

/// Grid search over the growth parameter: returns the value maximizing the
/// callback's cross-validated accuracy, ties broken toward the smallest c.
pub fn search_c<F>(grid: &[f64], mut eval: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Param("empty c grid".into()));
    }
    if let Some(&bad) = grid.iter().find(|&&c| c <= 1.0) {
        return Err(Error::Param(format!("grid value {bad} must exceed 1")));
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_c = sorted[0];
    let mut best_acc = eval(sorted[0])?;
    for &c in &sorted[1..] {
        let acc = eval(c)?;
        if acc > best_acc {
            best_acc = acc;
            best_c = c;
        }
    }
    Ok(best_c)
}

// ---------------------------------------------------------------------------
// Serialization: versioned text and binary forms.

const TEXT_MAGIC: &str = "features v1";
const BIN_MAGIC: &[u8; 8] = b"SPFEATB1";

pub fn features_to_text(f: &SpectralFeatures) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{TEXT_MAGIC}");
    let _ = writeln!(out, "subject {}", f.subject_id);
    let _ = writeln!(out, "label {}", Label::to_field(f.label));
    let _ = writeln!(out, "bins {} joints {} channels {}", f.bins, NUM_JOINTS, NUM_CHANNELS);
    let s = &f.schedule;
    let _ = writeln!(
        out,
        "schedule b0 {} c {} cutoff_hz {} ref_fps {} n_fft {}",
        s.b0, s.c, s.cutoff_hz, s.ref_fps, s.n_fft
    );
    let _ = write!(out, "edges");
    for e in &s.edges {
        let _ = write!(out, " {e}");
    }
    let _ = writeln!(out);
    for b in 0..f.bins {
        let row = &f.values[b * NUM_JOINTS * NUM_CHANNELS..(b + 1) * NUM_JOINTS * NUM_CHANNELS];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn features_from_text(text: &str) -> Result<SpectralFeatures> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != TEXT_MAGIC {
        return Err(Error::Format(format!("unsupported features header '{header}'")));
    }
    let field = |line: Option<&str>, key: &str| -> Result<String> {
        let line = line.ok_or_else(|| Error::Format(format!("missing '{key}' line")))?;
        line.strip_prefix(key)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| Error::Format(format!("expected '{key}' line, got '{line}'")))
    };
    let subject_id = field(lines.next(), "subject")?;
    let label = Label::from_field(&field(lines.next(), "label")?)?;
    let dims = field(lines.next(), "bins")?;
    let dim_parts: Vec<&str> = dims.split_whitespace().collect();
    if dim_parts.len() != 5 || dim_parts[1] != "joints" || dim_parts[3] != "channels" {
        return Err(Error::Format(format!("bad dimensions line '{dims}'")));
    }
    let bins: usize = dim_parts[0]
        .parse()
        .map_err(|_| Error::Format("bad bin count".into()))?;
    let sched = field(lines.next(), "schedule")?;
    let sp: Vec<&str> = sched.split_whitespace().collect();
    if sp.len() != 10 {
        return Err(Error::Format(format!("bad schedule line '{sched}'")));
    }
    let parse_f = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Format(format!("bad number '{s}'")))
    };
    let b0: u64 = sp[1].parse().map_err(|_| Error::Format("bad b0".into()))?;
    let c = parse_f(sp[3])?;
    let cutoff_hz = parse_f(sp[5])?;
    let ref_fps = parse_f(sp[7])?;
    let n_fft: usize = sp[9].parse().map_err(|_| Error::Format("bad n_fft".into()))?;
    let edges_line = field(lines.next(), "edges")?;
    let edges: Vec<usize> = edges_line
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Format(format!("bad edge '{s}'"))))
        .collect::<Result<_>>()?;
    if edges.len() != bins + 1 {
        return Err(Error::Format(format!(
            "edge count {} does not match {} bins",
            edges.len(),
            bins
        )));
    }
    let widths: Vec<usize> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let mut values = Vec::with_capacity(bins * NUM_JOINTS * NUM_CHANNELS);
    for b in 0..bins {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("missing value row {b}")))?;
        for tok in line.split_whitespace() {
            values.push(parse_f(tok)?);
        }
    }
    if values.len() != bins * NUM_JOINTS * NUM_CHANNELS {
        return Err(Error::Format(format!(
            "expected {} values, found {}",
            bins * NUM_JOINTS * NUM_CHANNELS,
            values.len()
        )));
    }
    Ok(SpectralFeatures {
        values,
        bins,
        schedule: BinSchedule {
            b0,
            c,
            widths,
            edges,
            cutoff_hz,
            ref_fps,
            n_fft,
        },
        subject_id,
        label,
    })
}

pub fn features_to_binary(f: &SpectralFeatures) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BIN_MAGIC);
    let put_u64 = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
    let put_f64 = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
    let id = f.subject_id.as_bytes();
    put_u64(&mut out, id.len() as u64);
    out.extend_from_slice(id);
    out.push(match f.label {
        None => 0,
        Some(Label::Normal) => 1,
        Some(Label::Abnormal) => 2,
    });
    put_u64(&mut out, f.bins as u64);
    put_u64(&mut out, f.schedule.b0);
    put_f64(&mut out, f.schedule.c);
    put_f64(&mut out, f.schedule.cutoff_hz);
    put_f64(&mut out, f.schedule.ref_fps);
    put_u64(&mut out, f.schedule.n_fft as u64);
    for &e in &f.schedule.edges {
        put_u64(&mut out, e as u64);
    }
    for &v in &f.values {
        put_f64(&mut out, v);
    }
    out
}

pub fn features_from_binary(bytes: &[u8]) -> Result<SpectralFeatures> {
    let mut cur = std::io::Cursor::new(bytes);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic)?;
    if &magic != BIN_MAGIC {
        return Err(Error::Format("bad binary features magic".into()));
    }
    let mut u64buf = [0u8; 8];
    let mut get_u64 = |cur: &mut std::io::Cursor<&[u8]>| -> Result<u64> {
        cur.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let id_len = get_u64(&mut cur)? as usize;
    let mut id = vec![0u8; id_len];
    cur.read_exact(&mut id)?;
    let subject_id =
        String::from_utf8(id).map_err(|_| Error::Format("subject id not utf-8".into()))?;
    let mut byte = [0u8; 1];
    cur.read_exact(&mut byte)?;
    let label = match byte[0] {
        0 => None,
        1 => Some(Label::Normal),
        2 => Some(Label::Abnormal),
        b => return Err(Error::Format(format!("bad label byte {b}"))),
    };
    let mut f64buf = [0u8; 8];
    let mut get_f64 = |cur: &mut std::io::Cursor<&[u8]>| -> Result<f64> {
        cur.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let mut u64buf2 = [0u8; 8];
    let mut get_u64b = |cur: &mut std::io::Cursor<&[u8]>| -> Result<u64> {
        cur.read_exact(&mut u64buf2)?;
        Ok(u64::from_le_bytes(u64buf2))
    };
    let bins = get_u64b(&mut cur)? as usize;
    let b0 = get_u64b(&mut cur)?;
    let c = get_f64(&mut cur)?;
    let cutoff_hz = get_f64(&mut cur)?;
    let ref_fps = get_f64(&mut cur)?;
    let n_fft = get_u64b(&mut cur)? as usize;
    let mut edges = Vec::with_capacity(bins + 1);
    for _ in 0..=bins {
        edges.push(get_u64b(&mut cur)? as usize);
    }
    let widths: Vec<usize> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let count = bins * NUM_JOINTS * NUM_CHANNELS;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(get_f64(&mut cur)?);
    }
    Ok(SpectralFeatures {
        values,
        bins,
        schedule: BinSchedule {
            b0,
            c,
            widths,
            edges,
            cutoff_hz,
            ref_fps,
            n_fft,
        },
        subject_id,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn series(samples: Vec<f64>, rate: f64) -> TimeSeries {
        TimeSeries::new(samples, rate).unwrap()
    }

    #[test]
    fn dft_constant_is_dc_only() {
        let s = dft_naive(&series(vec![3.0; 4], 4.0)).unwrap();
        assert!((s.coefficients[0].re - 12.0).abs() < 1e-12);
        for k in 1..4 {
            assert!(s.coefficients[k].norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn dft_nyquist_tone() {
        let s = dft_naive(&series(vec![1.0, -1.0, 1.0, -1.0], 4.0)).unwrap();
        assert!((s.coefficients[2].re - 4.0).abs() < 1e-12);
        for k in [0usize, 1, 3] {
            assert!(s.coefficients[k].norm() < 1e-12);
        }
    }

    #[test]
    fn dft_parseval() {
        let mut rng = RngStream::new(5);
        let x: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        let s = dft_naive(&series(x, 10.0)).unwrap();
        let freq_energy: f64 = s.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() / 10.0;
        assert!((time_energy - freq_energy).abs() < 1e-9);
    }

    fn assert_fft_matches_naive(n: usize, seed: u64) {
        let mut rng = RngStream::new(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let ts = series(x, 25.0);
        let fast = fft_bluestein(&ts).unwrap();
        let slow = dft_naive(&ts).unwrap();
        let dominant = slow
            .coefficients
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max);
        for (a, b) in fast.coefficients.iter().zip(&slow.coefficients) {
            assert!((a - b).norm() / dominant < 1e-9, "N={n}");
        }
    }

    #[test]
    fn bluestein_matches_naive_power_of_two() {
        assert_fft_matches_naive(64, 1);
    }

    #[test]
    fn bluestein_matches_naive_prime() {
        assert_fft_matches_naive(997, 2);
    }

    #[test]
    fn bluestein_conjugate_symmetry_real_input() {
        let mut rng = RngStream::new(9);
        let n = 30;
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = fft_bluestein(&series(x, 25.0)).unwrap();
        for k in 1..n {
            let diff = (s.coefficients[n - k] - s.coefficients[k].conj()).norm();
            assert!(diff < 1e-9);
        }
    }

    #[test]
    fn tone_lands_on_expected_coefficient() {
        // 2 Hz sampled at 25 Hz over 1000 samples -> k = 2*1000/25 = 80.
        let n = 1000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 2.0 * i as f64 / 25.0).sin())
            .collect();
        let s = fft_bluestein(&series(x, 25.0)).unwrap();
        let argmax = (0..=n / 2)
            .max_by(|&a, &b| {
                s.coefficients[a]
                    .norm()
                    .partial_cmp(&s.coefficients[b].norm())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(argmax, 80);
    }

    #[test]
    fn widths_doubling_growth() {
        assert_eq!(bin_widths(1, 2.0, 7).unwrap(), vec![1, 2, 4]);
    }

    #[test]
    fn widths_negligible_growth() {
        assert_eq!(bin_widths(1, 1.0 + 1e-9, 3).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn widths_reference_c_first_two_wide_bin() {
        let w = bin_widths(1, 1.00264, 400).unwrap();
        for (n, &width) in w.iter().enumerate().take(154) {
            assert_eq!(width, 1, "n={n}");
        }
        assert_eq!(w[154], 2);
    }

    #[test]
    fn widths_monotone_non_decreasing() {
        for &c in &[1.001, 1.00264, 1.02, 1.1, 1.5, 2.0] {
            let w = bin_widths(1, c, 500).unwrap();
            for pair in w.windows(2) {
                assert!(pair[1] >= pair[0], "c={c}");
            }
        }
    }

    #[test]
    fn widths_reject_non_growing_c() {
        assert!(bin_widths(1, 1.0, 10).is_err());
        assert!(bin_widths(1, 0.5, 10).is_err());
    }

    #[test]
    fn schedule_reference_coverage_and_bin_count() {
        let s = build_schedule(25.0, 1000, 6.0, 1.00264).unwrap();
        assert_eq!(s.coverage(), 241);
        // 154 unit bins, then width-2 bins over the remaining 87 coefficients.
        assert_eq!(s.num_bins(), 154 + (241usize - 154).div_ceil(2));
        // edges partition 0..241 with no gap or overlap
        assert_eq!(s.edges[0], 0);
        for w in s.edges.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert_eq!(*s.edges.last().unwrap(), 241);
    }

    #[test]
    fn schedule_same_resolution_same_edges() {
        let a = build_schedule(25.0, 1000, 6.0, 1.00264).unwrap();
        let b = build_schedule(50.0, 2000, 6.0, 1.00264).unwrap();
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn schedule_rejects_short_window() {
        assert!(build_schedule(25.0, 4, 6.0, 1.00264).is_err());
    }

    #[test]
    fn resample_identity_and_constant() {
        let s = series(vec![1.0, 2.0, 3.0], 25.0);
        let same = resample(&s, 25.0).unwrap();
        assert_eq!(same.samples, s.samples);
        let c = series(vec![4.0; 30], 30.0);
        let r = resample(&c, 25.0).unwrap();
        assert!((r.sample_rate - 25.0).abs() < 1e-12);
        for v in &r.samples {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_preserves_tone_bin() {
        // 1 Hz sinusoid, 30 fps, 10 s; after resampling to 25 fps the FFT
        // peak must stay within one coefficient of 1 Hz.
        let n = 300;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 1.0 * i as f64 / 30.0).sin())
            .collect();
        let r = resample(&series(x, 30.0), 25.0).unwrap();
        let m = r.samples.len();
        let s = fft_bluestein(&r).unwrap();
        let argmax = (1..=m / 2)
            .max_by(|&a, &b| {
                s.coefficients[a]
                    .norm()
                    .partial_cmp(&s.coefficients[b].norm())
                    .unwrap()
            })
            .unwrap();
        let peak_hz = argmax as f64 * s.resolution;
        assert!((peak_hz - 1.0).abs() <= s.resolution + 1e-12, "peak {peak_hz} Hz");
    }

    #[test]
    fn search_c_singleton_and_tie_rule() {
        assert_eq!(search_c(&[1.00264], |_| Ok(1.0)).unwrap(), 1.00264);
        let tied = search_c(&[1.005, 1.002], |_| Ok(0.8)).unwrap();
        assert_eq!(tied, 1.002);
        let best = search_c(&[1.002, 1.005], |c| Ok(if c > 1.004 { 0.9 } else { 0.5 })).unwrap();
        assert_eq!(best, 1.005);
        assert!(search_c(&[], |_| Ok(0.0)).is_err());
    }
}
