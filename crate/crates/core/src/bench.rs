//! Timing harness: fast transform vs. brute-force oracle.
//!
//! The baseline is the in-repo oracle, not any third-party implementation;
//! absolute times only make sense on the machine that produced them. Both
//! sides write into output arrays allocated once per case, so the timings
//! cover the computation and not the first-touch cost of fresh memory.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::array::{BackprojArray, Dims5, PsfArray};
use crate::error::{Error, Result};
use crate::oracle::oracle_backprojection_into;
use crate::synth::random_psf;
use crate::transform::compute_backprojection_into;

pub const CSV_HEADER: &str = "n_s,n_t,n_x,n_y,n_z,fast_s,oracle_s,speedup,verified";

/// Fraction of nonzero elements in benchmark PSFs.
const BENCH_DENSITY: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchCase {
    pub dims: Dims5,
    pub repeats: usize,
    /// Median wall time of the fast transform, seconds.
    pub fast_time: f64,
    /// Median wall time of the oracle, seconds.
    pub oracle_time: f64,
    pub speedup: f64,
    pub verified: bool,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub cases: Vec<BenchCase>,
    /// Cases aborted because the outputs differed.
    pub failures: Vec<(Dims5, String)>,
    pub threads: usize,
    pub hardware: String,
    pub repeats: usize,
}

pub fn median(mut samples: Vec<f64>) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_unstable_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

fn time<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// Times both implementations on the same input. Errors with
/// `VerificationFailure` when the outputs are not bitwise equal.
pub fn run_case(h: &PsfArray, repeats: usize) -> Result<BenchCase> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 repeats, got {repeats}")));
    }
    let mut fast = BackprojArray::zeros(h.dims());
    let mut slow = BackprojArray::zeros(h.dims());
    // warm-up, also the outputs that get compared
    compute_backprojection_into(h, &mut fast)?;
    oracle_backprojection_into(h, &mut slow)?;
    if let Some(o) = first_difference(fast.data(), slow.data()) {
        return Err(Error::VerificationFailure(format!(
            "dims {}: first difference at offset {o} ({} vs {})",
            h.dims(),
            fast.data()[o],
            slow.data()[o]
        )));
    }

    let mut fast_times = Vec::with_capacity(repeats);
    let mut oracle_times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let (r, dt) = time(|| compute_backprojection_into(h, &mut fast));
        r?;
        fast_times.push(dt.as_secs_f64());
        let (r, dt) = time(|| oracle_backprojection_into(h, &mut slow));
        r?;
        oracle_times.push(dt.as_secs_f64());
    }
    let fast_time = median(fast_times);
    let oracle_time = median(oracle_times);
    Ok(BenchCase {
        dims: h.dims(),
        repeats,
        fast_time,
        oracle_time,
        speedup: oracle_time / fast_time,
        verified: true,
    })
}

/// First offset where two slices differ bitwise.
pub fn first_difference(a: &[f64], b: &[f64]) -> Option<usize> {
    if a.len() != b.len() {
        return Some(a.len().min(b.len()));
    }
    a.iter().zip(b).position(|(x, y)| x.to_bits() != y.to_bits())
}

pub fn run_benchmark(cases: &[Dims5], repeats: usize, seed: u64) -> Result<BenchReport> {
    if repeats < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 repeats, got {repeats}")));
    }
    let mut report = BenchReport {
        cases: Vec::new(),
        failures: Vec::new(),
        threads: rayon::current_num_threads(),
        hardware: hardware_note(),
        repeats,
    };
    for (i, &dims) in cases.iter().enumerate() {
        let h = random_psf(dims, BENCH_DENSITY, seed.wrapping_add(i as u64))?;
        match run_case(&h, repeats) {
            Ok(case) => report.cases.push(case),
            Err(Error::VerificationFailure(msg)) => report.failures.push((dims, msg)),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

impl BenchReport {
    /// Machine-readable report; only verified cases are listed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in self.cases.iter().filter(|c| c.verified) {
            let [n_s, n_t, n_x, n_y, n_z] = c.dims.to_array();
            let _ = writeln!(
                out,
                "{n_s},{n_t},{n_x},{n_y},{n_z},{:.6},{:.6},{:.2},{}",
                c.fast_time, c.oracle_time, c.speedup, c.verified
            );
        }
        out
    }

    /// Aligned text table with a short header note.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "backprojection array computation, median of {} runs", self.repeats);
        let _ = writeln!(out, "baseline: in-repo brute-force oracle (simulated forward projection)");
        let _ = writeln!(out, "threads: {}; {}", self.threads, self.hardware);
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>5} {:>5} {:>5} {:>12} {:>12} {:>9} {:>9}",
            "n_s", "n_t", "n_x", "n_y", "n_z", "fast [s]", "oracle [s]", "speedup", "verified"
        );
        for c in &self.cases {
            let [n_s, n_t, n_x, n_y, n_z] = c.dims.to_array();
            let _ = writeln!(
                out,
                "{n_s:>6} {n_t:>6} {n_x:>5} {n_y:>5} {n_z:>5} {:>12.6} {:>12.6} {:>9.1} {:>9}",
                c.fast_time, c.oracle_time, c.speedup, c.verified
            );
        }
        for (dims, msg) in &self.failures {
            let _ = writeln!(out, "FAILED {dims}: {msg}");
        }
        out
    }
}

fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).and_then(|l| l.split(':').nth(1)).map(|s| s.trim().to_string()))
        .unwrap_or_else(|| "unknown cpu".to_string());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu}, {cores} logical cores")
}

/// Named size ladders.
///
/// `paper-small` holds the two smallest rectangular-grid reference sizes;
/// `paper` holds all eleven and needs several GB.
pub fn preset(name: &str) -> Option<Vec<Dims5>> {
    // (n_s = n_t, n_x, n_y); n_z is 11 throughout
    let rows: &[(usize, usize, usize)] = match name {
        "smoke" => return Some(vec![Dims5::new(9, 9, 3, 3, 1).expect("preset dims are valid")]),
        "ladder" => &[(21, 11, 11), (45, 11, 11), (89, 11, 11), (133, 11, 11), (177, 11, 11)],
        "paper-small" => &[(89, 11, 11), (91, 15, 15)],
        "paper" => &[
            (89, 11, 11),
            (177, 11, 11),
            (287, 11, 11),
            (507, 11, 11),
            (91, 15, 15),
            (121, 15, 15),
            (211, 21, 21),
            (249, 31, 31),
            (311, 31, 31),
            (307, 51, 51),
            (181, 95, 55),
        ],
        _ => return None,
    };
    Some(rows.iter().map(|&(n, x, y)| Dims5::new(n, n, x, y, 11).expect("preset dims are valid")).collect())
}

/// Bytes held at once while benchmarking `dims`: input plus two outputs.
pub fn working_set(dims: Dims5) -> usize {
    3 * dims.len() * std::mem::size_of::<f64>()
}

/// Reduces `n_z` of cases whose working set exceeds `budget` bytes. Returns
/// the adjusted cases and a note for each one that was shrunk.
pub fn fit_to_memory(cases: &[Dims5], budget: usize) -> (Vec<Dims5>, Vec<String>) {
    let mut notes = Vec::new();
    let fitted = cases
        .iter()
        .map(|&d| {
            let per_plane = working_set(d) / d.n_z();
            let max_z = (budget / per_plane.max(1)).clamp(1, d.n_z());
            if max_z < d.n_z() {
                notes.push(format!("{d}: n_z reduced to {max_z} to fit {} MiB", budget >> 20));
                d.with_n_z(max_z).expect("n_z >= 1")
            } else {
                d
            }
        })
        .collect();
    (fitted, notes)
}

/// `MemAvailable` from `/proc/meminfo`, if readable.
pub fn available_memory() -> Option<usize> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kib: usize = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

/// Parses a sizes file: one case per line, five integers
/// `n_s n_t n_x n_y n_z` separated by commas or whitespace; `#` comments.
pub fn parse_sizes(text: &str) -> Result<Vec<Dims5>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("n_s") {
            continue;
        }
        let nums: Vec<usize> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| Error::Config(format!("line {}: bad number '{t}'", n + 1))))
            .collect::<Result<_>>()?;
        let dims: [usize; 5] = nums
            .try_into()
            .map_err(|_| Error::Config(format!("line {}: expected 5 numbers", n + 1)))?;
        out.push(Dims5::from_array(dims)?);
    }
    Ok(out)
}
