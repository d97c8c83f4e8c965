//! Controlled strain generators.
//!
//! Four implementations of the same rotation task: start with the sequence
//! `0..window`, then for every iteration `i` drop the last element and put
//! `i + window` at the head. They end in the same state and differ only in
//! the data-structure strategy behind each step, which is what makes their
//! energy profiles comparable.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element count used by all the built-in benchmarks.
pub const DEFAULT_WINDOW: usize = 100;

/// Largest iteration budget accepted.
pub const MAX_ITER_CAP: u64 = 10_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("window must hold at least one element")]
    EmptyWindow,
    #[error("max_iter {0} exceeds the supported cap of {MAX_ITER_CAP}")]
    TooManyIterations(u64),
    #[error("checksum overflows a 64-bit signed integer; max_iter or window too large")]
    ChecksumOverflow,
    #[error("unknown workload variant `{0}` (expected vector, raw, array or list)")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Growable sequence, head insertion and tail removal through the
    /// container primitives. This is the performance-bug shape.
    Vector,
    /// Growable sequence, manual element-by-element backward shift.
    Raw,
    /// Fixed-capacity contiguous buffer, manual backward shift.
    Array,
    /// Doubly-linked ring rotated by moving the head and tail cursors.
    List,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Vector, Variant::Raw, Variant::Array, Variant::List];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vector => "vector",
            Variant::Raw => "raw",
            Variant::Array => "array",
            Variant::List => "list",
        }
    }

    /// Capitalized name used in table rows.
    pub fn title(self) -> &'static str {
        match self {
            Variant::Vector => "Vector",
            Variant::Raw => "Raw",
            Variant::Array => "Array",
            Variant::List => "List",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vector" => Ok(Variant::Vector),
            "raw" => Ok(Variant::Raw),
            "array" => Ok(Variant::Array),
            "list" => Ok(Variant::List),
            _ => Err(WorkloadError::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub variant: Variant,
    pub max_iter: u64,
    pub window: usize,
}

impl WorkloadSpec {
    pub fn new(variant: Variant, max_iter: u64) -> Self {
        Self {
            variant,
            max_iter,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.window == 0 {
            return Err(WorkloadError::EmptyWindow);
        }
        if self.max_iter > MAX_ITER_CAP {
            return Err(WorkloadError::TooManyIterations(self.max_iter));
        }
        // Largest value ever inserted must fit.
        i64::try_from(self.window)
            .ok()
            .and_then(|w| i64::try_from(self.max_iter).ok()?.checked_add(w))
            .ok_or(WorkloadError::ChecksumOverflow)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadResult {
    /// Sum of the final window elements.
    pub checksum: i64,
    /// First element after the run.
    pub head_value: i64,
    pub wall_time: Duration,
}

impl WorkloadResult {
    pub fn wall_secs(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }
}

/// Runs one benchmark variant and times it with the monotonic clock.
///
/// The checksum is always computed from the final state, so the strain loop
/// cannot be discarded by the optimizer.
pub fn run_workload(spec: &WorkloadSpec) -> Result<WorkloadResult, WorkloadError> {
    spec.validate()?;
    let start = Instant::now();
    let (checksum, head_value) = match spec.variant {
        Variant::Vector => summarize(&run_vector(spec.max_iter, spec.window))?,
        Variant::Raw => summarize(&run_raw(spec.max_iter, spec.window))?,
        Variant::Array => summarize(&run_array(spec.max_iter, spec.window))?,
        Variant::List => RotatingList::run(spec.max_iter, spec.window).summarize()?,
    };
    let wall_time = start.elapsed();
    Ok(WorkloadResult {
        checksum: black_box(checksum),
        head_value,
        wall_time,
    })
}

/// Checksum the rotation must produce, computed arithmetically.
///
/// After `m` iterations the head holds `m - 1 + window` down to `window`
/// (at most `window` of them), followed by whatever remains of the initial
/// `0..window` prefix.
pub fn expected_checksum(max_iter: u64, window: usize) -> Result<i64, WorkloadError> {
    let w = i128::from(window as u64);
    let m = i128::from(max_iter);
    let inserted = m.min(w);
    // Inserted values: m-1+w down to m-inserted+w.
    let hi = m - 1 + w;
    let lo = m - inserted + w;
    let inserted_sum = if inserted > 0 { (hi + lo) * inserted / 2 } else { 0 };
    let kept = w - inserted;
    let kept_sum = kept * (kept - 1) / 2;
    i64::try_from(inserted_sum + kept_sum).map_err(|_| WorkloadError::ChecksumOverflow)
}

fn insertion_value(i: u64, window: usize) -> i64 {
    // validate() has already bounded i + window.
    i as i64 + window as i64
}

fn initial(window: usize) -> Vec<i64> {
    (0..window as i64).collect()
}

fn summarize(values: &[i64]) -> Result<(i64, i64), WorkloadError> {
    let checksum = values
        .iter()
        .try_fold(0i64, |acc, &v| acc.checked_add(v))
        .ok_or(WorkloadError::ChecksumOverflow)?;
    Ok((checksum, values[0]))
}

fn run_vector(max_iter: u64, window: usize) -> Vec<i64> {
    let mut vec = initial(window);
    for i in 0..max_iter {
        vec.pop();
        vec.insert(0, black_box(insertion_value(i, window)));
    }
    vec
}

fn run_raw(max_iter: u64, window: usize) -> Vec<i64> {
    let mut vec = initial(window);
    for i in 0..max_iter {
        for j in (1..window).rev() {
            vec[j] = vec[j - 1];
        }
        vec[0] = black_box(insertion_value(i, window));
    }
    vec
}

fn run_array(max_iter: u64, window: usize) -> Box<[i64]> {
    let mut buf = initial(window).into_boxed_slice();
    let n = buf.len();
    for i in 0..max_iter {
        let mut j = n - 1;
        while j > 0 {
            buf[j] = buf[j - 1];
            j -= 1;
        }
        buf[0] = black_box(insertion_value(i, window));
    }
    buf
}

#[derive(Debug, Clone, Copy)]
struct Node {
    num: i64,
    prev: usize,
    next: usize,
}

/// Doubly-linked ring stored in an arena. All nodes are allocated up front;
/// a rotation rewrites the tail's value and moves the two cursors.
#[derive(Debug)]
struct RotatingList {
    nodes: Vec<Node>,
    first: usize,
    last: usize,
}

impl RotatingList {
    fn new(window: usize) -> Self {
        let nodes = (0..window)
            .map(|i| Node {
                num: i as i64,
                prev: (i + window - 1) % window,
                next: (i + 1) % window,
            })
            .collect();
        Self {
            nodes,
            first: 0,
            last: window - 1,
        }
    }

    fn run(max_iter: u64, window: usize) -> Self {
        let mut list = Self::new(window);
        // Cursors live in locals during the loop; going through `self`
        // would put a store/reload on the dependency chain.
        let (mut first, mut last) = (list.first, list.last);
        let nodes = &mut list.nodes;
        for i in 0..max_iter {
            nodes[last].num = black_box(insertion_value(i, window));
            first = last;
            last = nodes[last].prev;
        }
        list.first = first;
        list.last = last;
        list
    }

    fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        let mut cursor = self.first;
        (0..self.nodes.len()).map(move |_| {
            let node = self.nodes[cursor];
            cursor = node.next;
            node.num
        })
    }

    fn summarize(&self) -> Result<(i64, i64), WorkloadError> {
        let checksum = self
            .iter()
            .try_fold(0i64, |acc, v| acc.checked_add(v))
            .ok_or(WorkloadError::ChecksumOverflow)?;
        Ok((checksum, self.nodes[self.first].num))
    }
}

/// Independent correctness oracle: a plain double-ended queue driven
/// step by step, nothing shared with the benchmark code paths.
pub fn oracle_rotate(max_iter: u64, window: usize) -> Result<i64, WorkloadError> {
    if window == 0 {
        return Err(WorkloadError::EmptyWindow);
    }
    let mut ring: std::collections::VecDeque<i128> = (0..window as i128).collect();
    for i in 0..max_iter {
        ring.pop_back();
        ring.push_front(i as i128 + window as i128);
    }
    i64::try_from(ring.iter().sum::<i128>()).map_err(|_| WorkloadError::ChecksumOverflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn final_state(variant: Variant, max_iter: u64, window: usize) -> Vec<i64> {
        match variant {
            Variant::Vector => run_vector(max_iter, window),
            Variant::Raw => run_raw(max_iter, window),
            Variant::Array => run_array(max_iter, window).into_vec(),
            Variant::List => RotatingList::run(max_iter, window).iter().collect(),
        }
    }

    #[test]
    fn zero_iterations_keeps_initial_sequence() {
        let r = run_workload(&WorkloadSpec::new(Variant::Array, 0)).unwrap();
        assert_eq!(r.checksum, 4950);
        assert_eq!(r.head_value, 0);
    }

    #[test]
    fn list_thousand_iterations() {
        let r = run_workload(&WorkloadSpec::new(Variant::List, 1000)).unwrap();
        assert_eq!(r.checksum, 104_950);
        assert_eq!(r.head_value, 1099);
        assert_eq!(r.checksum, oracle_rotate(1000, 100).unwrap());
    }

    #[test]
    fn partial_overwrite_after_fifty_iterations() {
        // 149..=100 followed by 0..=49
        let want: Vec<i64> = (100..150).rev().chain(0..50).collect();
        for v in Variant::ALL {
            assert_eq!(final_state(v, 50, 100), want, "{v}");
        }
        let sum: i64 = want.iter().sum();
        assert_eq!(oracle_rotate(50, 100).unwrap(), sum);
        let r = run_workload(&WorkloadSpec::new(Variant::Vector, 50)).unwrap();
        assert_eq!(r.checksum, sum);
        assert_eq!(r.head_value, 149);
    }

    #[test]
    fn oracle_small_cases() {
        assert_eq!(oracle_rotate(0, 100).unwrap(), 4950);
        // 99 insertions 198..=100 plus the surviving initial head 0.
        assert_eq!(oracle_rotate(99, 100).unwrap(), (100..=198).sum::<i64>());
        assert_eq!(oracle_rotate(99, 100).unwrap(), 14_751);
        assert_eq!(oracle_rotate(100, 100).unwrap(), (100..=199).sum::<i64>());
        assert_eq!(oracle_rotate(3, 1).unwrap(), 3);
        assert_eq!(oracle_rotate(0, 1).unwrap(), 0);
    }

    #[test]
    fn oracle_million_matches_closed_form() {
        assert_eq!(oracle_rotate(1_000_000, 100).unwrap(), 100 * 1_000_000 + 4950);
    }

    #[test]
    fn expected_checksum_agrees_with_oracle() {
        for window in [1usize, 2, 3, 7, 100] {
            for m in 0..250u64 {
                assert_eq!(
                    expected_checksum(m, window).unwrap(),
                    oracle_rotate(m, window).unwrap(),
                    "m={m} window={window}"
                );
            }
        }
    }

    #[test]
    fn variants_match_at_hundred_thousand() {
        let want = oracle_rotate(100_000, 100).unwrap();
        for v in Variant::ALL {
            let r = run_workload(&WorkloadSpec::new(v, 100_000)).unwrap();
            assert_eq!(r.checksum, want, "{v}");
            assert_eq!(r.head_value, 100_099, "{v}");
        }
    }

    #[test]
    fn empty_window_rejected() {
        let spec = WorkloadSpec::new(Variant::Raw, 10).with_window(0);
        assert_eq!(run_workload(&spec), Err(WorkloadError::EmptyWindow));
        assert_eq!(oracle_rotate(1, 0), Err(WorkloadError::EmptyWindow));
    }

    #[test]
    fn iteration_cap_enforced() {
        let spec = WorkloadSpec::new(Variant::List, MAX_ITER_CAP + 1);
        assert_eq!(
            run_workload(&spec),
            Err(WorkloadError::TooManyIterations(MAX_ITER_CAP + 1))
        );
    }

    #[test]
    fn checksum_overflow_reported() {
        assert_eq!(
            summarize(&[i64::MAX, 1]),
            Err(WorkloadError::ChecksumOverflow)
        );
        // 2^40 elements near 10^10 each would not fit in 64 bits.
        assert_eq!(
            expected_checksum(MAX_ITER_CAP, 1 << 40),
            Err(WorkloadError::ChecksumOverflow)
        );
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(v.title().parse::<Variant>().unwrap(), v);
        }
        assert!("deque".parse::<Variant>().is_err());
    }
}
