//! Adaptive Gauss-Kronrod (7/15) integration on finite intervals and on `[0, ∞)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 20_000 }
    }
}

fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive integration over `[a, b]`, bisecting the piece with the largest error.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: QuadOptions) -> QuadResult {
    let (v, e) = kronrod15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let (mut total, mut total_err) = (v, e);
    let mut count = 1;
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) && count < opts.max_intervals {
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
        count += 1;
    }
    // re-sum to shed the drift of the running totals
    let value = heap.iter().map(|p| p.value).sum();
    let abs_error = heap.iter().map(|p| p.err).sum();
    QuadResult { value, abs_error, intervals: count }
}

/// `∫_0^∞ f`, split at `split` with the tail mapped through `q = split / x`.
pub fn integrate_half_line(f: impl Fn(f64) -> f64, split: f64, opts: QuadOptions) -> QuadResult {
    let head = integrate(&f, 0.0, split, opts);
    let tail = integrate(
        |x: f64| {
            let q = split / x;
            let fq = f(q);
            if fq == 0.0 || !q.is_finite() {
                0.0
            } else {
                fq * split / (x * x)
            }
        },
        0.0,
        1.0,
        opts,
    );
    QuadResult {
        value: head.value + tail.value,
        abs_error: head.abs_error + tail.abs_error,
        intervals: head.intervals + tail.intervals,
    }
}
