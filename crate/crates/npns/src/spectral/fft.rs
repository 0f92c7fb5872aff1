//! Thin 2D FFT layer over rustfft with per-thread plan caching.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((n, forward))
            .or_insert_with(|| {
                planner.plan_fft(
                    n,
                    if forward {
                        FftDirection::Forward
                    } else {
                        FftDirection::Inverse
                    },
                )
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], n: usize) {
    for row in 0..n {
        for col in (row + 1)..n {
            data.swap(row * n + col, col * n + row);
        }
    }
}

/// In-place 2D FFT over an `n x n` row-major buffer. `forward` uses the
/// `exp(-ikx)` kernel; no normalization is applied in either direction.
pub fn fft2(data: &mut [Complex64], n: usize, forward: bool) {
    debug_assert_eq!(data.len(), n * n);
    let fft = plan(n, forward);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(data, n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(data, n);
}
