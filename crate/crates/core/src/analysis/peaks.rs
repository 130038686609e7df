//! Prominence-based peak picking.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    /// Height above the higher of the two surrounding minima.
    pub prominence: f64,
    /// Full width at half prominence, in samples (linearly interpolated).
    pub width: f64,
}

/// Local maxima whose prominence is at least `min_prominence`, ordered by
/// descending prominence and then by descending height.
///
/// A flat top counts once, at its first sample.
pub fn find_peaks(values: &[f64], min_prominence: f64) -> Vec<Peak> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let floor = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        let v = values[i];
        if v > values[i - 1] && v - floor >= min_prominence {
            let mut j = i;
            while j + 1 < n && values[j + 1] == v {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < v {
                if let Some(p) = measure(values, i, j) {
                    if p.prominence >= min_prominence {
                        peaks.push(p);
                    }
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| {
        b.prominence
            .total_cmp(&a.prominence)
            .then(b.height.total_cmp(&a.height))
            .then(a.index.cmp(&b.index))
    });
    peaks
}

fn measure(values: &[f64], start: usize, end: usize) -> Option<Peak> {
    let v = values[start];
    let mut left_min = v;
    let mut k = start;
    while k > 0 {
        k -= 1;
        if values[k] > v {
            break;
        }
        left_min = left_min.min(values[k]);
    }
    let mut right_min = v;
    let mut k = end;
    while k + 1 < values.len() {
        k += 1;
        if values[k] > v {
            break;
        }
        right_min = right_min.min(values[k]);
    }
    let base = left_min.max(right_min);
    let prominence = v - base;
    if !(prominence > 0.0) {
        return None;
    }
    let half = v - 0.5 * prominence;

    let mut k = start;
    while k > 0 && values[k - 1] > half {
        k -= 1;
    }
    let l = if k > 0 {
        (k - 1) as f64 + (half - values[k - 1]) / (values[k] - values[k - 1])
    } else {
        0.0
    };
    let mut k = end;
    while k + 1 < values.len() && values[k + 1] > half {
        k += 1;
    }
    let r = if k + 1 < values.len() {
        k as f64 + (values[k] - half) / (values[k] - values[k + 1])
    } else {
        k as f64
    };

    Some(Peak {
        index: start,
        height: v,
        prominence,
        width: r - l,
    })
}
