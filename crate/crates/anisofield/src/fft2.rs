//! Minimal 2D complex FFT helpers on top of rustfft, plus the zero-padded
//! autocorrelation used for covariance window tables and field synthesis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Smallest 5-smooth integer >= n; keeps mixed-radix plans fast.
pub(crate) fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    'outer: loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
        if m > usize::MAX / 2 {
            break 'outer;
        }
    }
    n
}

/// In-place 2D FFT over a row-major `rows x cols` buffer.
pub(crate) fn fft2_inplace(
    data: &mut [Complex<f64>],
    rows: usize,
    cols: usize,
    inverse: bool,
) {
    let mut planner = FftPlanner::new();
    let dir = if inverse {
        rustfft::FftDirection::Inverse
    } else {
        rustfft::FftDirection::Forward
    };
    let row_fft = planner.plan_fft(cols, dir);
    for r in data.chunks_exact_mut(cols) {
        row_fft.process(r);
    }
    let col_fft = planner.plan_fft(rows, dir);
    let mut col = vec![Complex::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        col_fft.process(&mut col);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

/// Linear (non-circular) 2D convolution of `a` (`ra x ca`) with `b`
/// (`rb x cb`) by zero-padded FFT; returns the full
/// `(ra + rb - 1) x (ca + cb - 1)` result.
pub(crate) fn convolve2(
    a: &[f64],
    ra: usize,
    ca: usize,
    b: &[f64],
    rb: usize,
    cb: usize,
) -> (Vec<f64>, usize, usize) {
    let rr = ra + rb - 1;
    let cc = ca + cb - 1;
    let pr = good_size(rr);
    let pc = good_size(cc);
    let mut fa = vec![Complex::default(); pr * pc];
    let mut fb = vec![Complex::default(); pr * pc];
    for i in 0..ra {
        for j in 0..ca {
            fa[i * pc + j] = Complex::new(a[i * ca + j], 0.0);
        }
    }
    for i in 0..rb {
        for j in 0..cb {
            fb[i * pc + j] = Complex::new(b[i * cb + j], 0.0);
        }
    }
    fft2_inplace(&mut fa, pr, pc, false);
    fft2_inplace(&mut fb, pr, pc, false);
    let scale = 1.0 / (pr * pc) as f64;
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y * scale;
    }
    fft2_inplace(&mut fa, pr, pc, true);
    let mut out = vec![0.0; rr * cc];
    for i in 0..rr {
        for j in 0..cc {
            out[i * cc + j] = fa[i * pc + j].re;
        }
    }
    (out, rr, cc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolve_matches_direct() {
        let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..6).map(|i| (i as f64 * 1.1).cos()).collect();
        let (got, rr, cc) = convolve2(&a, 3, 4, &b, 2, 3);
        assert_eq!((rr, cc), (4, 6));
        for i in 0..rr {
            for j in 0..cc {
                let mut acc = 0.0;
                for p in 0..3usize {
                    for q in 0..4usize {
                        let (bi, bj) = (i as isize - p as isize, j as isize - q as isize);
                        if bi >= 0 && bi < 2 && bj >= 0 && bj < 3 {
                            acc += a[p * 4 + q] * b[bi as usize * 3 + bj as usize];
                        }
                    }
                }
                assert!((got[i * cc + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn good_sizes_are_smooth() {
        for n in [1, 7, 100, 257, 1000] {
            let g = good_size(n);
            assert!(g >= n);
            let mut r = g;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            assert_eq!(r, 1);
        }
    }
}
