//! Multi-dimensional FFT over row-major storage, one axis at a time.
//!
//! Both directions are scaled by `1/sqrt(N_total)`, so the transform is
//! unitary on `C^{N_total}`. With this convention the physical `L^2`
//! quadrature `h^d * sum |f_j|^2` equals `h^d * sum |F_k|^2`.

use num_complex::Complex64;

use super::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

pub(crate) fn transform_in_place(grid: &Grid, data: &mut [Complex64], dir: Direction) {
    debug_assert_eq!(data.len(), grid.len());
    let mut buffer: Vec<Complex64> = Vec::new();
    let mut scratch: Vec<Complex64> = Vec::new();

    for plan in grid.plans() {
        let fft = match dir {
            Direction::Forward => &plan.forward,
            Direction::Inverse => &plan.inverse,
        };
        let need = fft.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::default());
        }
        if plan.stride == 1 {
            fft.process_with_scratch(data, &mut scratch[..need]);
            continue;
        }
        // Transpose each (n x stride) block so the axis becomes contiguous.
        let n = plan.n;
        let s = plan.stride;
        let block = n * s;
        if buffer.len() < block {
            buffer.resize(block, Complex64::default());
        }
        for chunk in data.chunks_exact_mut(block) {
            for j in 0..n {
                let row = &chunk[j * s..(j + 1) * s];
                for (c, &v) in row.iter().enumerate() {
                    buffer[c * n + j] = v;
                }
            }
            fft.process_with_scratch(&mut buffer[..block], &mut scratch[..need]);
            for j in 0..n {
                let row = &mut chunk[j * s..(j + 1) * s];
                for (c, v) in row.iter_mut().enumerate() {
                    *v = buffer[c * n + j];
                }
            }
        }
    }

    let scale = 1.0 / (grid.len() as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}
