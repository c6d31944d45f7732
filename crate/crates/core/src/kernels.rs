//! Valid convolution, non-overlapping max-pooling and the logistic function.

use crate::error::{dim_err, Result};
use crate::tensor::{axpy, Matrix, Shape3, Tensor3};

/// Largest double below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, evaluated on the branch that cannot overflow and kept
/// strictly inside (0, 1).
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

pub fn sigmoid_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&z| sigmoid(z)).collect()
}

pub fn sigmoid_in_place(v: &mut [f64]) {
    for z in v {
        *z = sigmoid(*z);
    }
}

/// Output extent of a valid convolution along every axis.
pub fn valid_shape(input: Shape3, filter: Shape3) -> Result<Shape3> {
    let axes = [(input.0, filter.0, "depth"), (input.1, filter.1, "height"), (input.2, filter.2, "width")];
    for (m, r, axis) in axes {
        if r > m {
            return Err(dim_err(format!(
                "filter {filter:?} larger than input {input:?} along {axis}"
            )));
        }
    }
    Ok((input.0 - filter.0 + 1, input.1 - filter.1 + 1, input.2 - filter.2 + 1))
}

/// True 3D convolution with no padding:
///
/// `out(i,j,k) = sum_{u,v,w} W(r-1-u, s-1-v, t-1-w) * x(i+u, j+v, k+w)`
///
/// The filter is reversed along all three axes once, then each output row is
/// accumulated as a sequence of contiguous axpy updates over the width axis.
pub fn convolve3d_valid(x: &Tensor3, w: &Tensor3) -> Result<Tensor3> {
    let (od, oh, ow) = valid_shape(x.shape(), w.shape())?;
    let (r, s, t) = w.shape();
    let flipped: Vec<f64> = w.data().iter().rev().copied().collect();
    let (_, xh, xw) = x.shape();
    let xd = x.data();
    let mut out = vec![0.0; od * oh * ow];
    for i in 0..od {
        for j in 0..oh {
            let row = &mut out[(i * oh + j) * ow..(i * oh + j + 1) * ow];
            for u in 0..r {
                for v in 0..s {
                    let base = ((i + u) * xh + (j + v)) * xw;
                    let taps = &flipped[(u * s + v) * t..(u * s + v + 1) * t];
                    for (wi, &coef) in taps.iter().enumerate() {
                        axpy(coef, &xd[base + wi..base + wi + ow], row);
                    }
                }
            }
        }
    }
    Tensor3::new((od, oh, ow), out)
}

/// 2D analogue of [`convolve3d_valid`] on a single plane.
pub fn convolve2d_valid(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    let (oh, ow, _) = valid_shape((x.rows(), x.cols(), 1), (w.rows(), w.cols(), 1))?;
    let (s, t) = (w.rows(), w.cols());
    let flipped: Vec<f64> = w.data().iter().rev().copied().collect();
    let xw = x.cols();
    let xd = x.data();
    let mut out = vec![0.0; oh * ow];
    for j in 0..oh {
        let row = &mut out[j * ow..(j + 1) * ow];
        for v in 0..s {
            let base = (j + v) * xw;
            for (wi, &coef) in flipped[v * t..(v + 1) * t].iter().enumerate() {
                axpy(coef, &xd[base + wi..base + wi + ow], row);
            }
        }
    }
    Matrix::new(oh, ow, out)
}

/// Shape after non-overlapping pooling; partial border windows are dropped.
pub fn pooled_shape(input: Shape3, window: Shape3) -> Result<Shape3> {
    if window.0 == 0 || window.1 == 0 || window.2 == 0 {
        return Err(dim_err(format!("pool window must be positive, got {window:?}")));
    }
    let out = (input.0 / window.0, input.1 / window.1, input.2 / window.2);
    if out.0 == 0 || out.1 == 0 || out.2 == 0 {
        return Err(dim_err(format!(
            "pool window {window:?} leaves an empty output for input {input:?}"
        )));
    }
    Ok(out)
}

pub fn maxpool3d(fm: &Tensor3, window: Shape3) -> Result<Tensor3> {
    let (pd, ph, pw) = pooled_shape(fm.shape(), window)?;
    let (a, b, c) = window;
    let mut out = Vec::with_capacity(pd * ph * pw);
    for i in 0..pd {
        for j in 0..ph {
            for k in 0..pw {
                let mut best = f64::NEG_INFINITY;
                for di in 0..a {
                    for dj in 0..b {
                        let start = fm.offset(i * a + di, j * b + dj, k * c);
                        for &v in &fm.data()[start..start + c] {
                            if v > best {
                                best = v;
                            }
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Tensor3::new((pd, ph, pw), out)
}

pub fn maxpool2d(fm: &Matrix, window: (usize, usize)) -> Result<Matrix> {
    let (ph, pw, _) = pooled_shape((fm.rows(), fm.cols(), 1), (window.0, window.1, 1))?;
    let (b, c) = window;
    let mut out = Vec::with_capacity(ph * pw);
    for j in 0..ph {
        for k in 0..pw {
            let mut best = f64::NEG_INFINITY;
            for dj in 0..b {
                let row = fm.row(j * b + dj);
                for &v in &row[k * c..(k + 1) * c] {
                    if v > best {
                        best = v;
                    }
                }
            }
            out.push(best);
        }
    }
    Matrix::new(ph, pw, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random_tensor(rng: &mut Rng, shape: Shape3) -> Tensor3 {
        Tensor3::new(shape, rng.uniform(-1.0, 1.0, shape.0 * shape.1 * shape.2).unwrap()).unwrap()
    }

    // Straight transcription of the flipped-index triple sum.
    fn naive_conv3d(x: &Tensor3, w: &Tensor3) -> Tensor3 {
        let (m, p, q) = x.shape();
        let (r, s, t) = w.shape();
        Tensor3::from_fn((m - r + 1, p - s + 1, q - t + 1), |i, j, k| {
            let mut acc = 0.0;
            for u in 0..r {
                for v in 0..s {
                    for ww in 0..t {
                        acc += w.get(r - 1 - u, s - 1 - v, t - 1 - ww) * x.get(i + u, j + v, k + ww);
                    }
                }
            }
            acc
        })
        .unwrap()
    }

    fn naive_pool3d(fm: &Tensor3, win: Shape3) -> Tensor3 {
        let (d, h, w) = fm.shape();
        Tensor3::from_fn((d / win.0, h / win.1, w / win.2), |i, j, k| {
            let mut m = f64::NEG_INFINITY;
            for a in 0..win.0 {
                for b in 0..win.1 {
                    for c in 0..win.2 {
                        m = m.max(fm.get(i * win.0 + a, j * win.1 + b, k * win.2 + c));
                    }
                }
            }
            m
        })
        .unwrap()
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        let mut rng = Rng::new(11);
        for z in rng.uniform(-30.0, 30.0, 200).unwrap() {
            assert!((sigmoid(z) - (1.0 - sigmoid(-z))).abs() < 1e-15);
        }
        for z in [-1e6, -800.0, -40.0, 40.0, 800.0, 1e6] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0, "sigmoid({z}) = {s}");
        }
    }

    #[test]
    fn sigmoid_matches_extended_precision() {
        // 1/(1+exp(-z)) evaluated with mpmath at 50 significant digits.
        let cases = [
            (-12.5, 3.7266392841865614e-06),
            (-3.0, 0.04742587317756678),
            (-0.25, 0.4378234991142019),
            (0.1, 0.52497918747894),
            (1.0, 0.7310585786300049),
            (4.75, 0.991422514586288),
            (20.0, 0.9999999979388464),
        ];
        for (z, expected) in cases {
            let got = sigmoid(z);
            assert!(((got - expected) / expected).abs() < 4e-16, "z={z}: {got} vs {expected}");
        }
    }

    #[test]
    fn full_size_shapes() {
        let x = Tensor3::zeros((68, 95, 79)).unwrap();
        let w = Tensor3::zeros((5, 5, 5)).unwrap();
        let y = convolve3d_valid(&x, &w).unwrap();
        assert_eq!(y.shape(), (64, 91, 75));
        assert_eq!(maxpool3d(&y, (5, 5, 5)).unwrap().shape(), (12, 18, 15));

        let s = Matrix::zeros(95, 79).unwrap();
        let f = Matrix::zeros(11, 11).unwrap();
        let c = convolve2d_valid(&s, &f).unwrap();
        assert_eq!((c.rows(), c.cols()), (85, 69));
        let p = maxpool2d(&c, (10, 10)).unwrap();
        assert_eq!((p.rows(), p.cols()), (8, 6));
    }

    #[test]
    fn ones_convolve_to_count() {
        let x = Tensor3::filled((2, 2, 2), 1.0).unwrap();
        let y = convolve3d_valid(&x, &x).unwrap();
        assert_eq!(y.shape(), (1, 1, 1));
        assert_eq!(y.data(), &[8.0]);
    }

    #[test]
    fn oversized_filter_rejected() {
        let x = Tensor3::zeros((4, 4, 4)).unwrap();
        let w = Tensor3::zeros((2, 5, 2)).unwrap();
        assert!(matches!(convolve3d_valid(&x, &w), Err(crate::Error::Dimension(_))));
        let a = Matrix::zeros(3, 3).unwrap();
        let b = Matrix::zeros(4, 1).unwrap();
        assert!(convolve2d_valid(&a, &b).is_err());
    }

    #[test]
    fn conv3d_matches_naive_oracle() {
        let mut rng = Rng::new(2024);
        let x = random_tensor(&mut rng, (7, 7, 7));
        let w = random_tensor(&mut rng, (3, 3, 3));
        let fast = convolve3d_valid(&x, &w).unwrap();
        let slow = naive_conv3d(&x, &w);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_degenerate_window_and_oracle() {
        let mut rng = Rng::new(5);
        let x = Matrix::new(4, 3, rng.uniform(-1.0, 1.0, 12).unwrap()).unwrap();
        let w = Matrix::new(4, 3, rng.uniform(-1.0, 1.0, 12).unwrap()).unwrap();
        let y = convolve2d_valid(&x, &w).unwrap();
        let expected: f64 = x.data().iter().zip(w.data().iter().rev()).map(|(a, b)| a * b).sum();
        assert_eq!((y.rows(), y.cols()), (1, 1));
        assert!((y.get(0, 0) - expected).abs() < 1e-14);

        let x = Matrix::new(9, 9, rng.uniform(-1.0, 1.0, 81).unwrap()).unwrap();
        let w = Matrix::new(3, 4, rng.uniform(-1.0, 1.0, 12).unwrap()).unwrap();
        let y = convolve2d_valid(&x, &w).unwrap();
        for i in 0..7 {
            for j in 0..6 {
                let mut acc = 0.0;
                for u in 0..3 {
                    for v in 0..4 {
                        acc += w.get(2 - u, 3 - v) * x.get(i + u, j + v);
                    }
                }
                assert!((y.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pooling_constant_and_oracle() {
        let c = Tensor3::filled((10, 7, 9), 0.3).unwrap();
        let p = maxpool3d(&c, (3, 2, 4)).unwrap();
        assert_eq!(p.shape(), (3, 3, 2));
        assert!(p.data().iter().all(|&v| v == 0.3));

        let mut rng = Rng::new(77);
        let fm = random_tensor(&mut rng, (11, 13, 7));
        assert_eq!(maxpool3d(&fm, (3, 3, 3)).unwrap(), naive_pool3d(&fm, (3, 3, 3)));

        let m = Matrix::new(9, 9, rng.uniform(-1.0, 1.0, 81).unwrap()).unwrap();
        let p = maxpool2d(&m, (4, 2)).unwrap();
        assert_eq!((p.rows(), p.cols()), (2, 4));
        for j in 0..2 {
            for k in 0..4 {
                let mut best = f64::NEG_INFINITY;
                for a in 0..4 {
                    for b in 0..2 {
                        best = best.max(m.get(j * 4 + a, k * 2 + b));
                    }
                }
                assert_eq!(p.get(j, k), best);
            }
        }
        let flat = Matrix::new(85, 69, vec![-0.5; 85 * 69]).unwrap();
        let fp = maxpool2d(&flat, (10, 10)).unwrap();
        assert_eq!((fp.rows(), fp.cols()), (8, 6));
        assert!(fp.data().iter().all(|&v| v == -0.5));
    }

    #[test]
    fn empty_pool_output_rejected() {
        let t = Tensor3::zeros((4, 4, 4)).unwrap();
        assert!(maxpool3d(&t, (5, 1, 1)).is_err());
        assert!(maxpool3d(&t, (0, 1, 1)).is_err());
    }

    fn shapes() -> impl Strategy<Value = (Shape3, Shape3, u64)> {
        (1usize..7, 1usize..7, 1usize..7, any::<u64>()).prop_flat_map(|(d, h, w, seed)| {
            ((Just((d, h, w))), (1..=d, 1..=h, 1..=w), Just(seed))
        })
    }

    proptest! {
        #[test]
        fn shape_law_and_flip_equivalence((xs, ws, seed) in shapes()) {
            let mut rng = Rng::new(seed);
            let x = random_tensor(&mut rng, xs);
            let w = random_tensor(&mut rng, ws);
            let y = convolve3d_valid(&x, &w).unwrap();
            prop_assert_eq!(y.shape(), (xs.0 - ws.0 + 1, xs.1 - ws.1 + 1, xs.2 - ws.2 + 1));
            // cross-correlation with the reversed filter
            let (r, s, t) = ws;
            let (od, oh, ow) = y.shape();
            for i in 0..od { for j in 0..oh { for k in 0..ow {
                let mut acc = 0.0;
                for u in 0..r { for v in 0..s { for q in 0..t {
                    acc += w.get(r - 1 - u, s - 1 - v, t - 1 - q) * x.get(i + u, j + v, k + q);
                }}}
                prop_assert!((y.get(i, j, k) - acc).abs() < 1e-12);
            }}}
        }

        #[test]
        fn linear_in_filter((xs, ws, seed) in shapes(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = Rng::new(seed);
            let x = random_tensor(&mut rng, xs);
            let w1 = random_tensor(&mut rng, ws);
            let w2 = random_tensor(&mut rng, ws);
            let mix = Tensor3::new(ws, w1.data().iter().zip(w2.data()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
            let lhs = convolve3d_valid(&x, &mix).unwrap();
            let c1 = convolve3d_valid(&x, &w1).unwrap();
            let c2 = convolve3d_valid(&x, &w2).unwrap();
            for ((l, a), b) in lhs.data().iter().zip(c1.data()).zip(c2.data()) {
                prop_assert!((l - (alpha * a + beta * b)).abs() < 1e-10);
            }
        }

        #[test]
        fn pool_dominates_window(d in 1usize..9, h in 1usize..9, w in 1usize..9,
                                 a in 1usize..4, b in 1usize..4, c in 1usize..4, seed: u64) {
            prop_assume!(d >= a && h >= b && w >= c);
            let mut rng = Rng::new(seed);
            let fm = random_tensor(&mut rng, (d, h, w));
            let p = maxpool3d(&fm, (a, b, c)).unwrap();
            let (pd, ph, pw) = p.shape();
            for i in 0..pd { for j in 0..ph { for k in 0..pw {
                let m = p.get(i, j, k);
                let mut hit = false;
                for x in 0..a { for y in 0..b { for z in 0..c {
                    let v = fm.get(i * a + x, j * b + y, k * c + z);
                    prop_assert!(m >= v);
                    hit |= m == v;
                }}}
                prop_assert!(hit);
            }}}
            prop_assert_eq!(maxpool3d(&fm, (1, 1, 1)).unwrap(), fm);
        }
    }
}
