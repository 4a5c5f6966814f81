//! Holographic composition: circular correlation, circular convolution and
//! the approximate inverse.
//!
//! ```text
//! correlation   [q ⋆ a]_k = Σ_i q_i · a_{(k+i) mod d}     = F⁻¹(conj(F q) ⊙ F a)
//! convolution   [q ∗ a]_k = Σ_i q_i · a_{(k−i) mod d}     = F⁻¹(F q ⊙ F a)
//! inverse       q̃_i = q_{(−i) mod d},  so  q ⋆ a = q̃ ∗ a
//! ```
//!
//! Both operators preserve length. Correlation is not commutative and its
//! element 0 is `dot(q, a)`. Two backends are provided: an O(d²) direct
//! summation used as the reference, and an O(d log d) FFT route that
//! supports every length (rustfft handles mixed-radix and prime sizes).
//! Inputs of different lengths are rejected; use [`zero_pad`] explicitly.

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionBackend {
    DirectSum,
    #[default]
    Fft,
}

impl std::str::FromStr for CompositionBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "directsum" | "direct_sum" => Ok(Self::DirectSum),
            "fft" => Ok(Self::Fft),
            other => Err(Error::Config(format!(
                "unknown composition backend '{other}' (expected 'direct' or 'fft')"
            ))),
        }
    }
}

fn check_lengths(op: &'static str, q: &[impl Copy], a: &[impl Copy]) -> Result<usize> {
    if q.len() != a.len() {
        return Err(Error::dim(op, &[q.len()], &[a.len()]));
    }
    if q.is_empty() {
        return Err(Error::Contract(format!("{op} needs vectors of length >= 1")));
    }
    Ok(q.len())
}

pub fn circular_correlation<T: Scalar>(q: &[T], a: &[T], backend: CompositionBackend) -> Result<Vec<T>> {
    check_lengths("circular_correlation", q, a)?;
    Ok(match backend {
        CompositionBackend::DirectSum => correlate_direct(q, a),
        CompositionBackend::Fft => fft_compose(q, a, true),
    })
}

pub fn circular_convolution<T: Scalar>(q: &[T], a: &[T], backend: CompositionBackend) -> Result<Vec<T>> {
    check_lengths("circular_convolution", q, a)?;
    Ok(match backend {
        CompositionBackend::DirectSum => convolve_direct(q, a),
        CompositionBackend::Fft => fft_compose(q, a, false),
    })
}

/// `q̃_i = q_{(−i) mod d}`: element 0 stays, the rest is reversed.
pub fn approximate_inverse<T: Copy>(q: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(q.len());
    if let Some((&first, rest)) = q.split_first() {
        out.push(first);
        out.extend(rest.iter().rev().copied());
    }
    out
}

/// Gradients of `out = q ⋆ a` given `upstream = ∂E/∂out`.
///
/// `∂E/∂a = q ∗ upstream` and `∂E/∂q = upstream ⋆ a`.
pub fn correlation_backward<T: Scalar>(
    upstream: &[T],
    q: &[T],
    a: &[T],
    backend: CompositionBackend,
) -> Result<(Vec<T>, Vec<T>)> {
    check_lengths("correlation_backward", q, a)?;
    check_lengths("correlation_backward", upstream, q)?;
    let grad_q = circular_correlation(upstream, a, backend)?;
    let grad_a = circular_convolution(q, upstream, backend)?;
    Ok((grad_q, grad_a))
}

/// Appends zeros up to `len`. Never applied implicitly by the operators.
pub fn zero_pad<T: Scalar>(v: &[T], len: usize) -> Result<Vec<T>> {
    if v.len() > len {
        return Err(Error::Contract(format!(
            "cannot zero-pad a vector of length {} down to {len}",
            v.len()
        )));
    }
    let mut out = v.to_vec();
    out.resize(len, T::zero());
    Ok(out)
}

fn correlate_direct<T: Scalar>(q: &[T], a: &[T]) -> Vec<T> {
    let d = q.len();
    (0..d)
        .map(|k| {
            // i in [0, d-k) reads a[k+i]; i in [d-k, d) wraps to a[k+i-d].
            let head: T = q[..d - k].iter().zip(&a[k..]).map(|(&x, &y)| x * y).sum();
            let tail: T = q[d - k..].iter().zip(&a[..k]).map(|(&x, &y)| x * y).sum();
            head + tail
        })
        .collect()
}

fn convolve_direct<T: Scalar>(q: &[T], a: &[T]) -> Vec<T> {
    let d = q.len();
    (0..d)
        .map(|k| {
            let mut acc = T::zero();
            for (i, &qi) in q.iter().enumerate() {
                acc = acc + qi * a[(k + d - i) % d];
            }
            acc
        })
        .collect()
}

fn fft_compose<T: Scalar>(q: &[T], a: &[T], conjugate_q: bool) -> Vec<T> {
    let d = q.len();
    let (forward, inverse) = T::fft_plans(d);
    let zero = Complex::new(T::zero(), T::zero());
    let mut scratch = vec![zero; forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
    // Both real inputs ride one complex transform: z = q + i·a, so
    // Q_k = (Z_k + conj Z_{d−k}) / 2 and A_k = (Z_k − conj Z_{d−k}) / 2i.
    let mut qf: Vec<Complex<T>> = q.iter().zip(a).map(|(&x, &y)| Complex::new(x, y)).collect();
    forward.process_with_scratch(&mut qf, &mut scratch);
    let half = T::of(0.5);
    let compose = |zk: Complex<T>, zj: Complex<T>| {
        let qk = (zk + zj.conj()) * half;
        let diff = (zk - zj.conj()) * half;
        let ak = Complex::new(diff.im, -diff.re);
        (if conjugate_q { qk.conj() } else { qk }) * ak
    };
    for k in 0..=d / 2 {
        let j = (d - k) % d;
        let (zk, zj) = (qf[k], qf[j]);
        qf[k] = compose(zk, zj);
        qf[j] = compose(zj, zk);
    }
    inverse.process_with_scratch(&mut qf, &mut scratch);
    let scale = T::one() / T::of(d as f64);
    let out: Vec<T> = qf.iter().map(|c| c.re * scale).collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let residue = qf.iter().fold(0.0f64, |m, c| m.max((c.im * scale).as_f64().abs()));
    assert!(
        residue <= T::IMAG_TOLERANCE * (1.0 + peak),
        "imaginary residue {residue:e} after inverse FFT of length {d}"
    );
    out
}

/// Row-wise composition of two `[rows × d]` buffers.
pub(crate) fn correlate_rows<T: Scalar>(q: &[T], a: &[T], d: usize, backend: CompositionBackend) -> Vec<T> {
    q.chunks(d)
        .zip(a.chunks(d))
        .flat_map(|(qr, ar)| match backend {
            CompositionBackend::DirectSum => correlate_direct(qr, ar),
            CompositionBackend::Fft => fft_compose(qr, ar, true),
        })
        .collect()
}

pub(crate) fn convolve_rows<T: Scalar>(q: &[T], a: &[T], d: usize, backend: CompositionBackend) -> Vec<T> {
    q.chunks(d)
        .zip(a.chunks(d))
        .flat_map(|(qr, ar)| match backend {
            CompositionBackend::DirectSum => convolve_direct(qr, ar),
            CompositionBackend::Fft => fft_compose(qr, ar, false),
        })
        .collect()
}
