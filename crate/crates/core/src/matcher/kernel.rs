//! Inner-product kernels over `f32` embeddings.
//!
//! Every kernel accumulates in eight interleaved lanes and reduces them in
//! one fixed order, so [`dot`] and [`dot4`] agree bit for bit and scores do
//! not depend on which kernel or instruction set produced them.

const LANES: usize = 8;

#[inline(always)]
fn reduce(acc: [f32; LANES], tail: f32) -> f32 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline(always)]
fn dot_generic(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce(acc, tail)
}

#[inline(always)]
fn dot4_generic(probes: [&[f32]; 4], row: &[f32]) -> [f32; 4] {
    let mut acc = [[0.0f32; LANES]; 4];
    let n = row.len() / LANES * LANES;
    let mut i = 0;
    while i < n {
        let r = &row[i..i + LANES];
        for (p, a) in probes.iter().zip(acc.iter_mut()) {
            let q = &p[i..i + LANES];
            for l in 0..LANES {
                a[l] += q[l] * r[l];
            }
        }
        i += LANES;
    }
    let mut out = [0.0f32; 4];
    for ((o, p), a) in out.iter_mut().zip(probes.iter()).zip(acc) {
        let mut tail = 0.0f32;
        for (x, y) in p[n..].iter().zip(&row[n..]) {
            tail += x * y;
        }
        *o = reduce(a, tail);
    }
    out
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f32], b: &[f32]) -> f32 {
    dot_generic(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot4_avx2(probes: [&[f32]; 4], row: &[f32]) -> [f32; 4] {
    dot4_generic(probes, row)
}

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    use std::sync::OnceLock;
    static AVX2: OnceLock<bool> = OnceLock::new();
    *AVX2.get_or_init(|| is_x86_feature_detected!("avx2"))
}

/// Inner product of two equal-length slices.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked at runtime above.
        return unsafe { dot_avx2(a, b) };
    }
    dot_generic(a, b)
}

/// Four probes against one gallery row; each result equals `dot(probe, row)`.
#[inline]
pub fn dot4(probes: [&[f32]; 4], row: &[f32]) -> [f32; 4] {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked at runtime above.
        return unsafe { dot4_avx2(probes, row) };
    }
    dot4_generic(probes, row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernels_agree_bitwise_and_approximate_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dim in [1, 7, 8, 31, 128, 384, 385] {
            let v: Vec<Vec<f32>> = (0..5).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let four = dot4([&v[0], &v[1], &v[2], &v[3]], &v[4]);
            for p in 0..4 {
                assert_eq!(four[p].to_bits(), dot(&v[p], &v[4]).to_bits());
                assert_eq!(dot_generic(&v[p], &v[4]).to_bits(), dot(&v[p], &v[4]).to_bits());
                let exact: f64 = v[p].iter().zip(&v[4]).map(|(&a, &b)| a as f64 * b as f64).sum();
                assert!((four[p] as f64 - exact).abs() < 1e-4);
            }
        }
    }
}
