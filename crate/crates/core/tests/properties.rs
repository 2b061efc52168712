use proptest::prelude::*;

use fleximo::diagnostics::moore_penrose_residuals;
use fleximo::encoder::{EncoderConfig, EncoderWeights};
use fleximo::io::{decode, encode, DType, FktTensor};
use fleximo::numeric::{dot, lstsq, pinv_default, Mat, Rng, Tensor4};
use fleximo::resize::{bilinear_resize_2d, build_resize_matrix, pi_resize_kernel, ResizeSemantics};
use fleximo::tokenizer::{patchify, ImageCHW};
use fleximo::wavegen::encode_wavelengths;

const HP: ResizeSemantics = ResizeSemantics::HalfPixel;

fn side() -> impl Strategy<Value = usize> {
    1usize..=9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_rows_are_convex_weights(h in side(), w in side(), h2 in side(), w2 in side()) {
        let m = build_resize_matrix((h, w), (h2, w2), HP).unwrap().into_matrix();
        prop_assert_eq!(m.shape(), (h2 * w2, h * w));
        for i in 0..m.rows() {
            let row = m.row(i);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn operator_matches_direct_resize(h in side(), w in side(), h2 in side(), w2 in side(), seed in any::<u64>()) {
        let x = Rng::new(seed).normal_mat(h, w);
        let op = build_resize_matrix((h, w), (h2, w2), HP).unwrap();
        let direct = bilinear_resize_2d(&x, (h2, w2)).unwrap();
        prop_assert!(op.apply(&x).unwrap().max_abs_diff(&direct) <= 1e-12);
    }

    #[test]
    fn matmul_is_associative(a in 1usize..7, b in 1usize..7, c in 1usize..7, d in 1usize..7, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let (x, y, z) = (rng.normal_mat(a, b), rng.normal_mat(b, c), rng.normal_mat(c, d));
        let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
        let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-12 * (1.0 + left.max_abs()));
    }

    #[test]
    fn pinv_satisfies_penrose_conditions(r in 1usize..10, c in 1usize..10, rank in 1usize..10, seed in any::<u64>()) {
        // Product of thin factors gives rank min(r, c, rank).
        let mut rng = Rng::new(seed);
        let m = rng.normal_mat(r, rank).matmul(&rng.normal_mat(rank, c)).unwrap();
        let p = pinv_default(&m).unwrap();
        let res = moore_penrose_residuals(&m, &p).unwrap();
        let scale = 1.0 + m.max_abs() * p.max_abs();
        prop_assert!(res.max() <= 1e-9 * scale, "residuals {:?}", res.as_array());
    }

    #[test]
    fn pinv_agrees_with_lstsq(r in 1usize..9, c in 1usize..9, seed in any::<u64>()) {
        let m = Rng::new(seed).normal_mat(r, c);
        let via_lstsq = lstsq(&m, &Mat::identity(r)).unwrap();
        let p = pinv_default(&m).unwrap();
        prop_assert!(p.max_abs_diff(&via_lstsq) <= 1e-8 * (1.0 + p.max_abs()));
    }

    #[test]
    fn pi_upsampling_preserves_tokens(p in 1usize..6, extra in 0usize..6, seed in any::<u64>()) {
        let q = p + extra;
        let mut rng = Rng::new(seed);
        let k = Tensor4::new([2, 2, p, p], rng.normal_vec(4 * p * p)).unwrap();
        let k_hat = pi_resize_kernel(&k, q, HP).unwrap();
        for (omega, omega_hat) in k.slices().zip(k_hat.slices()) {
            let x = rng.normal_mat(p, p);
            let mx = bilinear_resize_2d(&x, (q, q)).unwrap();
            let a = dot(x.as_slice(), omega);
            let b = dot(mx.as_slice(), omega_hat);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn pi_upsampling_then_transpose_returns_kernel(p in 1usize..6, extra in 0usize..6, seed in any::<u64>()) {
        let q = p + extra;
        let k = Tensor4::new([1, 3, p, p], Rng::new(seed).normal_vec(3 * p * p)).unwrap();
        let k_hat = pi_resize_kernel(&k, q, HP).unwrap();
        let mt = build_resize_matrix((p, p), (q, q), HP).unwrap().into_matrix().transpose();
        for (omega, omega_hat) in k.slices().zip(k_hat.slices()) {
            let back = mt.matvec(omega_hat).unwrap();
            for (a, b) in back.iter().zip(omega) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn patchify_is_linear_in_image(gh in 1usize..4, gw in 1usize..4, p in 1usize..5, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let (h, w) = (gh * p, gw * p);
        let x = ImageCHW::new(2, h, w, rng.normal_vec(2 * h * w)).unwrap();
        let y = ImageCHW::new(2, h, w, rng.normal_vec(2 * h * w)).unwrap();
        let k = Tensor4::new([3, 2, p, p], rng.normal_vec(6 * p * p)).unwrap();
        let zero = [0.0; 3];
        let lhs = patchify(&x.axpby(a, &y, b).unwrap(), &k, &zero).unwrap().tokens;
        let tx = patchify(&x, &k, &zero).unwrap().tokens;
        let ty = patchify(&y, &k, &zero).unwrap().tokens;
        let rhs = tx.scale(a).add(&ty.scale(b)).unwrap();
        prop_assert_eq!(lhs.rows(), gh * gw);
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn fkt_round_trip_is_bit_exact(dims in prop::collection::vec(1usize..5, 1..=4), seed in any::<u64>()) {
        let n = dims.iter().product();
        let data = Rng::new(seed).normal_vec(n);
        let t = FktTensor::new(dims, DType::F64, data).unwrap();
        let back = decode(&encode(&t).unwrap()).unwrap();
        prop_assert_eq!(&back.dims, &t.dims);
        prop_assert!(back.data.iter().zip(&t.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn fkt_rejects_any_truncation(cut in 1usize..40, seed in any::<u64>()) {
        let t = FktTensor::new(vec![2, 3], DType::F64, Rng::new(seed).normal_vec(6)).unwrap();
        let bytes = encode(&t).unwrap();
        prop_assert!(decode(&bytes[..bytes.len() - cut.min(bytes.len())]).is_err());
    }

    #[test]
    fn wavelength_rows_have_unit_pair_norms(lambda in 0.3f64..15.0, half in 1usize..16) {
        let e = encode_wavelengths(&[lambda], 2 * half).unwrap();
        // Each (sin, cos) pair sits on the unit circle.
        let sq: f64 = e.row(0).iter().map(|v| v * v).sum();
        prop_assert!((sq - half as f64).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn encoder_is_permutation_equivariant(n in 1usize..12, seed in any::<u64>()) {
        let w = EncoderWeights::init(&EncoderConfig { depth: 2, heads: 2, dim: 8, seed, ..Default::default() }).unwrap();
        let mut rng = Rng::new(seed ^ 0x5eed);
        let x = rng.normal_mat(n, 8);
        let perm = rng.permutation(n);
        let a = w.forward_mat(&x.select_rows(&perm)).unwrap();
        let b = w.forward_mat(&x).unwrap().select_rows(&perm);
        prop_assert!(a.max_abs_diff(&b) <= 1e-9);
    }
}
