use lfbp_core::io::{decode_lf5, encode_lf5};
use lfbp_core::projector::dot;
use lfbp_core::{
    backproject_adjoint, backproject_via_ht, compute_backprojection, compute_psf_from_backprojection, forward_project,
    oracle_backprojection, random_psf, Dims5, Dtype, Image, Lf5, LoadOptions, PsfArray, Volume,
};
use proptest::prelude::*;

fn odd(max: usize) -> impl Strategy<Value = usize> {
    (0..=max / 2).prop_map(|k| 2 * k + 1)
}

/// Pattern sizes from `pix` given a cell size; patterns cover the cell.
fn dims_with(pix: fn(usize) -> BoxedStrategy<usize>) -> impl Strategy<Value = Dims5> {
    (odd(7), odd(7), 1usize..=3).prop_flat_map(move |(n_x, n_y, n_z)| {
        (pix(n_x), pix(n_y)).prop_map(move |(n_s, n_t)| Dims5::new(n_s, n_t, n_x, n_y, n_z).unwrap())
    })
}

fn any_dims() -> impl Strategy<Value = Dims5> {
    dims_with(|n| (n..=13).boxed())
}

fn odd_dims() -> impl Strategy<Value = Dims5> {
    dims_with(|n| (n / 2..=6).prop_map(|k| 2 * k + 1).boxed())
}

fn psf(dims: impl Strategy<Value = Dims5>) -> impl Strategy<Value = PsfArray> {
    (dims, 0.05f64..=1.0, any::<u64>()).prop_map(|(d, p, seed)| random_psf(d, p, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_transform_matches_oracle(h in psf(any_dims())) {
        let fast = compute_backprojection(&h);
        let slow = oracle_backprojection(&h);
        prop_assert!(fast.data().iter().zip(slow.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn inverse_restores_odd_arrays(h in psf(odd_dims())) {
        let back = compute_psf_from_backprojection(&compute_backprojection(&h)).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn transform_is_linear(a in psf(odd_dims()), seed in any::<u64>(), c in 0.0f64..4.0) {
        let b = random_psf(a.dims(), 0.5, seed).unwrap();
        let sum = PsfArray::from_vec(a.dims(), a.data().iter().zip(b.data()).map(|(x, y)| x + c * y).collect()).unwrap();
        let (ta, tb, ts) = (compute_backprojection(&a), compute_backprojection(&b), compute_backprojection(&sum));
        for ((x, y), s) in ta.data().iter().zip(tb.data()).zip(ts.data()) {
            prop_assert_eq!((x + c * y).to_bits(), s.to_bits());
        }
    }

    #[test]
    fn depth_planes_are_independent(h in psf(any_dims())) {
        let full = compute_backprojection(&h);
        for z in 1..=h.dims().n_z() {
            let alone = compute_backprojection(&h.z_slab(z, z).unwrap());
            prop_assert_eq!(alone.data(), full.plane(z).unwrap());
        }
    }

    #[test]
    fn scaling_commutes(h in psf(any_dims()), c in 0.0f64..10.0) {
        let scaled_first = compute_backprojection(&h.scaled(c).unwrap());
        let scaled_after = compute_backprojection(&h).scaled(c).unwrap();
        prop_assert_eq!(scaled_first, scaled_after);
    }

    #[test]
    fn lf5_round_trip(h in psf(any_dims()), f32_file in any::<bool>()) {
        let dtype = if f32_file { Dtype::F32 } else { Dtype::F64 };
        let values: Vec<f64> = if f32_file { h.data().iter().map(|&v| v as f32 as f64).collect() } else { h.data().to_vec() };
        let file = Lf5 { dtype, shape: h.dims().to_array(), data: values };
        let back = decode_lf5(&encode_lf5(&file).unwrap(), LoadOptions::default()).unwrap();
        prop_assert_eq!(back.shape, file.shape);
        prop_assert!(back.data.iter().zip(&file.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprojection_is_the_adjoint(h in psf(odd_dims()), n_s in 5usize..20, n_t in 5usize..20, seed in any::<u64>()) {
        let n_z = h.dims().n_z();
        let g = Volume::from_vec(n_s, n_t, n_z, random_psf(Dims5::new(n_s, n_t, 1, 1, n_z).unwrap(), 1.0, seed).unwrap().into_vec()).unwrap();
        let f = Image::from_vec(n_s, n_t, random_psf(Dims5::new(n_s, n_t, 1, 1, 1).unwrap(), 1.0, seed ^ 1).unwrap().into_vec()).unwrap();
        let lhs = dot(forward_project(&h, &g).unwrap().data(), f.data());
        let via_ht = dot(g.data(), backproject_via_ht(&compute_backprojection(&h), &f).unwrap().data());
        let direct = dot(g.data(), backproject_adjoint(&h, &f).unwrap().data());
        let scale = lhs.abs().max(1e-300);
        prop_assert!((lhs - via_ht).abs() / scale < 1e-10);
        prop_assert!((lhs - direct).abs() / scale < 1e-10);
    }
}
