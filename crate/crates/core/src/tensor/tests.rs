use super::*;
use crate::error::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f32]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn tensor_rejects_bad_shapes() {
    assert!(Tensor::new(vec![2, 0], vec![]).is_err());
    assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
}

#[test]
fn linear_identity_and_sum() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2], &[1.0, 2.0]));
    let w = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = tape.constant(t(&[2], &[0.0, 0.0]));
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

    let x = tape.constant(t(&[2], &[1.0, 1.0]));
    let w = tape.constant(t(&[1, 2], &[1.0, 1.0]));
    let b = tape.constant(t(&[1], &[1.0]));
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0]);
}

#[test]
fn linear_names_the_axis() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[4, 3]));
    let w = tape.constant(Tensor::zeros(&[2, 5]));
    let b = tape.constant(Tensor::zeros(&[2]));
    match tape.linear(x, w, b) {
        Err(Error::Dimension { op, detail }) => {
            assert_eq!(op, "linear");
            assert!(detail.contains("axis 1"), "{detail}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn depthwise_delta_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::new();
    let xv = Tensor::uniform(&[5, 4, 3], 1.0, &mut rng);
    let mut k = Tensor::zeros(&[3, 3, 3]);
    k.data_mut()[4 * 3..5 * 3].fill(1.0);
    let x = tape.constant(xv.clone());
    let k = tape.constant(k);
    let b = tape.constant(Tensor::zeros(&[3]));
    let y = tape.depthwise_conv2d(x, k, b).unwrap();
    assert_eq!(tape.value(y), &xv);
}

#[test]
fn depthwise_ones_counts_neighbours() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[4, 4, 1], 1.0));
    let k = tape.constant(Tensor::full(&[3, 3, 1], 1.0));
    let b = tape.constant(Tensor::zeros(&[1]));
    let y = tape.depthwise_conv2d(x, k, b).unwrap();
    let v = tape.value(y).data();
    assert_eq!(v[0], 4.0);
    assert_eq!(v[3], 4.0);
    assert_eq!(v[15], 4.0);
    assert_eq!(v[5], 9.0);
    assert_eq!(v[10], 9.0);
    assert_eq!(v[1], 6.0);
}

#[test]
fn even_kernel_is_a_config_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[4, 4, 1]));
    let k = tape.constant(Tensor::zeros(&[2, 2, 1]));
    let b = tape.constant(Tensor::zeros(&[1]));
    assert!(matches!(tape.depthwise_conv2d(x, k, b), Err(Error::Config(_))));
}

#[test]
fn layer_norm_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[3], &[1.0, 1.0, 1.0]));
    let g = tape.constant(Tensor::full(&[3], 1.0));
    let b = tape.constant(Tensor::zeros(&[3]));
    let y = tape.layer_norm(x, g, b, 1e-6).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);

    let x = tape.constant(t(&[2], &[-1.0, 1.0]));
    let g = tape.constant(t(&[2], &[2.0, 2.0]));
    let b = tape.constant(t(&[2], &[1.0, 1.0]));
    let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
    let v = tape.value(y).data();
    assert!((v[0] + 1.0).abs() < 1e-6 && (v[1] - 3.0).abs() < 1e-6, "{v:?}");
}

#[test]
fn gelu_fixed_points() {
    assert_eq!(gelu_scalar(0.0), 0.0);
    assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-4);
    assert!(gelu_scalar(-10.0).abs() < 1e-4);
}

#[test]
fn upsample_identity_and_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let xv = Tensor::uniform(&[3, 5, 2], 1.0, &mut rng);
    let x = tape.constant(xv.clone());
    let y = tape.bilinear_upsample(x, 1).unwrap();
    assert_eq!(tape.value(y), &xv);
    let c = tape.constant(Tensor::full(&[3, 2, 2], 0.37));
    for s in 1..5 {
        let y = tape.bilinear_upsample(c, s).unwrap();
        assert_eq!(tape.value(y).shape(), &[3 * s, 2 * s, 2]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.37));
    }
    assert!(matches!(tape.bilinear_upsample(c, 0), Err(Error::Config(_))));
}

#[test]
fn upsample_matches_per_pixel_interpolation() {
    let src = [0.0f32, 1.0, 2.0, 4.0];
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2, 2, 1], &src));
    let y = tape.bilinear_upsample(x, 2).unwrap();
    let out = tape.value(y).data();
    // align-corners=false: source coordinate (o + 0.5) / 2 - 0.5, clamped.
    let coord = |o: usize| ((o as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 1.0);
    for oy in 0..4 {
        for ox in 0..4 {
            let (sy, sx) = (coord(oy), coord(ox));
            let at = |r: usize, c: usize| src[r * 2 + c] as f64;
            let top = at(0, 0) * (1.0 - sx) + at(0, 1) * sx;
            let bot = at(1, 0) * (1.0 - sx) + at(1, 1) * sx;
            let expected = top * (1.0 - sy) + bot * sy;
            assert_eq!(out[oy * 4 + ox] as f64, expected, "({oy}, {ox})");
        }
    }
}

#[test]
fn mse_examples() {
    let mut tape = Tape::new();
    let p = tape.param(t(&[2], &[1.0, 1.0]));
    let q = tape.constant(t(&[2], &[0.0, 0.0]));
    let l = tape.mse_loss(p, q).unwrap();
    assert_eq!(tape.value(l).data(), &[1.0]);
    tape.backward(l).unwrap();
    assert_eq!(tape.grad(p).unwrap(), &[1.0, 1.0]);
    let same = tape.mse_loss(p, p).unwrap();
    assert_eq!(tape.value(same).data(), &[0.0]);
    let r = tape.constant(Tensor::zeros(&[3]));
    assert!(tape.mse_loss(p, r).is_err());
}

#[test]
fn backward_of_identity_is_one() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(3.5));
    tape.backward(x).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0]);
}

#[test]
fn backward_needs_a_scalar() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2]));
    assert!(matches!(tape.backward(x), Err(Error::Usage(_))));
}

/// Gradient of `sum(linear(x_k, w))` summed over every `x_k` on one tape,
/// and each single-use gradient on its own tape.
fn shared_and_single(xs: &[Tensor], wv: &Tensor) -> (Vec<f32>, Vec<Vec<f32>>) {
    let bv = Tensor::zeros(&[wv.shape()[0]]);
    let singles = xs
        .iter()
        .map(|x| {
            let mut tape = Tape::new();
            let x = tape.constant(x.clone());
            let w = tape.param(wv.clone());
            let b = tape.constant(bv.clone());
            let y = tape.linear(x, w, b).unwrap();
            let l = tape.sum(y);
            tape.backward(l).unwrap();
            tape.grad(w).unwrap().to_vec()
        })
        .collect();
    let mut tape = Tape::new();
    let w = tape.param(wv.clone());
    let b = tape.constant(bv);
    let mut total = None;
    for x in xs {
        let x = tape.constant(x.clone());
        let y = tape.linear(x, w, b).unwrap();
        let s = tape.sum(y);
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s).unwrap(),
        });
    }
    tape.backward(total.unwrap()).unwrap();
    (tape.grad(w).unwrap().to_vec(), singles)
}

#[test]
fn shared_weight_gets_the_sum_of_uses() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let wv = Tensor::uniform(&[2, 4], 1.0, &mut rng);
    // Single-row inputs: each use contributes one product per entry, so the
    // accumulated gradient is exactly the sum of the two.
    let xs = [Tensor::uniform(&[4], 1.0, &mut rng), Tensor::uniform(&[4], 1.0, &mut rng)];
    let (shared, singles) = shared_and_single(&xs, &wv);
    for i in 0..shared.len() {
        assert_eq!(shared[i], singles[0][i] + singles[1][i], "entry {i}");
    }
    // Multi-row inputs accumulate row by row; equal up to rounding.
    let xs = [Tensor::uniform(&[3, 4], 1.0, &mut rng), Tensor::uniform(&[5, 4], 1.0, &mut rng)];
    let (shared, singles) = shared_and_single(&xs, &wv);
    for i in 0..shared.len() {
        let sum = singles[0][i] + singles[1][i];
        assert!((shared[i] - sum).abs() <= 1e-6 * sum.abs().max(1.0), "entry {i}");
    }
    assert_eq!(shared_and_single(&xs, &wv).0, shared);
}

#[test]
fn concat_and_crop_round_trip() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let b = tape.constant(t(&[1, 2], &[3.0, 4.0]));
    let r = tape.concat(&[a, b], 0).unwrap();
    assert_eq!(tape.value(r).data(), &[1.0, 2.0, 3.0, 4.0]);
    let c = tape.concat(&[a, b], 1).unwrap();
    assert_eq!(tape.value(c).shape(), &[1, 4]);
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

    let img: Vec<f32> = (0..24).map(|v| v as f32).collect();
    let x = tape.constant(t(&[4, 3, 2], &img));
    let cr = tape.crop(x, 1, 1, 2, 2).unwrap();
    assert_eq!(tape.value(cr).data(), &[8.0, 9.0, 10.0, 11.0, 14.0, 15.0, 16.0, 17.0]);
    assert!(tape.crop(x, 3, 0, 2, 1).is_err());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let x = tape.param(Tensor::uniform(&[4, 4, 3], 1.0, &mut rng));
        let k = tape.param(Tensor::uniform(&[3, 3, 3], 1.0, &mut rng));
        let b = tape.param(Tensor::uniform(&[3], 1.0, &mut rng));
        let y = tape.depthwise_conv2d(x, k, b).unwrap();
        let y = tape.gelu(y);
        let l = tape.sum(y);
        tape.backward(l).unwrap();
        (tape.value(y).clone(), tape.grad(k).unwrap().to_vec(), tape.grad(x).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}
