//! Tape gradients against fp64 central finite differences of the oracles.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reuse_inr::network::sampling::{grid_tap, grid_taps, upsample_taps};
use reuse_inr::network::{
    convnext_forward, deepened_forward, forward_patch, widened_convnext_forward, BoundParams, ConvNextParams,
    NetworkConfig, ParameterStore,
};
use reuse_inr::tensor::{Tape, Tensor, Var};

use super::oracle::{self, central_diff, rel_err, Block64, Params64, A};

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-3;

type TapeFn = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
type OracleFn = Box<dyn Fn(&[A]) -> A>;

/// One differentiable computation with its fp64 reference.
pub struct Case {
    pub name: String,
    pub inputs: Vec<Tensor>,
    pub tape_fn: TapeFn,
    pub oracle_fn: OracleFn,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

/// Worst per-input relative error between tape gradients of
/// `mse(f(inputs), target)` and finite differences of the oracle.
pub fn check(case: &Case, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11);
    let mut tape = Tape::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = (case.tape_fn)(&mut tape, &vars);
    let target = uniform(&mut rng, tape.shape(y));
    let tv = tape.constant(target.clone());
    let loss = tape.mse_loss(y, tv).unwrap();
    tape.backward(loss).unwrap();

    let base: Vec<A> = case.inputs.iter().map(A::of).collect();
    let target = A::of(&target);
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match tape.grad(*v) {
            Some(g) => g.iter().map(|&x| x as f64).collect(),
            None => vec![0.0; case.inputs[i].numel()],
        };
        let coords: Vec<usize> = (0..analytic.len()).collect();
        let mut f = |p: &[f64]| {
            let mut inputs = base.clone();
            inputs[i].v.copy_from_slice(p);
            oracle::mse(&(case.oracle_fn)(&inputs), &target)
        };
        let fd = central_diff(&mut f, &base[i].v, &coords, FD_STEP);
        worst = worst.max(rel_err(&analytic, &fd));
    }
    worst
}

/// Every differentiable operator on one random instance.
pub fn op_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut case = |name: &str, inputs: Vec<Tensor>, tape_fn: TapeFn, oracle_fn: OracleFn| {
        cases.push(Case { name: name.into(), inputs, tape_fn, oracle_fn })
    };

    case(
        "linear",
        vec![uniform(&mut rng, &[2, 3]), uniform(&mut rng, &[4, 3]), uniform(&mut rng, &[4])],
        Box::new(|t, v| t.linear(v[0], v[1], v[2]).unwrap()),
        Box::new(|a| oracle::linear(&a[0], &a[1], &a[2])),
    );
    case(
        "depthwise_conv2d",
        vec![uniform(&mut rng, &[5, 5, 2]), uniform(&mut rng, &[3, 3, 2]), uniform(&mut rng, &[2])],
        Box::new(|t, v| t.depthwise_conv2d(v[0], v[1], v[2]).unwrap()),
        Box::new(|a| oracle::depthwise(&a[0], &a[1], &a[2])),
    );
    case(
        "conv2d",
        vec![uniform(&mut rng, &[4, 3, 3]), uniform(&mut rng, &[3, 3, 3, 2]), uniform(&mut rng, &[2])],
        Box::new(|t, v| t.conv2d(v[0], v[1], v[2]).unwrap()),
        Box::new(|a| oracle::conv(&a[0], &a[1], &a[2])),
    );
    case(
        "layer_norm",
        vec![uniform(&mut rng, &[3, 4]), uniform(&mut rng, &[4]), uniform(&mut rng, &[4])],
        Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-6).unwrap()),
        Box::new(|a| oracle::layer_norm(&a[0], &a[1], &a[2], 1e-6)),
    );
    case("gelu", vec![uniform(&mut rng, &[9])], Box::new(|t, v| t.gelu(v[0])), Box::new(|a| oracle::gelu(&a[0])));
    let s = rng.gen_range(2..4);
    case(
        "bilinear_upsample",
        vec![uniform(&mut rng, &[2, 3, 2])],
        Box::new(move |t, v| t.bilinear_upsample(v[0], s).unwrap()),
        Box::new(move |a| oracle::resize(&a[0], 2 * s, 3 * s)),
    );
    case(
        "resample",
        vec![uniform(&mut rng, &[3, 4, 2])],
        Box::new(|t, v| t.resample(v[0], grid_taps(0, 5, 5, 3), grid_taps(0, 7, 7, 4)).unwrap()),
        Box::new(|a| oracle::resize(&a[0], 5, 7)),
    );
    let frame = rng.gen_range(0..6);
    case(
        "lerp_frames",
        vec![uniform(&mut rng, &[4, 2, 2, 3])],
        Box::new(move |t, v| {
            let x = t.lerp_frames(v[0], grid_tap(frame, 6, 4)).unwrap();
            t.resample(x, grid_taps(0, 2, 2, 2), grid_taps(0, 2, 2, 2)).unwrap()
        }),
        Box::new(move |a| oracle::sample_grid(&a[0], frame, 6, 2, 2)),
    );
    case(
        "add",
        vec![uniform(&mut rng, &[3, 2]), uniform(&mut rng, &[3, 2])],
        Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
        Box::new(|a| oracle::add(&a[0], &a[1])),
    );
    case(
        "concat",
        vec![uniform(&mut rng, &[2, 3]), uniform(&mut rng, &[2, 3])],
        Box::new(|t, v| t.concat(&[v[0], v[1], v[0]], 1).unwrap()),
        Box::new(|a| {
            let v =
                (0..2).flat_map(|r| [&a[0], &a[1], &a[0]].map(|x| x.v[r * 3..r * 3 + 3].to_vec()).concat()).collect();
            A::new(&[2, 9], v)
        }),
    );
    case(
        "crop",
        vec![uniform(&mut rng, &[4, 5, 2])],
        Box::new(|t, v| t.crop(v[0], 1, 2, 2, 3).unwrap()),
        Box::new(|a| {
            let v = (1..3)
                .flat_map(|y| (2..5).flat_map(move |x| (0..2).map(move |c| (y, x, c))))
                .map(|(y, x, c)| a[0].v[(y * 5 + x) * 2 + c])
                .collect();
            A::new(&[2, 3, 2], v)
        }),
    );
    case(
        "scale",
        vec![uniform(&mut rng, &[5])],
        Box::new(|t, v| t.scale(v[0], -1.75)),
        Box::new(|a| A::new(&a[0].shape, a[0].v.iter().map(|x| x * -1.75).collect())),
    );
    // The upsample taps with an offset input window, as used by patch decoding.
    case(
        "windowed_upsample",
        vec![uniform(&mut rng, &[4, 4, 1])],
        Box::new(|t, v| t.resample(v[0], upsample_taps(4, 4, 2, 6, 1), upsample_taps(4, 4, 2, 6, 1)).unwrap()),
        Box::new(|a| {
            // Output rows 4..8 of a 6-sample axis upsampled x2 read rows 1..5.
            let mut full = A::zeros(&[6, 6, 1]);
            for y in 0..4 {
                for x in 0..4 {
                    full.v[(y + 1) * 6 + x + 1] = a[0].v[y * 4 + x];
                }
            }
            let up = oracle::resize(&full, 12, 12);
            let v = (4..8).flat_map(|y| (4..8).map(move |x| (y, x))).map(|(y, x)| up.v[y * 12 + x]).collect();
            A::new(&[4, 4, 1], v)
        }),
    );
    cases
}

fn convnext_inputs(rng: &mut ChaCha8Rng, c: usize, hidden: usize, out: usize) -> Vec<Tensor> {
    vec![
        uniform(rng, &[4, 4, c]),
        uniform(rng, &[3, 3, c]),
        uniform(rng, &[c]),
        uniform(rng, &[c]),
        uniform(rng, &[c]),
        uniform(rng, &[hidden, c]),
        uniform(rng, &[hidden]),
        uniform(rng, &[out, hidden]),
        uniform(rng, &[out]),
    ]
}

fn block_vars(v: &[Var]) -> ConvNextParams {
    ConvNextParams {
        dw_weight: v[1],
        dw_bias: v[2],
        norm_gamma: v[3],
        norm_beta: v[4],
        fc1_weight: v[5],
        fc1_bias: v[6],
        fc2_weight: v[7],
        fc2_bias: v[8],
    }
}

fn block64(a: &[A]) -> Block64 {
    Block64 {
        dw_w: a[1].clone(),
        dw_b: a[2].clone(),
        g: a[3].clone(),
        beta: a[4].clone(),
        w1: a[5].clone(),
        b1: a[6].clone(),
        w2: a[7].clone(),
        b2: a[8].clone(),
    }
}

/// ConvNeXt compositions on a 4 x 4 x 4 input: a single block, a transition
/// block, a deepened stack of three, and a widened block.
pub fn composite_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        Case {
            name: "convnext".into(),
            inputs: convnext_inputs(&mut rng, 4, 8, 4),
            tape_fn: Box::new(|t, v| convnext_forward(t, v[0], &block_vars(v)).unwrap()),
            oracle_fn: Box::new(|a| block64(a).apply(&a[0], 1, 1)),
        },
        Case {
            name: "convnext_transition".into(),
            inputs: convnext_inputs(&mut rng, 4, 6, 3),
            tape_fn: Box::new(|t, v| convnext_forward(t, v[0], &block_vars(v)).unwrap()),
            oracle_fn: Box::new(|a| block64(a).apply(&a[0], 1, 1)),
        },
        Case {
            name: "deepened_m3".into(),
            inputs: convnext_inputs(&mut rng, 4, 8, 4),
            tape_fn: Box::new(|t, v| deepened_forward(t, v[0], &block_vars(v), 3).unwrap()),
            oracle_fn: Box::new(|a| {
                let b = block64(a);
                (0..3).fold(a[0].clone(), |x, _| b.apply(&x, 1, 1))
            }),
        },
        Case {
            name: "widened_m2".into(),
            inputs: convnext_inputs(&mut rng, 4, 8, 4),
            tape_fn: Box::new(|t, v| widened_convnext_forward(t, v[0], &block_vars(v), 2).unwrap()),
            oracle_fn: Box::new(|a| block64(a).apply(&a[0], 1, 2)),
        },
    ]
}

/// Full-frame network gradient check on `cfg` (one patch per frame) for a
/// random frame. One random coordinate of every stored tensor is
/// differentiated.
pub fn check_network(cfg: &NetworkConfig, seed: u64) -> f64 {
    assert_eq!(cfg.patch_grid(), (1, 1), "oracle decodes whole frames");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = ParameterStore::init(cfg, seed);
    let frame = rng.gen_range(0..cfg.frames);
    let target = Tensor::uniform(&[cfg.height, cfg.width, 3], 0.5, &mut rng);

    let mut tape = Tape::new();
    let bp = BoundParams::bind(&mut tape, cfg, &store, true, None);
    let y = forward_patch(&mut tape, cfg, &bp, frame, 0, 0).unwrap();
    let tv = tape.constant(target.clone());
    let loss = tape.mse_loss(y, tv).unwrap();
    tape.backward(loss).unwrap();

    let mut coords = Vec::new();
    let mut analytic = Vec::new();
    let mut offset = 0;
    for (i, t) in store.tensors().enumerate() {
        let j = rng.gen_range(0..t.numel());
        coords.push(offset + j);
        analytic.push(tape.grad(bp.vars[i]).map_or(0.0, |g| g[j] as f64));
        offset += t.numel();
    }
    let p64 = Params64::of(&store);
    let target = A::of(&target);
    let mut f = |flat: &[f64]| oracle::mse(&oracle::network_frame(cfg, &p64.with_flat(flat), frame), &target);
    let fd = central_diff(&mut f, &p64.flat(), &coords, FD_STEP);
    rel_err(&analytic, &fd)
}
