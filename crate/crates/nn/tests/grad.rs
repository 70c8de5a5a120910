//! Finite-difference verification of every tape op, first and second order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moodspace_nn::tape::{Tape, Var};
use moodspace_nn::tensor::Tensor;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape, data)
}

/// FD-check d(scalar build(inputs))/d(inputs) at every element.
fn fd_check(
    shapes: &[&[usize]],
    build: impl Fn(&mut Tape, &[Var]) -> Var,
    seed: u64,
    tol: f64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(s, &mut rng)).collect();

    let eval = |tensors: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let y = build(&mut tape, &vars);
        tape.value(y).item()
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let y = build(&mut tape, &vars);
    assert_eq!(tape.value(y).numel(), 1, "build must produce a scalar");
    let grads = tape.grad_tensors(y, &vars);

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (ti, shape) in shapes.iter().enumerate() {
        let numel: usize = shape.iter().product();
        for i in 0..numel {
            let mut up = tensors.clone();
            up[ti].data_mut()[i] += h;
            let mut down = tensors.clone();
            down[ti].data_mut()[i] -= h;
            let numeric = (eval(&up) - eval(&down)) / (2.0 * h);
            let analytic = grads[ti].data()[i];
            let err = moodspace_nn::relative_error(analytic, numeric);
            worst = worst.max(err);
            assert!(
                err < tol,
                "input {ti} elem {i}: analytic {analytic} vs numeric {numeric} (err {err})"
            );
        }
    }
    // Sanity: the check must have actually compared something nonzero.
    assert!(worst.is_finite());
}

#[test]
fn grad_elementwise_binary() {
    fd_check(
        &[&[2, 3], &[2, 3]],
        |t, v| {
            let s = t.add(v[0], v[1]);
            let m = t.mul(s, v[0]);
            let d = t.sub(m, v[1]);
            t.mean_all(d)
        },
        1,
        1e-6,
    );
}

#[test]
fn grad_div() {
    fd_check(
        &[&[4], &[4]],
        |t, v| {
            let shifted = t.shift(v[1], 3.0); // keep denominators away from zero
            let d = t.div(v[0], shifted);
            t.sum_all(d)
        },
        2,
        1e-6,
    );
}

#[test]
fn grad_matmul_transpose() {
    fd_check(
        &[&[3, 4], &[4, 2]],
        |t, v| {
            let p = t.matmul(v[0], v[1]);
            let pt = t.transpose(p);
            let sq = t.mul(pt, pt);
            t.sum_all(sq)
        },
        3,
        1e-6,
    );
}

#[test]
fn grad_unary_chain() {
    fd_check(
        &[&[5]],
        |t, v| {
            let e = t.exp(v[0]);
            let sh = t.shift(e, 1.0);
            let l = t.log(sh);
            let th = t.tanh(l);
            let sq = t.mul(th, th);
            let sh2 = t.shift(sq, 0.5);
            let r = t.sqrt(sh2);
            t.sum_all(r)
        },
        4,
        1e-6,
    );
}

#[test]
fn grad_leaky_relu_and_abs() {
    fd_check(
        &[&[8]],
        |t, v| {
            // Shift away from the kink so FD is valid.
            let sh = t.shift(v[0], 0.05);
            let r = t.leaky_relu(sh, 0.2);
            let a = t.abs(r);
            t.sum_all(a)
        },
        5,
        1e-5,
    );
}

#[test]
fn grad_broadcast_sum_axes() {
    fd_check(
        &[&[1, 3], &[2, 3]],
        |t, v| {
            let b = t.broadcast_to(v[0], &[2, 3]);
            let p = t.mul(b, v[1]);
            let s = t.sum_axes(p, &[1], true);
            let sq = t.mul(s, s);
            t.sum_all(sq)
        },
        6,
        1e-6,
    );
}

#[test]
fn grad_conv_pipeline() {
    // im2col + matmul + col2im + upsample + pool, all in one scalar.
    fd_check(
        &[&[1, 4, 4, 2], &[2 * 9, 3]],
        |t, v| {
            let cols = t.im2col(v[0], 3, 1, 1);
            let conv = t.matmul(cols, v[1]); // (16, 3)
            let img = t.reshape(conv, &[1, 4, 4, 3]);
            let up = t.upsample2(img);
            let down = t.sumpool2(up);
            let sq = t.mul(down, down);
            t.mean_all(sq)
        },
        7,
        1e-5,
    );
}

#[test]
fn grad_col2im() {
    fd_check(
        &[&[4, 8]], // (N*OH*OW, k*k*C) for a 2x2 image, k=2, pad=1, stride 2
        |t, v| {
            let img = t.col2im(v[0], 2, 2, 1, &[1, 2, 2, 2]);
            let sq = t.mul(img, img);
            t.sum_all(sq)
        },
        8,
        1e-6,
    );
}

#[test]
fn grad_slice_pad_concat() {
    fd_check(
        &[&[2, 3], &[2, 2]],
        |t, v| {
            let cat = t.concat(v[0], v[1], 1);
            let sl = t.slice(cat, 1, 1, 3);
            let sq = t.mul(sl, sl);
            t.sum_all(sq)
        },
        9,
        1e-6,
    );
}

#[test]
fn im2col_col2im_are_adjoint() {
    // <im2col(x), y> == <x, col2im(y)> for random x, y.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (4, 2, 1)] {
        let x = rand_tensor(&[2, 6, 6, 3], &mut rng);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let cols = tape.im2col(xv, k, stride, pad);
        let y = rand_tensor(tape.value(cols).shape(), &mut rng);
        let lhs: f64 = tape.value(cols).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let yv = tape.leaf(y);
        let back = tape.col2im(yv, k, stride, pad, &[2, 6, 6, 3]);
        let rhs: f64 = tape.value(back).data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() < 1e-9,
            "adjoint mismatch for k={k} s={stride} p={pad}: {lhs} vs {rhs}"
        );
    }
}

/// Second-order check in the exact shape the gradient penalty uses:
/// p(w) = (||d s(x; w) / d x|| - 1)^2 where s is a small nonlinear net.
/// We differentiate p analytically w.r.t. w (a gradient of a gradient) and
/// compare against central differences of p.
#[test]
fn second_order_matches_fd_on_gradient_norm_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x0 = rand_tensor(&[1, 4, 4, 2], &mut rng);
    let w0 = rand_tensor(&[2 * 9, 4], &mut rng);
    let w1 = rand_tensor(&[4 * 16, 1], &mut rng);

    let build_penalty = |tape: &mut Tape, x: Var, w_conv: Var, w_out: Var| -> Var {
        // score = dense(tanh(conv(x)))
        let cols = tape.im2col(x, 3, 1, 1);
        let h = tape.matmul(cols, w_conv); // (16, 4)
        let h = tape.tanh(h);
        let flat = tape.reshape(h, &[1, 64]);
        let score = tape.matmul(flat, w_out); // (1,1)
        let s = tape.sum_all(score);
        // gradient of score w.r.t. the input image
        let gx = tape.backward(s, &[x])[0].expect("x reaches score");
        let g2 = tape.mul(gx, gx);
        let norm2 = tape.sum_all(g2);
        let norm = tape.sqrt(norm2);
        let dev = tape.shift(norm, -1.0);
        tape.mul(dev, dev)
    };

    let eval = |w_conv: &Tensor, w_out: &Tensor| -> f64 {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let wc = tape.leaf(w_conv.clone());
        let wo = tape.leaf(w_out.clone());
        let p = build_penalty(&mut tape, x, wc, wo);
        tape.value(p).item()
    };

    // Analytic gradient of the penalty w.r.t. both weight tensors.
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let wc = tape.leaf(w0.clone());
    let wo = tape.leaf(w1.clone());
    let p = build_penalty(&mut tape, x, wc, wo);
    let grads = tape.grad_tensors(p, &[wc, wo]);

    let h = 1e-5;
    for (ti, base) in [(0usize, &w0), (1usize, &w1)] {
        for i in 0..base.numel() {
            let mut up = base.clone();
            up.data_mut()[i] += h;
            let mut down = base.clone();
            down.data_mut()[i] -= h;
            let (fu, fd) = if ti == 0 {
                (eval(&up, &w1), eval(&down, &w1))
            } else {
                (eval(&w0, &up), eval(&w0, &down))
            };
            let numeric = (fu - fd) / (2.0 * h);
            let analytic = grads[ti].data()[i];
            let err = moodspace_nn::relative_error(analytic, numeric);
            assert!(
                err < 1e-5,
                "second-order mismatch tensor {ti} elem {i}: {analytic} vs {numeric}"
            );
        }
    }
}

#[test]
fn backward_twice_on_same_tape_is_consistent() {
    // grad of sum(x*x) is 2x; summing it and differentiating again gives 2.
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[3], vec![1.0, -2.0, 0.5]));
    let sq = tape.mul(x, x);
    let y = tape.sum_all(sq);
    let g = tape.backward(y, &[x])[0].unwrap();
    let gsum = tape.sum_all(g);
    let gg = tape.backward(gsum, &[x])[0].unwrap();
    assert_eq!(tape.value(gg).data(), &[2.0, 2.0, 2.0]);
}
