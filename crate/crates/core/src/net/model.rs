//! Forward and reverse passes of the online network.

use super::params::{Layout, Params};
use super::{ModelConfig, Scalar, TrainingExample};
use crate::error::{invalid, Error, Result};
use crate::music::NUM_NOTES;

/// Spatial and feature sizes flowing through a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    /// Input side, then the side after each pooling step.
    pub spatial: Vec<usize>,
    pub dance_feature: usize,
    pub concat: usize,
    pub fc: Vec<usize>,
    pub logits: usize,
}

impl ShapeTrace {
    pub fn of(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut spatial = vec![cfg.window_frames];
        let mut side = cfg.window_frames;
        for l in 1..=cfg.conv_filters.len() {
            if cfg.pool_after.contains(&l) {
                side /= 2;
                spatial.push(side);
            }
        }
        let dance_feature = *cfg.conv_filters.last().expect("validated");
        Ok(ShapeTrace {
            spatial,
            dance_feature,
            concat: dance_feature + cfg.rnn_hidden,
            fc: cfg.fc_sizes.clone(),
            logits: cfg.classes,
        })
    }
}

struct ConvCache<T> {
    col: Vec<T>,
    /// Post-ReLU activation before pooling.
    act: Vec<T>,
    side: usize,
    /// Flat index into `act` of each pooled maximum.
    pool_argmax: Option<Vec<u32>>,
}

struct LstmStep<T> {
    x: Option<u8>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    gates: Vec<T>,
    tanh_c: Vec<T>,
}

/// Intermediate values kept for the reverse pass.
pub struct Forward<T> {
    pub logits: Vec<T>,
    convs: Vec<ConvCache<T>>,
    final_side: usize,
    lstm: Vec<LstmStep<T>>,
    /// Input of each FC layer including the output layer; hidden layer
    /// outputs are post-ReLU.
    fc_inputs: Vec<Vec<T>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn im2col<T: Scalar>(input: &[T], ch: usize, side: usize, k: usize, col: &mut [T]) {
    let hw = side * side;
    let pad = k / 2;
    for c in 0..ch {
        let plane = &input[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let r = (c * k + ky) * k + kx;
                let dst = &mut col[r * hw..(r + 1) * hw];
                for y in 0..side {
                    let row = &mut dst[y * side..(y + 1) * side];
                    let yy = y as isize + ky as isize - pad as isize;
                    if yy < 0 || yy >= side as isize {
                        row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[yy as usize * side..(yy as usize + 1) * side];
                    let shift = kx as isize - pad as isize;
                    for (x, v) in row.iter_mut().enumerate() {
                        let xx = x as isize + shift;
                        *v = if xx < 0 || xx >= side as isize {
                            T::zero()
                        } else {
                            src[xx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], ch: usize, side: usize, k: usize, out: &mut [T]) {
    let hw = side * side;
    let pad = k / 2;
    out.fill(T::zero());
    for c in 0..ch {
        for ky in 0..k {
            for kx in 0..k {
                let r = (c * k + ky) * k + kx;
                let src = &col[r * hw..(r + 1) * hw];
                for y in 0..side {
                    let yy = y as isize + ky as isize - pad as isize;
                    if yy < 0 || yy >= side as isize {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    let dst = &mut out[c * hw + yy as usize * side..c * hw + (yy as usize + 1) * side];
                    for x in 0..side {
                        let xx = x as isize + shift;
                        if xx >= 0 && xx < side as isize {
                            dst[xx as usize] = dst[xx as usize] + src[y * side + x];
                        }
                    }
                }
            }
        }
    }
}

fn max_pool<T: Scalar>(act: &[T], ch: usize, side: usize) -> (Vec<T>, Vec<u32>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(ch * half * half);
    let mut idx = Vec::with_capacity(ch * half * half);
    for c in 0..ch {
        let base = c * side * side;
        for y in 0..half {
            for x in 0..half {
                let mut best = base + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * side + 2 * x + dx;
                    if act[i] > act[best] {
                        best = i;
                    }
                }
                out.push(act[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

fn linear<T: Scalar>(w: &[T], b: &[T], input: &[T]) -> Vec<T> {
    let n_in = input.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            w[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(input)
                .fold(bias, |acc, (&a, &x)| acc + a * x)
        })
        .collect()
}

fn check_inputs<T: Scalar>(cfg: &ModelConfig, dance: &[T], notes: &[Option<u8>]) -> Result<()> {
    let s = cfg.window_frames;
    if dance.len() != s * s {
        return Err(invalid(format!(
            "dance window has {} values, expected {s}x{s}",
            dance.len()
        )));
    }
    if notes.len() != cfg.window_notes {
        return Err(invalid(format!(
            "note history has {} steps, expected {}",
            notes.len(),
            cfg.window_notes
        )));
    }
    if notes.iter().flatten().any(|&n| n as usize >= NUM_NOTES) {
        return Err(invalid("note history contains an out-of-range ordinal"));
    }
    Ok(())
}

/// Runs the network and keeps what the reverse pass needs.
pub(crate) fn forward_cached<T: Scalar>(
    params: &Params<T>,
    dance: &[T],
    notes: &[Option<u8>],
) -> Result<Forward<T>> {
    let cfg = &params.config;
    check_inputs(cfg, dance, notes)?;
    let layout = Layout::of(cfg);
    let k = cfg.kernel;

    let mut convs = Vec::with_capacity(layout.convs);
    let mut input = dance.to_vec();
    let mut cin = 1;
    let mut side = cfg.window_frames;
    for (l, &cout) in cfg.conv_filters.iter().enumerate() {
        let hw = side * side;
        let kdim = cin * k * k;
        let mut col = vec![T::zero(); kdim * hw];
        im2col(&input, cin, side, k, &mut col);
        let (wi, bi) = layout.conv(l);
        let (w, b) = (&params.tensors[wi].data, &params.tensors[bi].data);
        let mut act = vec![T::zero(); cout * hw];
        T::gemm(cout, kdim, hw, w, kdim, 1, &col, hw, 1, T::zero(), &mut act, hw);
        for (o, plane) in act.chunks_exact_mut(hw).enumerate() {
            for v in plane {
                *v = (*v + b[o]).max(T::zero());
            }
        }
        let (next, pool_argmax) = if cfg.pool_after.contains(&(l + 1)) {
            let (p, idx) = max_pool(&act, cout, side);
            (p, Some(idx))
        } else {
            (act.clone(), None)
        };
        convs.push(ConvCache {
            col,
            act,
            side,
            pool_argmax,
        });
        if convs.last().expect("pushed").pool_argmax.is_some() {
            side /= 2;
        }
        input = next;
        cin = cout;
    }

    let hw = T::from_usize(side * side).expect("size");
    let mut features: Vec<T> = input
        .chunks_exact(side * side)
        .map(|plane| plane.iter().copied().sum::<T>() / hw)
        .collect();

    let h = cfg.rnn_hidden;
    let (ih, hh, lb) = layout.lstm();
    let (w_ih, w_hh, lbias) = (
        &params.tensors[ih].data,
        &params.tensors[hh].data,
        &params.tensors[lb].data,
    );
    let mut hs = vec![T::zero(); h];
    let mut cs = vec![T::zero(); h];
    let mut lstm = Vec::with_capacity(notes.len());
    for &x in notes {
        let mut gates = linear(w_hh, lbias, &hs);
        if let Some(n) = x {
            for (r, g) in gates.iter_mut().enumerate() {
                *g = *g + w_ih[r * NUM_NOTES + n as usize];
            }
        }
        for (r, g) in gates.iter_mut().enumerate() {
            *g = if (2 * h..3 * h).contains(&r) { g.tanh() } else { sigmoid(*g) };
        }
        let mut c_new = vec![T::zero(); h];
        let mut tanh_c = vec![T::zero(); h];
        let mut h_new = vec![T::zero(); h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            c_new[j] = f * cs[j] + i * g;
            tanh_c[j] = c_new[j].tanh();
            h_new[j] = o * tanh_c[j];
        }
        lstm.push(LstmStep {
            x,
            h_prev: std::mem::replace(&mut hs, h_new),
            c_prev: std::mem::replace(&mut cs, c_new),
            gates,
            tanh_c,
        });
    }

    features.extend_from_slice(&hs);
    let mut fc_inputs = Vec::with_capacity(layout.fcs + 1);
    let mut a = features;
    for l in 0..layout.fcs {
        let (wi, bi) = layout.fc(l);
        let mut z = linear(&params.tensors[wi].data, &params.tensors[bi].data, &a);
        z.iter_mut().for_each(|v| *v = v.max(T::zero()));
        fc_inputs.push(std::mem::replace(&mut a, z));
    }
    let (wi, bi) = layout.head();
    let logits = linear(&params.tensors[wi].data, &params.tensors[bi].data, &a);
    fc_inputs.push(a);

    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    Ok(Forward {
        logits,
        convs,
        final_side: side,
        lstm,
        fc_inputs,
    })
}

/// The network's 5 logits for one input window.
pub fn forward<T: Scalar>(params: &Params<T>, dance: &[T], notes: &[Option<u8>]) -> Result<Vec<T>> {
    Ok(forward_cached(params, dance, notes)?.logits)
}

/// Accumulates parameter gradients for one example into `grads`.
pub(crate) fn backward<T: Scalar>(
    params: &Params<T>,
    fwd: &Forward<T>,
    dlogits: &[T],
    grads: &mut Params<T>,
) {
    let cfg = &params.config;
    let layout = Layout::of(cfg);

    // Fully connected stack, output layer first.
    let mut delta = dlogits.to_vec();
    for l in (0..=layout.fcs).rev() {
        let (wi, bi) = if l == layout.fcs { layout.head() } else { layout.fc(l) };
        let input = &fwd.fc_inputs[l];
        let n_in = input.len();
        {
            let gw = &mut grads.tensors[wi].data;
            for (o, &d) in delta.iter().enumerate() {
                for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g = *g + d * x;
                }
            }
        }
        for (g, &d) in grads.tensors[bi].data.iter_mut().zip(&delta) {
            *g = *g + d;
        }
        let w = &params.tensors[wi].data;
        let mut d_in = vec![T::zero(); n_in];
        for (o, &d) in delta.iter().enumerate() {
            for (di, &wv) in d_in.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *di = *di + d * wv;
            }
        }
        if l > 0 {
            // Input of layer l is the post-ReLU output of layer l − 1.
            for (di, &x) in d_in.iter_mut().zip(input) {
                if x <= T::zero() {
                    *di = T::zero();
                }
            }
        }
        delta = d_in;
    }

    let dance_len = *cfg.conv_filters.last().expect("validated");
    let (d_dance, d_hidden) = delta.split_at(dance_len);

    // LSTM, back through time.
    let h = cfg.rnn_hidden;
    let (ih, hh, lb) = layout.lstm();
    let mut dh = d_hidden.to_vec();
    let mut dc = vec![T::zero(); h];
    let mut dgates = vec![T::zero(); 4 * h];
    for step in fwd.lstm.iter().rev() {
        let g = &step.gates;
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = step.tanh_c[j];
            let d_o = dh[j] * tc;
            let dcj = dc[j] + dh[j] * o * (T::one() - tc * tc);
            dgates[j] = dcj * gg * i * (T::one() - i);
            dgates[h + j] = dcj * step.c_prev[j] * f * (T::one() - f);
            dgates[2 * h + j] = dcj * i * (T::one() - gg * gg);
            dgates[3 * h + j] = d_o * o * (T::one() - o);
            dc[j] = dcj * f;
        }
        if let Some(n) = step.x {
            let gw = &mut grads.tensors[ih].data;
            for (r, &d) in dgates.iter().enumerate() {
                gw[r * NUM_NOTES + n as usize] = gw[r * NUM_NOTES + n as usize] + d;
            }
        }
        {
            let gw = &mut grads.tensors[hh].data;
            for (r, &d) in dgates.iter().enumerate() {
                for (gv, &hp) in gw[r * h..(r + 1) * h].iter_mut().zip(&step.h_prev) {
                    *gv = *gv + d * hp;
                }
            }
        }
        for (gb, &d) in grads.tensors[lb].data.iter_mut().zip(&dgates) {
            *gb = *gb + d;
        }
        let w_hh = &params.tensors[hh].data;
        dh.fill(T::zero());
        for (r, &d) in dgates.iter().enumerate() {
            for (dv, &wv) in dh.iter_mut().zip(&w_hh[r * h..(r + 1) * h]) {
                *dv = *dv + d * wv;
            }
        }
    }

    // Global average pool.
    let side = fwd.final_side;
    let hw = side * side;
    let scale = T::one() / T::from_usize(hw).expect("size");
    let mut d_out: Vec<T> = d_dance
        .iter()
        .flat_map(|&d| std::iter::repeat_n(d * scale, hw))
        .collect();

    // Conv stack.
    let k = cfg.kernel;
    for l in (0..layout.convs).rev() {
        let cache = &fwd.convs[l];
        let cout = cfg.conv_filters[l];
        let cin = if l == 0 { 1 } else { cfg.conv_filters[l - 1] };
        let side = cache.side;
        let hw = side * side;
        let mut dz = match &cache.pool_argmax {
            Some(idx) => {
                let mut d = vec![T::zero(); cout * hw];
                for (&i, &g) in idx.iter().zip(&d_out) {
                    d[i as usize] = d[i as usize] + g;
                }
                d
            }
            None => d_out,
        };
        for (d, &a) in dz.iter_mut().zip(&cache.act) {
            if a <= T::zero() {
                *d = T::zero();
            }
        }
        let kdim = cin * k * k;
        let (wi, bi) = layout.conv(l);
        T::gemm(
            cout,
            hw,
            kdim,
            &dz,
            hw,
            1,
            &cache.col,
            1,
            hw,
            T::one(),
            &mut grads.tensors[wi].data,
            kdim,
        );
        for (o, gb) in grads.tensors[bi].data.iter_mut().enumerate() {
            *gb = *gb + dz[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
        }
        if l == 0 {
            break;
        }
        let mut dcol = vec![T::zero(); kdim * hw];
        T::gemm(
            kdim,
            cout,
            hw,
            &params.tensors[wi].data,
            1,
            kdim,
            &dz,
            hw,
            1,
            T::zero(),
            &mut dcol,
            hw,
        );
        let mut d_in = vec![T::zero(); cin * hw];
        col2im(&dcol, cin, side, k, &mut d_in);
        d_out = d_in;
    }
}

/// Softmax cross-entropy loss of one logit vector and its gradient.
pub(crate) fn cross_entropy<T: Scalar>(logits: &[T], target: u8) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let loss = sum.ln() + max - logits[target as usize];
    let mut grad: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    grad[target as usize] = grad[target as usize] - T::one();
    (loss, grad)
}

/// Mean cross-entropy over `batch` and the gradient of every parameter.
pub fn loss_and_grad<T: Scalar>(
    params: &Params<T>,
    batch: &[&TrainingExample<T>],
) -> Result<(T, Params<T>)> {
    let mut grads = params.zeros_like();
    let loss = accumulate_loss_and_grad(params, batch, &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn accumulate_loss_and_grad<T: Scalar>(
    params: &Params<T>,
    batch: &[&TrainingExample<T>],
    grads: &mut Params<T>,
) -> Result<T> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let scale = T::one() / T::from_usize(batch.len()).expect("size");
    let mut total = T::zero();
    for ex in batch {
        if ex.target as usize >= NUM_NOTES {
            return Err(invalid(format!("target {} out of range", ex.target)));
        }
        let fwd = forward_cached(params, &ex.dance_window, &ex.note_history)?;
        let (loss, mut d) = cross_entropy(&fwd.logits, ex.target);
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        total = total + loss;
        d.iter_mut().for_each(|v| *v = *v * scale);
        backward(params, &fwd, &d, grads);
    }
    Ok(total * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            window_frames: 8,
            window_notes: 4,
            conv_filters: vec![3, 4, 2],
            kernel: 3,
            pool_after: vec![1, 2],
            rnn_hidden: 3,
            fc_sizes: vec![6, 4],
            ..ModelConfig::desk()
        }
    }

    fn random_example(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> TrainingExample<f64> {
        let s = cfg.window_frames;
        TrainingExample {
            dance_window: (0..s * s).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            note_history: (0..cfg.window_notes)
                .map(|i| if i == 0 { None } else { Some(rng.gen_range(0..5)) })
                .collect(),
            target: rng.gen_range(0..5),
        }
    }

    #[test]
    fn paper_shape_chain() {
        let t = ShapeTrace::of(&ModelConfig::paper()).unwrap();
        assert_eq!(t.spatial, vec![60, 30, 15]);
        assert_eq!(t.dance_feature, 32);
        assert_eq!(t.concat, 64);
        assert_eq!(t.fc, vec![512, 256, 128]);
        assert_eq!(t.logits, 5);
        let d = ShapeTrace::of(&ModelConfig::desk()).unwrap();
        assert_eq!(d.spatial, vec![60, 30, 15]);
        assert_eq!(d.concat, 64);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ch, side, k) = (2, 5, 3);
        let x: Vec<f64> = (0..ch * side * side).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..ch * k * k * side * side).map(|_| rng.gen()).collect();
        let mut col = vec![0.0; y.len()];
        im2col(&x, ch, side, k, &mut col);
        let mut back = vec![0.0; x.len()];
        col2im(&y, ch, side, k, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn zero_weights_give_uniform_logits() {
        let cfg = ModelConfig::desk();
        let p = Params::<f32>::zeros(&cfg).unwrap();
        let logits = forward(&p, &vec![0.0; 3600], &[None; 10]).unwrap();
        assert!(logits.iter().all(|&l| l == logits[0]));
        let ex = TrainingExample {
            dance_window: vec![0.0f32; 3600],
            note_history: vec![None; 10],
            target: 3,
        };
        let (loss, _) = loss_and_grad(&p, &[&ex]).unwrap();
        assert!((loss - 5f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = Params::<f32>::zeros(&ModelConfig::desk()).unwrap();
        assert!(forward(&p, &[0.0; 10], &[None; 10]).is_err());
        assert!(forward(&p, &vec![0.0; 3600], &[None; 9]).is_err());
        assert!(forward(&p, &vec![0.0; 3600], &[Some(7); 10]).is_err());
    }

    #[test]
    fn softmax_cross_entropy_properties() {
        let (loss, grad) = cross_entropy(&[1000.0f64, 0.0, -1000.0, 3.0, 2.0], 0);
        assert!(loss.is_finite() && loss >= 0.0);
        assert!(grad.iter().sum::<f64>().abs() < 1e-9);
        let (loss, _) = cross_entropy(&[0.5f64; 5], 2);
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = Params::<f32>::init(&cfg, 11).unwrap().cast::<f64>();
        let batch: Vec<TrainingExample<f64>> = (0..3).map(|_| random_example(&cfg, &mut rng)).collect();
        let refs: Vec<&TrainingExample<f64>> = batch.iter().collect();
        let checks = crate::net::gradient_check(&params, &refs, 1e-6).unwrap();
        assert_eq!(checks.len(), params.tensors.len());
        for c in checks {
            assert!(c.rel_error < 1e-4, "{}: {}", c.name, c.rel_error);
            assert!(c.analytic_norm > 0.0, "{} has no gradient", c.name);
        }
    }

    #[test]
    fn duplicated_batch_gives_same_loss_and_gradient() {
        let cfg = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Params::<f64>::init(&cfg, 9).unwrap();
        let a = random_example(&cfg, &mut rng);
        let b = random_example(&cfg, &mut rng);
        let (l1, g1) = loss_and_grad(&p, &[&a, &b]).unwrap();
        let (l2, g2) = loss_and_grad(&p, &[&a, &b, &a, &b]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (x, y) in g1.tensors.iter().zip(&g2.tensors) {
            for (u, v) in x.data.iter().zip(&y.data) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_init_logits_stay_finite() {
        let cfg = ModelConfig::desk();
        let p = Params::<f32>::init(&cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let dance: Vec<f32> = (0..3600).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let notes: Vec<Option<u8>> = (0..10)
                .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(0..5)))
                .collect();
            let logits = forward(&p, &dance, &notes).unwrap();
            assert!(logits.iter().all(|l| l.is_finite()));
        }
    }
}
