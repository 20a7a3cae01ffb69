use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sessa_core::comparators::*;
use sessa_core::numerics::{dot, fit_power_law, softmax_row, Matrix};
use sessa_core::Error;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn uniform_rows_dilute() {
    let j = attention_value_jacobian(&uniform_causal_routing(50), None).unwrap();
    for t in 0..50 {
        let max = (0..=t).map(|tau| j[(t, tau)]).fold(0.0, f64::max);
        assert!((max * (t as f64 + 1.0) - 1.0).abs() <= f64::EPSILON);
        assert_eq!(j[(t, 0)], 1.0 / (t as f64 + 1.0));
    }
    assert!(attention_value_jacobian(&uniform_causal_routing(50), Some(0.0)).is_ok());
}

#[test]
fn one_hot_rows_select_one_source() {
    let a = Matrix::from_fn(6, 6, |t, j| if j == t / 2 { 1.0 } else { 0.0 });
    let j = attention_value_jacobian(&a, None).unwrap();
    assert_eq!(j[(5, 2)], 1.0);
    assert_eq!(j[(5, 4)], 0.0);
    assert!(matches!(attention_value_jacobian(&a, Some(1.0)), Err(Error::CheckFailed { .. })));
}

#[test]
fn attention_rejects_bad_rows() {
    let mut a = uniform_causal_routing(4);
    a[(2, 0)] = 0.5;
    assert!(matches!(attention_value_jacobian(&a, None), Err(Error::InvalidInput(_))));
    let mut b = uniform_causal_routing(4);
    b[(1, 2)] = 0.1;
    b[(1, 1)] -= 0.1;
    assert!(matches!(attention_value_jacobian(&b, None), Err(Error::InvalidInput(_))));
    assert!(matches!(attention_value_jacobian(&Matrix::zeros(2, 3), None), Err(Error::Shape(_))));
}

#[test]
fn bounded_logit_spread_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t_len = 40;
    let spread = 1.5;
    let mut a = Matrix::zeros(t_len, t_len);
    for t in 0..t_len {
        let logits: Vec<f64> = (0..=t).map(|_| rng.random_range(0.0..spread)).collect();
        let p = softmax_row(&logits, 1.0).unwrap();
        a.row_mut(t)[..=t].copy_from_slice(&p);
    }
    attention_value_jacobian(&a, Some(spread)).unwrap();
}

#[test]
fn dilution_exponent() {
    let j = attention_value_jacobian(&uniform_causal_routing(1025), None).unwrap();
    let fit = fit_power_law(&dilution_series(&j), (32, 1024)).unwrap();
    assert!((fit.exponent + 1.0).abs() <= 0.02, "{}", fit.exponent);
}

#[test]
fn smooth_routing_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (t_len, d, dk) = (7, 4, 3);
    for _ in 0..20 {
        let x = Matrix::from_fn(t_len, d, |_, _| gauss(&mut rng));
        let wq = Matrix::from_fn(d, dk, |_, _| gauss(&mut rng) * 0.7);
        let wk = Matrix::from_fn(d, dk, |_, _| gauss(&mut rng) * 0.7);
        let t = t_len - 1;
        let routing = |x: &Matrix| -> Vec<f64> {
            let q = wq.t_mul_vec(x.row(t));
            let logits: Vec<f64> = (0..=t).map(|j| dot(&q, &wk.t_mul_vec(x.row(j)))).collect();
            softmax_row(&logits, 1.0).unwrap()
        };
        let alpha = routing(&x);
        let q = wq.t_mul_vec(x.row(t));
        let dlogit = wk.mul_vec(&q);
        let dlogit_norm = dot(&dlogit, &dlogit).sqrt();
        let h = 1e-6;
        for tau in 0..t {
            let mut grads = vec![vec![0.0; d]; t + 1];
            for c in 0..d {
                let mut xp = x.clone();
                xp[(tau, c)] += h;
                let up = routing(&xp);
                xp[(tau, c)] -= 2.0 * h;
                let down = routing(&xp);
                for j in 0..=t {
                    grads[j][c] = (up[j] - down[j]) / (2.0 * h);
                }
            }
            let total: f64 = grads.iter().map(|g| dot(g, g).sqrt()).sum();
            assert!(total <= 2.0 * alpha[tau] * dlogit_norm * (1.0 + 1e-6) + 1e-9);
        }
    }
}

#[test]
fn zoh_examples() {
    let frozen = ZohChannel::scalar(1.0, vec![0.0; 30]).unwrap();
    let h = zoh_simulate(&frozen, &vec![3.0; 30]).unwrap();
    assert!(h.as_slice().iter().all(|v| *v == 0.0));

    let ch = ZohChannel::scalar(1.0, vec![2f64.ln(); 3]).unwrap();
    let h = zoh_simulate(&ch, &[1.0, 1.0, 1.0]).unwrap();
    assert!((h[(0, 0)] - 0.5).abs() < 1e-15);
    assert!((h[(1, 0)] - 0.75).abs() < 1e-15);
    assert!((h[(2, 0)] - 0.875).abs() < 1e-15);

    let m = 2.0;
    let a = 0.7;
    let ch = ZohChannel::scalar(a, vec![0.3; 500]).unwrap();
    let h = zoh_simulate(&ch, &vec![m; 500]).unwrap();
    for t in 1..500 {
        assert!(h[(t, 0)] >= h[(t - 1, 0)]);
        assert!(h[(t, 0)] <= m / a);
    }
    assert!((h[(499, 0)] - m / a).abs() < 1e-12);
}

#[test]
fn zoh_rejects_bad_channels() {
    assert!(matches!(ZohChannel::scalar(1.0, vec![0.1, -0.1]), Err(Error::Domain(_))));
    assert!(matches!(ZohChannel::scalar(0.0, vec![0.1]), Err(Error::Domain(_))));
    assert!(matches!(ZohChannel::new(vec![1.0, 2.0], vec![0.1], vec![1.0], vec![1.0]), Err(Error::Shape(_))));
    let ch = ZohChannel::scalar(1.0, vec![0.1; 4]).unwrap();
    assert!(zoh_simulate(&ch, &[1.0; 3]).is_err());
    assert!(mamba_impulse_jacobian(&ch, 3, 2).is_err());
}

#[test]
fn transition_factor_examples() {
    let ch = ZohChannel::scalar(1.0, vec![0.1; 40]).unwrap();
    assert!((ch.transition_factor(5, 25) - 0.1353352832366127).abs() < 1e-15);
    let ch = ZohChannel::new(vec![0.5, 2.0], vec![0.4; 10], vec![1.5, -1.0], vec![2.0, 0.5]).unwrap();
    let b0 = (1.0 - (-0.2f64).exp()) / 0.5 * 1.5;
    let b1 = (1.0 - (-0.8f64).exp()) / 2.0 * -1.0;
    let want = (2.0 * b0 + 0.5 * b1).abs();
    assert!((mamba_impulse_jacobian(&ch, 3, 3).unwrap() - want).abs() < 1e-15);
}

#[test]
fn freeze_rate_matches_failed_freeze_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c = 0.05;
    let lambda = 0.8;
    let delta: Vec<f64> = (0..400).map(|_| c * (1.0 + 0.05 * rng.random::<f64>())).collect();
    let ch = ZohChannel::scalar(lambda, delta).unwrap();
    let r = freeze_rate_check(&ch, 0, (20, 399)).unwrap();
    assert!(r.bound_ok);
    assert!(r.c_delta >= c);
    assert!(r.fit.exponent <= r.predicted_rate + 1e-12);
    assert!((r.fit.exponent / (-lambda * c) - 1.0).abs() <= 0.05, "{}", r.fit.exponent);
}

#[test]
fn successful_freeze_holds_memory() {
    let mut delta = vec![0.0; 100];
    delta[10] = 1.0;
    let ch = ZohChannel::scalar(1.0, delta).unwrap();
    let j10 = mamba_impulse_jacobian(&ch, 10, 10).unwrap();
    for t in 11..100 {
        assert_eq!(mamba_impulse_jacobian(&ch, 10, t).unwrap(), j10);
    }
}

#[test]
fn lti_examples() {
    let zero = LtiSystem::new(Matrix::zeros(3, 3), Matrix::identity(3), Matrix::identity(3)).unwrap();
    let r = lti_impulse_response(&zero, 50, None).unwrap();
    assert_eq!(r.norms[0], 1.0);
    assert!(r.norms[1..].iter().all(|v| *v == 0.0));
    assert!(r.fit.is_none());

    let s = LtiSystem::new(Matrix::from_rows(&[vec![0.9]]).unwrap(), Matrix::identity(1), Matrix::identity(1)).unwrap();
    let r = lti_impulse_response(&s, 100, None).unwrap();
    for (l, v) in r.norms.iter().enumerate() {
        assert!((v - 0.9f64.powi(l as i32)).abs() <= 1e-14);
    }
    assert!((r.fit.unwrap().exponent - 0.9f64.ln()).abs() < 1e-12);
    assert!(r.warning.is_none());

    let u = LtiSystem::new(Matrix::from_rows(&[vec![1.1]]).unwrap(), Matrix::identity(1), Matrix::identity(1)).unwrap();
    assert!(lti_impulse_response(&u, 20, None).unwrap().warning.is_some());
    assert!(matches!(LtiSystem::new(Matrix::zeros(2, 2), Matrix::zeros(3, 1), Matrix::zeros(1, 2)), Err(Error::Shape(_))));
}

fn random_stable(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> LtiSystem {
    let a = Matrix::from_fn(n, n, |_, _| gauss(rng));
    let r0 = LtiSystem::new(a.clone(), Matrix::identity(n), Matrix::identity(n)).unwrap().spectral_radius();
    let b = Matrix::from_fn(n, 2, |_, _| gauss(rng));
    let c = Matrix::from_fn(2, n, |_, _| gauss(rng));
    LtiSystem::new(a.scaled(rho / r0), b, c).unwrap()
}

#[test]
fn lti_random_stable_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let s = random_stable(&mut rng, 4, 0.9);
        assert!((s.spectral_radius() - 0.9).abs() < 1e-10);
        let r = lti_impulse_response(&s, 200, Some((20, 200))).unwrap();
        let rate = r.fit.unwrap().exponent;
        assert!((rate / 0.9f64.ln() - 1.0).abs() <= 0.1, "{rate}");
    }
}

#[test]
fn mamba_e2e_matches_closed_form_for_constant_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut block = LocalZohBlock::random(vec![0.6], 3, 0.2, 1.0, &mut rng).unwrap();
    block.w_delta = vec![0.0; 3];
    let x = Matrix::from_fn(12, 3, |_, _| gauss(&mut rng));
    let delta = block.step_size(x.row(0));
    let a = 0.6;
    let (tau, t) = (2, 9);
    let xs = x.row(tau);
    let zb = dot(block.w_b.row(0), xs);
    let u = dot(&block.w_u, xs);
    let inject = (1.0 - (-a * delta).exp()) / a;
    let decay = (-a * delta * (t - tau) as f64).exp();
    let ct = dot(block.w_c.row(0), x.row(t)).tanh();
    let grad: Vec<f64> = (0..3)
        .map(|j| ct * decay * inject * ((1.0 - zb.tanh().powi(2)) * block.w_b[(0, j)] * u + zb.tanh() * block.w_u[j]))
        .collect();
    let want = dot(&grad, &grad).sqrt();
    let got = mamba_e2e_fd_jacobian(&block, &x, t, tau, 1e-5).unwrap();
    assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
}

#[test]
fn mamba_e2e_bound_holds_on_random_blocks() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = LocalZohBlock::random(vec![0.5, 0.9, 1.4], 4, -1.0, 1.0, &mut rng).unwrap();
        let x = Matrix::from_fn(64, 4, |_, _| gauss(&mut rng));
        let r = mamba_e2e_check(&block, &x, 0, 1e-5).unwrap();
        assert_eq!(r.rows.len(), 63);
    }
}

#[test]
fn mamba_e2e_decays_at_least_at_certified_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let block = LocalZohBlock::random(vec![0.5, 1.0], 4, 0.0, 0.2, &mut rng).unwrap();
    let x = Matrix::from_fn(48, 4, |_, _| gauss(&mut rng) * 0.5);
    let r = mamba_e2e_check(&block, &x, 0, 1e-5).unwrap();
    let c = &r.constants;
    assert!(c.c_delta > 0.0);
    assert!(r.fitted_rate.unwrap() <= -c.lambda * c.c_delta + 0.05);
}

proptest! {
    #[test]
    fn zoh_state_stays_in_hull(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rates: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..2.0)).collect();
        let delta: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..1.5)).collect();
        let ch = ZohChannel::new(rates.clone(), delta, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let inputs: Vec<f64> = (0..60).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = zoh_simulate(&ch, &inputs).unwrap();
        let bound = 2.0 / ch.lambda_min();
        for t in 0..60 {
            for m in 0..3 {
                let prev = if t == 0 { 0.0 } else { h[(t - 1, m)] };
                let target = inputs[t] / rates[m];
                let (lo, hi) = (prev.min(target), prev.max(target));
                prop_assert!(h[(t, m)] >= lo - 1e-12 && h[(t, m)] <= hi + 1e-12);
                prop_assert!(h[(t, m)].abs() <= bound);
            }
        }
    }

    #[test]
    fn freeze_scaling_is_exact(scale in 0.1f64..5.0, seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..0.5)).collect();
        let scaled: Vec<f64> = delta.iter().map(|d| d * scale).collect();
        let a = ZohChannel::scalar(0.7, delta).unwrap();
        let b = ZohChannel::scalar(0.7, scaled).unwrap();
        let (la, lb) = (a.transition_factor(3, 29).ln(), b.transition_factor(3, 29).ln());
        prop_assert!((lb - scale * la).abs() <= 1e-12 * lb.abs().max(1.0));
    }
}
