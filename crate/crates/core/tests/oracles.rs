//! Independent re-derivations checked against the library.

use ncim_core::ae::{ae_denoise, run_ae_jabid, AeConfig, AeHyper, NeighborScheme};
use ncim_core::amp::AmpConfig;
use ncim_core::codebook::Codebook;
use ncim_core::mat::{CMat, RMat};
use ncim_core::rng::{complex_normal, TrialRng};
use ncim_core::stf::{lambda_init, lambda_update, stf_denoise, StfHyper};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

fn rel_err_c(got: Complex64, want: Complex64) -> f64 {
    (got - want).norm() / want.norm().max(1e-300)
}

fn random_c(rng: &mut TrialRng, half_width: f64) -> Complex64 {
    Complex64::new(
        rng.random_range(-half_width..half_width),
        rng.random_range(-half_width..half_width),
    )
}

struct Terms {
    mu: Complex64,
    tau: f64,
    llr: f64,
}

fn terms(r: Complex64, phi: f64, mu0: Complex64, tau0: f64) -> Terms {
    Terms {
        mu: (mu0 * phi + r * tau0) / (phi + tau0),
        tau: tau0 * phi / (tau0 + phi),
        llr: (phi / (tau0 + phi)).ln() - (r - mu0).norm_sqr() / (tau0 + phi) + r.norm_sqr() / phi,
    }
}

#[test]
fn stf_denoiser_matches_product_form() {
    let mut rng = TrialRng::seed_from_u64(11);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 10_000 {
        let per_device = rng.random_range(1..=4);
        let devices = rng.random_range(1..=3);
        let cols = rng.random_range(1..=3);
        let n = devices * per_device;
        let r = CMat::from_fn(n, cols, |_, _| random_c(&mut rng, 2.0));
        let phi = RMat::from_fn(n, cols, |_, _| rng.random_range(0.1..2.0));
        let hyper = StfHyper {
            mu0: random_c(&mut rng, 0.5),
            tau0: rng.random_range(0.1..3.0),
            sigma_n2: 0.1,
            lambda: (0..devices)
                .map(|_| rng.random_range(0.001..0.999))
                .collect(),
        };
        let post = stf_denoise(&r, &phi, &hyper, per_device).unwrap();
        for k in 0..devices {
            let lam = hyper.lambda[k];
            let t: Vec<Vec<Terms>> = (0..cols)
                .map(|c| {
                    (0..per_device)
                        .map(|i| {
                            terms(
                                r[(k * per_device + i, c)],
                                phi[(k * per_device + i, c)],
                                hyper.mu0,
                                hyper.tau0,
                            )
                        })
                        .collect()
                })
                .collect();
            let sums: Vec<f64> = t
                .iter()
                .map(|col| col.iter().map(|x| x.llr.exp()).sum())
                .collect();
            let inv_prod: f64 = sums.iter().map(|s| 1.0 / s).product();
            let spread = (per_device as f64).powi(cols as i32) * (1.0 - lam) * inv_prod;
            for c in 0..cols {
                for i in 0..per_device {
                    let row = k * per_device + i;
                    let x = &t[c][i];
                    let pi = lam * x.llr.exp() / (sums[c] * (lam + spread));
                    let x_hat = x.mu * pi;
                    let v_hat = pi * (x.mu.norm_sqr() + x.tau) - x_hat.norm_sqr();
                    worst = worst
                        .max(rel_err(post.pi[(row, c)], pi))
                        .max(rel_err_c(post.x_hat[(row, c)], x_hat))
                        .max(rel_err(post.v_hat[(row, c)], v_hat))
                        .max(rel_err_c(post.mu_bar[(row, c)], x.mu))
                        .max(rel_err(post.tau_bar[(row, c)], x.tau));
                    checked += 1;
                }
            }
        }
    }
    assert!(worst < 1e-10, "max relative error {worst:e}");
}

#[test]
fn ae_denoiser_matches_odds_form() {
    let mut rng = TrialRng::seed_from_u64(12);
    let (n, m) = (100, 100);
    let r = CMat::from_fn(n, m, |_, _| random_c(&mut rng, 2.0));
    let xi = RMat::from_fn(n, m, |_, _| rng.random_range(0.1..2.0));
    let hyper = AeHyper {
        mu0: random_c(&mut rng, 0.5),
        tau0: rng.random_range(0.1..3.0),
        sigma_n2: 0.1,
        rho: RMat::from_fn(n, m, |_, _| rng.random_range(0.001..0.999)),
    };
    let post = ae_denoise(&r, &xi, &hyper).unwrap();
    let mut worst: f64 = 0.0;
    for c in 0..m {
        for j in 0..n {
            let x = terms(r[(j, c)], xi[(j, c)], hyper.mu0, hyper.tau0);
            let rho = hyper.rho[(j, c)];
            let pi = rho / (rho + (1.0 - rho) * (-x.llr).exp());
            let w = x.mu * pi;
            let u = pi * (x.mu.norm_sqr() + x.tau) - w.norm_sqr();
            worst = worst
                .max(rel_err(post.pi[(j, c)], pi))
                .max(rel_err_c(post.w_hat[(j, c)], w))
                .max(rel_err(post.u_hat[(j, c)], u));
        }
    }
    assert!(worst < 1e-10, "max relative error {worst:e}");
}

/// Root of the activity derivative with each column's posterior mass on
/// "silent" and "exactly one sequence" normalised to one, found by bisection.
fn stationary_lambda(pi: &RMat, device: usize, per_device: usize) -> f64 {
    let mut silent = Vec::new();
    let mut single = Vec::new();
    for c in 0..pi.cols() {
        let p: Vec<f64> = (0..per_device)
            .map(|i| pi[(device * per_device + i, c)])
            .collect();
        let a: f64 = p.iter().map(|x| 1.0 - x).product();
        let b: f64 = (0..per_device)
            .map(|i| {
                p[i] * (0..per_device)
                    .filter(|&j| j != i)
                    .map(|j| 1.0 - p[j])
                    .product::<f64>()
            })
            .sum();
        silent.push(a / (a + b));
        single.push(b / (a + b));
    }
    let slope = |lam: f64| -> f64 {
        silent
            .iter()
            .zip(&single)
            .map(|(a, b)| -a / (1.0 - lam) + b / lam)
            .sum()
    };
    let (mut lo, mut hi) = (1e-15, 1.0 - 1e-15);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn activity_update_is_a_stationary_point() {
    let mut rng = TrialRng::seed_from_u64(13);
    for _ in 0..1000 {
        let per_device = rng.random_range(1..=4);
        let devices = rng.random_range(1..=3);
        let cols = rng.random_range(1..=8);
        let sharp = rng.random_bool(0.3);
        let pi = RMat::from_fn(devices * per_device, cols, |_, _| {
            let u: f64 = rng.random_range(0.0..0.999);
            if sharp {
                u.powi(6)
            } else {
                u
            }
        });
        let got = lambda_update(&pi, per_device);
        for k in 0..devices {
            let want = stationary_lambda(&pi, k, per_device);
            assert!(
                (got[k] - want).abs() < 1e-6,
                "device {k}: {} vs {want}",
                got[k]
            );
        }
    }
}

#[test]
fn initial_activity_matches_dense_grid_search() {
    let psi = |c: f64| 0.5 * libm::erfc(c / std::f64::consts::SQRT_2);
    let pdf = |c: f64| (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    for (k, i, l) in [
        (100, 2, 30),
        (20, 2, 32),
        (100, 4, 40),
        (50, 2, 40),
        (100, 2, 16),
    ] {
        let ki = (k * i) as f64;
        let l = l as f64;
        let mut best = f64::NEG_INFINITY;
        for step in 1..=2_000_000 {
            let c = step as f64 * 1e-5;
            let g = (1.0 + c * c) * psi(c) - c * pdf(c);
            best = best.max((1.0 - 2.0 * ki * g / l) / (1.0 + c * c - 2.0 * g));
        }
        let want = l / ki * best;
        let got = lambda_init(k, i, l as usize);
        assert!(
            rel_err(got, want) < 1e-6,
            "K={k} I={i} L={l}: {got} vs {want}"
        );
    }
}

/// Plain single-column Bernoulli-Gaussian AMP with elementwise EM and no
/// activity smoothing.
fn single_column_amp(
    phi: &CMat,
    y: &[Complex64],
    sigma2: f64,
    cfg: &AmpConfig,
) -> (Vec<Complex64>, usize) {
    let (l, n) = (phi.rows(), phi.cols());
    let abs2 = |r: usize, j: usize| phi[(r, j)].norm_sqr();
    let rho0 = lambda_init(n / 2, 2, l);
    let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let phi_norm = phi.frobenius_norm();
    let mut tau0 = ((y_norm - l as f64 * sigma2) / (phi_norm * rho0)).max(1e-6);
    let mut mu0 = Complex64::new(0.0, 0.0);
    let mut rho = vec![rho0; n];
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut vx = vec![1.0; n];
    let mut z = y.to_vec();
    let mut v = vec![1.0; l];
    let mut iterations = 0;
    for t in 1..=cfg.max_iterations {
        let mut v_new = vec![0.0; l];
        let mut z_new = vec![Complex64::new(0.0, 0.0); l];
        for r in 0..l {
            v_new[r] = (0..n).map(|j| abs2(r, j) * vx[j]).sum();
            let px: Complex64 = (0..n).map(|j| phi[(r, j)] * x[j]).sum();
            z_new[r] = px - (y[r] - z[r]) * v_new[r] / (sigma2 + v[r]);
        }
        for r in 0..l {
            v[r] = cfg.kappa * v[r] + (1.0 - cfg.kappa) * v_new[r];
            z[r] = z[r] * cfg.kappa + z_new[r] * (1.0 - cfg.kappa);
        }
        let mut pis = vec![0.0; n];
        let mut mus = vec![Complex64::new(0.0, 0.0); n];
        let mut taus = vec![0.0; n];
        let prev = x.clone();
        for j in 0..n {
            let var = 1.0 / (0..l).map(|r| abs2(r, j) / (sigma2 + v[r])).sum::<f64>();
            let corr: Complex64 = (0..l)
                .map(|r| phi[(r, j)].conj() * (y[r] - z[r]) / (sigma2 + v[r]))
                .sum();
            let pseudo = x[j] + corr * var;
            let tm = terms(pseudo, var, mu0, tau0);
            let p = rho[j] / (rho[j] + (1.0 - rho[j]) * (-tm.llr).exp());
            x[j] = tm.mu * p;
            vx[j] = (p * (tm.mu.norm_sqr() + tm.tau) - x[j].norm_sqr()).max(0.0);
            pis[j] = p;
            mus[j] = tm.mu;
            taus[j] = tm.tau;
        }
        let mass: f64 = pis.iter().sum();
        if mass >= 1e-12 {
            mu0 = (0..n).map(|j| mus[j] * pis[j]).sum::<Complex64>() / mass;
            tau0 = (0..n)
                .map(|j| pis[j] * ((mu0 - mus[j]).norm_sqr() + taus[j]))
                .sum::<f64>()
                / mass;
        }
        rho = pis;
        iterations = t;
        let den: f64 = prev.iter().map(|a| a.norm_sqr()).sum();
        let num: f64 = x.iter().zip(&prev).map(|(a, b)| (a - b).norm_sqr()).sum();
        if den > 0.0 && (num / den).sqrt() < cfg.epsilon {
            break;
        }
    }
    (x, iterations)
}

#[test]
fn one_antenna_without_smoothing_is_plain_bg_amp() {
    let (k, i, l) = (20, 2, 24);
    let mut rng = TrialRng::seed_from_u64(14);
    let cb = Codebook::generate_with(k, i, l, &mut rng).unwrap();
    let sigma2 = 0.01;
    let mut w = vec![Complex64::new(0.0, 0.0); k * i];
    for d in [1, 6, 13] {
        w[d * i + rng.random_range(0..i)] = complex_normal(&mut rng, 1.0);
    }
    let y: Vec<Complex64> = (0..l)
        .map(|r| {
            (0..k * i)
                .map(|j| cb.matrix()[(r, j)] * w[j])
                .sum::<Complex64>()
                + complex_normal(&mut rng, sigma2)
        })
        .collect();
    let cfg = AeConfig {
        scheme: NeighborScheme::disabled(),
        ..AeConfig::default()
    };
    let res = run_ae_jabid(
        &CMat::from_col_major(l, 1, y.clone()).unwrap(),
        &cb,
        sigma2,
        &cfg,
    )
    .unwrap();
    let (want, iterations) = single_column_amp(cb.matrix(), &y, sigma2, &cfg.amp);
    assert_eq!(res.iterations, iterations);
    let scale = want.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (j, w) in want.iter().enumerate() {
        assert!((res.w_hat[(j, 0)] - w).norm() < 1e-8 * scale, "entry {j}");
    }
}
