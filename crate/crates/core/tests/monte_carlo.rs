//! Sampler statistics against closed forms, plus end-to-end reproducibility.

use std::process::Command;

use w2lab::gaussian_exact::{kl_pipeline_gaussian, moment_recursion, w2_spherical_gaussians};
use w2lab::harness::acceptance::{ks_p_value, ks_statistic};
use w2lab::harness::experiments::{preset, run_experiment};
use w2lab::ot::{w2_exact_assignment, w2_sliced, SampleCloud};
use w2lab::profiles::ScoreErrorProfile;
use w2lab::sampler::{
    ddpm_run, follmer_run, make_perturbed_score, run_trajectory, PerturbationMode, SampleMatrix,
    SamplerConfig, ScoreModel,
};
use w2lab::schedules::VarianceSchedule;
use w2lab::targets::{GaussianMixture, SphericalGaussian, Target};

fn gaussian(mean: Vec<f64>, var: f64) -> (SphericalGaussian, Target) {
    let g = SphericalGaussian::new(mean, var).unwrap();
    (g.clone(), Target::Gaussian(g))
}

/// Checks every coordinate's sample mean and variance within `z` standard errors.
fn assert_moments(samples: &SampleMatrix, mean: &[f64], var: f64, z: f64) {
    let m = samples.moments();
    for j in 0..samples.cols {
        let dm = (m.mean[j] - mean[j]).abs();
        assert!(dm <= z * m.mean_se[j], "coord {j}: mean {} vs {} (se {})", m.mean[j], mean[j], m.mean_se[j]);
        let dv = (m.var[j] - var).abs();
        assert!(dv <= z * m.var_se[j], "coord {j}: var {} vs {var} (se {})", m.var[j], m.var_se[j]);
    }
}

#[test]
fn standard_target_is_a_fixed_point() {
    // sigma = 1, mu_hat = mu: every step maps N(0, I) to itself
    let (_, target) = gaussian(vec![0.0; 3], 1.0);
    let s = VarianceSchedule::harmonic(64).unwrap();
    let out = ddpm_run(&s, &target, &SamplerConfig::new(vec![0.0; 3], 20_000, 11)).unwrap();
    assert_moments(&out, &[0.0; 3], 1.0, 5.0);
    let n = out.rows as f64;
    for a in 0..3 {
        for b in a + 1..3 {
            let c: f64 = out.iter_rows().map(|r| r[a] * r[b]).sum::<f64>() / n;
            assert!(c.abs() <= 5.0 / n.sqrt(), "cov({a},{b}) = {c}");
        }
    }
}

#[test]
fn ddpm_matches_moment_recursion() {
    let (g, target) = gaussian(vec![1.0, -1.0], 4.0);
    let mu_hat = vec![0.5, 0.0];
    let s = VarianceSchedule::harmonic(16).unwrap();
    let (mean, var) = moment_recursion(&s, &g, &mu_hat, None).unwrap().terminal_law();
    let out = ddpm_run(&s, &target, &SamplerConfig::new(mu_hat, 20_000, 5)).unwrap();
    assert_moments(&out, &mean, var, 5.0);
}

#[test]
fn follmer_twin_agrees_pathwise() {
    let (_, target) = gaussian(vec![2.0, 0.0, -1.0], 0.5);
    for n in [1usize, 50] {
        let s = VarianceSchedule::harmonic(n).unwrap();
        let cfg = SamplerConfig::new(vec![1.0, 1.0, 1.0], 200, 17);
        let a = ddpm_run(&s, &target, &cfg).unwrap();
        let b = follmer_run(&s, &target, &cfg).unwrap();
        let worst = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max);
        assert!(worst < 1e-10, "N = {n}: {worst:e}");
    }
}

#[test]
fn zero_score_variance_closed_form() {
    // Y_{i+1} = Y_i / sqrt(1 - beta_i) + sqrt(beta_i) Z: mean sqrt(t_N) mu_hat,
    // variance v_{i+1} = v_i / (1 - beta_i) + beta_i from v_0 = 1
    let (_, target) = gaussian(vec![0.0; 2], 3.0);
    let s = VarianceSchedule::constant(32, 0.04, 0.0).unwrap();
    let mu_hat = vec![1.5, -0.5];
    let mut v = 1.0;
    for b in s.betas() {
        v = v / (1.0 - b) + b;
    }
    let mean: Vec<f64> = mu_hat.iter().map(|m| s.t_n().sqrt() * m).collect();
    let cfg = SamplerConfig::new(mu_hat, 20_000, 23).with_score_model(ScoreModel::Zero);
    let out = ddpm_run(&s, &target, &cfg).unwrap();
    assert_moments(&out, &mean, v, 5.0);
}

#[test]
fn constant_score_shift_moves_the_mean() {
    let (g, target) = gaussian(vec![0.0; 2], 2.0);
    let s = VarianceSchedule::harmonic(32).unwrap();
    let model = make_perturbed_score(
        &target,
        ScoreErrorProfile::Constant { eps: 0.2 },
        PerturbationMode::ConstantVector { u: vec![1.0, 0.0] },
        s.times(),
    )
    .unwrap();
    let (mean, var) = moment_recursion(&s, &g, &[0.0; 2], Some(&model)).unwrap().terminal_law();
    let (clean, _) = moment_recursion(&s, &g, &[0.0; 2], None).unwrap().terminal_law();
    assert!(mean[0] - clean[0] > 0.05, "shift {}", mean[0] - clean[0]);
    let cfg = SamplerConfig::new(vec![0.0; 2], 20_000, 29).with_score_model(model);
    let out = ddpm_run(&s, &target, &cfg).unwrap();
    assert_moments(&out, &mean, var, 5.0);
}

#[test]
fn trajectory_marginals_are_normal() {
    let (g, target) = gaussian(vec![1.0], 4.0);
    let s = VarianceSchedule::harmonic(16).unwrap();
    let state = moment_recursion(&s, &g, &[0.0], None).unwrap();
    let chains = 2_000;
    let cfg = SamplerConfig::new(vec![0.0], chains, 31);
    let paths: Vec<SampleMatrix> = (0..chains).map(|c| run_trajectory(&s, &target, &cfg, c).unwrap()).collect();
    for step in [0usize, 8, 16] {
        let t = s.times()[step];
        // mu_seq and var_seq describe sqrt(t_i) Y_i
        let mean = state.mu_seq[step][0] / t.sqrt();
        let sd = (state.var_seq[step] / t).sqrt();
        let xs: Vec<f64> = paths.iter().map(|p| p.row(step)[0]).collect();
        let d = ks_statistic(xs, mean, sd).unwrap();
        let p = ks_p_value(d, chains);
        assert!(p > 1e-3, "step {step}: KS p = {p}");
    }
    // the last trajectory row is the terminal sample of the same chain
    let terminal = ddpm_run(&s, &target, &cfg).unwrap();
    assert_eq!(paths[7].row(16), terminal.row(7));
}

#[test]
fn mixture_mode_weights() {
    let mixture = GaussianMixture::new(
        vec![0.3, 0.7],
        vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
        vec![0.5, 0.5],
    )
    .unwrap();
    let target = Target::Mixture(mixture);
    let n = 5_000;
    let se = (0.3f64 * 0.7 / n as f64).sqrt();

    let direct = target.sample(n, 41);
    let frac = (0..n).filter(|i| direct[2 * i] < 0.0).count() as f64 / n as f64;
    assert!((frac - 0.3).abs() <= 4.0 * se, "direct draw fraction {frac}");

    // the sampler carries its own discretization bias, hence the extra slack
    let s = VarianceSchedule::cosine(512, 0.008, None).unwrap();
    let out = ddpm_run(&s, &target, &SamplerConfig::new(vec![0.0; 2], n, 43)).unwrap();
    let frac = out.iter_rows().filter(|r| r[0] < 0.0).count() as f64 / n as f64;
    assert!((frac - 0.3).abs() <= 4.0 * se + 0.02, "sampler fraction {frac}");
}

#[test]
fn sliced_w2_is_stable_across_projection_seeds() {
    let (_, target) = gaussian(vec![0.0; 4], 2.0);
    let s = VarianceSchedule::harmonic(32).unwrap();
    let out = ddpm_run(&s, &target, &SamplerConfig::new(vec![1.0; 4], 2_000, 47)).unwrap();
    let x = SampleCloud::new(out.data, 4).unwrap();
    let y = SampleCloud::new(target.sample(2_000, 53), 4).unwrap();
    let a = w2_sliced(&x, &y, 500, 1).unwrap();
    let b = w2_sliced(&x, &y, 500, 2).unwrap();
    assert!((a - b).abs() <= 0.02 * a.max(b), "{a} vs {b}");
}

#[test]
fn empirical_ot_tracks_gaussian_w2() {
    // two independent clouds of 4096 points, shifted by 2 along e_1
    let d = 2;
    let n = 4096;
    let (_, p) = gaussian(vec![0.0; d], 1.0);
    let (_, q) = gaussian(vec![2.0, 0.0], 1.0);
    let x = SampleCloud::new(p.sample(n, 61), d).unwrap();
    let y = SampleCloud::new(q.sample(n, 67), d).unwrap();
    let exact = w2_spherical_gaussians(&[0.0; 2], 1.0, &[2.0, 0.0], 1.0).unwrap();
    let emp = w2_exact_assignment(&x, &y).unwrap();
    assert!((emp - exact).abs() <= 0.1 * exact, "{emp} vs {exact}");
}

#[test]
fn harmonic_kl_decreases_with_steps() {
    let g = SphericalGaussian::new(vec![0.0; 3], 2.0).unwrap();
    let mu_hat = [1.0, 0.0, 0.0];
    let kl: Vec<f64> = [8usize, 16, 32, 64, 128, 256, 512, 1024]
        .iter()
        .map(|&n| kl_pipeline_gaussian(&VarianceSchedule::harmonic(n).unwrap(), &g, &mu_hat, None).unwrap())
        .collect();
    assert!(kl.windows(2).all(|w| w[1] < w[0]), "{kl:?}");
    assert!(kl[0] > 0.0);
}

#[test]
fn dimension_sweep_scales_as_sqrt_d() {
    let out = run_experiment(&preset("E1").unwrap()).unwrap();
    let base = out.rows[0].get("exact_w2").unwrap() / (out.rows[0].d as f64).sqrt();
    for r in &out.rows {
        let w = r.get("exact_w2").unwrap();
        let scaled = w / (r.d as f64).sqrt();
        assert!((scaled - base).abs() <= 1e-9 * base, "d = {}: {scaled} vs {base}", r.d);
    }
}

#[test]
fn cli_run_is_byte_identical_across_invocations() {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_w2lab"))
            .args(["run", "--sigma2", "2", "--d", "3", "--mu-hat-offset", "1", "--chains", "300"])
            .args(["--seed", "9", "--n", "32", "--eps", "0.05"])
            .env("W2LAB_THREADS", "3")
            .output()
            .unwrap()
    };
    let a = run();
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = Command::new(env!("CARGO_BIN_EXE_w2lab"))
        .args(["run", "--sigma2", "2", "--d", "3", "--mu-hat-offset", "1", "--chains", "300"])
        .args(["--seed", "9", "--n", "32", "--eps", "0.05"])
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
    assert!(a.stdout.len() > 300 * 3 * 2);
}
