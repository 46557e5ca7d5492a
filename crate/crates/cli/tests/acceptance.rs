//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on
//! any failure. Run with `cargo test -p fwdim-cli --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fwdim::kernel::{
    local_coefficients, local_poly_fit_predict, nw_estimate, Bandwidth, KernelKind, KernelSpec, LocalFit, LocalOrder,
};
use fwdim::linear_maps::{fit_polynomial, predict_polynomial};
use fwdim::mva::{mva_on_times, MvaInputs};
use fwdim::neural_net::{forward, init_params, loss_and_gradients, pre_activations, train, MlpParams, MlpSpec, TrainConfig};
use fwdim::oracle::brute_force_im;
use fwdim::portfolio::{Instrument, NettingSet};
use fwdim::regression::{moment_diagnostics, RegressionData, Verdict};
use fwdim::sde::{build_time_grid, simulate_paths, ModelSpec, TimeGrid};
use fwdim_cli::{commands, io, run, Cli, Command, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

type Check = Result<String, String>;

const Z99: f64 = 2.326_347_874_040_840_8;
const MPOR: f64 = 10.0 / 365.0;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn forward_book(notional: f64) -> NettingSet {
    NettingSet::new(vec![Instrument::Forward { strike: 100.0, maturity: 1.0, notional }]).unwrap()
}

fn gaussian_oracle() -> Check {
    // Small-vol GBM: the forward's PnL over the margin period is Gaussian to
    // well below the tolerance, with variance (S_t vol)^2 mpor.
    let vol = 0.01;
    let model = ModelSpec::Gbm { s0: 100.0, drift: 0.0, vol };
    let grid = build_time_grid(1.0, 0.25, MPOR).unwrap();
    let (n_outer, n_inner, seed) = (200, 50_000, 101);
    let start = Instant::now();
    let surface = brute_force_im(&model, &forward_book(1.0), &grid, n_outer, n_inner, 0.99, seed, 0.0)
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let cube = simulate_paths(&model, &grid, n_outer, seed).unwrap();
    let mut sum = 0.0;
    for path in 0..n_outer {
        for k in 0..grid.n_obs() {
            let s = cube.state(path, TimeGrid::obs_column(k))[0];
            let exact = s * vol * MPOR.sqrt() * Z99;
            sum += (surface.get(path, k) / exact - 1.0).abs();
        }
    }
    let mare = sum / (n_outer * grid.n_obs()) as f64;
    ensure(mare < 0.03 && secs < 300.0, format!("MARE {:.3}% (< 3%), runtime {secs:.1}s (< 300s)", 100.0 * mare))
}

const POLY_CONFIG: &str = r#"
schema_version = 1
seed = 2024

[model]
kind = "gbm"
s0 = 100.0
drift = 0.0
vol = 0.2

[grid]
horizon = 1.0
step = 0.25
mpor = 0.0273972602739726

[[netting_set]]
kind = "forward"
strike = 100.0
maturity = 1.0
notional = 1.0

[oracle]
n_outer = 500
n_inner = 20000

[approx]
method = "poly"
n_paths = 50000

[approx.poly]
degree = 2

[mva]
r = 0.0
lambda_b = 0.0
lambda_c = 0.0
lambda_fund = 0.01
s_i = 0.0
recovery_c = 0.4
"#;

fn poly_vs_oracle(dir: &Path) -> Check {
    let cfg = RunConfig::parse(POLY_CONFIG, dir.join("poly")).map_err(|e| e.to_string())?;
    commands::cmd_compare(&cfg).map_err(|e| e.to_string())?;
    let rows = io::read_csv(
        &commands::comparison_path(&cfg.output_dir, fwdim::approx::Method::Poly),
        io::COMPARISON_SCHEMA,
        &io::COMPARISON_HEADER,
    )
    .map_err(|e| e.to_string())?;
    let rel: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let worst = rel.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let shown: Vec<String> = rel.iter().map(|r| format!("{:+.2}%", 100.0 * r)).collect();
    ensure(worst < 0.05, format!("relative error per time [{}] (each < 5%)", shown.join(", ")))
}

fn fixed(h: f64) -> KernelSpec {
    KernelSpec { kind: KernelKind::Gaussian, bandwidth: Bandwidth::Fixed(h) }
}

fn kernel_fixture(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let y = x.iter().map(|v| v * v + r.random_range(0.0..0.5)).collect();
    (x, y)
}

fn kernel_identities() -> Check {
    let mut nw_gap = 0.0f64;
    for seed in 0..1000u64 {
        let (x, y) = kernel_fixture(seed, 40);
        let h = 0.2 + (seed % 13) as f64 * 0.15;
        let q: Vec<f64> = (0..7).map(|i| -3.0 + i as f64).collect();
        let fit = LocalFit::new(x, y, fixed(h), LocalOrder::Constant).unwrap();
        let a = nw_estimate(&fit, &q).unwrap();
        let b = local_poly_fit_predict(&fit, &q).unwrap().values;
        nw_gap = a.iter().zip(&b).fold(nw_gap, |m, (u, v)| m.max((u - v).abs()));
    }

    let (x, y) = kernel_fixture(5000, 500);
    let fit = LocalFit::new(x, y.clone(), fixed(1e7), LocalOrder::Constant).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mean_gap =
        nw_estimate(&fit, &[-5.0, 0.0, 1.3, 9.0]).unwrap().iter().fold(0.0f64, |m, v| m.max((v / mean - 1.0).abs()));

    let mut affine_gap = 0.0f64;
    for (seed, h) in [(1u64, 0.05), (2, 0.3), (3, 2.0), (4, 40.0)] {
        let (x, _) = kernel_fixture(6000 + seed, 200);
        let y: Vec<f64> = x.iter().map(|v| -1.5 + 3.25 * v).collect();
        let fit = LocalFit::new(x.clone(), y.clone(), fixed(h), LocalOrder::Linear).unwrap();
        let pred = local_poly_fit_predict(&fit, &x).unwrap().values;
        let num = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
        let den = y.iter().map(|t| t * t).sum::<f64>().sqrt();
        affine_gap = affine_gap.max(num / den);
    }
    ensure(
        nw_gap < 1e-12 && mean_gap < 1e-8 && affine_gap < 1e-9,
        format!("p=0 vs NW {nw_gap:.1e} (< 1e-12), h->inf vs mean {mean_gap:.1e} (< 1e-8), affine residual {affine_gap:.1e} (< 1e-9)"),
    )
}

fn orthogonality() -> Check {
    // Unweighted: polynomial residuals against every basis function.
    let mut r = rng(40);
    let mut poly_worst = 0.0f64;
    for trial in 0..50 {
        let n = 50 + 10 * trial;
        let x: Vec<f64> = (0..n).map(|_| r.random_range(60.0..140.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.02 * (v - 100.0).powi(2) + r.random_range(0.0..5.0)).collect();
        let d = RegressionData::new(0, x.clone(), y.clone()).unwrap();
        for degree in 0..=4 {
            let fit = fit_polynomial(&d, degree).unwrap();
            let pred = predict_polynomial(&fit, &x).values;
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            for j in 0..=degree {
                let phi: Vec<f64> = x.iter().map(|v| ((v - fit.x_mean) / fit.x_scale).powi(j as i32)).collect();
                let ip: f64 = resid.iter().zip(&phi).map(|(a, b)| a * b).sum();
                let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt() * phi.iter().map(|v| v * v).sum::<f64>().sqrt();
                poly_worst = poly_worst.max(ip.abs() / scale);
            }
        }
    }
    // Kernel-weighted: local residuals against the local basis at each query.
    let (x, y) = kernel_fixture(41, 400);
    let h = 0.35;
    let mut kern_worst = 0.0f64;
    for order in [LocalOrder::Constant, LocalOrder::Linear] {
        let fit = LocalFit::new(x.clone(), y.clone(), fixed(h), order).unwrap();
        for i in 0..=60 {
            let q = -3.0 + 0.1 * i as f64;
            let c = local_coefficients(&fit, q).unwrap();
            for j in 0..c.beta.len() {
                let (mut ip, mut scale) = (0.0, 0.0);
                for (xi, yi) in x.iter().zip(&y) {
                    let w = (-(xi - q).powi(2) / (2.0 * h * h)).exp();
                    let fitted = c.beta[0] + c.beta.get(1).map_or(0.0, |b| b * (xi - q));
                    let phi = (xi - q).powi(j as i32);
                    ip += w * (yi - fitted) * phi;
                    scale += (w * yi * phi).abs();
                }
                kern_worst = kern_worst.max(ip.abs() / scale);
            }
        }
    }
    ensure(
        poly_worst < 1e-8 && kern_worst < 1e-8,
        format!("unweighted {poly_worst:.1e}, kernel-weighted {kern_worst:.1e} (both < 1e-8)"),
    )
}

fn mse(params: &MlpParams, x: &[f64], y: &[f64]) -> f64 {
    forward(params, x).unwrap().iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn neural_net() -> Check {
    let mut r = rng(55);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 20 {
        let widths = vec![1, r.random_range(2..7), r.random_range(2..7), 1];
        let mut params = init_params(&MlpSpec::new(widths, r.random()).unwrap()).unwrap();
        for b in params.layers.iter_mut().flat_map(|l| l.bias.iter_mut()) {
            *b = r.random_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..10).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.0)).collect();
        if !x.iter().all(|xi| pre_activations(&params, &[*xi]).iter().all(|z| z.abs() > 1e-3)) {
            continue;
        }
        let (_, grad) = loss_and_gradients(&params, &x, &y).unwrap();
        for (i, g) in grad.iter().enumerate() {
            let step = 1e-4;
            let mut plus = params.clone();
            *plus.iter_mut().nth(i).unwrap() += step;
            let mut minus = params.clone();
            *minus.iter_mut().nth(i).unwrap() -= step;
            let fd = (mse(&plus, &x, &y) - mse(&minus, &x, &y)) / (2.0 * step);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
        }
        checked += 1;
    }

    let n = 2000;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let data = RegressionData::new(0, x.clone(), x.iter().map(|v| v * v).collect()).unwrap();
    let spec = MlpSpec::new(vec![1, 8, 8, 1], 3).unwrap();
    let cfg = TrainConfig { epochs: 500, ..TrainConfig::default() };
    let a = train(&spec, &cfg, &data).map_err(|e| e.to_string())?;
    let b = train(&spec, &cfg, &data).map_err(|e| e.to_string())?;
    let fit_mse = a.final_mse();
    ensure(
        worst < 1e-4 && fit_mse < 1e-3 && a == b,
        format!(
            "gradient rel err {worst:.1e} over {checked} points (< 1e-4), x^2 MSE {fit_mse:.1e} in {} epochs (< 1e-3), repeat identical: {}",
            a.log.len(),
            a == b
        ),
    )
}

fn moments() -> Check {
    let n = 100_000;
    let mut r = rng(66);
    let gauss: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let t3 = StudentT::new(3.0).unwrap();
    let heavy: Vec<f64> = (0..n).map(|_| t3.sample(&mut r)).collect();
    let g = moment_diagnostics(&gauss, 200, 1).map_err(|e| e.to_string())?;
    let h = moment_diagnostics(&heavy, 200, 2).map_err(|e| e.to_string())?;
    let m4 = g.moment(4).unwrap().estimate;
    ensure(
        g.verdict == Verdict::Pass && (m4 / 3.0 - 1.0).abs() < 0.1 && h.verdict == Verdict::Flag,
        format!(
            "Gaussian {:?} with E[V^4] = {m4:.3} (3 +/- 10%), t3 {:?} (scaled CV {:.1} vs threshold {})",
            g.verdict,
            h.verdict,
            h.moment(4).unwrap().scaled_cv,
            h.threshold
        ),
    )
}

fn mva_closed_form() -> Check {
    let inp = MvaInputs { r: 0.03, lambda_b: 0.01, lambda_c: 0.02, lambda_fund: 0.015, s_i: 0.0, recovery_c: 0.4 };
    let (c, horizon, steps) = (250.0, 5.0, 100);
    let times: Vec<f64> = (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect();
    let got = mva_on_times(&vec![c; times.len()], &times, &inp).map_err(|e| e.to_string())?;
    let d = inp.decay_rate();
    let exact = inp.carry_spread() * c * (1.0 - (-d * horizon).exp()) / d;
    let rel = (got / exact - 1.0).abs();
    let zero = MvaInputs { lambda_fund: 0.0, s_i: 0.0, ..inp };
    let z = mva_on_times(&vec![c; times.len()], &times, &zero).map_err(|e| e.to_string())?;
    ensure(rel < 1e-3 && z == 0.0, format!("relative error {rel:.1e} at {steps} steps (< 0.1%), zero spread gives {z:?}"))
}

const DETERMINISM_CONFIG: &str = r#"
schema_version = 1
seed = 77

[model]
kind = "gbm"
s0 = 100.0
drift = 0.01
vol = 0.25

[grid]
horizon = 1.0
step = 0.25

[[netting_set]]
kind = "forward"
strike = 95.0
maturity = 1.5
notional = 2.0

[[netting_set]]
kind = "european_call"
strike = 110.0
maturity = 1.0
pricing_vol = 0.25
notional = -1.0

[oracle]
n_outer = 60
n_inner = 2000

[approx]
compare = ["poly", "kernel", "nn"]
n_paths = 3000

[approx.nn]
hidden = [8, 8]
epochs = 20

[mva]
r = 0.02
lambda_b = 0.01
lambda_c = 0.02
lambda_fund = 0.015
s_i = 0.0
recovery_c = 0.4
"#;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(dir: &Path) -> Check {
    let config = dir.join("det.toml");
    fs::write(&config, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let go = |name: &str, threads: usize| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = dir.join(name);
        let cli = Cli {
            command: Command::Compare { config: config.clone() },
            seed: None,
            threads: Some(threads),
            out: Some(out.clone()),
        };
        run(&cli).map_err(|e| e.to_string())?;
        Ok(snapshot(&out))
    };
    let base = go("t1", 1)?;
    let again = go("t1_again", 1)?;
    let t4 = go("t4", 4)?;
    let t7 = go("t7", 7)?;
    ensure(
        !base.is_empty() && base == again && base == t4 && base == t7,
        format!("{} files identical across repeat and 1/4/7 threads: {}", base.len(), base == again && base == t4 && base == t7),
    )
}

fn main() {
    let tmp = tempdir();
    let checks: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 closed-form Gaussian oracle", Box::new(gaussian_oracle)),
        ("2 polynomial approximator vs oracle", Box::new(|| poly_vs_oracle(&tmp))),
        ("3 kernel identities", Box::new(kernel_identities)),
        ("4 orthogonality", Box::new(orthogonality)),
        ("5 neural net gradients and fit", Box::new(neural_net)),
        ("6 moment diagnostics", Box::new(moments)),
        ("7 MVA closed form", Box::new(mva_closed_form)),
        ("8 end-to-end determinism", Box::new(|| determinism(&tmp))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    let _ = fs::remove_dir_all(&tmp);
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fwdim-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}
