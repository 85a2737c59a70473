use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use valproj::data::{add_noise, shepp_logan};
use valproj::denoise::{default_levels, Denoiser, ThresholdMode};
use valproj::dip::{dip_run, DipConfig, DipLoss};
use valproj::net::{Activation, DenseNet};
use valproj::operator::LinearOperator;
use valproj::projection::ValidSet;
use valproj::solvers::{pm_solve, red_solve, GroundTruth, SolveConfig};
use valproj::trace::RunTrace;

fn instance(side: usize, angles: usize, pct: f64, seed: u64) -> (ValidSet, GroundTruth, f64) {
    let phantom = shepp_logan(side);
    let x = phantom.pixels;
    let a = LinearOperator::radon_sparse(side, angles).unwrap();
    let y = a.apply(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y_delta, delta) = add_noise(&y, pct, &mut rng).unwrap();
    let rel_delta = delta / y_delta.norm();
    let v = ValidSet::new(a, y_delta, delta).unwrap();
    (v, GroundTruth::image(x, side), rel_delta)
}

fn show(tag: &str, trace: &RunTrace, secs: f64) {
    let r = trace.last().unwrap();
    let best = trace.best_by_psnr().unwrap();
    println!(
        "{tag}: {secs:.0}s last psnr={:.2} ssim={:.3} rel={:.4} | best psnr={:.2}@{}",
        r.psnr.unwrap(),
        r.ssim.unwrap(),
        r.rel_meas_err.unwrap(),
        best.psnr.unwrap(),
        best.iter
    );
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "pm".into());
    let wavelet = |side: usize| Denoiser::Wavelet2d {
        side,
        levels: default_levels(side),
        mode: ThresholdMode::Soft,
    };

    if which == "pm" {
        for pct in [0.30, 0.01] {
            let (v, gt, _) = instance(128, 30, pct, 11);
            let cfg = SolveConfig {
                max_iters: 300,
                denoiser: wavelet(128),
                record_every: 25,
                ..SolveConfig::default()
            };
            let t0 = std::time::Instant::now();
            let (_, trace) = pm_solve(&v, &cfg, Some(&gt)).unwrap();
            show(&format!("pm {pct}"), &trace, t0.elapsed().as_secs_f64());
            for r in trace.records() {
                println!(
                    "  iter {:>3} psnr {:.2} ssim {:.3} mu {:.3e} outers {}",
                    r.iter,
                    r.psnr.unwrap(),
                    r.ssim.unwrap(),
                    r.mu,
                    r.outer_iters
                );
            }
        }
    }

    if which == "probe30" || which == "probe1" {
        let pct = if which == "probe30" { 0.30 } else { 0.01 };
        let side = 128;
        let (v, gt, _) = instance(side, 30, pct, 11);
        let den = wavelet(side);
        let proj_cfg = valproj::projection::ProjectionConfig::default();
        let sigma_hat = |x: &valproj::Vector| -> f64 {
            let mut img = x.as_slice().to_vec();
            valproj::denoise::haar_forward_2d(&mut img, side, 1).unwrap();
            let h = side / 2;
            let mut hh: Vec<f64> = (h..side)
                .flat_map(|r| (h..side).map(move |c| (r, c)))
                .map(|(r, c)| img[r * side + c].abs())
                .collect();
            hh.sort_by(|a, b| a.partial_cmp(b).unwrap());
            hh[hh.len() / 2] / 0.6745
        };
        let mut x = valproj::Vector::zeros(side * side);
        for k in 1..=80 {
            let s = sigma_hat(&x);
            let d = den.apply(&x).unwrap();
            let disp = d.sub(&x).norm();
            let r_rel = v.residual_norm(&d).unwrap() / v.delta();
            let res = valproj::projection::project_valid(&d, &v, &proj_cfg).unwrap();
            x = res.x_proj;
            let p = valproj::metrics::psnr(&x, &gt.x, 1.0).unwrap();
            println!(
                "k {k:>3} sigma {s:.3e} disp {disp:.3e} rD/delta {r_rel:.4} mu {:.3e} in {} psnr {p:.2}",
                res.mu, res.inside
            );
        }
    }

    if which == "red30" || which == "red1" {
        let pct = if which == "red30" { 0.30 } else { 0.01 };
        let mus: &[f64] = if which == "red30" {
            &[0.00001, 0.00003]
        } else {
            &[0.001, 0.003]
        };
        let (v, gt, _) = instance(128, 30, pct, 11);
        for &mu in mus {
            let cfg = SolveConfig {
                max_iters: 300,
                denoiser: wavelet(128),
                red_mu: Some(mu),
                record_every: 75,
                ..SolveConfig::default()
            };
            let t0 = std::time::Instant::now();
            match red_solve(&v, &cfg, Some(&gt)) {
                Ok((_, trace)) => show(&format!("red {pct} mu={mu}"), &trace, t0.elapsed().as_secs_f64()),
                Err(e) => println!("red {pct} mu={mu}: error {e}"),
            }
        }
    }

    if which.starts_with("dip") {
        // dip <lr_millis> e.g. dip1 -> lr 1e-3, dip03 -> 3e-4
        let lr = match which.as_str() {
            "dip03" => 3e-4,
            "dip3" => 3e-3,
            _ => 1e-3,
        };
        let side = 32;
        let (v, gt, rel_delta) = instance(side, 16, 0.01, 21);
        println!("delta/||y_delta|| = {rel_delta:.5}");
        let mut net_rng = ChaCha8Rng::seed_from_u64(77);
        let net0 = DenseNet::new(
            &[64, 256, 1024, side * side],
            &[Activation::Relu, Activation::Relu, Activation::Sigmoid],
            &mut net_rng,
        )
        .unwrap();
        for loss in [DipLoss::Dip, DipLoss::DipDelta] {
            let mut net = net0.clone();
            let cfg = DipConfig {
                loss,
                iters: 20_000,
                lr,
                record_every: 200,
                z_seed: 5,
            };
            let t0 = std::time::Instant::now();
            let (_, trace) = dip_run(&v, &mut net, &cfg, Some(&gt)).unwrap();
            show(&format!("{loss:?} lr={lr}"), &trace, t0.elapsed().as_secs_f64());
            let n = trace.len();
            for (i, r) in trace.records().iter().enumerate() {
                if i % 10 == 0 || i + 1 == n {
                    println!(
                        "  iter {:>5} psnr {:.2} rel {:.4}",
                        r.iter,
                        r.psnr.unwrap(),
                        r.rel_meas_err.unwrap()
                    );
                }
            }
        }
    }
}
