use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use valproj::cg::{cg_solve_normal, CgConfig};
use valproj::data::{add_noise, shepp_logan};
use valproj::denoise::{Denoiser, ThresholdMode};
use valproj::metrics::{psnr, ssim};
use valproj::operator::LinearOperator;
use valproj::projection::ValidSet;
use valproj::solvers::{pm_solve, GroundTruth, SolveConfig};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "ls".into());
    let side = 128usize;
    let phantom = shepp_logan(side);
    let x = phantom.pixels;
    let a = LinearOperator::radon_sparse(side, 30).unwrap();
    let y = a.apply(&x).unwrap();

    if which == "ls" {
        // Least-squares ceiling: min-norm solution of A^T A x = A^T y via
        // plain normal-equation CG (mu -> data-only limit approximated by a
        // huge mu so the identity term vanishes relative to the data term).
        for (label, rhs_src, pct) in [("clean", true, 0.0), ("1%", false, 0.01), ("30%", false, 0.30)] {
            let target = if rhs_src {
                y.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                let (yd, _) = add_noise(&y, pct, &mut rng).unwrap();
                yd
            };
            let mu = 1e8;
            let b = a.adjoint_apply(&target).unwrap().scale(mu);
            let cfg = CgConfig {
                tol: 1e-10,
                max_iter: Some(2000),
            };
            match cg_solve_normal(&a, mu, &b, &cfg) {
                Ok(xls) => {
                    let p = psnr(&xls, &x, 1.0).unwrap();
                    let s = ssim(&xls, &x).unwrap();
                    println!("lsq[{label}] psnr {p:.2} ssim {s:.3}");
                }
                Err(e) => println!("lsq[{label}] failed: {e}"),
            }
        }
    }

    if which == "ceiling" {
        // True least-squares ceiling: CGLS on the normal equations with the
        // clean and 1% measurements, watching PSNR as deeper spectrum resolves.
        for (label, pct) in [("clean", 0.0), ("1%", 0.01)] {
            let target = if pct == 0.0 {
                y.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(11);
                let (yd, _) = add_noise(&y, pct, &mut rng).unwrap();
                yd
            };
            // Plain CG on A^T A x = A^T y, run segment by segment.
            let mut xk = valproj::Vector::zeros(side * side);
            let b = a.adjoint_apply(&target).unwrap();
            let mut r = b.clone();
            let mut p = r.clone();
            let mut rs = r.dot(&r);
            for seg in 1..=15 {
                for _ in 0..2000 {
                    let ap = a.adjoint_apply(&a.apply(&p).unwrap()).unwrap();
                    let alpha = rs / p.dot(&ap);
                    xk.axpy(alpha, &p);
                    r.axpy(-alpha, &ap);
                    let rs_new = r.dot(&r);
                    p = r.add(&p.scale(rs_new / rs));
                    rs = rs_new;
                }
                let pq = psnr(&xk, &x, 1.0).unwrap();
                let s = ssim(&xk, &x).unwrap();
                let rel = a.apply(&xk).unwrap().sub(&target).norm() / target.norm();
                println!(
                    "cgls[{label}] iters {:>5} psnr {pq:.2} ssim {s:.3} rel_res {rel:.5}",
                    seg * 2000
                );
            }
        }
    }

    if which == "levels" {
        for pct in [0.30, 0.01] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let (y_delta, delta) = add_noise(&y, pct, &mut rng).unwrap();
            let v = ValidSet::new(
                LinearOperator::radon_sparse(side, 30).unwrap(),
                y_delta,
                delta,
            )
            .unwrap();
            let gt = GroundTruth::image(x.clone(), side);
            for levels in [2, 3, 4, 5, 6] {
                for mode in [ThresholdMode::Soft, ThresholdMode::Hard] {
                    let cfg = SolveConfig {
                        max_iters: 300,
                        denoiser: Denoiser::Wavelet2d { side, levels, mode },
                        record_every: 300,
                        ..SolveConfig::default()
                    };
                    let t0 = std::time::Instant::now();
                    let (_, trace) = pm_solve(&v, &cfg, Some(&gt)).unwrap();
                    let r = trace.last().unwrap();
                    println!(
                        "pm pct={pct} levels={levels} {mode:?}: psnr {:.2} ssim {:.3} ({:.0}s)",
                        r.psnr.unwrap(),
                        r.ssim.unwrap(),
                        t0.elapsed().as_secs_f64()
                    );
                }
            }
        }
    }
}
