use anisofield::kernel::KernelContext;
use anisofield::moments::{rect_second_moments, EngineMode, RectSpec};
use anisofield::params::ModelParams;

fn hhat(ctx: &KernelContext, gamma: f64, x2: f64, lambdas: &[f64]) -> f64 {
    let mut logs = Vec::new();
    for &lam in lambdas {
        let n1 = lam.floor() as usize;
        let n2 = (lam.powf(gamma) * x2).floor() as usize;
        if n2 < 1 { continue; }
        let pad1 = (2 * n1.max(n2)).clamp(1024, 24576);
        let pad2 = (2 * n2.max(n1 / 2)).clamp(1024, 49152);
        let mm = rect_second_moments(ctx, &[RectSpec { n1, n2 }], EngineMode::FullKernel { pad1, pad2 }).unwrap();
        logs.push((lam.ln(), mm.at(0, 0).ln()));
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    0.5 * (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn main() {
    let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
    let ctx = KernelContext::new(&p).unwrap();
    let h2t = 0.5666666666666667;
    let lams: Vec<f64> = vec![48.0, 68.0, 96.0, 136.0, 192.0];
    let lams_big: Vec<f64> = vec![96.0, 136.0, 192.0, 272.0, 384.0];
    for gamma in [0.4f64, 0.7, 1.3, 1.6] {
        let theory = if gamma <= 1.0 { gamma + h2t } else { 1.0 + gamma * h2t };
        for (tag, lset) in [("small", &lams), ("big", &lams_big)] {
            for x2 in [1.0f64, 4.0, 8.0] {
                let h = hhat(&ctx, gamma, x2, lset);
                println!("gamma={gamma} lam={tag} x2={x2}: H^ = {h:.4} vs {theory:.4}  err {:+.4}", h - theory);
            }
        }
    }
}
