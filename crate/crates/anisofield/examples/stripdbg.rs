use anisofield::kernel::KernelContext;
use anisofield::params::ModelParams;
use rayon::prelude::*;

fn exact_g(ctx: &KernelContext, n1: i64, n2: i64, s1: f64, s2: f64) -> f64 {
    let mut acc = 0.0;
    for t1 in 1..=n1 {
        let d1 = t1 as f64 - s1;
        for t2 in 1..=n2 {
            acc += ctx.a_inf_unchecked(ctx.apply_b([d1, t2 as f64 - s2]));
        }
    }
    acc
}

fn main() {
    let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
    let ctx = KernelContext::new(&p).unwrap();
    let (n1, n2) = (96i64, 280i64);
    let r = anisofield::moments::RectSpec { n1: 96, n2: 280 };
    let s1 = -1500.0f64;
    // pointwise check
    for s2 in [-3000.0f64, -500.0, 0.5, 140.0, 281.0, 800.0, 5000.0] {
        let ex = exact_g(&ctx, n1, n2, s1, s2);
        let ap = anisofield::moments::rect_sum_far(&ctx, &r, s1, s2);
        println!("s2={s2:8.1}: exact g = {ex:.8e}  approx = {ap:.8e}  rel = {:+.2e}", ap / ex - 1.0);
    }
    // exact E at unit resolution over a wide range
    let range: Vec<i64> = (-30000i64..=30280).collect();
    let e_exact: f64 = range
        .par_iter()
        .map(|&s2| {
            let g = exact_g(&ctx, n1, n2, s1, s2 as f64);
            g * g
        })
        .sum();
    println!("E exact (unit grid, |s2|<=30000) = {e_exact:.8e}");
}
