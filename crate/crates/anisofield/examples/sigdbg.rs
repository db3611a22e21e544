use anisofield::kernel::KernelContext;
use anisofield::limits::{family_second_moment, sigma_constant};
use anisofield::params::{FamilyLabel, ModelParams};
use anisofield::quad::conv2d;
use std::time::Instant;

fn main() {
    let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
    let ctx = KernelContext::new(&p).unwrap();
    let a = |u: [f64; 2]| ctx.a_inf_unchecked(u);
    for z in [[0.0, 0.5], [0.0, 1e-6], [0.0, 1e-12], [0.0, 2.7]] {
        let t0 = Instant::now();
        let v = conv2d(&a, &a, z, 1.2, 1.6, 2e-4);
        println!("conv2d({z:?}) = {v:?} [{:?}]", t0.elapsed());
    }
    let t0 = Instant::now();
    let s = sigma_constant(&ctx, FamilyLabel::Tilde22);
    println!("sigma2_22 = {s:?}  [{:?}]", t0.elapsed());
    let t0 = Instant::now();
    let v = family_second_moment(&ctx, FamilyLabel::Tilde22, [2.0, 3.0]);
    println!("second moment at (2,3) = {v:?}  [{:?}]", t0.elapsed());
}
