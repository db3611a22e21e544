use anisofield::kernel::KernelContext;
use anisofield::moments::{rect_second_moments, EngineMode, RectSpec};
use anisofield::params::ModelParams;
use std::time::Instant;

fn main() {
    let p = ModelParams::new(1.2, 1.6, [[1.0, 0.5], [0.7, 1.0]]);
    let ctx = KernelContext::new(&p).unwrap();
    let rects = [RectSpec { n1: 96, n2: 280 }];
    for (p1, p2) in [(1024usize, 1024usize), (2048, 2048), (4096, 4096), (8192, 8192), (16384, 16384)] {
        let t0 = Instant::now();
        let mm = rect_second_moments(&ctx, &rects, EngineMode::FullKernel { pad1: p1, pad2: p2 }).unwrap();
        println!("pads ({p1},{p2}): var = {:.6e}  tail = {:.2e}  [{:?}]", mm.at(0,0), mm.tail, t0.elapsed());
    }
}
