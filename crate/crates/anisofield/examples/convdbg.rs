use anisofield::quad::conv2d;
use std::time::Instant;

fn main() {
    let (q1, q2) = (1.2f64, 1.6f64);
    let q = 1.0 / q1 + 1.0 / q2;
    let (qt1, qt2) = (q1 * (2.0 - q), q2 * (2.0 - q));
    let a = move |u: [f64; 2]| 1.0 / (u[0].abs().powf(q1) + u[1].abs().powf(q2));
    for tol in [1e-3, 1e-4, 1e-5] {
        let t0 = Instant::now();
        let v = conv2d(&a, &a, [1.0, 1.0], q1, q2, tol);
        println!("tol={tol}: conv(1,1) = {v:?}  [{:?}]", t0.elapsed());
    }
    for lam in [2.0f64, 10.0, 100.0] {
        let z = [lam.powf(1.0 / qt1), lam.powf(1.0 / qt2)];
        let t0 = Instant::now();
        let v = conv2d(&a, &a, z, q1, q2, 1e-4);
        println!("lam={lam}: z=({:.3},{:.3}) lam*conv = {:?}  [{:?}]", z[0], z[1], v.map(|x| lam * x), t0.elapsed());
    }
}
