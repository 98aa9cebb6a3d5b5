use nlma::grid::{build_grid_function, BuilderSpec, Grid};
use nlma::la::Mat;
use nlma::operator::*;
use nlma::profile::*;

fn main() {
    let g = Grid::from_spacing(1, 20.0, 0.05).unwrap();
    let f = build_grid_function(&BuilderSpec::SmoothCone { a: 1.0, m: Mat::identity(1) }, g).unwrap();
    let idx = f.grid.nearest_node(&[0.0; 3]).unwrap();
    let prof = section_profile(&f, idx, &[0.0; 3], &ProfileConfig::default());
    let pieces = debug_v_pieces(&prof);
    // compare piece v against v_of_r at piece interiors; report worst
    let mut worst = (0.0f64, 0.0, 0.0, 0.0);
    for (lo, hi, vlo, vhi) in &pieces {
        if !hi.is_finite() { continue; }
        let rm = 0.5 * (lo + hi);
        let v_interp = 0.5 * (vlo + vhi);
        let v_true = prof.v_of_r(rm);
        let dev = (v_interp - v_true).abs();
        if dev > worst.0 { worst = (dev, rm, v_interp, v_true); }
    }
    println!("pieces: {}", pieces.len());
    println!("worst |piece - v_of_r| = {:.3e} at r={:.4}: piece={:.6} v={:.6}", worst.0, worst.1, worst.2, worst.3);
    // continuity across pieces
    let mut jumps = 0;
    for w in pieces.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.1.is_finite() && (a.3 - b.2).abs() > 1e-9 * (1.0 + a.3.abs()) {
            jumps += 1;
            if jumps < 6 { println!("jump at r={:.5}: {:.8} -> {:.8}", a.1, a.3, b.2); }
        }
    }
    println!("total jumps: {jumps}");
}
