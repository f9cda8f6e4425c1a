use graze_core::oracle::run_suite;
use std::time::Instant;

fn main() {
    let start = Instant::now();
    let cases = run_suite(40).unwrap();
    let mut sorted = cases.clone();
    sorted.sort_by(|a, b| b.max_rel_err.total_cmp(&a.max_rel_err));
    for c in sorted.iter().take(12) {
        println!("{:24} {:.3e}", c.name, c.max_rel_err);
    }
    println!("cases {} elapsed {:.1?}", cases.len(), start.elapsed());
}
