//! N-scaling of the cubic and quartic error norms.
//!
//! `cargo run --release --example error_sweep -- 0.2 1.0` sweeps
//! N ∈ {16, 32, 64, 128} at β = 0.2 up to T = 1.

use bosonpair::error_terms::{scaling_study, ScalingConfig};
use bosonpair::hartree::Profile;

fn main() -> bosonpair::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let beta = args.first().copied().unwrap_or(0.2);
    let t_end = args.get(1).copied().unwrap_or(1.0);
    let cfg = ScalingConfig {
        n: 32,
        box_length: 10.0,
        profile: Profile::Gaussian { width: 2.0, height: 1.0 },
        beta,
        n_list: vec![16.0, 32.0, 64.0, 128.0],
        t_end,
        dt: 0.01,
        packet_amplitude: 0.5,
        packet_center: 5.0,
        packet_width: 1.5,
        packet_momentum: 0.0,
    };
    let started = std::time::Instant::now();
    let r = scaling_study(&cfg)?;
    println!("{:>6} {:>14} {:>14} {:>14}", "N", "cubic", "quartic", "total");
    for p in &r.points {
        println!("{:>6} {:>14.6e} {:>14.6e} {:>14.6e}", p.n_particles, p.cubic_norm, p.quartic_norm, p.total);
    }
    println!(
        "cubic slope   {:+.4} in [{:+.4}, {:+.4}]  predicted {:+.2}",
        r.cubic_fit.slope, r.cubic_interval.0, r.cubic_interval.1, r.predicted_cubic
    );
    println!(
        "quartic slope {:+.4} in [{:+.4}, {:+.4}]  predicted {:+.2}",
        r.quartic_fit.slope, r.quartic_interval.0, r.quartic_interval.1, r.predicted_quartic
    );
    println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
