//! Reference run of the synthetic ablation. Optional argument: JSON config.
use boundkit::ablation::{run_ablation, AblationConfig};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg: AblationConfig = match std::env::args().nth(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => AblationConfig::default(),
    };
    let t = Instant::now();
    let r = run_ablation(&cfg, |l| eprintln!("[{:7.1}s] {l}", t.elapsed().as_secs_f64()))?;
    println!("{}", boundkit::bench::ablation_report(&r.named())?);
    println!("gamma {} ; {:.1}s", r.gamma, t.elapsed().as_secs_f64());
    Ok(())
}
