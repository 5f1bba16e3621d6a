//! Dev utility: scan seeds for the built-in scenario and report which keep
//! every trajectory inside the cost domains under all three schemes.

use oocsim::control::Scheme;
use oocsim::scenario;
use oocsim::sim;

fn main() {
    let schemes = [Scheme::Continuous, Scheme::Periodic, Scheme::EventTriggered];
    for seed in 0..40u64 {
        let mut line = format!("seed {seed:3}:");
        let mut ok = true;
        for scheme in schemes {
            let mut file = scenario::example1(scheme);
            file.sim.seed = seed;
            let s = file.build().unwrap();
            match sim::run(&s) {
                Ok(tr) => {
                    line += &format!(
                        "  {scheme}: min {:.2e}@{:.1} final {:.2e} ev {}",
                        tr.min_error,
                        tr.min_error_time,
                        tr.final_error(),
                        tr.total_events()
                    );
                }
                Err(e) => {
                    line += &format!("  {scheme}: ERR {e}");
                    ok = false;
                }
            }
        }
        println!("{line}{}", if ok { "  <== OK" } else { "" });
    }
}
