//! Weighted vs unweighted toy training across seeds.
//!
//! `cargo run --release --example iwl_trials -- [d] [train_steps] [reference_steps] [seeds]`

use densratio::toy::{iwl_demo, IwlConfig, MixtureWorld};

fn main() -> densratio::Result<()> {
    let arg = |i: usize, default: usize| {
        std::env::args().nth(i).map_or(default, |s| s.parse().expect("integer argument"))
    };
    let (d, steps, ref_steps, seeds) = (arg(1, 2), arg(2, 300), arg(3, 1000), arg(4, 10));
    let world = MixtureWorld::standard(8, d, 0)?;
    let mut wins = 0;
    for seed in 0..seeds as u64 {
        let mut cfg = IwlConfig::default();
        cfg.train.steps = steps;
        cfg.train.seed = seed;
        cfg.reference.steps = ref_steps;
        let r = iwl_demo(&world, &cfg)?;
        wins += r.weighted_wins() as usize;
        println!(
            "seed={seed} baseline={:.4} weighted={:.4} w_on={:.3e} w_off={:.3e}",
            r.baseline_test_loss, r.weighted_test_loss, r.mean_weight_on_prompt, r.mean_weight_off_prompt
        );
    }
    println!("weighted ≤ baseline in {wins}/{seeds}");
    Ok(())
}
