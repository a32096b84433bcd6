//! Train on the default toy worlds and print recovery metrics.
//!
//! `cargo run --release --example toy_recovery -- [flavor] [steps] [d...]`

use std::time::Instant;

use densratio::toy::{evaluate, train, MixtureWorld, TrainConfig};

fn main() -> densratio::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flavor = args.first().map_or(Ok(densratio::Flavor::SoftmaxContrastive), |s| s.parse())?;
    let mut cfg = TrainConfig { flavor, ..Default::default() };
    if let Some(steps) = args.get(1) {
        cfg.steps = steps.parse().expect("steps");
    }
    let dims: Vec<usize> = if args.len() > 2 {
        args[2..].iter().map(|s| s.parse().expect("d")).collect()
    } else {
        vec![2, 8, 64]
    };
    for d in dims {
        let world = MixtureWorld::standard(8, d, 0)?;
        let t = Instant::now();
        let out = train(&world, &cfg, None)?;
        let r = evaluate(&out.model, &world, 2000, 99)?;
        println!(
            "d={d:3} r2={:.4} mse={:.4} pearson={:.4} a={:.2} b={:.2} final_loss={:.4} secs={:.1}",
            r.r2,
            r.mse,
            r.pearson.unwrap_or(f64::NAN),
            r.logit_scale,
            r.bias,
            out.losses.last().unwrap(),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
