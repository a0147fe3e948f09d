//! Trains a dialer policy from 10 oracle dialogs, then improves it with
//! REINFORCE against the default simulator and prints the success curve.
//!
//! ```text
//! cargo run --release -p hcn --example dialer_rl -- [rl_dialogs] [seed] [scratch] [nomask]
//! ```

use std::sync::Arc;

use hcn::dialer::{generate_directory, sl_dialogs, DialerDomain, SimulatorConfig, UserSimulator};
use hcn::features::Featurizer;
use hcn::metrics::NullSink;
use hcn::neural::init_parameters;
use hcn::training::{run_rl, train_supervised, RlConfig, SlConfig, GAMMA};

fn main() -> hcn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dialogs: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let scratch = args.iter().any(|a| a == "scratch");
    let use_mask = !args.iter().any(|a| a == "nomask");

    let directory = Arc::new(generate_directory(seed, 50)?);
    let domain = DialerDomain::new(directory.clone()).with_mask(use_mask);
    let featurizer = Featurizer::none();
    let sl = sl_dialogs(&domain, seed)?;
    let config = SlConfig {
        seed,
        ..SlConfig::dialer()
    };
    let params = if scratch {
        init_parameters(17, 14, config.hidden, seed)?
    } else {
        train_supervised(&sl[..10], &domain, &featurizer, &config, &mut NullSink)?
    };
    let rl = RlConfig {
        gamma: GAMMA,
        baseline_window: 100,
        dialogs,
        eval_points: RlConfig::default_eval_points(dialogs),
        eval_episodes: 500,
        consistency_check: false,
        consistency_epoch_cap: 100,
        seed,
    };
    let make_sim = |s: u64| {
        UserSimulator::new(
            directory.clone(),
            SimulatorConfig {
                seed: s,
                ..SimulatorConfig::default()
            },
        )
    };
    let run = run_rl(&rl, make_sim, &domain, &featurizer, params, &[], None, &mut NullSink)?;
    for (d, rate) in run.curve {
        println!("{d}\t{rate:.3}");
    }
    Ok(())
}
