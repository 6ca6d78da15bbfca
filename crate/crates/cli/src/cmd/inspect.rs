//! Budget inspection: the per-component parameter/FLOP table, with the
//! efficiency-profile ceilings enforced.

use gtf_core::model::budget::{budget_table, TINY_FLOP_LIMIT, TINY_PARAM_LIMIT};
use gtf_core::model::Checkpoint;
use gtf_core::Result;

use crate::cfgstack;
use crate::InspectArgs;

pub fn run(args: InspectArgs) -> Result<u8> {
    let cfg = match &args.checkpoint {
        Some(path) => Checkpoint::<f32>::load(path)?.config,
        None => cfgstack::resolve(&args.preset, args.config.as_deref(), &args.sets)?.model,
    };
    let budget = budget_table(&cfg, args.height, args.width);
    print!("{}", budget.render());
    println!(
        "params {} ({:.3}M), flops at {}x{} {} ({:.2}G)",
        budget.params,
        budget.params as f64 / 1e6,
        args.height,
        args.width,
        budget.flops,
        budget.flops as f64 / 1e9
    );

    // The fidelity profile is exempt from the efficiency ceilings.
    if cfg.name == "gtf" {
        println!("profile gtf: efficiency ceilings not applied");
        return Ok(0);
    }
    let params_ok = budget.params < TINY_PARAM_LIMIT;
    let flops_ok = budget.flops < TINY_FLOP_LIMIT;
    println!(
        "param ceiling {}: {}",
        TINY_PARAM_LIMIT,
        if params_ok { "ok" } else { "EXCEEDED" }
    );
    println!(
        "flop ceiling {}: {}",
        TINY_FLOP_LIMIT,
        if flops_ok { "ok" } else { "EXCEEDED" }
    );
    if params_ok && flops_ok {
        Ok(0)
    } else {
        eprintln!("budget violated for profile '{}'", cfg.name);
        Ok(1)
    }
}
