//! Finite-difference verification of every registered block family,
//! repeated across seeds.

use gtf_core::model::block_grad_suite;
use gtf_core::Result;

use crate::GradcheckArgs;

pub fn run(args: GradcheckArgs) -> Result<u8> {
    println!("block,seed,max_rel_err,probed,status");
    let mut failures = 0usize;
    let mut checks = 0usize;
    for seed in 0..args.seeds {
        for entry in block_grad_suite(seed, args.probes)? {
            let ok = entry.report.max_rel_err < args.tol;
            checks += 1;
            if !ok {
                failures += 1;
            }
            println!(
                "{},{},{:.3e},{},{}",
                entry.name,
                seed,
                entry.report.max_rel_err,
                entry.report.probed,
                if ok { "pass" } else { "FAIL" }
            );
        }
    }
    if failures == 0 {
        println!("gradcheck PASS ({checks} checks, tol {:.0e})", args.tol);
        Ok(0)
    } else {
        eprintln!("gradcheck FAIL ({failures}/{checks} checks over tolerance)");
        Ok(1)
    }
}
