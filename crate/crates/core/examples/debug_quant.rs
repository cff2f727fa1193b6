// scratch debug
use cloudradar::cf_opt::*;
use cloudradar::metrics::*;
use cloudradar::model::*;
use cloudradar::trace::OptOptions;
use cloudradar::convex::{solve_quant_subproblem};

fn main() {
    let s = paper_scenario(ScenarioName::CfFig234).with_backhaul_bits(5.0);
    let mut opts = OptOptions::default();
    opts.outer_max_iters = 6;
    opts.inner_max_iters = 20;
    let (x0, q0) = cf_baselines(&s, CfBaseline::NoOpt, &opts).unwrap();
    println!("no-opt ok, B = {}", cf_bhattacharyya(&s, &x0, &q0).unwrap().total_nats);
    let mut q = q0;
    for iter in 0..120 {
        let blocks = build_quant_bound_cf(&s, &x0, &q).unwrap();
        let mut covs = Vec::new();
        for (n, b) in blocks.iter().enumerate() {
            match solve_quant_subproblem(&b.subproblem, opts.solver_tol) {
                Ok(rep) => {
                    let min_eig = rep.solution.min_eigenvalue();
                    let tr = rep.solution.trace();
                    if iter % 10 == 0 { println!("iter {iter} sensor {n}: min_eig {min_eig:.3e} trace {tr:.3e}"); }
                    covs.push(rep.solution);
                }
                Err(e) => { println!("iter {iter} sensor {n}: solver err {e}"); return; }
            }
        }
        let qc = QuantCovSet { covs };
        match cf_bhattacharyya(&s, &x0, &qc) {
            Ok(b) => { if iter % 10 == 0 { println!("iter {iter}: B = {}", b.total_nats); } },
            Err(e) => { println!("iter {iter}: metric err {e}"); return; }
        }
        for n in 0..3 {
            match cf_backhaul_rate_bits(&s, &x0, &qc.covs[n], n) {
                Ok(r) => { if iter % 10 == 0 { println!("   sensor {n} rate {r:.6}"); } },
                Err(e) => { println!("   sensor {n} rate err {e}"); return; }
            }
        }
        q = qc;
    }
}
